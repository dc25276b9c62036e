//! Test-only package. The acceptance suite and the brute-force oracles live
//! under `tests/`; this package sorts after the library so that a failing
//! acceptance criterion does not stop the other test binaries.
