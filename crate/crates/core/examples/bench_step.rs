use sos_core::dynamics::heatbath_step;
use sos_core::rng::{EventStream, ROLE_UPDATES};
use sos_core::{BoundaryCondition, HeightField, ModelParams, SosSystem};
use std::time::Instant;

fn main() {
    let sys = SosSystem::new(ModelParams::new(64, 0.9, 10), BoundaryCondition::constant(0)).unwrap();
    let mut eta = HeightField::constant(64, 64, 10);
    let mut s = EventStream::new(1, ROLE_UPDATES, 4096);
    let n = 4096 * 2000;
    let t = Instant::now();
    for _ in 0..n {
        heatbath_step(&sys, &mut eta, s.next_event());
    }
    let dt = t.elapsed().as_secs_f64();
    println!("{:.1} ns/step mean {}", dt * 1e9 / n as f64, eta.mean());
}
