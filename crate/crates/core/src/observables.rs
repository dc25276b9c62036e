//! Scalar statistics of height fields: level occupancies, the `Ω_a` event,
//! diagonal-line deviation sets and fluctuation counts.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SosError};
use crate::model::{equilibrium_height, HeightField, ModelParams};

/// Occupation statistics relative to the equilibrium height `H`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelStats {
    pub h: i32,
    /// `down[k] = #{v : [H - η_v]^+ = k}`.
    pub down: Vec<usize>,
    /// `up[k] = #{v : [η_v - H]^+ = k}`.
    pub up: Vec<usize>,
    pub mean_height: f64,
    pub n_sites: usize,
}

impl LevelStats {
    /// `#{v : η_v <= H - k}`.
    pub fn below(&self, k: usize) -> usize {
        self.down.iter().skip(k).sum()
    }

    /// `#{v : η_v >= H + k}`.
    pub fn above(&self, k: usize) -> usize {
        self.up.iter().skip(k).sum()
    }

    /// `sum_{k>0} k N_k` for the downward split.
    pub fn down_moment(&self) -> usize {
        self.down.iter().enumerate().map(|(k, n)| k * n).sum()
    }
}

pub fn fluctuation_counts(eta: &HeightField, params: &ModelParams) -> LevelStats {
    let h = equilibrium_height(params).0;
    let (lo, hi) = params.height_range();
    let mut down = vec![0usize; ((h - lo).max(0) + 1) as usize];
    let mut up = vec![0usize; ((hi - h).max(0) + 1) as usize];
    let grow = |v: &mut Vec<usize>, k: usize| {
        if v.len() <= k {
            v.resize(k + 1, 0);
        }
        v[k] += 1;
    };
    for &x in &eta.heights {
        grow(&mut down, (h - x).max(0) as usize);
        grow(&mut up, (x - h).max(0) as usize);
    }
    LevelStats { h, down, up, mean_height: eta.mean(), n_sites: eta.len() }
}

/// Fraction of sites with `η_v >= level`.
pub fn fraction_at_or_above(eta: &HeightField, level: i32) -> f64 {
    eta.heights.iter().filter(|&&x| x >= level).count() as f64 / eta.len() as f64
}

/// `#{x : η_x >= ceil(a H)} > fraction |Λ|`.
pub fn omega_a_member(eta: &HeightField, a: f64, fraction: f64, params: &ModelParams) -> Result<bool> {
    if !(a > 0.0 && a < 1.0) {
        return Err(SosError::InvalidParams(format!("a = {a} must lie in (0, 1)")));
    }
    let threshold = (a * equilibrium_height(params).0 as f64).ceil() as i32;
    Ok(level_occupied(eta, threshold, fraction))
}

/// `#{x : η_x >= level} > fraction |Λ|` (strict).
pub fn level_occupied(eta: &HeightField, level: i32, fraction: f64) -> bool {
    let count = eta.heights.iter().filter(|&&x| x >= level).count();
    count as f64 > fraction * eta.len() as f64
}

/// Diagonal lines `R_i = {x : x_2 = x_1 + L - i}`, `i = 1..2L-1`, of a
/// square box; each line lists site indices from south-west to north-east.
pub fn diagonal_lines(l: usize, m: usize) -> Result<Vec<Vec<usize>>> {
    if l != m {
        return Err(SosError::NotSquare(l, m));
    }
    Ok(diagonal_lines_rect(l, m))
}

/// Diagonals `x_2 - x_1 = c` of an `L x m` box, starting at the north-west
/// corner (`c = m - 1`) and ending at the south-east one.
pub fn diagonal_lines_rect(l: usize, m: usize) -> Vec<Vec<usize>> {
    let (l, m) = (l as i64, m as i64);
    ((-(l - 1))..=(m - 1))
        .rev()
        .map(|c| {
            (0..l)
                .filter_map(|x| {
                    let y = x + c;
                    (0..m).contains(&y).then_some((y * l + x) as usize)
                })
                .collect()
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Deviation {
    /// `sum_R [η - H]^+ <= L ℓ`.
    Plus,
    /// `sum_R [H - η]^+ <= L ℓ`.
    Minus,
    /// `sum_R |H - η| <= L ℓ`.
    Abs,
}

/// Membership in `G^+_ℓ`, `G^-_ℓ` or `G_ℓ`.
pub fn g_membership(eta: &HeightField, ell: f64, variant: Deviation, params: &ModelParams) -> Result<bool> {
    let lines = diagonal_lines(eta.l, eta.m)?;
    let h = equilibrium_height(params).0;
    let bound = eta.l as f64 * ell;
    Ok(lines.iter().all(|r| {
        let s: i64 = r
            .iter()
            .map(|&x| {
                let d = (eta.heights[x] - h) as i64;
                match variant {
                    Deviation::Plus => d.max(0),
                    Deviation::Minus => (-d).max(0),
                    Deviation::Abs => d.abs(),
                }
            })
            .sum();
        s as f64 <= bound
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn omega_a_cases() {
        let p = ModelParams::new(64, 0.4, 8); // H = 2
        let h = equilibrium_height(&p).0;
        assert_eq!(h, 2);
        let flat = HeightField::constant(64, 64, h);
        assert!(omega_a_member(&flat, 0.5, 0.9, &p).unwrap());
        assert!(!omega_a_member(&HeightField::constant(64, 64, 0), 0.5, 0.9, &p).unwrap());
        assert!(omega_a_member(&flat, 1.0, 0.9, &p).is_err());

        // exactly 90 of 100 sites at the level: strict inequality fails
        let mut eta = HeightField::constant(10, 10, 0);
        for i in 0..90 {
            eta.heights[i] = 1;
        }
        assert!(!level_occupied(&eta, 1, 0.9));
        eta.heights[90] = 1;
        assert!(level_occupied(&eta, 1, 0.9));
    }

    #[test]
    fn diagonal_line_structure() {
        let d = diagonal_lines(2, 2).unwrap();
        assert_eq!(d.iter().map(Vec::len).collect::<Vec<_>>(), vec![1, 2, 1]);
        // R_1 is the north-west corner (x=0, y=1)
        assert_eq!(d[0], vec![2]);
        assert_eq!(d[1], vec![0, 3]);
        for l in 1..8 {
            let d = diagonal_lines(l, l).unwrap();
            assert_eq!(d.len(), 2 * l - 1);
            for i in 1..=l {
                assert_eq!(d[i - 1].len(), i);
            }
            let mut all: Vec<usize> = d.concat();
            all.sort();
            assert_eq!(all, (0..l * l).collect::<Vec<_>>());
        }
        assert!(matches!(diagonal_lines(3, 2), Err(SosError::NotSquare(3, 2))));
        assert_eq!(diagonal_lines_rect(3, 2).concat().len(), 6);
    }

    #[test]
    fn g_sets_on_flat_fields() {
        let p = ModelParams::new(6, 0.4, 5);
        let h = equilibrium_height(&p).0;
        assert_eq!(h, 1);
        let flat = HeightField::constant(6, 6, h);
        for v in [Deviation::Plus, Deviation::Minus, Deviation::Abs] {
            assert!(g_membership(&flat, 0.0, v, &p).unwrap());
        }
        let mut bumped = flat.clone();
        bumped.heights[7] += 1;
        assert!(!g_membership(&bumped, 0.0, Deviation::Abs, &p).unwrap());
        assert!(g_membership(&bumped, 0.0, Deviation::Minus, &p).unwrap());
        assert!(g_membership(&bumped, 1.0 / 6.0, Deviation::Abs, &p).unwrap());
    }

    #[test]
    fn fluctuation_counts_flat_and_monotone() {
        let p = ModelParams::new(8, 0.3, 6); // H = floor(ln 8 / 1.2) = 1
        let s = fluctuation_counts(&HeightField::constant(8, 8, 1), &p);
        assert_eq!(s.h, 1);
        assert!((1..5).all(|k| s.below(k) == 0 && s.above(k) == 0));
        let mut eta = HeightField::constant(8, 8, 1);
        eta.heights[0] = 0;
        eta.heights[1] = 6;
        eta.heights[2] = 3;
        let s = fluctuation_counts(&eta, &p);
        assert_eq!(s.down.iter().sum::<usize>(), 64);
        assert_eq!(s.up.iter().sum::<usize>(), 64);
        assert_eq!(s.below(1), 1);
        assert_eq!(s.above(2), 2);
        assert_eq!(s.above(5), 1);
        for k in 0..7 {
            assert!(s.above(k) >= s.above(k + 1));
            assert!(s.below(k) >= s.below(k + 1));
        }
    }

    fn field_strategy(l: usize) -> impl Strategy<Value = (Vec<i32>, Vec<i32>)> {
        (proptest::collection::vec(0i32..5, l * l), proptest::collection::vec(0i32..3, l * l))
    }

    proptest! {
        #[test]
        fn events_are_monotone((base, bump) in field_strategy(5), ell in 0.0f64..2.0, a in 0.05f64..0.95) {
            let p = ModelParams::new(5, 0.2, 8); // H = 2
            let lo = HeightField::from_vec(5, 5, base.clone()).unwrap();
            let hi = HeightField::from_vec(5, 5, base.iter().zip(&bump).map(|(b, d)| b + d).collect()).unwrap();
            // Ω_a and G^- increase, G^+ decreases
            prop_assert!(!omega_a_member(&lo, a, 0.5, &p).unwrap() || omega_a_member(&hi, a, 0.5, &p).unwrap());
            prop_assert!(!g_membership(&lo, ell, Deviation::Minus, &p).unwrap() || g_membership(&hi, ell, Deviation::Minus, &p).unwrap());
            prop_assert!(!g_membership(&hi, ell, Deviation::Plus, &p).unwrap() || g_membership(&lo, ell, Deviation::Plus, &p).unwrap());
        }

        #[test]
        fn sandwich_lies_in_sum_set((base, bump) in field_strategy(5), bump2 in proptest::collection::vec(0i32..3, 25),
                                   l1 in 0.0f64..1.5, l2 in 0.0f64..1.5) {
            let p = ModelParams::new(5, 0.2, 8);
            let e1 = HeightField::from_vec(5, 5, base.clone()).unwrap();
            let mid: Vec<i32> = base.iter().zip(&bump).map(|(b, d)| b + d).collect();
            let e2 = HeightField::from_vec(5, 5, mid.iter().zip(&bump2).map(|(b, d)| b + d).collect()).unwrap();
            let eta = HeightField::from_vec(5, 5, mid).unwrap();
            if g_membership(&e1, l1, Deviation::Minus, &p).unwrap() && g_membership(&e2, l2, Deviation::Plus, &p).unwrap() {
                prop_assert!(g_membership(&eta, l1 + l2, Deviation::Abs, &p).unwrap());
            }
        }
    }
}
