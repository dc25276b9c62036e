//! Heat-bath chains built directly from the Gibbs weights with dense
//! matrices, sharing nothing with the library beyond the parameter values.

use std::collections::HashMap;

use nalgebra::{DMatrix, SymmetricEigen};

pub struct Brute {
    pub l: usize,
    pub m: usize,
    pub states: Vec<Vec<i32>>,
    pub index: HashMap<Vec<i32>, usize>,
    pub log_w: Vec<f64>,
    pub pi: Vec<f64>,
    pub p: DMatrix<f64>,
}

pub struct Field {
    pub prefactor_l: usize,
    pub n_plus: i32,
}

fn all_states(n: usize, lo: i32, hi: i32) -> Vec<Vec<i32>> {
    let mut out = vec![Vec::new()];
    for _ in 0..n {
        out = out.into_iter().flat_map(|s| (lo..=hi).map(move |k| [s.clone(), vec![k]].concat())).collect();
    }
    out
}

/// Bonds counted once inside, boundary bonds to the ring once each.
pub fn energy(l: usize, m: usize, h: &[i32], ring: &dyn Fn(i64, i64) -> i32) -> f64 {
    let at = |x: i64, y: i64| -> Option<i32> {
        (x >= 0 && y >= 0 && (x as usize) < l && (y as usize) < m).then(|| h[y as usize * l + x as usize])
    };
    let mut e = 0.0;
    for y in 0..m as i64 {
        for x in 0..l as i64 {
            let v = at(x, y).unwrap();
            for (dx, dy) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
                let (u, w) = (x + dx, y + dy);
                e += match at(u, w) {
                    Some(n) => 0.5 * (v - n).abs() as f64,
                    None => (v - ring(u, w)).abs() as f64,
                };
            }
        }
    }
    e
}

fn field_value(k: i32, beta: f64, f: &Field) -> f64 {
    let h = ((f.prefactor_l as f64).ln() / (4.0 * beta)).floor() as i32;
    (1..=f.n_plus - h).filter(|&j| k <= h + j).map(|j| (-beta * j as f64).exp()).sum()
}

impl Brute {
    pub fn new(
        l: usize,
        m: usize,
        beta: f64,
        (lo, hi): (i32, i32),
        ring: &dyn Fn(i64, i64) -> i32,
        field: Option<Field>,
    ) -> Self {
        let n = l * m;
        let states = all_states(n, lo, hi);
        let index: HashMap<Vec<i32>, usize> = states.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        let log_w: Vec<f64> = states
            .iter()
            .map(|s| {
                let f = field.as_ref().map_or(0.0, |f| {
                    s.iter().map(|&k| field_value(k, beta, f)).sum::<f64>() / f.prefactor_l as f64
                });
                -beta * energy(l, m, s, ring) + f
            })
            .collect();
        let top = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = log_w.iter().map(|w| (w - top).exp()).sum();
        let pi: Vec<f64> = log_w.iter().map(|w| (w - top).exp() / z).collect();
        let mut p = DMatrix::zeros(states.len(), states.len());
        for (i, s) in states.iter().enumerate() {
            for x in 0..n {
                let targets: Vec<usize> = (lo..=hi)
                    .map(|k| {
                        let mut t = s.clone();
                        t[x] = k;
                        index[&t]
                    })
                    .collect();
                let z: f64 = targets.iter().map(|&j| pi[j]).sum();
                for &j in &targets {
                    p[(i, j)] += pi[j] / z / n as f64;
                }
            }
        }
        Brute { l, m, states, index, log_w, pi, p }
    }

    pub fn floored(l: usize, m: usize, beta: f64, n_plus: i32) -> Self {
        Brute::new(l, m, beta, (0, n_plus), &|_, _| 0, None)
    }

    /// Eigenvalues of the kernel, descending.
    pub fn spectrum(&self) -> Vec<f64> {
        let n = self.states.len();
        let s = DMatrix::from_fn(n, n, |i, j| self.p[(i, j)] * (self.pi[i] / self.pi[j]).sqrt());
        let sym = (&s + s.transpose()) * 0.5;
        let mut ev: Vec<f64> = SymmetricEigen::new(sym).eigenvalues.iter().cloned().collect();
        ev.sort_by(|a, b| b.total_cmp(a));
        ev
    }

    pub fn t_rel(&self) -> f64 {
        1.0 / (1.0 - self.spectrum()[1])
    }

    /// Worst-start total variation distance `d(t)` for `t = 0..=horizon`.
    pub fn worst_tv(&self, horizon: u64) -> Vec<f64> {
        let n = self.states.len();
        let mut pt = DMatrix::<f64>::identity(n, n);
        let mut out = Vec::new();
        for t in 0..=horizon {
            if t > 0 {
                pt = &pt * &self.p;
            }
            let d = (0..n)
                .map(|i| 0.5 * (0..n).map(|j| (pt[(i, j)] - self.pi[j]).abs()).sum::<f64>())
                .fold(0.0, f64::max);
            out.push(d);
        }
        out
    }

    pub fn pi_min(&self) -> f64 {
        self.pi.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

pub fn tv(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}
