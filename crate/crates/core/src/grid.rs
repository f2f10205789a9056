//! Uniform θ-grids on `[0, π]` and functions sampled on them.

use std::f64::consts::PI;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

/// Values on the nodes `θ_j = jπ/n`, `j = 0..=n`, poles included.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    pub values: Vec<f64>,
}

/// Control-volume weights of the sinθ measure: `W_j = ∫ sinθ dθ` over the
/// cell `[θ_j − h/2, θ_j + h/2] ∩ [0, π]`. They sum to 2.
pub fn weights(n: usize) -> Vec<f64> {
    let h = PI / n as f64;
    let pole = 1.0 - (h / 2.0).cos();
    let mut w: Vec<f64> = (0..=n)
        .map(|j| {
            if j == 0 || j == n {
                pole
            } else {
                2.0 * (j as f64 * h).sin() * (h / 2.0).sin()
            }
        })
        .collect();
    mirror(&mut w, 1.0);
    w
}

/// Overwrites the upper half with `sign ·` the reflected lower half, so that
/// tables are exactly symmetric under `θ ↦ π − θ`.
pub fn mirror(v: &mut [f64], sign: f64) {
    let last = v.len() - 1;
    for j in 0..v.len() / 2 {
        v[last - j] = sign * v[j];
    }
}

/// `sinθ_j` and `cosθ_j` on the nodes, exactly (anti)symmetric about π/2.
pub fn trig_tables(n: usize) -> (Vec<f64>, Vec<f64>) {
    let h = PI / n as f64;
    let mut s: Vec<f64> = (0..=n).map(|j| (j as f64 * h).sin()).collect();
    let mut c: Vec<f64> = (0..=n).map(|j| (j as f64 * h).cos()).collect();
    s[0] = 0.0;
    mirror(&mut s, 1.0);
    mirror(&mut c, -1.0);
    if n % 2 == 0 {
        c[n / 2] = 0.0;
    }
    (s, c)
}

pub fn nodes(n: usize) -> Vec<f64> {
    (0..=n).map(|j| node(n, j)).collect()
}

pub fn node(n: usize, j: usize) -> f64 {
    if j == n {
        PI
    } else {
        j as f64 * PI / n as f64
    }
}

impl GridFunction {
    pub fn new(values: Vec<f64>) -> Self {
        assert!(values.len() >= 2, "a grid needs at least two nodes");
        Self { values }
    }

    pub fn from_fn(n: usize, f: impl Fn(f64) -> f64) -> Self {
        Self::new(nodes(n).into_iter().map(f).collect())
    }

    pub fn constant(n: usize, c: f64) -> Self {
        Self::new(vec![c; n + 1])
    }

    /// Number of cells.
    pub fn n(&self) -> usize {
        self.values.len() - 1
    }

    pub fn h(&self) -> f64 {
        PI / self.n() as f64
    }

    pub fn theta(&self, j: usize) -> f64 {
        node(self.n(), j)
    }

    pub fn thetas(&self) -> Vec<f64> {
        nodes(self.n())
    }

    pub fn dot_w(&self, other: &GridFunction) -> f64 {
        debug_assert_eq!(self.values.len(), other.values.len());
        weights(self.n())
            .iter()
            .zip(self.values.iter().zip(&other.values))
            .map(|(w, (a, b))| w * a * b)
            .sum()
    }

    /// Norm in the sinθ-weighted L².
    pub fn norm_w(&self) -> f64 {
        self.dot_w(self).sqrt()
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn sub(&self, other: &GridFunction) -> GridFunction {
        GridFunction::new(self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect())
    }

    /// `self + c·other`
    pub fn axpy(&self, c: f64, other: &GridFunction) -> GridFunction {
        GridFunction::new(
            self.values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + c * b)
                .collect(),
        )
    }

    pub fn scale(&self, c: f64) -> GridFunction {
        GridFunction::new(self.values.iter().map(|v| c * v).collect())
    }

    pub fn distance_w(&self, other: &GridFunction) -> f64 {
        self.sub(other).norm_w()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("theta,u\n");
        for (j, v) in self.values.iter().enumerate() {
            let _ = writeln!(out, "{:.17e},{:.17e}", self.theta(j), v);
        }
        out
    }
}

/// Legendre polynomial `P_k(x)` by the three-term recurrence.
pub fn legendre(k: usize, x: f64) -> f64 {
    let (mut p0, mut p1) = (1.0, x);
    if k == 0 {
        return p0;
    }
    for m in 1..k {
        let m = m as f64;
        let p2 = ((2.0 * m + 1.0) * x * p1 - m * p0) / (m + 1.0);
        p0 = p1;
        p1 = p2;
    }
    p1
}

/// `P_k(cosθ)` on the grid.
pub fn legendre_mode(n: usize, k: usize) -> GridFunction {
    let (_, c) = trig_tables(n);
    GridFunction::new(c.into_iter().map(|x| legendre(k, x)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn weights_sum_to_sphere_measure() {
        for n in [16, 64, 513] {
            assert_abs_diff_eq!(weights(n).iter().sum::<f64>(), 2.0, epsilon = 1e-13);
        }
    }

    #[test]
    fn legendre_modes_have_exact_parity() {
        for n in [64, 65] {
            for k in 0..5 {
                let g = legendre_mode(n, k);
                for j in 0..=n {
                    let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                    assert_eq!(g.values[n - j], sign * g.values[j]);
                }
            }
        }
    }

    #[test]
    fn endpoints_exact() {
        let g = GridFunction::constant(7, 0.0);
        assert_eq!(g.theta(0), 0.0);
        assert_eq!(g.theta(7), PI);
    }

    #[test]
    fn legendre_values() {
        assert_eq!(legendre(0, 0.3), 1.0);
        assert_eq!(legendre(1, 0.3), 0.3);
        assert_abs_diff_eq!(legendre(2, 0.3), 0.5 * (3.0 * 0.09 - 1.0), epsilon = 1e-15);
        assert_abs_diff_eq!(legendre(3, 0.3), 0.5 * (5.0 * 0.027 - 3.0 * 0.3), epsilon = 1e-15);
        for k in 0..8 {
            assert_abs_diff_eq!(legendre(k, 1.0), 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn legendre_orthogonality_in_weighted_norm() {
        let n = 512;
        let p1 = legendre_mode(n, 1);
        let p2 = legendre_mode(n, 2);
        assert!(p1.dot_w(&p2).abs() < 1e-4);
        // ∫ P_1² sinθ dθ = 2/3
        assert_abs_diff_eq!(p1.dot_w(&p1), 2.0 / 3.0, epsilon = 1e-4);
    }
}
