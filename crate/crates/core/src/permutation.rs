//! Sturm permutation, zero numbers, and Morse indices from the permutation.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::equilibria::{reconstruct_profile, EquilibriumError, EquilibriumRecord};
use crate::grid::GridFunction;
use crate::model::{CoefficientField, Numerics};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PermutationError {
    #[error("not a permutation of 1..{n}: {sigma:?}")]
    NotBijection { n: usize, sigma: Vec<usize> },
    #[error("shooting parameters too close to order equilibria: {offenders:?}")]
    Ambiguous { offenders: Vec<(f64, f64)> },
    #[error("permutation {0} yields a negative Morse index")]
    NotSturm(String),
    #[error(transparent)]
    Equilibrium(#[from] EquilibriumError),
}

/// `sigma[k-1] = σ(k)`, images 1-based.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SturmPermutation {
    sigma: Vec<usize>,
}

impl SturmPermutation {
    pub fn new(sigma: Vec<usize>) -> Result<Self, PermutationError> {
        let n = sigma.len();
        let mut seen = vec![false; n + 1];
        for &s in &sigma {
            if s == 0 || s > n || seen[s] {
                return Err(PermutationError::NotBijection { n, sigma });
            }
            seen[s] = true;
        }
        Ok(Self { sigma })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            sigma: (1..=n).collect(),
        }
    }

    /// Product of disjoint cycles on `1..=n`.
    pub fn from_cycles(n: usize, cycles: &[&[usize]]) -> Result<Self, PermutationError> {
        let mut sigma: Vec<usize> = (1..=n).collect();
        for c in cycles {
            for (k, &a) in c.iter().enumerate() {
                let b = c[(k + 1) % c.len()];
                if a == 0 || a > n {
                    return Err(PermutationError::NotBijection { n, sigma });
                }
                sigma[a - 1] = b;
            }
        }
        Self::new(sigma)
    }

    pub fn n(&self) -> usize {
        self.sigma.len()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.sigma
    }

    /// `σ(k)`, 1-based.
    pub fn apply(&self, k: usize) -> usize {
        self.sigma[k - 1]
    }

    pub fn inverse(&self) -> SturmPermutation {
        let mut inv = vec![0; self.n()];
        for (k, &s) in self.sigma.iter().enumerate() {
            inv[s - 1] = k + 1;
        }
        SturmPermutation { sigma: inv }
    }

    /// `σ(1) = 1` and `σ(N) = N`.
    pub fn is_dissipative(&self) -> bool {
        let n = self.n();
        n == 0 || (self.sigma[0] == 1 && self.sigma[n - 1] == n)
    }

    /// Nontrivial cycles, each starting at its smallest element.
    pub fn cycles(&self) -> Vec<Vec<usize>> {
        let n = self.n();
        let mut seen = vec![false; n + 1];
        let mut out = Vec::new();
        for start in 1..=n {
            if seen[start] {
                continue;
            }
            let mut c = vec![start];
            seen[start] = true;
            let mut k = self.apply(start);
            while k != start {
                seen[k] = true;
                c.push(k);
                k = self.apply(k);
            }
            if c.len() > 1 {
                out.push(c);
            }
        }
        out
    }

    pub fn cycle_notation(&self) -> String {
        let cycles = self.cycles();
        if cycles.is_empty() {
            return "id".to_string();
        }
        cycles
            .iter()
            .map(|c| {
                let inner: Vec<String> = c.iter().map(|k| k.to_string()).collect();
                format!("({})", inner.join(","))
            })
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.sigma).expect("integers serialize")
    }
}

impl fmt::Display for SturmPermutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.cycle_notation())
    }
}

/// Orders records by `d` (labels) and reads the labels in `e` order.
pub fn build_permutation(
    records: &[EquilibriumRecord],
    merge_tol: f64,
) -> Result<SturmPermutation, PermutationError> {
    let pairs: Vec<(f64, f64)> = records.iter().map(|r| (r.d, r.e)).collect();
    permutation_from_pairs(&pairs, merge_tol)
}

/// As [`build_permutation`], from bare `(d, e)` intersection coordinates.
pub fn permutation_from_pairs(pairs: &[(f64, f64)], merge_tol: f64) -> Result<SturmPermutation, PermutationError> {
    let mut by_d: Vec<usize> = (0..pairs.len()).collect();
    by_d.sort_by(|&a, &b| pairs[a].0.total_cmp(&pairs[b].0));
    let mut by_e = by_d.clone();
    by_e.sort_by(|&a, &b| pairs[a].1.total_cmp(&pairs[b].1));
    let mut offenders = Vec::new();
    for w in by_d.windows(2) {
        if pairs[w[1]].0 - pairs[w[0]].0 <= merge_tol {
            offenders.push((pairs[w[0]].0, pairs[w[1]].0));
        }
    }
    for w in by_e.windows(2) {
        if pairs[w[1]].1 - pairs[w[0]].1 <= merge_tol {
            offenders.push((pairs[w[0]].1, pairs[w[1]].1));
        }
    }
    if !offenders.is_empty() {
        return Err(PermutationError::Ambiguous { offenders });
    }
    let mut label = vec![0; pairs.len()];
    for (rank, &i) in by_d.iter().enumerate() {
        label[i] = rank + 1;
    }
    SturmPermutation::new(by_e.iter().map(|&i| label[i]).collect())
}

/// `i_1 = 0`, `i_{m+1} = i_m + (−1)^{m+1} sign(σ⁻¹(m+1) − σ⁻¹(m))`.
pub fn morse_from_permutation(sigma: &SturmPermutation) -> Result<Vec<usize>, PermutationError> {
    let inv = sigma.inverse();
    let n = sigma.n();
    let mut out = Vec::with_capacity(n);
    if n == 0 {
        return Ok(out);
    }
    let mut i: i64 = 0;
    out.push(0);
    for m in 1..n {
        let parity = if m % 2 == 1 { 1 } else { -1 };
        let step = (inv.apply(m + 1) as i64 - inv.apply(m) as i64).signum();
        i += parity * step;
        if i < 0 {
            return Err(PermutationError::NotSturm(sigma.cycle_notation()));
        }
        out.push(i as usize);
    }
    Ok(out)
}

/// Strict sign changes of `g`, treating `|g| ≤ eps` as zero and collapsing
/// runs of zeros; `−1` when every value is zero.
pub fn zero_number_eps(g: &GridFunction, eps: f64) -> i64 {
    let mut last = 0.0f64;
    let mut count = 0;
    let mut any = false;
    for &v in &g.values {
        if v.abs() <= eps {
            continue;
        }
        if any && v.signum() != last {
            count += 1;
        }
        last = v.signum();
        any = true;
    }
    if any {
        count
    } else {
        -1
    }
}

pub fn zero_number(g: &GridFunction) -> i64 {
    zero_number_eps(g, 0.0)
}

/// Interior nodes where both `g` and its centred difference quotient are below `eps`.
pub fn near_tangencies(g: &GridFunction, eps: f64) -> Vec<usize> {
    let n = g.n();
    let h = g.h();
    let v = &g.values;
    (1..n)
        .filter(|&j| v[j].abs() < eps && ((v[j + 1] - v[j - 1]) / (2.0 * h)).abs() < eps)
        .collect()
}

/// `z[i][j] = z(u_i − u_j)`, rows and columns in record order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ZeroNumberTable {
    pub z: Vec<Vec<i64>>,
    /// Entries whose near-tangency survived refinement.
    pub flagged: Vec<(usize, usize)>,
}

impl ZeroNumberTable {
    pub fn n(&self) -> usize {
        self.z.len()
    }

    pub fn get(&self, i: usize, j: usize) -> i64 {
        self.z[i][j]
    }

    pub fn is_flagged(&self, i: usize, j: usize) -> bool {
        self.flagged.contains(&(i.min(j), i.max(j)))
    }

    pub fn is_symmetric(&self) -> bool {
        let n = self.n();
        (0..n).all(|i| (0..n).all(|j| self.z[i][j] == self.z[j][i]))
    }
}

pub const ZERO_EPS_REL: f64 = 1e-9;

pub fn zero_number_table(
    field: &CoefficientField,
    records: &[EquilibriumRecord],
    numerics: &Numerics,
) -> Result<ZeroNumberTable, PermutationError> {
    let n = records.len();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let entries: Vec<Result<(i64, bool), PermutationError>> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let (a, b) = (&records[i], &records[j]);
            let eps = ZERO_EPS_REL * a.profile.sup_norm().max(b.profile.sup_norm());
            let g = a.profile.sub(&b.profile);
            if near_tangencies(&g, eps).is_empty() {
                return Ok((zero_number_eps(&g, eps), false));
            }
            let fine = 4 * a.profile.n();
            let pa = reconstruct_profile(field, a.d, a.e, fine, numerics)?;
            let pb = reconstruct_profile(field, b.d, b.e, fine, numerics)?;
            let g = pa.sub(&pb);
            Ok((zero_number_eps(&g, eps), !near_tangencies(&g, eps).is_empty()))
        })
        .collect();
    let mut z = vec![vec![-1; n]; n];
    let mut flagged = Vec::new();
    for (&(i, j), e) in pairs.iter().zip(entries) {
        let (v, flag) = e?;
        z[i][j] = v;
        z[j][i] = v;
        if flag {
            flagged.push((i, j));
        }
    }
    Ok(ZeroNumberTable { z, flagged })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibria::{find_equilibria, EquilibriumOptions};
    use crate::model::ProblemSpec;
    use proptest::prelude::*;

    #[test]
    fn cycles_and_notation() {
        let s = SturmPermutation::new(vec![1, 4, 3, 2, 5]).unwrap();
        assert_eq!(s.cycle_notation(), "(2,4)");
        assert_eq!(s.to_json(), "[1,4,3,2,5]");
        assert_eq!(SturmPermutation::identity(3).cycle_notation(), "id");
        let t = SturmPermutation::from_cycles(9, &[&[2, 8], &[4, 6]]).unwrap();
        assert_eq!(t.as_slice(), &[1, 8, 3, 6, 5, 4, 7, 2, 9]);
        assert_eq!(t.to_string(), "(2,8)(4,6)");
        assert!(t.is_dissipative());
        assert!(SturmPermutation::new(vec![1, 1, 3]).is_err());
        assert!(SturmPermutation::new(vec![0, 1]).is_err());
    }

    #[test]
    fn recursion_examples() {
        let id = SturmPermutation::identity(3);
        assert_eq!(morse_from_permutation(&id).unwrap(), vec![0, 1, 0]);
        let t = SturmPermutation::from_cycles(5, &[&[2, 4]]).unwrap();
        assert_eq!(morse_from_permutation(&t).unwrap(), vec![0, 1, 2, 1, 0]);
        let t = SturmPermutation::from_cycles(7, &[&[2, 6]]).unwrap();
        assert_eq!(morse_from_permutation(&t).unwrap(), vec![0, 1, 2, 3, 2, 1, 0]);
        let t = SturmPermutation::from_cycles(9, &[&[2, 8], &[4, 6]]).unwrap();
        assert_eq!(morse_from_permutation(&t).unwrap(), vec![0, 1, 2, 3, 4, 3, 2, 1, 0]);
        // σ = (1,2) sends i_2 to −1
        let bad = SturmPermutation::new(vec![2, 1, 3]).unwrap();
        assert!(matches!(morse_from_permutation(&bad), Err(PermutationError::NotSturm(_))));
    }

    #[test]
    fn zero_number_examples() {
        assert_eq!(zero_number(&GridFunction::constant(64, 1.0)), 0);
        assert_eq!(zero_number(&GridFunction::from_fn(64, f64::cos)), 1);
        assert_eq!(zero_number(&GridFunction::constant(64, 0.0)), -1);
        // exact zeros collapse: + 0 0 + is no change, + 0 − is one
        assert_eq!(zero_number(&GridFunction::new(vec![1.0, 0.0, 0.0, 2.0])), 0);
        assert_eq!(zero_number(&GridFunction::new(vec![1.0, 0.0, 0.0, -2.0])), 1);
        assert_eq!(zero_number_eps(&GridFunction::new(vec![1.0, -1e-12, 2.0]), 1e-9), 0);
    }

    #[test]
    fn tangency_detection() {
        let g = GridFunction::from_fn(64, |t| (t - std::f64::consts::FRAC_PI_2).powi(2) * 1e-12);
        assert!(!near_tangencies(&g, 1e-9).is_empty());
        assert!(near_tangencies(&GridFunction::from_fn(64, f64::cos), 1e-9).is_empty());
    }

    #[test]
    fn ci_permutations_and_zero_numbers() {
        let opts = EquilibriumOptions {
            spectrum: None,
            ..EquilibriumOptions::default()
        };
        let cases: [(f64, &[&[usize]], usize); 3] = [(1.0, &[], 3), (3.0, &[&[2, 4]], 5), (7.0, &[&[2, 6]], 7)];
        for (lambda, cycles, n) in cases {
            let spec = ProblemSpec::chafee_infante(lambda);
            let set = find_equilibria(&spec, &opts).unwrap();
            let sigma = build_permutation(&set.records, spec.numerics.merge_tol).unwrap();
            assert_eq!(sigma, SturmPermutation::from_cycles(n, cycles).unwrap(), "lambda = {lambda}");
            let table = zero_number_table(spec.field(), &set.records, &spec.numerics).unwrap();
            assert!(table.is_symmetric());
            assert!(table.flagged.is_empty());
            for i in 0..n {
                assert_eq!(table.get(i, i), -1);
            }
            let mid = n / 2;
            assert_eq!(table.get(0, n - 1), 0);
            assert_eq!(sigma.apply(1), 1);
            if lambda == 3.0 {
                assert_eq!(table.get(1, 3), 1);
            }
            if lambda == 7.0 {
                assert_eq!(table.get(2, 4), 2);
            }
            // z(u_j − 0) is the bifurcation mode of u_j; constants have none
            for j in 0..n {
                let want = if j == mid {
                    -1
                } else if j == 0 || j == n - 1 {
                    0
                } else {
                    (mid - mid.abs_diff(j)) as i64
                };
                assert_eq!(table.get(j, mid), want, "lambda = {lambda}, j = {j}");
            }
        }
    }

    proptest! {
        #[test]
        fn inverse_is_inverse(perm in Just((1..=8usize).collect::<Vec<_>>()).prop_shuffle()) {
            let s = SturmPermutation::new(perm).unwrap();
            let inv = s.inverse();
            for k in 1..=s.n() {
                prop_assert_eq!(inv.apply(s.apply(k)), k);
            }
        }

        #[test]
        fn cycles_round_trip(perm in Just((1..=9usize).collect::<Vec<_>>()).prop_shuffle()) {
            let s = SturmPermutation::new(perm).unwrap();
            let cycles = s.cycles();
            let refs: Vec<&[usize]> = cycles.iter().map(|c| c.as_slice()).collect();
            prop_assert_eq!(SturmPermutation::from_cycles(s.n(), &refs).unwrap(), s);
        }

        #[test]
        fn zero_number_invariant_under_positive_scaling(
            vals in proptest::collection::vec(-5.0f64..5.0, 3..60),
            c in 0.1f64..10.0,
        ) {
            let g = GridFunction::new(vals);
            prop_assert_eq!(zero_number(&g), zero_number(&g.scale(c)));
            prop_assert_eq!(zero_number(&g), zero_number(&g.scale(-c)));
        }
    }
}
