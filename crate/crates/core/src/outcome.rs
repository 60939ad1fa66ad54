//! Probability tables over photon-count outcomes.

use std::fmt::Write as _;

use crate::error::{invalid, Result};

/// Dense table of `P(n_1, ..., n_k)` over a rectangular support `0..shape[i]`.
///
/// Mass that fell outside the support during truncation is reported in
/// `tail_bound` rather than redistributed.
#[derive(Clone, Debug, PartialEq)]
pub struct OutcomeDistribution {
    shape: Vec<usize>,
    probs: Vec<f64>,
    tail_bound: f64,
}

impl OutcomeDistribution {
    pub fn new(shape: Vec<usize>, probs: Vec<f64>, tail_bound: f64) -> Result<Self> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(invalid(format!("invalid distribution shape {shape:?}")));
        }
        let len: usize = shape.iter().product();
        if len != probs.len() {
            return Err(invalid(format!(
                "shape {shape:?} needs {len} probabilities, got {}",
                probs.len()
            )));
        }
        if let Some(p) = probs.iter().find(|p| !p.is_finite() || **p < -1e-12) {
            return Err(invalid(format!("negative or non-finite probability {p}")));
        }
        let probs = probs.into_iter().map(|p| p.max(0.0)).collect();
        Ok(Self {
            shape,
            probs,
            tail_bound: tail_bound.max(0.0),
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn n_modes(&self) -> usize {
        self.shape.len()
    }

    /// Row-major probabilities (last index fastest).
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn tail_bound(&self) -> f64 {
        self.tail_bound
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    fn flat_index(&self, counts: &[usize]) -> Option<usize> {
        if counts.len() != self.shape.len() {
            return None;
        }
        let mut idx = 0;
        for (&n, &d) in counts.iter().zip(&self.shape) {
            if n >= d {
                return None;
            }
            idx = idx * d + n;
        }
        Some(idx)
    }

    /// Probability of an outcome; zero outside the stored support.
    pub fn get(&self, counts: &[usize]) -> f64 {
        self.flat_index(counts).map_or(0.0, |i| self.probs[i])
    }

    fn counts_of(&self, mut flat: usize) -> Vec<usize> {
        let mut counts = vec![0; self.shape.len()];
        for (slot, &d) in counts.iter_mut().zip(&self.shape).rev() {
            *slot = flat % d;
            flat /= d;
        }
        counts
    }

    pub fn iter(&self) -> impl Iterator<Item = (Vec<usize>, f64)> + '_ {
        self.probs.iter().enumerate().map(|(i, &p)| (self.counts_of(i), p))
    }

    pub fn marginal(&self, mode: usize) -> Result<Vec<f64>> {
        if mode >= self.shape.len() {
            return Err(invalid(format!("mode {mode} out of range")));
        }
        let dim = self.shape[mode];
        let stride: usize = self.shape[mode + 1..].iter().product();
        let mut out = vec![0.0; dim];
        for (i, &p) in self.probs.iter().enumerate() {
            out[(i / stride) % dim] += p;
        }
        Ok(out)
    }

    pub fn mean(&self, mode: usize) -> Result<f64> {
        Ok(self.marginal(mode)?.iter().enumerate().map(|(n, p)| n as f64 * p).sum())
    }

    pub fn variance(&self, mode: usize) -> Result<f64> {
        let m = self.marginal(mode)?;
        let mean: f64 = m.iter().enumerate().map(|(n, p)| n as f64 * p).sum();
        let second: f64 = m.iter().enumerate().map(|(n, p)| (n * n) as f64 * p).sum();
        Ok(second - mean * mean)
    }

    /// CSV with a header row; two-mode tables use columns `n1,n2,prob`.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let header: Vec<String> = (1..=self.shape.len()).map(|i| format!("n{i}")).collect();
        let _ = writeln!(out, "{},prob", header.join(","));
        for (counts, p) in self.iter() {
            let cols: Vec<String> = counts.iter().map(|c| c.to_string()).collect();
            let _ = writeln!(out, "{},{}", cols.join(","), p);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indexing_and_marginals() {
        let d = OutcomeDistribution::new(vec![2, 3], vec![0.1, 0.2, 0.0, 0.3, 0.1, 0.3], 0.0).unwrap();
        assert_eq!(d.get(&[1, 0]), 0.3);
        assert_eq!(d.get(&[0, 1]), 0.2);
        assert_eq!(d.get(&[5, 0]), 0.0);
        let m0 = d.marginal(0).unwrap();
        assert!((m0[0] - 0.3).abs() < 1e-15 && (m0[1] - 0.7).abs() < 1e-15);
        let m1 = d.marginal(1).unwrap();
        assert!((m1[2] - 0.3).abs() < 1e-15);
        assert!((d.total() - 1.0).abs() < 1e-15);
        assert!(d.to_csv().starts_with("n1,n2,prob\n0,0,0.1\n"));
    }

    #[test]
    fn rejects_bad_tables() {
        assert!(OutcomeDistribution::new(vec![2], vec![0.5], 0.0).is_err());
        assert!(OutcomeDistribution::new(vec![1], vec![-0.5], 0.0).is_err());
        assert!(OutcomeDistribution::new(vec![], vec![], 0.0).is_err());
        // tiny negative rounding noise is clamped
        let d = OutcomeDistribution::new(vec![2], vec![1.0, -1e-14], 0.0).unwrap();
        assert_eq!(d.get(&[1]), 0.0);
    }
}
