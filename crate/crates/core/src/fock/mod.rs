//! Truncated number-basis density matrices for one or two modes.
//!
//! Two-mode operators are stored in sectors of fixed photon-number
//! difference `Δ = n0 - n1`. Element `|n0, n1><m0, m1|` lives in block
//! `(n0 - n1, m0 - m1)` at position `(min(n0, n1), min(m0, m1))`. Every
//! operation used here (two-mode squeezing, phase-covariant loss) maps
//! blocks to blocks, so states produced by the measurement pipeline only
//! ever populate the diagonal blocks `(Δ, Δ)`. Single-mode states use one
//! dense block keyed `(0, 0)`.

mod loss;
mod squeeze;

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{check_non_negative, invalid, Error, Result};
use crate::gaussian::SqueezeParams;
use crate::outcome::OutcomeDistribution;

pub use squeeze::clear_squeezer_cache;

pub const DEFAULT_TAIL_TOLERANCE: f64 = 1e-10;
pub const DEFAULT_CUTOFF: usize = 40;
pub const DEFAULT_BUFFER: usize = 12;
/// Eigenvalues above `-PSD_CLAMP` are treated as zero before square roots.
pub const PSD_CLAMP: f64 = 1e-9;

type Block = DMatrix<Complex64>;
type Key = (i32, i32);

#[derive(Clone, Debug, PartialEq)]
pub struct FockDensityMatrix {
    cutoffs: Vec<usize>,
    blocks: BTreeMap<Key, Block>,
    tail_bound: f64,
    tolerance: f64,
}

/// Number of basis states with difference `delta` under `cutoffs`.
fn sector_len(cutoffs: &[usize], delta: i32) -> usize {
    match *cutoffs {
        [d] => {
            if delta == 0 {
                d
            } else {
                0
            }
        }
        [d0, d1] => {
            let p = delta.max(0) as usize;
            let q = (-delta).max(0) as usize;
            if p >= d0 || q >= d1 {
                0
            } else {
                (d0 - p).min(d1 - q)
            }
        }
        _ => 0,
    }
}

fn locate(two_mode: bool, occ: [usize; 2]) -> (i32, usize) {
    if two_mode {
        (occ[0] as i32 - occ[1] as i32, occ[0].min(occ[1]))
    } else {
        (0, occ[0])
    }
}

/// Inverse of `locate`; for single-mode states only `occ[0]` is meaningful.
fn occupation(delta: i32, j: usize) -> [usize; 2] {
    [j + delta.max(0) as usize, j + (-delta).max(0) as usize]
}

fn zero_block(cutoffs: &[usize], key: Key) -> Block {
    Block::zeros(sector_len(cutoffs, key.0), sector_len(cutoffs, key.1))
}

/// Smallest `D` with `ratio^D <= tol`, i.e. the cutoff for a geometric tail.
pub(crate) fn geometric_cutoff(ratio: f64, tol: f64) -> usize {
    if ratio <= 0.0 {
        return 1;
    }
    if ratio >= 1.0 {
        return usize::MAX;
    }
    ((tol.ln() / ratio.ln()).ceil().max(1.0)) as usize
}

fn ln_factorial(n: usize) -> f64 {
    statrs::function::factorial::ln_factorial(n as u64)
}

impl FockDensityMatrix {
    fn empty(cutoffs: Vec<usize>, tail_bound: f64, tolerance: f64) -> Result<Self> {
        if cutoffs.is_empty() || cutoffs.len() > 2 || cutoffs.contains(&0) {
            return Err(invalid(format!(
                "cutoffs {cutoffs:?} must list one or two positive dimensions"
            )));
        }
        check_non_negative("tolerance", tolerance)?;
        Ok(Self {
            cutoffs,
            blocks: BTreeMap::new(),
            tail_bound,
            tolerance,
        })
    }

    /// `|ψ><ψ|` from a list of `(occupation, amplitude)` pairs.
    fn from_pure(
        cutoffs: Vec<usize>,
        amps: &[([usize; 2], Complex64)],
        tail_bound: f64,
        tolerance: f64,
    ) -> Result<Self> {
        let mut state = Self::empty(cutoffs, tail_bound, tolerance)?;
        for &(row, a) in amps {
            for &(col, b) in amps {
                state.add(row, col, a * b.conj());
            }
        }
        Ok(state)
    }

    fn add(&mut self, row: [usize; 2], col: [usize; 2], value: Complex64) {
        let two = self.n_modes() == 2;
        let (dr, jr) = locate(two, row);
        let (dc, jc) = locate(two, col);
        let cutoffs = &self.cutoffs;
        let block = self
            .blocks
            .entry((dr, dc))
            .or_insert_with(|| zero_block(cutoffs, (dr, dc)));
        block[(jr, jc)] += value;
    }

    fn truncation_check(tail: f64, tol: f64, required: usize) -> Result<()> {
        if tail > tol {
            return Err(Error::Truncation {
                tail,
                tolerance: tol,
                required_cutoff: required,
            });
        }
        Ok(())
    }

    pub fn vacuum(cutoffs: &[usize]) -> Result<Self> {
        Self::from_pure(
            cutoffs.to_vec(),
            &[([0, 0], Complex64::new(1.0, 0.0))],
            0.0,
            DEFAULT_TAIL_TOLERANCE,
        )
    }

    /// Two-mode squeezed vacuum with `n_a` mean photons per mode and zero phase.
    pub fn tmsv(n_a: f64, cutoff: usize) -> Result<Self> {
        Self::tmsv_with(
            SqueezeParams::from_mean_photons(n_a, 0.0)?,
            cutoff,
            DEFAULT_TAIL_TOLERANCE,
        )
    }

    /// `S(ξ)|0,0> = Σ_n (-e^{iθ} tanh r)^n / cosh r |n, n>`.
    pub fn tmsv_with(params: SqueezeParams, cutoff: usize, tolerance: f64) -> Result<Self> {
        let t = params.r().tanh();
        let tail = t.powi(2 * cutoff as i32);
        Self::truncation_check(tail, tolerance, geometric_cutoff(t * t, tolerance))?;
        let ratio = -Complex64::from_polar(t, params.phase());
        let mut amp = Complex64::new(1.0 / params.r().cosh(), 0.0);
        let mut amps = Vec::with_capacity(cutoff);
        for n in 0..cutoff {
            amps.push(([n, n], amp));
            amp *= ratio;
        }
        Self::from_pure(vec![cutoff, cutoff], &amps, tail, tolerance)
    }

    /// Coherent state with real amplitude `√n_a`.
    pub fn coherent(n_a: f64, cutoff: usize) -> Result<Self> {
        Self::coherent_with(n_a, 0.0, cutoff, DEFAULT_TAIL_TOLERANCE)
    }

    pub fn coherent_with(n_a: f64, phase: f64, cutoff: usize, tolerance: f64) -> Result<Self> {
        check_non_negative("n_a", n_a)?;
        let ln_p = |n: usize| {
            if n_a == 0.0 {
                if n == 0 {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            } else {
                -n_a + n as f64 * n_a.ln() - ln_factorial(n)
            }
        };
        let kept: f64 = (0..cutoff).map(|n| ln_p(n).exp()).sum();
        let tail = (1.0 - kept).max(0.0);
        if tail > tolerance {
            let mut required = cutoff;
            let mut acc = kept;
            while 1.0 - acc > tolerance && required < 1 << 20 {
                acc += ln_p(required).exp();
                required += 1;
            }
            Self::truncation_check(tail, tolerance, required)?;
        }
        let amps: Vec<_> = (0..cutoff)
            .map(|n| ([n, 0], Complex64::from_polar((0.5 * ln_p(n)).exp(), phase * n as f64)))
            .collect();
        Self::from_pure(vec![cutoff], &amps, tail, tolerance)
    }

    /// Thermal state `P(n) = n_th^n / (n_th + 1)^{n+1}`.
    pub fn thermal(n_th: f64, cutoff: usize) -> Result<Self> {
        Self::thermal_with(n_th, cutoff, DEFAULT_TAIL_TOLERANCE)
    }

    pub fn thermal_with(n_th: f64, cutoff: usize, tolerance: f64) -> Result<Self> {
        check_non_negative("n_th", n_th)?;
        let q = n_th / (n_th + 1.0);
        let tail = q.powi(cutoff as i32);
        Self::truncation_check(tail, tolerance, geometric_cutoff(q, tolerance))?;
        let probs: Vec<f64> = (0..cutoff).map(|n| q.powi(n as i32) / (n_th + 1.0)).collect();
        Self::from_populations(&[cutoff], &probs, tail, tolerance)
    }

    /// Diagonal state with the given row-major populations.
    pub fn from_populations(cutoffs: &[usize], probs: &[f64], tail_bound: f64, tolerance: f64) -> Result<Self> {
        let mut state = Self::empty(cutoffs.to_vec(), tail_bound, tolerance)?;
        let len: usize = cutoffs.iter().product();
        if probs.len() != len {
            return Err(invalid("population vector does not match the cutoffs"));
        }
        for (i, &p) in probs.iter().enumerate() {
            if p != 0.0 {
                let occ = state.flat_to_occ(i);
                state.add(occ, occ, Complex64::new(p, 0.0));
            }
        }
        Ok(state)
    }

    /// Tensor product of two single-mode states.
    pub fn product(&self, other: &Self) -> Result<Self> {
        if self.n_modes() != 1 || other.n_modes() != 1 {
            return Err(invalid("product expects two single-mode states"));
        }
        let mut out = Self::empty(
            vec![self.cutoffs[0], other.cutoffs[0]],
            self.tail_bound + other.tail_bound,
            self.tolerance.max(other.tolerance),
        )?;
        let a = &self.blocks[&(0, 0)];
        let b = &other.blocks[&(0, 0)];
        for n0 in 0..a.nrows() {
            for m0 in 0..a.ncols() {
                let x = a[(n0, m0)];
                if x == Complex64::default() {
                    continue;
                }
                for n1 in 0..b.nrows() {
                    for m1 in 0..b.ncols() {
                        let y = b[(n1, m1)];
                        if y != Complex64::default() {
                            out.add([n0, n1], [m0, m1], x * y);
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn n_modes(&self) -> usize {
        self.cutoffs.len()
    }

    pub fn cutoffs(&self) -> &[usize] {
        &self.cutoffs
    }

    pub fn tail_bound(&self) -> f64 {
        self.tail_bound
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }

    /// True when only the diagonal `(Δ, Δ)` sectors are populated.
    pub fn is_sector_diagonal(&self) -> bool {
        self.blocks.keys().all(|(a, b)| a == b)
    }

    fn flat_to_occ(&self, flat: usize) -> [usize; 2] {
        match *self.cutoffs {
            [_] => [flat, 0],
            [_, d1] => [flat / d1, flat % d1],
            _ => unreachable!(),
        }
    }

    fn occ_to_flat(&self, occ: [usize; 2]) -> usize {
        match *self.cutoffs {
            [_] => occ[0],
            [_, d1] => occ[0] * d1 + occ[1],
            _ => unreachable!(),
        }
    }

    fn in_range(&self, occ: [usize; 2]) -> bool {
        occ[0] < self.cutoffs[0] && (self.n_modes() == 1 || occ[1] < self.cutoffs[1])
    }

    /// Matrix element `<row| ρ |col>`; occupations beyond the cutoffs read as zero.
    pub fn element(&self, row: &[usize], col: &[usize]) -> Complex64 {
        let to_occ = |v: &[usize]| -> Option<[usize; 2]> {
            match (v.len(), self.n_modes()) {
                (1, 1) => Some([v[0], 0]),
                (2, 2) => Some([v[0], v[1]]),
                _ => None,
            }
        };
        let (Some(r), Some(c)) = (to_occ(row), to_occ(col)) else {
            return Complex64::default();
        };
        if !self.in_range(r) || !self.in_range(c) {
            return Complex64::default();
        }
        let two = self.n_modes() == 2;
        let (dr, jr) = locate(two, r);
        let (dc, jc) = locate(two, c);
        self.blocks.get(&(dr, dc)).map_or(Complex64::default(), |b| b[(jr, jc)])
    }

    /// Iterates over `(occupation, population)` for every stored diagonal element.
    fn populations(&self) -> impl Iterator<Item = ([usize; 2], f64)> + '_ {
        self.blocks
            .iter()
            .filter(|((a, b), _)| a == b)
            .flat_map(|(&(delta, _), block)| (0..block.nrows()).map(move |j| (occupation(delta, j), block[(j, j)].re)))
    }

    pub fn trace(&self) -> f64 {
        self.populations().map(|(_, p)| p).sum()
    }

    /// Row-major photon-number populations.
    pub fn number_distribution(&self) -> Result<OutcomeDistribution> {
        let mut probs = vec![0.0; self.cutoffs.iter().product()];
        for (occ, p) in self.populations() {
            probs[self.occ_to_flat(occ)] = p.max(0.0);
        }
        OutcomeDistribution::new(self.cutoffs.clone(), probs, self.tail_bound)
    }

    fn number_moment(&self, mode: usize, power: i32) -> Result<f64> {
        if mode >= self.n_modes() {
            return Err(invalid(format!("mode {mode} out of range")));
        }
        Ok(self
            .populations()
            .map(|(occ, p)| p * (occ[mode] as f64).powi(power))
            .sum())
    }

    pub fn mean_photon(&self, mode: usize) -> Result<f64> {
        self.number_moment(mode, 1)
    }

    pub fn photon_number_variance(&self, mode: usize) -> Result<f64> {
        let m = self.number_moment(mode, 1)?;
        Ok(self.number_moment(mode, 2)? - m * m)
    }

    /// `<a b>` for two-mode states; used for the size of squeezed outputs.
    pub fn pair_coherence(&self) -> Result<Complex64> {
        if self.n_modes() != 2 {
            return Err(invalid("pair coherence needs a two-mode state"));
        }
        // <ab> = Σ sqrt((n0+1)(n1+1)) ρ[(n0,n1),(n0+1,n1+1)]
        let mut acc = Complex64::default();
        for (&(dr, dc), block) in &self.blocks {
            if dr != dc {
                continue;
            }
            for j in 0..block.nrows().saturating_sub(1) {
                let occ = occupation(dr, j);
                acc += block[(j, j + 1)] * (((occ[0] + 1) * (occ[1] + 1)) as f64).sqrt();
            }
        }
        Ok(acc)
    }

    pub fn vacuum_probability(&self) -> f64 {
        self.element(&vec![0; self.n_modes()], &vec![0; self.n_modes()]).re
    }

    /// Copies the state into larger cutoffs, filling new entries with zeros.
    pub fn pad(&self, cutoffs: &[usize]) -> Result<Self> {
        if cutoffs.len() != self.n_modes() || cutoffs.iter().zip(&self.cutoffs).any(|(n, o)| n < o) {
            return Err(invalid(format!("cannot pad cutoffs {:?} to {cutoffs:?}", self.cutoffs)));
        }
        let mut out = Self::empty(cutoffs.to_vec(), self.tail_bound, self.tolerance)?;
        for (&key, block) in &self.blocks {
            let mut grown = zero_block(cutoffs, key);
            grown.view_mut((0, 0), (block.nrows(), block.ncols())).copy_from(block);
            out.blocks.insert(key, grown);
        }
        Ok(out)
    }

    /// Drops every coherence between different photon-number states.
    pub fn dephase(&self) -> Self {
        let mut out = Self {
            cutoffs: self.cutoffs.clone(),
            blocks: BTreeMap::new(),
            tail_bound: self.tail_bound,
            tolerance: self.tolerance,
        };
        for (occ, p) in self.populations().collect::<Vec<_>>() {
            if p != 0.0 {
                out.add(occ, occ, Complex64::new(p, 0.0));
            }
        }
        out
    }

    /// Largest absolute entry difference, treating missing blocks as zero.
    pub fn distance(&self, other: &Self) -> Result<f64> {
        if self.cutoffs != other.cutoffs {
            return Err(invalid("distance needs equal cutoffs"));
        }
        let mut worst: f64 = 0.0;
        for (key, a) in &self.blocks {
            worst = match other.blocks.get(key) {
                Some(b) => worst.max((a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)),
                None => worst.max(a.iter().map(|z| z.norm()).fold(0.0, f64::max)),
            };
        }
        for (key, b) in &other.blocks {
            if !self.blocks.contains_key(key) {
                worst = worst.max(b.iter().map(|z| z.norm()).fold(0.0, f64::max));
            }
        }
        Ok(worst)
    }

    /// Largest entry of `ρ - ρ†`.
    pub fn hermiticity_error(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (&(dr, dc), block) in &self.blocks {
            let mirror = self.blocks.get(&(dc, dr));
            for r in 0..block.nrows() {
                for c in 0..block.ncols() {
                    let m = mirror.map_or(Complex64::default(), |b| b[(c, r)].conj());
                    worst = worst.max((block[(r, c)] - m).norm());
                }
            }
        }
        worst
    }

    /// Dense matrix in the tensor-product basis, index `n0 * D1 + n1`.
    pub fn to_dense(&self) -> Block {
        let dim: usize = self.cutoffs.iter().product();
        let mut out = Block::zeros(dim, dim);
        for (&(dr, dc), block) in &self.blocks {
            for r in 0..block.nrows() {
                let ro = self.occ_to_flat(occupation(dr, r));
                for c in 0..block.ncols() {
                    out[(ro, self.occ_to_flat(occupation(dc, c)))] = block[(r, c)];
                }
            }
        }
        out
    }

    /// Hermitian matrices whose spectra make up the spectrum of the state.
    fn spectral_blocks(&self) -> Vec<(Key, Block)> {
        if self.is_sector_diagonal() {
            self.blocks.iter().map(|(k, b)| (*k, b.clone())).collect()
        } else {
            vec![((0, 0), self.to_dense())]
        }
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.spectral_blocks()
            .into_iter()
            .map(|(_, b)| b.symmetric_eigenvalues().min())
            .fold(f64::INFINITY, f64::min)
    }

    pub fn apply_loss(&self, mode: usize, alpha: f64, n_th: f64, env_cutoff: usize) -> Result<Self> {
        loss::apply(self, mode, alpha, n_th, env_cutoff)
    }

    /// Two-mode squeezer `S(ξ)` on modes 0 and 1; cutoffs are unchanged.
    ///
    /// Columns of the block unitaries are evaluated `buffer` (or more) rows
    /// past the cutoff so the kept rows carry no truncation artifact.
    pub fn apply_two_mode_squeeze(
        &self,
        mode_i: usize,
        mode_j: usize,
        params: SqueezeParams,
        buffer: usize,
    ) -> Result<Self> {
        squeeze::check_modes(self, mode_i, mode_j)?;
        squeeze::apply(self, params, buffer)
    }

    /// Photon-number distribution of `S(ξ) ρ S(ξ)†` without forming the full output state.
    pub fn squeezed_number_distribution(&self, params: SqueezeParams, buffer: usize) -> Result<OutcomeDistribution> {
        squeeze::number_distribution(self, params, buffer, &self.cutoffs)
    }

    /// As [`Self::squeezed_number_distribution`], on larger output cutoffs
    /// than the input occupies (the input is implicitly zero-padded).
    pub fn squeezed_number_distribution_on(
        &self,
        params: SqueezeParams,
        buffer: usize,
        out: &[usize],
    ) -> Result<OutcomeDistribution> {
        squeeze::number_distribution(self, params, buffer, out)
    }
}

/// Populations `P(n1, n2)` of a two-mode state (or `P(n)` for one mode).
pub fn joint_number_distribution(state: &FockDensityMatrix) -> Result<OutcomeDistribution> {
    state.number_distribution()
}

fn psd_sqrt(block: &Block) -> Result<Block> {
    let eig = block.clone().symmetric_eigen();
    if let Some(bad) = eig.eigenvalues.iter().find(|&&v| v < -PSD_CLAMP) {
        return Err(invalid(format!(
            "density matrix has eigenvalue {bad:.3e} below -{PSD_CLAMP:e}"
        )));
    }
    let roots = eig.eigenvalues.map(|v| Complex64::new(v.max(0.0).sqrt(), 0.0));
    let q = &eig.eigenvectors;
    Ok(q * Block::from_diagonal(&roots) * q.adjoint())
}

/// Uhlmann fidelity `(tr |√ρ √σ|)²`.
pub fn fidelity(rho: &FockDensityMatrix, sigma: &FockDensityMatrix) -> Result<f64> {
    if rho.cutoffs != sigma.cutoffs {
        return Err(invalid("fidelity needs states with equal cutoffs"));
    }
    let pairs: Vec<(Block, Block)> = if rho.is_sector_diagonal() && sigma.is_sector_diagonal() {
        rho.blocks
            .iter()
            .filter_map(|(k, a)| sigma.blocks.get(k).map(|b| (a.clone(), b.clone())))
            .collect()
    } else {
        vec![(rho.to_dense(), sigma.to_dense())]
    };
    let mut root_f = 0.0;
    for (a, b) in pairs {
        let prod = psd_sqrt(&a)? * psd_sqrt(&b)?;
        root_f += prod.singular_values().sum();
    }
    Ok((root_f * root_f).clamp(0.0, 1.0))
}
