//! Gaussian (covariance-matrix) description of every state in the pipeline.
//!
//! Quadratures are ordered `x1, p1, x2, p2, ...` with `x = a + a†` and
//! `p = -i(a - a†)`, so the vacuum covariance is the identity and
//! `[x, p] = 2i`. The covariance is the symmetrized second moment
//! `V_jk = <{ΔX_j, ΔX_k}> / 2`.

use std::f64::consts::{PI, TAU};

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{check_non_negative, check_probability, invalid, Error, Result};

/// Eigenvalue floor used when checking `V + iΩ >= 0`.
pub const PHYSICALITY_TOLERANCE: f64 = 1e-10;

/// Magnitude and phase of a two-mode squeezing parameter `ξ = r e^{iθ}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SqueezeParams {
    r: f64,
    phase: f64,
}

impl SqueezeParams {
    pub fn new(r: f64, phase: f64) -> Result<Self> {
        check_non_negative("squeeze magnitude r", r)?;
        if !phase.is_finite() {
            return Err(invalid(format!("squeeze phase {phase} is not finite")));
        }
        Ok(Self {
            r,
            phase: phase.rem_euclid(TAU),
        })
    }

    /// Squeezer whose single-mode marginals carry `n` photons on average (`n = sinh² r`).
    pub fn from_mean_photons(n: f64, phase: f64) -> Result<Self> {
        check_non_negative("mean photon number", n)?;
        Self::new(n.sqrt().asinh(), phase)
    }

    pub fn identity() -> Self {
        Self { r: 0.0, phase: 0.0 }
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn phase(&self) -> f64 {
        self.phase
    }

    pub fn mean_photons(&self) -> f64 {
        self.r.sinh().powi(2)
    }

    /// `-ξ`: same magnitude, phase shifted by π. Undoes `self`.
    pub fn inverse(&self) -> Self {
        Self {
            r: self.r,
            phase: (self.phase + PI).rem_euclid(TAU),
        }
    }
}

/// Mean vector and covariance matrix of an `n_modes` bosonic Gaussian state.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianState {
    n_modes: usize,
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

impl GaussianState {
    pub fn vacuum(n_modes: usize) -> Result<Self> {
        if n_modes == 0 {
            return Err(invalid("a Gaussian state needs at least one mode"));
        }
        Ok(Self {
            n_modes,
            mean: DVector::zeros(2 * n_modes),
            cov: DMatrix::identity(2 * n_modes, 2 * n_modes),
        })
    }

    /// Builds a state from raw moments, checking shape and symmetry.
    pub fn from_moments(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let dim = mean.len();
        if dim == 0 || !dim.is_multiple_of(2) || cov.nrows() != dim || cov.ncols() != dim {
            return Err(invalid(format!(
                "moment shapes do not describe a bosonic state: mean {dim}, cov {}x{}",
                cov.nrows(),
                cov.ncols()
            )));
        }
        let state = Self {
            n_modes: dim / 2,
            mean,
            cov,
        };
        if state.asymmetry() > 1e-12 {
            return Err(invalid("covariance matrix is not symmetric"));
        }
        Ok(state)
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    fn check_mode(&self, mode: usize) -> Result<()> {
        if mode >= self.n_modes {
            return Err(invalid(format!(
                "mode index {mode} out of range for a {}-mode state",
                self.n_modes
            )));
        }
        Ok(())
    }

    /// Applies `S(ξ) = exp(ξ* a b - ξ a† b†)` to modes `mode_i` (a) and `mode_j` (b).
    ///
    /// In the Heisenberg picture `a -> cosh r a - e^{iθ} sinh r b†`, which on
    /// quadratures is the symplectic block `[[c I, -s R], [-s R, c I]]` with
    /// `R = [[cos θ, sin θ], [sin θ, -cos θ]]`.
    pub fn two_mode_squeeze(&self, mode_i: usize, mode_j: usize, params: SqueezeParams) -> Result<Self> {
        self.check_mode(mode_i)?;
        self.check_mode(mode_j)?;
        if mode_i == mode_j {
            return Err(invalid("two-mode squeeze needs two distinct modes"));
        }
        let (c, s) = (params.r.cosh(), params.r.sinh());
        let (cos, sin) = (params.phase.cos(), params.phase.sin());
        let dim = 2 * self.n_modes;
        let mut sym = DMatrix::<f64>::identity(dim, dim);
        let (ia, ib) = (2 * mode_i, 2 * mode_j);
        let refl = [[cos, sin], [sin, -cos]];
        for u in 0..2 {
            sym[(ia + u, ia + u)] = c;
            sym[(ib + u, ib + u)] = c;
            for v in 0..2 {
                sym[(ia + u, ib + v)] = -s * refl[u][v];
                sym[(ib + u, ia + v)] = -s * refl[u][v];
            }
        }
        Ok(self.transformed(&sym))
    }

    fn transformed(&self, sym: &DMatrix<f64>) -> Self {
        let cov = sym * &self.cov * sym.transpose();
        Self {
            n_modes: self.n_modes,
            mean: sym * &self.mean,
            cov: symmetrize(cov),
        }
    }

    /// Thermal-loss channel `a† -> √(1-α) a† + √α e†` with a thermal environment of `n_th` photons.
    pub fn thermal_loss(&self, mode: usize, alpha: f64, n_th: f64) -> Result<Self> {
        self.check_mode(mode)?;
        check_probability("alpha", alpha)?;
        check_non_negative("n_th", n_th)?;
        let t = (1.0 - alpha).sqrt();
        let mut out = self.clone();
        let k = 2 * mode;
        for u in k..k + 2 {
            out.mean[u] *= t;
        }
        for row in 0..2 * self.n_modes {
            for col in 0..2 * self.n_modes {
                let in_row = (k..k + 2).contains(&row);
                let in_col = (k..k + 2).contains(&col);
                match (in_row, in_col) {
                    (true, true) => {
                        let noise = if row == col { alpha * (2.0 * n_th + 1.0) } else { 0.0 };
                        out.cov[(row, col)] = (1.0 - alpha) * self.cov[(row, col)] + noise;
                    }
                    (true, false) | (false, true) => out.cov[(row, col)] = t * self.cov[(row, col)],
                    (false, false) => {}
                }
            }
        }
        Ok(out)
    }

    /// Beam splitter `a -> √(1-α) a + √α e`, `e -> -√α a + √(1-α) e`.
    /// Tracing out `mode_e` after this reproduces `thermal_loss`.
    pub fn beam_splitter(&self, mode_a: usize, mode_e: usize, alpha: f64) -> Result<Self> {
        self.check_mode(mode_a)?;
        self.check_mode(mode_e)?;
        check_probability("alpha", alpha)?;
        if mode_a == mode_e {
            return Err(invalid("beam splitter needs two distinct modes"));
        }
        let (t, s) = ((1.0 - alpha).sqrt(), alpha.sqrt());
        let dim = 2 * self.n_modes;
        let mut sym = DMatrix::<f64>::identity(dim, dim);
        let (ia, ie) = (2 * mode_a, 2 * mode_e);
        for u in 0..2 {
            sym[(ia + u, ia + u)] = t;
            sym[(ie + u, ie + u)] = t;
            sym[(ia + u, ie + u)] = s;
            sym[(ie + u, ia + u)] = -s;
        }
        Ok(self.transformed(&sym))
    }

    /// Shifts the quadrature means of `mode`; a coherent state with `<n> = |β|²` has `amp_x = 2 Re β`.
    pub fn displace(&self, mode: usize, amp_x: f64, amp_p: f64) -> Result<Self> {
        self.check_mode(mode)?;
        let mut out = self.clone();
        out.mean[2 * mode] += amp_x;
        out.mean[2 * mode + 1] += amp_p;
        Ok(out)
    }

    fn mode_block(&self, mode: usize) -> ([[f64; 2]; 2], [f64; 2]) {
        let k = 2 * mode;
        (
            [
                [self.cov[(k, k)], self.cov[(k, k + 1)]],
                [self.cov[(k + 1, k)], self.cov[(k + 1, k + 1)]],
            ],
            [self.mean[k], self.mean[k + 1]],
        )
    }

    /// `<a†a>` on `mode`.
    pub fn mean_photon(&self, mode: usize) -> Result<f64> {
        self.check_mode(mode)?;
        let (v, d) = self.mode_block(mode);
        Ok((v[0][0] + v[1][1] - 2.0) / 4.0 + (d[0] * d[0] + d[1] * d[1]) / 4.0)
    }

    /// Variance of `a†a` on `mode`.
    ///
    /// With `n = (x² + p² - 2)/4`, Isserlis/Wick factorization of the fourth
    /// moments of a Gaussian state gives
    /// `Var(n) = (tr V² - 2)/8 + dᵀ V d / 4` for the single-mode block `V` and mean `d`.
    pub fn photon_number_variance(&self, mode: usize) -> Result<f64> {
        self.check_mode(mode)?;
        let (v, d) = self.mode_block(mode);
        let tr_v2 = v[0][0] * v[0][0] + v[1][1] * v[1][1] + v[0][1] * v[1][0] + v[1][0] * v[0][1];
        let dvd = d[0] * (v[0][0] * d[0] + v[0][1] * d[1]) + d[1] * (v[1][0] * d[0] + v[1][1] * d[1]);
        Ok((tr_v2 - 2.0) / 8.0 + dvd / 4.0)
    }

    /// Probability that every mode reads zero photons:
    /// `2^N / √det(V + I) · exp(-½ dᵀ (V + I)⁻¹ d)`.
    pub fn vacuum_probability(&self) -> Result<f64> {
        let dim = 2 * self.n_modes;
        let shifted = &self.cov + DMatrix::<f64>::identity(dim, dim);
        let chol = shifted
            .cholesky()
            .ok_or_else(|| Error::NumericFailure("V + I is not positive definite".into()))?;
        let l = chol.l();
        let log_det: f64 = (0..dim).map(|i| 2.0 * l[(i, i)].ln()).sum();
        let solved = chol.solve(&self.mean);
        let quad = self.mean.dot(&solved);
        let p = (self.n_modes as f64 * 2f64.ln() - 0.5 * log_det - 0.5 * quad).exp();
        Ok(p.clamp(0.0, 1.0))
    }

    /// Reduced state on the listed modes, in the given order.
    pub fn reduced(&self, modes: &[usize]) -> Result<Self> {
        if modes.is_empty() {
            return Err(invalid("reduced state needs at least one mode"));
        }
        let mut idx = Vec::with_capacity(2 * modes.len());
        for &m in modes {
            self.check_mode(m)?;
            idx.push(2 * m);
            idx.push(2 * m + 1);
        }
        let mean = DVector::from_iterator(idx.len(), idx.iter().map(|&i| self.mean[i]));
        let cov = DMatrix::from_fn(idx.len(), idx.len(), |r, c| self.cov[(idx[r], idx[c])]);
        Ok(Self {
            n_modes: modes.len(),
            mean,
            cov,
        })
    }

    /// Largest absolute entry of `V - Vᵀ`.
    pub fn asymmetry(&self) -> f64 {
        (&self.cov - self.cov.transpose()).amax()
    }

    /// Smallest eigenvalue of the Hermitian matrix `V + iΩ`; non-negative for physical states.
    pub fn min_uncertainty_eigenvalue(&self) -> f64 {
        let dim = 2 * self.n_modes;
        let m = DMatrix::<Complex<f64>>::from_fn(dim, dim, |r, c| {
            let omega = if r / 2 == c / 2 {
                match (r % 2, c % 2) {
                    (0, 1) => 1.0,
                    (1, 0) => -1.0,
                    _ => 0.0,
                }
            } else {
                0.0
            };
            Complex::new(self.cov[(r, c)], omega)
        });
        m.symmetric_eigenvalues().min()
    }

    pub fn is_physical(&self) -> bool {
        self.asymmetry() <= 1e-12 && self.min_uncertainty_eigenvalue() >= -PHYSICALITY_TOLERANCE
    }
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}
