//! Grid Bayesian inference, Fisher information and the closed-form bounds.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{check_non_negative, check_probability, invalid, Error, Result};
use crate::fock;
use crate::gaussian::{GaussianState, SqueezeParams};
use crate::measurement::{
    cas_full_distribution_with, cas_intensity_stats, qas_full_distribution_with, qas_onoff, qas_sample_state_fock,
    CasPlan, FockPlan, FockSettings, OnOff, OnOffProbs, PipelineConfig,
};

/// Posterior grid size.
pub const GRID_POINTS: usize = 2001;
/// Central-difference half width for Fisher information.
pub const FD_STEP: f64 = 1e-5;
/// Coarser step used for the Richardson consistency check.
pub const FD_CHECK_STEP: f64 = 2e-5;
/// Outcomes rarer than this are left out of Fisher sums.
pub const PROB_FLOOR: f64 = 1e-14;
/// Default fidelity displacement for `qfi_numeric`.
pub const QFI_EPS: f64 = 1e-3;

/// Density over `α` on a uniform grid spanning `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Posterior {
    weights: Vec<f64>,
    m_used: usize,
}

impl Posterior {
    /// Flat prior.
    pub fn uniform(points: usize) -> Result<Self> {
        if points < 2 {
            return Err(invalid("posterior grid needs at least 2 points"));
        }
        Ok(Self {
            weights: vec![1.0; points],
            m_used: 0,
        })
    }

    /// Normalizes arbitrary non-negative weights on a uniform grid.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        if weights.len() < 2 {
            return Err(invalid("posterior grid needs at least 2 points"));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(invalid("posterior weights must be finite and >= 0"));
        }
        let mut post = Self { weights, m_used: 0 };
        let z = post.integral();
        if !(z > 0.0) {
            return Err(invalid("posterior weights integrate to zero"));
        }
        post.weights.iter_mut().for_each(|w| *w /= z);
        Ok(post)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn spacing(&self) -> f64 {
        1.0 / (self.len() - 1) as f64
    }

    pub fn grid(&self) -> Vec<f64> {
        uniform_grid(self.len())
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Number of outcomes folded in so far.
    pub fn m_used(&self) -> usize {
        self.m_used
    }

    /// Trapezoid integral of the weights.
    pub fn integral(&self) -> f64 {
        trapezoid(&self.weights, self.spacing())
    }

    /// Multiplies in one outcome's likelihood row and renormalizes.
    pub fn update(&mut self, table: &LikelihoodTable, outcome: OnOff) -> Result<()> {
        if table.len() != self.len() {
            return Err(invalid(format!(
                "likelihood table has {} points, posterior has {}",
                table.len(),
                self.len()
            )));
        }
        self.multiply(table.row(outcome), outcome)
    }

    fn multiply(&mut self, likelihood: &[f64], outcome: OnOff) -> Result<()> {
        for (w, l) in self.weights.iter_mut().zip(likelihood) {
            *w *= l;
        }
        let z = self.integral();
        if !(z > 0.0) {
            return Err(Error::DegenerateUpdate(outcome.label().into()));
        }
        let inv = 1.0 / z;
        self.weights.iter_mut().for_each(|w| *w *= inv);
        self.m_used += 1;
        Ok(())
    }
}

pub fn uniform_grid(points: usize) -> Vec<f64> {
    let h = 1.0 / (points - 1) as f64;
    (0..points)
        .map(|i| if i + 1 == points { 1.0 } else { i as f64 * h })
        .collect()
}

fn trapezoid(values: &[f64], h: f64) -> f64 {
    let n = values.len();
    let inner: f64 = values.iter().sum();
    h * (inner - 0.5 * (values[0] + values[n - 1]))
}

/// On-off likelihoods tabulated once on the posterior grid.
#[derive(Clone, Debug, PartialEq)]
pub struct LikelihoodTable {
    rows: [Vec<f64>; 4],
}

impl LikelihoodTable {
    pub fn from_fn<F>(points: usize, likelihood: F) -> Result<Self>
    where
        F: Fn(f64) -> Result<OnOffProbs> + Sync,
    {
        if points < 2 {
            return Err(invalid("likelihood table needs at least 2 points"));
        }
        let probs: Vec<OnOffProbs> = uniform_grid(points)
            .into_par_iter()
            .map(&likelihood)
            .collect::<Result<_>>()?;
        let rows = std::array::from_fn(|k| probs.iter().map(|p| p.as_array()[k]).collect());
        Ok(Self { rows })
    }

    /// Table of `qas_onoff` for a pipeline.
    pub fn onoff(cfg: &PipelineConfig, points: usize) -> Result<Self> {
        cfg.validate()?;
        Self::from_fn(points, |alpha| qas_onoff(cfg, alpha))
    }

    pub fn len(&self) -> usize {
        self.rows[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows[0].is_empty()
    }

    pub fn row(&self, outcome: OnOff) -> &[f64] {
        &self.rows[outcome.index()]
    }
}

/// One Bayes step with a likelihood evaluated on the fly.
pub fn bayes_update<F>(post: &Posterior, outcome: OnOff, likelihood: F) -> Result<Posterior>
where
    F: Fn(f64) -> Result<OnOffProbs>,
{
    let row: Vec<f64> = post
        .grid()
        .into_iter()
        .map(|a| likelihood(a).map(|p| p.get(outcome)))
        .collect::<Result<_>>()?;
    let mut next = post.clone();
    next.multiply(&row, outcome)?;
    Ok(next)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EstimateReport {
    /// Posterior mean.
    pub alpha_hat: f64,
    /// Posterior variance.
    pub var_hat: f64,
    pub m_used: usize,
}

pub fn posterior_stats(post: &Posterior) -> EstimateReport {
    let h = post.spacing();
    let grid = post.grid();
    let w = post.weights();
    let first: Vec<f64> = grid.iter().zip(w).map(|(a, w)| a * w).collect();
    let mean = trapezoid(&first, h).clamp(0.0, 1.0);
    let second: Vec<f64> = grid.iter().zip(w).map(|(a, w)| (a - mean) * (a - mean) * w).collect();
    EstimateReport {
        alpha_hat: mean,
        var_hat: trapezoid(&second, h).max(0.0),
        m_used: post.m_used(),
    }
}

fn check_interior(alpha: f64, step: f64) -> Result<()> {
    check_probability("alpha", alpha)?;
    if !(step > 0.0) {
        return Err(invalid(format!("finite-difference step {step} must be > 0")));
    }
    let room = alpha.min(1.0 - alpha);
    if step >= room {
        return Err(invalid(format!(
            "alpha = {alpha} is too close to the boundary for step {step}; try step <= {:.3e}",
            room / 2.0
        )));
    }
    Ok(())
}

fn fisher_sum(center: &[f64], plus: &[f64], minus: &[f64], step: f64) -> Result<f64> {
    if center.len() != plus.len() || center.len() != minus.len() {
        return Err(invalid("probability tables change length with alpha"));
    }
    let mut f = 0.0;
    for ((&p, &up), &down) in center.iter().zip(plus).zip(minus) {
        let dp = (up - down) / (2.0 * step);
        if p > PROB_FLOOR {
            f += dp * dp / p;
        } else if p <= 0.0 && dp.abs() > PROB_FLOOR.sqrt() {
            return Err(Error::NumericFailure(format!(
                "outcome with zero probability has derivative {dp:.3e}; Fisher information diverges"
            )));
        }
    }
    Ok(f.max(0.0))
}

/// `Σ (∂P)² / P` with central differences of half width `step`.
pub fn fisher_information<F>(mut probs_of_alpha: F, alpha: f64, step: f64) -> Result<f64>
where
    F: FnMut(f64) -> Result<Vec<f64>>,
{
    check_interior(alpha, step)?;
    let center = probs_of_alpha(alpha)?;
    let plus = probs_of_alpha(alpha + step)?;
    let minus = probs_of_alpha(alpha - step)?;
    fisher_sum(&center, &plus, &minus, step)
}

/// Fisher information at `step` and at `2 step`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FisherCheck {
    pub value: f64,
    pub coarse: f64,
}

impl FisherCheck {
    pub fn relative_gap(&self) -> f64 {
        (self.value - self.coarse).abs() / self.value.abs().max(f64::MIN_POSITIVE)
    }
}

pub fn fisher_information_checked<F>(mut probs_of_alpha: F, alpha: f64, step: f64) -> Result<FisherCheck>
where
    F: FnMut(f64) -> Result<Vec<f64>>,
{
    check_interior(alpha, 2.0 * step)?;
    let center = probs_of_alpha(alpha)?;
    let value = fisher_sum(
        &center,
        &probs_of_alpha(alpha + step)?,
        &probs_of_alpha(alpha - step)?,
        step,
    )?;
    let coarse = fisher_sum(
        &center,
        &probs_of_alpha(alpha + 2.0 * step)?,
        &probs_of_alpha(alpha - 2.0 * step)?,
        2.0 * step,
    )?;
    Ok(FisherCheck { value, coarse })
}

/// FI of the four on-off outcomes (dark counts included).
pub fn onoff_fisher(cfg: &PipelineConfig, alpha: f64) -> Result<f64> {
    fisher_information(|a| Ok(qas_onoff(cfg, a)?.as_array().to_vec()), alpha, FD_STEP)
}

/// FI of the QAS photon-number table. Detector dark counts are not modelled
/// for number-resolved counting.
pub fn qas_fullcount_fisher(cfg: &PipelineConfig, alpha: f64) -> Result<f64> {
    check_interior(alpha, FD_STEP)?;
    let plan = FockPlan::for_alphas(cfg, &[alpha - FD_STEP, alpha, alpha + FD_STEP])?;
    fisher_information(
        |a| Ok(qas_full_distribution_with(cfg, a, &plan)?.probs().to_vec()),
        alpha,
        FD_STEP,
    )
}

/// FI of the CAS photon-number distribution.
pub fn cas_fullcount_fisher(n_a: f64, alpha: f64, n_th: f64) -> Result<f64> {
    let settings = FockSettings::default();
    let plan = CasPlan::new(n_a, n_th, &settings)?;
    fisher_information(
        |a| {
            Ok(cas_full_distribution_with(n_a, a, n_th, &plan, &settings)?
                .probs()
                .to_vec())
        },
        alpha,
        FD_STEP,
    )
}

/// Inverse of the error-propagation variance of the intensity estimator.
pub fn cas_intensity_fisher(n_a: f64, alpha: f64, n_th: f64) -> Result<f64> {
    Ok(1.0 / cas_variance(n_a, alpha, n_th)?)
}

/// `(n_a + n_th + 2 n_a n_th) / (α (1 - α))`.
pub fn qfi_closed_form(n_a: f64, n_th: f64, alpha: f64) -> Result<f64> {
    check_non_negative("n_a", n_a)?;
    check_non_negative("n_th", n_th)?;
    check_probability("alpha", alpha)?;
    if alpha == 0.0 || alpha == 1.0 {
        return Err(Error::Pole(format!("QFI diverges at alpha = {alpha}")));
    }
    Ok((n_a + n_th + 2.0 * n_a * n_th) / (alpha * (1.0 - alpha)))
}

/// QFI of the signal-idler state from the Bures distance,
/// `8 (1 - √F(ρ_α, ρ_{α±ε})) / ε²` averaged over both signs.
///
/// The OPA is unitary and leaves fidelities alone, so the state before it is used.
pub fn qfi_numeric(cfg: &PipelineConfig, alpha: f64, eps: f64) -> Result<f64> {
    check_interior(alpha, eps)?;
    let plan = FockPlan::for_alphas(cfg, &[alpha - eps, alpha, alpha + eps])?;
    let center = qas_sample_state_fock(cfg, alpha, &plan)?;
    let mut sum = 0.0;
    for a in [alpha - eps, alpha + eps] {
        let other = qas_sample_state_fock(cfg, a, &plan)?;
        let root = fock::fidelity(&center, &other)?.sqrt();
        sum += 8.0 * (1.0 - root) / (eps * eps);
    }
    Ok(sum / 2.0)
}

/// QFI when the environment is also available: the thermal mode is
/// purified by a partner, the loss becomes a beam splitter, and the
/// four-mode state is pure, so `F = ¼ tr[(V⁻¹ ∂V)²]`.
pub fn qfi_dilated(n_a: f64, n_th: f64, alpha: f64) -> Result<f64> {
    let eps = 1e-5;
    check_interior(alpha, eps)?;
    check_non_negative("n_a", n_a)?;
    check_non_negative("n_th", n_th)?;
    let state = |a: f64| -> Result<DMatrix<f64>> {
        Ok(GaussianState::vacuum(4)?
            .two_mode_squeeze(0, 1, SqueezeParams::from_mean_photons(n_a, 0.0)?)?
            .two_mode_squeeze(2, 3, SqueezeParams::from_mean_photons(n_th, 0.0)?)?
            .beam_splitter(0, 2, a)?
            .cov()
            .clone())
    };
    let v = state(alpha)?;
    let dv = (state(alpha + eps)? - state(alpha - eps)?) / (2.0 * eps);
    let inv = v
        .try_inverse()
        .ok_or_else(|| Error::NumericFailure("singular covariance".into()))?;
    let m = inv * dv;
    Ok((&m * &m).trace() / 4.0)
}

/// `1 / (M F)`.
pub fn cramer_rao(m: u64, fisher: f64) -> Result<f64> {
    if m == 0 {
        return Err(invalid("M must be >= 1"));
    }
    if !(fisher > 0.0 && fisher.is_finite()) {
        return Err(invalid(format!("Fisher information {fisher} must be finite and > 0")));
    }
    Ok(1.0 / (m as f64 * fisher))
}

/// `(1 - α) / n_a`.
pub fn shot_noise_limit(alpha: f64, n_a: f64) -> Result<f64> {
    check_probability("alpha", alpha)?;
    check_non_negative("n_a", n_a)?;
    if n_a == 0.0 {
        return Err(invalid("shot-noise limit needs n_a > 0"));
    }
    Ok((1.0 - alpha) / n_a)
}

/// `Δ²n_out / |∂⟨n_out⟩/∂α|²` with `∂⟨n_out⟩/∂α = n_th - n_a`.
pub fn cas_variance(n_a: f64, alpha: f64, n_th: f64) -> Result<f64> {
    let (_, var_out) = cas_intensity_stats(n_a, alpha, n_th)?;
    let slope = n_th - n_a;
    if slope.abs() <= 1e-12 * n_a.max(n_th).max(1.0) {
        return Err(Error::SingularEstimator(format!(
            "n_a = {n_a} equals n_th = {n_th}; the mean intensity does not depend on alpha"
        )));
    }
    Ok(var_out / (slope * slope))
}

/// `1 - ⟨n⟩_out / ⟨n⟩_in`, unclamped.
pub fn cas_estimator(mean_in: f64, mean_out: f64) -> Result<f64> {
    if !(mean_in > 0.0 && mean_in.is_finite()) {
        return Err(invalid(format!("mean_in = {mean_in} must be finite and > 0")));
    }
    Ok(1.0 - mean_out / mean_in)
}

/// Smallest `n_a > n_th` at which `cas_variance` drops to `target`.
/// Above `n_th` the variance falls monotonically from infinity to zero.
pub fn cas_crossover(target: f64, alpha: f64, n_th: f64) -> Result<f64> {
    if !(target > 0.0 && target.is_finite()) {
        return Err(invalid(format!("target precision {target} must be finite and > 0")));
    }
    check_probability("alpha", alpha)?;
    check_non_negative("n_th", n_th)?;
    if alpha == 1.0 {
        return Err(invalid("no intensity information at alpha = 1"));
    }
    let f = |n: f64| cas_variance(n, alpha, n_th).map(|v| v - target);
    let mut lo = n_th;
    let mut hi = n_th + 1.0;
    while f(hi)? > 0.0 {
        lo = hi;
        hi = n_th + 2.0 * (hi - n_th);
        if !hi.is_finite() {
            return Err(Error::NumericFailure("crossover bracket overflowed".into()));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

/// 1/F per measurement for the four schemes compared against photon number.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PrecisionRow {
    pub n_a: f64,
    pub qas_onoff: f64,
    /// `None` when number-resolved QAS was skipped for this `n_a`.
    pub qas_fullcount: Option<f64>,
    /// `None` at the `n_a = n_th` singularity.
    pub cas_intensity: Option<f64>,
    pub cas_fullcount: f64,
}

pub fn precision_row(cfg: &PipelineConfig, alpha: f64, with_qas_fullcount: bool) -> Result<PrecisionRow> {
    let qas_onoff = 1.0 / onoff_fisher(cfg, alpha)?;
    let qas_fullcount = if with_qas_fullcount {
        Some(1.0 / qas_fullcount_fisher(cfg, alpha)?)
    } else {
        None
    };
    let cas_intensity = match cas_variance(cfg.n_a, alpha, cfg.n_th) {
        Ok(v) => Some(v),
        Err(Error::SingularEstimator(_)) => None,
        Err(e) => return Err(e),
    };
    let cas_fullcount = 1.0 / cas_fullcount_fisher(cfg.n_a, alpha, cfg.n_th)?;
    Ok(PrecisionRow {
        n_a: cfg.n_a,
        qas_onoff,
        qas_fullcount,
        cas_intensity,
        cas_fullcount,
    })
}

/// Photon number at which CAS intensity precision reaches QAS on-off precision of `cfg`.
pub fn intensity_crossover(cfg: &PipelineConfig, alpha: f64) -> Result<f64> {
    let target = 1.0 / onoff_fisher(cfg, alpha)?;
    cas_crossover(target, alpha, cfg.n_th)
}
