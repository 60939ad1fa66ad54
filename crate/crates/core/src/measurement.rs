//! QAS and CAS measurement pipelines.
//!
//! QAS: two-mode squeezed source, optional vacuum input losses on both arms,
//! the thermal-loss sample on the signal, then the OPA squeeze and
//! photon counting on both modes. CAS: a coherent state through the same
//! sample channel followed by intensity or photon-number measurement.

use std::fmt;

use statrs::distribution::{Discrete, DiscreteCDF, Poisson};

use crate::error::{check_non_negative, check_probability, invalid, Result};
use crate::fock::{self, FockDensityMatrix};
use crate::gaussian::{GaussianState, SqueezeParams};
use crate::outcome::OutcomeDistribution;

/// Cutoff policy for the Fock oracle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FockSettings {
    /// Largest accepted truncated mass.
    pub tolerance: f64,
    /// Extra rows evaluated past the cutoff by the squeezer.
    pub buffer: usize,
    /// Floor for every per-mode cutoff.
    pub min_cutoff: usize,
}

impl Default for FockSettings {
    fn default() -> Self {
        Self {
            tolerance: fock::DEFAULT_TAIL_TOLERANCE,
            buffer: fock::DEFAULT_BUFFER,
            min_cutoff: fock::DEFAULT_CUTOFF,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub n_a: f64,
    pub n_th: f64,
    /// Phase θ of the source squeezer.
    pub source_phase: f64,
    /// OPA squeeze; `None` means the matched `ζ = -ξ`.
    pub opa: Option<SqueezeParams>,
    pub eta_s: f64,
    pub eta_i: f64,
    pub dark_p: f64,
    pub fock: FockSettings,
}

impl PipelineConfig {
    /// Ideal pipeline: matched OPA, no input loss, no dark counts.
    pub fn ideal(n_a: f64, n_th: f64) -> Self {
        Self {
            n_a,
            n_th,
            source_phase: 0.0,
            opa: None,
            eta_s: 1.0,
            eta_i: 1.0,
            dark_p: 0.0,
            fock: FockSettings::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_non_negative("n_a", self.n_a)?;
        check_non_negative("n_th", self.n_th)?;
        check_probability("eta_s", self.eta_s)?;
        check_probability("eta_i", self.eta_i)?;
        check_probability("dark_p", self.dark_p)?;
        check_non_negative("fock tolerance", self.fock.tolerance)?;
        if !self.source_phase.is_finite() {
            return Err(invalid("source_phase must be finite"));
        }
        Ok(())
    }

    pub fn source(&self) -> Result<SqueezeParams> {
        SqueezeParams::from_mean_photons(self.n_a, self.source_phase)
    }

    pub fn opa_params(&self) -> Result<SqueezeParams> {
        match self.opa {
            Some(p) => Ok(p),
            None => Ok(self.source()?.inverse()),
        }
    }
}

/// The four on-off outcomes; `c` marks a click.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OnOff {
    NoNo,
    NoClick,
    ClickNo,
    ClickClick,
}

impl OnOff {
    pub const ALL: [OnOff; 4] = [OnOff::NoNo, OnOff::NoClick, OnOff::ClickNo, OnOff::ClickClick];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn label(self) -> &'static str {
        match self {
            OnOff::NoNo => "00",
            OnOff::NoClick => "0c",
            OnOff::ClickNo => "c0",
            OnOff::ClickClick => "cc",
        }
    }
}

impl fmt::Display for OnOff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OnOffProbs {
    pub p00: f64,
    pub p0c: f64,
    pub pc0: f64,
    pub pcc: f64,
}

impl OnOffProbs {
    /// `pcc` is taken as the complement of the other three.
    pub fn from_partial(p00: f64, p0c: f64, pc0: f64) -> Result<Self> {
        let clamp = |name: &str, p: f64| -> Result<f64> {
            if !p.is_finite() || !(-1e-12..=1.0 + 1e-12).contains(&p) {
                return Err(invalid(format!("{name} = {p} is not a probability")));
            }
            Ok(p.clamp(0.0, 1.0))
        };
        let p00 = clamp("p00", p00)?;
        let p0c = clamp("p0c", p0c)?;
        let pc0 = clamp("pc0", pc0)?;
        let pcc = (1.0 - p00 - p0c - pc0).max(0.0);
        Ok(Self { p00, p0c, pc0, pcc })
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.p00, self.p0c, self.pc0, self.pcc]
    }

    pub fn get(&self, outcome: OnOff) -> f64 {
        self.as_array()[outcome.index()]
    }

    pub fn total(&self) -> f64 {
        self.as_array().iter().sum()
    }
}

/// Gaussian state of both modes after the sample, before the OPA.
pub fn qas_sample_state(cfg: &PipelineConfig, alpha: f64) -> Result<GaussianState> {
    cfg.validate()?;
    check_probability("alpha", alpha)?;
    GaussianState::vacuum(2)?
        .two_mode_squeeze(0, 1, cfg.source()?)?
        .thermal_loss(0, 1.0 - cfg.eta_s, 0.0)?
        .thermal_loss(1, 1.0 - cfg.eta_i, 0.0)?
        .thermal_loss(0, alpha, cfg.n_th)
}

/// Gaussian state at the detectors.
pub fn qas_output_state(cfg: &PipelineConfig, alpha: f64) -> Result<GaussianState> {
    qas_sample_state(cfg, alpha)?.two_mode_squeeze(0, 1, cfg.opa_params()?)
}

/// Photon-count zero-photon probability `P(0, 0)` via the Gaussian formula.
/// Dark counts are not part of the photon statistics and are ignored here.
pub fn zpp(cfg: &PipelineConfig, alpha: f64) -> Result<f64> {
    qas_output_state(cfg, alpha)?.vacuum_probability()
}

/// ZPP read from the Fock oracle.
pub fn zpp_fock(cfg: &PipelineConfig, alpha: f64) -> Result<f64> {
    Ok(qas_full_distribution(cfg, alpha)?.get(&[0, 0]))
}

/// On-off probabilities without dark counts, from Gaussian vacuum probabilities:
/// `P(n1 = 0) - P(0, 0)` is the `{0, click}` mass and so on.
pub fn qas_onoff_ideal_detectors(cfg: &PipelineConfig, alpha: f64) -> Result<OnOffProbs> {
    let out = qas_output_state(cfg, alpha)?;
    let p00 = out.vacuum_probability()?;
    let zero_s = out.reduced(&[0])?.vacuum_probability()?;
    let zero_i = out.reduced(&[1])?.vacuum_probability()?;
    OnOffProbs::from_partial(p00, (zero_s - p00).max(0.0), (zero_i - p00).max(0.0))
}

/// On-off probabilities including the configured dark counts.
pub fn qas_onoff(cfg: &PipelineConfig, alpha: f64) -> Result<OnOffProbs> {
    apply_dark_counts(qas_onoff_ideal_detectors(cfg, alpha)?, cfg.dark_p)
}

/// Coarse-grains a two-mode count table; unresolved tail mass lands in `pcc`.
pub fn onoff_from_full(dist: &OutcomeDistribution) -> Result<OnOffProbs> {
    if dist.n_modes() != 2 {
        return Err(invalid("on-off coarse graining needs a two-mode table"));
    }
    let shape = dist.shape();
    let p00 = dist.get(&[0, 0]);
    let p0c: f64 = (1..shape[1]).map(|n| dist.get(&[0, n])).sum();
    let pc0: f64 = (1..shape[0]).map(|n| dist.get(&[n, 0])).sum();
    OnOffProbs::from_partial(p00, p0c, pc0)
}

/// Independent per-detector dark clicks with probability `dark_p`.
pub fn apply_dark_counts(p: OnOffProbs, dark_p: f64) -> Result<OnOffProbs> {
    check_probability("dark_p", dark_p)?;
    if dark_p == 0.0 {
        return Ok(p);
    }
    let quiet = 1.0 - dark_p;
    let p00 = p.p00 * quiet * quiet;
    let p0c = p.p0c * quiet + p.p00 * quiet * dark_p;
    let pc0 = p.pc0 * quiet + p.p00 * quiet * dark_p;
    OnOffProbs::from_partial(p00, p0c, pc0)
}

fn geometric_ratio(mean: f64) -> f64 {
    mean / (mean + 1.0)
}

/// Smallest `D` whose geometric tail (ratio `mean / (mean + 1)`) carries less
/// than `tol` of probability and less than `tol * 1e2` of second moment.
fn moment_cutoff(mean: f64, tol: f64) -> usize {
    if mean <= 0.0 {
        return 1;
    }
    let q = geometric_ratio(mean);
    let mut d = fock::geometric_cutoff(q, tol);
    loop {
        let df = d as f64;
        let second = q.powf(df) * (df * df + 2.0 * df * mean + mean + 2.0 * mean * mean);
        if second <= tol * 1e2 {
            return d;
        }
        d += 1;
    }
}

/// Per-stage cutoffs for the QAS Fock oracle.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FockPlan {
    /// Source TMSV cutoff (idler keeps it).
    pub source: usize,
    /// Signal cutoff through the sample channel.
    pub signal: usize,
    /// Thermal environment cutoff.
    pub env: usize,
    /// Output cutoff of both modes after the OPA.
    pub output: usize,
}

impl FockPlan {
    /// One plan shared by every `alpha`, so finite differences see identical truncations.
    pub fn for_alphas(cfg: &PipelineConfig, alphas: &[f64]) -> Result<Self> {
        cfg.validate()?;
        let s = &cfg.fock;
        let budget = s.tolerance * 1e-2;
        let floor = |d: usize| d.max(s.min_cutoff);
        let source = floor(moment_cutoff(cfg.n_a, budget));
        let hottest = (cfg.n_a * cfg.eta_s).max(cfg.n_th);
        let signal = source.max(floor(moment_cutoff(hottest, budget)));
        let env = moment_cutoff(cfg.n_th, budget);
        let mut output = signal;
        for &alpha in alphas {
            let out = qas_output_state(cfg, alpha)?;
            for mode in 0..2 {
                output = output.max(moment_cutoff(out.mean_photon(mode)?, budget));
            }
        }
        Ok(Self {
            source,
            signal,
            env,
            output: output.div_ceil(8) * 8,
        })
    }
}

/// Fock state of both modes after the sample, at the plan's `[signal, source]` cutoffs.
pub fn qas_sample_state_fock(cfg: &PipelineConfig, alpha: f64, plan: &FockPlan) -> Result<FockDensityMatrix> {
    cfg.validate()?;
    check_probability("alpha", alpha)?;
    let mut state = FockDensityMatrix::tmsv_with(cfg.source()?, plan.source, cfg.fock.tolerance)?
        .pad(&[plan.signal, plan.source])?;
    if cfg.eta_s < 1.0 {
        state = state.apply_loss(0, 1.0 - cfg.eta_s, 0.0, 1)?;
    }
    if cfg.eta_i < 1.0 {
        state = state.apply_loss(1, 1.0 - cfg.eta_i, 0.0, 1)?;
    }
    state.apply_loss(0, alpha, cfg.n_th, plan.env)
}

/// Full-counting table `P(n1, n2 | alpha)` from the Fock oracle.
pub fn qas_full_distribution(cfg: &PipelineConfig, alpha: f64) -> Result<OutcomeDistribution> {
    let plan = FockPlan::for_alphas(cfg, &[alpha])?;
    qas_full_distribution_with(cfg, alpha, &plan)
}

pub fn qas_full_distribution_with(cfg: &PipelineConfig, alpha: f64, plan: &FockPlan) -> Result<OutcomeDistribution> {
    qas_sample_state_fock(cfg, alpha, plan)?.squeezed_number_distribution_on(
        cfg.opa_params()?,
        cfg.fock.buffer,
        &[plan.output, plan.output],
    )
}

/// Coherent input with `n_a` mean photons after the sample channel.
pub fn cas_output_state(n_a: f64, alpha: f64, n_th: f64) -> Result<GaussianState> {
    check_non_negative("n_a", n_a)?;
    GaussianState::vacuum(1)?
        .displace(0, 2.0 * n_a.sqrt(), 0.0)?
        .thermal_loss(0, alpha, n_th)
}

/// `(⟨n⟩, Var n)` of the CAS output.
pub fn cas_intensity_stats(n_a: f64, alpha: f64, n_th: f64) -> Result<(f64, f64)> {
    let out = cas_output_state(n_a, alpha, n_th)?;
    Ok((out.mean_photon(0)?, out.photon_number_variance(0)?))
}

/// Cutoffs for the CAS Fock oracle.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CasPlan {
    /// Poisson input cutoff.
    pub input: usize,
    pub env: usize,
    /// Output cutoff; `input + env - 1` holds every `n + k` the beam splitter can emit.
    pub output: usize,
}

impl CasPlan {
    pub fn new(n_a: f64, n_th: f64, settings: &FockSettings) -> Result<Self> {
        check_non_negative("n_a", n_a)?;
        check_non_negative("n_th", n_th)?;
        let budget = settings.tolerance * 1e-2;
        let input = if n_a == 0.0 {
            1
        } else {
            let poisson = Poisson::new(n_a).map_err(|e| invalid(e.to_string()))?;
            let mut d = n_a.ceil() as usize + 1;
            // Probability tail within budget, second-moment tail within 1e2 budget.
            while poisson.sf(d as u64 - 1) * (1.0 + (d * d) as f64 * 1e-2) > budget {
                d += 1;
            }
            d
        };
        let env = moment_cutoff(n_th, budget);
        Ok(Self {
            input,
            env,
            output: (input + env - 1).max(settings.min_cutoff),
        })
    }
}

pub fn cas_full_distribution(n_a: f64, alpha: f64, n_th: f64) -> Result<OutcomeDistribution> {
    let settings = FockSettings::default();
    let plan = CasPlan::new(n_a, n_th, &settings)?;
    cas_full_distribution_with(n_a, alpha, n_th, &plan, &settings)
}

/// Photon-number distribution of the CAS output.
///
/// Number statistics ignore the optical phase and the channel commutes with
/// phase rotations, so the coherent input is replaced by its Poisson
/// populations; the loss then acts on one coherence line only.
pub fn cas_full_distribution_with(
    n_a: f64,
    alpha: f64,
    n_th: f64,
    plan: &CasPlan,
    settings: &FockSettings,
) -> Result<OutcomeDistribution> {
    check_non_negative("n_a", n_a)?;
    check_probability("alpha", alpha)?;
    check_non_negative("n_th", n_th)?;
    let probs: Vec<f64> = if n_a == 0.0 {
        vec![1.0]
    } else {
        let poisson = Poisson::new(n_a).map_err(|e| invalid(e.to_string()))?;
        (0..plan.input).map(|n| poisson.pmf(n as u64)).collect()
    };
    let tail = (1.0 - probs.iter().sum::<f64>()).max(0.0);
    let input = FockDensityMatrix::from_populations(&[plan.input], &probs, tail, settings.tolerance)?;
    let out = input.pad(&[plan.output])?.apply_loss(0, alpha, n_th, plan.env)?;
    fock::joint_number_distribution(&out)
}

/// Largest absolute gap between the Gaussian and Fock descriptions in vacuum
/// probability, mean photon numbers and number variances, over the sample
/// state and the detector state at every `alpha`.
pub fn cross_formalism_deviation(cfg: &PipelineConfig, alphas: &[f64]) -> Result<f64> {
    let plan = FockPlan::for_alphas(cfg, alphas)?;
    let mut worst = 0.0f64;
    for &alpha in alphas {
        let g = qas_sample_state(cfg, alpha)?;
        let f = qas_sample_state_fock(cfg, alpha, &plan)?;
        worst = worst.max((g.vacuum_probability()? - f.vacuum_probability()).abs());
        for mode in 0..2 {
            worst = worst.max((g.mean_photon(mode)? - f.mean_photon(mode)?).abs());
            worst = worst.max((g.photon_number_variance(mode)? - f.photon_number_variance(mode)?).abs());
        }
        let g = qas_output_state(cfg, alpha)?;
        let d = qas_full_distribution_with(cfg, alpha, &plan)?;
        worst = worst.max((g.vacuum_probability()? - d.get(&[0, 0])).abs());
        for mode in 0..2 {
            worst = worst.max((g.mean_photon(mode)? - d.mean(mode)?).abs());
            worst = worst.max((g.photon_number_variance(mode)? - d.variance(mode)?).abs());
        }
    }
    Ok(worst)
}
