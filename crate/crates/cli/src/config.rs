//! Flat `key = value` run configuration.
//!
//! Lines are `key = value`; `#` starts a comment. Precedence is
//! command-line flags, then the config file, then built-in defaults.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use qas_core::gaussian::SqueezeParams;
use qas_core::measurement::{FockSettings, PipelineConfig};
use qas_core::sampling::Sampler;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => bail!("unknown format {s:?}; expected csv or json"),
        }
    }
}

impl Format {
    pub fn name(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sweep {
    Alpha,
    NA,
}

impl FromStr for Sweep {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "alpha" => Ok(Sweep::Alpha),
            "n_a" => Ok(Sweep::NA),
            _ => bail!("unknown sweep {s:?}; expected alpha or n_a"),
        }
    }
}

impl Sweep {
    pub fn name(self) -> &'static str {
        match self {
            Sweep::Alpha => "alpha",
            Sweep::NA => "n_a",
        }
    }
}

/// Point set: `lin:start:stop:count`, `log:start:stop:count`, or a comma list.
#[derive(Clone, Debug, PartialEq)]
pub enum Grid {
    Lin { start: f64, stop: f64, count: usize },
    Log { start: f64, stop: f64, count: usize },
    List(Vec<f64>),
}

impl Grid {
    pub fn points(&self) -> Vec<f64> {
        match *self {
            Grid::Lin { start, stop, count } => spaced(start, stop, count),
            Grid::Log { start, stop, count } => spaced(start.log10(), stop.log10(), count)
                .into_iter()
                .map(|e| 10f64.powf(e))
                .collect(),
            Grid::List(ref v) => v.clone(),
        }
    }
}

/// Endpoints are hit exactly; interior points use the weighted form so that
/// symmetric grids stay symmetric.
fn spaced(start: f64, stop: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![start];
    }
    let n = (count - 1) as f64;
    (0..count)
        .map(|k| {
            let k = k as f64;
            (start * (n - k) + stop * k) / n
        })
        .collect()
}

impl FromStr for Grid {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let grid = match parts.as_slice() {
            [kind @ ("lin" | "log"), a, b, n] => {
                let start: f64 = a.parse().with_context(|| format!("grid start {a:?}"))?;
                let stop: f64 = b.parse().with_context(|| format!("grid stop {b:?}"))?;
                let count: usize = n.parse().with_context(|| format!("grid count {n:?}"))?;
                if count == 0 {
                    bail!("grid {s:?} has no points");
                }
                if *kind == "log" {
                    if !(start > 0.0 && stop > 0.0) {
                        bail!("log grid {s:?} needs positive endpoints");
                    }
                    Grid::Log { start, stop, count }
                } else {
                    Grid::Lin { start, stop, count }
                }
            }
            [list] => Grid::List(
                list.split(',')
                    .map(|v| v.trim().parse::<f64>().with_context(|| format!("grid value {v:?}")))
                    .collect::<Result<_>>()?,
            ),
            _ => bail!("cannot parse grid {s:?}; use lin:a:b:n, log:a:b:n or a comma list"),
        };
        if grid.points().iter().any(|x| !x.is_finite()) {
            bail!("grid {s:?} has non-finite points");
        }
        Ok(grid)
    }
}

impl std::fmt::Display for Grid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Grid::Lin { start, stop, count } => write!(f, "lin:{start}:{stop}:{count}"),
            Grid::Log { start, stop, count } => write!(f, "log:{start}:{stop}:{count}"),
            Grid::List(v) => {
                let items: Vec<String> = v.iter().map(|x| x.to_string()).collect();
                f.write_str(&items.join(","))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub n_a: f64,
    pub n_th: f64,
    pub source_phase: f64,
    /// `None` is the matched OPA `ζ = -ξ`.
    pub opa_r: Option<f64>,
    pub opa_phase: f64,
    pub eta_s: f64,
    pub eta_i: f64,
    pub dark_p: f64,
    pub fock_tolerance: f64,
    pub fock_buffer: usize,
    pub fock_min_cutoff: usize,
    pub alpha_true: f64,
    /// Fixed absorption for photon-number sweeps.
    pub alpha: f64,
    /// `None` picks each command's own default.
    pub alpha_grid: Option<Grid>,
    pub na_grid: Grid,
    pub sweep: Sweep,
    pub steps: usize,
    pub rounds: usize,
    pub seed: u64,
    pub sampler: Sampler,
    pub fullcount_max_na: f64,
    pub out: PathBuf,
    pub format: Format,
}

impl Default for RunConfig {
    fn default() -> Self {
        let fock = FockSettings::default();
        Self {
            n_a: 1.0,
            n_th: 1.0,
            source_phase: 0.0,
            opa_r: None,
            opa_phase: std::f64::consts::PI,
            eta_s: 1.0,
            eta_i: 1.0,
            dark_p: 0.0,
            fock_tolerance: fock.tolerance,
            fock_buffer: fock.buffer,
            fock_min_cutoff: fock.min_cutoff,
            alpha_true: 0.1,
            alpha: 0.01,
            alpha_grid: None,
            na_grid: Grid::Log {
                start: 0.1,
                stop: 1000.0,
                count: 41,
            },
            sweep: Sweep::NA,
            steps: 10_000,
            rounds: 100,
            seed: 20_240_101,
            sampler: Sampler::Direct,
            fullcount_max_na: 2.0,
            out: PathBuf::from("out"),
            format: Format::Csv,
        }
    }
}

pub const KEYS: [&str; 23] = [
    "n_a",
    "n_th",
    "source_phase",
    "opa_r",
    "opa_phase",
    "eta_s",
    "eta_i",
    "dark_p",
    "fock_tolerance",
    "fock_buffer",
    "fock_min_cutoff",
    "alpha_true",
    "alpha",
    "alpha_grid",
    "na_grid",
    "sweep",
    "steps",
    "rounds",
    "seed",
    "sampler",
    "fullcount_max_na",
    "out",
    "format",
];

fn num<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value.parse::<T>().map_err(|e| anyhow!("{key} = {value:?}: {e}"))
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "n_a" => self.n_a = num(key, v)?,
            "n_th" => self.n_th = num(key, v)?,
            "source_phase" => self.source_phase = num(key, v)?,
            "opa_r" => self.opa_r = if v == "matched" { None } else { Some(num(key, v)?) },
            "opa_phase" => self.opa_phase = num(key, v)?,
            "eta_s" => self.eta_s = num(key, v)?,
            "eta_i" => self.eta_i = num(key, v)?,
            "dark_p" => self.dark_p = num(key, v)?,
            "fock_tolerance" => self.fock_tolerance = num(key, v)?,
            "fock_buffer" => self.fock_buffer = num(key, v)?,
            "fock_min_cutoff" => self.fock_min_cutoff = num(key, v)?,
            "alpha_true" => self.alpha_true = num(key, v)?,
            "alpha" => self.alpha = num(key, v)?,
            "alpha_grid" => self.alpha_grid = if v == "auto" { None } else { Some(v.parse()?) },
            "na_grid" => self.na_grid = v.parse()?,
            "sweep" => self.sweep = v.parse()?,
            "steps" => self.steps = num(key, v)?,
            "rounds" => self.rounds = num(key, v)?,
            "seed" => self.seed = num(key, v)?,
            "sampler" => self.sampler = v.parse().map_err(|e: qas_core::Error| anyhow!("{e}"))?,
            "fullcount_max_na" => self.fullcount_max_na = num(key, v)?,
            "out" => self.out = PathBuf::from(v),
            "format" => self.format = v.parse()?,
            other => bail!("unknown config key {other:?}"),
        }
        Ok(())
    }

    /// Applies a config file's lines on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected key = value, got {raw:?}", i + 1))?;
            self.set(k, v).with_context(|| format!("line {}", i + 1))?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "n_a" => self.n_a.to_string(),
            "n_th" => self.n_th.to_string(),
            "source_phase" => self.source_phase.to_string(),
            "opa_r" => self.opa_r.map_or("matched".into(), |r| r.to_string()),
            "opa_phase" => self.opa_phase.to_string(),
            "eta_s" => self.eta_s.to_string(),
            "eta_i" => self.eta_i.to_string(),
            "dark_p" => self.dark_p.to_string(),
            "fock_tolerance" => self.fock_tolerance.to_string(),
            "fock_buffer" => self.fock_buffer.to_string(),
            "fock_min_cutoff" => self.fock_min_cutoff.to_string(),
            "alpha_true" => self.alpha_true.to_string(),
            "alpha" => self.alpha.to_string(),
            "alpha_grid" => self.alpha_grid.as_ref().map_or("auto".into(), |g| g.to_string()),
            "na_grid" => self.na_grid.to_string(),
            "sweep" => self.sweep.name().into(),
            "steps" => self.steps.to_string(),
            "rounds" => self.rounds.to_string(),
            "seed" => self.seed.to_string(),
            "sampler" => self.sampler.name().into(),
            "fullcount_max_na" => self.fullcount_max_na.to_string(),
            "out" => self.out.display().to_string(),
            "format" => self.format.name().into(),
            _ => return None,
        })
    }

    /// Every key in a fixed order, one `key = value` per line.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for key in KEYS {
            let _ = writeln!(s, "{key} = {}", self.get(key).expect("known key"));
        }
        s
    }

    /// Keys that shape output content (`out` and `format` are left out so
    /// the same run written to two places carries the same header).
    pub fn echo_pairs(&self) -> Vec<(&'static str, String)> {
        KEYS.iter()
            .filter(|k| !matches!(**k, "out" | "format"))
            .map(|k| (*k, self.get(k).expect("known key")))
            .collect()
    }

    pub fn pipeline(&self) -> Result<PipelineConfig> {
        let mut p = PipelineConfig::ideal(self.n_a, self.n_th);
        p.source_phase = self.source_phase;
        p.opa = match self.opa_r {
            None => None,
            Some(r) => Some(SqueezeParams::new(r, self.opa_phase).map_err(|e| anyhow!("{e}"))?),
        };
        p.eta_s = self.eta_s;
        p.eta_i = self.eta_i;
        p.dark_p = self.dark_p;
        p.fock = FockSettings {
            tolerance: self.fock_tolerance,
            buffer: self.fock_buffer,
            min_cutoff: self.fock_min_cutoff,
        };
        p.validate().map_err(|e| anyhow!("{e}"))?;
        Ok(p)
    }
}
