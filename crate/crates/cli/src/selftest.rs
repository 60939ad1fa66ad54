//! Self-checks run by `qas selftest`: cross-formalism agreement, normalization,
//! information inequalities and comparison against checked-in golden tables.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

use qas_core::estimation::{onoff_fisher, qas_fullcount_fisher, qfi_closed_form, qfi_numeric, QFI_EPS};
use qas_core::measurement::{
    cas_full_distribution, cross_formalism_deviation, qas_full_distribution, qas_onoff, PipelineConfig,
};

use crate::commands::{cas_variance_table, fi_scan_table, precision_table, zpp_scan_table};
use crate::config::RunConfig;
use crate::output::{parse_csv, Table};

pub const CROSS_TOL: f64 = 1e-8;
pub const NORM_TOL: f64 = 1e-9;
pub const INFO_SLACK: f64 = 1e-6;
/// Relative tolerance for golden numbers; leaves room for libm differences across platforms.
pub const GOLDEN_RTOL: f64 = 1e-9;

pub fn default_golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("golden")
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteReport {
    pub name: &'static str,
    pub max_deviation: f64,
    pub tolerance: f64,
    /// Name of the first failing invariant or file.
    pub failure: Option<String>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.failure.is_none()
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "selftest suite={} status={} max_deviation={:e} tolerance={:e}",
            self.name,
            if self.passed() { "pass" } else { "fail" },
            self.max_deviation,
            self.tolerance
        )?;
        if let Some(what) = &self.failure {
            write!(f, " failing={what}")?;
        }
        Ok(())
    }
}

/// Tracks the worst deviation and the first check that broke its tolerance.
struct Tracker {
    report: SuiteReport,
}

impl Tracker {
    fn new(name: &'static str, tolerance: f64) -> Self {
        Self {
            report: SuiteReport {
                name,
                max_deviation: 0.0,
                tolerance,
                failure: None,
            },
        }
    }

    fn record(&mut self, what: impl FnOnce() -> String, deviation: f64) {
        let r = &mut self.report;
        r.max_deviation = r.max_deviation.max(deviation);
        if r.failure.is_none() && (deviation.is_nan() || deviation > r.tolerance) {
            r.failure = Some(what());
        }
    }
}

pub fn cross_formalism() -> Result<SuiteReport> {
    let mut t = Tracker::new("cross_formalism", CROSS_TOL);
    let alphas = [0.0, 0.25, 0.5, 0.75, 1.0];
    for n_a in [0.5, 1.5] {
        for n_th in [0.0, 1.0] {
            let d = cross_formalism_deviation(&PipelineConfig::ideal(n_a, n_th), &alphas)?;
            t.record(|| format!("gaussian_vs_fock(n_a={n_a},n_th={n_th})"), d);
        }
    }
    Ok(t.report)
}

pub fn normalization() -> Result<SuiteReport> {
    let mut t = Tracker::new("normalization", NORM_TOL);
    let mut noisy = PipelineConfig::ideal(1.0, 1.0);
    noisy.eta_s = 0.8;
    noisy.eta_i = 0.9;
    noisy.dark_p = 0.05;
    for cfg in [PipelineConfig::ideal(1.0, 1.0), PipelineConfig::ideal(2.0, 0.5), noisy] {
        for alpha in [0.0, 0.1, 0.5, 0.9] {
            let p = qas_onoff(&cfg, alpha)?;
            t.record(
                || format!("onoff_sum(n_a={},alpha={alpha})", cfg.n_a),
                (p.total() - 1.0).abs(),
            );
        }
    }
    for alpha in [0.1, 0.5] {
        let d = qas_full_distribution(&PipelineConfig::ideal(1.0, 1.0), alpha)?;
        let gap = (d.total() + d.tail_bound() - 1.0)
            .abs()
            .max(d.tail_bound() - 1e-8)
            .max(0.0);
        t.record(|| format!("fullcount_sum(alpha={alpha})"), gap);
        let c = cas_full_distribution(10.0, alpha, 1.0)?;
        let gap = (c.total() + c.tail_bound() - 1.0)
            .abs()
            .max(c.tail_bound() - 1e-8)
            .max(0.0);
        t.record(|| format!("cas_fullcount_sum(alpha={alpha})"), gap);
    }
    Ok(t.report)
}

pub fn information() -> Result<SuiteReport> {
    let mut t = Tracker::new("information_inequalities", INFO_SLACK);
    let cfg = PipelineConfig::ideal(1.0, 1.0);
    for alpha in [0.01, 0.1, 0.3, 0.6, 0.9] {
        let onoff = onoff_fisher(&cfg, alpha)?;
        let full = qas_fullcount_fisher(&cfg, alpha)?;
        let reduced = qfi_numeric(&cfg, alpha, QFI_EPS)?;
        let qfi = qfi_closed_form(cfg.n_a, cfg.n_th, alpha)?;
        // Violations are measured relative to the larger side.
        t.record(
            || format!("fi_onoff<=fi_fullcount(alpha={alpha})"),
            ((onoff - full) / full).max(0.0),
        );
        t.record(
            || format!("fi_fullcount<=qfi_reduced(alpha={alpha})"),
            ((full - reduced) / reduced).max(0.0),
        );
        t.record(
            || format!("qfi_reduced<=qfi(alpha={alpha})"),
            ((reduced - qfi) / qfi).max(0.0),
        );
    }
    Ok(t.report)
}

/// The tables frozen under the golden directory, by file name.
pub fn golden_tables() -> Result<Vec<(String, String)>> {
    let with = |pairs: &[(&str, &str)]| -> Result<RunConfig> {
        let mut c = RunConfig::default();
        for (k, v) in pairs {
            c.set(k, v)?;
        }
        Ok(c)
    };
    type Job = (RunConfig, fn(&RunConfig) -> Result<Table>, &'static str);
    let jobs: Vec<Job> = vec![
        (with(&[("alpha_grid", "lin:0:1:11")])?, zpp_scan_table, "zpp-scan"),
        (with(&[("na_grid", "0.5,1,2,100")])?, cas_variance_table, "cas-variance"),
        (with(&[("alpha_grid", "0.01,0.1,0.3")])?, fi_scan_table, "fi-scan"),
        (with(&[("na_grid", "0.5,1,10")])?, precision_table, "precision-vs-na"),
    ];
    jobs.into_iter()
        .map(|(cfg, f, cmd)| {
            let t = f(&cfg)?;
            Ok((format!("{}.csv", t.name), t.to_csv(cmd, &cfg)))
        })
        .collect()
}

pub fn bless(dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    golden_tables()?
        .into_iter()
        .map(|(name, text)| {
            let path = dir.join(name);
            fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))?;
            Ok(path)
        })
        .collect()
}

fn cell_deviation(want: &str, got: &str) -> f64 {
    match (want.parse::<f64>(), got.parse::<f64>()) {
        (Ok(a), Ok(b)) if a == b => 0.0,
        (Ok(a), Ok(b)) => (a - b).abs() / a.abs().max(b.abs()).max(1e-12),
        _ if want == got => 0.0,
        _ => f64::INFINITY,
    }
}

fn header_values(text: &str) -> Vec<(String, String)> {
    text.lines()
        .filter_map(|l| l.strip_prefix("# "))
        .filter_map(|l| l.split_once(" = "))
        .filter(|(k, _)| *k != "tool")
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

/// Worst relative deviation between a golden CSV and a fresh one; infinite on structural mismatch.
pub fn compare_csv(want: &str, got: &str) -> Result<f64> {
    let (wh, gh) = (header_values(want), header_values(got));
    let (wc, wr) = parse_csv(want)?;
    let (gc, gr) = parse_csv(got)?;
    if wh.len() != gh.len() || wc != gc || wr.len() != gr.len() {
        return Ok(f64::INFINITY);
    }
    let mut worst = 0.0f64;
    for ((wk, wv), (gk, gv)) in wh.iter().zip(&gh) {
        worst = worst.max(if wk == gk {
            cell_deviation(wv, gv)
        } else {
            f64::INFINITY
        });
    }
    for (a, b) in wr.iter().zip(&gr) {
        if a.len() != b.len() {
            return Ok(f64::INFINITY);
        }
        for (x, y) in a.iter().zip(b) {
            worst = worst.max(cell_deviation(x, y));
        }
    }
    Ok(worst)
}

pub fn golden(dir: &Path) -> Result<SuiteReport> {
    let mut t = Tracker::new("golden", GOLDEN_RTOL);
    for (name, fresh) in golden_tables()? {
        let path = dir.join(&name);
        let dev = match fs::read_to_string(&path) {
            Ok(want) => compare_csv(&want, &fresh)?,
            Err(_) => f64::INFINITY,
        };
        t.record(|| path.display().to_string(), dev);
    }
    Ok(t.report)
}

pub fn run(golden_dir: &Path) -> Result<Vec<SuiteReport>> {
    Ok(vec![
        cross_formalism()?,
        normalization()?,
        information()?,
        golden(golden_dir)?,
    ])
}
