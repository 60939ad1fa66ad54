//! Dataset-producing subcommands. Each returns rendered files; writing is left to the caller.

use anyhow::{Context, Result};
use rayon::prelude::*;

use qas_core::estimation::{
    cas_variance, cramer_rao, intensity_crossover, onoff_fisher, precision_row, qas_fullcount_fisher, qfi_closed_form,
    qfi_numeric, shot_noise_limit, QFI_EPS,
};
use qas_core::measurement::{cas_output_state, zpp};
use qas_core::sampling::{run_experiment, Experiment};
use qas_core::Error;

use crate::config::{Format, Grid, RunConfig, Sweep};
use crate::output::{Cell, OutputFile, Table, SKIPPED};

/// How the precision columns are normalized.
pub const PRECISION_DEFINITION: &str = "1/F per single measurement (Cramer-Rao variance at M = 1)";

fn lin(start: f64, stop: f64, count: usize) -> Grid {
    Grid::Lin { start, stop, count }
}

fn alpha_grid(cfg: &RunConfig, default: Grid) -> Vec<f64> {
    cfg.alpha_grid.clone().unwrap_or(default).points()
}

fn render(table: &Table, command: &str, cfg: &RunConfig) -> OutputFile {
    let (name, contents) = table.render(command, cfg, cfg.format);
    OutputFile { name, contents }
}

pub fn zpp_scan_table(cfg: &RunConfig) -> Result<Table> {
    let p = cfg.pipeline()?;
    let alphas = alpha_grid(cfg, lin(0.0, 1.0, 101));
    let rows: Vec<Vec<Cell>> = alphas
        .par_iter()
        .map(|&a| -> Result<Vec<Cell>> {
            let qas = zpp(&p, a)?;
            let cas = cas_output_state(cfg.n_a, a, cfg.n_th)?.vacuum_probability()?;
            Ok(vec![a.into(), qas.into(), cas.into()])
        })
        .collect::<Result<_>>()?;
    let mut t = Table::new("zpp_scan", &["alpha", "zpp_qas", "zpp_cas"]);
    rows.into_iter().for_each(|r| t.push(r));
    t.note(
        "zpp_cas_definition",
        "vacuum probability of the coherent-state CAS output",
    );
    Ok(t)
}

pub fn cas_variance_table(cfg: &RunConfig) -> Result<Table> {
    let (xs, x_name) = match cfg.sweep {
        Sweep::NA => (cfg.na_grid.points(), "n_a"),
        Sweep::Alpha => (alpha_grid(cfg, lin(0.01, 0.99, 99)), "alpha"),
    };
    let mut t = Table::new("cas_variance", &["x", "cas_variance", "shot_noise_limit"]);
    for x in xs {
        let (n_a, alpha) = match cfg.sweep {
            Sweep::NA => (x, cfg.alpha),
            Sweep::Alpha => (cfg.n_a, x),
        };
        let var = match cas_variance(n_a, alpha, cfg.n_th) {
            Ok(v) => Some(v),
            Err(Error::SingularEstimator(_)) => None,
            Err(e) => return Err(e.into()),
        };
        t.push(vec![x.into(), var.into(), shot_noise_limit(alpha, n_a)?.into()]);
    }
    t.note("x", x_name);
    t.note("precision_definition", PRECISION_DEFINITION);
    Ok(t)
}

pub fn fi_scan_table(cfg: &RunConfig) -> Result<Table> {
    let p = cfg.pipeline()?;
    let alphas = alpha_grid(cfg, lin(0.01, 0.99, 99));
    let fullcount = cfg.n_a <= cfg.fullcount_max_na;
    let rows: Vec<Vec<Cell>> = alphas
        .par_iter()
        .map(|&a| -> Result<Vec<Cell>> {
            let onoff = onoff_fisher(&p, a).with_context(|| format!("on-off FI at alpha = {a}"))?;
            let full = if fullcount {
                qas_fullcount_fisher(&p, a)
                    .with_context(|| format!("full-count FI at alpha = {a}"))?
                    .into()
            } else {
                Cell::Text(SKIPPED)
            };
            let qfi = qfi_closed_form(cfg.n_a, cfg.n_th, a)?;
            let reduced = qfi_numeric(&p, a, QFI_EPS)?;
            Ok(vec![a.into(), onoff.into(), full, qfi.into(), reduced.into()])
        })
        .collect::<Result<_>>()?;
    let mut t = Table::new("fi_scan", &["alpha", "fi_onoff", "fi_fullcount", "qfi", "qfi_reduced"]);
    rows.into_iter().for_each(|r| t.push(r));
    t.note(
        "qfi_definition",
        "(n_a + n_th + 2 n_a n_th) / (alpha (1 - alpha)), environment-assisted bound",
    );
    t.note("qfi_reduced_definition", "fidelity QFI of the signal-idler state alone");
    Ok(t)
}

pub fn precision_table(cfg: &RunConfig) -> Result<Table> {
    let base = cfg.pipeline()?;
    let alpha = cfg.alpha;
    let rows: Vec<Vec<Cell>> = cfg
        .na_grid
        .points()
        .par_iter()
        .map(|&n_a| -> Result<Vec<Cell>> {
            let mut p = base.clone();
            p.n_a = n_a;
            let r = precision_row(&p, alpha, n_a <= cfg.fullcount_max_na)
                .with_context(|| format!("precision at n_a = {n_a}"))?;
            let full = r.qas_fullcount.map_or(Cell::Text(SKIPPED), Cell::Num);
            Ok(vec![
                n_a.into(),
                r.qas_onoff.into(),
                full,
                r.cas_intensity.into(),
                r.cas_fullcount.into(),
            ])
        })
        .collect::<Result<_>>()?;
    let mut t = Table::new(
        "precision_vs_na",
        &["n_a", "qas_onoff", "qas_fullcount", "cas_intensity", "cas_fullcount"],
    );
    rows.into_iter().for_each(|r| t.push(r));
    t.note("precision_definition", PRECISION_DEFINITION);
    t.note("n_star_reference_n_a", base.n_a.to_string());
    t.note("n_star", intensity_crossover(&base, alpha)?.to_string());
    Ok(t)
}

/// Per-round trajectories and the ensemble summary.
pub fn bayes_tables(cfg: &RunConfig) -> Result<(Table, Table)> {
    let p = cfg.pipeline()?;
    let exp = Experiment::new(&p, cfg.alpha_true, cfg.steps, cfg.sampler)?;
    let rounds = run_experiment(&exp, cfg.rounds, cfg.seed)?;
    let fisher = onoff_fisher(&p, cfg.alpha_true)?;

    let mut traj = Table::new("bayes_trajectories", &["round", "m", "alpha_hat", "var_hat"]);
    for t in &rounds {
        for c in &t.checkpoints {
            traj.push(vec![
                Cell::Int(t.round),
                Cell::Int(c.m as u64),
                c.alpha_hat.into(),
                c.var_hat.into(),
            ]);
        }
    }

    let mut summary = Table::new(
        "bayes_summary",
        &["m", "mean_alpha_hat", "var_alpha_hat", "mean_var_hat", "crb"],
    );
    let n = rounds.len() as f64;
    for (k, c0) in rounds[0].checkpoints.iter().enumerate() {
        let est: Vec<f64> = rounds.iter().map(|t| t.checkpoints[k].alpha_hat).collect();
        let mean = est.iter().sum::<f64>() / n;
        let var = if rounds.len() > 1 {
            est.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        let mean_var_hat = rounds.iter().map(|t| t.checkpoints[k].var_hat).sum::<f64>() / n;
        summary.push(vec![
            Cell::Int(c0.m as u64),
            mean.into(),
            var.into(),
            mean_var_hat.into(),
            cramer_rao(c0.m as u64, fisher)?.into(),
        ]);
    }
    summary.note("fisher_at_alpha_true", fisher.to_string());
    summary.note("crb_definition", "1 / (m F(alpha_true)), on-off Fisher information");
    let totals: Vec<String> = (0..4)
        .map(|i| rounds.iter().map(|t| t.tallies[i]).sum::<u64>().to_string())
        .collect();
    summary.note("outcome_totals_00_0c_c0_cc", totals.join(","));
    Ok((traj, summary))
}

pub fn zpp_scan(cfg: &RunConfig) -> Result<Vec<OutputFile>> {
    Ok(vec![render(&zpp_scan_table(cfg)?, "zpp-scan", cfg)])
}

pub fn cas_variance_cmd(cfg: &RunConfig) -> Result<Vec<OutputFile>> {
    Ok(vec![render(&cas_variance_table(cfg)?, "cas-variance", cfg)])
}

pub fn fi_scan(cfg: &RunConfig) -> Result<Vec<OutputFile>> {
    Ok(vec![render(&fi_scan_table(cfg)?, "fi-scan", cfg)])
}

pub fn precision_vs_na(cfg: &RunConfig) -> Result<Vec<OutputFile>> {
    Ok(vec![render(&precision_table(cfg)?, "precision-vs-na", cfg)])
}

pub fn bayes_run(cfg: &RunConfig) -> Result<Vec<OutputFile>> {
    let (traj, summary) = bayes_tables(cfg)?;
    // The summary is always JSON; trajectories follow --format.
    let (name, contents) = summary.render("bayes-run", cfg, Format::Json);
    Ok(vec![render(&traj, "bayes-run", cfg), OutputFile { name, contents }])
}
