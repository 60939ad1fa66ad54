use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use qas_cli::config::RunConfig;
use qas_cli::output::{parse_csv, SINGULAR, SKIPPED};

fn qas(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qas")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap()
}

#[test]
fn flags_override_file_override_defaults() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.cfg");
    fs::write(&cfg, "# demo\nseed = 5\nrounds = 7\nn_th = 0.25\n").unwrap();
    let c = cfg.to_str().unwrap();
    let o = qas(&["show-config", "--config", c, "--seed", "9", "--set", "n_a=3"]);
    assert!(o.status.success());
    let eff = RunConfig::from_text(&stdout(&o)).unwrap();
    assert_eq!((eff.seed, eff.rounds, eff.n_th, eff.n_a), (9, 7, 0.25, 3.0));
    assert_eq!(eff.steps, RunConfig::default().steps);
    // Echoed config is itself a config file that reproduces the same echo.
    fs::write(&cfg, stdout(&o)).unwrap();
    assert_eq!(stdout(&qas(&["show-config", "--config", c])), stdout(&o));
}

#[test]
fn bad_input_is_reported() {
    let o = qas(&["zpp-scan", "--set", "bogus=1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bogus"));
    assert_eq!(qas(&["fi-scan", "--format", "xml"]).status.code(), Some(2));
}

#[test]
fn cas_variance_marks_singular_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();
    assert!(qas(&["cas-variance", "--out", out, "--set", "na_grid=0.5,1,4"])
        .status
        .success());
    let text = read(tmp.path(), "cas_variance.csv");
    assert!(text.contains("# config.n_th = 1\n") && text.contains("# x = n_a\n"));
    let (cols, rows) = parse_csv(&text).unwrap();
    assert_eq!(cols, ["x", "cas_variance", "shot_noise_limit"]);
    assert_eq!(rows[1][1], SINGULAR);
    assert!(rows[0][1].parse::<f64>().is_ok() && rows[2][1].parse::<f64>().is_ok());
}

#[test]
fn json_output_mirrors_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("csv"), tmp.path().join("json"));
    let grid = "na_grid=0.5,1,5";
    assert!(qas(&["precision-vs-na", "--set", grid, "--out", a.to_str().unwrap()])
        .status
        .success());
    assert!(qas(&[
        "precision-vs-na",
        "--set",
        grid,
        "--format",
        "json",
        "--out",
        b.to_str().unwrap()
    ])
    .status
    .success());
    let (cols, rows) = parse_csv(&read(&a, "precision_vs_na.csv")).unwrap();
    let doc: serde_json::Value = serde_json::from_str(&read(&b, "precision_vs_na.json")).unwrap();
    assert_eq!(doc["metadata"]["schema_version"], 1);
    assert!(doc["metadata"]["n_star"].as_str().unwrap().parse::<f64>().unwrap() > 100.0);
    for (i, c) in cols.iter().enumerate() {
        let arr = doc["columns"][c].as_array().unwrap();
        for (row, v) in rows.iter().zip(arr) {
            match v.as_f64() {
                Some(x) => assert_eq!(row[i].parse::<f64>().unwrap(), x),
                None => assert_eq!(row[i], v.as_str().unwrap()),
            }
        }
    }
    assert_eq!(rows[2][2], SKIPPED);
    assert_eq!(rows[1][3], SINGULAR);
}

#[test]
fn bayes_run_writes_trajectories_and_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();
    assert!(qas(&["bayes-run", "--rounds", "2", "--steps", "100", "--out", out])
        .status
        .success());
    let (cols, rows) = parse_csv(&read(tmp.path(), "bayes_trajectories.csv")).unwrap();
    assert_eq!(cols, ["round", "m", "alpha_hat", "var_hat"]);
    assert_eq!(rows.len(), 2 * 8);
    let doc: serde_json::Value = serde_json::from_str(&read(tmp.path(), "bayes_summary.json")).unwrap();
    let m = doc["columns"]["m"].as_array().unwrap();
    assert_eq!(m.last().unwrap(), 100);
    let f: f64 = doc["metadata"]["fisher_at_alpha_true"]
        .as_str()
        .unwrap()
        .parse()
        .unwrap();
    let crb = doc["columns"]["crb"]
        .as_array()
        .unwrap()
        .last()
        .unwrap()
        .as_f64()
        .unwrap();
    assert_eq!(crb, 1.0 / (100.0 * f));
}

#[test]
fn selftest_passes_and_names_perturbed_golden_file() {
    let o = qas(&["selftest"]);
    assert!(o.status.success(), "{}", stdout(&o));
    let report = stdout(&o);
    for suite in ["cross_formalism", "normalization", "information_inequalities", "golden"] {
        assert!(
            report.contains(&format!("suite={suite} status=pass max_deviation=")),
            "{report}"
        );
    }

    let tmp = tempfile::tempdir().unwrap();
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("golden");
    for e in fs::read_dir(&golden).unwrap() {
        let e = e.unwrap();
        fs::copy(e.path(), tmp.path().join(e.file_name())).unwrap();
    }
    let target = tmp.path().join("zpp_scan.csv");
    let text = fs::read_to_string(&target).unwrap();
    let (_, rows) = parse_csv(&text).unwrap();
    let bumped = (rows[3][1].parse::<f64>().unwrap() * 1.001).to_string();
    fs::write(&target, text.replacen(&rows[3][1], &bumped, 1)).unwrap();
    let o = qas(&["selftest", "--golden", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("failing=golden:") && stdout(&o).contains("zpp_scan.csv"));
}
