#![allow(clippy::excessive_precision)]

//! Values pinned by independent computations outside this crate:
//! a four-mode pure-state simulation (signal, idler, environment and its
//! purifying partner, cutoff 40, sparse matrix exponentials) for the count
//! table, 40-digit Gaussian formulas for on-off probabilities and Fisher
//! information, and the Laguerre closed form for displaced thermal states.

use qas_core::estimation::{cas_variance, intensity_crossover, onoff_fisher, qfi_closed_form};
use qas_core::measurement::{
    cas_full_distribution, cas_intensity_stats, onoff_from_full, qas_full_distribution, qas_onoff, zpp, zpp_fock,
    PipelineConfig,
};

fn assert_close(got: f64, want: f64, tol: f64, what: &str) {
    assert!(
        (got - want).abs() <= tol,
        "{what}: got {got:e}, want {want:e}, diff {:e}",
        (got - want).abs()
    );
}

#[test]
fn qas_count_table_at_alpha_one_tenth() {
    let cfg = PipelineConfig::ideal(1.0, 1.0);
    let dist = qas_full_distribution(&cfg, 0.1).unwrap();
    let pinned = [
        ([0, 0], 0.7116086386236962),
        ([0, 1], 0.10127737091313828),
        ([1, 0], 0.10127737091313826),
        ([1, 1], 0.03149498304913396),
        ([2, 0], 0.014413970408471123),
        ([0, 2], 0.014413970408471118),
        ([2, 1], 0.0069134196309839505),
        ([1, 2], 0.0069134196309839505),
        ([2, 2], 0.0020858998886784915),
        ([3, 0], 0.002051421172794983),
    ];
    // The external simulation itself is truncated at about 2e-12.
    for (k, p) in pinned {
        assert_close(dist.get(&k), p, 1e-11, &format!("P{k:?}"));
    }
}

#[test]
fn qas_onoff_at_alpha_one_tenth() {
    let cfg = PipelineConfig::ideal(1.0, 1.0);
    let want = [
        0.71160863862358032,
        0.11808317196151923,
        0.11808317196151923,
        0.052225017453381222,
    ];
    let gauss = qas_onoff(&cfg, 0.1).unwrap().as_array();
    let fock = onoff_from_full(&qas_full_distribution(&cfg, 0.1).unwrap())
        .unwrap()
        .as_array();
    for k in 0..4 {
        assert_close(gauss[k], want[k], 1e-14, "gaussian on-off");
        assert_close(fock[k], want[k], 1e-9, "fock on-off");
    }
    assert_close(zpp(&cfg, 0.1).unwrap(), want[0], 1e-14, "zpp");
    assert_close(zpp_fock(&cfg, 0.1).unwrap(), want[0], 1e-8, "zpp fock");
}

#[test]
fn onoff_fisher_information_values() {
    let cfg = PipelineConfig::ideal(1.0, 1.0);
    for (alpha, fi, ratio) in [
        (0.01, 379.12138201356086, 0.93832542048356314),
        (0.1, 25.727737993917696, 0.57887410486314817),
        (0.3, 5.0258088426283613, 0.26385496423798897),
    ] {
        let got = onoff_fisher(&cfg, alpha).unwrap();
        assert_close(got, fi, 1e-6 * fi, "on-off FI");
        assert_close(got / qfi_closed_form(1.0, 1.0, alpha).unwrap(), ratio, 1e-6, "FI/QFI");
    }
}

#[test]
fn crossover_photon_number() {
    let n_star = intensity_crossover(&PipelineConfig::ideal(1.0, 1.0), 0.01).unwrap();
    assert_close(n_star, 384.84412291279043, 1e-5 * 384.8, "N*");
}

#[test]
fn cas_moments_and_distribution() {
    let (mean, var) = cas_intensity_stats(1.0, 0.01, 1.0).unwrap();
    assert_close(mean, 1.0, 1e-14, "mean");
    // m(m+1) + |β|²(2m+1) with m = 0.01 and |β|² = 0.99.
    assert_close(var, 1.0199, 1e-14, "variance");
    let dist = cas_full_distribution(1.0, 0.01, 1.0).unwrap();
    let want = [
        0.37152157146510702,
        0.36423754888957311,
        0.18213627045136993,
        0.061902408879806718,
        0.016078140431740902,
        0.0034024313359703593,
    ];
    for (n, p) in want.iter().enumerate() {
        assert_close(dist.probs()[n], *p, 1e-12, &format!("P({n})"));
    }
    assert_close(dist.mean(0).unwrap(), mean, 1e-9, "fock mean");
    assert_close(dist.variance(0).unwrap(), var, 1e-8, "fock variance");
    let noisy = cas_variance(1.0, 0.01, 0.2).unwrap();
    let m = 0.002;
    assert_close(
        noisy,
        (m * (m + 1.0) + 0.99 * (2.0 * m + 1.0)) / 0.64,
        1e-13,
        "cas variance",
    );
}

#[test]
fn pipeline_edge_cases() {
    // Total absorption with a cold bath: the signal is replaced by vacuum and
    // the OPA then acts on vacuum ⊗ thermal(n_a) idler.
    let cfg = PipelineConfig::ideal(1.0, 0.0);
    let p00 = zpp(&cfg, 1.0).unwrap();
    assert_close(zpp_fock(&cfg, 1.0).unwrap(), p00, 1e-8, "alpha = 1");
    // det(V + I) = det([[4, ±2√2], [±2√2, 6]])² = 256, so P00 = 4 / 16.
    assert_close(p00, 0.25, 1e-14, "alpha = 1 closed form");
    let dark = PipelineConfig::ideal(0.0, 1.0);
    assert_close(
        zpp_fock(&dark, 0.3).unwrap(),
        zpp(&dark, 0.3).unwrap(),
        1e-8,
        "no source",
    );
    assert_close(zpp(&dark, 0.3).unwrap(), 1.0 / 1.3, 1e-14, "thermal vacuum");
}
