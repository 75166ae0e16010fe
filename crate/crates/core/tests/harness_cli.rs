//! Sweeps, figure reproductions and the command line.

use std::path::Path;
use std::process::Command;

use spinmem::analytic::{pna_closed_form, spectrum_phi};
use spinmem::cli::default_fig3_plan;
use spinmem::harness::{
    default_params, reproduce_fig2, reproduce_fig3, run_sweep, AnalysisOptions, Axis, Fig2Plan, SimSettings,
    SweepPlan,
};
use spinmem::io::spectrum_from_csv;

fn short() -> SimSettings {
    SimSettings {
        duration_s: 0.5,
        ..SimSettings::default()
    }
}

fn plan(axis: Axis, grid: Vec<f64>, dry_run: bool) -> SweepPlan {
    SweepPlan {
        base: default_params(),
        axis,
        grid,
        sim: short(),
        realizations: 4,
        seed: 61,
        analysis: AnalysisOptions::default(),
        eps_z_stderr: 0.0,
        dry_run,
    }
}

#[test]
fn sweeps_are_deterministic() {
    let p = plan(Axis::SpinJx, vec![0.5e10, 0.8e10, 1.2e10, 2e10], false);
    let a = run_sweep(&p).unwrap();
    assert_eq!(a, run_sweep(&p).unwrap());
    assert_eq!(a.points.len(), 4);
    assert!(a.bana.exponent.stderr > 0.0);
}

#[test]
fn dry_runs_give_exact_exponents() {
    for (axis, grid, bana, pna) in [
        (Axis::FluxSx, vec![0.5e12, 1e12, 2e12, 4e12], 3.0, 2.0),
        (Axis::SpinJx, vec![0.5e10, 1e10, 2e10, 4e10], 2.0, 1.0),
        (Axis::GammaHz, vec![40.0, 80.0, 160.0, 320.0], -1.0, 0.0),
    ] {
        let r = run_sweep(&plan(axis, grid, true)).unwrap();
        assert!((r.bana.exponent.value - bana).abs() < 1e-12, "{axis:?}: {:?}", r.bana);
        assert!((r.pna.exponent.value - pna).abs() < 1e-12, "{axis:?}: {:?}", r.pna);
    }
}

#[test]
fn short_grids_are_rejected() {
    assert!(run_sweep(&plan(Axis::FluxSx, vec![1e12, 2e12, 3e12], true)).is_err());
    assert!(run_sweep(&plan(Axis::FluxSx, vec![1e12, 3e12, 2e12, 4e12], true)).is_err());
}

#[test]
fn equal_probes_give_equal_areas() {
    let params = default_params().coherent();
    let r = reproduce_fig2(&Fig2Plan {
        params,
        sim: SimSettings::default(),
        realizations: 30,
        seed: 62,
        analysis: AnalysisOptions::default(),
        wing_band_hz: None,
    })
    .unwrap();
    let a = &r.annotations;
    assert!((a.area_ratio_expected - 1.0).abs() < 1e-15);
    assert!(a.area_ratio.z_score(1.0).abs() <= 3.0, "{:?}", a.area_ratio);
    assert!(a.wing_ratio.z_score(1.0).abs() <= 3.0, "{:?}", a.wing_ratio);
}

#[test]
fn decay_rate_table_without_technical_noise() {
    let mut plan = default_fig3_plan();
    plan.params.tech_noise_k = 0.0;
    plan.realizations = 30;
    let r = reproduce_fig3(&plan).unwrap();
    let bg0 = r.rows[0].bana_times_gamma;
    for row in &r.rows {
        assert!(row.rsn_over_pna.z_score(1.0).abs() <= 3.0, "Γ {}: {:?}", row.gamma_hz, row.rsn_over_pna);
        let d = row.bana_times_gamma.value - bg0.value;
        let s = (row.bana_times_gamma.stderr.powi(2) + bg0.stderr.powi(2)).sqrt();
        assert!(d.abs() <= 3.0 * s.max(f64::MIN_POSITIVE), "BANA·Γ drifts at Γ {}", row.gamma_hz);
    }
    assert!((r.bana_vs_gamma.exponent.value + 1.0).abs() <= 0.2);
}

#[test]
fn technical_noise_fades_with_decay_rate() {
    let plan = default_fig3_plan();
    assert!(plan.params.tech_noise_k > 0.0);
    let r = reproduce_fig3(&plan).unwrap();
    let ratios: Vec<_> = r.rows.iter().map(|row| row.rsn_over_pna).collect();
    for w in ratios.windows(2) {
        let s = (w[0].stderr.powi(2) + w[1].stderr.powi(2)).sqrt();
        assert!(w[1].value <= w[0].value + 3.0 * s, "{ratios:?}");
    }
    assert!(ratios[0].value > 1.5, "{ratios:?}");
    let last = ratios.last().unwrap();
    let expected = 1.0 + 40.0 / r.rows.last().unwrap().gamma_hz;
    assert!(last.z_score(expected).abs() <= 3.0, "{last:?} vs {expected}");
    for row in &r.rows {
        assert_eq!(row.pna_closed_form, pna_closed_form(&plan.params).unwrap());
    }
}

fn cli(args: &[&str], out: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_spinmem"))
        .args(args)
        .args(["--out", out.to_str().unwrap()])
        .env_remove("SPINMEM_SEED")
        .output()
        .unwrap()
}

#[test]
fn spectrum_subcommand_writes_the_configured_grid() {
    let dir = tempfile::tempdir().unwrap();
    let p = default_params();
    let cfg = dir.path().join("p.json");
    std::fs::write(&cfg, serde_json::to_string(&p).unwrap()).unwrap();
    let out = cli(&["spectrum", "--config", cfg.to_str().unwrap(), "--points", "11"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.path().join("spectrum.csv")).unwrap();
    assert!(text.starts_with("# convention=area-over-Hz, two-sided;"));
    assert!(text.contains(&format!("params_hash={:016x}", p.hash64())));
    let s = spectrum_from_csv(&text).unwrap();
    assert_eq!(s.psd.len(), 11);
    for (f, v) in s.freq_hz.iter().zip(&s.psd) {
        let want = spectrum_phi(&p, *f).unwrap();
        assert!((v / want - 1.0).abs() < 1e-12);
    }
}

#[test]
fn sweep_subcommand_reports_the_flux_exponent() {
    let dir = tempfile::tempdir().unwrap();
    let plan = serde_json::json!({
        "base": default_params(),
        "axis": "flux_Sx",
        "grid": [0.5e12, 0.7e12, 1e12, 1.4e12, 2e12],
        "sim": { "duration_s": 1.0 },
        "realizations": 10,
        "seed": 63
    });
    let cfg = dir.path().join("sweep.json");
    std::fs::write(&cfg, plan.to_string()).unwrap();
    let out = cli(&["sweep", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    let line = stdout.lines().find(|l| l.starts_with("BANA exponent vs flux_Sx")).unwrap();
    let value: f64 = line.split_whitespace().nth(4).unwrap().parse().unwrap();
    let err: f64 = line.split_whitespace().nth(6).unwrap().parse().unwrap();
    assert!((value - 3.0).abs() <= 0.2 && err <= 0.2, "{line}");
    for f in ["sweep_points.csv", "sweep_bana.csv", "sweep_pna.csv"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
}

#[test]
fn exit_codes_follow_the_contract() {
    let dir = tempfile::tempdir().unwrap();
    let out = cli(&["spectrum", "--no-such-flag"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));

    let bad = dir.path().join("bad.json");
    let mut p = serde_json::to_value(default_params()).unwrap();
    p["gamma_Hz"] = serde_json::json!(-1.0);
    std::fs::write(&bad, p.to_string()).unwrap();
    let out = cli(&["spectrum", "--config", bad.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(1));

    // A flat spectrum has no peak to fit.
    let flat = dir.path().join("flat.csv");
    let mut s = String::from("# convention=area-over-Hz, two-sided; rbw_Hz=10; n_avg=100; n_eff=100; bin_corr=1\n");
    s.push_str("freq_Hz,psd\n");
    for k in 0..400 {
        s.push_str(&format!("{},1\n", 10 * k));
    }
    std::fs::write(&flat, s).unwrap();
    let out = cli(&["fit", flat.to_str().unwrap(), "--lo-hz", "1000", "--hi-hz", "3000"], dir.path());
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn seed_environment_variable_is_overridden_by_flag() {
    let dir = tempfile::tempdir().unwrap();
    let run = |env: Option<&str>, flag: Option<&str>, sub: &str| {
        let out = dir.path().join(sub);
        std::fs::create_dir_all(&out).unwrap();
        let mut c = Command::new(env!("CARGO_BIN_EXE_spinmem"));
        c.args(["simulate", "--duration-s", "0.2", "--out", out.to_str().unwrap()]);
        c.env_remove("SPINMEM_SEED");
        if let Some(e) = env {
            c.env("SPINMEM_SEED", e);
        }
        if let Some(f) = flag {
            c.args(["--seed", f]);
        }
        assert!(c.output().unwrap().status.success());
        std::fs::read(out.join("psd.csv")).unwrap()
    };
    let env5 = run(Some("5"), None, "a");
    let flag5 = run(Some("6"), Some("5"), "b");
    let env6 = run(Some("6"), None, "c");
    assert_eq!(env5, flag5);
    assert_ne!(env5, env6);
}
