//! The `spinmem` command line.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::analytic::{phi_terms, spectrum_phi_grid};
use crate::error::{Error, Result};
use crate::harness::figures::{Fig2Result, Fig3Result, Fig4Result};
use crate::harness::{
    default_params, reproduce_fig2, reproduce_fig3, reproduce_fig4, run_sweep, AnalysisOptions,
    Fig2Plan, Fig3Plan, Fig4Plan, ScalingResult, SimSettings, SweepPlan,
};
use crate::io::{
    csv_header, csv_table, num, plot_csv, read_spectrum, spectrum_to_csv, trajectory_to_bytes,
    trajectory_to_csv, write_atomic, write_json,
};
use crate::model::{validate, Context, ExperimentParams, CONVENTION_TAG};
use crate::sde;
use crate::spectral::{decompose, fit_lorentzian, FitOptions, LorentzianFit, Measured, NoiseAreas, Welch};

pub const SEED_ENV: &str = "SPINMEM_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Parser)]
#[command(name = "spinmem", version, about = "Probe-spin quantum noise simulator and spectral analysis")]
struct Cli {
    /// JSON configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed; overrides SPINMEM_SEED and the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Worker threads (results do not depend on this).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// More log output on standard error (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Evaluate the analytic output spectrum on a frequency grid.
    Spectrum {
        #[arg(long = "lo-hz")]
        lo_hz: Option<f64>,
        #[arg(long = "hi-hz")]
        hi_hz: Option<f64>,
        #[arg(long)]
        points: Option<usize>,
    },
    /// Simulate an ensemble and write its PSD and trajectories.
    Simulate {
        #[arg(long)]
        realizations: Option<usize>,
        #[arg(long = "duration-s")]
        duration_s: Option<f64>,
        /// Write every realization's trajectory, not only the first.
        #[arg(long)]
        all_trajectories: bool,
        /// Also write trajectories as CSV.
        #[arg(long)]
        trajectory_csv: bool,
    },
    /// Fit a Lorentzian plus floor to a spectrum file.
    Fit {
        input: PathBuf,
        #[arg(long = "lo-hz")]
        lo_hz: Option<f64>,
        #[arg(long = "hi-hz")]
        hi_hz: Option<f64>,
        /// Leave out the mirror resonance at negative frequency.
        #[arg(long)]
        no_mirror: bool,
    },
    /// Separate back-action and residual spin noise from two fits.
    Decompose {
        #[arg(long)]
        coherent: PathBuf,
        #[arg(long)]
        squeezed: PathBuf,
        #[arg(long = "eps-z")]
        eps_z: f64,
        #[arg(long = "eps-z-err", default_value_t = 0.0)]
        eps_z_err: f64,
        /// Decay rate for the projection-noise inference; defaults to the
        /// coherent fit's half-width.
        #[arg(long = "gamma-hz")]
        gamma_hz: Option<f64>,
    },
    /// Run a parameter sweep and regress the areas on a log-log scale.
    Sweep {
        /// Use closed-form areas instead of simulation.
        #[arg(long)]
        dry_run: bool,
    },
    /// Squeezed versus coherent spectra.
    Fig2,
    /// BANA, RSN and PNA against the decay rate.
    Fig3,
    /// Inferred projection noise against J_x at several decay rates.
    Fig4,
}

/// Frequency grid for the `spectrum` subcommand.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(rename = "lo_Hz")]
    pub lo_hz: f64,
    #[serde(rename = "hi_Hz")]
    pub hi_hz: f64,
    pub points: usize,
}

/// Configuration of `spectrum` and `simulate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub params: ExperimentParams,
    #[serde(default)]
    pub sim: SimSettings,
    #[serde(default = "one")]
    pub realizations: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub analysis: AnalysisOptions,
    #[serde(default)]
    pub grid: Option<GridSpec>,
}

fn one() -> usize {
    1
}

impl RunConfig {
    pub fn from_params(params: ExperimentParams) -> Self {
        Self {
            params,
            sim: SimSettings::default(),
            realizations: 1,
            seed: 0,
            analysis: AnalysisOptions::default(),
            grid: None,
        }
    }
}

/// Runs the command line and returns the process exit code: 0 on success,
/// 1 for usage or validation errors, 2 for numerical failures.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
    let result = match cli.threads {
        Some(0) => Err(Error::InvalidConfig("--threads must be >= 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidConfig(e.to_string()))
            .and_then(|pool| pool.install(|| execute(&cli))),
        None => execute(&cli),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                2
            } else {
                1
            }
        }
    }
}

fn seed_override(cli: &Cli) -> Result<Option<u64>> {
    if cli.seed.is_some() {
        return Ok(cli.seed);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::InvalidConfig(format!("{SEED_ENV}=`{v}` is not a u64"))),
        Err(_) => Ok(None),
    }
}

fn read_config_value(path: &Path) -> Result<serde_json::Value> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::InvalidConfig(format!("cannot read {}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

fn parse<T: serde::de::DeserializeOwned>(value: serde_json::Value, what: &str) -> Result<T> {
    serde_json::from_value(value).map_err(|e| Error::InvalidConfig(format!("{what}: {e}")))
}

/// A bare parameter object or a full run configuration.
fn load_run_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        None => RunConfig::from_params(default_params()),
        Some(path) => {
            let v = read_config_value(path)?;
            if v.get("params").is_some() {
                parse(v, "run configuration")?
            } else {
                RunConfig::from_params(parse(v, "parameters")?)
            }
        }
    };
    if let Some(s) = seed_override(cli)? {
        cfg.seed = s;
    }
    Ok(cfg)
}

/// Loads a plan from `--config`; a bare parameter object replaces the
/// parameters of the default plan.
fn load_plan<T, F>(cli: &Cli, default: F, set_params: fn(&mut T, ExperimentParams)) -> Result<T>
where
    T: serde::de::DeserializeOwned,
    F: Fn() -> T,
{
    match &cli.config {
        None => Ok(default()),
        Some(path) => {
            let v = read_config_value(path)?;
            if v.get("coupling_a").is_some() {
                let mut plan = default();
                set_params(&mut plan, parse(v, "parameters")?);
                Ok(plan)
            } else {
                parse(v, "plan")
            }
        }
    }
}

fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Spectrum { lo_hz, hi_hz, points } => cmd_spectrum(cli, *lo_hz, *hi_hz, *points),
        Command::Simulate {
            realizations,
            duration_s,
            all_trajectories,
            trajectory_csv,
        } => cmd_simulate(cli, *realizations, *duration_s, *all_trajectories, *trajectory_csv),
        Command::Fit {
            input,
            lo_hz,
            hi_hz,
            no_mirror,
        } => cmd_fit(cli, input, *lo_hz, *hi_hz, *no_mirror),
        Command::Decompose {
            coherent,
            squeezed,
            eps_z,
            eps_z_err,
            gamma_hz,
        } => cmd_decompose(cli, coherent, squeezed, *eps_z, *eps_z_err, *gamma_hz),
        Command::Sweep { dry_run } => cmd_sweep(cli, *dry_run),
        Command::Fig2 => cmd_fig2(cli),
        Command::Fig3 => cmd_fig3(cli),
        Command::Fig4 => cmd_fig4(cli),
    }
}

fn out_path(cli: &Cli, name: &str) -> PathBuf {
    cli.out.join(name)
}

fn announce(path: &Path) {
    log::info!("wrote {}", path.display());
}

fn emit(cli: &Cli, name: &str, text: &str) -> Result<()> {
    let p = out_path(cli, name);
    write_atomic(&p, text.as_bytes())?;
    announce(&p);
    Ok(())
}

fn emit_json<T: Serialize>(cli: &Cli, name: &str, value: &T) -> Result<()> {
    let p = out_path(cli, name);
    write_json(&p, value)?;
    announce(&p);
    Ok(())
}

fn cmd_spectrum(cli: &Cli, lo: Option<f64>, hi: Option<f64>, points: Option<usize>) -> Result<()> {
    let cfg = load_run_config(cli)?;
    let p = cfg.params;
    validate(&p, Context::Analytic)?;
    let default = cfg.grid.unwrap_or(GridSpec {
        lo_hz: (p.larmor_hz - 20.0 * p.gamma_hz).max(0.0),
        hi_hz: p.larmor_hz + 20.0 * p.gamma_hz,
        points: 801,
    });
    let (lo, hi, n) = (
        lo.unwrap_or(default.lo_hz),
        hi.unwrap_or(default.hi_hz),
        points.unwrap_or(default.points),
    );
    if n < 2 || !(hi > lo) {
        return Err(Error::InvalidConfig(
            "grid needs hi > lo and at least 2 points".into(),
        ));
    }
    let freq: Vec<f64> = (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect();
    let psd = spectrum_phi_grid(&p, &freq)?;
    let terms: Vec<_> = freq.iter().map(|&f| phi_terms(&p, f)).collect();
    match cli.format {
        Format::Csv => {
            let header = csv_header(Some(p.hash64()), &[]);
            let text = csv_table(
                &header,
                &["freq_Hz", "psd", "floor", "backaction", "projection", "technical"],
                (0..n).map(|i| {
                    let t = terms[i];
                    vec![freq[i], psd[i], t.floor, t.backaction, t.projection, t.technical]
                }),
            );
            emit(cli, "spectrum.csv", &text)
        }
        Format::Json => emit_json(
            cli,
            "spectrum.json",
            &json!({
                "convention": CONVENTION_TAG,
                "params_hash": format!("{:016x}", p.hash64()),
                "params": p,
                "freq_Hz": freq,
                "psd": psd,
                "terms": terms,
            }),
        ),
    }
}

fn cmd_simulate(
    cli: &Cli,
    realizations: Option<usize>,
    duration_s: Option<f64>,
    all: bool,
    traj_csv: bool,
) -> Result<()> {
    let mut cfg = load_run_config(cli)?;
    if let Some(r) = realizations {
        cfg.realizations = r;
    }
    if let Some(d) = duration_s {
        cfg.sim.duration_s = d;
    }
    let p = cfg.params;
    let config = cfg.sim.config(&p, cfg.seed);
    let hash = p.hash64();
    let welch = Welch::new(cfg.analysis.welch(&p, config.dt_s))?;
    if welch.options().segment_len > config.n_samples() {
        return Err(Error::SegmentTooLong {
            segment: welch.options().segment_len,
            len: config.n_samples(),
        });
    }
    std::fs::create_dir_all(&cli.out)?;
    let parts = sde::map_ensemble(&p, &config, cfg.realizations, |t| -> Result<_> {
        if all || t.realization == 0 {
            let stem = format!("trajectory_{:04}", t.realization);
            write_atomic(&out_path(cli, &format!("{stem}.bin")), &trajectory_to_bytes(&t, hash))?;
            if traj_csv {
                write_atomic(
                    &out_path(cli, &format!("{stem}.csv")),
                    trajectory_to_csv(&t, hash).as_bytes(),
                )?;
            }
        }
        welch.accumulate(&t.sy_out, t.dt_s)
    })?
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let spectrum = welch.finish(&parts, config.dt_s)?;
    match cli.format {
        Format::Csv => emit(cli, "psd.csv", &spectrum_to_csv(&spectrum, Some(hash)))?,
        Format::Json => emit_json(
            cli,
            "psd.json",
            &json!({ "params_hash": format!("{hash:016x}"), "spectrum": spectrum }),
        )?,
    }
    println!(
        "simulated {} realization(s) of {} s at dt = {:e} s; {} segments averaged",
        cfg.realizations, config.duration_s, config.dt_s, spectrum.n_avg
    );
    Ok(())
}

/// Reads `psd.json` as written by `simulate` as well as plain spectra.
fn read_spectrum_any(path: &Path) -> Result<crate::model::Spectrum> {
    if path.extension().is_some_and(|e| e == "json") {
        let v = read_config_value(path)?;
        if let Some(s) = v.get("spectrum") {
            let s: crate::model::Spectrum = parse(s.clone(), "spectrum")?;
            s.check()?;
            return Ok(s);
        }
    }
    read_spectrum(path)
}

fn fit_table(fit: &LorentzianFit) -> String {
    let header = csv_header(
        None,
        &[
            ("chi2_red", num(fit.chi2_red)),
            ("n_bins", fit.n_bins.to_string()),
            ("window_Hz", format!("{}|{}", num(fit.window_hz[0]), num(fit.window_hz[1]))),
        ],
    );
    let values = [fit.floor, fit.center_hz, fit.hwhm_hz, fit.area];
    let mut out = header;
    out.push_str("parameter,value,stderr\n");
    for (i, name) in crate::spectral::fit::PARAM_NAMES.iter().enumerate() {
        out.push_str(&format!("{name},{},{}\n", num(values[i]), num(fit.stderr(i))));
    }
    out
}

fn cmd_fit(cli: &Cli, input: &Path, lo: Option<f64>, hi: Option<f64>, no_mirror: bool) -> Result<()> {
    let spectrum = read_spectrum_any(input)?;
    let window = match (lo, hi) {
        (Some(lo), Some(hi)) => FitOptions::window(lo, hi),
        (None, None) if cli.config.is_some() => {
            let cfg = load_run_config(cli)?;
            cfg.analysis.fit_options(&cfg.params)
        }
        _ => {
            return Err(Error::InvalidConfig(
                "give --lo-hz and --hi-hz, or --config with the parameters".into(),
            ))
        }
    };
    let opts = FitOptions {
        mirror: !no_mirror,
        ..window
    };
    let fit = fit_lorentzian(&spectrum, &opts)?;
    match cli.format {
        Format::Csv => emit(cli, "fit.csv", &fit_table(&fit))?,
        Format::Json => emit_json(cli, "fit.json", &fit)?,
    }
    println!(
        "center {} Hz, hwhm {} ± {} Hz, area {} ± {}, floor {} ± {}",
        num(fit.center_hz),
        num(fit.hwhm_hz),
        num(fit.stderr(2)),
        num(fit.area),
        num(fit.stderr(3)),
        num(fit.floor),
        num(fit.stderr(0)),
    );
    Ok(())
}

fn read_fit(path: &Path) -> Result<LorentzianFit> {
    let v = read_config_value(path)?;
    let fit: LorentzianFit = parse(v, "fit")?;
    if fit.convention != CONVENTION_TAG {
        return Err(Error::Format(format!(
            "fit convention `{}` differs from `{CONVENTION_TAG}`",
            fit.convention
        )));
    }
    Ok(fit)
}

/// Flat record of a decomposition.
pub fn noise_areas_record(a: &NoiseAreas) -> serde_json::Value {
    let mut m = serde_json::Map::new();
    m.insert("convention".into(), json!(a.convention));
    let mut put = |name: &str, v: Option<Measured>| {
        if let Some(v) = v {
            m.insert(name.into(), json!(v.value));
            m.insert(format!("{name}_stderr"), json!(v.stderr));
        }
    };
    put("a_total", Some(a.a_total));
    put("a_squeezed", Some(a.a_squeezed));
    put("eps_z", Some(a.eps_z));
    put("bana", Some(a.bana));
    put("rsn", Some(a.rsn));
    put("snl", a.snl);
    put("pna_inferred", a.pna_inferred);
    serde_json::Value::Object(m)
}

fn measured_table(header: &str, rows: &[(&str, Measured)]) -> String {
    let mut out = String::from(header);
    out.push_str("quantity,value,stderr\n");
    for (name, m) in rows {
        out.push_str(&format!("{name},{},{}\n", num(m.value), num(m.stderr)));
    }
    out
}

fn cmd_decompose(
    cli: &Cli,
    coherent: &Path,
    squeezed: &Path,
    eps_z: f64,
    eps_z_err: f64,
    gamma_hz: Option<f64>,
) -> Result<()> {
    let coh = read_fit(coherent)?;
    let sq = read_fit(squeezed)?;
    let gamma = match gamma_hz {
        Some(g) => Measured::exact(g),
        None => Measured::new(coh.hwhm_hz, coh.stderr(2)),
    };
    let areas = decompose(coh.area_measured(), sq.area_measured(), Measured::new(eps_z, eps_z_err))?;
    let areas = if areas.bana.value > 0.0 {
        areas.with_inferred_pna(coh.floor_measured(), gamma)?
    } else {
        log::warn!("BANA is not positive; projection noise not inferred");
        areas
    };
    match cli.format {
        Format::Csv => {
            let mut rows = vec![
                ("a_total", areas.a_total),
                ("a_squeezed", areas.a_squeezed),
                ("eps_z", areas.eps_z),
                ("bana", areas.bana),
                ("rsn", areas.rsn),
            ];
            rows.extend(areas.snl.map(|v| ("snl", v)));
            rows.extend(areas.pna_inferred.map(|v| ("pna_inferred", v)));
            emit(cli, "noise_areas.csv", &measured_table(&csv_header(None, &[]), &rows))?;
        }
        Format::Json => emit_json(cli, "noise_areas.json", &noise_areas_record(&areas))?,
    }
    println!(
        "BANA {} ± {}, RSN {} ± {}",
        num(areas.bana.value),
        num(areas.bana.stderr),
        num(areas.rsn.value),
        num(areas.rsn.stderr)
    );
    if let Some(p) = areas.pna_inferred {
        println!("PNA (inferred) {} ± {}", num(p.value), num(p.stderr));
    }
    Ok(())
}

fn cmd_sweep(cli: &Cli, dry_run: bool) -> Result<()> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("sweep needs --config <plan.json>".into()))?;
    let mut plan: SweepPlan = parse(read_config_value(path)?, "sweep plan")?;
    if let Some(s) = seed_override(cli)? {
        plan.seed = s;
    }
    plan.dry_run |= dry_run;
    let result = run_sweep(&plan)?;
    write_sweep(cli, &plan, &result)?;
    let ok = result.successful().count();
    for (label, law) in [("BANA", &result.bana), ("PNA", &result.pna)] {
        println!(
            "{label} exponent vs {}: {:.3} ± {:.3} (chi2_red {:.2}, {ok}/{} points)",
            result.axis.name(),
            law.exponent.value,
            law.exponent.stderr,
            law.chi2_red,
            result.points.len()
        );
    }
    for p in result.points.iter().filter(|p| p.error.is_some()) {
        println!("failed point {} = {}: {}", result.axis.name(), num(p.x), p.error.as_deref().unwrap_or(""));
    }
    Ok(())
}

fn write_sweep(cli: &Cli, plan: &SweepPlan, result: &ScalingResult) -> Result<()> {
    let hash = plan.base.hash64();
    match cli.format {
        Format::Json => emit_json(cli, "sweep.json", result),
        Format::Csv => {
            let laws = |name: &str, l: &crate::harness::PowerLaw| {
                vec![
                    (format!("{name}_exponent"), num(l.exponent.value)),
                    (format!("{name}_exponent_stderr"), num(l.exponent.stderr)),
                    (format!("{name}_chi2_red"), num(l.chi2_red)),
                ]
            };
            let extra: Vec<(String, String)> = [("axis".to_string(), result.axis.name().to_string())]
                .into_iter()
                .chain(laws("bana", &result.bana))
                .chain(laws("pna", &result.pna))
                .collect();
            let extra: Vec<(&str, String)> = extra.iter().map(|(k, v)| (k.as_str(), v.clone())).collect();
            let header = csv_header(Some(hash), &extra);
            let rows = result.successful().map(|(x, a)| {
                let pna = a.pna_inferred.expect("successful point");
                vec![
                    x,
                    a.a_total.value,
                    a.a_total.stderr,
                    a.a_squeezed.value,
                    a.a_squeezed.stderr,
                    a.bana.value,
                    a.bana.stderr,
                    a.rsn.value,
                    a.rsn.stderr,
                    pna.value,
                    pna.stderr,
                ]
            });
            let x_name = result.axis.name();
            emit(
                cli,
                "sweep_points.csv",
                &csv_table(
                    &header,
                    &[
                        x_name, "a_coh", "a_coh_err", "a_sq", "a_sq_err", "bana", "bana_err", "rsn", "rsn_err",
                        "pna", "pna_err",
                    ],
                    rows,
                ),
            )?;
            for (name, pick) in [
                ("sweep_bana.csv", (|a: &NoiseAreas| a.bana) as fn(&NoiseAreas) -> Measured),
                ("sweep_pna.csv", |a: &NoiseAreas| a.pna_inferred.expect("successful point")),
            ] {
                let pts: Vec<_> = result
                    .successful()
                    .map(|(x, a)| {
                        let m = pick(a);
                        (x, m.value, Some(m.stderr))
                    })
                    .collect();
                emit(cli, name, &plot_csv(&csv_header(Some(hash), &[]), [x_name, "y", "yerr"], &pts))?;
            }
            Ok(())
        }
    }
}

pub fn default_fig2_plan() -> Fig2Plan {
    Fig2Plan {
        params: default_params(),
        sim: SimSettings::default(),
        realizations: 100,
        seed: 2,
        analysis: AnalysisOptions::default(),
        wing_band_hz: None,
    }
}

/// Technical noise equal to projection noise at the smallest decay rate.
pub fn default_fig3_plan() -> Fig3Plan {
    let mut params = default_params();
    let gammas = vec![40.0, 80.0, 160.0, 320.0];
    params.tech_noise_k = 2.0 * std::f64::consts::PI * gammas[0] * params.spin_jx;
    Fig3Plan {
        params,
        gamma_grid_hz: gammas,
        sim: SimSettings::default(),
        realizations: 60,
        seed: 3,
        analysis: AnalysisOptions::default(),
        eps_z_stderr: 0.0,
    }
}

pub fn default_fig4_plan() -> Fig4Plan {
    Fig4Plan {
        params: default_params(),
        gammas_hz: vec![132.0, 242.5],
        jx_grid: vec![0.5e10, 1.0e10, 1.5e10, 2.0e10],
        sim: SimSettings::default(),
        realizations: 40,
        seed: 4,
        analysis: AnalysisOptions::default(),
        eps_z_stderr: 0.0,
    }
}

fn cmd_fig2(cli: &Cli) -> Result<()> {
    let mut plan = load_plan(cli, default_fig2_plan, |p, v| p.params = v)?;
    if let Some(s) = seed_override(cli)? {
        plan.seed = s;
    }
    let r = reproduce_fig2(&plan)?;
    write_fig2(cli, &plan, &r)?;
    let a = &r.annotations;
    println!(
        "wing ratio {:.4} ± {:.4} (expected {}), area ratio {:.3} ± {:.3} (expected {:.3})",
        a.wing_ratio.value,
        a.wing_ratio.stderr,
        a.wing_ratio_expected,
        a.area_ratio.value,
        a.area_ratio.stderr,
        a.area_ratio_expected
    );
    Ok(())
}

fn write_fig2(cli: &Cli, plan: &Fig2Plan, r: &Fig2Result) -> Result<()> {
    let hash = plan.params.hash64();
    match cli.format {
        Format::Json => emit_json(cli, "fig2.json", r),
        Format::Csv => {
            emit(cli, "fig2_coherent.csv", &spectrum_to_csv(&r.coherent, Some(plan.params.coherent().hash64())))?;
            emit(cli, "fig2_squeezed.csv", &spectrum_to_csv(&r.squeezed, Some(hash)))?;
            let a = &r.annotations;
            let header = csv_header(
                Some(hash),
                &[(
                    "wing_band_Hz",
                    format!("{}|{}", num(a.wing_band_hz[0]), num(a.wing_band_hz[1])),
                )],
            );
            let rows = [
                ("wing_coherent", a.wing_coherent),
                ("wing_squeezed", a.wing_squeezed),
                ("wing_ratio", a.wing_ratio),
                ("wing_ratio_expected", Measured::exact(a.wing_ratio_expected)),
                ("area_coherent", a.area_coherent),
                ("area_squeezed", a.area_squeezed),
                ("area_ratio", a.area_ratio),
                ("area_ratio_expected", Measured::exact(a.area_ratio_expected)),
            ];
            emit(cli, "fig2_annotations.csv", &measured_table(&header, &rows))
        }
    }
}

fn cmd_fig3(cli: &Cli) -> Result<()> {
    let mut plan = load_plan(cli, default_fig3_plan, |p, v| p.params = v)?;
    if let Some(s) = seed_override(cli)? {
        plan.seed = s;
    }
    let r = reproduce_fig3(&plan)?;
    write_fig3(cli, &plan, &r)?;
    println!("gamma_Hz  BANA·Γ  RSN/PNA");
    for row in &r.rows {
        println!(
            "{:>8}  {:.4e} ± {:.1e}  {:.3} ± {:.3}",
            row.gamma_hz,
            row.bana_times_gamma.value,
            row.bana_times_gamma.stderr,
            row.rsn_over_pna.value,
            row.rsn_over_pna.stderr
        );
    }
    println!(
        "BANA exponent vs gamma_Hz: {:.3} ± {:.3}",
        r.bana_vs_gamma.exponent.value, r.bana_vs_gamma.exponent.stderr
    );
    Ok(())
}

fn write_fig3(cli: &Cli, plan: &Fig3Plan, r: &Fig3Result) -> Result<()> {
    let hash = plan.params.hash64();
    match cli.format {
        Format::Json => emit_json(cli, "fig3.json", r),
        Format::Csv => {
            let header = csv_header(
                Some(hash),
                &[
                    ("bana_exponent", num(r.bana_vs_gamma.exponent.value)),
                    ("bana_exponent_stderr", num(r.bana_vs_gamma.exponent.stderr)),
                ],
            );
            emit(
                cli,
                "fig3.csv",
                &csv_table(
                    &header,
                    &[
                        "gamma_Hz", "bana", "bana_err", "rsn", "rsn_err", "pna_inferred", "pna_err",
                        "pna_closed_form", "rsn_over_pna", "rsn_over_pna_err",
                    ],
                    r.rows.iter().map(|w| {
                        vec![
                            w.gamma_hz,
                            w.bana.value,
                            w.bana.stderr,
                            w.rsn.value,
                            w.rsn.stderr,
                            w.pna_inferred.value,
                            w.pna_inferred.stderr,
                            w.pna_closed_form,
                            w.rsn_over_pna.value,
                            w.rsn_over_pna.stderr,
                        ]
                    }),
                ),
            )?;
            for (name, pick) in [
                ("fig3_bana.csv", (|w: &crate::harness::figures::Fig3Row| w.bana) as fn(&_) -> Measured),
                ("fig3_rsn.csv", |w| w.rsn),
                ("fig3_pna.csv", |w| w.pna_inferred),
            ] {
                let pts: Vec<_> = r
                    .rows
                    .iter()
                    .map(|w| {
                        let m = pick(w);
                        (w.gamma_hz, m.value, Some(m.stderr))
                    })
                    .collect();
                emit(cli, name, &plot_csv(&csv_header(Some(hash), &[]), ["gamma_Hz", "y", "yerr"], &pts))?;
            }
            Ok(())
        }
    }
}

fn cmd_fig4(cli: &Cli) -> Result<()> {
    let mut plan = load_plan(cli, default_fig4_plan, |p, v| p.params = v)?;
    if let Some(s) = seed_override(cli)? {
        plan.seed = s;
    }
    let r = reproduce_fig4(&plan)?;
    write_fig4(cli, &plan, &r)?;
    println!(
        "joint line: slope {:.4e} ± {:.1e}, intercept {:.3e} ± {:.1e}, chi2_red {:.2} ({} dof)",
        r.joint_line.slope.value,
        r.joint_line.slope.stderr,
        r.joint_line.intercept.value,
        r.joint_line.intercept.stderr,
        r.joint_line.chi2_red,
        r.joint_line.dof
    );
    Ok(())
}

fn write_fig4(cli: &Cli, plan: &Fig4Plan, r: &Fig4Result) -> Result<()> {
    match cli.format {
        Format::Json => emit_json(cli, "fig4.json", r),
        Format::Csv => {
            let l = &r.joint_line;
            let header = csv_header(
                Some(plan.params.hash64()),
                &[
                    ("slope", num(l.slope.value)),
                    ("slope_stderr", num(l.slope.stderr)),
                    ("intercept", num(l.intercept.value)),
                    ("intercept_stderr", num(l.intercept.stderr)),
                    ("chi2_red", num(l.chi2_red)),
                ],
            );
            let rows = r.series.iter().flat_map(|s| {
                s.points.iter().map(move |p| {
                    vec![s.gamma_hz, p.spin_jx, p.pna_inferred.value, p.pna_inferred.stderr, p.pna_closed_form]
                })
            });
            emit(
                cli,
                "fig4.csv",
                &csv_table(&header, &["gamma_Hz", "spin_Jx", "pna_inferred", "pna_err", "pna_closed_form"], rows),
            )
        }
    }
}
