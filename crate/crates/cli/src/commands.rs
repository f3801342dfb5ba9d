use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use clap::{Args, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use tubewave::operators::SigmaOptions;
use tubewave::quasimode_lab::{
    counterexample_ratio, helmholtz_best_constant, random_quasimode_suite, ForcingWeight, QuasimodeSuiteConfig,
};
use tubewave::spectral_scan::{
    fit_records, max_shortfall, predicted_exponent, run_resolvent_scan, slope_drift, ResolutionRule, ScanConfig,
};
use tubewave::wave_evolver::{DecayConfig, TrappedData};

use crate::config::{self, Common, ConfigFile};
use crate::output::{config_hash, emit_plot_data, Cell, CsvTable, ExperimentManifest, PlotKind};
use crate::{usage, Cli, Command};

/// Ratios above this budget in the randomized quasimode suite are reported.
const QUASIMODE_BUDGET: f64 = 50.0;

/// Slope drift beyond which a scan is reported as pre-asymptotic.
const CURVATURE_FLAG: f64 = 0.1;

const TORUS_NOTE: &str = "flat product torus; both factors are flat tori, which is a modelling choice";

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct ResolventArgs {
    /// Damping exponent [default: 1].
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Smallest h [default: 2^-9].
    #[arg(long)]
    pub h_min: Option<f64>,
    /// Largest h [default: 2^-4].
    #[arg(long)]
    pub h_max: Option<f64>,
    /// Number of geometrically spaced h values [default: 6].
    #[arg(long)]
    pub points: Option<usize>,
    /// Minimum points on the undamped circle [default: 64].
    #[arg(long)]
    pub trapped_min_points: Option<usize>,
    /// Points on the undamped circle per unit of 1/h [default: 16].
    #[arg(long)]
    pub points_per_unit: Option<f64>,
    /// Points on the damped circle [default: 128].
    #[arg(long)]
    pub damped_points: Option<usize>,
    /// Relative tolerance of the singular value solver [default: 1e-6].
    #[arg(long)]
    pub tolerance: Option<f64>,
    /// Seed of the iterative solver's start vectors.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightArg {
    Semiclassical,
    Unit,
}

impl From<WeightArg> for ForcingWeight {
    fn from(w: WeightArg) -> Self {
        match w {
            WeightArg::Semiclassical => ForcingWeight::Semiclassical,
            WeightArg::Unit => ForcingWeight::Unit,
        }
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct HelmholtzArgs {
    /// Comma-separated tau values [default: -100,0,100,1000,10000].
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub taus: Option<Vec<f64>>,
    /// Radius of the inner ball [default: 1].
    #[arg(long)]
    pub inner: Option<f64>,
    /// Radius of the outer ball [default: 2].
    #[arg(long)]
    pub outer: Option<f64>,
    /// Weight of the forcing norm [default: semiclassical].
    #[arg(long, value_enum)]
    pub weight: Option<WeightArg>,
    /// Grid points on the circle [default: 256].
    #[arg(long)]
    pub resolution: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct WaveArgs {
    /// Damping exponent [default: 1].
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Points per axis [default: 128].
    #[arg(long)]
    pub resolution: Option<usize>,
    /// Circumference of the undamped circle [default: 2π/8].
    #[arg(long)]
    pub trapped_circumference: Option<f64>,
    /// Circumference of the damped circle [default: 2π].
    #[arg(long)]
    pub damped_circumference: Option<f64>,
    /// Fourier modes in the initial data [default: 63].
    #[arg(long)]
    pub modes: Option<usize>,
    /// Amplitude decay k^-p of the initial data [default: 2.5].
    #[arg(long)]
    pub exponent: Option<f64>,
    /// Time step as a fraction of the stability limit [default: 0.9].
    #[arg(long)]
    pub cfl: Option<f64>,
    /// Final time [default: 100].
    #[arg(long)]
    pub t_final: Option<f64>,
    /// End of the fit window [default: 100].
    #[arg(long)]
    pub fit_end: Option<f64>,
    /// Steps between energy samples [default: 20].
    #[arg(long)]
    pub sample_every: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct SphereArgs {
    /// Sphere dimension [default: 2].
    #[arg(long)]
    pub d: Option<u32>,
    /// Tube radius exponent: β = h^δ [default: 0.25].
    #[arg(long)]
    pub delta: Option<f64>,
    /// Comma-separated, strictly increasing degrees [default: 100,1000,10000].
    #[arg(long, value_delimiter = ',')]
    pub n: Option<Vec<u64>>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct QuasimodeArgs {
    /// Random trials [default: 1000].
    #[arg(long)]
    pub trials: Option<usize>,
    /// Generator seed [default: 20150101].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Semiclassical parameter [default: 2^-6].
    #[arg(long)]
    pub h: Option<f64>,
    /// Tube radius exponent [default: 0.25].
    #[arg(long)]
    pub delta: Option<f64>,
    /// Maximum Fourier modes per trial [default: 20].
    #[arg(long)]
    pub max_modes: Option<usize>,
    /// Points per axis [default: 256].
    #[arg(long)]
    pub resolution: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct ReportArgs {
    /// Directory holding manifests [default: the output directory].
    #[arg(long)]
    pub dir: Option<PathBuf>,
}

struct Run {
    common: Common,
    start: Instant,
    started_unix: u64,
}

impl Run {
    fn seconds(&self, measured: f64) -> f64 {
        if self.common.no_timing {
            0.0
        } else {
            measured
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.common.out.join(name)
    }

    #[allow(clippy::too_many_arguments)]
    fn finish<C: Serialize>(
        &self,
        kind: &str,
        config: &C,
        seed: Option<u64>,
        geometry: String,
        outputs: &[&Path],
        summary: Value,
    ) -> Result<PathBuf> {
        let config_value = serde_json::to_value(config)?;
        let manifest = ExperimentManifest {
            kind: kind.to_string(),
            config_hash: config_hash(&json!({ "kind": kind, "config": &config_value }))?,
            config: config_value,
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            wall_clock_seconds: (!self.common.no_timing).then(|| self.start.elapsed().as_secs_f64()),
            started_unix: (!self.common.no_timing).then_some(self.started_unix),
            geometry,
            outputs: outputs
                .iter()
                .map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default())
                .collect(),
            summary,
        };
        manifest.write(&self.common.out)
    }
}

pub(crate) fn dispatch(cli: Cli) -> Result<()> {
    let name = cli.command.name();
    let file = config::load(cli.common.config.as_deref(), name)?;
    let common = config::common(&cli.common, &file)?;
    std::fs::create_dir_all(&common.out).with_context(|| format!("creating {}", common.out.display()))?;
    let run = Run {
        start: Instant::now(),
        started_unix: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        common,
    };
    let go = || execute(&cli.command, &file, &run);
    match run.common.threads {
        Some(n) => rayon::ThreadPoolBuilder::new().num_threads(n).build().context("building worker pool")?.install(go),
        None => go(),
    }
}

fn execute(command: &Command, file: &ConfigFile, run: &Run) -> Result<()> {
    match command {
        Command::ResolventScan(a) => resolvent_scan(&config::merge(a, file)?, run),
        Command::HelmholtzConstant(a) => helmholtz_constant(&config::merge(a, file)?, run),
        Command::WaveDecay(a) => wave_decay(&config::merge(a, file)?, run),
        Command::SphereTube(a) => sphere_tube(&config::merge(a, file)?, run),
        Command::QuasimodeCheck(a) => quasimode_check(&config::merge(a, file)?, run),
        Command::Report(a) => report(&config::merge(a, file)?, run),
    }
}

pub fn scan_config(a: &ResolventArgs) -> Result<ScanConfig> {
    let gamma = a.gamma.unwrap_or(1.0);
    let h_min = a.h_min.unwrap_or(2f64.powi(-9));
    let h_max = a.h_max.unwrap_or(2f64.powi(-4));
    let mut c = ScanConfig::geometric(gamma, h_min, h_max, a.points.unwrap_or(6))?;
    let defaults = ScanConfig::dyadic(gamma, 4, 9);
    c.trapped_resolution = ResolutionRule::new(
        a.trapped_min_points.unwrap_or(defaults.trapped_resolution.min_points),
        a.points_per_unit.unwrap_or(defaults.trapped_resolution.points_per_unit),
    );
    c.damped_resolution = a.damped_points.map(ResolutionRule::fixed).unwrap_or(defaults.damped_resolution);
    let base = SigmaOptions::default();
    c.sigma = SigmaOptions { tolerance: a.tolerance.unwrap_or(base.tolerance), seed: a.seed.unwrap_or(base.seed), ..base };
    c.validate()?;
    Ok(c)
}

fn resolvent_scan(a: &ResolventArgs, run: &Run) -> Result<()> {
    let config = scan_config(a)?;
    let records = run_resolvent_scan(&config)?;
    let mut table = CsvTable::new(vec!["h", "sigma_min", "resolution", "seconds"]);
    for r in &records {
        let res = r.resolution.iter().map(|n| n.to_string()).collect::<Vec<_>>().join("x");
        table.push(vec![Cell::Float(r.parameter), Cell::Float(r.value), Cell::Text(res), Cell::Float(run.seconds(r.seconds))]);
    }
    let csv = run.path("resolvent_scan.csv");
    table.write(&csv)?;
    let pts: Vec<(f64, f64)> = records.iter().map(|r| (r.parameter, r.value)).collect();
    let plot = emit_plot_data(&pts, PlotKind::Resolvent, &run.path("resolvent_scan"))?;
    let fit = fit_records(&records)?;
    let predicted = predicted_exponent(config.gamma)?;
    let drift = slope_drift(&records).ok();
    let pre_asymptotic = drift.is_some_and(|d| d.abs() > CURVATURE_FLAG);
    println!(
        "resolvent-scan: {} records, fitted exponent {:.4} (predicted {:.4}), r² {:.5}{}",
        records.len(),
        fit.exponent,
        predicted,
        fit.r_squared,
        if pre_asymptotic { ", pre-asymptotic curvature flagged" } else { "" }
    );
    let summary = json!({
        "headline": { "name": "exponent", "value": fit.exponent },
        "fit": fit,
        "predicted_exponent": predicted,
        "slope_drift": drift,
        "pre_asymptotic_curvature": pre_asymptotic,
        "max_shortfall_in_rms_units": max_shortfall(&records, &fit),
    });
    let geometry = format!(
        "{TORUS_NOTE}: (R/2πZ) x (R/2πZ), trapped circle first; damping d^{} near q0 = {} with cutoff {}",
        2.0 * config.gamma,
        config.center,
        config.cutoff_radius
    );
    run.finish("resolvent-scan", &config, Some(config.sigma.seed), geometry, &[&csv, &plot.data, &plot.fit], summary)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct HelmholtzConfig {
    taus: Vec<f64>,
    inner: f64,
    outer: f64,
    weight: ForcingWeight,
    resolution: usize,
}

fn helmholtz_constant(a: &HelmholtzArgs, run: &Run) -> Result<()> {
    let config = HelmholtzConfig {
        taus: a.taus.clone().unwrap_or_else(|| vec![-100.0, 0.0, 1e2, 1e3, 1e4]),
        inner: a.inner.unwrap_or(1.0),
        outer: a.outer.unwrap_or(2.0),
        weight: a.weight.unwrap_or(WeightArg::Semiclassical).into(),
        resolution: a.resolution.unwrap_or(256),
    };
    if config.taus.is_empty() {
        return Err(usage("need at least one tau"));
    }
    let estimates = config
        .taus
        .par_iter()
        .map(|&tau| helmholtz_best_constant(tau, config.inner, config.outer, config.weight, config.resolution).map_err(|e| e.at(tau)))
        .collect::<tubewave::Result<Vec<_>>>()?;
    let mut table = CsvTable::new(vec!["tau", "best_constant", "sum_of_norms_bound"]);
    for e in &estimates {
        table.push(vec![Cell::Float(e.tau), Cell::Float(e.best_constant), Cell::Float(e.sum_of_norms_bound)]);
        println!("tau {:>12}: best constant {:.6} (sum-of-norms bound {:.6})", e.tau, e.best_constant, e.sum_of_norms_bound);
    }
    let csv = run.path("helmholtz_constant.csv");
    table.write(&csv)?;
    let finite: Vec<f64> = estimates.iter().map(|e| e.best_constant).filter(|c| c.is_finite()).collect();
    let max = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = finite.iter().copied().fold(f64::INFINITY, f64::min);
    let argmax = estimates.iter().find(|e| e.best_constant == max).map(|e| e.tau);
    let resonant: Vec<f64> = estimates.iter().filter(|e| e.resonant_mode.is_some()).map(|e| e.tau).collect();
    println!("max/min over the sweep {:.4}, maximum at tau = {:?}", max / min, argmax);
    let summary = json!({
        "headline": { "name": "max_over_min", "value": max / min },
        "max_over_min": max / min,
        "argmax_tau": argmax,
        "resonant_taus": resonant,
        "sum_of_norms_factor": std::f64::consts::SQRT_2,
        "maximizer_norm_profiles": estimates.iter().map(|e| e.maximizer_norm_profile.to_vec()).collect::<Vec<_>>(),
    });
    let geometry = format!(
        "flat circle of circumference {} centered at 0: ball of radius {} and annulus out to {}",
        2.0 * config.outer,
        config.inner,
        config.outer
    );
    run.finish("helmholtz-constant", &config, None, geometry, &[&csv], summary)?;
    Ok(())
}

pub fn decay_config(a: &WaveArgs) -> DecayConfig {
    let d = DecayConfig::default();
    let n = a.resolution.unwrap_or(d.resolution[0]);
    DecayConfig {
        gamma: a.gamma.unwrap_or(d.gamma),
        trapped_circumference: a.trapped_circumference.unwrap_or(d.trapped_circumference),
        damped_circumference: a.damped_circumference.unwrap_or(d.damped_circumference),
        resolution: [n, n],
        data: TrappedData { modes: a.modes.unwrap_or(d.data.modes), exponent: a.exponent.unwrap_or(d.data.exponent) },
        cfl: a.cfl.unwrap_or(d.cfl),
        t_final: a.t_final.unwrap_or(d.t_final),
        fit_end: a.fit_end.unwrap_or(d.fit_end),
        sample_every: a.sample_every.unwrap_or(d.sample_every),
        ..d
    }
}

fn wave_decay(a: &WaveArgs, run: &Run) -> Result<()> {
    let config = decay_config(a);
    let result = config.run()?;
    let mut table = CsvTable::new(vec!["time", "energy", "sqrt_energy"]);
    for s in &result.trace.samples {
        table.push(vec![Cell::Float(s.time), Cell::Float(s.energy), Cell::Float(s.energy.sqrt())]);
    }
    let csv = run.path("wave_decay.csv");
    table.write(&csv)?;
    let (t0, t1) = result.window;
    let pts: Vec<(f64, f64)> = result
        .trace
        .samples
        .iter()
        .filter(|s| s.time >= t0 && s.time <= t1)
        .map(|s| (s.time, s.energy.sqrt()))
        .collect();
    let plot = emit_plot_data(&pts, PlotKind::EnergyTrace, &run.path("wave_decay"))?;
    let fit = result.fit;
    let in_band = (fit.predicted_exponent - 0.4..=fit.predicted_exponent + 0.4).contains(&fit.fit.exponent);
    println!(
        "wave-decay: fitted exponent {:.4} on [{t0:.3}, {t1}] (predicted {:.4}), r² {:.4}",
        fit.fit.exponent, fit.predicted_exponent, fit.fit.r_squared
    );
    let summary = json!({
        "headline": { "name": "exponent", "value": fit.fit.exponent },
        "fit": fit,
        "window": [t0, t1],
        "dt": result.dt,
        "steps": result.steps,
        "within_0.4_of_prediction": in_band,
        "initial_sobolev_proxy": result.trace.sobolev_proxy,
        "initial_data": format!(
            "u0 = sum_(k=1..{}) k^-{} cos(k x 2π/L1 + (k² mod 2π)), u1 = 0",
            config.data.modes, config.data.exponent
        ),
    });
    let geometry = format!(
        "{TORUS_NOTE}: circles of circumference {} (undamped) and {} (damped), {}x{} points",
        config.trapped_circumference, config.damped_circumference, config.resolution[0], config.resolution[1]
    );
    run.finish("wave-decay", &config, None, geometry, &[&csv, &plot.data, &plot.fit], summary)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct SphereConfig {
    d: u32,
    delta: f64,
    n: Vec<u64>,
}

fn sphere_tube(a: &SphereArgs, run: &Run) -> Result<()> {
    let config = SphereConfig {
        d: a.d.unwrap_or(2),
        delta: a.delta.unwrap_or(0.25),
        n: a.n.clone().unwrap_or_else(|| vec![100, 1000, 10000]),
    };
    if config.n.is_empty() {
        return Err(usage("need at least one n"));
    }
    let table_rows = counterexample_ratio(config.d, config.delta, &config.n)?;
    let mut table = CsvTable::new(vec!["n", "inner_mass", "annulus_mass", "ratio"]);
    for r in &table_rows.rows {
        table.push(vec![Cell::Int(r.n), Cell::Float(r.inner_mass), Cell::Float(r.annulus_mass), Cell::Float(r.ratio)]);
        println!("n {:>8}: inner {:.6e} annulus {:.6e} ratio {:.6e}", r.n, r.inner_mass, r.annulus_mass, r.ratio);
    }
    let csv = run.path("sphere_tube.csv");
    table.write(&csv)?;
    let mut outputs = vec![csv];
    let positive: Vec<(f64, f64)> = table_rows.rows.iter().filter(|r| r.n > 0).map(|r| (r.n as f64, r.ratio)).collect();
    if positive.len() >= 2 {
        let plot = emit_plot_data(&positive, PlotKind::SphereRatio, &run.path("sphere_tube"))?;
        outputs.push(plot.data);
        outputs.push(plot.fit);
    }
    let rows = &table_rows.rows;
    let growth = rows.last().map(|l| l.ratio / rows[0].ratio).unwrap_or(1.0);
    let summary = json!({
        "headline": { "name": "ratio_growth", "value": growth },
        "ratio_growth": growth,
        "strictly_increasing": table_rows.strictly_increasing,
    });
    let geometry = format!("unit sphere S^{}, tube of radius h_n^{} around a great circle, one-dimensional integrals", config.d, config.delta);
    let refs: Vec<&Path> = outputs.iter().map(|p| p.as_path()).collect();
    run.finish("sphere-tube", &config, None, geometry, &refs, summary)?;
    Ok(())
}

fn quasimode_check(a: &QuasimodeArgs, run: &Run) -> Result<()> {
    let d = QuasimodeSuiteConfig::default();
    let config = QuasimodeSuiteConfig {
        trials: a.trials.unwrap_or(d.trials),
        seed: a.seed.unwrap_or(d.seed),
        h: a.h.unwrap_or(d.h),
        delta: a.delta.unwrap_or(d.delta),
        max_modes: a.max_modes.unwrap_or(d.max_modes),
        resolution: a.resolution.unwrap_or(d.resolution),
    };
    if config.trials == 0 {
        return Err(usage("need at least one trial"));
    }
    let report = random_quasimode_suite(&config)?;
    let mut table = CsvTable::new(vec!["trial", "ratio", "running_max"]);
    let mut running = 0.0f64;
    for (i, r) in report.ratios.iter().enumerate() {
        running = running.max(*r);
        table.push(vec![Cell::Int(i as u64), Cell::Float(*r), Cell::Float(running)]);
    }
    let csv = run.path("quasimode_check.csv");
    table.write(&csv)?;
    let within = report.c_obs <= QUASIMODE_BUDGET;
    println!("quasimode-check: observed constant {:.4} over {} trials (budget {QUASIMODE_BUDGET})", report.c_obs, config.trials);
    let summary = json!({
        "headline": { "name": "c_obs", "value": report.c_obs },
        "c_obs": report.c_obs,
        "budget": QUASIMODE_BUDGET,
        "within_budget": within,
    });
    let geometry = format!("{TORUS_NOTE}: (R/2πZ) x (R/2πZ), {0}x{0} points, tube around q0 = 0", config.resolution);
    run.finish("quasimode-check", &config, Some(config.seed), geometry, &[&csv], summary)?;
    if !within {
        return Err(usage(format!("observed constant {} exceeds the budget {QUASIMODE_BUDGET}", report.c_obs)));
    }
    Ok(())
}

fn report(a: &ReportArgs, run: &Run) -> Result<()> {
    let dir = a.dir.clone().unwrap_or_else(|| run.common.out.clone());
    let entries = std::fs::read_dir(&dir).map_err(|e| usage(format!("cannot read {}: {e}", dir.display())))?;
    let own = ExperimentManifest::file_name("report");
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.to_string_lossy().ends_with(".manifest.json") && p.file_name().is_some_and(|n| n.to_string_lossy() != own))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(usage(format!("no manifests in {}", dir.display())));
    }
    let mut table = CsvTable::new(vec!["kind", "config_hash", "outputs", "headline", "value"]);
    let mut kinds = Vec::new();
    for p in &paths {
        let m = ExperimentManifest::read(p)?;
        let name = m.summary["headline"]["name"].as_str().unwrap_or("").to_string();
        let value = m.summary["headline"]["value"].as_f64().unwrap_or(f64::NAN);
        println!("{:<20} {:<16} {} = {:.6}", m.kind, &m.config_hash[..16.min(m.config_hash.len())], name, value);
        table.push(vec![
            Cell::Text(m.kind.clone()),
            Cell::Text(m.config_hash.clone()),
            Cell::Text(m.outputs.join(";")),
            Cell::Text(name),
            Cell::Float(value),
        ]);
        kinds.push(m.kind);
    }
    let csv = run.common.out.join("report.csv");
    table.write(&csv)?;
    let config = json!({ "dir": dir, "manifests": paths.iter().map(|p| p.file_name().unwrap().to_string_lossy().into_owned()).collect::<Vec<_>>() });
    let summary = json!({ "headline": { "name": "experiments", "value": kinds.len() }, "kinds": kinds });
    run.finish("report", &config, None, "summary of earlier runs".into(), &[&csv], summary)?;
    Ok(())
}
