//! `qbatt`: run the battery-charger simulator from a flat config file.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use qbatt::analysis::{
    fit_power_law, log_sizes, maxima_with_window, noise_ensemble, run_sweep, Axis, NoisePlan, PointValue, SweepPlan,
    SweepRow, WindowPolicy,
};
use qbatt::analytic::{hp_maxima, hp_scaling, hp_series, parallel_maxima, parallel_series, HpParams};
use qbatt::config::RunConfig;
use qbatt::dynamics::ConservationTolerances;
use qbatt::engine::{EngineOptions, EngineRegistry, Model};
use qbatt::io::{dynamics_csv, dynamics_csv_realizations, sweep_csv, write_atomic, write_json_atomic};
use qbatt::model::{CouplingTable, PairSpec};
use qbatt::sector::noise::{perturb_couplings, realization_seed};
use qbatt::{validation, Error};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum Verb {
    Dynamics,
    Maxima,
    Sweep,
    Scaling,
    Noise,
    Parallel,
    Hp,
    Validate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum EngineChoice {
    Collective,
    Full,
    Auto,
}

impl EngineChoice {
    fn name(self) -> &'static str {
        match self {
            EngineChoice::Collective => "collective",
            EngineChoice::Full => "full",
            EngineChoice::Auto => "auto",
        }
    }
}

#[derive(Debug, Parser, Serialize)]
#[command(name = "qbatt", version, about = "Multi-qubit battery-charger simulator")]
struct Cli {
    #[arg(value_enum)]
    verb: Verb,
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (created if absent).
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// `key=value` override applied after the file; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long, value_enum, default_value = "auto")]
    engine: EngineChoice,
    /// Worker threads for sweeps and ensembles.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long = "t-max")]
    t_max: Option<f64>,
    #[arg(long = "n-samples")]
    n_samples: Option<usize>,
    /// Sweep axis: charger_size, total_size, jc_dv_grid or noise_amplitude.
    #[arg(long)]
    axis: Option<String>,
    /// Comma-separated sweep points (sizes, `jc:dv` pairs or noise widths).
    #[arg(long)]
    points: Option<String>,
}

const DEFAULT_SAMPLES: usize = 1000;

/// Everything a verb needs, resolved from file, overrides and flags.
struct Run {
    cli: Cli,
    config: RunConfig,
    input_hash: String,
    artifacts: Vec<String>,
    details: serde_json::Map<String, Value>,
}

impl Run {
    fn load(cli: Cli) -> Result<Self, Error> {
        let mut hasher = Sha256::new();
        let mut config = match &cli.config {
            Some(path) => {
                let text = fs::read_to_string(path)?;
                hasher.update(text.as_bytes());
                RunConfig::parse(&text)?
            }
            None => RunConfig::default(),
        };
        for o in &cli.overrides {
            hasher.update(b"\n--set ");
            hasher.update(o.as_bytes());
            config.apply_override(o)?;
        }
        if let Some(t) = cli.t_max {
            config.t_max = Some(t);
        }
        if let Some(n) = cli.n_samples {
            config.n_samples = Some(n);
        }
        if let Some(s) = cli.seed {
            config.seed = Some(s);
        }
        Ok(Self {
            cli,
            config,
            input_hash: hex::encode(hasher.finalize()),
            artifacts: Vec::new(),
            details: serde_json::Map::new(),
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.cli.out.join(name)
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), Error> {
        write_atomic(&self.path(name), bytes)?;
        self.artifacts.push(name.to_string());
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), Error> {
        write_json_atomic(&self.path(name), value)?;
        self.artifacts.push(name.to_string());
        Ok(())
    }

    fn detail(&mut self, key: &str, value: Value) {
        self.details.insert(key.to_string(), value);
    }

    fn times(&self) -> Result<Vec<f64>, Error> {
        let t_max = self.config.t_max.ok_or(Error::MissingKey("t_max"))?;
        let n = self.config.n_samples.unwrap_or(DEFAULT_SAMPLES);
        Ok(qbatt::TimeGrid::uniform(t_max, n)?.times())
    }

    fn window(&self) -> WindowPolicy {
        WindowPolicy {
            n_samples: self.config.n_samples.unwrap_or(WindowPolicy::default().n_samples),
            t_max: self.config.t_max,
            ..WindowPolicy::default()
        }
    }

    fn seed(&self) -> u64 {
        self.config.seed.unwrap_or(0)
    }

    fn manifest(&self) -> Value {
        json!({
            "tool": "qbatt",
            "version": env!("CARGO_PKG_VERSION"),
            "verb": self.cli.verb,
            "config_file": self.cli.config,
            "overrides": self.cli.overrides,
            "input_sha256": self.input_hash,
            "engine": self.cli.engine.name(),
            "jobs": self.cli.jobs,
            "axis": self.cli.axis,
            "points": self.cli.points,
            "resolved": self.config,
            "details": self.details,
            "artifacts": self.artifacts,
        })
    }
}

fn check_conservation(r: &qbatt::dynamics::DynamicsResult, n_exc: f64) -> Result<(), Error> {
    let span = r.t.last().copied().unwrap_or(0.0) - r.t.first().copied().unwrap_or(0.0);
    r.diagnostics.check(&ConservationTolerances::default(), n_exc, span)
}

fn dynamics(run: &mut Run) -> Result<(), Error> {
    let spec = run.config.system()?;
    let times = run.times()?;
    let reg = EngineRegistry::builtin();
    let opts = EngineOptions::default();
    match run.config.delta_j.clone() {
        None => {
            let engine = reg.create(run.cli.engine.name(), &Model::Uniform(spec), &opts)?;
            let r = engine.evaluate(&times)?;
            check_conservation(&r, spec.n_c as f64)?;
            run.detail("engine_settings", engine.settings());
            run.detail("diagnostics", serde_json::to_value(&r.diagnostics)?);
            run.write("dynamics.csv", dynamics_csv(&r).as_bytes())
        }
        Some(widths) => {
            let realizations = run.config.realizations.unwrap_or(1);
            let base = CouplingTable::from_spec(&spec)?;
            let mut noise = Vec::new();
            for (d, &dj) in widths.iter().enumerate() {
                let mut results = Vec::new();
                for r in 0..realizations {
                    let seed = realization_seed(run.seed(), r as u64, d as u64);
                    let (table, record) = perturb_couplings(&base, dj, seed)?;
                    let engine = reg.create(run.cli.engine.name(), &Model::Table(table), &opts)?;
                    let res = engine.evaluate(&times)?;
                    check_conservation(&res, spec.n_c as f64)?;
                    noise.push(json!({ "delta_j": dj, "realization": r, "seed": record.seed, "draws": record.draws }));
                    results.push(res);
                }
                let csv = dynamics_csv_realizations(results.iter().enumerate());
                run.write(&format!("dynamics_dj{d}.csv"), csv.as_bytes())?;
            }
            run.detail("noise", Value::Array(noise));
            Ok(())
        }
    }
}

fn maxima(run: &mut Run) -> Result<(), Error> {
    let spec = run.config.system()?;
    let engine =
        EngineRegistry::builtin().create(run.cli.engine.name(), &Model::Uniform(spec), &EngineOptions::default())?;
    let policy = run.window();
    let t0 = policy.t_max.unwrap_or_else(|| qbatt::analysis::default_window(&spec));
    let out = maxima_with_window(engine.as_ref(), t0, &policy)?;
    run.detail("engine_settings", engine.settings());
    run.write_json("maxima.json", &out)
}

fn parse_points(run: &Run, axis: Axis) -> Result<Option<Vec<PointValue>>, Error> {
    run.cli
        .points
        .as_deref()
        .map(|p| p.split(',').map(|s| PointValue::parse(axis, s)).collect::<Result<Vec<_>, _>>())
        .transpose()
}

fn sweep_plan(run: &Run, default_axis: Option<Axis>) -> Result<SweepPlan, Error> {
    let axis = match (&run.cli.axis, default_axis) {
        (Some(a), _) => a.parse::<Axis>()?,
        (None, Some(a)) => a,
        (None, None) => return Err(Error::MissingKey("axis")),
    };
    let points = match parse_points(run, axis)? {
        Some(p) => p,
        None if axis == Axis::TotalSize => log_sizes(500, 10000, 8).into_iter().map(PointValue::Size).collect(),
        None => return Err(Error::MissingKey("points")),
    };
    let mut plan = SweepPlan::new(run.config.system()?, axis, points);
    plan.window = run.window();
    plan.engine = run.cli.engine.name().to_string();
    plan.seed = run.seed();
    Ok(plan)
}

fn sweep(run: &mut Run) -> Result<Vec<SweepRow>, Error> {
    let plan = sweep_plan(run, None)?;
    let rows = run_sweep(&plan, run.cli.jobs)?;
    let failures: Vec<Value> = rows
        .iter()
        .filter_map(|r| r.outcome.as_ref().err().map(|e| json!({ "point": r.point.to_string(), "error": e })))
        .collect();
    run.detail("failed_points", Value::Array(failures));
    run.write("sweep.csv", sweep_csv(&rows).as_bytes())?;
    Ok(rows)
}

fn scaling(run: &mut Run) -> Result<(), Error> {
    let plan = sweep_plan(run, Some(Axis::TotalSize))?;
    let rows = run_sweep(&plan, run.cli.jobs)?;
    run.write("sweep.csv", sweep_csv(&rows).as_bytes())?;
    let ok: Vec<(f64, &qbatt::analysis::PointOutcome)> = rows
        .iter()
        .filter_map(|r| match (r.point, &r.outcome) {
            (PointValue::Size(n), Ok(o)) => Some((n as f64, o)),
            _ => None,
        })
        .collect();
    let fit = |f: &dyn Fn(&qbatt::analysis::PointOutcome) -> f64| {
        fit_power_law(&ok.iter().map(|(n, o)| (*n, f(o))).collect::<Vec<_>>())
    };
    let report = json!({
        "energy": fit(&|o| o.maxima.energy.record.value)?,
        "power": fit(&|o| o.maxima.power.record.value)?,
        "inverse_t_power": fit(&|o| 1.0 / o.maxima.power.record.time)?,
        "inverse_t_energy": fit(&|o| 1.0 / o.maxima.energy.record.time)?,
        "hp_prediction": hp_scaling(&plan.base),
        "points_used": ok.len(),
    });
    run.write_json("fit.json", &report)
}

fn noise(run: &mut Run) -> Result<(), Error> {
    let base = run.config.system()?;
    let sizes: Vec<u64> = match parse_points(run, Axis::TotalSize)? {
        Some(p) => p.into_iter().filter_map(|v| if let PointValue::Size(n) = v { Some(n) } else { None }).collect(),
        None => vec![base.n_b],
    };
    let widths = run.config.delta_j.clone().ok_or(Error::MissingKey("delta_j"))?;
    let realizations = run.config.realizations.ok_or(Error::MissingKey("realizations"))?;
    let mut plan = NoisePlan::new(base, sizes, widths, realizations, run.seed());
    plan.window = run.window();
    plan.engine = match run.cli.engine {
        EngineChoice::Auto => "full".into(),
        other => other.name().into(),
    };
    let report = noise_ensemble(&plan, run.cli.jobs)?;
    let mut runs = String::from("delta_j,size,realization,seed,draws,E_max,P_max,t_E,t_P\n");
    for r in &report.runs {
        runs.push_str(&format!(
            "{:?},{},{},{},{},{:?},{:?},{:?},{:?}\n",
            r.delta_j, r.size, r.realization, r.seed, r.draws, r.e_max, r.p_max, r.t_e, r.t_p
        ));
    }
    let mut cells = String::from("delta_j,size,E_mean,E_sem,P_mean,P_sem,n_realizations\n");
    for c in &report.cells {
        cells.push_str(&format!(
            "{:?},{},{:?},{:?},{:?},{:?},{}\n",
            c.delta_j, c.size, c.energy.mean, c.energy.sem, c.power.mean, c.power.sem, c.energy.n_realizations
        ));
    }
    let failures: Vec<Value> = report
        .runs
        .iter()
        .filter_map(|r| {
            r.error
                .as_ref()
                .map(|e| json!({ "delta_j": r.delta_j, "size": r.size, "realization": r.realization, "error": e }))
        })
        .collect();
    run.detail("failed_realizations", Value::Array(failures));
    run.write("noise_runs.csv", runs.as_bytes())?;
    run.write("noise_cells.csv", cells.as_bytes())?;
    run.write_json("noise_fit.json", &report.exponents)
}

fn parallel(run: &mut Run) -> Result<(), Error> {
    let c = &run.config;
    let pair = PairSpec {
        j_pair: c.j_bc.ok_or(Error::MissingKey("j_bc"))?,
        v_b: c.v_b.ok_or(Error::MissingKey("v_b"))?,
        v_c: c.v_c.ok_or(Error::MissingKey("v_c"))?,
        n_pairs: c.n_b.ok_or(Error::MissingKey("n_b"))?,
    };
    let r = parallel_series(&pair, &run.times()?);
    run.write("parallel.csv", dynamics_csv(&r).as_bytes())?;
    let (e, p) = parallel_maxima(&pair)?;
    run.write_json("parallel_maxima.json", &json!({ "energy": e, "power": p }))
}

fn hp(run: &mut Run) -> Result<(), Error> {
    let spec = run.config.system()?;
    let params = HpParams::from_spec(&spec);
    let r = hp_series(&params, spec.k_max(), &run.times()?);
    run.write("hp.csv", dynamics_csv(&r).as_bytes())?;
    let maxima = hp_maxima(&params).map(|(e, p)| json!({ "energy": e, "power": p }));
    let report = json!({
        "params": params,
        "maxima": maxima.unwrap_or_else(|e| json!({ "error": e.to_string() })),
        "scaling": hp_scaling(&spec),
    });
    run.write_json("hp.json", &report)
}

fn validate(run: &mut Run) -> Result<(), Error> {
    let checks = validation::run_all()?;
    let failed = checks.iter().filter(|c| !c.passed).count();
    for c in &checks {
        println!("{} {} ({:e} <= {:e})", if c.passed { "PASS" } else { "FAIL" }, c.name, c.value, c.tolerance);
    }
    run.write_json("validate.json", &checks)?;
    if failed > 0 {
        return Err(Error::InvalidParameter { name: "validate", reason: format!("{failed} check(s) failed") });
    }
    Ok(())
}

fn execute(run: &mut Run) -> Result<(), Error> {
    fs::create_dir_all(&run.cli.out)?;
    match run.cli.verb {
        Verb::Dynamics => dynamics(run)?,
        Verb::Maxima => maxima(run)?,
        Verb::Sweep => {
            sweep(run)?;
        }
        Verb::Scaling => scaling(run)?,
        Verb::Noise => noise(run)?,
        Verb::Parallel => parallel(run)?,
        Verb::Hp => hp(run)?,
        Verb::Validate => validate(run)?,
    }
    let manifest = run.manifest();
    write_json_atomic(&run.path("manifest.json"), &manifest)
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::InvalidParameter { .. } => "invalid_parameter",
        Error::Config { .. } => "config",
        Error::UnknownKey(_) => "unknown_key",
        Error::MissingKey(_) => "missing_key",
        Error::Dimension { .. } => "dimension",
        Error::NoConvergence { .. } => "no_convergence",
        Error::KrylovTolerance { .. } => "krylov_tolerance",
        Error::SectorTooLarge { .. } => "sector_too_large",
        Error::WindowLimited { .. } => "window_limited",
        Error::NotOscillatory(_) => "not_oscillatory",
        Error::DegeneratePair => "degenerate_pair",
        Error::Fit(_) => "fit",
        Error::UnknownStrategy { .. } => "unknown_strategy",
        Error::Io(_) => "io",
        Error::Json(_) => "json",
    }
}

fn report_error(out: &Path, verb: Verb, e: &Error) {
    let record = json!({ "status": "error", "verb": verb, "kind": error_kind(e), "message": e.to_string() });
    eprintln!("{record}");
    if fs::create_dir_all(out).is_ok() {
        let _ = write_json_atomic(&out.join("error.json"), &record);
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (out, verb) = (cli.out.clone(), cli.verb);
    let result = Run::load(cli).and_then(|mut run| execute(&mut run));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            report_error(&out, verb, &e);
            ExitCode::FAILURE
        }
    }
}
