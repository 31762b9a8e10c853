//! `degenbeam <command> --config <path> [--out <dir>] [--seed <u64>]`.
//!
//! Exit codes: 0 on success, 2 for invalid input, 3 for numerical failure.
//! Every run writes `run_report.json` into the output directory.

pub mod config;

use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

pub use config::{load_config, parse_config, ExperimentConfig, Horizon};

use crate::dynamics::{BeamState, TimeGrid};
use crate::error::{Error, Result};
use crate::hum::{synthesize_control, ControlProblem, ControlSettings, HumSolution};
use crate::model::BeamModel;
use crate::observability::{estimate_ct, identity_residuals, ObservabilityReport};
use crate::profiles::{make_power_profile, DegeneracyClass};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    /// Degeneracy exponent, regime and observability time.
    Classify,
    /// Homogeneous solve; energies and boundary trace to CSV.
    Simulate,
    /// Residuals of the two boundary-trace identities.
    Identities,
    /// Observability quotients and the C_T estimate.
    Observe,
    /// HUM null control at x = 1.
    Control,
    /// C_T over a grid of (K, T) cells.
    Sweep,
}

#[derive(Debug, Parser)]
#[command(
    name = "degenbeam",
    version,
    about = "Numerical laboratory for the degenerate clamped beam"
)]
pub struct Args {
    #[arg(value_enum)]
    pub command: Command,
    /// JSON experiment configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; overrides `out` in the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Random seed; overrides `seed` in the config.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Timings {
    pub total_seconds: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub command: Command,
    pub status: String,
    /// Resolved config: re-running from it reproduces the run.
    pub config: ExperimentConfig,
    pub class: Option<DegeneracyClass>,
    #[serde(rename = "T0")]
    pub t0: Option<f64>,
    #[serde(rename = "T")]
    pub t_final: Option<f64>,
    pub dt: Option<f64>,
    pub steps: Option<usize>,
    pub results: Value,
    pub files: Vec<PathBuf>,
    pub warnings: Vec<String>,
    pub error: Option<String>,
    pub timings: Timings,
}

/// CSV float format: 17 significant digits.
fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = File::create(path)?;
    serde_json::to_writer_pretty(&mut f, value).map_err(|e| Error::Io(e.into()))?;
    f.write_all(b"\n")?;
    Ok(())
}

fn csv_writer(path: &Path, header: &[&str]) -> Result<csv::Writer<File>> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    Ok(w)
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Entry point of the binary. Returns the process exit code.
pub fn main_with_args(args: Args) -> i32 {
    let mut cfg = match load_config(&args.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = args.out {
        cfg.out = Some(out);
    }
    let Some(out) = cfg.out.clone() else {
        eprintln!("error: ConfigError: no output directory; set `out` or pass --out");
        return 2;
    };
    match execute(args.command, &cfg, &out) {
        Ok(report) => {
            println!("{}", serde_json::to_string(&report.results).unwrap_or_default());
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                2
            } else {
                3
            }
        }
    }
}

/// Context shared by the single-model commands.
struct Run<'a> {
    cfg: ExperimentConfig,
    out: &'a Path,
    files: Vec<PathBuf>,
    warnings: Vec<String>,
    class: Option<DegeneracyClass>,
    t0: Option<f64>,
    time: Option<TimeGrid>,
}

impl Run<'_> {
    fn file(&mut self, name: &str) -> PathBuf {
        let p = self.out.join(name);
        self.files.push(p.clone());
        p
    }

    fn model(&mut self) -> Result<BeamModel> {
        let model = BeamModel::new(self.cfg.build_profile()?, self.cfg.grid.n)?;
        if let Ok(cls) = model.classify() {
            self.class = Some(cls);
            self.t0 = Some(crate::profiles::observability_time(&cls));
        }
        Ok(model)
    }

    /// Resolves `T` and the fitted step, and records both in the echoed config.
    fn time(&mut self, model: &BeamModel) -> Result<TimeGrid> {
        let t = self.cfg.resolve_horizon(model)?;
        let max_dt = self.cfg.max_dt(t);
        let time = TimeGrid::fitted(t, max_dt)?;
        if time.dt() != max_dt {
            self.warnings.push(format!(
                "dt = {max_dt} does not divide T = {t}; using {} steps of dt = {}",
                time.steps(),
                time.dt()
            ));
        }
        self.cfg.time.horizon = Horizon::Value(t);
        self.cfg.time.dt = Some(max_dt);
        self.time = Some(time);
        Ok(time)
    }
}

/// Runs `command` with a validated config, writing all outputs under `out`.
pub fn execute(command: Command, cfg: &ExperimentConfig, out: &Path) -> Result<RunReport> {
    let start = Instant::now();
    cfg.validate()?;
    fs::create_dir_all(out)?;
    let mut run = Run {
        cfg: cfg.clone(),
        out,
        files: Vec::new(),
        warnings: Vec::new(),
        class: None,
        t0: None,
        time: None,
    };
    run.cfg.out = Some(out.to_path_buf());
    let outcome = match command {
        Command::Classify => classify_cmd(&mut run),
        Command::Simulate => simulate_cmd(&mut run),
        Command::Identities => identities_cmd(&mut run),
        Command::Observe => observe_cmd(&mut run),
        Command::Control => control_cmd(&mut run),
        Command::Sweep => sweep_cmd(&mut run),
    };
    let (results, error) = match &outcome {
        Ok(v) => (v.clone(), None),
        Err(e) => (Value::Null, Some(e.to_string())),
    };
    let report_path = out.join("run_report.json");
    let mut files = run.files.clone();
    files.push(report_path.clone());
    let report = RunReport {
        command,
        status: if error.is_none() { "ok".into() } else { "failed".into() },
        config: run.cfg,
        class: run.class,
        t0: run.t0,
        t_final: run.time.map(|t| t.t_final()),
        dt: run.time.map(|t| t.dt()),
        steps: run.time.map(|t| t.steps()),
        results,
        files,
        warnings: run.warnings,
        error,
        timings: Timings {
            total_seconds: start.elapsed().as_secs_f64(),
        },
    };
    write_json(&report_path, &report)?;
    outcome.map(|_| report)
}

fn classify_cmd(run: &mut Run) -> Result<Value> {
    let model = run.model()?;
    let cls = model.classify()?;
    let t0 = crate::profiles::observability_time(&cls);
    Ok(json!({
        "profile": model.profile().describe(),
        "K": cls.k,
        "regime": cls.regime,
        "a_at_1": cls.a_at_1,
        "T0": t0,
    }))
}

fn simulate_cmd(run: &mut Run) -> Result<Value> {
    let model = run.model()?;
    let time = run.time(&model)?;
    let initial = run.cfg.initial_state(&model)?;
    let path = run.file("energies.csv");
    let mut w = csv_writer(&path, &["t", "energy", "trace_yxx_1"])?;
    let snap_idx: Vec<usize> = run
        .cfg
        .time
        .snapshots
        .iter()
        .flatten()
        .map(|t| ((t / time.dt()).round() as usize).min(time.steps()))
        .collect();
    let mut snaps: Vec<BeamState> = Vec::new();
    let e0 = model.energy(&initial);
    let mut drift: f64 = 0.0;
    let mut last_energy = e0;
    let mut io: Result<()> = Ok(());
    model.propagate(&initial, time, |k, s| {
        let e = model.energy(s);
        if e0 > 0.0 {
            drift = drift.max(((e - e0) / e0).abs());
        }
        last_energy = e;
        if snap_idx.contains(&k) {
            snaps.push(s.clone());
        }
        if io.is_ok() {
            io = w
                .write_record([num(time.time(k)), num(e), num(model.trace(&s.y))])
                .map_err(csv_err);
        }
    })?;
    io?;
    w.flush()?;
    let mut results = json!({
        "initial_energy": e0,
        "final_energy": last_energy,
        "max_relative_energy_drift": drift,
        "energies_file": path,
    });
    if run.cfg.time.snapshots.is_some() {
        let sp = run.file("snapshots.json");
        write_json(&sp, &snaps)?;
        results["snapshots_file"] = json!(sp);
    }
    Ok(results)
}

fn identities_cmd(run: &mut Run) -> Result<Value> {
    let model = run.model()?;
    let time = run.time(&model)?;
    let initial = run.cfg.initial_state(&model)?;
    let (first, second) = identity_residuals(&model, &initial, time)?;
    Ok(json!({ "first": first, "second": second }))
}

fn write_quotients(path: &Path, report: &ObservabilityReport) -> Result<()> {
    let mut w = csv_writer(path, &["sample", "quotient"])?;
    for (i, q) in report.quotients.iter().enumerate() {
        w.write_record([i.to_string(), num(*q)]).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn observe_cmd(run: &mut Run) -> Result<Value> {
    let model = run.model()?;
    let time = run.time(&model)?;
    let obs = &run.cfg.observability;
    let report = estimate_ct(&model, time, obs.mode_count, obs.samples, run.cfg.seed)?;
    if run.t0.is_some_and(|t0| time.t_final() <= t0) {
        run.warnings
            .push("T does not exceed T0: the lower bound is vacuous".into());
    }
    let rp = run.file("observability_report.json");
    write_json(&rp, &report)?;
    let qp = run.file("quotients.csv");
    write_quotients(&qp, &report)?;
    serde_json::to_value(&report).map_err(|e| Error::Io(e.into()))
}

#[derive(Serialize)]
struct ControlSummary<'a> {
    #[serde(rename = "T")]
    t_final: f64,
    dt: f64,
    filter_modes: usize,
    tikhonov: f64,
    iterations: usize,
    cg_residual: f64,
    converged: bool,
    terminal_state_norm: f64,
    terminal_velocity_norm: f64,
    energy_reduction: f64,
    initial_energy: f64,
    terminal_energy: f64,
    uncontrolled_terminal_energy: f64,
    control_cost: f64,
    coefficients: &'a [f64],
    warnings: &'a [String],
}

fn write_control(run: &mut Run, problem: &ControlProblem, sol: &HumSolution) -> Result<Value> {
    let time = problem.time;
    let summary = ControlSummary {
        t_final: time.t_final(),
        dt: time.dt(),
        filter_modes: problem.filter_modes,
        tikhonov: problem.tikhonov,
        iterations: sol.iterations,
        cg_residual: sol.cg_residual,
        converged: sol.converged,
        terminal_state_norm: sol.terminal_state_norm,
        terminal_velocity_norm: sol.terminal_velocity_norm,
        energy_reduction: sol.energy_reduction,
        initial_energy: sol.initial_energy,
        terminal_energy: sol.terminal_energy,
        uncontrolled_terminal_energy: sol.uncontrolled_terminal_energy,
        control_cost: sol.control_cost,
        coefficients: &sol.coefficients,
        warnings: &sol.warnings,
    };
    let sp = run.file("control_summary.json");
    write_json(&sp, &summary)?;
    let cp = run.file("control.csv");
    let mut w = csv_writer(&cp, &["t", "f"])?;
    for (k, f) in sol.control.samples.iter().enumerate() {
        w.write_record([num(time.time(k)), num(*f)]).map_err(csv_err)?;
    }
    w.flush()?;
    serde_json::to_value(&summary).map_err(|e| Error::Io(e.into()))
}

fn control_cmd(run: &mut Run) -> Result<Value> {
    let model = run.model()?;
    let time = run.time(&model)?;
    let initial = run.cfg.initial_state(&model)?;
    let settings = ControlSettings::from(&run.cfg.control);
    let problem = ControlProblem::new(model, initial.y, initial.v, time, settings)?;
    run.warnings.extend(problem.warnings.iter().cloned());
    match synthesize_control(&problem) {
        Ok(sol) => write_control(run, &problem, &sol),
        Err(Error::ControlSynthesisFailed { best }) => {
            write_control(run, &problem, &best)?;
            Err(Error::ControlSynthesisFailed { best })
        }
        Err(e) => Err(e),
    }
}

/// One `(K, T)` cell of the sweep.
#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    #[serde(rename = "K")]
    pub k: f64,
    #[serde(rename = "T")]
    pub t_final: f64,
    #[serde(rename = "T0")]
    pub t0: f64,
    pub lower_bound: f64,
    pub upper_bound: f64,
    #[serde(rename = "C_T_estimate")]
    pub c_t_estimate: f64,
    #[serde(rename = "c_T")]
    pub cost: f64,
    pub note: String,
}

fn sweep_cell(cfg: &ExperimentConfig, k: f64, t: f64, dir: &Path) -> SweepRow {
    let mut row = SweepRow {
        k,
        t_final: t,
        t0: f64::NAN,
        lower_bound: f64::NAN,
        upper_bound: f64::NAN,
        c_t_estimate: f64::NAN,
        cost: f64::NAN,
        note: String::new(),
    };
    let result = (|| -> Result<ObservabilityReport> {
        let profile = make_power_profile(k, cfg.profile.scale)?;
        let model = BeamModel::new(profile, cfg.grid.n)?;
        let cls = model.classify()?;
        row.t0 = crate::profiles::observability_time(&cls);
        let (lo, hi) = crate::observability::observability_bounds(&cls, t);
        row.lower_bound = lo;
        row.upper_bound = hi;
        let time = TimeGrid::fitted(t, cfg.max_dt(t))?;
        let obs = &cfg.observability;
        let rep = estimate_ct(&model, time, obs.mode_count, obs.samples, cfg.seed)?;
        fs::create_dir_all(dir)?;
        write_json(&dir.join("observability_report.json"), &rep)?;
        write_quotients(&dir.join("quotients.csv"), &rep)?;
        Ok(rep)
    })();
    match result {
        Ok(rep) => {
            row.c_t_estimate = rep.c_t_estimate;
            row.cost = rep.cost.unwrap_or(f64::NAN);
            if t <= row.t0 {
                row.note = "T <= T0".into();
            }
        }
        Err(e) => row.note = e.to_string(),
    }
    row
}

fn sweep_cmd(run: &mut Run) -> Result<Value> {
    let spec = run
        .cfg
        .sweep
        .clone()
        .ok_or_else(|| Error::Config("field `sweep`: required by the sweep command".into()))?;
    let cells: Vec<(f64, f64)> = spec
        .k
        .iter()
        .flat_map(|&k| spec.t.iter().map(move |&t| (k, t)))
        .collect();
    let workers = spec.workers.unwrap_or_else(rayon::current_num_threads);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InternalSolverFailure(e.to_string()))?;
    let cfg = run.cfg.clone();
    let out = run.out.to_path_buf();
    let rows: Vec<SweepRow> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(k, t)| sweep_cell(&cfg, k, t, &out.join("cells").join(format!("K{k}_T{t}"))))
            .collect()
    });
    let path = run.file("sweep.csv");
    let mut w = csv_writer(
        &path,
        &[
            "K",
            "T",
            "T0",
            "lower_bound",
            "upper_bound",
            "C_T_estimate",
            "c_T",
            "note",
        ],
    )?;
    for r in &rows {
        w.write_record([
            num(r.k),
            num(r.t_final),
            num(r.t0),
            num(r.lower_bound),
            num(r.upper_bound),
            num(r.c_t_estimate),
            num(r.cost),
            r.note.clone(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(
        json!({ "cells": rows.len(), "sweep_file": path, "failed": rows.iter().filter(|r| r.c_t_estimate.is_nan()).count() }),
    )
}
