//! Commands behind the `fivebar` binary. Each command reads its inputs,
//! runs the library and writes an output directory plus a `manifest.json`.

pub mod io;

use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use hybrid_fivebar::control::{self, AxisGains, PlantConfig, SimLog};
use hybrid_fivebar::dynamics::{inverse_dynamics, InertialParams, TorqueSummary};
use hybrid_fivebar::mechanism::{sample_task, track_closure, ClosureTrace};
use hybrid_fivebar::motion::{differentiate, MotionProfile};
use hybrid_fivebar::objective::evaluate_trace;
use hybrid_fivebar::svg::{Plot, Series};
use hybrid_fivebar::synthesis::{synthesize, DesignBounds, SynthesisConfig};
use hybrid_fivebar::{
    table, MechanismDims, ObjectiveBreakdown, ObjectiveOptions, ObjectiveWeights, TaskSpec,
};
use serde::{Deserialize, Serialize};

use io::{read_json, read_text, CliResult, Failure, OutDir, RunManifest};

pub const PROFILES_CSV_HEADER: [&str; 4] = ["theta2_deg", "theta5", "velocity", "acceleration"];

#[derive(Debug, Parser)]
#[command(
    name = "fivebar",
    version,
    about = "Synthesis, analysis and simulation of hybrid-driven five-bar linkages"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesise a mechanism for a path task (GA, then steepest descent).
    Synth(SynthArgs),
    /// Score a mechanism against a task and export its profiles and plots.
    Analyze(AnalyzeArgs),
    /// Simulate both servo loops driving the mechanism.
    Simulate(SimulateArgs),
    /// Write the demonstration task, mechanism and default configs.
    Sample(SampleArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Task JSON.
    pub task: PathBuf,
    /// Synthesis config JSON (GA, bounds, weights, descent).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the GA seed from the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Objective weights `error,mobility,swept,harmonic`.
    #[arg(long)]
    pub weights: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Mechanism JSON.
    pub mechanism: PathBuf,
    /// Task JSON.
    pub task: PathBuf,
    /// Analysis config JSON (weights, objective options, inertial params).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub weights: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    pub mechanism: PathBuf,
    /// Plant JSON.
    pub plant: PathBuf,
    /// Gains JSON with `cv` and `servo` entries.
    pub gains: PathBuf,
    /// Servo profile CSV (`theta2_deg,value`, radians).
    pub profile: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub cycles: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    /// Precision points in the task.
    #[arg(long, default_value_t = 72)]
    pub samples: usize,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Synth(args) => cmd_synth(&args),
        Command::Analyze(args) => cmd_analyze(&args),
        Command::Simulate(args) => cmd_simulate(&args),
        Command::Sample(args) => cmd_sample(&args),
    }
}

fn parse_weights(text: &str) -> CliResult<ObjectiveWeights> {
    Ok(ObjectiveWeights::parse_list(text)?)
}

fn load_task(path: &Path) -> CliResult<TaskSpec> {
    let task: TaskSpec = read_json(path)?;
    task.validate()
        .map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    Ok(task)
}

fn load_mechanism(path: &Path) -> CliResult<MechanismDims> {
    let dims: MechanismDims = read_json(path)?;
    dims.validate()
        .map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    Ok(dims)
}

pub fn cmd_synth(args: &SynthArgs) -> CliResult<()> {
    let task = load_task(&args.task)?;
    let mut config: SynthesisConfig = match &args.config {
        Some(path) => read_json(path)?,
        None => SynthesisConfig::default(),
    };
    let mut manifest = RunManifest::new("synth", &args.out).input("task", &args.task);
    if let Some(path) = &args.config {
        manifest = manifest.input("config", path);
    }
    if let Some(seed) = args.seed {
        config.ga.rng_seed = seed;
        manifest.set("seed", seed);
    }
    if let Some(text) = &args.weights {
        config.weights = parse_weights(text)?;
        manifest.set("weights", text);
    }
    manifest.seed = Some(config.ga.rng_seed);

    let result = synthesize(&task, &config)?;
    let out = OutDir::create(&args.out)?;
    out.write_json("mechanism.json", &result.refined_dims)?;
    out.write_json("synthesis.json", &result)?;
    out.write("history.csv", &result.history_csv())?;
    out.write_json("manifest.json", &manifest)?;
    eprintln!(
        "synth: GA best {:.6e}, refined {:.6e} (error {:.6e}, m = {})",
        result.best.total,
        result.refined.total,
        result.refined.error,
        result.refined.mobility.cbrt().round()
    );
    Ok(())
}

/// Options read by `analyze --config`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisConfig {
    pub weights: ObjectiveWeights,
    pub objective: ObjectiveOptions,
    pub inertial: InertialParams,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TorqueReport {
    pub cv: TorqueSummary,
    pub servo: TorqueSummary,
}

/// Contents of `objective.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub breakdown: ObjectiveBreakdown,
    /// Immobile samples.
    pub m: usize,
    pub branch_id: usize,
    pub samples: usize,
    /// Absent when the trace is not fully mobile.
    pub torque: Option<TorqueReport>,
}

fn servo_profiles(
    trace: &ClosureTrace,
    cv_speed: f64,
) -> CliResult<(MotionProfile, Vec<f64>, Vec<f64>)> {
    let profile = MotionProfile::new(trace.theta5(), cv_speed);
    let (velocity, acceleration) = differentiate(&profile)?;
    Ok((profile, velocity, acceleration))
}

pub fn cmd_analyze(args: &AnalyzeArgs) -> CliResult<()> {
    let dims = load_mechanism(&args.mechanism)?;
    let task = load_task(&args.task)?;
    if !task.is_uniform() {
        return Err(Failure::Input(format!(
            "{}: analysis needs theta2 sampled uniformly from 0",
            args.task.display()
        )));
    }
    let mut config: AnalysisConfig = match &args.config {
        Some(path) => read_json(path)?,
        None => AnalysisConfig::default(),
    };
    let mut manifest = RunManifest::new("analyze", &args.out)
        .input("mechanism", &args.mechanism)
        .input("task", &args.task);
    if let Some(path) = &args.config {
        manifest = manifest.input("config", path);
    }
    if let Some(text) = &args.weights {
        config.weights = parse_weights(text)?;
        manifest.set("weights", text);
    }
    config.weights.validate()?;

    let trace = track_closure(&dims, &task)?;
    let breakdown = evaluate_trace(&trace, dims.s, &config.weights, &config.objective)?;
    let (profile, velocity, acceleration) = servo_profiles(&trace, task.cv_speed)?;
    let torque = if trace.is_mobile() {
        Some(inverse_dynamics(
            &dims,
            &config.inertial,
            &trace,
            task.cv_speed,
        )?)
    } else {
        None
    };

    let out = OutDir::create(&args.out)?;
    let degrees = profile.theta2_degrees();
    out.write(
        "profiles.csv",
        &table::write_table(
            &PROFILES_CSV_HEADER,
            &[&degrees, &profile.values, &velocity, &acceleration],
        ),
    )?;

    let desired = Series::new(
        "desired",
        task.samples.iter().map(|s| s.desired.x).collect(),
        task.samples.iter().map(|s| s.desired.y).collect(),
    );
    let actual = Series::new(
        "actual",
        trace.poses.iter().map(|p| p.actual.x).collect(),
        trace.poses.iter().map(|p| p.actual.y).collect(),
    );
    let trace_plot = Plot::new("End-effector path", "x (mm)", "y (mm)")
        .equal_aspect()
        .with_series(desired)
        .with_series(actual);
    out.write("effector.svg", &trace_plot.render())?;

    match &torque {
        Some(profile) => {
            out.write("torque.csv", &profile.to_csv())?;
            let plot = Plot::new("Motor torques", "theta2 (deg)", "torque (Nm)")
                .with_series(Series::new("cv", degrees.clone(), profile.tau_cv.clone()))
                .with_series(Series::new(
                    "servo",
                    degrees.clone(),
                    profile.tau_servo.clone(),
                ));
            out.write("torque.svg", &plot.render())?;
        }
        None => {
            out.remove_stale("torque.csv");
            out.remove_stale("torque.svg");
            eprintln!(
                "warning: {} of {} samples are immobile; torque.csv and torque.svg not written",
                trace.m,
                trace.poses.len()
            );
        }
    }

    let report = AnalysisReport {
        breakdown,
        m: trace.m,
        branch_id: trace.branch_id,
        samples: trace.poses.len(),
        torque: torque.as_ref().map(|t| TorqueReport {
            cv: t.cv,
            servo: t.servo,
        }),
    };
    out.write_json("objective.json", &report)?;
    out.write_json("manifest.json", &manifest)?;
    Ok(())
}

/// Correlation and peak error per axis, written to `summary.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxisSummary {
    pub max_abs_error: i64,
    /// Zero-lag correlation of each cycle with the next, after two
    /// transient cycles.
    pub cycle_correlations: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationSummary {
    pub cycles: usize,
    pub samples_per_cycle: usize,
    pub cv: AxisSummary,
    pub servo: AxisSummary,
}

/// Cycles treated as start-up transient in the summary.
pub const TRANSIENT_CYCLES: usize = 2;

fn axis_summary(log: &[control::AxisLogSample], samples_per_cycle: usize) -> AxisSummary {
    let errors: Vec<i64> = log.iter().map(|s| s.error).collect();
    AxisSummary {
        max_abs_error: errors.iter().map(|e| e.abs()).max().unwrap_or(0),
        cycle_correlations: control::cycle_correlations(
            &errors,
            samples_per_cycle,
            TRANSIENT_CYCLES,
        ),
    }
}

pub fn cmd_simulate(args: &SimulateArgs) -> CliResult<()> {
    let dims = load_mechanism(&args.mechanism)?;
    let plant: PlantConfig = read_json(&args.plant)?;
    let gains: AxisGains = read_json(&args.gains)?;
    let profile = MotionProfile::from_csv(&read_text(&args.profile)?, plant.cv_speed)
        .map_err(|e| Failure::Input(format!("{}: {e}", args.profile.display())))?;
    if args.cycles == 0 {
        return Err(Failure::Input("--cycles must be at least 1".into()));
    }
    let mut manifest = RunManifest::new("simulate", &args.out)
        .input("mechanism", &args.mechanism)
        .input("plant", &args.plant)
        .input("gains", &args.gains)
        .input("profile", &args.profile);
    manifest.set("cycles", args.cycles);

    let log = control::simulate(
        &dims,
        &plant,
        &gains.cv,
        &gains.servo,
        &profile,
        args.cycles,
    )?;

    let out = OutDir::create(&args.out)?;
    let summary = SimulationSummary {
        cycles: args.cycles,
        samples_per_cycle: log.samples_per_cycle,
        cv: axis_summary(&log.cv, log.samples_per_cycle),
        servo: axis_summary(&log.servo, log.samples_per_cycle),
    };
    for (name, axis) in [("cv", &log.cv), ("servo", &log.servo)] {
        out.write(&format!("{name}_log.csv"), &SimLog::axis_csv(axis))?;
        let t: Vec<f64> = axis.iter().map(|s| s.t).collect();
        let e: Vec<f64> = axis.iter().map(|s| s.error as f64).collect();
        let plot = Plot::new(
            format!("{name} position error"),
            "time (s)",
            "error (counts)",
        )
        .with_series(Series::new(name, t, e));
        out.write(&format!("{name}_error.svg"), &plot.render())?;
    }
    out.write_json("summary.json", &summary)?;
    out.write_json("manifest.json", &manifest)?;
    Ok(())
}

/// Default configuration of the `synth` command for the demonstration task:
/// bounds bracketing the reference mechanism.
pub fn sample_synthesis_config() -> SynthesisConfig {
    SynthesisConfig {
        bounds: DesignBounds::around(&MechanismDims::REFERENCE, 0.2, 20.0),
        ..Default::default()
    }
}

pub fn cmd_sample(args: &SampleArgs) -> CliResult<()> {
    let task = sample_task(args.samples)?;
    let trace = track_closure(&MechanismDims::REFERENCE, &task)?;
    let profile = MotionProfile::new(trace.theta5(), TAU);
    let out = OutDir::create(&args.out)?;
    out.write_json("sample_task.json", &task)?;
    out.write_json("reference_mechanism.json", &MechanismDims::REFERENCE)?;
    out.write("servo_profile.csv", &profile.to_csv())?;
    out.write_json("plant.json", &PlantConfig::default())?;
    out.write_json("gains.json", &AxisGains::default())?;
    out.write_json("synth_config.json", &sample_synthesis_config())?;
    out.write_json("analysis_config.json", &AnalysisConfig::default())?;
    let mut manifest = RunManifest::new("sample", &args.out);
    manifest.set("samples", args.samples);
    out.write_json("manifest.json", &manifest)?;
    Ok(())
}
