use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use cobot_core::engine::{run, EpisodeError, EpisodeResult};
use cobot_core::harness::{
    calibrate_beta, demo_trials, fuzz_trial, hand_trials, knife_trials, load_trials, run_hand_trials,
    run_knife_trials, run_uncertainty_table, table_cases, table_specimen, write_trials, HarnessError, Trial,
    TrialReport, UncertaintyRow,
};
use cobot_core::scenario::{Scenario, ScenarioError, UncertaintyParams};
use cobot_core::planner::ColorThresholds;
use cobot_core::sim::SimConfig;

mod serve;

#[derive(Parser)]
#[command(name = "cobot-cell", version, about = "Collaborative meat-cutting workcell: experiments, episodes and console server")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one of the component experiments and write a report.
    Experiment {
        kind: ExperimentKind,
        /// Directory of scenario files (a single file for `uncertainty`).
        /// Trials are generated from the seed when omitted.
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// Trials to generate; knife runs this many bone trials plus as many controls.
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Exit with status 3 if the acceptance thresholds are not met.
        #[arg(long)]
        assert: bool,
        /// Probability that a camera frame is dropped by the hand detector.
        #[arg(long)]
        miss_rate: Option<f64>,
    },
    /// Run one scripted episode.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// Episode log, one JSON object per line.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Serve the operator console protocol over WebSocket.
    Serve {
        #[arg(long, default_value_t = 8765)]
        port: u16,
        #[arg(long)]
        scenario: PathBuf,
        /// Simulation seconds per wall-clock second.
        #[arg(long, default_value_t = 1.0)]
        speed: f64,
        /// Exit after the first console disconnects.
        #[arg(long)]
        once: bool,
    },
    /// Fit beta from `d,psi` pairs.
    CalibrateBeta {
        #[arg(long)]
        pairs: PathBuf,
    },
    /// Write generated scenarios to a directory.
    Generate {
        #[arg(long)]
        kind: GenerateKind,
        #[arg(long, default_value_t = 10)]
        trials: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ExperimentKind {
    Hand,
    Knife,
    Uncertainty,
}

#[derive(Clone, Copy, ValueEnum)]
enum GenerateKind {
    Hand,
    Knife,
    Demo,
    Fuzz,
}

/// Failure with the process exit status it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        let error = e.into();
        let scenario = error.downcast_ref::<ScenarioError>().is_some()
            || error.downcast_ref::<EpisodeError>().is_some()
            || matches!(
                error.downcast_ref::<HarnessError>(),
                Some(HarnessError::Episode(_) | HarnessError::MissingGroundTruth(_) | HarnessError::Plan(..))
            );
        Failure { code: if scenario { 2 } else { 1 }, error }
    }
}

fn assertion(msg: String) -> Failure {
    Failure { code: 3, error: anyhow::anyhow!(msg) }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let started = Instant::now();
    let result = match cli.command {
        Command::Experiment { kind, scenario, trials, seed, out, csv, assert, miss_rate } => {
            experiment(kind, scenario.as_deref(), trials, seed, &out, csv.as_deref(), assert, miss_rate)
        }
        Command::Run { scenario, log } => run_episode(&scenario, log.as_deref()),
        Command::Serve { port, scenario, speed, once } => serve_cmd(port, &scenario, speed, once),
        Command::CalibrateBeta { pairs } => calibrate(&pairs),
        Command::Generate { kind, trials, seed, out } => generate(kind, trials, seed, &out),
    };
    eprintln!("wall clock: {:.3} s", started.elapsed().as_secs_f64());
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", describe(&f.error));
            ExitCode::from(f.code)
        }
    }
}

/// The error chain, skipping causes whose text the previous link already shows.
fn describe(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !out.contains(&text) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&text);
        }
    }
    out
}

fn load_scenario(path: &Path) -> Result<Scenario, Failure> {
    Ok(Scenario::load(path).map_err(|e| anyhow::Error::new(e).context(path.display().to_string()))?)
}

fn trials_for(kind: ExperimentKind, dir: Option<&Path>, n: Option<usize>, seed: u64) -> Result<Vec<Trial>, Failure> {
    if let Some(dir) = dir {
        let trials = load_trials(dir)?;
        if trials.is_empty() {
            return Err(ScenarioError::Invalid(format!("no scenarios in {}", dir.display())).into());
        }
        return Ok(match n {
            Some(n) if matches!(kind, ExperimentKind::Hand) => trials.into_iter().take(n).collect(),
            _ => trials,
        });
    }
    Ok(match kind {
        ExperimentKind::Hand => hand_trials(seed, n.unwrap_or(50)),
        _ => knife_trials(seed, n.unwrap_or(20)),
    })
}

#[allow(clippy::too_many_arguments)]
fn experiment(
    kind: ExperimentKind,
    scenario: Option<&Path>,
    trials: Option<usize>,
    seed: u64,
    out: &Path,
    csv: Option<&Path>,
    assert: bool,
    miss_rate: Option<f64>,
) -> Result<(), Failure> {
    if let ExperimentKind::Uncertainty = kind {
        return uncertainty(scenario, out, csv, assert);
    }
    let mut trials = trials_for(kind, scenario, trials, seed)?;
    if let Some(r) = miss_rate {
        for t in &mut trials {
            t.scenario.config.hand_miss_rate = r;
            t.scenario.validate()?;
        }
    }
    let report = match kind {
        ExperimentKind::Hand => run_hand_trials(&trials)?,
        _ => run_knife_trials(&trials)?,
    };
    std::fs::write(out, report.to_json()).with_context(|| format!("writing {}", out.display()))?;
    if let Some(csv) = csv {
        std::fs::write(csv, report.to_csv()).with_context(|| format!("writing {}", csv.display()))?;
    }
    println!(
        "{} trials={} tp={} fp={} fn={} accuracy={:.4} precision={:.4} latency_mean_s={:.6}",
        report.experiment,
        report.trials,
        report.true_positives,
        report.false_positives,
        report.false_negatives,
        report.accuracy,
        report.precision,
        report.latency_mean_s
    );
    if assert {
        let failures = match kind {
            ExperimentKind::Hand => hand_failures(&report, &trials),
            _ => knife_failures(&report, &trials),
        };
        if !failures.is_empty() {
            return Err(assertion(failures.join("; ")));
        }
    }
    Ok(())
}

fn hand_failures(r: &TrialReport, trials: &[Trial]) -> Vec<String> {
    let bound = trials
        .iter()
        .map(|t| 1.0 / t.scenario.config.safety_hz as f64 + 1.0 / t.scenario.config.control_hz as f64)
        .fold(0.0, f64::max);
    let mut bad = Vec::new();
    if r.precision != 1.0 {
        bad.push(format!("precision {} < 1", r.precision));
    }
    if r.accuracy != 1.0 {
        bad.push(format!("detection rate {} < 1", r.accuracy));
    }
    if let Some(l) = r.latencies.iter().find(|&&l| l > bound + 1e-9) {
        bad.push(format!("latency {l} s exceeds {bound} s"));
    }
    if !(r.latency_mean_s >= 0.002 && r.latency_mean_s <= bound) {
        bad.push(format!("mean latency {} s outside [0.002, {bound}] s", r.latency_mean_s));
    }
    bad
}

fn knife_failures(r: &TrialReport, trials: &[Trial]) -> Vec<String> {
    let bone = trials.iter().filter(|t| t.scenario.labels.as_ref().is_some_and(|l| l.bone_on_path)).count();
    let mut bad = Vec::new();
    if r.true_positives != bone {
        bad.push(format!("{}/{bone} contacts detected", r.true_positives));
    }
    if r.false_positives != 0 {
        bad.push(format!("{} false positives", r.false_positives));
    }
    if r.within_bound != Some(bone) {
        bad.push(format!("{:?}/{bone} latencies within the closed-form bound", r.within_bound));
    }
    bad
}

fn uncertainty(scenario: Option<&Path>, out: &Path, csv: Option<&Path>, assert: bool) -> Result<(), Failure> {
    let (spec, cfg, thresholds, params) = match scenario {
        Some(p) if p.is_dir() => {
            let first = load_trials(p)?.into_iter().next();
            let s = first.ok_or_else(|| ScenarioError::Invalid(format!("no scenarios in {}", p.display())))?.scenario;
            (s.meat, s.config, s.thresholds, s.uncertainty)
        }
        Some(p) => {
            let s = load_scenario(p)?;
            (s.meat, s.config, s.thresholds, s.uncertainty)
        }
        None => (table_specimen(), SimConfig::default(), ColorThresholds::default(), UncertaintyParams::default()),
    };
    let rows = run_uncertainty_table(&spec, &cfg, &thresholds, params, &table_cases())?;
    let report = serde_json::json!({ "experiment": "uncertainty", "beta": params.beta, "tau": params.tau, "rows": rows });
    std::fs::write(out, serde_json::to_string_pretty(&report)?).with_context(|| format!("writing {}", out.display()))?;
    if let Some(csv) = csv {
        let mut text = String::from("family,movement,d_px,d_cm,psi,alert\n");
        for r in &rows {
            text.push_str(&format!("{},{},{:.6},{:.6},{:.9},{}\n", r.family, r.movement, r.d_px, r.d_cm, r.psi, r.alert));
        }
        std::fs::write(csv, text).with_context(|| format!("writing {}", csv.display()))?;
    }
    for r in &rows {
        println!("{:<11} {:>5} d_px={:>8.3} psi={:.4} alert={}", r.family, r.movement, r.d_px, r.psi, r.alert);
    }
    if assert && !strictly_increasing(&rows) {
        return Err(assertion("psi is not strictly increasing within each movement family".into()));
    }
    Ok(())
}

fn strictly_increasing(rows: &[UncertaintyRow]) -> bool {
    ["translation", "rotation"].iter().all(|fam| {
        let mut f: Vec<&UncertaintyRow> = rows.iter().filter(|r| r.family == *fam).collect();
        f.sort_by(|a, b| a.movement.total_cmp(&b.movement));
        f.windows(2).all(|w| w[1].psi > w[0].psi)
    })
}

fn summary(r: &EpisodeResult) -> serde_json::Value {
    let t = &r.truth;
    serde_json::json!({
        "final_state": r.final_state,
        "final_zone": r.final_zone,
        "final_led": r.final_led,
        "end_t": r.end_t,
        "plans_proposed": t.plans_proposed,
        "threshold_lbf": t.threshold.map(|k| k.effective()),
        "first_bone_contact": t.first_bone_contact,
        "contact_t": t.contact.map(|c| c.t_detect),
        "cut_applied": t.cut_applied,
        "assessment": t.assessment,
    })
}

fn run_episode(path: &Path, log: Option<&Path>) -> Result<(), Failure> {
    let scenario = load_scenario(path)?;
    let result = run(&scenario)?;
    if let Some(log) = log {
        std::fs::write(log, result.log.to_jsonl()).with_context(|| format!("writing {}", log.display()))?;
    }
    println!("{}", serde_json::to_string_pretty(&summary(&result))?);
    Ok(())
}

fn serve_cmd(port: u16, path: &Path, speed: f64, once: bool) -> Result<(), Failure> {
    if !(speed > 0.0 && speed.is_finite()) {
        return Err(anyhow::anyhow!("--speed must be positive").into());
    }
    let scenario = load_scenario(path)?;
    Ok(serve::serve(port, &scenario, speed, once)?)
}

fn calibrate(path: &Path) -> Result<(), Failure> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let beta = calibrate_beta(&text)?;
    println!("{}", serde_json::json!({ "beta": beta }));
    Ok(())
}

fn generate(kind: GenerateKind, n: usize, seed: u64, out: &Path) -> Result<(), Failure> {
    let trials = match kind {
        GenerateKind::Hand => hand_trials(seed, n),
        GenerateKind::Knife => knife_trials(seed, n),
        GenerateKind::Demo => demo_trials(seed),
        GenerateKind::Fuzz => (0..n as u64).map(|i| fuzz_trial(seed, i)).collect(),
    };
    write_trials(out, &trials)?;
    println!("wrote {} scenarios to {}", trials.len(), out.display());
    Ok(())
}
