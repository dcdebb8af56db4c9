//! `riarit`: batch simulations, the live session server and config checks.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use riarit_core::exercise::Catalog;
use riarit_core::experiment::{
    compare, write_frame, ComparisonReport, Experiment, ExperimentConfig, MetricsFrame,
    PopulationRef,
};
use riarit_core::{stats, Scenario, TeacherKind};
use riarit_server::{AppState, ServerConfig};
use serde_json::json;

const SCENARIO_ENV: &str = "RIARIT_SCENARIO";

#[derive(Debug, Parser)]
#[command(name = "riarit", version, about = "Adaptive activity selection: simulate, serve, validate")]
struct Cli {
    /// Master seed. Simulations with the same inputs and seed write identical files.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a teacher (or both) against a simulated population and write CSVs.
    ///
    /// Output directory layout:
    ///   trace.csv                        run,student,step,teacher,<params>,correct,reward,
    ///                                    c_est_<kc>...,c_true_<kc>...,cum_err
    ///   summary_exercise_types.csv       step,ex_type,count,share
    ///   summary_competence.csv           step,kc,source,min,q1,median,q3,max,mean
    ///   summary_estimation_error.csv     step,mean_abs_error
    ///   summary_cumulative_errors.csv    step,ex_type,mean_cum_errors
    ///   summary_max_levels.csv           ex_type,reached,succeeded
    ///   run_manifest.json                arguments and wall-clock timestamps
    ///
    /// With --both each teacher gets its own subdirectory and the top level
    /// holds comparison.csv (one row per KC, final estimated competence) and
    /// comparison_metrics.csv. Differences are riarit minus predefined.
    Simulate(SimulateArgs),
    /// Serve the HTTP+JSON session API until Ctrl-C or SIGTERM.
    ///
    /// GET  /api/health                  {status, scenario}
    /// GET  /api/scenario                scenario as loaded
    /// POST /api/sessions                {scenario?, teacher?, seed?} -> 201 {session_id, ...}
    /// GET  /api/sessions/{id}/next      next exercise
    /// POST /api/sessions/{id}/answer    {items, trial} -> verdict, reward, status
    /// POST /api/sessions/{id}/hint      {largest_item}
    /// GET  /api/sessions/{id}/state     competences, counters, status
    /// GET  /api/sessions/{id}/events    the session's event log
    Serve(ServeArgs),
    /// Load a scenario and optionally an experiment config, and report problems.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Experiment config (JSON). Flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Scenario file. Falls back to the config's, then $RIARIT_SCENARIO, then the shipped one.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// `builtin:q`, `builtin:p` or a population file.
    #[arg(long)]
    population: Option<String>,
    #[arg(long, value_parser = parse_teacher)]
    teacher: Option<TeacherKind>,
    /// Run both teachers on the same students and compare them.
    #[arg(long, conflicts_with = "teacher")]
    both: bool,
    #[arg(long)]
    students: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    runs: Option<usize>,
    /// Let simulated students learn from exercises.
    #[arg(long)]
    learn: bool,
    /// Record every n-th step in trace.csv.
    #[arg(long)]
    stride: Option<usize>,
    /// Worker threads; all cores when omitted. Does not affect results.
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long, env = SCENARIO_ENV)]
    scenario: Option<PathBuf>,
    /// Object catalog; the shipped one when omitted.
    #[arg(long)]
    catalog: Option<PathBuf>,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    #[arg(long, default_value = "data")]
    data_dir: PathBuf,
    /// Teacher for sessions that do not name one.
    #[arg(long, value_parser = parse_teacher, default_value = "riarit")]
    teacher: TeacherKind,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    #[arg(long, env = SCENARIO_ENV)]
    scenario: Option<PathBuf>,
    /// Experiment config; its scenario and population are checked too.
    #[arg(long)]
    config: Option<PathBuf>,
}

fn parse_teacher(s: &str) -> Result<TeacherKind, String> {
    s.parse::<TeacherKind>().map_err(|e| e.to_string())
}

fn now_ms() -> u128 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0)
}

fn load_scenario(path: Option<&Path>) -> Result<Scenario> {
    Ok(match path {
        Some(p) => Scenario::load(p)?,
        None => Scenario::default_scenario(),
    })
}

fn experiment_config(args: &SimulateArgs, seed: Option<u64>) -> Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig {
            scenario: None,
            population: PopulationRef::Named("builtin:q".into()),
            teacher: TeacherKind::Riarit,
            students_learn: false,
            learn_comprehension: false,
            n_students: 1000,
            n_steps: 100,
            n_runs: 1,
            seed: 0,
            out: None,
            trace_stride: 1,
        },
    };
    if let Some(s) = &args.scenario {
        cfg.scenario = Some(s.clone());
    } else if cfg.scenario.is_none() {
        cfg.scenario = std::env::var_os(SCENARIO_ENV).map(PathBuf::from);
    }
    if let Some(p) = &args.population {
        cfg.population = PopulationRef::Named(p.clone());
    }
    if let Some(t) = args.teacher {
        cfg.teacher = t;
    }
    if let Some(n) = args.students {
        cfg.n_students = n;
    }
    if let Some(n) = args.steps {
        cfg.n_steps = n;
    }
    if let Some(n) = args.runs {
        cfg.n_runs = n;
    }
    if let Some(n) = args.stride {
        cfg.trace_stride = n;
    }
    if args.learn {
        cfg.students_learn = true;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(o) = &args.out {
        cfg.out = Some(o.clone());
    }
    Ok(cfg)
}

fn digest_frame(frame: &MetricsFrame) {
    println!(
        "{}: population {:?}, {} run(s) x {} students x {} steps, seed {}",
        frame.teacher, frame.population, frame.n_runs, frame.n_students, frame.n_steps, frame.seed
    );
    println!("  {:<18} {:>9} {:>9}", "kc", "estimated", "true");
    for (k, id) in frame.kc_ids.iter().enumerate() {
        let est: Vec<f64> = frame.students.iter().map(|s| s.final_est[k]).collect();
        let tru: Vec<f64> = frame.students.iter().map(|s| s.final_true[k]).collect();
        println!("  {:<18} {:>9.3} {:>9.3}", id, stats::mean(&est), stats::mean(&tru));
    }
    let err: Vec<f64> = frame.students.iter().map(|s| s.mean_abs_error()).collect();
    let mistakes: Vec<f64> = frame.students.iter().map(|s| f64::from(s.errors)).collect();
    println!(
        "  mean |est - true| {:.4}   mean errors per student {:.2}",
        stats::mean(&err),
        stats::mean(&mistakes)
    );
}

fn digest_comparison(report: &ComparisonReport) {
    println!("{} - {} (paired per student)", report.label_b, report.label_a);
    println!(
        "  {:<18} {:<18} {:>9} {:>20} {:>9}",
        "metric", "kc", "diff", "95% ci", "p"
    );
    for m in report.per_kc.iter().chain(&report.metrics) {
        println!(
            "  {:<18} {:<18} {:>+9.4} {:>20} {:>9.2e}",
            m.metric,
            m.kc,
            m.mean_diff,
            format!("[{:+.4}, {:+.4}]", m.ci_low, m.ci_high),
            m.paired_p
        );
    }
}

fn simulate(args: SimulateArgs, seed: Option<u64>) -> Result<()> {
    let started = now_ms();
    let clock = Instant::now();
    let cfg = experiment_config(&args, seed)?;
    let out = cfg.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    let experiment = cfg.resolve()?;
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;

    let mut written = Vec::new();
    if args.both {
        let base: Experiment = experiment;
        let mut frames = Vec::new();
        for teacher in [TeacherKind::Predefined, TeacherKind::Riarit] {
            let frame = base.with_teacher(teacher).run(args.workers);
            let dir = out.join(teacher.as_str());
            write_frame(&frame, &dir)?;
            written.push(dir.display().to_string());
            digest_frame(&frame);
            frames.push(frame);
        }
        let report = compare(&frames[0], &frames[1])?;
        report.write_to(&out)?;
        written.push(out.join("comparison.csv").display().to_string());
        written.push(out.join("comparison_metrics.csv").display().to_string());
        digest_comparison(&report);
    } else {
        let frame = experiment.run(args.workers);
        write_frame(&frame, &out)?;
        written.push(out.display().to_string());
        digest_frame(&frame);
    }

    let manifest = json!({
        "command": std::env::args().collect::<Vec<_>>(),
        "started_unix_ms": started as u64,
        "finished_unix_ms": now_ms() as u64,
        "elapsed_ms": clock.elapsed().as_millis() as u64,
        "seed": cfg.seed,
        "outputs": written,
    });
    let path = out.join("run_manifest.json");
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)?)
        .with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}", out.display());
    Ok(())
}

fn serve(args: ServeArgs, seed: Option<u64>) -> Result<()> {
    let scenario = load_scenario(args.scenario.as_deref())?;
    let catalog = match &args.catalog {
        Some(p) => Catalog::load(p)?,
        None => Catalog::default_catalog(),
    };
    let addr: SocketAddr = format!("{}:{}", args.host, args.port)
        .parse()
        .with_context(|| format!("bad address {}:{}", args.host, args.port))?;
    let state = AppState::open(ServerConfig {
        scenario: Arc::new(scenario),
        catalog: Arc::new(catalog),
        default_teacher: args.teacher,
        data_dir: args.data_dir,
        seed_base: seed,
    })?;
    let runtime = tokio::runtime::Runtime::new()?;
    runtime
        .block_on(riarit_server::serve(state, addr, riarit_server::shutdown_signal()))
        .with_context(|| format!("serving on {addr}"))?;
    tracing::info!("stopped");
    Ok(())
}

fn validate(args: ValidateArgs) -> Result<()> {
    let mut failures = 0;
    let mut check = |what: String, result: Result<String>| match result {
        Ok(detail) => println!("ok    {what}: {detail}"),
        Err(e) => {
            failures += 1;
            eprintln!("error {what}: {e:#}");
        }
    };
    let name = args
        .scenario
        .as_ref()
        .map(|p| p.display().to_string())
        .unwrap_or_else(|| "shipped scenario".into());
    check(
        name,
        load_scenario(args.scenario.as_deref()).map(|s| {
            format!(
                "`{}`, {} KCs, {} parameters, {} activities, {} constraints",
                s.id,
                s.kc_count(),
                s.space.len(),
                s.space.activity_count(),
                s.constraints.len()
            )
        }),
    );
    if let Some(path) = &args.config {
        check(
            path.display().to_string(),
            ExperimentConfig::load(path)
                .map_err(anyhow::Error::from)
                .and_then(|cfg| Ok(cfg.resolve()?))
                .map(|e| {
                    format!(
                        "{} teacher, {} students x {} steps x {} runs",
                        e.settings.teacher, e.population.size, e.settings.n_steps, e.settings.n_runs
                    )
                }),
        );
    }
    if failures > 0 {
        bail!("{failures} problem(s) found");
    }
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(args) => simulate(args, cli.seed),
        Command::Serve(args) => serve(args, cli.seed),
        Command::Validate(args) => validate(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
