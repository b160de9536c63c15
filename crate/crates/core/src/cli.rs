//! The `coverplan` command line.
//!
//! Exit codes: 0 on success, 1 when a solve is infeasible or a mission ends
//! incomplete, 2 on bad input.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::assessment::build_assessment_model;
use crate::geometry::Aabb;
use crate::harness::{
    run_mission, step_timing_csv, study_csv, study_timing_csv, waypoint_scaling_study,
    MissionOutcome, RunConfig, Stage, StudyConfig, Termination,
};
use crate::mip::{write_mps, SolveLimits};
use crate::scenario::{export_report, export_trajectory, load_scenario};
use crate::search::{build_search_model, VisitedMap};
use crate::{Error, Vec3};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_INPUT: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "coverplan",
    version,
    about = "Two-stage coverage planning for a camera-equipped UAV"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the waypoint assessment program once.
    Assess(MissionArgs),
    /// Fly the receding-horizon search from the initial state.
    Search(MissionArgs),
    /// Assessment followed by search from where it ends.
    Run(MissionArgs),
    /// Validate a scenario and report model sizes without solving.
    Check(CheckArgs),
    /// Random-waypoint scaling study of the assessment stage.
    Study(StudyArgs),
}

#[derive(Debug, Args)]
pub struct SolverArgs {
    /// Wall-clock budget per solve, seconds.
    #[arg(long)]
    pub time_limit: Option<f64>,
    /// Branch-and-bound node budget per solve.
    #[arg(long, default_value_t = 40)]
    pub nodes: usize,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, short)]
    pub verbose: bool,
}

#[derive(Debug, Args)]
pub struct MissionArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    #[arg(long)]
    pub horizon: Option<usize>,
    #[arg(long, default_value_t = 200)]
    pub max_steps: usize,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    /// Also write both models in MPS format here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub horizon: Option<usize>,
    #[arg(long, short)]
    pub verbose: bool,
}

#[derive(Debug, Args)]
pub struct StudyArgs {
    #[arg(long, value_delimiter = ',', default_value = "2,4,6")]
    pub counts: Vec<usize>,
    #[arg(long, default_value_t = 20)]
    pub trials: usize,
    #[arg(long, default_value_t = 50)]
    pub horizon: usize,
    /// Box edge lengths; the box starts at the origin.
    #[arg(long, value_delimiter = ',', default_value = "200,200,50")]
    pub area: Vec<f64>,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 30)]
    pub nodes: usize,
    #[arg(long)]
    pub time_limit: Option<f64>,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, short)]
    pub verbose: bool,
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code.
pub fn main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Infeasible(_) | Error::Solver(_) => EXIT_FAILED,
        _ => EXIT_INPUT,
    }
}

fn run(command: Command) -> crate::Result<i32> {
    match command {
        Command::Assess(a) => mission(a, Stage::Assess),
        Command::Search(a) => mission(a, Stage::Search),
        Command::Run(a) => mission(a, Stage::Both),
        Command::Check(a) => check(a),
        Command::Study(a) => study(a),
    }
}

fn limits(nodes: usize, time_limit: Option<f64>) -> crate::Result<SolveLimits> {
    if let Some(t) = time_limit {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::Problem(format!(
                "time limit must be positive, got {t}"
            )));
        }
    }
    if nodes == 0 {
        return Err(Error::Problem("node budget must be at least 1".into()));
    }
    Ok(SolveLimits {
        time_limit,
        node_limit: Some(nodes),
        ..SolveLimits::default()
    })
}

fn create_dir(dir: &Path) -> crate::Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

fn mission(args: MissionArgs, stage: Stage) -> crate::Result<i32> {
    let scenario = load_scenario(&args.scenario)?;
    let config = RunConfig {
        stage,
        max_steps: args.max_steps,
        limits: limits(args.solver.nodes, args.solver.time_limit)?,
        workers: args.solver.workers.max(1),
        seed: args.solver.seed,
        horizon: args.horizon,
        ..RunConfig::default()
    };
    let started = Instant::now();
    let outcome = run_mission(&scenario, &config)?;
    let wall = started.elapsed().as_secs_f64();
    create_dir(&args.out)?;
    export_trajectory(&outcome.plan, &args.out.join("trajectory.csv"))?;
    export_report(&outcome.report, &scenario, &args.out.join("report.json"))?;
    let mut times = outcome
        .assessment
        .iter()
        .map(|a| a.stats.wall_time)
        .collect::<Vec<_>>();
    times.extend(&outcome.step_times);
    std::fs::write(args.out.join("timing.csv"), step_timing_csv(&times))?;

    if args.solver.verbose {
        print_steps(&outcome);
    }
    let report = &outcome.report;
    if let Some(a) = &outcome.assessment {
        println!(
            "assessment: objective {:.6}, schedule {:?}, nodes {}, {:?}",
            a.objective, a.visit_schedule, a.stats.nodes, a.stats.status
        );
    }
    println!(
        "visits {}/{}, steps {}, nodes {}, wall {:.2} s",
        report.visited_count,
        report.total_cuboids,
        report.steps,
        report.total_nodes() + outcome.assessment.as_ref().map_or(0, |a| a.stats.nodes),
        wall
    );
    match &report.termination {
        Termination::Complete | Termination::AssessmentOnly => Ok(EXIT_OK),
        Termination::MaxSteps => {
            eprintln!(
                "mission incomplete after {} search steps",
                report.step_stats.len()
            );
            Ok(EXIT_FAILED)
        }
        Termination::SolverFailure { step, message } => {
            eprintln!("search step {step} failed: {message}");
            Ok(EXIT_FAILED)
        }
    }
}

fn print_steps(outcome: &MissionOutcome) {
    let states = outcome.plan.states();
    let offset = outcome.report.assessment_steps;
    for s in &outcome.report.step_stats {
        let p = states[offset + s.step + 1].position;
        println!(
            "step {:>4}  target {:>3}  T {:>2}  {:?} nodes {:>4}  obj {:>12.4}  p ({:.2}, {:.2}, {:.2})  new {:?}",
            s.step, s.target, s.horizon, s.status, s.nodes, s.objective, p.x, p.y, p.z, s.new_visits
        );
    }
}

fn check(args: CheckArgs) -> crate::Result<i32> {
    let scenario = load_scenario(&args.scenario)?;
    let cuboids = scenario.coverage_cuboids()?;
    let per_object = scenario.cuboids_per_object()?;
    println!("scenario: {} ({})", scenario.name, scenario.digest());
    let listing: Vec<String> = scenario
        .objects
        .iter()
        .zip(&per_object)
        .map(|(o, n)| format!("{} {n}", o.id))
        .collect();
    println!(
        "coverage cuboids: {} ({})",
        cuboids.len(),
        listing.join(", ")
    );
    println!("avoided bodies: {}", scenario.avoided_bodies().len());

    let assess = build_assessment_model(&scenario.assessment_problem(scenario.initial, None)?)?;
    println!(
        "assessment model: T={} vars {}, binaries {}, constraints {}",
        scenario.assess_horizon,
        assess.model.num_vars(),
        assess.model.num_binaries(),
        assess.model.constraints.len()
    );
    let problem = scenario.search_problem(
        scenario.initial,
        cuboids.clone(),
        VisitedMap::new(cuboids.len()),
        args.horizon,
    );
    let search = build_search_model(&problem)?;
    let f = search.families;
    println!(
        "search model: T={} vars {}, constraints {}",
        problem.horizon,
        search.model.num_vars(),
        search.model.constraints.len()
    );
    println!("binaries: {}", search.model.num_binaries());
    println!(
        "  membership {}, aggregation {}, entry {}, reward {}, avoidance {}",
        f.membership, f.inside, f.entered, f.reward, f.avoidance
    );
    if args.verbose {
        for (n, c) in cuboids.iter().enumerate() {
            let p = c.cuboid.centroid();
            println!(
                "  cuboid {n:>3}: {} face {} cell {} at ({:.3}, {:.3}, {:.3})",
                c.object_id, c.face_index, c.cell_index, p.x, p.y, p.z
            );
        }
    }
    if let Some(out) = &args.out {
        create_dir(out)?;
        std::fs::write(
            out.join("assessment.mps"),
            write_mps(&assess.model, "ASSESS"),
        )?;
        std::fs::write(out.join("search.mps"), write_mps(&search.model, "SEARCH"))?;
    }
    Ok(EXIT_OK)
}

fn study(args: StudyArgs) -> crate::Result<i32> {
    let [x, y, z] = args.area[..] else {
        return Err(Error::Problem(format!(
            "--area needs three lengths, got {}",
            args.area.len()
        )));
    };
    if !(x > 0.0 && y > 0.0 && z > 0.0) {
        return Err(Error::Problem("--area lengths must be positive".into()));
    }
    let area = Aabb::new(Vec3::zeros(), Vec3::new(x, y, z));
    let mut config = StudyConfig::new(area, args.counts, args.trials, args.horizon, args.seed);
    config.limits = limits(args.nodes, args.time_limit)?;
    config.workers = args.workers.max(1);
    let started = Instant::now();
    let outcome = waypoint_scaling_study(&config)?;
    create_dir(&args.out)?;
    std::fs::write(args.out.join("study.csv"), study_csv(&outcome.rows))?;
    std::fs::write(
        args.out.join("study_timing.csv"),
        study_timing_csv(&outcome.rows, &outcome.mean_runtime),
    )?;
    for (r, t) in outcome.rows.iter().zip(&outcome.mean_runtime) {
        if args.verbose {
            println!(
                "count {:>3}: mean objective {:.4}, mean nodes {:.1}, mean runtime {:.3} s",
                r.count, r.mean_objective, r.mean_nodes, t
            );
        }
    }
    println!(
        "study: {} instances in {:.2} s",
        outcome.instances.len(),
        started.elapsed().as_secs_f64()
    );
    Ok(EXIT_OK)
}
