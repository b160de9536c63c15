//! Closed-loop execution of the search stage, trajectory audits and the
//! waypoint scaling study for the assessment stage.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assessment::{
    solve_assessment_with, AssessmentOptions, AssessmentProblem, AssessmentResult,
};
use crate::dynamics::{check_bounds, AgentParams, AgentState, ControlInput, Plan};
use crate::geometry::{Aabb, Cuboid, Waypoint};
use crate::mip::{SolveLimits, SolveStats, SolveStatus};
use crate::scenario::Scenario;
use crate::search::{mpc_step, StepOptions, VisitedMap};
use crate::{Error, Result, Vec3};

pub const DEFAULT_SEGMENT_SAMPLES: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Assess,
    Search,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub stage: Stage,
    pub max_steps: usize,
    /// Limits for each individual solve.
    pub limits: SolveLimits,
    pub workers: usize,
    pub seed: u64,
    pub segment_samples: usize,
    /// Overrides the scenario's horizon for the selected stage; with
    /// [`Stage::Both`] it applies to the search stage.
    pub horizon: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            stage: Stage::Search,
            max_steps: 200,
            limits: SolveLimits::nodes(40),
            workers: 1,
            seed: 0,
            segment_samples: DEFAULT_SEGMENT_SAMPLES,
            horizon: None,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_steps == 0 {
            return Err(Error::Problem("max_steps must be at least 1".into()));
        }
        if self.segment_samples == 0 {
            return Err(Error::Problem("segment_samples must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CuboidVisit {
    pub index: usize,
    pub object_id: String,
    pub face_index: usize,
    pub cell_index: usize,
    /// First executed step whose position lies in the cuboid.
    pub step: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceCoverage {
    pub object_id: String,
    pub face_index: usize,
    pub cuboids: usize,
    pub visited: usize,
    pub covered: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CollisionKind {
    /// An executed state.
    State,
    /// A point interpolated between two executed states.
    Segment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Collision {
    pub kind: CollisionKind,
    /// Segment start step; the point is `x_t + fraction (x_{t+1} - x_t)`.
    pub t: usize,
    pub fraction: f64,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Termination {
    Complete,
    /// Only the assessment stage was flown.
    AssessmentOnly,
    MaxSteps,
    SolverFailure {
        step: usize,
        message: String,
    },
}

/// Solver summary of one receding-horizon step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub target: usize,
    pub horizon: usize,
    pub status: SolveStatus,
    pub nodes: usize,
    pub objective: f64,
    pub new_visits: Vec<usize>,
}

/// Stage-one result without the trajectory, which is exported separately.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssessmentSummary {
    pub visit_schedule: Vec<usize>,
    pub misses: Vec<f64>,
    pub objective: f64,
    pub stats: SolveStats,
}

impl From<&AssessmentResult> for AssessmentSummary {
    fn from(r: &AssessmentResult) -> Self {
        Self {
            visit_schedule: r.visit_schedule.clone(),
            misses: r.misses.clone(),
            objective: r.objective,
            stats: r.stats.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub termination: Termination,
    pub steps: usize,
    /// Steps flown by the assessment stage before the search began.
    pub assessment_steps: usize,
    pub total_cuboids: usize,
    pub visited_count: usize,
    pub visits: Vec<CuboidVisit>,
    pub faces: Vec<FaceCoverage>,
    pub objects_covered: Vec<(String, bool)>,
    /// Executed states within `epsilon` of a body.
    pub state_collisions: Vec<Collision>,
    /// Interpolated points within `epsilon` of a body; advisory.
    pub segment_collisions: Vec<Collision>,
    pub bound_violations: usize,
    pub assessment: Option<AssessmentSummary>,
    pub step_stats: Vec<StepRecord>,
}

impl CoverageReport {
    pub fn complete(&self) -> bool {
        self.termination == Termination::Complete
    }

    pub fn total_nodes(&self) -> usize {
        self.step_stats.iter().map(|s| s.nodes).sum()
    }
}

#[derive(Debug, Clone)]
pub struct MissionOutcome {
    pub plan: Plan,
    pub assessment: Option<AssessmentResult>,
    pub report: CoverageReport,
    /// Wall time of each step's solve, seconds; kept out of the report.
    pub step_times: Vec<f64>,
}

/// Points of `plan` within `margin` of any body: every executed state, and
/// `samples` evenly spaced interior points of every segment.
pub fn audit_collisions(
    plan: &Plan,
    bodies: &[(String, Cuboid)],
    samples: usize,
    margin: f64,
) -> Vec<Collision> {
    let states = plan.states();
    let mut out = Vec::new();
    // A point collides when every face row holds with the margin, less the
    // feasibility tolerance the planner's rows are allowed.
    let hit = |p: &Vec3| -> Vec<&String> {
        bodies
            .iter()
            .filter(|(_, b)| b.contains_with_margin(p, margin - 1e-6))
            .map(|(id, _)| id)
            .collect()
    };
    for (t, s) in states.iter().enumerate() {
        for id in hit(&s.position) {
            out.push(Collision {
                kind: CollisionKind::State,
                t,
                fraction: 0.0,
                body: id.clone(),
            });
        }
    }
    for t in 0..states.len().saturating_sub(1) {
        let (a, b) = (states[t].position, states[t + 1].position);
        for k in 1..=samples {
            let fraction = k as f64 / (samples + 1) as f64;
            let p = a + (b - a) * fraction;
            for id in hit(&p) {
                out.push(Collision {
                    kind: CollisionKind::Segment,
                    t,
                    fraction,
                    body: id.clone(),
                });
            }
        }
    }
    out
}

/// Flies the search stage from `start` until every coverage cuboid has been
/// entered, the step budget runs out, or a step cannot be solved.
pub fn run_search_mission(
    scenario: &Scenario,
    start: AgentState,
    config: &RunConfig,
) -> Result<MissionOutcome> {
    config.validate()?;
    fly(scenario, Plan::new(start), None, true, config)
}

/// Runs the stages selected by `config.stage` from the scenario's initial
/// state. With [`Stage::Both`] the search starts where the assessment plan
/// ends, and the exported trajectory is the concatenation.
pub fn run_mission(scenario: &Scenario, config: &RunConfig) -> Result<MissionOutcome> {
    config.validate()?;
    let assessment = match config.stage {
        Stage::Search => None,
        Stage::Assess | Stage::Both => {
            let horizon = match config.stage {
                Stage::Assess => config.horizon,
                _ => None,
            };
            let problem = scenario.assessment_problem(scenario.initial, horizon)?;
            let options = AssessmentOptions {
                limits: config.limits,
                workers: config.workers,
                schedules: vec![],
            };
            Some(solve_assessment_with(&problem, &options)?)
        }
    };
    let prefix = assessment
        .as_ref()
        .map(|a| a.plan.clone())
        .unwrap_or_else(|| Plan::new(scenario.initial));
    fly(
        scenario,
        prefix,
        assessment,
        config.stage != Stage::Assess,
        config,
    )
}

fn fly(
    scenario: &Scenario,
    prefix: Plan,
    assessment: Option<AssessmentResult>,
    search: bool,
    config: &RunConfig,
) -> Result<MissionOutcome> {
    let cuboids = scenario.coverage_cuboids()?;
    let mut visited = VisitedMap::new(cuboids.len());
    let mut first_visit: Vec<Option<usize>> = vec![None; cuboids.len()];
    let mut mark = |p: &Vec3, step: usize, visited: &mut VisitedMap| -> Vec<usize> {
        let mut new = Vec::new();
        for (n, c) in cuboids.iter().enumerate() {
            if c.cuboid.contains(p) && visited.mark(n) {
                first_visit[n] = Some(step);
                new.push(n);
            }
        }
        new
    };
    for (t, s) in prefix.states().iter().enumerate() {
        mark(&s.position, t, &mut visited);
    }

    let assessment_steps = prefix.len();
    let mut plan = prefix;
    let mut warm: Vec<ControlInput> = Vec::new();
    let mut stats = Vec::new();
    let mut times = Vec::new();
    let mut termination = if search {
        None
    } else {
        Some(Termination::AssessmentOnly)
    };
    for step in 0..if search { config.max_steps } else { 0 } {
        if visited.all_visited() {
            break;
        }
        let problem = scenario.search_problem(
            plan.final_state(),
            cuboids.clone(),
            visited.clone(),
            config.horizon,
        );
        let options = StepOptions {
            limits: config.limits,
            workers: config.workers,
            warm_controls: warm.clone(),
        };
        let result = match mpc_step(&problem, &options) {
            Ok(r) => r,
            Err(e) => {
                termination = Some(Termination::SolverFailure {
                    step,
                    message: e.to_string(),
                });
                break;
            }
        };
        let state = plan.push(result.controls[0], &scenario.agent);
        let new_visits = mark(&state.position, plan.len(), &mut visited);
        times.push(result.stats.wall_time);
        stats.push(StepRecord {
            step,
            target: result.target,
            horizon: result.horizon,
            status: result.stats.status,
            nodes: result.stats.nodes,
            objective: result.objective,
            new_visits,
        });
        warm = result.controls[1..].to_vec();
    }
    let termination = termination.unwrap_or(if visited.all_visited() {
        Termination::Complete
    } else {
        Termination::MaxSteps
    });

    let mut bodies: Vec<(String, Cuboid)> = scenario
        .obstacles
        .iter()
        .map(|o| (o.id.clone(), o.body.clone()))
        .collect();
    bodies.extend(
        scenario
            .objects
            .iter()
            .map(|o| (o.id.clone(), o.body.clone())),
    );
    let collisions = audit_collisions(&plan, &bodies, config.segment_samples, scenario.epsilon);
    let (state_collisions, segment_collisions) = collisions
        .into_iter()
        .partition(|c| c.kind == CollisionKind::State);

    let visits: Vec<CuboidVisit> = cuboids
        .iter()
        .enumerate()
        .map(|(n, c)| CuboidVisit {
            index: n,
            object_id: c.object_id.clone(),
            face_index: c.face_index,
            cell_index: c.cell_index,
            step: first_visit[n],
        })
        .collect();
    let mut faces = Vec::new();
    for o in &scenario.objects {
        for &f in &o.faces {
            let of: Vec<&CuboidVisit> = visits
                .iter()
                .filter(|v| v.object_id == o.id && v.face_index == f)
                .collect();
            let seen = of.iter().filter(|v| v.step.is_some()).count();
            faces.push(FaceCoverage {
                object_id: o.id.clone(),
                face_index: f,
                cuboids: of.len(),
                visited: seen,
                covered: seen == of.len(),
            });
        }
    }
    let objects_covered = scenario
        .objects
        .iter()
        .map(|o| {
            let covered = faces
                .iter()
                .filter(|f| f.object_id == o.id)
                .all(|f| f.covered);
            (o.id.clone(), covered)
        })
        .collect();

    let report = CoverageReport {
        termination,
        steps: plan.len(),
        assessment_steps,
        total_cuboids: cuboids.len(),
        visited_count: visited.count(),
        visits,
        faces,
        objects_covered,
        state_collisions,
        segment_collisions,
        bound_violations: check_bounds(&plan, &scenario.agent).len(),
        assessment: assessment.as_ref().map(AssessmentSummary::from),
        step_stats: stats,
    };
    Ok(MissionOutcome {
        plan,
        assessment,
        report,
        step_times: times,
    })
}

// Scaling study --------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub area: Aabb,
    pub counts: Vec<usize>,
    pub trials: usize,
    /// Trial `i` uses `horizons[i % horizons.len()]`.
    pub horizons: Vec<usize>,
    pub seed: u64,
    pub limits: SolveLimits,
    /// Trials solved concurrently.
    pub workers: usize,
    pub params: AgentParams,
}

impl StudyConfig {
    pub fn new(area: Aabb, counts: Vec<usize>, trials: usize, horizon: usize, seed: u64) -> Self {
        Self {
            area,
            counts,
            trials,
            horizons: vec![horizon],
            seed,
            limits: SolveLimits::nodes(30),
            workers: 1,
            params: AgentParams::reference(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyInstance {
    pub trial: usize,
    pub count: usize,
    pub horizon: usize,
    pub problem: AssessmentProblem,
    pub result: AssessmentResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub count: usize,
    pub trials: usize,
    pub mean_nodes: f64,
    pub mean_objective: f64,
}

#[derive(Debug, Clone)]
pub struct StudyOutcome {
    pub rows: Vec<StudyRow>,
    pub instances: Vec<StudyInstance>,
    /// Mean solve wall time per row, seconds.
    pub mean_runtime: Vec<f64>,
}

fn trial_instances(config: &StudyConfig, trial: usize) -> Result<Vec<StudyInstance>> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(trial as u64);
    let max = config.counts.iter().copied().max().unwrap_or(0);
    let area = &config.area;
    let waypoints: Vec<Waypoint> = (0..max)
        .map(|j| Waypoint {
            position: Vec3::from_fn(|k, _| rng.gen_range(area.min[k]..=area.max[k])),
            object_id: format!("w{j}"),
        })
        .collect();
    let horizon = config.horizons[trial % config.horizons.len()];
    let x0 = AgentState::at_rest((area.min + area.max) / 2.0);

    // Largest count first: its schedule, cut down, seeds the smaller ones so
    // the reported objectives are nested like the waypoint sets.
    let mut counts = config.counts.clone();
    counts.sort_unstable();
    counts.dedup();
    let mut out = Vec::new();
    let mut seed_schedule: Option<Vec<usize>> = None;
    for &count in counts.iter().rev() {
        let problem = AssessmentProblem {
            x0,
            waypoints: waypoints[..count].to_vec(),
            horizon,
            params: config.params,
            bounds: *area,
            big_m: None,
        };
        let options = AssessmentOptions {
            limits: config.limits,
            workers: 1,
            schedules: seed_schedule.iter().map(|s| s[..count].to_vec()).collect(),
        };
        let result = solve_assessment_with(&problem, &options)?;
        seed_schedule = Some(result.visit_schedule.clone());
        out.push(StudyInstance {
            trial,
            count,
            horizon,
            problem,
            result,
        });
    }
    out.reverse();
    Ok(out)
}

/// Monte Carlo study of the assessment stage: uniform random waypoints in
/// `area`, the agent starting at rest in its center. Waypoint sets are nested
/// within a trial. Results do not depend on `workers`.
pub fn waypoint_scaling_study(config: &StudyConfig) -> Result<StudyOutcome> {
    if config.trials == 0 {
        return Err(Error::Problem("trials must be at least 1".into()));
    }
    if config.horizons.is_empty() || config.counts.is_empty() {
        return Err(Error::Problem(
            "need at least one horizon and one waypoint count".into(),
        ));
    }
    if let Some(&c) = config.counts.iter().find(|&&c| c == 0) {
        return Err(Error::Problem(format!(
            "waypoint count {c} is not positive"
        )));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers.max(1))
        .build()
        .map_err(|e| Error::Problem(format!("cannot start worker pool: {e}")))?;
    let per_trial: Vec<Result<Vec<StudyInstance>>> = pool.install(|| {
        (0..config.trials)
            .into_par_iter()
            .map(|t| trial_instances(config, t))
            .collect()
    });
    let mut instances = Vec::new();
    for r in per_trial {
        instances.extend(r?);
    }
    let mut counts = config.counts.clone();
    counts.sort_unstable();
    counts.dedup();
    let mut rows = Vec::new();
    let mut mean_runtime = Vec::new();
    for &count in &counts {
        let of: Vec<&StudyInstance> = instances.iter().filter(|i| i.count == count).collect();
        let n = of.len() as f64;
        rows.push(StudyRow {
            count,
            trials: of.len(),
            mean_nodes: of.iter().map(|i| i.result.stats.nodes as f64).sum::<f64>() / n,
            mean_objective: of.iter().map(|i| i.result.objective).sum::<f64>() / n,
        });
        mean_runtime.push(of.iter().map(|i| i.result.stats.wall_time).sum::<f64>() / n);
    }
    Ok(StudyOutcome {
        rows,
        instances,
        mean_runtime,
    })
}

pub fn study_csv(rows: &[StudyRow]) -> String {
    let mut out = String::from("count,trials,mean_nodes,mean_objective\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.count, r.trials, r.mean_nodes, r.mean_objective
        ));
    }
    out
}

/// Per-step solve wall times of a mission, seconds.
pub fn step_timing_csv(times: &[f64]) -> String {
    let mut out = String::from("step,wall_time_s\n");
    for (k, t) in times.iter().enumerate() {
        out.push_str(&format!("{k},{t}\n"));
    }
    out
}

pub fn study_timing_csv(rows: &[StudyRow], runtimes: &[f64]) -> String {
    let mut out = String::from("count,mean_runtime_s\n");
    for (r, t) in rows.iter().zip(runtimes) {
        out.push_str(&format!("{},{t}\n", r.count));
    }
    out
}
