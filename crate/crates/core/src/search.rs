//! Stage two: one step of the rolling-horizon program that flies the agent
//! through coverage cuboids while keeping clear of obstacles.
//!
//! Planned states are model variables tied together by the dynamics rows.
//! Membership of `H x_{t+tau+1}` in cuboid `n` is tracked face by face with
//! big-M rows, aggregated per step, then once per horizon, and finally gated
//! by the visited map before it can earn reward.
//!
//! Big-M constants are computed per row over an outer box of the positions
//! reachable at that step, clipped to the scenario bounds. Indicators that the
//! box rules out are fixed by their bounds; they stay in the model so the
//! variable count is the textbook one.

use serde::{Deserialize, Serialize};

use crate::dynamics::{reachable_boxes, rollout, AgentParams, AgentState, ControlInput};
use crate::geometry::{Aabb, CoverageCuboid, Cuboid};
use crate::mip::{
    solve_with, validate, AffineExpr, Assignment, MipModel, MipSolution, PrimalHeuristic, Relation,
    SolveLimits, SolveOptions, SolveStats, SolveStatus, VarId, FEAS_TOL,
};
use crate::{Error, Result, Vec3};

/// Objective weights: terminal tracking `a`, control smoothness `b`, reward `c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Self {
            a: 0.3,
            b: 0.001,
            c: 0.001,
        }
    }
}

/// Which coverage cuboids the executed trajectory has entered.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VisitedMap {
    bits: Vec<bool>,
}

impl VisitedMap {
    pub fn new(n: usize) -> Self {
        Self {
            bits: vec![false; n],
        }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn is_visited(&self, n: usize) -> bool {
        self.bits[n]
    }

    /// Sets bit `n`; returns whether it was newly set.
    pub fn mark(&mut self, n: usize) -> bool {
        !std::mem::replace(&mut self.bits[n], true)
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn all_visited(&self) -> bool {
        self.bits.iter().all(|b| *b)
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.bits
    }
}

/// Closest unvisited cuboid centroid to `position`; distances within 1e-9 m
/// count as ties, which go to the lowest index. `None` once everything is
/// visited.
pub fn nearest_unvisited(
    position: &Vec3,
    cuboids: &[CoverageCuboid],
    visited: &VisitedMap,
) -> Option<(usize, Vec3)> {
    let mut best: Option<(usize, Vec3, f64)> = None;
    for (n, c) in cuboids.iter().enumerate() {
        if visited.is_visited(n) {
            continue;
        }
        let centroid = c.centroid();
        let d = (centroid - position).norm();
        if best.as_ref().is_none_or(|b| d < b.2 - 1e-9) {
            best = Some((n, centroid, d));
        }
    }
    best.map(|(n, c, _)| (n, c))
}

/// Binary variables of the search program for `objects` objects with
/// `per_object` cuboids each, `obstacles` avoided bodies, horizon `horizon`
/// and `faces` faces per polyhedron.
pub fn count_binaries(
    objects: usize,
    per_object: usize,
    obstacles: usize,
    horizon: usize,
    faces: usize,
) -> usize {
    2 * per_object * objects + horizon * (per_object * objects * (faces + 1) + obstacles * faces)
}

/// [`count_binaries`] when objects carry different numbers of cuboids.
pub fn count_binaries_mixed(
    per_object: &[usize],
    obstacles: usize,
    horizon: usize,
    faces: usize,
) -> usize {
    let n: usize = per_object.iter().sum();
    count_binaries(1, n, obstacles, horizon, faces)
}

/// Binary variables per family.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FamilyCounts {
    /// Face indicators `b[tau, n, l]`.
    pub membership: usize,
    /// Per-step inside indicators `b~[tau, n]`.
    pub inside: usize,
    /// Once-per-horizon entry indicators `b^[n]`.
    pub entered: usize,
    /// Reward indicators `y[n]`.
    pub reward: usize,
    /// Obstacle face indicators `z[tau, psi, l]`.
    pub avoidance: usize,
}

impl FamilyCounts {
    pub fn total(&self) -> usize {
        self.membership + self.inside + self.entered + self.reward + self.avoidance
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchProblem {
    pub state: AgentState,
    pub cuboids: Vec<CoverageCuboid>,
    /// Bodies the planned positions must stay out of.
    pub obstacles: Vec<Cuboid>,
    pub visited: VisitedMap,
    pub weights: Weights,
    pub horizon: usize,
    pub params: AgentParams,
    pub bounds: Aabb,
    /// Uniform big-M for every indicator row; `None` derives one per row.
    pub big_m: Option<f64>,
    /// Required clearance from obstacle faces (m).
    pub epsilon: f64,
    /// Step whose position tracks the target; `None` means `T - 1`.
    pub tau_star: Option<usize>,
    /// Slack (m) by which membership and clearance rows are tightened so that
    /// executed positions satisfy them despite solver round-off.
    pub guard: f64,
}

pub const DEFAULT_EPSILON: f64 = 1.0;
pub const DEFAULT_GUARD: f64 = 1e-3;

impl SearchProblem {
    pub fn tau_star(&self) -> usize {
        self.tau_star.unwrap_or(self.horizon.saturating_sub(1))
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        let mut errs = Vec::new();
        if self.cuboids.is_empty() {
            errs.push("no coverage cuboids".to_string());
        }
        if self.visited.len() != self.cuboids.len() {
            errs.push(format!(
                "visited map has {} entries for {} cuboids",
                self.visited.len(),
                self.cuboids.len()
            ));
        }
        if self.horizon == 0 {
            errs.push("horizon must be at least 1".into());
        }
        if self.tau_star() >= self.horizon.max(1) {
            errs.push(format!(
                "tau* = {} must be below the horizon {}",
                self.tau_star(),
                self.horizon
            ));
        }
        let w = self.weights;
        if !(w.a >= 0.0 && w.b >= 0.0 && w.c >= 0.0) {
            errs.push(format!("weights must be non-negative, got {w:?}"));
        }
        if !(self.epsilon > 0.0) {
            errs.push(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if !(self.guard >= 0.0) {
            errs.push(format!("guard must be non-negative, got {}", self.guard));
        }
        if !self.state.is_finite() {
            errs.push("agent state is not finite".into());
        }
        if let Some(m) = self.big_m {
            if !(m > 0.0) {
                errs.push(format!("big-M must be positive, got {m}"));
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Problem(errs.join("; ")))
        }
    }

    pub fn family_counts(&self) -> FamilyCounts {
        let t = self.horizon;
        let faces: usize = self.cuboids.iter().map(|c| c.cuboid.face_count()).sum();
        let n = self.cuboids.len();
        FamilyCounts {
            membership: t * faces,
            inside: t * n,
            entered: n,
            reward: n,
            avoidance: t * self.obstacles.iter().map(Cuboid::face_count).sum::<usize>(),
        }
    }
}

/// The search model and its variable ids. Step index `tau` in `0..T` refers
/// to the planned position `H x_{t+tau+1}`.
#[derive(Debug, Clone)]
pub struct SearchModel {
    pub model: MipModel,
    pub u: Vec<[VarId; 3]>,
    pub pos: Vec<[VarId; 3]>,
    pub vel: Vec<[VarId; 3]>,
    /// `b[tau][n][l]`.
    pub b: Vec<Vec<Vec<VarId>>>,
    /// `inside[tau][n]`.
    pub inside: Vec<Vec<VarId>>,
    pub entered: Vec<VarId>,
    pub reward: Vec<VarId>,
    /// `z[tau][psi][l]`.
    pub z: Vec<Vec<Vec<VarId>>>,
    pub target: usize,
    pub target_point: Vec3,
    pub families: FamilyCounts,
}

const AXES: [char; 3] = ['x', 'y', 'z'];

pub fn build_search_model(problem: &SearchProblem) -> Result<SearchModel> {
    problem.validate()?;
    let (target, target_point) =
        nearest_unvisited(&problem.state.position, &problem.cuboids, &problem.visited)
            .ok_or_else(|| Error::Problem("every coverage cuboid is already visited".into()))?;
    let horizon = problem.horizon;
    let params = &problem.params;
    let guard = problem.guard;
    let clearance = problem.epsilon + guard;
    let reach = reachable_boxes(&problem.state, params, horizon, &problem.bounds);
    let mut model = MipModel::new();

    let mut u = Vec::with_capacity(horizon);
    let mut pos = Vec::with_capacity(horizon);
    let mut vel = Vec::with_capacity(horizon);
    for tau in 0..horizon {
        u.push(
            AXES.map(|a| {
                model.add_continuous(format!("u[{tau}].{a}"), -params.u_max, params.u_max)
            }),
        );
        let (lo, hi) = (problem.bounds.min, problem.bounds.max);
        let p = [0, 1, 2]
            .map(|k| model.add_continuous(format!("p[{}].{}", tau + 1, AXES[k]), lo[k], hi[k]));
        pos.push(p);
        vel.push(AXES.map(|a| {
            model.add_continuous(format!("v[{}].{a}", tau + 1), -params.v_max, params.v_max)
        }));
    }

    let n_cub = problem.cuboids.len();
    let b: Vec<Vec<Vec<VarId>>> = (0..horizon)
        .map(|tau| {
            problem
                .cuboids
                .iter()
                .enumerate()
                .map(|(n, c)| {
                    (0..c.cuboid.face_count())
                        .map(|l| model.add_binary(format!("b[{tau},{n},{l}]")))
                        .collect()
                })
                .collect()
        })
        .collect();
    let inside: Vec<Vec<VarId>> = (0..horizon)
        .map(|tau| {
            (0..n_cub)
                .map(|n| model.add_binary(format!("inside[{tau},{n}]")))
                .collect()
        })
        .collect();
    let entered: Vec<VarId> = (0..n_cub)
        .map(|n| model.add_binary(format!("entered[{n}]")))
        .collect();
    let reward: Vec<VarId> = (0..n_cub)
        .map(|n| model.add_binary(format!("y[{n}]")))
        .collect();
    let z: Vec<Vec<Vec<VarId>>> = (0..horizon)
        .map(|tau| {
            problem
                .obstacles
                .iter()
                .enumerate()
                .map(|(psi, o)| {
                    (0..o.face_count())
                        .map(|l| model.add_binary(format!("z[{tau},{psi},{l}]")))
                        .collect()
                })
                .collect()
        })
        .collect();

    // Dynamics chain from the current state.
    let (phi, gain, dt) = (params.drag_factor(), params.control_gain(), params.dt);
    for tau in 0..horizon {
        for k in 0..3 {
            let name = format!("dyn[{tau}].{}", AXES[k]);
            if tau == 0 {
                let p0 = problem.state.position[k] + dt * problem.state.velocity[k];
                model.add_constraint(
                    format!("{name}.p"),
                    vec![(pos[0][k], 1.0)],
                    Relation::Eq,
                    p0,
                )?;
                model.add_constraint(
                    format!("{name}.v"),
                    vec![(vel[0][k], 1.0), (u[0][k], -gain)],
                    Relation::Eq,
                    phi * problem.state.velocity[k],
                )?;
            } else {
                model.add_constraint(
                    format!("{name}.p"),
                    vec![
                        (pos[tau][k], 1.0),
                        (pos[tau - 1][k], -1.0),
                        (vel[tau - 1][k], -dt),
                    ],
                    Relation::Eq,
                    0.0,
                )?;
                model.add_constraint(
                    format!("{name}.v"),
                    vec![
                        (vel[tau][k], 1.0),
                        (vel[tau - 1][k], -phi),
                        (u[tau][k], -gain),
                    ],
                    Relation::Eq,
                    0.0,
                )?;
            }
        }
    }

    let row_terms =
        |p: &[VarId; 3], a: &Vec3| -> Vec<(VarId, f64)> { (0..3).map(|k| (p[k], a[k])).collect() };

    // Membership: b = 1 forces A_l p <= B_l - guard.
    for tau in 0..horizon {
        let region = &reach[tau];
        for (n, cub) in problem.cuboids.iter().enumerate() {
            let body = &cub.cuboid;
            if problem.visited.is_visited(n) {
                // Visited cuboids earn their reward through V(n) alone.
                for &v in &b[tau][n] {
                    model.set_bounds(v, 0.0, 0.0);
                }
                model.set_bounds(inside[tau][n], 0.0, 0.0);
                continue;
            }
            let mut possible = true;
            for l in 0..body.face_count() {
                let var = b[tau][n][l];
                let (smin, smax) = (body.row_min_over(l, region), body.row_max_over(l, region));
                if smin > -guard {
                    model.set_bounds(var, 0.0, 0.0);
                    possible = false;
                    continue;
                }
                let a = body.normals()[l];
                let off = body.offsets()[l];
                let mut terms = row_terms(&pos[tau], &a);
                match problem.big_m {
                    Some(m) => {
                        terms.push((var, m - off + guard));
                        model.add_constraint(
                            format!("member[{tau},{n},{l}]"),
                            terms,
                            Relation::Le,
                            m,
                        )?;
                    }
                    None if smax > -guard => {
                        terms.push((var, smax + guard));
                        model.add_constraint(
                            format!("member[{tau},{n},{l}]"),
                            terms,
                            Relation::Le,
                            off + smax,
                        )?;
                    }
                    None => {}
                }
            }
            if !possible {
                model.set_bounds(inside[tau][n], 0.0, 0.0);
            }
            let faces = body.face_count() as f64;
            let mut terms = vec![(inside[tau][n], faces)];
            terms.extend(b[tau][n].iter().map(|&v| (v, -1.0)));
            model.add_constraint(format!("inside[{tau},{n}]"), terms, Relation::Le, 0.0)?;
        }
    }

    for n in 0..n_cub {
        if problem.visited.is_visited(n) {
            model.set_bounds(entered[n], 0.0, 0.0);
            model.set_bounds(reward[n], 1.0, 1.0);
        }
        let mut terms = vec![(entered[n], 1.0)];
        terms.extend((0..horizon).map(|tau| (inside[tau][n], -1.0)));
        model.add_constraint(format!("once[{n}]"), terms, Relation::Le, 0.0)?;
        let v = if problem.visited.is_visited(n) {
            1.0
        } else {
            0.0
        };
        model.add_constraint(
            format!("reward[{n}]"),
            vec![(reward[n], 1.0), (entered[n], -1.0)],
            Relation::Le,
            v,
        )?;
    }

    // Obstacles: z = 0 forces A_l p >= B_l + epsilon; at most L - 1 faces may
    // be released.
    for tau in 0..horizon {
        let region = &reach[tau];
        for (psi, body) in problem.obstacles.iter().enumerate() {
            let vars = &z[tau][psi];
            let bounds: Vec<(f64, f64)> = (0..body.face_count())
                .map(|l| (body.row_min_over(l, region), body.row_max_over(l, region)))
                .collect();
            if let Some(clear) = bounds.iter().position(|(smin, _)| *smin >= clearance) {
                // The whole reachable box is clear of this body.
                for (l, &v) in vars.iter().enumerate() {
                    let fixed = if l == clear { 0.0 } else { 1.0 };
                    model.set_bounds(v, fixed, fixed);
                }
                continue;
            }
            for (l, &(smin, smax)) in bounds.iter().enumerate() {
                let var = vars[l];
                if smax < clearance {
                    model.set_bounds(var, 1.0, 1.0);
                    continue;
                }
                let a = body.normals()[l];
                let off = body.offsets()[l];
                let mut terms = row_terms(&pos[tau], &a);
                let m = problem.big_m.unwrap_or(clearance - smin);
                terms.push((var, m));
                model.add_constraint(
                    format!("avoid[{tau},{psi},{l}]"),
                    terms,
                    Relation::Ge,
                    off + clearance,
                )?;
            }
            let faces = body.face_count() as f64;
            model.add_constraint(
                format!("release[{tau},{psi}]"),
                vars.iter().map(|&v| (v, 1.0)).collect(),
                Relation::Le,
                faces - 1.0,
            )?;
        }
    }

    let w = problem.weights;
    let ts = problem.tau_star();
    for k in 0..3 {
        model.add_objective_square(
            w.a,
            AffineExpr::new(vec![(pos[ts][k], 1.0)], -target_point[k]),
        )?;
    }
    for tau in 1..horizon {
        for k in 0..3 {
            model.add_objective_square(
                w.b,
                AffineExpr::new(vec![(u[tau][k], 1.0), (u[tau - 1][k], -1.0)], 0.0),
            )?;
        }
    }
    if w.c > 0.0 {
        for &y in &reward {
            model.add_objective_linear(y, -w.c);
        }
    }

    let families = problem.family_counts();
    debug_assert_eq!(families.total(), model.num_binaries());
    Ok(SearchModel {
        model,
        u,
        pos,
        vel,
        b,
        inside,
        entered,
        reward,
        z,
        target,
        target_point,
        families,
    })
}

fn is_fixed(model: &MipModel, v: VarId) -> bool {
    let var = &model.variables[v.0];
    var.lower == var.upper
}

impl SearchModel {
    fn controls(&self, values: &[f64], u_max: f64) -> Vec<ControlInput> {
        self.u
            .iter()
            .map(|ids| {
                ControlInput::new(Vec3::from_fn(|k, _| values[ids[k].0].clamp(-u_max, u_max)))
            })
            .collect()
    }

    /// Planned positions `H x_{t+1} .. H x_{t+T}` of a control sequence.
    fn positions(&self, problem: &SearchProblem, controls: &[ControlInput]) -> Vec<Vec3> {
        rollout(&problem.state, controls, &problem.params)
            .steps
            .iter()
            .map(|(_, s)| s.position)
            .collect()
    }

    fn push(&self, out: &mut Assignment, v: VarId, value: bool) {
        if !is_fixed(&self.model, v) {
            out.push((v, value));
        }
    }

    /// Indicator values implied by a trajectory, with cuboid entries taken
    /// from `entries[tau]` (cuboid indices entered at step `tau`).
    fn assignment(
        &self,
        problem: &SearchProblem,
        positions: &[Vec3],
        entries: &[Vec<usize>],
    ) -> Assignment {
        let mut out = Vec::new();
        let mut entered = vec![false; problem.cuboids.len()];
        for tau in 0..self.b.len() {
            for n in 0..problem.cuboids.len() {
                let inside = entries[tau].contains(&n);
                entered[n] |= inside;
                for &v in &self.b[tau][n] {
                    self.push(&mut out, v, inside);
                }
                self.push(&mut out, self.inside[tau][n], inside);
            }
        }
        for n in 0..problem.cuboids.len() {
            self.push(&mut out, self.entered[n], entered[n]);
            self.push(
                &mut out,
                self.reward[n],
                entered[n] || problem.visited.is_visited(n),
            );
        }
        for (tau, p) in positions.iter().enumerate() {
            for (psi, body) in problem.obstacles.iter().enumerate() {
                let vars = &self.z[tau][psi];
                if vars.iter().all(|&v| is_fixed(&self.model, v)) {
                    continue;
                }
                // Keep the face the point is farthest outside of.
                let keep = body
                    .signed_distances(p)
                    .enumerate()
                    .filter(|(l, _)| self.model.variables[vars[*l].0].upper > 0.5)
                    .filter(|(l, _)| self.model.variables[vars[*l].0].lower < 0.5)
                    .fold((usize::MAX, f64::NEG_INFINITY), |best, (l, s)| {
                        if s > best.1 {
                            (l, s)
                        } else {
                            best
                        }
                    })
                    .0;
                for (l, &v) in vars.iter().enumerate() {
                    self.push(&mut out, v, l != keep);
                }
            }
        }
        out
    }

    /// Cuboids each planned position lies in, with the guard band.
    fn memberships(&self, problem: &SearchProblem, positions: &[Vec3]) -> Vec<Vec<usize>> {
        positions
            .iter()
            .enumerate()
            .map(|(tau, p)| {
                (0..problem.cuboids.len())
                    .filter(|&n| {
                        !is_fixed(&self.model, self.inside[tau][n])
                            && problem.cuboids[n]
                                .cuboid
                                .contains_with_margin(p, -problem.guard)
                    })
                    .collect()
            })
            .collect()
    }

    /// Earliest steps at which the target cuboid could be occupied.
    fn snap_steps(&self) -> Vec<usize> {
        let horizon = self.inside.len();
        let first = (0..horizon).find(|&tau| !is_fixed(&self.model, self.inside[tau][self.target]));
        match first {
            Some(t) => {
                let mut steps = vec![t, (t + 1).min(horizon - 1), horizon - 1];
                steps.dedup();
                steps.sort_unstable();
                steps.dedup();
                steps
            }
            None => Vec::new(),
        }
    }

    fn proposals(&self, problem: &SearchProblem, controls: &[ControlInput]) -> Vec<Assignment> {
        let positions = self.positions(problem, controls);
        let entries = self.memberships(problem, &positions);
        let mut out = vec![self.assignment(problem, &positions, &entries)];
        if !entries.iter().any(|e| e.contains(&self.target)) {
            for tau in self.snap_steps() {
                let mut forced = vec![Vec::new(); positions.len()];
                forced[tau].push(self.target);
                out.push(self.assignment(problem, &positions, &forced));
            }
        }
        out
    }
}

struct SearchHeuristic<'a> {
    problem: &'a SearchProblem,
    built: &'a SearchModel,
}

impl PrimalHeuristic for SearchHeuristic<'_> {
    fn propose(&self, values: &[f64]) -> Vec<Assignment> {
        let controls = self.built.controls(values, self.problem.params.u_max);
        self.built.proposals(self.problem, &controls)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchStepResult {
    /// Target of the tracking term and its centroid.
    pub target: usize,
    pub target_point: Vec3,
    pub controls: Vec<ControlInput>,
    /// Planned states `x_{t+1} .. x_{t+T}`.
    pub states: Vec<AgentState>,
    /// `y[n]` and `b^[n]` of the accepted solution.
    pub reward: Vec<bool>,
    pub entered: Vec<bool>,
    pub objective: f64,
    /// Horizon actually solved (larger than requested after a retry).
    pub horizon: usize,
    pub stats: SolveStats,
}

#[derive(Debug, Clone, Default)]
pub struct StepOptions {
    pub limits: SolveLimits,
    pub workers: usize,
    /// Controls to seed the solve with, typically the previous plan shifted
    /// by one step.
    pub warm_controls: Vec<ControlInput>,
}

fn solve_once(
    problem: &SearchProblem,
    options: &StepOptions,
) -> Result<(SearchModel, MipSolution)> {
    let built = build_search_model(problem)?;
    let heuristic = SearchHeuristic {
        problem,
        built: &built,
    };
    let mut warm_starts = Vec::new();
    if !options.warm_controls.is_empty() {
        let mut controls = options.warm_controls.clone();
        controls.resize(problem.horizon, ControlInput::zero());
        for c in &mut controls {
            c.force = c
                .force
                .map(|f| f.clamp(-problem.params.u_max, problem.params.u_max));
        }
        warm_starts = built.proposals(problem, &controls);
    }
    let solve_options = SolveOptions {
        limits: options.limits,
        workers: options.workers.max(1),
        warm_starts,
        heuristic: Some(&heuristic),
        ..SolveOptions::default()
    };
    let solution = solve_with(&built.model, &solve_options)?;
    Ok((built, solution))
}

/// Solves one receding-horizon step. An infeasible horizon is retried once
/// with two more steps.
pub fn mpc_step(problem: &SearchProblem, options: &StepOptions) -> Result<SearchStepResult> {
    let (mut problem, mut attempt) = (problem.clone(), 0);
    loop {
        let (built, solution) = solve_once(&problem, options)?;
        if let Some(values) = solution.values.as_ref() {
            return extract(&problem, &built, &solution, values);
        }
        if attempt == 0 {
            attempt += 1;
            problem.horizon += 2;
            if let Some(ts) = problem.tau_star {
                problem.tau_star = Some(ts.min(problem.horizon - 1));
            }
            continue;
        }
        return Err(diagnose(&problem, &solution));
    }
}

fn diagnose(problem: &SearchProblem, solution: &MipSolution) -> Error {
    let reach = reachable_boxes(
        &problem.state,
        &problem.params,
        problem.horizon,
        &problem.bounds,
    );
    let near: Vec<String> = problem
        .obstacles
        .iter()
        .enumerate()
        .filter(|(_, o)| {
            reach
                .iter()
                .any(|r| (0..o.face_count()).all(|l| o.row_min_over(l, r) < problem.epsilon))
        })
        .map(|(i, _)| i.to_string())
        .collect();
    let s = &problem.state;
    let what = match solution.status {
        SolveStatus::Infeasible => "infeasible",
        _ => "unsolved within the limits",
    };
    Error::Infeasible(format!(
        "search step {what} at horizon {} from position ({:.3}, {:.3}, {:.3}) velocity ({:.3}, {:.3}, {:.3}); obstacles within reach: [{}]",
        problem.horizon,
        s.position.x,
        s.position.y,
        s.position.z,
        s.velocity.x,
        s.velocity.y,
        s.velocity.z,
        near.join(", ")
    ))
}

fn extract(
    problem: &SearchProblem,
    built: &SearchModel,
    solution: &MipSolution,
    values: &[f64],
) -> Result<SearchStepResult> {
    let violations = validate(&built.model, values);
    if !violations.is_empty() {
        return Err(Error::Solver(format!(
            "search solution fails its audit: {}",
            violations
                .iter()
                .take(5)
                .map(|v| v.name.as_str())
                .collect::<Vec<_>>()
                .join(", ")
        )));
    }
    let controls = built.controls(values, problem.params.u_max);
    let plan = rollout(&problem.state, &controls, &problem.params);
    let states: Vec<AgentState> = plan.steps.iter().map(|(_, s)| *s).collect();
    let reward: Vec<bool> = built.reward.iter().map(|v| values[v.0] > 0.5).collect();
    let entered: Vec<bool> = built.entered.iter().map(|v| values[v.0] > 0.5).collect();
    for (n, &y) in reward.iter().enumerate() {
        let earned = problem.visited.is_visited(n)
            || states.iter().any(|s| {
                problem.cuboids[n]
                    .cuboid
                    .contains_with_margin(&s.position, FEAS_TOL)
            });
        if y && !earned {
            return Err(Error::Solver(format!(
                "reward claimed for cuboid {n} without entering it"
            )));
        }
    }
    Ok(SearchStepResult {
        target: built.target,
        target_point: built.target_point,
        controls,
        states,
        reward,
        entered,
        objective: solution.objective,
        horizon: problem.horizon,
        stats: SolveStats::from(solution),
    })
}
