//! Stage one: a mixed-integer linear program that picks one visiting step per
//! waypoint and the controls that bring the agent closest to each waypoint at
//! its step, measured in L1.
//!
//! States are not model variables. Every position and velocity is an affine
//! function of the controls through the closed-form rollout
//! `x_t = Phi^t x_0 + sum_tau Phi^tau Gamma u_{t-tau-1}`.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::dynamics::{
    check_bounds, free_response, impulse_response, rollout, AgentParams, AgentState, ControlInput,
    Plan,
};
use crate::geometry::{Aabb, Waypoint};
use crate::mip::{
    solve_with, validate, Assignment, MipModel, PrimalHeuristic, Relation, SolveLimits,
    SolveOptions, SolveStats, SolveStatus, VarId,
};
use crate::{Error, Result, Vec3};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssessmentProblem {
    pub x0: AgentState,
    pub waypoints: Vec<Waypoint>,
    pub horizon: usize,
    pub params: AgentParams,
    /// Region the planned positions must stay in.
    pub bounds: Aabb,
    /// Gate constant; `None` selects [`AssessmentProblem::auto_big_m`].
    pub big_m: Option<f64>,
}

impl AssessmentProblem {
    /// L1 diameter of the bounds plus one step of travel at top speed.
    pub fn auto_big_m(&self) -> f64 {
        self.bounds.l1_diameter() + self.params.v_max * self.params.dt
    }

    pub fn big_m(&self) -> f64 {
        self.big_m.unwrap_or_else(|| self.auto_big_m())
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        let mut errs = Vec::new();
        if self.waypoints.is_empty() {
            errs.push("no waypoints".to_string());
        }
        if self.horizon < self.waypoints.len() {
            errs.push(format!(
                "horizon {} is shorter than the number of waypoints {}",
                self.horizon,
                self.waypoints.len()
            ));
        }
        for w in &self.waypoints {
            if !self.bounds.contains(&w.position) {
                errs.push(format!(
                    "waypoint of {} lies outside the bounds",
                    w.object_id
                ));
            }
        }
        if !self.x0.is_finite() || !self.bounds.contains(&self.x0.position) {
            errs.push("initial position lies outside the bounds".to_string());
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
}

/// The model plus the variable ids of each family. Time index `t` of the
/// per-visit families runs over `1..=T` and is stored at `t - 1`.
#[derive(Debug, Clone)]
pub struct AssessmentModel {
    pub model: MipModel,
    /// `u[t][axis]` for `t` in `0..T`.
    pub u: Vec<[VarId; 3]>,
    /// `b[t - 1][j]`.
    pub b: Vec<Vec<VarId>>,
    pub zeta: Vec<Vec<VarId>>,
    pub xw_plus: Vec<Vec<[VarId; 3]>>,
    pub xw_minus: Vec<Vec<[VarId; 3]>>,
}

/// Affine maps from controls to position and velocity, one axis at a time.
struct Response {
    /// `pos_free[t][axis]`, `vel_free[t][axis]` for `t` in `0..=T`.
    pos_free: Vec<Vec3>,
    vel_free: Vec<Vec3>,
    /// Coefficient of `u_s` in `x_t` is `pos_gain[t - s - 1]`.
    pos_gain: Vec<f64>,
    vel_gain: Vec<f64>,
}

impl Response {
    fn new(x0: &AgentState, params: &AgentParams, horizon: usize) -> Result<Self> {
        let x = x0.to_vector();
        let mut pos_free = Vec::with_capacity(horizon + 1);
        let mut vel_free = Vec::with_capacity(horizon + 1);
        let mut pos_gain = Vec::with_capacity(horizon);
        let mut vel_gain = Vec::with_capacity(horizon);
        for t in 0..=horizon {
            let xt = free_response(params, t)? * x;
            pos_free.push(Vec3::new(xt[0], xt[1], xt[2]));
            vel_free.push(Vec3::new(xt[3], xt[4], xt[5]));
        }
        for lag in 0..horizon {
            let (p, v) = impulse_response(params, lag)?;
            pos_gain.push(p);
            vel_gain.push(v);
        }
        Ok(Self {
            pos_free,
            vel_free,
            pos_gain,
            vel_gain,
        })
    }

    fn position_terms(&self, u: &[[VarId; 3]], t: usize, axis: usize) -> Vec<(VarId, f64)> {
        (0..t)
            .map(|s| (u[s][axis], self.pos_gain[t - s - 1]))
            .collect()
    }

    fn velocity_terms(&self, u: &[[VarId; 3]], t: usize, axis: usize) -> Vec<(VarId, f64)> {
        (0..t)
            .map(|s| (u[s][axis], self.vel_gain[t - s - 1]))
            .collect()
    }
}

const AXES: [char; 3] = ['x', 'y', 'z'];

pub fn build_assessment_model(problem: &AssessmentProblem) -> Result<AssessmentModel> {
    problem.validate()?;
    let (horizon, nw) = (problem.horizon, problem.waypoints.len());
    let params = &problem.params;
    let m = problem.big_m();
    let resp = Response::new(&problem.x0, params, horizon)?;
    let mut model = MipModel::new();

    let u: Vec<[VarId; 3]> = (0..horizon)
        .map(|t| {
            AXES.map(|a| model.add_continuous(format!("u[{t}].{a}"), -params.u_max, params.u_max))
        })
        .collect();
    let mut b = Vec::with_capacity(horizon);
    let mut zeta = Vec::with_capacity(horizon);
    let mut xw_plus = Vec::with_capacity(horizon);
    let mut xw_minus = Vec::with_capacity(horizon);
    for t in 1..=horizon {
        let mut bt = Vec::with_capacity(nw);
        let mut zt = Vec::with_capacity(nw);
        let mut pt = Vec::with_capacity(nw);
        let mut mt = Vec::with_capacity(nw);
        for j in 0..nw {
            bt.push(model.add_binary(format!("b[{t},{j}]")));
            zt.push(model.add_continuous(format!("zeta[{t},{j}]"), 0.0, m));
            pt.push(AXES.map(|a| model.add_continuous(format!("xw+[{t},{j}].{a}"), 0.0, m)));
            mt.push(AXES.map(|a| model.add_continuous(format!("xw-[{t},{j}].{a}"), 0.0, m)));
        }
        b.push(bt);
        zeta.push(zt);
        xw_plus.push(pt);
        xw_minus.push(mt);
    }

    for t in 1..=horizon {
        for axis in 0..3 {
            // Velocity bound on every planned state.
            let terms = resp.velocity_terms(&u, t, axis);
            let free = resp.vel_free[t][axis];
            let name = format!("vmax[{t}].{}", AXES[axis]);
            model.add_constraint(
                name.clone(),
                terms.clone(),
                Relation::Le,
                params.v_max - free,
            )?;
            model.add_constraint(name, terms, Relation::Ge, -params.v_max - free)?;

            // Planned positions stay inside the region, which keeps M valid.
            let terms = resp.position_terms(&u, t, axis);
            if terms.iter().any(|(_, c)| *c != 0.0) {
                let free = resp.pos_free[t][axis];
                let name = format!("region[{t}].{}", AXES[axis]);
                let (lo, hi) = (problem.bounds.min[axis], problem.bounds.max[axis]);
                model.add_constraint(name.clone(), terms.clone(), Relation::Le, hi - free)?;
                model.add_constraint(name, terms, Relation::Ge, lo - free)?;
            }
        }
    }

    for (j, w) in problem.waypoints.iter().enumerate() {
        for t in 1..=horizon {
            let (bv, zv) = (b[t - 1][j], zeta[t - 1][j]);
            let mut split_sum = Vec::with_capacity(7);
            for axis in 0..3 {
                let (p, n) = (xw_plus[t - 1][j][axis], xw_minus[t - 1][j][axis]);
                // xw+ - xw- - H x_t = -w  (moved the free response to the rhs)
                let mut terms = vec![(p, 1.0), (n, -1.0)];
                terms.extend(
                    resp.position_terms(&u, t, axis)
                        .into_iter()
                        .map(|(v, c)| (v, -c)),
                );
                let rhs = resp.pos_free[t][axis] - w.position[axis];
                model.add_constraint(
                    format!("split[{t},{j}].{}", AXES[axis]),
                    terms,
                    Relation::Eq,
                    rhs,
                )?;
                split_sum.push((p, -1.0));
                split_sum.push((n, -1.0));
            }
            model.add_constraint(
                format!("gate[{t},{j}]"),
                vec![(zv, 1.0), (bv, -m)],
                Relation::Le,
                0.0,
            )?;
            let mut upper = vec![(zv, 1.0)];
            upper.extend(split_sum.iter().copied());
            model.add_constraint(
                format!("zeta_le[{t},{j}]"),
                upper.clone(),
                Relation::Le,
                0.0,
            )?;
            upper.push((bv, -m));
            model.add_constraint(format!("zeta_ge[{t},{j}]"), upper, Relation::Ge, -m)?;
            model.add_objective_linear(zv, 1.0);
        }
        let once: Vec<(VarId, f64)> = (0..horizon).map(|t| (b[t][j], 1.0)).collect();
        model.add_constraint(format!("once[{j}]"), once, Relation::Eq, 1.0)?;
    }

    Ok(AssessmentModel {
        model,
        u,
        b,
        zeta,
        xw_plus,
        xw_minus,
    })
}

impl AssessmentModel {
    fn controls(&self, values: &[f64], u_max: f64) -> Vec<ControlInput> {
        self.u
            .iter()
            .map(|ids| {
                ControlInput::new(Vec3::from_fn(|k, _| values[ids[k].0].clamp(-u_max, u_max)))
            })
            .collect()
    }

    fn schedule_assignment(&self, schedule: &[usize]) -> Assignment {
        let mut a = Vec::with_capacity(self.b.len() * schedule.len());
        for (t, row) in self.b.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                a.push((v, schedule[j] == t + 1));
            }
        }
        a
    }

    /// Exact model point implied by a control sequence and a schedule: the
    /// splits are the positive and negative parts of the offsets and `zeta`
    /// is the L1 miss at the visit step.
    fn complete(
        &self,
        controls: &[ControlInput],
        schedule: &[usize],
        problem: &AssessmentProblem,
    ) -> Vec<f64> {
        let plan = rollout(&problem.x0, controls, &problem.params);
        let states = plan.states();
        let mut values = vec![0.0; self.model.num_vars()];
        for (t, u) in controls.iter().enumerate() {
            for k in 0..3 {
                values[self.u[t][k].0] = u.force[k];
            }
        }
        for t in 1..=problem.horizon {
            for (j, w) in problem.waypoints.iter().enumerate() {
                let d = states[t].position - w.position;
                for k in 0..3 {
                    values[self.xw_plus[t - 1][j][k].0] = d[k].max(0.0);
                    values[self.xw_minus[t - 1][j][k].0] = (-d[k]).max(0.0);
                }
                let visit = schedule[j] == t;
                values[self.b[t - 1][j].0] = if visit { 1.0 } else { 0.0 };
                values[self.zeta[t - 1][j].0] = if visit { d.lp_norm(1) } else { 0.0 };
            }
        }
        values
    }
}

fn l1(a: &Vec3, b: &Vec3) -> f64 {
    (a - b).lp_norm(1)
}

/// Visit steps `1..=T` spread along a tour in the given order, proportional
/// to the cumulative straight-line length of the tour.
fn spread_schedule(
    x0: &Vec3,
    order: &[usize],
    waypoints: &[Waypoint],
    horizon: usize,
) -> Vec<usize> {
    let mut cumulative = Vec::with_capacity(order.len());
    let mut total = 0.0;
    let mut at = *x0;
    for &j in order {
        total += (waypoints[j].position - at).norm();
        cumulative.push(total);
        at = waypoints[j].position;
    }
    let n = order.len();
    let mut schedule = vec![0; waypoints.len()];
    let mut prev = 0usize;
    for (k, &j) in order.iter().enumerate() {
        let frac = if total > 0.0 {
            cumulative[k] / total
        } else {
            (k + 1) as f64 / n as f64
        };
        let latest = horizon - (n - k - 1);
        let t = ((frac * horizon as f64).ceil() as usize).clamp(prev + 1, latest);
        schedule[j] = t;
        prev = t;
    }
    schedule
}

fn nearest_neighbour_order(x0: &Vec3, waypoints: &[Waypoint]) -> Vec<usize> {
    let mut left: Vec<usize> = (0..waypoints.len()).collect();
    let mut order = Vec::with_capacity(left.len());
    let mut at = *x0;
    while !left.is_empty() {
        let (k, _) = left
            .iter()
            .enumerate()
            .map(|(k, &j)| (k, (waypoints[j].position - at).norm()))
            .fold(
                (0, f64::INFINITY),
                |best, c| if c.1 < best.1 { c } else { best },
            );
        let j = left.remove(k);
        at = waypoints[j].position;
        order.push(j);
    }
    order
}

struct ScheduleHeuristic<'a> {
    problem: &'a AssessmentProblem,
    built: &'a AssessmentModel,
}

impl PrimalHeuristic for ScheduleHeuristic<'_> {
    fn propose(&self, values: &[f64]) -> Vec<Assignment> {
        let p = self.problem;
        let controls = self.built.controls(values, p.params.u_max);
        let states = rollout(&p.x0, &controls, &p.params).states();
        let mut schedules = BTreeSet::new();

        // Closest approach of the (possibly relaxed) trajectory.
        let closest: Vec<usize> = p
            .waypoints
            .iter()
            .map(|w| {
                (1..=p.horizon)
                    .map(|t| (t, l1(&states[t].position, &w.position)))
                    .fold(
                        (1, f64::INFINITY),
                        |best, c| if c.1 < best.1 { c } else { best },
                    )
                    .0
            })
            .collect();
        schedules.insert(closest.clone());

        // Tour in closest-approach order, re-timed along its length.
        let mut order: Vec<usize> = (0..p.waypoints.len()).collect();
        order.sort_by_key(|&j| (closest[j], j));
        schedules.insert(spread_schedule(
            &p.x0.position,
            &order,
            &p.waypoints,
            p.horizon,
        ));

        // Largest relaxed indicator per waypoint.
        let heaviest: Vec<usize> = (0..p.waypoints.len())
            .map(|j| {
                (1..=p.horizon)
                    .map(|t| (t, values[self.built.b[t - 1][j].0]))
                    .fold(
                        (1, f64::NEG_INFINITY),
                        |best, c| if c.1 > best.1 { c } else { best },
                    )
                    .0
            })
            .collect();
        schedules.insert(heaviest);

        schedules
            .into_iter()
            .map(|s| self.built.schedule_assignment(&s))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssessmentResult {
    pub plan: Plan,
    /// Visiting step `t_j` in `1..=T` per waypoint.
    pub visit_schedule: Vec<usize>,
    /// L1 distance between `H x_{t_j}` and `w_j`.
    pub misses: Vec<f64>,
    pub objective: f64,
    pub stats: SolveStats,
}

/// Solver configuration for stage one.
#[derive(Debug, Clone, Default)]
pub struct AssessmentOptions {
    pub limits: SolveLimits,
    pub workers: usize,
    /// Candidate visiting schedules (one step per waypoint) to start from.
    pub schedules: Vec<Vec<usize>>,
}

pub fn solve_assessment(
    problem: &AssessmentProblem,
    limits: SolveLimits,
) -> Result<AssessmentResult> {
    solve_assessment_with(
        problem,
        &AssessmentOptions {
            limits,
            ..AssessmentOptions::default()
        },
    )
}

pub fn solve_assessment_with(
    problem: &AssessmentProblem,
    options: &AssessmentOptions,
) -> Result<AssessmentResult> {
    let built = build_assessment_model(problem)?;
    let heuristic = ScheduleHeuristic {
        problem,
        built: &built,
    };

    let order = nearest_neighbour_order(&problem.x0.position, &problem.waypoints);
    let mut warm = vec![spread_schedule(
        &problem.x0.position,
        &order,
        &problem.waypoints,
        problem.horizon,
    )];
    for s in &options.schedules {
        if s.len() != problem.waypoints.len() || s.iter().any(|&t| t == 0 || t > problem.horizon) {
            return Err(Error::Problem(format!(
                "warm-start schedule {s:?} does not fit the problem"
            )));
        }
        warm.push(s.clone());
    }
    let solve_options = SolveOptions {
        limits: options.limits,
        workers: options.workers.max(1),
        warm_starts: warm.iter().map(|s| built.schedule_assignment(s)).collect(),
        heuristic: Some(&heuristic),
        ..SolveOptions::default()
    };
    let solution = solve_with(&built.model, &solve_options)?;
    let stats = SolveStats::from(&solution);
    let Some(values) = solution.values.as_ref() else {
        return Err(match solution.status {
            SolveStatus::Infeasible => {
                Error::Infeasible("assessment program has no feasible schedule".into())
            }
            s => Error::Solver(format!(
                "assessment solve stopped ({s:?}) without a solution"
            )),
        });
    };

    let schedule: Vec<usize> = (0..problem.waypoints.len())
        .map(|j| {
            (1..=problem.horizon)
                .find(|&t| values[built.b[t - 1][j].0] > 0.5)
                .unwrap_or(1)
        })
        .collect();
    let controls = built.controls(values, problem.params.u_max);
    let exact = built.complete(&controls, &schedule, problem);
    let violations = validate(&built.model, &exact);
    if !violations.is_empty() {
        return Err(Error::Solver(format!(
            "assessment solution fails its audit: {}",
            violations
                .iter()
                .map(|v| v.name.as_str())
                .collect::<Vec<_>>()
                .join(", ")
        )));
    }
    let plan = rollout(&problem.x0, &controls, &problem.params);
    debug_assert!(check_bounds(&plan, &problem.params).is_empty());
    let states = plan.states();
    let misses: Vec<f64> = problem
        .waypoints
        .iter()
        .zip(&schedule)
        .map(|(w, &t)| l1(&states[t].position, &w.position))
        .collect();
    Ok(AssessmentResult {
        objective: misses.iter().sum(),
        plan,
        visit_schedule: schedule,
        misses,
        stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Waypoint;

    fn wp(x: f64, y: f64, z: f64) -> Waypoint {
        Waypoint {
            position: Vec3::new(x, y, z),
            object_id: "w".into(),
        }
    }

    fn problem(x0: Vec3, waypoints: Vec<Waypoint>, horizon: usize) -> AssessmentProblem {
        AssessmentProblem {
            x0: AgentState::at_rest(x0),
            waypoints,
            horizon,
            params: AgentParams::reference(),
            bounds: Aabb::new(Vec3::zeros(), Vec3::new(200.0, 200.0, 50.0)),
            big_m: None,
        }
    }

    #[test]
    fn binary_count_is_horizon_times_waypoints() {
        let wps = (0..7)
            .map(|k| wp(10.0 + 20.0 * k as f64, 50.0, 20.0))
            .collect();
        let p = problem(Vec3::new(5.0, 5.0, 5.0), wps, 55);
        assert_eq!(
            build_assessment_model(&p).unwrap().model.num_binaries(),
            385
        );
    }

    #[test]
    fn short_horizon_rejected() {
        let p = problem(Vec3::zeros(), vec![wp(1.0, 1.0, 1.0), wp(2.0, 2.0, 2.0)], 1);
        assert!(build_assessment_model(&p).is_err());
    }

    #[test]
    fn single_step_forces_the_only_indicator() {
        let p = problem(Vec3::new(10.0, 10.0, 10.0), vec![wp(20.0, 10.0, 10.0)], 1);
        let r = solve_assessment(&p, SolveLimits::default()).unwrap();
        assert_eq!(r.visit_schedule, vec![1]);
        // Position at step 1 does not depend on u_0.
        assert!((r.objective - 10.0).abs() < 1e-9);
    }

    #[test]
    fn waypoint_at_start_costs_nothing() {
        let p = problem(Vec3::new(50.0, 50.0, 10.0), vec![wp(50.0, 50.0, 10.0)], 2);
        let r = solve_assessment(&p, SolveLimits::default()).unwrap();
        assert!(r.objective.abs() < 1e-6);
    }

    #[test]
    fn two_step_reach() {
        // From rest, x_2 = x_0 + gain * u_0; with u_0 = u_max along x the
        // agent moves 20 / 3.35 m.
        let reach = 20.0 / 3.35;
        let p = problem(
            Vec3::new(50.0, 50.0, 10.0),
            vec![wp(50.0 + 0.9 * reach, 50.0, 10.0)],
            2,
        );
        let r = solve_assessment(&p, SolveLimits::default()).unwrap();
        assert!(r.objective < 1e-5, "objective {}", r.objective);
        assert!(check_bounds(&r.plan, &p.params).is_empty());
    }

    #[test]
    fn three_waypoints_each_visited_once() {
        let wps = vec![
            wp(150.0, 40.0, 20.0),
            wp(60.0, 160.0, 30.0),
            wp(120.0, 120.0, 10.0),
        ];
        let p = problem(Vec3::new(100.0, 100.0, 25.0), wps, 20);
        let r = solve_assessment(&p, SolveLimits::nodes(50)).unwrap();
        assert_eq!(r.visit_schedule.len(), 3);
        let states = r.plan.states();
        let recomputed: f64 = p
            .waypoints
            .iter()
            .zip(&r.visit_schedule)
            .map(|(w, &t)| (states[t].position - w.position).lp_norm(1))
            .sum();
        assert!((recomputed - r.objective).abs() < 1e-6);
        assert!(check_bounds(&r.plan, &p.params).is_empty());
    }

    #[test]
    fn spread_schedule_is_increasing() {
        let wps = vec![wp(10.0, 0.0, 0.0), wp(20.0, 0.0, 0.0), wp(30.0, 0.0, 0.0)];
        let s = spread_schedule(&Vec3::zeros(), &[0, 1, 2], &wps, 3);
        assert_eq!(s, vec![1, 2, 3]);
        let s = spread_schedule(&Vec3::zeros(), &[2, 1, 0], &wps, 30);
        assert!(s[2] < s[1] && s[1] < s[0] && s[0] <= 30);
    }
}
