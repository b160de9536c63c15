//! Best-first branch and bound over binary variables.
//!
//! Nodes are ordered by their parent's relaxation bound, ties by insertion
//! order. The branching variable is the most fractional binary, ties broken
//! by the lowest variable id. Under a single worker every run of the same
//! model explores the same tree.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::{validate, MipModel, VarId, VarKind, INT_TOL};
use super::relax::{Relaxation, RelaxationEngine, RelaxationStatus};
use crate::{Error, Result};

/// Binary values to pin, e.g. a warm start or a heuristic proposal.
pub type Assignment = Vec<(VarId, bool)>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveLimits {
    /// Wall-clock budget in seconds.
    pub time_limit: Option<f64>,
    /// Maximum number of tree nodes whose relaxation is solved.
    pub node_limit: Option<usize>,
    /// Relative optimality gap at which the incumbent is declared optimal.
    pub rel_gap: f64,
}

impl Default for SolveLimits {
    fn default() -> Self {
        Self {
            time_limit: None,
            node_limit: None,
            rel_gap: 1e-6,
        }
    }
}

impl SolveLimits {
    pub fn nodes(node_limit: usize) -> Self {
        Self {
            node_limit: Some(node_limit),
            ..Self::default()
        }
    }
}

/// Problem-specific source of integer-feasible candidates.
pub trait PrimalHeuristic {
    /// Binary assignments worth completing from a (possibly fractional) point
    /// holding one value per model variable.
    fn propose(&self, values: &[f64]) -> Vec<Assignment>;
}

pub struct SolveOptions<'h> {
    pub limits: SolveLimits,
    /// Number of open nodes whose relaxations are solved concurrently.
    pub workers: usize,
    pub warm_starts: Vec<Assignment>,
    pub heuristic: Option<&'h dyn PrimalHeuristic>,
    /// The heuristic runs at the root and then every this many nodes.
    pub heuristic_interval: usize,
    /// Times a successful heuristic solution is fed back to the heuristic.
    pub refine_rounds: usize,
}

impl Default for SolveOptions<'_> {
    fn default() -> Self {
        Self {
            limits: SolveLimits::default(),
            workers: 1,
            warm_starts: Vec::new(),
            heuristic: None,
            heuristic_interval: 10,
            refine_rounds: 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    TimeLimit,
    NodeLimit,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MipSolution {
    pub status: SolveStatus,
    /// Incumbent, one value per variable; binaries are exactly 0 or 1.
    pub values: Option<Vec<f64>>,
    /// Incumbent objective, `+inf` without one.
    pub objective: f64,
    /// Proven lower bound on the optimum.
    pub best_bound: f64,
    pub nodes_explored: usize,
    /// Relaxations the interior-point solver could not finish; their nodes
    /// were dropped.
    pub failed_relaxations: usize,
    pub wall_time: f64,
}

impl MipSolution {
    pub fn has_incumbent(&self) -> bool {
        self.values.is_some()
    }

    pub fn value(&self, var: VarId) -> Option<f64> {
        self.values.as_ref().map(|v| v[var.0])
    }
}

/// Per-solve summary kept in reports. Wall time is excluded from
/// serialization so reports stay reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub status: SolveStatus,
    pub nodes: usize,
    pub objective: f64,
    pub best_bound: f64,
    #[serde(skip)]
    pub wall_time: f64,
}

impl From<&MipSolution> for SolveStats {
    fn from(s: &MipSolution) -> Self {
        Self {
            status: s.status,
            nodes: s.nodes_explored,
            objective: s.objective,
            best_bound: s.best_bound,
            wall_time: s.wall_time,
        }
    }
}

/// Solves `model` with default options and the given limits.
pub fn solve(model: &MipModel, limits: SolveLimits) -> Result<MipSolution> {
    solve_with(
        model,
        &SolveOptions {
            limits,
            ..SolveOptions::default()
        },
    )
}

struct Node {
    bound: f64,
    seq: u64,
    fixings: Vec<(u32, bool)>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    // BinaryHeap is a max-heap: the smallest bound, then the oldest node, wins.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

struct Search<'m> {
    model: &'m MipModel,
    engine: RelaxationEngine<'m>,
    binaries: Vec<usize>,
    incumbent: Option<(f64, Vec<f64>)>,
    rel_gap: f64,
    failed: usize,
    tried: HashSet<Vec<(usize, bool)>>,
}

impl<'m> Search<'m> {
    fn cutoff(&self) -> f64 {
        match &self.incumbent {
            Some((obj, _)) => obj - (self.rel_gap * obj.abs()).max(1e-9),
            None => f64::INFINITY,
        }
    }

    fn pins(&self, fixings: &[(u32, bool)]) -> Vec<Option<f64>> {
        let mut pins = vec![None; self.model.num_vars()];
        for &(v, b) in fixings {
            pins[v as usize] = Some(if b { 1.0 } else { 0.0 });
        }
        pins
    }

    fn most_fractional(&self, values: &[f64], pins: &[Option<f64>]) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for &i in &self.binaries {
            if pins[i].is_some() {
                continue;
            }
            let frac = values[i].min(1.0 - values[i]);
            if frac <= INT_TOL {
                continue;
            }
            if best.is_none_or(|(_, f)| frac > f) {
                best = Some((i, frac));
            }
        }
        best.map(|(i, _)| i)
    }

    /// Solves with every binary pinned and keeps the point if it is feasible
    /// and beats the incumbent.
    fn accept_pinned(&mut self, pins: &[Option<f64>]) -> Option<f64> {
        let relax = self.engine.solve(pins);
        if relax.status != RelaxationStatus::Optimal {
            if relax.status == RelaxationStatus::Failed {
                self.failed += 1;
            }
            return None;
        }
        if !validate(self.model, &relax.values).is_empty() {
            return None;
        }
        if relax.objective < self.cutoff() {
            self.incumbent = Some((relax.objective, relax.values));
            return Some(relax.objective);
        }
        None
    }

    /// Pins every binary to its rounded value and re-solves the continuous part.
    fn polish(&mut self, values: &[f64]) -> Option<f64> {
        let mut pins = vec![None; self.model.num_vars()];
        for &i in &self.binaries {
            pins[i] = Some(values[i].round().clamp(0.0, 1.0));
        }
        self.accept_pinned(&pins)
    }

    /// Completes a (partial) assignment. Returns the new incumbent if the
    /// completion improved on the old one.
    fn try_assignment(&mut self, assignment: &Assignment) -> Option<Vec<f64>> {
        let mut key: Vec<(usize, bool)> = assignment.iter().map(|(v, b)| (v.0, *b)).collect();
        key.sort_unstable();
        if !self.tried.insert(key) {
            return None;
        }
        let mut pins = vec![None; self.model.num_vars()];
        for (v, b) in assignment {
            if self.model.variables[v.0].kind == VarKind::Binary {
                pins[v.0] = Some(if *b { 1.0 } else { 0.0 });
            }
        }
        let complete = self.binaries.iter().all(|&i| {
            let var = &self.model.variables[i];
            pins[i].is_some() || var.lower == var.upper
        });
        if complete {
            self.accept_pinned(&pins)?;
        } else {
            let r = self.engine.solve(&pins);
            if r.status != RelaxationStatus::Optimal
                || self
                    .binaries
                    .iter()
                    .any(|&i| r.values[i].min(1.0 - r.values[i]) > INT_TOL)
            {
                return None;
            }
            self.polish(&r.values)?;
        }
        self.incumbent.as_ref().map(|(_, v)| v.clone())
    }

    fn run_heuristic(&mut self, heuristic: &dyn PrimalHeuristic, values: &[f64], rounds: usize) {
        let mut frontier = heuristic.propose(values);
        for _ in 0..=rounds {
            let mut next = Vec::new();
            for a in &frontier {
                if let Some(found) = self.try_assignment(a) {
                    next = heuristic.propose(&found);
                }
            }
            if next.is_empty() {
                break;
            }
            frontier = next;
        }
    }
}

/// Branch and bound with warm starts, an optional primal heuristic and
/// optional concurrent node evaluation.
pub fn solve_with(model: &MipModel, options: &SolveOptions<'_>) -> Result<MipSolution> {
    model.check()?;
    let start = Instant::now();
    let limits = options.limits;
    let workers = options.workers.max(1);
    let mut search = Search {
        model,
        engine: RelaxationEngine::new(model),
        binaries: model.binaries().map(VarId::index).collect(),
        incumbent: None,
        rel_gap: limits.rel_gap,
        failed: 0,
        tried: HashSet::new(),
    };

    for ws in &options.warm_starts {
        search.try_assignment(ws);
    }

    let mut queue = BinaryHeap::new();
    let mut seq = 0u64;
    queue.push(Node {
        bound: f64::NEG_INFINITY,
        seq,
        fixings: Vec::new(),
    });
    let mut nodes = 0usize;
    let mut status = None;

    'outer: while !queue.is_empty() {
        if limits
            .time_limit
            .is_some_and(|t| start.elapsed().as_secs_f64() >= t)
        {
            status = Some(SolveStatus::TimeLimit);
            break;
        }
        if limits.node_limit.is_some_and(|n| nodes >= n) {
            status = Some(SolveStatus::NodeLimit);
            break;
        }
        let mut batch = Vec::with_capacity(workers);
        let remaining = limits.node_limit.map_or(usize::MAX, |n| n - nodes);
        while batch.len() < workers.min(remaining) {
            let Some(node) = queue.pop() else { break };
            if node.bound >= search.cutoff() {
                continue;
            }
            batch.push(node);
        }
        if batch.is_empty() {
            continue;
        }
        let pins: Vec<Vec<Option<f64>>> = batch.iter().map(|n| search.pins(&n.fixings)).collect();
        let relaxations: Vec<Relaxation> = if batch.len() == 1 {
            vec![search.engine.solve(&pins[0])]
        } else {
            let engine = &search.engine;
            pins.par_iter().map(|p| engine.solve(p)).collect()
        };

        for ((node, pins), relax) in batch.into_iter().zip(&pins).zip(relaxations) {
            nodes += 1;
            match relax.status {
                RelaxationStatus::Optimal => {}
                RelaxationStatus::Infeasible => continue,
                RelaxationStatus::Unbounded => {
                    if node.fixings.is_empty() {
                        status = Some(SolveStatus::Unbounded);
                        break 'outer;
                    }
                    continue;
                }
                RelaxationStatus::Failed => {
                    if node.fixings.is_empty() {
                        return Err(Error::Solver("root relaxation failed".into()));
                    }
                    search.failed += 1;
                    continue;
                }
            }
            if relax.objective >= search.cutoff() {
                continue;
            }
            let Some(branch) = search.most_fractional(&relax.values, pins) else {
                search.polish(&relax.values);
                continue;
            };
            if let Some(h) = options.heuristic {
                let interval = options.heuristic_interval.max(1);
                if node.fixings.is_empty() || nodes.is_multiple_of(interval) {
                    search.run_heuristic(h, &relax.values, options.refine_rounds);
                    if relax.objective >= search.cutoff() {
                        continue;
                    }
                }
            }
            let up_first = relax.values[branch] >= 0.5;
            for dir in [up_first, !up_first] {
                let mut fixings = node.fixings.clone();
                fixings.push((branch as u32, dir));
                seq += 1;
                queue.push(Node {
                    bound: relax.objective,
                    seq,
                    fixings,
                });
            }
        }
    }

    let open_bound = queue.iter().map(|n| n.bound).fold(f64::INFINITY, f64::min);
    let (objective, values) = match search.incumbent.take() {
        Some((o, v)) => (o, Some(v)),
        None => (f64::INFINITY, None),
    };
    let status = status.unwrap_or(if values.is_some() {
        SolveStatus::Optimal
    } else {
        SolveStatus::Infeasible
    });
    let best_bound = match status {
        SolveStatus::Optimal => objective,
        SolveStatus::Infeasible => f64::INFINITY,
        SolveStatus::Unbounded => f64::NEG_INFINITY,
        _ => open_bound.min(objective),
    };
    Ok(MipSolution {
        status,
        values,
        objective,
        best_bound,
        nodes_explored: nodes,
        failed_relaxations: search.failed,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mip::model::{AffineExpr, Relation};

    #[test]
    fn cover_two_of_four() {
        let mut m = MipModel::new();
        let b: Vec<VarId> = (0..4).map(|i| m.add_binary(format!("b{i}"))).collect();
        for &v in &b {
            m.add_objective_linear(v, 1.0);
        }
        m.add_constraint(
            "cover",
            b.iter().map(|&v| (v, 1.0)).collect(),
            Relation::Ge,
            2.0,
        )
        .unwrap();
        let s = solve(&m, SolveLimits::default()).unwrap();
        assert_eq!(s.status, SolveStatus::Optimal);
        assert!((s.objective - 2.0).abs() < 1e-9);
        assert!(validate(&m, s.values.as_ref().unwrap()).is_empty());
    }

    #[test]
    fn knapsack() {
        // max 3 b1 + 4 b2 + 5 b3 s.t. 2 b1 + 3 b2 + 4 b3 <= 6
        let mut m = MipModel::new();
        let b: Vec<VarId> = (0..3).map(|i| m.add_binary(format!("b{i}"))).collect();
        for (v, c) in b.iter().zip([3.0, 4.0, 5.0]) {
            m.add_objective_linear(*v, -c);
        }
        m.add_constraint(
            "cap",
            b.iter()
                .zip([2.0, 3.0, 4.0])
                .map(|(v, w)| (*v, w))
                .collect(),
            Relation::Le,
            6.0,
        )
        .unwrap();
        let s = solve(&m, SolveLimits::default()).unwrap();
        assert_eq!(s.status, SolveStatus::Optimal);
        assert!((s.objective + 8.0).abs() < 1e-7);
        let v = s.values.unwrap();
        assert_eq!((v[0], v[1], v[2]), (1.0, 0.0, 1.0));
    }

    #[test]
    fn infeasible_model() {
        let mut m = MipModel::new();
        let a = m.add_binary("a");
        let b = m.add_binary("b");
        m.add_constraint("both", vec![(a, 1.0), (b, 1.0)], Relation::Ge, 3.0)
            .unwrap();
        let s = solve(&m, SolveLimits::default()).unwrap();
        assert_eq!(s.status, SolveStatus::Infeasible);
        assert!(s.values.is_none());
    }

    fn sample_model() -> MipModel {
        let mut m = MipModel::new();
        let x = m.add_continuous("x", -10.0, 10.0);
        let y = m.add_continuous("y", -10.0, 10.0);
        let bs: Vec<VarId> = (0..6).map(|i| m.add_binary(format!("b{i}"))).collect();
        for (i, &b) in bs.iter().enumerate() {
            let c = (i as f64 * 1.7).sin() * 3.0;
            m.add_constraint(
                format!("gate{i}"),
                vec![(x, 1.0), (y, c), (b, -8.0)],
                Relation::Le,
                i as f64 - 2.0,
            )
            .unwrap();
            m.add_objective_linear(b, 0.3 + 0.1 * i as f64);
        }
        m.add_constraint(
            "pick",
            bs.iter().map(|&b| (b, 1.0)).collect(),
            Relation::Ge,
            2.0,
        )
        .unwrap();
        m.add_objective_square(1.0, AffineExpr::new(vec![(x, 1.0)], -4.0))
            .unwrap();
        m.add_objective_square(0.5, AffineExpr::new(vec![(x, 1.0), (y, -1.0)], 1.0))
            .unwrap();
        m
    }

    #[test]
    fn repeated_solves_are_identical() {
        let m = sample_model();
        let a = solve(&m, SolveLimits::default()).unwrap();
        let b = solve(&m, SolveLimits::default()).unwrap();
        assert_eq!(a.status, SolveStatus::Optimal);
        assert_eq!(a.nodes_explored, b.nodes_explored);
        assert_eq!(a.values, b.values);
    }

    #[test]
    fn workers_agree_on_optimum() {
        let m = sample_model();
        let a = solve(&m, SolveLimits::default()).unwrap();
        let b = solve_with(
            &m,
            &SolveOptions {
                workers: 4,
                ..SolveOptions::default()
            },
        )
        .unwrap();
        assert!((a.objective - b.objective).abs() < 1e-6 * (1.0 + a.objective.abs()));
    }

    #[test]
    fn node_limit_keeps_incumbent() {
        let m = sample_model();
        let s = solve(&m, SolveLimits::nodes(1)).unwrap();
        assert_eq!(s.nodes_explored, 1);
        assert!(matches!(
            s.status,
            SolveStatus::NodeLimit | SolveStatus::Optimal
        ));
        let full = solve(&m, SolveLimits::default()).unwrap();
        assert!(s.best_bound <= full.objective + 1e-7);
    }

    #[test]
    fn warm_start_becomes_incumbent() {
        let m = sample_model();
        let ws: Assignment = m.binaries().map(|v| (v, true)).collect();
        let opts = SolveOptions {
            limits: SolveLimits::nodes(0),
            warm_starts: vec![ws],
            ..SolveOptions::default()
        };
        let s = solve_with(&m, &opts).unwrap();
        assert_eq!(s.status, SolveStatus::NodeLimit);
        assert!(s.has_incumbent());
        assert!(validate(&m, s.values.as_ref().unwrap()).is_empty());
    }
}
