//! Continuous relaxations: binaries relaxed to `[0, 1]`, pinned variables
//! substituted out, and the remaining convex QP handed to an interior-point
//! solver.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettings, DefaultSettingsBuilder, DefaultSolver, IPSolver, NonnegativeConeT,
    SolverStatus, SupportedConeT, ZeroConeT,
};

use super::model::{MipModel, Relation, VarId, VarKind};

/// Relative KKT tolerance requested from the interior-point solver.
pub const KKT_TOL: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RelaxationStatus {
    Optimal,
    Infeasible,
    Unbounded,
    /// The interior-point solver stalled or hit its iteration limit.
    Failed,
}

#[derive(Debug, Clone)]
pub struct Relaxation {
    pub status: RelaxationStatus,
    /// One value per model variable; empty unless `Optimal`.
    pub values: Vec<f64>,
    pub objective: f64,
}

impl Relaxation {
    fn with_status(status: RelaxationStatus) -> Self {
        let objective = match status {
            RelaxationStatus::Unbounded => f64::NEG_INFINITY,
            _ => f64::INFINITY,
        };
        Self {
            status,
            values: Vec::new(),
            objective,
        }
    }
}

/// Solves the relaxation of `model` with the binaries in `fixed` pinned.
pub fn solve_relaxation(model: &MipModel, fixed: &[(VarId, bool)]) -> Relaxation {
    let mut pins = vec![None; model.num_vars()];
    for (v, b) in fixed {
        pins[v.0] = Some(if *b { 1.0 } else { 0.0 });
    }
    RelaxationEngine::new(model).solve(&pins)
}

/// Model data rearranged once for repeated relaxation solves.
pub(crate) struct RelaxationEngine<'a> {
    model: &'a MipModel,
    /// Upper-triangular entries `(i, j, h)` of the objective Hessian, `i <= j`,
    /// for `0.5 x' H x`.
    hessian: Vec<(usize, usize, f64)>,
    linear: Vec<f64>,
}

impl<'a> RelaxationEngine<'a> {
    pub(crate) fn new(model: &'a MipModel) -> Self {
        let n = model.num_vars();
        let mut linear = vec![0.0; n];
        for (v, c) in &model.objective.linear {
            linear[v.0] += c;
        }
        let mut hessian = Vec::new();
        for (w, expr) in &model.objective.squares {
            for (a, ca) in &expr.terms {
                linear[a.0] += 2.0 * w * expr.constant * ca;
                for (b, cb) in &expr.terms {
                    if a.0 <= b.0 {
                        hessian.push((a.0, b.0, 2.0 * w * ca * cb));
                    }
                }
            }
        }
        Self {
            model,
            hessian,
            linear,
        }
    }

    /// `pins[i] = Some(v)` fixes variable `i` at `v`.
    pub(crate) fn solve(&self, pins: &[Option<f64>]) -> Relaxation {
        let model = self.model;
        let n = model.num_vars();
        let mut lower = vec![0.0; n];
        let mut upper = vec![0.0; n];
        for (i, var) in model.variables.iter().enumerate() {
            let (mut lo, mut hi) = (var.lower, var.upper);
            if var.kind == VarKind::Binary {
                lo = lo.max(0.0);
                hi = hi.min(1.0);
            }
            if let Some(p) = pins[i] {
                if p < lo - 1e-9 || p > hi + 1e-9 {
                    return Relaxation::with_status(RelaxationStatus::Infeasible);
                }
                lo = p;
                hi = p;
            }
            if lo > hi + 1e-9 {
                return Relaxation::with_status(RelaxationStatus::Infeasible);
            }
            lower[i] = lo;
            upper[i] = hi.max(lo);
        }

        // Column map for free variables; fixed ones keep their value.
        let mut col = vec![usize::MAX; n];
        let mut values = vec![0.0; n];
        let mut free = Vec::new();
        for i in 0..n {
            if upper[i] - lower[i] <= 1e-12 {
                values[i] = lower[i];
            } else {
                col[i] = free.len();
                free.push(i);
            }
        }
        let nf = free.len();

        // Rows: equalities first (zero cone), then inequalities as `a x <= b`.
        let mut eq_rows: Vec<(Vec<(usize, f64)>, f64)> = Vec::new();
        let mut le_rows: Vec<(Vec<(usize, f64)>, f64)> = Vec::new();
        for c in &model.constraints {
            let mut fixed_part = 0.0;
            let mut terms = Vec::with_capacity(c.terms.len());
            for (v, a) in &c.terms {
                if col[v.0] == usize::MAX {
                    fixed_part += a * values[v.0];
                } else {
                    terms.push((col[v.0], *a));
                }
            }
            let rhs = c.rhs - fixed_part;
            if terms.is_empty() {
                let tol = 1e-9 * (1.0 + c.rhs.abs());
                let ok = match c.relation {
                    Relation::Le => rhs >= -tol,
                    Relation::Ge => rhs <= tol,
                    Relation::Eq => rhs.abs() <= tol,
                };
                if !ok {
                    return Relaxation::with_status(RelaxationStatus::Infeasible);
                }
                continue;
            }
            match c.relation {
                Relation::Eq => eq_rows.push((terms, rhs)),
                Relation::Le => le_rows.push((terms, rhs)),
                Relation::Ge => {
                    le_rows.push((terms.into_iter().map(|(j, a)| (j, -a)).collect(), -rhs))
                }
            }
        }
        for (j, &i) in free.iter().enumerate() {
            if upper[i].is_finite() {
                le_rows.push((vec![(j, 1.0)], upper[i]));
            }
            if lower[i].is_finite() {
                le_rows.push((vec![(j, -1.0)], -lower[i]));
            }
        }

        // Objective restricted to the free block.
        let mut q = vec![0.0; nf];
        for (j, &i) in free.iter().enumerate() {
            q[j] = self.linear[i];
        }
        let (mut pi, mut pj, mut pv) = (Vec::new(), Vec::new(), Vec::new());
        for &(i, j, h) in &self.hessian {
            match (col[i] != usize::MAX, col[j] != usize::MAX) {
                (true, true) => {
                    pi.push(col[i]);
                    pj.push(col[j]);
                    pv.push(h);
                }
                (true, false) => q[col[i]] += h * values[j],
                (false, true) => q[col[j]] += h * values[i],
                (false, false) => {}
            }
        }

        if nf == 0 {
            return Relaxation {
                status: RelaxationStatus::Optimal,
                objective: model.objective_value(&values),
                values,
            };
        }

        let m = eq_rows.len() + le_rows.len();
        let (mut ai, mut aj, mut av) = (Vec::new(), Vec::new(), Vec::new());
        let mut b = Vec::with_capacity(m);
        for (r, (terms, rhs)) in eq_rows.iter().chain(le_rows.iter()).enumerate() {
            for &(j, a) in terms {
                ai.push(r);
                aj.push(j);
                av.push(a);
            }
            b.push(*rhs);
        }
        let p_mat = CscMatrix::new_from_triplets(nf, nf, pi, pj, pv);
        let a_mat = CscMatrix::new_from_triplets(m, nf, ai, aj, av);
        let mut cones: Vec<SupportedConeT<f64>> = Vec::new();
        if !eq_rows.is_empty() {
            cones.push(ZeroConeT(eq_rows.len()));
        }
        if !le_rows.is_empty() {
            cones.push(NonnegativeConeT(le_rows.len()));
        }

        let mut outcome = run_clarabel(&p_mat, &q, &a_mat, &b, &cones, settings(false));
        if matches!(
            outcome,
            Some((SolverStatus::NumericalError, _))
                | Some((SolverStatus::InsufficientProgress, _))
                | Some((SolverStatus::MaxIterations, _))
                | None
        ) {
            outcome = run_clarabel(&p_mat, &q, &a_mat, &b, &cones, settings(true));
        }
        let Some((status, x)) = outcome else {
            return Relaxation::with_status(RelaxationStatus::Failed);
        };
        match status {
            SolverStatus::Solved | SolverStatus::AlmostSolved => {
                for (j, &i) in free.iter().enumerate() {
                    // Interior-point iterates sit strictly inside the bounds;
                    // snap to them so bound checks are exact.
                    values[i] = x[j].clamp(lower[i], upper[i]);
                }
                Relaxation {
                    status: RelaxationStatus::Optimal,
                    objective: model.objective_value(&values),
                    values,
                }
            }
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
                Relaxation::with_status(RelaxationStatus::Infeasible)
            }
            SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => {
                Relaxation::with_status(RelaxationStatus::Unbounded)
            }
            _ => Relaxation::with_status(RelaxationStatus::Failed),
        }
    }
}

fn settings(fallback: bool) -> DefaultSettings<f64> {
    let mut b = DefaultSettingsBuilder::default();
    b.verbose(false)
        .max_iter(if fallback { 400 } else { 200 })
        .tol_gap_abs(KKT_TOL)
        .tol_gap_rel(KKT_TOL)
        .tol_feas(KKT_TOL)
        .max_threads(1);
    if fallback {
        b.static_regularization_constant(1e-7)
            .equilibrate_max_iter(30);
    }
    b.build().expect("valid solver settings")
}

fn run_clarabel(
    p: &CscMatrix<f64>,
    q: &[f64],
    a: &CscMatrix<f64>,
    b: &[f64],
    cones: &[SupportedConeT<f64>],
    settings: DefaultSettings<f64>,
) -> Option<(SolverStatus, Vec<f64>)> {
    let mut solver = DefaultSolver::new(p, q, a, b, cones, settings).ok()?;
    solver.solve();
    Some((solver.solution.status, solver.solution.x.clone()))
}
