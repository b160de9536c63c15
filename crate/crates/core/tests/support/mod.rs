//! Independent reference solvers for the solver tests: exhaustive binary
//! enumeration over a dense two-phase simplex (linear objectives) or a primal
//! active-set method (strictly convex quadratic objectives).

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use coverplan::mip::{AffineExpr, MipModel, Relation, VarId};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Rel {
    Le,
    Ge,
    Eq,
}

/// A small mixed-binary program: variables `0..n_bin` are binary, the rest
/// continuous with finite bounds.
#[derive(Debug, Clone)]
pub struct SmallMip {
    pub n_bin: usize,
    pub n_cont: usize,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub rows: Vec<(Vec<f64>, Rel, f64)>,
    pub linear: Vec<f64>,
    /// `w * (e . x + k)^2`
    pub squares: Vec<(f64, Vec<f64>, f64)>,
}

impl SmallMip {
    pub fn n(&self) -> usize {
        self.n_bin + self.n_cont
    }

    pub fn is_quadratic(&self) -> bool {
        !self.squares.is_empty()
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        let dot = |a: &[f64]| a.iter().zip(x).map(|(a, x)| a * x).sum::<f64>();
        dot(&self.linear)
            + self
                .squares
                .iter()
                .map(|(w, e, k)| w * (dot(e) + k).powi(2))
                .sum::<f64>()
    }

    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (a, rel, b) in &self.rows {
            let act: f64 = a.iter().zip(x).map(|(a, x)| a * x).sum();
            let v = match rel {
                Rel::Le => act - b,
                Rel::Ge => b - act,
                Rel::Eq => (act - b).abs(),
            };
            worst = worst.max(v);
        }
        for j in 0..self.n_cont {
            let v = x[self.n_bin + j];
            worst = worst.max(self.lower[j] - v).max(v - self.upper[j]);
        }
        worst
    }

    pub fn to_model(&self) -> MipModel {
        let mut m = MipModel::new();
        let mut ids: Vec<VarId> = (0..self.n_bin)
            .map(|i| m.add_binary(format!("b{i}")))
            .collect();
        for j in 0..self.n_cont {
            ids.push(m.add_continuous(format!("x{j}"), self.lower[j], self.upper[j]));
        }
        let terms = |a: &[f64]| -> Vec<(VarId, f64)> {
            a.iter()
                .enumerate()
                .filter(|(_, c)| **c != 0.0)
                .map(|(i, c)| (ids[i], *c))
                .collect()
        };
        for (i, (a, rel, b)) in self.rows.iter().enumerate() {
            let relation = match rel {
                Rel::Le => Relation::Le,
                Rel::Ge => Relation::Ge,
                Rel::Eq => Relation::Eq,
            };
            m.add_constraint(format!("r{i}"), terms(a), relation, *b)
                .unwrap();
        }
        for (i, c) in self.linear.iter().enumerate() {
            if *c != 0.0 {
                m.add_objective_linear(ids[i], *c);
            }
        }
        for (w, e, k) in &self.squares {
            m.add_objective_square(*w, AffineExpr::new(terms(e), *k))
                .unwrap();
        }
        m
    }

    /// Best value over all binary patterns, with a minimizer.
    pub fn enumerate(&self) -> Option<(f64, Vec<f64>)> {
        let mut best: Option<(f64, Vec<f64>)> = None;
        for mask in 0u32..(1 << self.n_bin) {
            let b: Vec<f64> = (0..self.n_bin).map(|i| ((mask >> i) & 1) as f64).collect();
            if let Some(x) = self.solve_pattern(&b) {
                let mut full = b.clone();
                full.extend(x);
                let f = self.objective(&full);
                if best.as_ref().is_none_or(|(bf, _)| f < *bf) {
                    best = Some((f, full));
                }
            }
        }
        best
    }

    /// Minimizes over the continuous variables with the binaries fixed.
    pub fn solve_pattern(&self, b: &[f64]) -> Option<Vec<f64>> {
        let (nb, nc) = (self.n_bin, self.n_cont);
        let mut rows = Vec::new();
        for (a, rel, rhs) in &self.rows {
            let fixed: f64 = a[..nb].iter().zip(b).map(|(a, b)| a * b).sum();
            let ac = a[nb..].to_vec();
            let r = rhs - fixed;
            if ac.iter().all(|c| c.abs() < 1e-12) {
                let ok = match rel {
                    Rel::Le => 0.0 <= r + 1e-9,
                    Rel::Ge => 0.0 >= r - 1e-9,
                    Rel::Eq => r.abs() <= 1e-9,
                };
                if !ok {
                    return None;
                }
                continue;
            }
            rows.push((ac, *rel, r));
        }
        if nc == 0 {
            return Some(Vec::new());
        }
        let mut c = self.linear[nb..].to_vec();
        let mut h = DMatrix::<f64>::zeros(nc, nc);
        for (w, e, k) in &self.squares {
            let shift: f64 = e[..nb].iter().zip(b).map(|(a, b)| a * b).sum::<f64>() + k;
            let ec = &e[nb..];
            for i in 0..nc {
                c[i] += 2.0 * w * shift * ec[i];
                for j in 0..nc {
                    h[(i, j)] += 2.0 * w * ec[i] * ec[j];
                }
            }
        }
        if self.is_quadratic() {
            let start = lp(&vec![0.0; nc], &rows, &self.lower, &self.upper)?;
            Some(active_set(&h, &c, &rows, &self.lower, &self.upper, start))
        } else {
            lp(&c, &rows, &self.lower, &self.upper)
        }
    }
}

/// Random instance. About one in ten has right-hand sides drawn without a
/// planted feasible point and may be infeasible.
pub fn random_mip(rng: &mut impl Rng, quadratic: bool) -> SmallMip {
    let n_bin = rng.gen_range(1..=12);
    let n_cont = if quadratic {
        rng.gen_range(1..=8)
    } else {
        rng.gen_range(0..=8)
    };
    let n = n_bin + n_cont;
    let lower: Vec<f64> = (0..n_cont).map(|_| rng.gen_range(-5.0..0.0)).collect();
    let upper: Vec<f64> = (0..n_cont).map(|_| rng.gen_range(0.5..5.0)).collect();
    let planted: Vec<f64> = (0..n)
        .map(|i| {
            if i < n_bin {
                rng.gen_range(0..=1) as f64
            } else {
                rng.gen_range(lower[i - n_bin]..upper[i - n_bin])
            }
        })
        .collect();
    let wild = rng.gen_bool(0.1);
    let n_rows = rng.gen_range(1..=6);
    let mut rows = Vec::new();
    for r in 0..n_rows {
        let knapsack = rng.gen_bool(0.5);
        let mut a = vec![0.0; n];
        for (i, c) in a.iter_mut().enumerate() {
            if knapsack {
                if i < n_bin {
                    *c = rng.gen_range(1.0..6.0);
                }
            } else if rng.gen_bool(0.6) {
                *c = (rng.gen_range(-5.0f64..5.0) * 4.0).round() / 4.0;
            }
        }
        if a.iter().all(|c| *c == 0.0) {
            a[rng.gen_range(0..n)] = 1.0;
        }
        let rel = if knapsack {
            Rel::Le
        } else if r == 0 && n_cont >= 2 && rng.gen_bool(0.3) {
            Rel::Eq
        } else if rng.gen_bool(0.25) {
            Rel::Ge
        } else {
            Rel::Le
        };
        let act: f64 = a.iter().zip(&planted).map(|(a, x)| a * x).sum();
        let rhs = if wild {
            rng.gen_range(-6.0..6.0)
        } else {
            match rel {
                Rel::Le => act + rng.gen_range(0.0..1.5),
                Rel::Ge => act - rng.gen_range(0.0..1.5),
                Rel::Eq => act,
            }
        };
        rows.push((a, rel, rhs));
    }
    // Binaries mostly profitable so the capacity rows bind.
    let linear: Vec<f64> = (0..n)
        .map(|i| {
            if i < n_bin {
                rng.gen_range(-6.0..1.0)
            } else {
                rng.gen_range(-5.0..5.0)
            }
        })
        .collect();
    let mut squares = Vec::new();
    if quadratic {
        for j in 0..n_cont {
            let mut e = vec![0.0; n];
            e[n_bin + j] = 1.0;
            squares.push((rng.gen_range(0.1..2.0), e, rng.gen_range(-3.0..3.0)));
        }
        for _ in 0..rng.gen_range(0..=3) {
            let e: Vec<f64> = (0..n)
                .map(|_| {
                    if rng.gen_bool(0.5) {
                        rng.gen_range(-2.0..2.0)
                    } else {
                        0.0
                    }
                })
                .collect();
            squares.push((rng.gen_range(0.1..1.0), e, rng.gen_range(-2.0..2.0)));
        }
    }
    SmallMip {
        n_bin,
        n_cont,
        lower,
        upper,
        rows,
        linear,
        squares,
    }
}

// Dense simplex --------------------------------------------------------------

const PIV: f64 = 1e-9;

struct Tableau {
    t: Vec<Vec<f64>>,
    basis: Vec<usize>,
    cols: usize,
}

impl Tableau {
    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.t[r][c];
        for v in self.t[r].iter_mut() {
            *v /= p;
        }
        let row = self.t[r].clone();
        for (i, other) in self.t.iter_mut().enumerate() {
            if i != r && other[c] != 0.0 {
                let f = other[c];
                for (v, rv) in other.iter_mut().zip(&row) {
                    *v -= f * rv;
                }
            }
        }
        self.basis[r] = c;
    }

    /// Bland's rule on cost vector `cost`; false when unbounded.
    fn optimize(&mut self, cost: &[f64], allowed: &[bool]) -> bool {
        loop {
            let mut entering = None;
            for j in 0..self.cols {
                if !allowed[j] || self.basis.contains(&j) {
                    continue;
                }
                let d = cost[j]
                    - self
                        .t
                        .iter()
                        .zip(&self.basis)
                        .map(|(row, &b)| cost[b] * row[j])
                        .sum::<f64>();
                if d < -PIV {
                    entering = Some(j);
                    break;
                }
            }
            let Some(j) = entering else { return true };
            let mut leave: Option<(usize, f64)> = None;
            for (i, row) in self.t.iter().enumerate() {
                if row[j] > PIV {
                    let ratio = row[self.cols] / row[j];
                    let better = match leave {
                        None => true,
                        Some((l, best)) => {
                            ratio < best - 1e-12
                                || (ratio <= best + 1e-12 && self.basis[i] < self.basis[l])
                        }
                    };
                    if better {
                        leave = Some((i, ratio));
                    }
                }
            }
            let Some((r, _)) = leave else { return false };
            self.pivot(r, j);
        }
    }
}

/// `min c.x` over `rows` and `lower <= x <= upper`; `None` when infeasible.
pub fn lp(
    c: &[f64],
    rows: &[(Vec<f64>, Rel, f64)],
    lower: &[f64],
    upper: &[f64],
) -> Option<Vec<f64>> {
    let n = c.len();
    // y = x - lower >= 0, with y <= upper - lower as extra rows.
    let mut cons: Vec<(Vec<f64>, Rel, f64)> = rows
        .iter()
        .map(|(a, rel, b)| {
            (
                a.clone(),
                *rel,
                b - a.iter().zip(lower).map(|(a, l)| a * l).sum::<f64>(),
            )
        })
        .collect();
    for j in 0..n {
        let mut a = vec![0.0; n];
        a[j] = 1.0;
        cons.push((a, Rel::Le, upper[j] - lower[j]));
    }
    for (a, rel, b) in cons.iter_mut() {
        if *b < 0.0 {
            a.iter_mut().for_each(|v| *v = -*v);
            *b = -*b;
            *rel = match rel {
                Rel::Le => Rel::Ge,
                Rel::Ge => Rel::Le,
                Rel::Eq => Rel::Eq,
            };
        }
    }
    let m = cons.len();
    let n_slack = cons.iter().filter(|(_, r, _)| *r != Rel::Eq).count();
    let n_art = cons.iter().filter(|(_, r, _)| *r != Rel::Le).count();
    let cols = n + n_slack + n_art;
    let mut t = vec![vec![0.0; cols + 1]; m];
    let mut basis = vec![0; m];
    let (mut s, mut art) = (n, n + n_slack);
    let mut is_art = vec![false; cols];
    for (i, (a, rel, b)) in cons.iter().enumerate() {
        t[i][..n].copy_from_slice(a);
        t[i][cols] = *b;
        match rel {
            Rel::Le => {
                t[i][s] = 1.0;
                basis[i] = s;
                s += 1;
            }
            Rel::Ge => {
                t[i][s] = -1.0;
                s += 1;
                t[i][art] = 1.0;
                basis[i] = art;
                is_art[art] = true;
                art += 1;
            }
            Rel::Eq => {
                t[i][art] = 1.0;
                basis[i] = art;
                is_art[art] = true;
                art += 1;
            }
        }
    }
    let mut tab = Tableau { t, basis, cols };
    let phase1: Vec<f64> = is_art.iter().map(|&a| if a { 1.0 } else { 0.0 }).collect();
    tab.optimize(&phase1, &vec![true; cols]);
    let infeas: f64 = tab
        .basis
        .iter()
        .zip(&tab.t)
        .filter(|(b, _)| is_art[**b])
        .map(|(_, r)| r[cols])
        .sum();
    if infeas > 1e-7 {
        return None;
    }
    for r in 0..m {
        if is_art[tab.basis[r]] {
            if let Some(j) = (0..cols).find(|&j| !is_art[j] && tab.t[r][j].abs() > PIV) {
                tab.pivot(r, j);
            }
        }
    }
    let mut cost = vec![0.0; cols];
    cost[..n].copy_from_slice(c);
    let allowed: Vec<bool> = is_art.iter().map(|a| !a).collect();
    if !tab.optimize(&cost, &allowed) {
        panic!("reference LP unbounded despite finite bounds");
    }
    let mut y = vec![0.0; n];
    for (r, &b) in tab.basis.iter().enumerate() {
        if b < n {
            y[b] = tab.t[r][cols];
        }
    }
    Some(y.iter().zip(lower).map(|(y, l)| y + l).collect())
}

// Primal active set ----------------------------------------------------------

/// `min 0.5 x'Hx + c.x` for positive definite `H`, from a feasible `x`.
pub fn active_set(
    h: &DMatrix<f64>,
    c: &[f64],
    rows: &[(Vec<f64>, Rel, f64)],
    lower: &[f64],
    upper: &[f64],
    start: Vec<f64>,
) -> Vec<f64> {
    let n = c.len();
    // Inequalities as a.x <= b; equalities kept separately.
    let mut ineq: Vec<(DVector<f64>, f64)> = Vec::new();
    let mut eq: Vec<(DVector<f64>, f64)> = Vec::new();
    for (a, rel, b) in rows {
        let v = DVector::from_column_slice(a);
        match rel {
            Rel::Le => ineq.push((v, *b)),
            Rel::Ge => ineq.push((-v, -b)),
            Rel::Eq => eq.push((v, *b)),
        }
    }
    for j in 0..n {
        let mut e = DVector::zeros(n);
        e[j] = 1.0;
        ineq.push((e.clone(), upper[j]));
        ineq.push((-e, -lower[j]));
    }
    let c = DVector::from_column_slice(c);
    let mut x = DVector::from_vec(start);
    let mut working: Vec<usize> = Vec::new();
    for _ in 0..10_000 {
        let rows_w: Vec<&DVector<f64>> = eq
            .iter()
            .map(|(a, _)| a)
            .chain(working.iter().map(|&i| &ineq[i].0))
            .collect();
        let k = rows_w.len();
        let mut kkt = DMatrix::zeros(n + k, n + k);
        kkt.view_mut((0, 0), (n, n)).copy_from(h);
        for (r, a) in rows_w.iter().enumerate() {
            for j in 0..n {
                kkt[(n + r, j)] = a[j];
                kkt[(j, n + r)] = a[j];
            }
        }
        let grad = h * &x + &c;
        let mut rhs = DVector::zeros(n + k);
        rhs.rows_mut(0, n).copy_from(&(-&grad));
        let sol = kkt.lu().solve(&rhs).expect("working set stays independent");
        let p = sol.rows(0, n).into_owned();
        if p.norm() < 1e-11 * (1.0 + x.norm()) {
            let mult = sol.rows(n, k);
            let ne = eq.len();
            let worst = (0..working.len()).min_by(|&a, &b| mult[ne + a].total_cmp(&mult[ne + b]));
            match worst {
                Some(w) if mult[ne + w] < -1e-10 => {
                    working.remove(w);
                }
                _ => return x.iter().copied().collect(),
            }
            continue;
        }
        let mut alpha = 1.0;
        let mut blocking = None;
        for (i, (a, b)) in ineq.iter().enumerate() {
            if working.contains(&i) {
                continue;
            }
            let ap = a.dot(&p);
            if ap > 1e-12 {
                let step = ((b - a.dot(&x)) / ap).max(0.0);
                if step < alpha {
                    alpha = step;
                    blocking = Some(i);
                }
            }
        }
        x += alpha * p;
        if let Some(i) = blocking {
            working.push(i);
        }
    }
    panic!("active-set reference did not converge");
}
