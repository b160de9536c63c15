//! Free-format MPS export (with a `QUADOBJ` section for the quadratic part).
//!
//! Rows are named `R{i}` and columns `C{j}` after their model index so the
//! file stays valid whatever the model's own names contain. The objective
//! row is `OBJ`; its constant is written as the negated `RHS` entry, the
//! usual convention.

use std::collections::BTreeMap;
use std::fmt::Write;

use super::model::{MipModel, Relation, VarKind};

pub fn write_mps(model: &MipModel, name: &str) -> String {
    let n = model.num_vars();
    let mut out = String::new();
    let _ = writeln!(out, "NAME {}", if name.is_empty() { "MODEL" } else { name });
    out.push_str("ROWS\n N OBJ\n");
    for (i, c) in model.constraints.iter().enumerate() {
        let tag = match c.relation {
            Relation::Le => 'L',
            Relation::Ge => 'G',
            Relation::Eq => 'E',
        };
        let _ = writeln!(out, " {tag} R{i}");
    }

    // Linear objective including the cross terms of the squared expressions.
    let mut obj = vec![0.0; n];
    let mut constant = model.objective.constant;
    for (v, c) in &model.objective.linear {
        obj[v.0] += c;
    }
    let mut quad: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for (w, e) in &model.objective.squares {
        constant += w * e.constant * e.constant;
        for (a, ca) in &e.terms {
            obj[a.0] += 2.0 * w * e.constant * ca;
            for (b, cb) in &e.terms {
                if a.0 <= b.0 {
                    // QUADOBJ holds one triangle of H for 0.5 x'Hx.
                    *quad.entry((a.0, b.0)).or_default() += 2.0 * w * ca * cb;
                }
            }
        }
    }
    let mut columns: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (i, c) in model.constraints.iter().enumerate() {
        for (v, a) in &c.terms {
            columns[v.0].push((i, *a));
        }
    }

    out.push_str("COLUMNS\n");
    let mut in_int = false;
    let mut markers = 0;
    for j in 0..n {
        let binary = model.variables[j].kind == VarKind::Binary;
        if binary != in_int {
            let kind = if binary { "INTORG" } else { "INTEND" };
            let _ = writeln!(out, " M{markers} 'MARKER' '{kind}'");
            markers += 1;
            in_int = binary;
        }
        if obj[j] != 0.0 {
            let _ = writeln!(out, " C{j} OBJ {}", obj[j]);
        }
        for (i, a) in &columns[j] {
            let _ = writeln!(out, " C{j} R{i} {a}");
        }
        if obj[j] == 0.0 && columns[j].is_empty() {
            let _ = writeln!(out, " C{j} OBJ 0");
        }
    }
    if in_int {
        let _ = writeln!(out, " M{markers} 'MARKER' 'INTEND'");
    }

    out.push_str("RHS\n");
    if constant != 0.0 {
        let _ = writeln!(out, " RHS OBJ {}", -constant);
    }
    for (i, c) in model.constraints.iter().enumerate() {
        if c.rhs != 0.0 {
            let _ = writeln!(out, " RHS R{i} {}", c.rhs);
        }
    }

    out.push_str("BOUNDS\n");
    for (j, v) in model.variables.iter().enumerate() {
        if v.kind == VarKind::Binary && v.lower == 0.0 && v.upper == 1.0 {
            let _ = writeln!(out, " BV BND C{j}");
            continue;
        }
        match (v.lower.is_finite(), v.upper.is_finite()) {
            (false, false) => {
                let _ = writeln!(out, " FR BND C{j}");
            }
            (lo, up) => {
                if !lo {
                    let _ = writeln!(out, " MI BND C{j}");
                } else if v.lower != 0.0 || v.kind == VarKind::Binary {
                    let _ = writeln!(out, " LO BND C{j} {}", v.lower);
                }
                if up {
                    let _ = writeln!(out, " UP BND C{j} {}", v.upper);
                }
            }
        }
    }

    if !quad.is_empty() {
        out.push_str("QUADOBJ\n");
        for ((a, b), h) in quad {
            if h != 0.0 {
                let _ = writeln!(out, " C{a} C{b} {h}");
            }
        }
    }
    out.push_str("ENDATA\n");
    out
}
