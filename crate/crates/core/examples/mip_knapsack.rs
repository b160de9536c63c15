//! The branch-and-bound solver on a three-item knapsack, plus the same model
//! in MPS form.

use coverplan::mip::{solve, write_mps, MipModel, Relation, SolveLimits, VarId};

fn main() -> coverplan::Result<()> {
    // max 3 b1 + 4 b2 + 5 b3 subject to 2 b1 + 3 b2 + 4 b3 <= 6
    let mut m = MipModel::new();
    let b: Vec<VarId> = (1..=3).map(|i| m.add_binary(format!("b{i}"))).collect();
    for (v, value) in b.iter().zip([3.0, 4.0, 5.0]) {
        m.add_objective_linear(*v, -value);
    }
    let weights = b
        .iter()
        .zip([2.0, 3.0, 4.0])
        .map(|(v, w)| (*v, w))
        .collect();
    m.add_constraint("capacity", weights, Relation::Le, 6.0)?;

    let s = solve(&m, SolveLimits::default())?;
    println!(
        "{:?}: value {}, picks {:?}, {} nodes",
        s.status, -s.objective, s.values, s.nodes_explored
    );
    print!("{}", write_mps(&m, "KNAPSACK"));
    Ok(())
}
