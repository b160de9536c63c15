//! Stage one: steer past three waypoints within a 30-step horizon.

use coverplan::assessment::{solve_assessment, AssessmentProblem};
use coverplan::dynamics::{AgentParams, AgentState};
use coverplan::geometry::{Aabb, Waypoint};
use coverplan::mip::SolveLimits;
use coverplan::Vec3;

fn main() -> coverplan::Result<()> {
    let waypoints = [
        (40.0, 150.0, 30.0),
        (160.0, 160.0, 20.0),
        (120.0, 30.0, 40.0),
    ]
    .iter()
    .enumerate()
    .map(|(j, &(x, y, z))| Waypoint {
        position: Vec3::new(x, y, z),
        object_id: format!("w{j}"),
    })
    .collect();
    let problem = AssessmentProblem {
        x0: AgentState::at_rest(Vec3::new(100.0, 100.0, 25.0)),
        waypoints,
        horizon: 30,
        params: AgentParams::reference(),
        bounds: Aabb::new(Vec3::zeros(), Vec3::new(200.0, 200.0, 50.0)),
        big_m: None,
    };
    let result = solve_assessment(&problem, SolveLimits::nodes(200))?;
    println!(
        "{:?} after {} nodes",
        result.stats.status, result.stats.nodes
    );
    for (j, (t, miss)) in result.visit_schedule.iter().zip(&result.misses).enumerate() {
        println!("waypoint {j}: visited at step {t}, L1 miss {miss:.6} m");
    }
    println!("objective {:.6}", result.objective);
    Ok(())
}
