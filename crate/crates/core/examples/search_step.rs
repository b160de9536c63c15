//! One receding-horizon step of the search stage from the scaled single-cube
//! scenario, with the model size it solves.

use std::path::Path;

use coverplan::mip::SolveLimits;
use coverplan::scenario::load_scenario;
use coverplan::search::{build_search_model, mpc_step, StepOptions, VisitedMap};

fn main() -> coverplan::Result<()> {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "scenarios/one_cube_small.toml".into());
    let scenario = load_scenario(Path::new(&path))?;
    let cuboids = scenario.coverage_cuboids()?;
    let visited = VisitedMap::new(cuboids.len());
    let problem = scenario.search_problem(scenario.initial, cuboids, visited, None);

    let model = build_search_model(&problem)?;
    println!(
        "{} variables, {} binaries, {:?}",
        model.model.num_vars(),
        model.model.num_binaries(),
        model.families
    );

    let options = StepOptions {
        limits: SolveLimits::nodes(40),
        workers: 1,
        ..StepOptions::default()
    };
    let step = mpc_step(&problem, &options)?;
    println!(
        "target cuboid {} at {:?}",
        step.target,
        step.target_point.as_slice()
    );
    println!("{:?}, objective {:.4}", step.stats.status, step.objective);
    for (k, s) in step.states.iter().enumerate() {
        let p = s.position;
        println!(
            "  planned x_{}: ({:.2}, {:.2}, {:.2})",
            k + 1,
            p.x,
            p.y,
            p.z
        );
    }
    Ok(())
}
