//! Flies the search stage on a scenario file and prints the coverage summary.
//!
//! cargo run --release --example search_mission -- scenarios/one_cube_small.toml [nodes] [max_steps] [trajectory.csv]

use std::path::PathBuf;
use std::time::Instant;

use coverplan::harness::{run_search_mission, RunConfig};
use coverplan::mip::SolveLimits;
use coverplan::scenario::{export_trajectory, load_scenario};

fn main() -> coverplan::Result<()> {
    let mut args = std::env::args().skip(1);
    let path = PathBuf::from(
        args.next()
            .unwrap_or_else(|| "scenarios/one_cube_small.toml".into()),
    );
    let nodes: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(40);
    let max_steps: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(150);
    let csv = args.next().map(PathBuf::from);

    let scenario = load_scenario(&path)?;
    let config = RunConfig {
        limits: SolveLimits::nodes(nodes),
        max_steps,
        ..RunConfig::default()
    };
    let start = Instant::now();
    let outcome = run_search_mission(&scenario, scenario.initial, &config)?;
    let report = &outcome.report;

    for s in &report.step_stats {
        if !s.new_visits.is_empty() {
            println!(
                "step {:>3}: target {:>2}, entered {:?}",
                s.step, s.target, s.new_visits
            );
        }
    }
    println!(
        "{:?}: {} of {} cuboids in {} steps, {} nodes, {:.1} s",
        report.termination,
        report.visited_count,
        report.total_cuboids,
        report.steps,
        report.total_nodes(),
        start.elapsed().as_secs_f64()
    );
    println!(
        "state collisions {}, segment collisions {}, bound violations {}",
        report.state_collisions.len(),
        report.segment_collisions.len(),
        report.bound_violations
    );
    if let Some(csv) = csv {
        export_trajectory(&outcome.plan, &csv)?;
    }
    Ok(())
}
