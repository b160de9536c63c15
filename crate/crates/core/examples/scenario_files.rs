//! Parses a scenario, prints its digest and derived geometry, and round-trips
//! a short trajectory through the CSV format.

use std::path::Path;

use coverplan::dynamics::{rollout, ControlInput};
use coverplan::scenario::{load_scenario, parse_trajectory, trajectory_csv};
use coverplan::Vec3;

fn main() -> coverplan::Result<()> {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "scenarios/two_cubes.toml".into());
    let scenario = load_scenario(Path::new(&path))?;
    println!("{} ({})", scenario.name, scenario.digest());
    for (o, n) in scenario.objects.iter().zip(scenario.cuboids_per_object()?) {
        println!(
            "  object {}: faces {:?}, standoff {} m, {n} coverage cuboids",
            o.id, o.faces, o.standoff
        );
    }
    for w in scenario.waypoints()? {
        println!(
            "  waypoint for {}: {:?}",
            w.object_id,
            w.position.as_slice()
        );
    }

    let controls = vec![ControlInput::new(Vec3::new(5.0, -3.0, 1.0)); 3];
    let plan = rollout(&scenario.initial, &controls, &scenario.agent);
    let text = trajectory_csv(&plan);
    print!("{text}");
    let back = parse_trajectory(&text, &scenario.agent)?;
    println!("round trip exact: {}", back == plan);
    Ok(())
}
