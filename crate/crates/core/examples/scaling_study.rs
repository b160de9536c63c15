//! Random-waypoint study of the assessment stage: how solve effort and the
//! achieved miss distance grow with the number of waypoints.

use coverplan::geometry::Aabb;
use coverplan::harness::{study_csv, waypoint_scaling_study, StudyConfig};
use coverplan::Vec3;

fn main() -> coverplan::Result<()> {
    let area = Aabb::new(Vec3::zeros(), Vec3::new(200.0, 200.0, 50.0));
    let mut config = StudyConfig::new(area, vec![1, 2, 3, 4], 5, 40, 7);
    config.workers = 4;
    let outcome = waypoint_scaling_study(&config)?;
    print!("{}", study_csv(&outcome.rows));
    for (row, t) in outcome.rows.iter().zip(&outcome.mean_runtime) {
        println!("{} waypoints: {:.3} s per solve", row.count, t);
    }
    Ok(())
}
