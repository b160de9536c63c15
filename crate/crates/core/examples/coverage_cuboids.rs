//! Camera footprint and the coverage cuboids of a 60 m cube searched from
//! 27 m and from 53 m.

use coverplan::geometry::{footprint_side, generate_coverage_cuboids, Cuboid};
use coverplan::Vec3;

fn main() -> coverplan::Result<()> {
    let fov = 60f64.to_radians();
    let cube = Cuboid::axis_aligned(Vec3::new(30.0, 30.0, 30.0), Vec3::new(30.0, 30.0, 30.0))?;
    for d in [27.0, 53.0] {
        let r = footprint_side(d, fov)?;
        let cuboids = generate_coverage_cuboids(&cube, "cube", &[1, 2, 3, 4], d, fov, 0.2 * d)?;
        println!(
            "d = {d} m: footprint {r:.3} m, {} coverage cuboids",
            cuboids.len()
        );
        for c in &cuboids {
            let p = c.cuboid.centroid();
            println!(
                "  face {} cell {}: centroid ({:.2}, {:.2}, {:.2})",
                c.face_index, c.cell_index, p.x, p.y, p.z
            );
        }
    }
    Ok(())
}
