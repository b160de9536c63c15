//! Double-integrator with drag: one second of full thrust along x, then a
//! coast, and the bound check on the result.

use coverplan::dynamics::{check_bounds, rollout, AgentParams, AgentState, ControlInput};
use coverplan::Vec3;

fn main() {
    let params = AgentParams::reference();
    let mut controls = vec![ControlInput::new(Vec3::new(params.u_max, 0.0, 0.0))];
    controls.extend(std::iter::repeat_n(ControlInput::zero(), 5));
    let plan = rollout(&AgentState::at_rest(Vec3::zeros()), &controls, &params);
    for (t, s) in plan.states().iter().enumerate() {
        println!(
            "t={t}: x = {:.4} m, vx = {:.4} m/s",
            s.position.x, s.velocity.x
        );
    }
    println!("bound violations: {}", check_bounds(&plan, &params).len());
}
