use coverplan::assessment::{solve_assessment, AssessmentProblem, AssessmentResult};
use coverplan::dynamics::{check_bounds, AgentParams, AgentState};
use coverplan::geometry::{Aabb, Cuboid, Waypoint};
use coverplan::mip::{SolveLimits, SolveStatus};
use coverplan::scenario::{parse_scenario, Scenario};
use coverplan::search::{
    mpc_step, nearest_unvisited, SearchProblem, SearchStepResult, StepOptions, VisitedMap,
};
use coverplan::Vec3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn l1(a: &Vec3, b: &Vec3) -> f64 {
    (a - b).abs().sum()
}

fn assessment(x0: Vec3, waypoints: &[Vec3], horizon: usize) -> AssessmentProblem {
    AssessmentProblem {
        x0: AgentState::at_rest(x0),
        waypoints: waypoints
            .iter()
            .enumerate()
            .map(|(j, p)| Waypoint {
                position: *p,
                object_id: format!("w{j}"),
            })
            .collect(),
        horizon,
        params: AgentParams::reference(),
        bounds: Aabb::new(Vec3::zeros(), Vec3::new(200.0, 200.0, 50.0)),
        big_m: None,
    }
}

fn check_assessment(problem: &AssessmentProblem, r: &AssessmentResult) {
    let states = r.plan.states();
    assert_eq!(r.plan.len(), problem.horizon);
    assert_eq!(r.visit_schedule.len(), problem.waypoints.len());
    let mut total = 0.0;
    for (j, w) in problem.waypoints.iter().enumerate() {
        let t = r.visit_schedule[j];
        assert!((1..=problem.horizon).contains(&t));
        let miss = l1(&states[t].position, &w.position);
        assert!(
            (miss - r.misses[j]).abs() <= 1e-6,
            "miss {j}: {miss} vs {}",
            r.misses[j]
        );
        total += miss;
    }
    assert!((total - r.objective).abs() <= 1e-6);
    assert!(check_bounds(&r.plan, &problem.params).is_empty());
}

#[test]
fn three_random_waypoints_are_each_visited_once() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..3 {
        let wps: Vec<Vec3> = (0..3)
            .map(|_| {
                Vec3::new(
                    rng.gen_range(0.0..200.0),
                    rng.gen_range(0.0..200.0),
                    rng.gen_range(0.0..50.0),
                )
            })
            .collect();
        let p = assessment(Vec3::new(100.0, 100.0, 25.0), &wps, 20);
        let r = solve_assessment(&p, SolveLimits::nodes(100)).unwrap();
        check_assessment(&p, &r);
    }
}

#[test]
fn waypoint_at_start_costs_nothing() {
    let x0 = Vec3::new(50.0, 60.0, 10.0);
    let p = assessment(x0, &[x0], 2);
    let r = solve_assessment(&p, SolveLimits::default()).unwrap();
    assert_eq!(r.stats.status, SolveStatus::Optimal);
    assert!(r.objective.abs() <= 1e-6);
    check_assessment(&p, &r);
}

#[test]
fn waypoint_within_two_step_reach_is_hit() {
    // From rest the position moves only from the second step on, by
    // dt^2 / m * u_0 per axis.
    let params = AgentParams::reference();
    let reach = params.dt * params.dt / params.mass * params.u_max;
    let x0 = Vec3::new(50.0, 60.0, 10.0);
    let w = x0 + Vec3::new(0.6 * reach, -0.3 * reach, 0.2 * reach);
    let p = assessment(x0, &[w], 2);
    let r = solve_assessment(&p, SolveLimits::default()).unwrap();
    assert!(r.objective <= 1e-6, "{}", r.objective);
    assert_eq!(r.visit_schedule, vec![2]);
    assert!(r
        .plan
        .controls()
        .iter()
        .all(|u| u.force.amax() <= params.u_max + 1e-9));
    check_assessment(&p, &r);
}

#[test]
fn longer_horizon_never_costs_more() {
    let wps = [
        Vec3::new(20.0, 180.0, 40.0),
        Vec3::new(190.0, 150.0, 5.0),
        Vec3::new(170.0, 10.0, 30.0),
    ];
    let x0 = Vec3::new(100.0, 100.0, 25.0);
    let mut last = f64::INFINITY;
    for t in [6, 9, 12] {
        let p = assessment(x0, &wps, t);
        let r = solve_assessment(&p, SolveLimits::default()).unwrap();
        assert_eq!(r.stats.status, SolveStatus::Optimal);
        check_assessment(&p, &r);
        assert!(
            r.objective <= last + 1e-6 * last.abs().max(1.0),
            "T={t}: {} after {last}",
            r.objective
        );
        last = r.objective;
    }
}

// Search stage ---------------------------------------------------------------

/// A 10 m cube at (50, 50, 5) searched on its -x face from 9 m, which is a
/// single cuboid centred at (36, 50, 5).
fn single_cuboid(start: [f64; 3], velocity: [f64; 3], extra: &str) -> Scenario {
    let text = format!(
        r#"
[bounds]
min = [0.0, 0.0, 0.0]
max = [100.0, 100.0, 40.0]

[agent]
position = [{}, {}, {}]
velocity = [{}, {}, {}]

[[objects]]
id = "cube"
center = [50.0, 50.0, 5.0]
half_extents = [5.0, 5.0, 5.0]
faces = ["-x"]
standoff = 9.0

[horizons]
search = 6
{extra}
"#,
        start[0], start[1], start[2], velocity[0], velocity[1], velocity[2]
    );
    parse_scenario(&text).unwrap()
}

fn step(scenario: &Scenario, visited: VisitedMap) -> (SearchProblem, SearchStepResult) {
    let cuboids = scenario.coverage_cuboids().unwrap();
    let problem = scenario.search_problem(scenario.initial, cuboids, visited, None);
    let options = StepOptions {
        limits: SolveLimits::nodes(60),
        workers: 1,
        ..StepOptions::default()
    };
    let result = mpc_step(&problem, &options).unwrap();
    (problem, result)
}

fn inside(c: &Cuboid, p: &Vec3, tol: f64) -> bool {
    c.signed_distances(p).all(|d| d <= tol)
}

/// Reward soundness, membership and obstacle exclusion of one step result.
fn check_step(problem: &SearchProblem, r: &SearchStepResult) {
    let planned: Vec<Vec3> = r.states.iter().map(|s| s.position).collect();
    let mut entered_cuboids = 0;
    for (n, c) in problem.cuboids.iter().enumerate() {
        let hit = planned.iter().any(|p| inside(&c.cuboid, p, 1e-6));
        if r.reward[n] {
            assert!(
                problem.visited.is_visited(n) || hit,
                "unearned reward for cuboid {n}"
            );
        }
        if r.entered[n] {
            assert!(
                hit,
                "cuboid {n} marked entered but no planned position is inside"
            );
        }
        if hit && !problem.visited.is_visited(n) {
            entered_cuboids += 1;
        }
    }
    let claimed = (0..problem.cuboids.len())
        .filter(|&n| r.reward[n] && !problem.visited.is_visited(n))
        .count();
    assert!(claimed <= entered_cuboids);
    for body in &problem.obstacles {
        for p in &planned {
            assert!(
                body.signed_distances(p).any(|d| d > problem.epsilon - 1e-6),
                "planned position {p:?} is within epsilon of an obstacle"
            );
        }
    }
}

#[test]
fn starting_inside_the_cuboid_earns_its_reward() {
    let s = single_cuboid([36.0, 50.0, 5.0], [0.0; 3], "");
    let (problem, r) = step(&s, VisitedMap::new(1));
    check_step(&problem, &r);
    assert!(r.reward[0]);
    assert!(r.entered[0]);
    assert!(
        r.objective < 0.0,
        "reward term should dominate: {}",
        r.objective
    );
}

#[test]
fn cuboid_within_reach_is_entered() {
    let s = single_cuboid([31.0, 50.0, 5.0], [0.0; 3], "");
    let (problem, r) = step(&s, VisitedMap::new(1));
    check_step(&problem, &r);
    assert!(r.reward[0]);
    let cuboid = &problem.cuboids[0].cuboid;
    assert!(r.states.iter().any(|x| cuboid.contains(&x.position)));
}

#[test]
fn planned_path_keeps_clear_of_a_wall_in_the_way() {
    let wall = "[[obstacles]]\nid = \"wall\"\ncenter = [25.0, 50.0, 10.0]\nhalf_extents = [1.0, 12.0, 10.0]\n";
    let s = single_cuboid([12.0, 50.0, 5.0], [4.0, 0.0, 0.0], wall);
    let (problem, r) = step(&s, VisitedMap::new(1));
    assert_eq!(problem.obstacles.len(), 1);
    check_step(&problem, &r);
}

#[test]
fn pure_tracking_moves_toward_the_target() {
    let s = single_cuboid(
        [5.0, 80.0, 30.0],
        [0.0; 3],
        "[weights]\na = 0.3\nb = 0.001\nc = 0.0\n",
    );
    let (problem, r) = step(&s, VisitedMap::new(1));
    let target = r.target_point;
    let start = (problem.state.position - target).norm();
    let end = (r.states[problem.tau_star()].position - target).norm();
    assert!(end <= start, "{end} > {start}");
}

#[test]
fn rolling_steps_with_obstacles_keep_every_invariant() {
    let text = std::fs::read_to_string(
        std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/two_cubes_small.toml"),
    )
    .unwrap();
    let s = parse_scenario(&text).unwrap();
    let cuboids = s.coverage_cuboids().unwrap();
    let mut visited = VisitedMap::new(cuboids.len());
    let mut state = s.initial;
    let mut warm = Vec::new();
    for _ in 0..8 {
        let problem = s.search_problem(state, cuboids.clone(), visited.clone(), None);
        let options = StepOptions {
            limits: SolveLimits::nodes(30),
            workers: 1,
            warm_controls: warm,
        };
        let r = mpc_step(&problem, &options).unwrap();
        check_step(&problem, &r);
        state = coverplan::dynamics::step(&state, &r.controls[0], &s.agent);
        for (n, c) in cuboids.iter().enumerate() {
            if c.cuboid.contains(&state.position) {
                visited.mark(n);
            }
        }
        warm = r.controls[1..].to_vec();
    }
}

#[test]
fn nearest_cuboid_matches_a_full_scan() {
    let text = std::fs::read_to_string(
        std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/one_cube.toml"),
    )
    .unwrap();
    let s = parse_scenario(&text).unwrap();
    let cuboids = s.coverage_cuboids().unwrap();
    let from = Vec3::new(60.0, 230.0, 10.0);
    let mut visited = VisitedMap::new(cuboids.len());
    for _ in 0..cuboids.len() {
        let (n, centroid) = nearest_unvisited(&from, &cuboids, &visited).unwrap();
        let best = (0..cuboids.len())
            .filter(|&k| !visited.is_visited(k))
            .map(|k| (cuboids[k].cuboid.centroid() - from).norm())
            .fold(f64::INFINITY, f64::min);
        assert!(((centroid - from).norm() - best).abs() < 1e-12);
        assert_eq!(centroid, cuboids[n].cuboid.centroid());
        visited.mark(n);
    }
    assert!(nearest_unvisited(&from, &cuboids, &visited).is_none());
}
