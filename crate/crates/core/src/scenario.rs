//! Scenario files, validation, and the trajectory and report exports.
//!
//! Scenarios are TOML; `docs/FORMATS.md` describes every field. Parsing
//! fills in every default so a parsed [`Scenario`] (and its digest) fully
//! describes a run.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::assessment::AssessmentProblem;
use crate::dynamics::{step, AgentParams, AgentState, ControlInput, Plan};
use crate::geometry::{
    generate_coverage_cuboids, generate_waypoint, Aabb, CoverageCuboid, Cuboid, Waypoint,
};
use crate::harness::CoverageReport;
use crate::search::{SearchProblem, VisitedMap, Weights, DEFAULT_EPSILON, DEFAULT_GUARD};
use crate::{Error, Result, Vec3};

pub const DEFAULT_CLEARANCE: f64 = 10.0;
pub const DEFAULT_DEPTH_RATIO: f64 = 0.2;
pub const DEFAULT_ASSESS_HORIZON: usize = 55;
pub const DEFAULT_SEARCH_HORIZON: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub id: String,
    pub body: Cuboid,
    /// 1-based face indices to search.
    pub faces: Vec<usize>,
    pub standoff: f64,
    pub clearance: f64,
    pub depth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObstacleSpec {
    pub id: String,
    pub body: Cuboid,
}

/// Tracking step of the search objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TauStar {
    /// Last step of the horizon.
    Terminal,
    Step(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub bounds: Aabb,
    pub agent: AgentParams,
    pub initial: AgentState,
    pub objects: Vec<ObjectSpec>,
    pub obstacles: Vec<ObstacleSpec>,
    pub weights: Weights,
    pub assess_horizon: usize,
    pub search_horizon: usize,
    pub big_m_assess: Option<f64>,
    pub big_m_search: Option<f64>,
    pub epsilon: f64,
    pub guard: f64,
    /// Also keep the search trajectory clear of the objects being searched.
    pub avoid_objects: bool,
    pub tau_star: TauStar,
}

// Raw file layout ----------------------------------------------------------

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    name: Option<String>,
    bounds: RawBounds,
    agent: RawAgent,
    #[serde(default)]
    objects: Vec<RawObject>,
    #[serde(default)]
    obstacles: Vec<RawObstacle>,
    weights: Option<RawWeights>,
    horizons: Option<RawHorizons>,
    overrides: Option<RawOverrides>,
    search: Option<RawSearch>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBounds {
    min: [f64; 3],
    max: [f64; 3],
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAgent {
    dt: Option<f64>,
    mass: Option<f64>,
    drag: Option<f64>,
    u_max: Option<f64>,
    v_max: Option<f64>,
    fov_angle: Option<f64>,
    fov_angle_deg: Option<f64>,
    position: [f64; 3],
    velocity: Option<[f64; 3]>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawHalfspace {
    normal: [f64; 3],
    offset: f64,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawFace {
    Index(usize),
    Name(String),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawObject {
    id: String,
    center: Option<[f64; 3]>,
    half_extents: Option<[f64; 3]>,
    halfspaces: Option<Vec<RawHalfspace>>,
    faces: Option<Vec<RawFace>>,
    standoff: f64,
    clearance: Option<f64>,
    depth: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawObstacle {
    id: String,
    center: Option<[f64; 3]>,
    half_extents: Option<[f64; 3]>,
    halfspaces: Option<Vec<RawHalfspace>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawWeights {
    a: f64,
    b: f64,
    c: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawHorizons {
    assess: Option<usize>,
    search: Option<usize>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOverrides {
    big_m_assess: Option<f64>,
    big_m_search: Option<f64>,
    epsilon: Option<f64>,
    guard: Option<f64>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawTauStar {
    Step(usize),
    Name(String),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSearch {
    avoid_objects: Option<bool>,
    tau_star: Option<RawTauStar>,
}

fn v3(a: [f64; 3]) -> Vec3 {
    Vec3::new(a[0], a[1], a[2])
}

const FACE_NAMES: [&str; 6] = ["+x", "-x", "+y", "-y", "+z", "-z"];

fn body_from(
    what: &str,
    center: Option<[f64; 3]>,
    half: Option<[f64; 3]>,
    halfspaces: Option<&[RawHalfspace]>,
    errs: &mut Vec<String>,
) -> Option<(Cuboid, bool)> {
    match (center, half, halfspaces) {
        (Some(c), Some(h), None) => match Cuboid::axis_aligned(v3(c), v3(h)) {
            Ok(b) => Some((b, true)),
            Err(e) => {
                errs.push(format!("{what}: {e}"));
                None
            }
        },
        (None, None, Some(rows)) => {
            let rows: Vec<(Vec3, f64)> = rows.iter().map(|r| (v3(r.normal), r.offset)).collect();
            match Cuboid::from_halfspaces(&rows) {
                Ok(b) => Some((b, false)),
                Err(e) => {
                    errs.push(format!("{what}: {e}"));
                    None
                }
            }
        }
        _ => {
            errs.push(format!(
                "{what}: give either `center` and `half_extents` or `halfspaces`"
            ));
            None
        }
    }
}

/// Faces searched when none are listed: all but the one whose outward
/// normal points most steeply down (the ground-contact face).
fn default_faces(body: &Cuboid) -> Vec<usize> {
    let down = body
        .normals()
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |best, (l, n)| {
            if n.z < best.1 {
                (l, n.z)
            } else {
                best
            }
        });
    (1..=body.face_count())
        .filter(|&l| l != down.0 + 1)
        .collect()
}

/// Parses and validates a scenario.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let raw: RawScenario =
        toml::from_str(text).map_err(|e| Error::Scenario(e.to_string().trim_end().to_string()))?;
    let mut errs = Vec::new();

    let bounds = Aabb::new(v3(raw.bounds.min), v3(raw.bounds.max));
    let ra = &raw.agent;
    let reference = AgentParams::reference();
    let fov_angle = match (ra.fov_angle, ra.fov_angle_deg) {
        (Some(_), Some(_)) => {
            errs.push("agent: give `fov_angle` or `fov_angle_deg`, not both".into());
            reference.fov_angle
        }
        (Some(r), None) => r,
        (None, Some(d)) => d.to_radians(),
        (None, None) => reference.fov_angle,
    };
    let agent = AgentParams {
        dt: ra.dt.unwrap_or(reference.dt),
        mass: ra.mass.unwrap_or(reference.mass),
        drag: ra.drag.unwrap_or(reference.drag),
        u_max: ra.u_max.unwrap_or(reference.u_max),
        v_max: ra.v_max.unwrap_or(reference.v_max),
        fov_angle,
    };
    let initial = AgentState::new(v3(ra.position), v3(ra.velocity.unwrap_or([0.0; 3])));

    let mut objects = Vec::new();
    if raw.objects.is_empty() {
        errs.push("no objects of interest".into());
    }
    for (i, o) in raw.objects.iter().enumerate() {
        let what = format!("objects[{i}] (id '{}')", o.id);
        let Some((body, aligned)) = body_from(
            &what,
            o.center,
            o.half_extents,
            o.halfspaces.as_deref(),
            &mut errs,
        ) else {
            continue;
        };
        let faces = match &o.faces {
            None => default_faces(&body),
            Some(list) => {
                let mut faces = Vec::new();
                for f in list {
                    match f {
                        RawFace::Index(k) if *k >= 1 && *k <= body.face_count() => faces.push(*k),
                        RawFace::Name(name) if aligned && FACE_NAMES.contains(&name.as_str()) => {
                            faces.push(FACE_NAMES.iter().position(|n| n == name).unwrap() + 1)
                        }
                        RawFace::Index(k) => {
                            errs.push(format!("{what}: face index {k} is out of range"))
                        }
                        RawFace::Name(name) => errs.push(format!(
                            "{what}: unknown face '{name}' (named faces need an axis-aligned body)"
                        )),
                    }
                }
                faces
            }
        };
        if faces.is_empty() {
            errs.push(format!("{what}: no faces to search"));
        }
        if !(o.standoff > 0.0) {
            errs.push(format!(
                "{what}: standoff must be positive, got {}",
                o.standoff
            ));
        }
        let clearance = o.clearance.unwrap_or(DEFAULT_CLEARANCE);
        let depth = o.depth.unwrap_or(DEFAULT_DEPTH_RATIO * o.standoff);
        objects.push(ObjectSpec {
            id: o.id.clone(),
            body,
            faces,
            standoff: o.standoff,
            clearance,
            depth,
        });
    }
    let mut obstacles = Vec::new();
    for (i, o) in raw.obstacles.iter().enumerate() {
        let what = format!("obstacles[{i}] (id '{}')", o.id);
        if let Some((body, _)) = body_from(
            &what,
            o.center,
            o.half_extents,
            o.halfspaces.as_deref(),
            &mut errs,
        ) {
            obstacles.push(ObstacleSpec {
                id: o.id.clone(),
                body,
            });
        }
    }

    let weights = raw
        .weights
        .map(|w| Weights {
            a: w.a,
            b: w.b,
            c: w.c,
        })
        .unwrap_or_default();
    let horizons = raw.horizons.unwrap_or(RawHorizons {
        assess: None,
        search: None,
    });
    let overrides = raw.overrides.unwrap_or(RawOverrides {
        big_m_assess: None,
        big_m_search: None,
        epsilon: None,
        guard: None,
    });
    let search = raw.search.unwrap_or(RawSearch {
        avoid_objects: None,
        tau_star: None,
    });
    let tau_star = match search.tau_star {
        None => TauStar::Terminal,
        Some(RawTauStar::Name(n)) if n == "terminal" => TauStar::Terminal,
        Some(RawTauStar::Name(n)) => {
            errs.push(format!(
                "search.tau_star: expected \"terminal\" or a step index, got '{n}'"
            ));
            TauStar::Terminal
        }
        Some(RawTauStar::Step(k)) => TauStar::Step(k),
    };

    let scenario = Scenario {
        name: raw.name.unwrap_or_else(|| "scenario".into()),
        bounds,
        agent,
        initial,
        objects,
        obstacles,
        weights,
        assess_horizon: horizons.assess.unwrap_or(DEFAULT_ASSESS_HORIZON),
        search_horizon: horizons.search.unwrap_or(DEFAULT_SEARCH_HORIZON),
        big_m_assess: overrides.big_m_assess,
        big_m_search: overrides.big_m_search,
        epsilon: overrides.epsilon.unwrap_or(DEFAULT_EPSILON),
        guard: overrides.guard.unwrap_or(DEFAULT_GUARD),
        avoid_objects: search.avoid_objects.unwrap_or(false),
        tau_star,
    };
    errs.extend(scenario.offenses());
    if errs.is_empty() {
        Ok(scenario)
    } else {
        Err(Error::Scenario(errs.join("\n")))
    }
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path)?;
    parse_scenario(&text).map_err(|e| match e {
        Error::Scenario(msg) => Error::Scenario(format!("{}: {msg}", path.display())),
        other => other,
    })
}

impl Scenario {
    /// Every invariant violation, one message each.
    pub fn offenses(&self) -> Vec<String> {
        let mut errs = Vec::new();
        let b = &self.bounds;
        if (0..3).any(|k| !(b.min[k] < b.max[k])) {
            errs.push("bounds: min must be below max on every axis".into());
        }
        if let Err(e) = self.agent.validate() {
            errs.push(format!("agent: {e}"));
        }
        if !self.initial.is_finite() {
            errs.push("agent: initial state is not finite".into());
        } else if !b.contains(&self.initial.position) {
            errs.push("agent: initial position lies outside the bounds".into());
        }
        let w = self.weights;
        if !(w.a >= 0.0 && w.b >= 0.0 && w.c >= 0.0) {
            errs.push("weights: a, b and c must be non-negative".into());
        }
        if self.search_horizon == 0 || self.assess_horizon == 0 {
            errs.push("horizons: must be at least 1".into());
        }
        if let TauStar::Step(k) = self.tau_star {
            if k >= self.search_horizon {
                errs.push(format!(
                    "search.tau_star: {k} is not below the search horizon"
                ));
            }
        }
        if !(self.epsilon > 0.0) {
            errs.push(format!(
                "overrides.epsilon must be positive, got {}",
                self.epsilon
            ));
        }
        if !(self.guard >= 0.0) {
            errs.push(format!(
                "overrides.guard must be non-negative, got {}",
                self.guard
            ));
        }
        for (name, m) in [
            ("big_m_assess", self.big_m_assess),
            ("big_m_search", self.big_m_search),
        ] {
            if m.is_some_and(|m| !(m > 0.0)) {
                errs.push(format!("overrides.{name} must be positive"));
            }
        }
        let mut ids = std::collections::BTreeSet::new();
        for id in self
            .objects
            .iter()
            .map(|o| &o.id)
            .chain(self.obstacles.iter().map(|o| &o.id))
        {
            if !ids.insert(id) {
                errs.push(format!("duplicate id '{id}'"));
            }
        }

        let inside = |body: &Cuboid| b.contains_box(&body.aabb());
        for o in &self.objects {
            if !inside(&o.body) {
                errs.push(format!("object '{}' lies outside the bounds", o.id));
            }
            if !(o.clearance > 0.0) {
                errs.push(format!("object '{}': clearance must be positive", o.id));
            }
            if o.body.contains(&self.initial.position) {
                errs.push(format!("agent starts inside object '{}'", o.id));
            }
        }
        for o in &self.obstacles {
            if !inside(&o.body) {
                errs.push(format!("obstacle '{}' lies outside the bounds", o.id));
            }
            if o.body.contains(&self.initial.position) {
                errs.push(format!("agent starts inside obstacle '{}'", o.id));
            }
        }
        for o in &self.objects {
            if !(o.standoff > 0.0) {
                continue;
            }
            match generate_coverage_cuboids(
                &o.body,
                &o.id,
                &o.faces,
                o.standoff,
                self.agent.fov_angle,
                o.depth,
            ) {
                Err(e) => errs.push(format!("object '{}': {e}", o.id)),
                Ok(cubs) => {
                    for c in &cubs {
                        let tag =
                            format!("coverage cuboid {}/{}/{}", o.id, c.face_index, c.cell_index);
                        if !inside(&c.cuboid) {
                            errs.push(format!("{tag} lies outside the bounds"));
                        }
                        for body in self.bodies() {
                            if body.0 != o.id && c.cuboid.overlaps(body.1, 1e-9) {
                                errs.push(format!("{tag} intersects '{}'", body.0));
                            }
                        }
                    }
                }
            }
        }
        errs
    }

    /// Objects and obstacles, tagged with their ids.
    pub fn bodies(&self) -> impl Iterator<Item = (&str, &Cuboid)> {
        self.objects
            .iter()
            .map(|o| (o.id.as_str(), &o.body))
            .chain(self.obstacles.iter().map(|o| (o.id.as_str(), &o.body)))
    }

    /// Coverage cuboids of every object, object by object.
    pub fn coverage_cuboids(&self) -> Result<Vec<CoverageCuboid>> {
        let mut out = Vec::new();
        for o in &self.objects {
            out.extend(generate_coverage_cuboids(
                &o.body,
                &o.id,
                &o.faces,
                o.standoff,
                self.agent.fov_angle,
                o.depth,
            )?);
        }
        Ok(out)
    }

    /// Cuboid count per object, in object order.
    pub fn cuboids_per_object(&self) -> Result<Vec<usize>> {
        let cubs = self.coverage_cuboids()?;
        Ok(self
            .objects
            .iter()
            .map(|o| cubs.iter().filter(|c| c.object_id == o.id).count())
            .collect())
    }

    pub fn waypoints(&self) -> Result<Vec<Waypoint>> {
        self.objects
            .iter()
            .map(|o| generate_waypoint(&o.body, &o.id, o.clearance))
            .collect()
    }

    /// Bodies the search stage keeps clear of.
    pub fn avoided_bodies(&self) -> Vec<(String, Cuboid)> {
        let mut out: Vec<(String, Cuboid)> = self
            .obstacles
            .iter()
            .map(|o| (o.id.clone(), o.body.clone()))
            .collect();
        if self.avoid_objects {
            out.extend(self.objects.iter().map(|o| (o.id.clone(), o.body.clone())));
        }
        out
    }

    pub fn assessment_problem(
        &self,
        x0: AgentState,
        horizon: Option<usize>,
    ) -> Result<AssessmentProblem> {
        Ok(AssessmentProblem {
            x0,
            waypoints: self.waypoints()?,
            horizon: horizon.unwrap_or(self.assess_horizon),
            params: self.agent,
            bounds: self.bounds,
            big_m: self.big_m_assess,
        })
    }

    pub fn search_problem(
        &self,
        state: AgentState,
        cuboids: Vec<CoverageCuboid>,
        visited: VisitedMap,
        horizon: Option<usize>,
    ) -> SearchProblem {
        let horizon = horizon.unwrap_or(self.search_horizon);
        SearchProblem {
            state,
            cuboids,
            obstacles: self.avoided_bodies().into_iter().map(|(_, b)| b).collect(),
            visited,
            weights: self.weights,
            horizon,
            params: self.agent,
            bounds: self.bounds,
            big_m: self.big_m_search,
            epsilon: self.epsilon,
            tau_star: match self.tau_star {
                TauStar::Terminal => None,
                TauStar::Step(k) => Some(k.min(horizon.saturating_sub(1))),
            },
            guard: self.guard,
        }
    }

    /// SHA-256 of the canonical JSON serialization, as lowercase hex.
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("scenario serializes");
        let hash = Sha256::digest(json.as_bytes());
        hash.iter().fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }
}

// Trajectory export ----------------------------------------------------------

pub const TRAJECTORY_HEADER: &str = "t,px,py,pz,vx,vy,vz,fx,fy,fz";

/// One row per applied control: the state `x_t` and the force `u_t`.
pub fn trajectory_csv(plan: &Plan) -> String {
    let mut out = String::from(TRAJECTORY_HEADER);
    out.push('\n');
    let states = plan.states();
    for (t, (u, _)) in plan.steps.iter().enumerate() {
        let (p, v, f) = (states[t].position, states[t].velocity, u.force);
        let _ = writeln!(
            out,
            "{t},{},{},{},{},{},{},{},{},{}",
            p.x, p.y, p.z, v.x, v.y, v.z, f.x, f.y, f.z
        );
    }
    out
}

pub fn export_trajectory(plan: &Plan, path: &Path) -> Result<()> {
    std::fs::write(path, trajectory_csv(plan))?;
    Ok(())
}

/// Inverse of [`trajectory_csv`]. The final state is recomputed from the last
/// row with the dynamics, since the file stores states before each control.
pub fn parse_trajectory(text: &str, params: &AgentParams) -> Result<Plan> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == TRAJECTORY_HEADER => {}
        _ => {
            return Err(Error::Scenario(format!(
                "trajectory header must be `{TRAJECTORY_HEADER}`"
            )))
        }
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 10 {
            return Err(Error::Scenario(format!(
                "trajectory line {}: expected 10 fields",
                i + 2
            )));
        }
        let t: usize = fields[0]
            .parse()
            .map_err(|_| Error::Scenario(format!("trajectory line {}: bad step index", i + 2)))?;
        if t != rows.len() {
            return Err(Error::Scenario(format!(
                "trajectory line {}: expected step {}",
                i + 2,
                rows.len()
            )));
        }
        let mut x = [0.0; 9];
        for (k, f) in fields[1..].iter().enumerate() {
            x[k] = f.parse().map_err(|_| {
                Error::Scenario(format!("trajectory line {}: bad number '{f}'", i + 2))
            })?;
        }
        rows.push(x);
    }
    let Some(first) = rows.first() else {
        return Ok(Plan::new(AgentState::at_rest(Vec3::zeros())));
    };
    let state =
        |x: &[f64; 9]| AgentState::new(Vec3::new(x[0], x[1], x[2]), Vec3::new(x[3], x[4], x[5]));
    let mut plan = Plan::new(state(first));
    for (k, x) in rows.iter().enumerate() {
        let u = ControlInput::new(Vec3::new(x[6], x[7], x[8]));
        let next = match rows.get(k + 1) {
            Some(n) => state(n),
            None => step(&state(x), &u, params),
        };
        plan.steps.push((u, next));
    }
    Ok(plan)
}

#[derive(Serialize)]
struct ReportDocument<'a> {
    scenario: &'a str,
    digest: String,
    report: &'a CoverageReport,
}

/// Writes the coverage report together with the scenario name and digest.
pub fn export_report(report: &CoverageReport, scenario: &Scenario, path: &Path) -> Result<()> {
    export_json(
        &ReportDocument {
            scenario: &scenario.name,
            digest: scenario.digest(),
            report,
        },
        path,
    )
}

/// Writes any serializable report as pretty JSON with a trailing newline.
pub fn export_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Scenario(format!("cannot serialize report: {e}")))?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}
