//! Convex bodies in halfspace form, the camera footprint model, face
//! decomposition and coverage-cuboid generation.

use serde::{Deserialize, Serialize};

use crate::{Error, Result, Vec3};

/// Slack used by [`Cuboid::contains`].
pub const CONTAINS_TOL: f64 = 1e-9;

const VERTEX_TOL: f64 = 1e-7;

/// Convex polyhedron `{x : A x <= B}` with unit-norm rows.
///
/// Rectangular boxes have six rows; axis-aligned boxes built with
/// [`Cuboid::axis_aligned`] order them `+x, -x, +y, -y, +z, -z`, so face index
/// `l` (1-based) refers to row `l - 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cuboid {
    normals: Vec<Vec3>,
    offsets: Vec<f64>,
}

impl Cuboid {
    /// Builds a polyhedron from raw `(a, b)` rows meaning `a . x <= b`.
    ///
    /// Rows are rescaled to unit normals. Fails when a row is degenerate or
    /// the feasible set is empty or unbounded.
    pub fn from_halfspaces(rows: &[(Vec3, f64)]) -> Result<Self> {
        if rows.len() < 4 {
            return Err(Error::Geometry(format!(
                "a bounded polyhedron needs at least 4 halfspaces, got {}",
                rows.len()
            )));
        }
        let mut normals = Vec::with_capacity(rows.len());
        let mut offsets = Vec::with_capacity(rows.len());
        for (i, (a, b)) in rows.iter().enumerate() {
            let norm = a.norm();
            if !norm.is_finite() || norm < 1e-12 || !b.is_finite() {
                return Err(Error::Geometry(format!("halfspace row {i} is degenerate")));
            }
            normals.push(a / norm);
            offsets.push(b / norm);
        }
        let cuboid = Self { normals, offsets };
        if !cuboid.is_bounded() {
            return Err(Error::Geometry("polyhedron is unbounded".into()));
        }
        if cuboid.vertices().len() < 4 {
            return Err(Error::Geometry("polyhedron is empty or flat".into()));
        }
        Ok(cuboid)
    }

    /// Axis-aligned box from its center and strictly positive half-extents.
    pub fn axis_aligned(center: Vec3, half_extents: Vec3) -> Result<Self> {
        Self::oriented(center, [Vec3::x(), Vec3::y(), Vec3::z()], half_extents)
    }

    /// Box with orthonormal `axes`; rows are ordered `+a0, -a0, +a1, -a1, +a2, -a2`.
    pub fn oriented(center: Vec3, axes: [Vec3; 3], half_extents: Vec3) -> Result<Self> {
        if half_extents.iter().any(|h| !(h.is_finite() && *h > 0.0)) {
            return Err(Error::Geometry(format!(
                "half-extents must be positive, got {:?}",
                half_extents.as_slice()
            )));
        }
        if center.iter().any(|c| !c.is_finite()) {
            return Err(Error::Geometry("center must be finite".into()));
        }
        for i in 0..3 {
            if (axes[i].norm() - 1.0).abs() > 1e-9 {
                return Err(Error::Geometry("box axes must be unit vectors".into()));
            }
            for j in i + 1..3 {
                if axes[i].dot(&axes[j]).abs() > 1e-9 {
                    return Err(Error::Geometry("box axes must be orthogonal".into()));
                }
            }
        }
        let mut normals = Vec::with_capacity(6);
        let mut offsets = Vec::with_capacity(6);
        for (axis, half) in axes.iter().zip(half_extents.iter()) {
            let c = axis.dot(&center);
            normals.push(*axis);
            offsets.push(c + half);
            normals.push(-axis);
            offsets.push(-c + half);
        }
        Ok(Self { normals, offsets })
    }

    /// Number of halfspaces (`L`).
    pub fn face_count(&self) -> usize {
        self.normals.len()
    }

    pub fn normals(&self) -> &[Vec3] {
        &self.normals
    }

    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }

    /// `A_l . p - B_l` for every row.
    pub fn signed_distances(&self, point: &Vec3) -> impl Iterator<Item = f64> + '_ {
        let p = *point;
        self.normals
            .iter()
            .zip(&self.offsets)
            .map(move |(a, b)| a.dot(&p) - b)
    }

    /// True iff every row holds with [`CONTAINS_TOL`] slack.
    pub fn contains(&self, point: &Vec3) -> bool {
        self.contains_with_margin(point, CONTAINS_TOL)
    }

    /// True iff `A p <= B + margin` row-wise.
    pub fn contains_with_margin(&self, point: &Vec3, margin: f64) -> bool {
        self.signed_distances(point).all(|s| s <= margin)
    }

    pub fn translated(&self, delta: &Vec3) -> Self {
        Self {
            normals: self.normals.clone(),
            offsets: self
                .normals
                .iter()
                .zip(&self.offsets)
                .map(|(a, b)| b + a.dot(delta))
                .collect(),
        }
    }

    /// Vertices found by intersecting every triple of planes, deduplicated.
    pub fn vertices(&self) -> Vec<Vec3> {
        let n = self.normals.len();
        let mut out: Vec<Vec3> = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                for k in j + 1..n {
                    let m = nalgebra::Matrix3::from_rows(&[
                        self.normals[i].transpose(),
                        self.normals[j].transpose(),
                        self.normals[k].transpose(),
                    ]);
                    if m.determinant().abs() < 1e-10 {
                        continue;
                    }
                    let Some(inv) = m.try_inverse() else { continue };
                    let v = inv * Vec3::new(self.offsets[i], self.offsets[j], self.offsets[k]);
                    if !self.contains_with_margin(&v, VERTEX_TOL) {
                        continue;
                    }
                    if !out.iter().any(|w| (w - v).norm() < 1e-6) {
                        out.push(v);
                    }
                }
            }
        }
        out
    }

    /// Mean of the vertices; the geometric center for boxes.
    pub fn centroid(&self) -> Vec3 {
        let verts = self.vertices();
        let sum = verts.iter().fold(Vec3::zeros(), |acc, v| acc + v);
        sum / verts.len().max(1) as f64
    }

    /// Axis-aligned bounding box of the vertices.
    pub fn aabb(&self) -> Aabb {
        let verts = self.vertices();
        let mut min = Vec3::repeat(f64::INFINITY);
        let mut max = Vec3::repeat(f64::NEG_INFINITY);
        for v in &verts {
            min = min.inf(v);
            max = max.sup(v);
        }
        Aabb { min, max }
    }

    /// Maximum of `A_l . x - B_l` over an axis-aligned box.
    pub fn row_max_over(&self, row: usize, region: &Aabb) -> f64 {
        let a = &self.normals[row];
        let mut v = -self.offsets[row];
        for k in 0..3 {
            v += if a[k] >= 0.0 {
                a[k] * region.max[k]
            } else {
                a[k] * region.min[k]
            };
        }
        v
    }

    /// Minimum of `A_l . x - B_l` over an axis-aligned box.
    pub fn row_min_over(&self, row: usize, region: &Aabb) -> f64 {
        let a = &self.normals[row];
        let mut v = -self.offsets[row];
        for k in 0..3 {
            v += if a[k] >= 0.0 {
                a[k] * region.min[k]
            } else {
                a[k] * region.max[k]
            };
        }
        v
    }

    /// Whether the interiors of two polyhedra intersect by more than `tol`
    /// along every candidate separating axis (face normals of both bodies and
    /// cross products of their edge directions).
    pub fn overlaps(&self, other: &Cuboid, tol: f64) -> bool {
        let (va, vb) = (self.vertices(), other.vertices());
        let edges = |c: &Cuboid| -> Vec<Vec3> {
            let n = &c.normals;
            let mut out = Vec::new();
            for i in 0..n.len() {
                for j in i + 1..n.len() {
                    let e = n[i].cross(&n[j]);
                    if e.norm() > 1e-9 {
                        out.push(e.normalize());
                    }
                }
            }
            out
        };
        let mut axes: Vec<Vec3> = self.normals.iter().chain(&other.normals).copied().collect();
        for ea in edges(self) {
            for eb in edges(other) {
                let ax = ea.cross(&eb);
                if ax.norm() > 1e-9 {
                    axes.push(ax.normalize());
                }
            }
        }
        let span = |vs: &[Vec3], ax: &Vec3| {
            vs.iter()
                .map(|v| v.dot(ax))
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| {
                    (lo.min(d), hi.max(d))
                })
        };
        axes.iter().all(|ax| {
            let (alo, ahi) = span(&va, ax);
            let (blo, bhi) = span(&vb, ax);
            ahi.min(bhi) - alo.max(blo) > tol
        })
    }

    /// Rectangle spanned by face `face_index` (1-based).
    ///
    /// Fails if the face is not a rectangle.
    pub fn face(&self, object_id: &str, face_index: usize) -> Result<FaceSpec> {
        if face_index == 0 || face_index > self.face_count() {
            return Err(Error::Geometry(format!(
                "face index {face_index} out of range 1..={}",
                self.face_count()
            )));
        }
        let row = face_index - 1;
        let normal = self.normals[row];
        let on_plane: Vec<Vec3> = self
            .vertices()
            .into_iter()
            .filter(|v| (normal.dot(v) - self.offsets[row]).abs() < 1e-6)
            .collect();
        if on_plane.len() != 4 {
            return Err(Error::Geometry(format!(
                "face {face_index} of {object_id} has {} corners, expected 4",
                on_plane.len()
            )));
        }
        let origin = *on_plane
            .iter()
            .min_by(|a, b| {
                lex_key(a)
                    .partial_cmp(&lex_key(b))
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .expect("four corners");
        let mut others: Vec<Vec3> = on_plane.into_iter().filter(|v| *v != origin).collect();
        others.sort_by(|a, b| {
            (a - origin)
                .norm()
                .partial_cmp(&(b - origin).norm())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        // The farthest corner is the diagonal; the two nearest span the edges.
        let mut edge_u = others[0] - origin;
        let mut edge_v = others[1] - origin;
        if edge_u.dot(&edge_v).abs() > 1e-6 * edge_u.norm() * edge_v.norm() {
            return Err(Error::Geometry(format!(
                "face {face_index} of {object_id} is not rectangular"
            )));
        }
        if edge_u.cross(&edge_v).dot(&normal) < 0.0 {
            std::mem::swap(&mut edge_u, &mut edge_v);
        }
        Ok(FaceSpec {
            object_id: object_id.to_string(),
            face_index,
            outward_normal: normal,
            rect: Rect3 {
                origin,
                edge_u,
                edge_v,
            },
        })
    }

    /// Recession cone is `{0}` iff the row normals positively span space.
    fn is_bounded(&self) -> bool {
        let n = self.normals.len();
        let m = nalgebra::DMatrix::from_fn(n, 3, |i, j| self.normals[i][j]);
        if m.rank(1e-9) < 3 {
            return false;
        }
        for i in 0..n {
            for j in i + 1..n {
                let d = self.normals[i].cross(&self.normals[j]);
                if d.norm() < 1e-12 {
                    continue;
                }
                for dir in [d, -d] {
                    if self.normals.iter().all(|a| a.dot(&dir) <= 1e-12) {
                        return false;
                    }
                }
            }
        }
        true
    }
}

fn lex_key(v: &Vec3) -> (f64, f64, f64) {
    let r = |x: f64| (x * 1e6).round() / 1e6;
    (r(v.x), r(v.y), r(v.z))
}

/// Axis-aligned box given by its min and max corners.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn new(min: Vec3, max: Vec3) -> Self {
        Self { min, max }
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|k| p[k] >= self.min[k] - CONTAINS_TOL && p[k] <= self.max[k] + CONTAINS_TOL)
    }

    pub fn contains_box(&self, other: &Aabb) -> bool {
        self.contains(&other.min) && self.contains(&other.max)
    }

    pub fn extents(&self) -> Vec3 {
        self.max - self.min
    }

    /// Sum of the side lengths, i.e. the largest L1 distance between two points.
    pub fn l1_diameter(&self) -> f64 {
        self.extents().iter().sum()
    }

    pub fn intersection(&self, other: &Aabb) -> Aabb {
        Aabb {
            min: self.min.sup(&other.min),
            max: self.max.inf(&other.max),
        }
    }
}

/// Parallelogram `origin + s * edge_u + t * edge_v`, `s, t` in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect3 {
    pub origin: Vec3,
    pub edge_u: Vec3,
    pub edge_v: Vec3,
}

impl Rect3 {
    pub fn center(&self) -> Vec3 {
        self.origin + 0.5 * (self.edge_u + self.edge_v)
    }

    pub fn area(&self) -> f64 {
        self.edge_u.cross(&self.edge_v).norm()
    }

    pub fn corners(&self) -> [Vec3; 4] {
        let o = self.origin;
        [
            o,
            o + self.edge_u,
            o + self.edge_u + self.edge_v,
            o + self.edge_v,
        ]
    }
}

/// One face of an object of interest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceSpec {
    pub object_id: String,
    /// 1-based row index into the parent's halfspace system.
    pub face_index: usize,
    pub outward_normal: Vec3,
    pub rect: Rect3,
}

/// Volume at standoff distance from a face cell; occupying it images the cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageCuboid {
    pub cuboid: Cuboid,
    pub object_id: String,
    pub face_index: usize,
    /// 1-based, row-major over the face grid.
    pub cell_index: usize,
    pub cell_rect: Rect3,
    pub outward_normal: Vec3,
}

impl CoverageCuboid {
    pub fn centroid(&self) -> Vec3 {
        self.cuboid.centroid()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub position: Vec3,
    pub object_id: String,
}

/// Side of the square camera footprint at distance `d`: `2 d tan(fov / 2)`.
pub fn footprint_side(d: f64, fov_angle: f64) -> Result<f64> {
    if !(fov_angle > 0.0 && fov_angle < std::f64::consts::PI) {
        return Err(Error::Geometry(format!(
            "field-of-view angle must lie in (0, pi), got {fov_angle}"
        )));
    }
    if !(d >= 0.0) || !d.is_finite() {
        return Err(Error::Geometry(format!(
            "distance must be non-negative, got {d}"
        )));
    }
    Ok(2.0 * d * (fov_angle / 2.0).tan())
}

fn cells_along(len: f64, r: f64) -> usize {
    ((len / r - 1e-9).ceil() as usize).max(1)
}

/// Tiles a face with equal cells no larger than `r` on either side.
///
/// Cells are returned row-major (`u` outer, `v` inner).
pub fn decompose_face(face: &FaceSpec, r: f64) -> Result<Vec<Rect3>> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::Geometry(format!(
            "cell size must be positive, got {r}"
        )));
    }
    let rect = &face.rect;
    let (len_u, len_v) = (rect.edge_u.norm(), rect.edge_v.norm());
    if !(len_u > 0.0 && len_v > 0.0) {
        return Err(Error::Geometry("face rectangle has zero area".into()));
    }
    let (nu, nv) = (cells_along(len_u, r), cells_along(len_v, r));
    let (du, dv) = (rect.edge_u / nu as f64, rect.edge_v / nv as f64);
    let mut cells = Vec::with_capacity(nu * nv);
    for i in 0..nu {
        for j in 0..nv {
            cells.push(Rect3 {
                origin: rect.origin + du * i as f64 + dv * j as f64,
                edge_u: du,
                edge_v: dv,
            });
        }
    }
    Ok(cells)
}

/// Number of cells [`decompose_face`] produces for a `len_u x len_v` face.
pub fn cell_count(len_u: f64, len_v: f64, r: f64) -> usize {
    cells_along(len_u, r) * cells_along(len_v, r)
}

/// Places one coverage cuboid per face cell at standoff `d`.
///
/// Each cuboid's cross-section parallel to the face equals its cell and it
/// spans `[d - depth/2, d + depth/2]` along the outward normal.
pub fn generate_coverage_cuboids(
    object: &Cuboid,
    object_id: &str,
    faces: &[usize],
    d: f64,
    fov_angle: f64,
    depth: f64,
) -> Result<Vec<CoverageCuboid>> {
    if faces.is_empty() {
        return Err(Error::Geometry(format!(
            "no faces selected for {object_id}"
        )));
    }
    if !(d > 0.0) || !(depth > 0.0) {
        return Err(Error::Geometry(format!(
            "standoff and depth must be positive for {object_id} (d = {d}, depth = {depth})"
        )));
    }
    if d <= depth / 2.0 {
        return Err(Error::Geometry(format!(
            "coverage cuboids of {object_id} would intersect the object (d = {d} <= depth/2 = {})",
            depth / 2.0
        )));
    }
    let r = footprint_side(d, fov_angle)?;
    let mut out = Vec::new();
    for &face_index in faces {
        let face = object.face(object_id, face_index)?;
        let n = face.outward_normal;
        for (k, cell) in decompose_face(&face, r)?.into_iter().enumerate() {
            let (lu, lv) = (cell.edge_u.norm(), cell.edge_v.norm());
            let axes = [n, cell.edge_u / lu, cell.edge_v / lv];
            let center = cell.center() + n * d;
            let cuboid =
                Cuboid::oriented(center, axes, Vec3::new(depth / 2.0, lu / 2.0, lv / 2.0))?;
            out.push(CoverageCuboid {
                cuboid,
                object_id: object_id.to_string(),
                face_index,
                cell_index: k + 1,
                cell_rect: cell,
                outward_normal: n,
            });
        }
    }
    Ok(out)
}

/// Centroid of the top face raised by `clearance` along `+z`.
pub fn generate_waypoint(object: &Cuboid, object_id: &str, clearance: f64) -> Result<Waypoint> {
    if !(clearance > 0.0) {
        return Err(Error::Geometry(format!(
            "clearance must be positive, got {clearance}"
        )));
    }
    let verts = object.vertices();
    let top = verts.iter().map(|v| v.z).fold(f64::NEG_INFINITY, f64::max);
    let top_verts: Vec<&Vec3> = verts.iter().filter(|v| (v.z - top).abs() < 1e-6).collect();
    let sum = top_verts.iter().fold(Vec3::zeros(), |acc, v| acc + *v);
    let mut position = sum / top_verts.len() as f64;
    position.z = top + clearance;
    Ok(Waypoint {
        position,
        object_id: object_id.to_string(),
    })
}

/// Whether a camera at `point`, looking along `-normal`, images the whole cell.
pub fn covers_cell(cell: &Rect3, normal: &Vec3, point: &Vec3, fov_angle: f64) -> bool {
    let dist = normal.dot(&(point - cell.origin));
    if dist <= 0.0 {
        return false;
    }
    let Ok(r) = footprint_side(dist, fov_angle) else {
        return false;
    };
    let foot = point - normal * dist;
    let (u, v) = (cell.edge_u.normalize(), cell.edge_v.normalize());
    cell.corners().iter().all(|c| {
        let off = c - foot;
        off.dot(&u).abs() <= r / 2.0 + 1e-9 && off.dot(&v).abs() <= r / 2.0 + 1e-9
    })
}
