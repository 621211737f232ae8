//! Low-level numeric primitives shared by the whole pipeline: 3-D vectors,
//! unit quaternions, rigid transforms, planes, PCA, 2-D convex hulls, and the
//! two smoothing filters (median and moving average).

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("bad filter window {0}: must be odd and >= 1")]
    BadWindow(usize),
    #[error("plane basis is not orthonormal or not orthogonal to the normal")]
    BadBasis,
}

/// 3-D vector; millimeters for positions, unitless for directions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 0.0 };

    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn normalized(self) -> Vec3 {
        let n = self.norm();
        assert!(n > 0.0, "cannot normalize a zero vector");
        self * (1.0 / n)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    fn to_na(self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    fn from_na(v: Vector3<f64>) -> Vec3 {
        Vec3::new(v.x, v.y, v.z)
    }
}

impl std::ops::Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl std::ops::Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl std::ops::Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl std::ops::Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// Unit quaternion, scalar-first. Renormalized on construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitQuaternion {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl UnitQuaternion {
    pub const IDENTITY: UnitQuaternion = UnitQuaternion { w: 1.0, x: 0.0, y: 0.0, z: 0.0 };

    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        let n = (w * w + x * x + y * y + z * z).sqrt();
        assert!(n > 1e-12, "cannot normalize a near-zero quaternion");
        UnitQuaternion { w: w / n, x: x / n, y: y / n, z: z / n }
    }

    pub fn from_axis_angle(axis: Vec3, angle_rad: f64) -> Self {
        let a = axis.normalized();
        let (s, c) = (angle_rad / 2.0).sin_cos();
        UnitQuaternion { w: c, x: a.x * s, y: a.y * s, z: a.z * s }
    }

    pub fn rotate(self, v: Vec3) -> Vec3 {
        // v' = v + 2 u x (u x v + w v), u = vector part
        let u = Vec3::new(self.x, self.y, self.z);
        let t = u.cross(v) * 2.0;
        v + t * self.w + u.cross(t)
    }

    pub fn inverse(self) -> UnitQuaternion {
        UnitQuaternion { w: self.w, x: -self.x, y: -self.y, z: -self.z }
    }

    pub fn mul(self, o: UnitQuaternion) -> UnitQuaternion {
        UnitQuaternion::new(
            self.w * o.w - self.x * o.x - self.y * o.y - self.z * o.z,
            self.w * o.x + self.x * o.w + self.y * o.z - self.z * o.y,
            self.w * o.y - self.x * o.z + self.y * o.w + self.z * o.x,
            self.w * o.z + self.x * o.y - self.y * o.x + self.z * o.w,
        )
    }

    /// Spherical linear interpolation, `t` in [0, 1].
    pub fn slerp(self, other: UnitQuaternion, t: f64) -> UnitQuaternion {
        let mut b = other;
        let mut cos = self.w * b.w + self.x * b.x + self.y * b.y + self.z * b.z;
        if cos < 0.0 {
            b = UnitQuaternion { w: -b.w, x: -b.x, y: -b.y, z: -b.z };
            cos = -cos;
        }
        if cos > 1.0 - 1e-10 {
            // nearly parallel: lerp and renormalize
            return UnitQuaternion::new(
                self.w + (b.w - self.w) * t,
                self.x + (b.x - self.x) * t,
                self.y + (b.y - self.y) * t,
                self.z + (b.z - self.z) * t,
            );
        }
        let theta = cos.acos();
        let s = theta.sin();
        let a = ((1.0 - t) * theta).sin() / s;
        let c = (t * theta).sin() / s;
        UnitQuaternion::new(
            a * self.w + c * b.w,
            a * self.x + c * b.x,
            a * self.y + c * b.y,
            a * self.z + c * b.z,
        )
    }
}

/// Rigid transform: rotation followed by translation (mm).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform {
    pub rotation: UnitQuaternion,
    pub translation: Vec3,
}

impl RigidTransform {
    pub const IDENTITY: RigidTransform =
        RigidTransform { rotation: UnitQuaternion::IDENTITY, translation: Vec3::ZERO };

    pub fn new(rotation: UnitQuaternion, translation: Vec3) -> Self {
        RigidTransform { rotation, translation }
    }

    pub fn apply(&self, p: Vec3) -> Vec3 {
        self.rotation.rotate(p) + self.translation
    }

    pub fn inverse(&self) -> RigidTransform {
        let rinv = self.rotation.inverse();
        RigidTransform { rotation: rinv, translation: -rinv.rotate(self.translation) }
    }

    pub fn compose(&self, inner: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation.mul(inner.rotation),
            translation: self.apply(inner.translation),
        }
    }
}

/// A plane given by an anchor point and a unit normal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Plane {
    pub point: Vec3,
    pub normal: Vec3,
}

impl Plane {
    pub fn new(point: Vec3, normal: Vec3) -> Self {
        Plane { point, normal: normal.normalized() }
    }
}

/// Orthonormal in-plane basis (u, v) used for 2-D projections.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlaneBasis {
    pub u: Vec3,
    pub v: Vec3,
}

/// Principal component analysis of a 3-D point cloud.
///
/// Returns the centroid, three orthonormal components ordered by descending
/// variance, and the variances. Each component is flipped so its
/// largest-magnitude entry is positive, which makes the output deterministic.
pub fn pca3(points: &[Vec3]) -> Result<(Vec3, [Vec3; 3], [f64; 3]), GeometryError> {
    if points.len() < 3 {
        return Err(GeometryError::DegenerateInput(format!(
            "need at least 3 points, got {}",
            points.len()
        )));
    }
    let n = points.len() as f64;
    let mut centroid = Vec3::ZERO;
    for p in points {
        centroid = centroid + *p;
    }
    centroid = centroid * (1.0 / n);

    let mut cov = Matrix3::zeros();
    for p in points {
        let d = (*p - centroid).to_na();
        cov += d * d.transpose();
    }
    cov /= n;

    let eig = nalgebra::SymmetricEigen::new(cov);
    // sort by descending eigenvalue
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());

    let mut components = [Vec3::ZERO; 3];
    let mut variances = [0.0; 3];
    for (k, &i) in order.iter().enumerate() {
        let mut c = Vec3::from_na(eig.eigenvectors.column(i).into_owned());
        let (ax, ay, az) = (c.x.abs(), c.y.abs(), c.z.abs());
        let dominant = if ax >= ay && ax >= az {
            c.x
        } else if ay >= az {
            c.y
        } else {
            c.z
        };
        if dominant < 0.0 {
            c = -c;
        }
        components[k] = c.normalized();
        variances[k] = eig.eigenvalues[i].max(0.0);
    }

    if variances[1] <= 1e-12 {
        return Err(GeometryError::DegenerateInput("points are collinear".into()));
    }
    Ok((centroid, components, variances))
}

/// 2-D point in plane coordinates (mm).
pub type Point2 = [f64; 2];

fn cross2(o: Point2, a: Point2, b: Point2) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Convex hull of a 2-D point set via monotone chain; returns the hull
/// vertices in counter-clockwise order. Degenerate sets (fewer than 3
/// distinct points, or all collinear) return fewer than 3 vertices.
pub fn convex_hull(points: &[Point2]) -> Vec<Point2> {
    let mut pts: Vec<Point2> = points.to_vec();
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup();
    let n = pts.len();
    if n < 3 {
        return pts;
    }
    let mut hull: Vec<Point2> = Vec::with_capacity(2 * n);
    for &p in pts.iter() {
        while hull.len() >= 2 && cross2(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 1e-9 {
            hull.pop();
        }
        hull.push(p);
    }
    let lower_len = hull.len() + 1;
    for &p in pts.iter().rev() {
        while hull.len() >= lower_len && cross2(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 1e-9 {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    hull
}

/// Area enclosed by the convex hull of `points`, mm². Degenerate inputs
/// (collinear, or fewer than 3 distinct points) yield 0.
pub fn convex_hull_area(points: &[Point2]) -> f64 {
    let hull = convex_hull(points);
    polygon_area(&hull)
}

/// Shoelace area of a simple polygon given in order.
pub fn polygon_area(vertices: &[Point2]) -> f64 {
    if vertices.len() < 3 {
        return 0.0;
    }
    let mut a = 0.0;
    for i in 0..vertices.len() {
        let p = vertices[i];
        let q = vertices[(i + 1) % vertices.len()];
        a += p[0] * q[1] - q[0] * p[1];
    }
    (a / 2.0).abs()
}

/// Median with the even-count convention: mean of the two central values.
pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "median of empty slice");
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Sliding median with the window centered on each index; the window is
/// truncated at the boundaries.
pub fn median_filter(v: &[f64], window: usize) -> Result<Vec<f64>, GeometryError> {
    if window < 1 || window % 2 == 0 {
        return Err(GeometryError::BadWindow(window));
    }
    let half = window / 2;
    let n = v.len();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let lo = i.saturating_sub(half);
        let hi = (i + half).min(n.saturating_sub(1));
        out.push(median(&v[lo..=hi]));
    }
    Ok(out)
}

/// Centered moving average with truncated edges; `window == 1` is the
/// identity. Works on anything that averages linearly.
pub fn moving_average<T>(v: &[T], window: usize) -> Result<Vec<T>, GeometryError>
where
    T: Copy + std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T>,
{
    if window < 1 {
        return Err(GeometryError::BadWindow(window));
    }
    let n = v.len();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let lo = i.saturating_sub(window / 2);
        let hi = (i + (window - 1) / 2).min(n.saturating_sub(1));
        let mut acc = v[lo];
        for item in &v[lo + 1..=hi] {
            acc = acc + *item;
        }
        out.push(acc * (1.0 / (hi - lo + 1) as f64));
    }
    Ok(out)
}

/// Signed perpendicular distance from `p` to `plane`, mm. Positive on the
/// side the normal points to.
pub fn point_plane_distance(p: Vec3, plane: &Plane) -> f64 {
    (p - plane.point).dot(plane.normal)
}

/// Coordinates of the orthogonal projection of `p` in the (u, v) frame
/// anchored at `plane.point`.
pub fn project_to_plane(p: Vec3, plane: &Plane, basis: &PlaneBasis) -> Result<Point2, GeometryError> {
    let tol = 1e-6;
    if (basis.u.norm() - 1.0).abs() > tol
        || (basis.v.norm() - 1.0).abs() > tol
        || basis.u.dot(basis.v).abs() > tol
        || basis.u.dot(plane.normal).abs() > tol
        || basis.v.dot(plane.normal).abs() > tol
    {
        return Err(GeometryError::BadBasis);
    }
    let d = p - plane.point;
    Ok([d.dot(basis.u), d.dot(basis.v)])
}
