//! Point clouds, bounding boxes and analytic shapes with exact signed distances.

use alloc::vec::Vec;
use core::f64::consts::PI;

use nalgebra::Vector3;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Error, Result};

pub type Rng64 = ChaCha8Rng;

/// Deterministic generator used by every seeded stage.
pub fn seeded_rng(seed: u64) -> Rng64 {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Surface hits with optional unit normals and the sensor origin.
///
/// A `None` entry inside `normals` marks a point whose normal could not be
/// estimated. Such points are rejected by every stage that needs normals.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct OrientedPointCloud {
    pub points: Vec<Vector3<f64>>,
    pub normals: Option<Vec<Option<Vector3<f64>>>>,
    pub viewpoint: Option<Vector3<f64>>,
}

impl OrientedPointCloud {
    pub fn new(points: Vec<Vector3<f64>>) -> Self {
        Self {
            points,
            normals: None,
            viewpoint: None,
        }
    }

    /// Builds a cloud with normals, renormalizing each one to unit length.
    /// Zero-length normals become null entries.
    pub fn with_normals(points: Vec<Vector3<f64>>, normals: Vec<Vector3<f64>>) -> Result<Self> {
        if points.len() != normals.len() {
            return Err(invalid("normals and points differ in length"));
        }
        let normals = normals
            .into_iter()
            .map(|n| {
                let len = n.norm();
                (len > 0.0 && len.is_finite()).then(|| n / len)
            })
            .collect();
        Ok(Self {
            points,
            normals: Some(normals),
            viewpoint: None,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn has_normals(&self) -> bool {
        self.normals.is_some()
    }

    /// All normals as unit vectors, or the indices of points lacking one.
    pub fn unit_normals(&self) -> Result<Vec<Vector3<f64>>> {
        let Some(normals) = &self.normals else {
            return Err(Error::MissingNormals((0..self.len()).collect()));
        };
        let bad: Vec<usize> = normals
            .iter()
            .enumerate()
            .filter(|(_, n)| n.map_or(true, |n| (n.norm() - 1.0).abs() > 1e-6))
            .map(|(i, _)| i)
            .collect();
        if !bad.is_empty() {
            return Err(Error::MissingNormals(bad));
        }
        Ok(normals.iter().map(|n| n.unwrap()).collect())
    }

    /// Drops points with null normals.
    pub fn without_null_normals(&self) -> Self {
        match &self.normals {
            None => self.clone(),
            Some(normals) => {
                let keep: Vec<usize> = (0..self.len()).filter(|&i| normals[i].is_some()).collect();
                self.select(&keep)
            }
        }
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            points: indices.iter().map(|&i| self.points[i]).collect(),
            normals: self.normals.as_ref().map(|n| indices.iter().map(|&i| n[i]).collect()),
            viewpoint: self.viewpoint,
        }
    }

    pub fn bounds(&self) -> Option<Aabb> {
        Aabb::from_points(&self.points)
    }
}

/// Uniform random subset of `ceil(rate * N)` points, returned in input order.
pub fn subsample(cloud: &OrientedPointCloud, rate: f64, seed: u64) -> Result<OrientedPointCloud> {
    if !(rate > 0.0 && rate <= 1.0) {
        return Err(invalid("subsample rate must lie in (0, 1]"));
    }
    let n = cloud.len();
    if n == 0 {
        return Ok(cloud.clone());
    }
    // the small offset keeps 0.07 * 100 from rounding up to 8
    let count = (libm::ceil(rate * n as f64 - 1e-9) as usize).clamp(1, n);
    let mut rng = seeded_rng(seed);
    let mut picked = index::sample(&mut rng, n, count).into_vec();
    picked.sort_unstable();
    Ok(cloud.select(&picked))
}

/// Axis-aligned box.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aabb {
    pub min: Vector3<f64>,
    pub max: Vector3<f64>,
}

impl Aabb {
    pub fn new(min: Vector3<f64>, max: Vector3<f64>) -> Self {
        Self { min, max }
    }

    pub fn from_points(points: &[Vector3<f64>]) -> Option<Self> {
        let first = points.first()?;
        let mut b = Aabb::new(*first, *first);
        for p in &points[1..] {
            b.min = b.min.inf(p);
            b.max = b.max.sup(p);
        }
        Some(b)
    }

    pub fn union(&self, other: &Aabb) -> Aabb {
        Aabb::new(self.min.inf(&other.min), self.max.sup(&other.max))
    }

    pub fn expanded(&self, margin: f64) -> Aabb {
        let m = Vector3::repeat(margin);
        Aabb::new(self.min - m, self.max + m)
    }

    pub fn center(&self) -> Vector3<f64> {
        (self.min + self.max) * 0.5
    }

    pub fn extent(&self) -> Vector3<f64> {
        self.max - self.min
    }

    /// Closed containment.
    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    /// Euclidean distance from `p` to the box, zero inside.
    pub fn distance(&self, p: &Vector3<f64>) -> f64 {
        let mut d2 = 0.0;
        for i in 0..3 {
            let d = (self.min[i] - p[i]).max(p[i] - self.max[i]).max(0.0);
            d2 += d * d;
        }
        libm::sqrt(d2)
    }

    /// Child box `octant` (bit 0 = x upper half, bit 1 = y, bit 2 = z).
    pub fn octant(&self, octant: usize) -> Aabb {
        let c = self.center();
        let mut min = self.min;
        let mut max = c;
        for axis in 0..3 {
            if octant >> axis & 1 == 1 {
                min[axis] = c[axis];
                max[axis] = self.max[axis];
            }
        }
        Aabb::new(min, max)
    }

    /// Octant index of `p` relative to the box center.
    pub fn octant_of(&self, p: &Vector3<f64>) -> usize {
        let c = self.center();
        (0..3).fold(0, |acc, axis| acc | (usize::from(p[axis] >= c[axis]) << axis))
    }

    pub fn is_valid(&self) -> bool {
        (0..3).all(|i| self.min[i] < self.max[i] && self.min[i].is_finite() && self.max[i].is_finite())
    }
}

/// Analytic scene used as ground truth.
#[derive(Clone, Debug, PartialEq)]
pub enum ShapeSpec {
    Sphere {
        center: Vector3<f64>,
        radius: f64,
    },
    Box {
        min: Vector3<f64>,
        max: Vector3<f64>,
    },
    /// Infinite plane through `point`; `half_extent` only bounds surface sampling.
    Plane {
        point: Vector3<f64>,
        normal: Vector3<f64>,
        half_extent: f64,
    },
    Union(Vec<ShapeSpec>),
}

impl ShapeSpec {
    pub fn unit_sphere() -> Self {
        ShapeSpec::Sphere {
            center: Vector3::zeros(),
            radius: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ShapeSpec::Sphere { radius, .. } => {
                if !(*radius > 0.0) {
                    return Err(invalid("sphere radius must be positive"));
                }
            }
            ShapeSpec::Box { min, max } => {
                if !(0..3).all(|i| min[i] < max[i]) {
                    return Err(invalid("box min must be below max on every axis"));
                }
            }
            ShapeSpec::Plane {
                normal, half_extent, ..
            } => {
                if !(normal.norm() > 0.0) {
                    return Err(invalid("plane normal must be non-zero"));
                }
                if !(*half_extent > 0.0) {
                    return Err(invalid("plane half extent must be positive"));
                }
            }
            ShapeSpec::Union(members) => {
                if members.is_empty() {
                    return Err(invalid("union needs at least one member"));
                }
                for m in members {
                    m.validate()?;
                }
            }
        }
        Ok(())
    }

    /// Exact signed distance: negative inside, zero on the surface, positive outside.
    pub fn sdf(&self, x: &Vector3<f64>) -> f64 {
        match self {
            ShapeSpec::Sphere { center, radius } => (x - center).norm() - radius,
            ShapeSpec::Box { min, max } => {
                let c = (min + max) * 0.5;
                let h = (max - min) * 0.5;
                let q = (x - c).abs() - h;
                let outside = q.sup(&Vector3::zeros()).norm();
                let inside = q.max().min(0.0);
                outside + inside
            }
            ShapeSpec::Plane { point, normal, .. } => (x - point).dot(normal) / normal.norm(),
            ShapeSpec::Union(members) => members.iter().map(|m| m.sdf(x)).fold(f64::INFINITY, f64::min),
        }
    }

    pub fn area(&self) -> f64 {
        match self {
            ShapeSpec::Sphere { radius, .. } => 4.0 * PI * radius * radius,
            ShapeSpec::Box { min, max } => {
                let e = max - min;
                2.0 * (e.x * e.y + e.y * e.z + e.z * e.x)
            }
            ShapeSpec::Plane { half_extent, .. } => 4.0 * half_extent * half_extent,
            ShapeSpec::Union(members) => members.iter().map(ShapeSpec::area).sum(),
        }
    }

    /// Box enclosing the sampled surface.
    pub fn bounds(&self) -> Aabb {
        match self {
            ShapeSpec::Sphere { center, radius } => {
                Aabb::new(center - Vector3::repeat(*radius), center + Vector3::repeat(*radius))
            }
            ShapeSpec::Box { min, max } => Aabb::new(*min, *max),
            ShapeSpec::Plane {
                point,
                normal,
                half_extent,
            } => {
                let (u, v) = tangent_basis(&normal.normalize());
                let span = (u.abs() + v.abs()) * *half_extent;
                Aabb::new(point - span, point + span)
            }
            ShapeSpec::Union(members) => members[1..]
                .iter()
                .fold(members[0].bounds(), |b, m| b.union(&m.bounds())),
        }
    }

    /// Area-uniform surface samples with outward unit normals.
    ///
    /// For unions, samples that fall strictly inside another member are
    /// rejected so that every returned point lies on the union's boundary.
    pub fn sample_surface<R: Rng>(&self, n: usize, rng: &mut R) -> Result<(Vec<Vector3<f64>>, Vec<Vector3<f64>>)> {
        self.validate()?;
        let mut points = Vec::with_capacity(n);
        let mut normals = Vec::with_capacity(n);
        let max_attempts = 1000 * n.max(1);
        let mut attempts = 0;
        while points.len() < n {
            attempts += 1;
            if attempts > max_attempts {
                return Err(invalid("surface sampling rejected too many candidates"));
            }
            let (p, nrm) = self.sample_one(rng);
            if let ShapeSpec::Union(_) = self {
                if self.sdf(&p).abs() > 1e-9 {
                    continue;
                }
            }
            points.push(p);
            normals.push(nrm);
        }
        Ok((points, normals))
    }

    fn sample_one<R: Rng>(&self, rng: &mut R) -> (Vector3<f64>, Vector3<f64>) {
        match self {
            ShapeSpec::Sphere { center, radius } => {
                let dir = loop {
                    let v = Vector3::new(
                        StandardNormal.sample(rng),
                        StandardNormal.sample(rng),
                        StandardNormal.sample(rng),
                    );
                    let len: f64 = v.norm();
                    if len > 1e-12 {
                        break v / len;
                    }
                };
                (center + dir * *radius, dir)
            }
            ShapeSpec::Box { min, max } => {
                let e = max - min;
                let areas = [e.y * e.z, e.y * e.z, e.x * e.z, e.x * e.z, e.x * e.y, e.x * e.y];
                let face = pick_weighted(&areas, rng);
                let axis = face / 2;
                let mut p = Vector3::new(
                    rng.random_range(min.x..=max.x),
                    rng.random_range(min.y..=max.y),
                    rng.random_range(min.z..=max.z),
                );
                let mut n = Vector3::zeros();
                if face % 2 == 0 {
                    p[axis] = min[axis];
                    n[axis] = -1.0;
                } else {
                    p[axis] = max[axis];
                    n[axis] = 1.0;
                }
                (p, n)
            }
            ShapeSpec::Plane {
                point,
                normal,
                half_extent,
            } => {
                let n = normal.normalize();
                let (u, v) = tangent_basis(&n);
                let a = rng.random_range(-*half_extent..=*half_extent);
                let b = rng.random_range(-*half_extent..=*half_extent);
                (point + u * a + v * b, n)
            }
            ShapeSpec::Union(members) => {
                let areas: Vec<f64> = members.iter().map(ShapeSpec::area).collect();
                members[pick_weighted(&areas, rng)].sample_one(rng)
            }
        }
    }
}

/// Free-function form of [`ShapeSpec::sdf`].
pub fn analytic_sdf(shape: &ShapeSpec, x: &Vector3<f64>) -> f64 {
    shape.sdf(x)
}

impl crate::DistanceField for ShapeSpec {
    fn predict(&self, x: &Vector3<f64>) -> Result<crate::Prediction> {
        Ok(crate::Prediction {
            mean: self.sdf(x),
            variance: 0.0,
        })
    }
}

fn pick_weighted<R: Rng>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let mut t = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if t < *w {
            return i;
        }
        t -= w;
    }
    weights.len() - 1
}

/// Two unit vectors completing `n` to a right-handed orthonormal frame.
pub fn tangent_basis(n: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let helper = if n.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
    let u = n.cross(&helper).normalize();
    let v = n.cross(&u);
    (u, v)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_box() -> ShapeSpec {
        ShapeSpec::Box {
            min: Vector3::repeat(-1.0),
            max: Vector3::repeat(1.0),
        }
    }

    #[test]
    fn sphere_distances() {
        let s = ShapeSpec::unit_sphere();
        assert_eq!(s.sdf(&Vector3::new(2.0, 0.0, 0.0)), 1.0);
        assert_eq!(s.sdf(&Vector3::zeros()), -1.0);
    }

    #[test]
    fn box_corner_region() {
        let d = unit_box().sdf(&Vector3::new(2.0, 2.0, 0.0));
        assert!((d - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(unit_box().sdf(&Vector3::zeros()), -1.0);
        assert_eq!(unit_box().sdf(&Vector3::new(0.5, 0.0, 0.9)), -0.09999999999999998);
    }

    #[test]
    fn plane_and_union() {
        let plane = ShapeSpec::Plane {
            point: Vector3::new(0.0, 0.0, 1.0),
            normal: Vector3::new(0.0, 0.0, 2.0),
            half_extent: 1.0,
        };
        assert_eq!(plane.sdf(&Vector3::new(5.0, -3.0, 0.25)), -0.75);
        let u = ShapeSpec::Union(alloc::vec![
            ShapeSpec::unit_sphere(),
            ShapeSpec::Sphere {
                center: Vector3::new(5.0, 0.0, 0.0),
                radius: 1.0
            },
        ]);
        assert_eq!(u.sdf(&Vector3::new(4.5, 0.0, 0.0)), -0.5);
        assert_eq!(u.sdf(&Vector3::new(2.5, 0.0, 0.0)), 1.5);
    }

    #[test]
    fn invalid_shapes() {
        assert!(ShapeSpec::Sphere {
            center: Vector3::zeros(),
            radius: 0.0
        }
        .validate()
        .is_err());
        assert!(ShapeSpec::Box {
            min: Vector3::zeros(),
            max: Vector3::new(1.0, 0.0, 1.0)
        }
        .validate()
        .is_err());
        assert!(ShapeSpec::Union(Vec::new()).validate().is_err());
    }

    #[test]
    fn surface_samples_lie_on_surface() {
        let mut rng = seeded_rng(3);
        let shapes = [
            ShapeSpec::unit_sphere(),
            unit_box(),
            ShapeSpec::Union(alloc::vec![
                ShapeSpec::Plane {
                    point: Vector3::zeros(),
                    normal: Vector3::z(),
                    half_extent: 1.0
                },
                ShapeSpec::Plane {
                    point: Vector3::zeros(),
                    normal: Vector3::x(),
                    half_extent: 1.0
                },
            ]),
        ];
        for shape in &shapes {
            let (pts, nrm) = shape.sample_surface(500, &mut rng).unwrap();
            assert_eq!(pts.len(), 500);
            for (p, n) in pts.iter().zip(&nrm) {
                assert!(shape.sdf(p).abs() < 1e-9);
                assert!((n.norm() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn subsample_counts_and_determinism() {
        let cloud = OrientedPointCloud::new((0..1000).map(|i| Vector3::new(i as f64, 0.0, 0.0)).collect());
        let a = subsample(&cloud, 0.15, 7).unwrap();
        assert_eq!(a.len(), 150);
        assert_eq!(a, subsample(&cloud, 0.15, 7).unwrap());
        assert_eq!(subsample(&cloud, 1.0, 1).unwrap(), cloud);
        let small = OrientedPointCloud::new(cloud.points[..100].to_vec());
        assert_eq!(subsample(&small, 0.07, 0).unwrap().len(), 7);
        assert!(subsample(&cloud, 0.0, 0).is_err());
        assert!(subsample(&cloud, 1.5, 0).is_err());
    }

    #[test]
    fn subsample_carries_normals() {
        let pts: Vec<_> = (0..20).map(|i| Vector3::new(i as f64, 0.0, 0.0)).collect();
        let nrm: Vec<_> = (0..20).map(|i| Vector3::new(0.0, i as f64 + 1.0, 0.0)).collect();
        let cloud = OrientedPointCloud::with_normals(pts, nrm).unwrap();
        let sub = subsample(&cloud, 0.5, 11).unwrap();
        let normals = sub.unit_normals().unwrap();
        assert_eq!(normals.len(), 10);
        for n in normals {
            assert_eq!(n, Vector3::y());
        }
    }

    #[test]
    fn aabb_octants_partition() {
        let b = unit_box().bounds();
        for o in 0..8 {
            let child = b.octant(o);
            assert_eq!(b.octant_of(&child.center()), o);
        }
        assert_eq!(b.distance(&Vector3::new(2.0, 0.0, 0.0)), 1.0);
        assert_eq!(b.distance(&Vector3::zeros()), 0.0);
    }
}
