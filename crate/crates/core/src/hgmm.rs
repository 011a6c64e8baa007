//! Hierarchical 4D Gaussian mixture over `(x, y, z, signed distance)`.
//!
//! Surface hits only ever observe distance zero, so each hit is augmented with
//! two virtual samples at `±s` along its normal. EM fits a small mixture to
//! the augmented samples; components that are not flat enough (by principal
//! curvature of their covariance) are refit with `fanout` children on the
//! samples they own, recursively.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, Matrix3, Matrix4, SymmetricEigen, Vector3, Vector4};
use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::geometry::{seeded_rng, OrientedPointCloud};

const LN_2PI: f64 = 1.8378770664093453;

/// A position with a signed distance target.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DistanceSample {
    pub position: Vector3<f64>,
    pub distance: f64,
}

impl DistanceSample {
    pub fn to_vec4(&self) -> Vector4<f64> {
        Vector4::new(self.position.x, self.position.y, self.position.z, self.distance)
    }
}

/// Emits `(p, 0)`, `(p + s n, +s)` and `(p - s n, -s)` for every hit.
pub fn augment_virtual_points(cloud: &OrientedPointCloud, spacing: f64) -> Result<Vec<DistanceSample>> {
    if !(spacing > 0.0) || !spacing.is_finite() {
        return Err(invalid("virtual point spacing must be positive"));
    }
    let normals = cloud.unit_normals()?;
    let mut out = Vec::with_capacity(3 * cloud.len());
    for (p, n) in cloud.points.iter().zip(&normals) {
        out.push(DistanceSample {
            position: *p,
            distance: 0.0,
        });
        out.push(DistanceSample {
            position: p + n * spacing,
            distance: spacing,
        });
        out.push(DistanceSample {
            position: p - n * spacing,
            distance: -spacing,
        });
    }
    Ok(out)
}

/// One weighted 4D Gaussian with cached precision and conditioning terms.
#[derive(Clone, Debug, PartialEq)]
pub struct Gaussian4 {
    pub weight: f64,
    pub mean: Vector4<f64>,
    pub covariance: Matrix4<f64>,
    pub precision: Matrix4<f64>,
    spatial_precision: Matrix3<f64>,
    spatial_log_norm: f64,
    full_precision_chol_logdet: f64,
}

impl Gaussian4 {
    /// Builds a component; the covariance is symmetrized and must be positive definite.
    pub fn new(weight: f64, mean: Vector4<f64>, covariance: Matrix4<f64>) -> Result<Self> {
        let covariance = (covariance + covariance.transpose()) * 0.5;
        let chol = covariance
            .cholesky()
            .ok_or_else(|| Error::ModelCorruption(format!("covariance not positive definite: {covariance:?}")))?;
        let precision = chol.inverse();
        let logdet = 2.0 * (0..4).map(|i| libm::log(chol.l()[(i, i)])).sum::<f64>();

        let sxx: Matrix3<f64> = covariance.fixed_view::<3, 3>(0, 0).into_owned();
        let schol = sxx
            .cholesky()
            .ok_or_else(|| Error::ModelCorruption("spatial covariance not positive definite".into()))?;
        let slogdet = 2.0 * (0..3).map(|i| libm::log(schol.l()[(i, i)])).sum::<f64>();
        Ok(Self {
            weight,
            mean,
            covariance,
            precision,
            spatial_precision: schol.inverse(),
            spatial_log_norm: -0.5 * (3.0 * LN_2PI + slogdet),
            full_precision_chol_logdet: logdet,
        })
    }

    pub fn spatial_mean(&self) -> Vector3<f64> {
        self.mean.fixed_rows::<3>(0).into_owned()
    }

    /// Log density of the 3D spatial marginal at `x`.
    pub fn spatial_log_density(&self, x: &Vector3<f64>) -> f64 {
        let d = x - self.spatial_mean();
        self.spatial_log_norm - 0.5 * (d.transpose() * self.spatial_precision * d)[(0, 0)]
    }

    /// Log density of the full 4D Gaussian.
    pub fn log_density(&self, v: &Vector4<f64>) -> f64 {
        let d = v - self.mean;
        -0.5 * (4.0 * LN_2PI + self.full_precision_chol_logdet + (d.transpose() * self.precision * d)[(0, 0)])
    }

    /// Spatial 3x3 block of the covariance.
    pub fn spatial_covariance(&self) -> Matrix3<f64> {
        self.covariance.fixed_view::<3, 3>(0, 0).into_owned()
    }
}

/// Smallest eigenvalue over the eigenvalue sum of a symmetric PSD matrix.
///
/// Zero for a perfectly flat (degenerate) distribution, `1/n` for an
/// isotropic one.
pub fn principal_curvature(covariance: &DMatrix<f64>) -> Result<f64> {
    let n = covariance.nrows();
    if n == 0 || covariance.ncols() != n {
        return Err(invalid("curvature needs a non-empty square matrix"));
    }
    let scale = covariance.amax().max(1.0);
    for i in 0..n {
        for j in 0..i {
            if (covariance[(i, j)] - covariance[(j, i)]).abs() > 1e-9 * scale {
                return Err(invalid("covariance is not symmetric"));
            }
        }
    }
    let eig = SymmetricEigen::new(covariance.clone());
    let values: Vec<f64> = eig.eigenvalues.iter().map(|&l| l.max(0.0)).collect();
    let sum: f64 = values.iter().sum();
    if sum == 0.0 {
        return Ok(0.0);
    }
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(min / sum)
}

fn curvature_of(component: &Gaussian4, spatial_only: bool) -> f64 {
    let m = if spatial_only {
        let s = component.spatial_covariance();
        DMatrix::from_fn(3, 3, |i, j| s[(i, j)])
    } else {
        DMatrix::from_fn(4, 4, |i, j| component.covariance[(i, j)])
    };
    // symmetric by construction
    principal_curvature(&m).unwrap_or(0.0)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EmConfig {
    pub max_iter: usize,
    pub tol: f64,
    pub reg_eps: f64,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tol: 1e-5,
            reg_eps: 1e-6,
        }
    }
}

impl EmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 {
            return Err(invalid("em max_iter must be at least 1"));
        }
        if !(self.tol > 0.0) {
            return Err(invalid("em tol must be positive"));
        }
        if !(self.reg_eps > 0.0) {
            return Err(invalid("em reg_eps must be positive"));
        }
        Ok(())
    }
}

/// EM starting point.
#[derive(Clone, Debug)]
pub enum EmInit {
    KMeansPlusPlus { seed: u64 },
    Components(Vec<Gaussian4>),
}

#[derive(Clone, Debug)]
pub struct EmFit {
    pub components: Vec<Gaussian4>,
    /// Total data log-likelihood before each M-step, then after the last one.
    pub log_likelihood: Vec<f64>,
    /// Iterations at which components were deleted, with the count removed.
    pub deletions: Vec<(usize, usize)>,
    pub converged: bool,
}

const MIN_COMPONENT_MASS: f64 = 4.0;

/// Expectation maximization for a `k`-component 4D Gaussian mixture.
///
/// Each M-step covariance gets `reg_eps * I`. Components whose responsibility
/// mass drops below four samples are deleted and the remaining weights
/// renormalized.
pub fn fit_em(samples: &[DistanceSample], k: usize, init: EmInit, config: &EmConfig) -> Result<EmFit> {
    config.validate()?;
    if k == 0 {
        return Err(invalid("component count must be at least 1"));
    }
    if samples.len() < 4 * k {
        return Err(Error::InsufficientSamples {
            needed: 4 * k,
            got: samples.len(),
        });
    }
    let data: Vec<Vector4<f64>> = samples.iter().map(DistanceSample::to_vec4).collect();
    let mut components = match init {
        EmInit::Components(c) => {
            if c.is_empty() {
                return Err(invalid("empty initial component list"));
            }
            c
        }
        EmInit::KMeansPlusPlus { seed } => kmeans_pp_init(&data, k, seed, config.reg_eps)?,
    };

    let n = data.len();
    let mut resp = vec![0.0; n * components.len()];
    let mut trace = Vec::new();
    let mut deletions = Vec::new();
    let mut converged = false;
    for iter in 0..config.max_iter {
        let ll = e_step(&data, &components, &mut resp);
        if let Some(&prev) = trace.last() {
            let prev: f64 = prev;
            if (ll - prev).abs() <= config.tol * prev.abs().max(1e-300) {
                trace.push(ll);
                converged = true;
                break;
            }
        }
        trace.push(ll);
        let (next, removed) = m_step(&data, &components, &resp, config.reg_eps)?;
        if removed > 0 {
            deletions.push((iter, removed));
        }
        components = next;
        resp.resize(n * components.len(), 0.0);
    }
    if !converged {
        let ll = e_step(&data, &components, &mut resp);
        trace.push(ll);
    }
    Ok(EmFit {
        components,
        log_likelihood: trace,
        deletions,
        converged,
    })
}

/// Fills `resp` (row-major `n x k`) and returns the total log-likelihood.
fn e_step(data: &[Vector4<f64>], components: &[Gaussian4], resp: &mut [f64]) -> f64 {
    let k = components.len();
    let log_w: Vec<f64> = components.iter().map(|c| libm::log(c.weight)).collect();
    let mut total = 0.0;
    for (i, x) in data.iter().enumerate() {
        let row = &mut resp[i * k..(i + 1) * k];
        let mut max = f64::NEG_INFINITY;
        for (j, c) in components.iter().enumerate() {
            row[j] = log_w[j] + c.log_density(x);
            max = max.max(row[j]);
        }
        let mut sum = 0.0;
        for r in row.iter_mut() {
            *r = libm::exp(*r - max);
            sum += *r;
        }
        for r in row.iter_mut() {
            *r /= sum;
        }
        total += max + libm::log(sum);
    }
    total
}

fn m_step(
    data: &[Vector4<f64>],
    components: &[Gaussian4],
    resp: &[f64],
    reg_eps: f64,
) -> Result<(Vec<Gaussian4>, usize)> {
    let k = components.len();
    let n = data.len();
    let mut mass = vec![0.0; k];
    let mut means = vec![Vector4::zeros(); k];
    for (i, x) in data.iter().enumerate() {
        for j in 0..k {
            let r = resp[i * k + j];
            mass[j] += r;
            means[j] += x * r;
        }
    }
    let keep: Vec<usize> = (0..k).filter(|&j| mass[j] >= MIN_COMPONENT_MASS).collect();
    if keep.is_empty() {
        return Err(Error::InsufficientSamples {
            needed: MIN_COMPONENT_MASS as usize,
            got: n,
        });
    }
    for &j in &keep {
        means[j] /= mass[j];
    }
    let mut covs = vec![Matrix4::zeros(); k];
    for (i, x) in data.iter().enumerate() {
        for &j in &keep {
            let d = x - means[j];
            covs[j] += d * d.transpose() * resp[i * k + j];
        }
    }
    let kept_mass: f64 = keep.iter().map(|&j| mass[j]).sum();
    let mut out = Vec::with_capacity(keep.len());
    for &j in &keep {
        let cov = covs[j] / mass[j] + Matrix4::identity() * reg_eps;
        out.push(Gaussian4::new(mass[j] / kept_mass, means[j], cov)?);
    }
    Ok((out, k - keep.len()))
}

/// k-means++ seeding followed by hard assignment to the nearest seed.
fn kmeans_pp_init(data: &[Vector4<f64>], k: usize, seed: u64, reg_eps: f64) -> Result<Vec<Gaussian4>> {
    let mut rng = seeded_rng(seed);
    let n = data.len();
    let mut centers = vec![data[rng.random_range(0..n)]];
    let mut d2: Vec<f64> = data.iter().map(|x| (x - centers[0]).norm_squared()).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut t = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, d) in d2.iter().enumerate() {
                if t < *d {
                    pick = i;
                    break;
                }
                t -= d;
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        let c = data[next];
        for (di, x) in d2.iter_mut().zip(data) {
            *di = di.min((x - c).norm_squared());
        }
        centers.push(c);
    }

    let mut labels = vec![0usize; n];
    for (i, x) in data.iter().enumerate() {
        let mut best = (f64::INFINITY, 0);
        for (j, c) in centers.iter().enumerate() {
            let d = (x - c).norm_squared();
            if d < best.0 {
                best = (d, j);
            }
        }
        labels[i] = best.1;
    }

    let global_mean = data.iter().sum::<Vector4<f64>>() / n as f64;
    let global_cov = data
        .iter()
        .map(|x| (x - global_mean) * (x - global_mean).transpose())
        .sum::<Matrix4<f64>>()
        / n as f64;
    let mut out = Vec::with_capacity(k);
    for j in 0..k {
        let members: Vec<&Vector4<f64>> = (0..n).filter(|&i| labels[i] == j).map(|i| &data[i]).collect();
        let count = members.len();
        let (mean, cov) = if count >= 5 {
            let m = members.iter().copied().sum::<Vector4<f64>>() / count as f64;
            let c = members
                .iter()
                .map(|x| (*x - m) * (*x - m).transpose())
                .sum::<Matrix4<f64>>()
                / count as f64;
            (m, c)
        } else {
            (centers[j], global_cov)
        };
        let weight = (count.max(1)) as f64;
        out.push(Gaussian4::new(weight, mean, cov + Matrix4::identity() * reg_eps)?);
    }
    let total: f64 = out.iter().map(|c| c.weight).sum();
    for c in &mut out {
        c.weight /= total;
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HgmmConfig {
    pub root_k: usize,
    pub fanout: usize,
    pub curvature_threshold: f64,
    pub max_depth: usize,
    pub min_points: usize,
    pub em: EmConfig,
    /// Split on the 3x3 spatial covariance instead of the full 4x4 one.
    pub spatial_curvature: bool,
    pub seed: u64,
}

impl Default for HgmmConfig {
    fn default() -> Self {
        Self {
            root_k: 4,
            fanout: 4,
            curvature_threshold: 0.01,
            max_depth: 6,
            min_points: 50,
            em: EmConfig::default(),
            spatial_curvature: false,
            seed: 0,
        }
    }
}

impl HgmmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.root_k == 0 {
            return Err(invalid("root_k must be at least 1"));
        }
        if self.fanout < 2 {
            return Err(invalid("fanout must be at least 2"));
        }
        if !(self.curvature_threshold >= 0.0) {
            return Err(invalid("curvature threshold must be non-negative"));
        }
        self.em.validate()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HgmmNode {
    pub component: Gaussian4,
    pub curvature: f64,
    pub children: Vec<HgmmNode>,
    pub depth: usize,
    /// Samples hard-assigned to this node during fitting.
    pub support: usize,
}

impl HgmmNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }
}

/// Something noteworthy that happened during a fit.
#[derive(Clone, Debug, PartialEq)]
pub enum FitEvent {
    ComponentsDeleted { depth: usize, removed: usize },
    SplitFailed { depth: usize, error: Error },
    SplitCollapsed { depth: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct HgmmModel {
    pub roots: Vec<HgmmNode>,
    /// Childless nodes in depth-first order, weights summing to one.
    pub leaves: Vec<Gaussian4>,
    pub leaf_depths: Vec<usize>,
    pub config: HgmmConfig,
    pub log: Vec<FitEvent>,
}

impl HgmmModel {
    /// Model made only of the given leaves (e.g. after deserialization).
    pub fn from_leaves(leaves: Vec<Gaussian4>, depths: Vec<usize>, config: HgmmConfig) -> Result<Self> {
        if leaves.is_empty() {
            return Err(Error::EmptyInput("model has no components".into()));
        }
        if leaves.len() != depths.len() {
            return Err(invalid("leaf and depth counts differ"));
        }
        let roots = leaves
            .iter()
            .zip(&depths)
            .map(|(c, &depth)| HgmmNode {
                curvature: curvature_of(c, config.spatial_curvature),
                component: c.clone(),
                children: Vec::new(),
                depth,
                support: 0,
            })
            .collect();
        Ok(Self {
            roots,
            leaves,
            leaf_depths: depths,
            config,
            log: Vec::new(),
        })
    }

    pub fn max_depth(&self) -> usize {
        self.leaf_depths.iter().copied().max().unwrap_or(0)
    }
}

/// Fits the hierarchy: `root_k` components over everything, then each node
/// that is too curved, shallow enough and well supported gets `fanout`
/// children fit on its hard-assigned samples.
pub fn fit_hgmm(samples: &[DistanceSample], config: &HgmmConfig) -> Result<HgmmModel> {
    config.validate()?;
    let mut log = Vec::new();
    let root_fit = fit_em(
        samples,
        config.root_k,
        EmInit::KMeansPlusPlus {
            seed: mix_seed(config.seed, 0),
        },
        &config.em,
    )?;
    for &(_, removed) in &root_fit.deletions {
        log.push(FitEvent::ComponentsDeleted { depth: 0, removed });
    }
    let mut node_counter = 1u64;
    let groups = hard_assign(samples, &root_fit.components);
    let mut roots = Vec::with_capacity(root_fit.components.len());
    for (component, members) in root_fit.components.into_iter().zip(groups) {
        roots.push(grow(component, members, 0, config, &mut node_counter, &mut log));
    }

    let mut leaves = Vec::new();
    let mut depths = Vec::new();
    for root in &roots {
        collect_leaves(root, &mut leaves, &mut depths);
    }
    let total: f64 = leaves.iter().map(|c| c.weight).sum();
    for leaf in &mut leaves {
        leaf.weight /= total;
    }
    Ok(HgmmModel {
        roots,
        leaves,
        leaf_depths: depths,
        config: *config,
        log,
    })
}

fn grow(
    component: Gaussian4,
    samples: Vec<DistanceSample>,
    depth: usize,
    config: &HgmmConfig,
    counter: &mut u64,
    log: &mut Vec<FitEvent>,
) -> HgmmNode {
    let curvature = curvature_of(&component, config.spatial_curvature);
    let mut node = HgmmNode {
        component,
        curvature,
        children: Vec::new(),
        depth,
        support: samples.len(),
    };
    let wants_split =
        curvature > config.curvature_threshold && depth < config.max_depth && samples.len() >= config.min_points;
    if !wants_split {
        return node;
    }
    let seed = mix_seed(config.seed, *counter);
    *counter += 1;
    match fit_em(&samples, config.fanout, EmInit::KMeansPlusPlus { seed }, &config.em) {
        Err(error) => log.push(FitEvent::SplitFailed { depth, error }),
        Ok(fit) => {
            for &(_, removed) in &fit.deletions {
                log.push(FitEvent::ComponentsDeleted {
                    depth: depth + 1,
                    removed,
                });
            }
            if fit.components.len() < 2 {
                log.push(FitEvent::SplitCollapsed { depth });
                return node;
            }
            let groups = hard_assign(&samples, &fit.components);
            let parent_weight = node.component.weight;
            for (mut child, members) in fit.components.into_iter().zip(groups) {
                child.weight *= parent_weight;
                node.children
                    .push(grow(child, members, depth + 1, config, counter, log));
            }
        }
    }
    node
}

/// Routes each sample to the component with the largest responsibility.
fn hard_assign(samples: &[DistanceSample], components: &[Gaussian4]) -> Vec<Vec<DistanceSample>> {
    let log_w: Vec<f64> = components.iter().map(|c| libm::log(c.weight)).collect();
    let mut groups = vec![Vec::new(); components.len()];
    for s in samples {
        let v = s.to_vec4();
        let mut best = (f64::NEG_INFINITY, 0);
        for (j, c) in components.iter().enumerate() {
            let score = log_w[j] + c.log_density(&v);
            if score > best.0 {
                best = (score, j);
            }
        }
        groups[best.1].push(*s);
    }
    groups
}

fn collect_leaves(node: &HgmmNode, leaves: &mut Vec<Gaussian4>, depths: &mut Vec<usize>) {
    if node.is_leaf() {
        leaves.push(node.component.clone());
        depths.push(node.depth);
    } else {
        for child in &node.children {
            collect_leaves(child, leaves, depths);
        }
    }
}

fn mix_seed(seed: u64, salt: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    fn diag(values: &[f64]) -> DMatrix<f64> {
        DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(values))
    }

    #[test]
    fn curvature_examples() {
        assert_eq!(principal_curvature(&diag(&[4.0, 2.0, 0.0])).unwrap(), 0.0);
        assert!((principal_curvature(&diag(&[1.0, 1.0, 1.0])).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        let c = principal_curvature(&diag(&[9.0, 3.0, 0.06])).unwrap();
        assert!((c - 0.06 / 12.06).abs() < 1e-15);
        assert_eq!(principal_curvature(&DMatrix::zeros(3, 3)).unwrap(), 0.0);
    }

    #[test]
    fn curvature_rejects_asymmetry_and_clamps() {
        let mut m = diag(&[1.0, 1.0]);
        m[(0, 1)] = 0.1;
        assert!(principal_curvature(&m).is_err());
        assert_eq!(principal_curvature(&diag(&[2.0, -1e-13])).unwrap(), 0.0);
    }

    #[test]
    fn curvature_is_rotation_invariant() {
        let r = nalgebra::Rotation3::from_euler_angles(0.3, -1.1, 0.7).into_inner();
        let d = Matrix3::from_diagonal(&Vector3::new(5.0, 2.0, 0.5));
        let m = r * d * r.transpose();
        let c = principal_curvature(&DMatrix::from_fn(3, 3, |i, j| m[(i, j)])).unwrap();
        assert!((c - 0.5 / 7.5).abs() < 1e-12);
    }

    #[test]
    fn augment_layout() {
        let cloud = OrientedPointCloud::with_normals(alloc::vec![Vector3::zeros()], alloc::vec![Vector3::z()]).unwrap();
        let s = augment_virtual_points(&cloud, 0.2).unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!((s[0].position, s[0].distance), (Vector3::zeros(), 0.0));
        assert_eq!((s[1].position, s[1].distance), (Vector3::new(0.0, 0.0, 0.2), 0.2));
        assert_eq!((s[2].position, s[2].distance), (Vector3::new(0.0, 0.0, -0.2), -0.2));
        assert!(augment_virtual_points(&cloud, 0.0).is_err());
    }

    #[test]
    fn augment_counts_and_missing_normals() {
        let pts: Vec<_> = (0..100).map(|i| Vector3::new(i as f64, 0.0, 0.0)).collect();
        let nrm = alloc::vec![Vector3::y(); 100];
        let cloud = OrientedPointCloud::with_normals(pts.clone(), nrm).unwrap();
        let s = augment_virtual_points(&cloud, 0.2).unwrap();
        assert_eq!(s.len(), 300);
        for target in [-0.2, 0.0, 0.2] {
            assert_eq!(s.iter().filter(|x| x.distance == target).count(), 100);
        }

        let mut broken = cloud.clone();
        broken.normals.as_mut().unwrap()[7] = None;
        broken.normals.as_mut().unwrap()[42] = None;
        assert_eq!(
            augment_virtual_points(&broken, 0.2),
            Err(Error::MissingNormals(alloc::vec![7, 42]))
        );
        assert!(matches!(
            augment_virtual_points(&OrientedPointCloud::new(pts), 0.2),
            Err(Error::MissingNormals(_))
        ));
    }

    fn gaussian_samples(center: Vector4<f64>, n: usize, seed: u64) -> Vec<DistanceSample> {
        let mut rng = seeded_rng(seed);
        (0..n)
            .map(|_| {
                let mut v = center;
                for i in 0..4 {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    v[i] += z;
                }
                DistanceSample {
                    position: Vector3::new(v[0], v[1], v[2]),
                    distance: v[3],
                }
            })
            .collect()
    }

    #[test]
    fn single_component_is_closed_form() {
        let samples = gaussian_samples(Vector4::new(1.0, -2.0, 0.5, 0.1), 200, 5);
        let cfg = EmConfig::default();
        let fit = fit_em(&samples, 1, EmInit::KMeansPlusPlus { seed: 1 }, &cfg).unwrap();
        let data: Vec<Vector4<f64>> = samples.iter().map(DistanceSample::to_vec4).collect();
        let mean = data.iter().sum::<Vector4<f64>>() / 200.0;
        let cov = data
            .iter()
            .map(|x| (x - mean) * (x - mean).transpose())
            .sum::<Matrix4<f64>>()
            / 200.0
            + Matrix4::identity() * cfg.reg_eps;
        let c = &fit.components[0];
        assert!((c.mean - mean).amax() < 1e-12);
        assert!((c.covariance - cov).amax() < 1e-12);
        assert_eq!(c.weight, 1.0);
    }

    #[test]
    fn separated_clusters_are_recovered() {
        let a = Vector4::new(0.0, 0.0, 0.0, 0.0);
        let b = Vector4::new(5.0, 5.0, 5.0, 5.0); // 10 units apart
        let mut samples = gaussian_samples(a, 1000, 1);
        samples.extend(gaussian_samples(b, 1000, 2));
        let fit = fit_em(&samples, 2, EmInit::KMeansPlusPlus { seed: 9 }, &EmConfig::default()).unwrap();
        assert_eq!(fit.components.len(), 2);
        let mut means: Vec<Vector4<f64>> = fit.components.iter().map(|c| c.mean).collect();
        means.sort_by(|x, y| x[0].total_cmp(&y[0]));
        assert!((means[0] - a).amax() < 0.1, "{:?}", means[0]);
        assert!((means[1] - b).amax() < 0.1, "{:?}", means[1]);
        for w in fit.log_likelihood.windows(2) {
            assert!(w[1] >= w[0] - 1e-10 * w[0].abs(), "{w:?}");
        }
        let wsum: f64 = fit.components.iter().map(|c| c.weight).sum();
        assert!((wsum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn precision_inverts_covariance() {
        let samples = gaussian_samples(Vector4::zeros(), 100, 3);
        let fit = fit_em(&samples, 1, EmInit::KMeansPlusPlus { seed: 0 }, &EmConfig::default()).unwrap();
        let c = &fit.components[0];
        assert!((c.precision * c.covariance - Matrix4::identity()).amax() < 1e-8);
    }

    #[test]
    fn insufficient_samples() {
        let samples = gaussian_samples(Vector4::zeros(), 7, 3);
        assert_eq!(
            fit_em(&samples, 2, EmInit::KMeansPlusPlus { seed: 0 }, &EmConfig::default()).unwrap_err(),
            Error::InsufficientSamples { needed: 8, got: 7 }
        );
    }

    #[test]
    fn starved_component_is_deleted() {
        let mut samples = gaussian_samples(Vector4::zeros(), 200, 3);
        samples.push(DistanceSample {
            position: Vector3::new(500.0, 500.0, 500.0),
            distance: 0.0,
        });
        let far = Gaussian4::new(0.5, Vector4::new(500.0, 500.0, 500.0, 0.0), Matrix4::identity()).unwrap();
        let near = Gaussian4::new(0.5, Vector4::zeros(), Matrix4::identity()).unwrap();
        let fit = fit_em(
            &samples,
            2,
            EmInit::Components(alloc::vec![near, far]),
            &EmConfig::default(),
        )
        .unwrap();
        assert_eq!(fit.components.len(), 1);
        assert_eq!(fit.deletions, alloc::vec![(0, 1)]);
        assert!((fit.components[0].weight - 1.0).abs() < 1e-15);
    }
}
