//! Non-stationary GP refinement of the mixture prior.
//!
//! Only hits the mixture fails to explain (`|m(x)| > d_m`) become training
//! points. They are partitioned into octree blocks; every block fits its own
//! derivative-observation GP on its owned points plus the neighbors within a
//! halo of its box, using the mixture mean as prior mean and the mixture
//! standard deviation as per-point signal scale.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::Vector3;

use crate::error::{invalid, Error, Result};
use crate::geometry::{Aabb, OrientedPointCloud};
use crate::gmr::{self, PriorSample};
use crate::gp::{GpTraining, JointGp};
use crate::hgmm::HgmmModel;
use crate::kernel::KernelParams;
use crate::{DistanceField, Prediction};

pub const MAX_OCTREE_DEPTH: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FieldConfig {
    pub kernel: KernelParams,
    /// Active mixture components per query.
    pub active: usize,
    pub gradient_step: f64,
    /// Largest tolerated mixture residual at a hit before it becomes a GP
    /// training point.
    pub discrepancy: f64,
    /// Owned points per octree block.
    pub capacity: usize,
    pub halo: f64,
    pub sigma_floor: f64,
}

impl Default for FieldConfig {
    fn default() -> Self {
        let kernel = KernelParams::default();
        Self {
            kernel,
            active: gmr::DEFAULT_ACTIVE,
            gradient_step: gmr::DEFAULT_GRADIENT_STEP,
            discrepancy: 0.02,
            capacity: 100,
            halo: 0.5 * kernel.length_scale,
            sigma_floor: 1e-4,
        }
    }
}

impl FieldConfig {
    pub fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        if self.active == 0 {
            return Err(invalid("active component count must be at least 1"));
        }
        if !(self.gradient_step > 0.0) {
            return Err(invalid("gradient step must be positive"));
        }
        if !(self.discrepancy > 0.0) {
            return Err(invalid("discrepancy threshold must be positive"));
        }
        if self.capacity == 0 {
            return Err(invalid("block capacity must be at least 1"));
        }
        if !(self.halo >= 0.0) {
            return Err(invalid("halo must be non-negative"));
        }
        if !(self.sigma_floor > 0.0) {
            return Err(invalid("sigma floor must be positive"));
        }
        Ok(())
    }
}

/// Hits whose mixture residual exceeds `discrepancy`, with their indices.
pub fn select_training_points(
    hgmm: &HgmmModel,
    cloud: &OrientedPointCloud,
    discrepancy: f64,
    active: usize,
) -> Result<(OrientedPointCloud, Vec<usize>)> {
    if !(discrepancy > 0.0) {
        return Err(invalid("discrepancy threshold must be positive"));
    }
    if !cloud.has_normals() {
        return Err(Error::MissingNormals((0..cloud.len()).collect()));
    }
    let mut picked = Vec::new();
    for (i, p) in cloud.points.iter().enumerate() {
        if gmr::regress(hgmm, p, active)?.mean.abs() > discrepancy {
            picked.push(i);
        }
    }
    Ok((cloud.select(&picked), picked))
}

#[derive(Clone, Debug, PartialEq)]
pub struct OctreeNode {
    pub region: Aabb,
    pub depth: usize,
    /// Child node ids by octant, absent at leaves.
    pub children: Option<[usize; 8]>,
    /// Leaf id for leaves.
    pub leaf: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Octree {
    pub nodes: Vec<OctreeNode>,
    pub leaf_regions: Vec<Aabb>,
}

impl Octree {
    /// Deepest leaf containing `x`, or the nearest leaf when `x` lies outside
    /// the root box.
    pub fn locate(&self, x: &Vector3<f64>) -> Option<usize> {
        let root = self.nodes.first()?;
        if !root.region.contains(x) {
            let mut best = (f64::INFINITY, 0);
            for (i, r) in self.leaf_regions.iter().enumerate() {
                let d = r.distance(x);
                if d < best.0 {
                    best = (d, i);
                }
            }
            return Some(best.1);
        }
        let mut node = root;
        loop {
            match node.children {
                Some(children) => node = &self.nodes[children[node.region.octant_of(x)]],
                None => return node.leaf,
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockRegion {
    pub region: Aabb,
    pub owned: Vec<usize>,
    /// Points from neighboring leaves within the halo of `region`.
    pub context: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockLayout {
    pub octree: Octree,
    pub blocks: Vec<BlockRegion>,
    /// Leaves left above capacity because the depth limit was reached.
    pub overfull: usize,
}

/// Recursive octant subdivision until every leaf owns at most `capacity`
/// points, then halo context collection.
pub fn build_blocks(points: &[Vector3<f64>], capacity: usize, halo: f64, bounds: Aabb) -> Result<BlockLayout> {
    if capacity == 0 {
        return Err(invalid("block capacity must be at least 1"));
    }
    if let Some(i) = points.iter().position(|p| !bounds.contains(p)) {
        return Err(invalid(alloc::format!("point {i} lies outside the octree bounds")));
    }
    let mut layout = BlockLayout {
        octree: Octree::default(),
        blocks: Vec::new(),
        overfull: 0,
    };
    subdivide(points, (0..points.len()).collect(), bounds, 0, capacity, &mut layout);
    for block in &mut layout.blocks {
        let owned = &block.owned;
        block.context = (0..points.len())
            .filter(|i| owned.binary_search(i).is_err() && block.region.distance(&points[*i]) <= halo)
            .collect();
    }
    layout.octree.leaf_regions = layout.blocks.iter().map(|b| b.region).collect();
    Ok(layout)
}

fn subdivide(
    points: &[Vector3<f64>],
    members: Vec<usize>,
    region: Aabb,
    depth: usize,
    capacity: usize,
    layout: &mut BlockLayout,
) -> usize {
    let id = layout.octree.nodes.len();
    layout.octree.nodes.push(OctreeNode {
        region,
        depth,
        children: None,
        leaf: None,
    });
    if members.len() <= capacity || depth >= MAX_OCTREE_DEPTH {
        if members.len() > capacity {
            layout.overfull += 1;
        }
        layout.octree.nodes[id].leaf = Some(layout.blocks.len());
        layout.blocks.push(BlockRegion {
            region,
            owned: members,
            context: Vec::new(),
        });
        return id;
    }
    let mut parts: [Vec<usize>; 8] = Default::default();
    for i in members {
        parts[region.octant_of(&points[i])].push(i);
    }
    let mut children = [0usize; 8];
    for (octant, part) in parts.into_iter().enumerate() {
        children[octant] = subdivide(points, part, region.octant(octant), depth + 1, capacity, layout);
    }
    layout.octree.nodes[id].children = Some(children);
    id
}

/// One octree block: its region and GP, or no GP when the block has no
/// points or its system could not be factorized.
#[derive(Clone, Debug, PartialEq)]
pub struct GpBlock {
    pub region: Aabb,
    /// The first `owned` training points belong to this block; the rest are
    /// halo context.
    pub owned: usize,
    pub gp: Option<JointGp>,
}

impl GpBlock {
    pub fn is_prior_only(&self) -> bool {
        self.gp.is_none()
    }
}

/// Prior terms for a set of points, with `σ_p` floored.
pub fn prior_training(
    hgmm: &HgmmModel,
    points: &[Vector3<f64>],
    normals: &[Vector3<f64>],
    config: &FieldConfig,
) -> Result<GpTraining> {
    let samples = points
        .iter()
        .map(|p| gmr::prior_sample(hgmm, p, config.active, config.gradient_step))
        .collect::<Result<Vec<PriorSample>>>()?;
    Ok(training_from_priors(points, normals, &samples, config.sigma_floor))
}

fn training_from_priors(
    points: &[Vector3<f64>],
    normals: &[Vector3<f64>],
    priors: &[PriorSample],
    sigma_floor: f64,
) -> GpTraining {
    GpTraining {
        points: points.to_vec(),
        values: vec![0.0; points.len()],
        gradients: Some(normals.to_vec()),
        prior_means: priors.iter().map(|p| p.mean).collect(),
        prior_gradients: priors.iter().map(|p| p.gradient).collect(),
        prior_scales: priors.iter().map(|p| libm::sqrt(p.variance).max(sigma_floor)).collect(),
    }
}

/// Fits one block on `points` (owned first, then context) with their unit
/// normals. A block whose system cannot be factorized becomes prior-only.
pub fn fit_block(
    region: Aabb,
    points: &[Vector3<f64>],
    normals: &[Vector3<f64>],
    owned: usize,
    hgmm: &HgmmModel,
    config: &FieldConfig,
) -> Result<GpBlock> {
    if points.is_empty() {
        return Err(Error::EmptyInput("block has no points".into()));
    }
    let training = prior_training(hgmm, points, normals, config)?;
    block_from_training(region, owned, training, &config.kernel)
}

fn block_from_training(region: Aabb, owned: usize, training: GpTraining, kernel: &KernelParams) -> Result<GpBlock> {
    let gp = match JointGp::fit(training, *kernel) {
        Ok(gp) => Some(gp),
        Err(Error::Factorization(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(GpBlock { region, owned, gp })
}

/// Fitted field: octree of GP blocks over the mixture prior.
#[derive(Clone, Debug, PartialEq)]
pub struct GpFieldModel {
    pub octree: Octree,
    pub blocks: Vec<GpBlock>,
    pub hgmm: HgmmModel,
    pub config: FieldConfig,
}

/// Fits the field on already-selected training hits.
pub fn fit_field(hgmm: HgmmModel, selected: &OrientedPointCloud, config: &FieldConfig) -> Result<GpFieldModel> {
    config.validate()?;
    let normals = selected.unit_normals()?;
    let bounds = match selected.bounds() {
        Some(b) => cubify(&b.expanded(1e-9)),
        None => {
            // nothing to refine: one prior-only block around the mixture
            let means: Vec<Vector3<f64>> = hgmm.leaves.iter().map(|c| c.spatial_mean()).collect();
            let b = Aabb::from_points(&means).ok_or_else(|| Error::EmptyInput("model has no components".into()))?;
            let octree = Octree {
                nodes: vec![OctreeNode {
                    region: b,
                    depth: 0,
                    children: None,
                    leaf: Some(0),
                }],
                leaf_regions: vec![b],
            };
            return Ok(GpFieldModel {
                octree,
                blocks: vec![GpBlock {
                    region: b,
                    owned: 0,
                    gp: None,
                }],
                hgmm,
                config: *config,
            });
        }
    };
    let layout = build_blocks(&selected.points, config.capacity, config.halo, bounds)?;
    let priors = selected
        .points
        .iter()
        .map(|p| gmr::prior_sample(&hgmm, p, config.active, config.gradient_step))
        .collect::<Result<Vec<PriorSample>>>()?;

    let mut blocks = Vec::with_capacity(layout.blocks.len());
    for region in &layout.blocks {
        let ids: Vec<usize> = region.owned.iter().chain(&region.context).copied().collect();
        if ids.is_empty() {
            blocks.push(GpBlock {
                region: region.region,
                owned: 0,
                gp: None,
            });
            continue;
        }
        let pts: Vec<Vector3<f64>> = ids.iter().map(|&i| selected.points[i]).collect();
        let nrm: Vec<Vector3<f64>> = ids.iter().map(|&i| normals[i]).collect();
        let pri: Vec<PriorSample> = ids.iter().map(|&i| priors[i]).collect();
        let training = training_from_priors(&pts, &nrm, &pri, config.sigma_floor);
        blocks.push(block_from_training(
            region.region,
            region.owned.len(),
            training,
            &config.kernel,
        )?);
    }
    Ok(GpFieldModel {
        octree: layout.octree,
        blocks,
        hgmm,
        config: *config,
    })
}

/// Smallest cube sharing the box center that contains it.
fn cubify(b: &Aabb) -> Aabb {
    let half = b.extent().max() * 0.5;
    let c = b.center();
    Aabb::new(c - Vector3::repeat(half), c + Vector3::repeat(half))
}

impl GpFieldModel {
    pub fn block_of(&self, x: &Vector3<f64>) -> Result<&GpBlock> {
        let leaf = self
            .octree
            .locate(x)
            .ok_or_else(|| Error::State("field has no blocks".into()))?;
        Ok(&self.blocks[leaf])
    }

    pub fn training_point_count(&self) -> usize {
        self.blocks.iter().map(|b| b.owned).sum()
    }
}

impl DistanceField for GpFieldModel {
    fn predict_mean(&self, x: &Vector3<f64>) -> Result<f64> {
        let block = self.block_of(x)?;
        let prior = gmr::regress(&self.hgmm, x, self.config.active)?;
        Ok(match &block.gp {
            Some(gp) => gp.predict_mean(x, prior.mean, libm::sqrt(prior.variance).max(self.config.sigma_floor)),
            None => prior.mean,
        })
    }

    fn predict(&self, x: &Vector3<f64>) -> Result<Prediction> {
        let block = self.block_of(x)?;
        let prior = gmr::regress(&self.hgmm, x, self.config.active)?;
        let noise = self.config.kernel.value_noise * self.config.kernel.value_noise;
        Ok(match &block.gp {
            Some(gp) => gp.predict(x, prior.mean, libm::sqrt(prior.variance).max(self.config.sigma_floor)),
            None => Prediction {
                mean: prior.mean,
                variance: prior.variance + noise,
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::seeded_rng;
    use rand::Rng;

    #[test]
    fn cube_corners_split_into_eight() {
        let mut pts = Vec::new();
        for i in 0..8 {
            pts.push(Vector3::new((i & 1) as f64, (i >> 1 & 1) as f64, (i >> 2 & 1) as f64));
        }
        let bounds = Aabb::new(Vector3::zeros(), Vector3::repeat(1.0));
        let layout = build_blocks(&pts, 1, 0.0, bounds).unwrap();
        assert_eq!(layout.blocks.len(), 8);
        for b in &layout.blocks {
            assert_eq!(b.owned.len(), 1);
            assert!(b.context.is_empty());
        }
    }

    #[test]
    fn capacity_above_count_gives_single_leaf() {
        let pts = [Vector3::zeros(), Vector3::new(0.5, 0.5, 0.5)];
        let bounds = Aabb::new(Vector3::zeros(), Vector3::repeat(1.0));
        let layout = build_blocks(&pts, 2, 0.1, bounds).unwrap();
        assert_eq!(layout.blocks.len(), 1);
        assert_eq!(layout.octree.locate(&Vector3::new(0.2, 0.9, 0.1)), Some(0));
    }

    #[test]
    fn random_layout_respects_capacity_and_halo() {
        let mut rng = seeded_rng(12);
        let pts: Vec<_> = (0..2000)
            .map(|_| {
                Vector3::new(
                    rng.random::<f64>() * 4.0,
                    rng.random::<f64>() * 4.0,
                    rng.random::<f64>() * 4.0,
                )
            })
            .collect();
        let bounds = Aabb::new(Vector3::zeros(), Vector3::repeat(4.0));
        let layout = build_blocks(&pts, 300, 0.5, bounds).unwrap();
        let mut owner = vec![usize::MAX; pts.len()];
        for (li, b) in layout.blocks.iter().enumerate() {
            assert!(b.owned.len() <= 300);
            for &i in &b.owned {
                assert_eq!(owner[i], usize::MAX);
                owner[i] = li;
                assert!(b.region.contains(&pts[i]));
            }
            for &i in &b.context {
                assert!(b.region.distance(&pts[i]) <= 0.5);
                assert!(!b.owned.contains(&i));
            }
            // every halo neighbor was collected
            let expect = (0..pts.len())
                .filter(|i| !b.owned.contains(i) && b.region.distance(&pts[*i]) <= 0.5)
                .count();
            assert_eq!(b.context.len(), expect);
        }
        assert!(owner.iter().all(|&o| o != usize::MAX));
        for (i, p) in pts.iter().enumerate() {
            assert_eq!(layout.octree.locate(p), Some(owner[i]));
        }
    }

    #[test]
    fn duplicates_stop_at_depth_limit() {
        let pts = vec![Vector3::new(0.3, 0.3, 0.3); 5];
        let bounds = Aabb::new(Vector3::zeros(), Vector3::repeat(1.0));
        let layout = build_blocks(&pts, 2, 0.0, bounds).unwrap();
        assert_eq!(layout.overfull, 1);
        assert!(layout.octree.nodes.iter().all(|n| n.depth <= MAX_OCTREE_DEPTH));
    }

    #[test]
    fn out_of_bounds_points_rejected() {
        let bounds = Aabb::new(Vector3::zeros(), Vector3::repeat(1.0));
        assert!(build_blocks(&[Vector3::repeat(2.0)], 1, 0.0, bounds).is_err());
        assert!(build_blocks(&[], 0, 0.0, bounds).is_err());
    }
}
