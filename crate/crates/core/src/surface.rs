//! Regular-grid sampling of a distance field and zero-level extraction with
//! marching cubes.

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::Vector3;

use crate::error::{invalid, Error, Result};
use crate::geometry::Aabb;
use crate::mc_tables::{CaseTable, EDGES};
use crate::spatial::KdTree;
use crate::DistanceField;

/// Node values and variances on an axis-aligned grid, x fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarGrid {
    pub origin: Vector3<f64>,
    pub spacing: f64,
    pub dims: [usize; 3],
    pub values: Vec<f64>,
    pub variances: Vec<f64>,
}

/// Nodes per axis, `floor(extent / spacing) + 1`.
pub fn grid_dims(bounds: &Aabb, spacing: f64) -> Result<[usize; 3]> {
    if !(spacing > 0.0) || !spacing.is_finite() {
        return Err(invalid("grid spacing must be positive"));
    }
    let e = bounds.extent();
    if !bounds.is_valid() || e.iter().any(|v| !(*v > 0.0)) {
        return Err(invalid("grid bounds are degenerate"));
    }
    let mut dims = [0; 3];
    for a in 0..3 {
        // tolerate extents that are a multiple of the spacing up to rounding
        let cells = libm::floor(e[a] / spacing + 1e-9);
        if cells > 1e7 {
            return Err(invalid("grid too large"));
        }
        dims[a] = cells as usize + 1;
        if dims[a] < 2 {
            return Err(invalid("grid needs at least two nodes per axis"));
        }
    }
    Ok(dims)
}

impl ScalarGrid {
    /// An all-zero grid covering `bounds` from its lower corner.
    pub fn new(bounds: &Aabb, spacing: f64) -> Result<Self> {
        let dims = grid_dims(bounds, spacing)?;
        let n = dims[0] * dims[1] * dims[2];
        Ok(Self {
            origin: bounds.min,
            spacing,
            dims,
            values: vec![0.0; n],
            variances: vec![0.0; n],
        })
    }

    pub fn node_count(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    /// Grid coordinates of the node at a flat index.
    pub fn unflatten(&self, idx: usize) -> [usize; 3] {
        let i = idx % self.dims[0];
        let j = idx / self.dims[0] % self.dims[1];
        let k = idx / (self.dims[0] * self.dims[1]);
        [i, j, k]
    }

    pub fn node(&self, i: usize, j: usize, k: usize) -> Vector3<f64> {
        self.origin + Vector3::new(i as f64, j as f64, k as f64) * self.spacing
    }

    pub fn node_at(&self, idx: usize) -> Vector3<f64> {
        let [i, j, k] = self.unflatten(idx);
        self.node(i, j, k)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.iter().any(|d| *d < 2) {
            return Err(invalid("grid needs at least two nodes per axis"));
        }
        let n = self.node_count();
        if self.values.len() != n || self.variances.len() != n {
            return Err(invalid("grid arrays do not match dimensions"));
        }
        if !(self.spacing > 0.0) {
            return Err(invalid("grid spacing must be positive"));
        }
        Ok(())
    }
}

/// Evaluates `field` at every node. Errors carry the node position.
pub fn sample_grid<F: DistanceField + ?Sized>(field: &F, bounds: &Aabb, spacing: f64) -> Result<ScalarGrid> {
    let mut grid = ScalarGrid::new(bounds, spacing)?;
    for idx in 0..grid.node_count() {
        let x = grid.node_at(idx);
        let p = field.predict(&x).map_err(|e| at_point(&x, e))?;
        grid.values[idx] = p.mean;
        grid.variances[idx] = p.variance;
    }
    Ok(grid)
}

/// Like [`sample_grid`], but runs the full prediction (with its variance
/// solve) only at corners of cells the `iso` level crosses. Every other
/// node gets the mean alone and a NaN variance. Nodes with `observed[idx]`
/// false are not evaluated and get NaN for both.
pub fn sample_grid_near_surface<F: DistanceField + ?Sized>(
    field: &F,
    bounds: &Aabb,
    spacing: f64,
    iso: f64,
    observed: Option<&[bool]>,
) -> Result<ScalarGrid> {
    let mut grid = ScalarGrid::new(bounds, spacing)?;
    check_mask(&grid, observed)?;
    for idx in 0..grid.node_count() {
        if observed.is_some_and(|m| !m[idx]) {
            grid.values[idx] = f64::NAN;
            continue;
        }
        let x = grid.node_at(idx);
        grid.values[idx] = field.predict_mean(&x).map_err(|e| at_point(&x, e))?;
    }
    grid.variances.iter_mut().for_each(|v| *v = f64::NAN);
    for idx in crossing_nodes(&grid, iso) {
        let x = grid.node_at(idx);
        let p = field.predict(&x).map_err(|e| at_point(&x, e))?;
        grid.values[idx] = p.mean;
        grid.variances[idx] = p.variance;
    }
    Ok(grid)
}

pub fn check_mask(grid: &ScalarGrid, observed: Option<&[bool]>) -> Result<()> {
    match observed {
        Some(m) if m.len() != grid.node_count() => Err(invalid("observation mask does not match the grid")),
        _ => Ok(()),
    }
}

/// Marks nodes within `radius` of some support point. Space farther from
/// every measurement is unobserved; the mixture prior extrapolates poorly
/// there and may produce spurious level sets.
pub fn observed_nodes(grid: &ScalarGrid, support: &[Vector3<f64>], radius: f64) -> Result<Vec<bool>> {
    if !(radius > 0.0) {
        return Err(invalid("support radius must be positive"));
    }
    if support.is_empty() {
        return Err(Error::EmptyInput("support point set is empty".into()));
    }
    let tree = KdTree::new(support);
    (0..grid.node_count())
        .map(|idx| {
            let x = grid.node_at(idx);
            Ok(tree.knn(&x, 1)?[0].1 <= radius)
        })
        .collect()
}

/// Sorted indices of nodes that are corners of at least one cell whose
/// corners straddle `iso`. Cells with a NaN corner are ignored.
pub fn crossing_nodes(grid: &ScalarGrid, iso: f64) -> Vec<usize> {
    let [nx, ny, nz] = grid.dims;
    let mut mark = vec![false; grid.node_count()];
    for k in 0..nz.saturating_sub(1) {
        for j in 0..ny.saturating_sub(1) {
            for i in 0..nx.saturating_sub(1) {
                let mut below = 0;
                let mut unobserved = false;
                let mut ids = [0usize; 8];
                for (c, id) in ids.iter_mut().enumerate() {
                    *id = grid.index(i + (c & 1), j + (c >> 1 & 1), k + (c >> 2 & 1));
                    let v = grid.values[*id];
                    unobserved |= v.is_nan();
                    if v < iso {
                        below += 1;
                    }
                }
                if !unobserved && below != 0 && below != 8 {
                    ids.iter().for_each(|&id| mark[id] = true);
                }
            }
        }
    }
    (0..mark.len()).filter(|&i| mark[i]).collect()
}

pub fn at_point(x: &Vector3<f64>, source: Error) -> Error {
    Error::AtPoint {
        x: x.x,
        y: x.y,
        z: x.z,
        source: Box::new(source),
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<Vector3<f64>>,
    pub triangles: Vec<[usize; 3]>,
    pub vertex_variance: Vec<f64>,
}

impl TriangleMesh {
    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    /// Number of triangles using each undirected edge.
    pub fn edge_counts(&self) -> BTreeMap<(usize, usize), usize> {
        let mut count = BTreeMap::new();
        for t in &self.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                *count.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        count
    }

    /// Every edge shared by exactly two triangles.
    pub fn is_watertight(&self) -> bool {
        !self.triangles.is_empty() && self.edge_counts().values().all(|c| *c == 2)
    }
}

/// Extracts the `iso` level set. Nodes strictly below `iso` count as inside.
///
/// Each crossed grid edge yields one vertex, shared by all cells touching
/// that edge; vertices appear in the order cells are visited (x fastest).
/// Cells with a NaN corner are treated as unobserved and skipped.
pub fn marching_cubes(grid: &ScalarGrid, iso: f64) -> Result<TriangleMesh> {
    grid.validate()?;
    if grid.values.iter().any(|v| v.is_infinite()) {
        return Err(invalid("grid contains infinite values"));
    }
    let table = CaseTable::build();
    let [nx, ny, nz] = grid.dims;
    let n = grid.node_count();
    // vertex id per (node, axis) of the edge leaving the node in +axis
    let mut edge_vertex = vec![u32::MAX; 3 * n];
    let mut mesh = TriangleMesh::default();

    let offsets = |c: usize| [c & 1, c >> 1 & 1, c >> 2 & 1];

    for k in 0..nz - 1 {
        for j in 0..ny - 1 {
            for i in 0..nx - 1 {
                let mut corner = [0usize; 8];
                let mut case = 0;
                let mut unobserved = false;
                for (c, slot) in corner.iter_mut().enumerate() {
                    let o = offsets(c);
                    *slot = grid.index(i + o[0], j + o[1], k + o[2]);
                    let v = grid.values[*slot];
                    unobserved |= v.is_nan();
                    if v < iso {
                        case |= 1 << c;
                    }
                }
                if unobserved {
                    continue;
                }
                let tris = &table.cases[case];
                if tris.is_empty() {
                    continue;
                }
                let mut local = [usize::MAX; 12];
                for tri in tris {
                    let mut out = [0usize; 3];
                    for (slot, &e) in out.iter_mut().zip(tri) {
                        let e = e as usize;
                        if local[e] == usize::MAX {
                            local[e] = edge_vertex_id(grid, &corner, e, iso, &mut edge_vertex, &mut mesh);
                        }
                        *slot = local[e];
                    }
                    mesh.triangles.push(out);
                }
            }
        }
    }
    Ok(mesh)
}

fn edge_vertex_id(
    grid: &ScalarGrid,
    corner: &[usize; 8],
    edge: usize,
    iso: f64,
    edge_vertex: &mut [u32],
    mesh: &mut TriangleMesh,
) -> usize {
    let (ca, cb) = EDGES[edge];
    // corners differ in exactly one bit; that bit is the axis
    let axis = (ca ^ cb).trailing_zeros() as usize;
    let (lo, hi) = if ca < cb {
        (corner[ca], corner[cb])
    } else {
        (corner[cb], corner[ca])
    };
    let key = 3 * lo + axis;
    if edge_vertex[key] != u32::MAX {
        return edge_vertex[key] as usize;
    }
    let (va, vb) = (grid.values[lo], grid.values[hi]);
    let t = ((iso - va) / (vb - va)).clamp(0.0, 1.0);
    let pa = grid.node_at(lo);
    let mut p = pa;
    p[axis] += t * grid.spacing;
    let id = mesh.vertices.len();
    mesh.vertices.push(p);
    mesh.vertex_variance
        .push((1.0 - t) * grid.variances[lo] + t * grid.variances[hi]);
    edge_vertex[key] = id as u32;
    id
}
