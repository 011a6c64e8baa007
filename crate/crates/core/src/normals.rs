//! Surface normals from principal component analysis of k-nearest neighborhoods.

use alloc::vec::Vec;

use nalgebra::{Matrix3, SymmetricEigen, Vector3};

use crate::error::{invalid, Result};
use crate::geometry::OrientedPointCloud;
use crate::spatial::KdTree;

pub const DEFAULT_NEIGHBORS: usize = 20;

/// Estimates a unit normal for every point.
///
/// Each normal is the smallest-eigenvalue eigenvector of the scatter matrix
/// of the point's `k` nearest neighbors (the point included). It is oriented
/// towards `viewpoint` when one is given (falling back to the cloud's own
/// viewpoint), otherwise away from the neighborhood centroid. Neighborhoods
/// whose points all coincide get a null normal.
pub fn estimate_normals_pca(
    cloud: &OrientedPointCloud,
    k: usize,
    viewpoint: Option<Vector3<f64>>,
) -> Result<OrientedPointCloud> {
    if k < 3 {
        return Err(invalid("PCA normals need k >= 3"));
    }
    if cloud.len() < k {
        return Err(invalid("fewer points than the neighbor count"));
    }
    let viewpoint = viewpoint.or(cloud.viewpoint);
    let tree = KdTree::new(&cloud.points);
    let mut normals = Vec::with_capacity(cloud.len());
    for p in &cloud.points {
        let nbrs = tree.knn(p, k)?;
        let neighborhood: Vec<Vector3<f64>> = nbrs.iter().map(|&(i, _)| cloud.points[i]).collect();
        normals.push(neighborhood_normal(p, &neighborhood, viewpoint));
    }
    Ok(OrientedPointCloud {
        points: cloud.points.clone(),
        normals: Some(normals),
        viewpoint,
    })
}

/// Oriented PCA normal of one neighborhood, `None` when degenerate.
pub fn neighborhood_normal(
    point: &Vector3<f64>,
    neighborhood: &[Vector3<f64>],
    viewpoint: Option<Vector3<f64>>,
) -> Option<Vector3<f64>> {
    let count = neighborhood.len() as f64;
    let centroid = neighborhood.iter().sum::<Vector3<f64>>() / count;
    let mut scatter = Matrix3::zeros();
    for q in neighborhood {
        let d = q - centroid;
        scatter += d * d.transpose();
    }
    scatter /= count;
    let scale = 1.0 + centroid.norm_squared();
    if scatter.trace() <= 1e-14 * scale {
        return None;
    }

    let eig = SymmetricEigen::new(scatter);
    let min = eig.eigenvalues.min();
    let tie = 1e-9 * eig.eigenvalues.abs().sum();
    let mut best: Option<Vector3<f64>> = None;
    for i in 0..3 {
        if eig.eigenvalues[i] - min > tie {
            continue;
        }
        let v: Vector3<f64> = eig.eigenvectors.column(i).normalize();
        best = Some(match best {
            Some(b) if !lex_greater_abs(&v, &b) => b,
            _ => v,
        });
    }
    let mut n = best?;

    let reference = match viewpoint {
        Some(vp) => vp - point,
        None => point - centroid,
    };
    let s = n.dot(&reference);
    if s < 0.0 || (s == 0.0 && n[n.iamax()] < 0.0) {
        n = -n;
    }
    Some(n)
}

fn lex_greater_abs(a: &Vector3<f64>, b: &Vector3<f64>) -> bool {
    for i in 0..3 {
        let (x, y) = (a[i].abs(), b[i].abs());
        if (x - y).abs() > 1e-12 {
            return x > y;
        }
    }
    false
}
