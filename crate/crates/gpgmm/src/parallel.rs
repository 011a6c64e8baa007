//! Data-parallel prediction over query sets and grids.
//!
//! Results are collected in input order, so output is identical to the
//! sequential path regardless of thread count.

use gpgmm_core::surface::{at_point, check_mask, crossing_nodes, ScalarGrid};
use gpgmm_core::{Aabb, DistanceField, Prediction, Vector3};
use rayon::prelude::*;

use crate::error::Result;

pub fn predict_all<F: DistanceField + Sync + ?Sized>(field: &F, queries: &[Vector3<f64>]) -> Result<Vec<Prediction>> {
    let out: gpgmm_core::Result<Vec<Prediction>> = queries
        .par_iter()
        .map(|x| field.predict(x).map_err(|e| at_point(x, e)))
        .collect();
    Ok(out?)
}

/// Parallel form of `gpgmm_core::surface::sample_grid_near_surface`.
pub fn sample_grid_near_surface<F: DistanceField + Sync + ?Sized>(
    field: &F,
    bounds: &Aabb,
    spacing: f64,
    iso: f64,
    observed: Option<&[bool]>,
) -> Result<ScalarGrid> {
    let mut grid = ScalarGrid::new(bounds, spacing)?;
    check_mask(&grid, observed)?;
    let g = &grid;
    let values: gpgmm_core::Result<Vec<f64>> = (0..g.node_count())
        .into_par_iter()
        .map(|idx| {
            if observed.is_some_and(|m| !m[idx]) {
                return Ok(f64::NAN);
            }
            let x = g.node_at(idx);
            field.predict_mean(&x).map_err(|e| at_point(&x, e))
        })
        .collect();
    grid.values = values?;
    grid.variances.iter_mut().for_each(|v| *v = f64::NAN);
    let nodes = crossing_nodes(&grid, iso);
    let g = &grid;
    let full: gpgmm_core::Result<Vec<Prediction>> = nodes
        .par_iter()
        .map(|&idx| {
            let x = g.node_at(idx);
            field.predict(&x).map_err(|e| at_point(&x, e))
        })
        .collect();
    for (idx, p) in nodes.into_iter().zip(full?) {
        grid.values[idx] = p.mean;
        grid.variances[idx] = p.variance;
    }
    Ok(grid)
}
