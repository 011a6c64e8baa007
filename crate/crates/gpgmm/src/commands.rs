//! The command implementations behind the `gpgmm` binary.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use gpgmm_core::evaluation::{training_cloud, BenchmarkOutput, BenchmarkSpec};
use gpgmm_core::pipeline::{fit_method, leaves_per_depth, FitOutcome, FittedModel, Method};
use gpgmm_core::surface::{marching_cubes, observed_nodes, ScalarGrid, TriangleMesh};
use gpgmm_core::{Aabb, ShapeSpec, Vector3};

use crate::config::Settings;
use crate::error::{Error, Result};
use crate::{cloud_io, grid_io, mesh_io, model_io, parallel, report, scene};

pub fn synth(shape: &ShapeSpec, n: usize, noise: f64, seed: u64, out: &Path) -> Result<()> {
    if n == 0 {
        return Err(Error::Config("point count must be positive".into()));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::Config("noise must be non-negative".into()));
    }
    let spec = BenchmarkSpec {
        noise,
        seed,
        estimate_normals: false,
        ..BenchmarkSpec::new(shape.clone(), n, 1)
    };
    let cloud = training_cloud(&spec)?;
    cloud_io::write_cloud(out, &cloud)?;
    scene::write_manifest(
        &scene::manifest_path(out),
        &scene::TruthManifest {
            points: n,
            noise,
            seed,
            shape: scene::ShapeDesc::from_spec(shape),
        },
    )
}

/// Fit result plus the timings that go into the log.
pub struct FitRun {
    pub outcome: FitOutcome,
    pub input_points: usize,
    pub gmm_seconds: Option<f64>,
    pub total_seconds: f64,
}

pub fn fit_cloud(cloud: &gpgmm_core::OrientedPointCloud, method: Method, settings: &Settings) -> Result<FitRun> {
    let start = Instant::now();
    let mut gmm = None;
    let outcome = fit_method(method, cloud, &settings.pipeline, &mut || {
        gmm = Some(start.elapsed().as_secs_f64())
    })?;
    Ok(FitRun {
        outcome,
        input_points: cloud.len(),
        gmm_seconds: gmm,
        total_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Human-readable `key: value` summary of a fit.
pub fn fit_log(run: &FitRun) -> String {
    let mut s = String::new();
    let o = &run.outcome;
    let _ = writeln!(s, "method: {}", o.model.method().as_str());
    let _ = writeln!(s, "input_points: {}", run.input_points);
    let _ = writeln!(s, "training_points: {}", o.training_points);
    let hgmm = match &o.model {
        FittedModel::Gmm(m) => Some(&m.model),
        FittedModel::Gpgmm(f) => Some(&f.hgmm),
        FittedModel::Baseline(_) => None,
    };
    if let Some(h) = hgmm {
        let _ = writeln!(s, "leaf_components: {}", h.leaves.len());
        let per: Vec<String> = leaves_per_depth(h).iter().map(usize::to_string).collect();
        let _ = writeln!(s, "leaves_per_depth: {}", per.join(" "));
    }
    if let FittedModel::Gpgmm(f) = &o.model {
        let _ = writeln!(s, "blocks: {}", f.blocks.len());
        let _ = writeln!(
            s,
            "prior_only_blocks: {}",
            f.blocks.iter().filter(|b| b.is_prior_only()).count()
        );
    }
    if let Some(sel) = &o.selection {
        let _ = writeln!(s, "selected_points: {}", sel.selected);
        let _ = writeln!(s, "candidate_points: {}", sel.total);
        let _ = writeln!(s, "selected_fraction: {}", sel.fraction());
    }
    if let Some(g) = run.gmm_seconds {
        let _ = writeln!(s, "fit_gmm_seconds: {g}");
        if o.model.method() == Method::Gpgmm {
            let _ = writeln!(s, "fit_gp_seconds: {}", run.total_seconds - g);
        }
    }
    let _ = writeln!(s, "fit_seconds: {}", run.total_seconds);
    s
}

pub fn log_path(model: &Path) -> PathBuf {
    let mut s = model.as_os_str().to_owned();
    s.push(".log");
    PathBuf::from(s)
}

pub fn fit(input: &Path, method: Method, settings: &Settings, out: &Path) -> Result<FitRun> {
    let cloud = cloud_io::read_cloud(input)?;
    let run = fit_cloud(&cloud, method, settings)?;
    model_io::write_model(out, &run.outcome.model)?;
    let log = log_path(out);
    fs::write(&log, fit_log(&run)).map_err(|e| Error::io(&log, e))?;
    Ok(run)
}

pub fn format_predictions(queries: &[gpgmm_core::Vector3<f64>], preds: &[gpgmm_core::Prediction]) -> String {
    let mut s = String::from("x,y,z,mean,variance\n");
    for (q, p) in queries.iter().zip(preds) {
        let _ = writeln!(s, "{},{},{},{},{}", q.x, q.y, q.z, p.mean, p.variance);
    }
    s
}

pub fn query(model: &Path, points: &Path, out: &Path) -> Result<usize> {
    let model = model_io::read_model(model)?;
    let cloud = cloud_io::read_cloud(points)?;
    let preds = parallel::predict_all(&model, &cloud.points)?;
    fs::write(out, format_predictions(&cloud.points, &preds)).map_err(|e| Error::io(out, e))?;
    Ok(preds.len())
}

/// Mesh bounds when none are configured: the model's extent plus a margin.
pub fn default_bounds(model: &FittedModel, spacing: f64) -> Result<Aabb> {
    let b = model_io::model_bounds(model)
        .ok_or_else(|| Error::Config("model has no spatial extent; give grid_min and grid_max".into()))?;
    let e = b.extent();
    Ok(b.expanded(0.1 * e.max() + 2.0 * spacing))
}

/// Samples `model` and extracts its zero level set. With `support`, nodes
/// farther than `radius` from every support point are left out.
pub fn mesh_model(
    model: &FittedModel,
    bounds: &Aabb,
    spacing: f64,
    support: Option<(&[Vector3<f64>], f64)>,
) -> Result<(ScalarGrid, TriangleMesh)> {
    let mask = match support {
        Some((points, radius)) => Some(observed_nodes(&ScalarGrid::new(bounds, spacing)?, points, radius)?),
        None => None,
    };
    let grid = parallel::sample_grid_near_surface(model, bounds, spacing, 0.0, mask.as_deref())?;
    let mesh = marching_cubes(&grid, 0.0)?;
    Ok((grid, mesh))
}

pub fn mesh(
    model: &Path,
    settings: &Settings,
    support: Option<&Path>,
    out: &Path,
    grid_out: Option<&Path>,
) -> Result<TriangleMesh> {
    let model = model_io::read_model(model)?;
    let support = support.map(cloud_io::read_cloud).transpose()?;
    let spacing = settings.grid.spacing;
    let bounds = match settings.grid.bounds {
        Some(b) => b,
        None => default_bounds(&model, spacing)?,
    };
    let support = support
        .as_ref()
        .map(|c| (c.points.as_slice(), settings.grid.support_radius));
    let (grid, mesh) = mesh_model(&model, &bounds, spacing, support)?;
    mesh_io::write_mesh(out, &mesh)?;
    if let Some(g) = grid_out {
        grid_io::write_grid(g, &grid)?;
    }
    Ok(mesh)
}

pub fn bench(settings: &Settings, out_dir: &Path) -> Result<BenchmarkOutput> {
    let spec = report::bench_spec(settings);
    let output = report::run_timed(&spec, settings)?;
    report::write_report(out_dir, &output.report)?;
    Ok(output)
}
