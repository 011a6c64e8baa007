//! Accuracy and uncertainty metrics against analytic ground truth, and the
//! benchmark that runs all methods on a synthetic scene.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use nalgebra::Vector3;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{invalid, Error, Result};
use crate::geometry::{seeded_rng, OrientedPointCloud, ShapeSpec};
use crate::pipeline::{fit_method, Method, PipelineConfig};
use crate::{DistanceField, FieldType};

pub const DEFAULT_BIN_EDGES: [f64; 8] = [0.0, 0.025, 0.05, 0.1, 0.15, 0.2, 0.3, 0.5];

#[derive(Clone, Debug, PartialEq)]
pub struct PredictionRecord {
    pub query: Vector3<f64>,
    pub truth: f64,
    pub mean: f64,
    pub variance: f64,
    pub method: Method,
    pub field_type: FieldType,
}

impl PredictionRecord {
    /// The unsigned view of a signed record. The variance is kept as is.
    pub fn to_edf(&self) -> Self {
        Self {
            truth: self.truth.abs(),
            mean: self.mean.abs(),
            field_type: FieldType::Edf,
            ..self.clone()
        }
    }
}

pub fn validate_edges(edges: &[f64]) -> Result<()> {
    if edges.len() < 2 {
        return Err(invalid("need at least two bin edges"));
    }
    if edges.iter().any(|e| !e.is_finite()) || edges.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(invalid("bin edges must be finite and strictly increasing"));
    }
    Ok(())
}

/// Bin holding `|truth|`, with bins closed below and open above.
pub fn bin_of(edges: &[f64], truth: f64) -> Option<usize> {
    let t = truth.abs();
    (0..edges.len() - 1).find(|&b| edges[b] <= t && t < edges[b + 1])
}

fn split_bins<'a>(records: &'a [PredictionRecord], edges: &[f64]) -> Vec<Vec<&'a PredictionRecord>> {
    let mut bins = vec![Vec::new(); edges.len() - 1];
    for r in records {
        if let Some(b) = bin_of(edges, r.truth) {
            bins[b].push(r);
        }
    }
    bins
}

fn rmse<'a>(records: impl Iterator<Item = &'a PredictionRecord>) -> Option<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for r in records {
        let e = r.mean - r.truth;
        sum += e * e;
        n += 1;
    }
    (n > 0).then(|| libm::sqrt(sum / n as f64))
}

/// Per-bin RMSE over `|truth|`; `None` for empty bins.
pub fn rmse_binned(records: &[PredictionRecord], edges: &[f64]) -> Result<Vec<Option<f64>>> {
    validate_edges(edges)?;
    Ok(split_bins(records, edges)
        .iter()
        .map(|b| rmse(b.iter().copied()))
        .collect())
}

pub fn rmse_all(records: &[PredictionRecord]) -> Option<f64> {
    rmse(records.iter())
}

/// `log N(truth | mean, variance)`.
pub fn log_likelihood(r: &PredictionRecord) -> f64 {
    let e = r.truth - r.mean;
    -0.5 * (libm::log(2.0 * PI * r.variance) + e * e / r.variance)
}

fn mean_ll<'a>(records: impl Iterator<Item = (usize, &'a PredictionRecord)>) -> Result<Option<f64>> {
    let (mut sum, mut n) = (0.0, 0usize);
    for (i, r) in records {
        if !(r.variance > 0.0) {
            return Err(Error::NonPositiveVariance {
                index: i,
                variance: r.variance,
            });
        }
        sum += log_likelihood(r);
        n += 1;
    }
    Ok((n > 0).then(|| sum / n as f64))
}

/// Average log-likelihood of the truths under independent Gaussians.
pub fn avg_loglik(records: &[PredictionRecord]) -> Result<f64> {
    mean_ll(records.iter().enumerate())?.ok_or_else(|| Error::EmptyInput("no records".into()))
}

pub fn avg_loglik_binned(records: &[PredictionRecord], edges: &[f64]) -> Result<Vec<Option<f64>>> {
    validate_edges(edges)?;
    let mut out = vec![None; edges.len() - 1];
    let indexed: Vec<(usize, &PredictionRecord)> = records.iter().enumerate().collect();
    for (b, slot) in out.iter_mut().enumerate() {
        let inside = indexed
            .iter()
            .filter(|(_, r)| bin_of(edges, r.truth) == Some(b))
            .copied();
        *slot = mean_ll(inside)?;
    }
    Ok(out)
}

/// Fraction of standardized errors within 1, 2 and 3 standard deviations.
pub fn calibration(records: &[PredictionRecord]) -> [f64; 3] {
    if records.is_empty() {
        return [0.0; 3];
    }
    let mut hits = [0usize; 3];
    for r in records {
        let e = (r.mean - r.truth).abs();
        let sd = libm::sqrt(r.variance.max(0.0));
        for (k, h) in hits.iter_mut().enumerate() {
            if e <= (k + 1) as f64 * sd {
                *h += 1;
            }
        }
    }
    hits.map(|h| h as f64 / records.len() as f64)
}

/// One CSV row of the metrics report.
#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub method: Method,
    pub field_type: FieldType,
    pub bin_lo: f64,
    pub bin_hi: f64,
    pub count: usize,
    pub rmse: Option<f64>,
    pub mean_ll: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Timing {
    pub method: Method,
    pub phase: &'static str,
    pub n_points: usize,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvalReport {
    pub edges: Vec<f64>,
    pub rows: Vec<ReportRow>,
    pub timings: Vec<Timing>,
    /// Methods that failed to fit or predict, with the error text.
    pub failures: Vec<(Method, String)>,
}

impl EvalReport {
    pub fn rows_for(&self, method: Method, field_type: FieldType) -> Vec<&ReportRow> {
        self.rows
            .iter()
            .filter(|r| r.method == method && r.field_type == field_type)
            .collect()
    }

    pub fn methods(&self) -> Vec<Method> {
        let mut m: Vec<Method> = self.rows.iter().map(|r| r.method).collect();
        m.sort();
        m.dedup();
        m
    }
}

/// Rows for every (method, field type) present in `records`, in the order
/// of first appearance.
pub fn build_rows(records: &[PredictionRecord], edges: &[f64]) -> Result<Vec<ReportRow>> {
    validate_edges(edges)?;
    let mut groups: Vec<(Method, FieldType)> = Vec::new();
    for r in records {
        if !groups.contains(&(r.method, r.field_type)) {
            groups.push((r.method, r.field_type));
        }
    }
    let mut rows = Vec::new();
    for (method, field_type) in groups {
        let group: Vec<PredictionRecord> = records
            .iter()
            .filter(|r| r.method == method && r.field_type == field_type)
            .cloned()
            .collect();
        let bins = split_bins(&group, edges);
        let ll = avg_loglik_binned(&group, edges)?;
        for (b, members) in bins.iter().enumerate() {
            rows.push(ReportRow {
                method,
                field_type,
                bin_lo: edges[b],
                bin_hi: edges[b + 1],
                count: members.len(),
                rmse: rmse(members.iter().copied()),
                mean_ll: ll[b],
            });
        }
    }
    Ok(rows)
}

/// Test locations with their true signed distance, stratified so that every
/// `|distance|` bin gets points.
///
/// A `volume_fraction` share is drawn uniformly around the shape (kept when
/// inside the binned range); the rest are surface samples pushed along the
/// normal by a random in-bin offset to either side, kept when the true
/// distance lands in the intended bin.
pub fn generate_queries<R: Rng>(
    shape: &ShapeSpec,
    edges: &[f64],
    n: usize,
    volume_fraction: f64,
    rng: &mut R,
) -> Result<Vec<(Vector3<f64>, f64)>> {
    validate_edges(edges)?;
    if !(0.0..=1.0).contains(&volume_fraction) {
        return Err(invalid("volume fraction must lie in [0, 1]"));
    }
    let top = edges[edges.len() - 1];
    if edges[0] > 0.0 {
        return Err(invalid("query bins must start at 0"));
    }
    let n_volume = libm::round(volume_fraction * n as f64) as usize;
    let n_offset = n - n_volume;
    let bins = edges.len() - 1;
    let mut out = Vec::with_capacity(n);
    for b in 0..bins {
        let want = n_offset / bins + usize::from(b < n_offset % bins);
        let mut got = 0;
        let mut attempts = 0;
        while got < want {
            attempts += 1;
            if attempts > 1000 * want {
                return Err(invalid("could not populate a distance bin"));
            }
            let (p, nrm) = shape.sample_surface(1, rng)?;
            let t = rng.random_range(edges[b]..edges[b + 1]);
            let side = if rng.random::<bool>() { 1.0 } else { -1.0 };
            let q = p[0] + nrm[0] * (side * t);
            let truth = shape.sdf(&q);
            if bin_of(edges, truth) == Some(b) {
                out.push((q, truth));
                got += 1;
            }
        }
    }
    let region = shape.bounds().expanded(top);
    let mut attempts = 0;
    let mut got = 0;
    while got < n_volume {
        attempts += 1;
        if attempts > 1000 * n_volume {
            return Err(invalid("could not sample the query volume"));
        }
        let q = Vector3::from_fn(|a, _| rng.random_range(region.min[a]..region.max[a]));
        let truth = shape.sdf(&q);
        if truth.abs() < top {
            out.push((q, truth));
            got += 1;
        }
    }
    Ok(out)
}

/// A synthetic benchmark run.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchmarkSpec {
    pub scene: ShapeSpec,
    pub n_train: usize,
    pub n_test: usize,
    /// Standard deviation of the Gaussian position noise on training hits.
    pub noise: f64,
    pub methods: Vec<Method>,
    pub seed: u64,
    pub bin_edges: Vec<f64>,
    pub volume_fraction: f64,
    /// Estimate training normals by PCA instead of using the analytic ones.
    pub estimate_normals: bool,
}

impl BenchmarkSpec {
    pub fn new(scene: ShapeSpec, n_train: usize, n_test: usize) -> Self {
        Self {
            scene,
            n_train,
            n_test,
            noise: 0.0,
            methods: Method::ALL.to_vec(),
            seed: 0,
            bin_edges: DEFAULT_BIN_EDGES.to_vec(),
            volume_fraction: 0.2,
            estimate_normals: true,
        }
    }
}

/// Report plus the raw records it was computed from.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchmarkOutput {
    pub report: EvalReport,
    pub records: Vec<PredictionRecord>,
    pub training: OrientedPointCloud,
    pub queries: Vec<(Vector3<f64>, f64)>,
}

/// Training hits for a scene: analytic samples plus position noise, with
/// either analytic normals or none (to be estimated).
pub fn training_cloud(spec: &BenchmarkSpec) -> Result<OrientedPointCloud> {
    if spec.n_train == 0 {
        return Err(Error::EmptyInput("n_train is zero".into()));
    }
    if !(spec.noise >= 0.0) {
        return Err(invalid("noise must be non-negative"));
    }
    let mut rng = seeded_rng(spec.seed);
    let (mut points, normals) = spec.scene.sample_surface(spec.n_train, &mut rng)?;
    if spec.noise > 0.0 {
        let normal = Normal::new(0.0, spec.noise).map_err(|e| invalid(e.to_string()))?;
        for p in &mut points {
            *p += Vector3::from_fn(|_, _| normal.sample(&mut rng));
        }
    }
    if spec.estimate_normals {
        Ok(OrientedPointCloud::new(points))
    } else {
        OrientedPointCloud::with_normals(points, normals)
    }
}

/// Fits every requested method and scores it on stratified queries.
///
/// `clock` returns seconds from an arbitrary origin; it only feeds the
/// timing rows. Methods that fail are listed in `failures` and skipped.
pub fn run_benchmark(
    spec: &BenchmarkSpec,
    config: &PipelineConfig,
    clock: &mut dyn FnMut() -> f64,
) -> Result<BenchmarkOutput> {
    validate_edges(&spec.bin_edges)?;
    config.validate()?;
    let training = training_cloud(spec)?;
    let mut qrng = seeded_rng(spec.seed ^ 0x5eed_0f_7e57);
    let queries = generate_queries(
        &spec.scene,
        &spec.bin_edges,
        spec.n_test,
        spec.volume_fraction,
        &mut qrng,
    )?;

    let mut report = EvalReport {
        edges: spec.bin_edges.clone(),
        ..EvalReport::default()
    };
    let mut records = Vec::new();
    for &method in &spec.methods {
        if records.iter().any(|r: &PredictionRecord| r.method == method) {
            continue;
        }
        let t0 = clock();
        let mut t_gmm = None;
        let fitted = fit_method(method, &training, config, &mut || t_gmm = Some(clock()));
        let t1 = clock();
        let outcome = match fitted {
            Ok(o) => o,
            Err(e) => {
                report.failures.push((method, e.to_string()));
                continue;
            }
        };
        let n = training.len();
        report.timings.push(Timing {
            method,
            phase: "fit",
            n_points: n,
            seconds: t1 - t0,
        });
        if let (Method::Gpgmm, Some(tg)) = (method, t_gmm) {
            report.timings.push(Timing {
                method,
                phase: "fit_gmm",
                n_points: n,
                seconds: tg - t0,
            });
            report.timings.push(Timing {
                method,
                phase: "fit_gp",
                n_points: outcome.training_points,
                seconds: t1 - tg,
            });
        }
        let field_type = outcome.model.field_type();
        let mut local = Vec::with_capacity(2 * queries.len());
        let mut failed = None;
        for (q, truth) in &queries {
            match outcome.model.predict(q) {
                Ok(p) => {
                    let rec = PredictionRecord {
                        query: *q,
                        truth: *truth,
                        mean: p.mean,
                        variance: p.variance,
                        method,
                        field_type: FieldType::Sdf,
                    };
                    match field_type {
                        FieldType::Sdf => {
                            local.push(rec.to_edf());
                            local.push(rec);
                        }
                        FieldType::Edf => local.push(rec.to_edf()),
                    }
                }
                Err(e) => {
                    failed = Some(e);
                    break;
                }
            }
        }
        let t2 = clock();
        if let Some(e) = failed {
            report.failures.push((method, e.to_string()));
            continue;
        }
        report.timings.push(Timing {
            method,
            phase: "predict",
            n_points: queries.len(),
            seconds: t2 - t1,
        });
        // SDF rows first, then EDF
        local.sort_by_key(|r| r.field_type);
        records.extend(local);
    }
    report.rows = build_rows(&records, &spec.bin_edges)?;
    Ok(BenchmarkOutput {
        report,
        records,
        training,
        queries,
    })
}
