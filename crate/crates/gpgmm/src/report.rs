//! Benchmark driver with wall-clock timing, and the CSV report formats.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use gpgmm_core::evaluation::{run_benchmark, BenchmarkOutput, BenchmarkSpec, EvalReport};

use crate::config::Settings;
use crate::error::{Error, Result};

pub const METRICS_HEADER: &str = "method,field_type,bin_lo,bin_hi,count,rmse,mean_ll";
pub const TIMINGS_HEADER: &str = "method,phase,n_points,seconds";
pub const METRICS_FILE: &str = "metrics.csv";
pub const TIMINGS_FILE: &str = "timings.csv";

pub fn bench_spec(settings: &Settings) -> BenchmarkSpec {
    let b = &settings.bench;
    BenchmarkSpec {
        scene: b.scene.clone(),
        n_train: b.n_train,
        n_test: b.n_test,
        noise: b.noise,
        methods: b.methods.clone(),
        seed: b.seed,
        bin_edges: settings.bin_edges.clone(),
        volume_fraction: b.volume_fraction,
        estimate_normals: b.estimate_normals,
    }
}

/// Runs the benchmark timed by a monotonic wall clock.
pub fn run_timed(spec: &BenchmarkSpec, settings: &Settings) -> Result<BenchmarkOutput> {
    let start = Instant::now();
    let mut clock = || start.elapsed().as_secs_f64();
    Ok(run_benchmark(spec, &settings.pipeline, &mut clock)?)
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x}"))
}

/// Metrics table. Empty bins leave `rmse` and `mean_ll` blank.
pub fn format_metrics(report: &EvalReport) -> String {
    let mut s = String::from(METRICS_HEADER);
    s.push('\n');
    for r in &report.rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.method.as_str(),
            r.field_type.as_str(),
            r.bin_lo,
            r.bin_hi,
            r.count,
            opt(r.rmse),
            opt(r.mean_ll)
        );
    }
    s
}

pub fn format_timings(report: &EvalReport) -> String {
    let mut s = String::from(TIMINGS_HEADER);
    s.push('\n');
    for t in &report.timings {
        let _ = writeln!(s, "{},{},{},{}", t.method.as_str(), t.phase, t.n_points, t.seconds);
    }
    s
}

/// Writes both CSVs into `dir`, creating it if needed.
pub fn write_report(dir: &Path, report: &EvalReport) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let m = dir.join(METRICS_FILE);
    fs::write(&m, format_metrics(report)).map_err(|e| Error::io(&m, e))?;
    let t = dir.join(TIMINGS_FILE);
    fs::write(&t, format_timings(report)).map_err(|e| Error::io(&t, e))
}
