//! Run configuration: one flat TOML file, every key optional.
//!
//! Unknown keys are rejected and every value is checked against the
//! preconditions of the stage that uses it before anything runs.

use std::fs;
use std::path::Path;

use gpgmm_core::evaluation::{self, DEFAULT_BIN_EDGES};
use gpgmm_core::pipeline::{Method, PipelineConfig};
use gpgmm_core::{Aabb, ShapeSpec, Vector3};
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::scene;

/// Raw file contents. Key names are the documented configuration keys.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub virtual_spacing: Option<f64>,
    pub subsample_rate: Option<f64>,
    pub subsample_seed: Option<u64>,
    pub baseline_rate: Option<f64>,
    pub pca_neighbors: Option<usize>,

    pub hgmm_root_k: Option<usize>,
    pub hgmm_fanout: Option<usize>,
    pub hgmm_curvature_threshold: Option<f64>,
    pub hgmm_max_depth: Option<usize>,
    pub hgmm_min_points: Option<usize>,
    pub hgmm_spatial_curvature: Option<bool>,
    pub hgmm_seed: Option<u64>,
    pub em_max_iter: Option<usize>,
    pub em_tol: Option<f64>,
    pub em_reg_eps: Option<f64>,

    pub active_components: Option<usize>,
    pub gradient_step: Option<f64>,
    pub discrepancy: Option<f64>,
    pub length_scale: Option<f64>,
    pub value_noise: Option<f64>,
    pub gradient_noise: Option<f64>,
    pub block_capacity: Option<usize>,
    /// Defaults to half the length scale.
    pub block_halo: Option<f64>,
    pub sigma_floor: Option<f64>,

    pub gpis_length_scale: Option<f64>,
    pub gpis_value_noise: Option<f64>,
    pub gpis_gradient_noise: Option<f64>,
    pub loggpis_length_scale: Option<f64>,
    pub loggpis_value_noise: Option<f64>,
    pub max_distance: Option<f64>,

    pub grid_min: Option<[f64; 3]>,
    pub grid_max: Option<[f64; 3]>,
    pub grid_spacing: Option<f64>,
    /// Mesh only within this distance of the support cloud.
    pub mesh_support_radius: Option<f64>,

    pub bin_edges: Option<Vec<f64>>,
    pub bench_scene: Option<String>,
    pub bench_n_train: Option<usize>,
    pub bench_n_test: Option<usize>,
    pub bench_noise: Option<f64>,
    pub bench_seed: Option<u64>,
    pub bench_methods: Option<Vec<String>>,
    pub bench_volume_fraction: Option<f64>,
    pub bench_estimate_normals: Option<bool>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridSettings {
    /// Mesh bounds; when absent the model's extent is used.
    pub bounds: Option<Aabb>,
    pub spacing: f64,
    pub support_radius: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchSettings {
    pub scene: ShapeSpec,
    pub n_train: usize,
    pub n_test: usize,
    pub noise: f64,
    pub seed: u64,
    pub methods: Vec<Method>,
    pub volume_fraction: f64,
    pub estimate_normals: bool,
}

/// Validated settings for every command.
#[derive(Clone, Debug, PartialEq)]
pub struct Settings {
    pub pipeline: PipelineConfig,
    pub grid: GridSettings,
    pub bin_edges: Vec<f64>,
    pub bench: BenchSettings,
}

impl Default for Settings {
    fn default() -> Self {
        Settings::from_file(ConfigFile::default()).expect("defaults are valid")
    }
}

fn cfg_err(e: impl std::fmt::Display) -> Error {
    Error::Config(e.to_string())
}

fn parse_methods(names: &[String]) -> Result<Vec<Method>> {
    if names.is_empty() {
        return Err(Error::Config("bench_methods: at least one method is required".into()));
    }
    let mut out = Vec::new();
    for n in names {
        let m = Method::parse(n.trim()).map_err(|e| Error::Config(format!("bench_methods: {e}")))?;
        if !out.contains(&m) {
            out.push(m);
        }
    }
    Ok(out)
}

/// Comma-separated method list as given on the command line.
pub fn parse_method_list(s: &str) -> Result<Vec<Method>> {
    let names: Vec<String> = s
        .split(',')
        .filter(|t| !t.trim().is_empty())
        .map(str::to_string)
        .collect();
    parse_methods(&names)
}

impl Settings {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let file: ConfigFile = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        Self::from_file(file)
    }

    pub fn from_file(f: ConfigFile) -> Result<Self> {
        let mut p = PipelineConfig::default();
        macro_rules! set {
            ($($src:ident => $($dst:ident).+;)*) => {
                $(if let Some(v) = f.$src { p.$($dst).+ = v; })*
            };
        }
        set! {
            virtual_spacing => virtual_spacing;
            subsample_rate => subsample_rate;
            subsample_seed => subsample_seed;
            baseline_rate => baseline_rate;
            pca_neighbors => pca_neighbors;
            hgmm_root_k => hgmm.root_k;
            hgmm_fanout => hgmm.fanout;
            hgmm_curvature_threshold => hgmm.curvature_threshold;
            hgmm_max_depth => hgmm.max_depth;
            hgmm_min_points => hgmm.min_points;
            hgmm_spatial_curvature => hgmm.spatial_curvature;
            hgmm_seed => hgmm.seed;
            em_max_iter => hgmm.em.max_iter;
            em_tol => hgmm.em.tol;
            em_reg_eps => hgmm.em.reg_eps;
            active_components => field.active;
            gradient_step => field.gradient_step;
            discrepancy => field.discrepancy;
            length_scale => field.kernel.length_scale;
            value_noise => field.kernel.value_noise;
            gradient_noise => field.kernel.gradient_noise;
            block_capacity => field.capacity;
            sigma_floor => field.sigma_floor;
            gpis_length_scale => gpis.length_scale;
            gpis_value_noise => gpis.value_noise;
            gpis_gradient_noise => gpis.gradient_noise;
            loggpis_length_scale => loggpis.length_scale;
            loggpis_value_noise => loggpis.value_noise;
            max_distance => max_distance;
        }
        p.field.halo = f.block_halo.unwrap_or(0.5 * p.field.kernel.length_scale);
        p.validate().map_err(cfg_err)?;

        let bounds = match (f.grid_min, f.grid_max) {
            (None, None) => None,
            (Some(lo), Some(hi)) => {
                let b = Aabb::new(Vector3::from(lo), Vector3::from(hi));
                if !b.is_valid() {
                    return Err(Error::Config("grid_min must be below grid_max on every axis".into()));
                }
                Some(b)
            }
            _ => return Err(Error::Config("grid_min and grid_max must be given together".into())),
        };
        let spacing = f.grid_spacing.unwrap_or(0.05);
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(Error::Config("grid_spacing must be positive".into()));
        }
        let support_radius = f.mesh_support_radius.unwrap_or(p.field.kernel.length_scale);
        if !(support_radius > 0.0 && support_radius.is_finite()) {
            return Err(Error::Config("mesh_support_radius must be positive".into()));
        }

        let bin_edges = f.bin_edges.unwrap_or_else(|| DEFAULT_BIN_EDGES.to_vec());
        evaluation::validate_edges(&bin_edges).map_err(|e| Error::Config(format!("bin_edges: {e}")))?;

        let scene = match f.bench_scene.as_deref() {
            None => ShapeSpec::unit_sphere(),
            Some(s) => scene::resolve_shape(s).map_err(|e| Error::Config(format!("bench_scene: {e}")))?,
        };
        let methods = match &f.bench_methods {
            None => Method::ALL.to_vec(),
            Some(m) => parse_methods(m)?,
        };
        let bench = BenchSettings {
            scene,
            n_train: f.bench_n_train.unwrap_or(5000),
            n_test: f.bench_n_test.unwrap_or(2000),
            noise: f.bench_noise.unwrap_or(0.0),
            seed: f.bench_seed.unwrap_or(0),
            methods,
            volume_fraction: f.bench_volume_fraction.unwrap_or(0.2),
            estimate_normals: f.bench_estimate_normals.unwrap_or(true),
        };
        bench.check()?;
        Ok(Settings {
            pipeline: p,
            grid: GridSettings {
                bounds,
                spacing,
                support_radius,
            },
            bin_edges,
            bench,
        })
    }

    /// Applies `--seed` to every seeded stage.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.pipeline.subsample_seed = seed;
        self.pipeline.hgmm.seed = seed;
        self.bench.seed = seed;
        self
    }
}

impl BenchSettings {
    pub fn check(&self) -> Result<()> {
        if self.n_train == 0 || self.n_test == 0 {
            return Err(Error::Config("bench_n_train and bench_n_test must be positive".into()));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::Config("bench_noise must be non-negative".into()));
        }
        if !(0.0..=1.0).contains(&self.volume_fraction) {
            return Err(Error::Config("bench_volume_fraction must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let s = Settings::parse("").unwrap();
        assert_eq!(s.pipeline, PipelineConfig::default());
        assert_eq!(s.bin_edges, DEFAULT_BIN_EDGES.to_vec());
        assert_eq!(s.bench.methods, Method::ALL.to_vec());
    }

    #[test]
    fn unknown_key_is_named() {
        let e = Settings::parse("lenght_scale = 0.3\n").unwrap_err();
        assert_eq!(e.exit_code(), 2);
        assert!(e.to_string().contains("lenght_scale"), "{e}");
    }

    #[test]
    fn values_are_validated() {
        for bad in [
            "subsample_rate = 0.0",
            "length_scale = -1.0",
            "bin_edges = [0.0, 0.1, 0.1]",
            "grid_min = [0.0, 0.0, 0.0]",
            "grid_spacing = 0.0",
            "bench_methods = [\"gmm\", \"nope\"]",
            "hgmm_root_k = 0",
        ] {
            let e = Settings::parse(bad).unwrap_err();
            assert_eq!(e.exit_code(), 2, "{bad}: {e}");
        }
    }

    #[test]
    fn halo_follows_length_scale() {
        let s = Settings::parse("length_scale = 0.4").unwrap();
        assert_eq!(s.pipeline.field.halo, 0.2);
        let s = Settings::parse("length_scale = 0.4\nblock_halo = 0.05").unwrap();
        assert_eq!(s.pipeline.field.halo, 0.05);
    }

    #[test]
    fn seed_override_reaches_every_stage() {
        let s = Settings::default().with_seed(9);
        assert_eq!(
            (s.pipeline.subsample_seed, s.pipeline.hgmm.seed, s.bench.seed),
            (9, 9, 9)
        );
    }
}
