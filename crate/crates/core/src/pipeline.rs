//! End-to-end fitting stages shared by the benchmark and the CLI.

use alloc::vec::Vec;

use nalgebra::Vector3;

use crate::baselines::{self, BaselineModel};
use crate::error::{invalid, Error, Result};
use crate::field::{fit_field, select_training_points, FieldConfig, GpFieldModel};
use crate::geometry::{subsample, OrientedPointCloud};
use crate::gmr::GmmField;
use crate::hgmm::{augment_virtual_points, fit_hgmm, HgmmConfig, HgmmModel};
use crate::kernel::KernelParams;
use crate::normals::{estimate_normals_pca, DEFAULT_NEIGHBORS};
use crate::{DistanceField, FieldType, Prediction};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Gmm,
    Gpgmm,
    Gpis,
    LogGpis,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Gmm, Method::Gpgmm, Method::Gpis, Method::LogGpis];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Gmm => "gmm",
            Method::Gpgmm => "gpgmm",
            Method::Gpis => "gpis",
            Method::LogGpis => "loggpis",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| invalid(alloc::format!("unknown method '{s}'")))
    }
}

/// Every tunable of the mapping pipeline.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PipelineConfig {
    /// Offset of the virtual points along the normals.
    pub virtual_spacing: f64,
    /// Fraction of hits kept for the mixture fit.
    pub subsample_rate: f64,
    pub subsample_seed: u64,
    /// Fraction of hits the stationary baselines are trained on.
    pub baseline_rate: f64,
    pub pca_neighbors: usize,
    pub hgmm: HgmmConfig,
    pub field: FieldConfig,
    pub gpis: KernelParams,
    pub loggpis: KernelParams,
    pub max_distance: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            virtual_spacing: 0.2,
            subsample_rate: 0.15,
            subsample_seed: 0,
            baseline_rate: 0.15,
            pca_neighbors: DEFAULT_NEIGHBORS,
            hgmm: HgmmConfig::default(),
            field: FieldConfig::default(),
            gpis: baselines::default_gpis_params(),
            loggpis: baselines::default_loggpis_params(),
            max_distance: baselines::DEFAULT_MAX_DISTANCE,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.virtual_spacing > 0.0) || !self.virtual_spacing.is_finite() {
            return Err(invalid("virtual_spacing must be positive"));
        }
        for (name, rate) in [
            ("subsample_rate", self.subsample_rate),
            ("baseline_rate", self.baseline_rate),
        ] {
            if !(rate > 0.0 && rate <= 1.0) {
                return Err(invalid(alloc::format!("{name} must lie in (0, 1]")));
            }
        }
        if self.pca_neighbors < 3 {
            return Err(invalid("pca_neighbors must be at least 3"));
        }
        if !(self.max_distance > 0.0) {
            return Err(invalid("max_distance must be positive"));
        }
        self.hgmm.validate()?;
        self.field.validate()?;
        self.gpis.validate()?;
        self.loggpis.validate()
    }
}

/// Keeps given normals, otherwise estimates them by PCA. Points whose normal
/// is null either way are dropped.
pub fn ensure_normals(cloud: &OrientedPointCloud, config: &PipelineConfig) -> Result<OrientedPointCloud> {
    if cloud.is_empty() {
        return Err(Error::EmptyInput("point cloud is empty".into()));
    }
    let with = if cloud.has_normals() {
        cloud.clone()
    } else {
        estimate_normals_pca(cloud, config.pca_neighbors.min(cloud.len()), None)?
    };
    let kept = with.without_null_normals();
    if kept.is_empty() {
        return Err(Error::EmptyInput("no point has a usable normal".into()));
    }
    Ok(kept)
}

/// Mixture over the subsampled, virtual-point-augmented cloud.
pub fn fit_gmm(cloud: &OrientedPointCloud, config: &PipelineConfig) -> Result<HgmmModel> {
    config.validate()?;
    let sub = subsample(cloud, config.subsample_rate, config.subsample_seed)?;
    let samples = augment_virtual_points(&sub, config.virtual_spacing)?;
    fit_hgmm(&samples, &config.hgmm)
}

/// Counts from the training-point selection.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SelectionSummary {
    pub total: usize,
    pub selected: usize,
}

impl SelectionSummary {
    pub fn fraction(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.selected as f64 / self.total as f64
        }
    }
}

/// GP refinement over the hits the mixture does not explain.
pub fn fit_gpgmm_on(
    hgmm: HgmmModel,
    cloud: &OrientedPointCloud,
    config: &PipelineConfig,
) -> Result<(GpFieldModel, SelectionSummary)> {
    let f = &config.field;
    let (selected, _) = select_training_points(&hgmm, cloud, f.discrepancy, f.active)?;
    let summary = SelectionSummary {
        total: cloud.len(),
        selected: selected.len(),
    };
    Ok((fit_field(hgmm, &selected, f)?, summary))
}

pub fn fit_gpgmm(cloud: &OrientedPointCloud, config: &PipelineConfig) -> Result<(GpFieldModel, SelectionSummary)> {
    let hgmm = fit_gmm(cloud, config)?;
    fit_gpgmm_on(hgmm, cloud, config)
}

fn baseline_cloud(cloud: &OrientedPointCloud, config: &PipelineConfig) -> Result<OrientedPointCloud> {
    if config.baseline_rate >= 1.0 {
        return Ok(cloud.clone());
    }
    subsample(cloud, config.baseline_rate, config.subsample_seed)
}

pub fn fit_gpis(cloud: &OrientedPointCloud, config: &PipelineConfig) -> Result<BaselineModel> {
    config.validate()?;
    baselines::gpis_fit(&baseline_cloud(cloud, config)?, &config.gpis)
}

pub fn fit_loggpis(cloud: &OrientedPointCloud, config: &PipelineConfig) -> Result<BaselineModel> {
    config.validate()?;
    baselines::loggpis_fit(&baseline_cloud(cloud, config)?, &config.loggpis, config.max_distance)
}

/// Any fitted model of the four methods.
#[derive(Clone, Debug, PartialEq)]
pub enum FittedModel {
    Gmm(GmmField),
    Gpgmm(GpFieldModel),
    Baseline(BaselineModel),
}

impl FittedModel {
    pub fn method(&self) -> Method {
        match self {
            FittedModel::Gmm(_) => Method::Gmm,
            FittedModel::Gpgmm(_) => Method::Gpgmm,
            FittedModel::Baseline(b) => match b.kind {
                baselines::BaselineKind::Gpis => Method::Gpis,
                baselines::BaselineKind::LogGpis => Method::LogGpis,
            },
        }
    }
}

impl DistanceField for FittedModel {
    fn predict(&self, x: &Vector3<f64>) -> Result<Prediction> {
        match self {
            FittedModel::Gmm(m) => m.predict(x),
            FittedModel::Gpgmm(m) => m.predict(x),
            FittedModel::Baseline(m) => m.predict(x),
        }
    }

    fn predict_mean(&self, x: &Vector3<f64>) -> Result<f64> {
        match self {
            FittedModel::Gmm(m) => m.predict_mean(x),
            FittedModel::Gpgmm(m) => m.predict_mean(x),
            FittedModel::Baseline(m) => m.predict_mean(x),
        }
    }

    fn field_type(&self) -> FieldType {
        match self {
            FittedModel::Baseline(m) => m.field_type(),
            _ => FieldType::Sdf,
        }
    }
}

/// Fit output plus what the CLI logs about it.
#[derive(Clone, Debug, PartialEq)]
pub struct FitOutcome {
    pub model: FittedModel,
    pub selection: Option<SelectionSummary>,
    pub training_points: usize,
}

/// Fits `method` on `cloud`, estimating normals where needed. `gmm_done`
/// is called between the mixture and GP stages of GPGMM (used for timing).
pub fn fit_method(
    method: Method,
    cloud: &OrientedPointCloud,
    config: &PipelineConfig,
    gmm_done: &mut dyn FnMut(),
) -> Result<FitOutcome> {
    config.validate()?;
    if method == Method::LogGpis {
        if cloud.is_empty() {
            return Err(Error::EmptyInput("point cloud is empty".into()));
        }
        let m = fit_loggpis(cloud, config)?;
        let n = m.gp.training.len();
        return Ok(FitOutcome {
            model: FittedModel::Baseline(m),
            selection: None,
            training_points: n,
        });
    }
    let cloud = ensure_normals(cloud, config)?;
    Ok(match method {
        Method::Gmm => {
            let model = fit_gmm(&cloud, config)?;
            gmm_done();
            FitOutcome {
                model: FittedModel::Gmm(GmmField {
                    model,
                    active: config.field.active,
                }),
                selection: None,
                training_points: cloud.len(),
            }
        }
        Method::Gpgmm => {
            let hgmm = fit_gmm(&cloud, config)?;
            gmm_done();
            let (field, sel) = fit_gpgmm_on(hgmm, &cloud, config)?;
            FitOutcome {
                model: FittedModel::Gpgmm(field),
                selection: Some(sel),
                training_points: sel.selected,
            }
        }
        Method::Gpis => {
            let m = fit_gpis(&cloud, config)?;
            let n = m.gp.training.len();
            FitOutcome {
                model: FittedModel::Baseline(m),
                selection: None,
                training_points: n,
            }
        }
        Method::LogGpis => unreachable!(),
    })
}

/// Leaf counts per depth, for fit logs.
pub fn leaves_per_depth(model: &HgmmModel) -> Vec<usize> {
    let mut out = alloc::vec![0; model.max_depth() + 1];
    for &d in &model.leaf_depths {
        out[d] += 1;
    }
    out
}
