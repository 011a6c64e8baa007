//! Serializable shape descriptions, named presets and the truth manifest
//! written next to synthesized clouds.

use std::fs;
use std::path::{Path, PathBuf};

use gpgmm_core::{ShapeSpec, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum ShapeDesc {
    Sphere {
        center: [f64; 3],
        radius: f64,
    },
    Box {
        min: [f64; 3],
        max: [f64; 3],
    },
    Plane {
        point: [f64; 3],
        normal: [f64; 3],
        half_extent: f64,
    },
    Union {
        parts: Vec<ShapeDesc>,
    },
}

fn v3(a: [f64; 3]) -> Vector3<f64> {
    Vector3::new(a[0], a[1], a[2])
}

fn arr(v: &Vector3<f64>) -> [f64; 3] {
    [v.x, v.y, v.z]
}

impl ShapeDesc {
    pub fn to_spec(&self) -> ShapeSpec {
        match self {
            ShapeDesc::Sphere { center, radius } => ShapeSpec::Sphere {
                center: v3(*center),
                radius: *radius,
            },
            ShapeDesc::Box { min, max } => ShapeSpec::Box {
                min: v3(*min),
                max: v3(*max),
            },
            ShapeDesc::Plane {
                point,
                normal,
                half_extent,
            } => ShapeSpec::Plane {
                point: v3(*point),
                normal: v3(*normal),
                half_extent: *half_extent,
            },
            ShapeDesc::Union { parts } => ShapeSpec::Union(parts.iter().map(ShapeDesc::to_spec).collect()),
        }
    }

    pub fn from_spec(spec: &ShapeSpec) -> Self {
        match spec {
            ShapeSpec::Sphere { center, radius } => ShapeDesc::Sphere {
                center: arr(center),
                radius: *radius,
            },
            ShapeSpec::Box { min, max } => ShapeDesc::Box {
                min: arr(min),
                max: arr(max),
            },
            ShapeSpec::Plane {
                point,
                normal,
                half_extent,
            } => ShapeDesc::Plane {
                point: arr(point),
                normal: arr(normal),
                half_extent: *half_extent,
            },
            ShapeSpec::Union(m) => ShapeDesc::Union {
                parts: m.iter().map(ShapeDesc::from_spec).collect(),
            },
        }
    }
}

pub const PRESETS: [&str; 4] = ["sphere", "box", "plane", "corner"];

/// Built-in scenes: unit sphere, unit cube, the z = 0 plane over [-1, 1]²,
/// and two orthogonal planes meeting along the y axis (an L-shaped wall).
pub fn preset(name: &str) -> Option<ShapeSpec> {
    Some(match name {
        "sphere" => ShapeSpec::unit_sphere(),
        "box" => ShapeSpec::Box {
            min: Vector3::repeat(-0.5),
            max: Vector3::repeat(0.5),
        },
        "plane" => ShapeSpec::Plane {
            point: Vector3::zeros(),
            normal: Vector3::z(),
            half_extent: 1.0,
        },
        "corner" => ShapeSpec::Union(vec![
            ShapeSpec::Plane {
                point: Vector3::new(0.5, 0.0, 0.0),
                normal: Vector3::z(),
                half_extent: 0.5,
            },
            ShapeSpec::Plane {
                point: Vector3::new(0.0, 0.0, 0.5),
                normal: Vector3::x(),
                half_extent: 0.5,
            },
        ]),
        _ => return None,
    })
}

/// A preset name, or a TOML file holding one [`ShapeDesc`].
pub fn resolve_shape(arg: &str) -> Result<ShapeSpec> {
    if let Some(s) = preset(arg) {
        return Ok(s);
    }
    let path = Path::new(arg);
    if !path.exists() {
        return Err(Error::Config(format!(
            "unknown shape '{arg}' (presets: {}, or a shape file)",
            PRESETS.join(", ")
        )));
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let desc: ShapeDesc = toml::from_str(&text).map_err(|e| Error::Config(format!("{arg}: {e}")))?;
    let spec = desc.to_spec();
    spec.validate().map_err(|e| Error::Config(format!("{arg}: {e}")))?;
    Ok(spec)
}

/// Sidecar describing how a synthetic cloud was produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthManifest {
    pub points: usize,
    pub noise: f64,
    pub seed: u64,
    pub shape: ShapeDesc,
}

pub fn manifest_path(cloud: &Path) -> PathBuf {
    let mut s = cloud.as_os_str().to_owned();
    s.push(".truth.toml");
    PathBuf::from(s)
}

pub fn write_manifest(path: &Path, m: &TruthManifest) -> Result<()> {
    let text = toml::to_string(m).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_manifest(path: &Path) -> Result<TruthManifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })
}
