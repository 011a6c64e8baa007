//! Versioned text serialization of fitted models.
//!
//! One record per line, whitespace separated, `#` comments allowed. Floats
//! are written with 17 significant digits so every value reads back bitwise.
//! Gaussian process factorizations are not stored; they are recomputed on
//! load from the stored training arrays and checked against the stored
//! weights.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use gpgmm_core::baselines::{BaselineKind, BaselineModel};
use gpgmm_core::field::{FieldConfig, GpBlock, GpFieldModel, Octree, OctreeNode};
use gpgmm_core::gmr::GmmField;
use gpgmm_core::gp::{GpTraining, JointGp};
use gpgmm_core::hgmm::{EmConfig, Gaussian4, HgmmConfig, HgmmModel};
use gpgmm_core::kernel::KernelParams;
use gpgmm_core::pipeline::FittedModel;
use gpgmm_core::{Aabb, Matrix4, Vector3, Vector4};

use crate::error::{Error, Result};

pub const MAGIC: &str = "gpgmm-model";
pub const VERSION: u32 = 1;

/// Largest relative difference tolerated between stored and recomputed GP
/// weights before a file is declared corrupt.
const ALPHA_TOLERANCE: f64 = 1e-9;

fn num(s: &mut String, v: f64) {
    let _ = write!(s, " {v:.16e}");
}

fn nums(s: &mut String, vs: &[f64]) {
    for v in vs {
        num(s, *v);
    }
}

fn write_hgmm_config(s: &mut String, c: &HgmmConfig) {
    let _ = writeln!(
        s,
        "hgmm_config root_k {} fanout {} curvature_threshold {:.16e} max_depth {} min_points {} em_max_iter {} em_tol {:.16e} em_reg_eps {:.16e} spatial_curvature {} seed {}",
        c.root_k,
        c.fanout,
        c.curvature_threshold,
        c.max_depth,
        c.min_points,
        c.em.max_iter,
        c.em.tol,
        c.em.reg_eps,
        c.spatial_curvature,
        c.seed
    );
}

fn write_leaves(s: &mut String, model: &HgmmModel) {
    let _ = writeln!(s, "leaves {}", model.leaves.len());
    for (c, depth) in model.leaves.iter().zip(&model.leaf_depths) {
        s.push_str("leaf");
        num(s, c.weight);
        nums(s, c.mean.as_slice());
        for i in 0..4 {
            for j in i..4 {
                num(s, c.covariance[(i, j)]);
            }
        }
        let _ = writeln!(s, " {depth}");
    }
}

fn write_kernel(s: &mut String, k: &KernelParams) {
    let _ = writeln!(
        s,
        "kernel length_scale {:.16e} value_noise {:.16e} gradient_noise {:.16e}",
        k.length_scale, k.value_noise, k.gradient_noise
    );
}

fn write_box(s: &mut String, b: &Aabb) {
    nums(s, b.min.as_slice());
    nums(s, b.max.as_slice());
}

fn write_gp(s: &mut String, gp: &JointGp) {
    let t = &gp.training;
    let with_gradients = t.gradients.is_some();
    let _ = writeln!(s, "gp {} {}", t.len(), if with_gradients { "joint" } else { "value" });
    for i in 0..t.len() {
        s.push_str("point");
        nums(s, t.points[i].as_slice());
        num(s, t.values[i]);
        num(s, t.prior_means[i]);
        num(s, t.prior_scales[i]);
        if let Some(g) = &t.gradients {
            nums(s, g[i].as_slice());
            nums(s, t.prior_gradients[i].as_slice());
        }
        s.push('\n');
    }
    s.push_str("alpha");
    nums(s, &gp.alpha);
    s.push('\n');
}

pub fn format_model(model: &FittedModel) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{MAGIC} {VERSION}");
    match model {
        FittedModel::Gmm(m) => {
            s.push_str("kind gmm\n");
            let _ = writeln!(s, "active {}", m.active);
            write_hgmm_config(&mut s, &m.model.config);
            write_leaves(&mut s, &m.model);
        }
        FittedModel::Gpgmm(f) => {
            s.push_str("kind gpgmm\n");
            let c = &f.config;
            let _ = writeln!(
                s,
                "field active {} gradient_step {:.16e} discrepancy {:.16e} capacity {} halo {:.16e} sigma_floor {:.16e}",
                c.active, c.gradient_step, c.discrepancy, c.capacity, c.halo, c.sigma_floor
            );
            write_kernel(&mut s, &c.kernel);
            write_hgmm_config(&mut s, &f.hgmm.config);
            write_leaves(&mut s, &f.hgmm);
            let _ = writeln!(s, "octree {}", f.octree.nodes.len());
            for n in &f.octree.nodes {
                s.push_str("node");
                write_box(&mut s, &n.region);
                let _ = write!(s, " {}", n.depth);
                match n.leaf {
                    Some(l) => {
                        let _ = write!(s, " {l}");
                    }
                    None => s.push_str(" -"),
                }
                match n.children {
                    Some(ch) => ch.iter().for_each(|c| {
                        let _ = write!(s, " {c}");
                    }),
                    None => s.push_str(" -"),
                }
                s.push('\n');
            }
            let _ = writeln!(s, "blocks {}", f.blocks.len());
            for b in &f.blocks {
                s.push_str("block");
                write_box(&mut s, &b.region);
                let _ = writeln!(s, " {}", b.owned);
                match &b.gp {
                    Some(gp) => write_gp(&mut s, gp),
                    None => s.push_str("gp none\n"),
                }
            }
        }
        FittedModel::Baseline(b) => {
            let _ = writeln!(s, "kind {}", b.kind.as_str());
            let _ = writeln!(
                s,
                "prior mean {:.16e} scale {:.16e} max_distance {:.16e}",
                b.prior_mean, b.prior_scale, b.max_distance
            );
            write_kernel(&mut s, &b.gp.params);
            write_gp(&mut s, &b.gp);
        }
    }
    s.push_str("end\n");
    s
}

pub fn write_model(path: &Path, model: &FittedModel) -> Result<()> {
    fs::write(path, format_model(model)).map_err(|e| Error::io(path, e))
}

pub fn read_model(path: &Path) -> Result<FittedModel> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_model(&text, path)
}

struct Record<'a> {
    line: usize,
    fields: Vec<&'a str>,
}

struct Reader<'a> {
    path: &'a Path,
    records: Vec<Record<'a>>,
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(text: &'a str, path: &'a Path) -> Self {
        let records = text
            .lines()
            .enumerate()
            .filter_map(|(i, l)| {
                let t = l.trim();
                (!t.is_empty() && !t.starts_with('#')).then(|| Record {
                    line: i + 1,
                    fields: t.split_whitespace().collect(),
                })
            })
            .collect();
        Self { path, records, pos: 0 }
    }

    fn err(&self, line: usize, msg: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.to_path_buf(),
            line,
            msg: msg.into(),
        }
    }

    fn line(&self) -> usize {
        self.records.get(self.pos).or(self.records.last()).map_or(1, |r| r.line)
    }

    /// Next record, which must start with `key`; returns the rest.
    fn expect(&mut self, key: &str) -> Result<(usize, Vec<&'a str>)> {
        let r = self
            .records
            .get(self.pos)
            .ok_or_else(|| self.err(self.line(), format!("unexpected end of file, expected '{key}'")))?;
        if r.fields[0] != key {
            return Err(self.err(r.line, format!("expected '{key}', found '{}'", r.fields[0])));
        }
        self.pos += 1;
        Ok((r.line, r.fields[1..].to_vec()))
    }

    fn f64(&self, line: usize, s: &str) -> Result<f64> {
        s.parse::<f64>()
            .map_err(|_| self.err(line, format!("not a number: '{s}'")))
    }

    fn usize(&self, line: usize, s: &str) -> Result<usize> {
        s.parse::<usize>()
            .map_err(|_| self.err(line, format!("not a count: '{s}'")))
    }

    fn floats(&self, line: usize, fields: &[&str], n: usize) -> Result<Vec<f64>> {
        if fields.len() != n {
            return Err(self.err(line, format!("expected {n} values, found {}", fields.len())));
        }
        fields.iter().map(|f| self.f64(line, f)).collect()
    }

    /// `name value` pairs into a map; every name in `required` must appear.
    fn named(&self, line: usize, fields: &[&'a str], required: &[&str]) -> Result<HashMap<&'a str, &'a str>> {
        if fields.len() % 2 != 0 {
            return Err(self.err(line, "expected name/value pairs"));
        }
        let map: HashMap<&str, &str> = fields.chunks(2).map(|c| (c[0], c[1])).collect();
        for k in required {
            if !map.contains_key(k) {
                return Err(self.err(line, format!("missing '{k}'")));
            }
        }
        for k in map.keys() {
            if !required.contains(k) {
                return Err(self.err(line, format!("unknown entry '{k}'")));
            }
        }
        Ok(map)
    }
}

fn read_hgmm_config(r: &mut Reader) -> Result<HgmmConfig> {
    let (line, f) = r.expect("hgmm_config")?;
    let m = r.named(
        line,
        &f,
        &[
            "root_k",
            "fanout",
            "curvature_threshold",
            "max_depth",
            "min_points",
            "em_max_iter",
            "em_tol",
            "em_reg_eps",
            "spatial_curvature",
            "seed",
        ],
    )?;
    let spatial = match m["spatial_curvature"] {
        "true" => true,
        "false" => false,
        other => return Err(r.err(line, format!("not a boolean: '{other}'"))),
    };
    Ok(HgmmConfig {
        root_k: r.usize(line, m["root_k"])?,
        fanout: r.usize(line, m["fanout"])?,
        curvature_threshold: r.f64(line, m["curvature_threshold"])?,
        max_depth: r.usize(line, m["max_depth"])?,
        min_points: r.usize(line, m["min_points"])?,
        em: EmConfig {
            max_iter: r.usize(line, m["em_max_iter"])?,
            tol: r.f64(line, m["em_tol"])?,
            reg_eps: r.f64(line, m["em_reg_eps"])?,
        },
        spatial_curvature: spatial,
        seed: m["seed"].parse::<u64>().map_err(|_| r.err(line, "bad seed"))?,
    })
}

fn read_hgmm(r: &mut Reader) -> Result<HgmmModel> {
    let config = read_hgmm_config(r)?;
    let (line, f) = r.expect("leaves")?;
    if f.len() != 1 {
        return Err(r.err(line, "expected a leaf count"));
    }
    let n = r.usize(line, f[0])?;
    let mut leaves = Vec::with_capacity(n);
    let mut depths = Vec::with_capacity(n);
    for _ in 0..n {
        let (line, f) = r.expect("leaf")?;
        if f.len() != 16 {
            return Err(r.err(line, format!("expected 16 values, found {}", f.len())));
        }
        let v = r.floats(line, &f[..15], 15)?;
        let depth = r.usize(line, f[15])?;
        let mean = Vector4::new(v[1], v[2], v[3], v[4]);
        let mut cov = Matrix4::zeros();
        let mut k = 5;
        for i in 0..4 {
            for j in i..4 {
                cov[(i, j)] = v[k];
                cov[(j, i)] = v[k];
                k += 1;
            }
        }
        if !(v[0] > 0.0 && v[0] <= 1.0 + 1e-12) {
            return Err(r.err(line, "leaf weight outside (0, 1]"));
        }
        let g = Gaussian4::new(v[0], mean, cov).map_err(|e| r.err(line, e.to_string()))?;
        leaves.push(g);
        depths.push(depth);
    }
    let total: f64 = leaves.iter().map(|c| c.weight).sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(r.err(line, format!("leaf weights sum to {total}, not 1")));
    }
    Ok(HgmmModel::from_leaves(leaves, depths, config)?)
}

fn read_kernel(r: &mut Reader) -> Result<KernelParams> {
    let (line, f) = r.expect("kernel")?;
    let m = r.named(line, &f, &["length_scale", "value_noise", "gradient_noise"])?;
    let k = KernelParams {
        length_scale: r.f64(line, m["length_scale"])?,
        value_noise: r.f64(line, m["value_noise"])?,
        gradient_noise: r.f64(line, m["gradient_noise"])?,
    };
    k.validate().map_err(|e| r.err(line, e.to_string()))?;
    Ok(k)
}

fn read_box(r: &Reader, line: usize, f: &[&str]) -> Result<Aabb> {
    let v = r.floats(line, f, 6)?;
    Ok(Aabb::new(
        Vector3::new(v[0], v[1], v[2]),
        Vector3::new(v[3], v[4], v[5]),
    ))
}

fn read_gp(r: &mut Reader, params: KernelParams) -> Result<Option<JointGp>> {
    let (line, f) = r.expect("gp")?;
    if f == ["none"] {
        return Ok(None);
    }
    if f.len() != 2 || (f[1] != "joint" && f[1] != "value") {
        return Err(r.err(line, "expected 'gp <count> joint|value' or 'gp none'"));
    }
    let n = r.usize(line, f[0])?;
    let joint = f[1] == "joint";
    let width = if joint { 12 } else { 6 };
    let mut t = GpTraining {
        points: Vec::with_capacity(n),
        values: Vec::with_capacity(n),
        gradients: joint.then(Vec::new),
        prior_means: Vec::with_capacity(n),
        prior_gradients: Vec::new(),
        prior_scales: Vec::with_capacity(n),
    };
    for _ in 0..n {
        let (line, f) = r.expect("point")?;
        let v = r.floats(line, &f, width)?;
        t.points.push(Vector3::new(v[0], v[1], v[2]));
        t.values.push(v[3]);
        t.prior_means.push(v[4]);
        t.prior_scales.push(v[5]);
        if let Some(g) = &mut t.gradients {
            g.push(Vector3::new(v[6], v[7], v[8]));
            t.prior_gradients.push(Vector3::new(v[9], v[10], v[11]));
        }
    }
    let (aline, f) = r.expect("alpha")?;
    let stored = r.floats(aline, &f, n * if joint { 4 } else { 1 })?;
    let gp = JointGp::fit(t, params).map_err(|e| r.err(line, e.to_string()))?;
    let scale = stored.iter().fold(1.0f64, |m, a| m.max(a.abs()));
    let worst = stored
        .iter()
        .zip(&gp.alpha)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    if !(worst <= ALPHA_TOLERANCE * scale) {
        return Err(Error::Core(gpgmm_core::Error::ModelCorruption(format!(
            "line {aline}: stored GP weights disagree with the training data (max difference {worst:e})"
        ))));
    }
    Ok(Some(gp))
}

fn read_octree(r: &mut Reader) -> Result<Octree> {
    let (line, f) = r.expect("octree")?;
    if f.len() != 1 {
        return Err(r.err(line, "expected a node count"));
    }
    let n = r.usize(line, f[0])?;
    let mut nodes = Vec::with_capacity(n);
    let mut leaves = Vec::new();
    for _ in 0..n {
        let (line, f) = r.expect("node")?;
        if f.len() != 9 && f.len() != 16 {
            return Err(r.err(line, "malformed octree node"));
        }
        let region = read_box(r, line, &f[..6])?;
        let depth = r.usize(line, f[6])?;
        let leaf = match f[7] {
            "-" => None,
            s => Some(r.usize(line, s)?),
        };
        let children = if f[8] == "-" {
            None
        } else {
            let mut ch = [0usize; 8];
            for (k, c) in ch.iter_mut().enumerate() {
                *c = r.usize(line, f[8 + k])?;
                if *c >= n {
                    return Err(r.err(line, "child index out of range"));
                }
            }
            Some(ch)
        };
        if leaf.is_some() == children.is_some() {
            return Err(r.err(line, "a node is either a leaf or has children"));
        }
        if let Some(l) = leaf {
            leaves.push((l, region));
        }
        nodes.push(OctreeNode {
            region,
            depth,
            children,
            leaf,
        });
    }
    leaves.sort_by_key(|(l, _)| *l);
    if leaves.iter().enumerate().any(|(i, (l, _))| i != *l) {
        return Err(r.err(line, "octree leaf ids are not 0..n"));
    }
    Ok(Octree {
        nodes,
        leaf_regions: leaves.into_iter().map(|(_, b)| b).collect(),
    })
}

pub fn parse_model(text: &str, path: &Path) -> Result<FittedModel> {
    let mut r = Reader::new(text, path);
    let (line, f) = r.expect(MAGIC)?;
    match f.as_slice() {
        [v] if v.parse::<u32>() == Ok(VERSION) => {}
        _ => return Err(r.err(line, format!("unsupported model version, expected {VERSION}"))),
    }
    let (kline, kind) = r.expect("kind")?;
    let model = match kind.as_slice() {
        ["gmm"] => {
            let (line, f) = r.expect("active")?;
            if f.len() != 1 {
                return Err(r.err(line, "expected an active component count"));
            }
            let active = r.usize(line, f[0])?;
            let model = read_hgmm(&mut r)?;
            FittedModel::Gmm(GmmField { model, active })
        }
        ["gpgmm"] => {
            let (line, f) = r.expect("field")?;
            let m = r.named(
                line,
                &f,
                &[
                    "active",
                    "gradient_step",
                    "discrepancy",
                    "capacity",
                    "halo",
                    "sigma_floor",
                ],
            )?;
            let kernel = read_kernel(&mut r)?;
            let config = FieldConfig {
                kernel,
                active: r.usize(line, m["active"])?,
                gradient_step: r.f64(line, m["gradient_step"])?,
                discrepancy: r.f64(line, m["discrepancy"])?,
                capacity: r.usize(line, m["capacity"])?,
                halo: r.f64(line, m["halo"])?,
                sigma_floor: r.f64(line, m["sigma_floor"])?,
            };
            config.validate().map_err(|e| r.err(line, e.to_string()))?;
            let hgmm = read_hgmm(&mut r)?;
            let octree = read_octree(&mut r)?;
            let (bline, f) = r.expect("blocks")?;
            if f.len() != 1 {
                return Err(r.err(bline, "expected a block count"));
            }
            let n = r.usize(bline, f[0])?;
            if n != octree.leaf_regions.len() {
                return Err(r.err(bline, "block count differs from octree leaves"));
            }
            let mut blocks = Vec::with_capacity(n);
            for _ in 0..n {
                let (line, f) = r.expect("block")?;
                if f.len() != 7 {
                    return Err(r.err(line, "malformed block"));
                }
                let region = read_box(&r, line, &f[..6])?;
                let owned = r.usize(line, f[6])?;
                let gp = read_gp(&mut r, kernel)?;
                if gp.as_ref().map_or(owned > 0, |g| owned > g.training.len()) {
                    return Err(r.err(line, "block owns more points than it holds"));
                }
                blocks.push(GpBlock { region, owned, gp });
            }
            FittedModel::Gpgmm(GpFieldModel {
                octree,
                blocks,
                hgmm,
                config,
            })
        }
        [k @ ("gpis" | "loggpis")] => {
            let kind = if *k == "gpis" {
                BaselineKind::Gpis
            } else {
                BaselineKind::LogGpis
            };
            let (line, f) = r.expect("prior")?;
            let m = r.named(line, &f, &["mean", "scale", "max_distance"])?;
            let prior_mean = r.f64(line, m["mean"])?;
            let prior_scale = r.f64(line, m["scale"])?;
            let max_distance = r.f64(line, m["max_distance"])?;
            let params = read_kernel(&mut r)?;
            let gp = read_gp(&mut r, params)?.ok_or_else(|| r.err(line, "baseline model without a GP"))?;
            if (kind == BaselineKind::Gpis) != gp.training.gradients.is_some() {
                return Err(r.err(line, "GP layout does not match the model kind"));
            }
            FittedModel::Baseline(BaselineModel {
                kind,
                gp,
                prior_mean,
                prior_scale,
                max_distance,
            })
        }
        _ => return Err(r.err(kline, "unknown model kind, expected gmm, gpgmm, gpis or loggpis")),
    };
    r.expect("end")?;
    if r.pos != r.records.len() {
        return Err(r.err(r.line(), "trailing data after 'end'"));
    }
    Ok(model)
}

/// Rough box around what a model has seen, for default mesh bounds.
pub fn model_bounds(model: &FittedModel) -> Option<Aabb> {
    let means = |h: &HgmmModel| -> Vec<Vector3<f64>> { h.leaves.iter().map(|c| c.spatial_mean()).collect() };
    match model {
        FittedModel::Gmm(m) => Aabb::from_points(&means(&m.model)),
        FittedModel::Gpgmm(f) => {
            let b = Aabb::from_points(&means(&f.hgmm))?;
            let pts: Vec<Vector3<f64>> = f
                .blocks
                .iter()
                .filter_map(|b| b.gp.as_ref())
                .flat_map(|g| g.training.points.iter().copied())
                .collect();
            Some(match Aabb::from_points(&pts) {
                Some(p) => b.union(&p),
                None => b,
            })
        }
        FittedModel::Baseline(b) => Aabb::from_points(&b.gp.training.points),
    }
}
