//! ASCII PLY export of triangle meshes with a per-vertex variance.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use gpgmm_core::surface::TriangleMesh;
use gpgmm_core::Vector3;

use crate::error::{Error, Result};

pub fn format_mesh_ply(mesh: &TriangleMesh) -> String {
    let mut s = String::new();
    s.push_str("ply\nformat ascii 1.0\n");
    let _ = writeln!(s, "element vertex {}", mesh.vertices.len());
    s.push_str("property float x\nproperty float y\nproperty float z\nproperty float variance\n");
    let _ = writeln!(s, "element face {}", mesh.triangles.len());
    s.push_str("property list uchar int vertex_indices\nend_header\n");
    for (v, var) in mesh.vertices.iter().zip(&mesh.vertex_variance) {
        let _ = writeln!(s, "{} {} {} {}", v.x as f32, v.y as f32, v.z as f32, *var as f32);
    }
    for t in &mesh.triangles {
        let _ = writeln!(s, "3 {} {} {}", t[0], t[1], t[2]);
    }
    s
}

pub fn write_mesh(path: &Path, mesh: &TriangleMesh) -> Result<()> {
    fs::write(path, format_mesh_ply(mesh)).map_err(|e| Error::io(path, e))
}

/// Reads back what [`format_mesh_ply`] writes.
pub fn parse_mesh_ply(text: &str, path: &Path) -> Result<TriangleMesh> {
    let perr = |line: usize, msg: &str| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.to_string(),
    };
    let mut lines = text.lines().enumerate();
    let mut n_vert = None;
    let mut n_face = None;
    match lines.next() {
        Some((_, "ply")) => {}
        _ => return Err(perr(1, "missing 'ply' magic")),
    }
    for (i, l) in lines.by_ref() {
        let f: Vec<&str> = l.split_whitespace().collect();
        match f.as_slice() {
            ["end_header"] => break,
            ["element", "vertex", n] => n_vert = Some(n.parse::<usize>().map_err(|_| perr(i + 1, "bad count"))?),
            ["element", "face", n] => n_face = Some(n.parse::<usize>().map_err(|_| perr(i + 1, "bad count"))?),
            _ => {}
        }
    }
    let (nv, nf) = match (n_vert, n_face) {
        (Some(v), Some(f)) => (v, f),
        _ => return Err(perr(1, "header lacks vertex or face element")),
    };
    let mut mesh = TriangleMesh::default();
    for _ in 0..nv {
        let (i, l) = lines.next().ok_or_else(|| perr(0, "missing vertex rows"))?;
        let v: Vec<f64> = l
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| perr(i + 1, "bad number")))
            .collect::<Result<_>>()?;
        if v.len() != 4 {
            return Err(perr(i + 1, "expected x y z variance"));
        }
        mesh.vertices.push(Vector3::new(v[0], v[1], v[2]));
        mesh.vertex_variance.push(v[3]);
    }
    for _ in 0..nf {
        let (i, l) = lines.next().ok_or_else(|| perr(0, "missing face rows"))?;
        let v: Vec<usize> = l
            .split_whitespace()
            .map(|t| t.parse::<usize>().map_err(|_| perr(i + 1, "bad index")))
            .collect::<Result<_>>()?;
        if v.len() != 4 || v[0] != 3 || v[1..].iter().any(|&k| k >= nv) {
            return Err(perr(i + 1, "expected a triangle of valid vertex indices"));
        }
        mesh.triangles.push([v[1], v[2], v[3]]);
    }
    Ok(mesh)
}

pub fn read_mesh(path: &Path) -> Result<TriangleMesh> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_mesh_ply(&text, path)
}
