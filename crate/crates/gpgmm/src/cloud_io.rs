//! ASCII XYZ and ASCII PLY point clouds.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use gpgmm_core::{OrientedPointCloud, Vector3};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CloudFormat {
    Xyz,
    Ply,
}

impl CloudFormat {
    /// `.ply` means PLY, anything else XYZ.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("ply") => CloudFormat::Ply,
            _ => CloudFormat::Xyz,
        }
    }
}

pub fn read_cloud(path: &Path) -> Result<OrientedPointCloud> {
    read_cloud_as(path, CloudFormat::from_path(path))
}

pub fn read_cloud_as(path: &Path, format: CloudFormat) -> Result<OrientedPointCloud> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    match format {
        CloudFormat::Xyz => parse_xyz(&text, path),
        CloudFormat::Ply => parse_ply(&text, path),
    }
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn parse_floats(fields: &[&str], path: &Path, line: usize) -> Result<Vec<f64>> {
    fields
        .iter()
        .map(|f| {
            f.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| parse_err(path, line, format!("not a finite number: '{f}'")))
        })
        .collect()
}

fn build(points: Vec<Vector3<f64>>, normals: Vec<Vector3<f64>>, path: &Path) -> Result<OrientedPointCloud> {
    if points.is_empty() {
        return Err(Error::Empty {
            path: path.to_path_buf(),
        });
    }
    if normals.is_empty() {
        Ok(OrientedPointCloud::new(points))
    } else {
        Ok(OrientedPointCloud::with_normals(points, normals)?)
    }
}

/// `x y z [nx ny nz]` per line; `#` starts a comment line. All rows must
/// agree on whether normals are present.
pub fn parse_xyz(text: &str, path: &Path) -> Result<OrientedPointCloud> {
    let mut points = Vec::new();
    let mut normals = Vec::new();
    let mut width = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 && fields.len() != 6 {
            return Err(parse_err(
                path,
                i + 1,
                format!("expected 3 or 6 columns, found {}", fields.len()),
            ));
        }
        if *width.get_or_insert(fields.len()) != fields.len() {
            return Err(parse_err(path, i + 1, "column count differs from earlier rows"));
        }
        let v = parse_floats(&fields, path, i + 1)?;
        points.push(Vector3::new(v[0], v[1], v[2]));
        if v.len() == 6 {
            normals.push(Vector3::new(v[3], v[4], v[5]));
        }
    }
    build(points, normals, path)
}

/// ASCII PLY with a vertex element carrying x, y, z and optionally nx, ny,
/// nz. Other vertex properties and later elements are ignored.
pub fn parse_ply(text: &str, path: &Path) -> Result<OrientedPointCloud> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, l)) if l.trim() == "ply" => {}
        _ => return Err(parse_err(path, 1, "missing 'ply' magic")),
    }
    let mut vertex_count = None;
    let mut in_vertex = false;
    let mut props: Vec<String> = Vec::new();
    let mut header_done = false;
    for (i, raw) in lines.by_ref() {
        let f: Vec<&str> = raw.split_whitespace().collect();
        match f.as_slice() {
            [] => {}
            ["format", kind, _] => {
                if *kind != "ascii" {
                    return Err(parse_err(path, i + 1, format!("unsupported PLY format '{kind}'")));
                }
            }
            ["comment", ..] | ["obj_info", ..] => {}
            ["element", name, count] => {
                in_vertex = *name == "vertex";
                if in_vertex {
                    let n = count
                        .parse::<usize>()
                        .map_err(|_| parse_err(path, i + 1, "bad vertex count"))?;
                    vertex_count = Some(n);
                } else if vertex_count.is_none() {
                    return Err(parse_err(path, i + 1, "vertex element must come first"));
                }
            }
            ["property", "list", ..] => {
                if in_vertex {
                    return Err(parse_err(path, i + 1, "list properties on vertices are not supported"));
                }
            }
            ["property", _, name] => {
                if in_vertex {
                    props.push((*name).to_string());
                }
            }
            ["end_header"] => {
                header_done = true;
                break;
            }
            _ => {
                return Err(parse_err(
                    path,
                    i + 1,
                    format!("unexpected header line '{}'", raw.trim()),
                ))
            }
        }
    }
    if !header_done {
        return Err(parse_err(path, text.lines().count(), "header has no end_header"));
    }
    let n = vertex_count.ok_or_else(|| parse_err(path, 1, "no vertex element"))?;
    let col = |name: &str| props.iter().position(|p| p == name);
    let (x, y, z) = match (col("x"), col("y"), col("z")) {
        (Some(x), Some(y), Some(z)) => (x, y, z),
        _ => return Err(parse_err(path, 1, "vertex element lacks x, y, z")),
    };
    let normal_cols = match (col("nx"), col("ny"), col("nz")) {
        (Some(a), Some(b), Some(c)) => Some((a, b, c)),
        _ => None,
    };
    let mut points = Vec::with_capacity(n);
    let mut normals = Vec::new();
    for (i, raw) in lines {
        if points.len() == n {
            break;
        }
        let fields: Vec<&str> = raw.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() != props.len() {
            return Err(parse_err(
                path,
                i + 1,
                format!("expected {} values, found {}", props.len(), fields.len()),
            ));
        }
        let v = parse_floats(&fields, path, i + 1)?;
        points.push(Vector3::new(v[x], v[y], v[z]));
        if let Some((a, b, c)) = normal_cols {
            normals.push(Vector3::new(v[a], v[b], v[c]));
        }
    }
    if points.len() < n {
        return Err(parse_err(
            path,
            text.lines().count(),
            format!("expected {n} vertices, found {}", points.len()),
        ));
    }
    build(points, normals, path)
}

fn normal_rows(cloud: &OrientedPointCloud) -> Vec<Option<Vector3<f64>>> {
    match &cloud.normals {
        Some(n) => n.clone(),
        None => vec![None; cloud.len()],
    }
}

/// Writes `x y z` or `x y z nx ny nz` rows (normals only when every point
/// has one), with shortest round-trip number formatting.
pub fn format_xyz(cloud: &OrientedPointCloud) -> String {
    let normals = normal_rows(cloud);
    let all = normals.iter().all(Option::is_some) && cloud.has_normals();
    let mut s = String::new();
    for (p, n) in cloud.points.iter().zip(&normals) {
        let _ = write!(s, "{} {} {}", p.x, p.y, p.z);
        if all {
            let n = n.unwrap();
            let _ = write!(s, " {} {} {}", n.x, n.y, n.z);
        }
        s.push('\n');
    }
    s
}

pub fn format_ply(cloud: &OrientedPointCloud) -> String {
    let normals = normal_rows(cloud);
    let all = normals.iter().all(Option::is_some) && cloud.has_normals();
    let mut s = String::from("ply\nformat ascii 1.0\n");
    let _ = writeln!(s, "element vertex {}", cloud.len());
    s.push_str("property double x\nproperty double y\nproperty double z\n");
    if all {
        s.push_str("property double nx\nproperty double ny\nproperty double nz\n");
    }
    s.push_str("end_header\n");
    for (p, n) in cloud.points.iter().zip(&normals) {
        let _ = write!(s, "{} {} {}", p.x, p.y, p.z);
        if all {
            let n = n.unwrap();
            let _ = write!(s, " {} {} {}", n.x, n.y, n.z);
        }
        s.push('\n');
    }
    s
}

pub fn write_cloud(path: &Path, cloud: &OrientedPointCloud) -> Result<()> {
    let text = match CloudFormat::from_path(path) {
        CloudFormat::Xyz => format_xyz(cloud),
        CloudFormat::Ply => format_ply(cloud),
    };
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn xyz_without_normals() {
        let c = parse_xyz("# comment\n0 0 0\n1 0 0\n\n0 1 0\n", Path::new("a.xyz")).unwrap();
        assert_eq!(c.len(), 3);
        assert!(!c.has_normals());
        assert_eq!(c.points[1], Vector3::x());
    }

    #[test]
    fn xyz_bad_row_names_line() {
        let e = parse_xyz("0 0 0\na b c\n", Path::new("a.xyz")).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }), "{e}");
        assert!(e.to_string().contains(":2:"));
    }

    #[test]
    fn xyz_mixed_widths_rejected() {
        assert!(parse_xyz("0 0 0\n0 0 0 0 0 1\n", Path::new("a")).is_err());
    }

    #[test]
    fn empty_input() {
        assert!(matches!(
            parse_xyz("# nothing\n", Path::new("e")),
            Err(Error::Empty { .. })
        ));
    }

    #[test]
    fn ply_normals_are_renormalized() {
        let text = "ply\nformat ascii 1.0\ncomment x\nelement vertex 2\nproperty float x\nproperty float y\n\
                    property float z\nproperty float nx\nproperty float ny\nproperty float nz\n\
                    element face 0\nproperty list uchar int vertex_indices\nend_header\n\
                    0 0 0 0 0 2\n1 2 3 3 0 4\n";
        let c = parse_ply(text, Path::new("a.ply")).unwrap();
        let n = c.unit_normals().unwrap();
        assert_eq!(n[0], Vector3::z());
        assert!((n[1] - Vector3::new(0.6, 0.0, 0.8)).norm() < 1e-15);
    }

    #[test]
    fn round_trip_is_exact() {
        let pts = vec![Vector3::new(0.1, -1.0 / 3.0, 1e-300), Vector3::new(2.5, 7.0, -0.0)];
        let nrm = vec![Vector3::new(0.0, 0.6, 0.8), Vector3::new(1.0, 0.0, 0.0)];
        let c = OrientedPointCloud::with_normals(pts, nrm).unwrap();
        assert_eq!(parse_xyz(&format_xyz(&c), Path::new("a")).unwrap(), c);
        assert_eq!(parse_ply(&format_ply(&c), Path::new("a")).unwrap(), c);
    }
}
