//! ASCII PLY point clouds with `x y z` and optional `nx ny nz` vertex
//! properties. Other elements are skipped; binary encodings are rejected.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::sampler::PointCloud;

struct Element {
    name: String,
    count: usize,
    properties: Vec<String>,
    has_list: bool,
    header_line: usize,
}

pub fn read_ply(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    parse_ply(&super::read_text(path)?, path)
}

pub fn write_ply(cloud: &PointCloud, path: impl AsRef<Path>) -> Result<()> {
    super::write_bytes(path.as_ref(), format_ply(cloud).as_bytes())
}

/// Full-precision ASCII serialization (shortest round-trip decimal form).
pub fn format_ply(cloud: &PointCloud) -> String {
    let mut out = String::new();
    out.push_str("ply\nformat ascii 1.0\n");
    let _ = writeln!(out, "element vertex {}", cloud.len());
    out.push_str("property double x\nproperty double y\nproperty double z\n");
    if cloud.normals.is_some() {
        out.push_str("property double nx\nproperty double ny\nproperty double nz\n");
    }
    out.push_str("end_header\n");
    for (k, p) in cloud.points.iter().enumerate() {
        let _ = write!(out, "{} {} {}", p.x, p.y, p.z);
        if let Some(ns) = &cloud.normals {
            let n = ns[k];
            let _ = write!(out, " {} {} {}", n.x, n.y, n.z);
        }
        out.push('\n');
    }
    out
}

/// Parses PLY text; `path` only labels error messages.
pub fn parse_ply(text: &str, path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref().to_path_buf();
    let err = |line: usize, message: String| Error::Parse {
        path: path.clone(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate().map(|(k, l)| (k + 1, l));

    match lines.next() {
        Some((_, l)) if l.trim() == "ply" => {}
        _ => return Err(err(1, "missing 'ply' magic line".into())),
    }
    let mut elements: Vec<Element> = Vec::new();
    let mut format_seen = false;
    let mut header_end = None;
    for (n, line) in lines.by_ref() {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens.first().copied() {
            None | Some("comment") | Some("obj_info") => {}
            Some("format") => {
                match tokens.get(1).copied() {
                    Some("ascii") => {}
                    Some(other) if other.starts_with("binary") => {
                        return Err(Error::Format {
                            path: path.clone(),
                            message: format!("{other} PLY is not supported, convert the file to ASCII"),
                        })
                    }
                    _ => return Err(err(n, format!("unrecognized format line '{line}'"))),
                }
                format_seen = true;
            }
            Some("element") => {
                let (Some(name), Some(count), None) = (tokens.get(1), tokens.get(2), tokens.get(3)) else {
                    return Err(err(n, format!("malformed element line '{line}'")));
                };
                let count = count
                    .parse()
                    .map_err(|_| err(n, format!("invalid element count '{count}'")))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    properties: Vec::new(),
                    has_list: false,
                    header_line: n,
                });
            }
            Some("property") => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| err(n, "property before any element".into()))?;
                match tokens.as_slice() {
                    ["property", "list", _, _, name] => {
                        el.has_list = true;
                        el.properties.push(name.to_string());
                    }
                    ["property", _, name] => el.properties.push(name.to_string()),
                    _ => return Err(err(n, format!("malformed property line '{line}'"))),
                }
            }
            Some("end_header") => {
                header_end = Some(n);
                break;
            }
            Some(other) => return Err(err(n, format!("unexpected header keyword '{other}'"))),
        }
    }
    let header_end = header_end.ok_or_else(|| err(text.lines().count(), "missing end_header".into()))?;
    if !format_seen {
        return Err(err(header_end, "header has no format line".into()));
    }
    let vertex_pos = elements
        .iter()
        .position(|e| e.name == "vertex")
        .ok_or_else(|| err(header_end, "no vertex element".into()))?;
    let vertex = &elements[vertex_pos];
    if vertex.has_list {
        return Err(err(vertex.header_line, "list properties on vertices are not supported".into()));
    }
    let column = |name: &str| vertex.properties.iter().position(|p| p == name);
    let (Some(cx), Some(cy), Some(cz)) = (column("x"), column("y"), column("z")) else {
        return Err(err(vertex.header_line, "vertex element lacks x, y or z".into()));
    };
    let normal_cols = match (column("nx"), column("ny"), column("nz")) {
        (Some(a), Some(b), Some(c)) => Some([a, b, c]),
        (None, None, None) => None,
        _ => return Err(err(vertex.header_line, "incomplete normal properties".into())),
    };

    let mut body = lines.filter(|(_, l)| !l.trim().is_empty());
    let mut points = Vec::with_capacity(vertex.count);
    let mut normals = Vec::new();
    for (e_idx, el) in elements.iter().enumerate() {
        for row in 0..el.count {
            let Some((n, line)) = body.next() else {
                return Err(err(
                    text.lines().count(),
                    format!(
                        "element '{}' declares {} entries but the body ends after {row}",
                        el.name, el.count
                    ),
                ));
            };
            if e_idx != vertex_pos {
                continue;
            }
            let values: Vec<&str> = line.split_whitespace().collect();
            if values.len() != el.properties.len() {
                return Err(err(
                    n,
                    format!("expected {} values, found {}", el.properties.len(), values.len()),
                ));
            }
            let get = |c: usize| -> Result<f64> {
                let v: f64 = values[c]
                    .parse()
                    .map_err(|_| err(n, format!("invalid number '{}'", values[c])))?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(err(n, format!("non-finite value '{}'", values[c])))
                }
            };
            points.push(Vec3::new(get(cx)?, get(cy)?, get(cz)?));
            if let Some([a, b, c]) = normal_cols {
                normals.push(Vec3::new(get(a)?, get(b)?, get(c)?));
            }
        }
    }
    if let Some((n, _)) = body.next() {
        return Err(err(n, "data after the last declared element".into()));
    }
    let cloud = if normal_cols.is_some() {
        PointCloud::with_normals(points, normals)
    } else {
        PointCloud::new(points)
    };
    cloud.map_err(|e| Error::Format {
        path: PathBuf::from(&path),
        message: e.to_string(),
    })
}
