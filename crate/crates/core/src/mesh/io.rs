//! Plain-text mesh files.
//!
//! Points: a count line, then `x y z` per node (micrometres).
//! Elements: a count line, then `Tt n0 n1 n2 n3 tag` per tetrahedron.
//! Fibres: a line `1`, then `fx fy fz` per element.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;

use super::{Mesh, Point};
use crate::error::{Error, Result};

/// File triple sharing a common stem.
#[derive(Debug, Clone)]
pub struct MeshPaths {
    pub points: PathBuf,
    pub elements: PathBuf,
    pub fibers: Option<PathBuf>,
}

impl MeshPaths {
    pub fn from_stem(stem: &Path) -> Self {
        let fib = stem.with_extension("lon");
        MeshPaths {
            points: stem.with_extension("pts"),
            elements: stem.with_extension("elem"),
            fibers: fib.exists().then_some(fib),
        }
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn perr(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { file: path.display().to_string(), line, msg: msg.into() }
}

fn body<'a>(path: &Path, text: &'a str) -> Result<(usize, impl Iterator<Item = (usize, &'a str)>)> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty());
    let (ln, head) = lines.next().ok_or_else(|| perr(path, 1, "empty file"))?;
    let count = head
        .split_whitespace()
        .next()
        .and_then(|t| t.parse::<usize>().ok())
        .ok_or_else(|| perr(path, ln, format!("expected a count, found `{head}`")))?;
    Ok((count, lines))
}

fn floats<const N: usize>(path: &Path, ln: usize, line: &str) -> Result<[f64; N]> {
    let mut out = [0.0f64; N];
    let mut it = line.split_whitespace();
    for slot in out.iter_mut() {
        let tok = it.next().ok_or_else(|| perr(path, ln, format!("expected {N} numbers")))?;
        *slot = tok.parse().map_err(|_| perr(path, ln, format!("not a number: `{tok}`")))?;
        if !slot.is_finite() {
            return Err(perr(path, ln, format!("non-finite value `{tok}`")));
        }
    }
    Ok(out)
}

pub fn read_points(path: &Path) -> Result<Vec<Point>> {
    let text = read(path)?;
    let (n, lines) = body(path, &text)?;
    let mut pts = Vec::with_capacity(n);
    for (ln, line) in lines {
        if pts.len() == n {
            return Err(perr(path, ln, format!("more than {n} points")));
        }
        let [x, y, z] = floats::<3>(path, ln, line)?;
        pts.push(Point::new(x, y, z));
    }
    if pts.len() != n {
        return Err(perr(path, 1, format!("header declares {n} points, found {}", pts.len())));
    }
    Ok(pts)
}

pub fn read_elements(path: &Path, n_nodes: usize) -> Result<(Vec<[u32; 4]>, Vec<u16>)> {
    let text = read(path)?;
    let (m, lines) = body(path, &text)?;
    let mut elems = Vec::with_capacity(m);
    let mut tags = Vec::with_capacity(m);
    for (ln, line) in lines {
        if elems.len() == m {
            return Err(perr(path, ln, format!("more than {m} elements")));
        }
        let mut it = line.split_whitespace();
        match it.next() {
            Some("Tt") => {}
            other => {
                return Err(perr(path, ln, format!("expected `Tt`, found `{}`", other.unwrap_or(""))))
            }
        }
        let mut e = [0u32; 4];
        for slot in e.iter_mut() {
            let tok = it.next().ok_or_else(|| perr(path, ln, "expected 4 node indices and a tag"))?;
            let v: u32 = tok.parse().map_err(|_| perr(path, ln, format!("bad node index `{tok}`")))?;
            if v as usize >= n_nodes {
                return Err(perr(path, ln, format!("node index {v} out of range ({n_nodes} nodes)")));
            }
            *slot = v;
        }
        let tok = it.next().ok_or_else(|| perr(path, ln, "missing tag"))?;
        let tag: u16 = tok.parse().map_err(|_| perr(path, ln, format!("bad tag `{tok}`")))?;
        elems.push(e);
        tags.push(tag);
    }
    if elems.len() != m {
        return Err(perr(path, 1, format!("header declares {m} elements, found {}", elems.len())));
    }
    Ok((elems, tags))
}

pub fn read_fibers(path: &Path, n_elements: usize) -> Result<Vec<Vector3<f64>>> {
    let text = read(path)?;
    let (_, lines) = body(path, &text)?;
    let mut out = Vec::with_capacity(n_elements);
    for (ln, line) in lines {
        let [x, y, z] = floats::<3>(path, ln, line)?;
        out.push(Vector3::new(x, y, z));
    }
    if out.len() != n_elements {
        return Err(perr(path, 1, format!("{} fibres for {n_elements} elements", out.len())));
    }
    Ok(out)
}

/// Reads a mesh, reporting degenerate elements by file and line.
pub fn read_mesh(paths: &MeshPaths) -> Result<Mesh> {
    let nodes = read_points(&paths.points)?;
    let (elems, tags) = read_elements(&paths.elements, nodes.len())?;
    let mesh = Mesh::new(nodes, elems, tags).map_err(|e| match e {
        Error::Validation(msg) if msg.contains("zero volume") => {
            let idx: usize = msg
                .split_whitespace()
                .nth(1)
                .and_then(|t| t.parse().ok())
                .unwrap_or(0);
            perr(&paths.elements, idx + 2, "element has zero volume")
        }
        other => other,
    })?;
    match &paths.fibers {
        Some(f) => {
            let fib = read_fibers(f, mesh.n_elements())?;
            mesh.with_fibers(fib)
        }
        None => Ok(mesh),
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn points_text(nodes: &[Point]) -> String {
    let mut s = String::with_capacity(nodes.len() * 40);
    let _ = writeln!(s, "{}", nodes.len());
    for p in nodes {
        let _ = writeln!(s, "{} {} {}", p.x, p.y, p.z);
    }
    s
}

pub fn elements_text(elems: &[[u32; 4]], tags: &[u16]) -> String {
    let mut s = String::with_capacity(elems.len() * 32);
    let _ = writeln!(s, "{}", elems.len());
    for (e, t) in elems.iter().zip(tags) {
        let _ = writeln!(s, "Tt {} {} {} {} {}", e[0], e[1], e[2], e[3], t);
    }
    s
}

pub fn fibers_text(fibers: &[Vector3<f64>]) -> String {
    let mut s = String::with_capacity(fibers.len() * 40);
    s.push_str("1\n");
    for f in fibers {
        let _ = writeln!(s, "{} {} {}", f.x, f.y, f.z);
    }
    s
}

/// Writes `stem.pts`, `stem.elem` and, when present, `stem.lon`.
pub fn write_mesh(mesh: &Mesh, stem: &Path) -> Result<MeshPaths> {
    let paths = MeshPaths {
        points: stem.with_extension("pts"),
        elements: stem.with_extension("elem"),
        fibers: mesh.fibers.as_ref().map(|_| stem.with_extension("lon")),
    };
    write(&paths.points, &points_text(&mesh.nodes))?;
    write(&paths.elements, &elements_text(&mesh.elements, &mesh.tags))?;
    if let (Some(f), Some(p)) = (&mesh.fibers, &paths.fibers) {
        write(p, &fibers_text(f))?;
    }
    Ok(paths)
}

/// Writes one value per line with a count header.
pub fn write_scalars(path: &Path, values: &[f64]) -> Result<()> {
    let mut s = String::with_capacity(values.len() * 20);
    let _ = writeln!(s, "{}", values.len());
    for v in values {
        let _ = writeln!(s, "{v}");
    }
    write(path, &s)
}

pub fn read_scalars(path: &Path) -> Result<Vec<f64>> {
    let text = read(path)?;
    let (n, lines) = body(path, &text)?;
    let mut out = Vec::with_capacity(n);
    for (ln, line) in lines {
        let [v] = floats::<1>(path, ln, line)?;
        out.push(v);
    }
    if out.len() != n {
        return Err(perr(path, 1, format!("header declares {n} values, found {}", out.len())));
    }
    Ok(out)
}
