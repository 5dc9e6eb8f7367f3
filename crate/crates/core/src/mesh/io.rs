use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Vector3;

use super::TriMesh;
use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    Off,
    Obj,
}

impl MeshFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        match path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase())
            .as_deref()
        {
            Some("off") => Ok(Self::Off),
            Some("obj") => Ok(Self::Obj),
            _ => Err(Error::InvalidArgument(format!(
                "cannot infer mesh format of {}",
                path.display()
            ))),
        }
    }
}

/// Loads, validates and normalizes a mesh to unit total area, inferring the
/// format from the file extension.
pub fn load_mesh<T: Real>(path: impl AsRef<Path>) -> Result<TriMesh<T>> {
    let path = path.as_ref();
    load_mesh_as(path, MeshFormat::from_path(path)?)
}

pub fn load_mesh_as<T: Real>(path: impl AsRef<Path>, format: MeshFormat) -> Result<TriMesh<T>> {
    let text = std::fs::read_to_string(path)?;
    let (vertices, faces) = match format {
        MeshFormat::Off => parse_off(&text)?,
        MeshFormat::Obj => parse_obj(&text)?,
    };
    Ok(TriMesh::new(vertices, faces)?.normalized())
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

fn parse_num<T: Real>(tok: &str, line: usize) -> Result<T> {
    tok.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .map(T::lit)
        .ok_or_else(|| parse_err(line, format!("invalid coordinate {tok:?}")))
}

type RawMesh<T> = (Vec<Vector3<T>>, Vec<[usize; 3]>);

/// Parses OFF text into raw vertex and face lists (no validation beyond
/// syntax and index range).
pub fn parse_off<T: Real>(text: &str) -> Result<RawMesh<T>> {
    // Non-empty, comment-stripped lines with their 1-based numbers.
    let mut lines = text.lines().enumerate().filter_map(|(i, l)| {
        let l = l.split('#').next().unwrap_or("").trim();
        (!l.is_empty()).then_some((i + 1, l))
    });

    let (ln, header) = lines.next().ok_or_else(|| parse_err(1, "empty file"))?;
    let header_rest = header
        .strip_prefix("OFF")
        .ok_or_else(|| parse_err(ln, "expected OFF header"))?
        .trim();
    let counts_line = if header_rest.is_empty() {
        lines.next().ok_or_else(|| parse_err(ln, "missing counts line"))?
    } else {
        (ln, header_rest)
    };
    let (cl, counts) = counts_line;
    let counts: Vec<usize> = counts
        .split_whitespace()
        .map(|t| t.parse::<usize>().map_err(|_| parse_err(cl, format!("invalid count {t:?}"))))
        .collect::<Result<_>>()?;
    if counts.len() < 2 {
        return Err(parse_err(cl, "expected \"n_vertices n_faces n_edges\""));
    }
    let (nv, nf) = (counts[0], counts[1]);

    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (l, s) = lines
            .next()
            .ok_or_else(|| parse_err(text.lines().count(), "unexpected end of file in vertex list"))?;
        let toks: Vec<&str> = s.split_whitespace().collect();
        if toks.len() < 3 {
            return Err(parse_err(l, "vertex line needs three coordinates"));
        }
        vertices.push(Vector3::new(
            parse_num(toks[0], l)?,
            parse_num(toks[1], l)?,
            parse_num(toks[2], l)?,
        ));
    }

    let mut faces = Vec::with_capacity(nf);
    for _ in 0..nf {
        let (l, s) = lines
            .next()
            .ok_or_else(|| parse_err(text.lines().count(), "unexpected end of file in face list"))?;
        let idx: Vec<usize> = s
            .split_whitespace()
            .map(|t| t.parse::<usize>().map_err(|_| parse_err(l, format!("invalid index {t:?}"))))
            .collect::<Result<_>>()?;
        if idx.first() != Some(&3) || idx.len() < 4 {
            return Err(parse_err(l, "only triangular faces (\"3 i j k\") are supported"));
        }
        let face = [idx[1], idx[2], idx[3]];
        if let Some(&bad) = face.iter().find(|&&i| i >= nv) {
            return Err(parse_err(l, format!("vertex index {bad} out of range (n = {nv})")));
        }
        faces.push(face);
    }
    Ok((vertices, faces))
}

/// Parses `v` and `f` directives of OBJ text; every other directive is ignored.
pub fn parse_obj<T: Real>(text: &str) -> Result<RawMesh<T>> {
    let mut vertices = Vec::new();
    let mut face_lines = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let l = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        let mut toks = line.split_whitespace();
        match toks.next() {
            Some("v") => {
                let c: Vec<&str> = toks.collect();
                if c.len() < 3 {
                    return Err(parse_err(l, "vertex line needs three coordinates"));
                }
                vertices.push(Vector3::new(
                    parse_num(c[0], l)?,
                    parse_num(c[1], l)?,
                    parse_num(c[2], l)?,
                ));
            }
            Some("f") => face_lines.push((l, toks.map(str::to_owned).collect::<Vec<_>>())),
            _ => {}
        }
    }
    let nv = vertices.len();
    let mut faces = Vec::with_capacity(face_lines.len());
    for (l, toks) in face_lines {
        if toks.len() != 3 {
            return Err(parse_err(l, "only triangular faces are supported"));
        }
        let mut face = [0usize; 3];
        for (slot, tok) in face.iter_mut().zip(&toks) {
            let head = tok.split('/').next().unwrap_or("");
            let idx: i64 = head
                .parse()
                .map_err(|_| parse_err(l, format!("invalid index {tok:?}")))?;
            let resolved = if idx > 0 { idx - 1 } else { nv as i64 + idx };
            if idx == 0 || resolved < 0 || resolved >= nv as i64 {
                return Err(parse_err(l, format!("vertex index {idx} out of range (n = {nv})")));
            }
            *slot = resolved as usize;
        }
        faces.push(face);
    }
    Ok((vertices, faces))
}

/// Writes the mesh as OFF with shortest round-trip decimal coordinates.
pub fn save_off<T: Real>(mesh: &TriMesh<T>, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, off_string(mesh))?;
    Ok(())
}

pub(crate) fn off_string<T: Real>(mesh: &TriMesh<T>) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "OFF\n{} {} 0", mesh.n(), mesh.faces().len());
    for v in mesh.vertices() {
        let _ = writeln!(out, "{:?} {:?} {:?}", v.x.as_f64(), v.y.as_f64(), v.z.as_f64());
    }
    for f in mesh.faces() {
        let _ = writeln!(out, "3 {} {} {}", f[0], f[1], f[2]);
    }
    out
}
