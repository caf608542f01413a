//! Text formats for meshes, boundary data, fields, embeddings and families, plus the JSON
//! and CSV writers used for reports.
//!
//! All text formats are line oriented and whitespace delimited; blank lines and anything
//! after `#` are ignored. Floats are written in shortest round-trip form, so every file
//! re-parses to identical values.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use qlm_core::mesh::{MetricField, ScalarField, TriMesh, VectorField};
use qlm_core::{BoundaryData, Embedding, Error, Result};
use serde::Serialize;
use serde_json::Value;

pub const SCHEMA_VERSION: u32 = 1;

struct Lines<'a> {
    lines: Vec<(usize, Vec<&'a str>)>,
    pos: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        let lines = text
            .lines()
            .enumerate()
            .filter_map(|(i, l)| {
                let l = l.split('#').next().unwrap_or("");
                let toks: Vec<&str> = l.split_whitespace().collect();
                (!toks.is_empty()).then_some((i + 1, toks))
            })
            .collect();
        Lines { lines, pos: 0 }
    }

    fn next(&mut self) -> Option<(usize, Vec<&'a str>)> {
        let l = self.lines.get(self.pos).cloned();
        self.pos += 1;
        l
    }

    fn last_line(&self) -> usize {
        self.lines.last().map_or(0, |l| l.0)
    }

    fn rows<T>(&mut self, name: &str, count: usize, width: usize, f: impl Fn(usize, &str) -> Result<T>) -> Result<Vec<Vec<T>>> {
        let mut out = Vec::with_capacity(count);
        for k in 0..count {
            let Some((line, toks)) = self.next() else {
                return Err(parse_err(
                    self.last_line(),
                    format!("section `{name}` ended after {k} of {count} rows"),
                ));
            };
            if toks.len() != width {
                return Err(parse_err(
                    line,
                    format!("section `{name}` expects {width} values per row, found {}", toks.len()),
                ));
            }
            out.push(toks.iter().map(|t| f(line, t)).collect::<Result<Vec<T>>>()?);
        }
        Ok(out)
    }

    fn floats(&mut self, name: &str, count: usize, width: usize) -> Result<Vec<Vec<f64>>> {
        self.rows(name, count, width, |line, t| {
            let v = parse_num::<f64>(line, t, name)?;
            if !v.is_finite() {
                return Err(parse_err(line, format!("non-finite value in `{name}`")));
            }
            Ok(v)
        })
    }
}

fn parse_err(line: usize, message: String) -> Error {
    Error::Parse { line, message }
}

fn parse_num<T: std::str::FromStr>(line: usize, tok: &str, what: &str) -> Result<T> {
    tok.parse()
        .map_err(|_| parse_err(line, format!("cannot parse `{tok}` as {what}")))
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    })
}

/// A mesh file: `f i j k` faces, `l e LENGTH` per-edge lengths in the mesh's edge
/// numbering, `v x y z` seed positions in vertex order.
#[derive(Clone, Debug, PartialEq)]
pub struct MeshFile {
    pub mesh: TriMesh,
    /// Taken from the positions when the file has no `l` records.
    pub lengths: Option<Vec<f64>>,
}

impl MeshFile {
    pub fn new(mesh: TriMesh, metric: &MetricField) -> Self {
        MeshFile {
            mesh,
            lengths: Some(metric.lengths().to_vec()),
        }
    }

    pub fn metric(&self) -> Result<MetricField> {
        match (&self.lengths, self.mesh.positions()) {
            (Some(l), _) => MetricField::new(&self.mesh, l.clone()),
            (None, Some(p)) => MetricField::from_positions(&self.mesh, p),
            (None, None) => Err(Error::InvalidParameter(
                "mesh file needs `l` records or `v` positions".into(),
            )),
        }
    }
}

fn finite(line: usize, tok: &str, what: &str) -> Result<f64> {
    let v = parse_num::<f64>(line, tok, what)?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(parse_err(line, format!("non-finite {what}")))
    }
}

fn arity(line: usize, toks: &[&str], n: usize) -> Result<()> {
    if toks.len() != n + 1 {
        return Err(parse_err(
            line,
            format!("`{}` record takes {n} values, found {}", toks[0], toks.len() - 1),
        ));
    }
    Ok(())
}

pub fn parse_mesh(text: &str) -> Result<MeshFile> {
    let mut lines = Lines::new(text);
    let mut faces = Vec::new();
    let mut positions = Vec::new();
    let mut lengths: Vec<(usize, usize, f64)> = Vec::new();
    while let Some((line, toks)) = lines.next() {
        match toks[0] {
            "f" => {
                arity(line, &toks, 3)?;
                let mut f = [0usize; 3];
                for k in 0..3 {
                    f[k] = parse_num(line, toks[k + 1], "vertex id")?;
                }
                faces.push(f);
            }
            "v" => {
                arity(line, &toks, 3)?;
                positions.push([0, 1, 2].map(|k| finite(line, toks[k + 1], "coordinate")).into_iter().collect::<Result<Vec<_>>>()?);
            }
            "l" => {
                arity(line, &toks, 2)?;
                let e = parse_num(line, toks[1], "edge id")?;
                lengths.push((line, e, finite(line, toks[2], "edge length")?));
            }
            other => return Err(parse_err(line, format!("unknown record `{other}`"))),
        }
    }
    if faces.is_empty() {
        return Err(parse_err(lines.last_line(), "mesh file has no `f` records".into()));
    }
    let positions: Option<Vec<[f64; 3]>> =
        (!positions.is_empty()).then(|| positions.into_iter().map(|p| [p[0], p[1], p[2]]).collect());
    let mesh = TriMesh::new(faces, positions)?;
    let lengths = if lengths.is_empty() {
        None
    } else {
        let ne = mesh.num_edges();
        let mut out = vec![f64::NAN; ne];
        for (line, e, l) in lengths {
            if e >= ne {
                return Err(parse_err(line, format!("edge id {e} out of range ({ne} edges)")));
            }
            if !out[e].is_nan() {
                return Err(parse_err(line, format!("edge {e} given twice")));
            }
            out[e] = l;
        }
        if let Some(e) = out.iter().position(|l| l.is_nan()) {
            return Err(Error::InvalidParameter(format!("edge {e} has no `l` record")));
        }
        Some(out)
    };
    Ok(MeshFile { mesh, lengths })
}

pub fn read_mesh(path: &Path) -> Result<MeshFile> {
    parse_mesh(&read_text(path)?)
}

fn push_f(out: &mut String, vals: &[f64]) {
    for (k, v) in vals.iter().enumerate() {
        if k > 0 {
            out.push(' ');
        }
        let _ = write!(out, "{v:e}");
    }
    out.push('\n');
}

fn push_positions(s: &mut String, p: &[[f64; 3]]) {
    for q in p {
        s.push_str("v ");
        push_f(s, q);
    }
}

pub fn format_mesh(m: &MeshFile) -> String {
    let mut s = String::from("# qlm mesh\n");
    if let Some(p) = m.mesh.positions() {
        push_positions(&mut s, p);
    }
    for f in m.mesh.faces() {
        let _ = writeln!(s, "f {} {} {}", f[0], f[1], f[2]);
    }
    if let Some(l) = &m.lengths {
        for (e, x) in l.iter().enumerate() {
            let _ = writeln!(s, "l {e} {x:e}");
        }
    }
    s
}

/// Boundary data: `mesh <path>` (relative to the data file), `time_symmetric <0|1>`,
/// `normH <count>` with one value per vertex, and optionally `V <count>` with two
/// intrinsic components per face.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryFile {
    pub mesh_path: PathBuf,
    pub norm_h: Vec<f64>,
    pub v: Option<Vec<[f64; 2]>>,
    pub time_symmetric: Option<bool>,
}

impl BoundaryFile {
    pub fn from_data(data: &BoundaryData, mesh_path: impl Into<PathBuf>) -> Self {
        BoundaryFile {
            mesh_path: mesh_path.into(),
            norm_h: data.norm_h.values.clone(),
            v: (!data.v.is_zero()).then(|| data.v.values.clone()),
            time_symmetric: Some(data.time_symmetric),
        }
    }

    pub fn boundary_data(&self, mesh: &MeshFile) -> Result<BoundaryData> {
        let metric = mesh.metric()?;
        let m = &mesh.mesh;
        let norm_h = ScalarField::named(m, "normH", self.norm_h.clone())?;
        let v = match &self.v {
            Some(v) => VectorField::named(m, "V", v.clone())?,
            None => VectorField::zeros(m),
        };
        let ts = self.time_symmetric.unwrap_or(v.is_zero());
        BoundaryData::new(m.clone(), metric, norm_h, v, ts)
    }
}

pub fn parse_boundary(text: &str) -> Result<BoundaryFile> {
    let mut lines = Lines::new(text);
    let mut mesh_path = None;
    let mut norm_h = None;
    let mut v = None;
    let mut ts = None;
    while let Some((line, toks)) = lines.next() {
        let dup = |seen: bool| {
            if seen {
                Err(parse_err(line, format!("duplicate `{}`", toks[0])))
            } else {
                Ok(())
            }
        };
        match toks[0] {
            "mesh" => {
                dup(mesh_path.is_some())?;
                arity(line, &toks, 1)?;
                mesh_path = Some(PathBuf::from(toks[1]));
            }
            "time_symmetric" => {
                dup(ts.is_some())?;
                arity(line, &toks, 1)?;
                ts = Some(match toks[1] {
                    "1" | "true" => true,
                    "0" | "false" => false,
                    t => return Err(parse_err(line, format!("time_symmetric must be 0 or 1, found `{t}`"))),
                });
            }
            "normH" => {
                dup(norm_h.is_some())?;
                arity(line, &toks, 1)?;
                let n = parse_num(line, toks[1], "count")?;
                norm_h = Some(lines.floats("normH", n, 1)?.into_iter().map(|r| r[0]).collect::<Vec<_>>());
            }
            "V" => {
                dup(v.is_some())?;
                arity(line, &toks, 1)?;
                let n = parse_num(line, toks[1], "count")?;
                v = Some(lines.floats("V", n, 2)?.into_iter().map(|r| [r[0], r[1]]).collect::<Vec<_>>());
            }
            other => return Err(parse_err(line, format!("unknown entry `{other}`"))),
        }
    }
    let end = lines.last_line();
    Ok(BoundaryFile {
        mesh_path: mesh_path.ok_or_else(|| parse_err(end, "missing `mesh <path>`".into()))?,
        norm_h: norm_h.ok_or_else(|| parse_err(end, "missing `normH` array".into()))?,
        v,
        time_symmetric: ts,
    })
}

pub fn format_boundary(b: &BoundaryFile) -> String {
    let mut s = String::from("# qlm boundary data\n");
    let _ = writeln!(s, "mesh {}", b.mesh_path.display());
    if let Some(t) = b.time_symmetric {
        let _ = writeln!(s, "time_symmetric {}", t as u8);
    }
    let _ = writeln!(s, "normH {}", b.norm_h.len());
    b.norm_h.iter().for_each(|x| push_f(&mut s, &[*x]));
    if let Some(v) = &b.v {
        let _ = writeln!(s, "V {}", v.len());
        v.iter().for_each(|x| push_f(&mut s, x));
    }
    s
}

/// Reads a boundary-data file and the mesh it refers to.
pub fn load_boundary(path: &Path) -> Result<BoundaryData> {
    let b = parse_boundary(&read_text(path)?)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mesh = read_mesh(&base.join(&b.mesh_path))?;
    b.boundary_data(&mesh)
}

/// Writes `mesh.txt` and `data.txt` into `dir`.
pub fn save_boundary(dir: &Path, data: &BoundaryData) -> Result<()> {
    write_file(&dir.join("mesh.txt"), &format_mesh(&MeshFile::new(data.mesh.clone(), &data.metric)))?;
    write_file(&dir.join("data.txt"), &format_boundary(&BoundaryFile::from_data(data, "mesh.txt")))
}

/// A named per-vertex field: `field <name> <count>` followed by one value per line.
pub fn parse_field(text: &str) -> Result<(String, Vec<f64>)> {
    let mut lines = Lines::new(text);
    let Some((line, toks)) = lines.next() else {
        return Err(parse_err(0, "empty field file".into()));
    };
    if toks.len() != 3 || toks[0] != "field" {
        return Err(parse_err(line, "expected `field <name> <count>`".into()));
    }
    let n = parse_num::<usize>(line, toks[2], "count")?;
    let name = toks[1].to_string();
    let vals = lines.floats(&name, n, 1)?.into_iter().map(|r| r[0]).collect();
    if let Some((line, _)) = lines.next() {
        return Err(parse_err(line, format!("trailing data after {n} values of `{name}`")));
    }
    Ok((name, vals))
}

pub fn read_field(path: &Path, mesh: &TriMesh) -> Result<ScalarField> {
    let (name, vals) = parse_field(&read_text(path)?)?;
    ScalarField::named(mesh, &name, vals)
}

pub fn format_field(name: &str, vals: &[f64]) -> String {
    let mut s = format!("field {name} {}\n", vals.len());
    vals.iter().for_each(|x| push_f(&mut s, &[*x]));
    s
}

pub const GAUGE_NOTE: &str = "# gauge: lumped-area centroid at the origin; principal axes of the vertex \
second-moment tensor along x, y, z in descending order; third moment along each axis non-negative";

/// `v` records with the gauge as a header comment.
pub fn format_embedding(e: &Embedding) -> String {
    let mut s = format!(
        "{GAUGE_NOTE}\n# edge residual {:e}, iterations {}\n",
        e.edge_residual, e.iterations
    );
    push_positions(&mut s, &e.positions);
    s
}

pub fn parse_embedding(text: &str, mesh: &TriMesh) -> Result<Embedding> {
    let mut lines = Lines::new(text);
    let mut p = Vec::new();
    while let Some((line, toks)) = lines.next() {
        if toks[0] != "v" {
            return Err(parse_err(line, format!("embedding files hold only `v` records, found `{}`", toks[0])));
        }
        arity(line, &toks, 3)?;
        p.push([
            finite(line, toks[1], "coordinate")?,
            finite(line, toks[2], "coordinate")?,
            finite(line, toks[3], "coordinate")?,
        ]);
    }
    Embedding::from_positions(mesh, p)
}

/// Members of a data family: `family <count>` then rows `t path`, paths relative to the file.
pub fn parse_family(text: &str, base: &Path) -> Result<Vec<(f64, PathBuf)>> {
    let mut lines = Lines::new(text);
    let Some((line, toks)) = lines.next() else {
        return Err(parse_err(0, "empty family file".into()));
    };
    if toks[0] != "family" || toks.len() != 2 {
        return Err(parse_err(line, "expected `family <count>`".into()));
    }
    let n = parse_num::<usize>(line, toks[1], "count")?;
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let Some((line, toks)) = lines.next() else {
            return Err(parse_err(lines.last_line(), format!("family ended after {k} of {n} members")));
        };
        if toks.len() != 2 {
            return Err(parse_err(line, "family rows are `<t> <path>`".into()));
        }
        let t = parse_num::<f64>(line, toks[0], "family parameter")?;
        out.push((t, base.join(toks[1])));
    }
    Ok(out)
}

pub fn format_family(members: &[(f64, String)]) -> String {
    let mut s = format!("family {}\n", members.len());
    for (t, p) in members {
        let _ = writeln!(s, "{t:e} {p}");
    }
    s
}

/// Pretty JSON with every float written to 17 significant digits.
pub fn to_json(value: &impl Serialize) -> Result<String> {
    let v = serde_json::to_value(value)
        .map_err(|e| Error::InvalidParameter(format!("serialization failed: {e}")))?;
    let mut s = String::new();
    write_value(&mut s, &v, 0);
    s.push('\n');
    Ok(s)
}

fn write_value(s: &mut String, v: &Value, depth: usize) {
    let pad = |s: &mut String, d: usize| {
        s.push('\n');
        s.extend(std::iter::repeat("  ").take(d));
    };
    match v {
        Value::Null => s.push_str("null"),
        Value::Bool(b) => s.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                let _ = write!(s, "{i}");
            } else if let Some(u) = n.as_u64() {
                let _ = write!(s, "{u}");
            } else {
                let f = n.as_f64().unwrap_or(f64::NAN);
                if f.is_finite() {
                    let _ = write!(s, "{f:.16e}");
                } else {
                    s.push_str("null");
                }
            }
        }
        Value::String(t) => s.push_str(&Value::String(t.clone()).to_string()),
        Value::Array(a) if a.is_empty() => s.push_str("[]"),
        Value::Array(a) => {
            let flat = a.iter().all(|x| x.is_number() || x.is_null());
            s.push('[');
            for (k, x) in a.iter().enumerate() {
                if k > 0 {
                    s.push(',');
                    if flat {
                        s.push(' ');
                    }
                }
                if !flat {
                    pad(s, depth + 1);
                }
                write_value(s, x, depth + 1);
            }
            if !flat {
                pad(s, depth);
            }
            s.push(']');
        }
        Value::Object(o) if o.is_empty() => s.push_str("{}"),
        Value::Object(o) => {
            s.push('{');
            for (k, (key, x)) in o.iter().enumerate() {
                if k > 0 {
                    s.push(',');
                }
                pad(s, depth + 1);
                s.push_str(&Value::String(key.clone()).to_string());
                s.push_str(": ");
                write_value(s, x, depth + 1);
            }
            pad(s, depth);
            s.push('}');
        }
    }
}

/// Report envelope written by every command.
#[derive(Serialize)]
pub struct Envelope<'a, T: Serialize> {
    pub schema_version: u32,
    pub command: &'a str,
    pub report: T,
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    std::fs::write(path, contents).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    })
}

/// Writes rows of floats under a header.
pub fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> Result<()> {
    let csv_err = |e: csv::Error| Error::InvalidParameter(format!("csv: {e}"));
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(row.iter().map(|v| format!("{v:e}"))).map_err(csv_err)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::InvalidParameter(format!("csv: {e}")))?;
    write_file(path, &String::from_utf8_lossy(&bytes))
}
