//! Legacy VTK snapshots, convergence CSV and PNG renderings.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use image::{Rgb, RgbImage};

use crate::adapt::AdaptiveRun;
use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::optimizer::{HistoryRecord, ObjectiveSpec};

/// A mesh with named point and cell arrays, as stored in a VTK file.
#[derive(Debug, Clone)]
pub struct VtkData {
    pub mesh: Mesh,
    pub point_data: Vec<(String, Vec<f64>)>,
    pub cell_data: Vec<(String, Vec<f64>)>,
}

impl VtkData {
    pub fn point(&self, name: &str) -> Option<&[f64]> {
        self.point_data.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }

    pub fn cell(&self, name: &str) -> Option<&[f64]> {
        self.cell_data.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }
}

/// Writes an ASCII `UNSTRUCTURED_GRID` of triangles with scalar arrays.
pub fn write_vtk<W: Write>(
    mut w: W,
    mesh: &Mesh,
    point_data: &[(&str, &[f64])],
    cell_data: &[(&str, &[f64])],
) -> Result<()> {
    for (name, data) in point_data {
        if data.len() != mesh.num_vertices() {
            return Err(Error::InvalidArgument(format!("point array `{name}` has {} values", data.len())));
        }
    }
    for (name, data) in cell_data {
        if data.len() != mesh.num_elements() {
            return Err(Error::InvalidArgument(format!("cell array `{name}` has {} values", data.len())));
        }
    }
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "pfafem snapshot")?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(w, "POINTS {} double", mesh.num_vertices())?;
    for p in mesh.vertices() {
        writeln!(w, "{} {} 0", p[0], p[1])?;
    }
    let ne = mesh.num_elements();
    writeln!(w, "CELLS {ne} {}", 4 * ne)?;
    for e in mesh.elements() {
        writeln!(w, "3 {} {} {}", e[0], e[1], e[2])?;
    }
    writeln!(w, "CELL_TYPES {ne}")?;
    for _ in 0..ne {
        writeln!(w, "5")?;
    }
    let section = |w: &mut W, kind: &str, count: usize, arrays: &[(&str, &[f64])]| -> Result<()> {
        if arrays.is_empty() {
            return Ok(());
        }
        writeln!(w, "{kind} {count}")?;
        for (name, data) in arrays {
            writeln!(w, "SCALARS {name} double 1")?;
            writeln!(w, "LOOKUP_TABLE default")?;
            for v in data.iter() {
                writeln!(w, "{v}")?;
            }
        }
        Ok(())
    };
    section(&mut w, "POINT_DATA", mesh.num_vertices(), point_data)?;
    section(&mut w, "CELL_DATA", ne, cell_data)?;
    Ok(())
}

/// Reads files produced by [`write_vtk`].
pub fn read_vtk<R: BufRead>(r: R) -> Result<VtkData> {
    let text: Vec<String> = r.lines().collect::<std::io::Result<_>>()?;
    let mut tokens = text.iter().skip(4).flat_map(|l| l.split_whitespace());
    let bad = |m: String| Error::Parse(format!("vtk: {m}"));
    if !text.first().is_some_and(|l| l.starts_with("# vtk DataFile")) || text.get(3).map(|l| l.trim()) != Some("DATASET UNSTRUCTURED_GRID") {
        return Err(bad("not a legacy unstructured grid".into()));
    }
    let expect = |word: &str, tokens: &mut dyn Iterator<Item = &str>| -> Result<()> {
        match tokens.next() {
            Some(t) if t == word => Ok(()),
            t => Err(bad(format!("expected `{word}`, found {t:?}"))),
        }
    };
    fn num<T: std::str::FromStr>(t: Option<&str>) -> Result<T> {
        t.and_then(|s| s.parse().ok()).ok_or_else(|| Error::Parse(format!("vtk: bad number {t:?}")))
    }
    expect("POINTS", &mut tokens)?;
    let nv: usize = num(tokens.next())?;
    tokens.next();
    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let x: f64 = num(tokens.next())?;
        let y: f64 = num(tokens.next())?;
        let _: f64 = num(tokens.next())?;
        vertices.push([x, y]);
    }
    expect("CELLS", &mut tokens)?;
    let ne: usize = num(tokens.next())?;
    tokens.next();
    let mut elements = Vec::with_capacity(ne);
    for _ in 0..ne {
        if num::<usize>(tokens.next())? != 3 {
            return Err(bad("only triangles are supported".into()));
        }
        elements.push([num(tokens.next())?, num(tokens.next())?, num(tokens.next())?]);
    }
    expect("CELL_TYPES", &mut tokens)?;
    let _: usize = num(tokens.next())?;
    for _ in 0..ne {
        let _: usize = num(tokens.next())?;
    }
    let mut point_data = Vec::new();
    let mut cell_data = Vec::new();
    let mut target: Option<(bool, usize)> = None;
    while let Some(t) = tokens.next() {
        match t {
            "POINT_DATA" => target = Some((true, num(tokens.next())?)),
            "CELL_DATA" => target = Some((false, num(tokens.next())?)),
            "SCALARS" => {
                let (is_point, count) = target.ok_or_else(|| bad("SCALARS outside a data section".into()))?;
                let name = tokens.next().ok_or_else(|| bad("unnamed array".into()))?.to_string();
                tokens.next();
                tokens.next();
                expect("LOOKUP_TABLE", &mut tokens)?;
                tokens.next();
                let values = (0..count).map(|_| num(tokens.next())).collect::<Result<Vec<f64>>>()?;
                if is_point {
                    point_data.push((name, values));
                } else {
                    cell_data.push((name, values));
                }
            }
            other => return Err(bad(format!("unexpected token `{other}`"))),
        }
    }
    Ok(VtkData { mesh: Mesh::new(vertices, elements)?, point_data, cell_data })
}

/// Snapshot of mesh `k`: `phi` and the selected eigenfunctions `w_i` as point
/// data, the indicators `eta_j` and `h_T` as cell data.
pub fn export_vtk(run: &AdaptiveRun, k: usize, spec: &ObjectiveSpec, path: &Path) -> Result<()> {
    if k >= run.states.len() || k >= run.indicators.len() || k >= run.eigens.len() {
        return Err(Error::InvalidArgument(format!("mesh {k} is not part of a run with {} meshes", run.states.len())));
    }
    let mesh = &run.meshes[k];
    let w_names: Vec<String> = spec.indices.iter().map(|i| format!("w_{i}")).collect();
    let mut points: Vec<(&str, &[f64])> = vec![("phi", run.states[k].phi.values())];
    for (name, &i) in w_names.iter().zip(&spec.indices) {
        points.push((name, &run.eigens[k].vectors[i - 1]));
    }
    let eta_names: Vec<String> = (0..run.indicators[k].len()).map(|j| format!("eta_{j}")).collect();
    let h = mesh.mesh_size();
    let mut cells: Vec<(&str, &[f64])> =
        eta_names.iter().zip(&run.indicators[k]).map(|(n, f)| (n.as_str(), f.per_element.as_slice())).collect();
    cells.push(("h_T", &h));
    write_vtk(BufWriter::new(File::create(path)?), mesh, &points, &cells)
}

pub fn read_vtk_file(path: &Path) -> Result<VtkData> {
    read_vtk(BufReader::new(File::open(path)?))
}

/// One row per outer iteration with a header line.
pub fn write_csv<W: Write>(w: W, history: &[HistoryRecord], spec: &ObjectiveSpec) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header: Vec<String> =
        ["iteration", "level", "vertices", "mesh_iteration", "objective", "psi", "gl", "abs_volume_error"]
            .map(String::from)
            .to_vec();
    header.extend(spec.indices.iter().map(|i| format!("lambda_{i}")));
    header.extend(["mu", "beta", "tau", "volume_error", "lagrangian"].map(String::from));
    out.write_record(&header)?;
    for (n, h) in history.iter().enumerate() {
        let mut row = vec![
            (n + 1).to_string(),
            h.level.to_string(),
            h.vertices.to_string(),
            h.iteration.to_string(),
            h.objective.to_string(),
            h.psi.to_string(),
            h.gl.to_string(),
            h.volume_error.abs().to_string(),
        ];
        if h.lambdas.len() != spec.indices.len() {
            return Err(Error::InvalidArgument(format!("history row {} has {} eigenvalues", n + 1, h.lambdas.len())));
        }
        row.extend(h.lambdas.iter().map(|l| l.to_string()));
        row.extend([h.mu, h.beta, h.tau, h.volume_error, h.lagrangian].map(|v| v.to_string()));
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

pub fn export_csv(run: &AdaptiveRun, spec: &ObjectiveSpec, path: &Path) -> Result<()> {
    write_csv(BufWriter::new(File::create(path)?), &run.history, spec)
}

/// Numeric columns of a CSV file with a header row, by name.
pub fn read_csv_columns<R: std::io::Read>(r: R, names: &[&str]) -> Result<Vec<Vec<f64>>> {
    let mut rd = csv::Reader::from_reader(r);
    let header = rd.headers()?.clone();
    let idx = names
        .iter()
        .map(|n| header.iter().position(|h| h == *n).ok_or_else(|| Error::Parse(format!("csv has no column `{n}`"))))
        .collect::<Result<Vec<_>>>()?;
    let mut cols = vec![Vec::new(); names.len()];
    for rec in rd.records() {
        let rec = rec?;
        for (c, &i) in cols.iter_mut().zip(&idx) {
            let v = rec.get(i).unwrap_or("");
            c.push(v.parse().map_err(|_| Error::Parse(format!("bad csv number `{v}`")))?);
        }
    }
    Ok(cols)
}

/// A scalar field to rasterize.
#[derive(Debug, Clone, Copy)]
pub enum Field<'a> {
    /// Nodal values, interpolated linearly.
    Nodal(&'a [f64]),
    /// One value per element.
    Cell(&'a [f64]),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Colormap {
    /// Blue at 0, red at 1; values are clamped to `[0, 1]`.
    Phase,
    /// Sequential dark-to-bright map normalized by the field maximum.
    Sequential,
}

pub const BACKGROUND: Rgb<u8> = Rgb([255, 255, 255]);

fn lerp(a: [f64; 3], b: [f64; 3], s: f64) -> Rgb<u8> {
    let c = |i: usize| (a[i] + s * (b[i] - a[i])).round().clamp(0.0, 255.0) as u8;
    Rgb([c(0), c(1), c(2)])
}

impl Colormap {
    pub fn color(self, t: f64) -> Rgb<u8> {
        let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
        match self {
            Colormap::Phase => lerp([0.0, 0.0, 255.0], [255.0, 0.0, 0.0], t),
            Colormap::Sequential => {
                const STOPS: [[f64; 3]; 5] =
                    [[68.0, 1.0, 84.0], [59.0, 82.0, 139.0], [33.0, 145.0, 140.0], [94.0, 201.0, 98.0], [253.0, 231.0, 37.0]];
                let x = t * (STOPS.len() - 1) as f64;
                let i = (x.floor() as usize).min(STOPS.len() - 2);
                lerp(STOPS[i], STOPS[i + 1], x - i as f64)
            }
        }
    }
}

/// Rasterizes `field` on the bounding box of `mesh`, `width` pixels wide.
/// Pixels outside the mesh get [`BACKGROUND`].
pub fn render_field(mesh: &Mesh, field: Field, colormap: Colormap, width: u32) -> Result<RgbImage> {
    let (values, nodal) = match field {
        Field::Nodal(v) => (v, true),
        Field::Cell(v) => (v, false),
    };
    let expected = if nodal { mesh.num_vertices() } else { mesh.num_elements() };
    if values.len() != expected || width == 0 {
        return Err(Error::InvalidArgument(format!("field has {} values, mesh needs {expected}", values.len())));
    }
    let scale = match colormap {
        Colormap::Phase => 1.0,
        Colormap::Sequential => {
            let m = values.iter().cloned().fold(0.0, f64::max);
            if m > 0.0 { m } else { 1.0 }
        }
    };
    let pts = mesh.vertices();
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in pts {
        for c in 0..2 {
            lo[c] = lo[c].min(p[c]);
            hi[c] = hi[c].max(p[c]);
        }
    }
    let px = (hi[0] - lo[0]) / width as f64;
    let height = (((hi[1] - lo[1]) / px).round() as u32).max(1);
    let mut img = RgbImage::from_pixel(width, height, BACKGROUND);
    for (t, e) in mesh.elements().iter().enumerate() {
        let p = e.map(|v| pts[v]);
        let det = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
        let to_pix = |x: f64, y: f64| ((x - lo[0]) / px, (hi[1] - y) / px);
        let (mut imin, mut imax, mut jmin, mut jmax) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for q in &p {
            let (i, j) = to_pix(q[0], q[1]);
            imin = imin.min(i);
            imax = imax.max(i);
            jmin = jmin.min(j);
            jmax = jmax.max(j);
        }
        let i0 = imin.floor().max(0.0) as u32;
        let i1 = (imax.ceil() as u32).min(width);
        let j0 = jmin.floor().max(0.0) as u32;
        let j1 = (jmax.ceil() as u32).min(height);
        for j in j0..j1 {
            for i in i0..i1 {
                let x = lo[0] + (i as f64 + 0.5) * px;
                let y = hi[1] - (j as f64 + 0.5) * px;
                let l1 = ((p[1][0] - x) * (p[2][1] - y) - (p[2][0] - x) * (p[1][1] - y)) / det;
                let l2 = ((p[2][0] - x) * (p[0][1] - y) - (p[0][0] - x) * (p[2][1] - y)) / det;
                let l3 = 1.0 - l1 - l2;
                const TOL: f64 = -1e-12;
                if l1 < TOL || l2 < TOL || l3 < TOL {
                    continue;
                }
                let v = if nodal { l1 * values[e[0]] + l2 * values[e[1]] + l3 * values[e[2]] } else { values[t] };
                img.put_pixel(i, j, colormap.color(v / scale));
            }
        }
    }
    Ok(img)
}

pub fn render_png(mesh: &Mesh, field: Field, colormap: Colormap, width: u32, path: &Path) -> Result<()> {
    render_field(mesh, field, colormap, width)?.save(path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{generate_domain, DomainKind, DomainSpec};

    fn disk() -> Mesh {
        generate_domain(&DomainSpec::new(DomainKind::Circle { radius: 1.0, segments: 24 }, 0)).unwrap()
    }

    #[test]
    fn vtk_round_trip() {
        let mesh = disk();
        let phi: Vec<f64> = mesh.vertices().iter().map(|p| p[0] * 0.1 + 1.0 / 3.0).collect();
        let h = mesh.mesh_size();
        let mut buf = Vec::new();
        write_vtk(&mut buf, &mesh, &[("phi", &phi)], &[("h_T", &h)]).unwrap();
        let back = read_vtk(buf.as_slice()).unwrap();
        assert_eq!(back.mesh.num_vertices(), mesh.num_vertices());
        for (a, b) in back.mesh.vertices().iter().zip(mesh.vertices()) {
            assert!((a[0] - b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12);
        }
        assert_eq!(back.point("phi").unwrap(), phi.as_slice());
        assert_eq!(back.cell("h_T").unwrap().len(), mesh.num_elements());
    }

    #[test]
    fn constant_phase_is_uniformly_red() {
        let mesh = disk();
        let ones = vec![1.0; mesh.num_vertices()];
        let img = render_field(&mesh, Field::Nodal(&ones), Colormap::Phase, 64).unwrap();
        let red = Colormap::Phase.color(1.0);
        assert_eq!(red, Rgb([255, 0, 0]));
        assert!(img.pixels().all(|p| *p == red || *p == BACKGROUND));
        assert!(img.pixels().filter(|p| **p == red).count() > 64 * 64 / 2);
    }

    #[test]
    fn zero_indicator_is_minimum_color() {
        let mesh = disk();
        let zeros = vec![0.0; mesh.num_elements()];
        let img = render_field(&mesh, Field::Cell(&zeros), Colormap::Sequential, 48).unwrap();
        let min = Colormap::Sequential.color(0.0);
        assert!(img.pixels().all(|p| *p == min || *p == BACKGROUND));
    }
}
