//! Initial meshes of the design domains.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::f64::consts::PI;

use spade::{AngleLimit, ConstrainedDelaunayTriangulation, Point2, RefinementParameters, Triangulation};

use crate::error::{Error, Result};
use crate::mesh::{edge_key, Curve, Mesh, Point};

#[derive(Debug, Clone, PartialEq)]
pub enum DomainKind {
    UnitSquare,
    Rectangle { x: [f64; 2], y: [f64; 2] },
    /// `(0,2)² \ [1,2]²`.
    LShape,
    /// Simple counter-clockwise polygon.
    Polygon { vertices: Vec<Point> },
    /// Disk centred at the origin.
    Circle { radius: f64, segments: usize },
    /// Ring `r1 < |x| < r2` centred at the origin.
    Annulus { r1: f64, r2: f64, segments: usize },
    /// Unit disks at `(±1, 0)` joined by `(-1,1) × (-half_width, half_width)`.
    Dumbbell { half_width: f64, segments: usize },
}

/// `resolution` is the number of cells per unit length for the structured and
/// polygonal kinds; curved kinds derive their size from the segment count.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainSpec {
    pub kind: DomainKind,
    pub resolution: usize,
    pub snap_boundary: bool,
}

impl DomainSpec {
    pub fn new(kind: DomainKind, resolution: usize) -> Self {
        DomainSpec { kind, resolution, snap_boundary: false }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidDomain(m));
        match &self.kind {
            DomainKind::UnitSquare | DomainKind::LShape => {}
            DomainKind::Rectangle { x, y } => {
                if !(x[1] > x[0]) || !(y[1] > y[0]) {
                    return bad(format!("empty rectangle {x:?} × {y:?}"));
                }
            }
            DomainKind::Polygon { vertices } => check_polygon(vertices)?,
            DomainKind::Circle { radius, segments } => {
                if !(*radius > 0.0) || *segments < 3 {
                    return bad(format!("circle needs radius > 0 and ≥ 3 segments, got {radius}, {segments}"));
                }
            }
            DomainKind::Annulus { r1, r2, segments } => {
                if !(*r1 > 0.0 && r1 < r2) || *segments < 3 {
                    return bad(format!("annulus needs 0 < r1 < r2 and ≥ 3 segments, got {r1}, {r2}, {segments}"));
                }
            }
            DomainKind::Dumbbell { half_width, segments } => {
                if !(*half_width > 0.0 && *half_width < 1.0) || *segments < 8 {
                    return bad(format!(
                        "dumbbell needs 0 < half width < 1 and ≥ 8 segments, got {half_width}, {segments}"
                    ));
                }
            }
        }
        if self.resolution == 0 && !self.is_curved() {
            return bad("resolution must be positive".into());
        }
        Ok(())
    }

    fn is_curved(&self) -> bool {
        matches!(
            self.kind,
            DomainKind::Circle { .. } | DomainKind::Annulus { .. } | DomainKind::Dumbbell { .. }
        )
    }

    /// Area of the exact (not polygonal) domain.
    pub fn exact_area(&self) -> f64 {
        match &self.kind {
            DomainKind::UnitSquare => 1.0,
            DomainKind::Rectangle { x, y } => (x[1] - x[0]) * (y[1] - y[0]),
            DomainKind::LShape => 3.0,
            DomainKind::Polygon { vertices } => polygon_area(vertices),
            DomainKind::Circle { radius, .. } => PI * radius * radius,
            DomainKind::Annulus { r1, r2, .. } => PI * (r2 * r2 - r1 * r1),
            DomainKind::Dumbbell { half_width: h, .. } => {
                // two tangent disks plus the part of the handle outside both
                let s = (1.0 - h * h).sqrt();
                2.0 * PI + 4.0 * h - 2.0 * (h * s + h.asin())
            }
        }
    }
}

pub fn polygon_area(p: &[Point]) -> f64 {
    let n = p.len();
    (0..n)
        .map(|i| {
            let (a, b) = (p[i], p[(i + 1) % n]);
            a[0] * b[1] - b[0] * a[1]
        })
        .sum::<f64>()
        * 0.5
}

fn segments_cross(a: Point, b: Point, c: Point, d: Point) -> bool {
    let orient = |p: Point, q: Point, r: Point| (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0]);
    let d1 = orient(c, d, a);
    let d2 = orient(c, d, b);
    let d3 = orient(a, b, c);
    let d4 = orient(a, b, d);
    ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
}

fn check_polygon(p: &[Point]) -> Result<()> {
    let n = p.len();
    if n < 3 {
        return Err(Error::InvalidDomain(format!("polygon needs at least 3 vertices, got {n}")));
    }
    for i in 0..n {
        for j in i + 1..n {
            if p[i] == p[j] {
                return Err(Error::InvalidDomain(format!("polygon vertices {i} and {j} coincide")));
            }
        }
    }
    for i in 0..n {
        for j in i + 2..n {
            if i == 0 && j == n - 1 {
                continue;
            }
            if segments_cross(p[i], p[(i + 1) % n], p[j], p[(j + 1) % n]) {
                return Err(Error::InvalidDomain(format!("polygon edges {i} and {j} intersect")));
            }
        }
    }
    if polygon_area(p) <= 0.0 {
        return Err(Error::InvalidDomain("polygon must be counter-clockwise".into()));
    }
    Ok(())
}

pub fn generate_domain(spec: &DomainSpec) -> Result<Mesh> {
    spec.validate()?;
    let mut mesh = match &spec.kind {
        DomainKind::UnitSquare => structured_rectangle([0.0, 1.0], [0.0, 1.0], spec.resolution, spec.resolution),
        DomainKind::Rectangle { x, y } => {
            let nx = ((x[1] - x[0]) * spec.resolution as f64).round().max(1.0) as usize;
            let ny = ((y[1] - y[0]) * spec.resolution as f64).round().max(1.0) as usize;
            structured_rectangle(*x, *y, nx, ny)
        }
        DomainKind::LShape => l_shape(spec.resolution),
        DomainKind::Polygon { vertices } => {
            let h = 1.0 / spec.resolution as f64;
            let n = vertices.len();
            let mut chain = Vec::new();
            for i in 0..n {
                let (a, b) = (vertices[i], vertices[(i + 1) % n]);
                let k = ((b[0] - a[0]).hypot(b[1] - a[1]) / h).ceil().max(1.0) as usize;
                for s in 0..k {
                    let t = s as f64 / k as f64;
                    chain.push((
                        [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])],
                        1u32,
                    ));
                }
            }
            unstructured(&[chain], h, Vec::new())
        }
        DomainKind::Circle { radius, segments } => {
            let h = 2.0 * PI * radius / *segments as f64;
            let chain = arc([0.0, 0.0], *radius, 0.0, 2.0 * PI, *segments, 1, false);
            unstructured(&[chain], h, vec![Curve::Circle { center: [0.0, 0.0], radius: *radius }])
        }
        DomainKind::Annulus { r1, r2, segments } => {
            let h = 2.0 * PI * r2 / *segments as f64;
            let inner_segments = ((*segments as f64) * r1 / r2).round().max(6.0) as usize;
            let outer = arc([0.0, 0.0], *r2, 0.0, 2.0 * PI, *segments, 1, false);
            // the hole is traversed clockwise
            let inner = arc([0.0, 0.0], *r1, 2.0 * PI, 0.0, inner_segments, 2, false);
            unstructured(
                &[outer, inner],
                h,
                vec![
                    Curve::Circle { center: [0.0, 0.0], radius: *r2 },
                    Curve::Circle { center: [0.0, 0.0], radius: *r1 },
                ],
            )
        }
        DomainKind::Dumbbell { half_width, segments } => dumbbell(*half_width, *segments),
    }?;
    mesh.set_snap_boundary(spec.snap_boundary);
    Ok(mesh)
}

fn structured_rectangle(x: [f64; 2], y: [f64; 2], nx: usize, ny: usize) -> Result<Mesh> {
    let mut v = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            v.push([
                x[0] + (x[1] - x[0]) * i as f64 / nx as f64,
                y[0] + (y[1] - y[0]) * j as f64 / ny as f64,
            ]);
        }
    }
    let mut e = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let a = j * (nx + 1) + i;
            let (b, c, d) = (a + 1, a + nx + 2, a + nx + 1);
            e.push([a, b, c]);
            e.push([a, c, d]);
        }
    }
    Mesh::new(v, e)
}

fn l_shape(n: usize) -> Result<Mesh> {
    let m = 2 * n;
    let inside = |i: usize, j: usize| !(i > n && j > n);
    let mut index = HashMap::new();
    let mut v = Vec::new();
    for j in 0..=m {
        for i in 0..=m {
            if inside(i, j) {
                index.insert((i, j), v.len());
                v.push([i as f64 / n as f64, j as f64 / n as f64]);
            }
        }
    }
    let mut e = Vec::new();
    for j in 0..m {
        for i in 0..m {
            if i >= n && j >= n {
                continue;
            }
            let a = index[&(i, j)];
            let b = index[&(i + 1, j)];
            let c = index[&(i + 1, j + 1)];
            let d = index[&(i, j + 1)];
            e.push([a, b, c]);
            e.push([a, c, d]);
        }
    }
    Mesh::new(v, e)
}

/// Points on a circular arc from angle `a0` to `a1` (exclusive of the end
/// point unless `closed_end`), each carrying `tag`.
fn arc(c: Point, r: f64, a0: f64, a1: f64, n: usize, tag: u32, closed_end: bool) -> Vec<(Point, u32)> {
    let count = if closed_end { n + 1 } else { n };
    (0..count)
        .map(|k| {
            let t = a0 + (a1 - a0) * k as f64 / n as f64;
            ([c[0] + r * t.cos(), c[1] + r * t.sin()], tag)
        })
        .collect()
}

fn dumbbell(hw: f64, segments: usize) -> Result<Mesh> {
    let s = (1.0 - hw * hw).sqrt();
    let a = hw.asin();
    let arc_len = 2.0 * PI - 2.0 * a;
    let line_len = 2.0 * (1.0 - s);
    let total = 2.0 * arc_len + 2.0 * line_len;
    let h = total / segments as f64;
    let n_arc = ((arc_len / h).round() as usize).max(4);
    let n_line = ((line_len / h).round() as usize).max(1);

    let mut chain = Vec::new();
    // top of the handle, right to left
    for k in 0..n_line {
        let t = k as f64 / n_line as f64;
        chain.push(([(1.0 - s) * (1.0 - 2.0 * t), hw], 1));
    }
    chain.extend(arc([-1.0, 0.0], 1.0, a, 2.0 * PI - a, n_arc, 2, false));
    for k in 0..n_line {
        let t = k as f64 / n_line as f64;
        chain.push(([-(1.0 - s) * (1.0 - 2.0 * t), -hw], 1));
    }
    chain.extend(arc([1.0, 0.0], 1.0, PI + a, 3.0 * PI - a, n_arc, 3, false));
    unstructured(
        &[chain],
        h,
        vec![
            Curve::Straight,
            Curve::Circle { center: [-1.0, 0.0], radius: 1.0 },
            Curve::Circle { center: [1.0, 0.0], radius: 1.0 },
        ],
    )
}

/// Constrained Delaunay mesh of the region bounded by closed point loops.
/// Each loop point carries the tag of the boundary segment starting at it.
fn unstructured(loops: &[Vec<(Point, u32)>], h: f64, curves: Vec<Curve>) -> Result<Mesh> {
    let mut cdt = ConstrainedDelaunayTriangulation::<Point2<f64>>::new();
    let mut tags: HashMap<(usize, usize), u32> = HashMap::new();
    for chain in loops {
        let handles = chain
            .iter()
            .map(|(p, _)| cdt.insert(Point2::new(p[0], p[1])))
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::InvalidDomain(format!("boundary point rejected: {e:?}")))?;
        for (k, (_, tag)) in chain.iter().enumerate() {
            let (a, b) = (handles[k], handles[(k + 1) % handles.len()]);
            cdt.add_constraint(a, b);
            tags.insert(edge_key(a.index(), b.index()), *tag);
        }
    }
    let params = RefinementParameters::<f64>::new()
        .exclude_outer_faces(true)
        .keep_constraint_edges()
        .with_max_allowed_area(0.5 * 3f64.sqrt() / 2.0 * h * h)
        .with_angle_limit(AngleLimit::from_deg(25.0));
    let result = cdt.refine(params);
    let excluded: HashSet<_> = result.excluded_faces.into_iter().collect();

    let mut remap: HashMap<usize, usize> = HashMap::new();
    let mut vertices = Vec::new();
    let mut elements = Vec::new();
    for face in cdt.inner_faces() {
        if excluded.contains(&face.fix()) {
            continue;
        }
        let mut tri = [0; 3];
        for (slot, v) in face.vertices().iter().enumerate() {
            let id = v.fix().index();
            tri[slot] = *remap.entry(id).or_insert_with(|| {
                let p = v.position();
                vertices.push([p.x, p.y]);
                vertices.len() - 1
            });
        }
        elements.push(tri);
    }

    let mut boundary = BTreeMap::new();
    for ((a, b), tag) in tags {
        match (remap.get(&a), remap.get(&b)) {
            (Some(&ia), Some(&ib)) => {
                boundary.insert(edge_key(ia, ib), tag);
            }
            _ => return Err(Error::InvalidDomain("boundary vertex dropped by the mesher".into())),
        }
    }
    Mesh::with_boundary(vertices, elements, boundary, curves)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn euler(m: &Mesh) -> i64 {
        m.num_vertices() as i64 - m.num_edges() as i64 + m.num_elements() as i64
    }

    #[test]
    fn unit_square_counts() {
        let m = generate_domain(&DomainSpec::new(DomainKind::UnitSquare, 2)).unwrap();
        assert_eq!((m.num_vertices(), m.num_elements()), (9, 8));
        assert_eq!(euler(&m), 1);
    }

    #[test]
    fn l_shape_counts() {
        let m = generate_domain(&DomainSpec::new(DomainKind::LShape, 1)).unwrap();
        assert_eq!((m.num_vertices(), m.num_elements()), (8, 6));
        assert!((m.total_area() - 3.0).abs() < 1e-14);
        let m4 = generate_domain(&DomainSpec::new(DomainKind::LShape, 4)).unwrap();
        assert_eq!(euler(&m4), 1);
    }

    #[test]
    fn rectangle_area() {
        let spec = DomainSpec::new(DomainKind::Rectangle { x: [-1.0, 2.0], y: [-0.5, 1.0] }, 4);
        let m = generate_domain(&spec).unwrap();
        assert!((m.total_area() - 4.5).abs() < 1e-13);
        assert_eq!(m.num_elements(), 2 * 12 * 6);
    }

    #[test]
    fn circle_boundary_on_curve() {
        let m = generate_domain(&DomainSpec::new(DomainKind::Circle { radius: 1.0, segments: 16 }, 0)).unwrap();
        let mask = m.boundary_vertex_mask();
        assert_eq!(mask.iter().filter(|&&b| b).count(), 16);
        for (p, b) in m.vertices().iter().zip(mask) {
            if b {
                assert!((p[0].hypot(p[1]) - 1.0).abs() < 1e-12);
            }
        }
        assert_eq!(euler(&m), 1);
        assert!(m.min_angle() > 20f64.to_radians());
    }

    #[test]
    fn annulus_has_one_hole() {
        let spec = DomainSpec::new(DomainKind::Annulus { r1: 1.0, r2: 3.5, segments: 48 }, 0);
        let m = generate_domain(&spec).unwrap();
        assert_eq!(euler(&m), 0);
        let tags: HashSet<u32> = m.boundary_edges().values().copied().collect();
        assert_eq!(tags, HashSet::from([1, 2]));
        for (&(a, b), &tag) in m.boundary_edges() {
            let r = if tag == 1 { 3.5 } else { 1.0 };
            for v in [a, b] {
                let p = m.vertices()[v];
                assert!((p[0].hypot(p[1]) - r).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dumbbell_is_connected_and_tagged() {
        let spec = DomainSpec::new(DomainKind::Dumbbell { half_width: 0.3, segments: 64 }, 0);
        let m = generate_domain(&spec).unwrap();
        assert_eq!(euler(&m), 1);
        let exact = spec.exact_area();
        assert!((m.total_area() - exact).abs() / exact < 0.02, "{} vs {exact}", m.total_area());
        for (&(a, b), &tag) in m.boundary_edges() {
            if let Curve::Circle { center, radius } = m.curve(tag) {
                for v in [a, b] {
                    let p = m.vertices()[v];
                    assert!(((p[0] - center[0]).hypot(p[1] - center[1]) - radius).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn polygon_meshes() {
        let poly = vec![
            [0.0, 0.0],
            [3.0, 0.0],
            [3.0, 2.0],
            [2.0, 2.0],
            [2.0, 1.0],
            [1.0, 1.0],
            [1.0, 2.0],
            [0.0, 2.0],
        ];
        let spec = DomainSpec::new(DomainKind::Polygon { vertices: poly }, 4);
        let m = generate_domain(&spec).unwrap();
        assert!((m.total_area() - 5.0).abs() < 1e-12);
        assert_eq!(euler(&m), 1);
    }

    #[test]
    fn bad_domains_rejected() {
        let bowtie = vec![[0.0, 0.0], [1.0, 1.0], [1.0, 0.0], [0.0, 1.0]];
        assert!(generate_domain(&DomainSpec::new(DomainKind::Polygon { vertices: bowtie }, 2)).is_err());
        let cw = vec![[0.0, 0.0], [0.0, 1.0], [1.0, 0.0]];
        assert!(generate_domain(&DomainSpec::new(DomainKind::Polygon { vertices: cw }, 2)).is_err());
        let ring = DomainKind::Annulus { r1: 2.0, r2: 1.0, segments: 32 };
        assert!(generate_domain(&DomainSpec::new(ring, 0)).is_err());
        let db = DomainKind::Dumbbell { half_width: 0.0, segments: 32 };
        assert!(generate_domain(&DomainSpec::new(db, 0)).is_err());
    }
}
