#![allow(dead_code)]

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pfafem::adapt::{dorfler_mark, AdaptiveRun};
use pfafem::domain::{generate_domain, DomainKind, DomainSpec};
use pfafem::eigen::{solve_on_mesh, EigenOptions, EigenSet};
use pfafem::estimator::{all_indicators, IndicatorField};
use pfafem::fem::{
    integral, local_mass, local_stiffness, local_weighted_mass, prolongate, quasi_interpolate, FemOperators,
    NodalField,
};
use pfafem::mesh::{Mesh, Point};
use pfafem::optimizer::{
    evaluate_objective, flow_system, lagrangian_gradient, project_box, GradientField, ObjectiveSpec, Potential,
    Workspace,
};

pub type Check = Result<String, String>;

pub fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

pub fn square(n: usize) -> Mesh {
    generate_domain(&DomainSpec::new(DomainKind::UnitSquare, n)).unwrap()
}

pub fn lshape(n: usize) -> Mesh {
    generate_domain(&DomainSpec::new(DomainKind::LShape, n)).unwrap()
}

pub fn disk(segments: usize) -> Mesh {
    generate_domain(&DomainSpec::new(DomainKind::Circle { radius: 1.0, segments }, 0)).unwrap()
}

pub fn random_field(mesh: &Mesh, seed: u64) -> NodalField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    NodalField::new(mesh, (0..mesh.num_vertices()).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap()
}

pub fn spec(alpha: f64, potential: Potential) -> ObjectiveSpec {
    ObjectiveSpec {
        indices: vec![1],
        weights: vec![1.0],
        gamma: 5e-3,
        epsilon: 5e-2,
        alpha,
        volume_fraction: 0.5,
        potential,
    }
}

// ---------------------------------------------------------------------------
// Oracles

/// Iterative eigenpairs against the dense solver on meshes with at most 300 dofs.
pub fn eigen_vs_dense() -> Check {
    let meshes = [square(16), lshape(7), disk(30)];
    let iterative = EigenOptions { dense_threshold: 0, tol: 1e-11, ..EigenOptions::default() };
    let dense = EigenOptions { dense_threshold: usize::MAX, ..EigenOptions::default() };
    let mut worst: f64 = 0.0;
    let mut dofs = Vec::new();
    for (k, mesh) in meshes.iter().enumerate() {
        let ops = FemOperators::new(mesh);
        let n = ops.dirichlet.num_free();
        ensure(n <= 300, || format!("mesh {k} has {n} dofs"))?;
        dofs.push(n);
        let phi = random_field(mesh, 7 + k as u64);
        let a = solve_on_mesh(mesh, &ops, &phi, 10.21, 4, &iterative, None).map_err(|e| e.to_string())?;
        let b = solve_on_mesh(mesh, &ops, &phi, 10.21, 4, &dense, None).map_err(|e| e.to_string())?;
        for (x, y) in a.lambdas.iter().zip(&b.lambdas) {
            worst = worst.max(rel(*x, *y));
        }
    }
    ensure(worst <= 1e-8, || format!("max relative eigenvalue deviation {worst:.2e}"))?;
    Ok(format!("dofs {dofs:?}, max relative deviation {worst:.1e}"))
}

fn hand_stiffness(p: &[Point; 3]) -> [[f64; 3]; 3] {
    let area = 0.5 * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1])).abs();
    let b = |i: usize| p[(i + 1) % 3][1] - p[(i + 2) % 3][1];
    let c = |i: usize| p[(i + 2) % 3][0] - p[(i + 1) % 3][0];
    let mut k = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            k[i][j] = (b(i) * b(j) + c(i) * c(j)) / (4.0 * area);
        }
    }
    k
}

fn hand_weighted_mass(area: f64, phi: [f64; 3]) -> [[f64; 3]; 3] {
    let mut w = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            w[i][j] = (0..3)
                .map(|k| {
                    let m = match (i == j, j == k, i == k) {
                        (true, true, _) => 6.0,
                        (true, false, _) | (false, true, _) | (false, false, true) => 2.0,
                        _ => 1.0,
                    };
                    phi[k] * 2.0 * area * m / 120.0
                })
                .sum();
        }
    }
    w
}

/// Local stiffness, mass and weighted mass against closed-form expressions.
pub fn local_matrices_vs_hand() -> Check {
    let tris: [[Point; 3]; 4] = [
        [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
        [[0.3, -0.2], [1.7, 0.4], [0.1, 1.3]],
        [[-2.0, 1.0], [-1.5, 1.1], [-1.9, 1.8]],
        [[10.0, 10.0], [10.001, 10.0], [10.0005, 10.002]],
    ];
    let mut worst: f64 = 0.0;
    for p in &tris {
        let area = 0.5 * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1])).abs();
        let k = local_stiffness(p);
        let kh = hand_stiffness(p);
        let m = local_mass(area);
        let phi = [0.2, 0.9, 0.45];
        let w = local_weighted_mass(area, phi);
        let wh = hand_weighted_mass(area, phi);
        let kscale = kh.iter().flatten().fold(0.0_f64, |a, x| a.max(x.abs()));
        for i in 0..3 {
            for j in 0..3 {
                let mh = area / 12.0 * if i == j { 2.0 } else { 1.0 };
                worst = worst.max((k[i][j] - kh[i][j]).abs() / kscale);
                worst = worst.max((m[i][j] - mh).abs() / area);
                worst = worst.max((w[i][j] - wh[i][j]).abs() / area);
            }
        }
    }
    ensure(worst <= 1e-13, || format!("max scaled deviation {worst:.2e}"))?;
    Ok(format!("4 triangles, max scaled deviation {worst:.1e}"))
}

/// Seven-point rule exact for degree five (Dunavant).
fn degree5() -> Vec<([f64; 3], f64)> {
    let a1 = 0.059_715_871_789_770;
    let b1 = 0.470_142_064_105_115;
    let a2 = 0.797_426_985_353_087;
    let b2 = 0.101_286_507_323_456;
    let w1 = 0.132_394_152_788_506;
    let w2 = 0.125_939_180_544_827;
    let mut r = vec![([1.0 / 3.0; 3], 0.225)];
    for (a, b, w) in [(a1, b1, w1), (a2, b2, w2)] {
        r.push(([a, b, b], w));
        r.push(([b, a, b], w));
        r.push(([b, b, a], w));
    }
    r
}

/// Element indicators computed from scratch: degree-5 volume quadrature,
/// explicit edge-neighbour search and edge integrals of the normal jumps.
fn independent_indicators(mesh: &Mesh, phi: &[f64], eig: &EigenSet, spec: &ObjectiveSpec) -> Vec<Vec<f64>> {
    let pts = mesh.vertices();
    let els = mesh.elements();
    let mut edge_owner: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    for (t, e) in els.iter().enumerate() {
        for i in 0..3 {
            let (a, b) = (e[i], e[(i + 1) % 3]);
            edge_owner.entry((a.min(b), a.max(b))).or_default().push(t);
        }
    }
    let grad = |t: usize, u: &[f64]| -> [f64; 2] {
        let e = els[t];
        let (p0, p1, p2) = (pts[e[0]], pts[e[1]], pts[e[2]]);
        let det = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]);
        let (d1, d2) = (u[e[1]] - u[e[0]], u[e[2]] - u[e[0]]);
        [(d1 * (p2[1] - p0[1]) - d2 * (p1[1] - p0[1])) / det, (d2 * (p1[0] - p0[0]) - d1 * (p2[0] - p0[0])) / det]
    };
    let area = |t: usize| {
        let e = els[t];
        let (p0, p1, p2) = (pts[e[0]], pts[e[1]], pts[e[2]]);
        0.5 * ((p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1])).abs()
    };
    let at = |u: &[f64], e: [usize; 3], b: [f64; 3]| u[e[0]] * b[0] + u[e[1]] * b[1] + u[e[2]] * b[2];
    let jumps = |u: &[f64], scale: f64, boundary: bool| -> Vec<f64> {
        (0..els.len())
            .map(|t| {
                let e = els[t];
                let mut s = 0.0;
                for i in 0..3 {
                    let (a, b) = (e[i], e[(i + 1) % 3]);
                    let d = [pts[b][0] - pts[a][0], pts[b][1] - pts[a][1]];
                    let len = d[0].hypot(d[1]);
                    let n = [d[1] / len, -d[0] / len];
                    let owners = &edge_owner[&(a.min(b), a.max(b))];
                    let gt = grad(t, u);
                    let j = match owners.iter().find(|&&s| s != t) {
                        Some(&o) => {
                            let go = grad(o, u);
                            [gt[0] - go[0], gt[1] - go[1]]
                        }
                        None if boundary => gt,
                        None => continue,
                    };
                    let jn = scale * (j[0] * n[0] + j[1] * n[1]);
                    s += jn * jn * len;
                }
                area(t).sqrt() * s
            })
            .collect()
    };
    let rule = degree5();
    let mut out = Vec::new();
    let mut eta0 = jumps(phi, spec.gamma * spec.epsilon, true);
    for (t, s) in eta0.iter_mut().enumerate() {
        let e = els[t];
        let vol: f64 = rule
            .iter()
            .map(|(b, w)| {
                let ww: f64 = spec
                    .indices
                    .iter()
                    .zip(&spec.weights)
                    .map(|(&i, &c)| c * at(&eig.vectors[i - 1], e, *b).powi(2))
                    .sum();
                let r = spec.alpha * ww + spec.gamma / spec.epsilon * spec.potential.derivative(at(phi, e, *b));
                w * r * r
            })
            .sum::<f64>()
            * area(t);
        *s = (*s + area(t) * vol).sqrt();
    }
    out.push(eta0);
    for &i in &spec.indices {
        let w = &eig.vectors[i - 1];
        let lambda = eig.lambdas[i - 1];
        let mut eta = jumps(w, 1.0, false);
        for (t, s) in eta.iter_mut().enumerate() {
            let e = els[t];
            let vol: f64 = rule
                .iter()
                .map(|(b, q)| {
                    let r = (spec.alpha * at(phi, e, *b) - lambda) * at(w, e, *b);
                    q * r * r
                })
                .sum::<f64>()
                * area(t);
            *s = (*s + area(t) * vol).sqrt();
        }
        out.push(eta);
    }
    out
}

/// Estimator assembly against the independent implementation.
pub fn estimator_vs_independent() -> Check {
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for (mesh, potential) in [(square(6), Potential::DoubleObstacle), (disk(16), Potential::DoubleObstacle)] {
        let phi = random_field(&mesh, 11);
        let mut s = spec(10.21, potential);
        s.indices = vec![1, 2];
        s.weights = vec![1.0, -0.5];
        let ops = FemOperators::new(&mesh);
        let eig = solve_on_mesh(&mesh, &ops, &phi, s.alpha, 2, &EigenOptions::default(), None).map_err(|e| e.to_string())?;
        let ours = all_indicators(&mesh, &phi, &eig, &s).map_err(|e| e.to_string())?;
        let theirs = independent_indicators(&mesh, phi.values(), &eig, &s);
        for (a, b) in ours.iter().zip(&theirs) {
            let scale = b.iter().fold(0.0_f64, |m, x| m.max(*x));
            for (x, y) in a.per_element.iter().zip(b) {
                worst = worst.max((x - y).abs() / scale);
                cases += 1;
            }
        }
    }
    ensure(worst <= 1e-10, || format!("max scaled deviation {worst:.2e}"))?;
    Ok(format!("{cases} element values, max scaled deviation {worst:.1e}"))
}

fn field(values: Vec<f64>) -> IndicatorField {
    let global = values.iter().map(|x| x * x).sum::<f64>().sqrt();
    IndicatorField { mesh_id: 0, which: 0, per_element: values, global }
}

/// Greedy Dörfler sets against exhaustive search for the minimal cardinality.
pub fn dorfler_vs_brute_force() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut cases = 0;
    for trial in 0..300 {
        let n = 1 + trial % 12;
        let mut eta: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0_f64).powi(3)).collect();
        if trial % 7 == 0 {
            eta[n / 2] = eta[0];
        }
        let theta = [0.1, 0.3, 0.5, 0.8, 0.95, 1.0][trial % 6];
        let ind = field(eta.clone());
        let greedy = dorfler_mark(&ind, theta).map_err(|e| e.to_string())?;
        let total: f64 = eta.iter().map(|x| x * x).sum();
        let target = theta * theta * total;
        // Sets within rounding of the threshold count as ambiguous.
        let (mut loose, mut strict) = (usize::MAX, usize::MAX);
        for mask in 1u32..(1 << n) {
            let s: f64 = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| eta[i] * eta[i]).sum();
            let size = mask.count_ones() as usize;
            if s >= target * (1.0 - 1e-12) {
                loose = loose.min(size);
            }
            if s >= target * (1.0 + 1e-12) {
                strict = strict.min(size);
            }
        }
        let got: f64 = greedy.iter().map(|&i| eta[i] * eta[i]).sum();
        ensure(got >= target * (1.0 - 1e-12), || format!("trial {trial}: greedy set misses the bulk"))?;
        ensure(loose <= greedy.len() && greedy.len() <= strict, || {
            format!("trial {trial}: greedy {} vs minimal {loose}..{strict}", greedy.len())
        })?;
        cases += 1;
    }
    Ok(format!("{cases} random fields with up to 12 elements"))
}

// ---------------------------------------------------------------------------
// Invariants

fn boundary_edges_on_square(mesh: &Mesh) -> bool {
    let mut count: HashMap<(usize, usize), usize> = HashMap::new();
    for e in mesh.elements() {
        for i in 0..3 {
            let (a, b) = (e[i], e[(i + 1) % 3]);
            *count.entry((a.min(b), a.max(b))).or_default() += 1;
        }
    }
    let on = |p: Point| p[0].abs() < 1e-12 || p[1].abs() < 1e-12 || (p[0] - 1.0).abs() < 1e-12 || (p[1] - 1.0).abs() < 1e-12;
    let v = mesh.vertices();
    count.iter().all(|(&(a, b), &c)| c == 2 || (c == 1 && on(v[a]) && on(v[b]) && {
        let m = [0.5 * (v[a][0] + v[b][0]), 0.5 * (v[a][1] + v[b][1])];
        on(m)
    }))
}

/// Ten rounds of random marking and bisection up to at least 1000 elements.
pub fn random_refinement_stays_conforming() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut mesh = square(4);
    let angle0 = mesh.min_angle();
    let mut min_angle = angle0;
    for round in 0..10 {
        let ne = mesh.num_elements();
        let share = if ne < 1000 { 0.35 } else { 0.05 };
        let marked: Vec<usize> = (0..ne).filter(|_| rng.random_bool(share)).collect();
        mesh = mesh.bisect(&marked).map_err(|e| format!("round {round}: {e}"))?;
        mesh.validate().map_err(|e| format!("round {round}: {e}"))?;
        ensure(boundary_edges_on_square(&mesh), || format!("round {round}: hanging node or open edge"))?;
        ensure((mesh.total_area() - 1.0).abs() < 1e-12, || format!("round {round}: area drifted"))?;
        min_angle = min_angle.min(mesh.min_angle());
    }
    ensure(mesh.num_elements() >= 1000, || format!("only {} elements", mesh.num_elements()))?;
    ensure(min_angle >= 0.5 * angle0, || format!("minimum angle fell to {:.1}°", min_angle.to_degrees()))?;
    Ok(format!(
        "{} elements, minimum angle {:.1}° (initial {:.1}°)",
        mesh.num_elements(),
        min_angle.to_degrees(),
        angle0.to_degrees()
    ))
}

/// Box projection, prolongation and quasi-interpolation keep bounds and volume.
pub fn transfers_preserve_box_and_volume() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut mesh = disk(20);
    let raw = NodalField::new(&mesh, (0..mesh.num_vertices()).map(|_| rng.random_range(-0.5..1.5)).collect()).unwrap();
    let p = project_box(&raw);
    ensure(p.values().iter().all(|v| (0.0..=1.0).contains(v)), || "projection left the box".into())?;
    ensure(project_box(&p) == p, || "projection is not idempotent".into())?;
    let mut phi = random_field(&mesh, 6);
    let mut worst: f64 = 0.0;
    for round in 0..4 {
        let ne = mesh.num_elements();
        let marked: Vec<usize> = (0..ne).filter(|_| rng.random_bool(0.3)).collect();
        let fine = if round % 2 == 0 { mesh.bisect(&marked) } else { Ok(mesh.uniform_refine()) }.map_err(|e| e.to_string())?;
        let next = prolongate(&phi, &fine).map_err(|e| e.to_string())?;
        worst = worst.max(rel(integral(&fine, &next), integral(&mesh, &phi)));
        ensure(next.values().iter().all(|v| (0.0..=1.0).contains(v)), || "prolongation left the box".into())?;
        mesh = fine;
        phi = next;
    }
    ensure(worst <= 1e-14, || format!("prolongation changed the volume by {worst:.1e}"))?;
    let sq = square(8);
    let q = quasi_interpolate(&sq, |x| x[0] * x[0] * x[1]);
    let qv = (integral(&sq, &q) - 1.0 / 6.0).abs();
    let b = quasi_interpolate(&sq, |x| (10.0 * x[0]).sin().abs());
    ensure(b.values().iter().all(|v| (0.0..=1.0).contains(v)), || "quasi-interpolant left the box".into())?;
    Ok(format!("prolongation volume drift {worst:.1e}, quasi-interpolant volume error {qv:.1e}"))
}

/// Smallest eigenvalue of every flow system matrix is positive, for fields
/// that exercise both reaction branches.
pub fn flow_systems_are_spd() -> Check {
    let mesh = square(6);
    let mut ws = Workspace::new(&mesh, EigenOptions::default()).map_err(|e| e.to_string())?;
    let s = spec(10.21, Potential::DoubleWell);
    let mut smallest = f64::INFINITY;
    let mut branches = [0usize; 2];
    for seed in 0..6 {
        let phi = random_field(&mesh, 100 + seed);
        let eig = ws.solve_eigen(&phi, &s, None).map_err(|e| e.to_string())?;
        let g = lagrangian_gradient(&ws, &phi, &eig, &s, -5.0, 100.0).map_err(|e| e.to_string())?;
        for (tau, gamma_tilde) in [(1e-3, 20.0), (0.5, 20.0), (0.05, 200.0)] {
            let r = pfafem::optimizer::reaction(phi.values(), &g, gamma_tilde);
            branches[0] += r.iter().filter(|&&x| x <= 0.0).count();
            branches[1] += r.iter().filter(|&&x| x > 0.0).count();
            let (a, _) = flow_system(&ws, &phi, &g, gamma_tilde, tau, s.gamma * s.epsilon);
            let d = a.to_dense();
            let sym = (&d + d.transpose()) * 0.5;
            ensure((&d - &sym).amax() == 0.0, || "flow matrix is not symmetric".into())?;
            let ev = sym.symmetric_eigenvalues().min();
            smallest = smallest.min(ev);
        }
    }
    ensure(branches[0] > 0 && branches[1] > 0, || format!("reaction branches not both exercised: {branches:?}"))?;
    ensure(smallest > 0.0, || format!("smallest eigenvalue {smallest:.3e}"))?;
    Ok(format!("18 systems, smallest eigenvalue {smallest:.3e}, branch counts {branches:?}"))
}

/// Central differences of the smooth part of the Lagrangian against `⟨g, δ⟩`.
pub fn gradient_matches_finite_differences() -> Check {
    let mesh = square(6);
    let mut ws = Workspace::new(&mesh, EigenOptions::default()).map_err(|e| e.to_string())?;
    let mut s = spec(10.21, Potential::DoubleWell);
    s.weights = vec![0.0];
    let (mu, beta) = (-0.7, 3.0);
    let mut worst: f64 = 0.0;
    for seed in 0..4 {
        let phi = random_field(&mesh, 200 + seed);
        let delta = random_field(&mesh, 300 + seed).map(|v| v - 0.5);
        let eig = ws.solve_eigen(&phi, &s, None).map_err(|e| e.to_string())?;
        let g: GradientField = lagrangian_gradient(&ws, &phi, &eig, &s, mu, beta).map_err(|e| e.to_string())?;
        let md = ws.ops.mass.mul_vec(delta.values());
        let exact: f64 = g.values.values().iter().zip(&md).map(|(a, b)| a * b).sum();
        let t = 1e-5;
        let shifted = |sign: f64| {
            let v: Vec<f64> = phi.values().iter().zip(delta.values()).map(|(p, d)| p + sign * t * d).collect();
            let f = NodalField::new(&mesh, v).unwrap();
            evaluate_objective(&ws, &f, &eig, &s, mu, beta).lagrangian
        };
        let fd = (shifted(1.0) - shifted(-1.0)) / (2.0 * t);
        worst = worst.max(rel(fd, exact));
    }
    ensure(worst <= 1e-4, || format!("relative deviation {worst:.2e}"))?;
    Ok(format!("{} dofs, max relative deviation {worst:.1e}", mesh.num_vertices()))
}

/// Difference quotient of `λ_1` against `α∫w_1²δ`.
pub fn hellmann_feynman() -> Check {
    let mesh = square(8);
    let ops = FemOperators::new(&mesh);
    let opts = EigenOptions { dense_threshold: usize::MAX, ..EigenOptions::default() };
    let alpha = 10.21;
    let mut worst: f64 = 0.0;
    for seed in 0..3 {
        let phi = random_field(&mesh, 400 + seed);
        let delta = random_field(&mesh, 500 + seed);
        let base = solve_on_mesh(&mesh, &ops, &phi, alpha, 2, &opts, None).map_err(|e| e.to_string())?;
        let t = 1e-5;
        let moved = NodalField::new(&mesh, phi.values().iter().zip(delta.values()).map(|(p, d)| p + t * d).collect()).unwrap();
        let next = solve_on_mesh(&mesh, &ops, &moved, alpha, 2, &opts, None).map_err(|e| e.to_string())?;
        let quotient = (next.lambdas[0] - base.lambdas[0]) / t;
        let w = &base.vectors[0];
        let wdelta = pfafem::fem::assemble_weighted_mass(&mesh, &delta).map_err(|e| e.to_string())?;
        let predicted = alpha * wdelta.quad_form(w);
        worst = worst.max(rel(quotient, predicted));
    }
    ensure(worst <= 1e-3, || format!("relative deviation {worst:.2e}"))?;
    Ok(format!("max relative deviation {worst:.1e}"))
}

// ---------------------------------------------------------------------------
// Run-level checks

/// Every marked set contains an element of maximal indicator and satisfies the
/// bulk inequality.
pub fn marking_contract(run: &AdaptiveRun) -> Result<usize, String> {
    let mut checked = 0;
    for (k, set) in run.marked.iter().enumerate() {
        for (j, (m, theta)) in set.per_estimator.iter().zip(&set.thetas).enumerate() {
            let ind = &run.indicators[k][j];
            let max = ind.per_element.iter().cloned().fold(0.0, f64::max);
            let total = ind.sum_sq(&(0..ind.per_element.len()).collect::<Vec<_>>());
            if total == 0.0 {
                continue;
            }
            ensure(m.iter().any(|&t| ind.per_element[t] == max), || format!("mesh {k}, η_{j}: maximum not marked"))?;
            ensure(ind.sum_sq(m) >= theta * theta * total, || format!("mesh {k}, η_{j}: bulk inequality fails"))?;
            ensure(set.union.iter().all(|t| *t < ind.per_element.len()), || format!("mesh {k}: union out of range"))?;
            checked += 1;
        }
    }
    Ok(checked)
}
