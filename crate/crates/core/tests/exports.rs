use std::fs;

use pfafem::adapt::{adaptive_loop, run_with_observer, AdaptiveRun};
use pfafem::config::{bundled, RunConfig, BUNDLED};
use pfafem::export::{export_csv, export_vtk, read_csv_columns, read_vtk_file, render_png, Colormap, Field};
use pfafem::fem::{integral, NodalField};

fn small_run() -> (RunConfig, AdaptiveRun) {
    let mut cfg = bundled("example1a").unwrap();
    cfg.afem.k = 3;
    cfg.inner.outer_iterations = 4;
    let run = adaptive_loop(&cfg).unwrap();
    (cfg, run)
}

#[test]
fn csv_has_one_row_per_outer_iteration() {
    let (cfg, run) = small_run();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("history.csv");
    export_csv(&run, &cfg.objective, &path).unwrap();
    let cols = read_csv_columns(fs::File::open(&path).unwrap(), &["iteration", "level", "lambda_1"]).unwrap();
    assert_eq!(cols[0].len(), cfg.afem.k * cfg.iterations_per_mesh());
    assert_eq!(cols[0].len(), run.history.len());
    assert!(cols[1].windows(2).all(|w| w[0] <= w[1]));
    assert!(cols[2].iter().all(|l| l.is_finite() && *l > 0.0));
}

#[test]
fn identical_runs_write_identical_csv() {
    let dir = tempfile::tempdir().unwrap();
    let mut texts = Vec::new();
    for n in 0..2 {
        let (cfg, run) = small_run();
        let path = dir.path().join(format!("h{n}.csv"));
        export_csv(&run, &cfg.objective, &path).unwrap();
        texts.push(fs::read_to_string(path).unwrap());
    }
    assert_eq!(texts[0], texts[1]);
}

#[test]
fn vtk_snapshots_round_trip_and_match_csv() {
    let (cfg, run) = small_run();
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("history.csv");
    export_csv(&run, &cfg.objective, &csv).unwrap();
    let cols = read_csv_columns(fs::File::open(&csv).unwrap(), &["level", "abs_volume_error"]).unwrap();
    let target = cfg.objective.volume_fraction * run.meshes[0].total_area();
    for k in 0..run.levels() {
        let path = dir.path().join(format!("mesh_{k:02}.vtk"));
        export_vtk(&run, k, &cfg.objective, &path).unwrap();
        let data = read_vtk_file(&path).unwrap();
        let mesh = &run.meshes[k];
        assert_eq!(data.mesh.num_vertices(), mesh.num_vertices());
        assert_eq!(data.mesh.num_elements(), mesh.num_elements());
        assert_eq!(data.mesh.vertices(), mesh.vertices());
        assert_eq!(data.mesh.elements(), mesh.elements());
        let phi = data.point("phi").unwrap();
        assert_eq!(phi, run.states[k].phi.values());
        assert_eq!(data.point("w_1").unwrap(), run.eigens[k].vectors[0].as_slice());
        for j in 0..run.indicators[k].len() {
            assert_eq!(data.cell(&format!("eta_{j}")).unwrap(), run.indicators[k][j].per_element.as_slice());
        }
        assert_eq!(data.cell("h_T").unwrap().len(), mesh.num_elements());
        let last = cols[0].iter().rposition(|&l| l as usize == k).unwrap();
        let g = integral(&data.mesh, &NodalField::new(&data.mesh, phi.to_vec()).unwrap()) - target;
        assert!((g.abs() - cols[1][last]).abs() <= 1e-10, "mesh {k}: {} vs {}", g.abs(), cols[1][last]);
    }
}

#[test]
fn pngs_are_written() {
    let (_, run) = small_run();
    let dir = tempfile::tempdir().unwrap();
    let k = run.levels() - 1;
    let phi = dir.path().join("phi.png");
    let eta = dir.path().join("eta.png");
    render_png(&run.meshes[k], Field::Nodal(run.states[k].phi.values()), Colormap::Phase, 128, &phi).unwrap();
    render_png(&run.meshes[k], Field::Cell(&run.indicators[k][0].per_element), Colormap::Sequential, 128, &eta).unwrap();
    for p in [phi, eta] {
        let img = image::open(&p).unwrap();
        assert_eq!(img.width(), 128);
    }
}

#[test]
fn every_bundled_config_starts() {
    for (name, _) in BUNDLED {
        let mut cfg = bundled(name).unwrap();
        cfg.afem.k = 1;
        cfg.inner.outer_iterations = 1;
        cfg.afem.uniform_iterations = Some(1);
        let (run, err) = run_with_observer(&cfg, &mut |_, _| {});
        assert!(err.is_none(), "{name}: {err:?}");
        assert_eq!(run.history.len(), 1, "{name}");
        assert!(run.history[0].objective.is_finite(), "{name}");
    }
}
