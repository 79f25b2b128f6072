use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use log::info;

use pfafem::adapt::{run_with_observer, AdaptiveRun};
use pfafem::config::{load_config, parse_config, Mode, RunConfig};
use pfafem::domain::{generate_domain, DomainKind};
use pfafem::export::{export_csv, export_vtk, read_csv_columns, read_vtk_file, render_png, Colormap, Field};
use pfafem::fem::NodalField;
use pfafem::reference::{contour_mean_radius, example2_errors, fine_mesh, ReferenceSolution};

const PNG_WIDTH: u32 = 512;
const REFERENCE_DOFS: usize = 50_000;
const LAMBDA_REF_FILE: &str = "lambda_ref.txt";

#[derive(Parser)]
#[command(name = "pfafem", version, about = "Adaptive phase-field eigenvalue topology optimization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Adaptive,
    Uniform,
}

#[derive(Subcommand)]
enum Command {
    /// Run a bundled config (e.g. `example1a`) or a config file.
    Run {
        config: String,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory; overrides `PFAFEM_OUT` and the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parse a config and build its initial mesh.
    Validate { config: String },
    /// Error table of a finished `example2` run against the annulus reference.
    #[command(name = "errors-example2")]
    ErrorsExample2 { run_dir: PathBuf },
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Run { config, mode, seed, out } => run(&config, mode, seed, out),
        Command::Validate { config } => validate(&config),
        Command::ErrorsExample2 { run_dir } => errors_example2(&run_dir),
    }
}

fn output_dir(cfg: &RunConfig, out: Option<PathBuf>) -> PathBuf {
    out.or_else(|| std::env::var_os("PFAFEM_OUT").map(PathBuf::from))
        .unwrap_or_else(|| cfg.outputs.directory.clone())
}

fn run(config: &str, mode: Option<ModeArg>, seed: Option<u64>, out: Option<PathBuf>) -> Result<()> {
    let mut cfg = load_config(config).with_context(|| format!("loading `{config}`"))?;
    if let Some(m) = mode {
        cfg.afem.mode = match m {
            ModeArg::Adaptive => Mode::Adaptive,
            ModeArg::Uniform => Mode::Uniform,
        };
    }
    if let Some(s) = seed {
        cfg = cfg.with_seed(s);
    }
    let dir = output_dir(&cfg, out);
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    fs::write(dir.join("config.toml"), cfg.to_toml())?;
    info!("{}: {:?} run into {}", cfg.name, cfg.afem.mode, dir.display());

    let start = Instant::now();
    let mut export_err = None;
    let (run, err) = run_with_observer(&cfg, &mut |run, k| {
        let t = &run.timings[k];
        let h = run.history.last();
        info!(
            "mesh {k}: {} vertices, objective {:.6}, |G| {:.2e}, estimators {:?}, {:.2}s",
            run.meshes[k].num_vertices(),
            h.map_or(f64::NAN, |h| h.objective),
            h.map_or(f64::NAN, |h| h.volume_error.abs()),
            run.indicators[k].iter().map(|f| f.global).collect::<Vec<_>>(),
            t.total()
        );
        if export_err.is_none() {
            export_err = export_level(&cfg, run, k, &dir).err();
        }
    });
    if let Some(e) = export_err {
        return Err(e.context("writing snapshots"));
    }
    if cfg.outputs.csv {
        export_csv(&run, &cfg.objective, &dir.join("history.csv"))?;
    }
    write_summary(&run, &dir, start.elapsed().as_secs_f64())?;
    if let Some(e) = err {
        bail!("run stopped early: {e}");
    }
    info!("finished in {:.1}s, stop reason {:?}", start.elapsed().as_secs_f64(), run.stop);
    Ok(())
}

fn export_level(cfg: &RunConfig, run: &AdaptiveRun, k: usize, dir: &Path) -> Result<()> {
    let last = k + 1 == cfg.afem.k;
    let every = cfg.outputs.vtk_every;
    if every > 0 && (k % every == 0 || last) {
        export_vtk(run, k, &cfg.objective, &dir.join(format!("mesh_{k:02}.vtk")))?;
    }
    if cfg.outputs.png {
        let mesh = &run.meshes[k];
        render_png(
            mesh,
            Field::Nodal(run.states[k].phi.values()),
            Colormap::Phase,
            PNG_WIDTH,
            &dir.join(format!("phi_{k:02}.png")),
        )?;
        for (j, f) in run.indicators[k].iter().enumerate() {
            render_png(
                mesh,
                Field::Cell(&f.per_element),
                Colormap::Sequential,
                PNG_WIDTH,
                &dir.join(format!("eta{j}_{k:02}.png")),
            )?;
        }
    }
    Ok(())
}

fn write_summary(run: &AdaptiveRun, dir: &Path, seconds: f64) -> Result<()> {
    let mut f = fs::File::create(dir.join("summary.txt"))?;
    writeln!(f, "mode {:?}", run.mode)?;
    writeln!(f, "stop {:?}", run.stop)?;
    if let Some(msg) = &run.failure {
        writeln!(f, "failure {msg}")?;
    }
    writeln!(f, "meshes {}", run.levels())?;
    writeln!(f, "final_vertices {}", run.final_vertices())?;
    if let Some(h) = run.final_history() {
        writeln!(f, "objective {}", h.objective)?;
        writeln!(f, "psi {}", h.psi)?;
        writeln!(f, "volume_error {}", h.volume_error)?;
    }
    writeln!(f, "eigen_solves {}", run.eigen_solves)?;
    writeln!(f, "sandwich_checks {} violations {}", run.sandwich.checks, run.sandwich.violations)?;
    writeln!(f, "seconds {seconds:.3}")?;
    for t in &run.timings {
        writeln!(
            f,
            "level {} solve {:.3} estimate {:.3} mark {:.3} refine {:.3}",
            t.level, t.solve, t.estimate, t.mark, t.refine
        )?;
    }
    Ok(())
}

fn validate(config: &str) -> Result<()> {
    let cfg = load_config(config).with_context(|| format!("loading `{config}`"))?;
    let mesh = generate_domain(&cfg.domain)?;
    mesh.validate()?;
    println!(
        "{}: {:?}, {} vertices, {} elements, min angle {:.1}°, K = {}, N = {}",
        cfg.name,
        cfg.domain.kind,
        mesh.num_vertices(),
        mesh.num_elements(),
        mesh.min_angle().to_degrees(),
        cfg.afem.k,
        cfg.iterations_per_mesh()
    );
    Ok(())
}

fn errors_example2(dir: &Path) -> Result<()> {
    let cfg = parse_config(&fs::read_to_string(dir.join("config.toml")).context("reading config.toml")?)?;
    if !matches!(cfg.domain.kind, DomainKind::Circle { radius, .. } if radius == 1.0) {
        bail!("errors-example2 needs a run on the unit disk");
    }
    let mut reference = ReferenceSolution::default();
    let cache = dir.join(LAMBDA_REF_FILE);
    let lambda_ref = match fs::read_to_string(&cache).ok().and_then(|s| s.trim().parse::<f64>().ok()) {
        Some(l) => {
            reference.lambda_ref = Some(l);
            l
        }
        None => {
            let fine = fine_mesh(&generate_domain(&cfg.domain)?, REFERENCE_DOFS);
            info!("reference eigenvalue on {} vertices", fine.num_vertices());
            let l = reference.compute_lambda(&fine, cfg.objective.alpha, &cfg.eigensolver)?;
            fs::write(&cache, format!("{l}\n"))?;
            l
        }
    };

    let cols = read_csv_columns(fs::File::open(dir.join("history.csv"))?, &["level", "lambda_1"])?;
    let mut lambdas = Vec::new();
    for (i, (&level, &lambda)) in cols[0].iter().zip(&cols[1]).enumerate() {
        let last_of_level = cols[0].get(i + 1).is_none_or(|&next| next != level);
        if last_of_level {
            lambdas.push(lambda);
        }
    }
    let mut meshes = Vec::new();
    let mut phis = Vec::new();
    for k in 0..lambdas.len() {
        let path = dir.join(format!("mesh_{k:02}.vtk"));
        let data = read_vtk_file(&path).with_context(|| format!("reading {}", path.display()))?;
        let phi = data.point("phi").context("snapshot has no phi")?.to_vec();
        phis.push(NodalField::new(&data.mesh, phi)?);
        meshes.push(data.mesh);
    }
    let rows = example2_errors(&meshes, &phis, &lambdas, &reference)?;
    let mut out = csv_writer(&dir.join("errors.csv"))?;
    out.write_record(["level", "dofs", "lambda_error", "l1", "l2", "h1"])?;
    println!("lambda_ref = {lambda_ref}");
    println!("{:>5} {:>8} {:>12} {:>12} {:>12} {:>12}", "mesh", "dofs", "|λ-λref|", "L1", "L2", "H1");
    for r in &rows {
        println!("{:>5} {:>8} {:>12.4e} {:>12.4e} {:>12.4e} {:>12.4e}", r.level, r.dofs, r.lambda_error, r.l1, r.l2, r.h1);
        out.write_record(&[
            r.level.to_string(),
            r.dofs.to_string(),
            r.lambda_error.to_string(),
            r.l1.to_string(),
            r.l2.to_string(),
            r.h1.to_string(),
        ])?;
    }
    out.flush()?;
    if let (Some(mesh), Some(phi)) = (meshes.last(), phis.last()) {
        if let Some(r) = contour_mean_radius(mesh, phi, 0.5, 0.95)? {
            println!("mean radius of the inner interface: {r:.4}");
        }
    }
    Ok(())
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    Ok(csv::Writer::from_path(path)?)
}
