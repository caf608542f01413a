//! `qlm` command-line front end.

pub mod config;
pub mod io;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::info;
use qlm_core::energy::wang_yau_energy_with;
use qlm_core::mesh::ScalarField;
use qlm_core::oracles::{
    ellipsoid_metric, graph_sphere, round_sphere, schwarzschild_isotropic_sphere, schwarzschild_sphere,
    ConvexBase, OracleBundle,
};
use qlm_core::solver::{continuation_solve, newton_solve, DataFamily, SolveReport};
use qlm_core::{embed, shape_data, stability_beta, BoundaryData, Error, Result};
use serde::Serialize;
use serde_json::json;

use config::RunConfig;
use io::Envelope;

#[derive(Parser, Debug)]
#[command(name = "qlm", version, about = "Quasi-local energy toolkit for closed surfaces")]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, short, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true, env = "QLM_THREADS")]
    pub threads: Option<usize>,
    /// Single-threaded, reproducible run.
    #[arg(long, global = true, env = "QLM_DETERMINISTIC", value_parser = clap::builder::BoolishValueParser::new())]
    pub deterministic: Option<bool>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct Tolerances {
    /// Embedding tolerance (relative edge RMS).
    #[arg(long)]
    pub embed_tol: Option<f64>,
    /// Newton residual tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Use frozen-operator chord steps instead of finite-difference Jacobian products.
    #[arg(long)]
    pub no_fd_jacobian: bool,
    /// Normalization of reported second-variation values: `bare` or `energy`.
    #[arg(long)]
    pub prefactor: Option<String>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Embed a metric; writes embedding.txt, shape.csv and embed.json.
    Embed {
        /// Mesh file with intrinsic lengths.
        input: PathBuf,
        #[command(flatten)]
        tol: Tolerances,
    },
    /// Energy for boundary data and a time function; writes energy.json.
    Energy {
        input: PathBuf,
        /// Time function field file (zero when omitted).
        #[arg(long)]
        tau: Option<PathBuf>,
        #[command(flatten)]
        tol: Tolerances,
    },
    /// Second-variation stability; writes stability.json and spectrum.csv.
    Stability {
        input: PathBuf,
        #[command(flatten)]
        tol: Tolerances,
    },
    /// Critical time function by Newton (or continuation with --family); writes solve.json and tau files.
    Solve {
        /// Boundary data file.
        input: Option<PathBuf>,
        /// Family file for continuation.
        #[arg(long, conflicts_with = "input")]
        family: Option<PathBuf>,
        /// Initial time function.
        #[arg(long)]
        tau: Option<PathBuf>,
        #[command(flatten)]
        tol: Tolerances,
    },
    /// Continuation through a family; writes sweep.csv (t, energy, beta, residual) and sweep.json.
    Sweep {
        family: PathBuf,
        #[command(flatten)]
        tol: Tolerances,
    },
    /// Reference geometry; writes mesh.txt, data.txt and oracle.json.
    Oracle {
        #[command(subcommand)]
        kind: OracleKind,
        /// Icosphere subdivision level.
        #[arg(long, global = true)]
        level: Option<u32>,
    },
}

#[derive(Subcommand, Debug, Clone)]
pub enum OracleKind {
    /// Round sphere of radius r with constant |H| = h.
    RoundSphere {
        #[arg(long, default_value_t = 1.0)]
        r: f64,
        #[arg(long, default_value_t = 2.0)]
        h: f64,
    },
    /// Areal-radius sphere in a Schwarzschild time slice.
    Schwarzschild {
        #[arg(long, default_value_t = 1.0)]
        m: f64,
        #[arg(long = "R", default_value_t = 10.0)]
        r_areal: f64,
    },
    /// Isotropic coordinate sphere in a Schwarzschild time slice.
    SchwarzschildIsotropic {
        #[arg(long, default_value_t = 1.0)]
        m: f64,
        #[arg(long, default_value_t = 10.0)]
        r: f64,
    },
    /// Graph over a convex surface in a flat slice with constant base gradient norm.
    GraphSphere {
        /// Semi-axes `a,b,c` (one value for a sphere).
        #[arg(long, value_delimiter = ',', default_value = "1")]
        axes: Vec<f64>,
        /// |∇f| on the base.
        #[arg(long, default_value_t = 0.0)]
        grad: f64,
    },
    /// Ellipsoid metric with its analytic mean curvature as |H|; also writes embedding.txt.
    Ellipsoid {
        #[arg(long, default_value_t = 1.0)]
        a: f64,
        #[arg(long, default_value_t = 1.0)]
        b: f64,
        #[arg(long, default_value_t = 1.2)]
        c: f64,
    },
}

/// Parses arguments, runs the command, and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let name = command_name(&cli.command);
    let cfg = match build_config(&cli) {
        Ok(c) => c,
        Err(e) => return report_error(&e, name, None),
    };
    let threads = cfg.effective_threads();
    qlm_core::linalg::set_threads((threads > 1).then_some(threads));
    match execute(&cli.command, &cfg) {
        Ok(()) => 0,
        Err(e) => report_error(&e, name, Some(&cfg.out_dir)),
    }
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Embed { .. } => "embed",
        Command::Energy { .. } => "energy",
        Command::Stability { .. } => "stability",
        Command::Solve { .. } => "solve",
        Command::Sweep { .. } => "sweep",
        Command::Oracle { .. } => "oracle",
    }
}

fn report_error(e: &Error, command: &str, out: Option<&Path>) -> i32 {
    eprintln!("qlm {command}: {e}");
    if e.is_input_error() {
        return 1;
    }
    let diag = Envelope {
        schema_version: io::SCHEMA_VERSION,
        command,
        report: diagnostic(e),
    };
    if let (Some(dir), Ok(text)) = (out, io::to_json(&diag)) {
        let path = dir.join("diagnostic.json");
        if io::write_file(&path, &text).is_ok() {
            eprintln!("diagnostic written to {}", path.display());
        }
    }
    2
}

fn diagnostic(e: &Error) -> serde_json::Value {
    let mut v = json!({"kind": e.kind(), "message": e.to_string()});
    let extra = match e {
        Error::KernelObstruction { indicator, beta, field } => {
            json!({"indicator": indicator, "beta": beta, "near_null_field": field})
        }
        Error::NonConvergence { iterations, residual, tau } => {
            json!({"iterations": iterations, "residual": residual, "tau": tau})
        }
        Error::ContinuationStalled { t, last_t, tau } => json!({"t": t, "last_t": last_t, "tau": tau}),
        Error::EmbeddingNonConvergence { iterations, residual } => {
            json!({"iterations": iterations, "residual": residual})
        }
        Error::EigenNonConvergence { residual } => json!({"residual": residual}),
        Error::NotEmbeddableHere { vertex, curvature } | Error::NotAdmissibleHint { vertex, curvature } => {
            json!({"vertex": vertex, "curvature": curvature})
        }
        _ => json!({}),
    };
    if let (Some(o), serde_json::Value::Object(x)) = (v.as_object_mut(), extra) {
        o.extend(x);
    }
    v
}

fn build_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    cfg.subcommand = command_name(&cli.command).to_string();
    if let Some(o) = &cli.out {
        cfg.out_dir = o.clone();
    }
    if cli.threads.is_some() {
        cfg.threads = cli.threads;
    }
    if let Some(d) = cli.deterministic {
        cfg.deterministic = d;
    }
    let tol = match &cli.command {
        Command::Embed { input, tol } | Command::Stability { input, tol } => {
            cfg.inputs = vec![input.clone()];
            Some(tol)
        }
        Command::Energy { input, tau, tol } => {
            cfg.inputs = std::iter::once(input.clone()).chain(tau.clone()).collect();
            Some(tol)
        }
        Command::Solve { input, family, tau, tol } => {
            if input.is_none() && family.is_none() {
                return Err(Error::InvalidParameter("solve needs a boundary file or --family".into()));
            }
            cfg.inputs = input.iter().chain(family).chain(tau).cloned().collect();
            Some(tol)
        }
        Command::Sweep { family, tol } => {
            cfg.inputs = vec![family.clone()];
            Some(tol)
        }
        Command::Oracle { level, .. } => {
            if let Some(l) = level {
                cfg.level = *l;
            }
            None
        }
    };
    if let Some(t) = tol {
        if let Some(e) = t.embed_tol {
            cfg.embed.tol = e;
            cfg.energy.embed.tol = e;
            cfg.solver.embed.tol = e;
        }
        if let Some(x) = t.tol {
            cfg.solver.tol = x;
        }
        if t.no_fd_jacobian {
            cfg.solver.fd_jacobian = false;
        }
        if let Some(p) = &t.prefactor {
            cfg.prefactor = serde_json::from_value(json!(p))
                .map_err(|_| Error::InvalidParameter(format!("unknown prefactor `{p}` (bare or energy)")))?;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_json<T: Serialize>(cfg: &RunConfig, file: &str, report: T) -> Result<PathBuf> {
    let env = Envelope {
        schema_version: io::SCHEMA_VERSION,
        command: &cfg.subcommand,
        report,
    };
    let path = cfg.out_dir.join(file);
    io::write_file(&path, &io::to_json(&env)?)?;
    info!("wrote {}", path.display());
    Ok(path)
}

fn load_data(path: &Path) -> Result<BoundaryData> {
    io::load_boundary(path)
}

fn execute(cmd: &Command, cfg: &RunConfig) -> Result<()> {
    match cmd {
        Command::Embed { input, .. } => cmd_embed(input, cfg),
        Command::Energy { input, tau, .. } => cmd_energy(input, tau.as_deref(), cfg),
        Command::Stability { input, .. } => cmd_stability(input, cfg),
        Command::Solve { input, family, tau, .. } => cmd_solve(input.as_deref(), family.as_deref(), tau.as_deref(), cfg),
        Command::Sweep { family, .. } => cmd_sweep(family, cfg),
        Command::Oracle { kind, .. } => cmd_oracle(kind, cfg),
    }
}

fn cmd_embed(input: &Path, cfg: &RunConfig) -> Result<()> {
    let file = io::read_mesh(input)?;
    let metric = file.metric()?;
    let mesh = &file.mesh;
    let e = embed(mesh, &metric, None, &cfg.embed)?;
    let shape = shape_data(mesh, &e, &metric)?;
    io::write_file(&cfg.out_dir.join("embedding.txt"), &io::format_embedding(&e))?;
    io::write_csv(
        &cfg.out_dir.join("shape.csv"),
        &["vertex", "x", "y", "z", "nx", "ny", "nz", "H0", "H0_cotan"],
        (0..mesh.num_vertices()).map(|i| {
            let p = e.positions[i];
            let n = shape.normals[i];
            vec![i as f64, p[0], p[1], p[2], n[0], n[1], n[2], shape.mean_curvature[i], shape.cotan_mean_curvature[i]]
        }),
    )?;
    let h_min = shape.mean_curvature.iter().cloned().fold(f64::INFINITY, f64::min);
    write_json(
        cfg,
        "embed.json",
        json!({
            "edge_residual": e.edge_residual,
            "iterations": e.iterations,
            "used_homotopy": e.used_homotopy,
            "residual_history": e.residual_history,
            "total_mean_curvature": shape.total_mean_curvature,
            "min_mean_curvature": h_min,
            "convex": h_min > 0.0,
        }),
    )?;
    println!("embedded {} vertices, edge residual {:e}", mesh.num_vertices(), e.edge_residual);
    Ok(())
}

fn cmd_energy(input: &Path, tau: Option<&Path>, cfg: &RunConfig) -> Result<()> {
    let data = load_data(input)?;
    let tau = match tau {
        Some(p) => io::read_field(p, &data.mesh)?,
        None => ScalarField::zeros(&data.mesh),
    };
    let rep = wang_yau_energy_with(&data, &tau, &cfg.energy, None)?;
    write_json(cfg, "energy.json", &rep)?;
    match rep.m_by {
        Some(m) => println!("energy {:.10} (Brown-York mass {m:.10})", rep.energy),
        None => println!("energy {:.10}", rep.energy),
    }
    Ok(())
}

fn cmd_stability(input: &Path, cfg: &RunConfig) -> Result<()> {
    let data = load_data(input)?;
    let rep = stability_beta(&data)?;
    let f = cfg.prefactor.factor();
    io::write_csv(
        &cfg.out_dir.join("spectrum.csv"),
        &["k", "beta", "beta_scaled", "linear_participation"],
        rep.spectrum
            .iter()
            .zip(&rep.spectrum_participation)
            .enumerate()
            .map(|(k, (b, p))| vec![k as f64, *b, b * f, *p]),
    )?;
    write_json(
        cfg,
        "stability.json",
        json!({"prefactor": cfg.prefactor, "beta_scaled": rep.beta * f, "stability": rep}),
    )?;
    println!(
        "beta {:.8} (multiplicity {}, linear participation {:.4}), eigenvalue margin {:.6e}",
        rep.beta, rep.beta_multiplicity, rep.linear_participation, rep.eigenvalue_criterion_margin
    );
    Ok(())
}

fn load_family(path: &Path) -> Result<DataFamily> {
    let base = path.parent().unwrap_or(Path::new("."));
    let members = io::parse_family(&io::read_text(path)?, base)?;
    let data = members
        .into_iter()
        .map(|(t, p)| Ok((t, load_data(&p)?)))
        .collect::<Result<Vec<_>>>()?;
    DataFamily::new(data)
}

fn initial_tau(tau: Option<&Path>, data: &BoundaryData) -> Result<ScalarField> {
    match tau {
        Some(p) => io::read_field(p, &data.mesh),
        None => Ok(ScalarField::zeros(&data.mesh)),
    }
}

fn cmd_solve(input: Option<&Path>, family: Option<&Path>, tau: Option<&Path>, cfg: &RunConfig) -> Result<()> {
    if let Some(fam) = family {
        let fam = load_family(fam)?;
        let tau0 = initial_tau(tau, &fam.members()[0].1)?;
        let reports = continuation_solve(&fam, &tau0, &cfg.solver)?;
        for (k, r) in reports.iter().enumerate() {
            io::write_file(&cfg.out_dir.join(format!("tau_{k:03}.txt")), &io::format_field("tau", &r.tau.values))?;
        }
        write_json(cfg, "solve.json", &reports)?;
        println!("continuation reached t = {} in {} steps", reports.last().and_then(|r| r.t).unwrap_or(0.0), reports.len() - 1);
        return Ok(());
    }
    let data = load_data(input.ok_or_else(|| Error::InvalidParameter("missing boundary file".into()))?)?;
    let tau0 = initial_tau(tau, &data)?;
    let rep = newton_solve(&data, &tau0, &cfg.solver)?;
    io::write_file(&cfg.out_dir.join("tau.txt"), &io::format_field("tau", &rep.tau.values))?;
    write_json(cfg, "solve.json", &rep)?;
    println!("converged in {} Newton steps, residual {:e}", rep.newton_iterations, rep.residual_norm);
    Ok(())
}

#[derive(Serialize)]
struct SweepRow {
    t: f64,
    energy: f64,
    beta: f64,
    residual: f64,
    newton_iterations: usize,
}

fn cmd_sweep(family: &Path, cfg: &RunConfig) -> Result<()> {
    let fam = load_family(family)?;
    let tau0 = ScalarField::zeros(&fam.members()[0].1.mesh);
    let reports = continuation_solve(&fam, &tau0, &cfg.solver)?;
    let row = |r: &SolveReport| -> Result<SweepRow> {
        let t = r.t.unwrap_or(0.0);
        let data = fam.at(t)?;
        let mut ecfg = cfg.energy.clone();
        ecfg.reference_masses = false;
        let e = wang_yau_energy_with(&data, &r.tau, &ecfg, None)?;
        Ok(SweepRow {
            t,
            energy: e.energy,
            beta: r.min_deflated_eigenvalue,
            residual: r.residual_norm,
            newton_iterations: r.newton_iterations,
        })
    };
    let threads = cfg.effective_threads().max(1);
    let rows: Vec<SweepRow> = if threads == 1 {
        reports.iter().map(row).collect::<Result<_>>()?
    } else {
        let chunk = reports.len().div_ceil(threads);
        std::thread::scope(|s| {
            let handles: Vec<_> = reports
                .chunks(chunk.max(1))
                .map(|c| s.spawn(|| c.iter().map(&row).collect::<Result<Vec<_>>>()))
                .collect();
            let mut out = Vec::new();
            for h in handles {
                out.extend(h.join().expect("sweep worker panicked")?);
            }
            Ok::<_, Error>(out)
        })?
    };
    io::write_csv(
        &cfg.out_dir.join("sweep.csv"),
        &["t", "E_WY", "beta", "residual", "newton_iterations"],
        rows.iter().map(|r| vec![r.t, r.energy, r.beta, r.residual, r.newton_iterations as f64]),
    )?;
    write_json(cfg, "sweep.json", &rows)?;
    println!("sweep: {} steps", rows.len());
    Ok(())
}

fn cmd_oracle(kind: &OracleKind, cfg: &RunConfig) -> Result<()> {
    let level = cfg.level;
    let bundle: OracleBundle = match kind {
        OracleKind::RoundSphere { r, h } => round_sphere(*r, *h, level)?,
        OracleKind::Schwarzschild { m, r_areal } => schwarzschild_sphere(*m, *r_areal, level)?,
        OracleKind::SchwarzschildIsotropic { m, r } => schwarzschild_isotropic_sphere(*m, *r, level)?,
        OracleKind::GraphSphere { axes, grad } => {
            let base = match axes.as_slice() {
                [r] => ConvexBase::Sphere { r: *r },
                [a, b, c] => ConvexBase::Ellipsoid { a: *a, b: *b, c: *c },
                _ => return Err(Error::InvalidParameter("--axes takes one or three values".into())),
            };
            graph_sphere(base, &[*grad], level)?
        }
        OracleKind::Ellipsoid { a, b, c } => {
            let (mesh, metric, emb) = ellipsoid_metric(*a, *b, *c, level)?;
            let h: Vec<f64> = emb
                .positions
                .iter()
                .map(|p| qlm_core::oracles::ellipsoid_mean_curvature([*a, *b, *c], *p))
                .collect();
            io::write_file(&cfg.out_dir.join("embedding.txt"), &io::format_embedding(&emb))?;
            let norm_h = ScalarField::named(&mesh, "normH", h)?;
            let data = BoundaryData::time_symmetric(mesh, metric, norm_h)?;
            let total = qlm_core::oracles::ellipsoid_total_mean_curvature([*a, *b, *c]);
            let mut known = std::collections::BTreeMap::new();
            known.insert(
                "total_H0".to_string(),
                qlm_core::oracles::Known {
                    value: total,
                    provenance: "quadrature of the analytic ellipsoid mean curvature".into(),
                },
            );
            OracleBundle {
                name: format!("ellipsoid({a},{b},{c})"),
                data,
                known,
            }
        }
    };
    io::save_boundary(&cfg.out_dir, &bundle.data)?;
    write_json(
        cfg,
        "oracle.json",
        json!({"name": bundle.name, "level": level, "known": bundle.known}),
    )?;
    println!("{}: {} vertices", bundle.name, bundle.data.mesh.num_vertices());
    for (k, v) in &bundle.known {
        println!("  {k} = {:.12}", v.value);
    }
    Ok(())
}
