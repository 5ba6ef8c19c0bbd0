use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;
use serde_json::json;

use mshom::cell::{solve_local, MacroPoint};
use mshom::config::{Config, ConfigError};
use mshom::evolution::{solve_direct, solve_homogenized, MeshSpec};
use mshom::flux::{verify_structure, Flux, Sampler};
use mshom::harness::{gradient_report, run_study, test_weak_mean_convergence, HarnessError, Setup};
use mshom::homogenize::{tabulate, Axis, MacroLattice};
use mshom::io;
use mshom::scales::{classify, LogPowerScale, ScaleError, ScalePair};

#[derive(Parser)]
#[command(name = "mshom", version, about = "Numerical homogenisation of monotone parabolic problems with multiple scales")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Classify a scale pair into its local-problem regime.
    Classify {
        /// Comma-separated spatial exponents, `p` or `p:q`.
        #[arg(long)]
        spatial: Option<String>,
        /// Comma-separated temporal exponents, `p` or `p:q`.
        #[arg(long)]
        temporal: Option<String>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Check the structure conditions of the configured flux by sampling.
    VerifyFlux(Common),
    /// Solve one local problem.
    CellSolve {
        #[command(flatten)]
        common: Common,
        /// Comma-separated macroscopic gradient.
        #[arg(long)]
        xi: Option<String>,
    },
    /// Evaluate and tabulate the homogenised flux.
    Homogenize {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        xi: Option<String>,
    },
    /// Solve the fine-scale problems and the homogenised problem.
    Solve(Common),
    /// Run the epsilon sweep.
    Study(Common),
    /// Run the weak-mean and gradient convergence experiments.
    MultiscaleTest(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, env = "MSHOM_OUT")]
    out: Option<PathBuf>,
    /// Comma-separated list replacing `eps_list`.
    #[arg(long)]
    eps: Option<String>,
    /// Cell grid resolution.
    #[arg(long)]
    ny: Option<usize>,
}

struct Failure {
    code: u8,
    module: &'static str,
    message: String,
}

impl Failure {
    fn new(code: u8, module: &'static str, message: impl ToString) -> Failure {
        Failure { code, module, message: message.to_string() }
    }
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Failure {
        let code = if e.is_non_convergence() {
            3
        } else if e.is_out_of_scope() {
            2
        } else {
            1
        };
        Failure::new(code, e.module(), e)
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Failure {
        Failure::new(1, "cli", e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Failure {
        Failure::new(1, "cli", e)
    }
}

fn parse_list<T>(text: &str, parse: impl Fn(&str) -> Result<T, String>) -> Result<Vec<T>, Failure> {
    text.split(',').map(|s| parse(s.trim()).map_err(|e| Failure::new(1, "cli", e))).collect()
}

fn parse_floats(text: &str) -> Result<Vec<f64>, Failure> {
    parse_list(text, |s| s.parse::<f64>().map_err(|e| format!("{s:?}: {e}")))
}

fn load(common: &Common) -> Result<(Setup, PathBuf), Failure> {
    let text = fs::read_to_string(&common.config)
        .map_err(|e| Failure::new(1, "cli", format!("{}: {e}", common.config.display())))?;
    let mut config = Config::from_json(&text)?;
    if let Some(eps) = &common.eps {
        config.eps_list = Some(parse_floats(eps)?);
    }
    if let Some(ny) = common.ny {
        config.cell.ny = Some(ny);
    }
    let out = common
        .out
        .clone()
        .or_else(|| config.output.clone().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    let setup = Setup::new(config)?;
    fs::create_dir_all(&out)?;
    io::write_json(&out.join("resolved_config.json"), &setup.config)?;
    Ok((setup, out))
}

fn xi_or_unit(text: &Option<String>, dim: usize) -> Result<Vec<f64>, Failure> {
    let xi = match text {
        Some(t) => parse_floats(t)?,
        None => vec![1.0; dim],
    };
    if xi.len() != dim {
        return Err(Failure::new(1, "cli", format!("--xi needs {dim} components")));
    }
    Ok(xi)
}

fn centre(dim: usize) -> MacroPoint {
    MacroPoint::new(&vec![0.5; dim], 0.0)
}

fn cmd_classify(spatial: &Option<String>, temporal: &Option<String>, config: &Option<PathBuf>) -> Result<(), Failure> {
    let scales = |text: &str| parse_list(text, |s| s.parse::<LogPowerScale>().map_err(|e| e.to_string()));
    let pair = match (spatial, temporal, config) {
        (Some(sp), Some(tm), _) => {
            ScalePair::new(scales(sp)?, scales(tm)?).map_err(|e| Failure::new(1, "scales", e))?
        }
        (None, None, Some(path)) => {
            let text = fs::read_to_string(path)?;
            Config::from_json(&text)?.scales
        }
        _ => return Err(Failure::new(1, "cli", "give --spatial and --temporal, or --config")),
    };
    match classify(&pair) {
        Ok(c) => {
            println!("{}", serde_json::to_string(&c).expect("classification serialises"));
            Ok(())
        }
        Err(e @ ScaleError::NonPositivePower(_) | e @ ScaleError::BadRational(_) | e @ ScaleError::EmptyList) => {
            Err(Failure::new(1, "scales", e))
        }
        Err(e) => Err(Failure::new(2, "scales", e)),
    }
}

fn cmd_verify_flux(common: &Common) -> Result<(), Failure> {
    let (setup, out) = load(common)?;
    let cfg = &setup.config;
    let sampler = Sampler {
        count: cfg.sampler.count.unwrap_or(10_000),
        seed: cfg.seed,
        k_radius: cfg.sampler.k_radius.unwrap_or(4.0),
        t_max: cfg.problem.t_final,
    };
    let report = verify_structure(setup.flux.as_ref(), &sampler, cfg.tolerances.structure.unwrap_or(1e-9));
    io::write_json(&out.join("flux_report.json"), &report)?;
    let failed: Vec<String> =
        report.checks.iter().filter(|c| !c.passed).map(|c| format!("{:?}", c.condition)).collect();
    println!(
        "{}: {} samples, estimated c0 = {}, c1 = {}, {}",
        setup.flux.describe(),
        report.samples,
        report.estimated_c0,
        report.estimated_c1,
        if failed.is_empty() { "all conditions pass".to_string() } else { format!("failed: {}", failed.join(", ")) }
    );
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::new(1, "flux", format!("structure conditions failed: {}", failed.join(", "))))
    }
}

fn cmd_cell_solve(common: &Common, xi: &Option<String>) -> Result<(), Failure> {
    let (setup, out) = load(common)?;
    let d = setup.config.dim();
    let xi = xi_or_unit(xi, d)?;
    let s = setup.grid.s_nodes()[0];
    let fixed = vec![s; setup.config.m()];
    let regime = setup.classification;
    let sol = solve_local(setup.flux.as_ref(), &centre(d), &xi, &regime.regime, &fixed, setup.grid, &setup.cell)
        .map_err(HarnessError::from)?;
    io::write_cell_solution(&out, &sol, &regime, &xi)?;
    println!(
        "{} cell solve: residual {}, iterations {}, sweeps {}, L2 norm {}",
        regime.regime,
        sol.residual,
        sol.iterations,
        sol.sweeps,
        sol.l2_norm()
    );
    Ok(())
}

fn cmd_homogenize(common: &Common, xi: &Option<String>) -> Result<(), Failure> {
    let (setup, out) = load(common)?;
    let d = setup.config.dim();
    let xi = xi_or_unit(xi, d)?;
    let hom = setup.homogenized()?;
    let b = hom.evaluate_direct(&centre(d).x, 0.0, &xi).map_err(HarnessError::from)?;
    let table = match hom.table() {
        Some(t) => t.clone(),
        None => {
            let r = setup.config.study.xi_max.unwrap_or(4.0);
            let count = setup.config.study.xi_count.unwrap_or(33);
            let tabulated = tabulate(&hom, &vec![Axis::new(-r, r, count); d], &MacroLattice::single(d))
                .map_err(HarnessError::from)?;
            tabulated.table().expect("tabulated flux has a table").clone()
        }
    };
    io::write_table(&out, &table, &setup.classification)?;
    let text: Vec<String> = b.iter().map(|v| format!("{v}")).collect();
    println!("b = [{}] at xi = {xi:?} ({})", text.join(", "), setup.classification.regime);
    Ok(())
}

fn cmd_solve(common: &Common) -> Result<(), Failure> {
    let (setup, out) = load(common)?;
    let cfg = &setup.config;
    let hom = setup.homogenized()?;
    let mut finest = MeshSpec { nx: cfg.mesh.nx_min, nt: cfg.mesh.nt_min };
    for eps in cfg.eps() {
        let (inst, mesh) = setup.fine_mesh(eps)?;
        finest.nx = finest.nx.max(mesh.nx);
        finest.nt = finest.nt.max(mesh.nt);
        let field = solve_direct(&cfg.problem, setup.flux.as_ref(), &inst, mesh, &setup.macro_step, cfg.mesh.rho)
            .map_err(HarnessError::from)?;
        io::write_field(&out, &field)?;
        info!("eps = {eps}: nx = {}, nt = {}", mesh.nx, mesh.nt);
    }
    let u = solve_homogenized(&cfg.problem, &hom, finest, &setup.macro_step).map_err(HarnessError::from)?;
    io::write_field(&out, &u)?;
    println!(
        "solved {} fine problems and the homogenised problem (nx = {}, nt = {}); L2 norm of u = {}",
        cfg.eps().len(),
        finest.nx,
        finest.nt,
        u.norms.l2_space_time
    );
    Ok(())
}

fn cmd_study(common: &Common) -> Result<(), Failure> {
    let (setup, out) = load(common)?;
    match run_study(&setup) {
        Ok(outcome) => {
            let report = &outcome.report;
            io::write_report(&out, report)?;
            let failed: Vec<&str> = report.verdicts.iter().filter(|v| !v.passed).map(|v| v.name.as_str()).collect();
            let last = report.rows.last().map(|r| r.l2_error).unwrap_or(0.0);
            println!(
                "{} rows, final l2_error {last}, {}",
                report.rows.len(),
                if failed.is_empty() { "all verdicts pass".to_string() } else { format!("failed: {}", failed.join(", ")) }
            );
            if failed.is_empty() {
                Ok(())
            } else {
                Err(Failure::new(1, "harness", format!("verdicts failed: {}", failed.join(", "))))
            }
        }
        Err(failure) => {
            if let Some(partial) = &failure.partial {
                io::write_report(&out, partial)?;
            }
            Err(failure.error.into())
        }
    }
}

fn cmd_multiscale(common: &Common) -> Result<(), Failure> {
    let (setup, out) = load(common)?;
    let cfg = &setup.config;
    let v = cfg.multiscale.v.clone().expect("resolved");
    let phi = cfg.multiscale.phi.clone().expect("resolved");
    let weak = test_weak_mean_convergence(
        &v,
        &cfg.scales,
        &cfg.eps(),
        &phi,
        cfg.dim(),
        cfg.problem.t_final,
        &cfg.mesh,
        cfg.slack(),
    )?;
    let gradient = if cfg.dim() == 1 && cfg.m() == 1 && setup.flux.is_linear() {
        let outcome = run_study(&setup).map_err(|f| f.error)?;
        let direct: Vec<_> = outcome
            .direct
            .iter()
            .map(|f| setup.fine_mesh(f.eps.unwrap_or_default()).map(|(inst, _)| (inst, f.clone())))
            .collect::<Result<_, _>>()?;
        Some(gradient_report(&setup, &outcome.homogenized, &direct)?)
    } else {
        info!("gradient experiment skipped: needs N = 1, m = 1 and a linear flux");
        None
    };
    io::write_multiscale(&out, &weak, gradient.as_ref())?;
    let last = |e: Vec<f64>| e.last().copied().unwrap_or(0.0);
    println!(
        "weak mean: final error {} ({}); gradient: {}",
        last(weak.rows.iter().map(|r| r.error).collect()),
        if weak.decreasing { "decreasing" } else { "not decreasing" },
        match &gradient {
            Some(g) => format!(
                "final error {} ({})",
                last(g.rows.iter().map(|r| r.error).collect()),
                if g.decreasing { "decreasing" } else { "not decreasing" }
            ),
            None => "skipped".to_string(),
        }
    );
    Ok(())
}

fn run(cli: &Cli) -> Result<(), Failure> {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global()
            .map_err(|e| Failure::new(1, "cli", e))?;
    }
    match &cli.command {
        Command::Classify { spatial, temporal, config } => cmd_classify(spatial, temporal, config),
        Command::VerifyFlux(c) => cmd_verify_flux(c),
        Command::CellSolve { common, xi } => cmd_cell_solve(common, xi),
        Command::Homogenize { common, xi } => cmd_homogenize(common, xi),
        Command::Solve(c) => cmd_solve(c),
        Command::Study(c) => cmd_study(c),
        Command::MultiscaleTest(c) => cmd_multiscale(c),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", json!({ "code": f.code, "module": f.module, "message": f.message }));
            ExitCode::from(f.code)
        }
    }
}
