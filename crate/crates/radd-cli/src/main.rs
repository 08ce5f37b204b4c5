//! Experiment harness CLI.
//!
//! ```text
//! radd run     --config run.cfg --scheme factorized --sigma 0.5 --out run.csv
//! radd run     --preset fig5 --out results/
//! radd study   --mode both --levels 3 --out study.csv
//! radd certify --scheme factorized --grid-n 12 --sigma 0.5
//! ```
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use radd_core::{
    apply_config_key, apply_spatial_step, apply_time_step, assemble_diffusion, build_grid,
    build_three_component, build_two_component, certify, convergence_study, parse_config, preset,
    run_experiment, CertifyScheme, Decomposition, Error, ExperimentConfig, SchemeKind, StudyMode,
};

#[derive(Parser)]
#[command(
    name = "radd",
    about = "Domain-decomposition time-stepping experiments for the 2D diffusion model problem",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment (or a figure preset) and emit per-level CSV
    Run(RunArgs),
    /// Convergence study: halve a discretization parameter per level
    Study(StudyArgs),
    /// Certify stability bounds on a dense verification grid
    Certify(CertifyArgs),
}

/// Configuration overrides shared by `run` and `study`. Every key of the
/// flat config file has a flag of the same name; flags win over the file.
#[derive(Args, Clone, Default)]
struct ConfigFlags {
    /// Flat `key = value` configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    /// parabolic | hyperbolic
    #[arg(long)]
    problem: Option<String>,
    /// weighted | factorized | factorized-commuted | componentwise |
    /// componentwise-symmetrized | regularized
    #[arg(long)]
    scheme: Option<String>,
    /// Scheme weight
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    mode1: Option<u32>,
    #[arg(long)]
    mode2: Option<u32>,
    #[arg(long)]
    l1: Option<f64>,
    #[arg(long)]
    l2: Option<f64>,
    #[arg(long)]
    cells1: Option<usize>,
    #[arg(long)]
    cells2: Option<usize>,
    /// Final time
    #[arg(long = "T")]
    t_final: Option<f64>,
    #[arg(long)]
    nsteps: Option<usize>,
    /// Spatial step (sets cells1/cells2; must divide the side lengths)
    #[arg(long)]
    h: Option<f64>,
    /// Time step (sets nsteps; must divide the final time)
    #[arg(long)]
    tau: Option<f64>,
    /// Coarse decomposition step
    #[arg(long)]
    hhat: Option<f64>,
    /// two | three | three-overlap
    #[arg(long)]
    splitting: Option<String>,
    #[arg(long)]
    overlap_halfwidth: Option<usize>,
    /// Initial-data amplitude (0 runs the trivial solution)
    #[arg(long)]
    amplitude: Option<f64>,
}

impl ConfigFlags {
    fn build(&self) -> Result<ExperimentConfig, Error> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
                parse_config(&text)?
            }
            None => ExperimentConfig::default(),
        };
        self.apply(&mut cfg)?;
        Ok(cfg)
    }

    fn apply(&self, cfg: &mut ExperimentConfig) -> Result<(), Error> {
        let mut set = |key: &str, value: Option<String>| -> Result<(), Error> {
            if let Some(v) = value {
                apply_config_key(cfg, key, &v)?;
            }
            Ok(())
        };
        set("problem", self.problem.clone())?;
        set("scheme", self.scheme.clone().map(|s| s.replace('-', "_")))?;
        set("sigma", self.sigma.map(|v| v.to_string()))?;
        set("mode1", self.mode1.map(|v| v.to_string()))?;
        set("mode2", self.mode2.map(|v| v.to_string()))?;
        set("l1", self.l1.map(|v| v.to_string()))?;
        set("l2", self.l2.map(|v| v.to_string()))?;
        set("cells1", self.cells1.map(|v| v.to_string()))?;
        set("cells2", self.cells2.map(|v| v.to_string()))?;
        set("T", self.t_final.map(|v| v.to_string()))?;
        set("nsteps", self.nsteps.map(|v| v.to_string()))?;
        set("hhat", self.hhat.map(|v| v.to_string()))?;
        set("splitting", self.splitting.clone())?;
        set(
            "overlap_halfwidth",
            self.overlap_halfwidth.map(|v| v.to_string()),
        )?;
        set("amplitude", self.amplitude.map(|v| v.to_string()))?;
        if let Some(h) = self.h {
            apply_spatial_step(cfg, h)?;
        }
        if let Some(tau) = self.tau {
            apply_time_step(cfg, tau)?;
        }
        Ok(())
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    flags: ConfigFlags,
    /// Figure preset (fig5..fig9); expands to a set of runs and writes one
    /// CSV per run under --out (a directory). Other flags still override
    /// every expanded run.
    #[arg(long)]
    preset: Option<String>,
    /// Output CSV path (single run) or directory (preset); stdout if absent
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct StudyArgs {
    #[command(flatten)]
    flags: ConfigFlags,
    /// time | space | both | subdomains
    #[arg(long)]
    mode: String,
    /// Number of refinement levels (>= 2)
    #[arg(long)]
    levels: usize,
    /// Output CSV path for the summary table; stdout if absent.
    /// Per-level series land next to it as `<stem>_level<k>.csv`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CertifyArgs {
    /// weighted | factorized | factorized-commuted | componentwise |
    /// componentwise-symmetrized | regularized | hyperbolic-weighted |
    /// hyperbolic-regularized
    #[arg(long)]
    scheme: String,
    /// Cells per axis of the unit-square verification grid
    #[arg(long = "grid-n", default_value_t = 12)]
    grid_n: usize,
    /// Scheme weight; defaults to the scheme's stability threshold
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long, default_value_t = 0.01)]
    tau: f64,
    #[arg(long, default_value_t = 0.5)]
    hhat: f64,
    /// two | three | three-overlap
    #[arg(long, default_value = "two")]
    splitting: String,
    #[arg(long, default_value_t = 0)]
    overlap_halfwidth: usize,
    /// Steps per random zero-source trajectory
    #[arg(long, default_value_t = 50)]
    steps: usize,
}

fn exit_code_for(e: &Error) -> u8 {
    match e {
        Error::NoConvergence { .. }
        | Error::Numerical(_)
        | Error::NotSymmetricPositiveDefinite(_) => 3,
        _ => 2,
    }
}

fn write_or_print(path: Option<&Path>, content: &str) -> Result<(), Error> {
    match path {
        Some(p) => {
            if let Some(parent) = p.parent() {
                if !parent.as_os_str().is_empty() {
                    fs::create_dir_all(parent).map_err(|e| {
                        Error::Config(format!("cannot create {}: {e}", parent.display()))
                    })?;
                }
            }
            fs::write(p, content)
                .map_err(|e| Error::Config(format!("cannot write {}: {e}", p.display())))
        }
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

fn cmd_run(args: &RunArgs) -> Result<(), Error> {
    match &args.preset {
        Some(name) => {
            let out_dir = args.out.clone().unwrap_or_else(|| PathBuf::from("."));
            fs::create_dir_all(&out_dir)
                .map_err(|e| Error::Config(format!("cannot create {}: {e}", out_dir.display())))?;
            for (label, mut cfg) in preset(name)? {
                args.flags.apply(&mut cfg)?;
                let series = run_experiment(&cfg)?;
                for w in &series.warnings {
                    eprintln!("warning: {label}: {w}");
                }
                let path = out_dir.join(format!("{label}.csv"));
                write_or_print(Some(&path), &series.to_csv())?;
                eprintln!(
                    "{label}: final error {:.6e} -> {}",
                    series.final_error(),
                    path.display()
                );
            }
            Ok(())
        }
        None => {
            let cfg = args.flags.build()?;
            let series = run_experiment(&cfg)?;
            for w in &series.warnings {
                eprintln!("warning: {w}");
            }
            let out = args
                .out
                .clone()
                .or_else(|| cfg.output_path.clone().map(PathBuf::from));
            write_or_print(out.as_deref(), &series.to_csv())
        }
    }
}

fn cmd_study(args: &StudyArgs) -> Result<(), Error> {
    let cfg = args.flags.build()?;
    let mode = StudyMode::parse(&args.mode)?;
    let table = convergence_study(&cfg, args.levels, mode)?;

    if let Some(out) = &args.out {
        // per-level series next to the summary
        let stem = out
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "study".into());
        let dir = out.parent().map(Path::to_path_buf).unwrap_or_default();
        for row in &table.rows {
            let mut level_cfg = cfg.clone();
            level_cfg.cells1 = row.cells;
            level_cfg.cells2 = row.cells * cfg.cells2 / cfg.cells1;
            level_cfg.nsteps = row.nsteps;
            level_cfg.hhat = row.hhat;
            let series = run_experiment(&level_cfg)?;
            let path = dir.join(format!("{stem}_level{}.csv", row.level));
            write_or_print(Some(&path), &series.to_csv())?;
        }
    }
    write_or_print(args.out.as_deref(), &table.to_csv())
}

fn certify_scheme(name: &str) -> Result<CertifyScheme, Error> {
    match name.replace('-', "_").as_str() {
        "weighted" => Ok(CertifyScheme::Parabolic(SchemeKind::Weighted)),
        "factorized" => Ok(CertifyScheme::Parabolic(SchemeKind::Factorized)),
        "factorized_commuted" => Ok(CertifyScheme::Parabolic(SchemeKind::FactorizedCommuted)),
        "componentwise" => Ok(CertifyScheme::Parabolic(SchemeKind::Componentwise)),
        "componentwise_symmetrized" => Ok(CertifyScheme::Parabolic(
            SchemeKind::ComponentwiseSymmetrized,
        )),
        "regularized" => Ok(CertifyScheme::Parabolic(SchemeKind::Regularized)),
        "hyperbolic_weighted" => Ok(CertifyScheme::HyperbolicWeighted),
        "hyperbolic_regularized" => Ok(CertifyScheme::HyperbolicRegularized),
        other => Err(Error::Config(format!("unknown scheme `{other}`"))),
    }
}

fn cmd_certify(args: &CertifyArgs) -> Result<(), Error> {
    let scheme = certify_scheme(&args.scheme)?;
    let grid = build_grid(1.0, 1.0, args.grid_n, args.grid_n)?;
    let a = Arc::new(assemble_diffusion(grid, |_, _| 1.0, 1.0)?);

    let needs_decomposition = !matches!(
        scheme,
        CertifyScheme::Parabolic(SchemeKind::Weighted) | CertifyScheme::HyperbolicWeighted
    );
    let dec: Option<Decomposition> = if needs_decomposition {
        Some(match args.splitting.as_str() {
            "two" => build_two_component(grid, args.hhat)?,
            "three" => build_three_component(grid, args.hhat, 0)?,
            "three-overlap" | "three_overlap" => {
                build_three_component(grid, args.hhat, args.overlap_halfwidth.max(1))?
            }
            other => return Err(Error::Config(format!("unknown splitting `{other}`"))),
        })
    } else {
        None
    };

    let p = dec.as_ref().map_or(1, Decomposition::p);
    let sigma = args.sigma.unwrap_or(match scheme {
        CertifyScheme::Parabolic(SchemeKind::Regularized) => p as f64 / 2.0,
        CertifyScheme::Parabolic(_) => 0.5,
        CertifyScheme::HyperbolicWeighted => 0.25,
        CertifyScheme::HyperbolicRegularized => p as f64 / 4.0,
    });

    let report = certify(scheme, sigma, args.tau, &a, dec.as_ref(), args.steps)?;
    println!("{report}");
    if !report.below_threshold && !report.pass {
        return Err(Error::Numerical("certification failed".into()));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Study(args) => cmd_study(args),
        Command::Certify(args) => cmd_certify(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
