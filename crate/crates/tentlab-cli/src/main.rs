//! tentlab: batch driver and single-operation CLI over tentlab-core.
//!
//! Exit codes: 0 success, 1 invariant violation (reports still written),
//! 2 configuration or input errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use tentlab_core::decomp::{
    coefficient_report, decompose, reconstruct, AtomMode, DecompParams,
};
use tentlab_core::dyadic::{build_dyadic_system, verify_dyadic};
use tentlab_core::hardy::{
    calderon_reconstruct, hardy_decompose, validate_hardy_atom, CalculusFunctions, HardyAtomMode,
    HardyParams, SpectralOperator,
};
use tentlab_core::io::{
    self, atomic_write, calderon_sweep_csv, load_function, load_graph, load_space, load_tent,
    load_weight, write_json, DecompositionDoc, HardyAtomsDoc, SystemDoc,
};
use tentlab_core::tent::{tent_norm, validate_q_atom, BallSpec, TGrid};
use tentlab_core::weights::ap_constant;

#[derive(Parser)]
#[command(name = "tentlab", version, about = "Weighted tent space laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Space diagnostics.
    Space {
        #[command(subcommand)]
        cmd: SpaceCmd,
    },
    /// Dyadic cube systems.
    Dyadic {
        #[command(subcommand)]
        cmd: DyadicCmd,
    },
    /// Muckenhoupt weight constants.
    Weights {
        #[command(subcommand)]
        cmd: WeightsCmd,
    },
    /// Tent-space norms and atom checks.
    Tent {
        #[command(subcommand)]
        cmd: TentCmd,
    },
    /// Atomic decomposition of a tent function.
    Decompose(DecomposeArgs),
    /// Hardy-space pipeline.
    Hardy {
        #[command(subcommand)]
        cmd: HardyCmd,
    },
    /// Run a batch experiment from a config file.
    Run {
        config: PathBuf,
        /// Output directory (default: alongside the config).
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum SpaceCmd {
    /// Validate a space document and print its doubling report as JSON.
    Check { file: PathBuf },
}

#[derive(Subcommand)]
enum DyadicCmd {
    /// Build a system of dyadic cubes.
    Build {
        space: PathBuf,
        #[arg(long, default_value_t = 0.0625)]
        delta: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Verify a built system against its space; nonzero exit on failure.
    Verify {
        system: PathBuf,
        #[arg(long)]
        space: PathBuf,
    },
}

#[derive(Subcommand)]
enum WeightsCmd {
    /// Exact A_p constant of a weight.
    Ap {
        space: PathBuf,
        weight: PathBuf,
        #[arg(long, default_value_t = 2.0)]
        p: f64,
    },
}

#[derive(Subcommand)]
enum TentCmd {
    /// Weighted tent norm of a tent function.
    Norm {
        space: PathBuf,
        weight: PathBuf,
        function: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        p: f64,
    },
    /// q-atom validation report.
    AtomCheck {
        space: PathBuf,
        weight: PathBuf,
        function: PathBuf,
        #[arg(long)]
        center: usize,
        #[arg(long)]
        radius: f64,
        #[arg(long, default_value_t = 0.5)]
        p: f64,
        #[arg(long, default_value_t = 2.0)]
        q: f64,
    },
}

#[derive(Args)]
struct DecomposeArgs {
    space: PathBuf,
    weight: PathBuf,
    function: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    p: f64,
    #[arg(long, default_value_t = 2.0)]
    q: f64,
    #[arg(long, default_value = "strict")]
    mode: String,
    #[arg(long, default_value_t = 0.0625)]
    delta: f64,
    #[arg(long, default_value_t = 0.5)]
    gamma: f64,
    #[arg(long, default_value_t = 1.0)]
    kappa: f64,
    #[arg(long)]
    c1: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
    /// Directory for CSV plot data.
    #[arg(long)]
    emit_plots: Option<PathBuf>,
}

#[derive(Subcommand)]
enum HardyCmd {
    /// Full pipeline: heat extension, tent decomposition, atom synthesis.
    Decompose {
        space: PathBuf,
        graph: PathBuf,
        weight: PathBuf,
        function: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        p: f64,
        #[arg(long, default_value_t = 2.0)]
        q: f64,
        #[arg(long = "M", default_value_t = 1)]
        m_order: u32,
        #[arg(long, default_value = "leak")]
        mode: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Reproducing-formula defects; --sweep-grid emits (eigenvalue, defect)
    /// CSV over the default grid.
    Calderon {
        space: PathBuf,
        graph: PathBuf,
        #[arg(long)]
        function: Option<PathBuf>,
        #[arg(long, default_value_t = false)]
        sweep_grid: bool,
        #[arg(long = "M", default_value_t = 1)]
        m_order: u32,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("TENTLAB_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            let _ = tentlab_core::configure_threads(n.max(1));
        }
    }
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            // Invariant violations exit 1; config/input problems exit 2.
            let invariant = err.chain().any(|c| {
                let s = c.to_string();
                s.contains("invariant violated") || s.contains("decomposition failed")
            });
            ExitCode::from(if invariant { 1 } else { 2 })
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Space { cmd } => match cmd {
            SpaceCmd::Check { file } => {
                let space = load_space(&file)?;
                let report = space.doubling_report();
                println!("{}", serde_json::to_string_pretty(&report)?);
                Ok(ExitCode::SUCCESS)
            }
        },
        Command::Dyadic { cmd } => match cmd {
            DyadicCmd::Build { space, delta, out } => {
                let sp = load_space(&space)?;
                let sys = build_dyadic_system(&sp, delta, None)?;
                write_json(&out, &SystemDoc::from_system(&sys))?;
                println!(
                    "built {} generations (k = {}..{}), max children {}",
                    sys.generations().len(),
                    sys.k_min(),
                    sys.k_max(),
                    sys.max_children()
                );
                Ok(ExitCode::SUCCESS)
            }
            DyadicCmd::Verify { system, space } => {
                let sp = load_space(&space)?;
                let doc: SystemDoc =
                    serde_json::from_str(&std::fs::read_to_string(&system)?)?;
                let sys = doc.to_system()?;
                let report = verify_dyadic(&sp, &sys);
                println!("{}", serde_json::to_string_pretty(&report)?);
                Ok(if report.all_ok {
                    ExitCode::SUCCESS
                } else {
                    ExitCode::from(1)
                })
            }
        },
        Command::Weights { cmd } => match cmd {
            WeightsCmd::Ap { space, weight, p } => {
                let sp = load_space(&space)?;
                let w = load_weight(&weight, sp.len())?;
                println!("{}", ap_constant(&sp, &w, p));
                Ok(ExitCode::SUCCESS)
            }
        },
        Command::Tent { cmd } => match cmd {
            TentCmd::Norm {
                space,
                weight,
                function,
                p,
            } => {
                let sp = load_space(&space)?;
                let w = load_weight(&weight, sp.len())?;
                let f = load_tent(&function, sp.len())?;
                println!("{}", tent_norm(&sp, &f, p, &w));
                Ok(ExitCode::SUCCESS)
            }
            TentCmd::AtomCheck {
                space,
                weight,
                function,
                center,
                radius,
                p,
                q,
            } => {
                let sp = load_space(&space)?;
                let w = load_weight(&weight, sp.len())?;
                let f = load_tent(&function, sp.len())?;
                let report = validate_q_atom(&sp, &f, BallSpec { center, radius }, p, q, &w);
                println!("{}", serde_json::to_string_pretty(&report)?);
                Ok(if report.ok {
                    ExitCode::SUCCESS
                } else {
                    ExitCode::from(1)
                })
            }
        },
        Command::Decompose(args) => run_decompose(args),
        Command::Hardy { cmd } => run_hardy(cmd),
        Command::Run { config, out_dir } => {
            let text = std::fs::read_to_string(&config)
                .with_context(|| format!("reading {}", config.display()))?;
            let cfg: io::ExperimentConfig = serde_json::from_str(&text)?;
            let dir = out_dir.unwrap_or_else(|| {
                config
                    .parent()
                    .unwrap_or_else(|| Path::new("."))
                    .join("tentlab-out")
            });
            let outcome = io::run_experiment(&cfg, &dir)?;
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
            if !outcome.report.hard_failures.is_empty() {
                for failure in &outcome.report.hard_failures {
                    eprintln!("FAIL: {failure}");
                }
            }
            Ok(ExitCode::from(outcome.exit_code as u8))
        }
    }
}

fn run_decompose(args: DecomposeArgs) -> Result<ExitCode> {
    let sp = load_space(&args.space)?;
    let w = load_weight(&args.weight, sp.len())?;
    let f = load_tent(&args.function, sp.len())?;
    let mode = match args.mode.as_str() {
        "strict" => AtomMode::Strict,
        "faithful" => AtomMode::Faithful,
        other => anyhow::bail!("unknown mode '{other}' (strict|faithful)"),
    };
    let params = DecompParams {
        delta: args.delta,
        gamma: args.gamma,
        kappa: args.kappa,
        c1: args.c1.unwrap_or_else(|| DecompParams::c1_floor(args.delta)),
        mode,
    };
    let d = decompose(&sp, &f, args.p, args.q, &w, &params)?;
    let crep = coefficient_report(&sp, &d, &f, &w);
    let recon = reconstruct(&d, sp.len(), f.grid());
    let scale = f.max_abs().max(1e-300);
    let worst = recon
        .values()
        .iter()
        .zip(f.values())
        .map(|(a, b)| (a - b).abs() / scale)
        .fold(0.0f64, f64::max);

    if let Some(out) = &args.out {
        write_json(out, &DecompositionDoc::from_decomposition(&d, f.grid(), sp.len()))?;
    }
    if let Some(report) = &args.report {
        write_json(report, &crep)?;
    }
    if let Some(dir) = &args.emit_plots {
        std::fs::create_dir_all(dir)?;
        let area = tentlab_core::tent::area_functional(&sp, &f);
        let mut csv = String::from("x,area\n");
        for (x, v) in area.iter().enumerate() {
            csv.push_str(&format!("{x},{v}\n"));
        }
        atomic_write(&dir.join("area-profile.csv"), csv.as_bytes())?;
        let mut csv = String::from("k,whitney_cubes,entries,sum_lambda_p\n");
        for ls in &d.level_stats {
            csv.push_str(&format!(
                "{},{},{},{}\n",
                ls.k, ls.whitney_cubes, ls.entries, ls.sum_lambda_p
            ));
        }
        atomic_write(&dir.join("level-stats.csv"), csv.as_bytes())?;
        let mut csv = String::from("index,k,cube,coefficient\n");
        for (i, e) in d.entries.iter().enumerate() {
            csv.push_str(&format!("{i},{},{},{}\n", e.k, e.cube, e.coefficient));
        }
        atomic_write(&dir.join("lambda-spectrum.csv"), csv.as_bytes())?;
    }
    println!(
        "{} atoms, sum|lambda|^p = {}, ||F||^p = {}, reconstruction error {worst:.3e}",
        crep.n_entries, crep.sum_lambda_p, crep.f_norm_p
    );
    let ok = worst <= 1e-12
        && (mode != AtomMode::Strict || crep.atoms_valid == crep.n_entries);
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

/// Dense eigendecomposition is comfortable up to roughly 2000 points.
fn warn_if_large(n: usize) {
    if n > 2000 {
        eprintln!(
            "warning: {n} points; the dense eigendecomposition will be slow beyond ~2000"
        );
    }
}

fn run_hardy(cmd: HardyCmd) -> Result<ExitCode> {
    match cmd {
        HardyCmd::Decompose {
            space,
            graph,
            weight,
            function,
            p,
            q,
            m_order,
            mode,
            out,
        } => {
            let sp = load_space(&space)?;
            let gs = load_graph(&graph)?;
            let w = load_weight(&weight, sp.len())?;
            let f = load_function(&function, sp.len())?;
            warn_if_large(sp.len());
            let op = SpectralOperator::build(&sp, &gs)?;
            let grid = TGrid::default_for_space(&sp)?;
            let mode = match mode.as_str() {
                "leak" => HardyAtomMode::Leak,
                "strict" => HardyAtomMode::Strict,
                other => anyhow::bail!("unknown mode '{other}' (leak|strict)"),
            };
            let n_int = sp.doubling_report().n_exp.ceil().max(1.0) as u32;
            let params = HardyParams {
                m_order,
                n_int,
                mode,
                ..HardyParams::default()
            };
            let hd = hardy_decompose(&op, &sp, &grid, &f, p, q, &w, &params)?;
            let mut max_leak = 0.0f64;
            for atom in &hd.atoms {
                let rep = validate_hardy_atom(&sp, &op, atom, p, q, &w, params.leak_tol);
                max_leak = max_leak.max(rep.max_leak);
            }
            if let Some(out) = &out {
                write_json(out, &HardyAtomsDoc::from_atoms(&sp, &hd.atoms, p, q, m_order))?;
            }
            println!("{}", serde_json::to_string_pretty(&hd.report)?);
            eprintln!("max support leak: {max_leak:.3e}");
            Ok(ExitCode::SUCCESS)
        }
        HardyCmd::Calderon {
            space,
            graph,
            function,
            sweep_grid,
            m_order,
            out,
        } => {
            let sp = load_space(&space)?;
            let gs = load_graph(&graph)?;
            warn_if_large(sp.len());
            let op = SpectralOperator::build(&sp, &gs)?;
            let grid = TGrid::default_for_space(&sp)?;
            let n_int = sp.doubling_report().n_exp.ceil().max(1.0) as u32;
            let calc = CalculusFunctions::build(1.0, m_order, n_int, 1024)
                .map_err(anyhow::Error::from)?;
            if sweep_grid {
                let csv = calderon_sweep_csv(&op, &grid, &calc);
                match &out {
                    Some(path) => atomic_write(path, csv.as_bytes())?,
                    None => print!("{csv}"),
                }
                return Ok(ExitCode::SUCCESS);
            }
            let f = match &function {
                Some(path) => load_function(path, sp.len())?,
                None => io::random_function(sp.len(), 0),
            };
            let (_, rep) = calderon_reconstruct(&op, &grid, &f, &calc);
            println!("{}", serde_json::to_string_pretty(&rep)?);
            Ok(ExitCode::SUCCESS)
        }
    }
}
