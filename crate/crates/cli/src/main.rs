use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use refloc::fmt::{fmt_f64, fmt_vec};
use refloc::instances::{self, generate_random};
use refloc::locate::{solve, LocateResult, LocationInstance, SolveOptions};
use refloc::refraction::{gate_single, gate_transit, retm_check};
use refloc::socp_export::{build_minlp, build_side, count_audit, expand_powers, write_model};
use refloc::{DemandPoint, Error, PathQuery, Side};
use refloc_cli::bench::{self, BenchConfig, Suite};
use refloc_cli::plot::render_svg;

#[derive(Parser)]
#[command(
    name = "refloc",
    version,
    about = "Facility location across a hyperplane separating two normed media"
)]
struct Cli {
    /// Relative gradient tolerance of the solver.
    #[arg(long, global = true, default_value_t = 1e-9)]
    tol: f64,
    /// Newton iterations per side and start.
    #[arg(long, global = true, default_value_t = 500)]
    max_iter: usize,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum SideArg {
    A,
    B,
}

#[derive(Subcommand)]
enum Cmd {
    /// Shortest path between two demand points of an instance (0-based indices in file order).
    Distance {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        from: usize,
        #[arg(long)]
        to: usize,
        /// Allow travel along the hyperplane with the instance's `norm_h`.
        #[arg(long)]
        transit: bool,
    },
    /// Solve the single-gate location problem.
    Locate(LocateArgs),
    /// Solve the location problem with transit along the hyperplane.
    LocateTransit(LocateArgs),
    /// Write the conic model of one side (or the big-M model) as text.
    ExportSocp {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long, value_enum, ignore_case = true, default_value = "a")]
        side: SideArg,
        #[arg(long)]
        transit: bool,
        /// Big-M mixed-binary model over both sides instead of one side model.
        #[arg(long)]
        minlp: bool,
        /// Replace power triples by rotated-cone towers.
        #[arg(long)]
        expand: bool,
        /// Add the 3x3 semidefinite pattern of every rotated cone as comments.
        #[arg(long)]
        emit_sdp: bool,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Generate a random instance in the unit cube.
    Gen {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 2)]
        dim: usize,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Run a benchmark suite and report CSV and JSON.
    Bench {
        #[arg(long, value_enum)]
        suite: Suite,
        /// Directory with external data sets named `<name>.txt`.
        #[arg(long)]
        data_dir: Option<PathBuf>,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        json: Option<PathBuf>,
        /// Points of the random suite.
        #[arg(long, default_value_t = 5000)]
        n: usize,
        #[arg(long, default_value_t = 2)]
        dim: usize,
        /// Omit timings so reports are reproducible byte for byte.
        #[arg(long)]
        no_timing: bool,
    },
    /// Solve a planar instance and draw it as SVG.
    Plot {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        transit: bool,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Sampled test of the rapid-transit condition for two points.
    CheckRetm {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        from: usize,
        #[arg(long)]
        to: usize,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
    },
}

#[derive(clap::Args)]
struct LocateArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, conflicts_with = "csv")]
    json: bool,
    #[arg(long)]
    csv: bool,
}

fn load(path: &Path) -> Result<(instances::InstanceFile, LocationInstance)> {
    if let Some(name) = path.to_str().and_then(|s| s.strip_prefix("dataset:")) {
        let file = instances::embedded_dataset(name)?;
        let inst = file.to_instance()?;
        return Ok((file, inst));
    }
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let file = instances::InstanceFile::parse(&text, path)?;
    let inst = file.to_instance()?;
    Ok((file, inst))
}

fn point(file: &instances::InstanceFile, i: usize) -> Result<DemandPoint> {
    let p = file.points.get(i).ok_or_else(|| {
        Error::InvalidInput(format!(
            "point index {i} out of range (instance has {})",
            file.points.len()
        ))
    })?;
    Ok(DemandPoint::new(p.coords.clone(), p.weight)?)
}

fn locate_text(r: &LocateResult) -> String {
    let d = &r.diagnostics;
    let mut s = format!(
        "x* = ({})\nf* = {}\nside = {}\nf_A = {}  (iterations {}, converged {})\nf_B = {}  (iterations {}, converged {})\nwall_seconds = {}\n",
        fmt_vec(&r.x_star, ", "),
        fmt_f64(r.f_star),
        r.side,
        fmt_f64(d.side_a.f),
        d.side_a.iterations,
        d.side_a.converged,
        fmt_f64(d.side_b.f),
        d.side_b.iterations,
        d.side_b.converged,
        d.wall_seconds
    );
    for w in &d.warnings {
        s.push_str(&format!("warning: {w}\n"));
    }
    s
}

fn locate_csv(r: &LocateResult) -> String {
    let d = &r.diagnostics;
    format!(
        "x_star,f_star,side,f_a,f_b,iterations_a,iterations_b,wall_seconds\n{},{},{},{},{},{},{},{}\n",
        fmt_vec(&r.x_star, ";"),
        fmt_f64(r.f_star),
        r.side,
        fmt_f64(d.side_a.f),
        fmt_f64(d.side_b.f),
        d.side_a.iterations,
        d.side_b.iterations,
        d.wall_seconds
    )
}

fn run(cli: Cli) -> Result<()> {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()?;
    }
    let opts = SolveOptions {
        tol: cli.tol,
        max_iter: cli.max_iter,
        ..SolveOptions::default()
    };
    match cli.cmd {
        Cmd::Distance {
            instance,
            from,
            to,
            transit,
        } => {
            let (file, inst) = load(&instance)?;
            let mut q = PathQuery::new(
                inst.h.clone(),
                point(&file, from)?,
                point(&file, to)?,
                inst.norm_a.clone(),
                inst.norm_b.clone(),
            );
            let r = if transit {
                let nh = inst
                    .norm_h
                    .clone()
                    .ok_or_else(|| Error::InvalidInput("instance has no norm_h".into()))?;
                q = q.with_transit(nh, 1.0);
                gate_transit(&q)?
            } else {
                gate_single(&q)?
            };
            println!("{}", serde_json::to_string_pretty(&r)?);
        }
        Cmd::Locate(args) => print_locate(&args, false, &opts)?,
        Cmd::LocateTransit(args) => print_locate(&args, true, &opts)?,
        Cmd::ExportSocp {
            instance,
            side,
            transit,
            minlp,
            expand,
            emit_sdp,
            output,
        } => {
            let (_, inst) = load(&instance)?;
            let side = match side {
                SideArg::A => Side::A,
                SideArg::B => Side::B,
            };
            let model = if minlp {
                if transit {
                    bail!(Error::Unsupported(
                        "the big-M model covers the single-gate problem only".into()
                    ));
                }
                build_minlp(&inst)?
            } else {
                build_side(&inst, side, transit)?
            };
            if !minlp && !transit {
                let audit = count_audit(&inst, &model, side)?;
                println!("{}", serde_json::to_string_pretty(&audit)?);
            }
            let model = if expand { expand_powers(&model) } else { model };
            write_model(&model, &output, emit_sdp)?;
        }
        Cmd::Gen { n, dim, output } => {
            let f = generate_random(n, dim, cli.seed)?;
            instances::write(&f, &output)?;
        }
        Cmd::Bench {
            suite,
            data_dir,
            csv,
            json,
            n,
            dim,
            no_timing,
        } => {
            let cfg = BenchConfig {
                data_dir,
                opts,
                seed: cli.seed,
                random_n: n,
                random_dim: dim,
                timing: !no_timing,
            };
            let report = bench::run(suite, &cfg);
            let text = report.to_csv();
            match &csv {
                Some(p) => {
                    std::fs::write(p, &text).with_context(|| format!("writing {}", p.display()))?
                }
                None if json.is_none() => print!("{text}"),
                None => {}
            }
            if let Some(p) = &json {
                std::fs::write(p, report.to_json()?)
                    .with_context(|| format!("writing {}", p.display()))?;
            }
        }
        Cmd::Plot {
            instance,
            transit,
            output,
        } => {
            let (_, inst) = load(&instance)?;
            let r = solve(&inst, transit, &opts)?;
            std::fs::write(&output, render_svg(&inst, &r)?)?;
        }
        Cmd::CheckRetm {
            instance,
            from,
            to,
            samples,
        } => {
            let (file, inst) = load(&instance)?;
            let nh = inst
                .norm_h
                .as_ref()
                .ok_or_else(|| Error::InvalidInput("instance has no norm_h".into()))?;
            let out = retm_check(
                &point(&file, from)?,
                &point(&file, to)?,
                &inst.h,
                (&inst.norm_a, &inst.norm_b, nh),
                samples,
            )?;
            println!("{}", serde_json::to_string_pretty(&out)?);
        }
    }
    Ok(())
}

fn print_locate(args: &LocateArgs, transit: bool, opts: &SolveOptions) -> Result<()> {
    let (_, inst) = load(&args.instance)?;
    if transit && inst.norm_h.is_none() {
        return Err(anyhow!(Error::InvalidInput(
            "instance has no norm_h".into()
        )));
    }
    let r = solve(&inst, transit, opts)?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&r)?);
    } else if args.csv {
        print!("{}", locate_csv(&r));
    } else {
        print!("{}", locate_text(&r));
    }
    Ok(())
}

fn exit_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<Error>() {
        Some(Error::NotConverged(_)) | Some(Error::Audit(_)) => 3,
        Some(Error::MissingData(_)) => 4,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
