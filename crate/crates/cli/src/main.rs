use std::fmt::Display;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;

use planloc::bench::plot::write_plot_data;
use planloc::bench::{report_of, run_benchmark, run_single, Bench, BenchmarkReport, RunStatus, Scene};
use planloc::mcl::{run_mcl, MclOutcome, MclParams};
use planloc::obslog::{read_log, write_log, Frame};
use planloc::plan::{build_prior_layers, parse_plan, BuildingPlan, PriorGraph};
use planloc::sgraph::{run_sgraph, SgraphParams};
use planloc::sim::{generate_trajectory, simulate, NoiseConfig, SensorConfig, TrajectorySpec, World};

/// Plan-based robot localization toolkit.
#[derive(Parser)]
#[command(name = "planloc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Building plans.
    #[command(subcommand)]
    Plan(PlanCmd),
    /// Simulation.
    #[command(subcommand)]
    Sim(SimCmd),
    /// Localization from an observation log.
    #[command(subcommand)]
    Loc(LocCmd),
    /// Benchmarks.
    #[command(subcommand)]
    Bench(BenchCmd),
}

#[derive(Subcommand)]
enum PlanCmd {
    /// Validate a plan file and print its prior graph as JSON.
    Parse {
        plan: PathBuf,
        /// Storey id; the lowest storey by default.
        #[arg(long)]
        storey: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum SimCmd {
    /// Simulate a run and write its observation log.
    ///
    /// Ground truth goes next to the log as `<stem>.gt.jsonl`, clouds as
    /// `<stem>.clouds.jsonl`.
    Run {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        traj: PathBuf,
        #[arg(long)]
        noise: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Sensor config JSON.
        #[arg(long)]
        sensor: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Extract the planes from simulated clouds and keep the clouds.
        #[arg(long)]
        clouds: bool,
    },
}

#[derive(Args)]
struct LogInput {
    #[arg(long)]
    plan: PathBuf,
    #[arg(long)]
    obs: PathBuf,
    /// Storey id; the lowest storey by default.
    #[arg(long)]
    storey: Option<String>,
}

#[derive(Subcommand)]
enum LocCmd {
    /// Global localization with the particle filter. Exits with 3 if it does not converge.
    Mcl {
        #[command(flatten)]
        input: LogInput,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Filter parameters JSON; the flags below override it.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Match against every wall of the storey instead of the particle's room.
        #[arg(long)]
        no_topo: bool,
        #[arg(long)]
        particles: Option<usize>,
        #[arg(long)]
        sigma: Option<f64>,
        /// Log seconds before giving up.
        #[arg(long, default_value_t = 120.0)]
        timeout: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Track from the filter's convergence with the situational graph.
    Sgraph {
        #[command(flatten)]
        input: LogInput,
        /// Output of `loc mcl`.
        #[arg(long)]
        init: PathBuf,
        /// Graph parameters JSON.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum BenchCmd {
    /// Run every seed of a benchmark config, or only `--seed`.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Single-run mode: exits with 3 if the run is not localized.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Write CSV tables and gnuplot scripts for a report.
    Plot {
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

enum Failure {
    Data(String),
    NotLocalized(String),
}

impl<E: Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Data(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    serde_json::from_str(&read_text(path)?).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Outcome {
    fs::write(path, text).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Outcome {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_text(path, &s)
}

/// `dir/stem.<suffix>` for an output file `dir/stem.ext`.
fn sidecar(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.{suffix}"))
}

fn load_plan(path: &Path) -> Result<BuildingPlan, Failure> {
    parse_plan(&read_text(path)?).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn prior_of(plan: &BuildingPlan, storey: Option<&str>) -> Result<PriorGraph, Failure> {
    let s = match storey {
        Some(id) => plan
            .storey(id)
            .ok_or_else(|| Failure::Data(format!("no storey `{id}` in the plan")))?,
        None => plan.select_storey(f64::NEG_INFINITY)?,
    };
    Ok(build_prior_layers(s)?)
}

fn load_log(input: &LogInput) -> Result<(PriorGraph, Vec<Frame>), Failure> {
    let plan = load_plan(&input.plan)?;
    let prior = prior_of(&plan, input.storey.as_deref())?;
    let file = File::open(&input.obs).map_err(|e| Failure::Data(format!("{}: {e}", input.obs.display())))?;
    let frames = read_log(BufReader::new(file)).map_err(|e| Failure::Data(format!("{}: {e}", input.obs.display())))?;
    Ok((prior, frames))
}

fn plan_cmd(cmd: PlanCmd) -> Outcome {
    let PlanCmd::Parse { plan, storey, out } = cmd;
    let plan = load_plan(&plan)?;
    let json = prior_of(&plan, storey.as_deref())?.to_json();
    match out {
        Some(path) => write_text(&path, &json),
        None => {
            print!("{json}");
            Ok(())
        }
    }
}

fn sim_cmd(cmd: SimCmd) -> Outcome {
    let SimCmd::Run {
        plan,
        traj,
        noise,
        seed,
        sensor,
        out,
        clouds,
    } = cmd;
    let plan = load_plan(&plan)?;
    let spec: TrajectorySpec = read_json(&traj)?;
    let noise: NoiseConfig = read_json(&noise)?;
    let mut sensor: SensorConfig = match sensor {
        Some(p) => read_json(&p)?,
        None => SensorConfig::default(),
    };
    if clouds {
        sensor.source = "ransac".into();
    }
    let storey = plan.select_storey(spec.z)?;
    let prior = build_prior_layers(storey)?;
    let world = World::from_storey(storey, &prior);
    let trajectory = generate_trajectory(&spec)?;
    let sim = simulate(&world, &trajectory, &noise, &sensor, seed, clouds)?;

    let mut w = BufWriter::new(File::create(&out)?);
    write_log(&mut w, &sim.frames)?;
    w.flush()?;
    let mut gt = BufWriter::new(File::create(sidecar(&out, "gt.jsonl"))?);
    for p in &sim.ground_truth {
        serde_json::to_writer(&mut gt, p)?;
        gt.write_all(b"\n")?;
    }
    gt.flush()?;
    if let Some(cs) = &sim.clouds {
        let mut c = BufWriter::new(File::create(sidecar(&out, "clouds.jsonl"))?);
        for cloud in cs {
            let pts: Vec<[f64; 3]> = cloud.iter().map(|p| [p.x, p.y, p.z]).collect();
            serde_json::to_writer(&mut c, &pts)?;
            c.write_all(b"\n")?;
        }
        c.flush()?;
    }
    Ok(())
}

fn loc_cmd(cmd: LocCmd) -> Outcome {
    match cmd {
        LocCmd::Mcl {
            input,
            seed,
            config,
            no_topo,
            particles,
            sigma,
            timeout,
            out,
        } => {
            let (prior, frames) = load_log(&input)?;
            let mut params: MclParams = match config {
                Some(p) => read_json(&p)?,
                None => MclParams::default(),
            };
            if no_topo {
                params = params.with_topo(false);
            }
            if let Some(n) = particles {
                params.particles = n;
            }
            if let Some(s) = sigma {
                params.weight.sigma = s;
            }
            let outcome = run_mcl(&prior, &frames, &params, seed, Some(timeout))?;
            write_json(&out, &outcome)?;
            match &outcome.converged {
                Some(c) => {
                    println!(
                        "converged after {:.1} s at ({:.3}, {:.3}) in {}",
                        c.elapsed,
                        c.pose.t.x,
                        c.pose.t.y,
                        c.room.as_deref().unwrap_or("no room")
                    );
                    Ok(())
                }
                None => Err(Failure::NotLocalized(format!("not localized within {timeout} s"))),
            }
        }
        LocCmd::Sgraph {
            input,
            init,
            config,
            out,
        } => {
            let (prior, frames) = load_log(&input)?;
            let init: MclOutcome = read_json(&init)?;
            let Some(conv) = init.converged else {
                return Err(Failure::NotLocalized("the filter run did not converge".into()));
            };
            if conv.frame >= frames.len() {
                return Err(Failure::Data(format!(
                    "convergence frame {} is past the end of the log ({} frames)",
                    conv.frame,
                    frames.len()
                )));
            }
            let params: SgraphParams = match config {
                Some(p) => read_json(&p)?,
                None => SgraphParams::default(),
            };
            let graph = run_sgraph(&prior, &frames[conv.frame..], conv.t_wo, &params)?;
            write_text(&out, &graph.to_json())?;
            println!(
                "{} keyframes, {} walls, {} rooms, {} factors",
                graph.keyframes().len(),
                graph.walls().len(),
                graph.rooms().len(),
                graph.factors().len()
            );
            Ok(())
        }
    }
}

fn summarize(report: &BenchmarkReport) {
    let s = &report.summary;
    let median = |v: Option<planloc::bench::Stats>| v.map_or("n/a".to_string(), |x| format!("{:.3}", x.median));
    println!(
        "{} runs: {} localized, {} N.L., {} correct room; median ATE {} m, median convergence {} s",
        s.runs,
        s.localized,
        s.not_localized,
        s.correct_room,
        median(s.ate_rmse),
        median(s.convergence_time)
    );
}

fn bench_cmd(cmd: BenchCmd) -> Outcome {
    match cmd {
        BenchCmd::Run { config, out, seed } => {
            let bench = Bench::load(&config).map_err(|e| Failure::Data(format!("{}: {e}", config.display())))?;
            let report = match seed {
                Some(s) => {
                    bench.validate()?;
                    let scene = Scene::new(&bench)?;
                    let run = run_single(&bench, &scene, s)?;
                    report_of(&bench, &scene, vec![run])
                }
                None => run_benchmark(&bench)?,
            };
            write_text(&out, &report.to_json())?;
            summarize(&report);
            match seed {
                Some(s) if report.runs[0].status == RunStatus::NotLocalized => {
                    Err(Failure::NotLocalized(format!("seed {s} not localized")))
                }
                _ => Ok(()),
            }
        }
        BenchCmd::Plot { report, out_dir } => {
            let report: BenchmarkReport = read_json(&report)?;
            for p in write_plot_data(&report, &out_dir)? {
                println!("{}", p.display());
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let result = match cli.command {
        Command::Plan(c) => plan_cmd(c),
        Command::Sim(c) => sim_cmd(c),
        Command::Loc(c) => loc_cmd(c),
        Command::Bench(c) => bench_cmd(c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Data(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::NotLocalized(m)) => {
            eprintln!("{m}");
            ExitCode::from(3)
        }
    }
}
