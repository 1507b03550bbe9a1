use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use actguide::baselines::write_history_csv;
use actguide::dynnet::{fit_gamma, LinkCreationModel, LinkEvents};
use actguide::harness::{
    emit_reports, run_experiment, ExperimentConfig, ExperimentSetup, MethodConfig,
};
use actguide::hjb::{solve_on, IntensityPath, LamMode, SolverConfig};
use actguide::network::NetworkTopology;
use actguide::sdesim::{simulate_scenario, FnPolicy, ScenarioSet};
use actguide::{Error, ErrorClass, Result};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(
    name = "actguide",
    version,
    about = "Simulate and steer networked user activity"
)]
struct Cli {
    /// Master seed; overrides the config's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Experiment config (JSON); defaults to the scaled comparison setup.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Solver {
    FixedRk4,
    Dp45,
}

#[derive(Clone, Copy, ValueEnum)]
enum Lam {
    Mean,
    Replan,
}

#[derive(Clone, Copy, ValueEnum)]
enum Baseline {
    Ce,
    Fd,
    Greedy,
    Constant,
}

#[derive(Subcommand)]
enum Command {
    /// Uncontrolled run: events.csv and trajectory.csv.
    Simulate,
    /// Backward solve: coefficients.json.
    Solve {
        #[arg(long, value_enum)]
        solver: Option<Solver>,
        #[arg(long, value_enum)]
        lam_mode: Option<Lam>,
    },
    /// HJB feedback over the evaluation runs: cost.json and trajectory.csv.
    Control {
        #[arg(long, value_enum)]
        solver: Option<Solver>,
        #[arg(long, value_enum)]
        lam_mode: Option<Lam>,
    },
    /// Trains and evaluates one baseline: cost.json and, for optimizers, history.csv.
    Baseline {
        #[arg(long, value_enum)]
        method: Baseline,
    },
    /// Link-creation rate MLE: fitted.json.
    FitNetwork {
        /// CSV `t,source,target`.
        #[arg(long)]
        links: PathBuf,
        #[arg(long)]
        num_users: usize,
        /// Observation window end (start 0).
        #[arg(long)]
        horizon: f64,
        /// Initial network JSON; empty when omitted.
        #[arg(long)]
        topology: Option<PathBuf>,
    },
    /// Full comparison: summary.json, instantaneous_cost.csv, trajectories.csv, config.echo.json.
    Experiment,
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::from_json(&fs::read_to_string(path)?)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn apply_solver(cfg: &mut ExperimentConfig, solver: Option<Solver>, lam: Option<Lam>) {
    match solver {
        Some(Solver::FixedRk4) => cfg.solver = SolverConfig::rk4(),
        Some(Solver::Dp45) => cfg.solver = SolverConfig::dp45(1e-9, 1e-9),
        None => {}
    }
    match lam {
        Some(Lam::Mean) => cfg.lam_mode = LamMode::Mean,
        Some(Lam::Replan) => cfg.lam_mode = LamMode::Replan,
        None => {}
    }
}

fn write(path: &Path, f: impl FnOnce(&mut BufWriter<fs::File>) -> Result<()>) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    f(&mut w)?;
    w.flush()?;
    println!("wrote {}", path.display());
    Ok(())
}

fn single_method(mut cfg: ExperimentConfig, method: MethodConfig, out: &Path) -> Result<()> {
    let name = method.name();
    if let Some(m) = cfg.methods.iter().find(|m| m.name() == name).cloned() {
        cfg.methods = vec![m];
    } else {
        cfg.methods = vec![method];
    }
    let report = run_experiment(&cfg)?;
    let m = &report.methods[0];
    write(&out.join("cost.json"), |w| {
        Ok(writeln!(w, "{}", m.cost.to_json())?)
    })?;
    write(&out.join("trajectory.csv"), |w| {
        m.trajectories[0].write_csv(w)
    })?;
    if let Some(h) = &m.history {
        write(&out.join("history.csv"), |w| write_history_csv(h, w))?;
    }
    println!(
        "{name}: mean {} over {} runs",
        m.cost.mean,
        m.cost.runs.len()
    );
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let out = cli.out.clone();
    fs::create_dir_all(&out)?;
    let mut cfg = load_config(&cli)?;
    match cli.command {
        Command::Simulate => {
            let setup = ExperimentSetup::build(&cfg)?;
            let grid = setup.problem.grid();
            let set = ScenarioSet::generate(&setup.model, &grid, 1, setup.seeds.evaluation)?;
            let zero = FnPolicy(|_: &[f64], _: f64, u: &mut [f64]| u.fill(0.0));
            let tr = simulate_scenario(
                &setup.model.opinion,
                &zero,
                &set.scenarios[0],
                &setup.model.x0,
                &grid,
            )?;
            write(&out.join("events.csv"), |w| tr.events.write_csv(w))?;
            write(&out.join("trajectory.csv"), |w| tr.write_csv(w))?;
        }
        Command::Solve { solver, lam_mode } => {
            apply_solver(&mut cfg, solver, lam_mode);
            let setup = ExperimentSetup::build(&cfg)?;
            // replanning starts from the mean-field coefficients
            let lam = IntensityPath::mean_field(&setup.model.hawkes, &setup.problem.grid())?;
            let coeffs = solve_on(
                &setup.problem,
                &setup.model.opinion,
                &lam,
                &setup.schedule,
                &cfg.solver,
            )?;
            write(&out.join("coefficients.json"), |w| {
                Ok(writeln!(w, "{}", coeffs.to_json())?)
            })?;
        }
        Command::Control { solver, lam_mode } => {
            apply_solver(&mut cfg, solver, lam_mode);
            single_method(cfg, MethodConfig::Hjb, &out)?;
        }
        Command::Baseline { method } => {
            let defaults = MethodConfig::all();
            let name = match method {
                Baseline::Ce => "ce",
                Baseline::Fd => "fd",
                Baseline::Greedy => "greedy",
                Baseline::Constant => "constant",
            };
            let m = defaults
                .into_iter()
                .find(|m| m.name() == name)
                .expect("known method");
            single_method(cfg, m, &out)?;
        }
        Command::FitNetwork {
            links,
            num_users,
            horizon,
            topology,
        } => {
            let initial = match topology {
                Some(p) => NetworkTopology::from_json(&fs::read_to_string(p)?)?,
                None => NetworkTopology::empty(num_users),
            };
            if initial.num_users() != num_users {
                return Err(Error::DimensionMismatch {
                    what: "topology users",
                    expected: num_users,
                    got: initial.num_users(),
                });
            }
            let events = LinkEvents::read_csv(fs::File::open(links)?, (0.0, horizon), num_users)?;
            let skeleton = LinkCreationModel::full(vec![0.0; num_users], initial)?;
            let fitted = fit_gamma(&events, &skeleton)?;
            write(&out.join("fitted.json"), |w| {
                Ok(writeln!(w, "{}", fitted.to_json())?)
            })?;
        }
        Command::Experiment => {
            let report = run_experiment(&cfg)?;
            for m in &report.methods {
                println!(
                    "{:<9} mean {:.4}  variance {:.4}  {:.2}s",
                    m.name, m.cost.mean, m.cost.variance, m.wall_time_s
                );
            }
            for p in emit_reports(&report, &out)? {
                println!("wrote {}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.class() {
                ErrorClass::Config => 2,
                ErrorClass::Numerical => 3,
                ErrorClass::Io => 1,
            })
        }
    }
}
