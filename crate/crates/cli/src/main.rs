//! `pdvrp` — generate instances, solve them centrally or with the
//! distributed pipeline, run Monte Carlo sweeps, and re-evaluate solutions.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use pdvrp_core::evaluate::{check_full_coverage, total_cost, EVAL_TOL};
use pdvrp_core::exact::optimal_fleet_plan;
use pdvrp_core::harness::{
    aggregate, probe_feasibility, run_distributed, run_montecarlo, write_csv, Sweep,
    TrialConfig,
};
use pdvrp_core::instance::{generate_random_instance, GenOptions, PdvrpInstance};
use pdvrp_core::mission::playback;
use pdvrp_core::network::{write_trace, Executor, GraphKind};
use pdvrp_core::route::AgentRoute;

#[derive(Parser)]
#[command(
    name = "pdvrp",
    about = "Distributed pickup-and-delivery vehicle routing",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random instance and write it as JSON.
    Gen(GenArgs),
    /// Solve an instance to proven optimality with the centralized solver.
    SolveCentral(SolveCentralArgs),
    /// Run the distributed pipeline on an instance.
    SolveDistributed(SolveDistributedArgs),
    /// Monte Carlo sweep over (vehicles, pickups, delta) cells.
    Montecarlo(MontecarloArgs),
    /// Re-check a saved solution against its instance.
    Evaluate(EvaluateArgs),
}

#[derive(Args)]
struct InstanceShape {
    /// RNG seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of vehicles N.
    #[arg(long, default_value_t = 3)]
    vehicles: usize,
    /// Number of pickup/delivery pairs |P|.
    #[arg(long, default_value_t = 3)]
    pickups: usize,
    /// Draw heterogeneous capacities (some vehicles may not fit some loads).
    #[arg(long)]
    heterogeneous: bool,
    /// Side length of the square arena in meters.
    #[arg(long, default_value_t = 100.0)]
    area: f64,
}

impl InstanceShape {
    fn generate(&self) -> Result<PdvrpInstance> {
        let opts = GenOptions {
            heterogeneous: self.heterogeneous,
            capacity_range: if self.heterogeneous {
                (0.3, 1.0)
            } else {
                GenOptions::default().capacity_range
            },
            area: pdvrp_core::instance::Area {
                min: [0.0, 0.0],
                max: [self.area, self.area],
            },
            ..Default::default()
        };
        Ok(generate_random_instance(
            self.seed,
            self.vehicles,
            self.pickups,
            &opts,
        )?)
    }
}

#[derive(Args)]
struct GenArgs {
    #[command(flatten)]
    shape: InstanceShape,
    /// Output file (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SolveCentralArgs {
    /// Instance JSON file; generated from the shape flags when omitted.
    #[arg(long)]
    instance: Option<PathBuf>,
    #[command(flatten)]
    shape: InstanceShape,
    /// Write the solution (routes + cost) as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum GraphArg {
    Complete,
    Cycle,
    RandomConnected,
}

impl From<GraphArg> for GraphKind {
    fn from(g: GraphArg) -> GraphKind {
        match g {
            GraphArg::Complete => GraphKind::Complete,
            GraphArg::Cycle => GraphKind::Cycle,
            GraphArg::RandomConnected => GraphKind::RandomConnected,
        }
    }
}

#[derive(Args)]
struct AlgoArgs {
    /// Fraction of each coupling right-hand side allocated up front.
    #[arg(long, default_value_t = 0.9)]
    delta: f64,
    /// Total allocation rounds T_f.
    #[arg(long, default_value_t = 250)]
    iterations: usize,
    /// Penalty weight on the local slack (derived from the instance when omitted).
    #[arg(long)]
    penalty: Option<f64>,
    /// Communication graph topology.
    #[arg(long, value_enum, default_value_t = GraphArg::Complete)]
    graph: GraphArg,
    /// Average the iterates over the constant-step tail (pass =false to disable).
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    averaging: bool,
    /// Probe time-to-feasibility every this many rounds.
    #[arg(long)]
    probe_every: Option<usize>,
    /// Run agents on a thread pool instead of serially.
    #[arg(long)]
    threaded: bool,
}

impl AlgoArgs {
    fn apply(&self, cfg: &mut TrialConfig) {
        cfg.delta = self.delta;
        cfg.t_final = self.iterations;
        cfg.t_switch = self.iterations / 2;
        cfg.penalty = self.penalty;
        cfg.graph = self.graph.into();
        cfg.averaging = self.averaging;
        cfg.probe_every = self.probe_every;
        cfg.executor = if self.threaded {
            Executor::Threaded
        } else {
            Executor::Serial
        };
    }
}

#[derive(Args)]
struct SolveDistributedArgs {
    /// Instance JSON file; generated from the shape flags when omitted.
    #[arg(long)]
    instance: Option<PathBuf>,
    #[command(flatten)]
    shape: InstanceShape,
    #[command(flatten)]
    algo: AlgoArgs,
    /// Write the solution (routes, costs, playback report) as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the per-round trace as line-delimited JSON.
    #[arg(long)]
    trace_out: Option<PathBuf>,
}

#[derive(Args)]
struct MontecarloArgs {
    #[command(flatten)]
    algo: AlgoArgs,
    /// Base seed; trial seeds are derived deterministically from it.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Vehicle counts to sweep (comma separated).
    #[arg(long, value_delimiter = ',', default_value = "3,5,10")]
    vehicles: Vec<usize>,
    /// Pickup counts to sweep (comma separated).
    #[arg(long, value_delimiter = ',', default_value = "2,3,4,5")]
    pickups: Vec<usize>,
    /// Delta values to sweep (comma separated).
    #[arg(long, value_delimiter = ',', default_value = "0.9")]
    deltas: Vec<f64>,
    /// Trials per cell.
    #[arg(long, default_value_t = 5)]
    trials: usize,
    /// Skip the centralized baseline (no relative errors, much faster).
    #[arg(long)]
    no_baseline: bool,
    /// CSV output file (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Instance JSON file.
    #[arg(long)]
    instance: PathBuf,
    /// Solution JSON file produced by solve-central or solve-distributed.
    #[arg(long)]
    solution: PathBuf,
}

#[derive(serde::Serialize, serde::Deserialize)]
struct SolutionFile {
    planned_cost: f64,
    /// Visit order per vehicle, request ids only.
    orders: Vec<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    actuated_cost: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    optimal_cost: Option<f64>,
}

fn read_instance(path: &Path) -> Result<PdvrpInstance> {
    let mut text = String::new();
    File::open(path)
        .with_context(|| format!("opening {}", path.display()))?
        .read_to_string(&mut text)?;
    Ok(PdvrpInstance::from_json(&text)?)
}

fn load_or_generate(path: &Option<PathBuf>, shape: &InstanceShape) -> Result<PdvrpInstance> {
    match path {
        Some(p) => read_instance(p),
        None => shape.generate(),
    }
}

fn write_output(path: &Option<PathBuf>, text: &str) -> Result<()> {
    match path {
        Some(p) => {
            let mut f = BufWriter::new(File::create(p)?);
            f.write_all(text.as_bytes())?;
            f.write_all(b"\n")?;
        }
        None => println!("{text}"),
    }
    Ok(())
}

fn orders_of(instance: &PdvrpInstance, routes: &[AgentRoute]) -> Result<Vec<Vec<usize>>> {
    let _ = instance;
    routes
        .iter()
        .map(|r| {
            Ok(r.visit_order()?
                .into_iter()
                .filter_map(|n| match n {
                    pdvrp_core::instance::Node::Request(j) => Some(j),
                    _ => None,
                })
                .collect())
        })
        .collect()
}

fn cmd_gen(args: &GenArgs) -> Result<ExitCode> {
    let inst = args.shape.generate()?;
    write_output(&args.out, &inst.to_json()?)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_solve_central(args: &SolveCentralArgs) -> Result<ExitCode> {
    let inst = load_or_generate(&args.instance, &args.shape)?;
    let plan = optimal_fleet_plan(&inst)?;
    let orders: Vec<Vec<usize>> = plan
        .orders
        .iter()
        .map(|order| {
            order
                .iter()
                .filter_map(|n| match n {
                    pdvrp_core::instance::Node::Request(j) => Some(*j),
                    _ => None,
                })
                .collect()
        })
        .collect();
    eprintln!("optimal cost {:.6}", plan.cost);
    let sol = SolutionFile {
        planned_cost: plan.cost,
        orders,
        actuated_cost: None,
        optimal_cost: Some(plan.cost),
    };
    write_output(&args.out, &serde_json::to_string_pretty(&sol)?)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_solve_distributed(args: &SolveDistributedArgs) -> Result<ExitCode> {
    let inst = Arc::new(load_or_generate(&args.instance, &args.shape)?);
    let mut cfg = TrialConfig {
        seed: args.shape.seed,
        graph_seed: args.shape.seed,
        n_vehicles: inst.n_vehicles(),
        n_pickups: inst.n_pickups(),
        ..Default::default()
    };
    args.algo.apply(&mut cfg);
    if args.trace_out.is_some() && cfg.probe_every.is_none() {
        cfg.probe_every = Some(cfg.t_final); // force trace recording
    }
    let (agents, trace, routes) = run_distributed(&inst, &cfg)?;
    let feasible = check_full_coverage(&inst, &routes, EVAL_TOL).is_ok();
    let report = playback(&inst, &routes)?;
    let planned = total_cost(&inst, &routes);
    eprintln!(
        "feasible {feasible}; planned cost {planned:.6}; actuated cost {:.6}",
        report.total_actuated_cost
    );
    if let Some(every) = args.algo.probe_every {
        let (rounds, flags) = probe_feasibility(&inst, &agents, &trace, every)?;
        let t_delta = pdvrp_core::harness::empirical_t_delta(&rounds, &flags);
        eprintln!("probes {rounds:?} -> {flags:?}; empirical T_delta {t_delta:?}");
    }
    if let Some(path) = &args.trace_out {
        let mut f = BufWriter::new(File::create(path)?);
        write_trace(&mut f, &trace)?;
    }
    let sol = SolutionFile {
        planned_cost: planned,
        orders: orders_of(&inst, &routes)?,
        actuated_cost: Some(report.total_actuated_cost),
        optimal_cost: None,
    };
    write_output(&args.out, &serde_json::to_string_pretty(&sol)?)?;
    Ok(if feasible {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn cmd_montecarlo(args: &MontecarloArgs) -> Result<ExitCode> {
    let mut base = TrialConfig {
        seed: args.seed,
        baseline: !args.no_baseline,
        ..Default::default()
    };
    args.algo.apply(&mut base);
    let sweep = Sweep {
        vehicles: args.vehicles.clone(),
        pickups: args.pickups.clone(),
        deltas: args.deltas.clone(),
        trials: args.trials,
        base,
    };
    let results = run_montecarlo(&sweep);
    match &args.out {
        Some(p) => {
            let mut f = BufWriter::new(File::create(p)?);
            write_csv(&mut f, &results)?;
        }
        None => {
            let mut buf = Vec::new();
            write_csv(&mut buf, &results)?;
            print!("{}", String::from_utf8(buf)?);
        }
    }
    let agg = aggregate(&results);
    eprintln!("{}", serde_json::to_string_pretty(&agg)?);
    let all_feasible = results
        .iter()
        .all(|r| r.feasible && r.error.is_none());
    Ok(if all_feasible {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn cmd_evaluate(args: &EvaluateArgs) -> Result<ExitCode> {
    let inst = read_instance(&args.instance)?;
    let mut text = String::new();
    File::open(&args.solution)
        .with_context(|| format!("opening {}", args.solution.display()))?
        .read_to_string(&mut text)?;
    let sol: SolutionFile = serde_json::from_str(&text)?;
    if sol.orders.len() != inst.n_vehicles() {
        bail!(
            "solution has {} routes for {} vehicles",
            sol.orders.len(),
            inst.n_vehicles()
        );
    }
    let mut routes = Vec::with_capacity(sol.orders.len());
    for (i, order) in sol.orders.iter().enumerate() {
        let graph = pdvrp_core::graph::build_local_task_graph(&inst, i)?;
        let mut nodes = vec![pdvrp_core::instance::Node::Start];
        nodes.extend(order.iter().map(|&j| pdvrp_core::instance::Node::Request(j)));
        nodes.push(pdvrp_core::instance::Node::End);
        routes.push(AgentRoute::from_order(&inst, &graph, i, &nodes)?);
    }
    let feasible = check_full_coverage(&inst, &routes, EVAL_TOL);
    let cost = total_cost(&inst, &routes);
    println!(
        "feasible: {}; recomputed planned cost {cost:.6} (file said {:.6})",
        feasible.is_ok(),
        sol.planned_cost
    );
    if let Err(e) = &feasible {
        eprintln!("violation: {e}");
    }
    if (cost - sol.planned_cost).abs() > 1e-6 {
        eprintln!("warning: stored cost differs from recomputed cost");
    }
    Ok(if feasible.is_ok() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn main() -> Result<ExitCode> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::SolveCentral(a) => cmd_solve_central(a),
        Command::SolveDistributed(a) => cmd_solve_distributed(a),
        Command::Montecarlo(a) => cmd_montecarlo(a),
        Command::Evaluate(a) => cmd_evaluate(a),
    }
}
