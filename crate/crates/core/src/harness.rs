//! Monte Carlo experiment driver: generate → distributed pipeline →
//! centralized baseline → independent evaluator → metrics and CSV export.

use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::bnb::{solve_milp_with, BnbOptions, MilpStatus};
use crate::builder::build_centralized_milp;
use crate::decomp::{Agent, AgentConfig};
use crate::error::{Error, Result};
use crate::evaluate::{check_full_coverage, total_cost, EVAL_TOL};
use crate::exact::optimal_fleet_plan;
use crate::instance::{generate_random_instance, GenOptions, PdvrpInstance};
use crate::mission::playback;
use crate::network::{
    build_comm_graph, run_synchronous, Executor, GraphKind, RunOptions, TraceRecord,
};
use crate::route::AgentRoute;

#[derive(Debug, Clone)]
pub struct TrialConfig {
    pub seed: u64,
    pub n_vehicles: usize,
    pub n_pickups: usize,
    pub gen: GenOptions,
    pub graph: GraphKind,
    /// Seed for the random communication graph (independent of the instance).
    pub graph_seed: u64,
    pub delta: f64,
    pub t_final: usize,
    pub t_switch: usize,
    pub step_k: f64,
    pub averaging: bool,
    /// Penalty override; derived from the instance when None.
    pub penalty: Option<f64>,
    pub executor: Executor,
    /// Solve the centralized MILP baseline and report the relative error.
    pub baseline: bool,
    /// Probe time-to-feasibility every this many rounds (None: skip probing).
    pub probe_every: Option<usize>,
}

impl Default for TrialConfig {
    fn default() -> Self {
        TrialConfig {
            seed: 0,
            n_vehicles: 2,
            n_pickups: 2,
            gen: GenOptions::default(),
            graph: GraphKind::Complete,
            graph_seed: 0,
            delta: 0.9,
            t_final: 250,
            t_switch: 125,
            step_k: 0.005,
            averaging: true,
            penalty: None,
            executor: Executor::Serial,
            baseline: true,
            probe_every: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialResult {
    pub seed: u64,
    pub n_vehicles: usize,
    pub n_pickups: usize,
    pub n_requests: usize,
    pub delta: f64,
    pub feasible: bool,
    /// Planned travel cost of the distributed solution.
    pub distributed_cost: f64,
    /// Driven cost after Auth-node deduplication.
    pub actuated_cost: f64,
    /// Proven centralized optimum (None if the baseline was skipped or hit
    /// the node limit).
    pub central_cost: Option<f64>,
    /// (actuated - optimal) / optimal: the headline cost-error metric,
    /// measured after Auth-node deduplication.
    pub rel_error: Option<f64>,
    /// (planned - optimal) / optimal: error before deduplication; large
    /// whenever several robots plan the same tasks.
    pub planned_rel_error: Option<f64>,
    /// Earliest probed round from which every later probe is feasible.
    /// None when probing was skipped or no such round exists within T_f.
    pub t_delta: Option<usize>,
    pub probed: bool,
    /// Baseline hit its node limit; the trial is unusable for error stats.
    pub excluded: bool,
    pub distributed_ms: u128,
    pub central_ms: u128,
    /// Hard failure, recorded so a sweep can continue.
    pub error: Option<String>,
}

impl TrialResult {
    fn failed(cfg: &TrialConfig, msg: String) -> TrialResult {
        TrialResult {
            seed: cfg.seed,
            n_vehicles: cfg.n_vehicles,
            n_pickups: cfg.n_pickups,
            n_requests: 2 * cfg.n_pickups,
            delta: cfg.delta,
            feasible: false,
            distributed_cost: f64::NAN,
            actuated_cost: f64::NAN,
            central_cost: None,
            rel_error: None,
            planned_rel_error: None,
            t_delta: None,
            probed: false,
            excluded: true,
            distributed_ms: 0,
            central_ms: 0,
            error: Some(msg),
        }
    }
}

fn agent_config(instance: &PdvrpInstance, cfg: &TrialConfig) -> Result<AgentConfig> {
    let mut ac = AgentConfig::for_instance(instance)?;
    ac.delta = cfg.delta;
    ac.t_final = cfg.t_final;
    ac.t_switch = cfg.t_switch;
    ac.step_k = cfg.step_k;
    ac.averaging = cfg.averaging;
    if let Some(p) = cfg.penalty {
        ac.penalty = p;
    }
    ac.validate()?;
    Ok(ac)
}

/// The full distributed pipeline for one instance; returns the agents (for
/// probing), the trace, and the final routes.
pub fn run_distributed(
    instance: &Arc<PdvrpInstance>,
    cfg: &TrialConfig,
) -> Result<(Vec<Agent>, Vec<TraceRecord>, Vec<AgentRoute>)> {
    let ac = agent_config(instance, cfg)?;
    let mut agents: Vec<Agent> = (0..instance.n_vehicles())
        .map(|i| Agent::new(instance.clone(), i, ac.clone()))
        .collect::<Result<_>>()?;
    let graph = build_comm_graph(cfg.graph, instance.n_vehicles(), cfg.graph_seed)?;
    let opts = RunOptions {
        executor: cfg.executor,
        trace: cfg.probe_every.is_some(),
    };
    let run = run_synchronous(&mut agents, &graph, &opts)?;
    let routes = agents
        .iter()
        .map(|a| a.solve_final())
        .collect::<Result<Vec<_>>>()?;
    Ok((agents, run.trace, routes))
}

/// Centralized optimum via the exact route/partition DP.
pub fn solve_centralized(instance: &PdvrpInstance, _hint: Option<f64>) -> Result<Option<f64>> {
    Ok(Some(optimal_fleet_plan(instance)?.cost))
}

/// Centralized optimum through branch and bound, seeded with a known
/// feasible cost as a pruning bound. Returns None when the node limit is
/// hit. Kept as a cross-check against the DP on small instances.
pub fn solve_centralized_bnb(
    instance: &PdvrpInstance,
    incumbent_hint: Option<f64>,
) -> Result<Option<f64>> {
    let (model, _blocks) = build_centralized_milp(instance)?;
    let opts = BnbOptions {
        incumbent_hint: incumbent_hint.map(|c| c + 1e-6),
        ..Default::default()
    };
    match solve_milp_with(&model, &opts) {
        Ok(sol) if sol.status == MilpStatus::Optimal => {
            // The hint may be the optimum itself; never report worse than it.
            Ok(Some(match incumbent_hint {
                Some(h) => sol.objective.min(h),
                None => sol.objective,
            }))
        }
        Ok(_) => match incumbent_hint {
            // Nothing beat the hint, and the hinted solution is feasible for
            // the centralized problem: the hint is the optimum.
            Some(h) => Ok(Some(h)),
            None => Err(Error::Infeasible("centralized model infeasible".into())),
        },
        Err(Error::NodeLimit(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Allocation each agent would threshold if the run stopped at probe round
/// `t` (0 = before any update), reconstructed from the trace.
fn probe_allocation(agent: &Agent, trace: &[TraceRecord], t: usize, ac: &AgentConfig) -> Vec<f64> {
    if t >= ac.t_final {
        return agent.final_allocation();
    }
    let rec = |round: usize| {
        trace
            .iter()
            .find(|r| r.round == round && r.agent == agent.id)
            .expect("trace is complete")
    };
    if ac.averaging && t > ac.t_switch {
        // Uniform average of the constant-step iterates observed so far.
        let n = agent.n_requests();
        let mut num = vec![0.0; n];
        let mut den = 0.0;
        for tau in ac.t_switch + 1..=t {
            for (j, v) in rec(tau).y.iter().enumerate() {
                num[j] += v;
            }
            den += 1.0;
        }
        num.iter().map(|v| v / den).collect()
    } else {
        rec(t).y.clone()
    }
}

/// Feasibility probes: for each sampled round, threshold + final MILPs +
/// aggregate evaluation. Returns (probe rounds, feasibility flags).
pub fn probe_feasibility(
    instance: &Arc<PdvrpInstance>,
    agents: &[Agent],
    trace: &[TraceRecord],
    every: usize,
) -> Result<(Vec<usize>, Vec<bool>)> {
    let ac = &agents[0].cfg;
    let mut rounds: Vec<usize> = (0..ac.t_final).step_by(every.max(1)).collect();
    if rounds.last() != Some(&ac.t_final) {
        rounds.push(ac.t_final);
    }
    let mut flags = Vec::with_capacity(rounds.len());
    for &t in &rounds {
        let routes: Result<Vec<AgentRoute>> = agents
            .iter()
            .map(|a| a.solve_final_from(&probe_allocation(a, trace, t, ac)))
            .collect();
        let ok = match routes {
            Ok(rs) => check_full_coverage(instance, &rs, EVAL_TOL).is_ok(),
            Err(Error::Infeasible(_)) => false,
            Err(e) => return Err(e),
        };
        flags.push(ok);
    }
    Ok((rounds, flags))
}

/// Earliest probed round from which every later probe stays feasible.
pub fn empirical_t_delta(rounds: &[usize], flags: &[bool]) -> Option<usize> {
    let mut t_delta = None;
    for (&t, &ok) in rounds.iter().zip(flags).rev() {
        if ok {
            t_delta = Some(t);
        } else {
            break;
        }
    }
    t_delta
}

pub fn run_trial(cfg: &TrialConfig) -> Result<TrialResult> {
    let instance = Arc::new(generate_random_instance(
        cfg.seed,
        cfg.n_vehicles,
        cfg.n_pickups,
        &cfg.gen,
    )?);

    let t0 = Instant::now();
    let (agents, trace, routes) = run_distributed(&instance, cfg)?;
    let feasible = check_full_coverage(&instance, &routes, EVAL_TOL).is_ok();
    let distributed_cost = total_cost(&instance, &routes);
    let report = playback(&instance, &routes)?;
    let distributed_ms = t0.elapsed().as_millis();

    let t1 = Instant::now();
    let central_cost = if cfg.baseline {
        solve_centralized(&instance, feasible.then_some(distributed_cost))?
    } else {
        None
    };
    let central_ms = t1.elapsed().as_millis();

    let rel_error = central_cost.map(|opt| (report.total_actuated_cost - opt) / opt);
    let planned_rel_error = central_cost.map(|opt| (distributed_cost - opt) / opt);
    for e in [rel_error, planned_rel_error].into_iter().flatten() {
        if e < -1e-9 {
            return Err(Error::Internal(format!(
                "distributed cost beats the proven optimum: rel error {e}"
            )));
        }
    }

    let (probed, t_delta) = match cfg.probe_every {
        Some(every) => {
            let (rounds, flags) = probe_feasibility(&instance, &agents, &trace, every)?;
            (true, empirical_t_delta(&rounds, &flags))
        }
        None => (false, None),
    };

    Ok(TrialResult {
        seed: cfg.seed,
        n_vehicles: cfg.n_vehicles,
        n_pickups: cfg.n_pickups,
        n_requests: instance.n_requests(),
        delta: cfg.delta,
        feasible,
        distributed_cost,
        actuated_cost: report.total_actuated_cost,
        central_cost,
        rel_error,
        planned_rel_error,
        t_delta,
        probed,
        excluded: cfg.baseline && central_cost.is_none(),
        distributed_ms,
        central_ms,
        error: None,
    })
}

/// Sweep specification: the cross product of the axes, `trials` seeds each.
#[derive(Debug, Clone)]
pub struct Sweep {
    pub vehicles: Vec<usize>,
    pub pickups: Vec<usize>,
    pub deltas: Vec<f64>,
    pub trials: usize,
    pub base: TrialConfig,
}

/// Runs the sweep; per-trial failures are recorded and the sweep continues.
pub fn run_montecarlo(sweep: &Sweep) -> Vec<TrialResult> {
    let mut out = Vec::new();
    for &n in &sweep.vehicles {
        for &p in &sweep.pickups {
            for &delta in &sweep.deltas {
                for trial in 0..sweep.trials {
                    let mut cfg = sweep.base.clone();
                    cfg.n_vehicles = n;
                    cfg.n_pickups = p;
                    cfg.delta = delta;
                    // Distinct deterministic seed per cell and trial.
                    cfg.seed = sweep
                        .base
                        .seed
                        .wrapping_add(1_000_003 * n as u64)
                        .wrapping_add(1_009 * p as u64)
                        .wrapping_add((delta * 1e6) as u64)
                        .wrapping_add(trial as u64);
                    cfg.graph_seed = cfg.seed ^ 0x9e37_79b9;
                    match run_trial(&cfg) {
                        Ok(r) => out.push(r),
                        Err(e) => out.push(TrialResult::failed(&cfg, e.to_string())),
                    }
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct Aggregate {
    pub n_trials: usize,
    pub n_feasible: usize,
    pub n_excluded: usize,
    pub mean_rel_error: f64,
    pub p50_rel_error: f64,
    pub p90_rel_error: f64,
    pub mean_distributed_cost: f64,
    pub mean_central_cost: f64,
}

fn percentile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let idx = ((sorted.len() - 1) as f64 * p).round() as usize;
    sorted[idx]
}

pub fn aggregate(results: &[TrialResult]) -> Aggregate {
    let usable: Vec<&TrialResult> = results
        .iter()
        .filter(|r| !r.excluded && r.error.is_none())
        .collect();
    let mut errs: Vec<f64> = usable.iter().filter_map(|r| r.rel_error).collect();
    errs.sort_by(f64::total_cmp);
    let mean = |xs: &[f64]| {
        if xs.is_empty() {
            f64::NAN
        } else {
            xs.iter().sum::<f64>() / xs.len() as f64
        }
    };
    let dist: Vec<f64> = usable.iter().map(|r| r.distributed_cost).collect();
    let cent: Vec<f64> = usable.iter().filter_map(|r| r.central_cost).collect();
    Aggregate {
        n_trials: results.len(),
        n_feasible: results.iter().filter(|r| r.feasible).count(),
        n_excluded: results.len() - usable.len(),
        mean_rel_error: mean(&errs),
        p50_rel_error: percentile(&errs, 0.5),
        p90_rel_error: percentile(&errs, 0.9),
        mean_distributed_cost: mean(&dist),
        mean_central_cost: mean(&cent),
    }
}

/// CSV export, one row per trial.
pub fn write_csv(w: &mut impl std::io::Write, results: &[TrialResult]) -> Result<()> {
    writeln!(
        w,
        "seed,n_vehicles,n_pickups,n_requests,delta,feasible,distributed_cost,actuated_cost,central_cost,rel_error,planned_rel_error,t_delta,probed,excluded,distributed_ms,central_ms,error"
    )?;
    for r in results {
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.12}"));
        writeln!(
            w,
            "{},{},{},{},{},{},{:.12},{:.12},{},{},{},{},{},{},{},{},{}",
            r.seed,
            r.n_vehicles,
            r.n_pickups,
            r.n_requests,
            r.delta,
            r.feasible,
            r.distributed_cost,
            r.actuated_cost,
            opt(r.central_cost),
            opt(r.rel_error),
            opt(r.planned_rel_error),
            r.t_delta.map_or(String::new(), |t| t.to_string()),
            r.probed,
            r.excluded,
            r.distributed_ms,
            r.central_ms,
            r.error.as_deref().unwrap_or(""),
        )?;
    }
    Ok(())
}
