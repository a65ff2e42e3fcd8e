//! Simulated synchronous peer-to-peer network.
//!
//! Rounds run in two phases behind a barrier: every agent solves its
//! subproblem and publishes its multipliers, then every agent consumes its
//! neighbours' messages (sorted by sender id) and updates its allocation.
//! Messages are delivered exactly once; a missing neighbour message is a hard
//! protocol error. The serial and multi-threaded executors produce
//! bit-identical traces.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decomp::Agent;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GraphKind {
    Complete,
    Cycle,
    RandomConnected,
}

impl std::str::FromStr for GraphKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "complete" => Ok(GraphKind::Complete),
            "cycle" => Ok(GraphKind::Cycle),
            "random-connected" => Ok(GraphKind::RandomConnected),
            other => Err(Error::Model(format!("unknown graph kind: {other}"))),
        }
    }
}

/// Undirected communication graph over the agents.
#[derive(Debug, Clone)]
pub struct CommGraph {
    pub n: usize,
    pub neighbors: Vec<Vec<usize>>,
}

impl CommGraph {
    fn from_edges(n: usize, edges: &[(usize, usize)]) -> CommGraph {
        let mut neighbors = vec![Vec::new(); n];
        for &(a, b) in edges {
            neighbors[a].push(b);
            neighbors[b].push(a);
        }
        for list in &mut neighbors {
            list.sort_unstable();
            list.dedup();
        }
        CommGraph { n, neighbors }
    }

    pub fn is_connected(&self) -> bool {
        if self.n == 0 {
            return true;
        }
        let mut seen = vec![false; self.n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for &w in &self.neighbors[v] {
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }
}

/// Builds a connected communication graph. `seed` only matters for
/// `RandomConnected`, which draws Bernoulli(1/2) edges and redraws until the
/// graph is connected.
pub fn build_comm_graph(kind: GraphKind, n: usize, seed: u64) -> Result<CommGraph> {
    if n == 0 {
        return Err(Error::Model(
            "communication graph needs at least one node".into(),
        ));
    }
    let g = match kind {
        GraphKind::Complete => {
            let mut edges = Vec::new();
            for a in 0..n {
                for b in a + 1..n {
                    edges.push((a, b));
                }
            }
            CommGraph::from_edges(n, &edges)
        }
        GraphKind::Cycle => {
            let mut edges: Vec<(usize, usize)> =
                (0..n.saturating_sub(1)).map(|a| (a, a + 1)).collect();
            if n > 2 {
                edges.push((n - 1, 0));
            }
            CommGraph::from_edges(n, &edges)
        }
        GraphKind::RandomConnected => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            loop {
                let mut edges = Vec::new();
                for a in 0..n {
                    for b in a + 1..n {
                        if rng.gen_bool(0.5) {
                            edges.push((a, b));
                        }
                    }
                }
                let g = CommGraph::from_edges(n, &edges);
                if g.is_connected() {
                    break g;
                }
            }
        }
    };
    debug_assert!(g.is_connected());
    Ok(g)
}

/// A multiplier broadcast from one agent in one round.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MultiplierMessage {
    pub round: usize,
    pub sender: usize,
    pub mu: Vec<f64>,
}

/// Per-agent, per-round trace record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceRecord {
    pub round: usize,
    pub agent: usize,
    /// Allocation before this round's update.
    pub y: Vec<f64>,
    pub mu: Vec<f64>,
    pub subproblem_objective: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Executor {
    Serial,
    Threaded,
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub executor: Executor,
    /// Record a trace row per agent per round.
    pub trace: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            executor: Executor::Serial,
            trace: false,
        }
    }
}

#[derive(Debug)]
pub struct RunResult {
    pub rounds: usize,
    pub trace: Vec<TraceRecord>,
}

/// Conservation invariant tolerance: the summed allocation per request must
/// stay at its initial value throughout the run.
pub const CONSERVATION_TOL: f64 = 1e-9;

fn solve_all(
    agents: &mut [Agent],
    round: usize,
    executor: Executor,
) -> Result<Vec<MultiplierMessage>> {
    let solve = |a: &mut Agent| -> Result<MultiplierMessage> {
        Ok(MultiplierMessage {
            round,
            sender: a.id,
            mu: a.solve_subproblem()?,
        })
    };
    match executor {
        Executor::Serial => agents.iter_mut().map(solve).collect(),
        Executor::Threaded => agents.par_iter_mut().map(solve).collect(),
    }
}

/// Runs `t_final` synchronous rounds over the network.
pub fn run_synchronous(
    agents: &mut [Agent],
    graph: &CommGraph,
    opts: &RunOptions,
) -> Result<RunResult> {
    if agents.is_empty() || agents.len() != graph.n {
        return Err(Error::Protocol(format!(
            "agent count {} does not match graph size {}",
            agents.len(),
            graph.n
        )));
    }
    let t_final = agents[0].cfg.t_final;
    let n_requests = agents[0].n_requests();
    let budget: Vec<f64> = (0..n_requests)
        .map(|j| agents.iter().map(|a| a.y[j]).sum())
        .collect();

    let mut trace = Vec::new();
    for round in 0..t_final {
        // Phase 1: everyone solves and publishes.
        let messages = solve_all(agents, round, opts.executor)?;
        if opts.trace {
            for (a, msg) in agents.iter().zip(&messages) {
                trace.push(TraceRecord {
                    round,
                    agent: a.id,
                    y: a.y.clone(),
                    mu: msg.mu.clone(),
                    subproblem_objective: a.last_objective,
                });
            }
        }

        // Phase 2 (after the barrier): deliver and update. Each agent gets
        // exactly the messages of its neighbours, sorted by sender.
        let inboxes: Vec<Vec<(usize, Vec<f64>)>> = graph
            .neighbors
            .iter()
            .map(|nbrs| {
                nbrs.iter()
                    .map(|&l| {
                        let msg = messages
                            .get(l)
                            .filter(|m| m.sender == l)
                            .ok_or_else(|| Error::Protocol(format!("missing message from {l}")))?;
                        Ok((l, msg.mu.clone()))
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;

        match opts.executor {
            Executor::Serial => {
                for (a, inbox) in agents.iter_mut().zip(&inboxes) {
                    a.apply_update(inbox)?;
                }
            }
            Executor::Threaded => {
                agents
                    .par_iter_mut()
                    .zip(inboxes.par_iter())
                    .try_for_each(|(a, inbox)| a.apply_update(inbox))?;
            }
        }

        // Conservation: pairwise exchanges are antisymmetric, so the total
        // allocation per request never moves.
        for (j, &b) in budget.iter().enumerate() {
            let total: f64 = agents.iter().map(|a| a.y[j]).sum();
            if (total - b).abs() > CONSERVATION_TOL {
                return Err(Error::Internal(format!(
                    "allocation conservation broken at round {round}, request {j}: {total} != {b}"
                )));
            }
        }
    }
    Ok(RunResult {
        rounds: t_final,
        trace,
    })
}

/// Serializes a trace as line-delimited JSON.
pub fn write_trace(w: &mut impl std::io::Write, trace: &[TraceRecord]) -> Result<()> {
    for rec in trace {
        let line = serde_json::to_string(rec)?;
        writeln!(w, "{line}")?;
    }
    Ok(())
}
