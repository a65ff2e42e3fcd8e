//! Primal-decomposition agents.
//!
//! Each vehicle owns an allocation vector y over the requests and repeatedly
//! (1) solves the relaxed local subproblem with coverage right-hand side y,
//! reading the coupling duals mu, and (2) moves y towards its neighbours'
//! allocations along the dual disagreement. After T_f rounds the (optionally
//! averaged) allocation is thresholded and a final local MILP turns it into
//! an integer route.

use std::sync::Arc;

use crate::bnb::{solve_milp_with, BnbOptions, MilpStatus};
use crate::builder::{build_local_constraints, LocalBlock};
use crate::error::{Error, Result};
use crate::exact;
use crate::graph::{build_local_task_graph, Node, TaskGraph};
use crate::instance::PdvrpInstance;
use crate::model::{LinearModel, RowTag, Sense, VarKind};
use crate::route::AgentRoute;
use crate::simplex::{solve_lp_with, Basis, SimplexOptions};

/// Tolerance on the dual-multiplier range invariant 0 <= mu <= M.
const MU_TOL: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct AgentConfig {
    /// Penalty weight M on the coverage slack in the subproblem.
    pub penalty: f64,
    /// Initial total allocation per request (y0 = delta / N).
    pub delta: f64,
    /// Total number of negotiation rounds T_f.
    pub t_final: usize,
    /// Round at which the step size stops decaying, T_s.
    pub t_switch: usize,
    /// Step-size scale K: alpha_t = K / (t + 1) while t < T_s, then K / T_s.
    pub step_k: f64,
    /// Use the running average of late iterates instead of the last one.
    pub averaging: bool,
}

impl AgentConfig {
    pub fn for_instance(instance: &PdvrpInstance) -> Result<AgentConfig> {
        Ok(AgentConfig {
            penalty: default_penalty(instance)?,
            delta: 0.9,
            t_final: 250,
            t_switch: 125,
            step_k: 0.005,
            averaging: true,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.penalty > 0.0) || !(self.delta > 0.0 && self.delta <= 1.0) {
            return Err(Error::Model(format!(
                "bad agent config: penalty {}, delta {}",
                self.penalty, self.delta
            )));
        }
        if self.t_switch == 0 || self.t_switch > self.t_final || !(self.step_k > 0.0) {
            return Err(Error::Model(format!(
                "bad agent config: t_switch {}, t_final {}, K {}",
                self.t_switch, self.t_final, self.step_k
            )));
        }
        Ok(())
    }
}

/// Default penalty: 50x the largest total arc cost any single vehicle sees.
pub fn default_penalty(instance: &PdvrpInstance) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for i in 0..instance.n_vehicles() {
        let graph = build_local_task_graph(instance, i)?;
        let total: f64 = graph
            .edges
            .iter()
            .map(|&(j, k)| instance.arc_cost(i, j, k))
            .sum();
        worst = worst.max(total);
    }
    Ok(50.0 * worst)
}

/// Diminishing-then-constant step size.
pub fn step_size(cfg: &AgentConfig, t: usize) -> f64 {
    if t < cfg.t_switch {
        cfg.step_k / (t + 1) as f64
    } else {
        cfg.step_k / cfg.t_switch as f64
    }
}

/// One vehicle's negotiation state.
pub struct Agent {
    pub id: usize,
    instance: Arc<PdvrpInstance>,
    pub cfg: AgentConfig,
    graph: TaskGraph,
    /// Relaxed subproblem: conv(Z_i) + penalty slack + coupling rows.
    sub_model: LinearModel,
    /// Coupling row index per local request (parallel to graph.requests).
    coupling_rows: Vec<usize>,
    /// Current allocation, one entry per request in the whole instance.
    pub y: Vec<f64>,
    /// Multipliers from the latest subproblem solve (zero outside R_i).
    pub last_mu: Vec<f64>,
    pub last_objective: f64,
    avg_num: Vec<f64>,
    avg_den: f64,
    /// Rounds completed.
    pub t: usize,
    /// capability[l][j]: request j is in vehicle l's local set. Derived from
    /// the shared instance, so every agent knows it for every peer.
    capability: Vec<Vec<bool>>,
    warm: Option<Basis>,
}

impl Agent {
    pub fn new(instance: Arc<PdvrpInstance>, id: usize, cfg: AgentConfig) -> Result<Agent> {
        cfg.validate()?;
        let n = instance.n_requests();
        let graph = build_local_task_graph(&instance, id)?;

        let mut milp = LinearModel::new();
        let sub_block = build_local_constraints(&mut milp, &instance, &graph, id)?;
        let sub_x_cols = sub_block.x_cols.clone();
        let mut sub_model = milp.lp_relaxation();
        // The slack must be able to absorb any allocation the dynamics ever
        // produce, so the subproblem stays feasible even when iterates drift
        // far outside [0, 1] before settling.
        let v_col = sub_model.add_var(
            VarKind::PenaltySlack { agent: id },
            0.0,
            1e6,
            false,
            cfg.penalty,
        );
        // Each request's budget delta is split evenly among the vehicles
        // that can actually carry it; incapable vehicles hold zero.
        let capability: Vec<Vec<bool>> = (0..instance.n_vehicles())
            .map(|l| {
                let mut row = vec![false; n];
                for j in instance.local_request_set(l) {
                    row[j] = true;
                }
                row
            })
            .collect();
        let capable_count =
            |j: usize| capability.iter().filter(|row| row[j]).count() as f64;
        let y: Vec<f64> = (0..n)
            .map(|j| {
                if capability[id][j] {
                    cfg.delta / capable_count(j)
                } else {
                    0.0
                }
            })
            .collect();
        let coupling_rows = graph
            .requests
            .iter()
            .map(|&j| {
                let mut coeffs: Vec<(usize, f64)> = graph
                    .out_edges(Node::Request(j))
                    .map(|e| (sub_x_cols[e], 1.0))
                    .collect();
                coeffs.push((v_col, 1.0));
                sub_model.add_row(coeffs, Sense::Ge, y[j], RowTag::Coupling { request: j })
            })
            .collect();

        Ok(Agent {
            id,
            cfg,
            graph,
            sub_model,
            coupling_rows,
            y,
            last_mu: vec![0.0; n],
            last_objective: f64::NAN,
            avg_num: vec![0.0; n],
            avg_den: 0.0,
            t: 0,
            capability,
            warm: None,
            instance,
        })
    }

    pub fn n_requests(&self) -> usize {
        self.instance.n_requests()
    }

    pub fn local_requests(&self) -> &[usize] {
        &self.graph.requests
    }

    /// Solves the local subproblem at the current allocation and returns the
    /// full-length multiplier vector (zeros for requests outside R_i).
    pub fn solve_subproblem(&mut self) -> Result<Vec<f64>> {
        for (pos, &j) in self.graph.requests.iter().enumerate() {
            self.sub_model.rows[self.coupling_rows[pos]].rhs = self.y[j];
        }
        let sol = solve_lp_with(
            &self.sub_model,
            self.warm.as_ref(),
            &SimplexOptions::default(),
        )?;
        let mut mu = vec![0.0; self.instance.n_requests()];
        for (pos, &j) in self.graph.requests.iter().enumerate() {
            let m = sol.duals[self.coupling_rows[pos]];
            if m < -MU_TOL || m > self.cfg.penalty + MU_TOL {
                return Err(Error::Internal(format!(
                    "agent {}: multiplier {m} for request {j} outside [0, {}]",
                    self.id, self.cfg.penalty
                )));
            }
            mu[j] = m.clamp(0.0, self.cfg.penalty);
        }
        self.warm = Some(sol.basis);
        self.last_objective = sol.objective;
        self.last_mu = mu.clone();
        Ok(mu)
    }

    /// Consumes the neighbours' multipliers (pre-sorted by sender id) and
    /// steps the allocation. Call once per round, after `solve_subproblem`.
    pub fn apply_update(&mut self, neighbor_mus: &[(usize, Vec<f64>)]) -> Result<()> {
        let alpha = step_size(&self.cfg, self.t);
        for (sender, mu) in neighbor_mus {
            if *sender == self.id {
                return Err(Error::Protocol(format!(
                    "agent {} received its own message",
                    self.id
                )));
            }
            if mu.len() != self.y.len() {
                return Err(Error::Protocol(format!(
                    "agent {}: message from {} has length {}, want {}",
                    self.id,
                    sender,
                    mu.len(),
                    self.y.len()
                )));
            }
            // Allocations are traded per request, and only between agents
            // that can both carry it: the exchange stays antisymmetric (so
            // the per-request total is conserved) and nothing ever flows to
            // a vehicle that could not serve the task.
            for j in 0..self.y.len() {
                if self.capability[self.id][j] && self.capability[*sender][j] {
                    self.y[j] -= alpha * (self.last_mu[j] - mu[j]);
                }
            }
        }
        self.t += 1;
        // Accumulate the running average over the constant-step tail. The new
        // iterate index is t; weights are the (constant) late step size.
        if self.t > self.cfg.t_switch {
            let w = self.cfg.step_k / self.cfg.t_switch as f64;
            for j in 0..self.y.len() {
                self.avg_num[j] += w * self.y[j];
            }
            self.avg_den += w;
        }
        Ok(())
    }

    /// The allocation fed into thresholding: running average when enabled and
    /// populated, otherwise the last iterate.
    pub fn final_allocation(&self) -> Vec<f64> {
        if self.cfg.averaging && self.avg_den > 0.0 {
            self.avg_num.iter().map(|&v| v / self.avg_den).collect()
        } else {
            self.y.clone()
        }
    }

    /// Caps each component at 1 so the final MILP never has to cover a
    /// request more than once; components for requests the vehicle cannot
    /// serve are capped at 0 instead.
    pub fn threshold(&self, y: &[f64]) -> Vec<f64> {
        y.iter()
            .enumerate()
            .map(|(j, &v)| {
                if self.graph.contains_request(j) {
                    v.min(1.0)
                } else {
                    v.min(0.0)
                }
            })
            .collect()
    }

    /// Integer local problem with coverage right-hand side `y_end`.
    pub fn build_final_milp(&self, y_end: &[f64]) -> Result<(LinearModel, LocalBlock)> {
        let mut model = LinearModel::new();
        let block = build_local_constraints(&mut model, &self.instance, &self.graph, self.id)?;
        for &j in &self.graph.requests {
            let coeffs: Vec<(usize, f64)> = self
                .graph
                .out_edges(Node::Request(j))
                .map(|e| (block.x_cols[e], 1.0))
                .collect();
            model.add_row(coeffs, Sense::Ge, y_end[j], RowTag::Coupling { request: j });
        }
        Ok((model, block))
    }

    /// Runs the full back end: threshold the allocation, solve the final
    /// MILP, extract the route.
    pub fn solve_final(&self) -> Result<AgentRoute> {
        self.solve_final_from(&self.final_allocation())
    }

    /// Same, from an explicit allocation (used by time-to-feasibility probes).
    ///
    /// The integer problem is solved exactly by the route DP: a positive
    /// thresholded component on either half of a pair makes the whole pair
    /// required (the pairing rows force them together anyway), and the DP
    /// finds the cheapest route through exactly the required pairs.
    pub fn solve_final_from(&self, allocation: &[f64]) -> Result<AgentRoute> {
        let y_end = self.threshold(allocation);
        let required: Vec<(usize, usize)> = exact::pair_list(&self.instance)
            .into_iter()
            .filter(|&(p, d)| self.graph.contains_request(p) && (y_end[p] > 0.0 || y_end[d] > 0.0))
            .collect();
        let full = (1usize << required.len()) - 1;
        let dp = exact::RouteDp::run(&self.instance, self.id, &required)?;
        let order = dp.subset_order(full).map_err(|_| {
            Error::Infeasible(format!(
                "agent {}: final integer problem infeasible",
                self.id
            ))
        })?;
        AgentRoute::from_order(&self.instance, &self.graph, self.id, &order)
    }

    /// Reference path through the branch-and-bound solver; used to
    /// cross-check the DP on small instances.
    pub fn solve_final_milp_from(&self, allocation: &[f64]) -> Result<AgentRoute> {
        let y_end = self.threshold(allocation);
        let (model, block) = self.build_final_milp(&y_end)?;
        let sol = solve_milp_with(&model, &BnbOptions::default())?;
        if sol.status != MilpStatus::Optimal {
            return Err(Error::Infeasible(format!(
                "agent {}: final MILP infeasible",
                self.id
            )));
        }
        Ok(AgentRoute::from_solution(&block, &sol.x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluate::{check_local, EVAL_TOL};
    use crate::instance::{generate_random_instance, GenOptions};

    fn setup(seed: u64, n: usize, p: usize) -> (Arc<PdvrpInstance>, AgentConfig) {
        let inst = Arc::new(generate_random_instance(seed, n, p, &GenOptions::default()).unwrap());
        let cfg = AgentConfig::for_instance(&inst).unwrap();
        (inst, cfg)
    }

    #[test]
    fn step_size_schedule() {
        let (inst, cfg) = setup(1, 2, 1);
        drop(inst);
        assert!((step_size(&cfg, 0) - 0.005).abs() < 1e-15);
        assert!((step_size(&cfg, 124) - 0.005 / 125.0).abs() < 1e-15);
        assert!((step_size(&cfg, 125) - 0.005 / 125.0).abs() < 1e-15);
        assert!((step_size(&cfg, 249) - 0.005 / 125.0).abs() < 1e-15);
    }

    #[test]
    fn initial_allocation_sums_to_delta() {
        let (inst, cfg) = setup(2, 3, 2);
        let agents: Vec<Agent> = (0..3)
            .map(|i| Agent::new(inst.clone(), i, cfg.clone()).unwrap())
            .collect();
        for j in 0..inst.n_requests() {
            let total: f64 = agents.iter().map(|a| a.y[j]).sum();
            assert!((total - cfg.delta).abs() < 1e-12);
        }
    }

    #[test]
    fn pairwise_exchange_conserves_total() {
        let (inst, cfg) = setup(3, 2, 1);
        let mut a = Agent::new(inst.clone(), 0, cfg.clone()).unwrap();
        let mut b = Agent::new(inst.clone(), 1, cfg.clone()).unwrap();
        for _ in 0..10 {
            let mu_a = a.solve_subproblem().unwrap();
            let mu_b = b.solve_subproblem().unwrap();
            a.apply_update(&[(1, mu_b.clone())]).unwrap();
            b.apply_update(&[(0, mu_a.clone())]).unwrap();
        }
        for j in 0..inst.n_requests() {
            assert!((a.y[j] + b.y[j] - cfg.delta).abs() < 1e-12);
        }
    }

    #[test]
    fn multipliers_in_range_and_deterministic() {
        let (inst, cfg) = setup(4, 2, 2);
        let mut a = Agent::new(inst.clone(), 0, cfg.clone()).unwrap();
        let mu1 = a.solve_subproblem().unwrap();
        let mut b = Agent::new(inst, 0, cfg.clone()).unwrap();
        let mu2 = b.solve_subproblem().unwrap();
        assert_eq!(mu1, mu2);
        assert!(mu1.iter().all(|&m| (0.0..=cfg.penalty).contains(&m)));
    }

    #[test]
    fn threshold_caps_at_one_and_zero() {
        let mut opts = GenOptions::default();
        opts.heterogeneous = true;
        let inst = Arc::new(generate_random_instance(11, 3, 3, &opts).unwrap());
        let cfg = AgentConfig::for_instance(&inst).unwrap();
        let agent = Agent::new(inst.clone(), 0, cfg).unwrap();
        let y = vec![2.5; inst.n_requests()];
        let th = agent.threshold(&y);
        for (j, &v) in th.iter().enumerate() {
            if agent.graph.contains_request(j) {
                assert_eq!(v, 1.0);
            } else {
                assert_eq!(v, 0.0);
            }
        }
    }

    #[test]
    fn final_milp_full_allocation_serves_everything() {
        let (inst, cfg) = setup(5, 2, 2);
        let agent = Agent::new(inst.clone(), 0, cfg).unwrap();
        let route = agent
            .solve_final_from(&vec![1.0; inst.n_requests()])
            .unwrap();
        check_local(&inst, &route, EVAL_TOL).unwrap();
        assert_eq!(route.served_requests(), vec![0, 1, 2, 3]);
    }

    #[test]
    fn final_milp_empty_allocation_gives_empty_route() {
        let (inst, cfg) = setup(6, 2, 1);
        let agent = Agent::new(inst.clone(), 0, cfg).unwrap();
        let route = agent
            .solve_final_from(&vec![0.0; inst.n_requests()])
            .unwrap();
        check_local(&inst, &route, EVAL_TOL).unwrap();
        assert!(route.served_requests().is_empty());
        assert_eq!(route.visit_order().unwrap(), vec![Node::Start, Node::End]);
    }

    #[test]
    fn averaging_of_constant_iterates_is_identity() {
        let (inst, _) = setup(7, 2, 1);
        let cfg = AgentConfig {
            t_final: 4,
            t_switch: 2,
            ..AgentConfig::for_instance(&inst).unwrap()
        };
        let mut a = Agent::new(inst.clone(), 0, cfg).unwrap();
        for _ in 0..4 {
            a.solve_subproblem().unwrap();
            // Echo our own duals back so y never moves.
            let mu = a.last_mu.clone();
            a.apply_update(&[(1, mu)]).unwrap();
        }
        let avg = a.final_allocation();
        for (j, &v) in avg.iter().enumerate() {
            assert!((v - a.y[j]).abs() < 1e-12);
        }
    }
}
