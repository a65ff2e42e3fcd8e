//! Independent feasibility evaluator.
//!
//! Checks routes directly against the routing rules (degree, pairing,
//! precedence, time propagation, load propagation, bounds, coverage) without
//! going through `LinearModel`, so model-construction bugs cannot hide.

use crate::error::{Error, Result};
use crate::graph::Node;
use crate::instance::{PdvrpInstance, RequestKind};
use crate::route::AgentRoute;

pub const EVAL_TOL: f64 = 1e-6;

fn vertex_index(route: &AgentRoute, node: Node) -> Result<usize> {
    match node {
        Node::Start => Ok(0),
        Node::End => Ok(route.requests.len() + 1),
        Node::Request(j) => route
            .requests
            .binary_search(&j)
            .map(|p| p + 1)
            .map_err(|_| {
                Error::Internal(format!("request {j} not in agent {} graph", route.agent))
            }),
    }
}

fn fail(agent: usize, what: impl Into<String>) -> Error {
    Error::Infeasible(format!("agent {agent}: {}", what.into()))
}

/// Validates one vehicle's route against every local rule.
pub fn check_local(instance: &PdvrpInstance, route: &AgentRoute, tol: f64) -> Result<()> {
    let i = route.agent;
    let vehicle = &instance.vehicles[i];

    for &(from, to, v) in &route.arcs {
        if (v - v.round()).abs() > tol || !(v.round() == 0.0 || v.round() == 1.0) {
            return Err(fail(
                i,
                format!("arc {from:?}->{to:?} indicator {v} is not binary"),
            ));
        }
    }

    let out_deg = |node: Node| -> f64 {
        route
            .arcs
            .iter()
            .filter(|&&(f, _, v)| f == node && v > 0.5)
            .map(|_| 1.0)
            .sum()
    };
    let in_deg = |node: Node| -> f64 {
        route
            .arcs
            .iter()
            .filter(|&&(_, t, v)| t == node && v > 0.5)
            .map(|_| 1.0)
            .sum()
    };

    if out_deg(Node::Start) != 1.0 {
        return Err(fail(i, "start vertex must have exactly one outgoing arc"));
    }
    if in_deg(Node::End) != 1.0 {
        return Err(fail(i, "end vertex must have exactly one incoming arc"));
    }
    for &j in &route.requests {
        let node = Node::Request(j);
        if in_deg(node) != out_deg(node) {
            return Err(fail(i, format!("flow imbalance at request {j}")));
        }
        if in_deg(node) > 1.0 {
            return Err(fail(i, format!("request {j} visited more than once")));
        }
    }

    // Pairing and precedence.
    for &j in &route.requests {
        let req = &instance.requests[j];
        if req.kind != RequestKind::Pickup {
            continue;
        }
        let d = req.pair_id;
        let pickup_served = in_deg(Node::Request(j)) > 0.5;
        let delivery_served = route.requests.contains(&d) && in_deg(Node::Request(d)) > 0.5;
        if pickup_served != delivery_served {
            return Err(fail(
                i,
                format!("pair ({j},{d}) split: pickup {pickup_served}, delivery {delivery_served}"),
            ));
        }
        if pickup_served {
            let bp = route.begin[vertex_index(route, Node::Request(j))?];
            let bd = route.begin[vertex_index(route, Node::Request(d))?];
            if bp > bd + tol {
                return Err(fail(
                    i,
                    format!("delivery {d} starts before pickup {j} ({bd} < {bp})"),
                ));
            }
        }
    }

    // Time and load propagation on the selected arcs.
    for &(from, to, v) in &route.arcs {
        if v < 0.5 {
            continue;
        }
        let bj = route.begin[vertex_index(route, from)?];
        let bk = route.begin[vertex_index(route, to)?];
        let dwell = instance.service_time(from);
        let travel = instance.arc_time(i, from, to);
        if bk + tol < bj + dwell + travel {
            return Err(fail(
                i,
                format!(
                    "time propagation broken on {from:?}->{to:?}: {bk} < {bj} + {dwell} + {travel}"
                ),
            ));
        }
        let qj = route.load[vertex_index(route, from)?];
        let qk = route.load[vertex_index(route, to)?];
        let delta = instance.demand(to);
        if (qk - qj - delta).abs() > tol {
            return Err(fail(
                i,
                format!("load propagation broken on {from:?}->{to:?}: {qk} != {qj} + {delta}"),
            ));
        }
    }

    // Variable bounds.
    let q_start = route.load[0];
    if (q_start - vehicle.initial_load).abs() > tol {
        return Err(fail(
            i,
            format!(
                "start load {q_start} != initial load {}",
                vehicle.initial_load
            ),
        ));
    }
    for (pos, node) in route_vertices(route).into_iter().enumerate() {
        let q = route.load[pos];
        let b = route.begin[pos];
        let dem = instance.demand(node);
        let lo = dem.max(0.0);
        let hi = vehicle.capacity.min(vehicle.capacity + dem);
        if q < lo - tol || q > hi + tol {
            return Err(fail(
                i,
                format!("load {q} at {node:?} outside [{lo}, {hi}]"),
            ));
        }
        if b < -tol {
            return Err(fail(i, format!("negative begin time {b} at {node:?}")));
        }
    }

    // The arcs must actually chain into one path; visit_order errors if not.
    route.visit_order()?;
    Ok(())
}

fn route_vertices(route: &AgentRoute) -> Vec<Node> {
    let mut v = vec![Node::Start];
    v.extend(route.requests.iter().map(|&j| Node::Request(j)));
    v.push(Node::End);
    v
}

/// Per-request coverage: how many selected arcs enter each request, summed
/// over every route.
pub fn coverage_counts(instance: &PdvrpInstance, routes: &[AgentRoute]) -> Vec<f64> {
    let mut counts = vec![0.0; instance.requests.len()];
    for route in routes {
        for &(_, to, v) in &route.arcs {
            if let Node::Request(j) = to {
                counts[j] += v;
            }
        }
    }
    counts
}

/// Full check: every route locally valid and every request covered at least
/// `rhs[j]` times in aggregate.
pub fn check_aggregate(
    instance: &PdvrpInstance,
    routes: &[AgentRoute],
    rhs: &[f64],
    tol: f64,
) -> Result<()> {
    for route in routes {
        check_local(instance, route, tol)?;
    }
    let counts = coverage_counts(instance, routes);
    for (j, (&got, &need)) in counts.iter().zip(rhs).enumerate() {
        if got + tol < need {
            return Err(Error::Infeasible(format!(
                "request {j} covered {got} times, needs {need}"
            )));
        }
    }
    Ok(())
}

/// Convenience: aggregate check against full coverage (every request once).
pub fn check_full_coverage(
    instance: &PdvrpInstance,
    routes: &[AgentRoute],
    tol: f64,
) -> Result<()> {
    let rhs = vec![1.0; instance.requests.len()];
    check_aggregate(instance, routes, &rhs, tol)
}

pub fn total_cost(instance: &PdvrpInstance, routes: &[AgentRoute]) -> f64 {
    routes.iter().map(|r| r.cost(instance)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_task_graph;
    use crate::instance::{generate_random_instance, GenOptions};

    fn hand_route(instance: &PdvrpInstance, agent: usize, order: &[Node]) -> AgentRoute {
        let graph = build_task_graph(instance).unwrap();
        let mut arcs: Vec<(Node, Node, f64)> =
            graph.edges.iter().map(|&(f, t)| (f, t, 0.0)).collect();
        for w in order.windows(2) {
            for arc in arcs.iter_mut() {
                if arc.0 == w[0] && arc.1 == w[1] {
                    arc.2 = 1.0;
                }
            }
        }
        // Propagate times/loads along the order, leave everything else at
        // its lower bound.
        let n = instance.requests.len();
        let mut begin = vec![0.0; n + 2];
        let mut load = vec![0.0; n + 2];
        let idx = |node: Node| match node {
            Node::Start => 0,
            Node::Request(j) => j + 1,
            Node::End => n + 1,
        };
        load[0] = instance.vehicles[agent].initial_load;
        for w in order.windows(2) {
            let (a, b) = (w[0], w[1]);
            begin[idx(b)] =
                begin[idx(a)] + instance.service_time(a) + instance.arc_time(agent, a, b);
            load[idx(b)] = load[idx(a)] + instance.demand(b);
        }
        // Unvisited requests: park values inside their bounds.
        for j in 0..n {
            if !order.contains(&Node::Request(j)) {
                load[j + 1] = instance.demand(Node::Request(j)).max(0.0);
            }
        }
        AgentRoute {
            agent,
            requests: (0..n).collect(),
            arcs,
            begin,
            load,
        }
    }

    #[test]
    fn valid_hand_route_passes() {
        let inst = generate_random_instance(7, 2, 1, &GenOptions::default()).unwrap();
        let order = [Node::Start, Node::Request(0), Node::Request(1), Node::End];
        let r0 = hand_route(&inst, 0, &order);
        let r1 = hand_route(&inst, 1, &[Node::Start, Node::End]);
        check_local(&inst, &r0, EVAL_TOL).unwrap();
        check_local(&inst, &r1, EVAL_TOL).unwrap();
        check_full_coverage(&inst, &[r0, r1], EVAL_TOL).unwrap();
    }

    #[test]
    fn split_pair_rejected() {
        let inst = generate_random_instance(7, 2, 1, &GenOptions::default()).unwrap();
        // Serves the pickup but never the delivery: pairing must trip.
        let mut r = hand_route(&inst, 0, &[Node::Start, Node::Request(0), Node::End]);
        // hand_route leaves unvisited deliveries parked; pairing check fires.
        let err = check_local(&inst, &r, EVAL_TOL).unwrap_err();
        assert!(matches!(err, Error::Infeasible(_)));
        // Fixing the flow at the delivery is not enough to hide it either.
        r.arcs.iter_mut().for_each(|a| {
            if a.0 == Node::Request(1) || a.1 == Node::Request(1) {
                a.2 = 0.0;
            }
        });
        assert!(check_local(&inst, &r, EVAL_TOL).is_err());
    }

    #[test]
    fn missing_coverage_rejected() {
        let inst = generate_random_instance(9, 2, 1, &GenOptions::default()).unwrap();
        let empty0 = hand_route(&inst, 0, &[Node::Start, Node::End]);
        let empty1 = hand_route(&inst, 1, &[Node::Start, Node::End]);
        let err = check_full_coverage(&inst, &[empty0, empty1], EVAL_TOL).unwrap_err();
        assert!(matches!(err, Error::Infeasible(_)));
    }

    #[test]
    fn broken_time_propagation_rejected() {
        let inst = generate_random_instance(7, 1, 1, &GenOptions::default()).unwrap();
        let order = [Node::Start, Node::Request(0), Node::Request(1), Node::End];
        let mut r = hand_route(&inst, 0, &order);
        r.begin[2] = 0.0; // delivery can't start at time zero
        assert!(check_local(&inst, &r, EVAL_TOL).is_err());
    }
}
