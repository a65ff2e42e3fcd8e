//! Brute-force optimum by route enumeration.
//!
//! Independent of the MILP machinery: assigns every pickup/delivery pair to a
//! vehicle, enumerates all precedence-respecting visit orders, simulates the
//! load along each candidate route, and keeps the cheapest feasible plan.
//! Intended as a test oracle only; guarded to tiny instances.

use crate::error::{Error, Result};
use crate::graph::Node;
use crate::instance::PdvrpInstance;

pub const ORACLE_MAX_VEHICLES: usize = 3;
pub const ORACLE_MAX_PAIRS: usize = 3;

#[derive(Debug, Clone)]
pub struct OraclePlan {
    pub cost: f64,
    /// Visit order per vehicle, start/end included.
    pub orders: Vec<Vec<Node>>,
}

/// All interleavings of the given pairs where each pickup precedes its
/// delivery. `pairs` holds (pickup_id, delivery_id).
fn orderings(pairs: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut seq = Vec::with_capacity(pairs.len() * 2);
    fn rec(
        pairs: &[(usize, usize)],
        picked: &mut Vec<bool>,
        dropped: &mut Vec<bool>,
        seq: &mut Vec<usize>,
        out: &mut Vec<Vec<usize>>,
    ) {
        if seq.len() == pairs.len() * 2 {
            out.push(seq.clone());
            return;
        }
        for (idx, &(p, d)) in pairs.iter().enumerate() {
            if !picked[idx] {
                picked[idx] = true;
                seq.push(p);
                rec(pairs, picked, dropped, seq, out);
                seq.pop();
                picked[idx] = false;
            } else if !dropped[idx] {
                dropped[idx] = true;
                seq.push(d);
                rec(pairs, picked, dropped, seq, out);
                seq.pop();
                dropped[idx] = false;
            }
        }
    }
    let mut picked = vec![false; pairs.len()];
    let mut dropped = vec![false; pairs.len()];
    rec(pairs, &mut picked, &mut dropped, &mut seq, &mut out);
    out
}

/// Cheapest feasible visit order for one vehicle serving the given pairs, or
/// None if the capacity makes every order infeasible.
fn best_route(
    instance: &PdvrpInstance,
    vehicle: usize,
    pairs: &[(usize, usize)],
) -> Option<(f64, Vec<Node>)> {
    let v = &instance.vehicles[vehicle];
    let mut best: Option<(f64, Vec<Node>)> = None;
    for seq in orderings(pairs) {
        let mut load = v.initial_load;
        let mut ok = true;
        for &j in &seq {
            load += instance.requests[j].demand;
            if load < -1e-12 || load > v.capacity + 1e-12 {
                ok = false;
                break;
            }
        }
        if !ok {
            continue;
        }
        let mut order = vec![Node::Start];
        order.extend(seq.iter().map(|&j| Node::Request(j)));
        order.push(Node::End);
        let cost: f64 = order
            .windows(2)
            .map(|w| instance.arc_cost(vehicle, w[0], w[1]))
            .sum();
        if best.as_ref().is_none_or(|(c, _)| cost < *c) {
            best = Some((cost, order));
        }
    }
    best
}

/// Exhaustive optimum over all pair-to-vehicle assignments.
pub fn enumerate_routes_oracle(instance: &PdvrpInstance) -> Result<OraclePlan> {
    let n = instance.vehicles.len();
    let pairs: Vec<(usize, usize)> = instance
        .requests
        .iter()
        .enumerate()
        .filter(|(_, r)| r.demand > 0.0)
        .map(|(j, r)| (j, r.pair_id))
        .collect();
    if n > ORACLE_MAX_VEHICLES || pairs.len() > ORACLE_MAX_PAIRS {
        return Err(Error::Internal(format!(
            "oracle limited to {ORACLE_MAX_VEHICLES} vehicles / {ORACLE_MAX_PAIRS} pairs, got {n} / {}",
            pairs.len()
        )));
    }

    let mut best: Option<OraclePlan> = None;
    let total = n.pow(pairs.len() as u32);
    for code in 0..total {
        // Decode the assignment: pair idx -> vehicle.
        let mut assign = vec![Vec::new(); n];
        let mut c = code;
        for &pair in &pairs {
            assign[c % n].push(pair);
            c /= n;
        }
        let mut cost = 0.0;
        let mut orders = Vec::with_capacity(n);
        let mut feasible = true;
        for (i, assigned) in assign.iter().enumerate() {
            // Respect heterogeneous capacities: a vehicle that cannot lift a
            // pickup cannot take the pair at all.
            if assigned
                .iter()
                .any(|&(p, _)| instance.requests[p].demand > instance.vehicles[i].capacity + 1e-12)
            {
                feasible = false;
                break;
            }
            match best_route(instance, i, assigned) {
                Some((c, order)) => {
                    cost += c;
                    orders.push(order);
                }
                None => {
                    feasible = false;
                    break;
                }
            }
        }
        if feasible && best.as_ref().is_none_or(|b| cost < b.cost) {
            best = Some(OraclePlan { cost, orders });
        }
    }
    best.ok_or_else(|| Error::Infeasible("no feasible assignment exists".into()))
}
