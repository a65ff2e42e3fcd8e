//! Exact pickup-and-delivery optima via dynamic programming.
//!
//! A single vehicle serving k pairs is a Held-Karp-style DP over states
//! (picked set, delivered set, last location); one sweep yields the optimal
//! route cost for *every* subset of pairs at once. The fleet optimum is then
//! a set-partition DP over those subset costs. For Euclidean arc costs this
//! equals the MILP optimum: routes serve whole pairs, and dropping duplicate
//! visits never increases cost by the triangle inequality.
//!
//! Since `dropped` is always a subset of `picked`, states are indexed
//! compactly: 3^k (picked, dropped) combinations instead of a dense 4^k
//! table, with `dropped` stored as a rank over the set bits of `picked`.

use crate::error::{Error, Result};
use crate::graph::Node;
use crate::instance::{PdvrpInstance, RequestKind};

/// Pair-count cap: the state space is 3^k * (2k + 1).
pub const DP_MAX_PAIRS: usize = 12;

/// (pickup id, delivery id) per pair, in pickup order.
pub fn pair_list(instance: &PdvrpInstance) -> Vec<(usize, usize)> {
    instance
        .requests
        .iter()
        .enumerate()
        .filter(|(_, r)| r.kind == RequestKind::Pickup)
        .map(|(j, r)| (j, r.pair_id))
        .collect()
}

/// Single-vehicle DP sweep. `pairs` are the pairs the vehicle may serve.
pub struct RouteDp {
    pairs: Vec<(usize, usize)>,
    k: usize,
    /// First compact state id per `picked` mask (prefix sums of 2^popcount).
    offset: Vec<u32>,
    /// cost[(offset[picked] + rank(dropped)) * slots + last].
    cost: Vec<f64>,
    prev: Vec<u32>,
    /// Cheapest completion per subset: best over last of cost + arc to end.
    subset_cost: Vec<f64>,
    subset_last: Vec<u32>,
    agent: usize,
}

const UNSET: u32 = u32::MAX;

impl RouteDp {
    fn slots(&self) -> usize {
        2 * self.k + 1
    }

    fn slot_node(&self, slot: usize) -> Node {
        if slot == 0 {
            Node::Start
        } else if slot % 2 == 1 {
            Node::Request(self.pairs[(slot - 1) / 2].0)
        } else {
            Node::Request(self.pairs[slot / 2 - 1].1)
        }
    }

    fn idx(&self, picked: usize, rank: usize, last: usize) -> usize {
        (self.offset[picked] as usize + rank) * self.slots() + last
    }

    /// Runs the sweep for one vehicle over the candidate pairs.
    pub fn run(
        instance: &PdvrpInstance,
        agent: usize,
        pairs: &[(usize, usize)],
    ) -> Result<RouteDp> {
        let k = pairs.len();
        if k > DP_MAX_PAIRS {
            return Err(Error::Model(format!(
                "route DP limited to {DP_MAX_PAIRS} pairs, got {k}"
            )));
        }
        let vehicle = &instance.vehicles[agent];
        let slots = 2 * k + 1;

        let mut offset = vec![0u32; 1 << k];
        let mut total = 0u32;
        for picked in 0..1usize << k {
            offset[picked] = total;
            total += 1 << picked.count_ones();
        }

        // Distance matrix over slots plus the end vertex (index = slots).
        let mut dist = vec![0.0; (slots + 1) * (slots + 1)];
        let node_of = |s: usize| -> Node {
            if s == slots {
                Node::End
            } else if s == 0 {
                Node::Start
            } else if s % 2 == 1 {
                Node::Request(pairs[(s - 1) / 2].0)
            } else {
                Node::Request(pairs[s / 2 - 1].1)
            }
        };
        for a in 0..=slots {
            for b in 0..=slots {
                dist[a * (slots + 1) + b] = instance.arc_cost(agent, node_of(a), node_of(b));
            }
        }
        // Total pickup demand per pair mask.
        let mut pload = vec![0.0_f64; 1 << k];
        for mask in 1..1usize << k {
            let b = mask.trailing_zeros() as usize;
            pload[mask] = pload[mask & (mask - 1)] + instance.requests[pairs[b].0].demand;
        }

        let mut dp = RouteDp {
            pairs: pairs.to_vec(),
            k,
            offset,
            cost: vec![f64::INFINITY; total as usize * slots],
            prev: vec![UNSET; total as usize * slots],
            subset_cost: vec![f64::INFINITY; 1 << k],
            subset_last: vec![UNSET; 1 << k],
            agent,
        };
        dp.cost[0] = 0.0; // (picked = 0, dropped = 0, last = start)

        for picked in 0usize..1 << k {
            // Submasks of `picked` in increasing order; `rank` counts along,
            // which is exactly the compact index of `dropped` over the set
            // bits of `picked`. Deliveries only add bits, so successors stay
            // ahead of the scan.
            let mut dropped = 0usize;
            let mut rank = 0usize;
            loop {
                let load = vehicle.initial_load + pload[picked] - pload[dropped];
                for last in 0..slots {
                    let cur = dp.idx(picked, rank, last);
                    let c = dp.cost[cur];
                    if c.is_finite() {
                        for b in 0..k {
                            let bit = 1usize << b;
                            let below = (picked & (bit - 1)).count_ones() as usize;
                            if picked & bit == 0 {
                                // Pick pair b up; the new bit shifts the
                                // ranks of the dropped bits above it.
                                if load + instance.requests[pairs[b].0].demand
                                    <= vehicle.capacity + 1e-12
                                {
                                    let nrank = ((rank >> below) << (below + 1))
                                        | (rank & ((1 << below) - 1));
                                    let to = 1 + 2 * b;
                                    let nc = c + dist[last * (slots + 1) + to];
                                    let ni = dp.idx(picked | bit, nrank, to);
                                    if nc < dp.cost[ni] {
                                        dp.cost[ni] = nc;
                                        dp.prev[ni] = cur as u32;
                                    }
                                }
                            } else if dropped & bit == 0 {
                                // Deliver pair b.
                                let nrank = rank | (1 << below);
                                let to = 2 + 2 * b;
                                let nc = c + dist[last * (slots + 1) + to];
                                let ni = dp.idx(picked, nrank, to);
                                if nc < dp.cost[ni] {
                                    dp.cost[ni] = nc;
                                    dp.prev[ni] = cur as u32;
                                }
                            }
                        }
                    }
                }
                if dropped == picked {
                    break;
                }
                dropped = dropped.wrapping_sub(picked) & picked;
                rank += 1;
            }
        }

        // Close every completed subset with the arc to the end vertex.
        for subset in 0usize..1 << k {
            let rank = (1usize << subset.count_ones()) - 1; // dropped == picked
            for last in 0..slots {
                let cur = dp.idx(subset, rank, last);
                if dp.cost[cur].is_finite() {
                    let total = dp.cost[cur] + dist[last * (slots + 1) + slots];
                    if total < dp.subset_cost[subset] {
                        dp.subset_cost[subset] = total;
                        dp.subset_last[subset] = cur as u32;
                    }
                }
            }
        }
        Ok(dp)
    }

    /// Optimal cost of serving exactly `subset` (bitmask over this DP's
    /// pairs), infinite if capacity-infeasible.
    pub fn subset_cost(&self, subset: usize) -> f64 {
        self.subset_cost[subset]
    }

    pub fn agent(&self) -> usize {
        self.agent
    }

    /// Optimal visit order for `subset`, start/end included.
    pub fn subset_order(&self, subset: usize) -> Result<Vec<Node>> {
        if !self.subset_cost[subset].is_finite() {
            return Err(Error::Infeasible(format!(
                "agent {}: pair subset {subset:b} exceeds capacity",
                self.agent
            )));
        }
        let mut rev = vec![Node::End];
        let mut cur = self.subset_last[subset] as usize;
        loop {
            let last = cur % self.slots();
            rev.push(self.slot_node(last));
            if last == 0 {
                break;
            }
            cur = self.prev[cur] as usize;
        }
        rev.reverse();
        Ok(rev)
    }
}

/// Exact fleet optimum: assign every pair to exactly one vehicle.
pub struct FleetPlan {
    pub cost: f64,
    /// Visit order per vehicle.
    pub orders: Vec<Vec<Node>>,
}

pub fn optimal_fleet_plan(instance: &PdvrpInstance) -> Result<FleetPlan> {
    let pairs = pair_list(instance);
    let k = pairs.len();
    let n = instance.n_vehicles();
    // One sweep per vehicle over the full pair list; over-capacity pairs end
    // up at infinite cost through the load check.
    let dps: Vec<RouteDp> = (0..n)
        .map(|i| RouteDp::run(instance, i, &pairs))
        .collect::<Result<_>>()?;

    // f[i][mask]: cheapest way for vehicles i.. to serve `mask`.
    let full = (1usize << k) - 1;
    let mut f = vec![vec![f64::INFINITY; full + 1]; n + 1];
    let mut choice = vec![vec![0usize; full + 1]; n + 1];
    f[n][0] = 0.0;
    for i in (0..n).rev() {
        for mask in 0..=full {
            let mut t = mask;
            loop {
                let c = dps[i].subset_cost(t);
                if c.is_finite() && f[i + 1][mask & !t].is_finite() {
                    let total = c + f[i + 1][mask & !t];
                    if total < f[i][mask] {
                        f[i][mask] = total;
                        choice[i][mask] = t;
                    }
                }
                if t == 0 {
                    break;
                }
                t = (t - 1) & mask;
            }
        }
    }
    if !f[0][full].is_finite() {
        return Err(Error::Infeasible(
            "no capacity-feasible pair assignment".into(),
        ));
    }

    let mut orders = Vec::with_capacity(n);
    let mut mask = full;
    for i in 0..n {
        let t = choice[i][mask];
        orders.push(dps[i].subset_order(t)?);
        mask &= !t;
    }
    Ok(FleetPlan {
        cost: f[0][full],
        orders,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{generate_random_instance, GenOptions};
    use crate::oracle::enumerate_routes_oracle;

    #[test]
    fn fleet_plan_matches_enumeration_oracle() {
        for seed in 0..10 {
            let inst = generate_random_instance(seed, 2, 2, &GenOptions::default()).unwrap();
            let dp = optimal_fleet_plan(&inst).unwrap();
            let oracle = enumerate_routes_oracle(&inst).unwrap();
            assert!(
                (dp.cost - oracle.cost).abs() < 1e-9,
                "seed {seed}: dp {} vs oracle {}",
                dp.cost,
                oracle.cost
            );
        }
    }

    #[test]
    fn fleet_plan_matches_oracle_heterogeneous() {
        let mut opts = GenOptions::default();
        opts.heterogeneous = true;
        for seed in 0..10 {
            let inst = generate_random_instance(seed, 3, 3, &opts).unwrap();
            let dp = optimal_fleet_plan(&inst).unwrap();
            let oracle = enumerate_routes_oracle(&inst).unwrap();
            assert!((dp.cost - oracle.cost).abs() < 1e-9, "seed {seed}");
        }
    }

    #[test]
    fn single_vehicle_three_pairs_matches_oracle() {
        for seed in 20..25 {
            let inst = generate_random_instance(seed, 1, 3, &GenOptions::default()).unwrap();
            let dp = optimal_fleet_plan(&inst).unwrap();
            let oracle = enumerate_routes_oracle(&inst).unwrap();
            assert!((dp.cost - oracle.cost).abs() < 1e-9, "seed {seed}");
            assert_eq!(dp.orders, oracle.orders, "seed {seed}");
        }
    }

    #[test]
    fn subset_cost_of_empty_route() {
        let inst = generate_random_instance(2, 1, 2, &GenOptions::default()).unwrap();
        let pairs = pair_list(&inst);
        let dp = RouteDp::run(&inst, 0, &pairs).unwrap();
        // Virtual end point: the empty route is free.
        assert_eq!(dp.subset_cost(0), 0.0);
        let order = dp.subset_order(0).unwrap();
        assert_eq!(order, vec![Node::Start, Node::End]);
    }

    #[test]
    fn pair_guard() {
        let inst =
            generate_random_instance(3, 1, DP_MAX_PAIRS + 1, &GenOptions::default()).unwrap();
        let pairs = pair_list(&inst);
        assert!(RouteDp::run(&inst, 0, &pairs).is_err());
    }
}
