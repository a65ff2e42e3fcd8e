//! Builds the linearized local constraint set Z_i, the coupling rows, the
//! centralized MILP and the per-agent allocation subproblem / final MILP.

use crate::error::{Error, Result};
use crate::graph::{build_local_task_graph, TaskGraph};
use crate::instance::{Node, PdvrpInstance, RequestKind};
use crate::model::{LinearModel, RowTag, Sense, VarKind};

/// Big-M constants for one vehicle over its task graph.
#[derive(Debug, Clone)]
pub struct BigMData {
    /// Time horizon upper bound for the vehicle.
    pub b_bar: f64,
    /// Per-edge M_i^{jk} = b_bar + d^j + t_i^{jk}.
    pub time_m: Vec<f64>,
    /// Per-edge load big-M for the >= side.
    pub load_hi: Vec<f64>,
    /// Per-edge load big-M for the <= side.
    pub load_lo: Vec<f64>,
}

/// Load lower bound max{0, q^j}.
pub fn load_lb(instance: &PdvrpInstance, node: Node) -> f64 {
    instance.demand(node).max(0.0)
}

/// Load upper bound min{C_i, C_i + q^j}.
pub fn load_ub(instance: &PdvrpInstance, i: usize, node: Node) -> f64 {
    let c = instance.vehicles[i].capacity;
    c.min(c + instance.demand(node))
}

/// Time horizon: sum of all travel times over the graph arcs plus all
/// service times. Any larger value would also be valid.
pub fn time_upper_bound(instance: &PdvrpInstance, graph: &TaskGraph, i: usize) -> f64 {
    let travel: f64 = graph
        .edges
        .iter()
        .map(|&(j, k)| instance.arc_time(i, j, k))
        .sum();
    let service: f64 = graph
        .vertices()
        .iter()
        .map(|&v| instance.service_time(v))
        .sum();
    travel + service
}

pub fn big_m_data(instance: &PdvrpInstance, graph: &TaskGraph, i: usize) -> BigMData {
    let b_bar = time_upper_bound(instance, graph, i);
    let mut time_m = Vec::with_capacity(graph.edges.len());
    let mut load_hi = Vec::with_capacity(graph.edges.len());
    let mut load_lo = Vec::with_capacity(graph.edges.len());
    for &(j, k) in &graph.edges {
        time_m.push(b_bar + instance.service_time(j) + instance.arc_time(i, j, k));
        load_hi.push(load_ub(instance, i, j) + instance.demand(k));
        load_lo.push(load_ub(instance, i, k) - instance.demand(k) - load_lb(instance, j));
    }
    BigMData {
        b_bar,
        time_m,
        load_hi,
        load_lo,
    }
}

/// Column map for one agent's block of variables inside a model.
#[derive(Debug, Clone)]
pub struct LocalBlock {
    pub agent: usize,
    pub graph: TaskGraph,
    /// Column of x_i^{jk} per edge index of `graph`.
    pub x_cols: Vec<usize>,
    /// Column of B_i^j per vertex (ordered as `graph.vertices()`).
    pub b_cols: Vec<usize>,
    /// Column of Q_i^j per vertex.
    pub q_cols: Vec<usize>,
}

impl LocalBlock {
    pub fn vertex_index(&self, node: Node) -> usize {
        match node {
            Node::Start => 0,
            Node::Request(j) => {
                1 + self
                    .graph
                    .requests
                    .binary_search(&j)
                    .expect("request not in local graph")
            }
            Node::End => 1 + self.graph.requests.len(),
        }
    }

    pub fn b_col(&self, node: Node) -> usize {
        self.b_cols[self.vertex_index(node)]
    }

    pub fn q_col(&self, node: Node) -> usize {
        self.q_cols[self.vertex_index(node)]
    }

    /// Column of the arc variable for edge (from, to), if admissible.
    pub fn x_col(&self, from: Node, to: Node) -> Option<usize> {
        self.graph
            .edges
            .iter()
            .position(|&e| e == (from, to))
            .map(|e| self.x_cols[e])
    }
}

/// Registers agent `i`'s variables (x per arc, B and Q per vertex) and emits
/// the linearized local constraint rows of Z_i.
pub fn build_local_constraints(
    model: &mut LinearModel,
    instance: &PdvrpInstance,
    graph: &TaskGraph,
    i: usize,
) -> Result<LocalBlock> {
    validate_graph(instance, graph)?;
    let big_m = big_m_data(instance, graph, i);
    let vertices = graph.vertices();

    let x_cols: Vec<usize> = graph
        .edges
        .iter()
        .map(|&(j, k)| {
            model.add_var(
                VarKind::Arc {
                    agent: i,
                    from: j,
                    to: k,
                },
                0.0,
                1.0,
                true,
                instance.arc_cost(i, j, k),
            )
        })
        .collect();
    let b_cols: Vec<usize> = vertices
        .iter()
        .map(|&v| {
            model.add_var(
                VarKind::Begin { agent: i, node: v },
                0.0,
                big_m.b_bar,
                false,
                0.0,
            )
        })
        .collect();
    let q_cols: Vec<usize> = vertices
        .iter()
        .map(|&v| {
            let (lb, ub) = if v == Node::Start {
                // Initial load constraint fixes Q_i^s.
                let q0 = instance.vehicles[i].initial_load;
                (q0, q0)
            } else {
                (load_lb(instance, v), load_ub(instance, i, v))
            };
            model.add_var(VarKind::Load { agent: i, node: v }, lb, ub, false, 0.0)
        })
        .collect();

    let block = LocalBlock {
        agent: i,
        graph: graph.clone(),
        x_cols,
        b_cols,
        q_cols,
    };
    let g = &block.graph;

    // Start: exactly one arc leaves s.
    let coeffs: Vec<_> = g
        .out_edges(Node::Start)
        .map(|e| (block.x_cols[e], 1.0))
        .collect();
    model.add_row(coeffs, Sense::Eq, 1.0, RowTag::Start { agent: i });

    // End: exactly one arc enters sigma.
    let coeffs: Vec<_> = g
        .in_edges(Node::End)
        .map(|e| (block.x_cols[e], 1.0))
        .collect();
    model.add_row(coeffs, Sense::Eq, 1.0, RowTag::End { agent: i });

    // Flow conservation at every request vertex.
    for &j in &g.requests {
        let node = Node::Request(j);
        let mut coeffs: Vec<(usize, f64)> =
            g.in_edges(node).map(|e| (block.x_cols[e], 1.0)).collect();
        coeffs.extend(g.out_edges(node).map(|e| (block.x_cols[e], -1.0)));
        model.add_row(
            coeffs,
            Sense::Eq,
            0.0,
            RowTag::Flow {
                agent: i,
                request: j,
            },
        );
    }

    // Pickup/delivery pairing: same vehicle serves both.
    for &j in &g.requests {
        if instance.requests[j].kind != RequestKind::Pickup {
            continue;
        }
        let pair = instance.requests[j].pair_id;
        let mut coeffs: Vec<(usize, f64)> = g
            .out_edges(Node::Request(j))
            .map(|e| (block.x_cols[e], 1.0))
            .collect();
        coeffs.extend(
            g.out_edges(Node::Request(pair))
                .map(|e| (block.x_cols[e], -1.0)),
        );
        model.add_row(
            coeffs,
            Sense::Eq,
            0.0,
            RowTag::Pairing {
                agent: i,
                pickup: j,
            },
        );
    }

    // Precedence: pickup before its delivery.
    for &j in &g.requests {
        if instance.requests[j].kind != RequestKind::Pickup {
            continue;
        }
        let pair = instance.requests[j].pair_id;
        model.add_row(
            vec![
                (block.b_col(Node::Request(j)), 1.0),
                (block.b_col(Node::Request(pair)), -1.0),
            ],
            Sense::Le,
            0.0,
            RowTag::Precedence {
                agent: i,
                pickup: j,
            },
        );
    }

    // Linearized time propagation, one row per arc:
    // B^k - B^j - M^{jk} x^{jk} >= d^j + t^{jk} - M^{jk}.
    for (e, &(j, k)) in g.edges.iter().enumerate() {
        let m = big_m.time_m[e];
        model.add_row(
            vec![
                (block.b_col(k), 1.0),
                (block.b_col(j), -1.0),
                (block.x_cols[e], -m),
            ],
            Sense::Ge,
            instance.service_time(j) + instance.arc_time(i, j, k) - m,
            RowTag::TimeProp { agent: i, edge: e },
        );
    }

    // Linearized load propagation, a pair of rows per arc:
    // Q^k - Q^j - W_hi x >= q^k - W_hi  and  Q^k - Q^j + W_lo x <= q^k + W_lo.
    for (e, &(j, k)) in g.edges.iter().enumerate() {
        let q_k = instance.demand(k);
        model.add_row(
            vec![
                (block.q_col(k), 1.0),
                (block.q_col(j), -1.0),
                (block.x_cols[e], -big_m.load_hi[e]),
            ],
            Sense::Ge,
            q_k - big_m.load_hi[e],
            RowTag::LoadLower { agent: i, edge: e },
        );
        model.add_row(
            vec![
                (block.q_col(k), 1.0),
                (block.q_col(j), -1.0),
                (block.x_cols[e], big_m.load_lo[e]),
            ],
            Sense::Le,
            q_k + big_m.load_lo[e],
            RowTag::LoadUpper { agent: i, edge: e },
        );
    }

    Ok(block)
}

fn validate_graph(instance: &PdvrpInstance, graph: &TaskGraph) -> Result<()> {
    if graph.n_requests != instance.n_requests() {
        return Err(Error::Model(
            "graph request count does not match instance".into(),
        ));
    }
    for &(j, k) in &graph.edges {
        if j == k || j == Node::End || k == Node::Start {
            return Err(Error::Model(format!("inadmissible arc {j:?} -> {k:?}")));
        }
    }
    for &j in &graph.requests {
        let pair = instance.requests[j].pair_id;
        if !graph.contains_request(pair) {
            return Err(Error::Model(format!(
                "request {j} present without its pair {pair}"
            )));
        }
    }
    Ok(())
}

/// Adds the coupling rows: for each request j, sum over agents of the arcs
/// leaving j must be at least `rhs`. Returns the row indices, one per request
/// (in request order).
pub fn build_coupling_rows(
    model: &mut LinearModel,
    blocks: &[LocalBlock],
    n_requests: usize,
    rhs: f64,
) -> Vec<usize> {
    let mut rows = Vec::with_capacity(n_requests);
    for j in 0..n_requests {
        let mut coeffs = Vec::new();
        for block in blocks {
            if block.graph.contains_request(j) {
                coeffs.extend(
                    block
                        .graph
                        .out_edges(Node::Request(j))
                        .map(|e| (block.x_cols[e], 1.0)),
                );
            }
        }
        rows.push(model.add_row(coeffs, Sense::Ge, rhs, RowTag::Coupling { request: j }));
    }
    rows
}

/// Builds the full centralized MILP: all Z_i blocks plus coupling rows with
/// right-hand side 1 and binary arc variables.
pub fn build_centralized_milp(instance: &PdvrpInstance) -> Result<(LinearModel, Vec<LocalBlock>)> {
    instance.check_coverage()?;
    let mut model = LinearModel::new();
    let mut blocks = Vec::with_capacity(instance.n_vehicles());
    for i in 0..instance.n_vehicles() {
        let graph = build_local_task_graph(instance, i)?;
        blocks.push(build_local_constraints(&mut model, instance, &graph, i)?);
    }
    build_coupling_rows(&mut model, &blocks, instance.n_requests(), 1.0);
    Ok((model, blocks))
}
