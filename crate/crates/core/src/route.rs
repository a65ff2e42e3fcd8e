//! Per-vehicle route representation extracted from a solved model.

use crate::builder::LocalBlock;
use crate::error::{Error, Result};
use crate::graph::{Node, TaskGraph};
use crate::instance::PdvrpInstance;

/// One vehicle's plan: arc indicators over its local task graph together with
/// the begin-time and load value attached to every vertex.
#[derive(Debug, Clone)]
pub struct AgentRoute {
    pub agent: usize,
    /// Requests the vehicle's local graph spans (sorted).
    pub requests: Vec<usize>,
    /// (from, to, x) per local edge, in graph edge order.
    pub arcs: Vec<(Node, Node, f64)>,
    /// Begin time per local vertex (graph vertex order).
    pub begin: Vec<f64>,
    /// Load per local vertex (graph vertex order).
    pub load: Vec<f64>,
}

impl AgentRoute {
    /// Pulls the block's variable values out of a full solution vector.
    pub fn from_solution(block: &LocalBlock, x: &[f64]) -> AgentRoute {
        let arcs = block
            .graph
            .edges
            .iter()
            .zip(&block.x_cols)
            .map(|(&(from, to), &col)| (from, to, x[col]))
            .collect();
        let begin = block.b_cols.iter().map(|&c| x[c]).collect();
        let load = block.q_cols.iter().map(|&c| x[c]).collect();
        AgentRoute {
            agent: block.agent,
            requests: block.graph.requests.clone(),
            arcs,
            begin,
            load,
        }
    }

    /// Builds a route from an explicit visit order (start and end included):
    /// arcs along consecutive order entries, begin times and loads propagated
    /// at their earliest feasible values, unvisited vertices parked inside
    /// their variable bounds.
    pub fn from_order(
        instance: &PdvrpInstance,
        graph: &TaskGraph,
        agent: usize,
        order: &[Node],
    ) -> Result<AgentRoute> {
        let vertices = graph.vertices();
        let vidx = |node: Node| -> Result<usize> {
            vertices.iter().position(|&v| v == node).ok_or_else(|| {
                Error::Internal(format!("vertex {node:?} not in agent {agent}'s graph"))
            })
        };
        let mut arcs: Vec<(Node, Node, f64)> =
            graph.edges.iter().map(|&(f, t)| (f, t, 0.0)).collect();
        for w in order.windows(2) {
            let arc = arcs
                .iter_mut()
                .find(|a| a.0 == w[0] && a.1 == w[1])
                .ok_or_else(|| {
                    Error::Internal(format!(
                        "arc {:?}->{:?} not in agent {agent}'s graph",
                        w[0], w[1]
                    ))
                })?;
            arc.2 = 1.0;
        }
        let mut begin = vec![0.0; vertices.len()];
        let mut load = vec![0.0; vertices.len()];
        load[0] = instance.vehicles[agent].initial_load;
        for w in order.windows(2) {
            let (a, b) = (vidx(w[0])?, vidx(w[1])?);
            begin[b] =
                begin[a] + instance.service_time(w[0]) + instance.arc_time(agent, w[0], w[1]);
            load[b] = load[a] + instance.demand(w[1]);
        }
        for (pos, &node) in vertices.iter().enumerate() {
            if !order.contains(&node) {
                load[pos] = instance.demand(node).max(0.0);
            }
        }
        Ok(AgentRoute {
            agent,
            requests: graph.requests.clone(),
            arcs,
            begin,
            load,
        })
    }

    pub fn arc_value(&self, from: Node, to: Node) -> f64 {
        self.arcs
            .iter()
            .find(|&&(f, t, _)| f == from && t == to)
            .map_or(0.0, |&(_, _, v)| v)
    }

    /// Requests this route actually serves (arc into the request selected).
    pub fn served_requests(&self) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .arcs
            .iter()
            .filter(|&&(_, to, v)| v > 0.5 && matches!(to, Node::Request(_)))
            .map(|&(_, to, _)| match to {
                Node::Request(j) => j,
                _ => unreachable!(),
            })
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Walks the selected arcs from the start vertex to the end vertex and
    /// returns the visit sequence. Errors if the indicators do not describe a
    /// single simple path.
    pub fn visit_order(&self) -> Result<Vec<Node>> {
        let mut order = vec![Node::Start];
        let mut cur = Node::Start;
        let n = self.requests.len();
        for _ in 0..=n + 1 {
            if cur == Node::End {
                return Ok(order);
            }
            let mut next = None;
            for &(from, to, v) in &self.arcs {
                if from == cur && v > 0.5 {
                    if next.is_some() {
                        return Err(Error::Internal(format!(
                            "agent {}: multiple outgoing arcs selected at {cur:?}",
                            self.agent
                        )));
                    }
                    next = Some(to);
                }
            }
            match next {
                Some(to) => {
                    order.push(to);
                    cur = to;
                }
                None => {
                    return Err(Error::Internal(format!(
                        "agent {}: no outgoing arc selected at {cur:?}",
                        self.agent
                    )))
                }
            }
        }
        Err(Error::Internal(format!(
            "agent {}: route has a cycle",
            self.agent
        )))
    }

    /// Travel cost of the selected arcs.
    pub fn cost(&self, instance: &PdvrpInstance) -> f64 {
        self.arcs
            .iter()
            .filter(|&&(_, _, v)| v > 0.5)
            .map(|&(from, to, _)| instance.arc_cost(self.agent, from, to))
            .sum()
    }
}
