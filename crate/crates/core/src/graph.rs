//! Task graph of admissible arcs: vertices {s, sigma} plus the requests,
//! arcs between distinct vertices never leaving sigma or entering s.

use crate::error::{Error, Result};
pub use crate::instance::Node;
use crate::instance::PdvrpInstance;

/// Graph of admissible paths for one vehicle. In homogeneous mode every
/// vehicle shares the full graph; in heterogeneous mode the vertex set is
/// restricted to {s, sigma} plus the vehicle's local request set R_i.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskGraph {
    /// Total number of requests |R| in the instance (global index space).
    pub n_requests: usize,
    /// Requests present in this graph, sorted ascending.
    pub requests: Vec<usize>,
    /// Arcs (j, k), deterministic order: sources s, r_0, r_1, ...; targets in
    /// vertex order r_0, ..., sigma.
    pub edges: Vec<(Node, Node)>,
}

impl TaskGraph {
    pub fn vertices(&self) -> Vec<Node> {
        let mut v = Vec::with_capacity(self.requests.len() + 2);
        v.push(Node::Start);
        v.extend(self.requests.iter().map(|&j| Node::Request(j)));
        v.push(Node::End);
        v
    }

    pub fn contains_request(&self, j: usize) -> bool {
        self.requests.binary_search(&j).is_ok()
    }

    /// Arcs leaving `from`, as edge indices.
    pub fn out_edges(&self, from: Node) -> impl Iterator<Item = usize> + '_ {
        self.edges
            .iter()
            .enumerate()
            .filter(move |(_, &(j, _))| j == from)
            .map(|(e, _)| e)
    }

    /// Arcs entering `to`, as edge indices.
    pub fn in_edges(&self, to: Node) -> impl Iterator<Item = usize> + '_ {
        self.edges
            .iter()
            .enumerate()
            .filter(move |(_, &(_, k))| k == to)
            .map(|(e, _)| e)
    }
}

fn build_graph_over(n_requests: usize, requests: Vec<usize>) -> TaskGraph {
    let mut sources = vec![Node::Start];
    sources.extend(requests.iter().map(|&j| Node::Request(j)));
    let mut targets: Vec<Node> = requests.iter().map(|&j| Node::Request(j)).collect();
    targets.push(Node::End);
    let mut edges = Vec::new();
    for &j in &sources {
        for &k in &targets {
            if j != k {
                edges.push((j, k));
            }
        }
    }
    TaskGraph {
        n_requests,
        requests,
        edges,
    }
}

/// Builds the full task graph over all requests.
pub fn build_task_graph(instance: &PdvrpInstance) -> Result<TaskGraph> {
    if instance.n_pickups() == 0 {
        return Err(Error::Instance(
            "instance has no pickup/delivery pairs".into(),
        ));
    }
    let requests: Vec<usize> = (0..instance.n_requests()).collect();
    Ok(build_graph_over(instance.n_requests(), requests))
}

/// Builds the local task graph for vehicle `i`, restricted to R_i.
pub fn build_local_task_graph(instance: &PdvrpInstance, i: usize) -> Result<TaskGraph> {
    if instance.n_pickups() == 0 {
        return Err(Error::Instance(
            "instance has no pickup/delivery pairs".into(),
        ));
    }
    let requests = instance.local_request_set(i);
    Ok(build_graph_over(instance.n_requests(), requests))
}
