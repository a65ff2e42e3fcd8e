//! PDVRP problem instances: vehicles, pickup/delivery requests, geometry and
//! the derived travel-time/cost tables.
//!
//! Instances are stored as a self-describing JSON document (`format_version: 1`)
//! holding only the raw data; the arc tables are always recomputed on load so
//! that a round-trip through the file format cannot drift.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

/// Default vehicle speed in meters/second.
pub const DEFAULT_SPEED: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RequestKind {
    Pickup,
    Delivery,
}

/// A single pickup or delivery request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub id: usize,
    pub kind: RequestKind,
    pub position: [f64; 2],
    /// Signed load: positive for pickups, negative for deliveries.
    pub demand: f64,
    /// Service time in seconds.
    pub service_time: f64,
    /// Index of the matching request (pickup j pairs with delivery j + |P|).
    pub pair_id: usize,
}

/// A vehicle, with its start position and capacity data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vehicle {
    pub id: usize,
    pub start_position: [f64; 2],
    pub capacity: f64,
    pub initial_load: f64,
    /// Meters per second, > 0.
    pub speed: f64,
}

/// Mission end point: virtual (vehicles stop at their last location,
/// arcs into it are free) or a physical position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EndPoint {
    Virtual,
    Physical { position: [f64; 2] },
}

/// A vertex of the task graph: the start node, a request, or the end node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Node {
    Start,
    Request(usize),
    End,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdvrpInstance {
    pub format_version: u32,
    pub vehicles: Vec<Vehicle>,
    pub requests: Vec<Request>,
    pub end_point: EndPoint,
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

impl PdvrpInstance {
    /// Validates the instance invariants (pairing involution, demand signs,
    /// capacity bounds) and returns the instance on success.
    pub fn validate(self) -> Result<Self> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::Instance(format!(
                "unsupported format_version {}",
                self.format_version
            )));
        }
        if self.vehicles.is_empty() {
            return Err(Error::Instance("no vehicles".into()));
        }
        let r = self.requests.len();
        if r == 0 || r % 2 != 0 {
            return Err(Error::Instance(format!(
                "requests must come in pickup/delivery pairs, got {r}"
            )));
        }
        for (j, req) in self.requests.iter().enumerate() {
            if req.id != j {
                return Err(Error::Instance(format!("request {j} has id {}", req.id)));
            }
            if req.pair_id >= r || self.requests[req.pair_id].pair_id != j {
                return Err(Error::Instance(format!(
                    "pairing is not an involution at {j}"
                )));
            }
            match req.kind {
                RequestKind::Pickup => {
                    if req.demand <= 0.0 {
                        return Err(Error::Instance(format!(
                            "pickup {j} has demand {}",
                            req.demand
                        )));
                    }
                    let d = &self.requests[req.pair_id];
                    if d.kind != RequestKind::Delivery || d.demand != -req.demand {
                        return Err(Error::Instance(format!(
                            "pickup {j} not matched by an opposite delivery"
                        )));
                    }
                }
                RequestKind::Delivery => {
                    if req.demand >= 0.0 {
                        return Err(Error::Instance(format!(
                            "delivery {j} has demand {}",
                            req.demand
                        )));
                    }
                }
            }
            if req.service_time < 0.0 {
                return Err(Error::Instance(format!("negative service time at {j}")));
            }
        }
        let n_pickups = self
            .requests
            .iter()
            .filter(|r| r.kind == RequestKind::Pickup)
            .count();
        if 2 * n_pickups != r {
            return Err(Error::Instance("|P| != |D|".into()));
        }
        for (i, v) in self.vehicles.iter().enumerate() {
            if v.id != i {
                return Err(Error::Instance(format!("vehicle {i} has id {}", v.id)));
            }
            if v.capacity < 0.0 || v.initial_load < 0.0 || v.initial_load > v.capacity {
                return Err(Error::Instance(format!(
                    "vehicle {i} capacity/load out of range"
                )));
            }
            if v.speed <= 0.0 {
                return Err(Error::Instance(format!(
                    "vehicle {i} has non-positive speed"
                )));
            }
        }
        Ok(self)
    }

    pub fn n_vehicles(&self) -> usize {
        self.vehicles.len()
    }

    pub fn n_requests(&self) -> usize {
        self.requests.len()
    }

    pub fn n_pickups(&self) -> usize {
        self.requests.len() / 2
    }

    /// Position of a node as seen by vehicle `i`. `None` for a virtual end point.
    pub fn node_position(&self, i: usize, node: Node) -> Option<[f64; 2]> {
        match node {
            Node::Start => Some(self.vehicles[i].start_position),
            Node::Request(j) => Some(self.requests[j].position),
            Node::End => match self.end_point {
                EndPoint::Virtual => None,
                EndPoint::Physical { position } => Some(position),
            },
        }
    }

    /// Arc cost c_i^{jk}: Euclidean distance; arcs into a virtual end are free.
    pub fn arc_cost(&self, i: usize, from: Node, to: Node) -> f64 {
        match (self.node_position(i, from), self.node_position(i, to)) {
            (Some(a), Some(b)) => dist(a, b),
            _ => 0.0,
        }
    }

    /// Arc travel time t_i^{jk} = distance / speed.
    pub fn arc_time(&self, i: usize, from: Node, to: Node) -> f64 {
        self.arc_cost(i, from, to) / self.vehicles[i].speed
    }

    /// Service time d^j; zero at the start and end nodes.
    pub fn service_time(&self, node: Node) -> f64 {
        match node {
            Node::Request(j) => self.requests[j].service_time,
            _ => 0.0,
        }
    }

    /// Demand q^j; zero at the start and end nodes.
    pub fn demand(&self, node: Node) -> f64 {
        match node {
            Node::Request(j) => self.requests[j].demand,
            _ => 0.0,
        }
    }

    /// True when every vehicle can carry every request (C_i >= max q^j).
    pub fn is_homogeneous(&self) -> bool {
        let max_q = self
            .requests
            .iter()
            .map(|r| r.demand)
            .fold(0.0_f64, f64::max);
        self.vehicles.iter().all(|v| v.capacity >= max_q)
    }

    /// Local request set R_i: the pairs whose pickup demand fits vehicle `i`'s
    /// capacity. A pickup and its delivery are always included together.
    pub fn local_request_set(&self, i: usize) -> Vec<usize> {
        let cap = self.vehicles[i].capacity;
        let mut set = Vec::new();
        for req in &self.requests {
            if req.kind == RequestKind::Pickup && cap >= req.demand {
                set.push(req.id);
                set.push(req.pair_id);
            }
        }
        set.sort_unstable();
        set
    }

    /// Heterogeneous feasibility: every request must belong to at least one R_i.
    pub fn check_coverage(&self) -> Result<()> {
        let mut covered = vec![false; self.requests.len()];
        for i in 0..self.n_vehicles() {
            for j in self.local_request_set(i) {
                covered[j] = true;
            }
        }
        match covered.iter().position(|&c| !c) {
            None => Ok(()),
            Some(j) => Err(Error::Infeasible(format!(
                "request {j} cannot be served by any vehicle"
            ))),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let inst: PdvrpInstance = serde_json::from_str(s)?;
        inst.validate()
    }
}

/// Axis-aligned rectangle used by the random generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Area {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Area {
    pub fn unit() -> Self {
        Area {
            min: [0.0, 0.0],
            max: [1.0, 1.0],
        }
    }

    pub fn width(&self) -> f64 {
        self.max[0] - self.min[0]
    }
}

/// Options for [`generate_random_instance`].
#[derive(Debug, Clone)]
pub struct GenOptions {
    pub area: Area,
    pub capacity_range: (f64, f64),
    pub demand_range: (f64, f64),
    pub service_time_range: (f64, f64),
    /// Pickups in the right half of the area, deliveries in the left half.
    pub split_halves: bool,
    /// Homogeneous: capacities drawn so that C_i >= max q^j always holds.
    /// Heterogeneous: capacities may fall below some demands; the generator
    /// resamples until every request is coverable by at least one vehicle.
    pub heterogeneous: bool,
    pub speed: f64,
    pub end_point: EndPoint,
}

impl Default for GenOptions {
    fn default() -> Self {
        GenOptions {
            area: Area {
                min: [0.0, 0.0],
                max: [100.0, 100.0],
            },
            capacity_range: (1.0, 1.0),
            demand_range: (0.51, 1.0),
            service_time_range: (3.0, 5.0),
            split_halves: true,
            heterogeneous: false,
            speed: DEFAULT_SPEED,
            end_point: EndPoint::Virtual,
        }
    }
}

/// Deterministically generates a random instance for a fixed seed.
pub fn generate_random_instance(
    seed: u64,
    n_vehicles: usize,
    n_pickups: usize,
    opts: &GenOptions,
) -> Result<PdvrpInstance> {
    if n_vehicles == 0 || n_pickups == 0 {
        return Err(Error::Instance(
            "need at least one vehicle and one pickup".into(),
        ));
    }
    if opts.area.max[0] <= opts.area.min[0] || opts.area.max[1] <= opts.area.min[1] {
        return Err(Error::Instance("empty area".into()));
    }
    let (dlo, dhi) = opts.demand_range;
    let (clo, chi) = opts.capacity_range;
    if !(dlo <= dhi && clo <= chi && dlo > 0.0) {
        return Err(Error::Instance(
            "inconsistent demand/capacity ranges".into(),
        ));
    }
    if !opts.heterogeneous && dhi > clo {
        return Err(Error::Instance(
            "homogeneous mode requires demand upper bound <= capacity lower bound".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let area = opts.area;
    let mid_x = area.min[0] + area.width() / 2.0;
    let sample_point = |rng: &mut ChaCha8Rng, half: Option<bool>| -> [f64; 2] {
        let (xlo, xhi) = match (opts.split_halves, half) {
            (true, Some(true)) => (mid_x, area.max[0]), // right half: pickups
            (true, Some(false)) => (area.min[0], mid_x), // left half: deliveries
            _ => (area.min[0], area.max[0]),
        };
        [
            rng.gen_range(xlo..xhi),
            rng.gen_range(area.min[1]..area.max[1]),
        ]
    };

    let vehicles: Vec<Vehicle> = (0..n_vehicles)
        .map(|i| Vehicle {
            id: i,
            start_position: sample_point(&mut rng, None),
            capacity: rng.gen_range(clo..=chi),
            initial_load: 0.0,
            speed: opts.speed,
        })
        .collect();

    let mut requests = Vec::with_capacity(2 * n_pickups);
    for j in 0..n_pickups {
        let demand = rng.gen_range(dlo..=dhi);
        let service_p = rng.gen_range(opts.service_time_range.0..=opts.service_time_range.1);
        let service_d = rng.gen_range(opts.service_time_range.0..=opts.service_time_range.1);
        requests.push(Request {
            id: j,
            kind: RequestKind::Pickup,
            position: sample_point(&mut rng, Some(true)),
            demand,
            service_time: service_p,
            pair_id: j + n_pickups,
        });
        requests.push(Request {
            id: j + n_pickups,
            kind: RequestKind::Delivery,
            position: sample_point(&mut rng, Some(false)),
            demand: -demand,
            service_time: service_d,
            pair_id: j,
        });
    }
    // Requests were pushed pickup/delivery interleaved; reorder to P then D.
    requests.sort_by_key(|r| r.id);

    let inst = PdvrpInstance {
        format_version: FORMAT_VERSION,
        vehicles,
        requests,
        end_point: opts.end_point,
    }
    .validate()?;

    if opts.heterogeneous {
        // Resample capacities until every pair is coverable. Deterministic:
        // the rng stream continues from the draws above.
        let mut inst = inst;
        for _ in 0..1000 {
            if inst.check_coverage().is_ok() {
                return Ok(inst);
            }
            for v in &mut inst.vehicles {
                v.capacity = rng.gen_range(clo..=chi);
            }
        }
        inst.check_coverage()?;
        Ok(inst)
    } else {
        Ok(inst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic() {
        let a = generate_random_instance(7, 2, 2, &GenOptions::default()).unwrap();
        let b = generate_random_instance(7, 2, 2, &GenOptions::default()).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        let c = generate_random_instance(8, 2, 2, &GenOptions::default()).unwrap();
        assert_ne!(a.to_json().unwrap(), c.to_json().unwrap());
    }

    #[test]
    fn service_times_in_range() {
        let inst = generate_random_instance(3, 2, 4, &GenOptions::default()).unwrap();
        for r in &inst.requests {
            assert!(r.service_time >= 3.0 && r.service_time <= 5.0);
        }
    }

    #[test]
    fn homogeneous_capacity_dominates_demands() {
        for seed in 0..100 {
            let inst = generate_random_instance(seed, 3, 3, &GenOptions::default()).unwrap();
            assert!(inst.is_homogeneous(), "seed {seed}");
        }
    }

    #[test]
    fn round_trip_identity() {
        let inst = generate_random_instance(11, 3, 2, &GenOptions::default()).unwrap();
        let json = inst.to_json().unwrap();
        let back = PdvrpInstance::from_json(&json).unwrap();
        assert_eq!(inst, back);
    }

    #[test]
    fn local_request_set_by_capacity() {
        // C_1 = 2, pickup demands {1, 3} -> R_1 contains pair 0 only.
        let mut inst = generate_random_instance(1, 2, 2, &GenOptions::default()).unwrap();
        inst.vehicles[0].capacity = 4.0;
        inst.vehicles[1].capacity = 2.0;
        inst.requests[0].demand = 1.0;
        inst.requests[2].demand = -1.0;
        inst.requests[1].demand = 3.0;
        inst.requests[3].demand = -3.0;
        let inst = inst.validate().unwrap();
        assert_eq!(inst.local_request_set(1), vec![0, 2]);
        assert_eq!(inst.local_request_set(0), vec![0, 1, 2, 3]);
        inst.check_coverage().unwrap();
    }

    #[test]
    fn uncoverable_request_flagged() {
        let mut inst = generate_random_instance(1, 1, 1, &GenOptions::default()).unwrap();
        inst.vehicles[0].capacity = 0.1;
        inst.requests[0].demand = 1.0;
        inst.requests[1].demand = -1.0;
        // bypass validate's initial_load <= capacity check
        inst.vehicles[0].initial_load = 0.0;
        let inst = inst.validate().unwrap();
        assert!(inst.local_request_set(0).is_empty());
        assert!(inst.check_coverage().is_err());
    }

    #[test]
    fn virtual_end_arcs_are_free() {
        let inst = generate_random_instance(5, 1, 1, &GenOptions::default()).unwrap();
        assert_eq!(inst.arc_cost(0, Node::Request(0), Node::End), 0.0);
        assert_eq!(inst.arc_time(0, Node::Request(0), Node::End), 0.0);
        assert!(inst.arc_cost(0, Node::Start, Node::Request(0)) >= 0.0);
    }
}
