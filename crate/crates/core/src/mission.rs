//! Post-optimization execution: task deduplication through an Auth node and
//! kinematic playback of the final routes.
//!
//! Playback moves point masses along straight segments at the vehicle speed.
//! Before heading to a task, a robot asks the Auth node for it; a denied task
//! is skipped and the robot proceeds towards its next granted location. When
//! a robot is denied a pickup it also skips the paired delivery — it never
//! picked the load up, and the robot that won the pickup carries the pair's
//! delivery in its own route.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluate::{check_local, EVAL_TOL};
use crate::graph::Node;
use crate::instance::{PdvrpInstance, RequestKind};
use crate::route::AgentRoute;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TaskStatus {
    Unclaimed,
    Granted(usize),
    Done(usize),
}

/// Run-time arbiter: each task goes to its first requester.
#[derive(Debug, Clone)]
pub struct AuthLedger {
    pub status: Vec<TaskStatus>,
}

impl AuthLedger {
    pub fn new(n_tasks: usize) -> AuthLedger {
        AuthLedger {
            status: vec![TaskStatus::Unclaimed; n_tasks],
        }
    }

    /// First-come grant; the caller serializes requests in simulation-time
    /// order and resolves simultaneous requests deterministically.
    pub fn authorize(&mut self, robot: usize, task: usize) -> Result<bool> {
        match self.status.get(task) {
            None => Err(Error::Protocol(format!("unknown task {task}"))),
            Some(TaskStatus::Unclaimed) => {
                self.status[task] = TaskStatus::Granted(robot);
                Ok(true)
            }
            Some(_) => Ok(false),
        }
    }

    pub fn is_unclaimed(&self, task: usize) -> bool {
        matches!(self.status.get(task), Some(TaskStatus::Unclaimed))
    }

    pub fn mark_done(&mut self, robot: usize, task: usize) -> Result<()> {
        match self.status.get(task) {
            Some(TaskStatus::Granted(r)) if *r == robot => {
                self.status[task] = TaskStatus::Done(robot);
                Ok(())
            }
            other => Err(Error::Protocol(format!(
                "robot {robot} finishing task {task} it does not hold ({other:?})"
            ))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TimelineEvent {
    pub time: f64,
    pub robot: usize,
    pub kind: EventKind,
    pub position: [f64; 2],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    Depart { towards: usize },
    Arrive { task: usize },
    ServiceDone { task: usize },
    Denied { task: usize },
    Finished,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RobotReport {
    pub robot: usize,
    /// Straight segments actually driven.
    pub polyline: Vec<[f64; 2]>,
    pub actuated_cost: f64,
    pub finish_time: f64,
    pub performed: Vec<usize>,
    pub skipped: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExecutionReport {
    pub robots: Vec<RobotReport>,
    pub timeline: Vec<TimelineEvent>,
    /// Requests actually performed, sorted.
    pub served: Vec<usize>,
    pub total_actuated_cost: f64,
    /// Cost of the routes as planned, before deduplication.
    pub total_planned_cost: f64,
    pub makespan: f64,
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// First task in the robot's remaining plan that the ledger would still
/// grant, accounting for the denial cascade (a claimed pickup drags its
/// delivery along). Read-only: no denials are recorded here.
fn next_claimable(
    state: &RobotState,
    ledger: &AuthLedger,
    instance: &PdvrpInstance,
) -> Option<usize> {
    let mut cascade: Vec<usize> = Vec::new();
    for &task in &state.pending {
        if state.skipped.contains(&task) || cascade.contains(&task) {
            continue;
        }
        if ledger.is_unclaimed(task) {
            return Some(task);
        }
        let req = &instance.requests[task];
        if req.kind == RequestKind::Pickup {
            cascade.push(req.pair_id);
        }
    }
    None
}

/// Pending decision point of one robot.
struct Wakeup {
    time: f64,
    robot: usize,
}

impl PartialEq for Wakeup {
    fn eq(&self, other: &Self) -> bool {
        self.time == other.time && self.robot == other.robot
    }
}
impl Eq for Wakeup {}
impl PartialOrd for Wakeup {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Wakeup {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap: earliest time first, ties by robot id.
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.robot.cmp(&self.robot))
    }
}

struct RobotState {
    position: [f64; 2],
    /// Remaining planned task visits, front first.
    pending: std::collections::VecDeque<usize>,
    performed: Vec<usize>,
    skipped: Vec<usize>,
    polyline: Vec<[f64; 2]>,
    actuated: f64,
    finish: f64,
    done: bool,
}

/// Discrete-event playback of the final routes.
pub fn playback(instance: &PdvrpInstance, routes: &[AgentRoute]) -> Result<ExecutionReport> {
    if routes.len() != instance.n_vehicles() {
        return Err(Error::Protocol("one route per vehicle required".into()));
    }
    for route in routes {
        check_local(instance, route, EVAL_TOL)?;
    }

    let mut ledger = AuthLedger::new(instance.n_requests());
    let mut timeline = Vec::new();
    let mut heap = BinaryHeap::new();
    let mut robots: Vec<RobotState> = Vec::with_capacity(routes.len());
    for route in routes {
        let order = route.visit_order()?;
        let pending = order
            .iter()
            .filter_map(|n| match n {
                Node::Request(j) => Some(*j),
                _ => None,
            })
            .collect();
        let start = instance.vehicles[route.agent].start_position;
        robots.push(RobotState {
            position: start,
            pending,
            performed: Vec::new(),
            skipped: Vec::new(),
            polyline: vec![start],
            actuated: 0.0,
            finish: 0.0,
            done: false,
        });
        heap.push(Wakeup {
            time: 0.0,
            robot: route.agent,
        });
    }

    while let Some(Wakeup { time, robot: first }) = heap.pop() {
        // Robots waking at the same instant contend for grants: the one whose
        // next grantable task is closest (in travel time) requests first,
        // with robot id as the final tie-break.
        let mut batch = vec![first];
        while let Some(w) = heap.peek() {
            if w.time == time {
                batch.push(heap.pop().expect("peeked").robot);
            } else {
                break;
            }
        }
        batch.sort_unstable();
        while !batch.is_empty() {
            let mut pick = 0usize;
            let mut best = f64::INFINITY;
            for (bi, &r) in batch.iter().enumerate() {
                if let Some(task) = next_claimable(&robots[r], &ledger, instance) {
                    let travel = dist(robots[r].position, instance.requests[task].position)
                        / instance.vehicles[r].speed;
                    if travel < best {
                        best = travel;
                        pick = bi;
                    }
                }
            }
            let robot = batch.remove(pick);
            let speed = instance.vehicles[robot].speed;
            // Claim the next authorized task; denials are instantaneous.
            let mut target = None;
            while let Some(task) = robots[robot].pending.pop_front() {
                if robots[robot].skipped.contains(&task) {
                    continue;
                }
                if ledger.authorize(robot, task)? {
                    target = Some(task);
                    break;
                }
                timeline.push(TimelineEvent {
                    time,
                    robot,
                    kind: EventKind::Denied { task },
                    position: robots[robot].position,
                });
                robots[robot].skipped.push(task);
                // A denied pickup takes its delivery down with it.
                let req = &instance.requests[task];
                if req.kind == RequestKind::Pickup {
                    robots[robot].skipped.push(req.pair_id);
                }
            }

            match target {
                Some(task) => {
                    let state = &mut robots[robot];
                    let from = state.position;
                    let to = instance.requests[task].position;
                    timeline.push(TimelineEvent {
                        time,
                        robot,
                        kind: EventKind::Depart { towards: task },
                        position: from,
                    });
                    let travel = dist(from, to) / speed;
                    let arrive = time + travel;
                    timeline.push(TimelineEvent {
                        time: arrive,
                        robot,
                        kind: EventKind::Arrive { task },
                        position: to,
                    });
                    let leave = arrive + instance.requests[task].service_time;
                    timeline.push(TimelineEvent {
                        time: leave,
                        robot,
                        kind: EventKind::ServiceDone { task },
                        position: to,
                    });
                    state.actuated += dist(from, to);
                    state.position = to;
                    state.polyline.push(to);
                    state.performed.push(task);
                    ledger.mark_done(robot, task)?;
                    heap.push(Wakeup { time: leave, robot });
                }
                None => {
                    // Route exhausted: head for the end point.
                    let state = &mut robots[robot];
                    let mut end_time = time;
                    if let Some(end_pos) = instance.node_position(robot, Node::End) {
                        if dist(state.position, end_pos) > 0.0 {
                            end_time += dist(state.position, end_pos) / speed;
                            state.actuated += dist(state.position, end_pos);
                            state.position = end_pos;
                            state.polyline.push(end_pos);
                        }
                    }
                    state.finish = end_time;
                    state.done = true;
                    timeline.push(TimelineEvent {
                        time: end_time,
                        robot,
                        kind: EventKind::Finished,
                        position: state.position,
                    });
                }
            }
        }
    }

    // Every task some route contained must be done exactly once.
    let mut served: Vec<usize> = robots
        .iter()
        .flat_map(|r| r.performed.iter().copied())
        .collect();
    served.sort_unstable();
    let before = served.len();
    served.dedup();
    if served.len() != before {
        return Err(Error::Internal("a task was performed twice".into()));
    }

    let total_planned_cost = routes.iter().map(|r| r.cost(instance)).sum();
    let makespan = robots.iter().map(|r| r.finish).fold(0.0, f64::max);
    let total_actuated_cost = robots.iter().map(|r| r.actuated).sum();
    let reports = robots
        .into_iter()
        .enumerate()
        .map(|(i, r)| RobotReport {
            robot: i,
            polyline: r.polyline,
            actuated_cost: r.actuated,
            finish_time: r.finish,
            performed: r.performed,
            skipped: r.skipped,
        })
        .collect();
    Ok(ExecutionReport {
        robots: reports,
        timeline,
        served,
        total_actuated_cost,
        total_planned_cost,
        makespan,
    })
}

/// Serializes a report as pretty JSON (per-robot polylines included, for
/// external plotting).
pub fn write_report(w: &mut impl std::io::Write, report: &ExecutionReport) -> Result<()> {
    let s = serde_json::to_string_pretty(report)?;
    writeln!(w, "{s}")?;
    Ok(())
}
