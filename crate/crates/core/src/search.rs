/*
  Copyright 2026 The ctplan Authors

  Licensed under the Apache License, Version 2.0 (the "License");
  you may not use this file except in compliance with the License.
  You may obtain a copy of the License at

      http://www.apache.org/licenses/LICENSE-2.0

  Unless required by applicable law or agreed to in writing, software
  distributed under the License is distributed on an "AS IS" BASIS,
  WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
  See the License for the specific language governing permissions and
  limitations under the License.
*/
//! Weighted A* over the lattice, the intercept heuristic and planning with
//! a root path as experience.

use rustc_hash::{FxHashMap, FxHashSet};
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::BinaryHeap;
use thiserror::Error;

use crate::kinematics::ObjectPose;
use crate::lattice::{GoalPose, Lattice, Primitive, State};

/// Heuristic value used when the object can never be intercepted.
pub const NO_INTERCEPT: f64 = 1.0e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BudgetPurpose {
    RootPath,
    Bounded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchBudget {
    pub max_expansions: usize,
    pub purpose: BudgetPurpose,
}

impl SearchBudget {
    pub fn root(max_expansions: usize) -> Self {
        assert!(max_expansions > 0);
        SearchBudget {
            max_expansions,
            purpose: BudgetPurpose::RootPath,
        }
    }

    pub fn bounded(max_expansions: usize) -> Self {
        assert!(max_expansions > 0);
        SearchBudget {
            max_expansions,
            purpose: BudgetPurpose::Bounded,
        }
    }
}

/// Time-ordered sequence of states joined by primitives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Path {
    pub states: Vec<State>,
    pub primitives: Vec<Primitive>,
    pub goal: GoalPose,
    pub terminal_grasp: bool,
}

impl Path {
    /// A path that holds only its start state.
    pub fn single(state: State, goal: GoalPose) -> Self {
        Path {
            states: vec![state],
            primitives: Vec::new(),
            goal,
            terminal_grasp: false,
        }
    }

    pub fn first(&self) -> &State {
        &self.states[0]
    }

    pub fn last(&self) -> &State {
        self.states.last().expect("paths are non-empty")
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Duration in seconds.
    pub fn cost(&self, dt: f64) -> f64 {
        (self.last().t - self.first().t) as f64 * dt
    }

    pub fn index_of(&self, s: &State) -> Option<usize> {
        let i = self.states.partition_point(|p| p.t < s.t);
        (i < self.states.len() && self.states[i] == *s).then_some(i)
    }

    pub fn index_at_time(&self, t: u32) -> Option<usize> {
        let i = self.states.partition_point(|p| p.t < t);
        (i < self.states.len() && self.states[i].t == t).then_some(i)
    }

    /// States before the grasp terminal, or all states if there is none.
    pub fn pre_grasp(&self) -> &[State] {
        if self.terminal_grasp {
            &self.states[..self.states.len() - 1]
        } else {
            &self.states
        }
    }

    /// The suffix starting at state index `i`.
    pub fn suffix(&self, i: usize) -> Path {
        Path {
            states: self.states[i..].to_vec(),
            primitives: self.primitives[i..].to_vec(),
            goal: self.goal,
            terminal_grasp: self.terminal_grasp,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReplayError {
    #[error("path is malformed: {0}")]
    Malformed(String),
    #[error("edge {index} ({kind}) does not match its primitive")]
    Mismatch { index: usize, kind: &'static str },
    #[error("edge {index} ({kind}) collides")]
    Collision { index: usize, kind: &'static str },
    #[error("grasp at edge {index} fails")]
    GraspFailed { index: usize },
}

/// Replay `path` primitive by primitive. Grasps close on `target`; all
/// collisions are checked against `actual`.
pub fn replay(
    lat: &Lattice,
    path: &Path,
    target: &ObjectPose,
    actual: &ObjectPose,
) -> Result<(), ReplayError> {
    if path.states.is_empty() || path.primitives.len() + 1 != path.states.len() {
        return Err(ReplayError::Malformed("state and primitive counts".into()));
    }
    if path.state_collides_at_start(lat, actual) {
        return Err(ReplayError::Collision {
            index: 0,
            kind: "start",
        });
    }
    let n = path.primitives.len();
    for (i, prim) in path.primitives.iter().enumerate() {
        let a = &path.states[i];
        let b = &path.states[i + 1];
        let kind = prim.kind_name();
        let mismatch = || ReplayError::Mismatch { index: i, kind };
        if b.t != a.t + prim.steps() || !lat.in_limits(&b.q) {
            return Err(mismatch());
        }
        match *prim {
            Primitive::Joint { joint, dir, .. } => {
                let j = joint as usize;
                if j >= lat.dof() || prim.steps() != lat.step_durations[j] {
                    return Err(mismatch());
                }
                for k in 0..lat.dof() {
                    let expect = if k == j {
                        a.q[k] + dir as i32 * lat.step_cells[j]
                    } else {
                        a.q[k]
                    };
                    if b.q[k] != expect {
                        return Err(mismatch());
                    }
                }
                if !lat.motion_free(a, b, Some(actual)) {
                    return Err(ReplayError::Collision { index: i, kind });
                }
            }
            Primitive::Wait => {
                if a.q != b.q {
                    return Err(mismatch());
                }
                if !lat.motion_free(a, b, Some(actual)) {
                    return Err(ReplayError::Collision { index: i, kind });
                }
            }
            Primitive::Latch => {
                if !lat.latch_motion_ok(a, b, None) {
                    return Err(mismatch());
                }
                if !lat.motion_free(a, b, Some(actual)) {
                    return Err(ReplayError::Collision { index: i, kind });
                }
            }
            Primitive::DynamicGrasp { .. } => {
                if i + 1 != n || !path.terminal_grasp {
                    return Err(mismatch());
                }
                let r = lat.dynamic_grasp_towards(a, target, actual);
                if !r.success {
                    return Err(ReplayError::GraspFailed { index: i });
                }
                if r.terminal != *b {
                    return Err(mismatch());
                }
            }
        }
    }
    Ok(())
}

impl Path {
    fn state_collides_at_start(&self, lat: &Lattice, actual: &ObjectPose) -> bool {
        lat.state_collides(self.first(), Some(actual))
    }
}

/// Result of one search call.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanResult {
    pub path: Option<Path>,
    pub expansions: usize,
}

impl PlanResult {
    pub fn success(&self) -> bool {
        self.path.is_some()
    }
}

#[derive(Debug, Clone, Copy)]
enum Edge {
    Start,
    Primitive(Primitive),
    /// Jump along the experience path from the parent's index to `to`.
    Shortcut { from: usize, to: usize },
}

struct Node {
    state: State,
    g: f64,
    parent: u32,
    edge: Edge,
    terminal: bool,
    closed: bool,
}

#[derive(PartialEq)]
struct OpenEntry {
    f: f64,
    g: f64,
    key: u64,
    node: u32,
}

impl Eq for OpenEntry {}

impl Ord for OpenEntry {
    // BinaryHeap is a max-heap: invert so the smallest f pops first, then
    // the larger g, then the smaller key.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .f
            .total_cmp(&self.f)
            .then(self.g.total_cmp(&other.g))
            .then(other.key.cmp(&self.key))
    }
}

impl PartialOrd for OpenEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Experience data prepared for one goal.
struct Experience<'p> {
    path: &'p Path,
    index: FxHashMap<u64, usize>,
    shortcut: usize,
    /// Shortcuts are valid from indices strictly greater than this.
    blocked_before: Option<usize>,
    /// Keys of root states up to the replan cutoff. When the search starts
    /// on the root, states up to the cutoff must come from this set.
    pinned: Option<FxHashSet<u64>>,
}

/// Weighted A* planner bound to a lattice.
#[derive(Debug, Clone, Copy)]
pub struct Planner<'a> {
    pub lattice: &'a Lattice,
    pub lambda: f64,
    pub weight: f64,
}

impl<'a> Planner<'a> {
    pub fn new(lattice: &'a Lattice, lambda: f64, weight: f64) -> Self {
        Planner {
            lattice,
            lambda,
            weight,
        }
    }

    /// Smallest `tau >= 0` such that an end effector moving at its speed
    /// bound from its position at `s` can meet the object at `t(s) + tau`.
    pub fn intercept_time(&self, s: &State, obj: &ObjectPose) -> f64 {
        let lat = self.lattice;
        let ee = lat.ee(s);
        let o = lat.world.object_position(obj, lat.time_of(s));
        intercept_root(
            o[0] - ee.position[0],
            o[1] - ee.position[1],
            lat.world.conveyor_speed,
            lat.max_ee_speed(),
        )
    }

    pub fn heuristic(&self, s: &State, g: &GoalPose) -> f64 {
        let obj = self.lattice.region.pose(g);
        self.heuristic_for(s, &obj)
    }

    fn heuristic_for(&self, s: &State, obj: &ObjectPose) -> f64 {
        let tau = self.intercept_time(s, obj);
        let yaw = self.lattice.ee(s).orientation;
        let angle = self.lattice.world.grasp_angle_diff(obj, yaw);
        (self.lambda * tau).max(angle)
    }

    /// Earliest pre-grasp state of `root` with the smallest heuristic to `g`,
    /// among those at or after the replan cutoff when there are any.
    pub fn shortcut_state(&self, root: &Path, g: &GoalPose) -> usize {
        let obj = self.lattice.region.pose(g);
        let pre = root.pre_grasp();
        let cutoff = self.lattice.replan_index();
        let from = pre.iter().position(|s| s.t >= cutoff).unwrap_or(0);
        let mut best = from;
        let mut best_h = f64::INFINITY;
        for (i, s) in pre.iter().enumerate().skip(from) {
            let h = self.heuristic_for(s, &obj);
            if h < best_h {
                best = i;
                best_h = h;
            }
        }
        best
    }

    pub fn plan(&self, start: &State, g: &GoalPose, budget: &SearchBudget) -> PlanResult {
        self.search(start, g, budget, None)
    }

    /// Measured seconds per expansion over plans from `start` to `goals`,
    /// each capped at `max_expansions`. `None` if nothing was expanded.
    pub fn measure_expansion_cost(
        &self,
        start: &State,
        goals: &[GoalPose],
        max_expansions: usize,
    ) -> Option<f64> {
        let budget = SearchBudget::bounded(max_expansions);
        let clock = web_time::Instant::now();
        let expanded: usize = goals.iter().map(|g| self.plan(start, g, &budget).expansions).sum();
        (expanded > 0).then(|| clock.elapsed().as_secs_f64() / expanded as f64)
    }

    /// Search where states on `root` gain a successor that jumps along
    /// `root` to its shortcut state for `g`.
    pub fn plan_with_experience(
        &self,
        start: &State,
        g: &GoalPose,
        root: &Path,
        budget: &SearchBudget,
    ) -> PlanResult {
        if root.goal == *g && root.terminal_grasp {
            if let Some(i) = root.index_of(start) {
                return PlanResult {
                    path: Some(root.suffix(i)),
                    expansions: 0,
                };
            }
        }
        let mut exp = self.prepare_experience(root, g);
        if root.index_of(start).is_some() {
            let cutoff = self.lattice.replan_index();
            exp.pinned = Some(
                root.states
                    .iter()
                    .take_while(|s| s.t <= cutoff)
                    .map(|s| self.lattice.key(s))
                    .collect(),
            );
        }
        self.search(start, g, budget, Some(&exp))
    }

    fn prepare_experience<'p>(&self, root: &'p Path, g: &GoalPose) -> Experience<'p> {
        let lat = self.lattice;
        let obj = lat.region.pose(g);
        let shortcut = self.shortcut_state(root, g);
        let mut blocked_before = None;
        for k in 0..shortcut {
            if !lat.motion_free(&root.states[k], &root.states[k + 1], Some(&obj)) {
                blocked_before = Some(k);
            }
        }
        let index = root.states[..shortcut]
            .iter()
            .enumerate()
            .map(|(i, s)| (lat.key(s), i))
            .collect();
        Experience {
            path: root,
            index,
            shortcut,
            blocked_before,
            pinned: None,
        }
    }

    fn search(
        &self,
        start: &State,
        g: &GoalPose,
        budget: &SearchBudget,
        exp: Option<&Experience<'_>>,
    ) -> PlanResult {
        let lat = self.lattice;
        let obj = lat.region.pose(g);
        let mut expansions = 0usize;
        let fail = |expansions| PlanResult {
            path: None,
            expansions,
        };
        if !lat.can_still_trigger(start, g) {
            return fail(0);
        }
        let mut nodes: Vec<Node> = Vec::with_capacity(1024);
        let mut lookup: FxHashMap<u64, u32> = FxHashMap::default();
        let mut open = BinaryHeap::new();
        let start_key = lat.key(start) << 1;
        nodes.push(Node {
            state: start.clone(),
            g: 0.0,
            parent: u32::MAX,
            edge: Edge::Start,
            terminal: false,
            closed: false,
        });
        lookup.insert(start_key, 0);
        open.push(OpenEntry {
            f: self.weight * self.heuristic_for(start, &obj),
            g: 0.0,
            key: start_key,
            node: 0,
        });

        while let Some(entry) = open.pop() {
            let idx = entry.node as usize;
            if nodes[idx].closed || entry.g > nodes[idx].g {
                continue;
            }
            if nodes[idx].terminal {
                return PlanResult {
                    path: Some(self.reconstruct(&nodes, idx, g, exp)),
                    expansions,
                };
            }
            if expansions >= budget.max_expansions {
                return fail(expansions);
            }
            expansions += 1;
            nodes[idx].closed = true;
            let state = nodes[idx].state.clone();
            let g_here = nodes[idx].g;

            let pinned = exp.and_then(|e| e.pinned.as_ref());
            let cutoff = lat.replan_index();
            let mut succ: Vec<(State, Edge, f64, bool)> = lat
                .successors(&state, g)
                .into_iter()
                .filter(|s| {
                    pinned.map_or(true, |p| s.state.t > cutoff || p.contains(&lat.key(&s.state)))
                })
                .map(|s| {
                    let terminal = matches!(s.primitive, Primitive::DynamicGrasp { .. });
                    (s.state, Edge::Primitive(s.primitive), s.cost, terminal)
                })
                .collect();
            if let Some(e) = exp {
                if let Some(&i) = e.index.get(&lat.key(&state)) {
                    let valid = e.blocked_before.map_or(true, |b| i > b);
                    if valid && i < e.shortcut {
                        let target = e.path.states[e.shortcut].clone();
                        let cost = (target.t - state.t) as f64 * lat.dt;
                        succ.push((
                            target,
                            Edge::Shortcut {
                                from: i,
                                to: e.shortcut,
                            },
                            cost,
                            false,
                        ));
                    }
                }
            }

            for (s, edge, cost, terminal) in succ {
                if !terminal && !lat.can_still_trigger(&s, g) {
                    continue;
                }
                let key = (lat.key(&s) << 1) | terminal as u64;
                let g_new = g_here + cost;
                let h = if terminal {
                    0.0
                } else {
                    self.heuristic_for(&s, &obj)
                };
                let node = match lookup.get(&key) {
                    Some(&n) => {
                        let n = n as usize;
                        if nodes[n].closed || nodes[n].g <= g_new {
                            continue;
                        }
                        nodes[n].g = g_new;
                        nodes[n].parent = idx as u32;
                        nodes[n].edge = edge;
                        n
                    }
                    None => {
                        let n = nodes.len();
                        nodes.push(Node {
                            state: s,
                            g: g_new,
                            parent: idx as u32,
                            edge,
                            terminal,
                            closed: false,
                        });
                        lookup.insert(key, n as u32);
                        n
                    }
                };
                open.push(OpenEntry {
                    f: g_new + self.weight * h,
                    g: g_new,
                    key,
                    node: node as u32,
                });
            }
        }
        fail(expansions)
    }

    fn reconstruct(
        &self,
        nodes: &[Node],
        mut idx: usize,
        g: &GoalPose,
        exp: Option<&Experience<'_>>,
    ) -> Path {
        let mut states = Vec::new();
        let mut prims = Vec::new();
        loop {
            let node = &nodes[idx];
            match node.edge {
                Edge::Start => {
                    states.push(node.state.clone());
                    break;
                }
                Edge::Primitive(p) => {
                    states.push(node.state.clone());
                    prims.push(p);
                }
                Edge::Shortcut { from, to } => {
                    let root = exp.expect("shortcut without experience").path;
                    for k in (from + 1..=to).rev() {
                        states.push(root.states[k].clone());
                        prims.push(root.primitives[k - 1]);
                    }
                }
            }
            idx = node.parent as usize;
        }
        states.reverse();
        prims.reverse();
        Path {
            states,
            primitives: prims,
            goal: *g,
            terminal_grasp: true,
        }
    }
}

/// Smallest `tau >= 0` with `|d + v*tau*e_x| <= speed*tau`, where `d` is
/// the object offset from the end effector and `v` the belt speed.
pub fn intercept_root(dx: f64, dy: f64, v: f64, speed: f64) -> f64 {
    let d2 = dx * dx + dy * dy;
    if d2 == 0.0 {
        return 0.0;
    }
    let a = speed * speed - v * v;
    if a > 0.0 {
        return (dx * v + (dx * dx * v * v + a * d2).sqrt()) / a;
    }
    // Object at least as fast as the arm: only catchable head-on.
    let b = 2.0 * dx * v;
    if b >= 0.0 {
        return NO_INTERCEPT;
    }
    if a == 0.0 {
        return -d2 / b;
    }
    let disc = b * b + 4.0 * a * d2;
    if disc < 0.0 {
        return NO_INTERCEPT;
    }
    (-b - disc.sqrt()) / (-2.0 * a)
}
