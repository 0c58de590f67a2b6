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
//! Kinodynamic RRT over (configuration, time) on the lattice primitives,
//! used as a sampling baseline.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rustc_hash::FxHashSet;
use std::f64::consts::PI;

use crate::kinematics::{fk_unchecked, jacobian, normalize_angle};
use crate::lattice::{GoalPose, JointAngles, Lattice, Primitive, State};
use crate::search::{Path, PlanResult};

/// Probability of steering toward a pre-grasp configuration.
pub const GOAL_BIAS: f64 = 0.3;

struct Node {
    state: State,
    parent: usize,
    primitive: Primitive,
}

/// Damped least-squares IK for an end-effector pose, from `seed`.
pub fn solve_ik(lat: &Lattice, seed: &[f64], target: [f64; 3]) -> Option<JointAngles> {
    let arm = &lat.arm;
    let mut q: JointAngles = seed.to_vec().into();
    let damping = 0.05;
    for _ in 0..100 {
        let ee = fk_unchecked(arm, &q);
        let e = DVector::from_vec(vec![
            target[0] - ee.position[0],
            target[1] - ee.position[1],
            normalize_angle(target[2] - ee.orientation),
        ]);
        if e.norm() < 1e-4 {
            return arm.within_limits(&q).then_some(q);
        }
        let j = jacobian(arm, &q).ok()?;
        let jt = j.transpose();
        let a = &j * &jt + DMatrix::identity(3, 3) * (damping * damping);
        let step = jt * a.lu().solve(&e)?;
        for k in 0..q.len() {
            q[k] += step[k].clamp(-0.2, 0.2);
        }
    }
    None
}

/// Grow a tree from `start` for at most `iterations` samples and return the
/// first branch that ends in a successful grasp. Each iteration expands one
/// tree node with the lattice primitives, so an iteration costs the same as
/// one search expansion.
pub fn rrt_plan(
    lat: &Lattice,
    start: &State,
    g: &GoalPose,
    iterations: usize,
    rng: &mut impl Rng,
) -> PlanResult {
    let obj = lat.region.pose(g);
    let n = lat.dof();
    let mut nodes = vec![Node {
        state: start.clone(),
        parent: usize::MAX,
        primitive: Primitive::Wait,
    }];
    let mut seen: FxHashSet<u64> = FxHashSet::default();
    seen.insert(lat.key(start));
    let fail = |expansions| PlanResult {
        path: None,
        expansions,
    };
    if start.t >= lat.horizon || lat.state_collides(start, Some(&obj)) {
        return fail(0);
    }
    for it in 1..=iterations {
        let t_s = rng.gen_range(start.t + 1..=lat.horizon);
        let q_s: Vec<f64> = if rng.gen::<f64>() < GOAL_BIAS {
            let o = lat.world.object_position(&obj, t_s as f64 * lat.dt);
            let seed: Vec<f64> = (0..n)
                .map(|j| rng.gen_range(lat.arm.joint_limits[j][0]..=lat.arm.joint_limits[j][1]))
                .collect();
            let yaw = lat.world.nearest_grasp_yaw(&obj, rng.gen_range(-PI..PI));
            match solve_ik(lat, &seed, [o[0], o[1], yaw]) {
                Some(q) => q.to_vec(),
                None => continue,
            }
        } else {
            (0..n)
                .map(|j| rng.gen_range(lat.arm.joint_limits[j][0]..=lat.arm.joint_limits[j][1]))
                .collect()
        };
        let sample: Vec<f64> = q_s.iter().map(|a| a / lat.angle_res).collect();
        let Some(near) = nearest(lat, &nodes, &sample, t_s) else {
            continue;
        };
        let from = nodes[near].state.clone();
        let succ = lat.successors(&from, g);
        if let Some(grasp) = succ
            .iter()
            .find(|s| matches!(s.primitive, Primitive::DynamicGrasp { .. }))
        {
            nodes.push(Node {
                state: grasp.state.clone(),
                parent: near,
                primitive: grasp.primitive,
            });
            return PlanResult {
                path: Some(branch(&nodes, nodes.len() - 1, g)),
                expansions: it,
            };
        }
        let best = succ
            .into_iter()
            .filter(|s| !seen.contains(&lat.key(&s.state)))
            .min_by(|a, b| {
                let da = config_gap(lat, &a.state.q, &sample);
                let db = config_gap(lat, &b.state.q, &sample);
                da.total_cmp(&db)
            });
        if let Some(b) = best {
            seen.insert(lat.key(&b.state));
            nodes.push(Node {
                state: b.state,
                parent: near,
                primitive: b.primitive,
            });
        }
    }
    fail(iterations)
}

/// Seconds the slowest joint needs to reach the sample.
fn config_gap(lat: &Lattice, q: &[i32], sample: &[f64]) -> f64 {
    (0..sample.len())
        .map(|j| (sample[j] - q[j] as f64).abs() * lat.angle_res / lat.arm.joint_velocity_limits[j])
        .fold(0.0, f64::max)
}

/// Node minimizing the time needed to reach the sample, among nodes that
/// are earlier than it and can reach it in time.
fn nearest(lat: &Lattice, nodes: &[Node], sample: &[f64], t_s: u32) -> Option<usize> {
    let mut best = None;
    let mut best_d = f64::INFINITY;
    for (i, node) in nodes.iter().enumerate() {
        let s = &node.state;
        if s.t >= t_s || s.t >= lat.horizon {
            continue;
        }
        let need = config_gap(lat, &s.q, sample);
        let available = (t_s - s.t) as f64 * lat.dt;
        let d = need.max(available) + 0.1 * available;
        if d < best_d {
            best_d = d;
            best = Some(i);
        }
    }
    best
}

fn branch(nodes: &[Node], leaf: usize, g: &GoalPose) -> Path {
    let mut states = Vec::new();
    let mut primitives = Vec::new();
    let mut i = leaf;
    loop {
        states.push(nodes[i].state.clone());
        let p = nodes[i].parent;
        if p == usize::MAX {
            break;
        }
        primitives.push(nodes[i].primitive);
        i = p;
    }
    states.reverse();
    primitives.reverse();
    Path {
        states,
        primitives,
        goal: *g,
        terminal_grasp: true,
    }
}
