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
//! The implicit time-augmented lattice: discretized states, goal poses and
//! the primitive families (static joint moves, waits, dynamic grasps and
//! latches).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;
use std::f64::consts::PI;
use std::fmt;

use crate::config::{Config, GoalRegionConfig, LatticeConfig};
use crate::kinematics::{
    collides_with_buf, fk_unchecked, jacobian, normalize_angle, ArmModel, EEPose, ObjectPose,
    WorldModel,
};

pub type Joints = SmallVec<[i32; 8]>;
pub type JointAngles = SmallVec<[f64; 8]>;

/// A lattice state: joint-angle indices plus a time index.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct State {
    pub q: Joints,
    pub t: u32,
}

impl State {
    pub fn new(q: &[i32], t: u32) -> Self {
        State {
            q: q.iter().copied().collect(),
            t,
        }
    }
}

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(q={:?}, t={})", self.q.as_slice(), self.t)
    }
}

/// Discretized object pose at the reference time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GoalPose {
    pub x_idx: u16,
    pub y_idx: u16,
    pub yaw_idx: u16,
}

impl fmt::Display for GoalPose {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(x={}, y={}, yaw={})", self.x_idx, self.y_idx, self.yaw_idx)
    }
}

/// Finite set of goal poses around the execution trigger.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalRegion {
    pub x_exec: f64,
    pub eps_p: f64,
    pub x_min: f64,
    pub x_res: f64,
    pub nx: u16,
    pub y_min: f64,
    pub y_res: f64,
    pub ny: u16,
    pub yaw_res: f64,
    pub nyaw: u16,
    pub yaw_period: f64,
}

impl GoalRegion {
    /// Yaw cells span one period of the object's grasp symmetry.
    pub fn from_config(c: &GoalRegionConfig, symmetry: u32) -> Self {
        let nx = ((4.0 * c.eps_p) / c.x_res).round() as u16 + 1;
        let ny = ((c.y_range[1] - c.y_range[0]) / c.y_res).round() as u16 + 1;
        let yaw_res = c.yaw_res_deg.to_radians();
        let period = 2.0 * PI / symmetry.max(1) as f64;
        let nyaw = (period / yaw_res).round().max(1.0) as u16;
        GoalRegion {
            x_exec: c.x_exec,
            eps_p: c.eps_p,
            x_min: c.x_exec - 2.0 * c.eps_p,
            x_res: c.x_res,
            nx,
            y_min: c.y_range[0],
            y_res: c.y_res,
            ny,
            yaw_res,
            nyaw,
            yaw_period: period,
        }
    }

    pub fn x_range(&self) -> [f64; 2] {
        [self.x_min, self.x_min + (self.nx - 1) as f64 * self.x_res]
    }

    pub fn len(&self) -> usize {
        self.nx as usize * self.ny as usize * self.nyaw as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn key(&self, g: &GoalPose) -> u32 {
        (g.x_idx as u32 * self.ny as u32 + g.y_idx as u32) * self.nyaw as u32 + g.yaw_idx as u32
    }

    pub fn from_key(&self, key: u32) -> Option<GoalPose> {
        if key as usize >= self.len() {
            return None;
        }
        let yaw = key % self.nyaw as u32;
        let rest = key / self.nyaw as u32;
        Some(GoalPose {
            x_idx: (rest / self.ny as u32) as u16,
            y_idx: (rest % self.ny as u32) as u16,
            yaw_idx: yaw as u16,
        })
    }

    pub fn contains(&self, g: &GoalPose) -> bool {
        g.x_idx < self.nx && g.y_idx < self.ny && g.yaw_idx < self.nyaw
    }

    pub fn pose(&self, g: &GoalPose) -> ObjectPose {
        ObjectPose {
            x: self.x_min + g.x_idx as f64 * self.x_res,
            y: self.y_min + g.y_idx as f64 * self.y_res,
            yaw: normalize_angle(g.yaw_idx as f64 * self.yaw_res),
        }
    }

    /// Nearest goal to a continuous pose. The flag is false when the pose
    /// had to be clamped into the region.
    pub fn snap(&self, p: &ObjectPose) -> (GoalPose, bool) {
        let xi = ((p.x - self.x_min) / self.x_res).round();
        let yi = ((p.y - self.y_min) / self.y_res).round();
        let inside = xi >= 0.0 && xi < self.nx as f64 && yi >= 0.0 && yi < self.ny as f64;
        let yaw = (p.yaw.rem_euclid(self.yaw_period) / self.yaw_res).round() as i64 % self.nyaw as i64;
        (
            GoalPose {
                x_idx: xi.clamp(0.0, (self.nx - 1) as f64) as u16,
                y_idx: yi.clamp(0.0, (self.ny - 1) as f64) as u16,
                yaw_idx: yaw as u16,
            },
            inside,
        )
    }

    pub fn all(&self) -> impl Iterator<Item = GoalPose> + '_ {
        (0..self.len() as u32).filter_map(|k| self.from_key(k))
    }
}

/// A motion primitive. Durations are counted in lattice time steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Primitive {
    Joint { joint: u8, dir: i8, steps: u32 },
    Wait,
    DynamicGrasp { steps: u32 },
    /// One-step linear interpolation onto another path.
    Latch,
}

impl Primitive {
    pub fn steps(&self) -> u32 {
        match *self {
            Primitive::Joint { steps, .. } | Primitive::DynamicGrasp { steps } => steps,
            Primitive::Wait | Primitive::Latch => 1,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Primitive::Joint { .. } => "static-joint",
            Primitive::Wait => "wait",
            Primitive::DynamicGrasp { .. } => "dynamic-grasp",
            Primitive::Latch => "latch",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Successor {
    pub state: State,
    pub primitive: Primitive,
    /// Cost in seconds.
    pub cost: f64,
}

#[derive(Debug, Clone)]
pub struct GraspResult {
    pub terminal: State,
    /// `(time, joint angles)` at every integration step.
    pub trajectory: Vec<(f64, JointAngles)>,
    pub success: bool,
    /// Time at which the gripper enclosed the target, if it did.
    pub enclosed_at: Option<f64>,
}

impl GraspResult {
    pub fn final_angles(&self) -> &[f64] {
        &self.trajectory.last().expect("trajectory has a start").1
    }
}

/// Arm, world, lattice resolution and goal region bundled together.
#[derive(Debug, Clone)]
pub struct Lattice {
    pub arm: ArmModel,
    pub world: WorldModel,
    pub params: LatticeConfig,
    pub region: GoalRegion,
    pub t_rc: f64,
    /// Radians per joint index.
    pub angle_res: f64,
    pub dt: f64,
    pub step_cells: Vec<i32>,
    pub step_durations: Vec<u32>,
    pub lo: Vec<i32>,
    pub hi: Vec<i32>,
    pub horizon: u32,
    strides: Vec<u64>,
    span: u64,
    home: State,
    v_ee_max: f64,
}

impl Lattice {
    pub fn new(cfg: &Config) -> Self {
        let arm = ArmModel::from_config(&cfg.arm);
        let world = WorldModel::from_config(&cfg.world, cfg.preprocess.t_rc);
        let params = cfg.lattice.clone();
        let region = GoalRegion::from_config(&cfg.preprocess.goals, cfg.world.grasp_symmetry);
        let angle_res = params.angle_res_deg.to_radians();
        let dt = params.dt;
        let n = arm.dof();
        let step_cells: Vec<i32> = match &params.step_cells {
            Some(s) => s.iter().map(|&c| c as i32).collect(),
            None => arm
                .joint_velocity_limits
                .iter()
                .map(|v| ((v * dt / angle_res + 1e-9).floor() as i32).max(1))
                .collect(),
        };
        let step_durations = (0..n)
            .map(|j| {
                let secs = step_cells[j] as f64 * angle_res / arm.joint_velocity_limits[j];
                ((secs / dt) - 1e-9).ceil().max(1.0) as u32
            })
            .collect();
        let lo: Vec<i32> = arm
            .joint_limits
            .iter()
            .map(|l| (l[0] / angle_res - 1e-9).ceil() as i32)
            .collect();
        let hi: Vec<i32> = arm
            .joint_limits
            .iter()
            .map(|l| (l[1] / angle_res + 1e-9).floor() as i32)
            .collect();
        let mut strides = Vec::with_capacity(n);
        let mut span: u64 = 1;
        for j in 0..n {
            strides.push(span);
            span = span
                .checked_mul((hi[j] - lo[j] + 1) as u64)
                .expect("lattice too large for 64-bit keys");
        }
        let horizon = (params.horizon_s / dt + 1e-9).floor() as u32;
        span.checked_mul(horizon as u64 + 64)
            .expect("lattice too large for 64-bit keys");
        let home_q: Joints = cfg
            .arm
            .home_deg
            .iter()
            .enumerate()
            .map(|(j, d)| ((d.to_radians() / angle_res).round() as i32).clamp(lo[j], hi[j]))
            .collect();
        let v_ee_max = arm.max_ee_speed();
        Lattice {
            arm,
            world,
            params,
            region,
            t_rc: cfg.preprocess.t_rc,
            angle_res,
            dt,
            step_cells,
            step_durations,
            lo,
            hi,
            horizon,
            strides,
            span,
            home: State { q: home_q, t: 0 },
            v_ee_max,
        }
    }

    pub fn dof(&self) -> usize {
        self.arm.dof()
    }

    pub fn home(&self) -> &State {
        &self.home
    }

    /// Time index of the replan cutoff.
    pub fn replan_index(&self) -> u32 {
        (self.t_rc / self.dt).round() as u32
    }

    /// The object at `obj` stays beyond the arm's reach, link radius
    /// included, up to the replan cutoff.
    pub fn object_clear_at_cutoff(&self, obj: &ObjectPose) -> bool {
        let poly = self.world.object_polygon(obj, self.t_rc);
        let reach = self.arm.max_reach() + self.arm.link_radius;
        let b = self.arm.base_position;
        poly.distance_to_point(b) > reach && !poly.contains(b)
    }

    pub fn time_of(&self, s: &State) -> f64 {
        s.t as f64 * self.dt
    }

    /// Bijective packing of a state into an integer key.
    pub fn key(&self, s: &State) -> u64 {
        let mut k = s.t as u64 * self.span;
        for j in 0..s.q.len() {
            k += (s.q[j] - self.lo[j]) as u64 * self.strides[j];
        }
        k
    }

    pub fn state_from_key(&self, key: u64) -> State {
        let t = (key / self.span) as u32;
        let mut rest = key % self.span;
        let n = self.dof();
        let mut q = Joints::with_capacity(n);
        for j in 0..n {
            let range = (self.hi[j] - self.lo[j] + 1) as u64;
            q.push((rest % range) as i32 + self.lo[j]);
            rest /= range;
        }
        State { q, t }
    }

    pub fn angles(&self, q: &[i32]) -> JointAngles {
        q.iter().map(|&i| i as f64 * self.angle_res).collect()
    }

    pub fn snap_angles(&self, q: &[f64]) -> Option<Joints> {
        let mut out = Joints::with_capacity(q.len());
        for (j, a) in q.iter().enumerate() {
            let i = (a / self.angle_res).round() as i32;
            if i < self.lo[j] || i > self.hi[j] {
                return None;
            }
            out.push(i);
        }
        Some(out)
    }

    pub fn in_limits(&self, q: &[i32]) -> bool {
        q.iter()
            .enumerate()
            .all(|(j, &i)| i >= self.lo[j] && i <= self.hi[j])
    }

    pub fn ee(&self, s: &State) -> EEPose {
        fk_unchecked(&self.arm, &self.angles(&s.q))
    }

    pub fn max_ee_speed(&self) -> f64 {
        self.v_ee_max
    }

    pub fn state_collides(&self, s: &State, obj: Option<&ObjectPose>) -> bool {
        let mut buf = Vec::with_capacity(self.dof() + 2);
        collides_with_buf(
            &self.arm,
            &self.world,
            &self.angles(&s.q),
            self.time_of(s),
            obj,
            &mut buf,
        )
    }

    /// Collision check along the straight joint-space interpolation from
    /// `a` to `b`, excluding the start configuration.
    pub fn motion_free(&self, a: &State, b: &State, obj: Option<&ObjectPose>) -> bool {
        let qa = self.angles(&a.q);
        let qb = self.angles(&b.q);
        let ta = self.time_of(a);
        let tb = self.time_of(b);
        let max_dq = qa
            .iter()
            .zip(&qb)
            .map(|(x, y)| (y - x).abs())
            .fold(0.0, f64::max);
        let mut samples = (max_dq / self.params.collision_step_deg.to_radians()).ceil() as usize;
        if obj.is_some() && tb > self.world.object_clear_until {
            samples = samples.max(((tb - ta) / 0.1).ceil() as usize);
        }
        let samples = samples.max(1);
        let mut buf = Vec::with_capacity(self.dof() + 2);
        let mut q = JointAngles::from_elem(0.0, qa.len());
        for i in 1..=samples {
            let u = i as f64 / samples as f64;
            for j in 0..qa.len() {
                q[j] = qa[j] + u * (qb[j] - qa[j]);
            }
            let t = ta + u * (tb - ta);
            if collides_with_buf(&self.arm, &self.world, &q, t, obj, &mut buf) {
                return false;
            }
        }
        true
    }

    /// Static joint moves, a wait and, near the object, a dynamic grasp.
    /// Colliding or out-of-limit motions are omitted.
    pub fn successors(&self, s: &State, g: &GoalPose) -> Vec<Successor> {
        let obj = self.region.pose(g);
        let mut out = Vec::with_capacity(2 * self.dof() + 2);
        if s.t >= self.horizon {
            return out;
        }
        for j in 0..self.dof() {
            for dir in [1i8, -1i8] {
                let mut q = s.q.clone();
                q[j] += dir as i32 * self.step_cells[j];
                if q[j] < self.lo[j] || q[j] > self.hi[j] {
                    continue;
                }
                let steps = self.step_durations[j];
                let next = State { q, t: s.t + steps };
                if next.t > self.horizon || !self.motion_free(s, &next, Some(&obj)) {
                    continue;
                }
                out.push(Successor {
                    state: next,
                    primitive: Primitive::Joint {
                        joint: j as u8,
                        dir,
                        steps,
                    },
                    cost: steps as f64 * self.dt,
                });
            }
        }
        let wait = State {
            q: s.q.clone(),
            t: s.t + 1,
        };
        if self.motion_free(s, &wait, Some(&obj)) {
            out.push(Successor {
                state: wait,
                primitive: Primitive::Wait,
                cost: self.dt,
            });
        }
        if self.trigger_dynamic(s, g) {
            let r = self.dynamic_grasp(s, g);
            if r.success {
                let steps = r.terminal.t - s.t;
                out.push(Successor {
                    state: r.terminal,
                    primitive: Primitive::DynamicGrasp { steps },
                    cost: steps as f64 * self.dt,
                });
            }
        }
        out
    }

    /// Distance from the end effector to the advected object and the grasp
    /// yaw error, at the state's time.
    pub fn grasp_offsets(&self, s: &State, obj: &ObjectPose) -> (f64, f64) {
        let ee = self.ee(s);
        let o = self.world.object_position(obj, self.time_of(s));
        let d = ((ee.position[0] - o[0]).powi(2) + (ee.position[1] - o[1]).powi(2)).sqrt();
        (d, self.world.grasp_angle_diff(obj, ee.orientation))
    }

    /// Strictly inside both the trigger distance and the trigger angle.
    pub fn trigger_dynamic(&self, s: &State, g: &GoalPose) -> bool {
        let (d, a) = self.grasp_offsets(s, &self.region.pose(g));
        d < self.params.d_trigger && a < self.params.alpha_trigger_deg.to_radians()
    }

    /// Last time at which the object centre is within `radius` of the base.
    fn leave_time(&self, obj: &ObjectPose, radius: f64) -> Option<f64> {
        let dy = obj.y - self.arm.base_position[1];
        if dy.abs() > radius {
            return None;
        }
        let half = (radius * radius - dy * dy).sqrt();
        Some((self.arm.base_position[0] + half - obj.x) / self.world.conveyor_speed)
    }

    /// Necessary condition for a grasp to be triggerable from `s` before the
    /// object leaves the arm's reach, using the end-effector speed bound.
    pub fn can_still_trigger(&self, s: &State, g: &GoalPose) -> bool {
        let obj = self.region.pose(g);
        let d_trig = self.params.d_trigger;
        let t_out = match self.leave_time(&obj, self.arm.max_reach() + d_trig) {
            Some(t) => t.min(self.horizon as f64 * self.dt),
            None => return false,
        };
        let t = self.time_of(s);
        if t > t_out {
            return false;
        }
        let ee = self.ee(s);
        let o = self.world.object_position(&obj, t);
        let dx = o[0] - ee.position[0];
        let dy = o[1] - ee.position[1];
        let dist2 = dx * dx + dy * dy;
        let v = self.world.conveyor_speed;
        let vmax = self.v_ee_max;
        let tau = if dist2 <= d_trig * d_trig {
            0.0
        } else if vmax <= v {
            return true;
        } else {
            let a = vmax * vmax - v * v;
            let b = 2.0 * (d_trig * vmax - dx * v);
            let c = dist2 - d_trig * d_trig;
            (-b + (b * b + 4.0 * a * c).sqrt()) / (2.0 * a)
        };
        if t + tau > t_out + 1e-9 {
            return false;
        }
        let yaw_gap = self.world.grasp_angle_diff(&obj, ee.orientation)
            - self.params.alpha_trigger_deg.to_radians();
        yaw_gap <= 0.0 || t + yaw_gap / self.arm.max_joint_speed() <= t_out + 1e-9
    }

    /// Resolved-rate grasp toward the goal's advected pose.
    pub fn dynamic_grasp(&self, s: &State, g: &GoalPose) -> GraspResult {
        let obj = self.region.pose(g);
        self.dynamic_grasp_towards(s, &obj, &obj)
    }

    /// Grasp controller closing on `target`, collision checked against
    /// `actual` (they differ when replaying a plan against ground truth).
    pub fn dynamic_grasp_towards(
        &self,
        s: &State,
        target: &ObjectPose,
        actual: &ObjectPose,
    ) -> GraspResult {
        let p = &self.params;
        let n = self.dof();
        let t0 = self.time_of(s);
        let mut q: JointAngles = self.angles(&s.q);
        let mut tau = t0;
        let mut trajectory = vec![(tau, q.clone())];
        let start_yaw = fk_unchecked(&self.arm, &q).orientation;
        let goal_yaw = self.world.nearest_grasp_yaw(target, start_yaw);
        let pos_tol = p.enclose_pos_tol;
        let yaw_tol = p.enclose_yaw_tol_deg.to_radians();
        let v = self.world.conveyor_speed;
        let mut buf = Vec::with_capacity(n + 2);
        let fail = |trajectory: Vec<(f64, JointAngles)>| GraspResult {
            terminal: s.clone(),
            trajectory,
            success: false,
            enclosed_at: None,
        };

        let mut enclosed_at = None;
        let mut t_end = f64::INFINITY;
        loop {
            let ee = fk_unchecked(&self.arm, &q);
            let o = self.world.object_position(target, tau);
            let ex = o[0] - ee.position[0];
            let ey = o[1] - ee.position[1];
            let eyaw = normalize_angle(goal_yaw - ee.orientation);
            if enclosed_at.is_none() {
                if (ex * ex + ey * ey).sqrt() < pos_tol && eyaw.abs() < yaw_tol {
                    enclosed_at = Some(tau);
                    let k = ((tau + p.t_close - t0) / self.dt - 1e-9).ceil().max(1.0);
                    t_end = t0 + k * self.dt;
                } else if tau - t0 >= p.t_max {
                    return fail(trajectory);
                }
            }
            if tau >= t_end - 1e-9 {
                break;
            }
            let h = if enclosed_at.is_some() {
                p.dt_int.min(t_end - tau)
            } else {
                p.dt_int
            };
            let v_des = DVector::from_vec(vec![
                p.grasp_gain * ex + v,
                p.grasp_gain * ey,
                p.grasp_gain * eyaw,
            ]);
            let jac = jacobian(&self.arm, &q).expect("dimension checked");
            let pinv = pseudo_inverse(jac);
            let mut qd = pinv * v_des;
            let mut scale: f64 = 1.0;
            for j in 0..n {
                scale = scale.max(qd[j].abs() / self.arm.joint_velocity_limits[j]);
            }
            if scale > 1.0 {
                qd /= scale;
            }
            for j in 0..n {
                q[j] += qd[j] * h;
            }
            tau += h;
            if !self.arm.within_limits(&q)
                || collides_with_buf(&self.arm, &self.world, &q, tau, Some(actual), &mut buf)
            {
                trajectory.push((tau, q));
                return fail(trajectory);
            }
            trajectory.push((tau, q.clone()));
        }
        if !self.is_grasp_success(&q, tau, target) {
            return fail(trajectory);
        }
        let steps = ((t_end - t0) / self.dt).round() as u32;
        let terminal = match self.snap_angles(&q) {
            Some(qs) => State {
                q: qs,
                t: s.t + steps,
            },
            None => return fail(trajectory),
        };
        if self.state_collides(&terminal, Some(actual)) {
            return fail(trajectory);
        }
        GraspResult {
            terminal,
            trajectory,
            success: true,
            enclosed_at,
        }
    }

    /// End effector encloses the advected object at time `t`.
    pub fn is_grasp_success(&self, q: &[f64], t: f64, obj: &ObjectPose) -> bool {
        let ee = fk_unchecked(&self.arm, q);
        let o = self.world.object_position(obj, t);
        let d = ((ee.position[0] - o[0]).powi(2) + (ee.position[1] - o[1]).powi(2)).sqrt();
        d < self.params.enclose_pos_tol
            && self.world.grasp_angle_diff(obj, ee.orientation)
                < self.params.enclose_yaw_tol_deg.to_radians()
    }

    /// One-step interpolated move from `s` to `target`, within nominal joint
    /// speeds and collision free.
    pub fn latch_motion_ok(&self, s: &State, target: &State, obj: Option<&ObjectPose>) -> bool {
        if target.t != s.t + 1 || !self.in_limits(&target.q) {
            return false;
        }
        let within_speed = s.q.iter().zip(&target.q).enumerate().all(|(j, (a, b))| {
            ((b - a).abs() as f64) * self.angle_res
                <= self.arm.joint_velocity_limits[j] * self.dt + 1e-9
        });
        within_speed && self.motion_free(s, target, obj)
    }

    /// Latch target on `path_states` one time step after `s`, if the latch
    /// motion is feasible.
    pub fn can_latch(
        &self,
        s: &State,
        path_states: &[State],
        obj: Option<&ObjectPose>,
    ) -> Option<State> {
        let target = path_states.iter().find(|p| p.t == s.t + 1)?;
        if self.latch_motion_ok(s, target, obj) {
            Some(target.clone())
        } else {
            None
        }
    }
}

pub(crate) fn pseudo_inverse(m: DMatrix<f64>) -> DMatrix<f64> {
    let (r, c) = m.shape();
    m.pseudo_inverse(1e-9)
        .unwrap_or_else(|_| DMatrix::zeros(c, r))
}
