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
//! Planar arm kinematics and time-parameterized collision checking.
//!
//! Links are capsules (segments swept by a disc of `link_radius`). The
//! gripper is an extra segment of length `gripper_reach` past the last
//! joint; its end is the end-effector point used for grasping.

use nalgebra::{DMatrix, Vector2};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

use crate::config::{ArmConfig, WorldConfig};

#[derive(Debug, Error, PartialEq)]
pub enum KinematicsError {
    #[error("configuration has {got} joints, arm has {expected}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Wraps an angle into (-pi, pi].
pub fn normalize_angle(a: f64) -> f64 {
    let mut r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r -= 2.0 * PI;
    }
    r
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmModel {
    pub link_lengths: Vec<f64>,
    pub joint_velocity_limits: Vec<f64>,
    /// Joint limits in radians.
    pub joint_limits: Vec<[f64; 2]>,
    pub base_position: [f64; 2],
    pub gripper_reach: f64,
    pub link_radius: f64,
}

impl ArmModel {
    pub fn from_config(c: &ArmConfig) -> Self {
        ArmModel {
            link_lengths: c.link_lengths.clone(),
            joint_velocity_limits: c.joint_velocity_limits.clone(),
            joint_limits: c
                .joint_limits_deg
                .iter()
                .map(|l| [l[0].to_radians(), l[1].to_radians()])
                .collect(),
            base_position: c.base_position,
            gripper_reach: c.gripper_reach,
            link_radius: c.link_radius,
        }
    }

    /// An arm without joint limits, mostly for tests.
    pub fn simple(link_lengths: &[f64]) -> Self {
        ArmModel {
            link_lengths: link_lengths.to_vec(),
            joint_velocity_limits: vec![1.0; link_lengths.len()],
            joint_limits: vec![[-PI, PI]; link_lengths.len()],
            base_position: [0.0, 0.0],
            gripper_reach: 0.0,
            link_radius: 0.01,
        }
    }

    pub fn dof(&self) -> usize {
        self.link_lengths.len()
    }

    fn check(&self, q: &[f64]) -> Result<(), KinematicsError> {
        if q.len() != self.dof() {
            return Err(KinematicsError::DimensionMismatch {
                expected: self.dof(),
                got: q.len(),
            });
        }
        Ok(())
    }

    pub fn within_limits(&self, q: &[f64]) -> bool {
        q.iter()
            .zip(&self.joint_limits)
            .all(|(&a, l)| a >= l[0] - 1e-12 && a <= l[1] + 1e-12)
    }

    /// Upper bound on end-effector speed: every joint at its limit with the
    /// whole distal chain fully extended.
    pub fn max_ee_speed(&self) -> f64 {
        let n = self.dof();
        (0..n)
            .map(|j| {
                let reach: f64 = self.link_lengths[j..].iter().sum::<f64>() + self.gripper_reach;
                self.joint_velocity_limits[j] * reach
            })
            .sum()
    }

    /// Fastest single joint, bounding the yaw rate of one static primitive.
    pub fn max_joint_speed(&self) -> f64 {
        self.joint_velocity_limits.iter().cloned().fold(0.0, f64::max)
    }

    pub fn max_reach(&self) -> f64 {
        self.link_lengths.iter().sum::<f64>() + self.gripper_reach
    }

    /// Joint positions `p_0 = base, ..., p_n = last joint tip`, followed by
    /// the gripper tip, written into `out` (length n + 2).
    pub fn chain_points(&self, q: &[f64], out: &mut Vec<[f64; 2]>) -> f64 {
        out.clear();
        let mut x = self.base_position[0];
        let mut y = self.base_position[1];
        let mut phi = 0.0;
        out.push([x, y]);
        for (l, a) in self.link_lengths.iter().zip(q) {
            phi += a;
            x += l * phi.cos();
            y += l * phi.sin();
            out.push([x, y]);
        }
        out.push([
            x + self.gripper_reach * phi.cos(),
            y + self.gripper_reach * phi.sin(),
        ]);
        phi
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EEPose {
    pub position: [f64; 2],
    /// Yaw in (-pi, pi].
    pub orientation: f64,
}

pub fn forward_kinematics(arm: &ArmModel, q: &[f64]) -> Result<EEPose, KinematicsError> {
    arm.check(q)?;
    Ok(fk_unchecked(arm, q))
}

pub(crate) fn fk_unchecked(arm: &ArmModel, q: &[f64]) -> EEPose {
    let mut x = arm.base_position[0];
    let mut y = arm.base_position[1];
    let mut phi = 0.0;
    for (l, a) in arm.link_lengths.iter().zip(q) {
        phi += a;
        x += l * phi.cos();
        y += l * phi.sin();
    }
    x += arm.gripper_reach * phi.cos();
    y += arm.gripper_reach * phi.sin();
    EEPose {
        position: [x, y],
        orientation: normalize_angle(phi),
    }
}

/// Analytic 3 x n Jacobian of `(x, y, yaw)` with respect to the joints.
pub fn jacobian(arm: &ArmModel, q: &[f64]) -> Result<DMatrix<f64>, KinematicsError> {
    arm.check(q)?;
    let mut pts = Vec::with_capacity(arm.dof() + 2);
    arm.chain_points(q, &mut pts);
    let ee = pts[arm.dof() + 1];
    let mut j = DMatrix::zeros(3, arm.dof());
    for c in 0..arm.dof() {
        let p = pts[c];
        j[(0, c)] = -(ee[1] - p[1]);
        j[(1, c)] = ee[0] - p[0];
        j[(2, c)] = 1.0;
    }
    Ok(j)
}

/// Convex polygon with a cached bounding circle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polygon {
    pub vertices: Vec<[f64; 2]>,
    center: [f64; 2],
    radius: f64,
}

impl Polygon {
    /// Vertices are reordered counter-clockwise if needed.
    pub fn new(mut vertices: Vec<[f64; 2]>) -> Self {
        let n = vertices.len();
        let area2: f64 = (0..n)
            .map(|i| {
                let a = vertices[i];
                let b = vertices[(i + 1) % n];
                a[0] * b[1] - b[0] * a[1]
            })
            .sum();
        if area2 < 0.0 {
            vertices.reverse();
        }
        let cx = vertices.iter().map(|v| v[0]).sum::<f64>() / n as f64;
        let cy = vertices.iter().map(|v| v[1]).sum::<f64>() / n as f64;
        let radius = vertices
            .iter()
            .map(|v| ((v[0] - cx).powi(2) + (v[1] - cy).powi(2)).sqrt())
            .fold(0.0, f64::max);
        Polygon {
            vertices,
            center: [cx, cy],
            radius,
        }
    }

    pub fn area(&self) -> f64 {
        let v = &self.vertices;
        let n = v.len();
        0.5 * (0..n)
            .map(|i| v[i][0] * v[(i + 1) % n][1] - v[(i + 1) % n][0] * v[i][1])
            .sum::<f64>()
    }

    pub fn transformed(&self, dx: f64, dy: f64, yaw: f64) -> Polygon {
        let (s, c) = yaw.sin_cos();
        Polygon::new(
            self.vertices
                .iter()
                .map(|v| [c * v[0] - s * v[1] + dx, s * v[0] + c * v[1] + dy])
                .collect(),
        )
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        let v = &self.vertices;
        let n = v.len();
        (0..n).all(|i| {
            let a = v[i];
            let b = v[(i + 1) % n];
            (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]) >= 0.0
        })
    }

    /// Distance from a point to the polygon (zero inside).
    pub fn distance_to_point(&self, p: [f64; 2]) -> f64 {
        if self.contains(p) {
            return 0.0;
        }
        let v = &self.vertices;
        let n = v.len();
        (0..n)
            .map(|i| point_segment_distance(p, v[i], v[(i + 1) % n]))
            .fold(f64::INFINITY, f64::min)
    }

    /// True if the capsule `a-b` with radius `r` touches the polygon.
    pub fn hits_capsule(&self, a: [f64; 2], b: [f64; 2], r: f64) -> bool {
        if point_segment_distance(self.center, a, b) > self.radius + r {
            return false;
        }
        if self.contains(a) || self.contains(b) {
            return true;
        }
        let v = &self.vertices;
        let n = v.len();
        (0..n).any(|i| segment_segment_distance(a, b, v[i], v[(i + 1) % n]) <= r)
    }
}

pub fn point_segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let ab = Vector2::new(b[0] - a[0], b[1] - a[1]);
    let ap = Vector2::new(p[0] - a[0], p[1] - a[1]);
    let len2 = ab.norm_squared();
    let t = if len2 > 0.0 {
        (ap.dot(&ab) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (ap - ab * t).norm()
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

fn segments_intersect(a: [f64; 2], b: [f64; 2], c: [f64; 2], d: [f64; 2]) -> bool {
    let d1 = cross(c, d, a);
    let d2 = cross(c, d, b);
    let d3 = cross(a, b, c);
    let d4 = cross(a, b, d);
    ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
}

pub fn segment_segment_distance(a: [f64; 2], b: [f64; 2], c: [f64; 2], d: [f64; 2]) -> f64 {
    if segments_intersect(a, b, c, d) {
        return 0.0;
    }
    point_segment_distance(a, c, d)
        .min(point_segment_distance(b, c, d))
        .min(point_segment_distance(c, a, b))
        .min(point_segment_distance(d, a, b))
}

/// Object pose on the belt at the reference time t = 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectPose {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldModel {
    pub conveyor_speed: f64,
    pub belt_x: [f64; 2],
    pub belt_y: [f64; 2],
    pub static_obstacles: Vec<Polygon>,
    pub object_shape: Polygon,
    pub grasp_symmetry: u32,
    /// Object-arm collisions are ignored up to this time (the replan cutoff).
    pub object_clear_until: f64,
}

impl WorldModel {
    pub fn from_config(c: &WorldConfig, t_rc: f64) -> Self {
        WorldModel {
            conveyor_speed: c.conveyor_speed,
            belt_x: c.belt_x,
            belt_y: c.belt_y,
            static_obstacles: c
                .static_obstacles
                .iter()
                .map(|p| Polygon::new(p.clone()))
                .collect(),
            object_shape: Polygon::new(c.object_shape.clone()),
            grasp_symmetry: c.grasp_symmetry,
            object_clear_until: t_rc,
        }
    }

    /// Object centre at time `t`.
    pub fn object_position(&self, obj: &ObjectPose, t: f64) -> [f64; 2] {
        [obj.x + self.conveyor_speed * t, obj.y]
    }

    pub fn object_polygon(&self, obj: &ObjectPose, t: f64) -> Polygon {
        let p = self.object_position(obj, t);
        self.object_shape.transformed(p[0], p[1], obj.yaw)
    }

    /// Shortest yaw error between `yaw` and any equivalent grasp of `obj`.
    pub fn grasp_angle_diff(&self, obj: &ObjectPose, yaw: f64) -> f64 {
        let period = 2.0 * PI / self.grasp_symmetry as f64;
        let d = (yaw - obj.yaw).rem_euclid(period);
        d.min(period - d)
    }

    /// The equivalent grasp yaw closest to `yaw`.
    pub fn nearest_grasp_yaw(&self, obj: &ObjectPose, yaw: f64) -> f64 {
        let period = 2.0 * PI / self.grasp_symmetry as f64;
        let k = ((yaw - obj.yaw) / period).round();
        obj.yaw + k * period
    }
}

/// True iff the arm at `q` and time `t` touches a static obstacle, or, after
/// the replan cutoff, the object advected from `object`. The gripper segment
/// is exempt from object collisions since it encloses the object.
pub fn collides(
    arm: &ArmModel,
    world: &WorldModel,
    q: &[f64],
    t: f64,
    object: Option<&ObjectPose>,
) -> bool {
    let mut pts = Vec::with_capacity(arm.dof() + 2);
    collides_with_buf(arm, world, q, t, object, &mut pts)
}

pub(crate) fn collides_with_buf(
    arm: &ArmModel,
    world: &WorldModel,
    q: &[f64],
    t: f64,
    object: Option<&ObjectPose>,
    pts: &mut Vec<[f64; 2]>,
) -> bool {
    arm.chain_points(q, pts);
    let r = arm.link_radius;
    let segs = pts.len() - 1;
    for obs in &world.static_obstacles {
        for i in 0..segs {
            if obs.hits_capsule(pts[i], pts[i + 1], r) {
                return true;
            }
        }
    }
    if let Some(obj) = object {
        if t > world.object_clear_until {
            let c = world.object_position(obj, t);
            let reach = arm.max_reach() + r + world.object_shape.radius;
            let bx = c[0] - arm.base_position[0];
            let by = c[1] - arm.base_position[1];
            if bx * bx + by * by <= reach * reach {
                let poly = world.object_polygon(obj, t);
                // links only; the last segment is the gripper
                for i in 0..segs - 1 {
                    if poly.hits_capsule(pts[i], pts[i + 1], r) {
                        return true;
                    }
                }
            }
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn two_link_extended_along_x() {
        let arm = ArmModel::simple(&[1.0, 1.0]);
        let p = forward_kinematics(&arm, &[0.0, 0.0]).unwrap();
        assert_abs_diff_eq!(p.position[0], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.position[1], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.orientation, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn two_link_rotated_quarter_turn() {
        let arm = ArmModel::simple(&[1.0, 1.0]);
        let p = forward_kinematics(&arm, &[PI / 2.0, 0.0]).unwrap();
        assert_abs_diff_eq!(p.position[0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.position[1], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.orientation, PI / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let arm = ArmModel::simple(&[1.0, 1.0]);
        assert_eq!(
            forward_kinematics(&arm, &[0.0]),
            Err(KinematicsError::DimensionMismatch {
                expected: 2,
                got: 1
            })
        );
        assert!(jacobian(&arm, &[0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn single_joint_jacobian_column() {
        let arm = ArmModel::simple(&[0.7]);
        let j = jacobian(&arm, &[0.0]).unwrap();
        assert_abs_diff_eq!(j[(0, 0)], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(j[(1, 0)], 0.7, epsilon = 1e-12);
        assert_abs_diff_eq!(j[(2, 0)], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn two_link_jacobian_at_zero() {
        let arm = ArmModel::simple(&[1.0, 1.0]);
        let j = jacobian(&arm, &[0.0, 0.0]).unwrap();
        let expected = [[0.0, 0.0], [2.0, 1.0], [1.0, 1.0]];
        for r in 0..3 {
            for c in 0..2 {
                assert_abs_diff_eq!(j[(r, c)], expected[r][c], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn angle_normalization_range() {
        assert_abs_diff_eq!(normalize_angle(3.0 * PI), PI, epsilon = 1e-12);
        assert_abs_diff_eq!(normalize_angle(-PI), PI, epsilon = 1e-12);
        assert_abs_diff_eq!(normalize_angle(0.5), 0.5, epsilon = 1e-12);
    }

    fn square(cx: f64, cy: f64, h: f64) -> Polygon {
        Polygon::new(vec![
            [cx - h, cy - h],
            [cx + h, cy - h],
            [cx + h, cy + h],
            [cx - h, cy + h],
        ])
    }

    fn world_with(obstacles: Vec<Polygon>) -> WorldModel {
        WorldModel {
            conveyor_speed: 0.2,
            belt_x: [-2.0, 2.0],
            belt_y: [0.5, 0.7],
            static_obstacles: obstacles,
            object_shape: square(0.0, 0.0, 0.02),
            grasp_symmetry: 2,
            object_clear_until: 3.5,
        }
    }

    #[test]
    fn folded_arm_far_from_obstacles_is_free() {
        let arm = ArmModel::simple(&[0.3, 0.3]);
        let world = world_with(vec![square(2.0, 2.0, 0.1)]);
        for t in [0.0, 1.0, 10.0] {
            assert!(!collides(&arm, &world, &[0.0, PI * 0.9], t, None));
        }
    }

    #[test]
    fn link_through_obstacle_collides() {
        let arm = ArmModel::simple(&[0.5, 0.5]);
        let world = world_with(vec![square(0.4, 0.0, 0.05)]);
        assert!(collides(&arm, &world, &[0.0, 0.0], 0.0, None));
        assert!(!collides(&arm, &world, &[PI / 2.0, 0.0], 0.0, None));
    }

    #[test]
    fn object_ignored_before_cutoff() {
        let arm = ArmModel::simple(&[0.5, 0.5]);
        let world = world_with(vec![]);
        // object sits on the first link at t = 4 (x = -0.4 + 0.8 = 0.4)
        let obj = ObjectPose {
            x: -0.4,
            y: 0.0,
            yaw: 0.0,
        };
        // at the cutoff the object overlaps the first link but is ignored
        assert!(!collides(&arm, &world, &[0.0, 0.0], 3.5, Some(&obj)));
        assert!(collides(&arm, &world, &[0.0, 0.0], 4.0, Some(&obj)));
            }

    #[test]
    fn grasp_symmetry_angle_diff() {
        let world = world_with(vec![]);
        let obj = ObjectPose {
            x: 0.0,
            y: 0.0,
            yaw: 0.1,
        };
        assert_abs_diff_eq!(world.grasp_angle_diff(&obj, 0.1 + PI), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(world.grasp_angle_diff(&obj, 0.1 + PI / 2.0), PI / 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(world.nearest_grasp_yaw(&obj, 3.0), 0.1 + PI, epsilon = 1e-12);
    }
}
