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
use ctplan::baseline::solve_ik;
use ctplan::kinematics::{collides, forward_kinematics, ObjectPose, Polygon};
use ctplan::lattice::{GoalPose, Lattice, Primitive, State};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn lattice() -> Lattice {
    Lattice::new(&ctplan::scenario::small())
}

fn inward_home(l: &Lattice) -> State {
    let mut s = l.home().clone();
    s.q[0] += l.step_cells[0];
    s
}

/// A lattice state near the grasp pose of `g` at time index `t`.
fn state_at_grasp(l: &Lattice, g: &GoalPose, t: u32) -> Option<State> {
    let obj = l.region.pose(g);
    let o = l.world.object_position(&obj, t as f64 * l.dt);
    let seeds = [l.angles(&l.home().q).to_vec(), vec![1.2, 0.6, 0.3], vec![2.0, -0.8, -0.6]];
    for seed in seeds {
        let yaw0 = forward_kinematics(&l.arm, &seed).unwrap().orientation;
        let yaw = l.world.nearest_grasp_yaw(&obj, yaw0);
        let Some(q) = solve_ik(l, &seed, [o[0], o[1], yaw]) else { continue };
        let Some(qs) = l.snap_angles(&q) else { continue };
        let s = State { q: qs, t };
        if !l.state_collides(&s, None) {
            return Some(s);
        }
    }
    None
}

#[test]
fn obstacle_in_the_way_removes_only_that_move() {
    let mut l = lattice();
    let g = l.region.from_key(0).unwrap();
    let s = inward_home(&l);
    let plus = |l: &Lattice| {
        l.successors(&s, &g)
            .iter()
            .any(|x| x.primitive == Primitive::Joint { joint: 0, dir: 1, steps: l.step_durations[0] })
    };
    assert!(plus(&l));
    let before = l.successors(&s, &g).len();
    let mut q = s.q.clone();
    q[0] += l.step_cells[0];
    let tip = l.ee(&State { q, t: 1 }).position;
    let r = 0.01;
    l.world.static_obstacles.push(Polygon::new(vec![
        [tip[0] - r, tip[1] - r],
        [tip[0] + r, tip[1] - r],
        [tip[0] + r, tip[1] + r],
        [tip[0] - r, tip[1] + r],
    ]));
    assert!(!l.state_collides(&s, None));
    assert!(!plus(&l));
    assert_eq!(l.successors(&s, &g).len(), before - 1);
}

#[test]
fn grasp_successor_at_a_trigger_state() {
    let l = lattice();
    let mut trigger = 0;
    let mut grasped = 0;
    for t in l.replan_index() + 1..l.horizon {
        for g in l.region.all() {
            let Some(s) = state_at_grasp(&l, &g, t) else { continue };
            if !l.trigger_dynamic(&s, &g) {
                continue;
            }
            trigger += 1;
            let succ = l.successors(&s, &g);
            let Some(grasp) = succ
                .iter()
                .find(|x| matches!(x.primitive, Primitive::DynamicGrasp { .. }))
            else {
                continue;
            };
            grasped += 1;
            let r = l.dynamic_grasp(&s, &g);
            assert_eq!(r.terminal, grasp.state);
            let obj = l.region.pose(&g);
            assert!(l.is_grasp_success(r.final_angles(), l.time_of(&grasp.state), &obj));
        }
    }
    eprintln!("{grasped} of {trigger} trigger states grasp");
    assert!(trigger > 0 && 2 * grasped > trigger);
}

#[test]
fn trigger_is_off_at_ten_times_the_distance() {
    let l = lattice();
    let g = l.region.from_key(0).unwrap();
    let obj = l.region.pose(&g);
    let s = (0..=l.horizon)
        .flat_map(|t| {
            let mut s = l.home().clone();
            s.t = t;
            Some(s)
        })
        .find(|s| {
            let (d, _) = l.grasp_offsets(s, &obj);
            d >= 10.0 * l.params.d_trigger
        })
        .expect("a far state");
    assert!(!l.trigger_dynamic(&s, &g));
}

#[test]
fn stationary_object_at_the_gripper_closes_at_once() {
    let mut l = lattice();
    l.world.conveyor_speed = 0.0;
    let t = l.replan_index() + 1;
    let s = State { q: l.home().q.clone(), t };
    let ee = l.ee(&s);
    let obj = ObjectPose {
        x: ee.position[0],
        y: ee.position[1],
        yaw: ee.orientation,
    };
    let r = l.dynamic_grasp_towards(&s, &obj, &obj);
    assert!(r.success);
    assert_eq!(r.enclosed_at, Some(l.time_of(&s)));
    let closing = ((l.params.t_close / l.dt) - 1e-9).ceil() as u32;
    assert_eq!(r.terminal.t, s.t + closing.max(1));
}

#[test]
fn object_faster_than_the_arm_escapes() {
    let mut l = lattice();
    l.world.conveyor_speed = 3.0 * l.max_ee_speed();
    let t = l.replan_index() + 1;
    let s = State { q: l.home().q.clone(), t };
    let ee = l.ee(&s);
    let obj = ObjectPose {
        x: ee.position[0] + 0.05 - l.world.conveyor_speed * l.time_of(&s),
        y: ee.position[1],
        yaw: ee.orientation,
    };
    assert!(!l.dynamic_grasp_towards(&s, &obj, &obj).success);
}

#[test]
fn grasp_ends_on_the_time_grid() {
    let l = lattice();
    let mut found = 0;
    for key in 0..l.region.len() as u32 {
        let g = l.region.from_key(key).unwrap();
        let Some(s) = state_at_grasp(&l, &g, l.replan_index() + 5) else { continue };
        let r = l.dynamic_grasp(&s, &g);
        if !r.success {
            continue;
        }
        found += 1;
        let end = r.trajectory.last().unwrap().0;
        assert!((end - l.time_of(&r.terminal)).abs() < 1e-9);
        let enclosed = r.enclosed_at.unwrap();
        assert!(l.time_of(&r.terminal) >= enclosed + l.params.t_close - 1e-9);
        assert!(l.time_of(&r.terminal) < enclosed + l.params.t_close + l.dt);
    }
    assert!(found > 0);
}

#[test]
fn a_path_latches_onto_itself() {
    let l = lattice();
    let s = inward_home(&l);
    let next = State { q: s.q.clone(), t: s.t + 1 };
    let mut moved = next.clone();
    moved.q[1] += l.step_cells[1];
    for path in [vec![s.clone(), next.clone()], vec![s.clone(), moved.clone()]] {
        assert_eq!(l.can_latch(&s, &path, None), Some(path[1].clone()));
    }
}

/// Independent latch check: target one step later, per-joint speed limit,
/// collision-free interpolation at the configured spacing.
fn latch_oracle(l: &Lattice, s: &State, target: &State) -> bool {
    if target.t != s.t + 1 {
        return false;
    }
    let a = l.angles(&s.q);
    let b = l.angles(&target.q);
    for j in 0..a.len() {
        if target.q[j] < l.lo[j] || target.q[j] > l.hi[j] {
            return false;
        }
        if (b[j] - a[j]).abs() > l.arm.joint_velocity_limits[j] * l.dt + 1e-9 {
            return false;
        }
    }
    let widest = a.iter().zip(&b).map(|(x, y)| (y - x).abs()).fold(0.0, f64::max);
    let n = ((widest / l.params.collision_step_deg.to_radians()).ceil() as usize).max(1);
    (1..=n).all(|i| {
        let u = i as f64 / n as f64;
        let q: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + u * (y - x)).collect();
        !collides(&l.arm, &l.world, &q, l.time_of(s) + u * l.dt, None)
    })
}

#[test]
fn latching_agrees_with_an_independent_check() {
    let l = lattice();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut accepted = 0;
    for _ in 0..2000 {
        let q: Vec<i32> = (0..3).map(|j| rng.gen_range(l.lo[j]..=l.hi[j])).collect();
        let s = State::new(&q, rng.gen_range(0..l.horizon));
        if l.state_collides(&s, None) {
            continue;
        }
        let tq: Vec<i32> = (0..3)
            .map(|j| q[j] + rng.gen_range(-2 * l.step_cells[j]..=2 * l.step_cells[j]))
            .collect();
        let dt = if rng.gen_bool(0.9) { 1 } else { 2 };
        let target = State::new(&tq, s.t + dt);
        let got = l.can_latch(&s, std::slice::from_ref(&target), None).is_some();
        assert_eq!(got, latch_oracle(&l, &s, &target), "{s} -> {target}");
        accepted += got as usize;
    }
    assert!(accepted > 50);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn successors_are_deterministic_later_and_in_bounds(
        q0 in -15i32..=105, q1 in -75i32..=75, q2 in -75i32..=75,
        t in 0u32..14, gk in 0u32..198,
    ) {
        let l = lattice();
        let s = State::new(&[q0, q1, q2], t);
        let g = l.region.from_key(gk).unwrap();
        let a = l.successors(&s, &g);
        let b = l.successors(&s, &g);
        prop_assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            prop_assert_eq!(&x.state, &y.state);
            prop_assert!(x.state.t > s.t);
            let grasp = matches!(x.primitive, Primitive::DynamicGrasp { .. });
            prop_assert!(x.state.t <= l.horizon || grasp);
            prop_assert!(l.in_limits(&x.state.q));
            prop_assert!((x.cost - (x.state.t - s.t) as f64 * l.dt).abs() < 1e-12);
        }
    }

    #[test]
    fn grasp_successors_are_sound(gk in 0u32..198, dt in 3u32..6, jitter in prop::collection::vec(-3i32..=3, 3)) {
        let l = lattice();
        let g = l.region.from_key(gk).unwrap();
        let Some(mut s) = state_at_grasp(&l, &g, l.replan_index() + dt) else { return Ok(()) };
        for j in 0..3 {
            s.q[j] = (s.q[j] + jitter[j]).clamp(l.lo[j], l.hi[j]);
        }
        let obj = l.region.pose(&g);
        for x in l.successors(&s, &g) {
            if matches!(x.primitive, Primitive::DynamicGrasp { .. }) {
                let r = l.dynamic_grasp(&s, &g);
                prop_assert!(r.success);
                prop_assert_eq!(&r.terminal, &x.state);
                prop_assert!(l.is_grasp_success(r.final_angles(), l.time_of(&x.state), &obj));
                prop_assert!(!l.state_collides(&x.state, Some(&obj)));
            }
        }
    }
}
