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
use std::sync::OnceLock;

use ctplan::artifact::Artifact;
use ctplan::kinematics::ObjectPose;
use ctplan::lattice::Lattice;
use ctplan::preprocess::Preprocessor;
use ctplan::sim::{
    back_project, benchmark_cells, run_benchmark, Estimate, Method, Outcome, Simulator, Strategy,
    CSV_HEADER,
};
use ctplan::Config;

fn config() -> Config {
    ctplan::scenario::small()
}

fn noiseless() -> Config {
    let mut cfg = config();
    let p = &mut cfg.perception;
    p.eps_far = 0.0;
    p.eps_near = 0.0;
    p.yaw_err_far_deg = 0.0;
    p.yaw_err_near_deg = 0.0;
    cfg
}

fn fixture() -> &'static (Lattice, Artifact) {
    static F: OnceLock<(Lattice, Artifact)> = OnceLock::new();
    F.get_or_init(|| {
        let cfg = config();
        let lat = Lattice::new(&cfg);
        let pre = Preprocessor::new(&lat, &cfg).run();
        (lat, Artifact::new(cfg.planning(), &pre))
    })
}

#[test]
fn back_projection_without_delay_only_snaps() {
    let (lat, _) = fixture();
    let g = lat.region.from_key(17).unwrap();
    let mut p = lat.region.pose(&g);
    p.x += 0.3 * lat.region.x_res;
    assert_eq!(back_project(&p, 0.0, 0.2, &lat.region), (g, true));
}

#[test]
fn back_projection_removes_belt_travel() {
    let (lat, _) = fixture();
    let g = lat.region.from_key(40).unwrap();
    let p = lat.region.pose(&g);
    let seen = ObjectPose { x: p.x + 0.10, ..p };
    assert_eq!(back_project(&seen, 0.5, 0.2, &lat.region), (g, true));
}

#[test]
fn back_projection_clamps_at_the_region_edge() {
    let (lat, _) = fixture();
    let cfg = config();
    let r = &lat.region;
    let edge = r.pose(&r.from_key(0).unwrap());
    let seen = ObjectPose {
        x: edge.x - cfg.perception.eps_far,
        y: edge.y - cfg.perception.eps_far,
        ..edge
    };
    let (g, inside) = back_project(&seen, 0.0, 0.2, r);
    assert!(!inside);
    assert_eq!((g.x_idx, g.y_idx), (0, 0));
}

#[test]
fn without_noise_every_strategy_agrees() {
    let (lat, art) = fixture();
    let cfg = noiseless();
    let sim = Simulator::new(&cfg, lat, art);
    for seed in 0..8 {
        let runs: Vec<_> = [Strategy::E1, Strategy::E2, Strategy::E3]
            .into_iter()
            .map(|s| sim.run_episode(s, seed))
            .collect();
        for r in &runs {
            assert_eq!(r.outcome, runs[0].outcome, "seed {seed}");
            assert_eq!(r.path_cost_s, runs[0].path_cost_s, "seed {seed}");
        }
    }
}

#[test]
fn bad_first_estimate_makes_the_single_shot_miss() {
    let (lat, art) = fixture();
    let cfg = noiseless();
    let sim = Simulator::new(&cfg, lat, art);
    let mut checked = 0;
    for seed in 0..20 {
        let truth = sim.sample_truth(seed);
        let mut est = sim.estimates(&truth, seed);
        // toward the middle of the region, so the offset survives clamping
        let inward = if truth.x > lat.region.x_exec { -1.0 } else { 1.0 };
        est[0].pose.x += inward * 3.0 * cfg.perception.grasp_tol_pos;
        let e2 = sim.run_with_estimates(Strategy::E2, seed, truth, est.clone());
        if e2.events[0].success {
            assert_ne!(e2.outcome, Outcome::PickupSuccess, "seed {seed}");
            checked += 1;
        }
        let e1 = sim.run_with_estimates(Strategy::E1, seed, truth, est);
        assert_eq!(e1.outcome, sim.run_episode(Strategy::E1, seed).outcome);
    }
    assert!(checked >= 10);
}

#[test]
fn generous_budget_lets_both_baselines_pick_up() {
    let (lat, art) = fixture();
    let cfg = noiseless();
    let sim = Simulator::new(&cfg, lat, art);
    let ours: Vec<u64> = (0..12)
        .filter(|&s| sim.run_episode(Strategy::E2, s).outcome == Outcome::PickupSuccess)
        .collect();
    assert!(ours.len() >= 6);
    for m in [Method::Wastar, Method::Rrt] {
        let ok = ours
            .iter()
            .filter(|&&s| sim.run_baseline(m, 1.0, s).outcome == Outcome::PickupSuccess)
            .count();
        assert!(2 * ok >= ours.len(), "{m}: {ok} of {}", ours.len());
    }
}

#[test]
fn vanishing_budget_fails_to_plan() {
    let (lat, art) = fixture();
    let cfg = config();
    let sim = Simulator::new(&cfg, lat, art);
    for m in [Method::Wastar, Method::Rrt] {
        let e = sim.run_baseline(m, 1e-6, 3);
        assert_eq!(e.outcome, Outcome::PlannerFailure);
        assert!(e.events.iter().all(|x| !x.success));
    }
}

#[test]
fn no_episodes_gives_just_the_header() {
    let (lat, art) = fixture();
    let mut cfg = config();
    cfg.benchmark.episodes = 0;
    let rep = run_benchmark(&cfg, lat, art, &benchmark_cells(&cfg), 1);
    assert_eq!(rep.to_csv(), format!("{CSV_HEADER}\n"));
    assert!(rep.episodes.is_empty());
}

#[test]
fn ours_replans_at_least_as_often() {
    let (lat, art) = fixture();
    let cfg = config();
    let sim = Simulator::new(&cfg, lat, art);
    for seed in 0..6 {
        let ours = sim.run_episode(Strategy::E1, seed).cycles();
        for m in [Method::Wastar, Method::Rrt] {
            assert!(ours >= sim.run_baseline(m, 0.2, seed).cycles());
        }
    }
}

#[test]
fn benchmark_output_is_reproducible() {
    let (lat, art) = fixture();
    let mut cfg = config();
    cfg.benchmark.episodes = 4;
    let cells = benchmark_cells(&cfg);
    let a = run_benchmark(&cfg, lat, art, &cells, 1);
    let b = run_benchmark(&cfg, lat, art, &cells, 1);
    let c = run_benchmark(&cfg, lat, art, &cells, 2);
    assert_eq!(a.to_csv(), b.to_csv());
    assert_eq!(a.to_csv(), c.to_csv());
    assert_eq!(a.rows.len(), 3 + 2 * cfg.benchmark.baseline_budgets.len());
}

#[test]
fn estimates_respect_their_bounds() {
    let (lat, art) = fixture();
    let cfg = config();
    let sim = Simulator::new(&cfg, lat, art);
    for seed in 0..20 {
        let truth = sim.sample_truth(seed);
        for Estimate { time, pose } in sim.estimates(&truth, seed) {
            let t = time.max(0.0);
            let (eps, yaw) = sim.perception.error_bounds(&truth, t);
            let x = truth.x + cfg.world.conveyor_speed * t;
            assert!(((pose.x - x).powi(2) + (pose.y - truth.y).powi(2)).sqrt() <= eps + 1e-12);
            let dyaw = ctplan::kinematics::normalize_angle(pose.yaw - truth.yaw).abs();
            assert!(dyaw <= yaw + 1e-12);
        }
    }
}
