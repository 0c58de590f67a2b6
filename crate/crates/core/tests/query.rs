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
use ctplan::lattice::{Lattice, Primitive, State};
use ctplan::preprocess::Preprocessor;
use ctplan::query::{
    merge_paths, merge_paths_by_latching, MergeError, QueryEngine, QueryError, QueryOutcome,
};
use ctplan::search::{replay, Path, Planner, SearchBudget};
use ctplan::Config;

fn config() -> Config {
    ctplan::scenario::small()
}

fn fixture() -> &'static (Lattice, Artifact) {
    static F: OnceLock<(Lattice, Artifact)> = OnceLock::new();
    F.get_or_init(|| {
        let cfg = config();
        let lat = Lattice::new(&cfg);
        let pre = Preprocessor::new(&lat, &cfg).run();
        let art = Artifact::new(cfg.planning(), &pre);
        (lat, art)
    })
}

fn replays(lat: &Lattice, p: &Path) -> bool {
    let obj = lat.region.pose(&p.goal);
    replay(lat, p, &obj, &obj).is_ok()
}

#[test]
fn same_goal_keeps_the_path() {
    let (lat, art) = fixture();
    let engine = QueryEngine::new(lat, art);
    let root = &art.roots[0].path;
    let (p, stats) = engine.query(&root.goal, root, 2).unwrap();
    assert_eq!(&p, root);
    assert_eq!(stats.outcome, QueryOutcome::Unchanged);
    assert_eq!(stats.map_lookups, 0);
    assert_eq!(stats.plan_calls, 0);
}

#[test]
fn goal_covered_at_the_cutoff_state_costs_one_lookup() {
    let (lat, art) = fixture();
    let engine = QueryEngine::new(lat, art);
    let mut checked = 0;
    for r in &art.roots {
        let p = &r.path;
        let last = p.states.partition_point(|s| s.t <= lat.replan_index()) - 1;
        let key = lat.key(&p.states[last]);
        for g in lat.region.all() {
            if g == p.goal || art.map.lookup(key, lat.region.key(&g)).is_none() {
                continue;
            }
            let (_, stats) = engine.query(&g, p, 0).unwrap();
            assert_eq!(stats.map_lookups, 1);
            assert_eq!(stats.plan_calls, 1);
            assert_eq!(stats.transition_t, Some(p.states[last].t));
            checked += 1;
        }
    }
    assert!(checked > 0);
}

#[test]
fn unreachable_everywhere_is_reported_as_such() {
    let (lat, art) = fixture();
    let engine = QueryEngine::new(lat, art);
    let home = lat.key(lat.home());
    let gk = *art.map.unreachable[&home].first().expect("an unreachable goal");
    let g = lat.region.from_key(gk).unwrap();
    let current = Path::single(lat.home().clone(), art.roots[0].path.goal);
    let err = engine.query(&g, &current, 0).unwrap_err();
    assert!(matches!(err, QueryError::Unreachable { .. }));
    assert_eq!(err.stats().unwrap().outcome, QueryOutcome::FailureUnreachable);
}

#[test]
fn merging_at_the_first_state_is_the_new_path() {
    let (_, art) = fixture();
    let a = &art.roots[0].path;
    let b = &art.roots[1].path;
    assert_eq!(a.first(), b.first());
    assert_eq!(&merge_paths(a, b, 0).unwrap(), b);
}

#[test]
fn merging_at_the_last_state_concatenates() {
    let (lat, art) = fixture();
    let pl = Planner::new(lat, 1.0, 50.0);
    let prefix = Path {
        states: (0..3).map(|t| State { q: lat.home().q.clone(), t }).collect(),
        primitives: vec![Primitive::Wait; 2],
        goal: art.roots[0].path.goal,
        terminal_grasp: false,
    };
    let next = pl
        .plan_with_experience(prefix.last(), &prefix.goal, &art.roots[0].path, &SearchBudget::root(2_000_000))
        .path
        .unwrap();
    let m = merge_paths(&prefix, &next, prefix.len() - 1).unwrap();
    assert_eq!(m.states[..prefix.len()], prefix.states[..]);
    assert_eq!(m.states[prefix.len() - 1..], next.states[..]);
    assert_eq!(m.primitives.len(), prefix.primitives.len() + next.primitives.len());
    assert!(replays(lat, &m));
}

#[test]
fn merge_rejects_a_foreign_state() {
    let (_, art) = fixture();
    let a = &art.roots[0].path;
    let b = &art.roots[1].path;
    assert_eq!(merge_paths(a, b, 1), Err(MergeError::NotOnPath));
}

#[test]
fn self_latch_matches_a_plain_merge() {
    let (lat, art) = fixture();
    let a = &art.roots[0].path;
    let next = a.suffix(3);
    let latched = merge_paths_by_latching(lat, a, &next, 2, None).unwrap();
    let plain = merge_paths(a, &next, 3).unwrap();
    assert_eq!(latched.states, plain.states);
    assert_eq!(latched.primitives.iter().filter(|p| **p == Primitive::Latch).count(), 1);
    assert!(replays(lat, &latched));
}

#[test]
fn stored_latch_gives_exactly_one_latch_primitive() {
    let (lat, art) = fixture();
    let engine = QueryEngine::new(lat, art);
    let mut seen = 0;
    for (&(sk, id), entry) in &art.map.latch_entries {
        let s = lat.state_from_key(sk);
        let Some(owner) = art.roots.iter().find(|r| r.path.index_of(&s).is_some()) else {
            continue;
        };
        let idx = owner.path.index_of(&s).unwrap();
        for &gk in &entry.goals {
            let g = lat.region.from_key(gk).unwrap();
            let Ok((p, stats)) = engine.query(&g, &owner.path, idx) else { continue };
            if stats.outcome != QueryOutcome::Latched {
                continue;
            }
            assert_eq!(p.primitives.iter().filter(|p| **p == Primitive::Latch).count(), 1);
            assert!(art.roots[id as usize].path.index_of(&entry.target).is_some());
            assert!(replays(lat, &p));
            seen += 1;
        }
    }
    assert!(seen > 0, "no query latched");
}

#[test]
fn latch_past_a_joint_limit_is_rejected() {
    let (lat, art) = fixture();
    let a = &art.roots[0].path;
    let s = &a.states[1];
    let mut q = s.q.clone();
    q[0] = lat.lo[0] - 1;
    let bad = Path::single(State { q, t: s.t + 1 }, a.goal);
    assert!(matches!(
        merge_paths_by_latching(lat, a, &bad, 1, None),
        Err(MergeError::InvalidLatch { .. })
    ));
}

#[test]
fn answers_are_continuous_and_scans_run_backwards() {
    let (lat, art) = fixture();
    let engine = QueryEngine::new(lat, art);
    for r in art.roots.iter().take(6) {
        for start in [0, 2, 4] {
            for g in lat.region.all().step_by(5) {
                let Ok((p, stats)) = engine.query(&g, &r.path, start) else { continue };
                assert_eq!(p.states[..=start], r.path.states[..=start]);
                assert!(p.states.windows(2).all(|w| w[0].t < w[1].t));
                assert!(stats.scanned.windows(2).all(|w| w[0] > w[1]));
                assert!(stats.map_lookups <= lat.replan_index() as usize + 1);
                assert!(stats.plan_calls <= 1);
                assert!(replays(lat, &p));
            }
        }
    }
}
