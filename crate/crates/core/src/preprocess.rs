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
//! Offline stage: root paths from a start state, the recursive backward
//! pass over every replannable state, latching onto home root paths, and
//! the coverage map that the query stage reads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustc_hash::{FxHashMap, FxHashSet};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

use crate::config::Config;
use crate::lattice::{GoalPose, Lattice, State};
use crate::search::{Path, PlanResult, Planner, SearchBudget};

pub type GoalSet = BTreeSet<u32>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RootPath {
    pub id: u32,
    pub path: Path,
    /// Goal keys certified from `origin_state` with this path as experience.
    pub covered_goals: GoalSet,
    pub origin_state: State,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatchEntry {
    pub target: State,
    /// Goals of the home path certified from `target`.
    pub goals: GoalSet,
}

/// Flat lookup tables produced by preprocessing.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CoverageMap {
    /// `(state key, goal key)` to root path id.
    pub entries: FxHashMap<(u64, u32), u32>,
    /// `(state key, home root path id)` to the latch target.
    pub latch_entries: FxHashMap<(u64, u32), LatchEntry>,
    pub home_paths: Vec<u32>,
    /// Goals recorded unreachable from a state.
    pub unreachable: FxHashMap<u64, GoalSet>,
}

impl CoverageMap {
    pub fn lookup(&self, state_key: u64, goal_key: u32) -> Option<u32> {
        self.entries.get(&(state_key, goal_key)).copied()
    }

    pub fn latch_target(&self, state_key: u64, root: u32) -> Option<&LatchEntry> {
        self.latch_entries.get(&(state_key, root))
    }

    pub fn is_unreachable(&self, state_key: u64, goal_key: u32) -> bool {
        self.unreachable
            .get(&state_key)
            .is_some_and(|set| set.contains(&goal_key))
    }

    /// Insert unless the pair already has an entry.
    fn insert(&mut self, state_key: u64, goal_key: u32, root: u32) {
        self.entries.entry((state_key, goal_key)).or_insert(root);
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreprocessStats {
    pub root_plans: usize,
    pub root_plan_failures: usize,
    pub bounded_calls: usize,
    pub latch_attempts: usize,
    pub latches: usize,
    pub visited_states: usize,
    /// Plans that succeeded but left the stored states before the cutoff.
    pub off_path_rejections: usize,
}

/// Output of the offline stage.
#[derive(Debug, Clone, PartialEq)]
pub struct Preprocessed {
    pub roots: Vec<RootPath>,
    pub map: CoverageMap,
    pub stats: PreprocessStats,
}

impl Preprocessed {
    /// Goals reachable from home, over the full region.
    pub fn home_coverage(&self, lat: &Lattice) -> usize {
        let home = lat.key(lat.home());
        lat.region
            .all()
            .filter(|g| self.map.lookup(home, lat.region.key(g)).is_some())
            .count()
    }

    /// Every on-path state up to the replan cutoff, each paired with the
    /// first root path it lies on, in a stable order.
    pub fn replannable_states(&self, lat: &Lattice) -> Vec<(State, u32)> {
        replannable_states(&self.roots, lat)
    }
}

/// Every on-path state of `roots` up to the replan cutoff, each paired with
/// the first root path it lies on, in a stable order.
pub fn replannable_states(roots: &[RootPath], lat: &Lattice) -> Vec<(State, u32)> {
    let t_rc = lat.replan_index();
    let mut seen = FxHashSet::default();
    let mut out = Vec::new();
    for r in roots {
        for s in r.path.states.iter().take_while(|s| s.t <= t_rc) {
            if seen.insert(lat.key(s)) {
                out.push((s.clone(), r.id));
            }
        }
    }
    out
}

pub struct Preprocessor<'a> {
    lat: &'a Lattice,
    planner: Planner<'a>,
    root_budget: SearchBudget,
    bounded: SearchBudget,
    latching: bool,
    t_rc: u32,
    rng: ChaCha8Rng,
    roots: Vec<RootPath>,
    map: CoverageMap,
    home_paths: Vec<u32>,
    root_failures: FxHashSet<(u64, u32)>,
    /// Goals of a home path certified from one of its later states.
    latch_certified: FxHashMap<(u64, u32), GoalSet>,
    stats: PreprocessStats,
}

impl<'a> Preprocessor<'a> {
    pub fn new(lat: &'a Lattice, cfg: &Config) -> Self {
        let s = &cfg.search;
        Preprocessor {
            lat,
            planner: Planner::new(lat, s.lambda, s.weight),
            root_budget: SearchBudget::root(s.root_budget),
            bounded: SearchBudget::bounded(s.budget_for(cfg.preprocess.t_bound)),
            latching: cfg.preprocess.latching,
            t_rc: cfg.replan_steps(),
            rng: ChaCha8Rng::seed_from_u64(cfg.preprocess.seed),
            roots: Vec::new(),
            map: CoverageMap::default(),
            home_paths: Vec::new(),
            root_failures: FxHashSet::default(),
            latch_certified: FxHashMap::default(),
            stats: PreprocessStats::default(),
        }
    }

    pub fn bounded_budget(&self) -> SearchBudget {
        self.bounded
    }

    pub fn roots(&self) -> &[RootPath] {
        &self.roots
    }

    pub fn map(&self) -> &CoverageMap {
        &self.map
    }

    pub fn stats(&self) -> &PreprocessStats {
        &self.stats
    }

    /// Root paths that latching targets. Set by the pass from home.
    pub fn set_home_paths(&mut self, ids: Vec<u32>) {
        self.home_paths = ids;
    }

    /// Full offline stage from the home state over the whole goal region.
    pub fn run(mut self) -> Preprocessed {
        let all: GoalSet = (0..self.lat.region.len() as u32).collect();
        let home = self.lat.home().clone();
        self.preprocess(&home, all, GoalSet::new(), None);
        self.map.home_paths = self.home_paths.clone();
        Preprocessed {
            roots: self.roots,
            map: self.map,
            stats: self.stats,
        }
    }

    /// A successful plan whose replannable states all lie on `root`, so
    /// that executing it never leaves the stored states before the cutoff.
    fn stays_on(&mut self, r: &PlanResult, root: &Path) -> bool {
        let Some(p) = &r.path else { return false };
        let ok = p
            .states
            .iter()
            .take_while(|s| s.t <= self.t_rc)
            .all(|s| root.index_of(s).is_some());
        if !ok {
            self.stats.off_path_rejections += 1;
        }
        ok
    }

    fn goal(&self, key: u32) -> GoalPose {
        self.lat.region.from_key(key).expect("goal key in range")
    }

    fn mark_unreachable(&mut self, s: &State, goals: &GoalSet) {
        if !goals.is_empty() {
            self.map
                .unreachable
                .entry(self.lat.key(s))
                .or_default()
                .extend(goals.iter().copied());
        }
    }

    /// Sample uncovered goals, plan a root path to each with the large
    /// budget and sweep the remaining goals with the bounded budget.
    /// Returns the new root path ids and the goals found unreachable.
    pub fn plan_root_paths(&mut self, start: &State, mut uncovered: GoalSet) -> (Vec<u32>, GoalSet) {
        let start_key = self.lat.key(start);
        let mut psi = Vec::new();
        let mut unreachable = GoalSet::new();
        while !uncovered.is_empty() {
            let pick = self.rng.gen_range(0..uncovered.len());
            let gk = *uncovered.iter().nth(pick).expect("index in range");
            uncovered.remove(&gk);
            let g = self.goal(gk);
            if self.root_failures.contains(&(start_key, gk)) {
                unreachable.insert(gk);
                continue;
            }
            self.stats.root_plans += 1;
            let result = self.planner.plan(start, &g, &self.root_budget);
            let Some(path) = result.path else {
                self.stats.root_plan_failures += 1;
                self.root_failures.insert((start_key, gk));
                unreachable.insert(gk);
                continue;
            };
            let id = self.roots.len() as u32;
            let mut covered = GoalSet::from([gk]);
            for &other in uncovered.iter() {
                self.stats.bounded_calls += 1;
                let r = self
                    .planner
                    .plan_with_experience(start, &self.goal(other), &path, &self.bounded);
                if self.stays_on(&r, &path) {
                    covered.insert(other);
                }
            }
            for c in &covered {
                uncovered.remove(c);
                self.map.insert(start_key, *c, id);
            }
            log::debug!(
                "root path {id} from {start} to goal {gk}: {} states, covers {}",
                path.len(),
                covered.len()
            );
            self.roots.push(RootPath {
                id,
                path,
                covered_goals: covered,
                origin_state: start.clone(),
            });
            psi.push(id);
        }
        (psi, unreachable)
    }

    /// Latch from `s` onto home root paths one step later. Goals of a home
    /// path move to covered when the latch motion is valid for them and
    /// each is certified from the latch target.
    pub fn try_latching(&mut self, s: &State, uncovered: &mut GoalSet, covered: &mut GoalSet) {
        let s_key = self.lat.key(s);
        for hi in 0..self.home_paths.len() {
            let id = self.home_paths[hi];
            let wanted: Vec<u32> = self.roots[id as usize]
                .covered_goals
                .intersection(uncovered)
                .copied()
                .collect();
            if wanted.is_empty() {
                continue;
            }
            self.stats.latch_attempts += 1;
            let root_path = self.roots[id as usize].path.clone();
            let Some(target) = self.lat.can_latch(s, root_path.pre_grasp(), None) else {
                continue;
            };
            let t_key = self.lat.key(&target);
            let needs_object = self.lat.time_of(&target) > self.lat.world.object_clear_until;
            let mut gained = Vec::new();
            for gk in wanted {
                let g = self.goal(gk);
                if needs_object {
                    let obj = self.lat.region.pose(&g);
                    if !self.lat.latch_motion_ok(s, &target, Some(&obj)) {
                        continue;
                    }
                }
                if self.certify_from_latch(&target, t_key, id, gk, &root_path) {
                    gained.push(gk);
                }
            }
            if gained.is_empty() {
                continue;
            }
            self.stats.latches += 1;
            let entry = self
                .map
                .latch_entries
                .entry((s_key, id))
                .or_insert_with(|| LatchEntry {
                    target,
                    goals: GoalSet::new(),
                });
            entry.goals.extend(gained.iter().copied());
            for gk in gained {
                uncovered.remove(&gk);
                covered.insert(gk);
            }
        }
    }

    fn certify_from_latch(
        &mut self,
        target: &State,
        t_key: u64,
        id: u32,
        gk: u32,
        root_path: &Path,
    ) -> bool {
        if let Some(set) = self.latch_certified.get(&(t_key, id)) {
            if set.contains(&gk) {
                return true;
            }
        }
        self.stats.bounded_calls += 1;
        let r = self
            .planner
            .plan_with_experience(target, &self.goal(gk), root_path, &self.bounded);
        let ok = self.stays_on(&r, root_path);
        if ok {
            self.latch_certified.entry((t_key, id)).or_default().insert(gk);
        }
        ok
    }

    /// Recursive pass. Returns the goals still uncovered at `start` (those
    /// found unreachable) and the goals covered there.
    ///
    /// Goals in `covered` are served by later states of `parent`. They get
    /// an entry at `start` with `parent` as experience, so that a robot that
    /// branched onto one of the new root paths can still reach them; those
    /// that cannot be certified are planned like uncovered goals.
    pub fn preprocess(
        &mut self,
        start: &State,
        mut uncovered: GoalSet,
        covered: GoalSet,
        parent: Option<u32>,
    ) -> (GoalSet, GoalSet) {
        self.stats.visited_states += 1;
        let mut covered = covered;
        if let Some(pid) = parent {
            let path = self.roots[pid as usize].path.clone();
            let s_key = self.lat.key(start);
            let mut lost = Vec::new();
            for &gk in covered.iter() {
                if self.map.lookup(s_key, gk).is_some() {
                    continue;
                }
                self.stats.bounded_calls += 1;
                let r = self
                    .planner
                    .plan_with_experience(start, &self.goal(gk), &path, &self.bounded);
                if self.stays_on(&r, &path) {
                    self.map.insert(s_key, gk, pid);
                } else {
                    lost.push(gk);
                }
            }
            for gk in lost {
                covered.remove(&gk);
                uncovered.insert(gk);
            }
        }
        let (psi, unreachable) = self.plan_root_paths(start, uncovered.clone());
        if start == self.lat.home() && self.home_paths.is_empty() {
            self.home_paths = psi.clone();
        }
        self.mark_unreachable(start, &unreachable);
        let mut covered_start = covered;
        covered_start.extend(uncovered.difference(&unreachable).copied());

        if start.t <= self.t_rc {
            for &id in &psi {
                self.backward_pass(id, &covered_start);
            }
        }
        (unreachable, covered_start)
    }

    /// Walk root path `id` from its last replannable state back to (but
    /// excluding) its origin, covering the goals of `responsible`.
    fn backward_pass(&mut self, id: u32, responsible: &GoalSet) {
        let path = self.roots[id as usize].path.clone();
        let mut uncovered = responsible.clone();
        let mut covered = GoalSet::new();
        let last = path.states.partition_point(|s| s.t <= self.t_rc);
        for idx in (1..last).rev() {
            if path.terminal_grasp && idx + 1 == path.len() {
                continue;
            }
            let s = path.states[idx].clone();
            let s_key = self.lat.key(&s);
            self.certify_along(&s, s_key, id, &path, &mut uncovered, &mut covered);
            if uncovered.is_empty() {
                break;
            }
            if self.latching {
                self.try_latching(&s, &mut uncovered, &mut covered);
                if uncovered.is_empty() {
                    break;
                }
            }
            let (left, now_covered) = self.preprocess(&s, uncovered, covered, Some(id));
            uncovered = left;
            covered = now_covered;
            if uncovered.is_empty() {
                break;
            }
        }
    }

    /// Certify uncovered goals from `s` with its own root path.
    fn certify_along(
        &mut self,
        s: &State,
        s_key: u64,
        id: u32,
        path: &Path,
        uncovered: &mut GoalSet,
        covered: &mut GoalSet,
    ) {
        let mut gained = Vec::new();
        for &gk in uncovered.iter() {
            if self.map.lookup(s_key, gk).is_some() {
                // Certified by an earlier pass through the same state.
                gained.push(gk);
                continue;
            }
            if self.map.is_unreachable(s_key, gk) {
                continue;
            }
            self.stats.bounded_calls += 1;
            let r = self
                .planner
                .plan_with_experience(s, &self.goal(gk), path, &self.bounded);
            let ok = self.stays_on(&r, path);
            if ok {
                self.map.insert(s_key, gk, id);
                gained.push(gk);
            }
        }
        for gk in gained {
            uncovered.remove(&gk);
            covered.insert(gk);
        }
    }
}

/// Run the offline stage for a configuration.
pub fn preprocess_config(cfg: &Config) -> (Lattice, Preprocessed) {
    let lat = Lattice::new(cfg);
    let out = Preprocessor::new(&lat, cfg).run();
    (lat, out)
}
