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
//! Artifact verification: exhaustive reachability, coverage completeness,
//! certificate re-runs and constant-time accounting.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustc_hash::FxHashMap;
use serde::Serialize;

use crate::artifact::Artifact;
use crate::lattice::{GoalPose, Lattice, Primitive, State};
use crate::preprocess::replannable_states;
use crate::query::QueryEngine;
use crate::search::{replay, Planner, SearchBudget};

/// Exhaustive reachability over the lattice: a state reaches a goal when
/// some chain of successors ends in a successful grasp.
pub struct Reachability<'a> {
    lat: &'a Lattice,
    memo: FxHashMap<(u64, u32), bool>,
}

impl<'a> Reachability<'a> {
    pub fn new(lat: &'a Lattice) -> Self {
        Reachability {
            lat,
            memo: FxHashMap::default(),
        }
    }

    pub fn reachable(&mut self, s: &State, g: &GoalPose) -> bool {
        let key = (self.lat.key(s), self.lat.region.key(g));
        if let Some(&r) = self.memo.get(&key) {
            return r;
        }
        let mut r = false;
        if !self.lat.can_still_trigger(s, g) {
            self.memo.insert(key, r);
            return r;
        }
        for succ in self.lat.successors(s, g) {
            if matches!(succ.primitive, Primitive::DynamicGrasp { .. })
                || self.reachable(&succ.state, g)
            {
                r = true;
                break;
            }
        }
        self.memo.insert(key, r);
        r
    }

    pub fn memo_len(&self) -> usize {
        self.memo.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViolationKind {
    /// A reachable goal that the query could not serve.
    Completeness,
    /// A stored entry whose bounded plan no longer succeeds.
    Certificate,
    /// A query exceeding the lookup, call, expansion or time bound.
    Accounting,
    /// A returned path that does not replay.
    Replay,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub state: State,
    pub goal: GoalPose,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct VerifyOptions {
    /// Query every on-path state up to the cutoff, on every root path
    /// through it, for every goal against the exhaustive
    /// reachability check.
    pub completeness: bool,
    pub certificate_samples: usize,
    pub accounting_queries: usize,
    /// Enforce the wall-clock bound on accounting queries.
    pub check_wall_time: bool,
    pub seed: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            completeness: true,
            certificate_samples: 100,
            accounting_queries: 1000,
            check_wall_time: true,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct VerifyReport {
    pub stored_states: usize,
    pub pairs_checked: usize,
    pub reachable_pairs: usize,
    pub certificates_checked: usize,
    pub accounting_queries: usize,
    pub max_lookups: usize,
    pub max_plan_calls: usize,
    pub max_expansions: usize,
    pub max_wall_time_s: f64,
    pub violations: Vec<Violation>,
}

impl VerifyReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Run the checks selected in `opts` on a loaded artifact.
pub fn verify(lat: &Lattice, artifact: &Artifact, opts: &VerifyOptions) -> VerifyReport {
    let engine = QueryEngine::new(lat, artifact);
    let states = replannable_states(&artifact.roots, lat);
    let mut report = VerifyReport {
        stored_states: states.len(),
        ..Default::default()
    };
    let goals: Vec<GoalPose> = lat.region.all().collect();

    if opts.completeness {
        let mut oracle = Reachability::new(lat);
        let t_rc = lat.replan_index();
        for root in &artifact.roots {
            let path = &root.path;
            for (start, s) in path.states.iter().enumerate().take_while(|(_, s)| s.t <= t_rc) {
                for g in &goals {
                    report.pairs_checked += 1;
                    if !oracle.reachable(s, g) {
                        continue;
                    }
                    report.reachable_pairs += 1;
                    match engine.query(g, path, start) {
                        Ok((p, _)) => {
                            let target = lat.region.pose(g);
                            if let Err(e) = replay(lat, &p, &target, &target) {
                                report.violations.push(Violation {
                                    kind: ViolationKind::Replay,
                                    state: s.clone(),
                                    goal: *g,
                                    detail: e.to_string(),
                                });
                            }
                        }
                        Err(e) => report.violations.push(Violation {
                            kind: ViolationKind::Completeness,
                            state: s.clone(),
                            goal: *g,
                            detail: format!("root path {}: {e}", root.id),
                        }),
                    }
                }
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut entries: Vec<(u64, u32, u32)> = artifact
        .map
        .entries
        .iter()
        .map(|(&(s, g), &id)| (s, g, id))
        .collect();
    entries.sort_unstable();
    let planner = Planner::new(lat, artifact.config.search.lambda, artifact.config.search.weight);
    let t_b = artifact.config.preprocess.t_bound;
    let budget = SearchBudget::bounded(artifact.config.search.budget_for(t_b));
    for _ in 0..opts.certificate_samples.min(entries.len()) {
        let (sk, gk, id) = entries[rng.gen_range(0..entries.len())];
        let s = lat.state_from_key(sk);
        let g = lat.region.from_key(gk).expect("stored goal key");
        report.certificates_checked += 1;
        let r = planner.plan_with_experience(&s, &g, &artifact.roots[id as usize].path, &budget);
        if !r.success() {
            report.violations.push(Violation {
                kind: ViolationKind::Certificate,
                state: s,
                goal: g,
                detail: format!("root path {id} failed after {} expansions", r.expansions),
            });
        }
    }

    if !states.is_empty() {
        let bound = lat.replan_index() as usize + 1;
        for _ in 0..opts.accounting_queries {
            let (s, owner) = &states[rng.gen_range(0..states.len())];
            let g = goals[rng.gen_range(0..goals.len())];
            let path = &artifact.roots[*owner as usize].path;
            let start = path.index_of(s).expect("state lies on its owner");
            let stats = match engine.query(&g, path, start) {
                Ok((_, st)) => st,
                Err(e) => match e.stats() {
                    Some(st) => st.clone(),
                    None => continue,
                },
            };
            report.accounting_queries += 1;
            report.max_lookups = report.max_lookups.max(stats.map_lookups);
            report.max_plan_calls = report.max_plan_calls.max(stats.plan_calls);
            report.max_expansions = report.max_expansions.max(stats.plan_expansions);
            report.max_wall_time_s = report.max_wall_time_s.max(stats.wall_time_s);
            let mut broken = Vec::new();
            if stats.map_lookups > bound {
                broken.push(format!("{} lookups", stats.map_lookups));
            }
            if stats.plan_calls > 1 {
                broken.push(format!("{} planner calls", stats.plan_calls));
            }
            if stats.plan_expansions > budget.max_expansions {
                broken.push(format!("{} expansions", stats.plan_expansions));
            }
            if opts.check_wall_time && stats.wall_time_s > t_b {
                broken.push(format!("{:.4} s", stats.wall_time_s));
            }
            if !broken.is_empty() {
                report.violations.push(Violation {
                    kind: ViolationKind::Accounting,
                    state: s.clone(),
                    goal: g,
                    detail: broken.join(", "),
                });
            }
        }
    }
    report
}
