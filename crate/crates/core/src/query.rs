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
//! Online stage: constant-time replanning against a loaded coverage map.

use serde::{Deserialize, Serialize};
use web_time::Instant;
use thiserror::Error;

use crate::artifact::Artifact;
use crate::kinematics::ObjectPose;
use crate::lattice::{GoalPose, Lattice, Primitive, State};
use crate::preprocess::{CoverageMap, RootPath};
use crate::search::{Path, Planner, SearchBudget};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QueryOutcome {
    /// The current path already ends at the goal.
    Unchanged,
    Replanned,
    Latched,
    FailureUnreachable,
    FailureIntegrity,
}

/// One record per query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryStats {
    pub map_lookups: usize,
    pub latch_checks: usize,
    pub plan_calls: usize,
    pub plan_expansions: usize,
    pub wall_time_s: f64,
    pub outcome: QueryOutcome,
    /// Time indices of the scanned states, in scan order.
    pub scanned: Vec<u32>,
    /// Time index of the state where the new path branches off.
    pub transition_t: Option<u32>,
}

impl QueryStats {
    fn new() -> Self {
        QueryStats {
            map_lookups: 0,
            latch_checks: 0,
            plan_calls: 0,
            plan_expansions: 0,
            wall_time_s: 0.0,
            outcome: QueryOutcome::FailureIntegrity,
            scanned: Vec::new(),
            transition_t: None,
        }
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("stats serialize")
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QueryError {
    #[error("goal {goal} is not reachable")]
    Unreachable { goal: GoalPose, stats: QueryStats },
    #[error("artifact integrity: {message}")]
    Integrity { message: String, stats: QueryStats },
    #[error("query precondition violated: {0}")]
    Contract(String),
}

impl QueryError {
    pub fn stats(&self) -> Option<&QueryStats> {
        match self {
            QueryError::Unreachable { stats, .. } | QueryError::Integrity { stats, .. } => {
                Some(stats)
            }
            QueryError::Contract(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MergeError {
    #[error("transition state is not on both paths")]
    NotOnPath,
    #[error("latch motion from {from} to {to} is invalid")]
    InvalidLatch { from: State, to: State },
}

/// Prefix of `current` up to state `at`, then `next` (which starts there).
pub fn merge_paths(current: &Path, next: &Path, at: usize) -> Result<Path, MergeError> {
    if at >= current.len() || current.states[at] != *next.first() {
        return Err(MergeError::NotOnPath);
    }
    let mut states = current.states[..at].to_vec();
    states.extend_from_slice(&next.states);
    let mut primitives = current.primitives[..at].to_vec();
    primitives.extend_from_slice(&next.primitives);
    Ok(Path {
        states,
        primitives,
        goal: next.goal,
        terminal_grasp: next.terminal_grasp,
    })
}

/// Prefix of `current` up to state `at`, a one-step latch onto the first
/// state of `home_plan`, then `home_plan`.
pub fn merge_paths_by_latching(
    lat: &Lattice,
    current: &Path,
    home_plan: &Path,
    at: usize,
    obj: Option<&ObjectPose>,
) -> Result<Path, MergeError> {
    if at >= current.len() {
        return Err(MergeError::NotOnPath);
    }
    let from = &current.states[at];
    let to = home_plan.first();
    if !lat.latch_motion_ok(from, to, obj) {
        return Err(MergeError::InvalidLatch {
            from: from.clone(),
            to: to.clone(),
        });
    }
    let mut states = current.states[..=at].to_vec();
    states.extend_from_slice(&home_plan.states);
    let mut primitives = current.primitives[..at].to_vec();
    primitives.push(Primitive::Latch);
    primitives.extend_from_slice(&home_plan.primitives);
    Ok(Path {
        states,
        primitives,
        goal: home_plan.goal,
        terminal_grasp: home_plan.terminal_grasp,
    })
}

/// Index of the first state on `path` at least `runway` seconds after
/// `now`.
pub fn start_index(lat: &Lattice, path: &Path, now: f64, runway: f64) -> Option<usize> {
    let t = now + runway;
    path.states
        .iter()
        .position(|s| lat.time_of(s) >= t - 1e-9)
}

/// Query engine over an immutable coverage map.
pub struct QueryEngine<'a> {
    pub lattice: &'a Lattice,
    pub planner: Planner<'a>,
    pub map: &'a CoverageMap,
    pub roots: &'a [RootPath],
    pub budget: SearchBudget,
}

impl<'a> QueryEngine<'a> {
    pub fn new(lattice: &'a Lattice, artifact: &'a Artifact) -> Self {
        let s = &artifact.config.search;
        QueryEngine {
            lattice,
            planner: Planner::new(lattice, s.lambda, s.weight),
            map: &artifact.map,
            roots: &artifact.roots,
            budget: SearchBudget::bounded(s.budget_for(artifact.config.preprocess.t_bound)),
        }
    }

    /// Path to `g` that follows `current` at least up to state `start`.
    pub fn query(
        &self,
        g: &GoalPose,
        current: &Path,
        start: usize,
    ) -> Result<(Path, QueryStats), QueryError> {
        let clock = Instant::now();
        let mut stats = QueryStats::new();
        if current.terminal_grasp && current.goal == *g {
            stats.outcome = QueryOutcome::Unchanged;
            stats.wall_time_s = clock.elapsed().as_secs_f64();
            return Ok((current.clone(), stats));
        }
        let lat = self.lattice;
        let t_rc = lat.replan_index();
        if start >= current.len() || current.states[start].t > t_rc {
            return Err(QueryError::Contract(
                "start state must lie on the path no later than the replan cutoff".into(),
            ));
        }
        let gk = lat.region.key(g);
        let last = current.states.partition_point(|s| s.t <= t_rc) - 1;
        let home_key = lat.key(lat.home());
        let obj = lat.region.pose(g);
        // Home is looked up at most once, on first need.
        let mut home_root: Option<Option<u32>> = None;
        let mut home = |stats: &mut QueryStats| {
            *home_root.get_or_insert_with(|| {
                stats.map_lookups += 1;
                self.map.lookup(home_key, gk)
            })
        };

        for idx in (start..=last).rev() {
            let s = &current.states[idx];
            let s_key = lat.key(s);
            stats.scanned.push(s.t);
            let found = if s_key == home_key {
                home(&mut stats)
            } else {
                stats.map_lookups += 1;
                self.map.lookup(s_key, gk)
            };
            if let Some(id) = found {
                return self.commit(current, idx, s, g, id, None, stats, clock);
            }
            let Some(hid) = home(&mut stats) else { continue };
            stats.latch_checks += 1;
            if let Some(entry) = self.map.latch_target(s_key, hid) {
                if entry.goals.contains(&gk) {
                    let target = entry.target.clone();
                    return self.commit(current, idx, &target, g, hid, Some(&obj), stats, clock);
                }
            }
        }

        let unreachable = current.states[..=last]
            .iter()
            .any(|s| self.map.is_unreachable(lat.key(s), gk));
        stats.wall_time_s = clock.elapsed().as_secs_f64();
        if unreachable {
            stats.outcome = QueryOutcome::FailureUnreachable;
            Err(QueryError::Unreachable { goal: *g, stats })
        } else {
            stats.outcome = QueryOutcome::FailureIntegrity;
            Err(QueryError::Integrity {
                message: format!(
                    "no coverage for goal {g} from {} onward",
                    current.states[start]
                ),
                stats,
            })
        }
    }

    /// The single bounded planner call of a query.
    #[allow(clippy::too_many_arguments)]
    fn commit(
        &self,
        current: &Path,
        idx: usize,
        from: &State,
        g: &GoalPose,
        root: u32,
        latch_obj: Option<&ObjectPose>,
        mut stats: QueryStats,
        clock: Instant,
    ) -> Result<(Path, QueryStats), QueryError> {
        let root_path = &self.roots[root as usize].path;
        stats.plan_calls = 1;
        let r = self
            .planner
            .plan_with_experience(from, g, root_path, &self.budget);
        stats.plan_expansions = r.expansions;
        stats.transition_t = Some(current.states[idx].t);
        let Some(next) = r.path else {
            stats.wall_time_s = clock.elapsed().as_secs_f64();
            stats.outcome = QueryOutcome::FailureIntegrity;
            return Err(QueryError::Integrity {
                message: format!(
                    "certified pair ({from}, goal {g}) failed within the bounded budget"
                ),
                stats,
            });
        };
        let latched = *from != current.states[idx];
        let merged = if latched {
            let obj = latch_obj.filter(|_| {
                self.lattice.time_of(from) > self.lattice.world.object_clear_until
            });
            merge_paths_by_latching(self.lattice, current, &next, idx, obj)
        } else {
            merge_paths(current, &next, idx)
        };
        stats.wall_time_s = clock.elapsed().as_secs_f64();
        match merged {
            Ok(p) => {
                stats.outcome = if latched {
                    QueryOutcome::Latched
                } else {
                    QueryOutcome::Replanned
                };
                Ok((p, stats))
            }
            Err(e) => {
                stats.outcome = QueryOutcome::FailureIntegrity;
                Err(QueryError::Integrity {
                    message: e.to_string(),
                    stats,
                })
            }
        }
    }
}
