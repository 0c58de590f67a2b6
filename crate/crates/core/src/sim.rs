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
//! Sense-plan-act simulation on the conveyor: converging perception, the
//! replanning strategies, from-scratch baselines and the benchmark table.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::artifact::Artifact;
use crate::baseline;
use crate::config::{Config, PerceptionConfig};
use crate::kinematics::{normalize_angle, ObjectPose};
use crate::lattice::{GoalPose, GoalRegion, Lattice, Primitive, State};
use crate::query::{merge_paths, start_index, QueryEngine, QueryError};
use crate::search::{replay, Path, Planner, SearchBudget};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// Replan on every estimate.
    E1,
    /// Plan once on the first estimate.
    E2,
    /// Plan once on the first accurate estimate.
    E3,
}

impl FromStr for Strategy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "e1" => Ok(Strategy::E1),
            "e2" => Ok(Strategy::E2),
            "e3" => Ok(Strategy::E3),
            other => Err(format!("unknown strategy {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Ours,
    Wastar,
    Rrt,
}

impl FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "ours" => Ok(Method::Ours),
            "wastar" => Ok(Method::Wastar),
            "rrt" => Ok(Method::Rrt),
            other => Err(format!("unknown method {other:?}")),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Ours => "ours",
            Method::Wastar => "wastar",
            Method::Rrt => "rrt",
        })
    }
}

/// Belt-position dependent pose noise. Every estimate stays within the
/// largest error of the truth.
#[derive(Debug, Clone)]
pub struct PerceptionModel {
    pub params: PerceptionConfig,
    pub speed: f64,
    pub belt_start: f64,
}

impl PerceptionModel {
    pub fn new(cfg: &Config) -> Self {
        PerceptionModel {
            params: cfg.perception.clone(),
            speed: cfg.world.conveyor_speed,
            belt_start: cfg.world.belt_x[0],
        }
    }

    /// Interpolation weight of the far error at time `t`: 1 up to the
    /// first estimate position, 0 past the accuracy mark.
    fn far_weight(&self, truth: &ObjectPose, t: f64) -> f64 {
        let p = &self.params;
        let d = truth.x + self.speed * t - self.belt_start;
        let span = p.accuracy_mark - p.first_estimate_at;
        if span <= 0.0 {
            return if d >= p.accuracy_mark { 0.0 } else { 1.0 };
        }
        ((p.accuracy_mark - d) / span).clamp(0.0, 1.0)
    }

    /// Position and yaw error bounds at time `t`.
    pub fn error_bounds(&self, truth: &ObjectPose, t: f64) -> (f64, f64) {
        let p = &self.params;
        let w = self.far_weight(truth, t);
        (
            p.eps_near + w * (p.eps_far - p.eps_near),
            (p.yaw_err_near_deg + w * (p.yaw_err_far_deg - p.yaw_err_near_deg)).to_radians(),
        )
    }

    /// Both error bounds at the near level.
    pub fn is_accurate(&self, truth: &ObjectPose, t: f64) -> bool {
        let p = &self.params;
        let (eps, yaw) = self.error_bounds(truth, t);
        eps <= p.eps_near + 1e-12 && yaw <= p.yaw_err_near_deg.to_radians() + 1e-12
    }

    /// Estimate of the object's current pose at time `t`.
    pub fn estimate(&self, truth: &ObjectPose, t: f64, rng: &mut impl Rng) -> ObjectPose {
        let (eps, yaw_eps) = self.error_bounds(truth, t);
        let r = eps * rng.gen::<f64>().sqrt();
        let a = rng.gen::<f64>() * std::f64::consts::TAU;
        let dyaw = if yaw_eps > 0.0 {
            rng.gen_range(-yaw_eps..=yaw_eps)
        } else {
            0.0
        };
        let est = ObjectPose {
            x: truth.x + self.speed * t + r * a.cos(),
            y: truth.y + r * a.sin(),
            yaw: normalize_angle(truth.yaw + dyaw),
        };
        let err = ((est.x - truth.x - self.speed * t).powi(2) + (est.y - truth.y).powi(2)).sqrt();
        assert!(err <= self.params.eps_far + 1e-12, "estimate outside the error bound");
        est
    }
}

/// Shift an estimate taken at time `dt` back to the reference time and snap
/// it into the goal region. The flag is false when it had to be clamped.
pub fn back_project(
    estimate: &ObjectPose,
    dt: f64,
    speed: f64,
    region: &GoalRegion,
) -> (GoalPose, bool) {
    assert!(dt >= 0.0);
    let shifted = ObjectPose {
        x: estimate.x - speed * dt,
        ..*estimate
    };
    let (g, inside) = region.snap(&shifted);
    if !inside {
        log::warn!("back-projected estimate clamped into the goal region");
    }
    (g, inside)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    PickupSuccess,
    Miss,
    PlannerFailure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplanEvent {
    /// Time the estimate arrived.
    pub time: f64,
    pub goal: GoalPose,
    pub success: bool,
    /// No planner call; the current path already ends at the goal.
    pub unchanged: bool,
    pub expansions: usize,
    pub map_lookups: usize,
    pub plan_time_s: f64,
    pub wall_time_s: f64,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub time: f64,
    pub pose: ObjectPose,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub seed: u64,
    pub method: Method,
    pub strategy: Option<Strategy>,
    pub budget_s: f64,
    pub truth: ObjectPose,
    pub estimates: Vec<Estimate>,
    pub events: Vec<ReplanEvent>,
    pub outcome: Outcome,
    /// Duration of the executed path, seconds.
    pub path_cost_s: Option<f64>,
    pub path_states: usize,
}

impl Episode {
    pub fn cycles(&self) -> usize {
        self.events.len()
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("episode serializes")
    }
}

/// Everything an episode needs, built once per artifact.
pub struct Simulator<'a> {
    pub cfg: &'a Config,
    pub lattice: &'a Lattice,
    pub artifact: &'a Artifact,
    pub perception: PerceptionModel,
    pub engine: QueryEngine<'a>,
    pub planner: Planner<'a>,
}

impl<'a> Simulator<'a> {
    pub fn new(cfg: &'a Config, lattice: &'a Lattice, artifact: &'a Artifact) -> Self {
        Simulator {
            cfg,
            lattice,
            artifact,
            perception: PerceptionModel::new(cfg),
            engine: QueryEngine::new(lattice, artifact),
            planner: Planner::new(lattice, cfg.search.lambda, cfg.search.weight),
        }
    }

    fn t_bound(&self) -> f64 {
        self.cfg.preprocess.t_bound
    }

    /// True pose for a seed: a goal cell plus a small offset within it.
    pub fn sample_truth(&self, seed: u64) -> ObjectPose {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7275_7468);
        let region = &self.lattice.region;
        let g = region
            .from_key(rng.gen_range(0..region.len() as u32))
            .expect("key in range");
        let c = region.pose(&g);
        let jitter = 0.25;
        ObjectPose {
            x: c.x + rng.gen_range(-jitter..=jitter) * region.x_res,
            y: c.y + rng.gen_range(-jitter..=jitter) * region.y_res,
            yaw: normalize_angle(c.yaw + rng.gen_range(-jitter..=jitter) * region.yaw_res * 0.1),
        }
    }

    /// Arrival times of estimates. The first arrives one planning bound
    /// before the reference time; the last leaves the bound as runway
    /// before the replan cutoff.
    pub fn update_times(&self) -> Vec<f64> {
        let p = self.cfg.perception.period;
        let t_rc = self.cfg.preprocess.t_rc;
        let tb = self.t_bound();
        (0..)
            .map(|k| k as f64 * p - tb)
            .take_while(|u| u + tb <= t_rc + 1e-9)
            .collect()
    }

    pub fn estimates(&self, truth: &ObjectPose, seed: u64) -> Vec<Estimate> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ self.cfg.perception.seed.rotate_left(17));
        self.update_times()
            .into_iter()
            .map(|time| Estimate {
                time,
                pose: self.perception.estimate(truth, time.max(0.0), &mut rng),
            })
            .collect()
    }

    fn goal_of(&self, e: &Estimate) -> GoalPose {
        back_project(
            &e.pose,
            e.time.max(0.0),
            self.cfg.world.conveyor_speed,
            &self.lattice.region,
        )
        .0
    }

    pub fn run_episode(&self, strategy: Strategy, seed: u64) -> Episode {
        let truth = self.sample_truth(seed);
        let estimates = self.estimates(&truth, seed);
        self.run_with_estimates(strategy, seed, truth, estimates)
    }

    /// Episode of the experience planner on a given estimate stream.
    pub fn run_with_estimates(
        &self,
        strategy: Strategy,
        seed: u64,
        truth: ObjectPose,
        estimates: Vec<Estimate>,
    ) -> Episode {
        assert!(
            self.lattice.object_clear_at_cutoff(&truth),
            "object reachable before the replan cutoff"
        );
        let mut events = Vec::new();
        let mut current: Option<Path> = None;
        let chosen: Vec<usize> = match strategy {
            Strategy::E1 => (0..estimates.len()).collect(),
            Strategy::E2 => (0..estimates.len().min(1)).collect(),
            Strategy::E3 => estimates
                .iter()
                .position(|e| self.perception.is_accurate(&truth, e.time.max(0.0)))
                .or(if estimates.is_empty() { None } else { Some(estimates.len() - 1) })
                .into_iter()
                .collect(),
        };
        for k in chosen {
            let e = &estimates[k];
            let g = self.goal_of(e);
            let runway_end = e.time + self.t_bound();
            let late_start = strategy == Strategy::E3 && runway_end > 1e-9;
            let ev = if late_start {
                self.plan_from_idle_home(g, e.time, &mut current)
            } else {
                self.query_event(g, e.time, &mut current)
            };
            events.push(ev);
        }
        self.finish(Method::Ours, Some(strategy), self.t_bound(), seed, truth, estimates, events, current)
    }

    fn query_event(&self, g: GoalPose, time: f64, current: &mut Option<Path>) -> ReplanEvent {
        let lat = self.lattice;
        let cur = current
            .clone()
            .unwrap_or_else(|| Path::single(lat.home().clone(), g));
        let mut ev = ReplanEvent {
            time,
            goal: g,
            success: false,
            unchanged: false,
            expansions: 0,
            map_lookups: 0,
            plan_time_s: 0.0,
            wall_time_s: 0.0,
            note: None,
        };
        let Some(start) = start_index(lat, &cur, time, self.t_bound()) else {
            ev.note = Some("no state left on the path".into());
            return ev;
        };
        match self.engine.query(&g, &cur, start) {
            Ok((path, stats)) => {
                ev.success = true;
                ev.unchanged = stats.plan_calls == 0;
                ev.expansions = stats.plan_expansions;
                ev.map_lookups = stats.map_lookups;
                ev.wall_time_s = stats.wall_time_s;
                ev.plan_time_s = stats.plan_expansions as f64 * self.cfg.search.expansion_cost_s;
                *current = Some(path);
            }
            Err(err) => {
                if let Some(stats) = err.stats() {
                    ev.expansions = stats.plan_expansions;
                    ev.map_lookups = stats.map_lookups;
                    ev.wall_time_s = stats.wall_time_s;
                }
                ev.note = Some(match &err {
                    QueryError::Unreachable { .. } => "unreachable".into(),
                    other => other.to_string(),
                });
            }
        }
        ev
    }

    /// Single plan from the home configuration after idling there until
    /// the estimate's runway has passed.
    fn plan_from_idle_home(&self, g: GoalPose, time: f64, current: &mut Option<Path>) -> ReplanEvent {
        let lat = self.lattice;
        let idle = idle_home_path(lat, ((time + self.t_bound()) / lat.dt - 1e-9).ceil() as u32, g);
        let start = idle.last().clone();
        let budget = SearchBudget::root(self.cfg.search.root_budget);
        let home_key = lat.key(lat.home());
        let gk = lat.region.key(&g);
        let r = match self.artifact.map.lookup(home_key, gk) {
            Some(id) => self.planner.plan_with_experience(
                &start,
                &g,
                &self.artifact.roots[id as usize].path,
                &budget,
            ),
            None => self.planner.plan(&start, &g, &budget),
        };
        let mut ev = ReplanEvent {
            time,
            goal: g,
            success: r.success(),
            unchanged: false,
            expansions: r.expansions,
            map_lookups: 1,
            plan_time_s: r.expansions as f64 * self.cfg.search.expansion_cost_s,
            wall_time_s: 0.0,
            note: None,
        };
        if let Some(p) = r.path {
            *current = Some(merge_paths(&idle, &p, idle.len() - 1).expect("plan starts at idle end"));
        } else {
            ev.note = Some("no plan from the idle home state".into());
        }
        ev
    }

    /// Replanning loop with a from-scratch planner of the given budget. The
    /// planner is busy for the whole budget, so estimates arriving
    /// meanwhile are dropped.
    pub fn run_baseline(&self, method: Method, budget_s: f64, seed: u64) -> Episode {
        assert!(budget_s > 0.0);
        let truth = self.sample_truth(seed);
        let estimates = self.estimates(&truth, seed);
        let lat = self.lattice;
        let t_rc = self.cfg.preprocess.t_rc;
        let expansions = self.cfg.search.budget_for(budget_s);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0072_7274);
        let mut current: Option<Path> = None;
        let mut busy_until = f64::NEG_INFINITY;
        let mut events = Vec::new();
        for e in &estimates {
            if e.time < busy_until - 1e-9 {
                continue;
            }
            let ready = e.time + budget_s;
            if ready > t_rc + 1e-9 {
                break;
            }
            busy_until = ready;
            let g = self.goal_of(e);
            let cur = current.clone().unwrap_or_else(|| {
                idle_home_path(lat, (ready / lat.dt - 1e-9).ceil() as u32, g)
            });
            let mut ev = ReplanEvent {
                time: e.time,
                goal: g,
                success: false,
                unchanged: false,
                expansions: 0,
                map_lookups: 0,
                plan_time_s: 0.0,
                wall_time_s: 0.0,
                note: None,
            };
            if cur.terminal_grasp && cur.goal == g {
                ev.success = true;
                ev.unchanged = true;
                events.push(ev);
                continue;
            }
            let Some(start) = start_index(lat, &cur, e.time, budget_s) else {
                ev.note = Some("no state left on the path".into());
                events.push(ev);
                continue;
            };
            let s = &cur.states[start];
            let clock = web_time::Instant::now();
            let r = match method {
                Method::Wastar => self.planner.plan(s, &g, &SearchBudget::bounded(expansions)),
                Method::Rrt => baseline::rrt_plan(lat, s, &g, expansions, &mut rng),
                Method::Ours => unreachable!("not a baseline"),
            };
            ev.wall_time_s = clock.elapsed().as_secs_f64();
            ev.expansions = r.expansions;
            ev.plan_time_s = r.expansions as f64 * self.cfg.search.expansion_cost_s;
            match r.path {
                Some(p) => {
                    ev.success = true;
                    current = Some(merge_paths(&cur, &p, start).expect("plan starts on the path"));
                }
                None => ev.note = Some("budget exhausted".into()),
            }
            events.push(ev);
        }
        self.finish(method, None, budget_s, seed, truth, estimates, events, current)
    }

    #[allow(clippy::too_many_arguments)]
    fn finish(
        &self,
        method: Method,
        strategy: Option<Strategy>,
        budget_s: f64,
        seed: u64,
        truth: ObjectPose,
        estimates: Vec<Estimate>,
        events: Vec<ReplanEvent>,
        path: Option<Path>,
    ) -> Episode {
        let lat = self.lattice;
        let (outcome, cost, n) = match &path {
            None => (Outcome::PlannerFailure, None, 0),
            Some(p) if !p.terminal_grasp => (Outcome::PlannerFailure, None, p.len()),
            Some(p) => {
                let ok = self.judge(p, &truth);
                (
                    if ok { Outcome::PickupSuccess } else { Outcome::Miss },
                    Some(p.last().t as f64 * lat.dt),
                    p.len(),
                )
            }
        };
        Episode {
            seed,
            method,
            strategy,
            budget_s,
            truth,
            estimates,
            events,
            outcome,
            path_cost_s: cost,
            path_states: n,
        }
    }

    /// Replay against the true object and compare the gripper's final pose
    /// with the true object at that time.
    pub fn judge(&self, path: &Path, truth: &ObjectPose) -> bool {
        let lat = self.lattice;
        let target = lat.region.pose(&path.goal);
        if replay(lat, path, &target, truth).is_err() {
            return false;
        }
        let n = path.len();
        let grasp = lat.dynamic_grasp_towards(&path.states[n - 2], &target, truth);
        let (t_end, q_end) = grasp.trajectory.last().expect("non-empty trajectory");
        let ee = crate::kinematics::fk_unchecked(&lat.arm, q_end);
        let o = lat.world.object_position(truth, *t_end);
        let d = ((ee.position[0] - o[0]).powi(2) + (ee.position[1] - o[1]).powi(2)).sqrt();
        let p = &self.cfg.perception;
        d < p.grasp_tol_pos
            && lat.world.grasp_angle_diff(truth, ee.orientation) < p.grasp_tol_yaw_deg.to_radians()
    }
}

/// The arm idling at home from time index 0 to `until`.
pub fn idle_home_path(lat: &Lattice, until: u32, goal: GoalPose) -> Path {
    let home = lat.home();
    let states: Vec<State> = (0..=until)
        .map(|t| State {
            q: home.q.clone(),
            t,
        })
        .collect();
    Path {
        primitives: vec![Primitive::Wait; states.len() - 1],
        states,
        goal,
        terminal_grasp: false,
    }
}

/// Aggregate over the episodes of one table cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub method: String,
    pub budget_s: f64,
    pub episodes: usize,
    pub pickup_pct: f64,
    /// Share of planning queries that returned a path.
    pub plan_success_pct: f64,
    /// Share of episodes in which every planning query returned a path.
    pub episode_plan_success_pct: f64,
    pub mean_plan_time_s: f64,
    pub max_plan_time_s: f64,
    pub max_lookups: usize,
    pub max_expansions: usize,
    pub mean_expansions: f64,
    pub mean_cycles: f64,
    pub mean_cost_s: f64,
}

pub const CSV_HEADER: &str =
    "method,budget_s,pickup_pct,plan_success_pct,mean_plan_time_s,max_lookups,mean_cycles,mean_cost_s";

impl ReportRow {
    pub fn from_episodes(method: String, budget_s: f64, eps: &[Episode]) -> Self {
        let n = eps.len();
        let pct = |k: usize, of: usize| if of == 0 { 0.0 } else { 100.0 * k as f64 / of as f64 };
        let events: Vec<&ReplanEvent> = eps.iter().flat_map(|e| &e.events).collect();
        let planned: Vec<&&ReplanEvent> = events.iter().filter(|e| !e.unchanged).collect();
        let successes = events.iter().filter(|e| e.success).count();
        let costs: Vec<f64> = eps
            .iter()
            .filter(|e| e.outcome == Outcome::PickupSuccess)
            .filter_map(|e| e.path_cost_s)
            .collect();
        let mean = |v: &[f64]| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
        let plan_times: Vec<f64> = planned.iter().map(|e| e.plan_time_s).collect();
        let exps: Vec<f64> = planned.iter().map(|e| e.expansions as f64).collect();
        ReportRow {
            method,
            budget_s,
            episodes: n,
            pickup_pct: pct(eps.iter().filter(|e| e.outcome == Outcome::PickupSuccess).count(), n),
            plan_success_pct: pct(successes, events.len()),
            episode_plan_success_pct: pct(
                eps.iter().filter(|e| e.events.iter().all(|x| x.success)).count(),
                n,
            ),
            mean_plan_time_s: mean(&plan_times),
            max_plan_time_s: plan_times.iter().copied().fold(0.0, f64::max),
            max_lookups: events.iter().map(|e| e.map_lookups).max().unwrap_or(0),
            max_expansions: planned.iter().map(|e| e.expansions).max().unwrap_or(0),
            mean_expansions: mean(&exps),
            mean_cycles: if n == 0 { 0.0 } else { events.len() as f64 / n as f64 },
            mean_cost_s: mean(&costs),
        }
    }

    pub fn csv_line(&self) -> String {
        format!(
            "{},{:.2},{:.2},{:.2},{:.6},{},{:.3},{:.3}",
            self.method,
            self.budget_s,
            self.pickup_pct,
            self.plan_success_pct,
            self.mean_plan_time_s,
            self.max_lookups,
            self.mean_cycles,
            self.mean_cost_s
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub rows: Vec<ReportRow>,
    #[serde(skip)]
    pub episodes: Vec<Episode>,
}

impl Report {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.csv_line());
            out.push('\n');
        }
        out
    }

    pub fn to_json_lines(&self) -> String {
        self.episodes.iter().map(|e| e.to_json_line() + "\n").collect()
    }

    pub fn row(&self, method: &str, budget_s: f64) -> Option<&ReportRow> {
        self.rows
            .iter()
            .find(|r| r.method == method && (r.budget_s - budget_s).abs() < 1e-9)
    }
}

/// One cell of the benchmark table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cell {
    Ours(Strategy),
    Baseline(Method, f64),
}

impl Cell {
    pub fn label(&self) -> String {
        match self {
            Cell::Ours(Strategy::E1) => "ours".into(),
            Cell::Ours(Strategy::E2) => "ours-e2".into(),
            Cell::Ours(Strategy::E3) => "ours-e3".into(),
            Cell::Baseline(m, _) => m.to_string(),
        }
    }
}

/// Cells requested by the benchmark config.
pub fn benchmark_cells(cfg: &Config) -> Vec<Cell> {
    let mut cells = Vec::new();
    for m in &cfg.benchmark.methods {
        match m.parse::<Method>() {
            Ok(Method::Ours) => {
                cells.extend([Strategy::E1, Strategy::E2, Strategy::E3].map(Cell::Ours))
            }
            Ok(b) => cells.extend(cfg.benchmark.baseline_budgets.iter().map(|&t| Cell::Baseline(b, t))),
            Err(e) => log::warn!("{e}"),
        }
    }
    cells
}

/// Run every cell over the configured episodes, `workers` at a time.
/// Results are ordered by cell, then seed, whatever the worker count.
pub fn run_benchmark(
    cfg: &Config,
    lattice: &Lattice,
    artifact: &Artifact,
    cells: &[Cell],
    workers: usize,
) -> Report {
    let sim = Simulator::new(cfg, lattice, artifact);
    let n = cfg.benchmark.episodes;
    let seeds: Vec<u64> = (0..n as u64).map(|i| cfg.benchmark.seed.wrapping_add(i)).collect();
    let jobs: Vec<(usize, u64)> = (0..cells.len())
        .flat_map(|c| seeds.iter().map(move |&s| (c, s)))
        .collect();
    let run = |&(c, seed): &(usize, u64)| match cells[c] {
        Cell::Ours(s) => sim.run_episode(s, seed),
        Cell::Baseline(m, b) => sim.run_baseline(m, b, seed),
    };
    let episodes: Vec<Episode> = if workers <= 1 {
        jobs.iter().map(run).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .expect("thread pool");
        pool.install(|| jobs.par_iter().map(run).collect())
    };
    let mut rows = Vec::new();
    for (c, cell) in cells.iter().enumerate().filter(|_| n > 0) {
        let eps = &episodes[c * n..(c + 1) * n];
        let budget = match cell {
            Cell::Ours(_) => cfg.preprocess.t_bound,
            Cell::Baseline(_, b) => *b,
        };
        rows.push(ReportRow::from_episodes(cell.label(), budget, eps));
    }
    Report { rows, episodes }
}
