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
//! Scenario configuration.
//!
//! One TOML file describes the arm, the conveyor world, the lattice, the
//! search parameters, the preprocessing region, perception and the
//! benchmark. The planning-relevant part is hashed into every artifact.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError::Invalid(msg.into()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmConfig {
    /// Link lengths in metres, base to wrist.
    pub link_lengths: Vec<f64>,
    /// Nominal joint speeds in rad/s.
    pub joint_velocity_limits: Vec<f64>,
    /// Joint position limits `[min, max]` in degrees.
    pub joint_limits_deg: Vec<[f64; 2]>,
    /// Home configuration in degrees. Snapped to the lattice.
    pub home_deg: Vec<f64>,
    #[serde(default)]
    pub base_position: [f64; 2],
    /// Distance from the last joint tip to the grasp centre.
    pub gripper_reach: f64,
    pub link_radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldConfig {
    /// Belt speed along +x in m/s.
    pub conveyor_speed: f64,
    /// Belt surface extent along x `[min, max]`.
    pub belt_x: [f64; 2],
    /// Belt surface extent along y `[min, max]`.
    pub belt_y: [f64; 2],
    #[serde(default)]
    pub static_obstacles: Vec<Vec<[f64; 2]>>,
    /// Convex object outline in the object frame, counter-clockwise.
    pub object_shape: Vec<[f64; 2]>,
    /// Number of equivalent grasp yaws (2 for a parallel-jaw gripper on a box).
    #[serde(default = "default_symmetry")]
    pub grasp_symmetry: u32,
}

fn default_symmetry() -> u32 {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeConfig {
    /// Joint angle resolution in degrees.
    pub angle_res_deg: f64,
    /// Time resolution in seconds.
    pub dt: f64,
    /// Per-joint static primitive size in lattice cells. Defaults to the
    /// largest step the nominal velocity covers in one time step.
    #[serde(default)]
    pub step_cells: Option<Vec<u32>>,
    /// Last time (s) at which a state may exist.
    pub horizon_s: f64,
    /// Interpolation sample spacing for collision checks, degrees.
    #[serde(default = "default_collision_step")]
    pub collision_step_deg: f64,
    #[serde(default = "default_d_trigger")]
    pub d_trigger: f64,
    #[serde(default = "default_alpha_trigger")]
    pub alpha_trigger_deg: f64,
    #[serde(default = "default_gain")]
    pub grasp_gain: f64,
    #[serde(default = "default_dt_int")]
    pub dt_int: f64,
    #[serde(default = "default_t_close")]
    pub t_close: f64,
    #[serde(default = "default_t_max")]
    pub t_max: f64,
    #[serde(default = "default_enclose_pos")]
    pub enclose_pos_tol: f64,
    #[serde(default = "default_enclose_yaw")]
    pub enclose_yaw_tol_deg: f64,
}

fn default_collision_step() -> f64 {
    4.0
}
fn default_d_trigger() -> f64 {
    0.15
}
fn default_alpha_trigger() -> f64 {
    45.0
}
fn default_gain() -> f64 {
    4.0
}
fn default_dt_int() -> f64 {
    0.05
}
fn default_t_close() -> f64 {
    0.5
}
fn default_t_max() -> f64 {
    3.0
}
fn default_enclose_pos() -> f64 {
    0.01
}
fn default_enclose_yaw() -> f64 {
    10.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchConfig {
    /// Weight of the intercept-time term of the heuristic.
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    /// Heuristic inflation for weighted A*.
    #[serde(default = "default_weight")]
    pub weight: f64,
    /// Expansion budget for root paths and other unbounded searches.
    pub root_budget: usize,
    /// Safety factor applied to the planning time bound.
    #[serde(default = "default_rho")]
    pub rho: f64,
    /// Modelled cost of one expansion in seconds. Converts time bounds into
    /// deterministic expansion budgets.
    pub expansion_cost_s: f64,
}

fn default_lambda() -> f64 {
    1.0
}
fn default_weight() -> f64 {
    50.0
}
fn default_rho() -> f64 {
    0.5
}

impl SearchConfig {
    /// Expansion budget for a planner given `time_bound` seconds.
    pub fn budget_for(&self, time_bound: f64) -> usize {
        ((self.rho * time_bound / self.expansion_cost_s).floor() as usize).max(1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GoalRegionConfig {
    /// Execution-trigger x of the object, metres.
    pub x_exec: f64,
    /// Perception error bound, metres.
    pub eps_p: f64,
    #[serde(default = "default_x_res")]
    pub x_res: f64,
    /// Goal y extent `[min, max]`.
    pub y_range: [f64; 2],
    #[serde(default = "default_x_res")]
    pub y_res: f64,
    #[serde(default = "default_yaw_res")]
    pub yaw_res_deg: f64,
}

fn default_x_res() -> f64 {
    0.01
}
fn default_yaw_res() -> f64 {
    10.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreprocessConfig {
    /// Replan cutoff time, seconds.
    pub t_rc: f64,
    /// Planning time bound, seconds.
    pub t_bound: f64,
    pub seed: u64,
    #[serde(default = "default_true")]
    pub latching: bool,
    pub goals: GoalRegionConfig,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerceptionConfig {
    /// Largest position error, metres. Also the bound every estimate obeys.
    pub eps_far: f64,
    /// Position error once the object is past the accuracy mark.
    pub eps_near: f64,
    pub yaw_err_far_deg: f64,
    pub yaw_err_near_deg: f64,
    /// Seconds between pose estimates.
    pub period: f64,
    /// Distance along the belt after which estimates are accurate, metres.
    pub accuracy_mark: f64,
    /// Distance along the belt of the object at the first estimate.
    pub first_estimate_at: f64,
    /// Grasp tolerance against the true object pose.
    pub grasp_tol_pos: f64,
    pub grasp_tol_yaw_deg: f64,
    pub seed: u64,
}

impl Default for PerceptionConfig {
    fn default() -> Self {
        PerceptionConfig {
            eps_far: 0.025,
            eps_near: 0.002,
            yaw_err_far_deg: 20.0,
            yaw_err_near_deg: 2.0,
            period: 0.5,
            accuracy_mark: 1.0,
            first_estimate_at: 0.5,
            grasp_tol_pos: 0.012,
            grasp_tol_yaw_deg: 12.0,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub episodes: usize,
    /// Time budgets (s) for the from-scratch baselines.
    pub baseline_budgets: Vec<f64>,
    #[serde(default = "default_methods")]
    pub methods: Vec<String>,
    #[serde(default = "default_workers")]
    pub workers: usize,
    pub seed: u64,
}

fn default_methods() -> Vec<String> {
    vec!["ours".into(), "wastar".into(), "rrt".into()]
}
fn default_workers() -> usize {
    1
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            episodes: 20,
            baseline_budgets: vec![0.2, 0.5, 1.0, 2.0],
            methods: default_methods(),
            workers: 1,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub arm: ArmConfig,
    pub world: WorldConfig,
    pub lattice: LatticeConfig,
    pub search: SearchConfig,
    pub preprocess: PreprocessConfig,
    #[serde(default)]
    pub perception: PerceptionConfig,
    #[serde(default)]
    pub benchmark: BenchmarkConfig,
}

/// The part of a [`Config`] an artifact depends on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanningConfig {
    pub arm: ArmConfig,
    pub world: WorldConfig,
    pub lattice: LatticeConfig,
    pub search: SearchConfig,
    pub preprocess: PreprocessConfig,
}

impl PlanningConfig {
    /// Canonical JSON encoding; the artifact embeds these bytes.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("config serializes")
    }

    pub fn hash(&self) -> [u8; 32] {
        Sha256::digest(self.canonical_bytes()).into()
    }
}

pub const SEED_ENV: &str = "CTPLAN_SEED";
pub const WORKERS_ENV: &str = "CTPLAN_WORKERS";

impl Config {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: Config = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut cfg = Self::from_toml_str(&text)?;
        cfg.apply_env()?;
        Ok(cfg)
    }

    /// Seed and worker count may be overridden from the environment.
    pub fn apply_env(&mut self) -> Result<(), ConfigError> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            let seed: u64 = v
                .parse()
                .map_err(|_| ConfigError::Invalid(format!("{SEED_ENV}={v} is not an integer")))?;
            self.set_seed(seed);
        }
        if let Ok(v) = std::env::var(WORKERS_ENV) {
            let w: usize = v
                .parse()
                .map_err(|_| ConfigError::Invalid(format!("{WORKERS_ENV}={v} is not an integer")))?;
            self.benchmark.workers = w.max(1);
        }
        Ok(())
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.preprocess.seed = seed;
        self.perception.seed = seed;
        self.benchmark.seed = seed;
    }

    /// Config for an artifact's planning part, with default perception and
    /// benchmark sections.
    pub fn from_planning(p: PlanningConfig) -> Self {
        Config {
            arm: p.arm,
            world: p.world,
            lattice: p.lattice,
            search: p.search,
            preprocess: p.preprocess,
            perception: PerceptionConfig::default(),
            benchmark: BenchmarkConfig::default(),
        }
    }

    /// Seed of the run-time stages only; the artifact hash is unaffected.
    pub fn set_run_seed(&mut self, seed: u64) {
        self.perception.seed = seed;
        self.benchmark.seed = seed;
    }

    pub fn planning(&self) -> PlanningConfig {
        PlanningConfig {
            arm: self.arm.clone(),
            world: self.world.clone(),
            lattice: self.lattice.clone(),
            search: self.search.clone(),
            preprocess: self.preprocess.clone(),
        }
    }

    /// Number of time steps between the first state and the replan cutoff.
    pub fn replan_steps(&self) -> u32 {
        (self.preprocess.t_rc / self.lattice.dt).round() as u32
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let a = &self.arm;
        let n = a.link_lengths.len();
        if n < 2 {
            return invalid("arm needs at least two links");
        }
        if a.joint_velocity_limits.len() != n
            || a.joint_limits_deg.len() != n
            || a.home_deg.len() != n
        {
            return invalid("arm vectors must all have one entry per joint");
        }
        if n > 8 {
            return invalid("at most 8 joints are supported");
        }
        if a.link_lengths.iter().any(|&l| !(l > 0.0)) {
            return invalid("link lengths must be positive");
        }
        if a.joint_velocity_limits.iter().any(|&v| !(v > 0.0)) {
            return invalid("joint velocity limits must be positive");
        }
        for (j, lim) in a.joint_limits_deg.iter().enumerate() {
            if !(lim[0] < lim[1]) {
                return invalid(format!("joint {j} limits are empty"));
            }
            if a.home_deg[j] < lim[0] || a.home_deg[j] > lim[1] {
                return invalid(format!("home angle of joint {j} is outside its limits"));
            }
        }
        if a.gripper_reach < 0.0 || !(a.link_radius > 0.0) {
            return invalid("gripper reach must be >= 0 and link radius > 0");
        }
        let w = &self.world;
        if !(w.conveyor_speed > 0.0) {
            return invalid("conveyor speed must be positive");
        }
        if w.object_shape.len() < 3 {
            return invalid("object shape needs at least three vertices");
        }
        if w.grasp_symmetry == 0 {
            return invalid("grasp symmetry must be >= 1");
        }
        let l = &self.lattice;
        if !(l.angle_res_deg > 0.0) || !(l.dt > 0.0) || !(l.horizon_s > 0.0) {
            return invalid("lattice resolutions and horizon must be positive");
        }
        if let Some(steps) = &l.step_cells {
            if steps.len() != n || steps.contains(&0) {
                return invalid("step_cells needs one positive entry per joint");
            }
        }
        if !(l.dt_int > 0.0) || !(l.t_max > 0.0) || l.t_close < 0.0 {
            return invalid("grasp integration parameters must be positive");
        }
        let s = &self.search;
        if !(s.weight >= 1.0) || !(s.lambda > 0.0) {
            return invalid("weight must be >= 1 and lambda > 0");
        }
        if s.root_budget == 0 || !(s.expansion_cost_s > 0.0) || !(s.rho > 0.0 && s.rho <= 1.0) {
            return invalid("root budget, expansion cost and rho must be positive (rho <= 1)");
        }
        let p = &self.preprocess;
        let ratio = p.t_rc / l.dt;
        if p.t_rc < 0.0 || (ratio - ratio.round()).abs() > 1e-9 {
            return invalid("t_rc must be a non-negative multiple of dt");
        }
        if !(p.t_bound > 0.0) || p.t_bound >= l.dt {
            return invalid("t_bound must be positive and smaller than dt");
        }
        if l.horizon_s <= p.t_rc {
            return invalid("horizon must extend past t_rc");
        }
        let g = &p.goals;
        if !(g.eps_p > 0.0) || !(g.x_res > 0.0) || !(g.y_res > 0.0) || !(g.yaw_res_deg > 0.0) {
            return invalid("goal region resolutions must be positive");
        }
        if g.y_range[1] < g.y_range[0] {
            return invalid("goal y range is empty");
        }
        let pc = &self.perception;
        if pc.eps_near > pc.eps_far || pc.eps_far > g.eps_p + 1e-12 {
            return invalid("perception errors must satisfy eps_near <= eps_far <= eps_p");
        }
        if !(pc.period > 0.0) {
            return invalid("perception period must be positive");
        }
        if self.benchmark.workers == 0 {
            return invalid("benchmark needs at least one worker");
        }
        Ok(())
    }
}
