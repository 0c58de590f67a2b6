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
//! Browser bindings: load an artifact, answer a query from the home path,
//! run one episode. Results are JSON strings.

use ctplan::artifact::Artifact;
use ctplan::lattice::{GoalPose, Lattice};
use ctplan::preprocess::replannable_states;
use ctplan::query::QueryEngine;
use ctplan::sim::{Simulator, Strategy};
use ctplan::{Config, Path};
use serde_json::json;
use wasm_bindgen::prelude::*;

/// A loaded artifact with the lattice it was built on.
pub struct Scene {
    cfg: Config,
    lat: Lattice,
    art: Artifact,
    home_root: u32,
}

impl Scene {
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, String> {
        let art = Artifact::from_bytes(bytes).map_err(|e| e.to_string())?;
        let cfg = Config::from_planning(art.config.clone());
        cfg.validate().map_err(|e| e.to_string())?;
        let lat = Lattice::new(&cfg);
        let home_root = replannable_states(&art.roots, &lat)
            .into_iter()
            .find(|(s, _)| s == lat.home())
            .map(|(_, id)| id)
            .ok_or("home is not on any root path")?;
        Ok(Scene {
            cfg,
            lat,
            art,
            home_root,
        })
    }

    /// Static geometry and sizes for drawing.
    pub fn describe(&self) -> String {
        let lat = &self.lat;
        let r = &lat.region;
        let mut chain = Vec::new();
        lat.arm.chain_points(&lat.angles(&lat.home().q), &mut chain);
        json!({
            "belt_x": lat.world.belt_x,
            "belt_y": lat.world.belt_y,
            "conveyor_speed": lat.world.conveyor_speed,
            "obstacles": lat.world.static_obstacles.iter().map(|p| &p.vertices).collect::<Vec<_>>(),
            "object": lat.world.object_shape.vertices,
            "link_radius": lat.arm.link_radius,
            "home": chain,
            "goal_cells": [r.nx, r.ny, r.nyaw],
            "x_exec": r.x_exec,
            "dt": lat.dt,
            "replan_index": lat.replan_index(),
            "root_paths": self.art.roots.len(),
            "entries": self.art.map.entries.len(),
        })
        .to_string()
    }

    fn frames(&self, p: &Path) -> Vec<serde_json::Value> {
        let lat = &self.lat;
        let obj = lat.region.pose(&p.goal);
        let mut chain = Vec::new();
        p.states
            .iter()
            .map(|s| {
                lat.arm.chain_points(&lat.angles(&s.q), &mut chain);
                let t = lat.time_of(s);
                json!({
                    "t": t,
                    "arm": chain,
                    "object": [obj.x + lat.world.conveyor_speed * t, obj.y, obj.yaw],
                })
            })
            .collect()
    }

    /// Query for goal `(x, y, yaw)` from the home root path's state at time
    /// index `t`.
    pub fn query(&self, t: u32, x: u16, y: u16, yaw: u16) -> Result<String, String> {
        let lat = &self.lat;
        let g = GoalPose {
            x_idx: x,
            y_idx: y,
            yaw_idx: yaw,
        };
        if !lat.region.contains(&g) {
            return Err(format!("goal {g} is outside the goal region"));
        }
        let current = &self.art.roots[self.home_root as usize].path;
        let start = current
            .index_at_time(t.min(lat.replan_index()))
            .ok_or("no state at that time")?;
        let engine = QueryEngine::new(lat, &self.art);
        Ok(match engine.query(&g, current, start) {
            Ok((path, stats)) => json!({
                "ok": true,
                "start": current.states[start],
                "stats": stats,
                "duration_s": path.cost(lat.dt),
                "frames": self.frames(&path),
            }),
            Err(e) => json!({ "ok": false, "error": e.to_string(), "stats": e.stats() }),
        }
        .to_string())
    }

    /// One episode of the experience planner.
    pub fn simulate(&self, strategy: &str, seed: u64) -> Result<String, String> {
        let strategy: Strategy = strategy.parse()?;
        let sim = Simulator::new(&self.cfg, &self.lat, &self.art);
        Ok(sim.run_episode(strategy, seed).to_json_line())
    }
}

#[wasm_bindgen]
pub struct Demo(Scene);

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(bytes: &[u8]) -> Result<Demo, JsError> {
        Scene::from_bytes(bytes).map(Demo).map_err(|e| JsError::new(&e))
    }

    pub fn describe(&self) -> String {
        self.0.describe()
    }

    pub fn query(&self, t: u32, x: u16, y: u16, yaw: u16) -> Result<String, JsError> {
        self.0.query(t, x, y, yaw).map_err(|e| JsError::new(&e))
    }

    pub fn simulate(&self, strategy: &str, seed: u64) -> Result<String, JsError> {
        self.0.simulate(strategy, seed).map_err(|e| JsError::new(&e))
    }
}
