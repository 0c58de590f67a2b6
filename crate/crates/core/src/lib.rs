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
//! Constant-time motion planning for picking objects off a moving conveyor.
//!
//! An offline stage computes a small set of root paths and a coverage map
//! over a discretized goal region. Online, every replanning query performs a
//! bounded number of table lookups and at most one bounded search.

pub mod artifact;
pub mod baseline;
pub mod config;
pub mod kinematics;
pub mod lattice;
pub mod preprocess;
pub mod query;
pub mod scenario;
pub mod search;
pub mod sim;
pub mod verify;

pub use config::Config;
pub use lattice::{GoalPose, Lattice, State};
pub use search::{Path, Planner, SearchBudget};
