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
//! Shipped scenarios.

use crate::config::Config;

/// Source of the small planar scenario.
pub const SMALL_TOML: &str = include_str!("../configs/small.toml");

/// Planar 3-joint arm beside a belt, about 200 goals.
pub fn small() -> Config {
    Config::from_toml_str(SMALL_TOML).expect("shipped scenario parses")
}
