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
use ctplan::artifact::Artifact;
use ctplan::preprocess::preprocess_config;
use ctplan_wasm::Scene;

const SHIPPED: &[u8] = include_bytes!("../../../www/small.ctp");

fn scene() -> Scene {
    Scene::from_bytes(SHIPPED).expect("shipped artifact loads")
}

#[test]
fn shipped_artifact_matches_fresh_preprocessing() {
    let cfg = ctplan::scenario::small();
    let (_, pre) = preprocess_config(&cfg);
    assert!(Artifact::new(cfg.planning(), &pre).to_bytes() == SHIPPED, "regenerate www/small.ctp");
}

#[test]
fn describe_reports_the_scene() {
    let v: serde_json::Value = serde_json::from_str(&scene().describe()).unwrap();
    assert_eq!(v["goal_cells"].as_array().unwrap().len(), 3);
    assert_eq!(v["home"].as_array().unwrap().len(), 5);
    assert!(v["root_paths"].as_u64().unwrap() > 0);
}

#[test]
fn query_from_home_returns_frames_to_the_grasp() {
    let sc = scene();
    for t in [0, 3, 7, 30] {
        let v: serde_json::Value = serde_json::from_str(&sc.query(t, 3, 1, 2).unwrap()).unwrap();
        assert_eq!(v["ok"], true, "t = {t}: {v}");
        let frames = v["frames"].as_array().unwrap();
        assert!(frames.len() >= 2);
        assert!(v["stats"]["map_lookups"].as_u64().unwrap() <= 8);
        let times: Vec<f64> = frames.iter().map(|f| f["t"].as_f64().unwrap()).collect();
        assert!(times.windows(2).all(|w| w[1] > w[0]));
    }
}

#[test]
fn query_outside_the_region_is_an_error() {
    assert!(scene().query(0, 500, 0, 0).is_err());
}

#[test]
fn simulate_is_seeded() {
    let sc = scene();
    let strip = |s: String| {
        let mut v: serde_json::Value = serde_json::from_str(&s).unwrap();
        for e in v["events"].as_array_mut().unwrap() {
            e["wall_time_s"] = 0.into();
        }
        v
    };
    let a = strip(sc.simulate("e1", 3).unwrap());
    assert_eq!(a, strip(sc.simulate("e1", 3).unwrap()));
    assert_eq!(a["strategy"], "e1");
    assert!(sc.simulate("e9", 3).is_err());
}
