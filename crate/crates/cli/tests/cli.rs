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
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use ctplan::artifact::Artifact;
use ctplan::Lattice;

const SMALL: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../core/configs/small.toml");

fn ctplan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ctplan"))
        .args(args)
        .env_remove("CTPLAN_SEED")
        .env_remove("CTPLAN_WORKERS")
        .output()
        .expect("binary runs")
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

struct Fixture {
    _dir: tempfile::TempDir,
    dir: PathBuf,
    artifact: PathBuf,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().to_path_buf();
        let artifact = path.join("small.ctp");
        let out = ctplan(&["preprocess", "--config", SMALL, "--out", artifact.to_str().unwrap()]);
        assert!(out.status.success(), "{}", text(&out.stderr));
        let stdout = text(&out.stdout);
        assert!(stdout.contains("root paths:"), "{stdout}");
        Fixture {
            _dir: dir,
            dir: path,
            artifact,
        }
    })
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Small config with a shorter benchmark; the planning part is unchanged.
fn short_benchmark_config(dir: &Path) -> PathBuf {
    let cfg = std::fs::read_to_string(SMALL)
        .unwrap()
        .replace("episodes = 100", "episodes = 4");
    let p = dir.join("short.toml");
    std::fs::write(&p, cfg).unwrap();
    p
}

#[test]
fn fresh_artifact_verifies() {
    let f = fixture();
    let out = ctplan(&["verify", "--artifact", s(&f.artifact)]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["violations"], 0);
    assert!(v["reachable_pairs"].as_u64().unwrap() > 0);
}

#[test]
fn deleted_entry_fails_verification_and_names_the_pair() {
    let f = fixture();
    let mut art = Artifact::load(&f.artifact, None).unwrap();
    let cfg = ctplan::Config::from_planning(art.config.clone());
    let lat = Lattice::new(&cfg);
    let mut keys: Vec<(u64, u32)> = art.map.entries.keys().copied().collect();
    keys.sort_unstable();
    // Only the state itself is scanned from the cutoff.
    let victim = keys
        .into_iter()
        .find(|&(sk, _)| lat.state_from_key(sk).t == lat.replan_index())
        .expect("an entry at the cutoff");
    art.map.entries.remove(&victim);
    let broken = f.dir.join("broken.ctp");
    art.save(&broken).unwrap();

    let out = ctplan(&["verify", "--artifact", s(&broken)]);
    assert_eq!(out.status.code(), Some(4));
    let err = text(&out.stderr);
    let state = lat.state_from_key(victim.0).to_string();
    let goal = lat.region.from_key(victim.1).unwrap().to_string();
    assert!(
        err.lines().any(|l| l.contains(&state) && l.contains(&goal)),
        "no line names {state} {goal}:\n{err}"
    );
}

#[test]
fn mismatched_config_is_a_load_error() {
    let f = fixture();
    let other = std::fs::read_to_string(SMALL).unwrap().replace("seed = 7", "seed = 8");
    assert_ne!(other, std::fs::read_to_string(SMALL).unwrap());
    let p = f.dir.join("other.toml");
    std::fs::write(&p, other).unwrap();
    let out = ctplan(&["verify", "--artifact", s(&f.artifact), "--config", s(&p)]);
    assert_eq!(out.status.code(), Some(3));
    assert!(out.stdout.is_empty(), "checks ran: {}", text(&out.stdout));
    assert!(text(&out.stderr).contains("different config"));
}

#[test]
fn tampered_bytes_are_an_integrity_error() {
    let f = fixture();
    let mut bytes = std::fs::read(&f.artifact).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x40;
    let p = f.dir.join("tampered.ctp");
    std::fs::write(&p, bytes).unwrap();
    for cmd in ["verify", "simulate"] {
        let out = ctplan(&[cmd, "--artifact", s(&p)]);
        assert_eq!(out.status.code(), Some(3), "{cmd}");
    }
}

#[test]
fn preprocess_is_byte_identical() {
    let f = fixture();
    let again = f.dir.join("again.ctp");
    let out = ctplan(&["preprocess", "--config", SMALL, "--out", s(&again)]);
    assert!(out.status.success());
    assert_eq!(std::fs::read(&again).unwrap(), std::fs::read(&f.artifact).unwrap());
}

#[test]
fn benchmark_csv_is_identical_across_runs_and_workers() {
    let f = fixture();
    let cfg = short_benchmark_config(&f.dir);
    let run = |name: &str, workers: &str| {
        let csv = f.dir.join(name);
        let out = ctplan(&[
            "benchmark", "--artifact", s(&f.artifact), "--config", s(&cfg), "--out", s(&csv),
            "--workers", workers, "--budget", "0.2",
        ]);
        assert!(out.status.success(), "{}", text(&out.stderr));
        let trace = std::fs::read_to_string(csv.with_extension("jsonl")).unwrap();
        (std::fs::read_to_string(&csv).unwrap(), trace)
    };
    let (a, trace) = run("a.csv", "1");
    let (b, _) = run("b.csv", "1");
    let (c, _) = run("c.csv", "3");
    assert_eq!(a, b);
    assert_eq!(a, c);
    let mut lines = a.lines();
    assert_eq!(
        lines.next(),
        Some("method,budget_s,pickup_pct,plan_success_pct,mean_plan_time_s,max_lookups,mean_cycles,mean_cost_s")
    );
    let methods: Vec<&str> = lines.map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(methods, ["ours", "ours-e2", "ours-e3", "wastar", "rrt"]);
    assert_eq!(trace.lines().count(), 5 * 4);
}

#[test]
fn query_from_home_reports_stats() {
    let f = fixture();
    let out = ctplan(&["query", "--artifact", s(&f.artifact), "--goal", "3,1,2"]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["path"]["terminal_grasp"], true);
    assert!(v["stats"]["map_lookups"].as_u64().unwrap() <= 8);
    assert!(v["stats"]["plan_calls"].as_u64().unwrap() <= 1);
}

#[test]
fn simulate_is_deterministic_per_seed() {
    let f = fixture();
    let a = ctplan(&["simulate", "--artifact", s(&f.artifact), "--strategy", "e3", "--seed", "5"]);
    let b = ctplan(&["simulate", "--artifact", s(&f.artifact), "--strategy", "e3", "--seed", "5"]);
    assert!(a.status.success());
    let strip = |o: &Output| {
        let mut v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
        for e in v["events"].as_array_mut().unwrap() {
            e["wall_time_s"] = 0.into();
        }
        v
    };
    assert_eq!(strip(&a), strip(&b));
    assert_eq!(strip(&a)["strategy"], "e3");
}

#[test]
fn config_errors_exit_2() {
    let f = fixture();
    let missing = ctplan(&["preprocess", "--config", "/nonexistent.toml", "--out", "/tmp/x.ctp"]);
    assert_eq!(missing.status.code(), Some(2));
    let bad_goal = ctplan(&["query", "--artifact", s(&f.artifact), "--goal", "999,0,0"]);
    assert_eq!(bad_goal.status.code(), Some(2));
    let bad_env = Command::new(env!("CARGO_BIN_EXE_ctplan"))
        .args(["preprocess", "--config", SMALL, "--out", "/tmp/x.ctp"])
        .env("CTPLAN_WORKERS", "many")
        .output()
        .unwrap();
    assert_eq!(bad_env.status.code(), Some(2));
}
