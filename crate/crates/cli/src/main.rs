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
//! `ctplan` command-line front end.
//!
//! Exit codes: 0 success, 2 config error, 3 artifact integrity error,
//! 4 verification failure.

use std::collections::BTreeMap;
use std::path::{Path as FsPath, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use ctplan::artifact::{Artifact, ArtifactError};
use ctplan::config::{ConfigError, SEED_ENV, WORKERS_ENV};
use ctplan::lattice::{GoalPose, Lattice, State};
use ctplan::preprocess::{replannable_states, Preprocessor};
use ctplan::query::QueryEngine;
use ctplan::sim::{benchmark_cells, run_benchmark, Cell, Method, Simulator, Strategy};
use ctplan::verify::{verify, VerifyOptions};
use ctplan::{Config, Path, Planner};
use serde_json::json;

#[derive(Parser)]
#[command(name = "ctplan", version, about = "Constant-time conveyor pickup planning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the root paths and coverage map and write the artifact.
    Preprocess {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Answer one replanning query.
    Query {
        #[arg(long)]
        artifact: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Lattice joint indices and time index, `q0,q1,q2:t`. Defaults to home.
        #[arg(long)]
        state: Option<String>,
        /// Goal cell indices, `x,y,yaw`.
        #[arg(long)]
        goal: String,
    },
    /// Run one episode and print its trace.
    Simulate {
        #[arg(long)]
        artifact: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "e1")]
        strategy: Strategy,
        #[arg(long, default_value = "ours")]
        method: Method,
        /// Planning time per query for the baselines, seconds.
        #[arg(long)]
        budget: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the benchmark table. Writes the CSV and a JSON-lines trace beside it.
    Benchmark {
        #[arg(long)]
        artifact: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// CSV path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        workers: Option<usize>,
        /// Restrict the table to one method.
        #[arg(long)]
        method: Option<Method>,
        /// Restrict the baselines to one time budget.
        #[arg(long)]
        budget: Option<f64>,
    },
    /// Re-check an artifact against its guarantees.
    Verify {
        #[arg(long)]
        artifact: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

enum Failure {
    Config(String),
    Artifact(String),
    Verification(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Artifact(_) => 3,
            Failure::Verification(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Artifact(m) | Failure::Verification(m) => m,
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<ArtifactError> for Failure {
    fn from(e: ArtifactError) -> Self {
        match e {
            ArtifactError::Io { .. } => Failure::Config(e.to_string()),
            _ => Failure::Artifact(e.to_string()),
        }
    }
}

type Result<T> = std::result::Result<T, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let run = match cli.command {
        Command::Preprocess { config, out, seed } => cmd_preprocess(&config, &out, seed),
        Command::Query {
            artifact,
            config,
            state,
            goal,
        } => cmd_query(&artifact, config.as_deref(), state.as_deref(), &goal),
        Command::Simulate {
            artifact,
            config,
            strategy,
            method,
            budget,
            seed,
        } => cmd_simulate(&artifact, config.as_deref(), strategy, method, budget, seed),
        Command::Benchmark {
            artifact,
            config,
            out,
            seed,
            workers,
            method,
            budget,
        } => cmd_benchmark(&artifact, &config, out.as_deref(), seed, workers, method, budget),
        Command::Verify {
            artifact,
            config,
            seed,
        } => cmd_verify(&artifact, config.as_deref(), seed),
    };
    match run {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

/// Config file with the environment overrides applied.
fn load_config(path: &FsPath) -> Result<Config> {
    Ok(Config::load(path)?)
}

/// Artifact plus the config to run it with. A given config must match the
/// artifact's planning part; without one, the artifact's own is used.
fn load_artifact(path: &FsPath, config: Option<&FsPath>) -> Result<(Config, Artifact)> {
    match config {
        Some(c) => {
            let cfg = load_config(c)?;
            let art = Artifact::load(path, Some(&cfg.planning()))?;
            Ok((cfg, art))
        }
        None => {
            let art = Artifact::load(path, None)?;
            let mut cfg = Config::from_planning(art.config.clone());
            cfg.validate()?;
            if let Ok(v) = std::env::var(SEED_ENV) {
                let seed = v
                    .parse()
                    .map_err(|_| Failure::Config(format!("{SEED_ENV}={v} is not an integer")))?;
                cfg.set_run_seed(seed);
            }
            if let Ok(v) = std::env::var(WORKERS_ENV) {
                let w: usize = v
                    .parse()
                    .map_err(|_| Failure::Config(format!("{WORKERS_ENV}={v} is not an integer")))?;
                cfg.benchmark.workers = w.max(1);
            }
            Ok((cfg, art))
        }
    }
}

fn print_json(v: &serde_json::Value) {
    println!("{}", serde_json::to_string(v).expect("json"));
}

fn cmd_preprocess(config: &FsPath, out: &FsPath, seed: Option<u64>) -> Result<()> {
    let mut cfg = load_config(config)?;
    if let Some(s) = seed {
        cfg.set_seed(s);
    }
    let lat = Lattice::new(&cfg);
    let goals: Vec<GoalPose> = lat.region.all().take(8).collect();
    let measured = Planner::new(&lat, cfg.search.lambda, cfg.search.weight)
        .measure_expansion_cost(lat.home(), &goals, 20_000);

    let clock = Instant::now();
    let pre = Preprocessor::new(&lat, &cfg).run();
    let secs = clock.elapsed().as_secs_f64();
    let art = Artifact::new(cfg.planning(), &pre);
    let bytes = art.to_bytes();
    std::fs::write(out, &bytes)
        .map_err(|e| Failure::Config(format!("cannot write {}: {e}", out.display())))?;

    let home = lat.key(lat.home());
    let n = lat.region.len();
    let covered = pre.home_coverage(&lat);
    let unreachable = lat
        .region
        .all()
        .filter(|g| pre.map.is_unreachable(home, lat.region.key(g)))
        .count();
    let t_bound = cfg.preprocess.t_bound;
    println!("root paths:          {}", pre.roots.len());
    println!("goals:               {n}");
    println!("coverage from home:  {:.2}%", 100.0 * covered as f64 / n.max(1) as f64);
    println!("unreachable goals:   {unreachable}");
    println!("coverage entries:    {}", pre.map.entries.len());
    println!("latches:             {}", pre.map.latch_entries.len());
    println!("artifact size:       {} bytes", bytes.len());
    println!("elapsed:             {secs:.2} s");
    match measured {
        Some(c) => println!(
            "expansion cost:      {:.2} us measured, {:.2} us modelled (budget {} measured, {} used)",
            c * 1e6,
            cfg.search.expansion_cost_s * 1e6,
            ((cfg.search.rho * t_bound / c).floor() as usize).max(1),
            cfg.search.budget_for(t_bound)
        ),
        None => println!("expansion cost:      not measured (no expansions)"),
    }
    Ok(())
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(|x| x.trim().parse())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Failure::Config(format!("cannot parse {what} {s:?}")))
}

fn parse_state(text: &str, lat: &Lattice) -> Result<State> {
    let (q, t) = text
        .split_once(':')
        .ok_or_else(|| Failure::Config(format!("state {text:?} is not q0,q1,...:t")))?;
    let q: Vec<i32> = parse_list(q, "state joints")?;
    let t: u32 = t
        .trim()
        .parse()
        .map_err(|_| Failure::Config(format!("cannot parse state time {t:?}")))?;
    if q.len() != lat.dof() {
        return Err(Failure::Config(format!("state needs {} joint indices", lat.dof())));
    }
    Ok(State::new(&q, t))
}

fn parse_goal(text: &str, lat: &Lattice) -> Result<GoalPose> {
    let v: Vec<u16> = parse_list(text, "goal")?;
    let [x_idx, y_idx, yaw_idx] = v[..] else {
        return Err(Failure::Config(format!("goal {text:?} is not x,y,yaw")));
    };
    let g = GoalPose { x_idx, y_idx, yaw_idx };
    if !lat.region.contains(&g) {
        return Err(Failure::Config(format!("goal {g} is outside the goal region")));
    }
    Ok(g)
}

fn path_summary(lat: &Lattice, p: &Path) -> serde_json::Value {
    let mut kinds: BTreeMap<&str, usize> = BTreeMap::new();
    for m in &p.primitives {
        *kinds.entry(m.kind_name()).or_default() += 1;
    }
    json!({
        "goal": p.goal,
        "states": p.len(),
        "duration_s": p.cost(lat.dt),
        "terminal_grasp": p.terminal_grasp,
        "primitives": kinds,
        "first": p.first(),
        "last": p.last(),
    })
}

fn cmd_query(artifact: &FsPath, config: Option<&FsPath>, state: Option<&str>, goal: &str) -> Result<()> {
    let (cfg, art) = load_artifact(artifact, config)?;
    let lat = Lattice::new(&cfg);
    let s = match state {
        Some(text) => parse_state(text, &lat)?,
        None => lat.home().clone(),
    };
    let g = parse_goal(goal, &lat)?;
    let (_, owner) = replannable_states(&art.roots, &lat)
        .into_iter()
        .find(|(x, _)| *x == s)
        .ok_or_else(|| Failure::Config(format!("state {s} is not a stored replannable state")))?;
    let current = &art.roots[owner as usize].path;
    let start = current.index_of(&s).expect("owner path holds the state");
    let engine = QueryEngine::new(&lat, &art);
    match engine.query(&g, current, start) {
        Ok((path, stats)) => {
            print_json(&json!({ "current_root": owner, "path": path_summary(&lat, &path), "stats": stats }));
            Ok(())
        }
        Err(e) => {
            print_json(&json!({ "current_root": owner, "error": e.to_string(), "stats": e.stats() }));
            match e {
                ctplan::query::QueryError::Unreachable { .. } => Ok(()),
                _ => Err(Failure::Artifact(e.to_string())),
            }
        }
    }
}

fn cmd_simulate(
    artifact: &FsPath,
    config: Option<&FsPath>,
    strategy: Strategy,
    method: Method,
    budget: Option<f64>,
    seed: Option<u64>,
) -> Result<()> {
    let (cfg, art) = load_artifact(artifact, config)?;
    let lat = Lattice::new(&cfg);
    let sim = Simulator::new(&cfg, &lat, &art);
    let seed = seed.unwrap_or(cfg.benchmark.seed);
    let episode = match method {
        Method::Ours => sim.run_episode(strategy, seed),
        m => {
            let b = budget.unwrap_or(cfg.preprocess.t_bound);
            if !(b > 0.0) {
                return Err(Failure::Config(format!("budget {b} must be positive")));
            }
            sim.run_baseline(m, b, seed)
        }
    };
    print_json(&serde_json::to_value(&episode).expect("episode serializes"));
    Ok(())
}

fn cmd_benchmark(
    artifact: &FsPath,
    config: &FsPath,
    out: Option<&FsPath>,
    seed: Option<u64>,
    workers: Option<usize>,
    method: Option<Method>,
    budget: Option<f64>,
) -> Result<()> {
    let (mut cfg, art) = load_artifact(artifact, Some(config))?;
    if let Some(s) = seed {
        cfg.set_run_seed(s);
    }
    if let Some(w) = workers {
        cfg.benchmark.workers = w.max(1);
    }
    let lat = Lattice::new(&cfg);
    let cells: Vec<Cell> = benchmark_cells(&cfg)
        .into_iter()
        .filter(|c| match (c, method) {
            (_, None) => true,
            (Cell::Ours(_), Some(m)) => m == Method::Ours,
            (Cell::Baseline(b, _), Some(m)) => *b == m,
        })
        .filter(|c| match (c, budget) {
            (Cell::Baseline(_, t), Some(b)) => (t - b).abs() < 1e-9,
            _ => true,
        })
        .collect();
    let report = run_benchmark(&cfg, &lat, &art, &cells, cfg.benchmark.workers);
    let csv = report.to_csv();
    match out {
        Some(p) => {
            let trace = p.with_extension("jsonl");
            std::fs::write(p, &csv)
                .and_then(|_| std::fs::write(&trace, report.to_json_lines()))
                .map_err(|e| Failure::Config(format!("cannot write {}: {e}", p.display())))?;
            print!("{csv}");
            eprintln!("wrote {} and {}", p.display(), trace.display());
        }
        None => print!("{csv}"),
    }
    Ok(())
}

fn cmd_verify(artifact: &FsPath, config: Option<&FsPath>, seed: Option<u64>) -> Result<()> {
    let (cfg, art) = load_artifact(artifact, config)?;
    let lat = Lattice::new(&cfg);
    let mut opts = VerifyOptions::default();
    if let Some(s) = seed {
        opts.seed = s;
    }
    let report = verify(&lat, &art, &opts);
    for v in &report.violations {
        eprintln!(
            "violation {}: state {} goal {}: {}",
            serde_json::to_value(v.kind).expect("kind").as_str().unwrap_or("?"),
            v.state,
            v.goal,
            v.detail
        );
    }
    print_json(&json!({
        "stored_states": report.stored_states,
        "pairs_checked": report.pairs_checked,
        "reachable_pairs": report.reachable_pairs,
        "certificates_checked": report.certificates_checked,
        "accounting_queries": report.accounting_queries,
        "max_lookups": report.max_lookups,
        "max_plan_calls": report.max_plan_calls,
        "max_expansions": report.max_expansions,
        "max_wall_time_s": report.max_wall_time_s,
        "violations": report.violations.len(),
    }));
    if report.ok() {
        Ok(())
    } else {
        Err(Failure::Verification(format!("{} violations", report.violations.len())))
    }
}
