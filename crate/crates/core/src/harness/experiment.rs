// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

//! Single experiment runs: generate or load tables, place, plan, route, join,
//! merge and report.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::cluster::{run_nodes, ClusterSpec, NetMetrics, RandomMode};
use crate::costmodel::{estimate, CostBreakdown, CostInputs, CostWeights};
use crate::datagen::{gen_single_skew, gen_zipf, place, Placement, PlacementSpec, SingleSkewSpec, ZipfSpec};
use crate::dataset::{Dataset, Key, NodeShare};
use crate::dispatcher::{dispatch, Decision};
use crate::error::{Error, Result};
use crate::exec::{local_join, merge, Collect, JoinResult, MergeMode};
use crate::harness::oracle::oracle_digest;
use crate::harness::report::{ConfigEcho, RepeatSummary, RunMetrics, RunReport, SkewSummary, TableEcho};
use crate::stats::{build_frequency, classify, FrequencyMap, SkewClassification, SkewThreshold};
use crate::strategies::{plan, redistribute, RoutePlan, Strategy, StrategyChoice};

/// Where a table comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TableSource {
    Zipf(ZipfSpec),
    SingleSkew(SingleSkewSpec),
    File { path: PathBuf },
}

impl TableSource {
    pub fn load(&self) -> Result<Dataset> {
        match self {
            TableSource::Zipf(spec) => gen_zipf(spec),
            TableSource::SingleSkew(spec) => gen_single_skew(spec),
            TableSource::File { path } => Dataset::load(path),
        }
    }

    /// Multiplies the row count of generated tables.
    pub fn scaled(&self, factor: u64) -> Self {
        let mut out = self.clone();
        match &mut out {
            TableSource::Zipf(z) => z.rows *= factor,
            TableSource::SingleSkew(s) => s.rows *= factor,
            TableSource::File { .. } => {}
        }
        out
    }

    fn describe(&self) -> String {
        match self {
            TableSource::Zipf(z) => format!("zipf(n={}, z={}, seed={})", z.n_distinct, z.z, z.seed),
            TableSource::SingleSkew(s) => format!(
                "single_skew(key={}, frac={}, rest={}, seed={})",
                s.skew_key, s.skew_fraction, s.distinct_rest, s.seed
            ),
            TableSource::File { path } => format!("file({})", path.display()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub r: TableSource,
    pub s: TableSource,
    pub strategy: StrategyChoice,
    pub nodes: usize,
    pub gateway: usize,
    pub threshold: f64,
    pub merge: MergeMode,
    pub placement: Placement,
    pub hash_offset: i64,
    pub random_mode: RandomMode,
    pub verify: bool,
    /// Worker threads for node-local joins; 0 means one per available core.
    pub workers: usize,
    /// Runs averaged when placement is random; other placements run once.
    pub repeats: usize,
    pub weights: CostWeights,
    /// When false, every wall-clock field is reported as zero so that
    /// reports are byte-identical across reruns.
    pub timing: bool,
}

/// Desk-scale defaults: a tenth of the published 391K/19K tables.
impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            r: TableSource::Zipf(ZipfSpec {
                n_distinct: 1_000,
                z: 1.5,
                rows: 39_100,
                seed: 1,
                payload_width: 8,
            }),
            s: TableSource::Zipf(ZipfSpec {
                n_distinct: 1_000,
                z: 1.5,
                rows: 1_900,
                seed: 2,
                payload_width: 8,
            }),
            strategy: StrategyChoice::Auto,
            nodes: 12,
            gateway: 0,
            threshold: 0.05,
            merge: MergeMode::Gather,
            placement: Placement::Random(1),
            hash_offset: 0,
            random_mode: RandomMode::RoundRobin,
            verify: false,
            workers: 0,
            repeats: 10,
            weights: CostWeights::default(),
            timing: true,
        }
    }
}

impl ExperimentConfig {
    pub fn cluster_spec(&self) -> Result<ClusterSpec> {
        Ok(ClusterSpec::new(self.nodes, self.gateway)?
            .with_hash_offset(self.hash_offset)
            .with_random_mode(self.random_mode))
    }

    fn effective_workers(&self) -> usize {
        if self.workers == 0 {
            std::thread::available_parallelism().map_or(1, |n| n.get())
        } else {
            self.workers
        }
    }
}

/// Placed tables with their statistics.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub r_shares: Vec<NodeShare>,
    pub s_shares: Vec<NodeShare>,
    pub freq_r: FrequencyMap,
    pub freq_s: FrequencyMap,
    pub cls: SkewClassification,
}

impl Prepared {
    pub fn new(r_shares: Vec<NodeShare>, s_shares: Vec<NodeShare>, threshold: SkewThreshold) -> Self {
        let freq_r = build_frequency(&r_shares);
        let freq_s = build_frequency(&s_shares);
        let cls = classify(&freq_r, &freq_s, threshold);
        Self {
            r_shares,
            s_shares,
            freq_r,
            freq_s,
            cls,
        }
    }

    pub fn cost_inputs<'a>(&'a self, spec: &'a ClusterSpec, merge: MergeMode, weights: CostWeights) -> CostInputs<'a> {
        CostInputs {
            cls: &self.cls,
            freq_r: &self.freq_r,
            freq_s: &self.freq_s,
            spec,
            merge,
            weights,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ExecOptions {
    pub spec: ClusterSpec,
    pub merge: MergeMode,
    pub collect: Collect,
    pub workers: usize,
    /// Wire size of one R and one S tuple.
    pub tuple_bytes: (u64, u64),
}

/// Outcome of executing one sub-operator.
#[derive(Debug, Clone)]
pub struct Execution {
    pub strategy: Strategy,
    pub plan: RoutePlan,
    /// `per_node_processed` counts received tuples, produced results and,
    /// at a gathering gateway, the results shipped in from other nodes.
    pub net: NetMetrics,
    pub result: JoinResult,
    pub merge_traffic: u64,
    pub elapsed: Duration,
}

impl Execution {
    pub fn max_node_load(&self) -> u64 {
        self.net.per_node_processed.iter().copied().max().unwrap_or(0)
    }
}

/// Routes, joins and merges under one fixed strategy.
pub fn execute(prepared: &Prepared, strategy: Strategy, opts: &ExecOptions) -> Result<Execution> {
    let start = Instant::now();
    let route_plan = plan(strategy, &prepared.cls, opts.spec.n_nodes);
    let (inboxes, mut net) = redistribute(
        &prepared.r_shares,
        &prepared.s_shares,
        &prepared.cls,
        &route_plan,
        &opts.spec,
        opts.tuple_bytes,
    )?;
    let results = run_nodes(&inboxes, opts.workers, |_, inbox| local_join(inbox, opts.collect));
    for (i, (inbox, res)) in inboxes.iter().zip(&results).enumerate() {
        net.per_node_processed[i] = (inbox.r_len() + inbox.s_len()) as u64 + res.count;
    }
    let (result, merge_traffic) = merge(results, opts.merge, opts.spec.gateway);
    if opts.merge == MergeMode::Gather {
        net.per_node_processed[opts.spec.gateway] += merge_traffic;
    }
    Ok(Execution {
        strategy,
        plan: route_plan,
        net,
        result,
        merge_traffic,
        elapsed: start.elapsed(),
    })
}

/// Keys skewed in either table, from whole-table counts.
pub fn skewed_keys(r: &Dataset, s: &Dataset, threshold: SkewThreshold) -> BTreeSet<Key> {
    let whole = |ds: &Dataset| build_frequency(&[NodeShare { node: 0, tuples: ds.tuples().collect() }]);
    classify(&whole(r), &whole(s), threshold).skewed_keys()
}

/// Places both tables. Random placement draws R and S from distinct streams.
pub fn place_tables(r: &Dataset, s: &Dataset, placement: Placement, n_nodes: usize, threshold: SkewThreshold) -> Result<(Vec<NodeShare>, Vec<NodeShare>)> {
    let hot_keys = match placement {
        Placement::Hot(_) => skewed_keys(r, s, threshold),
        _ => BTreeSet::new(),
    };
    let s_mode = match placement {
        Placement::Random(seed) => Placement::Random(seed ^ 0x5EED_5EED_5EED),
        other => other,
    };
    let r_shares = place(r, &PlacementSpec { mode: placement, n_nodes }, &hot_keys)?;
    let s_shares = place(s, &PlacementSpec { mode: s_mode, n_nodes }, &hot_keys)?;
    Ok((r_shares, s_shares))
}

/// Loads the configured tables and runs the experiment.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunReport> {
    let r = config.r.load()?;
    let s = config.s.load()?;
    run_on(&r, &s, config)
}

/// Runs the experiment on already materialised tables.
pub fn run_on(r: &Dataset, s: &Dataset, config: &ExperimentConfig) -> Result<RunReport> {
    let spec = config.cluster_spec()?;
    let threshold = SkewThreshold::new(config.threshold)?;
    let (r, s, swapped) = if r.len() < s.len() {
        log::warn!(
            "probe table ({} rows) is smaller than build table ({} rows); swapping roles",
            r.len(),
            s.len()
        );
        (s, r, true)
    } else {
        (r, s, false)
    };

    let repeats = match config.placement {
        Placement::Random(_) => config.repeats.max(1),
        _ => 1,
    };
    let opts = ExecOptions {
        spec,
        merge: config.merge,
        collect: if config.verify { Collect::Digest } else { Collect::Count },
        workers: config.effective_workers(),
        tuple_bytes: (r.tuple_bytes(), s.tuple_bytes()),
    };

    let mut first: Option<(Prepared, Execution, Option<Decision<f64>>)> = None;
    let mut loads = Vec::with_capacity(repeats);
    let mut traffic = Vec::with_capacity(repeats);
    let mut walls = Vec::with_capacity(repeats);
    for rep in 0..repeats {
        let placement = match config.placement {
            Placement::Random(seed) => Placement::Random(seed.wrapping_add(rep as u64)),
            other => other,
        };
        let (r_shares, s_shares) = place_tables(r, s, placement, spec.n_nodes, threshold)?;
        let prepared = Prepared::new(r_shares, s_shares, threshold);
        let inputs = prepared.cost_inputs(&spec, config.merge, config.weights);
        let (strategy, decision) = match config.strategy {
            StrategyChoice::Fixed(st) => (st, None),
            StrategyChoice::Auto => {
                let mut d = dispatch::<f64>(&inputs);
                if !config.timing {
                    d.decision_time = Duration::ZERO;
                }
                (d.chosen, Some(d))
            }
        };
        let exec = execute(&prepared, strategy, &opts)?;
        loads.push(exec.max_node_load() as f64);
        traffic.push(exec.net.cross_node_tuples as f64);
        walls.push(exec.elapsed.as_secs_f64() * 1e3);
        if first.is_none() {
            first = Some((prepared, exec, decision));
        }
    }
    let (prepared, exec, decision) = first.expect("at least one repeat runs");

    let verified = if config.verify {
        let (count, digest) = oracle_digest(r, s);
        Some(count == exec.result.count() && digest == exec.result.digest)
    } else {
        None
    };

    let inputs = prepared.cost_inputs(&spec, config.merge, config.weights);
    let cost_model: CostTable = Strategy::ALL
        .iter()
        .map(|&st| (st, estimate::<f64>(st, &inputs)))
        .collect();

    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let wall_ms = if config.timing { walls[0] } else { 0.0 };
    let throughput = throughput(r.len() + s.len(), wall_ms);
    let repeat_summary = (repeats > 1).then(|| {
        let mean_wall = if config.timing { mean(&walls) } else { 0.0 };
        RepeatSummary {
            runs: repeats,
            mean_max_node_load: mean(&loads),
            mean_cross_node_tuples: mean(&traffic),
            mean_wall_ms: mean_wall,
            mean_throughput_tuples_per_s: throughput_f(r.len() + s.len(), mean_wall),
        }
    });

    Ok(RunReport {
        config: ConfigEcho {
            strategy: config.strategy,
            executed: exec.strategy,
            nodes: spec.n_nodes,
            gateway: spec.gateway,
            threshold: threshold.value(),
            merge: config.merge,
            placement: config.placement.to_string(),
            hash_offset: spec.hash.offset,
            random_mode: spec.random_mode,
            repeats,
            swapped_roles: swapped,
            r: TableEcho {
                rows: r.len() as u64,
                payload_width: r.payload_width(),
                source: if swapped { config.s.describe() } else { config.r.describe() },
            },
            s: TableEcho {
                rows: s.len() as u64,
                payload_width: s.payload_width(),
                source: if swapped { config.r.describe() } else { config.s.describe() },
            },
        },
        metrics: RunMetrics {
            result_count: exec.result.count(),
            cross_node_tuples: exec.net.cross_node_tuples,
            cross_node_bytes: exec.net.cross_node_bytes,
            skewed_cross_node_tuples: exec.net.skewed_cross_node_tuples,
            merge_traffic: exec.merge_traffic,
            per_node_received: exec.net.per_node_received.clone(),
            max_node_load: exec.max_node_load(),
            per_node_processed: exec.net.per_node_processed.clone(),
            wall_ms,
            throughput_tuples_per_s: throughput,
        },
        skew: SkewSummary::of(&prepared.cls),
        cost_model,
        decision,
        verified,
        repeat_summary,
    })
}

fn throughput(tuples: usize, wall_ms: f64) -> f64 {
    throughput_f(tuples, wall_ms)
}

fn throughput_f(tuples: usize, wall_ms: f64) -> f64 {
    if wall_ms > 0.0 {
        tuples as f64 / (wall_ms / 1e3)
    } else {
        0.0
    }
}

/// Model estimate of every strategy.
pub type CostTable = BTreeMap<Strategy, CostBreakdown<f64>>;

/// Model estimates for every strategy plus the dispatcher's choice, without executing.
pub fn cost_only(r: &Dataset, s: &Dataset, config: &ExperimentConfig) -> Result<(CostTable, Decision<f64>)> {
    let spec = config.cluster_spec()?;
    let threshold = SkewThreshold::new(config.threshold)?;
    let (r, s) = if r.len() < s.len() { (s, r) } else { (r, s) };
    let (r_shares, s_shares) = place_tables(r, s, config.placement, spec.n_nodes, threshold)?;
    let prepared = Prepared::new(r_shares, s_shares, threshold);
    let inputs = prepared.cost_inputs(&spec, config.merge, config.weights);
    let costs = Strategy::ALL
        .iter()
        .map(|&st| (st, estimate::<f64>(st, &inputs)))
        .collect();
    let mut decision = dispatch::<f64>(&inputs);
    if !config.timing {
        decision.decision_time = Duration::ZERO;
    }
    Ok((costs, decision))
}

/// Outcome of checking one strategy against the oracle.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VerifyOutcome {
    pub strategy: Strategy,
    pub result_count: u64,
    pub oracle_count: u64,
    pub matches: bool,
}

/// Executes every strategy and compares each result with the nested-loop oracle.
pub fn verify_all(r: &Dataset, s: &Dataset, config: &ExperimentConfig) -> Result<Vec<VerifyOutcome>> {
    let spec = config.cluster_spec()?;
    let threshold = SkewThreshold::new(config.threshold)?;
    let (r, s) = if r.len() < s.len() { (s, r) } else { (r, s) };
    let (r_shares, s_shares) = place_tables(r, s, config.placement, spec.n_nodes, threshold)?;
    let prepared = Prepared::new(r_shares, s_shares, threshold);
    let opts = ExecOptions {
        spec,
        merge: config.merge,
        collect: Collect::Digest,
        workers: config.effective_workers(),
        tuple_bytes: (r.tuple_bytes(), s.tuple_bytes()),
    };
    let (oracle_count, oracle_fp) = oracle_digest(r, s);
    Strategy::ALL
        .iter()
        .map(|&st| {
            let exec = execute(&prepared, st, &opts)?;
            Ok(VerifyOutcome {
                strategy: st,
                result_count: exec.result.count(),
                oracle_count,
                matches: exec.result.count() == oracle_count && exec.result.digest == oracle_fp,
            })
        })
        .collect()
}

/// Rejects configurations that cannot run before any table is generated.
pub fn validate(config: &ExperimentConfig) -> Result<()> {
    config.cluster_spec()?;
    SkewThreshold::new(config.threshold)?;
    if let Placement::Hot(k) = config.placement {
        if k >= config.nodes {
            return Err(Error::NodeOutOfRange { node: k, n_nodes: config.nodes });
        }
    }
    Ok(())
}
