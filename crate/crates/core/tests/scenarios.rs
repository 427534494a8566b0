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

//! Small hand-checked workloads and whole-run behaviour.

use skewjoin::cluster::{run_nodes, Lane};
use skewjoin::exec::local_join;
use skewjoin::harness::{execute, oracle_join, run_on, ExecOptions, Prepared, SweepConfig, TableSource};
use skewjoin::{
    dispatch, Action, ClusterSpec, Collect, CostWeights, Dataset, ExperimentConfig, Key, KeyClass, MergeMode,
    NodeShare, Placement, Strategy, StrategyChoice, SkewThreshold, Table, Tuple, ZipfSpec,
};

fn shares(per_node: &[&[Key]]) -> Vec<NodeShare> {
    let mut row = 0;
    per_node
        .iter()
        .enumerate()
        .map(|(node, keys)| NodeShare {
            node,
            tuples: keys
                .iter()
                .map(|&key| {
                    row += 1;
                    Tuple { key, row: row - 1 }
                })
                .collect(),
        })
        .collect()
}

fn keys(v: &[Tuple]) -> Vec<Key> {
    let mut k: Vec<Key> = v.iter().map(|t| t.key).collect();
    k.sort();
    k
}

/// Three nodes, h(x) = (x + 1) mod 3. In R, 2 and 0 are partially skewed and
/// 6 is skewed in both tables with R dominating.
fn three_node() -> (Prepared, ClusterSpec) {
    let r = shares(&[&[2, 2, 6, 6, 1], &[2, 6, 6, 0, 3], &[6, 0, 0, 2, 4]]);
    let s = shares(&[&[6, 6, 1, 2], &[6, 0, 3, 5], &[4, 7, 8, 9]]);
    let prepared = Prepared::new(r, s, SkewThreshold::new(0.2).unwrap());
    (prepared, ClusterSpec::new(3, 0).unwrap().with_hash_offset(1))
}

fn opts(spec: ClusterSpec, merge: MergeMode) -> ExecOptions {
    ExecOptions {
        spec,
        merge,
        collect: Collect::Pairs,
        workers: 1,
        tuple_bytes: (16, 16),
    }
}

#[test]
fn three_node_classes() {
    let (p, spec) = three_node();
    assert_eq!(p.cls.class_of(6), KeyClass::CompleteLeft);
    assert_eq!(p.cls.class_of(2), KeyClass::PartialR);
    assert_eq!(p.cls.class_of(0), KeyClass::PartialR);
    assert_eq!(p.cls.class_of(1), KeyClass::NonSkewed);
    assert_eq!(spec.hash_node(6), 1);
}

#[test]
fn three_node_pnr_lanes() {
    let (p, spec) = three_node();
    let plan = skewjoin::plan(Strategy::PnR, &p.cls, 3);
    let (inboxes, net) = skewjoin::redistribute(&p.r_shares, &p.s_shares, &p.cls, &plan, &spec, (16, 16)).unwrap();

    // partial skew stays where it was
    assert_eq!(keys(&inboxes[0].r_loc), vec![2, 2]);
    assert_eq!(keys(&inboxes[1].r_loc), vec![0, 2]);
    assert_eq!(keys(&inboxes[2].r_loc), vec![0, 0, 2]);
    // 6 is dealt round-robin from each source starting at the source itself
    let sixes: Vec<usize> = inboxes.iter().map(|b| b.r_rand.len()).collect();
    assert_eq!(sixes, vec![1, 2, 2]);
    // every node sees every S tuple of 2, 0 and 6
    for b in &inboxes {
        assert_eq!(keys(&b.s_repl), vec![0, 2, 6, 6, 6]);
    }
    // non-skewed keys follow the hash function
    assert_eq!(keys(&inboxes[2].r_hash), vec![1, 4]);
    assert_eq!(keys(&inboxes[1].r_hash), vec![3]);

    // R: only 1 is hashed away, and two 6s leave their source. S: five
    // broadcast tuples cross twice each, plus hashed 1, 5, 8 and 9.
    assert_eq!(net.cross_node_tuples, 1 + 2 + 5 * 2 + 4);
}

#[test]
fn three_node_results_match_reference() {
    let (p, spec) = three_node();
    let r = Dataset::from_keys(p.r_shares.iter().flat_map(|s| s.tuples.iter().map(|t| t.key)).collect());
    let s = Dataset::from_keys(p.s_shares.iter().flat_map(|s| s.tuples.iter().map(|t| t.key)).collect());
    let mut want = oracle_join(&r, &s).pairs;
    want.sort();
    assert_eq!(want.len(), 25);
    for st in Strategy::ALL {
        let mut got = execute(&p, st, &opts(spec, MergeMode::Gather)).unwrap().result.pairs;
        got.sort();
        assert_eq!(got, want, "{st}");
    }
}

#[test]
fn lanes_follow_actions() {
    assert_eq!(Lane::of(Table::S, Action::Local), Lane::of(Table::S, Action::RandomRr));
    assert_eq!(Lane::of(Table::R, Action::Local), Lane::Local);
}

/// Skewed value 0 in both tables; all of R's copies start on node 0.
fn lopsided_complete_skew() -> Prepared {
    let n = 4;
    let mut r: Vec<Vec<Key>> = vec![Vec::new(); n];
    r[0].extend(std::iter::repeat_n(0, 4_000));
    let mut s: Vec<Vec<Key>> = vec![Vec::new(); n];
    for i in 0..400 {
        s[i % n].push(0);
    }
    for k in 0..4_000 {
        r[k % n].push(1_000 + (k / 4) as Key);
    }
    for k in 0..1_600 {
        s[k % n].push(1_000 + k as Key);
    }
    let view: Vec<&[Key]> = r.iter().map(|v| v.as_slice()).collect();
    let sview: Vec<&[Key]> = s.iter().map(|v| v.as_slice()).collect();
    Prepared::new(shares(&view), shares(&sview), SkewThreshold::new(0.05).unwrap())
}

#[test]
fn complete_skew_on_one_node_dispatches_pnr() {
    let p = lopsided_complete_skew();
    let spec = ClusterSpec::new(4, 1).unwrap();
    let d = dispatch::<f64>(&p.cost_inputs(&spec, MergeMode::LocalAggregate, CostWeights::default()));
    assert_eq!(d.chosen, Strategy::PnR);
    let o = opts(spec, MergeMode::LocalAggregate);
    let pnr = execute(&p, Strategy::PnR, &o).unwrap().max_node_load();
    let prpd = execute(&p, Strategy::Prpd, &o).unwrap().max_node_load();
    assert!(pnr < prpd, "{pnr} vs {prpd}");
}

#[test]
fn build_only_skew_dispatches_prpd() {
    let n = 4;
    let mut s: Vec<Vec<Key>> = vec![Vec::new(); n];
    for i in 0..1_000 {
        s[i % n].push(0);
    }
    for k in 0..1_000 {
        s[k % n].push(1_000 + k as Key);
    }
    let mut r: Vec<Vec<Key>> = vec![Vec::new(); n];
    for k in 0..8_000 {
        r[k % n].push(1_000 + (k / 4) as Key);
    }
    let rv: Vec<&[Key]> = r.iter().map(|v| v.as_slice()).collect();
    let sv: Vec<&[Key]> = s.iter().map(|v| v.as_slice()).collect();
    let p = Prepared::new(shares(&rv), shares(&sv), SkewThreshold::new(0.05).unwrap());
    let spec = ClusterSpec::new(n, 1).unwrap();
    let d = dispatch::<f64>(&p.cost_inputs(&spec, MergeMode::LocalAggregate, CostWeights::default()));
    assert_eq!(d.chosen, Strategy::Prpd);
}

fn small_config() -> ExperimentConfig {
    ExperimentConfig {
        r: TableSource::Zipf(ZipfSpec {
            n_distinct: 200,
            z: 1.2,
            rows: 6_000,
            seed: 1,
            payload_width: 4,
        }),
        s: TableSource::Zipf(ZipfSpec {
            n_distinct: 200,
            z: 1.2,
            rows: 1_500,
            seed: 2,
            payload_width: 4,
        }),
        nodes: 6,
        repeats: 3,
        verify: true,
        timing: false,
        ..ExperimentConfig::default()
    }
}

fn load_pair(cfg: &ExperimentConfig) -> (Dataset, Dataset) {
    (cfg.r.load().unwrap(), cfg.s.load().unwrap())
}

#[test]
fn reports_are_byte_identical_across_reruns() {
    let cfg = small_config();
    let (r, s) = load_pair(&cfg);
    let a = run_on(&r, &s, &cfg).unwrap().to_json().unwrap();
    let b = run_on(&r, &s, &cfg).unwrap().to_json().unwrap();
    assert_eq!(a, b);
}

#[test]
fn worker_count_does_not_change_results() {
    let mut cfg = small_config();
    let (r, s) = load_pair(&cfg);
    cfg.workers = 1;
    let one = run_on(&r, &s, &cfg).unwrap();
    cfg.workers = 4;
    let four = run_on(&r, &s, &cfg).unwrap();
    assert_eq!(one.metrics, four.metrics);
    assert_eq!(one.verified, Some(true));
}

#[test]
fn every_strategy_agrees_on_result_count() {
    let mut cfg = small_config();
    let (r, s) = load_pair(&cfg);
    let mut counts = Vec::new();
    for st in Strategy::ALL {
        cfg.strategy = StrategyChoice::Fixed(st);
        let rep = run_on(&r, &s, &cfg).unwrap();
        assert_eq!(rep.verified, Some(true), "{st}");
        assert_eq!(rep.metrics.per_node_processed.len(), cfg.nodes);
        assert!(rep.metrics.max_node_load <= rep.metrics.per_node_processed.iter().sum());
        counts.push(rep.metrics.result_count);
    }
    assert!(counts.windows(2).all(|w| w[0] == w[1]), "{counts:?}");
}

#[test]
fn single_node_has_no_traffic() {
    let mut cfg = small_config();
    cfg.nodes = 1;
    for st in Strategy::ALL {
        cfg.strategy = StrategyChoice::Fixed(st);
        let (r, s) = load_pair(&cfg);
        let rep = run_on(&r, &s, &cfg).unwrap();
        assert_eq!(rep.metrics.cross_node_tuples, 0, "{st}");
        assert_eq!(rep.metrics.merge_traffic, 0, "{st}");
        for c in rep.cost_model.values() {
            assert_eq!(c.re, 0.0);
            assert_eq!(c.summ, 0.0);
        }
    }
}

#[test]
fn smaller_probe_table_swaps_roles() {
    let cfg = small_config();
    let (r, s) = load_pair(&cfg);
    let rep = run_on(&s, &r, &cfg).unwrap();
    assert!(rep.config.swapped_roles);
    assert_eq!(rep.config.r.rows, 6_000);
    assert_eq!(rep.verified, Some(true));
}

#[test]
fn hot_placement_concentrates_skew() {
    let mut cfg = small_config();
    cfg.placement = Placement::Hot(2);
    cfg.merge = MergeMode::LocalAggregate;
    cfg.strategy = StrategyChoice::Fixed(Strategy::Prpd);
    let (r, s) = load_pair(&cfg);
    let rep = run_on(&r, &s, &cfg).unwrap();
    let hot = rep.metrics.per_node_processed[2];
    assert_eq!(rep.metrics.max_node_load, hot);
}

#[test]
fn parallel_node_joins_keep_node_order() {
    let (p, spec) = three_node();
    let plan = skewjoin::plan(Strategy::PnR, &p.cls, 3);
    let (inboxes, _) = skewjoin::redistribute(&p.r_shares, &p.s_shares, &p.cls, &plan, &spec, (16, 16)).unwrap();
    let seq = run_nodes(&inboxes, 1, |_, b| local_join(b, Collect::Pairs));
    let par = run_nodes(&inboxes, 3, |_, b| local_join(b, Collect::Pairs));
    assert_eq!(seq, par);
}

#[test]
fn zipf_sweep_has_one_row_per_exponent() {
    let text = r#"
        strategies = ["grahj", "prpd", "pnr", "auto"]
        [base]
        nodes = 3
        repeats = 1
        verify = true
        timing = false
        r = { kind = "zipf", n_distinct = 100, z = 1.0, rows = 2930, seed = 1 }
        s = { kind = "zipf", n_distinct = 100, z = 1.0, rows = 100, seed = 2 }
        [axes]
        z = [1.0, 1.25, 1.5, 1.75]
    "#;
    let cfg = SweepConfig::from_toml(text).unwrap();
    let res = skewjoin::harness::sweep(&cfg).unwrap();
    let rows = res.rows();
    assert_eq!(rows.len(), 16);
    assert!(res.all_verified());
    for chunk in rows.chunks(4) {
        assert!(chunk.iter().all(|r| r.result_count == chunk[0].result_count));
    }
}

#[test]
fn node_sweep_is_deterministic() {
    let text = r#"
        [base]
        repeats = 2
        timing = false
        placement = "random:4"
        r = { kind = "zipf", n_distinct = 100, z = 1.5, rows = 3910, seed = 1 }
        s = { kind = "zipf", n_distinct = 100, z = 1.5, rows = 190, seed = 2 }
        [axes]
        nodes = [3, 6, 12]
    "#;
    let cfg = SweepConfig::from_toml(text).unwrap();
    let a = skewjoin::harness::sweep(&cfg).unwrap();
    let b = skewjoin::harness::sweep(&cfg).unwrap();
    assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    let nodes: Vec<usize> = a.rows().iter().map(|r| r.nodes).collect();
    assert_eq!(nodes, vec![3, 6, 12]);
}
