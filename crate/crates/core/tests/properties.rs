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

use std::collections::BTreeSet;

use proptest::prelude::*;

use skewjoin::costmodel::estimate_skewed;
use skewjoin::datagen::zipf_counts;
use skewjoin::harness::{execute, oracle_digest, place_tables, ExecOptions, Prepared};
use skewjoin::stats::build_frequency;
use skewjoin::{
    classify, gen_zipf, place, ClusterSpec, Collect, CostWeights, Dataset, Exact, Key, KeyClass, MergeMode,
    NodeShare, Placement, PlacementSpec, Router, SfrGrid, SkewThreshold, Table, Tuple, ZipfSpec,
};

fn placement() -> impl proptest::strategy::Strategy<Value = Placement> {
    prop_oneof![
        Just(Placement::Balanced),
        (0usize..8).prop_map(Placement::Hot),
        any::<u64>().prop_map(Placement::Random),
    ]
}

fn zipf(max_rows: u64) -> impl proptest::strategy::Strategy<Value = ZipfSpec> {
    (1u64..200, prop_oneof![Just(0.0), Just(0.8), Just(1.2), Just(2.0)], 0..=max_rows, any::<u64>()).prop_map(
        |(n_distinct, z, rows, seed)| ZipfSpec {
            n_distinct,
            z,
            rows,
            seed,
            payload_width: 0,
        },
    )
}

fn sorted_keys(shares: &[NodeShare]) -> Vec<Key> {
    let mut k: Vec<Key> = shares.iter().flat_map(|s| s.tuples.iter().map(|t| t.key)).collect();
    k.sort();
    k
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn placement_conserves_keys(spec in zipf(3_000), mode in placement(), n in 1usize..9) {
        let mode = match mode { Placement::Hot(k) => Placement::Hot(k % n), m => m };
        let ds = gen_zipf(&spec).unwrap();
        let skewed: BTreeSet<Key> = [1, 2].into_iter().collect();
        let shares = place(&ds, &PlacementSpec { mode, n_nodes: n }, &skewed).unwrap();
        prop_assert_eq!(shares.len(), n);
        let mut want = ds.keys().to_vec();
        want.sort();
        prop_assert_eq!(sorted_keys(&shares), want);
    }

    #[test]
    fn zipf_counts_are_monotone(n in 1u64..500, z in 0.0f64..3.0, rows in 0u64..100_000) {
        let c = zipf_counts(n, z, rows).unwrap();
        prop_assert_eq!(c.iter().sum::<u64>(), rows);
        prop_assert!(c.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn classes_partition_skewed_values(r in zipf(2_000), s in zipf(800), p in 0.01f64..0.5) {
        let one = |spec: &ZipfSpec| {
            let ds = gen_zipf(spec).unwrap();
            build_frequency(&[NodeShare { node: 0, tuples: ds.tuples().collect() }])
        };
        let (fr, fs) = (one(&r), one(&s));
        let cls = classify(&fr, &fs, SkewThreshold::new(p).unwrap());
        let mut union = BTreeSet::new();
        let mut total = 0;
        for class in KeyClass::ALL.into_iter().filter(|c| c.is_skewed()) {
            let m = cls.members(class).unwrap();
            total += m.len();
            union.extend(m.iter().copied());
            for &k in m {
                prop_assert_eq!(cls.class_of(k), class);
            }
        }
        prop_assert_eq!(total, union.len());
        prop_assert_eq!(union, cls.skewed_keys());

        // a higher threshold only removes values
        let higher = classify(&fr, &fs, SkewThreshold::new((p * 1.5).min(1.0)).unwrap());
        prop_assert!(higher.rho_r.is_subset(&cls.rho_r));
        prop_assert!(higher.rho_s.is_subset(&cls.rho_s));
    }

    #[test]
    fn every_strategy_matches_reference(
        r in zipf(1_500),
        s in zipf(600),
        n in 1usize..7,
        mode in placement(),
        p in prop_oneof![Just(0.02), Just(0.05), Just(0.2)],
        offset in -2i64..3,
        seeded in any::<bool>(),
    ) {
        let mode = match mode { Placement::Hot(k) => Placement::Hot(k % n), m => m };
        let (r, s) = (gen_zipf(&r).unwrap(), gen_zipf(&s).unwrap());
        let threshold = SkewThreshold::new(p).unwrap();
        let (rs, ss) = place_tables(&r, &s, mode, n, threshold).unwrap();
        let prepared = Prepared::new(rs, ss, threshold);
        let mut spec = ClusterSpec::new(n, n - 1).unwrap().with_hash_offset(offset);
        if seeded {
            spec = spec.with_random_mode(skewjoin::RandomMode::Seeded(7));
        }
        let want = oracle_digest(&r, &s);
        for st in skewjoin::Strategy::ALL {
            let o = ExecOptions { spec, merge: MergeMode::Gather, collect: Collect::Digest, workers: 2, tuple_bytes: (8, 8) };
            let e = execute(&prepared, st, &o).unwrap();
            prop_assert_eq!((e.result.count(), e.result.digest), want, "{}", st);
            prop_assert_eq!(e.merge_traffic + e.result.per_node_counts[n - 1], want.0);
        }
    }

    #[test]
    fn fragment_replicate_meets_once(n in 1usize..17, r_src in 0usize..16, s_src in 0usize..16, skip in 0usize..40) {
        let grid = SfrGrid::for_nodes(n);
        prop_assert_eq!(grid.rows * grid.cols, n);
        prop_assert!(grid.rows <= grid.cols);
        let spec = ClusterSpec::new(n, 0).unwrap();
        let mut router = Router::new(spec, Some(grid));
        let t = Tuple { key: 9, row: 0 };
        let (rs, ss) = (r_src % n, s_src % n);
        for _ in 0..skip {
            router.destinations(&t, Table::R, KeyClass::CompleteLeft, rs, skewjoin::Action::SfrRow);
        }
        let rd: BTreeSet<usize> = router.destinations(&t, Table::R, KeyClass::CompleteLeft, rs, skewjoin::Action::SfrRow).into_iter().collect();
        let sd: BTreeSet<usize> = router.destinations(&t, Table::S, KeyClass::CompleteLeft, ss, skewjoin::Action::SfrCol).into_iter().collect();
        prop_assert_eq!(rd.intersection(&sd).count(), 1);
    }

    /// Every node holds `m * n` copies of each key, so round-robin and hash
    /// routing spread values exactly as the model assumes.
    #[test]
    fn model_redistribution_matches_router(
        n in 1usize..7,
        r_mult in proptest::collection::vec(1u64..4, 1..6),
        s_mult in proptest::collection::vec(0u64..3, 1..6),
        p in prop_oneof![Just(0.05), Just(0.2), Just(0.4)],
    ) {
        let build = |mults: &[u64]| {
            let mut shares: Vec<NodeShare> = (0..n).map(NodeShare::new).collect();
            let mut row = 0;
            for (k, &m) in mults.iter().enumerate() {
                for share in shares.iter_mut() {
                    for _ in 0..m as usize * n {
                        share.tuples.push(Tuple { key: k as Key, row });
                        row += 1;
                    }
                }
            }
            shares
        };
        let prepared = Prepared::new(build(&r_mult), build(&s_mult), SkewThreshold::new(p).unwrap());
        let spec = ClusterSpec::new(n, 0).unwrap();
        let inputs = prepared.cost_inputs(&spec, MergeMode::LocalAggregate, CostWeights::default());
        for st in skewjoin::Strategy::ALL {
            let model = estimate_skewed::<Exact>(st, &inputs).re;
            let o = ExecOptions { spec, merge: MergeMode::LocalAggregate, collect: Collect::Count, workers: 1, tuple_bytes: (8, 8) };
            let net = execute(&prepared, st, &o).unwrap().net;
            prop_assert_eq!(model, Exact::from_integer(net.skewed_cross_node_tuples as i128), "{}", st);
        }
    }

    #[test]
    fn binary_round_trip(keys in proptest::collection::vec(any::<i64>(), 0..200), width in 0usize..12) {
        let payloads: Vec<u8> = (0..keys.len() * width).map(|i| i as u8).collect();
        let ds = Dataset::new(keys, payloads, width).unwrap();
        let mut buf = Vec::new();
        ds.write_binary(&mut buf).unwrap();
        prop_assert_eq!(Dataset::read_binary(buf.as_slice()).unwrap(), ds);
    }
}
