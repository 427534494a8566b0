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

//! Shared-nothing cluster simulation: routing actions, per-node inboxes and
//! network accounting.
//!
//! Routing is single-threaded and deterministic. Node-local work runs through
//! [`run_nodes`], which produces identical output for any worker count.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Key, Tuple};
use crate::error::{Error, Result};
use crate::stats::KeyClass;

/// `node = (key + offset) mod N`. Offset 0 is plain modulo hashing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct HashFn {
    pub offset: i64,
}

impl HashFn {
    pub fn node(self, key: Key, n_nodes: usize) -> usize {
        (key as i128 + self.offset as i128).rem_euclid(n_nodes as i128) as usize
    }
}

/// How "random" redistribution picks a destination.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RandomMode {
    /// Per-(source, table, key class) round-robin starting at the source's own index.
    #[default]
    RoundRobin,
    /// Uniform draws from a seeded generator.
    Seeded(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterSpec {
    pub n_nodes: usize,
    pub gateway: usize,
    pub hash: HashFn,
    pub random_mode: RandomMode,
}

impl ClusterSpec {
    pub fn new(n_nodes: usize, gateway: usize) -> Result<Self> {
        if n_nodes == 0 {
            return Err(Error::spec("cluster needs at least one node"));
        }
        if gateway >= n_nodes {
            return Err(Error::NodeOutOfRange {
                node: gateway,
                n_nodes,
            });
        }
        Ok(Self {
            n_nodes,
            gateway,
            hash: HashFn::default(),
            random_mode: RandomMode::RoundRobin,
        })
    }

    pub fn with_hash_offset(mut self, offset: i64) -> Self {
        self.hash = HashFn { offset };
        self
    }

    pub fn with_random_mode(mut self, mode: RandomMode) -> Self {
        self.random_mode = mode;
        self
    }

    pub fn hash_node(&self, key: Key) -> usize {
        self.hash.node(key, self.n_nodes)
    }
}

/// Row-major `rows x cols` arrangement of the nodes for fragment-replicate routing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SfrGrid {
    pub rows: usize,
    pub cols: usize,
}

impl SfrGrid {
    /// `rows` is the largest divisor of `n` not exceeding `sqrt(n)`; a prime
    /// `n` yields a `1 x n` grid.
    pub fn for_nodes(n: usize) -> Self {
        let rows = (1..=n)
            .take_while(|d| d * d <= n)
            .filter(|d| n.is_multiple_of(*d))
            .last()
            .unwrap_or(1);
        Self {
            rows,
            cols: n / rows,
        }
    }

    pub fn n_nodes(self) -> usize {
        self.rows * self.cols
    }

    pub fn row_nodes(self, row: usize) -> impl Iterator<Item = usize> {
        (0..self.cols).map(move |c| row * self.cols + c)
    }

    pub fn col_nodes(self, col: usize) -> impl Iterator<Item = usize> {
        (0..self.rows).map(move |r| r * self.cols + col)
    }
}

/// Redistribution action applied to every tuple of a key class in one table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Hash,
    Local,
    RandomRr,
    Broadcast,
    /// Replicate along one grid row.
    SfrRow,
    /// Replicate along one grid column.
    SfrCol,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Table {
    R,
    S,
}

/// Inbox lane. Lanes are named after how the partner table was routed:
/// `Random` tuples meet a replicated partner, `Replicated` tuples meet a
/// scattered one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Lane {
    Hash,
    Local,
    Random,
    Replicated,
}

impl Lane {
    pub fn of(table: Table, action: Action) -> Lane {
        match (table, action) {
            (_, Action::Hash) => Lane::Hash,
            (Table::R, Action::Local) => Lane::Local,
            // The build side has no local lane; locally kept S tuples join
            // replicated R tuples exactly like scattered ones.
            (Table::S, Action::Local) => Lane::Random,
            (_, Action::RandomRr) | (_, Action::SfrRow) => Lane::Random,
            (_, Action::Broadcast) | (_, Action::SfrCol) => Lane::Replicated,
        }
    }
}

/// Tuples a node receives, kept in separate lanes until joined.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NodeInbox {
    pub r_hash: Vec<Tuple>,
    pub r_loc: Vec<Tuple>,
    pub r_rand: Vec<Tuple>,
    pub r_repl: Vec<Tuple>,
    pub s_hash: Vec<Tuple>,
    pub s_rand: Vec<Tuple>,
    pub s_repl: Vec<Tuple>,
}

impl NodeInbox {
    fn lane_mut(&mut self, table: Table, lane: Lane) -> &mut Vec<Tuple> {
        match (table, lane) {
            (Table::R, Lane::Hash) => &mut self.r_hash,
            (Table::R, Lane::Local) => &mut self.r_loc,
            (Table::R, Lane::Random) => &mut self.r_rand,
            (Table::R, Lane::Replicated) => &mut self.r_repl,
            (Table::S, Lane::Hash) => &mut self.s_hash,
            (Table::S, Lane::Random) | (Table::S, Lane::Local) => &mut self.s_rand,
            (Table::S, Lane::Replicated) => &mut self.s_repl,
        }
    }

    pub fn r_len(&self) -> usize {
        self.r_hash.len() + self.r_loc.len() + self.r_rand.len() + self.r_repl.len()
    }

    pub fn s_len(&self) -> usize {
        self.s_hash.len() + self.s_rand.len() + self.s_repl.len()
    }

    pub fn r_tuples(&self) -> impl Iterator<Item = &Tuple> {
        self.r_hash
            .iter()
            .chain(&self.r_loc)
            .chain(&self.r_rand)
            .chain(&self.r_repl)
    }

    pub fn s_tuples(&self) -> impl Iterator<Item = &Tuple> {
        self.s_hash.iter().chain(&self.s_rand).chain(&self.s_repl)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetMetrics {
    pub cross_node_tuples: u64,
    pub cross_node_bytes: u64,
    /// Cross-node tuples whose key is skewed in either table.
    pub skewed_cross_node_tuples: u64,
    pub per_node_received: Vec<u64>,
    pub per_node_processed: Vec<u64>,
}

impl NetMetrics {
    pub fn new(n_nodes: usize) -> Self {
        Self {
            per_node_received: vec![0; n_nodes],
            per_node_processed: vec![0; n_nodes],
            ..Default::default()
        }
    }
}

/// Delivers tuples into node inboxes and accounts for every copy.
#[derive(Debug)]
pub struct Router {
    spec: ClusterSpec,
    grid: Option<SfrGrid>,
    tuple_bytes: [u64; 2],
    counters: HashMap<(usize, Table, KeyClass), usize>,
    rng: Option<ChaCha8Rng>,
    inboxes: Vec<NodeInbox>,
    metrics: NetMetrics,
}

impl Router {
    pub fn new(spec: ClusterSpec, grid: Option<SfrGrid>) -> Self {
        if let Some(g) = grid {
            assert_eq!(g.n_nodes(), spec.n_nodes, "grid must cover every node");
        }
        let rng = match spec.random_mode {
            RandomMode::RoundRobin => None,
            RandomMode::Seeded(seed) => Some(ChaCha8Rng::seed_from_u64(seed)),
        };
        Self {
            spec,
            grid,
            tuple_bytes: [8, 8],
            counters: HashMap::new(),
            rng,
            inboxes: vec![NodeInbox::default(); spec.n_nodes],
            metrics: NetMetrics::new(spec.n_nodes),
        }
    }

    /// Wire size of one tuple of each table, for byte accounting.
    pub fn with_tuple_bytes(mut self, r_bytes: u64, s_bytes: u64) -> Self {
        self.tuple_bytes = [r_bytes, s_bytes];
        self
    }

    /// Picks a slot in `0..modulus` for a scattered tuple.
    fn next_slot(&mut self, source: usize, table: Table, class: KeyClass, modulus: usize) -> usize {
        match &mut self.rng {
            Some(rng) => rng.gen_range(0..modulus),
            None => {
                let counter = self.counters.entry((source, table, class)).or_insert(0);
                let slot = (source + *counter) % modulus;
                *counter += 1;
                slot
            }
        }
    }

    fn grid(&self) -> SfrGrid {
        self.grid.expect("fragment-replicate action routed without a grid")
    }

    /// Destination nodes of one tuple. Advances round-robin state.
    pub fn destinations(
        &mut self,
        tuple: &Tuple,
        table: Table,
        class: KeyClass,
        source: usize,
        action: Action,
    ) -> Vec<usize> {
        let n = self.spec.n_nodes;
        match action {
            Action::Hash => vec![self.spec.hash_node(tuple.key)],
            Action::Local => vec![source],
            Action::RandomRr => vec![self.next_slot(source, table, class, n)],
            Action::Broadcast => (0..n).collect(),
            Action::SfrRow => {
                let grid = self.grid();
                let row = self.next_slot(source, table, class, grid.rows);
                grid.row_nodes(row).collect()
            }
            Action::SfrCol => {
                let grid = self.grid();
                let col = self.next_slot(source, table, class, grid.cols);
                grid.col_nodes(col).collect()
            }
        }
    }

    /// Routes one tuple from `source`, delivering a copy to every destination.
    pub fn route(
        &mut self,
        tuple: &Tuple,
        table: Table,
        class: KeyClass,
        source: usize,
        action: Action,
    ) -> Vec<usize> {
        let dests = self.destinations(tuple, table, class, source, action);
        let lane = Lane::of(table, action);
        let bytes = self.tuple_bytes[table as usize];
        for &d in &dests {
            self.inboxes[d].lane_mut(table, lane).push(*tuple);
            self.metrics.per_node_received[d] += 1;
            if d != source {
                self.metrics.cross_node_tuples += 1;
                self.metrics.cross_node_bytes += bytes;
                if class.is_skewed() {
                    self.metrics.skewed_cross_node_tuples += 1;
                }
            }
        }
        dests
    }

    pub fn metrics(&self) -> &NetMetrics {
        &self.metrics
    }

    pub fn finish(self) -> (Vec<NodeInbox>, NetMetrics) {
        (self.inboxes, self.metrics)
    }
}

/// Applies `f` to every inbox, on up to `workers` threads. Output order
/// follows node order, so results never depend on the worker count.
pub fn run_nodes<F, O>(inboxes: &[NodeInbox], workers: usize, f: F) -> Vec<O>
where
    F: Fn(usize, &NodeInbox) -> O + Sync + Send,
    O: Send,
{
    if workers <= 1 || inboxes.len() <= 1 {
        return inboxes.iter().enumerate().map(|(i, b)| f(i, b)).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .expect("failed to build worker pool");
    pool.install(|| {
        inboxes
            .par_iter()
            .enumerate()
            .map(|(i, b)| f(i, b))
            .collect()
    })
}
