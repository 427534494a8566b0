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

//! Node-local hash joins over routed inboxes and the merge phase.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::cluster::NodeInbox;
use crate::dataset::{Key, RowId, Tuple};

/// One join output: row ids of the matching probe and build tuples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Pair {
    pub r: RowId,
    pub s: RowId,
}

impl Pair {
    /// Order-independent fingerprint contribution of this pair.
    pub fn fingerprint(self) -> u64 {
        let mut z = ((self.r as u64) << 32 | self.s as u64).wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
}

/// What a node keeps of its join output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Collect {
    /// Only the number of pairs.
    #[default]
    Count,
    /// Count plus an order-independent fingerprint of the pair multiset.
    Digest,
    /// Every pair.
    Pairs,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NodeResult {
    pub count: u64,
    /// Wrapping sum of pair fingerprints; zero under [`Collect::Count`].
    pub digest: u64,
    pub pairs: Vec<Pair>,
}

impl NodeResult {
    fn absorb(&mut self, other: NodeResult) {
        self.count += other.count;
        self.digest = self.digest.wrapping_add(other.digest);
        self.pairs.extend(other.pairs);
    }
}

/// Probes `probe` against a hash table built on `build`.
pub fn hash_join(probe: &[Tuple], build: &[Tuple], collect: Collect) -> NodeResult {
    let mut out = NodeResult::default();
    if probe.is_empty() || build.is_empty() {
        return out;
    }
    if collect == Collect::Count {
        let mut counts: HashMap<Key, u64> = HashMap::with_capacity(build.len());
        for t in build {
            *counts.entry(t.key).or_default() += 1;
        }
        out.count = probe.iter().filter_map(|t| counts.get(&t.key)).sum();
        return out;
    }
    let mut table: HashMap<Key, Vec<RowId>> = HashMap::with_capacity(build.len());
    for t in build {
        table.entry(t.key).or_default().push(t.row);
    }
    for r in probe {
        let Some(rows) = table.get(&r.key) else {
            continue;
        };
        out.count += rows.len() as u64;
        for &s in rows {
            let pair = Pair { r: r.row, s };
            out.digest = out.digest.wrapping_add(pair.fingerprint());
            if collect == Collect::Pairs {
                out.pairs.push(pair);
            }
        }
    }
    out
}

/// The four lane joins of one node, in order: hash/hash, local/replicated,
/// random/replicated, replicated/random.
pub fn local_join_components(inbox: &NodeInbox, collect: Collect) -> [NodeResult; 4] {
    [
        hash_join(&inbox.r_hash, &inbox.s_hash, collect),
        hash_join(&inbox.r_loc, &inbox.s_repl, collect),
        hash_join(&inbox.r_rand, &inbox.s_repl, collect),
        hash_join(&inbox.r_repl, &inbox.s_rand, collect),
    ]
}

/// Union of the four lane joins. Lanes are never merged before joining, so a
/// replicated tuple only ever meets scattered partners.
pub fn local_join(inbox: &NodeInbox, collect: Collect) -> NodeResult {
    let mut out = NodeResult::default();
    for part in local_join_components(inbox, collect) {
        out.absorb(part);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MergeMode {
    /// Every result is shipped to the gateway.
    #[default]
    Gather,
    /// Results stay on the node that produced them.
    #[serde(alias = "local")]
    LocalAggregate,
}

impl std::str::FromStr for MergeMode {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> crate::error::Result<Self> {
        match s {
            "gather" => Ok(MergeMode::Gather),
            "local" | "local_aggregate" => Ok(MergeMode::LocalAggregate),
            _ => Err(crate::error::Error::Config(format!("unknown merge mode '{s}'"))),
        }
    }
}

impl std::fmt::Display for MergeMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            MergeMode::Gather => "gather",
            MergeMode::LocalAggregate => "local",
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct JoinResult {
    /// Pairs in node order; empty unless pairs were collected.
    pub pairs: Vec<Pair>,
    pub per_node_counts: Vec<u64>,
    pub digest: u64,
    /// The gateway when results were gathered.
    pub held_at: Option<usize>,
}

impl JoinResult {
    pub fn count(&self) -> u64 {
        self.per_node_counts.iter().sum()
    }
}

/// Combines per-node outputs. Returns the result and the number of result
/// tuples that crossed the network.
pub fn merge(results: Vec<NodeResult>, mode: MergeMode, gateway: usize) -> (JoinResult, u64) {
    let per_node_counts: Vec<u64> = results.iter().map(|r| r.count).collect();
    let traffic = match mode {
        MergeMode::Gather => per_node_counts
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != gateway)
            .map(|(_, c)| c)
            .sum(),
        MergeMode::LocalAggregate => 0,
    };
    let mut digest = 0u64;
    let mut pairs = Vec::with_capacity(results.iter().map(|r| r.pairs.len()).sum());
    for r in results {
        digest = digest.wrapping_add(r.digest);
        pairs.extend(r.pairs);
    }
    let held_at = (mode == MergeMode::Gather).then_some(gateway);
    (
        JoinResult {
            pairs,
            per_node_counts,
            digest,
            held_at,
        },
        traffic,
    )
}
