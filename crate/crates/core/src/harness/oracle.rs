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

//! Nested-loop ground truth.

use crate::dataset::{Dataset, RowId};
use crate::exec::{JoinResult, Pair};

/// Every key-equal `(r, s)` pair, by exhaustive comparison.
pub fn oracle_join(r: &Dataset, s: &Dataset) -> JoinResult {
    let mut pairs = Vec::new();
    let mut digest = 0u64;
    for (i, rk) in r.keys().iter().enumerate() {
        for (j, sk) in s.keys().iter().enumerate() {
            if rk == sk {
                let pair = Pair {
                    r: i as RowId,
                    s: j as RowId,
                };
                digest = digest.wrapping_add(pair.fingerprint());
                pairs.push(pair);
            }
        }
    }
    JoinResult {
        per_node_counts: vec![pairs.len() as u64],
        pairs,
        digest,
        held_at: None,
    }
}

/// Count and fingerprint of the oracle join without materialising pairs.
pub fn oracle_digest(r: &Dataset, s: &Dataset) -> (u64, u64) {
    let mut count = 0u64;
    let mut digest = 0u64;
    for (i, rk) in r.keys().iter().enumerate() {
        for (j, sk) in s.keys().iter().enumerate() {
            if rk == sk {
                count += 1;
                digest = digest.wrapping_add(
                    Pair {
                        r: i as RowId,
                        s: j as RowId,
                    }
                    .fingerprint(),
                );
            }
        }
    }
    (count, digest)
}
