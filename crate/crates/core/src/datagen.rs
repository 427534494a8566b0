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

//! Synthetic workloads with controlled skew and controlled tuple placement.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use num_traits::Float;
use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Key, NodeShare};
use crate::error::{Error, Result};

pub const DEFAULT_PAYLOAD_WIDTH: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZipfSpec {
    pub n_distinct: u64,
    pub z: f64,
    pub rows: u64,
    pub seed: u64,
    #[serde(default = "default_payload_width")]
    pub payload_width: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SingleSkewSpec {
    pub skew_key: Key,
    pub skew_fraction: f64,
    pub rows: u64,
    pub distinct_rest: u64,
    pub seed: u64,
    #[serde(default = "default_payload_width")]
    pub payload_width: usize,
}

fn default_payload_width() -> usize {
    DEFAULT_PAYLOAD_WIDTH
}

/// Generalized harmonic number `H(n, z) = sum_{i=1..n} 1 / i^z`.
///
/// Summed from the smallest term upwards.
pub fn harmonic<T: Float>(n: u64, z: T) -> T {
    (1..=n).rev().fold(T::zero(), |acc, i| {
        acc + T::one() / T::from(i).expect("index fits in float").powf(z)
    })
}

/// Rounds non-negative quotas to integers summing exactly to `total`.
///
/// Each entry receives the floor of its quota; leftover units go to the
/// largest fractional parts, lower index first on ties.
pub fn largest_remainder(quotas: &[f64], total: u64) -> Vec<u64> {
    let mut counts: Vec<u64> = quotas.iter().map(|q| q.max(0.0).floor() as u64).collect();
    let assigned: u64 = counts.iter().sum();
    let mut order: Vec<usize> = (0..quotas.len()).collect();
    let frac = |i: usize| quotas[i].max(0.0) - quotas[i].max(0.0).floor();
    if assigned <= total {
        order.sort_by(|&a, &b| frac(b).total_cmp(&frac(a)).then(a.cmp(&b)));
        let deficit = (total - assigned) as usize;
        for &i in order.iter().cycle().take(deficit) {
            counts[i] += 1;
        }
    } else {
        // Rounding noise pushed the floors past the total.
        order.sort_by(|&a, &b| frac(a).total_cmp(&frac(b)).then(b.cmp(&a)));
        let mut surplus = assigned - total;
        for &i in order.iter().cycle() {
            if surplus == 0 {
                break;
            }
            if counts[i] > 0 {
                counts[i] -= 1;
                surplus -= 1;
            }
        }
    }
    counts
}

/// Per-rank tuple counts for a Zipf table. Rank `r` (1-based) sits at index `r - 1`.
pub fn zipf_counts(n_distinct: u64, z: f64, rows: u64) -> Result<Vec<u64>> {
    if n_distinct == 0 {
        return Err(Error::spec("zipf table needs at least one distinct key"));
    }
    if !z.is_finite() || z < 0.0 {
        return Err(Error::spec(format!("zipf factor must be finite and >= 0, got {z}")));
    }
    let h = harmonic(n_distinct, z);
    let quotas: Vec<f64> = (1..=n_distinct)
        .map(|r| rows as f64 / h / (r as f64).powf(z))
        .collect();
    Ok(largest_remainder(&quotas, rows))
}

/// Zipf table whose rank-`r` key is the integer `r`.
///
/// Counts are deterministic; the seed only drives tuple order and payload bytes.
pub fn gen_zipf(spec: &ZipfSpec) -> Result<Dataset> {
    let counts = zipf_counts(spec.n_distinct, spec.z, spec.rows)?;
    let groups = counts
        .iter()
        .enumerate()
        .map(|(i, &c)| (i as Key + 1, c));
    materialize(groups, spec.rows, spec.seed, spec.payload_width)
}

/// Table with one hot key and a uniform remainder.
pub fn gen_single_skew(spec: &SingleSkewSpec) -> Result<Dataset> {
    let frac = spec.skew_fraction;
    if !(0.0..=1.0).contains(&frac) {
        return Err(Error::spec(format!(
            "skew fraction must lie in [0, 1], got {frac}"
        )));
    }
    if spec.distinct_rest == 0 && frac < 1.0 {
        return Err(Error::spec(
            "distinct_rest must be positive when the skew fraction is below 1",
        ));
    }
    let hot = (frac * spec.rows as f64).round() as u64;
    let rest = spec.rows - hot.min(spec.rows);
    let rest_counts = if spec.distinct_rest == 0 {
        Vec::new()
    } else {
        let quota = rest as f64 / spec.distinct_rest as f64;
        largest_remainder(&vec![quota; spec.distinct_rest as usize], rest)
    };
    let rest_keys = (0..).filter(|&k: &Key| k != spec.skew_key);
    let groups = std::iter::once((spec.skew_key, hot)).chain(rest_keys.zip(rest_counts));
    materialize(groups, spec.rows, spec.seed, spec.payload_width)
}

fn materialize(
    groups: impl Iterator<Item = (Key, u64)>,
    rows: u64,
    seed: u64,
    payload_width: usize,
) -> Result<Dataset> {
    let mut keys = Vec::with_capacity(rows as usize);
    for (key, count) in groups {
        keys.extend(std::iter::repeat_n(key, count as usize));
    }
    debug_assert_eq!(keys.len() as u64, rows);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    keys.shuffle(&mut rng);
    let mut payloads = vec![0u8; keys.len() * payload_width];
    rng.fill_bytes(&mut payloads);
    Dataset::new(keys, payloads, payload_width)
}

/// Initial tuple placement across nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Placement {
    /// Contiguous chunks whose sizes differ by at most one.
    Balanced,
    /// Every tuple of a skewed key lands on the given node; the rest are balanced.
    Hot(usize),
    /// Each tuple goes to a uniformly random node.
    Random(u64),
}

impl fmt::Display for Placement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Placement::Balanced => write!(f, "balanced"),
            Placement::Hot(k) => write!(f, "hot:{k}"),
            Placement::Random(seed) => write!(f, "random:{seed}"),
        }
    }
}

impl FromStr for Placement {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("unknown placement '{s}'"));
        match s.split_once(':') {
            None if s == "balanced" => Ok(Placement::Balanced),
            None if s == "random" => Ok(Placement::Random(0)),
            Some(("hot", k)) => k.parse().map(Placement::Hot).map_err(|_| bad()),
            Some(("random", seed)) => seed.parse().map(Placement::Random).map_err(|_| bad()),
            _ => Err(bad()),
        }
    }
}

impl TryFrom<String> for Placement {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Placement> for String {
    fn from(p: Placement) -> String {
        p.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlacementSpec {
    pub mode: Placement,
    pub n_nodes: usize,
}

/// Splits a dataset into per-node shares. No tuple is lost or duplicated.
pub fn place(ds: &Dataset, spec: &PlacementSpec, skew_keys: &BTreeSet<Key>) -> Result<Vec<NodeShare>> {
    let n = spec.n_nodes;
    if n == 0 {
        return Err(Error::spec("placement needs at least one node"));
    }
    let mut shares: Vec<NodeShare> = (0..n).map(NodeShare::new).collect();
    match spec.mode {
        Placement::Balanced => balanced_into(&mut shares, ds.tuples()),
        Placement::Hot(hot) => {
            if hot >= n {
                return Err(Error::NodeOutOfRange { node: hot, n_nodes: n });
            }
            let (skewed, rest): (Vec<_>, Vec<_>) =
                ds.tuples().partition(|t| skew_keys.contains(&t.key));
            balanced_into(&mut shares, rest.into_iter());
            shares[hot].tuples.extend(skewed);
        }
        Placement::Random(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for t in ds.tuples() {
                shares[rng.gen_range(0..n)].tuples.push(t);
            }
        }
    }
    Ok(shares)
}

fn balanced_into(shares: &mut [NodeShare], tuples: impl ExactSizeIterator<Item = crate::dataset::Tuple>) {
    let n = shares.len();
    let m = tuples.len();
    let (base, extra) = (m / n, m % n);
    let mut tuples = tuples;
    for (i, share) in shares.iter_mut().enumerate() {
        let take = base + usize::from(i < extra);
        share.tuples.extend(tuples.by_ref().take(take));
    }
}
