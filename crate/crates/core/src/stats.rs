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

//! Value frequencies and the skew taxonomy of a two-table equi-join.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dataset::{Key, NodeShare};
use crate::error::{Error, Result};

const THRESHOLD_SCALE: u64 = 1_000_000_000;

/// Skew threshold `p` in `(0, 1]`.
///
/// Stored in units of 1e-9 so that `count >= p * size` is decided in integer
/// arithmetic: a decimal threshold like 0.05 compares exactly at the boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "f64", try_from = "f64")]
pub struct SkewThreshold(u64);

impl SkewThreshold {
    pub fn new(p: f64) -> Result<Self> {
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::spec(format!("skew threshold must lie in (0, 1], got {p}")));
        }
        Ok(Self(((p * THRESHOLD_SCALE as f64).round() as u64).max(1)))
    }

    pub fn value(self) -> f64 {
        self.0 as f64 / THRESHOLD_SCALE as f64
    }

    /// `count >= p * size`.
    pub fn is_skewed(self, count: u64, size: u64) -> bool {
        count as u128 * THRESHOLD_SCALE as u128 >= self.0 as u128 * size as u128
    }
}

impl From<SkewThreshold> for f64 {
    fn from(t: SkewThreshold) -> f64 {
        t.value()
    }
}

impl TryFrom<f64> for SkewThreshold {
    type Error = Error;

    fn try_from(p: f64) -> Result<Self> {
        SkewThreshold::new(p)
    }
}

impl fmt::Display for SkewThreshold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value())
    }
}

/// Exact per-value counts of one table, globally and per node.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FrequencyMap {
    pub table_size: u64,
    pub counts: BTreeMap<Key, u64>,
    /// Indexed by node id.
    pub per_node_counts: Vec<BTreeMap<Key, u64>>,
}

impl FrequencyMap {
    pub fn count(&self, key: Key) -> u64 {
        self.counts.get(&key).copied().unwrap_or(0)
    }

    pub fn node_count(&self, node: usize, key: Key) -> u64 {
        self.per_node_counts
            .get(node)
            .and_then(|m| m.get(&key))
            .copied()
            .unwrap_or(0)
    }

    pub fn n_nodes(&self) -> usize {
        self.per_node_counts.len()
    }

    pub fn node_size(&self, node: usize) -> u64 {
        self.per_node_counts
            .get(node)
            .map(|m| m.values().sum())
            .unwrap_or(0)
    }
}

pub fn build_frequency(shares: &[NodeShare]) -> FrequencyMap {
    let n_nodes = shares.iter().map(|s| s.node + 1).max().unwrap_or(0);
    let mut freq = FrequencyMap {
        table_size: 0,
        counts: BTreeMap::new(),
        per_node_counts: vec![BTreeMap::new(); n_nodes],
    };
    for share in shares {
        for t in &share.tuples {
            *freq.counts.entry(t.key).or_default() += 1;
            *freq.per_node_counts[share.node].entry(t.key).or_default() += 1;
        }
        freq.table_size += share.tuples.len() as u64;
    }
    freq
}

/// `Q(., x) / |table|`, zero for absent keys.
pub fn selectivity(freq: &FrequencyMap, key: Key) -> Result<f64> {
    if freq.table_size == 0 {
        return Err(Error::spec("selectivity of an empty table is undefined"));
    }
    Ok(freq.count(key) as f64 / freq.table_size as f64)
}

/// The role a join value plays with respect to skew.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeyClass {
    NonSkewed,
    /// Skewed in the probe table only.
    PartialR,
    /// Skewed in the build table only.
    PartialS,
    /// Skewed in both, probe side strictly larger.
    CompleteLeft,
    /// Skewed in both, build side at least as large.
    CompleteRight,
}

impl KeyClass {
    pub const ALL: [KeyClass; 5] = [
        KeyClass::NonSkewed,
        KeyClass::PartialR,
        KeyClass::PartialS,
        KeyClass::CompleteLeft,
        KeyClass::CompleteRight,
    ];

    pub fn is_skewed(self) -> bool {
        self != KeyClass::NonSkewed
    }
}

/// Statistics of one skewed value, gathered once so that cost estimation
/// scans a flat list instead of looking values up.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkewedValue {
    pub key: Key,
    pub class: KeyClass,
    pub q_r: u64,
    pub q_s: u64,
    /// Count of the value on each node, indexed by node id.
    pub r_per_node: Vec<u64>,
    pub s_per_node: Vec<u64>,
}

impl SkewedValue {
    pub fn r_on(&self, node: usize) -> u64 {
        self.r_per_node.get(node).copied().unwrap_or(0)
    }

    pub fn s_on(&self, node: usize) -> u64 {
        self.s_per_node.get(node).copied().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkewClassification {
    pub threshold: SkewThreshold,
    pub rho_r: BTreeSet<Key>,
    pub rho_s: BTreeSet<Key>,
    pub partial_r: BTreeSet<Key>,
    pub partial_s: BTreeSet<Key>,
    pub complete_left: BTreeSet<Key>,
    pub complete_right: BTreeSet<Key>,
    lookup: HashMap<Key, KeyClass>,
    values: Vec<SkewedValue>,
}

impl SkewClassification {
    pub fn class_of(&self, key: Key) -> KeyClass {
        self.lookup.get(&key).copied().unwrap_or(KeyClass::NonSkewed)
    }

    pub fn members(&self, class: KeyClass) -> Option<&BTreeSet<Key>> {
        match class {
            KeyClass::NonSkewed => None,
            KeyClass::PartialR => Some(&self.partial_r),
            KeyClass::PartialS => Some(&self.partial_s),
            KeyClass::CompleteLeft => Some(&self.complete_left),
            KeyClass::CompleteRight => Some(&self.complete_right),
        }
    }

    /// Whether any value falls in `class`. The non-skewed class always counts as present.
    pub fn has(&self, class: KeyClass) -> bool {
        self.members(class).is_none_or(|m| !m.is_empty())
    }

    /// `rho(R) ∪ rho(S)` in ascending key order.
    pub fn skewed_keys(&self) -> BTreeSet<Key> {
        self.rho_r.union(&self.rho_s).copied().collect()
    }

    pub fn skewed_count(&self) -> usize {
        self.lookup.len()
    }

    /// Per-value statistics of every skewed value, in ascending key order.
    pub fn values(&self) -> &[SkewedValue] {
        &self.values
    }

    /// Skewed values with their class, in ascending key order.
    pub fn skewed(&self) -> impl Iterator<Item = (Key, KeyClass)> + '_ {
        self.rho_r
            .union(&self.rho_s)
            .map(move |&k| (k, self.class_of(k)))
    }
}

/// Splits the skewed values of both tables into the five classes.
///
/// A complete-skew value with equal counts in both tables is right-dominated.
pub fn classify(freq_r: &FrequencyMap, freq_s: &FrequencyMap, p: SkewThreshold) -> SkewClassification {
    let skewed = |freq: &FrequencyMap| -> BTreeSet<Key> {
        freq.counts
            .iter()
            .filter(|&(_, &c)| p.is_skewed(c, freq.table_size))
            .map(|(&k, _)| k)
            .collect()
    };
    let rho_r = skewed(freq_r);
    let rho_s = skewed(freq_s);
    let partial_r: BTreeSet<Key> = rho_r.difference(&rho_s).copied().collect();
    let partial_s: BTreeSet<Key> = rho_s.difference(&rho_r).copied().collect();
    let (complete_left, complete_right): (BTreeSet<Key>, BTreeSet<Key>) = rho_r
        .intersection(&rho_s)
        .partition(|&&x| freq_r.count(x) > freq_s.count(x));

    let mut lookup = HashMap::new();
    for (set, class) in [
        (&partial_r, KeyClass::PartialR),
        (&partial_s, KeyClass::PartialS),
        (&complete_left, KeyClass::CompleteLeft),
        (&complete_right, KeyClass::CompleteRight),
    ] {
        lookup.extend(set.iter().map(|&k| (k, class)));
    }
    let per_node = |freq: &FrequencyMap, key: Key| -> Vec<u64> {
        (0..freq.n_nodes()).map(|i| freq.node_count(i, key)).collect()
    };
    let values = rho_r
        .union(&rho_s)
        .map(|&key| SkewedValue {
            key,
            class: lookup[&key],
            q_r: freq_r.count(key),
            q_s: freq_s.count(key),
            r_per_node: per_node(freq_r, key),
            s_per_node: per_node(freq_s, key),
        })
        .collect();

    SkewClassification {
        threshold: p,
        rho_r,
        rho_s,
        partial_r,
        partial_s,
        complete_left,
        complete_right,
        lookup,
        values,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Tuple;

    fn share(node: usize, keys: &[Key]) -> NodeShare {
        NodeShare {
            node,
            tuples: keys
                .iter()
                .enumerate()
                .map(|(i, &key)| Tuple { key, row: i as u32 })
                .collect(),
        }
    }

    fn freq_of(counts: &[(Key, u64)], size: u64) -> FrequencyMap {
        FrequencyMap {
            table_size: size,
            counts: counts.iter().copied().collect(),
            per_node_counts: vec![counts.iter().copied().collect()],
        }
    }

    fn p(v: f64) -> SkewThreshold {
        SkewThreshold::new(v).unwrap()
    }

    #[test]
    fn single_node_frequencies() {
        let f = build_frequency(&[share(0, &[2, 2, 3])]);
        assert_eq!(f.table_size, 3);
        assert_eq!(f.counts, BTreeMap::from([(2, 2), (3, 1)]));
    }

    #[test]
    fn per_node_frequencies() {
        let f = build_frequency(&[share(0, &[5]), share(1, &[5])]);
        assert_eq!(f.counts, BTreeMap::from([(5, 2)]));
        assert_eq!(f.node_count(0, 5), 1);
        assert_eq!(f.node_count(1, 5), 1);
        assert_eq!(f.node_size(1), 1);
    }

    #[test]
    fn partial_r_membership() {
        let r = freq_of(&[(7, 25)], 100);
        let s = freq_of(&[], 100);
        let c = classify(&r, &s, p(0.2));
        assert!(c.rho_r.contains(&7));
        assert!(c.partial_r.contains(&7));
        assert_eq!(c.class_of(7), KeyClass::PartialR);
    }

    #[test]
    fn build_only_skew_is_partial_s() {
        // probe skew 3%, build skew 50%, threshold 5%
        let r = freq_of(&[(1, 3), (2, 97)], 10_000);
        let s = freq_of(&[(1, 50)], 100);
        let c = classify(&r, &s, p(0.05));
        assert_eq!(c.class_of(1), KeyClass::PartialS);
        assert!(c.partial_r.is_empty() && c.complete_left.is_empty() && c.complete_right.is_empty());
    }

    #[test]
    fn left_dominated_complete_skew() {
        let r = freq_of(&[(4, 60)], 100);
        let s = freq_of(&[(4, 30)], 100);
        assert_eq!(classify(&r, &s, p(0.2)).class_of(4), KeyClass::CompleteLeft);
    }

    #[test]
    fn ties_are_right_dominated() {
        let r = freq_of(&[(4, 30)], 100);
        let s = freq_of(&[(4, 30)], 100);
        assert_eq!(classify(&r, &s, p(0.2)).class_of(4), KeyClass::CompleteRight);
    }

    #[test]
    fn boundary_is_inclusive_and_exact() {
        // 975 = 5% of 19 500 exactly.
        let r = freq_of(&[(1, 975)], 19_500);
        let s = freq_of(&[], 10);
        assert!(classify(&r, &s, p(0.05)).rho_r.contains(&1));
        let r = freq_of(&[(1, 974)], 19_500);
        assert!(classify(&r, &s, p(0.05)).rho_r.is_empty());
    }

    #[test]
    fn selectivity_values() {
        let f = freq_of(&[(1, 25)], 100);
        assert_eq!(selectivity(&f, 1).unwrap(), 0.25);
        assert_eq!(selectivity(&f, 9).unwrap(), 0.0);
        assert!(selectivity(&FrequencyMap::default(), 1).is_err());
    }

    #[test]
    fn threshold_rejects_out_of_range() {
        assert!(SkewThreshold::new(0.0).is_err());
        assert!(SkewThreshold::new(1.5).is_err());
        assert!(SkewThreshold::new(f64::NAN).is_err());
        assert_eq!(SkewThreshold::new(1.0).unwrap().value(), 1.0);
    }
}
