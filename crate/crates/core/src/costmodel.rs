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

//! Analytic three-phase cost model: redistribution, join and merge.
//!
//! Per-value formulas are expressed over any [`CostScalar`]. A strategy's
//! cost is derived from its [`RoutePlan`], so the model charges exactly the
//! action assignment that the router executes.

use serde::{Deserialize, Serialize};

use crate::cluster::{Action, ClusterSpec, SfrGrid};
use crate::dataset::Key;
use crate::exec::MergeMode;
use crate::scalar::CostScalar;
use crate::stats::{FrequencyMap, SkewClassification};
use crate::strategies::{plan, RoutePlan, Strategy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    R,
    S,
}

fn c<T: CostScalar>(n: u64) -> T {
    T::from_count(n)
}

/// Network volume of hash-redistributing both tables' tuples of one value.
pub fn redist_cost_hash<T: CostScalar>(q_r: u64, q_s: u64, n_nodes: usize) -> T {
    debug_assert!(n_nodes >= 1);
    let q = c::<T>(q_r) + c(q_s);
    q - q / c(n_nodes as u64)
}

/// Keeping `side` local broadcasts the other table's `q_other` tuples.
pub fn redist_cost_local<T: CostScalar>(_side: Side, q_other: u64, n_nodes: usize) -> T {
    debug_assert!(n_nodes >= 1);
    c::<T>(q_other) * c(n_nodes as u64 - 1)
}

/// Scattering `side` uniformly and broadcasting the other table.
pub fn redist_cost_random<T: CostScalar>(side: Side, q_r: u64, q_s: u64, n_nodes: usize) -> T {
    debug_assert!(n_nodes >= 1);
    let (scattered, broadcast) = match side {
        Side::R => (q_r, q_s),
        Side::S => (q_s, q_r),
    };
    let n = c::<T>(n_nodes as u64);
    let n1 = c::<T>(n_nodes as u64 - 1);
    c::<T>(scattered) * n1 / n + c::<T>(broadcast) * n1
}

/// Build + probe + materialisation of one value on the node it hashes to.
pub fn join_cost_hash<T: CostScalar>(q_r: u64, q_s: u64) -> T {
    let (r, s) = (c::<T>(q_r), c::<T>(q_s));
    r + s + r * s
}

/// Work on one node when `side` keeps its `q_self_on_node` tuples and the
/// other table's `q_other` tuples arrive by broadcast.
pub fn join_cost_local<T: CostScalar>(_side: Side, q_self_on_node: u64, q_other: u64) -> T {
    let (mine, other) = (c::<T>(q_self_on_node), c::<T>(q_other));
    mine + other + mine * other
}

/// Per-node work when `side` is scattered uniformly; identical on every node.
pub fn join_cost_random<T: CostScalar>(side: Side, q_r: u64, q_s: u64, n_nodes: usize) -> T {
    debug_assert!(n_nodes >= 1);
    let (scattered, broadcast) = match side {
        Side::R => (q_r, q_s),
        Side::S => (q_s, q_r),
    };
    let share = c::<T>(scattered) / c(n_nodes as u64);
    let b = c::<T>(broadcast);
    share + b + share * b
}

/// Expected network volume of fragment-replicate routing: each R tuple is
/// copied to the `cols` nodes of a uniformly chosen row (one of which is its
/// source with probability `1/rows`), and S symmetrically along a column.
pub fn redist_cost_sfr<T: CostScalar>(q_r: u64, q_s: u64, grid: SfrGrid) -> T {
    let (rows, cols) = (c::<T>(grid.rows as u64), c::<T>(grid.cols as u64));
    c::<T>(q_r) * (cols - T::one() / rows) + c::<T>(q_s) * (rows - T::one() / cols)
}

/// Per-node work of fragment-replicate routing under a perfectly balanced grid.
pub fn join_cost_sfr<T: CostScalar>(q_r: u64, q_s: u64, grid: SfrGrid) -> T {
    let r = c::<T>(q_r) / c(grid.rows as u64);
    let s = c::<T>(q_s) / c(grid.cols as u64);
    r + s + r * s
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown<T> {
    pub re: T,
    pub comp: T,
    pub summ: T,
    pub total: T,
}

impl<T: CostScalar> CostBreakdown<T> {
    pub fn to_f64(&self) -> CostBreakdown<f64> {
        CostBreakdown {
            re: self.re.as_f64(),
            comp: self.comp.as_f64(),
            summ: self.summ.as_f64(),
            total: self.total.as_f64(),
        }
    }
}

/// Relative weights of the three phases in the total. The default sums them
/// unweighted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostWeights {
    pub re: f64,
    pub comp: f64,
    pub summ: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        Self {
            re: 1.0,
            comp: 1.0,
            summ: 1.0,
        }
    }
}

/// Everything the estimator reads.
#[derive(Debug, Clone, Copy)]
pub struct CostInputs<'a> {
    pub cls: &'a SkewClassification,
    pub freq_r: &'a FrequencyMap,
    pub freq_s: &'a FrequencyMap,
    pub spec: &'a ClusterSpec,
    pub merge: MergeMode,
    pub weights: CostWeights,
}

/// Terms contributed by non-skewed values. They are the same for every
/// strategy since those values are always hashed.
#[derive(Debug, Clone, PartialEq)]
pub struct Baseline<T> {
    pub re: T,
    pub comp: Vec<T>,
    pub results: Vec<T>,
}

impl<T: CostScalar> Baseline<T> {
    pub fn zero(n_nodes: usize) -> Self {
        Self {
            re: T::zero(),
            comp: vec![T::zero(); n_nodes],
            results: vec![T::zero(); n_nodes],
        }
    }

    pub fn compute(inputs: &CostInputs<'_>) -> Self {
        let n = inputs.spec.n_nodes;
        let mut base = Self::zero(n);
        for (key, q_r, q_s) in joint_counts(inputs.freq_r, inputs.freq_s) {
            if inputs.cls.class_of(key).is_skewed() {
                continue;
            }
            let node = inputs.spec.hash_node(key);
            base.re = base.re + redist_cost_hash::<T>(q_r, q_s, n);
            base.comp[node] = base.comp[node] + join_cost_hash::<T>(q_r, q_s);
            base.results[node] = base.results[node] + c::<T>(q_r) * c(q_s);
        }
        base
    }
}

/// `(key, Q(R,x), Q(S,x))` over the union of both tables' keys, ascending.
fn joint_counts<'a>(r: &'a FrequencyMap, s: &'a FrequencyMap) -> impl Iterator<Item = (Key, u64, u64)> + 'a {
    let mut ri = r.counts.iter().peekable();
    let mut si = s.counts.iter().peekable();
    std::iter::from_fn(move || match (ri.peek(), si.peek()) {
        (None, None) => None,
        (Some(&(&k, &q)), None) => {
            ri.next();
            Some((k, q, 0))
        }
        (None, Some(&(&k, &q))) => {
            si.next();
            Some((k, 0, q))
        }
        (Some(&(&kr, &qr)), Some(&(&ks, &qs))) => {
            if kr < ks {
                ri.next();
                Some((kr, qr, 0))
            } else if ks < kr {
                si.next();
                Some((ks, 0, qs))
            } else {
                ri.next();
                si.next();
                Some((kr, qr, qs))
            }
        }
    })
}

/// Cost of executing `plan` on top of a precomputed baseline.
pub fn estimate_plan<T: CostScalar>(plan: &RoutePlan, inputs: &CostInputs<'_>, baseline: &Baseline<T>) -> CostBreakdown<T> {
    let n = inputs.spec.n_nodes;
    let nt = c::<T>(n as u64);
    let mut re = baseline.re;
    let mut comp = baseline.comp.clone();
    let mut results = baseline.results.clone();
    comp.resize(n, T::zero());
    results.resize(n, T::zero());

    for v in inputs.cls.values() {
        let (key, q_r, q_s) = (v.key, v.q_r, v.q_s);
        let product = c::<T>(q_r) * c(q_s);
        match plan.actions(v.class) {
            (Action::Hash, Action::Hash) => {
                let node = inputs.spec.hash_node(key);
                re = re + redist_cost_hash::<T>(q_r, q_s, n);
                comp[node] = comp[node] + join_cost_hash::<T>(q_r, q_s);
                results[node] = results[node] + product;
            }
            (Action::Local, Action::Broadcast) => {
                re = re + redist_cost_local::<T>(Side::R, q_s, n);
                for i in 0..n {
                    let mine = v.r_on(i);
                    comp[i] = comp[i] + join_cost_local::<T>(Side::R, mine, q_s);
                    results[i] = results[i] + c::<T>(mine) * c(q_s);
                }
            }
            (Action::Broadcast, Action::Local) => {
                re = re + redist_cost_local::<T>(Side::S, q_r, n);
                for i in 0..n {
                    let mine = v.s_on(i);
                    comp[i] = comp[i] + join_cost_local::<T>(Side::S, mine, q_r);
                    results[i] = results[i] + c::<T>(mine) * c(q_r);
                }
            }
            (Action::RandomRr, Action::Broadcast) | (Action::Broadcast, Action::RandomRr) => {
                let side = if plan.actions(v.class).0 == Action::RandomRr { Side::R } else { Side::S };
                re = re + redist_cost_random::<T>(side, q_r, q_s, n);
                let per_node = join_cost_random::<T>(side, q_r, q_s, n);
                let share = product / nt;
                for i in 0..n {
                    comp[i] = comp[i] + per_node;
                    results[i] = results[i] + share;
                }
            }
            (Action::SfrRow, Action::SfrCol) => {
                let grid = plan.sfr_grid.unwrap_or_else(|| SfrGrid::for_nodes(n));
                re = re + redist_cost_sfr::<T>(q_r, q_s, grid);
                let per_node = join_cost_sfr::<T>(q_r, q_s, grid);
                let share = product / nt;
                for i in 0..n {
                    comp[i] = comp[i] + per_node;
                    results[i] = results[i] + share;
                }
            }
            other => unreachable!("plan validation admits no {other:?}"),
        }
    }

    let comp = comp.into_iter().fold(T::zero(), T::max_of);
    let summ = match inputs.merge {
        MergeMode::Gather => results
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != inputs.spec.gateway)
            .fold(T::zero(), |acc, (_, &v)| acc + v),
        MergeMode::LocalAggregate => T::zero(),
    };
    let w = inputs.weights;
    let weight = |v: f64| T::from_f64(v).expect("phase weight not representable");
    let total = if w == CostWeights::default() {
        re + comp + summ
    } else {
        weight(w.re) * re + weight(w.comp) * comp + weight(w.summ) * summ
    };
    CostBreakdown { re, comp, summ, total }
}

/// Full estimate for one strategy, including the non-skewed baseline.
pub fn estimate<T: CostScalar>(strategy: Strategy, inputs: &CostInputs<'_>) -> CostBreakdown<T> {
    let baseline = Baseline::compute(inputs);
    estimate_plan(&plan(strategy, inputs.cls, inputs.spec.n_nodes), inputs, &baseline)
}

/// Estimate restricted to skewed values. Its `re` is the model's prediction
/// of the cross-node traffic carried by skewed tuples.
pub fn estimate_skewed<T: CostScalar>(strategy: Strategy, inputs: &CostInputs<'_>) -> CostBreakdown<T> {
    let baseline = Baseline::zero(inputs.spec.n_nodes);
    estimate_plan(&plan(strategy, inputs.cls, inputs.spec.n_nodes), inputs, &baseline)
}
