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

//! Cost-based choice among the join sub-operators.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::costmodel::{estimate_plan, Baseline, CostBreakdown, CostInputs};
use crate::scalar::CostScalar;
use crate::strategies::{plan, Strategy};

/// Candidates in tie-breaking order: earlier wins a tie.
pub const CANDIDATES: [Strategy; 3] = [Strategy::GraHJ, Strategy::Prpd, Strategy::PnR];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Decision<T> {
    pub chosen: Strategy,
    pub costs: BTreeMap<Strategy, CostBreakdown<T>>,
    #[serde(serialize_with = "as_micros")]
    pub decision_time: Duration,
}

fn as_micros<S: serde::Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_f64(d.as_secs_f64() * 1e6)
}

/// Cheapest entry by total; ties go to the entry listed first.
// written so that a NaN total never displaces a real one
#[allow(clippy::neg_cmp_op_on_partial_ord)]
pub fn choose<T: CostScalar>(totals: &[(Strategy, T)]) -> Option<Strategy> {
    let mut best: Option<(Strategy, T)> = None;
    for &(s, t) in totals {
        match best {
            Some((_, b)) if !(t < b) => {}
            _ => best = Some((s, t)),
        }
    }
    best.map(|(s, _)| s)
}

/// Estimates GraHJ, PRPD and PnR and picks the cheapest.
pub fn dispatch<T: CostScalar>(inputs: &CostInputs<'_>) -> Decision<T> {
    let start = Instant::now();
    let baseline = Baseline::compute(inputs);
    let costs: BTreeMap<Strategy, CostBreakdown<T>> = CANDIDATES
        .iter()
        .map(|&s| {
            let p = plan(s, inputs.cls, inputs.spec.n_nodes);
            (s, estimate_plan(&p, inputs, &baseline))
        })
        .collect();
    let totals: Vec<(Strategy, T)> = CANDIDATES.iter().map(|s| (*s, costs[s].total)).collect();
    let chosen = choose(&totals).expect("candidate list is non-empty");
    Decision {
        chosen,
        costs,
        decision_time: start.elapsed(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Ratio;

    #[test]
    fn picks_minimum() {
        let totals = [(Strategy::GraHJ, 100.0), (Strategy::Prpd, 80.0), (Strategy::PnR, 90.0)];
        assert_eq!(choose(&totals), Some(Strategy::Prpd));
    }

    #[test]
    fn ties_follow_candidate_order() {
        let totals = [(Strategy::GraHJ, 5.0), (Strategy::Prpd, 5.0), (Strategy::PnR, 5.0)];
        assert_eq!(choose(&totals), Some(Strategy::GraHJ));
        let totals = [(Strategy::GraHJ, 6.0), (Strategy::Prpd, 5.0), (Strategy::PnR, 5.0)];
        assert_eq!(choose(&totals), Some(Strategy::Prpd));
    }

    #[test]
    fn exact_scalars_choose_too() {
        let q = |n, d| Ratio::<i128>::new(n, d);
        let totals = [(Strategy::GraHJ, q(1, 3)), (Strategy::Prpd, q(1, 2)), (Strategy::PnR, q(1, 4))];
        assert_eq!(choose(&totals), Some(Strategy::PnR));
        assert_eq!(choose::<f64>(&[]), None);
    }
}
