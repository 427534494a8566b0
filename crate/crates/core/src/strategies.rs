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

//! Route plans for the join sub-operators.
//!
//! A [`RoutePlan`] assigns one [`Action`] per key class to each table. Every
//! sub-operator is expressed this way, so execution and the cost model read
//! the same assignment.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cluster::{Action, ClusterSpec, NetMetrics, NodeInbox, Router, SfrGrid, Table};
use crate::dataset::NodeShare;
use crate::error::{Error, Result};
use crate::stats::{KeyClass, SkewClassification};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Strategy {
    #[serde(rename = "grahj")]
    GraHJ,
    #[serde(rename = "prpd")]
    Prpd,
    #[serde(rename = "prpd-u")]
    PrpdU,
    #[serde(rename = "prpd-sfr")]
    PrpdSfr,
    #[serde(rename = "pnr")]
    PnR,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::GraHJ,
        Strategy::Prpd,
        Strategy::PrpdU,
        Strategy::PrpdSfr,
        Strategy::PnR,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::GraHJ => "grahj",
            Strategy::Prpd => "prpd",
            Strategy::PrpdU => "prpd-u",
            Strategy::PrpdSfr => "prpd-sfr",
            Strategy::PnR => "pnr",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown strategy '{s}'")))
    }
}

/// A fixed sub-operator, or `auto` for cost-based dispatch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum StrategyChoice {
    Fixed(Strategy),
    Auto,
}

impl fmt::Display for StrategyChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StrategyChoice::Fixed(s) => s.fmt(f),
            StrategyChoice::Auto => f.write_str("auto"),
        }
    }
}

impl FromStr for StrategyChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "auto" {
            Ok(StrategyChoice::Auto)
        } else {
            s.parse().map(StrategyChoice::Fixed)
        }
    }
}

impl TryFrom<String> for StrategyChoice {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<StrategyChoice> for String {
    fn from(c: StrategyChoice) -> String {
        c.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrpdVariant {
    /// Skewed tuples stay where they are.
    Local,
    /// Skewed tuples are scattered round-robin instead of kept local.
    URandom,
    /// Complete-skew values use fragment-replicate on a node grid.
    Sfr,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoutePlan {
    pub r_action: BTreeMap<KeyClass, Action>,
    pub s_action: BTreeMap<KeyClass, Action>,
    pub sfr_grid: Option<SfrGrid>,
}

/// Action pairs that put every matching `(r, s)` pair on exactly one node.
const VALID_PAIRS: [(Action, Action); 6] = [
    (Action::Hash, Action::Hash),
    (Action::Local, Action::Broadcast),
    (Action::RandomRr, Action::Broadcast),
    (Action::Broadcast, Action::Local),
    (Action::Broadcast, Action::RandomRr),
    (Action::SfrRow, Action::SfrCol),
];

impl RoutePlan {
    /// Builds a plan from per-class action pairs. Classes with no members in
    /// `cls` are normalised to hash routing, so two strategies that treat the
    /// populated classes alike produce equal plans.
    fn build(
        cls: &SkewClassification,
        n_nodes: usize,
        actions: impl Fn(KeyClass) -> (Action, Action),
    ) -> Self {
        let mut r_action = BTreeMap::new();
        let mut s_action = BTreeMap::new();
        for class in KeyClass::ALL {
            let (r, s) = if cls.has(class) {
                actions(class)
            } else {
                (Action::Hash, Action::Hash)
            };
            r_action.insert(class, r);
            s_action.insert(class, s);
        }
        let uses_grid = r_action
            .values()
            .chain(s_action.values())
            .any(|a| matches!(a, Action::SfrRow | Action::SfrCol));
        let plan = Self {
            r_action,
            s_action,
            sfr_grid: uses_grid.then(|| SfrGrid::for_nodes(n_nodes)),
        };
        debug_assert!(plan.validate().is_ok());
        plan
    }

    pub fn actions(&self, class: KeyClass) -> (Action, Action) {
        (self.r_action[&class], self.s_action[&class])
    }

    pub fn action(&self, table: Table, class: KeyClass) -> Action {
        match table {
            Table::R => self.r_action[&class],
            Table::S => self.s_action[&class],
        }
    }

    /// Structural check: every class has one action per table, and each
    /// action pair co-locates all matching tuples exactly once.
    pub fn validate(&self) -> Result<()> {
        for class in KeyClass::ALL {
            let (Some(&r), Some(&s)) = (self.r_action.get(&class), self.s_action.get(&class)) else {
                return Err(Error::spec(format!("plan has no action for {class:?}")));
            };
            if !VALID_PAIRS.contains(&(r, s)) {
                return Err(Error::spec(format!(
                    "actions {r:?}/{s:?} for {class:?} do not co-locate matching tuples"
                )));
            }
            if matches!(r, Action::SfrRow) && self.sfr_grid.is_none() {
                return Err(Error::spec("fragment-replicate plan without a grid"));
            }
        }
        Ok(())
    }
}

/// Every tuple is hash-redistributed.
pub fn plan_grahj(cls: &SkewClassification) -> RoutePlan {
    RoutePlan::build(cls, 1, |_| (Action::Hash, Action::Hash))
}

pub fn plan_prpd(cls: &SkewClassification, variant: PrpdVariant, n_nodes: usize) -> RoutePlan {
    use Action::*;
    let keep = match variant {
        PrpdVariant::URandom => RandomRr,
        PrpdVariant::Local | PrpdVariant::Sfr => Local,
    };
    RoutePlan::build(cls, n_nodes, |class| match class {
        KeyClass::NonSkewed => (Hash, Hash),
        KeyClass::PartialR => (keep, Broadcast),
        KeyClass::PartialS => (Broadcast, keep),
        KeyClass::CompleteLeft if variant == PrpdVariant::Sfr => (SfrRow, SfrCol),
        KeyClass::CompleteRight if variant == PrpdVariant::Sfr => (SfrRow, SfrCol),
        // The dominant (larger) side stays put; the other side is duplicated.
        KeyClass::CompleteLeft => (keep, Broadcast),
        KeyClass::CompleteRight => (Broadcast, keep),
    })
}

/// Partition and replication: probe-side skew is kept local (partial) or
/// scattered round-robin (left-dominated), with the matching build tuples
/// broadcast; right-dominated values mirror that. Build-only skew is hashed.
pub fn plan_pnr(cls: &SkewClassification) -> RoutePlan {
    use Action::*;
    RoutePlan::build(cls, 1, |class| match class {
        KeyClass::NonSkewed | KeyClass::PartialS => (Hash, Hash),
        KeyClass::PartialR => (Local, Broadcast),
        KeyClass::CompleteLeft => (RandomRr, Broadcast),
        KeyClass::CompleteRight => (Broadcast, RandomRr),
    })
}

pub fn plan(strategy: Strategy, cls: &SkewClassification, n_nodes: usize) -> RoutePlan {
    match strategy {
        Strategy::GraHJ => plan_grahj(cls),
        Strategy::Prpd => plan_prpd(cls, PrpdVariant::Local, n_nodes),
        Strategy::PrpdU => plan_prpd(cls, PrpdVariant::URandom, n_nodes),
        Strategy::PrpdSfr => plan_prpd(cls, PrpdVariant::Sfr, n_nodes),
        Strategy::PnR => plan_pnr(cls),
    }
}

/// Routes both tables according to `plan`. Sources are visited in node order
/// and tuples in share order, R before S.
pub fn redistribute(
    r_shares: &[NodeShare],
    s_shares: &[NodeShare],
    cls: &SkewClassification,
    plan: &RoutePlan,
    spec: &ClusterSpec,
    tuple_bytes: (u64, u64),
) -> Result<(Vec<NodeInbox>, NetMetrics)> {
    plan.validate()?;
    let mut router = Router::new(*spec, plan.sfr_grid).with_tuple_bytes(tuple_bytes.0, tuple_bytes.1);
    for (table, shares) in [(Table::R, r_shares), (Table::S, s_shares)] {
        for share in shares {
            if share.node >= spec.n_nodes {
                return Err(Error::NodeOutOfRange {
                    node: share.node,
                    n_nodes: spec.n_nodes,
                });
            }
            for t in &share.tuples {
                let class = cls.class_of(t.key);
                router.route(t, table, class, share.node, plan.action(table, class));
            }
        }
    }
    Ok(router.finish())
}
