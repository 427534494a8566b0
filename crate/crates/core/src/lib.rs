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

//! Simulator for skew-aware distributed equi-joins on a shared-nothing cluster.
//!
//! Tables are placed across nodes, redistributed according to a
//! [`RoutePlan`], joined locally and merged. Three sub-operators are
//! provided (graceful hash join, PRPD with its variants, and PnR), together
//! with a three-phase cost model and a dispatcher that picks the cheapest.
//!
//! The cost model is generic over its scalar; see [`Cost`], [`Cost32`] and
//! [`ExactCost`].

pub mod cluster;
pub mod costmodel;
pub mod datagen;
pub mod dataset;
pub mod dispatcher;
pub mod error;
pub mod exec;
pub mod harness;
pub mod scalar;
pub mod stats;
pub mod strategies;

use num_rational::Ratio;

pub use cluster::{Action, ClusterSpec, NetMetrics, NodeInbox, RandomMode, Router, SfrGrid, Table};
pub use costmodel::{estimate, CostBreakdown, CostInputs, CostWeights};
pub use datagen::{gen_single_skew, gen_zipf, place, Placement, PlacementSpec, SingleSkewSpec, ZipfSpec};
pub use dataset::{Dataset, Key, NodeShare, RowId, Tuple};
pub use dispatcher::{dispatch, Decision};
pub use error::{Error, Result};
pub use exec::{Collect, JoinResult, MergeMode, Pair};
pub use harness::{run_experiment, ExperimentConfig, RunReport};
pub use scalar::CostScalar;
pub use stats::{build_frequency, classify, FrequencyMap, KeyClass, SkewClassification, SkewThreshold};
pub use strategies::{plan, redistribute, RoutePlan, Strategy, StrategyChoice};

/// Exact rational scalar for cost arithmetic.
pub type Exact = Ratio<i128>;

pub type Cost = CostBreakdown<f64>;
pub type Cost32 = CostBreakdown<f32>;
pub type ExactCost = CostBreakdown<Exact>;

pub type Decision64 = Decision<f64>;
pub type ExactDecision = Decision<Exact>;
