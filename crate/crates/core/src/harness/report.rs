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

//! Run reports, serialised as JSON.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::cluster::RandomMode;
use crate::costmodel::CostBreakdown;
use crate::dataset::Key;
use crate::dispatcher::Decision;
use crate::exec::MergeMode;
use crate::stats::{KeyClass, SkewClassification};
use crate::strategies::{Strategy, StrategyChoice};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableEcho {
    pub rows: u64,
    pub payload_width: usize,
    pub source: String,
}

/// The configuration as it was actually run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfigEcho {
    pub strategy: StrategyChoice,
    pub executed: Strategy,
    pub nodes: usize,
    pub gateway: usize,
    pub threshold: f64,
    pub merge: MergeMode,
    pub placement: String,
    pub hash_offset: i64,
    pub random_mode: RandomMode,
    pub repeats: usize,
    pub swapped_roles: bool,
    pub r: TableEcho,
    pub s: TableEcho,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunMetrics {
    pub result_count: u64,
    pub cross_node_tuples: u64,
    pub cross_node_bytes: u64,
    pub skewed_cross_node_tuples: u64,
    pub merge_traffic: u64,
    pub per_node_received: Vec<u64>,
    pub per_node_processed: Vec<u64>,
    pub max_node_load: u64,
    pub wall_ms: f64,
    pub throughput_tuples_per_s: f64,
}

/// Sizes of each skew class, with the first few members for inspection.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkewSummary {
    pub rho_r: usize,
    pub rho_s: usize,
    pub classes: BTreeMap<KeyClass, usize>,
    pub sample: Vec<(Key, KeyClass)>,
}

const SAMPLE: usize = 16;

impl SkewSummary {
    pub fn of(cls: &SkewClassification) -> Self {
        let classes = KeyClass::ALL
            .iter()
            .filter_map(|&c| cls.members(c).map(|m| (c, m.len())))
            .collect();
        Self {
            rho_r: cls.rho_r.len(),
            rho_s: cls.rho_s.len(),
            classes,
            sample: cls.skewed().take(SAMPLE).collect(),
        }
    }
}

/// Means over repeated random placements.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RepeatSummary {
    pub runs: usize,
    pub mean_max_node_load: f64,
    pub mean_cross_node_tuples: f64,
    pub mean_wall_ms: f64,
    pub mean_throughput_tuples_per_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub config: ConfigEcho,
    pub metrics: RunMetrics,
    pub skew: SkewSummary,
    pub cost_model: BTreeMap<Strategy, CostBreakdown<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decision: Option<Decision<f64>>,
    pub verified: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub repeat_summary: Option<RepeatSummary>,
}

impl RunReport {
    pub fn to_json(&self) -> crate::error::Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
