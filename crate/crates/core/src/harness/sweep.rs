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

//! Parameter sweeps over experiment configurations.
//!
//! A sweep file is TOML with a `[base]` table holding an
//! [`ExperimentConfig`] and an optional `[axes]` table. Every combination of
//! the listed axis values is one grid point; each point is run once per entry
//! of `strategies`.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::experiment::{run_experiment, validate, ExperimentConfig, TableSource};
use crate::harness::report::RunReport;
use crate::strategies::{Strategy, StrategyChoice};

/// Row counts of generated tables, relative to the defaults.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    #[default]
    Desk,
    /// Ten times desk scale.
    Full,
}

impl Scale {
    pub fn factor(self) -> u64 {
        match self {
            Scale::Desk => 1,
            Scale::Full => 10,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Axes {
    /// `|R| / |S|`; the probe table is resized, the build table is kept.
    pub ratio: Vec<f64>,
    /// Zipf exponent applied to every Zipf table.
    pub z: Vec<f64>,
    pub nodes: Vec<usize>,
    /// Fraction of the probe table taken by its skewed key.
    pub probe_skew: Vec<f64>,
    pub gateway: Vec<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub base: ExperimentConfig,
    pub axes: Axes,
    /// Strategies run at every grid point; empty means the base strategy.
    pub strategies: Vec<StrategyChoice>,
    pub scale: Scale,
}

impl SweepConfig {
    /// Parses TOML; errors carry the line and column of the offending entry.
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Grid points in row-major order over ratio, z, nodes, probe_skew and gateway.
    pub fn points(&self) -> Vec<GridPoint> {
        fn axis<T: Copy>(v: &[T]) -> Vec<Option<T>> {
            if v.is_empty() {
                vec![None]
            } else {
                v.iter().copied().map(Some).collect()
            }
        }
        let strategies = if self.strategies.is_empty() {
            vec![self.base.strategy]
        } else {
            self.strategies.clone()
        };
        let mut out = Vec::new();
        for ratio in axis(&self.axes.ratio) {
            for z in axis(&self.axes.z) {
                for nodes in axis(&self.axes.nodes) {
                    for probe_skew in axis(&self.axes.probe_skew) {
                        for gateway in axis(&self.axes.gateway) {
                            for &strategy in &strategies {
                                out.push(GridPoint {
                                    index: out.len(),
                                    ratio,
                                    z,
                                    nodes,
                                    probe_skew,
                                    gateway,
                                    strategy,
                                });
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// The experiment configuration of one grid point.
    #[allow(clippy::neg_cmp_op_on_partial_ord)] // rejects NaN ratios too
    pub fn config_for(&self, point: &GridPoint) -> Result<ExperimentConfig> {
        let mut cfg = self.base.clone();
        let factor = self.scale.factor();
        cfg.r = cfg.r.scaled(factor);
        cfg.s = cfg.s.scaled(factor);
        cfg.strategy = point.strategy;
        if let Some(z) = point.z {
            let mut any = false;
            for t in [&mut cfg.r, &mut cfg.s] {
                if let TableSource::Zipf(spec) = t {
                    spec.z = z;
                    any = true;
                }
            }
            if !any {
                return Err(Error::Config("the z axis needs a zipf table".into()));
            }
        }
        if let Some(frac) = point.probe_skew {
            match &mut cfg.r {
                TableSource::SingleSkew(spec) => spec.skew_fraction = frac,
                _ => return Err(Error::Config("the probe_skew axis needs a single_skew probe table".into())),
            }
        }
        if let Some(ratio) = point.ratio {
            if !(ratio > 0.0) {
                return Err(Error::Config(format!("ratio must be positive, got {ratio}")));
            }
            let s_rows = match &cfg.s {
                TableSource::Zipf(spec) => spec.rows,
                TableSource::SingleSkew(spec) => spec.rows,
                TableSource::File { .. } => {
                    return Err(Error::Config("the ratio axis needs a generated build table".into()))
                }
            };
            let r_rows = (s_rows as f64 * ratio).round() as u64;
            match &mut cfg.r {
                TableSource::Zipf(spec) => spec.rows = r_rows,
                TableSource::SingleSkew(spec) => spec.rows = r_rows,
                TableSource::File { .. } => {
                    return Err(Error::Config("the ratio axis needs a generated probe table".into()))
                }
            }
        }
        if let Some(n) = point.nodes {
            cfg.nodes = n;
        }
        if let Some(g) = point.gateway {
            cfg.gateway = g;
        }
        validate(&cfg)?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridPoint {
    pub index: usize,
    pub ratio: Option<f64>,
    pub z: Option<f64>,
    pub nodes: Option<usize>,
    pub probe_skew: Option<f64>,
    pub gateway: Option<usize>,
    pub strategy: StrategyChoice,
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub point: usize,
    pub ratio: Option<f64>,
    pub z: Option<f64>,
    pub nodes: usize,
    pub probe_skew: Option<f64>,
    pub gateway: usize,
    pub strategy: StrategyChoice,
    pub executed: Strategy,
    pub r_rows: u64,
    pub s_rows: u64,
    pub result_count: u64,
    pub cross_node_tuples: u64,
    pub cross_node_bytes: u64,
    pub merge_traffic: u64,
    pub max_node_load: u64,
    pub wall_ms: f64,
    pub throughput_tuples_per_s: f64,
    pub model_grahj: f64,
    pub model_prpd: f64,
    pub model_pnr: f64,
    pub verified: Option<bool>,
}

impl SweepRow {
    fn new(point: &GridPoint, report: &RunReport) -> Self {
        let total = |s: Strategy| report.cost_model.get(&s).map_or(f64::NAN, |c| c.total);
        Self {
            point: point.index,
            ratio: point.ratio,
            z: point.z,
            nodes: report.config.nodes,
            probe_skew: point.probe_skew,
            gateway: report.config.gateway,
            strategy: point.strategy,
            executed: report.config.executed,
            r_rows: report.config.r.rows,
            s_rows: report.config.s.rows,
            result_count: report.metrics.result_count,
            cross_node_tuples: report.metrics.cross_node_tuples,
            cross_node_bytes: report.metrics.cross_node_bytes,
            merge_traffic: report.metrics.merge_traffic,
            max_node_load: report.metrics.max_node_load,
            wall_ms: report.metrics.wall_ms,
            throughput_tuples_per_s: report.metrics.throughput_tuples_per_s,
            model_grahj: total(Strategy::GraHJ),
            model_prpd: total(Strategy::Prpd),
            model_pnr: total(Strategy::PnR),
            verified: report.verified,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepEntry {
    pub point: GridPoint,
    pub report: RunReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub entries: Vec<SweepEntry>,
}

impl SweepResult {
    pub fn rows(&self) -> Vec<SweepRow> {
        self.entries.iter().map(|e| SweepRow::new(&e.point, &e.report)).collect()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for row in self.rows() {
            out.serialize(row)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// False when any verified point disagreed with the oracle.
    pub fn all_verified(&self) -> bool {
        self.entries.iter().all(|e| e.report.verified != Some(false))
    }
}

/// Runs every grid point. Points run in parallel; rows keep grid order.
pub fn sweep(config: &SweepConfig) -> Result<SweepResult> {
    let points = config.points();
    let configs = points
        .iter()
        .map(|p| {
            let mut cfg = config.config_for(p)?;
            // parallelism comes from the grid
            cfg.workers = 1;
            Ok(cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    let reports = configs
        .par_iter()
        .map(run_experiment)
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult {
        entries: points
            .into_iter()
            .zip(reports)
            .map(|(point, report)| SweepEntry { point, report })
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::ZipfSpec;

    fn tiny() -> SweepConfig {
        let mut cfg = SweepConfig::default();
        cfg.base.r = TableSource::Zipf(ZipfSpec { n_distinct: 50, z: 1.0, rows: 600, seed: 3, payload_width: 0 });
        cfg.base.s = TableSource::Zipf(ZipfSpec { n_distinct: 50, z: 1.0, rows: 100, seed: 4, payload_width: 0 });
        cfg.base.nodes = 3;
        cfg.base.repeats = 1;
        cfg.base.timing = false;
        cfg
    }

    #[test]
    fn empty_axes_give_one_row() {
        let res = sweep(&tiny()).unwrap();
        assert_eq!(res.entries.len(), 1);
    }

    #[test]
    fn grid_is_row_major() {
        let mut cfg = tiny();
        cfg.axes.nodes = vec![2, 3];
        cfg.axes.z = vec![0.5, 1.5];
        let pts = cfg.points();
        let got: Vec<_> = pts.iter().map(|p| (p.z.unwrap(), p.nodes.unwrap())).collect();
        assert_eq!(got, vec![(0.5, 2), (0.5, 3), (1.5, 2), (1.5, 3)]);
    }

    #[test]
    fn ratio_resizes_probe_table() {
        let mut cfg = tiny();
        cfg.axes.ratio = vec![4.0];
        let c = cfg.config_for(&cfg.points()[0]).unwrap();
        match c.r {
            TableSource::Zipf(z) => assert_eq!(z.rows, 400),
            _ => unreachable!(),
        }
    }

    #[test]
    fn malformed_toml_reports_line() {
        let err = SweepConfig::from_toml("[axes]\nnodes = [2, 3]\nbogus = 1\n").unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
    }

    #[test]
    fn probe_skew_axis_needs_single_skew_table() {
        let mut cfg = tiny();
        cfg.axes.probe_skew = vec![0.02];
        assert!(cfg.config_for(&cfg.points()[0]).is_err());
    }

    #[test]
    fn csv_has_one_line_per_point() {
        let mut cfg = tiny();
        cfg.axes.nodes = vec![1, 2, 4];
        let res = sweep(&cfg).unwrap();
        let mut buf = Vec::new();
        res.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert!(text.starts_with("point,"));
    }
}
