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

//! Experiment driver: runs, sweeps, the reference join and reports.

pub mod experiment;
pub mod oracle;
pub mod report;
pub mod sweep;

pub use experiment::{
    cost_only, execute, place_tables, run_experiment, run_on, validate, verify_all, ExecOptions, Execution,
    ExperimentConfig, Prepared, TableSource, VerifyOutcome,
};
pub use oracle::{oracle_digest, oracle_join};
pub use report::{RunReport, SkewSummary};
pub use sweep::{sweep, Axes, Scale, SweepConfig, SweepResult, SweepRow};
