//! Runs the tracker over scenario suites and sweeps one parameter.

use serde::{Deserialize, Serialize};

use crate::error::{MetricsError, TrackError};
use crate::exec::Execution;
use crate::metrics::{accumulate, combine, identity_switches, HotaAccumulator, MetricBundle, Pooling, SequenceGT};
use crate::simulator::{generate, Generated, ScenarioSpec};
use crate::tracker::{run_sequence, TrackerParams};

/// IoU threshold of the identity-switch counter.
pub const SWITCH_IOU: f64 = 0.5;

#[derive(Debug, thiserror::Error)]
pub enum SweepError {
    #[error(transparent)]
    Track(#[from] TrackError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("unknown sweep parameter {0:?}")]
    UnknownParam(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    Alpha,
    Sigma,
    Lambda,
    Gate,
}

impl SweepParam {
    pub fn parse(name: &str) -> Result<Self, SweepError> {
        match name {
            "alpha" => Ok(Self::Alpha),
            "sigma" => Ok(Self::Sigma),
            "lambda" => Ok(Self::Lambda),
            "gate" => Ok(Self::Gate),
            other => Err(SweepError::UnknownParam(other.to_string())),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Alpha => "alpha",
            Self::Sigma => "sigma",
            Self::Lambda => "lambda",
            Self::Gate => "gate",
        }
    }

    pub fn apply(self, params: &mut TrackerParams, value: f64) {
        match self {
            Self::Alpha => params.sim.alpha = value,
            Self::Sigma => params.sim.sigma = value,
            Self::Lambda => params.assoc.lambda = value,
            Self::Gate => params.assoc.gate = value,
        }
    }
}

/// Per-scenario result of one tracker configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioOutcome {
    pub name: String,
    pub accumulator: HotaAccumulator,
    pub id_switches: usize,
    pub prediction: SequenceGT,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub scenarios: Vec<ScenarioOutcome>,
    pub metrics: MetricBundle,
    pub id_switches: usize,
}

/// Generated scenarios kept alongside their specs so sweeps render them once.
pub struct PreparedSuite {
    pub specs: Vec<ScenarioSpec>,
    pub data: Vec<Generated>,
}

impl PreparedSuite {
    pub fn new(specs: Vec<ScenarioSpec>, exec: Execution) -> Self {
        let data = exec.map(&specs, generate);
        Self { specs, data }
    }

    pub fn run(&self, params: &TrackerParams, exec: Execution) -> Result<SuiteReport, SweepError> {
        let idx: Vec<usize> = (0..self.specs.len()).collect();
        let scenarios = exec.try_map(&idx, |&i| -> Result<ScenarioOutcome, SweepError> {
            let g = &self.data[i];
            let results = run_sequence(&g.detections, &g.depths, params)?;
            let prediction = SequenceGT::from_results(&results, g.gt.num_frames);
            Ok(ScenarioOutcome {
                name: self.specs[i].name.clone(),
                accumulator: accumulate(&g.gt, &prediction)?,
                id_switches: identity_switches(&g.gt, &prediction, SWITCH_IOU),
                prediction,
            })
        })?;
        let metrics = combine(scenarios.iter().map(|s| s.accumulator.clone()).collect(), Pooling::Pooled)?;
        let id_switches = scenarios.iter().map(|s| s.id_switches).sum();
        Ok(SuiteReport {
            scenarios,
            metrics,
            id_switches,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub param: SweepParam,
    pub value: f64,
    pub metrics: MetricBundle,
    pub id_switches: usize,
}

pub fn sweep(
    suite: &PreparedSuite,
    param: SweepParam,
    values: &[f64],
    base: &TrackerParams,
    exec: Execution,
) -> Result<Vec<SweepRow>, SweepError> {
    values
        .iter()
        .map(|&value| {
            let mut params = *base;
            param.apply(&mut params, value);
            let report = suite.run(&params, exec)?;
            Ok(SweepRow {
                param,
                value,
                metrics: report.metrics,
                id_switches: report.id_switches,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::scenario_suite;

    #[test]
    fn one_row_per_value_and_deterministic() {
        let specs = scenario_suite("crossing").unwrap().into_iter().take(8).collect();
        let suite = PreparedSuite::new(specs, Execution::Sequential);
        let values = [0.0, 0.5, 0.9, 1.0];
        let rows = sweep(&suite, SweepParam::Alpha, &values, &TrackerParams::default(), Execution::Parallel).unwrap();
        assert_eq!(rows.len(), 4);
        assert_eq!(rows.iter().map(|r| r.value).collect::<Vec<_>>(), values);
        let again = sweep(&suite, SweepParam::Alpha, &values, &TrackerParams::default(), Execution::Sequential).unwrap();
        assert_eq!(rows, again);
    }

    #[test]
    fn param_names_round_trip() {
        for p in [SweepParam::Alpha, SweepParam::Sigma, SweepParam::Lambda, SweepParam::Gate] {
            assert_eq!(SweepParam::parse(p.name()).unwrap(), p);
        }
        assert!(SweepParam::parse("beta").is_err());
    }
}
