//! Error metrics (MAE, RMSE, MAPE) and the evaluation harness.

use thiserror::Error;

use crate::dataset::CapacitySeries;
use crate::prognosis::{CapacityPredictor, PrognosisError};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("input lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("empty input")]
    EmptyInput,
    #[error("ground truth contains zero at index {0}; MAPE is undefined")]
    ZeroGroundTruth(usize),
    #[error("evaluation window is empty: sp {sp} leaves no cycles to score (series has {len})")]
    NothingToScore { sp: u32, len: usize },
    #[error(transparent)]
    Predictor(#[from] PrognosisError),
}

fn check_pair(y: &[f64], y_hat: &[f64]) -> Result<(), MetricsError> {
    if y.len() != y_hat.len() {
        return Err(MetricsError::LengthMismatch(y.len(), y_hat.len()));
    }
    if y.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    Ok(())
}

/// Mean absolute error.
pub fn mae(y: &[f64], y_hat: &[f64]) -> Result<f64, MetricsError> {
    check_pair(y, y_hat)?;
    let sum: f64 = y.iter().zip(y_hat).map(|(a, b)| (a - b).abs()).sum();
    Ok(sum / y.len() as f64)
}

/// Root mean square error.
pub fn rmse(y: &[f64], y_hat: &[f64]) -> Result<f64, MetricsError> {
    check_pair(y, y_hat)?;
    let sum: f64 = y.iter().zip(y_hat).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((sum / y.len() as f64).sqrt())
}

/// Mean absolute percentage error, in percent.
///
/// Every ground-truth value must be nonzero.
pub fn mape(y: &[f64], y_hat: &[f64]) -> Result<f64, MetricsError> {
    check_pair(y, y_hat)?;
    let mut sum = 0.0;
    for (i, (a, b)) in y.iter().zip(y_hat).enumerate() {
        if *a == 0.0 {
            return Err(MetricsError::ZeroGroundTruth(i));
        }
        sum += ((a - b) / a).abs();
    }
    Ok(sum / y.len() as f64 * 100.0)
}

/// Which prediction task a report row scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalTask {
    /// One-step-ahead capacity prediction from true observed windows.
    OneCycle,
    /// Capacity error at the end-of-life cycle.
    EolCycle,
}

impl EvalTask {
    pub fn as_str(&self) -> &'static str {
        match self {
            EvalTask::OneCycle => "one_cycle",
            EvalTask::EolCycle => "eol_cycle",
        }
    }
}

/// Per-battery error row.
#[derive(Debug, Clone)]
pub struct EvalRow {
    pub battery_id: String,
    pub mae: f64,
    pub rmse: f64,
    pub mape_percent: f64,
}

/// Evaluation report over one or more batteries.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub task: EvalTask,
    pub per_battery: Vec<EvalRow>,
    pub average_mape: f64,
}

impl EvalReport {
    pub fn from_rows(task: EvalTask, per_battery: Vec<EvalRow>) -> Self {
        let average_mape = if per_battery.is_empty() {
            0.0
        } else {
            per_battery.iter().map(|r| r.mape_percent).sum::<f64>() / per_battery.len() as f64
        };
        EvalReport { task, per_battery, average_mape }
    }
}

/// Teacher-forced 1-cycle evaluation: for every test cycle after `sp`, predict
/// the next capacity from the true observed prefix and score against ground
/// truth.
pub fn evaluate_one_cycle(
    predictor: &mut dyn CapacityPredictor,
    test: &CapacitySeries,
    sp: u32,
) -> Result<EvalRow, MetricsError> {
    evaluate_horizon(predictor, test, sp, 1)
}

/// Multi-step evaluation at a fixed horizon: from each true prefix ending at
/// cycle `k0 >= sp`, roll the predictor forward `horizon` cycles on its own
/// outputs and score the final prediction.
pub fn evaluate_horizon(
    predictor: &mut dyn CapacityPredictor,
    test: &CapacitySeries,
    sp: u32,
    horizon: u32,
) -> Result<EvalRow, MetricsError> {
    let caps = test.capacities();
    let last = caps.len() as u32;
    if sp + horizon > last {
        return Err(MetricsError::NothingToScore { sp, len: caps.len() });
    }
    let mut truth = Vec::new();
    let mut preds = Vec::new();
    for k0 in sp..=(last - horizon) {
        let mut working: Vec<f64> = caps[..k0 as usize].to_vec();
        let mut y_hat = f64::NAN;
        for step in 1..=horizon {
            y_hat = predictor.predict_next(&working, k0 + step)?;
            working.push(y_hat);
        }
        preds.push(y_hat);
        truth.push(caps[(k0 + horizon - 1) as usize]);
    }
    Ok(EvalRow {
        battery_id: test.battery_id().to_string(),
        mae: mae(&truth, &preds)?,
        rmse: rmse(&truth, &preds)?,
        mape_percent: mape(&truth, &preds)?,
    })
}
