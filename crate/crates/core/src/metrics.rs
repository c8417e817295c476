//! Regression metrics: RMSE, MAE and the coefficient of determination.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check_pair(y: &[f64], yhat: &[f64]) -> Result<()> {
    if y.len() != yhat.len() {
        return Err(Error::Shape(format!(
            "{} targets but {} predictions",
            y.len(),
            yhat.len()
        )));
    }
    if y.is_empty() {
        return Err(Error::Argument("metric over an empty sample".into()));
    }
    Ok(())
}

fn sum_squared_residuals(y: &[f64], yhat: &[f64]) -> f64 {
    y.iter().zip(yhat).map(|(a, b)| (b - a) * (b - a)).sum()
}

pub fn rmse(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check_pair(y, yhat)?;
    Ok((sum_squared_residuals(y, yhat) / y.len() as f64).sqrt())
}

pub fn mae(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check_pair(y, yhat)?;
    Ok(y.iter().zip(yhat).map(|(a, b)| (b - a).abs()).sum::<f64>() / y.len() as f64)
}

/// `1 - SS_res / SS_tot`; negative when worse than predicting the mean.
/// Zero-variance targets are an error.
pub fn r2(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check_pair(y, yhat)?;
    if y.len() < 2 {
        return Err(Error::UndefinedMetric("R² needs at least 2 samples".into()));
    }
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - mean) * (v - mean)).sum();
    if ss_tot == 0.0 {
        return Err(Error::UndefinedMetric("R² of a constant target".into()));
    }
    Ok(1.0 - sum_squared_residuals(y, yhat) / ss_tot)
}

/// Where a report came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub dataset: String,
    pub cluster: usize,
    pub split: String,
    pub frozen: Option<usize>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rmse: f64,
    pub mae: f64,
    pub r2: f64,
    pub n: usize,
    pub provenance: Provenance,
}

impl EvalReport {
    pub fn compute(y: &[f64], yhat: &[f64], provenance: Provenance) -> Result<Self> {
        Ok(Self {
            rmse: rmse(y, yhat)?,
            mae: mae(y, yhat)?,
            r2: r2(y, yhat)?,
            n: y.len(),
            provenance,
        })
    }
}
