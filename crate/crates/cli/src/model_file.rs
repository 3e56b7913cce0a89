//! Versioned JSON model document.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use pamir_core::{BasisSpec, FitConfig, FitResult, ModelParams, PredictorState};

use crate::error::CliError;

pub const FORMAT: &str = "pamir-model";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    /// Row-major.
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn from_dmatrix(m: &DMatrix<f64>) -> Self {
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            data: m.transpose().as_slice().to_vec(),
        }
    }

    pub fn to_dmatrix(&self, name: &str) -> Result<DMatrix<f64>, CliError> {
        if self.data.len() != self.rows * self.cols {
            return Err(CliError::Input(format!(
                "model field {name}: {} values for a {}x{} matrix",
                self.data.len(),
                self.rows,
                self.cols
            )));
        }
        Ok(DMatrix::from_row_slice(self.rows, self.cols, &self.data))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub seed: u64,
    pub config: FitConfig,
    pub converged: bool,
    pub iterations_used: usize,
    pub final_change: f64,
    pub final_acceptance: f64,
    pub max_constraint_violation: f64,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub p: usize,
    pub d: usize,
    pub r: usize,
    /// Taxon names in model order; the last is the ALR reference.
    pub taxa: Vec<String>,
    pub mu: Vec<f64>,
    pub gamma: Matrix,
    pub beta: Matrix,
    pub sigma: Matrix,
    pub basis: BasisSpec,
    pub basis_offset: Vec<f64>,
    pub training_responses: Vec<f64>,
    pub fit: FitSummary,
}

impl ModelFile {
    pub fn from_fit(
        taxa: Vec<String>,
        responses: Vec<f64>,
        basis: BasisSpec,
        basis_offset: &DVector<f64>,
        result: &FitResult,
        config: &FitConfig,
    ) -> Self {
        let theta = &result.theta;
        Self {
            format: FORMAT.to_string(),
            version: VERSION,
            p: theta.p(),
            d: theta.d(),
            r: theta.r(),
            taxa,
            mu: theta.mu.as_slice().to_vec(),
            gamma: Matrix::from_dmatrix(&theta.gamma),
            beta: Matrix::from_dmatrix(&theta.beta),
            sigma: Matrix::from_dmatrix(&theta.sigma),
            basis,
            basis_offset: basis_offset.as_slice().to_vec(),
            training_responses: responses,
            fit: FitSummary {
                seed: config.seed,
                config: config.clone(),
                converged: result.converged,
                iterations_used: result.iterations_used,
                final_change: result.final_change(),
                final_acceptance: result.final_acceptance(),
                max_constraint_violation: result.max_constraint_violation(),
                warnings: result.warnings.clone(),
            },
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("model file serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| CliError::Input(format!("model file is not valid JSON: {e}")))?;
        match value.get("version").and_then(|v| v.as_u64()) {
            Some(v) if v == VERSION as u64 => {}
            Some(v) => return Err(CliError::Input(format!("unsupported model version {v} (expected {VERSION})"))),
            None => return Err(CliError::Input("model file has no version field".into())),
        }
        let file: ModelFile =
            serde_json::from_value(value).map_err(|e| CliError::Input(format!("malformed model file: {e}")))?;
        if file.format != FORMAT {
            return Err(CliError::Input(format!("not a model file (format '{}')", file.format)));
        }
        if file.taxa.len() != file.p {
            return Err(CliError::Input(format!("model lists {} taxa but p = {}", file.taxa.len(), file.p)));
        }
        Ok(file)
    }

    pub fn params(&self) -> Result<ModelParams, CliError> {
        let theta = ModelParams::new(
            DVector::from_vec(self.mu.clone()),
            self.gamma.to_dmatrix("gamma")?,
            self.beta.to_dmatrix("beta")?,
            self.sigma.to_dmatrix("sigma")?,
        )?;
        if theta.p() != self.p || theta.d() != self.d || theta.r() != self.r {
            return Err(CliError::Input("model dimensions disagree with stored p, d, r".into()));
        }
        Ok(theta)
    }

    pub fn predictor(&self) -> Result<PredictorState, CliError> {
        Ok(PredictorState::new(
            self.params()?,
            self.training_responses.clone(),
            self.basis.clone(),
            DVector::from_vec(self.basis_offset.clone()),
        )?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_is_row_major() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let s = Matrix::from_dmatrix(&m);
        assert_eq!(s.data, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(s.to_dmatrix("m").unwrap(), m);
        let bad = Matrix { rows: 2, cols: 2, data: vec![1.0] };
        assert!(bad.to_dmatrix("m").is_err());
    }

    #[test]
    fn version_is_mandatory() {
        assert!(ModelFile::from_json("{}").unwrap_err().to_string().contains("version"));
        assert!(ModelFile::from_json("{\"version\": 99}").unwrap_err().to_string().contains("99"));
        assert!(ModelFile::from_json("nope").is_err());
    }
}
