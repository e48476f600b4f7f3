//! Imputation, competitive selection and robust final fits in one call.

use crate::data::Dataset;
use crate::ensemble::{run_selection, FscreConfig, SelectionResult};
use crate::error::{FscreError, Result};
use crate::foundation::{correlation_structure, ddc_impute, CorrelationStructure, DdcConfig, ImputationResult};
use crate::metrics::timed;
use crate::robustfit::{fit_ensemble, EnsembleModel};

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub ddc: DdcConfig,
    pub fscre: FscreConfig,
    /// Disables cellwise imputation when false (ablation).
    pub impute: bool,
}

impl PipelineConfig {
    pub fn new(fscre: FscreConfig) -> Self {
        Self {
            ddc: DdcConfig::default(),
            fscre,
            impute: true,
        }
    }
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self::new(FscreConfig::default())
    }
}

#[derive(Debug, Clone)]
pub struct FitOutput {
    pub imputation: ImputationResult,
    pub structure: CorrelationStructure,
    pub selection: SelectionResult,
    pub model: EnsembleModel,
    /// Wall-clock seconds for imputation, selection and final fits.
    pub cpu_seconds: f64,
}

/// Imputes `[y, X]` (or passes it through).
pub fn impute(data: &Dataset, cfg: &PipelineConfig) -> Result<ImputationResult> {
    let z = data.joint();
    let out = if cfg.impute {
        ddc_impute(&z, &cfg.ddc)
    } else {
        ImputationResult::passthrough(&z)
    };
    out.map_err(|e| match e {
        FscreError::DegenerateColumn { index, .. } => FscreError::DegenerateColumn {
            index,
            name: data.joint_names()[index].clone(),
        },
        e => e,
    })
}

pub fn fit(data: &Dataset, cfg: &PipelineConfig) -> Result<FitOutput> {
    let (out, secs) = timed(|| -> Result<_> {
        let imputation = impute(data, cfg)?;
        let structure = correlation_structure(&imputation)?;
        let selection = run_selection(&structure, &imputation, &cfg.fscre)?;
        let mut model = fit_ensemble(&imputation, &selection.sets, cfg.fscre.intercept)?;
        model.names = data.names.clone();
        Ok((imputation, structure, selection, model))
    });
    let (imputation, structure, selection, model) = out?;
    Ok(FitOutput {
        imputation,
        structure,
        selection,
        model,
        cpu_seconds: secs,
    })
}

/// Selected index sets only (no final fits).
pub fn select(data: &Dataset, cfg: &PipelineConfig) -> Result<SelectionResult> {
    let imputation = impute(data, cfg)?;
    let structure = correlation_structure(&imputation)?;
    run_selection(&structure, &imputation, &cfg.fscre)
}
