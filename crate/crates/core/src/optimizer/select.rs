//! Outer loop over the model look-up table.

use super::objective::p4_objective;
use super::sca::{sca_solve_with, ReducedMultipliers, ScaOptions, SolveReport, SolveStatus};
use super::single::solve_single_channel;
use super::surrogate::ScaState;
use crate::error::{Error, Result};
use crate::models::{LinkConfig, ModelTable, SourceModel};
use crate::par::Exec;

/// Two objectives closer than this are a tie, broken toward the smaller model.
pub const TIE_TOLERANCE: f64 = 1e-9;

/// What happened to one table entry.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelOutcome {
    pub model_id: String,
    pub rate_rs: f64,
    /// Achieved weighted distortion; `None` when the entry was skipped.
    pub d_ave: Option<f64>,
    /// Why the entry was skipped.
    pub reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionReport {
    pub best: SolveReport,
    /// Index of the selected entry in the table.
    pub index: usize,
    pub outcomes: Vec<ModelOutcome>,
}

/// Solve for one model: the closed form for one channel, the approximation
/// loop otherwise.
pub fn solve_for_model(config: &LinkConfig, model: &SourceModel, opts: &ScaOptions) -> Result<SolveReport> {
    if config.num_channels() == 1 {
        let allocation = solve_single_channel(config, model)?;
        let active = [true];
        let state = ScaState::tight(config, model, &allocation.powers, &allocation.rates, &active);
        let objective = p4_objective(config, model, &allocation.powers, &allocation.rates);
        return Ok(SolveReport {
            allocation,
            iterations: 0,
            objective_trace: vec![objective],
            original_trace: vec![objective],
            kkt_residual: 0.0,
            original_kkt_residual: 0.0,
            status: SolveStatus::Converged,
            state,
            multipliers: ReducedMultipliers::default(),
        });
    }
    sca_solve_with(config, model, opts)
}

/// Solve every entry and keep the one with the lowest weighted distortion.
pub fn select_model(config: &LinkConfig, table: &ModelTable) -> Result<SelectionReport> {
    select_model_with(config, table, Exec::default(), &ScaOptions::default())
}

pub fn select_model_with(
    config: &LinkConfig,
    table: &ModelTable,
    exec: Exec,
    opts: &ScaOptions,
) -> Result<SelectionReport> {
    config.validate()?;
    table.validate()?;
    let entries = table.entries();
    let results = exec.map(entries.len(), |i| solve_for_model(config, &entries[i], opts));

    let mut outcomes = Vec::with_capacity(entries.len());
    let mut best: Option<(usize, SolveReport)> = None;
    for (i, (m, res)) in entries.iter().zip(results).enumerate() {
        match res {
            Ok(rep) => {
                outcomes.push(ModelOutcome {
                    model_id: m.model_id.clone(),
                    rate_rs: m.rate_rs,
                    d_ave: Some(rep.allocation.d_ave),
                    reason: None,
                });
                let better = match &best {
                    None => true,
                    Some((_, b)) => {
                        let (d, db) = (rep.allocation.d_ave, b.allocation.d_ave);
                        d < db - TIE_TOLERANCE || (d <= db + TIE_TOLERANCE && m.rate_rs < b.allocation.model.rate_rs)
                    }
                };
                if better {
                    best = Some((i, rep));
                }
            }
            Err(e) => outcomes.push(ModelOutcome {
                model_id: m.model_id.clone(),
                rate_rs: m.rate_rs,
                d_ave: None,
                reason: Some(e.to_string()),
            }),
        }
    }
    match best {
        Some((index, best)) => Ok(SelectionReport { best, index, outcomes }),
        None => Err(Error::Infeasible(format!(
            "no table entry is feasible: {}",
            outcomes
                .iter()
                .map(|o| format!("{} ({})", o.model_id, o.reason.as_deref().unwrap_or("?")))
                .collect::<Vec<_>>()
                .join("; ")
        ))),
    }
}
