//! Turning a power/rate decision into a reported [`Allocation`].

use crate::ber;
use crate::distortion;
use crate::error::Result;
use crate::models::{average_channel_uses, Allocation, LinkConfig, SourceModel};

/// Evaluate the exact BER and distortion models at `(powers, rates)`.
///
/// Channels with zero rate carry nothing; they are reported at the BER cap so
/// their (zero-weight) distortions are the worst case.
pub fn build_allocation(config: &LinkConfig, model: &SourceModel, powers: &[f64], rates: &[f64]) -> Result<Allocation> {
    let cap = ber::BER_REPORT_CAP;
    let mut bers = Vec::with_capacity(rates.len());
    let mut logs = Vec::with_capacity(rates.len());
    for k in 0..rates.len() {
        let (b, lb) = if rates[k] > 0.0 {
            ber::reported_ber(&config.scheme, config.snr_at(k, powers[k]), rates[k])?
        } else {
            (cap, cap.log10())
        };
        bers.push(b);
        logs.push(lb);
    }
    let d_obs_log = logs.iter().map(|&lb| distortion::eval_obs_log10(model, lb)).collect();
    let d_sem = logs.iter().map(|&lb| distortion::eval_sem_log10(model, lb)).collect();
    let d_ave = distortion::eval_weighted_objective_log10(model, rates, &logs, config.alpha)?;
    let abr = average_channel_uses(model.rate_rs, rates)? / config.m1_dim;
    Ok(Allocation {
        model: model.clone(),
        powers: powers.to_vec(),
        rates: rates.to_vec(),
        ber: bers,
        log10_ber: logs,
        d_obs_log,
        d_sem,
        d_ave,
        abr,
    })
}
