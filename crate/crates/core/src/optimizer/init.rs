//! Feasible starting point for the successive convex approximation.

use super::surrogate::ScaState;
use super::R_MIN;
use crate::error::{Error, Result};
use crate::models::{LinkConfig, SourceModel};
use crate::numerics::capacity;

/// Fraction of capacity the initial rates may use, leaving the capacity
/// constraints strictly slack.
const CAPACITY_FRACTION: f64 = 0.999;

/// Power split maximizing the sum capacity; channels with zero gain get none.
pub fn water_filling(gnr: &[f64], p_max: f64) -> Vec<f64> {
    let fill =
        |level: f64| -> f64 { gnr.iter().map(|&g| if g > 0.0 { (level - 1.0 / g).max(0.0) } else { 0.0 }).sum() };
    if gnr.iter().all(|&g| !(g > 0.0)) {
        return vec![0.0; gnr.len()];
    }
    let mut lo = 0.0;
    let mut hi = p_max + gnr.iter().filter(|&&g| g > 0.0).map(|g| 1.0 / g).fold(0.0, f64::max);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if fill(mid) > p_max {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let mut p: Vec<f64> = gnr.iter().map(|&g| if g > 0.0 { (lo - 1.0 / g).max(0.0) } else { 0.0 }).collect();
    // push the rounding remainder onto the strongest channel
    let rest = p_max - p.iter().sum::<f64>();
    let best = (0..gnr.len()).max_by(|&a, &b| gnr[a].total_cmp(&gnr[b])).unwrap();
    p[best] += rest.max(0.0);
    p
}

/// Rates `clamp(tau, R_MIN, cap_k)` with `tau` chosen so they sum to `target`.
fn shift_rates(caps: &[f64], target: f64) -> Option<Vec<f64>> {
    let total = |tau: f64| caps.iter().map(|&c| tau.clamp(R_MIN, c)).sum::<f64>();
    let hi_cap = caps.iter().copied().fold(0.0, f64::max);
    if total(hi_cap) < target {
        return None;
    }
    let (mut lo, mut hi) = (R_MIN, hi_cap);
    if total(lo) >= target {
        return Some(caps.iter().map(|_| R_MIN).collect());
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if total(mid) >= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(caps.iter().map(|&c| hi.clamp(R_MIN, c)).collect())
}

/// Feasible, auxiliary-tight starting state.
///
/// Power is split equally; rates are water-shifted under `0.999 C_k` until
/// they sum to `K R_s / L_max`. When equal power leaves too little capacity,
/// the split is blended toward water-filling. Channels whose equal-share
/// capacity cannot hold twice the minimum rate are left dormant.
pub fn init_feasible(config: &LinkConfig, model: &SourceModel) -> Result<ScaState> {
    config.validate()?;
    model.validate()?;
    let k = config.num_channels();
    let gnr: Vec<f64> = config.channels.iter().map(|c| c.gnr()).collect();
    let target = config.required_rate_sum(model);

    let wf = water_filling(&gnr, config.p_max);
    let best_sum: f64 = wf.iter().zip(&gnr).map(|(&p, &g)| capacity(g * p).unwrap_or(0.0)).sum();
    if best_sum < target {
        return Err(Error::Infeasible(format!(
            "required rate sum {target:.6} exceeds the largest achievable sum capacity {best_sum:.6} \
             (K = {k}, R_s / L_max = {:.6})",
            model.rate_rs / config.l_max
        )));
    }

    let share = config.p_max / k as f64;
    let active: Vec<bool> =
        gnr.iter().map(|&g| CAPACITY_FRACTION * capacity(g * share).unwrap_or(0.0) >= 2.0 * R_MIN).collect();
    let n_active = active.iter().filter(|&&a| a).count();
    if n_active == 0 {
        return Err(Error::Infeasible("no channel can carry the minimum rate".into()));
    }
    let act_gnr: Vec<f64> = (0..k).filter(|&i| active[i]).map(|i| gnr[i]).collect();
    let act_wf = water_filling(&act_gnr, config.p_max);
    let equal = config.p_max / n_active as f64;

    for theta in [0.0, 0.5, 0.9, 0.99, 0.999] {
        let powers: Vec<f64> = act_wf.iter().map(|&w| (1.0 - theta) * equal + theta * w).collect();
        let caps: Vec<f64> =
            powers.iter().zip(&act_gnr).map(|(&p, &g)| CAPACITY_FRACTION * capacity(g * p).unwrap_or(0.0)).collect();
        if caps.iter().any(|&c| c < 2.0 * R_MIN) {
            continue;
        }
        if let Some(rates) = shift_rates(&caps, target) {
            let mut p_full = vec![0.0; k];
            let mut r_full = vec![0.0; k];
            let mut j = 0;
            for i in 0..k {
                if active[i] {
                    p_full[i] = powers[j];
                    r_full[i] = rates[j];
                    j += 1;
                }
            }
            return Ok(ScaState::tight(config, model, &p_full, &r_full, &active));
        }
    }
    Err(Error::Infeasible(format!(
        "required rate sum {target:.6} is within 0.1% of the achievable sum capacity {best_sum:.6}"
    )))
}
