//! The allocation objective in the reduced `(P, R)` space: the rate-weighted
//! distortion with its denominator fixed at the required rate sum.
//!
//! The "design" BER model is the one the optimizer works with (unit
//! dispersion for random coding); the "exact" model keeps the true
//! dispersion and is what reports show.

use std::f64::consts::{LN_10, LN_2, LOG10_E};

use crate::ber;
use crate::models::{CodingScheme, LinkConfig, SourceModel};
use crate::numerics;

/// `L_max / (K R_s)`.
pub fn objective_scale(config: &LinkConfig, model: &SourceModel) -> f64 {
    config.l_max / (config.num_channels() as f64 * model.rate_rs)
}

/// Design-model `log10 BER` of channel `k` at `(p, r)` and its partial
/// derivatives with respect to `p` and `r`.
pub fn design_log10_ber(config: &LinkConfig, k: usize, p: f64, r: f64) -> (f64, f64, f64) {
    let gn = config.channels[k].gnr();
    match config.scheme {
        CodingScheme::Random { blocklength } => {
            let sl = (blocklength as f64).sqrt();
            let w = sl * ((gn * p).ln_1p() - r * LN_2);
            let lb = numerics::log10_q_function(w) - (r * blocklength as f64).log10();
            let dw = -LOG10_E * numerics::a_hat(w);
            let d_p = dw * sl * gn / (1.0 + gn * p);
            let d_r = -dw * sl * LN_2 - 1.0 / (r * LN_10);
            (lb, d_p, d_r)
        }
        CodingScheme::Practical { mod_order, coeffs, .. } => {
            let lg = (mod_order as f64).log2();
            let e = (coeffs.lam1 * r / lg + coeffs.lam2).exp();
            let lb = -e * gn * p + coeffs.mu1 * r / lg + coeffs.mu2;
            let d_p = -e * gn;
            let d_r = -e * gn * p * coeffs.lam1 / lg + coeffs.mu1 / lg;
            (lb, d_p, d_r)
        }
    }
}

/// Exact-model `log10 BER` (unclamped); `None` for a nonpositive rate.
pub fn exact_log10_ber(config: &LinkConfig, k: usize, p: f64, r: f64) -> Option<f64> {
    ber::log10_ber(&config.scheme, config.snr_at(k, p.max(0.0)), r).ok()
}

/// Weighted per-channel distortion at `log10 BER = lb` and its derivative.
pub fn distortion_and_slope(model: &SourceModel, alpha: f64, lb: f64) -> (f64, f64) {
    let obs = 10f64.powf(model.obs.eval(lb));
    let d = alpha * obs + (1.0 - alpha) * model.sem.eval(lb);
    let slope = alpha * LN_10 * obs * model.obs.derivative(lb) + (1.0 - alpha) * model.sem.derivative(lb);
    (d, slope)
}

/// Objective under the design BER model. Channels with zero rate contribute nothing.
pub fn p4_objective(config: &LinkConfig, model: &SourceModel, powers: &[f64], rates: &[f64]) -> f64 {
    let c = objective_scale(config, model);
    let mut acc = numerics::CompensatedSum::default();
    for k in 0..powers.len() {
        if rates[k] > 0.0 {
            let (lb, _, _) = design_log10_ber(config, k, powers[k], rates[k]);
            acc.add(rates[k] * distortion_and_slope(model, config.alpha, lb).0);
        }
    }
    c * acc.value()
}

/// Objective under the exact BER model, BER capped at 0.5 as in reports.
pub fn p4_objective_exact(config: &LinkConfig, model: &SourceModel, powers: &[f64], rates: &[f64]) -> f64 {
    let c = objective_scale(config, model);
    let cap = ber::BER_REPORT_CAP.log10();
    let mut acc = numerics::CompensatedSum::default();
    for k in 0..powers.len() {
        if rates[k] > 0.0 {
            let lb = exact_log10_ber(config, k, powers[k], rates[k]).unwrap_or(cap).min(cap);
            acc.add(rates[k] * distortion_and_slope(model, config.alpha, lb).0);
        }
    }
    c * acc.value()
}

/// Gradient of [`p4_objective`] as `(d/dP, d/dR)`.
pub fn p4_gradient(config: &LinkConfig, model: &SourceModel, powers: &[f64], rates: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let c = objective_scale(config, model);
    let n = powers.len();
    let mut gp = vec![0.0; n];
    let mut gr = vec![0.0; n];
    for k in 0..n {
        if rates[k] > 0.0 {
            let (lb, d_p, d_r) = design_log10_ber(config, k, powers[k], rates[k]);
            let (d, slope) = distortion_and_slope(model, config.alpha, lb);
            gp[k] = c * rates[k] * slope * d_p;
            gr[k] = c * (d + rates[k] * slope * d_r);
        }
    }
    (gp, gr)
}
