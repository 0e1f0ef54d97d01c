//! Bit-error-rate models: the finite-blocklength random-coding bound and the
//! log-linear practical-coding regression, plus the regressions that produce
//! the latter from measured curves.

use std::f64::consts::{LN_2, LOG10_E};

use crate::error::{Error, Result};
use crate::models::{CodingScheme, PracticalCoeffs};
use crate::numerics::{self, capacity, dispersion};

/// Largest BER a report will show; decoding never does worse than guessing.
pub const BER_REPORT_CAP: f64 = 0.5;

/// Default validity region of the practical-coding fit, in `log10 BER`.
pub const DEFAULT_FIT_REGION: (f64, f64) = (-7.0, -3.0);

fn check_rate(rate: f64) -> Result<()> {
    if !(rate > 0.0) || !rate.is_finite() {
        return Err(Error::domain(format!("coding rate must be > 0, got {rate}")));
    }
    Ok(())
}

fn check_blocklength(l: u32) -> Result<()> {
    if l < 2 {
        return Err(Error::domain(format!("blocklength must be >= 2, got {l}")));
    }
    Ok(())
}

/// Argument of the Gaussian tail in the normal approximation,
/// `sqrt(L / V) (C - R) ln 2`. `None` when `V = 0` (zero SNR).
fn normal_approx_arg(gamma: f64, rate: f64, l: u32) -> Result<Option<f64>> {
    let v = dispersion(gamma)?;
    if v == 0.0 {
        return Ok(None);
    }
    let c = capacity(gamma)?;
    Ok(Some((l as f64 / v).sqrt() * (c - rate) * LN_2))
}

/// Block error probability of random coding at blocklength `l`.
pub fn block_error_prob(gamma: f64, rate: f64, l: u32) -> Result<f64> {
    check_rate(rate)?;
    check_blocklength(l)?;
    Ok(match normal_approx_arg(gamma, rate, l)? {
        Some(w) => numerics::q_function(w),
        None => 1.0,
    })
}

/// `ln` of [`block_error_prob`], finite far into the tail.
pub fn ln_block_error_prob(gamma: f64, rate: f64, l: u32) -> Result<f64> {
    check_rate(rate)?;
    check_blocklength(l)?;
    Ok(match normal_approx_arg(gamma, rate, l)? {
        Some(w) => numerics::ln_q_function(w),
        None => 0.0,
    })
}

/// Minimum achievable BER of random coding: one bit error per erroneous block.
pub fn random_coding_ber(gamma: f64, rate: f64, l: u32) -> Result<f64> {
    Ok(block_error_prob(gamma, rate, l)? / (rate * l as f64))
}

/// `log10` of [`random_coding_ber`].
pub fn log10_random_coding_ber(gamma: f64, rate: f64, l: u32) -> Result<f64> {
    Ok(ln_block_error_prob(gamma, rate, l)? * LOG10_E - (rate * l as f64).log10())
}

/// `log10` random-coding BER with the dispersion replaced by 1, the form the
/// allocation problem is posed in.
pub fn log10_random_coding_ber_unit_dispersion(gamma: f64, rate: f64, l: u32) -> Result<f64> {
    check_rate(rate)?;
    check_blocklength(l)?;
    let w = (l as f64).sqrt() * (capacity(gamma)? - rate) * LN_2;
    Ok(numerics::log10_q_function(w) - (rate * l as f64).log10())
}

/// Rate above which the random-coding BER is nondecreasing in the rate,
/// `sqrt(2 pi) log2(e) / (2 sqrt(L))`.
pub fn monotonicity_threshold(l: u32) -> f64 {
    (2.0 * std::f64::consts::PI).sqrt() * std::f64::consts::LOG2_E / (2.0 * (l as f64).sqrt())
}

/// Unclamped `log10 BER` of the practical-coding model.
pub fn log10_practical_ber(gamma: f64, rate: f64, mod_order: u32, c: &PracticalCoeffs) -> Result<f64> {
    check_rate(rate)?;
    if !(gamma >= 0.0) {
        return Err(Error::domain(format!("SNR must be >= 0, got {gamma}")));
    }
    if mod_order < 2 {
        return Err(Error::domain("modulation order must be >= 2"));
    }
    let x = rate / (mod_order as f64).log2();
    Ok(-(c.lam1 * x + c.lam2).exp() * gamma + c.mu1 * x + c.mu2)
}

/// Practical-coding BER, clamped to [`BER_REPORT_CAP`].
pub fn practical_ber(gamma: f64, rate: f64, mod_order: u32, c: &PracticalCoeffs) -> Result<f64> {
    let lb = log10_practical_ber(gamma, rate, mod_order, c)?;
    Ok(10f64.powf(lb).min(BER_REPORT_CAP))
}

/// Exact (full-dispersion) unclamped `log10 BER` under `scheme`.
pub fn log10_ber(scheme: &CodingScheme, gamma: f64, rate: f64) -> Result<f64> {
    match *scheme {
        CodingScheme::Random { blocklength } => log10_random_coding_ber(gamma, rate, blocklength),
        CodingScheme::Practical { mod_order, coeffs, .. } => log10_practical_ber(gamma, rate, mod_order, &coeffs),
    }
}

/// Human-facing `(BER, log10 BER)`, both capped at 0.5.
pub fn reported_ber(scheme: &CodingScheme, gamma: f64, rate: f64) -> Result<(f64, f64)> {
    let lb = log10_ber(scheme, gamma, rate)?.min(BER_REPORT_CAP.log10());
    Ok((10f64.powf(lb), lb))
}

/// Block error probability used by the simulator: the normal approximation
/// for random coding, `1 - (1 - BER)^N` with `N = round(R L)` bits per block
/// for practical coding.
pub fn sim_block_error_prob(scheme: &CodingScheme, gamma: f64, rate: f64) -> Result<f64> {
    match *scheme {
        CodingScheme::Random { blocklength } => block_error_prob(gamma, rate, blocklength),
        CodingScheme::Practical { blocklength, .. } => {
            let (ber, _) = reported_ber(scheme, gamma, rate)?;
            let n = (rate * blocklength as f64).round().max(1.0);
            Ok(-(n * (-ber).ln_1p()).exp_m1())
        }
    }
}

/// Built-in practical-coding presets.
pub const PRESET_NAMES: [&str; 4] = ["polar256-qpsk", "polar256-16qam", "ldpc4096-qpsk", "ldpc4096-16qam"];

/// Look up a practical-coding preset by name.
pub fn preset(name: &str) -> Option<CodingScheme> {
    let (blocklength, mod_order, lam1, lam2, mu1, mu2) = match name {
        "polar256-qpsk" => (256, 4, -2.1840, 5.4558, 5.2860, 6.9342),
        "polar256-16qam" => (256, 16, -3.0832, 6.9736, 4.3488, 10.7088),
        "ldpc4096-qpsk" => (4096, 4, -2.4380, 8.3714, 14.1470, 29.4932),
        "ldpc4096-16qam" => (4096, 16, -3.1388, 13.0368, 12.2148, 58.1672),
        _ => return None,
    };
    Some(CodingScheme::Practical { blocklength, mod_order, coeffs: PracticalCoeffs { lam1, lam2, mu1, mu2 } })
}

/// One measured point of a BER-vs-SNR curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BerSample {
    /// Linear per-symbol SNR.
    pub snr: f64,
    pub rate: f64,
    pub log10_ber: f64,
}

/// Straight-line fit `log10 BER = -lambda gamma + mu` at one rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnrLinearFit {
    pub lambda: f64,
    pub mu: f64,
    pub rmse: f64,
    pub n_used: usize,
    /// False when the fitted slope is not positive.
    pub valid: bool,
}

/// Ordinary least squares of `log10 BER` on `-gamma` over the samples whose
/// `log10 BER` lies inside `region` (inclusive).
pub fn fit_snr_linear(samples: &[BerSample], region: (f64, f64)) -> Result<SnrLinearFit> {
    let (lo, hi) = region;
    if !(lo < hi) {
        return Err(Error::invalid("region", "lower bound must be below upper bound"));
    }
    let used: Vec<(f64, f64)> = samples
        .iter()
        .filter(|s| s.log10_ber >= lo && s.log10_ber <= hi && s.snr.is_finite())
        .map(|s| (-s.snr, s.log10_ber))
        .collect();
    if used.len() < 3 {
        return Err(Error::Fit(format!("need at least 3 samples inside [{lo}, {hi}], got {}", used.len())));
    }
    let (slope, intercept, rmse) = ols(&used)?;
    Ok(SnrLinearFit { lambda: slope, mu: intercept, rmse, n_used: used.len(), valid: slope > 0.0 })
}

/// `(slope, intercept, rmse)` of `y` on `x`.
fn ols(pts: &[(f64, f64)]) -> Result<(f64, f64, f64)> {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if !(sxx > 0.0) {
        return Err(Error::Fit("abscissa has no spread".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss: f64 = pts.iter().map(|p| (p.1 - slope * p.0 - intercept).powi(2)).sum();
    Ok((slope, intercept, (ss / n).sqrt()))
}

/// One intermediate per-rate line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerRateFit {
    pub rate: f64,
    pub lambda: f64,
    pub mu: f64,
    pub rmse: f64,
}

/// Rate-dependence coefficients of the practical-coding model.
#[derive(Debug, Clone, PartialEq)]
pub struct RateParamFit {
    pub coeffs: PracticalCoeffs,
    pub mod_order: u32,
    pub per_rate_fits: Vec<PerRateFit>,
}

/// Regress `ln lambda` and `mu` on `R / log2 M`.
pub fn fit_rate_params(per_rate: &[PerRateFit], mod_order: u32) -> Result<RateParamFit> {
    if mod_order < 2 {
        return Err(Error::domain("modulation order must be >= 2"));
    }
    if let Some(bad) = per_rate.iter().find(|f| !(f.lambda > 0.0)) {
        return Err(Error::Fit(format!(
            "slope at rate {} is {}; every per-rate slope must be > 0",
            bad.rate, bad.lambda
        )));
    }
    let mut rates: Vec<f64> = per_rate.iter().map(|f| f.rate).collect();
    rates.sort_by(f64::total_cmp);
    rates.dedup();
    if rates.len() < 2 {
        return Err(Error::Fit("need at least 2 distinct rates".into()));
    }
    let lg = (mod_order as f64).log2();
    let ln_lam: Vec<(f64, f64)> = per_rate.iter().map(|f| (f.rate / lg, f.lambda.ln())).collect();
    let mus: Vec<(f64, f64)> = per_rate.iter().map(|f| (f.rate / lg, f.mu)).collect();
    let (lam1, lam2, _) = ols(&ln_lam)?;
    let (mu1, mu2, _) = ols(&mus)?;
    Ok(RateParamFit { coeffs: PracticalCoeffs { lam1, lam2, mu1, mu2 }, mod_order, per_rate_fits: per_rate.to_vec() })
}

/// Group raw samples by rate, fit each line inside `region`, then fit the
/// rate dependence.
pub fn fit_ber_samples(samples: &[BerSample], mod_order: u32, region: (f64, f64)) -> Result<RateParamFit> {
    let mut rates: Vec<f64> = samples.iter().map(|s| s.rate).collect();
    rates.sort_by(f64::total_cmp);
    rates.dedup();
    let mut per_rate = Vec::with_capacity(rates.len());
    for r in rates {
        let group: Vec<BerSample> = samples.iter().copied().filter(|s| s.rate == r).collect();
        let fit = fit_snr_linear(&group, region)?;
        if !fit.valid {
            return Err(Error::Fit(format!("nonpositive SNR slope {} at rate {r}", fit.lambda)));
        }
        per_rate.push(PerRateFit { rate: r, lambda: fit.lambda, mu: fit.mu, rmse: fit.rmse });
    }
    fit_rate_params(&per_rate, mod_order)
}
