//! End-to-end distortion models and their logistic fitter.
//!
//! Observation distortion is modelled as `log10 D_o` and semantic distortion
//! as `D_s`, both as generalized logistics in `log10(BER)`.

use nalgebra::{Matrix4, Vector4};

use crate::error::{Error, Result};
use crate::models::{LogisticParams, SourceModel};
use crate::numerics::CompensatedSum;

/// One measured `(log10 BER, distortion)` pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistortionSample {
    pub log10_ber: f64,
    pub value: f64,
}

/// Result of [`fit_logistic`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogisticFit {
    pub params: LogisticParams,
    pub rmse: f64,
    pub iterations: usize,
    /// Set when the samples are constant and no curve shape can be identified.
    pub degenerate: bool,
}

fn check_ber(rho_b: f64) -> Result<f64> {
    if !(rho_b > 0.0 && rho_b <= 1.0) {
        return Err(Error::domain(format!("BER must lie in (0, 1], got {rho_b}")));
    }
    Ok(rho_b.log10())
}

/// Predicted `log10 D_o` at BER `rho_b`.
pub fn eval_obs(model: &SourceModel, rho_b: f64) -> Result<f64> {
    Ok(model.obs.eval(check_ber(rho_b)?))
}

/// Predicted semantic distortion at BER `rho_b` (not clamped).
pub fn eval_sem(model: &SourceModel, rho_b: f64) -> Result<f64> {
    Ok(model.sem.eval(check_ber(rho_b)?))
}

/// [`eval_obs`] taking `log10 BER` directly, for BERs below the smallest double.
pub fn eval_obs_log10(model: &SourceModel, log10_ber: f64) -> f64 {
    model.obs.eval(log10_ber)
}

/// [`eval_sem`] taking `log10 BER` directly.
pub fn eval_sem_log10(model: &SourceModel, log10_ber: f64) -> f64 {
    model.sem.eval(log10_ber)
}

/// Error-free observation distortion (lower asymptote).
pub fn eval_obs_floor(model: &SourceModel) -> f64 {
    model.obs.base
}

/// Error-free semantic distortion (lower asymptote).
pub fn eval_sem_floor(model: &SourceModel) -> f64 {
    model.sem.base
}

/// Per-channel weighted distortion `alpha 10^{log10 D_o} + (1 - alpha) D_s`.
pub fn channel_distortion(model: &SourceModel, log10_ber: f64, alpha: f64) -> f64 {
    alpha * 10f64.powf(eval_obs_log10(model, log10_ber)) + (1.0 - alpha) * eval_sem_log10(model, log10_ber)
}

/// Rate-weighted average distortion over channels given per-channel BERs.
pub fn eval_weighted_objective(model: &SourceModel, rates: &[f64], bers: &[f64], alpha: f64) -> Result<f64> {
    if bers.len() != rates.len() {
        return Err(Error::invalid("bers", "length must match rates"));
    }
    let logs = bers.iter().map(|&b| check_ber(b)).collect::<Result<Vec<_>>>()?;
    eval_weighted_objective_log10(model, rates, &logs, alpha)
}

/// [`eval_weighted_objective`] with `log10 BER` inputs.
pub fn eval_weighted_objective_log10(
    model: &SourceModel,
    rates: &[f64],
    log10_bers: &[f64],
    alpha: f64,
) -> Result<f64> {
    if log10_bers.len() != rates.len() {
        return Err(Error::invalid("log10_bers", "length must match rates"));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::domain(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    if rates.iter().any(|r| !(*r >= 0.0)) {
        return Err(Error::domain("rates must be >= 0"));
    }
    let mut num = CompensatedSum::default();
    let mut den = CompensatedSum::default();
    for (&r, &lb) in rates.iter().zip(log10_bers) {
        if r > 0.0 {
            num.add(r * channel_distortion(model, lb, alpha));
            den.add(r);
        }
    }
    if !(den.value() > 0.0) {
        return Err(Error::domain("at least one rate must be > 0"));
    }
    Ok(num.value() / den.value())
}

const LM_MAX_ITER: usize = 200;
const LM_STEP_TOL: f64 = 1e-10;

/// Least-squares fit of a generalized logistic in `log10 BER`.
///
/// Needs at least `min_points` (>= 5) samples covering two or more decades.
pub fn fit_logistic(samples: &[DistortionSample], min_points: usize) -> Result<LogisticFit> {
    if min_points < 5 {
        return Err(Error::invalid("min_points", "must be >= 5"));
    }
    if samples.len() < min_points {
        return Err(Error::Fit(format!("need at least {min_points} samples, got {}", samples.len())));
    }
    for s in samples {
        if !s.log10_ber.is_finite() || !s.value.is_finite() {
            return Err(Error::invalid("samples", "values must be finite"));
        }
        if s.log10_ber > 0.0 {
            return Err(Error::invalid("log10_ber", format!("must be <= 0, got {}", s.log10_ber)));
        }
    }
    let mut pts: Vec<(f64, f64)> = samples.iter().map(|s| (s.log10_ber, s.value)).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let (xs, ys): (Vec<f64>, Vec<f64>) = pts.iter().copied().unzip();

    let x_lo = xs[0];
    let x_hi = xs[xs.len() - 1];
    if x_hi - x_lo < 2.0 {
        return Err(Error::Fit(format!("samples span {:.3} decades of BER; need at least 2", x_hi - x_lo)));
    }

    let y_min = ys.iter().copied().fold(f64::INFINITY, f64::min);
    let y_max = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if y_max - y_min <= 1e-12 {
        let n = xs.len();
        let median = if n % 2 == 1 { xs[n / 2] } else { 0.5 * (xs[n / 2 - 1] + xs[n / 2]) };
        let base = ys.iter().sum::<f64>() / n as f64;
        let params = LogisticParams::new(base, 0.0, 1.0, median);
        return Ok(LogisticFit { params, rmse: rmse(&params, &xs, &ys), iterations: 0, degenerate: true });
    }

    let mut theta = initial_guess(&xs, &ys, y_min, y_max);
    let mut cost = sum_sq(&theta, &xs, &ys);
    let mut damping = 1e-3;
    let mut iterations = 0;
    while iterations < LM_MAX_ITER {
        iterations += 1;
        let (jtj, jtr) = normal_equations(&theta, &xs, &ys);
        if jtr.amax() == 0.0 {
            break;
        }
        let mut a = jtj;
        for i in 0..4 {
            a[(i, i)] += damping * jtj[(i, i)].max(1e-12);
        }
        let Some(chol) = a.cholesky() else {
            damping *= 3.0;
            continue;
        };
        let step = chol.solve(&(-jtr));
        let trial = theta + step;
        let trial_cost = sum_sq(&trial, &xs, &ys);
        if trial_cost.is_finite() && trial_cost <= cost {
            theta = trial;
            cost = trial_cost;
            damping = (damping / 3.0).max(1e-15);
        } else {
            damping *= 3.0;
        }
        if step.amax() < LM_STEP_TOL {
            break;
        }
    }

    let params = LogisticParams::new(theta[0], theta[1], theta[2], theta[3]);
    if !(params.slope > 0.0) {
        return Err(Error::Fit(format!(
            "fitted slope {} is not positive; distortion must grow with BER",
            params.slope
        )));
    }
    if params.span < 0.0 {
        return Err(Error::Fit(format!("fitted span {} is negative", params.span)));
    }
    Ok(LogisticFit { params, rmse: rmse(&params, &xs, &ys), iterations, degenerate: false })
}

fn initial_guess(xs: &[f64], ys: &[f64], y_min: f64, y_max: f64) -> Vector4<f64> {
    let span = y_max - y_min;
    let half = y_min + 0.5 * span;
    let mut mid = 0.5 * (xs[0] + xs[xs.len() - 1]);
    for i in 0..xs.len() - 1 {
        let (a, b) = (ys[i] - half, ys[i + 1] - half);
        if a == 0.0 {
            mid = xs[i];
            break;
        }
        if a * b < 0.0 {
            mid = xs[i] + (xs[i + 1] - xs[i]) * a / (a - b);
            break;
        }
    }
    let mut max_slope: f64 = 0.0;
    for i in 0..xs.len() - 1 {
        let dx = xs[i + 1] - xs[i];
        if dx > 0.0 {
            max_slope = max_slope.max((ys[i + 1] - ys[i]) / dx);
        }
    }
    let slope = (4.0 * max_slope / span).clamp(0.1, 20.0);
    Vector4::new(y_min, span, slope, mid)
}

fn model_and_partials(theta: &Vector4<f64>, x: f64) -> (f64, Vector4<f64>) {
    let (span, slope, mid) = (theta[1], theta[2], theta[3]);
    let s = crate::models::sigmoid(slope * (x - mid));
    let ds = s * (1.0 - s);
    let f = theta[0] + span * s;
    let grad = Vector4::new(1.0, s, span * ds * (x - mid), -span * ds * slope);
    (f, grad)
}

fn normal_equations(theta: &Vector4<f64>, xs: &[f64], ys: &[f64]) -> (Matrix4<f64>, Vector4<f64>) {
    let mut jtj = Matrix4::zeros();
    let mut jtr = Vector4::zeros();
    for (&x, &y) in xs.iter().zip(ys) {
        let (f, g) = model_and_partials(theta, x);
        jtj += g * g.transpose();
        jtr += g * (f - y);
    }
    (jtj, jtr)
}

fn sum_sq(theta: &Vector4<f64>, xs: &[f64], ys: &[f64]) -> f64 {
    xs.iter()
        .zip(ys)
        .map(|(&x, &y)| {
            let r = model_and_partials(theta, x).0 - y;
            r * r
        })
        .sum()
}

fn rmse(p: &LogisticParams, xs: &[f64], ys: &[f64]) -> f64 {
    let ss: f64 = xs.iter().zip(ys).map(|(&x, &y)| (p.eval(x) - y).powi(2)).sum();
    (ss / xs.len() as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn model() -> SourceModel {
        SourceModel {
            model_id: "m".into(),
            rate_rs: 1000.0,
            bpp: 0.1,
            obs: LogisticParams::new(-3.0, 2.0, 2.0, -5.0),
            sem: LogisticParams::new(0.2, 0.75, 3.0, -4.0),
        }
    }

    #[test]
    fn hand_evaluated_points() {
        let m = model();
        assert!((eval_obs(&m, 1e-5).unwrap() - -2.0).abs() < 1e-12);
        assert!((eval_sem(&m, 1e-4).unwrap() - 0.575).abs() < 1e-12);
        assert!((eval_obs(&m, 1e-300).unwrap() - -3.0).abs() < 1e-12);
        assert!((eval_sem(&m, 1e-300).unwrap() - 0.2).abs() < 1e-12);
        assert_eq!(eval_obs_floor(&m), -3.0);
        assert_eq!(eval_sem_floor(&m), 0.2);
        assert!(eval_obs(&m, 0.0).is_err());
        assert!(eval_sem(&m, 1.5).is_err());
    }

    #[test]
    fn weighted_objective_examples() {
        let m = model();
        let single = eval_weighted_objective(&m, &[0.3], &[1e-5], 0.4).unwrap();
        let expect = 0.4 * 1e-2 + 0.6 * eval_sem(&m, 1e-5).unwrap();
        assert!((single - expect).abs() < 1e-15);
        let same = eval_weighted_objective(&m, &[0.5, 0.5, 0.5], &[1e-5; 3], 0.4).unwrap();
        assert!((same - single).abs() < 1e-15);
        // alpha = 1: D_o values 10^-2 at 1e-5 and 10^{eval_obs(1e-4)} at 1e-4
        let d1 = 10f64.powf(eval_obs(&m, 1e-5).unwrap());
        let d2 = 10f64.powf(eval_obs(&m, 1e-4).unwrap());
        let two = eval_weighted_objective(&m, &[0.75, 0.25], &[1e-5, 1e-4], 1.0).unwrap();
        assert!((two - (0.75 * d1 + 0.25 * d2)).abs() < 1e-15);
        assert!(eval_weighted_objective(&m, &[0.0, 0.0], &[1e-5, 1e-5], 0.5).is_err());
        assert!(eval_weighted_objective(&m, &[1.0], &[1e-5, 1e-5], 0.5).is_err());
    }

    fn synth(p: &LogisticParams, xs: &[f64]) -> Vec<DistortionSample> {
        xs.iter().map(|&x| DistortionSample { log10_ber: x, value: p.eval(x) }).collect()
    }

    #[test]
    fn recovers_integer_grid() {
        let truth = LogisticParams::new(-3.0, 2.0, 2.0, -5.0);
        let xs: Vec<f64> = (1..=9).map(|i| -(i as f64)).collect();
        let fit = fit_logistic(&synth(&truth, &xs), 5).unwrap();
        assert!(!fit.degenerate);
        assert!((fit.params.base - truth.base).abs() < 1e-6);
        assert!((fit.params.span - truth.span).abs() < 1e-6);
        assert!((fit.params.slope - truth.slope).abs() < 1e-6);
        assert!((fit.params.mid - truth.mid).abs() < 1e-6);
        assert!(fit.rmse <= 1e-9);
    }

    #[test]
    fn recovers_under_small_noise() {
        let truth = LogisticParams::new(-3.0, 2.0, 2.0, -5.0);
        let xs: Vec<f64> = (1..=9).map(|i| -(i as f64)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let noise = Normal::new(0.0, 1e-3).unwrap();
        let samples: Vec<_> = synth(&truth, &xs)
            .into_iter()
            .map(|s| DistortionSample { value: s.value + noise.sample(&mut rng), ..s })
            .collect();
        let fit = fit_logistic(&samples, 5).unwrap();
        assert!((fit.params.base - truth.base).abs() < 1e-2);
        assert!((fit.params.span - truth.span).abs() < 1e-2);
        assert!((fit.params.slope - truth.slope).abs() < 1e-2);
        assert!((fit.params.mid - truth.mid).abs() < 1e-2);
        assert!(fit.rmse <= 2e-3);
    }

    #[test]
    fn constant_samples_are_degenerate() {
        let xs = [-9.0, -7.0, -5.0, -3.0, -1.0];
        let samples: Vec<_> = xs.iter().map(|&x| DistortionSample { log10_ber: x, value: 0.4 }).collect();
        let fit = fit_logistic(&samples, 5).unwrap();
        assert!(fit.degenerate);
        assert_eq!(fit.params.span, 0.0);
        assert_eq!(fit.params.slope, 1.0);
        assert_eq!(fit.params.mid, -5.0);
        assert!((fit.params.base - 0.4).abs() < 1e-15);
    }

    #[test]
    fn rejects_thin_inputs() {
        let truth = LogisticParams::new(0.0, 1.0, 1.0, -2.0);
        assert!(fit_logistic(&synth(&truth, &[-3.0, -2.0, -1.0, -0.5]), 5).is_err());
        assert!(fit_logistic(&synth(&truth, &[-2.0, -1.8, -1.5, -1.2, -0.5]), 5).is_err());
        assert!(fit_logistic(&synth(&truth, &[-5.0, -4.0, -3.0, -2.0, -1.0]), 4).is_err());
    }

    #[test]
    fn decreasing_data_is_rejected() {
        let truth = LogisticParams::new(0.0, 1.0, 1.5, -4.0);
        let xs: Vec<f64> = (0..12).map(|i| -8.0 + 0.6 * i as f64).collect();
        let samples: Vec<_> = xs.iter().map(|&x| DistortionSample { log10_ber: x, value: -truth.eval(x) }).collect();
        assert!(fit_logistic(&samples, 5).is_err());
    }

    #[test]
    fn fit_is_deterministic_and_self_consistent() {
        let truth = LogisticParams::new(-1.2, 0.9, 3.3, -4.4);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let samples: Vec<_> = (0..25)
            .map(|i| {
                let x = -9.0 + 0.35 * i as f64;
                DistortionSample { log10_ber: x, value: truth.eval(x) + 0.01 * (rng.random::<f64>() - 0.5) }
            })
            .collect();
        let a = fit_logistic(&samples, 5).unwrap();
        let b = fit_logistic(&samples, 5).unwrap();
        assert_eq!(a, b);
        let ss: f64 = samples.iter().map(|s| (a.params.eval(s.log10_ber) - s.value).powi(2)).sum();
        assert!(((ss / samples.len() as f64).sqrt() - a.rmse).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn obs_and_sem_increase_with_ber(
            base in -5.0..0.0f64, span in 0.1..4.0f64, slope in 0.2..8.0f64, mid in -8.0..-1.0f64,
            a in -12.0..0.0f64, b in -12.0..0.0f64,
        ) {
            let mut m = model();
            m.obs = LogisticParams::new(base, span, slope, mid);
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assume!(hi - lo > 1e-6);
            let vlo = eval_obs(&m, 10f64.powf(lo)).unwrap();
            let vhi = eval_obs(&m, 10f64.powf(hi)).unwrap();
            prop_assert!(vhi >= vlo);
            prop_assert!(vlo >= base && vhi <= base + span);
            prop_assert!(eval_sem(&m, 10f64.powf(hi)).unwrap() >= eval_sem(&m, 10f64.powf(lo)).unwrap());
        }

        #[test]
        fn weighted_objective_scale_invariant(
            r in proptest::collection::vec(0.01..3.0f64, 1..8),
            scale in 0.01..100.0f64,
            alpha in 0.0..=1.0f64,
        ) {
            let m = model();
            let bers: Vec<f64> = (0..r.len()).map(|i| 10f64.powf(-2.0 - i as f64)).collect();
            let base = eval_weighted_objective(&m, &r, &bers, alpha).unwrap();
            let scaled: Vec<f64> = r.iter().map(|x| x * scale).collect();
            let v = eval_weighted_objective(&m, &scaled, &bers, alpha).unwrap();
            prop_assert!((v - base).abs() <= 1e-12 * base.abs().max(1.0));
        }
    }
}
