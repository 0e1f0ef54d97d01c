//! Gaussian tail function and the Gaussian-channel information quantities.
//!
//! Everything here is pure `f64` arithmetic. The Gaussian tail is evaluated
//! through `erfc` on the bulk of the line and through the Laplace continued
//! fraction for the Mills ratio in the far right tail, where the tail itself
//! underflows long before the optimizer stops asking for it (arguments up to
//! roughly `sqrt(L) * C * ln 2`).

use crate::error::{Error, Result};

/// `ln(sqrt(2 pi))`
pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

const SQRT_2PI: f64 = 2.506_628_274_631_000_7;

/// Above this argument the tail is taken from the continued fraction.
const CF_TAIL_START: f64 = 8.0;

/// Above this argument `ln Q` and `a_hat` use the continued fraction so that
/// numerator and denominator never underflow together.
const LOG_TAIL_START: f64 = 6.0;

/// Mills ratio `R(w) = Q(w) / phi(w)` for `w > 0` by modified Lentz evaluation of
/// `1/(w + 1/(w + 2/(w + 3/(w + ...))))`.
fn mills_ratio_cf(w: f64) -> f64 {
    mills_cf_from(w, 1.0)
}

/// The same fraction started at numerator `first`:
/// `1/(w + first/(w + (first + 1)/(w + ...)))`.
fn mills_cf_from(w: f64, first: f64) -> f64 {
    debug_assert!(w > 0.0);
    const TINY: f64 = 1e-300;
    // f = b0 + a1/(b1 + a2/(b2 + ...)) with b_j = w, a_j = j - 1 for j >= 2.
    let mut f = w;
    let mut c = w;
    let mut d = 0.0;
    for j in 0..5000 {
        let a = first + j as f64;
        d = w + a * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = w + a / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    1.0 / f
}

/// Standard normal density.
pub fn normal_pdf(w: f64) -> f64 {
    (-0.5 * w * w).exp() / SQRT_2PI
}

/// Gaussian tail probability `Q(w) = P[N(0,1) > w]`.
pub fn q_function(w: f64) -> f64 {
    if w > CF_TAIL_START {
        (-0.5 * w * w - LN_SQRT_2PI).exp() * mills_ratio_cf(w)
    } else {
        0.5 * libm::erfc(w * std::f64::consts::FRAC_1_SQRT_2)
    }
}

/// Natural log of the Gaussian tail, finite for every finite argument.
pub fn ln_q_function(w: f64) -> f64 {
    if w > LOG_TAIL_START {
        -0.5 * w * w - LN_SQRT_2PI + mills_ratio_cf(w).ln()
    } else {
        q_function(w).ln()
    }
}

/// Base-10 log of the Gaussian tail.
pub fn log10_q_function(w: f64) -> f64 {
    ln_q_function(w) * std::f64::consts::LOG10_E
}

/// Shannon capacity `log2(1 + gamma)` in bits per channel use.
pub fn capacity(gamma: f64) -> Result<f64> {
    if !(gamma >= 0.0) {
        return Err(Error::domain(format!("capacity needs gamma >= 0, got {gamma}")));
    }
    Ok(gamma.ln_1p() / std::f64::consts::LN_2)
}

/// Channel dispersion `1 - 1/(1 + gamma)^2`.
pub fn dispersion(gamma: f64) -> Result<f64> {
    if !(gamma >= 0.0) {
        return Err(Error::domain(format!("dispersion needs gamma >= 0, got {gamma}")));
    }
    let inv = 1.0 / (1.0 + gamma);
    Ok(1.0 - inv * inv)
}

/// Slope of the exponential majorant of `Q` tangent at `w_hat`:
/// `phi(w_hat) / Q(w_hat)` (the inverse Mills ratio).
pub fn a_hat(w_hat: f64) -> f64 {
    if w_hat > LOG_TAIL_START {
        1.0 / mills_ratio_cf(w_hat)
    } else {
        (-0.5 * w_hat * w_hat - LN_SQRT_2PI - ln_q_function(w_hat)).exp()
    }
}

/// Exponential majorant `Q(w_hat) * exp(-a_hat(w_hat) (w - w_hat))`, which is
/// `>= Q(w)` everywhere and equal to it at `w = w_hat`.
pub fn q_upper_bound(w: f64, w_hat: f64) -> f64 {
    let slope_term = -a_hat(w_hat) * (w - w_hat);
    let q_hat = q_function(w_hat);
    // exact at the tangent point; exp(ln Q) would lose a few ulps there
    if slope_term == 0.0 {
        return q_hat;
    }
    if q_hat >= f64::MIN_POSITIVE && slope_term.abs() < 700.0 {
        return q_hat * slope_term.exp();
    }
    (ln_q_function(w_hat) + slope_term).exp()
}

/// `g(w) = exp(-w^2/2) - sqrt(2 pi) w Q(w)`, nonnegative on the whole line.
pub fn mills_gap(w: f64) -> f64 {
    if w > LOG_TAIL_START {
        // 1 - w R(w) = t / (w + t) with t the fraction's remainder, so no cancellation
        let t = mills_cf_from(w, 2.0);
        return (-0.5 * w * w).exp() * t / (w + t);
    }
    (-0.5 * w * w).exp() - SQRT_2PI * w * q_function(w)
}

/// Neumaier-compensated sum, used wherever reductions must not depend on the
/// order in which partial results arrive.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if !t.is_finite() {
            // the correction term would turn an infinite sum into NaN
            self.sum = t;
            return;
        }
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn merge(&mut self, other: &CompensatedSum) {
        self.add(other.sum);
        self.add(other.comp);
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    // Reference values from a 40-digit mpmath evaluation of erfc(w/sqrt 2)/2.
    const Q_REF: &[(f64, f64)] = &[
        (-3.0, 0.998_650_101_968_369_9),
        (-1.0, 0.841_344_746_068_542_9),
        (0.5, 0.308_537_538_725_986_9),
        (1.0, 0.158_655_253_931_457_05),
        (2.0, 0.022_750_131_948_179_207),
        (3.0, 0.001_349_898_031_630_094_5),
        (5.0, 2.866_515_718_791_939e-7),
        (8.0, 6.220_960_574_271_784e-16),
        (10.0, 7.619_853_024_160_526e-24),
        (20.0, 2.753_624_118_606_233_7e-89),
        (30.0, 4.906_713_927_148_187e-198),
        (37.0, 5.725_571_222_524_577e-300),
    ];

    #[test]
    fn q_matches_reference() {
        for &(w, q) in Q_REF {
            assert!(rel(q_function(w), q) < 1e-12, "w={w}: {} vs {q}", q_function(w));
        }
        assert_eq!(q_function(0.0), 0.5);
    }

    #[test]
    fn q_complement() {
        for w in [0.5, 1.0, 2.0, 3.7, 7.9] {
            assert!((q_function(w) + q_function(-w) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn q_at_block_error_example() {
        let w = (256.0_f64 / 0.75).sqrt() * 0.5 * std::f64::consts::LN_2;
        assert!(rel(q_function(w), 7.616_692_357_290_297e-11) < 1e-12);
    }

    #[test]
    fn ln_q_far_tail() {
        assert!(rel(ln_q_function(40.0), -804.608_442_013_753_8) < 1e-14);
        assert!(rel(ln_q_function(50.0), -1254.831_361_139_419_9) < 1e-14);
        // continuity across the switch points
        for w in [LOG_TAIL_START, CF_TAIL_START] {
            let lo = ln_q_function(w - 1e-9);
            let hi = ln_q_function(w + 1e-9);
            assert!((lo - hi).abs() < 1e-7);
        }
    }

    #[test]
    fn a_hat_reference() {
        assert!(rel(a_hat(0.0), 0.797_884_560_802_865_4) < 1e-13);
        assert!(rel(a_hat(3.0), 3.283_098_654_930_436_5) < 1e-12);
        assert!(rel(a_hat(10.0), 10.098_093_233_962_512) < 1e-12);
        assert!(rel(a_hat(30.0), 30.033_259_667_433_677) < 1e-12);
        assert!(rel(a_hat(-2.0), 0.055_247_862_678_989_96) < 1e-12);
    }

    #[test]
    fn a_hat_dominates_argument() {
        let mut w = -10.0;
        while w <= 40.0 {
            assert!(a_hat(w) > w.max(0.0), "w={w}");
            w += 0.05;
        }
    }

    #[test]
    fn upper_bound_is_tangent() {
        for w in [-4.0, -1.0, 0.0, 2.5, 6.0, 8.0] {
            assert!(rel(q_upper_bound(w, w), q_function(w)) < 1e-12);
        }
        let b = q_upper_bound(0.0, 1.0);
        assert!(b >= 0.5);
        assert!(rel(b, 0.5 * a_hat(1.0).exp()) > 0.0);
        assert!(rel(b, q_function(1.0) * a_hat(1.0).exp()) < 1e-14);
    }

    #[test]
    fn mills_gap_tail_branch() {
        let (lo, hi) = (mills_gap(LOG_TAIL_START - 1e-9), mills_gap(LOG_TAIL_START + 1e-9));
        assert!(rel(hi, lo) < 1e-6, "{lo} vs {hi}");
        // g(w) ~ exp(-w^2/2) / w^2 for large w
        let w = 20.0;
        assert!(rel(mills_gap(w), (-0.5 * w * w).exp() / (w * w + 2.0)) < 1e-2);
        let mut w = -10.0;
        while w <= 60.0 {
            assert!(mills_gap(w) >= 0.0, "w={w}");
            assert_eq!(q_upper_bound(w, w), q_function(w));
            w += 0.01;
        }
    }

    #[test]
    fn capacity_and_dispersion() {
        assert_eq!(capacity(0.0).unwrap(), 0.0);
        assert!((capacity(1.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((capacity(3.0).unwrap() - 2.0).abs() < 1e-15);
        assert!(capacity(-1e-3).is_err());
        assert_eq!(dispersion(0.0).unwrap(), 0.0);
        assert!((dispersion(1.0).unwrap() - 0.75).abs() < 1e-15);
        assert!(dispersion(-2.0).is_err());
        assert!(dispersion(1e6).unwrap() < 1.0);
        assert!(dispersion(1e12).unwrap() <= 1.0);
        let mut prev = (0.0, 0.0);
        for i in 1..2000 {
            let g = i as f64 * 0.37;
            let cur = (capacity(g).unwrap(), dispersion(g).unwrap());
            assert!(cur.0 >= prev.0 && cur.1 >= prev.1);
            prev = cur;
        }
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut s = CompensatedSum::default();
        s.add(1.0);
        for _ in 0..10 {
            s.add(1e-16);
        }
        s.add(-1.0);
        assert!((s.value() - 1e-15).abs() < 1e-25);
        s.add(f64::INFINITY);
        assert_eq!(s.value(), f64::INFINITY);
    }
}
