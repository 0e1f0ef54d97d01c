//! Closed-form allocation for a single channel.

use super::report::build_allocation;
use crate::ber;
use crate::error::{Error, Result};
use crate::models::{Allocation, CodingScheme, LinkConfig, SourceModel};
use crate::numerics::capacity;

/// Full power and the smallest admissible rate `R_s / L_max`.
///
/// For random coding below the monotonicity threshold the BER is not
/// increasing in the rate, so a golden-section search over
/// `[R_s / L_max, C(gamma_max)]` is used instead.
pub fn solve_single_channel(config: &LinkConfig, model: &SourceModel) -> Result<Allocation> {
    config.validate()?;
    model.validate()?;
    if config.num_channels() != 1 {
        return Err(Error::invalid("channels", "the single-channel solver needs exactly one channel"));
    }
    let gamma_max = config.snr_at(0, config.p_max);
    let c_max = capacity(gamma_max)?;
    let r_floor = model.rate_rs / config.l_max;
    if r_floor > c_max {
        return Err(Error::Infeasible(format!(
            "R_s / L_max = {r_floor:.6} exceeds the capacity {c_max:.6} at full power"
        )));
    }
    let rate = match config.scheme {
        CodingScheme::Random { blocklength } if r_floor < ber::monotonicity_threshold(blocklength) => {
            golden_section(r_floor, c_max, |r| {
                ber::log10_random_coding_ber(gamma_max, r, blocklength).unwrap_or(f64::INFINITY)
            })
        }
        _ => r_floor,
    };
    build_allocation(config, model, &[config.p_max], &[rate])
}

fn golden_section(mut a: f64, mut b: f64, f: impl Fn(f64) -> f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a).abs() <= 1e-13 * (1.0 + a.abs()) {
            break;
        }
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let mid = 0.5 * (a + b);
    // the bracket ends are candidates too: the minimum may sit on a bound
    [a, mid, b].into_iter().min_by(|x, y| f(*x).total_cmp(&f(*y))).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{ChannelSpec, LogisticParams};

    fn model(rs: f64) -> SourceModel {
        SourceModel {
            model_id: "m".into(),
            rate_rs: rs,
            bpp: 0.0,
            obs: LogisticParams::new(-2.5, 2.0, 1.5, -4.0),
            sem: LogisticParams::new(0.2, 0.7, 2.0, -3.5),
        }
    }

    fn config(gain: f64, p_max: f64, l_max: f64, scheme: CodingScheme) -> LinkConfig {
        LinkConfig {
            channels: vec![ChannelSpec::new(gain, 1.0).unwrap()],
            p_max,
            l_max,
            m1_dim: 1000.0,
            alpha: 0.5,
            scheme,
        }
    }

    #[test]
    fn corner_solution() {
        let c = config(1.0, 1.0, 8192.0, CodingScheme::Random { blocklength: 256 });
        let a = solve_single_channel(&c, &model(2048.0)).unwrap();
        assert_eq!(a.rates[0], 0.25);
        assert_eq!(a.powers[0], 1.0);
        let c = config(1.0, 1.0, 4096.0, ber::preset("polar256-qpsk").unwrap());
        let a = solve_single_channel(&c, &model(2048.0)).unwrap();
        assert_eq!(a.rates[0], 0.5);
    }

    #[test]
    fn boundary_and_infeasible() {
        // capacity at gamma = 3 is 2 bits
        let c = config(3.0, 1.0, 100.0, CodingScheme::Random { blocklength: 256 });
        let a = solve_single_channel(&c, &model(200.0)).unwrap();
        assert_eq!(a.rates[0], 2.0);
        assert!(matches!(solve_single_channel(&c, &model(200.1)), Err(Error::Infeasible(_))));
    }

    #[test]
    fn below_threshold_uses_line_search() {
        // L = 16 puts the threshold near 0.45
        let c = config(1.0, 1.0, 1000.0, CodingScheme::Random { blocklength: 16 });
        let a = solve_single_channel(&c, &model(100.0)).unwrap();
        let f = |r: f64| ber::log10_random_coding_ber(1.0, r, 16).unwrap();
        assert!(a.rates[0] >= 0.1 && a.rates[0] <= 1.0);
        let mut r = 0.1;
        while r <= 1.0 {
            assert!(f(a.rates[0]) <= f(r) + 1e-9);
            r += 0.001;
        }
    }
}
