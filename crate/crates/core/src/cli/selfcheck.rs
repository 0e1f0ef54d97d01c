//! Fast invariant checks behind `semcom-alloc selfcheck`. Each one exercises
//! a contract end to end on a small fixed instance; the full suites live in
//! the test targets.

use crate::ber;
use crate::distortion::{self, DistortionSample};
use crate::models::{ChannelSpec, CodingScheme, LinkConfig, LogisticParams, SourceModel};
use crate::numerics;
use crate::optimizer::{sca_solve, solve_single_channel, SolveStatus};
use crate::par::Exec;
use crate::simulator::{simulate, SimConfig};

pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, f: impl FnOnce() -> Result<String, String>) -> CheckResult {
    match f() {
        Ok(detail) => CheckResult { name, passed: true, detail },
        Err(detail) => CheckResult { name, passed: false, detail },
    }
}

fn model() -> SourceModel {
    SourceModel {
        model_id: "check".into(),
        rate_rs: 300.0,
        bpp: 0.1,
        obs: LogisticParams::new(-2.5, 2.0, 1.5, -4.0),
        sem: LogisticParams::new(0.2, 0.7, 2.0, -3.5),
    }
}

fn link(gains: &[f64], p_max: f64) -> LinkConfig {
    LinkConfig {
        channels: gains.iter().map(|&g| ChannelSpec { gain_sq: g, noise_var: 1.0 }).collect(),
        p_max,
        l_max: 1000.0,
        m1_dim: 3072.0,
        alpha: 0.5,
        scheme: CodingScheme::Random { blocklength: 256 },
    }
}

fn q_majorant() -> Result<String, String> {
    let mut worst = f64::INFINITY;
    for i in 0..=60 {
        let w_hat = -5.0 + 0.5 * i as f64;
        for j in 0..=60 {
            let w = -5.0 + 0.5 * j as f64;
            let (q, u) = (numerics::q_function(w), numerics::q_upper_bound(w, w_hat));
            worst = worst.min((u - q) / q.max(1e-300));
        }
    }
    if worst >= -1e-12 {
        Ok(format!("smallest relative margin {worst:.2e}"))
    } else {
        Err(format!("majorant undercuts Q by {worst:.2e}"))
    }
}

fn ber_monotone_in_rate() -> Result<String, String> {
    let gamma = 3.0;
    let cap = numerics::capacity(gamma).map_err(|e| e.to_string())?;
    let mut prev = 0.0;
    for i in 0..=200 {
        let r = 0.12 + (cap - 0.12) * i as f64 / 200.0;
        let b = ber::random_coding_ber(gamma, r, 256).map_err(|e| e.to_string())?;
        if b < prev {
            return Err(format!("BER falls at rate {r}"));
        }
        prev = b;
    }
    Ok(format!("201 rates up to capacity {cap:.4}"))
}

fn logistic_round_trip() -> Result<String, String> {
    let truth = LogisticParams::new(-2.0, 1.5, 2.5, -4.0);
    let samples: Vec<_> = (0..=24)
        .map(|i| {
            let x = -7.0 + 0.25 * i as f64;
            DistortionSample { log10_ber: x, value: truth.eval(x) }
        })
        .collect();
    let fit = distortion::fit_logistic(&samples, 5).map_err(|e| e.to_string())?;
    let p = fit.params;
    let err = [p.base - truth.base, p.span - truth.span, p.slope - truth.slope, p.mid - truth.mid]
        .iter()
        .fold(0.0f64, |m, d| m.max(d.abs()));
    if err <= 1e-5 {
        Ok(format!("max parameter error {err:.2e}"))
    } else {
        Err(format!("max parameter error {err:.2e}"))
    }
}

fn single_channel_closed_form() -> Result<String, String> {
    let c = link(&[1.0], 1.0);
    let m = model();
    let a = solve_single_channel(&c, &m).map_err(|e| e.to_string())?;
    let want = m.rate_rs / c.l_max;
    if (a.rates[0] - want).abs() <= 1e-12 && a.powers[0] == c.p_max {
        Ok(format!("R = {want}, P = P_max"))
    } else {
        Err(format!("got R = {}, P = {}", a.rates[0], a.powers[0]))
    }
}

fn sca_converges() -> Result<String, String> {
    let rep = sca_solve(&link(&[2.0748, 1.5739], 2.0), &model()).map_err(|e| e.to_string())?;
    let descent = rep.original_trace.windows(2).all(|w| w[1] <= w[0] + 1e-6 * w[0].abs().max(1.0));
    if rep.status == SolveStatus::Converged && rep.original_kkt_residual <= 1e-5 && descent {
        Ok(format!("{} iterations, KKT residual {:.2e}", rep.iterations, rep.original_kkt_residual))
    } else {
        Err(format!(
            "status {}, KKT residual {:.2e}, monotone {descent}",
            rep.status.as_str(),
            rep.original_kkt_residual
        ))
    }
}

fn simulator_reproducible() -> Result<String, String> {
    let c = link(&[2.0748, 1.5739], 2.0);
    let a = sca_solve(&c, &model()).map_err(|e| e.to_string())?.allocation;
    let s = SimConfig::new(10_000, 1);
    let x = simulate(&a, &c, &s, Exec::Sequential).map_err(|e| e.to_string())?;
    let y = simulate(&a, &c, &s, Exec::default()).map_err(|e| e.to_string())?;
    if x == y {
        Ok("sequential and parallel reports identical".into())
    } else {
        Err("reports differ between execution policies".into())
    }
}

pub fn run_all() -> Vec<CheckResult> {
    vec![
        check("q-majorant", q_majorant),
        check("ber-monotone-in-rate", ber_monotone_in_rate),
        check("logistic-round-trip", logistic_round_trip),
        check("single-channel-closed-form", single_channel_closed_form),
        check("sca-converges", sca_converges),
        check("simulator-reproducible", simulator_reproducible),
    ]
}
