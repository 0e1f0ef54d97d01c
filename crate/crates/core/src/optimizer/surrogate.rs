//! Convex surrogate of the allocation problem around an expansion point.
//!
//! Per active channel the design vector is `(r, rho_hat, d_o, d_s, P, R)`,
//! plus `p = ln P` for practical coding. Auxiliaries that cannot influence
//! the objective are left out: with `alpha = 0` there is no `r` or `d_o`,
//! with `alpha = 1` no `d_s`, and a zero-span distortion curve needs no
//! `d`. Without either `d` the BER does not matter and `rho_hat` goes too.
//! Keeping such variables would leave the barrier problem unbounded.

use std::f64::consts::{LN_10, LN_2, LOG10_E};

use super::barrier::{Eval, SmoothProgram};
use super::objective::{design_log10_ber, objective_scale};
use super::{P_MIN, R_MIN};
use crate::error::{Error, Result};
use crate::models::{softplus, CodingScheme, LinkConfig, SourceModel};
use crate::numerics;

/// Smallest slack a barrier start may have in a power or rate constraint.
pub const MIN_START_SLACK: f64 = 1e-10;

/// Decision and auxiliary variables of one channel.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ChannelVars {
    /// Dormant channels carry no rate and no power and are not optimized.
    pub active: bool,
    pub power: f64,
    pub rate: f64,
    /// `log10 R` bound.
    pub r: f64,
    /// `log10 BER` bound.
    pub rho_hat: f64,
    /// Log of the observation channel-distortion term.
    pub d_o: f64,
    /// Log of the rate-weighted semantic channel-distortion term.
    pub d_s: f64,
    /// `ln P` bound (practical coding).
    pub p_log: f64,
}

/// Iterate of the successive convex approximation.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaState {
    pub channels: Vec<ChannelVars>,
    pub iteration: usize,
    /// Objective at this iterate.
    pub objective: f64,
}

impl ScaState {
    pub fn powers(&self) -> Vec<f64> {
        self.channels.iter().map(|c| c.power).collect()
    }

    pub fn rates(&self) -> Vec<f64> {
        self.channels.iter().map(|c| c.rate).collect()
    }

    /// State whose auxiliaries meet their defining constraints with equality.
    pub fn tight(config: &LinkConfig, model: &SourceModel, powers: &[f64], rates: &[f64], active: &[bool]) -> ScaState {
        let channels =
            (0..powers.len())
                .map(|k| {
                    if active[k] {
                        tight_channel(config, model, k, powers[k], rates[k])
                    } else {
                        ChannelVars::default()
                    }
                })
                .collect();
        let objective = super::objective::p4_objective(config, model, powers, rates);
        ScaState { channels, iteration: 0, objective }
    }
}

fn tight_channel(config: &LinkConfig, model: &SourceModel, k: usize, p: f64, r: f64) -> ChannelVars {
    let (lb, _, _) = design_log10_ber(config, k, p, r);
    let u_o = -model.obs.slope * (lb - model.obs.mid);
    let u_s = -model.sem.slope * (lb - model.sem.mid);
    ChannelVars {
        active: true,
        power: p,
        rate: r,
        r: r.log10(),
        rho_hat: lb,
        d_o: model.obs.span.ln() - softplus(u_o),
        d_s: (model.sem.span * r).ln() - softplus(u_s),
        p_log: p.ln(),
    }
}

/// Positions of one channel's variables in the flat vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarIndex {
    pub r: Option<usize>,
    pub rho_hat: Option<usize>,
    pub d_o: Option<usize>,
    pub d_s: Option<usize>,
    pub power: usize,
    pub rate: usize,
    pub p_log: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    /// `None` for dormant channels.
    pub slots: Vec<Option<VarIndex>>,
    pub dim: usize,
}

/// The constraint families of the subproblem, each `g(x) <= 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintKind {
    /// BER majorant (tail bound for random coding, linearization for
    /// practical coding) below `rho_hat`.
    BerBound(usize),
    /// Tangent of `log10 R` below `r`.
    LogRate(usize),
    /// Linearized observation-distortion bound.
    ObsDistortion(usize),
    /// Linearized semantic-distortion bound.
    SemDistortion(usize),
    /// `p <= ln P`.
    LogPower(usize),
    /// `R <= log2(1 + g P / sigma^2)`.
    Capacity(usize),
    RateFloor(usize),
    PowerFloor(usize),
    PowerBudget,
    RateSum,
}

/// Constants of the expansion for one channel.
#[derive(Debug, Clone, Copy)]
struct Expansion {
    gn: f64,
    rate0: f64,
    // random coding tail bound
    sqrt_l: f64,
    w_hat: f64,
    a_hat: f64,
    log10_q_hat: f64,
    // practical coding linearization
    lg: f64,
    p0: f64,
    e0: f64,
    // distortion linearizations: (A, B, d0, rho0)
    obs: (f64, f64, f64, f64),
    sem: (f64, f64, f64, f64),
}

/// One convex subproblem.
#[derive(Debug, Clone)]
pub struct SubproblemSpec {
    config: LinkConfig,
    model: SourceModel,
    layout: Layout,
    constraints: Vec<ConstraintKind>,
    expansions: Vec<Option<Expansion>>,
    expansion_state: ScaState,
    scale: f64,
    required_rate: f64,
}

/// Build the surrogate around `state`.
pub fn build_surrogate(state: &ScaState, config: &LinkConfig, model: &SourceModel) -> Result<SubproblemSpec> {
    if state.channels.len() != config.num_channels() {
        return Err(Error::invalid("state", "channel count does not match the configuration"));
    }
    let alpha = config.alpha;
    let practical = matches!(config.scheme, CodingScheme::Practical { .. });
    let has_r = alpha > 0.0;
    let has_do = alpha > 0.0 && model.obs.span > 0.0;
    let has_ds = alpha < 1.0 && model.sem.span > 0.0;
    let has_rho = has_do || has_ds;
    let has_p = has_rho && practical;

    let mut dim = 0;
    let mut next = |on: bool| {
        if on {
            dim += 1;
            Some(dim - 1)
        } else {
            None
        }
    };
    let mut slots = Vec::with_capacity(state.channels.len());
    for ch in &state.channels {
        if !ch.active {
            slots.push(None);
            continue;
        }
        if !(ch.power > 0.0 && ch.rate > 0.0) {
            return Err(Error::domain("active channels need positive power and rate"));
        }
        let r = next(has_r);
        let rho_hat = next(has_rho);
        let d_o = next(has_do);
        let d_s = next(has_ds);
        let power = next(true).unwrap();
        let rate = next(true).unwrap();
        let p_log = next(has_p);
        slots.push(Some(VarIndex { r, rho_hat, d_o, d_s, power, rate, p_log }));
    }
    if slots.iter().all(Option::is_none) {
        return Err(Error::Infeasible("no channel can carry data".into()));
    }

    let mut constraints = Vec::new();
    let mut expansions = Vec::with_capacity(slots.len());
    for (k, slot) in slots.iter().enumerate() {
        let Some(ix) = slot else {
            expansions.push(None);
            continue;
        };
        let ch = &state.channels[k];
        if ix.rho_hat.is_some() {
            constraints.push(ConstraintKind::BerBound(k));
        }
        if ix.r.is_some() {
            constraints.push(ConstraintKind::LogRate(k));
        }
        if ix.d_o.is_some() {
            constraints.push(ConstraintKind::ObsDistortion(k));
        }
        if ix.d_s.is_some() {
            constraints.push(ConstraintKind::SemDistortion(k));
        }
        if ix.p_log.is_some() {
            constraints.push(ConstraintKind::LogPower(k));
        }
        constraints.push(ConstraintKind::Capacity(k));
        constraints.push(ConstraintKind::RateFloor(k));
        constraints.push(ConstraintKind::PowerFloor(k));

        let gn = config.channels[k].gnr();
        let mut e = Expansion {
            gn,
            rate0: ch.rate,
            sqrt_l: 0.0,
            w_hat: 0.0,
            a_hat: 0.0,
            log10_q_hat: 0.0,
            lg: 1.0,
            p0: ch.p_log,
            e0: 0.0,
            obs: (0.0, 0.0, 0.0, 0.0),
            sem: (0.0, 0.0, 0.0, 0.0),
        };
        match config.scheme {
            CodingScheme::Random { blocklength } => {
                e.sqrt_l = (blocklength as f64).sqrt();
                e.w_hat = e.sqrt_l * ((gn * ch.power).ln_1p() - ch.rate * LN_2);
                e.a_hat = numerics::a_hat(e.w_hat);
                e.log10_q_hat = numerics::log10_q_function(e.w_hat);
            }
            CodingScheme::Practical { mod_order, coeffs, .. } => {
                e.lg = (mod_order as f64).log2();
                e.e0 = (ch.p_log + coeffs.lam1 * ch.rate / e.lg + coeffs.lam2).exp();
            }
        }
        let lin = |slope: f64, mid: f64, d0: f64| {
            let u = -slope * (ch.rho_hat - mid);
            ((d0 + u).exp(), d0.exp(), d0, ch.rho_hat)
        };
        if has_do {
            e.obs = lin(model.obs.slope, model.obs.mid, ch.d_o);
        }
        if has_ds {
            e.sem = lin(model.sem.slope, model.sem.mid, ch.d_s);
        }
        expansions.push(Some(e));
    }
    constraints.push(ConstraintKind::PowerBudget);
    constraints.push(ConstraintKind::RateSum);

    Ok(SubproblemSpec {
        config: config.clone(),
        model: model.clone(),
        layout: Layout { slots, dim },
        constraints,
        expansions,
        expansion_state: state.clone(),
        scale: objective_scale(config, model),
        required_rate: config.required_rate_sum(model),
    })
}

impl SubproblemSpec {
    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn constraints(&self) -> &[ConstraintKind] {
        &self.constraints
    }

    pub fn expansion_state(&self) -> &ScaState {
        &self.expansion_state
    }

    pub fn config(&self) -> &LinkConfig {
        &self.config
    }

    pub fn model(&self) -> &SourceModel {
        &self.model
    }

    /// Flatten the optimized variables of `state`.
    pub fn pack(&self, state: &ScaState) -> Vec<f64> {
        let mut x = vec![0.0; self.layout.dim];
        for (k, slot) in self.layout.slots.iter().enumerate() {
            if let Some(ix) = slot {
                let c = &state.channels[k];
                put(&mut x, ix.r, c.r);
                put(&mut x, ix.rho_hat, c.rho_hat);
                put(&mut x, ix.d_o, c.d_o);
                put(&mut x, ix.d_s, c.d_s);
                x[ix.power] = c.power;
                x[ix.rate] = c.rate;
                put(&mut x, ix.p_log, c.p_log);
            }
        }
        x
    }

    /// Inverse of [`pack`](Self::pack); variables left out of the layout are
    /// set to their tight values.
    pub fn unpack(&self, x: &[f64]) -> ScaState {
        let mut out = self.expansion_state.clone();
        for (k, slot) in self.layout.slots.iter().enumerate() {
            if let Some(ix) = slot {
                let mut c = tight_channel(&self.config, &self.model, k, x[ix.power], x[ix.rate]);
                get(x, ix.r, &mut c.r);
                get(x, ix.rho_hat, &mut c.rho_hat);
                get(x, ix.d_o, &mut c.d_o);
                get(x, ix.d_s, &mut c.d_s);
                get(x, ix.p_log, &mut c.p_log);
                out.channels[k] = c;
            }
        }
        out.objective = self.objective(x, false).value;
        out
    }

    /// Point built from the powers and rates of `state` with every auxiliary
    /// placed just inside its constraint. `None` unless every power and rate
    /// constraint has at least `MIN_START_SLACK` of slack there.
    pub fn strict_start(&self, state: &ScaState) -> Option<Vec<f64>> {
        let mut x = vec![0.0; self.layout.dim];
        for (k, slot) in self.layout.slots.iter().enumerate() {
            let Some(ix) = slot else { continue };
            let c = &state.channels[k];
            x[ix.power] = c.power;
            x[ix.rate] = c.rate;
        }
        // auxiliaries in dependency order: p, then rho_hat, then r, d_o, d_s
        for (k, slot) in self.layout.slots.iter().enumerate() {
            let Some(ix) = slot else { continue };
            if let Some(i) = ix.p_log {
                x[i] = x[ix.power].ln() - 1e-6;
            }
            if let Some(i) = ix.rho_hat {
                x[i] = 0.0;
                let u = self.ber_majorant(k, &x);
                x[i] = u + 1e-6 * (1.0 + u.abs());
            }
            if let Some(i) = ix.r {
                x[i] = 0.0;
                let u = self.log_rate_tangent(k, &x);
                x[i] = u + 1e-6 * (1.0 + u.abs());
            }
            for (slot_d, which) in [(ix.d_o, Curve::Obs), (ix.d_s, Curve::Sem)] {
                if let Some(i) = slot_d {
                    // the distortion bound is affine in d with slope -(A + B)
                    x[i] = 0.0;
                    let (a, b, _, _) = self.curve_expansion(k, which);
                    let at_zero = self.distortion_bound(k, which, &x);
                    let margin = 1e-6 * self.curve_span(which) * if which == Curve::Sem { x[ix.rate] } else { 1.0 };
                    x[i] = (at_zero + margin) / (a + b);
                }
            }
        }
        // Slack at rounding level pins the barrier: its gradient is ~1/slack
        // and Newton steps cannot resolve the distance to the boundary. The
        // auxiliaries above carry relative margins already.
        for (j, kind) in self.constraints.iter().enumerate() {
            let v = self.constraint(j, &x, false).value;
            let need = match kind {
                ConstraintKind::Capacity(_)
                | ConstraintKind::RateFloor(_)
                | ConstraintKind::PowerFloor(_)
                | ConstraintKind::PowerBudget
                | ConstraintKind::RateSum => MIN_START_SLACK,
                _ => 0.0,
            };
            if !(v < -need) {
                return None;
            }
        }
        if !self.objective(&x, false).value.is_finite() {
            return None;
        }
        Some(x)
    }

    /// `(surrogate, original)` left-hand sides of constraint `j` when it is
    /// one of the linearized families; `None` for constraints kept exact.
    pub fn surrogate_pair(&self, j: usize, x: &[f64]) -> Option<(f64, f64)> {
        match self.constraints[j] {
            ConstraintKind::BerBound(k) => {
                let ix = self.ix(k);
                let (p, r) = (x[ix.power], x[ix.rate]);
                let original = match self.config.scheme {
                    CodingScheme::Random { .. } => design_log10_ber(&self.config, k, p, r).0,
                    CodingScheme::Practical { coeffs, .. } => {
                        let e = self.exp(k);
                        -e.gn * (x[ix.p_log.unwrap()] + coeffs.lam1 * r / e.lg + coeffs.lam2).exp()
                            + coeffs.mu1 * r / e.lg
                            + coeffs.mu2
                    }
                };
                Some((self.ber_majorant(k, x), original))
            }
            ConstraintKind::LogRate(k) => Some((self.log_rate_tangent(k, x), x[self.ix(k).rate].log10())),
            ConstraintKind::ObsDistortion(k) => {
                Some((self.distortion_bound(k, Curve::Obs, x), self.distortion_original(k, Curve::Obs, x)))
            }
            ConstraintKind::SemDistortion(k) => {
                Some((self.distortion_bound(k, Curve::Sem, x), self.distortion_original(k, Curve::Sem, x)))
            }
            _ => None,
        }
    }

    fn ix(&self, k: usize) -> VarIndex {
        self.layout.slots[k].expect("constraint on a dormant channel")
    }

    fn exp(&self, k: usize) -> &Expansion {
        self.expansions[k].as_ref().expect("constraint on a dormant channel")
    }

    fn curve_expansion(&self, k: usize, which: Curve) -> (f64, f64, f64, f64) {
        match which {
            Curve::Obs => self.exp(k).obs,
            Curve::Sem => self.exp(k).sem,
        }
    }

    fn curve_span(&self, which: Curve) -> f64 {
        match which {
            Curve::Obs => self.model.obs.span,
            Curve::Sem => self.model.sem.span,
        }
    }

    fn curve_slope_mid(&self, which: Curve) -> (f64, f64) {
        match which {
            Curve::Obs => (self.model.obs.slope, self.model.obs.mid),
            Curve::Sem => (self.model.sem.slope, self.model.sem.mid),
        }
    }

    /// Majorant of `log10 BER` as a function of the decision variables.
    fn ber_majorant(&self, k: usize, x: &[f64]) -> f64 {
        let ix = self.ix(k);
        let e = self.exp(k);
        let (p, r) = (x[ix.power], x[ix.rate]);
        match self.config.scheme {
            CodingScheme::Random { blocklength } => {
                let w = e.sqrt_l * ((e.gn * p).ln_1p() - r * LN_2);
                -e.a_hat * LOG10_E * (w - e.w_hat) - (r * blocklength as f64).log10() + e.log10_q_hat
            }
            CodingScheme::Practical { coeffs, .. } => {
                let pl = x[ix.p_log.unwrap()];
                -e.gn * e.e0 * (pl - e.p0 + coeffs.lam1 * (r - e.rate0) / e.lg + 1.0)
                    + coeffs.mu1 * r / e.lg
                    + coeffs.mu2
            }
        }
    }

    fn log_rate_tangent(&self, k: usize, x: &[f64]) -> f64 {
        let r0 = self.exp(k).rate0;
        (x[self.ix(k).rate] - r0) / (r0 * LN_10) + r0.log10()
    }

    fn distortion_bound(&self, k: usize, which: Curve, x: &[f64]) -> f64 {
        let ix = self.ix(k);
        let (a, b, d0, rho0) = self.curve_expansion(k, which);
        let (slope, _) = self.curve_slope_mid(which);
        let d = x[match which {
            Curve::Obs => ix.d_o,
            Curve::Sem => ix.d_s,
        }
        .unwrap()];
        let rho = x[ix.rho_hat.unwrap()];
        let top = match which {
            Curve::Obs => self.model.obs.span,
            Curve::Sem => self.model.sem.span * x[ix.rate],
        };
        -a * (d - d0 - slope * (rho - rho0) + 1.0) - b * (d - d0 + 1.0) + top
    }

    fn distortion_original(&self, k: usize, which: Curve, x: &[f64]) -> f64 {
        let ix = self.ix(k);
        let (slope, mid) = self.curve_slope_mid(which);
        let d = x[match which {
            Curve::Obs => ix.d_o,
            Curve::Sem => ix.d_s,
        }
        .unwrap()];
        let rho = x[ix.rho_hat.unwrap()];
        let top = match which {
            Curve::Obs => self.model.obs.span,
            Curve::Sem => self.model.sem.span * x[ix.rate],
        };
        -(d - slope * (rho - mid)).exp() - d.exp() + top
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Curve {
    Obs,
    Sem,
}

fn put(x: &mut [f64], i: Option<usize>, v: f64) {
    if let Some(i) = i {
        x[i] = v;
    }
}

fn get(x: &[f64], i: Option<usize>, v: &mut f64) {
    if let Some(i) = i {
        *v = x[i];
    }
}

impl SmoothProgram for SubproblemSpec {
    fn dim(&self) -> usize {
        self.layout.dim
    }

    fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    fn objective(&self, x: &[f64], derivs: bool) -> Eval {
        let alpha = self.config.alpha;
        let c = self.scale;
        let mut out = Eval::default();
        for slot in self.layout.slots.iter().flatten() {
            let rate = x[slot.rate];
            // semantic part: (1 - alpha) (base R + e^{d_s})
            if alpha < 1.0 {
                let w = c * (1.0 - alpha);
                out.value += w * self.model.sem.base * rate;
                if derivs {
                    out.grad.push((slot.rate, w * self.model.sem.base));
                }
                if let Some(i) = slot.d_s {
                    let ed = x[i].exp();
                    out.value += w * ed;
                    if derivs {
                        out.grad.push((i, w * ed));
                        out.hess.push((i, i, w * ed));
                    }
                }
            }
            // observation part: alpha 10^{r + e^{d_o} + base}
            if let Some(ir) = slot.r {
                let w = c * alpha;
                match slot.d_o {
                    Some(id) => {
                        let ed = x[id].exp();
                        let h = 10f64.powf(x[ir] + ed + self.model.obs.base);
                        out.value += w * h;
                        if derivs {
                            out.grad.push((ir, w * LN_10 * h));
                            out.grad.push((id, w * LN_10 * h * ed));
                            let (lo, hi) = if ir < id { (ir, id) } else { (id, ir) };
                            out.hess.push((ir, ir, w * LN_10 * LN_10 * h));
                            out.hess.push((lo, hi, w * LN_10 * LN_10 * h * ed));
                            out.hess.push((id, id, w * LN_10 * h * ed * (LN_10 * ed + 1.0)));
                        }
                    }
                    None => {
                        let h = 10f64.powf(x[ir] + self.model.obs.base);
                        out.value += w * h;
                        if derivs {
                            out.grad.push((ir, w * LN_10 * h));
                            out.hess.push((ir, ir, w * LN_10 * LN_10 * h));
                        }
                    }
                }
            }
        }
        out
    }

    fn constraint(&self, j: usize, x: &[f64], derivs: bool) -> Eval {
        let mut out = Eval::default();
        match self.constraints[j] {
            ConstraintKind::BerBound(k) => {
                let ix = self.ix(k);
                let irho = ix.rho_hat.unwrap();
                out.value = self.ber_majorant(k, x) - x[irho];
                if derivs {
                    let e = self.exp(k);
                    out.grad.push((irho, -1.0));
                    match self.config.scheme {
                        CodingScheme::Random { .. } => {
                            let (p, r) = (x[ix.power], x[ix.rate]);
                            let q = e.gn / (1.0 + e.gn * p);
                            let coef = e.a_hat * LOG10_E * e.sqrt_l;
                            out.grad.push((ix.power, -coef * q));
                            out.grad.push((ix.rate, coef * LN_2 - 1.0 / (r * LN_10)));
                            out.hess.push((ix.power, ix.power, coef * q * q));
                            out.hess.push((ix.rate, ix.rate, 1.0 / (r * r * LN_10)));
                        }
                        CodingScheme::Practical { coeffs, .. } => {
                            let s = e.gn * e.e0;
                            out.grad.push((ix.p_log.unwrap(), -s));
                            out.grad.push((ix.rate, (-s * coeffs.lam1 + coeffs.mu1) / e.lg));
                        }
                    }
                }
            }
            ConstraintKind::LogRate(k) => {
                let ix = self.ix(k);
                let ir = ix.r.unwrap();
                out.value = self.log_rate_tangent(k, x) - x[ir];
                if derivs {
                    out.grad.push((ix.rate, 1.0 / (self.exp(k).rate0 * LN_10)));
                    out.grad.push((ir, -1.0));
                }
            }
            ConstraintKind::ObsDistortion(k) | ConstraintKind::SemDistortion(k) => {
                let which = if matches!(self.constraints[j], ConstraintKind::ObsDistortion(_)) {
                    Curve::Obs
                } else {
                    Curve::Sem
                };
                out.value = self.distortion_bound(k, which, x);
                if derivs {
                    let ix = self.ix(k);
                    let (a, b, _, _) = self.curve_expansion(k, which);
                    let (slope, _) = self.curve_slope_mid(which);
                    let id = match which {
                        Curve::Obs => ix.d_o,
                        Curve::Sem => ix.d_s,
                    }
                    .unwrap();
                    out.grad.push((id, -a - b));
                    out.grad.push((ix.rho_hat.unwrap(), a * slope));
                    if which == Curve::Sem {
                        out.grad.push((ix.rate, self.model.sem.span));
                    }
                }
            }
            ConstraintKind::LogPower(k) => {
                let ix = self.ix(k);
                let ip = ix.p_log.unwrap();
                let p = x[ix.power];
                out.value = x[ip] - p.ln();
                if derivs {
                    out.grad.push((ip, 1.0));
                    out.grad.push((ix.power, -1.0 / p));
                    out.hess.push((ix.power, ix.power, 1.0 / (p * p)));
                }
            }
            ConstraintKind::Capacity(k) => {
                let ix = self.ix(k);
                let gn = self.exp(k).gn;
                let p = x[ix.power];
                out.value = x[ix.rate] - (gn * p).ln_1p() / LN_2;
                if derivs {
                    let q = gn / (1.0 + gn * p);
                    out.grad.push((ix.rate, 1.0));
                    out.grad.push((ix.power, -q / LN_2));
                    out.hess.push((ix.power, ix.power, q * q / LN_2));
                }
            }
            ConstraintKind::RateFloor(k) => {
                let i = self.ix(k).rate;
                out.value = R_MIN - x[i];
                if derivs {
                    out.grad.push((i, -1.0));
                }
            }
            ConstraintKind::PowerFloor(k) => {
                let i = self.ix(k).power;
                out.value = P_MIN - x[i];
                if derivs {
                    out.grad.push((i, -1.0));
                }
            }
            ConstraintKind::PowerBudget => {
                let mut s = numerics::CompensatedSum::default();
                for ix in self.layout.slots.iter().flatten() {
                    s.add(x[ix.power]);
                    if derivs {
                        out.grad.push((ix.power, 1.0));
                    }
                }
                s.add(-self.config.p_max);
                out.value = s.value();
            }
            ConstraintKind::RateSum => {
                let mut s = numerics::CompensatedSum::default();
                s.add(self.required_rate);
                for ix in self.layout.slots.iter().flatten() {
                    s.add(-x[ix.rate]);
                    if derivs {
                        out.grad.push((ix.rate, -1.0));
                    }
                }
                out.value = s.value();
            }
        }
        out
    }
}
