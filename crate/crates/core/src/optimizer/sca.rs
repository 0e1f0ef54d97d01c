//! Successive convex approximation over the allocation problem.

use std::f64::consts::LN_2;

use nalgebra::{DMatrix, DVector};

use super::barrier::{solve_barrier, BarrierOptions, BarrierSolution, BarrierStatus};
use super::init::init_feasible;
use super::objective::{p4_gradient, p4_objective};
use super::report::build_allocation;
use super::surrogate::{build_surrogate, ConstraintKind, ScaState, SubproblemSpec};
use super::{P_MIN, R_MIN};
use crate::error::{Error, Result};
use crate::models::{Allocation, LinkConfig, SourceModel};
use crate::numerics::capacity;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaOptions {
    /// Stop once the fractional objective decrease falls below this.
    pub epsilon: f64,
    /// The decrease rule alone can fire in a flat tail while the iterate is
    /// still moving; convergence also needs the reduced KKT residual below this.
    pub kkt_tol: f64,
    pub max_iterations: usize,
    /// Stretch each step along its direction while the objective falls.
    pub extrapolate: bool,
    pub barrier: BarrierOptions,
}

impl Default for ScaOptions {
    fn default() -> Self {
        ScaOptions {
            epsilon: 1e-4,
            kkt_tol: 1e-5,
            max_iterations: 100,
            extrapolate: true,
            barrier: BarrierOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Converged,
    IterationCap,
    Infeasible,
    /// A subproblem solve ended above the value at its own expansion point;
    /// the last accepted iterate is returned.
    Stalled,
}

impl SolveStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolveStatus::Converged => "converged",
            SolveStatus::IterationCap => "iteration-cap",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::Stalled => "stalled",
        }
    }
}

/// Multipliers of the constraints that the surrogate keeps exact, which are
/// also the constraints of the reduced `(P, R)` problem.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReducedMultipliers {
    pub capacity: Vec<f64>,
    pub rate_floor: Vec<f64>,
    pub power_floor: Vec<f64>,
    pub power_budget: f64,
    pub rate_sum: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub allocation: Allocation,
    /// Number of convex subproblems solved.
    pub iterations: usize,
    /// Initial objective followed by the optimal value of every subproblem.
    pub objective_trace: Vec<f64>,
    /// Objective of the original problem at every accepted iterate.
    pub original_trace: Vec<f64>,
    /// Lagrangian stationarity reported by the last inner solve.
    pub kkt_residual: f64,
    /// Stationarity of the original problem at the returned point, using the
    /// last subproblem's multipliers or their least-squares refit.
    pub original_kkt_residual: f64,
    pub status: SolveStatus,
    pub state: ScaState,
    pub multipliers: ReducedMultipliers,
}

/// Result of one convex subproblem.
#[derive(Debug, Clone, PartialEq)]
pub struct SubproblemSolution {
    pub state: ScaState,
    pub barrier: BarrierSolution,
}

/// Solve `spec` starting from the powers and rates of `start`, which must be
/// strictly feasible.
pub fn solve_convex_subproblem(
    spec: &SubproblemSpec,
    start: &ScaState,
    opts: &BarrierOptions,
) -> Result<SubproblemSolution> {
    let x0 =
        spec.strict_start(start).ok_or_else(|| Error::domain("start is not strictly feasible for the subproblem"))?;
    let barrier = solve_barrier(spec, &x0, opts)?;
    let state = spec.unpack(&barrier.x);
    Ok(SubproblemSolution { state, barrier })
}

/// Shrink `(P, R)` slightly toward the interior so that every exact
/// constraint is strictly slack.
pub fn interior_anchor(state: &ScaState) -> ScaState {
    let mut s = state.clone();
    for c in s.channels.iter_mut().filter(|c| c.active) {
        c.power *= 1.0 - 1e-4;
        c.rate *= 1.0 + 1e-4;
    }
    s
}

/// First point on the segment from `state` toward `anchor` at which `spec`
/// admits a strictly feasible start.
pub fn subproblem_start(spec: &SubproblemSpec, state: &ScaState, anchor: &ScaState) -> Result<ScaState> {
    [0.0, 1e-6, 1e-4, 1e-2, 0.1, 0.5, 1.0]
        .iter()
        .map(|&theta| blend(state, anchor, theta))
        .find(|s| spec.strict_start(s).is_some())
        .ok_or_else(|| Error::domain("could not find a strictly feasible subproblem start"))
}

fn blend(a: &ScaState, b: &ScaState, theta: f64) -> ScaState {
    let mut s = a.clone();
    for (c, d) in s.channels.iter_mut().zip(&b.channels) {
        if c.active {
            c.power = (1.0 - theta) * c.power + theta * d.power;
            c.rate = (1.0 - theta) * c.rate + theta * d.rate;
        }
    }
    s
}

fn reduced_multipliers(spec: &SubproblemSpec, lambda: &[f64], k: usize) -> ReducedMultipliers {
    let mut m = ReducedMultipliers {
        capacity: vec![0.0; k],
        rate_floor: vec![0.0; k],
        power_floor: vec![0.0; k],
        ..Default::default()
    };
    for (kind, &l) in spec.constraints().iter().zip(lambda) {
        match *kind {
            ConstraintKind::Capacity(i) => m.capacity[i] = l,
            ConstraintKind::RateFloor(i) => m.rate_floor[i] = l,
            ConstraintKind::PowerFloor(i) => m.power_floor[i] = l,
            ConstraintKind::PowerBudget => m.power_budget = l,
            ConstraintKind::RateSum => m.rate_sum = l,
            _ => {}
        }
    }
    m
}

/// Infinity norm of the Lagrangian gradient of the reduced problem over the
/// active channels.
pub fn original_kkt_residual(
    config: &LinkConfig,
    model: &SourceModel,
    state: &ScaState,
    mult: &ReducedMultipliers,
) -> f64 {
    let powers = state.powers();
    let rates = state.rates();
    let (gp, gr) = p4_gradient(config, model, &powers, &rates);
    let mut worst: f64 = 0.0;
    for (k, ch) in state.channels.iter().enumerate() {
        if !ch.active {
            continue;
        }
        let gn = config.channels[k].gnr();
        let dcap_dp = -gn / ((1.0 + gn * powers[k]) * LN_2);
        let rp = gp[k] + mult.capacity[k] * dcap_dp - mult.power_floor[k] + mult.power_budget;
        let rr = gr[k] + mult.capacity[k] - mult.rate_floor[k] - mult.rate_sum;
        worst = worst.max(rp.abs()).max(rr.abs());
    }
    worst
}

/// Multipliers for the reduced problem refitted at `state` by least squares
/// over the constraints `mult` binds, dropping any that come out negative.
/// The surrogate gradient matches the original one only up to the
/// auxiliary margins, and at a vertex of the feasible set that small
/// mismatch lands entirely in the residual unless the multipliers absorb it.
/// Returns whichever of `mult` and the refit leaves the smaller residual.
pub fn refit_reduced_multipliers(
    config: &LinkConfig,
    model: &SourceModel,
    state: &ScaState,
    mult: &ReducedMultipliers,
) -> ReducedMultipliers {
    let k = state.channels.len();
    let powers = state.powers();
    let rates = state.rates();
    let (gp, gr) = p4_gradient(config, model, &powers, &rates);
    let chans: Vec<usize> = (0..k).filter(|&i| state.channels[i].active).collect();
    let n = 2 * chans.len();
    // (constraint, gradient over [p of chans, r of chans])
    let mut cols: Vec<(Slot, Vec<f64>)> = Vec::new();
    for (c, &i) in chans.iter().enumerate() {
        let gn = config.channels[i].gnr();
        let mut g = vec![0.0; n];
        g[c] = -gn / ((1.0 + gn * powers[i]) * LN_2);
        g[chans.len() + c] = 1.0;
        cols.push((Slot::Capacity(i), g));
        let mut g = vec![0.0; n];
        g[chans.len() + c] = -1.0;
        cols.push((Slot::RateFloor(i), g));
        let mut g = vec![0.0; n];
        g[c] = -1.0;
        cols.push((Slot::PowerFloor(i), g));
    }
    let mut g = vec![0.0; n];
    g[..chans.len()].fill(1.0);
    cols.push((Slot::PowerBudget, g));
    let mut g = vec![0.0; n];
    g[chans.len()..].fill(-1.0);
    cols.push((Slot::RateSum, g));

    let value = |s: Slot, m: &ReducedMultipliers| match s {
        Slot::Capacity(i) => m.capacity[i],
        Slot::RateFloor(i) => m.rate_floor[i],
        Slot::PowerFloor(i) => m.power_floor[i],
        Slot::PowerBudget => m.power_budget,
        Slot::RateSum => m.rate_sum,
    };
    let top = cols.iter().fold(0.0f64, |a, (s, _)| a.max(value(*s, mult)));
    if !(top > 0.0) || n == 0 {
        return mult.clone();
    }
    let mut rhs = DVector::zeros(n);
    for (c, &i) in chans.iter().enumerate() {
        rhs[c] = -gp[i];
        rhs[chans.len() + c] = -gr[i];
    }
    let mut set: Vec<usize> = (0..cols.len()).filter(|&j| value(cols[j].0, mult) >= 1e-6 * top).collect();
    let base = original_kkt_residual(config, model, state, mult);
    while !set.is_empty() {
        let jac = DMatrix::from_fn(n, set.len(), |i, c| cols[set[c]].1[i]);
        let Ok(mu) = jac.svd(true, true).solve(&rhs, 1e-14) else {
            break;
        };
        let (worst, low) = mu.iter().enumerate().fold((0, 0.0), |acc, (c, &v)| if v < acc.1 { (c, v) } else { acc });
        if low < 0.0 {
            set.remove(worst);
            continue;
        }
        let mut m = ReducedMultipliers {
            capacity: vec![0.0; k],
            rate_floor: vec![0.0; k],
            power_floor: vec![0.0; k],
            ..Default::default()
        };
        for (c, &j) in set.iter().enumerate() {
            match cols[j].0 {
                Slot::Capacity(i) => m.capacity[i] = mu[c],
                Slot::RateFloor(i) => m.rate_floor[i] = mu[c],
                Slot::PowerFloor(i) => m.power_floor[i] = mu[c],
                Slot::PowerBudget => m.power_budget = mu[c],
                Slot::RateSum => m.rate_sum = mu[c],
            }
        }
        if original_kkt_residual(config, model, state, &m) < base {
            return m;
        }
        break;
    }
    mult.clone()
}

#[derive(Debug, Clone, Copy)]
enum Slot {
    Capacity(usize),
    RateFloor(usize),
    PowerFloor(usize),
    PowerBudget,
    RateSum,
}

/// Longest extrapolation tried, as a multiple of the surrogate step.
const MAX_STRETCH: f64 = 1e6;

fn reduced_feasible(config: &LinkConfig, model: &SourceModel, powers: &[f64], rates: &[f64], active: &[bool]) -> bool {
    let slack = 1e-12;
    let p_sum: f64 = powers.iter().sum();
    let r_sum: f64 = rates.iter().sum();
    if p_sum > config.p_max * (1.0 + slack) || r_sum < config.required_rate_sum(model) * (1.0 - slack) {
        return false;
    }
    (0..powers.len()).filter(|&k| active[k]).all(|k| {
        powers[k] >= P_MIN
            && rates[k] >= R_MIN
            && capacity(config.snr_at(k, powers[k])).is_ok_and(|c| rates[k] <= c)
    })
}

type Point = (Vec<f64>, Vec<f64>);

/// Double `gamma` along the path `at` while the point stays feasible and the
/// objective keeps falling; a walk cut short by the feasible set finishes on
/// its boundary.
fn walk(config: &LinkConfig, model: &SourceModel, active: &[bool], at: impl Fn(f64) -> Point) -> (f64, Point) {
    let mut best = at(1.0);
    let mut best_value = p4_objective(config, model, &best.0, &best.1);
    let mut good = 1.0;
    let mut gamma = 2.0;
    while gamma <= MAX_STRETCH {
        let (p, r) = at(gamma);
        if !reduced_feasible(config, model, &p, &r, active) {
            let mut bad = gamma;
            for _ in 0..60 {
                let mid = 0.5 * (good + bad);
                let (p, r) = at(mid);
                if reduced_feasible(config, model, &p, &r, active) {
                    good = mid;
                } else {
                    bad = mid;
                }
            }
            let (p, r) = at(good);
            let value = p4_objective(config, model, &p, &r);
            if value < best_value {
                best = (p, r);
                best_value = value;
            }
            break;
        }
        let value = p4_objective(config, model, &p, &r);
        if !(value < best_value) {
            break;
        }
        best = (p, r);
        best_value = value;
        good = gamma;
        gamma *= 2.0;
    }
    (best_value, best)
}

/// Walk further along the step from `from` to `to`.
///
/// Along directions where the objective is nearly flat the surrogate's own
/// curvature caps every step, and plain iteration creeps.
fn extrapolate(config: &LinkConfig, model: &SourceModel, from: &ScaState, to: &ScaState) -> Point {
    let active: Vec<bool> = to.channels.iter().map(|c| c.active).collect();
    let (p0, r0) = (from.powers(), from.rates());
    let (p1, r1) = (to.powers(), to.rates());
    let line = |a: &[f64], b: &[f64], g: f64| -> Vec<f64> {
        (0..a.len()).map(|k| if active[k] { a[k] + g * (b[k] - a[k]) } else { 0.0 }).collect()
    };
    walk(config, model, &active, |g| (line(&p0, &p1, g), line(&r0, &r1, g))).1
}

/// Lower the rates onto the required sum when that does not raise the objective.
fn polish_rate_sum(config: &LinkConfig, model: &SourceModel, state: &ScaState) -> ScaState {
    let target = config.required_rate_sum(model);
    let active: Vec<bool> = state.channels.iter().map(|c| c.active).collect();
    let rates = state.rates();
    let powers = state.powers();
    let sum: f64 = rates.iter().sum();
    let n = active.iter().filter(|&&a| a).count() as f64;
    if !(sum > target) || !(target > n * R_MIN) {
        return state.clone();
    }
    let s = (target - n * R_MIN) / (sum - n * R_MIN);
    let new_rates: Vec<f64> =
        rates.iter().zip(&active).map(|(&r, &a)| if a { R_MIN + s * (r - R_MIN) } else { 0.0 }).collect();
    let before = p4_objective(config, model, &powers, &rates);
    let after = p4_objective(config, model, &powers, &new_rates);
    if after <= before {
        let mut out = ScaState::tight(config, model, &powers, &new_rates, &active);
        out.iteration = state.iteration;
        out
    } else {
        state.clone()
    }
}

/// Run the approximation from the initializer until the fractional decrease
/// falls below `epsilon`.
pub fn sca_solve(config: &LinkConfig, model: &SourceModel) -> Result<SolveReport> {
    sca_solve_with(config, model, &ScaOptions::default())
}

pub fn sca_solve_with(config: &LinkConfig, model: &SourceModel, opts: &ScaOptions) -> Result<SolveReport> {
    let init = init_feasible(config, model)?;
    let anchor = interior_anchor(&init);
    let k = config.num_channels();

    let mut state = init;
    let mut objective_trace = vec![state.objective];
    let mut original_trace = vec![state.objective];
    let mut status = SolveStatus::IterationCap;
    let mut last: Option<(SubproblemSpec, BarrierSolution)> = None;

    for it in 1..=opts.max_iterations {
        let spec = build_surrogate(&state, config, model)?;
        let start = subproblem_start(&spec, &state, &anchor)?;
        let sol = solve_convex_subproblem(&spec, &start, &opts.barrier)?;
        if sol.barrier.status == BarrierStatus::LineSearchStalled && sol.barrier.newton_steps == 0 {
            status = SolveStatus::Converged;
            break;
        }
        // the surrogate is tight at `state`, so ending above its value there
        // means the inner solve failed; never accept an ascent
        if sol.barrier.objective > state.objective + 1e-9 * state.objective.abs().max(1.0) {
            status = SolveStatus::Stalled;
            break;
        }
        let (powers, rates) = if opts.extrapolate {
            extrapolate(config, model, &state, &sol.state)
        } else {
            (sol.state.powers(), sol.state.rates())
        };
        let active: Vec<bool> = sol.state.channels.iter().map(|c| c.active).collect();
        let mut next = ScaState::tight(config, model, &powers, &rates, &active);
        next.iteration = it;

        let prev = *objective_trace.last().unwrap();
        objective_trace.push(sol.barrier.objective);
        original_trace.push(next.objective);
        let mult =
            refit_reduced_multipliers(config, model, &next, &reduced_multipliers(&spec, &sol.barrier.multipliers, k));
        let residual = original_kkt_residual(config, model, &next, &mult);
        state = next;
        last = Some((spec, sol.barrier));

        let decrease = (prev - objective_trace[it]) / prev.abs().max(f64::MIN_POSITIVE);
        if decrease < opts.epsilon && residual <= opts.kkt_tol {
            status = SolveStatus::Converged;
            break;
        }
    }

    let iterations = objective_trace.len() - 1;
    let state = polish_rate_sum(config, model, &state);
    let (kkt_residual, multipliers) = match &last {
        Some((spec, b)) => (
            b.stationarity,
            refit_reduced_multipliers(config, model, &state, &reduced_multipliers(spec, &b.multipliers, k)),
        ),
        None => (
            0.0,
            ReducedMultipliers {
                capacity: vec![0.0; k],
                rate_floor: vec![0.0; k],
                power_floor: vec![0.0; k],
                ..Default::default()
            },
        ),
    };
    let original_kkt_residual = original_kkt_residual(config, model, &state, &multipliers);
    let allocation = build_allocation(config, model, &state.powers(), &state.rates())?;
    Ok(SolveReport {
        allocation,
        iterations,
        objective_trace,
        original_trace,
        kkt_residual,
        original_kkt_residual,
        status,
        state,
        multipliers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ber;
    use crate::models::{ChannelSpec, CodingScheme, LogisticParams};
    use crate::optimizer::solve_single_channel;

    const GAINS: [f64; 8] = [2.0748, 1.5739, 1.2348, 0.6717, 0.5964, 0.3451, 0.1132, 0.1095];

    fn model(rs: f64) -> SourceModel {
        SourceModel {
            model_id: "m".into(),
            rate_rs: rs,
            bpp: 0.0,
            obs: LogisticParams::new(-2.5, 2.0, 1.5, -4.0),
            sem: LogisticParams::new(0.2, 0.7, 2.0, -3.5),
        }
    }

    fn config(gains: &[f64], p_max: f64, scheme: CodingScheme) -> LinkConfig {
        LinkConfig {
            channels: gains.iter().map(|&g| ChannelSpec::new(g, 1.0).unwrap()).collect(),
            p_max,
            l_max: 1000.0,
            m1_dim: 1000.0,
            alpha: 0.5,
            scheme,
        }
    }

    fn schemes() -> [CodingScheme; 2] {
        [CodingScheme::Random { blocklength: 256 }, ber::preset("polar256-qpsk").unwrap()]
    }

    #[test]
    fn first_subproblem_carries_a_certificate() {
        for scheme in schemes() {
            let c = config(&GAINS[..4], 2.0, scheme);
            let m = model(250.0);
            let init = init_feasible(&c, &m).unwrap();
            let spec = build_surrogate(&init, &c, &m).unwrap();
            let start = blend(&init, &interior_anchor(&init), 1e-2);
            let sol = solve_convex_subproblem(&spec, &start, &BarrierOptions::default()).unwrap();
            let b = &sol.barrier;
            assert_eq!(b.status, BarrierStatus::Converged);
            assert!(b.primal_infeasibility <= 1e-8);
            assert!(b.stationarity <= 1e-6, "{}", b.stationarity);
            assert!(b.complementarity <= 1e-6);
            let x0 = spec.strict_start(&start).unwrap();
            assert!(b.objective <= crate::optimizer::SmoothProgram::objective(&spec, &x0, false).value);
        }
    }

    #[test]
    fn descent_and_fixed_point() {
        for scheme in schemes() {
            for p_max in [1.0, 4.0] {
                let c = config(&GAINS[..4], p_max, scheme);
                let r = sca_solve(&c, &model(200.0)).unwrap();
                assert_eq!(r.status, SolveStatus::Converged);
                for w in r.objective_trace.windows(2) {
                    assert!(w[1] <= w[0] + 1e-7);
                }
                for w in r.original_trace.windows(2) {
                    assert!(w[1] <= w[0] + 1e-6);
                }
                assert!(r.original_kkt_residual <= 1e-5, "{}", r.original_kkt_residual);
                r.allocation.check_feasible(&c).unwrap();
            }
        }
    }

    #[test]
    fn one_channel_matches_the_closed_form() {
        let c = config(&[1.3], 1.5, CodingScheme::Random { blocklength: 256 });
        let m = model(300.0);
        let sca = sca_solve(&c, &m).unwrap();
        let closed = solve_single_channel(&c, &m).unwrap();
        let f = |a: &Allocation| p4_objective(&c, &m, &a.powers, &a.rates);
        assert!((f(&sca.allocation) - f(&closed)).abs() <= 1e-5 * f(&closed));
        assert!((sca.allocation.rates[0] - 0.3).abs() <= 1e-6);
    }

    #[test]
    fn random_coding_meets_the_rate_sum_and_spends_the_budget() {
        let c = config(&GAINS, 10.0, CodingScheme::Random { blocklength: 256 });
        let m = model(300.0);
        let r = sca_solve(&c, &m).unwrap();
        let target = c.required_rate_sum(&m);
        let sum: f64 = r.allocation.rates.iter().sum();
        assert!((sum - target).abs() <= 1e-6 * target);
        let p: f64 = r.allocation.powers.iter().sum();
        assert!(p >= c.p_max * (1.0 - 1e-4) && p <= c.p_max + 1e-8);
    }

    #[test]
    fn overloaded_link_is_infeasible() {
        let c = config(&GAINS, 1.0, CodingScheme::Random { blocklength: 256 });
        match sca_solve(&c, &model(300.0)) {
            Err(Error::Infeasible(msg)) => assert!(msg.contains("sum capacity")),
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn extrapolation_never_raises_the_objective() {
        let c = config(&GAINS[..4], 2.0, CodingScheme::Random { blocklength: 256 });
        let m = model(200.0);
        let init = init_feasible(&c, &m).unwrap();
        let spec = build_surrogate(&init, &c, &m).unwrap();
        let start = blend(&init, &interior_anchor(&init), 1e-2);
        let sol = solve_convex_subproblem(&spec, &start, &BarrierOptions::default()).unwrap();
        let (p, r) = extrapolate(&c, &m, &init, &sol.state);
        let active = vec![true; 4];
        assert!(reduced_feasible(&c, &m, &p, &r, &active));
        assert!(p4_objective(&c, &m, &p, &r) <= p4_objective(&c, &m, &sol.state.powers(), &sol.state.rates()));
    }
    #[test]
    fn vertex_optimum_is_certified_by_refitted_multipliers() {
        // the weak channel ends on its rate floor and its capacity at once,
        // so all four reduced constraints bind on two channels
        let mut c = config(&[0.05, 0.24312791521091365], 0.5, CodingScheme::Random { blocklength: 256 });
        c.alpha = 0.0;
        c.m1_dim = 3072.0;
        let r = sca_solve(&c, &model(8.2756)).unwrap();
        let a = &r.allocation;
        assert_eq!(r.status, SolveStatus::Converged);
        assert!((a.rates[0] - R_MIN).abs() <= 1e-9);
        assert!(r.multipliers.capacity[0] > 0.0 && r.multipliers.rate_floor[0] > 0.0);
        assert!(r.original_kkt_residual <= 1e-9, "{:e}", r.original_kkt_residual);
    }
}
