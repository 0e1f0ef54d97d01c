//! Primal log-barrier interior-point method for smooth convex programs
//! `min f(x) s.t. g_i(x) <= 0`.
//!
//! Each centering step minimizes `t f(x) - sum ln(-g_i(x))` by damped Newton
//! with a backtracking line search that never leaves the strict interior.
//! Derivatives are supplied sparsely, which keeps the per-constraint callbacks
//! small even though the Newton system itself is assembled densely.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Value and (optionally) sparse derivatives of a scalar function.
///
/// `hess` holds upper-triangle entries `(i, j, v)` with `i <= j`; repeated
/// entries are summed.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Eval {
    pub value: f64,
    pub grad: Vec<(usize, f64)>,
    pub hess: Vec<(usize, usize, f64)>,
}

impl Eval {
    pub fn value(value: f64) -> Self {
        Eval { value, ..Default::default() }
    }

    /// Dense gradient of length `n`.
    pub fn dense_grad(&self, n: usize) -> Vec<f64> {
        let mut g = vec![0.0; n];
        for &(i, v) in &self.grad {
            g[i] += v;
        }
        g
    }

    /// Dense symmetric Hessian, row-major `n * n`.
    pub fn dense_hess(&self, n: usize) -> Vec<f64> {
        let mut h = vec![0.0; n * n];
        for &(i, j, v) in &self.hess {
            h[i * n + j] += v;
            if i != j {
                h[j * n + i] += v;
            }
        }
        h
    }
}

/// A smooth convex program with inequality constraints `g_j(x) <= 0`.
pub trait SmoothProgram {
    fn dim(&self) -> usize;
    fn num_constraints(&self) -> usize;
    /// Objective; derivatives only when `derivs` is set.
    fn objective(&self, x: &[f64], derivs: bool) -> Eval;
    /// Constraint `j`; derivatives only when `derivs` is set.
    fn constraint(&self, j: usize, x: &[f64], derivs: bool) -> Eval;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierOptions {
    pub t0: f64,
    pub t_factor: f64,
    /// Stop once the duality-gap bound `m / t` falls below this.
    pub gap_tol: f64,
    /// Required Lagrangian stationarity at the final barrier parameter.
    pub kkt_tol: f64,
    pub max_newton_per_center: usize,
    pub max_newton_total: usize,
}

impl Default for BarrierOptions {
    fn default() -> Self {
        BarrierOptions {
            t0: 1.0,
            t_factor: 10.0,
            gap_tol: 1e-9,
            kkt_tol: 1e-6,
            max_newton_per_center: 200,
            max_newton_total: 4000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BarrierStatus {
    Converged,
    /// The line search could not make progress; the best iterate is returned.
    LineSearchStalled,
    IterationCap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BarrierSolution {
    pub x: Vec<f64>,
    /// Dual estimates `1 / (t (-g_j))`, replaced by a nonnegative least-squares
    /// refit on the binding set when that leaves a smaller residual.
    pub multipliers: Vec<f64>,
    pub objective: f64,
    /// Infinity norm of the Lagrangian gradient.
    pub stationarity: f64,
    /// Largest `lambda_j |g_j|`.
    pub complementarity: f64,
    /// Largest positive constraint value (zero for a strictly feasible point).
    pub primal_infeasibility: f64,
    pub t: f64,
    pub newton_steps: usize,
    pub status: BarrierStatus,
}

const LS_ALPHA: f64 = 0.3;
const LS_BETA: f64 = 0.6;
const REG_START: f64 = 1e-10;
const REG_CAP: f64 = 1e-2;

struct Point {
    x: Vec<f64>,
    f: f64,
    g: Vec<f64>,
}

fn evaluate_values<P: SmoothProgram + ?Sized>(prog: &P, x: &[f64]) -> Option<Point> {
    let f = prog.objective(x, false).value;
    if !f.is_finite() {
        return None;
    }
    let mut g = Vec::with_capacity(prog.num_constraints());
    for j in 0..prog.num_constraints() {
        let v = prog.constraint(j, x, false).value;
        if !(v < 0.0) {
            return None;
        }
        g.push(v);
    }
    Some(Point { x: x.to_vec(), f, g })
}

fn phi(t: f64, p: &Point) -> f64 {
    t * p.f - p.g.iter().map(|g| (-g).ln()).sum::<f64>()
}

/// Gradient and Hessian of the barrier function at `x`.
fn barrier_derivatives<P: SmoothProgram + ?Sized>(prog: &P, t: f64, x: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
    let n = prog.dim();
    let mut grad = DVector::zeros(n);
    let mut hess = DMatrix::zeros(n, n);
    let obj = prog.objective(x, true);
    for &(i, v) in &obj.grad {
        grad[i] += t * v;
    }
    for &(i, j, v) in &obj.hess {
        hess[(i, j)] += t * v;
        if i != j {
            hess[(j, i)] += t * v;
        }
    }
    for k in 0..prog.num_constraints() {
        let c = prog.constraint(k, x, true);
        let s = -c.value;
        for &(i, v) in &c.grad {
            grad[i] += v / s;
        }
        for &(i, vi) in &c.grad {
            for &(j, vj) in &c.grad {
                hess[(i, j)] += vi * vj / (s * s);
            }
        }
        for &(i, j, v) in &c.hess {
            hess[(i, j)] += v / s;
            if i != j {
                hess[(j, i)] += v / s;
            }
        }
    }
    (grad, hess)
}

/// Newton direction with Jacobi scaling and escalating diagonal regularization.
fn newton_direction(grad: &DVector<f64>, hess: &DMatrix<f64>) -> Option<DVector<f64>> {
    let n = grad.len();
    let scale: DVector<f64> = DVector::from_iterator(
        n,
        (0..n).map(|i| {
            let d = hess[(i, i)];
            if d > 0.0 && d.is_finite() {
                1.0 / d.sqrt()
            } else {
                1.0
            }
        }),
    );
    let mut scaled = hess.clone();
    for i in 0..n {
        for j in 0..n {
            scaled[(i, j)] *= scale[i] * scale[j];
        }
    }
    let rhs = -grad.component_mul(&scale);
    let mut delta = 0.0;
    loop {
        let mut m = scaled.clone();
        if delta > 0.0 {
            for i in 0..n {
                m[(i, i)] += delta;
            }
        }
        if let Some(chol) = m.cholesky() {
            let y = chol.solve(&rhs);
            if y.iter().all(|v| v.is_finite()) {
                return Some(y.component_mul(&scale));
            }
        }
        delta = if delta == 0.0 { REG_START } else { delta * 10.0 };
        if delta > REG_CAP {
            return None;
        }
    }
}

/// Solve `prog` from the strictly feasible point `x0`.
pub fn solve_barrier<P: SmoothProgram + ?Sized>(
    prog: &P,
    x0: &[f64],
    opts: &BarrierOptions,
) -> Result<BarrierSolution> {
    let n = prog.dim();
    let m = prog.num_constraints();
    if x0.len() != n {
        return Err(Error::invalid("start", format!("expected {n} variables, got {}", x0.len())));
    }
    let mut cur = evaluate_values(prog, x0).ok_or_else(|| Error::domain("starting point is not strictly feasible"))?;

    let mut t = if m == 0 { 1.0 } else { opts.t0 };
    let mut steps = 0usize;
    let mut status = BarrierStatus::Converged;

    'outer: loop {
        let final_stage = m == 0 || (m as f64) / t < opts.gap_tol;
        let mut inner = 0usize;
        loop {
            let (grad, hess) = barrier_derivatives(prog, t, &cur.x);
            let grad_norm = grad.amax() / t;
            let Some(dir) = newton_direction(&grad, &hess) else {
                status = BarrierStatus::LineSearchStalled;
                break 'outer;
            };
            let slope = grad.dot(&dir);
            let decrement_sq = -slope;
            if decrement_sq <= 1e-12 && (!final_stage || grad_norm <= 0.1 * opts.kkt_tol) {
                break;
            }
            // Near an active nonlinear constraint the slack carries rounding
            // error of order eps / slack, which floors the reachable gradient.
            if final_stage && decrement_sq <= 1e-9 && grad_norm <= opts.kkt_tol {
                break;
            }
            // The same floor hits 1 / (t |g_j|) for constraints with tiny slack;
            // refitted multipliers can still certify the point.
            if final_stage && decrement_sq <= 1e-9 {
                let lambda: Vec<f64> = cur.g.iter().map(|g| 1.0 / (t * (-g))).collect();
                if refined_multipliers(prog, &cur.x, &lambda).is_some_and(|(_, r)| r <= opts.kkt_tol) {
                    break;
                }
            }
            if inner >= opts.max_newton_per_center || steps >= opts.max_newton_total {
                status = BarrierStatus::IterationCap;
                break 'outer;
            }
            inner += 1;
            steps += 1;

            let phi_cur = phi(t, &cur);
            let noise = 1e-13 * (t * cur.f.abs() + cur.g.iter().map(|g| (-g).ln().abs()).sum::<f64>() + 1.0);
            let mut s = 1.0;
            let mut accepted = None;
            for _ in 0..200 {
                let trial: Vec<f64> = cur.x.iter().zip(dir.iter()).map(|(x, d)| x + s * d).collect();
                if let Some(p) = evaluate_values(prog, &trial) {
                    let phi_new = phi(t, &p);
                    let armijo = phi_new <= phi_cur + LS_ALPHA * s * slope;
                    let pure_newton = s == 1.0 && decrement_sq < 0.1 && phi_new <= phi_cur + noise;
                    if armijo || pure_newton {
                        accepted = Some(p);
                        break;
                    }
                    if decrement_sq < 1e-6 && phi_new <= phi_cur + noise {
                        // below the resolution of phi; take the feasible step
                        accepted = Some(p);
                        break;
                    }
                }
                s *= LS_BETA;
            }
            match accepted {
                Some(p) => cur = p,
                None => {
                    status = BarrierStatus::LineSearchStalled;
                    break 'outer;
                }
            }
        }
        if final_stage {
            break;
        }
        t *= opts.t_factor;
    }

    let mut multipliers: Vec<f64> = cur.g.iter().map(|g| 1.0 / (t * (-g))).collect();
    let (mut stationarity, _) = lagrangian_stationarity(prog, &cur.x, &multipliers);
    if m > 0 {
        if let Some((refit, r)) = refined_multipliers(prog, &cur.x, &multipliers) {
            if r < stationarity {
                multipliers = refit;
                stationarity = r;
            }
        }
        if status == BarrierStatus::IterationCap && stationarity <= opts.kkt_tol && m as f64 / t < opts.gap_tol {
            status = BarrierStatus::Converged;
        }
    }
    let complementarity = cur.g.iter().zip(&multipliers).map(|(g, l)| l * g.abs()).fold(0.0, f64::max);
    let primal_infeasibility = cur.g.iter().fold(0.0f64, |a, &g| a.max(g));
    Ok(BarrierSolution {
        objective: cur.f,
        x: cur.x,
        multipliers,
        stationarity,
        complementarity,
        primal_infeasibility,
        t,
        newton_steps: steps,
        status,
    })
}

/// Nonnegative least-squares multipliers for the constraints the barrier
/// estimate marks as binding, by dropping the most negative fit until all
/// are nonnegative. Returns the multipliers and their stationarity residual.
fn refined_multipliers<P: SmoothProgram + ?Sized>(prog: &P, x: &[f64], lambda: &[f64]) -> Option<(Vec<f64>, f64)> {
    let n = prog.dim();
    let top = lambda.iter().fold(0.0f64, |a, &l| a.max(l));
    if !(top > 0.0) {
        return None;
    }
    let grads: Vec<Vec<f64>> = (0..lambda.len()).map(|j| prog.constraint(j, x, true).dense_grad(n)).collect();
    let rhs = -DVector::from_vec(prog.objective(x, true).dense_grad(n));
    let mut set: Vec<usize> = (0..lambda.len()).filter(|&j| lambda[j] >= 1e-6 * top).collect();
    while !set.is_empty() {
        let jac = DMatrix::from_fn(n, set.len(), |i, c| grads[set[c]][i]);
        let mu = jac.svd(true, true).solve(&rhs, 1e-14).ok()?;
        let (worst, low) = mu.iter().enumerate().fold((0, 0.0), |acc, (c, &v)| if v < acc.1 { (c, v) } else { acc });
        if low < 0.0 {
            set.remove(worst);
            continue;
        }
        let mut full = vec![0.0; lambda.len()];
        for (c, &j) in set.iter().enumerate() {
            full[j] = mu[c];
        }
        let (r, _) = lagrangian_stationarity(prog, x, &full);
        return Some((full, r));
    }
    None
}

/// Infinity norm (and the vector) of `grad f + sum lambda_j grad g_j`.
pub fn lagrangian_stationarity<P: SmoothProgram + ?Sized>(prog: &P, x: &[f64], lambda: &[f64]) -> (f64, Vec<f64>) {
    let n = prog.dim();
    let mut r = prog.objective(x, true).dense_grad(n);
    for (j, &l) in lambda.iter().enumerate() {
        for (i, v) in prog.constraint(j, x, true).grad {
            r[i] += l * v;
        }
    }
    (r.iter().fold(0.0f64, |a, v| a.max(v.abs())), r)
}
