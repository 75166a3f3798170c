//! Forward-backward splitting iterations over finite-rank subspaces: the
//! exact scheme (analytic gradient), the finite-difference scheme (rank-R
//! divided differences), and the projected finite-rank scheme whose
//! nonlinearity is the rank-R activation. Plus step-size schedules, the
//! divided-difference operator, and convergence diagnostics.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{Basis, CoeffVec};
use crate::prox::ProxFn;

/// Smallest admissible gradient-Lipschitz constant: affine objectives
/// (constant gradient) are remapped here to keep step sizes finite.
pub const MIN_LIPSCHITZ: f64 = 1e-12;

/// A convex, differentiable objective with a known gradient-Lipschitz
/// constant. The analytic gradient is optional; when present it is checked
/// against central finite differences at construction.
#[derive(Clone)]
pub struct ObjectiveG {
    eval: Arc<dyn Fn(&CoeffVec) -> f64 + Send + Sync>,
    grad: Option<Arc<dyn Fn(&CoeffVec) -> CoeffVec + Send + Sync>>,
    lipschitz_grad: f64,
}

impl std::fmt::Debug for ObjectiveG {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ObjectiveG")
            .field("has_grad", &self.grad.is_some())
            .field("lipschitz_grad", &self.lipschitz_grad)
            .finish()
    }
}

impl ObjectiveG {
    /// Builds an objective, verifying a present analytic gradient against
    /// central differences at five seeded random points (relative error
    /// below `1e-4`).
    pub fn new(
        basis: &Basis,
        rank: usize,
        lipschitz_grad: f64,
        eval: impl Fn(&CoeffVec) -> f64 + Send + Sync + 'static,
        grad: Option<Box<dyn Fn(&CoeffVec) -> CoeffVec + Send + Sync>>,
    ) -> Result<Self> {
        let lipschitz_grad = if lipschitz_grad > 0.0 {
            lipschitz_grad
        } else {
            MIN_LIPSCHITZ
        };
        let obj = ObjectiveG {
            eval: Arc::new(eval),
            grad: grad.map(Arc::from),
            lipschitz_grad,
        };
        if obj.grad.is_some() {
            obj.check_gradient_consistency(basis, rank)?;
        }
        Ok(obj)
    }

    fn check_gradient_consistency(&self, basis: &Basis, rank: usize) -> Result<()> {
        let mut rng = crate::rng::Substreams::new(0x6_7261_6421).stream("grad-consistency");
        let h = 1e-5;
        for _ in 0..5 {
            let coeffs: Vec<f64> = (0..rank).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let x = CoeffVec::new(basis.spec().clone(), coeffs)?;
            let g = self.grad(&x).expect("caller checked grad presence");
            let mut fd = CoeffVec::zeros(basis.spec().clone(), rank);
            for i in 0..rank {
                let mut up = x.clone();
                up.coeffs_mut()[i] += h;
                let mut dn = x.clone();
                dn.coeffs_mut()[i] -= h;
                fd.coeffs_mut()[i] = (self.eval(&up) - self.eval(&dn)) / (2.0 * h);
            }
            let err = fd.sub(&g).norm() / g.norm().max(1.0);
            if err >= 1e-4 {
                return Err(Error::invalid(format!(
                    "analytic gradient fails finite-difference consistency: rel error {err:.2e}"
                )));
            }
        }
        Ok(())
    }

    pub fn eval(&self, x: &CoeffVec) -> f64 {
        (self.eval)(x)
    }

    pub fn grad(&self, x: &CoeffVec) -> Option<CoeffVec> {
        self.grad.as_ref().map(|g| g(x))
    }

    pub fn has_grad(&self) -> bool {
        self.grad.is_some()
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz_grad
    }
}

/// Which splitting iteration to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SchemeKind {
    /// Analytic gradient, exact prox.
    Exact,
    /// Divided-difference gradient, exact prox.
    Approx,
    /// Divided-difference gradient, rank-R projected prox.
    Projected,
}

/// Relaxation and step-size sequences governing a splitting run: horizon
/// `L`, gates `alpha_0..alpha_L`, steps `lambda_0..lambda_L`, the
/// divided-difference step `delta`, and the projection rank.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSchedule {
    pub horizon: usize,
    pub alphas: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub delta: f64,
    pub rank: usize,
    /// Projection-gap constant recorded when the schedule was built to
    /// satisfy the geometric decay bound.
    decay_constant: Option<f64>,
}

impl SplitSchedule {
    pub fn new(
        horizon: usize,
        alphas: Vec<f64>,
        lambdas: Vec<f64>,
        delta: f64,
        rank: usize,
    ) -> Result<Self> {
        let s = SplitSchedule {
            horizon,
            alphas,
            lambdas,
            delta,
            rank,
            decay_constant: None,
        };
        s.validate_shape()?;
        Ok(s)
    }

    fn validate_shape(&self) -> Result<()> {
        if self.alphas.len() != self.horizon + 1 || self.lambdas.len() != self.horizon + 1 {
            return Err(Error::invalid(format!(
                "schedule needs {} gate/step entries, got {}/{}",
                self.horizon + 1,
                self.alphas.len(),
                self.lambdas.len()
            )));
        }
        if self.alphas.iter().any(|&a| !(a > 0.0 && a <= 1.0)) {
            return Err(Error::invalid("gates alpha_l must lie in (0, 1]"));
        }
        if self.lambdas.iter().any(|&l| !(l > 0.0)) {
            return Err(Error::invalid("steps lambda_l must be positive"));
        }
        if !(self.delta > 0.0) {
            return Err(Error::invalid("divided-difference step delta must be positive"));
        }
        if self.rank == 0 {
            return Err(Error::invalid("rank must be at least 1"));
        }
        Ok(())
    }

    /// Checks the step-gate compatibility `alpha_l lambda_l L_grad <= 1`
    /// against a concrete objective.
    pub fn validate_for(&self, lipschitz_grad: f64) -> Result<()> {
        self.validate_shape()?;
        for (l, (a, lam)) in self.alphas.iter().zip(&self.lambdas).enumerate() {
            if a * lam * lipschitz_grad > 1.0 + 1e-12 {
                return Err(Error::invalid(format!(
                    "alpha_{l} * lambda_{l} * L = {} exceeds 1",
                    a * lam * lipschitz_grad
                )));
            }
        }
        Ok(())
    }

    /// The geometric gate bound `alpha_l <= 2^{-l-L} max(C,1)^{-(L-l-1)+}`.
    pub fn is_decay_compliant(&self, c: f64) -> bool {
        let l_total = self.horizon as i32;
        self.alphas.iter().enumerate().all(|(l, &a)| {
            let l = l as i32;
            let bound = 2f64.powi(-(l + l_total)) * c.max(1.0).powi(-(l_total - l - 1).max(0));
            a <= bound * (1.0 + 1e-12)
        })
    }

    pub fn decay_constant(&self) -> Option<f64> {
        self.decay_constant
    }

    /// Maximal schedule satisfying the geometric decay bound (equality in
    /// the bound), with constant steps `lambda_l = 1/(2 L_grad)` and the
    /// coupled divided-difference step `delta = 2^{-L}/R`.
    pub fn decay(horizon: usize, c: f64, lipschitz_grad: f64, rank: usize) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::invalid("decay schedule needs horizon >= 1"));
        }
        if !(c >= 0.0) {
            return Err(Error::invalid("decay constant must be nonnegative"));
        }
        let lam = 1.0 / (2.0 * lipschitz_grad.max(MIN_LIPSCHITZ));
        let l_total = horizon as i32;
        let alphas = (0..=horizon)
            .map(|l| {
                let l = l as i32;
                2f64.powi(-(l + l_total)) * c.max(1.0).powi(-(l_total - l - 1).max(0))
            })
            .collect();
        let mut s = SplitSchedule::new(
            horizon,
            alphas,
            vec![lam; horizon + 1],
            2f64.powi(-l_total) / rank as f64,
            rank,
        )?;
        s.decay_constant = Some(c);
        Ok(s)
    }

    /// Schedule variant controlled by the step-ratio constraint
    /// `alpha_l <= lambda_l / 2^{L-2l}` (capped at 1), used to control the
    /// exact-versus-divided-difference deviation.
    pub fn ratio_decay(horizon: usize, lipschitz_grad: f64, rank: usize) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::invalid("ratio-decay schedule needs horizon >= 1"));
        }
        let lam = 1.0 / (2.0 * lipschitz_grad.max(MIN_LIPSCHITZ));
        let l_total = horizon as i32;
        let alphas = (0..=horizon)
            .map(|l| (lam * 2f64.powi(-(l_total - 2 * l as i32))).min(1.0))
            .collect();
        SplitSchedule::new(
            horizon,
            alphas,
            vec![lam; horizon + 1],
            2f64.powi(-l_total) / rank as f64,
            rank,
        )
    }

    /// Unrelaxed schedule: `alpha_l = 1`, `lambda_l = 1/(2 L_grad)`.
    pub fn constant(horizon: usize, lipschitz_grad: f64, rank: usize, delta: f64) -> Result<Self> {
        let lam = 1.0 / (2.0 * lipschitz_grad.max(MIN_LIPSCHITZ));
        SplitSchedule::new(
            horizon,
            vec![1.0; horizon + 1],
            vec![lam; horizon + 1],
            delta,
            rank,
        )
    }
}

/// Iterates and losses of one splitting run.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub iterates: Vec<CoeffVec>,
    pub losses: Vec<f64>,
    pub scheme: SchemeKind,
    /// Set when iterate norms left the stable regime; the run stops there.
    pub diverged: bool,
}

impl Trajectory {
    pub fn final_iterate(&self) -> &CoeffVec {
        self.iterates.last().expect("trajectory always holds the start point")
    }

    pub fn final_loss(&self) -> f64 {
        *self.losses.last().expect("trajectory always holds the start point")
    }

    /// `iteration,loss,gap` CSV against a reference optimal value.
    pub fn to_csv(&self, optimum: f64) -> String {
        let mut out = String::from("iteration,loss,gap\n");
        for (i, loss) in self.losses.iter().enumerate() {
            out.push_str(&format!("{i},{loss},{}\n", loss - optimum));
        }
        out
    }
}

/// Composite loss `f(x) + g(x)`.
pub fn loss(f: &ProxFn, g: &ObjectiveG, x: &CoeffVec, basis: &Basis) -> f64 {
    f.value(x, basis) + g.eval(x)
}

/// Rank-R divided-difference gradient
/// `sum_{i<R} (g(x + delta e_i) - g(x))/delta e_i`, returned in the rank of
/// `x` with support in the first `R` coefficients. Costs `R + 1`
/// evaluations of `g`.
pub fn fd_grad(g: &ObjectiveG, x: &CoeffVec, delta: f64, r: usize) -> Result<CoeffVec> {
    if !(delta > 0.0) {
        return Err(Error::invalid("divided-difference step delta must be positive"));
    }
    if r == 0 || r > x.rank() {
        return Err(Error::invalid(format!(
            "divided-difference rank {} out of range 1..={}",
            r,
            x.rank()
        )));
    }
    let base = g.eval(x);
    let mut out = CoeffVec::zeros(x.basis().clone(), x.rank());
    let mut probe = x.clone();
    for i in 0..r {
        probe.coeffs_mut()[i] = x.coeffs()[i] + delta;
        out.coeffs_mut()[i] = (g.eval(&probe) - base) / delta;
        probe.coeffs_mut()[i] = x.coeffs()[i];
    }
    Ok(out)
}

/// One exact forward-backward step
/// `(1-alpha) x + alpha prox_f(x - lambda grad g(x))`.
pub fn fb_step(
    x: &CoeffVec,
    f: &ProxFn,
    g: &ObjectiveG,
    alpha: f64,
    lam: f64,
    basis: &Basis,
) -> Result<CoeffVec> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::invalid("gate alpha must lie in (0, 1]"));
    }
    let grad = g
        .grad(x)
        .ok_or_else(|| Error::invalid("exact scheme requires an analytic gradient"))?;
    let inner = x.axpy(-lam, &grad);
    let proxed = f.prox_eval(1.0, &inner, basis)?;
    Ok(x.scale(1.0 - alpha).axpy(alpha, &proxed))
}

/// Forward-backward step with the gradient replaced by the rank-R divided
/// difference.
pub fn approx_fb_step(
    x: &CoeffVec,
    f: &ProxFn,
    g: &ObjectiveG,
    alpha: f64,
    lam: f64,
    delta: f64,
    r: usize,
    basis: &Basis,
) -> Result<CoeffVec> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::invalid("gate alpha must lie in (0, 1]"));
    }
    let grad = fd_grad(g, x, delta, r)?;
    let inner = x.axpy(-lam, &grad);
    let proxed = f.prox_eval(1.0, &inner, basis)?;
    Ok(x.scale(1.0 - alpha).axpy(alpha, &proxed))
}

/// Projected finite-rank step: prox replaced by the rank-R activation, so
/// the update stays in the span of the first `R` basis elements.
pub fn projected_fb_step(
    z: &CoeffVec,
    f: &ProxFn,
    g: &ObjectiveG,
    alpha: f64,
    lam: f64,
    delta: f64,
    r: usize,
    basis: &Basis,
) -> Result<CoeffVec> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::invalid("gate alpha must lie in (0, 1]"));
    }
    let grad = fd_grad(g, z, delta, r)?;
    let inner = z.axpy(-lam, &grad);
    let activated = f.sigma(1.0, &inner, r, basis)?;
    Ok(z.scale(1.0 - alpha).axpy(alpha, &activated))
}

/// Runs the selected scheme for `L` steps from `x0`, recording the loss of
/// every iterate. Deterministic given `x0`. Iterate norms are monitored;
/// leaving the stable regime stops the run and sets the divergence flag.
pub fn run_scheme(
    x0: &CoeffVec,
    schedule: &SplitSchedule,
    f: &ProxFn,
    g: &ObjectiveG,
    scheme: SchemeKind,
    basis: &Basis,
) -> Result<Trajectory> {
    schedule.validate_for(g.lipschitz())?;
    if scheme == SchemeKind::Exact && !g.has_grad() {
        return Err(Error::invalid("exact scheme requires an analytic gradient"));
    }
    let norm_cap = 1e8 * (1.0 + x0.norm());
    let mut iterates = Vec::with_capacity(schedule.horizon + 1);
    let mut losses = Vec::with_capacity(schedule.horizon + 1);
    let mut x = x0.clone();
    losses.push(loss(f, g, &x, basis));
    iterates.push(x.clone());
    let mut diverged = false;
    for l in 0..schedule.horizon {
        let (a, lam) = (schedule.alphas[l], schedule.lambdas[l]);
        x = match scheme {
            SchemeKind::Exact => fb_step(&x, f, g, a, lam, basis)?,
            SchemeKind::Approx => {
                approx_fb_step(&x, f, g, a, lam, schedule.delta, schedule.rank, basis)?
            }
            SchemeKind::Projected => {
                projected_fb_step(&x, f, g, a, lam, schedule.delta, schedule.rank, basis)?
            }
        };
        losses.push(loss(f, g, &x, basis));
        iterates.push(x.clone());
        if x.norm() > norm_cap {
            diverged = true;
            break;
        }
    }
    Ok(Trajectory {
        iterates,
        losses,
        scheme,
        diverged,
    })
}

/// Unrelaxed exact forward-backward run to a fixed point; the strongest
/// available optimum oracle for families without a closed-form minimizer.
pub fn fixed_point_solve(
    x0: &CoeffVec,
    f: &ProxFn,
    g: &ObjectiveG,
    max_iters: usize,
    basis: &Basis,
) -> Result<CoeffVec> {
    let lam = 1.0 / (2.0 * g.lipschitz().max(MIN_LIPSCHITZ));
    let mut x = x0.clone();
    for _ in 0..max_iters {
        let next = fb_step(&x, f, g, 1.0, lam, basis)?;
        let step = next.sub(&x).norm();
        x = next;
        if step < 1e-14 * (1.0 + x.norm()) {
            break;
        }
    }
    Ok(x)
}

/// Terminal deviations between the three schemes run from the same start.
#[derive(Debug, Clone, Serialize)]
pub struct DeviationReport {
    pub exact_vs_approx: f64,
    pub approx_vs_projected: f64,
    /// Projection-gap constant of the schedule, when it was built
    /// decay-compliant (`None` for the step-ratio variant).
    pub decay_constant: Option<f64>,
}

/// Runs all three schemes from `x0` and reports the terminal deviations.
pub fn deviation_report(
    x0: &CoeffVec,
    schedule: &SplitSchedule,
    f: &ProxFn,
    g: &ObjectiveG,
    basis: &Basis,
) -> Result<DeviationReport> {
    let exact = run_scheme(x0, schedule, f, g, SchemeKind::Exact, basis)?;
    let approx = run_scheme(x0, schedule, f, g, SchemeKind::Approx, basis)?;
    let projected = run_scheme(x0, schedule, f, g, SchemeKind::Projected, basis)?;
    Ok(DeviationReport {
        exact_vs_approx: exact.final_iterate().sub(approx.final_iterate()).norm(),
        approx_vs_projected: approx.final_iterate().sub(projected.final_iterate()).norm(),
        decay_constant: schedule.decay_constant(),
    })
}

/// Convenience constructors for quadratic objectives
/// `g(x) = (1/2) x' A x + b' x + c` used across tests and experiments.
pub mod objectives {
    use super::*;
    use ndarray::{Array1, Array2};

    /// Dense quadratic with exact gradient `A x + b`; the Lipschitz bound is
    /// the Frobenius norm of `A`.
    pub fn quadratic(basis: &Basis, a: Array2<f64>, b: Array1<f64>, c: f64) -> Result<ObjectiveG> {
        let d = b.len();
        if a.nrows() != d || a.ncols() != d {
            return Err(Error::invalid("quadratic matrix/vector shape mismatch"));
        }
        let lipschitz = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let (a2, b2) = (a.clone(), b.clone());
        let spec = basis.spec().clone();
        ObjectiveG::new(
            basis,
            d,
            lipschitz,
            move |x: &CoeffVec| {
                let xs = x.coeffs();
                let mut acc = c;
                for i in 0..d {
                    let mut row = 0.0;
                    for j in 0..d {
                        row += a[(i, j)] * xs[j];
                    }
                    acc += (0.5 * row + b[i]) * xs[i];
                }
                acc
            },
            Some(Box::new(move |x: &CoeffVec| {
                let xs = x.coeffs();
                let g: Vec<f64> = (0..d)
                    .map(|i| {
                        let mut row = b2[i];
                        for j in 0..d {
                            row += a2[(i, j)] * xs[j];
                        }
                        row
                    })
                    .collect();
                CoeffVec::new(spec.clone(), g).expect("gradient entries are finite")
            })),
        )
    }

    /// Separable quadratic `sum_i w_i x_i^2 / 2 + v_i x_i`; its
    /// box-constrained minimizer is the coordinatewise clamp of `-v_i/w_i`.
    pub fn diagonal_quadratic(basis: &Basis, w: Vec<f64>, v: Vec<f64>) -> Result<ObjectiveG> {
        let d = w.len();
        if v.len() != d {
            return Err(Error::invalid("diagonal quadratic shape mismatch"));
        }
        let lipschitz = w.iter().cloned().fold(0.0, f64::max);
        let (w2, v2) = (w.clone(), v.clone());
        let spec = basis.spec().clone();
        ObjectiveG::new(
            basis,
            d,
            lipschitz,
            move |x: &CoeffVec| {
                x.coeffs()
                    .iter()
                    .zip(w.iter().zip(&v))
                    .map(|(xi, (wi, vi))| 0.5 * wi * xi * xi + vi * xi)
                    .sum()
            },
            Some(Box::new(move |x: &CoeffVec| {
                let g: Vec<f64> = x
                    .coeffs()
                    .iter()
                    .zip(w2.iter().zip(&v2))
                    .map(|(xi, (wi, vi))| wi * xi + vi)
                    .collect();
                CoeffVec::new(spec.clone(), g).expect("gradient entries are finite")
            })),
        )
    }
}
