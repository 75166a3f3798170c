//! Problem families, dataset generation, reference solvers, and
//! end-to-end training runs that learn loss-to-solution operators.
//!
//! Two families are supported. `min-op` learns the box-constrained
//! minimization operator over `R^d`: training instances are random strongly
//! convex quadratics, test instances are log-sum-exp objectives with
//! sign-coherent slopes. `pde-rd` learns the solution operator of a
//! parametric reaction-diffusion equation in a Hermite basis: the diffusion
//! coefficient parameterizes the smooth energy, and targets come from a
//! Crank-Nicolson reference solver validated against the analytic heat
//! semigroup.

use ndarray::{Array1, Array2};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{
    adam_step_geo, backward_into, forward_record, mse_loss, AdamState, GeoGrads, TrainCodec,
};
use crate::error::{Error, Result};
use crate::geo::{geo_forward, sample_noise, GeoLayer, GeoParams, NoiseSpec};
use crate::hilbert::{Basis, BasisSpec, CoeffVec, GridFn};
use crate::prox::ProxFn;
use crate::rng::Substreams;
use crate::splitting::{fixed_point_solve, loss, ObjectiveG, SplitSchedule};

/// Which problem family an experiment runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Family {
    #[serde(rename = "min-op")]
    MinOp,
    #[serde(rename = "pde-rd")]
    PdeRd,
}

/// How the operator weights are initialized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum InitMode {
    /// Near-identity state weights with small random sample weights.
    #[default]
    Random,
    /// Weights of the splitting-collapse construction.
    Theoretical,
}

/// On-disk experiment configuration: everything except `family` and `seed`
/// is optional and defaults per family.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfigFile {
    pub family: Family,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epochs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lr: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval_interval: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_train: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_test: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<InitMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_sample_points: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family_params: Option<FamilyParamsFile>,
}

/// Family-specific knobs; keys of the other family are rejected.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyParamsFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub box_lo: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub box_hi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu_lo: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu_hi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_horizon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_points: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_steps: Option<usize>,
}

/// Fully resolved configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub family: Family,
    pub seed: u64,
    pub r: usize,
    pub l: usize,
    pub m: usize,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub eval_interval: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub init: InitMode,
    pub train_sample_points: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub minop: Option<MinOpParams>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pde: Option<PdeParams>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MinOpParams {
    pub d: usize,
    pub box_lo: f64,
    pub box_hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PdeParams {
    pub nu_lo: f64,
    pub nu_hi: f64,
    pub t_horizon: f64,
    pub grid_points: usize,
    pub time_steps: usize,
}

impl ExperimentConfigFile {
    /// Fills per-family defaults and validates every field, naming the
    /// offending key on rejection.
    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let fp = self.family_params.clone().unwrap_or_default();
        let cfg = match self.family {
            Family::MinOp => {
                for (key, set) in [
                    ("nu_lo", fp.nu_lo.is_some()),
                    ("nu_hi", fp.nu_hi.is_some()),
                    ("t_horizon", fp.t_horizon.is_some()),
                    ("grid_points", fp.grid_points.is_some()),
                    ("time_steps", fp.time_steps.is_some()),
                ] {
                    if set {
                        return Err(Error::Config(format!(
                            "`{key}` does not apply to the min-op family"
                        )));
                    }
                }
                let d = fp.d.unwrap_or(2);
                ExperimentConfig {
                    family: self.family,
                    seed: self.seed,
                    r: self.r.unwrap_or(d),
                    l: self.l.unwrap_or(20),
                    m: self.m.unwrap_or(20),
                    epochs: self.epochs.unwrap_or(2000),
                    lr: self.lr.unwrap_or(2e-3),
                    batch_size: self.batch_size.unwrap_or(200),
                    eval_interval: self.eval_interval.unwrap_or(50),
                    n_train: self.n_train.unwrap_or(2000),
                    n_test: self.n_test.unwrap_or(200),
                    init: self.init.unwrap_or_default(),
                    train_sample_points: self.train_sample_points.unwrap_or(false),
                    minop: Some(MinOpParams {
                        d,
                        box_lo: fp.box_lo.unwrap_or(-1.0),
                        box_hi: fp.box_hi.unwrap_or(1.0),
                    }),
                    pde: None,
                }
            }
            Family::PdeRd => {
                for (key, set) in [
                    ("d", fp.d.is_some()),
                    ("box_lo", fp.box_lo.is_some()),
                    ("box_hi", fp.box_hi.is_some()),
                ] {
                    if set {
                        return Err(Error::Config(format!(
                            "`{key}` does not apply to the pde-rd family"
                        )));
                    }
                }
                ExperimentConfig {
                    family: self.family,
                    seed: self.seed,
                    r: self.r.unwrap_or(8),
                    l: self.l.unwrap_or(10),
                    m: self.m.unwrap_or(20),
                    epochs: self.epochs.unwrap_or(4000),
                    lr: self.lr.unwrap_or(2e-3),
                    batch_size: self.batch_size.unwrap_or(25),
                    eval_interval: self.eval_interval.unwrap_or(100),
                    n_train: self.n_train.unwrap_or(100),
                    n_test: self.n_test.unwrap_or(25),
                    init: self.init.unwrap_or_default(),
                    train_sample_points: self.train_sample_points.unwrap_or(false),
                    minop: None,
                    pde: Some(PdeParams {
                        nu_lo: fp.nu_lo.unwrap_or(0.01),
                        nu_hi: fp.nu_hi.unwrap_or(0.4),
                        t_horizon: fp.t_horizon.unwrap_or(0.5),
                        grid_points: fp.grid_points.unwrap_or(2001),
                        time_steps: fp.time_steps.unwrap_or(400),
                    }),
                }
            }
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(Error::Config("`lr` must be positive".into()));
        }
        if self.n_train == 0 || self.n_test == 0 {
            return Err(Error::Config("`n_train` and `n_test` must be at least 1".into()));
        }
        if self.r == 0 || self.m == 0 {
            return Err(Error::Config("`r` and `m` must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("`batch_size` must be at least 1".into()));
        }
        if self.eval_interval == 0 {
            return Err(Error::Config("`eval_interval` must be at least 1".into()));
        }
        if let Some(m) = &self.minop {
            if !(m.box_lo < m.box_hi) {
                return Err(Error::Config("`box_lo` must be below `box_hi`".into()));
            }
            if self.r != m.d {
                return Err(Error::Config("`r` must equal `d` for the min-op family".into()));
            }
        }
        if let Some(p) = &self.pde {
            if !(p.nu_lo > 0.0 && p.nu_hi > p.nu_lo) {
                return Err(Error::Config("`nu_lo`/`nu_hi` must satisfy 0 < lo < hi".into()));
            }
            if p.time_steps < 100 {
                return Err(Error::Config("`time_steps` must be at least 100".into()));
            }
            if p.grid_points < 3 {
                return Err(Error::Config("`grid_points` must be at least 3".into()));
            }
            if !(p.t_horizon > 0.0) {
                return Err(Error::Config("`t_horizon` must be positive".into()));
            }
        }
        Ok(())
    }

    /// Echo form: the resolved config as a config file (a parse fixed
    /// point).
    pub fn echo(&self) -> ExperimentConfigFile {
        let fp = match (&self.minop, &self.pde) {
            (Some(m), None) => FamilyParamsFile {
                d: Some(m.d),
                box_lo: Some(m.box_lo),
                box_hi: Some(m.box_hi),
                ..Default::default()
            },
            (None, Some(p)) => FamilyParamsFile {
                nu_lo: Some(p.nu_lo),
                nu_hi: Some(p.nu_hi),
                t_horizon: Some(p.t_horizon),
                grid_points: Some(p.grid_points),
                time_steps: Some(p.time_steps),
                ..Default::default()
            },
            _ => FamilyParamsFile::default(),
        };
        ExperimentConfigFile {
            family: self.family,
            seed: self.seed,
            r: Some(self.r),
            l: Some(self.l),
            m: Some(self.m),
            epochs: Some(self.epochs),
            lr: Some(self.lr),
            batch_size: Some(self.batch_size),
            eval_interval: Some(self.eval_interval),
            n_train: Some(self.n_train),
            n_test: Some(self.n_test),
            init: Some(self.init),
            train_sample_points: Some(self.train_sample_points),
            family_params: Some(fp),
        }
    }

    /// The runtime basis of the family: coordinates for min-op, a Hermite
    /// basis with headroom rank `2R` for pde-rd (the headroom feeds the
    /// truncation-energy diagnostic).
    pub fn basis(&self) -> Result<Basis> {
        match self.family {
            Family::MinOp => Basis::new(BasisSpec::standard(self.r)),
            Family::PdeRd => Basis::new(BasisSpec::hermite(2 * self.r)),
        }
    }

    /// The nonsmooth component of the family.
    pub fn family_prox(&self) -> ProxFn {
        match self.family {
            Family::MinOp => {
                let m = self.minop.as_ref().expect("validated");
                ProxFn::IndicatorBox {
                    lo: m.box_lo,
                    hi: m.box_hi,
                }
            }
            Family::PdeRd => ProxFn::reaction(),
        }
    }
}

/// Family-specific parameters defining one smooth objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum GSpec {
    /// `g(x) = x'Ax/2 + b'x + c`.
    Quadratic {
        a: Array2<f64>,
        b: Array1<f64>,
        c: f64,
    },
    /// `g(x) = ln(sum_i exp(b_i x_i) + c)` with `c > 0`.
    LogSumExp { b: Array1<f64>, c: f64 },
    /// Derivative energy `g(z) = (nu/2) ||D z||^2` in Hermite coefficients.
    ReactionDiffusion { nu: f64 },
}

impl GSpec {
    /// Materializes the objective with its analytic gradient at the given
    /// state rank.
    pub fn to_objective(&self, basis: &Basis, rank: usize) -> Result<ObjectiveG> {
        match self {
            GSpec::Quadratic { a, b, c } => {
                crate::splitting::objectives::quadratic(basis, a.clone(), b.clone(), *c)
            }
            GSpec::LogSumExp { b, c } => {
                if !(*c > 0.0) {
                    return Err(Error::invalid("log-sum-exp offset must be positive"));
                }
                let lipschitz = b.iter().map(|x| x * x).fold(0.0, f64::max);
                let (b1, c1) = (b.clone(), *c);
                let (b2, c2) = (b.clone(), *c);
                let spec = basis.spec().clone();
                ObjectiveG::new(
                    basis,
                    rank,
                    lipschitz,
                    move |x: &CoeffVec| {
                        let s: f64 = x
                            .coeffs()
                            .iter()
                            .zip(&b1)
                            .map(|(xi, bi)| (bi * xi).exp())
                            .sum();
                        (s + c1).ln()
                    },
                    Some(Box::new(move |x: &CoeffVec| {
                        let mut g: Vec<f64> = x
                            .coeffs()
                            .iter()
                            .zip(&b2)
                            .map(|(xi, bi)| (bi * xi).exp())
                            .collect();
                        let denom: f64 = g.iter().sum::<f64>() + c2;
                        for (t, bi) in g.iter_mut().zip(&b2) {
                            *t = bi * *t / denom;
                        }
                        CoeffVec::new(spec.clone(), g).expect("gradient entries are finite")
                    })),
                )
            }
            GSpec::ReactionDiffusion { nu } => {
                if !(*nu > 0.0) {
                    return Err(Error::invalid("diffusion coefficient must be positive"));
                }
                // D is bidiagonal antisymmetric: D[j-1, j] = sqrt(j/2),
                // D[j, j-1] = -sqrt(j/2). Both the energy and its gradient
                // reduce to banded slice loops.
                let d = basis.derivative_matrix(rank)?;
                let dtd = d.t().dot(&d);
                let lipschitz = nu * dtd.iter().map(|x| x * x).sum::<f64>().sqrt();
                let off: Vec<f64> = (1..rank).map(|j| (j as f64 / 2.0).sqrt()).collect();
                let off2 = off.clone();
                let nu1 = *nu;
                let nu2 = *nu;
                let spec = basis.spec().clone();
                ObjectiveG::new(
                    basis,
                    rank,
                    lipschitz,
                    move |x: &CoeffVec| {
                        let xs = x.coeffs();
                        // (D x)_k = sqrt((k+1)/2) x_{k+1} - sqrt(k/2) x_{k-1}
                        let mut acc = 0.0;
                        for k in 0..rank {
                            let up = if k + 1 < rank { off[k] * xs[k + 1] } else { 0.0 };
                            let dn = if k > 0 { off[k - 1] * xs[k - 1] } else { 0.0 };
                            let v = up - dn;
                            acc += v * v;
                        }
                        nu1 / 2.0 * acc
                    },
                    Some(Box::new(move |x: &CoeffVec| {
                        let xs = x.coeffs();
                        let mut dx = vec![0.0; rank];
                        for (k, v) in dx.iter_mut().enumerate() {
                            let up = if k + 1 < rank { off2[k] * xs[k + 1] } else { 0.0 };
                            let dn = if k > 0 { off2[k - 1] * xs[k - 1] } else { 0.0 };
                            *v = up - dn;
                        }
                        // grad = nu D' D x = -nu D (D x).
                        let g: Vec<f64> = (0..rank)
                            .map(|k| {
                                let up = if k + 1 < rank { off2[k] * dx[k + 1] } else { 0.0 };
                                let dn = if k > 0 { off2[k - 1] * dx[k - 1] } else { 0.0 };
                                -nu2 * (up - dn)
                            })
                            .collect();
                        CoeffVec::new(spec.clone(), g).expect("gradient entries are finite")
                    })),
                )
            }
        }
    }
}

/// One labeled example: the objective spec and the reference solution
/// encoded in the family basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledInstance {
    pub g: GSpec,
    pub target: CoeffVec,
}

/// Generated train/test split, with per-instance truncation energy for the
/// PDE family (fraction of rank-2R energy beyond rank R).
#[derive(Debug, Clone, Serialize)]
pub struct Dataset {
    pub train: Vec<LabeledInstance>,
    pub test: Vec<LabeledInstance>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truncation_energy: Option<Vec<f64>>,
}

/// Quadratic + log-sum-exp dataset for the box-constrained minimization
/// operator. Targets are box-constrained argmins from the unrelaxed
/// forward-backward oracle; deterministic given the seed.
pub fn gen_minop_dataset(config: &ExperimentConfig, basis: &Basis) -> Result<Dataset> {
    let mp = config
        .minop
        .as_ref()
        .ok_or_else(|| Error::Config("min-op dataset needs min-op parameters".into()))?;
    let d = mp.d;
    let f = config.family_prox();
    let mut rng = Substreams::new(config.seed).stream("dataset");
    let mut specs = Vec::with_capacity(config.n_train + config.n_test);
    for _ in 0..config.n_train {
        let gmat = Array2::from_shape_fn((d, d), |_| {
            rng.sample::<f64, _>(rand_distr::StandardNormal)
        });
        let mut a = gmat.t().dot(&gmat);
        for i in 0..d {
            a[(i, i)] += 0.1;
        }
        let b = Array1::from_shape_fn(d, |_| rng.gen_range(-2.0..2.0));
        let c = rng.gen_range(-2.0..2.0);
        specs.push(GSpec::Quadratic { a, b, c });
    }
    for _ in 0..config.n_test {
        // Sign-coherent slopes: all nonnegative or all nonpositive.
        let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let b = Array1::from_shape_fn(d, |_| sign * rng.gen_range(0.0..2.0));
        let c = rng.gen_range(0.5..2.0);
        specs.push(GSpec::LogSumExp { b, c });
    }
    let x0 = CoeffVec::zeros(basis.spec().clone(), d);
    let instances: Vec<LabeledInstance> = specs
        .into_par_iter()
        .map(|g| {
            let obj = g.to_objective(basis, d)?;
            let target = fixed_point_solve(&x0, &f, &obj, 1_000_000, basis)?;
            Ok(LabeledInstance { g, target })
        })
        .collect::<Result<_>>()?;
    let mut train = instances;
    let test = train.split_off(config.n_train);
    Ok(Dataset {
        train,
        test,
        truncation_energy: None,
    })
}

/// Reaction-diffusion reference solution at the time horizon: operator
/// splitting with a Crank-Nicolson diffusion half (tridiagonal solve, zero
/// boundary values) and the exact reaction resolvent per step.
pub fn pde_reference(nu: f64, pde: &PdeParams, reaction: bool) -> Result<GridFn> {
    if !(nu > 0.0) {
        return Err(Error::invalid("diffusion coefficient must be positive"));
    }
    if pde.time_steps < 100 {
        return Err(Error::invalid("need at least 100 time steps"));
    }
    let n = pde.grid_points;
    let (lo, hi) = (-10.0, 10.0);
    let h = (hi - lo) / (n - 1) as f64;
    let nodes: Vec<f64> = (0..n).map(|i| lo + h * i as f64).collect();
    let mut y: Vec<f64> = nodes.iter().map(|&u| 5.0 * u * (-u * u).exp()).collect();
    let cap = 10.0 * y.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let dt = pde.t_horizon / pde.time_steps as f64;
    let r = nu * dt / (2.0 * h * h);

    // Thomas factorization of the constant interior system
    // (1 + 2r) y_i - r (y_{i-1} + y_{i+1}), precomputed once.
    let interior = n - 2;
    let diag = 1.0 + 2.0 * r;
    let mut c_prime = vec![0.0; interior];
    c_prime[0] = -r / diag;
    for i in 1..interior {
        c_prime[i] = -r / (diag + r * c_prime[i - 1]);
    }
    let mut rhs = vec![0.0; interior];
    let mut d_prime = vec![0.0; interior];
    for _ in 0..pde.time_steps {
        for i in 0..interior {
            let k = i + 1;
            rhs[i] = (1.0 - 2.0 * r) * y[k] + r * (y[k - 1] + y[k + 1]);
        }
        d_prime[0] = rhs[0] / diag;
        for i in 1..interior {
            d_prime[i] = (rhs[i] + r * d_prime[i - 1]) / (diag + r * c_prime[i - 1]);
        }
        y[interior] = d_prime[interior - 1];
        for i in (0..interior - 1).rev() {
            y[i + 1] = d_prime[i] - c_prime[i] * y[i + 2];
        }
        y[0] = 0.0;
        y[n - 1] = 0.0;
        if reaction {
            for v in y.iter_mut() {
                if *v < 0.0 {
                    *v /= 1.0 + dt / 2.0;
                }
            }
        }
        let peak = y.iter().map(|v| v.abs()).fold(0.0, f64::max);
        if peak > cap {
            return Err(Error::Diverged(format!(
                "reference solver left the stable regime (peak {peak:.3e})"
            )));
        }
    }
    GridFn::new(nodes, y)
}

/// Closed-form pure-diffusion solution for the derivative-of-Gaussian
/// initial datum: the validation oracle for the reference solver.
pub fn heat_semigroup_solution(nu: f64, t: f64, nodes: &[f64]) -> GridFn {
    let s = 1.0 + 4.0 * nu * t;
    let values = nodes
        .iter()
        .map(|&u| 5.0 * u * (-u * u / s).exp() * s.powf(-1.5))
        .collect();
    GridFn::new(nodes.to_vec(), values).expect("closed form is finite")
}

/// Diffusion-parameter dataset: uniform draws of `nu`, targets encoded from
/// the reference solver at rank R, with the discarded energy fraction
/// recorded against a rank-2R encoding.
pub fn gen_pde_dataset(config: &ExperimentConfig, basis: &Basis) -> Result<Dataset> {
    let pde = config
        .pde
        .as_ref()
        .ok_or_else(|| Error::Config("pde-rd dataset needs pde parameters".into()))?;
    let mut rng = Substreams::new(config.seed).stream("dataset");
    let nus: Vec<f64> = (0..config.n_train + config.n_test)
        .map(|_| rng.gen_range(pde.nu_lo..pde.nu_hi))
        .collect();
    let r = config.r;
    let results: Vec<(LabeledInstance, f64)> = nus
        .into_par_iter()
        .map(|nu| {
            let reference = pde_reference(nu, pde, true)?;
            let wide = basis.encode(&reference, 2 * r)?;
            let total: f64 = wide.coeffs().iter().map(|c| c * c).sum();
            let tail: f64 = wide.coeffs()[r..].iter().map(|c| c * c).sum();
            let target = CoeffVec::new(basis.spec().clone(), wide.coeffs()[..r].to_vec())?;
            Ok((
                LabeledInstance {
                    g: GSpec::ReactionDiffusion { nu },
                    target,
                },
                tail / total.max(f64::MIN_POSITIVE),
            ))
        })
        .collect::<Result<_>>()?;
    let (instances, energies): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let mut train = instances;
    let test = train.split_off(config.n_train);
    Ok(Dataset {
        train,
        test,
        truncation_energy: Some(energies),
    })
}

pub fn gen_dataset(config: &ExperimentConfig, basis: &Basis) -> Result<Dataset> {
    match config.family {
        Family::MinOp => gen_minop_dataset(config, basis),
        Family::PdeRd => gen_pde_dataset(config, basis),
    }
}

/// Sample-point pattern mirroring the splitting collapse: blocks of
/// delta-scaled basis directions plus the zero point, repeated at
/// alternating-sign doubling scales to probe the objective at several
/// widths.
pub fn init_sample_points(basis: &BasisSpec, r: usize, m: usize, delta: f64) -> Vec<CoeffVec> {
    (0..m)
        .map(|i| {
            let cycle = (i / (r + 1)) as i32;
            let pos = i % (r + 1);
            let sign = if cycle % 2 == 0 { 1.0 } else { -1.0 };
            let scale = delta * 2f64.powi(cycle) * sign;
            let mut s = CoeffVec::zeros(basis.clone(), r);
            if pos < r {
                s.coeffs_mut()[pos] = scale;
            }
            s
        })
        .collect()
}

/// Random initialization near the algorithm-unrolling manifold:
/// near-identity state weights, small sample weights, zero bias, half-open
/// gates, and the structured sample-point pattern.
pub fn init_geo_params(config: &ExperimentConfig, basis: &Basis) -> Result<GeoParams> {
    let mut rng = Substreams::new(config.seed).stream("init");
    let (r, m) = (config.r, config.m);
    let delta = 0.01;
    let samples = init_sample_points(basis.spec(), r, m, delta);
    let mut layers = Vec::with_capacity(config.l + 1);
    for _ in 0..=config.l {
        let mut eye = Array2::eye(r);
        for v in eye.iter_mut() {
            *v += 0.01 * rng.sample::<f64, _>(rand_distr::StandardNormal);
        }
        let b = Array2::from_shape_fn((r, m), |_| {
            0.01 * rng.sample::<f64, _>(rand_distr::StandardNormal)
        });
        layers.push(GeoLayer {
            a: eye,
            b,
            bias: Array1::zeros(r),
            gamma: 0.5,
            samples: samples.clone(),
        });
    }
    let mut readout = Array2::eye(r);
    for v in readout.iter_mut() {
        *v += 0.01 * rng.sample::<f64, _>(rand_distr::StandardNormal);
    }
    let params = GeoParams {
        basis: basis.spec().clone(),
        rank: r,
        depth: config.l,
        width: m,
        layers,
        readout,
        prox: config.family_prox(),
        tau: 1.0,
        noise: NoiseSpec::zero(),
    };
    params.validate()?;
    Ok(params)
}

/// Weights of the splitting collapse for the family's worst-case gradient
/// Lipschitz constant. The construction fixes the width at `R + 1`.
pub fn theoretical_init_params(config: &ExperimentConfig, basis: &Basis) -> Result<GeoParams> {
    let lipschitz = match config.family {
        Family::MinOp => {
            // Worst case over the quadratic family is unbounded; a unit
            // bound matches the box diameter scale.
            1.0
        }
        Family::PdeRd => {
            let pde = config.pde.as_ref().expect("validated");
            GSpec::ReactionDiffusion { nu: pde.nu_hi }
                .to_objective(basis, config.r)?
                .lipschitz()
        }
    };
    let schedule = SplitSchedule::decay(config.l, 1.0, lipschitz, config.r)?;
    crate::geo::build_theoretical_geo(
        &config.family_prox(),
        &schedule,
        basis.spec(),
        NoiseSpec::zero(),
    )
}

/// One metrics row; the test column is refreshed on evaluation epochs and
/// carried forward in between.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricsRow {
    pub epoch: usize,
    pub train_mse: f64,
    pub test_mse: f64,
}

/// Result of a training run.
#[derive(Debug, Clone)]
pub struct ExperimentRun {
    pub config: ExperimentConfig,
    pub metrics: Vec<MetricsRow>,
    pub params: GeoParams,
    pub dataset: Dataset,
}

impl ExperimentRun {
    pub fn metrics_csv(&self) -> String {
        let mut out = String::from("epoch,train_mse,test_mse\n");
        for row in &self.metrics {
            out.push_str(&format!("{},{},{}\n", row.epoch, row.train_mse, row.test_mse));
        }
        out
    }

    pub fn initial_test_mse(&self) -> f64 {
        self.metrics.first().expect("metrics hold the initial row").test_mse
    }

    pub fn final_test_mse(&self) -> f64 {
        self.metrics.last().expect("metrics hold the initial row").test_mse
    }
}

/// Per-instance evaluation of a trained operator on labeled instances.
#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub mse: f64,
    /// Coefficient-space `l2` errors per instance.
    pub l2_errors: Vec<f64>,
    /// Relative `l2` errors against the target norm.
    pub rel_l2_errors: Vec<f64>,
    /// Sup-norm errors per instance.
    pub sup_errors: Vec<f64>,
}

impl EvalReport {
    pub fn median_rel_l2(&self) -> f64 {
        let mut v = self.rel_l2_errors.clone();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        if n % 2 == 1 {
            v[n / 2]
        } else {
            0.5 * (v[n / 2 - 1] + v[n / 2])
        }
    }
}

/// Runs the operator over instances and reports errors against targets.
pub fn evaluate(
    params: &GeoParams,
    instances: &[LabeledInstance],
    basis: &Basis,
) -> Result<EvalReport> {
    let noise = sample_noise(&params.noise, &params.basis, params.rank)?;
    let outs: Vec<CoeffVec> = instances
        .par_iter()
        .map(|inst| {
            let g = inst.g.to_objective(basis, params.rank)?;
            geo_forward(params, &g, &noise, basis)
        })
        .collect::<Result<_>>()?;
    let mut l2 = Vec::with_capacity(instances.len());
    let mut rel = Vec::with_capacity(instances.len());
    let mut sup = Vec::with_capacity(instances.len());
    let mut mse = 0.0;
    for (out, inst) in outs.iter().zip(instances) {
        let err = out.sub(&inst.target);
        let e2 = err.norm();
        mse += e2 * e2;
        l2.push(e2);
        rel.push(e2 / inst.target.norm().max(1e-300));
        sup.push(err.linf_dist(&CoeffVec::zeros(out.basis().clone(), out.rank())));
    }
    mse /= instances.len() as f64;
    Ok(EvalReport {
        mse,
        l2_errors: l2,
        rel_l2_errors: rel,
        sup_errors: sup,
    })
}

/// Trains the operator on the family dataset with minibatch Adam; fully
/// deterministic given the seed (parallel batch gradients reduce in fixed
/// index order). Aborts when the train MSE exceeds a thousand times its
/// initial value.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentRun> {
    config.validate()?;
    let basis = config.basis()?;
    let dataset = gen_dataset(config, &basis)?;
    let mut params = match config.init {
        InitMode::Random => init_geo_params(config, &basis)?,
        InitMode::Theoretical => theoretical_init_params(config, &basis)?,
    };
    let noise = sample_noise(&params.noise, &params.basis, params.rank)?;

    let train_objs: Vec<ObjectiveG> = dataset
        .train
        .par_iter()
        .map(|inst| inst.g.to_objective(&basis, params.rank))
        .collect::<Result<_>>()?;

    let codec = TrainCodec::new(&params, config.train_sample_points);
    let mut adam = AdamState::new(codec.len(), config.lr);
    let mut order_rng = Substreams::new(config.seed).stream("order");
    let mut metrics = Vec::new();

    // Fixed chunk count (independent of the thread pool) keeps the
    // floating-point reduction order identical across machines.
    const REDUCE_CHUNKS: usize = 8;
    let batch_mse = |params: &GeoParams, idx: &[usize]| -> Result<(GeoGrads, f64)> {
        let chunk_len = idx.len().div_ceil(REDUCE_CHUNKS);
        let partials: Vec<(GeoGrads, f64)> = idx
            .par_chunks(chunk_len)
            .map(|chunk| {
                let mut grads = GeoGrads::zeros_like(params);
                let mut total = 0.0;
                for &i in chunk {
                    let (out, tape) = forward_record(params, &train_objs[i], &noise, &basis)?;
                    let (l, seed) = mse_loss(&out, &dataset.train[i].target);
                    backward_into(&tape, params, &basis, &seed, &mut grads)?;
                    total += l;
                }
                Ok((grads, total))
            })
            .collect::<Result<_>>()?;
        let mut iter = partials.into_iter();
        let (mut grads, mut total) = iter.next().expect("at least one chunk");
        for (g, l) in iter {
            grads.accumulate(&g);
            total += l;
        }
        grads.scale(1.0 / idx.len() as f64);
        Ok((grads, total / idx.len() as f64))
    };

    let test_mse = |params: &GeoParams| -> Result<f64> {
        Ok(evaluate(params, &dataset.test, &basis)?.mse)
    };

    let full: Vec<usize> = (0..dataset.train.len()).collect();
    let (_, mut train_mse) = batch_mse(&params, &full)?;
    let initial_train_mse = train_mse;
    metrics.push(MetricsRow {
        epoch: 0,
        train_mse,
        test_mse: test_mse(&params)?,
    });

    for epoch in 1..=config.epochs {
        let mut idx = full.clone();
        // Seeded in-place shuffle keeps epoch order deterministic.
        for i in (1..idx.len()).rev() {
            let j = order_rng.gen_range(0..=i);
            idx.swap(i, j);
        }
        let mut epoch_mse = 0.0;
        let mut seen = 0usize;
        for chunk in idx.chunks(config.batch_size.min(idx.len())) {
            let (grads, mse) = batch_mse(&params, chunk)?;
            epoch_mse += mse * chunk.len() as f64;
            seen += chunk.len();
            params = adam_step_geo(&params, &grads, &mut adam, &codec);
        }
        train_mse = epoch_mse / seen as f64;
        if train_mse > 1e3 * initial_train_mse.max(1e-12) {
            return Err(Error::Diverged(format!(
                "training diverged at epoch {epoch}: train MSE {train_mse:.3e} \
                 vs initial {initial_train_mse:.3e}"
            )));
        }
        if epoch % config.eval_interval == 0 || epoch == config.epochs {
            metrics.push(MetricsRow {
                epoch,
                train_mse,
                test_mse: test_mse(&params)?,
            });
        }
    }

    Ok(ExperimentRun {
        config: config.clone(),
        metrics,
        params,
        dataset,
    })
}

/// Loss gap of the operator's prediction on one instance against the
/// family's optimum oracle: the labeled target for the minimization
/// families, a long-horizon exact splitting run for the PDE family.
pub fn loss_gap_eval(
    params: &GeoParams,
    instance: &LabeledInstance,
    f: &ProxFn,
    basis: &Basis,
) -> Result<f64> {
    let g = instance.g.to_objective(basis, params.rank)?;
    let noise = sample_noise(&params.noise, &params.basis, params.rank)?;
    let out = geo_forward(params, &g, &noise, basis)?;
    let optimum = match instance.g {
        GSpec::ReactionDiffusion { .. } => {
            let star = fixed_point_solve(&instance.target, f, &g, 5000, basis)?;
            loss(f, &g, &star, basis)
        }
        _ => loss(f, &g, &instance.target, basis),
    };
    Ok(loss(f, &g, &out, basis) - optimum)
}
