//! The generative equilibrium operator: a depth-L, width-M, rank-R gated
//! residual network over the finite-rank subspace whose nonlinearity is the
//! projected prox activation and whose layers sample the input functional
//! at shifted points.
//!
//! `build_theoretical` constructs weights under which the forward pass
//! collapses to the projected forward-backward splitting iterate exactly:
//! the sample points hold the divided-difference probes, the g-dependent
//! weight rows assemble `-lambda_l` times the divided difference, and the
//! gates carry the relaxation sequence.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{Basis, BasisSpec, CoeffVec};
use crate::prox::ProxFn;
use crate::splitting::{ObjectiveG, SplitSchedule};

/// Distribution of the initial state `x^(0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum NoiseKind {
    /// Deterministic zero start.
    Zero,
    /// Independent centered Gaussian coefficients.
    Gaussian { std: f64 },
}

/// Seeded noise source over the rank-R subspace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn zero() -> Self {
        NoiseSpec {
            kind: NoiseKind::Zero,
            seed: 0,
        }
    }

    pub fn gaussian(std: f64, seed: u64) -> Self {
        NoiseSpec {
            kind: NoiseKind::Gaussian { std },
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let NoiseKind::Gaussian { std } = self.kind {
            if !(std > 0.0) {
                return Err(Error::invalid("gaussian noise std must be positive"));
            }
        }
        Ok(())
    }
}

/// Draws the initial state. Deterministic given the seed (counter-based
/// generator), so repeated draws are bit-identical.
pub fn sample_noise(spec: &NoiseSpec, basis: &BasisSpec, r: usize) -> Result<CoeffVec> {
    spec.validate()?;
    match spec.kind {
        NoiseKind::Zero => Ok(CoeffVec::zeros(basis.clone(), r)),
        NoiseKind::Gaussian { std } => {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            let coeffs: Vec<f64> = (0..r)
                .map(|_| std * rng.sample::<f64, _>(rand_distr::StandardNormal))
                .collect();
            CoeffVec::new(basis.clone(), coeffs)
        }
    }
}

/// One parameterized layer: state weights `A` (R x R), sample weights `B`
/// (R x M), bias (R), gate `gamma` in [0, 1], and `M` sample points of rank
/// R.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeoLayer {
    pub a: Array2<f64>,
    pub b: Array2<f64>,
    pub bias: Array1<f64>,
    pub gamma: f64,
    pub samples: Vec<CoeffVec>,
}

/// The learnable state of a generative equilibrium operator: `depth + 1`
/// layers, a readout matrix acting in coefficient space, the activation's
/// prox and scale, and the noise source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeoParams {
    pub basis: BasisSpec,
    pub rank: usize,
    pub depth: usize,
    pub width: usize,
    pub layers: Vec<GeoLayer>,
    pub readout: Array2<f64>,
    pub prox: ProxFn,
    pub tau: f64,
    pub noise: NoiseSpec,
}

impl GeoParams {
    pub fn validate(&self) -> Result<()> {
        self.basis.validate()?;
        self.prox.validate()?;
        self.noise.validate()?;
        if !(self.tau > 0.0) {
            return Err(Error::invalid("activation scale tau must be positive"));
        }
        if self.rank == 0 || self.rank > self.basis.max_rank {
            return Err(Error::invalid("rank out of range for the declared basis"));
        }
        if self.layers.len() != self.depth + 1 {
            return Err(Error::invalid(format!(
                "expected {} layers, got {}",
                self.depth + 1,
                self.layers.len()
            )));
        }
        if self.readout.nrows() != self.rank || self.readout.ncols() != self.rank {
            return Err(Error::invalid("readout must be rank x rank"));
        }
        for (l, layer) in self.layers.iter().enumerate() {
            if !(0.0..=1.0).contains(&layer.gamma) {
                return Err(Error::invalid(format!("gamma of layer {l} outside [0, 1]")));
            }
            if layer.a.nrows() != self.rank
                || layer.a.ncols() != self.rank
                || layer.b.nrows() != self.rank
                || layer.b.ncols() != self.width
                || layer.bias.len() != self.rank
            {
                return Err(Error::invalid(format!("layer {l} has inconsistent shapes")));
            }
            if layer.samples.len() != self.width {
                return Err(Error::invalid(format!(
                    "layer {l} must hold {} sample points",
                    self.width
                )));
            }
            for s in &layer.samples {
                if s.basis() != &self.basis || s.rank() != self.rank {
                    return Err(Error::invalid(format!(
                        "layer {l} sample points must share the state basis and rank"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Total scalar count: per layer `R^2 + R M + R + 1` plus readout `R^2`
    /// plus the per-layer sample-point scalars.
    pub fn count_params(&self) -> usize {
        let (r, m, blocks) = (self.rank, self.width, self.depth + 1);
        blocks * (r * r + r * m + r + 1) + r * r + blocks * m * r
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("parameters serialize to JSON")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let p: GeoParams =
            serde_json::from_str(s).map_err(|e| Error::Config(format!("parameter JSON: {e}")))?;
        p.validate()?;
        Ok(p)
    }
}

pub(crate) fn matvec(m: &Array2<f64>, x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; m.nrows()];
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (j, xj) in x.iter().enumerate() {
            acc += m[(i, j)] * xj;
        }
        *o = acc;
    }
    out
}

/// Forward pass: `depth + 1` gated layers, each sampling `g` at `M` shifted
/// points, followed by the readout in coefficient space.
pub fn geo_forward(
    params: &GeoParams,
    g: &ObjectiveG,
    noise: &CoeffVec,
    basis: &Basis,
) -> Result<CoeffVec> {
    params.validate()?;
    if noise.rank() != params.rank || noise.basis() != &params.basis {
        return Err(Error::invalid("noise must match the state basis and rank"));
    }
    if basis.spec() != &params.basis {
        return Err(Error::invalid("runtime basis does not match the parameters"));
    }
    let mut x = noise.clone();
    for layer in &params.layers {
        x = layer_forward(params, layer, g, &x, basis)?;
    }
    let out = matvec(&params.readout, x.coeffs());
    CoeffVec::new(params.basis.clone(), out)
}

fn layer_forward(
    params: &GeoParams,
    layer: &GeoLayer,
    g: &ObjectiveG,
    x: &CoeffVec,
    basis: &Basis,
) -> Result<CoeffVec> {
    let ax = matvec(&layer.a, x.coeffs());
    let mut v = vec![0.0; params.width];
    for (m, sample) in layer.samples.iter().enumerate() {
        v[m] = g.eval(&x.add(sample));
    }
    let bv = matvec(&layer.b, &v);
    let pre: Vec<f64> = ax
        .iter()
        .zip(bv.iter().zip(layer.bias.iter()))
        .map(|(a, (b, c))| a + (b + c))
        .collect();
    let pre = CoeffVec::new(params.basis.clone(), pre)?;
    let act = params.prox.sigma(params.tau, &pre, params.rank, basis)?;
    Ok(x.scale(layer.gamma).axpy(1.0 - layer.gamma, &act))
}

/// Constructs the weights under which the forward pass reproduces the
/// projected splitting iterate of the given decay-compliant schedule: width
/// `R + 1`, sample points `delta e_0, ..., delta e_{R-1}, 0`, signed
/// g-weight rows assembling `-lambda_l` times the divided difference,
/// identity state weights, gates `1 - alpha_l`, identity readout.
///
/// The schedule's `L` active steps occupy the first `L` layers; the
/// terminal layer record carries a unit gate, which makes it the identity
/// map and keeps the declared `L + 1`-layer shape.
pub fn build_theoretical_geo(
    f: &ProxFn,
    schedule: &SplitSchedule,
    basis: &BasisSpec,
    noise: NoiseSpec,
) -> Result<GeoParams> {
    let c = schedule
        .decay_constant()
        .ok_or_else(|| Error::invalid("theoretical weights need a decay-compliant schedule"))?;
    if !schedule.is_decay_compliant(c) {
        return Err(Error::invalid("schedule violates its recorded decay bound"));
    }
    let r = schedule.rank;
    let m = r + 1;
    let samples: Vec<CoeffVec> = (0..m)
        .map(|i| {
            let mut s = CoeffVec::zeros(basis.clone(), r);
            if i < r {
                s.coeffs_mut()[i] = schedule.delta;
            }
            s
        })
        .collect();
    let mut layers = Vec::with_capacity(schedule.horizon + 1);
    for l in 0..schedule.horizon {
        let ratio = schedule.lambdas[l] / schedule.delta;
        let mut b = Array2::zeros((r, m));
        for i in 0..r {
            b[(i, i)] = -ratio;
            b[(i, r)] = ratio;
        }
        layers.push(GeoLayer {
            a: Array2::eye(r),
            b,
            bias: Array1::zeros(r),
            gamma: 1.0 - schedule.alphas[l],
            samples: samples.clone(),
        });
    }
    // Terminal record: unit gate, so the layer is the identity.
    layers.push(GeoLayer {
        a: Array2::eye(r),
        b: Array2::zeros((r, m)),
        bias: Array1::zeros(r),
        gamma: 1.0,
        samples: samples.clone(),
    });
    let params = GeoParams {
        basis: basis.clone(),
        rank: r,
        depth: schedule.horizon,
        width: m,
        layers,
        readout: Array2::eye(r),
        prox: f.clone(),
        tau: 1.0,
        noise,
    };
    params.validate()?;
    Ok(params)
}
