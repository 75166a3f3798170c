//! Reverse-mode differentiation over the closed op set of the equilibrium
//! operator forward pass: matrix-vector products, the gated residual
//! combination, prox activations with the fixed subgradient convention,
//! objective evaluations routed through the analytic gradient, and the
//! readout. Plus bias-corrected Adam and a finite-difference gradient
//! checker.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::geo::{geo_forward, matvec, GeoParams};
use crate::hilbert::{Basis, CoeffVec};
use crate::splitting::ObjectiveG;

/// Cached forward values of one layer, in application order.
#[derive(Debug, Clone)]
struct LayerRecord {
    x_in: Vec<f64>,
    /// Objective samples `v_m = g(x + x_m)`.
    v: Vec<f64>,
    /// Analytic gradients of `g` at the shifted sample points, flattened
    /// row-major (`M x R`).
    sample_grads: Vec<f64>,
    /// Pre-activation in coefficient space.
    pre: Vec<f64>,
    /// Activation output.
    act: Vec<f64>,
}

/// Append-only record of one forward pass: per-layer op caches plus the
/// final state. Inputs of every record precede it, so the backward sweep is
/// a single reverse iteration.
#[derive(Debug, Clone)]
pub struct Tape {
    layers: Vec<LayerRecord>,
    final_state: Vec<f64>,
    output: Vec<f64>,
    width: usize,
}

impl Tape {
    /// Number of op records: per layer one state product, `M` objective
    /// samples, one sample-weight product, one activation, and one gate,
    /// plus the readout. Linear in depth and width by construction.
    pub fn node_count(&self) -> usize {
        self.layers.len() * (self.width + 4) + 1
    }

    pub fn output(&self) -> &[f64] {
        &self.output
    }
}

/// Parameter gradients, shaped like [`GeoParams`].
#[derive(Debug, Clone)]
pub struct GeoGrads {
    pub layers: Vec<LayerGrads>,
    pub readout: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct LayerGrads {
    pub a: Array2<f64>,
    pub b: Array2<f64>,
    pub bias: Array1<f64>,
    pub gamma: f64,
    pub samples: Vec<Vec<f64>>,
}

impl GeoGrads {
    pub fn zeros_like(params: &GeoParams) -> Self {
        let (r, m) = (params.rank, params.width);
        GeoGrads {
            layers: (0..params.layers.len())
                .map(|_| LayerGrads {
                    a: Array2::zeros((r, r)),
                    b: Array2::zeros((r, m)),
                    bias: Array1::zeros(r),
                    gamma: 0.0,
                    samples: vec![vec![0.0; r]; m],
                })
                .collect(),
            readout: Array2::zeros((r, r)),
        }
    }

    /// In-place sum, for fixed-order batch reduction.
    pub fn accumulate(&mut self, other: &GeoGrads) {
        for (l, o) in self.layers.iter_mut().zip(&other.layers) {
            l.a += &o.a;
            l.b += &o.b;
            l.bias += &o.bias;
            l.gamma += o.gamma;
            for (s, os) in l.samples.iter_mut().zip(&o.samples) {
                for (a, b) in s.iter_mut().zip(os) {
                    *a += b;
                }
            }
        }
        self.readout += &other.readout;
    }

    pub fn scale(&mut self, s: f64) {
        for l in self.layers.iter_mut() {
            l.a *= s;
            l.b *= s;
            l.bias *= s;
            l.gamma *= s;
            for sv in l.samples.iter_mut() {
                for a in sv.iter_mut() {
                    *a *= s;
                }
            }
        }
        self.readout *= s;
    }
}

/// Differentiable replay of the forward pass: output is bit-identical to
/// [`geo_forward`], and the tape caches every intermediate needed by
/// [`backward`]. Requires an analytic gradient on `g`.
pub fn forward_record(
    params: &GeoParams,
    g: &ObjectiveG,
    noise: &CoeffVec,
    basis: &Basis,
) -> Result<(CoeffVec, Tape)> {
    params.validate()?;
    if !g.has_grad() {
        return Err(Error::invalid("recording requires an analytic gradient on g"));
    }
    if noise.rank() != params.rank || noise.basis() != &params.basis {
        return Err(Error::invalid("noise must match the state basis and rank"));
    }
    let mut x = noise.clone();
    let mut layers = Vec::with_capacity(params.layers.len());
    let mut shifted = x.clone();
    for layer in &params.layers {
        let ax = matvec(&layer.a, x.coeffs());
        let mut v = vec![0.0; params.width];
        let mut sample_grads = Vec::with_capacity(params.width * params.rank);
        for (m, sample) in layer.samples.iter().enumerate() {
            for ((s, xi), si) in shifted
                .coeffs_mut()
                .iter_mut()
                .zip(x.coeffs())
                .zip(sample.coeffs())
            {
                *s = xi + si;
            }
            v[m] = g.eval(&shifted);
            sample_grads.extend(g.grad(&shifted).expect("checked above").into_coeffs());
        }
        let bv = matvec(&layer.b, &v);
        let pre: Vec<f64> = ax
            .iter()
            .zip(bv.iter().zip(layer.bias.iter()))
            .map(|(a, (b, c))| a + (b + c))
            .collect();
        let pre_cv = CoeffVec::new(params.basis.clone(), pre.clone())?;
        let act = params.prox.sigma(params.tau, &pre_cv, params.rank, basis)?;
        let x_out = x.scale(layer.gamma).axpy(1.0 - layer.gamma, &act);
        layers.push(LayerRecord {
            x_in: x.coeffs().to_vec(),
            v,
            sample_grads,
            pre,
            act: act.coeffs().to_vec(),
        });
        x = x_out;
    }
    let out = matvec(&params.readout, x.coeffs());
    let output = CoeffVec::new(params.basis.clone(), out.clone())?;
    let tape = Tape {
        layers,
        final_state: x.coeffs().to_vec(),
        output: out,
        width: params.width,
    };
    Ok((output, tape))
}

/// Vector-Jacobian product of the activation: coefficientwise prox
/// derivative for the standard basis (and basis-independent members), the
/// lift/pointwise/encode chain otherwise.
fn sigma_vjp(params: &GeoParams, basis: &Basis, pre: &[f64], act_bar: &[f64]) -> Vec<f64> {
    if params.prox.is_pointwise() && !basis.is_standard() {
        let pre_nodes = basis.lift_values(pre);
        // encode adjoint: node cotangent = folded weight times lifted
        // coefficient cotangent.
        let lifted_bar = basis.lift_values(act_bar);
        let node_bar: Vec<f64> = pre_nodes
            .iter()
            .zip(lifted_bar.iter().zip(basis.quadrature_weights()))
            .map(|(u, (t, w))| params.prox.point_deriv(params.tau, *u) * w * t)
            .collect();
        basis.lift_adjoint(&node_bar, pre.len())
    } else {
        pre.iter()
            .zip(act_bar)
            .map(|(u, b)| params.prox.point_deriv(params.tau, *u) * b)
            .collect()
    }
}

/// Gradients of `<seed, output>` with respect to every scalar in the
/// parameters. Prox kinks use the catalog's fixed subgradient convention;
/// cotangents of objective samples are routed through the analytic
/// gradient of `g`. Sample-point gradients are computed here and frozen or
/// not by the optimizer.
pub fn backward(
    tape: &Tape,
    params: &GeoParams,
    basis: &Basis,
    seed: &CoeffVec,
) -> Result<GeoGrads> {
    let mut grads = GeoGrads::zeros_like(params);
    backward_into(tape, params, basis, seed, &mut grads)?;
    Ok(grads)
}

/// [`backward`] accumulating into an existing gradient buffer; the batch
/// loop reuses one accumulator per chunk instead of allocating per sample.
pub fn backward_into(
    tape: &Tape,
    params: &GeoParams,
    basis: &Basis,
    seed: &CoeffVec,
    grads: &mut GeoGrads,
) -> Result<()> {
    if seed.rank() != params.rank {
        return Err(Error::invalid("seed gradient must have the state rank"));
    }
    let r = params.rank;
    // Readout: out = W x_final.
    let out_bar = seed.coeffs();
    for i in 0..r {
        for j in 0..r {
            grads.readout[(i, j)] += out_bar[i] * tape.final_state[j];
        }
    }
    let mut x_bar: Vec<f64> = (0..r)
        .map(|j| (0..r).map(|i| params.readout[(i, j)] * out_bar[i]).sum())
        .collect();
    for (layer, (rec, lg)) in params
        .layers
        .iter()
        .zip(tape.layers.iter().zip(grads.layers.iter_mut()))
        .rev()
        .map(|(p, rl)| (p, rl))
    {
        let gamma = layer.gamma;
        // Gate: x_out = gamma x_in + (1 - gamma) act.
        lg.gamma += rec
            .x_in
            .iter()
            .zip(rec.act.iter().zip(&x_bar))
            .map(|(xi, (ai, bi))| (xi - ai) * bi)
            .sum::<f64>();
        let act_bar: Vec<f64> = x_bar.iter().map(|b| (1.0 - gamma) * b).collect();
        let mut x_in_bar: Vec<f64> = x_bar.iter().map(|b| gamma * b).collect();
        // Activation.
        let pre_bar = sigma_vjp(params, basis, &rec.pre, &act_bar);
        // pre = A x_in + (B v + bias).
        for i in 0..r {
            for j in 0..r {
                lg.a[(i, j)] += pre_bar[i] * rec.x_in[j];
            }
            lg.bias[i] += pre_bar[i];
            for m in 0..params.width {
                lg.b[(i, m)] += pre_bar[i] * rec.v[m];
            }
        }
        for j in 0..r {
            x_in_bar[j] += (0..r).map(|i| layer.a[(i, j)] * pre_bar[i]).sum::<f64>();
        }
        // v_m = g(x_in + x_m): route through the analytic gradient.
        for m in 0..params.width {
            let v_bar: f64 = (0..r).map(|i| layer.b[(i, m)] * pre_bar[i]).sum();
            if v_bar != 0.0 {
                for j in 0..r {
                    let gj = rec.sample_grads[m * r + j];
                    x_in_bar[j] += v_bar * gj;
                    lg.samples[m][j] += v_bar * gj;
                }
            }
        }
        x_bar = x_in_bar;
    }
    Ok(())
}

/// Mean-squared-error loss in coefficient space and its seed gradient.
pub fn mse_loss(output: &CoeffVec, target: &CoeffVec) -> (f64, CoeffVec) {
    let diff = output.sub(target);
    (diff.norm().powi(2), diff.scale(2.0))
}

/// Bias-corrected Adam over a flat parameter vector.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(n: usize, lr: f64) -> Self {
        AdamState {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    /// One update: increments the step counter, refreshes the moment
    /// accumulators, and applies the bias-corrected step.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), grads.len());
        assert_eq!(params.len(), self.m.len());
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grads[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grads[i] * grads[i];
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

fn logit(p: f64) -> f64 {
    let p = p.clamp(1e-12, 1.0 - 1e-12);
    (p / (1.0 - p)).ln()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Flat view of the trainable parameters. Gates are carried as logits so
/// the optimizer works on an unconstrained scalar squashed back onto
/// [0, 1]; sample points occupy slots so the moment accumulators mirror
/// the parameter shape, and are zero-masked while frozen.
#[derive(Debug, Clone)]
pub struct TrainCodec {
    pub train_samples: bool,
    rank: usize,
    width: usize,
    blocks: usize,
}

impl TrainCodec {
    pub fn new(params: &GeoParams, train_samples: bool) -> Self {
        TrainCodec {
            train_samples,
            rank: params.rank,
            width: params.width,
            blocks: params.layers.len(),
        }
    }

    pub fn len(&self) -> usize {
        let (r, m) = (self.rank, self.width);
        self.blocks * (r * r + r * m + r + 1 + m * r) + r * r
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn flatten(&self, params: &GeoParams) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        for layer in &params.layers {
            out.extend(layer.a.iter());
            out.extend(layer.b.iter());
            out.extend(layer.bias.iter());
            out.push(logit(layer.gamma));
            for s in &layer.samples {
                out.extend_from_slice(s.coeffs());
            }
        }
        out.extend(params.readout.iter());
        out
    }

    pub fn unflatten_into(&self, flat: &[f64], params: &mut GeoParams) {
        assert_eq!(flat.len(), self.len());
        let mut k = 0;
        for layer in params.layers.iter_mut() {
            for a in layer.a.iter_mut() {
                *a = flat[k];
                k += 1;
            }
            for b in layer.b.iter_mut() {
                *b = flat[k];
                k += 1;
            }
            for c in layer.bias.iter_mut() {
                *c = flat[k];
                k += 1;
            }
            layer.gamma = sigmoid(flat[k]);
            k += 1;
            for s in layer.samples.iter_mut() {
                for c in s.coeffs_mut() {
                    *c = flat[k];
                    k += 1;
                }
            }
        }
        for w in params.readout.iter_mut() {
            *w = flat[k];
            k += 1;
        }
    }

    /// Gradients in the flat layout: the gate slot carries the chain-rule
    /// factor `gamma (1 - gamma)` of the squashing, and sample slots are
    /// masked while frozen.
    pub fn flatten_grads(&self, params: &GeoParams, grads: &GeoGrads) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        for (layer, lg) in params.layers.iter().zip(&grads.layers) {
            out.extend(lg.a.iter());
            out.extend(lg.b.iter());
            out.extend(lg.bias.iter());
            out.push(lg.gamma * layer.gamma * (1.0 - layer.gamma));
            for s in &lg.samples {
                if self.train_samples {
                    out.extend_from_slice(s);
                } else {
                    out.extend(std::iter::repeat(0.0).take(s.len()));
                }
            }
        }
        out.extend(grads.readout.iter());
        out
    }
}

/// One Adam update in parameter space: flattens, steps, and rebuilds the
/// parameters (gates squashed back onto [0, 1]).
pub fn adam_step_geo(
    params: &GeoParams,
    grads: &GeoGrads,
    state: &mut AdamState,
    codec: &TrainCodec,
) -> GeoParams {
    let mut flat = codec.flatten(params);
    let flat_grads = codec.flatten_grads(params, grads);
    state.step(&mut flat, &flat_grads);
    let mut next = params.clone();
    codec.unflatten_into(&flat, &mut next);
    next
}

/// Branch pattern of the activation inputs: which side of each kink every
/// pre-activation point sits on. Two forwards with equal patterns share the
/// same differentiability region.
fn branch_pattern(params: &GeoParams, basis: &Basis, tape: &Tape) -> Vec<i8> {
    let mut pattern = Vec::new();
    for rec in &tape.layers {
        let points = if params.prox.is_pointwise() && !basis.is_standard() {
            basis.lift_values(&rec.pre)
        } else {
            rec.pre.clone()
        };
        for u in points {
            pattern.push((params.prox.point_deriv(params.tau, u) * 4.0) as i8);
        }
    }
    pattern
}

fn min_kink_distance(params: &GeoParams, basis: &Basis, tape: &Tape) -> f64 {
    let mut dist = f64::INFINITY;
    for rec in &tape.layers {
        let points = if params.prox.is_pointwise() && !basis.is_standard() {
            basis.lift_values(&rec.pre)
        } else {
            rec.pre.clone()
        };
        for u in points {
            dist = dist.min(params.prox.kink_distance(params.tau, u));
        }
    }
    dist
}

/// Central-difference check of [`backward`] against the scalar loss
/// `||output - target||^2`. Coordinates whose perturbed forwards cross a
/// prox kink (branch pattern change, or a nominal pre-activation within
/// `10h` of a kink) are skipped per the fixed-subgradient contract.
/// Returns the max relative error over the checked parameters.
pub fn grad_check(
    params: &GeoParams,
    g: &ObjectiveG,
    noise: &CoeffVec,
    target: &CoeffVec,
    h: f64,
    basis: &Basis,
) -> Result<f64> {
    let (out, tape) = forward_record(params, g, noise, basis)?;
    let (_, seed) = mse_loss(&out, target);
    let grads = backward(&tape, params, basis, &seed)?;
    let codec = TrainCodec::new(params, true);
    let mut flat = codec.flatten(params);
    // The checker perturbs raw parameters, so gates are compared in logit
    // space via the same chain rule the optimizer uses.
    let analytic = codec.flatten_grads(params, &grads);
    let nominal_pattern = branch_pattern(params, basis, &tape);
    let global_margin_ok = min_kink_distance(params, basis, &tape) > 10.0 * h;
    let mut max_rel: f64 = 0.0;
    let mut scratch = params.clone();
    for i in 0..flat.len() {
        let saved = flat[i];
        flat[i] = saved + h;
        codec.unflatten_into(&flat, &mut scratch);
        let (out_p, tape_p) = forward_record(&scratch, g, noise, basis)?;
        let pat_p = branch_pattern(&scratch, basis, &tape_p);
        flat[i] = saved - h;
        codec.unflatten_into(&flat, &mut scratch);
        let (out_m, tape_m) = forward_record(&scratch, g, noise, basis)?;
        let pat_m = branch_pattern(&scratch, basis, &tape_m);
        flat[i] = saved;
        if pat_p != nominal_pattern || pat_m != nominal_pattern || !global_margin_ok {
            continue;
        }
        let (lp, _) = mse_loss(&out_p, target);
        let (lm, _) = mse_loss(&out_m, target);
        let numeric = (lp - lm) / (2.0 * h);
        let denom = numeric.abs().max(analytic[i].abs()).max(1e-3);
        max_rel = max_rel.max((numeric - analytic[i]).abs() / denom);
    }
    Ok(max_rel)
}

/// Convenience wrapper asserting the replay identity during tests and
/// experiments: records and cross-checks against the plain forward.
pub fn forward_record_checked(
    params: &GeoParams,
    g: &ObjectiveG,
    noise: &CoeffVec,
    basis: &Basis,
) -> Result<(CoeffVec, Tape)> {
    let (out, tape) = forward_record(params, g, noise, basis)?;
    debug_assert_eq!(
        out,
        geo_forward(params, g, noise, basis)?,
        "recorded forward must replay the plain forward bit-for-bit"
    );
    Ok((out, tape))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::{GeoLayer, NoiseSpec};
    use crate::hilbert::BasisSpec;
    use crate::prox::ProxFn;
    use crate::splitting::objectives;
    use rand::Rng;

    fn random_params(
        basis: &BasisSpec,
        r: usize,
        depth: usize,
        m: usize,
        prox: ProxFn,
        seed: u64,
    ) -> GeoParams {
        let mut rng = crate::rng::Substreams::new(seed).stream("ad-params");
        let mut layers = Vec::new();
        for _ in 0..=depth {
            let a = Array2::from_shape_fn((r, r), |(i, j)| {
                let eye = if i == j { 1.0 } else { 0.0 };
                eye + 0.05 * rng.gen_range(-1.0..1.0)
            });
            let b = Array2::from_shape_fn((r, m), |_| 0.1 * rng.gen_range(-1.0..1.0));
            let bias = Array1::from_shape_fn(r, |_| 0.1 * rng.gen_range(-1.0..1.0));
            let samples = (0..m)
                .map(|_| {
                    CoeffVec::new(
                        basis.clone(),
                        (0..r).map(|_| 0.3 * rng.gen_range(-1.0..1.0)).collect(),
                    )
                    .unwrap()
                })
                .collect();
            layers.push(GeoLayer {
                a,
                b,
                bias,
                gamma: rng.gen_range(0.2..0.8),
                samples,
            });
        }
        GeoParams {
            basis: basis.clone(),
            rank: r,
            depth,
            width: m,
            layers,
            readout: Array2::from_shape_fn((r, r), |(i, j)| {
                let eye = if i == j { 1.0 } else { 0.0 };
                eye + 0.05 * rng.gen_range(-1.0..1.0)
            }),
            prox,
            tau: 1.0,
            noise: NoiseSpec::zero(),
        }
    }

    fn quad_g(basis: &Basis, d: usize, seed: u64) -> ObjectiveG {
        let mut rng = crate::rng::Substreams::new(seed).stream("ad-quad");
        let w: Vec<f64> = (0..d).map(|_| rng.gen_range(0.5..2.0)).collect();
        let v: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        objectives::diagonal_quadratic(basis, w, v).unwrap()
    }

    fn rand_vec(basis: &Basis, r: usize, seed: u64) -> CoeffVec {
        let mut rng = crate::rng::Substreams::new(seed).stream("ad-vec");
        CoeffVec::new(
            basis.spec().clone(),
            (0..r).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn replay_identity_over_random_configs() {
        for seed in 0..20u64 {
            let basis = Basis::standard(3);
            let prox = ProxFn::catalog()[(seed % 6) as usize].clone();
            let params = random_params(basis.spec(), 3, 3, 4, prox, seed);
            let g = quad_g(&basis, 3, seed);
            let noise = rand_vec(&basis, 3, seed + 100);
            let (out, _) = forward_record(&params, &g, &noise, &basis).unwrap();
            let plain = geo_forward(&params, &g, &noise, &basis).unwrap();
            assert_eq!(out, plain, "seed {seed}: replay must be bit-identical");
        }
    }

    #[test]
    fn tape_node_count_follows_construction() {
        let basis = Basis::standard(2);
        let g = quad_g(&basis, 2, 1);
        let noise = rand_vec(&basis, 2, 1);
        let count = |depth: usize, m: usize| {
            let params = random_params(basis.spec(), 2, depth, m, ProxFn::Zero, 7);
            let (_, tape) = forward_record(&params, &g, &noise, &basis).unwrap();
            tape.node_count()
        };
        assert_eq!(count(3, 4), 4 * (4 + 4) + 1);
        // Linear in depth and in width.
        assert_eq!(count(7, 4) - count(3, 4), 4 * (4 + 4));
        assert_eq!(count(3, 8) - count(3, 4), 4 * 4);
    }

    #[test]
    fn zero_depth_tape_has_single_readout_record() {
        let basis = Basis::standard(2);
        let g = quad_g(&basis, 2, 2);
        let noise = rand_vec(&basis, 2, 2);
        let mut params = random_params(basis.spec(), 2, 0, 2, ProxFn::Zero, 3);
        params.layers[0].gamma = 1.0;
        let (_, tape) = forward_record(&params, &g, &noise, &basis).unwrap();
        assert_eq!(tape.node_count(), 1 * (2 + 4) + 1);
    }

    #[test]
    fn unit_gates_zero_all_layer_weight_gradients() {
        let basis = Basis::standard(3);
        let mut params = random_params(basis.spec(), 3, 3, 4, ProxFn::Zero, 5);
        for layer in params.layers.iter_mut() {
            layer.gamma = 1.0;
        }
        let g = quad_g(&basis, 3, 5);
        let noise = rand_vec(&basis, 3, 5);
        let (_, tape) = forward_record(&params, &g, &noise, &basis).unwrap();
        let seed = rand_vec(&basis, 3, 6);
        let grads = backward(&tape, &params, &basis, &seed).unwrap();
        for lg in &grads.layers {
            assert!(lg.a.iter().all(|&v| v == 0.0));
            assert!(lg.b.iter().all(|&v| v == 0.0));
            assert!(lg.bias.iter().all(|&v| v == 0.0));
            assert!(lg.samples.iter().flatten().all(|&v| v == 0.0));
        }
        assert!(grads.readout.iter().any(|&v| v != 0.0));
    }

    #[test]
    fn gradient_locality_under_downstream_unit_gates() {
        let basis = Basis::standard(2);
        let mut params = random_params(basis.spec(), 2, 3, 3, ProxFn::Zero, 8);
        for layer in params.layers.iter_mut().skip(2) {
            layer.gamma = 1.0;
        }
        let g = quad_g(&basis, 2, 8);
        let noise = rand_vec(&basis, 2, 8);
        let (_, tape) = forward_record(&params, &g, &noise, &basis).unwrap();
        let seed = rand_vec(&basis, 2, 9);
        let grads = backward(&tape, &params, &basis, &seed).unwrap();
        for lg in grads.layers.iter().skip(2) {
            assert!(lg.a.iter().all(|&v| v == 0.0));
            assert!(lg.b.iter().all(|&v| v == 0.0));
        }
        assert!(grads.layers[0].a.iter().any(|&v| v != 0.0));
    }

    #[test]
    fn linear_network_matches_hand_chain_rule() {
        // gamma = 0, B = 0, zero prox: out = W A1 A0 x, so the gradient of
        // <s, out> in A1 is (W' s) (A0 x)' and in A0 is (A1' W' s) x'.
        let basis = Basis::standard(2);
        let mut params = random_params(basis.spec(), 2, 1, 2, ProxFn::Zero, 11);
        for layer in params.layers.iter_mut() {
            layer.gamma = 0.0;
            layer.b = Array2::zeros((2, 2));
            layer.bias = Array1::zeros(2);
        }
        let g = quad_g(&basis, 2, 11);
        let x = rand_vec(&basis, 2, 11);
        let s = rand_vec(&basis, 2, 12);
        let (_, tape) = forward_record(&params, &g, &x, &basis).unwrap();
        let grads = backward(&tape, &params, &basis, &s).unwrap();

        let a0 = &params.layers[0].a;
        let a1 = &params.layers[1].a;
        let w = &params.readout;
        let xv = Array1::from(x.coeffs().to_vec());
        let sv = Array1::from(s.coeffs().to_vec());
        let a0x = a0.dot(&xv);
        let wts = w.t().dot(&sv);
        let expect_a1 = {
            let mut m = Array2::zeros((2, 2));
            for i in 0..2 {
                for j in 0..2 {
                    m[(i, j)] = wts[i] * a0x[j];
                }
            }
            m
        };
        let a1twts = a1.t().dot(&wts);
        let expect_a0 = {
            let mut m = Array2::zeros((2, 2));
            for i in 0..2 {
                for j in 0..2 {
                    m[(i, j)] = a1twts[i] * xv[j];
                }
            }
            m
        };
        for i in 0..2 {
            for j in 0..2 {
                assert!((grads.layers[1].a[(i, j)] - expect_a1[(i, j)]).abs() < 1e-12);
                assert!((grads.layers[0].a[(i, j)] - expect_a0[(i, j)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn grad_check_smooth_network() {
        let basis = Basis::standard(3);
        let params = random_params(basis.spec(), 3, 2, 3, ProxFn::Zero, 13);
        let g = quad_g(&basis, 3, 13);
        let noise = rand_vec(&basis, 3, 13);
        let target = rand_vec(&basis, 3, 14);
        let err = grad_check(&params, &g, &noise, &target, 1e-6, &basis).unwrap();
        assert!(err < 1e-6, "smooth-network gradient error {err}");
    }

    #[test]
    fn grad_check_all_prox_kinds() {
        for (k, prox) in ProxFn::catalog().into_iter().enumerate() {
            for trial in 0..3u64 {
                let seed = 17 + k as u64 * 10 + trial;
                let basis = Basis::standard(3);
                let params = random_params(basis.spec(), 3, 2, 3, prox.clone(), seed);
                let g = quad_g(&basis, 3, seed);
                let noise = rand_vec(&basis, 3, seed);
                let target = rand_vec(&basis, 3, seed + 1);
                let err = grad_check(&params, &g, &noise, &target, 1e-6, &basis).unwrap();
                assert!(err < 1e-4, "{prox:?} trial {trial}: gradient error {err}");
            }
        }
    }

    #[test]
    fn grad_check_hermite_pointwise_path() {
        let basis = Basis::hermite(4);
        let params = random_params(basis.spec(), 4, 2, 3, ProxFn::reaction(), 19);
        let g = quad_g(&basis, 4, 19);
        let noise = rand_vec(&basis, 4, 19);
        let target = rand_vec(&basis, 4, 20);
        let err = grad_check(&params, &g, &noise, &target, 1e-6, &basis).unwrap();
        assert!(err < 1e-4, "hermite path gradient error {err}");
    }

    #[test]
    fn detector_flags_wrong_sign() {
        // Negating the analytic gradient must trip the checker with a
        // relative error near two.
        let basis = Basis::standard(2);
        let params = random_params(basis.spec(), 2, 1, 2, ProxFn::Zero, 23);
        let g = quad_g(&basis, 2, 23);
        let noise = rand_vec(&basis, 2, 23);
        let target = rand_vec(&basis, 2, 24);
        let (out, tape) = forward_record(&params, &g, &noise, &basis).unwrap();
        let (_, seed) = mse_loss(&out, &target);
        let grads = backward(&tape, &params, &basis, &seed).unwrap();
        let codec = TrainCodec::new(&params, true);
        let analytic = codec.flatten_grads(&params, &grads);
        let mut flat = codec.flatten(&params);
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        let mut scratch = params.clone();
        for i in 0..flat.len() {
            let saved = flat[i];
            flat[i] = saved + h;
            codec.unflatten_into(&flat, &mut scratch);
            let (op, _) = forward_record(&scratch, &g, &noise, &basis).unwrap();
            flat[i] = saved - h;
            codec.unflatten_into(&flat, &mut scratch);
            let (om, _) = forward_record(&scratch, &g, &noise, &basis).unwrap();
            flat[i] = saved;
            let numeric = (mse_loss(&op, &target).0 - mse_loss(&om, &target).0) / (2.0 * h);
            let wrong = -analytic[i];
            if numeric.abs() > 1e-3 {
                worst = worst.max((numeric - wrong).abs() / numeric.abs());
            }
        }
        assert!(worst > 1.5, "sign-flip detector too weak: {worst}");
    }

    #[test]
    fn adam_zero_gradient_keeps_parameters() {
        let mut st = AdamState::new(3, 0.1);
        let mut p = vec![1.0, -2.0, 0.5];
        st.step(&mut p, &[0.0, 0.0, 0.0]);
        assert_eq!(p, vec![1.0, -2.0, 0.5]);
        assert_eq!(st.t, 1);
    }

    #[test]
    fn adam_first_step_matches_bias_corrected_form() {
        let mut st = AdamState::new(1, 0.1);
        let mut p = vec![1.0];
        st.step(&mut p, &[1.0]);
        // m_hat = v_hat = 1 at t = 1, so the step is lr / (1 + eps).
        assert!((p[0] - (1.0 - 0.1 / (1.0 + 1e-8))).abs() < 1e-12);
    }

    #[test]
    fn adam_drives_scalar_quadratic_to_zero() {
        let mut st = AdamState::new(1, 0.01);
        let mut p = vec![1.0];
        for _ in 0..1000 {
            let g = p[0];
            st.step(&mut p, &[g]);
        }
        assert!(p[0].abs() < 1e-3, "theta after 1000 steps: {}", p[0]);
    }

    #[test]
    fn adam_descends_on_parameter_shaped_quadratic() {
        // 500 steps on 1/2 ||theta - theta*||^2 over the flat layout.
        let basis = BasisSpec::standard(2);
        let params = random_params(&basis, 2, 2, 3, ProxFn::Zero, 29);
        let codec = TrainCodec::new(&params, true);
        let mut flat = codec.flatten(&params);
        let target: Vec<f64> = flat.iter().map(|v| v + 0.5).collect();
        let loss = |p: &[f64]| -> f64 {
            p.iter().zip(&target).map(|(a, b)| 0.5 * (a - b) * (a - b)).sum()
        };
        let start = loss(&flat);
        let mut st = AdamState::new(flat.len(), 0.01);
        for _ in 0..500 {
            let grads: Vec<f64> = flat.iter().zip(&target).map(|(a, b)| a - b).collect();
            st.step(&mut flat, &grads);
        }
        assert!(loss(&flat) < start, "Adam failed to descend");
    }

    #[test]
    fn codec_round_trips_and_squashes_gates() {
        let basis = BasisSpec::standard(2);
        let params = random_params(&basis, 2, 1, 2, ProxFn::Zero, 31);
        let codec = TrainCodec::new(&params, false);
        let flat = codec.flatten(&params);
        let mut back = params.clone();
        codec.unflatten_into(&flat, &mut back);
        for (a, b) in params.layers.iter().zip(&back.layers) {
            assert!((a.gamma - b.gamma).abs() < 1e-12);
            assert_eq!(a.a, b.a);
        }
        // Frozen samples receive zero gradient through the codec.
        let grads = GeoGrads::zeros_like(&params);
        let mut g2 = grads.clone();
        g2.layers[0].samples[0][0] = 5.0;
        let fg = codec.flatten_grads(&params, &g2);
        let r = params.rank;
        let m = params.width;
        let sample_start = r * r + r * m + r + 1;
        assert_eq!(fg[sample_start], 0.0);
    }

}
