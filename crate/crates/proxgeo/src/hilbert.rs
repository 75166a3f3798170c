//! Finite-rank representation of the ambient separable Hilbert space:
//! bases, projection/lifting/encoding, quadrature, and the derivative
//! matrix needed by the reaction-diffusion energy.
//!
//! Two basis kinds are supported. `StandardEuclidean` identifies the space
//! with `R^d` and works purely in coefficient space. `HermiteGaussian` uses
//! the Hermite functions `e_j(u) = H_j(u) (2^j j!)^{-1/2} pi^{-1/4} e^{-u^2/2}`
//! as an orthonormal basis of `L^2(R)`; inner products are computed by
//! Gauss-Hermite quadrature with weight-folded nodes, with the node count
//! fixed at four times the maximum rank so that products of two basis
//! functions within rank are integrated exactly.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Basis descriptor. Cheap to clone and compare; the runtime tables live in
/// [`Basis`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BasisKind {
    /// Coordinates of `R^d`; no pointwise evaluation.
    StandardEuclidean { dim: usize },
    /// Hermite functions on `L^2(R)` with a Gauss-Hermite quadrature rule.
    HermiteGaussian { quadrature_nodes: usize },
}

/// Declares which basis a [`CoeffVec`] is expressed in and how many basis
/// elements are representable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisSpec {
    pub kind: BasisKind,
    pub max_rank: usize,
}

impl BasisSpec {
    /// Standard basis of `R^d` with `max_rank = d`.
    pub fn standard(dim: usize) -> Self {
        BasisSpec {
            kind: BasisKind::StandardEuclidean { dim },
            max_rank: dim,
        }
    }

    /// Hermite-Gaussian basis with the default node count `4 * max_rank`.
    pub fn hermite(max_rank: usize) -> Self {
        BasisSpec {
            kind: BasisKind::HermiteGaussian {
                quadrature_nodes: 4 * max_rank,
            },
            max_rank,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_rank == 0 {
            return Err(Error::invalid("max_rank must be at least 1"));
        }
        match self.kind {
            BasisKind::StandardEuclidean { dim } => {
                if self.max_rank > dim {
                    return Err(Error::invalid(format!(
                        "max_rank {} exceeds dimension {}",
                        self.max_rank, dim
                    )));
                }
            }
            BasisKind::HermiteGaussian { quadrature_nodes } => {
                if quadrature_nodes < 4 * self.max_rank {
                    return Err(Error::invalid(format!(
                        "quadrature_nodes {} below 4 * max_rank = {}",
                        quadrature_nodes,
                        4 * self.max_rank
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Coefficient vector of an element of the rank-`R` subspace, with respect
/// to a declared basis.
///
/// Vectors are combinable (added, compared, subtracted) only when both the
/// basis and the rank match; mixing them is a programming error and panics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoeffVec {
    basis: BasisSpec,
    coeffs: Vec<f64>,
}

impl CoeffVec {
    pub fn new(basis: BasisSpec, coeffs: Vec<f64>) -> Result<Self> {
        basis.validate()?;
        if coeffs.is_empty() || coeffs.len() > basis.max_rank {
            return Err(Error::invalid(format!(
                "rank {} out of range 1..={}",
                coeffs.len(),
                basis.max_rank
            )));
        }
        if !coeffs.iter().all(|c| c.is_finite()) {
            return Err(Error::invalid("coefficients must be finite"));
        }
        Ok(CoeffVec { basis, coeffs })
    }

    pub fn zeros(basis: BasisSpec, rank: usize) -> Self {
        CoeffVec::new(basis, vec![0.0; rank]).expect("zero vector is always valid")
    }

    pub fn basis(&self) -> &BasisSpec {
        &self.basis
    }

    pub fn rank(&self) -> usize {
        self.coeffs.len()
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    fn assert_compatible(&self, other: &CoeffVec) {
        assert_eq!(self.basis, other.basis, "coefficient vectors use different bases");
        assert_eq!(self.rank(), other.rank(), "coefficient vectors have different ranks");
    }

    pub fn add(&self, other: &CoeffVec) -> CoeffVec {
        self.assert_compatible(other);
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + b).collect();
        CoeffVec { basis: self.basis.clone(), coeffs }
    }

    pub fn sub(&self, other: &CoeffVec) -> CoeffVec {
        self.assert_compatible(other);
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a - b).collect();
        CoeffVec { basis: self.basis.clone(), coeffs }
    }

    pub fn scale(&self, s: f64) -> CoeffVec {
        let coeffs = self.coeffs.iter().map(|a| a * s).collect();
        CoeffVec { basis: self.basis.clone(), coeffs }
    }

    /// `self + s * other`.
    pub fn axpy(&self, s: f64, other: &CoeffVec) -> CoeffVec {
        self.assert_compatible(other);
        let coeffs = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| a + s * b)
            .collect();
        CoeffVec { basis: self.basis.clone(), coeffs }
    }

    pub fn dot(&self, other: &CoeffVec) -> f64 {
        self.assert_compatible(other);
        self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.coeffs.iter().map(|a| a * a).sum::<f64>().sqrt()
    }

    pub fn linf_dist(&self, other: &CoeffVec) -> f64 {
        self.assert_compatible(other);
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// First `r` coefficients, as a rank-`r` vector.
    pub fn project(&self, r: usize) -> CoeffVec {
        assert!(r >= 1 && r <= self.rank(), "projection rank out of range");
        CoeffVec {
            basis: self.basis.clone(),
            coeffs: self.coeffs[..r].to_vec(),
        }
    }

    /// Same-rank representation of the projection: coefficients at indices
    /// `>= r` are exactly zero.
    pub fn project_padded(&self, r: usize) -> CoeffVec {
        assert!(r >= 1 && r <= self.rank(), "projection rank out of range");
        let mut coeffs = self.coeffs.clone();
        for c in coeffs.iter_mut().skip(r) {
            *c = 0.0;
        }
        CoeffVec { basis: self.basis.clone(), coeffs }
    }

    /// Zero-pad to a higher rank within the same basis.
    pub fn pad_to(&self, rank: usize) -> CoeffVec {
        assert!(rank >= self.rank() && rank <= self.basis.max_rank);
        let mut coeffs = self.coeffs.clone();
        coeffs.resize(rank, 0.0);
        CoeffVec { basis: self.basis.clone(), coeffs }
    }
}

/// A function sampled on a strictly increasing grid; the discrete carrier
/// for elements of `L^2(R)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFn {
    nodes: Vec<f64>,
    values: Vec<f64>,
}

impl GridFn {
    pub fn new(nodes: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if nodes.len() != values.len() {
            return Err(Error::invalid("nodes and values must have equal length"));
        }
        if nodes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("nodes must be strictly increasing"));
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("values must be finite"));
        }
        Ok(GridFn { nodes, values })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Trapezoid-rule `L^2` norm on the grid.
    pub fn l2_norm(&self) -> f64 {
        trapezoid(&self.nodes, &self.values.iter().map(|v| v * v).collect::<Vec<_>>()).sqrt()
    }

    /// Relative `L^2` distance to another grid function on the same nodes.
    pub fn rel_l2_dist(&self, other: &GridFn) -> f64 {
        assert_eq!(self.nodes, other.nodes, "grid functions on different grids");
        let diff: Vec<f64> = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .collect();
        let denom: Vec<f64> = other.values.iter().map(|v| v * v).collect();
        (trapezoid(&self.nodes, &diff) / trapezoid(&other.nodes, &denom)).sqrt()
    }

    /// Two-column `node,value` CSV.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("node,value\n");
        for (n, v) in self.nodes.iter().zip(&self.values) {
            out.push_str(&format!("{n},{v}\n"));
        }
        out
    }
}

/// Composite trapezoid rule on an arbitrary strictly increasing grid.
pub fn trapezoid(nodes: &[f64], values: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 1..nodes.len() {
        acc += 0.5 * (values[i] + values[i - 1]) * (nodes[i] - nodes[i - 1]);
    }
    acc
}

/// Runtime basis: the descriptor plus quadrature tables (empty for the
/// standard basis). Immutable after construction and shareable across
/// threads.
#[derive(Debug, Clone)]
pub struct Basis {
    spec: BasisSpec,
    nodes: Vec<f64>,
    folded_weights: Vec<f64>,
    /// `values[(k, j)] = e_j(u_k)` on the quadrature nodes.
    values: Array2<f64>,
}

impl Basis {
    pub fn new(spec: BasisSpec) -> Result<Self> {
        spec.validate()?;
        match spec.kind {
            BasisKind::StandardEuclidean { .. } => Ok(Basis {
                spec,
                nodes: Vec::new(),
                folded_weights: Vec::new(),
                values: Array2::zeros((0, 0)),
            }),
            BasisKind::HermiteGaussian { quadrature_nodes } => {
                let (nodes, folded_weights) = gauss_hermite(quadrature_nodes);
                let mut values = Array2::zeros((quadrature_nodes, spec.max_rank));
                for (k, &u) in nodes.iter().enumerate() {
                    let row = hermite_functions(u, spec.max_rank);
                    for (j, v) in row.into_iter().enumerate() {
                        values[(k, j)] = v;
                    }
                }
                Ok(Basis {
                    spec,
                    nodes,
                    folded_weights,
                    values,
                })
            }
        }
    }

    pub fn standard(dim: usize) -> Self {
        Basis::new(BasisSpec::standard(dim)).expect("standard basis spec is valid")
    }

    pub fn hermite(max_rank: usize) -> Self {
        Basis::new(BasisSpec::hermite(max_rank)).expect("hermite basis spec is valid")
    }

    pub fn spec(&self) -> &BasisSpec {
        &self.spec
    }

    pub fn max_rank(&self) -> usize {
        self.spec.max_rank
    }

    pub fn is_standard(&self) -> bool {
        matches!(self.spec.kind, BasisKind::StandardEuclidean { .. })
    }

    /// Quadrature nodes (Hermite basis only).
    pub fn quadrature_nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Weight-folded quadrature weights: `integral f(u) du ~ sum_k w_k f(u_k)`.
    pub fn quadrature_weights(&self) -> &[f64] {
        &self.folded_weights
    }

    /// Pointwise evaluation `e_j(u)`.
    ///
    /// The standard basis has no pointwise evaluation; it is handled purely
    /// in coefficient space.
    pub fn eval(&self, j: usize, u: f64) -> Result<f64> {
        if j >= self.spec.max_rank {
            return Err(Error::invalid(format!(
                "basis index {} out of range 0..{}",
                j, self.spec.max_rank
            )));
        }
        match self.spec.kind {
            BasisKind::StandardEuclidean { .. } => Err(Error::UnsupportedBasis(
                "standard basis has no pointwise evaluation".into(),
            )),
            BasisKind::HermiteGaussian { .. } => Ok(hermite_functions(u, j + 1)[j]),
        }
    }

    /// Encode a grid function into its first `r` basis coefficients.
    ///
    /// If the grid coincides with the quadrature nodes the Gauss-Hermite
    /// rule is used; otherwise the grid must be dense enough for the
    /// composite trapezoid rule, which is applied directly.
    pub fn encode(&self, x: &GridFn, r: usize) -> Result<CoeffVec> {
        self.check_rank(r)?;
        if self.is_standard() {
            return Err(Error::UnsupportedBasis(
                "standard basis encodes raw vectors, not grid functions".into(),
            ));
        }
        if x.len() < 2 {
            return Err(Error::invalid("grid too short for quadrature"));
        }
        if self.matches_quadrature(x.nodes()) {
            return self.encode_node_values(x.values(), r);
        }
        // Dense-grid fallback: trapezoid inner products against e_j.
        let mut coeffs = vec![0.0; r];
        let mut ej = vec![0.0; x.len()];
        for j in 0..r {
            for (k, &u) in x.nodes().iter().enumerate() {
                ej[k] = hermite_functions(u, j + 1)[j] * x.values()[k];
            }
            coeffs[j] = trapezoid(x.nodes(), &ej);
        }
        CoeffVec::new(self.spec.clone(), coeffs)
    }

    /// Encode values sampled on the quadrature nodes (Gauss-Hermite rule).
    pub fn encode_node_values(&self, values: &[f64], r: usize) -> Result<CoeffVec> {
        self.check_rank(r)?;
        if values.len() != self.nodes.len() {
            return Err(Error::invalid(format!(
                "expected {} node values, got {}",
                self.nodes.len(),
                values.len()
            )));
        }
        let mut coeffs = vec![0.0; r];
        for j in 0..r {
            let mut acc = 0.0;
            for k in 0..values.len() {
                acc += self.folded_weights[k] * values[k] * self.values[(k, j)];
            }
            coeffs[j] = acc;
        }
        CoeffVec::new(self.spec.clone(), coeffs)
    }

    /// Direct read-off of the first `r` coordinates (standard basis).
    pub fn encode_raw(&self, x: &[f64], r: usize) -> Result<CoeffVec> {
        self.check_rank(r)?;
        match self.spec.kind {
            BasisKind::StandardEuclidean { dim } => {
                if x.len() != dim {
                    return Err(Error::invalid(format!(
                        "expected a length-{dim} vector, got {}",
                        x.len()
                    )));
                }
                CoeffVec::new(self.spec.clone(), x[..r].to_vec())
            }
            BasisKind::HermiteGaussian { .. } => self.encode_node_values(x, r),
        }
    }

    /// Pointwise sum `sum_j z_j e_j(node)` at each node. For the standard
    /// basis the coefficients are returned as values (the nodes only fix the
    /// output length, which must equal the dimension).
    pub fn lift(&self, z: &CoeffVec, nodes: &[f64]) -> GridFn {
        assert_eq!(&self.spec, z.basis(), "coefficient vector from a different basis");
        match self.spec.kind {
            BasisKind::StandardEuclidean { dim } => {
                assert_eq!(nodes.len(), dim, "node count must equal the dimension");
                GridFn::new(nodes.to_vec(), z.coeffs().to_vec())
                    .expect("lift of finite coefficients is a valid grid function")
            }
            BasisKind::HermiteGaussian { .. } => {
                let values = nodes
                    .iter()
                    .map(|&u| {
                        let e = hermite_functions(u, z.rank());
                        e.iter().zip(z.coeffs()).map(|(a, b)| a * b).sum()
                    })
                    .collect();
                GridFn::new(nodes.to_vec(), values)
                    .expect("lift of finite coefficients is a valid grid function")
            }
        }
    }

    /// Values of the lifted function on the quadrature nodes, computed from
    /// the precomputed table (Hermite basis only).
    pub fn lift_to_quadrature(&self, z: &CoeffVec) -> Vec<f64> {
        assert_eq!(&self.spec, z.basis(), "coefficient vector from a different basis");
        self.lift_values(z.coeffs())
    }

    /// Table-based lift of raw coefficients onto the quadrature nodes.
    pub fn lift_values(&self, coeffs: &[f64]) -> Vec<f64> {
        assert!(!self.is_standard(), "standard basis has no quadrature grid");
        assert!(coeffs.len() <= self.spec.max_rank);
        let mut out = vec![0.0; self.nodes.len()];
        for (k, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (j, c) in coeffs.iter().enumerate() {
                acc += self.values[(k, j)] * c;
            }
            *o = acc;
        }
        out
    }

    /// Adjoint of [`Basis::lift_values`]: `out_j = sum_k vals_k e_j(u_k)`
    /// without quadrature weights.
    pub fn lift_adjoint(&self, node_vals: &[f64], r: usize) -> Vec<f64> {
        assert!(!self.is_standard(), "standard basis has no quadrature grid");
        assert_eq!(node_vals.len(), self.nodes.len());
        let mut out = vec![0.0; r];
        for (j, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (k, v) in node_vals.iter().enumerate() {
                acc += self.values[(k, j)] * v;
            }
            *o = acc;
        }
        out
    }

    /// Matrix `D` of the first-derivative operator in Hermite coefficients,
    /// truncated to `r x r`: `lift(D z) ~ d/du lift(z)` up to rank
    /// truncation. `D` is exactly antisymmetric.
    pub fn derivative_matrix(&self, r: usize) -> Result<Array2<f64>> {
        self.check_rank(r)?;
        if self.is_standard() {
            return Err(Error::UnsupportedBasis(
                "derivative matrix requires the Hermite basis".into(),
            ));
        }
        let mut d = Array2::zeros((r, r));
        for j in 1..r {
            let v = (j as f64 / 2.0).sqrt();
            d[(j - 1, j)] = v;
            d[(j, j - 1)] = -v;
        }
        Ok(d)
    }

    /// Quadrature `L^2` norm of values sampled on the quadrature nodes.
    pub fn quad_norm(&self, values: &[f64]) -> f64 {
        assert_eq!(values.len(), self.nodes.len());
        values
            .iter()
            .zip(&self.folded_weights)
            .map(|(v, w)| w * v * v)
            .sum::<f64>()
            .sqrt()
    }

    fn check_rank(&self, r: usize) -> Result<()> {
        if r == 0 || r > self.spec.max_rank {
            return Err(Error::invalid(format!(
                "rank {} out of range 1..={}",
                r, self.spec.max_rank
            )));
        }
        Ok(())
    }

    fn matches_quadrature(&self, nodes: &[f64]) -> bool {
        nodes.len() == self.nodes.len()
            && nodes
                .iter()
                .zip(&self.nodes)
                .all(|(a, b)| (a - b).abs() <= 1e-10)
    }
}

/// Normalized Hermite functions `e_0(u), ..., e_{n-1}(u)` via the
/// three-term recurrence on the functions themselves, avoiding the
/// factorial overflow of the raw polynomials.
pub fn hermite_functions(u: f64, n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    let e0 = std::f64::consts::PI.powf(-0.25) * (-u * u / 2.0).exp();
    out.push(e0);
    if n == 1 {
        return out;
    }
    out.push(std::f64::consts::SQRT_2 * u * e0);
    for j in 1..n - 1 {
        let jf = j as f64;
        let next = u * (2.0 / (jf + 1.0)).sqrt() * out[j] - (jf / (jf + 1.0)).sqrt() * out[j - 1];
        out.push(next);
    }
    out
}

/// Gauss-Hermite nodes and weight-folded weights for the weight `e^{-u^2}`.
///
/// Nodes are the eigenvalues of the Jacobi matrix (Golub-Welsch), polished
/// by Newton iteration on `e_n(u) = 0`. Weights come from the Christoffel
/// function evaluated with the normalized Hermite functions,
/// `w_k e^{u_k^2} = 1 / sum_{j<n} e_j(u_k)^2`, which stays accurate at the
/// extreme nodes where the raw weights underflow.
fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut jacobi = Array2::zeros((n, n));
    for k in 1..n {
        let b = (k as f64 / 2.0).sqrt();
        jacobi[(k - 1, k)] = b;
        jacobi[(k, k - 1)] = b;
    }
    let mut nodes = symmetric_eigenvalues(jacobi).to_vec();
    nodes.sort_by(f64::total_cmp);
    for u in nodes.iter_mut() {
        for _ in 0..4 {
            let e = hermite_functions(*u, n + 1);
            // e_n'(u) = sqrt(2n) e_{n-1}(u) - u e_n(u)
            let deriv = (2.0 * n as f64).sqrt() * e[n - 1] - *u * e[n];
            if deriv == 0.0 {
                break;
            }
            *u -= e[n] / deriv;
        }
    }
    let folded_weights = nodes
        .iter()
        .map(|&u| {
            let e = hermite_functions(u, n);
            1.0 / e.iter().map(|v| v * v).sum::<f64>()
        })
        .collect();
    (nodes, folded_weights)
}

/// Cyclic Jacobi rotation eigensolver for a symmetric matrix.
///
/// Accuracy is what matters here, not speed: the matrices are small
/// (quadrature rules of a few hundred nodes at most) and built once.
fn symmetric_eigenvalues(mut a: Array2<f64>) -> Array1<f64> {
    let n = a.nrows();
    let scale: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(1.0);
    for _sweep in 0..100 {
        let off: f64 = {
            let mut s = 0.0;
            for p in 0..n {
                for q in (p + 1)..n {
                    s += a[(p, q)] * a[(p, q)];
                }
            }
            s.sqrt()
        };
        if off <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
            }
        }
    }
    a.diag().to_owned()
}
