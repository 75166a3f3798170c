//! Catalog of convex functions with closed-form scaled proximal operators,
//! the finite-rank activation `sigma_f`, and an independent brute-force
//! proximal oracle.
//!
//! Pointwise members (box indicator, weighted l1, reaction) act on function
//! values: over the standard basis the coefficients are the values, over the
//! Hermite basis the vector is lifted to the quadrature nodes, the scalar
//! prox is applied per node, and the result is re-encoded. The exact prox of
//! a pointwise function does not preserve the finite-rank subspace; the
//! composed map is precisely the projected activation up to quadrature.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{Basis, CoeffVec};

/// Which closed form the reaction prox uses.
///
/// `Resolvent` solves `y + tau Q'(y) = u` for the reaction antiderivative
/// `Q(s) = s^2/4` on negatives, giving `y = u / (1 + tau/2)` below zero.
/// `QuarterShrink` is the map `u - min(u, 0)/4`, which shrinks the negative
/// part by a fixed quarter independently of `tau`; it is kept as an
/// alternate flag but does not solve the scaled resolvent equation (the
/// brute-force oracle confirms the resolvent form).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum ReactionForm {
    #[default]
    Resolvent,
    QuarterShrink,
}

/// A member of the supported catalog of proper convex lower-semicontinuous
/// functions with closed-form scaled proximal operators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ProxFn {
    /// `f = 0`; prox is the identity.
    Zero,
    /// Indicator of the pointwise box `[lo, hi]`; prox is the clamp.
    /// Infinite bounds are allowed (`lo = -inf`, `hi = +inf`).
    IndicatorBox { lo: f64, hi: f64 },
    /// Weighted l1 / pointwise absolute-value integral; prox is the soft
    /// threshold at `tau * weight`.
    L1 { weight: f64 },
    /// `f(x) = (c/2) ||x||^2`; prox shrinks by `1/(1 + tau c)`.
    Quadratic { c: f64 },
    /// Pointwise reaction energy `Q(s) = s^2/4` for `s < 0`, zero otherwise.
    Reaction { form: ReactionForm },
}

impl ProxFn {
    pub fn reaction() -> Self {
        ProxFn::Reaction {
            form: ReactionForm::Resolvent,
        }
    }

    /// The default catalog exercised by oracle-agreement checks.
    pub fn catalog() -> Vec<ProxFn> {
        vec![
            ProxFn::Zero,
            ProxFn::IndicatorBox { lo: -1.0, hi: 1.0 },
            ProxFn::IndicatorBox {
                lo: 0.0,
                hi: f64::INFINITY,
            },
            ProxFn::L1 { weight: 1.0 },
            ProxFn::Quadratic { c: 1.0 },
            ProxFn::reaction(),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            ProxFn::IndicatorBox { lo, hi } => {
                if !(lo < hi) {
                    return Err(Error::invalid("indicator box requires lo < hi"));
                }
                Ok(())
            }
            ProxFn::L1 { weight } => {
                if !(weight > 0.0) {
                    return Err(Error::invalid("l1 weight must be positive"));
                }
                Ok(())
            }
            ProxFn::Quadratic { c } => {
                if !(c > 0.0) {
                    return Err(Error::invalid("quadratic coefficient must be positive"));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Whether this member acts on function values (needs lifting over the
    /// Hermite basis) rather than being expressible in any orthonormal
    /// coordinates.
    pub fn is_pointwise(&self) -> bool {
        matches!(
            self,
            ProxFn::IndicatorBox { .. } | ProxFn::L1 { .. } | ProxFn::Reaction { .. }
        )
    }

    /// Scalar prox `argmin_s tau f(s) + (s - u)^2 / 2`.
    pub fn point_prox(&self, tau: f64, u: f64) -> f64 {
        match *self {
            ProxFn::Zero => u,
            ProxFn::IndicatorBox { lo, hi } => u.clamp(lo, hi),
            ProxFn::L1 { weight } => {
                let t = tau * weight;
                if u > t {
                    u - t
                } else if u < -t {
                    u + t
                } else {
                    0.0
                }
            }
            ProxFn::Quadratic { c } => u / (1.0 + tau * c),
            ProxFn::Reaction { form } => match form {
                ReactionForm::Resolvent => {
                    if u >= 0.0 {
                        u
                    } else {
                        u / (1.0 + tau / 2.0)
                    }
                }
                ReactionForm::QuarterShrink => u - u.min(0.0) / 4.0,
            },
        }
    }

    /// Fixed subgradient convention at kinks, consumed by reverse-mode
    /// differentiation: clamp boundaries take the interior derivative, the
    /// soft threshold takes 0 at the exact threshold, the reaction takes 1
    /// at zero.
    pub fn point_deriv(&self, tau: f64, u: f64) -> f64 {
        match *self {
            ProxFn::Zero => 1.0,
            ProxFn::IndicatorBox { lo, hi } => {
                if u >= lo && u <= hi {
                    1.0
                } else {
                    0.0
                }
            }
            ProxFn::L1 { weight } => {
                if u.abs() <= tau * weight {
                    0.0
                } else {
                    1.0
                }
            }
            ProxFn::Quadratic { c } => 1.0 / (1.0 + tau * c),
            ProxFn::Reaction { form } => match form {
                ReactionForm::Resolvent => {
                    if u >= 0.0 {
                        1.0
                    } else {
                        1.0 / (1.0 + tau / 2.0)
                    }
                }
                ReactionForm::QuarterShrink => {
                    if u >= 0.0 {
                        1.0
                    } else {
                        0.75
                    }
                }
            },
        }
    }

    /// Distance from `u` to the nearest kink of the scalar prox (infinite
    /// for smooth members). Used by the gradient checker to skip
    /// kink-adjacent coordinates.
    pub fn kink_distance(&self, tau: f64, u: f64) -> f64 {
        match *self {
            ProxFn::Zero | ProxFn::Quadratic { .. } => f64::INFINITY,
            ProxFn::IndicatorBox { lo, hi } => {
                let mut d = f64::INFINITY;
                if lo.is_finite() {
                    d = d.min((u - lo).abs());
                }
                if hi.is_finite() {
                    d = d.min((u - hi).abs());
                }
                d
            }
            ProxFn::L1 { weight } => {
                let t = tau * weight;
                (u - t).abs().min((u + t).abs())
            }
            ProxFn::Reaction { .. } => u.abs(),
        }
    }

    /// Scalar value of the pointwise integrand (or coordinate term).
    fn point_value(&self, u: f64) -> f64 {
        match *self {
            ProxFn::Zero => 0.0,
            ProxFn::IndicatorBox { lo, hi } => {
                if u >= lo && u <= hi {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            ProxFn::L1 { weight } => weight * u.abs(),
            ProxFn::Quadratic { c } => c / 2.0 * u * u,
            ProxFn::Reaction { .. } => {
                if u < 0.0 {
                    u * u / 4.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Scaled proximal evaluation `prox_{tau f}(x)`.
    pub fn prox_eval(&self, tau: f64, x: &CoeffVec, basis: &Basis) -> Result<CoeffVec> {
        if !(tau > 0.0) {
            return Err(Error::invalid("prox scale tau must be positive"));
        }
        self.validate()?;
        if self.is_pointwise() && !basis.is_standard() {
            let values = basis.lift_to_quadrature(x);
            let proxed: Vec<f64> = values.iter().map(|&u| self.point_prox(tau, u)).collect();
            basis.encode_node_values(&proxed, x.rank())
        } else {
            let coeffs = x.coeffs().iter().map(|&u| self.point_prox(tau, u)).collect();
            CoeffVec::new(x.basis().clone(), coeffs)
        }
    }

    /// Rank-`r` activation: projection composed with the scaled prox, in the
    /// same-rank zero-padded representation.
    pub fn sigma(&self, tau: f64, x: &CoeffVec, r: usize, basis: &Basis) -> Result<CoeffVec> {
        if r == 0 || r > x.rank() {
            return Err(Error::invalid(format!(
                "activation rank {} out of range 1..={}",
                r,
                x.rank()
            )));
        }
        Ok(self.prox_eval(tau, x, basis)?.project_padded(r))
    }

    /// Extended-real value `f(x)`; indicator violations yield `+inf`.
    /// Pointwise integrals are evaluated by quadrature over the Hermite
    /// basis.
    pub fn value(&self, x: &CoeffVec, basis: &Basis) -> f64 {
        match self {
            ProxFn::Zero => 0.0,
            ProxFn::Quadratic { c } => {
                let n = x.norm();
                c / 2.0 * n * n
            }
            _ if !basis.is_standard() => {
                let values = basis.lift_to_quadrature(x);
                let mut acc = 0.0;
                for (v, w) in values.iter().zip(basis.quadrature_weights()) {
                    let term = self.point_value(*v);
                    if term.is_infinite() {
                        return f64::INFINITY;
                    }
                    acc += w * term;
                }
                acc
            }
            _ => {
                let mut acc = 0.0;
                for &v in x.coeffs() {
                    let term = self.point_value(v);
                    if term.is_infinite() {
                        return f64::INFINITY;
                    }
                    acc += term;
                }
                acc
            }
        }
    }

    /// Brute-force scaled prox: per coordinate (or per quadrature node), a
    /// grid search over a bracket guaranteed to contain the minimizer,
    /// followed by ternary refinement. Independent of the closed forms.
    pub fn prox_bruteforce(
        &self,
        tau: f64,
        x: &CoeffVec,
        resolution: f64,
        basis: &Basis,
    ) -> Result<CoeffVec> {
        if !(tau > 0.0) {
            return Err(Error::invalid("prox scale tau must be positive"));
        }
        if !(resolution > 0.0) {
            return Err(Error::invalid("resolution must be positive"));
        }
        if self.is_pointwise() && !basis.is_standard() {
            let values = basis.lift_to_quadrature(x);
            let proxed: Vec<f64> = values
                .iter()
                .map(|&u| self.scalar_bruteforce(tau, u, resolution))
                .collect();
            basis.encode_node_values(&proxed, x.rank())
        } else {
            let coeffs = x
                .coeffs()
                .iter()
                .map(|&u| self.scalar_bruteforce(tau, u, resolution))
                .collect();
            CoeffVec::new(x.basis().clone(), coeffs)
        }
    }

    fn scalar_bruteforce(&self, tau: f64, u: f64, resolution: f64) -> f64 {
        // Bracket wide enough to contain the minimizer for every catalog
        // member: base radius plus the scaled slope bound of f.
        let slope = match *self {
            ProxFn::L1 { weight } => weight,
            ProxFn::Reaction { .. } => 0.5 * (1.0 + u.abs()),
            _ => 0.0,
        };
        let radius = 1.0 + u.abs() + tau * slope;
        let (mut lo_b, mut hi_b) = (u - radius, u + radius);
        if let ProxFn::IndicatorBox { lo, hi } = *self {
            lo_b = lo_b.max(lo);
            hi_b = hi_b.min(hi);
            if lo_b > hi_b {
                // The box lies outside the base bracket; the minimizer is
                // its near edge.
                if lo > u {
                    lo_b = lo;
                    hi_b = hi.min(lo + 2.0 * radius);
                } else {
                    hi_b = hi;
                    lo_b = lo.max(hi - 2.0 * radius);
                }
            }
        }
        let h = |s: f64| tau * self.point_value(s) + 0.5 * (s - u) * (s - u);
        let steps = ((hi_b - lo_b) / resolution).ceil() as usize;
        let mut best = lo_b;
        let mut best_val = h(lo_b);
        for k in 1..=steps {
            let s = lo_b + (hi_b - lo_b) * k as f64 / steps as f64;
            let v = h(s);
            if v < best_val {
                best_val = v;
                best = s;
            }
        }
        // Ternary refinement of the convex objective around the grid
        // minimum.
        let mut a = (best - (hi_b - lo_b) / steps as f64).max(lo_b);
        let mut b = (best + (hi_b - lo_b) / steps as f64).min(hi_b);
        for _ in 0..200 {
            if b - a < resolution * 1e-9 {
                break;
            }
            let m1 = a + (b - a) / 3.0;
            let m2 = b - (b - a) / 3.0;
            if h(m1) <= h(m2) {
                b = m2;
            } else {
                a = m1;
            }
        }
        0.5 * (a + b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::BasisSpec;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn vec2(basis: &Basis, coeffs: Vec<f64>) -> CoeffVec {
        CoeffVec::new(basis.spec().clone(), coeffs).unwrap()
    }

    #[test]
    fn relu_is_prox_of_nonnegative_indicator() {
        let basis = Basis::standard(2);
        let f = ProxFn::IndicatorBox {
            lo: 0.0,
            hi: f64::INFINITY,
        };
        for tau in [0.1, 1.0, 10.0] {
            let y = f.prox_eval(tau, &vec2(&basis, vec![-1.0, 2.0]), &basis).unwrap();
            assert_eq!(y.coeffs(), &[0.0, 2.0]);
        }
    }

    #[test]
    fn soft_threshold_matches_catalog_form() {
        let basis = Basis::standard(3);
        let f = ProxFn::L1 { weight: 1.0 };
        let y = f
            .prox_eval(1.0, &vec2(&basis, vec![2.0, -0.5, 0.0]), &basis)
            .unwrap();
        assert_eq!(y.coeffs(), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn quadratic_prox_halves_at_unit_scale() {
        let basis = Basis::standard(2);
        let f = ProxFn::Quadratic { c: 1.0 };
        let y = f.prox_eval(1.0, &vec2(&basis, vec![3.0, -4.0]), &basis).unwrap();
        assert_eq!(y.coeffs(), &[1.5, -2.0]);
    }

    #[test]
    fn quadratic_prox_satisfies_resolvent_identity() {
        // y = prox(x) iff y + tau c y = x for the smooth member.
        let basis = Basis::standard(1);
        let f = ProxFn::Quadratic { c: 1.0 };
        for x in [0.3, -2.5, 11.0] {
            let y = f.prox_eval(1.0, &vec2(&basis, vec![x]), &basis).unwrap().coeffs()[0];
            assert_eq!(y + 1.0 * 1.0 * y, x, "resolvent identity must be exact");
        }
    }

    #[test]
    fn reaction_resolvent_values() {
        let f = ProxFn::reaction();
        // tau = 1, u = -0.6: y (1 + 1/2) = u.
        assert_abs_diff_eq!(f.point_prox(1.0, -0.6), -0.4, epsilon = 1e-15);
        // tau = 0.5, u = -1: y = -1 / 1.25.
        assert_abs_diff_eq!(f.point_prox(0.5, -1.0), -0.8, epsilon = 1e-15);
        assert_eq!(f.point_prox(1.0, 0.7), 0.7);
    }

    #[test]
    fn reaction_quarter_shrink_differs_from_resolvent() {
        // The quarter-shrink map is not the scaled resolvent at tau = 1;
        // the brute-force oracle sides with the resolvent.
        let quarter = ProxFn::Reaction {
            form: ReactionForm::QuarterShrink,
        };
        let resolvent = ProxFn::reaction();
        let basis = Basis::standard(1);
        let x = vec2(&basis, vec![-0.6]);
        let brute = resolvent.prox_bruteforce(1.0, &x, 1e-6, &basis).unwrap();
        assert_abs_diff_eq!(brute.coeffs()[0], -0.4, epsilon = 1e-5);
        assert_abs_diff_eq!(quarter.point_prox(1.0, -0.6), -0.45, epsilon = 1e-15);
    }

    #[test]
    fn sigma_zero_is_projection() {
        let basis = Basis::standard(3);
        let x = vec2(&basis, vec![1.0, 2.0, 3.0]);
        let y = ProxFn::Zero.sigma(1.0, &x, 2, &basis).unwrap();
        assert_eq!(y.coeffs(), &[1.0, 2.0, 0.0]);
    }

    #[test]
    fn sigma_full_rank_standard_is_relu() {
        let basis = Basis::standard(2);
        let f = ProxFn::IndicatorBox {
            lo: 0.0,
            hi: f64::INFINITY,
        };
        let y = f.sigma(1.0, &vec2(&basis, vec![-0.3, 0.8]), 2, &basis).unwrap();
        assert_eq!(y.coeffs(), &[0.0, 0.8]);
    }

    #[test]
    fn sigma_soft_threshold_truncates() {
        let basis = Basis::standard(3);
        let f = ProxFn::L1 { weight: 1.0 };
        let y = f.sigma(1.0, &vec2(&basis, vec![2.0, -0.5, 1.5]), 2, &basis).unwrap();
        assert_eq!(y.coeffs(), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn fn_value_examples() {
        let basis = Basis::standard(2);
        let boxf = ProxFn::IndicatorBox { lo: -1.0, hi: 1.0 };
        assert_eq!(boxf.value(&vec2(&basis, vec![0.5, -0.2]), &basis), 0.0);
        assert_eq!(boxf.value(&vec2(&basis, vec![1.5, 0.0]), &basis), f64::INFINITY);
        let l1 = ProxFn::L1 { weight: 1.0 };
        assert_eq!(l1.value(&vec2(&basis, vec![2.0, -3.0]), &basis), 5.0);
    }

    #[test]
    fn rejects_bad_scale_and_parameters() {
        let basis = Basis::standard(1);
        let x = vec2(&basis, vec![1.0]);
        assert!(ProxFn::Zero.prox_eval(0.0, &x, &basis).is_err());
        assert!(ProxFn::Zero.prox_eval(-1.0, &x, &basis).is_err());
        assert!((ProxFn::L1 { weight: 0.0 }).prox_eval(1.0, &x, &basis).is_err());
        assert!((ProxFn::IndicatorBox { lo: 1.0, hi: 1.0 }).validate().is_err());
    }

    #[test]
    fn hermite_pointwise_prox_is_lift_prox_encode() {
        let basis = Basis::hermite(8);
        let mut rng = crate::rng::Substreams::new(21).stream("proxh");
        let coeffs: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x = vec2(&basis, coeffs);
        let f = ProxFn::reaction();
        let y = f.prox_eval(1.0, &x, &basis).unwrap();
        let manual: Vec<f64> = basis
            .lift_to_quadrature(&x)
            .iter()
            .map(|&u| if u >= 0.0 { u } else { u / 1.5 })
            .collect();
        let expected = basis.encode_node_values(&manual, 8).unwrap();
        assert!(y.sub(&expected).norm() < 1e-14);
    }

    #[test]
    fn hermite_sigma_zeroes_trailing_coefficients() {
        let basis = Basis::hermite(8);
        let mut rng = crate::rng::Substreams::new(22).stream("sigmh");
        let coeffs: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x = vec2(&basis, coeffs);
        let y = ProxFn::reaction().sigma(1.0, &x, 5, &basis).unwrap();
        assert_eq!(y.rank(), 8);
        assert_eq!(&y.coeffs()[5..], &[0.0, 0.0, 0.0]);
    }

    fn random_vec(basis: &Basis, rank: usize, rng: &mut impl Rng, scale: f64) -> CoeffVec {
        let coeffs: Vec<f64> = (0..rank).map(|_| rng.gen_range(-scale..scale)).collect();
        CoeffVec::new(basis.spec().clone(), coeffs).unwrap()
    }

    #[test]
    fn firm_nonexpansiveness_and_lipschitz() {
        // <prox x - prox y, x - y> >= ||prox x - prox y||^2 up to slack, and
        // the induced 1-Lipschitz bound, over 100 random pairs per member.
        let basis = Basis::standard(4);
        let mut rng = crate::rng::Substreams::new(23).stream("firm");
        for f in ProxFn::catalog() {
            for tau in [0.1, 1.0, 10.0] {
                for _ in 0..100 {
                    let x = random_vec(&basis, 4, &mut rng, 3.0);
                    let y = random_vec(&basis, 4, &mut rng, 3.0);
                    let px = f.prox_eval(tau, &x, &basis).unwrap();
                    let py = f.prox_eval(tau, &y, &basis).unwrap();
                    let dp = px.sub(&py);
                    let dx = x.sub(&y);
                    assert!(
                        dp.norm() * dp.norm() <= dp.dot(&dx) + 1e-12,
                        "firm nonexpansiveness failed for {f:?} at tau {tau}"
                    );
                    assert!(
                        dp.norm() <= dx.norm() + 1e-12,
                        "1-Lipschitz failed for {f:?} at tau {tau}"
                    );
                }
            }
        }
    }

    #[test]
    fn bruteforce_agrees_with_closed_forms() {
        let basis = Basis::standard(3);
        let mut rng = crate::rng::Substreams::new(24).stream("brute");
        let resolution = 1e-4;
        for f in ProxFn::catalog() {
            for tau in [0.1, 1.0, 10.0] {
                for _ in 0..20 {
                    let x = random_vec(&basis, 3, &mut rng, 4.0);
                    let exact = f.prox_eval(tau, &x, &basis).unwrap();
                    let brute = f.prox_bruteforce(tau, &x, resolution, &basis).unwrap();
                    assert!(
                        exact.linf_dist(&brute) <= 2.0 * resolution,
                        "oracle disagreement for {f:?} at tau {tau}: {}",
                        exact.linf_dist(&brute)
                    );
                }
            }
        }
    }

    #[test]
    fn bruteforce_soft_threshold_case() {
        let basis = Basis::standard(1);
        let f = ProxFn::L1 { weight: 1.0 };
        let y = f
            .prox_bruteforce(2.0, &vec2(&basis, vec![3.0]), 1e-4, &basis)
            .unwrap();
        assert_abs_diff_eq!(y.coeffs()[0], 1.0, epsilon = 1e-4);
    }

    #[test]
    fn bruteforce_box_outside_base_bracket() {
        let basis = Basis::standard(1);
        let f = ProxFn::IndicatorBox { lo: 5.0, hi: 7.0 };
        let y = f
            .prox_bruteforce(1.0, &vec2(&basis, vec![0.0]), 1e-4, &basis)
            .unwrap();
        assert_abs_diff_eq!(y.coeffs()[0], 5.0, epsilon = 2e-4);
    }

    #[test]
    fn subgradient_conventions_at_kinks() {
        let boxf = ProxFn::IndicatorBox { lo: -1.0, hi: 1.0 };
        assert_eq!(boxf.point_deriv(1.0, 1.0), 1.0);
        assert_eq!(boxf.point_deriv(1.0, 1.0 + 1e-12), 0.0);
        let l1 = ProxFn::L1 { weight: 1.0 };
        assert_eq!(l1.point_deriv(1.0, 1.0), 0.0);
        assert_eq!(l1.point_deriv(1.0, 1.0 + 1e-9), 1.0);
        assert_eq!(ProxFn::reaction().point_deriv(1.0, 0.0), 1.0);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn scalar_prox_is_monotone(u in -10.0f64..10.0, v in -10.0f64..10.0, tau in 0.01f64..10.0) {
                for f in ProxFn::catalog() {
                    let (a, b) = if u <= v { (u, v) } else { (v, u) };
                    prop_assert!(f.point_prox(tau, a) <= f.point_prox(tau, b) + 1e-15);
                }
            }

            #[test]
            fn scalar_prox_is_nonexpansive(u in -10.0f64..10.0, v in -10.0f64..10.0, tau in 0.01f64..10.0) {
                for f in ProxFn::catalog() {
                    let d = (f.point_prox(tau, u) - f.point_prox(tau, v)).abs();
                    prop_assert!(d <= (u - v).abs() + 1e-12);
                }
            }
        }
    }

    #[test]
    fn basis_independent_member_agrees_across_bases() {
        let std_basis = Basis::standard(4);
        let herm = Basis::hermite(4);
        let f = ProxFn::Quadratic { c: 2.0 };
        let xs = vec![0.4, -1.1, 2.0, 0.0];
        let a = f
            .prox_eval(0.5, &CoeffVec::new(BasisSpec::standard(4), xs.clone()).unwrap(), &std_basis)
            .unwrap();
        let b = f
            .prox_eval(0.5, &CoeffVec::new(herm.spec().clone(), xs).unwrap(), &herm)
            .unwrap();
        assert_eq!(a.coeffs(), b.coeffs());
    }
}
