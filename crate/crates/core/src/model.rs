//! Continuous problem data: the interval with its four boundary values, the
//! right-hand-side families, and the quartic `w̄_M` that solves `w'''' = M`
//! under the same boundary conditions.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{domain, usage, Result};

/// Boundary value problem `w'''' = f(x, w)` on `[a, b]` with
/// `w(a) = alpha1`, `w(b) = alpha2`, `w''(a) = beta1`, `w''(b) = beta2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BvpSpec {
    pub a: f64,
    pub b: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub beta1: f64,
    pub beta2: f64,
}

impl BvpSpec {
    pub fn new(a: f64, b: f64, alpha1: f64, alpha2: f64, beta1: f64, beta2: f64) -> Result<Self> {
        let spec = BvpSpec {
            a,
            b,
            alpha1,
            alpha2,
            beta1,
            beta2,
        };
        if [a, b, alpha1, alpha2, beta1, beta2]
            .iter()
            .any(|v| !v.is_finite())
        {
            return Err(domain("boundary data must be finite"));
        }
        if b <= a {
            return Err(usage(format!(
                "interval must satisfy b > a, got [{a}, {b}]"
            )));
        }
        Ok(spec)
    }

    pub fn length(&self) -> f64 {
        self.b - self.a
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.a && x <= self.b
    }

    pub(crate) fn check_point(&self, x: f64) -> Result<()> {
        if !x.is_finite() || !self.contains(x) {
            return Err(domain(format!("{x} is outside [{}, {}]", self.a, self.b)));
        }
        Ok(())
    }

    /// Largest magnitude among the four boundary values.
    pub fn boundary_scale(&self) -> f64 {
        [self.alpha1, self.alpha2, self.beta1, self.beta2]
            .iter()
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type FieldFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Linear one-sided spring `f(x, y) = -K (y - g(x)) H(y - g(x))`.
///
/// `g` and `g'` are supplied together; `g'` is only used by truncation
/// diagnostics and is never approximated numerically.
#[derive(Clone)]
pub struct PiecewiseLinearContact {
    stiffness: f64,
    surface: ScalarFn,
    surface_slope: ScalarFn,
}

impl PiecewiseLinearContact {
    pub fn new<G, D>(stiffness: f64, surface: G, surface_slope: D) -> Result<Self>
    where
        G: Fn(f64) -> f64 + Send + Sync + 'static,
        D: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        if !stiffness.is_finite() || stiffness < 0.0 {
            return Err(usage(format!(
                "stiffness must be finite and >= 0, got {stiffness}"
            )));
        }
        Ok(PiecewiseLinearContact {
            stiffness,
            surface: Arc::new(surface),
            surface_slope: Arc::new(surface_slope),
        })
    }

    pub fn stiffness(&self) -> f64 {
        self.stiffness
    }

    pub fn surface(&self, x: f64) -> f64 {
        (self.surface)(x)
    }

    pub fn surface_slope(&self, x: f64) -> f64 {
        (self.surface_slope)(x)
    }

    /// Contact force at deflection `y`. `H(0) = 0`.
    pub fn force(&self, x: f64, y: f64) -> f64 {
        let gap = y - self.surface(x);
        if gap > 0.0 && self.stiffness > 0.0 {
            -self.stiffness * gap
        } else {
            0.0
        }
    }

    /// The same right-hand side seen through the general interface (`M = 0`).
    pub fn as_general(&self) -> GeneralMonotone {
        let me = self.clone();
        GeneralMonotone {
            eval: Arc::new(move |x, y| me.force(x, y)),
            bound: 0.0,
        }
    }
}

impl fmt::Debug for PiecewiseLinearContact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PiecewiseLinearContact")
            .field("stiffness", &self.stiffness)
            .finish_non_exhaustive()
    }
}

/// Arbitrary `f(x, y)` claimed to be bounded above by `bound` and
/// non-increasing in `y`. The claim is checked by [`validate_rhs`], not
/// enforced.
#[derive(Clone)]
pub struct GeneralMonotone {
    eval: FieldFn,
    bound: f64,
}

impl GeneralMonotone {
    pub fn new<F>(eval: F, bound: f64) -> Result<Self>
    where
        F: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        if !bound.is_finite() {
            return Err(domain("upper bound M must be finite"));
        }
        Ok(GeneralMonotone {
            eval: Arc::new(eval),
            bound,
        })
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn value(&self, x: f64, y: f64) -> f64 {
        (self.eval)(x, y)
    }
}

impl fmt::Debug for GeneralMonotone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GeneralMonotone")
            .field("bound", &self.bound)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone)]
pub enum RightHandSide {
    General(GeneralMonotone),
    Contact(PiecewiseLinearContact),
}

impl RightHandSide {
    /// Upper bound `M` (zero for the contact family).
    pub fn bound(&self) -> f64 {
        match self {
            RightHandSide::General(g) => g.bound,
            RightHandSide::Contact(_) => 0.0,
        }
    }

    /// Unchecked evaluation used inside solver loops.
    pub(crate) fn value(&self, x: f64, y: f64) -> f64 {
        match self {
            RightHandSide::General(g) => g.value(x, y),
            RightHandSide::Contact(c) => c.force(x, y),
        }
    }

    pub fn eval(&self, x: f64, y: f64) -> Result<f64> {
        if !x.is_finite() || !y.is_finite() {
            return Err(domain(format!(
                "f({x}, {y}) requested at a non-finite point"
            )));
        }
        Ok(self.value(x, y))
    }

    pub fn as_contact(&self) -> Option<&PiecewiseLinearContact> {
        match self {
            RightHandSide::Contact(c) => Some(c),
            RightHandSide::General(_) => None,
        }
    }
}

impl From<PiecewiseLinearContact> for RightHandSide {
    fn from(c: PiecewiseLinearContact) -> Self {
        RightHandSide::Contact(c)
    }
}

impl From<GeneralMonotone> for RightHandSide {
    fn from(g: GeneralMonotone) -> Self {
        RightHandSide::General(g)
    }
}

/// Evaluates `f(x, y)`; rejects non-finite arguments.
pub fn eval_rhs(rhs: &RightHandSide, x: f64, y: f64) -> Result<f64> {
    rhs.eval(x, y)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Violation {
    pub x: f64,
    pub y1: f64,
    pub y2: f64,
    pub f1: f64,
    pub f2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub samples: usize,
    /// Half-width `Y` of the sampled deflection range `[-Y, Y]`.
    pub y_range: f64,
    pub monotonicity_violations: usize,
    pub bound_violations: usize,
    /// First few monotonicity witnesses, kept for diagnostics.
    pub witnesses: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.monotonicity_violations == 0 && self.bound_violations == 0
    }
}

const MAX_WITNESSES: usize = 8;

/// Randomized check of the upper bound `f <= M` and of monotonicity in `y`
/// on `n_samples` triples `(x, y1 >= y2)` drawn from
/// `[a, b] x [-Y, Y]^2`, `Y = 10 (1 + max |boundary value|)`.
pub fn validate_rhs(
    rhs: &RightHandSide,
    spec: &BvpSpec,
    n_samples: usize,
    seed: u64,
) -> Result<ValidationReport> {
    if n_samples == 0 {
        return Err(usage("validate_rhs needs at least one sample"));
    }
    let y_range = 10.0 * (1.0 + spec.boundary_scale());
    let bound = rhs.bound();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = ValidationReport {
        samples: n_samples,
        y_range,
        monotonicity_violations: 0,
        bound_violations: 0,
        witnesses: Vec::new(),
    };
    for _ in 0..n_samples {
        let x = rng.random_range(spec.a..=spec.b);
        let u = rng.random_range(-y_range..=y_range);
        let v = rng.random_range(-y_range..=y_range);
        let (y1, y2) = if u >= v { (u, v) } else { (v, u) };
        let f1 = rhs.value(x, y1);
        let f2 = rhs.value(x, y2);
        if f1 > f2 {
            report.monotonicity_violations += 1;
            if report.witnesses.len() < MAX_WITNESSES {
                report.witnesses.push(Violation { x, y1, y2, f1, f2 });
            }
        }
        report.bound_violations += usize::from(f1 > bound) + usize::from(f2 > bound);
    }
    Ok(report)
}

/// The quartic `w̄_M` in powers of `(x - a)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReferenceQuartic {
    pub a: f64,
    pub coeffs: [f64; 5],
}

impl ReferenceQuartic {
    pub fn new(spec: &BvpSpec, m: f64) -> Self {
        let l = spec.length();
        let BvpSpec {
            alpha1,
            alpha2,
            beta1,
            beta2,
            ..
        } = *spec;
        let coeffs = [
            alpha1,
            (alpha2 - alpha1) / l - (beta2 + 2.0 * beta1) * l / 6.0 + m * l.powi(3) / 24.0,
            beta1 / 2.0,
            (beta2 - beta1) / (6.0 * l) - m * l / 12.0,
            m / 24.0,
        ];
        ReferenceQuartic { a: spec.a, coeffs }
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.derivative(0, x)
    }

    /// `k`-th derivative, differentiated term by term.
    pub fn derivative(&self, k: usize, x: f64) -> f64 {
        let t = x - self.a;
        let mut acc = 0.0;
        for p in (k..5).rev() {
            let falling = ((p - k + 1)..=p).fold(1.0, |f, q| f * q as f64);
            acc = acc * t + self.coeffs[p] * falling;
        }
        acc
    }
}

/// `w̄_M(x)`.
pub fn wbar(spec: &BvpSpec, m: f64, x: f64) -> Result<f64> {
    spec.check_point(x)?;
    Ok(ReferenceQuartic::new(spec, m).eval(x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit_spec(beta: f64) -> BvpSpec {
        BvpSpec::new(0.0, 1.0, 0.0, 0.0, beta, beta).unwrap()
    }

    fn vocal_contact() -> PiecewiseLinearContact {
        PiecewiseLinearContact::new(1e4, |x| x / 2.0, |_| 0.5).unwrap()
    }

    #[test]
    fn spec_rejects_bad_interval() {
        assert!(BvpSpec::new(1.0, 1.0, 0.0, 0.0, 0.0, 0.0).is_err());
        assert!(BvpSpec::new(0.0, f64::NAN, 0.0, 0.0, 0.0, 0.0).is_err());
        assert!(BvpSpec::new(0.0, 1.0, f64::INFINITY, 0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn contact_force_values() {
        let rhs = RightHandSide::from(vocal_contact());
        assert_eq!(eval_rhs(&rhs, 0.5, 0.1).unwrap(), 0.0);
        let f = eval_rhs(&rhs, 0.5, 0.35).unwrap();
        assert!((f + 1000.0).abs() < 1e-9, "{f}");
        assert_eq!(eval_rhs(&rhs, 0.3, 0.15).unwrap(), 0.0);
        assert!(eval_rhs(&rhs, f64::NAN, 0.0).is_err());
        assert!(eval_rhs(&rhs, 0.0, f64::INFINITY).is_err());
    }

    #[test]
    fn negative_stiffness_rejected() {
        assert!(PiecewiseLinearContact::new(-1.0, |x| x, |_| 1.0).is_err());
    }

    #[test]
    fn validation_contact_is_clean() {
        let spec = unit_spec(-20.0);
        for seed in 0..5 {
            let rhs = RightHandSide::from(vocal_contact());
            assert!(validate_rhs(&rhs, &spec, 500, seed).unwrap().is_clean());
            let general = RightHandSide::from(vocal_contact().as_general());
            assert!(validate_rhs(&general, &spec, 500, seed).unwrap().is_clean());
        }
    }

    #[test]
    fn validation_flags_increasing_function() {
        let spec = unit_spec(-20.0);
        let rhs = RightHandSide::from(GeneralMonotone::new(|_, y| y, 0.0).unwrap());
        let report = validate_rhs(&rhs, &spec, 100, 3).unwrap();
        assert!(report.monotonicity_violations > 0);
        assert!(!report.witnesses.is_empty());
    }

    #[test]
    fn validation_cubic_only_violates_bound() {
        let spec = unit_spec(-20.0);
        let rhs = RightHandSide::from(GeneralMonotone::new(|_, y| -y * y * y, 0.0).unwrap());
        let report = validate_rhs(&rhs, &spec, 1000, 11).unwrap();
        assert_eq!(report.monotonicity_violations, 0);
        assert!(report.bound_violations > 0);
    }

    #[test]
    fn validation_is_deterministic() {
        let spec = unit_spec(-20.0);
        let rhs = RightHandSide::from(GeneralMonotone::new(|_, y| y.sin(), 0.5).unwrap());
        let r1 = validate_rhs(&rhs, &spec, 300, 42).unwrap();
        let r2 = validate_rhs(&rhs, &spec, 300, 42).unwrap();
        assert_eq!(r1, r2);
        assert!(validate_rhs(&rhs, &spec, 0, 42).is_err());
    }

    #[test]
    fn wbar_examples() {
        let zero = unit_spec(0.0);
        for i in 0..=10 {
            assert_eq!(wbar(&zero, 0.0, i as f64 / 10.0).unwrap(), 0.0);
        }
        let spec = unit_spec(-20.0);
        assert!((wbar(&spec, 0.0, 0.5).unwrap() - 2.5).abs() < 1e-14);
        let q = ReferenceQuartic::new(&spec, 0.0);
        for i in 0..=20 {
            let x = i as f64 / 20.0;
            assert!((q.eval(x) + 10.0 * x * (x - 1.0)).abs() < 1e-13);
        }
        assert!((q.derivative(2, 0.0) + 20.0).abs() < 1e-12);
        assert!(wbar(&spec, 0.0, 1.5).is_err());
    }

    fn finite_spec() -> impl Strategy<Value = (BvpSpec, f64)> {
        (
            -5.0..5.0f64,
            0.1..4.0f64,
            prop::array::uniform4(-50.0..50.0f64),
            -1e3..1e3f64,
        )
            .prop_map(|(a, len, bc, m)| {
                (
                    BvpSpec::new(a, a + len, bc[0], bc[1], bc[2], bc[3]).unwrap(),
                    m,
                )
            })
    }

    proptest! {
        #[test]
        fn wbar_meets_boundary_conditions((spec, m) in finite_spec()) {
            let q = ReferenceQuartic::new(&spec, m);
            let tol = |v: f64| 1e-12 * (1.0 + v.abs()) * (1.0 + m.abs() * spec.length().powi(4));
            prop_assert!((q.eval(spec.a) - spec.alpha1).abs() <= 1e-12 * (1.0 + spec.alpha1.abs()));
            prop_assert!((q.eval(spec.b) - spec.alpha2).abs() <= tol(spec.alpha2) * 10.0);
            let rel = |got: f64, want: f64| (got - want).abs() <= 1e-10 * (1.0 + want.abs() + m.abs() * spec.length().powi(2));
            prop_assert!(rel(q.derivative(2, spec.a), spec.beta1));
            prop_assert!(rel(q.derivative(2, spec.b), spec.beta2));
            prop_assert!((q.derivative(4, 0.3 * spec.a + 0.7 * spec.b) - m).abs() <= 1e-10 * (1.0 + m.abs()));
        }
    }
}
