//! Change of variables `h = 1 / r'`.
//!
//! With `r(x) = int_xi^x dy / h(y)` the multiplicative equation
//! `dX = sigma h(X) o dW + F(X) dt` (Stratonovich, or Marcus for jumps)
//! becomes the additive `dZ = sigma dW + F~(Z) dt` for `Z = r(X)`, with
//! `F~ = (F / h) o r^{-1}`. Closed forms cover constant, power and linear
//! `h`; anything else is integrated numerically.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::func::{pow, Multiplier, RealFn};

/// Absolute tolerance of the quadrature behind numeric `r`.
pub const QUADRATURE_TOL: f64 = 1e-10;
/// Tolerance of the root solve behind numeric `r^{-1}`.
pub const INVERSE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransformKind {
    Analytic,
    Numeric,
}

#[derive(Debug, Clone, Copy)]
enum Form {
    /// `h = c`.
    Shift {
        c: f64,
    },
    /// `h = coef x^p`, `p < 1`, `x > 0`.
    Power {
        coef: f64,
        p: f64,
        base: f64,
    },
    /// `h = a x + b`.
    Log {
        a: f64,
        b: f64,
        h_xi: f64,
    },
    Numeric,
}

/// Immutable transform `r` anchored at `r(xi) = 0`.
#[derive(Debug, Clone)]
pub struct Transform {
    h: Multiplier,
    xi: f64,
    domain: (f64, f64),
    z_range: (f64, f64),
    form: Form,
    warnings: Vec<String>,
}

impl Transform {
    pub fn kind(&self) -> TransformKind {
        match self.form {
            Form::Numeric => TransformKind::Numeric,
            _ => TransformKind::Analytic,
        }
    }

    pub fn xi(&self) -> f64 {
        self.xi
    }

    pub fn multiplier(&self) -> &Multiplier {
        &self.h
    }

    /// Open interval on which `r` is defined.
    pub fn domain(&self) -> (f64, f64) {
        self.domain
    }

    /// Image `r(domain)`, ordered low to high.
    pub fn z_range(&self) -> (f64, f64) {
        self.z_range
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn in_domain(&self, x: f64) -> bool {
        x > self.domain.0 && x < self.domain.1
    }

    pub fn r(&self, x: f64) -> f64 {
        match self.form {
            Form::Shift { c } => (x - self.xi) / c,
            Form::Power { coef, p, base } => (pow(x, 1.0 - p) - base) / (coef * (1.0 - p)),
            Form::Log { a, b, h_xi } => ((a * x + b) / h_xi).ln() / a,
            Form::Numeric => integrate_reciprocal(&self.h, self.xi, x),
        }
    }

    pub fn r_inverse(&self, z: f64) -> Result<f64> {
        let (lo, hi) = self.z_range;
        if !(z > lo && z < hi) && z.is_finite() || z.is_nan() {
            return Err(Error::Domain { value: z, lo, hi });
        }
        Ok(match self.form {
            Form::Shift { c } => self.xi + c * z,
            Form::Power { coef, p, base } => {
                let inner = base + coef * (1.0 - p) * z;
                if inner <= 0.0 {
                    return Err(Error::Domain { value: z, lo, hi });
                }
                pow(inner, 1.0 / (1.0 - p))
            }
            Form::Log { a, b, h_xi } => (h_xi * (a * z).exp() - b) / a,
            Form::Numeric => self.solve_inverse(z)?,
        })
    }

    pub fn r_prime(&self, x: f64) -> f64 {
        1.0 / self.h.value(x)
    }

    pub fn r_double_prime(&self, x: f64) -> f64 {
        let hx = self.h.value(x);
        -self.h.derivative(x) / (hx * hx)
    }

    /// Bracketed Newton on `r(x) = z` with bisection fallback.
    fn solve_inverse(&self, z: f64) -> Result<f64> {
        let (dlo, dhi) = self.domain;
        let increasing = self.h.value(self.xi) > 0.0;
        // g(x) = r(x) - z is monotone; find a bracket walking out from xi.
        let g = |x: f64| self.r(x) - z;
        let g_xi = -z;
        if g_xi == 0.0 {
            return Ok(self.xi);
        }
        let go_right = (g_xi < 0.0) == increasing;
        let edge = if go_right { dhi } else { dlo };
        let mut near = self.xi;
        let mut step = 1e-3 * (1.0 + self.xi.abs());
        let mut far;
        loop {
            far = if go_right { near + step } else { near - step };
            let past_edge = if go_right { far >= edge } else { far <= edge };
            if past_edge {
                far = edge - (edge - near) * 1e-12;
                if (g(far) < 0.0) == (g_xi < 0.0) {
                    let (lo, hi) = self.z_range;
                    return Err(Error::Domain { value: z, lo, hi });
                }
                break;
            }
            if (g(far) < 0.0) != (g_xi < 0.0) {
                break;
            }
            near = far;
            step *= 2.0;
        }
        let (mut a, mut b) = if near < far { (near, far) } else { (far, near) };
        let mut ga = g(a);
        let mut x = 0.5 * (a + b);
        for _ in 0..200 {
            let gx = g(x);
            if gx == 0.0 {
                return Ok(x);
            }
            if (gx < 0.0) == (ga < 0.0) {
                a = x;
                ga = gx;
            } else {
                b = x;
            }
            let newton = x - gx * self.h.value(x);
            let next = if newton > a && newton < b {
                newton
            } else {
                0.5 * (a + b)
            };
            if (next - x).abs() <= INVERSE_TOL * (1.0 + x.abs())
                || (b - a) <= INVERSE_TOL * (1.0 + x.abs())
            {
                return Ok(next);
            }
            x = next;
        }
        Ok(x)
    }
}

fn integrate_reciprocal(h: &Multiplier, from: f64, to: f64) -> f64 {
    if from == to {
        return 0.0;
    }
    quadrature::integrate(|y| 1.0 / h.value(y), from, to, QUADRATURE_TOL).integral
}

fn intersect(a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
    (a.0.max(b.0), a.1.min(b.1))
}

/// Builds `r` for `h` anchored at `xi`, preferring closed forms.
///
/// `domain_hint` is an open interval containing `xi`. If `h` changes sign
/// inside it, the domain shrinks to the largest sign-constant piece around
/// `xi` and a warning is recorded.
pub fn build_transform(h: &Multiplier, xi: f64, domain_hint: (f64, f64)) -> Result<Transform> {
    let hx = h.value(xi);
    if hx == 0.0 || !hx.is_finite() {
        return Err(Error::TransformUndefined { xi });
    }
    if !(xi > domain_hint.0 && xi < domain_hint.1) {
        return Err(Error::InvalidParameter(format!(
            "xi = {xi} not inside domain hint ({}, {})",
            domain_hint.0, domain_hint.1
        )));
    }
    let analytic = match *h {
        Multiplier::Constant { value } => Some((Form::Shift { c: value }, domain_hint)),
        Multiplier::Power { coef, exponent } if exponent < 1.0 && exponent != 0.0 && xi > 0.0 => {
            Some((
                Form::Power {
                    coef,
                    p: exponent,
                    base: pow(xi, 1.0 - exponent),
                },
                intersect(domain_hint, (0.0, f64::INFINITY)),
            ))
        }
        Multiplier::Power {
            coef,
            exponent: 0.0,
        } => Some((Form::Shift { c: coef }, domain_hint)),
        Multiplier::Linear {
            slope: 0.0,
            intercept,
        } => Some((Form::Shift { c: intercept }, domain_hint)),
        Multiplier::Linear { slope, intercept } => {
            let root = -intercept / slope;
            let side = if xi > root {
                (root, f64::INFINITY)
            } else {
                (f64::NEG_INFINITY, root)
            };
            Some((
                Form::Log {
                    a: slope,
                    b: intercept,
                    h_xi: hx,
                },
                intersect(domain_hint, side),
            ))
        }
        _ => None,
    };
    match analytic {
        Some((form, domain)) => {
            let mut t = Transform {
                h: h.clone(),
                xi,
                domain,
                z_range: (f64::NEG_INFINITY, f64::INFINITY),
                form,
                warnings: Vec::new(),
            };
            t.z_range = image(&t);
            Ok(t)
        }
        None => build_numeric(h, xi, domain_hint),
    }
}

fn image(t: &Transform) -> (f64, f64) {
    // Every closed form has 1/h non-integrable at infinity, so infinite ends map to infinity.
    let dir = t.h.value(t.xi).signum();
    let edge = |x: f64| {
        if x.is_infinite() {
            x.signum() * dir * f64::INFINITY
        } else {
            t.r(x)
        }
    };
    let a = edge(t.domain.0);
    let b = edge(t.domain.1);
    let (a, b) = (
        if a.is_nan() { f64::NEG_INFINITY } else { a },
        if b.is_nan() { f64::INFINITY } else { b },
    );
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Numeric transform (quadrature for `r`, Newton-bisection for `r^{-1}`).
/// The domain hint must be finite.
pub fn build_numeric(h: &Multiplier, xi: f64, domain_hint: (f64, f64)) -> Result<Transform> {
    let hx = h.value(xi);
    if hx == 0.0 || !hx.is_finite() {
        return Err(Error::TransformUndefined { xi });
    }
    if !(domain_hint.0.is_finite() && domain_hint.1.is_finite()) {
        return Err(Error::InvalidParameter(
            "numeric transforms need a finite domain hint".into(),
        ));
    }
    let mut warnings = Vec::new();
    let sign = hx.signum();
    let scan = |target: f64| -> f64 {
        // Walk from xi to target on a lattice; bisect the first sign change.
        let n = 2000;
        let mut prev = xi;
        for i in 1..=n {
            let x = xi + (target - xi) * i as f64 / n as f64;
            let v = h.value(x);
            if !(v * sign > 0.0) {
                let (mut good, mut bad) = (prev, x);
                for _ in 0..200 {
                    let mid = 0.5 * (good + bad);
                    if h.value(mid) * sign > 0.0 {
                        good = mid;
                    } else {
                        bad = mid;
                    }
                    if (bad - good).abs() < 1e-14 * (1.0 + bad.abs()) {
                        break;
                    }
                }
                return bad;
            }
            prev = x;
        }
        target
    };
    let lo = scan(domain_hint.0);
    let hi = scan(domain_hint.1);
    if lo != domain_hint.0 || hi != domain_hint.1 {
        warnings.push(format!(
            "h changes sign in ({}, {}); domain shrunk to ({lo}, {hi})",
            domain_hint.0, domain_hint.1
        ));
    }
    let mut t = Transform {
        h: h.clone(),
        xi,
        domain: (lo, hi),
        z_range: (f64::NEG_INFINITY, f64::INFINITY),
        form: Form::Numeric,
        warnings,
    };
    let width = hi - lo;
    let a = t.r(lo + 1e-9 * width);
    let b = t.r(hi - 1e-9 * width);
    t.z_range = if a < b { (a, b) } else { (b, a) };
    Ok(t)
}

/// `F~(z) = F(r^{-1}(z)) / h(r^{-1}(z))`.
#[derive(Clone)]
pub struct TransformedDrift {
    drift: RealFn,
    transform: Arc<Transform>,
}

impl TransformedDrift {
    pub fn eval(&self, z: f64) -> Result<f64> {
        let x = self.transform.r_inverse(z)?;
        Ok((self.drift)(x) / self.transform.h.value(x))
    }

    pub fn transform(&self) -> &Transform {
        &self.transform
    }
}

pub fn transformed_drift(drift: RealFn, transform: Arc<Transform>) -> TransformedDrift {
    TransformedDrift { drift, transform }
}

/// Stratonovich-form drift of the discrete-time limit: `F - h h' m2 / 2`.
pub fn strat_correction_drift(drift: RealFn, h: &Multiplier, f0_second_moment: f64) -> RealFn {
    if f0_second_moment == 0.0 || matches!(h, Multiplier::Constant { .. }) {
        return drift;
    }
    let h = h.clone();
    Arc::new(move |x| drift(x) - 0.5 * h.h_h_prime(x) * f0_second_moment)
}

/// Ito-form drift of the discrete-time limit: `F + h h' (sigma2 - m2) / 2`.
pub fn ito_form_drift(drift: RealFn, h: &Multiplier, sigma2: f64, f0_second_moment: f64) -> RealFn {
    let gap = sigma2 - f0_second_moment;
    if gap == 0.0 || matches!(h, Multiplier::Constant { .. }) {
        return drift;
    }
    let h = h.clone();
    Arc::new(move |x| drift(x) + 0.5 * h.h_h_prime(x) * gap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::func::real_fn;
    use proptest::prelude::*;

    const ALL: (f64, f64) = (f64::NEG_INFINITY, f64::INFINITY);

    fn sqrt_h() -> Multiplier {
        Multiplier::Power {
            coef: 1.0,
            exponent: 0.5,
        }
    }

    #[test]
    fn square_root_closed_form() {
        let t = build_transform(&sqrt_h(), 1.0, ALL).unwrap();
        assert_eq!(t.kind(), TransformKind::Analytic);
        assert_eq!(t.domain(), (0.0, f64::INFINITY));
        for x in [0.01, 0.5, 1.0, 2.0, 9.0] {
            assert!((t.r(x) - (2.0 * x.sqrt() - 2.0)).abs() < 1e-14);
        }
        for z in [-1.9, -1.0, 0.0, 3.0] {
            let want = ((z + 2.0) / 2.0f64).powi(2);
            assert!((t.r_inverse(z).unwrap() - want).abs() < 1e-14);
        }
        assert_eq!(t.z_range(), (-2.0, f64::INFINITY));
        assert!(t.r_inverse(-2.5).is_err());
        assert_eq!(t.r(1.0), 0.0);
    }

    #[test]
    fn unit_h_is_a_shift() {
        let t = build_transform(&Multiplier::unit(), 0.7, ALL).unwrap();
        assert_eq!(t.r(1.7), 1.0);
        assert_eq!(t.r_inverse(1.0).unwrap(), 1.7);
    }

    #[test]
    fn linear_h_is_logarithm() {
        let h = Multiplier::Linear {
            slope: 1.0,
            intercept: 0.0,
        };
        let t = build_transform(&h, 1.0, ALL).unwrap();
        assert_eq!(t.domain(), (0.0, f64::INFINITY));
        for x in [0.1, 1.0, 5.0] {
            assert!((t.r(x) - x.ln()).abs() < 1e-15);
        }
        assert!((t.r_inverse(0.5).unwrap() - 0.5f64.exp()).abs() < 1e-15);
        let neg = build_transform(&h, -2.0, ALL).unwrap();
        assert_eq!(neg.domain(), (f64::NEG_INFINITY, 0.0));
        assert!((neg.r_inverse(neg.r(-0.3)).unwrap() + 0.3).abs() < 1e-14);
    }

    #[test]
    fn zero_at_initial_condition_is_rejected() {
        let h = Multiplier::Linear {
            slope: 1.0,
            intercept: 0.0,
        };
        assert_eq!(
            build_transform(&h, 0.0, ALL).unwrap_err(),
            Error::TransformUndefined { xi: 0.0 }
        );
    }

    #[test]
    fn sign_change_shrinks_numeric_domain() {
        let h = Multiplier::custom("cos", |x: f64| x.cos(), |x: f64| -x.sin());
        let t = build_transform(&h, 0.0, (-3.0, 3.0)).unwrap();
        assert_eq!(t.kind(), TransformKind::Numeric);
        let (lo, hi) = t.domain();
        assert!((lo + std::f64::consts::FRAC_PI_2).abs() < 1e-10);
        assert!((hi - std::f64::consts::FRAC_PI_2).abs() < 1e-10);
        assert_eq!(t.warnings().len(), 1);
        // r = atanh(sin x) = ln(sec x + tan x)
        for x in [-1.2f64, -0.3, 0.4, 1.3] {
            let want = (1.0 / x.cos() + x.tan()).ln();
            assert!((t.r(x) - want).abs() < 1e-9, "{x}");
        }
    }

    #[test]
    fn numeric_agrees_with_analytic() {
        for (h, xi, hint) in [
            (sqrt_h(), 1.0, (0.05, 10.0)),
            (
                Multiplier::Linear {
                    slope: 2.0,
                    intercept: 1.0,
                },
                0.5,
                (-0.4, 5.0),
            ),
            (Multiplier::Constant { value: 0.5 }, 0.0, (-3.0, 3.0)),
        ] {
            let a = build_transform(&h, xi, hint).unwrap();
            let n = build_numeric(&h, xi, hint).unwrap();
            assert_eq!(n.kind(), TransformKind::Numeric);
            for i in 1..50 {
                let x = hint.0 + (hint.1 - hint.0) * i as f64 / 50.0;
                assert!((a.r(x) - n.r(x)).abs() < 1e-6, "{x}");
                let z = a.r(x);
                assert!((a.r_inverse(z).unwrap() - n.r_inverse(z).unwrap()).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn numeric_round_trip_and_derivatives() {
        let h = Multiplier::custom("1+x^2", |x: f64| 1.0 + x * x, |x: f64| 2.0 * x);
        let t = build_transform(&h, 0.3, (-4.0, 4.0)).unwrap();
        for i in 0..1000 {
            let x = -3.9 + 7.8 * i as f64 / 999.0;
            let back = t.r_inverse(t.r(x)).unwrap();
            assert!((back - x).abs() < 1e-8, "{x} {back}");
        }
        for x in [-2.0, 0.1, 1.5] {
            let d = 1e-4;
            let fd = (t.r(x + d) - t.r(x - d)) / (2.0 * d);
            assert!(((fd - t.r_prime(x)) / t.r_prime(x)).abs() < 1e-6);
            assert!((t.r_prime(x) * h.value(x) - 1.0).abs() < 1e-6);
            let fd2 = (t.r_prime(x + d) - t.r_prime(x - d)) / (2.0 * d);
            assert!(((fd2 - t.r_double_prime(x)) / t.r_double_prime(x)).abs() < 1e-6);
        }
    }

    #[test]
    fn transformed_drift_examples() {
        // h(x) = x, F(x) = x Q(x) gives F~(z) = Q(e^z)
        let q = |x: f64| 1.0 - x * x;
        let h = Multiplier::Linear {
            slope: 1.0,
            intercept: 0.0,
        };
        let t = Arc::new(build_transform(&h, 1.0, ALL).unwrap());
        let ft = transformed_drift(real_fn(move |x| x * q(x)), t);
        for z in [-1.0, 0.0, 0.7] {
            assert!((ft.eval(z).unwrap() - q(z.exp())).abs() < 1e-13);
        }
        // unit h: shift
        let t = Arc::new(build_transform(&Multiplier::unit(), 0.25, ALL).unwrap());
        let ft = transformed_drift(real_fn(|x| x.sin()), t);
        assert_eq!(ft.eval(0.5).unwrap(), 0.75f64.sin());
    }

    #[test]
    fn transformed_cir_drift_matches_quadrature_oracle() {
        let m2 = 0.319;
        let big_f = real_fn(move |x| 0.5 * (0.75 - x) * m2);
        let a = Arc::new(build_transform(&sqrt_h(), 1.0, ALL).unwrap());
        let n = Arc::new(build_numeric(&sqrt_h(), 1.0, (1e-4, 20.0)).unwrap());
        let fa = transformed_drift(big_f.clone(), a);
        let fnum = transformed_drift(big_f, n);
        for z in [-1.5, -0.5, 0.0, 1.0, 4.0] {
            let x = ((z + 2.0) / 2.0f64).powi(2);
            let closed = 0.5 * (0.75 - x) * m2 / ((z + 2.0) / 2.0);
            assert!((fa.eval(z).unwrap() - closed).abs() < 1e-13);
            assert!((fnum.eval(z).unwrap() - closed).abs() < 1e-6);
        }
        assert!(fa.eval(-2.1).is_err());
    }

    #[test]
    fn drift_corrections() {
        let m2 = 0.319;
        let sigma2 = 0.085;
        let big_f = real_fn(move |x| 0.5 * (0.75 - x) * m2);
        let h = sqrt_h();
        let strat = strat_correction_drift(big_f.clone(), &h, m2);
        let ito = ito_form_drift(big_f.clone(), &h, sigma2, m2);
        for x in [0.0, 0.2, 1.0, 3.0] {
            assert!((strat(x) - (big_f(x) - 0.25 * m2)).abs() < 1e-15);
            assert!((ito(x) - (big_f(x) - 0.0585)).abs() < 1e-15);
        }
        let same = ito_form_drift(big_f.clone(), &h, m2, m2);
        assert!(Arc::ptr_eq(&same, &big_f));
        assert!(Arc::ptr_eq(
            &strat_correction_drift(big_f.clone(), &h, 0.0),
            &big_f
        ));
        assert!(Arc::ptr_eq(
            &strat_correction_drift(big_f.clone(), &Multiplier::unit(), m2),
            &big_f
        ));
        assert!(Arc::ptr_eq(
            &ito_form_drift(big_f.clone(), &Multiplier::unit(), 1.0, m2),
            &big_f
        ));
    }

    proptest! {
        #[test]
        fn ito_equals_strat_plus_conversion(x in 0.01f64..10.0, sigma2 in 0.0f64..1.0, m2 in 0.0f64..1.0, c in 0.1f64..3.0) {
            let h = Multiplier::Linear { slope: c, intercept: 0.5 };
            let big_f = real_fn(|x| 1.0 - x);
            let ito = ito_form_drift(big_f.clone(), &h, sigma2, m2);
            let strat = strat_correction_drift(big_f, &h, m2);
            let conv = strat(x) + 0.5 * h.value(x) * h.derivative(x) * sigma2;
            prop_assert!((ito(x) - conv).abs() < 1e-12);
        }

        #[test]
        fn analytic_round_trip(x in 1e-3f64..50.0, p in 0.05f64..0.95) {
            let h = Multiplier::Power { coef: 1.3, exponent: p };
            let t = build_transform(&h, 1.0, ALL).unwrap();
            let back = t.r_inverse(t.r(x)).unwrap();
            prop_assert!((back - x).abs() < 1e-8 * (1.0 + x));
            let d = 1e-5 * x;
            let fd = (t.r(x + d) - t.r(x - d)) / (2.0 * d);
            prop_assert!(((fd - t.r_prime(x)) / t.r_prime(x)).abs() < 1e-6);
        }
    }
}
