//! Scalar function families used to describe slow systems and SDEs.
//!
//! The closed forms are serializable so that configs and `run.json` can
//! carry them; `Custom` variants hold arbitrary closures for library use.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type SlowFn = Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;

/// Named closure wrapper so function-valued fields stay `Debug`.
pub struct Custom<F: ?Sized> {
    pub name: String,
    pub f: Arc<F>,
}

impl<F: ?Sized> Clone for Custom<F> {
    fn clone(&self) -> Self {
        Self {
            name: self.name.clone(),
            f: Arc::clone(&self.f),
        }
    }
}

/// Closures compare equal only when they are the same allocation.
impl<F: ?Sized> PartialEq for Custom<F> {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name && Arc::ptr_eq(&self.f, &other.f)
    }
}

impl<F: ?Sized> fmt::Debug for Custom<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Custom({})", self.name)
    }
}

/// `x^p`, avoiding `powf` for the exponents that dominate in practice.
#[inline]
pub fn pow(x: f64, p: f64) -> f64 {
    if p == 0.5 {
        x.sqrt()
    } else if p == 1.0 {
        x
    } else if p == 0.0 {
        1.0
    } else if p == 2.0 {
        x * x
    } else if p == -0.5 {
        1.0 / x.sqrt()
    } else if p == -1.0 {
        1.0 / x
    } else {
        x.powf(p)
    }
}

pub fn real_fn(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> RealFn {
    Arc::new(f)
}

/// Multiplicative noise factor `h`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Multiplier {
    /// `h(x) = value`.
    Constant { value: f64 },
    /// `h(x) = coef * x^exponent` on `x > 0`.
    Power { coef: f64, exponent: f64 },
    /// `h(x) = slope * x + intercept`.
    Linear { slope: f64, intercept: f64 },
    #[serde(skip)]
    Custom {
        value: Custom<dyn Fn(f64) -> f64 + Send + Sync>,
        derivative: Custom<dyn Fn(f64) -> f64 + Send + Sync>,
    },
}

impl Default for Multiplier {
    fn default() -> Self {
        Multiplier::Constant { value: 1.0 }
    }
}

impl Multiplier {
    pub fn unit() -> Self {
        Self::default()
    }

    pub fn custom(
        name: &str,
        value: impl Fn(f64) -> f64 + Send + Sync + 'static,
        derivative: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Multiplier::Custom {
            value: Custom {
                name: name.to_string(),
                f: Arc::new(value),
            },
            derivative: Custom {
                name: format!("{name}'"),
                f: Arc::new(derivative),
            },
        }
    }

    pub fn is_unit(&self) -> bool {
        matches!(self, Multiplier::Constant { value } if *value == 1.0)
    }

    /// Whether `h` is only defined for `x >= 0` (fractional powers).
    pub fn needs_nonnegative(&self) -> bool {
        matches!(self, Multiplier::Power { exponent, .. } if exponent.fract() != 0.0)
    }

    #[inline]
    pub fn value(&self, x: f64) -> f64 {
        match self {
            Multiplier::Constant { value } => *value,
            Multiplier::Power { coef, exponent } => coef * pow(x, *exponent),
            Multiplier::Linear { slope, intercept } => slope * x + intercept,
            Multiplier::Custom { value, .. } => (value.f)(x),
        }
    }

    #[inline]
    pub fn derivative(&self, x: f64) -> f64 {
        match self {
            Multiplier::Constant { .. } => 0.0,
            Multiplier::Power { coef, exponent } => coef * exponent * pow(x, exponent - 1.0),
            Multiplier::Linear { slope, .. } => *slope,
            Multiplier::Custom { derivative, .. } => (derivative.f)(x),
        }
    }

    /// `h(x) h'(x)`, in closed form where the separate factors would give `0 * inf`.
    #[inline]
    pub fn h_h_prime(&self, x: f64) -> f64 {
        match self {
            Multiplier::Constant { .. } => 0.0,
            Multiplier::Power { coef, exponent } => {
                coef * coef * exponent * pow(x, 2.0 * exponent - 1.0)
            }
            _ => self.value(x) * self.derivative(x),
        }
    }

    pub fn as_fn(&self) -> RealFn {
        let h = self.clone();
        Arc::new(move |x| h.value(x))
    }
}

/// Fast observable `f0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Observable {
    Identity,
    /// `-1` below `threshold`, `+1` at or above it.
    Sign {
        threshold: f64,
    },
    /// `y + offset`.
    Shifted {
        offset: f64,
    },
    Constant {
        value: f64,
    },
    /// `y^exponent`.
    Power {
        exponent: i32,
    },
    #[serde(skip)]
    Custom(Custom<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl Observable {
    pub fn custom(name: &str, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Observable::Custom(Custom {
            name: name.to_string(),
            f: Arc::new(f),
        })
    }

    #[inline]
    pub fn eval(&self, y: f64) -> f64 {
        match self {
            Observable::Identity => y,
            Observable::Sign { threshold } => {
                if y < *threshold {
                    -1.0
                } else {
                    1.0
                }
            }
            Observable::Shifted { offset } => y + offset,
            Observable::Constant { value } => *value,
            Observable::Power { exponent } => y.powi(*exponent),
            Observable::Custom(c) => (c.f)(y),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Observable::Constant { value } if *value == 0.0)
    }
}

/// Order-`eps^2` coupling `f(x, y, eps)` of the slow recursion.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SlowDrift {
    #[default]
    Zero,
    Constant {
        value: f64,
    },
    /// `(intercept + slope * x) * y^y_power`.
    Product {
        intercept: f64,
        slope: f64,
        y_power: i32,
    },
    #[serde(skip)]
    Custom(Custom<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>),
}

impl SlowDrift {
    pub fn custom(name: &str, f: impl Fn(f64, f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        SlowDrift::Custom(Custom {
            name: name.to_string(),
            f: Arc::new(f),
        })
    }

    #[inline]
    pub fn eval(&self, x: f64, y: f64, eps: f64) -> f64 {
        match self {
            SlowDrift::Zero => 0.0,
            SlowDrift::Constant { value } => *value,
            SlowDrift::Product {
                intercept,
                slope,
                y_power,
            } => (intercept + slope * x) * y.powi(*y_power),
            SlowDrift::Custom(c) => (c.f)(x, y, eps),
        }
    }

    /// Averaged drift `F(x) = (intercept + slope x) * y_moment` for product forms,
    /// given the invariant-measure moment of `y^y_power`.
    pub fn product_average(&self, y_moment: f64) -> Option<AffineDrift> {
        match self {
            SlowDrift::Zero => Some(AffineDrift::new(0.0, 0.0)),
            SlowDrift::Constant { value } => Some(AffineDrift::new(*value, 0.0)),
            SlowDrift::Product {
                intercept, slope, ..
            } => Some(AffineDrift::new(intercept * y_moment, slope * y_moment)),
            SlowDrift::Custom(_) => None,
        }
    }
}

/// `F(x) = intercept + slope * x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AffineDrift {
    pub intercept: f64,
    pub slope: f64,
}

impl AffineDrift {
    pub fn new(intercept: f64, slope: f64) -> Self {
        Self { intercept, slope }
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        self.intercept + self.slope * x
    }

    pub fn as_fn(&self) -> RealFn {
        let d = *self;
        Arc::new(move |x| d.eval(x))
    }
}
