use std::fmt;
use std::str::FromStr;

use crate::element::Element;

/// Negative-side slope of the leaky rectifier.
pub const LEAKY_SLOPE: f64 = 0.2;

const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;
// 1 / sqrt(2π)
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub enum Activation {
    #[default]
    Relu,
    LeakyRelu,
    /// Exact form `x · Φ(x)` with the Gaussian CDF evaluated through `erf`.
    Gelu,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::LeakyRelu => "leaky_relu",
            Activation::Gelu => "gelu",
        }
    }

    #[inline]
    pub fn apply<E: Element>(self, x: E) -> E {
        match self {
            Activation::Relu => {
                if x > E::ZERO {
                    x
                } else {
                    E::ZERO
                }
            }
            Activation::LeakyRelu => {
                if x > E::ZERO {
                    x
                } else {
                    x * E::from_f64(LEAKY_SLOPE)
                }
            }
            Activation::Gelu => {
                let half = E::from_f64(0.5);
                half * x * (E::ONE + (x * E::from_f64(FRAC_1_SQRT_2)).erf())
            }
        }
    }

    /// Derivative at `x`; the rectifiers use 0 (resp. the slope) at the kink.
    #[inline]
    pub fn derivative<E: Element>(self, x: E) -> E {
        match self {
            Activation::Relu => {
                if x > E::ZERO {
                    E::ONE
                } else {
                    E::ZERO
                }
            }
            Activation::LeakyRelu => {
                if x > E::ZERO {
                    E::ONE
                } else {
                    E::from_f64(LEAKY_SLOPE)
                }
            }
            Activation::Gelu => {
                let half = E::from_f64(0.5);
                let cdf = half * (E::ONE + (x * E::from_f64(FRAC_1_SQRT_2)).erf());
                let pdf = E::from_f64(INV_SQRT_2PI) * (-(x * x) * half).exp();
                cdf + x * pdf
            }
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "relu" => Ok(Activation::Relu),
            "leaky_relu" | "leakyrelu" => Ok(Activation::LeakyRelu),
            "gelu" => Ok(Activation::Gelu),
            other => Err(format!("unknown activation `{other}`")),
        }
    }
}
