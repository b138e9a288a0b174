use serde::{Deserialize, Serialize};

use crate::xreal::XReal;

/// Closed-form pieces a utility is assembled from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Segment {
    Constant { value: f64 },
    Affine { slope: f64, intercept: f64 },
    /// `a * sign(x - c) * |x - c|^gamma + k`
    SignedPower { a: f64, c: f64, gamma: f64, k: f64 },
    /// `a * exp(lambda * (x - c)) + k`
    Exponential { a: f64, lambda: f64, c: f64, k: f64 },
    NegInf,
    PosInf,
}

impl Segment {
    pub fn eval(&self, x: f64) -> XReal {
        let v = match *self {
            Segment::Constant { value } => value,
            Segment::Affine { slope, intercept } => {
                if slope == 0.0 {
                    intercept
                } else {
                    slope * x + intercept
                }
            }
            Segment::SignedPower { a, c, gamma, k } => {
                let z = x - c;
                if a == 0.0 || z == 0.0 {
                    k
                } else {
                    a * z.signum() * z.abs().powf(gamma) + k
                }
            }
            Segment::Exponential { a, lambda, c, k } => {
                if a == 0.0 {
                    k
                } else {
                    a * (lambda * (x - c)).exp() + k
                }
            }
            Segment::NegInf => f64::NEG_INFINITY,
            Segment::PosInf => f64::INFINITY,
        };
        // Overflow of a finite formula can only run off to an infinity whose
        // sign matches the trend; NaN cannot arise from the guards above.
        XReal::try_new(v).unwrap_or(XReal::NEG_INF)
    }

    /// Parameter sanity and monotonicity of the closed form.
    pub fn check(&self) -> Result<(), String> {
        let finite = |name: &str, v: f64| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(format!("parameter {name} must be finite"))
            }
        };
        match *self {
            Segment::Constant { value } => finite("value", value),
            Segment::Affine { slope, intercept } => {
                finite("slope", slope)?;
                finite("intercept", intercept)?;
                if slope < 0.0 {
                    return Err("affine segment must have slope >= 0".into());
                }
                Ok(())
            }
            Segment::SignedPower { a, c, gamma, k } => {
                finite("a", a)?;
                finite("c", c)?;
                finite("gamma", gamma)?;
                finite("k", k)?;
                if a < 0.0 {
                    return Err("signed power segment must have a >= 0".into());
                }
                if gamma <= 0.0 {
                    return Err("signed power segment must have gamma > 0".into());
                }
                Ok(())
            }
            Segment::Exponential { a, lambda, c, k } => {
                finite("a", a)?;
                finite("lambda", lambda)?;
                finite("c", c)?;
                finite("k", k)?;
                if a * lambda < 0.0 {
                    return Err("exponential segment must have a * lambda >= 0".into());
                }
                Ok(())
            }
            Segment::NegInf | Segment::PosInf => Ok(()),
        }
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self, Segment::NegInf | Segment::PosInf)
    }
}
