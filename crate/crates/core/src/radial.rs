//! Radial variable `R` of an elliptical vector `μ + R·A·U`.
//!
//! Five families are supported. Each is calibrated to the second-moment rule
//! `E R² = p·α0² + 1`, which makes `E (x·β)²` converge to `γ0²` under the
//! coefficient construction in [`crate::glm::make_beta`].

use rand::Rng;
use rand_distr::{ChiSquared, Distribution, Gamma, StandardNormal};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RadialError {
    #[error("invalid radial parameter {name} = {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("Pareto tail index {tail} <= 2: second moment does not exist")]
    NoSecondMoment { tail: f64 },
    #[error("moment of order {order} diverges")]
    NoMoment { order: u32 },
}

/// Family of the radial law together with its free (non-calibrated) parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RadialFamily {
    /// Chi with `p` degrees of freedom, rescaled to the calibration target.
    ChiDf,
    Gamma { shape: f64 },
    ParetoI { tail: f64 },
    HalfNormal,
    LogNormal,
}

/// Discriminant of a [`RadialSpec`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RadialKind {
    ChiDf,
    Gamma,
    ParetoI,
    HalfNormal,
    LogNormal,
}

impl RadialFamily {
    pub fn kind(&self) -> RadialKind {
        match self {
            RadialFamily::ChiDf => RadialKind::ChiDf,
            RadialFamily::Gamma { .. } => RadialKind::Gamma,
            RadialFamily::ParetoI { .. } => RadialKind::ParetoI,
            RadialFamily::HalfNormal => RadialKind::HalfNormal,
            RadialFamily::LogNormal => RadialKind::LogNormal,
        }
    }

    /// Parse the names accepted in config files (`chi`, `gamma`, `pareto`,
    /// `half-normal`, `log-normal`) with the family-specific shape, if any.
    pub fn from_name(name: &str, shape: Option<f64>) -> Result<Self, String> {
        let need = |what: &str| shape.ok_or_else(|| format!("radial family {name} needs a {what}"));
        match name.trim().to_ascii_lowercase().as_str() {
            "chi" | "chidf" | "chi-df" | "gaussian" => Ok(RadialFamily::ChiDf),
            "gamma" => Ok(RadialFamily::Gamma { shape: need("shape")? }),
            "pareto" | "paretoi" | "pareto-i" => Ok(RadialFamily::ParetoI { tail: need("tail index")? }),
            "half-normal" | "halfnormal" => Ok(RadialFamily::HalfNormal),
            "log-normal" | "lognormal" => Ok(RadialFamily::LogNormal),
            other => Err(format!("unknown radial family {other:?}")),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            RadialFamily::ChiDf => "chi",
            RadialFamily::Gamma { .. } => "gamma",
            RadialFamily::ParetoI { .. } => "pareto",
            RadialFamily::HalfNormal => "half-normal",
            RadialFamily::LogNormal => "log-normal",
        }
    }

    /// Free parameter of the family, if it has one.
    pub fn aux(&self) -> Option<f64> {
        match *self {
            RadialFamily::Gamma { shape } => Some(shape),
            RadialFamily::ParetoI { tail } => Some(tail),
            _ => None,
        }
    }
}

/// A fully parametrised radial law.
///
/// | kind       | `shape`            | `scale`                              |
/// |------------|--------------------|--------------------------------------|
/// | ChiDf      | degrees of freedom | multiplicative factor applied to chi |
/// | Gamma      | shape `k`          | scale `θ`                            |
/// | ParetoI    | tail index `α`     | minimum `x_m`                        |
/// | HalfNormal | unused (1)         | variance `σ²` of the folded normal   |
/// | LogNormal  | unused (1)         | log-variance `σ²` (log-mean 0)       |
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialSpec {
    kind: RadialKind,
    shape: f64,
    scale: f64,
}

fn positive(name: &'static str, value: f64) -> Result<f64, RadialError> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(RadialError::InvalidParameter { name, value })
    }
}

impl RadialSpec {
    /// Chi law with integer `df`, multiplied by `factor`.
    pub fn chi(df: usize, factor: f64) -> Result<Self, RadialError> {
        if df == 0 {
            return Err(RadialError::InvalidParameter { name: "df", value: 0.0 });
        }
        Ok(RadialSpec { kind: RadialKind::ChiDf, shape: df as f64, scale: positive("factor", factor)? })
    }

    pub fn gamma(shape: f64, scale: f64) -> Result<Self, RadialError> {
        Ok(RadialSpec { kind: RadialKind::Gamma, shape: positive("shape", shape)?, scale: positive("scale", scale)? })
    }

    pub fn pareto(tail: f64, x_min: f64) -> Result<Self, RadialError> {
        let tail = positive("tail", tail)?;
        if tail <= 2.0 {
            return Err(RadialError::NoSecondMoment { tail });
        }
        Ok(RadialSpec { kind: RadialKind::ParetoI, shape: tail, scale: positive("x_min", x_min)? })
    }

    pub fn half_normal(variance: f64) -> Result<Self, RadialError> {
        Ok(RadialSpec { kind: RadialKind::HalfNormal, shape: 1.0, scale: positive("variance", variance)? })
    }

    pub fn log_normal(log_variance: f64) -> Result<Self, RadialError> {
        Ok(RadialSpec { kind: RadialKind::LogNormal, shape: 1.0, scale: positive("log_variance", log_variance)? })
    }

    pub fn kind(&self) -> RadialKind {
        self.kind
    }

    pub fn shape(&self) -> f64 {
        self.shape
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Draw one realisation of `R`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.kind {
            RadialKind::ChiDf => {
                let ss = ChiSquared::new(self.shape).expect("validated degrees of freedom").sample(rng);
                self.scale * ss.sqrt()
            }
            RadialKind::Gamma => Gamma::new(self.shape, self.scale)
                .expect("validated gamma parameters")
                .sample(rng),
            RadialKind::ParetoI => {
                let u = 1.0 - rng.random::<f64>();
                pareto_quantile(self.shape, self.scale, u)
            }
            RadialKind::HalfNormal => {
                let g: f64 = rng.sample(StandardNormal);
                (self.scale.sqrt() * g).abs()
            }
            RadialKind::LogNormal => {
                let g: f64 = rng.sample(StandardNormal);
                (self.scale.sqrt() * g).exp()
            }
        }
    }

    /// Closed-form raw moment `E R^k`.
    pub fn moment(&self, k: u32) -> Result<f64, RadialError> {
        if k == 0 {
            return Ok(1.0);
        }
        let kf = k as f64;
        match self.kind {
            RadialKind::ChiDf => {
                // E χ^{j+2} = (df + j) E χ^j, seeded with E χ^0 = 1 or E χ^1.
                let df = self.shape;
                let (mut m, mut j) = if k.is_multiple_of(2) {
                    (1.0, 0u32)
                } else {
                    let ratio = (libm::lgamma((df + 1.0) / 2.0) - libm::lgamma(df / 2.0)).exp();
                    (std::f64::consts::SQRT_2 * ratio, 1u32)
                };
                while j < k {
                    m *= df + j as f64;
                    j += 2;
                }
                Ok(m * self.scale.powi(k as i32))
            }
            RadialKind::Gamma => {
                let rising: f64 = (0..k).map(|i| self.shape + i as f64).product();
                Ok(self.scale.powi(k as i32) * rising)
            }
            RadialKind::ParetoI => {
                if kf >= self.shape {
                    Err(RadialError::NoMoment { order: k })
                } else {
                    Ok(self.shape * self.scale.powi(k as i32) / (self.shape - kf))
                }
            }
            RadialKind::HalfNormal => {
                // E|σN|^{j+2} = (j+1)·σ²·E|σN|^j
                let var = self.scale;
                let (mut m, mut j) = if k.is_multiple_of(2) {
                    (1.0, 0u32)
                } else {
                    ((2.0 * var / std::f64::consts::PI).sqrt(), 1u32)
                };
                while j < k {
                    m *= (j + 1) as f64 * var;
                    j += 2;
                }
                Ok(m)
            }
            RadialKind::LogNormal => Ok((0.5 * kf * kf * self.scale).exp()),
        }
    }
}

/// Inverse CDF of the type-I Pareto law, `x_m·u^{-1/α}` for `u ∈ (0, 1]`.
pub fn pareto_quantile(tail: f64, x_min: f64, u: f64) -> f64 {
    x_min * u.powf(-1.0 / tail)
}

/// Calibration target `p·α0² + 1`.
pub fn second_moment_target(p: usize, alpha0: f64) -> f64 {
    p as f64 * alpha0 * alpha0 + 1.0
}

/// Build the radial law of `family` in dimension `p` with `E R² = p·α0² + 1`.
pub fn calibrate_radial(family: RadialFamily, p: usize, alpha0: f64) -> Result<RadialSpec, RadialError> {
    if p == 0 {
        return Err(RadialError::InvalidParameter { name: "p", value: 0.0 });
    }
    positive("alpha0", alpha0)?;
    let target = second_moment_target(p, alpha0);
    match family {
        RadialFamily::ChiDf => RadialSpec::chi(p, (target / p as f64).sqrt()),
        RadialFamily::Gamma { shape } => {
            positive("shape", shape)?;
            RadialSpec::gamma(shape, (target / (shape * shape + shape)).sqrt())
        }
        RadialFamily::ParetoI { tail } => {
            positive("tail", tail)?;
            if tail <= 2.0 {
                return Err(RadialError::NoSecondMoment { tail });
            }
            RadialSpec::pareto(tail, ((tail - 2.0) / tail * target).sqrt())
        }
        RadialFamily::HalfNormal => RadialSpec::half_normal(target),
        RadialFamily::LogNormal => RadialSpec::log_normal(0.5 * target.ln()),
    }
}
