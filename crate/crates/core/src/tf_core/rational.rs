use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::poly::Polynomial;
use crate::error::{Error, Result};

/// Relative threshold on `|den(s)|` below which evaluation is refused.
pub const POLE_PROXIMITY_TOL: f64 = 1e-13;

/// Proper real-coefficient rational function `num(s) / den(s)`.
///
/// Construction never cancels common roots; see [`RationalTF::cancel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTf")]
pub struct RationalTF {
    num: Polynomial,
    den: Polynomial,
}

#[derive(Deserialize)]
struct RawTf {
    num: Polynomial,
    den: Polynomial,
}

impl TryFrom<RawTf> for RationalTF {
    type Error = Error;

    fn try_from(raw: RawTf) -> Result<Self> {
        RationalTF::new(raw.num, raw.den)
    }
}

impl RationalTF {
    pub fn new(num: Polynomial, den: Polynomial) -> Result<Self> {
        let den_deg = den
            .degree()
            .ok_or_else(|| Error::InvalidParameter("transfer function denominator is zero".into()))?;
        if let Some(num_deg) = num.degree() {
            if num_deg > den_deg {
                return Err(Error::InvalidParameter(format!(
                    "improper transfer function (numerator degree {num_deg} > denominator degree {den_deg})"
                )));
            }
        }
        Ok(RationalTF { num, den })
    }

    pub fn constant(c: f64) -> Self {
        RationalTF { num: Polynomial::constant(c), den: Polynomial::constant(1.0) }
    }

    pub fn num(&self) -> &Polynomial {
        &self.num
    }

    pub fn den(&self) -> &Polynomial {
        &self.den
    }

    pub fn is_strictly_proper(&self) -> bool {
        self.num.degree().is_none_or(|d| Some(d) < self.den.degree())
    }

    /// Limit of `g(s)` as `|s| -> infinity`.
    pub fn high_frequency_gain(&self) -> f64 {
        if self.is_strictly_proper() {
            0.0
        } else {
            self.num.leading() / self.den.leading()
        }
    }

    /// `num(s) / den(s)`, refusing points where `|den(s)|` is negligible
    /// against the magnitude of its terms.
    pub fn eval(&self, s: Complex64) -> Result<Complex64> {
        let d = self.den.eval(s);
        let scale = self.den.magnitude_scale(s.norm());
        if d.norm() <= POLE_PROXIMITY_TOL * scale {
            return Err(Error::PoleProximity { re: s.re, im: s.im, magnitude: d.norm() });
        }
        Ok(self.num.eval(s) / d)
    }

    pub fn poles(&self) -> Result<Vec<Complex64>> {
        self.den.roots()
    }

    /// Finite zeros; empty for a zero or constant numerator.
    pub fn zeros(&self) -> Result<Vec<Complex64>> {
        if self.num.is_zero() {
            return Ok(Vec::new());
        }
        self.num.roots()
    }

    /// `g(s - lambda)`: every pole and zero moves right by `lambda`.
    pub fn shift(&self, lambda: f64) -> RationalTF {
        RationalTF { num: self.num.shift(lambda), den: self.den.shift(lambda) }
    }

    /// Series product, without cancellation.
    pub fn multiply(&self, other: &RationalTF) -> RationalTF {
        RationalTF { num: &self.num * &other.num, den: &self.den * &other.den }
    }

    pub fn scale(&self, factor: f64) -> RationalTF {
        RationalTF { num: self.num.scale(factor), den: self.den.clone() }
    }

    /// Removes pole/zero pairs closer than `tol * max(1, |p|)`. Never called
    /// by the analyses, which rely on the full pole/zero bookkeeping.
    pub fn cancel(&self, tol: f64) -> Result<RationalTF> {
        if self.num.is_zero() {
            return RationalTF::new(Polynomial::zero(), Polynomial::constant(1.0));
        }
        let mut zeros = self.zeros()?;
        let mut kept_poles = Vec::new();
        for p in self.poles()? {
            let hit = zeros
                .iter()
                .position(|z| (z - p).norm() <= tol * p.norm().max(1.0));
            match hit {
                Some(i) => {
                    zeros.remove(i);
                }
                None => kept_poles.push(p),
            }
        }
        let num = Polynomial::from_roots(&zeros).scale(self.num.leading());
        let den = Polynomial::from_roots(&kept_poles).scale(self.den.leading());
        RationalTF::new(num, den)
    }
}

impl std::ops::Mul for &RationalTF {
    type Output = RationalTF;

    fn mul(self, rhs: &RationalTF) -> RationalTF {
        self.multiply(rhs)
    }
}
