use serde::{Deserialize, Serialize};

use super::poly::Polynomial;
use super::rational::RationalTF;
use crate::error::{Error, Result};

/// Static saturation closing the loop, `u = -phi(y) + r`.
///
/// Both variants satisfy `|phi| <= 1` and `0 <= phi' <= 1`. `HardClip` is
/// additionally flat beyond `|y| = 1`; `Tanh` only saturates asymptotically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Nonlinearity {
    #[default]
    Tanh,
    HardClip,
}

impl Nonlinearity {
    #[inline]
    pub fn eval(self, y: f64) -> f64 {
        match self {
            Nonlinearity::Tanh => y.tanh(),
            Nonlinearity::HardClip => y.clamp(-1.0, 1.0),
        }
    }

    #[inline]
    pub fn slope(self, y: f64) -> f64 {
        match self {
            Nonlinearity::Tanh => {
                let t = y.tanh();
                1.0 - t * t
            }
            Nonlinearity::HardClip => {
                if y.abs() < 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Location of the finite open-loop zero of the amplifier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ZeroLocation {
    Finite(f64),
    /// The numerator degenerates to a constant (critical balance).
    Infinite,
}

impl Serialize for ZeroLocation {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            ZeroLocation::Finite(z) => s.serialize_f64(*z),
            ZeroLocation::Infinite => s.serialize_str("infinite"),
        }
    }
}

impl<'de> Deserialize<'de> for ZeroLocation {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Tag(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(z) => Ok(ZeroLocation::Finite(z)),
            Raw::Tag(t) if t == "infinite" => Ok(ZeroLocation::Infinite),
            Raw::Tag(t) => Err(serde::de::Error::custom(format!("unknown zero tag {t:?}"))),
        }
    }
}

/// Parameters of the three-state amplifier
///
/// ```text
/// tau_l x'   = -x + u,        u = -phi(y) + r
/// tau_p x_p' =  x - x_p,      y = k (-beta x_p + (1 - beta) x_n)
/// tau_n x_n' =  x - x_n
/// ```
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams")]
pub struct AmplifierParams {
    pub tau_l: f64,
    pub tau_p: f64,
    pub tau_n: f64,
    pub k: f64,
    pub beta: f64,
    pub nonlinearity: Nonlinearity,
}

#[derive(Deserialize)]
struct RawParams {
    tau_l: f64,
    tau_p: f64,
    tau_n: f64,
    k: f64,
    beta: f64,
    #[serde(default)]
    nonlinearity: Nonlinearity,
}

impl TryFrom<RawParams> for AmplifierParams {
    type Error = Error;

    fn try_from(r: RawParams) -> Result<Self> {
        AmplifierParams::new(r.tau_l, r.tau_p, r.tau_n, r.k, r.beta)
            .map(|p| p.with_nonlinearity(r.nonlinearity))
    }
}

impl AmplifierParams {
    pub fn new(tau_l: f64, tau_p: f64, tau_n: f64, k: f64, beta: f64) -> Result<Self> {
        let p = AmplifierParams { tau_l, tau_p, tau_n, k, beta, nonlinearity: Nonlinearity::Tanh };
        p.validate()?;
        Ok(p)
    }

    pub fn with_nonlinearity(mut self, nonlinearity: Nonlinearity) -> Self {
        self.nonlinearity = nonlinearity;
        self
    }

    /// Same amplifier with another gain/balance; re-validated.
    pub fn with_gain_balance(&self, k: f64, beta: f64) -> Result<Self> {
        AmplifierParams::new(self.tau_l, self.tau_p, self.tau_n, k, beta)
            .map(|p| p.with_nonlinearity(self.nonlinearity))
    }

    pub fn validate(&self) -> Result<()> {
        validate_taus(self.tau_l, self.tau_p, self.tau_n)?;
        if !(self.k.is_finite() && self.k >= 0.0) {
            return Err(Error::InvalidParameter(format!("gain k must be finite and >= 0, got {}", self.k)));
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::InvalidParameter(format!(
                "balance beta must lie in [0, 1], got {}",
                self.beta
            )));
        }
        Ok(())
    }

    pub fn taus(&self) -> [f64; 3] {
        [self.tau_l, self.tau_p, self.tau_n]
    }

    /// Open-loop poles `-1/tau_l, -1/tau_p, -1/tau_n`.
    pub fn pole_locations(&self) -> [f64; 3] {
        [-1.0 / self.tau_l, -1.0 / self.tau_p, -1.0 / self.tau_n]
    }

    /// Transfer function from `u` to `y`:
    ///
    /// `G(s) = -k ((beta (tau_n + tau_p) - tau_p) s + 2 beta - 1) / ((tau_l s + 1)(tau_p s + 1)(tau_n s + 1))`
    pub fn open_loop(&self) -> RationalTF {
        let num = Polynomial::linear(
            -self.k * (2.0 * self.beta - 1.0),
            -self.k * (self.beta * (self.tau_n + self.tau_p) - self.tau_p),
        );
        let den = &(&Polynomial::lag(self.tau_l) * &Polynomial::lag(self.tau_p)) * &Polynomial::lag(self.tau_n);
        RationalTF::new(num, den).expect("cubic denominator with linear numerator is proper")
    }

    /// `G(s, 1, beta)`; the open loop at any gain is `k` times this.
    pub fn open_loop_unit(&self) -> RationalTF {
        AmplifierParams { k: 1.0, ..*self }.open_loop()
    }

    /// Root of the open-loop numerator, `(1 - 2 beta) / (beta (tau_p + tau_n) - tau_p)`,
    /// or `Infinite` at the critical balance where the numerator is constant.
    ///
    /// Independent of `k` for `k > 0`.
    pub fn open_loop_zero(&self) -> ZeroLocation {
        let slope = self.beta * (self.tau_p + self.tau_n) - self.tau_p;
        if slope == 0.0 || self.beta == critical_balance(self.tau_p, self.tau_n) {
            ZeroLocation::Infinite
        } else {
            ZeroLocation::Finite((1.0 - 2.0 * self.beta) / slope)
        }
    }

    /// `k (2 beta - 1)`: slope parameter of the equilibrium condition
    /// `phi(y) = r + y / g0`. Equals `-G(0)`.
    pub fn dc_loop_gain(&self) -> f64 {
        self.k * (2.0 * self.beta - 1.0)
    }
}

/// `tau_p / (tau_p + tau_n)`: the balance at which the open-loop zero
/// escapes to infinity. Above it the amplifier is 2-passive for a suitable
/// rate and every gain.
pub fn critical_balance(tau_p: f64, tau_n: f64) -> f64 {
    tau_p / (tau_p + tau_n)
}

pub(crate) fn validate_taus(tau_l: f64, tau_p: f64, tau_n: f64) -> Result<()> {
    for (name, t) in [("tau_l", tau_l), ("tau_p", tau_p), ("tau_n", tau_n)] {
        if !(t.is_finite() && t > 0.0) {
            return Err(Error::InvalidParameter(format!("time constant {name} must be > 0, got {t}")));
        }
    }
    if tau_p >= tau_n {
        return Err(Error::InvalidParameter(format!(
            "time-scale separation requires tau_p < tau_n (got tau_p = {tau_p}, tau_n = {tau_n})"
        )));
    }
    if tau_l == tau_p || tau_l == tau_n {
        return Err(Error::InvalidParameter(format!(
            "requires tau_l distinct from tau_p and tau_n (got tau_l = {tau_l})"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    fn base_amp(k: f64, beta: f64) -> AmplifierParams {
        AmplifierParams::new(0.01, 0.1, 1.0, k, beta).unwrap()
    }

    #[test]
    fn rejects_broken_assumptions() {
        let e = AmplifierParams::new(0.01, 1.0, 0.5, 1.0, 0.5).unwrap_err();
        assert!(e.to_string().contains("requires tau_p < tau_n"));
        assert!(AmplifierParams::new(0.1, 0.1, 1.0, 1.0, 0.5).is_err());
        assert!(AmplifierParams::new(0.01, 0.1, 1.0, -1.0, 0.5).is_err());
        assert!(AmplifierParams::new(0.01, 0.1, 1.0, 1.0, 1.5).is_err());
        assert!(AmplifierParams::new(0.0, 0.1, 1.0, 1.0, 0.5).is_err());
    }

    #[test]
    fn balanced_numerator_has_no_constant_term() {
        let g = base_amp(3.0, 0.5).open_loop();
        assert_eq!(g.num().coeff(0), 0.0);
        assert!((g.num().coeff(1) + 3.0 * 0.5 * (1.0 - 0.1)).abs() < 1e-15);
    }

    #[test]
    fn zero_gain_severs_loop() {
        assert!(base_amp(0.0, 0.3).open_loop().num().is_zero());
    }

    #[test]
    fn dc_values() {
        let z = Complex64::new(0.0, 0.0);
        assert!((base_amp(5.0, 0.2).open_loop().eval(z).unwrap().re - 3.0).abs() < 1e-15);
        assert_eq!(base_amp(1.0, 0.0).open_loop().eval(z).unwrap().re, 1.0);
        assert_eq!(base_amp(1.0, 1.0).open_loop().eval(z).unwrap().re, -1.0);
    }

    #[test]
    fn zero_location() {
        assert_eq!(base_amp(1.0, 0.5).open_loop_zero(), ZeroLocation::Finite(0.0));
        match base_amp(1.0, 0.8).open_loop_zero() {
            ZeroLocation::Finite(z) => assert!((z + 0.6 / 0.78).abs() < 1e-15),
            ZeroLocation::Infinite => panic!(),
        }
        assert_eq!(base_amp(1.0, critical_balance(0.1, 1.0)).open_loop_zero(), ZeroLocation::Infinite);
        assert!(matches!(base_amp(1.0, critical_balance(0.1, 1.0) + 1e-9).open_loop_zero(), ZeroLocation::Finite(_)));
    }

    #[test]
    fn zero_matches_numerator_root() {
        let p = base_amp(2.0, 0.8);
        let roots = p.open_loop().zeros().unwrap();
        match p.open_loop_zero() {
            ZeroLocation::Finite(z) => assert!((roots[0].re - z).abs() < 1e-14),
            ZeroLocation::Infinite => panic!(),
        }
    }

    #[test]
    fn params_json_defaults_nonlinearity() {
        let p: AmplifierParams =
            serde_json::from_str(r#"{"tau_l":0.01,"tau_p":0.1,"tau_n":1,"k":5,"beta":0.4}"#).unwrap();
        assert_eq!(p.nonlinearity, Nonlinearity::Tanh);
        assert!(serde_json::from_str::<AmplifierParams>(
            r#"{"tau_l":0.01,"tau_p":1,"tau_n":0.1,"k":5,"beta":0.4}"#
        )
        .is_err());
    }
}
