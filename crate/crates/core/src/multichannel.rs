//! Parallel banks of first-order feedback channels.
//!
//! The single positive and negative channels of the amplifier generalize to
//! unit-gain banks
//!
//! ```text
//! Cp(s) = sum_i rho_i / (tau_i s + 1),   Cn(s) = sum_j rho_j / (tau_j s + 1)
//! C(s)  = beta Cp(s) - (1 - beta) Cn(s)
//! ```
//!
//! with every positive time constant smaller than every negative one. The
//! zeros of `C` interlace the poles: one between each pair of adjacent
//! positive-bank poles, one between each pair of adjacent negative-bank
//! poles, and one outside the whole pole cluster.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::StateSpace;
use crate::tf_core::{AmplifierParams, Nonlinearity, Polynomial, RationalTF};

/// Relative tolerance on the unit-gain condition `sum rho = 1`.
pub const UNIT_GAIN_TOL: f64 = 1e-9;
/// Zeros with `|Im| <= IMAG_TOL * max(1, |z|)` count as real.
pub const IMAG_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Channel {
    pub rho: f64,
    pub tau: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BankRole {
    Positive,
    Negative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelBank {
    channels: Vec<Channel>,
    role: BankRole,
}

impl ChannelBank {
    pub fn new(channels: Vec<Channel>, role: BankRole) -> Result<Self> {
        if channels.is_empty() {
            return Err(Error::InvalidParameter(format!("{role:?} bank has no channels")));
        }
        for c in &channels {
            if !(c.tau.is_finite() && c.tau > 0.0) {
                return Err(Error::InvalidParameter(format!("channel time constant must be > 0, got {}", c.tau)));
            }
            if !(c.rho.is_finite() && c.rho > 0.0) {
                return Err(Error::InvalidParameter(format!("channel weight must be > 0, got {}", c.rho)));
            }
        }
        let total: f64 = channels.iter().map(|c| c.rho).sum();
        if (total - 1.0).abs() > UNIT_GAIN_TOL {
            return Err(Error::InvalidParameter(format!("channel weights must sum to 1, got {total}")));
        }
        let mut taus: Vec<f64> = channels.iter().map(|c| c.tau).collect();
        taus.sort_by(f64::total_cmp);
        if taus.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidParameter("channel time constants must be distinct".into()));
        }
        Ok(ChannelBank { channels, role })
    }

    /// A single channel with unit weight.
    pub fn single(tau: f64, role: BankRole) -> Result<Self> {
        ChannelBank::new(vec![Channel { rho: 1.0, tau }], role)
    }

    pub fn channels(&self) -> &[Channel] {
        &self.channels
    }

    pub fn role(&self) -> BankRole {
        self.role
    }

    pub fn len(&self) -> usize {
        self.channels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.channels.is_empty()
    }

    /// Poles `-1/tau`, ascending.
    pub fn poles(&self) -> Vec<f64> {
        let mut p: Vec<f64> = self.channels.iter().map(|c| -1.0 / c.tau).collect();
        p.sort_by(f64::total_cmp);
        p
    }

    fn tau_range(&self) -> (f64, f64) {
        self.channels
            .iter()
            .fold((f64::INFINITY, 0.0), |(lo, hi), c| (lo.min(c.tau), hi.max(c.tau)))
    }
}

fn check_ordering(pos: &ChannelBank, neg: &ChannelBank) -> Result<()> {
    if pos.role != BankRole::Positive || neg.role != BankRole::Negative {
        return Err(Error::InvalidParameter("banks passed in the wrong roles".into()));
    }
    let (_, pos_max) = pos.tau_range();
    let (neg_min, _) = neg.tau_range();
    if pos_max >= neg_min {
        return Err(Error::TimeScaleOrdering(format!(
            "every positive-bank time constant must be smaller than every negative-bank one \
             (largest positive {pos_max}, smallest negative {neg_min})"
        )));
    }
    Ok(())
}

/// `sum_i rho_i prod_{j != i} (tau_j s + 1)` over `own`, times the lags of `other`.
fn bank_numerator(own: &ChannelBank, other: &ChannelBank) -> Polynomial {
    let other_lags = other
        .channels
        .iter()
        .fold(Polynomial::constant(1.0), |acc, c| &acc * &Polynomial::lag(c.tau));
    let mut sum = Polynomial::zero();
    for (i, ci) in own.channels.iter().enumerate() {
        let mut term = Polynomial::constant(ci.rho);
        for (j, cj) in own.channels.iter().enumerate() {
            if i != j {
                term = &term * &Polynomial::lag(cj.tau);
            }
        }
        sum = &sum + &term;
    }
    &sum * &other_lags
}

fn common_denominator(pos: &ChannelBank, neg: &ChannelBank) -> Polynomial {
    pos.channels
        .iter()
        .chain(&neg.channels)
        .fold(Polynomial::constant(1.0), |acc, c| &acc * &Polynomial::lag(c.tau))
}

/// `C(s) = beta Cp(s) - (1 - beta) Cn(s)` over the common denominator
/// `prod (tau s + 1)`. Nothing is cancelled.
pub fn build_channel_tf(pos: &ChannelBank, neg: &ChannelBank, beta: f64) -> Result<RationalTF> {
    check_ordering(pos, neg)?;
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::InvalidParameter(format!("balance beta must lie in [0, 1], got {beta}")));
    }
    let num = &bank_numerator(pos, neg).scale(beta) - &bank_numerator(neg, pos).scale(1.0 - beta);
    RationalTF::new(num, common_denominator(pos, neg))
}

/// Balance at which the leading numerator coefficient of `C` vanishes and
/// the outer zero escapes to infinity. Equals `tau_p / (tau_p + tau_n)` for
/// single channels.
pub fn critical_balance_bank(pos: &ChannelBank, neg: &ChannelBank) -> Result<f64> {
    check_ordering(pos, neg)?;
    let d = pos.len() + neg.len() - 1;
    let p = bank_numerator(pos, neg).coeff(d);
    let n = bank_numerator(neg, pos).coeff(d);
    Ok(n / (p + n))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZeroBucket {
    BetweenPositivePoles,
    BetweenNegativePoles,
    Outer,
    /// Real, but in none of the three predicted places.
    Misplaced,
    Complex,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifiedZero {
    pub zero: Complex64,
    pub bucket: ZeroBucket,
    /// Index of the gap between adjacent same-bank poles (ascending), if any.
    pub gap: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterlacingReport {
    pub m: usize,
    pub n: usize,
    pub beta: f64,
    pub zeros: Vec<ClassifiedZero>,
    /// Counts in the (positive, negative, outer) buckets.
    pub counts: (usize, usize, usize),
    pub satisfied: bool,
    pub diagnostic: Option<String>,
}

/// Computes the zeros of `C` and sorts each into the predicted buckets.
/// Satisfied when there are `m + n - 1` real zeros, exactly one in each gap
/// between adjacent same-bank poles, and one outside the pole cluster.
pub fn check_interlacing(pos: &ChannelBank, neg: &ChannelBank, beta: f64) -> Result<InterlacingReport> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::InvalidParameter(format!("interlacing needs beta in (0, 1), got {beta}")));
    }
    let c = build_channel_tf(pos, neg, beta)?;
    let (pp, np) = (pos.poles(), neg.poles());
    let (leftmost, rightmost) = (pp[0], np[np.len() - 1]);
    let gap_of = |poles: &[f64], x: f64| poles.windows(2).position(|w| w[0] < x && x < w[1]);

    let mut zeros = Vec::new();
    for z in c.zeros()? {
        let (bucket, gap) = if z.im.abs() > IMAG_TOL * z.norm().max(1.0) {
            (ZeroBucket::Complex, None)
        } else if let Some(g) = gap_of(&pp, z.re) {
            (ZeroBucket::BetweenPositivePoles, Some(g))
        } else if let Some(g) = gap_of(&np, z.re) {
            (ZeroBucket::BetweenNegativePoles, Some(g))
        } else if z.re < leftmost || z.re > rightmost {
            (ZeroBucket::Outer, None)
        } else {
            (ZeroBucket::Misplaced, None)
        };
        zeros.push(ClassifiedZero { zero: z, bucket, gap });
    }
    let count = |b: ZeroBucket| zeros.iter().filter(|z| z.bucket == b).count();
    let counts = (count(ZeroBucket::BetweenPositivePoles), count(ZeroBucket::BetweenNegativePoles), count(ZeroBucket::Outer));
    let (m, n) = (pos.len(), neg.len());
    let gaps_filled = |b: ZeroBucket, gaps: usize| {
        (0..gaps).all(|g| zeros.iter().filter(|z| z.bucket == b && z.gap == Some(g)).count() == 1)
    };

    let mut problems = Vec::new();
    if zeros.len() != m + n - 1 {
        problems.push(format!("{} zeros, expected {}", zeros.len(), m + n - 1));
    }
    if count(ZeroBucket::Complex) > 0 {
        problems.push(format!("{} complex zeros", count(ZeroBucket::Complex)));
    }
    if count(ZeroBucket::Misplaced) > 0 {
        problems.push(format!("{} zeros between the two banks", count(ZeroBucket::Misplaced)));
    }
    if counts != (m - 1, n - 1, 1) {
        problems.push(format!("bucket counts {counts:?}, expected {:?}", (m - 1, n - 1, 1)));
    }
    if !gaps_filled(ZeroBucket::BetweenPositivePoles, m - 1) || !gaps_filled(ZeroBucket::BetweenNegativePoles, n - 1) {
        problems.push("some pole gap does not hold exactly one zero".into());
    }
    Ok(InterlacingReport {
        m,
        n,
        beta,
        zeros,
        counts,
        satisfied: problems.is_empty(),
        diagnostic: if problems.is_empty() { None } else { Some(problems.join("; ")) },
    })
}

fn check_load_lag(tau_l: f64, pos: &ChannelBank, neg: &ChannelBank) -> Result<()> {
    if !(tau_l.is_finite() && tau_l > 0.0) {
        return Err(Error::InvalidParameter(format!("time constant tau_l must be > 0, got {tau_l}")));
    }
    if pos.channels.iter().chain(&neg.channels).any(|c| c.tau == tau_l) {
        return Err(Error::InvalidParameter(format!(
            "requires tau_l distinct from every channel time constant (got tau_l = {tau_l})"
        )));
    }
    Ok(())
}

/// Open loop from `u` to `y`: `-k C(s) / (tau_l s + 1)`, without cancellation.
pub fn build_extended_openloop(tau_l: f64, pos: &ChannelBank, neg: &ChannelBank, k: f64, beta: f64) -> Result<RationalTF> {
    check_load_lag(tau_l, pos, neg)?;
    if !(k.is_finite() && k >= 0.0) {
        return Err(Error::InvalidParameter(format!("gain k must be finite and >= 0, got {k}")));
    }
    let c = build_channel_tf(pos, neg, beta)?;
    RationalTF::new(c.num().scale(-k), &Polynomial::lag(tau_l) * c.den())
}

/// Diagonal realization: states `x`, one per positive channel, one per
/// negative channel; `tau_i x_i' = x - x_i` and
/// `y = k (-beta sum rho_i x_i + (1 - beta) sum rho_j x_j)`.
pub fn realize_diagonal(
    tau_l: f64,
    pos: &ChannelBank,
    neg: &ChannelBank,
    k: f64,
    beta: f64,
    nonlinearity: Nonlinearity,
) -> Result<StateSpace> {
    check_load_lag(tau_l, pos, neg)?;
    check_ordering(pos, neg)?;
    let (m, n) = (pos.len(), neg.len());
    let dim = 1 + m + n;
    let mut a = DMatrix::zeros(dim, dim);
    let mut b = DVector::zeros(dim);
    let mut c = DVector::zeros(dim);
    a[(0, 0)] = -1.0 / tau_l;
    b[0] = 1.0 / tau_l;
    for (i, ch) in pos.channels.iter().chain(&neg.channels).enumerate() {
        a[(i + 1, 0)] = 1.0 / ch.tau;
        a[(i + 1, i + 1)] = -1.0 / ch.tau;
        c[i + 1] = if i < m { -k * beta * ch.rho } else { k * (1.0 - beta) * ch.rho };
    }
    let mut names = vec!["x".to_string()];
    if m == 1 && n == 1 {
        names.extend(["xp".to_string(), "xn".to_string()]);
    } else {
        names.extend((1..=m).map(|i| format!("xp{i}")));
        names.extend((1..=n).map(|j| format!("xn{j}")));
    }
    StateSpace::new(a, b, c, nonlinearity, names)
}

/// Bank description accepted on the command line:
/// `{"tau_l":..,"positive":[{"rho":..,"tau":..}],"negative":[..],"k":..,"beta":..}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BankConfig {
    pub tau_l: f64,
    pub positive: Vec<Channel>,
    pub negative: Vec<Channel>,
    pub k: f64,
    pub beta: f64,
    #[serde(default)]
    pub nonlinearity: Nonlinearity,
}

impl BankConfig {
    pub fn banks(&self) -> Result<(ChannelBank, ChannelBank)> {
        let pos = ChannelBank::new(self.positive.clone(), BankRole::Positive)?;
        let neg = ChannelBank::new(self.negative.clone(), BankRole::Negative)?;
        check_ordering(&pos, &neg)?;
        check_load_lag(self.tau_l, &pos, &neg)?;
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::InvalidParameter(format!("balance beta must lie in [0, 1], got {}", self.beta)));
        }
        if !(self.k.is_finite() && self.k >= 0.0) {
            return Err(Error::InvalidParameter(format!("gain k must be finite and >= 0, got {}", self.k)));
        }
        Ok((pos, neg))
    }

    pub fn open_loop(&self) -> Result<RationalTF> {
        let (pos, neg) = self.banks()?;
        build_extended_openloop(self.tau_l, &pos, &neg, self.k, self.beta)
    }

    pub fn open_loop_unit(&self) -> Result<RationalTF> {
        let (pos, neg) = self.banks()?;
        build_extended_openloop(self.tau_l, &pos, &neg, 1.0, self.beta)
    }

    pub fn realize(&self) -> Result<StateSpace> {
        let (pos, neg) = self.banks()?;
        realize_diagonal(self.tau_l, &pos, &neg, self.k, self.beta, self.nonlinearity)
    }

    /// The single-channel amplifier this bank reduces to, if `m = n = 1`.
    pub fn as_amplifier(&self) -> Option<Result<AmplifierParams>> {
        match (self.positive.as_slice(), self.negative.as_slice()) {
            ([p], [n]) => Some(
                AmplifierParams::new(self.tau_l, p.tau, n.tau, self.k, self.beta)
                    .map(|a| a.with_nonlinearity(self.nonlinearity)),
            ),
            _ => None,
        }
    }

    /// All time constants, load lag first.
    pub fn taus(&self) -> Vec<f64> {
        std::iter::once(self.tau_l)
            .chain(self.positive.iter().chain(&self.negative).map(|c| c.tau))
            .collect()
    }
}
