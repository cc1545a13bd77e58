//! Frequency-domain dominance certification.
//!
//! A Lure loop `G` / `phi` with `phi' in (0, K)` is strictly p-dominant with
//! rate `lambda` when no pole of `G` has real part `-lambda`, `G(s - lambda)`
//! has exactly `p` unstable poles, and the Nyquist locus of `G(s - lambda)`
//! stays strictly right of the vertical line `Re = -1/K`. With `K = inf` the
//! last condition becomes positive realness and the property is p-passivity.
//!
//! Everything here reduces to one primitive, [`min_real_part`]: a log-spaced
//! sweep of `Re G(j w - lambda)` augmented with `w = 0` and the `w -> inf`
//! limit, with golden-section refinement around every local grid minimum.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tf_core::{AmplifierParams, RationalTF};

pub use crate::tf_core::critical_balance;

/// Strictness margin of the sector condition: `min_re > -1/K + STRICT_MARGIN`.
pub const STRICT_MARGIN: f64 = 1e-12;

/// Shifted poles with `|Re| < AXIS_TOL` violate the first dominance condition.
pub const AXIS_TOL: f64 = 1e-9;

pub const DEFAULT_GRID_POINTS: usize = 2000;
pub const DEFAULT_REFINEMENT_TOL: f64 = 1e-9;

/// Log-spaced sweep over `[omega_min, omega_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    pub omega_min: f64,
    pub omega_max: f64,
    pub n_points: usize,
    /// Relative width (in `w`) at which golden-section refinement stops.
    pub refinement_tol: f64,
}

impl FrequencyGrid {
    pub fn new(omega_min: f64, omega_max: f64, n_points: usize, refinement_tol: f64) -> Result<Self> {
        if !(omega_min > 0.0 && omega_max > omega_min && omega_max.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "frequency grid requires 0 < omega_min < omega_max (got {omega_min}, {omega_max})"
            )));
        }
        if n_points < 2 {
            return Err(Error::InvalidParameter("frequency grid needs at least 2 points".into()));
        }
        if !(refinement_tol > 0.0) {
            return Err(Error::InvalidParameter("refinement tolerance must be > 0".into()));
        }
        Ok(FrequencyGrid { omega_min, omega_max, n_points, refinement_tol })
    }

    /// Three decades either side of the amplifier's corner frequencies.
    pub fn for_amplifier(params: &AmplifierParams) -> Self {
        Self::for_time_constants(&params.taus())
    }

    /// Three decades either side of the corners `1/tau`.
    pub fn for_time_constants(taus: &[f64]) -> Self {
        Self::around_corners(taus.iter().map(|t| 1.0 / t))
    }

    /// Three decades either side of every nonzero pole/zero modulus of `g`
    /// and of `g(s - lambda)`.
    pub fn for_tf(g: &RationalTF, lambda: f64) -> Result<Self> {
        let mut corners = Vec::new();
        for z in g.poles()?.into_iter().chain(g.zeros()?) {
            corners.push(z.norm());
            corners.push((z + lambda).norm());
        }
        corners.push(lambda.abs());
        Ok(Self::around_corners(corners.into_iter()))
    }

    fn around_corners(corners: impl Iterator<Item = f64>) -> Self {
        let (lo, hi) = corners
            .filter(|c| *c > 1e-300 && c.is_finite())
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), c| (lo.min(c), hi.max(c)));
        let (lo, hi) = if lo.is_finite() { (lo, hi) } else { (1.0, 1.0) };
        FrequencyGrid {
            omega_min: 1e-3 * lo,
            omega_max: 1e3 * hi,
            n_points: DEFAULT_GRID_POINTS,
            refinement_tol: DEFAULT_REFINEMENT_TOL,
        }
    }

    pub fn with_points(mut self, n_points: usize) -> Self {
        self.n_points = n_points.max(2);
        self
    }

    pub fn omegas(&self) -> Vec<f64> {
        let (a, b) = (self.omega_min.ln(), self.omega_max.ln());
        let last = (self.n_points - 1) as f64;
        (0..self.n_points)
            .map(|i| match i {
                0 => self.omega_min,
                i if i == self.n_points - 1 => self.omega_max,
                i => (a + (b - a) * i as f64 / last).exp(),
            })
            .collect()
    }
}

/// Sector bound `K` of the slope condition `0 <= phi' <= K`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SectorBound {
    Finite(f64),
    Infinite,
}

/// A critical gain: either a finite bound or no bound at all.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GainBound {
    Finite(f64),
    Unbounded,
}

impl GainBound {
    /// `k < bound`.
    pub fn admits(&self, k: f64) -> bool {
        match self {
            GainBound::Finite(b) => k < *b,
            GainBound::Unbounded => true,
        }
    }

    pub fn finite(&self) -> Option<f64> {
        match self {
            GainBound::Finite(b) => Some(*b),
            GainBound::Unbounded => None,
        }
    }

    /// `Unbounded` when `min_re >= 0`, else `-1 / min_re`.
    pub fn from_min_re(min_re: f64) -> Self {
        if min_re >= 0.0 {
            GainBound::Unbounded
        } else {
            GainBound::Finite(-1.0 / min_re)
        }
    }
}

macro_rules! number_or_tag {
    ($ty:ident, $tag:literal, $unit:ident) => {
        impl Serialize for $ty {
            fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
                match self {
                    $ty::Finite(v) => s.serialize_f64(*v),
                    $ty::$unit => s.serialize_str($tag),
                }
            }
        }

        impl<'de> Deserialize<'de> for $ty {
            fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
                #[derive(Deserialize)]
                #[serde(untagged)]
                enum Raw {
                    Num(f64),
                    Tag(String),
                }
                match Raw::deserialize(d)? {
                    Raw::Num(v) => Ok($ty::Finite(v)),
                    Raw::Tag(t) if t == $tag => Ok($ty::$unit),
                    Raw::Tag(t) => Err(serde::de::Error::custom(format!("expected a number or {:?}, got {t:?}", $tag))),
                }
            }
        }
    };
}

number_or_tag!(SectorBound, "infinite", Infinite);
number_or_tag!(GainBound, "unbounded", Unbounded);

/// Minimum of `Re g(j w - lambda)` over the sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RealPartMin {
    pub min_re: f64,
    /// `None` when the minimum is the `w -> inf` limit.
    pub omega_at_min: Option<f64>,
}

/// Shifted Nyquist sweep of `g` at rate `lambda`.
pub fn min_real_part(g: &RationalTF, lambda: f64, grid: &FrequencyGrid) -> Result<RealPartMin> {
    let shifted = g.shift(lambda);
    if shifted.poles()?.iter().any(|p| p.re.abs() < AXIS_TOL) {
        return Err(Error::PoleOnShiftedAxis { lambda });
    }
    let re_at = |w: f64| -> Result<f64> { Ok(shifted.eval(Complex64::new(0.0, w))?.re) };

    let mut best = RealPartMin { min_re: shifted.high_frequency_gain(), omega_at_min: None };
    let mut consider = |value: f64, w: f64| {
        if value < best.min_re {
            best = RealPartMin { min_re: value, omega_at_min: Some(w) };
        }
    };
    consider(re_at(0.0)?, 0.0);

    let omegas = grid.omegas();
    let values = omegas.iter().map(|&w| re_at(w)).collect::<Result<Vec<_>>>()?;
    let n = omegas.len();
    let ratio = omegas[1] / omegas[0];
    for i in 0..n {
        let left = if i > 0 { values[i - 1] } else { f64::INFINITY };
        let right = if i + 1 < n { values[i + 1] } else { f64::INFINITY };
        consider(values[i], omegas[i]);
        if !(values[i] < left && values[i] <= right) {
            continue;
        }
        let lo = if i > 0 { omegas[i - 1] } else { 0.0 };
        let hi = if i + 1 < n { omegas[i + 1] } else { omegas[i] * ratio };
        let (w, v) = golden_section(&re_at, lo, hi, grid.refinement_tol)?;
        consider(v, w);
    }
    Ok(best)
}

/// Golden-section search for a minimum of `f` in `[lo, hi]`; works in `ln w`
/// when `lo > 0`.
fn golden_section(f: &impl Fn(f64) -> Result<f64>, lo: f64, hi: f64, rel_tol: f64) -> Result<(f64, f64)> {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let log_scale = lo > 0.0;
    let to_w = |x: f64| if log_scale { x.exp() } else { x };
    let (mut a, mut b) = if log_scale { (lo.ln(), hi.ln()) } else { (lo, hi) };
    let abs_tol = if log_scale { rel_tol } else { rel_tol * hi };
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(to_w(c))?;
    let mut fd = f(to_w(d))?;
    for _ in 0..200 {
        if (b - a).abs() <= abs_tol {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(to_w(c))?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(to_w(d))?;
        }
    }
    Ok(if fc < fd { (to_w(c), fc) } else { (to_w(d), fd) })
}

/// Number of poles of `g` with real part greater than `-lambda`.
pub fn count_unstable_shifted_poles(g: &RationalTF, lambda: f64) -> Result<usize> {
    let poles = g.poles()?;
    if poles.iter().any(|p| (p.re + lambda).abs() < AXIS_TOL) {
        return Err(Error::PoleOnShiftedAxis { lambda });
    }
    Ok(poles.iter().filter(|p| p.re > -lambda).count())
}

/// Midpoint rate between the two left-most poles of the amplifier:
/// `(1/tau_a + 1/tau_b) / 2` with `tau_a <= tau_b` the two smallest time
/// constants. Leaves exactly two poles right of `-lambda`.
pub fn select_rate(params: &AmplifierParams) -> f64 {
    select_rate_taus(&params.taus())
}

/// Midpoint rate for a loop of first-order lags with time constants `taus`
/// (at least two).
pub fn select_rate_taus(taus: &[f64]) -> f64 {
    let mut rates: Vec<f64> = taus.iter().map(|t| 1.0 / t).collect();
    rates.sort_by(|a, b| b.total_cmp(a));
    0.5 * (rates[0] + rates[1])
}

/// Midpoint rate for an arbitrary transfer function: halfway between the
/// real parts of its two left-most poles.
pub fn select_rate_tf(g: &RationalTF) -> Result<f64> {
    let mut poles = g.poles()?;
    if poles.len() < 3 {
        return Err(Error::InvalidParameter("rate selection needs at least three poles".into()));
    }
    poles.sort_by(|a, b| a.re.total_cmp(&b.re));
    if poles[0].re == poles[1].re {
        return Err(Error::InvalidParameter(
            "the two left-most poles share a real part; no midpoint rate separates them".into(),
        ));
    }
    Ok(-0.5 * (poles[0].re + poles[1].re))
}

/// The three conditions of the shifted circle criterion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DominanceConditions {
    /// No pole of `g` with real part `-lambda`.
    pub no_pole_on_shifted_axis: bool,
    /// `g(s - lambda)` has exactly `p` unstable poles.
    pub shifted_inertia: bool,
    /// Shifted Nyquist locus right of `-1/K` (strictly) or of `0` when `K = inf`.
    pub sector: bool,
}

impl DominanceConditions {
    pub fn all(&self) -> bool {
        self.no_pole_on_shifted_axis && self.shifted_inertia && self.sector
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominanceCertificate {
    pub p: usize,
    pub lambda: f64,
    pub sector_bound: SectorBound,
    /// Unstable poles of `g(s - lambda)`; `None` when a pole sits on the shifted axis.
    pub shifted_unstable_poles: Option<usize>,
    pub min_re: Option<f64>,
    pub omega_at_min: Option<f64>,
    /// Largest multiplier of `g` for which the locus stays right of `-1`.
    pub critical_gain: Option<GainBound>,
    /// Distance of the minimum from the forbidden line (negative when violated).
    pub margin: Option<f64>,
    pub conditions: DominanceConditions,
    pub passed: bool,
}

impl DominanceCertificate {
    pub fn is_passivity(&self) -> bool {
        self.sector_bound == SectorBound::Infinite
    }
}

/// Shifted circle criterion for p-dominance of the loop `g` / `phi` with
/// `phi' in (0, K)`. Failures are reported in the certificate.
pub fn check_p_dominance(
    g: &RationalTF,
    lambda: f64,
    sector_bound: SectorBound,
    p: usize,
    grid: &FrequencyGrid,
) -> Result<DominanceCertificate> {
    let (shifted_unstable_poles, sweep) = match count_unstable_shifted_poles(g, lambda) {
        Ok(n) => (Some(n), Some(min_real_part(g, lambda, grid)?)),
        Err(Error::PoleOnShiftedAxis { .. }) => (None, None),
        Err(e) => return Err(e),
    };
    let min_re = sweep.map(|s| s.min_re);
    let margin = min_re.map(|m| match sector_bound {
        SectorBound::Finite(k) => m + 1.0 / k,
        SectorBound::Infinite => m,
    });
    let sector = match (margin, sector_bound) {
        (Some(m), SectorBound::Finite(_)) => m > STRICT_MARGIN,
        (Some(m), SectorBound::Infinite) => m >= 0.0,
        (None, _) => false,
    };
    let conditions = DominanceConditions {
        no_pole_on_shifted_axis: shifted_unstable_poles.is_some(),
        shifted_inertia: shifted_unstable_poles == Some(p),
        sector,
    };
    Ok(DominanceCertificate {
        p,
        lambda,
        sector_bound,
        shifted_unstable_poles,
        min_re,
        omega_at_min: sweep.and_then(|s| s.omega_at_min),
        critical_gain: min_re.map(GainBound::from_min_re),
        margin,
        conditions,
        passed: conditions.all(),
    })
}

/// p-passivity: [`check_p_dominance`] with an unbounded sector.
pub fn check_p_passivity(g: &RationalTF, lambda: f64, p: usize, grid: &FrequencyGrid) -> Result<DominanceCertificate> {
    check_p_dominance(g, lambda, SectorBound::Infinite, p, grid)
}

/// Critical gain of a unit-gain open loop: the largest `k` for which
/// `k g` is certified p-dominant with rate `lambda` in the unit sector.
pub fn critical_gain_tf(g_unit: &RationalTF, lambda: f64, p: usize, grid: &FrequencyGrid) -> Result<GainBound> {
    if p == 0 && lambda != 0.0 {
        return Err(Error::InvalidParameter("0-dominance is certified at rate lambda = 0".into()));
    }
    let found = count_unstable_shifted_poles(g_unit, lambda)?;
    if found != p {
        return Err(Error::WrongShiftedInertia { expected: p, found });
    }
    Ok(GainBound::from_min_re(min_real_part(g_unit, lambda, grid)?.min_re))
}

/// Critical gain of the amplifier at its balance: `k0_bar` for `p = 0`
/// (with `lambda = 0`) and `k2_bar` for `p = 2`.
pub fn critical_gain(params: &AmplifierParams, lambda: f64, p: usize) -> Result<GainBound> {
    critical_gain_tf(&params.open_loop_unit(), lambda, p, &FrequencyGrid::for_amplifier(params))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NyquistPoint {
    pub omega: f64,
    pub re: f64,
    pub im: f64,
    /// Evaluation refused because `j w - lambda` sits on a pole.
    pub pole_proximity: bool,
}

/// Samples of `g(j w - lambda)` over the grid, `w` ascending. Only
/// non-negative frequencies are emitted; the locus for `w < 0` is the mirror
/// image.
pub fn nyquist_locus(g: &RationalTF, lambda: f64, grid: &FrequencyGrid) -> Vec<NyquistPoint> {
    let shifted = g.shift(lambda);
    grid.omegas()
        .into_iter()
        .map(|omega| match shifted.eval(Complex64::new(0.0, omega)) {
            Ok(v) => NyquistPoint { omega, re: v.re, im: v.im, pole_proximity: false },
            Err(_) => NyquistPoint { omega, re: f64::NAN, im: f64::NAN, pole_proximity: true },
        })
        .collect()
}
