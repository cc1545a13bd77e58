//! Equilibria, their linearization, and (gain, balance) regime maps.
//!
//! At rest every lag state of a Lure loop equals the same constant, so the
//! equilibria are the roots of the scalar equation
//!
//! ```text
//! F(y) = y - G0 (r - phi(y)) = 0,        G0 = -c A^-1 b
//! ```
//!
//! For the amplifier `G0 = -g0` with `g0 = k (2 beta - 1)` and the equation
//! reads `phi(y) = r + y / g0`. Since `|phi| <= 1` every root lies in
//! `|y| <= |G0| (1 + |r|) + 1`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::freq_analysis::{self, count_unstable_shifted_poles, critical_gain_tf, FrequencyGrid, GainBound};
use crate::sim::StateSpace;
use crate::tf_core::{eigenvalues, AmplifierParams, Nonlinearity, RationalTF};

pub const SCAN_POINTS: usize = 512;
pub const BISECTION_TOL: f64 = 1e-12;
/// Real-part margin separating stable / marginal / unstable.
pub const STABILITY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stability {
    Stable,
    Unstable,
    Marginal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Equilibrium {
    pub y_star: f64,
    pub state: Vec<f64>,
    pub eigenvalues: Vec<Complex64>,
    pub stability: Stability,
    /// Double root of the scalar equation.
    #[serde(default)]
    pub tangency: bool,
}

/// `k (2 beta - 1)`.
pub fn dc_loop_gain(params: &AmplifierParams) -> f64 {
    params.dc_loop_gain()
}

/// Roots of `y - g (r - phi(y))` with a flag for double roots, ascending.
///
/// A 512-point scan of the provable bracket locates sign changes (refined by
/// bisection) and sign-preserving dips that touch zero (tangencies, located
/// as roots of `F'`).
pub fn scalar_equilibria(dc_gain: f64, r: f64, phi: Nonlinearity) -> Vec<(f64, bool)> {
    if dc_gain == 0.0 {
        // the loop is severed at DC: y = 0 whatever the reference
        return vec![(0.0, false)];
    }
    let f = |y: f64| y - dc_gain * (r - phi.eval(y));
    let df = |y: f64| 1.0 + dc_gain * phi.slope(y);
    let bound = dc_gain.abs() * (1.0 + r.abs()) + 1.0;
    let ys: Vec<f64> = (0..SCAN_POINTS)
        .map(|i| -bound + 2.0 * bound * i as f64 / (SCAN_POINTS - 1) as f64)
        .collect();
    let fs: Vec<f64> = ys.iter().map(|&y| f(y)).collect();

    let mut roots = Vec::new();
    for i in 0..SCAN_POINTS {
        if fs[i] == 0.0 {
            roots.push((ys[i], df(ys[i]).abs() < 1e-9));
            continue;
        }
        if i + 1 == SCAN_POINTS || fs[i + 1] == 0.0 {
            continue;
        }
        if (fs[i] < 0.0) != (fs[i + 1] < 0.0) {
            roots.push((bisect(&f, ys[i], ys[i + 1]), false));
        } else if (df(ys[i]) < 0.0) != (df(ys[i + 1]) < 0.0) {
            // F turns around inside the cell; a tangency if the turn touches zero
            let yt = bisect(&df, ys[i], ys[i + 1]);
            if f(yt).abs() < 1e-10 * bound.max(1.0) {
                roots.push((yt, true));
            }
        }
    }
    // a sign change at a point where F' also vanishes is a triple root
    for (y, tangent) in roots.iter_mut() {
        if !*tangent && df(*y).abs() < 1e-7 {
            *tangent = true;
        }
    }
    roots
}

fn bisect(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let fa_neg = f(a) < 0.0;
    while (b - a).abs() > BISECTION_TOL * a.abs().max(b.abs()).max(1.0) {
        let m = 0.5 * (a + b);
        if m <= a.min(b) || m >= a.max(b) {
            break;
        }
        let fm = f(m);
        if fm == 0.0 {
            return m;
        }
        if (fm < 0.0) == fa_neg {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// All equilibria of the amplifier at constant reference `r`, ascending in `y`.
/// Each carries the rest state `(x, x, x)` with `x = r - phi(y*)`.
pub fn find_equilibria(params: &AmplifierParams, r: f64) -> Result<Vec<Equilibrium>> {
    let dc = params.k * (1.0 - 2.0 * params.beta);
    scalar_equilibria(dc, r, params.nonlinearity)
        .into_iter()
        .map(|(y, tangency)| {
            let x = r - params.nonlinearity.eval(y);
            let eigs = eigenvalues(jacobian_at(params, y))?;
            Ok(Equilibrium {
                y_star: y,
                state: vec![x; 3],
                stability: if tangency { Stability::Marginal } else { classify_stability(&eigs) },
                eigenvalues: eigs,
                tangency,
            })
        })
        .collect()
}

/// Equilibria of an arbitrary Lure realization: `y*` from the scalar
/// reduction with `G0 = -c A^-1 b`, state `-A^-1 b (r - phi(y*))`,
/// eigenvalues of `A - phi'(y*) b c^T`.
pub fn find_lure_equilibria(sys: &StateSpace, r: f64) -> Result<Vec<Equilibrium>> {
    let dir = sys.steady_direction()?;
    let dc = -sys.c().dot(&dir);
    let phi = sys.nonlinearity();
    scalar_equilibria(dc, r, phi)
        .into_iter()
        .map(|(y, tangency)| {
            let u = r - phi.eval(y);
            let eigs = eigenvalues(sys.jacobian(y))?;
            Ok(Equilibrium {
                y_star: y,
                state: dir.iter().map(|d| -d * u).collect(),
                stability: if tangency { Stability::Marginal } else { classify_stability(&eigs) },
                eigenvalues: eigs,
                tangency,
            })
        })
        .collect()
}

/// Linearization of the amplifier at an equilibrium with output `y_star`:
///
/// ```text
/// [ -1/tau_l   k beta phi'/tau_l   -k (1-beta) phi'/tau_l ]
/// [  1/tau_p  -1/tau_p              0                     ]
/// [  1/tau_n   0                   -1/tau_n               ]
/// ```
pub fn jacobian_at(params: &AmplifierParams, y_star: f64) -> DMatrix<f64> {
    let s = params.nonlinearity.slope(y_star);
    let (tl, tp, tn, k, b) = (params.tau_l, params.tau_p, params.tau_n, params.k, params.beta);
    #[rustfmt::skip]
    let a = DMatrix::from_row_slice(3, 3, &[
        -1.0 / tl, k * b * s / tl, -k * (1.0 - b) * s / tl,
        1.0 / tp,  -1.0 / tp,      0.0,
        1.0 / tn,  0.0,            -1.0 / tn,
    ]);
    a
}

pub fn classify_stability(eigs: &[Complex64]) -> Stability {
    classify_stability_with(eigs, STABILITY_TOL)
}

pub fn classify_stability_with(eigs: &[Complex64], tol: f64) -> Stability {
    if eigs.iter().any(|z| z.re > tol) {
        Stability::Unstable
    } else if eigs.iter().all(|z| z.re < -tol) {
        Stability::Stable
    } else {
        Stability::Marginal
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Regime {
    ZeroDominantStable,
    TwoDominantOscillation,
    TwoDominantMultistable,
    Unclassified,
}

impl Regime {
    pub fn as_str(&self) -> &'static str {
        match self {
            Regime::ZeroDominantStable => "ZeroDominantStable",
            Regime::TwoDominantOscillation => "TwoDominantOscillation",
            Regime::TwoDominantMultistable => "TwoDominantMultistable",
            Regime::Unclassified => "Unclassified",
        }
    }
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeClassification {
    pub regime: Regime,
    pub k: f64,
    pub lambda: f64,
    /// Critical gain for 0-dominance; `None` if it could not be computed.
    pub k0_bar: Option<GainBound>,
    /// Critical gain for 2-dominance at `lambda`.
    pub k2_bar: Option<GainBound>,
    pub equilibria: Vec<Equilibrium>,
    pub reason: Option<String>,
}

impl RegimeClassification {
    pub fn n_unstable(&self) -> usize {
        self.equilibria.iter().filter(|e| e.stability == Stability::Unstable).count()
    }
}

/// Critical gains of a unit-gain open loop: `(k0_bar, k2_bar)`.
pub type CriticalGains = (Result<GainBound>, Result<GainBound>);

pub fn critical_gains(g_unit: &RationalTF, lambda: f64, grid: &FrequencyGrid) -> CriticalGains {
    (critical_gain_tf(g_unit, 0.0, 0, grid), critical_gain_tf(g_unit, lambda, 2, grid))
}

/// Regime of the loop `k g_unit` / `phi` given its critical gains and its
/// equilibria:
///
/// - `ZeroDominantStable` when `k < k0_bar`;
/// - otherwise, when `lambda` leaves exactly two unstable shifted poles and
///   `k < k2_bar`, `TwoDominantOscillation` if every equilibrium is unstable
///   and `TwoDominantMultistable` if one of them is stable;
/// - `Unclassified` in every other case, with the reason attached.
pub fn decide_regime(
    k: f64,
    lambda: f64,
    gains: CriticalGains,
    equilibria: Vec<Equilibrium>,
) -> RegimeClassification {
    let (k0, k2) = gains;
    let mut out = RegimeClassification {
        regime: Regime::Unclassified,
        k,
        lambda,
        k0_bar: k0.as_ref().ok().copied(),
        k2_bar: k2.as_ref().ok().copied(),
        equilibria,
        reason: None,
    };
    match k0 {
        Ok(bound) if bound.admits(k) => {
            out.regime = Regime::ZeroDominantStable;
            return out;
        }
        Ok(_) => {}
        Err(e) => {
            out.reason = Some(format!("0-dominance: {e}"));
            return out;
        }
    }
    match k2 {
        Err(e) => out.reason = Some(format!("2-dominance: {e}")),
        Ok(bound) if !bound.admits(k) => {
            out.reason = Some("gain above both critical gains".into());
        }
        Ok(_) => {
            let stable = out.equilibria.iter().any(|e| e.stability == Stability::Stable);
            let all_unstable = out.equilibria.iter().all(|e| e.stability == Stability::Unstable);
            if stable {
                out.regime = Regime::TwoDominantMultistable;
            } else if all_unstable {
                out.regime = Regime::TwoDominantOscillation;
            } else {
                out.reason = Some("marginal equilibrium".into());
            }
        }
    }
    out
}

/// Regime of the amplifier at reference `r` with 2-dominance rate `lambda`.
pub fn classify_regime(params: &AmplifierParams, r: f64, lambda: f64) -> RegimeClassification {
    classify_regime_on(params, r, lambda, &FrequencyGrid::for_amplifier(params))
}

pub fn classify_regime_on(params: &AmplifierParams, r: f64, lambda: f64, grid: &FrequencyGrid) -> RegimeClassification {
    let gains = critical_gains(&params.open_loop_unit(), lambda, grid);
    with_equilibria(params.k, lambda, gains, find_equilibria(params, r))
}

/// Same classification for any Lure realization whose open loop is
/// `k g_unit`.
pub fn classify_lure_regime(
    sys: &StateSpace,
    g_unit: &RationalTF,
    k: f64,
    r: f64,
    lambda: f64,
    grid: &FrequencyGrid,
) -> RegimeClassification {
    with_equilibria(k, lambda, critical_gains(g_unit, lambda, grid), find_lure_equilibria(sys, r))
}

fn with_equilibria(k: f64, lambda: f64, gains: CriticalGains, eq: Result<Vec<Equilibrium>>) -> RegimeClassification {
    match eq {
        Ok(eq) => decide_regime(k, lambda, gains, eq),
        Err(e) => {
            let mut out = decide_regime(k, lambda, gains, Vec::new());
            out.regime = Regime::Unclassified;
            out.reason = Some(format!("equilibria: {e}"));
            out
        }
    }
}

/// Grid for [`dominance_map`]: `rows` log-spaced gains in `[k_min, k_max]`
/// and `cols` linearly spaced balances in `[beta_min, beta_max]`, both
/// endpoints included.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapSpec {
    pub tau_l: f64,
    pub tau_p: f64,
    pub tau_n: f64,
    pub k_min: f64,
    pub k_max: f64,
    pub beta_min: f64,
    pub beta_max: f64,
    pub rows: usize,
    pub cols: usize,
    pub r: f64,
    /// `None` selects the midpoint rate.
    pub lambda: Option<f64>,
    #[serde(default)]
    pub nonlinearity: Nonlinearity,
    #[serde(default)]
    pub grid_points: Option<usize>,
}

impl MapSpec {
    /// Defaults matching the fast-load panel: `k` in `[0.1, 1000]`,
    /// `beta` in `[0, 1]`, 60 x 60, `r = 0`, `lambda = 50`.
    pub fn fast_load() -> Self {
        MapSpec {
            tau_l: 0.01,
            tau_p: 0.1,
            tau_n: 1.0,
            k_min: 0.1,
            k_max: 1000.0,
            beta_min: 0.0,
            beta_max: 1.0,
            rows: 60,
            cols: 60,
            r: 0.0,
            lambda: Some(50.0),
            nonlinearity: Nonlinearity::Tanh,
            grid_points: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        crate::tf_core::validate_taus(self.tau_l, self.tau_p, self.tau_n)?;
        if !(self.k_min > 0.0 && self.k_max >= self.k_min && self.k_max.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "gain range must satisfy 0 < k_min <= k_max (got {}, {})",
                self.k_min, self.k_max
            )));
        }
        if !(0.0 <= self.beta_min && self.beta_min <= self.beta_max && self.beta_max <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "balance range must satisfy 0 <= beta_min <= beta_max <= 1 (got {}, {})",
                self.beta_min, self.beta_max
            )));
        }
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::InvalidParameter("map needs at least one row and one column".into()));
        }
        if !self.r.is_finite() {
            return Err(Error::InvalidParameter("reference r must be finite".into()));
        }
        Ok(())
    }

    pub fn ks(&self) -> Vec<f64> {
        if self.rows == 1 {
            return vec![self.k_min];
        }
        let (a, b) = (self.k_min.ln(), self.k_max.ln());
        (0..self.rows)
            .map(|i| match i {
                0 => self.k_min,
                i if i == self.rows - 1 => self.k_max,
                i => (a + (b - a) * i as f64 / (self.rows - 1) as f64).exp(),
            })
            .collect()
    }

    pub fn betas(&self) -> Vec<f64> {
        if self.cols == 1 {
            return vec![self.beta_min];
        }
        (0..self.cols)
            .map(|j| match j {
                j if j == self.cols - 1 => self.beta_max,
                j => self.beta_min + (self.beta_max - self.beta_min) * j as f64 / (self.cols - 1) as f64,
            })
            .collect()
    }

    fn params(&self, k: f64, beta: f64) -> Result<AmplifierParams> {
        AmplifierParams::new(self.tau_l, self.tau_p, self.tau_n, k, beta).map(|p| p.with_nonlinearity(self.nonlinearity))
    }

    /// Rate used by every cell (it depends on the time constants only).
    pub fn rate(&self) -> f64 {
        self.lambda
            .unwrap_or_else(|| freq_analysis::select_rate_taus(&[self.tau_l, self.tau_p, self.tau_n]))
    }

    pub fn frequency_grid(&self) -> Result<FrequencyGrid> {
        let g = FrequencyGrid::for_amplifier(&self.params(1.0, 0.5)?);
        Ok(match self.grid_points {
            Some(n) => g.with_points(n),
            None => g,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapCell {
    pub row: usize,
    pub col: usize,
    pub k: f64,
    pub beta: f64,
    pub classification: RegimeClassification,
}

/// Classifies every `(k, beta)` cell. Critical gains depend on `beta` only
/// and are computed once per column. Work is spread over `jobs` threads
/// (`0` = rayon default); the result is row-major regardless.
pub fn dominance_map(spec: &MapSpec, jobs: usize) -> Result<Vec<MapCell>> {
    spec.validate()?;
    let lambda = spec.rate();
    let grid = spec.frequency_grid()?;
    let ks = spec.ks();
    let betas = spec.betas();

    let run = || -> Result<Vec<MapCell>> {
        let columns: Vec<(Result<GainBound>, Result<GainBound>)> = betas
            .par_iter()
            .map(|&beta| {
                let g = spec.params(1.0, beta)?.open_loop_unit();
                Ok(critical_gains(&g, lambda, &grid))
            })
            .collect::<Result<_>>()?;
        (0..ks.len() * betas.len())
            .into_par_iter()
            .map(|idx| {
                let (row, col) = (idx / betas.len(), idx % betas.len());
                let params = spec.params(ks[row], betas[col])?;
                let gains = (columns[col].0.clone(), columns[col].1.clone());
                let classification = with_equilibria(params.k, lambda, gains, find_equilibria(&params, spec.r));
                Ok(MapCell { row, col, k: ks[row], beta: betas[col], classification })
            })
            .collect()
    };

    if jobs == 0 {
        run()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::InvalidParameter(format!("cannot start {jobs} workers: {e}")))?
            .install(run)
    }
}

/// Shifted inertia of the amplifier at `lambda`, exposed for reports.
pub fn shifted_inertia(params: &AmplifierParams, lambda: f64) -> Result<usize> {
    count_unstable_shifted_poles(&params.open_loop(), lambda)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn amp(k: f64, beta: f64) -> AmplifierParams {
        AmplifierParams::new(0.01, 0.1, 1.0, k, beta).unwrap()
    }

    #[test]
    fn dc_gain_values() {
        assert_eq!(dc_loop_gain(&amp(5.0, 0.8)), 3.0000000000000004);
        assert_eq!(dc_loop_gain(&amp(7.0, 0.5)), 0.0);
        assert!((dc_loop_gain(&amp(5.0, 0.4)) + 1.0).abs() < 1e-15);
    }

    #[test]
    fn single_equilibrium_with_negative_dc_gain() {
        let eq = find_equilibria(&amp(5.0, 0.4), 0.0).unwrap();
        assert_eq!(eq.len(), 1);
        assert!(eq[0].y_star.abs() < 1e-12);
    }

    #[test]
    fn three_equilibria_at_g0_three() {
        let eq = find_equilibria(&amp(5.0, 0.8), 0.0).unwrap();
        assert_eq!(eq.len(), 3);
        assert!((eq[2].y_star - 2.9847).abs() < 1e-3);
        assert!((eq[0].y_star + eq[2].y_star).abs() < 1e-10);
        assert_eq!(eq[1].stability, Stability::Unstable);
        assert_eq!(eq[0].stability, Stability::Stable);
    }

    #[test]
    fn balanced_loop_sits_at_reference() {
        let eq = find_equilibria(&amp(5.0, 0.5), 0.3).unwrap();
        assert_eq!(eq.len(), 1);
        assert_eq!(eq[0].y_star, 0.0);
        assert_eq!(eq[0].state, vec![0.3; 3]);
    }

    #[test]
    fn tangency_is_marginal() {
        // g0 = 1 at r = 0 makes y = 0 a triple root of y - tanh(y)
        let eq = find_equilibria(&amp(2.0, 0.75), 0.0).unwrap();
        assert_eq!(eq.len(), 1);
        assert!(eq[0].tangency);
        assert_eq!(eq[0].stability, Stability::Marginal);
    }

    #[test]
    fn jacobian_example() {
        let j = jacobian_at(&amp(5.0, 0.8), 0.0);
        let want = [-100.0, 400.0, -100.0, 10.0, -10.0, 0.0, 1.0, 0.0, -1.0];
        for (i, w) in want.iter().enumerate() {
            assert!((j[(i / 3, i % 3)] - w).abs() < 1e-12);
        }
        let eigs = eigenvalues(j).unwrap();
        assert!(eigs.iter().any(|z| z.re > 0.0));
    }

    #[test]
    fn severed_or_saturated_jacobian_is_triangular() {
        let want = [-100.0, -10.0, -1.0];
        for j in [jacobian_at(&amp(0.0, 0.3), 0.0), jacobian_at(&amp(5.0, 0.3), 1e3)] {
            let mut eigs: Vec<f64> = eigenvalues(j).unwrap().iter().map(|z| z.re).collect();
            eigs.sort_by(f64::total_cmp);
            for (e, w) in eigs.iter().zip(want) {
                assert!((e - w).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn stability_labels() {
        let c = |v: &[(f64, f64)]| v.iter().map(|&(a, b)| Complex64::new(a, b)).collect::<Vec<_>>();
        assert_eq!(classify_stability(&c(&[(-1.0, 0.0), (-2.0, 0.0), (-3.0, 0.0)])), Stability::Stable);
        assert_eq!(classify_stability(&c(&[(0.5, 0.0), (-1.0, 1.0), (-1.0, -1.0)])), Stability::Unstable);
        assert_eq!(classify_stability(&c(&[(0.0, 0.0), (-1.0, 0.0), (-2.0, 0.0)])), Stability::Marginal);
    }

    #[test]
    fn reference_regimes() {
        assert_eq!(classify_regime(&amp(5.0, 0.2), 0.0, 50.0).regime, Regime::ZeroDominantStable);
        assert_eq!(classify_regime(&amp(5.0, 0.4), 0.0, 50.0).regime, Regime::TwoDominantOscillation);
        assert_eq!(classify_regime(&amp(5.0, 0.8), 0.0, 50.0).regime, Regime::TwoDominantMultistable);
    }

    #[test]
    fn bad_rate_is_unclassified() {
        let c = classify_regime(&amp(5.0, 0.4), 0.0, 5.0);
        assert_eq!(c.regime, Regime::Unclassified);
        assert!(c.reason.unwrap().contains("shifted inertia"));
    }

    #[test]
    fn lure_path_agrees_with_amplifier_path() {
        let p = amp(5.0, 0.8);
        let a = find_equilibria(&p, 0.2).unwrap();
        let b = find_lure_equilibria(&StateSpace::amplifier(&p), 0.2).unwrap();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert!((x.y_star - y.y_star).abs() < 1e-10);
            assert_eq!(x.stability, y.stability);
            for (s, t) in x.state.iter().zip(&y.state) {
                assert!((s - t).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn map_axes() {
        let spec = MapSpec { rows: 3, cols: 5, ..MapSpec::fast_load() };
        let ks = spec.ks();
        assert_eq!(ks[0], 0.1);
        assert_eq!(ks[2], 1000.0);
        assert!((ks[1] - 10.0).abs() < 1e-12);
        assert_eq!(spec.betas(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
    }

    #[test]
    fn single_cell_map_matches_classify() {
        let spec = MapSpec { rows: 1, cols: 1, k_min: 5.0, k_max: 5.0, beta_min: 0.4, beta_max: 0.4, ..MapSpec::fast_load() };
        let cells = dominance_map(&spec, 1).unwrap();
        assert_eq!(cells.len(), 1);
        assert_eq!(cells[0].classification, classify_regime(&amp(5.0, 0.4), 0.0, 50.0));
    }
}
