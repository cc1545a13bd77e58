//! Time-domain simulation of Lure loops.
//!
//! Every simulated system is written as
//!
//! ```text
//! x' = A x + b (r - phi(c . x)),   y = c . x
//! ```
//!
//! The amplifier, its multichannel generalization and the amplifier-load
//! interconnection are all realizations of this form ([`StateSpace`]), so a
//! single fixed-step RK4 integrator serves all of them.

use std::io::{self, Write};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tf_core::{eigenvalues, AmplifierParams, Nonlinearity};

/// Lure system `x' = A x + b (r - phi(c . x))` with output `y = c . x`.
///
/// The first `n_lag` states are the amplifier states (load lag and feedback
/// channels); trajectory CSVs list them before `y`, the remaining states after.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    a: DMatrix<f64>,
    b: DVector<f64>,
    c: DVector<f64>,
    nonlinearity: Nonlinearity,
    state_names: Vec<String>,
    n_lag: usize,
    aux_outputs: Vec<(String, DVector<f64>)>,
}

impl StateSpace {
    pub fn new(
        a: DMatrix<f64>,
        b: DVector<f64>,
        c: DVector<f64>,
        nonlinearity: Nonlinearity,
        state_names: Vec<String>,
    ) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || a.ncols() != n || b.len() != n || c.len() != n || state_names.len() != n {
            return Err(Error::InvalidParameter(format!(
                "inconsistent state-space dimensions: A {}x{}, b {}, c {}, {} names",
                a.nrows(),
                a.ncols(),
                b.len(),
                c.len(),
                state_names.len()
            )));
        }
        if a.iter().chain(b.iter()).chain(c.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("state-space matrices must be finite".into()));
        }
        Ok(StateSpace { a, b, c, nonlinearity, state_names, n_lag: n, aux_outputs: Vec::new() })
    }

    /// Three-state realization of the amplifier, states `(x, xp, xn)`.
    pub fn amplifier(params: &AmplifierParams) -> Self {
        let (tl, tp, tn) = (params.tau_l, params.tau_p, params.tau_n);
        #[rustfmt::skip]
        let a = DMatrix::from_row_slice(3, 3, &[
            -1.0 / tl, 0.0,       0.0,
            1.0 / tp,  -1.0 / tp, 0.0,
            1.0 / tn,  0.0,       -1.0 / tn,
        ]);
        let b = DVector::from_vec(vec![1.0 / tl, 0.0, 0.0]);
        let c = DVector::from_vec(vec![0.0, -params.k * params.beta, params.k * (1.0 - params.beta)]);
        StateSpace::new(a, b, c, params.nonlinearity, vec!["x".into(), "xp".into(), "xn".into()])
            .expect("amplifier realization is well formed")
    }

    /// Marks only the first `n_lag` states as amplifier states.
    pub fn with_lag_states(mut self, n_lag: usize) -> Self {
        self.n_lag = n_lag.min(self.dim());
        self
    }

    /// Adds a linear read-out `row . x` recorded alongside `y`.
    pub fn with_output(mut self, name: &str, row: DVector<f64>) -> Result<Self> {
        if row.len() != self.dim() {
            return Err(Error::InvalidParameter(format!("output {name} has wrong length {}", row.len())));
        }
        self.aux_outputs.push((name.to_string(), row));
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn c(&self) -> &DVector<f64> {
        &self.c
    }

    pub fn nonlinearity(&self) -> Nonlinearity {
        self.nonlinearity
    }

    pub fn state_names(&self) -> &[String] {
        &self.state_names
    }

    pub fn n_lag(&self) -> usize {
        self.n_lag
    }

    pub fn aux_outputs(&self) -> &[(String, DVector<f64>)] {
        &self.aux_outputs
    }

    /// `c . x`, summed over the nonzero entries of `c` in index order.
    pub fn output(&self, x: &[f64]) -> f64 {
        sparse_dot(self.c.iter(), x)
    }

    /// Right-hand side at constant reference `r`. Structural zeros of `A`
    /// are skipped, so embedding a system in a larger block-triangular one
    /// leaves its arithmetic bit-for-bit unchanged.
    pub fn derivative(&self, x: &[f64], r: f64, out: &mut [f64]) {
        let u = r - self.nonlinearity.eval(self.output(x));
        for (i, o) in out.iter_mut().enumerate() {
            let mut acc = sparse_dot(self.a.row(i).iter(), x);
            let bi = self.b[i];
            if bi != 0.0 {
                acc += bi * u;
            }
            *o = acc;
        }
    }

    /// Linearization `A - phi'(y) b c^T` about a point with output `y`.
    pub fn jacobian(&self, y: f64) -> DMatrix<f64> {
        &self.a - self.nonlinearity.slope(y) * &self.b * self.c.transpose()
    }

    /// Open-loop transfer function from `u` to `y`, `c (sI - A)^-1 b`.
    pub fn transfer_at(&self, s: Complex64) -> Result<Complex64> {
        let n = self.dim();
        let m = DMatrix::<Complex64>::from_fn(n, n, |i, j| {
            let diag = if i == j { s } else { Complex64::new(0.0, 0.0) };
            diag - Complex64::new(self.a[(i, j)], 0.0)
        });
        let rhs = self.b.map(|v| Complex64::new(v, 0.0));
        let z = m.lu().solve(&rhs).ok_or(Error::PoleProximity { re: s.re, im: s.im, magnitude: 0.0 })?;
        Ok(self.c.iter().zip(z.iter()).map(|(ci, zi)| zi * *ci).sum())
    }

    /// `-c A^-1 b`, the static gain from `u` to `y`.
    pub fn dc_gain(&self) -> Result<f64> {
        Ok(-self.c.dot(&self.steady_direction()?))
    }

    /// `A^-1 b`: the constant-input steady state is `-A^-1 b u`.
    pub fn steady_direction(&self) -> Result<DVector<f64>> {
        self.a
            .clone()
            .lu()
            .solve(&self.b)
            .filter(|v| v.iter().all(|x| x.is_finite()))
            .ok_or_else(|| Error::InvalidParameter("linear part A is singular".into()))
    }

    /// `1 / max |eig(A)|`, the fastest time scale of the linear part.
    pub fn fastest_time_scale(&self) -> Result<f64> {
        let fastest = eigenvalues(self.a.clone())?.iter().map(|z| z.norm()).fold(0.0, f64::max);
        Ok(if fastest > 0.0 { 1.0 / fastest } else { f64::INFINITY })
    }
}

fn sparse_dot<'a>(row: impl Iterator<Item = &'a f64>, x: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (aij, xj) in row.zip(x) {
        if *aij != 0.0 {
            acc += aij * xj;
        }
    }
    acc
}

/// Right-hand side of the amplifier equations in their physical form:
///
/// ```text
/// tau_l x'  = -x + u,     u = -phi(y) + r
/// tau_p xp' =  x - xp,    y = k (-beta xp + (1 - beta) xn)
/// tau_n xn' =  x - xn
/// ```
pub fn vector_field(params: &AmplifierParams, state: [f64; 3], r: f64) -> [f64; 3] {
    let [x, xp, xn] = state;
    let y = params.k * (-params.beta * xp + (1.0 - params.beta) * xn);
    let u = -params.nonlinearity.eval(y) + r;
    [(-x + u) / params.tau_l, (x - xp) / params.tau_p, (x - xn) / params.tau_n]
}

/// Piecewise-constant reference: value `r` from `t` until the next entry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub t: f64,
    pub r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Segment>", into = "Vec<Segment>")]
pub struct InputSchedule {
    segments: Vec<Segment>,
}

impl TryFrom<Vec<Segment>> for InputSchedule {
    type Error = Error;

    fn try_from(segments: Vec<Segment>) -> Result<Self> {
        InputSchedule::new(segments)
    }
}

impl From<InputSchedule> for Vec<Segment> {
    fn from(s: InputSchedule) -> Self {
        s.segments
    }
}

impl InputSchedule {
    pub fn new(segments: Vec<Segment>) -> Result<Self> {
        match segments.first() {
            Some(s) if s.t == 0.0 => {}
            _ => return Err(Error::InvalidParameter("input schedule must start at t = 0".into())),
        }
        if segments.iter().any(|s| !s.t.is_finite() || !s.r.is_finite()) {
            return Err(Error::InvalidParameter("input schedule entries must be finite".into()));
        }
        if segments.windows(2).any(|w| w[1].t <= w[0].t) {
            return Err(Error::InvalidParameter("input schedule times must be strictly increasing".into()));
        }
        Ok(InputSchedule { segments })
    }

    pub fn constant(r: f64) -> Self {
        InputSchedule { segments: vec![Segment { t: 0.0, r }] }
    }

    /// `r0` everywhere except `r_pulse` on `[t_on, t_off)`.
    pub fn pulse(r0: f64, r_pulse: f64, t_on: f64, t_off: f64) -> Result<Self> {
        InputSchedule::new(vec![
            Segment { t: 0.0, r: r0 },
            Segment { t: t_on, r: r_pulse },
            Segment { t: t_off, r: r0 },
        ])
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn value_at(&self, t: f64) -> f64 {
        self.segments.iter().take_while(|s| s.t <= t).last().map_or(self.segments[0].r, |s| s.r)
    }

    pub fn max_abs(&self) -> f64 {
        self.segments.iter().map(|s| s.r.abs()).fold(0.0, f64::max)
    }

    /// Reference value held over each of `n` steps of length `dt`: every
    /// change takes effect at the first sample at or after its start time.
    fn sampled(&self, dt: f64, n: usize) -> Vec<f64> {
        let mut values = vec![self.segments[0].r; n];
        for seg in &self.segments[1..] {
            let start = (seg.t / dt - 1e-9).ceil().max(0.0) as usize;
            for v in values.iter_mut().skip(start) {
                *v = seg.r;
            }
        }
        values
    }
}

/// Uniformly sampled solution. `states[i]` and `y[i]` belong to `t[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    pub aux: Vec<(String, Vec<f64>)>,
    pub state_names: Vec<String>,
    pub n_lag: usize,
    pub schedule: InputSchedule,
}

impl Trajectory {
    pub fn dt(&self) -> f64 {
        if self.t.len() > 1 {
            self.t[1] - self.t[0]
        } else {
            0.0
        }
    }

    pub fn final_state(&self) -> &[f64] {
        self.states.last().expect("trajectory has at least one sample")
    }

    pub fn state_series(&self, i: usize) -> Vec<f64> {
        self.states.iter().map(|s| s[i]).collect()
    }

    pub fn aux_series(&self, name: &str) -> Option<&[f64]> {
        self.aux.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }

    /// Column names: `t`, the amplifier states, `y`, remaining states,
    /// auxiliary outputs.
    pub fn columns(&self) -> Vec<String> {
        let mut cols = vec!["t".to_string()];
        cols.extend(self.state_names[..self.n_lag].iter().cloned());
        cols.push("y".into());
        cols.extend(self.state_names[self.n_lag..].iter().cloned());
        cols.extend(self.aux.iter().map(|(n, _)| n.clone()));
        cols
    }

    /// CSV with 17 significant digits per value.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> io::Result<()> {
        writeln!(w, "{}", crate::report::version_comment())?;
        writeln!(w, "{}", self.columns().join(","))?;
        for i in 0..self.t.len() {
            let s = &self.states[i];
            let mut row = Vec::with_capacity(s.len() + 2 + self.aux.len());
            row.push(self.t[i]);
            row.extend_from_slice(&s[..self.n_lag]);
            row.push(self.y[i]);
            row.extend_from_slice(&s[self.n_lag..]);
            row.extend(self.aux.iter().map(|(_, v)| v[i]));
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
            writeln!(w, "{}", cells.join(","))?;
        }
        Ok(())
    }
}

/// Classical fixed-step RK4 over `[0, t_end]` (rounded to whole steps).
/// The reference is held constant within each step.
pub fn integrate(sys: &StateSpace, ic: &[f64], schedule: &InputSchedule, dt: f64, t_end: f64) -> Result<Trajectory> {
    let n = sys.dim();
    if ic.len() != n {
        return Err(Error::InvalidParameter(format!("initial state has {} entries, system has {n}", ic.len())));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParameter(format!("step dt must be > 0, got {dt}")));
    }
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(Error::InvalidParameter(format!("horizon T must be > 0, got {t_end}")));
    }
    if ic.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("initial state must be finite".into()));
    }
    let tau_min = sys.fastest_time_scale()?;
    if dt > tau_min / 5.0 {
        log::warn!("step dt = {dt} exceeds a fifth of the fastest time scale {tau_min:.3e}");
    }

    let steps = (t_end / dt).round().max(1.0) as usize;
    let r = schedule.sampled(dt, steps);
    let mut t = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    let mut y = Vec::with_capacity(steps + 1);
    let mut aux: Vec<(String, Vec<f64>)> =
        sys.aux_outputs.iter().map(|(name, _)| (name.clone(), Vec::with_capacity(steps + 1))).collect();

    let mut record = |i: usize, x: &[f64]| {
        t.push(i as f64 * dt);
        y.push(sys.output(x));
        for ((_, row), (_, series)) in sys.aux_outputs.iter().zip(aux.iter_mut()) {
            series.push(sparse_dot(row.iter(), x));
        }
        states.push(x.to_vec());
    };

    let mut x = ic.to_vec();
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    record(0, &x);
    for i in 0..steps {
        let ri = r[i];
        sys.derivative(&x, ri, &mut k1);
        for j in 0..n {
            tmp[j] = x[j] + 0.5 * dt * k1[j];
        }
        sys.derivative(&tmp, ri, &mut k2);
        for j in 0..n {
            tmp[j] = x[j] + 0.5 * dt * k2[j];
        }
        sys.derivative(&tmp, ri, &mut k3);
        for j in 0..n {
            tmp[j] = x[j] + dt * k3[j];
        }
        sys.derivative(&tmp, ri, &mut k4);
        for j in 0..n {
            x[j] += dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { time: (i + 1) as f64 * dt });
        }
        record(i + 1, &x);
    }
    Ok(Trajectory {
        t,
        states,
        y,
        aux,
        state_names: sys.state_names.clone(),
        n_lag: sys.n_lag,
        schedule: schedule.clone(),
    })
}

/// Default step: a twentieth of the smallest time constant.
pub fn default_dt(params: &AmplifierParams) -> f64 {
    params.taus().iter().copied().fold(f64::INFINITY, f64::min) / 20.0
}

pub fn integrate_amplifier(
    params: &AmplifierParams,
    ic: [f64; 3],
    schedule: &InputSchedule,
    dt: f64,
    t_end: f64,
) -> Result<Trajectory> {
    integrate(&StateSpace::amplifier(params), &ic, schedule, dt, t_end)
}

pub const DEFAULT_TRANSIENT_FRACTION: f64 = 0.5;
pub const DEFAULT_AMP_THRESHOLD: f64 = 1e-3;
/// Fewest mean-crossings in the window that count as sustained oscillation.
pub const MIN_CROSSINGS: usize = 5;
/// Fewest periods the detection window has to cover.
pub const MIN_PERIODS: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OscillationReport {
    pub oscillating: bool,
    /// Peak-to-peak of the signal over the detection window.
    pub amplitude: f64,
    /// Mean crossing-to-crossing period (rising crossings).
    pub period: Option<f64>,
    /// First autocorrelation peak.
    pub period_autocorr: Option<f64>,
    /// `|period - period_autocorr| / period`.
    pub agreement: Option<f64>,
    /// Mean-crossings (both directions) in the window.
    pub crossings: usize,
}

impl OscillationReport {
    fn quiet(amplitude: f64, crossings: usize) -> Self {
        OscillationReport { oscillating: false, amplitude, period: None, period_autocorr: None, agreement: None, crossings }
    }
}

/// Oscillation test on the output `y` of a trajectory.
pub fn detect_oscillation(traj: &Trajectory, transient_fraction: f64, amp_threshold: f64) -> Result<OscillationReport> {
    detect_oscillation_series(&traj.y, traj.dt(), transient_fraction, amp_threshold)
}

/// Oscillation test on a uniformly sampled series.
///
/// The leading `transient_fraction` of the samples is discarded. The rest
/// oscillates when its peak-to-peak exceeds `amp_threshold` and it crosses
/// its mean at least [`MIN_CROSSINGS`] times (with a hysteresis band of 5 %
/// of the peak-to-peak). The crossing period is cross-checked against the
/// first peak of the autocorrelation.
pub fn detect_oscillation_series(
    y: &[f64],
    dt: f64,
    transient_fraction: f64,
    amp_threshold: f64,
) -> Result<OscillationReport> {
    if !(0.0..1.0).contains(&transient_fraction) {
        return Err(Error::InvalidParameter(format!("transient fraction must lie in [0, 1), got {transient_fraction}")));
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter("oscillation detection needs at least two samples".into()));
    }
    let w = &y[(y.len() as f64 * transient_fraction).floor() as usize..];
    if w.len() < 4 {
        return Err(Error::InvalidParameter("detection window has fewer than 4 samples".into()));
    }
    let window = (w.len() - 1) as f64 * dt;
    let (lo, hi) = w.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
    let amplitude = hi - lo;
    if !(amplitude > amp_threshold) {
        return Ok(OscillationReport::quiet(amplitude, 0));
    }

    let mean = w.iter().sum::<f64>() / w.len() as f64;
    let (rising, crossings) = mean_crossings(w, mean, 0.05 * amplitude, dt);
    if rising.len() < 2 {
        return Ok(OscillationReport::quiet(amplitude, crossings));
    }
    let period = (rising[rising.len() - 1] - rising[0]) / (rising.len() - 1) as f64;
    if window < MIN_PERIODS * period {
        return Err(Error::InsufficientHorizon { window, period });
    }
    if crossings < MIN_CROSSINGS {
        return Ok(OscillationReport::quiet(amplitude, crossings));
    }
    let period_autocorr = autocorr_period(w, mean, dt);
    Ok(OscillationReport {
        oscillating: true,
        amplitude,
        period: Some(period),
        period_autocorr,
        agreement: period_autocorr.map(|p| (period - p).abs() / period),
        crossings,
    })
}

/// Interpolated times of rising mean-crossings and the total number of
/// crossings. A crossing only counts once the signal has left the band
/// `mean +- band` on the other side.
fn mean_crossings(w: &[f64], mean: f64, band: f64, dt: f64) -> (Vec<f64>, usize) {
    #[derive(PartialEq, Clone, Copy)]
    enum Side {
        Unknown,
        Below,
        Above,
    }
    let mut side = Side::Unknown;
    let mut last_cross = None;
    let mut rising = Vec::new();
    let mut total = 0;
    for i in 0..w.len() {
        if i > 0 {
            let (a, b) = (w[i - 1] - mean, w[i] - mean);
            if (a < 0.0) != (b < 0.0) {
                last_cross = Some((i as f64 - 1.0 + a / (a - b)) * dt);
            }
        }
        let now = if w[i] > mean + band {
            Side::Above
        } else if w[i] < mean - band {
            Side::Below
        } else {
            continue;
        };
        if side != Side::Unknown && now != side {
            total += 1;
            if now == Side::Above {
                rising.extend(last_cross);
            }
        }
        side = now;
    }
    (rising, total)
}

/// Lag of the first autocorrelation maximum after the autocorrelation has
/// gone negative, refined by a parabola through the neighbouring lags.
fn autocorr_period(w: &[f64], mean: f64, dt: f64) -> Option<f64> {
    let n = w.len();
    let size = (2 * n).next_power_of_two();
    let mut buf: Vec<Complex64> = (0..size)
        .map(|i| Complex64::new(if i < n { w[i] - mean } else { 0.0 }, 0.0))
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(size).process(&mut buf);
    for v in buf.iter_mut() {
        *v = Complex64::new(v.norm_sqr(), 0.0);
    }
    planner.plan_fft_inverse(size).process(&mut buf);
    // unbiased estimate removes the triangular taper that drags peaks left
    let ac: Vec<f64> = (0..n).map(|lag| buf[lag].re / (n - lag) as f64).collect();

    let max_lag = n - n / 10;
    let neg = (1..max_lag).find(|&i| ac[i] < 0.0)?;
    let peak = (neg + 1..max_lag - 1).find(|&i| ac[i] > 0.0 && ac[i] >= ac[i - 1] && ac[i] > ac[i + 1])?;
    let (a, b, c) = (ac[peak - 1], ac[peak], ac[peak + 1]);
    let denom = a - 2.0 * b + c;
    let offset = if denom != 0.0 { 0.5 * (a - c) / denom } else { 0.0 };
    Some((peak as f64 + offset) * dt)
}

/// Ultimate bound check on the amplifier states: every lag state stays within
/// `r_max + 1 + margin` for `t >= from_time`.
pub fn boundedness_check(traj: &Trajectory, r_max: f64, margin: f64, from_time: f64) -> bool {
    let bound = r_max + 1.0 + margin;
    traj.t
        .iter()
        .zip(&traj.states)
        .filter(|(t, _)| **t >= from_time)
        .all(|(_, s)| s[..traj.n_lag].iter().all(|v| v.is_finite() && v.abs() <= bound))
}

/// Settling time used by [`boundedness_check`] callers: ten slowest time constants.
pub fn bound_settling_time(params: &AmplifierParams) -> f64 {
    10.0 * params.taus().iter().copied().fold(0.0, f64::max)
}

/// Runs every initial state to `t_end` in parallel and returns the final
/// distance of each run from `target`.
pub fn convergence_check(
    sys: &StateSpace,
    ics: &[Vec<f64>],
    target: &[f64],
    r: f64,
    dt: f64,
    t_end: f64,
) -> Result<Vec<f64>> {
    let schedule = InputSchedule::constant(r);
    ics.par_iter()
        .map(|ic| {
            let traj = integrate(sys, ic, &schedule, dt, t_end)?;
            Ok(traj.final_state().iter().zip(target).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn amp(k: f64, beta: f64) -> AmplifierParams {
        AmplifierParams::new(0.01, 0.1, 1.0, k, beta).unwrap()
    }

    #[test]
    fn origin_is_rest_point() {
        assert_eq!(vector_field(&amp(5.0, 0.4), [0.0; 3], 0.0), [0.0; 3]);
    }

    #[test]
    fn severed_loop_field() {
        assert_eq!(vector_field(&amp(0.0, 0.4), [1.0, 0.0, 0.0], 0.0), [-100.0, 10.0, 1.0]);
    }

    #[test]
    fn realization_matches_physical_field() {
        let p = amp(5.0, 0.8);
        let sys = StateSpace::amplifier(&p);
        let mut d = [0.0; 3];
        for s in [[0.3, -0.2, 0.7], [1.5, 1.0, -2.0], [-0.1, 0.05, 0.0]] {
            sys.derivative(&s, 0.25, &mut d);
            let want = vector_field(&p, s, 0.25);
            for i in 0..3 {
                assert!((d[i] - want[i]).abs() < 1e-12 * want[i].abs().max(1.0));
            }
        }
    }

    #[test]
    fn realization_transfer_and_dc() {
        let p = amp(5.0, 0.3);
        let sys = StateSpace::amplifier(&p);
        let g = p.open_loop();
        for s in [Complex64::new(1.0, 1.0), Complex64::new(-3.0, 40.0), Complex64::new(0.0, 0.0)] {
            let (a, b) = (sys.transfer_at(s).unwrap(), g.eval(s).unwrap());
            assert!((a - b).norm() < 1e-12 * b.norm().max(1.0));
        }
        assert!((sys.dc_gain().unwrap() - 5.0 * 0.4).abs() < 1e-14);
    }

    #[test]
    fn schedule_validation_and_snapping() {
        assert!(InputSchedule::new(vec![Segment { t: 1.0, r: 0.0 }]).is_err());
        assert!(InputSchedule::new(vec![Segment { t: 0.0, r: 0.0 }, Segment { t: 0.0, r: 1.0 }]).is_err());
        let s = InputSchedule::pulse(0.0, -1.0, 0.25, 0.35).unwrap();
        let v = s.sampled(0.1, 6);
        assert_eq!(v, vec![0.0, 0.0, 0.0, -1.0, 0.0, 0.0]);
        assert_eq!(s.value_at(0.3), -1.0);
        let json = serde_json::to_string(&s).unwrap();
        assert_eq!(json, r#"[{"t":0.0,"r":0.0},{"t":0.25,"r":-1.0},{"t":0.35,"r":0.0}]"#);
        assert_eq!(serde_json::from_str::<InputSchedule>(&json).unwrap(), s);
    }

    #[test]
    fn decoupled_lags_decay() {
        let p = amp(0.0, 0.4);
        let dt = 0.001;
        let traj = integrate_amplifier(&p, [1.0; 3], &InputSchedule::constant(0.0), dt, 0.5).unwrap();
        let tf = *traj.t.last().unwrap();
        assert!((tf - 0.5).abs() < 1e-12);
        let end = traj.final_state();
        for (i, tau) in p.taus().iter().enumerate() {
            // x = e^{-t/tau_l}; each channel is a lag driven by it from 1
            let exact = if i == 0 {
                (-tf / tau).exp()
            } else {
                let a = p.tau_l / (p.tau_l - tau);
                a * (-tf / p.tau_l).exp() + (1.0 - a) * (-tf / tau).exp()
            };
            assert!((end[i] - exact).abs() < 1e-6, "state {i}: {} vs {exact}", end[i]);
        }
    }

    #[test]
    fn divergence_is_reported() {
        let a = DMatrix::from_row_slice(1, 1, &[1.0]);
        let sys = StateSpace::new(a, DVector::from_vec(vec![0.0]), DVector::from_vec(vec![0.0]), Nonlinearity::Tanh, vec!["z".into()]).unwrap();
        let err = integrate(&sys, &[1.0], &InputSchedule::constant(0.0), 1.0, 2000.0).unwrap_err();
        assert!(matches!(err, Error::Divergence { time } if time > 0.0));
    }

    #[test]
    fn constant_is_not_oscillating() {
        let r = detect_oscillation_series(&vec![0.3; 1000], 0.01, 0.5, 1e-3).unwrap();
        assert!(!r.oscillating);
        assert_eq!(r.period, None);
    }

    #[test]
    fn sinusoid_period() {
        let dt = 1e-3;
        let y: Vec<f64> = (0..40_001).map(|i| (2.0 * std::f64::consts::PI * i as f64 * dt).sin()).collect();
        let r = detect_oscillation_series(&y, dt, 0.5, 1e-3).unwrap();
        assert!(r.oscillating);
        assert!((r.period.unwrap() - 1.0).abs() < 2e-3);
        assert!((r.period_autocorr.unwrap() - 1.0).abs() < 2e-3);
        assert!(r.agreement.unwrap() < 0.02);
    }

    #[test]
    fn short_window_is_an_error() {
        let dt = 1e-3;
        let y: Vec<f64> = (0..8_000).map(|i| (2.0 * std::f64::consts::PI * i as f64 * dt).sin()).collect();
        assert!(matches!(detect_oscillation_series(&y, dt, 0.5, 1e-3), Err(Error::InsufficientHorizon { .. })));
    }

    #[test]
    fn bounded_and_unbounded() {
        let p = amp(0.0, 0.5);
        let traj = integrate_amplifier(&p, [1.0; 3], &InputSchedule::constant(0.0), 0.001, 2.0).unwrap();
        assert!(boundedness_check(&traj, 0.0, 0.1, 0.0));
        let mut bad = traj.clone();
        for (i, s) in bad.states.iter_mut().enumerate() {
            s[0] = (i as f64 * 0.01).exp();
        }
        assert!(!boundedness_check(&bad, 0.0, 0.1, 0.0));
    }

    #[test]
    fn csv_layout() {
        let p = amp(5.0, 0.4);
        let traj = integrate_amplifier(&p, [0.1, 0.0, 0.0], &InputSchedule::constant(0.0), 0.001, 0.002).unwrap();
        let mut out = Vec::new();
        traj.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let mut lines = text.lines();
        assert!(lines.next().unwrap().starts_with("# mfa "));
        assert_eq!(lines.next().unwrap(), "t,x,xp,xn,y");
        assert_eq!(lines.next().unwrap(), "0.0000000000000000e0,1.0000000000000001e-1,0.0000000000000000e0,0.0000000000000000e0,0.0000000000000000e0");
        assert_eq!(lines.count(), 2);
    }
}
