//! Aggregated analysis reports and the CSV writers behind the CLI.
//!
//! CSV output writes every float with 17 significant digits and starts with
//! a `#` comment line naming the tool version; there are no timestamps, so
//! identical inputs give byte-identical files.

use std::io::{self, Write};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::equilibria::{
    classify_lure_regime, classify_regime_on, find_equilibria, find_lure_equilibria, Equilibrium, MapCell, Regime,
    Stability,
};
use crate::error::Result;
use crate::freq_analysis::{
    count_unstable_shifted_poles, select_rate_taus, FrequencyGrid, GainBound, NyquistPoint,
};
use crate::multichannel::{check_interlacing, critical_balance_bank, BankConfig, InterlacingReport};
use crate::tf_core::{critical_balance, AmplifierParams, ZeroLocation};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// `# mfa <version>` header line shared by every CSV.
pub fn version_comment() -> String {
    format!("# mfa {VERSION}")
}

/// How the 2-dominance rate was chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaPolicy {
    /// Midpoint between the two fastest poles.
    Midpoint,
    User,
}

/// Everything the amplifier analysis knows about one parameter set. The
/// regime can be recomputed from `k`, `k0_bar`, `k2_bar` and the equilibrium
/// stabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub version: String,
    pub params: AmplifierParams,
    pub r: f64,
    pub poles: Vec<Complex64>,
    pub zero: ZeroLocation,
    pub beta_star: f64,
    pub dc_loop_gain: f64,
    pub lambda: f64,
    pub lambda_policy: LambdaPolicy,
    pub shifted_inertia: Option<usize>,
    pub k0_bar: Option<GainBound>,
    pub k2_bar: Option<GainBound>,
    pub equilibria: Vec<Equilibrium>,
    pub regime: Regime,
    pub reason: Option<String>,
    pub grid: FrequencyGrid,
}

fn rate_and_grid(taus: &[f64], lambda: Option<f64>, grid_points: Option<usize>) -> (f64, LambdaPolicy, FrequencyGrid) {
    let (lambda, policy) = match lambda {
        Some(l) => (l, LambdaPolicy::User),
        None => (select_rate_taus(taus), LambdaPolicy::Midpoint),
    };
    let grid = FrequencyGrid::for_time_constants(taus);
    (lambda, policy, grid_points.map_or(grid, |n| grid.with_points(n)))
}

pub fn analyze(params: &AmplifierParams, r: f64, lambda: Option<f64>, grid_points: Option<usize>) -> Result<AnalysisReport> {
    params.validate()?;
    let (lambda, lambda_policy, grid) = rate_and_grid(&params.taus(), lambda, grid_points);
    let g = params.open_loop();
    let c = classify_regime_on(params, r, lambda, &grid);
    let equilibria = if c.equilibria.is_empty() { find_equilibria(params, r)? } else { c.equilibria };
    Ok(AnalysisReport {
        version: VERSION.to_string(),
        params: *params,
        r,
        poles: g.poles()?,
        zero: params.open_loop_zero(),
        beta_star: critical_balance(params.tau_p, params.tau_n),
        dc_loop_gain: params.dc_loop_gain(),
        lambda,
        lambda_policy,
        shifted_inertia: count_unstable_shifted_poles(&g, lambda).ok(),
        k0_bar: c.k0_bar,
        k2_bar: c.k2_bar,
        equilibria,
        regime: c.regime,
        reason: c.reason,
        grid,
    })
}

/// The same analysis for a multichannel bank, plus the interlacing check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BankReport {
    pub version: String,
    pub config: BankConfig,
    pub r: f64,
    pub poles: Vec<Complex64>,
    pub zeros: Vec<Complex64>,
    /// Balance at which the outer zero escapes to infinity.
    pub beta_star: f64,
    pub dc_loop_gain: f64,
    pub lambda: f64,
    pub lambda_policy: LambdaPolicy,
    pub shifted_inertia: Option<usize>,
    pub k0_bar: Option<GainBound>,
    pub k2_bar: Option<GainBound>,
    pub equilibria: Vec<Equilibrium>,
    pub regime: Regime,
    pub reason: Option<String>,
    pub grid: FrequencyGrid,
    /// Absent at `beta = 0` or `beta = 1`, where one bank drops out.
    pub interlacing: Option<InterlacingReport>,
}

pub fn analyze_bank(config: &BankConfig, r: f64, lambda: Option<f64>, grid_points: Option<usize>) -> Result<BankReport> {
    let (pos, neg) = config.banks()?;
    let (lambda, lambda_policy, grid) = rate_and_grid(&config.taus(), lambda, grid_points);
    let g = config.open_loop()?;
    let sys = config.realize()?;
    let c = classify_lure_regime(&sys, &config.open_loop_unit()?, config.k, r, lambda, &grid);
    let equilibria = if c.equilibria.is_empty() { find_lure_equilibria(&sys, r)? } else { c.equilibria };
    let interlacing = if config.beta > 0.0 && config.beta < 1.0 {
        Some(check_interlacing(&pos, &neg, config.beta)?)
    } else {
        None
    };
    Ok(BankReport {
        version: VERSION.to_string(),
        config: config.clone(),
        r,
        poles: g.poles()?,
        zeros: g.zeros()?,
        beta_star: critical_balance_bank(&pos, &neg)?,
        dc_loop_gain: config.k * (2.0 * config.beta - 1.0),
        lambda,
        lambda_policy,
        shifted_inertia: count_unstable_shifted_poles(&g, lambda).ok(),
        k0_bar: c.k0_bar,
        k2_bar: c.k2_bar,
        equilibria,
        regime: c.regime,
        reason: c.reason,
        grid,
        interlacing,
    })
}

/// Fixed-width scientific notation with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_gain(g: Option<GainBound>) -> String {
    match g {
        Some(GainBound::Finite(v)) => fmt_f64(v),
        Some(GainBound::Unbounded) => "unbounded".into(),
        None => "NA".into(),
    }
}

/// `k,beta,regime,k0_bar,k2_bar,n_equilibria,n_unstable`, row-major.
pub fn write_map_csv<W: Write>(w: &mut W, cells: &[MapCell]) -> io::Result<()> {
    writeln!(w, "{}", version_comment())?;
    writeln!(w, "k,beta,regime,k0_bar,k2_bar,n_equilibria,n_unstable")?;
    for cell in cells {
        let c = &cell.classification;
        let n_unstable = c.equilibria.iter().filter(|e| e.stability == Stability::Unstable).count();
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            fmt_f64(cell.k),
            fmt_f64(cell.beta),
            c.regime,
            fmt_gain(c.k0_bar),
            fmt_gain(c.k2_bar),
            c.equilibria.len(),
            n_unstable
        )?;
    }
    Ok(())
}

/// `omega,re,im,pole_proximity`.
pub fn write_nyquist_csv<W: Write>(w: &mut W, lambda: f64, points: &[NyquistPoint]) -> io::Result<()> {
    writeln!(w, "{}", version_comment())?;
    writeln!(w, "# lambda = {}", fmt_f64(lambda))?;
    writeln!(w, "omega,re,im,pole_proximity")?;
    for p in points {
        writeln!(w, "{},{},{},{}", fmt_f64(p.omega), fmt_f64(p.re), fmt_f64(p.im), p.pole_proximity)?;
    }
    Ok(())
}
