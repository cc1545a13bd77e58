//! Amplifier driving a passive second-order load.
//!
//! The load is a normalized mass-spring-damper read through a mixed
//! velocity/position output,
//!
//! ```text
//! q'' = -b q' - a q + u_e,    y_e = k_v q' + k_p q,    L(s) = (k_v s + k_p) / (s^2 + b s + a)
//! ```
//!
//! and is coupled to the amplifier through two static gains: the amplifier
//! reference becomes `r - k_i y_e` and the load force is `-k_o y` (see
//! [`LoadDrive`]). Passivity degrees of the two blocks at a common rate add up
//! under this negative feedback coupling.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::equilibria::{find_lure_equilibria, Equilibrium};
use crate::error::{Error, Result};
use crate::freq_analysis::{check_p_passivity, DominanceCertificate, FrequencyGrid, SectorBound};
use crate::sim::StateSpace;
use crate::tf_core::{AmplifierParams, Polynomial, RationalTF};

/// Rates closer than this are treated as the same rate.
pub const RATE_MATCH_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoadParams {
    pub a: f64,
    pub b: f64,
    pub kv: f64,
    pub kp: f64,
}

impl LoadParams {
    pub fn new(a: f64, b: f64, kv: f64, kp: f64) -> Result<Self> {
        for (name, v) in [("a", a), ("b", b), ("kv", kv), ("kp", kp)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!("load parameter {name} must be > 0, got {v}")));
            }
        }
        Ok(LoadParams { a, b, kv, kp })
    }

    /// Load used for the oscillating interconnection: poles at
    /// `-17.5 +- 6.61j`, zero at `-20`.
    pub fn reference() -> Self {
        LoadParams { a: 350.0, b: 35.0, kv: 1.0, kp: 20.0 }
    }
}

/// Coupling gains; zero gains sever the corresponding path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterfaceGains {
    pub ki: f64,
    pub ko: f64,
}

impl InterfaceGains {
    pub fn new(ki: f64, ko: f64) -> Result<Self> {
        for (name, v) in [("ki", ki), ("ko", ko)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidParameter(format!("interface gain {name} must be >= 0, got {v}")));
            }
        }
        Ok(InterfaceGains { ki, ko })
    }
}

/// Sign of the force the amplifier output applies to the load.
///
/// `Inverted` (`u_e = -k_o y`) closes a loop whose trajectories stay bounded
/// and oscillate for the reference configuration. `Direct` (`u_e = +k_o y`)
/// routes a linear feedback path around the saturation that is unstable for
/// that configuration, so trajectories grow without bound; it is kept for
/// comparison only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoadDrive {
    #[default]
    Inverted,
    Direct,
}

impl LoadDrive {
    fn sign(self) -> f64 {
        match self {
            LoadDrive::Inverted => -1.0,
            LoadDrive::Direct => 1.0,
        }
    }
}

/// Load description accepted on the command line:
/// `{"a":..,"b":..,"kv":..,"kp":..,"ki":..,"ko":..}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoadConfig {
    pub a: f64,
    pub b: f64,
    pub kv: f64,
    pub kp: f64,
    pub ki: f64,
    pub ko: f64,
}

impl LoadConfig {
    pub fn split(&self) -> Result<(LoadParams, InterfaceGains)> {
        Ok((LoadParams::new(self.a, self.b, self.kv, self.kp)?, InterfaceGains::new(self.ki, self.ko)?))
    }
}

/// `(k_v s + k_p) / (s^2 + b s + a)`.
pub fn load_tf(load: &LoadParams) -> RationalTF {
    RationalTF::new(Polynomial::linear(load.kp, load.kv), Polynomial::new(vec![load.a, load.b, 1.0]))
        .expect("second-order load is proper")
}

/// 0-passivity of the load at rate `lambda`.
pub fn check_load_passivity(load: &LoadParams, lambda: f64) -> Result<DominanceCertificate> {
    let g = load_tf(load);
    check_p_passivity(&g, lambda, 0, &FrequencyGrid::for_tf(&g, lambda)?)
}

/// Five-state closed loop, states `(x, xp, xn, q, qdot)`, output `y`, with
/// `y_e` recorded as an auxiliary output.
pub fn assemble_closed_loop(amp: &AmplifierParams, load: &LoadParams, iface: &InterfaceGains) -> StateSpace {
    assemble_closed_loop_with(amp, load, iface, LoadDrive::Inverted)
}

pub fn assemble_closed_loop_with(
    amp: &AmplifierParams,
    load: &LoadParams,
    iface: &InterfaceGains,
    drive: LoadDrive,
) -> StateSpace {
    let (tl, tp, tn) = (amp.tau_l, amp.tau_p, amp.tau_n);
    let (cp, cn) = (-amp.k * amp.beta, amp.k * (1.0 - amp.beta));
    let ko = drive.sign() * iface.ko;
    #[rustfmt::skip]
    let a = DMatrix::from_row_slice(5, 5, &[
        -1.0 / tl, 0.0,       0.0,       -iface.ki * load.kp / tl, -iface.ki * load.kv / tl,
        1.0 / tp,  -1.0 / tp, 0.0,       0.0,                      0.0,
        1.0 / tn,  0.0,       -1.0 / tn, 0.0,                      0.0,
        0.0,       0.0,       0.0,       0.0,                      1.0,
        0.0,       ko * cp,   ko * cn,   -load.a,                  -load.b,
    ]);
    let b = DVector::from_vec(vec![1.0 / tl, 0.0, 0.0, 0.0, 0.0]);
    let c = DVector::from_vec(vec![0.0, cp, cn, 0.0, 0.0]);
    let names = ["x", "xp", "xn", "q", "qdot"].map(String::from).to_vec();
    StateSpace::new(a, b, c, amp.nonlinearity, names)
        .expect("interconnection realization is well formed")
        .with_lag_states(3)
        .with_output("ye", DVector::from_vec(vec![0.0, 0.0, 0.0, load.kp, load.kv]))
        .expect("y_e read-out has five entries")
}

/// Equilibria of the interconnection. At rest `q' = 0`, `q = u_e / a` and
/// `y_e = k_p u_e / a`, so the condition is scalar again:
/// `phi(y) = r - sigma k_i k_o (k_p / a) y + y / g0` with `sigma` the drive sign.
pub fn closed_loop_equilibria(
    amp: &AmplifierParams,
    load: &LoadParams,
    iface: &InterfaceGains,
    r: f64,
) -> Result<Vec<Equilibrium>> {
    find_lure_equilibria(&assemble_closed_loop(amp, load, iface), r)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositionCertificate {
    pub p_amplifier: usize,
    pub p_load: usize,
    pub lambda: f64,
    pub p_total: usize,
    pub valid: bool,
    pub reason: Option<String>,
}

/// Passivity degrees add under negative feedback when both blocks are
/// certified passive at one common rate.
pub fn compose_certificates(c_amp: &DominanceCertificate, c_load: &DominanceCertificate) -> CompositionCertificate {
    let mut reasons = Vec::new();
    if c_amp.sector_bound != SectorBound::Infinite || c_load.sector_bound != SectorBound::Infinite {
        reasons.push("both certificates must certify passivity (unbounded sector)".to_string());
    }
    if (c_amp.lambda - c_load.lambda).abs() > RATE_MATCH_TOL {
        reasons.push(format!("rate mismatch ({} vs {})", c_amp.lambda, c_load.lambda));
    }
    if !c_amp.passed {
        reasons.push("amplifier certificate failed".into());
    }
    if !c_load.passed {
        reasons.push("load certificate failed".into());
    }
    CompositionCertificate {
        p_amplifier: c_amp.p,
        p_load: c_load.p,
        lambda: c_amp.lambda,
        p_total: c_amp.p + c_load.p,
        valid: reasons.is_empty(),
        reason: if reasons.is_empty() { None } else { Some(reasons.join("; ")) },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{integrate, InputSchedule};
    use num_complex::Complex64;

    fn amp() -> AmplifierParams {
        AmplifierParams::new(0.01, 0.1, 1.0, 10.0, 0.4).unwrap()
    }

    #[test]
    fn load_poles_and_dc() {
        let g = load_tf(&LoadParams::reference());
        let p = g.poles().unwrap();
        assert!((p[0].re + 17.5).abs() < 1e-12 && (p[0].im.abs() - 43.75f64.sqrt()).abs() < 1e-12);
        let dc = g.eval(Complex64::new(0.0, 0.0)).unwrap().re;
        assert!((dc - 20.0 / 350.0).abs() < 1e-15);
        assert!(LoadParams::new(350.0, 35.0, 0.0, 20.0).is_err());
    }

    #[test]
    fn load_passivity() {
        assert!(check_load_passivity(&LoadParams::reference(), 15.0).unwrap().passed);
        let weak = LoadParams { kp: 0.01, ..LoadParams::reference() };
        assert!(!check_load_passivity(&weak, 15.0).unwrap().passed);
        assert!(check_load_passivity(&LoadParams::new(2.0, 3.0, 1.0, 1.0).unwrap(), 0.0).unwrap().passed);
    }

    #[test]
    fn composition_rules() {
        let c_load = check_load_passivity(&LoadParams::reference(), 15.0).unwrap();
        let g = amp().open_loop();
        let c_amp = check_p_passivity(&g, 15.0, 2, &FrequencyGrid::for_amplifier(&amp())).unwrap();
        let c = compose_certificates(&c_amp, &c_load);
        assert!(c.valid, "{c:?}");
        assert_eq!(c.p_total, 2);

        let c_far = check_p_passivity(&g, 50.0, 2, &FrequencyGrid::for_amplifier(&amp())).unwrap();
        let c = compose_certificates(&c_far, &c_load);
        assert!(!c.valid);
        assert!(c.reason.unwrap().contains("rate mismatch"));

        let c = compose_certificates(&c_load, &c_load);
        assert_eq!(c.p_total, 0);
        assert!(c.valid);
    }

    #[test]
    fn transfer_of_the_assembly() {
        // with the load severed the loop seen by phi is the amplifier alone
        let sys = assemble_closed_loop(&amp(), &LoadParams::reference(), &InterfaceGains::new(0.0, 1.0).unwrap());
        let s = Complex64::new(0.5, 2.0);
        let (a, b) = (sys.transfer_at(s).unwrap(), amp().open_loop().eval(s).unwrap());
        assert!((a - b).norm() < 1e-12 * b.norm());
    }

    #[test]
    fn scalar_reduction_matches_lure_path() {
        let (load, iface) = (LoadParams::reference(), InterfaceGains::new(10.0, 1.0).unwrap());
        let eq = closed_loop_equilibria(&amp(), &load, &iface, 0.2).unwrap();
        let g0 = amp().dc_loop_gain();
        let kappa = iface.ki * iface.ko * load.kp / load.a;
        for e in &eq {
            let y = e.y_star;
            assert!((y.tanh() - (0.2 + kappa * y + y / g0)).abs() < 1e-9);
            let u_e = -iface.ko * y;
            assert!((e.state[3] - u_e / load.a).abs() < 1e-10);
            assert!(e.state[4].abs() < 1e-12);
        }
    }

    #[test]
    fn cascade_bit_matches_standalone_amplifier() {
        let p = amp();
        let sched = InputSchedule::pulse(0.0, 0.5, 0.1, 0.2).unwrap();
        let alone = integrate(&StateSpace::amplifier(&p), &[0.1, 0.0, 0.0], &sched, 5e-4, 1.0).unwrap();
        let sys = assemble_closed_loop(&p, &LoadParams::reference(), &InterfaceGains::new(0.0, 1.0).unwrap());
        let joint = integrate(&sys, &[0.1, 0.0, 0.0, 0.0, 0.0], &sched, 5e-4, 1.0).unwrap();
        for (a, b) in alone.states.iter().zip(&joint.states) {
            assert_eq!(a[..], b[..3]);
        }
        assert_eq!(alone.y, joint.y);
    }

    #[test]
    fn severed_forward_path_lets_load_rest() {
        let sys = assemble_closed_loop(&amp(), &LoadParams::reference(), &InterfaceGains::new(10.0, 0.0).unwrap());
        let traj = integrate(&sys, &[0.1, 0.0, 0.0, 0.3, 0.0], &InputSchedule::constant(0.0), 5e-4, 2.0).unwrap();
        let end = traj.final_state();
        assert!(end[3].abs() < 1e-9 && end[4].abs() < 1e-9);
    }

    #[test]
    fn csv_columns() {
        let sys = assemble_closed_loop(&amp(), &LoadParams::reference(), &InterfaceGains::new(10.0, 1.0).unwrap());
        let traj = integrate(&sys, &[0.1, 0.0, 0.0, 0.0, 0.0], &InputSchedule::constant(0.0), 5e-4, 0.01).unwrap();
        assert_eq!(traj.columns().join(","), "t,x,xp,xn,y,q,qdot,ye");
    }
}
