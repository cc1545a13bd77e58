use mfa_core::interconnect::{
    assemble_closed_loop, assemble_closed_loop_with, closed_loop_equilibria, InterfaceGains, LoadDrive, LoadParams,
};
use mfa_core::sim::{detect_oscillation, integrate, InputSchedule};
use mfa_core::tf_core::AmplifierParams;
use mfa_core::Error;

fn amp() -> AmplifierParams {
    AmplifierParams::new(0.01, 0.1, 1.0, 10.0, 0.4).unwrap()
}

#[test]
fn inverted_drive_oscillates_boundedly() {
    let sys = assemble_closed_loop(&amp(), &LoadParams::reference(), &InterfaceGains::new(10.0, 1.0).unwrap());
    let traj = integrate(&sys, &[0.1, 0.0, 0.0, 0.0, 0.0], &InputSchedule::constant(0.0), 5e-4, 50.0).unwrap();
    let osc = detect_oscillation(&traj, 0.5, 1e-3).unwrap();
    assert!(osc.oscillating);
    assert!(traj.states.iter().flatten().all(|v| v.abs() < 100.0));
}

// With the load driven by +k_o y the linear path around the saturation is
// itself unstable, so the interconnection diverges. Kept as a regression
// record of why the inverted drive is the default.
#[test]
fn direct_drive_diverges() {
    let sys = assemble_closed_loop_with(
        &amp(),
        &LoadParams::reference(),
        &InterfaceGains::new(10.0, 1.0).unwrap(),
        LoadDrive::Direct,
    );
    let res = integrate(&sys, &[0.1, 0.0, 0.0, 0.0, 0.0], &InputSchedule::constant(0.0), 5e-4, 50.0);
    match res {
        Err(Error::Divergence { .. }) => {}
        Ok(traj) => {
            let peak = traj.states.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(peak > 1e3, "peak {peak}");
        }
        Err(e) => panic!("unexpected error {e}"),
    }
}

#[test]
fn closed_loop_equilibria_solve_reduced_equation() {
    let (p, load, iface) = (amp(), LoadParams::reference(), InterfaceGains::new(10.0, 1.0).unwrap());
    let g0 = p.dc_loop_gain();
    let kappa = iface.ki * iface.ko * load.kp / load.a;
    for r in [0.0, 0.4, -1.0] {
        for e in closed_loop_equilibria(&p, &load, &iface, r).unwrap() {
            let y = e.y_star;
            assert!((y.tanh() - (r + kappa * y + y / g0)).abs() < 1e-9);
        }
    }
}
