use mfa_core::equilibria::{classify_regime, find_equilibria, Regime, Stability};
use mfa_core::sim::{convergence_check, integrate_amplifier, InputSchedule, StateSpace};
use mfa_core::tf_core::{AmplifierParams, Nonlinearity};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn amp(k: f64, beta: f64) -> AmplifierParams {
    AmplifierParams::new(0.01, 0.1, 1.0, k, beta).unwrap()
}

#[test]
fn odd_nonlinearity_gives_mirrored_trajectories() {
    for phi in [Nonlinearity::Tanh, Nonlinearity::HardClip] {
        let p = amp(5.0, 0.4).with_nonlinearity(phi);
        let sched = InputSchedule::pulse(0.0, 0.5, 1.0, 2.0).unwrap();
        let neg = InputSchedule::pulse(0.0, -0.5, 1.0, 2.0).unwrap();
        let a = integrate_amplifier(&p, [0.3, -0.1, 0.2], &sched, 1e-3, 5.0).unwrap();
        let b = integrate_amplifier(&p, [-0.3, 0.1, -0.2], &neg, 1e-3, 5.0).unwrap();
        for (x, y) in a.states.iter().zip(&b.states) {
            for (u, v) in x.iter().zip(y) {
                assert_eq!(*u, -*v);
            }
        }
    }
}

#[test]
fn stable_equilibrium_is_a_rest_point_of_the_simulation() {
    let p = amp(5.0, 0.8);
    for e in find_equilibria(&p, 0.3).unwrap() {
        let ic = [e.state[0], e.state[1], e.state[2]];
        let traj = integrate_amplifier(&p, ic, &InputSchedule::constant(0.3), 1e-3, 1.0).unwrap();
        let drift = traj.final_state().iter().zip(&e.state).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if e.stability == Stability::Stable {
            assert!(drift < 1e-9, "drift {drift}");
        }
    }
}

#[test]
fn zero_dominant_stable_converges_from_random_states() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for (k, beta) in [(5.0, 0.2), (0.5, 0.9), (2.0, 0.0)] {
        let p = amp(k, beta);
        let c = classify_regime(&p, 0.2, 50.0);
        assert_eq!(c.regime, Regime::ZeroDominantStable, "k={k} beta={beta}");
        let target = c.equilibria[0].state.clone();
        let ics: Vec<Vec<f64>> = (0..10).map(|_| (0..3).map(|_| rng.gen_range(-3.0..3.0)).collect()).collect();
        let d = convergence_check(&StateSpace::amplifier(&p), &ics, &target, 0.2, 1e-3, 30.0).unwrap();
        assert!(d.iter().all(|v| *v < 1e-6), "{d:?}");
    }
}

#[test]
fn multistable_runs_settle_on_stable_equilibria() {
    let p = amp(5.0, 0.8);
    let c = classify_regime(&p, 0.0, 50.0);
    assert_eq!(c.regime, Regime::TwoDominantMultistable);
    let stable: Vec<_> = c.equilibria.iter().filter(|e| e.stability == Stability::Stable).collect();
    for ic in [[0.5, 0.0, 0.0], [-0.5, 0.0, 0.0], [2.0, -1.0, 1.0]] {
        let traj = integrate_amplifier(&p, ic, &InputSchedule::constant(0.0), 1e-3, 30.0).unwrap();
        let end = traj.final_state();
        let d = stable
            .iter()
            .map(|e| e.state.iter().zip(end).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(f64::INFINITY, f64::min);
        assert!(d < 1e-6, "ic {ic:?} ended {d} away");
    }
}

#[test]
fn csv_trajectory_round_trips_floats() {
    let p = amp(5.0, 0.4);
    let traj = integrate_amplifier(&p, [0.1, 0.0, 0.0], &InputSchedule::constant(0.0), 1e-3, 0.01).unwrap();
    let mut out = Vec::new();
    traj.write_csv(&mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    let row = text.lines().filter(|l| !l.starts_with('#')).nth(2).unwrap();
    let x: f64 = row.split(',').nth(1).unwrap().parse().unwrap();
    assert_eq!(x, traj.states[1][0]);
}
