use mfa_core::equilibria::find_equilibria;
use mfa_core::freq_analysis::{check_p_passivity, select_rate, FrequencyGrid};
use mfa_core::multichannel::{build_channel_tf, check_interlacing, BankRole, Channel, ChannelBank};
use mfa_core::tf_core::{critical_balance, AmplifierParams, Nonlinearity, Polynomial, RationalTF, ZeroLocation};
use mfa_core::Complex64;
use proptest::prelude::*;

fn time_constants() -> impl Strategy<Value = (f64, f64, f64)> {
    (-3.0f64..1.0, -3.0f64..1.0, -3.0f64..1.0)
        .prop_map(|(a, b, c)| (10f64.powf(a), 10f64.powf(b), 10f64.powf(c)))
        .prop_filter("distinct corners", |(a, b, c)| {
            let mut t = [*a, *b, *c];
            t.sort_by(f64::total_cmp);
            t[1] / t[0] > 1.05 && t[2] / t[1] > 1.05
        })
        .prop_map(|(l, a, b)| if a < b { (l, a, b) } else { (l, b, a) })
}

fn amplifier() -> impl Strategy<Value = AmplifierParams> {
    (time_constants(), -1.0f64..3.0, 0.0f64..=1.0)
        .prop_map(|((l, p, n), lk, beta)| AmplifierParams::new(l, p, n, 10f64.powf(lk), beta).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn roots_reconstruct_polynomial(roots in prop::collection::vec(-20.0f64..20.0, 1..7)) {
        let p = Polynomial::from_real_roots(&roots);
        for z in p.roots().unwrap() {
            let scale = p.magnitude_scale(z.norm());
            prop_assert!(p.eval(z).norm() <= 1e-8 * scale.max(1.0), "residual at {z}");
        }
    }

    #[test]
    fn complex_roots_come_in_conjugate_pairs(coeffs in prop::collection::vec(-5.0f64..5.0, 2..8)) {
        let mut coeffs = coeffs;
        *coeffs.last_mut().unwrap() = 1.0;
        let p = Polynomial::new(coeffs);
        let roots = p.roots().unwrap();
        for z in &roots {
            if z.im.abs() > 1e-8 {
                prop_assert!(roots.iter().any(|w| (w - z.conj()).norm() < 1e-6 * z.norm().max(1.0)));
            }
        }
    }

    #[test]
    fn shift_moves_poles(params in amplifier(), lambda in -50.0f64..50.0) {
        let g = params.open_loop();
        let mut shifted: Vec<f64> = g.shift(lambda).poles().unwrap().iter().map(|z| z.re).collect();
        let mut moved: Vec<f64> = g.poles().unwrap().iter().map(|z| z.re + lambda).collect();
        shifted.sort_by(f64::total_cmp);
        moved.sort_by(f64::total_cmp);
        for (a, b) in shifted.iter().zip(&moved) {
            prop_assert!((a - b).abs() <= 1e-7 * b.abs().max(1.0));
        }
    }

    #[test]
    fn open_loop_matches_factored_form(params in amplifier(), w in 1e-3f64..1e3) {
        let s = Complex64::new(0.0, w);
        let one = Complex64::new(1.0, 0.0);
        let AmplifierParams { tau_l, tau_p, tau_n, k, beta, .. } = params;
        let want = -k * ((beta * (tau_n + tau_p) - tau_p) * s + 2.0 * beta - 1.0)
            / ((tau_l * s + one) * (tau_p * s + one) * (tau_n * s + one));
        let got = params.open_loop().eval(s).unwrap();
        prop_assert!((got - want).norm() <= 1e-10 * want.norm().max(1e-12));
    }

    #[test]
    fn dc_gain_sign(params in amplifier()) {
        let g0 = params.open_loop().eval(Complex64::new(0.0, 0.0)).unwrap().re;
        prop_assert!((g0 - params.k * (1.0 - 2.0 * params.beta)).abs() <= 1e-12 * params.k);
    }

    #[test]
    fn passive_above_critical_balance((l, p, n) in time_constants(), frac in 0.01f64..0.99, lk in -1.0f64..3.0) {
        let b_star = critical_balance(p, n);
        let beta = b_star + frac * (1.0 - b_star);
        let amp = AmplifierParams::new(l, p, n, 10f64.powf(lk), beta).unwrap();
        let cert = check_p_passivity(&amp.open_loop(), select_rate(&amp), 2, &FrequencyGrid::for_amplifier(&amp)).unwrap();
        prop_assert!(cert.passed, "{cert:?}");
        // the zero sits in the right half-plane exactly when beta < 1/2
        match amp.open_loop_zero() {
            ZeroLocation::Finite(z) => prop_assert!(z * (2.0 * beta - 1.0) <= 0.0, "zero {z}"),
            other => prop_assert!(false, "zero {other:?}"),
        }
    }

    #[test]
    fn equilibria_solve_the_fixed_point(params in amplifier(), r in -2.0f64..2.0, clip in any::<bool>()) {
        let params = if clip { params.with_nonlinearity(Nonlinearity::HardClip) } else { params };
        let g0 = -params.dc_loop_gain();
        let eq = find_equilibria(&params, r).unwrap();
        prop_assert!(!eq.is_empty());
        for e in &eq {
            let residual = e.y_star - g0 * (r - params.nonlinearity.eval(e.y_star));
            prop_assert!(residual.abs() < 1e-8 * e.y_star.abs().max(1.0), "residual {residual}");
        }
    }

    #[test]
    fn equilibria_are_odd_in_the_input(params in amplifier(), r in 0.0f64..2.0) {
        let plus: Vec<f64> = find_equilibria(&params, r).unwrap().iter().map(|e| e.y_star).collect();
        let mut minus: Vec<f64> = find_equilibria(&params, -r).unwrap().iter().map(|e| -e.y_star).collect();
        minus.sort_by(f64::total_cmp);
        prop_assert_eq!(plus.len(), minus.len());
        for (a, b) in plus.iter().zip(&minus) {
            prop_assert!((a - b).abs() < 1e-9 * a.abs().max(1.0));
        }
    }

    #[test]
    fn channel_numerator_changes_sign_in_every_gap(
        raw in prop::collection::vec(-3.0f64..1.0, 2..8),
        split in 0usize..8,
        beta in 0.05f64..0.95,
    ) {
        let mut taus: Vec<f64> = raw.iter().map(|v| 10f64.powf(*v)).collect();
        taus.sort_by(f64::total_cmp);
        prop_assume!(taus.windows(2).all(|w| w[1] / w[0] > 1.1));
        let m = 1 + split % (taus.len() - 1);
        let bank = |ts: &[f64], role| {
            let rho = 1.0 / ts.len() as f64;
            ChannelBank::new(ts.iter().map(|&tau| Channel { rho, tau }).collect(), role).unwrap()
        };
        let pos = bank(&taus[..m], BankRole::Positive);
        let neg = bank(&taus[m..], BankRole::Negative);
        let num = build_channel_tf(&pos, &neg, beta).unwrap().num().clone();
        // an independent witness for each bracketed zero: the numerator
        // changes sign between consecutive poles of the same bank
        for poles in [pos.poles(), neg.poles()] {
            let mut poles = poles;
            poles.sort_by(f64::total_cmp);
            for w in poles.windows(2) {
                let eps = 1e-9 * (w[1] - w[0]);
                prop_assert!(num.eval_real(w[0] + eps) * num.eval_real(w[1] - eps) < 0.0);
            }
        }
        let rep = check_interlacing(&pos, &neg, beta).unwrap();
        prop_assert!(rep.satisfied, "{:?}", rep.diagnostic);
    }
}

#[test]
fn conjugate_symmetry_of_evaluation() {
    let g = RationalTF::new(Polynomial::new(vec![1.0, -2.0, 0.5]), Polynomial::new(vec![3.0, 1.0, 2.0, 1.0])).unwrap();
    let s = Complex64::new(-0.3, 4.0);
    assert!((g.eval(s.conj()).unwrap() - g.eval(s).unwrap().conj()).norm() < 1e-14);
}
