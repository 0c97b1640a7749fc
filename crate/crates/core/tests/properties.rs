use matrix_hill::closedform::DeltaModel;
use matrix_hill::contour::Contour;
use matrix_hill::lyapunov::{rho0, Target};
use matrix_hill::monodromy::hadamard_scale;
use matrix_hill::special::sqrt_upper;
use matrix_hill::spectrum::{count_zeros, SpectrumOptions};
use matrix_hill::verify::fixtures;
use matrix_hill::{HillOperator, PotentialSpec, C64};
use proptest::prelude::*;

fn smooth_op() -> HillOperator {
    HillOperator::from_spec(&fixtures::smooth(), Default::default())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn wronskian_along_propagation(re in -200.0..200.0f64, im in -60.0..60.0f64, x in 0.05..2.0f64) {
        let op = smooth_op();
        let m = op.propagate(C64::new(re, im), x).unwrap();
        let err = (m.det() - 1.0).norm() / hadamard_scale(&m.entries).max(1.0);
        prop_assert!(err <= 1e-10, "det error {err}");
    }

    #[test]
    fn two_periods_is_square(re in -200.0..200.0f64, im in -30.0..30.0f64) {
        let op = smooth_op();
        let l = C64::new(re, im);
        let one = op.monodromy(l).unwrap().entries;
        let two = op.propagate(l, 2.0).unwrap().entries;
        let sq = one * one;
        let scale = sq.iter().map(|z| z.norm()).fold(1.0, f64::max);
        let err = (two - sq).iter().map(|z| z.norm()).fold(0.0, f64::max) / scale;
        prop_assert!(err <= 1e-9, "relative error {err}");
    }

    #[test]
    fn real_lambda_real_data(x in -50.0..400.0f64) {
        let op = smooth_op();
        let l = C64::new(x, 0.0);
        let m = op.monodromy(l).unwrap().entries;
        let scale = m.iter().map(|z| z.norm()).fold(1.0, f64::max);
        prop_assert!(m.iter().all(|z| z.im.abs() <= 1e-12 * scale));
        let d = op.lyapunov_at(l).unwrap();
        prop_assert!(d.mu1.im == 0.0 && d.mu2.im == 0.0 && d.rho.im == 0.0);
        if d.rho.re >= 0.0 {
            prop_assert!(d.delta1.im == 0.0 && d.delta2.im == 0.0 && d.delta1.re >= d.delta2.re);
        }
    }

    #[test]
    fn multipliers_reciprocal_pairs(re in -400.0..400.0f64, im in -100.0..100.0f64) {
        let op = smooth_op();
        let d = op.lyapunov_at(C64::new(re, im)).unwrap();
        let t = d.multipliers;
        for k in [0, 2] {
            let p = t[k] * t[k + 1];
            prop_assert!((p - 1.0).norm() <= 1e-9, "pair product {p}");
        }
        let all = t[0] * t[1] * t[2] * t[3];
        prop_assert!((all - 1.0).norm() <= 1e-9);
    }

    #[test]
    fn rho_close_to_leading_term(r in 100.0..400.0f64, arg in -3.1..3.1f64) {
        let op = smooth_op();
        let pot = op.potential();
        let l = C64::from_polar(r, arg);
        let d = op.lyapunov_at(l).unwrap();
        let r0 = rho0(l, pot.c0);
        let kappa = pot.l1_norm / l.norm().sqrt();
        let bound = 2.0 * kappa.powi(3) * (2.0 * sqrt_upper(l).im.abs() + 2.0 * kappa).exp();
        prop_assert!((d.rho - r0 * r0).norm() <= bound, "{} > {bound}", (d.rho - r0 * r0).norm());
    }

    #[test]
    fn delta_comb_engine_matches_closed_form(re in -400.0..400.0f64, im in -60.0..60.0f64) {
        let model = DeltaModel::new(10.0, 0.5);
        let op = HillOperator::from_spec(&PotentialSpec::delta_comb(10.0, 0.5), Default::default());
        let l = C64::new(re, im);
        let (a, b) = (op.lyapunov_at(l).unwrap(), model.lyapunov(l));
        let s = b.scale();
        for (x, y) in [(a.mu1, b.mu1), (a.mu2, b.mu2), (a.rho, b.rho), (a.d_plus, b.d_plus), (a.d_minus, b.d_minus)] {
            prop_assert!((x - y).norm() <= 1e-10 * s);
        }
    }

    #[test]
    fn count_is_additive(cut in 0.1..0.9f64) {
        let op = HillOperator::from_spec(&PotentialSpec::delta_comb(10.0, 0.5), Default::default());
        let opts = SpectrumOptions::default();
        let (a, b, h) = (1.0, 120.0, 6.0);
        let m = a + cut * (b - a);
        let whole = count_zeros(&op, Target::Rho, &Contour::rect(a, b, -h, h), &opts);
        let left = count_zeros(&op, Target::Rho, &Contour::rect(a, m, -h, h), &opts);
        let right = count_zeros(&op, Target::Rho, &Contour::rect(m, b, -h, h), &opts);
        // a zero on the cut rejects the partition
        prop_assume!(left.is_ok() && right.is_ok());
        prop_assert_eq!(whole.unwrap().count, left.unwrap().count + right.unwrap().count);
    }
}

#[test]
fn l1_norm_vanishes_only_for_zero() {
    let smooth = HillOperator::from_spec(&PotentialSpec::constant(10.0), Default::default());
    let comb = HillOperator::from_spec(&PotentialSpec::delta_comb(10.0, 0.5), Default::default());
    let zero = HillOperator::from_spec(&PotentialSpec::zero(), Default::default());
    assert!(comb.potential().l1_norm > smooth.potential().l1_norm);
    assert!(HillOperator::from_spec(&PotentialSpec::delta_comb(0.0, 0.5), Default::default()).potential().l1_norm > 0.0);
    assert_eq!(zero.potential().l1_norm, 0.0);
}
