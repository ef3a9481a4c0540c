use crate::bounds::{bound_cor, bound_main1, expsum_exact};
use crate::determinant::delta_eval;
use crate::extremal::Interpolant;
use crate::model::{inverse_joukowski, joukowski, random_complex_spec, Decay, DEFAULT_EPS_ESS};
use crate::ConstantsConfig;
use num_complex::Complex64;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn joukowski_round_trip(r in 0.05f64..0.98, t in -3.1f64..3.1) {
        let z = Complex64::from_polar(r, t);
        let back = inverse_joukowski(joukowski(z).unwrap(), DEFAULT_EPS_ESS).unwrap();
        prop_assert!((back - z).norm() < 1e-12);
    }

    #[test]
    fn delta_is_one_at_origin(seed in 0u64..1000, d in 0.5f64..8.0, support in 1usize..20) {
        let spec = random_complex_spec(Decay::new(1.0, d, 0.75).unwrap(), support, seed).unwrap();
        prop_assert!((delta_eval(&spec, Complex64::new(0.0, 0.0)).unwrap() - 1.0).norm() < 1e-13);
    }

    #[test]
    fn main1_is_monotone_in_a(beta in 0.0f64..4.0, a in 1.0f64..1e4, step in 1.0f64..10.0) {
        let k = ConstantsConfig::default();
        let lo = bound_main1(beta, a, &k).unwrap().value;
        let hi = bound_main1(beta, a * step, &k).unwrap().value;
        prop_assert!(hi >= lo * (1.0 - 1e-12), "beta={beta} a={a}: {lo} > {hi}");
    }

    #[test]
    fn cor_is_monotone_in_d(gamma in 0.5f64..0.95, d in 1.0f64..100.0) {
        let k = ConstantsConfig::default();
        prop_assert!(bound_cor(gamma, 2.0 * d, &k).unwrap() >= bound_cor(gamma, d, &k).unwrap());
    }

    #[test]
    fn expsum_decreases_in_n(b in 0.25f64..4.0, gamma in 0.5f64..1.0, n in 0u64..30) {
        prop_assert!(expsum_exact(b, n + 1, gamma, 1e-17) <= expsum_exact(b, n, gamma, 1e-17));
    }

    #[test]
    fn interpolant_hits_its_nodes(n in 1usize..40, phase in 0.0f64..1.0) {
        let nodes: Vec<Complex64> =
            (0..n).map(|k| Complex64::from_polar(0.9, phase + 0.05 * k as f64)).collect();
        let values: Vec<Complex64> = nodes.iter().map(|z| (z * 3.0).exp()).collect();
        let p = Interpolant::new(nodes.clone(), values.clone()).unwrap();
        for (z, v) in nodes.iter().zip(&values) {
            prop_assert!((p.eval(*z) - v).norm() <= 1e-12 * v.norm());
        }
    }
}
