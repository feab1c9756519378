use proptest::prelude::*;
use qlan::benchmark::{self, GeometricPair};
use qlan::fock;
use qlan::schur_weyl::{self, BlockLawMode, QubitModel};

#[test]
fn half_thermal_risk_is_seven_eighteenths() {
    assert_eq!(benchmark::crossover_m0(0.5).unwrap(), 1);
    assert!((benchmark::optimal_risk(0.5).unwrap() - 7.0 / 18.0).abs() < 1e-15);
}

#[test]
fn closed_form_matches_scanned_l1() {
    for s in [0.05, 0.3, 0.5, 0.8] {
        let pair = GeometricPair::new(s, 400).unwrap();
        assert_eq!(pair.scanned_crossover(), Some(benchmark::crossover_m0(s).unwrap()));
        let l1 = benchmark::geometric_l1(s, pair.s_tilde, 400).unwrap();
        assert!((l1.value - benchmark::optimal_risk(s).unwrap()).abs() <= 1e-12 + l1.tail, "s={s}");
    }
}

#[test]
fn reprepared_thermal_state_is_geometric() {
    let s = 0.4;
    let out = fock::heterodyne_prepare_analytic(s, 60).unwrap();
    let want = fock::thermal_state(fock::reprepared_parameter(s), 60).unwrap();
    assert!(out.l1_distance(&want) < 1e-12);
}

#[test]
fn two_qubit_blocks() {
    let model = QubitModel::new(0.5, [0.0; 3], 2).unwrap();
    let law = schur_weyl::block_probabilities(&model, BlockLawMode::Exact);
    let p: Vec<f64> = law.entries.iter().map(|e| e.1).collect();
    assert!((p[0] - 0.8125).abs() < 1e-15 && (p[1] - 0.1875).abs() < 1e-15);
    assert_eq!(schur_weyl::multiplicity(4, 0).unwrap(), 2);
    assert_eq!(schur_weyl::multiplicity(4, 2).unwrap(), 3);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn risk_is_a_decreasing_probability_gap(a in 0.01f64..0.98, d in 0.001f64..0.01) {
        let r = benchmark::optimal_risk(a).unwrap();
        let r2 = benchmark::optimal_risk(a + d).unwrap();
        prop_assert!(r > 0.0 && r < 2.0);
        prop_assert!(r2 < r);
    }

    #[test]
    fn block_law_sums_to_one(n in 1usize..60, r0 in 0.05f64..0.95, ux in -1.0f64..1.0) {
        let model = QubitModel::new(r0, [ux * 0.1, 0.0, 0.0], n).unwrap();
        let law = schur_weyl::block_probabilities(&model, BlockLawMode::Exact);
        let total: f64 = law.entries.iter().map(|e| e.1).sum();
        prop_assert!((total + law.deficit - 1.0).abs() < 1e-12);
    }
}
