use std::sync::Arc;

use num_complex::Complex64 as C64;
use proptest::prelude::*;

use qbatt::analysis::fit_power_law;
use qbatt::analytic::{hp_dynamics, pair_populations, HpParams};
use qbatt::collective::{CollectiveHamiltonian, CollectiveState, PropagatorRegistry};
use qbatt::engine::{EngineOptions, EngineRegistry, Model};
use qbatt::krylov::{KrylovSettings, LinearOperator};
use qbatt::sector::noise::perturb_couplings;
use qbatt::sector::{build_sector, SectorBasis, SectorLimits};
use qbatt::validation::max_deviation;
use qbatt::{CouplingTable, PairSpec, SystemSpec};

fn evolve_once(reg: &PropagatorRegistry, method: &str, h: &Arc<CollectiveHamiltonian>, v: &[C64], t: f64) -> Vec<C64> {
    let p = reg.create(method, h.clone(), &KrylovSettings::default()).unwrap();
    let mut out = Vec::new();
    p.evolve(v, &[t], &mut |_, a| {
        out = a.to_vec();
        Ok(())
    })
    .unwrap();
    out
}

fn spec_strategy(max_n: u64) -> impl Strategy<Value = SystemSpec> {
    (1..=max_n, 1..=max_n, 0.2f64..2.0, -2.0f64..2.0, -1.0f64..1.0, -1.0f64..1.0, 0.1f64..1.5)
        .prop_map(|(n_b, n_c, v_b, v_c, j_b, j_c, j_bc)| SystemSpec::new(n_b, n_c, v_b, v_c, j_b, j_c, j_bc).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rank_inverts_unrank(n in 1usize..=24, frac in 0.0f64..=1.0, pick in any::<u64>()) {
        let n_exc = ((n as f64) * frac).round() as usize;
        let basis = SectorBasis::new(n, n_exc).unwrap();
        let i = (pick % basis.dim() as u64) as usize;
        let x = basis.unrank(i);
        prop_assert_eq!(x.count_ones() as usize, n_exc);
        prop_assert_eq!(basis.rank(x), i);
        if i + 1 < basis.dim() {
            prop_assert!(basis.unrank(i + 1) > x);
        }
    }

    #[test]
    fn sector_hamiltonian_is_hermitian(
        n_b in 1usize..=4,
        n_c in 1usize..=4,
        dj in 0.0f64..0.8,
        seed in any::<u64>(),
        xs in prop::collection::vec(-1.0f64..1.0, 280),
    ) {
        let spec = SystemSpec::homogeneous(n_b as u64, n_c as u64, 1.0, 0.3).unwrap();
        let (table, _) = perturb_couplings(&CouplingTable::from_spec(&spec).unwrap(), dj, seed).unwrap();
        let h = build_sector(&table, n_c, &SectorLimits::default()).unwrap();
        let d = h.dim();
        let x: Vec<C64> = (0..d).map(|i| C64::new(xs[2 * i], xs[2 * i + 1])).collect();
        let y: Vec<C64> = (0..d).map(|i| C64::new(xs[139 - i], xs[279 - 2 * i])).collect();
        let (mut hx, mut hy) = (vec![C64::default(); d], vec![C64::default(); d]);
        h.apply(&x, &mut hx);
        h.apply(&y, &mut hy);
        let xhy: C64 = x.iter().zip(&hy).map(|(a, b)| a.conj() * b).sum();
        let yhx: C64 = y.iter().zip(&hx).map(|(a, b)| a.conj() * b).sum();
        prop_assert!((xhy - yhx.conj()).norm() <= 1e-12 * xhy.norm().max(1.0));
    }

    #[test]
    fn fit_is_scale_equivariant(
        ys in prop::collection::vec(0.1f64..10.0, 4..12),
        c in 0.01f64..100.0,
    ) {
        let pts: Vec<(f64, f64)> = ys.iter().enumerate().map(|(i, y)| ((i + 1) as f64, *y)).collect();
        let scaled: Vec<(f64, f64)> = pts.iter().map(|(x, y)| (*x, c * y)).collect();
        let (a, b) = (fit_power_law(&pts).unwrap(), fit_power_law(&scaled).unwrap());
        prop_assert!((a.alpha - b.alpha).abs() < 1e-12);
        prop_assert!((a.alpha_stderr - b.alpha_stderr).abs() < 1e-12);
        prop_assert!((b.intercept - a.intercept - c.ln()).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&a.r_squared));
    }

    #[test]
    fn collective_time_reversal_and_counting(spec in spec_strategy(40), t in 0.0f64..3.0) {
        let h = Arc::new(CollectiveHamiltonian::build(&spec).unwrap());
        let reg = PropagatorRegistry::builtin();
        let c0 = CollectiveState::initial(&spec);
        for method in ["spectral", "krylov"] {
            let fwd = evolve_once(&reg, method, &h, c0.amps(), t);
            let m = qbatt::collective::measure(&h, &fwd);
            prop_assert!((m.norm_sqr - 1.0).abs() < 1e-10);
            prop_assert!((m.e_b / spec.v_b + m.e_c / spec.v_c - spec.n_c as f64).abs() < 1e-9 * spec.n_c as f64
                || spec.v_c.abs() < 1e-3);
            let e0 = h.expectation(c0.amps());
            prop_assert!((m.energy - e0).abs() <= 1e-9 * e0.abs().max(1.0));
            // H is real, so evolving the conjugate forward runs time backwards.
            let flipped: Vec<C64> = fwd.iter().map(|a| a.conj()).collect();
            let back: Vec<C64> = evolve_once(&reg, method, &h, &flipped, t).iter().map(|a| a.conj()).collect();
            let err = back.iter().zip(c0.amps()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            prop_assert!(err < 1e-8, "{method}: {err:e}");
        }
    }

    #[test]
    fn hp_branches_meet_critical(g in 0.1f64..5.0, t in 0.0f64..3.0, side in prop::bool::ANY) {
        let critical = HpParams::new(2.0 * g, g, 1.0, 0.0);
        let gap: f64 = if side { 1.0 + 1e-6 } else { 1.0 - 1e-6 };
        let near = HpParams::new(2.0 * g * gap.sqrt(), g, 1.0, 0.0);
        let (e_c, p_c) = hp_dynamics(&critical, t);
        let (e_n, p_n) = hp_dynamics(&near, t);
        prop_assert!((e_n - e_c).abs() <= 1e-4 * e_c.abs().max(1e-12));
        prop_assert!((p_n - p_c).abs() <= 1e-4 * p_c.abs().max(1e-12));
    }

    #[test]
    fn pair_populations_complete(j in -3.0f64..3.0, v_b in 0.1f64..3.0, v_c in -3.0f64..3.0, t in 0.0f64..50.0) {
        let pair = PairSpec { j_pair: j, v_b, v_c, n_pairs: 1 };
        let (a, b) = pair_populations(&pair, t);
        prop_assert!((a + b - 1.0).abs() < 1e-14);
        prop_assert!((0.0..=1.0 + 1e-15).contains(&b));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn sector_matches_collective_on_uniform(spec in spec_strategy(5)) {
        let reg = EngineRegistry::builtin();
        let times: Vec<f64> = (0..41).map(|i| 0.25 * i as f64).collect();
        let opts = EngineOptions::default();
        let coll = reg.create("collective", &Model::Uniform(spec), &opts).unwrap().evaluate(&times).unwrap();
        let table = CouplingTable::from_spec(&spec).unwrap();
        prop_assert!(table.as_uniform().is_some());
        let full = reg.create("full", &Model::Table(table), &opts).unwrap().evaluate(&times).unwrap();
        prop_assert!(max_deviation(&coll, &full) < 1e-8);
    }
}
