use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use qbatt::analysis::{
    default_window, maxima_with_window, noise_ensemble, run_sweep, Axis, NoisePlan, PointValue, SweepPlan, WindowPolicy,
};
use qbatt::collective::{CollectiveHamiltonian, Method};
use qbatt::dynamics::ConservationTolerances;
use qbatt::engine::{EngineOptions, EngineRegistry, Model};
use qbatt::krylov::LinearOperator;
use qbatt::sector::{build_sector, SectorLimits};
use qbatt::validation::max_deviation;
use qbatt::{CouplingTable, PairSpec, SystemSpec};

fn grid(t_max: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| t_max * i as f64 / (n - 1) as f64).collect()
}

#[test]
fn sector_spectrum_contains_collective_levels() {
    let spec = SystemSpec::homogeneous(3, 3, 1.0, 0.6).unwrap();
    let h = build_sector(&CouplingTable::from_spec(&spec).unwrap(), 3, &SectorLimits::default()).unwrap();
    let d = h.dim();
    assert_eq!(d, 20);
    let mut dense = DMatrix::<f64>::zeros(d, d);
    let mut y = vec![C64::default(); d];
    for j in 0..d {
        let mut e = vec![C64::default(); d];
        e[j] = C64::new(1.0, 0.0);
        h.apply(&e, &mut y);
        for i in 0..d {
            dense[(i, j)] = y[i].re;
        }
    }
    let full: Vec<f64> = dense.symmetric_eigen().eigenvalues.iter().copied().collect();
    let coll = CollectiveHamiltonian::build(&spec).unwrap().eigendecompose().unwrap();
    assert_eq!(coll.eigenvalues().len(), 4);
    for lam in coll.eigenvalues() {
        let closest = full.iter().map(|x| (x - lam).abs()).fold(f64::INFINITY, f64::min);
        assert!(closest < 1e-10, "{lam} missing, closest {closest:e}");
    }
}

#[test]
fn six_plus_six_full_matches_collective() {
    let reg = EngineRegistry::builtin();
    let times = grid(10.0, 201);
    for dv in [-8.0, 0.0, 0.8] {
        let spec = SystemSpec::homogeneous(6, 6, 1.0, dv).unwrap();
        let opts = EngineOptions::default();
        let coll = reg.create("collective", &Model::Uniform(spec), &opts).unwrap().evaluate(&times).unwrap();
        let full = reg
            .create("full", &Model::Table(CouplingTable::from_spec(&spec).unwrap()), &opts)
            .unwrap()
            .evaluate(&times)
            .unwrap();
        assert!(max_deviation(&coll, &full) < 1e-8);
        let e_dev = coll.e_b.iter().zip(&full.e_b).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(e_dev < 1e-8);
    }
}

#[test]
fn resonant_pair_full_swap() {
    let pair = PairSpec { j_pair: 0.5, v_b: 1.0, v_c: 1.0, n_pairs: 1 };
    let t = std::f64::consts::PI / pair.omega();
    let model = Model::Table(CouplingTable::from_spec(&pair.as_system()).unwrap());
    let r = EngineRegistry::builtin()
        .create("full", &model, &EngineOptions::default())
        .unwrap()
        .evaluate(&[0.0, t])
        .unwrap();
    assert_eq!((r.e_b[0], r.s_vn[0]), (0.0, 0.0));
    assert!((r.e_b[1] - 1.0).abs() < 1e-10);
    assert!(r.s_vn[1].abs() < 1e-9);
}

#[test]
fn large_homogeneous_krylov_run_conserves_and_charges() {
    let n = 2000;
    let spec = SystemSpec::homogeneous(n, n, 1.0, 0.0).unwrap();
    let opts = EngineOptions { method: Method::Named("krylov".into()), ..Default::default() };
    let t_max = default_window(&spec);
    let r = EngineRegistry::builtin()
        .create("collective", &Model::Uniform(spec), &opts)
        .unwrap()
        .evaluate(&grid(t_max, 201))
        .unwrap();
    r.diagnostics.check(&ConservationTolerances::default(), n as f64, t_max).unwrap();
    let peak = r.e_b.iter().copied().fold(0.0, f64::max) / n as f64;
    assert!((0.5..1.0).contains(&peak), "{peak}");
    assert_eq!(r.e_b[0], 0.0);
}

#[test]
fn noise_deviation_shrinks_with_amplitude() {
    let base = SystemSpec::homogeneous(6, 6, 1.0, 0.0).unwrap();
    let window = WindowPolicy { t_max: Some(4.0), n_samples: 400, ..Default::default() };
    let reg = EngineRegistry::builtin();
    let engine =
        reg.create("full", &Model::Table(CouplingTable::from_spec(&base).unwrap()), &EngineOptions::default()).unwrap();
    let uniform = maxima_with_window(engine.as_ref(), 4.0, &window).unwrap().maxima.energy.record.value;
    let mut plan = NoisePlan::new(base, vec![6], vec![0.1, 0.01, 0.001], 4, 5);
    plan.window = window;
    let report = noise_ensemble(&plan, 1).unwrap();
    let devs: Vec<f64> = report.cells.iter().map(|c| (c.energy.mean - uniform).abs()).collect();
    assert_eq!(devs.len(), 3);
    assert!(devs[0] > devs[1] && devs[1] > devs[2], "{devs:?}");
    assert!(devs[2] < 1e-2 * uniform);
}

#[test]
fn sweep_reruns_identically_and_orders_configurations() {
    let points: Vec<PointValue> = [50, 100, 200].into_iter().map(PointValue::Size).collect();
    let mut jc_zero = SystemSpec::homogeneous(1, 1, 1.0, -8.0).unwrap();
    jc_zero.j_c = 0.0;
    let homogeneous = SystemSpec::homogeneous(1, 1, 1.0, 0.0).unwrap();
    let run = |base| run_sweep(&SweepPlan::new(base, Axis::TotalSize, points.clone()), 2).unwrap();
    let a = run(jc_zero);
    assert_eq!(a, run(jc_zero));
    let b = run(homogeneous);
    for (x, y) in a.iter().zip(&b) {
        let p = |r: &qbatt::analysis::SweepRow| r.outcome.as_ref().unwrap().maxima.power.record.value;
        assert!(p(x) > p(y));
    }
}

#[test]
fn grid_sweep_orders_offsets_and_flattens_without_charger_hopping() {
    let mut points = Vec::new();
    for j_c in [0.0, 1.0] {
        for delta_v in [-8.0, 0.0, 8.0] {
            points.push(PointValue::Grid { j_c, delta_v });
        }
    }
    let base = SystemSpec::homogeneous(100, 100, 1.0, 0.0).unwrap();
    let rows = run_sweep(&SweepPlan::new(base, Axis::JcDvGrid, points), 1).unwrap();
    let e: Vec<f64> = rows.iter().map(|r| r.outcome.as_ref().unwrap().maxima.energy.record.value).collect();
    let p: Vec<f64> = rows.iter().map(|r| r.outcome.as_ref().unwrap().maxima.power.record.value).collect();
    // J_C = 1: a charger below the battery helps, one above hurts.
    assert!(e[3] > e[4] && e[4] > e[5] && e[3] >= 2.0 * e[5], "{e:?}");
    // J_C = 0: nearly flat in the offset, and ahead in power throughout.
    let (lo, hi) = e[..3].iter().fold((f64::INFINITY, 0.0f64), |(l, h), &x| (l.min(x), h.max(x)));
    assert!((hi - lo) / hi < 0.2, "{e:?}");
    assert!((0..3).all(|i| p[i] > p[i + 3]), "{p:?}");
}
