use std::f64::consts::PI;

use mcbf::decentralized::{meets_targets, run_alg1, run_alg2, run_centralized, run_iczf, run_zf, SolverOpts};
use mcbf::det_equiv::{run_pipeline, SurrogateMode, Targets, EquivOpts};
use mcbf::duality::{audit_precoders, solve_uplink_fixed_point, FixedPointOpts};
use mcbf::grouping::{build_group_scenario, group_coefficients, solve_eta, solve_group_powers, GroupMode};
use mcbf::harness::{empirical_cdf, realize, run_experiment, write_records, ExperimentSpec, Layout};
use mcbf::scenario::{one_ring_correlation, NetworkConfig};
use mcbf::C64;
use nalgebra::DVector;
use proptest::prelude::*;

fn small_network() -> impl Strategy<Value = (NetworkConfig, u64)> {
    (2usize..=3, 1usize..=2, 0u64..1000).prop_map(|(cells, kb, seed)| {
        let cfg = NetworkConfig { cells, ues_per_cell: kb, antennas: 4 * cells * kb, ..Default::default() };
        (cfg, seed)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn one_ring_is_toeplitz_with_gain_on_the_diagonal(
        a2 in 1e-6f64..1.0, centre in -PI..PI, width in 0.05f64..(2.0 * PI), n in 2usize..24, spacing in 0.25f64..1.0,
    ) {
        let theta = one_ring_correlation(a2, centre - width / 2.0, centre + width / 2.0, n, spacing).unwrap().to_dense();
        let tr: f64 = (0..n).map(|i| theta[(i, i)].re).sum();
        prop_assert!((tr - n as f64 * a2).abs() <= 1e-9 * n as f64 * a2);
        for i in 0..n {
            prop_assert!((theta[(i, i)].re - a2).abs() <= 1e-10 * a2);
            for j in 0..n {
                prop_assert!((theta[(i, j)] - theta[(j, i)].conj()).norm() <= 1e-12 * a2);
                if i > 0 && j > 0 {
                    prop_assert!((theta[(i, j)] - theta[(i - 1, j - 1)]).norm() <= 1e-10 * a2);
                }
            }
        }
    }

    #[test]
    fn realizations_are_reproducible((cfg, seed) in small_network()) {
        let (a, b) = (realize(&cfg, Layout::Hex, seed).unwrap(), realize(&cfg, Layout::Hex, seed).unwrap());
        prop_assert_eq!(&a.scenario.pathloss, &b.scenario.pathloss);
        for bs in 0..cfg.cells {
            prop_assert_eq!(a.channels.bs(bs), b.channels.bs(bs));
        }
    }

    #[test]
    fn picard_iterates_rise_monotonically((cfg, seed) in small_network()) {
        let r = realize(&cfg, Layout::Hex, seed).unwrap();
        let s = &r.scenario;
        let mut prev = vec![0.0; s.n_ue()];
        for t in 1..=12 {
            let opts = FixedPointOpts { max_iter: t, tol: 0.0, ..Default::default() };
            let st = solve_uplink_fixed_point(&r.channels, &s.serving, &s.gamma, &s.mu, &[], &opts).unwrap();
            for (p, q) in prev.iter().zip(&st.lambda) {
                prop_assert!(*q >= *p * (1.0 - 1e-12));
            }
            prev = st.lambda;
        }
    }

    #[test]
    fn audit_ignores_precoder_phases((cfg, seed) in small_network(), phases in prop::collection::vec(0.0f64..(2.0 * PI), 6)) {
        let r = realize(&cfg, Layout::Hex, seed).unwrap();
        let s = &r.scenario;
        let rec = run_centralized(0, s, &r.channels, &SolverOpts::default()).unwrap();
        prop_assume!(rec.feasible);
        let sol = mcbf::duality::solve_centralized(s, &r.channels, &FixedPointOpts::default()).unwrap();
        let rotated: Vec<DVector<C64>> =
            sol.precoders.iter().enumerate().map(|(k, w)| w * C64::from_polar(1.0, phases[k % phases.len()])).collect();
        let (a, b) = (&sol.audit, audit_precoders(&rotated, &r.channels, &s.serving, s.noise_power));
        for (x, y) in a.sinr.iter().zip(&b.sinr) {
            prop_assert!((x - y).abs() <= 1e-9 * x.abs());
        }
        for (x, y) in a.ici.iter().flatten().zip(b.ici.iter().flatten()) {
            prop_assert!((x - y).abs() <= 1e-9 * x.abs().max(1e-30));
        }
    }

    #[test]
    fn deterministic_equivalents_have_the_expected_signs((cfg, seed) in small_network()) {
        let r = realize(&cfg, Layout::Hex, seed).unwrap();
        let s = &r.scenario;
        let tg = Targets { serving: &s.serving, gamma: &s.gamma, mu: &s.mu, noise_power: s.noise_power };
        let de = run_pipeline(&r.correlations, tg, &EquivOpts::default()).unwrap();
        prop_assume!(de.feasible);
        prop_assert!(de.m_bar.iter().flatten().all(|&m| m > 0.0));
        prop_assert!(de.lambda_bar.iter().all(|&l| l > 0.0));
        prop_assert!(de.ici_bar.iter().flatten().all(|&e| e >= 0.0));
        let k = s.n_ue();
        for i in 0..k {
            prop_assert!(de.g_bar[(i, i)] > 0.0);
            for j in (0..k).filter(|&j| j != i) {
                prop_assert!(de.g_bar[(i, j)] <= 0.0);
            }
            let row: f64 = (0..k).map(|j| de.g_bar[(i, j)] * de.delta_bar[j]).sum();
            prop_assert!((row - s.noise_power).abs() <= 1e-10 * s.noise_power.max(de.g_bar[(i, i)] * de.delta_bar[i]));
        }
    }

    #[test]
    fn feasible_methods_meet_targets_and_stay_ordered((cfg, seed) in small_network()) {
        let r = realize(&cfg, Layout::Hex, seed).unwrap();
        let (s, c, h) = (&r.scenario, &r.correlations, &r.channels);
        let o = SolverOpts::default();
        let cen = run_centralized(0, s, h, &o).unwrap();
        let a1 = run_alg1(0, s, c, h, &o).unwrap();
        let a2 = run_alg2(0, s, c, h, SurrogateMode::Alg2, &o).unwrap();
        let iid = run_alg2(0, s, c, h, SurrogateMode::Iid, &o).unwrap();
        let zf = run_zf(0, s, h).unwrap();
        let iczf = run_iczf(0, s, h, &o).unwrap();
        for rec in [&cen, &a1, &a2, &iid, &zf, &iczf] {
            if rec.feasible {
                prop_assert!(meets_targets(&rec.audit, &s.gamma, 1e-4), "{:?} misses a target", rec.method);
            }
        }
        for rec in [&a1, &a2, &iid].into_iter().filter(|r| r.feasible) {
            for (audited, cap) in rec.audit.ici.iter().flatten().zip(rec.caps.iter().flatten()) {
                prop_assert!(*audited <= cap * (1.0 + 1e-9) + 1e-300);
            }
        }
        let above = |a: &mcbf::decentralized::RunRecord, b: &mcbf::decentralized::RunRecord| {
            a.feasible && b.feasible && a.total_power() > b.total_power() * (1.0 + 1e-9)
        };
        prop_assert!(!above(&cen, &a1));
        prop_assert!(!above(&cen, &iczf));
        prop_assert!(!above(&iczf, &zf));
    }

    #[test]
    fn phi_does_not_grow_with_the_target(seed in 0u64..500, k in 0usize..8, factor in 1.0f64..10.0) {
        let cfg = NetworkConfig { cells: 2, ues_per_cell: 4, antennas: 24, ..Default::default() };
        let gs = build_group_scenario(&cfg, seed, GroupMode::Geometric).unwrap();
        let eta = solve_eta(&gs, &EquivOpts::default()).unwrap();
        let base = group_coefficients(&gs, &eta);
        let mut raised = gs.clone();
        let mut gamma = gs.scenario.gamma.clone();
        gamma[k] *= factor;
        raised.scenario = gs.scenario.with_gamma(gamma);
        let up = group_coefficients(&raised, &eta);
        for b in 0..2 {
            prop_assert!(up.phi[b][k] <= base.phi[b][k] * (1.0 + 1e-12));
        }
    }

    #[test]
    fn group_powers_solve_their_system_and_leak_nonnegatively(seed in 0u64..500, kb in 1usize..=4) {
        let cfg = NetworkConfig { cells: 2, ues_per_cell: kb, antennas: 24, ..Default::default() };
        let gs = build_group_scenario(&cfg, seed, GroupMode::Geometric).unwrap();
        let eta = solve_eta(&gs, &EquivOpts::default()).unwrap();
        let co = group_coefficients(&gs, &eta);
        let gp = solve_group_powers(&gs, &eta, &co);
        prop_assume!(gp.feasible);
        let p = DVector::from_iterator(gp.rhs.len(), gp.p_bar.iter().flatten().copied());
        let residual = (&gp.system * &p - &gp.rhs).amax();
        prop_assert!(residual <= 1e-10 * gp.rhs.amax().max(p.amax()));
        let ici = mcbf::grouping::group_ici(&gs, &co, &gp.p_bar);
        prop_assert!(ici.iter().flatten().all(|&e| e >= 0.0));
    }

    #[test]
    fn empirical_cdf_is_a_nondecreasing_staircase(rates in prop::collection::vec(0.0f64..10.0, 1..200)) {
        let cdf = empirical_cdf(rates.clone());
        prop_assert_eq!(cdf.len(), rates.len());
        prop_assert!(cdf.windows(2).all(|w| w[0].0 <= w[1].0 && w[0].1 < w[1].1));
        prop_assert!((cdf.last().unwrap().1 - 1.0).abs() < 1e-15);
    }
}

#[cfg(feature = "parallel")]
#[test]
fn csv_bytes_do_not_depend_on_scheduling() {
    let spec = ExperimentSpec {
        config: NetworkConfig { cells: 3, ues_per_cell: 2, antennas: 12, ..Default::default() },
        drops: 6,
        ..Default::default()
    };
    let bytes = || {
        let mut out = Vec::new();
        write_records(&mut out, &run_experiment(&spec).unwrap().records).unwrap();
        out
    };
    let first = bytes();
    let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(bytes);
    let many = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap().install(bytes);
    assert_eq!(first, single);
    assert_eq!(first, many);
}
