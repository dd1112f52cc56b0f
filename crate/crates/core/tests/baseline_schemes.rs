//! Trace and Monte-Carlo checks of the three reference schemes.

use gfra_core::baselines::{
    barring_probability, baseline1_step, baseline2_step, nonorth_error_trace, nonorth_mmse, nonorth_pilot_phase,
    NonOrthPilotBook,
};
use gfra_core::config::{Combiner, Config};
use gfra_core::phy::{gen_lsfc, instantaneous_rate};
use gfra_core::rng::SimRng;
use gfra_core::sim::env::{EnvSpec, Episode, PhyMode};
use rand::SeedableRng;

#[test]
fn barring_access_frequency_matches_probability() {
    let mut rng = SimRng::seed_from_u64(1);
    let slots = 100_000;
    let l = 6;
    let backlogged: Vec<bool> = (0..12).map(|i| i % 4 != 3).collect();
    let p = barring_probability(9, l);
    let mut transmissions = 0usize;
    for _ in 0..slots {
        let d = baseline1_step(&backlogged, l, 1.0, &mut rng);
        for (i, &a) in d.assignment.iter().enumerate() {
            assert!(backlogged[i] || a == 0, "idle user transmitted");
            assert!(a <= l);
            if a > 0 {
                assert_eq!(d.rho[i], 1.0);
            }
        }
        transmissions += d.assignment.iter().filter(|&&a| a > 0).count();
    }
    let trials = (slots * 9) as f64;
    let freq = transmissions as f64 / trials;
    let se = (p * (1.0 - p) / trials).sqrt();
    assert!((freq - p).abs() < 3.0 * se, "frequency {freq} vs {p} (SE {se})");
}

#[test]
fn schedule_never_collides_and_fails_only_on_rate() {
    let mut cfg = Config::default();
    for class in &mut cfg.system.traffic {
        class.arrival_rate = 1.0;
    }
    cfg.training.episode_len = 10_000;
    let mut spec = EnvSpec::new(&cfg).unwrap();
    spec.phy = PhyMode::Orthogonal(Combiner::Zf);
    let mut rng = SimRng::seed_from_u64(2);
    let lsfc = gen_lsfc(&spec.system, &mut rng).unwrap();
    let mut ep = Episode::new(&spec, lsfc, SimRng::seed_from_u64(3), SimRng::seed_from_u64(4)).unwrap();
    let l = spec.n_pilots();
    let mut failures = 0;
    for _ in 0..10_000 {
        let d = baseline2_step(ep.slot(), &ep.backlogged(), l, spec.rho_max).unwrap();
        let rec = ep.step(&spec, &d).unwrap();
        assert_eq!(rec.collided_pilots, 0, "slot {}", rec.slot);
        for i in 0..spec.n_users() {
            if rec.assignment[i] == 0 {
                assert!(!rec.success[i]);
                continue;
            }
            let sinr = rec.sinr[i].expect("scheduled user is decodable");
            let ok = instantaneous_rate(sinr, spec.system.penalty_ell) >= spec.users[i].rate_threshold;
            assert_eq!(rec.success[i], ok, "slot {} user {i}", rec.slot);
            failures += !ok as usize;
        }
    }
    // With everyone backlogged, each slot serves exactly half the users.
    assert!(failures < 10_000 * 6);
}

#[test]
fn nonorthogonal_estimation_error_matches_analytic_trace() {
    let (l, n, m) = (6, 12, 100);
    let mut rng = SimRng::seed_from_u64(5);
    let book = NonOrthPilotBook::generate(l, n, &mut rng);
    let rho0 = 4.0;
    for k in [1, 4, 6, 9] {
        let active: Vec<usize> = rand::seq::index::sample(&mut rng, n, k).into_vec();
        let draws = 10_000;
        let mut err = 0.0;
        for _ in 0..draws {
            let (h, y) = nonorth_pilot_phase(&book, n, &active, rho0, m, &mut rng);
            let h_hat = nonorth_mmse(&book, &y, &active, rho0);
            for (c, &i) in active.iter().enumerate() {
                err += (h.column(i) - h_hat.column(c)).norm_squared();
            }
        }
        let mc = err / (draws * m) as f64;
        let analytic = nonorth_error_trace(&book, &active, rho0);
        assert!(
            (mc / analytic - 1.0).abs() < 0.02,
            "|active| = {k}: MC {mc} vs {analytic}"
        );
    }
}
