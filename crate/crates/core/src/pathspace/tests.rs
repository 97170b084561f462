use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::*;
use crate::dynsys::make_linear;
use crate::lagrangian::LiouvilleModel;
use crate::polymoment::Polynomial;
use crate::trialdensity::TrialFamily;

fn unit_family() -> TrialFamily {
    let x = Polynomial::var(1, 0);
    TrialFamily::shifted((&x * &x).scale(0.5), 1.0).unwrap()
}

fn model(rate: f64) -> LiouvilleModel {
    let sys = make_linear(&DMatrix::from_element(1, 1, -rate)).unwrap();
    LiouvilleModel::new(&sys, &unit_family()).unwrap()
}

fn cfg(seed: u64) -> McmcConfig {
    McmcConfig {
        chains: 3,
        samples_per_chain: 400,
        burn_in: 100,
        thin: 2,
        proposal_scale: 0.5,
        seed,
        endpoint_mode: EndpointMode::FixedStartFreeEnd,
        keep_paths: false,
    }
}

#[test]
fn path_construction_is_validated() {
    assert!(DiscretePath::new(0.0, 1.0, vec![vec![1.0]]).is_err());
    assert!(DiscretePath::new(1.0, 1.0, vec![vec![1.0], vec![2.0]]).is_err());
    assert!(DiscretePath::new(0.0, 1.0, vec![vec![1.0], vec![2.0, 3.0]]).is_err());
    let p = DiscretePath::straight_line(0.0, 2.0, &[0.0, 1.0], &[2.0, 1.0], 4).unwrap();
    assert_eq!(p.segments(), 4);
    assert_eq!(p.dt(), 0.5);
    assert_eq!(p.knot(2), &[1.0, 1.0]);
    assert_eq!(EndpointMode::FixedBoth.free_knots(4), 1..4);
    assert_eq!(EndpointMode::FixedStartFreeEnd.free_knots(4), 1..5);
}

#[test]
fn gradient_vanishes_on_constant_zero_drift_path() {
    let m = model(0.0);
    let p = DiscretePath::straight_line(0.0, 1.0, &[0.4], &[0.4], 10).unwrap();
    let g = action_gradient(&m, &p, EndpointMode::FixedStartFreeEnd).unwrap();
    assert_eq!(g.gradient.len(), 10);
    assert!(g.norm() < 1e-9 && !g.one_sided);
}

#[test]
fn relaxation_gradient_shrinks_with_step() {
    let m = model(1.0);
    let interior = |n: usize| {
        let p = DiscretePath::from_fn(0.0, 1.0, n, |t| vec![(-t).exp()]).unwrap();
        let g = action_gradient(&m, &p, EndpointMode::FixedBoth).unwrap();
        g.gradient.iter().fold(0.0f64, |a, b| a.max(b.abs()))
    };
    let (a, b) = (interior(20), interior(40));
    assert!(b < a / 4.0, "{a} {b}");
}

#[test]
fn one_sided_fallback_is_flagged() {
    let sys = make_linear(&DMatrix::from_element(1, 1, -1.0)).unwrap();
    let fam = TrialFamily::full_gaussian(1);
    let m = LiouvilleModel::new(&sys, &fam).unwrap();
    // precision -2 lambda_1 sits just above zero at the free end
    let p = DiscretePath::new(0.0, 1.0, vec![vec![0.0, -0.5], vec![0.0, -1e-7]]).unwrap();
    let g = action_gradient(&m, &p, EndpointMode::FixedStartFreeEnd).unwrap();
    assert!(g.one_sided);
    assert!(g.gradient.iter().all(|v| v.is_finite()));
}

#[test]
fn analytic_and_finite_difference_gradients_agree_at_minimizer() {
    let m = model(1.0);
    let r = extremal_path(&m, 0.0, 1.0, &[1.0], Some(&[0.2]), 20, &ExtremalOptions::default()).unwrap();
    assert!(r.converged);
    let g = action_gradient(&m, &r.path, EndpointMode::FixedBoth).unwrap();
    assert!(g.norm() <= 1e-6 * (1.0 + r.action), "{}", g.norm());
}

#[test]
fn zero_drift_equal_endpoints_give_constant_path() {
    let m = model(0.0);
    let r = extremal_path(&m, 0.0, 1.0, &[0.7], Some(&[0.7]), 16, &ExtremalOptions::default()).unwrap();
    assert!(r.converged);
    assert!(r.action.abs() < 1e-15);
    assert!(r.path.knots().iter().all(|k| (k[0] - 0.7).abs() < 1e-12));
}

#[test]
fn metropolis_rule() {
    assert_eq!(metropolis_acceptance(1.0, 0.5), 1.0);
    assert_eq!(metropolis_acceptance(1.0, f64::INFINITY), 0.0);
    assert!((metropolis_acceptance(0.0, 2.0) - (-2.0f64).exp()).abs() < 1e-16);
}

#[test]
fn detailed_balance_on_three_knot_path() {
    // Free knots 1 and 2 on a grid; symmetric proposal to any other grid
    // state with one knot changed.
    let m = model(1.0);
    let grid: Vec<f64> = (0..7).map(|i| -0.6 + 0.3 * i as f64).collect();
    let states: Vec<(f64, f64)> = grid.iter().flat_map(|&a| grid.iter().map(move |&b| (a, b))).collect();
    let action = |s: (f64, f64)| m.action(&DiscretePath::new(0.0, 1.0, vec![vec![1.0], vec![s.0], vec![s.1]]).unwrap());
    let weight = |s: (f64, f64)| (-action(s)).exp();
    let neighbours = |s: (f64, f64)| -> Vec<(f64, f64)> {
        let mut out: Vec<(f64, f64)> = grid.iter().filter(|&&a| a != s.0).map(|&a| (a, s.1)).collect();
        out.extend(grid.iter().filter(|&&b| b != s.1).map(|&b| (s.0, b)));
        out
    };
    let q = 1.0 / (2 * (grid.len() - 1)) as f64;
    for &x in &states {
        for y in neighbours(x) {
            let fwd = weight(x) * q * metropolis_acceptance(action(x), action(y));
            let bwd = weight(y) * q * metropolis_acceptance(action(y), action(x));
            assert!((fwd - bwd).abs() <= 1e-12 * fwd.max(bwd), "{x:?} -> {y:?}");
        }
    }
}

#[test]
fn sampling_is_seed_deterministic_across_thread_counts() {
    let m = model(1.0);
    let init = DiscretePath::straight_line(0.0, 1.0, &[1.0], &[1.0], 5).unwrap();
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| mcmc_sample(&m, &cfg(42), &init).unwrap())
    };
    let a = run(1);
    let b = run(4);
    assert_eq!(a, b);
    let mut buf_a = Vec::new();
    let mut buf_b = Vec::new();
    write_chain_csv(&a, Some("hash abc"), &mut buf_a).unwrap();
    write_chain_csv(&b, Some("hash abc"), &mut buf_b).unwrap();
    assert_eq!(buf_a, buf_b);
    let other = mcmc_sample(&m, &cfg(43), &init).unwrap();
    assert_ne!(a.endpoints(), other.endpoints());
    let text = String::from_utf8(buf_a).unwrap();
    assert!(text.starts_with("# hash abc\nchain,step,S,lambda_0\n0,102,"));
}

#[test]
fn sampled_actions_respect_the_classical_bound() {
    let m = model(1.0);
    let end = [0.3];
    let cl = extremal_path(&m, 0.0, 1.0, &[1.0], Some(&end), 6, &ExtremalOptions::default()).unwrap();
    let mut c = cfg(9);
    c.endpoint_mode = EndpointMode::FixedBoth;
    let init = DiscretePath::straight_line(0.0, 1.0, &[1.0], &end, 6).unwrap();
    let res = mcmc_sample(&m, &c, &init).unwrap();
    assert!(res.min_action() >= cl.action - 1e-6);
    assert!(res.warnings.is_empty(), "{:?}", res.warnings);
    assert!(res.endpoints().iter().all(|e| e == &end));
}

#[test]
fn inadmissible_proposals_are_rejected() {
    let sys = make_linear(&DMatrix::from_element(1, 1, -1.0)).unwrap();
    let fam = TrialFamily::full_gaussian(1);
    let m = LiouvilleModel::new(&sys, &fam).unwrap();
    let init = DiscretePath::straight_line(0.0, 0.5, &[0.0, -0.5], &[0.0, -0.5], 3).unwrap();
    let mut c = cfg(1);
    c.proposal_scale = 2.0;
    c.keep_paths = true;
    let res = mcmc_sample(&m, &c, &init).unwrap();
    for chain in &res.chains {
        for p in &chain.paths {
            assert!(p.knots().iter().all(|k| k[1] < 0.0));
        }
    }
}

#[test]
fn histogram_of_gaussian_draws_matches_density() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let normal = Normal::new(0.5, 2.0).unwrap();
    let draws: Vec<f64> = (0..100_000).map(|_| normal.sample(&mut rng)).collect();
    let h = consistency_distribution(&draws, 50, Some((-7.5, 8.5))).unwrap();
    let pdf = |x: f64| (-(x - 0.5f64).powi(2) / 8.0).exp() / (2.0 * (2.0 * std::f64::consts::PI).sqrt());
    let peak = pdf(0.5);
    for (c, d) in h.centres().iter().zip(&h.density) {
        assert!((d - pdf(*c)).abs() <= 0.05 * peak, "{c}: {d} vs {}", pdf(*c));
    }
    assert!((h.mean - 0.5).abs() < 0.03);
    assert!((h.mode - 0.5).abs() < 0.5);
    let area: f64 = h.density.iter().sum::<f64>() * h.width();
    assert!((area - 1.0).abs() < 1e-3);
}

#[test]
fn histogram_needs_enough_draws() {
    assert!(matches!(
        consistency_distribution(&[0.0; 999], 10, None),
        Err(crate::Error::TooFewSamples { needed: 1000, found: 999 })
    ));
}

#[test]
fn config_validation() {
    let mut c = cfg(0);
    c.thin = 0;
    assert!(c.validate().is_err());
    let mut c = cfg(0);
    c.proposal_scale = f64::NAN;
    assert!(c.validate().is_err());
}
