use liouville::dynsys::make_linear;
use liouville::lagrangian::LiouvilleModel;
use liouville::pathspace::{
    extremal_path, mcmc_sample, DiscretePath, EndpointMode, ExtremalOptions, McmcConfig, PathAction,
};
use liouville::polymoment::Polynomial;
use liouville::trialdensity::TrialFamily;
use nalgebra::DMatrix;

fn scaled_family(scale: f64) -> TrialFamily {
    let x = Polynomial::var(1, 0);
    TrialFamily::shifted((&x * &x).scale(0.5 * scale), 1.0).unwrap()
}

fn variance(v: &[f64]) -> f64 {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
}

/// Zero drift leaves only the kinetic term `g lambda_dot^2 / 2` with
/// `g = 1 / scale`, so the free endpoint is Brownian with variance `T / g`.
#[test]
fn wiener_endpoint_variance_grows_as_t_over_g() {
    let sys = make_linear(&DMatrix::zeros(1, 1)).unwrap();
    for (t_end, scale) in [(1.0, 1.0), (2.0, 2.0)] {
        let fam = scaled_family(scale);
        let model = LiouvilleModel::new(&sys, &fam).unwrap();
        let initial = DiscretePath::from_fn(0.0, t_end, 4, |_| vec![0.3]).unwrap();
        let cfg = McmcConfig {
            chains: 4,
            samples_per_chain: 25_000,
            burn_in: 200,
            thin: 2,
            proposal_scale: 0.5,
            seed: 40,
            endpoint_mode: EndpointMode::FixedStartFreeEnd,
            keep_paths: false,
        };
        let r = mcmc_sample(&model, &cfg, &initial).unwrap();
        let var = variance(&r.endpoint_component(0));
        let want = t_end * scale;
        assert!((var - want).abs() <= 0.1 * want, "T={t_end} g={}: {var} vs {want}", 1.0 / scale);
    }
}

/// `u` is a free particle; `w` is pinned by a stiffness `exp(c u)` that
/// differs between the two sides of `u = 0`.
struct Valley {
    c: f64,
}

impl PathAction for Valley {
    fn dim(&self) -> usize {
        2
    }

    fn segment(&self, a: &[f64], b: &[f64], dt: f64) -> f64 {
        let du = (b[0] - a[0]) / dt;
        let dw = (b[1] - a[1]) / dt;
        let u = 0.5 * (a[0] + b[0]);
        let w = 0.5 * (a[1] + b[1]);
        dt * (0.5 * du * du + 0.5 * dw * dw + 0.5 * (self.c * u).exp() * w * w)
    }
}

/// Mirror endpoints have the same classical action, yet the path integral
/// puts more mass on the soft side.
#[test]
fn equal_classical_actions_need_not_give_equal_mass() {
    let action = Valley { c: 3.0 };
    let opts = ExtremalOptions::default();
    let right = extremal_path(&action, 0.0, 1.0, &[0.0, 0.0], Some(&[0.7, 0.0]), 6, &opts).unwrap();
    let left = extremal_path(&action, 0.0, 1.0, &[0.0, 0.0], Some(&[-0.7, 0.0]), 6, &opts).unwrap();
    assert!((right.action - left.action).abs() < 1e-12, "{} vs {}", right.action, left.action);

    let initial = DiscretePath::from_fn(0.0, 1.0, 6, |_| vec![0.0, 0.0]).unwrap();
    let cfg = McmcConfig {
        chains: 8,
        samples_per_chain: 12_500,
        burn_in: 200,
        thin: 2,
        proposal_scale: 0.5,
        seed: 41,
        endpoint_mode: EndpointMode::FixedStartFreeEnd,
        keep_paths: false,
    };
    let r = mcmc_sample(&action, &cfg, &initial).unwrap();
    // Fraction of draws with u_T < 0, per chain, as independent batches.
    let fractions: Vec<f64> = r
        .chains
        .iter()
        .map(|c| c.endpoints.iter().filter(|e| e[0] < 0.0).count() as f64 / c.endpoints.len() as f64)
        .collect();
    let mean = fractions.iter().sum::<f64>() / fractions.len() as f64;
    let se = (variance(&fractions) / fractions.len() as f64).sqrt();
    assert!(mean - 0.5 > 3.0 * se, "soft side fraction {mean} (se {se})");
}
