use cpmes_core::gp::{Dataset, FittedGp, GpOptions};
use cpmes_core::kernel::KernelSpec;
use cpmes_core::{DesignPoint, DesignSpace, PortableRng};
use cpmes_oracles::{gp_posterior, OracleKernel};
use proptest::prelude::*;

fn random_case(rng: &mut PortableRng, space: &DesignSpace) -> (KernelSpec<f64>, OracleKernel, Vec<DesignPoint>, Vec<f64>, f64) {
    let n = 1 + rng.below(8);
    let mut pts: Vec<DesignPoint> = Vec::new();
    while pts.len() < n {
        let d = space.point(rng.below(space.len()));
        if !pts.contains(&d) {
            pts.push(d);
        }
    }
    let ys: Vec<f64> = (0..n).map(|_| 3.0 * rng.normal()).collect();
    let ls = vec![0.1 + rng.uniform(), 0.1 + rng.uniform()];
    let var = 0.5 + 2.0 * rng.uniform();
    let noise = 10f64.powf(-4.0 + 3.0 * rng.uniform());
    if rng.bernoulli(0.5) {
        (
            KernelSpec::se_product(ls.clone(), var),
            OracleKernel::Se { lengthscales: ls, variance: var },
            pts,
            ys,
            noise,
        )
    } else {
        let c = 0.5 + rng.uniform();
        (
            KernelSpec::matern_product(ls.clone(), var, c),
            OracleKernel::Matern52 { lengthscales: ls, variance: var, constant: c },
            pts,
            ys,
            noise,
        )
    }
}

#[test]
fn posterior_matches_dense_inverse_on_random_datasets() {
    let space = DesignSpace::new(3, 101).unwrap();
    let mut rng = PortableRng::seed_from(2024);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let (kernel, oracle, pts, ys, noise) = random_case(&mut rng, &space);
        let feats: Vec<Vec<f64>> = pts.iter().map(|p| space.features::<f64>(p).to_vec()).collect();
        let gp = FittedGp::fit(space, Dataset::new(pts, ys.clone(), noise).unwrap(), kernel, GpOptions::default()).unwrap();
        for _ in 0..5 {
            let q = space.point(rng.below(space.len()));
            let post = gp.predict(&q);
            let (m, v) = gp_posterior(&oracle, &feats, &ys, noise, &space.features::<f64>(&q));
            worst = worst.max((post.mean - m).abs()).max((post.variance - v.max(0.0)).abs());
        }
    }
    assert!(worst < 1e-8, "max abs deviation {worst:e}");
}

#[test]
fn standardized_fit_is_affine_in_targets() {
    let space = DesignSpace::new(3, 101).unwrap();
    let pts = vec![
        DesignPoint { alpha: 0.1, n_added: 0 },
        DesignPoint { alpha: 0.5, n_added: 2 },
        DesignPoint { alpha: 0.9, n_added: 3 },
    ];
    let ys = vec![100.0, 400.0, 250.0];
    let kern = KernelSpec::se_product(vec![0.3, 0.5], 1.0);
    let std = GpOptions { standardize: true, ..Default::default() };
    let gp = FittedGp::fit(space, Dataset::new(pts.clone(), ys.clone(), 1e-6).unwrap(), kern.clone(), std).unwrap();
    let mean = ys.iter().sum::<f64>() / 3.0;
    let sd = (ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / 3.0).sqrt();
    let z: Vec<f64> = ys.iter().map(|y| (y - mean) / sd).collect();
    let feats: Vec<Vec<f64>> = pts.iter().map(|p| space.features::<f64>(p).to_vec()).collect();
    let oracle = OracleKernel::Se { lengthscales: vec![0.3, 0.5], variance: 1.0 };
    let q = DesignPoint { alpha: 0.3, n_added: 1 };
    let (m, v) = gp_posterior(&oracle, &feats, &z, 1e-6, &space.features::<f64>(&q));
    let post = gp.predict(&q);
    assert!((post.mean - (m * sd + mean)).abs() < 1e-6);
    assert!((post.variance - v * sd * sd).abs() < 1e-6);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn posterior_variance_bounded_by_prior(seed in 0u64..10_000) {
        let space = DesignSpace::new(3, 21).unwrap();
        let mut rng = PortableRng::seed_from(seed);
        let (kernel, _, pts, ys, noise) = random_case(&mut rng, &space);
        let prior = kernel.diag();
        let gp = FittedGp::fit(space, Dataset::new(pts, ys, noise).unwrap(), kernel, GpOptions::default()).unwrap();
        for d in space.lattice() {
            let p = gp.predict(&d);
            prop_assert!(p.variance >= 0.0 && p.variance <= prior + 1e-12);
        }
    }
}
