use std::collections::HashSet;

use cpmes_core::pareto::{crowding_distance, non_dominated_sort, nsga2, Nsga2Config, ScoredDesign};
use cpmes_core::{DesignPoint, DesignSpace, PortableRng};
use cpmes_oracles::non_dominated;
use proptest::prelude::*;

fn random_population(rng: &mut PortableRng, n: usize, k: usize) -> Vec<ScoredDesign<f64>> {
    (0..n)
        .map(|i| ScoredDesign {
            design: DesignPoint { alpha: i as f64 / n as f64, n_added: 0 },
            objectives: (0..k).map(|_| rng.uniform()).collect(),
        })
        .collect()
}

#[test]
fn first_front_matches_pairwise_scan() {
    for trial in 0..100 {
        let mut rng = PortableRng::seed_from(trial);
        let pop = random_population(&mut rng, 50, 3);
        let fronts = non_dominated_sort(&pop);
        let mut got = fronts[0].clone();
        got.sort();
        let raw: Vec<Vec<f64>> = pop.iter().map(|p| p.objectives.clone()).collect();
        assert_eq!(got, non_dominated(&raw), "trial {trial}");
        let total: usize = fronts.iter().map(|f| f.len()).sum();
        assert_eq!(total, 50);
    }
}

#[test]
fn dominating_point_found_on_full_lattice() {
    let space = DesignSpace::new(3, 101).unwrap();
    let target = DesignPoint { alpha: 0.37, n_added: 2 };
    let f = |d: &DesignPoint| {
        let da = (d.alpha - target.alpha).abs();
        let dn = (d.n_added as f64 - target.n_added as f64).abs();
        vec![-da - dn, -2.0 * da - 0.5 * dn]
    };
    let cfg = Nsga2Config { generations: 20, seed: 11, ..Default::default() };
    let front = nsga2(&space, f, &cfg).unwrap();
    assert_eq!(front.designs().copied().collect::<Vec<_>>(), vec![target]);
}

#[test]
fn exhaustive_mode_equals_lattice_scan() {
    let space = DesignSpace::new(3, 21).unwrap();
    let f = |d: &DesignPoint| vec![d.alpha.sin() + d.n_added as f64 * 0.1, (1.0 - d.alpha) * (3 - d.n_added) as f64];
    let cfg = Nsga2Config { exhaustive: true, ..Default::default() };
    let front = nsga2(&space, f, &cfg).unwrap();
    let lattice = space.lattice();
    let raw: Vec<Vec<f64>> = lattice.iter().map(f).collect();
    let want: HashSet<DesignPoint> = non_dominated(&raw).into_iter().map(|i| lattice[i]).collect();
    let got: HashSet<DesignPoint> = front.designs().copied().collect();
    assert_eq!(got, want);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn nsga2_front_is_mutually_non_dominated_and_reproducible(seed in 0u64..1000, a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let space = DesignSpace::new(3, 101).unwrap();
        let f = move |d: &DesignPoint| vec![-(d.alpha - a).powi(2), -(d.alpha - b).powi(2) + 0.05 * d.n_added as f64, (d.n_added as f64 * 1.3).cos()];
        let cfg = Nsga2Config { population: 40, generations: 10, seed, ..Default::default() };
        let one = nsga2(&space, f, &cfg).unwrap();
        prop_assert!(one.is_mutually_non_dominated());
        prop_assert!(!one.is_empty());
        let distinct: HashSet<_> = one.designs().collect();
        prop_assert_eq!(distinct.len(), one.len());
        prop_assert_eq!(one, nsga2(&space, f, &cfg).unwrap());
    }

    #[test]
    fn crowding_is_permutation_invariant(seed in 0u64..1000, shift in 0usize..20) {
        let mut rng = PortableRng::seed_from(seed);
        let pop = random_population(&mut rng, 12, 3);
        let mut rotated = pop.clone();
        rotated.rotate_left(shift % 12);
        let mut x = crowding_distance(&pop);
        let mut y = crowding_distance(&rotated);
        x.sort_by(|a, b| a.total_cmp(b));
        y.sort_by(|a, b| a.total_cmp(b));
        prop_assert_eq!(x, y);
    }
}
