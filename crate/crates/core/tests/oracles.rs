//! Fitting, silhouette and SLIC results against independent reference computations.

mod common;

use common::*;
use proptest::prelude::*;
use tessreg::segmentation::cluster::silhouette;

#[test]
fn irls_matches_simplex_maximization() {
    for seed in 0..24 {
        let gap = irls_vs_simplex_gap(seed);
        assert!(gap <= 1e-6, "instance {seed}: gap {gap:e}");
    }
}

#[test]
fn silhouette_fixed_instances() {
    for seed in 0..200 {
        let (values, labels) = random_clustering(seed);
        assert!(silhouette_matches(&values, &labels), "instance {seed}");
    }
}

#[test]
fn slic_final_labels_are_nearest_centers() {
    for seed in 0..30 {
        let run = converged_slic(seed);
        assert!(run.converged, "instance {seed} did not converge");
        assert_eq!(slic_assignment_mismatches(&run), 0, "instance {seed}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn silhouette_equals_definition(
        points in prop::collection::vec((prop::collection::vec(-5.0f64..5.0, 2), 1u32..5), 3..=50)
    ) {
        let (values, mut labels): (Vec<Vec<f64>>, Vec<u32>) = points.into_iter().unzip();
        labels[0] = 1;
        labels[1] = 2;
        prop_assert_eq!(silhouette(&values, &labels).unwrap(), silhouette_by_definition(&values, &labels));
    }

    #[test]
    fn slic_assignment_is_a_nearest_center_fixed_point(seed in 1000u64..100_000) {
        let run = converged_slic(seed);
        prop_assume!(run.converged);
        prop_assert_eq!(slic_assignment_mismatches(&run), 0);
    }
}
