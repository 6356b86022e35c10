mod common;

use asynctrig::linalg::{quad_form, Matrix, Vector};
use asynctrig::partition::{
    coverage_check, make_partition, region_of, sphere_samples, sprocedure_feasible,
};
use asynctrig::plant::transition_from_steps;
use asynctrig::{certificate, DiscretePlant, HorizonBank, PlantModel};
use proptest::prelude::*;
use std::sync::OnceLock;

fn cones4() -> &'static [asynctrig::ConicRegion] {
    static CELL: OnceLock<Vec<asynctrig::ConicRegion>> = OnceLock::new();
    CELL.get_or_init(|| make_partition(4, 15).unwrap())
}

#[test]
fn partitions_cover_fresh_samples() {
    for (dim, n) in [(2, 1), (2, 7), (3, 5), (4, 1), (4, 15), (5, 9)] {
        let regions = make_partition(dim, n).unwrap();
        assert_eq!(regions.len(), n);
        let samples = sphere_samples(dim, 100_000, 0x5eed ^ (dim * 31 + n) as u64);
        assert!(coverage_check(&regions, &samples), "dim {dim}, N {n}");
        for (i, r) in regions.iter().enumerate() {
            assert_eq!(r.index, i);
            assert!((&r.q - r.q.transpose()).amax() == 0.0);
        }
    }
}

#[test]
fn partition_is_deterministic() {
    assert_eq!(make_partition(4, 15).unwrap(), cones4());
}

#[test]
fn sprocedure_certificate_is_pointwise_sound() {
    let dp = DiscretePlant::new(&PlantModel::second_order(), 0.205).unwrap();
    let bank = HorizonBank::build(&dp, 1, 4, 1000).unwrap();
    let star = bank.stable_candidates()[0];
    let cert = certificate::synthesize_unperturbed(
        &bank.transitions[star],
        &bank.horizons[star],
        0.0,
        0.205,
    )
    .unwrap();
    let regions = make_partition(4, 6).unwrap();
    let samples = sphere_samples(4, 4000, 77);
    let steps = dp.step_matrices();
    let mut checked = 0;
    for (h, phi) in bank.horizons.iter().zip(&bank.transitions) {
        assert_eq!(phi, &transition_from_steps(&steps, h));
        for r in &regions {
            let Some(eps) = sprocedure_feasible(phi, &cert.p, 1.0, &r.q) else { continue };
            assert!(eps >= 0.0);
            for x in samples.iter().filter(|x| r.contains(x)) {
                let after = quad_form(&cert.p, &(phi * x));
                assert!(after <= quad_form(&cert.p, x) + 1e-9);
                checked += 1;
            }
        }
    }
    assert!(checked > 0);
}

#[test]
fn global_feasibility_needs_no_region() {
    // ε = 0 suffices when the decrease already holds everywhere
    let phi = Matrix::identity(3, 3) * 0.5;
    let p = Matrix::identity(3, 3);
    let q = Matrix::identity(3, 3);
    assert_eq!(sprocedure_feasible(&phi, &p, 1.0, &q), Some(0.0));
    let grow = Matrix::identity(3, 3) * 1.5;
    assert_eq!(sprocedure_feasible(&grow, &p, 1.0, &q), None);
}

fn nonzero(dim: usize) -> impl Strategy<Value = Vector> {
    prop::collection::vec(-10.0..10.0f64, dim)
        .prop_filter("nonzero", |v| v.iter().any(|x| x.abs() > 1e-6))
        .prop_map(Vector::from_vec)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn region_of_is_scale_invariant(x in nonzero(4), s in 1e-3..1e3f64) {
        let regions = cones4();
        let c = region_of(&x, regions);
        prop_assert!(regions[c].contains(&x));
        prop_assert_eq!(region_of(&(&x * s), regions), c);
    }

    #[test]
    fn planar_regions_contain_their_points(x in nonzero(2), n in 1usize..20) {
        let regions = make_partition(2, n).unwrap();
        prop_assert!(regions[region_of(&x, &regions)].contains(&x));
        prop_assert!(regions[region_of(&-&x, &regions)].contains(&-&x));
    }
}
