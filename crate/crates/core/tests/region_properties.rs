mod common;

use common::*;
use contentid::prob::*;
use contentid::region::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn scheme(nz: usize, nxhat: usize, ny: usize, nu: usize) -> impl Strategy<Value = (Channel, Vec<Vec<usize>>)> {
    (
        channel(ny, nu),
        prop::collection::vec(prop::collection::vec(0..nxhat, nz), nu),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn data_processing_on_corners(
        sys in binary_system(),
        (q, phi) in scheme(2, 2, 2, 3),
    ) {
        let s = AuxScheme::new(&sys, q, phi).unwrap();
        let c = corner_point(&sys, &s).unwrap();
        let iyz = mutual_information(sys.py(), &sys.pzy().to_channel_filled()).unwrap();
        let ixz = mutual_information(sys.px(), sys.pzx()).unwrap();
        prop_assert!(c.r_i_max <= iyz + 1e-12);
        prop_assert!(iyz <= ixz + 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn origin_plane_is_zero(sys in small_system()) {
        let p = hyperplane_value(&sys, 0.0, 0.0, &RegionConfig::coarse()).unwrap();
        prop_assert!(p.value.abs() < 1e-9, "{}", p.value);
    }
}

#[test]
fn certificates_are_reproducible() {
    let sys = bsc_system(0.1, 0.2);
    let cfg = RegionConfig::default();
    let table = hyperplane_table(&sys, &cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut inside, mut outside) = (0, 0);
    for _ in 0..200 {
        let t = RateTriple::new(0.2 * rng.random::<f64>(), 0.8 * rng.random::<f64>(), 0.3 * rng.random::<f64>()).unwrap();
        let v = membership_with(&sys, &table, &t, &cfg);
        match v.status {
            Status::Inside => {
                let w = v.witness.as_ref().expect("inside verdicts carry a witness");
                let c = corner_point(&sys, w).unwrap();
                assert!(c.slack(&t) >= -1e-9, "{t:?}: slack {}", c.slack(&t));
                inside += 1;
            }
            Status::Outside => {
                let cert = v.certificate.expect("outside verdicts carry a certificate");
                let p = hyperplane_value(&sys, cert.mu, cert.beta, &cfg).unwrap();
                let violation = p.value - t.combination(cert.mu, cert.beta);
                assert!(violation > cfg.margin, "{t:?}: violation {violation}");
                outside += 1;
            }
            Status::Unknown => {}
        }
    }
    assert!(inside > 20 && outside > 20, "{inside} inside, {outside} outside");
}

#[test]
fn verdicts_respect_the_partial_order() {
    let sys = bsc_system(0.1, 0.2);
    let cfg = RegionConfig::default();
    let table = hyperplane_table(&sys, &cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut checked = 0;
    for _ in 0..500 {
        let t = RateTriple::new(0.15 * rng.random::<f64>(), 0.7 * rng.random::<f64>(), 0.25 * rng.random::<f64>()).unwrap();
        let easier = RateTriple::new(
            t.r_i * rng.random::<f64>(),
            t.r_c + 0.2 * rng.random::<f64>(),
            t.d + 0.1 * rng.random::<f64>(),
        )
        .unwrap();
        let a = membership_with(&sys, &table, &t, &cfg).status;
        let b = membership_with(&sys, &table, &easier, &cfg).status;
        if a == Status::Inside && b != Status::Unknown {
            assert_eq!(b, Status::Inside, "{t:?} inside but {easier:?} not");
            checked += 1;
        }
        if b == Status::Outside && a != Status::Unknown {
            assert_eq!(a, Status::Outside, "{easier:?} outside but {t:?} not");
        }
    }
    assert!(checked > 50, "{checked}");
}
