mod common;

use common::*;
use contentid::exponent::*;
use contentid::region::RateTriple;
use proptest::prelude::*;

fn aux_joint(nu: usize) -> impl Strategy<Value = AuxJoint> {
    probs(2 * 2 * 2 * nu * 2).prop_map(move |p| AuxJoint::new([2, 2, 2, nu, 2], p).unwrap())
}

fn params() -> impl Strategy<Value = ExpParams> {
    (0.05f64..5.0, 0.01f64..2.0, 0.0f64..=1.0, 0.0f64..=1.0)
        .prop_map(|(a, t, m, b)| ExpParams::new(a, t, m, b).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn vanishes_at_zero_theta(sys in binary_system(), q in aux_joint(2), p in params()) {
        let zero = ExpParams { theta: 0.0, ..p };
        prop_assert!(omega_cgf(&sys, &q, &zero).unwrap().abs() < 1e-12);
    }

    #[test]
    fn jensen_upper_bound(sys in binary_system(), q in aux_joint(2), p in params()) {
        let om = omega_cgf(&sys, &q, &p).unwrap();
        let dens = omega_density(&sys, &q, &p).unwrap();
        let mean: f64 = q.probs.iter().zip(&dens).map(|(a, b)| a * b).sum();
        prop_assert!(om <= p.theta * mean + 1e-10 * (1.0 + mean.abs()));
    }

    #[test]
    fn tilt_renormalizes(
        sys in binary_system(),
        q in channel(2, 2),
        phi in prop::collection::vec(0usize..2, 4),
        lambda in 0.0f64..20.0,
        mu in 0.0f64..=1.0,
        beta in 0.0f64..=1.0,
    ) {
        let sh = ShJoint::deterministic(&sys, q, &phi).unwrap();
        let t = tilted_sh_joint(&sys, &sh, lambda, mu, beta).unwrap();
        prop_assert!((t.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let id = tilted_sh_joint(&sys, &sh, 0.0, mu, beta).unwrap();
        for (a, b) in id.probs.iter().zip(&sh.joint.probs) {
            prop_assert!((a - b).abs() < 1e-15);
        }
    }
}

#[test]
fn minimum_below_random_laws() {
    use rand::{Rng, SeedableRng};
    let sys = bsc_system(0.1, 0.2);
    let cfg = ExponentConfig::default();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
    for p in [
        ExpParams::new(1.0, 0.3, 0.3, 0.5).unwrap(),
        ExpParams::new(4.0, 0.1, 0.0, 0.6).unwrap(),
        ExpParams::new(0.4, 0.5, 0.8, 0.2).unwrap(),
    ] {
        let min = omega_min(&sys, &p, &cfg).unwrap().value;
        for _ in 0..100 {
            let raw: Vec<f64> = (0..32).map(|_| rng.random::<f64>().powi(3) + 1e-6).collect();
            let q = AuxJoint::new([2, 2, 2, 2, 2], normalized(raw)).unwrap();
            let v = omega_cgf(&sys, &q, &p).unwrap();
            assert!(min <= v + 1e-12, "{p:?}: min {min} > {v}");
        }
    }
}

#[test]
fn looser_distortion_never_raises_rate_function() {
    let sys = bsc_system(0.1, 0.2);
    let solver = ExponentSolver::new(&sys, ExponentConfig::default());
    for (ri, rc, d) in [(0.3, 0.0, 0.05), (0.2, 0.4, 0.1), (0.15, 0.69, 0.12)] {
        let a = solver.f_exponent(&RateTriple::new(ri, rc, d).unwrap()).f_hat_raw;
        let b = solver.f_exponent(&RateTriple::new(ri, rc, 2.0 * d).unwrap()).f_hat_raw;
        assert!(b <= a + 1e-12, "({ri}, {rc}, {d}): {a} -> {b}");
    }
}
