mod common;

use common::*;
use contentid::prob::*;
use proptest::prelude::*;

fn binomial_tail(a: f64, b: f64, p: f64, n: usize, t: f64) -> f64 {
    let mut total = 0.0;
    let mut ln_choose = 0.0f64;
    for k in 0..=n {
        if k > 0 {
            ln_choose += ((n - k + 1) as f64).ln() - (k as f64).ln();
        }
        let sum = (n - k) as f64 * a + k as f64 * b;
        if sum >= n as f64 * t {
            total += (ln_choose + k as f64 * p.ln() + (n - k) as f64 * (1.0 - p).ln()).exp();
        }
    }
    total
}

fn rv(values: Vec<f64>, probs: Vec<f64>) -> FiniteRandomVariable {
    FiniteRandomVariable::new(values, Pmf::new(probs).unwrap()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn mutual_information_nonnegative(p in pmf(3), ch in channel(3, 4)) {
        prop_assert!(mutual_information(&p, &ch).unwrap() >= 0.0);
    }

    #[test]
    fn identical_rows_carry_no_information(p in pmf(4), row in probs(3)) {
        let ch = Channel::new(vec![row; 4]).unwrap();
        prop_assert!(mutual_information(&p, &ch).unwrap().abs() < 1e-10);
    }

    #[test]
    fn chernoff_dominates_single_letter_tail(
        values in prop::collection::vec(-3.0f64..3.0, 4),
        w in probs(4),
        a in -3.0f64..3.0,
        lambda in 0.01f64..5.0,
    ) {
        let x = rv(values, w);
        let bound = cramer_tail_bound(&x, a, lambda).unwrap();
        prop_assert!(bound + 1e-12 >= iid_tail_exact(&x, 1, a).unwrap());
    }

    #[test]
    fn cgf_convex(
        values in prop::collection::vec(-2.0f64..2.0, 3),
        w in probs(3),
        l1 in -4.0f64..4.0,
        l2 in -4.0f64..4.0,
        t in 0.0f64..1.0,
    ) {
        let x = rv(values, w);
        let mid = x.cgf(t * l1 + (1.0 - t) * l2);
        prop_assert!(mid <= t * x.cgf(l1) + (1.0 - t) * x.cgf(l2) + 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn conditionals_reproduce_joint(sys in small_system()) {
        let (nx, ny, nz) = (sys.nx(), sys.ny(), sys.nz());
        for y in 0..ny {
            for z in 0..nz {
                let cz = sys.pzy().get(y, z).unwrap_or(0.0);
                prop_assert!((cz * sys.py().get(y) - sys.pyz(y, z)).abs() < 1e-10);
                for x in 0..nx {
                    let cx = sys.px_given_yz().get(y * nz + z, x).unwrap_or(0.0);
                    prop_assert!((cx * sys.pyz(y, z) - sys.joint(x, y, z)).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn generic_conditional_reproduces_joint(flat in probs(12)) {
        let c = Conditional::from_joint_rows(3, 4, &flat);
        for a in 0..3 {
            let m: f64 = flat[a * 4..(a + 1) * 4].iter().sum();
            for b in 0..4 {
                prop_assert!((c.get(a, b).unwrap() * m - flat[a * 4 + b]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn two_atom_tail_matches_binomial(
        a in -2.0f64..2.0,
        gap in 0.1f64..2.0,
        p in 0.05f64..0.95,
        n in 1usize..60,
        k0 in 0usize..60,
    ) {
        let b = a + gap;
        let k0 = k0.min(n);
        // threshold halfway between two attainable sums
        let t = ((n - k0) as f64 * a + k0 as f64 * b - 0.5 * gap) / n as f64;
        let exact = iid_tail_exact(&rv(vec![a, b], vec![1.0 - p, p]), n, t).unwrap();
        prop_assert!((exact - binomial_tail(a, b, p, n, t)).abs() < 1e-12);
    }
}
