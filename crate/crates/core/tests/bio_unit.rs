use contentid::bio::*;
use contentid::prob::*;
use contentid::Error;
use contentid::search::*;

pub(crate) fn bsc_bio(p: f64) -> BioSystem {
    BioSystem::new(Pmf::bernoulli(0.5).unwrap(), Channel::bsc(p).unwrap()).unwrap()
}

#[test]
fn capacity_examples() {
    let c = capacity(&bsc_bio(0.1));
    let oracle = std::f64::consts::LN_2 + 0.1 * 0.1f64.ln() + 0.9 * 0.9f64.ln();
    assert!((c - oracle).abs() < 1e-12);
    let konst = BioSystem::new(
        Pmf::uniform(2),
        Channel::constant(2, &Pmf::new(vec![0.4, 0.6]).unwrap()),
    )
    .unwrap();
    assert!(capacity(&konst).abs() < 1e-15);
    let id = BioSystem::new(Pmf::uniform(2), Channel::identity(2)).unwrap();
    assert!((capacity(&id) - std::f64::consts::LN_2).abs() < 1e-15);
}

fn grid_oracle(f: impl Fn(f64) -> f64) -> f64 {
    // grid 1e-4 over (0, 50], then local polish
    let mut best = (0.0, 0.0);
    let mut k = 1;
    while k as f64 * 1e-4 <= 50.0 {
        let l = k as f64 * 1e-4;
        let v = f(l);
        if v > best.1 {
            best = (l, v);
        }
        k += 1;
    }
    let (_, v) = golden_min(|l| -f(l), (best.0 - 1e-4).max(0.0), best.0 + 1e-4, 1e-13);
    (-v).max(best.1)
}

#[test]
fn lower_exponent_matches_grid() {
    let sys = bsc_bio(0.1);
    let (a, b) = (1.8f64.ln(), 0.2f64.ln());
    let cgf = |l: f64| (0.9 * (l * a).exp() + 0.1 * (l * b).exp()).ln();
    let oracle = grid_oracle(|l| (0.5 * l - cgf(l)) / (1.0 + l));
    let (e, _, _) = exponent_lower(&sys, 0.5).unwrap();
    assert!((e - oracle).abs() < 1e-9, "{e} vs {oracle}");
    assert!(e > 0.0);
    assert!(exponent_lower(&sys, capacity(&sys)).unwrap().0.abs() < 1e-6);
    assert_eq!(exponent_lower(&sys, 0.0).unwrap().0, 0.0);
}

#[test]
fn upper_exponent_is_legendre_dual() {
    let sys = bsc_bio(0.1);
    let (e, lambda, _) = exponent_upper(&sys, 0.5).unwrap();
    // divergence of the tilted law from the original
    let (a, b) = (1.8f64.ln(), 0.2f64.ln());
    let wa = 0.9 * (lambda * a).exp();
    let wb = 0.1 * (lambda * b).exp();
    let (ta, tb) = (wa / (wa + wb), wb / (wa + wb));
    assert!((ta * a + tb * b - 0.5).abs() < 1e-10);
    let kl = ta * (ta / 0.9).ln() + tb * (tb / 0.1).ln();
    assert!((e - kl).abs() < 1e-10, "{e} vs {kl}");
    assert_eq!(exponent_upper(&sys, capacity(&sys)).unwrap().0, 0.0);
    assert_eq!(exponent_upper(&sys, 0.6).unwrap().0, f64::INFINITY);
    let at_max = exponent_upper(&sys, a).unwrap().0;
    assert!((at_max - (-(0.9f64).ln())).abs() < 1e-12);
}

#[test]
fn lower_exponent_above_density_max_is_finite_limit() {
    let sys = bsc_bio(0.1);
    let r = 1.0;
    let (e, _, _) = exponent_lower(&sys, r).unwrap();
    let (a, b) = (1.8f64.ln(), 0.2f64.ln());
    let cgf = |l: f64| (0.9 * (l * a).exp() + 0.1 * (l * b).exp()).ln();
    // grid at large λ approaches r − max from below
    let at_big = (1e4 * r - cgf(1e4)) / (1.0 + 1e4);
    assert!(e >= at_big - 1e-9);
    assert!(e <= r - a + 1e-9);
}

#[test]
fn envelope_examples() {
    let sys = bsc_bio(0.1);
    assert_eq!(correct_decoding_envelope(&sys, 0.2, 10).unwrap(), (0.5, 1.0));
    assert!(correct_decoding_envelope(&sys, 0.2, 0).is_err());
    let (lo, hi) = correct_decoding_envelope(&sys, 0.5, 100).unwrap();
    let el = exponent_lower(&sys, 0.5).unwrap().0;
    let eu = exponent_upper(&sys, 0.5).unwrap().0;
    assert!((lo - 0.5 * (-100.0 * eu).exp()).abs() < 1e-300_f64.max(lo * 1e-12));
    assert!((hi - 2.0 * (-100.0 * el).exp()).abs() <= hi * 1e-12);
    assert!(lo <= hi);
}

#[test]
fn moderate_deviations_examples() {
    let sys = bsc_bio(0.1);
    let v = 0.09 * 9f64.ln().powi(2);
    let c = moderate_deviations_constant(&sys).unwrap();
    assert!((c - 1.0 / (2.0 * v)).abs() < 1e-12);
    assert!((c - 1.1507436).abs() < 1e-6);
    let id = BioSystem::new(Pmf::uniform(2), Channel::identity(2)).unwrap();
    assert!(matches!(moderate_deviations_constant(&id), Err(Error::Degenerate(_))));
    // in bits the density scales by 1/ln 2
    let ln2 = std::f64::consts::LN_2;
    let bits = FiniteRandomVariable::new(
        sys.density().values().iter().map(|v| v / ln2).collect(),
        Pmf::new(sys.density().probs().to_vec()).unwrap(),
    )
    .unwrap();
    assert!((bits.variance() - sys.variance() / ln2 / ln2).abs() < 1e-12);
    assert!((1.0 / (2.0 * bits.variance()) - c * ln2 * ln2).abs() < 1e-12);
}

fn phi_inv_oracle(p: f64) -> f64 {
    bisect(|x| normal_cdf(x) - p, -40.0, 40.0, 400)
}

#[test]
fn second_order_examples() {
    let sys = bsc_bio(0.1);
    let c = capacity(&sys);
    assert_eq!(second_order_rate(&sys, 0.5, 100).unwrap(), 100.0 * c);
    for eps in [0.01, 0.1, 0.3] {
        let s = second_order_rate(&sys, eps, 100).unwrap()
            + second_order_rate(&sys, 1.0 - eps, 100).unwrap();
        assert!((s - 200.0 * c).abs() < 1e-9);
    }
    let z = phi_inv_oracle(0.1);
    assert!((inverse_normal_cdf(0.1).unwrap() - z).abs() < 1e-9);
    let expect = 100.0 * c + (100.0 * sys.variance()).sqrt() * z;
    assert!((second_order_rate(&sys, 0.1, 100).unwrap() - expect).abs() < 1e-8);
    assert!(second_order_rate(&sys, 0.0, 100).is_err());
    assert!(second_order_rate(&sys, 1.0, 100).is_err());
}

#[test]
fn inverse_normal_cdf_examples() {
    assert_eq!(inverse_normal_cdf(0.5).unwrap(), 0.0);
    let z = inverse_normal_cdf(0.975).unwrap();
    assert!((z - phi_inv_oracle(0.975)).abs() < 1e-9);
    assert!((z - 1.959964).abs() < 5e-7);
    for &p in &[1e-10, 1e-4, 0.02, 0.2, 0.5, 0.7, 0.99, 1.0 - 1e-6] {
        let x = inverse_normal_cdf(p).unwrap();
        assert!((normal_cdf(x) - p).abs() < 1e-12, "p {p}");
        let y = inverse_normal_cdf(1.0 - p).unwrap();
        assert!((x + y).abs() < 1e-12 || p < 1e-9, "antisymmetry at {p}");
    }
    assert!(inverse_normal_cdf(0.0).is_err());
    assert!(inverse_normal_cdf(1.0).is_err());
}

#[test]
fn one_shot_converse_examples() {
    let sys = bsc_bio(0.1);
    assert_eq!(one_shot_converse(&sys, 5, 0.3, 1e6).unwrap().prob, 1.0);
    let b = one_shot_converse(&sys, 1, 0.3, 0.1).unwrap();
    // tail at 0.2: only the ln 1.8 atom
    let expect = 0.9 + (-0.1f64).exp();
    assert!((b.prob - expect.min(1.0)).abs() < 1e-15);
    let b = one_shot_converse(&sys, 1, 0.7, 0.5).unwrap();
    assert!((b.prob - (0.9 + (-0.5f64).exp()).min(1.0)).abs() < 1e-15);
    assert_eq!(one_shot_converse(&sys, 4, 0.3, 0.0).unwrap().prob, 1.0);
    assert!(one_shot_converse(&sys, 4, 0.3, -1.0).is_err());
}

fn binomial(n: u64, k: u64) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

#[test]
fn one_shot_achievability_examples() {
    let sys = bsc_bio(0.1);
    let t = density_tail(&sys, 10, 0.3).unwrap().prob;
    let b = one_shot_achievability(&sys, 10, 0.3, 0.0).unwrap();
    assert!((b.prob - t / 2.0).abs() < 1e-15);
    let b = one_shot_achievability(&sys, 10, -5.0, 0.2).unwrap();
    assert!((b.prob - 1.0 / (1.0 + (-2.0f64).exp())).abs() < 1e-12);
    let (a, bb) = (1.8f64.ln(), 0.2f64.ln());
    let oracle: f64 = (0..=10u64)
        .filter(|&k| (k as f64 * a + (10 - k) as f64 * bb) / 10.0 >= 0.35)
        .map(|k| binomial(10, k) * 0.9f64.powi(k as i32) * 0.1f64.powi(10 - k as i32))
        .sum();
    let b = one_shot_achievability(&sys, 10, 0.3, 0.05).unwrap();
    assert!((b.prob - oracle / (1.0 + (-0.5f64).exp())).abs() < 1e-12);
}
