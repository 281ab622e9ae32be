use contentid::region::*;
use contentid::prob::*;
use contentid::search::*;
use contentid::prob::Distortion;

fn bsc_sys(p: f64, q: f64) -> SystemTriple {
    compose_triple(
        Pmf::bernoulli(0.5).unwrap(),
        Channel::bsc(p).unwrap(),
        Channel::bsc(q).unwrap(),
        Distortion::hamming(2),
    )
    .unwrap()
}

#[test]
fn constant_scheme_corner() {
    let sys = bsc_sys(0.1, 0.2);
    let c = corner_point(&sys, &AuxScheme::constant(&sys)).unwrap();
    assert!(c.r_i_max.abs() < 1e-15);
    assert!(c.r_c_min_minus_r_i.abs() < 1e-15);
    // Bayes given z alone
    assert!((c.d_min - 0.2).abs() < 1e-12);
}

#[test]
fn identity_scheme_corner_matches_direct_evaluation() {
    let sys = bsc_sys(0.1, 0.2);
    let c = corner_point(&sys, &AuxScheme::identity(&sys)).unwrap();
    let h = |p: f64| -p * p.ln() - (1.0 - p) * (1.0 - p).ln();
    let i_yz = std::f64::consts::LN_2 - h(0.26);
    let h_y_given_z = h(0.26);
    assert!((c.r_i_max - i_yz).abs() < 1e-12);
    assert!((c.r_c_min_minus_r_i - h_y_given_z).abs() < 1e-12);
    // y=z: pick y, error 0.02; y≠z: pick y, error 0.08
    assert!((c.d_min - 0.10).abs() < 1e-12);
}

#[test]
fn independent_side_channel_has_no_identification_rate() {
    let sys = compose_triple(
        Pmf::bernoulli(0.3).unwrap(),
        Channel::bsc(0.1).unwrap(),
        Channel::constant(2, &Pmf::new(vec![0.6, 0.4]).unwrap()),
        Distortion::hamming(2),
    )
    .unwrap();
    let rows = simplex_grid(3, 4);
    for a in &rows {
        for b in &rows {
            let q = Channel::new(vec![a.clone(), b.clone()]).unwrap();
            let scheme = AuxScheme::with_bayes_phi(&sys, q).unwrap();
            assert!(corner_point(&sys, &scheme).unwrap().r_i_max < 1e-14);
        }
    }
}

#[test]
fn hyperplane_special_values() {
    let sys = bsc_sys(0.1, 0.2);
    let cfg = RegionConfig::default();
    // μ = 1: best distortion, reached with U = Y
    let p = hyperplane_value(&sys, 1.0, 0.3, &cfg).unwrap();
    let bayes_yz: f64 = (0..2)
        .flat_map(|y| (0..2).map(move |z| (y, z)))
        .map(|(y, z)| {
            let w: Vec<f64> = (0..2).map(|x| sys.joint(x, y, z)).collect();
            sys.distortion().bayes_choice(&w).1
        })
        .sum();
    assert!((p.value - bayes_yz).abs() < 1e-9, "{}", p.value);
    let p = hyperplane_value(&sys, 0.0, 1.0, &cfg).unwrap();
    let h = |p: f64| -p * p.ln() - (1.0 - p) * (1.0 - p).ln();
    assert!((p.value + (std::f64::consts::LN_2 - h(0.26))).abs() < 1e-9);
    let p = hyperplane_value(&sys, 0.0, 0.0, &cfg).unwrap();
    assert!(p.value.abs() < 1e-9);
    assert!(hyperplane_value(&sys, 1.5, 0.0, &cfg).is_err());
}

#[test]
fn membership_trivial_verdicts() {
    let sys = bsc_sys(0.1, 0.2);
    let cfg = RegionConfig::default();
    let table = hyperplane_table(&sys, &cfg);
    let t = RateTriple::new(0.0, 0.0, sys.d_plus()).unwrap();
    let v = membership_with(&sys, &table, &t, &cfg);
    assert_eq!(v.status, Status::Inside);
    assert_eq!(membership_sh(&table, &t, cfg.margin).status, Status::Inside);
    let h = |p: f64| -p * p.ln() - (1.0 - p) * (1.0 - p).ln();
    let i_yz = std::f64::consts::LN_2 - h(0.26);
    let t = RateTriple::new(i_yz + 0.1, 2f64.ln(), sys.d_plus()).unwrap();
    let v = membership_with(&sys, &table, &t, &cfg);
    assert_eq!(v.status, Status::Outside);
    let cert = v.certificate.unwrap();
    assert!(cert.intercept - cert.combination > cfg.margin);
}

#[test]
fn time_sharing_is_linear_in_the_weight() {
    let sys = bsc_sys(0.1, 0.2);
    let a = AuxScheme::constant(&sys);
    let b = AuxScheme::identity(&sys);
    let ca = corner_point(&sys, &a).unwrap();
    let cb = corner_point(&sys, &b).unwrap();
    let m = corner_point(&sys, &AuxScheme::time_share(&sys, &a, &b, 0.3)).unwrap();
    assert!((m.r_i_max - (0.3 * ca.r_i_max + 0.7 * cb.r_i_max)).abs() < 1e-12);
    assert!(
        (m.r_c_min_minus_r_i - (0.3 * ca.r_c_min_minus_r_i + 0.7 * cb.r_c_min_minus_r_i)).abs()
            < 1e-12
    );
    assert!((m.d_min - (0.3 * ca.d_min + 0.7 * cb.d_min)).abs() < 1e-12);
}

#[test]
fn best_mix_solves_the_piecewise_linear_program() {
    let (w, v) = best_mix([1.0, -1.0, 0.5], [-1.0, 1.0, 0.5]);
    assert!((w - 0.5).abs() < 1e-12);
    assert!(v.abs() < 1e-12);
}
