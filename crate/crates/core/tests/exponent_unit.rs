use contentid::exponent::*;
use contentid::prob::*;
use contentid::region::*;
use contentid::prob::{compose_triple, Distortion, Pmf};

fn sys() -> SystemTriple {
    compose_triple(
        Pmf::bernoulli(0.5).unwrap(),
        Channel::bsc(0.1).unwrap(),
        Channel::bsc(0.2).unwrap(),
        Distortion::hamming(2),
    )
    .unwrap()
}

fn params(alpha: f64, theta: f64, mu: f64, beta: f64) -> ExpParams {
    ExpParams::new(alpha, theta, mu, beta).unwrap()
}

#[test]
fn matched_law_reduces_to_distortion_term() {
    let s = sys();
    let q = AuxJoint::matched(&s, &[0.3, 0.7], &[0.6, 0.4]).unwrap();
    let p = params(1.7, 0.4, 0.35, 0.6);
    let w = omega_density(&s, &q, &p).unwrap();
    for (c, &v) in w.iter().enumerate() {
        let [x, _, _, _, xh] = q.cell(c);
        let expect = p.alpha * p.mu * s.distortion().get(x, xh);
        assert!((v - expect).abs() < 1e-12, "cell {c}: {v} vs {expect}");
    }
}

#[test]
fn mu_one_leaves_alpha_times_distortion() {
    let s = sys();
    let q = AuxJoint::matched(&s, &[0.5, 0.5], &[0.2, 0.8]).unwrap();
    for beta in [0.0, 0.4, 1.0] {
        let w = omega_density(&s, &q, &params(2.0, 0.5, 1.0, beta)).unwrap();
        for (c, &v) in w.iter().enumerate() {
            let [x, _, _, _, xh] = q.cell(c);
            assert!((v - 2.0 * s.distortion().get(x, xh)).abs() < 1e-12);
        }
    }
}

#[test]
fn omega_cgf_matched_closed_form() {
    let s = sys();
    let q = AuxJoint::matched(&s, &[0.5, 0.5], &[0.7, 0.3]).unwrap();
    let p = params(1.3, 0.6, 0.4, 0.2);
    let pmis: f64 = q
        .probs
        .iter()
        .enumerate()
        .filter(|(c, _)| {
            let [x, _, _, _, xh] = q.cell(*c);
            x != xh
        })
        .map(|(_, v)| v)
        .sum();
    let expect = -(1.0 - pmis * (1.0 - (-p.theta * p.alpha * p.mu).exp())).ln();
    let got = omega_cgf(&s, &q, &p).unwrap();
    assert!((got - expect).abs() < 1e-12);
    let tiny = params(1.3, 1e-12, 0.4, 0.2);
    assert!(omega_cgf(&s, &q, &tiny).unwrap().abs() < 1e-10);
}

#[test]
fn support_violation_is_infinite() {
    let s = compose_triple(
        Pmf::point_mass(2, 0),
        Channel::bsc(0.1).unwrap(),
        Channel::bsc(0.2).unwrap(),
        Distortion::hamming(2),
    )
    .unwrap();
    let q = AuxJoint::new([2, 2, 2, 1, 2], vec![1.0 / 16.0; 16]).unwrap();
    assert_eq!(omega_cgf(&s, &q, &params(1.0, 0.5, 0.5, 0.5)).unwrap(), f64::INFINITY);
}

fn random_joint(rng: &mut rand_chacha::ChaCha8Rng, s: &SystemTriple, nu: usize) -> AuxJoint {
    use rand::Rng;
    let n = s.nx() * s.ny() * s.nz() * nu * s.nxhat();
    let raw: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 1e-3).collect();
    let tot: f64 = raw.iter().sum();
    AuxJoint::new([s.nx(), s.ny(), s.nz(), nu, s.nxhat()], raw.iter().map(|v| v / tot).collect()).unwrap()
}

#[test]
fn mean_of_omega_matches_divergence_terms() {
    use rand::SeedableRng;
    let s = sys();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    let q = random_joint(&mut rng, &s, 2);
    let p = params(0.8, 0.3, 0.25, 0.4);
    let w = omega_density(&s, &q, &p).unwrap();
    let mean: f64 = q.probs.iter().zip(&w).map(|(a, b)| a * b).sum();
    // term by term from marginals
    let [nx, ny, nz, nu, nxh] = q.dims;
    let mut m_yu = vec![0.0; ny * nu];
    let mut m_zux = vec![0.0; nz * nu * nxh];
    let mut m_zu = vec![0.0; nz * nu];
    let mut m_yzu = vec![0.0; ny * nz * nu];
    let mut m_u = vec![0.0; nu];
    let mut m_z = vec![0.0; nz];
    let mut m_y = vec![0.0; ny];
    for (c, &v) in q.probs.iter().enumerate() {
        let [_, y, z, u, xh] = q.cell(c);
        m_yu[y * nu + u] += v;
        m_zux[(z * nu + u) * nxh + xh] += v;
        m_zu[z * nu + u] += v;
        m_yzu[(y * nz + z) * nu + u] += v;
        m_u[u] += v;
        m_z[z] += v;
        m_y[y] += v;
    }
    // D(Q ‖ P_XYZ Q_{U|Y} Q_{X̂|ZU})
    let mut div = 0.0;
    let mut i_yz_u = 0.0;
    let mut i_z_u = 0.0;
    let mut ed = 0.0;
    for (c, &v) in q.probs.iter().enumerate() {
        let [x, y, z, u, xh] = q.cell(c);
        let refm = s.joint(x, y, z) * (m_yu[y * nu + u] / m_y[y]) * (m_zux[(z * nu + u) * nxh + xh] / m_zu[z * nu + u]);
        div += v * (v / refm).ln();
        i_yz_u += v * (m_yzu[(y * nz + z) * nu + u] / (m_u[u] * s.pyz(y, z))).ln();
        i_z_u += v * (m_zu[z * nu + u] / (m_u[u] * m_z[z])).ln();
        ed += v * s.distortion().get(x, xh);
    }
    let _ = nx;
    let mb = 1.0 - p.mu;
    let expect = div + p.alpha * (mb * (1.0 - p.beta) * i_yz_u - mb * p.beta * i_z_u + p.mu * ed);
    assert!((mean - expect).abs() < 1e-10, "{mean} vs {expect}");
}

#[test]
fn analytic_gradient_matches_finite_differences() {
    use rand::SeedableRng;
    let s = sys();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
    let q = random_joint(&mut rng, &s, 2);
    let p = params(1.5, 0.3, 0.3, 0.6);
    let (v, g) = omega_gradient(&s, &q, &p).unwrap();
    assert!((v - omega_cgf(&s, &q, &p).unwrap()).abs() < 1e-12);
    let at = |probs: Vec<f64>| omega_cgf(&s, &AuxJoint { dims: q.dims, probs }, &p).unwrap();
    for c in [0, 5, 17, 31] {
        let h = 1e-7;
        let mut qp = q.probs.clone();
        qp[c] += h;
        let mut qm = q.probs.clone();
        qm[c] -= h;
        let fd = (at(qp) - at(qm)) / (2.0 * h);
        assert!((fd - g[c]).abs() < 1e-5 * (1.0 + g[c].abs()), "cell {c}: {fd} vs {}", g[c]);
    }
}

#[test]
fn omega_is_unbounded_below_past_the_theta_limit() {
    let s = sys();
    // θ(1 + αμ̄β̄) = 0.9 · (1 + 2·0.5·0.5) > 1
    let p = params(2.0, 0.9, 0.5, 0.5);
    let base = AuxJoint::matched(&s, &[0.5, 0.5], &[0.5, 0.5]).unwrap();
    let mut vals = Vec::new();
    for eps in [1e-2, 1e-4, 1e-6, 1e-8] {
        // shrink Q_{Z|YU}(z=1|y=0,u=0)
        let mut probs = base.probs.clone();
        for x in 0..2 {
            for xh in 0..2 {
                probs[base.index(x, 0, 1, 0, xh)] *= eps;
            }
        }
        let tot: f64 = probs.iter().sum();
        let q = AuxJoint::new(base.dims, probs.iter().map(|v| v / tot).collect()).unwrap();
        vals.push(omega_cgf(&s, &q, &p).unwrap());
    }
    for w in vals.windows(2) {
        assert!(w[1] < w[0] - 0.1, "{vals:?}");
    }
}

#[test]
fn restricted_minimum_equals_tilted_cgf_at_lambda_theta_alpha() {
    let s = sys();
    let q = Channel::bsc(0.2).unwrap();
    let sh = ShJoint::deterministic(&s, q.clone(), &[0, 1, 1, 0]).unwrap();
    let p = params(1.2, 0.5, 0.3, 0.4);
    let om = omega_cgf(&s, &sh.joint, &p).unwrap();
    let w = tilde_omega(&s, &sh, p.mu, p.beta).unwrap();
    let l = p.theta * p.alpha;
    let direct = -log_sum_exp(
        sh.joint
            .probs
            .iter()
            .zip(&w)
            .filter(|(&a, _)| a > 0.0)
            .map(|(a, b)| a.ln() - l * b),
    );
    assert!((om - direct).abs() < 1e-12);
}

#[test]
fn tilde_omega_examples() {
    let s = sys();
    let konst = Channel::constant(2, &Pmf::point_mass(2, 0));
    let sh = ShJoint::deterministic(&s, konst, &[0, 1, 0, 0]).unwrap();
    let w = tilde_omega(&s, &sh, 0.4, 0.3).unwrap();
    for (c, &v) in w.iter().enumerate() {
        if sh.joint.probs[c] > 0.0 {
            let [x, _, _, _, xh] = sh.joint.cell(c);
            assert!((v - 0.4 * s.distortion().get(x, xh)).abs() < 1e-12);
        }
    }
    let sh = ShJoint::deterministic(&s, Channel::bsc(0.3).unwrap(), &[0, 1, 1, 0]).unwrap();
    let w = tilde_omega(&s, &sh, 1.0, 0.7).unwrap();
    for (c, &v) in w.iter().enumerate() {
        if sh.joint.probs[c] > 0.0 {
            let [x, _, _, _, xh] = sh.joint.cell(c);
            assert!((v - s.distortion().get(x, xh)).abs() < 1e-12);
        }
    }
}

#[test]
fn tilted_joint_properties() {
    let s = sys();
    let sh = ShJoint::deterministic(&s, Channel::bsc(0.3).unwrap(), &[0, 1, 1, 0]).unwrap();
    let t0 = tilted_sh_joint(&s, &sh, 0.0, 0.3, 0.5).unwrap();
    for (a, b) in t0.probs.iter().zip(&sh.joint.probs) {
        assert!((a - b).abs() < 1e-15);
    }
    let t = tilted_sh_joint(&s, &sh, 0.8, 0.3, 0.5).unwrap();
    assert!((t.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    // μ = 1 with a constant distortion gives a constant ω̃
    let flat = compose_triple(
        Pmf::bernoulli(0.5).unwrap(),
        Channel::bsc(0.1).unwrap(),
        Channel::bsc(0.2).unwrap(),
        Distortion::new(vec![vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap(),
    )
    .unwrap();
    let sh = ShJoint::deterministic(&flat, Channel::bsc(0.3).unwrap(), &[0, 1, 1, 0]).unwrap();
    assert!(tilted_variance(&flat, &sh, 0.7, 1.0, 0.2).unwrap() < 1e-20);
}

#[test]
fn two_point_tilted_variance() {
    // U constant and μ = 1 leave ω̃ = d ∈ {0, 1}
    let s = sys();
    let konst = Channel::constant(2, &Pmf::point_mass(1, 0));
    let sh = ShJoint::deterministic(&s, konst, &[0, 1]).unwrap();
    let lambda = 0.9;
    let p_err = sh
        .joint
        .probs
        .iter()
        .enumerate()
        .filter(|(c, _)| {
            let [x, _, _, _, xh] = sh.joint.cell(*c);
            x != xh
        })
        .map(|(_, v)| v)
        .sum::<f64>();
    let tilt = p_err * (-lambda as f64).exp() / (1.0 - p_err + p_err * (-lambda as f64).exp());
    let v = tilted_variance(&s, &sh, lambda, 1.0, 0.3).unwrap();
    assert!((v - tilt * (1.0 - tilt)).abs() < 1e-12);
}

#[test]
fn sh_joint_round_trip_and_rejection() {
    let s = sys();
    let sh = ShJoint::deterministic(&s, Channel::bsc(0.3).unwrap(), &[0, 1, 1, 0]).unwrap();
    let back = ShJoint::from_joint(&s, &sh.joint).unwrap();
    for (a, b) in back.joint.probs.iter().zip(&sh.joint.probs) {
        assert!((a - b).abs() < 1e-14);
    }
    let q = AuxJoint::new([2, 2, 2, 2, 2], vec![1.0 / 32.0; 32]).unwrap();
    assert!(ShJoint::from_joint(&s, &q).is_err());
}

#[test]
fn f_param_vanishes_as_theta_shrinks() {
    let s = sys();
    let t = RateTriple::new(0.05, 0.3, 0.2).unwrap();
    let cfg = ExponentConfig::default();
    let f = f_param(&s, &t, &params(1.0, 1e-9, 0.3, 0.3), &cfg).unwrap();
    assert!(f.abs() < 1e-8);
}

#[test]
fn f_param_decreases_in_distortion() {
    let s = sys();
    let p = params(1.0, 0.3, 0.5, 0.3);
    let cfg = ExponentConfig::default();
    let om = omega_min(&s, &p, &cfg).unwrap().value;
    let a = f_from_omega(om, &RateTriple::new(0.05, 0.3, 0.1).unwrap(), &p);
    let b = f_from_omega(om, &RateTriple::new(0.05, 0.3, 0.2).unwrap(), &p);
    assert!(b < a);
    let rate = 0.5 * (0.7 * 0.3 - 0.05) + 0.5 * 0.1;
    assert!((a - (om - p.theta * p.alpha * rate) / p.denominator()).abs() < 1e-15);
}

#[test]
fn omega_min_beats_random_sampling() {
    use rand::SeedableRng;
    let s = sys();
    let p = params(0.5, 0.3, 0.3, 0.5);
    let cfg = ExponentConfig::default();
    let om = omega_min(&s, &p, &cfg).unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    let mut best = f64::INFINITY;
    for _ in 0..100_000 {
        let q = random_joint(&mut rng, &s, 2);
        best = best.min(omega_cgf(&s, &q, &p).unwrap());
    }
    assert!(om.value <= best + 1e-6, "{} vs {best}", om.value);
    let matched = AuxJoint::matched(&s, &[0.5, 0.5], &[0.5, 0.5]).unwrap();
    assert!(om.value <= omega_cgf(&s, &matched, &p).unwrap());
    assert!(om.value <= om.restricted_value + 1e-12);
}

#[test]
fn pc_bound_edges() {
    assert_eq!(pc_upper_bound(0.0, 10).unwrap(), 1.0);
    assert!(pc_upper_bound(0.1, 0).is_err());
    assert!((pc_upper_bound(0.1, 100).unwrap() - 7.0 * (-10.0f64).exp()).abs() < 1e-15);
}

#[test]
fn lambda_forms() {
    let p = params(2.0, 0.5, 0.4, 0.5);
    assert!((p.lambda_form() - 0.5 / (1.0 + 0.5 + 0.5 * 2.0 * 0.6 * 0.5)).abs() < 1e-15);
    let m = params_from_lambda(3.0, 0.2, 0.5);
    assert!((m.alpha - 3.0 / (1.0 + 3.0 * 0.8 * 0.5)).abs() < 1e-15);
    assert!(m.theta * (1.0 + m.alpha * 0.8 * 0.5) <= 1.0 + 1e-15);
}
