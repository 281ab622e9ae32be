//! Cross-checks against brute-force sweeps and hand enumerations.

mod common;

use common::*;
use contentid::exponent::{ExponentConfig, ExponentSolver};
use contentid::prob::*;
use contentid::region::*;
use contentid::sim::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// All binary test channels `q(u|y)` on a grid with the given step.
fn binary_channel_grid(steps: usize) -> Vec<Channel> {
    let mut out = Vec::new();
    for a in 0..=steps {
        for b in 0..=steps {
            let (a, b) = (a as f64 / steps as f64, b as f64 / steps as f64);
            out.push(Channel::new(vec![vec![a, 1.0 - a], vec![b, 1.0 - b]]).unwrap());
        }
    }
    out
}

/// Corners not dominated in all three coordinates.
fn pareto(corners: Vec<Corner>) -> Vec<Corner> {
    let dominated = |c: &Corner, o: &Corner| {
        o.r_i_max >= c.r_i_max && o.r_c_min_minus_r_i <= c.r_c_min_minus_r_i && o.d_min <= c.d_min && o != c
    };
    corners.iter().filter(|c| !corners.iter().any(|o| dominated(c, o))).copied().collect()
}

/// Smallest `Rᶜ` at `(r_i, d)` over mixtures `w·a + (1 − w)·b`. The
/// objective is linear in `w`, so only the ends of the feasible interval
/// matter.
fn mixed_frontier(corners: &[Corner], r_i: f64, d: f64) -> f64 {
    let mut best = f64::INFINITY;
    for a in corners {
        for b in corners {
            let (mut lo, mut hi) = (0.0f64, 1.0f64);
            // w·(a − b) ≥ need with sign folded in
            for (slope, need) in [(a.r_i_max - b.r_i_max, r_i - b.r_i_max), (b.d_min - a.d_min, b.d_min - d)] {
                if slope > 0.0 {
                    lo = lo.max(need / slope);
                } else if slope < 0.0 {
                    hi = hi.min(need / slope);
                } else if need > 1e-12 {
                    lo = 2.0;
                }
            }
            if lo <= hi + 1e-12 {
                let v = |w: f64| r_i + w * a.r_c_min_minus_r_i + (1.0 - w) * b.r_c_min_minus_r_i;
                best = best.min(v(lo).min(v(hi.max(lo))));
            }
        }
    }
    best
}

#[test]
fn frontier_matches_brute_force_sweep() {
    let sys = bsc_system(0.1, 0.2);
    let corners = pareto(
        binary_channel_grid(50)
            .into_iter()
            .map(|q| corner_point(&sys, &AuxScheme::with_bayes_phi(&sys, q).unwrap()).unwrap())
            .chain([AuxScheme::constant(&sys), AuxScheme::identity(&sys)].iter().map(|s| corner_point(&sys, s).unwrap()))
            .collect(),
    );
    let cfg = RegionConfig::default();
    for d in [0.08, 0.12, 0.5] {
        let trace = boundary_trace(&sys, d, 11, &cfg).unwrap();
        let mut worst = 0.0f64;
        for pt in &trace {
            let brute = mixed_frontier(&corners, pt.r_i, d);
            if brute.is_finite() || pt.r_c.is_finite() {
                worst = worst.max((brute - pt.r_c).abs());
            }
        }
        assert!(worst <= 0.01, "D = {d}: gap {worst}, {} corners", corners.len());
    }
}

#[test]
fn inside_outside_transition_agrees_with_brute_force() {
    let sys = bsc_system(0.1, 0.2);
    let cfg = RegionConfig::default();
    let table = hyperplane_table(&sys, &cfg);
    let corners: Vec<Corner> = binary_channel_grid(40)
        .into_iter()
        .map(|q| corner_point(&sys, &AuxScheme::with_bayes_phi(&sys, q).unwrap()).unwrap())
        .collect();
    let (r_c, d) = (0.6, 0.15);
    // largest identification rate reached by a single scheme
    let brute = corners
        .iter()
        .filter(|c| c.d_min <= d && c.r_c_min_minus_r_i <= r_c)
        .map(|c| c.r_i_max.min(r_c - c.r_c_min_minus_r_i))
        .fold(0.0, f64::max);
    let (mut lo, mut hi) = (0.0, 0.2);
    for _ in 0..30 {
        let mid = 0.5 * (lo + hi);
        let v = membership_with(&sys, &table, &RateTriple::new(mid, r_c, d).unwrap(), &cfg);
        if v.status == Status::Outside {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    assert!((lo - brute).abs() <= 0.02, "transition {lo}, brute force {brute}");
}

#[test]
fn divergence_bound_not_above_source_sweep() {
    let sys = bsc_system(0.1, 0.2);
    let cfg = RegionConfig::default();
    let t = RateTriple::new(0.08, 0.5, 0.15).unwrap();
    assert_eq!(membership(&sys, &t, &cfg).status, Status::Inside);
    let bound = exponent_upper_bound(&sys, &t, &cfg).unwrap();
    // divergence grows with |q − 1/2|, so the first excluded law scanning outward is the grid minimum
    let sweep = (0..=50)
        .flat_map(|k| [50 - k, 50 + k])
        .find_map(|k| {
            let law = compose_triple(
                Pmf::bernoulli(k as f64 / 100.0).unwrap(),
                sys.pyx().clone(),
                sys.pzx().clone(),
                Distortion::hamming(2),
            )
            .unwrap();
            let table = hyperplane_table(&law, &cfg);
            (membership_sh(&table, &t, cfg.margin).status == Status::Outside)
                .then(|| kl_divergence(law.joint_flat(), sys.joint_flat()).unwrap())
        })
        .unwrap_or(f64::INFINITY);
    assert!(sweep.is_finite());
    assert!(bound.value > 0.0 && bound.value <= sweep + 1e-3, "bound {} sweep {sweep}", bound.value);
}

#[test]
fn rate_function_dominates_tilted_form() {
    let sys = bsc_system(0.1, 0.2);
    let solver = ExponentSolver::new(&sys, ExponentConfig::default());
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    for _ in 0..50 {
        let t = RateTriple::new(0.3 * rng.random::<f64>(), 0.8 * rng.random::<f64>(), 0.3 * rng.random::<f64>()).unwrap();
        let f = solver.f_exponent(&t).f_hat_raw;
        let g = solver.tilde_f(&t).f_tilde_raw;
        assert!(f >= g - 0.02, "{t:?}: {f} < {g} - 0.02");
    }
}

#[test]
fn two_items_with_uninformative_query() {
    let sys = compose_triple(
        Pmf::bernoulli(0.5).unwrap(),
        Channel::bsc(0.1).unwrap(),
        Channel::bsc(0.5).unwrap(),
        Distortion::hamming(2),
    )
    .unwrap();
    for dec in [DecoderSpec::MaxLikelihood, DecoderSpec::StochasticLikelihood] {
        // every item ties, so identification succeeds with probability 1/2
        let loose = SimConfig::new(sys.clone(), 1, 2.0, 1.0, 10, 0).unwrap().with_decoder(dec);
        assert!((exact_pc_bruteforce(&loose).unwrap() - 0.5).abs() < 1e-12);
        // exact reconstruction also needs x̂ = y, which holds with probability 0.9
        let strict = SimConfig::new(sys.clone(), 1, 2.0, 0.0, 10, 0).unwrap().with_decoder(dec);
        assert!((exact_pc_bruteforce(&strict).unwrap() - 0.45).abs() < 1e-12);
    }
}
