//! Acceptance suite shared by the `verify` subcommand and the `acceptance`
//! test target. Every criterion returns a pass/fail line with its measured
//! values. Three criteria cannot pass at the prescribed sizes; for those the
//! report also checks the quantitative explanation of the miss
//! (`explained`).

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::bio::{
    capacity, exponent_lower, exponent_upper, inverse_normal_cdf, moderate_deviations_constant,
    one_shot_achievability, second_order_rate, BioSystem,
};
use crate::error::Result;
use crate::exponent::{
    omega_cgf, tilted_sh_joint, AuxJoint, ExpParams, ExponentConfig, ExponentSolver, ShJoint,
};
use crate::prob::{
    binary_entropy, compose_triple, iid_sum, kl_divergence, mutual_information, normal_cdf, Channel,
    Distortion, FiniteRandomVariable, Pmf, SystemTriple,
};
use crate::region::{
    corner_point, exponent_upper_bound, hyperplane_table, membership_sh, membership_with,
    AuxScheme, RateTriple, RegionConfig, Status,
};
use crate::search::{golden_min, mix_seed};
use crate::sim::{
    empirical_exponent, estimate_pe, exact_pc_bruteforce, fit_exponent, DecayTarget, DecoderSpec,
    EncoderSpec, ExponentPoint, SimConfig, SimMode,
};

#[derive(Debug, Clone, Serialize)]
pub struct CriterionReport {
    pub id: u8,
    pub title: &'static str,
    pub passed: bool,
    pub summary: String,
    pub seconds: f64,
    /// For criteria that miss for a known reason: whether the measured miss
    /// matches the predicted one.
    pub explained: Option<bool>,
}

impl CriterionReport {
    /// One-line rendering.
    pub fn line(&self) -> String {
        let mut s = format!(
            "criterion {}: {} [{}] {} ({:.1}s)",
            self.id,
            if self.passed { "PASS" } else { "FAIL" },
            self.title,
            self.summary,
            self.seconds
        );
        if let Some(e) = self.explained {
            s.push_str(if e { " | miss matches known limit" } else { " | miss NOT explained" });
        }
        s
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct AcceptanceOptions {
    pub seed: u64,
}

impl Default for AcceptanceOptions {
    fn default() -> Self {
        AcceptanceOptions { seed: 20241014 }
    }
}

pub const TITLES: [&str; 9] = [
    "closed-form numerics",
    "correct-decoding sandwich",
    "simulator vs exhaustive oracle",
    "region dual-method consistency",
    "rate-function sign properties",
    "rate-function bound consistency",
    "divergence bound sanity",
    "second-order error probability",
    "property battery",
];

/// Uniform source through BSC(0.1) observed directly.
pub fn bio_triple() -> SystemTriple {
    compose_triple(
        Pmf::bernoulli(0.5).unwrap(),
        Channel::identity(2),
        Channel::bsc(0.1).unwrap(),
        Distortion::hamming(2),
    )
    .unwrap()
}

/// Uniform source, BSC(0.1) enrollment, BSC(0.2) query, Hamming distortion.
pub fn binary_instance() -> SystemTriple {
    compose_triple(
        Pmf::bernoulli(0.5).unwrap(),
        Channel::bsc(0.1).unwrap(),
        Channel::bsc(0.2).unwrap(),
        Distortion::hamming(2),
    )
    .unwrap()
}

fn i_yz(sys: &SystemTriple) -> f64 {
    mutual_information(sys.py(), &sys.pzy().to_channel_filled()).unwrap()
}

pub fn run_criterion(id: u8, opts: &AcceptanceOptions) -> CriterionReport {
    let start = Instant::now();
    let outcome = match id {
        1 => closed_form(),
        2 => sandwich(opts),
        3 => oracle_matrix(opts),
        4 => region_consistency(),
        5 => sign_properties(),
        6 => bound_consistency(opts),
        7 => divergence_sanity(opts),
        8 => second_order(opts),
        9 => property_battery(opts.seed),
        _ => Ok((false, format!("no criterion {id}"), None)),
    };
    let (passed, summary, explained) = outcome.unwrap_or_else(|e| (false, format!("error: {e}"), None));
    let seconds = start.elapsed().as_secs_f64();
    let (passed, summary) = match id {
        1 if seconds >= 1.0 => (false, format!("{summary}; runtime {seconds:.2}s >= 1s")),
        _ => (passed, summary),
    };
    CriterionReport {
        id,
        title: TITLES.get(id as usize - 1).copied().unwrap_or("unknown"),
        passed,
        summary,
        seconds,
        explained,
    }
}

pub fn run_all(opts: &AcceptanceOptions) -> Vec<CriterionReport> {
    (1..=9).map(|id| run_criterion(id, opts)).collect()
}

type Outcome = Result<(bool, String, Option<bool>)>;

fn closed_form() -> Outcome {
    let bio = BioSystem::new(Pmf::bernoulli(0.5)?, Channel::bsc(0.1)?)?;
    let c = capacity(&bio);
    let c_oracle = std::f64::consts::LN_2 - binary_entropy(0.1);
    let v = bio.variance();
    let v_oracle = 0.09 * (9f64).ln().powi(2);
    let md = moderate_deviations_constant(&bio)?;
    let so = second_order_rate(&bio, 0.5, 100)?;
    let checks = [
        (c - c_oracle).abs() <= 1e-9,
        (v - v_oracle).abs() <= 1e-9,
        (md - 1.1507436).abs() <= 1e-6,
        so == 100.0 * c,
    ];
    Ok((
        checks.iter().all(|&b| b),
        format!(
            "C = {c:.10} (oracle {c_oracle:.10}), V = {v:.10} (oracle {v_oracle:.10}), 1/(2V) = {md:.7}, \
             second-order(0.5, n=100) - nC = {:e}",
            so - 100.0 * c
        ),
        None,
    ))
}

fn sandwich(opts: &AcceptanceOptions) -> Outcome {
    let sys = bio_triple();
    let bio = BioSystem::from_triple(&sys)?;
    let r = 0.5;
    let (el, _, _) = exponent_lower(&bio, r)?;
    let (eu, _, _) = exponent_upper(&bio, r)?;
    let mut upper_ok = true;
    let mut lower_ok = true;
    let mut explained = true;
    let mut parts = Vec::new();
    for (k, n) in [50usize, 100, 200].into_iter().enumerate() {
        let items = (n as f64 * r).exp().round();
        let cfg = SimConfig::new(sys.clone(), n, items, sys.d_plus(), 100_000, mix_seed(opts.seed, k as u64))?;
        let ml = estimate_pe(&cfg)?;
        let st = estimate_pe(&cfg.clone().with_decoder(DecoderSpec::StochasticLikelihood))?;
        let up = 2.0 * (-(n as f64) * el).exp();
        let lo = 0.5 * (-(n as f64) * eu).exp();
        let u_ok = ml.p_c_hat <= up + 3.0 * ml.ci_halfwidth;
        let l_ok = st.p_c_hat >= lo - 3.0 * st.ci_halfwidth;
        upper_ok &= u_ok;
        lower_ok &= l_ok;
        // the lower envelope only holds asymptotically; the one-shot bound
        // holds at every n
        let one_shot = (0..=40)
            .map(|g| one_shot_achievability(&bio, n, r, g as f64 * 0.005).map(|t| t.prob))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        explained &= st.p_c_hat >= one_shot - 3.0 * st.ci_halfwidth && ml.p_c_hat >= lo - 3.0 * ml.ci_halfwidth;
        parts.push(format!(
            "n={n}: ML {:.3e}±{:.1e} vs 2e^-nE_lo {up:.3e} [{}]; stochastic {:.3e}±{:.1e} vs e^-nE_up/2 {lo:.3e} [{}] (one-shot {one_shot:.3e}, ML {:.3e})",
            ml.p_c_hat,
            ml.ci_halfwidth,
            if u_ok { "ok" } else { "miss" },
            st.p_c_hat,
            st.ci_halfwidth,
            if l_ok { "ok" } else { "miss" },
            ml.p_c_hat,
        ));
    }
    let passed = upper_ok && lower_ok;
    Ok((
        passed,
        format!("E_lo = {el:.6}, E_up = {eu:.6}; {}", parts.join("; ")),
        (!passed).then_some(explained && upper_ok),
    ))
}

/// Tiny configurations used by the oracle comparison.
pub fn oracle_configs(seed: u64) -> Vec<SimConfig> {
    let base = compose_triple(
        Pmf::bernoulli(0.4).unwrap(),
        Channel::bsc(0.1).unwrap(),
        Channel::bsc(0.2).unwrap(),
        Distortion::hamming(2),
    )
    .unwrap();
    let skew = compose_triple(
        Pmf::bernoulli(0.3).unwrap(),
        Channel::new(vec![vec![0.95, 0.05], vec![0.3, 0.7]]).unwrap(),
        Channel::new(vec![vec![0.8, 0.2], vec![0.1, 0.9]]).unwrap(),
        Distortion::new(vec![vec![0.0, 1.0], vec![0.5, 0.0]]).unwrap(),
    )
    .unwrap();
    let quant = EncoderSpec::QuantizeBin {
        codebook_rate: 0.6,
        bin_rate: 0.3,
        test_channel: vec![vec![0.8, 0.2], vec![0.2, 0.8]],
    };
    let ml = DecoderSpec::MaxLikelihood;
    let st = DecoderSpec::StochasticLikelihood;
    let specs: Vec<(&SystemTriple, usize, f64, f64, DecoderSpec, Option<&EncoderSpec>, SimMode)> = vec![
        (&base, 1, 1.0, 0.0, ml, None, SimMode::Explicit),
        (&base, 2, 2.0, 0.5, ml, None, SimMode::Explicit),
        (&base, 2, 3.0, 0.0, st, None, SimMode::Explicit),
        (&base, 3, 2.0, 0.34, ml, None, SimMode::Grouped),
        (&base, 2, 3.0, 0.5, st, None, SimMode::Grouped),
        (&skew, 2, 2.0, 0.25, ml, None, SimMode::Explicit),
        (&base, 2, 2.0, 0.5, ml, Some(&quant), SimMode::Explicit),
        (&skew, 2, 2.0, 0.5, st, Some(&quant), SimMode::Explicit),
    ];
    specs
        .into_iter()
        .enumerate()
        .map(|(k, (sys, n, items, d, dec, enc, mode))| {
            let cfg = SimConfig::new(sys.clone(), n, items, d, 100_000, mix_seed(seed, 100 + k as u64))
                .unwrap()
                .with_decoder(dec)
                .with_mode(mode);
            match enc {
                Some(e) => cfg.with_encoder(e.clone()).unwrap(),
                None => cfg,
            }
        })
        .collect()
}

fn oracle_matrix(opts: &AcceptanceOptions) -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for cfg in oracle_configs(opts.seed) {
        let exact = exact_pc_bruteforce(&cfg)?;
        let est = estimate_pe(&cfg)?;
        let good = (est.p_c_hat - exact).abs() <= 3.0 * est.ci_halfwidth + 1e-12;
        ok &= good;
        parts.push(format!(
            "{}{}{} n={} M={}: {:.4} vs {:.4}{}",
            match cfg.encoder {
                EncoderSpec::Identity => "id",
                EncoderSpec::QuantizeBin { .. } => "qb",
            },
            match cfg.decoder {
                DecoderSpec::MaxLikelihood => "/ml",
                DecoderSpec::StochasticLikelihood => "/st",
            },
            if est.grouped { "/g" } else { "" },
            cfg.n,
            cfg.items,
            est.p_c_hat,
            exact,
            if good { "" } else { " MISS" }
        ));
    }
    Ok((ok, parts.join("; "), None))
}

/// `(agree, in band, disagree, contradictions)` on the grid.
pub fn region_grid_counts(sys: &SystemTriple, cfg: &RegionConfig) -> (usize, usize, usize, usize) {
    let table = hyperplane_table(sys, cfg);
    let (mut agree, mut band, mut dis, mut contra) = (0, 0, 0, 0);
    for i in 0..10 {
        for j in 0..10 {
            for &d in &[0.1, 0.15, 0.2] {
                let t = RateTriple::new(0.15 * i as f64 / 9.0, 0.7 * j as f64 / 9.0, d).unwrap();
                let m = membership_with(sys, &table, &t, cfg);
                let s = membership_sh(&table, &t, cfg.margin);
                if m.status == Status::Inside && s.status == Status::Outside {
                    contra += 1;
                }
                if s.plane_gap.abs() <= cfg.band {
                    band += 1;
                } else if m.status == s.status {
                    agree += 1;
                } else {
                    dis += 1;
                }
            }
        }
    }
    (agree, band, dis, contra)
}

fn region_consistency() -> Outcome {
    let (agree, band, dis, contra) = region_grid_counts(&binary_instance(), &RegionConfig::default());
    Ok((
        dis == 0 && contra == 0,
        format!("{agree} agree, {band} in the 0.02 band, {dis} disagree, {contra} contradictions"),
        None,
    ))
}

/// Certified-Inside and certified-Outside triples of the binary instance.
pub fn sign_triples(sys: &SystemTriple) -> (Vec<RateTriple>, Vec<RateTriple>) {
    let cfg = RegionConfig::default();
    let table = hyperplane_table(sys, &cfg);
    let (mut inside, mut outside) = (Vec::new(), Vec::new());
    let iyz = i_yz(sys);
    let ri = [0.0, 0.03, 0.06, 0.09, 0.11, iyz + 0.03, iyz + 0.1, 0.3];
    let rc = [0.05, 0.2, 0.4, std::f64::consts::LN_2];
    let ds = [0.05, 0.12, 0.3, 0.5];
    for &d in &ds {
        for &c in &rc {
            for &i in &ri {
                let t = RateTriple::new(i, c, d).unwrap();
                let m = membership_with(sys, &table, &t, &cfg);
                match m.status {
                    Status::Inside if inside.len() < 10 && m.witness.is_some() => inside.push(t),
                    Status::Outside if outside.len() < 10 && m.plane_gap > cfg.band => outside.push(t),
                    _ => {}
                }
            }
        }
    }
    (inside, outside)
}

fn sign_properties() -> Outcome {
    let sys = binary_instance();
    let (inside, outside) = sign_triples(&sys);
    let solver = ExponentSolver::new(&sys, ExponentConfig::default());
    let mut ok = inside.len() == 10 && outside.len() == 10;
    let (mut worst_in, mut min_out, mut worst_order) = (f64::NEG_INFINITY, f64::INFINITY, f64::INFINITY);
    for (t, is_inside) in inside.iter().map(|t| (t, true)).chain(outside.iter().map(|t| (t, false))) {
        let f = solver.f_exponent(t);
        let ft = solver.tilde_f(t);
        if is_inside {
            worst_in = worst_in.max(f.f_hat_raw);
            ok &= f.f_hat <= 0.05;
        } else {
            min_out = min_out.min(f.f_hat_raw);
            ok &= f.f_hat_raw > 0.0;
        }
        worst_order = worst_order.min(f.f_hat_raw - ft.f_tilde_raw);
        ok &= f.f_hat_raw >= ft.f_tilde_raw - 0.02;
    }
    Ok((
        ok,
        format!(
            "{} inside (max F = {worst_in:.2e}), {} outside (min F = {min_out:.3e}), min F - F_tilde = {worst_order:.3e}",
            inside.len(),
            outside.len()
        ),
        None,
    ))
}

fn bound_consistency(opts: &AcceptanceOptions) -> Outcome {
    let sys = binary_instance();
    let t = RateTriple::new(i_yz(&sys) + 0.1, std::f64::consts::LN_2, 0.08)?;
    let f = ExponentSolver::new(&sys, ExponentConfig::default()).f_exponent(&t);
    let mut ok = f.f_hat_raw > 0.0;
    let mut parts = vec![format!("F = {:.5}", f.f_hat_raw)];
    for (k, n) in [20usize, 50, 100].into_iter().enumerate() {
        let items = (n as f64 * t.r_i).exp().round().max(1.0);
        let cfg = SimConfig::new(sys.clone(), n, items, t.d, 100_000, mix_seed(opts.seed, 200 + k as u64))?;
        let est = estimate_pe(&cfg)?;
        let lhs = -est.p_c_hat.ln() / n as f64 + 7f64.ln() / n as f64;
        ok &= lhs >= f.f_hat_raw - 0.05;
        parts.push(format!("n={n}: p_c {:.3e}, -ln(p_c)/n + ln7/n = {lhs:.4}", est.p_c_hat));
    }
    parts.push("consistency check only, not a certification".into());
    Ok((ok, parts.join("; "), None))
}

/// Per-letter distortion of the Bayes reconstruction from `(y, z)`, weighted
/// by `P_{XYZ}`.
pub fn bayes_distortion_rv(sys: &SystemTriple) -> Result<FiniteRandomVariable> {
    let (nx, ny, nz) = (sys.nx(), sys.ny(), sys.nz());
    let (mut values, mut probs) = (Vec::new(), Vec::new());
    for y in 0..ny {
        for z in 0..nz {
            let Some(post) = sys.px_given_yz().row(y * nz + z) else { continue };
            let (xh, _) = sys.distortion().bayes_choice(post);
            for x in 0..nx {
                values.push(sys.distortion().get(x, xh));
                probs.push(sys.joint(x, y, z));
            }
        }
    }
    FiniteRandomVariable::new(values, Pmf::new(probs)?)
}

/// Exact `Pr{(1/n) Σ D_k > d}`.
fn strict_mean_tail(rv: &FiniteRandomVariable, n: usize, d: f64) -> Result<f64> {
    let sum = iid_sum(rv, n)?;
    let cut = n as f64 * d + 1e-9;
    Ok(sum.values().iter().zip(sum.probs()).filter(|(v, _)| **v > cut).map(|(_, p)| p).sum())
}

/// `sup_{λ>0} λd − ln E e^{λD}`.
fn cramer_rate(rv: &FiniteRandomVariable, d: f64) -> f64 {
    let (_, v) = golden_min(|l| rv.cgf(l) - l * d, 0.0, 60.0, 1e-10);
    (-v).max(0.0)
}

fn divergence_sanity(opts: &AcceptanceOptions) -> Outcome {
    let sys = binary_instance();
    let cfg = RegionConfig::default();
    let iyz = i_yz(&sys);
    let out = RateTriple::new(iyz + 0.1, std::f64::consts::LN_2, 0.5)?;
    let b_out = exponent_upper_bound(&sys, &out, &cfg)?;
    let near = RateTriple::new(0.02, std::f64::consts::LN_2, 0.12)?;
    let b_in = exponent_upper_bound(&sys, &near, &cfg)?;
    let n_list = [50usize, 100, 200];
    let template = SimConfig::new(sys.clone(), 50, 1.0, near.d, 100_000, mix_seed(opts.seed, 300))?;
    let fit = empirical_exponent(&template, Some(near.r_i), &n_list, DecayTarget::Error)?;
    let out_ok = b_out.value.abs() <= 1e-9;
    let in_ok = b_in.value >= fit.slope - 3.0 * fit.slope_ci;
    // the dominant error event is excess distortion of the Bayes
    // reconstruction; its exact tail has the same finite-n slope while its
    // asymptotic rate stays below the bound
    let rv = bayes_distortion_rv(&sys)?;
    let exact = n_list
        .iter()
        .map(|&n| {
            let p = strict_mean_tail(&rv, n, near.d)?;
            Ok(ExponentPoint {
                n,
                items: 1.0,
                p_hat: p,
                ci_halfwidth: 1e-3 * p,
                neg_log_p_per_n: -p.ln() / n as f64,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let exact_slope = fit_exponent(DecayTarget::Error, exact)?.slope;
    let rate = cramer_rate(&rv, near.d);
    let explained = out_ok
        && rate <= b_in.value + 1e-6
        && (fit.slope - exact_slope).abs() <= 0.15 * exact_slope + 3.0 * fit.slope_ci;
    Ok((
        out_ok && in_ok,
        format!(
            "outside: bound {:e}; just inside (0.02, ln2, 0.12): bound {:.5} vs error-exponent slope {:.5} ± {:.5}; \
             exact excess-distortion tail slope {exact_slope:.5}, its asymptotic rate {rate:.5}",
            b_out.value, b_in.value, fit.slope, fit.slope_ci
        ),
        (!(out_ok && in_ok)).then_some(explained),
    ))
}

fn second_order(opts: &AcceptanceOptions) -> Outcome {
    let sys = bio_triple();
    let bio = BioSystem::from_triple(&sys)?;
    let n = 200;
    let (c, v) = (capacity(&bio), bio.variance());
    let mut ok = true;
    let mut explained = true;
    let mut parts = Vec::new();
    for (k, eps) in [0.3, 0.5, 0.7].into_iter().enumerate() {
        let log_m = second_order_rate(&bio, eps, n)?;
        let cfg = SimConfig::new(sys.clone(), n, log_m.exp().round(), sys.d_plus(), 20_000, mix_seed(opts.seed, 400 + k as u64))?;
        let est = estimate_pe(&cfg)?;
        let hit = (est.p_e_hat - eps).abs() <= 0.10;
        ok &= hit;
        // with the (1/2)ln n third-order term
        let z = inverse_normal_cdf(eps)?;
        let third = normal_cdf(z - 0.5 * (n as f64).ln() / (n as f64 * v).sqrt());
        explained &= (est.p_e_hat - third).abs() <= 0.03;
        parts.push(format!(
            "eps={eps}: p_e {:.4}±{:.4} [{}], third-order prediction {third:.4}",
            est.p_e_hat,
            est.ci_halfwidth,
            if hit { "ok" } else { "miss" }
        ));
    }
    let _ = c;
    Ok((ok, parts.join("; "), (!ok).then_some(explained)))
}

fn random_pmf(rng: &mut ChaCha8Rng, k: usize) -> Pmf {
    let raw: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + 0.02).collect();
    let s: f64 = raw.iter().sum();
    Pmf::new(raw.into_iter().map(|v| v / s).collect()).unwrap()
}

fn random_channel(rng: &mut ChaCha8Rng, a: usize, b: usize) -> Channel {
    Channel::new((0..a).map(|_| random_pmf(rng, b).into()).collect()).unwrap()
}

fn random_system(rng: &mut ChaCha8Rng) -> SystemTriple {
    compose_triple(
        random_pmf(rng, 2),
        random_channel(rng, 2, 2),
        random_channel(rng, 2, 2),
        Distortion::hamming(2),
    )
    .unwrap()
}

/// Randomized invariants across modules with fixed seeds. Returns the count
/// of failed checks and their names.
pub fn property_failures(seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failed = Vec::new();
    let mut check = |name: &str, ok: bool| {
        if !ok {
            failed.push(name.to_string());
        }
    };
    for _ in 0..20 {
        let sys = random_system(&mut rng);
        let p = random_pmf(&mut rng, 3);
        let q = random_pmf(&mut rng, 3);
        check("kl nonnegative", kl_divergence(p.probs(), q.probs()).unwrap() >= 0.0);
        check("kl self zero", kl_divergence(p.probs(), p.probs()).unwrap().abs() < 1e-15);
        let iyz = i_yz(&sys);
        let iyx = mutual_information(sys.px(), sys.pyx()).unwrap();
        check("data processing", iyz <= iyx + 1e-12);
        let bio = BioSystem::from_triple(&sys).unwrap();
        if !bio.is_degenerate() {
            let cap = capacity(&bio);
            let mut prev = (0.0, 0.0);
            for k in 0..12 {
                let r = cap * (0.5 + 0.15 * k as f64);
                let lo = exponent_lower(&bio, r).unwrap().0;
                let up = exponent_upper(&bio, r).unwrap().0;
                check("lower exponent below upper", lo <= up + 1e-10);
                check("exponents vanish below capacity", r > cap || (lo.abs() < 1e-8 && up.abs() < 1e-8));
                check("exponents nondecreasing", lo >= prev.0 - 1e-8 && up >= prev.1 - 1e-8);
                prev = (lo, up);
            }
        }
        // corner points and time sharing
        let a = AuxScheme::identity(&sys);
        let b = AuxScheme::constant(&sys);
        let ca = corner_point(&sys, &a).unwrap();
        let cb = corner_point(&sys, &b).unwrap();
        let w = rng.random::<f64>();
        let cm = corner_point(&sys, &AuxScheme::time_share(&sys, &a, &b, w)).unwrap();
        let lin = |x: f64, y: f64| w * x + (1.0 - w) * y;
        check(
            "time sharing linear",
            (cm.r_i_max - lin(ca.r_i_max, cb.r_i_max)).abs() < 1e-10 && (cm.d_min - lin(ca.d_min, cb.d_min)).abs() < 1e-10,
        );
        // Ω at tiny θ, Jensen
        let params = ExpParams::new(
            0.1 + 3.0 * rng.random::<f64>(),
            0.05 + 0.9 * rng.random::<f64>(),
            rng.random(),
            rng.random(),
        )
        .unwrap();
        let n = 2 * 2 * 2 * 2 * 2;
        let raw: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 1e-3).collect();
        let tot: f64 = raw.iter().sum();
        let joint = AuxJoint::new([2, 2, 2, 2, 2], raw.iter().map(|v| v / tot).collect()).unwrap();
        let om = omega_cgf(&sys, &joint, &params).unwrap();
        let w_dens = crate::exponent::omega_density(&sys, &joint, &params).unwrap();
        let mean: f64 = joint.probs.iter().zip(&w_dens).map(|(a, b)| a * b).sum();
        check("jensen", om <= params.theta * mean + 1e-10);
        let tiny = ExpParams { theta: 1e-12, ..params };
        check("vanishing theta", omega_cgf(&sys, &joint, &tiny).unwrap().abs() < 1e-9);
        let sh = ShJoint::deterministic(&sys, random_channel(&mut rng, 2, 2), &[0, 1, 1, 0]).unwrap();
        let tj = tilted_sh_joint(&sys, &sh, 3.0 * rng.random::<f64>(), params.mu, params.beta).unwrap();
        check("tilt normalizes", (tj.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
    // simulator: determinism, nesting in D, decoder order
    let sys = binary_instance();
    let cfg = SimConfig::new(sys.clone(), 4, 5.0, 0.25, 4000, seed).unwrap();
    let a = estimate_pe(&cfg).unwrap();
    check("simulation deterministic", a == estimate_pe(&cfg).unwrap());
    let looser = estimate_pe(&SimConfig {
        distortion_level: 0.5,
        ..cfg.clone()
    })
    .unwrap();
    check("error nonincreasing in D", looser.p_e_hat <= a.p_e_hat);
    let st = estimate_pe(&cfg.clone().with_decoder(DecoderSpec::StochasticLikelihood)).unwrap();
    check(
        "ML dominates stochastic",
        a.p_c_hat >= st.p_c_hat - 3.0 * (a.ci_halfwidth.powi(2) + st.ci_halfwidth.powi(2)).sqrt(),
    );
    failed
}

fn property_battery(seed: u64) -> Outcome {
    let failed = property_failures(seed);
    Ok((
        failed.is_empty(),
        if failed.is_empty() {
            "all randomized invariants hold".into()
        } else {
            format!("failed: {}", failed.join(", "))
        },
        None,
    ))
}
