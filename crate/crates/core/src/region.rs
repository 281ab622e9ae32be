//! The rate-distortion region and its supporting-hyperplane description.
//!
//! A scheme is an auxiliary channel `q(u|y)` plus a reconstruction map
//! `φ(u,z)`. It dominates every triple with
//!
//! ```text
//! Rⁱ ≤ I(U;Z),   Rᶜ − Rⁱ ≥ I(U;Y|Z),   D ≥ E d(X, φ(U,Z))
//! ```
//!
//! The same region is the intersection over `(μ,β) ∈ [0,1]²` of
//!
//! ```text
//! μ̄β̄Rᶜ − μ̄Rⁱ + μD ≥ R(μ,β) = min_{|U| ≤ |Y|} μ̄β̄ I(YZ;U) − μ̄ I(Z;U) + μ E d
//! ```
//!
//! Inside verdicts carry an explicit scheme; Outside verdicts carry a
//! hyperplane whose estimated intercept exceeds the triple's combination.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::prob::{compose_triple, kl_divergence, Channel, Pmf, SystemTriple};
use crate::search::{logits_of, nelder_mead, simplex_grid, softmax, NmOptions};

/// Witnesses whose re-evaluated slack is at least this are accepted.
pub const WITNESS_TOL: f64 = 1e-12;

/// Auxiliary channel `Y → U` with a deterministic reconstruction `φ(u,z)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuxScheme {
    pub u_size: usize,
    pub q_u_given_y: Channel,
    /// `phi[u][z]` is the reconstruction symbol.
    pub phi: Vec<Vec<usize>>,
}

impl AuxScheme {
    pub fn new(sys: &SystemTriple, q_u_given_y: Channel, phi: Vec<Vec<usize>>) -> Result<Self> {
        if q_u_given_y.in_size() != sys.ny() {
            return Err(Error::dim("auxiliary channel input", sys.ny(), q_u_given_y.in_size()));
        }
        let u_size = q_u_given_y.out_size();
        if phi.len() != u_size {
            return Err(Error::dim("reconstruction map rows", u_size, phi.len()));
        }
        for row in &phi {
            if row.len() != sys.nz() {
                return Err(Error::dim("reconstruction map columns", sys.nz(), row.len()));
            }
            if let Some(&bad) = row.iter().find(|&&v| v >= sys.nxhat()) {
                return Err(Error::dim("reconstruction symbol", sys.nxhat(), bad));
            }
        }
        Ok(AuxScheme {
            u_size,
            q_u_given_y,
            phi,
        })
    }

    /// Auxiliary channel with the per-cell Bayes reconstruction.
    pub fn with_bayes_phi(sys: &SystemTriple, q_u_given_y: Channel) -> Result<Self> {
        let nu = q_u_given_y.out_size();
        let flat = bayes_phi(sys, q_u_given_y.flat(), nu);
        let phi = flat.chunks(sys.nz()).map(|c| c.to_vec()).collect();
        Self::new(sys, q_u_given_y, phi)
    }

    /// `U` constant.
    pub fn constant(sys: &SystemTriple) -> Self {
        Self::with_bayes_phi(sys, Channel::constant(sys.ny(), &Pmf::point_mass(1, 0)))
            .expect("constant scheme")
    }

    /// `U = Y`.
    pub fn identity(sys: &SystemTriple) -> Self {
        Self::with_bayes_phi(sys, Channel::identity(sys.ny())).expect("identity scheme")
    }

    /// Time sharing: with probability `w` run `a`, otherwise `b`, on
    /// disjoint label sets.
    pub fn time_share(sys: &SystemTriple, a: &AuxScheme, b: &AuxScheme, w: f64) -> Self {
        let nu = a.u_size + b.u_size;
        let mut rows = Vec::with_capacity(sys.ny());
        for y in 0..sys.ny() {
            let mut row: Vec<f64> = a.q_u_given_y.row(y).iter().map(|v| w * v).collect();
            row.extend(b.q_u_given_y.row(y).iter().map(|v| (1.0 - w) * v));
            rows.push(row);
        }
        let mut phi = a.phi.clone();
        phi.extend(b.phi.iter().cloned());
        let q = Channel::from_flat(sys.ny(), nu, rows.concat()).expect("mixture rows");
        AuxScheme {
            u_size: nu,
            q_u_given_y: q,
            phi,
        }
    }

    fn phi_flat(&self) -> Vec<usize> {
        self.phi.concat()
    }
}

/// `(Rⁱ, Rᶜ, D)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct RateTriple {
    pub r_i: f64,
    pub r_c: f64,
    pub d: f64,
}

impl RateTriple {
    pub fn new(r_i: f64, r_c: f64, d: f64) -> Result<Self> {
        for (name, v) in [("r_i", r_i), ("r_c", r_c), ("d", d)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::domain(name, v, ">= 0 and finite"));
            }
        }
        Ok(RateTriple { r_i, r_c, d })
    }

    /// `μ̄β̄Rᶜ − μ̄Rⁱ + μD`.
    pub fn combination(&self, mu: f64, beta: f64) -> f64 {
        (1.0 - mu) * (1.0 - beta) * self.r_c - (1.0 - mu) * self.r_i + mu * self.d
    }
}

/// The three region coordinates a scheme achieves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Corner {
    /// `I(U;Z)`, the largest identification rate.
    pub r_i_max: f64,
    /// `I(U;Y|Z)`, the smallest `Rᶜ − Rⁱ`.
    pub r_c_min_minus_r_i: f64,
    /// `E d(X, X̂)`.
    pub d_min: f64,
}

impl Corner {
    /// Smallest of the three constraint slacks against `t`; nonnegative iff
    /// the corner dominates the triple.
    pub fn slack(&self, t: &RateTriple) -> f64 {
        (self.r_i_max - t.r_i)
            .min(t.r_c - t.r_i - self.r_c_min_minus_r_i)
            .min(t.d - self.d_min)
    }
}

#[derive(Debug, Clone, Copy)]
struct Stats {
    i_uz: f64,
    i_uy: f64,
    dist: f64,
}

impl Stats {
    fn corner(&self) -> Corner {
        Corner {
            r_i_max: self.i_uz,
            r_c_min_minus_r_i: (self.i_uy - self.i_uz).max(0.0),
            d_min: self.dist,
        }
    }
}

fn plogp_sum(v: impl Iterator<Item = f64>) -> f64 {
    v.filter(|&p| p > 0.0).map(|p| -p * p.ln()).sum()
}

/// Reconstruction minimizing `Σ_x P(x,u,z) d(x,x̂)` in every cell, ties to
/// the lowest symbol. Indexed `u * |Z| + z`.
fn bayes_phi(sys: &SystemTriple, q: &[f64], nu: usize) -> Vec<usize> {
    let (nx, ny, nz) = (sys.nx(), sys.ny(), sys.nz());
    let mut phi = vec![0; nu * nz];
    let mut w = vec![0.0; nx];
    for u in 0..nu {
        for z in 0..nz {
            for (x, wx) in w.iter_mut().enumerate() {
                *wx = (0..ny).map(|y| sys.joint(x, y, z) * q[y * nu + u]).sum();
            }
            phi[u * nz + z] = sys.distortion().bayes_choice(&w).0;
        }
    }
    phi
}

/// Information and distortion coordinates of `q` (flat `y*nu + u`), with the
/// Bayes reconstruction when `phi` is `None`.
fn scheme_stats(sys: &SystemTriple, q: &[f64], nu: usize, phi: Option<&[usize]>) -> Stats {
    let (nx, ny, nz) = (sys.nx(), sys.ny(), sys.nz());
    let d = sys.distortion();
    let mut h_uz = 0.0;
    let mut pu = vec![0.0; nu];
    let mut dist = 0.0;
    let mut w = vec![0.0; nx];
    for u in 0..nu {
        for z in 0..nz {
            let mut puz = 0.0;
            for y in 0..ny {
                puz += q[y * nu + u] * sys.pyz(y, z);
            }
            pu[u] += puz;
            if puz > 0.0 {
                h_uz -= puz * puz.ln();
            } else {
                continue;
            }
            for (x, wx) in w.iter_mut().enumerate() {
                let mut s = 0.0;
                for y in 0..ny {
                    s += sys.joint(x, y, z) * q[y * nu + u];
                }
                *wx = s;
            }
            dist += match phi {
                Some(phi) => {
                    let xh = phi[u * nz + z];
                    w.iter().enumerate().map(|(x, &wx)| wx * d.get(x, xh)).sum::<f64>()
                }
                None => d.bayes_choice(&w).1,
            };
        }
    }
    let h_u = plogp_sum(pu.iter().copied());
    let h_z = sys.pz().entropy();
    let h_u_given_y: f64 = (0..ny)
        .map(|y| sys.py().get(y) * plogp_sum(q[y * nu..(y + 1) * nu].iter().copied()))
        .sum();
    Stats {
        i_uz: (h_u + h_z - h_uz).max(0.0),
        i_uy: (h_u - h_u_given_y).max(0.0),
        dist,
    }
}

/// `(I(U;Z), I(U;Y|Z), E d)` for the joint induced by the scheme.
pub fn corner_point(sys: &SystemTriple, scheme: &AuxScheme) -> Result<Corner> {
    if scheme.q_u_given_y.in_size() != sys.ny() {
        return Err(Error::dim("auxiliary channel input", sys.ny(), scheme.q_u_given_y.in_size()));
    }
    if scheme.phi.len() != scheme.u_size || scheme.phi.iter().any(|r| r.len() != sys.nz()) {
        return Err(Error::dim("reconstruction map", scheme.u_size * sys.nz(), scheme.phi.concat().len()));
    }
    let phi = scheme.phi_flat();
    Ok(scheme_stats(sys, scheme.q_u_given_y.flat(), scheme.u_size, Some(&phi)).corner())
}

/// Tunables for the region searches.
#[derive(Debug, Clone, Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegionConfig {
    /// Step of the `(μ,β)` grid.
    pub plane_step: f64,
    /// Budget of grid points over auxiliary channels per hyperplane.
    pub q_grid_points: usize,
    /// Local polishes started from the best grid points.
    pub polish_starts: usize,
    pub polish_evals: usize,
    /// A hyperplane certifies Outside only when violated by more than this.
    pub margin: f64,
    /// Half-width of the band around the boundary where verdicts may differ.
    pub band: f64,
    /// Auxiliary alphabet size for Inside witnesses; `|Y| + 2` when absent.
    pub witness_u_size: Option<usize>,
    pub witness_polish_evals: usize,
}

impl Default for RegionConfig {
    fn default() -> Self {
        RegionConfig {
            plane_step: 0.05,
            q_grid_points: 4096,
            polish_starts: 3,
            polish_evals: 600,
            margin: 1e-3,
            band: 0.02,
            witness_u_size: None,
            witness_polish_evals: 2000,
        }
    }
}

impl RegionConfig {
    /// Lighter budgets for inner loops that evaluate many candidate laws.
    pub fn coarse() -> Self {
        RegionConfig {
            plane_step: 0.1,
            q_grid_points: 400,
            polish_starts: 1,
            polish_evals: 200,
            ..Default::default()
        }
    }
}

fn q_seeds(ny: usize, nu: usize, budget: usize) -> Vec<Vec<f64>> {
    let mut steps = 1;
    let count = |s: usize| {
        let per_row = simplex_grid(nu, s).len() as f64;
        per_row.powi(ny as i32)
    };
    while count(steps + 1) <= budget as f64 {
        steps += 1;
    }
    let rows = simplex_grid(nu, steps);
    let mut out = Vec::new();
    let mut idx = vec![0usize; ny];
    loop {
        out.push(idx.iter().flat_map(|&i| rows[i].iter().copied()).collect());
        let mut k = 0;
        loop {
            if k == ny {
                return out;
            }
            idx[k] += 1;
            if idx[k] < rows.len() {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

fn q_from_logits(theta: &[f64], ny: usize, nu: usize) -> Vec<f64> {
    (0..ny)
        .flat_map(|y| softmax(&theta[y * nu..(y + 1) * nu]))
        .collect()
}

/// Minimizes `f(q)` over auxiliary channels `Y → U` with `|U| = nu`: grid
/// seeds, then Nelder–Mead on row logits from the best few.
fn minimize_over_q(
    ny: usize,
    nu: usize,
    cfg: &RegionConfig,
    extra_seeds: &[Vec<f64>],
    f: impl Fn(&[f64]) -> f64,
) -> (Vec<f64>, f64) {
    let mut scored: Vec<(f64, Vec<f64>)> = q_seeds(ny, nu, cfg.q_grid_points)
        .into_iter()
        .chain(extra_seeds.iter().cloned())
        .map(|q| (f(&q), q))
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut best = (scored[0].1.clone(), scored[0].0);
    for (_, q0) in scored.iter().take(cfg.polish_starts) {
        let (theta, v) = nelder_mead(
            |t| f(&q_from_logits(t, ny, nu)),
            &logits_of(q0),
            NmOptions {
                max_evals: cfg.polish_evals,
                initial_step: 1.0,
                f_tol: 1e-13,
            },
        );
        if v < best.1 {
            best = (q_from_logits(&theta, ny, nu), v);
        }
    }
    best
}

/// One supporting hyperplane with its minimizing scheme.
#[derive(Debug, Clone, Serialize)]
pub struct Plane {
    pub mu: f64,
    pub beta: f64,
    /// Estimated `R(μ,β)`; an upper estimate of the true minimum.
    pub value: f64,
    pub scheme: AuxScheme,
    pub corner: Corner,
}

fn plane_objective(sys: &SystemTriple, mu: f64, beta: f64, q: &[f64], nu: usize) -> f64 {
    let s = scheme_stats(sys, q, nu, None);
    let mb = 1.0 - mu;
    mb * (1.0 - beta) * s.i_uy - mb * s.i_uz + mu * s.dist
}

fn check_unit(name: &str, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::domain(name, v, "[0,1]"));
    }
    Ok(())
}

/// `R(μ,β)` estimated over `|U| = |Y|` with the Bayes reconstruction, which
/// is optimal for the distortion term at any fixed auxiliary channel.
pub fn hyperplane_value(sys: &SystemTriple, mu: f64, beta: f64, cfg: &RegionConfig) -> Result<Plane> {
    check_unit("mu", mu)?;
    check_unit("beta", beta)?;
    Ok(plane_with_seeds(sys, mu, beta, cfg, &[]))
}

fn plane_with_seeds(
    sys: &SystemTriple,
    mu: f64,
    beta: f64,
    cfg: &RegionConfig,
    seeds: &[Vec<f64>],
) -> Plane {
    let (ny, nu) = (sys.ny(), sys.ny());
    let (q, value) = minimize_over_q(ny, nu, cfg, seeds, |q| plane_objective(sys, mu, beta, q, nu));
    let scheme = AuxScheme::with_bayes_phi(sys, Channel::from_flat(ny, nu, q).expect("softmax rows"))
        .expect("scheme dims");
    let corner = corner_point(sys, &scheme).expect("scheme dims");
    Plane {
        mu,
        beta,
        value,
        scheme,
        corner,
    }
}

/// Hyperplanes on the `(μ,β)` grid for one system.
#[derive(Debug, Clone, Serialize)]
pub struct HyperplaneTable {
    pub planes: Vec<Plane>,
}

fn unit_grid(step: f64) -> Vec<f64> {
    let k = (1.0 / step).round().max(1.0) as usize;
    (0..=k).map(|i| i as f64 / k as f64).collect()
}

/// Evaluates every plane of the grid. Results do not depend on the worker count.
pub fn hyperplane_table(sys: &SystemTriple, cfg: &RegionConfig) -> HyperplaneTable {
    use rayon::prelude::*;
    let grid = unit_grid(cfg.plane_step);
    let pairs: Vec<(f64, f64)> = grid
        .iter()
        .flat_map(|&m| grid.iter().map(move |&b| (m, b)))
        .collect();
    let seeds = [
        Channel::identity(sys.ny()).flat().to_vec(),
        Channel::constant(sys.ny(), &Pmf::point_mass(sys.ny(), 0))
            .flat()
            .to_vec(),
    ];
    let planes = pairs
        .par_iter()
        .map(|&(m, b)| plane_with_seeds(sys, m, b, cfg, &seeds))
        .collect();
    HyperplaneTable { planes }
}

impl HyperplaneTable {
    /// The most violated plane: `max (R(μ,β) − combination)`.
    pub fn worst_gap(&self, t: &RateTriple) -> (f64, &Plane) {
        let mut best: Option<(f64, &Plane)> = None;
        for p in &self.planes {
            let g = p.value - t.combination(p.mu, p.beta);
            if best.is_none_or(|(v, _)| g > v) {
                best = Some((g, p));
            }
        }
        best.expect("nonempty table")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Status {
    Inside,
    Outside,
    Unknown,
}

/// Separating hyperplane evidence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HyperplaneCertificate {
    pub mu: f64,
    pub beta: f64,
    pub intercept: f64,
    pub combination: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MembershipVerdict {
    pub status: Status,
    pub witness: Option<AuxScheme>,
    pub certificate: Option<HyperplaneCertificate>,
    /// Witness slack when Inside, violation when Outside, largest plane
    /// gap otherwise.
    pub slack: f64,
    /// `max (R(μ,β) − combination)` over the grid.
    pub plane_gap: f64,
    pub warnings: Vec<String>,
}

/// Outside iff some grid plane is violated by more than `margin`.
pub fn membership_sh(table: &HyperplaneTable, t: &RateTriple, margin: f64) -> MembershipVerdict {
    let (gap, plane) = table.worst_gap(t);
    let outside = gap > margin;
    MembershipVerdict {
        status: if outside { Status::Outside } else { Status::Inside },
        witness: None,
        certificate: outside.then(|| HyperplaneCertificate {
            mu: plane.mu,
            beta: plane.beta,
            intercept: plane.value,
            combination: t.combination(plane.mu, plane.beta),
        }),
        slack: gap,
        plane_gap: gap,
        warnings: Vec::new(),
    }
}

/// Best `w ∈ [0,1]` for `max_w min_k (w·a_k + (1−w)·b_k)`.
pub fn best_mix(a: [f64; 3], b: [f64; 3]) -> (f64, f64) {
    let val = |w: f64| (0..3).map(|k| w * a[k] + (1.0 - w) * b[k]).fold(f64::INFINITY, f64::min);
    let mut cands = vec![0.0, 1.0];
    for i in 0..3 {
        for j in i + 1..3 {
            let den = (a[i] - b[i]) - (a[j] - b[j]);
            if den.abs() > 1e-15 {
                let w = (b[j] - b[i]) / den;
                if (0.0..=1.0).contains(&w) {
                    cands.push(w);
                }
            }
        }
    }
    cands
        .into_iter()
        .map(|w| (w, val(w)))
        .fold((0.0, f64::NEG_INFINITY), |x, y| if y.1 > x.1 { y } else { x })
}

fn slacks(c: &Corner, t: &RateTriple) -> [f64; 3] {
    [
        c.r_i_max - t.r_i,
        t.r_c - t.r_i - c.r_c_min_minus_r_i,
        t.d - c.d_min,
    ]
}

fn dedup_candidates(sys: &SystemTriple, table: &HyperplaneTable) -> Vec<(AuxScheme, Corner)> {
    let mut out: Vec<(AuxScheme, Corner)> = Vec::new();
    let base = [AuxScheme::constant(sys), AuxScheme::identity(sys)];
    for s in base.iter().chain(table.planes.iter().map(|p| &p.scheme)) {
        let c = corner_point(sys, s).expect("scheme dims");
        let dup = out.iter().any(|(_, o)| {
            (o.r_i_max - c.r_i_max).abs() < 1e-9
                && (o.r_c_min_minus_r_i - c.r_c_min_minus_r_i).abs() < 1e-9
                && (o.d_min - c.d_min).abs() < 1e-9
        });
        if !dup {
            out.push((s.clone(), c));
        }
    }
    out
}

/// Searches for a scheme dominating `t`. Returns the best scheme and its
/// re-evaluated slack.
pub fn find_witness(
    sys: &SystemTriple,
    table: &HyperplaneTable,
    t: &RateTriple,
    cfg: &RegionConfig,
) -> (AuxScheme, f64) {
    let u_cap = cfg.witness_u_size.unwrap_or(sys.ny() + 2);
    let cands = dedup_candidates(sys, table);
    let mut best: Option<(AuxScheme, f64)> = None;
    let consider = |s: AuxScheme, best: &mut Option<(AuxScheme, f64)>| {
        let v = corner_point(sys, &s).expect("scheme dims").slack(t);
        if best.as_ref().is_none_or(|(_, b)| v > *b) {
            *best = Some((s, v));
        }
    };
    for (s, _) in &cands {
        if s.u_size <= u_cap {
            consider(s.clone(), &mut best);
        }
    }
    let mut mixes: Vec<(f64, usize, usize, f64)> = Vec::new();
    for i in 0..cands.len() {
        for j in i + 1..cands.len() {
            if cands[i].0.u_size + cands[j].0.u_size > u_cap {
                continue;
            }
            let (w, v) = best_mix(slacks(&cands[i].1, t), slacks(&cands[j].1, t));
            mixes.push((v, i, j, w));
        }
    }
    mixes.sort_by(|a, b| b.0.total_cmp(&a.0));
    for &(_, i, j, w) in mixes.iter().take(4) {
        consider(AuxScheme::time_share(sys, &cands[i].0, &cands[j].0, w), &mut best);
    }
    let (scheme, slack) = best.expect("at least the constant scheme");
    if slack >= 0.0 {
        return (scheme, slack);
    }
    // local polish of max-min slack over |U| = u_cap
    let ny = sys.ny();
    let nu = u_cap;
    let pad = |s: &AuxScheme| -> Vec<f64> {
        let mut q = vec![0.0; ny * nu];
        for y in 0..ny {
            for u in 0..s.u_size.min(nu) {
                q[y * nu + u] = s.q_u_given_y.get(y, u);
            }
        }
        q
    };
    let mut starts: Vec<Vec<f64>> = vec![pad(&scheme)];
    for &(_, i, j, w) in mixes.iter().take(2) {
        starts.push(pad(&AuxScheme::time_share(sys, &cands[i].0, &cands[j].0, w)));
    }
    let objective = |q: &[f64]| -scheme_stats(sys, q, nu, None).corner().slack(t);
    let mut best = (scheme, slack);
    for q0 in starts {
        let (theta, _) = nelder_mead(
            |th| objective(&q_from_logits(th, ny, nu)),
            &logits_of(&q0),
            NmOptions {
                max_evals: cfg.witness_polish_evals,
                initial_step: 1.0,
                f_tol: 1e-14,
            },
        );
        let q = q_from_logits(&theta, ny, nu);
        let s = AuxScheme::with_bayes_phi(sys, Channel::from_flat(ny, nu, q).expect("rows"))
            .expect("dims");
        let v = corner_point(sys, &s).expect("dims").slack(t);
        if v > best.1 {
            best = (s, v);
        }
        if best.1 >= 0.0 {
            break;
        }
    }
    best
}

/// Inside with a verified witness, Outside with a violated hyperplane, or Unknown.
pub fn membership_with(
    sys: &SystemTriple,
    table: &HyperplaneTable,
    t: &RateTriple,
    cfg: &RegionConfig,
) -> MembershipVerdict {
    let sh = membership_sh(table, t, cfg.margin);
    let (scheme, slack) = find_witness(sys, table, t, cfg);
    let mut warnings = Vec::new();
    if slack >= -WITNESS_TOL {
        if sh.status == Status::Outside {
            warnings.push(format!(
                "witness found although plane (mu={}, beta={}) appears violated by {:.3e}",
                sh.certificate.unwrap().mu,
                sh.certificate.unwrap().beta,
                sh.plane_gap
            ));
        }
        return MembershipVerdict {
            status: Status::Inside,
            witness: Some(scheme),
            certificate: None,
            slack,
            plane_gap: sh.plane_gap,
            warnings,
        };
    }
    if sh.status == Status::Outside {
        return sh;
    }
    MembershipVerdict {
        status: Status::Unknown,
        witness: None,
        certificate: None,
        slack: sh.plane_gap,
        plane_gap: sh.plane_gap,
        warnings,
    }
}

/// [`membership_with`] after building the hyperplane table.
pub fn membership(sys: &SystemTriple, t: &RateTriple, cfg: &RegionConfig) -> MembershipVerdict {
    let table = hyperplane_table(sys, cfg);
    membership_with(sys, &table, t, cfg)
}

/// Upper estimate of the excess-distortion exponent: the smallest
/// `D(Q_XYZ ‖ P_XYZ)` found over laws `Q` whose region excludes the triple.
#[derive(Debug, Clone, Serialize)]
pub struct DivergenceBound {
    #[serde(serialize_with = "crate::cli::ser_f64")]
    pub value: f64,
    pub law: Option<crate::prob::SystemDoc>,
    pub approximate: bool,
    pub warnings: Vec<String>,
}

fn mix_vec(a: &[f64], b: &[f64], t: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| (1.0 - t) * x + t * y).collect()
}

fn rows(ch: &Channel) -> Vec<Vec<f64>> {
    ch.clone().into()
}

fn mix_rows(a: &Channel, b: &[Vec<f64>], t: f64) -> Vec<Vec<f64>> {
    rows(a).iter().zip(b).map(|(r, s)| mix_vec(r, s, t)).collect()
}

/// One direction of departure from `P`: targets for each factor.
#[derive(Debug, Clone)]
struct Direction {
    px: Vec<f64>,
    pyx: Vec<Vec<f64>>,
    pzx: Vec<Vec<f64>>,
}

fn law_along(sys: &SystemTriple, dir: &Direction, t: f64) -> Result<SystemTriple> {
    compose_triple(
        Pmf::new(mix_vec(sys.px().probs(), &dir.px, t))?,
        Channel::new(mix_rows(sys.pyx(), &dir.pyx, t))?,
        Channel::new(mix_rows(sys.pzx(), &dir.pzx, t))?,
        sys.distortion().clone(),
    )
}

fn directions(sys: &SystemTriple) -> Vec<Direction> {
    let (nx, ny, nz) = (sys.nx(), sys.ny(), sys.nz());
    let px = sys.px().probs().to_vec();
    let pyx = rows(sys.pyx());
    let pzx = rows(sys.pzx());
    let mut out = Vec::new();
    for x in 0..nx {
        out.push(Direction {
            px: Pmf::point_mass(nx, x).probs().to_vec(),
            pyx: pyx.clone(),
            pzx: pzx.clone(),
        });
    }
    let uni_z = vec![vec![1.0 / nz as f64; nz]; nx];
    let uni_y = vec![vec![1.0 / ny as f64; ny]; nx];
    let marg_z = vec![sys.pz().probs().to_vec(); nx];
    out.push(Direction { px: px.clone(), pyx: pyx.clone(), pzx: uni_z.clone() });
    out.push(Direction { px: px.clone(), pyx: pyx.clone(), pzx: marg_z });
    out.push(Direction { px: px.clone(), pyx: uni_y.clone(), pzx: pzx.clone() });
    out.push(Direction { px: px.clone(), pyx: uni_y, pzx: uni_z });
    for y in 0..ny {
        out.push(Direction {
            px: px.clone(),
            pyx: vec![Pmf::point_mass(ny, y).probs().to_vec(); nx],
            pzx: pzx.clone(),
        });
    }
    out
}

fn is_outside(law: &SystemTriple, t: &RateTriple, cfg: &RegionConfig) -> bool {
    let table = hyperplane_table(law, cfg);
    membership_sh(&table, t, cfg.margin).status == Status::Outside
}

/// Searches rays from `P` toward a fixed set of laws (point-mass sources,
/// uninformative channels, deterministic observations). Along each ray the
/// first Outside point is located by a coarse scan and bisection using light
/// hyperplane tables, then confirmed with the full table.
pub fn exponent_upper_bound(
    sys: &SystemTriple,
    t: &RateTriple,
    cfg: &RegionConfig,
) -> Result<DivergenceBound> {
    if sys.nx() > 3 || sys.ny() > 3 || sys.nz() > 3 {
        return Err(Error::Budget {
            terms: (sys.nx() * sys.ny() * sys.nz()) as f64,
            limit: 27.0,
        });
    }
    let table = hyperplane_table(sys, cfg);
    if membership_sh(&table, t, cfg.margin).status == Status::Outside {
        return Ok(DivergenceBound {
            value: 0.0,
            law: Some(sys.to_doc()),
            approximate: false,
            warnings: Vec::new(),
        });
    }
    let coarse = RegionConfig::coarse();
    let mut best: Option<(f64, SystemTriple)> = None;
    let mut warnings = Vec::new();
    for dir in directions(sys) {
        let scan = 16;
        let mut prev = 0.0;
        let mut hit = None;
        for k in 1..=scan {
            let s = k as f64 / scan as f64;
            let law = law_along(sys, &dir, s)?;
            if is_outside(&law, t, &coarse) {
                hit = Some(s);
                break;
            }
            prev = s;
        }
        let Some(mut hi) = hit else { continue };
        let mut lo = prev;
        for _ in 0..12 {
            let mid = 0.5 * (lo + hi);
            if is_outside(&law_along(sys, &dir, mid)?, t, &coarse) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        // confirm with the full table, stepping outward if needed
        let mut confirmed = None;
        let mut s = hi;
        for _ in 0..8 {
            let law = law_along(sys, &dir, s)?;
            if is_outside(&law, t, cfg) {
                confirmed = Some(law);
                break;
            }
            s = (s + (1.0 - s) * 0.25).min(1.0);
            if s >= 1.0 {
                let law = law_along(sys, &dir, 1.0)?;
                if is_outside(&law, t, cfg) {
                    confirmed = Some(law);
                }
                break;
            }
        }
        let Some(law) = confirmed else { continue };
        let div = kl_divergence(law.joint_flat(), sys.joint_flat())?;
        if best.as_ref().is_none_or(|(v, _)| div < *v) {
            best = Some((div, law));
        }
    }
    match best {
        Some((value, law)) => Ok(DivergenceBound {
            value,
            law: Some(law.to_doc()),
            approximate: true,
            warnings,
        }),
        None => {
            warnings.push("no law excluding the triple was found along the search rays".into());
            Ok(DivergenceBound {
                value: f64::INFINITY,
                law: None,
                approximate: true,
                warnings,
            })
        }
    }
}

/// Frontier sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FrontierPoint {
    pub r_i: f64,
    pub r_c: f64,
}

/// Smallest `Rᶜ` at each of `n_points` identification rates in
/// `[0, I(Y;Z)]`, with distortion at most `d_fixed`, over the table's
/// schemes and pairwise time sharing between them. Made nondecreasing by a
/// running maximum.
pub fn boundary_trace(
    sys: &SystemTriple,
    d_fixed: f64,
    n_points: usize,
    cfg: &RegionConfig,
) -> Result<Vec<FrontierPoint>> {
    if n_points < 2 {
        return Err(Error::domain("n_points", n_points as f64, ">= 2"));
    }
    let table = hyperplane_table(sys, cfg);
    let mut corners: Vec<Corner> = dedup_candidates(sys, &table).into_iter().map(|c| c.1).collect();
    // dense family of |U| = |Y| channels
    for q in q_seeds(sys.ny(), sys.ny(), cfg.q_grid_points.min(1681)) {
        corners.push(scheme_stats(sys, &q, sys.ny(), None).corner());
    }
    let i_max = corners.iter().map(|c| c.r_i_max).fold(0.0, f64::max);
    let mut out = Vec::with_capacity(n_points);
    let mut running = 0.0f64;
    for k in 0..n_points {
        let r_i = i_max * k as f64 / (n_points - 1) as f64;
        let best = frontier_at(&corners, r_i, d_fixed);
        let r_c = match best {
            Some(b) => r_i + b,
            None => f64::INFINITY,
        };
        running = running.max(r_c);
        out.push(FrontierPoint { r_i, r_c: running });
    }
    Ok(out)
}

/// `min b` over single corners and pairwise mixtures with `a ≥ r_i`, `e ≤ d`.
fn frontier_at(corners: &[Corner], r_i: f64, d: f64) -> Option<f64> {
    let tol = 1e-12;
    let mut best: Option<f64> = None;
    let mut take = |v: f64| {
        if best.is_none_or(|b| v < b) {
            best = Some(v);
        }
    };
    for c in corners {
        if c.r_i_max >= r_i - tol && c.d_min <= d + tol {
            take(c.r_c_min_minus_r_i);
        }
    }
    for (i, a) in corners.iter().enumerate() {
        for b in &corners[i + 1..] {
            // feasible w interval from the two linear constraints
            let (mut lo, mut hi) = (0.0f64, 1.0f64);
            for (ca, cb, rhs, ge) in [(a.r_i_max, b.r_i_max, r_i, true), (a.d_min, b.d_min, d, false)] {
                // w·ca + (1−w)·cb ≥ rhs (ge) or ≤ rhs
                let slope = ca - cb;
                let need = rhs - cb;
                let (s, n) = if ge { (slope, need) } else { (-slope, -need) };
                if s.abs() < 1e-15 {
                    if n > tol {
                        lo = 2.0;
                    }
                } else if s > 0.0 {
                    lo = lo.max(n / s);
                } else {
                    hi = hi.min(n / s);
                }
            }
            if lo <= hi {
                let v = |w: f64| w * a.r_c_min_minus_r_i + (1.0 - w) * b.r_c_min_minus_r_i;
                take(v(lo).min(v(hi)));
            }
        }
    }
    best
}
