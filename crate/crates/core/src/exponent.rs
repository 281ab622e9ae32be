//! Strong-converse rate function and its tilted lower bound.
//!
//! For a joint `Q` over `X×Y×Z×U×X̂` the density is
//!
//! ```text
//! ω(Q) = ln Q_Y/P_Y + ln Q_{Z|YU}/P_{Z|Y} + ln Q_{X|YZU}/P_{X|YZ} + ln Q_{XY|ZUX̂}/Q_{XY|ZU}
//!        + α( μ̄β̄ ln Q_{YZ|U}/P_{YZ} + μ̄β ln Q_Z/Q_{Z|U} + μ d(x,x̂) )
//! Ω(Q) = −ln E_Q[exp(−θω)]
//! F^{α,θ,μ,β} = (min_Q Ω(Q) − θα(μ̄(β̄Rᶜ − Rⁱ) + μD)) / (1 + 5θ + θαμ̄(3−β))
//! ```
//!
//! The first four log-ratios collapse to `ln Q / (P_XYZ · Q_{U|Y} · Q_{X̂|ZU})`.
//!
//! The tilted counterpart restricts to laws `P_XYZ · q(u|y) · k(x̂|z,u)` with
//! `|U| ≤ |Y|`:
//!
//! ```text
//! ω̃ = μ̄β̄ ln P_{YZ|U}/P_{YZ} + μ̄β ln P_Z/P_{Z|U} + μ d(x,x̂)
//! F̃^{λ,μ,β} = (min Ω̃ − λ(μ̄(β̄Rᶜ − Rⁱ) + μD)) / (6 + λμ̄(4 + 6β))
//! ```
//!
//! `min_Q Ω(Q)` is `−inf` whenever `θ(1 + αμ̄β̄) > 1`: shrinking a single
//! `Q_{Z|YU}` entry drives one summand of `E_Q[exp(−θω)]` to infinity. The
//! outer search therefore parameterizes `θ = s / (1 + αμ̄β̄)` with `s ∈ (0, 1]`.
//! All minima over `Q` are local searches, so reported values of `F` are
//! upper estimates of the true rate function.

use std::collections::HashMap;
use std::sync::Mutex;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::prob::{log_sum_exp, Channel, SystemTriple};
use crate::region::RateTriple;
use crate::search::{golden_min, logits_of, nelder_mead, simplex_grid, softmax, NmOptions};

/// Joint law over `X×Y×Z×U×X̂`, row-major in that order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuxJoint {
    pub dims: [usize; 5],
    pub probs: Vec<f64>,
}

impl AuxJoint {
    pub fn new(dims: [usize; 5], mut probs: Vec<f64>) -> Result<Self> {
        let size: usize = dims.iter().product();
        if size != probs.len() {
            return Err(Error::dim("joint buffer", size, probs.len()));
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::Empty {
                what: "joint alphabet".into(),
            });
        }
        let [nx, ny, nz, _, nxh] = dims;
        let u_cap = nx * ny * nz * nxh;
        if dims[3] > u_cap {
            return Err(Error::dim("auxiliary alphabet bound", u_cap, dims[3]));
        }
        let p = crate::prob::Pmf::named("auxiliary joint", std::mem::take(&mut probs))?;
        Ok(AuxJoint {
            dims,
            probs: p.into(),
        })
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize, u: usize, xh: usize) -> usize {
        let [_, ny, nz, nu, nxh] = self.dims;
        (((x * ny + y) * nz + z) * nu + u) * nxh + xh
    }

    /// Decomposes a flat index into `(x, y, z, u, x̂)`.
    pub fn cell(&self, c: usize) -> [usize; 5] {
        let [_, ny, nz, nu, nxh] = self.dims;
        let xh = c % nxh;
        let r = c / nxh;
        let u = r % nu;
        let r = r / nu;
        let z = r % nz;
        let r = r / nz;
        let y = r % ny;
        [r / ny, y, z, u, xh]
    }

    /// `P_XYZ × (U independent, law pu) × (X̂ independent, law pxh)`.
    pub fn matched(sys: &SystemTriple, pu: &[f64], pxh: &[f64]) -> Result<Self> {
        let dims = [sys.nx(), sys.ny(), sys.nz(), pu.len(), pxh.len()];
        let mut probs = Vec::with_capacity(dims.iter().product());
        for x in 0..dims[0] {
            for y in 0..dims[1] {
                for z in 0..dims[2] {
                    for &a in pu {
                        for &b in pxh {
                            probs.push(sys.joint(x, y, z) * a * b);
                        }
                    }
                }
            }
        }
        Self::new(dims, probs)
    }
}

fn check_dims(sys: &SystemTriple, q: &AuxJoint) -> Result<()> {
    let want = [sys.nx(), sys.ny(), sys.nz(), q.dims[3], sys.nxhat()];
    if q.dims != want {
        let k = (0..5).find(|&k| q.dims[k] != want[k]).unwrap();
        return Err(Error::dim("joint alphabet", want[k], q.dims[k]));
    }
    Ok(())
}

/// `(α, θ, μ, β)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct ExpParams {
    pub alpha: f64,
    pub theta: f64,
    pub mu: f64,
    pub beta: f64,
}

impl ExpParams {
    pub fn new(alpha: f64, theta: f64, mu: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::domain("alpha", alpha, "alpha > 0"));
        }
        if !(theta > 0.0) || !theta.is_finite() {
            return Err(Error::domain("theta", theta, "theta > 0"));
        }
        for (n, v) in [("mu", mu), ("beta", beta)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::domain(n, v, "[0,1]"));
            }
        }
        Ok(ExpParams {
            alpha,
            theta,
            mu,
            beta,
        })
    }

    /// `θ / (1 + θ + θαμ̄β)`.
    pub fn lambda_form(&self) -> f64 {
        let t = self.theta;
        t / (1.0 + t + t * self.alpha * (1.0 - self.mu) * self.beta)
    }

    /// Largest `θ` at which `min_Q Ω` is finite: `1 / (1 + αμ̄β̄)`.
    pub fn theta_limit(alpha: f64, mu: f64, beta: f64) -> f64 {
        1.0 / (1.0 + alpha * (1.0 - mu) * (1.0 - beta))
    }

    /// `1 + 5θ + θαμ̄(3 − β)`, the normalizer of the rate function.
    pub fn denominator(&self) -> f64 {
        1.0 + 5.0 * self.theta + self.theta * self.alpha * (1.0 - self.mu) * (3.0 - self.beta)
    }

    fn key(&self) -> [u64; 4] {
        [
            self.alpha.to_bits(),
            self.theta.to_bits(),
            self.mu.to_bits(),
            self.beta.to_bits(),
        ]
    }
}

/// Marginal index tables for one joint shape.
struct Layout {
    /// Per cell: `yu, y, zux̂, zu, yzu, u, z`.
    idx: Vec<[usize; 7]>,
    sizes: [usize; 7],
}

impl Layout {
    fn new(dims: [usize; 5]) -> Self {
        let [nx, ny, nz, nu, nxh] = dims;
        let mut idx = Vec::with_capacity(dims.iter().product());
        for _x in 0..nx {
            for y in 0..ny {
                for z in 0..nz {
                    for u in 0..nu {
                        for xh in 0..nxh {
                            idx.push([
                                y * nu + u,
                                y,
                                (z * nu + u) * nxh + xh,
                                z * nu + u,
                                (y * nz + z) * nu + u,
                                u,
                                z,
                            ]);
                        }
                    }
                }
            }
        }
        Layout {
            idx,
            sizes: [ny * nu, ny, nz * nu * nxh, nz * nu, ny * nz * nu, nu, nz],
        }
    }

    fn marginals(&self, q: &[f64]) -> [Vec<f64>; 7] {
        let mut m: [Vec<f64>; 7] = std::array::from_fn(|k| vec![0.0; self.sizes[k]]);
        for (c, &p) in q.iter().enumerate() {
            if p > 0.0 {
                for k in 0..7 {
                    m[k][self.idx[c][k]] += p;
                }
            }
        }
        m
    }
}

/// Per-system constants used in every evaluation of `ω`.
struct Frame {
    layout: Layout,
    /// `ln P_XYZ` per cell (`-inf` off support).
    ln_p: Vec<f64>,
    ln_pyz: Vec<f64>,
    dist: Vec<f64>,
}

impl Frame {
    fn new(sys: &SystemTriple, nu: usize) -> Self {
        let dims = [sys.nx(), sys.ny(), sys.nz(), nu, sys.nxhat()];
        let layout = Layout::new(dims);
        let n = layout.idx.len();
        let mut ln_p = Vec::with_capacity(n);
        let mut ln_pyz = Vec::with_capacity(n);
        let mut dist = Vec::with_capacity(n);
        for x in 0..dims[0] {
            for y in 0..dims[1] {
                for z in 0..dims[2] {
                    for _u in 0..nu {
                        for xh in 0..dims[4] {
                            ln_p.push(sys.joint(x, y, z).ln());
                            ln_pyz.push(sys.pyz(y, z).ln());
                            dist.push(sys.distortion().get(x, xh));
                        }
                    }
                }
            }
        }
        Frame {
            layout,
            ln_p,
            ln_pyz,
            dist,
        }
    }

    /// Exponent weights on `ln Q_c` and each marginal in `ln(Q_c e^{−θω_c})`.
    fn powers(p: &ExpParams) -> (f64, [f64; 7]) {
        let t = p.theta;
        let a = p.alpha * (1.0 - p.mu);
        let (b, bb) = (p.beta, 1.0 - p.beta);
        (
            1.0 - t,
            [
                t,
                -t,
                t,
                -t + t * a * b,
                -t * a * bb,
                t * a * bb - t * a * b,
                -t * a * b,
            ],
        )
    }

    /// `ln(Q_c e^{−θω_c})` for every cell with `Q_c > 0`, `-inf` elsewhere.
    /// `None` when `Q` charges a cell outside the support of `P_XYZ`.
    fn log_terms(&self, q: &[f64], m: &[Vec<f64>; 7], p: &ExpParams) -> Option<Vec<f64>> {
        let (k0, k) = Self::powers(p);
        let t = p.theta;
        let a = p.alpha * (1.0 - p.mu);
        let mut out = Vec::with_capacity(q.len());
        for (c, &qc) in q.iter().enumerate() {
            if qc <= 0.0 {
                out.push(f64::NEG_INFINITY);
                continue;
            }
            if self.ln_p[c] == f64::NEG_INFINITY {
                return None;
            }
            let idx = &self.layout.idx[c];
            let mut v = k0 * qc.ln() + t * self.ln_p[c] + t * a * (1.0 - p.beta) * self.ln_pyz[c]
                - t * p.alpha * p.mu * self.dist[c];
            for j in 0..7 {
                v += k[j] * m[j][idx[j]].ln();
            }
            out.push(v);
        }
        Some(out)
    }

    fn omega_cgf(&self, q: &[f64], p: &ExpParams) -> f64 {
        let m = self.layout.marginals(q);
        match self.log_terms(q, &m, p) {
            Some(lt) => -log_sum_exp(lt.iter().copied()),
            None => f64::INFINITY,
        }
    }

    /// `Ω` and its gradient with respect to the cell probabilities.
    fn omega_grad(&self, q: &[f64], p: &ExpParams) -> (f64, Vec<f64>) {
        let m = self.layout.marginals(q);
        let lt = self.log_terms(q, &m, p).expect("support-restricted iterate");
        let ls = log_sum_exp(lt.iter().copied());
        let w: Vec<f64> = lt.iter().map(|&v| (v - ls).exp()).collect();
        let mut agg: [Vec<f64>; 7] = std::array::from_fn(|j| vec![0.0; self.layout.sizes[j]]);
        for (c, &wc) in w.iter().enumerate() {
            for j in 0..7 {
                agg[j][self.layout.idx[c][j]] += wc;
            }
        }
        let (k0, k) = Self::powers(p);
        let grad = (0..q.len())
            .map(|c| {
                if q[c] <= 0.0 {
                    return 0.0;
                }
                let idx = &self.layout.idx[c];
                let mut g = k0 * w[c] / q[c];
                for j in 0..7 {
                    g += k[j] * agg[j][idx[j]] / m[j][idx[j]];
                }
                -g
            })
            .collect();
        (-ls, grad)
    }
}

/// Per-cell `ω`; cells with `Q_c = 0` are `NaN`, cells charged by `Q` outside
/// the support of `P_XYZ` are `+inf`.
pub fn omega_density(sys: &SystemTriple, q: &AuxJoint, p: &ExpParams) -> Result<Vec<f64>> {
    check_dims(sys, q)?;
    let fr = Frame::new(sys, q.dims[3]);
    let m = fr.layout.marginals(&q.probs);
    let a = p.alpha;
    let (mb, b, bb) = (1.0 - p.mu, p.beta, 1.0 - p.beta);
    Ok(q
        .probs
        .iter()
        .enumerate()
        .map(|(c, &qc)| {
            if qc <= 0.0 {
                return f64::NAN;
            }
            if fr.ln_p[c] == f64::NEG_INFINITY {
                return f64::INFINITY;
            }
            let i = &fr.layout.idx[c];
            let ln = |j: usize| m[j][i[j]].ln();
            // yu, y, zux̂, zu, yzu, u, z
            let head = qc.ln() - fr.ln_p[c] - ln(0) + ln(1) - ln(2) + ln(3);
            let yz_u = ln(4) - ln(5) - fr.ln_pyz[c];
            let z_zu = ln(6) - ln(3) + ln(5);
            head + a * (mb * bb * yz_u + mb * b * z_zu + p.mu * fr.dist[c])
        })
        .collect())
}

/// `Ω(Q) = −ln E_Q[exp(−θω)]`; `+inf` on a support violation.
pub fn omega_cgf(sys: &SystemTriple, q: &AuxJoint, p: &ExpParams) -> Result<f64> {
    check_dims(sys, q)?;
    Ok(Frame::new(sys, q.dims[3]).omega_cgf(&q.probs, p))
}

/// `Ω(Q)` and its gradient in the cell probabilities, treating them as free
/// coordinates. Cells outside the support of `Q` get gradient 0.
pub fn omega_gradient(sys: &SystemTriple, q: &AuxJoint, p: &ExpParams) -> Result<(f64, Vec<f64>)> {
    check_dims(sys, q)?;
    Ok(Frame::new(sys, q.dims[3]).omega_grad(&q.probs, p))
}

/// Tunables for the exponent searches.
#[derive(Debug, Clone, Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExponentConfig {
    /// Auxiliary alphabet for the general-law search; `|Y|` when absent.
    pub u_size: Option<usize>,
    pub alpha_max: f64,
    pub theta_max: f64,
    pub alpha_grid: Vec<f64>,
    /// Fractions `s` of the finite-θ limit, `θ = s/(1 + αμ̄β̄)`.
    pub theta_fraction_grid: Vec<f64>,
    pub lambda_grid: Vec<f64>,
    pub mu_beta_step: f64,
    /// Grid budget over auxiliary channels for the restricted inner minimum.
    pub q_grid_points: usize,
    pub polish_evals: usize,
    /// Gradient steps of the general-law descent.
    pub descent_iters: usize,
    pub refine_rounds: usize,
    pub refine_starts: usize,
}

impl Default for ExponentConfig {
    fn default() -> Self {
        ExponentConfig {
            u_size: None,
            alpha_max: 10.0,
            theta_max: 10.0,
            alpha_grid: vec![0.05, 0.15, 0.4, 1.0, 2.0, 4.0, 7.0, 10.0],
            theta_fraction_grid: vec![0.1, 0.3, 0.6, 1.0],
            lambda_grid: vec![0.02, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0, 4.0, 7.0, 10.0, 20.0, 50.0],
            mu_beta_step: 0.1,
            q_grid_points: 900,
            polish_evals: 150,
            descent_iters: 150,
            refine_rounds: 3,
            refine_starts: 2,
        }
    }
}

fn unit_grid(step: f64) -> Vec<f64> {
    let k = (1.0 / step).round().max(1.0) as usize;
    (0..=k).map(|i| i as f64 / k as f64).collect()
}

/// Law in the restricted family: `P_XYZ · q(u|y) · k(x̂|z,u)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShJoint {
    pub q_u_given_y: Channel,
    /// Rows indexed `u * |Z| + z`.
    pub kernel: Channel,
    pub joint: AuxJoint,
}

impl ShJoint {
    pub fn new(sys: &SystemTriple, q_u_given_y: Channel, kernel: Channel) -> Result<Self> {
        if q_u_given_y.in_size() != sys.ny() {
            return Err(Error::dim("auxiliary channel input", sys.ny(), q_u_given_y.in_size()));
        }
        let nu = q_u_given_y.out_size();
        if nu > sys.ny() {
            return Err(Error::dim("auxiliary alphabet bound", sys.ny(), nu));
        }
        if kernel.in_size() != nu * sys.nz() || kernel.out_size() != sys.nxhat() {
            return Err(Error::dim("reconstruction kernel", nu * sys.nz(), kernel.in_size()));
        }
        let dims = [sys.nx(), sys.ny(), sys.nz(), nu, sys.nxhat()];
        let mut probs = Vec::with_capacity(dims.iter().product());
        for x in 0..dims[0] {
            for y in 0..dims[1] {
                for z in 0..dims[2] {
                    for u in 0..nu {
                        for xh in 0..dims[4] {
                            probs.push(
                                sys.joint(x, y, z) * q_u_given_y.get(y, u) * kernel.get(u * dims[2] + z, xh),
                            );
                        }
                    }
                }
            }
        }
        Ok(ShJoint {
            q_u_given_y,
            kernel,
            joint: AuxJoint::new(dims, probs)?,
        })
    }

    /// Deterministic reconstruction `phi[u * |Z| + z]`.
    pub fn deterministic(sys: &SystemTriple, q_u_given_y: Channel, phi: &[usize]) -> Result<Self> {
        let rows = phi
            .iter()
            .map(|&xh| {
                let mut r = vec![0.0; sys.nxhat()];
                r[xh] = 1.0;
                r
            })
            .collect();
        Self::new(sys, q_u_given_y, Channel::new(rows)?)
    }

    /// Checks that an arbitrary joint lies in the restricted family and
    /// recovers its factors.
    pub fn from_joint(sys: &SystemTriple, q: &AuxJoint) -> Result<Self> {
        check_dims(sys, q)?;
        let [nx, ny, nz, nu, nxh] = q.dims;
        if nu > ny {
            return Err(Error::dim("auxiliary alphabet bound", ny, nu));
        }
        let mut pyu = vec![0.0; ny * nu];
        let mut pzux = vec![0.0; nz * nu * nxh];
        for (c, &p) in q.probs.iter().enumerate() {
            let [_, y, z, u, xh] = q.cell(c);
            pyu[y * nu + u] += p;
            pzux[(z * nu + u) * nxh + xh] += p;
        }
        let qf = crate::prob::Conditional::from_joint_rows(ny, nu, &pyu).to_channel_filled();
        let mut kz = vec![0.0; nu * nz * nxh];
        for z in 0..nz {
            for u in 0..nu {
                for xh in 0..nxh {
                    kz[(u * nz + z) * nxh + xh] = pzux[(z * nu + u) * nxh + xh];
                }
            }
        }
        let kf = crate::prob::Conditional::from_joint_rows(nu * nz, nxh, &kz).to_channel_filled();
        let rebuilt = Self::new(sys, qf, kf)?;
        let dev = rebuilt
            .joint
            .probs
            .iter()
            .zip(&q.probs)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if dev > 1e-10 {
            return Err(Error::Support(format!(
                "joint is not of the form P_XYZ q(u|y) k(x̂|z,u): deviation {dev:e} (|X| = {nx})"
            )));
        }
        Ok(rebuilt)
    }
}

/// Per-cell `ω̃` of a restricted law (`NaN` on zero-probability cells).
pub fn tilde_omega(sys: &SystemTriple, p: &ShJoint, mu: f64, beta: f64) -> Result<Vec<f64>> {
    for (n, v) in [("mu", mu), ("beta", beta)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::domain(n, v, "[0,1]"));
        }
    }
    let q = &p.joint;
    let layout = Layout::new(q.dims);
    let m = layout.marginals(&q.probs);
    let (mb, b, bb) = (1.0 - mu, beta, 1.0 - beta);
    Ok(q
        .probs
        .iter()
        .enumerate()
        .map(|(c, &pc)| {
            if pc <= 0.0 {
                return f64::NAN;
            }
            let [x, y, z, _, xh] = q.cell(c);
            let i = &layout.idx[c];
            let ln = |j: usize| m[j][i[j]].ln();
            let yz_u = ln(4) - ln(5) - sys.pyz(y, z).ln();
            let z_zu = ln(6) - ln(3) + ln(5);
            mb * bb * yz_u + mb * b * z_zu + mu * sys.distortion().get(x, xh)
        })
        .collect())
}

/// `P e^{−λω̃} / E[e^{−λω̃}]`.
pub fn tilted_sh_joint(sys: &SystemTriple, p: &ShJoint, lambda: f64, mu: f64, beta: f64) -> Result<AuxJoint> {
    let w = tilde_omega(sys, p, mu, beta)?;
    let logs: Vec<f64> = p
        .joint
        .probs
        .iter()
        .zip(&w)
        .map(|(&pc, &wc)| if pc > 0.0 { pc.ln() - lambda * wc } else { f64::NEG_INFINITY })
        .collect();
    let ls = log_sum_exp(logs.iter().copied());
    if !ls.is_finite() {
        return Err(Error::Degenerate("tilting normalizer is not finite".into()));
    }
    let probs = logs.iter().map(|&l| (l - ls).exp()).collect();
    AuxJoint::new(p.joint.dims, probs)
}

/// Variance of `ω̃` under the tilted law.
pub fn tilted_variance(sys: &SystemTriple, p: &ShJoint, lambda: f64, mu: f64, beta: f64) -> Result<f64> {
    let t = tilted_sh_joint(sys, p, lambda, mu, beta)?;
    let w = tilde_omega(sys, p, mu, beta)?;
    let mean: f64 = t.probs.iter().zip(&w).filter(|(&a, _)| a > 0.0).map(|(a, b)| a * b).sum();
    Ok(t
        .probs
        .iter()
        .zip(&w)
        .filter(|(&a, _)| a > 0.0)
        .map(|(a, b)| a * (b - mean).powi(2))
        .sum::<f64>()
        .max(0.0))
}

/// A restricted-family minimum of `Ω̃` with its minimizer.
#[derive(Debug, Clone)]
pub struct TildeMin {
    pub value: f64,
    pub q: Vec<f64>,
    pub phi: Vec<usize>,
}

/// `Ω̃(λ)` for `P_XYZ · q · k` with the best deterministic kernel, which is
/// optimal for fixed `q` since `E[e^{−λω̃}]` is linear in `k`.
fn tilde_omega_q(sys: &SystemTriple, q: &[f64], nu: usize, lambda: f64, mu: f64, beta: f64) -> (f64, Vec<usize>) {
    let (nx, ny, nz, nxh) = (sys.nx(), sys.ny(), sys.nz(), sys.nxhat());
    let (mb, b, bb) = (1.0 - mu, beta, 1.0 - beta);
    let mut pu = vec![0.0; nu];
    let mut pzu = vec![0.0; nz * nu];
    for y in 0..ny {
        for z in 0..nz {
            for u in 0..nu {
                let v = sys.pyz(y, z) * q[y * nu + u];
                pu[u] += v;
                pzu[z * nu + u] += v;
            }
        }
    }
    let mut total = 0.0;
    let mut phi = vec![0; nu * nz];
    let mut s = vec![0.0; nxh];
    for z in 0..nz {
        for u in 0..nu {
            if pzu[z * nu + u] <= 0.0 {
                continue;
            }
            s.iter_mut().for_each(|v| *v = 0.0);
            let z_zu = (sys.pz().get(z) * pu[u] / pzu[z * nu + u]).ln();
            for y in 0..ny {
                let pyzu = sys.pyz(y, z) * q[y * nu + u];
                if pyzu <= 0.0 {
                    continue;
                }
                let yz_u = (q[y * nu + u] / pu[u]).ln();
                let tilt = (-lambda * (mb * bb * yz_u + mb * b * z_zu)).exp();
                for x in 0..nx {
                    let w = sys.joint(x, y, z) * q[y * nu + u] * tilt;
                    if w == 0.0 {
                        continue;
                    }
                    for (xh, sv) in s.iter_mut().enumerate() {
                        *sv += w * (-lambda * mu * sys.distortion().get(x, xh)).exp();
                    }
                }
            }
            let (best, val) = s
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |a, (i, &v)| if v > a.1 { (i, v) } else { a });
            phi[u * nz + z] = best;
            total += val;
        }
    }
    (-total.ln(), phi)
}

fn q_seeds(ny: usize, nu: usize, budget: usize) -> Vec<Vec<f64>> {
    let mut steps = 1;
    let per = |s: usize| (simplex_grid(nu, s).len() as f64).powi(ny as i32);
    while per(steps + 1) <= budget as f64 {
        steps += 1;
    }
    let rows = simplex_grid(nu, steps);
    let mut out = Vec::new();
    let mut idx = vec![0usize; ny];
    'outer: loop {
        out.push(idx.iter().flat_map(|&i| rows[i].iter().copied()).collect());
        for k in 0..ny {
            idx[k] += 1;
            if idx[k] < rows.len() {
                continue 'outer;
            }
            idx[k] = 0;
        }
        return out;
    }
}

fn rows_softmax(theta: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    (0..rows)
        .flat_map(|r| softmax(&theta[r * cols..(r + 1) * cols]))
        .collect()
}

/// Minimum of `Ω̃(λ)` over `|U| = |Y|` channels: grid seeds, then Nelder–Mead.
fn tilde_min(sys: &SystemTriple, lambda: f64, mu: f64, beta: f64, cfg: &ExponentConfig) -> TildeMin {
    let (ny, nu) = (sys.ny(), sys.ny());
    let f = |q: &[f64]| tilde_omega_q(sys, q, nu, lambda, mu, beta).0;
    let mut scored: Vec<(f64, Vec<f64>)> = q_seeds(ny, nu, cfg.q_grid_points)
        .into_iter()
        .map(|q| (f(&q), q))
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (mut best_v, mut best_q) = (scored[0].0, scored[0].1.clone());
    let (theta, v) = nelder_mead(
        |t| f(&rows_softmax(t, ny, nu)),
        &logits_of(&best_q),
        NmOptions {
            max_evals: cfg.polish_evals,
            initial_step: 1.0,
            f_tol: 1e-13,
        },
    );
    if v < best_v {
        best_v = v;
        best_q = rows_softmax(&theta, ny, nu);
    }
    let phi = tilde_omega_q(sys, &best_q, nu, lambda, mu, beta).1;
    TildeMin {
        value: best_v,
        q: best_q,
        phi,
    }
}

/// Result of the general-law minimization.
#[derive(Debug, Clone, Serialize)]
pub struct OmegaMin {
    #[serde(serialize_with = "crate::cli::ser_f64")]
    pub value: f64,
    /// Value over the restricted family alone.
    #[serde(serialize_with = "crate::cli::ser_f64")]
    pub restricted_value: f64,
    pub argmin: AuxJoint,
    /// Local search only: the value upper-bounds the true minimum.
    pub approximate: bool,
}

fn descend(fr: &Frame, start: &[f64], support: &[usize], p: &ExpParams, iters: usize) -> (f64, Vec<f64>) {
    let n = start.len();
    let expand = |eta: &[f64]| -> Vec<f64> {
        let sm = softmax(eta);
        let mut q = vec![0.0; n];
        for (k, &c) in support.iter().enumerate() {
            q[c] = sm[k];
        }
        q
    };
    let floor: Vec<f64> = support.iter().map(|&c| start[c].max(1e-12)).collect();
    let mut eta = logits_of(&floor);
    let mut q = expand(&eta);
    let (mut val, mut g) = fr.omega_grad(&q, p);
    let mut step = 1.0;
    for _ in 0..iters {
        // gradient in logit coordinates
        let mean: f64 = support.iter().map(|&c| q[c] * g[c]).sum();
        let ge: Vec<f64> = support.iter().map(|&c| q[c] * (g[c] - mean)).collect();
        let gnorm2: f64 = ge.iter().map(|v| v * v).sum();
        if gnorm2 < 1e-24 {
            break;
        }
        let mut accepted = false;
        for _ in 0..30 {
            let trial: Vec<f64> = eta.iter().zip(&ge).map(|(e, d)| e - step * d).collect();
            let qt = expand(&trial);
            let vt = fr.omega_cgf(&qt, p);
            if vt <= val - 1e-4 * step * gnorm2 {
                eta = trial;
                q = qt;
                let (v2, g2) = fr.omega_grad(&q, p);
                val = v2;
                g = g2;
                step *= 1.5;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    (val, q)
}

/// `min_Q Ω(Q)`: restricted-family minimum first, then descent over general
/// joints with `|U| = u_size` from that law, its tilt and the uniform law.
pub fn omega_min(sys: &SystemTriple, p: &ExpParams, cfg: &ExponentConfig) -> Result<OmegaMin> {
    let nu = cfg.u_size.unwrap_or(sys.ny());
    let restricted = tilde_min(sys, p.theta * p.alpha, p.mu, p.beta, cfg);
    let fr = Frame::new(sys, nu);
    // embed the restricted minimizer (|U| = |Y|) into |U| = nu labels
    let ny = sys.ny();
    let mut qpad = vec![0.0; ny * nu];
    for y in 0..ny {
        for u in 0..ny.min(nu) {
            qpad[y * nu + u] = restricted.q[y * ny + u];
        }
        if nu < ny {
            let extra: f64 = restricted.q[y * ny + nu..(y + 1) * ny].iter().sum();
            qpad[y * nu + nu - 1] += extra;
        }
    }
    let mut phi = vec![0; nu * sys.nz()];
    for u in 0..nu.min(ny) {
        for z in 0..sys.nz() {
            phi[u * sys.nz() + z] = restricted.phi[u * sys.nz() + z];
        }
    }
    let sh = ShJoint::deterministic(sys, Channel::from_flat(ny, nu, qpad)?, &phi)?;
    let start = sh.joint.probs.clone();
    let support: Vec<usize> = (0..start.len()).filter(|&c| fr.ln_p[c].is_finite()).collect();
    let mut best_v = fr.omega_cgf(&start, p).min(if nu >= ny { restricted.value } else { f64::INFINITY });
    let mut best_q = start.clone();
    let tilted = {
        let m = fr.layout.marginals(&start);
        let floor: Vec<f64> = start.iter().map(|&v| v.max(1e-12)).collect();
        let lt = fr.log_terms(&floor, &m, p).unwrap_or_else(|| floor.iter().map(|v| v.ln()).collect());
        let ls = log_sum_exp(support.iter().map(|&c| lt[c]));
        let mut t = vec![0.0; start.len()];
        for &c in &support {
            t[c] = (lt[c] - ls).exp();
        }
        t
    };
    let mut uniform = vec![0.0; start.len()];
    for &c in &support {
        uniform[c] = 1.0 / support.len() as f64;
    }
    for init in [&start, &tilted, &uniform] {
        let (v, q) = descend(&fr, init, &support, p, cfg.descent_iters);
        if v < best_v {
            best_v = v;
            best_q = q;
        }
    }
    Ok(OmegaMin {
        value: best_v,
        restricted_value: restricted.value,
        argmin: AuxJoint {
            dims: [sys.nx(), sys.ny(), sys.nz(), nu, sys.nxhat()],
            probs: best_q,
        },
        approximate: true,
    })
}

/// `F^{α,θ,μ,β}` from a minimum of `Ω`.
pub fn f_from_omega(omega: f64, t: &RateTriple, p: &ExpParams) -> f64 {
    let rate = (1.0 - p.mu) * ((1.0 - p.beta) * t.r_c - t.r_i) + p.mu * t.d;
    (omega - p.theta * p.alpha * rate) / p.denominator()
}

/// `F^{α,θ,μ,β}` with a fresh inner minimization.
pub fn f_param(sys: &SystemTriple, t: &RateTriple, p: &ExpParams, cfg: &ExponentConfig) -> Result<f64> {
    let om = omega_min(sys, p, cfg)?;
    Ok(f_from_omega(om.value, t, p))
}

/// `F̃^{λ,μ,β}` from a minimum of `Ω̃`.
pub fn tilde_f_from(omega_tilde: f64, t: &RateTriple, lambda: f64, mu: f64, beta: f64) -> f64 {
    let rate = (1.0 - mu) * ((1.0 - beta) * t.r_c - t.r_i) + mu * t.d;
    (omega_tilde - lambda * rate) / (6.0 + lambda * (1.0 - mu) * (4.0 + 6.0 * beta))
}

/// `(α, θ)` at which the rate function provably dominates `F̃^{λ,μ,β}`:
/// `α = λ/(1 + λμ̄β)`, `θ = 1/(1 + αμ̄)`.
pub fn params_from_lambda(lambda: f64, mu: f64, beta: f64) -> ExpParams {
    let mb = 1.0 - mu;
    let alpha = lambda / (1.0 + lambda * mb * beta);
    ExpParams {
        alpha,
        theta: 1.0 / (1.0 + alpha * mb),
        mu,
        beta,
    }
}

/// Rate-function estimate with its maximizing parameters.
#[derive(Debug, Clone, Serialize)]
pub struct FReport {
    /// Raw estimate; may be slightly negative.
    pub f_hat_raw: f64,
    /// `max(raw, 0)`.
    pub f_hat: f64,
    pub params: ExpParams,
    pub omega_at_argmax: f64,
    pub argmin_u_size: usize,
    pub warnings: Vec<String>,
    pub note: &'static str,
}

/// Tilted rate-function estimate.
#[derive(Debug, Clone, Serialize)]
pub struct TildeFReport {
    pub f_tilde_raw: f64,
    pub f_tilde: f64,
    pub lambda: f64,
    pub mu: f64,
    pub beta: f64,
    pub warnings: Vec<String>,
}

const NOTE: &str = "heuristic estimate, inflation-prone: inner minima are local searches";

/// Memoized inner minima for one system; searches for many triples of the
/// same system share them.
pub struct ExponentSolver<'a> {
    sys: &'a SystemTriple,
    cfg: ExponentConfig,
    omega: Mutex<HashMap<[u64; 4], f64>>,
    tilde: Mutex<HashMap<[u64; 3], f64>>,
    grid: Mutex<Option<Vec<(ExpParams, f64)>>>,
    tilde_grid: Mutex<Option<Vec<([f64; 3], f64)>>>,
}

impl<'a> ExponentSolver<'a> {
    pub fn new(sys: &'a SystemTriple, cfg: ExponentConfig) -> Self {
        ExponentSolver {
            sys,
            cfg,
            omega: Mutex::new(HashMap::new()),
            tilde: Mutex::new(HashMap::new()),
            grid: Mutex::new(None),
            tilde_grid: Mutex::new(None),
        }
    }

    pub fn config(&self) -> &ExponentConfig {
        &self.cfg
    }

    pub fn omega(&self, p: &ExpParams) -> f64 {
        if let Some(&v) = self.omega.lock().unwrap().get(&p.key()) {
            return v;
        }
        let v = omega_min(self.sys, p, &self.cfg).map(|o| o.value).unwrap_or(f64::INFINITY);
        self.omega.lock().unwrap().insert(p.key(), v);
        v
    }

    pub fn omega_tilde(&self, lambda: f64, mu: f64, beta: f64) -> f64 {
        let key = [lambda.to_bits(), mu.to_bits(), beta.to_bits()];
        if let Some(&v) = self.tilde.lock().unwrap().get(&key) {
            return v;
        }
        let v = tilde_min(self.sys, lambda, mu, beta, &self.cfg).value;
        self.tilde.lock().unwrap().insert(key, v);
        v
    }

    fn mu_beta(&self) -> Vec<(f64, f64)> {
        let g = unit_grid(self.cfg.mu_beta_step);
        g.iter().flat_map(|&m| g.iter().map(move |&b| (m, b))).collect()
    }

    fn param_grid(&self) -> Vec<(ExpParams, f64)> {
        let mut guard = self.grid.lock().unwrap();
        if let Some(g) = guard.as_ref() {
            return g.clone();
        }
        let mut pts = Vec::new();
        for (mu, beta) in self.mu_beta() {
            for &alpha in &self.cfg.alpha_grid {
                let alpha = alpha.min(self.cfg.alpha_max);
                for &s in &self.cfg.theta_fraction_grid {
                    let theta = (s * ExpParams::theta_limit(alpha, mu, beta)).min(self.cfg.theta_max);
                    pts.push(ExpParams { alpha, theta, mu, beta });
                }
            }
        }
        let vals: Vec<(ExpParams, f64)> = pts
            .par_iter()
            .map(|p| (*p, omega_min(self.sys, p, &self.cfg).map(|o| o.value).unwrap_or(f64::INFINITY)))
            .collect();
        {
            let mut cache = self.omega.lock().unwrap();
            for (p, v) in &vals {
                cache.insert(p.key(), *v);
            }
        }
        *guard = Some(vals.clone());
        vals
    }

    fn lambda_ok(&self, lambda: f64, mu: f64, beta: f64) -> bool {
        params_from_lambda(lambda, mu, beta).alpha <= self.cfg.alpha_max + 1e-12
    }

    fn tilde_table(&self) -> Vec<([f64; 3], f64)> {
        let mut guard = self.tilde_grid.lock().unwrap();
        if let Some(g) = guard.as_ref() {
            return g.clone();
        }
        let mut pts = Vec::new();
        for (mu, beta) in self.mu_beta() {
            for &l in &self.cfg.lambda_grid {
                if self.lambda_ok(l, mu, beta) {
                    pts.push([l, mu, beta]);
                }
            }
        }
        let vals: Vec<([f64; 3], f64)> = pts
            .par_iter()
            .map(|k| (*k, tilde_min(self.sys, k[0], k[1], k[2], &self.cfg).value))
            .collect();
        {
            let mut cache = self.tilde.lock().unwrap();
            for (k, v) in &vals {
                cache.insert([k[0].to_bits(), k[1].to_bits(), k[2].to_bits()], *v);
            }
        }
        *guard = Some(vals.clone());
        vals
    }

    /// `F̃` by grid over `(λ,μ,β)` then golden-section refinement per
    /// coordinate. λ is limited so that the matching `α` respects `alpha_max`.
    pub fn tilde_f(&self, t: &RateTriple) -> TildeFReport {
        let table = self.tilde_table();
        let mut scored: Vec<([f64; 3], f64)> = table
            .iter()
            .map(|(k, v)| (*k, tilde_f_from(*v, t, k[0], k[1], k[2])))
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1));
        let mut best = scored[0];
        let mut warnings = Vec::new();
        let eval = |k: [f64; 3]| {
            if !self.lambda_ok(k[0], k[1], k[2]) || k[0] <= 0.0 {
                return f64::NEG_INFINITY;
            }
            tilde_f_from(self.omega_tilde(k[0], k[1], k[2]), t, k[0], k[1], k[2])
        };
        for start in scored.iter().take(self.cfg.refine_starts) {
            let mut cur = *start;
            for _ in 0..self.cfg.refine_rounds {
                for coord in 0..3 {
                    let (lo, hi) = match coord {
                        0 => ((cur.0[0] * 0.5).ln(), (cur.0[0] * 2.0).ln()),
                        _ => ((cur.0[coord] - 0.1).max(0.0), (cur.0[coord] + 0.1).min(1.0)),
                    };
                    let mk = |x: f64| {
                        let mut k = cur.0;
                        k[coord] = if coord == 0 { x.exp() } else { x };
                        k
                    };
                    let (x, v) = golden_min(|x| -eval(mk(x)), lo, hi, if coord == 0 { 0.02 } else { 0.005 });
                    if -v > cur.1 {
                        cur = (mk(x), -v);
                    }
                }
            }
            if cur.1 > best.1 {
                best = cur;
            }
        }
        let lmax = self.cfg.lambda_grid.iter().copied().fold(0.0, f64::max);
        if best.0[0] >= lmax * 0.999 {
            warnings.push(format!("lambda at the top of its range ({lmax})"));
        }
        TildeFReport {
            f_tilde_raw: best.1,
            f_tilde: best.1.max(0.0),
            lambda: best.0[0],
            mu: best.0[1],
            beta: best.0[2],
            warnings,
        }
    }

    /// `F` by grid over `(α, s, μ, β)`, augmented with the parameters
    /// matching the best tilted bound, then golden-section coordinate ascent.
    pub fn f_exponent(&self, t: &RateTriple) -> FReport {
        let grid = self.param_grid();
        let mut scored: Vec<(ExpParams, f64)> =
            grid.iter().map(|(p, om)| (*p, f_from_omega(*om, t, p))).collect();
        let tf = self.tilde_f(t);
        let mapped = params_from_lambda(tf.lambda, tf.mu, tf.beta);
        if mapped.alpha > 0.0 {
            scored.push((mapped, f_from_omega(self.omega(&mapped), t, &mapped)));
        }
        scored.sort_by(|a, b| b.1.total_cmp(&a.1));
        let eval = |p: ExpParams| -> f64 {
            if !(p.alpha > 0.0) || !(p.theta > 0.0) || p.alpha > self.cfg.alpha_max + 1e-12 {
                return f64::NEG_INFINITY;
            }
            f_from_omega(self.omega(&p), t, &p)
        };
        let mut best = scored[0];
        for start in scored.iter().take(self.cfg.refine_starts) {
            let mut cur = *start;
            for _ in 0..self.cfg.refine_rounds {
                for coord in 0..4 {
                    let p0 = cur.0;
                    let s0 = p0.theta / ExpParams::theta_limit(p0.alpha, p0.mu, p0.beta);
                    let (lo, hi, tol) = match coord {
                        0 => ((p0.alpha * 0.5).ln(), (p0.alpha * 2.0).min(self.cfg.alpha_max).ln(), 0.02),
                        1 => ((s0 * 0.5).ln(), 0.0f64.min((s0 * 2.0).ln()), 0.02),
                        2 => ((p0.mu - 0.1).max(0.0), (p0.mu + 0.1).min(1.0), 0.005),
                        _ => ((p0.beta - 0.1).max(0.0), (p0.beta + 0.1).min(1.0), 0.005),
                    };
                    if hi <= lo {
                        continue;
                    }
                    let mk = |x: f64| {
                        let mut p = p0;
                        let mut s = s0;
                        match coord {
                            0 => p.alpha = x.exp(),
                            1 => s = x.exp(),
                            2 => p.mu = x,
                            _ => p.beta = x,
                        }
                        p.theta = (s * ExpParams::theta_limit(p.alpha, p.mu, p.beta)).min(self.cfg.theta_max);
                        p
                    };
                    let (x, v) = golden_min(|x| -eval(mk(x)), lo, hi, tol);
                    if -v > cur.1 {
                        cur = (mk(x), -v);
                    }
                }
            }
            if cur.1 > best.1 {
                best = cur;
            }
        }
        let mut warnings = Vec::new();
        if best.0.alpha >= self.cfg.alpha_max * 0.999 {
            warnings.push(format!("alpha at its cap {}", self.cfg.alpha_max));
        }
        FReport {
            f_hat_raw: best.1,
            f_hat: best.1.max(0.0),
            params: best.0,
            omega_at_argmax: self.omega(&best.0),
            argmin_u_size: self.cfg.u_size.unwrap_or(self.sys.ny()),
            warnings,
            note: NOTE,
        }
    }

    /// `sup Var` of `ω̃` under tilted restricted laws over a grid of
    /// channels, all deterministic kernels, and `(λ,μ,β)` with `λμ̄ ≤ 1`.
    /// A lower estimate of the true supremum.
    pub fn rho_bound(&self, q_points: usize) -> Result<f64> {
        let sys = self.sys;
        let (ny, nu, nz, nxh) = (sys.ny(), sys.ny(), sys.nz(), sys.nxhat());
        let cells = nu * nz;
        let n_phi = (nxh as f64).powi(cells as i32);
        if n_phi > 4096.0 {
            return Err(Error::Budget { terms: n_phi, limit: 4096.0 });
        }
        let mut best = 0.0f64;
        let params: Vec<(f64, f64, f64)> = unit_grid(0.25)
            .into_iter()
            .flat_map(|mu| {
                unit_grid(0.5).into_iter().flat_map(move |beta| {
                    [0.0, 0.25, 0.5, 1.0].into_iter().filter_map(move |s| {
                        let lmax = if mu < 1.0 { 1.0 / (1.0 - mu) } else { 4.0 };
                        Some((s * lmax, mu, beta))
                    })
                })
            })
            .collect();
        for q in q_seeds(ny, nu, q_points) {
            let ch = Channel::from_flat(ny, nu, q)?;
            for code in 0..n_phi as usize {
                let mut c = code;
                let phi: Vec<usize> = (0..cells)
                    .map(|_| {
                        let v = c % nxh;
                        c /= nxh;
                        v
                    })
                    .collect();
                let sh = ShJoint::deterministic(sys, ch.clone(), &phi)?;
                for &(l, mu, beta) in &params {
                    best = best.max(tilted_variance(sys, &sh, l, mu, beta)?);
                }
            }
        }
        Ok(best)
    }
}

/// `F` for a single triple with a fresh solver.
pub fn f_exponent(sys: &SystemTriple, t: &RateTriple, cfg: &ExponentConfig) -> FReport {
    ExponentSolver::new(sys, cfg.clone()).f_exponent(t)
}

/// `F̃` for a single triple with a fresh solver.
pub fn tilde_f(sys: &SystemTriple, t: &RateTriple, cfg: &ExponentConfig) -> TildeFReport {
    ExponentSolver::new(sys, cfg.clone()).tilde_f(t)
}

/// `min(1, 7e^{−nF})`; approximate because `F` is an estimate.
pub fn pc_upper_bound(f_hat: f64, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::domain("n", 0.0, "n >= 1"));
    }
    Ok((7.0 * (-(n as f64) * f_hat.max(0.0)).exp()).min(1.0))
}
