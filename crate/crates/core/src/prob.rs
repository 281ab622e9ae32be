//! Finite-alphabet probability objects and information functionals.
//!
//! Everything is in nats. The conventions are the usual ones:
//! `0 log 0 = 0`, `0 log(0/0) = 0`, and `q log(q/0)` with `q > 0` is `+inf`.
//! Conditionals on zero-probability events are reported as undefined rows
//! rather than fabricated; expectations under the joint never touch them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance on the sum of a probability vector.
pub const SUM_TOL: f64 = 1e-12;
/// Drift below which a probability vector is silently renormalized.
pub const RENORM_TOL: f64 = 1e-9;
/// Values closer than this are merged when convolving distributions.
pub const MERGE_TOL: f64 = 1e-12;
/// Upper limit on the number of distinct values an n-fold sum may carry.
pub const MAX_STATES: usize = 1_000_000;

fn validate_probs(what: &str, probs: &mut [f64]) -> Result<()> {
    if probs.is_empty() {
        return Err(Error::Empty {
            what: what.to_string(),
        });
    }
    for (index, &value) in probs.iter().enumerate() {
        if !value.is_finite() || value < 0.0 {
            return Err(Error::InvalidEntry {
                what: what.to_string(),
                index,
                value,
            });
        }
    }
    let sum: f64 = probs.iter().sum();
    let drift = (sum - 1.0).abs();
    if drift > RENORM_TOL {
        return Err(Error::NotNormalized {
            what: what.to_string(),
            sum,
        });
    }
    if drift > SUM_TOL {
        probs.iter_mut().for_each(|p| *p /= sum);
    }
    Ok(())
}

/// `p log(p / q)` with the divergence conventions.
#[inline]
pub fn xlogy_ratio(p: f64, q: f64) -> f64 {
    if p <= 0.0 {
        0.0
    } else if q <= 0.0 {
        f64::INFINITY
    } else {
        p * (p / q).ln()
    }
}

/// Numerically stable `ln Σ exp(a_k)`; empty or all `-inf` input gives `-inf`.
pub fn log_sum_exp(values: impl IntoIterator<Item = f64> + Clone) -> f64 {
    let max = values
        .clone()
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let s: f64 = values.into_iter().map(|v| (v - max).exp()).sum();
    max + s.ln()
}

/// Binary entropy in nats.
pub fn binary_entropy(p: f64) -> f64 {
    -xlogy_ratio(p, 1.0) - xlogy_ratio(1.0 - p, 1.0)
}

/// Probability vector over a finite alphabet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Pmf {
    probs: Vec<f64>,
}

impl TryFrom<Vec<f64>> for Pmf {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Pmf::new(v)
    }
}

impl From<Pmf> for Vec<f64> {
    fn from(p: Pmf) -> Self {
        p.probs
    }
}

impl Pmf {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        Self::named("pmf", probs)
    }

    pub fn named(what: &str, mut probs: Vec<f64>) -> Result<Self> {
        validate_probs(what, &mut probs)?;
        Ok(Pmf { probs })
    }

    pub fn uniform(size: usize) -> Self {
        assert!(size > 0, "uniform pmf needs a nonempty alphabet");
        Pmf {
            probs: vec![1.0 / size as f64; size],
        }
    }

    pub fn point_mass(size: usize, at: usize) -> Self {
        assert!(at < size);
        let mut probs = vec![0.0; size];
        probs[at] = 1.0;
        Pmf { probs }
    }

    pub fn bernoulli(p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::domain("p", p, "[0,1]"));
        }
        Ok(Pmf {
            probs: vec![1.0 - p, p],
        })
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn get(&self, i: usize) -> f64 {
        self.probs[i]
    }

    pub fn entropy(&self) -> f64 {
        self.probs.iter().map(|&p| -xlogy_ratio(p, 1.0)).sum()
    }

    pub fn support(&self) -> impl Iterator<Item = usize> + '_ {
        self.probs
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .map(|(i, _)| i)
    }
}

/// Row-stochastic matrix between two finite alphabets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct Channel {
    in_size: usize,
    out_size: usize,
    rows: Vec<f64>,
}

impl TryFrom<Vec<Vec<f64>>> for Channel {
    type Error = Error;
    fn try_from(v: Vec<Vec<f64>>) -> Result<Self> {
        Channel::new(v)
    }
}

impl From<Channel> for Vec<Vec<f64>> {
    fn from(c: Channel) -> Self {
        (0..c.in_size).map(|x| c.row(x).to_vec()).collect()
    }
}

impl Channel {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::named("channel", rows)
    }

    pub fn named(what: &str, rows: Vec<Vec<f64>>) -> Result<Self> {
        let in_size = rows.len();
        if in_size == 0 {
            return Err(Error::Empty {
                what: what.to_string(),
            });
        }
        let out_size = rows[0].len();
        let mut flat = Vec::with_capacity(in_size * out_size);
        for (x, mut row) in rows.into_iter().enumerate() {
            if row.len() != out_size {
                return Err(Error::dim(&format!("{what} row {x}"), out_size, row.len()));
            }
            validate_probs(&format!("{what} row {x}"), &mut row)?;
            flat.extend(row);
        }
        Ok(Channel {
            in_size,
            out_size,
            rows: flat,
        })
    }

    /// Builds from a flat row-major buffer, validating every row.
    pub fn from_flat(in_size: usize, out_size: usize, flat: Vec<f64>) -> Result<Self> {
        if flat.len() != in_size * out_size {
            return Err(Error::dim("channel buffer", in_size * out_size, flat.len()));
        }
        let rows = flat.chunks(out_size).map(|r| r.to_vec()).collect();
        Self::new(rows)
    }

    pub fn bsc(p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::domain("crossover", p, "[0,1]"));
        }
        Ok(Channel {
            in_size: 2,
            out_size: 2,
            rows: vec![1.0 - p, p, p, 1.0 - p],
        })
    }

    pub fn identity(size: usize) -> Self {
        let mut rows = vec![0.0; size * size];
        for i in 0..size {
            rows[i * size + i] = 1.0;
        }
        Channel {
            in_size: size,
            out_size: size,
            rows,
        }
    }

    /// Every input maps to the same output distribution.
    pub fn constant(in_size: usize, row: &Pmf) -> Self {
        let mut rows = Vec::with_capacity(in_size * row.len());
        for _ in 0..in_size {
            rows.extend_from_slice(row.probs());
        }
        Channel {
            in_size,
            out_size: row.len(),
            rows,
        }
    }

    pub fn in_size(&self) -> usize {
        self.in_size
    }

    pub fn out_size(&self) -> usize {
        self.out_size
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.rows[x * self.out_size + y]
    }

    pub fn row(&self, x: usize) -> &[f64] {
        &self.rows[x * self.out_size..(x + 1) * self.out_size]
    }

    pub fn flat(&self) -> &[f64] {
        &self.rows
    }

    /// Output distribution for input law `p`.
    pub fn output(&self, p: &Pmf) -> Result<Pmf> {
        check_input(p, self)?;
        let mut out = vec![0.0; self.out_size];
        for (x, &px) in p.probs().iter().enumerate() {
            for (y, o) in out.iter_mut().enumerate() {
                *o += px * self.get(x, y);
            }
        }
        Pmf::new(out)
    }

    /// Cascade `self` (A→B) followed by `next` (B→C).
    pub fn then(&self, next: &Channel) -> Result<Channel> {
        if self.out_size != next.in_size {
            return Err(Error::dim("channel cascade", self.out_size, next.in_size));
        }
        let mut rows = vec![0.0; self.in_size * next.out_size];
        for a in 0..self.in_size {
            for b in 0..self.out_size {
                let w = self.get(a, b);
                if w == 0.0 {
                    continue;
                }
                for c in 0..next.out_size {
                    rows[a * next.out_size + c] += w * next.get(b, c);
                }
            }
        }
        Channel::from_flat(self.in_size, next.out_size, rows)
    }
}

fn check_input(p: &Pmf, ch: &Channel) -> Result<()> {
    if p.len() != ch.in_size() {
        return Err(Error::dim("channel input", ch.in_size(), p.len()));
    }
    Ok(())
}

/// Conditional distribution whose rows may be undefined because the
/// conditioning event has probability zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Conditional {
    out_size: usize,
    rows: Vec<f64>,
    defined: Vec<bool>,
}

impl Conditional {
    /// Normalizes each row of a nonnegative matrix; all-zero rows are undefined.
    pub fn from_joint_rows(in_size: usize, out_size: usize, joint: &[f64]) -> Self {
        let mut rows = joint.to_vec();
        let mut defined = vec![false; in_size];
        for a in 0..in_size {
            let row = &mut rows[a * out_size..(a + 1) * out_size];
            let s: f64 = row.iter().sum();
            if s > 0.0 {
                row.iter_mut().for_each(|v| *v /= s);
                defined[a] = true;
            }
        }
        Conditional {
            out_size,
            rows,
            defined,
        }
    }

    pub fn in_size(&self) -> usize {
        self.defined.len()
    }

    pub fn out_size(&self) -> usize {
        self.out_size
    }

    pub fn is_defined(&self, a: usize) -> bool {
        self.defined[a]
    }

    /// `None` when the conditioning event has zero probability.
    pub fn row(&self, a: usize) -> Option<&[f64]> {
        self.defined[a].then(|| &self.rows[a * self.out_size..(a + 1) * self.out_size])
    }

    /// Value of a defined cell, `None` for an undefined row.
    pub fn get(&self, a: usize, b: usize) -> Option<f64> {
        self.defined[a].then(|| self.rows[a * self.out_size + b])
    }

    /// Converts to a channel, filling undefined rows with the uniform law.
    /// The filled rows carry zero weight in every expectation under the joint.
    pub fn to_channel_filled(&self) -> Channel {
        let mut rows = self.rows.clone();
        let u = 1.0 / self.out_size as f64;
        for (a, &d) in self.defined.iter().enumerate() {
            if !d {
                rows[a * self.out_size..(a + 1) * self.out_size]
                    .iter_mut()
                    .for_each(|v| *v = u);
            }
        }
        Channel {
            in_size: self.defined.len(),
            out_size: self.out_size,
            rows,
        }
    }
}

/// Nonnegative distortion matrix `d(x, x̂)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct Distortion {
    x_size: usize,
    xhat_size: usize,
    values: Vec<f64>,
}

impl TryFrom<Vec<Vec<f64>>> for Distortion {
    type Error = Error;
    fn try_from(v: Vec<Vec<f64>>) -> Result<Self> {
        Distortion::new(v)
    }
}

impl From<Distortion> for Vec<Vec<f64>> {
    fn from(d: Distortion) -> Self {
        d.values.chunks(d.xhat_size).map(|r| r.to_vec()).collect()
    }
}

impl Distortion {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let x_size = rows.len();
        if x_size == 0 {
            return Err(Error::Empty {
                what: "distortion".into(),
            });
        }
        let xhat_size = rows[0].len();
        let mut values = Vec::with_capacity(x_size * xhat_size);
        for (x, row) in rows.into_iter().enumerate() {
            if row.len() != xhat_size || xhat_size == 0 {
                return Err(Error::dim(&format!("distortion row {x}"), xhat_size, row.len()));
            }
            for (xhat, &value) in row.iter().enumerate() {
                if !value.is_finite() || value < 0.0 {
                    return Err(Error::NegativeDistortion { x, xhat, value });
                }
            }
            values.extend(row);
        }
        Ok(Distortion {
            x_size,
            xhat_size,
            values,
        })
    }

    pub fn hamming(size: usize) -> Self {
        let mut values = vec![1.0; size * size];
        for i in 0..size {
            values[i * size + i] = 0.0;
        }
        Distortion {
            x_size: size,
            xhat_size: size,
            values,
        }
    }

    pub fn x_size(&self) -> usize {
        self.x_size
    }

    pub fn xhat_size(&self) -> usize {
        self.xhat_size
    }

    #[inline]
    pub fn get(&self, x: usize, xhat: usize) -> f64 {
        self.values[x * self.xhat_size + xhat]
    }

    /// `d⁺ = max d(x, x̂)`.
    pub fn d_plus(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Bayes reconstruction for a (possibly unnormalized) posterior over X.
    /// Ties go to the lowest index. Returns `(x̂, expected distortion mass)`.
    pub fn bayes_choice(&self, posterior: &[f64]) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for xhat in 0..self.xhat_size {
            let risk: f64 = posterior
                .iter()
                .enumerate()
                .map(|(x, &w)| w * self.get(x, xhat))
                .sum();
            if risk < best.1 {
                best = (xhat, risk);
            }
        }
        best
    }
}

/// The source law together with the two observation channels and the
/// distortion measure, plus the induced joint and its conditionals.
#[derive(Debug, Clone)]
pub struct SystemTriple {
    px: Pmf,
    pyx: Channel,
    pzx: Channel,
    distortion: Distortion,
    joint: Vec<f64>,
    py: Pmf,
    pz: Pmf,
    pyz: Vec<f64>,
    pzy: Conditional,
    px_given_yz: Conditional,
}

/// JSON document layout for a system.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemDoc {
    pub px: Vec<f64>,
    pub pyx: Vec<Vec<f64>>,
    pub pzx: Vec<Vec<f64>>,
    pub distortion: Vec<Vec<f64>>,
}

impl SystemTriple {
    pub fn nx(&self) -> usize {
        self.px.len()
    }
    pub fn ny(&self) -> usize {
        self.pyx.out_size()
    }
    pub fn nz(&self) -> usize {
        self.pzx.out_size()
    }
    pub fn nxhat(&self) -> usize {
        self.distortion.xhat_size()
    }
    pub fn px(&self) -> &Pmf {
        &self.px
    }
    pub fn pyx(&self) -> &Channel {
        &self.pyx
    }
    pub fn pzx(&self) -> &Channel {
        &self.pzx
    }
    pub fn distortion(&self) -> &Distortion {
        &self.distortion
    }
    pub fn py(&self) -> &Pmf {
        &self.py
    }
    pub fn pz(&self) -> &Pmf {
        &self.pz
    }
    pub fn d_plus(&self) -> f64 {
        self.distortion.d_plus()
    }

    /// `P_{XYZ}(x,y,z)`.
    #[inline]
    pub fn joint(&self, x: usize, y: usize, z: usize) -> f64 {
        self.joint[(x * self.ny() + y) * self.nz() + z]
    }

    pub fn joint_flat(&self) -> &[f64] {
        &self.joint
    }

    /// `P_{YZ}(y,z)`.
    #[inline]
    pub fn pyz(&self, y: usize, z: usize) -> f64 {
        self.pyz[y * self.nz() + z]
    }

    pub fn pzy(&self) -> &Conditional {
        &self.pzy
    }

    /// `P_{X|YZ}` with rows indexed by `y * |Z| + z`.
    pub fn px_given_yz(&self) -> &Conditional {
        &self.px_given_yz
    }

    pub fn to_doc(&self) -> SystemDoc {
        SystemDoc {
            px: self.px.probs().to_vec(),
            pyx: self.pyx.clone().into(),
            pzx: self.pzx.clone().into(),
            distortion: self.distortion.clone().into(),
        }
    }

    pub fn from_doc(doc: &SystemDoc) -> Result<Self> {
        let px = Pmf::named("px", doc.px.clone())?;
        let pyx = Channel::named("pyx", doc.pyx.clone())?;
        let pzx = Channel::named("pzx", doc.pzx.clone())?;
        let d = Distortion::new(doc.distortion.clone())?;
        compose_triple(px, pyx, pzx, d)
    }
}

/// Builds a [`SystemTriple`], caching the joint and its marginals.
pub fn compose_triple(px: Pmf, pyx: Channel, pzx: Channel, d: Distortion) -> Result<SystemTriple> {
    let nx = px.len();
    if pyx.in_size() != nx {
        return Err(Error::dim("pyx input alphabet", nx, pyx.in_size()));
    }
    if pzx.in_size() != nx {
        return Err(Error::dim("pzx input alphabet", nx, pzx.in_size()));
    }
    if d.x_size() != nx {
        return Err(Error::dim("distortion rows", nx, d.x_size()));
    }
    let (ny, nz) = (pyx.out_size(), pzx.out_size());
    let mut joint = vec![0.0; nx * ny * nz];
    let mut pyz = vec![0.0; ny * nz];
    for x in 0..nx {
        for y in 0..ny {
            for z in 0..nz {
                let v = px.get(x) * pyx.get(x, y) * pzx.get(x, z);
                joint[(x * ny + y) * nz + z] = v;
                pyz[y * nz + z] += v;
            }
        }
    }
    let total: f64 = joint.iter().sum();
    if (total - 1.0).abs() > 1e-10 {
        return Err(Error::NotNormalized {
            what: "joint P_XYZ".into(),
            sum: total,
        });
    }
    let py = pyx.output(&px)?;
    let pz = pzx.output(&px)?;
    let pzy = Conditional::from_joint_rows(ny, nz, &pyz);
    // rows (y,z), columns x
    let mut xyz_t = vec![0.0; ny * nz * nx];
    for x in 0..nx {
        for y in 0..ny {
            for z in 0..nz {
                xyz_t[(y * nz + z) * nx + x] = joint[(x * ny + y) * nz + z];
            }
        }
    }
    let px_given_yz = Conditional::from_joint_rows(ny * nz, nx, &xyz_t);
    Ok(SystemTriple {
        px,
        pyx,
        pzx,
        distortion: d,
        joint,
        py,
        pz,
        pyz,
        pzy,
        px_given_yz,
    })
}

/// `I(p, ch)` in nats.
pub fn mutual_information(p: &Pmf, ch: &Channel) -> Result<f64> {
    check_input(p, ch)?;
    let q = ch.output(p)?;
    let mut i = 0.0;
    for x in p.support() {
        for y in 0..ch.out_size() {
            let w = ch.get(x, y);
            if w > 0.0 {
                i += p.get(x) * w * (w / q.get(y)).ln();
            }
        }
    }
    Ok(i.max(0.0))
}

/// Dense joint pmf over a product of finite alphabets, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct JointPmf {
    dims: Vec<usize>,
    probs: Vec<f64>,
}

impl JointPmf {
    pub fn new(dims: Vec<usize>, mut probs: Vec<f64>) -> Result<Self> {
        let size: usize = dims.iter().product();
        if size != probs.len() {
            return Err(Error::dim("joint buffer", size, probs.len()));
        }
        validate_probs("joint", &mut probs)?;
        Ok(JointPmf { dims, probs })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    fn strides(&self) -> Vec<usize> {
        let mut s = vec![1; self.dims.len()];
        for k in (0..self.dims.len().saturating_sub(1)).rev() {
            s[k] = s[k + 1] * self.dims[k + 1];
        }
        s
    }

    /// Marginal over the listed axes, in the listed order.
    pub fn marginal(&self, keep: &[usize]) -> JointPmf {
        let strides = self.strides();
        let dims: Vec<usize> = keep.iter().map(|&a| self.dims[a]).collect();
        let mut out = vec![0.0; dims.iter().product()];
        for (flat, &p) in self.probs.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let mut idx = 0;
            for &a in keep {
                idx = idx * self.dims[a] + (flat / strides[a]) % self.dims[a];
            }
            out[idx] += p;
        }
        JointPmf { dims, probs: out }
    }

    pub fn entropy(&self) -> f64 {
        self.probs.iter().map(|&p| -xlogy_ratio(p, 1.0)).sum()
    }
}

/// `I(U;Y|Z)` for a joint over `(Z, U, Y)` in that axis order.
pub fn conditional_mutual_information(joint: &JointPmf) -> Result<f64> {
    if joint.dims().len() != 3 {
        return Err(Error::dim("conditional MI joint rank", 3, joint.dims().len()));
    }
    let h_zu = joint.marginal(&[0, 1]).entropy();
    let h_zy = joint.marginal(&[0, 2]).entropy();
    let h_z = joint.marginal(&[0]).entropy();
    let h_zuy = joint.entropy();
    Ok((h_zu + h_zy - h_z - h_zuy).max(0.0))
}

/// `D(q ‖ p)` for arrays of equal shape; `+inf` when `q` is not absolutely
/// continuous with respect to `p`.
pub fn kl_divergence(q: &[f64], p: &[f64]) -> Result<f64> {
    if q.len() != p.len() {
        return Err(Error::dim("divergence arguments", q.len(), p.len()));
    }
    let d: f64 = q.iter().zip(p).map(|(&a, &b)| xlogy_ratio(a, b)).sum();
    Ok(if d.is_finite() { d.max(0.0) } else { d })
}

/// Real random variable with finitely many atoms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteRandomVariable {
    values: Vec<f64>,
    probs: Vec<f64>,
}

impl FiniteRandomVariable {
    pub fn new(values: Vec<f64>, probs: Pmf) -> Result<Self> {
        if values.len() != probs.len() {
            return Err(Error::dim("random variable atoms", values.len(), probs.len()));
        }
        if let Some((i, &v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidEntry {
                what: "random variable value".into(),
                index: i,
                value: v,
            });
        }
        Ok(FiniteRandomVariable {
            values,
            probs: probs.probs,
        })
    }

    pub fn constant(c: f64) -> Self {
        FiniteRandomVariable {
            values: vec![c],
            probs: vec![1.0],
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    fn atoms(&self) -> impl Iterator<Item = (f64, f64)> + Clone + '_ {
        self.values
            .iter()
            .copied()
            .zip(self.probs.iter().copied())
            .filter(|&(_, p)| p > 0.0)
    }

    pub fn mean(&self) -> f64 {
        self.atoms().map(|(v, p)| v * p).sum()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.atoms().map(|(v, p)| p * (v - m).powi(2)).sum::<f64>().max(0.0)
    }

    /// `E|X − EX|³`.
    pub fn third_abs_central_moment(&self) -> f64 {
        let m = self.mean();
        self.atoms().map(|(v, p)| p * (v - m).abs().powi(3)).sum()
    }

    /// `ln E[exp(λX)]`, evaluated with a max shift.
    pub fn cgf(&self, lambda: f64) -> f64 {
        if lambda == 0.0 {
            return 0.0;
        }
        log_sum_exp(self.atoms().map(|(v, p)| p.ln() + lambda * v))
    }

    /// Mean of the exponentially tilted law `p·e^{λv} / E e^{λX}`, which is
    /// the derivative of the cgf at `λ`.
    pub fn tilted_mean(&self, lambda: f64) -> f64 {
        let c = self.cgf(lambda);
        self.atoms()
            .map(|(v, p)| v * (p.ln() + lambda * v - c).exp())
            .sum()
    }

    /// Variance of the tilted law (second derivative of the cgf).
    pub fn tilted_variance(&self, lambda: f64) -> f64 {
        let c = self.cgf(lambda);
        let m = self.tilted_mean(lambda);
        self.atoms()
            .map(|(v, p)| (v - m).powi(2) * (p.ln() + lambda * v - c).exp())
            .sum::<f64>()
            .max(0.0)
    }

    /// Smallest and largest value carrying positive probability.
    pub fn support_range(&self) -> (f64, f64) {
        self.atoms().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (v, _)| {
            (lo.min(v), hi.max(v))
        })
    }

    /// Total probability of atoms within `MERGE_TOL` of the maximum.
    pub fn prob_at_max(&self) -> f64 {
        let (_, hi) = self.support_range();
        self.atoms()
            .filter(|&(v, _)| v >= hi - MERGE_TOL)
            .map(|(_, p)| p)
            .sum()
    }

    /// `Pr{X ≥ a}`, with values within `MERGE_TOL` below `a` counted in.
    pub fn tail(&self, a: f64) -> f64 {
        self.atoms()
            .filter(|&(v, _)| v >= a - MERGE_TOL)
            .map(|(_, p)| p)
            .sum::<f64>()
            .min(1.0)
    }

    /// Positive-probability atoms sorted by value with near-equal values merged.
    pub fn merged(&self) -> FiniteRandomVariable {
        let mut atoms: Vec<(f64, f64)> = self.atoms().collect();
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (values, probs) = coalesce(atoms).into_iter().unzip();
        FiniteRandomVariable { values, probs }
    }
}

fn coalesce(sorted: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(sorted.len());
    for (v, p) in sorted {
        match out.last_mut() {
            Some(last) if (v - last.0).abs() <= MERGE_TOL => last.1 += p,
            _ => out.push((v, p)),
        }
    }
    out
}

/// Distribution of the sum of two independent finite random variables.
pub fn convolve(a: &FiniteRandomVariable, b: &FiniteRandomVariable) -> Result<FiniteRandomVariable> {
    let mut atoms = Vec::with_capacity(a.values.len() * b.values.len());
    for (va, pa) in a.atoms() {
        for (vb, pb) in b.atoms() {
            atoms.push((va + vb, pa * pb));
        }
    }
    if atoms.len() > 4 * MAX_STATES {
        return Err(Error::TooLarge {
            states: atoms.len(),
            limit: MAX_STATES,
        });
    }
    atoms.sort_by(|x, y| x.0.total_cmp(&y.0));
    let merged = coalesce(atoms);
    if merged.len() > MAX_STATES {
        return Err(Error::TooLarge {
            states: merged.len(),
            limit: MAX_STATES,
        });
    }
    let (values, probs) = merged.into_iter().unzip();
    Ok(FiniteRandomVariable { values, probs })
}

/// Distribution of `Σ_{k=1}^n X_k` for i.i.d. copies of `rv`.
pub fn iid_sum(rv: &FiniteRandomVariable, n: usize) -> Result<FiniteRandomVariable> {
    if n == 0 {
        return Err(Error::domain("n", 0.0, "n >= 1"));
    }
    let base = rv.merged();
    let mut acc = base.clone();
    for _ in 1..n {
        acc = convolve(&acc, &base)?;
    }
    Ok(acc)
}

/// Exact `Pr{(1/n) Σ X_k ≥ t}` by n-fold convolution.
pub fn iid_tail_exact(rv: &FiniteRandomVariable, n: usize, t: f64) -> Result<f64> {
    let sum = iid_sum(rv, n)?;
    Ok(sum.tail(n as f64 * t))
}

/// Cramér–Chernoff bound `Pr{X ≥ a} ≤ exp(−(λa − ln E e^{λX}))`, clamped to 1.
pub fn cramer_tail_bound(rv: &FiniteRandomVariable, a: f64, lambda: f64) -> Result<f64> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::domain("lambda", lambda, "lambda > 0"));
    }
    Ok((-(lambda * a - rv.cgf(lambda))).exp().min(1.0))
}

/// Information density `ln P_{Z|Y}(z|y) / P_Z(z)` as a random variable with
/// atom weights `P_{YZ}(y,z)`. Zero-weight pairs are dropped.
pub fn info_density_rv(py: &Pmf, pzy: &Channel) -> Result<FiniteRandomVariable> {
    check_input(py, pzy)?;
    let pz = pzy.output(py)?;
    let mut values = Vec::new();
    let mut probs = Vec::new();
    for y in py.support() {
        for z in 0..pzy.out_size() {
            let w = pzy.get(y, z);
            if w > 0.0 {
                values.push((w / pz.get(z)).ln());
                probs.push(py.get(y) * w);
            }
        }
    }
    let rv = FiniteRandomVariable::new(values, Pmf::new(probs)?)?;
    Ok(rv.merged())
}

/// Standard normal cdf.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal upper tail `1 − Φ(x)`, accurate far into the tail.
pub fn normal_sf(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}
