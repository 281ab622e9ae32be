//! Biometrical identification: every stored item is its raw observation,
//! `S(m) = Yⁿ(m)`, and the decoder only has to find the index.
//!
//! With the information density `ι(y,z) = ln P_{Z|Y}(z|y)/P_Z(z)` and its
//! cumulant generating function `Λ(λ) = ln E[exp(λι)]`:
//!
//! ```text
//! C      = E[ι]                         V = Var[ι]
//! Ē(R)   = sup_{λ>0} λR − Λ(λ)
//! E̲(R)   = sup_{λ>0} (λR − Λ(λ)) / (1+λ)
//! ½e^{−nĒ(R)} ≤ P_c ≤ 2e^{−nE̲(R)}
//! ln M*(n,ε) ≈ nC + √(nV) Φ⁻¹(ε)
//! ```

use serde::Serialize;

use crate::error::{Error, Result};
use crate::prob::{
    info_density_rv, iid_tail_exact, normal_cdf, normal_sf, Channel, FiniteRandomVariable, Pmf,
    SystemTriple,
};
use crate::search::{bisect, golden_min};

/// Universal third-moment constant used for normal approximations.
pub const BERRY_ESSEEN_CONSTANT: f64 = 0.5600;
/// Upper end of the initial λ bracket.
pub const LAMBDA_CAP: f64 = 50.0;
const LAMBDA_HARD_LIMIT: f64 = 1e8;

/// Source observation law and the query channel `Y → Z`.
#[derive(Debug, Clone)]
pub struct BioSystem {
    py: Pmf,
    pzy: Channel,
    density: FiniteRandomVariable,
    capacity: f64,
    variance: f64,
}

impl BioSystem {
    pub fn new(py: Pmf, pzy: Channel) -> Result<Self> {
        let density = info_density_rv(&py, &pzy)?;
        let capacity = density.mean().max(0.0);
        let variance = density.variance();
        Ok(BioSystem {
            py,
            pzy,
            density,
            capacity,
            variance,
        })
    }

    /// Induced system through `Z − X − Y`.
    pub fn from_triple(sys: &SystemTriple) -> Result<Self> {
        Self::new(sys.py().clone(), sys.pzy().to_channel_filled())
    }

    pub fn py(&self) -> &Pmf {
        &self.py
    }

    pub fn pzy(&self) -> &Channel {
        &self.pzy
    }

    pub fn density(&self) -> &FiniteRandomVariable {
        &self.density
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    /// True when the information density is almost surely constant.
    pub fn is_degenerate(&self) -> bool {
        self.variance <= 1e-15
    }

    fn require_nondegenerate(&self) -> Result<()> {
        if self.is_degenerate() {
            return Err(Error::Degenerate(format!(
                "information density has zero variance (V = {:e})",
                self.variance
            )));
        }
        Ok(())
    }
}

/// Both correct-decoding exponents at one rate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BioExponentReport {
    pub rate_r: f64,
    pub capacity: f64,
    #[serde(serialize_with = "crate::cli::ser_f64")]
    pub e_lower: f64,
    #[serde(serialize_with = "crate::cli::ser_f64")]
    pub e_upper: f64,
    #[serde(serialize_with = "crate::cli::ser_f64")]
    pub argmax_lambda_lower: f64,
    #[serde(serialize_with = "crate::cli::ser_f64")]
    pub argmax_lambda_upper: f64,
    pub warnings: Vec<String>,
}

/// `C = I(P_Y, P_{Z|Y})`.
pub fn capacity(sys: &BioSystem) -> f64 {
    sys.capacity
}

fn check_rate(r: f64) -> Result<()> {
    if !(r >= 0.0) || !r.is_finite() {
        return Err(Error::domain("R", r, "R >= 0"));
    }
    Ok(())
}

/// `Ē(R)` with the maximizing λ. `+inf` when `R` exceeds the largest value
/// of the information density.
pub fn exponent_upper(sys: &BioSystem, r: f64) -> Result<(f64, f64, Vec<String>)> {
    check_rate(r)?;
    sys.require_nondegenerate()?;
    let rv = sys.density();
    let mut warnings = Vec::new();
    if r <= sys.capacity {
        return Ok((0.0, 0.0, warnings));
    }
    let (_, vmax) = rv.support_range();
    if r > vmax + 1e-12 {
        return Ok((f64::INFINITY, f64::INFINITY, warnings));
    }
    if r >= vmax - 1e-12 {
        // λR − Λ(λ) increases to −ln P(ι = max) as λ → ∞
        return Ok((-rv.prob_at_max().ln(), f64::INFINITY, warnings));
    }
    let mut hi = LAMBDA_CAP;
    while rv.tilted_mean(hi) < r {
        hi *= 2.0;
        if hi > LAMBDA_HARD_LIMIT {
            break;
        }
    }
    if hi > LAMBDA_CAP {
        warnings.push(format!(
            "upper exponent: maximizing lambda lies beyond the cap {LAMBDA_CAP}; bracket extended to {hi}"
        ));
    }
    let lambda = bisect(|l| rv.tilted_mean(l) - r, 0.0, hi, 200);
    let value = lambda * r - rv.cgf(lambda);
    Ok((value.max(0.0), lambda, warnings))
}

/// `E̲(R)` with the maximizing λ (`+inf` when the sup is a limit).
///
/// The derivative of `(λR − Λ)/(1+λ)` has the sign of
/// `h(λ) = R − (1+λ)Λ'(λ) + Λ(λ)`, and `h' = −(1+λ)Λ'' ≤ 0`, so the
/// objective is unimodal and the maximizer is the root of `h`. The result is
/// cross-checked against a coarse grid and polished if the grid does better.
pub fn exponent_lower(sys: &BioSystem, r: f64) -> Result<(f64, f64, Vec<String>)> {
    check_rate(r)?;
    sys.require_nondegenerate()?;
    let rv = sys.density();
    let mut warnings = Vec::new();
    if r <= sys.capacity {
        return Ok((0.0, 0.0, warnings));
    }
    let objective = |l: f64| (l * r - rv.cgf(l)) / (1.0 + l);
    let h = |l: f64| r - (1.0 + l) * rv.tilted_mean(l) + rv.cgf(l);
    let (_, vmax) = rv.support_range();
    let limit = r - vmax;
    let mut hi = LAMBDA_CAP;
    while h(hi) > 0.0 {
        hi *= 2.0;
        if hi > LAMBDA_HARD_LIMIT {
            return Ok((limit.max(0.0), f64::INFINITY, warnings));
        }
    }
    if hi > LAMBDA_CAP {
        warnings.push(format!(
            "lower exponent: maximizing lambda lies beyond the cap {LAMBDA_CAP}; bracket extended to {hi}"
        ));
    }
    let mut lambda = bisect(|l| -h(l), 0.0, hi, 200);
    let mut value = objective(lambda);
    let grid_best = (1..=400)
        .map(|k| hi * k as f64 / 400.0)
        .map(|l| (l, objective(l)))
        .fold((0.0, 0.0), |a, b| if b.1 > a.1 { b } else { a });
    if grid_best.1 > value + 1e-9 {
        warnings.push("lower exponent: root bracket disagreed with grid; polished grid optimum".into());
        let step = hi / 400.0;
        let (l, v) = golden_min(
            |l| -objective(l),
            (grid_best.0 - step).max(0.0),
            grid_best.0 + step,
            1e-12,
        );
        lambda = l;
        value = -v;
    }
    Ok((value.max(0.0), lambda, warnings))
}

/// Both exponents bundled.
pub fn exponent_report(sys: &BioSystem, r: f64) -> Result<BioExponentReport> {
    let (e_lower, l_lower, mut warnings) = exponent_lower(sys, r)?;
    let (e_upper, l_upper, w2) = exponent_upper(sys, r)?;
    warnings.extend(w2);
    Ok(BioExponentReport {
        rate_r: r,
        capacity: sys.capacity,
        e_lower,
        e_upper: e_upper.max(e_lower),
        argmax_lambda_lower: l_lower,
        argmax_lambda_upper: l_upper,
        warnings,
    })
}

/// `(½e^{−nĒ}, 2e^{−nE̲})`, clamped to `[0,1]`.
pub fn correct_decoding_envelope(sys: &BioSystem, r: f64, n: usize) -> Result<(f64, f64)> {
    if n == 0 {
        return Err(Error::domain("n", 0.0, "n >= 1"));
    }
    let rep = exponent_report(sys, r)?;
    let n = n as f64;
    let lower = (0.5 * (-n * rep.e_upper).exp()).clamp(0.0, 1.0);
    let upper = (2.0 * (-n * rep.e_lower).exp()).clamp(0.0, 1.0);
    Ok((lower.min(upper), upper))
}

/// Moderate-deviations constant `1/(2V)`.
pub fn moderate_deviations_constant(sys: &BioSystem) -> Result<f64> {
    sys.require_nondegenerate()?;
    Ok(1.0 / (2.0 * sys.variance))
}

/// Normal approximation `nC + √(nV) Φ⁻¹(ε)` of the largest `ln M` at error `ε`.
pub fn second_order_rate(sys: &BioSystem, eps: f64, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::domain("n", 0.0, "n >= 1"));
    }
    sys.require_nondegenerate()?;
    let z = inverse_normal_cdf(eps)?;
    let n = n as f64;
    Ok(n * sys.capacity + (n * sys.variance).sqrt() * z)
}

/// `Φ⁻¹(p)`: rational initial guess refined by one Halley step on Φ.
pub fn inverse_normal_cdf(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::domain("epsilon", p, "(0,1)"));
    }
    if p == 0.5 {
        return Ok(0.0);
    }
    const A: [f64; 6] = [
        -3.969683028665376e1,
        2.209460984245205e2,
        -2.759285104469687e2,
        1.383577518672690e2,
        -3.066479806614716e1,
        2.506628277459239,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e1,
        1.615858368580409e2,
        -1.556989798598866e2,
        6.680131188771972e1,
        -1.328068155288572e1,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-3,
        -3.223964580411365e-1,
        -2.400758277161838,
        -2.549732539343734,
        4.374664141464968,
        2.938163982698783,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-3,
        3.224671290700398e-1,
        2.445134137142996,
        3.754408661907416,
    ];
    let p_low = 0.02425;
    let tail = |q: f64| {
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    let mut x = if p < p_low {
        tail((-2.0 * p.ln()).sqrt())
    } else if p > 1.0 - p_low {
        -tail((-2.0 * (1.0 - p).ln()).sqrt())
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    };
    // work on the smaller tail to keep the residual accurate
    let e = if x > 0.0 {
        (1.0 - p) - normal_sf(x)
    } else {
        normal_cdf(x) - p
    };
    let u = e * (2.0 * std::f64::consts::PI).sqrt() * (0.5 * x * x).exp();
    x -= u / (1.0 + 0.5 * x * u);
    Ok(x)
}

/// A tail probability together with how it was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailEstimate {
    pub prob: f64,
    /// Zero for exact evaluations; the Berry–Esseen half-width otherwise.
    pub half_width: f64,
    pub exact: bool,
}

/// Normal approximation of `Pr{(1/n) Σ X_k ≥ t}` with its Berry–Esseen half-width.
pub fn berry_esseen_tail(rv: &FiniteRandomVariable, n: usize, t: f64) -> TailEstimate {
    let nf = n as f64;
    let sigma = rv.variance().sqrt();
    if sigma == 0.0 {
        let hit = rv.mean() >= t - 1e-12;
        return TailEstimate {
            prob: if hit { 1.0 } else { 0.0 },
            half_width: 0.0,
            exact: true,
        };
    }
    let zscore = (nf * t - nf * rv.mean()) / (sigma * nf.sqrt());
    let hw = BERRY_ESSEEN_CONSTANT * rv.third_abs_central_moment() / (sigma.powi(3) * nf.sqrt());
    TailEstimate {
        prob: normal_sf(zscore),
        half_width: hw,
        exact: false,
    }
}

/// `Pr{(1/n) Σ ι_k ≥ t}`: exact convolution when the state space allows,
/// Berry–Esseen otherwise.
pub fn density_tail(sys: &BioSystem, n: usize, t: f64) -> Result<TailEstimate> {
    if n == 0 {
        return Err(Error::domain("n", 0.0, "n >= 1"));
    }
    match iid_tail_exact(sys.density(), n, t) {
        Ok(p) => Ok(TailEstimate {
            prob: p,
            half_width: 0.0,
            exact: true,
        }),
        Err(Error::TooLarge { .. }) => Ok(berry_esseen_tail(sys.density(), n, t)),
        Err(e) => Err(e),
    }
}

/// One-shot converse `Pr{(1/n)Σι ≥ R − η} + e^{−nη}`, clamped to 1. When the
/// tail is approximate its Berry–Esseen half-width is added so the value
/// remains an upper bound.
pub fn one_shot_converse(sys: &BioSystem, n: usize, r: f64, eta: f64) -> Result<TailEstimate> {
    if !(eta >= 0.0) {
        return Err(Error::domain("eta", eta, "eta >= 0"));
    }
    let tail = density_tail(sys, n, r - eta)?;
    let prob = (tail.prob + tail.half_width + (-(n as f64) * eta).exp()).min(1.0);
    Ok(TailEstimate { prob, ..tail })
}

/// One-shot achievability `Pr{(1/n)Σι ≥ R + γ} / (1 + e^{−nγ})`. When the
/// tail is approximate its half-width is subtracted.
pub fn one_shot_achievability(
    sys: &BioSystem,
    n: usize,
    r: f64,
    gamma: f64,
) -> Result<TailEstimate> {
    if !(gamma >= 0.0) {
        return Err(Error::domain("gamma", gamma, "gamma >= 0"));
    }
    let tail = density_tail(sys, n, r + gamma)?;
    let prob = ((tail.prob - tail.half_width).max(0.0)) / (1.0 + (-(n as f64) * gamma).exp());
    Ok(TailEstimate { prob, ..tail })
}
