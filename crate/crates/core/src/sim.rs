//! Monte Carlo simulation of enrollment, identification and lossy recovery,
//! with an exhaustive oracle for tiny instances.
//!
//! Two sampling modes:
//!
//! * explicit: every item's feature vector and observation is drawn and a
//!   trial is a pair of indicators;
//! * grouped (identity encoder only, any item count): only the queried item
//!   is drawn; competitor scores are i.i.d. given `zⁿ`, so the conditional
//!   probability of correct identification is computed from the exact law of
//!   a competitor's score. Trials average these conditional probabilities.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prob::{log_sum_exp, Channel, SystemTriple, MAX_STATES};
use crate::search::mix_seed;

/// Score difference under which two likelihoods count as tied.
pub const TIE_TOL: f64 = 1e-9;
/// Largest item count simulated explicitly.
pub const EXPLICIT_ITEM_LIMIT: usize = 1 << 16;
/// `Auto` samples by type once `items · n` exceeds this.
pub const AUTO_GROUPED_CELLS: f64 = 4096.0;
/// Term budget of [`exact_pc_bruteforce`].
pub const BRUTEFORCE_BUDGET: f64 = 1e8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant")]
pub enum EncoderSpec {
    /// Stores the observation itself.
    Identity,
    /// Random codebook of `⌈e^{n·codebook_rate}⌉` words drawn i.i.d. from the
    /// output law of `test_channel`; each observation is mapped to its most
    /// likely codeword and stored as that codeword's index modulo
    /// `⌈e^{n·bin_rate}⌉`.
    QuantizeBin {
        codebook_rate: f64,
        bin_rate: f64,
        /// `q(u|y)`.
        test_channel: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DecoderSpec {
    /// Most likely item, ties to the smallest index.
    MaxLikelihood,
    /// Item drawn with probability proportional to its likelihood.
    StochasticLikelihood,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum SimMode {
    /// Explicit when the item count allows it, grouped otherwise.
    #[default]
    Auto,
    Explicit,
    Grouped,
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub sys: SystemTriple,
    pub n: usize,
    /// Item count; real-valued so that `e^{nR}` beyond `u64` is expressible.
    pub items: f64,
    pub encoder: EncoderSpec,
    pub decoder: DecoderSpec,
    pub distortion_level: f64,
    pub trials: usize,
    pub seed: u64,
    pub mode: SimMode,
}

impl SimConfig {
    /// Identity encoder, ML decoder, automatic mode.
    pub fn new(sys: SystemTriple, n: usize, items: f64, distortion_level: f64, trials: usize, seed: u64) -> Result<Self> {
        let cfg = SimConfig {
            sys,
            n,
            items,
            encoder: EncoderSpec::Identity,
            decoder: DecoderSpec::MaxLikelihood,
            distortion_level,
            trials,
            seed,
            mode: SimMode::Auto,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_decoder(mut self, d: DecoderSpec) -> Self {
        self.decoder = d;
        self
    }

    pub fn with_encoder(mut self, e: EncoderSpec) -> Result<Self> {
        self.encoder = e;
        self.validate()?;
        Ok(self)
    }

    pub fn with_mode(mut self, m: SimMode) -> Self {
        self.mode = m;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::domain("n", 0.0, "n >= 1"));
        }
        if !(self.items >= 1.0) || !self.items.is_finite() || self.items.fract() != 0.0 {
            return Err(Error::domain("items", self.items, "integer >= 1"));
        }
        if self.trials == 0 {
            return Err(Error::domain("trials", 0.0, "trials >= 1"));
        }
        if !(self.distortion_level >= 0.0) || self.distortion_level.is_nan() {
            return Err(Error::domain("distortion level", self.distortion_level, "D >= 0"));
        }
        if let EncoderSpec::QuantizeBin {
            codebook_rate,
            bin_rate,
            test_channel,
        } = &self.encoder
        {
            for (name, r) in [("codebook rate", *codebook_rate), ("bin rate", *bin_rate)] {
                if !(r >= 0.0) || !r.is_finite() {
                    return Err(Error::domain(name, r, "rate >= 0"));
                }
            }
            let ch = Channel::named("test channel", test_channel.clone())?;
            if ch.in_size() != self.sys.ny() {
                return Err(Error::dim("test channel input", self.sys.ny(), ch.in_size()));
            }
        }
        Ok(())
    }

    /// `ln` of the number of stored labels per item.
    pub fn log_labels(&self) -> f64 {
        match &self.encoder {
            EncoderSpec::Identity => self.n as f64 * (self.sys.ny() as f64).ln(),
            EncoderSpec::QuantizeBin { bin_rate, .. } => (bin_count(self.n, *bin_rate) as f64).ln(),
        }
    }

    fn grouped(&self) -> Result<bool> {
        let fits = self.items <= EXPLICIT_ITEM_LIMIT as f64;
        match (self.mode, &self.encoder) {
            (SimMode::Explicit, _) if !fits => Err(Error::Budget {
                terms: self.items,
                limit: EXPLICIT_ITEM_LIMIT as f64,
            }),
            (SimMode::Explicit, _) => Ok(false),
            (SimMode::Grouped, EncoderSpec::Identity) => Ok(true),
            (SimMode::Grouped, _) => Err(Error::Domain {
                name: "mode".into(),
                value: f64::NAN,
                domain: "grouped sampling requires the identity encoder".into(),
            }),
            (SimMode::Auto, EncoderSpec::Identity) => Ok(self.items * self.n as f64 > AUTO_GROUPED_CELLS),
            (SimMode::Auto, _) if fits => Ok(false),
            (SimMode::Auto, _) => Err(Error::Budget {
                terms: self.items,
                limit: EXPLICIT_ITEM_LIMIT as f64,
            }),
        }
    }
}

fn codebook_size(n: usize, rate: f64) -> usize {
    ((n as f64 * rate).exp().ceil() as usize).max(1)
}

fn bin_count(n: usize, rate: f64) -> usize {
    codebook_size(n, rate)
}

/// One trial's indicators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrialOutcome {
    pub correct_id: bool,
    pub excess_distortion: bool,
    /// Conditional probability of correct identification given the sampled
    /// data (grouped mode); `1` or `0` in explicit mode.
    pub p_correct_id: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimEstimate {
    pub p_e_hat: f64,
    pub p_c_hat: f64,
    /// 95% half-width.
    pub ci_halfwidth: f64,
    pub trials_used: usize,
    /// `false` below 100 trials.
    pub ci_reliable: bool,
    pub identification_error_rate: f64,
    pub excess_distortion_rate: f64,
    pub grouped: bool,
    pub log_labels: f64,
    pub warnings: Vec<String>,
}

fn cdf_of(p: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    let mut c: Vec<f64> = p
        .iter()
        .map(|v| {
            acc += v;
            acc
        })
        .collect();
    if let Some(last) = c.last_mut() {
        *last = f64::INFINITY;
    }
    c
}

fn draw(rng: &mut ChaCha8Rng, cdf: &[f64]) -> usize {
    let u: f64 = rng.random();
    cdf.iter().position(|&c| u < c).unwrap_or(cdf.len() - 1)
}

fn log_or_neg_inf(v: f64) -> f64 {
    if v > 0.0 {
        v.ln()
    } else {
        f64::NEG_INFINITY
    }
}

/// Law of a competitor's score `Σ ln L(zᵢ | ·)` for a fixed `zⁿ` type.
struct ScoreLaw {
    values: Vec<f64>,
    probs: Vec<f64>,
    /// `suffix[i] = Σ_{j ≥ i} probs[j]`.
    suffix: Vec<f64>,
    /// `prefix[i] = Σ_{j < i} probs[j]`.
    prefix: Vec<f64>,
}

impl ScoreLaw {
    /// Per-letter atoms `(value, prob)` for each symbol, repeated `counts[z]` times.
    fn build(per_symbol: &[Vec<(f64, f64)>], counts: &[usize]) -> Result<Self> {
        let mut acc: Vec<(f64, f64)> = vec![(0.0, 1.0)];
        for (atoms, &c) in per_symbol.iter().zip(counts) {
            for _ in 0..c {
                let mut next: Vec<(f64, f64)> = Vec::with_capacity(acc.len() * atoms.len());
                for &(v, p) in &acc {
                    for &(w, q) in atoms {
                        next.push((v + w, p * q));
                    }
                }
                next.sort_by(|a, b| a.0.total_cmp(&b.0));
                acc.clear();
                for (v, p) in next {
                    match acc.last_mut() {
                        Some(last) if (v - last.0).abs() <= 1e-11 * (1.0 + v.abs()) => last.1 += p,
                        _ => acc.push((v, p)),
                    }
                }
                if acc.len() > MAX_STATES {
                    return Err(Error::TooLarge {
                        states: acc.len(),
                        limit: MAX_STATES,
                    });
                }
            }
        }
        let values: Vec<f64> = acc.iter().map(|a| a.0).collect();
        let probs: Vec<f64> = acc.iter().map(|a| a.1).collect();
        let mut suffix = vec![0.0; probs.len() + 1];
        for i in (0..probs.len()).rev() {
            suffix[i] = suffix[i + 1] + probs[i];
        }
        let mut prefix = vec![0.0; probs.len() + 1];
        for i in 0..probs.len() {
            prefix[i + 1] = prefix[i] + probs[i];
        }
        Ok(ScoreLaw {
            values,
            probs,
            suffix,
            prefix,
        })
    }

    /// `(ln P(S < t), P(S ≥ t))`, each side summed from its own tail.
    fn split_ge(&self, t: f64) -> (f64, f64) {
        let i = self.values.partition_point(|&v| v < t);
        (Self::log_lower(self.prefix[i], self.suffix[i]), self.suffix[i].min(1.0))
    }

    /// `(ln P(S ≤ t), P(S > t))`.
    fn split_gt(&self, t: f64) -> (f64, f64) {
        let i = self.values.partition_point(|&v| v <= t);
        (Self::log_lower(self.prefix[i], self.suffix[i]), self.suffix[i].min(1.0))
    }

    fn log_lower(below: f64, above: f64) -> f64 {
        if above < 0.5 {
            (-above).ln_1p()
        } else if below > 0.0 {
            below.min(1.0).ln()
        } else {
            f64::NEG_INFINITY
        }
    }

}

/// ML: probability that the queried item wins among `m` items when each
/// competitor independently scores below with probability `a` and at most a tie
/// with probability `b`, the queried item sitting at a uniform position.
/// Equals `(b^m − a^m)/(m(b − a))`.
fn ml_win_probability(law: &ScoreLaw, s: f64, m: f64) -> f64 {
    if m <= 1.0 {
        return 1.0;
    }
    let (ln_a, above_ge) = law.split_ge(s - TIE_TOL);
    let (ln_b, above_gt) = law.split_gt(s + TIE_TOL);
    let tie = above_ge - above_gt;
    if tie <= 0.0 {
        return ((m - 1.0) * ln_a).exp();
    }
    let (a_m, b_m) = (m * ln_a, m * ln_b);
    if b_m == f64::NEG_INFINITY {
        return 0.0;
    }
    (b_m + (-(a_m - b_m).exp_m1()).ln() - m.ln() - tie.ln()).exp().min(1.0)
}

/// Stochastic decoder: draws competitor counts per score atom and returns the
/// probability of picking the queried item.
fn stochastic_win_probability(law: &ScoreLaw, s: f64, m: f64, rng: &mut ChaCha8Rng) -> f64 {
    let others = m - 1.0;
    if others <= 0.0 {
        return 1.0;
    }
    let mut terms: Vec<f64> = Vec::with_capacity(law.values.len() + 1);
    terms.push(s);
    if others <= 1e15 {
        let mut remaining = others as u64;
        let mut mass = 1.0;
        for (&v, &p) in law.values.iter().zip(&law.probs) {
            if remaining == 0 {
                break;
            }
            let q = if mass > 0.0 { (p / mass).clamp(0.0, 1.0) } else { 1.0 };
            let k = Binomial::new(remaining, q).map(|d| d.sample(rng)).unwrap_or(0);
            remaining -= k;
            mass -= p;
            if k > 0 {
                terms.push(v + (k as f64).ln());
            }
        }
    } else {
        for (&v, &p) in law.values.iter().zip(&law.probs) {
            let lam = others * p;
            let k = if lam < 1e12 {
                Poisson::new(lam).map(|d| d.sample(rng)).unwrap_or(0.0)
            } else {
                let g: f64 = rng.sample(StandardNormal);
                lam + lam.sqrt() * g
            };
            if k > 0.0 {
                terms.push(v + k.ln());
            }
        }
    }
    (s - log_sum_exp(terms.iter().copied())).exp()
}

/// Per-configuration tables.
struct Prepared<'a> {
    cfg: &'a SimConfig,
    px: Vec<f64>,
    pyx: Vec<Vec<f64>>,
    pzx: Vec<Vec<f64>>,
    /// Identity: `ln P_{Z|Y}`; quantizer: `ln P_{Z|U}`; indexed `[stored][z]`.
    score: Vec<Vec<f64>>,
    /// Bayes reconstruction indexed `[stored * |Z| + z]`.
    recon: Vec<usize>,
    quant: Option<Quantizer>,
    laws: Mutex<HashMap<Vec<usize>, Arc<ScoreLaw>>>,
    grouped: bool,
}

struct Quantizer {
    codewords: usize,
    bins: usize,
    qu: Vec<f64>,
    /// `ln P_{Y|U}`, `[u][y]`.
    ln_y_given_u: Vec<Vec<f64>>,
}

impl<'a> Prepared<'a> {
    fn new(cfg: &'a SimConfig) -> Result<Self> {
        cfg.validate()?;
        let sys = &cfg.sys;
        let (nx, ny, nz) = (sys.nx(), sys.ny(), sys.nz());
        let d = sys.distortion();
        let (score, recon, quant) = match &cfg.encoder {
            EncoderSpec::Identity => {
                let pzy = sys.pzy().to_channel_filled();
                let score = (0..ny).map(|y| (0..nz).map(|z| log_or_neg_inf(pzy.get(y, z))).collect()).collect();
                let post = sys.px_given_yz().to_channel_filled();
                let recon = (0..ny * nz).map(|r| d.bayes_choice(post.row(r)).0).collect();
                (score, recon, None)
            }
            EncoderSpec::QuantizeBin {
                codebook_rate,
                bin_rate,
                test_channel,
            } => {
                let q = Channel::new(test_channel.clone())?;
                let nu = q.out_size();
                let mut pyu = vec![0.0; ny * nu];
                let mut pxzu = vec![0.0; nu * nz * nx];
                for y in 0..ny {
                    for u in 0..nu {
                        pyu[y * nu + u] = sys.py().get(y) * q.get(y, u);
                        for x in 0..nx {
                            for z in 0..nz {
                                pxzu[(u * nz + z) * nx + x] += sys.joint(x, y, z) * q.get(y, u);
                            }
                        }
                    }
                }
                let qu: Vec<f64> = (0..nu).map(|u| (0..ny).map(|y| pyu[y * nu + u]).sum()).collect();
                let ln_y_given_u = (0..nu)
                    .map(|u| (0..ny).map(|y| log_or_neg_inf(pyu[y * nu + u] / qu[u])).collect())
                    .collect();
                let score = (0..nu)
                    .map(|u| {
                        (0..nz)
                            .map(|z| {
                                let pz: f64 = (0..nx).map(|x| pxzu[(u * nz + z) * nx + x]).sum();
                                log_or_neg_inf(pz / qu[u])
                            })
                            .collect()
                    })
                    .collect();
                let post = crate::prob::Conditional::from_joint_rows(nu * nz, nx, &pxzu).to_channel_filled();
                let recon = (0..nu * nz).map(|r| d.bayes_choice(post.row(r)).0).collect();
                let quant = Quantizer {
                    codewords: codebook_size(cfg.n, *codebook_rate),
                    bins: bin_count(cfg.n, *bin_rate),
                    qu,
                    ln_y_given_u,
                };
                (score, recon, Some(quant))
            }
        };
        if let Some(qz) = &quant {
            if qz.codewords > EXPLICIT_ITEM_LIMIT * 16 {
                return Err(Error::Budget {
                    terms: qz.codewords as f64,
                    limit: (EXPLICIT_ITEM_LIMIT * 16) as f64,
                });
            }
        }
        Ok(Prepared {
            cfg,
            px: cdf_of(sys.px().probs()),
            pyx: (0..nx).map(|x| cdf_of(sys.pyx().row(x))).collect(),
            pzx: (0..nx).map(|x| cdf_of(sys.pzx().row(x))).collect(),
            score,
            recon,
            quant,
            laws: Mutex::new(HashMap::new()),
            grouped: cfg.grouped()?,
        })
    }

    fn excess(&self, x: &[usize], stored: &[usize], z: &[usize]) -> bool {
        let nz = self.cfg.sys.nz();
        let d = self.cfg.sys.distortion();
        let total: f64 = (0..x.len()).map(|i| d.get(x[i], self.recon[stored[i] * nz + z[i]])).sum();
        total / x.len() as f64 > self.cfg.distortion_level + 1e-12
    }

    fn law_for(&self, z: &[usize]) -> Result<Arc<ScoreLaw>> {
        let nz = self.cfg.sys.nz();
        let mut counts = vec![0usize; nz];
        for &zi in z {
            counts[zi] += 1;
        }
        if let Some(l) = self.laws.lock().unwrap().get(&counts) {
            return Ok(l.clone());
        }
        let py = self.cfg.sys.py();
        let per_symbol: Vec<Vec<(f64, f64)>> = (0..nz)
            .map(|zi| {
                let mut atoms: Vec<(f64, f64)> = (0..self.cfg.sys.ny())
                    .filter(|&y| py.get(y) > 0.0 && self.score[y][zi].is_finite())
                    .map(|y| (self.score[y][zi], py.get(y)))
                    .collect();
                atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
                let mut merged: Vec<(f64, f64)> = Vec::new();
                for (v, p) in atoms {
                    match merged.last_mut() {
                        Some(l) if (v - l.0).abs() <= 1e-12 => l.1 += p,
                        _ => merged.push((v, p)),
                    }
                }
                merged
            })
            .collect();
        let law = Arc::new(ScoreLaw::build(&per_symbol, &counts)?);
        self.laws.lock().unwrap().insert(counts, law.clone());
        Ok(law)
    }

    fn grouped_trial(&self, rng: &mut ChaCha8Rng) -> Result<TrialOutcome> {
        let n = self.cfg.n;
        let mut x = vec![0; n];
        let mut y = vec![0; n];
        let mut z = vec![0; n];
        for i in 0..n {
            x[i] = draw(rng, &self.px);
            y[i] = draw(rng, &self.pyx[x[i]]);
            z[i] = draw(rng, &self.pzx[x[i]]);
        }
        let s: f64 = (0..n).map(|i| self.score[y[i]][z[i]]).sum();
        let law = self.law_for(&z)?;
        let p = match self.cfg.decoder {
            DecoderSpec::MaxLikelihood => ml_win_probability(&law, s, self.cfg.items),
            DecoderSpec::StochasticLikelihood => stochastic_win_probability(&law, s, self.cfg.items, rng),
        };
        let u: f64 = rng.random();
        Ok(TrialOutcome {
            correct_id: u < p,
            excess_distortion: self.excess(&x, &y, &z),
            p_correct_id: p,
        })
    }

    fn explicit_trial(&self, rng: &mut ChaCha8Rng) -> TrialOutcome {
        let n = self.cfg.n;
        let m = self.cfg.items as usize;
        let mut xs = vec![0; m * n];
        let mut ys = vec![0; m * n];
        for k in 0..m * n {
            xs[k] = draw(rng, &self.px);
            ys[k] = draw(rng, &self.pyx[xs[k]]);
        }
        let codebook = self.quant.as_ref().map(|q| {
            let cdf = cdf_of(&q.qu);
            (0..q.codewords * n).map(|_| draw(rng, &cdf)).collect::<Vec<_>>()
        });
        let w = rng.random_range(0..m);
        let z: Vec<usize> = (0..n).map(|i| draw(rng, &self.pzx[xs[w * n + i]])).collect();
        let store = Stored::encode(self, &ys, codebook);
        let scores = store.scores(self, &z);
        let w_hat = match self.cfg.decoder {
            DecoderSpec::MaxLikelihood => ml_choice(&scores.item),
            DecoderSpec::StochasticLikelihood => {
                let probs = likelihood_weights(&scores.item);
                let u: f64 = rng.random();
                let mut acc = 0.0;
                probs
                    .iter()
                    .position(|p| {
                        acc += p;
                        u < acc
                    })
                    .unwrap_or(m - 1)
            }
        };
        let recon_from = store.reconstruction_input(&scores, w_hat, n);
        TrialOutcome {
            correct_id: w_hat == w,
            excess_distortion: self.excess(&xs[w * n..(w + 1) * n], recon_from, &z),
            p_correct_id: if w_hat == w { 1.0 } else { 0.0 },
        }
    }

    fn trial(&self, trial_seed: u64) -> Result<TrialOutcome> {
        let mut rng = ChaCha8Rng::seed_from_u64(trial_seed);
        if self.grouped {
            self.grouped_trial(&mut rng)
        } else {
            Ok(self.explicit_trial(&mut rng))
        }
    }
}

/// Stored labels for every item.
struct Stored {
    n: usize,
    /// Identity: observations; quantizer: codeword symbols.
    symbols: Vec<usize>,
    /// Quantizer: bin of each item and codeword count.
    bins: Option<(Vec<usize>, usize, usize)>,
}

struct Scores {
    item: Vec<f64>,
    /// Quantizer: best codeword per bin.
    best_word: Vec<usize>,
}

impl Stored {
    fn encode(p: &Prepared, ys: &[usize], codebook: Option<Vec<usize>>) -> Self {
        let n = p.cfg.n;
        match (&p.quant, codebook) {
            (Some(q), Some(cb)) => {
                let m = ys.len() / n;
                let bins = (0..m)
                    .map(|it| {
                        let y = &ys[it * n..(it + 1) * n];
                        let mut best = (f64::NEG_INFINITY, 0);
                        for k in 0..q.codewords {
                            let s: f64 = (0..n).map(|i| q.ln_y_given_u[cb[k * n + i]][y[i]]).sum();
                            if s > best.0 + TIE_TOL {
                                best = (s, k);
                            }
                        }
                        best.1 % q.bins
                    })
                    .collect();
                Stored {
                    n,
                    symbols: cb,
                    bins: Some((bins, q.codewords, q.bins)),
                }
            }
            _ => Stored {
                n,
                symbols: ys.to_vec(),
                bins: None,
            },
        }
    }

    fn scores(&self, p: &Prepared, z: &[usize]) -> Scores {
        let n = self.n;
        match &self.bins {
            None => Scores {
                item: (0..self.symbols.len() / n)
                    .map(|m| (0..n).map(|i| p.score[self.symbols[m * n + i]][z[i]]).sum())
                    .collect(),
                best_word: Vec::new(),
            },
            Some((bins, words, nbins)) => {
                let mut per_bin = vec![(f64::NEG_INFINITY, usize::MAX); *nbins];
                for k in 0..*words {
                    let s: f64 = (0..n).map(|i| p.score[self.symbols[k * n + i]][z[i]]).sum();
                    let b = k % nbins;
                    if per_bin[b].1 == usize::MAX || s > per_bin[b].0 + TIE_TOL {
                        per_bin[b] = (s, k);
                    }
                }
                Scores {
                    item: bins.iter().map(|&b| per_bin[b].0).collect(),
                    best_word: per_bin.iter().map(|b| b.1).collect(),
                }
            }
        }
    }

    /// Stored symbols used to reconstruct when item `w_hat` is declared.
    fn reconstruction_input<'s>(&'s self, scores: &Scores, w_hat: usize, n: usize) -> &'s [usize] {
        match &self.bins {
            None => &self.symbols[w_hat * n..(w_hat + 1) * n],
            Some((bins, _, _)) => {
                let k = scores.best_word[bins[w_hat]];
                if k == usize::MAX {
                    // empty bin: no codeword, reuse the first one
                    &self.symbols[0..n]
                } else {
                    &self.symbols[k * n..(k + 1) * n]
                }
            }
        }
    }
}

fn ml_choice(scores: &[f64]) -> usize {
    let best = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if best == f64::NEG_INFINITY {
        return 0;
    }
    scores.iter().position(|&s| s >= best - TIE_TOL).unwrap()
}

fn likelihood_weights(scores: &[f64]) -> Vec<f64> {
    let best = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if best == f64::NEG_INFINITY {
        return vec![1.0 / scores.len() as f64; scores.len()];
    }
    let w: Vec<f64> = scores.iter().map(|&s| (s - best).exp()).collect();
    let tot: f64 = w.iter().sum();
    w.into_iter().map(|v| v / tot).collect()
}

/// Runs one trial from its seed.
pub fn run_trial(cfg: &SimConfig, trial_seed: u64) -> Result<TrialOutcome> {
    Prepared::new(cfg)?.trial(trial_seed)
}

/// 95% half-width for a proportion: normal approximation, Wilson when
/// `p(1−p)·trials < 10`.
pub fn proportion_ci(p: f64, trials: usize) -> f64 {
    let t = trials as f64;
    let z = 1.959963984540054;
    if p * (1.0 - p) * t >= 10.0 {
        return z * (p * (1.0 - p) / t).sqrt();
    }
    let z2 = z * z;
    z / (1.0 + z2 / t) * (p * (1.0 - p) / t + z2 / (4.0 * t * t)).sqrt()
}

/// Averages trials seeded by `mix_seed(seed, index)`. The result does not
/// depend on the thread schedule.
pub fn estimate_pe(cfg: &SimConfig) -> Result<SimEstimate> {
    let prep = Prepared::new(cfg)?;
    let outcomes: Vec<TrialOutcome> = (0..cfg.trials as u64)
        .into_par_iter()
        .map(|t| prep.trial(mix_seed(cfg.seed, t)))
        .collect::<Result<Vec<_>>>()?;
    let t = cfg.trials as f64;
    let excess = outcomes.iter().filter(|o| o.excess_distortion).count();
    let mut warnings = Vec::new();
    let (p_c, ci, id_err) = if prep.grouped {
        let vals: Vec<f64> = outcomes
            .iter()
            .map(|o| if o.excess_distortion { 0.0 } else { o.p_correct_id })
            .collect();
        let mean = vals.iter().sum::<f64>() / t;
        let var = if cfg.trials > 1 {
            vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (t - 1.0)
        } else {
            0.0
        };
        let id = 1.0 - outcomes.iter().map(|o| o.p_correct_id).sum::<f64>() / t;
        (mean, 1.959963984540054 * (var / t).sqrt(), id)
    } else {
        let good = outcomes.iter().filter(|o| o.correct_id && !o.excess_distortion).count();
        let p = good as f64 / t;
        let id = outcomes.iter().filter(|o| !o.correct_id).count() as f64 / t;
        (p, proportion_ci(p, cfg.trials), id)
    };
    if cfg.trials < 100 {
        warnings.push("fewer than 100 trials: interval unreliable".into());
    }
    if p_c > 0.0 && p_c < 1e-6 {
        warnings.push("correct-decoding probability below 1e-6: estimate dominated by rare trials".into());
    }
    Ok(SimEstimate {
        p_e_hat: 1.0 - p_c,
        p_c_hat: p_c,
        ci_halfwidth: ci,
        trials_used: cfg.trials,
        ci_reliable: cfg.trials >= 100,
        identification_error_rate: id_err,
        excess_distortion_rate: excess as f64 / t,
        grouped: prep.grouped,
        log_labels: cfg.log_labels(),
        warnings,
    })
}

/// Kahan-compensated accumulator.
#[derive(Default)]
struct Kahan {
    sum: f64,
    c: f64,
}

impl Kahan {
    fn add(&mut self, v: f64) {
        let y = v - self.c;
        let t = self.sum + y;
        self.c = (t - self.sum) - y;
        self.sum = t;
    }
}

/// Exact probability of correct decoding by exhaustive summation over
/// codebooks, feature vectors, observations, the queried index and `zⁿ`.
/// Alphabets at most 2, `n ≤ 3`, at most 3 items.
pub fn exact_pc_bruteforce(cfg: &SimConfig) -> Result<f64> {
    let sys = &cfg.sys;
    if [sys.nx(), sys.ny(), sys.nz(), sys.nxhat()].iter().any(|&s| s > 2) {
        return Err(Error::Domain {
            name: "alphabet size".into(),
            value: sys.nx().max(sys.ny()).max(sys.nz()).max(sys.nxhat()) as f64,
            domain: "at most 2".into(),
        });
    }
    if cfg.n > 3 {
        return Err(Error::domain("n", cfg.n as f64, "n <= 3"));
    }
    if cfg.items > 3.0 {
        return Err(Error::domain("items", cfg.items, "items <= 3"));
    }
    let explicit = SimConfig {
        mode: SimMode::Explicit,
        ..cfg.clone()
    };
    let prep = Prepared::new(&explicit)?;
    let (n, m) = (cfg.n, cfg.items as usize);
    let (nx, ny, nz) = (sys.nx(), sys.ny(), sys.nz());
    let (words, nu) = match &prep.quant {
        Some(q) => (q.codewords, q.qu.len()),
        None => (0, 1),
    };
    let books = (nu as f64).powi((words * n) as i32);
    let pairs = ((nx * ny) as f64).powi((n * m) as i32);
    let terms = books * pairs * m as f64 * (nz as f64).powi(n as i32);
    if terms > BRUTEFORCE_BUDGET {
        return Err(Error::Budget {
            terms,
            limit: BRUTEFORCE_BUDGET,
        });
    }
    let odometer = |code: usize, base: usize, len: usize| -> Vec<usize> {
        let mut c = code;
        (0..len)
            .map(|_| {
                let v = c % base;
                c /= base;
                v
            })
            .collect()
    };
    let qu = prep.quant.as_ref().map(|q| q.qu.clone()).unwrap_or_default();
    let per_book: Vec<f64> = (0..books as usize)
        .into_par_iter()
        .map(|b| {
            let cb = odometer(b, nu, words * n);
            let p_book: f64 = cb.iter().map(|&u| qu[u]).product();
            if p_book == 0.0 {
                return 0.0;
            }
            let mut acc = Kahan::default();
            for pc in 0..pairs as usize {
                let xy = odometer(pc, nx * ny, n * m);
                let xs: Vec<usize> = xy.iter().map(|v| v / ny).collect();
                let ys: Vec<usize> = xy.iter().map(|v| v % ny).collect();
                let p_items: f64 = (0..n * m)
                    .map(|k| sys.px().get(xs[k]) * sys.pyx().get(xs[k], ys[k]))
                    .product();
                if p_items == 0.0 {
                    continue;
                }
                let store = Stored::encode(&prep, &ys, prep.quant.as_ref().map(|_| cb.clone()));
                for w in 0..m {
                    for zc in 0..nz.pow(n as u32) {
                        let z = odometer(zc, nz, n);
                        let p_z: f64 = (0..n).map(|i| sys.pzx().get(xs[w * n + i], z[i])).product();
                        if p_z == 0.0 {
                            continue;
                        }
                        let scores = store.scores(&prep, &z);
                        let p_id = match cfg.decoder {
                            DecoderSpec::MaxLikelihood => (ml_choice(&scores.item) == w) as u8 as f64,
                            DecoderSpec::StochasticLikelihood => likelihood_weights(&scores.item)[w],
                        };
                        if p_id == 0.0 {
                            continue;
                        }
                        let rec = store.reconstruction_input(&scores, w, n);
                        if prep.excess(&xs[w * n..(w + 1) * n], rec, &z) {
                            continue;
                        }
                        acc.add(p_book * p_items * p_z * p_id / m as f64);
                    }
                }
            }
            acc.sum
        })
        .collect();
    let mut total = Kahan::default();
    for v in per_book {
        total.add(v);
    }
    Ok(total.sum.clamp(0.0, 1.0))
}

/// Which probability an exponent fit tracks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DecayTarget {
    CorrectDecoding,
    Error,
}

/// Per-blocklength row of an exponent fit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExponentPoint {
    pub n: usize,
    pub items: f64,
    pub p_hat: f64,
    pub ci_halfwidth: f64,
    pub neg_log_p_per_n: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExponentFit {
    pub target: DecayTarget,
    /// Slope of `−ln p̂` against `n`.
    pub slope: f64,
    /// 95% half-width of the slope.
    pub slope_ci: f64,
    pub intercept: f64,
    pub points: Vec<ExponentPoint>,
    pub warnings: Vec<String>,
}

/// Weighted least squares of `−ln p` on `n`, each point weighted by the
/// inverse delta-method variance `(ci / (1.96 p))^{-2}`.
pub fn fit_exponent(target: DecayTarget, points: Vec<ExponentPoint>) -> Result<ExponentFit> {
    let mut warnings = Vec::new();
    let used: Vec<&ExponentPoint> = points
        .iter()
        .filter(|p| {
            let ok = p.p_hat > 0.0;
            if !ok {
                warnings.push(format!("n = {}: probability estimate is 0, point dropped", p.n));
            }
            ok
        })
        .collect();
    if used.len() < 2 {
        return Err(Error::Degenerate("fewer than two usable blocklengths".into()));
    }
    let z = 1.959963984540054;
    let w: Vec<f64> = used
        .iter()
        .map(|p| {
            let sd = (p.ci_halfwidth / (z * p.p_hat)).max(1e-12);
            1.0 / (sd * sd)
        })
        .collect();
    let sw: f64 = w.iter().sum();
    let xbar = used.iter().zip(&w).map(|(p, w)| w * p.n as f64).sum::<f64>() / sw;
    let ys: Vec<f64> = used.iter().map(|p| -p.p_hat.ln()).collect();
    let ybar = ys.iter().zip(&w).map(|(y, w)| w * y).sum::<f64>() / sw;
    let sxx: f64 = used.iter().zip(&w).map(|(p, w)| w * (p.n as f64 - xbar).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(Error::Degenerate("blocklengths do not vary".into()));
    }
    let sxy: f64 = used
        .iter()
        .zip(&w)
        .zip(&ys)
        .map(|((p, w), y)| w * (p.n as f64 - xbar) * (y - ybar))
        .sum();
    let slope = sxy / sxx;
    Ok(ExponentFit {
        target,
        slope,
        slope_ci: z / sxx.sqrt(),
        intercept: ybar - slope * xbar,
        points,
        warnings,
    })
}

/// Simulates each blocklength with `items = max(1, round(e^{n·id_rate}))`
/// (or the template's item count when no rate is given) and fits the decay.
pub fn empirical_exponent(
    template: &SimConfig,
    id_rate: Option<f64>,
    n_list: &[usize],
    target: DecayTarget,
) -> Result<ExponentFit> {
    if n_list.len() < 3 {
        return Err(Error::domain("blocklength count", n_list.len() as f64, "at least 3"));
    }
    let mut points = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let items = match id_rate {
            Some(r) => (n as f64 * r).exp().round().max(1.0),
            None => template.items,
        };
        let cfg = SimConfig {
            n,
            items,
            ..template.clone()
        };
        let est = estimate_pe(&cfg)?;
        let p = match target {
            DecayTarget::CorrectDecoding => est.p_c_hat,
            DecayTarget::Error => est.p_e_hat,
        };
        points.push(ExponentPoint {
            n,
            items,
            p_hat: p,
            ci_halfwidth: est.ci_halfwidth,
            neg_log_p_per_n: -p.ln() / n as f64,
        });
    }
    fit_exponent(target, points)
}
