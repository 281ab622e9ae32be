//! Small derivative-free optimizers and simplex helpers shared by the
//! region and exponent searches.

/// Golden-section minimization of a unimodal `f` on `[lo, hi]`.
/// Returns `(argmin, min)`.
pub fn golden_min(mut f: impl FnMut(f64) -> f64, lo: f64, hi: f64, tol: f64) -> (f64, f64) {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    if fc <= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Bisection for the root of a function that changes sign on `[lo, hi]`
/// with `f(lo) < 0 < f(hi)`. Returns the midpoint of the final bracket.
pub fn bisect(mut f: impl FnMut(f64) -> f64, mut lo: f64, mut hi: f64, iters: usize) -> f64 {
    for _ in 0..iters {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi.abs().max(1.0) {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Options for [`nelder_mead`].
#[derive(Debug, Clone, Copy)]
pub struct NmOptions {
    pub max_evals: usize,
    pub initial_step: f64,
    pub f_tol: f64,
}

impl Default for NmOptions {
    fn default() -> Self {
        NmOptions {
            max_evals: 2000,
            initial_step: 0.5,
            f_tol: 1e-12,
        }
    }
}

/// Nelder–Mead minimization over `ℝ^k`. Non-finite evaluations are treated
/// as `+inf`. Returns `(argmin, min)`.
pub fn nelder_mead(
    mut f: impl FnMut(&[f64]) -> f64,
    x0: &[f64],
    opts: NmOptions,
) -> (Vec<f64>, f64) {
    let k = x0.len();
    let mut eval = |x: &[f64]| {
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    if k == 0 {
        let v = eval(x0);
        return (Vec::new(), v);
    }
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(k + 1);
    simplex.push((x0.to_vec(), eval(x0)));
    for i in 0..k {
        let mut x = x0.to_vec();
        x[i] += opts.initial_step;
        let v = eval(&x);
        simplex.push((x, v));
    }
    let mut evals = k + 1;
    let centroid = |s: &[(Vec<f64>, f64)]| {
        let mut c = vec![0.0; k];
        for (x, _) in &s[..k] {
            for (ci, xi) in c.iter_mut().zip(x) {
                *ci += xi / k as f64;
            }
        }
        c
    };
    let along = |c: &[f64], w: &[f64], t: f64| -> Vec<f64> {
        c.iter().zip(w).map(|(ci, wi)| ci + t * (wi - ci)).collect()
    };
    while evals < opts.max_evals {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0].1;
        let worst = simplex[k].1;
        if (worst - best).abs() <= opts.f_tol * (1.0 + best.abs()) {
            break;
        }
        let c = centroid(&simplex);
        let xr = along(&c, &simplex[k].0, -1.0);
        let fr = eval(&xr);
        evals += 1;
        if fr < simplex[0].1 {
            let xe = along(&c, &simplex[k].0, -2.0);
            let fe = eval(&xe);
            evals += 1;
            simplex[k] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[k - 1].1 {
            simplex[k] = (xr, fr);
        } else {
            let (xc, fc) = if fr < simplex[k].1 {
                let xc = along(&c, &xr, 0.5);
                let v = eval(&xc);
                (xc, v)
            } else {
                let xc = along(&c, &simplex[k].0, 0.5);
                let v = eval(&xc);
                (xc, v)
            };
            evals += 1;
            if fc < simplex[k].1.min(fr) {
                simplex[k] = (xc, fc);
            } else {
                let x0 = simplex[0].0.clone();
                for s in simplex.iter_mut().skip(1) {
                    s.0 = along(&x0, &s.0, 0.5);
                    s.1 = eval(&s.0);
                }
                evals += k;
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    simplex.swap_remove(0)
}

/// All points of the probability simplex of dimension `size` whose
/// coordinates are multiples of `1/steps`, in lexicographic order.
pub fn simplex_grid(size: usize, steps: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    let mut cur = vec![0usize; size];
    fn rec(pos: usize, left: usize, cur: &mut Vec<usize>, steps: usize, out: &mut Vec<Vec<f64>>) {
        if pos + 1 == cur.len() {
            cur[pos] = left;
            out.push(cur.iter().map(|&c| c as f64 / steps as f64).collect());
            return;
        }
        for c in (0..=left).rev() {
            cur[pos] = c;
            rec(pos + 1, left - c, cur, steps, out);
        }
    }
    if size > 0 {
        rec(0, steps, &mut cur, steps, &mut out);
    }
    out
}

/// Softmax of `logits`, stable under large inputs.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|&l| (l - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Logits whose softmax reproduces `p`, with zeros mapped to a large negative
/// value so that they stay reachable by local search.
pub fn logits_of(p: &[f64]) -> Vec<f64> {
    p.iter()
        .map(|&v| if v > 0.0 { v.ln() } else { -30.0 })
        .collect()
}

/// Mixes an integer index into a seed (splitmix64 finalizer).
pub fn mix_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
