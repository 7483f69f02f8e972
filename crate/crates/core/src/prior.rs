//! Multiplicative truncated gamma process prior: hyperparameters, shrinkage
//! state, the truncated gamma sampler and closed-form distance properties.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{checked_gamma_lr, checked_gamma_ur, ln_gamma};

use crate::error::{invalid, LspmError, Result};

/// Prior hyperparameters and the truncation level `p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparams {
    /// Shape of the gamma prior on the first shrinkage strength.
    pub a1: f64,
    /// Rate of the gamma prior on the first shrinkage strength.
    pub b1: f64,
    /// Shape of the truncated gamma prior on later shrinkage strengths.
    pub a2: f64,
    /// Rate of the truncated gamma prior on later shrinkage strengths.
    pub b2: f64,
    /// Left truncation point for later shrinkage strengths.
    pub c2: f64,
    pub mu_alpha: f64,
    pub sigma2_alpha: f64,
    /// Truncation level: number of latent dimensions fitted.
    pub p: usize,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self { a1: 1.1, b1: 1.0, a2: 2.0, b2: 1.0, c2: 1.0, mu_alpha: 0.0, sigma2_alpha: 9.0, p: 5 }
    }
}

impl Hyperparams {
    pub fn with_dims(p: usize) -> Self {
        Self { p, ..Self::default() }
    }

    /// Checks parameter domains; with `n` given, also requires `p < n / 2`.
    pub fn validate(&self, n: Option<usize>) -> Result<()> {
        let positive = |name: &str, v: f64| -> Result<()> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                invalid(format!("{name} must be positive and finite, got {v}"))
            }
        };
        if !(self.a1.is_finite() && self.a1 > 1.0) {
            return invalid(format!("a1 must exceed 1, got {}", self.a1));
        }
        positive("a2", self.a2)?;
        positive("b1", self.b1)?;
        positive("b2", self.b2)?;
        positive("sigma2_alpha", self.sigma2_alpha)?;
        if self.c2 != 1.0 {
            return invalid(format!("c2 must be 1, got {}", self.c2));
        }
        if !self.mu_alpha.is_finite() {
            return invalid("mu_alpha must be finite");
        }
        if self.p == 0 {
            return invalid("truncation level p must be at least 1");
        }
        if let Some(n) = n {
            if 2 * self.p >= n {
                return invalid(format!(
                    "truncation level p = {} must be below n / 2 = {}",
                    self.p,
                    n as f64 / 2.0
                ));
            }
        }
        Ok(())
    }
}

/// Shrinkage strengths and the precisions they induce by cumulative product.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShrinkageState {
    delta: Vec<f64>,
    omega: Vec<f64>,
}

impl ShrinkageState {
    /// `delta[0] > 0`, `delta[h] >= 1` for later entries.
    pub fn from_delta(delta: Vec<f64>) -> Result<Self> {
        if delta.is_empty() {
            return invalid("shrinkage state needs at least one dimension");
        }
        if !(delta[0].is_finite() && delta[0] > 0.0) {
            return invalid(format!("delta_1 must be positive, got {}", delta[0]));
        }
        if let Some((h, d)) = delta.iter().enumerate().skip(1).find(|(_, d)| !(d.is_finite() && **d >= 1.0)) {
            return invalid(format!("delta_{} must be >= 1, got {d}", h + 1));
        }
        let omega = cumulative_product(&delta);
        Ok(Self { delta, omega })
    }

    pub fn p(&self) -> usize {
        self.delta.len()
    }

    pub fn delta(&self) -> &[f64] {
        &self.delta
    }

    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    /// Per-dimension latent variances 1/omega.
    pub fn variances(&self) -> Vec<f64> {
        self.omega.iter().map(|w| 1.0 / w).collect()
    }
}

pub(crate) fn cumulative_product(delta: &[f64]) -> Vec<f64> {
    delta
        .iter()
        .scan(1.0, |acc, d| {
            *acc *= d;
            Some(*acc)
        })
        .collect()
}

/// Mass above which the inverse-CDF route is abandoned for rejection.
const TAIL_MASS_FLOOR: f64 = 1e-12;

/// Draws from Gamma(shape, rate) conditioned on being at least `lower`.
///
/// Uses inversion of the regularized incomplete gamma function on the
/// retained interval. When the retained upper tail holds less than 1e-12 of
/// the mass, an exact exponential-envelope rejection sampler is used instead.
pub fn sample_truncated_gamma<R: Rng + ?Sized>(shape: f64, rate: f64, lower: f64, rng: &mut R) -> Result<f64> {
    if !(shape.is_finite() && shape > 0.0) || !(rate.is_finite() && rate > 0.0) {
        return Err(LspmError::InvalidArgument(format!(
            "truncated gamma needs positive shape and rate, got ({shape}, {rate})"
        )));
    }
    if !(lower.is_finite() && lower >= 0.0) {
        return invalid(format!("truncation point must be finite and non-negative, got {lower}"));
    }
    let y_lower = rate * lower;
    let q_lower = gamma_ur(shape, y_lower);
    if q_lower < TAIL_MASS_FLOOR {
        return Ok(tail_rejection(shape, rate, lower, rng));
    }
    let p_lower = gamma_lr(shape, y_lower);
    let u: f64 = rng.random();
    // u in [0, 1) maps onto the CDF interval [F(lower), 1).
    let p_target = p_lower + u * q_lower;
    let y = if p_target < 0.5 {
        invert_gamma(shape, y_lower, Tail::Lower(p_target))
    } else {
        invert_gamma(shape, y_lower, Tail::Upper(q_lower * (1.0 - u)))
    };
    Ok((y / rate).max(lower))
}

/// Regularized lower incomplete gamma P(a, x), extended by P(a, 0) = 0.
fn gamma_lr(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        checked_gamma_lr(a, x).unwrap_or(f64::NAN)
    }
}

/// Regularized upper incomplete gamma Q(a, x), extended by Q(a, 0) = 1.
fn gamma_ur(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        1.0
    } else {
        checked_gamma_ur(a, x).unwrap_or(f64::NAN)
    }
}

#[derive(Clone, Copy)]
enum Tail {
    Lower(f64),
    Upper(f64),
}

/// Solves P(shape, y) = target (or Q(shape, y) = target) for y >= y_min with a
/// bracketed Newton iteration on the log of the tail probability.
fn invert_gamma(shape: f64, y_min: f64, tail: Tail) -> f64 {
    let (ln_target, target) = match tail {
        Tail::Lower(t) | Tail::Upper(t) => (t.ln(), t),
    };
    if target <= 0.0 {
        return match tail {
            Tail::Lower(_) => y_min,
            Tail::Upper(_) => f64::MAX,
        };
    }
    let lg = ln_gamma(shape);
    // g(y) > 0 means y is too small; g is increasing in y for both tails.
    let g = |y: f64| -> f64 {
        match tail {
            Tail::Lower(_) => ln_target - gamma_lr(shape, y).ln(),
            Tail::Upper(_) => gamma_ur(shape, y).ln() - ln_target,
        }
    };
    let mut lo = y_min;
    let mut hi = (y_min.max(shape) + 1.0) * 2.0;
    while g(hi) > 0.0 {
        lo = hi;
        hi *= 2.0;
    }
    let mut y = if shape > 1.0 { shape.max(lo).min(hi) } else { 0.5 * (lo + hi) };
    for _ in 0..200 {
        let gy = g(y);
        if gy == 0.0 {
            return y;
        }
        if gy > 0.0 {
            lo = y;
        } else {
            hi = y;
        }
        let ln_pdf = (shape - 1.0) * y.ln() - y - lg;
        let prob = match tail {
            Tail::Lower(_) => gamma_lr(shape, y),
            Tail::Upper(_) => gamma_ur(shape, y),
        };
        // d g / d y = pdf / tail probability for both tails.
        let slope = (ln_pdf - prob.ln()).exp();
        let mut next = y - gy / slope;
        if !next.is_finite() || next <= lo || next >= hi {
            next = 0.5 * (lo + hi);
        }
        if (next - y).abs() <= 1e-14 * y.abs().max(1e-300) || hi - lo <= 1e-15 * hi {
            return next;
        }
        y = next;
    }
    y
}

/// Exact rejection sampler for a gamma tail beyond `lower`, using a shifted
/// exponential envelope whose log-ratio peaks at `lower`.
fn tail_rejection<R: Rng + ?Sized>(shape: f64, rate: f64, lower: f64, rng: &mut R) -> f64 {
    let lambda = if shape > 1.0 { rate - (shape - 1.0) / lower } else { rate };
    if !(lambda > 0.0) {
        // The envelope needs lower beyond the mode; otherwise plain rejection is cheap.
        let gamma = rand_distr::Gamma::new(shape, 1.0 / rate).expect("validated parameters");
        loop {
            let x: f64 = rng.sample(gamma);
            if x >= lower {
                return x;
            }
        }
    }
    loop {
        let e: f64 = rng.sample(rand_distr::Exp1);
        let x = lower + e / lambda;
        let log_accept = (shape - 1.0) * (x / lower).ln() - (rate - lambda) * (x - lower);
        let u: f64 = rng.random();
        if u.ln() <= log_accept {
            return x;
        }
    }
}

/// Upper incomplete gamma function at x = 1, Γ(s, 1) = ∫₁^∞ t^(s-1) e^(-t) dt,
/// evaluated by adaptive Gauss–Kronrod quadrature. Finite for every real s.
pub fn upper_incomplete_gamma_at_one(s: f64) -> f64 {
    // t = 1 + x / (1 - x) maps [0, 1) onto [1, ∞).
    let f = |x: f64| -> f64 {
        if x >= 1.0 {
            return 0.0;
        }
        let one_minus = 1.0 - x;
        let t = 1.0 + x / one_minus;
        ((s - 1.0) * t.ln() - t).exp() / (one_minus * one_minus)
    };
    let whole = gauss_kronrod_15(&f, 0.0, 1.0);
    adaptive_gk(&f, 0.0, 1.0, whole, 1e-13, 48)
}

/// Γ(a2 − 1, 1) / Γ(a2, 1): the prior mean of 1/δ_h for h ≥ 2.
pub fn incomplete_gamma_ratio(a2: f64) -> Result<f64> {
    if !(a2.is_finite() && a2 > 0.0) {
        return invalid(format!("a2 must be positive, got {a2}"));
    }
    Ok(upper_incomplete_gamma_at_one(a2 - 1.0) / upper_incomplete_gamma_at_one(a2))
}

/// Prior expected squared distance between two nodes in dimension `ell`
/// (1-based).
pub fn expected_sq_distance_dim(ell: usize, hp: &Hyperparams) -> Result<f64> {
    if ell == 0 {
        return invalid("dimension index is 1-based");
    }
    let first = first_dimension_term(hp)?;
    let r = incomplete_gamma_ratio(hp.a2)?;
    Ok(first * r.powi((ell - 1) as i32))
}

/// Prior expected squared distance summed over the `hp.p` fitted dimensions.
pub fn expected_sq_distance_total(hp: &Hyperparams) -> Result<f64> {
    let first = first_dimension_term(hp)?;
    let r = incomplete_gamma_ratio(hp.a2)?;
    Ok(first * (1.0 - r.powi(hp.p as i32)) / (1.0 - r))
}

fn first_dimension_term(hp: &Hyperparams) -> Result<f64> {
    if !(hp.a1 > 1.0) {
        return invalid(format!("expected distance diverges for a1 <= 1 (a1 = {})", hp.a1));
    }
    Ok(2.0 * hp.b1 / (hp.a1 - 1.0))
}

const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
// Gauss weights for the odd-indexed Kronrod nodes.
const G_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

struct GkEstimate {
    value: f64,
    error: f64,
}

fn gauss_kronrod_15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> GkEstimate {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = GK_WEIGHTS[7] * fc;
    let mut gauss = G_WEIGHTS[3] * fc;
    for k in 0..7 {
        let dx = h * GK_NODES[k];
        let pair = f(c - dx) + f(c + dx);
        kronrod += GK_WEIGHTS[k] * pair;
        if k % 2 == 1 {
            gauss += G_WEIGHTS[k / 2] * pair;
        }
    }
    GkEstimate { value: kronrod * h, error: ((kronrod - gauss) * h).abs() }
}

fn adaptive_gk<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, est: GkEstimate, rel_tol: f64, depth: u32) -> f64 {
    if depth == 0 || est.error <= rel_tol * est.value.abs() || est.error < 1e-300 {
        return est.value;
    }
    let m = 0.5 * (a + b);
    let left = gauss_kronrod_15(f, a, m);
    let right = gauss_kronrod_15(f, m, b);
    adaptive_gk(f, a, m, left, rel_tol, depth - 1) + adaptive_gk(f, m, b, right, rel_tol, depth - 1)
}
