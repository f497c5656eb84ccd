//! Small numeric kernels shared across the crate: log-space accumulation,
//! scalar densities, link functions and seeded RNG streams.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const NEG_INF: f64 = f64::NEG_INFINITY;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// `log(exp(a) + exp(b))`, with `-inf` treated as an exact zero.
#[inline]
pub fn log_add(a: f64, b: f64) -> f64 {
    if a == NEG_INF {
        return b;
    }
    if b == NEG_INF {
        return a;
    }
    if a >= b {
        a + (b - a).exp().ln_1p()
    } else {
        b + (a - b).exp().ln_1p()
    }
}

/// Log of the sum of exponentials; `-inf` for an empty or all-zero input.
pub fn logsumexp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(NEG_INF, f64::max);
    if max == NEG_INF {
        return NEG_INF;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let sum: f64 = xs
        .iter()
        .filter(|&&x| x != NEG_INF)
        .map(|&x| (x - max).exp())
        .sum();
    max + sum.ln()
}

#[inline]
pub fn normal_logpdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    -0.5 * z * z - sd.ln() - LN_SQRT_2PI
}

/// `log(1 + exp(x))` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

pub fn ln_gamma(x: f64) -> f64 {
    statrs::function::gamma::ln_gamma(x)
}

pub fn digamma(x: f64) -> f64 {
    statrs::function::gamma::digamma(x)
}

/// Log density of Beta(alpha, beta) at `p`.
pub fn beta_logpdf(p: f64, alpha: f64, beta: f64) -> f64 {
    (alpha - 1.0) * p.ln() + (beta - 1.0) * (-p).ln_1p() + ln_gamma(alpha + beta)
        - ln_gamma(alpha)
        - ln_gamma(beta)
}

/// Log density of Gamma(shape, rate) at `x`.
pub fn gamma_logpdf(x: f64, shape: f64, rate: f64) -> f64 {
    shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * x.ln() - rate * x
}

/// Log density of a half-normal with the given scale at `x >= 0`.
pub fn half_normal_logpdf(x: f64, scale: f64) -> f64 {
    std::f64::consts::LN_2 + normal_logpdf(x, 0.0, scale)
}

/// Inverted-CDF quantile of an already sorted sample (returns an element of
/// the sample, so discrete values stay discrete).
pub fn quantile_sorted<T: Copy>(sorted: &[T], prob: f64) -> Option<T> {
    if sorted.is_empty() {
        return None;
    }
    let n = sorted.len();
    let rank = (prob * n as f64).ceil() as usize;
    Some(sorted[rank.clamp(1, n) - 1])
}

/// Draw an index with probability proportional to `exp(logw[i])`.
pub fn sample_log_categorical<R: Rng + ?Sized>(rng: &mut R, logw: &[f64]) -> Option<usize> {
    let max = logw.iter().copied().fold(NEG_INF, f64::max);
    if max == NEG_INF || max.is_nan() {
        return None;
    }
    let total: f64 = logw.iter().map(|&w| (w - max).exp()).sum();
    let mut u = rng.random::<f64>() * total;
    let mut last = None;
    for (i, &w) in logw.iter().enumerate() {
        if w == NEG_INF {
            continue;
        }
        let e = (w - max).exp();
        last = Some(i);
        if u < e {
            return Some(i);
        }
        u -= e;
    }
    last
}

/// Independent RNG stream `stream` derived from a user seed.
pub fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Sample mean and (population) standard deviation.
pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v: Vec<f64> = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
