//! Small numerical kernels shared by the simulation and oracle modules.

use serde::{Deserialize, Serialize};

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Minimises a unimodal function on `[lo, hi]` by golden-section search.
///
/// Returns `(argmin, min)`. The bracket is shrunk until its width falls
/// below `tol`; the returned point is the best interior probe.
pub fn golden_min<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, tol: f64) -> (f64, f64) {
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    // 200 iterations shrink any finite bracket below f64 resolution.
    for _ in 0..200 {
        if (b - a).abs() <= tol {
            break;
        }
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    if fc <= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

pub fn golden_max<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, tol: f64) -> (f64, f64) {
    let (x, v) = golden_min(|x| -f(x), lo, hi, tol);
    (x, -v)
}

/// Minimises a convex function over the probability simplex of dimension
/// `n` by nested golden-section on the stick-breaking coordinates.
///
/// Partial minimisation of a jointly convex function is convex, so every
/// nesting level searches a unimodal function. Cost grows like
/// `iterations^(n-1)`, which keeps this practical for `n <= 4`.
pub fn simplex_min<F: Fn(&[f64]) -> f64>(f: &F, n: usize, tol: f64) -> (Vec<f64>, f64) {
    assert!(n >= 1, "simplex dimension must be positive");
    let mut best = vec![0.0; n];
    let v = simplex_level_arg(f, &mut best, 0, 1.0, tol);
    (best, v)
}

fn simplex_level<F: Fn(&[f64]) -> f64>(
    f: &F,
    w: &mut [f64],
    level: usize,
    remaining: f64,
    tol: f64,
) -> f64 {
    let n = w.len();
    if level == n - 1 {
        w[level] = remaining.max(0.0);
        return f(w);
    }
    let (_, v) = golden_min(
        |x| {
            let mut local = w.to_vec();
            local[level] = x;
            simplex_level(f, &mut local, level + 1, remaining - x, tol)
        },
        0.0,
        remaining,
        tol,
    );
    v
}

fn simplex_level_arg<F: Fn(&[f64]) -> f64>(
    f: &F,
    w: &mut [f64],
    level: usize,
    remaining: f64,
    tol: f64,
) -> f64 {
    let n = w.len();
    if level == n - 1 {
        w[level] = remaining.max(0.0);
        return f(w);
    }
    let (x, _) = golden_min(
        |x| {
            let mut local = w.to_vec();
            local[level] = x;
            simplex_level(f, &mut local, level + 1, remaining - x, tol)
        },
        0.0,
        remaining,
        tol,
    );
    w[level] = x;
    simplex_level_arg(f, w, level + 1, remaining - x, tol)
}

/// Sample mean and standard error, accumulated in index order so that the
/// result does not depend on how the samples were produced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleStats {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

impl SampleStats {
    pub fn from_slice(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return SampleStats {
                mean: f64::NAN,
                stderr: f64::NAN,
                n,
            };
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        if n == 1 {
            return SampleStats {
                mean,
                stderr: 0.0,
                n,
            };
        }
        let ss: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
        let var = ss / (n - 1) as f64;
        SampleStats {
            mean,
            stderr: (var / n as f64).sqrt(),
            n,
        }
    }

    pub fn variance(&self) -> f64 {
        self.stderr * self.stderr * self.n as f64
    }
}

/// Sample covariance of two equally long slices (denominator `n - 1`).
pub fn covariance(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    xs.iter()
        .zip(ys)
        .map(|(x, y)| (x - mx) * (y - my))
        .sum::<f64>()
        / (n - 1) as f64
}

/// `ln(sum_i w_i exp(a_i))` evaluated without overflow.
pub fn log_sum_exp_weighted(weights: &[f64], exponents: &[f64]) -> f64 {
    let m = exponents
        .iter()
        .zip(weights)
        .filter(|(_, w)| **w > 0.0)
        .map(|(a, _)| *a)
        .fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    let s: f64 = weights
        .iter()
        .zip(exponents)
        .map(|(w, a)| w * (a - m).exp())
        .sum();
    m + s.ln()
}

/// Relative entropy `sum q_i ln(q_i / p_i)`; `+inf` when `q` charges a
/// null set of `p`.
pub fn kl_divergence(q: &[f64], p: &[f64]) -> f64 {
    q.iter()
        .zip(p)
        .map(|(&qi, &pi)| {
            if qi <= 0.0 {
                0.0
            } else if pi <= 0.0 {
                f64::INFINITY
            } else {
                qi * (qi / pi).ln()
            }
        })
        .sum()
}

pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > lo && n >= 2);
    let (a, b) = (lo.ln(), hi.ln());
    let h = (b - a) / (n - 1) as f64;
    (0..n).map(|j| (a + h * j as f64).exp()).collect()
}

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2);
    let h = (hi - lo) / (n - 1) as f64;
    (0..n).map(|j| lo + h * j as f64).collect()
}

/// SplitMix64 finaliser, used to derive independent seeds from a parent seed.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_finds_parabola_vertex() {
        let (x, v) = golden_min(|x| (x - 0.3).powi(2) + 1.0, -2.0, 2.0, 1e-12);
        // Near a minimum f - f* ~ (x - x*)^2, so the argmin is only resolved to ~sqrt(eps).
        assert!((x - 0.3).abs() < 1e-7);
        assert!((v - 1.0).abs() < 1e-15);
    }

    #[test]
    fn simplex_min_recovers_interior_point() {
        let target = [0.2, 0.5, 0.3];
        let f = |w: &[f64]| {
            w.iter()
                .zip(target.iter())
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
        };
        let (w, v) = simplex_min(&f, 3, 1e-11);
        for (a, b) in w.iter().zip(target.iter()) {
            assert!((a - b).abs() < 1e-8, "{w:?}");
        }
        assert!(v < 1e-15);
    }

    #[test]
    fn simplex_min_handles_vertex_optimum() {
        let f = |w: &[f64]| 3.0 * w[0] + 1.0 * w[1] + 2.0 * w[2];
        let (w, v) = simplex_min(&f, 3, 1e-12);
        assert!((w[1] - 1.0).abs() < 1e-9);
        assert!((v - 1.0).abs() < 1e-9);
    }

    #[test]
    fn stats_match_hand_computation() {
        let s = SampleStats::from_slice(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.mean, 2.5);
        let var: f64 = (2.25 + 0.25 + 0.25 + 2.25) / 3.0;
        assert!((s.stderr - (var / 4.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn log_sum_exp_is_stable() {
        let v = log_sum_exp_weighted(&[0.5, 0.5], &[1000.0, 1000.0]);
        assert!((v - 1000.0).abs() < 1e-12);
    }

    #[test]
    fn kl_of_identical_is_zero() {
        assert_eq!(kl_divergence(&[0.3, 0.7], &[0.3, 0.7]), 0.0);
        assert!(kl_divergence(&[0.5, 0.5], &[1.0, 0.0]).is_infinite());
    }
}
