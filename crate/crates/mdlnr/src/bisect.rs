//! Bisection-style 1-D maximizers used by the move proposals.

use rand::Rng;

// Restart interval for the stochastic searches. Shorter rounds escape bad
// basins on multimodal objectives; the quarter-budget floor keeps enough
// iterations per round for tight convergence on unimodal ones.
fn round_len(iters: usize) -> usize {
    (iters / 4).max(30)
}

/// Stochastic bisection maximizer on `[lo, hi]`: sample a uniform midpoint,
/// keep the half holding the better of (incumbent, sample), restart the
/// interval periodically, return the best point seen overall.
pub fn random_bisection<F, R>(mut f: F, lo: f64, hi: f64, iters: usize, rng: &mut R) -> (f64, f64)
where
    F: FnMut(f64) -> f64,
    R: Rng + ?Sized,
{
    assert!(lo < hi && iters > 0);
    let mut best_x = f64::NAN;
    let mut best_f = f64::NEG_INFINITY;
    let chunk = round_len(iters);
    let mut remaining = iters;
    while remaining > 0 {
        let n = chunk.min(remaining);
        remaining -= n;
        let (mut a, mut b) = (lo, hi);
        let mut inc_x = rng.gen_range(a..b);
        let mut inc_f = f(inc_x);
        if inc_f > best_f {
            best_f = inc_f;
            best_x = inc_x;
        }
        for _ in 1..n {
            let x = rng.gen_range(a..b);
            let fx = f(x);
            if fx > best_f {
                best_f = fx;
                best_x = x;
            }
            if fx > inc_f {
                if x < inc_x {
                    b = inc_x;
                } else {
                    a = inc_x;
                }
                inc_x = x;
                inc_f = fx;
            } else if x < inc_x {
                a = x;
            } else {
                b = x;
            }
            if b - a < 1e-14 * (hi - lo) {
                break;
            }
        }
    }
    (best_x, best_f)
}

/// Discrete analogue over indices `0..k`: random midpoints on a shrinking
/// index interval, one evaluation per index at most. Returns `(index, value)`.
pub fn random_bisection_discrete<F, R>(mut f: F, k: usize, iters: usize, rng: &mut R) -> (usize, f64)
where
    F: FnMut(usize) -> f64,
    R: Rng + ?Sized,
{
    assert!(k > 0 && iters > 0);
    let mut memo: Vec<Option<f64>> = vec![None; k];
    let mut evals = 0usize;
    let mut eval = |idx: usize, memo: &mut Vec<Option<f64>>, evals: &mut usize| -> f64 {
        if let Some(v) = memo[idx] {
            v
        } else {
            let v = f(idx);
            memo[idx] = Some(v);
            *evals += 1;
            v
        }
    };
    let mut best_i = rng.gen_range(0..k);
    let mut best_v = eval(best_i, &mut memo, &mut evals);
    let (mut a, mut b) = (0usize, k - 1);
    let mut inc_i = best_i;
    let mut inc_v = best_v;
    while evals < iters.min(k) && a < b {
        let x = rng.gen_range(a..=b);
        let fx = eval(x, &mut memo, &mut evals);
        if fx > best_v {
            best_v = fx;
            best_i = x;
        }
        if fx > inc_v {
            if x < inc_i {
                b = inc_i;
            } else {
                a = inc_i;
            }
            inc_i = x;
            inc_v = fx;
        } else if x < inc_i {
            a = (x + 1).min(b);
        } else if x > inc_i {
            b = x.saturating_sub(1).max(a);
        } else {
            break;
        }
    }
    (best_i, best_v)
}

/// Deterministic golden-section minimizer on `[lo, hi]` for smooth unimodal
/// objectives (used for the optional scale-hyperparameter fit).
pub fn golden_section_min<F>(mut f: F, lo: f64, hi: f64, iters: usize) -> (f64, f64)
where
    F: FnMut(f64) -> f64,
{
    const INVPHI: f64 = 0.618_033_988_749_894_9;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - (b - a) * INVPHI;
    let mut d = a + (b - a) * INVPHI;
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..iters {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - (b - a) * INVPHI;
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + (b - a) * INVPHI;
            fd = f(d);
        }
    }
    if fc < fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn unimodal_converges() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (x, _) = random_bisection(|x| -(x - 0.3) * (x - 0.3), 0.0, 1.0, 60, &mut rng);
        assert!((x - 0.3).abs() < 1e-3, "got {x}");
    }

    #[test]
    fn constant_objective_returns_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (x, v) = random_bisection(|_| 2.5, 0.0, 1.0, 20, &mut rng);
        assert!((0.0..=1.0).contains(&x));
        assert_eq!(v, 2.5);
    }

    #[test]
    fn bimodal_finds_global_max_most_seeds() {
        // Local optimum at 0.2 (height 0.8), global at 0.9 (height 1.0).
        let f = |x: f64| {
            0.8 * (-(x - 0.2) * (x - 0.2) / 0.005).exp() + (-(x - 0.9) * (x - 0.9) / 0.002).exp()
        };
        let mut hits = 0;
        for seed in 0..10 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (x, _) = random_bisection(f, 0.0, 1.0, 200, &mut rng);
            if (x - 0.9).abs() < 0.05 {
                hits += 1;
            }
        }
        // Dense-grid reference: the global argmax is 0.9.
        let grid_best = (0..=10_000)
            .map(|i| i as f64 / 10_000.0)
            .max_by(|a, b| f(*a).partial_cmp(&f(*b)).unwrap())
            .unwrap();
        assert!((grid_best - 0.9).abs() < 1e-3);
        assert!(hits >= 9, "global max found in {hits}/10 seeds");
    }

    #[test]
    fn discrete_finds_argmax_small_k() {
        let vals = [0.1, 0.9, 0.3, 0.2];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (i, v) = random_bisection_discrete(|i| vals[i], vals.len(), 40, &mut rng);
        assert_eq!(i, 1);
        assert_eq!(v, 0.9);
    }

    #[test]
    fn golden_section_quadratic() {
        let (x, _) = golden_section_min(|x| (x - 1.7) * (x - 1.7), -5.0, 5.0, 80);
        assert!((x - 1.7).abs() < 1e-9);
    }
}
