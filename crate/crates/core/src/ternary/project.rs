//! Exact Euclidean projection onto scaled ternary vectors.
//!
//! For a fixed support size `k`, the best ternary approximation `alpha * T`
//! of `w` keeps the `k` largest-magnitude entries with their signs and uses
//! `alpha = s_k / k`, where `s_k` is the sum of those magnitudes. Its squared
//! error is `|w|^2 - s_k^2 / k`, so the optimal support size maximises
//! `s_k^2 / k`. Sorting magnitudes once and scanning prefix sums gives the
//! projection in `O(n log n)`.

use super::{TernaryError, TernaryTensor};

/// Largest input accepted by the exhaustive oracle (`3^n` candidates).
pub const ORACLE_MAX_LEN: usize = 12;

/// Exact minimiser of `|alpha * T - w|^2` over `alpha > 0`, `T` ternary.
///
/// Ties in the score pick the smallest support; magnitude ties at the cut go
/// to the lowest index. An all-zero input returns the degenerate
/// `alpha = 0, T = 0` closure point.
pub fn ternary_project(w: &[f64]) -> Result<TernaryTensor, TernaryError> {
    if w.is_empty() {
        return Err(TernaryError::Empty);
    }
    if w.iter().any(|v| !v.is_finite()) {
        return Err(TernaryError::NonFinite);
    }
    let mut order: Vec<usize> = (0..w.len()).collect();
    order.sort_by(|&a, &b| w[b].abs().total_cmp(&w[a].abs()).then(a.cmp(&b)));

    let mut best_k = 0usize;
    let mut best_score = 0.0f64;
    let mut best_sum = 0.0f64;
    let mut prefix = 0.0f64;
    for (i, &idx) in order.iter().enumerate() {
        prefix += w[idx].abs();
        let k = (i + 1) as f64;
        let score = prefix * prefix / k;
        if score > best_score {
            best_score = score;
            best_k = i + 1;
            best_sum = prefix;
        }
    }

    let mut trits = vec![0i8; w.len()];
    if best_k == 0 {
        return Ok(TernaryTensor::new(0.0, trits, vec![w.len()]));
    }
    for &idx in &order[..best_k] {
        trits[idx] = if w[idx] > 0.0 { 1 } else { -1 };
    }
    Ok(TernaryTensor::new(best_sum / best_k as f64, trits, vec![w.len()]))
}

/// `|alpha * T - w|^2`.
pub fn objective(w: &[f64], alpha: f64, trits: &[i8]) -> f64 {
    w.iter()
        .zip(trits)
        .map(|(&x, &t)| {
            let d = alpha * f64::from(t) - x;
            d * d
        })
        .sum()
}

/// The closed-form optimal value `|w|^2 - s_k^2 / k` for a projection result.
pub fn optimal_value(w: &[f64], proj: &TernaryTensor) -> f64 {
    let norm2: f64 = w.iter().map(|x| x * x).sum();
    if proj.k == 0 {
        return norm2;
    }
    let s: f64 = w
        .iter()
        .zip(&proj.trits)
        .filter(|(_, &t)| t != 0)
        .map(|(x, _)| x.abs())
        .sum();
    norm2 - s * s / proj.k as f64
}

/// Brute-force projection: every `T` in `{-1, 0, 1}^n` with its optimal
/// `alpha = max(0, <T, w> / |T|^2)`. Candidates are visited in lexicographic
/// order (`-1 < 0 < 1`, first coordinate most significant) and the first
/// minimiser wins.
pub fn ternary_project_oracle(w: &[f64]) -> Result<TernaryTensor, TernaryError> {
    let n = w.len();
    if n == 0 {
        return Err(TernaryError::Empty);
    }
    if n > ORACLE_MAX_LEN {
        return Err(TernaryError::TooLarge { n, max: ORACLE_MAX_LEN });
    }
    let norm2: f64 = w.iter().map(|x| x * x).sum();
    let mut t = vec![-1i8; n];
    let mut k = n;
    let mut best: Option<(f64, f64, Vec<i8>)> = None;
    loop {
        let dot: f64 = w.iter().zip(&t).map(|(x, &ti)| x * f64::from(ti)).sum();
        let (alpha, obj) = if k == 0 {
            (0.0, norm2)
        } else {
            let alpha = (dot / k as f64).max(0.0);
            (alpha, norm2 - 2.0 * alpha * dot + alpha * alpha * k as f64)
        };
        if best.as_ref().map_or(true, |b| obj < b.0) {
            // alpha = 0 represents the zero vector whatever T is.
            let trits = if alpha == 0.0 { vec![0; n] } else { t.clone() };
            best = Some((obj, alpha, trits));
        }
        // Odometer increment, last coordinate fastest.
        let mut pos = n;
        loop {
            if pos == 0 {
                let (_, alpha, trits) = best.expect("at least one candidate");
                return Ok(TernaryTensor::new(alpha, trits, vec![n]));
            }
            pos -= 1;
            match t[pos] {
                -1 => {
                    t[pos] = 0;
                    k -= 1;
                    break;
                }
                0 => {
                    t[pos] = 1;
                    k += 1;
                    break;
                }
                _ => t[pos] = -1,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn three_two_one() {
        // Scores s_k^2/k: 9, 12.5, 12 -> k* = 2.
        let p = ternary_project(&[3.0, 2.0, 1.0]).unwrap();
        assert_eq!(p.k, 2);
        assert_eq!(p.alpha, 2.5);
        assert_eq!(p.trits, vec![1, 1, 0]);
        let o = ternary_project_oracle(&[3.0, 2.0, 1.0]).unwrap();
        assert_eq!(o.trits, p.trits);
        assert!((objective(&[3.0, 2.0, 1.0], o.alpha, &o.trits) - 1.5).abs() < 1e-12);
    }

    #[test]
    fn constant_vector_keeps_everything() {
        let p = ternary_project(&[0.7; 9]).unwrap();
        assert_eq!(p.k, 9);
        assert!((p.alpha - 0.7).abs() < 1e-15);
        assert!(p.trits.iter().all(|&t| t == 1));
    }

    #[test]
    fn single_dominant_entry() {
        let p = ternary_project(&[-5.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!((p.alpha, p.k), (5.0, 1));
        assert_eq!(p.trits, vec![-1, 0, 0, 0]);
    }

    #[test]
    fn zero_and_empty_inputs() {
        let p = ternary_project(&[0.0; 4]).unwrap();
        assert_eq!((p.alpha, p.k), (0.0, 0));
        assert!(p.trits.iter().all(|&t| t == 0));
        assert_eq!(ternary_project(&[]), Err(TernaryError::Empty));
        assert_eq!(ternary_project(&[f64::NAN]), Err(TernaryError::NonFinite));
        let o = ternary_project_oracle(&[0.0; 3]).unwrap();
        assert_eq!(objective(&[0.0; 3], o.alpha, &o.trits), 0.0);
        assert!(o.trits.iter().all(|&t| t == 0));
    }

    #[test]
    fn oracle_single_entry_is_exact() {
        for x in [-2.5, 0.3, 7.0] {
            let o = ternary_project_oracle(&[x]).unwrap();
            assert_eq!(o.alpha, x.abs());
            assert_eq!(o.trits, vec![if x > 0.0 { 1 } else { -1 }]);
        }
        assert!(matches!(
            ternary_project_oracle(&[1.0; 13]),
            Err(TernaryError::TooLarge { n: 13, .. })
        ));
    }

    #[test]
    fn score_ties_pick_smallest_support() {
        // Scores 9, 8, 8.33, 9: k = 1 and k = 4 tie.
        let p = ternary_project(&[1.0, 3.0, 1.0, 1.0]).unwrap();
        assert_eq!(p.k, 1);
        assert_eq!(p.trits, vec![0, 1, 0, 0]);
    }

    #[test]
    fn equal_magnitudes_order_by_index() {
        let p = ternary_project(&[-2.0, 2.0, 0.1]).unwrap();
        assert_eq!(p.trits, vec![-1, 1, 0]);
    }

    #[test]
    fn closed_form_matches_oracle_on_small_vectors() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..200 {
            let n = rng.gen_range(1..=7);
            let w: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let p = ternary_project(&w).unwrap();
            let o = ternary_project_oracle(&w).unwrap();
            let (po, oo) = (objective(&w, p.alpha, &p.trits), objective(&w, o.alpha, &o.trits));
            assert!((po - oo).abs() < 1e-10, "{w:?}: {po} vs {oo}");
            assert!((po - optimal_value(&w, &p)).abs() < 1e-10);
        }
    }
}
