//! One-sided Wilcoxon signed-rank test on paired samples.
//!
//! Differences `d = a − b` are ranked by magnitude with midranks for ties.
//! Zero differences take part in the ranking but contribute to neither sign
//! (Pratt). The statistic is the positive rank sum `W+`.

use statrs::distribution::{ContinuousCDF, Normal};

use super::ranks::midranks;
use crate::error::{Error, Result};

/// Direction of the alternative hypothesis about `a` relative to `b`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Alternative {
    /// `a` tends to be smaller than `b`.
    Less,
    /// `a` tends to be larger than `b`.
    Greater,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WilcoxonMethod {
    /// Exact null distribution when `n ≤ 15` with no ties and no zero
    /// differences; the tie-corrected normal approximation otherwise.
    Auto,
    /// Enumerates all sign assignments of the observed ranks.
    Exact,
    /// Normal approximation with tie and zero corrections, no continuity
    /// correction.
    Normal,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WilcoxonResult {
    pub w_plus: f64,
    pub p_value: f64,
    pub exact: bool,
    pub n: usize,
    pub n_zero: usize,
}

const EXACT_MAX_N: usize = 15;
const ENUMERATION_MAX_N: usize = 30;

/// Magnitudes closer than this (relative) are treated as tied, so values
/// that differ only by rounding in the subtraction share a rank.
const TIE_TOLERANCE: f64 = 1e-9;

pub fn wilcoxon_signed_rank(
    a: &[f64],
    b: &[f64],
    alternative: Alternative,
) -> Result<WilcoxonResult> {
    wilcoxon_signed_rank_with(a, b, alternative, WilcoxonMethod::Auto)
}

fn snap_ties(mags: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..mags.len()).collect();
    order.sort_by(|&i, &j| mags[i].total_cmp(&mags[j]));
    let mut out = mags.to_vec();
    let mut anchor = f64::NAN;
    for &i in &order {
        let v = mags[i];
        if !anchor.is_nan() && (v - anchor).abs() <= TIE_TOLERANCE * anchor.abs().max(v.abs()) {
            out[i] = anchor;
        } else {
            anchor = v;
        }
    }
    out
}

pub fn wilcoxon_signed_rank_with(
    a: &[f64],
    b: &[f64],
    alternative: Alternative,
    method: WilcoxonMethod,
) -> Result<WilcoxonResult> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!(
            "{} vs {} paired values",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 5 {
        return Err(Error::Domain("need at least 5 pairs".into()));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    if d.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite paired value".into()));
    }
    let mags = snap_ties(&d.iter().map(|v| v.abs()).collect::<Vec<_>>());
    let n_zero = mags.iter().filter(|&&m| m == 0.0).count();
    if n_zero == d.len() {
        return Err(Error::DegenerateData(
            "all paired differences are zero".into(),
        ));
    }
    let ranks = midranks(&mags);
    let w_plus: f64 = d
        .iter()
        .zip(&mags)
        .zip(&ranks)
        .filter(|((v, m), _)| **m > 0.0 && **v > 0.0)
        .map(|(_, r)| r)
        .sum();
    let has_ties = {
        let mut s = mags.clone();
        s.sort_by(f64::total_cmp);
        s.windows(2).any(|w| w[0] == w[1])
    };
    let n = d.len();
    let exact = match method {
        WilcoxonMethod::Exact => true,
        WilcoxonMethod::Normal => false,
        WilcoxonMethod::Auto => n <= EXACT_MAX_N && !has_ties && n_zero == 0,
    };
    let nonzero_ranks: Vec<f64> = ranks
        .iter()
        .zip(&mags)
        .filter(|(_, &m)| m > 0.0)
        .map(|(r, _)| *r)
        .collect();

    // p = P(W+ ≤ w) for Less, P(W+ ≥ w) for Greater
    let p_value = if exact {
        if nonzero_ranks.len() > ENUMERATION_MAX_N {
            return Err(Error::Domain(format!(
                "exact test limited to {ENUMERATION_MAX_N} nonzero differences"
            )));
        }
        exact_tail(&nonzero_ranks, w_plus, alternative)
    } else {
        let nf = n as f64;
        let zf = n_zero as f64;
        let mean = (nf * (nf + 1.0) - zf * (zf + 1.0)) / 4.0;
        let mut var =
            (nf * (nf + 1.0) * (2.0 * nf + 1.0) - zf * (zf + 1.0) * (2.0 * zf + 1.0)) / 24.0;
        var -= tie_correction(&mags) / 48.0;
        let z = (w_plus - mean) / var.sqrt();
        let normal = Normal::new(0.0, 1.0).expect("standard normal");
        match alternative {
            Alternative::Less => normal.cdf(z),
            Alternative::Greater => normal.sf(z),
        }
    };
    Ok(WilcoxonResult {
        w_plus,
        p_value: p_value.clamp(f64::MIN_POSITIVE, 1.0),
        exact,
        n,
        n_zero,
    })
}

/// `Σ (t³ − t)` over groups of tied nonzero magnitudes.
fn tie_correction(mags: &[f64]) -> f64 {
    let mut s: Vec<f64> = mags.iter().copied().filter(|&m| m > 0.0).collect();
    s.sort_by(f64::total_cmp);
    let mut total = 0.0;
    let mut i = 0;
    while i < s.len() {
        let mut j = i;
        while j + 1 < s.len() && s[j + 1] == s[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        total += t * t * t - t;
        i = j + 1;
    }
    total
}

/// Tail probability of the positive rank sum under random signs, counted
/// on doubled ranks so midranks stay integral.
fn exact_tail(ranks: &[f64], w_plus: f64, alternative: Alternative) -> f64 {
    let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let max: usize = doubled.iter().sum();
    let mut counts = vec![0.0f64; max + 1];
    counts[0] = 1.0;
    for &r in &doubled {
        for s in (r..=max).rev() {
            counts[s] += counts[s - r];
        }
    }
    let total = 2f64.powi(ranks.len() as i32);
    let w = (2.0 * w_plus).round() as usize;
    let tail: f64 = match alternative {
        Alternative::Less => counts[..=w.min(max)].iter().sum(),
        Alternative::Greater => counts[w.min(max + 1)..].iter().sum(),
    };
    tail / total
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Brute-force enumeration of all sign patterns.
    fn brute(ranks: &[f64], w: f64, alt: Alternative) -> f64 {
        let n = ranks.len();
        let mut hits = 0u64;
        for mask in 0u64..(1 << n) {
            let s: f64 = (0..n)
                .filter(|i| mask >> i & 1 == 1)
                .map(|i| ranks[i])
                .sum();
            let hit = match alt {
                Alternative::Less => s <= w + 1e-9,
                Alternative::Greater => s >= w - 1e-9,
            };
            hits += hit as u64;
        }
        hits as f64 / (1u64 << n) as f64
    }

    #[test]
    fn all_smaller_gives_two_to_minus_n() {
        let a: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let b: Vec<f64> = (0..10).map(|i| i as f64 + 1.0 + 0.1 * i as f64).collect();
        let r = wilcoxon_signed_rank(&a, &b, Alternative::Less).unwrap();
        assert!(r.exact);
        assert!((r.p_value - 1.0 / 1024.0).abs() < 1e-15);
        let rev = wilcoxon_signed_rank(&b, &a, Alternative::Less).unwrap();
        assert!(rev.p_value >= 0.999);
    }

    #[test]
    fn exact_tail_matches_enumeration() {
        let ranks = [1.0, 2.5, 2.5, 4.0, 5.0, 6.0, 7.5, 7.5];
        for w in [0.0, 3.5, 10.0, 18.0, 36.0] {
            for alt in [Alternative::Less, Alternative::Greater] {
                assert!((exact_tail(&ranks, w, alt) - brute(&ranks, w, alt)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn zero_differences_are_rejected_when_all_zero() {
        let a = [1.0; 6];
        assert!(matches!(
            wilcoxon_signed_rank(&a, &a, Alternative::Less),
            Err(Error::DegenerateData(_))
        ));
        assert!(wilcoxon_signed_rank(&a[..4], &a[..4], Alternative::Less).is_err());
    }

    #[test]
    fn normal_path_with_ties_and_zero() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0];
        let b = [1.0, 3.0, 4.0, 5.0, 5.5, 7.5, 6.0];
        let r = wilcoxon_signed_rank(&a, &b, Alternative::Less).unwrap();
        assert!(!r.exact);
        assert_eq!(r.n_zero, 1);
        // midranks with the zero ranked first: |d| = 0,1,1,1,0.5,1.5,1
        assert_eq!(r.w_plus, 4.5);
        assert!(r.p_value > 0.0 && r.p_value < 1.0);
    }

    #[test]
    fn rounding_level_differences_tie() {
        let a = [0.166, 0.262, 0.090, 0.321, 0.404, 0.873];
        let b = [0.169, 0.265, 0.093, 0.300, 0.410, 0.880];
        let r = wilcoxon_signed_rank(&a, &b, Alternative::Less).unwrap();
        assert!(!r.exact, "three 0.003 gaps should be recognized as ties");
    }
}
