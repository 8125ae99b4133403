//! Specialization and orthogonalization terms over per-sample attribution
//! Jacobians (`d_H × d_X`, row `i` = input gradient of latent neuron `i`).

use rand::seq::index;
use rand::RngCore;

use super::DEFAULT_EPSILON;
use crate::error::{Error, Result};
use crate::numeric::{dot, DenseMatrix, SeededRng};

/// Number of unordered neuron pairs, `d_h·(d_h−1)/2`.
pub fn pair_count(d_h: usize) -> usize {
    d_h * d_h.saturating_sub(1) / 2
}

/// Inverse of `t = i·(i−1)/2 + j` for `j < i`.
pub fn pair_from_index(t: usize) -> (usize, usize) {
    // i is the largest integer with i(i-1)/2 <= t
    let mut i = ((((8 * t + 1) as f64).sqrt() + 1.0) / 2.0) as usize;
    while i * (i - 1) / 2 > t {
        i -= 1;
    }
    while (i + 1) * i / 2 <= t {
        i += 1;
    }
    (i, t - i * (i - 1) / 2)
}

/// Mean L1 norm of the attribution rows of one sample.
pub fn spec_sample(j: &DenseMatrix) -> f64 {
    let total: f64 = (0..j.rows())
        .map(|i| j.row(i).iter().map(|v| v.abs()).sum::<f64>())
        .sum();
    total / j.rows() as f64
}

pub fn spec_loss<J: AsRef<DenseMatrix>>(batch: &[J]) -> Result<f64> {
    check_batch(batch)?;
    let sum: f64 = batch.iter().map(|j| spec_sample(j.as_ref())).sum();
    Ok(sum / batch.len() as f64)
}

/// `|u·v| / (‖u‖‖v‖ + ε)`.
pub fn pair_correlation(u: &[f64], v: &[f64], eps: f64) -> f64 {
    let nu = dot(u, u).sqrt();
    let nv = dot(v, v).sqrt();
    dot(u, v).abs() / (nu * nv + eps)
}

/// Correlation together with its gradients with respect to `u` and `v`.
pub fn pair_correlation_grad(u: &[f64], v: &[f64], eps: f64) -> (f64, Vec<f64>, Vec<f64>) {
    let mut du = vec![0.0; u.len()];
    let mut dv = vec![0.0; v.len()];
    let rho = pair_correlation_grad_acc(u, v, eps, 1.0, &mut du, &mut dv);
    (rho, du, dv)
}

/// Adds `coef·∂ρ/∂u` to `du` and `coef·∂ρ/∂v` to `dv`; returns `ρ`.
pub fn pair_correlation_grad_acc(
    u: &[f64],
    v: &[f64],
    eps: f64,
    coef: f64,
    du: &mut [f64],
    dv: &mut [f64],
) -> f64 {
    let norms = (dot(u, u).sqrt(), dot(v, v).sqrt());
    pair_correlation_grad_acc_normed(u, v, norms, eps, coef, du, dv)
}

/// [`pair_correlation_grad_acc`] with `(‖u‖, ‖v‖)` supplied.
pub fn pair_correlation_grad_acc_normed(
    u: &[f64],
    v: &[f64],
    (nu, nv): (f64, f64),
    eps: f64,
    coef: f64,
    du: &mut [f64],
    dv: &mut [f64],
) -> f64 {
    let s = dot(u, v);
    let n = nu * nv + eps;
    let rho = s.abs() / n;
    let sign = if s > 0.0 {
        1.0
    } else if s < 0.0 {
        -1.0
    } else {
        0.0
    };
    let side = |a: &[f64], b: &[f64], na: f64, nb: f64, out: &mut [f64]| {
        let radial = if na > 0.0 {
            s.abs() / (n * n) * nb / na
        } else {
            0.0
        };
        for ((o, &ai), &bi) in out.iter_mut().zip(a).zip(b) {
            *o += coef * (sign * bi / n - radial * ai);
        }
    };
    side(u, v, nu, nv, du);
    side(v, u, nv, nu, dv);
    rho
}

/// [`pair_correlation`] with `(‖u‖, ‖v‖)` supplied.
pub fn pair_correlation_normed(u: &[f64], v: &[f64], (nu, nv): (f64, f64), eps: f64) -> f64 {
    dot(u, v).abs() / (nu * nv + eps)
}

fn exhaustive_pairs(d_h: usize) -> Vec<(usize, usize)> {
    let mut pairs = Vec::with_capacity(pair_count(d_h));
    for i in 1..d_h {
        for j in 0..i {
            pairs.push((i, j));
        }
    }
    pairs
}

/// Mean correlation over the given pairs of rows.
pub fn orth_sample(j: &DenseMatrix, pairs: &[(usize, usize)], eps: f64) -> f64 {
    let sum: f64 = pairs
        .iter()
        .map(|&(a, b)| pair_correlation(j.row(a), j.row(b), eps))
        .sum();
    sum / pairs.len() as f64
}

pub fn orth_loss_full<J: AsRef<DenseMatrix>>(batch: &[J]) -> Result<f64> {
    let d_h = check_orth_batch(batch)?;
    let pairs = exhaustive_pairs(d_h);
    let sum: f64 = batch
        .iter()
        .map(|j| orth_sample(j.as_ref(), &pairs, DEFAULT_EPSILON))
        .sum();
    Ok(sum / batch.len() as f64)
}

/// Per-sample pair sets for one penalty evaluation.
///
/// One `u64` is drawn from `rng` as a step key; sample `b` draws its pairs
/// from the child stream `split_index(b)` of that key, so the result does
/// not depend on evaluation order. `m ≥ C` enumerates every pair in the
/// same order as the exhaustive loss.
pub fn draw_pair_sets(
    rng: &mut SeededRng,
    batch: usize,
    d_h: usize,
    m: usize,
) -> Result<Vec<Vec<(usize, usize)>>> {
    let c = pair_count(d_h);
    if c == 0 {
        return Err(Error::Config(format!(
            "orthogonalization needs at least two latent neurons, layer has {d_h}"
        )));
    }
    if m == 0 {
        return Err(Error::Config("pair count must be at least 1".into()));
    }
    let step = SeededRng::new(rng.next_u64());
    if m >= c {
        return Ok(vec![exhaustive_pairs(d_h); batch]);
    }
    Ok((0..batch)
        .map(|b| {
            let mut r = step.split_index(b as u64);
            let mut picks = index::sample(&mut r, c, m).into_vec();
            picks.sort_unstable();
            picks.into_iter().map(pair_from_index).collect()
        })
        .collect())
}

pub fn orth_loss_subsampled<J: AsRef<DenseMatrix>>(
    batch: &[J],
    pairs_m: usize,
    rng: &mut SeededRng,
) -> Result<f64> {
    let d_h = check_orth_batch(batch)?;
    let c = pair_count(d_h);
    if pairs_m == 0 || pairs_m > c {
        return Err(Error::Config(format!(
            "pair count {pairs_m} outside 1..={c} for {d_h} latent neurons"
        )));
    }
    let sets = draw_pair_sets(rng, batch.len(), d_h, pairs_m)?;
    let sum: f64 = batch
        .iter()
        .zip(&sets)
        .map(|(j, pairs)| orth_sample(j.as_ref(), pairs, DEFAULT_EPSILON))
        .sum();
    Ok(sum / batch.len() as f64)
}

fn check_batch<J: AsRef<DenseMatrix>>(batch: &[J]) -> Result<(usize, usize)> {
    let first = batch
        .first()
        .ok_or_else(|| Error::Domain("empty attribution batch".into()))?
        .as_ref()
        .shape();
    if first.0 == 0 {
        return Err(Error::Domain("attribution matrices have no rows".into()));
    }
    if batch.iter().any(|j| j.as_ref().shape() != first) {
        return Err(Error::Shape("attribution matrices differ in shape".into()));
    }
    Ok(first)
}

fn check_orth_batch<J: AsRef<DenseMatrix>>(batch: &[J]) -> Result<usize> {
    let (d_h, _) = check_batch(batch)?;
    if d_h < 2 {
        return Err(Error::Config(format!(
            "orthogonalization needs at least two latent neurons, layer has {d_h}"
        )));
    }
    Ok(d_h)
}
