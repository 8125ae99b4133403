//! Stochastic training-time perturbations: dropout, input noise, mixup.

use rand::seq::SliceRandom;

use crate::data::Task;
use crate::error::{Error, Result};
use crate::model::TargetBatch;
use crate::numeric::{sample_beta, sample_gaussian, DenseMatrix, SeededRng};

/// Inverted-dropout multipliers: `0` with probability `p`, else `1/(1−p)`.
pub fn dropout_mask(rows: usize, cols: usize, p: f64, rng: &mut SeededRng) -> Result<DenseMatrix> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::Domain(format!("dropout rate {p} outside [0, 1)")));
    }
    let keep = 1.0 / (1.0 - p);
    Ok(DenseMatrix::from_fn(rows, cols, |_, _| {
        if rng.uniform() < p {
            0.0
        } else {
            keep
        }
    }))
}

pub fn apply_dropout(
    activations: &DenseMatrix,
    p: f64,
    rng: &mut SeededRng,
    training: bool,
) -> Result<DenseMatrix> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::Domain(format!("dropout rate {p} outside [0, 1)")));
    }
    if !training || p == 0.0 {
        return Ok(activations.clone());
    }
    let mask = dropout_mask(activations.rows(), activations.cols(), p, rng)?;
    let mut out = activations.clone();
    for (a, m) in out.as_mut_slice().iter_mut().zip(mask.as_slice()) {
        *a *= m;
    }
    Ok(out)
}

pub fn apply_input_noise(x: &DenseMatrix, sd: f64, rng: &mut SeededRng) -> Result<DenseMatrix> {
    if sd == 0.0 {
        return Ok(x.clone());
    }
    let noise = sample_gaussian(rng, 0.0, sd, x.rows() * x.cols())?;
    let mut out = x.clone();
    for (v, n) in out.as_mut_slice().iter_mut().zip(noise) {
        *v += n;
    }
    Ok(out)
}

/// Mixup with `λ ~ Beta(α, α)` and a random permutation as partner rows.
pub fn apply_mixup(
    x: &DenseMatrix,
    y: &[f64],
    alpha: f64,
    rng: &mut SeededRng,
    task: Task,
    n_classes: usize,
) -> Result<(DenseMatrix, TargetBatch)> {
    if x.rows() < 2 {
        return Ok((x.clone(), TargetBatch::from_labels(y, task, n_classes)?));
    }
    let lambda = sample_beta(rng, alpha, alpha)?;
    let mut partner: Vec<usize> = (0..x.rows()).collect();
    partner.shuffle(rng);
    apply_mixup_with(x, y, lambda, &partner, task, n_classes)
}

/// Mixup with a given coefficient and partner assignment.
pub fn apply_mixup_with(
    x: &DenseMatrix,
    y: &[f64],
    lambda: f64,
    partner: &[usize],
    task: Task,
    n_classes: usize,
) -> Result<(DenseMatrix, TargetBatch)> {
    let n = x.rows();
    if y.len() != n || partner.len() != n || partner.iter().any(|&p| p >= n) {
        return Err(Error::Shape(
            "mixup partner or target length mismatch".into(),
        ));
    }
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Domain(format!(
            "mixup coefficient {lambda} outside [0, 1]"
        )));
    }
    let mixed = DenseMatrix::from_fn(n, x.cols(), |i, k| {
        lambda * x.get(i, k) + (1.0 - lambda) * x.get(partner[i], k)
    });
    let targets = match task {
        Task::Regression => TargetBatch::Regression(
            (0..n)
                .map(|i| lambda * y[i] + (1.0 - lambda) * y[partner[i]])
                .collect(),
        ),
        Task::Classification => {
            let TargetBatch::Classes(first) = TargetBatch::from_labels(y, task, n_classes)? else {
                unreachable!("classification labels")
            };
            let second = partner.iter().map(|&p| first[p]).collect();
            TargetBatch::MixedClasses {
                first,
                second,
                lambda,
            }
        }
    };
    Ok((mixed, targets))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn dropout_identity_cases() {
        let mut rng = SeededRng::new(0);
        let a = DenseMatrix::from_fn(3, 4, |i, j| (i * 4 + j) as f64);
        assert_eq!(apply_dropout(&a, 0.0, &mut rng, true).unwrap(), a);
        assert_eq!(apply_dropout(&a, 0.9, &mut rng, false).unwrap(), a);
        assert!(apply_dropout(&a, 1.0, &mut rng, true).is_err());
    }

    #[test]
    fn dropout_keeps_expected_fraction() {
        let mut rng = SeededRng::new(1);
        let a = DenseMatrix::from_fn(1000, 100, |_, _| 1.0);
        let out = apply_dropout(&a, 0.5, &mut rng, true).unwrap();
        let kept = out.as_slice().iter().filter(|&&v| v != 0.0).count() as f64 / 1e5;
        let mean = out.as_slice().iter().sum::<f64>() / 1e5;
        assert!((kept - 0.5).abs() < 0.01);
        assert!((mean - 1.0).abs() < 0.02);
    }

    #[test]
    fn input_noise_statistics() {
        let x = DenseMatrix::zeros(1000, 100);
        let mut rng = SeededRng::new(2);
        assert_eq!(apply_input_noise(&x, 0.0, &mut rng).unwrap(), x);
        let noisy = apply_input_noise(&x, 0.05, &mut rng).unwrap();
        let v = noisy.as_slice();
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let sd = (v.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / v.len() as f64).sqrt();
        assert!((sd / 0.05 - 1.0).abs() < 0.05);
        let mut r1 = SeededRng::new(3);
        let mut r2 = SeededRng::new(3);
        assert_eq!(
            apply_input_noise(&x, 0.1, &mut r1).unwrap(),
            apply_input_noise(&x, 0.1, &mut r2).unwrap()
        );
    }

    #[test]
    fn mixup_forced_coefficients() {
        let x = DenseMatrix::from_rows(&[vec![0.0, 0.0], vec![2.0, 2.0]]).unwrap();
        let y = [0.0, 4.0];
        let (same, t) = apply_mixup_with(&x, &y, 1.0, &[1, 0], Task::Regression, 0).unwrap();
        assert_eq!(same, x);
        assert_eq!(t, TargetBatch::Regression(y.to_vec()));
        let (half, t) = apply_mixup_with(&x, &y, 0.5, &[1, 0], Task::Regression, 0).unwrap();
        assert_eq!(half.row(0), &[1.0, 1.0]);
        assert_eq!(t, TargetBatch::Regression(vec![2.0, 2.0]));
    }

    #[test]
    fn mixup_single_row_unchanged() {
        let x = DenseMatrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let mut rng = SeededRng::new(4);
        let (out, _) = apply_mixup(&x, &[1.0], 0.2, &mut rng, Task::Classification, 2).unwrap();
        assert_eq!(out, x);
    }

    #[test]
    fn mixup_is_convex() {
        let mut rng = SeededRng::new(5);
        for _ in 0..50 {
            let x = DenseMatrix::from_fn(8, 3, |_, _| rng.random_range(-5.0..5.0));
            let y: Vec<f64> = (0..8).map(|i| (i % 3) as f64).collect();
            let lambda = rng.random::<f64>();
            let mut partner: Vec<usize> = (0..8).collect();
            partner.shuffle(&mut rng);
            let (mixed, _) =
                apply_mixup_with(&x, &y, lambda, &partner, Task::Classification, 3).unwrap();
            for (i, &j) in partner.iter().enumerate() {
                for k in 0..3 {
                    let (a, b) = (x.get(i, k), x.get(j, k));
                    let v = mixed.get(i, k);
                    assert!(v >= a.min(b) - 1e-12 && v <= a.max(b) + 1e-12);
                }
            }
        }
    }
}
