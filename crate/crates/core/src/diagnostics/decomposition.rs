use crate::data::Task;
use crate::error::{Error, Result};
use crate::model::{MlpModel, OutputConstraint};
use crate::numeric::DenseMatrix;

/// Squared-error terms of a weighted ensemble `f = Σ α_k T_k` at one point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnsembleTerms {
    pub f: f64,
    /// `(f − y)²`
    pub err: f64,
    /// `Σ α_k (T_k − y)²`
    pub err_bar: f64,
    /// `Σ α_k (T_k − f)²`
    pub div: f64,
}

/// `err = err_bar − div` whenever `Σ α_k = 1`.
pub fn ensemble_terms(alpha: &[f64], t: &[f64], y: f64) -> EnsembleTerms {
    let f: f64 = alpha.iter().zip(t).map(|(a, v)| a * v).sum();
    let mut err_bar = 0.0;
    let mut div = 0.0;
    for (a, v) in alpha.iter().zip(t) {
        err_bar += a * (v - y) * (v - y);
        div += a * (v - f) * (v - f);
    }
    EnsembleTerms {
        f,
        err: (f - y) * (f - y),
        err_bar,
        div,
    }
}

/// Averages over an evaluation set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecompositionRecord {
    pub err: f64,
    pub err_bar: f64,
    pub div: f64,
    /// Largest per-sample `|err − (err_bar − div)|`.
    pub identity_residual: f64,
}

/// Treats the units feeding a sum-to-one output head as ensemble members.
pub fn decompose_ensemble(
    model: &MlpModel,
    task: Task,
    x_eval: &DenseMatrix,
    y_eval: &[f64],
) -> Result<DecompositionRecord> {
    if task != Task::Regression {
        return Err(Error::UnsupportedTask(
            "ensemble decomposition is defined for regression only".into(),
        ));
    }
    if model.output_constraint != OutputConstraint::Simplex {
        return Err(Error::Config(
            "ensemble decomposition needs a sum-to-one output head".into(),
        ));
    }
    if x_eval.rows() == 0 || x_eval.rows() != y_eval.len() {
        return Err(Error::Shape(
            "evaluation inputs and targets disagree".into(),
        ));
    }
    let alpha = model.simplex_alpha().expect("simplex head");
    let (_, trace) = model.forward(x_eval)?;
    let members = trace.hidden(model.n_hidden() - 1);
    let n = x_eval.rows() as f64;
    let mut rec = DecompositionRecord {
        err: 0.0,
        err_bar: 0.0,
        div: 0.0,
        identity_residual: 0.0,
    };
    for (i, &y) in y_eval.iter().enumerate() {
        let t = ensemble_terms(&alpha, members.row(i), y);
        rec.err += t.err;
        rec.err_bar += t.err_bar;
        rec.div += t.div;
        rec.identity_residual = rec
            .identity_residual
            .max((t.err - (t.err_bar - t.div)).abs());
    }
    rec.err /= n;
    rec.err_bar /= n;
    rec.div /= n;
    Ok(rec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::init_model;
    use crate::numeric::SeededRng;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn hand_example() {
        let t = ensemble_terms(&[0.5, 0.5], &[0.0, 2.0], 1.0);
        assert_eq!((t.f, t.err, t.err_bar, t.div), (1.0, 0.0, 1.0, 1.0));
    }

    #[test]
    fn identical_members_have_no_diversity() {
        let t = ensemble_terms(&[0.2, 0.3, 0.5], &[1.5, 1.5, 1.5], -0.5);
        assert_eq!(t.div, 0.0);
        assert!((t.err - t.err_bar).abs() < 1e-15);
    }

    #[test]
    fn model_level_decomposition() {
        let mut rng = SeededRng::new(2);
        let m = init_model(&[3, 6, 6, 1], 4)
            .unwrap()
            .with_simplex_head()
            .unwrap();
        let x = DenseMatrix::from_fn(20, 3, |_, _| rng.random_range(-1.0..1.0));
        let y: Vec<f64> = (0..20).map(|_| rng.random_range(-1.0..1.0)).collect();
        let r = decompose_ensemble(&m, Task::Regression, &x, &y).unwrap();
        assert!(r.identity_residual < 1e-12);
        assert!((r.err - (r.err_bar - r.div)).abs() < 1e-12);
        assert!(matches!(
            decompose_ensemble(&m, Task::Classification, &x, &y),
            Err(Error::UnsupportedTask(_))
        ));
        let plain = init_model(&[3, 6, 6, 1], 4).unwrap();
        assert!(decompose_ensemble(&plain, Task::Regression, &x, &y).is_err());
    }

    proptest! {
        #[test]
        fn identity_with_signed_weights(
            raw in prop::collection::vec(-3f64..3.0, 2..8),
            t in prop::collection::vec(-10f64..10.0, 8),
            y in -10f64..10.0,
        ) {
            // arbitrary-sign weights normalized to sum to one
            let s: f64 = raw.iter().sum();
            prop_assume!(s.abs() > 0.1);
            let alpha: Vec<f64> = raw.iter().map(|a| a / s).collect();
            let e = ensemble_terms(&alpha, &t[..alpha.len()], y);
            let scale = 1.0 + e.err.abs() + e.err_bar.abs() + e.div.abs();
            prop_assert!((e.err - (e.err_bar - e.div)).abs() <= 1e-12 * scale);
        }
    }
}
