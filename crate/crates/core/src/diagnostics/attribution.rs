use crate::error::{Error, Result};
use crate::model::{attribution_jacobian, MlpModel};
use crate::numeric::DenseMatrix;
use crate::regularizers::{orth_loss_full, spec_loss};

/// Exact (all pairs) penalty values over an evaluation set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AttributionStats {
    pub l_spec: f64,
    /// `None` when the attribution layer has a single neuron.
    pub l_orth: Option<f64>,
}

pub fn attribution_stats(model: &MlpModel, x_eval: &DenseMatrix) -> Result<AttributionStats> {
    if x_eval.rows() == 0 {
        return Err(Error::Domain("empty evaluation set".into()));
    }
    let (_, trace) = model.forward(x_eval)?;
    let js = (0..x_eval.rows())
        .map(|b| attribution_jacobian(model, &trace, b))
        .collect::<Result<Vec<_>>>()?;
    let l_orth = if model.attribution_width() >= 2 {
        Some(orth_loss_full(&js)?)
    } else {
        None
    };
    Ok(AttributionStats {
        l_spec: spec_loss(&js)?,
        l_orth,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::init_model;
    use crate::numeric::SeededRng;
    use crate::regularizers::{orth_sample, pair_count, spec_sample};
    use rand::Rng;

    #[test]
    fn orthogonal_rows_give_zero_and_identical_rows_one() {
        // single hidden layer, strongly active: J = W1
        let mut m = init_model(&[3, 3, 1], 0).unwrap();
        m.layers[0].weights = DenseMatrix::identity(3);
        m.layers[0].bias = vec![10.0; 3];
        let x = DenseMatrix::from_rows(&[vec![0.1, 0.2, 0.3], vec![-0.3, 0.0, 0.5]]).unwrap();
        let s = attribution_stats(&m, &x).unwrap();
        assert_eq!(s.l_orth, Some(0.0));
        assert!((s.l_spec - 1.0).abs() < 1e-12);

        m.layers[0].weights = DenseMatrix::from_fn(3, 3, |_, k| k as f64 + 1.0);
        let s = attribution_stats(&m, &x).unwrap();
        assert!((s.l_orth.unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn agrees_with_sample_by_sample_values() {
        let mut rng = SeededRng::new(3);
        let m = init_model(&[4, 6, 5, 1], 11).unwrap();
        let x = DenseMatrix::from_fn(9, 4, |_, _| rng.random_range(-1.0..1.0));
        let s = attribution_stats(&m, &x).unwrap();
        let (_, trace) = m.forward(&x).unwrap();
        let pairs: Vec<(usize, usize)> = (1..5).flat_map(|i| (0..i).map(move |j| (i, j))).collect();
        assert_eq!(pairs.len(), pair_count(5));
        let (mut sp, mut or) = (0.0, 0.0);
        for b in 0..9 {
            let j = attribution_jacobian(&m, &trace, b).unwrap();
            sp += spec_sample(j.matrix());
            or += orth_sample(j.matrix(), &pairs, 1e-12);
        }
        assert!((s.l_spec - sp / 9.0).abs() < 1e-12);
        assert!((s.l_orth.unwrap() - or / 9.0).abs() < 1e-12);
    }

    #[test]
    fn single_neuron_has_no_orth() {
        let m = init_model(&[2, 1, 1], 0).unwrap();
        let s = attribution_stats(&m, &DenseMatrix::zeros(3, 2)).unwrap();
        assert_eq!(s.l_orth, None);
    }
}
