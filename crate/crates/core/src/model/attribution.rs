//! Input Jacobians of the attribution layer and parameter gradients of the
//! penalties built on them.
//!
//! For one sample, `J_l = G_l W_l J_{l−1}` with `J_{−1} = I` and `G_l` the
//! diagonal gain of hidden layer `l` (ReLU mask, dropout multiplier and
//! batch-norm scale). Gains are held constant when differentiating, so with
//! `Ĝ = G_l·∂R/∂J_l` the chain rule gives `∂R/∂W_l = Ĝ J_{l−1}ᵀ` and
//! `∂R/∂J_{l−1} = W_lᵀ Ĝ`.

use crate::error::{Error, Result};
use crate::numeric::dot;
use crate::numeric::{DenseMatrix, SeededRng};
use crate::par::{map_indexed, Execution};
use crate::regularizers::{
    draw_pair_sets, pair_correlation_grad_acc_normed, pair_correlation_normed, TangosConfig,
};

use super::{ForwardTrace, MlpModel, ParamGrads};

/// `d_H × d_X` input Jacobian of the attribution layer for one sample.
#[derive(Clone, Debug, PartialEq)]
pub struct AttributionMatrix(pub DenseMatrix);

impl AttributionMatrix {
    pub fn matrix(&self) -> &DenseMatrix {
        &self.0
    }

    pub fn into_inner(self) -> DenseMatrix {
        self.0
    }
}

impl AsRef<DenseMatrix> for AttributionMatrix {
    fn as_ref(&self) -> &DenseMatrix {
        &self.0
    }
}

/// Jacobians of `nb` consecutive samples side by side: columns
/// `b·d_X..(b+1)·d_X` of every row belong to sample `first + b`, so one
/// product per layer covers the whole group.
struct Stacked {
    first: usize,
    nb: usize,
    d_x: usize,
    /// `P_l = W_l J_{l−1}`, the jacobian before the gain.
    pre: Vec<DenseMatrix>,
    jac: Vec<DenseMatrix>,
}

impl Stacked {
    fn new(depth: usize, d_x: usize) -> Self {
        Self {
            first: 0,
            nb: 0,
            d_x,
            pre: vec![DenseMatrix::zeros(0, 0); depth],
            jac: vec![DenseMatrix::zeros(0, 0); depth],
        }
    }

    fn fill(
        &mut self,
        model: &MlpModel,
        trace: &ForwardTrace,
        first: usize,
        nb: usize,
    ) -> Result<()> {
        self.first = first;
        self.nb = nb;
        let dx = self.d_x;
        for l in 0..=model.attribution_layer {
            let w = &model.layers[l].weights;
            if l == 0 {
                self.pre[0].reshape_zeroed(w.rows(), nb * dx);
                for k in 0..w.rows() {
                    let row = self.pre[0].row_mut(k);
                    for b in 0..nb {
                        row[b * dx..(b + 1) * dx].copy_from_slice(w.row(k));
                    }
                }
            } else {
                w.matmul_into(&self.jac[l - 1], &mut self.pre[l])?;
            }
            self.jac[l].clone_from(&self.pre[l]);
            scale_blocks(&mut self.jac[l], &trace.gains[l], first, dx);
        }
        Ok(())
    }

    fn top(&self) -> &DenseMatrix {
        self.jac.last().expect("non-empty chain")
    }
}

fn segment(m: &DenseMatrix, k: usize, b: usize, dx: usize) -> &[f64] {
    &m.row(k)[b * dx..(b + 1) * dx]
}

/// Scales row `k` of block `b` by `gains[first + b][k]`.
fn scale_blocks(m: &mut DenseMatrix, gains: &DenseMatrix, first: usize, dx: usize) {
    let nb = m.cols() / dx;
    for k in 0..m.rows() {
        let row = m.row_mut(k);
        for b in 0..nb {
            let g = gains.get(first + b, k);
            for v in &mut row[b * dx..(b + 1) * dx] {
                *v *= g;
            }
        }
    }
}

pub fn attribution_jacobian(
    model: &MlpModel,
    trace: &ForwardTrace,
    sample_index: usize,
) -> Result<AttributionMatrix> {
    model.check_trace(trace)?;
    if sample_index >= trace.batch_size() {
        return Err(Error::Trace(format!(
            "sample {sample_index} outside batch of {}",
            trace.batch_size()
        )));
    }
    let mut chain = Stacked::new(model.attribution_layer + 1, model.input_width());
    chain.fill(model, trace, sample_index, 1)?;
    Ok(AttributionMatrix(chain.jac.pop().expect("non-empty chain")))
}

/// Unweighted penalty values on a batch and the gradient of the weighted sum.
#[derive(Clone, Debug, PartialEq)]
pub struct PenaltyOutput {
    pub spec: f64,
    /// `None` when the attribution layer has fewer than two neurons.
    pub orth: Option<f64>,
    pub grads: ParamGrads,
}

/// Samples per work item. Fixed, so the reduction order (and the bits of
/// the result) do not depend on how items are scheduled.
const CHUNK: usize = 16;

struct ChunkTerms {
    spec: f64,
    orth: f64,
    grads: Option<ParamGrads>,
}

pub fn penalty_value_and_grads(
    model: &MlpModel,
    trace: &ForwardTrace,
    cfg: &TangosConfig,
    rng: &mut SeededRng,
) -> Result<PenaltyOutput> {
    penalty_value_and_grads_with(model, trace, cfg, rng, Execution::default())
}

/// Fixed-size chunks of samples run under `exec` and are reduced in chunk
/// order, so the output does not depend on the execution mode.
pub fn penalty_value_and_grads_with(
    model: &MlpModel,
    trace: &ForwardTrace,
    cfg: &TangosConfig,
    rng: &mut SeededRng,
    exec: Execution,
) -> Result<PenaltyOutput> {
    cfg.validate()?;
    model.check_trace(trace)?;
    let batch = trace.batch_size();
    if batch == 0 {
        return Err(Error::Domain("empty batch".into()));
    }
    let d_h = model.attribution_width();
    if d_h < 2 && cfg.lambda2 > 0.0 {
        return Err(Error::Config(format!(
            "orthogonalization weight {} needs at least two latent neurons, layer has {d_h}",
            cfg.lambda2
        )));
    }
    let pair_sets = if d_h >= 2 {
        Some(draw_pair_sets(rng, batch, d_h, cfg.pairs.resolve(d_h))?)
    } else {
        None
    };
    let need_grads = cfg.lambda1 != 0.0 || cfg.lambda2 != 0.0;
    let spec_coef = cfg.lambda1 / (batch as f64 * d_h as f64);

    let d_x = model.input_width();
    let n_chunks = batch.div_ceil(CHUNK);
    let per_chunk = map_indexed(exec, n_chunks, |c| -> Result<ChunkTerms> {
        let first = c * CHUNK;
        let nb = CHUNK.min(batch - first);
        let mut chain = Stacked::new(model.attribution_layer + 1, d_x);
        chain.fill(model, trace, first, nb)?;
        let j = chain.top();
        let mut out = ChunkTerms {
            spec: 0.0,
            orth: 0.0,
            grads: None,
        };
        for b in 0..nb {
            let l1: f64 = (0..d_h)
                .map(|i| segment(j, i, b, d_x).iter().map(|v| v.abs()).sum::<f64>())
                .sum();
            out.spec += l1 / d_h as f64;
        }
        // row norms per sample, indexed [b * d_h + i]
        let norms: Vec<f64> = (0..nb)
            .flat_map(|b| (0..d_h).map(move |i| (b, i)))
            .map(|(b, i)| {
                let r = segment(j, i, b, d_x);
                dot(r, r).sqrt()
            })
            .collect();
        let norm_pair = |b: usize, p: usize, q: usize| (norms[b * d_h + p], norms[b * d_h + q]);
        let orth_only = |out: &mut ChunkTerms| {
            if let Some(sets) = &pair_sets {
                for b in 0..nb {
                    let pairs = &sets[first + b];
                    let sum: f64 = pairs
                        .iter()
                        .map(|&(p, q)| {
                            pair_correlation_normed(
                                segment(j, p, b, d_x),
                                segment(j, q, b, d_x),
                                norm_pair(b, p, q),
                                cfg.epsilon,
                            )
                        })
                        .sum();
                    out.orth += sum / pairs.len() as f64;
                }
            }
        };
        if !need_grads {
            orth_only(&mut out);
            return Ok(out);
        }

        let mut g = j.map(|v| {
            if v > 0.0 {
                spec_coef
            } else if v < 0.0 {
                -spec_coef
            } else {
                0.0
            }
        });
        match &pair_sets {
            Some(sets) if cfg.lambda2 != 0.0 => {
                for b in 0..nb {
                    let pairs = &sets[first + b];
                    let coef = cfg.lambda2 / (batch as f64 * pairs.len() as f64);
                    let cols = b * d_x..(b + 1) * d_x;
                    let mut sum = 0.0;
                    for &(p, q) in pairs {
                        let (gp, gq) = g.two_rows_mut(p, q);
                        sum += pair_correlation_grad_acc_normed(
                            segment(j, p, b, d_x),
                            segment(j, q, b, d_x),
                            norm_pair(b, p, q),
                            cfg.epsilon,
                            coef,
                            &mut gp[cols.clone()],
                            &mut gq[cols.clone()],
                        );
                    }
                    out.orth += sum / pairs.len() as f64;
                }
            }
            _ => orth_only(&mut out),
        }

        let mut grads = ParamGrads::zeros_like(model);
        let mut back = DenseMatrix::zeros(0, 0);
        for l in (0..=model.attribution_layer).rev() {
            if let Some(bn) = model.batch_norm.get(l) {
                // gain_k = mask_k·drop_k·γ_k·inv_std_k, linear in γ_k
                let p = &chain.pre[l];
                let inv_std = &trace.batch_norm[l].inv_std;
                for (k, &inv) in inv_std.iter().enumerate().take(bn.width()) {
                    for b in 0..nb {
                        let mut scale = trace.relu_masks[l].get(first + b, k) * inv;
                        if let Some(d) = &trace.dropout[l] {
                            scale *= d.get(first + b, k);
                        }
                        if scale != 0.0 {
                            let s = dot(segment(&g, k, b, d_x), segment(p, k, b, d_x));
                            grads.bn_gamma[l][k] += scale * s;
                        }
                    }
                }
            }
            scale_blocks(&mut g, &trace.gains[l], first, d_x);
            if l == 0 {
                let dw = &mut grads.weights[0];
                for k in 0..dw.rows() {
                    let row = dw.row_mut(k);
                    for b in 0..nb {
                        for (o, v) in row.iter_mut().zip(segment(&g, k, b, d_x)) {
                            *o += v;
                        }
                    }
                }
                break;
            }
            grads.weights[l].add_matmul_t(&g, &chain.jac[l - 1])?;
            model.layers[l].weights.t_matmul_into(&g, &mut back)?;
            std::mem::swap(&mut g, &mut back);
        }
        out.grads = Some(grads);
        Ok(out)
    });

    let mut grads = ParamGrads::zeros_like(model);
    let (mut spec_sum, mut orth_sum) = (0.0, 0.0);
    for terms in per_chunk {
        let terms = terms?;
        spec_sum += terms.spec;
        orth_sum += terms.orth;
        if let Some(g) = terms.grads {
            grads.add_assign(&g)?;
        }
    }
    let bf = batch as f64;
    Ok(PenaltyOutput {
        spec: spec_sum / bf,
        orth: pair_sets.map(|_| orth_sum / bf),
        grads,
    })
}
