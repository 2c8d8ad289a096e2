//! Losses with closed-form gradients over the flat parameter layout.

use super::{LearnerError, MaskSpec, ParamVector, DECODER, ENCODER, HEAD};
use crate::scalar::{cast, Scalar};

/// Numerically stable log-softmax (max subtraction).
pub fn log_softmax<S: Scalar>(logits: &[S]) -> Vec<S> {
    let max = logits
        .iter()
        .fold(S::neg_infinity(), |a, &b| if b > a { b } else { a });
    let mut sum = S::zero();
    for &u in logits {
        sum += (u - max).exp();
    }
    let log_z = max + sum.ln();
    logits.iter().map(|&u| u - log_z).collect()
}

/// Mean over the batch of the squared reconstruction error on masked
/// coordinates. Returns the loss and the exact gradient, flat over
/// `{encoder, decoder}`.
///
/// One mask is drawn from `mask` and shared across the batch.
pub fn mae_loss<S: Scalar>(
    params: &ParamVector<S>,
    batch: &[&[S]],
    mask: &MaskSpec,
) -> Result<(S, Vec<S>), LearnerError> {
    mae_loss_with_targets(params, batch, batch, mask)
}

/// Reconstruction loss with an explicit target side. The residual touches
/// only masked coordinates, so perturbing targets on visible coordinates
/// cannot change the result.
pub(crate) fn mae_loss_with_targets<S: Scalar>(
    params: &ParamVector<S>,
    inputs: &[&[S]],
    targets: &[&[S]],
    mask: &MaskSpec,
) -> Result<(S, Vec<S>), LearnerError> {
    if inputs.is_empty() || inputs.len() != targets.len() {
        return Err(LearnerError::EmptyData);
    }
    let encoder = params.affine(ENCODER)?;
    let decoder = params.affine(DECODER)?;
    let d = encoder.in_dim;
    if decoder.out_dim != d || decoder.in_dim != encoder.out_dim {
        return Err(LearnerError::LayoutMismatch(
            "decoder must invert the encoder shape".into(),
        ));
    }
    let coords = mask.masked_coords(d)?;
    let width = d / mask.patch_count;
    let masked_patches = mask.draw()?;

    let enc_range = params.layout().segment_range(ENCODER).unwrap();
    let dec_range = params.layout().segment_range(DECODER).unwrap();
    let mut grad = vec![S::zero(); params.values().len()];
    let mut loss = S::zero();

    let h = encoder.out_dim;
    let mut hidden = vec![S::zero(); h];
    let mut recon = vec![S::zero(); d];
    let mut d_recon = vec![S::zero(); d];
    let mut d_hidden = vec![S::zero(); h];

    for (x, y) in inputs.iter().zip(targets) {
        if x.len() != d || y.len() != d {
            return Err(LearnerError::LayoutMismatch(format!(
                "example dim {} does not match encoder input {d}",
                x.len()
            )));
        }
        let mut visible = x.to_vec();
        for &p in &masked_patches {
            for v in &mut visible[p * width..(p + 1) * width] {
                *v = S::zero();
            }
        }
        encoder.apply(&visible, &mut hidden);
        decoder.apply(&hidden, &mut recon);

        for v in d_recon.iter_mut() {
            *v = S::zero();
        }
        for &j in &coords {
            let r = recon[j] - y[j];
            loss += r * r;
            d_recon[j] = cast::<S>(2.0) * r;
        }

        // decoder grads
        {
            let g = &mut grad[dec_range.clone()];
            let wlen = d * h;
            for j in 0..d {
                let gj = d_recon[j];
                if gj != S::zero() {
                    for (i, hv) in hidden.iter().enumerate() {
                        g[j * h + i] += gj * *hv;
                    }
                    g[wlen + j] += gj;
                }
            }
        }
        decoder.apply_transpose(&d_recon, &mut d_hidden);
        // encoder grads against the visible input
        {
            let g = &mut grad[enc_range.clone()];
            let wlen = h * d;
            for (j, gj) in d_hidden.iter().enumerate() {
                for (i, xv) in visible.iter().enumerate() {
                    g[j * d + i] += *gj * *xv;
                }
                g[wlen + j] += *gj;
            }
        }
    }

    let inv_n = S::one() / cast::<S>(inputs.len() as f64);
    for v in grad.iter_mut() {
        *v *= inv_n;
    }
    loss = loss * inv_n;
    if !loss.is_finite() {
        return Err(LearnerError::Diverged {
            step: 0,
            loss: loss.to_f64().unwrap_or(f64::NAN),
        });
    }
    Ok((loss, grad))
}

/// Plain cross-entropy: the weighted path with every class weight one.
pub fn ce_loss<S: Scalar>(
    params: &ParamVector<S>,
    features: &[&[S]],
    labels: &[usize],
) -> Result<(S, Vec<S>), LearnerError> {
    let classes = params.affine(HEAD)?.out_dim;
    let ones = vec![S::one(); classes];
    wce_loss(params, features, labels, &ones)
}

/// Class-weighted cross-entropy over the softmax classifier:
/// `mean_i [ -w(y_i) * log p(y_i | x_i) ]`, with the exact gradient flat over
/// `{encoder, head}`.
pub fn wce_loss<S: Scalar>(
    params: &ParamVector<S>,
    features: &[&[S]],
    labels: &[usize],
    class_weights: &[S],
) -> Result<(S, Vec<S>), LearnerError> {
    if features.is_empty() || features.len() != labels.len() {
        return Err(LearnerError::EmptyData);
    }
    let encoder = params.affine(ENCODER)?;
    let head = params.affine(HEAD)?;
    let d = encoder.in_dim;
    let h = encoder.out_dim;
    let classes = head.out_dim;
    if head.in_dim != h {
        return Err(LearnerError::LayoutMismatch(
            "head input must match encoder output".into(),
        ));
    }
    if class_weights.len() != classes {
        return Err(LearnerError::LayoutMismatch(format!(
            "{} class weights for {classes} classes",
            class_weights.len()
        )));
    }

    let enc_range = params.layout().segment_range(ENCODER).unwrap();
    let head_range = params.layout().segment_range(HEAD).unwrap();
    let mut grad = vec![S::zero(); params.values().len()];
    let mut loss = S::zero();

    let mut hidden = vec![S::zero(); h];
    let mut logits = vec![S::zero(); classes];
    let mut d_logits = vec![S::zero(); classes];
    let mut d_hidden = vec![S::zero(); h];

    for (x, &y) in features.iter().zip(labels) {
        if y >= classes {
            return Err(LearnerError::LabelOutOfRange { label: y, classes });
        }
        let w = class_weights[y];
        if !w.is_finite() {
            return Err(LearnerError::NonFiniteWeight { class: y });
        }
        if x.len() != d {
            return Err(LearnerError::LayoutMismatch(format!(
                "example dim {} does not match encoder input {d}",
                x.len()
            )));
        }
        encoder.apply(x, &mut hidden);
        head.apply(&hidden, &mut logits);
        let log_probs = log_softmax(&logits);
        loss -= w * log_probs[y];

        // d loss / d logits = w * (softmax - onehot)
        for (j, lp) in log_probs.iter().enumerate() {
            let p = lp.exp();
            let delta = if j == y { S::one() } else { S::zero() };
            d_logits[j] = w * (p - delta);
        }
        {
            let g = &mut grad[head_range.clone()];
            let wlen = classes * h;
            for (j, gj) in d_logits.iter().enumerate() {
                for (i, hv) in hidden.iter().enumerate() {
                    g[j * h + i] += *gj * *hv;
                }
                g[wlen + j] += *gj;
            }
        }
        head.apply_transpose(&d_logits, &mut d_hidden);
        {
            let g = &mut grad[enc_range.clone()];
            let wlen = h * d;
            for (j, gj) in d_hidden.iter().enumerate() {
                for (i, xv) in x.iter().enumerate() {
                    g[j * d + i] += *gj * *xv;
                }
                g[wlen + j] += *gj;
            }
        }
    }

    let inv_n = S::one() / cast::<S>(features.len() as f64);
    for v in grad.iter_mut() {
        *v *= inv_n;
    }
    loss = loss * inv_n;
    if !loss.is_finite() {
        return Err(LearnerError::Diverged {
            step: 0,
            loss: loss.to_f64().unwrap_or(f64::NAN),
        });
    }
    Ok((loss, grad))
}
