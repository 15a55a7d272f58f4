//! The fusion architecture: patchification, projection, saliency-based token
//! selection, learnable-query cross-attention, the classification head, and
//! the baseline/ablation variants.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use crate::config::{FasConfig, Variant};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::params::ParameterStore;
use crate::rng::StreamRng;
use crate::tape::{NodeId, Tape};

/// One utterance: acoustic and semantic feature matrices plus the label.
#[derive(Debug, Clone)]
pub struct SampleData {
    pub aco: Matrix,
    pub sem: Matrix,
    pub label: usize,
}

/// Token selection for one stream: `slots[i]` is the original patch index
/// kept at position i, or `None` for a zero-padding row (short sequences).
/// Kept indices are distinct and ascending so temporal order is preserved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Selection {
    pub slots: Vec<Option<usize>>,
}

impl Selection {
    pub fn kept(&self) -> Vec<usize> {
        self.slots.iter().flatten().copied().collect()
    }
}

/// Non-overlapping temporal downsampling: windows of `s` consecutive frames
/// are mean-pooled per dimension; a ragged tail is pooled over its actual
/// length.
pub fn patchify(f: &Matrix, s: usize) -> Result<Matrix> {
    if s < 1 {
        return Err(Error::Config(format!("patch factor must be >= 1, got {s}")));
    }
    if f.rows() == 0 {
        return Err(Error::Input("patchify: empty sequence".into()));
    }
    let t = f.rows();
    let n_patches = t.div_ceil(s);
    let mut out = Matrix::zeros(n_patches, f.cols());
    for p in 0..n_patches {
        let start = p * s;
        let end = (start + s).min(t);
        for r in start..end {
            for (o, x) in out.row_mut(p).iter_mut().zip(f.row(r)) {
                *o += x;
            }
        }
        let len = (end - start) as f64;
        for o in out.row_mut(p) {
            *o /= len;
        }
    }
    Ok(out)
}

/// Per-token L2 norm as the saliency proxy. The scoring is non-parametric
/// and selection is discrete, so no gradient flows through it.
pub fn saliency_scores(f: &Matrix) -> Vec<f64> {
    (0..f.rows())
        .map(|r| libm::sqrt(f.row(r).iter().map(|x| x * x).sum::<f64>()))
        .collect()
}

/// The k highest-scoring rows, ties broken by lower index first, re-ordered
/// ascending by original index. If fewer than k rows exist, every row is
/// kept and the selection is zero-padded to length k.
pub fn top_k_select(scores: &[f64], k: usize) -> Result<Selection> {
    if k < 1 {
        return Err(Error::Config(format!("top-k requires k >= 1, got {k}")));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(core::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let keep = k.min(scores.len());
    let mut picked: Vec<usize> = order[..keep].to_vec();
    picked.sort_unstable();
    let mut slots: Vec<Option<usize>> = picked.into_iter().map(Some).collect();
    slots.resize(k, None);
    Ok(Selection { slots })
}

/// Uniform selection without replacement (the "w/o Top-K" ablation),
/// re-ordered ascending and zero-padded like the saliency path.
pub fn random_select(n: usize, k: usize, rng: &mut StreamRng) -> Result<Selection> {
    if k < 1 {
        return Err(Error::Config(format!("selection requires k >= 1, got {k}")));
    }
    let mut slots: Vec<Option<usize>> =
        rng.sample_without_replacement(n, k).into_iter().map(Some).collect();
    slots.resize(k, None);
    Ok(Selection { slots })
}

/// Eager row gather for oracles and tests; the tape op mirrors this.
pub fn select_rows(f: &Matrix, sel: &Selection) -> Matrix {
    let mut out = Matrix::zeros(sel.slots.len(), f.cols());
    for (r, slot) in sel.slots.iter().enumerate() {
        if let Some(s) = slot {
            out.row_mut(r).copy_from_slice(f.row(*s));
        }
    }
    out
}

/// `F * W + b` per row, no nonlinearity.
pub fn project(tape: &mut Tape, f: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
    let fw = tape.matmul(f, w)?;
    tape.add_row_bias(fw, b)
}

/// Node ids of the cross-attention parameters on a tape.
pub struct AttnParams {
    pub q: NodeId,
    pub wk: NodeId,
    pub bk: NodeId,
    pub wv: NodeId,
    pub bv: NodeId,
    pub ffn_w1: NodeId,
    pub ffn_b1: NodeId,
    pub ffn_w2: NodeId,
    pub ffn_b2: NodeId,
}

pub struct FuseOutput {
    /// Final fused tokens (after the residual feed-forward).
    pub fused: NodeId,
    /// Attention weight rows (post-softmax, pre-dropout).
    pub attn: NodeId,
    /// Attention output before the feed-forward.
    pub pre_ffn: NodeId,
}

/// Learnable-query cross-attention over the distilled context, followed by a
/// position-wise feed-forward with a residual connection:
/// `softmax(Q K^T / sqrt(d)) V`, then `x + W2 gelu(W1 x)`.
pub fn query_fuse(
    tape: &mut Tape,
    p: &AttnParams,
    context: NodeId,
    d: usize,
    dropout: f64,
    training: bool,
    rng: &mut StreamRng,
) -> Result<FuseOutput> {
    let k = project(tape, context, p.wk, p.bk)?;
    let v = project(tape, context, p.wv, p.bv)?;
    let scores = tape.matmul_transpose_b(p.q, k)?;
    let scaled = tape.scale(scores, 1.0 / libm::sqrt(d as f64))?;
    let attn = tape.softmax_rows(scaled)?;
    let attn_d = tape.dropout(attn, dropout, training, rng)?;
    let pre_ffn = tape.matmul(attn_d, v)?;
    let h = project(tape, pre_ffn, p.ffn_w1, p.ffn_b1)?;
    let g = tape.gelu(h)?;
    let o = project(tape, g, p.ffn_w2, p.ffn_b2)?;
    let fused = tape.add(pre_ffn, o)?;
    Ok(FuseOutput { fused, attn, pre_ffn })
}

pub struct HeadParams {
    pub w1: NodeId,
    pub b1: NodeId,
    pub w2: NodeId,
    pub b2: NodeId,
}

/// Flatten row-major, then linear -> GELU -> dropout -> linear. Raw logits;
/// the softmax lives in the loss.
pub fn classify(
    tape: &mut Tape,
    fused: NodeId,
    head: &HeadParams,
    dropout: f64,
    training: bool,
    rng: &mut StreamRng,
) -> Result<NodeId> {
    let (rows, cols) = tape.value(fused).shape();
    let flat = tape.reshape(fused, 1, rows * cols)?;
    let h = project(tape, flat, head.w1, head.b1)?;
    let g = tape.gelu(h)?;
    let g = tape.dropout(g, dropout, training, rng)?;
    project(tape, g, head.w2, head.b2)
}

pub struct ForwardOutput {
    pub logits: NodeId,
    pub aco_selection: Option<Selection>,
    pub sem_selection: Option<Selection>,
}

/// Full forward pass for one sample, dispatching on the configured variant.
/// Registers every parameter in `params` on the tape, so a backward pass
/// yields a gradient entry for each.
pub fn forward(
    tape: &mut Tape,
    sample: &SampleData,
    params: &ParameterStore,
    cfg: &FasConfig,
    training: bool,
    rng: &mut StreamRng,
) -> Result<ForwardOutput> {
    if sample.aco.cols() != cfg.d_aco_in {
        return Err(Error::Input(format!(
            "acoustic stream has dim {}, config expects {}",
            sample.aco.cols(),
            cfg.d_aco_in
        )));
    }
    if sample.sem.cols() != cfg.d_sem_in {
        return Err(Error::Input(format!(
            "semantic stream has dim {}, config expects {}",
            sample.sem.cols(),
            cfg.d_sem_in
        )));
    }

    let mut ids: BTreeMap<&str, NodeId> = BTreeMap::new();
    for (name, value) in params.iter() {
        ids.insert(name, tape.param(name, value.clone())?);
    }
    let id = |ids: &BTreeMap<&str, NodeId>, name: &str| -> Result<NodeId> {
        ids.get(name)
            .copied()
            .ok_or_else(|| Error::Contract(format!("variant requires parameter '{name}'")))
    };

    let patched_aco = tape.constant(patchify(&sample.aco, cfg.s)?)?;
    let patched_sem = tape.constant(patchify(&sample.sem, cfg.s)?)?;
    let f_aco = project(tape, patched_aco, id(&ids, "proj_aco.w")?, id(&ids, "proj_aco.b")?)?;
    let f_sem = project(tape, patched_sem, id(&ids, "proj_sem.w")?, id(&ids, "proj_sem.b")?)?;

    let head = || -> Result<HeadParams> {
        Ok(HeadParams {
            w1: id(&ids, "head.w1")?,
            b1: id(&ids, "head.b1")?,
            w2: id(&ids, "head.w2")?,
            b2: id(&ids, "head.b2")?,
        })
    };

    match cfg.variant {
        Variant::Fas | Variant::FasNoTopk | Variant::FasNoQlearn => {
            let sel_aco = if cfg.variant == Variant::FasNoTopk {
                random_select(tape.value(f_aco).rows(), cfg.k_aco, rng)?
            } else {
                top_k_select(&saliency_scores(tape.value(f_aco)), cfg.k_aco)?
            };
            let sel_sem = if cfg.variant == Variant::FasNoTopk {
                random_select(tape.value(f_sem).rows(), cfg.k_sem, rng)?
            } else {
                top_k_select(&saliency_scores(tape.value(f_sem)), cfg.k_sem)?
            };
            let kept_aco = tape.gather_rows(f_aco, sel_aco.slots.clone())?;
            let kept_sem = tape.gather_rows(f_sem, sel_sem.slots.clone())?;
            let context = tape.concat_rows(kept_aco, kept_sem)?;

            let fused = if cfg.variant == Variant::FasNoQlearn {
                // no learnable queries: mean-pool the context and duplicate
                // to n_q rows so the head shape is unchanged
                let pooled = tape.mean_rows(context)?;
                tape.broadcast_row(pooled, cfg.n_q)?
            } else {
                let attn = AttnParams {
                    q: id(&ids, "q_learn")?,
                    wk: id(&ids, "attn_k.w")?,
                    bk: id(&ids, "attn_k.b")?,
                    wv: id(&ids, "attn_v.w")?,
                    bv: id(&ids, "attn_v.b")?,
                    ffn_w1: id(&ids, "ffn.w1")?,
                    ffn_b1: id(&ids, "ffn.b1")?,
                    ffn_w2: id(&ids, "ffn.w2")?,
                    ffn_b2: id(&ids, "ffn.b2")?,
                };
                query_fuse(tape, &attn, context, cfg.d, cfg.dropout, training, rng)?.fused
            };
            let logits = classify(tape, fused, &head()?, cfg.dropout, training, rng)?;
            Ok(ForwardOutput { logits, aco_selection: Some(sel_aco), sem_selection: Some(sel_sem) })
        }
        Variant::Concat => {
            let pa = tape.mean_rows(f_aco)?;
            let ps = tape.mean_rows(f_sem)?;
            let x = tape.concat_cols(pa, ps)?;
            let logits = classify(tape, x, &head()?, cfg.dropout, training, rng)?;
            Ok(ForwardOutput { logits, aco_selection: None, sem_selection: None })
        }
        Variant::Gated => {
            // sigmoid gate over the concatenated pooled streams, applied to
            // each stream before re-concatenation; head as in Concat
            let pa = tape.mean_rows(f_aco)?;
            let ps = tape.mean_rows(f_sem)?;
            let x = tape.concat_cols(pa, ps)?;
            let gated = tape.matmul(x, id(&ids, "gate.w")?)?;
            let gated = tape.add_row_bias(gated, id(&ids, "gate.b")?)?;
            let gate = tape.sigmoid(gated)?;
            let ones = tape.constant(Matrix::filled(1, cfg.d, 1.0))?;
            let inv_gate = tape.sub(ones, gate)?;
            let ga = tape.hadamard(gate, pa)?;
            let gs = tape.hadamard(inv_gate, ps)?;
            let fused = tape.concat_cols(ga, gs)?;
            let logits = classify(tape, fused, &head()?, cfg.dropout, training, rng)?;
            Ok(ForwardOutput { logits, aco_selection: None, sem_selection: None })
        }
    }
}
