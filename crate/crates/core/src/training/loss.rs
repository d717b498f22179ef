//! Training objective and its analytic gradient.
//!
//! Per example, with `S` the active (seen) classes and `y` the label:
//!
//! ```text
//! L     = L_ce + λ₁·L_attr + λ₂·L_vis
//! L_ce  = logsumexp_{c∈S} ψ_c − ψ_y
//! L_attr = (1/R) Σ_r Σ_a h_a · a_r[a]²
//! L_vis = max(0, cos(Σ_r b_r e_r, Σ_a h_a φ_k[a,:]))
//! ```
//!
//! A batch loss is the mean over its examples.

use std::ops::AddAssign;

use rayon::prelude::*;

use crate::data::{AttributeEmbeddings, LabeledExample, PenaltyVector, SemanticTensor};
use crate::error::{Error, Result};
use crate::linalg::{axpy, cosine_unchecked, dot, norm, NORM_FLOOR};
use crate::model::{forward, ClassProbabilities, ForwardTrace, ParamGrads, PpnParams};

/// Loss value split into its terms (unweighted) plus the weighted total.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub total: f64,
    pub ce: f64,
    pub attr: f64,
    pub vis: f64,
}

impl AddAssign for LossBreakdown {
    fn add_assign(&mut self, o: Self) {
        self.total += o.total;
        self.ce += o.ce;
        self.attr += o.attr;
        self.vis += o.vis;
    }
}

impl LossBreakdown {
    pub fn scaled(self, s: f64) -> Self {
        Self {
            total: self.total * s,
            ce: self.ce * s,
            attr: self.attr * s,
            vis: self.vis * s,
        }
    }

    pub fn is_finite(&self) -> bool {
        [self.total, self.ce, self.attr, self.vis].iter().all(|x| x.is_finite())
    }
}

/// `−ln probs[label]`. The label must be active (nonzero probability).
pub fn loss_ce(probs: &ClassProbabilities, label: usize) -> Result<f64> {
    let p = *probs
        .as_slice()
        .get(label)
        .ok_or_else(|| Error::Contract(format!("label {label} out of range")))?;
    if p <= 0.0 {
        return Err(Error::Contract(format!("label {label} is not an active class")));
    }
    Ok(-p.ln())
}

/// `(1/R) Σ_r Σ_a h[a]·attn_r[a]²` over the valid regions' attentions.
pub fn loss_attr(penalty: &PenaltyVector, attns: &[Vec<f64>]) -> Result<f64> {
    if attns.is_empty() {
        return Err(Error::Contract("loss_attr needs at least one valid region".into()));
    }
    let h = penalty.as_slice();
    let mut total = 0.0;
    for attn in attns {
        if attn.len() != h.len() {
            return Err(Error::shape("loss_attr", h.len(), attn.len()));
        }
        total += attn.iter().zip(h).map(|(a, h)| h * a * a).sum::<f64>();
    }
    Ok(total / attns.len() as f64)
}

/// `Σ_a h[a]·φ_k[a,:]`: the penalty projected into the embedding space.
pub fn penalty_embedding(penalty: &PenaltyVector, emb: &AttributeEmbeddings) -> Result<Vec<f64>> {
    let m = emb.vectors();
    if penalty.len() != m.rows() {
        return Err(Error::shape("penalty_embedding", m.rows(), penalty.len()));
    }
    let mut v = vec![0.0; m.cols()];
    for (a, &h) in penalty.as_slice().iter().enumerate() {
        axpy(h, m.row(a), &mut v);
    }
    Ok(v)
}

/// Aggregated visual-semantic embedding `u = Σ_r b_r · Wᵀθ_r`.
fn aggregated_embedding(trace: &ForwardTrace, k: usize) -> Vec<f64> {
    let mut u = vec![0.0; k];
    for (rt, &b) in trace.regions.iter().zip(&trace.region_weight) {
        axpy(b, &rt.embed, &mut u);
    }
    u
}

/// `max(0, cos(u, v))` for one example.
pub fn loss_vis(
    params: &PpnParams,
    example: &LabeledExample,
    tensor: &SemanticTensor,
    penalty: &PenaltyVector,
    emb: &AttributeEmbeddings,
) -> Result<f64> {
    let trace = forward(params, example, tensor)?;
    let v = penalty_embedding(penalty, emb)?;
    Ok(cosine_unchecked(&aggregated_embedding(&trace, params.embed_dim()), &v).max(0.0))
}

/// Everything fixed during training: semantic tensor, penalty, active classes
/// and regularizer weights.
#[derive(Debug, Clone)]
pub struct Objective<'a> {
    tensor: &'a SemanticTensor,
    penalty: &'a PenaltyVector,
    penalty_embedding: Vec<f64>,
    active: Vec<usize>,
    active_mask: Vec<bool>,
    pub lambda1: f64,
    pub lambda2: f64,
}

impl<'a> Objective<'a> {
    pub fn new(
        tensor: &'a SemanticTensor,
        penalty: &'a PenaltyVector,
        emb: &AttributeEmbeddings,
        active: &[usize],
        lambda1: f64,
        lambda2: f64,
    ) -> Result<Self> {
        if penalty.len() != tensor.attributes() {
            return Err(Error::shape("Objective penalty", tensor.attributes(), penalty.len()));
        }
        if emb.embed_dim() != tensor.embed_dim() {
            return Err(Error::shape("Objective embeddings", tensor.embed_dim(), emb.embed_dim()));
        }
        if active.is_empty() {
            return Err(Error::Contract("active class set is empty".into()));
        }
        let mut active_mask = vec![false; tensor.classes()];
        for &c in active {
            if c >= tensor.classes() {
                return Err(Error::Contract(format!("active class {c} out of range")));
            }
            active_mask[c] = true;
        }
        if !(lambda1 >= 0.0 && lambda2 >= 0.0 && lambda1.is_finite() && lambda2.is_finite()) {
            return Err(Error::Contract("regularizer weights must be finite and >= 0".into()));
        }
        Ok(Self {
            tensor,
            penalty,
            penalty_embedding: penalty_embedding(penalty, emb)?,
            active: active.to_vec(),
            active_mask,
            lambda1,
            lambda2,
        })
    }

    pub fn tensor(&self) -> &SemanticTensor {
        self.tensor
    }

    pub fn active(&self) -> &[usize] {
        &self.active
    }

    fn check_label(&self, ex: &LabeledExample) -> Result<()> {
        if self.active_mask.get(ex.label).copied().unwrap_or(false) {
            Ok(())
        } else {
            Err(Error::Contract(format!("label {} is not an active class", ex.label)))
        }
    }

    /// Cosine between the aggregated embedding and the penalty embedding.
    pub fn vis_cosine(&self, params: &PpnParams, ex: &LabeledExample) -> Result<f64> {
        let trace = forward(params, ex, self.tensor)?;
        Ok(cosine_unchecked(
            &aggregated_embedding(&trace, params.embed_dim()),
            &self.penalty_embedding,
        ))
    }

    fn terms(&self, params: &PpnParams, trace: &ForwardTrace, label: usize) -> (LossBreakdown, Vec<f64>, Vec<f64>) {
        // Cross-entropy from logits restricted to the active set.
        let max = self
            .active
            .iter()
            .map(|&c| trace.psi[c])
            .fold(f64::NEG_INFINITY, f64::max);
        let mut probs = vec![0.0; trace.psi.len()];
        let mut z = 0.0;
        for &c in &self.active {
            let e = (trace.psi[c] - max).exp();
            probs[c] = e;
            z += e;
        }
        probs.iter_mut().for_each(|p| *p /= z);
        let ce = max + z.ln() - trace.psi[label];

        let h = self.penalty.as_slice();
        let attr = trace
            .regions
            .iter()
            .map(|rt| rt.attn.iter().zip(h).map(|(a, h)| h * a * a).sum::<f64>())
            .sum::<f64>()
            / trace.regions.len() as f64;

        let u = aggregated_embedding(trace, params.embed_dim());
        let vis = cosine_unchecked(&u, &self.penalty_embedding).max(0.0);
        let total = ce + self.lambda1 * attr + self.lambda2 * vis;
        (LossBreakdown { total, ce, attr, vis }, probs, u)
    }

    pub fn example_loss(&self, params: &PpnParams, ex: &LabeledExample) -> Result<LossBreakdown> {
        self.check_label(ex)?;
        let trace = forward(params, ex, self.tensor)?;
        Ok(self.terms(params, &trace, ex.label).0)
    }

    /// Loss and analytic gradient of one example.
    pub fn example_grad(&self, params: &PpnParams, ex: &LabeledExample) -> Result<(LossBreakdown, ParamGrads)> {
        self.check_label(ex)?;
        let trace = forward(params, ex, self.tensor)?;
        let (loss, probs, u) = self.terms(params, &trace, ex.label);
        let (a_n, k_n) = (self.tensor.attributes(), self.tensor.embed_dim());
        let h = self.penalty.as_slice();
        let n_regions = trace.regions.len();

        // dL/dψ over the active set.
        let mut g_psi: Vec<(usize, f64)> = self.active.iter().map(|&c| (c, probs[c])).collect();
        for (c, g) in g_psi.iter_mut() {
            if *c == ex.label {
                *g -= 1.0;
            }
        }

        // dL_vis/du, zero where the hinge is inactive.
        let g_u = {
            let v = &self.penalty_embedding;
            let (nu, nv) = (norm(&u), norm(v));
            let cos = loss.vis;
            if self.lambda2 != 0.0 && cos > 0.0 && nu >= NORM_FLOOR && nv >= NORM_FLOOR {
                let mut g: Vec<f64> = v.iter().map(|x| x / (nu * nv)).collect();
                axpy(-cos / (nu * nu), &u, &mut g);
                g.iter_mut().for_each(|x| *x *= self.lambda2);
                Some(g)
            } else {
                None
            }
        };

        let mut grads = params.zeros_like();
        let mut g_b = vec![0.0; n_regions];
        let attr_scale = 2.0 * self.lambda1 / n_regions as f64;
        let mut g_attn = vec![0.0; a_n];
        let mut g_embed = vec![0.0; k_n];
        for (i, rt) in trace.regions.iter().enumerate() {
            let b = trace.region_weight[i];
            let theta = ex.regions.row(rt.index);
            g_attn.iter_mut().for_each(|x| *x = 0.0);
            g_embed.iter_mut().for_each(|x| *x = 0.0);

            for &(c, g) in &g_psi {
                g_b[i] += g * rt.class_score[c];
                axpy(b * g, &rt.affinity[c * a_n..(c + 1) * a_n], &mut g_attn);
                let block = self.tensor.class_block(c);
                for (a, &w) in rt.attn.iter().enumerate() {
                    axpy(b * g * w, &block[a * k_n..(a + 1) * k_n], &mut g_embed);
                }
            }
            for a in 0..a_n {
                g_attn[a] += attr_scale * h[a] * rt.attn[a];
            }
            if let Some(gu) = &g_u {
                axpy(b, gu, &mut g_embed);
                g_b[i] += dot(gu, &rt.embed);
            }

            // Back through the attribute softmax and its affine map.
            let inner = dot(&rt.attn, &g_attn);
            for a in 0..a_n {
                let gz = rt.attn[a] * (g_attn[a] - inner);
                grads.alpha_bias[a] += gz;
                axpy(gz, theta, grads.alpha_weight.row_mut(a));
            }
            // e_r = Wᵀθ_r
            for (d, &x) in theta.iter().enumerate() {
                axpy(x, &g_embed, grads.w.row_mut(d));
            }
        }

        // Back through the region softmax.
        let inner = dot(&trace.region_weight, &g_b);
        for (i, rt) in trace.regions.iter().enumerate() {
            let gs = trace.region_weight[i] * (g_b[i] - inner);
            axpy(gs, ex.regions.row(rt.index), &mut grads.beta_weight);
            grads.beta_bias += gs;
        }
        Ok((loss, grads))
    }

    /// Mean loss over `batch`.
    pub fn total_loss(&self, params: &PpnParams, batch: &[&LabeledExample]) -> Result<LossBreakdown> {
        if batch.is_empty() {
            return Err(Error::Contract("empty batch".into()));
        }
        let per: Vec<LossBreakdown> = batch
            .par_iter()
            .map(|ex| self.example_loss(params, ex))
            .collect::<Result<_>>()?;
        let mut sum = LossBreakdown::default();
        for l in per {
            sum += l;
        }
        Ok(sum.scaled(1.0 / batch.len() as f64))
    }

    /// Mean loss and its gradient over `batch`. Per-example work runs in
    /// parallel; accumulation is sequential in batch order, so the result does
    /// not depend on the thread count.
    pub fn gradients(&self, params: &PpnParams, batch: &[&LabeledExample]) -> Result<(LossBreakdown, ParamGrads)> {
        if batch.is_empty() {
            return Err(Error::Contract("empty batch".into()));
        }
        let per: Vec<(LossBreakdown, ParamGrads)> = batch
            .par_iter()
            .map(|ex| self.example_grad(params, ex))
            .collect::<Result<_>>()?;
        let mut loss = LossBreakdown::default();
        let mut grads = params.zeros_like();
        for (l, g) in &per {
            loss += *l;
            grads.add_scaled(1.0, g);
        }
        let inv = 1.0 / batch.len() as f64;
        grads.scale(inv);
        Ok((loss.scaled(inv), grads))
    }
}

/// Mean batch loss with per-term breakdown.
#[allow(clippy::too_many_arguments)]
pub fn total_loss(
    batch: &[&LabeledExample],
    params: &PpnParams,
    tensor: &SemanticTensor,
    penalty: &PenaltyVector,
    emb: &AttributeEmbeddings,
    active: &[usize],
    lambda1: f64,
    lambda2: f64,
) -> Result<LossBreakdown> {
    Objective::new(tensor, penalty, emb, active, lambda1, lambda2)?.total_loss(params, batch)
}

/// Analytic gradient of [`total_loss`].
#[allow(clippy::too_many_arguments)]
pub fn gradients(
    batch: &[&LabeledExample],
    params: &PpnParams,
    tensor: &SemanticTensor,
    penalty: &PenaltyVector,
    emb: &AttributeEmbeddings,
    active: &[usize],
    lambda1: f64,
    lambda2: f64,
) -> Result<ParamGrads> {
    Objective::new(tensor, penalty, emb, active, lambda1, lambda2)?
        .gradients(params, batch)
        .map(|(_, g)| g)
}
