//! Part prototype network forward pass and the global bilinear baseline.
//!
//! For an example with valid regions `θ_r`:
//!
//! * attribute attention `a_r = softmax(α_W θ_r + α_b)` over the `A` attributes,
//! * regional embedding `e_r = Wᵀ θ_r` in the `K`-dim semantic space,
//! * region-class semantics `f_c^r = Σ_a a_r[a] · T[c, a, :]`,
//! * region attention `b = softmax_r(β_w · θ_r + β_b)` over valid regions,
//! * compatibility `ψ_c = Σ_r b_r · (e_r · f_c^r)`.

use rand::Rng;

use crate::data::{AttributeEmbeddings, AttributeMatrix, Dims, LabeledExample, SemanticTensor};
use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, softmax_in_place, Matrix, SeededRng};

/// Learned parameters: the attribute-attention map (α), the regional
/// embedding (W) and the region-attention map (β).
#[derive(Debug, Clone, PartialEq)]
pub struct PpnParams {
    /// `A×D`
    pub alpha_weight: Matrix,
    /// `A`
    pub alpha_bias: Vec<f64>,
    /// `D×K`
    pub w: Matrix,
    /// `D`
    pub beta_weight: Vec<f64>,
    pub beta_bias: f64,
}

/// Gradients share the parameter layout.
pub type ParamGrads = PpnParams;

impl PpnParams {
    pub const TENSOR_NAMES: [&'static str; 5] =
        ["alpha_weight", "alpha_bias", "w", "beta_weight", "beta_bias"];

    pub fn zeros(attributes: usize, feature_dim: usize, embed_dim: usize) -> Self {
        Self {
            alpha_weight: Matrix::zeros(attributes, feature_dim),
            alpha_bias: vec![0.0; attributes],
            w: Matrix::zeros(feature_dim, embed_dim),
            beta_weight: vec![0.0; feature_dim],
            beta_bias: 0.0,
        }
    }

    pub fn zeros_for(dims: &Dims) -> Self {
        Self::zeros(dims.attributes, dims.feature_dim, dims.embed_dim)
    }

    /// Glorot-uniform `alpha_weight` and `w`; everything else zero, so region
    /// attention starts uniform.
    pub fn init(dims: &Dims, rng: &mut SeededRng) -> Self {
        let (a, d, k) = (dims.attributes, dims.feature_dim, dims.embed_dim);
        let mut p = Self::zeros(a, d, k);
        let la = (6.0 / (a + d) as f64).sqrt();
        for x in p.alpha_weight.as_mut_slice() {
            *x = rng.random_range(-la..la);
        }
        let lw = (6.0 / (d + k) as f64).sqrt();
        for x in p.w.as_mut_slice() {
            *x = rng.random_range(-lw..lw);
        }
        p
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.attributes(), self.feature_dim(), self.embed_dim())
    }

    pub fn attributes(&self) -> usize {
        self.alpha_weight.rows()
    }

    pub fn feature_dim(&self) -> usize {
        self.alpha_weight.cols()
    }

    pub fn embed_dim(&self) -> usize {
        self.w.cols()
    }

    /// Flat views in [`Self::TENSOR_NAMES`] order.
    pub fn tensors(&self) -> [&[f64]; 5] {
        [
            self.alpha_weight.as_slice(),
            &self.alpha_bias,
            self.w.as_slice(),
            &self.beta_weight,
            std::slice::from_ref(&self.beta_bias),
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 5] {
        [
            self.alpha_weight.as_mut_slice(),
            &mut self.alpha_bias,
            self.w.as_mut_slice(),
            &mut self.beta_weight,
            std::slice::from_mut(&mut self.beta_bias),
        ]
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|x| x.is_finite()))
    }

    /// `self += s · other`
    pub fn add_scaled(&mut self, s: f64, other: &PpnParams) {
        for (dst, src) in self.tensors_mut().into_iter().zip(other.tensors()) {
            axpy(s, src, dst);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|x| *x *= s);
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|t| t.iter())
            .fold(0.0, |m, x| m.max(x.abs()))
    }

    fn check_shapes(&self) -> Result<()> {
        let (a, d) = (self.attributes(), self.feature_dim());
        if self.alpha_bias.len() != a || self.w.rows() != d || self.beta_weight.len() != d {
            return Err(Error::shape(
                "PpnParams",
                format!("alpha_bias {a}, w rows {d}, beta_weight {d}"),
                format!(
                    "{}, {}, {}",
                    self.alpha_bias.len(),
                    self.w.rows(),
                    self.beta_weight.len()
                ),
            ));
        }
        Ok(())
    }

    /// Checks the parameters against a semantic tensor and feature width.
    pub fn check_compatible(&self, tensor: &SemanticTensor, feature_dim: usize) -> Result<()> {
        self.check_shapes()?;
        if tensor.attributes() != self.attributes() {
            return Err(Error::shape("PpnParams vs tensor (A)", self.attributes(), tensor.attributes()));
        }
        if tensor.embed_dim() != self.embed_dim() {
            return Err(Error::shape("PpnParams vs tensor (K)", self.embed_dim(), tensor.embed_dim()));
        }
        if feature_dim != self.feature_dim() {
            return Err(Error::shape("PpnParams vs features (D)", self.feature_dim(), feature_dim));
        }
        Ok(())
    }
}

/// Per-class compatibility `ψ`.
#[derive(Debug, Clone, PartialEq)]
pub struct CompatibilityScores(pub Vec<f64>);

impl CompatibilityScores {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Class probabilities; inactive classes hold exactly 0.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassProbabilities(pub Vec<f64>);

impl ClassProbabilities {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// `softmax(α_W · region + α_b)`
pub fn attribute_attention(params: &PpnParams, region: &[f64]) -> Result<Vec<f64>> {
    if region.len() != params.feature_dim() {
        return Err(Error::shape("attribute_attention", params.feature_dim(), region.len()));
    }
    if params.alpha_bias.len() != params.attributes() {
        return Err(Error::shape("attribute_attention bias", params.attributes(), params.alpha_bias.len()));
    }
    if !region.iter().all(|x| x.is_finite()) {
        return Err(Error::NonFinite("region features".into()));
    }
    Ok(attention_unchecked(params, region))
}

fn attention_unchecked(params: &PpnParams, region: &[f64]) -> Vec<f64> {
    let mut z: Vec<f64> = (0..params.attributes())
        .map(|a| dot(params.alpha_weight.row(a), region) + params.alpha_bias[a])
        .collect();
    softmax_in_place(&mut z);
    z
}

/// `f_c^r[k] = Σ_a attn[a] · T[c, a, k]`
pub fn region_class_semantic(attn: &[f64], tensor: &SemanticTensor, class: usize) -> Result<Vec<f64>> {
    if class >= tensor.classes() {
        return Err(Error::Contract(format!(
            "class {class} out of range (C={})",
            tensor.classes()
        )));
    }
    if attn.len() != tensor.attributes() {
        return Err(Error::shape("region_class_semantic", tensor.attributes(), attn.len()));
    }
    let mut f = vec![0.0; tensor.embed_dim()];
    for (a, &w) in attn.iter().enumerate() {
        axpy(w, tensor.fiber(class, a), &mut f);
    }
    Ok(f)
}

/// Softmax of `β_w · θ_r + β_b` over valid regions; masked regions get 0.
pub fn region_attention(params: &PpnParams, regions: &Matrix, mask: &[bool]) -> Result<Vec<f64>> {
    if regions.cols() != params.feature_dim() {
        return Err(Error::shape("region_attention", params.feature_dim(), regions.cols()));
    }
    if mask.len() != regions.rows() {
        return Err(Error::shape("region_attention mask", regions.rows(), mask.len()));
    }
    let valid: Vec<usize> = (0..mask.len()).filter(|&r| mask[r]).collect();
    if valid.is_empty() {
        return Err(Error::Contract("all regions are masked".into()));
    }
    let weights = region_weights(params, regions, &valid);
    let mut out = vec![0.0; regions.rows()];
    for (&r, w) in valid.iter().zip(weights) {
        out[r] = w;
    }
    Ok(out)
}

fn region_weights(params: &PpnParams, regions: &Matrix, valid: &[usize]) -> Vec<f64> {
    let mut s: Vec<f64> = valid
        .iter()
        .map(|&r| dot(&params.beta_weight, regions.row(r)) + params.beta_bias)
        .collect();
    softmax_in_place(&mut s);
    s
}

/// Intermediate values of one region, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct RegionTrace {
    /// Row index in the example.
    pub index: usize,
    /// Attribute attention, length `A`.
    pub attn: Vec<f64>,
    /// `Wᵀ θ_r`, length `K`.
    pub embed: Vec<f64>,
    /// `e_r · T[c, a, :]`, `C×A` row-major.
    pub affinity: Vec<f64>,
    /// `e_r · f_c^r`, length `C`.
    pub class_score: Vec<f64>,
}

/// Full forward pass of one example.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub regions: Vec<RegionTrace>,
    /// Region attention over the valid regions, aligned with `regions`.
    pub region_weight: Vec<f64>,
    pub psi: Vec<f64>,
}

pub fn forward(params: &PpnParams, example: &LabeledExample, tensor: &SemanticTensor) -> Result<ForwardTrace> {
    params.check_compatible(tensor, example.regions.cols())?;
    if example.mask.len() != example.regions.rows() {
        return Err(Error::shape("forward mask", example.regions.rows(), example.mask.len()));
    }
    let valid: Vec<usize> = (0..example.mask.len()).filter(|&r| example.mask[r]).collect();
    if valid.is_empty() {
        return Err(Error::Contract("all regions are masked".into()));
    }
    let (c_n, a_n, k_n) = (tensor.classes(), tensor.attributes(), tensor.embed_dim());
    let region_weight = region_weights(params, &example.regions, &valid);
    let mut psi = vec![0.0; c_n];
    let mut regions = Vec::with_capacity(valid.len());
    for (&r, &b) in valid.iter().zip(&region_weight) {
        let theta = example.regions.row(r);
        let attn = attention_unchecked(params, theta);
        let mut embed = vec![0.0; k_n];
        for (d, &x) in theta.iter().enumerate() {
            axpy(x, params.w.row(d), &mut embed);
        }
        let mut affinity = vec![0.0; c_n * a_n];
        let mut class_score = vec![0.0; c_n];
        for c in 0..c_n {
            let block = tensor.class_block(c);
            let row = &mut affinity[c * a_n..(c + 1) * a_n];
            for a in 0..a_n {
                row[a] = dot(&embed, &block[a * k_n..(a + 1) * k_n]);
            }
            class_score[c] = dot(row, &attn);
        }
        axpy(b, &class_score, &mut psi);
        regions.push(RegionTrace {
            index: r,
            attn,
            embed,
            affinity,
            class_score,
        });
    }
    if !psi.iter().all(|x| x.is_finite()) {
        return Err(Error::NonFinite("compatibility scores".into()));
    }
    Ok(ForwardTrace {
        regions,
        region_weight,
        psi,
    })
}

/// `ψ_c = Σ_r b_r · θ_rᵀ W f_c^r` over valid regions.
pub fn compatibility(
    params: &PpnParams,
    example: &LabeledExample,
    tensor: &SemanticTensor,
) -> Result<CompatibilityScores> {
    forward(params, example, tensor).map(|t| CompatibilityScores(t.psi))
}

/// Softmax over `active` classes; every other class gets probability 0.
pub fn class_probabilities(scores: &CompatibilityScores, active: &[usize]) -> Result<ClassProbabilities> {
    let psi = scores.as_slice();
    if active.is_empty() {
        return Err(Error::Contract("active class set is empty".into()));
    }
    let mut seen = vec![false; psi.len()];
    for &c in active {
        if c >= psi.len() {
            return Err(Error::Contract(format!("active class {c} out of range")));
        }
        if std::mem::replace(&mut seen[c], true) {
            return Err(Error::Contract(format!("active class {c} listed twice")));
        }
    }
    let mut logits: Vec<f64> = active.iter().map(|&c| psi[c]).collect();
    if !logits.iter().all(|x| x.is_finite()) {
        return Err(Error::NonFinite("compatibility scores".into()));
    }
    softmax_in_place(&mut logits);
    let mut p = vec![0.0; psi.len()];
    for (&c, q) in active.iter().zip(logits) {
        p[c] = q;
    }
    Ok(ClassProbabilities(p))
}

/// Class embeddings for the baseline: `Σ_a φ^a[c,a] · φ_k[a,:]`, `C×K`.
pub fn baseline_class_embeddings(attrs: &AttributeMatrix, emb: &AttributeEmbeddings) -> Result<Matrix> {
    attrs.values().matmul(emb.vectors())
}

/// Global bilinear compatibility `ψ_c = gᵀ W s_c` with one class embedding per
/// row of `class_emb`.
pub fn bilinear_baseline_score(w: &Matrix, global_feat: &[f64], class_emb: &Matrix) -> Result<CompatibilityScores> {
    if w.cols() != class_emb.cols() {
        return Err(Error::shape("bilinear_baseline_score (K)", w.cols(), class_emb.cols()));
    }
    let projected = w.tr_matvec(global_feat)?;
    class_emb.matvec(&projected).map(CompatibilityScores)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{build_semantic_tensor, AttributeEmbeddings, AttributeMatrix};
    use crate::linalg::seeded_rng;

    fn uniform(rng: &mut SeededRng, r: usize, c: usize) -> Matrix {
        Matrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
    }

    fn random_params(rng: &mut SeededRng, a: usize, d: usize, k: usize) -> PpnParams {
        PpnParams {
            alpha_weight: uniform(rng, a, d),
            alpha_bias: (0..a).map(|_| rng.random_range(-1.0..1.0)).collect(),
            w: uniform(rng, d, k),
            beta_weight: (0..d).map(|_| rng.random_range(-1.0..1.0)).collect(),
            beta_bias: rng.random_range(-1.0..1.0),
        }
    }

    fn random_tensor(rng: &mut SeededRng, c: usize, a: usize, k: usize) -> SemanticTensor {
        let attrs = AttributeMatrix::new(Matrix::from_fn(c, a, |_, _| rng.random_range(0.0..1.0))).unwrap();
        let emb = AttributeEmbeddings::normalized(uniform(rng, a, k)).unwrap();
        build_semantic_tensor(&attrs, &emb).unwrap()
    }

    #[test]
    fn zero_alpha_gives_uniform_attention() {
        let p = PpnParams::zeros(4, 3, 2);
        let attn = attribute_attention(&p, &[1.0, -2.0, 0.5]).unwrap();
        assert!(attn.iter().all(|&x| (x - 0.25).abs() < 1e-15));
    }

    #[test]
    fn large_bias_saturates_attention() {
        let mut p = PpnParams::zeros(3, 2, 2);
        p.alpha_bias[0] = 800.0;
        let attn = attribute_attention(&p, &[0.3, 0.4]).unwrap();
        assert_eq!(attn[0], 1.0);
        assert!(attn[1] < 1e-300);
    }

    #[test]
    fn attention_matches_direct_affine_softmax() {
        let mut rng = seeded_rng(4);
        let p = random_params(&mut rng, 5, 7, 3);
        let x: Vec<f64> = (0..7).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut logits = Vec::new();
        for a in 0..5 {
            let mut z = p.alpha_bias[a];
            for d in 0..7 {
                z += p.alpha_weight.get(a, d) * x[d];
            }
            logits.push(z);
        }
        let total: f64 = logits.iter().map(|z| z.exp()).sum();
        let attn = attribute_attention(&p, &x).unwrap();
        for (a, z) in logits.iter().enumerate() {
            assert!((attn[a] - z.exp() / total).abs() <= 1e-12);
        }
        assert!(attribute_attention(&p, &x[..6]).is_err());
    }

    #[test]
    fn region_class_semantic_cases() {
        let mut rng = seeded_rng(8);
        let t = random_tensor(&mut rng, 3, 4, 5);
        let mut onehot = vec![0.0; 4];
        onehot[2] = 1.0;
        assert_eq!(region_class_semantic(&onehot, &t, 1).unwrap(), t.fiber(1, 2));
        assert!(region_class_semantic(&onehot, &t, 3).is_err());

        let attn = vec![0.1, 0.2, 0.3, 0.4];
        for c in 0..3 {
            let f = region_class_semantic(&attn, &t, c).unwrap();
            for k in 0..5 {
                let mut expect = 0.0;
                for a in 0..4 {
                    expect += attn[a] * t.get(c, a, k);
                }
                assert!((f[k] - expect).abs() <= 1e-12);
            }
        }
        let zero = build_semantic_tensor(
            &AttributeMatrix::new(Matrix::zeros(2, 4)).unwrap(),
            &AttributeEmbeddings::normalized(uniform(&mut rng, 4, 5)).unwrap(),
        )
        .unwrap();
        assert!(region_class_semantic(&attn, &zero, 0).unwrap().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn region_attention_cases() {
        let mut rng = seeded_rng(12);
        let regions = uniform(&mut rng, 4, 3);
        let p = PpnParams::zeros(2, 3, 2);
        let b = region_attention(&p, &regions, &[true, false, true, true]).unwrap();
        assert_eq!(b[1], 0.0);
        for r in [0, 2, 3] {
            assert!((b[r] - 1.0 / 3.0).abs() < 1e-15);
        }
        let single = region_attention(&p, &regions, &[false, false, true, false]).unwrap();
        assert_eq!(single, vec![0.0, 0.0, 1.0, 0.0]);
        assert!(region_attention(&p, &regions, &[false; 4]).is_err());

        let p = random_params(&mut rng, 2, 3, 2);
        let mask = [true, true, false, true];
        let b = region_attention(&p, &regions, &mask).unwrap();
        let s: Vec<f64> = (0..4).map(|r| dot(&p.beta_weight, regions.row(r)) + p.beta_bias).collect();
        let total: f64 = (0..4).filter(|&r| mask[r]).map(|r| s[r].exp()).sum();
        for r in 0..4 {
            let expect = if mask[r] { s[r].exp() / total } else { 0.0 };
            assert!((b[r] - expect).abs() <= 1e-12);
        }
    }

    #[test]
    fn zero_embedding_gives_zero_scores() {
        let mut rng = seeded_rng(13);
        let t = random_tensor(&mut rng, 3, 4, 5);
        let mut p = random_params(&mut rng, 4, 6, 5);
        p.w = Matrix::zeros(6, 5);
        let ex = LabeledExample::dense(uniform(&mut rng, 2, 6), 0).unwrap();
        assert!(compatibility(&p, &ex, &t).unwrap().as_slice().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn duplicating_regions_leaves_scores_unchanged() {
        let mut rng = seeded_rng(14);
        let t = random_tensor(&mut rng, 3, 4, 5);
        let p = random_params(&mut rng, 4, 6, 5);
        let base = uniform(&mut rng, 3, 6);
        let mut rows: Vec<Vec<f64>> = (0..3).map(|r| base.row(r).to_vec()).collect();
        rows.extend(rows.clone());
        let ex = LabeledExample::dense(base, 0).unwrap();
        let doubled = LabeledExample::dense(Matrix::from_rows(&rows).unwrap(), 0).unwrap();
        let a = compatibility(&p, &ex, &t).unwrap();
        let b = compatibility(&p, &doubled, &t).unwrap();
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
        }
    }

    #[test]
    fn masked_rows_are_ignored() {
        let mut rng = seeded_rng(15);
        let t = random_tensor(&mut rng, 3, 4, 5);
        let p = random_params(&mut rng, 4, 6, 5);
        let mut m = uniform(&mut rng, 3, 6);
        let ex = LabeledExample::new(m.clone(), vec![true, false, true], 0).unwrap();
        m.row_mut(1).iter_mut().for_each(|x| *x = 1e6);
        let ex2 = LabeledExample::new(m, vec![true, false, true], 0).unwrap();
        assert_eq!(compatibility(&p, &ex, &t).unwrap(), compatibility(&p, &ex2, &t).unwrap());
    }

    #[test]
    fn class_probability_cases() {
        let s = CompatibilityScores(vec![2.0, 2.0, 2.0, 9.0]);
        let p = class_probabilities(&s, &[0, 1, 2]).unwrap();
        assert_eq!(p.as_slice()[3], 0.0);
        for c in 0..3 {
            assert!((p.as_slice()[c] - 1.0 / 3.0).abs() < 1e-15);
        }
        assert_eq!(class_probabilities(&s, &[3]).unwrap().as_slice(), &[0.0, 0.0, 0.0, 1.0]);
        assert!(class_probabilities(&s, &[]).is_err());
        assert!(class_probabilities(&s, &[4]).is_err());
        assert!(class_probabilities(&s, &[1, 1]).is_err());

        let s = CompatibilityScores(vec![1.0, 2.0, 3.0]);
        let p = class_probabilities(&s, &[0, 1, 2]).unwrap();
        let total: f64 = [1.0f64, 2.0, 3.0].iter().map(|x| x.exp()).sum();
        for c in 0..3 {
            assert!((p.as_slice()[c] - ((c + 1) as f64).exp() / total).abs() <= 1e-12);
        }
    }

    #[test]
    fn baseline_cases() {
        // Identity-padded W with orthonormal class embeddings: ψ_c = g · class direction.
        let w = Matrix::from_fn(4, 2, |i, j| if i == j { 1.0 } else { 0.0 });
        let emb = Matrix::identity(2);
        let g = [0.3, -0.7, 5.0, 5.0];
        let s = bilinear_baseline_score(&w, &g, &emb).unwrap();
        assert_eq!(s.as_slice(), &[0.3, -0.7]);
        let z = bilinear_baseline_score(&w, &[0.0; 4], &emb).unwrap();
        assert_eq!(z.as_slice(), &[0.0, 0.0]);
        assert!(bilinear_baseline_score(&w, &g, &Matrix::identity(3)).is_err());

        let mut rng = seeded_rng(16);
        let w = uniform(&mut rng, 5, 3);
        let ce = uniform(&mut rng, 4, 3);
        let g: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
        let s = bilinear_baseline_score(&w, &g, &ce).unwrap();
        for c in 0..4 {
            let mut expect = 0.0;
            for d in 0..5 {
                for k in 0..3 {
                    expect += g[d] * w.get(d, k) * ce.get(c, k);
                }
            }
            assert!((s.as_slice()[c] - expect).abs() <= 1e-12);
        }
    }

    #[test]
    fn baseline_class_embeddings_project_priors() {
        let attrs = AttributeMatrix::new(Matrix::from_rows(&[vec![1.0, 0.5]]).unwrap()).unwrap();
        let emb = AttributeEmbeddings::new(Matrix::identity(2)).unwrap();
        let ce = baseline_class_embeddings(&attrs, &emb).unwrap();
        assert_eq!(ce.as_slice(), &[1.0, 0.5]);
    }
}
