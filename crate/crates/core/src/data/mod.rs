//! Dataset bundles: region features, class-attribute priors, attribute-name
//! embeddings and the seen/unseen split, plus the derived semantic tensor and
//! unseen-attribute penalty.

mod bundle_io;
pub mod container;
pub mod synth;

use std::collections::BTreeSet;
use std::fmt;

use crate::error::{Error, Result};
use crate::linalg::{l2_normalize, Matrix, NORM_FLOOR};

pub use bundle_io::{load_bundle, save_bundle, BUNDLE_MAGIC, BUNDLE_VERSION};
pub use synth::{generate_synthetic, generate_synthetic_with_truth, SynthConfig, SyntheticTruth};

/// Sizes shared by every member of a bundle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub classes: usize,
    pub attributes: usize,
    pub embed_dim: usize,
    pub regions: usize,
    pub feature_dim: usize,
}

impl fmt::Display for Dims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "C={} A={} K={} R={} D={}",
            self.classes, self.attributes, self.embed_dim, self.regions, self.feature_dim
        )
    }
}

/// Class ids and example-index lists for one seen/unseen partition.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SplitSpec {
    pub seen_classes: Vec<usize>,
    pub unseen_classes: Vec<usize>,
    pub train: Vec<usize>,
    pub test_seen: Vec<usize>,
    pub test_unseen: Vec<usize>,
    pub val: Vec<usize>,
}

impl SplitSpec {
    /// Checks disjointness and label membership against `labels`.
    pub fn validate(&self, labels: &[usize], classes: usize) -> Result<()> {
        let seen: BTreeSet<usize> = self.seen_classes.iter().copied().collect();
        let unseen: BTreeSet<usize> = self.unseen_classes.iter().copied().collect();
        if seen.len() != self.seen_classes.len() || unseen.len() != self.unseen_classes.len() {
            return Err(Error::Split("duplicate class id in seen/unseen list".into()));
        }
        if seen.is_empty() {
            return Err(Error::Split("no seen classes".into()));
        }
        if unseen.is_empty() {
            return Err(Error::Split("no unseen classes".into()));
        }
        if let Some(c) = seen.intersection(&unseen).next() {
            return Err(Error::Split(format!("class {c} is both seen and unseen")));
        }
        if let Some(&c) = seen.iter().chain(&unseen).find(|&&c| c >= classes) {
            return Err(Error::Split(format!("class id {c} out of range (C={classes})")));
        }

        let lists: [(&str, &[usize]); 4] = [
            ("train", &self.train),
            ("test_seen", &self.test_seen),
            ("test_unseen", &self.test_unseen),
            ("val", &self.val),
        ];
        let mut used = BTreeSet::new();
        for (name, list) in lists {
            for &i in list {
                if i >= labels.len() {
                    return Err(Error::Split(format!("{name} index {i} out of range")));
                }
                if !used.insert(i) {
                    return Err(Error::Split(format!("example {i} appears in more than one split list")));
                }
            }
        }
        let check = |name: &str, list: &[usize], allowed: &BTreeSet<usize>| -> Result<()> {
            match list.iter().find(|&&i| !allowed.contains(&labels[i])) {
                Some(&i) => Err(Error::Split(format!(
                    "{name} example {i} has label {} outside its class set",
                    labels[i]
                ))),
                None => Ok(()),
            }
        };
        check("train", &self.train, &seen)?;
        check("test_seen", &self.test_seen, &seen)?;
        check("test_unseen", &self.test_unseen, &unseen)?;
        Ok(())
    }

    pub fn is_seen(&self, class: usize) -> bool {
        self.seen_classes.contains(&class)
    }

    /// Boolean seen-mask over `classes` class ids.
    pub fn seen_mask(&self, classes: usize) -> Vec<bool> {
        let mut mask = vec![false; classes];
        for &c in &self.seen_classes {
            mask[c] = true;
        }
        mask
    }
}

/// One image: `R×D` region features with a validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledExample {
    pub regions: Matrix,
    pub mask: Vec<bool>,
    pub label: usize,
}

impl LabeledExample {
    pub fn new(regions: Matrix, mask: Vec<bool>, label: usize) -> Result<Self> {
        if mask.len() != regions.rows() {
            return Err(Error::shape("LabeledExample", regions.rows(), mask.len()));
        }
        if !mask.iter().any(|&m| m) {
            return Err(Error::Contract("example has no valid region".into()));
        }
        regions.ensure_finite("region features")?;
        Ok(Self { regions, mask, label })
    }

    /// Example with every region valid.
    pub fn dense(regions: Matrix, label: usize) -> Result<Self> {
        let mask = vec![true; regions.rows()];
        Self::new(regions, mask, label)
    }

    pub fn valid_regions(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.mask
            .iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .map(move |(r, _)| self.regions.row(r))
    }

    pub fn valid_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Mask-aware mean of the valid region rows.
    pub fn mean_pool(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.regions.cols()];
        let n = self.valid_count() as f64;
        for row in self.valid_regions() {
            for (o, x) in out.iter_mut().zip(row) {
                *o += x;
            }
        }
        out.iter_mut().for_each(|o| *o /= n);
        out
    }
}

/// Class-attribute priors (`C×A`), every entry in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributeMatrix(Matrix);

impl AttributeMatrix {
    /// Wraps priors that are already in `[0, 1]`.
    pub fn new(values: Matrix) -> Result<Self> {
        values.ensure_finite("attribute priors")?;
        if values.as_slice().iter().any(|&x| !(0.0..=1.0).contains(&x)) {
            return Err(Error::Contract(
                "attribute priors must lie in [0, 1]; use AttributeMatrix::rescaled".into(),
            ));
        }
        Ok(Self(values))
    }

    /// Min-max rescales every attribute column to `[0, 1]`.
    ///
    /// Constant columns are clamped into `[0, 1]` instead.
    pub fn rescaled(values: Matrix) -> Result<Self> {
        values.ensure_finite("attribute priors")?;
        let (c, a) = values.shape();
        let mut out = values;
        for j in 0..a {
            let (lo, hi) = (0..c).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), i| {
                let x = out.get(i, j);
                (lo.min(x), hi.max(x))
            });
            for i in 0..c {
                let x = out.get(i, j);
                let y = if hi > lo { (x - lo) / (hi - lo) } else { x.clamp(0.0, 1.0) };
                out.set(i, j, y);
            }
        }
        Ok(Self(out))
    }

    pub fn values(&self) -> &Matrix {
        &self.0
    }

    pub fn classes(&self) -> usize {
        self.0.rows()
    }

    pub fn attributes(&self) -> usize {
        self.0.cols()
    }
}

/// Attribute-name embeddings (`A×K`), rows unit-norm or zero.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributeEmbeddings(Matrix);

impl AttributeEmbeddings {
    /// L2-normalizes every row.
    pub fn normalized(vectors: Matrix) -> Result<Self> {
        vectors.ensure_finite("attribute embeddings")?;
        let mut out = vectors;
        for i in 0..out.rows() {
            let row = l2_normalize(out.row(i));
            out.row_mut(i).copy_from_slice(&row);
        }
        Ok(Self(out))
    }

    /// Wraps rows that are already unit-norm (or zero).
    pub fn new(vectors: Matrix) -> Result<Self> {
        vectors.ensure_finite("attribute embeddings")?;
        for i in 0..vectors.rows() {
            let n = crate::linalg::norm(vectors.row(i));
            if n >= NORM_FLOOR && (n - 1.0).abs() > 1e-9 {
                return Err(Error::Contract(format!("embedding row {i} has norm {n}, expected 1")));
            }
        }
        Ok(Self(vectors))
    }

    pub fn vectors(&self) -> &Matrix {
        &self.0
    }

    pub fn embed_dim(&self) -> usize {
        self.0.cols()
    }
}

/// Where attribute-dimension L2 normalization is applied when building the
/// semantic tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AttributeNorm {
    /// Normalize each length-A fiber `tensor[c, :, k]`.
    #[default]
    TensorFibers,
    /// Normalize each prior row `φ^a[c, :]` before the product.
    PriorRows,
    /// Plain product, no normalization.
    None,
}

impl AttributeNorm {
    pub fn as_str(self) -> &'static str {
        match self {
            AttributeNorm::TensorFibers => "tensor_fibers",
            AttributeNorm::PriorRows => "prior_rows",
            AttributeNorm::None => "none",
        }
    }
}

impl std::str::FromStr for AttributeNorm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tensor_fibers" => Ok(AttributeNorm::TensorFibers),
            "prior_rows" => Ok(AttributeNorm::PriorRows),
            "none" => Ok(AttributeNorm::None),
            other => Err(Error::Contract(format!("unknown attribute normalization `{other}`"))),
        }
    }
}

/// Dense `C×A×K` tensor, index `[c, a, k]` at `(c·A + a)·K + k`.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticTensor {
    classes: usize,
    attributes: usize,
    embed_dim: usize,
    values: Vec<f64>,
}

impl SemanticTensor {
    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn attributes(&self) -> usize {
        self.attributes
    }

    pub fn embed_dim(&self) -> usize {
        self.embed_dim
    }

    #[inline]
    pub fn get(&self, c: usize, a: usize, k: usize) -> f64 {
        self.values[(c * self.attributes + a) * self.embed_dim + k]
    }

    /// `tensor[c, a, :]`
    #[inline]
    pub fn fiber(&self, c: usize, a: usize) -> &[f64] {
        let start = (c * self.attributes + a) * self.embed_dim;
        &self.values[start..start + self.embed_dim]
    }

    /// `tensor[c, :, :]` as a flat `A·K` slice.
    #[inline]
    pub fn class_block(&self, c: usize) -> &[f64] {
        let n = self.attributes * self.embed_dim;
        &self.values[c * n..(c + 1) * n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }
}

/// Builds `φ^a_k[c,a,k] = φ^a[c,a]·φ_k[a,k]` with fiber normalization over `a`.
pub fn build_semantic_tensor(
    attrs: &AttributeMatrix,
    emb: &AttributeEmbeddings,
) -> Result<SemanticTensor> {
    build_semantic_tensor_with(attrs, emb, AttributeNorm::TensorFibers)
}

pub fn build_semantic_tensor_with(
    attrs: &AttributeMatrix,
    emb: &AttributeEmbeddings,
    norm: AttributeNorm,
) -> Result<SemanticTensor> {
    let (c_n, a_n) = attrs.values().shape();
    let (ea, k_n) = emb.vectors().shape();
    if ea != a_n {
        return Err(Error::shape(
            "build_semantic_tensor",
            format!("{a_n} embedding rows"),
            ea,
        ));
    }
    let mut priors = attrs.values().clone();
    if norm == AttributeNorm::PriorRows {
        for c in 0..c_n {
            let row = l2_normalize(priors.row(c));
            priors.row_mut(c).copy_from_slice(&row);
        }
    }
    let mut values = vec![0.0; c_n * a_n * k_n];
    for c in 0..c_n {
        for a in 0..a_n {
            let p = priors.get(c, a);
            let e = emb.vectors().row(a);
            let base = (c * a_n + a) * k_n;
            for k in 0..k_n {
                values[base + k] = p * e[k];
            }
        }
    }
    if norm == AttributeNorm::TensorFibers {
        let mut fiber = vec![0.0; a_n];
        for c in 0..c_n {
            for k in 0..k_n {
                for a in 0..a_n {
                    fiber[a] = values[(c * a_n + a) * k_n + k];
                }
                let unit = l2_normalize(&fiber);
                for a in 0..a_n {
                    values[(c * a_n + a) * k_n + k] = unit[a];
                }
            }
        }
    }
    Ok(SemanticTensor {
        classes: c_n,
        attributes: a_n,
        embed_dim: k_n,
        values,
    })
}

/// Per-attribute penalty `h[a] = 1 − mean_{y ∈ unseen} φ^a[y, a]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyVector(Vec<f64>);

impl PenaltyVector {
    pub fn new(h: Vec<f64>) -> Result<Self> {
        if h.iter().any(|x| !(0.0..=1.0).contains(x)) {
            return Err(Error::Contract("penalty entries must lie in [0, 1]".into()));
        }
        Ok(Self(h))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

pub fn compute_unseen_penalty(attrs: &AttributeMatrix, unseen: &[usize]) -> Result<PenaltyVector> {
    if unseen.is_empty() {
        return Err(Error::Contract("unseen class set is empty".into()));
    }
    let m = attrs.values();
    if let Some(&c) = unseen.iter().find(|&&c| c >= m.rows()) {
        return Err(Error::Contract(format!("unseen class {c} out of range")));
    }
    let n = unseen.len() as f64;
    let h = (0..m.cols())
        .map(|a| {
            let total: f64 = unseen.iter().map(|&y| m.get(y, a)).sum();
            1.0 - total / n
        })
        .collect();
    PenaltyVector::new(h)
}

/// Everything a model needs about one dataset. Always holds preprocessed data:
/// unit-norm region rows, `[0, 1]` priors and unit-norm embedding rows.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBundle {
    examples: Vec<LabeledExample>,
    attributes: AttributeMatrix,
    embeddings: AttributeEmbeddings,
    splits: SplitSpec,
    class_names: Vec<String>,
    attribute_names: Vec<String>,
    dims: Dims,
}

impl DatasetBundle {
    /// Ingests raw data: rescales priors, normalizes embeddings and region
    /// features, then validates the whole bundle.
    pub fn ingest(
        mut examples: Vec<LabeledExample>,
        priors: Matrix,
        embeddings: Matrix,
        splits: SplitSpec,
        class_names: Vec<String>,
        attribute_names: Vec<String>,
    ) -> Result<Self> {
        for ex in &mut examples {
            for r in 0..ex.regions.rows() {
                let row = l2_normalize(ex.regions.row(r));
                ex.regions.row_mut(r).copy_from_slice(&row);
            }
        }
        Self::from_parts(
            examples,
            AttributeMatrix::rescaled(priors)?,
            AttributeEmbeddings::normalized(embeddings)?,
            splits,
            class_names,
            attribute_names,
        )
    }

    /// Assembles an already-preprocessed bundle, validating consistency.
    pub fn from_parts(
        examples: Vec<LabeledExample>,
        attributes: AttributeMatrix,
        embeddings: AttributeEmbeddings,
        splits: SplitSpec,
        class_names: Vec<String>,
        attribute_names: Vec<String>,
    ) -> Result<Self> {
        let (classes, n_attr) = attributes.values().shape();
        let (emb_rows, embed_dim) = embeddings.vectors().shape();
        if emb_rows != n_attr {
            return Err(Error::shape("DatasetBundle embeddings", n_attr, emb_rows));
        }
        let (regions, feature_dim) = examples
            .first()
            .map(|e| e.regions.shape())
            .ok_or_else(|| Error::Contract("bundle has no examples".into()))?;
        for (i, ex) in examples.iter().enumerate() {
            if ex.regions.shape() != (regions, feature_dim) {
                return Err(Error::shape(
                    "DatasetBundle example",
                    format!("{regions}x{feature_dim}"),
                    format!("example {i}: {:?}", ex.regions.shape()),
                ));
            }
            if ex.label >= classes {
                return Err(Error::Contract(format!("example {i} label {} >= C={classes}", ex.label)));
            }
        }
        if class_names.len() != classes {
            return Err(Error::shape("class_names", classes, class_names.len()));
        }
        if attribute_names.len() != n_attr {
            return Err(Error::shape("attribute_names", n_attr, attribute_names.len()));
        }
        let labels: Vec<usize> = examples.iter().map(|e| e.label).collect();
        splits.validate(&labels, classes)?;
        Ok(Self {
            examples,
            attributes,
            embeddings,
            splits,
            class_names,
            attribute_names,
            dims: Dims {
                classes,
                attributes: n_attr,
                embed_dim,
                regions,
                feature_dim,
            },
        })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn examples(&self) -> &[LabeledExample] {
        &self.examples
    }

    pub fn example(&self, i: usize) -> &LabeledExample {
        &self.examples[i]
    }

    pub fn attributes(&self) -> &AttributeMatrix {
        &self.attributes
    }

    pub fn embeddings(&self) -> &AttributeEmbeddings {
        &self.embeddings
    }

    pub fn splits(&self) -> &SplitSpec {
        &self.splits
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn attribute_names(&self) -> &[String] {
        &self.attribute_names
    }

    pub fn semantic_tensor(&self, norm: AttributeNorm) -> Result<SemanticTensor> {
        build_semantic_tensor_with(&self.attributes, &self.embeddings, norm)
    }

    pub fn unseen_penalty(&self) -> Result<PenaltyVector> {
        compute_unseen_penalty(&self.attributes, &self.splits.unseen_classes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::seeded_rng;
    use rand::Rng;

    fn random(rng: &mut crate::linalg::SeededRng, r: usize, c: usize) -> Matrix {
        Matrix::from_fn(r, c, |_, _| rng.random_range(0.0..1.0))
    }

    /// Naive construction straight from the definition.
    fn naive_tensor(p: &Matrix, e: &Matrix) -> Vec<f64> {
        let (cn, an, kn) = (p.rows(), p.cols(), e.cols());
        let mut raw = vec![vec![vec![0.0; kn]; an]; cn];
        for c in 0..cn {
            for a in 0..an {
                for k in 0..kn {
                    raw[c][a][k] = p.get(c, a) * e.get(a, k);
                }
            }
        }
        let mut out = Vec::new();
        for c in 0..cn {
            for a in 0..an {
                for k in 0..kn {
                    let mut ss = 0.0;
                    for b in 0..an {
                        ss += raw[c][b][k] * raw[c][b][k];
                    }
                    let n = ss.sqrt();
                    out.push(if n < 1e-12 { raw[c][a][k] } else { raw[c][a][k] / n });
                }
            }
        }
        out
    }

    #[test]
    fn one_hot_priors_select_embedding_rows() {
        let priors = Matrix::identity(3);
        let emb = AttributeEmbeddings::normalized(Matrix::from_rows(&[
            vec![1.0, 2.0],
            vec![0.0, 1.0],
            vec![3.0, 4.0],
        ]).unwrap())
        .unwrap();
        let t = build_semantic_tensor(&AttributeMatrix::new(priors).unwrap(), &emb).unwrap();
        for c in 0..3 {
            for a in 0..3 {
                let fiber = t.fiber(c, a);
                if a == c {
                    // Fiber normalization over a single nonzero entry yields its sign.
                    let expect: Vec<f64> = emb.vectors().row(a).iter().map(|x| if *x == 0.0 { 0.0 } else { x.signum() }).collect();
                    assert_eq!(fiber, expect.as_slice());
                } else {
                    assert!(fiber.iter().all(|&x| x == 0.0));
                }
            }
        }
        // Without fiber normalization the surviving fiber is the embedding itself.
        for norm in [AttributeNorm::None, AttributeNorm::PriorRows] {
            let plain = build_semantic_tensor_with(
                &AttributeMatrix::new(Matrix::identity(3)).unwrap(),
                &emb,
                norm,
            )
            .unwrap();
            for c in 0..3 {
                assert_eq!(plain.fiber(c, c), emb.vectors().row(c));
            }
        }
    }

    #[test]
    fn zero_priors_give_zero_tensor() {
        let mut rng = seeded_rng(1);
        let emb = AttributeEmbeddings::normalized(random(&mut rng, 4, 5)).unwrap();
        let attrs = AttributeMatrix::new(Matrix::zeros(3, 4)).unwrap();
        let t = build_semantic_tensor(&attrs, &emb).unwrap();
        assert!(t.as_slice().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn tensor_matches_naive_loops() {
        let mut rng = seeded_rng(2);
        for _ in 0..25 {
            let (c, a, k) = (rng.random_range(1..=8), rng.random_range(1..=8), rng.random_range(1..=8));
            let attrs = AttributeMatrix::new(random(&mut rng, c, a)).unwrap();
            let emb = AttributeEmbeddings::normalized(Matrix::from_fn(a, k, |_, _| rng.random_range(-1.0..1.0))).unwrap();
            let t = build_semantic_tensor(&attrs, &emb).unwrap();
            let expect = naive_tensor(attrs.values(), emb.vectors());
            for (x, y) in t.as_slice().iter().zip(&expect) {
                assert!((x - y).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn prior_rows_mode_normalizes_rows_first() {
        let attrs = AttributeMatrix::new(Matrix::from_rows(&[vec![0.6, 0.8]]).unwrap()).unwrap();
        let emb = AttributeEmbeddings::new(Matrix::identity(2)).unwrap();
        let t = build_semantic_tensor_with(&attrs, &emb, AttributeNorm::PriorRows).unwrap();
        assert!((t.get(0, 0, 0) - 0.6).abs() < 1e-15);
        assert!((t.get(0, 1, 1) - 0.8).abs() < 1e-15);
    }

    #[test]
    fn tensor_rejects_dim_mismatch() {
        let attrs = AttributeMatrix::new(Matrix::zeros(2, 3)).unwrap();
        let emb = AttributeEmbeddings::new(Matrix::zeros(4, 2)).unwrap();
        assert!(build_semantic_tensor(&attrs, &emb).is_err());
    }

    #[test]
    fn penalty_examples() {
        let attrs = AttributeMatrix::new(
            Matrix::from_rows(&[vec![1.0, 0.0, 0.2], vec![1.0, 0.0, 0.6], vec![0.0, 1.0, 1.0]]).unwrap(),
        )
        .unwrap();
        let h = compute_unseen_penalty(&attrs, &[0, 1]).unwrap();
        assert_eq!(h.as_slice()[0], 0.0);
        assert_eq!(h.as_slice()[1], 1.0);
        // Loop oracle for the averaged column.
        let mut total = 0.0;
        for y in [0, 1] {
            total += attrs.values().get(y, 2);
        }
        let expect = 1.0 - total / 2.0;
        assert!((h.as_slice()[2] - expect).abs() < 1e-15);
        assert!((h.as_slice()[2] - 0.6).abs() < 1e-12);
        assert!(compute_unseen_penalty(&attrs, &[]).is_err());
    }

    #[test]
    fn penalty_in_unit_interval_under_fuzz() {
        let mut rng = seeded_rng(9);
        for _ in 0..500 {
            let c = rng.random_range(2..10);
            let raw = Matrix::from_fn(c, 6, |_, _| rng.random_range(-5.0..5.0));
            let attrs = AttributeMatrix::rescaled(raw).unwrap();
            let k = rng.random_range(1..c);
            let unseen: Vec<usize> = (0..k).collect();
            let h = compute_unseen_penalty(&attrs, &unseen).unwrap();
            assert!(h.as_slice().iter().all(|x| (0.0..=1.0).contains(x)));
        }
    }

    #[test]
    fn rescale_maps_columns_to_unit_interval() {
        let raw = Matrix::from_rows(&[vec![2.0, 5.0], vec![4.0, 5.0], vec![3.0, 5.0]]).unwrap();
        let attrs = AttributeMatrix::rescaled(raw).unwrap();
        assert_eq!(attrs.values().as_slice(), &[0.0, 1.0, 1.0, 1.0, 0.5, 1.0]);
        let again = AttributeMatrix::rescaled(attrs.values().clone()).unwrap();
        assert_eq!(again, attrs);
    }

    #[test]
    fn split_validation_catches_violations() {
        let labels = vec![0, 0, 1, 2];
        let good = SplitSpec {
            seen_classes: vec![0, 1],
            unseen_classes: vec![2],
            train: vec![0, 2],
            test_seen: vec![1],
            test_unseen: vec![3],
            val: vec![],
        };
        good.validate(&labels, 3).unwrap();

        let mut overlap = good.clone();
        overlap.unseen_classes = vec![1, 2];
        assert!(matches!(overlap.validate(&labels, 3), Err(Error::Split(_))));

        let mut leak = good.clone();
        leak.train = vec![0, 3];
        leak.test_unseen = vec![];
        assert!(leak.validate(&labels, 3).is_err());

        let mut dup = good.clone();
        dup.val = vec![1];
        assert!(dup.validate(&labels, 3).is_err());

        let mut empty = good;
        empty.unseen_classes.clear();
        empty.test_unseen.clear();
        assert!(empty.validate(&labels, 3).is_err());
    }

    #[test]
    fn example_requires_valid_region() {
        let m = Matrix::zeros(2, 3);
        assert!(LabeledExample::new(m.clone(), vec![false, false], 0).is_err());
        let ex = LabeledExample::new(
            Matrix::from_rows(&[vec![1.0, 2.0], vec![9.0, 9.0]]).unwrap(),
            vec![true, false],
            0,
        )
        .unwrap();
        assert_eq!(ex.mean_pool(), vec![1.0, 2.0]);
    }
}
