//! Independent reference implementations shared by the integration tests.

#![allow(dead_code, clippy::needless_range_loop)]

use ppn_core::data::{DatasetBundle, LabeledExample, SemanticTensor, SyntheticTruth};
use ppn_core::model::PpnParams;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn cos(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (dot(a, a).sqrt(), dot(b, b).sqrt());
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot(a, b) / (na * nb)
    }
}

/// Cost of explaining one region with class `c`: the best cosine distance to
/// any signature-weighted mixture of a non-empty subset of the class support.
fn region_cost(region: &[f64], truth: &SyntheticTruth, c: usize) -> f64 {
    let support = &truth.supports[c];
    let d = truth.parts.cols();
    let mut best = f64::INFINITY;
    for bits in 1u32..(1 << support.len()) {
        let mut mix = vec![0.0; d];
        for (i, &a) in support.iter().enumerate() {
            if bits & (1 << i) != 0 {
                let w = truth.signatures.get(c, a);
                for (m, p) in mix.iter_mut().zip(truth.parts.row(a)) {
                    *m += w * p;
                }
            }
        }
        best = best.min(1.0 - cos(region, &mix));
    }
    best
}

/// Nearest-signature classifier using the planted parts and signatures.
/// Total region cost is minimized over `candidates`; ties go to the first.
pub fn oracle_predict(ex: &LabeledExample, truth: &SyntheticTruth, candidates: &[usize]) -> usize {
    let mut best = (f64::INFINITY, candidates[0]);
    for &c in candidates {
        let cost: f64 = ex.valid_regions().map(|r| region_cost(r, truth, c)).sum();
        if cost < best.0 {
            best = (cost, c);
        }
    }
    best.1
}

/// Macro accuracy of the oracle on `test_unseen`, candidates = unseen classes.
pub fn oracle_zsl_accuracy(bundle: &DatasetBundle, truth: &SyntheticTruth) -> f64 {
    let s = bundle.splits();
    let mut per = Vec::new();
    for &c in &s.unseen_classes {
        let idx: Vec<usize> = s.test_unseen.iter().copied().filter(|&i| bundle.example(i).label == c).collect();
        let ok = idx
            .iter()
            .filter(|&&i| oracle_predict(bundle.example(i), truth, &s.unseen_classes) == c)
            .count();
        per.push(ok as f64 / idx.len() as f64);
    }
    per.iter().sum::<f64>() / per.len() as f64
}

fn softmax(v: &[f64]) -> Vec<f64> {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = v.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|x| x / s).collect()
}

/// Compatibility scores by explicit loops over regions, classes, attributes
/// and embedding coordinates.
pub fn loop_forward(params: &PpnParams, ex: &LabeledExample, tensor: &SemanticTensor) -> Vec<f64> {
    let (a_n, d_n, k_n, c_n) = (
        params.attributes(),
        params.feature_dim(),
        params.embed_dim(),
        tensor.classes(),
    );
    let valid: Vec<&[f64]> = ex.valid_regions().collect();
    let mut region_logits = Vec::new();
    for theta in &valid {
        let mut s = params.beta_bias;
        for d in 0..d_n {
            s += params.beta_weight[d] * theta[d];
        }
        region_logits.push(s);
    }
    let b = softmax(&region_logits);
    let mut psi = vec![0.0; c_n];
    for (r, theta) in valid.iter().enumerate() {
        let mut logits = vec![0.0; a_n];
        for a in 0..a_n {
            logits[a] = params.alpha_bias[a];
            for d in 0..d_n {
                logits[a] += params.alpha_weight.get(a, d) * theta[d];
            }
        }
        let attn = softmax(&logits);
        let mut e = vec![0.0; k_n];
        for k in 0..k_n {
            for d in 0..d_n {
                e[k] += params.w.get(d, k) * theta[d];
            }
        }
        for c in 0..c_n {
            let mut score = 0.0;
            for k in 0..k_n {
                let mut f = 0.0;
                for a in 0..a_n {
                    f += attn[a] * tensor.get(c, a, k);
                }
                score += e[k] * f;
            }
            psi[c] += b[r] * score;
        }
    }
    psi
}
