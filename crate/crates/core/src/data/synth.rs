//! Planted-attribute synthetic bundles.
//!
//! Every attribute owns a unit "part direction" in feature space. Each class
//! has a sparse signature over attributes; an example's regions are
//! signature-weighted mixtures of 1 to `max_parts_per_region` of its class's
//! parts plus isotropic Gaussian noise. The regions of one example jointly
//! cover the whole class support, so at zero noise the class is identifiable
//! from its features alone. Unseen classes recombine the supports of two seen
//! classes, so every unseen attribute is observed during training.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use super::{DatasetBundle, LabeledExample, SplitSpec};
use crate::error::{Error, Result};
use crate::linalg::{l2_normalize, seeded_rng, Matrix, SeededRng};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub seen_classes: usize,
    pub unseen_classes: usize,
    pub attributes: usize,
    pub embed_dim: usize,
    pub regions: usize,
    pub feature_dim: usize,
    pub examples_per_class: usize,
    /// Standard deviation of the per-coordinate Gaussian noise.
    pub noise: f64,
    /// Number of attributes active in each class signature.
    pub support_size: usize,
    pub max_parts_per_region: usize,
    /// Share of each seen class held out as `test_seen`.
    pub test_fraction: f64,
    /// Share of every class held out as `val`.
    pub val_fraction: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seen_classes: 20,
            unseen_classes: 5,
            attributes: 15,
            embed_dim: 16,
            regions: 4,
            feature_dim: 32,
            examples_per_class: 40,
            noise: 0.05,
            support_size: 3,
            max_parts_per_region: 3,
            test_fraction: 0.2,
            val_fraction: 0.1,
        }
    }
}

/// Ground truth behind a generated bundle, for oracle checks.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTruth {
    /// `A×D`, unit rows.
    pub parts: Matrix,
    /// `C×A` signature weights before ingestion rescaling.
    pub signatures: Matrix,
    /// Sorted support of every class.
    pub supports: Vec<Vec<usize>>,
}

const MAX_TRIES: usize = 10_000;

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

impl SynthConfig {
    pub fn total_classes(&self) -> usize {
        self.seen_classes + self.unseen_classes
    }

    fn held_out(&self, fraction: f64) -> usize {
        (fraction * self.examples_per_class as f64).round() as usize
    }

    pub fn check(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Infeasible(msg));
        if self.seen_classes == 0 {
            return bad("need at least one seen class".into());
        }
        for (name, v) in [
            ("attributes", self.attributes),
            ("embed_dim", self.embed_dim),
            ("regions", self.regions),
            ("feature_dim", self.feature_dim),
            ("examples_per_class", self.examples_per_class),
            ("support_size", self.support_size),
            ("max_parts_per_region", self.max_parts_per_region),
        ] {
            if v == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            return bad(format!("noise must be finite and >= 0, got {}", self.noise));
        }
        if self.attributes < self.max_parts_per_region {
            return bad(format!(
                "A={} is smaller than max_parts_per_region={}",
                self.attributes, self.max_parts_per_region
            ));
        }
        if self.support_size > self.attributes {
            return bad(format!("support_size {} exceeds A={}", self.support_size, self.attributes));
        }
        if self.support_size.div_ceil(self.regions) > self.max_parts_per_region {
            return bad(format!(
                "{} regions of at most {} parts cannot cover a support of {}",
                self.regions, self.max_parts_per_region, self.support_size
            ));
        }
        if self.seen_classes * self.support_size < self.attributes {
            return bad("seen class supports cannot cover every attribute".into());
        }
        if binomial(self.attributes, self.support_size) < self.total_classes() as f64 {
            return bad("not enough distinct attribute supports for the class count".into());
        }
        for (name, f) in [("test_fraction", self.test_fraction), ("val_fraction", self.val_fraction)] {
            if !(0.0..1.0).contains(&f) {
                return bad(format!("{name} must lie in [0, 1)"));
            }
        }
        let held = self.held_out(self.test_fraction) + self.held_out(self.val_fraction);
        if held >= self.examples_per_class {
            return bad("held-out fractions leave no training examples".into());
        }
        if self.unseen_classes > 0 && self.held_out(self.val_fraction) >= self.examples_per_class {
            return bad("validation fraction leaves no unseen test examples".into());
        }
        Ok(())
    }
}

pub fn generate_synthetic(cfg: &SynthConfig, seed: u64) -> Result<DatasetBundle> {
    generate_synthetic_with_truth(cfg, seed).map(|(b, _)| b)
}

pub fn generate_synthetic_with_truth(
    cfg: &SynthConfig,
    seed: u64,
) -> Result<(DatasetBundle, SyntheticTruth)> {
    cfg.check()?;
    let mut rng = seeded_rng(seed);
    let (a_n, d_n, k_n) = (cfg.attributes, cfg.feature_dim, cfg.embed_dim);
    let c_n = cfg.total_classes();

    let parts = random_unit_rows(&mut rng, a_n, d_n);
    let (supports, signatures) = plant_signatures(cfg, &mut rng)?;
    let embeddings = random_unit_rows(&mut rng, a_n, k_n);

    let mut examples = Vec::with_capacity(c_n * cfg.examples_per_class);
    let mut splits = SplitSpec {
        seen_classes: (0..cfg.seen_classes).collect(),
        unseen_classes: (cfg.seen_classes..c_n).collect(),
        ..SplitSpec::default()
    };
    let n_test = cfg.held_out(cfg.test_fraction);
    let n_val = cfg.held_out(cfg.val_fraction);
    for c in 0..c_n {
        let first = examples.len();
        for _ in 0..cfg.examples_per_class {
            let regions = sample_regions(cfg, &mut rng, &parts, signatures.row(c), &supports[c]);
            examples.push(LabeledExample::dense(regions, c)?);
        }
        let mut idx: Vec<usize> = (first..examples.len()).collect();
        idx.shuffle(&mut rng);
        let (val, rest) = idx.split_at(n_val);
        splits.val.extend_from_slice(val);
        if c < cfg.seen_classes {
            let (test, train) = rest.split_at(n_test);
            splits.test_seen.extend_from_slice(test);
            splits.train.extend_from_slice(train);
        } else {
            splits.test_unseen.extend_from_slice(rest);
        }
    }
    for list in [&mut splits.train, &mut splits.test_seen, &mut splits.test_unseen, &mut splits.val] {
        list.sort_unstable();
    }

    let class_names = (0..c_n).map(|c| format!("class_{c:03}")).collect();
    let attribute_names = (0..a_n).map(|a| format!("attr_{a:03}")).collect();
    let bundle = DatasetBundle::ingest(
        examples,
        signatures.clone(),
        embeddings,
        splits,
        class_names,
        attribute_names,
    )?;
    Ok((
        bundle,
        SyntheticTruth {
            parts,
            signatures,
            supports,
        },
    ))
}

fn random_unit_rows(rng: &mut SeededRng, rows: usize, cols: usize) -> Matrix {
    let mut m = Matrix::zeros(rows, cols);
    for i in 0..rows {
        let v: Vec<f64> = (0..cols).map(|_| rng.sample(StandardNormal)).collect();
        m.row_mut(i).copy_from_slice(&l2_normalize(&v));
    }
    m
}

fn plant_signatures(cfg: &SynthConfig, rng: &mut SeededRng) -> Result<(Vec<Vec<usize>>, Matrix)> {
    let (a_n, p) = (cfg.attributes, cfg.support_size);
    let mut signatures = Matrix::zeros(cfg.total_classes(), a_n);
    let mut taken: BTreeSet<Vec<usize>> = BTreeSet::new();
    let mut supports: Vec<Vec<usize>> = Vec::with_capacity(cfg.total_classes());

    // Seen classes: every attribute lands in at least one support.
    let mut order: Vec<usize> = (0..a_n).collect();
    order.shuffle(rng);
    for c in 0..cfg.seen_classes {
        let forced: Vec<usize> = order.iter().skip(c).step_by(cfg.seen_classes).copied().collect();
        let support = (0..MAX_TRIES)
            .find_map(|_| {
                let mut s: BTreeSet<usize> = forced.iter().copied().collect();
                while s.len() < p {
                    s.insert(rng.random_range(0..a_n));
                }
                let s: Vec<usize> = s.into_iter().collect();
                (!taken.contains(&s)).then_some(s)
            })
            .ok_or_else(|| Error::Infeasible("could not draw distinct seen supports".into()))?;
        for &a in &support {
            signatures.set(c, a, rng.random_range(0.5..1.0));
        }
        taken.insert(support.clone());
        supports.push(support);
    }

    // Unseen classes: convex recombination of two seen parents.
    for c in cfg.seen_classes..cfg.total_classes() {
        let mut drawn = None;
        for _ in 0..MAX_TRIES {
            let i = rng.random_range(0..cfg.seen_classes);
            let j = rng.random_range(0..cfg.seen_classes);
            if i == j && cfg.seen_classes > 1 {
                continue;
            }
            let mut pool: Vec<usize> = supports[i].iter().chain(&supports[j]).copied().collect();
            pool.sort_unstable();
            pool.dedup();
            if pool.len() < p {
                continue;
            }
            pool.shuffle(rng);
            let mut s = pool[..p].to_vec();
            s.sort_unstable();
            if !taken.contains(&s) {
                drawn = Some((i, j, s));
                break;
            }
        }
        let (i, j, support) =
            drawn.ok_or_else(|| Error::Infeasible("could not draw distinct unseen supports".into()))?;
        let lambda: f64 = rng.random_range(0.25..0.75);
        for &a in &support {
            let (wi, wj) = (
                if supports[i].contains(&a) { lambda } else { 0.0 },
                if supports[j].contains(&a) { 1.0 - lambda } else { 0.0 },
            );
            let v = (wi * signatures.get(i, a) + wj * signatures.get(j, a)) / (wi + wj);
            signatures.set(c, a, v);
        }
        taken.insert(support.clone());
        supports.push(support);
    }
    Ok((supports, signatures))
}

fn sample_regions(
    cfg: &SynthConfig,
    rng: &mut SeededRng,
    parts: &Matrix,
    signature: &[f64],
    support: &[usize],
) -> Matrix {
    let r_n = cfg.regions;
    let mut shuffled = support.to_vec();
    shuffled.shuffle(rng);
    let mut assigned: Vec<Vec<usize>> = vec![Vec::new(); r_n];
    for (i, &a) in shuffled.iter().enumerate() {
        assigned[i % r_n].push(a);
    }
    let cap = cfg.max_parts_per_region.min(support.len());
    let mut out = Matrix::zeros(r_n, cfg.feature_dim);
    for (r, chosen) in assigned.iter_mut().enumerate() {
        let target = rng.random_range(1..=cap).max(chosen.len());
        while chosen.len() < target {
            let a = support[rng.random_range(0..support.len())];
            if !chosen.contains(&a) {
                chosen.push(a);
            }
        }
        let row = out.row_mut(r);
        for &a in chosen.iter() {
            crate::linalg::axpy(signature[a], parts.row(a), row);
        }
        if cfg.noise > 0.0 {
            for x in row.iter_mut() {
                let n: f64 = rng.sample(StandardNormal);
                *x += cfg.noise * n;
            }
        }
    }
    out
}
