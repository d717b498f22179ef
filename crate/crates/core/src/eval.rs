//! Calibrated stacking, ZSL/GZSL metrics and calibration sweeps.

use std::fmt::{self, Write as _};

use log::warn;
use rayon::prelude::*;

use crate::data::{DatasetBundle, SemanticTensor};
use crate::error::{Error, Result};
use crate::linalg::softmax_in_place;
use crate::model::{forward, ClassProbabilities, PpnParams};
use crate::training::Checkpoint;

/// Seen-class divisor from the benchmark setup.
pub const DEFAULT_Z: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CalibrationMode {
    /// Seen-class probabilities divided by `z`.
    Multiplicative,
    /// `gamma` subtracted from seen-class probabilities.
    Additive,
    None,
}

impl CalibrationMode {
    pub fn as_str(self) -> &'static str {
        match self {
            CalibrationMode::Multiplicative => "multiplicative",
            CalibrationMode::Additive => "additive",
            CalibrationMode::None => "none",
        }
    }
}

impl std::str::FromStr for CalibrationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "multiplicative" | "mul" => Ok(CalibrationMode::Multiplicative),
            "additive" | "add" => Ok(CalibrationMode::Additive),
            "none" => Ok(CalibrationMode::None),
            other => Err(Error::Contract(format!("unknown calibration mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationConfig {
    pub mode: CalibrationMode,
    pub z: f64,
    pub gamma: f64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self::multiplicative(DEFAULT_Z)
    }
}

impl CalibrationConfig {
    pub fn multiplicative(z: f64) -> Self {
        Self {
            mode: CalibrationMode::Multiplicative,
            z,
            gamma: 0.0,
        }
    }

    pub fn additive(gamma: f64) -> Self {
        Self {
            mode: CalibrationMode::Additive,
            z: 1.0,
            gamma,
        }
    }

    pub fn none() -> Self {
        Self {
            mode: CalibrationMode::None,
            z: 1.0,
            gamma: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.z >= 1.0 && self.z.is_finite()) {
            return Err(Error::Contract(format!("calibration z must be finite and >= 1, got {}", self.z)));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::Contract(format!("calibration gamma must lie in [0, 1), got {}", self.gamma)));
        }
        Ok(())
    }

    /// Copy of `self` with the active mode's parameter set to `value`.
    pub fn with_parameter(mut self, value: f64) -> Self {
        match self.mode {
            CalibrationMode::Multiplicative => self.z = value,
            CalibrationMode::Additive => self.gamma = value,
            CalibrationMode::None => {}
        }
        self
    }

    #[inline]
    fn adjust(&self, p: f64) -> f64 {
        match self.mode {
            CalibrationMode::Multiplicative => p / self.z,
            CalibrationMode::Additive => p - self.gamma,
            CalibrationMode::None => p,
        }
    }
}

impl fmt::Display for CalibrationConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.mode {
            CalibrationMode::Multiplicative => write!(f, "multiplicative z={:e}", self.z),
            CalibrationMode::Additive => write!(f, "additive gamma={}", self.gamma),
            CalibrationMode::None => write!(f, "none"),
        }
    }
}

/// Seen-class scores adjusted per `cfg`, unseen untouched. No renormalization.
pub fn calibrate(probs: &ClassProbabilities, seen: &[bool], cfg: &CalibrationConfig) -> Vec<f64> {
    probs
        .as_slice()
        .iter()
        .zip(seen)
        .map(|(&p, &s)| if s { cfg.adjust(p) } else { p })
        .collect()
}

/// Argmax of the calibrated scores, ties to the lowest class index.
///
/// The best seen and best unseen classes are picked on raw probabilities and
/// only the seen winner is adjusted. This equals the argmax of [`calibrate`]
/// but stays exactly monotone in the calibration parameter: rounding inside
/// the adjustment can never reorder two seen classes.
pub fn predict_calibrated(probs: &[f64], seen: &[bool], cfg: &CalibrationConfig) -> usize {
    let mut best_seen: Option<usize> = None;
    let mut best_unseen: Option<usize> = None;
    for (c, &p) in probs.iter().enumerate() {
        let slot = if seen[c] { &mut best_seen } else { &mut best_unseen };
        match *slot {
            Some(b) if p <= probs[b] => {}
            _ => *slot = Some(c),
        }
    }
    match (best_seen, best_unseen) {
        (Some(s), Some(u)) => {
            let adj = cfg.adjust(probs[s]);
            if adj > probs[u] || (adj == probs[u] && s < u) {
                s
            } else {
                u
            }
        }
        (Some(s), None) => s,
        (None, Some(u)) => u,
        (None, None) => 0,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassAccuracy {
    pub class: usize,
    pub correct: usize,
    pub total: usize,
}

impl ClassAccuracy {
    pub fn accuracy(&self) -> f64 {
        self.correct as f64 / self.total as f64
    }
}

/// Macro-averaged accuracy over a class set.
#[derive(Debug, Clone, PartialEq)]
pub struct MacroAccuracy {
    pub mean: f64,
    pub per_class: Vec<ClassAccuracy>,
    /// Classes with no examples, left out of the mean.
    pub excluded: Vec<usize>,
}

/// Mean over `classes` of per-class accuracy. Classes without examples are
/// excluded and logged.
pub fn per_class_accuracy(predictions: &[usize], labels: &[usize], classes: &[usize]) -> Result<MacroAccuracy> {
    if predictions.len() != labels.len() {
        return Err(Error::shape("per_class_accuracy", labels.len(), predictions.len()));
    }
    let mut per_class = Vec::with_capacity(classes.len());
    let mut excluded = Vec::new();
    for &c in classes {
        let mut row = ClassAccuracy {
            class: c,
            correct: 0,
            total: 0,
        };
        for (&p, &y) in predictions.iter().zip(labels) {
            if y == c {
                row.total += 1;
                row.correct += usize::from(p == c);
            }
        }
        if row.total == 0 {
            warn!("class {c} has no examples; excluded from the macro average");
            excluded.push(c);
        } else {
            per_class.push(row);
        }
    }
    let mean = if per_class.is_empty() {
        0.0
    } else {
        per_class.iter().map(ClassAccuracy::accuracy).sum::<f64>() / per_class.len() as f64
    };
    Ok(MacroAccuracy {
        mean,
        per_class,
        excluded,
    })
}

/// `2us / (u + s)`, or 0 when both are 0.
pub fn harmonic_mean(u: f64, s: f64) -> f64 {
    if u + s > 0.0 {
        2.0 * u * s / (u + s)
    } else {
        0.0
    }
}

/// Model outputs for a fixed example list, computed once and reused across
/// calibration settings.
#[derive(Debug, Clone)]
pub struct ScoredSet {
    pub labels: Vec<usize>,
    /// Compatibility scores, one row per example.
    pub psi: Vec<Vec<f64>>,
    /// Softmax over all classes, one row per example.
    pub probs: Vec<Vec<f64>>,
}

impl ScoredSet {
    pub fn score(params: &PpnParams, tensor: &SemanticTensor, bundle: &DatasetBundle, indices: &[usize]) -> Result<Self> {
        let rows: Vec<(usize, Vec<f64>)> = indices
            .par_iter()
            .map(|&i| {
                let ex = bundle.example(i);
                forward(params, ex, tensor).map(|t| (ex.label, t.psi))
            })
            .collect::<Result<_>>()?;
        let labels = rows.iter().map(|(l, _)| *l).collect();
        let psi: Vec<Vec<f64>> = rows.into_iter().map(|(_, p)| p).collect();
        let probs = psi
            .iter()
            .map(|p| {
                let mut q = p.clone();
                softmax_in_place(&mut q);
                q
            })
            .collect();
        Ok(Self { labels, psi, probs })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// ZSL predictions: argmax restricted to `unseen`.
    pub fn zsl_predictions(&self, unseen: &[usize]) -> Vec<usize> {
        self.psi
            .iter()
            .map(|p| {
                let mut best = unseen[0];
                for &c in unseen {
                    if p[c] > p[best] || (p[c] == p[best] && c < best) {
                        best = c;
                    }
                }
                best
            })
            .collect()
    }

    pub fn gzsl_predictions(&self, seen_mask: &[bool], cal: &CalibrationConfig) -> Vec<usize> {
        self.probs
            .iter()
            .map(|p| predict_calibrated(p, seen_mask, cal))
            .collect()
    }

    /// Subset of rows whose label is in `classes`.
    fn filter(&self, keep: impl Fn(usize) -> bool) -> (Vec<usize>, Vec<usize>) {
        (0..self.len())
            .filter(|&i| keep(self.labels[i]))
            .map(|i| (i, self.labels[i]))
            .unzip()
    }
}

/// u/s/H of one calibration setting over a scored set.
fn gzsl_metrics(
    scored: &ScoredSet,
    seen: &[usize],
    unseen: &[usize],
    seen_mask: &[bool],
    cal: &CalibrationConfig,
) -> Result<(MacroAccuracy, MacroAccuracy)> {
    let preds = scored.gzsl_predictions(seen_mask, cal);
    let (u_rows, u_labels) = scored.filter(|y| !seen_mask[y]);
    let (s_rows, s_labels) = scored.filter(|y| seen_mask[y]);
    let pick = |rows: &[usize]| rows.iter().map(|&i| preds[i]).collect::<Vec<_>>();
    let u = per_class_accuracy(&pick(&u_rows), &u_labels, unseen)?;
    let s = per_class_accuracy(&pick(&s_rows), &s_labels, seen)?;
    Ok((u, s))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassReportRow {
    pub class: usize,
    pub name: String,
    pub seen: bool,
    pub total: usize,
    pub correct: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// ZSL top-1 over unseen test examples, unseen classes only.
    pub t1_unseen: f64,
    pub u: f64,
    pub s: f64,
    pub h: f64,
    /// GZSL per-class accuracies.
    pub per_class: Vec<ClassReportRow>,
    pub calibration: CalibrationConfig,
    pub warnings: Vec<String>,
}

impl EvalReport {
    /// Tab-delimited: a metric block followed by a per-class block.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("metric\tvalue\n");
        let _ = writeln!(out, "calibration\t{}", self.calibration);
        for (k, v) in [("t1_unseen", self.t1_unseen), ("u", self.u), ("s", self.s), ("h", self.h)] {
            let _ = writeln!(out, "{k}\t{v}");
        }
        out.push_str("\nclass\tname\tsplit\ttotal\tcorrect\taccuracy\n");
        for r in &self.per_class {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}",
                r.class,
                r.name,
                if r.seen { "seen" } else { "unseen" },
                r.total,
                r.correct,
                r.accuracy
            );
        }
        out
    }

    pub fn summary(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "calibration: {}", self.calibration);
        let _ = writeln!(out, "ZSL  T1 = {:.4}", self.t1_unseen);
        let _ = writeln!(out, "GZSL u  = {:.4}  s = {:.4}  H = {:.4}", self.u, self.s, self.h);
        for w in &self.warnings {
            let _ = writeln!(out, "warning: {w}");
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub parameter: f64,
    pub u: f64,
    pub s: f64,
    pub h: f64,
}

pub fn sweep_to_tsv(mode: CalibrationMode, rows: &[SweepRow]) -> String {
    let mut out = format!("{}\tu\ts\th\n", if mode == CalibrationMode::Additive { "gamma" } else { "z" });
    for r in rows {
        let _ = writeln!(out, "{}\t{}\t{}\t{}", r.parameter, r.u, r.s, r.h);
    }
    out
}

/// `z = 10^(i/4)` for `i = 0..=40`, spanning `[1, 1e10]`.
pub fn default_multiplicative_grid() -> Vec<f64> {
    (0..=40).map(|i| 10f64.powf(i as f64 / 4.0)).collect()
}

/// `gamma = i/40` for `i = 0..40`, spanning `[0, 1)`.
pub fn default_additive_grid() -> Vec<f64> {
    (0..40).map(|i| i as f64 / 40.0).collect()
}

pub fn default_grid(mode: CalibrationMode) -> Vec<f64> {
    match mode {
        CalibrationMode::Additive => default_additive_grid(),
        _ => default_multiplicative_grid(),
    }
}

/// Fails unless `u` never decreases and `s` never increases along `rows`.
pub fn check_sweep_monotone(rows: &[SweepRow]) -> Result<()> {
    for (i, pair) in rows.windows(2).enumerate() {
        let (a, b) = (&pair[0], &pair[1]);
        if b.u < a.u {
            return Err(Error::NotMonotone {
                index: i + 1,
                msg: format!("u fell from {} to {}", a.u, b.u),
            });
        }
        if b.s > a.s {
            return Err(Error::NotMonotone {
                index: i + 1,
                msg: format!("s rose from {} to {}", a.s, b.s),
            });
        }
    }
    Ok(())
}

/// Scores the test splits of a bundle once and answers ZSL, GZSL and sweep
/// queries from the cached outputs.
#[derive(Debug, Clone)]
pub struct Evaluator<'b> {
    bundle: &'b DatasetBundle,
    scored: ScoredSet,
    seen_mask: Vec<bool>,
    n_test_unseen: usize,
}

impl<'b> Evaluator<'b> {
    /// Scores `test_unseen` followed by `test_seen`.
    pub fn new(params: &PpnParams, tensor: &SemanticTensor, bundle: &'b DatasetBundle) -> Result<Self> {
        let s = bundle.splits();
        let indices: Vec<usize> = s.test_unseen.iter().chain(&s.test_seen).copied().collect();
        Self::on_indices(params, tensor, bundle, &indices, s.test_unseen.len())
    }

    pub fn for_checkpoint(ckpt: &Checkpoint, bundle: &'b DatasetBundle) -> Result<Self> {
        let tensor = bundle.semantic_tensor(ckpt.config.attribute_norm)?;
        Self::new(&ckpt.params, &tensor, bundle)
    }

    /// Scores the validation split.
    pub fn validation(params: &PpnParams, tensor: &SemanticTensor, bundle: &'b DatasetBundle) -> Result<Self> {
        let mask = bundle.splits().seen_mask(bundle.dims().classes);
        let (unseen, seen): (Vec<usize>, Vec<usize>) =
            bundle.splits().val.iter().partition(|&&i| !mask[bundle.example(i).label]);
        let n = unseen.len();
        let indices: Vec<usize> = unseen.into_iter().chain(seen).collect();
        Self::on_indices(params, tensor, bundle, &indices, n)
    }

    fn on_indices(
        params: &PpnParams,
        tensor: &SemanticTensor,
        bundle: &'b DatasetBundle,
        indices: &[usize],
        n_unseen_first: usize,
    ) -> Result<Self> {
        Ok(Self {
            bundle,
            scored: ScoredSet::score(params, tensor, bundle, indices)?,
            seen_mask: bundle.splits().seen_mask(bundle.dims().classes),
            n_test_unseen: n_unseen_first,
        })
    }

    pub fn scored(&self) -> &ScoredSet {
        &self.scored
    }

    fn has_both_splits(&self) -> bool {
        self.n_test_unseen > 0 && self.n_test_unseen < self.scored.len()
    }

    /// ZSL top-1: per-class accuracy over unseen examples, unseen classes only.
    pub fn zsl(&self) -> Result<MacroAccuracy> {
        if self.n_test_unseen == 0 {
            return Err(Error::Contract("no unseen test examples".into()));
        }
        let unseen = &self.bundle.splits().unseen_classes;
        let preds = self.scored.zsl_predictions(unseen);
        per_class_accuracy(
            &preds[..self.n_test_unseen],
            &self.scored.labels[..self.n_test_unseen],
            unseen,
        )
    }

    pub fn gzsl(&self, cal: &CalibrationConfig) -> Result<EvalReport> {
        cal.validate()?;
        if !self.has_both_splits() {
            return Err(Error::Contract("GZSL needs both seen and unseen test examples".into()));
        }
        let s = self.bundle.splits();
        let (u, sa) = gzsl_metrics(&self.scored, &s.seen_classes, &s.unseen_classes, &self.seen_mask, cal)?;
        let t1 = self.zsl()?;
        let mut warnings: Vec<String> = Vec::new();
        for c in u.excluded.iter().chain(&sa.excluded) {
            warnings.push(format!("class {c} has no test examples and was excluded"));
        }
        let names = self.bundle.class_names();
        let mut per_class: Vec<ClassReportRow> = u
            .per_class
            .iter()
            .chain(&sa.per_class)
            .map(|r| ClassReportRow {
                class: r.class,
                name: names[r.class].clone(),
                seen: self.seen_mask[r.class],
                total: r.total,
                correct: r.correct,
                accuracy: r.accuracy(),
            })
            .collect();
        per_class.sort_by_key(|r| r.class);
        Ok(EvalReport {
            t1_unseen: t1.mean,
            u: u.mean,
            s: sa.mean,
            h: harmonic_mean(u.mean, sa.mean),
            per_class,
            calibration: *cal,
            warnings,
        })
    }

    /// One row per grid point, reusing the cached scores. The grid must be
    /// non-empty and ascending; the result is checked for monotonicity.
    pub fn sweep(&self, mode: CalibrationMode, grid: &[f64]) -> Result<Vec<SweepRow>> {
        if grid.is_empty() {
            return Err(Error::Contract("calibration grid is empty".into()));
        }
        if grid.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Contract("calibration grid must be ascending".into()));
        }
        if !self.has_both_splits() {
            return Err(Error::Contract("GZSL needs both seen and unseen test examples".into()));
        }
        let base = match mode {
            CalibrationMode::Multiplicative => CalibrationConfig::multiplicative(1.0),
            CalibrationMode::Additive => CalibrationConfig::additive(0.0),
            CalibrationMode::None => CalibrationConfig::none(),
        };
        let s = self.bundle.splits();
        let rows = grid
            .iter()
            .map(|&g| {
                let cal = base.with_parameter(g);
                cal.validate()?;
                let (u, sa) = gzsl_metrics(&self.scored, &s.seen_classes, &s.unseen_classes, &self.seen_mask, &cal)?;
                Ok(SweepRow {
                    parameter: g,
                    u: u.mean,
                    s: sa.mean,
                    h: harmonic_mean(u.mean, sa.mean),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        check_sweep_monotone(&rows)?;
        Ok(rows)
    }
}

/// ZSL top-1 accuracy on `test_unseen`.
pub fn evaluate_zsl(ckpt: &Checkpoint, bundle: &DatasetBundle) -> Result<f64> {
    let tensor = bundle.semantic_tensor(ckpt.config.attribute_norm)?;
    let s = bundle.splits();
    let ev = Evaluator::on_indices(&ckpt.params, &tensor, bundle, &s.test_unseen, s.test_unseen.len())?;
    ev.zsl().map(|m| m.mean)
}

pub fn evaluate_gzsl(ckpt: &Checkpoint, bundle: &DatasetBundle, cal: &CalibrationConfig) -> Result<EvalReport> {
    Evaluator::for_checkpoint(ckpt, bundle)?.gzsl(cal)
}

pub fn calibration_sweep(
    ckpt: &Checkpoint,
    bundle: &DatasetBundle,
    mode: CalibrationMode,
    grid: &[f64],
) -> Result<Vec<SweepRow>> {
    Evaluator::for_checkpoint(ckpt, bundle)?.sweep(mode, grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn neutral_divisor_is_identity() {
        let p = ClassProbabilities(vec![0.5, 0.3, 0.2]);
        let seen = [true, false, true];
        assert_eq!(calibrate(&p, &seen, &CalibrationConfig::multiplicative(1.0)), p.0);
        assert_eq!(calibrate(&p, &seen, &CalibrationConfig::additive(0.0)), p.0);
    }

    #[test]
    fn divisor_flips_seen_bias() {
        let p = ClassProbabilities(vec![0.9, 0.1]);
        let seen = [true, false];
        let cal = CalibrationConfig::multiplicative(10.0);
        let adj = calibrate(&p, &seen, &cal);
        assert!((adj[0] - 0.09).abs() < 1e-15);
        assert_eq!(adj[1], 0.1);
        assert_eq!(predict_calibrated(&p.0, &seen, &CalibrationConfig::none()), 0);
        assert_eq!(predict_calibrated(&p.0, &seen, &cal), 1);
    }

    #[test]
    fn default_divisor() {
        assert_eq!(CalibrationConfig::default().z, 1e8);
        assert_eq!(CalibrationConfig::default().mode, CalibrationMode::Multiplicative);
    }

    #[test]
    fn calibration_validation() {
        assert!(CalibrationConfig::multiplicative(0.5).validate().is_err());
        assert!(CalibrationConfig::additive(1.0).validate().is_err());
        assert!(CalibrationConfig::additive(0.9995).validate().is_ok());
    }

    #[test]
    fn per_class_accuracy_cases() {
        let all = per_class_accuracy(&[0, 1, 1], &[0, 1, 1], &[0, 1]).unwrap();
        assert_eq!(all.mean, 1.0);
        // Macro averaging ignores class sizes.
        let m = per_class_accuracy(&[0, 0, 0, 0, 1], &[0, 0, 0, 0, 1], &[0, 1]).unwrap();
        assert_eq!(m.mean, 1.0);
        let m = per_class_accuracy(&[0, 0, 0, 0, 0], &[0, 0, 0, 0, 1], &[0, 1]).unwrap();
        assert_eq!(m.mean, 0.5);
        let m = per_class_accuracy(&[0], &[0], &[0, 2]).unwrap();
        assert_eq!(m.excluded, vec![2]);
        assert_eq!(m.mean, 1.0);
    }

    #[test]
    fn per_class_accuracy_matches_confusion_matrix() {
        let labels = [0, 0, 0, 1, 1, 2, 2, 2, 2];
        let preds = [0, 1, 0, 1, 2, 2, 2, 0, 2];
        let mut cm = [[0usize; 3]; 3];
        for (&y, &p) in labels.iter().zip(&preds) {
            cm[y][p] += 1;
        }
        let expect: f64 = (0..3)
            .map(|c| cm[c][c] as f64 / cm[c].iter().sum::<usize>() as f64)
            .sum::<f64>()
            / 3.0;
        let got = per_class_accuracy(&preds, &labels, &[0, 1, 2]).unwrap();
        assert!((got.mean - expect).abs() < 1e-15);
        assert!((expect - (2.0 / 3.0 + 0.5 + 0.75) / 3.0).abs() < 1e-15);
    }

    #[test]
    fn harmonic_mean_cases() {
        assert!((harmonic_mean(65.8, 67.8) - 66.8).abs() <= 0.05);
        assert!((harmonic_mean(57.5, 76.2) - 65.5).abs() <= 0.05);
        assert!((harmonic_mean(0.4, 0.4) - 0.4).abs() < 1e-15);
        assert_eq!(harmonic_mean(0.0, 0.0), 0.0);
    }

    #[test]
    fn monotone_checker_flags_violations() {
        let row = |u, s| SweepRow { parameter: 0.0, u, s, h: harmonic_mean(u, s) };
        assert!(check_sweep_monotone(&[row(0.1, 0.9), row(0.2, 0.9), row(0.5, 0.3)]).is_ok());
        assert!(matches!(
            check_sweep_monotone(&[row(0.2, 0.9), row(0.1, 0.8)]),
            Err(Error::NotMonotone { index: 1, .. })
        ));
        assert!(check_sweep_monotone(&[row(0.2, 0.8), row(0.3, 0.9)]).is_err());
    }

    #[test]
    fn grids_span_their_ranges() {
        let m = default_multiplicative_grid();
        assert_eq!(m[0], 1.0);
        assert!((m.last().unwrap() / 1e10 - 1.0).abs() < 1e-12);
        assert!(m.windows(2).all(|w| w[0] < w[1]));
        let a = default_additive_grid();
        assert_eq!(a[0], 0.0);
        assert!(*a.last().unwrap() < 1.0);
    }

    proptest! {
        #[test]
        fn harmonic_mean_bounds(u in 0.0f64..=1.0, s in 0.0f64..=1.0) {
            let h = harmonic_mean(u, s);
            prop_assert!(h <= (u + s) / 2.0 + 1e-15);
            prop_assert!(h <= 2.0 * u.min(s) + 1e-15);
            prop_assert!(h >= 0.0);
        }

        #[test]
        fn prediction_matches_argmax_of_calibrated_scores(
            p in prop::collection::vec(0.0f64..1.0, 2..8),
            seen_bits in prop::collection::vec(any::<bool>(), 8),
            z in 1.0f64..1e6,
        ) {
            let seen = &seen_bits[..p.len()];
            let cal = CalibrationConfig::multiplicative(z);
            let adj = calibrate(&ClassProbabilities(p.clone()), seen, &cal);
            let direct = crate::linalg::argmax(&adj).unwrap();
            let fast = predict_calibrated(&p, seen, &cal);
            prop_assert_eq!(adj[direct], adj[fast]);
        }

        #[test]
        fn neutral_calibration_matches_plain_argmax(p in prop::collection::vec(0.0f64..1.0, 1..8), bits in prop::collection::vec(any::<bool>(), 8)) {
            let seen = &bits[..p.len()];
            let plain = crate::linalg::argmax(&p).unwrap();
            prop_assert_eq!(predict_calibrated(&p, seen, &CalibrationConfig::multiplicative(1.0)), plain);
            prop_assert_eq!(predict_calibrated(&p, seen, &CalibrationConfig::additive(0.0)), plain);
        }
    }
}
