//! Central finite differences as an independent check on the analytic gradient.

use std::fmt;

use rand::Rng;

use super::loss::Objective;
use crate::data::{
    build_semantic_tensor, compute_unseen_penalty, AttributeEmbeddings, AttributeMatrix, LabeledExample,
    PenaltyVector, SemanticTensor,
};
use crate::error::{Error, Result};
use crate::linalg::{l2_normalize, seeded_rng, Matrix, SeededRng};
use crate::model::{ParamGrads, PpnParams};

/// Central-difference gradient of `f` at `params`, one coordinate at a time.
pub fn finite_diff_grad(f: impl Fn(&PpnParams) -> f64, params: &PpnParams, step: f64) -> Result<ParamGrads> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::Contract(format!("finite-difference step must be > 0, got {step}")));
    }
    let mut grads = params.zeros_like();
    let mut probe = params.clone();
    for t in 0..PpnParams::TENSOR_NAMES.len() {
        let len = params.tensors()[t].len();
        for i in 0..len {
            let orig = params.tensors()[t][i];
            probe.tensors_mut()[t][i] = orig + step;
            let up = f(&probe);
            probe.tensors_mut()[t][i] = orig - step;
            let down = f(&probe);
            probe.tensors_mut()[t][i] = orig;
            grads.tensors_mut()[t][i] = (up - down) / (2.0 * step);
        }
    }
    Ok(grads)
}

/// Relative error with a floor on the denominator, so coordinates whose true
/// gradient is zero are judged on absolute error below `floor`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckRow {
    pub name: &'static str,
    pub count: usize,
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    pub worst_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub rows: Vec<GradCheckRow>,
    pub step: f64,
    pub tolerance: f64,
    pub floor: f64,
    /// Smallest `|cos(u, v)|` over the batch; near zero the hinge kink makes
    /// finite differences meaningless.
    pub min_hinge_margin: f64,
    pub checkable: bool,
}

impl GradCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.rows.iter().map(|r| r.max_rel_err).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.checkable && self.max_rel_err() <= self.tolerance
    }
}

impl fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "parameter\tcount\tmax_rel_err\tmax_abs_err\tworst_index")?;
        for r in &self.rows {
            writeln!(
                f,
                "{}\t{}\t{:.3e}\t{:.3e}\t{}",
                r.name, r.count, r.max_rel_err, r.max_abs_err, r.worst_index
            )?;
        }
        writeln!(
            f,
            "step={:e} tolerance={:e} floor={:e} hinge_margin={:.3e} checkable={}",
            self.step, self.tolerance, self.floor, self.min_hinge_margin, self.checkable
        )?;
        write!(f, "result: {}", if self.passed() { "PASS" } else { "FAIL" })
    }
}

pub const DEFAULT_FD_STEP: f64 = 1e-5;
pub const DEFAULT_TOLERANCE: f64 = 1e-5;
pub const DEFAULT_FLOOR: f64 = 1e-4;
pub const HINGE_MARGIN: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckOptions {
    pub step: f64,
    pub tolerance: f64,
    pub floor: f64,
    /// Adds a perturbation to one analytic coordinate (negative control).
    pub corrupt: bool,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: DEFAULT_FD_STEP,
            tolerance: DEFAULT_TOLERANCE,
            floor: DEFAULT_FLOOR,
            corrupt: false,
        }
    }
}

/// Compares [`Objective::gradients`] with central differences of
/// [`Objective::total_loss`] on `batch`.
pub fn gradcheck(
    objective: &Objective<'_>,
    params: &PpnParams,
    batch: &[&LabeledExample],
    opts: &GradCheckOptions,
) -> Result<GradCheckReport> {
    let (_, mut analytic) = objective.gradients(params, batch)?;
    if opts.corrupt {
        analytic.w.as_mut_slice()[0] += 1e-3;
    }
    let numeric = finite_diff_grad(
        |p| objective.total_loss(p, batch).map(|l| l.total).unwrap_or(f64::NAN),
        params,
        opts.step,
    )?;
    let mut min_hinge_margin = f64::INFINITY;
    for ex in batch {
        min_hinge_margin = min_hinge_margin.min(objective.vis_cosine(params, ex)?.abs());
    }
    let checkable = objective.lambda2 == 0.0 || min_hinge_margin >= HINGE_MARGIN;

    let rows = PpnParams::TENSOR_NAMES
        .iter()
        .zip(analytic.tensors())
        .zip(numeric.tensors())
        .map(|((&name, a), n)| {
            let mut row = GradCheckRow {
                name,
                count: a.len(),
                max_rel_err: 0.0,
                max_abs_err: 0.0,
                worst_index: 0,
            };
            for (i, (&x, &y)) in a.iter().zip(n).enumerate() {
                let rel = relative_error(x, y, opts.floor);
                row.max_abs_err = row.max_abs_err.max((x - y).abs());
                if rel > row.max_rel_err || rel.is_nan() {
                    row.max_rel_err = rel;
                    row.worst_index = i;
                }
            }
            row
        })
        .collect();
    Ok(GradCheckReport {
        rows,
        step: opts.step,
        tolerance: opts.tolerance,
        floor: opts.floor,
        min_hinge_margin,
        checkable,
    })
}

/// Dimensions of a random gradient-check problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CheckDims {
    pub classes: usize,
    pub attributes: usize,
    pub embed_dim: usize,
    pub regions: usize,
    pub feature_dim: usize,
    pub batch: usize,
}

impl Default for CheckDims {
    fn default() -> Self {
        Self {
            classes: 5,
            attributes: 7,
            embed_dim: 11,
            regions: 3,
            feature_dim: 13,
            batch: 4,
        }
    }
}

/// A self-contained random problem: tensor, penalty, examples and parameters.
#[derive(Debug, Clone)]
pub struct GradCheckInstance {
    pub tensor: SemanticTensor,
    pub penalty: PenaltyVector,
    pub embeddings: AttributeEmbeddings,
    pub seen: Vec<usize>,
    pub examples: Vec<LabeledExample>,
    pub params: PpnParams,
}

fn uniform(rng: &mut SeededRng, r: usize, c: usize, lo: f64, hi: f64) -> Matrix {
    Matrix::from_fn(r, c, |_, _| rng.random_range(lo..hi))
}

impl GradCheckInstance {
    /// Draws a random instance. The last class is unseen, labels are seen, and
    /// one region of the first example is masked when `R > 1`. Draws with an
    /// example near the hinge kink are rejected and redrawn.
    pub fn random(dims: CheckDims, seed: u64) -> Result<Self> {
        if dims.classes < 2 || dims.batch == 0 || dims.regions == 0 {
            return Err(Error::Contract("gradcheck needs C >= 2, batch >= 1, R >= 1".into()));
        }
        let mut rng = seeded_rng(seed);
        for _ in 0..64 {
            let inst = Self::draw(dims, &mut rng)?;
            let obj = inst.objective(0.1, 0.1)?;
            let mut ok = true;
            for ex in &inst.examples {
                if obj.vis_cosine(&inst.params, ex)?.abs() < 10.0 * HINGE_MARGIN {
                    ok = false;
                }
            }
            if ok {
                return Ok(inst);
            }
        }
        Err(Error::GradCheck("could not draw an instance away from the hinge".into()))
    }

    fn draw(dims: CheckDims, rng: &mut SeededRng) -> Result<Self> {
        let CheckDims {
            classes: c,
            attributes: a,
            embed_dim: k,
            regions: r,
            feature_dim: d,
            batch,
        } = dims;
        let attrs = AttributeMatrix::new(uniform(rng, c, a, 0.0, 1.0))?;
        let embeddings = AttributeEmbeddings::normalized(uniform(rng, a, k, -1.0, 1.0))?;
        let tensor = build_semantic_tensor(&attrs, &embeddings)?;
        let penalty = compute_unseen_penalty(&attrs, &[c - 1])?;
        let seen: Vec<usize> = (0..c - 1).collect();
        let mut examples = Vec::with_capacity(batch);
        for i in 0..batch {
            let mut m = uniform(rng, r, d, -1.0, 1.0);
            for row in 0..r {
                let unit = l2_normalize(m.row(row));
                m.row_mut(row).copy_from_slice(&unit);
            }
            let mut mask = vec![true; r];
            if i == 0 && r > 1 {
                mask[r - 1] = false;
            }
            examples.push(LabeledExample::new(m, mask, rng.random_range(0..c - 1))?);
        }
        let params = PpnParams {
            alpha_weight: uniform(rng, a, d, -1.0, 1.0),
            alpha_bias: (0..a).map(|_| rng.random_range(-0.5..0.5)).collect(),
            w: uniform(rng, d, k, -1.0, 1.0),
            beta_weight: (0..d).map(|_| rng.random_range(-1.0..1.0)).collect(),
            beta_bias: rng.random_range(-0.5..0.5),
        };
        Ok(Self {
            tensor,
            penalty,
            embeddings,
            seen,
            examples,
            params,
        })
    }

    pub fn objective(&self, lambda1: f64, lambda2: f64) -> Result<Objective<'_>> {
        Objective::new(&self.tensor, &self.penalty, &self.embeddings, &self.seen, lambda1, lambda2)
    }

    pub fn batch(&self) -> Vec<&LabeledExample> {
        self.examples.iter().collect()
    }

    pub fn check(&self, lambda1: f64, lambda2: f64, opts: &GradCheckOptions) -> Result<GradCheckReport> {
        gradcheck(&self.objective(lambda1, lambda2)?, &self.params, &self.batch(), opts)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_gradient_is_two_p() {
        let mut p = PpnParams::zeros(2, 3, 2);
        for (t, s) in p.tensors_mut().into_iter().enumerate() {
            for (i, x) in s.iter_mut().enumerate() {
                *x = (t as f64 + 1.0) * 0.3 - i as f64 * 0.17;
            }
        }
        let f = |q: &PpnParams| q.tensors().iter().flat_map(|t| t.iter()).map(|x| x * x).sum::<f64>();
        let g = finite_diff_grad(f, &p, 1e-5).unwrap();
        for (gt, pt) in g.tensors().iter().zip(p.tensors()) {
            for (gi, pi) in gt.iter().zip(pt) {
                assert!((gi - 2.0 * pi).abs() <= 1e-8);
            }
        }
        assert!(finite_diff_grad(f, &p, 0.0).is_err());
    }

    #[test]
    fn step_halving_consistency() {
        let inst = GradCheckInstance::random(CheckDims::default(), 3).unwrap();
        let obj = inst.objective(0.1, 0.1).unwrap();
        let batch = inst.batch();
        let f = |p: &PpnParams| obj.total_loss(p, &batch).unwrap().total;
        let g5 = finite_diff_grad(f, &inst.params, 1e-5).unwrap();
        let g6 = finite_diff_grad(f, &inst.params, 1e-6).unwrap();
        for (a, b) in g5.tensors().iter().zip(g6.tensors()) {
            for (x, y) in a.iter().zip(b.iter()) {
                assert!(relative_error(*x, *y, 1e-3) <= 1e-4, "{x} vs {y}");
            }
        }
    }

    #[test]
    fn corrupted_gradient_fails() {
        let inst = GradCheckInstance::random(CheckDims::default(), 4).unwrap();
        let opts = GradCheckOptions {
            corrupt: true,
            ..GradCheckOptions::default()
        };
        let report = inst.check(0.1, 0.1, &opts).unwrap();
        assert!(!report.passed());
        let clean = inst.check(0.1, 0.1, &GradCheckOptions::default()).unwrap();
        assert!(clean.passed(), "{clean}");
    }

    #[test]
    fn hinge_boundary_is_flagged() {
        let mut inst = GradCheckInstance::random(CheckDims::default(), 5).unwrap();
        // W = 0 puts u at the origin, where the cosine is defined as 0.
        inst.params.w = Matrix::zeros(13, 11);
        let report = inst.check(0.1, 0.1, &GradCheckOptions::default()).unwrap();
        assert!(!report.checkable);
        assert!(!report.passed());
    }

    #[test]
    fn report_lists_every_parameter() {
        let inst = GradCheckInstance::random(CheckDims::default(), 6).unwrap();
        let report = inst.check(0.1, 0.1, &GradCheckOptions::default()).unwrap();
        let names: Vec<_> = report.rows.iter().map(|r| r.name).collect();
        assert_eq!(names, PpnParams::TENSOR_NAMES);
        let text = report.to_string();
        for n in PpnParams::TENSOR_NAMES {
            assert!(text.contains(n));
        }
        assert!(text.contains("max_rel_err"));
    }
}
