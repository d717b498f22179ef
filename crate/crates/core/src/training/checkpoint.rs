use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use rand_chacha::rand_core::SeedableRng;

use super::loss::LossBreakdown;
use super::{EarlyStop, TrainConfig};
use crate::data::container::{ArrayData, ArrayEntry, Container};
use crate::error::{Error, Result};
use crate::linalg::{Matrix, SeededRng};
use crate::model::PpnParams;

pub const CHECKPOINT_MAGIC: &str = "PPNC";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Header of the tab-separated training log. Missing values are written `-`.
pub const LOG_HEADER: &str = "epoch\tloss_total\tloss_ce\tloss_attr\tloss_vis\tval_t1\tval_u\tval_s\tval_h";

/// One epoch of the training log. Losses are means over the epoch's examples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub epoch: usize,
    pub loss: LossBreakdown,
    pub val_t1: Option<f64>,
    pub val_u: Option<f64>,
    pub val_s: Option<f64>,
    pub val_h: Option<f64>,
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| x.to_string())
}

impl LogRow {
    pub fn to_tsv(&self) -> String {
        let l = &self.loss;
        format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            self.epoch,
            l.total,
            l.ce,
            l.attr,
            l.vis,
            opt(self.val_t1),
            opt(self.val_u),
            opt(self.val_s),
            opt(self.val_h)
        )
    }

    pub fn parse(line: &str) -> Result<Self> {
        let bad = || Error::Contract(format!("malformed log row `{line}`"));
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 9 {
            return Err(bad());
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
        let opt = |s: &str| if s == "-" { Ok(None) } else { num(s).map(Some) };
        Ok(Self {
            epoch: f[0].parse().map_err(|_| bad())?,
            loss: LossBreakdown {
                total: num(f[1])?,
                ce: num(f[2])?,
                attr: num(f[3])?,
                vis: num(f[4])?,
            },
            val_t1: opt(f[5])?,
            val_u: opt(f[6])?,
            val_s: opt(f[7])?,
            val_h: opt(f[8])?,
        })
    }
}

/// Parameters plus everything needed to reproduce or continue the run.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: PpnParams,
    pub config: TrainConfig,
    /// Completed epochs; 0 is the initialization.
    pub epoch: usize,
    /// Position of the training RNG stream (seeded from `config.seed`).
    pub rng_word_pos: u128,
    pub log: Vec<LogRow>,
}

impl Checkpoint {
    /// The training RNG restored to the saved position.
    pub fn rng(&self) -> SeededRng {
        let mut rng = SeededRng::seed_from_u64(self.config.seed);
        rng.set_word_pos(self.rng_word_pos);
        rng
    }

    /// Log as delimited text, header first.
    pub fn log_tsv(&self) -> String {
        let mut out = String::from(LOG_HEADER);
        out.push('\n');
        for r in &self.log {
            let _ = writeln!(out, "{}", r.to_tsv());
        }
        out
    }
}

fn meta<T: FromStr>(c: &Container, dir: &Path, key: &str) -> Result<T> {
    c.meta(key)
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::Manifest {
            path: dir.to_path_buf(),
            msg: format!("missing or malformed meta `{key}`"),
        })
}

fn f64_array<'a>(c: &'a Container, name: &str, len: usize) -> Result<&'a [f64]> {
    let e: &ArrayEntry = c.array(name).ok_or_else(|| Error::ArrayShape {
        name: name.to_string(),
        msg: "missing from manifest".into(),
    })?;
    match &e.data {
        ArrayData::F64(v) if v.len() == len => Ok(v),
        ArrayData::F64(v) => Err(Error::ArrayShape {
            name: name.to_string(),
            msg: format!("expected {len} elements, found {}", v.len()),
        }),
        _ => Err(Error::ArrayShape {
            name: name.to_string(),
            msg: "expected f64 elements".into(),
        }),
    }
}

/// Writes a `PPNC` container. Floats are stored either as raw bits or in
/// shortest round-trip decimal form, so loading gives back identical values.
pub fn save_checkpoint(ckpt: &Checkpoint, dir: &Path) -> Result<()> {
    let p = &ckpt.params;
    let cfg = &ckpt.config;
    let mut c = Container::default();
    c.push_meta("attributes", p.attributes());
    c.push_meta("feature_dim", p.feature_dim());
    c.push_meta("embed_dim", p.embed_dim());
    c.push_meta("epoch", ckpt.epoch);
    c.push_meta("seed", cfg.seed);
    c.push_meta("rng_word_pos", ckpt.rng_word_pos);
    c.push_meta("lambda1", cfg.lambda1);
    c.push_meta("lambda2", cfg.lambda2);
    c.push_meta("learning_rate", cfg.learning_rate);
    c.push_meta("batch_size", cfg.batch_size);
    c.push_meta("epochs", cfg.epochs);
    c.push_meta("early_stop", cfg.early_stop.as_str());
    c.push_meta("patience", cfg.patience);
    c.push_meta("attribute_norm", cfg.attribute_norm.as_str());
    let (a, d, k) = (p.attributes(), p.feature_dim(), p.embed_dim());
    c.push_array("alpha_weight", vec![a, d], ArrayData::F64(p.alpha_weight.as_slice().to_vec()));
    c.push_array("alpha_bias", vec![a], ArrayData::F64(p.alpha_bias.clone()));
    c.push_array("w", vec![d, k], ArrayData::F64(p.w.as_slice().to_vec()));
    c.push_array("beta_weight", vec![d], ArrayData::F64(p.beta_weight.clone()));
    c.push_array("beta_bias", vec![1], ArrayData::F64(vec![p.beta_bias]));
    let mut log = vec![LOG_HEADER.to_string()];
    log.extend(ckpt.log.iter().map(LogRow::to_tsv));
    c.push_text("log", log);
    c.write(dir, CHECKPOINT_MAGIC, CHECKPOINT_VERSION)
}

pub fn load_checkpoint(dir: &Path) -> Result<Checkpoint> {
    let c = Container::read(dir, CHECKPOINT_MAGIC, CHECKPOINT_VERSION)?;
    let a: usize = meta(&c, dir, "attributes")?;
    let d: usize = meta(&c, dir, "feature_dim")?;
    let k: usize = meta(&c, dir, "embed_dim")?;
    let early: String = meta(&c, dir, "early_stop")?;
    let norm: String = meta(&c, dir, "attribute_norm")?;
    let config = TrainConfig {
        lambda1: meta(&c, dir, "lambda1")?,
        lambda2: meta(&c, dir, "lambda2")?,
        learning_rate: meta(&c, dir, "learning_rate")?,
        batch_size: meta(&c, dir, "batch_size")?,
        epochs: meta(&c, dir, "epochs")?,
        seed: meta(&c, dir, "seed")?,
        early_stop: early.parse::<EarlyStop>()?,
        patience: meta(&c, dir, "patience")?,
        attribute_norm: norm.parse()?,
    };
    let params = PpnParams {
        alpha_weight: Matrix::from_vec(a, d, f64_array(&c, "alpha_weight", a * d)?.to_vec())?,
        alpha_bias: f64_array(&c, "alpha_bias", a)?.to_vec(),
        w: Matrix::from_vec(d, k, f64_array(&c, "w", d * k)?.to_vec())?,
        beta_weight: f64_array(&c, "beta_weight", d)?.to_vec(),
        beta_bias: f64_array(&c, "beta_bias", 1)?[0],
    };
    let lines = c.text("log").ok_or_else(|| Error::ArrayShape {
        name: "log".into(),
        msg: "missing from manifest".into(),
    })?;
    if lines.first().map(String::as_str) != Some(LOG_HEADER) {
        return Err(Error::Manifest {
            path: dir.to_path_buf(),
            msg: "training log header is missing or unexpected".into(),
        });
    }
    let log = lines[1..].iter().map(|l| LogRow::parse(l)).collect::<Result<_>>()?;
    Ok(Checkpoint {
        params,
        config,
        epoch: meta(&c, dir, "epoch")?,
        rng_word_pos: meta(&c, dir, "rng_word_pos")?,
        log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{AttributeNorm, Dims};
    use crate::linalg::seeded_rng;
    use rand::Rng;

    fn sample() -> Checkpoint {
        let dims = Dims {
            classes: 4,
            attributes: 5,
            embed_dim: 3,
            regions: 2,
            feature_dim: 6,
        };
        let mut rng = seeded_rng(9);
        let mut params = PpnParams::init(&dims, &mut rng);
        params.beta_bias = 0.1 + 0.2;
        params.alpha_bias[2] = -1e-300;
        let _: f64 = rng.random();
        Checkpoint {
            params,
            config: TrainConfig {
                seed: 9,
                lambda1: 1.0 / 3.0,
                attribute_norm: AttributeNorm::PriorRows,
                early_stop: EarlyStop::ValT1,
                ..Default::default()
            },
            epoch: 2,
            rng_word_pos: rng.get_word_pos(),
            log: vec![
                LogRow {
                    epoch: 1,
                    loss: LossBreakdown {
                        total: 1.0 / 7.0,
                        ce: 0.1,
                        attr: 2e-17,
                        vis: 0.0,
                    },
                    val_t1: Some(0.5),
                    val_u: None,
                    val_s: None,
                    val_h: None,
                },
                LogRow {
                    epoch: 2,
                    loss: LossBreakdown::default(),
                    val_t1: Some(std::f64::consts::PI),
                    val_u: Some(0.25),
                    val_s: Some(0.75),
                    val_h: Some(0.375),
                },
            ],
        }
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let ck = sample();
        save_checkpoint(&ck, dir.path()).unwrap();
        let back = load_checkpoint(dir.path()).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.params.beta_bias.to_bits(), ck.params.beta_bias.to_bits());
        assert_eq!(back.config.lambda1.to_bits(), ck.config.lambda1.to_bits());

        let dir2 = tempfile::tempdir().unwrap();
        save_checkpoint(&back, dir2.path()).unwrap();
        for entry in std::fs::read_dir(dir.path()).unwrap() {
            let name = entry.unwrap().file_name();
            let a = std::fs::read(dir.path().join(&name)).unwrap();
            let b = std::fs::read(dir2.path().join(&name)).unwrap();
            assert_eq!(a, b, "{name:?} differs");
        }
    }

    #[test]
    fn rng_position_restores() {
        let mut direct = seeded_rng(9);
        for _ in 0..37 {
            let _: u64 = direct.random();
        }
        let ck = Checkpoint {
            rng_word_pos: direct.get_word_pos(),
            ..sample()
        };
        let mut restored = ck.rng();
        for _ in 0..5 {
            assert_eq!(direct.random::<u64>(), restored.random::<u64>());
        }
    }

    #[test]
    fn bundle_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        Container::default().write(dir.path(), "PPNB", 1).unwrap();
        assert!(matches!(load_checkpoint(dir.path()), Err(Error::BadMagic { .. })));
    }

    #[test]
    fn log_text_has_header() {
        let t = sample().log_tsv();
        let mut lines = t.lines();
        assert_eq!(lines.next(), Some(LOG_HEADER));
        assert!(lines.next().unwrap().ends_with("\t-\t-\t-"));
    }
}
