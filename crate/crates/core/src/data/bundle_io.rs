use std::path::Path;

use super::container::{ArrayData, ArrayEntry, Container};
use super::{AttributeEmbeddings, AttributeMatrix, DatasetBundle, LabeledExample, SplitSpec};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const BUNDLE_MAGIC: &str = "PPNB";
pub const BUNDLE_VERSION: u32 = 1;

const SPLIT_ARRAYS: [&str; 6] = [
    "seen_classes",
    "unseen_classes",
    "train",
    "test_seen",
    "test_unseen",
    "val",
];

fn to_u64(v: &[usize]) -> ArrayData {
    ArrayData::U64(v.iter().map(|&x| x as u64).collect())
}

/// Writes `bundle` as a `PPNB` container directory.
pub fn save_bundle(bundle: &DatasetBundle, dir: &Path) -> Result<()> {
    let d = bundle.dims();
    let n = bundle.examples().len();
    let mut c = Container::default();
    c.push_meta("classes", d.classes);
    c.push_meta("attributes", d.attributes);
    c.push_meta("embed_dim", d.embed_dim);
    c.push_meta("regions", d.regions);
    c.push_meta("feature_dim", d.feature_dim);
    c.push_meta("examples", n);
    c.push_meta("preprocessed", 1);

    let mut features = Vec::with_capacity(n * d.regions * d.feature_dim);
    let mut mask = Vec::with_capacity(n * d.regions);
    for ex in bundle.examples() {
        features.extend_from_slice(ex.regions.as_slice());
        mask.extend(ex.mask.iter().map(|&m| m as u8));
    }
    let labels: Vec<usize> = bundle.examples().iter().map(|e| e.label).collect();
    c.push_array("features", vec![n, d.regions, d.feature_dim], ArrayData::F64(features));
    c.push_array("mask", vec![n, d.regions], ArrayData::U8(mask));
    c.push_array("labels", vec![n], to_u64(&labels));
    c.push_array(
        "attributes",
        vec![d.classes, d.attributes],
        ArrayData::F64(bundle.attributes().values().as_slice().to_vec()),
    );
    c.push_array(
        "embeddings",
        vec![d.attributes, d.embed_dim],
        ArrayData::F64(bundle.embeddings().vectors().as_slice().to_vec()),
    );
    let s = bundle.splits();
    let lists: [&[usize]; 6] = [
        &s.seen_classes,
        &s.unseen_classes,
        &s.train,
        &s.test_seen,
        &s.test_unseen,
        &s.val,
    ];
    for (name, list) in SPLIT_ARRAYS.iter().zip(lists) {
        c.push_array(name, vec![list.len()], to_u64(list));
    }
    c.push_text("class_names", bundle.class_names().to_vec());
    c.push_text("attribute_names", bundle.attribute_names().to_vec());
    c.write(dir, BUNDLE_MAGIC, BUNDLE_VERSION)
}

fn meta_usize(c: &Container, dir: &Path, key: &str) -> Result<usize> {
    c.meta(key)
        .and_then(|v| v.trim().parse().ok())
        .ok_or_else(|| Error::Manifest {
            path: dir.to_path_buf(),
            msg: format!("missing or malformed meta `{key}`"),
        })
}

fn require<'a>(c: &'a Container, name: &str, shape: &[usize]) -> Result<&'a ArrayEntry> {
    let entry = c.array(name).ok_or_else(|| Error::ArrayShape {
        name: name.to_string(),
        msg: "missing from manifest".into(),
    })?;
    if entry.shape != shape {
        return Err(Error::ArrayShape {
            name: name.to_string(),
            msg: format!("shape {:?} disagrees with manifest dims {:?}", entry.shape, shape),
        });
    }
    Ok(entry)
}

fn f64s(e: &ArrayEntry) -> Result<&[f64]> {
    match &e.data {
        ArrayData::F64(v) => Ok(v),
        _ => Err(Error::ArrayShape {
            name: e.name.clone(),
            msg: "expected f64 elements".into(),
        }),
    }
}

fn usizes(e: &ArrayEntry) -> Result<Vec<usize>> {
    match &e.data {
        ArrayData::U64(v) => v
            .iter()
            .map(|&x| usize::try_from(x).map_err(|_| Error::ArrayShape {
                name: e.name.clone(),
                msg: format!("index {x} does not fit in usize"),
            }))
            .collect(),
        _ => Err(Error::ArrayShape {
            name: e.name.clone(),
            msg: "expected u64 elements".into(),
        }),
    }
}

/// Reads a `PPNB` container. Bundles not flagged `preprocessed 1` are run
/// through [`DatasetBundle::ingest`].
pub fn load_bundle(dir: &Path) -> Result<DatasetBundle> {
    let c = Container::read(dir, BUNDLE_MAGIC, BUNDLE_VERSION)?;
    let classes = meta_usize(&c, dir, "classes")?;
    let attributes = meta_usize(&c, dir, "attributes")?;
    let embed_dim = meta_usize(&c, dir, "embed_dim")?;
    let regions = meta_usize(&c, dir, "regions")?;
    let feature_dim = meta_usize(&c, dir, "feature_dim")?;
    let n = meta_usize(&c, dir, "examples")?;
    let preprocessed = c.meta("preprocessed").map(str::trim) == Some("1");

    let features = f64s(require(&c, "features", &[n, regions, feature_dim])?)?;
    let mask = match &require(&c, "mask", &[n, regions])?.data {
        ArrayData::U8(v) => v.clone(),
        _ => {
            return Err(Error::ArrayShape {
                name: "mask".into(),
                msg: "expected u8 elements".into(),
            })
        }
    };
    if mask.iter().any(|&m| m > 1) {
        return Err(Error::ArrayShape {
            name: "mask".into(),
            msg: "mask entries must be 0 or 1".into(),
        });
    }
    let labels = usizes(require(&c, "labels", &[n])?)?;
    let priors = Matrix::from_vec(
        classes,
        attributes,
        f64s(require(&c, "attributes", &[classes, attributes])?)?.to_vec(),
    )?;
    let emb = Matrix::from_vec(
        attributes,
        embed_dim,
        f64s(require(&c, "embeddings", &[attributes, embed_dim])?)?.to_vec(),
    )?;

    let mut lists = Vec::with_capacity(SPLIT_ARRAYS.len());
    for name in SPLIT_ARRAYS {
        let e = c.array(name).ok_or_else(|| Error::ArrayShape {
            name: name.to_string(),
            msg: "missing from manifest".into(),
        })?;
        if e.shape.len() != 1 {
            return Err(Error::ArrayShape {
                name: name.to_string(),
                msg: "split lists must be one-dimensional".into(),
            });
        }
        lists.push(usizes(e)?);
    }
    let mut lists = lists.into_iter();
    let splits = SplitSpec {
        seen_classes: lists.next().unwrap(),
        unseen_classes: lists.next().unwrap(),
        train: lists.next().unwrap(),
        test_seen: lists.next().unwrap(),
        test_unseen: lists.next().unwrap(),
        val: lists.next().unwrap(),
    };

    let names = |key: &str, len: usize| -> Result<Vec<String>> {
        let v = c.text(key).ok_or_else(|| Error::ArrayShape {
            name: key.to_string(),
            msg: "missing from manifest".into(),
        })?;
        if v.len() != len {
            return Err(Error::ArrayShape {
                name: key.to_string(),
                msg: format!("{} names for {len} entries", v.len()),
            });
        }
        Ok(v.to_vec())
    };
    let class_names = names("class_names", classes)?;
    let attribute_names = names("attribute_names", attributes)?;

    let stride = regions * feature_dim;
    let mut examples = Vec::with_capacity(n);
    for i in 0..n {
        let m = Matrix::from_vec(regions, feature_dim, features[i * stride..(i + 1) * stride].to_vec())?;
        let valid = mask[i * regions..(i + 1) * regions].iter().map(|&b| b == 1).collect();
        let ex = LabeledExample::new(m, valid, labels[i]).map_err(|e| Error::ArrayShape {
            name: "features".into(),
            msg: format!("example {i}: {e}"),
        })?;
        examples.push(ex);
    }

    if preprocessed {
        DatasetBundle::from_parts(
            examples,
            AttributeMatrix::new(priors)?,
            AttributeEmbeddings::new(emb)?,
            splits,
            class_names,
            attribute_names,
        )
    } else {
        DatasetBundle::ingest(examples, priors, emb, splits, class_names, attribute_names)
    }
}
