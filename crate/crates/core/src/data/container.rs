//! Directory container shared by dataset bundles and checkpoints.
//!
//! A container is a directory holding `manifest.txt` plus one raw file per
//! array or string list:
//!
//! ```text
//! PPNB 1
//! byte_order little
//! meta <key> <value...>
//! array <name> <f64|u64|u8> <d0>x<d1>x... <file>
//! text <name> <count> <file>
//! ```
//!
//! The first line is `<magic> <version>`. Arrays are raw little-endian,
//! row-major, with no padding or header; a zero-length dimension gives an
//! empty file. Text files hold one UTF-8 entry per line, each terminated by
//! `\n`. Lines appear in insertion order, so writing the same container twice
//! produces identical bytes.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.txt";

#[derive(Debug, Clone, PartialEq)]
pub enum ArrayData {
    F64(Vec<f64>),
    U64(Vec<u64>),
    U8(Vec<u8>),
}

impl ArrayData {
    fn dtype(&self) -> &'static str {
        match self {
            ArrayData::F64(_) => "f64",
            ArrayData::U64(_) => "u64",
            ArrayData::U8(_) => "u8",
        }
    }

    fn len(&self) -> usize {
        match self {
            ArrayData::F64(v) => v.len(),
            ArrayData::U64(v) => v.len(),
            ArrayData::U8(v) => v.len(),
        }
    }

    fn to_bytes(&self) -> Vec<u8> {
        match self {
            ArrayData::F64(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
            ArrayData::U64(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
            ArrayData::U8(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArrayEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: ArrayData,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Container {
    pub meta: Vec<(String, String)>,
    pub arrays: Vec<ArrayEntry>,
    pub texts: Vec<(String, Vec<String>)>,
}

fn valid_name(name: &str) -> bool {
    !name.is_empty()
        && name
            .bytes()
            .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_')
}

impl Container {
    pub fn push_meta(&mut self, key: &str, value: impl ToString) {
        self.meta.push((key.to_string(), value.to_string()));
    }

    pub fn push_array(&mut self, name: &str, shape: Vec<usize>, data: ArrayData) {
        self.arrays.push(ArrayEntry {
            name: name.to_string(),
            shape,
            data,
        });
    }

    pub fn push_text(&mut self, name: &str, lines: Vec<String>) {
        self.texts.push((name.to_string(), lines));
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn array(&self, name: &str) -> Option<&ArrayEntry> {
        self.arrays.iter().find(|a| a.name == name)
    }

    pub fn text(&self, name: &str) -> Option<&[String]> {
        self.texts
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
    }

    /// Writes the container into `dir`, creating it if needed.
    pub fn write(&self, dir: &Path, magic: &str, version: u32) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut manifest = format!("{magic} {version}\nbyte_order little\n");
        for (k, v) in &self.meta {
            if !valid_name(k) || v.contains('\n') {
                return Err(Error::Contract(format!("invalid meta entry `{k}`")));
            }
            manifest.push_str(&format!("meta {k} {v}\n"));
        }
        for a in &self.arrays {
            if !valid_name(&a.name) {
                return Err(Error::Contract(format!("invalid array name `{}`", a.name)));
            }
            let expected: usize = a.shape.iter().product();
            if expected != a.data.len() {
                return Err(Error::ArrayShape {
                    name: a.name.clone(),
                    msg: format!("shape {:?} needs {expected} elements, have {}", a.shape, a.data.len()),
                });
            }
            if let ArrayData::F64(v) = &a.data {
                if !v.iter().all(|x| x.is_finite()) {
                    return Err(Error::NonFinite(format!("array `{}`", a.name)));
                }
            }
            let file = format!("{}.bin", a.name);
            manifest.push_str(&format!(
                "array {} {} {} {file}\n",
                a.name,
                a.data.dtype(),
                shape_string(&a.shape)
            ));
            write_file(&dir.join(&file), &a.data.to_bytes())?;
        }
        for (name, lines) in &self.texts {
            if !valid_name(name) {
                return Err(Error::Contract(format!("invalid text name `{name}`")));
            }
            let mut body = String::new();
            for l in lines {
                if l.contains('\n') {
                    return Err(Error::Contract(format!("entry in `{name}` contains a newline")));
                }
                body.push_str(l);
                body.push('\n');
            }
            let file = format!("{name}.txt");
            manifest.push_str(&format!("text {name} {} {file}\n", lines.len()));
            write_file(&dir.join(&file), body.as_bytes())?;
        }
        write_file(&dir.join(MANIFEST_FILE), manifest.as_bytes())
    }

    /// Reads and validates a container; every array is checked against its
    /// manifest shape and every f64 element for finiteness.
    pub fn read(dir: &Path, magic: &'static str, version: u32) -> Result<Self> {
        let manifest_path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
        let mut lines = text.lines();
        let header = lines.next().unwrap_or("");
        let mut head = header.split_whitespace();
        let found_magic = head.next().unwrap_or("");
        if found_magic != magic {
            return Err(Error::BadMagic {
                path: manifest_path,
                expected: magic,
                found: found_magic.to_string(),
            });
        }
        let found_version: u32 = head
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| manifest_err(&manifest_path, "missing or malformed version"))?;
        if found_version != version {
            return Err(Error::Version {
                path: manifest_path,
                found: found_version,
                supported: version,
            });
        }

        let mut out = Container::default();
        let mut saw_byte_order = false;
        for (lineno, line) in lines.enumerate() {
            let lineno = lineno + 2;
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.splitn(2, ' ');
            let kind = parts.next().unwrap_or("");
            let rest = parts.next().unwrap_or("");
            match kind {
                "byte_order" => {
                    if rest != "little" {
                        return Err(manifest_err(&manifest_path, format!("unsupported byte order `{rest}`")));
                    }
                    saw_byte_order = true;
                }
                "meta" => {
                    let (k, v) = rest.split_once(' ').unwrap_or((rest, ""));
                    if !valid_name(k) {
                        return Err(manifest_err(&manifest_path, format!("line {lineno}: bad meta key")));
                    }
                    out.meta.push((k.to_string(), v.to_string()));
                }
                "array" => {
                    let f: Vec<&str> = rest.split(' ').collect();
                    if f.len() != 4 || !valid_name(f[0]) {
                        return Err(manifest_err(&manifest_path, format!("line {lineno}: malformed array entry")));
                    }
                    let shape = parse_shape(f[2])
                        .ok_or_else(|| manifest_err(&manifest_path, format!("line {lineno}: bad shape `{}`", f[2])))?;
                    let data = read_array(dir, f[0], f[1], &shape, f[3])?;
                    out.arrays.push(ArrayEntry {
                        name: f[0].to_string(),
                        shape,
                        data,
                    });
                }
                "text" => {
                    let f: Vec<&str> = rest.split(' ').collect();
                    if f.len() != 3 || !valid_name(f[0]) {
                        return Err(manifest_err(&manifest_path, format!("line {lineno}: malformed text entry")));
                    }
                    let count: usize = f[1]
                        .parse()
                        .map_err(|_| manifest_err(&manifest_path, format!("line {lineno}: bad count")))?;
                    let path = checked_join(dir, f[2])?;
                    let body = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                    let entries: Vec<String> = body.split_terminator('\n').map(str::to_string).collect();
                    if entries.len() != count || (!body.is_empty() && !body.ends_with('\n')) {
                        return Err(Error::ArrayShape {
                            name: f[0].to_string(),
                            msg: format!("manifest lists {count} entries, file has {}", entries.len()),
                        });
                    }
                    out.texts.push((f[0].to_string(), entries));
                }
                other => {
                    return Err(manifest_err(&manifest_path, format!("line {lineno}: unknown entry `{other}`")));
                }
            }
        }
        if !saw_byte_order {
            return Err(manifest_err(&manifest_path, "missing byte_order line"));
        }
        Ok(out)
    }
}

fn manifest_err(path: &Path, msg: impl Into<String>) -> Error {
    Error::Manifest {
        path: path.to_path_buf(),
        msg: msg.into(),
    }
}

fn shape_string(shape: &[usize]) -> String {
    shape.iter().map(usize::to_string).collect::<Vec<_>>().join("x")
}

fn parse_shape(s: &str) -> Option<Vec<usize>> {
    s.split('x').map(|d| d.parse().ok()).collect()
}

fn checked_join(dir: &Path, file: &str) -> Result<PathBuf> {
    if file.contains('/') || file.contains('\\') || file == ".." || file == "." {
        return Err(manifest_err(&dir.join(MANIFEST_FILE), format!("file name `{file}` escapes the container")));
    }
    Ok(dir.join(file))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_array(dir: &Path, name: &str, dtype: &str, shape: &[usize], file: &str) -> Result<ArrayData> {
    let path = checked_join(dir, file)?;
    let elem = match dtype {
        "f64" | "u64" => 8,
        "u8" => 1,
        other => {
            return Err(manifest_err(&dir.join(MANIFEST_FILE), format!("array `{name}`: unknown dtype `{other}`")));
        }
    };
    let count = shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::ArrayShape {
            name: name.to_string(),
            msg: "shape overflows".into(),
        })?;
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    if Some(bytes.len()) != count.checked_mul(elem) {
        return Err(Error::ArrayShape {
            name: name.to_string(),
            msg: format!("expected {count} {dtype} elements, file holds {} bytes", bytes.len()),
        });
    }
    Ok(match dtype {
        "f64" => {
            let v: Vec<f64> = bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            if !v.iter().all(|x| x.is_finite()) {
                return Err(Error::NonFinite(format!("array `{name}`")));
            }
            ArrayData::F64(v)
        }
        "u64" => ArrayData::U64(
            bytes
                .chunks_exact(8)
                .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        ),
        _ => ArrayData::U8(bytes),
    })
}
