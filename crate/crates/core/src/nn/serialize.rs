//! Tensor archives: a plain-text manifest followed by little-endian `f64`
//! payloads and a SHA-256 trailer.
//!
//! ```text
//! a2p-tensors 1
//! meta <key> <value>
//! blob <name> <byte-length>
//! tensor <name> <rows> <cols>
//! end
//! <blob bytes, in manifest order><tensor f64 LE, row-major, in manifest order>
//! <32-byte SHA-256 of everything above>
//! ```

use std::io::Write;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::graph::Tensor;
use super::mlp::{Activation, MlpParams, Parameters};
use crate::error::{Error, Result};

const MAGIC: &str = "a2p-tensors 1";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TensorArchive {
    pub meta: Vec<(String, String)>,
    pub blobs: Vec<(String, Vec<u8>)>,
    pub tensors: Vec<(String, Tensor)>,
}

fn check_token(kind: &str, s: &str) -> Result<()> {
    if s.is_empty() || s.contains(char::is_whitespace) {
        return Err(Error::config(format!("{kind} `{s}` must be a non-empty token")));
    }
    Ok(())
}

impl TensorArchive {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push_meta(&mut self, key: &str, value: impl ToString) {
        self.meta.push((key.to_owned(), value.to_string()));
    }

    pub fn push_tensor(&mut self, name: &str, t: Tensor) {
        self.tensors.push((name.to_owned(), t));
    }

    pub fn push_blob(&mut self, name: &str, bytes: Vec<u8>) {
        self.blobs.push((name.to_owned(), bytes));
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn blob(&self, name: &str) -> Option<&[u8]> {
        self.blobs.iter().find(|(n, _)| n == name).map(|(_, b)| b.as_slice())
    }

    /// Stores an MLP under `prefix`.
    pub fn push_mlp(&mut self, prefix: &str, net: &MlpParams) {
        let sizes: Vec<String> = net.layer_sizes().iter().map(|s| s.to_string()).collect();
        self.push_meta(&format!("{prefix}.layers"), sizes.join(","));
        self.push_meta(&format!("{prefix}.activation"), net.activation());
        for (i, t) in net.tensors().into_iter().enumerate() {
            let kind = if i % 2 == 0 { "w" } else { "b" };
            self.push_tensor(&format!("{prefix}.{kind}{}", i / 2), t.clone());
        }
    }

    pub fn mlp(&self, prefix: &str) -> Result<MlpParams> {
        let missing = |what: String| Error::config(format!("archive is missing {what}"));
        let sizes: Vec<usize> = self
            .meta(&format!("{prefix}.layers"))
            .ok_or_else(|| missing(format!("{prefix}.layers")))?
            .split(',')
            .map(|s| {
                s.parse()
                    .map_err(|_| Error::config(format!("bad layer size `{s}` in {prefix}")))
            })
            .collect::<Result<_>>()?;
        let activation: Activation = self
            .meta(&format!("{prefix}.activation"))
            .ok_or_else(|| missing(format!("{prefix}.activation")))?
            .parse()?;
        let n = sizes.len().saturating_sub(1);
        let mut weights = Vec::with_capacity(n);
        let mut biases = Vec::with_capacity(n);
        for i in 0..n {
            let w = format!("{prefix}.w{i}");
            let b = format!("{prefix}.b{i}");
            weights.push(self.tensor(&w).ok_or_else(|| missing(w))?.clone());
            biases.push(self.tensor(&b).ok_or_else(|| missing(b))?.clone());
        }
        MlpParams::from_tensors(&sizes, activation, weights, biases)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        writeln!(out, "{MAGIC}")?;
        for (k, v) in &self.meta {
            check_token("meta key", k)?;
            if v.contains('\n') {
                return Err(Error::config(format!("meta value for `{k}` contains a newline")));
            }
            writeln!(out, "meta {k} {v}")?;
        }
        for (name, bytes) in &self.blobs {
            check_token("blob name", name)?;
            writeln!(out, "blob {name} {}", bytes.len())?;
        }
        for (name, t) in &self.tensors {
            check_token("tensor name", name)?;
            writeln!(out, "tensor {name} {} {}", t.nrows(), t.ncols())?;
        }
        writeln!(out, "end")?;
        for (_, bytes) in &self.blobs {
            out.extend_from_slice(bytes);
        }
        for (_, t) in &self.tensors {
            for v in t.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        Ok(out)
    }

    /// Parses an archive; `origin` only labels errors.
    pub fn from_bytes(bytes: &[u8], origin: &Path) -> Result<Self> {
        let corrupt = |reason: String| Error::Corrupt {
            path: origin.to_path_buf(),
            reason,
        };
        if bytes.len() < 32 {
            return Err(corrupt("file shorter than its checksum".into()));
        }
        let (body, trailer) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != trailer {
            return Err(corrupt("checksum mismatch (truncated or modified)".into()));
        }

        let mut archive = TensorArchive::new();
        let mut blob_sizes = Vec::new();
        let mut tensor_shapes = Vec::new();
        let mut pos = 0usize;
        let mut first = true;
        loop {
            let nl = body[pos..]
                .iter()
                .position(|&b| b == b'\n')
                .ok_or_else(|| corrupt("manifest is not terminated".into()))?;
            let line =
                std::str::from_utf8(&body[pos..pos + nl]).map_err(|_| corrupt("manifest is not UTF-8".into()))?;
            pos += nl + 1;
            if first {
                if line != MAGIC {
                    return Err(corrupt(format!("bad header `{line}`")));
                }
                first = false;
                continue;
            }
            if line == "end" {
                break;
            }
            let mut parts = line.splitn(2, ' ');
            let kind = parts.next().unwrap_or_default();
            let rest = parts.next().unwrap_or_default();
            match kind {
                "meta" => {
                    let (k, v) = rest.split_once(' ').unwrap_or((rest, ""));
                    archive.meta.push((k.to_owned(), v.to_owned()));
                }
                "blob" => {
                    let (name, len) = rest
                        .split_once(' ')
                        .ok_or_else(|| corrupt(format!("bad blob line `{line}`")))?;
                    let len: usize = len
                        .parse()
                        .map_err(|_| corrupt(format!("bad blob length in `{line}`")))?;
                    blob_sizes.push((name.to_owned(), len));
                }
                "tensor" => {
                    let f: Vec<&str> = rest.split(' ').collect();
                    if f.len() != 3 {
                        return Err(corrupt(format!("bad tensor line `{line}`")));
                    }
                    let rows: usize = f[1].parse().map_err(|_| corrupt(format!("bad shape in `{line}`")))?;
                    let cols: usize = f[2].parse().map_err(|_| corrupt(format!("bad shape in `{line}`")))?;
                    tensor_shapes.push((f[0].to_owned(), rows, cols));
                }
                _ => return Err(corrupt(format!("unknown manifest entry `{line}`"))),
            }
        }

        let blob_total: usize = blob_sizes.iter().map(|(_, n)| n).sum();
        let tensor_total: usize = tensor_shapes.iter().map(|(_, r, c)| r * c * 8).sum();
        if body.len() - pos != blob_total + tensor_total {
            return Err(corrupt(format!(
                "payload is {} bytes, manifest describes {}",
                body.len() - pos,
                blob_total + tensor_total
            )));
        }
        for (name, len) in blob_sizes {
            archive.blobs.push((name, body[pos..pos + len].to_vec()));
            pos += len;
        }
        for (name, rows, cols) in tensor_shapes {
            let n = rows * cols;
            let data: Vec<f64> = body[pos..pos + 8 * n]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
                .collect();
            pos += 8 * n;
            let t = Tensor::from_shape_vec((rows, cols), data).map_err(|e| corrupt(e.to_string()))?;
            archive.tensors.push((name, t));
        }
        Ok(archive)
    }

    /// Writes atomically through a sibling temporary file.
    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, bytes)?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        Self::from_bytes(&bytes, path)
    }
}
