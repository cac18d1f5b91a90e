//! Dataset ingestion (IDX) and synthetic generators.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, Normal, StandardNormal};
use sparsepush::optimize::{ClassificationData, RegressionData};
use sparsepush::rng::{stream, Domain};

use crate::error::{HarnessError, Result};

const IDX_IMAGES: u32 = 0x0000_0803;
const IDX_LABELS: u32 = 0x0000_0801;

/// Row-major feature matrix with integer labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: DMatrix<f64>,
    pub labels: Vec<usize>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Deal items round-robin to `n` nodes.
    pub fn partition(&self, n: usize) -> Vec<ClassificationData> {
        (0..n)
            .map(|node| {
                let rows: Vec<usize> = (node..self.len()).step_by(n).collect();
                ClassificationData {
                    features: self.features.select_rows(&rows),
                    labels: rows.iter().map(|&r| self.labels[r]).collect(),
                }
            })
            .collect()
    }
}

struct Cursor<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, len: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(len).filter(|&e| e <= self.bytes.len()).ok_or_else(|| HarnessError::Idx {
            path: self.path.to_path_buf(),
            msg: format!("truncated file: need {len} bytes of {what} at offset {}, file has {}", self.pos, self.bytes.len()),
        })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }
}

/// Header plus payload of one IDX file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxFile {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

/// Parse an unsigned-byte IDX file with the given magic number.
pub fn parse_idx(bytes: &[u8], expected_magic: u32, path: &Path) -> Result<IdxFile> {
    let mut cur = Cursor { path, bytes, pos: 0 };
    let magic = cur.u32("magic number")?;
    if magic != expected_magic {
        return Err(HarnessError::Idx {
            path: path.to_path_buf(),
            msg: format!("bad magic 0x{magic:08x}, expected 0x{expected_magic:08x}"),
        });
    }
    let rank = (magic & 0xff) as usize;
    let dims = (0..rank).map(|i| cur.u32(&format!("dimension {i}")).map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
    let len = dims.iter().try_fold(1usize, |a, &b| a.checked_mul(b)).ok_or_else(|| HarnessError::Idx {
        path: path.to_path_buf(),
        msg: "dimension product overflows".into(),
    })?;
    let data = cur.take(len, "payload")?.to_vec();
    Ok(IdxFile { dims, data })
}

/// Bilinear resize of a row-major `h x w` image to `oh x ow` with
/// half-pixel centers and edge clamping.
pub fn bilinear_resize(src: &[f64], h: usize, w: usize, oh: usize, ow: usize) -> Vec<f64> {
    let axis = |out: usize, inp: usize| -> Vec<(usize, usize, f64)> {
        let scale = inp as f64 / out as f64;
        (0..out)
            .map(|o| {
                let c = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (inp - 1) as f64);
                let lo = c.floor() as usize;
                let hi = (lo + 1).min(inp - 1);
                (lo, hi, c - lo as f64)
            })
            .collect()
    };
    let rows = axis(oh, h);
    let cols = axis(ow, w);
    let mut out = Vec::with_capacity(oh * ow);
    for &(r0, r1, fr) in &rows {
        for &(c0, c1, fc) in &cols {
            let top = src[r0 * w + c0] * (1.0 - fc) + src[r0 * w + c1] * fc;
            let bottom = src[r1 * w + c0] * (1.0 - fc) + src[r1 * w + c1] * fc;
            out.push(top * (1.0 - fr) + bottom * fr);
        }
    }
    out
}

/// Load IDX images and labels, resize each image to `sqrt(d) x sqrt(d)`,
/// scale to `[0, 1]` and flatten.
pub fn ingest_idx(images: &Path, labels: &Path, max_items: Option<usize>, target_dim: usize) -> Result<Dataset> {
    let side = (target_dim as f64).sqrt().round() as usize;
    if side == 0 || side * side != target_dim {
        return Err(HarnessError::Validation(format!("target dimension {target_dim} is not a perfect square")));
    }
    let read = |p: &Path| std::fs::read(p).map_err(|e| HarnessError::io(p, e));
    let img = parse_idx(&read(images)?, IDX_IMAGES, images)?;
    let lab = parse_idx(&read(labels)?, IDX_LABELS, labels)?;
    let (count, h, w) = (img.dims[0], img.dims[1], img.dims[2]);
    if lab.dims[0] != count {
        return Err(HarnessError::Idx {
            path: labels.to_path_buf(),
            msg: format!("label count {} does not match image count {count}", lab.dims[0]),
        });
    }
    if count > 0 && (h == 0 || w == 0) {
        return Err(HarnessError::Idx { path: images.to_path_buf(), msg: "zero-sized images".into() });
    }
    let take = max_items.map_or(count, |m| m.min(count));
    let mut features = DMatrix::zeros(take, target_dim);
    for item in 0..take {
        let px: Vec<f64> = img.data[item * h * w..(item + 1) * h * w].iter().map(|&b| b as f64 / 255.0).collect();
        for (m, v) in bilinear_resize(&px, h, w, side, side).into_iter().enumerate() {
            features[(item, m)] = v;
        }
    }
    Ok(Dataset { features, labels: lab.data[..take].iter().map(|&b| b as usize).collect() })
}

/// Unit-variance Gaussian blobs; class `c` is centered at
/// `separation * e_{c mod d}`, so means sit on a scaled simplex.
pub fn synth_classification(n_classes: usize, per_class: usize, d: usize, separation: f64, seed: u64) -> Result<Dataset> {
    if per_class == 0 || d == 0 {
        return Err(HarnessError::Validation("empty dataset: per_class and d must be positive".into()));
    }
    if n_classes < 2 {
        return Err(HarnessError::Validation(format!("need at least 2 classes, got {n_classes}")));
    }
    let mut rng = stream(seed, Domain::Data, &[0]);
    let total = n_classes * per_class;
    // Interleave classes so a round-robin partition stays balanced.
    let labels: Vec<usize> = (0..total).map(|i| i % n_classes).collect();
    let mut features = DMatrix::zeros(total, d);
    for (row, &c) in labels.iter().enumerate() {
        for m in 0..d {
            let z: f64 = StandardNormal.sample(&mut rng);
            features[(row, m)] = z + if m == c % d { separation } else { 0.0 };
        }
    }
    Ok(Dataset { features, labels })
}

/// How rows of the regression design matrix are normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowNorm {
    /// Squared entries of each row sum to one.
    UnitL2,
    /// Entries of each row sum to one (signed); badly conditioned.
    SumToOne,
    None,
}

/// Per-node regression data `y_i = D_i x* + eta` and the generating `x*`.
pub fn synth_linreg(
    n: usize,
    samples_per_node: usize,
    d: usize,
    noise_var: f64,
    row_norm: RowNorm,
    seed: u64,
) -> Result<(Vec<RegressionData>, DVector<f64>)> {
    if n * samples_per_node < d {
        return Err(HarnessError::Validation(format!(
            "{n} nodes x {samples_per_node} samples < d={d}: least-squares optimum not unique"
        )));
    }
    if !(noise_var >= 0.0) {
        return Err(HarnessError::Validation(format!("noise variance must be non-negative, got {noise_var}")));
    }
    let mut rng = stream(seed, Domain::Data, &[1]);
    let x_star = DVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
    let noise = Normal::new(0.0, noise_var.sqrt()).expect("finite non-negative std");
    let nodes = (0..n)
        .map(|_| {
            let mut features = DMatrix::from_fn(samples_per_node, d, |_, _| StandardNormal.sample(&mut rng));
            for mut row in features.row_iter_mut() {
                let scale = match row_norm {
                    RowNorm::UnitL2 => row.norm(),
                    RowNorm::SumToOne => row.sum(),
                    RowNorm::None => 1.0,
                };
                row /= scale;
            }
            let eta = DVector::from_fn(samples_per_node, |_, _| noise.sample(&mut rng));
            let targets = &features * &x_star + eta;
            RegressionData { features, targets }
        })
        .collect();
    Ok((nodes, x_star))
}
