use std::fs;
use std::path::Path;

use crate::error::{EinconvError, Result};
use crate::scalar::Scalar;
use crate::tensor::{DenseTensor, IndexLabel};

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

/// Images scaled to [0, 1], stored row-major as `(n, h, w, c)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub images: Vec<f64>,
    pub labels: Vec<usize>,
    /// Per-sample shape: spatial extents then channels.
    pub sample_shape: Vec<usize>,
    pub classes: usize,
}

impl Dataset {
    pub fn new(images: Vec<f64>, labels: Vec<usize>, sample_shape: Vec<usize>, classes: usize) -> Result<Self> {
        let per: usize = sample_shape.iter().product();
        if per == 0 || images.len() != per * labels.len() {
            return Err(EinconvError::DataLength {
                expected: per * labels.len(),
                got: images.len(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(EinconvError::Parse(format!("label {bad} outside 0..{classes}")));
        }
        Ok(Dataset {
            images,
            labels,
            sample_shape,
            classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn sample_len(&self) -> usize {
        self.sample_shape.iter().product()
    }

    pub fn sample(&self, k: usize) -> &[f64] {
        let m = self.sample_len();
        &self.images[k * m..(k + 1) * m]
    }

    /// Rows `indices` as a tensor labelled `(n, h, w[, d], c)`.
    pub fn batch<T: Scalar>(&self, indices: &[usize]) -> (DenseTensor<T>, Vec<usize>) {
        let mut data = Vec::with_capacity(indices.len() * self.sample_len());
        for &k in indices {
            data.extend(self.sample(k).iter().map(|&v| T::of(v)));
        }
        let n_sp = self.sample_shape.len() - 1;
        let mut labels = vec![IndexLabel::new(crate::graph::BATCH, indices.len())];
        for a in 0..n_sp {
            labels.push(IndexLabel::new(crate::graph::SPATIAL_IN[a], self.sample_shape[a]));
        }
        labels.push(IndexLabel::new(crate::graph::CHANNEL_IN, self.sample_shape[n_sp]));
        let t = DenseTensor::new(labels, data).expect("batch shape");
        (t, indices.iter().map(|&k| self.labels[k]).collect())
    }

    /// Samples `indices` as a new dataset.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        let mut images = Vec::with_capacity(indices.len() * self.sample_len());
        for &k in indices {
            images.extend_from_slice(self.sample(k));
        }
        Dataset {
            images,
            labels: indices.iter().map(|&k| self.labels[k]).collect(),
            sample_shape: self.sample_shape.clone(),
            classes: self.classes,
        }
    }
}

fn read_be(bytes: &[u8], at: usize) -> Result<u32> {
    let b = bytes.get(at..at + 4).ok_or(EinconvError::Truncated)?;
    Ok(u32::from_be_bytes(b.try_into().expect("4 bytes")))
}

/// Parses an IDX file with the given magic; returns dims and payload bytes.
pub fn parse_idx(bytes: &[u8], magic: u32) -> Result<(Vec<usize>, &[u8])> {
    let got = read_be(bytes, 0)?;
    if got != magic {
        return Err(EinconvError::BadMagic(got));
    }
    let rank = (magic & 0xff) as usize;
    let mut dims = Vec::with_capacity(rank);
    let mut total: usize = 1;
    for k in 0..rank {
        let d = read_be(bytes, 4 + 4 * k)? as usize;
        total = total.checked_mul(d).ok_or(EinconvError::DimOverflow)?;
        dims.push(d);
    }
    let start = 4 + 4 * rank;
    let end = start.checked_add(total).ok_or(EinconvError::DimOverflow)?;
    let payload = bytes.get(start..end).ok_or(EinconvError::Truncated)?;
    Ok((dims, payload))
}

/// Loads an image/label IDX pair. Pixels are divided by 255; the class
/// count is one more than the largest label.
pub fn load_idx(images: &Path, labels: &Path) -> Result<Dataset> {
    let ib = fs::read(images)?;
    let lb = fs::read(labels)?;
    let (idims, pixels) = parse_idx(&ib, IMAGE_MAGIC)?;
    let (ldims, lab) = parse_idx(&lb, LABEL_MAGIC)?;
    if idims[0] != ldims[0] {
        return Err(EinconvError::Parse(format!("{} images but {} labels", idims[0], ldims[0])));
    }
    let labels: Vec<usize> = lab.iter().map(|&b| b as usize).collect();
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let images = pixels.iter().map(|&p| p as f64 / 255.0).collect();
    Dataset::new(images, labels, vec![idims[1], idims[2], 1], classes)
}

/// Writes a `(n, rows, cols)` ubyte image file and its label file.
pub fn write_idx(images: &Path, labels: &Path, rows: usize, cols: usize, pixels: &[u8], classes: &[u8]) -> Result<()> {
    let n = classes.len();
    if pixels.len() != n * rows * cols {
        return Err(EinconvError::DataLength {
            expected: n * rows * cols,
            got: pixels.len(),
        });
    }
    let mut ib = Vec::with_capacity(16 + pixels.len());
    for v in [IMAGE_MAGIC, n as u32, rows as u32, cols as u32] {
        ib.extend_from_slice(&v.to_be_bytes());
    }
    ib.extend_from_slice(pixels);
    let mut lb = Vec::with_capacity(8 + n);
    for v in [LABEL_MAGIC, n as u32] {
        lb.extend_from_slice(&v.to_be_bytes());
    }
    lb.extend_from_slice(classes);
    fs::write(images, ib)?;
    fs::write(labels, lb)?;
    Ok(())
}
