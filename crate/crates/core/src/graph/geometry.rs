use serde::{Deserialize, Serialize};

use crate::error::{EinconvError, Result};

/// Convolution shape parameters; one entry per spatial axis in
/// `spatial_in` and `filter`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConvGeometry {
    pub spatial_in: Vec<usize>,
    pub filter: Vec<usize>,
    pub padding: usize,
    pub stride: usize,
    pub channels_in: usize,
    pub channels_out: usize,
}

impl ConvGeometry {
    /// Square/cubic geometry with "same" padding and stride 1.
    pub fn same(spatial: &[usize], filter: &[usize], c_in: usize, c_out: usize) -> Self {
        ConvGeometry {
            spatial_in: spatial.to_vec(),
            filter: filter.to_vec(),
            padding: filter.first().map_or(0, |f| (f.saturating_sub(1)) / 2),
            stride: 1,
            channels_in: c_in,
            channels_out: c_out,
        }
    }

    pub fn n_axes(&self) -> usize {
        self.spatial_in.len()
    }

    pub fn check(&self) -> Result<()> {
        if self.spatial_in.is_empty() || self.spatial_in.len() != self.filter.len() {
            return Err(EinconvError::Geometry("spatial and filter ranks differ".into()));
        }
        if self.stride == 0 {
            return Err(EinconvError::Geometry("stride must be positive".into()));
        }
        if self.channels_in == 0 || self.channels_out == 0 {
            return Err(EinconvError::Geometry("channel counts must be positive".into()));
        }
        for a in 0..self.n_axes() {
            if self.filter[a] % 2 == 0 {
                return Err(EinconvError::EvenFilter(self.filter[a]));
            }
            self.spatial_out(a)?;
        }
        Ok(())
    }

    /// (H + 2P - I)/S + 1, required to be a positive integer.
    pub fn spatial_out(&self, axis: usize) -> Result<usize> {
        let span = self.spatial_in[axis] + 2 * self.padding;
        let f = self.filter[axis];
        if span < f || (span - f) % self.stride != 0 {
            return Err(EinconvError::Geometry(format!(
                "axis {axis}: ({} + 2*{} - {f})/{} + 1 is not a positive integer",
                self.spatial_in[axis], self.padding, self.stride
            )));
        }
        Ok((span - f) / self.stride + 1)
    }

    /// Spatial extents along a chain of filters `factors` applied in order:
    /// `[H, H_1, ..., H']`. The first link pads, the last one strides.
    pub fn chain_extents(&self, axis: usize, factors: &[usize]) -> Result<Vec<usize>> {
        let composed = 1 + factors.iter().map(|f| f - 1).sum::<usize>();
        if composed != self.filter[axis] {
            return Err(EinconvError::Geometry(format!(
                "axis {axis}: factors {factors:?} compose to {composed}, geometry wants {}",
                self.filter[axis]
            )));
        }
        let mut ext = vec![self.spatial_in[axis]];
        let m = factors.len();
        for (k, &f) in factors.iter().enumerate() {
            let (pad, stride) = link_params(k, m, self.padding, self.stride);
            let span = ext[k] + 2 * pad;
            if span < f || (span - f) % stride != 0 {
                return Err(EinconvError::Geometry(format!("axis {axis}: chain link {k} does not fit")));
            }
            ext.push((span - f) / stride + 1);
        }
        Ok(ext)
    }
}

/// Padding and stride of link `k` in a chain of `m` filters.
pub fn link_params(k: usize, m: usize, padding: usize, stride: usize) -> (usize, usize) {
    let pad = if k == 0 { padding } else { 0 };
    let s = if k + 1 == m { stride } else { 1 };
    (pad, s)
}
