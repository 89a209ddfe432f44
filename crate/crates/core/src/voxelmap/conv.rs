//! Submanifold sparse 3D convolution over the voxel hash map.
//!
//! Outputs are computed only at input-active sites and the output occupancy
//! equals the input occupancy, so sparsity never dilates. Each site gathers
//! its active neighbors within the kernel footprint by hash lookup; empty
//! space costs nothing. Work is proportional to `active_sites * k^3`,
//! independent of the grid's bounding volume; [`sparse_conv_counted`]
//! exposes the gather counter so that bound can be asserted.

use serde::{Deserialize, Serialize};

use super::{SparseVoxelGrid, VoxelError};

/// Dense k x k x k convolution weights with per-output-channel bias.
///
/// Flattened layout is offset-major: `weights[(offset * c_in + ci) * c_out + co]`
/// where `offset = ((dx+r)*k + (dy+r))*k + (dz+r)` and `r = (k-1)/2`. This is
/// the on-disk JSON layout too, so exported trained weights load directly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvKernel {
    pub k: usize,
    pub c_in: usize,
    pub c_out: usize,
    pub weights: Vec<f32>,
    pub bias: Vec<f32>,
}

impl ConvKernel {
    pub fn new(k: usize, c_in: usize, c_out: usize, weights: Vec<f32>, bias: Vec<f32>) -> Result<Self, VoxelError> {
        let kernel = Self { k, c_in, c_out, weights, bias };
        kernel.validate()?;
        Ok(kernel)
    }

    pub fn validate(&self) -> Result<(), VoxelError> {
        if self.k == 0 || self.k % 2 == 0 {
            return Err(VoxelError::InvalidKernel(format!("k must be odd, got {}", self.k)));
        }
        if self.c_in == 0 || self.c_out == 0 {
            return Err(VoxelError::InvalidKernel("channel counts must be positive".into()));
        }
        let expected = self.k * self.k * self.k * self.c_in * self.c_out;
        if self.weights.len() != expected {
            return Err(VoxelError::InvalidKernel(format!(
                "weights length {} != k^3*c_in*c_out = {}",
                self.weights.len(),
                expected
            )));
        }
        if self.bias.len() != self.c_out {
            return Err(VoxelError::InvalidKernel(format!(
                "bias length {} != c_out = {}",
                self.bias.len(),
                self.c_out
            )));
        }
        if self.weights.iter().chain(self.bias.iter()).any(|w| !w.is_finite()) {
            return Err(VoxelError::InvalidKernel("non-finite weight".into()));
        }
        Ok(())
    }

    /// 1x1x1 channel-identity kernel with zero bias.
    pub fn identity(channels: usize) -> Self {
        let mut weights = vec![0.0; channels * channels];
        for c in 0..channels {
            weights[c * channels + c] = 1.0;
        }
        Self { k: 1, c_in: channels, c_out: channels, weights, bias: vec![0.0; channels] }
    }

    fn radius(&self) -> i32 {
        (self.k as i32 - 1) / 2
    }

    #[inline]
    fn offset_index(&self, dx: i32, dy: i32, dz: i32) -> usize {
        let r = self.radius();
        let k = self.k as i32;
        (((dx + r) * k + (dy + r)) * k + (dz + r)) as usize
    }

    #[inline]
    pub fn weight(&self, dx: i32, dy: i32, dz: i32, ci: usize, co: usize) -> f32 {
        self.weights[(self.offset_index(dx, dy, dz) * self.c_in + ci) * self.c_out + co]
    }
}

/// Work counters from one convolution pass.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConvStats {
    /// Neighbor hash probes issued (one per site per kernel offset).
    pub gathers: u64,
    /// Probes that found an active neighbor.
    pub hits: u64,
}

/// Submanifold convolution: see the module docs. Accumulation runs in f64
/// per site, so the result is independent of any scheduling of sites.
pub fn sparse_conv(grid: &SparseVoxelGrid, kernel: &ConvKernel) -> Result<SparseVoxelGrid, VoxelError> {
    sparse_conv_counted(grid, kernel).map(|(g, _)| g)
}

/// [`sparse_conv`] returning the gather counters.
pub fn sparse_conv_counted(
    grid: &SparseVoxelGrid,
    kernel: &ConvKernel,
) -> Result<(SparseVoxelGrid, ConvStats), VoxelError> {
    kernel.validate()?;
    if kernel.c_in != grid.channels() {
        return Err(VoxelError::KernelChannelMismatch { kernel: kernel.c_in, grid: grid.channels() });
    }
    let r = kernel.radius();
    let mut stats = ConvStats::default();
    let mut out = SparseVoxelGrid::new(grid.voxel_size(), grid.origin(), kernel.c_out)?;

    for (site, _) in grid.iter() {
        let mut acc = vec![0.0f64; kernel.c_out];
        for (co, b) in kernel.bias.iter().enumerate() {
            acc[co] = *b as f64;
        }
        for dx in -r..=r {
            for dy in -r..=r {
                for dz in -r..=r {
                    stats.gathers += 1;
                    let neighbor = [site[0] + dx, site[1] + dy, site[2] + dz];
                    let Some(feature) = grid.get(&neighbor) else {
                        continue;
                    };
                    stats.hits += 1;
                    for (ci, value) in feature.iter().enumerate() {
                        if *value == 0.0 {
                            continue;
                        }
                        for (co, a) in acc.iter_mut().enumerate() {
                            // The stored weight is indexed by the offset of
                            // the neighbor relative to the output site.
                            *a += *value as f64 * kernel.weight(dx, dy, dz, ci, co) as f64;
                        }
                    }
                }
            }
        }
        out.insert(*site, acc.into_iter().map(|v| v as f32).collect())?;
    }
    Ok((out, stats))
}
