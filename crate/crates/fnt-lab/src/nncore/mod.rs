//! Minimal reverse-mode differentiable compute.
//!
//! Everything trains in f64; checkpoints round to f32 on disk. The [`Tape`]
//! records primitive applications in order and replays them exactly in
//! reverse; gradients land in a name-keyed map matching the
//! [`ParameterArchive`] layout.

pub mod archive;
pub mod check;
pub mod kernels;
pub mod optim;
pub mod tape;

pub use archive::{ParameterArchive, Tensor};
pub use check::{gradient_check, GradCheckReport};
pub use optim::{adam_step, AdamParams, AdamState};
pub use tape::{GradMap, NodeId, Tape};

/// Dense row-major f64 matrix. Vectors are single-row matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "data length must match dims");
        Mat { rows, cols, data }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols.max(1))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
