//! Dense f32 tensors with reverse-mode automatic differentiation.
//!
//! Everything here is deliberately small: row-major storage, 1-D/2-D shapes,
//! fixed-order sequential reductions so a run is bitwise reproducible, and a
//! tape-style [`Graph`] that records forward ops and replays them backward.

mod adam;
mod graph;
pub mod gradcheck;

pub use adam::{AdamConfig, OptimizerState};
pub use graph::{Gradients, Graph, NodeId};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("{op}: shape mismatch: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("invalid shape: {detail}")]
    InvalidShape { detail: String },
    #[error("{op}: produced a non-finite value")]
    NonFinite { op: &'static str },
    #[error("{op}: index {index} out of range (bound {bound})")]
    IndexOutOfRange {
        op: &'static str,
        index: usize,
        bound: usize,
    },
    #[error("backward requires a scalar loss, got shape {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },
}

/// Row-major dense tensor of 32-bit floats.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
    requires_grad: bool,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self, TensorError> {
        let numel: usize = shape.iter().product();
        if shape.iter().any(|&d| d == 0) {
            return Err(TensorError::InvalidShape {
                detail: format!("zero dimension in {shape:?}"),
            });
        }
        if numel != data.len() {
            return Err(TensorError::InvalidShape {
                detail: format!("shape {shape:?} implies {numel} values, got {}", data.len()),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(TensorError::NonFinite { op: "new" });
        }
        Ok(Tensor {
            shape,
            data,
            requires_grad: false,
        })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel: usize = shape.iter().product();
        Tensor {
            shape,
            data: vec![0.0; numel],
            requires_grad: false,
        }
    }

    /// Internal constructor for op outputs: shape is trusted, finiteness is
    /// checked by the graph against the producing op's name.
    pub(crate) fn from_op_output(shape: Vec<usize>, data: Vec<f32>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor {
            shape,
            data,
            requires_grad: false,
        }
    }

    pub fn scalar(v: f32) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![v],
            requires_grad: false,
        }
    }

    /// 2-D constructor from nested rows; rows must be equally long.
    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self, TensorError> {
        let m = rows.len();
        let n = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != n) {
            return Err(TensorError::InvalidShape {
                detail: "ragged rows".into(),
            });
        }
        Tensor::new(vec![m, n], rows.concat())
    }

    pub fn with_requires_grad(mut self, flag: bool) -> Self {
        self.requires_grad = flag;
        self
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    /// Row/column counts for 2-D tensors; 1-D counts as a single row.
    pub fn rows(&self) -> usize {
        match self.shape.len() {
            1 => 1,
            2 => self.shape[0],
            _ => panic!("rows() on tensor of rank {}", self.shape.len()),
        }
    }

    pub fn cols(&self) -> usize {
        match self.shape.len() {
            1 => self.shape[0],
            2 => self.shape[1],
            _ => panic!("cols() on tensor of rank {}", self.shape.len()),
        }
    }

    pub fn at(&self, row: usize, col: usize) -> f32 {
        self.data[row * self.cols() + col]
    }

    pub(crate) fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

// ── Raw kernels ─────────────────────────────────────────────────────────────
//
// Shared by forward ops and their backward rules. All loops run in a fixed
// order; none of these allocate beyond their output.

/// C[m,n] = A[m,k] · B[k,n]
pub(crate) fn matmul_nn(a: &[f32], b: &[f32], m: usize, k: usize, n: usize) -> Vec<f32> {
    let mut c = vec![0.0f32; m * n];
    for i in 0..m {
        let c_row = &mut c[i * n..(i + 1) * n];
        let a_row = &a[i * k..(i + 1) * k];
        for (p, &a_ip) in a_row.iter().enumerate() {
            let b_row = &b[p * n..(p + 1) * n];
            for (c_v, &b_v) in c_row.iter_mut().zip(b_row) {
                *c_v += a_ip * b_v;
            }
        }
    }
    c
}

/// C[m,n] = A[m,k] · B[n,k]ᵀ
pub(crate) fn matmul_nt(a: &[f32], b: &[f32], m: usize, k: usize, n: usize) -> Vec<f32> {
    let mut c = vec![0.0f32; m * n];
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let b_row = &b[j * k..(j + 1) * k];
            let mut s = 0.0f32;
            for (&av, &bv) in a_row.iter().zip(b_row) {
                s += av * bv;
            }
            c[i * n + j] = s;
        }
    }
    c
}

/// C[k,n] = A[m,k]ᵀ · B[m,n]
pub(crate) fn matmul_tn(a: &[f32], b: &[f32], m: usize, k: usize, n: usize) -> Vec<f32> {
    let mut c = vec![0.0f32; k * n];
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let b_row = &b[i * n..(i + 1) * n];
        for (p, &a_ip) in a_row.iter().enumerate() {
            let c_row = &mut c[p * n..(p + 1) * n];
            for (c_v, &b_v) in c_row.iter_mut().zip(b_row) {
                *c_v += a_ip * b_v;
            }
        }
    }
    c
}

pub(crate) const GELU_C0: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
pub(crate) const GELU_C1: f64 = 0.044_715;

pub(crate) fn gelu_scalar(x: f32) -> f32 {
    let x = x as f64;
    let u = GELU_C0 * (x + GELU_C1 * x * x * x);
    (0.5 * x * (1.0 + u.tanh())) as f32
}

pub(crate) fn gelu_grad_scalar(x: f32) -> f32 {
    let x = x as f64;
    let u = GELU_C0 * (x + GELU_C1 * x * x * x);
    let t = u.tanh();
    let sech2 = 1.0 - t * t;
    let du = GELU_C0 * (1.0 + 3.0 * GELU_C1 * x * x);
    (0.5 * (1.0 + t) + 0.5 * x * sech2 * du) as f32
}

/// In-place row softmax with max subtraction; sums accumulate in f64.
pub(crate) fn softmax_rows_raw(x: &[f32], m: usize, n: usize) -> Vec<f32> {
    let mut out = vec![0.0f32; m * n];
    for i in 0..m {
        let row = &x[i * n..(i + 1) * n];
        let max = row.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
        let mut denom = 0.0f64;
        let out_row = &mut out[i * n..(i + 1) * n];
        for (o, &v) in out_row.iter_mut().zip(row) {
            let e = ((v - max) as f64).exp();
            *o = e as f32;
            denom += e;
        }
        for o in out_row.iter_mut() {
            *o = (*o as f64 / denom) as f32;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tensor_new_validates_shape_and_finiteness() {
        assert!(Tensor::new(vec![2, 2], vec![1.0; 4]).is_ok());
        assert!(matches!(
            Tensor::new(vec![2, 2], vec![1.0; 3]),
            Err(TensorError::InvalidShape { .. })
        ));
        assert!(matches!(
            Tensor::new(vec![2], vec![f32::NAN, 0.0]),
            Err(TensorError::NonFinite { .. })
        ));
        assert!(matches!(
            Tensor::new(vec![0], vec![]),
            Err(TensorError::InvalidShape { .. })
        ));
    }

    #[test]
    fn matmul_variants_agree() {
        // A: 2x3, B: 3x2
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let b = [7.0, 8.0, 9.0, 10.0, 11.0, 12.0];
        let c = matmul_nn(&a, &b, 2, 3, 2);
        assert_eq!(c, vec![58.0, 64.0, 139.0, 154.0]);

        // B stored transposed (2x3) should give the same product via nt.
        let bt = [7.0, 9.0, 11.0, 8.0, 10.0, 12.0];
        assert_eq!(matmul_nt(&a, &bt, 2, 3, 2), c);

        // A stored transposed (3x2) via tn.
        let at = [1.0, 4.0, 2.0, 5.0, 3.0, 6.0];
        assert_eq!(matmul_tn(&at, &b, 3, 2, 2), c);
    }

    #[test]
    fn gelu_reference_points() {
        assert_eq!(gelu_scalar(0.0), 0.0);
        // tanh-approximation value at 1.0, precomputed.
        assert!((gelu_scalar(1.0) - 0.841_192).abs() < 1e-5);
        assert!((gelu_scalar(-1.0) - (-0.158_808)).abs() < 1e-5);
    }
}
