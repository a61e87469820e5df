use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Dense row-major tensor of `f64`.
///
/// Storage is reference counted, so cloning is cheap and values can be shared
/// across threads. Mutation goes through [`Tensor::data_mut`], which copies on
/// write when the buffer is shared.
#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Arc<Vec<f64>>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("data", &self.data.as_slice())
            .finish()
    }
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::shape("new", &shape, &[data.len()]));
        }
        Ok(Tensor {
            shape,
            data: Arc::new(data),
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let numel = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: Arc::new(vec![value; numel]),
        }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor {
            shape: vec![1],
            data: Arc::new(vec![value]),
        }
    }

    pub fn from_vec(data: Vec<f64>) -> Self {
        Tensor {
            shape: vec![data.len()],
            data: Arc::new(data),
        }
    }

    pub fn eye(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Tensor {
            shape: vec![n, n],
            data: Arc::new(data),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        Arc::make_mut(&mut self.data).as_mut_slice()
    }

    pub fn into_vec(self) -> Vec<f64> {
        Arc::try_unwrap(self.data).unwrap_or_else(|shared| (*shared).clone())
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> Result<f64> {
        if self.numel() != 1 {
            return Err(Error::Contract(format!(
                "expected a scalar, got shape {:?}",
                self.shape
            )));
        }
        Ok(self.data[0])
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        let numel: usize = shape.iter().product();
        if numel != self.numel() {
            return Err(Error::shape("reshape", &self.shape, shape));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data: Arc::clone(&self.data),
        })
    }

    /// Rows and columns of a rank-2 tensor.
    pub fn dims2(&self, op: &'static str) -> Result<(usize, usize)> {
        match self.shape.as_slice() {
            [m, n] => Ok((*m, *n)),
            _ => Err(Error::shape(op, &self.shape, &[])),
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let cols = *self.shape.last().unwrap_or(&1);
        &self.data[i * cols..(i + 1) * cols]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    fn zip_with(&self, other: &Tensor, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        if self.shape != other.shape {
            return Err(Error::shape(op, &self.shape, &other.shape));
        }
        let data = self
            .data
            .iter()
            .zip(other.data.iter())
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(Tensor {
            shape: self.shape.clone(),
            data: Arc::new(data),
        })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: Arc::new(self.data.iter().map(|&v| f(v)).collect()),
        }
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, "mul", |a, b| a * b)
    }

    pub fn scale(&self, s: f64) -> Tensor {
        self.map(|v| v * s)
    }

    pub fn neg(&self) -> Tensor {
        self.map(|v| -v)
    }

    pub fn tanh(&self) -> Tensor {
        self.map(f64::tanh)
    }

    /// `self + s * other`, elementwise.
    pub fn axpy(&self, s: f64, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, "axpy", |a, b| a + s * b)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn sum_squares(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn norm(&self) -> f64 {
        self.sum_squares().sqrt()
    }

    /// Matrix product `a[m×k] · b[k×n]`.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        let (m, k) = self.dims2("matmul")?;
        let (k2, n) = other.dims2("matmul")?;
        if k != k2 {
            return Err(Error::shape("matmul", &self.shape, &other.shape));
        }
        Ok(gemm(m, k, n, (&self.data, k as isize, 1), (&other.data, n as isize, 1)))
    }

    /// `a[m×k] · bᵀ` where `b` is `[n×k]`.
    pub fn matmul_nt(&self, other: &Tensor) -> Result<Tensor> {
        let (m, k) = self.dims2("matmul_nt")?;
        let (n, k2) = other.dims2("matmul_nt")?;
        if k != k2 {
            return Err(Error::shape("matmul_nt", &self.shape, &other.shape));
        }
        Ok(gemm(m, k, n, (&self.data, k as isize, 1), (&other.data, 1, k as isize)))
    }

    /// `aᵀ · b` where `a` is `[k×m]` and `b` is `[k×n]`.
    pub fn matmul_tn(&self, other: &Tensor) -> Result<Tensor> {
        let (k, m) = self.dims2("matmul_tn")?;
        let (k2, n) = other.dims2("matmul_tn")?;
        if k != k2 {
            return Err(Error::shape("matmul_tn", &self.shape, &other.shape));
        }
        Ok(gemm(m, k, n, (&self.data, 1, m as isize), (&other.data, n as isize, 1)))
    }

    pub fn transpose(&self) -> Result<Tensor> {
        let (m, n) = self.dims2("transpose")?;
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = self.data[i * n + j];
            }
        }
        Tensor::new(vec![n, m], out)
    }

    /// Adds a length-`n` row vector to every row of an `[m×n]` matrix.
    pub fn add_row(&self, row: &Tensor) -> Result<Tensor> {
        let (_, n) = self.dims2("add_row")?;
        if row.numel() != n || row.shape.len() != 1 {
            return Err(Error::shape("add_row", &self.shape, &row.shape));
        }
        let mut out = self.data.as_ref().clone();
        for chunk in out.chunks_exact_mut(n.max(1)) {
            for (o, &r) in chunk.iter_mut().zip(row.data.iter()) {
                *o += r;
            }
        }
        Tensor::new(self.shape.clone(), out)
    }

    /// Column sums of an `[m×n]` matrix, as a length-`n` vector.
    pub fn sum_rows(&self) -> Result<Tensor> {
        let (_, n) = self.dims2("sum_rows")?;
        let mut out = vec![0.0; n];
        for chunk in self.data.chunks_exact(n.max(1)) {
            for (o, &v) in out.iter_mut().zip(chunk) {
                *o += v;
            }
        }
        Ok(Tensor::from_vec(out))
    }

    /// Horizontal concatenation of matrices with equal row counts.
    pub fn concat_cols(parts: &[&Tensor]) -> Result<Tensor> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Contract("concat_cols needs at least one part".into()))?;
        let (m, _) = first.dims2("concat_cols")?;
        let mut widths = Vec::with_capacity(parts.len());
        for p in parts {
            let (pm, pn) = p.dims2("concat_cols")?;
            if pm != m {
                return Err(Error::shape("concat_cols", &first.shape, &p.shape));
            }
            widths.push(pn);
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(m * total);
        for i in 0..m {
            for (p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&p.data[i * w..(i + 1) * w]);
            }
        }
        Tensor::new(vec![m, total], out)
    }

    /// Splits an `[m×n]` matrix into column blocks of the given widths.
    pub fn split_cols(&self, widths: &[usize]) -> Result<Vec<Tensor>> {
        let (m, n) = self.dims2("split_cols")?;
        if widths.iter().sum::<usize>() != n {
            return Err(Error::shape("split_cols", &self.shape, widths));
        }
        let mut parts: Vec<Vec<f64>> = widths.iter().map(|w| Vec::with_capacity(m * w)).collect();
        for i in 0..m {
            let row = &self.data[i * n..(i + 1) * n];
            let mut offset = 0;
            for (part, &w) in parts.iter_mut().zip(widths) {
                part.extend_from_slice(&row[offset..offset + w]);
                offset += w;
            }
        }
        parts
            .into_iter()
            .zip(widths)
            .map(|(data, &w)| Tensor::new(vec![m, w], data))
            .collect()
    }

    /// Stacks equally shaped tensors as the rows of a matrix.
    pub fn stack_rows(rows: &[Tensor]) -> Result<Tensor> {
        let width = rows.first().map_or(0, Tensor::numel);
        let mut out = Vec::with_capacity(rows.len() * width);
        for r in rows {
            if r.numel() != width {
                return Err(Error::shape("stack_rows", &rows[0].shape, &r.shape));
            }
            out.extend_from_slice(r.data());
        }
        Tensor::new(vec![rows.len(), width], out)
    }
}

/// `[m×n]` product of strided operands given as `(data, row stride, col stride)`.
///
/// Each output entry depends only on its own row of `a` and column of `b`, so
/// a row's result does not change with the number of rows in the batch.
fn gemm(m: usize, k: usize, n: usize, a: (&[f64], isize, isize), b: (&[f64], isize, isize)) -> Tensor {
    let mut out = vec![0.0; m * n];
    if m > 0 && n > 0 && k > 0 {
        // SAFETY: strides describe in-bounds views of `a` (m×k) and `b` (k×n),
        // checked by the callers' shape tests, and `out` is a fresh m×n buffer.
        unsafe {
            matrixmultiply::dgemm(
                m, k, n, 1.0, a.0.as_ptr(), a.1, a.2, b.0.as_ptr(), b.1, b.2, 0.0,
                out.as_mut_ptr(), n as isize, 1,
            );
        }
    }
    Tensor { shape: vec![m, n], data: Arc::new(out) }
}
