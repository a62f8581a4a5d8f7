//! Batched `B×H×W×C` buffers and the GEMM wrapper used by the layers.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::image::{GrayImage, ProbabilityMap};

/// Dense `batch × height × width × channels` tensor, channels innermost.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4 {
    shape: [usize; 4],
    data: Vec<f64>,
}

impl Tensor4 {
    pub fn zeros(shape: [usize; 4]) -> Self {
        Self {
            shape,
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: [usize; 4], data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Contract(format!(
                "shape {shape:?} needs {n} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    /// Stacks same-sized grayscale images into a `B×H×W×1` batch.
    pub fn from_images<'a>(images: impl IntoIterator<Item = &'a GrayImage>) -> Result<Self> {
        let mut data = Vec::new();
        let mut dims = None;
        let mut b = 0;
        for img in images {
            let d = (img.height(), img.width());
            match dims {
                None => dims = Some(d),
                Some(prev) if prev != d => {
                    return Err(Error::Contract(format!(
                        "batch mixes {}x{} and {}x{} images",
                        prev.1, prev.0, d.1, d.0
                    )))
                }
                _ => {}
            }
            data.extend(img.pixels().iter().map(|&p| f64::from(p)));
            b += 1;
        }
        let (h, w) = dims.ok_or_else(|| Error::Contract("empty batch".into()))?;
        Ok(Self {
            shape: [b, h, w, 1],
            data,
        })
    }

    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }

    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// The `i`-th item as a `H·W·C` slice.
    pub fn item(&self, i: usize) -> &[f64] {
        let n = self.shape[1] * self.shape[2] * self.shape[3];
        &self.data[i * n..(i + 1) * n]
    }

    /// Splits a single-channel batch into per-item probability maps.
    pub fn to_probability_maps(&self) -> Result<Vec<ProbabilityMap>> {
        let [b, h, w, c] = self.shape;
        if c != 1 {
            return Err(Error::Contract(format!(
                "expected a single-channel tensor, got {c} channels"
            )));
        }
        (0..b)
            .map(|i| ProbabilityMap::new(w, h, self.item(i).to_vec()))
            .collect()
    }
}

/// Row/column strides of a matrix operand stored in a flat slice.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Strides {
    pub row: usize,
    pub col: usize,
}

impl Strides {
    /// Row-major `rows×cols`, or its transpose view when `trans`.
    pub fn dense(rows: usize, cols: usize, trans: bool) -> Self {
        if trans {
            Strides { row: 1, col: rows }
        } else {
            Strides { row: cols, col: 1 }
        }
    }
}

/// `c = a·b + beta·c` where `a` is `m×k` and `b` is `k×n` as laid out by
/// their strides, and `c` is `m×n` with row stride `ldc`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm_strided(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    sa: Strides,
    b: &[f64],
    sb: Strides,
    beta: f64,
    c: &mut [f64],
    ldc: usize,
) {
    if m == 0 || n == 0 {
        return;
    }
    if k > 0 {
        assert!((m - 1) * sa.row + (k - 1) * sa.col < a.len());
        assert!((k - 1) * sb.row + (n - 1) * sb.col < b.len());
    }
    assert!((m - 1) * ldc + n <= c.len());
    // SAFETY: the asserts above bound every element the kernel reads or
    // writes under these strides, and `c` is a unique borrow distinct from
    // `a` and `b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            sa.row as isize,
            sa.col as isize,
            b.as_ptr(),
            sb.row as isize,
            sb.col as isize,
            beta,
            c.as_mut_ptr(),
            ldc as isize,
            1,
        );
    }
}

/// Dense row-major convenience form of [`gemm_strided`].
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    trans_a: bool,
    b: &[f64],
    trans_b: bool,
    beta: f64,
    c: &mut [f64],
    ldc: usize,
) {
    let sa = Strides::dense(m, k, trans_a);
    let sb = Strides::dense(k, n, trans_b);
    gemm_strided(m, k, n, a, sa, b, sb, beta, c, ldc);
}
