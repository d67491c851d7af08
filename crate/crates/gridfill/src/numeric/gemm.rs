//! Matrix-product plumbing shared by the conv and dense ops.
//!
//! Convolutions are lowered to one dense product per call: `im2col`
//! gathers input windows into a (C_in*kH*kW) x (H_out*W_out) matrix, the
//! product applies every filter at once, and `col2im` scatters window
//! gradients back. The inner product is `matrixmultiply::dgemm`, which
//! picks SIMD kernels at runtime; row/column strides express transposes
//! without copying.

/// c = a (m x k, row-major) * b (k x n, row-major).
pub fn mm_nn(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            k as isize,
            1,
            b.as_ptr(),
            n as isize,
            1,
            0.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// c = a (m x k, row-major) * b^T, where b is (n x k) row-major.
pub fn mm_nt(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    assert!(a.len() >= m * k && b.len() >= n * k && c.len() >= m * n);
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            k as isize,
            1,
            b.as_ptr(),
            1,
            k as isize,
            0.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// c = a^T * b, where a is (k x m) row-major and b is (k x n) row-major.
pub fn mm_tn(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    assert!(a.len() >= k * m && b.len() >= k * n && c.len() >= m * n);
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            1,
            m as isize,
            b.as_ptr(),
            n as isize,
            1,
            0.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Window geometry for one spatial axis.
#[derive(Debug, Clone, Copy)]
pub struct Axis {
    pub size: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl Axis {
    /// floor((size + 2*pad - kernel)/stride) + 1, or None when no window fits.
    pub fn out_len(&self) -> Option<usize> {
        let padded = self.size + 2 * self.pad;
        if padded < self.kernel {
            return None;
        }
        Some((padded - self.kernel) / self.stride + 1)
    }
}

/// Gathers conv windows of `data` (C x H x W) into a row-major matrix with
/// C*kH*kW rows and H_out*W_out columns. Out-of-bounds (padding) positions
/// stay zero.
pub fn im2col2d(data: &[f64], channels: usize, ha: Axis, wa: Axis) -> Vec<f64> {
    let (h_out, w_out) = (ha.out_len().unwrap(), wa.out_len().unwrap());
    let n_cols = h_out * w_out;
    let mut cols = vec![0.0; channels * ha.kernel * wa.kernel * n_cols];
    for c in 0..channels {
        let plane = &data[c * ha.size * wa.size..][..ha.size * wa.size];
        for i in 0..ha.kernel {
            for j in 0..wa.kernel {
                let row = ((c * ha.kernel + i) * wa.kernel + j) * n_cols;
                for oh in 0..h_out {
                    let ih = (oh * ha.stride + i) as isize - ha.pad as isize;
                    if ih < 0 || ih >= ha.size as isize {
                        continue;
                    }
                    let src = &plane[ih as usize * wa.size..][..wa.size];
                    let dst = &mut cols[row + oh * w_out..][..w_out];
                    for (ow, d) in dst.iter_mut().enumerate() {
                        let iw = (ow * wa.stride + j) as isize - wa.pad as isize;
                        if iw >= 0 && iw < wa.size as isize {
                            *d = src[iw as usize];
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of `im2col2d`: scatter-adds window values back onto the input
/// grid, dropping contributions that fell on padding.
pub fn col2im2d(cols: &[f64], channels: usize, ha: Axis, wa: Axis) -> Vec<f64> {
    let (h_out, w_out) = (ha.out_len().unwrap(), wa.out_len().unwrap());
    let n_cols = h_out * w_out;
    let mut data = vec![0.0; channels * ha.size * wa.size];
    for c in 0..channels {
        let plane = &mut data[c * ha.size * wa.size..][..ha.size * wa.size];
        for i in 0..ha.kernel {
            for j in 0..wa.kernel {
                let row = ((c * ha.kernel + i) * wa.kernel + j) * n_cols;
                for oh in 0..h_out {
                    let ih = (oh * ha.stride + i) as isize - ha.pad as isize;
                    if ih < 0 || ih >= ha.size as isize {
                        continue;
                    }
                    let dst = &mut plane[ih as usize * wa.size..][..wa.size];
                    let src = &cols[row + oh * w_out..][..w_out];
                    for (ow, s) in src.iter().enumerate() {
                        let iw = (ow * wa.stride + j) as isize - wa.pad as isize;
                        if iw >= 0 && iw < wa.size as isize {
                            dst[iw as usize] += s;
                        }
                    }
                }
            }
        }
    }
    data
}

/// Per-window sums of a single-channel grid: entry p counts the mass of
/// `data` inside output window p, with padding contributing zero.
pub fn window_sums(data: &[f64], ha: Axis, wa: Axis) -> Vec<f64> {
    let (h_out, w_out) = (ha.out_len().unwrap(), wa.out_len().unwrap());
    let mut sums = vec![0.0; h_out * w_out];
    for i in 0..ha.kernel {
        for j in 0..wa.kernel {
            for oh in 0..h_out {
                let ih = (oh * ha.stride + i) as isize - ha.pad as isize;
                if ih < 0 || ih >= ha.size as isize {
                    continue;
                }
                let src = &data[ih as usize * wa.size..][..wa.size];
                let dst = &mut sums[oh * w_out..][..w_out];
                for (ow, d) in dst.iter_mut().enumerate() {
                    let iw = (ow * wa.stride + j) as isize - wa.pad as isize;
                    if iw >= 0 && iw < wa.size as isize {
                        *d += src[iw as usize];
                    }
                }
            }
        }
    }
    sums
}
