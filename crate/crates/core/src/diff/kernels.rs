//! Non-differentiable compute kernels shared by the graph primitives.

use crate::error::{Error, Result};

/// `c = a·b` (or `c += a·b` when `accumulate`), with `a` logically `[m,k]`
/// and `b` logically `[k,n]`; either may be stored transposed.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_trans: bool,
    b: &[f64],
    b_trans: bool,
    c: &mut [f64],
    accumulate: bool,
) {
    assert_eq!(a.len(), m * k);
    assert_eq!(b.len(), k * n);
    assert_eq!(c.len(), m * n);
    let (rsa, csa) = if a_trans { (1, m) } else { (k, 1) };
    let (rsb, csb) = if b_trans { (1, k) } else { (n, 1) };
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: the asserts above bound every index the strides can reach.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Geometry of a strided, zero-padded 2-d convolution from
/// `[c_in, h_in, w_in]` to `[c_out, h_out, w_out]`.
///
/// A transposed convolution reuses the geometry of the convolution it is the
/// adjoint of, with the roles of input and output swapped.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub c_in: usize,
    pub h_in: usize,
    pub w_in: usize,
    pub c_out: usize,
    pub kh: usize,
    pub kw: usize,
    pub sh: usize,
    pub sw: usize,
    pub ph: usize,
    pub pw: usize,
    pub h_out: usize,
    pub w_out: usize,
}

impl ConvGeom {
    #[allow(clippy::too_many_arguments)]
    pub fn conv(
        c_in: usize,
        (h_in, w_in): (usize, usize),
        c_out: usize,
        (kh, kw): (usize, usize),
        (sh, sw): (usize, usize),
        (ph, pw): (usize, usize),
    ) -> Result<Self> {
        if sh == 0 || sw == 0 {
            return Err(Error::contract("convolution stride must be at least 1"));
        }
        if kh > h_in + 2 * ph || kw > w_in + 2 * pw {
            return Err(Error::contract(format!(
                "kernel {kh}x{kw} larger than padded input {}x{}",
                h_in + 2 * ph,
                w_in + 2 * pw
            )));
        }
        Ok(ConvGeom {
            c_in,
            h_in,
            w_in,
            c_out,
            kh,
            kw,
            sh,
            sw,
            ph,
            pw,
            h_out: (h_in + 2 * ph - kh) / sh + 1,
            w_out: (w_in + 2 * pw - kw) / sw + 1,
        })
    }

    /// Geometry of the convolution whose adjoint maps `[c_in_t, h_in, w_in]`
    /// to `[c_out_t, h_out, w_out]` with the given output padding.
    #[allow(clippy::too_many_arguments)]
    pub fn transposed(
        c_in_t: usize,
        (h_in, w_in): (usize, usize),
        c_out_t: usize,
        (kh, kw): (usize, usize),
        (sh, sw): (usize, usize),
        (ph, pw): (usize, usize),
        (oph, opw): (usize, usize),
    ) -> Result<Self> {
        if sh == 0 || sw == 0 {
            return Err(Error::contract("convolution stride must be at least 1"));
        }
        if oph >= sh || opw >= sw {
            return Err(Error::contract("output padding must be smaller than stride"));
        }
        let full_h = (h_in - 1) * sh + kh + oph;
        let full_w = (w_in - 1) * sw + kw + opw;
        if full_h <= 2 * ph || full_w <= 2 * pw {
            return Err(Error::contract(format!(
                "transposed convolution padding {ph}x{pw} consumes the whole output"
            )));
        }
        let geom = ConvGeom::conv(
            c_out_t,
            (full_h - 2 * ph, full_w - 2 * pw),
            c_in_t,
            (kh, kw),
            (sh, sw),
            (ph, pw),
        )?;
        debug_assert_eq!((geom.h_out, geom.w_out), (h_in, w_in));
        Ok(geom)
    }

    pub fn col_rows(&self) -> usize {
        self.c_in * self.kh * self.kw
    }

    pub fn col_cols(&self) -> usize {
        self.h_out * self.w_out
    }

    pub fn in_len(&self) -> usize {
        self.c_in * self.h_in * self.w_in
    }

    pub fn out_len(&self) -> usize {
        self.c_out * self.h_out * self.w_out
    }

    pub fn weight_len(&self) -> usize {
        self.c_out * self.col_rows()
    }

    /// Walk every (column-row, column-col, input offset) triple that lands
    /// inside the unpadded input.
    #[inline]
    fn for_each_tap(&self, mut f: impl FnMut(usize, usize)) {
        let cols = self.col_cols();
        for ci in 0..self.c_in {
            for ky in 0..self.kh {
                for kx in 0..self.kw {
                    let row = (ci * self.kh + ky) * self.kw + kx;
                    for oy in 0..self.h_out {
                        let iy = (oy * self.sh + ky) as isize - self.ph as isize;
                        if iy < 0 || iy >= self.h_in as isize {
                            continue;
                        }
                        let in_row = (ci * self.h_in + iy as usize) * self.w_in;
                        let col_row = row * cols + oy * self.w_out;
                        for ox in 0..self.w_out {
                            let ix = (ox * self.sw + kx) as isize - self.pw as isize;
                            if ix < 0 || ix >= self.w_in as isize {
                                continue;
                            }
                            f(col_row + ox, in_row + ix as usize);
                        }
                    }
                }
            }
        }
    }

    pub(crate) fn im2col(&self, input: &[f64]) -> Vec<f64> {
        let mut cols = vec![0.0; self.col_rows() * self.col_cols()];
        self.for_each_tap(|c, i| cols[c] = input[i]);
        cols
    }

    pub(crate) fn col2im(&self, cols: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.in_len()];
        self.for_each_tap(|c, i| out[i] += cols[c]);
        out
    }

    /// Convolution forward: `[c_in,h_in,w_in] -> [c_out,h_out,w_out]`,
    /// weights `[c_out, c_in, kh, kw]`.
    pub(crate) fn forward(&self, input: &[f64], weight: &[f64]) -> Vec<f64> {
        let cols = self.im2col(input);
        let mut out = vec![0.0; self.out_len()];
        gemm(
            self.c_out,
            self.col_rows(),
            self.col_cols(),
            weight,
            false,
            &cols,
            false,
            &mut out,
            false,
        );
        out
    }

    /// Adjoint of `forward` in its input: `[c_out,h_out,w_out] -> [c_in,h_in,w_in]`.
    pub(crate) fn backward_data(&self, grad_out: &[f64], weight: &[f64]) -> Vec<f64> {
        let mut cols = vec![0.0; self.col_rows() * self.col_cols()];
        gemm(
            self.col_rows(),
            self.c_out,
            self.col_cols(),
            weight,
            true,
            grad_out,
            false,
            &mut cols,
            false,
        );
        self.col2im(&cols)
    }

    /// Gradient of `<grad_out, forward(input, w)>` in `w`.
    pub(crate) fn backward_weight(&self, input: &[f64], grad_out: &[f64]) -> Vec<f64> {
        let cols = self.im2col(input);
        let mut gw = vec![0.0; self.weight_len()];
        gemm(
            self.c_out,
            self.col_cols(),
            self.col_rows(),
            grad_out,
            false,
            &cols,
            true,
            &mut gw,
            false,
        );
        gw
    }
}

#[inline]
pub(crate) fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
