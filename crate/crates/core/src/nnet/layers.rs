//! Layer kernels with explicit forward and backward passes.
//!
//! Everything is batch-major (`[B, ...]`) and row-major. Convolutions lower to
//! GEMM through im2col.

/// `c = a * b + beta * c` with `a` `m x k` and `b` `k x n`, both row-major;
/// `a_t`/`b_t` mean the operand is stored transposed.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_t: bool,
    b: &[f64],
    b_t: bool,
    beta: f64,
    c: &mut [f64],
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    let (rsa, csa) = if a_t {
        (1, m as isize)
    } else {
        (k as isize, 1)
    };
    let (rsb, csb) = if b_t {
        (1, k as isize)
    } else {
        (n as isize, 1)
    };
    // SAFETY: the slices cover exactly the strided extents described above.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Geometry of a square-kernel convolution with "same"-style padding `k / 2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub in_c: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub out_c: usize,
    pub kernel: usize,
    pub stride: usize,
}

impl ConvGeom {
    pub fn pad(&self) -> usize {
        self.kernel / 2
    }

    pub fn out_h(&self) -> usize {
        (self.in_h + 2 * self.pad() - self.kernel) / self.stride + 1
    }

    pub fn out_w(&self) -> usize {
        (self.in_w + 2 * self.pad() - self.kernel) / self.stride + 1
    }

    pub fn patch(&self) -> usize {
        self.in_c * self.kernel * self.kernel
    }

    pub fn in_len(&self) -> usize {
        self.in_c * self.in_h * self.in_w
    }

    pub fn out_len(&self) -> usize {
        self.out_c * self.out_h() * self.out_w()
    }

    fn im2col(&self, x: &[f64], cols: &mut [f64]) {
        let (oh, ow, k, s, p) = (
            self.out_h(),
            self.out_w(),
            self.kernel,
            self.stride,
            self.pad(),
        );
        let plane = oh * ow;
        for c in 0..self.in_c {
            let xc = &x[c * self.in_h * self.in_w..(c + 1) * self.in_h * self.in_w];
            for ky in 0..k {
                for kx in 0..k {
                    let row = (c * k + ky) * k + kx;
                    let dst = &mut cols[row * plane..(row + 1) * plane];
                    for oy in 0..oh {
                        let iy = (oy * s + ky) as isize - p as isize;
                        let line = &mut dst[oy * ow..(oy + 1) * ow];
                        if iy < 0 || iy >= self.in_h as isize {
                            line.fill(0.0);
                            continue;
                        }
                        let src = &xc[iy as usize * self.in_w..(iy as usize + 1) * self.in_w];
                        for (ox, v) in line.iter_mut().enumerate() {
                            let ix = (ox * s + kx) as isize - p as isize;
                            *v = if ix < 0 || ix >= self.in_w as isize {
                                0.0
                            } else {
                                src[ix as usize]
                            };
                        }
                    }
                }
            }
        }
    }

    fn col2im(&self, cols: &[f64], dx: &mut [f64]) {
        let (oh, ow, k, s, p) = (
            self.out_h(),
            self.out_w(),
            self.kernel,
            self.stride,
            self.pad(),
        );
        let plane = oh * ow;
        for c in 0..self.in_c {
            let dxc = &mut dx[c * self.in_h * self.in_w..(c + 1) * self.in_h * self.in_w];
            for ky in 0..k {
                for kx in 0..k {
                    let row = (c * k + ky) * k + kx;
                    let src = &cols[row * plane..(row + 1) * plane];
                    for oy in 0..oh {
                        let iy = (oy * s + ky) as isize - p as isize;
                        if iy < 0 || iy >= self.in_h as isize {
                            continue;
                        }
                        let line = &mut dxc[iy as usize * self.in_w..(iy as usize + 1) * self.in_w];
                        for ox in 0..ow {
                            let ix = (ox * s + kx) as isize - p as isize;
                            if ix >= 0 && ix < self.in_w as isize {
                                line[ix as usize] += src[oy * ow + ox];
                            }
                        }
                    }
                }
            }
        }
    }

    /// Forward over a batch. Returns the im2col buffers when `keep_cols`.
    pub fn forward(
        &self,
        x: &[f64],
        weight: &[f64],
        bias: &[f64],
        batch: usize,
        keep_cols: bool,
    ) -> (Vec<f64>, Option<Vec<f64>>) {
        let plane = self.out_h() * self.out_w();
        let col_len = self.patch() * plane;
        let mut out = vec![0.0; batch * self.out_len()];
        let mut kept = keep_cols.then(|| vec![0.0; batch * col_len]);
        let mut scratch = if keep_cols {
            Vec::new()
        } else {
            vec![0.0; col_len]
        };
        for b in 0..batch {
            let xb = &x[b * self.in_len()..(b + 1) * self.in_len()];
            let cols: &mut [f64] = match kept.as_mut() {
                Some(all) => &mut all[b * col_len..(b + 1) * col_len],
                None => &mut scratch,
            };
            self.im2col(xb, cols);
            let ob = &mut out[b * self.out_len()..(b + 1) * self.out_len()];
            for (oc, chunk) in ob.chunks_mut(plane).enumerate() {
                chunk.fill(bias[oc]);
            }
            gemm(
                self.out_c,
                self.patch(),
                plane,
                weight,
                false,
                cols,
                false,
                1.0,
                ob,
            );
        }
        (out, kept)
    }

    /// Accumulates weight/bias gradients and returns the input gradient when
    /// `want_dx`.
    #[allow(clippy::too_many_arguments)]
    pub fn backward(
        &self,
        dy: &[f64],
        cols: &[f64],
        weight: &[f64],
        batch: usize,
        dweight: &mut [f64],
        dbias: &mut [f64],
        want_dx: bool,
    ) -> Option<Vec<f64>> {
        let plane = self.out_h() * self.out_w();
        let col_len = self.patch() * plane;
        let mut dx = want_dx.then(|| vec![0.0; batch * self.in_len()]);
        let mut dcols = vec![0.0; if want_dx { col_len } else { 0 }];
        for b in 0..batch {
            let dyb = &dy[b * self.out_len()..(b + 1) * self.out_len()];
            let cb = &cols[b * col_len..(b + 1) * col_len];
            gemm(
                self.out_c,
                plane,
                self.patch(),
                dyb,
                false,
                cb,
                true,
                1.0,
                dweight,
            );
            for (oc, chunk) in dyb.chunks(plane).enumerate() {
                dbias[oc] += chunk.iter().sum::<f64>();
            }
            if let Some(dx) = dx.as_mut() {
                gemm(
                    self.patch(),
                    self.out_c,
                    plane,
                    weight,
                    true,
                    dyb,
                    false,
                    0.0,
                    &mut dcols,
                );
                self.col2im(&dcols, &mut dx[b * self.in_len()..(b + 1) * self.in_len()]);
            }
        }
        dx
    }
}

/// `y[B, out] = x[B, in] * W^T + b` with `W` stored `[out, in]`.
pub fn linear_forward(
    x: &[f64],
    weight: &[f64],
    bias: &[f64],
    batch: usize,
    inp: usize,
    out: usize,
) -> Vec<f64> {
    let mut y = Vec::with_capacity(batch * out);
    for _ in 0..batch {
        y.extend_from_slice(bias);
    }
    gemm(batch, inp, out, x, false, weight, true, 1.0, &mut y);
    y
}

#[allow(clippy::too_many_arguments)]
pub fn linear_backward(
    dy: &[f64],
    x: &[f64],
    weight: &[f64],
    batch: usize,
    inp: usize,
    out: usize,
    dweight: &mut [f64],
    dbias: &mut [f64],
    want_dx: bool,
) -> Option<Vec<f64>> {
    gemm(out, batch, inp, dy, true, x, false, 1.0, dweight);
    for row in dy.chunks(out) {
        for (d, g) in dbias.iter_mut().zip(row) {
            *d += g;
        }
    }
    want_dx.then(|| {
        let mut dx = vec![0.0; batch * inp];
        gemm(batch, out, inp, dy, false, weight, false, 0.0, &mut dx);
        dx
    })
}

pub fn relu_inplace(x: &mut [f64]) {
    for v in x.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// Zeroes gradient entries whose forward output was clamped.
pub fn relu_backward_inplace(dy: &mut [f64], y: &[f64]) {
    for (d, &v) in dy.iter_mut().zip(y) {
        if v <= 0.0 {
            *d = 0.0;
        }
    }
}

/// 2x2 max pool with stride 2 over `[B*C, H, W]` planes (odd trailing
/// rows/columns are dropped). Returns the output and the flat argmax index of
/// each output cell within its plane.
pub fn maxpool2_forward(x: &[f64], planes: usize, h: usize, w: usize) -> (Vec<f64>, Vec<u32>) {
    let (oh, ow) = (h / 2, w / 2);
    let mut out = vec![0.0; planes * oh * ow];
    let mut arg = vec![0u32; planes * oh * ow];
    for p in 0..planes {
        let xp = &x[p * h * w..(p + 1) * h * w];
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = (2 * oy) * w + 2 * ox;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = (2 * oy + dy) * w + 2 * ox + dx;
                    if xp[idx] > xp[best] {
                        best = idx;
                    }
                }
                let o = p * oh * ow + oy * ow + ox;
                out[o] = xp[best];
                arg[o] = best as u32;
            }
        }
    }
    (out, arg)
}

pub fn maxpool2_backward(dy: &[f64], arg: &[u32], planes: usize, h: usize, w: usize) -> Vec<f64> {
    let per = (h / 2) * (w / 2);
    let mut dx = vec![0.0; planes * h * w];
    for p in 0..planes {
        for o in 0..per {
            dx[p * h * w + arg[p * per + o] as usize] += dy[p * per + o];
        }
    }
    dx
}
