// Numeric kernels behind the tape operations. All buffers are row-major.

use alloc::vec;
use alloc::vec::Vec;

/// `c = alpha * a(m×k) · b(k×n) + beta * c`, with explicit strides so
/// transposed operands need no copy.
#[allow(clippy::too_many_arguments)]
#[inline]
pub(super) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (isize, isize),
    b: &[f64],
    (rsb, csb): (isize, isize),
    beta: f64,
    c: &mut [f64],
) {
    debug_assert!(c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: strides and extents were derived from the slice lengths by the
    // callers; the debug assertions above and in callers check the bounds.
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

#[derive(Clone, Copy, Debug)]
pub(super) struct ConvGeom {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub kh: usize,
    pub kw: usize,
    pub sh: usize,
    pub sw: usize,
    pub ph: usize,
    pub pw: usize,
    pub ho: usize,
    pub wo: usize,
}

impl ConvGeom {
    pub fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.sh == 1 && self.sw == 1 && self.ph == 0 && self.pw == 0
    }

    pub fn patch(&self) -> usize {
        self.c * self.kh * self.kw
    }

    pub fn out_px(&self) -> usize {
        self.ho * self.wo
    }
}

/// Unfolds one CHW sample into a `(C·kh·kw) × (ho·wo)` column matrix.
pub(super) fn im2col(x: &[f64], g: &ConvGeom, cols: &mut [f64]) {
    let npx = g.out_px();
    for ci in 0..g.c {
        let plane = &x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (ci * g.kh + ki) * g.kw + kj;
                let dst = &mut cols[row * npx..(row + 1) * npx];
                for oy in 0..g.ho {
                    let iy = (oy * g.sh + ki) as isize - g.ph as isize;
                    let drow = &mut dst[oy * g.wo..(oy + 1) * g.wo];
                    if iy < 0 || iy >= g.h as isize {
                        drow.iter_mut().for_each(|v| *v = 0.0);
                        continue;
                    }
                    let src = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    if g.sw == 1 {
                        // Contiguous run with zero fill at the borders.
                        let off = kj as isize - g.pw as isize;
                        for (ox, d) in drow.iter_mut().enumerate() {
                            let ix = ox as isize + off;
                            *d = if ix >= 0 && (ix as usize) < g.w { src[ix as usize] } else { 0.0 };
                        }
                    } else {
                        for (ox, d) in drow.iter_mut().enumerate() {
                            let ix = (ox * g.sw + kj) as isize - g.pw as isize;
                            *d = if ix >= 0 && (ix as usize) < g.w { src[ix as usize] } else { 0.0 };
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters columns back, accumulating into `dx`.
pub(super) fn col2im(cols: &[f64], g: &ConvGeom, dx: &mut [f64]) {
    let npx = g.out_px();
    for ci in 0..g.c {
        let plane = &mut dx[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (ci * g.kh + ki) * g.kw + kj;
                let src = &cols[row * npx..(row + 1) * npx];
                for oy in 0..g.ho {
                    let iy = (oy * g.sh + ki) as isize - g.ph as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let drow = &mut plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    let srow = &src[oy * g.wo..(oy + 1) * g.wo];
                    for (ox, &v) in srow.iter().enumerate() {
                        let ix = (ox * g.sw + kj) as isize - g.pw as isize;
                        if ix >= 0 && (ix as usize) < g.w {
                            drow[ix as usize] += v;
                        }
                    }
                }
            }
        }
    }
}

pub(super) fn conv2d_forward(
    x: &[f64],
    n: usize,
    wgt: &[f64],
    o: usize,
    bias: Option<&[f64]>,
    g: &ConvGeom,
) -> Vec<f64> {
    let in_sz = g.c * g.h * g.w;
    let out_sz = o * g.out_px();
    let npx = g.out_px();
    let kk = g.patch();
    let mut out = vec![0.0; n * out_sz];
    let mut cols = if g.is_pointwise() { Vec::new() } else { vec![0.0; kk * npx] };
    for s in 0..n {
        let xs = &x[s * in_sz..(s + 1) * in_sz];
        let ys = &mut out[s * out_sz..(s + 1) * out_sz];
        if let Some(b) = bias {
            for (oc, &bv) in b.iter().enumerate() {
                ys[oc * npx..(oc + 1) * npx].iter_mut().for_each(|v| *v = bv);
            }
        }
        let beta = if bias.is_some() { 1.0 } else { 0.0 };
        let colm: &[f64] = if g.is_pointwise() {
            xs
        } else {
            im2col(xs, g, &mut cols);
            &cols
        };
        gemm(o, kk, npx, wgt, (kk as isize, 1), colm, (npx as isize, 1), beta, ys);
    }
    out
}

/// Gradients of a convolution. Each output buffer is optional and accumulated into.
#[allow(clippy::too_many_arguments)]
pub(super) fn conv2d_backward(
    x: &[f64],
    n: usize,
    wgt: &[f64],
    o: usize,
    g: &ConvGeom,
    dy: &[f64],
    mut dx: Option<&mut [f64]>,
    mut dw: Option<&mut [f64]>,
    mut db: Option<&mut [f64]>,
) {
    let in_sz = g.c * g.h * g.w;
    let npx = g.out_px();
    let out_sz = o * npx;
    let kk = g.patch();
    let mut cols = if g.is_pointwise() { Vec::new() } else { vec![0.0; kk * npx] };
    let mut dcols = if dx.is_some() { vec![0.0; kk * npx] } else { Vec::new() };
    for s in 0..n {
        let xs = &x[s * in_sz..(s + 1) * in_sz];
        let dys = &dy[s * out_sz..(s + 1) * out_sz];
        if let Some(db) = db.as_deref_mut() {
            for (oc, acc) in db.iter_mut().enumerate() {
                *acc += dys[oc * npx..(oc + 1) * npx].iter().sum::<f64>();
            }
        }
        if let Some(dw) = dw.as_deref_mut() {
            let colm: &[f64] = if g.is_pointwise() {
                xs
            } else {
                im2col(xs, g, &mut cols);
                &cols
            };
            // dW(o×kk) += dY(o×npx) · colsᵀ(npx×kk)
            gemm(o, npx, kk, dys, (npx as isize, 1), colm, (1, npx as isize), 1.0, dw);
        }
        if let Some(dx) = dx.as_deref_mut() {
            let dxs = &mut dx[s * in_sz..(s + 1) * in_sz];
            if g.is_pointwise() {
                // dX(c×npx) += Wᵀ(c×o) · dY(o×npx)
                gemm(kk, o, npx, wgt, (1, kk as isize), dys, (npx as isize, 1), 1.0, dxs);
            } else {
                gemm(kk, o, npx, wgt, (1, kk as isize), dys, (npx as isize, 1), 0.0, &mut dcols);
                col2im(&dcols, g, dxs);
            }
        }
    }
}

/// Half-open `[start, end)` of bin `i` when `len` is split into `bins` contiguous bins.
#[inline]
pub(crate) fn bin_bounds(i: usize, len: usize, bins: usize) -> (usize, usize) {
    (i * len / bins, (i + 1) * len / bins)
}
