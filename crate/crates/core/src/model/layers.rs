//! Layer kernels with their adjoints. Tensors are single-sample, channel-major
//! `[channels][height][width]` slices.

use super::real::Real;

/// `[cin * 9][h * w]` patch matrix for a 3x3 convolution with zero padding 1.
pub fn im2col<T: Real>(x: &[T], cin: usize, h: usize, w: usize, col: &mut Vec<T>) {
    let hw = h * w;
    col.clear();
    col.resize(cin * 9 * hw, T::ZERO);
    for ci in 0..cin {
        let plane = &x[ci * hw..(ci + 1) * hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let dst = &mut col[((ci * 9) + ky * 3 + kx) * hw..][..hw];
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let src_row = &plane[sy as usize * w..(sy as usize + 1) * w];
                    let dst_row = &mut dst[y * w..(y + 1) * w];
                    // dst[x] = src[x + kx - 1]
                    match kx {
                        0 => dst_row[1..].copy_from_slice(&src_row[..w - 1]),
                        1 => dst_row.copy_from_slice(src_row),
                        _ => dst_row[..w - 1].copy_from_slice(&src_row[1..]),
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters `col` back and accumulates into `dx`.
pub fn col2im<T: Real>(col: &[T], cin: usize, h: usize, w: usize, dx: &mut [T]) {
    let hw = h * w;
    for ci in 0..cin {
        let plane = &mut dx[ci * hw..(ci + 1) * hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let src = &col[((ci * 9) + ky * 3 + kx) * hw..][..hw];
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let dst_row = &mut plane[sy as usize * w..(sy as usize + 1) * w];
                    let src_row = &src[y * w..(y + 1) * w];
                    match kx {
                        0 => dst_row[..w - 1]
                            .iter_mut()
                            .zip(&src_row[1..])
                            .for_each(|(d, s)| *d += *s),
                        1 => dst_row.iter_mut().zip(src_row).for_each(|(d, s)| *d += *s),
                        _ => dst_row[1..]
                            .iter_mut()
                            .zip(&src_row[..w - 1])
                            .for_each(|(d, s)| *d += *s),
                    }
                }
            }
        }
    }
}

/// 3x3 same-padding convolution. `weight` is `[cout][cin][3][3]`.
#[allow(clippy::too_many_arguments)]
pub fn conv3x3_forward<T: Real>(
    x: &[T],
    cin: usize,
    h: usize,
    w: usize,
    weight: &[T],
    bias: &[T],
    cout: usize,
    col: &mut Vec<T>,
    y: &mut Vec<T>,
) {
    let hw = h * w;
    im2col(x, cin, h, w, col);
    y.clear();
    y.reserve(cout * hw);
    for &b in bias.iter().take(cout) {
        y.extend(std::iter::repeat_n(b, hw));
    }
    let k = cin * 9;
    T::gemm(cout, k, hw, T::ONE, weight, k as isize, 1, col, hw as isize, 1, T::ONE, y, hw as isize, 1);
}

/// Accumulates weight and bias gradients; returns `dx` when `need_dx`.
#[allow(clippy::too_many_arguments)]
pub fn conv3x3_backward<T: Real>(
    x: &[T],
    cin: usize,
    h: usize,
    w: usize,
    weight: &[T],
    cout: usize,
    dy: &[T],
    dweight: &mut [T],
    dbias: &mut [T],
    need_dx: bool,
    col: &mut Vec<T>,
) -> Option<Vec<T>> {
    let hw = h * w;
    let k = cin * 9;
    im2col(x, cin, h, w, col);
    // dW[cout][k] += dy[cout][hw] * col[k][hw]^T
    T::gemm(cout, hw, k, T::ONE, dy, hw as isize, 1, col, 1, hw as isize, T::ONE, dweight, k as isize, 1);
    for (co, db) in dbias.iter_mut().enumerate().take(cout) {
        let mut s = T::ZERO;
        for &v in &dy[co * hw..(co + 1) * hw] {
            s += v;
        }
        *db += s;
    }
    if !need_dx {
        return None;
    }
    // dcol[k][hw] = W^T[k][cout] * dy[cout][hw]
    let mut dcol = vec![T::ZERO; k * hw];
    T::gemm(k, cout, hw, T::ONE, weight, 1, k as isize, dy, hw as isize, 1, T::ZERO, &mut dcol, hw as isize, 1);
    let mut dx = vec![T::ZERO; cin * hw];
    col2im(&dcol, cin, h, w, &mut dx);
    Some(dx)
}

/// Pixel shuffle: `[4c][h][w]` -> `[c][2h][2w]`, with
/// `out[c][2y + i][2x + j] = in[4c + 2i + j][y][x]`.
pub fn depth_to_space<T: Real>(x: &[T], c: usize, h: usize, w: usize) -> Vec<T> {
    let (oh, ow) = (2 * h, 2 * w);
    let mut out = vec![T::ZERO; c * oh * ow];
    for ch in 0..c {
        for i in 0..2 {
            for j in 0..2 {
                let src = &x[(4 * ch + 2 * i + j) * h * w..][..h * w];
                for y in 0..h {
                    let dst = &mut out[ch * oh * ow + (2 * y + i) * ow..][..ow];
                    for xx in 0..w {
                        dst[2 * xx + j] = src[y * w + xx];
                    }
                }
            }
        }
    }
    out
}

/// Adjoint (and inverse) of [`depth_to_space`].
pub fn space_to_depth<T: Real>(x: &[T], c: usize, oh: usize, ow: usize) -> Vec<T> {
    let (h, w) = (oh / 2, ow / 2);
    let mut out = vec![T::ZERO; 4 * c * h * w];
    for ch in 0..c {
        for i in 0..2 {
            for j in 0..2 {
                let dst = &mut out[(4 * ch + 2 * i + j) * h * w..][..h * w];
                for y in 0..h {
                    let src = &x[ch * oh * ow + (2 * y + i) * ow..][..ow];
                    for xx in 0..w {
                        dst[y * w + xx] = src[2 * xx + j];
                    }
                }
            }
        }
    }
    out
}

#[inline]
pub fn sigmoid<T: Real>(x: T) -> T {
    T::ONE / (T::ONE + (-x).exp())
}

#[inline]
pub fn relu<T: Real>(x: T) -> T {
    if x > T::ZERO {
        x
    } else {
        T::ZERO
    }
}
