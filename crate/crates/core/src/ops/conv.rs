//! Dilated 2-D convolution and its transpose, stride 1, "same" zero padding.
//!
//! Kernels are `[k, k, Cin, Cout]` with odd k. The forward pass gathers:
//!
//! ```text
//! out[n,y,x,co] = bias[co]
//!     + sum_{i,j,ci} input[n, y+(i-k/2)*d, x+(j-k/2)*d, ci] * kernel[i,j,ci,co]
//! ```
//!
//! with out-of-bounds reads treated as zero. The transpose op is the
//! scatter adjoint of that gather, which for stride 1 equals a convolution
//! with the spatially flipped kernel; both forward and backward reuse one
//! direct-convolution core. The inner loops accumulate over contiguous
//! output channels (NHWC), which vectorizes without reassociating any
//! per-element sum, so results do not depend on SIMD width.

use crate::error::TensorError;
use crate::tensor::{Element, Shape, Tensor};

/// Gradients of a convolution with respect to its three inputs.
pub struct ConvGrads<T> {
    pub input: Tensor<T>,
    pub kernel: Tensor<T>,
    pub bias: Vec<T>,
}

/// Spatial extent covered by a dilated kernel: `(k-1)*dilation + 1`.
pub fn effective_extent(kernel: usize, dilation: usize) -> usize {
    (kernel - 1) * dilation + 1
}

fn validate<T: Element>(
    op: &'static str,
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    bias: &[T],
    dilation: usize,
) -> Result<(), TensorError> {
    let ks = kernel.shape();
    if ks.n() != ks.h() {
        return Err(TensorError::InvalidArgument {
            op,
            reason: format!("kernel must be square, got {ks}"),
        });
    }
    if ks.n().is_multiple_of(2) {
        return Err(TensorError::InvalidArgument {
            op,
            reason: format!("kernel size {} must be odd for same padding", ks.n()),
        });
    }
    if dilation < 1 {
        return Err(TensorError::InvalidArgument {
            op,
            reason: format!("dilation {dilation} must be >= 1"),
        });
    }
    if input.shape().c() != ks.w() {
        return Err(TensorError::ChannelMismatch {
            op,
            input_channels: input.shape().c(),
            kernel_channels: ks.w(),
        });
    }
    if bias.len() != ks.c() {
        return Err(TensorError::ParamLength {
            op,
            name: "bias",
            len: bias.len(),
            expected: ks.c(),
        });
    }
    Ok(())
}

/// Kernel tap: vertical offset, horizontal offset, flat offset of the
/// tap's `cin x cout` weight block.
#[derive(Clone, Copy)]
struct Tap {
    dy: isize,
    dx: isize,
    k_off: usize,
}

fn make_taps(k: usize, dilation: usize, cin: usize, cout: usize) -> Vec<Tap> {
    let half = (k / 2) as isize;
    let d = dilation as isize;
    (0..k)
        .flat_map(|i| {
            (0..k).map(move |j| Tap {
                dy: (i as isize - half) * d,
                dx: (j as isize - half) * d,
                k_off: (i * k + j) * cin * cout,
            })
        })
        .collect()
}

/// Accumulates `TILE` output channels of one pixel entirely in registers.
#[allow(clippy::too_many_arguments)]
#[inline(always)]
fn conv_pixel_tile<T: Element, const TILE: usize>(
    taps: &[Tap],
    idata: &[T],
    kdata: &[T],
    row_base: usize,
    y: usize,
    x: usize,
    h: usize,
    w: usize,
    cin: usize,
    cout: usize,
    co: usize,
    bias: Option<&[T]>,
    out: &mut [T],
) {
    let mut acc = [T::zero(); TILE];
    if let Some(b) = bias {
        acc.copy_from_slice(&b[co..co + TILE]);
    }
    for tap in taps {
        let yy = y as isize + tap.dy;
        let xx = x as isize + tap.dx;
        if yy < 0 || yy >= h as isize || xx < 0 || xx >= w as isize {
            continue;
        }
        let px = (row_base + yy as usize * w + xx as usize) * cin;
        let px = &idata[px..px + cin];
        let kk = &kdata[tap.k_off..];
        for (ci, &a) in px.iter().enumerate() {
            let w_row = &kk[ci * cout + co..ci * cout + co + TILE];
            for l in 0..TILE {
                acc[l] = acc[l] + a * w_row[l];
            }
        }
    }
    out[..TILE].copy_from_slice(&acc);
}

/// Direct gather convolution; the workhorse behind every conv-shaped pass.
/// `bias` of `None` starts accumulation at zero. Output channels are
/// processed in register tiles of 16/8/4/2/1 so no partial sum touches
/// memory; a single output channel instead vectorizes over input channels.
fn direct_conv<T: Element>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    bias: Option<&[T]>,
    dilation: usize,
) -> Tensor<T> {
    let (n_batch, h, w, cin) = {
        let s = input.shape();
        (s.n(), s.h(), s.w(), s.c())
    };
    let k = kernel.shape().n();
    let cout = kernel.shape().c();
    let taps = make_taps(k, dilation, cin, cout);

    let mut out = Tensor::zeros(Shape::nhwc(n_batch, h, w, cout));
    let kdata = kernel.data();
    let idata = input.data();
    let odata = out.data_mut();

    for n in 0..n_batch {
        let row_base = n * h * w;
        for y in 0..h {
            for x in 0..w {
                let out_base = ((row_base + y * w) + x) * cout;
                if cout == 1 {
                    let mut sum = bias.map_or(T::zero(), |b| b[0]);
                    for tap in &taps {
                        let yy = y as isize + tap.dy;
                        let xx = x as isize + tap.dx;
                        if yy < 0 || yy >= h as isize || xx < 0 || xx >= w as isize {
                            continue;
                        }
                        let px = (row_base + yy as usize * w + xx as usize) * cin;
                        sum = sum
                            + dot_lanes(&idata[px..px + cin], &kdata[tap.k_off..tap.k_off + cin]);
                    }
                    odata[out_base] = sum;
                    continue;
                }

                let mut co = 0;
                while cout - co >= 16 {
                    conv_pixel_tile::<T, 16>(
                        &taps, idata, kdata, row_base, y, x, h, w, cin, cout, co, bias,
                        &mut odata[out_base + co..],
                    );
                    co += 16;
                }
                if cout - co >= 8 {
                    conv_pixel_tile::<T, 8>(
                        &taps, idata, kdata, row_base, y, x, h, w, cin, cout, co, bias,
                        &mut odata[out_base + co..],
                    );
                    co += 8;
                }
                if cout - co >= 4 {
                    conv_pixel_tile::<T, 4>(
                        &taps, idata, kdata, row_base, y, x, h, w, cin, cout, co, bias,
                        &mut odata[out_base + co..],
                    );
                    co += 4;
                }
                if cout - co >= 2 {
                    conv_pixel_tile::<T, 2>(
                        &taps, idata, kdata, row_base, y, x, h, w, cin, cout, co, bias,
                        &mut odata[out_base + co..],
                    );
                    co += 2;
                }
                if cout - co == 1 {
                    conv_pixel_tile::<T, 1>(
                        &taps, idata, kdata, row_base, y, x, h, w, cin, cout, co, bias,
                        &mut odata[out_base + co..],
                    );
                }
            }
        }
    }
    out
}

/// Dot product of two equal-length slices using four accumulation lanes
/// folded in a fixed order.
#[inline]
fn dot_lanes<T: Element>(a: &[T], b: &[T]) -> T {
    let mut lanes = [T::zero(); 4];
    let mut chunks_a = a.chunks_exact(4);
    let mut chunks_b = b.chunks_exact(4);
    for (ca, cb) in (&mut chunks_a).zip(&mut chunks_b) {
        for l in 0..4 {
            lanes[l] = lanes[l] + ca[l] * cb[l];
        }
    }
    let mut sum = ((lanes[0] + lanes[1]) + lanes[2]) + lanes[3];
    for (&ra, &rb) in chunks_a.remainder().iter().zip(chunks_b.remainder()) {
        sum = sum + ra * rb;
    }
    sum
}

/// Flips the kernel spatially: `[i, j, a, b] -> [k-1-i, k-1-j, a, b]`.
fn flip_hw<T: Element>(kernel: &Tensor<T>) -> Tensor<T> {
    let s = kernel.shape();
    let (k, cin, cout) = (s.n(), s.w(), s.c());
    let row = cin * cout;
    let mut out = Tensor::zeros(s);
    for i in 0..k {
        for j in 0..k {
            let src = (i * k + j) * row;
            let dst = ((k - 1 - i) * k + (k - 1 - j)) * row;
            out.data_mut()[dst..dst + row].copy_from_slice(&kernel.data()[src..src + row]);
        }
    }
    out
}

/// Swaps the channel axes of a kernel: `[i, j, a, b] -> [i, j, b, a]`.
fn transpose_channels<T: Element>(kernel: &Tensor<T>) -> Tensor<T> {
    let s = kernel.shape();
    let (k, cin, cout) = (s.n(), s.w(), s.c());
    let mut out = Tensor::zeros(Shape([k, k, cout, cin]));
    for ij in 0..k * k {
        let src = ij * cin * cout;
        let dst = ij * cin * cout;
        for ci in 0..cin {
            for co in 0..cout {
                out.data_mut()[dst + co * cin + ci] = kernel.data()[src + ci * cout + co];
            }
        }
    }
    out
}

/// Stride-1 "same" dilated convolution. Output spatial dims equal input's.
pub fn conv2d<T: Element>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    bias: &[T],
    dilation: usize,
) -> Result<Tensor<T>, TensorError> {
    validate("conv2d", input, kernel, bias, dilation)?;
    Ok(direct_conv(input, kernel, Some(bias), dilation))
}

/// Gradients of [`conv2d`] with respect to input, kernel and bias.
pub fn conv2d_backward<T: Element>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    dilation: usize,
    grad_out: &Tensor<T>,
) -> Result<ConvGrads<T>, TensorError> {
    let cout = kernel.shape().c();
    validate("conv2d_backward", input, kernel, &vec![T::zero(); cout], dilation)?;
    let expected = Shape::nhwc(
        input.shape().n(),
        input.shape().h(),
        input.shape().w(),
        cout,
    );
    if grad_out.shape() != expected {
        return Err(TensorError::ShapeMismatch {
            context: "conv2d_backward grad_out".into(),
            expected,
            got: grad_out.shape(),
        });
    }

    // d/d input: convolve the output gradient with the flipped,
    // channel-transposed kernel at the same dilation.
    let adjoint = flip_hw(&transpose_channels(kernel));
    let grad_input = direct_conv(grad_out, &adjoint, None, dilation);

    let (grad_kernel, grad_bias) = weight_grads(input, kernel.shape(), dilation, grad_out);
    Ok(ConvGrads {
        input: grad_input,
        kernel: grad_kernel,
        bias: grad_bias,
    })
}

/// Row-interval accumulation of `TILE` kernel-gradient lanes in registers:
/// one store per (row, tap, lane group) instead of one per pixel.
#[allow(clippy::too_many_arguments)]
#[inline(always)]
fn weight_row_tile<T: Element, const TILE: usize>(
    in_row: &[T],
    g_row: &[T],
    x_lo: usize,
    x_hi: usize,
    dx: isize,
    cin: usize,
    cout: usize,
    ci: usize,
    co: usize,
    gk_slot: &mut [T],
) {
    let mut acc = [T::zero(); TILE];
    for x in x_lo..x_hi {
        let a = in_row[(x as isize + dx) as usize * cin + ci];
        let g = &g_row[x * cout + co..x * cout + co + TILE];
        for l in 0..TILE {
            acc[l] = acc[l] + a * g[l];
        }
    }
    for l in 0..TILE {
        gk_slot[l] = gk_slot[l] + acc[l];
    }
}

/// Accumulates kernel and bias gradients over every valid tap. Works one
/// output row at a time so the inner loops run over branch-free x ranges.
fn weight_grads<T: Element>(
    input: &Tensor<T>,
    kshape: Shape,
    dilation: usize,
    grad_out: &Tensor<T>,
) -> (Tensor<T>, Vec<T>) {
    let (n_batch, h, w, cin) = {
        let s = input.shape();
        (s.n(), s.h(), s.w(), s.c())
    };
    let (k, cout) = (kshape.n(), kshape.c());
    let half = (k / 2) as isize;
    let d = dilation as isize;

    let mut gk = Tensor::zeros(kshape);
    let mut gb = vec![T::zero(); cout];
    let idata = input.data();
    let gdata = grad_out.data();
    let gkd = gk.data_mut();

    for n in 0..n_batch {
        for y in 0..h {
            let g_row = &gdata[(n * h + y) * w * cout..][..w * cout];
            for px in g_row.chunks_exact(cout) {
                for (b, &g) in gb.iter_mut().zip(px) {
                    *b = *b + g;
                }
            }
            for i in 0..k {
                let yy = y as isize + (i as isize - half) * d;
                if yy < 0 || yy >= h as isize {
                    continue;
                }
                let in_row = &idata[(n * h + yy as usize) * w * cin..][..w * cin];
                for j in 0..k {
                    let dx = (j as isize - half) * d;
                    let x_lo = (-dx).max(0) as usize;
                    let x_hi = (w as isize).min(w as isize - dx).max(0) as usize;
                    if x_lo >= x_hi {
                        continue;
                    }
                    let gk_ij = &mut gkd[(i * k + j) * cin * cout..][..cin * cout];
                    if cout == 1 {
                        // tile over input channels instead: gk row and the
                        // input pixel are both contiguous in ci
                        let mut ci = 0;
                        while cin - ci >= 8 {
                            let mut acc = [T::zero(); 8];
                            for x in x_lo..x_hi {
                                let g = g_row[x];
                                let a = &in_row[(x as isize + dx) as usize * cin + ci..][..8];
                                for l in 0..8 {
                                    acc[l] = acc[l] + g * a[l];
                                }
                            }
                            for l in 0..8 {
                                gk_ij[ci + l] = gk_ij[ci + l] + acc[l];
                            }
                            ci += 8;
                        }
                        for ci in ci..cin {
                            let mut acc = T::zero();
                            for x in x_lo..x_hi {
                                acc = acc
                                    + g_row[x] * in_row[(x as isize + dx) as usize * cin + ci];
                            }
                            gk_ij[ci] = gk_ij[ci] + acc;
                        }
                    } else {
                        for ci in 0..cin {
                            let mut co = 0;
                            while cout - co >= 16 {
                                weight_row_tile::<T, 16>(
                                    in_row, g_row, x_lo, x_hi, dx, cin, cout, ci, co,
                                    &mut gk_ij[ci * cout + co..],
                                );
                                co += 16;
                            }
                            if cout - co >= 8 {
                                weight_row_tile::<T, 8>(
                                    in_row, g_row, x_lo, x_hi, dx, cin, cout, ci, co,
                                    &mut gk_ij[ci * cout + co..],
                                );
                                co += 8;
                            }
                            if cout - co >= 4 {
                                weight_row_tile::<T, 4>(
                                    in_row, g_row, x_lo, x_hi, dx, cin, cout, ci, co,
                                    &mut gk_ij[ci * cout + co..],
                                );
                                co += 4;
                            }
                            if cout - co >= 2 {
                                weight_row_tile::<T, 2>(
                                    in_row, g_row, x_lo, x_hi, dx, cin, cout, ci, co,
                                    &mut gk_ij[ci * cout + co..],
                                );
                                co += 2;
                            }
                            if cout - co == 1 {
                                weight_row_tile::<T, 1>(
                                    in_row, g_row, x_lo, x_hi, dx, cin, cout, ci, co,
                                    &mut gk_ij[ci * cout + co..],
                                );
                            }
                        }
                    }
                }
            }
        }
    }
    (gk, gb)
}

/// Stride-1 "same" transposed convolution: the scatter adjoint of
/// [`conv2d`], i.e. each input element distributes `in * kernel[i,j,ci,co]`
/// onto the output neighborhood around it. Equals convolution with the
/// spatially flipped kernel.
pub fn conv2d_transpose<T: Element>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    bias: &[T],
) -> Result<Tensor<T>, TensorError> {
    validate("conv2d_transpose", input, kernel, bias, 1)?;
    let flipped = flip_hw(kernel);
    Ok(direct_conv(input, &flipped, Some(bias), 1))
}

/// Gradients of [`conv2d_transpose`] with respect to input, kernel and bias.
pub fn conv2d_transpose_backward<T: Element>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> Result<ConvGrads<T>, TensorError> {
    let flipped = flip_hw(kernel);
    let grads = conv2d_backward(input, &flipped, 1, grad_out)?;
    Ok(ConvGrads {
        input: grads.input,
        kernel: flip_hw(&grads.kernel),
        bias: grads.bias,
    })
}
