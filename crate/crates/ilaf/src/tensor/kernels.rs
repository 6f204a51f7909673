//! Raw compute kernels. All reductions accumulate in f64 and round to f32
//! once per output element.

/// C[m,n] = A[m,k] * B[k,n]
pub fn matmul(a: &[f32], b: &[f32], m: usize, k: usize, n: usize, out: &mut [f32]) {
    debug_assert_eq!(out.len(), m * n);
    let mut acc = vec![0.0f64; n];
    for i in 0..m {
        for v in acc.iter_mut() {
            *v = 0.0;
        }
        let arow = &a[i * k..(i + 1) * k];
        for (p, &aip) in arow.iter().enumerate() {
            if aip == 0.0 {
                continue;
            }
            let aip = aip as f64;
            let brow = &b[p * n..(p + 1) * n];
            for (j, &bpj) in brow.iter().enumerate() {
                acc[j] += aip * bpj as f64;
            }
        }
        for j in 0..n {
            out[i * n + j] = acc[j] as f32;
        }
    }
}

/// dA[m,k] += dC[m,n] * B[k,n]^T   (accumulated in f64 scratch)
pub fn matmul_grad_a(dc: &[f32], b: &[f32], m: usize, k: usize, n: usize, da: &mut [f32]) {
    for i in 0..m {
        let drow = &dc[i * n..(i + 1) * n];
        for p in 0..k {
            let brow = &b[p * n..(p + 1) * n];
            let mut acc = 0.0f64;
            for j in 0..n {
                acc += drow[j] as f64 * brow[j] as f64;
            }
            da[i * k + p] += acc as f32;
        }
    }
}

/// dB[k,n] += A[m,k]^T * dC[m,n]
pub fn matmul_grad_b(a: &[f32], dc: &[f32], m: usize, k: usize, n: usize, db: &mut [f32]) {
    let mut acc = vec![0.0f64; k * n];
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let drow = &dc[i * n..(i + 1) * n];
        for (p, &aip) in arow.iter().enumerate() {
            if aip == 0.0 {
                continue;
            }
            let aip = aip as f64;
            let dst = &mut acc[p * n..(p + 1) * n];
            for (j, &dj) in drow.iter().enumerate() {
                dst[j] += aip * dj as f64;
            }
        }
    }
    for (dst, &v) in db.iter_mut().zip(acc.iter()) {
        *dst += v as f32;
    }
}

/// Spatial geometry of a conv / pool op.
#[derive(Debug, Clone, Copy)]
pub struct Conv2dGeom {
    pub batch: usize,
    pub in_c: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub out_c: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad_top: usize,
    pub pad_left: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl Conv2dGeom {
    /// `same` keeps ceil(in/stride) spatial size; otherwise valid padding.
    pub fn new(
        batch: usize,
        in_c: usize,
        in_h: usize,
        in_w: usize,
        out_c: usize,
        kh: usize,
        kw: usize,
        stride: usize,
        same: bool,
    ) -> Self {
        let (out_h, out_w, pad_top, pad_left) = if same {
            let out_h = in_h.div_ceil(stride);
            let out_w = in_w.div_ceil(stride);
            let pad_h = ((out_h - 1) * stride + kh).saturating_sub(in_h);
            let pad_w = ((out_w - 1) * stride + kw).saturating_sub(in_w);
            (out_h, out_w, pad_h / 2, pad_w / 2)
        } else {
            ((in_h - kh) / stride + 1, (in_w - kw) / stride + 1, 0, 0)
        };
        Self {
            batch,
            in_c,
            in_h,
            in_w,
            out_c,
            kh,
            kw,
            stride,
            pad_top,
            pad_left,
            out_h,
            out_w,
        }
    }
}

/// Direct convolution. x: [B,Cin,H,W], w: [Cout,Cin,kh,kw], out: [B,Cout,H',W'].
pub fn conv2d(x: &[f32], w: &[f32], g: &Conv2dGeom, out: &mut [f32]) {
    let (ih, iw) = (g.in_h, g.in_w);
    for b in 0..g.batch {
        for co in 0..g.out_c {
            for oh in 0..g.out_h {
                for ow in 0..g.out_w {
                    let mut acc = 0.0f64;
                    for ci in 0..g.in_c {
                        let xbase = ((b * g.in_c + ci) * ih) * iw;
                        let wbase = ((co * g.in_c + ci) * g.kh) * g.kw;
                        for r in 0..g.kh {
                            let y = (oh * g.stride + r) as isize - g.pad_top as isize;
                            if y < 0 || y >= ih as isize {
                                continue;
                            }
                            for c in 0..g.kw {
                                let xcol = (ow * g.stride + c) as isize - g.pad_left as isize;
                                if xcol < 0 || xcol >= iw as isize {
                                    continue;
                                }
                                acc += x[xbase + y as usize * iw + xcol as usize] as f64
                                    * w[wbase + r * g.kw + c] as f64;
                            }
                        }
                    }
                    out[((b * g.out_c + co) * g.out_h + oh) * g.out_w + ow] = acc as f32;
                }
            }
        }
    }
}

/// Gradients of conv2d w.r.t. input and weights.
pub fn conv2d_grad(
    x: &[f32],
    w: &[f32],
    dy: &[f32],
    g: &Conv2dGeom,
    dx: &mut [f32],
    dw: &mut [f32],
) {
    let mut dx64 = vec![0.0f64; dx.len()];
    let mut dw64 = vec![0.0f64; dw.len()];
    let (ih, iw) = (g.in_h, g.in_w);
    for b in 0..g.batch {
        for co in 0..g.out_c {
            for oh in 0..g.out_h {
                for ow in 0..g.out_w {
                    let gy = dy[((b * g.out_c + co) * g.out_h + oh) * g.out_w + ow] as f64;
                    if gy == 0.0 {
                        continue;
                    }
                    for ci in 0..g.in_c {
                        let xbase = ((b * g.in_c + ci) * ih) * iw;
                        let wbase = ((co * g.in_c + ci) * g.kh) * g.kw;
                        for r in 0..g.kh {
                            let y = (oh * g.stride + r) as isize - g.pad_top as isize;
                            if y < 0 || y >= ih as isize {
                                continue;
                            }
                            for c in 0..g.kw {
                                let xcol = (ow * g.stride + c) as isize - g.pad_left as isize;
                                if xcol < 0 || xcol >= iw as isize {
                                    continue;
                                }
                                let xi = xbase + y as usize * iw + xcol as usize;
                                let wi = wbase + r * g.kw + c;
                                dx64[xi] += gy * w[wi] as f64;
                                dw64[wi] += gy * x[xi] as f64;
                            }
                        }
                    }
                }
            }
        }
    }
    for (dst, &v) in dx.iter_mut().zip(dx64.iter()) {
        *dst += v as f32;
    }
    for (dst, &v) in dw.iter_mut().zip(dw64.iter()) {
        *dst += v as f32;
    }
}

/// Max pooling with recorded argmax indices for the backward pass.
pub fn maxpool2d(
    x: &[f32],
    batch: usize,
    chans: usize,
    in_h: usize,
    in_w: usize,
    k: usize,
    stride: usize,
    out: &mut [f32],
    argmax: &mut Vec<u32>,
) {
    let out_h = (in_h - k) / stride + 1;
    let out_w = (in_w - k) / stride + 1;
    argmax.clear();
    argmax.reserve(batch * chans * out_h * out_w);
    for b in 0..batch {
        for c in 0..chans {
            let base = (b * chans + c) * in_h * in_w;
            for oh in 0..out_h {
                for ow in 0..out_w {
                    let mut best = f32::NEG_INFINITY;
                    let mut best_i = 0usize;
                    for r in 0..k {
                        for s in 0..k {
                            let i = base + (oh * stride + r) * in_w + (ow * stride + s);
                            if x[i] > best {
                                best = x[i];
                                best_i = i;
                            }
                        }
                    }
                    out[((b * chans + c) * out_h + oh) * out_w + ow] = best;
                    argmax.push(best_i as u32);
                }
            }
        }
    }
}

/// Fused softmax + cross-entropy over a batch of logit rows.
/// Returns (mean loss in f64, per-row softmax probabilities).
pub fn softmax_ce(logits: &[f32], labels: &[usize], classes: usize) -> (f64, Vec<f32>) {
    let batch = labels.len();
    let mut probs = vec![0.0f32; logits.len()];
    let mut total = 0.0f64;
    for b in 0..batch {
        let row = &logits[b * classes..(b + 1) * classes];
        let max = row.iter().cloned().fold(f32::NEG_INFINITY, f32::max) as f64;
        let mut sum = 0.0f64;
        for (j, &v) in row.iter().enumerate() {
            let e = ((v as f64) - max).exp();
            probs[b * classes + j] = e as f32;
            sum += e;
        }
        for j in 0..classes {
            probs[b * classes + j] = (probs[b * classes + j] as f64 / sum) as f32;
        }
        total += sum.ln() - (row[labels[b]] as f64 - max);
    }
    (total / batch as f64, probs)
}
