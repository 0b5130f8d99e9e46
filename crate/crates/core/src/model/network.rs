//! Forward pass with cached activations and its exact reverse pass.
//!
//! Each block: pre-norm → multi-head attention → dropout → residual, then
//! pre-norm → ReLU bottleneck → residual. The encoder output is averaged over
//! time and fed to a ReLU hidden layer, dropout and a softmax classifier.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use super::ops::softmax_in_place;
use super::params::{BlockLayout, ModelWeights};
use crate::matrix::{dot, matmul_a_bt_acc, matmul_acc, matmul_at_b_acc};
use crate::{Error, Matrix, Result, Rng};

const NORM_EPS: f64 = 1e-6;

/// Sinusoidal position code added to the input, `L × d`.
pub fn positional_encoding(len: usize, d: usize) -> Vec<f64> {
    let mut pe = vec![0.0; len * d];
    for t in 0..len {
        for i in 0..d {
            let pair = (i / 2) as f64;
            let angle = t as f64 / libm::pow(10_000.0, 2.0 * pair / d as f64);
            pe[t * d + i] = if i % 2 == 0 {
                libm::sin(angle)
            } else {
                libm::cos(angle)
            };
        }
    }
    pe
}

/// Inverted-dropout mask: each entry is `0` with probability `rate`, else
/// `1 / (1 − rate)`.
pub fn dropout_mask(len: usize, rate: f64, rng: &mut Rng) -> Vec<f64> {
    let keep = 1.0 - rate;
    (0..len)
        .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
        .collect()
}

/// Single-head scaled dot-product attention over `len` positions of width
/// `width`. Returns the attended values and the attention weights.
pub fn scaled_dot_attention(q: &[f64], k: &[f64], v: &[f64], len: usize, width: usize) -> (Vec<f64>, Vec<f64>) {
    let scale = 1.0 / libm::sqrt(width as f64);
    let mut probs = vec![0.0; len * len];
    matmul_a_bt_acc(q, k, &mut probs, len, width, len);
    for row in probs.chunks_exact_mut(len) {
        row.iter_mut().for_each(|s| *s *= scale);
        softmax_in_place(row);
    }
    let mut out = vec![0.0; len * width];
    matmul_acc(&probs, v, &mut out, len, len, width);
    (out, probs)
}

struct NormCache {
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
}

fn layer_norm(x: &[f64], len: usize, d: usize, scale: &[f64], shift: &[f64]) -> (Vec<f64>, NormCache) {
    let mut out = vec![0.0; len * d];
    let mut xhat = vec![0.0; len * d];
    let mut inv_std = vec![0.0; len];
    for t in 0..len {
        let row = &x[t * d..(t + 1) * d];
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let is = 1.0 / libm::sqrt(var + NORM_EPS);
        inv_std[t] = is;
        for i in 0..d {
            let h = (row[i] - mean) * is;
            xhat[t * d + i] = h;
            out[t * d + i] = h * scale[i] + shift[i];
        }
    }
    (out, NormCache { xhat, inv_std })
}

/// Accumulates scale/shift gradients and returns the input gradient.
fn layer_norm_backward(
    dy: &[f64],
    cache: &NormCache,
    len: usize,
    d: usize,
    scale: &[f64],
    dscale: &mut [f64],
    dshift: &mut [f64],
) -> Vec<f64> {
    let mut dx = vec![0.0; len * d];
    let mut dxhat = vec![0.0; d];
    for t in 0..len {
        let dyr = &dy[t * d..(t + 1) * d];
        let xh = &cache.xhat[t * d..(t + 1) * d];
        for i in 0..d {
            dscale[i] += dyr[i] * xh[i];
            dshift[i] += dyr[i];
            dxhat[i] = dyr[i] * scale[i];
        }
        let sum: f64 = dxhat.iter().sum();
        let sum_xh = dot(&dxhat, xh);
        let k = cache.inv_std[t] / d as f64;
        for i in 0..d {
            dx[t * d + i] = k * (d as f64 * dxhat[i] - sum - xh[i] * sum_xh);
        }
    }
    dx
}

fn add_bias(x: &mut [f64], bias: &[f64]) {
    for row in x.chunks_exact_mut(bias.len()) {
        row.iter_mut().zip(bias).for_each(|(v, b)| *v += b);
    }
}

fn col_sum_acc(x: &[f64], out: &mut [f64]) {
    for row in x.chunks_exact(out.len()) {
        out.iter_mut().zip(row).for_each(|(o, v)| *o += v);
    }
}

/// Copies the columns of head `h` out of a `len × (heads·width)` matrix.
fn head_slice(x: &[f64], len: usize, heads: usize, width: usize, h: usize) -> Vec<f64> {
    let p = heads * width;
    let mut out = Vec::with_capacity(len * width);
    for t in 0..len {
        out.extend_from_slice(&x[t * p + h * width..t * p + (h + 1) * width]);
    }
    out
}

fn head_scatter(src: &[f64], dst: &mut [f64], len: usize, heads: usize, width: usize, h: usize) {
    let p = heads * width;
    for t in 0..len {
        dst[t * p + h * width..t * p + (h + 1) * width].copy_from_slice(&src[t * width..(t + 1) * width]);
    }
}

struct BlockCache {
    norm1: NormCache,
    h1: Vec<f64>,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    /// `heads × len × len`
    probs: Vec<f64>,
    concat: Vec<f64>,
    attn_mask: Option<Vec<f64>>,
    norm2: NormCache,
    h2: Vec<f64>,
    ff_pre: Vec<f64>,
    ff_act: Vec<f64>,
}

/// Activations of one example kept for the reverse pass.
pub struct Trace {
    len: usize,
    blocks: Vec<BlockCache>,
    pooled: Vec<f64>,
    hidden_pre: Vec<f64>,
    /// Post-ReLU, post-dropout hidden layer.
    hidden: Vec<f64>,
    hidden_mask: Option<Vec<f64>>,
    pub probs: Vec<f64>,
}

/// Forward pass of one `L × d_in` example. Dropout is active only when
/// `rng` is given.
pub fn forward_example(w: &ModelWeights, x: &Matrix, mut rng: Option<&mut Rng>) -> Result<Trace> {
    let cfg = &w.config;
    let (len, d) = (x.rows(), x.cols());
    if d != cfg.d_in {
        return Err(Error::Dimension(format!("input width {d}, model expects {}", cfg.d_in)));
    }
    if len == 0 {
        return Err(Error::Dimension("empty window".into()));
    }
    let (heads, hs, p, f) = (cfg.num_heads, cfg.head_size, cfg.attn_width(), cfg.ff_channels);

    let mut cur = x.as_slice().to_vec();
    if cfg.use_positional_encoding {
        for (c, e) in cur.iter_mut().zip(positional_encoding(len, d)) {
            *c += e;
        }
    }

    let mut blocks = Vec::with_capacity(cfg.num_blocks);
    for (bi, b) in w.layout.blocks.iter().enumerate() {
        let (h1, norm1) = layer_norm(&cur, len, d, w.tensor(b.norm1_scale), w.tensor(b.norm1_shift));
        let project = |wt, bt| {
            let mut out = vec![0.0; len * p];
            matmul_acc(&h1, w.tensor(wt), &mut out, len, d, p);
            add_bias(&mut out, w.tensor(bt));
            out
        };
        let q = project(b.query_w, b.query_b);
        let k = project(b.key_w, b.key_b);
        let v = project(b.value_w, b.value_b);

        let mut concat = vec![0.0; len * p];
        let mut probs = Vec::with_capacity(heads * len * len);
        for h in 0..heads {
            let (out, a) = scaled_dot_attention(
                &head_slice(&q, len, heads, hs, h),
                &head_slice(&k, len, heads, hs, h),
                &head_slice(&v, len, heads, hs, h),
                len,
                hs,
            );
            head_scatter(&out, &mut concat, len, heads, hs, h);
            probs.extend_from_slice(&a);
        }

        let mut attn = vec![0.0; len * d];
        matmul_acc(&concat, w.tensor(b.out_w), &mut attn, len, p, d);
        add_bias(&mut attn, w.tensor(b.out_b));
        let attn_mask = match rng.as_deref_mut() {
            Some(r) if cfg.attn_dropout > 0.0 => {
                let m = dropout_mask(len * d, cfg.attn_dropout, r);
                attn.iter_mut().zip(&m).for_each(|(a, k)| *a *= k);
                Some(m)
            }
            _ => None,
        };
        cur.iter_mut().zip(&attn).for_each(|(c, a)| *c += a);

        let (h2, norm2) = layer_norm(&cur, len, d, w.tensor(b.norm2_scale), w.tensor(b.norm2_shift));
        let mut ff_pre = vec![0.0; len * f];
        matmul_acc(&h2, w.tensor(b.expand_w), &mut ff_pre, len, d, f);
        add_bias(&mut ff_pre, w.tensor(b.expand_b));
        let ff_act: Vec<f64> = ff_pre.iter().map(|&v| v.max(0.0)).collect();
        let mut ff_out = vec![0.0; len * d];
        matmul_acc(&ff_act, w.tensor(b.contract_w), &mut ff_out, len, f, d);
        add_bias(&mut ff_out, w.tensor(b.contract_b));
        cur.iter_mut().zip(&ff_out).for_each(|(c, o)| *c += o);

        if cur.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("block {bi} output")));
        }
        blocks.push(BlockCache {
            norm1,
            h1,
            q,
            k,
            v,
            probs,
            concat,
            attn_mask,
            norm2,
            h2,
            ff_pre,
            ff_act,
        });
    }

    let mut pooled = vec![0.0; d];
    col_sum_acc(&cur, &mut pooled);
    pooled.iter_mut().for_each(|v| *v /= len as f64);

    let head = &w.layout.head;
    let u = cfg.mlp_units;
    let mut hidden_pre = w.tensor(head.hidden_b).to_vec();
    matmul_acc(&pooled, w.tensor(head.hidden_w), &mut hidden_pre, 1, d, u);
    let mut hidden: Vec<f64> = hidden_pre.iter().map(|&v| v.max(0.0)).collect();
    let hidden_mask = match rng {
        Some(r) if cfg.mlp_dropout > 0.0 => {
            let m = dropout_mask(u, cfg.mlp_dropout, r);
            hidden.iter_mut().zip(&m).for_each(|(a, k)| *a *= k);
            Some(m)
        }
        _ => None,
    };
    let mut probs = w.tensor(head.out_b).to_vec();
    matmul_acc(&hidden, w.tensor(head.out_w), &mut probs, 1, u, cfg.n_classes);
    if probs.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("classifier logits".into()));
    }
    softmax_in_place(&mut probs);

    Ok(Trace {
        len,
        blocks,
        pooled,
        hidden_pre,
        hidden,
        hidden_mask,
        probs,
    })
}

/// Adds `weight · ∂(−ln probs[label])/∂θ` for one example into `grads`.
pub fn backward_example(w: &ModelWeights, trace: &Trace, label: usize, weight: f64, grads: &mut ModelWeights) {
    let cfg = &w.config;
    let (len, d) = (trace.len, cfg.d_in);
    let (u, c) = (cfg.mlp_units, cfg.n_classes);
    let head = &w.layout.head;

    let mut dlogits = trace.probs.clone();
    dlogits[label] -= 1.0;
    dlogits.iter_mut().for_each(|v| *v *= weight);

    matmul_at_b_acc(&trace.hidden, &dlogits, grads.tensor_mut(head.out_w), 1, u, c);
    col_sum_acc(&dlogits, grads.tensor_mut(head.out_b));
    let mut dhidden = vec![0.0; u];
    matmul_a_bt_acc(&dlogits, w.tensor(head.out_w), &mut dhidden, 1, c, u);
    if let Some(m) = &trace.hidden_mask {
        dhidden.iter_mut().zip(m).for_each(|(g, k)| *g *= k);
    }
    for (g, &pre) in dhidden.iter_mut().zip(&trace.hidden_pre) {
        if pre <= 0.0 {
            *g = 0.0;
        }
    }
    matmul_at_b_acc(&trace.pooled, &dhidden, grads.tensor_mut(head.hidden_w), 1, d, u);
    col_sum_acc(&dhidden, grads.tensor_mut(head.hidden_b));
    let mut dpooled = vec![0.0; d];
    matmul_a_bt_acc(&dhidden, w.tensor(head.hidden_w), &mut dpooled, 1, u, d);

    let mut dcur: Vec<f64> = (0..len).flat_map(|_| dpooled.iter().map(|g| g / len as f64)).collect();

    for (b, cache) in w.layout.blocks.iter().zip(&trace.blocks).rev() {
        dcur = block_backward(w, b, cache, len, dcur, grads);
    }
}

fn block_backward(
    w: &ModelWeights,
    b: &BlockLayout,
    cache: &BlockCache,
    len: usize,
    dout: Vec<f64>,
    grads: &mut ModelWeights,
) -> Vec<f64> {
    let cfg = &w.config;
    let (d, heads, hs, p, f) = (cfg.d_in, cfg.num_heads, cfg.head_size, cfg.attn_width(), cfg.ff_channels);

    // feed-forward sublayer
    matmul_at_b_acc(&cache.ff_act, &dout, grads.tensor_mut(b.contract_w), len, f, d);
    col_sum_acc(&dout, grads.tensor_mut(b.contract_b));
    let mut dff = vec![0.0; len * f];
    matmul_a_bt_acc(&dout, w.tensor(b.contract_w), &mut dff, len, d, f);
    for (g, &pre) in dff.iter_mut().zip(&cache.ff_pre) {
        if pre <= 0.0 {
            *g = 0.0;
        }
    }
    matmul_at_b_acc(&cache.h2, &dff, grads.tensor_mut(b.expand_w), len, d, f);
    col_sum_acc(&dff, grads.tensor_mut(b.expand_b));
    let mut dh2 = vec![0.0; len * d];
    matmul_a_bt_acc(&dff, w.tensor(b.expand_w), &mut dh2, len, f, d);
    let (mut dscale, mut dshift) = (vec![0.0; d], vec![0.0; d]);
    let dx2_norm = layer_norm_backward(&dh2, &cache.norm2, len, d, w.tensor(b.norm2_scale), &mut dscale, &mut dshift);
    acc(grads.tensor_mut(b.norm2_scale), &dscale);
    acc(grads.tensor_mut(b.norm2_shift), &dshift);
    let mut dx2 = dout;
    acc(&mut dx2, &dx2_norm);

    // attention sublayer
    let mut dattn = dx2.clone();
    if let Some(m) = &cache.attn_mask {
        dattn.iter_mut().zip(m).for_each(|(g, k)| *g *= k);
    }
    matmul_at_b_acc(&cache.concat, &dattn, grads.tensor_mut(b.out_w), len, p, d);
    col_sum_acc(&dattn, grads.tensor_mut(b.out_b));
    let mut dconcat = vec![0.0; len * p];
    matmul_a_bt_acc(&dattn, w.tensor(b.out_w), &mut dconcat, len, d, p);

    let scale = 1.0 / libm::sqrt(hs as f64);
    let (mut dq, mut dk, mut dv) = (vec![0.0; len * p], vec![0.0; len * p], vec![0.0; len * p]);
    for h in 0..heads {
        let a = &cache.probs[h * len * len..(h + 1) * len * len];
        let qh = head_slice(&cache.q, len, heads, hs, h);
        let kh = head_slice(&cache.k, len, heads, hs, h);
        let vh = head_slice(&cache.v, len, heads, hs, h);
        let doh = head_slice(&dconcat, len, heads, hs, h);

        let mut da = vec![0.0; len * len];
        matmul_a_bt_acc(&doh, &vh, &mut da, len, hs, len);
        let mut dvh = vec![0.0; len * hs];
        matmul_at_b_acc(a, &doh, &mut dvh, len, len, hs);
        // softmax backward, then the 1/√width scale
        let mut ds = vec![0.0; len * len];
        for i in 0..len {
            let ar = &a[i * len..(i + 1) * len];
            let dar = &da[i * len..(i + 1) * len];
            let inner = dot(ar, dar);
            for j in 0..len {
                ds[i * len + j] = ar[j] * (dar[j] - inner) * scale;
            }
        }
        let mut dqh = vec![0.0; len * hs];
        matmul_acc(&ds, &kh, &mut dqh, len, len, hs);
        let mut dkh = vec![0.0; len * hs];
        matmul_at_b_acc(&ds, &qh, &mut dkh, len, len, hs);

        head_scatter(&dqh, &mut dq, len, heads, hs, h);
        head_scatter(&dkh, &mut dk, len, heads, hs, h);
        head_scatter(&dvh, &mut dv, len, heads, hs, h);
    }

    let mut dh1 = vec![0.0; len * d];
    for (g, wt, bt) in [(&dq, b.query_w, b.query_b), (&dk, b.key_w, b.key_b), (&dv, b.value_w, b.value_b)] {
        matmul_at_b_acc(&cache.h1, g, grads.tensor_mut(wt), len, d, p);
        col_sum_acc(g, grads.tensor_mut(bt));
        matmul_a_bt_acc(g, w.tensor(wt), &mut dh1, len, p, d);
    }
    let (mut dscale, mut dshift) = (vec![0.0; d], vec![0.0; d]);
    let dx_norm = layer_norm_backward(&dh1, &cache.norm1, len, d, w.tensor(b.norm1_scale), &mut dscale, &mut dshift);
    acc(grads.tensor_mut(b.norm1_scale), &dscale);
    acc(grads.tensor_mut(b.norm1_shift), &dshift);
    let mut dx = dx2;
    acc(&mut dx, &dx_norm);
    dx
}

fn acc(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(a, b)| *a += b);
}
