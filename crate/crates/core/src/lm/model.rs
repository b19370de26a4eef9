use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::config::{Layout, ModelConfig};
use super::real::{add_bias, add_col_sums, gemm, Real, View};
use crate::codec::{TokenId, PAD_ID};
use crate::error::{Error, Result};
use crate::par::Execution;

const INIT_STD: f64 = 0.02;
const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_A: f64 = 0.044_715;

/// Decoder-only transformer with pre-norm blocks, learned positions and an
/// untied output head. Parameters live in one flat vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<R: Real = f32> {
    config: ModelConfig,
    layout: Arc<Layout>,
    params: Vec<R>,
}

/// Summed loss and count over a batch, plus the gradient of the mean.
#[derive(Debug, Clone)]
pub struct BatchGrad<R> {
    pub loss: f64,
    pub tokens: usize,
    pub grad: Vec<R>,
}

struct BlockCache<R> {
    x_in: Vec<R>,
    h1: Vec<R>,
    rstd1: Vec<R>,
    qkv: Vec<R>,
    probs: Vec<R>,
    att: Vec<R>,
    x_mid: Vec<R>,
    h2: Vec<R>,
    rstd2: Vec<R>,
    ff_pre: Vec<R>,
    ff_act: Vec<R>,
}

struct Cache<R> {
    blocks: Vec<BlockCache<R>>,
    x_final: Vec<R>,
    hf: Vec<R>,
    rstdf: Vec<R>,
    logits: Vec<R>,
}

impl Model<f32> {
    /// Seeded scaled-normal initialization. Residual output projections are
    /// scaled by `1/sqrt(2 * layers)`.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config);
        let mut params = vec![0.0f32; layout.total];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let residual = INIT_STD / (2.0 * config.layers as f64).sqrt();
        for t in &layout.tensors {
            let leaf = t.name.rsplit('.').next().unwrap_or("");
            let std = match leaf {
                "g" => {
                    params[t.range()].fill(1.0);
                    continue;
                }
                "b" | "b_qkv" | "b_o" | "b_1" | "b_2" => continue,
                "w_o" | "w_2" => residual,
                _ => INIT_STD,
            };
            let normal = Normal::new(0.0, std).expect("positive std");
            for p in &mut params[t.range()] {
                *p = normal.sample(&mut rng) as f32;
            }
        }
        Ok(Self {
            config,
            layout: Arc::new(layout),
            params,
        })
    }
}

impl<R: Real> Model<R> {
    pub fn from_params(config: ModelConfig, params: Vec<R>) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config);
        if params.len() != layout.total {
            return Err(Error::validation(format!(
                "parameter vector has {} values, config needs {}",
                params.len(),
                layout.total
            )));
        }
        Ok(Self {
            config,
            layout: Arc::new(layout),
            params,
        })
    }

    pub fn cast<S: Real>(&self) -> Model<S> {
        Model {
            config: self.config.clone(),
            layout: Arc::clone(&self.layout),
            params: self
                .params
                .iter()
                .map(|p| S::of(p.to_f64().unwrap_or(f64::NAN)))
                .collect(),
        }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn params(&self) -> &[R] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [R] {
        &mut self.params
    }

    pub fn tensor(&self, name: &str) -> Option<&[R]> {
        self.layout.find(name).map(|t| &self.params[t.range()])
    }

    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut [R]> {
        let range = self.layout.find(name)?.range();
        Some(&mut self.params[range])
    }

    fn check_ids(&self, ids: &[TokenId]) -> Result<()> {
        if ids.len() > self.config.context_len {
            return Err(Error::validation(format!(
                "sequence of {} tokens exceeds context length {}",
                ids.len(),
                self.config.context_len
            )));
        }
        if let Some(bad) = ids.iter().find(|&&id| id as usize >= self.config.vocab_size) {
            return Err(Error::validation(format!(
                "token id {bad} outside vocabulary of {}",
                self.config.vocab_size
            )));
        }
        Ok(())
    }

    /// Logits `[ids.len() x vocab]` for every position.
    pub fn logits(&self, ids: &[TokenId]) -> Result<Vec<R>> {
        self.check_ids(ids)?;
        Ok(self.forward(ids).logits)
    }

    fn forward(&self, ids: &[TokenId]) -> Cache<R> {
        let c = &self.config;
        let (t_len, d, f, v) = (ids.len(), c.model_dim, c.ff_dim, c.vocab_size);
        let (heads, hd) = (c.heads, c.head_dim());
        let l = &*self.layout;
        let p = &self.params[..];
        let wte = l.get(p, l.wte);
        let wpe = l.get(p, l.wpe);
        let mut x = vec![R::zero(); t_len * d];
        for (t, &id) in ids.iter().enumerate() {
            let row = &mut x[t * d..(t + 1) * d];
            let e = &wte[id as usize * d..(id as usize + 1) * d];
            let pe = &wpe[t * d..(t + 1) * d];
            for j in 0..d {
                row[j] = e[j] + pe[j];
            }
        }
        let scale = R::of(1.0 / (hd as f64).sqrt());
        let mut blocks = Vec::with_capacity(c.layers);
        for bt in &l.blocks {
            let (h1, rstd1) = layer_norm(&x, l.get(p, bt.ln1_g), l.get(p, bt.ln1_b));
            let mut qkv = vec![R::zero(); t_len * 3 * d];
            gemm(
                View::dense(&h1, t_len, d),
                View::dense(l.get(p, bt.w_qkv), d, 3 * d),
                &mut qkv,
                3 * d,
                R::zero(),
            );
            add_bias(&mut qkv, l.get(p, bt.b_qkv));

            let mut probs = vec![R::zero(); heads * t_len * t_len];
            let mut att = vec![R::zero(); t_len * d];
            for h in 0..heads {
                let q = View::strided(&qkv[h * hd..], t_len, hd, 3 * d);
                let k = View::strided(&qkv[d + h * hd..], t_len, hd, 3 * d);
                let vv = View::strided(&qkv[2 * d + h * hd..], t_len, hd, 3 * d);
                let ph = &mut probs[h * t_len * t_len..(h + 1) * t_len * t_len];
                gemm(q, k.t(), ph, t_len, R::zero());
                for i in 0..t_len {
                    causal_softmax_row(&mut ph[i * t_len..(i + 1) * t_len], i, scale);
                }
                gemm(View::dense(ph, t_len, t_len), vv, &mut att[h * hd..], d, R::zero());
            }

            let mut x_mid = x.clone();
            gemm(
                View::dense(&att, t_len, d),
                View::dense(l.get(p, bt.w_o), d, d),
                &mut x_mid,
                d,
                R::one(),
            );
            add_bias(&mut x_mid, l.get(p, bt.b_o));

            let (h2, rstd2) = layer_norm(&x_mid, l.get(p, bt.ln2_g), l.get(p, bt.ln2_b));
            let mut ff_pre = vec![R::zero(); t_len * f];
            gemm(
                View::dense(&h2, t_len, d),
                View::dense(l.get(p, bt.w_1), d, f),
                &mut ff_pre,
                f,
                R::zero(),
            );
            add_bias(&mut ff_pre, l.get(p, bt.b_1));
            let ff_act: Vec<R> = ff_pre.iter().map(|&u| gelu(u)).collect();
            let mut x_out = x_mid.clone();
            gemm(
                View::dense(&ff_act, t_len, f),
                View::dense(l.get(p, bt.w_2), f, d),
                &mut x_out,
                d,
                R::one(),
            );
            add_bias(&mut x_out, l.get(p, bt.b_2));

            blocks.push(BlockCache {
                x_in: std::mem::replace(&mut x, x_out),
                h1,
                rstd1,
                qkv,
                probs,
                att,
                x_mid,
                h2,
                rstd2,
                ff_pre,
                ff_act,
            });
        }
        let (hf, rstdf) = layer_norm(&x, l.get(p, l.lnf_g), l.get(p, l.lnf_b));
        let mut logits = vec![R::zero(); t_len * v];
        gemm(
            View::dense(&hf, t_len, d),
            View::dense(l.get(p, l.head_w), d, v),
            &mut logits,
            v,
            R::zero(),
        );
        add_bias(&mut logits, l.get(p, l.head_b));
        Cache {
            blocks,
            x_final: x,
            hf,
            rstdf,
            logits,
        }
    }

    /// Accumulates the gradient of `sum(dlogits * logits)` into `grad`.
    fn backward(&self, ids: &[TokenId], cache: &Cache<R>, dlogits: &[R], grad: &mut [R]) {
        let c = &self.config;
        let (t_len, d, f, v) = (ids.len(), c.model_dim, c.ff_dim, c.vocab_size);
        let (heads, hd) = (c.heads, c.head_dim());
        let l = &*self.layout;
        let p = &self.params[..];
        let scale = R::of(1.0 / (hd as f64).sqrt());

        gemm(
            View::dense(&cache.hf, t_len, d).t(),
            View::dense(dlogits, t_len, v),
            l.get_mut(grad, l.head_w),
            v,
            R::one(),
        );
        add_col_sums(l.get_mut(grad, l.head_b), dlogits);
        let mut dh = vec![R::zero(); t_len * d];
        gemm(
            View::dense(dlogits, t_len, v),
            View::dense(l.get(p, l.head_w), d, v).t(),
            &mut dh,
            d,
            R::zero(),
        );
        let mut dx = vec![R::zero(); t_len * d];
        layer_norm_backward(
            &cache.x_final,
            &cache.rstdf,
            l.get(p, l.lnf_g),
            &dh,
            &mut dx,
            grad,
            l.lnf_g,
            l.lnf_b,
            l,
        );

        for (bt, bc) in l.blocks.iter().zip(&cache.blocks).rev() {
            // MLP branch
            gemm(
                View::dense(&bc.ff_act, t_len, f).t(),
                View::dense(&dx, t_len, d),
                l.get_mut(grad, bt.w_2),
                d,
                R::one(),
            );
            add_col_sums(l.get_mut(grad, bt.b_2), &dx);
            let mut dpre = vec![R::zero(); t_len * f];
            gemm(
                View::dense(&dx, t_len, d),
                View::dense(l.get(p, bt.w_2), f, d).t(),
                &mut dpre,
                f,
                R::zero(),
            );
            for (g, &u) in dpre.iter_mut().zip(&bc.ff_pre) {
                *g *= gelu_grad(u);
            }
            gemm(
                View::dense(&bc.h2, t_len, d).t(),
                View::dense(&dpre, t_len, f),
                l.get_mut(grad, bt.w_1),
                f,
                R::one(),
            );
            add_col_sums(l.get_mut(grad, bt.b_1), &dpre);
            let mut dh2 = vec![R::zero(); t_len * d];
            gemm(
                View::dense(&dpre, t_len, f),
                View::dense(l.get(p, bt.w_1), d, f).t(),
                &mut dh2,
                d,
                R::zero(),
            );
            // dx now holds d(x_mid) once the norm branch is added
            layer_norm_backward(
                &bc.x_mid,
                &bc.rstd2,
                l.get(p, bt.ln2_g),
                &dh2,
                &mut dx,
                grad,
                bt.ln2_g,
                bt.ln2_b,
                l,
            );

            // attention branch
            gemm(
                View::dense(&bc.att, t_len, d).t(),
                View::dense(&dx, t_len, d),
                l.get_mut(grad, bt.w_o),
                d,
                R::one(),
            );
            add_col_sums(l.get_mut(grad, bt.b_o), &dx);
            let mut datt = vec![R::zero(); t_len * d];
            gemm(
                View::dense(&dx, t_len, d),
                View::dense(l.get(p, bt.w_o), d, d).t(),
                &mut datt,
                d,
                R::zero(),
            );

            let mut dqkv = vec![R::zero(); t_len * 3 * d];
            let mut dp = vec![R::zero(); t_len * t_len];
            for h in 0..heads {
                let ph = &bc.probs[h * t_len * t_len..(h + 1) * t_len * t_len];
                let q = View::strided(&bc.qkv[h * hd..], t_len, hd, 3 * d);
                let k = View::strided(&bc.qkv[d + h * hd..], t_len, hd, 3 * d);
                let vv = View::strided(&bc.qkv[2 * d + h * hd..], t_len, hd, 3 * d);
                let d_o = View::strided(&datt[h * hd..], t_len, hd, d);
                // dV = P^T dO
                gemm(
                    View::dense(ph, t_len, t_len).t(),
                    d_o,
                    &mut dqkv[2 * d + h * hd..],
                    3 * d,
                    R::zero(),
                );
                // dP = dO V^T, then the softmax Jacobian
                gemm(d_o, vv.t(), &mut dp, t_len, R::zero());
                for i in 0..t_len {
                    let prow = &ph[i * t_len..(i + 1) * t_len];
                    let drow = &mut dp[i * t_len..(i + 1) * t_len];
                    let mut dot = R::zero();
                    for j in 0..=i {
                        dot += prow[j] * drow[j];
                    }
                    for j in 0..t_len {
                        drow[j] = if j <= i {
                            prow[j] * (drow[j] - dot) * scale
                        } else {
                            R::zero()
                        };
                    }
                }
                gemm(View::dense(&dp, t_len, t_len), k, &mut dqkv[h * hd..], 3 * d, R::zero());
                gemm(
                    View::dense(&dp, t_len, t_len).t(),
                    q,
                    &mut dqkv[d + h * hd..],
                    3 * d,
                    R::zero(),
                );
            }
            gemm(
                View::dense(&bc.h1, t_len, d).t(),
                View::dense(&dqkv, t_len, 3 * d),
                l.get_mut(grad, bt.w_qkv),
                3 * d,
                R::one(),
            );
            add_col_sums(l.get_mut(grad, bt.b_qkv), &dqkv);
            let mut dh1 = vec![R::zero(); t_len * d];
            gemm(
                View::dense(&dqkv, t_len, 3 * d),
                View::dense(l.get(p, bt.w_qkv), d, 3 * d).t(),
                &mut dh1,
                d,
                R::zero(),
            );
            layer_norm_backward(
                &bc.x_in,
                &bc.rstd1,
                l.get(p, bt.ln1_g),
                &dh1,
                &mut dx,
                grad,
                bt.ln1_g,
                bt.ln1_b,
                l,
            );
        }

        for (t, &id) in ids.iter().enumerate() {
            let row = &dx[t * d..(t + 1) * d];
            let off_e = l.tensors[l.wte].offset + id as usize * d;
            let off_p = l.tensors[l.wpe].offset + t * d;
            for j in 0..d {
                grad[off_e + j] += row[j];
                grad[off_p + j] += row[j];
            }
        }
    }

    /// Summed next-token loss of one window and the number of scored targets.
    /// With `grad`, also accumulates the gradient of that sum.
    fn window_loss(&self, window: &[TokenId], grad: Option<&mut [R]>) -> (f64, usize) {
        if window.len() < 2 {
            return (0.0, 0);
        }
        let inputs = &window[..window.len() - 1];
        let targets = &window[1..];
        let v = self.config.vocab_size;
        let cache = self.forward(inputs);
        let mut loss = 0.0;
        let mut count = 0;
        let mut dlogits = grad.as_ref().map(|_| vec![R::zero(); inputs.len() * v]);
        for (t, &target) in targets.iter().enumerate() {
            if target == PAD_ID {
                continue;
            }
            let row = &cache.logits[t * v..(t + 1) * v];
            let max = row.iter().copied().fold(R::neg_infinity(), R::max);
            let mut sum = R::zero();
            for &z in row {
                sum += (z - max).exp();
            }
            let log_z = max + sum.ln();
            loss += (log_z - row[target as usize]).to_f64().unwrap_or(f64::NAN);
            count += 1;
            if let Some(dl) = dlogits.as_mut() {
                let drow = &mut dl[t * v..(t + 1) * v];
                for (g, &z) in drow.iter_mut().zip(row) {
                    *g = (z - log_z).exp();
                }
                drow[target as usize] -= R::one();
            }
        }
        if let (Some(g), Some(dl)) = (grad, dlogits) {
            if count > 0 {
                self.backward(inputs, &cache, &dl, g);
            }
        }
        (loss, count)
    }

    fn check_batch(&self, batch: &[&[TokenId]]) -> Result<()> {
        if batch.is_empty() {
            return Err(Error::validation("empty batch"));
        }
        batch.iter().try_for_each(|w| self.check_ids(w))
    }

    /// Summed loss and scored-token count over windows.
    pub fn loss_sum(&self, batch: &[&[TokenId]], exec: Execution) -> Result<(f64, usize)> {
        self.check_batch(batch)?;
        let parts = exec.map(batch, |w| self.window_loss(w, None));
        Ok(parts.into_iter().fold((0.0, 0), |(l, n), (a, b)| (l + a, n + b)))
    }

    /// Mean next-token cross-entropy in nats over non-pad targets.
    pub fn loss(&self, batch: &[&[TokenId]], exec: Execution) -> Result<f64> {
        let (sum, n) = self.loss_sum(batch, exec)?;
        if n == 0 {
            return Err(Error::validation("batch has no scored tokens"));
        }
        Ok(sum / n as f64)
    }

    /// Mean loss and its gradient. Per-window gradients are reduced in batch
    /// order, so results do not depend on the execution mode.
    pub fn loss_and_grad(&self, batch: &[&[TokenId]], exec: Execution) -> Result<BatchGrad<R>> {
        self.check_batch(batch)?;
        let total = self.layout.total;
        let parts = exec.map(batch, |w| {
            let mut g = vec![R::zero(); total];
            let (l, n) = self.window_loss(w, Some(&mut g));
            (l, n, g)
        });
        let mut grad = vec![R::zero(); total];
        let (mut loss, mut tokens) = (0.0, 0);
        for (l, n, g) in parts {
            loss += l;
            tokens += n;
            for (a, b) in grad.iter_mut().zip(&g) {
                *a += *b;
            }
        }
        if tokens == 0 {
            return Err(Error::validation("batch has no scored tokens"));
        }
        let inv = R::of(1.0 / tokens as f64);
        for g in &mut grad {
            *g *= inv;
        }
        Ok(BatchGrad {
            loss: loss / tokens as f64,
            tokens,
            grad,
        })
    }

    /// Token-weighted mean loss over a whole corpus.
    pub fn validate(&self, windows: &[Vec<TokenId>], exec: Execution) -> Result<f64> {
        if windows.is_empty() {
            return Err(Error::validation("empty validation corpus"));
        }
        let refs: Vec<&[TokenId]> = windows.iter().map(Vec::as_slice).collect();
        self.loss(&refs, exec)
    }
}

pub(crate) fn gelu<R: Real>(x: R) -> R {
    let (c, a, half) = (R::of(GELU_C), R::of(GELU_A), R::of(0.5));
    half * x * (R::one() + (c * (x + a * x * x * x)).tanh())
}

fn gelu_grad<R: Real>(x: R) -> R {
    let (c, a, half) = (R::of(GELU_C), R::of(GELU_A), R::of(0.5));
    let t = (c * (x + a * x * x * x)).tanh();
    half * (R::one() + t) + half * x * (R::one() - t * t) * c * (R::one() + R::of(3.0) * a * x * x)
}

/// Softmax over `row[..=i]` of `scale * row`; later entries become zero.
fn causal_softmax_row<R: Real>(row: &mut [R], i: usize, scale: R) {
    let max = row[..=i].iter().map(|&s| s * scale).fold(R::neg_infinity(), R::max);
    let mut sum = R::zero();
    for s in &mut row[..=i] {
        *s = (*s * scale - max).exp();
        sum += *s;
    }
    for s in &mut row[..=i] {
        *s /= sum;
    }
    for s in &mut row[i + 1..] {
        *s = R::zero();
    }
}

pub(crate) fn layer_norm<R: Real>(x: &[R], g: &[R], b: &[R]) -> (Vec<R>, Vec<R>) {
    let d = g.len();
    let mut out = vec![R::zero(); x.len()];
    let mut rstds = Vec::with_capacity(x.len() / d);
    let inv_d = R::of(1.0 / d as f64);
    for (row, o) in x.chunks_exact(d).zip(out.chunks_exact_mut(d)) {
        let mean = row.iter().fold(R::zero(), |a, &v| a + v) * inv_d;
        let var = row.iter().fold(R::zero(), |a, &v| a + (v - mean) * (v - mean)) * inv_d;
        let rstd = R::one() / (var + R::of(LN_EPS)).sqrt();
        for j in 0..d {
            o[j] = (row[j] - mean) * rstd * g[j] + b[j];
        }
        rstds.push(rstd);
    }
    (out, rstds)
}

/// Adds the input gradient of a layer norm into `dx` and accumulates the
/// gain/bias gradients.
#[allow(clippy::too_many_arguments)]
fn layer_norm_backward<R: Real>(
    x: &[R],
    rstd: &[R],
    g: &[R],
    dy: &[R],
    dx: &mut [R],
    grad: &mut [R],
    g_idx: usize,
    b_idx: usize,
    layout: &Layout,
) {
    let d = g.len();
    let inv_d = R::of(1.0 / d as f64);
    let mut dg = vec![R::zero(); d];
    let mut db = vec![R::zero(); d];
    let mut xhat = vec![R::zero(); d];
    for (t, (row, dyr)) in x.chunks_exact(d).zip(dy.chunks_exact(d)).enumerate() {
        let mean = row.iter().fold(R::zero(), |a, &v| a + v) * inv_d;
        let mut m1 = R::zero();
        let mut m2 = R::zero();
        for j in 0..d {
            xhat[j] = (row[j] - mean) * rstd[t];
            let dxhat = dyr[j] * g[j];
            m1 += dxhat;
            m2 += dxhat * xhat[j];
            dg[j] += dyr[j] * xhat[j];
            db[j] += dyr[j];
        }
        m1 *= inv_d;
        m2 *= inv_d;
        let out = &mut dx[t * d..(t + 1) * d];
        for j in 0..d {
            out[j] += rstd[t] * (dyr[j] * g[j] - m1 - xhat[j] * m2);
        }
    }
    for (a, b) in layout.get_mut(grad, g_idx).iter_mut().zip(&dg) {
        *a += *b;
    }
    for (a, b) in layout.get_mut(grad, b_idx).iter_mut().zip(&db) {
        *a += *b;
    }
}
