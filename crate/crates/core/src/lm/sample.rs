use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{gelu, layer_norm, Model};
use super::real::{add_bias, gemm, Real, View};
use crate::codec::TokenId;
use crate::error::{Error, Result};

pub const DEFAULT_TEMPERATURE: f64 = 0.7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub temperature: f64,
    /// Generation halts after emitting this id; `None` runs to the limit.
    pub stop_token: Option<TokenId>,
    pub max_new_tokens: usize,
}

impl SamplerConfig {
    pub fn new(stop_token: Option<TokenId>, max_new_tokens: usize) -> Self {
        Self {
            temperature: DEFAULT_TEMPERATURE,
            stop_token,
            max_new_tokens,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::validation(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        Ok(())
    }
}

/// Keys and values of every processed position, per layer.
struct KvCache<R> {
    keys: Vec<Vec<R>>,
    values: Vec<Vec<R>>,
    len: usize,
}

impl<R: Real> Model<R> {
    fn new_cache(&self) -> KvCache<R> {
        let n = self.config().layers;
        KvCache {
            keys: vec![Vec::new(); n],
            values: vec![Vec::new(); n],
            len: 0,
        }
    }

    /// Processes one token at the next cache position and returns its logits.
    fn decode_step(&self, cache: &mut KvCache<R>, token: TokenId) -> Vec<R> {
        let c = self.config();
        let (d, f, v) = (c.model_dim, c.ff_dim, c.vocab_size);
        let (heads, hd) = (c.heads, c.head_dim());
        let l = self.layout();
        let p = self.params();
        let pos = cache.len;
        let e = &l.get(p, l.wte)[token as usize * d..(token as usize + 1) * d];
        let pe = &l.get(p, l.wpe)[pos * d..(pos + 1) * d];
        let mut x: Vec<R> = e.iter().zip(pe).map(|(&a, &b)| a + b).collect();
        let scale = R::of(1.0 / (hd as f64).sqrt());
        for (li, bt) in l.blocks.iter().enumerate() {
            let (h1, _) = layer_norm(&x, l.get(p, bt.ln1_g), l.get(p, bt.ln1_b));
            let mut qkv = vec![R::zero(); 3 * d];
            gemm(
                View::dense(&h1, 1, d),
                View::dense(l.get(p, bt.w_qkv), d, 3 * d),
                &mut qkv,
                3 * d,
                R::zero(),
            );
            add_bias(&mut qkv, l.get(p, bt.b_qkv));
            cache.keys[li].extend_from_slice(&qkv[d..2 * d]);
            cache.values[li].extend_from_slice(&qkv[2 * d..]);
            let (keys, values) = (&cache.keys[li], &cache.values[li]);
            let n = pos + 1;
            let mut att = vec![R::zero(); d];
            let mut w = vec![R::zero(); n];
            for h in 0..heads {
                let q = &qkv[h * hd..(h + 1) * hd];
                let mut max = R::neg_infinity();
                for (j, s) in w.iter_mut().enumerate() {
                    let k = &keys[j * d + h * hd..j * d + (h + 1) * hd];
                    *s = q.iter().zip(k).fold(R::zero(), |a, (&x, &y)| a + x * y) * scale;
                    max = max.max(*s);
                }
                let mut sum = R::zero();
                for s in &mut w {
                    *s = (*s - max).exp();
                    sum += *s;
                }
                let out = &mut att[h * hd..(h + 1) * hd];
                for (j, &s) in w.iter().enumerate() {
                    let wj = s / sum;
                    let vj = &values[j * d + h * hd..j * d + (h + 1) * hd];
                    for (o, &vv) in out.iter_mut().zip(vj) {
                        *o += wj * vv;
                    }
                }
            }
            gemm(
                View::dense(&att, 1, d),
                View::dense(l.get(p, bt.w_o), d, d),
                &mut x,
                d,
                R::one(),
            );
            add_bias(&mut x, l.get(p, bt.b_o));
            let (h2, _) = layer_norm(&x, l.get(p, bt.ln2_g), l.get(p, bt.ln2_b));
            let mut ff = vec![R::zero(); f];
            gemm(
                View::dense(&h2, 1, d),
                View::dense(l.get(p, bt.w_1), d, f),
                &mut ff,
                f,
                R::zero(),
            );
            add_bias(&mut ff, l.get(p, bt.b_1));
            for u in &mut ff {
                *u = gelu(*u);
            }
            gemm(
                View::dense(&ff, 1, f),
                View::dense(l.get(p, bt.w_2), f, d),
                &mut x,
                d,
                R::one(),
            );
            add_bias(&mut x, l.get(p, bt.b_2));
        }
        cache.len += 1;
        let (hf, _) = layer_norm(&x, l.get(p, l.lnf_g), l.get(p, l.lnf_b));
        let mut logits = vec![R::zero(); v];
        gemm(
            View::dense(&hf, 1, d),
            View::dense(l.get(p, l.head_w), d, v),
            &mut logits,
            v,
            R::zero(),
        );
        add_bias(&mut logits, l.get(p, l.head_b));
        logits
    }

    fn prefill(&self, ids: &[TokenId]) -> (KvCache<R>, Vec<R>) {
        let mut cache = self.new_cache();
        let mut logits = Vec::new();
        for &id in ids {
            logits = self.decode_step(&mut cache, id);
        }
        (cache, logits)
    }

    /// Next-token distribution `softmax(logits / temperature)` after `ids`.
    pub fn next_token_distribution(&self, ids: &[TokenId], temperature: f64) -> Result<Vec<f64>> {
        let ctx = self.truncated_prefix(ids)?;
        let (_, logits) = self.prefill(ctx);
        Ok(softmax_with_temperature(&logits, temperature))
    }

    fn truncated_prefix<'a>(&self, ids: &'a [TokenId]) -> Result<&'a [TokenId]> {
        if ids.is_empty() {
            return Err(Error::validation("sampling needs a non-empty prefix"));
        }
        if let Some(bad) = ids.iter().find(|&&id| id as usize >= self.config().vocab_size) {
            return Err(Error::validation(format!("prefix token {bad} outside vocabulary")));
        }
        let keep = self.config().context_len - 1;
        Ok(&ids[ids.len().saturating_sub(keep)..])
    }

    pub fn sample(&self, prefix: &[TokenId], cfg: &SamplerConfig, seed: u64) -> Result<Vec<TokenId>> {
        self.sample_with(prefix, cfg, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    /// Draws tokens from `softmax(logits / temperature)` until the stop token
    /// (included in the output) or `max_new_tokens`. Once the context is full
    /// the most recent `context_len - 1` ids are re-encoded.
    pub fn sample_with<G: Rng>(&self, prefix: &[TokenId], cfg: &SamplerConfig, rng: &mut G) -> Result<Vec<TokenId>> {
        cfg.validate()?;
        let ctx_len = self.config().context_len;
        let mut context = self.truncated_prefix(prefix)?.to_vec();
        let (mut cache, mut logits) = self.prefill(&context);
        let mut out = Vec::new();
        while out.len() < cfg.max_new_tokens {
            let probs = softmax_with_temperature(&logits, cfg.temperature);
            let next = draw(&probs, rng.gen::<f64>());
            out.push(next);
            if Some(next) == cfg.stop_token || out.len() == cfg.max_new_tokens {
                break;
            }
            context.push(next);
            if cache.len == ctx_len {
                context.drain(..context.len() - (ctx_len - 1));
                (cache, logits) = self.prefill(&context);
            } else {
                logits = self.decode_step(&mut cache, next);
            }
        }
        Ok(out)
    }
}

pub fn softmax_with_temperature<R: Real>(logits: &[R], temperature: f64) -> Vec<f64> {
    let scaled: Vec<f64> = logits
        .iter()
        .map(|z| z.to_f64().unwrap_or(f64::NAN) / temperature)
        .collect();
    let max = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scaled.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Inverse-CDF draw for `u` in `[0, 1)`.
fn draw(probs: &[f64], u: f64) -> TokenId {
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i as TokenId;
        }
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0) as TokenId
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::ModelConfig;

    fn model() -> Model {
        Model::init(ModelConfig::custom(2, 2, 8, 16, 6, 7), 9).unwrap()
    }

    #[test]
    fn cached_decoding_matches_full_forward() {
        let m = model();
        let ids = [2u32, 5, 3, 3, 6];
        let full = m.logits(&ids).unwrap();
        let mut cache = m.new_cache();
        for (t, &id) in ids.iter().enumerate() {
            let step = m.decode_step(&mut cache, id);
            for (a, b) in step.iter().zip(&full[t * 7..(t + 1) * 7]) {
                assert!((a - b).abs() < 1e-5, "position {t}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn distributions_are_normalized() {
        let m = model();
        for tau in [0.01, 0.7, 1.0, 5.0] {
            let p = m.next_token_distribution(&[2, 3], tau).unwrap();
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn sampling_is_seeded_and_stops() {
        let m = model();
        let cfg = SamplerConfig::new(None, 20);
        let a = m.sample(&[2, 3], &cfg, 4).unwrap();
        assert_eq!(a.len(), 20);
        assert_eq!(a, m.sample(&[2, 3], &cfg, 4).unwrap());
        let stop = a[3];
        let b = m.sample(&[2, 3], &SamplerConfig::new(Some(stop), 20), 4).unwrap();
        assert_eq!(*b.last().unwrap(), stop);
        assert!(b.len() <= 4);
    }

    #[test]
    fn long_prefixes_are_truncated() {
        let m = model();
        let long: Vec<TokenId> = (0..30).map(|i| (i % 7) as TokenId).collect();
        let tail = &long[long.len() - 5..];
        assert_eq!(
            m.next_token_distribution(&long, 1.0).unwrap(),
            m.next_token_distribution(tail, 1.0).unwrap()
        );
    }

    #[test]
    fn rejects_bad_temperature_and_prefix() {
        let m = model();
        assert!(m
            .sample(
                &[2],
                &SamplerConfig {
                    temperature: 0.0,
                    ..SamplerConfig::new(None, 3)
                },
                0
            )
            .is_err());
        assert!(m.sample(&[], &SamplerConfig::new(None, 3), 0).is_err());
    }

    #[test]
    fn inverse_cdf() {
        assert_eq!(draw(&[0.25, 0.25, 0.5], 0.0), 0);
        assert_eq!(draw(&[0.25, 0.25, 0.5], 0.3), 1);
        assert_eq!(draw(&[0.25, 0.25, 0.5], 0.999_999), 2);
        assert_eq!(draw(&[0.5, 0.5, 0.0], 1.0), 1);
    }
}
