use candle_core::{DType, Device, Tensor, D};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::decode::{self, DecodeMode, GenerationResult, Hypothesis, StepDistribution};
use super::params::ParamStore;
use super::vocab::{SourceEncoding, Vocabulary, BOS, EOS, PAD, UNK};
use super::{ModelConfig, ModelError};

/// Additive bias masking attention keys and vocabulary logits.
const MASK: f64 = -1e9;
/// Floor applied before taking logs of the output mixture.
const PROB_FLOOR: f64 = 1e-30;
const LN_EPS: f64 = 1e-5;

/// Encoder-decoder Transformer whose output mixes a vocabulary softmax with
/// a copy distribution over source tokens, `P = g·P_vocab + (1-g)·P_copy`.
#[derive(Debug)]
pub struct CopyTransformer {
    config: ModelConfig,
    vocab: Vocabulary,
    params: ParamStore,
    positional: Tensor,
    vocab_bias: Tensor,
    gate_override: Option<f64>,
}

/// Encoded, padded sources ready for attention.
struct SourceBatch {
    ids: Tensor,
    /// (B, 1, 1, S): 0 on tokens, MASK on padding.
    key_bias: Tensor,
    /// (B, S) extended ids, PAD on padding.
    ext_ids: Tensor,
    ext_size: usize,
}

fn softmax_last(x: &Tensor) -> Result<Tensor, ModelError> {
    let max = x.max_keepdim(D::Minus1)?.detach();
    let e = x.broadcast_sub(&max)?.exp()?;
    Ok(e.broadcast_div(&e.sum_keepdim(D::Minus1)?)?)
}

fn sigmoid(x: &Tensor) -> Result<Tensor, ModelError> {
    Ok((x.neg()?.exp()? + 1.0)?.recip()?)
}

fn sinusoidal(len: usize, d: usize) -> Vec<f64> {
    let mut pe = Vec::with_capacity(len * d);
    for pos in 0..len {
        for j in 0..d {
            let angle = pos as f64 / 10000f64.powf((j - j % 2) as f64 / d as f64);
            pe.push(if j % 2 == 0 { angle.sin() } else { angle.cos() });
        }
    }
    pe
}

impl CopyTransformer {
    pub fn new(config: ModelConfig, vocab: Vocabulary) -> Result<Self, ModelError> {
        Self::with_device(config, vocab, Device::Cpu)
    }

    pub fn with_device(
        config: ModelConfig,
        vocab: Vocabulary,
        device: Device,
    ) -> Result<Self, ModelError> {
        config.validate()?;
        if config.vocab_size != vocab.len() {
            return Err(ModelError::Config(format!(
                "vocab_size {} but vocabulary has {} entries",
                config.vocab_size,
                vocab.len()
            )));
        }
        let dtype = config.precision.dtype();
        let mut params = ParamStore::new(dtype, device.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let (d, ff, v) = (config.d_model, config.d_ff, config.vocab_size);
        let linear = |p: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, i: usize, o: usize| {
            p.uniform(format!("{name}.w"), &[i, o], 1.0 / (i as f64).sqrt(), rng)?;
            p.constant(format!("{name}.b"), &[o], 0.0)
        };
        let norm = |p: &mut ParamStore, name: &str| -> Result<(), ModelError> {
            p.constant(format!("{name}.g"), &[d], 1.0)?;
            p.constant(format!("{name}.b"), &[d], 0.0)
        };
        let attention =
            |p: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str| -> Result<(), ModelError> {
                for m in ["q", "k", "v", "o"] {
                    linear(p, rng, &format!("{name}.{m}"), d, d)?;
                }
                Ok(())
            };

        params.uniform("embed", &[v, d], 1.0 / (d as f64).sqrt(), &mut rng)?;
        for i in 0..config.num_blocks {
            let b = format!("enc.{i}");
            norm(&mut params, &format!("{b}.ln1"))?;
            attention(&mut params, &mut rng, &format!("{b}.self"))?;
            norm(&mut params, &format!("{b}.ln2"))?;
            linear(&mut params, &mut rng, &format!("{b}.ff1"), d, ff)?;
            linear(&mut params, &mut rng, &format!("{b}.ff2"), ff, d)?;
        }
        norm(&mut params, "enc.ln_f")?;
        for i in 0..config.num_blocks {
            let b = format!("dec.{i}");
            norm(&mut params, &format!("{b}.ln1"))?;
            attention(&mut params, &mut rng, &format!("{b}.self"))?;
            norm(&mut params, &format!("{b}.ln2"))?;
            attention(&mut params, &mut rng, &format!("{b}.cross"))?;
            norm(&mut params, &format!("{b}.ln3"))?;
            linear(&mut params, &mut rng, &format!("{b}.ff1"), d, ff)?;
            linear(&mut params, &mut rng, &format!("{b}.ff2"), ff, d)?;
        }
        norm(&mut params, "dec.ln_f")?;
        linear(&mut params, &mut rng, "out", d, v)?;
        linear(&mut params, &mut rng, "gate", d, 1)?;

        let max_len = config.max_source_len.max(config.max_target_len);
        let positional =
            Tensor::from_vec(sinusoidal(max_len, d), (max_len, d), &device)?.to_dtype(dtype)?;
        let mut bias = vec![0.0; v];
        bias[PAD as usize] = MASK;
        bias[BOS as usize] = MASK;
        let vocab_bias = Tensor::from_vec(bias, v, &device)?.to_dtype(dtype)?;
        Ok(Self {
            config,
            vocab,
            params,
            positional,
            vocab_bias,
            gate_override: None,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn dtype(&self) -> DType {
        self.params.dtype()
    }

    fn device(&self) -> &Device {
        self.params.device()
    }

    /// Fix the copy gate to a constant in `[0, 1]`, or restore the learned gate.
    pub fn set_gate_override(&mut self, gate: Option<f64>) -> Result<(), ModelError> {
        if let Some(g) = gate {
            if !(0.0..=1.0).contains(&g) {
                return Err(ModelError::Config(format!(
                    "gate override {g} outside [0, 1]"
                )));
            }
        }
        self.gate_override = gate;
        Ok(())
    }

    pub fn encode_source(&self, text: &str) -> SourceEncoding {
        self.vocab.encode_source(text, self.config.max_source_len)
    }

    pub fn encode_target(&self, text: &str, source: &SourceEncoding) -> Vec<u32> {
        self.vocab
            .encode_target(text, source, self.config.max_target_len)
    }

    fn linear(&self, x: &Tensor, name: &str) -> Result<Tensor, ModelError> {
        let w = self.params.get(&format!("{name}.w"));
        let b = self.params.get(&format!("{name}.b"));
        Ok(x.broadcast_matmul(w)?.broadcast_add(b)?)
    }

    fn layer_norm(&self, x: &Tensor, name: &str) -> Result<Tensor, ModelError> {
        let mean = x.mean_keepdim(D::Minus1)?;
        let centered = x.broadcast_sub(&mean)?;
        let var = centered.sqr()?.mean_keepdim(D::Minus1)?;
        let normed = centered.broadcast_div(&(var + LN_EPS)?.sqrt()?)?;
        Ok(normed
            .broadcast_mul(self.params.get(&format!("{name}.g")))?
            .broadcast_add(self.params.get(&format!("{name}.b")))?)
    }

    fn split_heads(&self, x: &Tensor) -> Result<Tensor, ModelError> {
        let (b, l, _) = x.dims3()?;
        let (h, dh) = (self.config.num_heads, self.config.head_dim());
        Ok(x.reshape((b, l, h, dh))?.transpose(1, 2)?.contiguous()?)
    }

    /// Multi-head attention; returns the output and the (B, h, Lq, Lk)
    /// attention weights.
    fn attention(
        &self,
        name: &str,
        query: &Tensor,
        memory: &Tensor,
        bias: &Tensor,
    ) -> Result<(Tensor, Tensor), ModelError> {
        let (b, l, d) = query.dims3()?;
        let q = self.split_heads(&self.linear(query, &format!("{name}.q"))?)?;
        let k = self.split_heads(&self.linear(memory, &format!("{name}.k"))?)?;
        let v = self.split_heads(&self.linear(memory, &format!("{name}.v"))?)?;
        let scale = 1.0 / (self.config.head_dim() as f64).sqrt();
        let scores = (q.matmul(&k.transpose(2, 3)?.contiguous()?)? * scale)?.broadcast_add(bias)?;
        let weights = softmax_last(&scores)?;
        let ctx = weights
            .matmul(&v)?
            .transpose(1, 2)?
            .contiguous()?
            .reshape((b, l, d))?;
        Ok((self.linear(&ctx, &format!("{name}.o"))?, weights))
    }

    fn feed_forward(&self, x: &Tensor, block: &str) -> Result<Tensor, ModelError> {
        let h = self.linear(x, &format!("{block}.ff1"))?.relu()?;
        self.linear(&h, &format!("{block}.ff2"))
    }

    fn embed(&self, ids: &Tensor) -> Result<Tensor, ModelError> {
        let (b, l) = ids.dims2()?;
        let d = self.config.d_model;
        let e = self
            .params
            .get("embed")
            .index_select(&ids.flatten_all()?, 0)?
            .reshape((b, l, d))?;
        Ok((e * (d as f64).sqrt())?.broadcast_add(&self.positional.narrow(0, 0, l)?)?)
    }

    fn check_source(&self, s: &SourceEncoding) -> Result<(), ModelError> {
        let max = self.config.max_source_len;
        if s.ids.is_empty() || s.ids.len() > max || s.ext_ids.len() != s.ids.len() {
            return Err(ModelError::BadLength {
                what: "source",
                len: s.ids.len(),
                max,
            });
        }
        let v = self.config.vocab_size;
        let ext = s.ext_size(v);
        for &id in &s.ids {
            if id as usize >= v || id == PAD {
                return Err(ModelError::IdOutOfRange {
                    what: "source",
                    id,
                    limit: v,
                });
            }
        }
        for &id in &s.ext_ids {
            if id as usize >= ext || id == PAD {
                return Err(ModelError::IdOutOfRange {
                    what: "extended source",
                    id,
                    limit: ext,
                });
            }
        }
        Ok(())
    }

    fn source_batch(&self, sources: &[&SourceEncoding]) -> Result<SourceBatch, ModelError> {
        if sources.is_empty() {
            return Err(ModelError::EmptyBatch);
        }
        for s in sources {
            self.check_source(s)?;
        }
        let b = sources.len();
        let len = sources.iter().map(|s| s.ids.len()).max().unwrap_or(0);
        let mut ids = vec![PAD; b * len];
        let mut ext = vec![PAD; b * len];
        let mut bias = vec![MASK; b * len];
        for (i, s) in sources.iter().enumerate() {
            for (j, (&id, &e)) in s.ids.iter().zip(&s.ext_ids).enumerate() {
                ids[i * len + j] = id;
                ext[i * len + j] = e;
                bias[i * len + j] = 0.0;
            }
        }
        let device = self.device();
        let ext_size = sources
            .iter()
            .map(|s| s.ext_size(self.config.vocab_size))
            .max()
            .unwrap_or(self.config.vocab_size);
        Ok(SourceBatch {
            ids: Tensor::from_vec(ids, (b, len), device)?,
            key_bias: Tensor::from_vec(bias, (b, 1, 1, len), device)?.to_dtype(self.dtype())?,
            ext_ids: Tensor::from_vec(ext, (b, len), device)?,
            ext_size,
        })
    }

    fn encode(&self, batch: &SourceBatch) -> Result<Tensor, ModelError> {
        let mut x = self.embed(&batch.ids)?;
        for i in 0..self.config.num_blocks {
            let b = format!("enc.{i}");
            let h = self.layer_norm(&x, &format!("{b}.ln1"))?;
            x = (x + self
                .attention(&format!("{b}.self"), &h, &h, &batch.key_bias)?
                .0)?;
            let h = self.layer_norm(&x, &format!("{b}.ln2"))?;
            x = (&x + self.feed_forward(&h, &b)?)?;
        }
        self.layer_norm(&x, "enc.ln_f")
    }

    fn causal_bias(&self, t: usize) -> Result<Tensor, ModelError> {
        let values: Vec<f64> = (0..t * t)
            .map(|k| if k % t > k / t { MASK } else { 0.0 })
            .collect();
        Ok(Tensor::from_vec(values, (1, 1, t, t), self.device())?.to_dtype(self.dtype())?)
    }

    /// Log-probabilities (B, T, ext_size) for padded decoder inputs.
    fn decode(
        &self,
        batch: &SourceBatch,
        memory: &Tensor,
        inputs: &Tensor,
    ) -> Result<Tensor, ModelError> {
        let (b, t) = inputs.dims2()?;
        let causal = self.causal_bias(t)?;
        let mut x = self.embed(inputs)?;
        let mut copy_weights = None;
        for i in 0..self.config.num_blocks {
            let blk = format!("dec.{i}");
            let h = self.layer_norm(&x, &format!("{blk}.ln1"))?;
            x = (x + self.attention(&format!("{blk}.self"), &h, &h, &causal)?.0)?;
            let h = self.layer_norm(&x, &format!("{blk}.ln2"))?;
            let (ctx, weights) =
                self.attention(&format!("{blk}.cross"), &h, memory, &batch.key_bias)?;
            x = (x + ctx)?;
            let h = self.layer_norm(&x, &format!("{blk}.ln3"))?;
            x = (&x + self.feed_forward(&h, &blk)?)?;
            copy_weights = Some(weights);
        }
        let h = self.layer_norm(&x, "dec.ln_f")?;

        let v = self.config.vocab_size;
        let logits = self.linear(&h, "out")?.broadcast_add(&self.vocab_bias)?;
        let mut p_vocab = softmax_last(&logits)?;
        if batch.ext_size > v {
            let pad = Tensor::zeros((b, t, batch.ext_size - v), self.dtype(), self.device())?;
            p_vocab = Tensor::cat(&[&p_vocab, &pad], 2)?;
        }

        let attn = copy_weights.expect("num_blocks > 0").mean(1)?;
        let p_copy = self.copy_distribution(&attn, batch)?;

        let mixed = match self.gate_override {
            Some(g) => ((p_vocab * g)? + (p_copy * (1.0 - g))?)?,
            None => {
                let gate = sigmoid(&self.linear(&h, "gate")?)?;
                let keep = gate.affine(-1.0, 1.0)?;
                (p_vocab.broadcast_mul(&gate)? + p_copy.broadcast_mul(&keep)?)?
            }
        };
        Ok(mixed.maximum(PROB_FLOOR)?.log()?)
    }

    /// Sum attention mass per extended id: (B, T, S) -> (B, T, ext). Uses a
    /// flat `index_add` with offsets `((b*T + t) * ext + id)`.
    fn copy_distribution(&self, attn: &Tensor, batch: &SourceBatch) -> Result<Tensor, ModelError> {
        let (b, t, s) = attn.dims3()?;
        let ext = batch.ext_size;
        let ids = batch.ext_ids.to_vec2::<u32>()?;
        let mut index = Vec::with_capacity(b * t * s);
        for (i, row) in ids.iter().enumerate() {
            for j in 0..t {
                let base = ((i * t + j) * ext) as u32;
                index.extend(row.iter().map(|&id| base + id));
            }
        }
        let index = Tensor::from_vec(index, b * t * s, self.device())?;
        let flat = Tensor::zeros(b * t * ext, self.dtype(), self.device())?.index_add(
            &index,
            &attn.flatten_all()?,
            0,
        )?;
        Ok(flat.reshape((b, t, ext))?)
    }

    fn input_tensor(&self, inputs: &[Vec<u32>]) -> Result<Tensor, ModelError> {
        let max = self.config.max_target_len;
        let v = self.config.vocab_size;
        let len = inputs.iter().map(Vec::len).max().unwrap_or(0);
        let mut flat = vec![PAD; inputs.len() * len];
        for (i, row) in inputs.iter().enumerate() {
            if row.is_empty() || row.len() > max {
                return Err(ModelError::BadLength {
                    what: "decoder input",
                    len: row.len(),
                    max,
                });
            }
            for (j, &id) in row.iter().enumerate() {
                if id as usize >= v {
                    return Err(ModelError::IdOutOfRange {
                        what: "decoder input",
                        id,
                        limit: v,
                    });
                }
                flat[i * len + j] = id;
            }
        }
        Ok(Tensor::from_vec(flat, (inputs.len(), len), self.device())?)
    }

    /// Teacher-forced log-probabilities (B, T, ext) for base-vocabulary
    /// decoder inputs; `ext` is the largest extended size in the batch.
    pub fn log_probs(
        &self,
        sources: &[&SourceEncoding],
        decoder_inputs: &[Vec<u32>],
    ) -> Result<Tensor, ModelError> {
        if sources.len() != decoder_inputs.len() {
            return Err(ModelError::Config(format!(
                "{} sources but {} decoder inputs",
                sources.len(),
                decoder_inputs.len()
            )));
        }
        let batch = self.source_batch(sources)?;
        let inputs = self.input_tensor(decoder_inputs)?;
        let memory = self.encode(&batch)?;
        self.decode(&batch, &memory, &inputs)
    }

    fn prefix_input(&self, prefix: &[u32]) -> Result<Vec<u32>, ModelError> {
        let v = self.config.vocab_size as u32;
        std::iter::once(Ok(BOS))
            .chain(prefix.iter().map(|&id| match id {
                PAD | BOS => Err(ModelError::IdOutOfRange {
                    what: "prefix",
                    id,
                    limit: v as usize,
                }),
                id if id >= v => Ok(UNK),
                id => Ok(id),
            }))
            .collect()
    }

    /// Output distributions over the extended vocabulary after BOS and each
    /// prefix token, one row per step.
    pub fn distributions(
        &self,
        source: &SourceEncoding,
        prefix: &[u32],
    ) -> Result<Vec<Vec<f64>>, ModelError> {
        let ext = source.ext_size(self.config.vocab_size);
        if let Some(&id) = prefix.iter().find(|&&id| id as usize >= ext) {
            return Err(ModelError::IdOutOfRange {
                what: "prefix",
                id,
                limit: ext,
            });
        }
        let input = self.prefix_input(prefix)?;
        let lp = self.log_probs(&[source], &[input])?;
        Ok(lp.squeeze(0)?.exp()?.to_dtype(DType::F64)?.to_vec2()?)
    }

    /// Encode a source once for step-wise decoding.
    pub fn bind<'m>(&'m self, source: &SourceEncoding) -> Result<BoundSource<'m>, ModelError> {
        let batch = self.source_batch(&[source])?;
        let memory = self.encode(&batch)?;
        Ok(BoundSource {
            model: self,
            batch,
            memory,
        })
    }

    fn result(
        &self,
        h: Hypothesis,
        source: &SourceEncoding,
        mode: DecodeMode,
        k: usize,
    ) -> GenerationResult {
        GenerationResult {
            text: self.vocab.decode(&h.tokens, source).join(" "),
            token_ids: h.tokens,
            log_prob: h.log_prob,
            decode_mode: mode,
            beam_size: k,
        }
    }

    fn decode_len(&self, max_len: usize) -> usize {
        max_len.min(self.config.max_target_len)
    }

    pub fn greedy_decode(
        &self,
        source: &SourceEncoding,
        max_len: usize,
    ) -> Result<GenerationResult, ModelError> {
        let bound = self.bind(source)?;
        let h = decode::greedy(&bound, self.decode_len(max_len))?;
        Ok(self.result(h, source, DecodeMode::Greedy, 1))
    }

    pub fn beam_search(
        &self,
        source: &SourceEncoding,
        k: usize,
        max_len: usize,
    ) -> Result<GenerationResult, ModelError> {
        let bound = self.bind(source)?;
        let h = decode::beam(&bound, k, self.decode_len(max_len))?;
        Ok(self.result(h, source, DecodeMode::Beam, k))
    }

    pub fn sample_sequence(
        &self,
        source: &SourceEncoding,
        max_len: usize,
        seed: u64,
    ) -> Result<GenerationResult, ModelError> {
        self.sample_with(source, max_len, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn sample_with(
        &self,
        source: &SourceEncoding,
        max_len: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<GenerationResult, ModelError> {
        let bound = self.bind(source)?;
        let h = decode::sample(&bound, self.decode_len(max_len), rng)?;
        Ok(self.result(h, source, DecodeMode::Sample, 1))
    }

    /// Decode with the given mode; `k` is the beam width for beam search.
    pub fn generate(
        &self,
        source: &SourceEncoding,
        mode: DecodeMode,
        k: usize,
        max_len: usize,
        seed: u64,
    ) -> Result<GenerationResult, ModelError> {
        match mode {
            DecodeMode::Greedy => self.greedy_decode(source, max_len),
            DecodeMode::Beam => self.beam_search(source, k, max_len),
            DecodeMode::Sample => self.sample_sequence(source, max_len, seed),
        }
    }
}

/// A source with cached encoder states.
pub struct BoundSource<'m> {
    model: &'m CopyTransformer,
    batch: SourceBatch,
    memory: Tensor,
}

impl StepDistribution for BoundSource<'_> {
    fn step_log_probs(&self, prefix: &[u32]) -> Result<Vec<f64>, ModelError> {
        let m = self.model;
        let input = m.prefix_input(prefix)?;
        if input.len() > m.config.max_target_len {
            return Err(ModelError::BadLength {
                what: "decoder input",
                len: input.len(),
                max: m.config.max_target_len,
            });
        }
        let t = input.len();
        let inputs = Tensor::from_vec(input, (1, t), m.device())?;
        let lp = m.decode(&self.batch, &self.memory, &inputs)?;
        Ok(lp.get(0)?.get(t - 1)?.to_dtype(DType::F64)?.to_vec1()?)
    }

    fn eos(&self) -> u32 {
        EOS
    }

    fn emittable(&self, id: u32) -> bool {
        id != PAD && id != BOS
    }
}
