use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::vocab::{Vocabulary, BOS, EOS};
use super::ModelError;
use crate::corpus::InflectionExample;
use crate::numerics::{uniform_with_std, xavier_uniform, AttnSegment, Tape, Tensor, Var};

/// Sinusoid index shared by every tag position.
pub const TAG_POSITION: usize = 0;

/// Standard sinusoidal code for position `pos`.
pub fn sinusoid(pos: usize, dim: usize) -> Vec<f64> {
    (0..dim)
        .map(|i| {
            let rate = 10000f64.powf((2 * (i / 2)) as f64 / dim as f64);
            let angle = pos as f64 / rate;
            if i % 2 == 0 {
                angle.sin()
            } else {
                angle.cos()
            }
        })
        .collect()
}

/// Names and shapes of the parameter tensors, in storage order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamLayout {
    pub names: Vec<String>,
    pub shapes: Vec<Vec<usize>>,
}

impl ParamLayout {
    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn scalar_count(&self) -> usize {
        self.shapes
            .iter()
            .map(|s| s.iter().product::<usize>())
            .sum()
    }
}

#[derive(Debug, Clone, Copy)]
struct Norm {
    gain: usize,
    bias: usize,
}

#[derive(Debug, Clone, Copy)]
struct Attn {
    wq: usize,
    wk: usize,
    wv: usize,
    wo: usize,
    bo: usize,
}

#[derive(Debug, Clone, Copy)]
struct Ffn {
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
}

#[derive(Debug, Clone, Copy)]
struct EncLayer {
    ln1: Norm,
    attn: Attn,
    ln2: Norm,
    ffn: Ffn,
}

#[derive(Debug, Clone, Copy)]
struct DecLayer {
    ln1: Norm,
    self_attn: Attn,
    ln2: Norm,
    cross: Attn,
    ln3: Norm,
    ffn: Ffn,
}

struct Builder<'a> {
    rng: &'a mut ChaCha8Rng,
    params: Vec<Tensor>,
    names: Vec<String>,
}

impl Builder<'_> {
    fn push(&mut self, name: String, t: Tensor) -> usize {
        self.params.push(t);
        self.names.push(name);
        self.params.len() - 1
    }

    fn linear(&mut self, name: &str, fan_in: usize, fan_out: usize) -> usize {
        let t = xavier_uniform(self.rng, fan_in, fan_out);
        self.push(name.to_string(), t)
    }

    fn zeros(&mut self, name: &str, n: usize) -> usize {
        self.push(name.to_string(), Tensor::zeros(&[n]))
    }

    fn norm(&mut self, name: &str, d: usize) -> Norm {
        Norm {
            gain: self.push(format!("{name}.gain"), Tensor::filled(&[d], 1.0)),
            bias: self.zeros(&format!("{name}.bias"), d),
        }
    }

    fn attn(&mut self, name: &str, d: usize) -> Attn {
        Attn {
            wq: self.linear(&format!("{name}.wq"), d, d),
            wk: self.linear(&format!("{name}.wk"), d, d),
            wv: self.linear(&format!("{name}.wv"), d, d),
            wo: self.linear(&format!("{name}.wo"), d, d),
            bo: self.zeros(&format!("{name}.bo"), d),
        }
    }

    fn ffn(&mut self, name: &str, d: usize, ff: usize) -> Ffn {
        Ffn {
            w1: self.linear(&format!("{name}.w1"), d, ff),
            b1: self.zeros(&format!("{name}.b1"), ff),
            w2: self.linear(&format!("{name}.w2"), ff, d),
            b2: self.zeros(&format!("{name}.b2"), d),
        }
    }
}

/// A token sequence with the sinusoid index of each position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Sequence {
    pub ids: Vec<usize>,
    pub positions: Vec<usize>,
}

/// One teacher-forced training pair in id form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Encoded {
    pub source: Sequence,
    /// Target phoneme ids without BOS/EOS.
    pub target: Vec<usize>,
}

impl Encoded {
    pub fn target_tokens(&self) -> usize {
        self.target.len() + 1
    }
}

/// Encoder-decoder transformer. Parameter 0 is the one embedding table; it
/// feeds the encoder input, the decoder input and (when tied) the output
/// projection.
#[derive(Debug, Clone)]
pub struct Transformer {
    config: ModelConfig,
    vocab: Vocabulary,
    params: Vec<Tensor>,
    layout: ParamLayout,
    enc: Vec<EncLayer>,
    dec: Vec<DecLayer>,
    enc_norm: Norm,
    dec_norm: Norm,
    out_proj: Option<usize>,
    out_bias: usize,
}

pub(crate) const EMBEDDING: usize = 0;

impl Transformer {
    /// Initializes every parameter from `config.seed`.
    pub fn build(config: ModelConfig, vocab: Vocabulary) -> Result<Self, ModelError> {
        config.validate()?;
        let d = config.embed_dim;
        let v = vocab.len();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut b = Builder {
            rng: &mut rng,
            params: Vec::new(),
            names: Vec::new(),
        };
        let table = uniform_with_std(b.rng, v, d, 1.0 / (d as f64).sqrt());
        let emb = b.push("embedding".into(), table);
        debug_assert_eq!(emb, EMBEDDING);
        let enc = (0..config.encoder_layers)
            .map(|l| EncLayer {
                ln1: b.norm(&format!("enc{l}.ln1"), d),
                attn: b.attn(&format!("enc{l}.attn"), d),
                ln2: b.norm(&format!("enc{l}.ln2"), d),
                ffn: b.ffn(&format!("enc{l}.ffn"), d, config.ff_dim),
            })
            .collect();
        let enc_norm = b.norm("enc.norm", d);
        let dec = (0..config.decoder_layers)
            .map(|l| DecLayer {
                ln1: b.norm(&format!("dec{l}.ln1"), d),
                self_attn: b.attn(&format!("dec{l}.self"), d),
                ln2: b.norm(&format!("dec{l}.ln2"), d),
                cross: b.attn(&format!("dec{l}.cross"), d),
                ln3: b.norm(&format!("dec{l}.ln3"), d),
                ffn: b.ffn(&format!("dec{l}.ffn"), d, config.ff_dim),
            })
            .collect();
        let dec_norm = b.norm("dec.norm", d);
        let out_proj = if config.tie_output {
            None
        } else {
            let t = uniform_with_std(b.rng, v, d, 1.0 / (d as f64).sqrt());
            Some(b.push("output".into(), t))
        };
        let out_bias = b.zeros("output.bias", v);
        let layout = ParamLayout {
            shapes: b.params.iter().map(|t| t.shape().to_vec()).collect(),
            names: b.names,
        };
        Ok(Self {
            config,
            vocab,
            params: b.params,
            layout,
            enc,
            dec,
            enc_norm,
            dec_norm,
            out_proj,
            out_bias,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    /// Replaces all parameters after checking count and shapes.
    pub fn set_params(&mut self, params: Vec<Tensor>) -> Result<(), ModelError> {
        if params.len() != self.params.len() {
            return Err(ModelError::Checkpoint(format!(
                "expected {} tensors, got {}",
                self.params.len(),
                params.len()
            )));
        }
        for ((p, shape), name) in params
            .iter()
            .zip(&self.layout.shapes)
            .zip(&self.layout.names)
        {
            if p.shape() != shape.as_slice() {
                return Err(ModelError::Checkpoint(format!(
                    "tensor {name} has shape {:?}, expected {shape:?}",
                    p.shape()
                )));
            }
        }
        self.params = params;
        Ok(())
    }

    /// Row of the shared embedding table for `phoneme`.
    pub fn embedding_of(&self, phoneme: &str) -> Result<Vec<f64>, ModelError> {
        let id = self.vocab.phoneme_id(phoneme)?;
        Ok(self.params[EMBEDDING].row(id).to_vec())
    }

    /// Number of `vocab × embed_dim` tensors among the parameters.
    pub fn embedding_table_count(&self) -> usize {
        let shape = [self.vocab.len(), self.config.embed_dim];
        self.layout
            .shapes
            .iter()
            .filter(|s| s.as_slice() == shape)
            .count()
    }

    fn check_len(&self, n: usize) -> Result<(), ModelError> {
        if n > self.config.max_len {
            return Err(ModelError::Precondition(format!(
                "sequence of {n} phonemes exceeds max_len {}",
                self.config.max_len
            )));
        }
        Ok(())
    }

    pub(crate) fn phoneme_ids(&self, phonemes: &[String]) -> Result<Vec<usize>, ModelError> {
        self.check_len(phonemes.len())?;
        phonemes.iter().map(|p| self.vocab.phoneme_id(p)).collect()
    }

    /// `BOS + tags + phonemes + EOS`. Tags all sit at [`TAG_POSITION`];
    /// phonemes count from 0 and EOS continues the phoneme count.
    pub(crate) fn source(&self, lemma: &[String], tags: &[String]) -> Result<Sequence, ModelError> {
        if tags.is_empty() {
            return Err(ModelError::Precondition(
                "encoder input needs at least one tag (COPY for the copy regime)".into(),
            ));
        }
        if lemma.is_empty() {
            return Err(ModelError::Precondition("empty lemma".into()));
        }
        let phon = self.phoneme_ids(lemma)?;
        let mut ids = vec![BOS];
        for t in tags {
            ids.push(self.vocab.tag_id(t)?);
        }
        let mut positions = vec![0; ids.len()];
        positions[1..].fill(TAG_POSITION);
        ids.extend(&phon);
        positions.extend(0..phon.len());
        ids.push(EOS);
        positions.push(phon.len());
        Ok(Sequence { ids, positions })
    }

    /// `BOS + phonemes + EOS` with no tag slots.
    pub(crate) fn untagged_source(&self, word: &[String]) -> Result<Sequence, ModelError> {
        if word.is_empty() {
            return Err(ModelError::Precondition("empty word".into()));
        }
        let phon = self.phoneme_ids(word)?;
        let mut ids = vec![BOS];
        ids.extend(&phon);
        ids.push(EOS);
        let mut positions = vec![0];
        positions.extend(0..phon.len());
        positions.push(phon.len());
        Ok(Sequence { ids, positions })
    }

    pub(crate) fn encode_example(
        &self,
        lemma: &[String],
        tags: &[String],
        target: &[String],
    ) -> Result<Encoded, ModelError> {
        Ok(Encoded {
            source: self.source(lemma, tags)?,
            target: self.phoneme_ids(target)?,
        })
    }

    /// Last-encoder-layer vectors, one row per position of
    /// `BOS + tags + lemma + EOS`. Dropout is off.
    pub fn encode(&self, lemma: &[String], tags: &[String]) -> Result<Tensor, ModelError> {
        let s = self.source(lemma, tags)?;
        Ok(self.encode_sequences(&[s]).pop().expect("one sequence"))
    }

    /// Last-encoder-layer vectors for `BOS + word + EOS`.
    pub fn encode_untagged(&self, word: &[String]) -> Result<Tensor, ModelError> {
        let s = self.untagged_source(word)?;
        Ok(self.encode_sequences(&[s]).pop().expect("one sequence"))
    }

    /// [`Transformer::encode_untagged`] over many words in one pass.
    pub fn encode_untagged_batch(&self, words: &[Vec<String>]) -> Result<Vec<Tensor>, ModelError> {
        let seqs = words
            .iter()
            .map(|w| self.untagged_source(w))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(self.encode_sequences(&seqs))
    }

    pub(crate) fn encode_sequences(&self, seqs: &[Sequence]) -> Vec<Tensor> {
        let mut tape = Tape::new(&self.params);
        let refs: Vec<&Sequence> = seqs.iter().collect();
        let (out, segs) = self.run_encoder(&mut tape, &refs, None);
        let value = tape.value(out);
        segs.iter()
            .map(|s| {
                let rows =
                    value.data()[s.q_start * value.cols()..][..s.q_len * value.cols()].to_vec();
                Tensor::matrix(s.q_len, value.cols(), rows).expect("slice shape")
            })
            .collect()
    }

    fn embed(
        &self,
        tape: &mut Tape<'_>,
        ids: &[usize],
        positions: &[usize],
        rng: Option<&mut ChaCha8Rng>,
    ) -> Var {
        let d = self.config.embed_dim;
        let table = tape.param(EMBEDDING);
        let x = tape.gather(table, ids);
        let x = tape.scale(x, (d as f64).sqrt());
        let mut pe = Vec::with_capacity(ids.len() * d);
        for &p in positions {
            pe.extend(sinusoid(p, d));
        }
        let pe = tape.constant(Tensor::matrix(ids.len(), d, pe).expect("pe shape"));
        let x = tape.add(x, pe);
        self.drop(tape, x, rng)
    }

    fn drop(&self, tape: &mut Tape<'_>, x: Var, rng: Option<&mut ChaCha8Rng>) -> Var {
        match rng {
            Some(r) => tape.dropout(x, self.config.dropout, r),
            None => x,
        }
    }

    fn norm(tape: &mut Tape<'_>, x: Var, n: Norm) -> Var {
        let g = tape.param(n.gain);
        let b = tape.param(n.bias);
        tape.layer_norm(x, g, b)
    }

    fn attention(
        &self,
        tape: &mut Tape<'_>,
        queries: Var,
        memory: Var,
        a: Attn,
        segs: &[AttnSegment],
        causal: bool,
    ) -> Var {
        let wq = tape.param(a.wq);
        let wk = tape.param(a.wk);
        let wv = tape.param(a.wv);
        let q = tape.matmul(queries, wq);
        let k = tape.matmul(memory, wk);
        let v = tape.matmul(memory, wv);
        let o = tape.attention(q, k, v, self.config.heads, segs, causal);
        let wo = tape.param(a.wo);
        let bo = tape.param(a.bo);
        let o = tape.matmul(o, wo);
        tape.add_row(o, bo)
    }

    fn feed_forward(tape: &mut Tape<'_>, x: Var, f: Ffn) -> Var {
        let w1 = tape.param(f.w1);
        let b1 = tape.param(f.b1);
        let w2 = tape.param(f.w2);
        let b2 = tape.param(f.b2);
        let h = tape.matmul(x, w1);
        let h = tape.add_row(h, b1);
        let h = tape.relu(h);
        let h = tape.matmul(h, w2);
        tape.add_row(h, b2)
    }

    fn residual(
        &self,
        tape: &mut Tape<'_>,
        x: Var,
        update: Var,
        rng: &mut Option<&mut ChaCha8Rng>,
    ) -> Var {
        let u = self.drop(tape, update, rng.as_deref_mut());
        tape.add(x, u)
    }

    /// Encoder over concatenated sequences; returns the final normalized
    /// states and the per-sequence row ranges.
    pub(crate) fn run_encoder(
        &self,
        tape: &mut Tape<'_>,
        seqs: &[&Sequence],
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> (Var, Vec<AttnSegment>) {
        let mut ids = Vec::new();
        let mut positions = Vec::new();
        let mut segs = Vec::with_capacity(seqs.len());
        for s in seqs {
            segs.push(AttnSegment {
                q_start: ids.len(),
                q_len: s.ids.len(),
                k_start: ids.len(),
                k_len: s.ids.len(),
            });
            ids.extend(&s.ids);
            positions.extend(&s.positions);
        }
        let mut x = self.embed(tape, &ids, &positions, rng.as_deref_mut());
        for layer in &self.enc {
            let h = Self::norm(tape, x, layer.ln1);
            let a = self.attention(tape, h, h, layer.attn, &segs, false);
            x = self.residual(tape, x, a, &mut rng);
            let h = Self::norm(tape, x, layer.ln2);
            let f = Self::feed_forward(tape, h, layer.ffn);
            x = self.residual(tape, x, f, &mut rng);
        }
        (Self::norm(tape, x, self.enc_norm), segs)
    }

    /// Decoder logits for concatenated decoder inputs. `dec_segs` and
    /// `mem_segs` pair each decoder sequence with its encoder rows.
    pub(crate) fn run_decoder(
        &self,
        tape: &mut Tape<'_>,
        memory: Var,
        dec_ids: &[usize],
        dec_positions: &[usize],
        dec_segs: &[AttnSegment],
        mem_segs: &[AttnSegment],
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Var {
        let cross: Vec<AttnSegment> = dec_segs
            .iter()
            .zip(mem_segs)
            .map(|(d, m)| AttnSegment {
                q_start: d.q_start,
                q_len: d.q_len,
                k_start: m.q_start,
                k_len: m.q_len,
            })
            .collect();
        let mut x = self.embed(tape, dec_ids, dec_positions, rng.as_deref_mut());
        for layer in &self.dec {
            let h = Self::norm(tape, x, layer.ln1);
            let a = self.attention(tape, h, h, layer.self_attn, dec_segs, true);
            x = self.residual(tape, x, a, &mut rng);
            let h = Self::norm(tape, x, layer.ln2);
            let a = self.attention(tape, h, memory, layer.cross, &cross, false);
            x = self.residual(tape, x, a, &mut rng);
            let h = Self::norm(tape, x, layer.ln3);
            let f = Self::feed_forward(tape, h, layer.ffn);
            x = self.residual(tape, x, f, &mut rng);
        }
        let h = Self::norm(tape, x, self.dec_norm);
        let proj = tape.param(self.out_proj.unwrap_or(EMBEDDING));
        let logits = tape.matmul_bt(h, proj);
        let bias = tape.param(self.out_bias);
        tape.add_row(logits, bias)
    }

    /// Teacher-forced cross-entropy over target phonemes plus EOS, summed
    /// and multiplied by `token_weight`.
    pub(crate) fn loss(
        &self,
        tape: &mut Tape<'_>,
        batch: &[&Encoded],
        token_weight: f64,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Var, ModelError> {
        let sources: Vec<&Sequence> = batch.iter().map(|e| &e.source).collect();
        let (memory, mem_segs) = self.run_encoder(tape, &sources, rng.as_deref_mut());
        let mut dec_ids = Vec::new();
        let mut dec_pos = Vec::new();
        let mut targets = Vec::new();
        let mut dec_segs = Vec::with_capacity(batch.len());
        for e in batch {
            let n = e.target_tokens();
            dec_segs.push(AttnSegment {
                q_start: dec_ids.len(),
                q_len: n,
                k_start: dec_ids.len(),
                k_len: n,
            });
            dec_ids.push(BOS);
            dec_ids.extend(&e.target);
            dec_pos.extend(0..n);
            targets.extend(&e.target);
            targets.push(EOS);
        }
        let logits = self.run_decoder(tape, memory, &dec_ids, &dec_pos, &dec_segs, &mem_segs, rng);
        let weights = vec![token_weight; targets.len()];
        Ok(tape.cross_entropy(logits, &targets, &weights)?)
    }

    /// Mean per-token teacher-forced loss with dropout off, recorded on
    /// `tape`. Parameters are read through the tape.
    pub fn teacher_forced_loss(
        &self,
        tape: &mut Tape<'_>,
        examples: &[&InflectionExample],
    ) -> Result<Var, ModelError> {
        let encoded = examples
            .iter()
            .map(|e| self.encode_example(&e.lemma, &e.tags, &e.target))
            .collect::<Result<Vec<_>, _>>()?;
        let tokens: usize = encoded.iter().map(Encoded::target_tokens).sum();
        let refs: Vec<&Encoded> = encoded.iter().collect();
        self.loss(tape, &refs, 1.0 / tokens as f64, None)
    }

    /// Output logits at every decoder position for one teacher-forced pair.
    pub fn decoder_logits(
        &self,
        lemma: &[String],
        tags: &[String],
        target: &[String],
    ) -> Result<Tensor, ModelError> {
        let e = self.encode_example(lemma, tags, target)?;
        let mut tape = Tape::new(&self.params);
        let (memory, mem_segs) = self.run_encoder(&mut tape, &[&e.source], None);
        let n = e.target_tokens();
        let mut ids = vec![BOS];
        ids.extend(&e.target);
        let seg = [AttnSegment {
            q_start: 0,
            q_len: n,
            k_start: 0,
            k_len: n,
        }];
        let positions: Vec<usize> = (0..n).collect();
        let logits = self.run_decoder(&mut tape, memory, &ids, &positions, &seg, &mem_segs, None);
        Ok(tape.value(logits).clone())
    }
}
