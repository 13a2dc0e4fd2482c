//! Sequential action decoding: a feature MLP whose output seeds a GRU that
//! emits atoms in the fixed frequency order, closed by EOA.
//!
//! Training is teacher-forced cross-entropy over the padded target paths.
//! Decoding is beam search over duplicate-free symbol sequences, scored by
//! the raw sum of log-probabilities. The search widens through beam widths
//! 1..=B and keeps the best closed hypothesis found anywhere, so the
//! returned score can never drop below the greedy result and never
//! decreases as B grows.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Optimizer, ParamId, ParamStore, SeedRng, Tensor, Var, xavier_uniform};
use crate::dialogue::{ActionSet, ActionSpace, AtomId, DialogueState};
use crate::error::{Error, Result};
use crate::policy::common::{state_row, BoundLinear, Linear, TrainBatch};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeqConfig {
    pub mlp_hidden: usize,
    pub gru_hidden: usize,
    pub embed_dim: usize,
    pub beam: usize,
}

impl Default for SeqConfig {
    fn default() -> Self {
        SeqConfig { mlp_hidden: 320, gru_hidden: 50, embed_dim: 30, beam: 6 }
    }
}

/// GRU cell parameters (single bias per gate; the candidate gate applies the
/// reset mask to the hidden contribution before the bias).
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
struct GruCell {
    wx_r: ParamId,
    wh_r: ParamId,
    b_r: ParamId,
    wx_z: ParamId,
    wh_z: ParamId,
    b_z: ParamId,
    wx_n: ParamId,
    wh_n: ParamId,
    b_n: ParamId,
}

struct BoundGru {
    wx_r: Var,
    wh_r: Var,
    b_r: Var,
    wx_z: Var,
    wh_z: Var,
    b_z: Var,
    wx_n: Var,
    wh_n: Var,
    b_n: Var,
}

impl GruCell {
    fn new(store: &mut ParamStore, rng: &mut SeedRng, input: usize, hidden: usize) -> Self {
        let mut w = |name: &str, fan_in: usize| store.add(format!("gru.{name}"), xavier_uniform(rng, fan_in, hidden));
        let wx_r = w("wx_r", input);
        let wx_z = w("wx_z", input);
        let wx_n = w("wx_n", input);
        let wh_r = w("wh_r", hidden);
        let wh_z = w("wh_z", hidden);
        let wh_n = w("wh_n", hidden);
        let b_r = store.add("gru.b_r", Tensor::zeros(&[1, hidden]));
        let b_z = store.add("gru.b_z", Tensor::zeros(&[1, hidden]));
        let b_n = store.add("gru.b_n", Tensor::zeros(&[1, hidden]));
        GruCell { wx_r, wh_r, b_r, wx_z, wh_z, b_z, wx_n, wh_n, b_n }
    }

    fn bind(&self, g: &mut Graph, store: &ParamStore) -> BoundGru {
        BoundGru {
            wx_r: g.param(store, self.wx_r),
            wh_r: g.param(store, self.wh_r),
            b_r: g.param(store, self.b_r),
            wx_z: g.param(store, self.wx_z),
            wh_z: g.param(store, self.wh_z),
            b_z: g.param(store, self.b_z),
            wx_n: g.param(store, self.wx_n),
            wh_n: g.param(store, self.wh_n),
            b_n: g.param(store, self.b_n),
        }
    }
}

impl BoundGru {
    /// h' = (1 - z) * n + z * h, computed as n + z * (h - n).
    fn step(&self, g: &mut Graph, x: Var, h: Var) -> Result<Var> {
        let gate = |g: &mut Graph, wx: Var, wh: Var, b: Var| -> Result<Var> {
            let xs = g.matmul(x, wx)?;
            let hs = g.matmul(h, wh)?;
            let sum = g.add(xs, hs)?;
            g.add_row(sum, b)
        };
        let r = gate(g, self.wx_r, self.wh_r, self.b_r)?;
        let r = g.sigmoid(r)?;
        let z = gate(g, self.wx_z, self.wh_z, self.b_z)?;
        let z = g.sigmoid(z)?;

        let xn = g.matmul(x, self.wx_n)?;
        let hn = g.matmul(h, self.wh_n)?;
        let rhn = g.mul(r, hn)?;
        let n_pre = g.add(xn, rhn)?;
        let n_pre = g.add_row(n_pre, self.b_n)?;
        let n = g.tanh(n_pre)?;

        let hm = g.sub(h, n)?;
        let zh = g.mul(z, hm)?;
        g.add(n, zh)
    }
}

#[derive(Clone, Debug)]
pub struct SeqPolicy {
    pub config: SeqConfig,
    pub state_dim: usize,
    pub space: ActionSpace,
    pub(crate) store: ParamStore,
    f1: Linear,
    f2: Linear,
    embedding: ParamId,
    gru: GruCell,
    proj: Linear,
}

impl SeqPolicy {
    pub fn new(state_dim: usize, space: ActionSpace, config: SeqConfig, rng: &mut SeedRng) -> Self {
        let mut store = ParamStore::new();
        let f1 = Linear::new(&mut store, rng, "f1", state_dim, config.mlp_hidden);
        let f2 = Linear::new(&mut store, rng, "f2", config.mlp_hidden, config.gru_hidden);
        let embedding = store.add(
            "embedding",
            xavier_uniform(rng, space.vocab_size(), config.embed_dim),
        );
        let gru = GruCell::new(&mut store, rng, config.embed_dim + config.gru_hidden, config.gru_hidden);
        let proj = Linear::new(&mut store, rng, "proj", config.gru_hidden, space.vocab_size());
        SeqPolicy { config, state_dim, space, store, f1, f2, embedding, gru, proj }
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    /// State features v_s (B x H); doubles as the initial hidden state.
    fn features(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let f1 = self.f1.bind(g, &self.store);
        let f2 = self.f2.bind(g, &self.store);
        let h = f1.forward(g, x)?;
        let h = g.tanh(h)?;
        let v = f2.forward(g, h)?;
        g.tanh(v)
    }

    /// Teacher-forced cross-entropy over the batch's action paths, PAD
    /// positions masked out of the mean; applies one optimizer step.
    pub fn train_step(&mut self, batch: &TrainBatch, opt: &mut Optimizer) -> Result<f64> {
        let mut g = Graph::new();
        let loss = self.loss_node(&mut g, batch)?;
        let loss_value = g.scalar_value(loss)?;
        let grads = g.backward(loss)?;
        let param_grads = g.param_grads(&grads, &self.store);
        opt.step(&mut self.store, &param_grads)?;
        Ok(loss_value)
    }

    pub fn loss(&self, batch: &TrainBatch) -> Result<f64> {
        let mut g = Graph::new();
        let loss = self.loss_node(&mut g, batch)?;
        g.scalar_value(loss)
    }

    fn loss_node(&self, g: &mut Graph, batch: &TrainBatch) -> Result<Var> {
        let pad = self.space.pad_symbol();
        let soa = self.space.soa_symbol();
        let max_len = self.space.num_atoms() + 1;
        let mut paths = Vec::with_capacity(batch.len());
        for set in &batch.actions {
            let path = set.to_path(&self.space)?;
            if path.len() > max_len {
                return Err(Error::Train(format!(
                    "action path of length {} exceeds the maximum {max_len}",
                    path.len()
                )));
            }
            paths.push(path);
        }
        let steps = paths.iter().map(Vec::len).max().expect("non-empty batch");

        let x = g.constant(batch.states.clone());
        let v_s = self.features(g, x)?;
        let gru = self.gru.bind(g, &self.store);
        let proj = self.proj.bind(g, &self.store);
        let embedding = g.param(&self.store, self.embedding);

        let mut h = v_s;
        let mut total: Option<Var> = None;
        let mut n_valid = 0usize;
        for t in 0..steps {
            let prev: Vec<usize> = paths
                .iter()
                .map(|p| if t == 0 { soa } else { *p.get(t - 1).unwrap_or(&pad) })
                .collect();
            let emb = g.embed(embedding, &prev)?;
            let input = g.concat_cols(emb, v_s)?;
            h = gru.step(g, input, h)?;
            let logits = proj.forward(g, h)?;
            let log_probs = g.log_softmax_rows(logits)?;

            let targets: Vec<usize> = paths.iter().map(|p| *p.get(t).unwrap_or(&pad)).collect();
            let picked = g.pick(log_probs, &targets)?;
            let mask: Vec<f64> = targets.iter().map(|&s| if s == pad { 0.0 } else { 1.0 }).collect();
            n_valid += mask.iter().filter(|&&m| m == 1.0).count();
            let mask = g.constant(Tensor::matrix(batch.len(), 1, mask)?);
            let masked = g.mul(picked, mask)?;
            let step_sum = g.sum_all(masked)?;
            total = Some(match total {
                None => step_sum,
                Some(acc) => g.add(acc, step_sum)?,
            });
        }
        let total = total.expect("at least one step");
        g.scale(total, -1.0 / n_valid as f64)
    }

    /// Features for one state, as a plain tensor.
    pub fn state_features(&self, state: &DialogueState) -> Result<Tensor> {
        let mut g = Graph::new();
        let x = g.constant(state_row(state));
        let v = self.features(&mut g, x)?;
        Ok(g.value(v).clone())
    }

    /// One decoder step for a batch of hypotheses: previous symbols plus
    /// hidden rows in, per-symbol log-probabilities and new hidden rows out.
    pub fn decode_step(
        &self,
        prev_symbols: &[usize],
        hidden: &Tensor,
        v_s: &Tensor,
    ) -> Result<(Tensor, Tensor)> {
        let mut g = Graph::new();
        let embedding = g.param(&self.store, self.embedding);
        let emb = g.embed(embedding, prev_symbols)?;
        let rows = prev_symbols.len();
        let mut v_rep = Vec::with_capacity(rows * v_s.cols());
        for _ in 0..rows {
            v_rep.extend_from_slice(v_s.data());
        }
        let v_rep = g.constant(Tensor::matrix(rows, v_s.cols(), v_rep)?);
        let input = g.concat_cols(emb, v_rep)?;
        let h = g.constant(hidden.clone());
        let gru = self.gru.bind(&mut g, &self.store);
        let h_next = gru.step(&mut g, input, h)?;
        let proj = self.proj.bind(&mut g, &self.store);
        let logits = proj.forward(&mut g, h_next)?;
        let log_probs = g.log_softmax_rows(logits)?;
        Ok((g.value(log_probs).clone(), g.value(h_next).clone()))
    }

    /// Beam decode with the configured width.
    pub fn decode(&self, state: &DialogueState) -> Result<ActionSet> {
        self.decode_with_beam(state, self.config.beam).map(|(set, _)| set)
    }

    /// Beam decode with an explicit width; returns the set and its score.
    pub fn decode_with_beam(&self, state: &DialogueState, beam: usize) -> Result<(ActionSet, f64)> {
        let beam = beam.max(1);
        let v_s = self.state_features(state)?;
        let mut best: Option<(f64, Vec<usize>)> = None;
        for width in 1..=beam {
            if let Some(candidate) = self.beam_pass(&v_s, width)? {
                let replace = match &best {
                    None => true,
                    Some((score, _)) => candidate.0 > *score,
                };
                if replace {
                    best = Some(candidate);
                }
            }
        }
        let (score, symbols) = best.ok_or_else(|| Error::Train("beam search found no closed hypothesis".into()))?;
        Ok((ActionSet::from_atoms(symbols.into_iter().map(AtomId)), score))
    }

    /// One standard beam pass: expand the top-`width` live hypotheses per
    /// depth; every EOA extension closes into the finished pool. SOA and PAD
    /// are never emitted and atoms already in a hypothesis are pruned.
    fn beam_pass(&self, v_s: &Tensor, width: usize) -> Result<Option<(f64, Vec<usize>)>> {
        struct Hyp {
            symbols: Vec<usize>,
            score: f64,
            hidden_row: usize,
        }
        let m = self.space.num_atoms();
        let eoa = self.space.eoa_symbol();
        let pad = self.space.pad_symbol();
        let soa = self.space.soa_symbol();

        let mut live = vec![Hyp { symbols: Vec::new(), score: 0.0, hidden_row: 0 }];
        let mut hidden = v_s.clone();
        let mut finished: Option<(f64, Vec<usize>)> = None;
        let mut close = |score: f64, symbols: &[usize], finished: &mut Option<(f64, Vec<usize>)>| {
            let better = match finished {
                None => true,
                Some((s, _)) => score > *s,
            };
            if better {
                *finished = Some((score, symbols.to_vec()));
            }
        };

        for _depth in 0..=m {
            let prev: Vec<usize> = live
                .iter()
                .map(|h| *h.symbols.last().unwrap_or(&soa))
                .collect();
            let (log_probs, h_next) = self.decode_step(&prev, &hidden, v_s)?;

            let mut candidates: Vec<(f64, usize, usize)> = Vec::new(); // (score, hyp, symbol)
            for (hi, hyp) in live.iter().enumerate() {
                for sym in 0..self.space.vocab_size() {
                    if sym == pad || sym == soa {
                        continue;
                    }
                    let score = hyp.score + log_probs.at(hi, sym);
                    if sym == eoa {
                        close(score, &hyp.symbols, &mut finished);
                    } else if !hyp.symbols.contains(&sym) {
                        candidates.push((score, hi, sym));
                    }
                }
            }
            if candidates.is_empty() {
                break;
            }
            candidates.sort_by(|a, b| {
                b.0.partial_cmp(&a.0)
                    .expect("finite scores")
                    .then(a.1.cmp(&b.1))
                    .then(a.2.cmp(&b.2))
            });
            candidates.truncate(width);

            let mut next_live = Vec::with_capacity(candidates.len());
            let h_dim = h_next.cols();
            let mut next_hidden = Vec::with_capacity(candidates.len() * h_dim);
            for (row, (score, hi, sym)) in candidates.into_iter().enumerate() {
                let mut symbols = live[hi].symbols.clone();
                symbols.push(sym);
                next_live.push(Hyp { symbols, score, hidden_row: row });
                let src = live[hi].hidden_row;
                next_hidden.extend_from_slice(&h_next.data()[src * h_dim..(src + 1) * h_dim]);
            }
            hidden = Tensor::matrix(next_live.len(), h_dim, next_hidden)?;
            live = next_live;
        }
        Ok(finished)
    }

    /// Greedy decode (width-1 beam).
    pub fn decode_greedy(&self, state: &DialogueState) -> Result<(ActionSet, f64)> {
        self.decode_with_beam(state, 1)
    }
}
