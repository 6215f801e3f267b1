use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{ModelConfig, Router, Variant, ALPHABET};
use crate::error::{FadeError, Result};
use crate::nncore::{kernels, AdamConfig, Graph, NodeId, ParamId, ParamStore, Scalar, Tensor};

/// The last `T` symbols of every stream, row-major `B×T`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ContextWindow {
    batch: usize,
    steps: usize,
    symbols: Vec<u8>,
}

impl ContextWindow {
    pub fn new(batch: usize, steps: usize) -> Self {
        ContextWindow {
            batch,
            steps,
            symbols: vec![0; batch * steps],
        }
    }

    pub fn from_symbols(batch: usize, steps: usize, symbols: Vec<u8>) -> Result<Self> {
        if symbols.len() != batch * steps {
            return Err(FadeError::Dimension(format!(
                "context of {} symbols for {batch}x{steps}",
                symbols.len()
            )));
        }
        Ok(ContextWindow { batch, steps, symbols })
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn symbols(&self) -> &[u8] {
        &self.symbols
    }

    pub fn row(&self, stream: usize) -> &[u8] {
        &self.symbols[stream * self.steps..(stream + 1) * self.steps]
    }

    pub fn set_row(&mut self, stream: usize, row: &[u8]) {
        self.symbols[stream * self.steps..(stream + 1) * self.steps].copy_from_slice(row);
    }

    /// Drops the oldest symbol of each stream and appends `next[stream]`.
    pub fn shift_in(&mut self, next: &[u8]) {
        debug_assert_eq!(next.len(), self.batch);
        for (row, &s) in self.symbols.chunks_exact_mut(self.steps).zip(next) {
            row.rotate_left(1);
            row[self.steps - 1] = s;
        }
    }
}

/// `B` predicted distributions over the 256 byte values.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbBatch<F> {
    probs: Vec<F>,
}

impl<F: Scalar> ProbBatch<F> {
    pub fn rows(&self) -> usize {
        self.probs.len() / ALPHABET
    }

    pub fn row(&self, stream: usize) -> &[F] {
        &self.probs[stream * ALPHABET..(stream + 1) * ALPHABET]
    }

    pub fn data(&self) -> &[F] {
        &self.probs
    }
}

/// Summary of the router weights of one step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RouterStats {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

/// A recorded forward pass: the prediction plus everything `train_step`
/// needs to backpropagate through it.
pub struct Pass<F> {
    graph: Graph<F>,
    logits: NodeId,
    alpha: Option<NodeId>,
    probs: ProbBatch<F>,
    lse: Vec<F>,
    stages: Vec<(Stage, NodeId)>,
}

/// Named intermediate activations of a forward pass.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    /// `B×T×D` symbol embeddings.
    Embedding,
    /// Normalised flattened context, `B×1×D_h`.
    Input,
    /// Gated feature appended to the rolling cache, `B×1×D`.
    CacheFeature,
    Global,
    Local,
    Router,
    Mix,
    /// Output of the persistent-memory channel mixing before gating.
    Adapted,
    Coarse,
    Expand,
    Output,
    Logits,
}

impl<F: Scalar> Pass<F> {
    pub fn probs(&self) -> &ProbBatch<F> {
        &self.probs
    }

    /// Value of an intermediate activation, if the variant computes it.
    pub fn stage(&self, stage: Stage) -> Option<&Tensor<F>> {
        self.stages
            .iter()
            .find(|(s, _)| *s == stage)
            .map(|(_, id)| self.graph.value(*id))
    }

    pub fn router_stats(&self) -> Option<RouterStats> {
        let a = self.graph.value(self.alpha?).data();
        let n = a.len() as f64;
        Some(RouterStats {
            mean: a.iter().map(|v| v.as_f64()).sum::<f64>() / n,
            min: a.iter().map(|v| v.as_f64()).fold(f64::INFINITY, f64::min),
            max: a.iter().map(|v| v.as_f64()).fold(f64::NEG_INFINITY, f64::max),
        })
    }
}

#[derive(Clone, Copy, Debug)]
struct LayerNormIds {
    gain: ParamId,
    bias: ParamId,
}

/// Parameter handles, in creation (and optimizer) order.
#[derive(Clone, Copy, Debug)]
pub struct ParamIds {
    embedding: ParamId,
    input_ln: LayerNormIds,
    w_g: ParamId,
    w_v: ParamId,
    w_m: ParamId,
    lambda_m: ParamId,
    local_ln: LayerNormIds,
    conv_kernel: ParamId,
    conv_bias: ParamId,
    w_r: ParamId,
    hgr_ln: LayerNormIds,
    down: ParamId,
    up: ParamId,
    w_u: ParamId,
    w_c: ParamId,
    lambda_c: ParamId,
    fnr_ln: LayerNormIds,
    geglu_gate: ParamId,
    geglu_value: ParamId,
    w_f: ParamId,
    lambda_o: ParamId,
    out_ln: LayerNormIds,
    head_w: ParamId,
    head_b: ParamId,
}

/// Named handles for tests and the ablation harness.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Weight {
    Embedding,
    GlobalGate,
    GlobalValue,
    CacheProjection,
    LambdaM,
    ConvKernel,
    ConvBias,
    Router,
    Down,
    Up,
    PersistentMemory,
    SelfGate,
    LambdaC,
    GegluGate,
    GegluValue,
    FineProjection,
    LambdaO,
    FineOutLnBias,
    HeadWeight,
    HeadBias,
}

/// Model state: weights, optimizer moments and the per-stream rolling cache.
#[derive(Clone)]
pub struct Model<F> {
    cfg: ModelConfig,
    variant: Variant,
    store: ParamStore<F>,
    ids: ParamIds,
    cache: Tensor<F>,
    adam: AdamConfig,
    step: u64,
}

impl<F: Scalar> Model<F> {
    /// Builds the initial state. Identical `(cfg, variant)` always produce
    /// identical weights.
    pub fn new(cfg: &ModelConfig, variant: Variant) -> Result<Self> {
        cfg.validate_model()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut store = ParamStore::new();
        let (d, dh, dc, dr, de, b) = (
            cfg.embed_dim,
            cfg.hidden_dim(),
            cfg.cache_dim,
            cfg.hgr_dim,
            cfg.fnr_dim,
            cfg.batch,
        );
        let mut uniform = |store: &mut ParamStore<F>, name: &str, shape: &[usize], bound: f64| {
            let t = Tensor::from_fn(shape, |_| F::of(rng.gen_range(-bound..bound)));
            store.add(name, t)
        };
        let ln = |store: &mut ParamStore<F>, name: &str, width: usize| LayerNormIds {
            gain: store.add(format!("{name}.gain"), Tensor::filled(&[width], F::one())),
            bias: store.add(format!("{name}.bias"), Tensor::zeros(&[width])),
        };
        let inv = |n: usize| 1.0 / (n as f64).sqrt();

        let embedding = uniform(&mut store, "embedding", &[ALPHABET, d], 1.0);
        let input_ln = ln(&mut store, "input_ln", dh);
        let w_g = uniform(&mut store, "global.w_g", &[d, d], inv(d));
        let w_v = uniform(&mut store, "global.w_v", &[d, d], inv(d));
        let w_m = uniform(&mut store, "global.w_m", &[dc, dh], inv(dc));
        let lambda_m = store.add("global.lambda_m", Tensor::scalar(F::one()));
        let local_ln = ln(&mut store, "local_ln", d);
        let conv_kernel = uniform(&mut store, "local.conv", &[cfg.conv_kernel, d, d], inv(cfg.conv_kernel * d));
        let conv_bias = store.add("local.conv_bias", Tensor::zeros(&[d]));
        let w_r = uniform(&mut store, "router.w_r", &[dh, dh], inv(dh));
        let hgr_ln = ln(&mut store, "hgr_ln", dh);
        let down = uniform(&mut store, "hgr.down", &[dh, dr], inv(dh));
        let up = uniform(&mut store, "hgr.up", &[dr, dh], inv(dr));
        let mut eye = Vec::with_capacity(b * dr * dr);
        for _ in 0..b {
            eye.extend_from_slice(Tensor::<F>::eye(dr).data());
        }
        let w_u = store.add("hgr.w_u", Tensor::new(&[b, dr, dr], eye)?);
        let w_c = uniform(&mut store, "hgr.w_c", &[dh, dh], inv(dh));
        let lambda_c = store.add("hgr.lambda_c", Tensor::scalar(F::one()));
        let fnr_ln = ln(&mut store, "fnr_ln", dh);
        let geglu_gate = uniform(&mut store, "fnr.gate", &[dh, de], inv(dh));
        let geglu_value = uniform(&mut store, "fnr.value", &[dh, de], inv(dh));
        let w_f = uniform(&mut store, "fnr.w_f", &[de, dh], inv(de));
        let lambda_o = store.add("fnr.lambda_o", Tensor::scalar(F::one()));
        let out_ln = ln(&mut store, "fnr.out_ln", dh);
        let head_w = uniform(&mut store, "head.w", &[dh, ALPHABET], 0.1 * inv(dh));
        let head_b = store.add("head.b", Tensor::zeros(&[ALPHABET]));

        let ids = ParamIds {
            embedding,
            input_ln,
            w_g,
            w_v,
            w_m,
            lambda_m,
            local_ln,
            conv_kernel,
            conv_bias,
            w_r,
            hgr_ln,
            down,
            up,
            w_u,
            w_c,
            lambda_c,
            fnr_ln,
            geglu_gate,
            geglu_value,
            w_f,
            lambda_o,
            out_ln,
            head_w,
            head_b,
        };
        Ok(Model {
            cfg: cfg.clone(),
            variant,
            store,
            ids,
            cache: Tensor::zeros(&[b, 1, dc]),
            adam: cfg.adam(),
            step: 0,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn store(&self) -> &ParamStore<F> {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore<F> {
        &mut self.store
    }

    /// Rolling cache `M`, shape `B×1×cache_dim`.
    pub fn cache(&self) -> &Tensor<F> {
        &self.cache
    }

    pub fn cache_mut(&mut self) -> &mut Tensor<F> {
        &mut self.cache
    }

    /// Number of completed training steps.
    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn weight_id(&self, w: Weight) -> ParamId {
        let i = &self.ids;
        match w {
            Weight::Embedding => i.embedding,
            Weight::GlobalGate => i.w_g,
            Weight::GlobalValue => i.w_v,
            Weight::CacheProjection => i.w_m,
            Weight::LambdaM => i.lambda_m,
            Weight::ConvKernel => i.conv_kernel,
            Weight::ConvBias => i.conv_bias,
            Weight::Router => i.w_r,
            Weight::Down => i.down,
            Weight::Up => i.up,
            Weight::PersistentMemory => i.w_u,
            Weight::SelfGate => i.w_c,
            Weight::LambdaC => i.lambda_c,
            Weight::GegluGate => i.geglu_gate,
            Weight::GegluValue => i.geglu_value,
            Weight::FineProjection => i.w_f,
            Weight::LambdaO => i.lambda_o,
            Weight::FineOutLnBias => i.out_ln.bias,
            Weight::HeadWeight => i.head_w,
            Weight::HeadBias => i.head_b,
        }
    }

    pub fn weight(&self, w: Weight) -> &Tensor<F> {
        self.store.value(self.weight_id(w))
    }

    pub fn weight_mut(&mut self, w: Weight) -> &mut Tensor<F> {
        let id = self.weight_id(w);
        self.store.get_mut(id).value_mut()
    }

    fn divergence(&self, e: FadeError) -> FadeError {
        match e {
            FadeError::NonFinite(what) => FadeError::Divergence {
                step: self.step,
                detail: format!("non-finite output of {what}"),
            },
            other => other,
        }
    }

    /// Forward pass for one step. Updates the rolling cache and nothing else.
    pub fn predict(&mut self, ctx: &ContextWindow) -> Result<Pass<F>> {
        self.forward(ctx).map_err(|e| self.divergence(e))
    }

    fn ln(&self, g: &mut Graph<F>, x: NodeId, ids: LayerNormIds) -> Result<NodeId> {
        let gain = g.param(&self.store, ids.gain);
        let bias = g.param(&self.store, ids.bias);
        g.layer_norm(x, gain, bias)
    }

    fn linear(&self, g: &mut Graph<F>, x: NodeId, w: ParamId) -> Result<NodeId> {
        let w = g.param(&self.store, w);
        g.matmul(x, w)
    }

    fn geglu(&self, g: &mut Graph<F>, x: NodeId, gate: ParamId, value: ParamId) -> Result<NodeId> {
        let a = self.linear(g, x, gate)?;
        let a = g.gelu(a)?;
        let v = self.linear(g, x, value)?;
        g.mul(a, v)
    }

    fn forward(&mut self, ctx: &ContextWindow) -> Result<Pass<F>> {
        let cfg = &self.cfg;
        let (b, t, d, dh) = (cfg.batch, cfg.time_steps, cfg.embed_dim, cfg.hidden_dim());
        if ctx.batch() != b || ctx.steps() != t {
            return Err(FadeError::Dimension(format!(
                "context {}x{} for model {b}x{t}",
                ctx.batch(),
                ctx.steps()
            )));
        }
        let ids = self.ids;
        let router = self.variant.router();
        let use_global = router != Router::Fixed(0.0);
        let use_local = router != Router::Fixed(1.0);
        let mut g = Graph::new();
        let mut stages = Vec::new();

        let table = g.param(&self.store, ids.embedding);
        let emb = g.embedding(table, ctx.symbols(), &[b, t])?;
        let flat = g.reshape(emb, &[b, 1, dh])?;
        let x = self.ln(&mut g, flat, ids.input_ln)?;
        stages.push((Stage::Embedding, emb));
        stages.push((Stage::Input, x));

        let h_global = if use_global {
            let x_t = g.slice_cols(x, dh - d, d)?;
            let feat = self.geglu(&mut g, x_t, ids.w_g, ids.w_v)?;
            stages.push((Stage::CacheFeature, feat));
            let m = g.roll_append(&self.cache, feat)?;
            self.cache = g.value(m).clone();
            let proj = self.linear(&mut g, m, ids.w_m)?;
            let proj = g.gelu(proj)?;
            let lm = g.param(&self.store, ids.lambda_m);
            let res = g.scale(x, lm)?;
            let hg = g.add(proj, res)?;
            stages.push((Stage::Global, hg));
            Some(hg)
        } else {
            None
        };

        let h_local = if use_local {
            let z = self.ln(&mut g, emb, ids.local_ln)?;
            let k = g.param(&self.store, ids.conv_kernel);
            let kb = g.param(&self.store, ids.conv_bias);
            let c = g.conv1d(z, k, kb)?;
            let c = g.gelu(c)?;
            let hl = g.reshape(c, &[b, 1, dh])?;
            stages.push((Stage::Local, hl));
            Some(hl)
        } else {
            None
        };

        let mut alpha = None;
        let h_mix = match (router, h_global, h_local) {
            (Router::Learned, Some(hg), Some(hl)) => {
                let r = self.linear(&mut g, x, ids.w_r)?;
                let a = g.sigmoid(r)?;
                alpha = Some(a);
                stages.push((Stage::Router, a));
                let diff = g.sub(hg, hl)?;
                let w = g.mul(a, diff)?;
                g.add(hl, w)?
            }
            (Router::Fixed(_), Some(hg), None) => hg,
            (Router::Fixed(_), None, Some(hl)) => hl,
            (Router::Fixed(c), Some(hg), Some(hl)) => {
                let diff = g.sub(hg, hl)?;
                let w = g.scale_const(diff, c)?;
                g.add(hl, w)?
            }
            _ => unreachable!("at least one stream is active"),
        };

        stages.push((Stage::Mix, h_mix));

        let h_coarse = match self.variant.coarse() {
            Some(gated) => {
                let z = self.ln(&mut g, h_mix, ids.hgr_ln)?;
                let low = self.linear(&mut g, z, ids.down)?;
                let wu = g.param(&self.store, ids.w_u);
                let mixed = g.bmm(low, wu)?;
                let h_a = self.linear(&mut g, mixed, ids.up)?;
                stages.push((Stage::Adapted, h_a));
                let adapted = if gated {
                    let s = self.linear(&mut g, h_mix, ids.w_c)?;
                    let s = g.sigmoid(s)?;
                    g.mul(h_a, s)?
                } else {
                    h_a
                };
                let lc = g.param(&self.store, ids.lambda_c);
                let res = g.scale(h_mix, lc)?;
                g.add(adapted, res)?
            }
            None => h_mix,
        };
        stages.push((Stage::Coarse, h_coarse));

        let h = if self.variant.fine() {
            let z = self.ln(&mut g, h_coarse, ids.fnr_ln)?;
            let expand = self.geglu(&mut g, z, ids.geglu_gate, ids.geglu_value)?;
            stages.push((Stage::Expand, expand));
            let proj = self.linear(&mut g, expand, ids.w_f)?;
            let proj = self.ln(&mut g, proj, ids.out_ln)?;
            let proj = g.gelu(proj)?;
            let lo = g.param(&self.store, ids.lambda_o);
            let res = g.scale(h_coarse, lo)?;
            g.add(proj, res)?
        } else {
            h_coarse
        };

        let logits = self.linear(&mut g, h, ids.head_w)?;
        let hb = g.param(&self.store, ids.head_b);
        let logits = g.add_row(logits, hb)?;
        stages.push((Stage::Output, h));
        stages.push((Stage::Logits, logits));
        let (probs, lse) = kernels::softmax_lse_rows(g.value(logits).data(), ALPHABET);
        Ok(Pass {
            graph: g,
            logits,
            alpha,
            probs: ProbBatch { probs },
            lse,
            stages,
        })
    }

    /// Loss of `targets` under `pass` and its parameter gradients, without
    /// updating the weights.
    pub fn backprop(&mut self, mut pass: Pass<F>, targets: &[u8]) -> Result<f64> {
        let probs = std::mem::take(&mut pass.probs.probs);
        let loss = pass
            .graph
            .cross_entropy_with(pass.logits, targets, probs, &pass.lse)
            .map_err(|e| self.divergence(e))?;
        let value = pass.graph.value(loss).item().as_f64();
        if !value.is_finite() {
            return Err(FadeError::Divergence {
                step: self.step,
                detail: "non-finite loss".into(),
            });
        }
        self.store.zero_grad();
        pass.graph.backward(loss, &mut self.store)?;
        Ok(value)
    }

    /// Backpropagates the mean NLL of `targets` (in nats) and applies one
    /// Adam update. Returns the loss.
    pub fn train_step(&mut self, pass: Pass<F>, targets: &[u8]) -> Result<f64> {
        let loss = self.backprop(pass, targets)?;
        self.store.adam_step(&self.adam);
        self.step += 1;
        Ok(loss)
    }

    /// Loss for `(ctx, targets)` evaluated on a copy of the current state.
    pub fn loss_at(&self, ctx: &ContextWindow, targets: &[u8]) -> Result<f64> {
        let mut probe = self.clone();
        let mut pass = probe.predict(ctx)?;
        let loss = pass.graph.cross_entropy(pass.logits, targets)?;
        Ok(pass.graph.value(loss).item().as_f64())
    }
}

impl ModelConfig {
    fn validate_model(&self) -> Result<()> {
        // Worker count only matters to the decoder's scheduling.
        ModelConfig {
            workers: 1,
            ..self.clone()
        }
        .validate()
    }
}
