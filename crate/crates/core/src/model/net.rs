use rand::Rng as _;

use super::{ModelConfig, ModelError, PatchBatch};
use crate::autodiff::{Mode, ParamId, ParamStore, Tape, Tensor, Var};
use crate::geom::N_SCALES;
use crate::rng::{stream, Rng};

#[derive(Debug, Clone, Copy)]
struct Dense {
    w: ParamId,
    b: ParamId,
}

#[derive(Debug, Clone, Copy)]
struct Norm {
    gamma: ParamId,
    beta: ParamId,
    mean: ParamId,
    var: ParamId,
}

#[derive(Debug, Clone)]
struct Decoder {
    trunk: [Dense; 2],
    pre: Dense,
    offset: Dense,
}

#[derive(Debug, Clone)]
struct Layout {
    pfe: [Vec<(Dense, Norm)>; N_SCALES],
    fc1: Dense,
    gates: [Dense; N_SCALES],
    weight_head: [Dense; 2],
    decoders: [Decoder; N_SCALES],
}

/// Network parameters plus the layout that addresses them.
#[derive(Debug, Clone)]
pub struct ModNet {
    config: ModelConfig,
    store: ParamStore,
    layout: Layout,
}

/// Tape handles for every intermediate of one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct ForwardVars {
    pub low_feats: [Var; N_SCALES],
    pub gated_feats: [Var; N_SCALES],
    /// `[batch, scale, axis]`.
    pub weights: Var,
    pub pre_offsets: [Var; N_SCALES],
    pub offsets: [Var; N_SCALES],
    pub dp: Var,
}

/// Values of a forward pass, detached from the tape.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    pub low_feats: [Tensor; N_SCALES],
    pub gated_feats: [Tensor; N_SCALES],
    pub weights: Tensor,
    pub pre_offsets: [Tensor; N_SCALES],
    pub offsets: [Tensor; N_SCALES],
    pub dp: Tensor,
}

impl ForwardOutput {
    pub fn from_tape(tape: &Tape<'_>, v: &ForwardVars) -> Self {
        let get = |x: Var| tape.value(x).clone();
        Self {
            low_feats: v.low_feats.map(get),
            gated_feats: v.gated_feats.map(get),
            weights: get(v.weights),
            pre_offsets: v.pre_offsets.map(get),
            offsets: v.offsets.map(get),
            dp: get(v.dp),
        }
    }

    pub fn batch(&self) -> usize {
        self.dp.shape()[0]
    }

    /// Scale weight of `scale` on `axis` for batch row `b`.
    pub fn weight(&self, b: usize, scale: usize, axis: usize) -> f64 {
        self.weights.data()[(b * N_SCALES + scale) * 3 + axis]
    }
}

/// Every parameter name and shape, in creation order.
fn build_layout(cfg: &ModelConfig, store: &mut ParamStore, rng: &mut Rng) -> Layout {
    let mut dense = |store: &mut ParamStore, name: &str, fan_in: usize, fan_out: usize| {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let w = (0..fan_in * fan_out).map(|_| rng.gen_range(-limit..=limit)).collect();
        Dense {
            w: store.add(
                format!("{name}.weight"),
                Tensor::new(vec![fan_in, fan_out], w).expect("sized"),
                true,
            ),
            b: store.add(format!("{name}.bias"), Tensor::zeros(&[fan_out]), true),
        }
    };
    let norm = |store: &mut ParamStore, name: &str, f: usize| Norm {
        gamma: store.add(format!("{name}.gamma"), Tensor::filled(&[f], 1.0), true),
        beta: store.add(format!("{name}.beta"), Tensor::zeros(&[f]), true),
        mean: store.add(format!("{name}.running_mean"), Tensor::zeros(&[f]), false),
        var: store.add(format!("{name}.running_var"), Tensor::filled(&[f], 1.0), false),
    };
    let feat = cfg.feature_width();
    let pfe = std::array::from_fn(|k| {
        let mut fan_in = 3;
        cfg.encoder_widths
            .iter()
            .enumerate()
            .map(|(j, &w)| {
                let d = dense(store, &format!("pfe.{k}.l{j}"), fan_in, w);
                let n = norm(store, &format!("pfe.{k}.l{j}.bn"), w);
                fan_in = w;
                (d, n)
            })
            .collect()
    });
    let fc1 = dense(store, "mspm.fc1", N_SCALES * feat, cfg.fc1_width);
    let gates = std::array::from_fn(|k| dense(store, &format!("mspm.fc2.{k}"), cfg.fc1_width, feat));
    let weight_head = [
        dense(store, "mspm.fcw.0", cfg.fc1_width, cfg.weight_hidden),
        dense(store, "mspm.fcw.1", cfg.weight_hidden, 3 * N_SCALES),
    ];
    let [h1, h2] = cfg.decoder_widths;
    let decoders = std::array::from_fn(|k| Decoder {
        trunk: [
            dense(store, &format!("mod.{k}.dc1.0"), feat, h1),
            dense(store, &format!("mod.{k}.dc1.1"), h1, h2),
        ],
        pre: dense(store, &format!("mod.{k}.dc2"), h2, 3),
        offset: dense(store, &format!("mod.{k}.dc3"), h2, 3),
    });
    Layout {
        pfe,
        fc1,
        gates,
        weight_head,
        decoders,
    }
}

impl ModNet {
    /// Fresh network with Glorot-uniform weights, zero biases, and identity
    /// batch-norm affine terms.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut store = ParamStore::new();
        let mut rng = stream(seed, &[0x696e_6974]);
        let layout = build_layout(&config, &mut store, &mut rng);
        Ok(Self {
            config,
            store,
            layout,
        })
    }

    /// Wraps a loaded store after checking it against the config's layout.
    pub fn from_store(config: ModelConfig, store: ParamStore) -> Result<Self, ModelError> {
        let template = Self::new(config, 0)?;
        if template.dimension_table() != dimension_table_of(&store) {
            return Err(ModelError::Config(format!(
                "parameter layout mismatch\nexpected:\n{}\nfound:\n{}",
                template.dimension_table(),
                dimension_table_of(&store)
            )));
        }
        Ok(Self { store, ..template })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    /// One line per tensor: `name dims`.
    pub fn dimension_table(&self) -> String {
        dimension_table_of(&self.store)
    }

    /// Zeroes both offset heads so every displacement is exactly zero.
    pub fn zero_displacement_heads(&mut self) {
        for d in &self.layout.decoders {
            for id in [d.pre.w, d.pre.b, d.offset.w, d.offset.b] {
                self.store.get_mut(id).value.data_mut().fill(0.0);
            }
        }
    }

    /// Zeroes the last scale-weight layer so every scale weight is 1/3.
    pub fn zero_weight_head(&mut self) {
        let d = self.layout.weight_head[1];
        for id in [d.w, d.b] {
            self.store.get_mut(id).value.data_mut().fill(0.0);
        }
    }

    /// Zeroes the gate layers so every gate is exactly 0.5.
    pub fn zero_gates(&mut self) {
        for d in &self.layout.gates {
            for id in [d.w, d.b] {
                self.store.get_mut(id).value.data_mut().fill(0.0);
            }
        }
    }

    /// Per-point encoder of one scale followed by max-pooling: `[rows, 3]` → `[batch, feat]`.
    pub fn pfe_forward(
        &self,
        tape: &mut Tape<'_>,
        scale: usize,
        points: Var,
        weights: Option<&[f64]>,
        offsets: &[usize],
    ) -> Result<Var, ModelError> {
        let mut h = points;
        for (d, n) in &self.layout.pfe[scale] {
            h = tape.linear_p(h, d.w, d.b)?;
            h = tape.batchnorm(h, n.gamma, n.beta, n.mean, n.var, weights)?;
            h = tape.relu(h)?;
        }
        Ok(tape.maxpool_segments(h, offsets)?)
    }

    /// Fuses the three scale features; returns gated features and `[batch, scale, axis]` weights.
    pub fn mspm_forward(
        &self,
        tape: &mut Tape<'_>,
        feats: [Var; N_SCALES],
    ) -> Result<([Var; N_SCALES], Var), ModelError> {
        let feat = self.config.feature_width();
        for &f in &feats {
            if tape.shape(f).len() != 2 || tape.shape(f)[1] != feat {
                return Err(crate::autodiff::AutodiffError::Shape {
                    op: "mspm",
                    left: tape.shape(f).to_vec(),
                    right: vec![feat],
                }
                .into());
            }
        }
        let l = &self.layout;
        let fused = tape.concat(&feats)?;
        let h = tape.linear_p(fused, l.fc1.w, l.fc1.b)?;
        let h = tape.relu(h)?;
        let mut gated = feats;
        for k in 0..N_SCALES {
            let g = tape.linear_p(h, l.gates[k].w, l.gates[k].b)?;
            let g = tape.sigmoid(g)?;
            gated[k] = tape.mul(feats[k], g)?;
        }
        let w = tape.linear_p(h, l.weight_head[0].w, l.weight_head[0].b)?;
        let w = tape.relu(w)?;
        let w9 = tape.linear_p(w, l.weight_head[1].w, l.weight_head[1].b)?;
        let batch = tape.shape(w9)[0];
        // rows are axes, columns scales; normalize over scales, then index by scale
        let w = tape.reshape(w9, &[batch, 3, N_SCALES])?;
        let w = tape.softmax(w, 2)?;
        let weights = tape.transpose12(w)?;
        Ok((gated, weights))
    }

    /// Per-scale decoders and the weighted combination of their offsets.
    pub fn mod_forward(
        &self,
        tape: &mut Tape<'_>,
        gated: [Var; N_SCALES],
        weights: Var,
    ) -> Result<([Var; N_SCALES], [Var; N_SCALES], Var), ModelError> {
        let mut pre = gated;
        let mut off = gated;
        let mut dp = None;
        for k in 0..N_SCALES {
            let d = &self.layout.decoders[k];
            let mut h = gated[k];
            for t in &d.trunk {
                h = tape.linear_p(h, t.w, t.b)?;
                h = tape.relu(h)?;
            }
            let p = tape.linear_p(h, d.pre.w, d.pre.b)?;
            pre[k] = tape.tanh(p)?;
            let o = tape.linear_p(h, d.offset.w, d.offset.b)?;
            off[k] = tape.tanh(o)?;
            let wk = tape.select1(weights, k)?;
            let term = tape.mul(off[k], wk)?;
            dp = Some(match dp {
                None => term,
                Some(acc) => tape.add(acc, term)?,
            });
        }
        Ok((pre, off, dp.expect("three scales")))
    }

    /// Records the full network on `tape`.
    pub fn forward(&self, tape: &mut Tape<'_>, batch: &PatchBatch) -> Result<ForwardVars, ModelError> {
        let mut low = [Var(0); N_SCALES];
        for k in 0..N_SCALES {
            let x = tape.input(batch.points[k].clone());
            low[k] = self.pfe_forward(tape, k, x, batch.weights[k].as_deref(), &batch.offsets[k])?;
        }
        let (gated_feats, weights) = self.mspm_forward(tape, low)?;
        let (pre_offsets, offsets, dp) = self.mod_forward(tape, gated_feats, weights)?;
        Ok(ForwardVars {
            low_feats: low,
            gated_feats,
            weights,
            pre_offsets,
            offsets,
            dp,
        })
    }

    /// Runs the network without keeping the tape.
    pub fn run(&self, batch: &PatchBatch, mode: Mode) -> Result<ForwardOutput, ModelError> {
        let mut tape = Tape::new(&self.store, mode);
        let vars = self.forward(&mut tape, batch)?;
        Ok(ForwardOutput::from_tape(&tape, &vars))
    }
}

fn dimension_table_of(store: &ParamStore) -> String {
    store
        .iter()
        .map(|p| {
            let dims: Vec<String> = p.value.shape().iter().map(usize::to_string).collect();
            format!("{} {}", p.name, dims.join("x"))
        })
        .collect::<Vec<_>>()
        .join("\n")
}
