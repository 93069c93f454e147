//! Shared MLP encoder, one projection head per similarity, and the learned
//! per-similarity log-variances `s_c = log σ_c²`.

mod checkpoint;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamRef, Tape, Tensor, Var};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub embedding_dim: usize,
    pub head_hidden_dim: usize,
    pub projection_dim: usize,
    pub num_tasks: usize,
    pub seed: u64,
}

impl EncoderConfig {
    pub fn new(input_dim: usize, num_tasks: usize, seed: u64) -> Self {
        Self {
            input_dim,
            hidden_dims: vec![128, 128],
            embedding_dim: 64,
            head_hidden_dim: 64,
            projection_dim: 32,
            num_tasks,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        // num_tasks may be 0 for an encoder trained without projection heads.
        let dims = [self.input_dim, self.embedding_dim, self.head_hidden_dim, self.projection_dim];
        if dims.contains(&0) || self.hidden_dims.contains(&0) {
            return Err(Error::contract("init_params", format!("all dimensions must be >= 1: {self:?}")));
        }
        Ok(())
    }
}

/// Affine map `x W + b` with `W: in x out` and `b: 1 x out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Linear {
    /// He-scaled Gaussian weights, zero bias.
    pub fn init(fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Self {
        let std = (2.0 / fan_in as f64).sqrt();
        let w = (0..fan_in * fan_out)
            .map(|_| {
                let z: f64 = rng.sample(StandardNormal);
                std * z
            })
            .collect();
        Self {
            weight: Tensor::matrix(fan_in, fan_out, w).expect("positive extents"),
            bias: Tensor::zeros(&[1, fan_out]),
        }
    }

    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self { weight: Tensor::zeros(&[fan_in, fan_out]), bias: Tensor::zeros(&[1, fan_out]) }
    }

    pub fn fan_in(&self) -> usize {
        self.weight.rows()
    }

    pub fn fan_out(&self) -> usize {
        self.weight.cols()
    }

    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> BoundLinear {
        let put = |tape: &mut Tape, t: &Tensor| if trainable { tape.leaf(t.clone()) } else { tape.constant(t.clone()) };
        BoundLinear { weight: put(tape, &self.weight), bias: put(tape, &self.bias) }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BoundLinear {
    pub weight: Var,
    pub bias: Var,
}

impl BoundLinear {
    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let xw = tape.matmul(x, self.weight)?;
        tape.add(xw, self.bias)
    }
}

/// Projection head: linear, relu, linear, then row normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct Head {
    pub hidden: Linear,
    pub out: Linear,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: EncoderConfig,
    pub encoder: Vec<Linear>,
    pub heads: Vec<Head>,
    pub log_var: Vec<f64>,
}

/// Which parameter groups receive gradients when bound to a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Trainable {
    pub encoder: bool,
    pub heads: bool,
    pub log_var: bool,
}

impl Trainable {
    pub const ALL: Trainable = Trainable { encoder: true, heads: true, log_var: true };
    pub const NETWORK: Trainable = Trainable { encoder: true, heads: true, log_var: false };
    pub const NONE: Trainable = Trainable { encoder: false, heads: false, log_var: false };
}

pub fn init_params(config: &EncoderConfig) -> Result<ModelParams> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut dims = vec![config.input_dim];
    dims.extend(&config.hidden_dims);
    dims.push(config.embedding_dim);
    let encoder = dims.windows(2).map(|w| Linear::init(w[0], w[1], &mut rng)).collect();
    let heads = (0..config.num_tasks)
        .map(|_| Head {
            hidden: Linear::init(config.embedding_dim, config.head_hidden_dim, &mut rng),
            out: Linear::init(config.head_hidden_dim, config.projection_dim, &mut rng),
        })
        .collect();
    Ok(ModelParams { config: config.clone(), encoder, heads, log_var: vec![0.0; config.num_tasks] })
}

impl ModelParams {
    pub fn num_tasks(&self) -> usize {
        self.heads.len()
    }

    /// `σ_c² = exp(s_c)`.
    pub fn sigma_sq(&self) -> Vec<f64> {
        self.log_var.iter().map(|s| s.exp()).collect()
    }

    /// Effective loss weights `exp(-s_c) = 1/σ_c²`.
    pub fn weights(&self) -> Vec<f64> {
        self.log_var.iter().map(|s| (-s).exp()).collect()
    }

    /// Parameter names in canonical order (matches [`ModelParams::param_refs`]).
    pub fn param_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for i in 0..self.encoder.len() {
            names.push(format!("encoder.{i}.weight"));
            names.push(format!("encoder.{i}.bias"));
        }
        for c in 0..self.heads.len() {
            for part in ["hidden", "out"] {
                names.push(format!("heads.{c}.{part}.weight"));
                names.push(format!("heads.{c}.{part}.bias"));
            }
        }
        names.extend((0..self.log_var.len()).map(|c| format!("log_var.{c}")));
        names
    }

    fn tensors(&self) -> Vec<(&[usize], &[f64])> {
        let mut out: Vec<(&[usize], &[f64])> = Vec::new();
        let layers = self.encoder.iter().chain(self.heads.iter().flat_map(|h| [&h.hidden, &h.out]));
        for t in layers {
            out.push((t.weight.shape(), t.weight.data()));
            out.push((t.bias.shape(), t.bias.data()));
        }
        for s in &self.log_var {
            out.push((&[1], std::slice::from_ref(s)));
        }
        out
    }

    fn values_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for l in &mut self.encoder {
            out.push(l.weight.data_mut());
            out.push(l.bias.data_mut());
        }
        for h in &mut self.heads {
            out.push(h.hidden.weight.data_mut());
            out.push(h.hidden.bias.data_mut());
            out.push(h.out.weight.data_mut());
            out.push(h.out.bias.data_mut());
        }
        for s in &mut self.log_var {
            out.push(std::slice::from_mut(s));
        }
        out
    }

    /// Pairs every parameter block with its gradient from `grads` (in
    /// canonical order), ready for an optimizer step.
    pub fn param_refs<'a>(&'a mut self, grads: &'a [Option<Vec<f64>>]) -> Vec<ParamRef<'a>> {
        let names = self.param_names();
        self.values_mut()
            .into_iter()
            .zip(names)
            .zip(grads)
            .map(|((value, name), g)| ParamRef { name, value, grad: g.as_deref() })
            .collect()
    }

    /// Order-sensitive FNV-1a hash over every parameter's bit pattern.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for (_, data) in self.tensors() {
            for v in data {
                for b in v.to_bits().to_le_bytes() {
                    h ^= b as u64;
                    h = h.wrapping_mul(0x0100_0000_01b3);
                }
            }
        }
        h
    }

    pub fn bind(&self, tape: &mut Tape, trainable: Trainable) -> BoundModel {
        let encoder = self.encoder.iter().map(|l| l.bind(tape, trainable.encoder)).collect();
        let heads = self
            .heads
            .iter()
            .map(|h| [h.hidden.bind(tape, trainable.heads), h.out.bind(tape, trainable.heads)])
            .collect();
        let log_var = self
            .log_var
            .iter()
            .map(|&s| if trainable.log_var { tape.leaf(Tensor::scalar(s)) } else { tape.constant(Tensor::scalar(s)) })
            .collect();
        BoundModel { encoder, heads, log_var }
    }
}

/// Model parameters recorded on a tape.
#[derive(Debug, Clone)]
pub struct BoundModel {
    pub encoder: Vec<BoundLinear>,
    pub heads: Vec<[BoundLinear; 2]>,
    pub log_var: Vec<Var>,
}

impl BoundModel {
    /// `h = f(x)`: relu between layers, linear final layer, no normalization.
    pub fn encode(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let mut h = x;
        for (i, layer) in self.encoder.iter().enumerate() {
            h = layer.forward(tape, h)?;
            if i + 1 < self.encoder.len() {
                h = tape.relu(h)?;
            }
        }
        Ok(h)
    }

    /// `v^c = g^c(h)`, rows on the unit sphere.
    pub fn project(&self, tape: &mut Tape, h: Var, task: usize) -> Result<Var> {
        let [hidden, out] = self
            .heads
            .get(task)
            .ok_or_else(|| Error::contract("project", format!("task {task} out of range ({} heads)", self.heads.len())))?;
        let z = hidden.forward(tape, h)?;
        let z = tape.relu(z)?;
        let z = out.forward(tape, z)?;
        tape.row_normalize(z)
    }

    /// Tape handles in canonical parameter order.
    pub fn vars(&self) -> Vec<Var> {
        let mut out = Vec::new();
        for l in &self.encoder {
            out.extend([l.weight, l.bias]);
        }
        for [a, b] in &self.heads {
            out.extend([a.weight, a.bias, b.weight, b.bias]);
        }
        out.extend(&self.log_var);
        out
    }

    /// Gradients for every parameter block in canonical order; `None` for
    /// frozen or unreached blocks.
    pub fn collect_grads(&self, grads: &mut crate::autodiff::Gradients) -> Vec<Option<Vec<f64>>> {
        self.vars().into_iter().map(|v| grads.take(v)).collect()
    }
}

fn check_input(params: &ModelParams, x: &Tensor) -> Result<()> {
    if x.shape().len() != 2 || x.cols() != params.config.input_dim {
        return Err(Error::contract(
            "encode",
            format!("expected batch x {} input, got {:?}", params.config.input_dim, x.shape()),
        ));
    }
    Ok(())
}

/// Embeddings for a batch of inputs, without recording gradients.
pub fn encode(params: &ModelParams, x: &Tensor) -> Result<Tensor> {
    check_input(params, x)?;
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape, Trainable::NONE);
    let xv = tape.constant(x.clone());
    let h = bound.encode(&mut tape, xv)?;
    Ok(tape.value(h).clone())
}

/// Unit-norm projections of embeddings `h` through head `task`.
pub fn project(params: &ModelParams, h: &Tensor, task: usize) -> Result<Tensor> {
    if h.shape().len() != 2 || h.cols() != params.config.embedding_dim {
        return Err(Error::contract("project", format!("expected batch x {} embeddings", params.config.embedding_dim)));
    }
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape, Trainable::NONE);
    let hv = tape.constant(h.clone());
    let v = bound.project(&mut tape, hv, task)?;
    Ok(tape.value(v).clone())
}
