use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::ModelConfig;
use crate::error::{dim_err, Result};
use crate::tensor::{Element, Tensor};

/// Affine map `x·W + b` with `W: [in, out]`.
#[derive(Debug, Clone)]
pub struct Linear<E: Element> {
    pub weight: Tensor<E>,
    pub bias: Tensor<E>,
}

impl<E: Element> Linear<E> {
    fn init(fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            weight: Tensor::randn(&[fan_in, fan_out], 1.0 / (fan_in as f64).sqrt(), rng),
            bias: Tensor::zeros(&[fan_out]),
        }
    }

    fn zero(fan_in: usize, fan_out: usize) -> Self {
        Self {
            weight: Tensor::zeros(&[fan_in, fan_out]),
            bias: Tensor::zeros(&[fan_out]),
        }
    }

    pub fn apply(&self, x: &Tensor<E>) -> Result<Tensor<E>> {
        if x.rank() == 1 {
            let out = self.weight.shape()[1];
            return x
                .reshape(&[1, x.numel()])?
                .matmul(&self.weight)?
                .reshape(&[out])?
                .add(&self.bias);
        }
        x.matmul(&self.weight)?.add(&self.bias)
    }

    fn map<F: Element>(
        &self,
        prefix: &str,
        f: &mut impl FnMut(&str, &Tensor<E>) -> Result<Tensor<F>>,
    ) -> Result<Linear<F>> {
        Ok(Linear {
            weight: f(&format!("{prefix}.weight"), &self.weight)?,
            bias: f(&format!("{prefix}.bias"), &self.bias)?,
        })
    }
}

#[derive(Debug, Clone)]
pub struct BlockParams<E: Element> {
    /// Produces shift/scale pairs for the self-attention and MLP norms.
    pub modulation: Linear<E>,
    pub query: Linear<E>,
    pub key: Linear<E>,
    pub value: Linear<E>,
    pub attn_out: Linear<E>,
    pub cross_norm_gain: Tensor<E>,
    pub cross_norm_bias: Tensor<E>,
    pub cross_query: Linear<E>,
    pub cross_key: Linear<E>,
    pub cross_value: Linear<E>,
    pub cross_out: Linear<E>,
    pub mlp_in: Linear<E>,
    pub mlp_out: Linear<E>,
}

/// All weights of the video transformer.
#[derive(Debug, Clone)]
pub struct DiTParams<E: Element = f32> {
    pub config: ModelConfig,
    pub embed: Linear<E>,
    pub pos_frame: Tensor<E>,
    pub pos_height: Tensor<E>,
    pub pos_width: Tensor<E>,
    pub time_in: Linear<E>,
    pub time_out: Linear<E>,
    pub cond_table: Tensor<E>,
    pub blocks: Vec<BlockParams<E>>,
    pub final_modulation: Linear<E>,
    pub head: Linear<E>,
}

const POS_STD: f64 = 0.1;

/// Deterministic initialization: projections are normal with standard
/// deviation 1/√fan_in, biases zero, and the output head zero so that an
/// untrained model predicts zeros.
pub fn init_params<E: Element>(config: &ModelConfig, seed: u64) -> Result<DiTParams<E>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = config.d_model;
    let hidden = d * config.mlp_ratio;
    let embed = Linear::init(config.channels, d, &mut rng);
    let pos_frame = Tensor::randn(&[config.frames, d], POS_STD, &mut rng);
    let pos_height = Tensor::randn(&[config.height, d], POS_STD, &mut rng);
    let pos_width = Tensor::randn(&[config.width, d], POS_STD, &mut rng);
    let time_in = Linear::init(d, d, &mut rng);
    let time_out = Linear::init(d, d, &mut rng);
    let cond_table = Tensor::randn(&[config.cond_vocab, d], 1.0, &mut rng);
    let blocks = (0..config.blocks)
        .map(|_| BlockParams {
            modulation: Linear::init(d, 4 * d, &mut rng),
            query: Linear::init(d, d, &mut rng),
            key: Linear::init(d, d, &mut rng),
            value: Linear::init(d, d, &mut rng),
            attn_out: Linear::init(d, d, &mut rng),
            cross_norm_gain: Tensor::ones(&[d]),
            cross_norm_bias: Tensor::zeros(&[d]),
            cross_query: Linear::init(d, d, &mut rng),
            cross_key: Linear::init(d, d, &mut rng),
            cross_value: Linear::init(d, d, &mut rng),
            cross_out: Linear::init(d, d, &mut rng),
            mlp_in: Linear::init(d, hidden, &mut rng),
            mlp_out: Linear::init(hidden, d, &mut rng),
        })
        .collect();
    let final_modulation = Linear::init(d, 2 * d, &mut rng);
    Ok(DiTParams {
        config: config.clone(),
        embed,
        pos_frame,
        pos_height,
        pos_width,
        time_in,
        time_out,
        cond_table,
        blocks,
        final_modulation,
        head: Linear::zero(d, config.channels),
    })
}

impl<E: Element> DiTParams<E> {
    /// Rebuilds the parameter set tensor by tensor, in a fixed name order.
    pub fn try_map<F: Element>(
        &self,
        mut f: impl FnMut(&str, &Tensor<E>) -> Result<Tensor<F>>,
    ) -> Result<DiTParams<F>> {
        let f = &mut f;
        let embed = self.embed.map("embed", f)?;
        let pos_frame = f("pos_frame", &self.pos_frame)?;
        let pos_height = f("pos_height", &self.pos_height)?;
        let pos_width = f("pos_width", &self.pos_width)?;
        let time_in = self.time_in.map("time_in", f)?;
        let time_out = self.time_out.map("time_out", f)?;
        let cond_table = f("cond_table", &self.cond_table)?;
        let mut blocks = Vec::with_capacity(self.blocks.len());
        for (i, b) in self.blocks.iter().enumerate() {
            let p = format!("blocks.{i}");
            blocks.push(BlockParams {
                modulation: b.modulation.map(&format!("{p}.modulation"), f)?,
                query: b.query.map(&format!("{p}.query"), f)?,
                key: b.key.map(&format!("{p}.key"), f)?,
                value: b.value.map(&format!("{p}.value"), f)?,
                attn_out: b.attn_out.map(&format!("{p}.attn_out"), f)?,
                cross_norm_gain: f(&format!("{p}.cross_norm.gain"), &b.cross_norm_gain)?,
                cross_norm_bias: f(&format!("{p}.cross_norm.bias"), &b.cross_norm_bias)?,
                cross_query: b.cross_query.map(&format!("{p}.cross_query"), f)?,
                cross_key: b.cross_key.map(&format!("{p}.cross_key"), f)?,
                cross_value: b.cross_value.map(&format!("{p}.cross_value"), f)?,
                cross_out: b.cross_out.map(&format!("{p}.cross_out"), f)?,
                mlp_in: b.mlp_in.map(&format!("{p}.mlp_in"), f)?,
                mlp_out: b.mlp_out.map(&format!("{p}.mlp_out"), f)?,
            });
        }
        Ok(DiTParams {
            config: self.config.clone(),
            embed,
            pos_frame,
            pos_height,
            pos_width,
            time_in,
            time_out,
            cond_table,
            blocks,
            final_modulation: self.final_modulation.map("final_modulation", f)?,
            head: self.head.map("head", f)?,
        })
    }

    /// `(name, tensor)` pairs in canonical order.
    pub fn named_tensors(&self) -> Vec<(String, Tensor<E>)> {
        let mut out = Vec::new();
        self.try_map(|name, t| {
            out.push((name.to_string(), t.clone()));
            Ok(t.clone())
        })
        .expect("identity map cannot fail");
        out
    }

    pub fn param_count(&self) -> usize {
        self.named_tensors().iter().map(|(_, t)| t.numel()).sum()
    }

    /// Copy in another precision.
    pub fn cast<F: Element>(&self) -> DiTParams<F> {
        self.try_map(|_, t| Ok(t.cast::<F>()))
            .expect("cast cannot fail")
    }

    /// Rebuilds from named tensors, checking every name and shape.
    pub fn from_named(
        config: &ModelConfig,
        mut lookup: impl FnMut(&str) -> Option<Tensor<E>>,
    ) -> Result<Self> {
        let template = init_params::<E>(config, 0)?;
        template.try_map(|name, t| {
            let found = lookup(name).ok_or_else(|| dim_err!("missing parameter {name}"))?;
            if found.shape() != t.shape() {
                return Err(dim_err!(
                    "parameter {name}: expected shape {:?}, found {:?}",
                    t.shape(),
                    found.shape()
                ));
            }
            Ok(found)
        })
    }

    pub fn all_finite(&self) -> bool {
        self.named_tensors().iter().all(|(_, t)| t.all_finite())
    }

    /// Bitwise equality of every tensor.
    pub fn bit_eq(&self, other: &Self) -> bool {
        self.config == other.config
            && self
                .named_tensors()
                .iter()
                .zip(other.named_tensors())
                .all(|((na, a), (nb, b))| na == &nb && a.bit_eq(&b))
    }
}
