use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::image::InputImage;
use super::mapping::{mapping_forward, pack, LayerWeights, MappingNetSpec, TangentPlane, WeightVector};
use crate::autodiff::{ConvGeometry, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::geometry::{sample_sphere_uniform, seeded_rng};

/// Convolution trunk: one stride-2 3×3 convolution per stage, each followed
/// by `dense_depth` densely connected 3×3 layers whose outputs are
/// concatenated onto the stage features.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConvTrunkSpec {
    /// `(height, width, channels)` of the input image.
    pub input_size: [usize; 3],
    pub widths: Vec<usize>,
    pub dense_depth: usize,
    pub growth: usize,
}

impl Default for ConvTrunkSpec {
    fn default() -> Self {
        Self {
            input_size: [InputImage::DEFAULT_SIZE, InputImage::DEFAULT_SIZE, 3],
            widths: vec![8, 16, 32],
            dense_depth: 1,
            growth: 8,
        }
    }
}

impl ConvTrunkSpec {
    fn stage_channels(&self, stage: usize) -> usize {
        self.widths[stage] + self.dense_depth * self.growth
    }

    fn output_hw(&self) -> (usize, usize) {
        let (mut h, mut w) = (self.input_size[0], self.input_size[1]);
        for _ in &self.widths {
            h = (h + 2 - 3) / 2 + 1;
            w = (w + 2 - 3) / 2 + 1;
        }
        (h, w)
    }

    fn flat_features(&self) -> usize {
        let (h, w) = self.output_hw();
        h * w * self.stage_channels(self.widths.len() - 1)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum EncoderMode {
    /// One trainable code per object replaces the image encoder.
    LearnedCode { code_dim: usize, num_codes: usize },
    Conv(ConvTrunkSpec),
}

/// Trunk plus a `head_hidden`-unit ReLU layer, followed by a single affine
/// emission layer that outputs `θ`.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderSpec {
    pub mode: EncoderMode,
    pub head_hidden: usize,
    /// Standard deviation of the initial emission weights.
    pub emission_std: f64,
}

impl EncoderSpec {
    pub const DEFAULT_HEAD_HIDDEN: usize = 1024;
    pub const DEFAULT_EMISSION_STD: f64 = 1e-3;

    pub fn learned_code(code_dim: usize, num_codes: usize) -> Self {
        Self {
            mode: EncoderMode::LearnedCode { code_dim, num_codes },
            head_hidden: Self::DEFAULT_HEAD_HIDDEN,
            emission_std: Self::DEFAULT_EMISSION_STD,
        }
    }

    pub fn conv(trunk: ConvTrunkSpec) -> Self {
        Self {
            mode: EncoderMode::Conv(trunk),
            head_hidden: Self::DEFAULT_HEAD_HIDDEN,
            emission_std: Self::DEFAULT_EMISSION_STD,
        }
    }

    pub fn with_head_hidden(mut self, head_hidden: usize) -> Self {
        self.head_hidden = head_hidden;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.head_hidden == 0 {
            return Err(Error::domain("head_hidden must be positive"));
        }
        match &self.mode {
            EncoderMode::LearnedCode { code_dim, num_codes } => {
                if *code_dim == 0 || *num_codes == 0 {
                    return Err(Error::domain("code_dim and num_codes must be positive"));
                }
            }
            EncoderMode::Conv(t) => {
                if t.widths.is_empty() || t.widths.contains(&0) || t.input_size.contains(&0) {
                    return Err(Error::domain(format!("invalid conv trunk {t:?}")));
                }
                if t.dense_depth > 0 && t.growth == 0 {
                    return Err(Error::domain("dense layers need a positive growth"));
                }
            }
        }
        Ok(())
    }
}

/// What the higher-order network is conditioned on.
#[derive(Clone, Copy, Debug)]
pub enum HofInput<'a> {
    Code(usize),
    Image(&'a InputImage),
}

/// Higher-order network together with the mapping network it parameterizes.
#[derive(Clone, Debug, PartialEq)]
pub struct HofModel {
    pub mapping: MappingNetSpec,
    pub encoder: EncoderSpec,
    params: Vec<Tensor>,
}

impl HofModel {
    /// Shapes of the trainable tensors in storage order.
    ///
    /// Learned-code: codes, head weight, head bias, emission weight,
    /// emission bias. Conv: per stage the stride-2 kernel and bias, then each
    /// dense layer's kernel and bias; then head and emission as above.
    pub fn param_shapes(mapping: &MappingNetSpec, encoder: &EncoderSpec) -> Vec<Vec<usize>> {
        let mut shapes = Vec::new();
        let trunk_out = match &encoder.mode {
            EncoderMode::LearnedCode { code_dim, num_codes } => {
                shapes.push(vec![*num_codes, *code_dim]);
                *code_dim
            }
            EncoderMode::Conv(t) => {
                let mut c_in = t.input_size[2];
                for (s, &w) in t.widths.iter().enumerate() {
                    shapes.push(vec![w, c_in, 3, 3]);
                    shapes.push(vec![w]);
                    let mut c = w;
                    for _ in 0..t.dense_depth {
                        shapes.push(vec![t.growth, c, 3, 3]);
                        shapes.push(vec![t.growth]);
                        c += t.growth;
                    }
                    c_in = t.stage_channels(s);
                }
                t.flat_features()
            }
        };
        let p = mapping.param_count();
        shapes.push(vec![trunk_out, encoder.head_hidden]);
        shapes.push(vec![encoder.head_hidden]);
        shapes.push(vec![encoder.head_hidden, p]);
        shapes.push(vec![p]);
        shapes
    }

    pub fn param_count(mapping: &MappingNetSpec, encoder: &EncoderSpec) -> usize {
        Self::param_shapes(mapping, encoder)
            .iter()
            .map(|s| s.iter().product::<usize>())
            .sum()
    }

    /// Freshly initialized model.
    ///
    /// Trunk and head use He-normal weights. Emission weights are
    /// `N(0, emission_std²)` and the emission bias holds a He-initialized
    /// mapping network (output layer scaled by 0.1), so the initial `θ` is
    /// a usable network whose outputs sit near the origin.
    pub fn new(mapping: MappingNetSpec, encoder: EncoderSpec, seed: u64) -> Result<Self> {
        encoder.validate()?;
        let mut rng = seeded_rng(seed, INIT_STREAM);
        let shapes = Self::param_shapes(&mapping, &encoder);
        let n = shapes.len();
        let mut params = Vec::with_capacity(n);
        for (k, shape) in shapes.iter().enumerate() {
            let len: usize = shape.iter().product();
            let data = if k == n - 1 {
                init_mapping(&mapping, &mut rng)?.values
            } else if k == n - 2 {
                normal(&mut rng, len, encoder.emission_std)
            } else if shape.len() == 1 {
                vec![0.0; len]
            } else if k == 0 && matches!(encoder.mode, EncoderMode::LearnedCode { .. }) {
                normal(&mut rng, len, 1.0)
            } else {
                let fan_in: usize = shape[1..].iter().product::<usize>().max(1);
                let fan_in = if shape.len() == 2 { shape[0] } else { fan_in };
                normal(&mut rng, len, (2.0 / fan_in as f64).sqrt())
            };
            params.push(Tensor::new(shape.clone(), data)?);
        }
        Ok(Self {
            mapping,
            encoder,
            params,
        })
    }

    pub fn from_params(mapping: MappingNetSpec, encoder: EncoderSpec, params: Vec<Tensor>) -> Result<Self> {
        encoder.validate()?;
        let shapes = Self::param_shapes(&mapping, &encoder);
        if shapes.len() != params.len() || shapes.iter().zip(&params).any(|(s, p)| s.as_slice() != p.shape()) {
            return Err(Error::contract(format!(
                "parameter shapes {:?} do not match the model spec {shapes:?}",
                params.iter().map(|p| p.shape().to_vec()).collect::<Vec<_>>()
            )));
        }
        Ok(Self {
            mapping,
            encoder,
            params,
        })
    }

    /// Builds a model from one flat vector laid out as [`Self::param_shapes`].
    pub fn from_flat(mapping: MappingNetSpec, encoder: EncoderSpec, flat: &[f64]) -> Result<Self> {
        let shapes = Self::param_shapes(&mapping, &encoder);
        let total: usize = shapes.iter().map(|s| s.iter().product::<usize>()).sum();
        if total != flat.len() {
            return Err(Error::contract(format!(
                "checkpoint holds {} parameters but the model spec needs {total}",
                flat.len()
            )));
        }
        let mut offset = 0;
        let mut params = Vec::with_capacity(shapes.len());
        for s in shapes {
            let len: usize = s.iter().product();
            params.push(Tensor::new(s, flat[offset..offset + len].to_vec())?);
            offset += len;
        }
        Self::from_params(mapping, encoder, params)
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub(crate) fn take_params(&mut self) -> Vec<Tensor> {
        std::mem::take(&mut self.params)
    }

    /// Puts back tensors removed by `take_params`; shapes are not rechecked.
    pub(crate) fn put_params(&mut self, params: Vec<Tensor>) {
        self.params = params;
    }

    pub fn into_params(self) -> Vec<Tensor> {
        self.params
    }

    pub fn flat_params(&self) -> Vec<f64> {
        self.params.iter().flat_map(|t| t.data().iter().copied()).collect()
    }

    pub fn num_codes(&self) -> Option<usize> {
        match self.encoder.mode {
            EncoderMode::LearnedCode { num_codes, .. } => Some(num_codes),
            EncoderMode::Conv(_) => None,
        }
    }

    /// Records `g(input)` on `tape` given the parameter nodes, returning the
    /// 1-D `θ` node.
    pub fn theta_on_tape(&self, tape: &mut Tape, params: &[Var], input: HofInput<'_>) -> Result<Var> {
        if params.len() != Self::param_shapes(&self.mapping, &self.encoder).len() {
            return Err(Error::contract("parameter node count does not match the model"));
        }
        let mut k = 0;
        let mut next = || {
            k += 1;
            params[k - 1]
        };
        let features = match (&self.encoder.mode, input) {
            (EncoderMode::LearnedCode { num_codes, .. }, HofInput::Code(i)) => {
                if i >= *num_codes {
                    return Err(Error::contract(format!("code {i} out of range ({num_codes} codes)")));
                }
                let codes = next();
                tape.gather_rows(codes, &[i])?
            }
            (EncoderMode::Conv(t), HofInput::Image(img)) => {
                let [h, w, c] = t.input_size;
                if (img.height(), img.width(), img.channels()) != (h, w, c) {
                    return Err(Error::Shape {
                        op: "hof_forward",
                        lhs: vec![img.height(), img.width(), img.channels()],
                        rhs: vec![h, w, c],
                    });
                }
                let mut x = tape.constant(Tensor::new(vec![c, h, w], img.to_chw())?);
                for _ in &t.widths {
                    let (kw, kb) = (next(), next());
                    let y = tape.conv2d(x, kw, kb, ConvGeometry { stride: 2, padding: 1 })?;
                    let mut f = tape.relu(y)?;
                    for _ in 0..t.dense_depth {
                        let (dw, db) = (next(), next());
                        let y = tape.conv2d(f, dw, db, ConvGeometry { stride: 1, padding: 1 })?;
                        let y = tape.relu(y)?;
                        f = tape.concat(f, y)?;
                    }
                    x = f;
                }
                tape.reshape(x, vec![1, t.flat_features()])?
            }
            (EncoderMode::LearnedCode { .. }, HofInput::Image(_)) => {
                return Err(Error::contract("learned-code model conditioned on an image"));
            }
            (EncoderMode::Conv(_), HofInput::Code(_)) => {
                return Err(Error::contract("image model conditioned on a code index"));
            }
        };
        let (hw, hb, ew, eb) = (next(), next(), next(), next());
        let h = tape.matmul(features, hw)?;
        let h = tape.add_bias(h, hb)?;
        let h = tape.relu(h)?;
        let theta = tape.matmul(h, ew)?;
        let theta = tape.add_bias(theta, eb)?;
        tape.reshape(theta, vec![self.mapping.param_count()])
    }

    /// `θ = g(input)` without recording gradients.
    pub fn hof_forward(&self, input: HofInput<'_>) -> Result<WeightVector> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = self.params.iter().map(|p| tape.constant(p.clone())).collect();
        let theta = self.theta_on_tape(&mut tape, &vars, input)?;
        WeightVector::new(&self.mapping, tape.value(theta).data().to_vec())
    }

    /// Maps `n` sphere samples drawn with `seed` through `f_θ`.
    pub fn reconstruct(&self, input: HofInput<'_>, n: usize, seed: u64) -> Result<Vec<TangentPlane>> {
        let theta = self.hof_forward(input)?;
        let xs = sample_sphere_uniform(n, seed)?;
        mapping_forward(&self.mapping, &theta, &xs)
    }
}

/// RNG stream used for initialization; training streams count up from 0.
pub(crate) const INIT_STREAM: u64 = u64::MAX;

fn normal(rng: &mut impl Rng, n: usize, std: f64) -> Vec<f64> {
    if std == 0.0 {
        return vec![0.0; n];
    }
    let d = Normal::new(0.0, std).expect("std is finite and positive");
    (0..n).map(|_| d.sample(rng)).collect()
}

fn init_mapping(spec: &MappingNetSpec, rng: &mut impl Rng) -> Result<WeightVector> {
    let layers = spec.layers();
    let last = layers.len() - 1;
    let weights: Vec<LayerWeights> = layers
        .iter()
        .enumerate()
        .map(|(li, &(i, o))| {
            let std = (2.0 / i as f64).sqrt() * if li == last { 0.1 } else { 1.0 };
            LayerWeights {
                inputs: i,
                outputs: o,
                weight: normal(rng, i * o, std),
                bias: vec![0.0; o],
            }
        })
        .collect();
    pack(spec, &weights)
}
