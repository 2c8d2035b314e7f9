use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::embed::{fourier_features, TimeEmbedConfig};
use crate::error::{Error, Result};
use crate::numerics::{column_sums, linear_forward, matmul, matmul_at_b, silu_grad_scalar, silu_scalar, Matrix, Real};

/// Which velocity field a network represents.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NetMode {
    /// `v(x_t, t)`, used for event generation.
    Unconditional,
    /// `v(x_t, t | c)`, used for unfolding with the detector event as `c`.
    Conditional,
}

impl NetMode {
    pub fn as_str(self) -> &'static str {
        match self {
            NetMode::Unconditional => "unconditional",
            NetMode::Conditional => "conditional",
        }
    }
}

/// Architecture hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetConfig {
    pub dim: usize,
    pub hidden: usize,
    pub blocks: usize,
    #[serde(default)]
    pub time: TimeEmbedConfig,
    pub mode: NetMode,
    #[serde(default = "default_cond_width")]
    pub cond_hidden: usize,
    #[serde(default = "default_cond_width")]
    pub cond_embed: usize,
}

fn default_cond_width() -> usize {
    128
}

impl NetConfig {
    /// Full-size network: 512 hidden units, five residual blocks.
    pub fn full(dim: usize, mode: NetMode) -> Self {
        Self {
            dim,
            hidden: 512,
            blocks: 5,
            time: TimeEmbedConfig::default(),
            mode,
            cond_hidden: 128,
            cond_embed: 128,
        }
    }

    /// Reduced-width network for desk-scale runs and tests.
    pub fn miniature(dim: usize, hidden: usize, blocks: usize, mode: NetMode) -> Self {
        Self {
            hidden,
            blocks,
            ..Self::full(dim, mode)
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.time.validate()?;
        if self.dim == 0 || self.hidden == 0 {
            return Err(Error::Config("dim and hidden must be positive".into()));
        }
        if self.mode == NetMode::Conditional && (self.cond_hidden == 0 || self.cond_embed == 0) {
            return Err(Error::Config("condition embedder widths must be positive".into()));
        }
        Ok(())
    }

    /// Width of `[x_t ‖ e_t (‖ e_c)]`.
    pub fn input_width(&self) -> usize {
        let cond = match self.mode {
            NetMode::Conditional => self.cond_embed,
            NetMode::Unconditional => 0,
        };
        self.dim + self.time.projected_dim + cond
    }

    /// `(name, out, in)` for every linear layer, in parameter order.
    pub fn layer_shapes(&self) -> Vec<(String, usize, usize)> {
        let mut shapes = vec![(
            "time_proj".to_string(),
            self.time.projected_dim,
            self.time.raw_dim(),
        )];
        if self.mode == NetMode::Conditional {
            shapes.push(("cond.0".into(), self.cond_hidden, self.dim));
            shapes.push(("cond.1".into(), self.cond_embed, self.cond_hidden));
        }
        shapes.push(("input".into(), self.hidden, self.input_width()));
        for b in 0..self.blocks {
            shapes.push((format!("blocks.{b}.0"), self.hidden, self.hidden));
            shapes.push((format!("blocks.{b}.1"), self.hidden, self.hidden));
        }
        shapes.push(("output".into(), self.dim, self.hidden));
        shapes
    }

    /// Weights plus biases summed layer by layer.
    pub fn parameter_count(&self) -> usize {
        self.layer_shapes()
            .iter()
            .map(|(_, out, inp)| out * inp + out)
            .sum()
    }
}

/// Affine layer `y = x·Wᵀ + b`, weight stored as `out x in`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear<T> {
    pub weight: Matrix<T>,
    pub bias: Vec<T>,
}

impl<T: Real> Linear<T> {
    pub fn zeros(out: usize, inp: usize) -> Self {
        Self {
            weight: Matrix::zeros(out, inp),
            bias: vec![T::ZERO; out],
        }
    }

    fn uniform(out: usize, inp: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = 1.0 / (inp as f64).sqrt();
        let mut layer = Self::zeros(out, inp);
        for w in layer.weight.values_mut() {
            *w = T::from_f64(rng.random_range(-bound..bound));
        }
        for b in &mut layer.bias {
            *b = T::from_f64(rng.random_range(-bound..bound));
        }
        layer
    }

    pub fn forward(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        linear_forward(&self.weight, &self.bias, x)
    }

    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }

    fn cast<U: Real>(&self) -> Linear<U> {
        Linear {
            weight: self.weight.cast(),
            bias: self.bias.iter().map(|v| U::from_f64(v.to_f64())).collect(),
        }
    }
}

/// Every trainable tensor of a velocity network.
///
/// The same structure doubles as the gradient buffer, so gradient shapes
/// mirror parameter shapes by construction.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSet<T> {
    pub time_proj: Linear<T>,
    pub cond: Option<[Linear<T>; 2]>,
    pub input: Linear<T>,
    pub blocks: Vec<[Linear<T>; 2]>,
    pub output: Linear<T>,
}

pub type GradientBuffer<T> = ParamSet<T>;

impl<T: Real> ParamSet<T> {
    pub fn zeros(cfg: &NetConfig) -> Self {
        let (h, p) = (cfg.hidden, cfg.time.projected_dim);
        Self {
            time_proj: Linear::zeros(p, cfg.time.raw_dim()),
            cond: (cfg.mode == NetMode::Conditional).then(|| {
                [
                    Linear::zeros(cfg.cond_hidden, cfg.dim),
                    Linear::zeros(cfg.cond_embed, cfg.cond_hidden),
                ]
            }),
            input: Linear::zeros(h, cfg.input_width()),
            blocks: (0..cfg.blocks)
                .map(|_| [Linear::zeros(h, h), Linear::zeros(h, h)])
                .collect(),
            output: Linear::zeros(cfg.dim, h),
        }
    }

    fn layers(&self) -> Vec<&Linear<T>> {
        let mut v = vec![&self.time_proj];
        if let Some([a, b]) = &self.cond {
            v.push(a);
            v.push(b);
        }
        v.push(&self.input);
        for [a, b] in &self.blocks {
            v.push(a);
            v.push(b);
        }
        v.push(&self.output);
        v
    }

    fn layers_mut(&mut self) -> Vec<&mut Linear<T>> {
        let mut v = vec![&mut self.time_proj];
        if let Some([a, b]) = &mut self.cond {
            v.push(a);
            v.push(b);
        }
        v.push(&mut self.input);
        for [a, b] in &mut self.blocks {
            v.push(a);
            v.push(b);
        }
        v.push(&mut self.output);
        v
    }

    /// Flat views of every tensor: weight then bias for each layer.
    pub fn tensors(&self) -> Vec<&[T]> {
        self.layers()
            .into_iter()
            .flat_map(|l| [l.weight.values(), l.bias.as_slice()])
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [T]> {
        self.layers_mut()
            .into_iter()
            .flat_map(|l| [l.weight.values_mut(), l.bias.as_mut_slice()])
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn fill_zero(&mut self) {
        for t in self.tensors_mut() {
            t.fill(T::ZERO);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    pub fn cast<U: Real>(&self) -> ParamSet<U> {
        ParamSet {
            time_proj: self.time_proj.cast(),
            cond: self.cond.as_ref().map(|[a, b]| [a.cast(), b.cast()]),
            input: self.input.cast(),
            blocks: self.blocks.iter().map(|[a, b]| [a.cast(), b.cast()]).collect(),
            output: self.output.cast(),
        }
    }
}

/// Tensor names in the order produced by [`ParamSet::tensors`].
pub fn tensor_names(cfg: &NetConfig) -> Vec<String> {
    cfg.layer_shapes()
        .into_iter()
        .flat_map(|(n, _, _)| [format!("{n}.weight"), format!("{n}.bias")])
        .collect()
}

#[derive(Clone, Debug)]
struct BlockCache<T> {
    h_in: Matrix<T>,
    pre1: Matrix<T>,
    act1: Matrix<T>,
    pre2: Matrix<T>,
}

#[derive(Clone, Debug)]
struct CondCache<T> {
    c: Matrix<T>,
    pre1: Matrix<T>,
    act1: Matrix<T>,
    pre2: Matrix<T>,
}

#[derive(Clone, Debug)]
struct Activations<T> {
    raw_time: Matrix<T>,
    cond: Option<CondCache<T>>,
    input: Matrix<T>,
    input_pre: Matrix<T>,
    blocks: Vec<BlockCache<T>>,
    head_in: Matrix<T>,
}

/// Activations recorded by [`VelocityNet::forward_cached`] for the backward pass.
#[derive(Clone, Debug, Default)]
pub struct ActivationCache<T> {
    inner: Option<Activations<T>>,
}

impl<T> ActivationCache<T> {
    pub fn new() -> Self {
        Self { inner: None }
    }

    pub fn is_filled(&self) -> bool {
        self.inner.is_some()
    }

    pub fn clear(&mut self) {
        self.inner = None;
    }
}

fn silu_mat<T: Real>(x: &Matrix<T>) -> Matrix<T> {
    x.map(|v| T::from_f64(silu_scalar(v.to_f64())))
}

/// `upstream ⊙ silu'(pre)`.
fn silu_backward<T: Real>(upstream: &Matrix<T>, pre: &Matrix<T>) -> Matrix<T> {
    let mut out = upstream.clone();
    for (o, p) in out.values_mut().iter_mut().zip(pre.values()) {
        *o = T::from_f64(o.to_f64() * silu_grad_scalar(p.to_f64()));
    }
    out
}

/// Residual MLP velocity field with Fourier time embedding and optional
/// condition embedder.
#[derive(Clone, Debug, PartialEq)]
pub struct VelocityNet<T = f32> {
    config: NetConfig,
    params: ParamSet<T>,
}

impl<T: Real> VelocityNet<T> {
    /// Fan-in uniform initialisation `U(±1/√fan_in)` for every layer except the
    /// output head, which starts at zero so the initial flow is the identity.
    pub fn init(config: NetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::zeros(&config);
        let n_layers = config.layer_shapes().len();
        for (i, layer) in params.layers_mut().into_iter().enumerate() {
            if i + 1 == n_layers {
                break;
            }
            *layer = Linear::uniform(layer.out_dim(), layer.in_dim(), &mut rng);
        }
        Ok(Self { config, params })
    }

    pub fn from_params(config: NetConfig, params: ParamSet<T>) -> Result<Self> {
        config.validate()?;
        let expect = ParamSet::<T>::zeros(&config);
        let shapes_match = expect
            .layers()
            .iter()
            .zip(params.layers())
            .all(|(a, b)| a.weight.rows() == b.weight.rows() && a.weight.cols() == b.weight.cols() && a.bias.len() == b.bias.len())
            && expect.layers().len() == params.layers().len();
        if !shapes_match {
            return Err(Error::Shape("parameter tensors do not match the network config".into()));
        }
        Ok(Self { config, params })
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn mode(&self) -> NetMode {
        self.config.mode
    }

    pub fn params(&self) -> &ParamSet<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet<T> {
        &mut self.params
    }

    pub fn parameter_count(&self) -> usize {
        self.params.parameter_count()
    }

    pub fn cast<U: Real>(&self) -> VelocityNet<U> {
        VelocityNet {
            config: self.config.clone(),
            params: self.params.cast(),
        }
    }

    /// Projected time embedding, one 64-wide row per time.
    pub fn embed_time(&self, t: &[f64]) -> Result<Matrix<T>> {
        let raw = fourier_features(t, &self.config.time)?;
        self.params.time_proj.forward(&raw)
    }

    /// `SiLU(W₂·SiLU(W₁·c + b₁) + b₂)`.
    pub fn embed_condition(&self, c: &Matrix<T>) -> Result<Matrix<T>> {
        let Some([l1, l2]) = &self.params.cond else {
            return Err(Error::Mode("condition embedding on an unconditional network".into()));
        };
        if c.cols() != self.config.dim {
            return Err(Error::Shape(format!(
                "condition has {} features, network expects {}",
                c.cols(),
                self.config.dim
            )));
        }
        let a1 = silu_mat(&l1.forward(c)?);
        Ok(silu_mat(&l2.forward(&a1)?))
    }

    fn check_inputs(&self, x: &Matrix<T>, t: &[f64], c: Option<&Matrix<T>>) -> Result<()> {
        if x.cols() != self.config.dim {
            return Err(Error::Shape(format!(
                "state has {} features, network expects {}",
                x.cols(),
                self.config.dim
            )));
        }
        if t.len() != x.rows() {
            return Err(Error::Shape(format!(
                "{} times for {} states",
                t.len(),
                x.rows()
            )));
        }
        match (self.config.mode, c) {
            (NetMode::Unconditional, Some(_)) => Err(Error::Mode(
                "unconditional network given a condition".into(),
            )),
            (NetMode::Conditional, None) => {
                Err(Error::Mode("conditional network needs a condition".into()))
            }
            (NetMode::Conditional, Some(c)) if c.rows() != x.rows() => Err(Error::Shape(format!(
                "{} conditions for {} states",
                c.rows(),
                x.rows()
            ))),
            _ => Ok(()),
        }
    }

    fn run(&self, x: &Matrix<T>, t: &[f64], c: Option<&Matrix<T>>, keep: bool) -> Result<(Matrix<T>, Option<Activations<T>>)> {
        self.check_inputs(x, t, c)?;
        let p = &self.params;
        let raw_time = fourier_features(t, &self.config.time)?;
        let e_t = p.time_proj.forward(&raw_time)?;

        let mut cond_cache = None;
        let e_c = match (c, &p.cond) {
            (Some(c), Some([l1, l2])) => {
                let pre1 = l1.forward(c)?;
                let act1 = silu_mat(&pre1);
                let pre2 = l2.forward(&act1)?;
                let e_c = silu_mat(&pre2);
                if keep {
                    cond_cache = Some(CondCache { c: c.clone(), pre1, act1, pre2 });
                }
                Some(e_c)
            }
            _ => None,
        };

        let input = match &e_c {
            Some(e_c) => Matrix::hconcat(&[x, &e_t, e_c])?,
            None => Matrix::hconcat(&[x, &e_t])?,
        };
        let input_pre = p.input.forward(&input)?;
        let mut h = silu_mat(&input_pre);

        let mut blocks = Vec::with_capacity(if keep { p.blocks.len() } else { 0 });
        for [l1, l2] in &p.blocks {
            let pre1 = l1.forward(&h)?;
            let act1 = silu_mat(&pre1);
            let pre2 = l2.forward(&act1)?;
            let mut next = silu_mat(&pre2);
            for (o, r) in next.values_mut().iter_mut().zip(h.values()) {
                *o = *o + *r;
            }
            if keep {
                blocks.push(BlockCache { h_in: h, pre1, act1, pre2 });
            }
            h = next;
        }
        let out = p.output.forward(&h)?;
        let acts = keep.then(|| Activations {
            raw_time,
            cond: cond_cache,
            input,
            input_pre,
            blocks,
            head_in: h,
        });
        Ok((out, acts))
    }

    /// Velocity for a batch of states; `c` must be present iff the network is conditional.
    pub fn forward(&self, x: &Matrix<T>, t: &[f64], c: Option<&Matrix<T>>) -> Result<Matrix<T>> {
        Ok(self.run(x, t, c, false)?.0)
    }

    /// Forward pass that records what [`VelocityNet::backward`] needs.
    pub fn forward_cached(
        &self,
        x: &Matrix<T>,
        t: &[f64],
        c: Option<&Matrix<T>>,
        cache: &mut ActivationCache<T>,
    ) -> Result<Matrix<T>> {
        let (out, acts) = self.run(x, t, c, true)?;
        cache.inner = acts;
        Ok(out)
    }

    /// Reverse-mode gradients of a scalar loss given `∂loss/∂output`.
    pub fn backward(&self, cache: &ActivationCache<T>, d_out: &Matrix<T>) -> Result<GradientBuffer<T>> {
        let acts = cache
            .inner
            .as_ref()
            .ok_or_else(|| Error::State("backward called without a cached forward pass".into()))?;
        if d_out.rows() != acts.head_in.rows() || d_out.cols() != self.config.dim {
            return Err(Error::Shape(format!(
                "output gradient is {}x{}, forward produced {}x{}",
                d_out.rows(),
                d_out.cols(),
                acts.head_in.rows(),
                self.config.dim
            )));
        }
        let p = &self.params;
        let mut g = ParamSet::zeros(&self.config);

        g.output.weight = matmul_at_b(d_out, &acts.head_in)?;
        g.output.bias = column_sums(d_out);
        let mut dh = matmul(d_out, &p.output.weight)?;

        for (bi, ([l1, l2], bc)) in p.blocks.iter().zip(&acts.blocks).enumerate().rev() {
            let d_pre2 = silu_backward(&dh, &bc.pre2);
            g.blocks[bi][1].weight = matmul_at_b(&d_pre2, &bc.act1)?;
            g.blocks[bi][1].bias = column_sums(&d_pre2);
            let d_act1 = matmul(&d_pre2, &l2.weight)?;
            let d_pre1 = silu_backward(&d_act1, &bc.pre1);
            g.blocks[bi][0].weight = matmul_at_b(&d_pre1, &bc.h_in)?;
            g.blocks[bi][0].bias = column_sums(&d_pre1);
            let through = matmul(&d_pre1, &l1.weight)?;
            dh = dh.add(&through)?;
        }

        let d_input_pre = silu_backward(&dh, &acts.input_pre);
        g.input.weight = matmul_at_b(&d_input_pre, &acts.input)?;
        g.input.bias = column_sums(&d_input_pre);
        let d_input = matmul(&d_input_pre, &p.input.weight)?;

        let d = self.config.dim;
        let pd = self.config.time.projected_dim;
        let d_et = d_input.columns(d, pd);
        g.time_proj.weight = matmul_at_b(&d_et, &acts.raw_time)?;
        g.time_proj.bias = column_sums(&d_et);

        if let (Some([_, l2]), Some(cc), Some(gc)) = (&p.cond, &acts.cond, &mut g.cond) {
            let d_ec = d_input.columns(d + pd, self.config.cond_embed);
            let d_pre2 = silu_backward(&d_ec, &cc.pre2);
            gc[1].weight = matmul_at_b(&d_pre2, &cc.act1)?;
            gc[1].bias = column_sums(&d_pre2);
            let d_act1 = matmul(&d_pre2, &l2.weight)?;
            let d_pre1 = silu_backward(&d_act1, &cc.pre1);
            gc[0].weight = matmul_at_b(&d_pre1, &cc.c)?;
            gc[0].bias = column_sums(&d_pre1);
        }
        Ok(g)
    }
}
