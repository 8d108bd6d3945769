//! U-Net generator and patch discriminator.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{
    concat_channels, split_channels, Activation, ActivationKind, BatchNorm, Conv2d, ConvTranspose2d, Dropout,
    Layer, LayerConfig, Mode, Padding, Param, Real, Sequential, Tensor, ZeroPad2d,
};
use crate::rng::{self, Rng};

const LEAKY: ActivationKind = ActivationKind::LeakyRelu(0.3);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub down: Vec<LayerConfig>,
    pub up: Vec<LayerConfig>,
    /// Concatenate encoder outputs onto the decoder path.
    pub skip_connections: bool,
    pub head_activation: ActivationKind,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        let down = |f, s| LayerConfig::new(f, s, LEAKY);
        let up = |f, s| LayerConfig::new(f, s, ActivationKind::Relu);
        Self {
            in_channels: 2,
            out_channels: 2,
            kernel: 5,
            down: vec![
                down(32, (1, 1)).without_batch_norm(),
                down(64, (2, 2)),
                down(64, (2, 2)),
                down(64, (2, 2)),
                down(64, (1, 5)),
                down(64, (1, 5)),
                down(128, (1, 6)),
            ],
            up: vec![
                up(128, (1, 6)).with_dropout(0.5),
                up(64, (1, 5)).with_dropout(0.5),
                up(64, (1, 5)).with_dropout(0.5),
                up(65, (2, 2)),
                up(128, (2, 2)),
                up(64, (2, 2)),
                up(32, (1, 1)),
            ],
            skip_connections: true,
            head_activation: ActivationKind::Tanh,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiscriminatorConfig {
    /// Channels of the condition plus the candidate.
    pub in_channels: usize,
    pub kernel: usize,
    pub down: Vec<LayerConfig>,
    pub head_filters: usize,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        let down = |f, s| LayerConfig::new(f, s, LEAKY);
        Self {
            in_channels: 4,
            kernel: 5,
            down: vec![
                down(64, (1, 1)).without_batch_norm(),
                down(128, (1, 5)),
                down(128, (1, 5)),
                down(128, (1, 3)),
                down(128, (1, 2)),
            ],
            head_filters: 256,
        }
    }
}

/// Shared construction settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitConfig {
    pub init_std: f64,
    pub bn_momentum: f64,
    pub bn_eps: f64,
}

impl Default for InitConfig {
    fn default() -> Self {
        Self {
            init_std: 0.2,
            bn_momentum: 0.1,
            bn_eps: 1e-5,
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn block<T: Real>(
    name: &str,
    transposed: bool,
    cin: usize,
    cfg: &LayerConfig,
    kernel: usize,
    init: &InitConfig,
    seed: u64,
    rng: &mut Rng,
) -> Result<Sequential<T>> {
    if cfg.filters == 0 {
        return Err(Error::Config(format!("{name}: zero filters")));
    }
    let k = (kernel, kernel);
    let bias = !cfg.batch_norm;
    let mut layers: Vec<Box<dyn Layer<T>>> = Vec::new();
    if transposed {
        layers.push(Box::new(ConvTranspose2d::new(
            format!("{name}/conv_t"),
            cin,
            cfg.filters,
            k,
            cfg.stride,
            Padding::Same,
            bias,
            init.init_std,
            rng,
        )?));
    } else {
        layers.push(Box::new(Conv2d::new(
            format!("{name}/conv"),
            cin,
            cfg.filters,
            k,
            cfg.stride,
            Padding::Same,
            bias,
            init.init_std,
            rng,
        )?));
    }
    if cfg.batch_norm {
        layers.push(Box::new(BatchNorm::new(format!("{name}/bn"), cfg.filters, init.bn_momentum, init.bn_eps)));
    }
    if cfg.dropout > 0.0 {
        layers.push(Box::new(Dropout::new(format!("{name}/dropout"), cfg.dropout, seed)?));
    }
    layers.push(Box::new(Activation::new(format!("{name}/act"), cfg.activation)));
    Ok(Sequential::new(name, layers))
}

/// Encoder-decoder with skip connections: the output of decoder block `k`
/// is concatenated with the encoder output of matching resolution before
/// entering decoder block `k + 1`.
pub struct GeneratorNet<T: Real> {
    pub config: GeneratorConfig,
    down: Vec<Sequential<T>>,
    up: Vec<Sequential<T>>,
    head: Sequential<T>,
    shapes: Vec<(String, Vec<usize>)>,
}

impl<T: Real> GeneratorNet<T> {
    pub fn new(config: GeneratorConfig, init: &InitConfig, seed: u64) -> Result<Self> {
        let n = config.down.len();
        if n == 0 || config.up.len() != n {
            return Err(Error::Config(format!(
                "generator needs matching non-empty encoder/decoder, got {} and {}",
                n,
                config.up.len()
            )));
        }
        for (d, u) in config.down.iter().zip(config.up.iter().rev()) {
            if d.stride != u.stride {
                return Err(Error::Config(format!(
                    "decoder stride {:?} does not mirror encoder stride {:?}",
                    u.stride, d.stride
                )));
            }
        }
        let mut rng = rng::seeded(rng::derive(seed, "generator"));
        let dseed = rng::derive(seed, "generator/dropout");
        let mut down = Vec::with_capacity(n);
        let mut cin = config.in_channels;
        for (j, cfg) in config.down.iter().enumerate() {
            down.push(block(&format!("gen/down{}", j + 1), false, cin, cfg, config.kernel, init, dseed, &mut rng)?);
            cin = cfg.filters;
        }
        let mut up = Vec::with_capacity(n);
        for (k, cfg) in config.up.iter().enumerate() {
            if k > 0 {
                cin = config.up[k - 1].filters + config.skip_connections.then(|| config.down[n - 1 - k].filters).unwrap_or(0);
            }
            up.push(block(&format!("gen/up{}", n + k + 1), true, cin, cfg, config.kernel, init, dseed, &mut rng)?);
        }
        let head = Sequential::new(
            "gen/head",
            vec![
                Box::new(Conv2d::new(
                    "gen/head/conv",
                    config.up[n - 1].filters,
                    config.out_channels,
                    (config.kernel, config.kernel),
                    (1, 1),
                    Padding::Same,
                    true,
                    init.init_std,
                    &mut rng,
                )?),
                Box::new(Activation::new("gen/head/act", config.head_activation)),
            ],
        );
        Ok(Self {
            config,
            down,
            up,
            head,
            shapes: Vec::new(),
        })
    }

    /// Errors unless every encoder stride divides the running spatial size.
    pub fn check_input(&self, h: usize, w: usize) -> Result<()> {
        let (mut h, mut w) = (h, w);
        for (j, d) in self.config.down.iter().enumerate() {
            let (sh, sw) = d.stride;
            if h % sh != 0 || w % sw != 0 {
                return Err(Error::Shape(format!(
                    "encoder block {} stride {:?} does not divide {h}x{w}",
                    j + 1,
                    d.stride
                )));
            }
            h /= sh;
            w /= sw;
        }
        Ok(())
    }

    /// Output shapes (without batch axis) of every block in the last forward.
    pub fn block_shapes(&self) -> &[(String, Vec<usize>)] {
        &self.shapes
    }

    fn record(&mut self, name: &str, t: &Tensor<T>) {
        self.shapes.push((name.to_string(), t.shape()[1..].to_vec()));
    }
}

impl<T: Real> Layer<T> for GeneratorNet<T> {
    fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let (_, h, w, c) = x.nhwc()?;
        if c != self.config.in_channels {
            return Err(Error::Shape(format!(
                "generator expects {} channels, got {c}",
                self.config.in_channels
            )));
        }
        self.check_input(h, w)?;
        self.shapes.clear();
        let n = self.down.len();
        let mut skips = Vec::with_capacity(n);
        let mut hcur = x.clone();
        for j in 0..n {
            hcur = self.down[j].forward(&hcur, mode)?;
            let name = self.down[j].name().to_string();
            self.record(&name, &hcur);
            skips.push(hcur.clone());
        }
        for k in 0..n {
            hcur = self.up[k].forward(&hcur, mode)?;
            let name = self.up[k].name().to_string();
            self.record(&name, &hcur);
            if k + 1 < n && self.config.skip_connections {
                hcur = concat_channels(&hcur, &skips[n - 2 - k])?;
            }
        }
        let out = self.head.forward(&hcur, mode)?;
        self.record("gen/head", &out);
        Ok(out)
    }

    fn backward(&mut self, grad_out: &Tensor<T>, param_grads: bool) -> Result<Tensor<T>> {
        let n = self.down.len();
        let mut skip_grads: Vec<Option<Tensor<T>>> = (0..n).map(|_| None).collect();
        let mut g = self.head.backward(grad_out, param_grads)?;
        for k in (0..n).rev() {
            if k + 1 < n && self.config.skip_connections {
                let (gu, gs) = split_channels(&g, self.config.up[k].filters)?;
                skip_grads[n - 2 - k] = Some(gs);
                g = gu;
            }
            g = self.up[k].backward(&g, param_grads)?;
        }
        for j in (0..n).rev() {
            if let Some(gs) = &skip_grads[j] {
                g.add_assign(gs);
            }
            g = self.down[j].backward(&g, param_grads)?;
        }
        Ok(g)
    }

    fn params(&self) -> Vec<&Param<T>> {
        self.down
            .iter()
            .chain(&self.up)
            .chain(std::iter::once(&self.head))
            .flat_map(|b| b.params())
            .collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        self.down
            .iter_mut()
            .chain(self.up.iter_mut())
            .chain(std::iter::once(&mut self.head))
            .flat_map(|b| b.params_mut())
            .collect()
    }

    fn name(&self) -> &str {
        "generator"
    }
}

/// Convolutional classifier emitting a grid of real/fake logits.
pub struct DiscriminatorNet<T: Real> {
    pub config: DiscriminatorConfig,
    net: Sequential<T>,
}

impl<T: Real> DiscriminatorNet<T> {
    pub fn new(config: DiscriminatorConfig, init: &InitConfig, seed: u64) -> Result<Self> {
        if config.down.is_empty() {
            return Err(Error::Config("discriminator needs at least one block".into()));
        }
        let mut rng = rng::seeded(rng::derive(seed, "discriminator"));
        let mut layers: Vec<Box<dyn Layer<T>>> = Vec::new();
        let mut cin = config.in_channels;
        for (j, cfg) in config.down.iter().enumerate() {
            layers.push(Box::new(block(
                &format!("disc/down{}", j + 1),
                false,
                cin,
                cfg,
                config.kernel,
                init,
                seed,
                &mut rng,
            )?));
            cin = cfg.filters;
        }
        let k = (config.kernel, config.kernel);
        layers.push(Box::new(ZeroPad2d::new("disc/pad1", 1)));
        layers.push(Box::new(Conv2d::new(
            "disc/conv",
            cin,
            config.head_filters,
            k,
            (1, 1),
            Padding::Valid,
            false,
            init.init_std,
            &mut rng,
        )?));
        layers.push(Box::new(BatchNorm::new("disc/bn", config.head_filters, init.bn_momentum, init.bn_eps)));
        layers.push(Box::new(Activation::new("disc/act", LEAKY)));
        layers.push(Box::new(ZeroPad2d::new("disc/pad2", 1)));
        layers.push(Box::new(Conv2d::new(
            "disc/logits",
            config.head_filters,
            1,
            k,
            (1, 1),
            Padding::Valid,
            true,
            init.init_std,
            &mut rng,
        )?));
        Ok(Self {
            config,
            net: Sequential::new("discriminator", layers),
        })
    }
}

impl<T: Real> Layer<T> for DiscriminatorNet<T> {
    fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let (_, _, _, c) = x.nhwc()?;
        if c != self.config.in_channels {
            return Err(Error::Shape(format!(
                "discriminator expects {} channels, got {c}",
                self.config.in_channels
            )));
        }
        self.net.forward(x, mode)
    }

    fn backward(&mut self, grad_out: &Tensor<T>, param_grads: bool) -> Result<Tensor<T>> {
        self.net.backward(grad_out, param_grads)
    }

    fn params(&self) -> Vec<&Param<T>> {
        self.net.params()
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        self.net.params_mut()
    }

    fn name(&self) -> &str {
        "discriminator"
    }
}
