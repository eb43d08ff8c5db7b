//! Two-head encoder–decoder with cached activations for backprop.

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::layers::{
    conv2d_backward, conv2d_forward, deconv2d_backward, deconv2d_forward, linear_backward, linear_forward,
    Activation, ConvGeom, DeconvGeom, Shape,
};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::rng::derive_rng;

/// Encoder convolutions `(kernel, channels, stride)`.
pub const ENCODER_CONVS: [(usize, usize, usize); 2] = [(9, 64, 2), (4, 96, 2)];
/// Residual blocks `(kernel, channels, stride)`.
pub const ENCODER_RES: [(usize, usize, usize); 4] = [(3, 96, 1), (4, 128, 2), (4, 192, 2), (4, 256, 2)];
pub const BOTTLENECK: usize = 1024;
/// Channels after the head reshape and of each doubling deconvolution.
pub const MASK_DECONVS: [usize; 5] = [256, 128, 96, 64, 32];
pub const RGB_DECONVS: [usize; 5] = [192, 128, 64, 32, 24];
pub const HEAD_KERNEL: usize = 5;
/// Total up-sampling of each head.
pub const HEAD_SCALE: usize = 32;

/// Which quantity the first head predicts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuxHead {
    /// Light mask through a sigmoid.
    Mask,
    /// Linear log10 intensity (after HDR fine-tuning).
    Intensity,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub width_multiplier: f64,
    /// Input photo `(width, height)`.
    pub input: (usize, usize),
    /// Output panorama `(width, height)`.
    pub output: (usize, usize),
    pub use_batchnorm: bool,
    pub aux_head: AuxHead,
    pub seed: u64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            width_multiplier: 1.0,
            input: (256, 192),
            output: (256, 128),
            use_batchnorm: false,
            aux_head: AuxHead::Mask,
            seed: 0,
        }
    }
}

impl NetworkConfig {
    /// Reduced network with output width equal to the input width.
    pub fn reduced(width_multiplier: f64, input: (usize, usize), seed: u64) -> Self {
        Self {
            width_multiplier,
            input,
            output: (input.0, input.0 / 2),
            seed,
            ..Self::default()
        }
    }

    pub fn channels(&self, count: usize) -> usize {
        ((count as f64 * self.width_multiplier).ceil() as usize).max(1)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.width_multiplier > 0.0 && self.width_multiplier <= 1.0) {
            return Err(Error::domain(format!("width multiplier {} outside (0, 1]", self.width_multiplier)));
        }
        if self.use_batchnorm {
            return Err(Error::Unsupported("batch normalization is not implemented".into()));
        }
        let (iw, ih) = self.input;
        let (ow, oh) = self.output;
        if iw == 0 || ih == 0 {
            return Err(Error::domain("empty input"));
        }
        if ow == 0 || oh == 0 || ow % HEAD_SCALE != 0 || oh % HEAD_SCALE != 0 {
            return Err(Error::domain(format!(
                "output {ow}×{oh} is not divisible by the decoder stride product {HEAD_SCALE}"
            )));
        }
        if ow != 2 * oh {
            return Err(Error::domain("output must be a 2:1 panorama"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamGroup {
    Encoder,
    MaskHead,
    RgbHead,
}

/// A weight or bias tensor with its gradient.
#[derive(Clone, Debug)]
pub struct Param {
    pub name: String,
    pub group: ParamGroup,
    pub shape: Vec<usize>,
    pub value: Vec<f64>,
    pub grad: Vec<f64>,
}

#[derive(Clone, Debug)]
enum Stage {
    Conv { geom: ConvGeom, w: usize, b: usize },
    Deconv { geom: DeconvGeom, w: usize, b: usize },
    Linear { w: usize, b: usize },
    Act(Activation),
    Residual(Box<ResBlock>),
    Reshape(Shape),
}

#[derive(Clone, Debug)]
struct ResBlock {
    conv1: (ConvGeom, usize, usize),
    conv2: (ConvGeom, usize, usize),
    proj: Option<(ConvGeom, usize, usize)>,
}

/// Per-stage saved tensors of one sample.
#[derive(Clone, Debug)]
enum Saved {
    Input(Vec<f64>),
    /// Residual block: input, pre-activation 1, pre-activation of the sum.
    Residual(Vec<f64>, Vec<f64>, Vec<f64>),
    None,
}

#[derive(Clone, Debug)]
struct SampleCache {
    encoder: Vec<Saved>,
    mask: Vec<Saved>,
    rgb: Vec<Saved>,
}

/// Network outputs for one sample.
#[derive(Clone, Debug)]
pub struct Prediction {
    /// Light mask (sigmoid) or log intensity (linear), one channel.
    pub aux: Image,
    /// RGB panorama through tanh.
    pub rgb: Image,
}

#[derive(Clone, Debug)]
pub struct Network {
    cfg: NetworkConfig,
    params: Vec<Param>,
    encoder: Vec<Stage>,
    mask_head: Vec<Stage>,
    rgb_head: Vec<Stage>,
    frozen: Vec<ParamGroup>,
    cache: Option<Vec<SampleCache>>,
    /// Weight and bias of the last mask-head convolution.
    final_mask: (usize, usize),
}

struct Builder<'a> {
    params: &'a mut Vec<Param>,
    rng: &'a mut ChaCha8Rng,
    group: ParamGroup,
}

impl Builder<'_> {
    fn param(&mut self, name: String, shape: Vec<usize>, fan_in: usize) -> usize {
        let n: usize = shape.iter().product();
        let value = if fan_in == 0 {
            vec![0.0; n]
        } else {
            let std = (2.0 / fan_in as f64).sqrt();
            let dist = Normal::new(0.0, std).expect("finite std");
            (0..n).map(|_| dist.sample(self.rng)).collect()
        };
        self.params.push(Param {
            name,
            group: self.group,
            shape,
            grad: vec![0.0; n],
            value,
        });
        self.params.len() - 1
    }

    fn conv(&mut self, name: &str, geom: ConvGeom) -> (ConvGeom, usize, usize) {
        let (k, i, o) = (geom.k, geom.input.c, geom.output.c);
        let w = self.param(format!("{name}.weight"), vec![o, i, k, k], geom.fan_in());
        let b = self.param(format!("{name}.bias"), vec![o], 0);
        (geom, w, b)
    }
}

fn build_head(
    b: &mut Builder,
    prefix: &str,
    cfg: &NetworkConfig,
    counts: &[usize; 5],
    out_channels: usize,
    out_act: Activation,
) -> (Vec<Stage>, (usize, usize)) {
    let (ow, oh) = cfg.output;
    let start = Shape::new(cfg.channels(counts[0]), oh / HEAD_SCALE, ow / HEAD_SCALE);
    let bottleneck = cfg.channels(BOTTLENECK);
    let mut stages = Vec::new();
    let w = b.param(format!("{prefix}.fc.weight"), vec![start.len(), bottleneck], bottleneck);
    let bias = b.param(format!("{prefix}.fc.bias"), vec![start.len()], 0);
    stages.push(Stage::Linear { w, b: bias });
    stages.push(Stage::Act(Activation::Elu));
    stages.push(Stage::Reshape(start));
    let mut shape = start;
    for (i, &c) in counts.iter().enumerate() {
        let geom = DeconvGeom::doubling(shape, cfg.channels(c));
        let (ci, co, k) = (geom.input.c, geom.output.c, geom.k);
        let w = b.param(format!("{prefix}.deconv{}.weight", i + 1), vec![ci, co, k, k], geom.fan_in());
        let bias = b.param(format!("{prefix}.deconv{}.bias", i + 1), vec![co], 0);
        stages.push(Stage::Deconv { geom, w, b: bias });
        stages.push(Stage::Act(Activation::Elu));
        shape = geom.output;
    }
    let geom = ConvGeom::same(shape, out_channels, HEAD_KERNEL, 1);
    let (geom, w, bias) = b.conv(&format!("{prefix}.conv{HEAD_KERNEL}"), geom);
    stages.push(Stage::Conv { geom, w, b: bias });
    stages.push(Stage::Act(out_act));
    (stages, (w, bias))
}

fn aux_activation(head: AuxHead) -> Activation {
    match head {
        AuxHead::Mask => Activation::Sigmoid,
        AuxHead::Intensity => Activation::Identity,
    }
}

impl Network {
    /// Builds the network with He-normal weights and zero biases drawn
    /// from `cfg.seed`.
    pub fn new(cfg: NetworkConfig) -> Result<Self> {
        cfg.validate()?;
        let mut params = Vec::new();
        let mut rng = derive_rng(cfg.seed, 0x6e6574);
        let (iw, ih) = cfg.input;
        let mut shape = Shape::new(3, ih, iw);
        let mut encoder = Vec::new();
        {
            let mut b = Builder {
                params: &mut params,
                rng: &mut rng,
                group: ParamGroup::Encoder,
            };
            for (i, &(k, c, s)) in ENCODER_CONVS.iter().enumerate() {
                let (geom, w, bias) = b.conv(&format!("enc.conv{}", i + 1), ConvGeom::same(shape, cfg.channels(c), k, s));
                encoder.push(Stage::Conv { geom, w, b: bias });
                encoder.push(Stage::Act(Activation::Elu));
                shape = geom.output;
            }
            for (i, &(k, c, s)) in ENCODER_RES.iter().enumerate() {
                let name = format!("enc.res{}", i + 1);
                let c = cfg.channels(c);
                let conv1 = b.conv(&format!("{name}.conv1"), ConvGeom::same(shape, c, k, s));
                let conv2 = b.conv(&format!("{name}.conv2"), ConvGeom::same(conv1.0.output, c, k, 1));
                let proj = (shape.c != c || s != 1).then(|| b.conv(&format!("{name}.proj"), ConvGeom::same(shape, c, 1, s)));
                shape = conv2.0.output;
                encoder.push(Stage::Residual(Box::new(ResBlock { conv1, conv2, proj })));
            }
            let bottleneck = cfg.channels(BOTTLENECK);
            let w = b.param("enc.fc.weight".into(), vec![bottleneck, shape.len()], shape.len());
            let bias = b.param("enc.fc.bias".into(), vec![bottleneck], 0);
            encoder.push(Stage::Linear { w, b: bias });
            encoder.push(Stage::Act(Activation::Elu));
        }
        let mut b = Builder {
            params: &mut params,
            rng: &mut rng,
            group: ParamGroup::MaskHead,
        };
        let (mask_head, final_mask) = build_head(&mut b, "mask", &cfg, &MASK_DECONVS, 1, aux_activation(cfg.aux_head));
        b.group = ParamGroup::RgbHead;
        let (rgb_head, _) = build_head(&mut b, "rgb", &cfg, &RGB_DECONVS, 3, Activation::Tanh);
        Ok(Self {
            cfg,
            params,
            encoder,
            mask_head,
            rgb_head,
            frozen: Vec::new(),
            cache: None,
            final_mask,
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.cfg
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Feature-map shapes after every weighted stage, encoder first, then
    /// mask head, then RGB head.
    pub fn layer_shapes(&self) -> Vec<(String, Shape)> {
        let mut out = Vec::new();
        let (iw, ih) = self.cfg.input;
        let mut shape = Shape::new(3, ih, iw);
        let walk = |stages: &[Stage], mut shape: Shape, out: &mut Vec<(String, Shape)>| -> Shape {
            for st in stages {
                match st {
                    Stage::Conv { geom, w, .. } => {
                        shape = geom.output;
                        out.push((self.params[*w].name.trim_end_matches(".weight").to_string(), shape));
                    }
                    Stage::Deconv { geom, w, .. } => {
                        shape = geom.output;
                        out.push((self.params[*w].name.trim_end_matches(".weight").to_string(), shape));
                    }
                    Stage::Residual(r) => {
                        shape = r.conv2.0.output;
                        let name = self.params[r.conv1.1].name.trim_end_matches(".conv1.weight").to_string();
                        out.push((name, shape));
                    }
                    Stage::Linear { w, b } => {
                        shape = Shape::new(self.params[*b].value.len(), 1, 1);
                        out.push((self.params[*w].name.trim_end_matches(".weight").to_string(), shape));
                    }
                    Stage::Reshape(s) => shape = *s,
                    Stage::Act(_) => {}
                }
            }
            shape
        };
        shape = walk(&self.encoder, shape, &mut out);
        walk(&self.mask_head, shape, &mut out);
        walk(&self.rgb_head, shape, &mut out);
        out
    }

    /// Sets the parameter groups whose gradients are suppressed and which
    /// the optimizer leaves untouched.
    pub fn set_frozen(&mut self, groups: &[ParamGroup]) {
        self.frozen = groups.to_vec();
    }

    pub fn frozen(&self) -> &[ParamGroup] {
        &self.frozen
    }

    pub fn is_frozen(&self, group: ParamGroup) -> bool {
        self.frozen.contains(&group)
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.fill(0.0);
        }
    }

    /// Index of the final mask-head convolution's `(weight, bias)`.
    pub fn final_mask_params(&self) -> (usize, usize) {
        self.final_mask
    }

    /// Switches the first head to a linear intensity output.
    pub fn set_aux_head(&mut self, head: AuxHead) {
        self.cfg.aux_head = head;
        if let Some(Stage::Act(a)) = self.mask_head.last_mut() {
            *a = aux_activation(head);
        }
    }

    /// Redraws the final mask-head convolution from `seed`.
    pub fn reinit_final_mask(&mut self, seed: u64) {
        let mut rng = derive_rng(seed, 0x66696e);
        let (w, b) = self.final_mask;
        let fan_in = self.params[w].shape[1..].iter().product::<usize>();
        let dist = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("finite std");
        for v in &mut self.params[w].value {
            *v = dist.sample(&mut rng);
        }
        self.params[b].value.fill(0.0);
    }

    fn check_input(&self, x: &Image) -> Result<()> {
        let (iw, ih) = self.cfg.input;
        if x.dims() != (iw, ih) || x.channels() != 3 {
            return Err(Error::domain(format!(
                "network expects a 3-channel {iw}×{ih} input, got {}-channel {}×{}",
                x.channels(),
                x.width(),
                x.height()
            )));
        }
        Ok(())
    }

    fn run(&self, stages: &[Stage], mut x: Vec<f64>, keep: bool) -> (Vec<f64>, Vec<Saved>) {
        let mut saved = Vec::with_capacity(if keep { stages.len() } else { 0 });
        for st in stages {
            let p = |i: usize| self.params[i].value.as_slice();
            let (y, s) = match st {
                Stage::Conv { geom, w, b } => (conv2d_forward(&x, p(*w), p(*b), geom), Saved::Input(x)),
                Stage::Deconv { geom, w, b } => (deconv2d_forward(&x, p(*w), p(*b), geom), Saved::Input(x)),
                Stage::Linear { w, b } => (linear_forward(&x, p(*w), p(*b)), Saved::Input(x)),
                Stage::Act(a) => (a.forward(&x), Saved::Input(x)),
                Stage::Reshape(_) => (x, Saved::None),
                Stage::Residual(r) => {
                    let z1 = conv2d_forward(&x, p(r.conv1.1), p(r.conv1.2), &r.conv1.0);
                    let a1 = Activation::Elu.forward(&z1);
                    let mut z2 = conv2d_forward(&a1, p(r.conv2.1), p(r.conv2.2), &r.conv2.0);
                    match &r.proj {
                        Some((g, w, b)) => {
                            for (d, v) in z2.iter_mut().zip(conv2d_forward(&x, p(*w), p(*b), g)) {
                                *d += v;
                            }
                        }
                        None => {
                            for (d, v) in z2.iter_mut().zip(&x) {
                                *d += v;
                            }
                        }
                    }
                    let y = Activation::Elu.forward(&z2);
                    (y, Saved::Residual(x, z1, z2))
                }
            };
            if keep {
                saved.push(s);
            }
            x = y;
        }
        (x, saved)
    }

    fn to_image(&self, data: Vec<f64>, c: usize) -> Image {
        let (ow, oh) = self.cfg.output;
        Image::from_planar(ow, oh, c, &data).expect("head output shape")
    }

    fn forward_sample(&self, x: &Image, keep: bool) -> Result<(Prediction, Option<SampleCache>)> {
        self.check_input(x)?;
        let (feat, enc) = self.run(&self.encoder, x.to_planar(), keep);
        let (aux, mask) = self.run(&self.mask_head, feat.clone(), keep);
        let (rgb, rgbs) = self.run(&self.rgb_head, feat, keep);
        let pred = Prediction {
            aux: self.to_image(aux, 1),
            rgb: self.to_image(rgb, 3),
        };
        let cache = keep.then_some(SampleCache {
            encoder: enc,
            mask,
            rgb: rgbs,
        });
        Ok((pred, cache))
    }

    /// Forward pass that keeps activations for [`Network::backward`].
    pub fn forward(&mut self, batch: &[Image]) -> Result<Vec<Prediction>> {
        let mut preds = Vec::with_capacity(batch.len());
        let mut caches = Vec::with_capacity(batch.len());
        for x in batch {
            let (p, c) = self.forward_sample(x, true)?;
            preds.push(p);
            caches.push(c.expect("kept cache"));
        }
        self.cache = Some(caches);
        Ok(preds)
    }

    /// Forward pass without caching.
    pub fn predict(&self, x: &Image) -> Result<Prediction> {
        Ok(self.forward_sample(x, false)?.0)
    }

    fn back(&mut self, stages_of: fn(&Network) -> &[Stage], saved: &[Saved], mut g: Vec<f64>, need_input: bool) -> Option<Vec<f64>> {
        let n = stages_of(self).len();
        for idx in (0..n).rev() {
            let want_input = need_input || idx > 0;
            let st = stages_of(self)[idx].clone();
            let grads = |net: &mut Network, w: usize, b: usize| -> Option<(Vec<f64>, Vec<f64>)> {
                (!net.is_frozen(net.params[w].group))
                    .then(|| (vec![0.0; net.params[w].value.len()], vec![0.0; net.params[b].value.len()]))
            };
            let next = match (&st, &saved[idx]) {
                (Stage::Conv { geom, w, b }, Saved::Input(x)) => {
                    let mut acc = grads(self, *w, *b);
                    let gx = conv2d_backward(
                        x,
                        &self.params[*w].value,
                        geom,
                        &g,
                        acc.as_mut().map(|(a, c)| (a.as_mut_slice(), c.as_mut_slice())),
                        want_input,
                    );
                    self.add_grads(*w, *b, acc);
                    gx
                }
                (Stage::Deconv { geom, w, b }, Saved::Input(x)) => {
                    let mut acc = grads(self, *w, *b);
                    let gx = deconv2d_backward(
                        x,
                        &self.params[*w].value,
                        geom,
                        &g,
                        acc.as_mut().map(|(a, c)| (a.as_mut_slice(), c.as_mut_slice())),
                        want_input,
                    );
                    self.add_grads(*w, *b, acc);
                    gx
                }
                (Stage::Linear { w, b }, Saved::Input(x)) => {
                    let mut acc = grads(self, *w, *b);
                    let gx = linear_backward(
                        x,
                        &self.params[*w].value,
                        &g,
                        acc.as_mut().map(|(a, c)| (a.as_mut_slice(), c.as_mut_slice())),
                        want_input,
                    );
                    self.add_grads(*w, *b, acc);
                    gx
                }
                (Stage::Act(a), Saved::Input(x)) => Some(a.backward(x, &g)),
                (Stage::Reshape(_), _) => Some(g),
                (Stage::Residual(r), Saved::Residual(x, z1, z2)) => {
                    let gz2 = Activation::Elu.backward(z2, &g);
                    let a1 = Activation::Elu.forward(z1);
                    let (g2, w2, b2) = &r.conv2;
                    let mut acc2 = grads(self, *w2, *b2);
                    let ga1 = conv2d_backward(
                        &a1,
                        &self.params[*w2].value,
                        g2,
                        &gz2,
                        acc2.as_mut().map(|(a, c)| (a.as_mut_slice(), c.as_mut_slice())),
                        true,
                    )
                    .expect("input grad");
                    self.add_grads(*w2, *b2, acc2);
                    let gz1 = Activation::Elu.backward(z1, &ga1);
                    let (g1, w1, b1) = &r.conv1;
                    let mut acc1 = grads(self, *w1, *b1);
                    let gx1 = conv2d_backward(
                        x,
                        &self.params[*w1].value,
                        g1,
                        &gz1,
                        acc1.as_mut().map(|(a, c)| (a.as_mut_slice(), c.as_mut_slice())),
                        want_input,
                    );
                    self.add_grads(*w1, *b1, acc1);
                    let gskip = match &r.proj {
                        Some((gp, wp, bp)) => {
                            let mut accp = grads(self, *wp, *bp);
                            let gx = conv2d_backward(
                                x,
                                &self.params[*wp].value,
                                gp,
                                &gz2,
                                accp.as_mut().map(|(a, c)| (a.as_mut_slice(), c.as_mut_slice())),
                                want_input,
                            );
                            self.add_grads(*wp, *bp, accp);
                            gx
                        }
                        None => want_input.then(|| gz2.clone()),
                    };
                    match (gx1, gskip) {
                        (Some(mut a), Some(b)) => {
                            for (d, v) in a.iter_mut().zip(b) {
                                *d += v;
                            }
                            Some(a)
                        }
                        _ => None,
                    }
                }
                _ => unreachable!("cache does not match stage"),
            };
            g = next?;
        }
        Some(g)
    }

    fn add_grads(&mut self, w: usize, b: usize, acc: Option<(Vec<f64>, Vec<f64>)>) {
        if let Some((gw, gb)) = acc {
            for (d, v) in self.params[w].grad.iter_mut().zip(gw) {
                *d += v;
            }
            for (d, v) in self.params[b].grad.iter_mut().zip(gb) {
                *d += v;
            }
        }
    }

    /// Accumulates parameter gradients for the cached batch, given the
    /// loss gradient with respect to each sample's outputs. Consumes the
    /// cache. Frozen groups receive zero gradient.
    pub fn backward(&mut self, grads: &[(Image, Image)]) -> Result<()> {
        let caches = self
            .cache
            .take()
            .ok_or_else(|| Error::State("backward called without a cached forward pass".into()))?;
        if caches.len() != grads.len() {
            self.cache = Some(caches);
            return Err(Error::dims("gradient count differs from the cached batch"));
        }
        let (ow, oh) = self.cfg.output;
        for (g_aux, g_rgb) in grads {
            if g_aux.dims() != (ow, oh) || g_aux.channels() != 1 || g_rgb.dims() != (ow, oh) || g_rgb.channels() != 3 {
                return Err(Error::dims("output gradient shape mismatch"));
            }
        }
        let encoder_frozen = self.is_frozen(ParamGroup::Encoder);
        for (cache, (g_aux, g_rgb)) in caches.iter().zip(grads) {
            let gm = self.back(|n| &n.mask_head, &cache.mask, g_aux.to_planar(), !encoder_frozen);
            let gr = self.back(|n| &n.rgb_head, &cache.rgb, g_rgb.to_planar(), !encoder_frozen);
            if let (Some(mut gf), Some(gr)) = (gm, gr) {
                for (d, v) in gf.iter_mut().zip(gr) {
                    *d += v;
                }
                self.back(|n| &n.encoder, &cache.encoder, gf, false);
            }
        }
        Ok(())
    }

    /// FNV hash over the values of one parameter group.
    pub fn group_hash(&self, group: ParamGroup) -> u64 {
        let vals: Vec<f64> = self
            .params
            .iter()
            .filter(|p| p.group == group)
            .flat_map(|p| p.value.iter().copied())
            .collect();
        crate::rng::hash_f64s(&vals)
    }

    pub(crate) fn from_parts(cfg: NetworkConfig, values: Vec<Vec<f64>>) -> Result<Self> {
        let mut net = Network::new(NetworkConfig {
            aux_head: AuxHead::Mask,
            ..cfg.clone()
        })?;
        net.set_aux_head(cfg.aux_head);
        if values.len() != net.params.len() {
            return Err(Error::dims("parameter count differs from the topology"));
        }
        for (p, v) in net.params.iter_mut().zip(values) {
            if v.len() != p.value.len() {
                return Err(Error::dims(format!("parameter {} has the wrong length", p.name)));
            }
            p.value = v;
        }
        Ok(net)
    }
}
