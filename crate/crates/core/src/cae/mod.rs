//! 3D convolutional autoencoder over bifurcation patches.
//!
//! The encoder maps a `side`³ patch to a latent vector that replaces the geometric
//! descriptor as classifier input. The decoder exists only to train the encoder.

mod layers;

pub use layers::{Grads, Layer, LayerSpec, Scalar, Sequential, Tensor};

use std::io::{Read, Write};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::classify::{FeatureProvenance, LabeledDataset};
use crate::volume::{Patch3D, PATCH_SIDE};
use crate::{rng, Error, Result};

pub const DEFAULT_LATENT_DIM: usize = 128;
pub const WEIGHTS_MAGIC: &[u8; 8] = b"COWLBCAE";
pub const WEIGHTS_FORMAT_VERSION: u32 = 1;
const INIT_STREAM: u64 = 0x4341_4549;
const SHUFFLE_STREAM: u64 = 0x4341_4553;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaeArchitecture {
    pub input_side: usize,
    /// Output channels of each encoder convolution; every block halves the extent.
    pub channels: Vec<usize>,
    pub latent_dim: usize,
}

impl Default for CaeArchitecture {
    fn default() -> Self {
        CaeArchitecture {
            input_side: PATCH_SIDE,
            channels: vec![8, 16, 32],
            latent_dim: DEFAULT_LATENT_DIM,
        }
    }
}

impl CaeArchitecture {
    /// Small variant for gradient checks: 8³ input, one block of 2 channels.
    pub fn toy() -> Self {
        CaeArchitecture {
            input_side: 8,
            channels: vec![2],
            latent_dim: 4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels.is_empty() || self.channels.contains(&0) || self.latent_dim == 0 {
            return Err(Error::Config(
                "cae needs at least one non-empty block and a latent".into(),
            ));
        }
        let div = 1usize << self.channels.len();
        if self.input_side == 0 || !self.input_side.is_multiple_of(div) {
            return Err(Error::Config(format!(
                "input side {} is not divisible by {div}",
                self.input_side
            )));
        }
        Ok(())
    }

    pub fn bottleneck_side(&self) -> usize {
        self.input_side >> self.channels.len()
    }

    /// Flattened size of the last pooled block, fed to the latent layer.
    pub fn pre_latent_size(&self) -> usize {
        let s = self.bottleneck_side();
        self.channels.last().copied().unwrap_or(0) * s * s * s
    }

    pub fn encoder_specs(&self) -> Vec<LayerSpec> {
        let mut specs = Vec::new();
        let mut cin = 1;
        for &c in &self.channels {
            specs.push(LayerSpec::Conv3d { cin, cout: c });
            specs.push(LayerSpec::Relu);
            specs.push(LayerSpec::MaxPool2);
            cin = c;
        }
        specs.push(LayerSpec::Dense {
            input: self.pre_latent_size(),
            out_c: self.latent_dim,
            out_e: 1,
        });
        specs
    }

    pub fn decoder_specs(&self) -> Vec<LayerSpec> {
        let last = *self.channels.last().expect("validated");
        let mut specs = vec![
            LayerSpec::Dense {
                input: self.latent_dim,
                out_c: last,
                out_e: self.bottleneck_side(),
            },
            LayerSpec::Relu,
        ];
        for i in (0..self.channels.len()).rev() {
            let cout = if i == 0 { 1 } else { self.channels[i - 1] };
            specs.push(LayerSpec::Upsample2);
            specs.push(LayerSpec::Conv3d {
                cin: self.channels[i],
                cout,
            });
            specs.push(if i == 0 { LayerSpec::Sigmoid } else { LayerSpec::Relu });
        }
        specs
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-3,
            batch: 8,
            epochs: 20,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatentCode {
    pub values: Vec<f64>,
    pub patch_id: String,
    pub label: Option<crate::ClassLabel>,
}

#[derive(Debug)]
pub struct CaeModel {
    pub architecture: CaeArchitecture,
    pub encoder: Sequential<f32>,
    pub decoder: Sequential<f32>,
    /// Mean reconstruction MSE per epoch.
    pub loss_log: Vec<f64>,
    pub seed: u64,
    decoder_evals: AtomicU64,
}

impl Clone for CaeModel {
    fn clone(&self) -> Self {
        CaeModel {
            architecture: self.architecture.clone(),
            encoder: self.encoder.clone(),
            decoder: self.decoder.clone(),
            loss_log: self.loss_log.clone(),
            seed: self.seed,
            decoder_evals: AtomicU64::new(0),
        }
    }
}

fn glorot_init<T: Scalar>(net: &mut Sequential<T>, r: &mut impl rand::Rng) {
    for l in &mut net.layers {
        let (fi, fo) = l.fan();
        if fi == 0 {
            continue;
        }
        let a = (6.0 / (fi + fo) as f64).sqrt();
        l.w.iter_mut().for_each(|w| *w = T::from_f64(r.random_range(-a..a)));
    }
}

/// Encoder and decoder of `arch` in any float type, Glorot-initialized from `seed`.
pub fn build_networks<T: Scalar>(arch: &CaeArchitecture, seed: u64) -> Result<(Sequential<T>, Sequential<T>)> {
    arch.validate()?;
    let mut enc = Sequential::new(&arch.encoder_specs());
    let mut dec = Sequential::new(&arch.decoder_specs());
    let mut r = rng::stream(seed, INIT_STREAM);
    glorot_init(&mut enc, &mut r);
    glorot_init(&mut dec, &mut r);
    Ok((enc, dec))
}

impl CaeModel {
    pub fn new(arch: CaeArchitecture, seed: u64) -> Result<Self> {
        let (encoder, decoder) = build_networks(&arch, seed)?;
        Ok(Self::from_parts(arch, encoder, decoder, Vec::new(), seed))
    }

    /// All weights and biases zero.
    pub fn zeros(arch: CaeArchitecture) -> Result<Self> {
        arch.validate()?;
        let encoder = Sequential::new(&arch.encoder_specs());
        let decoder = Sequential::new(&arch.decoder_specs());
        Ok(Self::from_parts(arch, encoder, decoder, Vec::new(), 0))
    }

    fn from_parts(
        architecture: CaeArchitecture,
        encoder: Sequential<f32>,
        decoder: Sequential<f32>,
        loss_log: Vec<f64>,
        seed: u64,
    ) -> Self {
        CaeModel {
            architecture,
            encoder,
            decoder,
            loss_log,
            seed,
            decoder_evals: AtomicU64::new(0),
        }
    }

    /// How many times the decoder has been evaluated on this instance.
    pub fn decoder_evaluations(&self) -> u64 {
        self.decoder_evals.load(Ordering::Relaxed)
    }

    fn patch_tensor(&self, p: &Patch3D) -> Result<Tensor<f32>> {
        let s = self.architecture.input_side;
        if p.side != s || p.data.len() != s * s * s {
            return Err(Error::DimensionMismatch {
                expected: s * s * s,
                found: p.data.len(),
            });
        }
        Ok(Tensor::from_vec(1, s, p.data.clone()))
    }

    pub fn forward_encode(&self, p: &Patch3D) -> Result<LatentCode> {
        let x = self.patch_tensor(p)?;
        let z = self.encoder.forward(&x);
        let values: Vec<f64> = z.data.iter().map(|&v| v as f64).collect();
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index: i });
        }
        Ok(LatentCode {
            values,
            patch_id: format!("{}@{:?}", p.source_volume_id, p.center_voxel),
            label: p.label,
        })
    }

    /// Reconstruction of `input_side`³ values in (0, 1), x fastest.
    pub fn forward_decode(&self, z: &LatentCode) -> Result<Vec<f32>> {
        if z.values.len() != self.architecture.latent_dim {
            return Err(Error::DimensionMismatch {
                expected: self.architecture.latent_dim,
                found: z.values.len(),
            });
        }
        self.decoder_evals.fetch_add(1, Ordering::Relaxed);
        let t = Tensor::from_vec(z.values.len(), 1, z.values.iter().map(|&v| v as f32).collect());
        Ok(self.decoder.forward(&t).data)
    }

    /// Mean squared reconstruction error of one patch.
    pub fn reconstruction_mse(&self, p: &Patch3D) -> Result<f64> {
        let x = self.patch_tensor(p)?;
        self.decoder_evals.fetch_add(1, Ordering::Relaxed);
        let y = self.decoder.forward(&self.encoder.forward(&x));
        Ok(mse(&y.data, &x.data))
    }

    pub fn all_finite(&self) -> bool {
        self.encoder
            .params()
            .iter()
            .chain(&self.decoder.params())
            .all(|v| v.is_finite())
    }

    pub fn write_weights(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let header = serde_json::to_vec(&WeightsHeader {
            architecture: self.architecture.clone(),
            seed: self.seed,
            loss_log: self.loss_log.clone(),
            encoder: self.architecture.encoder_specs(),
            decoder: self.architecture.decoder_specs(),
        })
        .map_err(|e| Error::json(path, e))?;
        let mut buf =
            Vec::with_capacity(16 + header.len() + 4 * (self.encoder.param_count() + self.decoder.param_count()));
        buf.extend_from_slice(WEIGHTS_MAGIC);
        buf.extend_from_slice(&WEIGHTS_FORMAT_VERSION.to_le_bytes());
        buf.extend_from_slice(&(header.len() as u64).to_le_bytes());
        buf.extend_from_slice(&header);
        for v in self.encoder.params().into_iter().chain(self.decoder.params()) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&buf).map_err(|e| Error::io(path, e))
    }

    pub fn read_weights(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut buf = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut buf))
            .map_err(|e| Error::io(path, e))?;
        let bad = |m: &str| Error::Config(format!("{}: {m}", path.display()));
        if buf.len() < 20 || &buf[..8] != WEIGHTS_MAGIC {
            return Err(bad("not a cae weights file"));
        }
        let version = u32::from_le_bytes(buf[8..12].try_into().expect("4 bytes"));
        if version != WEIGHTS_FORMAT_VERSION {
            return Err(bad(&format!("unsupported weights version {version}")));
        }
        let hlen = u64::from_le_bytes(buf[12..20].try_into().expect("8 bytes")) as usize;
        let body = buf.get(20..).ok_or_else(|| bad("truncated"))?;
        if body.len() < hlen {
            return Err(bad("truncated header"));
        }
        let header: WeightsHeader = serde_json::from_slice(&body[..hlen]).map_err(|e| Error::json(path, e))?;
        let arch = header.architecture;
        arch.validate()?;
        if header.encoder != arch.encoder_specs() || header.decoder != arch.decoder_specs() {
            return Err(bad("layer list does not match architecture"));
        }
        let mut encoder = Sequential::<f32>::new(&header.encoder);
        let mut decoder = Sequential::<f32>::new(&header.decoder);
        let n = encoder.param_count() + decoder.param_count();
        let raw = &body[hlen..];
        if raw.len() != 4 * n {
            return Err(Error::SizeMismatch {
                expected: 4 * n,
                found: raw.len(),
            });
        }
        let vals: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        if let Some(i) = vals.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index: i });
        }
        let ne = encoder.param_count();
        encoder.set_params(&vals[..ne]);
        decoder.set_params(&vals[ne..]);
        Ok(Self::from_parts(arch, encoder, decoder, header.loss_log, header.seed))
    }

    pub fn write_loss_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut s = String::from("epoch,mse\n");
        for (i, l) in self.loss_log.iter().enumerate() {
            s.push_str(&format!("{},{}\n", i + 1, l));
        }
        std::fs::write(path, s).map_err(|e| Error::io(path, e))
    }
}

#[derive(Serialize, Deserialize)]
struct WeightsHeader {
    architecture: CaeArchitecture,
    seed: u64,
    loss_log: Vec<f64>,
    encoder: Vec<LayerSpec>,
    decoder: Vec<LayerSpec>,
}

fn mse<T: Scalar>(y: &[T], x: &[T]) -> f64 {
    let s: f64 = y.iter().zip(x).map(|(&a, &b)| (a - b).to_f64().powi(2)).sum();
    s / x.len() as f64
}

/// MSE of one sample and its gradient with respect to every encoder and decoder parameter.
pub fn loss_and_gradients<T: Scalar>(
    enc: &Sequential<T>,
    dec: &Sequential<T>,
    x: &Tensor<T>,
    genc: &mut Grads<T>,
    gdec: &mut Grads<T>,
    scale: T,
) -> f64 {
    let te = enc.forward_cached(x);
    let td = dec.forward_cached(&te.output);
    let y = &td.output;
    let loss = mse(&y.data, &x.data);
    let k = scale * T::from_f64(2.0 / x.data.len() as f64);
    let dy = Tensor::from_vec(
        y.c,
        y.e,
        y.data.iter().zip(&x.data).map(|(&a, &b)| k * (a - b)).collect(),
    );
    let dz = dec.backward(&td, dy, gdec);
    enc.backward_with(&te, dz, genc, false);
    loss
}

struct Adam {
    m: Vec<f32>,
    v: Vec<f32>,
    t: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Self {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f32], grads: &[f32], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        let step = (lr * c2.sqrt() / c1) as f32;
        let (b1, b2, eps) = (Self::B1 as f32, Self::B2 as f32, (Self::EPS * c2.sqrt()) as f32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * g;
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * g * g;
            params[i] -= step * self.m[i] / (self.v[i].sqrt() + eps);
        }
    }
}

/// Trains encoder and decoder on reconstruction; labels are ignored.
pub fn train(arch: &CaeArchitecture, patches: &[Patch3D], cfg: &TrainConfig) -> Result<CaeModel> {
    if patches.is_empty() {
        return Err(Error::InsufficientData("cae training needs at least one patch".into()));
    }
    if cfg.batch == 0 || !(cfg.lr > 0.0) {
        return Err(Error::Config("cae batch and learning rate must be positive".into()));
    }
    let mut model = CaeModel::new(arch.clone(), cfg.seed)?;
    let inputs = patches
        .iter()
        .map(|p| model.patch_tensor(p))
        .collect::<Result<Vec<_>>>()?;
    // Start the output at the mean intensity so early steps learn structure instead
    // of dragging every decoder weight toward the background level.
    let mean = inputs.iter().flat_map(|t| &t.data).map(|&v| v as f64).sum::<f64>()
        / inputs.iter().map(|t| t.data.len()).sum::<usize>() as f64;
    let m = mean.clamp(1e-3, 1.0 - 1e-3);
    if let Some(last) = model.decoder.layers.iter_mut().rev().find(|l| !l.b.is_empty()) {
        last.b.iter_mut().for_each(|b| *b = (m / (1.0 - m)).ln() as f32);
    }
    let ne = model.encoder.param_count();
    let mut adam = Adam::new(ne + model.decoder.param_count());
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut params = model.encoder.params();
    params.extend(model.decoder.params());
    for epoch in 1..=cfg.epochs {
        rng::shuffle(
            &mut order,
            &mut rng::stream(cfg.seed, SHUFFLE_STREAM ^ (epoch as u64) << 32),
        );
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch) {
            let mut ge = model.encoder.zero_grads();
            let mut gd = model.decoder.zero_grads();
            let scale = 1.0 / batch.len() as f32;
            for &i in batch {
                total += loss_and_gradients(&model.encoder, &model.decoder, &inputs[i], &mut ge, &mut gd, scale);
            }
            let mut g = ge.flatten();
            g.extend(gd.flatten());
            adam.step(&mut params, &g, cfg.lr);
            model.encoder.set_params(&params[..ne]);
            model.decoder.set_params(&params[ne..]);
        }
        let loss = total / inputs.len() as f64;
        log::debug!("cae epoch {epoch}: mse {loss:.6}");
        if !loss.is_finite() || !params.iter().all(|v| v.is_finite()) {
            return Err(Error::Diverged { epoch, loss });
        }
        model.loss_log.push(loss);
    }
    Ok(model)
}

/// Largest relative difference between analytic and central-difference gradients of the
/// mean reconstruction loss over `patches`, across every parameter of `net`.
/// `net` maps the input tensor to the output compared against it.
pub fn gradient_check(net: &Sequential<f64>, inputs: &[Tensor<f64>], targets: &[Tensor<f64>], eps: f64) -> f64 {
    let loss = |n: &Sequential<f64>| -> f64 {
        inputs
            .iter()
            .zip(targets)
            .map(|(x, t)| mse(&n.forward(x).data, &t.data))
            .sum::<f64>()
            / inputs.len() as f64
    };
    let mut grads = net.zero_grads();
    for (x, t) in inputs.iter().zip(targets) {
        let tr = net.forward_cached(x);
        let k = 2.0 / (t.data.len() * inputs.len()) as f64;
        let dy = Tensor::from_vec(
            tr.output.c,
            tr.output.e,
            tr.output.data.iter().zip(&t.data).map(|(a, b)| k * (a - b)).collect(),
        );
        net.backward(&tr, dy, &mut grads);
    }
    let analytic = grads.flatten();
    let base = net.params();
    let mut probe = net.clone();
    let mut worst: f64 = 0.0;
    for i in 0..base.len() {
        let mut p = base.clone();
        p[i] = base[i] + eps;
        probe.set_params(&p);
        let up = loss(&probe);
        p[i] = base[i] - eps;
        probe.set_params(&p);
        let down = loss(&probe);
        let numeric = (up - down) / (2.0 * eps);
        let err = (numeric - analytic[i]).abs() / numeric.abs().max(analytic[i].abs()).max(1e-6);
        worst = worst.max(err);
    }
    worst
}

/// Gradient check of a whole autoencoder reconstructing `patches`.
pub fn autoencoder_gradient_check(arch: &CaeArchitecture, patches: &[Tensor<f64>], seed: u64, eps: f64) -> Result<f64> {
    let (enc, dec) = build_networks::<f64>(arch, seed)?;
    let mut layers = enc.layers;
    layers.extend(dec.layers);
    Ok(gradient_check(&Sequential { layers }, patches, patches, eps))
}

/// Encodes every patch; rows follow patch order and carry the patch labels.
pub fn encode_dataset(m: &CaeModel, patches: &[Patch3D]) -> Result<LabeledDataset> {
    let mut x = Vec::with_capacity(patches.len());
    let mut y = Vec::with_capacity(patches.len());
    for p in patches {
        let label = p
            .label
            .ok_or_else(|| Error::InvalidArgument(format!("patch from {} has no label", p.source_volume_id)))?;
        x.push(m.forward_encode(p)?.values);
        y.push(label);
    }
    LabeledDataset::new(x, y, FeatureProvenance::Latent)
}

/// A `side`³ patch with values drawn uniformly from [0, 1]; handy for smoke tests.
pub fn random_patch(side: usize, seed: u64) -> Patch3D {
    let mut r = rng::rng_from_seed(seed);
    Patch3D {
        side,
        data: (0..side * side * side).map(|_| r.random_range(0.0..1.0)).collect(),
        source_volume_id: format!("random-{seed}"),
        center_voxel: [side / 2; 3],
        label: None,
    }
}
