//! On-the-grid NP-PROV for images. The context is a binary pixel mask, every
//! pixel is a target, and the variance head reads the mask alone.

mod images;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use images::{load_idx_images, read_idx_images, synthetic_strokes, write_idx_images, IDX_IMAGE_MAGIC};

use crate::error::{Error, Result};
use crate::loss::gaussian_nll;
use crate::params::{affine, init_affine, uniform_weight, Bound, ParamStore};
use crate::rng::{stream, streams};
use crate::train::{fit, TrainConfig};
use crate::unet::{Dims, UNetSpec};
use crate::{Graph, Tensor, Var};

pub use crate::offgrid::STD_FLOOR;

const PSI_E: &str = "psi_e";
const PSI_D: &str = "psi_d";
const PSI_CROSS: &str = "psi_cross";
const PSI_TARGET: &str = "psi_target";
const PSI_MEAN: &str = "psi_mean";
const PSI_STD: &str = "psi_std";
const UNET: &str = "unet";

/// An image together with the mask of revealed pixels.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskedImage {
    /// `[C, H, W]`, values in `[0, 1]`.
    pub values: Tensor,
    /// `[1, H, W]`, 1 where a pixel is revealed.
    pub mask: Tensor,
}

impl MaskedImage {
    pub fn new(values: Tensor, mask: Tensor) -> Result<Self> {
        let img = MaskedImage { values, mask };
        img.validate()?;
        Ok(img)
    }

    pub fn validate(&self) -> Result<()> {
        let (vs, ms) = (self.values.shape(), self.mask.shape());
        if vs.len() != 3 || ms.len() != 3 || ms[0] != 1 || vs[1..] != ms[1..] {
            return Err(Error::contract(format!(
                "masked image needs values [C, H, W] and mask [1, H, W], got {vs:?} and {ms:?}"
            )));
        }
        if self.mask.data().iter().any(|&m| m != 0.0 && m != 1.0) {
            return Err(Error::contract("mask entries must be 0 or 1"));
        }
        if !self.values.all_finite() {
            return Err(Error::contract("image values must be finite"));
        }
        Ok(())
    }

    pub fn channels(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn height(&self) -> usize {
        self.values.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.values.shape()[2]
    }
}

/// Inclusive range of revealed-pixel counts for an image of `n` pixels.
pub fn context_count_range(n: usize) -> (usize, usize) {
    (n.div_ceil(100).max(1), (n / 2).max(1))
}

/// Reveal a uniformly drawn number of distinct pixels, chosen uniformly
/// without replacement. Returns `[1, height, width]`.
pub fn sample_mask(height: usize, width: usize, base_seed: u64, index: u64) -> Result<Tensor> {
    let n = height * width;
    if n == 0 {
        return Err(Error::contract("mask needs a nonempty image"));
    }
    let (lo, hi) = context_count_range(n);
    let mut rng = stream(base_seed, index, streams::MASK);
    let count = rng.random_range(lo..=hi);
    let mut data = vec![0.0; n];
    for i in sample(&mut rng, n, count) {
        data[i] = 1.0;
    }
    Tensor::new([1, height, width], data)
}

/// Architecture hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OnGridConfig {
    /// Image channels.
    pub channels: usize,
    pub self_channels: usize,
    pub cross_channels: usize,
    /// Width of the target-mask features on the variance path.
    pub target_channels: usize,
    /// Side of the square encoder and UNet filters.
    pub kernel_size: usize,
    pub unet_base: usize,
    pub unet_levels: usize,
    /// Width of the UNet output.
    pub out_channels: usize,
}

impl Default for OnGridConfig {
    fn default() -> Self {
        OnGridConfig {
            channels: 1,
            self_channels: 8,
            cross_channels: 8,
            target_channels: 4,
            kernel_size: 3,
            unet_base: 16,
            unet_levels: 4,
            out_channels: 16,
        }
    }
}

impl OnGridConfig {
    pub fn unet(&self) -> UNetSpec {
        UNetSpec {
            dims: Dims::Two,
            in_channels: self.self_channels + self.cross_channels,
            base: self.unet_base,
            levels: self.unet_levels,
            kernel: self.kernel_size,
            out_channels: self.out_channels,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let widths = [
            self.channels,
            self.self_channels,
            self.cross_channels,
            self.target_channels,
            self.unet_base,
            self.unet_levels,
            self.out_channels,
        ];
        if widths.contains(&0) || self.kernel_size.is_multiple_of(2) {
            return Err(Error::contract(format!("invalid on-grid config {self:?}")));
        }
        Ok(())
    }
}

/// Placement of an `height × width` image in the zero-padded canvas the
/// UNet runs on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Canvas {
    pub height: usize,
    pub width: usize,
    pub canvas_height: usize,
    pub canvas_width: usize,
    pub top: usize,
    pub left: usize,
}

impl Canvas {
    /// Smallest canvas with sides divisible by `multiple`, image centered.
    pub fn new(height: usize, width: usize, multiple: usize) -> Self {
        let canvas_height = height.div_ceil(multiple) * multiple;
        let canvas_width = width.div_ceil(multiple) * multiple;
        Canvas {
            height,
            width,
            canvas_height,
            canvas_width,
            top: (canvas_height - height) / 2,
            left: (canvas_width - width) / 2,
        }
    }

    /// Zero-pad `[C, height, width]` onto the canvas.
    pub fn pad(&self, t: &Tensor) -> Result<Tensor> {
        let s = t.shape();
        if s.len() != 3 || s[1] != self.height || s[2] != self.width {
            return Err(Error::contract(format!(
                "expected [C, {}, {}], got {s:?}",
                self.height, self.width
            )));
        }
        let c = s[0];
        let mut data = vec![0.0; c * self.canvas_height * self.canvas_width];
        for ch in 0..c {
            for r in 0..self.height {
                let src = (ch * self.height + r) * self.width;
                let dst = (ch * self.canvas_height + self.top + r) * self.canvas_width + self.left;
                data[dst..dst + self.width].copy_from_slice(&t.data()[src..src + self.width]);
            }
        }
        Tensor::new([c, self.canvas_height, self.canvas_width], data)
    }

    /// The image region of a canvas-sized `[C, H', W']`.
    pub fn crop(&self, g: &Graph, x: Var) -> Result<Var> {
        let rows = g.slice(x, 1, self.top, self.height)?;
        g.slice(rows, 2, self.left, self.width)
    }
}

fn init_conv(store: &mut ParamStore, rng: &mut impl Rng, prefix: &str, c_in: usize, c_out: usize, k: usize) {
    store.insert(format!("{prefix}.w"), uniform_weight(rng, &[c_out, c_in, k, k], c_in * k * k));
    store.insert(format!("{prefix}.b"), Tensor::zeros([c_out]));
}

/// Shape-preserving convolution `{prefix}` of `[c_in, H, W]`.
fn conv(g: &Graph, p: &Bound, prefix: &str, x: Var) -> Result<Var> {
    let w = p.var(&format!("{prefix}.w"))?;
    let b = p.var(&format!("{prefix}.b"))?;
    let k = g.shape(w)[2];
    let y = g.conv2d(x, w, 1, k / 2)?;
    let c = g.shape(b)[0];
    let b = g.reshape(b, [c, 1, 1])?;
    g.add(y, b)
}

/// Self-correlation features of the mask and the mean squared error of the
/// mask decoded back from them. `mask` is on the canvas.
pub fn self_encode(g: &Graph, p: &Bound, canvas: &Canvas, mask: Var) -> Result<(Var, Var)> {
    let h_self = conv(g, p, PSI_E, mask)?;
    let decoded = canvas.crop(g, conv(g, p, PSI_D, h_self)?)?;
    let target = canvas.crop(g, mask)?;
    let err = g.sub(target, decoded)?;
    let sq = g.mul(err, err)?;
    Ok((h_self, g.mean_all(sq)?))
}

fn check_canvas(cfg: &OnGridConfig, values: &Tensor, mask: &Tensor) -> Result<Canvas> {
    MaskedImage {
        values: values.clone(),
        mask: mask.clone(),
    }
    .validate()?;
    if values.shape()[0] != cfg.channels {
        return Err(Error::contract(format!(
            "model expects {} channels, image has {}",
            cfg.channels,
            values.shape()[0]
        )));
    }
    Ok(Canvas::new(values.shape()[1], values.shape()[2], cfg.unet().multiple()))
}

/// Posterior mean `[C, H, W]` and the mask reconstruction loss.
pub fn ongrid_mean(g: &Graph, p: &Bound, cfg: &OnGridConfig, img: &MaskedImage) -> Result<(Var, Var)> {
    let canvas = check_canvas(cfg, &img.values, &img.mask)?;
    let m = g.constant(canvas.pad(&img.mask)?);
    let y = g.constant(canvas.pad(&img.values)?);
    let (h_self, recon) = self_encode(g, p, &canvas, m)?;
    let my = g.mul(m, y)?;
    let h_cross = conv(g, p, PSI_CROSS, g.concat(&[m, my], 0)?)?;
    let fused = g.concat(&[h_self, h_cross], 0)?;
    let r = canvas.crop(g, cfg.unet().apply(g, p, UNET, fused)?)?;
    Ok((affine(g, p, PSI_MEAN, r)?, recon))
}

/// Posterior standard deviation `[C, H, W]` from the mask `[1, H, W]` alone.
pub fn ongrid_variance(g: &Graph, p: &Bound, cfg: &OnGridConfig, mask: &Tensor) -> Result<Var> {
    let shape = mask.shape();
    if shape.len() != 3 {
        return Err(Error::contract(format!("mask must be [1, H, W], got {shape:?}")));
    }
    let placeholder = Tensor::zeros([cfg.channels, shape[1], shape[2]]);
    let canvas = check_canvas(cfg, &placeholder, mask)?;
    let m = g.constant(canvas.pad(mask)?);
    let (h_self, _) = self_encode(g, p, &canvas, m)?;
    // The value channels of the cross-correlation input see the mask again.
    let mut stack = vec![m];
    stack.extend(std::iter::repeat_n(m, cfg.channels));
    let h_cross = conv(g, p, PSI_CROSS, g.concat(&stack, 0)?)?;
    let fused = g.concat(&[h_self, h_cross], 0)?;
    let r = canvas.crop(g, cfg.unet().apply(g, p, UNET, fused)?)?;
    // Every pixel is a target, so the target mask is all ones.
    let targets = g.constant(Tensor::ones([1, shape[1], shape[2]]));
    let h_target = affine(g, p, PSI_TARGET, targets)?;
    let pre = affine(g, p, PSI_STD, g.concat(&[r, h_target], 0)?)?;
    let sp = g.softplus(pre)?;
    let floor = g.constant(Tensor::scalar(STD_FLOOR));
    g.add(sp, floor)
}

/// Mean negative log-likelihood over every pixel plus the reconstruction
/// loss.
pub fn ongrid_loss(g: &Graph, values: &Tensor, mean: Var, std: Var, recon_loss: Var) -> Result<Var> {
    let nll = gaussian_nll(g, values, mean, std)?;
    g.add(nll, recon_loss)
}

#[derive(Clone, Debug, PartialEq)]
pub struct OnGridPrediction {
    /// `[C, H, W]`.
    pub mean: Tensor,
    /// `[C, H, W]`.
    pub std: Tensor,
    pub recon_loss: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OnGridModel {
    pub config: OnGridConfig,
    pub params: ParamStore,
}

impl OnGridModel {
    pub fn new(config: OnGridConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = stream(seed, 0, streams::INIT);
        let mut params = ParamStore::new();
        let (c, k) = (config.channels, config.kernel_size);
        init_conv(&mut params, &mut rng, PSI_E, 1, config.self_channels, k);
        init_conv(&mut params, &mut rng, PSI_D, config.self_channels, 1, k);
        init_conv(&mut params, &mut rng, PSI_CROSS, 1 + c, config.cross_channels, k);
        init_affine(&mut params, &mut rng, PSI_TARGET, 1, config.target_channels);
        init_affine(&mut params, &mut rng, PSI_MEAN, config.out_channels, c);
        init_affine(
            &mut params,
            &mut rng,
            PSI_STD,
            config.out_channels + config.target_channels,
            c,
        );
        config.unet().init(&mut params, &mut rng, UNET);
        Ok(OnGridModel { config, params })
    }

    /// Check that `params` has exactly the tensors this architecture needs.
    pub fn from_parts(config: OnGridConfig, params: ParamStore) -> Result<Self> {
        let reference = OnGridModel::new(config, 0)?;
        let expected: Vec<(&String, &[usize])> =
            reference.params.iter().map(|(n, t)| (n, t.shape())).collect();
        let found: Vec<(&String, &[usize])> = params.iter().map(|(n, t)| (n, t.shape())).collect();
        if expected != found {
            return Err(Error::contract(format!(
                "parameter set does not match an on-grid model with {config:?}"
            )));
        }
        Ok(OnGridModel { config, params })
    }

    /// Mean, std and reconstruction loss handles for `img`.
    pub fn forward(&self, g: &Graph, p: &Bound, img: &MaskedImage) -> Result<(Var, Var, Var)> {
        let (mean, recon) = ongrid_mean(g, p, &self.config, img)?;
        let std = ongrid_variance(g, p, &self.config, &img.mask)?;
        Ok((mean, std, recon))
    }

    pub fn predict(&self, img: &MaskedImage) -> Result<OnGridPrediction> {
        let g = Graph::new();
        let p = self.params.bind(&g);
        let (mean, std, recon) = self.forward(&g, &p, img)?;
        Ok(OnGridPrediction {
            mean: g.value(mean),
            std: g.value(std),
            recon_loss: g.value(recon).item()?,
        })
    }

    /// Predicted std for `mask`; no pixel values are involved.
    pub fn predict_std(&self, mask: &Tensor) -> Result<Tensor> {
        let g = Graph::new();
        let p = self.params.bind(&g);
        Ok(g.value(ongrid_variance(&g, &p, &self.config, mask)?))
    }

    pub fn loss(&self, g: &Graph, p: &Bound, img: &MaskedImage) -> Result<Var> {
        let (mean, std, recon) = self.forward(g, p, img)?;
        ongrid_loss(g, &img.values, mean, std, recon)
    }
}

/// Training example `index`: image `index mod len` under a fresh mask.
pub fn masked_example(images: &[Tensor], base_seed: u64, index: u64) -> Result<MaskedImage> {
    if images.is_empty() {
        return Err(Error::EmptyData("no training images".into()));
    }
    let values = images[(index % images.len() as u64) as usize].clone();
    let s = values.shape();
    if s.len() != 3 {
        return Err(Error::contract(format!("image must be [C, H, W], got {s:?}")));
    }
    let mask = sample_mask(s[1], s[2], base_seed, index)?;
    MaskedImage::new(values, mask)
}

/// Train on `images`, each example drawn by [`masked_example`] with
/// `cfg.seed`.
pub fn train_ongrid(
    model: &mut OnGridModel,
    images: &[Tensor],
    cfg: &TrainConfig,
    on_epoch: impl FnMut(usize, f64),
) -> Result<Vec<f64>> {
    if images.is_empty() {
        return Err(Error::EmptyData("no training images".into()));
    }
    let frozen = model.clone();
    fit(
        &mut model.params,
        cfg,
        |g, p, i| frozen.loss(g, p, &masked_example(images, cfg.seed, i)?),
        on_epoch,
    )
}
