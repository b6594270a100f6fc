//! Off-the-grid predictors for one-dimensional inputs: NP-PROV, whose
//! variance head reads only positions, and the ConvCNP baseline, whose two
//! heads share one value-bearing encoding.

mod grid;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use grid::{build_grid, GridSpec};

use crate::error::{Error, Result};
use crate::loss::gaussian_nll;
use crate::params::{affine, init_affine, Bound, ParamStore};
use crate::rng::{stream, streams};
use crate::taskgen::Task;
use crate::unet::{Dims, UNetSpec};
use crate::{Graph, Tensor, Var};

/// Lower bound added to every predicted standard deviation.
pub const STD_FLOOR: f64 = 1e-3;
/// Densities at or below this are treated as empty when normalizing.
pub const DIV_EPS: f64 = 1e-8;

/// Initial self-gram length scale, in grid cells.
const SELF_SCALE_CELLS: f64 = 0.0625;

const ENC_SCALE: &str = "enc.log_scale";
const DEC_SCALE: &str = "dec.log_scale";
const SELF_SCALE: &str = "self.log_scale";
const PSI_E: &str = "psi_e";
const PSI_D: &str = "psi_d";
const PSI_T: &str = "psi_t";
const PSI_POS: &str = "psi_pos";
const PSI_GRID: &str = "psi_grid";
const PSI_MEAN: &str = "psi_mean";
const PSI_STD: &str = "psi_std";
const UNET: &str = "unet";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelKind {
    NpProv,
    ConvCnp,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::NpProv => "npprov",
            ModelKind::ConvCnp => "convcnp",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "npprov" | "np-prov" => Ok(ModelKind::NpProv),
            "convcnp" => Ok(ModelKind::ConvCnp),
            _ => Err(Error::contract(format!(
                "unknown model {s:?} (expected npprov or convcnp)"
            ))),
        }
    }
}

/// Architecture hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OffGridConfig {
    pub grid: GridSpec,
    /// Width of the self-correlation channels.
    pub self_channels: usize,
    /// Width of the fused encoding fed to the UNet.
    pub fused_channels: usize,
    pub unet_base: usize,
    pub unet_levels: usize,
    pub kernel_size: usize,
    /// Width of the UNet output.
    pub out_channels: usize,
    /// Width of the grid self-gram features on the variance path.
    pub grid_self_channels: usize,
    /// Divide the decoder sums by the decoder density.
    pub normalize_decoder: bool,
}

impl Default for OffGridConfig {
    fn default() -> Self {
        OffGridConfig {
            grid: GridSpec::default(),
            self_channels: 8,
            fused_channels: 8,
            unet_base: 16,
            unet_levels: 6,
            kernel_size: 5,
            out_channels: 16,
            grid_self_channels: 8,
            normalize_decoder: true,
        }
    }
}

impl OffGridConfig {
    pub fn unet(&self) -> UNetSpec {
        UNetSpec {
            dims: Dims::One,
            in_channels: self.fused_channels,
            base: self.unet_base,
            levels: self.unet_levels,
            kernel: self.kernel_size,
            out_channels: self.out_channels,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let widths = [
            self.self_channels,
            self.fused_channels,
            self.unet_base,
            self.unet_levels,
            self.out_channels,
            self.grid_self_channels,
        ];
        if widths.contains(&0) || self.kernel_size.is_multiple_of(2) || self.grid.points_per_unit == 0 {
            return Err(Error::contract(format!("invalid off-grid config {self:?}")));
        }
        Ok(())
    }
}

/// Per-target Gaussian marginals plus the reconstruction penalty.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub recon_loss: f64,
}

/// Graph handles for one forward pass. `mean` and `std` are `[1, M]`,
/// `recon_loss` is a scalar.
#[derive(Clone, Copy, Debug)]
pub struct PredictionVars {
    pub mean: Var,
    pub std: Var,
    pub recon_loss: Var,
}

/// A model together with its parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct OffGridModel {
    pub kind: ModelKind,
    pub config: OffGridConfig,
    pub params: ParamStore,
}

impl OffGridModel {
    pub fn new(kind: ModelKind, config: OffGridConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = stream(seed, 0, streams::INIT);
        let mut params = ParamStore::new();
        let log_scale = Tensor::from_slice(&[(2.0 / config.grid.points_per_unit as f64).ln()]);
        params.insert(ENC_SCALE, log_scale.clone());
        params.insert(DEC_SCALE, log_scale);
        let (cs, cf, co) = (config.self_channels, config.fused_channels, config.out_channels);
        match kind {
            ModelKind::NpProv => {
                // The context self-gram starts near the identity, the only
                // regime in which the affine autoencoder can reconstruct.
                let self_scale = (SELF_SCALE_CELLS / config.grid.points_per_unit as f64).ln();
                params.insert(SELF_SCALE, Tensor::from_slice(&[self_scale]));
                init_affine(&mut params, &mut rng, PSI_E, 1, cs);
                init_affine(&mut params, &mut rng, PSI_D, cs, 1);
                init_affine(&mut params, &mut rng, PSI_T, cs + 2, cf);
                init_affine(&mut params, &mut rng, PSI_POS, 1, 1);
                init_affine(&mut params, &mut rng, PSI_GRID, 1, config.grid_self_channels);
                init_affine(&mut params, &mut rng, PSI_MEAN, co, 1);
                init_affine(&mut params, &mut rng, PSI_STD, co + config.grid_self_channels, 1);
            }
            ModelKind::ConvCnp => {
                init_affine(&mut params, &mut rng, PSI_T, 2, cf);
                init_affine(&mut params, &mut rng, PSI_MEAN, co, 1);
                init_affine(&mut params, &mut rng, PSI_STD, co, 1);
            }
        }
        config.unet().init(&mut params, &mut rng, UNET);
        Ok(OffGridModel {
            kind,
            config,
            params,
        })
    }

    /// Check that `params` has exactly the tensors this architecture needs.
    pub fn from_parts(kind: ModelKind, config: OffGridConfig, params: ParamStore) -> Result<Self> {
        let reference = OffGridModel::new(kind, config, 0)?;
        let expected: Vec<(&String, &[usize])> =
            reference.params.iter().map(|(n, t)| (n, t.shape())).collect();
        let found: Vec<(&String, &[usize])> = params.iter().map(|(n, t)| (n, t.shape())).collect();
        if expected != found {
            return Err(Error::contract(format!(
                "parameter set does not match a {kind} model with {config:?}"
            )));
        }
        Ok(OffGridModel {
            kind,
            config,
            params,
        })
    }

    /// Build the forward graph for `task` on `g`.
    pub fn forward(&self, g: &Graph, p: &Bound, task: &Task) -> Result<PredictionVars> {
        task.validate()?;
        let grid = build_grid(&task.all_positions(), &self.config.grid, self.config.unet().multiple())?;
        match self.kind {
            ModelKind::NpProv => npprov_forward(g, p, &self.config, task, &grid),
            ModelKind::ConvCnp => convcnp_forward(g, p, &self.config, task, &grid),
        }
    }

    pub fn predict(&self, task: &Task) -> Result<Prediction> {
        let g = Graph::new();
        let p = self.params.bind(&g);
        let vars = self.forward(&g, &p, task)?;
        Ok(Prediction {
            mean: g.value(vars.mean).into_data(),
            std: g.value(vars.std).into_data(),
            recon_loss: g.value(vars.recon_loss).item()?,
        })
    }

    /// Training objective: mean target negative log-likelihood plus the
    /// reconstruction penalty.
    pub fn loss(&self, g: &Graph, p: &Bound, task: &Task) -> Result<Var> {
        let vars = self.forward(g, p, task)?;
        let y = Tensor::new([1, task.n_target()], task.y_target.clone())?;
        let nll = gaussian_nll(g, &y, vars.mean, vars.std)?;
        g.add(nll, vars.recon_loss)
    }
}

/// `K_ij = exp(−½(a_i − b_j)²/ℓ²)` with `ℓ = exp(log_scale)`, shape `[P, Q]`.
pub fn setconv_kernel(g: &Graph, a: &[f64], b: &[f64], log_scale: Var) -> Result<Var> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::contract("setconv_kernel needs nonempty position sets"));
    }
    let d2: Vec<f64> = a
        .iter()
        .flat_map(|&ai| b.iter().map(move |&bj| -0.5 * (ai - bj) * (ai - bj)))
        .collect();
    let d2 = g.constant(Tensor::new([a.len(), b.len()], d2)?);
    let inv_sq = g.exp(g.scale(log_scale, -2.0)?)?;
    g.exp(g.mul(d2, inv_sq)?)
}

/// `num / den` where `den > DIV_EPS`, else 0. `den` broadcasts against `num`.
fn masked_divide(g: &Graph, num: Var, den: Var) -> Result<Var> {
    let mask = g.value(den).map(|d| if d > DIV_EPS { 1.0 } else { 0.0 });
    let fill = g.constant(mask.map(|m| 1.0 - m));
    let mask = g.constant(mask);
    let safe = g.add(g.mul(den, mask)?, fill)?;
    g.mul(g.div(num, safe)?, mask)
}

/// Output of the self-correlation autoencoder.
#[derive(Clone, Copy, Debug)]
pub struct SelfCorrelation {
    /// `[C, N, N]`, indexed `[c, n, i]`.
    pub h_self: Var,
    /// `[1, N]`.
    pub reconstruction: Var,
    /// Scalar mean squared reconstruction error.
    pub recon_loss: Var,
    /// `[C, 1]`: mean of `h_self` over both point axes.
    pub summary: Var,
}

/// Encode each context value through the context self-gram and decode it
/// back, so the encoder learns something like the inverse of the gram.
pub fn self_corr_autoencode(g: &Graph, p: &Bound, x: &[f64], y: &[f64]) -> Result<SelfCorrelation> {
    let n = x.len();
    if n == 0 || y.len() != n {
        return Err(Error::contract(format!(
            "self_corr_autoencode needs N ≥ 1 matching positions and values, got {} and {}",
            n,
            y.len()
        )));
    }
    let k = setconv_kernel(g, x, x, p.var(SELF_SCALE)?)?;
    let y_col = g.constant(Tensor::new([n, 1], y.to_vec())?);
    let weighted = g.mul(k, y_col)?;
    let h_self = affine(g, p, PSI_E, g.reshape(weighted, [1, n * n])?)?;
    let c = g.shape(h_self)[0];
    let h_self = g.reshape(h_self, [c, n, n])?;

    let k3 = g.reshape(k, [1, n, n])?;
    let pooled = g.sum(g.mul(h_self, k3)?, 1)?;
    let reconstruction = affine(g, p, PSI_D, g.reshape(pooled, [c, n])?)?;
    let y_row = g.constant(Tensor::new([1, n], y.to_vec())?);
    let resid = g.sub(y_row, reconstruction)?;
    let recon_loss = g.mean_all(g.mul(resid, resid)?)?;
    let summary = g.mean(g.reshape(h_self, [c, n * n])?, 1)?;
    Ok(SelfCorrelation {
        h_self,
        reconstruction,
        recon_loss,
        summary,
    })
}

/// Density and density-normalized value channels on the grid, each `[1, T]`.
fn density_channels(g: &Graph, x: &[f64], values: Var, grid: &[f64], log_scale: Var) -> Result<(Var, Var)> {
    let kt = setconv_kernel(g, x, grid, log_scale)?;
    let density = g.sum(kt, 0)?;
    let value = g.matmul(values, kt)?;
    let normalized = masked_divide(g, value, density)?;
    Ok((density, normalized))
}

/// Fused grid encoding `[C', T]` from the self-correlation summary `[C, 1]`
/// and the density channels of `values` `[1, N]` at positions `x`.
pub fn cross_corr_encode(
    g: &Graph,
    p: &Bound,
    x: &[f64],
    values: Var,
    grid: &[f64],
    summary: Var,
) -> Result<Var> {
    let (density, normalized) = density_channels(g, x, values, grid, p.var(ENC_SCALE)?)?;
    let ones = g.constant(Tensor::ones([1, grid.len()]));
    let broadcast = g.mul(summary, ones)?;
    let stacked = g.concat(&[broadcast, density, normalized], 0)?;
    affine(g, p, PSI_T, stacked)
}

/// Smooth grid features `r` `[C, T]` onto the targets: `[C, M]`.
fn decode(g: &Graph, p: &Bound, r: Var, grid: &[f64], x_target: &[f64], normalize: bool) -> Result<Var> {
    let k_star = setconv_kernel(g, grid, x_target, p.var(DEC_SCALE)?)?;
    let pooled = g.matmul(r, k_star)?;
    if normalize {
        masked_divide(g, pooled, g.sum(k_star, 0)?)
    } else {
        Ok(pooled)
    }
}

/// Predictive mean `[1, M]` from UNet features `r` `[C, T]`.
pub fn mean_head(
    g: &Graph,
    p: &Bound,
    r: Var,
    x_target: &[f64],
    grid: &[f64],
    normalize: bool,
) -> Result<Var> {
    let pooled = decode(g, p, r, grid, x_target, normalize)?;
    affine(g, p, PSI_MEAN, pooled)
}

fn std_from(g: &Graph, pre: Var) -> Result<Var> {
    let floor = g.constant(Tensor::scalar(STD_FLOOR));
    g.add(g.softplus(pre)?, floor)
}

/// Value-free stand-ins `[1, N]` for the context values: an affine map of
/// each context point's total kernel mass over the grid.
pub fn position_values(g: &Graph, p: &Bound, x_context: &[f64], grid: &[f64]) -> Result<Var> {
    let kt = setconv_kernel(g, x_context, grid, p.var(ENC_SCALE)?)?;
    let mass = g.reshape(g.sum(kt, 1)?, [1, x_context.len()])?;
    affine(g, p, PSI_POS, mass)
}

/// Predictive standard deviation `[1, M]` computed from context positions,
/// grid and target positions alone.
pub fn variance_path(
    g: &Graph,
    p: &Bound,
    config: &OffGridConfig,
    x_context: &[f64],
    grid: &[f64],
    x_target: &[f64],
) -> Result<Var> {
    let n = x_context.len();
    let h_pos = position_values(g, p, x_context, grid)?;
    let k = setconv_kernel(g, x_context, x_context, p.var(SELF_SCALE)?)?;
    let h_self = affine(g, p, PSI_E, g.reshape(k, [1, n * n])?)?;
    let summary = g.mean(h_self, 1)?;
    let h = cross_corr_encode(g, p, x_context, h_pos, grid, summary)?;
    let r = config.unet().apply(g, p, UNET, h)?;

    let ktt = setconv_kernel(g, grid, grid, p.var(DEC_SCALE)?)?;
    let grid_self = affine(g, p, PSI_GRID, g.sum(ktt, 0)?)?;
    let features = g.concat(&[r, grid_self], 0)?;
    let pooled = decode(g, p, features, grid, x_target, config.normalize_decoder)?;
    std_from(g, affine(g, p, PSI_STD, pooled)?)
}

fn npprov_forward(g: &Graph, p: &Bound, config: &OffGridConfig, task: &Task, grid: &[f64]) -> Result<PredictionVars> {
    let sc = self_corr_autoencode(g, p, &task.x_context, &task.y_context)?;
    let y = g.constant(Tensor::new([1, task.n_context()], task.y_context.clone())?);
    let h = cross_corr_encode(g, p, &task.x_context, y, grid, sc.summary)?;
    let r = config.unet().apply(g, p, UNET, h)?;
    let mean = mean_head(g, p, r, &task.x_target, grid, config.normalize_decoder)?;
    let std = variance_path(g, p, config, &task.x_context, grid, &task.x_target)?;
    Ok(PredictionVars {
        mean,
        std,
        recon_loss: sc.recon_loss,
    })
}

fn convcnp_forward(g: &Graph, p: &Bound, config: &OffGridConfig, task: &Task, grid: &[f64]) -> Result<PredictionVars> {
    let y = g.constant(Tensor::new([1, task.n_context()], task.y_context.clone())?);
    let (density, normalized) = density_channels(g, &task.x_context, y, grid, p.var(ENC_SCALE)?)?;
    let h = affine(g, p, PSI_T, g.concat(&[density, normalized], 0)?)?;
    let r = config.unet().apply(g, p, UNET, h)?;
    let pooled = decode(g, p, r, grid, &task.x_target, config.normalize_decoder)?;
    let mean = affine(g, p, PSI_MEAN, pooled)?;
    let std = std_from(g, affine(g, p, PSI_STD, pooled)?)?;
    Ok(PredictionVars {
        mean,
        std,
        recon_loss: g.constant(Tensor::scalar(0.0)),
    })
}
