//! One module per subcommand, plus the flag groups shared between them.

pub mod dataset;
pub mod ecovars;
pub mod eval;
pub mod gradcheck;
pub mod indices;
pub mod predict;
pub mod train;

use satcalc_core::indices::IndexParams;
use satcalc_core::model::{DecoderMode, ModelConfig};

use crate::util::Fail;

/// Index-formula constants, exposed wherever index maps are computed.
#[derive(clap::Args, Debug)]
pub struct IndexParamArgs {
    /// SAVI soil-adjustment term.
    #[arg(long, default_value_t = 0.5)]
    savi_l: f64,
    /// EVI gain.
    #[arg(long, default_value_t = 2.5)]
    evi_g: f64,
    /// EVI red-band coefficient.
    #[arg(long, default_value_t = 6.0)]
    evi_c1: f64,
    /// EVI blue-band coefficient.
    #[arg(long, default_value_t = 7.5)]
    evi_c2: f64,
    /// EVI canopy background term.
    #[arg(long, default_value_t = 1.0)]
    evi_l: f64,
    /// Denominators this close to zero make a pixel nodata.
    #[arg(long, default_value_t = 1e-8)]
    denom_eps: f64,
}

impl IndexParamArgs {
    pub fn to_params(&self) -> IndexParams {
        IndexParams {
            savi_l: self.savi_l,
            evi_g: self.evi_g,
            evi_c1: self.evi_c1,
            evi_c2: self.evi_c2,
            evi_l: self.evi_l,
            denom_eps: self.denom_eps,
        }
    }
}

/// Architecture overrides. Unset flags keep the base configuration the
/// subcommand starts from (training defaults, or the gradcheck preset).
#[derive(clap::Args, Debug)]
pub struct ModelArgs {
    /// Token patch side in pixels.
    #[arg(long)]
    patch: Option<usize>,
    /// Embedding width d.
    #[arg(long)]
    embed_dim: Option<usize>,
    /// Attention heads.
    #[arg(long)]
    heads: Option<usize>,
    /// Attention window side, in tokens.
    #[arg(long)]
    window: Option<usize>,
    /// Backbone blocks.
    #[arg(long)]
    blocks: Option<usize>,
    /// Decoder hidden width.
    #[arg(long)]
    decoder_hidden: Option<usize>,
    /// Decoder depth (1-10).
    #[arg(long)]
    decoder_layers: Option<usize>,
    /// Decoder head form: global or tokenwise.
    #[arg(long)]
    decoder_mode: Option<String>,
    /// Seed for the frozen backbone draw.
    #[arg(long)]
    backbone_seed: Option<u64>,
}

impl ModelArgs {
    /// Apply the overrides to `config` and validate the result.
    pub fn resolve(&self, mut config: ModelConfig) -> Result<ModelConfig, Fail> {
        if let Some(v) = self.patch {
            config.patch_p = v;
        }
        if let Some(v) = self.embed_dim {
            config.embed_d = v;
        }
        if let Some(v) = self.heads {
            config.n_heads = v;
        }
        if let Some(v) = self.window {
            config.window = v;
        }
        if let Some(v) = self.blocks {
            config.n_backbone_blocks = v;
        }
        if let Some(v) = self.decoder_hidden {
            config.decoder_hidden = v;
        }
        if let Some(v) = self.decoder_layers {
            config.decoder_layers = v;
        }
        if let Some(ref s) = self.decoder_mode {
            config.decoder_mode = DecoderMode::parse(s)?;
        }
        if let Some(v) = self.backbone_seed {
            config.backbone_seed = v;
        }
        config.validate()?;
        Ok(config)
    }
}
