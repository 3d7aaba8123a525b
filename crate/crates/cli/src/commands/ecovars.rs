//! `satcalc ecovars`: biomass and carbon-stock maps from a height raster.

use std::path::PathBuf;

use satcalc_core::ecovars::{
    agb_from_height, cap_height, carbon_stock, coeffs_for, CarbonParams, ForestType,
};
use satcalc_core::satc;

use crate::util::{CmdResult, Ctx, Fail};

#[derive(clap::Args, Debug)]
pub struct EcovarsArgs {
    /// Canopy-height raster (.satc), meters.
    #[arg(long)]
    height: PathBuf,
    /// Allometric coefficient set: coniferous, broadleaf, mixed, or general.
    #[arg(long, default_value = "general")]
    forest_type: String,
    /// Fraction of biomass counted as carbon.
    #[arg(long, default_value_t = 0.47)]
    carbon_fraction: f64,
    /// Clamp heights above this many meters before conversion.
    #[arg(long)]
    cap: Option<f32>,
    /// Where to write the biomass map (.satc).
    #[arg(long)]
    agb_out: Option<PathBuf>,
    /// Where to write the carbon-stock map (.satc).
    #[arg(long)]
    cs_out: Option<PathBuf>,
}

pub fn run(ctx: &Ctx, a: &EcovarsArgs) -> CmdResult {
    if a.agb_out.is_none() && a.cs_out.is_none() {
        return Err(Fail::user("nothing to do: pass --agb-out and/or --cs-out"));
    }
    if !(a.carbon_fraction > 0.0 && a.carbon_fraction <= 1.0) {
        return Err(Fail::user(format!(
            "carbon fraction {} must lie in (0, 1]",
            a.carbon_fraction
        )));
    }
    let coeffs = coeffs_for(ForestType::parse(&a.forest_type)?);

    let mut h = satc::read_grid(&a.height)?;
    if let Some(cap) = a.cap {
        h = cap_height(&h, cap)?;
    }
    let agb = agb_from_height(&h, &coeffs)?;
    if let Some(path) = &a.agb_out {
        satc::write_grid(path, &agb)?;
        ctx.note(format!("biomass map written to {}", path.display()));
    }
    if let Some(path) = &a.cs_out {
        let cs = carbon_stock(&agb, &CarbonParams { carbon_fraction: a.carbon_fraction })?;
        satc::write_grid(path, &cs)?;
        ctx.note(format!("carbon-stock map written to {}", path.display()));
    }
    Ok(())
}
