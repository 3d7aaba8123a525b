//! `satcalc dataset synth` and `satcalc dataset build`: synthetic scenes,
//! and patch datasets cut from one scene.

use std::fs;
use std::path::PathBuf;

use rayon::prelude::*;

use satcalc_core::dataset::{
    assign_splits, extract_patches, synth_scene, write_sample, Manifest, Split, TargetParams,
};
use satcalc_core::ecovars::{coeffs_for, CarbonParams, ForestType};
use satcalc_core::rng::mix;
use satcalc_core::satc;
use satcalc_core::CoreError;

use super::IndexParamArgs;
use crate::util::{parse_fractions, parse_size, CmdResult, Ctx, Fail};

#[derive(clap::Subcommand, Debug)]
pub enum DatasetCmd {
    /// Generate synthetic scenes (one bands + height pair each).
    Synth(SynthArgs),
    /// Cut seeded random patches from one scene into a sample set.
    Build(BuildArgs),
}

#[derive(clap::Args, Debug)]
pub struct SynthArgs {
    /// Number of scenes to generate.
    #[arg(long)]
    scenes: usize,
    /// Scene dims as HxW, e.g. 128x128.
    #[arg(long)]
    size: String,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args, Debug)]
pub struct BuildArgs {
    /// Scene band stack (.satc).
    #[arg(long)]
    bands: PathBuf,
    /// Scene height raster (.satc).
    #[arg(long)]
    height: PathBuf,
    /// Patch side in pixels.
    #[arg(long, default_value_t = 32)]
    patch: usize,
    /// Number of patches to cut.
    #[arg(long)]
    n: usize,
    /// Output dataset directory.
    #[arg(long)]
    out: PathBuf,
    /// Train/val/test fractions.
    #[arg(long, default_value = "0.8,0.1,0.1")]
    split: String,
    /// Patches with more nodata than this fraction are redrawn.
    #[arg(long, default_value_t = 0.5)]
    max_nodata_frac: f64,
    /// Allometric coefficient set for the biomass target.
    #[arg(long, default_value = "general")]
    forest_type: String,
    /// Fraction of biomass counted as carbon.
    #[arg(long, default_value_t = 0.47)]
    carbon_fraction: f64,
    #[command(flatten)]
    index_params: IndexParamArgs,
}

pub fn run(ctx: &Ctx, cmd: &DatasetCmd) -> CmdResult {
    match cmd {
        DatasetCmd::Synth(a) => synth(ctx, a),
        DatasetCmd::Build(a) => build(ctx, a),
    }
}

fn synth(ctx: &Ctx, a: &SynthArgs) -> CmdResult {
    let (h, w) = parse_size(&a.size)?;
    if a.scenes == 0 {
        return Err(Fail::user("--scenes must be at least 1"));
    }
    fs::create_dir_all(&a.out).map_err(|e| Fail::user(format!("{}: {}", a.out.display(), e)))?;

    // Scene i draws from a per-scene seed, so the set is independent of
    // generation order; files are then written sequentially in index order.
    let scenes = (0..a.scenes)
        .into_par_iter()
        .map(|i| synth_scene(mix(ctx.seed, i as u64), h, w))
        .collect::<Result<Vec<_>, CoreError>>()?;
    for (i, (bands, height)) in scenes.iter().enumerate() {
        satc::write_bands(&a.out.join(format!("scene{i:04}_bands.satc")), bands)?;
        satc::write_grid(&a.out.join(format!("scene{i:04}_height.satc")), height)?;
    }
    println!("{} scenes of {}x{} written to {}", a.scenes, h, w, a.out.display());
    Ok(())
}

fn build(ctx: &Ctx, a: &BuildArgs) -> CmdResult {
    let fractions = parse_fractions(&a.split)?;
    if !(a.carbon_fraction > 0.0 && a.carbon_fraction <= 1.0) {
        return Err(Fail::user(format!(
            "carbon fraction {} must lie in (0, 1]",
            a.carbon_fraction
        )));
    }
    let params = TargetParams {
        index: a.index_params.to_params(),
        coeffs: coeffs_for(ForestType::parse(&a.forest_type)?),
        carbon: CarbonParams { carbon_fraction: a.carbon_fraction },
    };

    let x = satc::read_bands(&a.bands)?;
    let h = satc::read_grid(&a.height)?;
    let samples = extract_patches(&x, &h, a.patch, a.n, ctx.seed, a.max_nodata_frac, &params)?;
    let splits = assign_splits(samples.len(), fractions, ctx.seed)?;

    fs::create_dir_all(&a.out).map_err(|e| Fail::user(format!("{}: {}", a.out.display(), e)))?;
    let records = samples
        .par_iter()
        .zip(splits.par_iter())
        .map(|(s, &split)| write_sample(&a.out, s, split))
        .collect::<Result<Vec<_>, CoreError>>()?;

    let mut manifest_params = params.to_kv();
    manifest_params.push(("max_nodata_frac".into(), a.max_nodata_frac.to_string()));
    let manifest = Manifest {
        seed: ctx.seed,
        patch_size: a.patch as u32,
        params: manifest_params,
        records,
    };
    let path = manifest.write(&a.out)?;
    ctx.note(format!("manifest written to {}", path.display()));

    let counts =
        [Split::Train, Split::Val, Split::Test].map(|t| splits.iter().filter(|&&s| s == t).count());
    println!(
        "{} samples of {}x{} written to {} (train/val/test = {}/{}/{})",
        samples.len(),
        a.patch,
        a.patch,
        a.out.display(),
        counts[0],
        counts[1],
        counts[2]
    );
    Ok(())
}
