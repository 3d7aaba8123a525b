//! `satcalc predict`: per-task prediction maps for a band stack.
//!
//! Rasters larger than the model's input side are processed as a grid of
//! non-overlapping tiles and mosaicked; both dims must be exact multiples
//! of the input side.

use std::fs;
use std::path::PathBuf;

use rayon::prelude::*;

use satcalc_core::dataset::TaskMap;
use satcalc_core::grid::{crop, Grid2D};
use satcalc_core::model::{checkpoint, forward_all};
use satcalc_core::satc;
use satcalc_core::CoreError;

use crate::util::{parse_tasks, CmdResult, Ctx, Fail};

#[derive(clap::Args, Debug)]
pub struct PredictArgs {
    /// Checkpoint directory.
    #[arg(long)]
    ckpt: PathBuf,
    /// Input band stack (.satc).
    #[arg(long = "in")]
    input: PathBuf,
    /// Output directory, one map per task.
    #[arg(long)]
    out: PathBuf,
    /// Tasks to predict: "all" or a comma list like NDVI,H,AGB.
    #[arg(long, default_value = "all")]
    tasks: String,
}

pub fn run(ctx: &Ctx, a: &PredictArgs) -> CmdResult {
    let m = checkpoint::load(&a.ckpt)?;
    let tasks = parse_tasks(&a.tasks)?;
    let x = satc::read_bands(&a.input)?;

    let (h, w) = x.shape();
    let side = m.config.input_hw;
    if h % side != 0 || w % side != 0 {
        return Err(Fail::user(format!(
            "input is {h}x{w} but the model reads {side}x{side} tiles; \
             both dims must be multiples of {side}"
        )));
    }
    let (tile_rows, tile_cols) = (h / side, w / side);
    ctx.note(format!("{}x{} tiles of {side}x{side}", tile_rows, tile_cols));

    // Forward every tile independently, then mosaic in tile order.
    let tile_maps = (0..tile_rows * tile_cols)
        .into_par_iter()
        .map(|i| {
            let (r0, c0) = ((i / tile_cols) * side, (i % tile_cols) * side);
            let tile = x.map_bands(|g| crop(g, r0, c0, side, side))?;
            forward_all(&m, &tile, &tasks)
        })
        .collect::<Result<Vec<TaskMap>, CoreError>>()?;

    fs::create_dir_all(&a.out).map_err(|e| Fail::user(format!("{}: {}", a.out.display(), e)))?;
    for &task in &tasks {
        let mut values = vec![0.0f32; h * w];
        for (i, maps) in tile_maps.iter().enumerate() {
            let (r0, c0) = ((i / tile_cols) * side, (i % tile_cols) * side);
            let tile = &maps[&task];
            for r in 0..side {
                for c in 0..side {
                    values[(r0 + r) * w + c0 + c] = tile.values()[r * side + c];
                }
            }
        }
        let map = Grid2D::new(h, w, values, vec![true; h * w])?;
        let path = a.out.join(format!("{}.satc", task.name().to_ascii_lowercase()));
        satc::write_grid(&path, &map)?;
    }
    println!(
        "{} maps ({} tiles each) written to {}",
        tasks.len(),
        tile_rows * tile_cols,
        a.out.display()
    );
    Ok(())
}
