//! `satcalc indices compute`: one spectral index map from a band stack.

use std::path::PathBuf;

use satcalc_core::indices::{compute_index, IndexKind};
use satcalc_core::satc;

use super::IndexParamArgs;
use crate::util::{CmdResult, Ctx};

#[derive(clap::Subcommand, Debug)]
pub enum IndicesCmd {
    /// Compute one index map from a four-band stack file.
    Compute(ComputeArgs),
}

#[derive(clap::Args, Debug)]
pub struct ComputeArgs {
    /// Input band stack (.satc).
    #[arg(long = "in")]
    input: PathBuf,
    /// Index to compute: ndvi, gndvi, savi, evi, or ndwi.
    #[arg(long)]
    kind: String,
    /// Output map path (.satc).
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    params: IndexParamArgs,
}

pub fn run(ctx: &Ctx, cmd: &IndicesCmd) -> CmdResult {
    let IndicesCmd::Compute(a) = cmd;
    let kind = IndexKind::parse(&a.kind)?;
    let x = satc::read_bands(&a.input)?;
    let map = compute_index(&x, kind, &a.params.to_params())?;
    satc::write_grid(&a.out, &map)?;
    ctx.note(format!(
        "{} over {}x{} written to {}",
        kind.name(),
        map.height(),
        map.width(),
        a.out.display()
    ));
    Ok(())
}
