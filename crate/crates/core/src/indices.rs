//! Spectral vegetation and water indices over four-band reflectance stacks.
//!
//! All formulas are ratios of linear band combinations. Each has a scalar
//! f64 kernel (`*_scalar`) that returns `None` when the denominator is
//! degenerate, and a grid-level wrapper that maps the kernel over a
//! [`BandStack`], turning degenerate pixels into nodata. Grid results store
//! f32 like every raster; the kernels are the precision reference.
//!
//! Index values are reported as the formulas produce them — no clipping to
//! [-1, 1] is applied (EVI and SAVI can leave that interval on real data,
//! and clipped values would corrupt training targets).

use crate::error::{CoreError, Result};
use crate::grid::{Band, BandStack, Grid2D};

/// Tuning constants shared by the index formulas.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndexParams {
    /// Soil-adjustment term in SAVI's denominator and `1 + L` factor.
    pub savi_l: f64,
    /// EVI gain.
    pub evi_g: f64,
    /// EVI red-band coefficient.
    pub evi_c1: f64,
    /// EVI blue-band coefficient.
    pub evi_c2: f64,
    /// EVI canopy background term.
    pub evi_l: f64,
    /// Denominators with magnitude below this are treated as degenerate.
    pub denom_eps: f64,
}

impl Default for IndexParams {
    fn default() -> Self {
        IndexParams {
            savi_l: 0.5,
            evi_g: 2.5,
            evi_c1: 6.0,
            evi_c2: 7.5,
            evi_l: 1.0,
            denom_eps: 1e-8,
        }
    }
}

/// The five spectral indices this crate computes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum IndexKind {
    Ndvi,
    Gndvi,
    Savi,
    Evi,
    Ndwi,
}

impl IndexKind {
    pub const ALL: [IndexKind; 5] =
        [IndexKind::Ndvi, IndexKind::Gndvi, IndexKind::Savi, IndexKind::Evi, IndexKind::Ndwi];

    pub fn name(self) -> &'static str {
        match self {
            IndexKind::Ndvi => "NDVI",
            IndexKind::Gndvi => "GNDVI",
            IndexKind::Savi => "SAVI",
            IndexKind::Evi => "EVI",
            IndexKind::Ndwi => "NDWI",
        }
    }

    /// Parse a case-insensitive index name.
    pub fn parse(s: &str) -> Result<IndexKind> {
        match s.to_ascii_lowercase().as_str() {
            "ndvi" => Ok(IndexKind::Ndvi),
            "gndvi" => Ok(IndexKind::Gndvi),
            "savi" => Ok(IndexKind::Savi),
            "evi" => Ok(IndexKind::Evi),
            "ndwi" => Ok(IndexKind::Ndwi),
            other => Err(CoreError::InvalidArgument(format!(
                "unknown index '{}' (expected ndvi, gndvi, savi, evi, or ndwi)",
                other
            ))),
        }
    }
}

/// Normalized difference `(a - b) / (a + b)`; `None` when `|a + b| < eps`.
pub fn normalized_difference_scalar(a: f64, b: f64, eps: f64) -> Option<f64> {
    let denom = a + b;
    if denom.abs() < eps {
        None
    } else {
        Some((a - b) / denom)
    }
}

/// NDVI kernel: `(nir - red) / (nir + red)`.
pub fn ndvi_scalar(nir: f64, red: f64, eps: f64) -> Option<f64> {
    normalized_difference_scalar(nir, red, eps)
}

/// GNDVI kernel: `(nir - green) / (nir + green)`.
pub fn gndvi_scalar(nir: f64, green: f64, eps: f64) -> Option<f64> {
    normalized_difference_scalar(nir, green, eps)
}

/// SAVI kernel: `(nir - red) * (1 + L) / (nir + red + L)`.
pub fn savi_scalar(nir: f64, red: f64, p: &IndexParams) -> Option<f64> {
    let denom = nir + red + p.savi_l;
    if denom.abs() < p.denom_eps {
        None
    } else {
        Some((nir - red) * (1.0 + p.savi_l) / denom)
    }
}

/// EVI kernel: `G * (nir - red) / (nir + C1*red - C2*blue + L)`.
pub fn evi_scalar(nir: f64, red: f64, blue: f64, p: &IndexParams) -> Option<f64> {
    let denom = nir + p.evi_c1 * red - p.evi_c2 * blue + p.evi_l;
    if denom.abs() < p.denom_eps {
        None
    } else {
        Some(p.evi_g * (nir - red) / denom)
    }
}

/// NDWI kernel: `(green - nir) / (green + nir)`.
pub fn ndwi_scalar(green: f64, nir: f64, eps: f64) -> Option<f64> {
    normalized_difference_scalar(green, nir, eps)
}

/// Evaluate one index kernel on scalar band reflectances.
pub fn index_scalar(kind: IndexKind, blue: f64, green: f64, red: f64, nir: f64, p: &IndexParams) -> Option<f64> {
    match kind {
        IndexKind::Ndvi => ndvi_scalar(nir, red, p.denom_eps),
        IndexKind::Gndvi => gndvi_scalar(nir, green, p.denom_eps),
        IndexKind::Savi => savi_scalar(nir, red, p),
        IndexKind::Evi => evi_scalar(nir, red, blue, p),
        IndexKind::Ndwi => ndwi_scalar(green, nir, p.denom_eps),
    }
}

/// Pixelwise normalized difference of two co-registered grids. Output is
/// nodata where either input is nodata or the denominator is degenerate.
pub fn normalized_difference(a: &Grid2D, b: &Grid2D, eps: f64) -> Result<Grid2D> {
    if a.shape() != b.shape() {
        return Err(CoreError::ShapeMismatch(format!(
            "normalized difference needs matching shapes, got {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let n = a.len();
    let mut values = vec![0.0f32; n];
    let mut valid = vec![false; n];
    for i in 0..n {
        if a.valid()[i] && b.valid()[i] {
            if let Some(v) = normalized_difference_scalar(a.values()[i] as f64, b.values()[i] as f64, eps) {
                values[i] = v as f32;
                valid[i] = true;
            }
        }
    }
    Grid2D::new(a.height(), a.width(), values, valid)
}

fn map_stack(
    x: &BandStack,
    mut kernel: impl FnMut(f64, f64, f64, f64) -> Option<f64>,
) -> Result<Grid2D> {
    let (h, w) = x.shape();
    let n = h * w;
    let blue = x.band(Band::B2).values();
    let green = x.band(Band::B3).values();
    let red = x.band(Band::B4).values();
    let nir = x.band(Band::B8).values();
    let mask = x.valid();
    let mut values = vec![0.0f32; n];
    let mut valid = vec![false; n];
    for i in 0..n {
        if mask[i] {
            if let Some(v) = kernel(blue[i] as f64, green[i] as f64, red[i] as f64, nir[i] as f64) {
                values[i] = v as f32;
                valid[i] = true;
            }
        }
    }
    Grid2D::new(h, w, values, valid)
}

/// NDVI map of a band stack.
pub fn ndvi(x: &BandStack, p: &IndexParams) -> Result<Grid2D> {
    map_stack(x, |_, _, red, nir| ndvi_scalar(nir, red, p.denom_eps))
}

/// GNDVI map of a band stack.
pub fn gndvi(x: &BandStack, p: &IndexParams) -> Result<Grid2D> {
    map_stack(x, |_, green, _, nir| gndvi_scalar(nir, green, p.denom_eps))
}

/// SAVI map of a band stack.
pub fn savi(x: &BandStack, p: &IndexParams) -> Result<Grid2D> {
    map_stack(x, |_, _, red, nir| savi_scalar(nir, red, p))
}

/// EVI map of a band stack.
pub fn evi(x: &BandStack, p: &IndexParams) -> Result<Grid2D> {
    map_stack(x, |blue, _, red, nir| evi_scalar(nir, red, blue, p))
}

/// NDWI map of a band stack.
pub fn ndwi(x: &BandStack, p: &IndexParams) -> Result<Grid2D> {
    map_stack(x, |_, green, _, nir| ndwi_scalar(green, nir, p.denom_eps))
}

/// Compute any of the five index maps.
pub fn compute_index(x: &BandStack, kind: IndexKind, p: &IndexParams) -> Result<Grid2D> {
    map_stack(x, |blue, green, red, nir| index_scalar(kind, blue, green, red, nir, p))
}
