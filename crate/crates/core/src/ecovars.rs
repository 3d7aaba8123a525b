//! Ecological variables derived from canopy height: aboveground biomass via
//! power-law allometry and carbon stock via a fixed carbon fraction.
//!
//! Biomass follows `AGB = a * H^b` with coefficients per forest type;
//! carbon stock is `CS = CF * AGB`. Scalar kernels are f64; grid wrappers
//! map them over height rasters with the usual nodata propagation.

use crate::error::{CoreError, Result};
use crate::grid::Grid2D;

/// Forest types with published allometric coefficient pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ForestType {
    Coniferous,
    Broadleaf,
    Mixed,
    /// Area-wide fallback when the stand composition is unknown.
    General,
}

impl ForestType {
    pub const ALL: [ForestType; 4] =
        [ForestType::Coniferous, ForestType::Broadleaf, ForestType::Mixed, ForestType::General];

    pub fn name(self) -> &'static str {
        match self {
            ForestType::Coniferous => "coniferous",
            ForestType::Broadleaf => "broadleaf",
            ForestType::Mixed => "mixed",
            ForestType::General => "general",
        }
    }

    pub fn parse(s: &str) -> Result<ForestType> {
        match s.to_ascii_lowercase().as_str() {
            "coniferous" => Ok(ForestType::Coniferous),
            "broadleaf" => Ok(ForestType::Broadleaf),
            "mixed" => Ok(ForestType::Mixed),
            "general" => Ok(ForestType::General),
            other => Err(CoreError::InvalidArgument(format!(
                "unknown forest type '{}' (expected coniferous, broadleaf, mixed, or general)",
                other
            ))),
        }
    }
}

/// Power-law coefficients `AGB = a * H^b` (AGB in Mg/ha, H in meters).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AllometricCoeffs {
    pub a: f64,
    pub b: f64,
}

/// Coefficients for a forest type.
pub fn coeffs_for(ft: ForestType) -> AllometricCoeffs {
    match ft {
        ForestType::Coniferous => AllometricCoeffs { a: 0.118, b: 2.53 },
        ForestType::Broadleaf => AllometricCoeffs { a: 0.052, b: 2.69 },
        ForestType::Mixed => AllometricCoeffs { a: 0.067, b: 2.58 },
        ForestType::General => AllometricCoeffs { a: 0.067, b: 2.58 },
    }
}

/// Carbon conversion parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CarbonParams {
    /// Fraction of biomass that is carbon.
    pub carbon_fraction: f64,
}

impl Default for CarbonParams {
    fn default() -> Self {
        CarbonParams { carbon_fraction: 0.47 }
    }
}

/// Biomass kernel `a * h^b`. Heights must be nonnegative; `h = 0` maps to 0.
pub fn agb_scalar(h: f64, c: &AllometricCoeffs) -> Result<f64> {
    if !(h >= 0.0) || !h.is_finite() {
        return Err(CoreError::InvalidArgument(format!(
            "height {} must be finite and nonnegative",
            h
        )));
    }
    Ok(c.a * h.powf(c.b))
}

/// Carbon kernel `cf * agb`.
pub fn cs_scalar(agb: f64, p: &CarbonParams) -> Result<f64> {
    if !(agb >= 0.0) || !agb.is_finite() {
        return Err(CoreError::InvalidArgument(format!(
            "biomass {} must be finite and nonnegative",
            agb
        )));
    }
    Ok(p.carbon_fraction * agb)
}

/// Biomass map from a height raster. Nodata propagates; any valid negative
/// height is rejected.
pub fn agb_from_height(h: &Grid2D, c: &AllometricCoeffs) -> Result<Grid2D> {
    let mut err = None;
    let out = h.map_valid(|v| {
        if err.is_some() {
            return None;
        }
        match agb_scalar(v as f64, c) {
            Ok(a) => Some(a as f32),
            Err(e) => {
                err = Some(e);
                None
            }
        }
    })?;
    match err {
        Some(e) => Err(e),
        None => Ok(out),
    }
}

/// Carbon-stock map from a biomass raster.
pub fn carbon_stock(agb: &Grid2D, p: &CarbonParams) -> Result<Grid2D> {
    let mut err = None;
    let out = agb.map_valid(|v| {
        if err.is_some() {
            return None;
        }
        match cs_scalar(v as f64, p) {
            Ok(cs) => Some(cs as f32),
            Err(e) => {
                err = Some(e);
                None
            }
        }
    })?;
    match err {
        Some(e) => Err(e),
        None => Ok(out),
    }
}

/// Cap a height raster at `cap` meters (values above are clamped, validity
/// unchanged). Used during dataset construction to keep targets inside the
/// evaluated height regime.
pub fn cap_height(h: &Grid2D, cap: f32) -> Result<Grid2D> {
    if !(cap > 0.0) || !cap.is_finite() {
        return Err(CoreError::InvalidArgument(format!("height cap {} must be positive", cap)));
    }
    h.map_valid(|v| Some(v.min(cap)))
}
