//! Row-major 2-D rasters with per-pixel validity, four-band reflectance
//! stacks, and the geometric transforms used by dataset augmentation.
//!
//! A [`Grid2D`] couples an `f32` value plane with a boolean validity plane of
//! the same shape. Invalid ("nodata") pixels carry no information: their
//! stored value is normalized to `0.0` at construction so that equal grids
//! are bytewise equal and file round trips are exact. Every operation in the
//! crate propagates validity explicitly; no sentinel values are used.

use crate::error::{CoreError, Result};

/// Wavelengths (nm) of the four bands in stack order: blue, green, red, NIR.
pub const WAVELENGTHS_NM: [u32; 4] = [490, 560, 665, 842];

/// Band identifiers for a [`BandStack`], in storage order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Band {
    /// Blue, 490 nm.
    B2 = 0,
    /// Green, 560 nm.
    B3 = 1,
    /// Red, 665 nm.
    B4 = 2,
    /// Near infrared, 842 nm.
    B8 = 3,
}

impl Band {
    pub const ALL: [Band; 4] = [Band::B2, Band::B3, Band::B4, Band::B8];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn wavelength_nm(self) -> u32 {
        WAVELENGTHS_NM[self.index()]
    }

    pub fn name(self) -> &'static str {
        match self {
            Band::B2 => "B2",
            Band::B3 => "B3",
            Band::B4 => "B4",
            Band::B8 => "B8",
        }
    }
}

/// A single-band raster: row-major `f32` values plus a validity mask.
///
/// Invariants, enforced at construction and preserved by every method:
/// * `values.len() == valid.len() == height * width`;
/// * every value at a valid pixel is finite;
/// * every value at an invalid pixel is exactly `0.0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid2D {
    height: usize,
    width: usize,
    values: Vec<f32>,
    valid: Vec<bool>,
}

impl Grid2D {
    /// Build a grid from raw planes, validating the invariants above.
    /// Values at invalid pixels are normalized to `0.0`.
    pub fn new(height: usize, width: usize, values: Vec<f32>, valid: Vec<bool>) -> Result<Self> {
        let n = height
            .checked_mul(width)
            .ok_or_else(|| CoreError::InvalidArgument("grid dimensions overflow".into()))?;
        if values.len() != n || valid.len() != n {
            return Err(CoreError::ShapeMismatch(format!(
                "grid {}x{} needs {} elements, got {} values / {} flags",
                height,
                width,
                n,
                values.len(),
                valid.len()
            )));
        }
        let mut values = values;
        for i in 0..n {
            if valid[i] {
                if !values[i].is_finite() {
                    return Err(CoreError::InvalidArgument(format!(
                        "non-finite value {} at valid pixel {}",
                        values[i], i
                    )));
                }
            } else {
                values[i] = 0.0;
            }
        }
        Ok(Grid2D { height, width, values, valid })
    }

    /// Grid with every pixel valid and set to `fill`.
    pub fn filled(height: usize, width: usize, fill: f32) -> Result<Self> {
        Grid2D::new(height, width, vec![fill; height * width], vec![true; height * width])
    }

    /// Build a grid pixel by pixel; `None` marks nodata.
    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> Option<f32>) -> Result<Self> {
        let mut values = vec![0.0f32; height * width];
        let mut valid = vec![false; height * width];
        for r in 0..height {
            for c in 0..width {
                if let Some(v) = f(r, c) {
                    values[r * width + c] = v;
                    valid[r * width + c] = true;
                }
            }
        }
        Grid2D::new(height, width, values, valid)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// `(height, width)`.
    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Row-major value plane (zeros at invalid pixels).
    pub fn values(&self) -> &[f32] {
        &self.values
    }

    /// Row-major validity plane.
    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    pub fn is_valid(&self, r: usize, c: usize) -> bool {
        self.valid[r * self.width + c]
    }

    /// Value at a valid pixel, `None` at nodata.
    pub fn get(&self, r: usize, c: usize) -> Option<f32> {
        let i = r * self.width + c;
        self.valid[i].then(|| self.values[i])
    }

    /// Raw stored value (0.0 at nodata), without a validity check.
    pub fn value_at(&self, r: usize, c: usize) -> f32 {
        self.values[r * self.width + c]
    }

    pub fn count_valid(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    /// Apply `f` to each valid pixel, keeping nodata where it was.
    /// `f` returning `None` introduces new nodata (e.g. degenerate math).
    pub fn map_valid(&self, mut f: impl FnMut(f32) -> Option<f32>) -> Result<Grid2D> {
        let mut values = vec![0.0f32; self.values.len()];
        let mut valid = vec![false; self.values.len()];
        for i in 0..self.values.len() {
            if self.valid[i] {
                if let Some(v) = f(self.values[i]) {
                    values[i] = v;
                    valid[i] = true;
                }
            }
        }
        Grid2D::new(self.height, self.width, values, valid)
    }

    /// Restrict validity to `mask` (pixel stays valid only where `mask` is
    /// true). Values at newly invalid pixels are zeroed.
    pub fn masked_by(&self, mask: &[bool]) -> Result<Grid2D> {
        if mask.len() != self.values.len() {
            return Err(CoreError::ShapeMismatch(format!(
                "mask length {} does not match grid {}x{}",
                mask.len(),
                self.height,
                self.width
            )));
        }
        let valid: Vec<bool> = self.valid.iter().zip(mask).map(|(&a, &b)| a && b).collect();
        Grid2D::new(self.height, self.width, self.values.clone(), valid)
    }
}

/// Counterclockwise quarter-turn rotations of a grid.
///
/// `k` is taken modulo 4. One turn maps input pixel `(r, c)` of an `H`x`W`
/// grid to output pixel `(W-1-c, r)` of the `W`x`H` result, i.e.
/// `out[r'][c'] = in[c'][W-1-r']`. Values and validity move together, so the
/// multiset of `(value, valid)` pairs is preserved exactly.
pub fn rotate90(g: &Grid2D, k: u32) -> Grid2D {
    let k = k % 4;
    if k == 0 {
        return g.clone();
    }
    let (h, w) = g.shape();
    // One quarter turn; apply repeatedly for k in {2, 3}. The per-turn cost
    // is trivial at the raster sizes this crate works with.
    let quarter = |src: &Grid2D| {
        let (sh, sw) = src.shape();
        let mut values = vec![0.0f32; sh * sw];
        let mut valid = vec![false; sh * sw];
        // Output is sw x sh.
        for r in 0..sw {
            for c in 0..sh {
                let si = c * sw + (sw - 1 - r);
                values[r * sh + c] = src.values[si];
                valid[r * sh + c] = src.valid[si];
            }
        }
        Grid2D { height: sw, width: sh, values, valid }
    };
    let mut out = quarter(g);
    for _ in 1..k {
        out = quarter(&out);
    }
    debug_assert_eq!(out.shape(), if k % 2 == 0 { (h, w) } else { (w, h) });
    out
}

/// Bilinear resampling to a new shape with half-pixel center alignment.
///
/// Output pixel centers map to source coordinates
/// `x_src = (x_out + 0.5) * (in / out) - 0.5` (same for rows), clamped to the
/// source extent, and the value is the bilinear blend of the four surrounding
/// source pixels. If any contributor with nonzero weight is nodata the output
/// pixel is nodata — invalid values never bleed into valid output.
/// Resampling to the identical shape reproduces the input exactly.
pub fn resample_bilinear(g: &Grid2D, out_h: usize, out_w: usize) -> Result<Grid2D> {
    if out_h == 0 || out_w == 0 {
        return Err(CoreError::InvalidArgument(format!(
            "resample target {}x{} must be nonzero",
            out_h, out_w
        )));
    }
    if g.height == 0 || g.width == 0 {
        return Err(CoreError::InvalidArgument("cannot resample an empty grid".into()));
    }
    let (in_h, in_w) = g.shape();
    let mut values = vec![0.0f32; out_h * out_w];
    let mut valid = vec![false; out_h * out_w];
    let row_scale = in_h as f64 / out_h as f64;
    let col_scale = in_w as f64 / out_w as f64;
    for r in 0..out_h {
        let src_r = ((r as f64 + 0.5) * row_scale - 0.5).clamp(0.0, (in_h - 1) as f64);
        let r0 = src_r.floor() as usize;
        let r1 = (r0 + 1).min(in_h - 1);
        let fr = src_r - r0 as f64;
        for c in 0..out_w {
            let src_c = ((c as f64 + 0.5) * col_scale - 0.5).clamp(0.0, (in_w - 1) as f64);
            let c0 = src_c.floor() as usize;
            let c1 = (c0 + 1).min(in_w - 1);
            let fc = src_c - c0 as f64;
            // Corner weights; a corner with weight zero (on-grid hit or
            // clamped edge) may be nodata without poisoning the output.
            let corners = [
                (r0, c0, (1.0 - fr) * (1.0 - fc)),
                (r0, c1, (1.0 - fr) * fc),
                (r1, c0, fr * (1.0 - fc)),
                (r1, c1, fr * fc),
            ];
            let mut acc = 0.0f64;
            let mut ok = true;
            for &(rr, cc, wt) in &corners {
                if wt == 0.0 {
                    continue;
                }
                if !g.valid[rr * in_w + cc] {
                    ok = false;
                    break;
                }
                acc += wt * g.values[rr * in_w + cc] as f64;
            }
            if ok {
                values[r * out_w + c] = acc as f32;
                valid[r * out_w + c] = true;
            }
        }
    }
    Grid2D::new(out_h, out_w, values, valid)
}

/// Copy the `h`x`w` window whose top-left corner is `(r0, c0)`.
/// The window must lie fully inside the grid.
pub fn crop(g: &Grid2D, r0: usize, c0: usize, h: usize, w: usize) -> Result<Grid2D> {
    if h == 0 || w == 0 {
        return Err(CoreError::InvalidArgument("crop window must be nonzero".into()));
    }
    let r_end = r0.checked_add(h).filter(|&e| e <= g.height);
    let c_end = c0.checked_add(w).filter(|&e| e <= g.width);
    if r_end.is_none() || c_end.is_none() {
        return Err(CoreError::InvalidArgument(format!(
            "crop window {}x{} at ({}, {}) exceeds grid {}x{}",
            h, w, r0, c0, g.height, g.width
        )));
    }
    let mut values = vec![0.0f32; h * w];
    let mut valid = vec![false; h * w];
    for r in 0..h {
        let src = (r0 + r) * g.width + c0;
        values[r * w..(r + 1) * w].copy_from_slice(&g.values[src..src + w]);
        valid[r * w..(r + 1) * w].copy_from_slice(&g.valid[src..src + w]);
    }
    Grid2D::new(h, w, values, valid)
}

/// Center-fit a grid to a target shape: crop symmetrically when larger,
/// pad with nodata when smaller (per axis). Used by augmentation to bring
/// scaled patches back to the training patch size.
pub fn center_fit(g: &Grid2D, out_h: usize, out_w: usize) -> Result<Grid2D> {
    if out_h == 0 || out_w == 0 {
        return Err(CoreError::InvalidArgument("target shape must be nonzero".into()));
    }
    let (in_h, in_w) = g.shape();
    let mut values = vec![0.0f32; out_h * out_w];
    let mut valid = vec![false; out_h * out_w];
    // Overlap of the two centered rectangles, in both coordinate systems.
    let copy_h = in_h.min(out_h);
    let copy_w = in_w.min(out_w);
    let src_r0 = (in_h - copy_h) / 2;
    let src_c0 = (in_w - copy_w) / 2;
    let dst_r0 = (out_h - copy_h) / 2;
    let dst_c0 = (out_w - copy_w) / 2;
    for r in 0..copy_h {
        let src = (src_r0 + r) * in_w + src_c0;
        let dst = (dst_r0 + r) * out_w + dst_c0;
        values[dst..dst + copy_w].copy_from_slice(&g.values[src..src + copy_w]);
        valid[dst..dst + copy_w].copy_from_slice(&g.valid[src..src + copy_w]);
    }
    Grid2D::new(out_h, out_w, values, valid)
}

/// Four co-registered reflectance bands (B2, B3, B4, B8) sharing one
/// validity mask.
///
/// Construction enforces: all bands have identical shape, reflectances at
/// valid pixels are nonnegative, and validity is joint — a pixel is valid in
/// the stack only if it is valid in all four input bands (bands are re-masked
/// accordingly).
#[derive(Debug, Clone, PartialEq)]
pub struct BandStack {
    bands: [Grid2D; 4],
    resolution_m: f32,
}

impl BandStack {
    /// Default ground sampling distance in meters.
    pub const DEFAULT_RESOLUTION_M: f32 = 1.5;

    /// Assemble a stack from bands in order B2, B3, B4, B8.
    pub fn new(bands: [Grid2D; 4], resolution_m: f32) -> Result<Self> {
        let shape = bands[0].shape();
        for (b, g) in Band::ALL.iter().zip(&bands) {
            if g.shape() != shape {
                return Err(CoreError::ShapeMismatch(format!(
                    "band {} is {:?}, expected {:?}",
                    b.name(),
                    g.shape(),
                    shape
                )));
            }
        }
        if !(resolution_m > 0.0) || !resolution_m.is_finite() {
            return Err(CoreError::InvalidArgument(format!(
                "resolution {} m must be positive and finite",
                resolution_m
            )));
        }
        // Joint validity across the four bands.
        let n = bands[0].len();
        let mut joint = vec![true; n];
        for g in &bands {
            for i in 0..n {
                joint[i] = joint[i] && g.valid()[i];
            }
        }
        let mut masked = Vec::with_capacity(4);
        for (b, g) in Band::ALL.iter().zip(bands.iter()) {
            for i in 0..n {
                if joint[i] && g.values()[i] < 0.0 {
                    return Err(CoreError::InvalidArgument(format!(
                        "negative reflectance {} in band {} at pixel {}",
                        g.values()[i],
                        b.name(),
                        i
                    )));
                }
            }
            masked.push(g.masked_by(&joint)?);
        }
        let bands: [Grid2D; 4] = match masked.try_into() {
            Ok(a) => a,
            Err(_) => unreachable!("exactly four bands collected"),
        };
        Ok(BandStack { bands, resolution_m })
    }

    pub fn band(&self, b: Band) -> &Grid2D {
        &self.bands[b.index()]
    }

    pub fn bands(&self) -> &[Grid2D; 4] {
        &self.bands
    }

    pub fn resolution_m(&self) -> f32 {
        self.resolution_m
    }

    pub fn shape(&self) -> (usize, usize) {
        self.bands[0].shape()
    }

    pub fn height(&self) -> usize {
        self.bands[0].height()
    }

    pub fn width(&self) -> usize {
        self.bands[0].width()
    }

    /// Joint validity mask (identical across all four bands).
    pub fn valid(&self) -> &[bool] {
        self.bands[0].valid()
    }

    /// Apply the same grid transform to every band and reassemble.
    pub fn map_bands(&self, mut f: impl FnMut(&Grid2D) -> Result<Grid2D>) -> Result<BandStack> {
        let transformed = [
            f(&self.bands[0])?,
            f(&self.bands[1])?,
            f(&self.bands[2])?,
            f(&self.bands[3])?,
        ];
        BandStack::new(transformed, self.resolution_m)
    }
}
