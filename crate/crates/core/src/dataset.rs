//! Paired multi-task samples: synthetic scenes, target construction,
//! patch extraction, augmentation, and train/val/test manifests.
//!
//! A [`Sample`] couples a four-band patch with eight target maps — the five
//! spectral indices plus canopy height, biomass, and carbon stock — and a
//! loss mask that is the conjunction of every constituent validity mask.
//! Index targets are always *rebuilt* from bands (never interpolated), so
//! the defining consistency `NDVI == (B8-B4)/(B8+B4)` etc. holds bit-exactly
//! on every stored and augmented sample.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;

use crate::ecovars::{agb_from_height, carbon_stock, coeffs_for, AllometricCoeffs, CarbonParams, ForestType};
use crate::error::{CoreError, Result};
use crate::grid::{center_fit, crop, resample_bilinear, rotate90, BandStack, Grid2D};
use crate::indices::{compute_index, IndexKind, IndexParams};
use crate::rng::{chacha, mix, value_noise};
use crate::satc;

/// The eight prediction tasks, in fixed ordinal order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TaskId {
    Ndvi = 0,
    Gndvi = 1,
    Savi = 2,
    Evi = 3,
    Ndwi = 4,
    Height = 5,
    Agb = 6,
    Cs = 7,
}

impl TaskId {
    pub const ALL: [TaskId; 8] = [
        TaskId::Ndvi,
        TaskId::Gndvi,
        TaskId::Savi,
        TaskId::Evi,
        TaskId::Ndwi,
        TaskId::Height,
        TaskId::Agb,
        TaskId::Cs,
    ];

    pub fn ordinal(self) -> usize {
        self as usize
    }

    pub fn from_ordinal(i: usize) -> Option<TaskId> {
        TaskId::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            TaskId::Ndvi => "NDVI",
            TaskId::Gndvi => "GNDVI",
            TaskId::Savi => "SAVI",
            TaskId::Evi => "EVI",
            TaskId::Ndwi => "NDWI",
            TaskId::Height => "H",
            TaskId::Agb => "AGB",
            TaskId::Cs => "CS",
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            TaskId::Height => "m",
            TaskId::Agb => "t/ha",
            TaskId::Cs => "tC/ha",
            _ => "unitless",
        }
    }

    pub fn parse(s: &str) -> Result<TaskId> {
        let lower = s.to_ascii_lowercase();
        for t in TaskId::ALL {
            if lower == t.name().to_ascii_lowercase() {
                return Ok(t);
            }
        }
        Err(CoreError::InvalidArgument(format!(
            "unknown task '{}' (expected one of ndvi, gndvi, savi, evi, ndwi, h, agb, cs)",
            s
        )))
    }
}

/// Per-task grids, ordered by task ordinal.
pub type TaskMap = BTreeMap<TaskId, Grid2D>;

/// Everything needed to (re)build targets from bands and height: index
/// constants, allometric coefficients, and the carbon fraction. Stored in
/// the manifest so augmentation reproduces the dataset's own targets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetParams {
    pub index: IndexParams,
    pub coeffs: AllometricCoeffs,
    pub carbon: CarbonParams,
}

impl Default for TargetParams {
    fn default() -> Self {
        TargetParams {
            index: IndexParams::default(),
            coeffs: coeffs_for(ForestType::General),
            carbon: CarbonParams::default(),
        }
    }
}

impl TargetParams {
    /// Key/value form for manifest embedding. f64 values use Rust's
    /// shortest round-trip formatting, so read-back is exact.
    pub fn to_kv(&self) -> Vec<(String, String)> {
        vec![
            ("savi_l".into(), self.index.savi_l.to_string()),
            ("evi_g".into(), self.index.evi_g.to_string()),
            ("evi_c1".into(), self.index.evi_c1.to_string()),
            ("evi_c2".into(), self.index.evi_c2.to_string()),
            ("evi_l".into(), self.index.evi_l.to_string()),
            ("denom_eps".into(), self.index.denom_eps.to_string()),
            ("allom_a".into(), self.coeffs.a.to_string()),
            ("allom_b".into(), self.coeffs.b.to_string()),
            ("carbon_fraction".into(), self.carbon.carbon_fraction.to_string()),
        ]
    }

    /// Rebuild from manifest key/value pairs; missing keys keep defaults.
    pub fn from_kv(kv: &[(String, String)]) -> Result<TargetParams> {
        let mut p = TargetParams::default();
        for (k, v) in kv {
            let parsed = |v: &str| -> Result<f64> {
                v.parse::<f64>().map_err(|_| {
                    CoreError::InvalidArgument(format!("bad numeric value '{}' for parameter {}", v, k))
                })
            };
            match k.as_str() {
                "savi_l" => p.index.savi_l = parsed(v)?,
                "evi_g" => p.index.evi_g = parsed(v)?,
                "evi_c1" => p.index.evi_c1 = parsed(v)?,
                "evi_c2" => p.index.evi_c2 = parsed(v)?,
                "evi_l" => p.index.evi_l = parsed(v)?,
                "denom_eps" => p.index.denom_eps = parsed(v)?,
                "allom_a" => p.coeffs.a = parsed(v)?,
                "allom_b" => p.coeffs.b = parsed(v)?,
                "carbon_fraction" => p.carbon.carbon_fraction = parsed(v)?,
                _ => {}
            }
        }
        Ok(p)
    }
}

/// One training sample: a band patch, eight targets, and the joint loss mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    id: String,
    x: BandStack,
    y: TaskMap,
    loss_mask: Vec<bool>,
}

impl Sample {
    /// Assemble and validate: all eight targets present, every grid at the
    /// patch shape. The loss mask is computed here as the conjunction of the
    /// band mask and all eight target masks.
    pub fn new(id: String, x: BandStack, y: TaskMap) -> Result<Sample> {
        let shape = x.shape();
        for t in TaskId::ALL {
            match y.get(&t) {
                None => {
                    return Err(CoreError::InvalidArgument(format!(
                        "sample {} is missing target {}",
                        id,
                        t.name()
                    )))
                }
                Some(g) if g.shape() != shape => {
                    return Err(CoreError::ShapeMismatch(format!(
                        "sample {}: target {} is {:?}, bands are {:?}",
                        id,
                        t.name(),
                        g.shape(),
                        shape
                    )))
                }
                _ => {}
            }
        }
        let n = shape.0 * shape.1;
        let mut loss_mask = x.valid().to_vec();
        for t in TaskId::ALL {
            let m = y[&t].valid();
            for i in 0..n {
                loss_mask[i] = loss_mask[i] && m[i];
            }
        }
        Ok(Sample { id, x, y, loss_mask })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn x(&self) -> &BandStack {
        &self.x
    }

    pub fn y(&self) -> &TaskMap {
        &self.y
    }

    pub fn target(&self, t: TaskId) -> &Grid2D {
        &self.y[&t]
    }

    /// Joint validity of bands and all targets, row-major.
    pub fn loss_mask(&self) -> &[bool] {
        &self.loss_mask
    }

    pub fn shape(&self) -> (usize, usize) {
        self.x.shape()
    }
}

/// Augmentation policy: quarter-turn rotations and uniform rescaling.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentSpec {
    pub enabled: bool,
    /// Inclusive scale bounds, e.g. (0.5, 2.0).
    pub scale_range: (f64, f64),
    /// Allowed quarter-turn counts, each in 0..4.
    pub rotations: Vec<u32>,
}

impl Default for AugmentSpec {
    fn default() -> Self {
        AugmentSpec { enabled: false, scale_range: (0.5, 2.0), rotations: vec![0, 1, 2, 3] }
    }
}

impl AugmentSpec {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.scale_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(CoreError::InvalidArgument(format!(
                "scale range ({}, {}) must satisfy 0 < low <= high < inf",
                lo, hi
            )));
        }
        if self.rotations.is_empty() || self.rotations.iter().any(|&k| k >= 4) {
            return Err(CoreError::InvalidArgument(
                "rotations must be a non-empty subset of {0,1,2,3}".into(),
            ));
        }
        Ok(())
    }
}

/// Synthesize a deterministic desk-scale scene: four reflectance bands in
/// [0, 1] and a canopy-height raster in [0, 60] m, both spatially smooth
/// (fractal value noise) with vegetation, bare-soil, and water structure.
/// Every pixel is valid. Pure function of `(seed, h, w)`.
pub fn synth_scene(seed: u64, h: usize, w: usize) -> Result<(BandStack, Grid2D)> {
    if h < 8 || w < 8 {
        return Err(CoreError::InvalidArgument(format!(
            "scene {}x{} too small; both dims must be >= 8",
            h, w
        )));
    }
    let cell = (h.max(w) as f64 / 4.0).max(2.0);
    // Stretch a noise field around its center so the full [0, 1] range is
    // actually exercised (octave sums concentrate near 0.5).
    let stretch = |v: f64| ((v - 0.5) * 2.2 + 0.5).clamp(0.0, 1.0);
    let n = h * w;
    let mut b = [vec![0.0f32; n], vec![0.0f32; n], vec![0.0f32; n], vec![0.0f32; n]];
    let mut height = vec![0.0f32; n];
    for r in 0..h {
        for c in 0..w {
            let (x, y) = (c as f64, r as f64);
            let veg = stretch(value_noise(mix(seed, 1), x, y, cell, 4, 0.5));
            let moist = stretch(value_noise(mix(seed, 2), x, y, cell, 4, 0.5));
            let soil = stretch(value_noise(mix(seed, 3), x, y, cell, 4, 0.5));
            let water = moist > 0.82;
            // Reflectances: vegetated pixels are dark in red and bright in
            // NIR; bare soil lifts all bands; water darkens NIR sharply.
            let mut b2 = 0.04 + 0.06 * soil + 0.03 * (1.0 - veg);
            let mut b3 = 0.05 + 0.08 * soil + 0.07 * veg;
            let mut b4 = 0.03 + 0.22 * soil * (1.0 - 0.8 * veg) + 0.02 * veg;
            let mut b8 = 0.08 + 0.50 * veg + 0.12 * soil * (1.0 - veg);
            let mut hgt = 58.0 * veg.powf(1.8) * (0.55 + 0.45 * moist);
            if water {
                b2 += 0.02;
                b3 += 0.04;
                b4 *= 0.5;
                b8 *= 0.25;
                hgt = 0.0;
            }
            let i = r * w + c;
            b[0][i] = b2.clamp(0.0, 1.0) as f32;
            b[1][i] = b3.clamp(0.0, 1.0) as f32;
            b[2][i] = b4.clamp(0.0, 1.0) as f32;
            b[3][i] = b8.clamp(0.0, 1.0) as f32;
            height[i] = hgt.clamp(0.0, 60.0) as f32;
        }
    }
    let all = vec![true; n];
    let [b2, b3, b4, b8] = b;
    let bands = BandStack::new(
        [
            Grid2D::new(h, w, b2, all.clone())?,
            Grid2D::new(h, w, b3, all.clone())?,
            Grid2D::new(h, w, b4, all.clone())?,
            Grid2D::new(h, w, b8, all.clone())?,
        ],
        BandStack::DEFAULT_RESOLUTION_M,
    )?;
    let height = Grid2D::new(h, w, height, all)?;
    Ok((bands, height))
}

/// Build the eight target maps for a band stack and height raster: five
/// indices from the bands, height passed through unchanged, biomass from
/// height, and carbon from biomass.
pub fn build_targets(
    x: &BandStack,
    h: &Grid2D,
    p: &IndexParams,
    c: &AllometricCoeffs,
    cp: &CarbonParams,
) -> Result<TaskMap> {
    if x.shape() != h.shape() {
        return Err(CoreError::ShapeMismatch(format!(
            "bands {:?} and height {:?} must share dims",
            x.shape(),
            h.shape()
        )));
    }
    let mut y = TaskMap::new();
    y.insert(TaskId::Ndvi, compute_index(x, IndexKind::Ndvi, p)?);
    y.insert(TaskId::Gndvi, compute_index(x, IndexKind::Gndvi, p)?);
    y.insert(TaskId::Savi, compute_index(x, IndexKind::Savi, p)?);
    y.insert(TaskId::Evi, compute_index(x, IndexKind::Evi, p)?);
    y.insert(TaskId::Ndwi, compute_index(x, IndexKind::Ndwi, p)?);
    y.insert(TaskId::Height, h.clone());
    let agb = agb_from_height(h, c)?;
    y.insert(TaskId::Cs, carbon_stock(&agb, cp)?);
    y.insert(TaskId::Agb, agb);
    Ok(y)
}

const PATCH_RETRY_BUDGET: u32 = 100;

/// Cut `n` random patches from a scene. Offsets are uniform and seeded per
/// sample via a mix of `seed` and the sample index, so the result does not
/// depend on iteration order. Patches whose loss-mask nodata fraction
/// exceeds `max_nodata_frac` are redrawn, up to a bounded retry budget.
pub fn extract_patches(
    x: &BandStack,
    h: &Grid2D,
    patch: usize,
    n: usize,
    seed: u64,
    max_nodata_frac: f64,
    params: &TargetParams,
) -> Result<Vec<Sample>> {
    let (sh, sw) = x.shape();
    if patch == 0 || patch > sh || patch > sw {
        return Err(CoreError::InvalidArgument(format!(
            "patch {} must be in 1..=min(scene dims {}x{})",
            patch, sh, sw
        )));
    }
    if !(0.0..1.0).contains(&max_nodata_frac) {
        return Err(CoreError::InvalidArgument(format!(
            "max_nodata_frac {} must lie in [0, 1)",
            max_nodata_frac
        )));
    }
    // Build targets once on the full scene; per-pixel formulas make the
    // crop of the full-scene target equal the target of the crop.
    let y_full = build_targets(x, h, &params.index, &params.coeffs, &params.carbon)?;
    let mut full_mask = x.valid().to_vec();
    for t in TaskId::ALL {
        for (m, &v) in full_mask.iter_mut().zip(y_full[&t].valid()) {
            *m = *m && v;
        }
    }
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = chacha(mix(seed, i as u64));
        let mut placed = None;
        for _ in 0..PATCH_RETRY_BUDGET {
            let r0 = rng.gen_range(0..=sh - patch);
            let c0 = rng.gen_range(0..=sw - patch);
            let mut bad = 0usize;
            for r in r0..r0 + patch {
                for c in c0..c0 + patch {
                    if !full_mask[r * sw + c] {
                        bad += 1;
                    }
                }
            }
            if bad as f64 / (patch * patch) as f64 <= max_nodata_frac {
                placed = Some((r0, c0));
                break;
            }
        }
        let (r0, c0) = placed.ok_or_else(|| {
            CoreError::EmptySupport(format!(
                "no patch with nodata fraction <= {} found in {} tries (sample {})",
                max_nodata_frac, PATCH_RETRY_BUDGET, i
            ))
        })?;
        let xb = x.map_bands(|g| crop(g, r0, c0, patch, patch))?;
        let mut y = TaskMap::new();
        for t in TaskId::ALL {
            y.insert(t, crop(&y_full[&t], r0, c0, patch, patch)?);
        }
        out.push(Sample::new(format!("s{:05}", i), xb, y)?);
    }
    Ok(out)
}

/// Apply one seeded augmentation draw to a sample: a quarter-turn rotation
/// and a uniform rescale, both applied to bands and height; the patch is
/// then center-cropped/padded back to its original shape, index targets are
/// rebuilt from the transformed bands, and biomass/carbon are rebuilt from
/// the transformed height. With `spec.enabled == false` the sample is
/// returned unchanged.
pub fn augment(s: &Sample, spec: &AugmentSpec, seed: u64, params: &TargetParams) -> Result<Sample> {
    spec.validate()?;
    if !spec.enabled {
        return Ok(s.clone());
    }
    let mut rng = chacha(seed);
    let k = spec.rotations[rng.gen_range(0..spec.rotations.len())];
    let scale = rng.gen_range(spec.scale_range.0..=spec.scale_range.1);
    let (ph, pw) = s.shape();
    let transform = |g: &Grid2D| -> Result<Grid2D> {
        let rotated = rotate90(g, k);
        let (rh, rw) = rotated.shape();
        let nh = ((rh as f64 * scale).round() as usize).max(1);
        let nw = ((rw as f64 * scale).round() as usize).max(1);
        let scaled = if (nh, nw) == (rh, rw) { rotated } else { resample_bilinear(&rotated, nh, nw)? };
        center_fit(&scaled, ph, pw)
    };
    let xb = s.x().map_bands(|g| transform(g))?;
    let hgt = transform(s.target(TaskId::Height))?;
    let y = build_targets(&xb, &hgt, &params.index, &params.coeffs, &params.carbon)?;
    Sample::new(s.id().to_string(), xb, y)
}

/// Split tag of a manifest record.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Result<Split> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(CoreError::InvalidArgument(format!("unknown split tag '{}'", other))),
        }
    }
}

/// Assign splits to `n` records: seeded shuffle, then contiguous partition
/// with counts rounded from the fractions (clamped so they sum to `n`).
/// Returned in record order (index i's split), independent of the shuffle's
/// internal order.
pub fn assign_splits(n: usize, fractions: (f64, f64, f64), seed: u64) -> Result<Vec<Split>> {
    let (ft, fv, fs) = fractions;
    if !(ft >= 0.0 && fv >= 0.0 && fs >= 0.0) || (ft + fv + fs - 1.0).abs() > 1e-9 {
        return Err(CoreError::InvalidArgument(format!(
            "split fractions ({}, {}, {}) must be nonnegative and sum to 1",
            ft, fv, fs
        )));
    }
    let n_train = ((ft * n as f64).round() as usize).min(n);
    let n_val = ((fv * n as f64).round() as usize).min(n - n_train);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut chacha(mix(seed, 0x5117)));
    let mut out = vec![Split::Test; n];
    for (pos, &idx) in order.iter().enumerate() {
        out[idx] = if pos < n_train {
            Split::Train
        } else if pos < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        };
    }
    Ok(out)
}

/// One line of a manifest: a sample id, its split, and the relative paths
/// (forward-slash form) of its band stack, loss mask, and eight targets.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRecord {
    pub id: String,
    pub split: Split,
    pub bands: String,
    pub loss_mask: String,
    pub targets: [String; 8],
}

/// Dataset manifest: creation parameters plus one record per sample. All
/// paths are relative to the manifest's own directory.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub seed: u64,
    pub patch_size: u32,
    /// Creation parameters as ordered key/value pairs (target params,
    /// nodata threshold, source names, ...).
    pub params: Vec<(String, String)>,
    pub records: Vec<ManifestRecord>,
}

pub const MANIFEST_NAME: &str = "manifest.tsv";

impl Manifest {
    /// Records with a given split tag, in manifest order.
    pub fn split_records(&self, split: Split) -> Vec<&ManifestRecord> {
        self.records.iter().filter(|r| r.split == split).collect()
    }

    /// Target-construction parameters embedded at build time.
    pub fn target_params(&self) -> Result<TargetParams> {
        TargetParams::from_kv(&self.params)
    }

    /// Serialize to the tab-separated text form.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("# satcalc-manifest\tv1\n");
        out.push_str(&format!("# seed\t{}\n", self.seed));
        out.push_str(&format!("# patch_size\t{}\n", self.patch_size));
        for (k, v) in &self.params {
            out.push_str(&format!("# param\t{}\t{}\n", k, v));
        }
        out.push_str("# columns\tid\tsplit\tbands\tloss_mask\tNDVI\tGNDVI\tSAVI\tEVI\tNDWI\tH\tAGB\tCS\n");
        for r in &self.records {
            out.push_str(&format!("{}\t{}\t{}\t{}", r.id, r.split.name(), r.bands, r.loss_mask));
            for t in &r.targets {
                out.push('\t');
                out.push_str(t);
            }
            out.push('\n');
        }
        out
    }

    /// Write `manifest.tsv` into `dir` (via temp file + rename).
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(MANIFEST_NAME);
        let tmp = dir.join(format!("{}.tmp", MANIFEST_NAME));
        fs::write(&tmp, self.to_text()).map_err(|e| CoreError::io(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| CoreError::io(&path, e))?;
        Ok(path)
    }

    /// Parse a manifest file, enforcing unique ids and well-formed rows.
    pub fn read(path: &Path) -> Result<Manifest> {
        let text = fs::read_to_string(path).map_err(|e| CoreError::io(path, e))?;
        let bad = |line_no: usize, reason: String| CoreError::BadManifest {
            path: path.to_path_buf(),
            reason: format!("line {}: {}", line_no, reason),
        };
        let mut seed = None;
        let mut patch_size = None;
        let mut params = Vec::new();
        let mut records: Vec<ManifestRecord> = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let ln = ln + 1;
            if line.is_empty() {
                continue;
            }
            if let Some(meta) = line.strip_prefix("# ") {
                let fields: Vec<&str> = meta.split('\t').collect();
                match fields[0] {
                    "satcalc-manifest" | "columns" => {}
                    "seed" => {
                        seed = Some(
                            fields
                                .get(1)
                                .and_then(|v| v.parse::<u64>().ok())
                                .ok_or_else(|| bad(ln, "bad seed".into()))?,
                        )
                    }
                    "patch_size" => {
                        patch_size = Some(
                            fields
                                .get(1)
                                .and_then(|v| v.parse::<u32>().ok())
                                .ok_or_else(|| bad(ln, "bad patch_size".into()))?,
                        )
                    }
                    "param" => {
                        if fields.len() != 3 {
                            return Err(bad(ln, "param lines need key and value".into()));
                        }
                        params.push((fields[1].to_string(), fields[2].to_string()));
                    }
                    other => return Err(bad(ln, format!("unknown metadata key '{}'", other))),
                }
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 12 {
                return Err(bad(ln, format!("expected 12 tab-separated fields, got {}", fields.len())));
            }
            for p in &fields[2..] {
                if p.starts_with('/') || p.split('/').any(|seg| seg == "..") {
                    return Err(bad(ln, format!("path '{}' must be relative without '..'", p)));
                }
            }
            let rec = ManifestRecord {
                id: fields[0].to_string(),
                split: Split::parse(fields[1]).map_err(|e| bad(ln, e.to_string()))?,
                bands: fields[2].to_string(),
                loss_mask: fields[3].to_string(),
                targets: [
                    fields[4].to_string(),
                    fields[5].to_string(),
                    fields[6].to_string(),
                    fields[7].to_string(),
                    fields[8].to_string(),
                    fields[9].to_string(),
                    fields[10].to_string(),
                    fields[11].to_string(),
                ],
            };
            if records.iter().any(|r| r.id == rec.id) {
                return Err(bad(ln, format!("duplicate sample id '{}'", rec.id)));
            }
            records.push(rec);
        }
        Ok(Manifest {
            seed: seed.ok_or_else(|| bad(0, "missing seed metadata".into()))?,
            patch_size: patch_size.ok_or_else(|| bad(0, "missing patch_size metadata".into()))?,
            params,
            records,
        })
    }

    /// Check that every referenced file (and mask companion where one is
    /// implied) exists under `dir`.
    pub fn validate_files(&self, dir: &Path) -> Result<()> {
        for r in &self.records {
            let mut paths = vec![r.bands.clone(), r.loss_mask.clone()];
            paths.extend(r.targets.iter().cloned());
            for rel in paths {
                let p = dir.join(&rel);
                if !p.exists() {
                    return Err(CoreError::BadManifest {
                        path: dir.join(MANIFEST_NAME),
                        reason: format!("referenced file {} does not exist", rel),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Write a sample's rasters under `dir/samples/<id>/` and return the
/// corresponding record paths (relative to `dir`, forward slashes).
pub fn write_sample(dir: &Path, s: &Sample, split: Split) -> Result<ManifestRecord> {
    let sub = dir.join("samples").join(s.id());
    fs::create_dir_all(&sub).map_err(|e| CoreError::io(&sub, e))?;
    let rel = |name: &str| format!("samples/{}/{}", s.id(), name);
    satc::write_bands(&sub.join("bands.satc"), s.x())?;
    let (h, w) = s.shape();
    satc::write_tensor_bool(&sub.join("loss_mask.satc"), &[h as u32, w as u32], s.loss_mask())?;
    let mut targets: Vec<String> = Vec::with_capacity(8);
    for t in TaskId::ALL {
        let name = format!("{}.satc", t.name().to_ascii_lowercase());
        satc::write_grid(&sub.join(&name), s.target(t))?;
        targets.push(rel(&name));
    }
    let targets: [String; 8] = targets.try_into().expect("eight targets");
    Ok(ManifestRecord {
        id: s.id().to_string(),
        split,
        bands: rel("bands.satc"),
        loss_mask: rel("loss_mask.satc"),
        targets,
    })
}

/// Load a sample from its manifest record. The stored loss mask must match
/// the recomputed conjunction of constituent masks.
pub fn load_sample(dir: &Path, rec: &ManifestRecord) -> Result<Sample> {
    let x = satc::read_bands(&dir.join(&rec.bands))?;
    let mut y = TaskMap::new();
    for (t, p) in TaskId::ALL.iter().zip(&rec.targets) {
        y.insert(*t, satc::read_grid(&dir.join(p))?);
    }
    let s = Sample::new(rec.id.clone(), x, y)?;
    let lm_path = dir.join(&rec.loss_mask);
    let (dims, stored) = satc::read_tensor_bool(&lm_path)?;
    let (h, w) = s.shape();
    if dims != [h as u32, w as u32] {
        return Err(CoreError::BadTensor {
            path: lm_path,
            reason: format!("loss mask dims {:?} do not match patch {}x{}", dims, h, w),
        });
    }
    if stored != s.loss_mask() {
        return Err(CoreError::BadTensor {
            path: lm_path,
            reason: "stored loss mask disagrees with the conjunction of band and target masks".into(),
        });
    }
    Ok(s)
}
