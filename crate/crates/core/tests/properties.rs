// Randomized checks of the structural guarantees the rest of the pipeline
// leans on: rotations move content without changing it, resampling never
// invents values, the index kernels stay bounded and scale-free, allometry is
// monotone, error statistics obey the norm inequalities, and the tensor
// format round-trips bit-for-bit.

use proptest::collection::vec as pvec;
use proptest::prelude::*;

use satcalc_core::dataset::{assign_splits, Split};
use satcalc_core::ecovars::{agb_scalar, coeffs_for, cs_scalar, CarbonParams, ForestType};
use satcalc_core::grid::{crop, resample_bilinear, rotate90, BandStack, Grid2D};
use satcalc_core::indices::{compute_index, ndvi_scalar, IndexKind, IndexParams};
use satcalc_core::metrics::error_stats;
use satcalc_core::satc::{
    read_tensor_bool, read_tensor_f32, write_tensor_bool, write_tensor_f32,
};

/// Small grids with a random validity pattern.
fn arb_grid() -> impl Strategy<Value = Grid2D> {
    (1usize..=10, 1usize..=10).prop_flat_map(|(h, w)| {
        let n = h * w;
        (Just(h), Just(w), pvec(-100.0f32..100.0, n), pvec(any::<bool>(), n))
            .prop_map(|(h, w, values, valid)| Grid2D::new(h, w, values, valid).unwrap())
    })
}

/// Four-band stacks with reflectance-like values and a shared validity mask.
fn arb_stack() -> impl Strategy<Value = BandStack> {
    (1usize..=8, 1usize..=8).prop_flat_map(|(h, w)| {
        let n = h * w;
        (Just(h), Just(w), pvec(0.0f32..1.2, 4 * n), pvec(prop::bool::weighted(0.9), n))
    })
    .prop_map(|(h, w, values, valid)| {
        let n = h * w;
        let bands = [0usize, 1, 2, 3].map(|b| {
            Grid2D::new(h, w, values[b * n..(b + 1) * n].to_vec(), valid.clone()).unwrap()
        });
        BandStack::new(bands, 10.0).unwrap()
    })
}

/// Sorted multiset of (value bits, validity) pairs for exact content comparison.
fn content(g: &Grid2D) -> Vec<(u32, bool)> {
    let mut pairs: Vec<(u32, bool)> =
        g.values().iter().zip(g.valid()).map(|(v, &m)| (v.to_bits(), m)).collect();
    pairs.sort_unstable();
    pairs
}

fn grids_equal(a: &Grid2D, b: &Grid2D) -> bool {
    a.shape() == b.shape()
        && a.valid() == b.valid()
        && a.values().iter().zip(b.values()).all(|(x, y)| x.to_bits() == y.to_bits())
}

proptest! {
    #[test]
    fn rotation_preserves_content(g in arb_grid(), k in 0u32..8) {
        let r = rotate90(&g, k);
        if k % 2 == 0 {
            prop_assert_eq!(r.shape(), g.shape());
        } else {
            prop_assert_eq!(r.shape(), (g.width(), g.height()));
        }
        prop_assert_eq!(content(&r), content(&g));
    }

    #[test]
    fn four_rotations_are_identity(g in arb_grid()) {
        prop_assert!(grids_equal(&rotate90(&g, 4), &g));
    }

    #[test]
    fn rotations_compose(g in arb_grid(), a in 0u32..4, b in 0u32..4) {
        let two_step = rotate90(&rotate90(&g, a), b);
        prop_assert!(grids_equal(&two_step, &rotate90(&g, a + b)));
    }

    #[test]
    fn crop_commutes_with_rotation(
        g in arb_grid(),
        sel in (0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0),
    ) {
        // Derive an in-bounds window from the unit-cube draw.
        let (gh, gw) = g.shape();
        let h = 1 + (sel.0 * (gh - 1) as f64) as usize;
        let w = 1 + (sel.1 * (gw - 1) as f64) as usize;
        let r0 = (sel.2 * (gh - h) as f64) as usize;
        let c0 = (sel.3 * (gw - w) as f64) as usize;

        let crop_then_rotate = rotate90(&crop(&g, r0, c0, h, w).unwrap(), 1);
        let rotate_then_crop =
            crop(&rotate90(&g, 1), gw - c0 - w, r0, w, h).unwrap();
        prop_assert!(grids_equal(&crop_then_rotate, &rotate_then_crop));
    }

    #[test]
    fn resample_never_overshoots(
        g in arb_grid(),
        out_h in 1usize..=12,
        out_w in 1usize..=12,
    ) {
        let r = resample_bilinear(&g, out_h, out_w).unwrap();
        let valid_in: Vec<f32> = g
            .values()
            .iter()
            .zip(g.valid())
            .filter(|(_, &m)| m)
            .map(|(&v, _)| v)
            .collect();
        if valid_in.is_empty() {
            prop_assert_eq!(r.count_valid(), 0);
        } else {
            let lo = valid_in.iter().cloned().fold(f32::INFINITY, f32::min);
            let hi = valid_in.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
            for (v, &m) in r.values().iter().zip(r.valid()) {
                if m {
                    prop_assert!(lo <= *v && *v <= hi, "{} outside [{}, {}]", v, lo, hi);
                }
            }
        }
    }

    #[test]
    fn resample_to_same_shape_is_identity(g in arb_grid()) {
        let r = resample_bilinear(&g, g.height(), g.width()).unwrap();
        prop_assert!(grids_equal(&r, &g));
    }

    #[test]
    fn normalized_difference_stays_bounded(
        a in 0.0f64..1e4,
        b in 0.0f64..1e4,
    ) {
        prop_assume!(a + b > 1e-6);
        let v = ndvi_scalar(a, b, 1e-8).unwrap();
        prop_assert!((-1.0..=1.0).contains(&v), "{} out of bounds", v);
    }

    #[test]
    fn normalized_difference_ignores_scale(
        a in 1e-3f64..1e4,
        b in 1e-3f64..1e4,
        s in 0.25f64..4.0,
    ) {
        let base = ndvi_scalar(a, b, 1e-8).unwrap();
        let scaled = ndvi_scalar(s * a, s * b, 1e-8).unwrap();
        prop_assert!((base - scaled).abs() <= 1e-7, "{} vs {}", base, scaled);
    }

    #[test]
    fn index_maps_commute_with_rotation(x in arb_stack(), k in 0u32..4) {
        let p = IndexParams::default();
        let rotated = x.map_bands(|g| Ok(rotate90(g, k))).unwrap();
        for kind in IndexKind::ALL {
            let map_then_rotate = rotate90(&compute_index(&x, kind, &p).unwrap(), k);
            let rotate_then_map = compute_index(&rotated, kind, &p).unwrap();
            prop_assert!(
                grids_equal(&map_then_rotate, &rotate_then_map),
                "{:?} not equivariant under k={}",
                kind,
                k
            );
        }
    }

    #[test]
    fn biomass_is_monotone_in_height(h in 0.0f64..90.0, dh in 1e-3f64..10.0) {
        for ft in ForestType::ALL {
            let c = coeffs_for(ft);
            let low = agb_scalar(h, &c).unwrap();
            let high = agb_scalar(h + dh, &c).unwrap();
            prop_assert!(high > low, "{:?}: {} !> {}", ft, high, low);
        }
    }

    #[test]
    fn carbon_is_proportional_to_biomass(agb in 0.0f64..1e4) {
        let p = CarbonParams::default();
        let cs = cs_scalar(agb, &p).unwrap();
        prop_assert_eq!(cs, p.carbon_fraction * agb);
    }

    #[test]
    fn error_statistics_obey_norm_order(
        pairs in pvec((-100.0f64..100.0, -100.0f64..100.0), 1..50),
    ) {
        let pred: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let gt: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let s = error_stats(&pred, &gt).unwrap();
        prop_assert!(s.mae >= 0.0);
        prop_assert!(s.rmse + 1e-9 >= s.mae, "rmse {} < mae {}", s.rmse, s.mae);
        prop_assert!(s.rmse + 1e-9 >= s.bias.abs(), "rmse {} < |bias| {}", s.rmse, s.bias);
    }

    #[test]
    fn split_assignment_is_a_deterministic_partition(n in 1usize..200, seed in any::<u64>()) {
        let splits = assign_splits(n, (0.8, 0.1, 0.1), seed).unwrap();
        prop_assert_eq!(splits.len(), n);
        let again = assign_splits(n, (0.8, 0.1, 0.1), seed).unwrap();
        prop_assert_eq!(&splits, &again);
        let counted = [Split::Train, Split::Val, Split::Test]
            .map(|s| splits.iter().filter(|&&x| x == s).count());
        prop_assert_eq!(counted.iter().sum::<usize>(), n);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn f32_tensors_round_trip(
        dims in pvec(1u32..=5, 1..=4),
        bits in pvec(any::<u32>(), 1..=625),
    ) {
        let n: usize = dims.iter().map(|&d| d as usize).product();
        prop_assume!(n <= bits.len());
        let values: Vec<f32> = bits[..n]
            .iter()
            .map(|&b| {
                let v = f32::from_bits(b);
                if v.is_finite() { v } else { 0.0 }
            })
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.satc");
        write_tensor_f32(&path, &dims, &values).unwrap();
        let (rdims, rvalues) = read_tensor_f32(&path).unwrap();
        prop_assert_eq!(rdims, dims);
        prop_assert_eq!(rvalues.len(), values.len());
        for (a, b) in rvalues.iter().zip(&values) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn bool_tensors_round_trip(
        dims in pvec(1u32..=5, 1..=4),
        flags in pvec(any::<bool>(), 1..=625),
    ) {
        let n: usize = dims.iter().map(|&d| d as usize).product();
        prop_assume!(n <= flags.len());
        let values = &flags[..n];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.satc");
        write_tensor_bool(&path, &dims, values).unwrap();
        let (rdims, rvalues) = read_tensor_bool(&path).unwrap();
        prop_assert_eq!(rdims, dims);
        prop_assert_eq!(rvalues, values);
    }
}
