mod oracles;

use proptest::prelude::*;
use randset::features::{c_function, extract_features, pa_ratio};
use randset::morphology::{connected_components, disc_mask, occupancy_count};
use randset::raster::BinaryRaster;

fn raster() -> impl Strategy<Value = BinaryRaster> {
    (1usize..24, 1usize..24, 0.2f64..0.8)
        .prop_flat_map(|(w, h, p)| {
            proptest::collection::vec(proptest::bool::weighted(p), w * h).prop_map(move |bits| (w, h, bits))
        })
        .prop_map(|(w, h, bits)| BinaryRaster::from_bits(w, h, bits).unwrap())
}

fn disc(size: usize, radius: f64) -> BinaryRaster {
    let c = size as f64 / 2.0;
    BinaryRaster::from_fn(size, size, |x, y| (x as f64 + 0.5 - c).powi(2) + (y as f64 + 0.5 - c).powi(2) <= radius * radius)
        .unwrap()
}

proptest! {
    #[test]
    fn components_match_label_propagation(r in raster()) {
        let labels = oracles::component_labels(&r);
        let comps = connected_components(&r);
        let mut seen = std::collections::BTreeSet::new();
        for c in &comps {
            let (x0, y0) = c.pixels[0];
            let l = labels[y0 as usize * r.width() + x0 as usize];
            prop_assert!(seen.insert(l));
            for &(x, y) in &c.pixels {
                prop_assert_eq!(labels[y as usize * r.width() + x as usize], l);
            }
        }
        let distinct: std::collections::BTreeSet<_> = labels.iter().filter(|&&l| l != usize::MAX).collect();
        prop_assert_eq!(distinct.len(), comps.len());
        prop_assert_eq!(comps.iter().map(|c| c.area()).sum::<usize>(), r.foreground_count());
    }

    #[test]
    fn boundary_matches_definition(r in raster()) {
        for c in connected_components(&r) {
            let expected: Vec<_> = c.pixels.iter().copied()
                .filter(|&(x, y)| oracles::is_boundary(&r, x as usize, y as usize))
                .collect();
            let mut got = c.boundary.clone();
            got.sort_by_key(|&(x, y)| (y, x));
            let mut expected = expected;
            expected.sort_by_key(|&(x, y)| (y, x));
            prop_assert_eq!(got, expected);
        }
    }

    #[test]
    fn occupancy_matches_brute_force(r in raster(), radius in 1u32..6) {
        let mask = disc_mask(radius).unwrap();
        for y in 0..r.height() {
            for x in 0..r.width() {
                prop_assert_eq!(
                    occupancy_count(&r, (x as u32, y as u32), &mask),
                    oracles::disc_hits(&r, x, y, radius as i64)
                );
            }
        }
    }

    #[test]
    fn c_function_sums_to_one(r in raster(), radius in prop::sample::select(vec![1u32, 3, 5])) {
        let mask = disc_mask(radius).unwrap();
        for c in connected_components(&r) {
            let t = c_function(&r, &c, &mask);
            prop_assert_eq!(t.len(), mask.size_l());
            prop_assert!((t.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            prop_assert!(t.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn features_are_translation_invariant(
        art in proptest::collection::vec(any::<bool>(), 36),
        dx in 0usize..10,
        dy in 0usize..10,
    ) {
        prop_assume!(art.iter().any(|&b| b));
        // a 6x6 pattern placed well inside two larger windows
        let place = |ox: usize, oy: usize| BinaryRaster::from_fn(30, 30, |x, y| {
            x >= ox && y >= oy && x < ox + 6 && y < oy + 6 && art[(y - oy) * 6 + x - ox]
        }).unwrap();
        let a = extract_features(&place(7, 7), 3, "a", None).unwrap();
        let b = extract_features(&place(7 + dx, 7 + dy), 3, "b", None).unwrap();
        prop_assert_eq!(a.components, b.components);
    }
}

#[test]
fn pa_ratio_decreases_with_disc_size() {
    let ratios: Vec<f64> = [2.0, 4.0, 8.0, 16.0]
        .iter()
        .map(|&rad| {
            let r = disc(40, rad);
            let comps = connected_components(&r);
            assert_eq!(comps.len(), 1);
            pa_ratio(&comps[0])
        })
        .collect();
    assert!(ratios.windows(2).all(|w| w[1] < w[0]), "{ratios:?}");
}

#[test]
fn disc_boundary_flatter_when_larger() {
    // Larger discs have lower curvature, so T along their boundary moves
    // towards the half-plane value 18/29.
    let mask = disc_mask(3).unwrap();
    let mean_t = |rad: f64| {
        let r = disc(60, rad);
        let c = &connected_components(&r)[0];
        let t = c_function(&r, c, &mask);
        t.iter().enumerate().map(|(i, v)| i as f64 * v).sum::<f64>() / 29.0
    };
    let (small, large) = (mean_t(5.0), mean_t(25.0));
    assert!(small < large && large < 18.0 / 29.0 + 0.02, "{small} {large}");
}
