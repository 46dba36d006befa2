//! Production metrics against the naive oracles on seeded random instances.

use settle_core::agreement::{average_overlap, jaccard, upper_limit};
use settle_core::geom::MultiPolygon;
use settle_core::harmonize::block_or_downscale;
use settle_core::rasterize::{rasterize_polygons, RasterizePolicy};
use settle_core::rng::SplitMix64;
use settle_core::synth::oracle::{
    exact_spec, lattice_polygon, oracle_average_overlap, oracle_blockor, oracle_counts, oracle_jaccard,
    oracle_rasterize, oracle_upper_limit, random_raster, random_spec, star_polygon, BoolGrid,
};
use settle_core::BinaryRaster;

const INSTANCES: u64 = 200;

fn grid(r: &BinaryRaster) -> BoolGrid {
    BoolGrid::from_raster(r).unwrap()
}

#[test]
fn counts_jaccard_upper_limit_match() {
    let mut rng = SplitMix64::new(1);
    for _ in 0..INSTANCES {
        let spec = random_spec(&mut rng);
        let (a, b) = (random_raster(&mut rng, spec), random_raster(&mut rng, spec));
        let (ga, gb) = (grid(&a), grid(&b));
        assert_eq!(a.count_settled(), oracle_counts(&ga).unwrap());
        assert_eq!(jaccard(&a, &b).unwrap(), oracle_jaccard(&ga, &gb).unwrap());
        match oracle_upper_limit(&ga, &gb) {
            Ok(v) => assert_eq!(upper_limit(&a, &b).unwrap(), v),
            Err(_) => assert!(upper_limit(&a, &b).is_err()),
        }
    }
}

#[test]
fn average_overlap_matches() {
    let mut rng = SplitMix64::new(2);
    for _ in 0..INSTANCES {
        let spec = random_spec(&mut rng);
        let k = 2 + rng.below(4) as usize;
        let rs: Vec<BinaryRaster> = (0..k).map(|_| random_raster(&mut rng, spec)).collect();
        let gs: Vec<BoolGrid> = rs.iter().map(grid).collect();
        let got = average_overlap(&rs).unwrap();
        let want = oracle_average_overlap(&gs).unwrap();
        assert!((got - want).abs() <= 1e-15, "{got} vs {want}");
    }
}

#[test]
fn block_or_matches() {
    let mut rng = SplitMix64::new(3);
    for _ in 0..INSTANCES {
        let spec = random_spec(&mut rng);
        let r = random_raster(&mut rng, spec);
        let f = 1 + rng.below(9) as usize;
        let out = block_or_downscale(&r, f).unwrap();
        let (c0, r0, want) = oracle_blockor(&grid(&r), spec.col0(), spec.row0(), f).unwrap();
        assert_eq!((out.spec().col0(), out.spec().row0()), (c0, r0));
        assert_eq!(grid(&out), want, "factor {f} on {spec:?}");
    }
}

#[test]
fn bound_chain_holds() {
    let mut rng = SplitMix64::new(4);
    for _ in 0..1000 {
        let spec = random_spec(&mut rng);
        let (a, b) = (random_raster(&mut rng, spec), random_raster(&mut rng, spec));
        if a.is_empty() && b.is_empty() {
            continue;
        }
        let t = jaccard(&a, &b).unwrap();
        let u = upper_limit(&a, &b).unwrap();
        assert!(0.0 <= t && t <= u && u <= 1.0, "{t} {u}");
    }
}

#[test]
fn coverage_rasterization_matches() {
    let mut rng = SplitMix64::new(5);
    for i in 0..INSTANCES {
        let spec = exact_spec(&mut rng);
        let n = 1 + rng.below(4) as usize;
        let polys: Vec<MultiPolygon> = (0..n).map(|_| lattice_polygon(&mut rng, &spec)).collect();
        let want = oracle_rasterize(&polys, &spec, RasterizePolicy::AnyIntersection).unwrap();
        let got = rasterize_polygons(polys.clone(), &spec, RasterizePolicy::AnyIntersection).unwrap();
        assert_eq!(grid(&got.raster), want, "instance {i}: {polys:?}");
    }
}

#[test]
fn centroid_rasterization_matches() {
    let mut rng = SplitMix64::new(6);
    let mut done = 0;
    while done < INSTANCES {
        let spec = random_spec(&mut rng);
        let n = 1 + rng.below(20) as usize;
        let polys: Vec<MultiPolygon> = (0..n).map(|_| star_polygon(&mut rng, &spec)).collect();
        let Ok(want) = oracle_rasterize(&polys, &spec, RasterizePolicy::Centroid) else {
            continue;
        };
        let got = rasterize_polygons(polys, &spec, RasterizePolicy::Centroid).unwrap();
        assert_eq!(grid(&got.raster), want);
        done += 1;
    }
}

#[test]
fn supersampling_never_exceeds_coverage() {
    // Arbitrary shapes: the oracle may miss thin slivers but never adds cells.
    let mut rng = SplitMix64::new(7);
    for _ in 0..INSTANCES {
        let spec = random_spec(&mut rng);
        let polys: Vec<MultiPolygon> = (0..3).map(|_| star_polygon(&mut rng, &spec)).collect();
        let want = oracle_rasterize(&polys, &spec, RasterizePolicy::AnyIntersection).unwrap();
        let got = grid(&rasterize_polygons(polys, &spec, RasterizePolicy::AnyIntersection).unwrap().raster);
        for (o, p) in want.cells.iter().zip(&got.cells) {
            assert!(!o || *p);
        }
    }
}
