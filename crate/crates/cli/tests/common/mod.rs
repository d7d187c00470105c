//! Seeded synthetic cities shared by the integration and acceptance tests.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use urbanforge::ingest::{default_tolerance, ingest_map, legend_ranges, render_annotated, BinaryMask, RasterImage, DEFAULT_MIN_AREA};
use urbanforge::model::{Canvas, DemographicKind, LandUseType, RegionId};
use urbanforge::{CityLayout, Point, Region, ScaleConfig};

pub const SIDE: u32 = 64;
pub const METERS_PER_PIXEL: f64 = 25.0;

/// Radius in pixels of a disk rendered from `area` pixels, rounded up.
fn radius_of(area: u64) -> f64 {
    (area as f64 / std::f64::consts::PI).sqrt() + 1.0
}

/// Up to `n` non-touching disks (centroid, area) inside a `side` x `side`
/// canvas, placed by rejection sampling. Centroids are fractional.
pub fn disks(rng: &mut ChaCha8Rng, n: usize, side: u32, areas: (u64, u64)) -> Vec<(Point<f64>, u64)> {
    let mut out: Vec<(Point<f64>, u64)> = Vec::new();
    let mut attempts = 0;
    while out.len() < n && attempts < 20_000 {
        attempts += 1;
        let area = rng.random_range(areas.0..=areas.1);
        let r = radius_of(area);
        let lo = r + 1.0;
        let hi = side as f64 - r - 1.0;
        let c = Point::new(rng.random_range(lo..hi), rng.random_range(lo..hi));
        let clear = out
            .iter()
            .all(|(p, a)| p.distance(&c) > r + radius_of(*a) + 1.0);
        if clear {
            out.push((c, area));
        }
    }
    out
}

/// Roles for a ~30-region city: residents, two of each facility type and a
/// few vacant lots, shuffled.
fn roles(rng: &mut ChaCha8Rng, n: usize) -> Vec<LandUseType> {
    use LandUseType::*;
    let mut v = vec![VacantLand; 6];
    for t in [Hospital, Educational, ShopsAndMarket, Business, ParkAndOpenSpace, PublicUtilities, StateGovtProperty] {
        v.extend([t, t]);
    }
    while v.len() < n {
        v.push(Residential);
    }
    v.truncate(n);
    v.shuffle(rng);
    v
}

/// Disk regions before rendering. Ids are in placement order.
pub fn synthetic_disks(seed: u64) -> CityLayout {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let found = disks(&mut rng, 30, SIDE, (21, 32));
    let roles = roles(&mut rng, found.len());
    let regions = found
        .into_iter()
        .zip(roles)
        .enumerate()
        .map(|(k, ((c, a), t))| Region::new(RegionId::indexed(k), t, a, c))
        .collect();
    let layout = CityLayout::new(regions, ScaleConfig::with_meters_per_pixel(METERS_PER_PIXEL))
        .unwrap()
        .with_canvas(Canvas::new(SIDE, SIDE))
        .unwrap();
    layout
}

/// A seeded 64x64 city with about 30 disk-shaped regions at 25 m per pixel,
/// as the ingester sees it after rendering.
pub fn synthetic_city(seed: u64) -> CityLayout {
    let img = synthetic_map(seed);
    let ranges = legend_ranges(default_tolerance(), &BTreeMap::new());
    ingest_map(&img, &ranges, DEFAULT_MIN_AREA, ScaleConfig::with_meters_per_pixel(METERS_PER_PIXEL)).unwrap()
}

pub fn synthetic_map(seed: u64) -> RasterImage {
    render_annotated(&synthetic_disks(seed), Canvas::new(SIDE, SIDE)).unwrap()
}

/// Quadrant masks: Industrial top-left, Educational top-right, Commercial
/// bottom-left, Residential bottom-right.
pub fn quadrant_mask(kind: DemographicKind, side: u32) -> BinaryMask {
    let h = side / 2;
    BinaryMask::from_fn(side, side, move |x, y| match kind {
        DemographicKind::Industrial => x < h && y < h,
        DemographicKind::Educational => x >= h && y < h,
        DemographicKind::Commercial => x < h && y >= h,
        DemographicKind::Residential => x >= h && y >= h,
    })
}

/// Writes the map, four masks and a config into `dir`; returns the config path.
pub fn write_fixture(dir: &Path, seed: u64) -> PathBuf {
    synthetic_map(seed)
        .save_png(&dir.join("map.png"))
        .unwrap();
    for kind in DemographicKind::ALL {
        let name = kind.name().to_lowercase();
        quadrant_mask(kind, SIDE).save_png(&dir.join(format!("{name}.png"))).unwrap();
    }
    let config = format!(
        r#"map = "map.png"
out_dir = "out"

[masks]
industrial = "industrial.png"
educational = "educational.png"
commercial = "commercial.png"
residential = "residential.png"

[scale]
meters_per_pixel = {METERS_PER_PIXEL:?}

[solver.ga]
rng_seed = {seed}
"#
    );
    let path = dir.join("config.toml");
    std::fs::write(&path, config).unwrap();
    path
}
