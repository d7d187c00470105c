//! Thematic-map ingestion: HSV segmentation against the legend, 4-connected
//! component labeling, centroid filtering by sub-region masks, and rendering
//! a layout back onto a legend-colored canvas.

use std::collections::{BTreeMap, VecDeque};
use std::path::Path;

use thiserror::Error;

use crate::model::{legend_color, Canvas, CityLayout, LandUseType, ModelError, Region, RegionId, Rgb, ScaleConfig};
use crate::scalar::{Point, Scalar};

/// Grayscale level at or above which a mask pixel counts as white.
pub const MASK_THRESHOLD: u8 = 128;
pub const DEFAULT_MIN_AREA: u64 = 20;
const BACKGROUND: Rgb = [255, 255, 255];
const UNASSIGNED_COLOR: Rgb = [128, 128, 128];

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read image {path}: {source}")]
    Image {
        path: String,
        #[source]
        source: image::ImageError,
    },
    #[error("raster has {got} pixels, expected {width}x{height}")]
    InvalidRaster { width: u32, height: u32, got: usize },
    #[error("pixel ({x}, {y}) matches both {first} and {second}")]
    AmbiguousLegend {
        x: u32,
        y: u32,
        first: LandUseType,
        second: LandUseType,
    },
    #[error("no color range configured for {0}")]
    MissingLegendRange(LandUseType),
    #[error("mask is {got_w}x{got_h}, map is {want_w}x{want_h}")]
    MaskDimensionMismatch {
        want_w: u32,
        want_h: u32,
        got_w: u32,
        got_h: u32,
    },
    #[error("region `{0}` centroid lies outside the canvas")]
    RenderOutOfBounds(RegionId),
    #[error("minimum area must be at least 1")]
    InvalidMinArea,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Row-major 8-bit RGB raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RasterImage {
    width: u32,
    height: u32,
    pixels: Vec<Rgb>,
}

impl RasterImage {
    pub fn new(width: u32, height: u32, pixels: Vec<Rgb>) -> Result<Self, IngestError> {
        if pixels.len() != width as usize * height as usize {
            return Err(IngestError::InvalidRaster {
                width,
                height,
                got: pixels.len(),
            });
        }
        Ok(RasterImage { width, height, pixels })
    }

    pub fn filled(width: u32, height: u32, color: Rgb) -> Self {
        RasterImage {
            width,
            height,
            pixels: vec![color; width as usize * height as usize],
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn canvas(&self) -> Canvas {
        Canvas::new(self.width, self.height)
    }

    pub fn pixels(&self) -> &[Rgb] {
        &self.pixels
    }

    pub fn get(&self, x: u32, y: u32) -> Rgb {
        self.pixels[(y * self.width + x) as usize]
    }

    pub fn put(&mut self, x: u32, y: u32, c: Rgb) {
        let w = self.width;
        self.pixels[(y * w + x) as usize] = c;
    }

    pub fn from_png(path: &Path) -> Result<Self, IngestError> {
        let img = image::open(path).map_err(|source| IngestError::Image {
            path: path.display().to_string(),
            source,
        })?;
        Ok(Self::from(img.to_rgb8()))
    }

    pub fn save_png(&self, path: &Path) -> Result<(), IngestError> {
        image::RgbImage::from(self)
            .save_with_format(path, image::ImageFormat::Png)
            .map_err(|source| IngestError::Image {
                path: path.display().to_string(),
                source,
            })
    }
}

impl From<image::RgbImage> for RasterImage {
    fn from(img: image::RgbImage) -> Self {
        let (width, height) = img.dimensions();
        let pixels = img.pixels().map(|p| p.0).collect();
        RasterImage { width, height, pixels }
    }
}

impl From<&RasterImage> for image::RgbImage {
    fn from(r: &RasterImage) -> Self {
        let raw: Vec<u8> = r.pixels.iter().flatten().copied().collect();
        image::RgbImage::from_raw(r.width, r.height, raw).expect("buffer sized from dimensions")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hsv<T> {
    /// Degrees in [0, 360).
    pub h: T,
    pub s: T,
    pub v: T,
}

/// Hexcone RGB to HSV conversion.
pub fn rgb_to_hsv<T: Scalar>(rgb: Rgb) -> Hsv<T> {
    let [r, g, b] = rgb.map(|c| T::from_u8(c).unwrap() / T::lit(255.0));
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let sixty = T::lit(60.0);
    let h = if delta == T::zero() {
        T::zero()
    } else if max == r {
        let h = sixty * ((g - b) / delta);
        if h < T::zero() {
            h + T::lit(360.0)
        } else {
            h
        }
    } else if max == g {
        sixty * ((b - r) / delta + T::lit(2.0))
    } else {
        sixty * ((r - g) / delta + T::lit(4.0))
    };
    let s = if max == T::zero() { T::zero() } else { delta / max };
    Hsv { h, s, v: max }
}

/// Acceptance window around a legend color, per channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HsvRange<T> {
    pub center: Hsv<T>,
    pub tolerance: Hsv<T>,
}

impl<T: Scalar> HsvRange<T> {
    pub fn around(rgb: Rgb, tolerance: Hsv<T>) -> Self {
        HsvRange {
            center: rgb_to_hsv(rgb),
            tolerance,
        }
    }

    pub fn contains(&self, c: &Hsv<T>) -> bool {
        let full = T::lit(360.0);
        let d = (c.h - self.center.h).abs() % full;
        let dh = d.min(full - d);
        dh <= self.tolerance.h
            && (c.s - self.center.s).abs() <= self.tolerance.s
            && (c.v - self.center.v).abs() <= self.tolerance.v
    }
}

/// (4 degrees, 0.08, 0.08).
pub fn default_tolerance<T: Scalar>() -> Hsv<T> {
    Hsv {
        h: T::lit(4.0),
        s: T::lit(0.08),
        v: T::lit(0.08),
    }
}

/// Ranges around each legend color, with optional per-type color overrides.
pub fn legend_ranges<T: Scalar>(
    tolerance: Hsv<T>,
    overrides: &BTreeMap<LandUseType, Rgb>,
) -> BTreeMap<LandUseType, HsvRange<T>> {
    LandUseType::LEGEND
        .iter()
        .map(|t| {
            let rgb = overrides
                .get(t)
                .copied()
                .unwrap_or_else(|| legend_color(*t).expect("legend variant"));
            (*t, HsvRange::around(rgb, tolerance))
        })
        .collect()
}

/// One boolean per pixel; `true` marks white / valid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: u32, height: u32, bits: Vec<bool>) -> Result<Self, IngestError> {
        if bits.len() != width as usize * height as usize {
            return Err(IngestError::InvalidRaster {
                width,
                height,
                got: bits.len(),
            });
        }
        Ok(BinaryMask { width, height, bits })
    }

    pub fn filled(width: u32, height: u32, value: bool) -> Self {
        BinaryMask {
            width,
            height,
            bits: vec![value; width as usize * height as usize],
        }
    }

    pub fn from_fn(width: u32, height: u32, f: impl Fn(u32, u32) -> bool) -> Self {
        let bits = (0..height).flat_map(|y| (0..width).map(move |x| (x, y))).map(|(x, y)| f(x, y)).collect();
        BinaryMask { width, height, bits }
    }

    /// Binarizes an 8-bit grayscale buffer at [`MASK_THRESHOLD`].
    pub fn from_gray(img: &image::GrayImage) -> Self {
        let (width, height) = img.dimensions();
        let bits = img.pixels().map(|p| p.0[0] >= MASK_THRESHOLD).collect();
        BinaryMask { width, height, bits }
    }

    pub fn from_png(path: &Path) -> Result<Self, IngestError> {
        let img = image::open(path).map_err(|source| IngestError::Image {
            path: path.display().to_string(),
            source,
        })?;
        Ok(Self::from_gray(&img.to_luma8()))
    }

    pub fn save_png(&self, path: &Path) -> Result<(), IngestError> {
        let raw = self.bits.iter().map(|b| if *b { 255 } else { 0 }).collect();
        image::GrayImage::from_raw(self.width, self.height, raw)
            .expect("buffer sized from dimensions")
            .save_with_format(path, image::ImageFormat::Png)
            .map_err(|source| IngestError::Image {
                path: path.display().to_string(),
                source,
            })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn canvas(&self) -> Canvas {
        Canvas::new(self.width, self.height)
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[(y * self.width + x) as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, v: bool) {
        let w = self.width;
        self.bits[(y * w + x) as usize] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    /// Whether the truncated point lies on a white pixel inside the bounds.
    pub fn covers<T: Scalar>(&self, p: &Point<T>) -> bool {
        // Truncate toward zero, then bounds-check in the scalar domain so that
        // e.g. x = -0.5 (which truncates to 0) still counts as outside.
        if !(p.x >= T::zero() && p.y >= T::zero()) {
            return false;
        }
        let (Some(x), Some(y)) = (p.x.trunc().to_u64(), p.y.trunc().to_u64()) else {
            return false;
        };
        x < self.width as u64 && y < self.height as u64 && self.get(x as u32, y as u32)
    }
}

/// Classifies every pixel against the legend ranges.
pub fn segment_by_legend<T: Scalar>(
    img: &RasterImage,
    ranges: &BTreeMap<LandUseType, HsvRange<T>>,
) -> Result<BTreeMap<LandUseType, BinaryMask>, IngestError> {
    if let Some(t) = LandUseType::LEGEND.iter().find(|t| !ranges.contains_key(t)) {
        return Err(IngestError::MissingLegendRange(*t));
    }
    let mut masks: BTreeMap<LandUseType, BinaryMask> = ranges
        .keys()
        .map(|t| (*t, BinaryMask::filled(img.width, img.height, false)))
        .collect();
    // Classify each distinct color once.
    let mut cache: BTreeMap<Rgb, Option<LandUseType>> = BTreeMap::new();
    for (i, rgb) in img.pixels.iter().enumerate() {
        let x = i as u32 % img.width;
        let y = i as u32 / img.width;
        let class = match cache.get(rgb) {
            Some(c) => *c,
            None => {
                let hsv = rgb_to_hsv::<T>(*rgb);
                let mut found: Option<LandUseType> = None;
                for (t, r) in ranges {
                    if r.contains(&hsv) {
                        if let Some(first) = found {
                            return Err(IngestError::AmbiguousLegend {
                                x,
                                y,
                                first,
                                second: *t,
                            });
                        }
                        found = Some(*t);
                    }
                }
                cache.insert(*rgb, found);
                found
            }
        };
        if let Some(t) = class {
            masks.get_mut(&t).expect("mask per range").bits[i] = true;
        }
    }
    Ok(masks)
}

/// A 4-connected set of mask pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    /// Raster index of the first pixel reached in scan order.
    pub first_index: usize,
    pub area_px: u64,
    pub sum_x: u64,
    pub sum_y: u64,
    /// (min_x, min_y, max_x, max_y), inclusive.
    pub bbox: (u32, u32, u32, u32),
}

impl Component {
    pub fn centroid<T: Scalar>(&self) -> Point<T> {
        let n = T::from_u64(self.area_px).unwrap();
        Point::new(T::from_u64(self.sum_x).unwrap() / n, T::from_u64(self.sum_y).unwrap() / n)
    }
}

/// Labels 4-connected components in raster-scan order of their first pixel.
pub fn label_components(mask: &BinaryMask) -> Vec<Component> {
    let (w, h) = (mask.width as usize, mask.height as usize);
    let mut seen = vec![false; w * h];
    let mut out = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        if !mask.bits[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let mut c = Component {
            first_index: start,
            area_px: 0,
            sum_x: 0,
            sum_y: 0,
            bbox: (u32::MAX, u32::MAX, 0, 0),
        };
        while let Some(i) = queue.pop_front() {
            let (x, y) = (i % w, i / w);
            c.area_px += 1;
            c.sum_x += x as u64;
            c.sum_y += y as u64;
            c.bbox = (
                c.bbox.0.min(x as u32),
                c.bbox.1.min(y as u32),
                c.bbox.2.max(x as u32),
                c.bbox.3.max(y as u32),
            );
            let mut visit = |j: usize| {
                if mask.bits[j] && !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < w {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - w);
            }
            if y + 1 < h {
                visit(i + w);
            }
        }
        out.push(c);
    }
    out
}

/// One region per 4-connected component with at least `min_area` pixels.
/// Ids are `r0, r1, ...` in raster-scan order of each component's first pixel.
pub fn extract_regions<T: Scalar>(
    mask: &BinaryMask,
    land_use: LandUseType,
    min_area: u64,
) -> Result<Vec<Region<T>>, IngestError> {
    if min_area < 1 {
        return Err(IngestError::InvalidMinArea);
    }
    Ok(label_components(mask)
        .into_iter()
        .filter(|c| c.area_px >= min_area)
        .enumerate()
        .map(|(k, c)| Region::new(RegionId::indexed(k), land_use, c.area_px, c.centroid()))
        .collect())
}

/// Full ingestion: segment, label every legend mask and number regions
/// globally in raster-scan order of their first pixel.
pub fn ingest_map<T: Scalar>(
    img: &RasterImage,
    ranges: &BTreeMap<LandUseType, HsvRange<T>>,
    min_area: u64,
    scale: ScaleConfig<T>,
) -> Result<CityLayout<T>, IngestError> {
    if min_area < 1 {
        return Err(IngestError::InvalidMinArea);
    }
    let masks = segment_by_legend(img, ranges)?;
    let mut found: Vec<(usize, LandUseType, Component)> = masks
        .iter()
        .flat_map(|(t, m)| {
            label_components(m)
                .into_iter()
                .filter(|c| c.area_px >= min_area)
                .map(move |c| (c.first_index, *t, c))
        })
        .collect();
    found.sort_by_key(|(first, _, _)| *first);
    let regions = found
        .into_iter()
        .enumerate()
        .map(|(k, (_, t, c))| Region::new(RegionId::indexed(k), t, c.area_px, c.centroid()))
        .collect();
    Ok(CityLayout::new(regions, scale)?.with_canvas(img.canvas())?)
}

/// Keeps regions whose truncated centroid is inside the bounds and on a white
/// mask pixel. Order is preserved.
pub fn filter_by_mask<T: Scalar>(
    regions: &[Region<T>],
    mask: &BinaryMask,
    map: Canvas,
) -> Result<Vec<Region<T>>, IngestError> {
    check_mask_dims(mask, map)?;
    Ok(regions.iter().filter(|r| mask.covers(&r.centroid)).cloned().collect())
}

pub fn check_mask_dims(mask: &BinaryMask, map: Canvas) -> Result<(), IngestError> {
    if mask.width != map.width || mask.height != map.height {
        return Err(IngestError::MaskDimensionMismatch {
            want_w: map.width,
            want_h: map.height,
            got_w: mask.width,
            got_h: mask.height,
        });
    }
    Ok(())
}

/// Draws each region as a filled digital disk of exactly `area_px` pixels
/// (clipped at the canvas edge) centered on its centroid, in the legend color
/// of its assigned role. Regions are drawn in ascending id order on white.
pub fn render_annotated<T: Scalar>(layout: &CityLayout<T>, canvas: Canvas) -> Result<RasterImage, IngestError> {
    let mut img = RasterImage::filled(canvas.width, canvas.height, BACKGROUND);
    for (i, region) in layout.regions().iter().enumerate() {
        if !canvas.contains(&region.centroid) {
            return Err(IngestError::RenderOutOfBounds(region.id.clone()));
        }
        let color = legend_color(layout.role(i)).unwrap_or(UNASSIGNED_COLOR);
        for (x, y) in disk_pixels(&region.centroid, region.area_px, canvas) {
            img.put(x, y, color);
        }
    }
    Ok(img)
}

/// The `area` canvas pixels nearest to `center`. Equidistant pixels are
/// ordered so that point-symmetric pairs about the rounded center are adjacent,
/// which keeps the pixel centroid on the requested center.
fn disk_pixels<T: Scalar>(center: &Point<T>, area: u64, canvas: Canvas) -> Vec<(u32, u32)> {
    let cx = center.x.to_f64().unwrap();
    let cy = center.y.to_f64().unwrap();
    let (rx, ry) = (cx.round() as i64, cy.round() as i64);
    let reach = (area as f64 / std::f64::consts::PI).sqrt().ceil() as i64 + 2;
    let mut cand: Vec<(f64, (i64, i64), bool, u32, u32)> = Vec::new();
    for dy in -reach..=reach {
        for dx in -reach..=reach {
            let (x, y) = (rx + dx, ry + dy);
            if x < 0 || y < 0 || x >= canvas.width as i64 || y >= canvas.height as i64 {
                continue;
            }
            let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
            let key = (dx, dy).min((-dx, -dy));
            cand.push((d2, key, (dx, dy) != key, x as u32, y as u32));
        }
    }
    cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    cand.into_iter().take(area as usize).map(|c| (c.3, c.4)).collect()
}
