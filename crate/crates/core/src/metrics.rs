//! Service accessibility, ecological coverage and demographic satisfaction.
//!
//! Residents are sampled at Residential region centroids. Every aggregate is
//! reduced in ascending region-id order (residents outer, service types inner)
//! so that results are bit-stable.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::BinaryMask;
use crate::model::{CityLayout, DemographicRole, LandUseType, RegionId, ScaleConfig};
use crate::scalar::{Point, Scalar};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("layout has no residents to evaluate")]
    NoResidents,
    #[error("no facility of the requested type")]
    NoFacilityOfType,
    #[error("invalid essential-service set: {0}")]
    InvalidServiceSet(String),
}

/// Ordered list of essential service types.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<LandUseType>", into = "Vec<LandUseType>")]
pub struct EssentialServiceSet {
    types: Vec<LandUseType>,
}

impl EssentialServiceSet {
    pub fn new(types: Vec<LandUseType>) -> Result<Self, MetricsError> {
        if types.is_empty() {
            return Err(MetricsError::InvalidServiceSet("no service types".into()));
        }
        for (i, t) in types.iter().enumerate() {
            if matches!(t, LandUseType::Residential | LandUseType::VacantLand | LandUseType::Unassigned) {
                return Err(MetricsError::InvalidServiceSet(format!("{t} cannot be a service")));
            }
            if types[..i].contains(t) {
                return Err(MetricsError::InvalidServiceSet(format!("{t} listed twice")));
            }
        }
        Ok(EssentialServiceSet { types })
    }

    pub fn types(&self) -> &[LandUseType] {
        &self.types
    }

    pub fn len(&self) -> usize {
        self.types.len()
    }

    pub fn is_empty(&self) -> bool {
        self.types.is_empty()
    }
}

impl Default for EssentialServiceSet {
    /// Education, healthcare, workplaces, shopping and recreation.
    fn default() -> Self {
        EssentialServiceSet {
            types: vec![
                LandUseType::Educational,
                LandUseType::Hospital,
                LandUseType::Business,
                LandUseType::ShopsAndMarket,
                LandUseType::ParkAndOpenSpace,
            ],
        }
    }
}

impl TryFrom<Vec<LandUseType>> for EssentialServiceSet {
    type Error = MetricsError;
    fn try_from(v: Vec<LandUseType>) -> Result<Self, Self::Error> {
        EssentialServiceSet::new(v)
    }
}

impl From<EssentialServiceSet> for Vec<LandUseType> {
    fn from(s: EssentialServiceSet) -> Self {
        s.types
    }
}

/// How each resident sample is weighted in the averages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResidentWeighting {
    /// One unweighted sample per Residential region.
    #[default]
    Uniform,
    /// Samples weighted by region pixel area.
    Area,
}

/// A masked portion of the city with its demographic role.
#[derive(Debug, Clone, PartialEq)]
pub struct SubRegion {
    pub role: DemographicRole,
    pub mask: BinaryMask,
}

/// Resident samples of a layout: Residential centroids in ascending id order.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidentSet<T> {
    pub indices: Vec<usize>,
    pub locations: Vec<Point<T>>,
    pub weights: Vec<T>,
}

impl<T: Scalar> ResidentSet<T> {
    pub fn from_layout(layout: &CityLayout<T>, weighting: ResidentWeighting) -> Self {
        let indices: Vec<usize> = layout.indices_with_role(LandUseType::Residential).collect();
        let locations = indices.iter().map(|i| layout.centroid(*i)).collect();
        let weights = indices
            .iter()
            .map(|i| match weighting {
                ResidentWeighting::Uniform => T::one(),
                ResidentWeighting::Area => T::from_u64(layout.regions()[*i].area_px).unwrap(),
            })
            .collect();
        ResidentSet {
            indices,
            locations,
            weights,
        }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Distance in meters from `resident` to the nearest facility.
pub fn min_distance<T: Scalar>(resident: &Point<T>, facilities: &[Point<T>], scale: &ScaleConfig<T>) -> Result<T, MetricsError> {
    if facilities.is_empty() {
        return Err(MetricsError::NoFacilityOfType);
    }
    Ok(nearest(resident, facilities, scale))
}

/// Like [`min_distance`] but `+inf` when there is no facility.
fn nearest<T: Scalar>(resident: &Point<T>, facilities: &[Point<T>], scale: &ScaleConfig<T>) -> T {
    let px = facilities
        .iter()
        .map(|f| resident.distance(f))
        .fold(T::infinity(), |a, b| a.min(b));
    scale.meters_per_pixel * px
}

fn weighted_mean<T: Scalar>(terms: impl Iterator<Item = (T, T)>) -> Result<T, MetricsError> {
    let mut total = T::zero();
    let mut weight = T::zero();
    let mut n = 0usize;
    for (w, term) in terms {
        total = total + w * term;
        weight = weight + w;
        n += 1;
    }
    if n == 0 {
        return Err(MetricsError::NoResidents);
    }
    Ok(total / weight)
}

pub fn service_accessibility<T: Scalar>(layout: &CityLayout<T>, services: &EssentialServiceSet) -> Result<T, MetricsError> {
    service_accessibility_weighted(layout, services, ResidentWeighting::Uniform)
}

pub fn service_accessibility_weighted<T: Scalar>(
    layout: &CityLayout<T>,
    services: &EssentialServiceSet,
    weighting: ResidentWeighting,
) -> Result<T, MetricsError> {
    let residents = ResidentSet::from_layout(layout, weighting);
    let facilities: Vec<Vec<Point<T>>> = services.types().iter().map(|t| layout.centroids_with_role(*t)).collect();
    let scale = layout.scale();
    let n_types = T::from_count(services.len());
    weighted_mean(residents.locations.iter().zip(&residents.weights).map(|(loc, w)| {
        let reached = facilities
            .iter()
            .filter(|fs| nearest(loc, fs, scale) < scale.service_radius_m)
            .count();
        (*w, T::from_count(reached) / n_types)
    }))
}

pub fn ecological_coverage<T: Scalar>(layout: &CityLayout<T>) -> Result<T, MetricsError> {
    ecological_coverage_weighted(layout, ResidentWeighting::Uniform)
}

pub fn ecological_coverage_weighted<T: Scalar>(layout: &CityLayout<T>, weighting: ResidentWeighting) -> Result<T, MetricsError> {
    let residents = ResidentSet::from_layout(layout, weighting);
    let parks = layout.centroids_with_role(LandUseType::ParkAndOpenSpace);
    let scale = layout.scale();
    weighted_mean(residents.locations.iter().zip(&residents.weights).map(|(loc, w)| {
        let inside = nearest(loc, &parks, scale) <= scale.ecology_radius_m;
        (*w, if inside { T::one() } else { T::zero() })
    }))
}

/// Index of the first sub-region whose mask covers `p`.
pub fn subregion_of<T: Scalar>(p: &Point<T>, subregions: &[SubRegion]) -> Option<usize> {
    subregions.iter().position(|s| s.mask.covers(p))
}

/// Per-resident satisfaction: fraction of `needs` with a facility strictly
/// within the satisfaction radius.
pub fn resident_satisfaction<T: Scalar>(layout: &CityLayout<T>, resident: &Point<T>, needs: &[LandUseType]) -> T {
    let scale = layout.scale();
    let met = needs
        .iter()
        .filter(|j| nearest(resident, &layout.centroids_with_role(**j), scale) < scale.satisfaction_radius_m)
        .count();
    T::from_count(met) / T::from_count(needs.len())
}

pub fn satisfaction<T: Scalar>(layout: &CityLayout<T>, subregions: &[SubRegion]) -> Result<T, MetricsError> {
    satisfaction_weighted(layout, subregions, ResidentWeighting::Uniform)
}

/// City-wide satisfaction. Residents whose centroid falls in no sub-region
/// are left out of the average; a resident covered by several masks belongs
/// to the first one listed.
pub fn satisfaction_weighted<T: Scalar>(
    layout: &CityLayout<T>,
    subregions: &[SubRegion],
    weighting: ResidentWeighting,
) -> Result<T, MetricsError> {
    let residents = ResidentSet::from_layout(layout, weighting);
    let mut orphans = 0usize;
    let terms: Vec<(T, T)> = residents
        .locations
        .iter()
        .zip(&residents.weights)
        .filter_map(|(loc, w)| match subregion_of(loc, subregions) {
            Some(s) => Some((*w, resident_satisfaction(layout, loc, subregions[s].role.needs()))),
            None => {
                orphans += 1;
                None
            }
        })
        .collect();
    if orphans > 0 {
        log::warn!("{orphans} resident(s) fall outside every sub-region mask and are excluded from satisfaction");
    }
    weighted_mean(terms.into_iter())
}

/// Satisfaction restricted to the residents of one sub-region.
pub fn subregion_satisfaction<T: Scalar>(
    layout: &CityLayout<T>,
    subregion: &SubRegion,
    weighting: ResidentWeighting,
) -> Result<T, MetricsError> {
    satisfaction_weighted(layout, std::slice::from_ref(subregion), weighting)
}

/// Needs of `role` that no facility serves within the satisfaction radius of
/// each Residential region covered by `mask`, ascending id order.
pub fn unmet_needs<T: Scalar>(
    layout: &CityLayout<T>,
    mask: &BinaryMask,
    role: &DemographicRole,
) -> Vec<(RegionId, Vec<LandUseType>)> {
    let scale = layout.scale();
    layout
        .indices_with_role(LandUseType::Residential)
        .filter(|i| mask.covers(&layout.centroid(*i)))
        .map(|i| {
            let loc = layout.centroid(i);
            let unmet = role
                .needs()
                .iter()
                .copied()
                .filter(|j| nearest(&loc, &layout.centroids_with_role(*j), scale) >= scale.satisfaction_radius_m)
                .collect();
            (layout.regions()[i].id.clone(), unmet)
        })
        .collect()
}

/// Service / ecology / satisfaction triple for one pipeline stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct MetricsReport<T> {
    pub stage: String,
    pub service: T,
    pub ecology: T,
    pub satisfaction: T,
}

pub const CSV_HEADER: &str = "stage,service,ecology,satisfaction";

impl<T: Scalar> MetricsReport<T> {
    /// `stage,service,ecology,satisfaction` with three decimals.
    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.3},{:.3},{:.3}",
            self.stage,
            self.service.to_f64().unwrap(),
            self.ecology.to_f64().unwrap(),
            self.satisfaction.to_f64().unwrap()
        )
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

/// Metrics-by-stage table, one column per stage.
pub fn format_table<T: Scalar>(reports: &[MetricsReport<T>]) -> String {
    let mut out = String::new();
    let _ = write!(out, "{:<14}", "Metrics");
    for r in reports {
        let _ = write!(out, "{:>10}", r.stage);
    }
    out.push('\n');
    let rows: [(&str, fn(&MetricsReport<T>) -> T); 3] = [
        ("Service", |r| r.service),
        ("Ecology", |r| r.ecology),
        ("Satisfaction", |r| r.satisfaction),
    ];
    for (name, get) in rows {
        let _ = write!(out, "{name:<14}");
        for r in reports {
            let _ = write!(out, "{:>10.3}", get(r).to_f64().unwrap());
        }
        out.push('\n');
    }
    out
}

/// Bundles everything needed to score a layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluator {
    pub services: EssentialServiceSet,
    pub subregions: Vec<SubRegion>,
    pub weighting: ResidentWeighting,
}

impl Evaluator {
    pub fn new(services: EssentialServiceSet, subregions: Vec<SubRegion>) -> Self {
        Evaluator {
            services,
            subregions,
            weighting: ResidentWeighting::Uniform,
        }
    }

    pub fn service<T: Scalar>(&self, layout: &CityLayout<T>) -> Result<T, MetricsError> {
        service_accessibility_weighted(layout, &self.services, self.weighting)
    }

    pub fn ecology<T: Scalar>(&self, layout: &CityLayout<T>) -> Result<T, MetricsError> {
        ecological_coverage_weighted(layout, self.weighting)
    }

    pub fn satisfaction<T: Scalar>(&self, layout: &CityLayout<T>) -> Result<T, MetricsError> {
        satisfaction_weighted(layout, &self.subregions, self.weighting)
    }

    pub fn report<T: Scalar>(&self, layout: &CityLayout<T>, stage: &str) -> Result<MetricsReport<T>, MetricsError> {
        Ok(MetricsReport {
            stage: stage.to_string(),
            service: self.service(layout)?,
            ecology: self.ecology(layout)?,
            satisfaction: self.satisfaction(layout)?,
        })
    }
}

/// Convenience wrapper over [`Evaluator::report`].
pub fn metrics_report<T: Scalar>(
    layout: &CityLayout<T>,
    services: &EssentialServiceSet,
    subregions: &[SubRegion],
    stage: &str,
) -> Result<MetricsReport<T>, MetricsError> {
    Ok(MetricsReport {
        stage: stage.to_string(),
        service: service_accessibility(layout, services)?,
        ecology: ecological_coverage(layout)?,
        satisfaction: satisfaction(layout, subregions)?,
    })
}
