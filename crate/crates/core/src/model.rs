//! Domain types shared across the pipeline: land-use roles, regions, the
//! mutable layout overlay, demographic roles and layout edit actions.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{Point, Scalar};

pub type Rgb = [u8; 3];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("{0} has no legend color")]
    NotALegendType(LandUseType),
    #[error("unknown region id `{0}`")]
    UnknownRegion(RegionId),
    #[error("duplicate region id `{0}`")]
    DuplicateRegion(RegionId),
    #[error("invalid action: {0}")]
    InvalidAction(String),
    #[error("invalid scale configuration: {0}")]
    InvalidScale(String),
    #[error("invalid demographic role: {0}")]
    InvalidDemographicRole(String),
    #[error("unknown land-use type `{0}`")]
    UnknownLandUse(String),
    #[error("assignment is missing region `{0}`")]
    MissingAssignment(RegionId),
    #[error("region `{id}` centroid ({x}, {y}) lies outside the {width}x{height} canvas")]
    CentroidOutOfBounds {
        id: RegionId,
        x: f64,
        y: f64,
        width: u32,
        height: u32,
    },
}

/// Land-use role of a region. The nine legend categories plus the
/// `Unassigned` sentinel used for slots the solver has yet to fill.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LandUseType {
    Residential,
    StateGovtProperty,
    Business,
    PublicUtilities,
    ShopsAndMarket,
    Educational,
    VacantLand,
    ParkAndOpenSpace,
    Hospital,
    Unassigned,
}

impl LandUseType {
    /// The nine legend categories in legend-table order.
    pub const LEGEND: [LandUseType; 9] = [
        LandUseType::Residential,
        LandUseType::StateGovtProperty,
        LandUseType::Business,
        LandUseType::PublicUtilities,
        LandUseType::ShopsAndMarket,
        LandUseType::Educational,
        LandUseType::VacantLand,
        LandUseType::ParkAndOpenSpace,
        LandUseType::Hospital,
    ];

    /// Non-residential roles the solver places by default.
    pub const DEFAULT_PLAYERS: [LandUseType; 7] = [
        LandUseType::Business,
        LandUseType::PublicUtilities,
        LandUseType::ShopsAndMarket,
        LandUseType::Educational,
        LandUseType::Hospital,
        LandUseType::ParkAndOpenSpace,
        LandUseType::StateGovtProperty,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LandUseType::Residential => "Residential",
            LandUseType::StateGovtProperty => "StateGovtProperty",
            LandUseType::Business => "Business",
            LandUseType::PublicUtilities => "PublicUtilities",
            LandUseType::ShopsAndMarket => "ShopsAndMarket",
            LandUseType::Educational => "Educational",
            LandUseType::VacantLand => "VacantLand",
            LandUseType::ParkAndOpenSpace => "ParkAndOpenSpace",
            LandUseType::Hospital => "Hospital",
            LandUseType::Unassigned => "Unassigned",
        }
    }

    pub fn is_legend(self) -> bool {
        self != LandUseType::Unassigned
    }

    /// Slot that a player may claim: never assigned, or vacant.
    pub fn is_open(self) -> bool {
        matches!(self, LandUseType::Unassigned | LandUseType::VacantLand)
    }
}

impl fmt::Display for LandUseType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LandUseType {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        LandUseType::LEGEND
            .iter()
            .chain(std::iter::once(&LandUseType::Unassigned))
            .copied()
            .find(|t| t.name() == s)
            .ok_or_else(|| ModelError::UnknownLandUse(s.to_string()))
    }
}

/// Legend RGB triple of a land-use category.
pub fn legend_color(t: LandUseType) -> Result<Rgb, ModelError> {
    Ok(match t {
        LandUseType::Residential => [255, 255, 190],
        LandUseType::StateGovtProperty => [194, 231, 252],
        LandUseType::Business => [192, 209, 254],
        LandUseType::PublicUtilities => [255, 235, 190],
        LandUseType::ShopsAndMarket => [200, 214, 157],
        LandUseType::Educational => [254, 191, 229],
        LandUseType::VacantLand => [214, 194, 158],
        LandUseType::ParkAndOpenSpace => [210, 255, 116],
        LandUseType::Hospital => [255, 190, 190],
        LandUseType::Unassigned => return Err(ModelError::NotALegendType(t)),
    })
}

/// Opaque region identifier. Ordered naturally, so `r2 < r10`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RegionId(String);

impl RegionId {
    pub fn new(id: impl Into<String>) -> Self {
        RegionId(id.into())
    }

    /// Id for the `n`-th region of an inventory.
    pub fn indexed(n: usize) -> Self {
        RegionId(format!("r{n}"))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    fn split_numeric(&self) -> (&str, Option<u128>) {
        let s = self.0.as_str();
        let head = s.trim_end_matches(|c: char| c.is_ascii_digit());
        let tail = &s[head.len()..];
        (head, tail.parse().ok())
    }
}

impl Ord for RegionId {
    fn cmp(&self, other: &Self) -> Ordering {
        let (ha, na) = self.split_numeric();
        let (hb, nb) = other.split_numeric();
        ha.cmp(hb)
            .then_with(|| na.cmp(&nb))
            .then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for RegionId {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for RegionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for RegionId {
    fn from(s: &str) -> Self {
        RegionId::new(s)
    }
}

/// One connected land parcel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct Region<T> {
    pub id: RegionId,
    #[serde(rename = "type")]
    pub land_use: LandUseType,
    pub area_px: u64,
    pub centroid: Point<T>,
}

impl<T: Scalar> Region<T> {
    pub fn new(id: impl Into<RegionId>, land_use: LandUseType, area_px: u64, centroid: Point<T>) -> Self {
        Region {
            id: id.into(),
            land_use,
            area_px,
            centroid,
        }
    }
}

impl From<String> for RegionId {
    fn from(s: String) -> Self {
        RegionId(s)
    }
}

/// Map scale and the three accessibility radii.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
#[serde(default)]
pub struct ScaleConfig<T> {
    pub meters_per_pixel: T,
    pub service_radius_m: T,
    pub ecology_radius_m: T,
    pub satisfaction_radius_m: T,
}

impl<T: Scalar> Default for ScaleConfig<T> {
    fn default() -> Self {
        ScaleConfig {
            meters_per_pixel: T::one(),
            service_radius_m: T::lit(500.0),
            ecology_radius_m: T::lit(300.0),
            satisfaction_radius_m: T::lit(800.0),
        }
    }
}

impl<T: Scalar> ScaleConfig<T> {
    pub fn with_meters_per_pixel(meters_per_pixel: T) -> Self {
        ScaleConfig {
            meters_per_pixel,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let fields = [
            ("meters_per_pixel", self.meters_per_pixel),
            ("service_radius_m", self.service_radius_m),
            ("ecology_radius_m", self.ecology_radius_m),
            ("satisfaction_radius_m", self.satisfaction_radius_m),
        ];
        for (name, v) in fields {
            if !(v > T::zero() && v.is_finite()) {
                return Err(ModelError::InvalidScale(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Canvas {
    pub width: u32,
    pub height: u32,
}

impl Canvas {
    pub fn new(width: u32, height: u32) -> Self {
        Canvas { width, height }
    }

    pub fn contains<T: Scalar>(&self, p: &Point<T>) -> bool {
        p.x >= T::zero()
            && p.y >= T::zero()
            && p.x < T::from_u32(self.width).unwrap()
            && p.y < T::from_u32(self.height).unwrap()
    }
}

/// Fixed region geometry plus the mutable role overlay (the game state).
///
/// Regions are kept in ascending [`RegionId`] order; every index-based accessor
/// refers to that order.
#[derive(Debug, Clone, PartialEq)]
pub struct CityLayout<T> {
    regions: Vec<Region<T>>,
    assignment: Vec<LandUseType>,
    index: HashMap<RegionId, usize>,
    scale: ScaleConfig<T>,
    canvas: Option<Canvas>,
}

impl<T: Scalar> CityLayout<T> {
    /// Layout whose assignment starts as each region's ingested role.
    pub fn new(mut regions: Vec<Region<T>>, scale: ScaleConfig<T>) -> Result<Self, ModelError> {
        scale.validate()?;
        regions.sort_by(|a, b| a.id.cmp(&b.id));
        let mut index = HashMap::with_capacity(regions.len());
        for (i, r) in regions.iter().enumerate() {
            if index.insert(r.id.clone(), i).is_some() {
                return Err(ModelError::DuplicateRegion(r.id.clone()));
            }
        }
        let assignment = regions.iter().map(|r| r.land_use).collect();
        Ok(CityLayout {
            regions,
            assignment,
            index,
            scale,
            canvas: None,
        })
    }

    /// Layout with an explicit assignment overlay covering every region.
    pub fn with_assignment(
        regions: Vec<Region<T>>,
        assignment: &BTreeMap<RegionId, LandUseType>,
        scale: ScaleConfig<T>,
    ) -> Result<Self, ModelError> {
        let mut layout = Self::new(regions, scale)?;
        if let Some(extra) = assignment.keys().find(|id| !layout.index.contains_key(*id)) {
            return Err(ModelError::UnknownRegion(extra.clone()));
        }
        for i in 0..layout.regions.len() {
            let id = &layout.regions[i].id;
            let role = assignment
                .get(id)
                .ok_or_else(|| ModelError::MissingAssignment(id.clone()))?;
            layout.assignment[i] = *role;
        }
        Ok(layout)
    }

    pub fn with_canvas(mut self, canvas: Canvas) -> Result<Self, ModelError> {
        if let Some(r) = self.regions.iter().find(|r| !canvas.contains(&r.centroid)) {
            return Err(ModelError::CentroidOutOfBounds {
                id: r.id.clone(),
                x: r.centroid.x.to_f64().unwrap_or(f64::NAN),
                y: r.centroid.y.to_f64().unwrap_or(f64::NAN),
                width: canvas.width,
                height: canvas.height,
            });
        }
        self.canvas = Some(canvas);
        Ok(self)
    }

    pub fn regions(&self) -> &[Region<T>] {
        &self.regions
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    pub fn scale(&self) -> &ScaleConfig<T> {
        &self.scale
    }

    pub fn set_scale(&mut self, scale: ScaleConfig<T>) -> Result<(), ModelError> {
        scale.validate()?;
        self.scale = scale;
        Ok(())
    }

    pub fn canvas(&self) -> Option<Canvas> {
        self.canvas
    }

    pub fn assignment(&self) -> &[LandUseType] {
        &self.assignment
    }

    pub fn role(&self, idx: usize) -> LandUseType {
        self.assignment[idx]
    }

    pub fn set_role(&mut self, idx: usize, role: LandUseType) {
        self.assignment[idx] = role;
    }

    pub fn swap_roles(&mut self, a: usize, b: usize) {
        self.assignment.swap(a, b);
    }

    pub fn index_of(&self, id: &RegionId) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn role_of(&self, id: &RegionId) -> Option<LandUseType> {
        self.index_of(id).map(|i| self.assignment[i])
    }

    pub fn centroid(&self, idx: usize) -> Point<T> {
        self.regions[idx].centroid
    }

    /// Indices of regions currently holding `role`, ascending id order.
    pub fn indices_with_role(&self, role: LandUseType) -> impl Iterator<Item = usize> + '_ {
        self.assignment
            .iter()
            .enumerate()
            .filter(move |(_, r)| **r == role)
            .map(|(i, _)| i)
    }

    pub fn centroids_with_role(&self, role: LandUseType) -> Vec<Point<T>> {
        self.indices_with_role(role).map(|i| self.regions[i].centroid).collect()
    }

    pub fn count_role(&self, role: LandUseType) -> usize {
        self.assignment.iter().filter(|r| **r == role).count()
    }

    /// Multiset of assigned roles.
    pub fn role_multiset(&self) -> BTreeMap<LandUseType, usize> {
        let mut counts = BTreeMap::new();
        for r in &self.assignment {
            *counts.entry(*r).or_insert(0) += 1;
        }
        counts
    }

    /// Assignment as an id-keyed map.
    pub fn assignment_map(&self) -> BTreeMap<RegionId, LandUseType> {
        self.regions
            .iter()
            .zip(&self.assignment)
            .map(|(r, t)| (r.id.clone(), *t))
            .collect()
    }

    /// Copy of the layout whose geometry is shifted by `(dx, dy)` pixels.
    pub fn translated(&self, dx: T, dy: T) -> Self {
        let mut out = self.clone();
        for r in &mut out.regions {
            r.centroid = r.centroid.translate(dx, dy);
        }
        out.canvas = None;
        out
    }

    /// Applies an edit in place. Geometry is never touched.
    pub fn apply_action(&mut self, action: &LayoutAction) -> Result<(), ModelError> {
        match action {
            LayoutAction::Reassign { target, new_type } => {
                let i = self.require(target)?;
                self.assignment[i] = *new_type;
            }
            LayoutAction::Swap { target, other } => {
                if target == other {
                    return Err(ModelError::InvalidAction(format!("swap of `{target}` with itself")));
                }
                let a = self.require(target)?;
                let b = self.require(other)?;
                self.assignment.swap(a, b);
            }
        }
        Ok(())
    }

    /// Functional form of [`CityLayout::apply_action`].
    pub fn applied(&self, action: &LayoutAction) -> Result<Self, ModelError> {
        let mut out = self.clone();
        out.apply_action(action)?;
        Ok(out)
    }

    /// Checks one action against the change policy. `accepted_so_far` is the
    /// number of actions already spent from the current proposal's budget.
    pub fn validate_action(
        &self,
        action: &LayoutAction,
        policy: &ChangePolicy,
        accepted_so_far: usize,
    ) -> Result<(), Rejection> {
        if accepted_so_far >= policy.budget {
            return Err(Rejection::BudgetExceeded { budget: policy.budget });
        }
        match action {
            LayoutAction::Reassign { target, new_type } => {
                let current = self
                    .role_of(target)
                    .ok_or_else(|| Rejection::UnknownRegion { region: target.clone() })?;
                if !new_type.is_legend() {
                    return Err(Rejection::InvalidAction {
                        detail: format!("cannot reassign `{target}` to {new_type}"),
                    });
                }
                if policy.is_protected(current) {
                    return Err(Rejection::ProtectedRole {
                        region: target.clone(),
                        role: current,
                    });
                }
                if policy.is_protected(*new_type) {
                    return Err(Rejection::ProtectedRole {
                        region: target.clone(),
                        role: *new_type,
                    });
                }
                if current != LandUseType::VacantLand && !policy.allow_non_vacant_reassign {
                    return Err(Rejection::NotVacant {
                        region: target.clone(),
                        role: current,
                    });
                }
            }
            LayoutAction::Swap { target, other } => {
                if target == other {
                    return Err(Rejection::InvalidAction {
                        detail: format!("swap of `{target}` with itself"),
                    });
                }
                for id in [target, other] {
                    let role = self
                        .role_of(id)
                        .ok_or_else(|| Rejection::UnknownRegion { region: id.clone() })?;
                    if policy.is_protected(role) {
                        return Err(Rejection::ProtectedRole {
                            region: id.clone(),
                            role,
                        });
                    }
                }
            }
        }
        Ok(())
    }

    /// Checks a whole action list without applying any of it.
    pub fn validate_actions(&self, actions: &[LayoutAction], policy: &ChangePolicy) -> Result<(), Rejection> {
        if actions.len() > policy.budget {
            return Err(Rejection::BudgetExceeded { budget: policy.budget });
        }
        actions
            .iter()
            .enumerate()
            .try_for_each(|(i, a)| self.validate_action(a, policy, i))
    }

    fn require(&self, id: &RegionId) -> Result<usize, ModelError> {
        self.index_of(id).ok_or_else(|| ModelError::UnknownRegion(id.clone()))
    }
}

/// The four demographic roles handed to regional planners.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DemographicKind {
    Industrial,
    Educational,
    Commercial,
    Residential,
}

impl DemographicKind {
    /// Fixed processing order for integration.
    pub const ALL: [DemographicKind; 4] = [
        DemographicKind::Industrial,
        DemographicKind::Educational,
        DemographicKind::Commercial,
        DemographicKind::Residential,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DemographicKind::Industrial => "Industrial",
            DemographicKind::Educational => "Educational",
            DemographicKind::Commercial => "Commercial",
            DemographicKind::Residential => "Residential",
        }
    }

    pub fn default_needs(self) -> Vec<LandUseType> {
        use LandUseType::*;
        match self {
            DemographicKind::Industrial => vec![Business, PublicUtilities, ShopsAndMarket],
            DemographicKind::Educational => vec![Educational, ParkAndOpenSpace, ShopsAndMarket, Hospital],
            DemographicKind::Commercial => vec![Business, ShopsAndMarket, PublicUtilities],
            DemographicKind::Residential => vec![Hospital, Educational, ShopsAndMarket, ParkAndOpenSpace],
        }
    }
}

impl fmt::Display for DemographicKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A demographic role with its 3 to 5 prioritized land-use needs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DemographicRole {
    kind: DemographicKind,
    needs: Vec<LandUseType>,
}

impl DemographicRole {
    pub fn new(kind: DemographicKind, needs: Vec<LandUseType>) -> Result<Self, ModelError> {
        if !(3..=5).contains(&needs.len()) {
            return Err(ModelError::InvalidDemographicRole(format!(
                "{kind} needs {} categories, expected 3 to 5",
                needs.len()
            )));
        }
        for (i, n) in needs.iter().enumerate() {
            if !n.is_legend() {
                return Err(ModelError::InvalidDemographicRole(format!("{kind} lists {n} as a need")));
            }
            if needs[..i].contains(n) {
                return Err(ModelError::InvalidDemographicRole(format!("{kind} lists {n} twice")));
            }
        }
        Ok(DemographicRole { kind, needs })
    }

    pub fn default_for(kind: DemographicKind) -> Self {
        DemographicRole {
            kind,
            needs: kind.default_needs(),
        }
    }

    pub fn kind(&self) -> DemographicKind {
        self.kind
    }

    pub fn needs(&self) -> &[LandUseType] {
        &self.needs
    }
}

/// A single layout edit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LayoutAction {
    Reassign { target: RegionId, new_type: LandUseType },
    Swap { target: RegionId, other: RegionId },
}

impl LayoutAction {
    pub fn reassign(target: impl Into<RegionId>, new_type: LandUseType) -> Self {
        LayoutAction::Reassign {
            target: target.into(),
            new_type,
        }
    }

    pub fn swap(target: impl Into<RegionId>, other: impl Into<RegionId>) -> Self {
        LayoutAction::Swap {
            target: target.into(),
            other: other.into(),
        }
    }

    pub fn target(&self) -> &RegionId {
        match self {
            LayoutAction::Reassign { target, .. } | LayoutAction::Swap { target, .. } => target,
        }
    }
}

impl fmt::Display for LayoutAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LayoutAction::Reassign { target, new_type } => write!(f, "reassign {target} -> {new_type}"),
            LayoutAction::Swap { target, other } => write!(f, "swap {target} <-> {other}"),
        }
    }
}

/// Minimal-change policy applied to Stage-3 edits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChangePolicy {
    pub budget: usize,
    pub allow_non_vacant_reassign: bool,
    pub protected_roles: Vec<LandUseType>,
}

impl Default for ChangePolicy {
    fn default() -> Self {
        ChangePolicy {
            budget: 5,
            allow_non_vacant_reassign: false,
            protected_roles: vec![LandUseType::Residential, LandUseType::ParkAndOpenSpace],
        }
    }
}

impl ChangePolicy {
    pub fn is_protected(&self, role: LandUseType) -> bool {
        self.protected_roles.contains(&role)
    }
}

/// Why an action was refused.
#[derive(Debug, Error, Clone, PartialEq, Serialize)]
#[serde(tag = "reason")]
pub enum Rejection {
    #[error("unknown region `{region}`")]
    UnknownRegion { region: RegionId },
    #[error("invalid action: {detail}")]
    InvalidAction { detail: String },
    #[error("region `{region}` is {role}, only vacant land may be reassigned")]
    NotVacant { region: RegionId, role: LandUseType },
    #[error("region `{region}` involves protected role {role}")]
    ProtectedRole { region: RegionId, role: LandUseType },
    #[error("action budget of {budget} exhausted")]
    BudgetExceeded { budget: usize },
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn toy() -> CityLayout<f64> {
        use LandUseType::*;
        let regions = vec![
            Region::new("r1", Business, 30, Point::new(1.0, 1.0)),
            Region::new("r2", Hospital, 30, Point::new(5.0, 1.0)),
            Region::new("r3", VacantLand, 30, Point::new(9.0, 1.0)),
            Region::new("r4", ParkAndOpenSpace, 30, Point::new(1.0, 9.0)),
            Region::new("r5", Residential, 30, Point::new(5.0, 9.0)),
        ];
        CityLayout::new(regions, ScaleConfig::default()).unwrap()
    }

    #[test]
    fn legend_colors_match_table() {
        assert_eq!(legend_color(LandUseType::Residential).unwrap(), [255, 255, 190]);
        assert_eq!(legend_color(LandUseType::ParkAndOpenSpace).unwrap(), [210, 255, 116]);
        assert_eq!(legend_color(LandUseType::Hospital).unwrap(), [255, 190, 190]);
        assert_eq!(
            legend_color(LandUseType::Unassigned),
            Err(ModelError::NotALegendType(LandUseType::Unassigned))
        );
    }

    #[test]
    fn legend_is_injective() {
        let colors: HashSet<Rgb> = LandUseType::LEGEND.iter().map(|t| legend_color(*t).unwrap()).collect();
        assert_eq!(colors.len(), 9);
    }

    #[test]
    fn names_round_trip() {
        for t in LandUseType::LEGEND {
            assert_eq!(t.name().parse::<LandUseType>().unwrap(), t);
            assert_eq!(serde_json::to_string(&t).unwrap(), format!("\"{}\"", t.name()));
        }
        assert!("Park".parse::<LandUseType>().is_err());
    }

    #[test]
    fn region_ids_sort_naturally() {
        let mut ids: Vec<RegionId> = ["r10", "r2", "r1", "a3"].iter().map(|s| RegionId::from(*s)).collect();
        ids.sort();
        let got: Vec<&str> = ids.iter().map(|i| i.as_str()).collect();
        assert_eq!(got, ["a3", "r1", "r2", "r10"]);
    }

    #[test]
    fn swap_exchanges_roles() {
        let mut l = toy();
        l.apply_action(&LayoutAction::swap("r1", "r2")).unwrap();
        assert_eq!(l.role_of(&"r1".into()), Some(LandUseType::Hospital));
        assert_eq!(l.role_of(&"r2".into()), Some(LandUseType::Business));
    }

    #[test]
    fn reassign_sets_role() {
        let l = toy().applied(&LayoutAction::reassign("r3", LandUseType::Educational)).unwrap();
        assert_eq!(l.role_of(&"r3".into()), Some(LandUseType::Educational));
        assert_eq!(l.regions(), toy().regions());
    }

    #[test]
    fn self_swap_and_unknown_ids_fail() {
        let mut l = toy();
        assert!(matches!(
            l.apply_action(&LayoutAction::swap("r1", "r1")),
            Err(ModelError::InvalidAction(_))
        ));
        assert_eq!(
            l.apply_action(&LayoutAction::reassign("r99", LandUseType::Hospital)),
            Err(ModelError::UnknownRegion("r99".into()))
        );
        assert_eq!(l, toy());
    }

    #[test]
    fn validation_rules() {
        let l = toy();
        let p = ChangePolicy::default();
        assert!(matches!(
            l.validate_action(&LayoutAction::reassign("r4", LandUseType::Business), &p, 0),
            Err(Rejection::ProtectedRole { .. })
        ));
        assert_eq!(l.validate_action(&LayoutAction::reassign("r3", LandUseType::Hospital), &p, 0), Ok(()));
        assert!(matches!(
            l.validate_action(&LayoutAction::reassign("r1", LandUseType::Hospital), &p, 0),
            Err(Rejection::NotVacant { .. })
        ));
        assert!(matches!(
            l.validate_action(&LayoutAction::swap("r1", "r5"), &p, 0),
            Err(Rejection::ProtectedRole { .. })
        ));
        assert_eq!(l.validate_action(&LayoutAction::swap("r1", "r2"), &p, 0), Ok(()));
        assert_eq!(
            l.validate_action(&LayoutAction::swap("r1", "r7"), &p, 0),
            Err(Rejection::UnknownRegion { region: "r7".into() })
        );
        let six = vec![LayoutAction::reassign("r3", LandUseType::Hospital); 6];
        assert_eq!(l.validate_actions(&six, &p), Err(Rejection::BudgetExceeded { budget: 5 }));
    }

    #[test]
    fn demographic_role_bounds() {
        use LandUseType::*;
        assert!(DemographicRole::new(DemographicKind::Industrial, vec![Business, Hospital]).is_err());
        assert!(DemographicRole::new(DemographicKind::Industrial, vec![Business, Hospital, Business]).is_err());
        for k in DemographicKind::ALL {
            let d = DemographicRole::default_for(k);
            assert_eq!(DemographicRole::new(k, d.needs().to_vec()).unwrap(), d);
        }
    }

    #[test]
    fn scale_must_be_positive() {
        let mut s = ScaleConfig::<f64>::default();
        assert!(s.validate().is_ok());
        s.ecology_radius_m = 0.0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn duplicate_ids_rejected() {
        let r = Region::new("r1", LandUseType::Hospital, 1, Point::new(0.0f64, 0.0));
        assert!(CityLayout::new(vec![r.clone(), r], ScaleConfig::default()).is_err());
    }
}
