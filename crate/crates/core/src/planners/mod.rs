//! Stage-3 planner integration. Regional planners see one sub-region each and
//! propose edits; the master planner validates every edit against the change
//! policy and a metric guard before applying it.

mod client;
mod heuristic;
mod integrate;
mod wire;

use serde::Serialize;
use thiserror::Error;

use crate::ingest::{check_mask_dims, IngestError};
use crate::metrics::{subregion_satisfaction, unmet_needs, Evaluator, MetricsError, MetricsReport, SubRegion};
use crate::model::{ChangePolicy, CityLayout, DemographicKind, DemographicRole, LandUseType, LayoutAction, RegionId, ScaleConfig};
use crate::scalar::{Point, Scalar};

pub use client::{ChatMessage, CompletionClient, CompletionError, HttpCompletionClient, ScriptedClient};
pub use heuristic::{heuristic_planner, HeuristicPlanner};
pub use integrate::{integrate, plan_round, Decision, DecisionRecord, IntegrationPolicy, RoundOutcome};
pub use wire::{parse_proposal, render_prompt, LlmPlanner, PROPOSAL_SCHEMA};

#[derive(Debug, Error)]
pub enum PlannerError {
    #[error("malformed proposal: {0}")]
    Parse(String),
    #[error("proposal references unknown region `{0}`")]
    UnknownRegion(RegionId),
    #[error("proposal has {got} actions, budget is {budget}")]
    BudgetExceeded { budget: usize, got: usize },
    #[error("invalid action: {0}")]
    InvalidAction(String),
    #[error("planner for {subregion} gave no usable proposal after {attempts} attempts: {last_error}")]
    PlannerFailed {
        subregion: DemographicKind,
        attempts: usize,
        last_error: String,
    },
    #[error("sub-region {0} contains no regions")]
    EmptySubRegion(DemographicKind),
    #[error("completion service failed: {0}")]
    Service(#[from] CompletionError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// A region as seen by a regional planner.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound(serialize = "T: Scalar"))]
pub struct ContextRegion<T> {
    pub id: RegionId,
    pub role: LandUseType,
    pub centroid: Point<T>,
}

/// Residential region of the sub-region with the needs it lacks.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound(serialize = "T: Scalar"))]
pub struct ResidentNeeds<T> {
    pub id: RegionId,
    pub centroid: Point<T>,
    pub unmet: Vec<LandUseType>,
}

/// Everything a regional planner is told about its sub-region.
#[derive(Debug, Clone, PartialEq)]
pub struct PlannerContext<T> {
    pub subregion: DemographicKind,
    pub role: DemographicRole,
    /// Mask-filtered regions, ascending id order.
    pub regions: Vec<ContextRegion<T>>,
    pub residents: Vec<ResidentNeeds<T>>,
    pub city_metrics: MetricsReport<T>,
    /// `None` when no resident lives in the sub-region.
    pub satisfaction: Option<T>,
    pub budget: usize,
    pub protected_roles: Vec<LandUseType>,
    pub scale: ScaleConfig<T>,
}

impl<T: Scalar> PlannerContext<T> {
    pub fn contains(&self, id: &RegionId) -> bool {
        self.regions.iter().any(|r| &r.id == id)
    }

    pub fn region(&self, id: &RegionId) -> Option<&ContextRegion<T>> {
        self.regions.iter().find(|r| &r.id == id)
    }
}

/// A regional planner's requested edits.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Proposal {
    pub subregion: DemographicKind,
    pub actions: Vec<LayoutAction>,
    pub rationale: String,
}

impl Proposal {
    pub fn empty(subregion: DemographicKind) -> Self {
        Proposal {
            subregion,
            actions: Vec::new(),
            rationale: String::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProposalOutcome {
    pub proposal: Proposal,
    /// Re-asks spent on malformed replies.
    pub retries_used: usize,
}

/// Anything that can turn a context into a proposal.
pub trait RegionalPlanner<T: Scalar>: Sync {
    fn propose(&self, ctx: &PlannerContext<T>) -> Result<ProposalOutcome, PlannerError>;
}

/// Context for the sub-region under `sub.mask`, with the city-wide report.
pub fn build_regional_context<T: Scalar>(
    layout: &CityLayout<T>,
    sub: &SubRegion,
    policy: &ChangePolicy,
    evaluator: &Evaluator,
    city_metrics: &MetricsReport<T>,
) -> Result<PlannerContext<T>, PlannerError> {
    if let Some(canvas) = layout.canvas() {
        check_mask_dims(&sub.mask, canvas)?;
    }
    let regions: Vec<ContextRegion<T>> = layout
        .regions()
        .iter()
        .enumerate()
        .filter(|(_, r)| sub.mask.covers(&r.centroid))
        .map(|(i, r)| ContextRegion {
            id: r.id.clone(),
            role: layout.role(i),
            centroid: r.centroid,
        })
        .collect();
    if regions.is_empty() {
        log::warn!("sub-region {} contains no regions", sub.role.kind());
        return Err(PlannerError::EmptySubRegion(sub.role.kind()));
    }
    let residents = unmet_needs(layout, &sub.mask, &sub.role)
        .into_iter()
        .map(|(id, unmet)| {
            let centroid = layout.centroid(layout.index_of(&id).expect("id from layout"));
            ResidentNeeds { id, centroid, unmet }
        })
        .collect();
    let satisfaction = subregion_satisfaction(layout, sub, evaluator.weighting).ok();
    Ok(PlannerContext {
        subregion: sub.role.kind(),
        role: sub.role.clone(),
        regions,
        residents,
        city_metrics: city_metrics.clone(),
        satisfaction,
        budget: policy.budget,
        protected_roles: policy.protected_roles.clone(),
        scale: *layout.scale(),
    })
}

/// Dispatches to either planner backend through the shared trait.
pub fn propose<T: Scalar>(planner: &dyn RegionalPlanner<T>, ctx: &PlannerContext<T>) -> Result<ProposalOutcome, PlannerError> {
    planner.propose(ctx)
}
