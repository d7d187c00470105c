use std::fmt::Write as _;

use serde::Deserialize;

use super::client::{ChatMessage, CompletionClient};
use super::{PlannerContext, PlannerError, Proposal, ProposalOutcome, RegionalPlanner};
use crate::model::{LandUseType, LayoutAction, RegionId};
use crate::scalar::Scalar;

/// JSON shape regional planners must answer with.
pub const PROPOSAL_SCHEMA: &str = r#"{"actions": [{"kind": "reassign"|"swap", "target": "<region-id>", "new_type": "<LandUseType>"?, "other": "<region-id>"?}], "rationale": "<string>"}"#;

#[derive(Deserialize)]
struct WireProposal {
    actions: Vec<WireAction>,
    #[serde(default)]
    rationale: String,
}

#[derive(Deserialize)]
struct WireAction {
    kind: String,
    target: String,
    #[serde(default)]
    new_type: Option<String>,
    #[serde(default)]
    other: Option<String>,
}

/// Drops a surrounding markdown code fence, if any.
fn strip_fence(raw: &str) -> &str {
    let t = raw.trim();
    let Some(rest) = t.strip_prefix("```") else {
        return t;
    };
    let body = rest.split_once('\n').map(|(_, b)| b).unwrap_or("");
    body.trim_end().strip_suffix("```").unwrap_or(body).trim()
}

/// Decodes a planner reply and checks it against the context.
pub fn parse_proposal<T: Scalar>(raw: &str, ctx: &PlannerContext<T>) -> Result<Proposal, PlannerError> {
    let wire: WireProposal = serde_json::from_str(strip_fence(raw)).map_err(|e| PlannerError::Parse(e.to_string()))?;
    if wire.actions.len() > ctx.budget {
        return Err(PlannerError::BudgetExceeded {
            budget: ctx.budget,
            got: wire.actions.len(),
        });
    }
    let known = |s: &str| -> Result<RegionId, PlannerError> {
        let id = RegionId::new(s);
        if ctx.contains(&id) {
            Ok(id)
        } else {
            Err(PlannerError::UnknownRegion(id))
        }
    };
    let actions = wire
        .actions
        .into_iter()
        .map(|a| match a.kind.as_str() {
            "reassign" => {
                let name = a
                    .new_type
                    .ok_or_else(|| PlannerError::InvalidAction("reassign without new_type".into()))?;
                let new_type: LandUseType = name
                    .parse()
                    .map_err(|_| PlannerError::InvalidAction(format!("unknown land-use type `{name}`")))?;
                if !new_type.is_legend() {
                    return Err(PlannerError::InvalidAction(format!("cannot reassign to {new_type}")));
                }
                Ok(LayoutAction::Reassign {
                    target: known(&a.target)?,
                    new_type,
                })
            }
            "swap" => {
                let other = a.other.ok_or_else(|| PlannerError::InvalidAction("swap without other".into()))?;
                if other == a.target {
                    return Err(PlannerError::InvalidAction(format!("swap of `{other}` with itself")));
                }
                Ok(LayoutAction::Swap {
                    target: known(&a.target)?,
                    other: known(&other)?,
                })
            }
            other => Err(PlannerError::InvalidAction(format!("unknown action kind `{other}`"))),
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Proposal {
        subregion: ctx.subregion,
        actions,
        rationale: wire.rationale,
    })
}

/// System and user messages describing the sub-region and the reply format.
pub fn render_prompt<T: Scalar>(ctx: &PlannerContext<T>) -> Vec<ChatMessage> {
    let needs: Vec<&str> = ctx.role.needs().iter().map(|t| t.name()).collect();
    let protected: Vec<&str> = ctx.protected_roles.iter().map(|t| t.name()).collect();
    let types: Vec<&str> = LandUseType::LEGEND.iter().map(|t| t.name()).collect();
    let system = format!(
        "You are the regional planner for the {kind} sub-region of a city. \
         Residents here prioritise: {needs}. \
         Propose at most {budget} layout edits that bring these needs within {radius} m of residents. \
         Allowed edits: \"reassign\" a VacantLand region to a new land-use type, or \"swap\" the types of two regions. \
         Never touch regions of type {protected}. \
         Land-use types: {types}. \
         Reply with JSON only, matching exactly: {schema}",
        kind = ctx.subregion,
        needs = needs.join(", "),
        budget = ctx.budget,
        radius = ctx.scale.satisfaction_radius_m,
        protected = protected.join(", "),
        types = types.join(", "),
        schema = PROPOSAL_SCHEMA,
    );
    let mut user = String::new();
    let m = &ctx.city_metrics;
    let _ = writeln!(
        user,
        "City metrics: service {:.3}, ecology {:.3}, satisfaction {:.3}.",
        m.service.to_f64().unwrap_or(f64::NAN),
        m.ecology.to_f64().unwrap_or(f64::NAN),
        m.satisfaction.to_f64().unwrap_or(f64::NAN)
    );
    match ctx.satisfaction {
        Some(s) => {
            let _ = writeln!(user, "Sub-region satisfaction: {:.3}.", s.to_f64().unwrap_or(f64::NAN));
        }
        None => user.push_str("Sub-region has no residents.\n"),
    }
    let _ = writeln!(user, "Meters per pixel: {}.", ctx.scale.meters_per_pixel);
    user.push_str("Regions (id | type | x | y):\n");
    for r in &ctx.regions {
        let _ = writeln!(user, "{} | {} | {:.1} | {:.1}", r.id, r.role, r.centroid.x.to_f64().unwrap_or(f64::NAN), r.centroid.y.to_f64().unwrap_or(f64::NAN));
    }
    user.push_str("Unmet needs per residential region:\n");
    for r in &ctx.residents {
        let unmet: Vec<&str> = r.unmet.iter().map(|t| t.name()).collect();
        let _ = writeln!(user, "{}: {}", r.id, if unmet.is_empty() { "none".to_string() } else { unmet.join(", ") });
    }
    vec![ChatMessage::system(system), ChatMessage::user(user)]
}

/// Regional planner backed by a completion service. Malformed replies are
/// re-asked up to `retries` times with the decoding error attached.
pub struct LlmPlanner<C> {
    pub client: C,
    pub retries: usize,
}

impl<C: CompletionClient> LlmPlanner<C> {
    pub fn new(client: C, retries: usize) -> Self {
        LlmPlanner { client, retries }
    }
}

impl<T: Scalar, C: CompletionClient> RegionalPlanner<T> for LlmPlanner<C> {
    fn propose(&self, ctx: &PlannerContext<T>) -> Result<ProposalOutcome, PlannerError> {
        let mut messages = render_prompt(ctx);
        let mut last_error = String::new();
        for attempt in 0..=self.retries {
            let reply = self.client.complete(&messages)?;
            match parse_proposal(&reply, ctx) {
                Ok(proposal) => {
                    return Ok(ProposalOutcome {
                        proposal,
                        retries_used: attempt,
                    })
                }
                Err(e) => {
                    log::warn!("{} planner reply rejected (attempt {}): {e}", ctx.subregion, attempt + 1);
                    last_error = e.to_string();
                    messages.push(ChatMessage::assistant(reply));
                    messages.push(ChatMessage::user(format!(
                        "Your reply was rejected: {e}. Answer again with JSON only, matching: {PROPOSAL_SCHEMA}"
                    )));
                }
            }
        }
        Err(PlannerError::PlannerFailed {
            subregion: ctx.subregion,
            attempts: self.retries + 1,
            last_error,
        })
    }
}
