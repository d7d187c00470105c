use serde::{Deserialize, Serialize};

use super::{build_regional_context, PlannerError, Proposal, RegionalPlanner};
use crate::metrics::{Evaluator, MetricsError, SubRegion};
use crate::model::{ChangePolicy, CityLayout, DemographicKind, LayoutAction, Rejection};
use crate::scalar::Scalar;

/// Change policy plus the metric guard used by the master planner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
#[serde(default)]
pub struct IntegrationPolicy<T> {
    #[serde(flatten)]
    pub change: ChangePolicy,
    /// An action must raise satisfaction by strictly more than this.
    pub min_satisfaction_gain: T,
    pub max_service_drop: T,
    pub max_ecology_drop: T,
}

impl<T: Scalar> Default for IntegrationPolicy<T> {
    fn default() -> Self {
        IntegrationPolicy {
            change: ChangePolicy::default(),
            min_satisfaction_gain: T::zero(),
            max_service_drop: T::zero(),
            max_ecology_drop: T::zero(),
        }
    }
}

impl<T: Scalar> IntegrationPolicy<T> {
    pub fn validate(&self) -> Result<(), String> {
        if self.max_service_drop < T::zero() || self.max_ecology_drop < T::zero() {
            return Err("allowed metric drops must be non-negative".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Decision {
    Accepted,
    Rejected { reason: Rejection },
    NoSatisfactionGain,
    ServiceDrop,
    EcologyDrop,
}

impl Decision {
    pub fn is_accepted(&self) -> bool {
        matches!(self, Decision::Accepted)
    }
}

/// One line of the decision log.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound(serialize = "T: Scalar"))]
pub struct DecisionRecord<T> {
    pub subregion: DemographicKind,
    pub index: usize,
    pub action: LayoutAction,
    pub decision: Decision,
    /// Metric deltas of the trial application; absent when policy rejected it outright.
    pub service_delta: Option<T>,
    pub ecology_delta: Option<T>,
    pub satisfaction_delta: Option<T>,
}

impl<T: Scalar> DecisionRecord<T> {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("decision serializes")
    }
}

/// Applies proposals in fixed sub-region order, one action at a time. An
/// action is kept only if it passes the change policy, strictly improves
/// satisfaction beyond the guard, and keeps service and ecology within the
/// allowed drops. Later actions see the effect of earlier accepted ones.
pub fn integrate<T: Scalar>(
    layout: &CityLayout<T>,
    proposals: &[Proposal],
    policy: &IntegrationPolicy<T>,
    evaluator: &Evaluator,
) -> Result<(CityLayout<T>, Vec<DecisionRecord<T>>), MetricsError> {
    let mut ordered: Vec<&Proposal> = proposals.iter().collect();
    ordered.sort_by_key(|p| p.subregion);
    let mut current = layout.clone();
    let mut log = Vec::new();
    let mut scores: Option<(T, T, T)> = None;
    for proposal in ordered {
        let mut accepted = 0usize;
        for (index, action) in proposal.actions.iter().enumerate() {
            let record = |decision, deltas: Option<(T, T, T)>| DecisionRecord {
                subregion: proposal.subregion,
                index,
                action: action.clone(),
                decision,
                service_delta: deltas.map(|d| d.0),
                ecology_delta: deltas.map(|d| d.1),
                satisfaction_delta: deltas.map(|d| d.2),
            };
            if let Err(reason) = current.validate_action(action, &policy.change, accepted) {
                log.push(record(Decision::Rejected { reason }, None));
                continue;
            }
            let trial = match current.applied(action) {
                Ok(t) => t,
                Err(e) => {
                    let reason = Rejection::InvalidAction { detail: e.to_string() };
                    log.push(record(Decision::Rejected { reason }, None));
                    continue;
                }
            };
            let (s0, e0, q0) = match scores {
                Some(s) => s,
                None => {
                    let s = (evaluator.service(&current)?, evaluator.ecology(&current)?, evaluator.satisfaction(&current)?);
                    scores = Some(s);
                    s
                }
            };
            let after = (evaluator.service(&trial)?, evaluator.ecology(&trial)?, evaluator.satisfaction(&trial)?);
            let deltas = (after.0 - s0, after.1 - e0, after.2 - q0);
            let decision = if !(deltas.2 > policy.min_satisfaction_gain) {
                Decision::NoSatisfactionGain
            } else if after.0 < s0 - policy.max_service_drop {
                Decision::ServiceDrop
            } else if after.1 < e0 - policy.max_ecology_drop {
                Decision::EcologyDrop
            } else {
                Decision::Accepted
            };
            if decision.is_accepted() {
                current = trial;
                scores = Some(after);
                accepted += 1;
            }
            log.push(record(decision, Some(deltas)));
        }
    }
    Ok((current, log))
}

#[derive(Debug, Clone)]
pub struct RoundOutcome<T> {
    pub layout: CityLayout<T>,
    pub proposals: Vec<Proposal>,
    pub log: Vec<DecisionRecord<T>>,
    /// Sub-regions whose planner produced nothing usable.
    pub failures: Vec<(DemographicKind, String)>,
}

/// One propose/integrate round over `subregions`. Proposals are requested
/// concurrently. When the primary planner's service fails, `fallback` (if
/// any) is asked instead; otherwise the service error is returned.
pub fn plan_round<T: Scalar>(
    layout: &CityLayout<T>,
    evaluator: &Evaluator,
    policy: &IntegrationPolicy<T>,
    planner: &dyn RegionalPlanner<T>,
    fallback: Option<&dyn RegionalPlanner<T>>,
) -> Result<RoundOutcome<T>, PlannerError> {
    let city = evaluator.report(layout, "current")?;
    let results: Vec<(DemographicKind, Result<Proposal, PlannerError>)> = std::thread::scope(|scope| {
        let handles: Vec<_> = evaluator
            .subregions
            .iter()
            .map(|sub: &SubRegion| {
                let city = &city;
                scope.spawn(move || {
                    let kind = sub.role.kind();
                    let ctx = match build_regional_context(layout, sub, &policy.change, evaluator, city) {
                        Ok(ctx) => ctx,
                        Err(e) => return (kind, Err(e)),
                    };
                    let out = match planner.propose(&ctx) {
                        Err(PlannerError::Service(e)) => match fallback {
                            Some(fb) => {
                                log::warn!("{kind} planner service failed ({e}); using fallback planner");
                                fb.propose(&ctx)
                            }
                            None => Err(PlannerError::Service(e)),
                        },
                        other => other,
                    };
                    (kind, out.map(|o| o.proposal))
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("planner thread panicked")).collect()
    });
    let mut proposals = Vec::new();
    let mut failures = Vec::new();
    for (kind, res) in results {
        match res {
            Ok(p) => proposals.push(p),
            Err(PlannerError::Service(e)) => return Err(PlannerError::Service(e)),
            Err(e) => {
                log::warn!("no proposal for {kind}: {e}");
                failures.push((kind, e.to_string()));
                proposals.push(Proposal::empty(kind));
            }
        }
    }
    let (layout, log) = integrate(layout, &proposals, policy, evaluator)?;
    Ok(RoundOutcome {
        layout,
        proposals,
        log,
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::EssentialServiceSet;
    use crate::model::LandUseType::*;
    use crate::planners::{fixtures, heuristic_planner, CompletionError, HeuristicPlanner, LlmPlanner, ScriptedClient};

    fn evaluator(sub: &SubRegion) -> Evaluator {
        Evaluator::new(EssentialServiceSet::default(), vec![sub.clone()])
    }

    #[test]
    fn empty_proposals_change_nothing() {
        let (l, sub) = fixtures::small();
        let (out, log) = integrate(&l, &[], &IntegrationPolicy::<f64>::default(), &evaluator(&sub)).unwrap();
        assert_eq!(out, l);
        assert!(log.is_empty());
    }

    #[test]
    fn protected_region_rejected() {
        let (mut l, sub) = fixtures::small();
        l.set_role(2, ParkAndOpenSpace);
        let p = Proposal {
            subregion: DemographicKind::Residential,
            actions: vec![LayoutAction::reassign("r2", Business)],
            rationale: String::new(),
        };
        let (out, log) = integrate(&l, &[p], &IntegrationPolicy::default(), &evaluator(&sub)).unwrap();
        assert_eq!(out, l);
        assert!(matches!(
            log[0].decision,
            Decision::Rejected {
                reason: Rejection::ProtectedRole { .. }
            }
        ));
        assert_eq!(log[0].satisfaction_delta, None);
    }

    #[test]
    fn useful_reassign_accepted_and_logged() {
        let (l, sub) = fixtures::small();
        let ev = evaluator(&sub);
        let ctx = fixtures::context(&l, &sub);
        let (out, log) = integrate(&l, &[heuristic_planner(&ctx)], &IntegrationPolicy::default(), &ev).unwrap();
        assert_eq!(out.role(1), Educational);
        assert!(log[0].decision.is_accepted());
        assert_eq!(log[0].satisfaction_delta, Some(1.0 / 3.0));
        let line = log[0].to_json_line();
        assert!(line.contains(r#""verdict":"accepted""#), "{line}");
    }

    #[test]
    fn useless_reassign_rejected() {
        let (l, sub) = fixtures::small();
        let p = Proposal {
            subregion: DemographicKind::Residential,
            actions: vec![LayoutAction::reassign("r1", Business)],
            rationale: String::new(),
        };
        let (out, log) = integrate(&l, &[p], &IntegrationPolicy::default(), &evaluator(&sub)).unwrap();
        assert_eq!(out, l);
        assert_eq!(log[0].decision, Decision::NoSatisfactionGain);
    }

    #[test]
    fn heuristic_and_scripted_client_agree() {
        let (l, sub) = fixtures::small();
        let ev = evaluator(&sub);
        let policy = IntegrationPolicy::default();
        let a = plan_round(&l, &ev, &policy, &HeuristicPlanner, None).unwrap();
        let reply = r#"{"actions":[{"kind":"reassign","target":"r1","new_type":"Educational"}],"rationale":""}"#;
        let llm = LlmPlanner::new(ScriptedClient::from_texts([reply]), 0);
        let b = plan_round(&l, &ev, &policy, &llm, None).unwrap();
        assert_eq!(a.layout, b.layout);
    }

    #[test]
    fn service_failure_uses_fallback_or_errors() {
        let (l, sub) = fixtures::small();
        let ev = evaluator(&sub);
        let policy = IntegrationPolicy::default();
        let down = LlmPlanner::new(ScriptedClient::new([Err(CompletionError::Unavailable("down".into()))]), 0);
        assert!(matches!(
            plan_round(&l, &ev, &policy, &down, None),
            Err(PlannerError::Service(_))
        ));
        let down = LlmPlanner::new(ScriptedClient::new([Err(CompletionError::Unavailable("down".into()))]), 0);
        let out = plan_round(&l, &ev, &policy, &down, Some(&HeuristicPlanner)).unwrap();
        assert_eq!(out.layout.role(1), Educational);
    }

    #[test]
    fn malformed_planner_output_yields_empty_proposal() {
        let (l, sub) = fixtures::small();
        let ev = evaluator(&sub);
        let bad = LlmPlanner::new(ScriptedClient::from_texts(["nope"]), 0);
        let out = plan_round(&l, &ev, &IntegrationPolicy::default(), &bad, None).unwrap();
        assert_eq!(out.layout, l);
        assert_eq!(out.failures.len(), 1);
    }
}
