use super::{PlannerContext, PlannerError, Proposal, ProposalOutcome, RegionalPlanner};
use crate::model::{LandUseType, LayoutAction};
use crate::scalar::Scalar;

/// Deterministic offline planner.
///
/// Walks the role's needs in priority order. For each need left unmet for some
/// resident (the first such resident by id), it reassigns the vacant region
/// nearest to that resident, ties going to the lowest id. Stops at the budget
/// or when vacant regions run out.
pub fn heuristic_planner<T: Scalar>(ctx: &PlannerContext<T>) -> Proposal {
    let mut vacant: Vec<_> = ctx
        .regions
        .iter()
        .filter(|r| r.role == LandUseType::VacantLand)
        .collect();
    let mut actions = Vec::new();
    let mut notes = Vec::new();
    for need in ctx.role.needs() {
        if actions.len() >= ctx.budget || vacant.is_empty() {
            break;
        }
        let Some(resident) = ctx.residents.iter().find(|r| r.unmet.contains(need)) else {
            continue;
        };
        let mut best = 0;
        for (k, v) in vacant.iter().enumerate().skip(1) {
            if v.centroid.distance(&resident.centroid) < vacant[best].centroid.distance(&resident.centroid) {
                best = k;
            }
        }
        let site = vacant.remove(best);
        notes.push(format!("{need} for {} at {}", resident.id, site.id));
        actions.push(LayoutAction::reassign(site.id.clone(), *need));
    }
    Proposal {
        subregion: ctx.subregion,
        actions,
        rationale: notes.join("; "),
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct HeuristicPlanner;

impl<T: Scalar> RegionalPlanner<T> for HeuristicPlanner {
    fn propose(&self, ctx: &PlannerContext<T>) -> Result<ProposalOutcome, PlannerError> {
        Ok(ProposalOutcome {
            proposal: heuristic_planner(ctx),
            retries_used: 0,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::BinaryMask;
    use crate::metrics::SubRegion;
    use crate::model::{Canvas, CityLayout, DemographicKind, DemographicRole, Region, RegionId, ScaleConfig};
    use crate::planners::fixtures;
    use crate::scalar::Point;
    use LandUseType::*;

    #[test]
    fn satisfied_subregion_gets_no_actions() {
        let (mut l, sub) = fixtures::small();
        l.set_role(1, Educational);
        // Add shops right next to the resident.
        let mut regions = l.regions().to_vec();
        regions.push(Region::new("r3", ShopsAndMarket, 20, Point::new(3.0, 3.0)));
        let mut full = CityLayout::new(regions, *l.scale()).unwrap().with_canvas(Canvas::new(10, 10)).unwrap();
        full.set_role(1, Educational);
        let ctx = fixtures::context(&full, &sub);
        assert!(heuristic_planner(&ctx).actions.is_empty());
    }

    #[test]
    fn one_vacant_one_need() {
        let (l, sub) = fixtures::small();
        let ctx = fixtures::context(&l, &sub);
        // Needs are Hospital (met), Educational, ShopsAndMarket; only one vacant lot.
        let p = heuristic_planner(&ctx);
        assert_eq!(p.actions, vec![LayoutAction::reassign("r1", Educational)]);
    }

    #[test]
    fn no_vacant_land() {
        let (mut l, sub) = fixtures::small();
        l.set_role(1, Business);
        let ctx = fixtures::context(&l, &sub);
        assert!(heuristic_planner(&ctx).actions.is_empty());
    }

    #[test]
    fn nearest_vacant_pairing() {
        // Resident at (2,2); vacant lots at distance 1 (r1) and 3 (r2); needs
        // Hospital then Educational both unmet. The rule gives the nearer lot
        // to the higher-priority need. Enumerate both pairings to confirm the
        // rule's choice is the nearest-first one.
        let regions = vec![
            Region::new("r0", Residential, 20, Point::new(2.0, 2.0)),
            Region::new("r1", VacantLand, 20, Point::new(3.0, 2.0)),
            Region::new("r2", VacantLand, 20, Point::new(2.0, 5.0)),
        ];
        let l = CityLayout::new(regions, ScaleConfig::with_meters_per_pixel(1000.0))
            .unwrap()
            .with_canvas(Canvas::new(10, 10))
            .unwrap();
        let sub = SubRegion {
            role: DemographicRole::new(DemographicKind::Residential, vec![Hospital, Educational, Business]).unwrap(),
            mask: BinaryMask::filled(10, 10, true),
        };
        let ctx = fixtures::context(&l, &sub);
        let p = heuristic_planner(&ctx);
        let pairings = [
            [(RegionId::from("r1"), Hospital), (RegionId::from("r2"), Educational)],
            [(RegionId::from("r2"), Hospital), (RegionId::from("r1"), Educational)],
        ];
        let resident = Point::new(2.0, 2.0);
        let first_leg = |pair: &[(RegionId, LandUseType); 2]| {
            let i = l.index_of(&pair[0].0).unwrap();
            l.centroid(i).distance(&resident)
        };
        let chosen = pairings
            .iter()
            .min_by(|a, b| first_leg(a).partial_cmp(&first_leg(b)).unwrap())
            .unwrap();
        let expected: Vec<LayoutAction> = chosen.iter().map(|(id, t)| LayoutAction::reassign(id.clone(), *t)).collect();
        assert_eq!(p.actions, expected);
    }

    #[test]
    fn budget_caps_actions() {
        let mut regions = vec![Region::new("r0", Residential, 20, Point::new(2.0f64, 2.0))];
        for k in 1..6 {
            regions.push(Region::new(RegionId::indexed(k), VacantLand, 20, Point::new(k as f64, 8.0)));
        }
        let l = CityLayout::new(regions, ScaleConfig::with_meters_per_pixel(1.0))
            .unwrap()
            .with_canvas(Canvas::new(10, 10))
            .unwrap();
        let sub = SubRegion {
            role: DemographicRole::new(
                DemographicKind::Residential,
                vec![Hospital, Educational, Business, ShopsAndMarket, PublicUtilities],
            )
            .unwrap(),
            mask: BinaryMask::filled(10, 10, true),
        };
        let mut ctx = fixtures::context(&l, &sub);
        ctx.budget = 2;
        assert_eq!(heuristic_planner(&ctx).actions.len(), 2);
    }
}
