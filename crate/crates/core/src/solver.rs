//! Stage-2 layout optimizer: a greedy placement of non-residential roles
//! under per-role move limits, refined by a mutation-only genetic algorithm
//! with top-k elitism and tournament parent selection.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{ecological_coverage_weighted, service_accessibility_weighted, EssentialServiceSet, MetricsError, ResidentWeighting};
use crate::model::{CityLayout, LandUseType, RegionId};
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("region `{0}` is already assigned")]
    RegionOccupied(RegionId),
    #[error("player {0} has no moves left")]
    MoveLimitExhausted(LandUseType),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// A non-residential role competing for regions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Player {
    pub role: LandUseType,
    pub move_limit: usize,
}

impl Player {
    pub fn new(role: LandUseType, move_limit: usize) -> Self {
        Player { role, move_limit }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
#[serde(default)]
pub struct GaConfig<T> {
    pub population_size: usize,
    pub generations: usize,
    pub elite_count: usize,
    pub swaps_per_mutation: usize,
    pub tournament_size: usize,
    pub w_service: T,
    pub w_ecology: T,
    pub rng_seed: u64,
    /// Stop after this many consecutive generations without a best-fitness
    /// gain above 1e-9. `None` runs all generations.
    pub plateau_generations: Option<usize>,
}

impl<T: Scalar> Default for GaConfig<T> {
    fn default() -> Self {
        GaConfig {
            population_size: 20,
            generations: 50,
            elite_count: 4,
            swaps_per_mutation: 2,
            tournament_size: 3,
            w_service: T::lit(0.5),
            w_ecology: T::lit(0.5),
            rng_seed: 0,
            plateau_generations: None,
        }
    }
}

impl<T: Scalar> GaConfig<T> {
    pub fn validate(&self) -> Result<(), SolverError> {
        let bad = |m: String| Err(SolverError::InvalidConfig(m));
        if self.population_size < 1 {
            return bad("population_size must be at least 1".into());
        }
        if self.elite_count < 1 || self.elite_count > self.population_size {
            return bad(format!(
                "elite_count must lie in 1..={}, got {}",
                self.population_size, self.elite_count
            ));
        }
        if self.swaps_per_mutation < 1 {
            return bad("swaps_per_mutation must be at least 1".into());
        }
        if self.tournament_size < 2 {
            return bad("tournament_size must be at least 2".into());
        }
        if self.w_service < T::zero() || self.w_ecology < T::zero() {
            return bad("fitness weights must be non-negative".into());
        }
        if (self.w_service + self.w_ecology - T::one()).abs() > T::lit(1e-9) {
            return bad(format!(
                "fitness weights must sum to 1, got {} + {}",
                self.w_service, self.w_ecology
            ));
        }
        Ok(())
    }
}

/// Candidate layouts of one generation.
#[derive(Debug, Clone, PartialEq)]
pub struct Population<T> {
    pub layouts: Vec<CityLayout<T>>,
}

/// One greedy placement: `players[player]` claimed `region` for `gain`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GreedyStep<T> {
    pub player: usize,
    pub region: usize,
    pub gain: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(bound(serialize = "T: Scalar"))]
pub struct GenerationStats<T> {
    pub generation: usize,
    pub best: T,
    pub mean: T,
}

#[derive(Debug, Clone)]
pub struct Evolution<T> {
    pub best: CityLayout<T>,
    pub best_fitness: T,
    pub trace: Vec<GenerationStats<T>>,
}

#[derive(Debug, Clone)]
pub struct Optimization<T> {
    pub greedy: CityLayout<T>,
    pub greedy_fitness: T,
    pub layout: CityLayout<T>,
    pub fitness: T,
    pub trace: Vec<GenerationStats<T>>,
}

/// Renders a fitness trace as `generation,best,mean` CSV.
pub fn trace_csv<T: Scalar>(trace: &[GenerationStats<T>]) -> String {
    let mut out = String::from("generation,best,mean\n");
    for s in trace {
        out.push_str(&format!("{},{},{}\n", s.generation, s.best, s.mean));
    }
    out
}

/// Seed for the random stream of `member` in `generation`.
fn stream_seed(seed: u64, generation: usize, member: usize) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    mix(mix(mix(seed) ^ generation as u64) ^ member as u64)
}

fn stream(seed: u64, generation: usize, member: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_seed(seed, generation, member))
}

/// Greedy + GA optimizer over a fixed region inventory.
#[derive(Debug, Clone)]
pub struct Solver<T> {
    pub config: GaConfig<T>,
    pub services: EssentialServiceSet,
    pub weighting: ResidentWeighting,
    /// Roles the GA never moves.
    pub frozen_roles: Vec<LandUseType>,
}

impl<T: Scalar> Solver<T> {
    pub fn new(config: GaConfig<T>, services: EssentialServiceSet) -> Result<Self, SolverError> {
        config.validate()?;
        Ok(Solver {
            config,
            services,
            weighting: ResidentWeighting::Uniform,
            frozen_roles: vec![LandUseType::Residential],
        })
    }

    /// `w_service * service + w_ecology * ecology`.
    pub fn fitness(&self, layout: &CityLayout<T>) -> Result<T, SolverError> {
        let service = service_accessibility_weighted(layout, &self.services, self.weighting)?;
        let ecology = ecological_coverage_weighted(layout, self.weighting)?;
        Ok(self.config.w_service * service + self.config.w_ecology * ecology)
    }

    /// Marginal fitness gain of giving region `region` to `player`.
    pub fn calculate_return(&self, state: &CityLayout<T>, region: usize, player: &Player) -> Result<T, SolverError> {
        if !state.role(region).is_open() {
            return Err(SolverError::RegionOccupied(state.regions()[region].id.clone()));
        }
        if player.move_limit == 0 {
            return Err(SolverError::MoveLimitExhausted(player.role));
        }
        let before = self.fitness(state)?;
        let mut next = state.clone();
        next.set_role(region, player.role);
        Ok(self.fitness(&next)? - before)
    }

    pub fn greedy_assign(&self, state0: &CityLayout<T>, players: &[Player]) -> Result<CityLayout<T>, SolverError> {
        self.greedy_assign_traced(state0, players).map(|(s, _)| s)
    }

    /// Round-robin over `players` in the given order; each player with moves
    /// left claims the unassigned region of highest return (lowest id on ties).
    pub fn greedy_assign_traced(
        &self,
        state0: &CityLayout<T>,
        players: &[Player],
    ) -> Result<(CityLayout<T>, Vec<GreedyStep<T>>), SolverError> {
        if players.is_empty() {
            return Err(SolverError::InvalidConfig("no players to assign".into()));
        }
        let mut state = state0.clone();
        let mut limits: Vec<usize> = players.iter().map(|p| p.move_limit).collect();
        let mut steps = Vec::new();
        loop {
            let mut open: Vec<usize> = state.indices_with_role(LandUseType::Unassigned).collect();
            if open.is_empty() || limits.iter().all(|l| *l == 0) {
                break;
            }
            for (pi, player) in players.iter().enumerate() {
                if limits[pi] == 0 {
                    continue;
                }
                if open.is_empty() {
                    break;
                }
                let live = Player::new(player.role, limits[pi]);
                let mut best: Option<(usize, T)> = None;
                for &r in &open {
                    let gain = self.calculate_return(&state, r, &live)?;
                    if best.is_none_or(|(_, g)| gain > g) {
                        best = Some((r, gain));
                    }
                }
                let (r, gain) = best.expect("open is non-empty");
                state.set_role(r, player.role);
                limits[pi] -= 1;
                open.retain(|i| *i != r);
                steps.push(GreedyStep { player: pi, region: r, gain });
            }
        }
        Ok((state, steps))
    }

    /// Indices the GA may move.
    pub fn mutable_regions(&self, layout: &CityLayout<T>) -> Vec<usize> {
        (0..layout.len())
            .filter(|i| !self.frozen_roles.contains(&layout.role(*i)))
            .collect()
    }

    /// `swaps_per_mutation` uniform role swaps between distinct mutable regions.
    /// Layouts with fewer than two mutable regions come back unchanged.
    pub fn mutate<R: Rng + ?Sized>(&self, layout: &CityLayout<T>, rng: &mut R) -> CityLayout<T> {
        let mut out = layout.clone();
        let mutable = self.mutable_regions(layout);
        let m = mutable.len();
        if m < 2 {
            return out;
        }
        for _ in 0..self.config.swaps_per_mutation {
            let a = rng.random_range(0..m);
            let mut b = rng.random_range(0..m - 1);
            if b >= a {
                b += 1;
            }
            out.swap_roles(mutable[a], mutable[b]);
        }
        out
    }

    /// Member 0 is `seed` itself; the rest are independent mutations of it.
    pub fn initialize_population(&self, seed: &CityLayout<T>) -> Result<Population<T>, SolverError> {
        self.config.validate()?;
        let layouts = (0..self.config.population_size)
            .map(|i| {
                if i == 0 {
                    seed.clone()
                } else {
                    self.mutate(seed, &mut stream(self.config.rng_seed, 0, i))
                }
            })
            .collect();
        Ok(Population { layouts })
    }

    fn tournament<R: Rng + ?Sized>(&self, fitness: &[T], rng: &mut R) -> usize {
        let mut winner: Option<usize> = None;
        for _ in 0..self.config.tournament_size {
            let c = rng.random_range(0..fitness.len());
            winner = match winner {
                Some(w) if fitness[w] > fitness[c] || (fitness[w] == fitness[c] && w < c) => Some(w),
                _ => Some(c),
            };
        }
        winner.expect("tournament_size >= 2")
    }

    pub fn evolve(&self, population: Population<T>) -> Result<Evolution<T>, SolverError> {
        let cfg = &self.config;
        cfg.validate()?;
        if population.layouts.is_empty() {
            return Err(SolverError::InvalidConfig("empty population".into()));
        }
        let mut pop = population.layouts;
        let mut fit = pop.iter().map(|l| self.fitness(l)).collect::<Result<Vec<T>, _>>()?;
        let mut trace = vec![stats(0, &fit)];
        let mut stale = 0usize;
        for g in 1..=cfg.generations {
            let mut order: Vec<usize> = (0..pop.len()).collect();
            order.sort_by(|a, b| fit[*b].partial_cmp(&fit[*a]).unwrap_or(std::cmp::Ordering::Equal));
            let keep = cfg.elite_count.min(pop.len());
            let mut next: Vec<CityLayout<T>> = order[..keep].iter().map(|i| pop[*i].clone()).collect();
            let mut next_fit: Vec<T> = order[..keep].iter().map(|i| fit[*i]).collect();
            for slot in 0..cfg.population_size.saturating_sub(keep) {
                let mut rng = stream(cfg.rng_seed, g, slot);
                let parent = self.tournament(&fit, &mut rng);
                let child = self.mutate(&pop[parent], &mut rng);
                next_fit.push(self.fitness(&child)?);
                next.push(child);
            }
            let previous_best = trace.last().map(|s| s.best).unwrap_or_else(T::neg_infinity);
            pop = next;
            fit = next_fit;
            let s = stats(g, &fit);
            trace.push(s);
            if let Some(limit) = cfg.plateau_generations {
                if s.best - previous_best > T::lit(1e-9) {
                    stale = 0;
                } else {
                    stale += 1;
                    if stale >= limit {
                        break;
                    }
                }
            }
        }
        let best = argmax(&fit);
        Ok(Evolution {
            best: pop.swap_remove(best),
            best_fitness: fit[best],
            trace,
        })
    }

    /// Greedy placement followed by GA refinement.
    pub fn optimize(&self, state0: &CityLayout<T>, players: &[Player]) -> Result<Optimization<T>, SolverError> {
        let greedy = self.greedy_assign(state0, players)?;
        let greedy_fitness = self.fitness(&greedy)?;
        let evo = self.evolve(self.initialize_population(&greedy)?)?;
        Ok(Optimization {
            greedy,
            greedy_fitness,
            layout: evo.best,
            fitness: evo.best_fitness,
            trace: evo.trace,
        })
    }
}

fn argmax<T: Scalar>(xs: &[T]) -> usize {
    let mut best = 0;
    for (i, x) in xs.iter().enumerate().skip(1) {
        if *x > xs[best] {
            best = i;
        }
    }
    best
}

fn stats<T: Scalar>(generation: usize, fit: &[T]) -> GenerationStats<T> {
    let best = fit[argmax(fit)];
    let sum = fit.iter().fold(T::zero(), |a, b| a + *b);
    GenerationStats {
        generation,
        best,
        mean: sum / T::from_count(fit.len()),
    }
}

/// Clears the slots of `roles` (and vacant land) to the sentinel and derives
/// one player per role with a move limit equal to its current count, unless
/// `limits` overrides it. Returns the initial game state and the players.
pub fn open_slots<T: Scalar>(
    layout: &CityLayout<T>,
    roles: &[LandUseType],
    limits: &[(LandUseType, usize)],
) -> (CityLayout<T>, Vec<Player>) {
    let players = roles
        .iter()
        .map(|r| {
            let limit = limits
                .iter()
                .find(|(t, _)| t == r)
                .map(|(_, l)| *l)
                .unwrap_or_else(|| layout.count_role(*r));
            Player::new(*r, limit)
        })
        .collect();
    let mut state = layout.clone();
    for i in 0..state.len() {
        let role = state.role(i);
        if role == LandUseType::VacantLand || roles.contains(&role) {
            state.set_role(i, LandUseType::Unassigned);
        }
    }
    (state, players)
}

/// Turns slots nobody claimed back into vacant land.
pub fn release_unassigned<T: Scalar>(layout: &mut CityLayout<T>) {
    for i in 0..layout.len() {
        if layout.role(i) == LandUseType::Unassigned {
            layout.set_role(i, LandUseType::VacantLand);
        }
    }
}
