//! Joint power-allocation and admission control.
//!
//! The per-slot problem maximizes `(1 - alpha) * sum_k R_k I_k + alpha *
//! sum_k I_k` over the power scaling matrix and the binary admission vector,
//! subject to per-SAP power budgets, non-negativity, and the minimum-rate
//! constraint for admitted UTs. A genetic algorithm searches the continuous
//! budget fractions and admission bits; every candidate is repaired into a
//! feasible solution before evaluation, so the solver only ever emits
//! feasible points. A grid-exhaustive oracle with identical repair semantics
//! validates the GA on small instances, and the two single-satellite
//! baselines are expressed as restricted allocators over the same rate
//! model.

use ndarray::Array2;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::channel::LargeScaleParams;
use crate::downlink::{FrameConfig, RateContext};
use crate::training::PilotAssignment;

#[derive(Debug, Error)]
pub enum AllocationError {
    #[error("brute force instance too large: {candidates} candidates exceed {limit}")]
    BruteForceTooLarge { candidates: u128, limit: u128 },
    #[error("grid needs at least 2 levels, got {0}")]
    InvalidGrid(usize),
    #[error("invalid allocation problem: {0}")]
    InvalidProblem(String),
}

/// One slot's allocation problem: the rate model plus budgets, rate floors
/// and the admission/throughput trade-off weight.
pub struct AllocationProblem<'a> {
    pub ls: &'a LargeScaleParams,
    pub pa: &'a PilotAssignment,
    /// Receiver noise power (W)
    pub noise_var: f64,
    pub frame: FrameConfig,
    /// UTs still served by this cluster
    pub active: Vec<bool>,
    /// Minimum rate per UT (bps/Hz)
    pub r_min: Vec<f64>,
    /// Power budget per SAP (W)
    pub p_max: Vec<f64>,
    /// Weight of the admission count against the sum rate, in [0, 1]
    pub alpha: f64,
}

impl<'a> AllocationProblem<'a> {
    pub fn num_saps(&self) -> usize {
        self.ls.num_saps()
    }

    pub fn num_uts(&self) -> usize {
        self.ls.num_uts()
    }

    pub fn validate(&self) -> Result<(), AllocationError> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(AllocationError::InvalidProblem(format!(
                "alpha {} outside [0, 1]",
                self.alpha
            )));
        }
        if self.r_min.iter().any(|&r| r < 0.0) {
            return Err(AllocationError::InvalidProblem("negative r_min".into()));
        }
        if self.p_max.iter().any(|&p| !(p > 0.0)) {
            return Err(AllocationError::InvalidProblem(
                "non-positive SAP budget".into(),
            ));
        }
        Ok(())
    }

    /// Precomputes the slot's rate statistics.
    pub fn context(&self) -> RateContext {
        RateContext::new(
            self.ls,
            self.pa,
            self.noise_var,
            self.frame,
            Some(&self.active),
        )
        .expect("allocation problem carries a valid frame")
    }
}

/// GA hyper-parameters. The defaults are the tuned values used by the
/// simulator.
#[derive(Debug, Clone)]
pub struct GaParams {
    pub population: usize,
    pub generations: usize,
    pub crossover_rate: f64,
    pub mutation_rate: f64,
    pub elitism: usize,
    /// Fitness malus per UT dropped by the admission repair; 0 keeps the
    /// search neutral and relies on repair alone.
    pub penalty_weight: f64,
    pub seed: u64,
}

impl Default for GaParams {
    fn default() -> Self {
        Self {
            population: 60,
            generations: 150,
            crossover_rate: 0.9,
            mutation_rate: 0.1,
            elitism: 2,
            penalty_weight: 0.0,
            seed: 0,
        }
    }
}

/// A feasible allocation: power scaling factors, admission flags, the
/// resulting rates and objective value.
#[derive(Debug, Clone)]
pub struct PowerSolution {
    /// Power per (SAP, UT) (W)
    pub power: Array2<f64>,
    /// Admission indicator per UT
    pub admitted: Vec<bool>,
    pub objective: f64,
    /// Rates under `power` (bps/Hz)
    pub rates: Vec<f64>,
    pub feasible: bool,
}

impl PowerSolution {
    /// For baseline solutions (at most one serving SAP per UT): the serving
    /// SAP per UT, recovered from the sparsity pattern.
    pub fn single_sap_association(&self) -> Vec<Option<usize>> {
        let (m, k) = self.power.dim();
        (0..k)
            .map(|ki| (0..m).find(|&mi| self.power[[mi, ki]] > 0.0))
            .collect()
    }
}

/// The weighted admission/throughput objective; no penalty terms.
pub fn objective(problem: &AllocationProblem, solution: &PowerSolution) -> f64 {
    objective_of(problem.alpha, &solution.rates, &solution.admitted)
}

fn objective_of(alpha: f64, rates: &[f64], admitted: &[bool]) -> f64 {
    let mut sum_rate = 0.0;
    let mut count = 0.0;
    for (r, &a) in rates.iter().zip(admitted) {
        if a {
            sum_rate += r;
            count += 1.0;
        }
    }
    (1.0 - alpha) * sum_rate + alpha * count
}

/// Checks the four feasibility conditions with the budget slack used across
/// the crate.
pub fn satisfies_constraints(problem: &AllocationProblem, solution: &PowerSolution) -> bool {
    let (m, k) = solution.power.dim();
    for mi in 0..m {
        let total: f64 = (0..k).map(|ki| solution.power[[mi, ki]]).sum();
        if total > problem.p_max[mi] + 1e-9 {
            return false;
        }
    }
    if solution.power.iter().any(|&p| p < 0.0) {
        return false;
    }
    for ki in 0..k {
        if solution.admitted[ki] && solution.rates[ki] < problem.r_min[ki] {
            return false;
        }
    }
    true
}

/// Shared repair: masks non-admitted columns, rescales overloaded SAPs onto
/// their budgets, then iteratively drops every admitted UT whose rate sits
/// below its floor until none is left. Dropping only removes interference,
/// so the loop terminates in at most K passes. Returns the final rates and
/// the number of dropped UTs.
fn repair(
    ctx: &RateContext,
    problem: &AllocationProblem,
    power: &mut Array2<f64>,
    sqrt_p: &mut Array2<f64>,
    admitted: &mut [bool],
) -> (Vec<f64>, usize) {
    let (m, k) = power.dim();
    {
        let p = power.as_slice_mut().expect("contiguous");
        let sp = sqrt_p.as_slice_mut().expect("contiguous");
        for (ki, adm) in admitted.iter_mut().enumerate() {
            if !problem.active[ki] {
                *adm = false;
            }
            if !*adm {
                let mut idx = ki;
                for _ in 0..m {
                    p[idx] = 0.0;
                    sp[idx] = 0.0;
                    idx += k;
                }
            }
        }
        for mi in 0..m {
            let row = &mut p[mi * k..(mi + 1) * k];
            let total: f64 = row.iter().sum();
            if total > problem.p_max[mi] {
                let factor = problem.p_max[mi] / total;
                let sqrt_factor = factor.sqrt();
                for v in row.iter_mut() {
                    *v *= factor;
                }
                for v in &mut sp[mi * k..(mi + 1) * k] {
                    *v *= sqrt_factor;
                }
            }
        }
    }

    let mut dropped = 0;
    loop {
        let report = ctx
            .evaluate_with_sqrt(power, sqrt_p)
            .expect("repair inputs keep the denominator positive");
        let mut changed = false;
        let p = power.as_slice_mut().expect("contiguous");
        let sp = sqrt_p.as_slice_mut().expect("contiguous");
        for ki in 0..k {
            if admitted[ki] && report.rates[ki] < problem.r_min[ki] {
                admitted[ki] = false;
                changed = true;
                dropped += 1;
                let mut idx = ki;
                for _ in 0..m {
                    p[idx] = 0.0;
                    sp[idx] = 0.0;
                    idx += k;
                }
            }
        }
        if !changed {
            return (report.rates, dropped);
        }
    }
}

/// Reusable decode/repair/evaluate pipeline for one problem.
struct Evaluator<'a, 'b> {
    ctx: &'a RateContext,
    problem: &'a AllocationProblem<'b>,
    power: Array2<f64>,
    sqrt_p: Array2<f64>,
    admitted: Vec<bool>,
}

struct Evaluation {
    objective: f64,
    fitness: f64,
}

impl<'a, 'b> Evaluator<'a, 'b> {
    fn new(ctx: &'a RateContext, problem: &'a AllocationProblem<'b>) -> Self {
        let (m, k) = (problem.num_saps(), problem.num_uts());
        Self {
            ctx,
            problem,
            power: Array2::zeros((m, k)),
            sqrt_p: Array2::zeros((m, k)),
            admitted: vec![false; k],
        }
    }

    /// Decodes budget-fraction genes plus admission bits, repairs, and
    /// scores. Links that cannot radiate (zero estimate statistics) decode
    /// to zero power so they never eat into a SAP's budget. The repaired
    /// phenotype stays in the scratch buffers.
    fn run(&mut self, genes: &[f64], admit: &[bool], penalty_weight: f64) -> (Evaluation, Vec<f64>) {
        let (m, k) = self.power.dim();
        {
            let alive = self.ctx.alive_mask();
            let p = self.power.as_slice_mut().expect("contiguous");
            let sp = self.sqrt_p.as_slice_mut().expect("contiguous");
            for mi in 0..m {
                let p_max = self.problem.p_max[mi];
                for idx in mi * k..(mi + 1) * k {
                    let v = genes[idx] * p_max * alive[idx];
                    p[idx] = v;
                    sp[idx] = v.sqrt();
                }
            }
        }
        self.admitted.copy_from_slice(admit);
        let (rates, dropped) = repair(
            self.ctx,
            self.problem,
            &mut self.power,
            &mut self.sqrt_p,
            &mut self.admitted,
        );
        let objective = objective_of(self.problem.alpha, &rates, &self.admitted);
        (
            Evaluation {
                objective,
                fitness: objective - penalty_weight * dropped as f64,
            },
            rates,
        )
    }

    fn snapshot(&self, objective: f64, rates: Vec<f64>) -> PowerSolution {
        PowerSolution {
            power: self.power.clone(),
            admitted: self.admitted.clone(),
            objective,
            rates,
            feasible: true,
        }
    }
}

struct Individual {
    genes: Vec<f64>,
    admit: Vec<bool>,
    fitness: f64,
    objective: f64,
}

/// Genetic algorithm over `M*K` continuous budget-fraction genes in [0, 1]
/// concatenated with `K` admission bits. Tournament selection of size 2,
/// uniform crossover, Gaussian mutation on the continuous part and bit
/// flips on the admission part, with elitism. Deterministic for a fixed
/// `(problem, GaParams)` pair.
pub fn ga_solve(problem: &AllocationProblem, ga: &GaParams) -> PowerSolution {
    problem.validate().expect("valid allocation problem");
    assert!(ga.population >= 2, "population must be at least 2");
    let ctx = problem.context();
    let (m, k) = (problem.num_saps(), problem.num_uts());
    let n_genes = m * k;
    let mut rng = ChaCha8Rng::seed_from_u64(ga.seed);
    let mut evaluator = Evaluator::new(&ctx, problem);

    let active_count = problem.active.iter().filter(|&&a| a).count().max(1);
    let mut best: Option<PowerSolution> = None;

    let consider =
        |evaluator: &Evaluator, best: &mut Option<PowerSolution>, objective: f64, rates: &[f64]| {
            if best.as_ref().is_none_or(|b| objective > b.objective) {
                *best = Some(evaluator.snapshot(objective, rates.to_vec()));
            }
        };

    // Initial population: three deterministic seeds (equal split over all
    // UTs; best-channel concentration, i.e. every UT powered only by its
    // strongest SAP; per-SAP split proportional to the estimate second
    // moment, which favours coherent combining), the rest random. The
    // seeds anchor the search at the allocation archetypes; tournament and
    // elitism keep whichever wins.
    let best_channel_genes = {
        let assoc = best_channel_association(problem);
        let mut counts = vec![0usize; m];
        for a in assoc.iter().flatten() {
            counts[*a] += 1;
        }
        let mut genes = vec![0.0; n_genes];
        for (ki, a) in assoc.iter().enumerate() {
            if let Some(mi) = *a {
                genes[mi * k + ki] = 1.0 / counts[mi] as f64;
            }
        }
        genes
    };
    let matched_genes = {
        let mut genes = vec![0.0; n_genes];
        for mi in 0..m {
            let weights: Vec<f64> = (0..k)
                .map(|ki| {
                    if problem.active[ki] {
                        ctx.estimate_second_moment(mi, ki)
                    } else {
                        0.0
                    }
                })
                .collect();
            let total: f64 = weights.iter().sum();
            if total > 0.0 {
                for ki in 0..k {
                    genes[mi * k + ki] = weights[ki] / total;
                }
            }
        }
        genes
    };

    let mut population: Vec<Individual> = Vec::with_capacity(ga.population);
    for i in 0..ga.population {
        let (genes, admit) = match i {
            0 => (
                vec![1.0 / active_count as f64; n_genes],
                problem.active.clone(),
            ),
            1 => (best_channel_genes.clone(), problem.active.clone()),
            2 => (matched_genes.clone(), problem.active.clone()),
            _ => (
                (0..n_genes).map(|_| rng.gen_range(0.0..=1.0)).collect(),
                (0..k).map(|ki| problem.active[ki] && rng.gen_bool(0.5)).collect(),
            ),
        };
        let (eval, rates) = evaluator.run(&genes, &admit, ga.penalty_weight);
        consider(&evaluator, &mut best, eval.objective, &rates);
        population.push(Individual {
            genes,
            admit,
            fitness: eval.fitness,
            objective: eval.objective,
        });
    }

    for _ in 0..ga.generations {
        // rank best-first; ties keep insertion order (stable sort)
        population.sort_by(|a, b| b.fitness.total_cmp(&a.fitness));

        let mut next: Vec<Individual> = Vec::with_capacity(ga.population);
        for elite in population.iter().take(ga.elitism.min(ga.population)) {
            next.push(Individual {
                genes: elite.genes.clone(),
                admit: elite.admit.clone(),
                fitness: elite.fitness,
                objective: elite.objective,
            });
        }

        while next.len() < ga.population {
            let p1 = tournament(&population, &mut rng);
            let p2 = tournament(&population, &mut rng);
            let (mut genes, mut admit) = if rng.gen_bool(ga.crossover_rate) {
                let genes = (0..n_genes)
                    .map(|g| {
                        if rng.gen_bool(0.5) {
                            population[p1].genes[g]
                        } else {
                            population[p2].genes[g]
                        }
                    })
                    .collect();
                let admit = (0..k)
                    .map(|ki| {
                        if rng.gen_bool(0.5) {
                            population[p1].admit[ki]
                        } else {
                            population[p2].admit[ki]
                        }
                    })
                    .collect();
                (genes, admit)
            } else {
                (population[p1].genes.clone(), population[p1].admit.clone())
            };

            for g in genes.iter_mut() {
                if rng.gen_bool(ga.mutation_rate) {
                    let step: f64 = rng.sample(StandardNormal);
                    *g = (*g + 0.15 * step).clamp(0.0, 1.0);
                }
            }
            for a in admit.iter_mut() {
                if rng.gen_bool(ga.mutation_rate) {
                    *a = !*a;
                }
            }

            let (eval, rates) = evaluator.run(&genes, &admit, ga.penalty_weight);
            consider(&evaluator, &mut best, eval.objective, &rates);
            next.push(Individual {
                genes,
                admit,
                fitness: eval.fitness,
                objective: eval.objective,
            });
        }
        population = next;
    }

    best.expect("population is non-empty")
}

fn tournament(population: &[Individual], rng: &mut ChaCha8Rng) -> usize {
    let a = rng.gen_range(0..population.len());
    let b = rng.gen_range(0..population.len());
    if population[b].fitness > population[a].fitness {
        b
    } else {
        a
    }
}

/// Exhaustive oracle over the discretized budget-fraction grid and all
/// admission vectors, with repair semantics identical to [`ga_solve`].
/// Candidate count `grid_levels^(M*K) * 2^K` is capped at 1e7.
pub fn brute_force_solve(
    problem: &AllocationProblem,
    grid_levels: usize,
) -> Result<PowerSolution, AllocationError> {
    problem.validate()?;
    if grid_levels < 2 {
        return Err(AllocationError::InvalidGrid(grid_levels));
    }
    let (m, k) = (problem.num_saps(), problem.num_uts());
    let n_genes = m * k;
    const LIMIT: u128 = 10_000_000;
    let candidates = (grid_levels as u128)
        .checked_pow(n_genes as u32)
        .and_then(|g| g.checked_mul(1u128 << k));
    match candidates {
        Some(c) if c <= LIMIT => {}
        c => {
            return Err(AllocationError::BruteForceTooLarge {
                candidates: c.unwrap_or(u128::MAX),
                limit: LIMIT,
            });
        }
    }

    let ctx = problem.context();
    let mut evaluator = Evaluator::new(&ctx, problem);
    let mut best: Option<PowerSolution> = None;

    let mut genes = vec![0.0f64; n_genes];
    let mut digits = vec![0usize; n_genes];
    let step = 1.0 / (grid_levels - 1) as f64;

    for mask in 0..(1u64 << k) {
        let admit: Vec<bool> = (0..k).map(|ki| mask & (1 << ki) != 0).collect();
        digits.fill(0);
        loop {
            for (g, &d) in genes.iter_mut().zip(&digits) {
                *g = d as f64 * step;
            }
            let (eval, rates) = evaluator.run(&genes, &admit, 0.0);
            if best.as_ref().is_none_or(|b| eval.objective > b.objective) {
                best = Some(evaluator.snapshot(eval.objective, rates));
            }
            // odometer increment
            let mut pos = 0;
            loop {
                if pos == n_genes {
                    break;
                }
                digits[pos] += 1;
                if digits[pos] < grid_levels {
                    break;
                }
                digits[pos] = 0;
                pos += 1;
            }
            if pos == n_genes {
                break;
            }
        }
    }

    Ok(best.expect("at least the all-zero candidate exists"))
}

fn equal_split_power(
    problem: &AllocationProblem,
    association: &[Option<usize>],
) -> Array2<f64> {
    let (m, k) = (problem.num_saps(), problem.num_uts());
    let mut counts = vec![0usize; m];
    for assoc in association.iter().flatten() {
        counts[*assoc] += 1;
    }
    let mut power = Array2::zeros((m, k));
    for (ki, assoc) in association.iter().enumerate() {
        if let Some(mi) = *assoc {
            power[[mi, ki]] = problem.p_max[mi] / counts[mi] as f64;
        }
    }
    power
}

/// Best serving SAP per UT by large-scale gain; ties break to the lowest
/// SAP index, UTs with no usable link get none.
fn best_channel_association(problem: &AllocationProblem) -> Vec<Option<usize>> {
    let (m, k) = (problem.num_saps(), problem.num_uts());
    (0..k)
        .map(|ki| {
            if !problem.active[ki] {
                return None;
            }
            let mut best: Option<(usize, f64)> = None;
            for mi in 0..m {
                let g = problem.ls.gain[[mi, ki]];
                if g > 0.0 && best.map_or(true, |(_, bg)| g > bg) {
                    best = Some((mi, g));
                }
            }
            best.map(|(mi, _)| mi)
        })
        .collect()
}

fn baseline_solution(
    problem: &AllocationProblem,
    ctx: &RateContext,
    association: &[Option<usize>],
) -> PowerSolution {
    let power = equal_split_power(problem, association);
    let report = ctx
        .evaluate(&power)
        .expect("baseline power satisfies the rate model");
    let admitted: Vec<bool> = (0..problem.num_uts())
        .map(|ki| association[ki].is_some() && report.rates[ki] >= problem.r_min[ki])
        .collect();
    let objective = objective_of(problem.alpha, &report.rates, &admitted);
    PowerSolution {
        power,
        admitted,
        objective,
        rates: report.rates,
        feasible: true,
    }
}

/// `BestChannel` baseline: every UT connects to its strongest SAP, each SAP
/// splits its budget equally over its UTs, rates come from the shared rate
/// model.
pub fn best_channel_allocate(problem: &AllocationProblem) -> PowerSolution {
    problem.validate().expect("valid allocation problem");
    let ctx = problem.context();
    let association = best_channel_association(problem);
    baseline_solution(problem, &ctx, &association)
}

/// `MaxServTime` baseline: a UT stays on its previous SAP while that SAP is
/// usable and still delivers the minimum rate; otherwise it falls back to
/// the best-channel SAP (which is what a handover means for this scheme).
pub fn max_serv_time_allocate(
    problem: &AllocationProblem,
    prev_association: &[Option<usize>],
) -> PowerSolution {
    problem.validate().expect("valid allocation problem");
    let ctx = problem.context();
    let best = best_channel_association(problem);

    let tentative: Vec<Option<usize>> = (0..problem.num_uts())
        .map(|ki| {
            if !problem.active[ki] {
                return None;
            }
            match prev_association[ki] {
                Some(mi) if problem.ls.gain[[mi, ki]] > 0.0 => Some(mi),
                _ => best[ki],
            }
        })
        .collect();

    let tentative_power = equal_split_power(problem, &tentative);
    let tentative_rates = ctx
        .evaluate(&tentative_power)
        .expect("baseline power satisfies the rate model")
        .rates;

    let association: Vec<Option<usize>> = (0..problem.num_uts())
        .map(|ki| match tentative[ki] {
            Some(mi) if tentative_rates[ki] >= problem.r_min[ki] => Some(mi),
            Some(_) => best[ki],
            None => None,
        })
        .collect();

    baseline_solution(problem, &ctx, &association)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use crate::training::{assign_pilots, PilotPolicy};
    use approx::assert_relative_eq;
    use ndarray::Array2;
    use rand::Rng;

    fn synthetic_ls(m: usize, k: usize, seed: u64) -> LargeScaleParams {
        let mut r = rng::stream(seed, &[100]);
        let beta = Array2::from_shape_fn((m, k), |_| r.gen_range(0.3..1.5));
        let lambda = Array2::from_shape_fn((m, k), |_| r.gen_range(0.05..0.5));
        let gain = &beta + &lambda;
        let kappa = &beta / &lambda;
        LargeScaleParams {
            gain,
            kappa,
            beta,
            lambda,
            loss_dist_db: Array2::zeros((m, k)),
            loss_shad_db: Array2::zeros((m, k)),
            loss_angle_db: Array2::zeros((m, k)),
        }
    }

    fn frame(tau_up: usize) -> FrameConfig {
        FrameConfig {
            tau_c: 300,
            tau_up,
            tau_ud: 30 - tau_up,
            tau_dd: 270,
        }
    }

    fn problem<'a>(
        ls: &'a LargeScaleParams,
        pa: &'a PilotAssignment,
        r_min: f64,
        p_max: f64,
        alpha: f64,
    ) -> AllocationProblem<'a> {
        AllocationProblem {
            ls,
            pa,
            noise_var: 0.2,
            frame: frame(pa.tau_up),
            active: vec![true; ls.num_uts()],
            r_min: vec![r_min; ls.num_uts()],
            p_max: vec![p_max; ls.num_saps()],
            alpha,
        }
    }

    fn small_ga(seed: u64) -> GaParams {
        GaParams {
            population: 24,
            generations: 40,
            seed,
            ..GaParams::default()
        }
    }

    #[test]
    fn objective_weights_components() {
        let ls = synthetic_ls(2, 3, 1);
        let pa = assign_pilots(3, 2, &PilotPolicy::RoundRobin, 1.0);
        let pr = problem(&ls, &pa, 0.0, 2.0, 1.0);
        let sol = PowerSolution {
            power: Array2::zeros((2, 3)),
            admitted: vec![true; 3],
            objective: 0.0,
            rates: vec![0.7, 0.9, 1.1],
            feasible: true,
        };
        assert_relative_eq!(objective(&pr, &sol), 3.0);
        let pr0 = problem(&ls, &pa, 0.0, 2.0, 0.0);
        assert_relative_eq!(objective(&pr0, &sol), 2.7);
        let pr_half = problem(&ls, &pa, 0.0, 2.0, 0.5);
        assert_relative_eq!(objective(&pr_half, &sol), 0.5 * 2.7 + 0.5 * 3.0);
    }

    #[test]
    fn impossible_floor_admits_nobody() {
        let ls = synthetic_ls(2, 2, 2);
        let pa = assign_pilots(2, 2, &PilotPolicy::RoundRobin, 1.0);
        let pr = problem(&ls, &pa, f64::INFINITY, 2.0, 0.5);
        let sol = ga_solve(&pr, &small_ga(7));
        assert!(sol.admitted.iter().all(|&a| !a));
        assert_relative_eq!(sol.objective, 0.0);
        assert!(sol.power.iter().all(|&p| p == 0.0));
        assert!(satisfies_constraints(&pr, &sol));
    }

    #[test]
    fn all_zero_channel_yields_zero_objective() {
        let mut ls = synthetic_ls(2, 2, 3);
        ls.gain.fill(0.0);
        ls.beta.fill(0.0);
        ls.lambda.fill(0.0);
        let pa = assign_pilots(2, 2, &PilotPolicy::RoundRobin, 1.0);
        let pr = problem(&ls, &pa, 0.5, 2.0, 0.5);
        let sol = brute_force_solve(&pr, 3).unwrap();
        assert_relative_eq!(sol.objective, 0.0);
        assert!(sol.admitted.iter().all(|&a| !a));
    }

    #[test]
    fn brute_force_candidate_budget_is_enforced() {
        let ls = synthetic_ls(4, 4, 4);
        let pa = assign_pilots(4, 4, &PilotPolicy::RoundRobin, 1.0);
        let pr = problem(&ls, &pa, 0.1, 2.0, 0.5);
        // 8^16 * 2^4 is far beyond the cap
        assert!(matches!(
            brute_force_solve(&pr, 8),
            Err(AllocationError::BruteForceTooLarge { .. })
        ));
        assert!(matches!(
            brute_force_solve(&pr, 1),
            Err(AllocationError::InvalidGrid(1))
        ));
    }

    #[test]
    fn grid_oracle_regression_fixture() {
        // frozen output of brute_force_solve on the 2x2 oracle instance
        let inst = crate::verify::ga_oracle_instance();
        let pr = AllocationProblem {
            ls: &inst.ls,
            pa: &inst.pa,
            noise_var: inst.noise_var,
            frame: inst.frame,
            active: vec![true; 2],
            r_min: vec![0.4; 2],
            p_max: vec![2.0; 2],
            alpha: 0.5,
        };
        let sol = brute_force_solve(&pr, 8).unwrap();
        assert_relative_eq!(sol.objective, 2.073204781526890, max_relative = 1e-9);
        assert_eq!(sol.admitted, vec![true, true]);
        // the optimum saturates both SAP budgets
        for mi in 0..2 {
            let total: f64 = (0..2).map(|ki| sol.power[[mi, ki]]).sum();
            assert_relative_eq!(total, 2.0, max_relative = 1e-9);
        }
    }

    #[test]
    fn ga_meets_brute_force_on_small_instances() {
        let ls = synthetic_ls(2, 2, 5);
        let pa = assign_pilots(2, 2, &PilotPolicy::RoundRobin, 1.0);
        let pr = problem(&ls, &pa, 0.4, 2.0, 0.5);
        let oracle = brute_force_solve(&pr, 8).unwrap();
        let mut wins = 0;
        for seed in 0..5 {
            let sol = ga_solve(&pr, &small_ga(seed));
            assert!(satisfies_constraints(&pr, &sol));
            if sol.objective >= 0.95 * oracle.objective {
                wins += 1;
            }
        }
        assert!(wins >= 4, "GA matched the oracle in only {wins}/5 seeds");
    }

    #[test]
    fn single_ut_ga_matches_dense_oracle() {
        let ls = synthetic_ls(2, 1, 6);
        let pa = assign_pilots(1, 1, &PilotPolicy::RoundRobin, 1.0);
        let pr = problem(&ls, &pa, 0.1, 2.0, 0.0);
        let oracle = brute_force_solve(&pr, 64).unwrap();
        let sol = ga_solve(&pr, &small_ga(11));
        assert!(
            sol.objective >= 0.99 * oracle.objective,
            "ga {} vs oracle {}",
            sol.objective,
            oracle.objective
        );
        // the oracle itself pushes the budget onto the links
        let used: f64 = oracle.power.iter().sum();
        let budget: f64 = pr.p_max.iter().sum();
        assert!(used > 0.9 * budget, "oracle used {used} of {budget}");
    }

    #[test]
    fn ga_is_deterministic() {
        let ls = synthetic_ls(3, 3, 7);
        let pa = assign_pilots(3, 2, &PilotPolicy::RoundRobin, 1.0);
        let pr = problem(&ls, &pa, 0.3, 2.0, 0.5);
        let a = ga_solve(&pr, &small_ga(13));
        let b = ga_solve(&pr, &small_ga(13));
        assert_eq!(a.power, b.power);
        assert_eq!(a.admitted, b.admitted);
        assert_eq!(a.objective.to_bits(), b.objective.to_bits());
    }

    #[test]
    fn more_generations_never_hurt() {
        let ls = synthetic_ls(3, 3, 8);
        let pa = assign_pilots(3, 2, &PilotPolicy::RoundRobin, 1.0);
        let pr = problem(&ls, &pa, 0.3, 2.0, 0.5);
        let short = ga_solve(
            &pr,
            &GaParams {
                generations: 0,
                ..small_ga(17)
            },
        );
        let long = ga_solve(&pr, &small_ga(17));
        assert!(long.objective >= short.objective);
        assert!(short.objective >= 0.0);
    }

    #[test]
    fn repair_is_idempotent() {
        let ls = synthetic_ls(3, 3, 9);
        let pa = assign_pilots(3, 2, &PilotPolicy::RoundRobin, 1.0);
        let pr = problem(&ls, &pa, 0.2, 2.0, 0.5);
        let ctx = pr.context();
        let sol = ga_solve(&pr, &small_ga(19));

        let mut power = sol.power.clone();
        let mut sqrt_p = power.map(|&p| p.sqrt());
        let mut admitted = sol.admitted.clone();
        let (rates, dropped) = repair(&ctx, &pr, &mut power, &mut sqrt_p, &mut admitted);
        assert_eq!(dropped, 0);
        assert_eq!(power, sol.power);
        assert_eq!(admitted, sol.admitted);
        for (a, b) in rates.iter().zip(&sol.rates) {
            assert_relative_eq!(a, b, max_relative = 1e-12);
        }
    }

    #[test]
    fn every_allocator_emits_feasible_solutions() {
        let mut r = rng::stream(41, &[0]);
        for trial in 0..60 {
            let m = r.gen_range(1..=3);
            let k = r.gen_range(1..=4);
            let tau = r.gen_range(1..=3);
            let ls = synthetic_ls(m, k, 1000 + trial);
            let pa = assign_pilots(k, tau, &PilotPolicy::RoundRobin, r.gen_range(0.2..2.0));
            let pr = AllocationProblem {
                ls: &ls,
                pa: &pa,
                noise_var: r.gen_range(0.05..0.5),
                frame: frame(tau),
                active: (0..k).map(|_| r.gen_bool(0.9)).collect(),
                r_min: (0..k).map(|_| r.gen_range(0.0..1.5)).collect(),
                p_max: (0..m).map(|_| r.gen_range(0.5..4.0)).collect(),
                alpha: r.gen_range(0.0..1.0),
            };
            let ga = GaParams {
                population: 12,
                generations: 10,
                seed: trial,
                ..GaParams::default()
            };
            for sol in [
                ga_solve(&pr, &ga),
                best_channel_allocate(&pr),
                max_serv_time_allocate(&pr, &vec![None; k]),
            ] {
                assert!(satisfies_constraints(&pr, &sol), "trial {trial}");
            }
        }
    }

    #[test]
    fn best_channel_single_ut_gets_full_budget() {
        let ls = synthetic_ls(3, 1, 10);
        let pa = assign_pilots(1, 1, &PilotPolicy::RoundRobin, 1.0);
        let pr = problem(&ls, &pa, 0.0, 2.0, 0.5);
        let sol = best_channel_allocate(&pr);
        let best = (0..3).max_by(|&a, &b| ls.gain[[a, 0]].total_cmp(&ls.gain[[b, 0]])).unwrap();
        assert_relative_eq!(sol.power[[best, 0]], 2.0);
        let nonzero = sol.power.iter().filter(|&&p| p > 0.0).count();
        assert_eq!(nonzero, 1);
    }

    #[test]
    fn best_channel_splits_budget_equally() {
        let mut ls = synthetic_ls(2, 2, 11);
        // force both UTs onto SAP 0
        ls.gain[[0, 0]] = 5.0;
        ls.gain[[0, 1]] = 5.0;
        ls.gain[[1, 0]] = 0.1;
        ls.gain[[1, 1]] = 0.1;
        let pa = assign_pilots(2, 2, &PilotPolicy::RoundRobin, 1.0);
        let pr = problem(&ls, &pa, 0.0, 3.0, 0.5);
        let sol = best_channel_allocate(&pr);
        assert_relative_eq!(sol.power[[0, 0]], 1.5);
        assert_relative_eq!(sol.power[[0, 1]], 1.5);
        assert_eq!(sol.power[[1, 0]], 0.0);
    }

    #[test]
    fn best_channel_association_is_scale_invariant() {
        let ls = synthetic_ls(3, 4, 12);
        let pa = assign_pilots(4, 2, &PilotPolicy::RoundRobin, 1.0);
        let pr = problem(&ls, &pa, 0.2, 2.0, 0.5);
        let assoc = best_channel_association(&pr);

        let mut scaled = ls.clone();
        scaled.gain.mapv_inplace(|g| g * 7.3);
        let pr2 = problem(&scaled, &pa, 0.2, 2.0, 0.5);
        assert_eq!(assoc, best_channel_association(&pr2));
    }

    #[test]
    fn baselines_are_column_sparse() {
        let ls = synthetic_ls(3, 5, 13);
        let pa = assign_pilots(5, 3, &PilotPolicy::RoundRobin, 1.0);
        let pr = problem(&ls, &pa, 0.3, 2.0, 0.5);
        for sol in [
            best_channel_allocate(&pr),
            max_serv_time_allocate(&pr, &[Some(1), None, Some(0), Some(2), None]),
        ] {
            for ki in 0..5 {
                let nonzero = (0..3).filter(|&mi| sol.power[[mi, ki]] > 0.0).count();
                assert!(nonzero <= 1, "UT {ki} served by {nonzero} SAPs");
            }
        }
    }

    #[test]
    fn max_serv_time_keeps_said_sap_while_rate_holds() {
        let ls = synthetic_ls(2, 1, 14);
        let pa = assign_pilots(1, 1, &PilotPolicy::RoundRobin, 1.0);
        let pr = problem(&ls, &pa, 0.0, 2.0, 0.5);
        // r_min 0: any visible SAP satisfies the floor, so the worse SAP is kept
        let worse = if ls.gain[[0, 0]] < ls.gain[[1, 0]] { 0 } else { 1 };
        let sol = max_serv_time_allocate(&pr, &[Some(worse)]);
        assert_eq!(sol.single_sap_association()[0], Some(worse));
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]

            /// Whatever the problem, every allocator emits a solution that
            /// meets all four feasibility conditions.
            #[test]
            fn emitted_solutions_are_feasible(
                seed in 0u64..10_000,
                m in 1usize..=3,
                k in 1usize..=4,
                tau in 1usize..=3,
                r_min in 0.0f64..1.5,
                p_max in 0.5f64..4.0,
                alpha in 0.0f64..=1.0,
            ) {
                let ls = synthetic_ls(m, k, seed);
                let pa = assign_pilots(k, tau, &PilotPolicy::RoundRobin, 1.0);
                let pr = AllocationProblem {
                    ls: &ls,
                    pa: &pa,
                    noise_var: 0.1,
                    frame: frame(tau.min(30)),
                    active: vec![true; k],
                    r_min: vec![r_min; k],
                    p_max: vec![p_max; m],
                    alpha,
                };
                let ga = GaParams { population: 8, generations: 6, seed, ..GaParams::default() };
                for sol in [
                    ga_solve(&pr, &ga),
                    best_channel_allocate(&pr),
                    max_serv_time_allocate(&pr, &vec![None; k]),
                ] {
                    prop_assert!(satisfies_constraints(&pr, &sol));
                    prop_assert!(sol.feasible);
                    prop_assert!(sol.objective >= 0.0);
                }
            }

            /// Budget rescaling never overshoots: per-SAP sums stay within
            /// the 1e-9 W slack even for saturated random genomes.
            #[test]
            fn budget_slack_holds(seed in 0u64..10_000) {
                let ls = synthetic_ls(3, 4, seed);
                let pa = assign_pilots(4, 2, &PilotPolicy::RoundRobin, 1.0);
                let pr = problem(&ls, &pa, 0.0, 1.5, 0.5);
                let sol = ga_solve(&pr, &GaParams { population: 6, generations: 4, seed, ..GaParams::default() });
                for mi in 0..3 {
                    let total: f64 = (0..4).map(|ki| sol.power[[mi, ki]]).sum();
                    prop_assert!(total <= 1.5 + 1e-9);
                }
            }
        }
    }

    #[test]
    fn max_serv_time_falls_back_to_best_channel() {
        let ls = synthetic_ls(2, 1, 15);
        let pa = assign_pilots(1, 1, &PilotPolicy::RoundRobin, 1.0);
        // floor nobody can reach from the weak SAP but the strong one can
        let strong = if ls.gain[[0, 0]] > ls.gain[[1, 0]] { 0 } else { 1 };
        let weak = 1 - strong;

        let pr_low = problem(&ls, &pa, 0.0, 2.0, 0.5);
        let bc = best_channel_allocate(&pr_low);
        assert_eq!(bc.single_sap_association()[0], Some(strong));

        let weak_rate = {
            let sol = max_serv_time_allocate(&pr_low, &[Some(weak)]);
            sol.rates[0]
        };
        let pr = problem(&ls, &pa, weak_rate * 1.5, 2.0, 0.5);
        let sol = max_serv_time_allocate(&pr, &[Some(weak)]);
        assert_eq!(
            sol.single_sap_association()[0],
            Some(strong),
            "below-threshold UT re-associates to the best channel"
        );
    }
}
