//! Self-checks behind the `verify` CLI command and the acceptance suite:
//! estimator moment identities, closed-form rate terms against their
//! Monte-Carlo counterparts, denominator positivity, GA-versus-grid oracle
//! trials and allocator feasibility over randomized problems.

use ndarray::Array2;
use num_complex::Complex64;
use rand::Rng;

use crate::allocation::{
    best_channel_allocate, brute_force_solve, ga_solve, max_serv_time_allocate,
    satisfies_constraints, AllocationProblem, GaParams,
};
use crate::channel::{draw_channel, LargeScaleParams};
use crate::downlink::{mc_moment_check, FrameConfig, MomentCheck, MomentReport, RateInputs};
use crate::rng::{self, purpose};
use crate::training::{
    assign_pilots, gamma_matrix, mmse_estimate, receive_and_despread, PilotAssignment,
    PilotPolicy,
};

/// A self-contained rate-model instance (no geometry behind it).
pub struct Instance {
    pub ls: LargeScaleParams,
    pub pa: PilotAssignment,
    pub noise_var: f64,
    pub frame: FrameConfig,
    pub power: Array2<f64>,
}

fn synthetic_ls(beta: Array2<f64>, lambda: Array2<f64>) -> LargeScaleParams {
    let gain = &beta + &lambda;
    let kappa = &beta / &lambda;
    let dim = beta.dim();
    LargeScaleParams {
        gain,
        kappa,
        beta,
        lambda,
        loss_dist_db: Array2::zeros(dim),
        loss_shad_db: Array2::zeros(dim),
        loss_angle_db: Array2::zeros(dim),
    }
}

/// The 3-SAP / 4-UT / 2-pilot instance used by the moment checks. UTs 0/2
/// and 1/3 share pilots, so both contamination paths are exercised.
pub fn canonical_instance() -> Instance {
    let m = 3;
    let k = 4;
    let beta = Array2::from_shape_fn((m, k), |(mi, ki)| 0.9 + 0.15 * mi as f64 + 0.08 * ki as f64);
    let lambda =
        Array2::from_shape_fn((m, k), |(mi, ki)| 0.30 + 0.05 * mi as f64 + 0.04 * ki as f64);
    let power = Array2::from_shape_fn((m, k), |(mi, ki)| 0.25 + 0.05 * (mi + ki) as f64);
    Instance {
        ls: synthetic_ls(beta, lambda),
        pa: assign_pilots(k, 2, &PilotPolicy::RoundRobin, 1.5),
        noise_var: 0.35,
        frame: FrameConfig {
            tau_c: 300,
            tau_up: 2,
            tau_ud: 28,
            tau_dd: 270,
        },
        power,
    }
}

/// The 2-SAP / 2-UT orthogonal-pilot instance for the GA-versus-grid
/// oracle.
pub fn ga_oracle_instance() -> Instance {
    let beta = Array2::from_shape_fn((2, 2), |(mi, ki)| 0.7 + 0.3 * mi as f64 + 0.2 * ki as f64);
    let lambda = Array2::from_shape_fn((2, 2), |(mi, ki)| 0.25 + 0.1 * (mi ^ ki) as f64);
    Instance {
        ls: synthetic_ls(beta, lambda),
        pa: assign_pilots(2, 2, &PilotPolicy::RoundRobin, 1.2),
        noise_var: 0.3,
        frame: FrameConfig {
            tau_c: 300,
            tau_up: 2,
            tau_ud: 28,
            tau_dd: 270,
        },
        power: Array2::zeros((2, 2)),
    }
}

fn push(checks: &mut Vec<MomentCheck>, name: String, closed: f64, mc: f64, err: f64) {
    checks.push(MomentCheck {
        name,
        closed,
        monte_carlo: mc,
        rel_err: err,
    });
}

/// Monte-Carlo verification of the estimator's conditional moments on the
/// canonical instance: mean, variance, second moment (the `W` diagonal) and
/// co-pilot covariance per pair, all conditioned on one fixed phase draw.
pub fn training_moment_report(trials: usize, seed: u64) -> MomentReport {
    let inst = canonical_instance();
    let (m, k) = inst.ls.beta.dim();
    let tau = inst.pa.tau_up as f64;
    let gamma = gamma_matrix(&inst.ls, &inst.pa, inst.noise_var, None);
    let phases = Array2::from_shape_fn((m, k), |(mi, ki)| {
        0.4 + 0.9 * mi as f64 - 0.6 * ki as f64
    });

    let copilot_pairs: Vec<(usize, usize)> = (0..k)
        .flat_map(|ki| inst.pa.copilots_of(ki).map(move |kj| (ki, kj)))
        .filter(|&(a, b)| a < b)
        .collect();

    let mut rng = rng::stream(seed, &[purpose::VERIFY, 1]);
    let mut mean_acc = Array2::from_elem((m, k), Complex64::ZERO);
    let mut var_acc = Array2::<f64>::zeros((m, k));
    let mut second_acc = Array2::<f64>::zeros((m, k));
    let mut cov_acc = vec![Complex64::ZERO; copilot_pairs.len()];

    for _ in 0..trials {
        let mut ch = draw_channel(&inst.ls, &mut rng);
        for mi in 0..m {
            for ki in 0..k {
                ch.phase[[mi, ki]] = phases[[mi, ki]];
                ch.h[[mi, ki]] = inst.ls.beta[[mi, ki]].sqrt()
                    * Complex64::from_polar(1.0, phases[[mi, ki]])
                    + ch.nlos[[mi, ki]];
            }
        }
        let obs = receive_and_despread(&ch, &inst.pa, inst.noise_var, &mut rng);
        let est = mmse_estimate(&obs, &inst.ls, &phases, &inst.pa).expect("gamma > 0");
        for mi in 0..m {
            for ki in 0..k {
                let dev = est.hhat[[mi, ki]] - est.mean[[mi, ki]];
                mean_acc[[mi, ki]] += est.hhat[[mi, ki]];
                var_acc[[mi, ki]] += dev.norm_sqr();
                second_acc[[mi, ki]] += est.hhat[[mi, ki]].norm_sqr();
            }
        }
        for (i, &(a, b)) in copilot_pairs.iter().enumerate() {
            for mi in 0..m {
                let dev_a = est.hhat[[mi, a]] - est.mean[[mi, a]];
                let dev_b = est.hhat[[mi, b]] - est.mean[[mi, b]];
                cov_acc[i] += dev_a * dev_b.conj();
            }
        }
    }

    let n = trials as f64;
    let mut checks = Vec::new();
    for mi in 0..m {
        for ki in 0..k {
            let q = inst.pa.pilot_power[ki];
            let lam = inst.ls.lambda[[mi, ki]];
            let beta = inst.ls.beta[[mi, ki]];
            let mean_expect =
                beta.sqrt() * Complex64::from_polar(1.0, phases[[mi, ki]]);
            let mc_mean = mean_acc[[mi, ki]] / n;
            push(
                &mut checks,
                format!("estimate_mean[{mi},{ki}]"),
                mean_expect.norm(),
                mc_mean.norm(),
                (mc_mean - mean_expect).norm() / mean_expect.norm(),
            );

            let var_expect = q * tau * lam * lam / gamma[[mi, ki]];
            let mc_var = var_acc[[mi, ki]] / n;
            push(
                &mut checks,
                format!("estimate_variance[{mi},{ki}]"),
                var_expect,
                mc_var,
                (mc_var - var_expect).abs() / var_expect,
            );

            let w = beta + var_expect;
            let mc_second = second_acc[[mi, ki]] / n;
            push(
                &mut checks,
                format!("w_diagonal[{mi},{ki}]"),
                w,
                mc_second,
                (mc_second - w).abs() / w,
            );
        }
    }
    for (i, &(a, b)) in copilot_pairs.iter().enumerate() {
        let mut expect = 0.0;
        for mi in 0..m {
            expect += tau
                * (inst.pa.pilot_power[a] * inst.pa.pilot_power[b]).sqrt()
                * inst.ls.lambda[[mi, a]]
                * inst.ls.lambda[[mi, b]]
                / gamma[[mi, a]];
        }
        let mc = cov_acc[i] / n;
        push(
            &mut checks,
            format!("copilot_covariance[{a}~{b}]"),
            expect,
            mc.re,
            (mc - Complex64::new(expect, 0.0)).norm() / expect,
        );
    }

    MomentReport { trials, checks }
}

/// Term-by-term validation of the closed-form rate on the canonical
/// instance.
pub fn rate_moment_report(trials: usize, seed: u64) -> MomentReport {
    let inst = canonical_instance();
    let inputs = RateInputs {
        power: &inst.power,
        ls: &inst.ls,
        pa: &inst.pa,
        noise_var: inst.noise_var,
        frame: inst.frame,
    };
    mc_moment_check(&inputs, trials, &mut rng::stream(seed, &[purpose::VERIFY, 2]))
        .expect("canonical instance is well-posed")
}

/// Evaluates the closed form on `n` random valid inputs and counts
/// non-positive denominators (the model guarantees zero).
pub fn denominator_positivity_violations(n: usize, seed: u64) -> usize {
    let mut rng = rng::stream(seed, &[purpose::VERIFY, 3]);
    let mut violations = 0;
    for _ in 0..n {
        let m = rng.gen_range(1..=4);
        let k = rng.gen_range(1..=5);
        let tau = rng.gen_range(1..=4);
        let beta = Array2::from_shape_fn((m, k), |_| rng.gen_range(0.0..2.0));
        let lambda = Array2::from_shape_fn((m, k), |_| rng.gen_range(1e-6..2.0));
        let ls = synthetic_ls(beta, lambda);
        let pa = assign_pilots(k, tau, &PilotPolicy::RoundRobin, rng.gen_range(0.1..3.0));
        let power = Array2::from_shape_fn((m, k), |_| rng.gen_range(0.0..5.0));
        let noise_var = rng.gen_range(1e-4..1.0);
        let frame = FrameConfig {
            tau_c: 300,
            tau_up: tau,
            tau_ud: 0,
            tau_dd: 300 - tau,
        };
        let inputs = RateInputs {
            power: &power,
            ls: &ls,
            pa: &pa,
            noise_var,
            frame,
        };
        if crate::downlink::closed_form_rate(&inputs).is_err() {
            violations += 1;
        }
    }
    violations
}

#[derive(Debug, Clone)]
pub struct GaGridTrial {
    pub seed: u64,
    pub ga_objective: f64,
    pub oracle_objective: f64,
}

impl GaGridTrial {
    pub fn ratio(&self) -> f64 {
        if self.oracle_objective == 0.0 {
            1.0
        } else {
            self.ga_objective / self.oracle_objective
        }
    }
}

/// Runs the GA against the 8-level grid oracle on the 2x2 instance for
/// `n_seeds` GA seeds.
pub fn ga_grid_trials(n_seeds: u64) -> Vec<GaGridTrial> {
    let inst = ga_oracle_instance();
    let problem = AllocationProblem {
        ls: &inst.ls,
        pa: &inst.pa,
        noise_var: inst.noise_var,
        frame: inst.frame,
        active: vec![true; 2],
        r_min: vec![0.4; 2],
        p_max: vec![2.0; 2],
        alpha: 0.5,
    };
    let oracle = brute_force_solve(&problem, 8).expect("2x2x8 grid fits the cap");
    (0..n_seeds)
        .map(|seed| {
            let sol = ga_solve(
                &problem,
                &GaParams {
                    seed,
                    ..GaParams::default()
                },
            );
            GaGridTrial {
                seed,
                ga_objective: sol.objective,
                oracle_objective: oracle.objective,
            }
        })
        .collect()
}

/// Solves `n` randomized problems with the GA and both baselines and counts
/// emitted solutions that violate any feasibility condition.
pub fn allocator_feasibility_violations(n: usize, seed: u64) -> usize {
    let mut rng = rng::stream(seed, &[purpose::VERIFY, 4]);
    let mut violations = 0;
    for trial in 0..n {
        let m = rng.gen_range(1..=3);
        let k = rng.gen_range(1..=4);
        let tau = rng.gen_range(1..=3);
        let beta = Array2::from_shape_fn((m, k), |_| rng.gen_range(0.05..2.0));
        let lambda = Array2::from_shape_fn((m, k), |_| rng.gen_range(0.01..0.8));
        let ls = synthetic_ls(beta, lambda);
        let pa = assign_pilots(k, tau, &PilotPolicy::RoundRobin, rng.gen_range(0.2..2.5));
        let problem = AllocationProblem {
            ls: &ls,
            pa: &pa,
            noise_var: rng.gen_range(0.02..0.6),
            frame: FrameConfig {
                tau_c: 300,
                tau_up: tau,
                tau_ud: 0,
                tau_dd: 300 - tau,
            },
            active: (0..k).map(|_| rng.gen_bool(0.9)).collect(),
            r_min: (0..k).map(|_| rng.gen_range(0.0..1.5)).collect(),
            p_max: (0..m).map(|_| rng.gen_range(0.5..4.0)).collect(),
            alpha: rng.gen_range(0.0..1.0),
        };
        let ga = GaParams {
            population: 12,
            generations: 12,
            seed: trial as u64,
            ..GaParams::default()
        };
        let prev: Vec<Option<usize>> = (0..k)
            .map(|_| {
                if rng.gen_bool(0.5) {
                    Some(rng.gen_range(0..m))
                } else {
                    None
                }
            })
            .collect();
        for sol in [
            ga_solve(&problem, &ga),
            best_channel_allocate(&problem),
            max_serv_time_allocate(&problem, &prev),
        ] {
            if !satisfies_constraints(&problem, &sol) {
                violations += 1;
            }
        }
    }
    violations
}

/// Everything the `verify` command reports.
pub struct VerifyReport {
    pub training: MomentReport,
    pub rate_terms: MomentReport,
    pub denominator_violations: usize,
    pub ga_trials: Vec<GaGridTrial>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.training.max_rel_err() < 0.03
            && self.rate_terms.max_rel_err() < 0.03
            && self.denominator_violations == 0
            && self.ga_trials.iter().filter(|t| t.ratio() >= 0.95).count() * 10
                >= self.ga_trials.len() * 9
    }
}

/// Runs the full verification battery.
pub fn run_verify(trials: usize, seed: u64) -> VerifyReport {
    VerifyReport {
        training: training_moment_report(trials, seed),
        rate_terms: rate_moment_report(trials, seed),
        denominator_violations: denominator_positivity_violations(10_000, seed),
        ga_trials: ga_grid_trials(10),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_instance_shares_pilots_as_documented() {
        let inst = canonical_instance();
        assert_eq!(inst.pa.copilot[0], vec![0, 2]);
        assert_eq!(inst.pa.copilot[1], vec![1, 3]);
    }

    #[test]
    fn quick_verify_battery_passes() {
        // reduced trial count for the unit suite; acceptance runs 1e5
        let training = training_moment_report(20_000, 7);
        assert!(
            training.max_rel_err() < 0.05,
            "worst training moment: {:?}",
            training
                .checks
                .iter()
                .max_by(|a, b| a.rel_err.total_cmp(&b.rel_err))
        );
        let rates = rate_moment_report(20_000, 7);
        assert!(
            rates.max_rel_err() < 0.05,
            "worst rate term: {:?}",
            rates
                .checks
                .iter()
                .max_by(|a, b| a.rel_err.total_cmp(&b.rel_err))
        );
        assert_eq!(denominator_positivity_violations(1_000, 7), 0);
    }

    #[test]
    fn ga_oracle_trials_track_the_optimum() {
        let trials = ga_grid_trials(3);
        for t in &trials {
            assert!(t.oracle_objective > 0.0);
            assert!(t.ratio() >= 0.9, "seed {}: ratio {}", t.seed, t.ratio());
        }
    }

    #[test]
    fn random_allocators_stay_feasible() {
        assert_eq!(allocator_feasibility_violations(40, 3), 0);
    }
}
