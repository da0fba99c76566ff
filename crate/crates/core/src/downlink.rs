//! Conjugate-beamforming downlink: precoders, the closed-form achievable
//! rate, and its Monte-Carlo moment oracle.
//!
//! The rate of UT `k` is `(tau_dd / tau_c) * log2(1 + SINR_k)` where the
//! SINR is a ratio of traces over diagonal per-pair statistics:
//!
//! * numerator: coherent beamforming gain `(sum_m sqrt(p_mk W_mk))^2`,
//! * denominator: total received power `sum_m lambda'_mk sum_k' p_mk'`,
//!   plus the coherent co-pilot contamination term, minus the self term
//!   `sum_m p_mk beta_mk^2 / W_mk`, plus receiver noise.
//!
//! `W_mk = beta_mk + q_k tau lambda_mk^2 / gamma_mk` is the second moment of
//! the channel estimate and `lambda'_mk = lambda_mk + beta_mk` the full link
//! gain. All statistics are independent of the power matrix, so
//! [`RateContext`] caches them once per slot and the allocator re-evaluates
//! thousands of candidate power matrices against the same context.

use ndarray::Array2;
use num_complex::Complex64;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::channel::{draw_channel, LargeScaleParams};
use crate::training::{gamma_matrix, mmse_estimate, receive_and_despread, EstimateSet, PilotAssignment};

#[derive(Debug, Error)]
pub enum DownlinkError {
    #[error("invalid frame split: tau_up {tau_up} + tau_ud {tau_ud} + tau_dd {tau_dd} != tau_c {tau_c}")]
    InvalidFrame {
        tau_c: usize,
        tau_up: usize,
        tau_ud: usize,
        tau_dd: usize,
    },
    #[error("power {power} assigned to SAP {sap} -> UT {ut} whose estimate statistics are zero")]
    PowerOnDeadLink { sap: usize, ut: usize, power: f64 },
    #[error("non-positive SINR denominator {value} for UT {ut}: model violation")]
    NonPositiveDenominator { ut: usize, value: f64 },
}

/// TDD coherence-interval split (samples).
#[derive(Debug, Clone, Copy)]
pub struct FrameConfig {
    pub tau_c: usize,
    pub tau_up: usize,
    pub tau_ud: usize,
    pub tau_dd: usize,
}

impl FrameConfig {
    pub fn validate(&self) -> Result<(), DownlinkError> {
        if self.tau_up + self.tau_ud + self.tau_dd != self.tau_c || self.tau_c == 0 {
            return Err(DownlinkError::InvalidFrame {
                tau_c: self.tau_c,
                tau_up: self.tau_up,
                tau_ud: self.tau_ud,
                tau_dd: self.tau_dd,
            });
        }
        Ok(())
    }

    /// Fraction of the coherence interval spent on DL data.
    pub fn dl_fraction(&self) -> f64 {
        self.tau_dd as f64 / self.tau_c as f64
    }
}

/// Everything the closed-form rate needs besides the power matrix.
pub struct RateInputs<'a> {
    /// Power scaling factors per (SAP, UT) (W)
    pub power: &'a Array2<f64>,
    pub ls: &'a LargeScaleParams,
    pub pa: &'a PilotAssignment,
    /// Receiver noise power (W)
    pub noise_var: f64,
    pub frame: FrameConfig,
}

/// Per-UT rate decomposition. All diagnostic vectors refer to the SINR of
/// the same index: `sinr = numerator / (interference + contamination -
/// self_correction + noise)`.
#[derive(Debug, Clone)]
pub struct RateReport {
    /// Achievable DL rates (bps/Hz)
    pub rates: Vec<f64>,
    /// Linear SINRs
    pub sinr: Vec<f64>,
    pub numerator: Vec<f64>,
    pub interference: Vec<f64>,
    pub contamination: Vec<f64>,
    pub self_correction: Vec<f64>,
}

/// One coherent co-pilot interference pair: UT `victim` receives from the
/// precoder of co-pilot UT `source`.
struct CopilotPair {
    victim: usize,
    source: usize,
    /// `q_victim * q_source * tau^2`
    scale: f64,
    /// Per-SAP coefficient `lambda_{m,victim} lambda_{m,source} /
    /// (gamma_{m,source} sqrt(W_{m,source}))`
    coef: Vec<f64>,
}

/// Power-independent statistics for one slot, shared across many
/// power-matrix evaluations. Immutable and safe to share across workers.
pub struct RateContext {
    num_saps: usize,
    num_uts: usize,
    noise_var: f64,
    dl_fraction: f64,
    /// sqrt(W) per pair; zero marks a dead link
    sqrt_w: Array2<f64>,
    /// lambda + beta per pair
    lambda_prime: Array2<f64>,
    /// beta^2 / W per pair (0 on dead links)
    self_coef: Array2<f64>,
    /// 1.0 for live (SAP, UT) pairs of active UTs, else 0.0
    alive: Array2<f64>,
    active: Vec<bool>,
    pairs: Vec<CopilotPair>,
    /// Estimator normalization, kept for the moment oracle
    gamma: Array2<f64>,
}

impl RateContext {
    pub fn new(
        ls: &LargeScaleParams,
        pa: &PilotAssignment,
        noise_var: f64,
        frame: FrameConfig,
        active: Option<&[bool]>,
    ) -> Result<Self, DownlinkError> {
        frame.validate()?;
        let (m, k) = ls.beta.dim();
        let active: Vec<bool> = match active {
            Some(a) => a.to_vec(),
            None => vec![true; k],
        };
        let tau = pa.tau_up as f64;
        let gamma = gamma_matrix(ls, pa, noise_var, Some(&active));

        let mut sqrt_w = Array2::zeros((m, k));
        let mut lambda_prime = Array2::zeros((m, k));
        let mut self_coef = Array2::zeros((m, k));
        let mut alive = Array2::zeros((m, k));
        for ki in 0..k {
            if !active[ki] {
                continue;
            }
            for mi in 0..m {
                let beta = ls.beta[[mi, ki]];
                let lambda = ls.lambda[[mi, ki]];
                let w = beta + pa.pilot_power[ki] * tau * lambda * lambda / gamma[[mi, ki]];
                if w > 0.0 {
                    sqrt_w[[mi, ki]] = w.sqrt();
                    self_coef[[mi, ki]] = beta * beta / w;
                    alive[[mi, ki]] = 1.0;
                }
                lambda_prime[[mi, ki]] = lambda + beta;
            }
        }

        let mut pairs = Vec::new();
        for victim in 0..k {
            if !active[victim] {
                continue;
            }
            for source in pa.copilots_of(victim) {
                if !active[source] {
                    continue;
                }
                let scale =
                    pa.pilot_power[victim] * pa.pilot_power[source] * tau * tau;
                let coef = (0..m)
                    .map(|mi| {
                        let w_sqrt = sqrt_w[[mi, source]];
                        if w_sqrt > 0.0 {
                            ls.lambda[[mi, victim]] * ls.lambda[[mi, source]]
                                / (gamma[[mi, source]] * w_sqrt)
                        } else {
                            0.0
                        }
                    })
                    .collect();
                pairs.push(CopilotPair {
                    victim,
                    source,
                    scale,
                    coef,
                });
            }
        }

        Ok(Self {
            num_saps: m,
            num_uts: k,
            noise_var,
            dl_fraction: frame.dl_fraction(),
            sqrt_w,
            lambda_prime,
            self_coef,
            alive,
            active,
            pairs,
            gamma,
        })
    }

    pub fn num_saps(&self) -> usize {
        self.num_saps
    }

    pub fn num_uts(&self) -> usize {
        self.num_uts
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    pub fn is_active(&self, k: usize) -> bool {
        self.active[k]
    }

    /// Second moment of the estimate, `W_mk` (0 on dead links).
    pub fn estimate_second_moment(&self, m: usize, k: usize) -> f64 {
        self.sqrt_w[[m, k]] * self.sqrt_w[[m, k]]
    }

    /// Whether the (SAP, UT) link can radiate at all: the conjugate
    /// precoder of a zero-statistics estimate is zero.
    pub fn is_alive(&self, m: usize, k: usize) -> bool {
        self.alive[[m, k]] > 0.0
    }

    /// Row-major 0/1 mask of radiating links (the allocator's decode path).
    pub fn alive_mask(&self) -> &[f64] {
        self.alive.as_slice().expect("contiguous")
    }

    /// Closed-form per-UT rates for one power matrix. Power pointed at dead
    /// links radiates nothing (the conjugate precoder of a zero-statistics
    /// estimate is zero) and is ignored in every term.
    pub fn evaluate(&self, power: &Array2<f64>) -> Result<RateReport, DownlinkError> {
        let sqrt_p = power.map(|&p| if p > 0.0 { p.sqrt() } else { 0.0 });
        self.evaluate_with_sqrt(power, &sqrt_p)
    }

    /// Same as [`RateContext::evaluate`] but with the caller maintaining
    /// `sqrt_p` alongside `power`, which keeps the allocator's repair loop
    /// free of square roots. This is the GA fitness hot path, hence the
    /// flat-slice indexing.
    pub fn evaluate_with_sqrt(
        &self,
        power: &Array2<f64>,
        sqrt_p: &Array2<f64>,
    ) -> Result<RateReport, DownlinkError> {
        let (m, k) = (self.num_saps, self.num_uts);
        debug_assert_eq!(power.dim(), (m, k));
        let p = power.as_slice().expect("power is contiguous");
        let sp = sqrt_p.as_slice().expect("sqrt_p is contiguous");
        let alive = self.alive.as_slice().expect("contiguous");
        let sqrt_w = self.sqrt_w.as_slice().expect("contiguous");
        let lambda_prime = self.lambda_prime.as_slice().expect("contiguous");
        let self_coef = self.self_coef.as_slice().expect("contiguous");

        // effective radiated power per SAP, dead links masked
        let mut sap_load = vec![0.0f64; m];
        for mi in 0..m {
            let row = mi * k;
            let mut acc = 0.0;
            for ki in 0..k {
                acc += p[row + ki] * alive[row + ki];
            }
            sap_load[mi] = acc;
        }

        let mut report = RateReport {
            rates: vec![0.0; k],
            sinr: vec![0.0; k],
            numerator: vec![0.0; k],
            interference: vec![0.0; k],
            contamination: vec![0.0; k],
            self_correction: vec![0.0; k],
        };

        for ki in 0..k {
            if !self.active[ki] {
                continue;
            }
            let mut coherent = 0.0;
            let mut interference = 0.0;
            let mut self_corr = 0.0;
            let mut idx = ki;
            for mi in 0..m {
                coherent += sp[idx] * sqrt_w[idx];
                interference += lambda_prime[idx] * sap_load[mi];
                self_corr += p[idx] * alive[idx] * self_coef[idx];
                idx += k;
            }
            report.numerator[ki] = coherent * coherent;
            report.interference[ki] = interference;
            report.self_correction[ki] = self_corr;
        }

        for pair in &self.pairs {
            let mut acc = 0.0;
            let mut idx = pair.source;
            for &coef in &pair.coef {
                acc += sp[idx] * coef;
                idx += k;
            }
            report.contamination[pair.victim] += pair.scale * acc * acc;
        }

        for ki in 0..k {
            if !self.active[ki] {
                continue;
            }
            let denominator = report.interference[ki] + report.contamination[ki]
                - report.self_correction[ki]
                + self.noise_var;
            if denominator <= 0.0 {
                return Err(DownlinkError::NonPositiveDenominator {
                    ut: ki,
                    value: denominator,
                });
            }
            let sinr = report.numerator[ki] / denominator;
            report.sinr[ki] = sinr;
            report.rates[ki] = self.dl_fraction * (1.0 + sinr).log2();
        }

        Ok(report)
    }
}

/// Closed-form achievable rates for the given inputs.
pub fn closed_form_rate(inputs: &RateInputs) -> Result<RateReport, DownlinkError> {
    let ctx = RateContext::new(inputs.ls, inputs.pa, inputs.noise_var, inputs.frame, None)?;
    ctx.evaluate(inputs.power)
}

/// Conjugate-beamforming precoding matrix: `v_mk = sqrt(p_mk / E|hhat_mk|^2)
/// hhat_mk`, so that `E|v_mk|^2 = p_mk`.
pub fn precoder(
    est: &EstimateSet,
    power: &Array2<f64>,
) -> Result<Array2<Complex64>, DownlinkError> {
    let (m, k) = est.hhat.dim();
    let mut v = Array2::from_elem((m, k), Complex64::ZERO);
    for mi in 0..m {
        for ki in 0..k {
            let p = power[[mi, ki]];
            if p == 0.0 {
                continue;
            }
            let second = est.second_moment(mi, ki);
            if second <= 0.0 {
                return Err(DownlinkError::PowerOnDeadLink {
                    sap: mi,
                    ut: ki,
                    power: p,
                });
            }
            v[[mi, ki]] = (p / second).sqrt() * est.hhat[[mi, ki]];
        }
    }
    Ok(v)
}

/// One closed-form-vs-Monte-Carlo comparison.
#[derive(Debug, Clone)]
pub struct MomentCheck {
    pub name: String,
    pub closed: f64,
    pub monte_carlo: f64,
    pub rel_err: f64,
}

#[derive(Debug, Clone)]
pub struct MomentReport {
    pub trials: usize,
    pub checks: Vec<MomentCheck>,
}

impl MomentReport {
    pub fn max_rel_err(&self) -> f64 {
        self.checks.iter().map(|c| c.rel_err).fold(0.0, f64::max)
    }
}

fn push_check(checks: &mut Vec<MomentCheck>, name: String, closed: f64, mc: f64) {
    let denom = closed.abs().max(1e-30);
    checks.push(MomentCheck {
        name,
        closed,
        monte_carlo: mc,
        rel_err: (mc - closed).abs() / denom,
    });
}

/// Estimates every moment behind the closed-form SINR by simulation (joint
/// draws of channel, pilot noise, estimate, precoder) and compares it with
/// its trace counterpart:
///
/// * beamforming gain `|E{v_k^H h_k}|^2` vs `|tr(P_k^{1/2} W_k)|^2`,
/// * received interference `E{|v_k'^H h_k|^2}` per ordered pair vs its
///   trace expression (with the coherent co-pilot addition and the self
///   term where they apply),
/// * per-link estimate second moments vs `W_mk`,
/// * co-pilot estimate covariances vs `tau sqrt(q_k q_k') lambda lambda' /
///   gamma`.
pub fn mc_moment_check(
    inputs: &RateInputs,
    n_trials: usize,
    rng: &mut ChaCha8Rng,
) -> Result<MomentReport, DownlinkError> {
    assert!(n_trials >= 10_000, "need at least 1e4 trials");
    let ctx = RateContext::new(inputs.ls, inputs.pa, inputs.noise_var, inputs.frame, None)?;
    let (m, k) = (ctx.num_saps, ctx.num_uts);
    let power = inputs.power;

    let mut mean_vh = vec![Complex64::ZERO; k];
    let mut abs2_vh = Array2::<f64>::zeros((k, k)); // [victim, source]
    let mut second = Array2::<f64>::zeros((m, k));
    let mut cov: Vec<Complex64> = vec![Complex64::ZERO; ctx.pairs.len()];

    for _ in 0..n_trials {
        let ch = draw_channel(inputs.ls, rng);
        let obs = receive_and_despread(&ch, inputs.pa, inputs.noise_var, rng);
        let est = mmse_estimate(&obs, inputs.ls, &ch.phase, inputs.pa)
            .expect("gamma > 0 whenever noise_var > 0");
        let v = precoder(&est, power)?;

        for victim in 0..k {
            for source in 0..k {
                let mut acc = Complex64::ZERO;
                for mi in 0..m {
                    acc += v[[mi, source]].conj() * ch.h[[mi, victim]];
                }
                if source == victim {
                    mean_vh[victim] += acc;
                }
                abs2_vh[[victim, source]] += acc.norm_sqr();
            }
        }
        for mi in 0..m {
            for ki in 0..k {
                second[[mi, ki]] += est.hhat[[mi, ki]].norm_sqr();
            }
        }
        for (i, pair) in ctx.pairs.iter().enumerate() {
            for mi in 0..m {
                let dev_v = est.hhat[[mi, pair.victim]] - est.mean[[mi, pair.victim]];
                let dev_s = est.hhat[[mi, pair.source]] - est.mean[[mi, pair.source]];
                cov[i] += dev_v * dev_s.conj();
            }
        }
    }

    let n = n_trials as f64;
    let sqrt_p = power.map(|&p| if p > 0.0 { p.sqrt() } else { 0.0 });
    let closed = ctx.evaluate(power)?;
    let mut checks = Vec::new();

    // coherent gain terms
    for ki in 0..k {
        let mc = (mean_vh[ki] / n).norm_sqr();
        push_check(
            &mut checks,
            format!("numerator[{ki}]"),
            closed.numerator[ki],
            mc,
        );
    }

    // pairwise received-power terms
    let tau = inputs.pa.tau_up as f64;
    for victim in 0..k {
        for source in 0..k {
            let mut expect = 0.0;
            for mi in 0..m {
                expect += power[[mi, source]]
                    * ctx.alive[[mi, source]]
                    * ctx.lambda_prime[[mi, victim]];
            }
            if source == victim {
                expect += closed.numerator[victim] - closed.self_correction[victim];
            } else if inputs.pa.pilot_index[victim] == inputs.pa.pilot_index[source] {
                let mut acc = 0.0;
                for mi in 0..m {
                    let w_sqrt = ctx.sqrt_w[[mi, source]];
                    if w_sqrt > 0.0 {
                        acc += sqrt_p[[mi, source]]
                            * inputs.ls.lambda[[mi, victim]]
                            * inputs.ls.lambda[[mi, source]]
                            / (ctx.gamma[[mi, source]] * w_sqrt);
                    }
                }
                expect += inputs.pa.pilot_power[victim]
                    * inputs.pa.pilot_power[source]
                    * tau
                    * tau
                    * acc
                    * acc;
            }
            push_check(
                &mut checks,
                format!("received_power[{victim}<-{source}]"),
                expect,
                abs2_vh[[victim, source]] / n,
            );
        }
    }

    // per-link estimate second moments
    for mi in 0..m {
        for ki in 0..k {
            let w = ctx.estimate_second_moment(mi, ki);
            if w > 0.0 {
                push_check(
                    &mut checks,
                    format!("estimate_second_moment[{mi},{ki}]"),
                    w,
                    second[[mi, ki]] / n,
                );
            }
        }
    }

    // co-pilot covariances (summed over SAPs to keep the report small)
    for (i, pair) in ctx.pairs.iter().enumerate() {
        let mut expect = 0.0;
        for mi in 0..m {
            expect += tau
                * (inputs.pa.pilot_power[pair.victim] * inputs.pa.pilot_power[pair.source]).sqrt()
                * inputs.ls.lambda[[mi, pair.victim]]
                * inputs.ls.lambda[[mi, pair.source]]
                / ctx.gamma[[mi, pair.victim]];
        }
        push_check(
            &mut checks,
            format!("copilot_covariance[{}~{}]", pair.victim, pair.source),
            expect,
            (cov[i] / n).re,
        );
    }

    Ok(MomentReport {
        trials: n_trials,
        checks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use crate::training::{assign_pilots, PilotPolicy};
    use approx::assert_relative_eq;
    use ndarray::Array2;
    use rand::Rng;

    fn synthetic_ls(m: usize, k: usize) -> LargeScaleParams {
        let beta =
            Array2::from_shape_fn((m, k), |(mi, ki)| 0.8 + 0.17 * mi as f64 + 0.11 * ki as f64);
        let lambda =
            Array2::from_shape_fn((m, k), |(mi, ki)| 0.25 + 0.04 * mi as f64 + 0.06 * ki as f64);
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

    fn frame() -> FrameConfig {
        FrameConfig {
            tau_c: 300,
            tau_up: 2,
            tau_ud: 28,
            tau_dd: 270,
        }
    }

    #[test]
    fn frame_split_must_add_up() {
        assert!(frame().validate().is_ok());
        let bad = FrameConfig {
            tau_c: 300,
            tau_up: 30,
            tau_ud: 0,
            tau_dd: 269,
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn zero_power_means_zero_rate() {
        let ls = synthetic_ls(3, 4);
        let pa = assign_pilots(4, 2, &PilotPolicy::RoundRobin, 1.2);
        let power = Array2::zeros((3, 4));
        let report = closed_form_rate(&RateInputs {
            power: &power,
            ls: &ls,
            pa: &pa,
            noise_var: 0.5,
            frame: frame(),
        })
        .unwrap();
        assert!(report.rates.iter().all(|&r| r == 0.0));
    }

    #[test]
    fn zero_dl_share_means_zero_rate() {
        let ls = synthetic_ls(2, 2);
        let pa = assign_pilots(2, 2, &PilotPolicy::RoundRobin, 1.2);
        let power = Array2::from_elem((2, 2), 0.4);
        let f = FrameConfig {
            tau_c: 300,
            tau_up: 30,
            tau_ud: 270,
            tau_dd: 0,
        };
        let report = closed_form_rate(&RateInputs {
            power: &power,
            ls: &ls,
            pa: &pa,
            noise_var: 0.5,
            frame: f,
        })
        .unwrap();
        assert!(report.rates.iter().all(|&r| r == 0.0));
        assert!(report.sinr.iter().all(|&s| s > 0.0));
    }

    #[test]
    fn single_ut_denominator_specializes() {
        let ls = synthetic_ls(3, 1);
        let pa = assign_pilots(1, 2, &PilotPolicy::RoundRobin, 1.2);
        let noise_var = 0.3;
        let power = Array2::from_shape_fn((3, 1), |(mi, _)| 0.5 + 0.2 * mi as f64);
        let ctx = RateContext::new(&ls, &pa, noise_var, frame(), None).unwrap();
        let report = ctx.evaluate(&power).unwrap();

        let mut expect_den = noise_var;
        for mi in 0..3 {
            let w = ctx.estimate_second_moment(mi, 0);
            expect_den += power[[mi, 0]] * (ls.lambda[[mi, 0]] + ls.beta[[mi, 0]]);
            expect_den -= power[[mi, 0]] * ls.beta[[mi, 0]].powi(2) / w;
        }
        let den = report.interference[0] + report.contamination[0] - report.self_correction[0]
            + noise_var;
        assert_relative_eq!(den, expect_den, max_relative = 1e-12);
        assert_eq!(report.contamination[0], 0.0);
    }

    #[test]
    fn rate_scales_linearly_in_dl_fraction() {
        let ls = synthetic_ls(3, 4);
        let pa = assign_pilots(4, 2, &PilotPolicy::RoundRobin, 1.2);
        let power = Array2::from_elem((3, 4), 0.3);
        let mk_frame = |tau_dd: usize| FrameConfig {
            tau_c: 300,
            tau_up: 30,
            tau_ud: 270 - tau_dd,
            tau_dd,
        };
        let r120 = closed_form_rate(&RateInputs {
            power: &power,
            ls: &ls,
            pa: &pa,
            noise_var: 0.5,
            frame: mk_frame(120),
        })
        .unwrap();
        let r240 = closed_form_rate(&RateInputs {
            power: &power,
            ls: &ls,
            pa: &pa,
            noise_var: 0.5,
            frame: mk_frame(240),
        })
        .unwrap();
        for ki in 0..4 {
            assert_relative_eq!(r120.sinr[ki], r240.sinr[ki], max_relative = 1e-12);
            assert_relative_eq!(r120.rates[ki] / r240.rates[ki], 0.5, max_relative = 1e-12);
        }
    }

    #[test]
    fn rate_decreases_with_noise() {
        let ls = synthetic_ls(3, 4);
        let pa = assign_pilots(4, 2, &PilotPolicy::RoundRobin, 1.2);
        let power = Array2::from_elem((3, 4), 0.3);
        let mut prev = vec![f64::INFINITY; 4];
        for noise in [0.1, 0.2, 0.5, 1.0, 2.0] {
            let report = closed_form_rate(&RateInputs {
                power: &power,
                ls: &ls,
                pa: &pa,
                noise_var: noise,
                frame: frame(),
            })
            .unwrap();
            for ki in 0..4 {
                assert!(report.rates[ki] < prev[ki], "noise={noise} ut={ki}");
            }
            prev = report.rates;
        }
    }

    #[test]
    fn extra_non_copilot_power_never_helps() {
        let ls = synthetic_ls(3, 4);
        // pilots: UT0/UT2 share pilot 0, UT1/UT3 share pilot 1
        let pa = assign_pilots(4, 2, &PilotPolicy::RoundRobin, 1.2);
        let mut power = Array2::from_elem((3, 4), 0.3);
        let base = closed_form_rate(&RateInputs {
            power: &power,
            ls: &ls,
            pa: &pa,
            noise_var: 0.5,
            frame: frame(),
        })
        .unwrap();
        // boost every SAP's power towards UT1 (not co-pilot with UT0)
        for mi in 0..3 {
            power[[mi, 1]] += 0.5;
        }
        let boosted = closed_form_rate(&RateInputs {
            power: &power,
            ls: &ls,
            pa: &pa,
            noise_var: 0.5,
            frame: frame(),
        })
        .unwrap();
        assert!(boosted.rates[0] <= base.rates[0]);
        assert!(boosted.rates[2] <= base.rates[2]);
    }

    #[test]
    fn denominator_stays_positive_on_random_inputs() {
        let mut rng = rng::stream(31, &[0]);
        for _ in 0..2_000 {
            let m = rng.gen_range(1..=4);
            let k = rng.gen_range(1..=5);
            let tau = rng.gen_range(1..=4);
            let beta = Array2::from_shape_fn((m, k), |_| rng.gen_range(0.0..2.0));
            let lambda = Array2::from_shape_fn((m, k), |_| rng.gen_range(0.0..2.0));
            let gain = &beta + &lambda;
            let kappa = Array2::from_elem((m, k), 1.0);
            let ls = LargeScaleParams {
                gain,
                kappa,
                beta,
                lambda,
                loss_dist_db: Array2::zeros((m, k)),
                loss_shad_db: Array2::zeros((m, k)),
                loss_angle_db: Array2::zeros((m, k)),
            };
            let pa = assign_pilots(k, tau, &PilotPolicy::RoundRobin, rng.gen_range(0.1..3.0));
            let power = Array2::from_shape_fn((m, k), |_| rng.gen_range(0.0..5.0));
            let noise_var = rng.gen_range(1e-3..1.0);
            let f = FrameConfig {
                tau_c: 300,
                tau_up: tau,
                tau_ud: 0,
                tau_dd: 300 - tau,
            };
            let report = closed_form_rate(&RateInputs {
                power: &power,
                ls: &ls,
                pa: &pa,
                noise_var,
                frame: f,
            })
            .expect("denominator must stay positive");
            for ki in 0..k {
                let den = report.interference[ki] + report.contamination[ki]
                    - report.self_correction[ki]
                    + noise_var;
                assert!(den >= noise_var * (1.0 - 1e-9));
            }
        }
    }

    #[test]
    fn precoder_zero_power_gives_zero_vector() {
        let ls = synthetic_ls(2, 2);
        let pa = assign_pilots(2, 2, &PilotPolicy::RoundRobin, 1.0);
        let ch = draw_channel(&ls, &mut rng::stream(32, &[0]));
        let obs = receive_and_despread(&ch, &pa, 0.2, &mut rng::stream(32, &[1]));
        let est = mmse_estimate(&obs, &ls, &ch.phase, &pa).unwrap();
        let v = precoder(&est, &Array2::zeros((2, 2))).unwrap();
        assert!(v.iter().all(|c| c.norm() == 0.0));
    }

    #[test]
    fn precoder_flags_power_on_dead_link() {
        let mut ls = synthetic_ls(1, 1);
        ls.beta.fill(0.0);
        ls.lambda.fill(0.0);
        ls.gain.fill(0.0);
        let pa = assign_pilots(1, 1, &PilotPolicy::RoundRobin, 1.0);
        let ch = draw_channel(&ls, &mut rng::stream(33, &[0]));
        let obs = receive_and_despread(&ch, &pa, 0.2, &mut rng::stream(33, &[1]));
        let est = mmse_estimate(&obs, &ls, &ch.phase, &pa).unwrap();
        let power = Array2::from_elem((1, 1), 1.0);
        assert!(matches!(
            precoder(&est, &power),
            Err(DownlinkError::PowerOnDeadLink { .. })
        ));
    }

    #[test]
    fn deterministic_channel_precoder_is_phase_only() {
        let mut ls = synthetic_ls(2, 2);
        ls.lambda.fill(0.0);
        let pa = assign_pilots(2, 2, &PilotPolicy::RoundRobin, 1.0);
        let ch = draw_channel(&ls, &mut rng::stream(34, &[0]));
        let obs = receive_and_despread(&ch, &pa, 0.2, &mut rng::stream(34, &[1]));
        let est = mmse_estimate(&obs, &ls, &ch.phase, &pa).unwrap();
        let power = Array2::from_shape_fn((2, 2), |(mi, ki)| 0.3 + 0.1 * (mi + ki) as f64);
        let v = precoder(&est, &power).unwrap();
        for mi in 0..2 {
            for ki in 0..2 {
                let expect = power[[mi, ki]].sqrt()
                    * Complex64::from_polar(1.0, ch.phase[[mi, ki]]);
                assert!((v[[mi, ki]] - expect).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn precoder_mean_square_is_power() {
        let ls = synthetic_ls(1, 1);
        let pa = assign_pilots(1, 1, &PilotPolicy::RoundRobin, 1.3);
        let power = Array2::from_elem((1, 1), 0.8);
        let mut rng = rng::stream(35, &[0]);
        let n = 100_000;
        let mut acc = 0.0;
        for _ in 0..n {
            let ch = draw_channel(&ls, &mut rng);
            let obs = receive_and_despread(&ch, &pa, 0.4, &mut rng);
            let est = mmse_estimate(&obs, &ls, &ch.phase, &pa).unwrap();
            let v = precoder(&est, &power).unwrap();
            acc += v[[0, 0]].norm_sqr();
        }
        let mean = acc / n as f64;
        assert!((mean - 0.8).abs() / 0.8 < 0.02, "mean = {mean}");
    }

    /// Full term-by-term validation of the closed form on a contaminated
    /// instance. This is the detailed oracle; the acceptance suite repeats
    /// it at 1e5 trials on the canonical instance.
    #[test]
    fn moments_match_closed_form_terms() {
        let ls = synthetic_ls(3, 4);
        let pa = assign_pilots(4, 2, &PilotPolicy::RoundRobin, 1.2);
        let power = Array2::from_shape_fn((3, 4), |(mi, ki)| 0.2 + 0.07 * (mi + 2 * ki) as f64);
        let inputs = RateInputs {
            power: &power,
            ls: &ls,
            pa: &pa,
            noise_var: 0.5,
            frame: frame(),
        };
        let report = mc_moment_check(&inputs, 100_000, &mut rng::stream(36, &[0])).unwrap();
        for check in &report.checks {
            assert!(
                check.rel_err < 0.03,
                "{}: closed {} vs mc {} (rel {})",
                check.name,
                check.closed,
                check.monte_carlo,
                check.rel_err
            );
        }
    }

    #[test]
    fn deterministic_channel_moments_are_exact() {
        let mut ls = synthetic_ls(2, 2);
        ls.lambda.fill(0.0);
        let pa = assign_pilots(2, 2, &PilotPolicy::RoundRobin, 1.0);
        let power = Array2::from_elem((2, 2), 0.5);
        let inputs = RateInputs {
            power: &power,
            ls: &ls,
            pa: &pa,
            noise_var: 0.4,
            frame: frame(),
        };
        let report = mc_moment_check(&inputs, 10_000, &mut rng::stream(37, &[0])).unwrap();
        // numerators involve no randomness at all when lambda = 0
        for check in report.checks.iter().filter(|c| c.name.starts_with("numerator")) {
            assert!(check.rel_err < 1e-9, "{}: {}", check.name, check.rel_err);
        }
    }
}
