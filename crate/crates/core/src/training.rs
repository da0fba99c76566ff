//! Uplink training: pilot assignment with reuse, pilot reception and
//! despreading, and phase-aware MMSE channel estimation.
//!
//! Pilots come from a DFT book of mutually orthogonal length-`tau_up`
//! sequences with `||psi||^2 = tau_up`. When more UTs than pilots exist, the
//! round-robin policy reuses pilots, creating co-pilot sets whose members
//! contaminate each other's estimates. The estimator knows the true LoS
//! phases (phase-aware) and the large-scale statistics.

use ndarray::Array2;
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::channel::{ChannelRealization, LargeScaleParams};

#[derive(Debug, Error)]
pub enum TrainingError {
    #[error("degenerate estimator denominator gamma = 0 for SAP {sap}, UT {ut}")]
    DegenerateGamma { sap: usize, ut: usize },
}

/// How UTs are mapped onto the pilot book.
#[derive(Debug, Clone)]
pub enum PilotPolicy {
    /// `pilot_index[k] = k mod tau_up`
    RoundRobin,
    /// Caller-supplied mapping UT -> pilot id
    Explicit(Vec<usize>),
}

/// Pilot book assignment for the whole UT population.
#[derive(Debug, Clone)]
pub struct PilotAssignment {
    /// Pilot sequence length (samples)
    pub tau_up: usize,
    /// Pilot id per UT, in `[0, tau_up)`
    pub pilot_index: Vec<usize>,
    /// Co-pilot set per UT (always contains the UT itself)
    pub copilot: Vec<Vec<usize>>,
    /// Pilot transmit power per UT (W)
    pub pilot_power: Vec<f64>,
}

impl PilotAssignment {
    /// UTs sharing UT `k`'s pilot, excluding `k` itself.
    pub fn copilots_of(&self, k: usize) -> impl Iterator<Item = usize> + '_ {
        self.copilot[k].iter().copied().filter(move |&j| j != k)
    }
}

/// Received pilot block and its per-UT despread statistics.
#[derive(Debug, Clone)]
pub struct PilotObservation {
    /// Raw received block per SAP, `M x tau_up`
    pub received: Array2<Complex64>,
    /// Despread statistic `psi_k^H y_m` per (SAP, UT)
    pub despread: Array2<Complex64>,
    /// Receiver noise variance on the pilot samples (W)
    pub noise_var: f64,
}

/// Phase-aware MMSE estimates and their conditional moments.
#[derive(Debug, Clone)]
pub struct EstimateSet {
    /// Channel estimates per (SAP, UT)
    pub hhat: Array2<Complex64>,
    /// Normalization gamma per (SAP, UT) (W)
    pub gamma: Array2<f64>,
    /// Conditional mean sqrt(beta) e^{j phi}
    pub mean: Array2<Complex64>,
    /// Conditional variance q tau lambda^2 / gamma
    pub variance: Array2<f64>,
}

impl EstimateSet {
    /// Second moment E|hhat|^2 = beta + q tau lambda^2 / gamma per pair.
    pub fn second_moment(&self, m: usize, k: usize) -> f64 {
        self.mean[[m, k]].norm_sqr() + self.variance[[m, k]]
    }
}

/// Assigns pilots and a uniform pilot power to `num_uts` terminals.
pub fn assign_pilots(
    num_uts: usize,
    tau_up: usize,
    policy: &PilotPolicy,
    pilot_power_w: f64,
) -> PilotAssignment {
    assert!(tau_up >= 1, "pilot length must be at least 1");
    let pilot_index: Vec<usize> = match policy {
        PilotPolicy::RoundRobin => (0..num_uts).map(|k| k % tau_up).collect(),
        PilotPolicy::Explicit(map) => {
            assert_eq!(map.len(), num_uts);
            assert!(map.iter().all(|&p| p < tau_up), "pilot id out of range");
            map.clone()
        }
    };
    let copilot = (0..num_uts)
        .map(|k| {
            (0..num_uts)
                .filter(|&j| pilot_index[j] == pilot_index[k])
                .collect()
        })
        .collect();
    PilotAssignment {
        tau_up,
        pilot_index,
        copilot,
        pilot_power: vec![pilot_power_w; num_uts],
    }
}

/// DFT pilot book: column `p` holds `psi_p[n] = e^{-j 2 pi p n / tau}`, so
/// `psi_a^H psi_b = tau` when `a == b` and 0 otherwise.
pub fn pilot_book(tau_up: usize) -> Array2<Complex64> {
    assert!(tau_up >= 1);
    let tau = tau_up as f64;
    Array2::from_shape_fn((tau_up, tau_up), |(n, p)| {
        Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * (p * n) as f64 / tau)
    })
}

/// Simulates pilot reception at every SAP and despreads against every UT's
/// pilot: `y_m = sum_k sqrt(q_k) h_{m,k} psi_k + n_m`, then
/// `despread[m][k] = psi_k^H y_m`.
pub fn receive_and_despread(
    channels: &ChannelRealization,
    pa: &PilotAssignment,
    noise_var: f64,
    rng: &mut ChaCha8Rng,
) -> PilotObservation {
    let (m, k) = channels.h.dim();
    assert_eq!(k, pa.pilot_index.len());
    let book = pilot_book(pa.tau_up);

    let mut received = Array2::from_elem((m, pa.tau_up), Complex64::ZERO);
    for mi in 0..m {
        for n in 0..pa.tau_up {
            let mut sample = Complex64::ZERO;
            for ki in 0..k {
                sample += pa.pilot_power[ki].sqrt()
                    * channels.h[[mi, ki]]
                    * book[[n, pa.pilot_index[ki]]];
            }
            let s = (noise_var / 2.0).sqrt();
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            received[[mi, n]] = sample + Complex64::new(s * re, s * im);
        }
    }

    let mut despread = Array2::from_elem((m, k), Complex64::ZERO);
    for mi in 0..m {
        for ki in 0..k {
            let mut acc = Complex64::ZERO;
            for n in 0..pa.tau_up {
                acc += book[[n, pa.pilot_index[ki]]].conj() * received[[mi, n]];
            }
            despread[[mi, ki]] = acc;
        }
    }

    PilotObservation {
        received,
        despread,
        noise_var,
    }
}

/// Estimator normalization `gamma[m][k] = sum_{k' in C_k} q_{k'} tau
/// lambda[m][k'] + noise_var`. Shared with the rate computation, which needs
/// it without simulating an observation. `active` masks UTs that left the
/// cluster and stopped transmitting pilots.
pub fn gamma_matrix(
    ls: &LargeScaleParams,
    pa: &PilotAssignment,
    noise_var: f64,
    active: Option<&[bool]>,
) -> Array2<f64> {
    let (m, k) = ls.lambda.dim();
    let tau = pa.tau_up as f64;
    let mut gamma = Array2::zeros((m, k));
    for ki in 0..k {
        for &kj in &pa.copilot[ki] {
            if active.is_some_and(|a| !a[kj]) {
                continue;
            }
            let w = pa.pilot_power[kj] * tau;
            for mi in 0..m {
                gamma[[mi, ki]] += w * ls.lambda[[mi, kj]];
            }
        }
        for mi in 0..m {
            gamma[[mi, ki]] += noise_var;
        }
    }
    gamma
}

/// Phase-aware MMSE estimate from a despread observation:
/// `hhat = sqrt(beta) e^{j phi} + sqrt(q) lambda (y - ybar) / gamma`
/// with `ybar` the despread LoS mean over the co-pilot set.
pub fn mmse_estimate(
    obs: &PilotObservation,
    ls: &LargeScaleParams,
    phases: &Array2<f64>,
    pa: &PilotAssignment,
) -> Result<EstimateSet, TrainingError> {
    let (m, k) = ls.beta.dim();
    let tau = pa.tau_up as f64;
    let gamma = gamma_matrix(ls, pa, obs.noise_var, None);

    let mut hhat = Array2::from_elem((m, k), Complex64::ZERO);
    let mut mean = Array2::from_elem((m, k), Complex64::ZERO);
    let mut variance = Array2::zeros((m, k));

    for mi in 0..m {
        for ki in 0..k {
            let g = gamma[[mi, ki]];
            if g == 0.0 {
                return Err(TrainingError::DegenerateGamma { sap: mi, ut: ki });
            }
            let mut ybar = Complex64::ZERO;
            for &kj in &pa.copilot[ki] {
                ybar += pa.pilot_power[kj].sqrt()
                    * tau
                    * ls.beta[[mi, kj]].sqrt()
                    * Complex64::from_polar(1.0, phases[[mi, kj]]);
            }
            let q = pa.pilot_power[ki];
            let lam = ls.lambda[[mi, ki]];
            let m_term = ls.beta[[mi, ki]].sqrt() * Complex64::from_polar(1.0, phases[[mi, ki]]);
            mean[[mi, ki]] = m_term;
            hhat[[mi, ki]] = m_term + q.sqrt() * lam * (obs.despread[[mi, ki]] - ybar) / g;
            variance[[mi, ki]] = q * tau * lam * lam / g;
        }
    }

    Ok(EstimateSet {
        hhat,
        gamma,
        mean,
        variance,
    })
}
