//! Rician channel model with boresight-dependent antenna gain.
//!
//! The slow quantities live in [`LargeScaleParams`]: per (SAP, UT) pair a
//! linear power gain composed of free-space path loss, log-normal shadowing
//! and the tapered antenna pattern, split into a line-of-sight share `beta`
//! and a scattered share `lambda` by the Rician K-factor. Fast realizations
//! combine a uniformly distributed LoS phase with a circularly-symmetric
//! Gaussian NLoS term.

use ndarray::Array2;
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

/// Speed of light in m/s
const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Error)]
pub enum ChannelError {
    #[error("boresight angle {0} rad is outside [0, pi/2)")]
    ThetaOutOfRange(f64),
    #[error("antenna roll-off factor must be > 0, got {0}")]
    InvalidRollOff(f64),
}

/// Air-interface constants.
#[derive(Debug, Clone)]
pub struct ChannelConfig {
    /// Carrier frequency (GHz)
    pub carrier_ghz: f64,
    /// Antenna roll-off factor of the tapered pattern
    pub eta: f64,
    /// Shadowing standard deviation (dB)
    pub shadow_std_db: f64,
    /// Rician K-factor (dB), uniform across pairs
    pub rician_k_db: f64,
    /// Satellite antenna gain (dB)
    pub sat_gain_db: f64,
    /// UT antenna gain (dB)
    pub ut_gain_db: f64,
}

/// Slowly-varying per-pair parameters, known a priori to the estimator.
#[derive(Debug, Clone)]
pub struct LargeScaleParams {
    /// Linear power gain L per (SAP, UT); zero for invisible pairs
    pub gain: Array2<f64>,
    /// Rician K-factor (linear) per pair
    pub kappa: Array2<f64>,
    /// LoS power share: beta = kappa * L / (kappa + 1)
    pub beta: Array2<f64>,
    /// NLoS power share: lambda = L / (kappa + 1)
    pub lambda: Array2<f64>,
    /// Distance loss diagnostic (dB)
    pub loss_dist_db: Array2<f64>,
    /// Shadowing diagnostic (dB)
    pub loss_shad_db: Array2<f64>,
    /// Antenna-pattern loss diagnostic (dB)
    pub loss_angle_db: Array2<f64>,
}

impl LargeScaleParams {
    pub fn num_saps(&self) -> usize {
        self.gain.nrows()
    }

    pub fn num_uts(&self) -> usize {
        self.gain.ncols()
    }
}

/// One realization of the fast channel.
#[derive(Debug, Clone)]
pub struct ChannelRealization {
    /// Channel coefficients h per (SAP, UT)
    pub h: Array2<Complex64>,
    /// LoS phases (rad)
    pub phase: Array2<f64>,
    /// NLoS components
    pub nlos: Array2<Complex64>,
}

/// Antenna-pattern loss (dB) at boresight angle `theta` for roll-off `eta`.
///
/// Negative values are net gain; the pattern is normalized so that the
/// half-power point sits exactly at `theta = arccos(0.5^(1/eta))`.
pub fn angle_loss_db(theta: f64, eta: f64) -> Result<f64, ChannelError> {
    if !(eta > 0.0) {
        return Err(ChannelError::InvalidRollOff(eta));
    }
    if !(0.0..std::f64::consts::FRAC_PI_2).contains(&theta) {
        return Err(ChannelError::ThetaOutOfRange(theta));
    }
    let half_power_angle = 0.5f64.powf(1.0 / eta).acos();
    let peak = 32.0 * std::f64::consts::LN_2 / (2.0 * (2.0 * half_power_angle).powi(2));
    Ok(-10.0 * (theta.cos().powf(eta) * peak).log10())
}

/// Free-space path loss (dB) over a slant range at a carrier frequency.
pub fn distance_loss_db(slant_km: f64, carrier_ghz: f64) -> f64 {
    let d_m = slant_km * 1e3;
    let f_hz = carrier_ghz * 1e9;
    20.0 * (4.0 * std::f64::consts::PI * d_m * f_hz / SPEED_OF_LIGHT).log10()
}

/// Composes the dB loss terms into linear gains and splits them by the
/// Rician K-factor. Shadowing is drawn i.i.d. per pair from the given
/// stream; re-deriving the same stream reproduces the same draw, which is
/// how a run keeps its shadowing fixed across slots. Invisible pairs get a
/// gain of exactly zero.
pub fn large_scale(
    snapshot: &crate::geometry::ClusterSnapshot,
    config: &ChannelConfig,
    rng: &mut ChaCha8Rng,
) -> LargeScaleParams {
    let m = snapshot.sap_positions.len();
    let k = snapshot.ut_positions.len();
    let kappa_lin = 10f64.powf(config.rician_k_db / 10.0);
    let gains_db = config.sat_gain_db + config.ut_gain_db;

    let mut gain = Array2::zeros((m, k));
    let mut kappa = Array2::zeros((m, k));
    let mut beta = Array2::zeros((m, k));
    let mut lambda = Array2::zeros((m, k));
    let mut loss_dist_db = Array2::zeros((m, k));
    let mut loss_shad_db = Array2::zeros((m, k));
    let mut loss_angle_db = Array2::zeros((m, k));

    for mi in 0..m {
        for ki in 0..k {
            // Draw for every pair, visible or not, so the stream stays
            // aligned as visibility changes from slot to slot.
            let shad: f64 = {
                let n: f64 = rng.sample(StandardNormal);
                n * config.shadow_std_db
            };
            loss_shad_db[[mi, ki]] = shad;
            loss_dist_db[[mi, ki]] = distance_loss_db(snapshot.slant[[mi, ki]], config.carrier_ghz);
            if !snapshot.visible[[mi, ki]] {
                continue;
            }
            let angle = angle_loss_db(snapshot.boresight[[mi, ki]], config.eta)
                .expect("visible link has theta < pi/2");
            loss_angle_db[[mi, ki]] = angle;
            let total_db = loss_dist_db[[mi, ki]] + shad + angle - gains_db;
            let l = 10f64.powf(-total_db / 10.0);
            gain[[mi, ki]] = l;
            kappa[[mi, ki]] = kappa_lin;
            beta[[mi, ki]] = kappa_lin * l / (kappa_lin + 1.0);
            lambda[[mi, ki]] = l / (kappa_lin + 1.0);
        }
    }

    LargeScaleParams {
        gain,
        kappa,
        beta,
        lambda,
        loss_dist_db,
        loss_shad_db,
        loss_angle_db,
    }
}

fn complex_gaussian(rng: &mut ChaCha8Rng, variance: f64) -> Complex64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(s * re, s * im)
}

/// Draws one channel realization: uniform LoS phases on [-pi, pi] and
/// complex Gaussian NLoS terms with per-pair variance `lambda`.
pub fn draw_channel(ls: &LargeScaleParams, rng: &mut ChaCha8Rng) -> ChannelRealization {
    let (m, k) = ls.gain.dim();
    let mut h = Array2::from_elem((m, k), Complex64::ZERO);
    let mut phase = Array2::zeros((m, k));
    let mut nlos = Array2::from_elem((m, k), Complex64::ZERO);
    for mi in 0..m {
        for ki in 0..k {
            let phi = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
            let tilde = complex_gaussian(rng, ls.lambda[[mi, ki]]);
            phase[[mi, ki]] = phi;
            nlos[[mi, ki]] = tilde;
            h[[mi, ki]] = ls.beta[[mi, ki]].sqrt() * Complex64::from_polar(1.0, phi) + tilde;
        }
    }
    ChannelRealization { h, phase, nlos }
}
