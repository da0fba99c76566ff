//! Benchmark fixtures: representative slot-sized instances for the rate
//! evaluation and the GA solver.

use ndarray::Array2;

use cfleo_core::allocation::AllocationProblem;
use cfleo_core::channel::LargeScaleParams;
use cfleo_core::downlink::FrameConfig;
use cfleo_core::training::{assign_pilots, PilotAssignment, PilotPolicy};

pub use ndarray;

/// Deterministic large-scale parameters shaped like one slot of the default
/// experiment (no RNG so benches stay stable).
pub fn slot_sized_ls(num_saps: usize, num_uts: usize) -> LargeScaleParams {
    let beta = Array2::from_shape_fn((num_saps, num_uts), |(m, k)| {
        1e-13 * (1.0 + ((m * 31 + k * 17) % 23) as f64 / 8.0)
    });
    let lambda = Array2::from_shape_fn((num_saps, num_uts), |(m, k)| {
        1e-14 * (1.0 + ((m * 13 + k * 7) % 19) as f64 / 6.0)
    });
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

pub fn slot_sized_pilots(num_uts: usize) -> PilotAssignment {
    assign_pilots(num_uts, 30, &PilotPolicy::RoundRobin, 3.16)
}

pub fn slot_frame() -> FrameConfig {
    FrameConfig {
        tau_c: 300,
        tau_up: 30,
        tau_ud: 0,
        tau_dd: 270,
    }
}

pub fn slot_problem<'a>(
    ls: &'a LargeScaleParams,
    pa: &'a PilotAssignment,
) -> AllocationProblem<'a> {
    AllocationProblem {
        ls,
        pa,
        noise_var: 4e-13,
        frame: slot_frame(),
        active: vec![true; ls.num_uts()],
        r_min: vec![0.5; ls.num_uts()],
        p_max: vec![31.6; ls.num_saps()],
        alpha: 0.5,
    }
}
