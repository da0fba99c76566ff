//! Cluster and terminal geometry in a flat-Earth local tangent frame.
//!
//! SAPs sit on a regular square grid at the orbital altitude and translate
//! rigidly along the +x track axis at the ground-track speed. UTs are static
//! points on the ground plane. A second, identical cluster trails the serving
//! one on the track axis; its leading-edge SAP provides the visibility test
//! used to confirm handovers.

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("invalid geometry config: {0}")]
    InvalidConfig(String),
}

/// Static description of the cluster/terminal layout.
#[derive(Debug, Clone)]
pub struct GeometryConfig {
    /// Orbital altitude (km)
    pub altitude_km: f64,
    /// Side length of the square service area (km)
    pub area_km: f64,
    /// Number of SAPs in the serving cluster
    pub num_saps: usize,
    /// Grid spacing between neighbouring SAPs (km)
    pub sap_spacing_km: f64,
    /// Number of ground UTs
    pub num_uts: usize,
    /// Ground-track speed of the cluster (km/s)
    pub ground_speed_kms: f64,
    /// Maximum usable boresight angle (rad); beyond it a link is invisible
    pub max_boresight_rad: f64,
    /// Track-axis distance to the trailing (next) cluster (km)
    pub next_cluster_offset_km: f64,
}

impl GeometryConfig {
    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.altitude_km > 0.0) {
            return Err(GeometryError::InvalidConfig("altitude must be > 0".into()));
        }
        if self.num_saps < 1 {
            return Err(GeometryError::InvalidConfig("need at least one SAP".into()));
        }
        if self.num_uts < 1 {
            return Err(GeometryError::InvalidConfig("need at least one UT".into()));
        }
        if !(self.area_km > 0.0) {
            return Err(GeometryError::InvalidConfig("area side must be > 0".into()));
        }
        if !(self.max_boresight_rad > 0.0 && self.max_boresight_rad < std::f64::consts::FRAC_PI_2)
        {
            return Err(GeometryError::InvalidConfig(
                "max boresight must lie in (0, pi/2)".into(),
            ));
        }
        Ok(())
    }
}

/// Positions plus derived link geometry at one time slot.
#[derive(Debug, Clone)]
pub struct ClusterSnapshot {
    pub time_slot: usize,
    /// SAP positions `[x, y, z]` (km)
    pub sap_positions: Vec<[f64; 3]>,
    /// UT positions `[x, y]` on the ground plane (km)
    pub ut_positions: Vec<[f64; 2]>,
    /// Boresight angles per (SAP, UT) (rad)
    pub boresight: Array2<f64>,
    /// Slant distances per (SAP, UT) (km)
    pub slant: Array2<f64>,
    /// Link visibility per (SAP, UT)
    pub visible: Array2<bool>,
    /// Whether the trailing cluster's leading-edge SAP sees each UT
    pub next_cluster_visible: Vec<bool>,
}

/// Boresight angle of a nadir-pointing SAP towards a ground point, in
/// `[0, pi/2)`.
pub fn boresight_angle(sap: [f64; 3], ut: [f64; 2]) -> f64 {
    let horizontal = ((sap[0] - ut[0]).powi(2) + (sap[1] - ut[1]).powi(2)).sqrt();
    (horizontal / sap[2]).atan()
}

/// Slant range between a SAP and a ground point (km).
pub fn slant_range(sap: [f64; 3], ut: [f64; 2]) -> f64 {
    let dx = sap[0] - ut[0];
    let dy = sap[1] - ut[1];
    (dx * dx + dy * dy + sap[2] * sap[2]).sqrt()
}

/// Grid layout: `ceil(sqrt(M))` columns, rows filled in order, the last row
/// possibly short. Offsets are symmetric about the area centre.
fn grid_positions(config: &GeometryConfig) -> Vec<[f64; 3]> {
    let m = config.num_saps;
    let cols = (m as f64).sqrt().ceil() as usize;
    let rows = m.div_ceil(cols);
    let centre = config.area_km / 2.0;
    (0..m)
        .map(|i| {
            let col = (i % cols) as f64;
            let row = (i / cols) as f64;
            let x = centre + (col - (cols as f64 - 1.0) / 2.0) * config.sap_spacing_km;
            let y = centre + (row - (rows as f64 - 1.0) / 2.0) * config.sap_spacing_km;
            [x, y, config.altitude_km]
        })
        .collect()
}

fn derive_link_matrices(
    config: &GeometryConfig,
    sap_positions: &[[f64; 3]],
    ut_positions: &[[f64; 2]],
) -> (Array2<f64>, Array2<f64>, Array2<bool>) {
    let (m, k) = (sap_positions.len(), ut_positions.len());
    let mut boresight = Array2::zeros((m, k));
    let mut slant = Array2::zeros((m, k));
    let mut visible = Array2::from_elem((m, k), false);
    for (mi, sap) in sap_positions.iter().enumerate() {
        for (ki, ut) in ut_positions.iter().enumerate() {
            let theta = boresight_angle(*sap, *ut);
            boresight[[mi, ki]] = theta;
            slant[[mi, ki]] = slant_range(*sap, *ut);
            visible[[mi, ki]] = theta <= config.max_boresight_rad;
        }
    }
    (boresight, slant, visible)
}

/// Visibility test against the trailing cluster: its leading-edge SAP is the
/// copy of the serving grid shifted back by the cluster offset, at maximum x.
fn next_cluster_visibility(
    config: &GeometryConfig,
    sap_positions: &[[f64; 3]],
    ut_positions: &[[f64; 2]],
) -> Vec<bool> {
    let leading = sap_positions
        .iter()
        .map(|p| [p[0] - config.next_cluster_offset_km, p[1], p[2]])
        .max_by(|a, b| a[0].total_cmp(&b[0]))
        .expect("at least one SAP");
    ut_positions
        .iter()
        .map(|ut| boresight_angle(leading, *ut) <= config.max_boresight_rad)
        .collect()
}

fn snapshot_from_positions(
    config: &GeometryConfig,
    time_slot: usize,
    sap_positions: Vec<[f64; 3]>,
    ut_positions: Vec<[f64; 2]>,
) -> ClusterSnapshot {
    let (boresight, slant, visible) = derive_link_matrices(config, &sap_positions, &ut_positions);
    let next_cluster_visible = next_cluster_visibility(config, &sap_positions, &ut_positions);
    ClusterSnapshot {
        time_slot,
        sap_positions,
        ut_positions,
        boresight,
        slant,
        visible,
        next_cluster_visible,
    }
}

/// Places the SAP grid over the area centre and draws UTs i.i.d. uniform over
/// the area, then fills every derived matrix.
pub fn build_constellation(
    config: &GeometryConfig,
    rng: &mut ChaCha8Rng,
) -> Result<ClusterSnapshot, GeometryError> {
    config.validate()?;
    let sap_positions = grid_positions(config);
    let ut_positions = (0..config.num_uts)
        .map(|_| {
            let x = rng.gen_range(0.0..config.area_km);
            let y = rng.gen_range(0.0..config.area_km);
            [x, y]
        })
        .collect();
    Ok(snapshot_from_positions(config, 0, sap_positions, ut_positions))
}

/// Advances a snapshot by `dt_slots` slots: SAPs translate along +x by
/// `ground_speed * slot_duration * dt_slots`, UTs stay put, matrices are
/// recomputed. Composable: advancing by `t1` then `t2` equals `t1 + t2`.
pub fn propagate(
    snapshot: &ClusterSnapshot,
    config: &GeometryConfig,
    dt_slots: usize,
    slot_duration_s: f64,
) -> ClusterSnapshot {
    let shift = config.ground_speed_kms * slot_duration_s * dt_slots as f64;
    let sap_positions = snapshot
        .sap_positions
        .iter()
        .map(|p| [p[0] + shift, p[1], p[2]])
        .collect();
    snapshot_from_positions(
        config,
        snapshot.time_slot + dt_slots,
        sap_positions,
        snapshot.ut_positions.clone(),
    )
}
