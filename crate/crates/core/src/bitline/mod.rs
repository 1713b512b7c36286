//! Lumped-RC model of a segmented DRAM bitline.
//!
//! A bitline carrying `cells_total` cells is either unsegmented (one RC node
//! between sense amplifier and cells) or split by an isolation transistor
//! into a near segment attached to the sense amplifier and a far segment
//! behind the transistor. Timing parameters fall out of the transient:
//! `t_rcd` when the near node reaches the sensing threshold, `t_ras` when
//! every connected node is restored, `t_rp` when precharge settles back to
//! the half-level.

mod calibrate;
mod rc;

pub use calibrate::{calibrate, Anchor, CalibrationOptions, CalibrationResult, FreeParam};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Which side of the isolation transistor an access targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Segment {
    Near,
    Far,
}

impl Segment {
    pub fn opposite(self) -> Segment {
        match self {
            Segment::Near => Segment::Far,
            Segment::Far => Segment::Near,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Segment::Near => "near",
            Segment::Far => "far",
        }
    }
}

impl std::fmt::Display for Segment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Segment {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "near" => Ok(Segment::Near),
            "far" => Ok(Segment::Far),
            other => Err(format!("unknown segment `{other}`")),
        }
    }
}

/// Electrical description of the bitline network.
///
/// Resistances and capacitances are in arbitrary consistent units whose
/// product is nanoseconds. The defaults reproduce the bundled reference
/// timings: 52.5 ns row cycle for an unsegmented 512-cell bitline, 23.1 ns
/// for a 32-cell near segment, and 65.8 ns for a 480-cell far segment.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RcNetworkParams {
    /// Full bitline swing; thresholds below are fractions of this.
    pub v_dd: f64,
    /// Capacitance added per attached cell.
    pub c_cell: f64,
    /// Fixed capacitance of the sense-amplifier node and local wiring.
    pub c_senseamp: f64,
    /// Effective drive resistance of the sense amplifier.
    pub r_drive: f64,
    /// On-resistance of the isolation transistor.
    pub r_iso: f64,
    /// Sensing threshold: column access is allowed once the near node
    /// passes this fraction of `v_dd`.
    pub v_sense_threshold: f64,
    /// Restoration threshold: precharge is allowed once every connected
    /// node passes this fraction of `v_dd`.
    pub v_restored_threshold: f64,
    /// Quiescent bitline level as a fraction of `v_dd`.
    pub v_precharged: f64,
    /// Precharge completes when all connected nodes are within this
    /// fraction of `v_dd` of the quiescent level.
    pub precharge_tolerance: f64,
}

impl Default for RcNetworkParams {
    fn default() -> Self {
        RcNetworkParams {
            v_dd: 1.0,
            c_cell: 1.0,
            c_senseamp: 345.14285714285717,
            r_drive: 0.01109307860929572,
            r_iso: 0.00647817135412637,
            v_sense_threshold: 0.75,
            v_restored_threshold: 0.95,
            v_precharged: 0.5,
            precharge_tolerance: 0.02,
        }
    }
}

impl RcNetworkParams {
    pub fn validate(&self) -> Result<(), BitlineError> {
        let positive = [
            ("v_dd", self.v_dd),
            ("c_cell", self.c_cell),
            ("r_drive", self.r_drive),
            ("r_iso", self.r_iso),
        ];
        for (name, value) in positive {
            if !value.is_finite() || value <= 0.0 {
                return Err(BitlineError::InvalidParameter(format!(
                    "{name} must be finite and positive, got {value}"
                )));
            }
        }
        if !self.c_senseamp.is_finite() || self.c_senseamp < 0.0 {
            return Err(BitlineError::InvalidParameter(format!(
                "c_senseamp must be finite and non-negative, got {}",
                self.c_senseamp
            )));
        }
        if !(self.v_sense_threshold > 0.5
            && self.v_sense_threshold < self.v_restored_threshold
            && self.v_restored_threshold <= 1.0)
        {
            return Err(BitlineError::InvalidParameter(format!(
                "thresholds must satisfy 0.5 < sense ({}) < restored ({}) <= 1.0",
                self.v_sense_threshold, self.v_restored_threshold
            )));
        }
        if !(self.v_precharged > 0.0 && self.v_precharged < self.v_sense_threshold) {
            return Err(BitlineError::InvalidParameter(format!(
                "v_precharged ({}) must lie strictly between 0 and the sensing threshold",
                self.v_precharged
            )));
        }
        if !(self.precharge_tolerance > 0.0 && self.precharge_tolerance < 0.1) {
            return Err(BitlineError::InvalidParameter(format!(
                "precharge_tolerance ({}) must be in (0, 0.1)",
                self.precharge_tolerance
            )));
        }
        Ok(())
    }
}

/// Cell counts on each side of the isolation transistor.
///
/// `cells_far == 0` denotes an unsegmented bitline with no transistor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SegmentGeometry {
    pub cells_near: u32,
    pub cells_far: u32,
}

impl SegmentGeometry {
    pub fn new(cells_near: u32, cells_far: u32) -> Result<Self, BitlineError> {
        let geom = SegmentGeometry { cells_near, cells_far };
        geom.validate()?;
        Ok(geom)
    }

    pub fn unsegmented(cells_total: u32) -> Result<Self, BitlineError> {
        SegmentGeometry::new(cells_total, 0)
    }

    pub fn cells_total(&self) -> u32 {
        self.cells_near + self.cells_far
    }

    pub fn is_segmented(&self) -> bool {
        self.cells_far > 0
    }

    pub fn validate(&self) -> Result<(), BitlineError> {
        if self.cells_near < 1 {
            return Err(BitlineError::InvalidGeometry(
                "cells_near must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// One sampled point of a solved transient. `v_far` is absent exactly when
/// the isolation transistor is off and the far segment floats.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WaveformSample {
    pub t_ns: f64,
    pub v_near: f64,
    pub v_far: Option<f64>,
}

/// Sampled bitline voltages over time.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<WaveformSample>,
}

impl Waveform {
    pub fn final_near_voltage(&self) -> f64 {
        self.samples.last().map(|s| s.v_near).unwrap_or(f64::NAN)
    }

    /// First sampled time at which the near node is at or past `threshold`
    /// in the direction of travel.
    pub fn first_near_at_or_above(&self, threshold: f64) -> Option<f64> {
        self.samples
            .iter()
            .find(|s| s.v_near >= threshold)
            .map(|s| s.t_ns)
    }
}

/// Per-segment timing parameters in nanoseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyProfile {
    pub t_rcd: f64,
    pub t_ras: f64,
    pub t_rp: f64,
    pub t_rc: f64,
}

impl LatencyProfile {
    pub fn new(t_rcd: f64, t_ras: f64, t_rp: f64) -> Self {
        LatencyProfile {
            t_rcd,
            t_ras,
            t_rp,
            t_rc: t_ras + t_rp,
        }
    }
}

#[derive(Debug, Error)]
pub enum BitlineError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("{quantity} did not converge within {horizon_ns} ns")]
    Convergence {
        quantity: &'static str,
        horizon_ns: f64,
    },
    #[error(
        "calibration failed: max relative residual {max_residual:.4e} exceeds ceiling \
         {ceiling:.4e} (residuals: {residuals:?})"
    )]
    Calibration {
        max_residual: f64,
        ceiling: f64,
        residuals: Vec<f64>,
    },
}

/// Default search horizon for threshold crossings, in nanoseconds.
pub const DEFAULT_HORIZON_NS: f64 = 1e7;

const WAVEFORM_SAMPLES: usize = 257;

fn check_access(
    params: &RcNetworkParams,
    geom: &SegmentGeometry,
    segment: Segment,
) -> Result<(), BitlineError> {
    params.validate()?;
    geom.validate()?;
    if segment == Segment::Far && !geom.is_segmented() {
        return Err(BitlineError::InvalidGeometry(
            "far access requires cells_far > 0".into(),
        ));
    }
    Ok(())
}

/// Builds the transient of the network for the given access, from `v0`
/// toward `v_target` (absolute volts).
fn network(
    params: &RcNetworkParams,
    geom: &SegmentGeometry,
    segment: Segment,
    v0: f64,
    v_target: f64,
) -> rc::Transient {
    match segment {
        // Near access (or unsegmented bitline): the far segment, if any, is
        // disconnected and floats.
        Segment::Near => rc::solve_single(
            params.c_senseamp + f64::from(geom.cells_near) * params.c_cell,
            params.r_drive,
            v0,
            v_target,
        ),
        Segment::Far => rc::solve_pair(
            params.c_senseamp + f64::from(geom.cells_near) * params.c_cell,
            f64::from(geom.cells_far) * params.c_cell,
            params.r_drive,
            params.r_iso,
            v0,
            v_target,
        ),
    }
}

fn sample(transient: &rc::Transient) -> Waveform {
    let t_end = 9.0 / transient.slow_rate().abs();
    let samples = (0..WAVEFORM_SAMPLES)
        .map(|i| {
            let t = t_end * i as f64 / (WAVEFORM_SAMPLES - 1) as f64;
            WaveformSample {
                t_ns: t,
                v_near: transient.near.eval(t),
                v_far: transient.far.as_ref().map(|n| n.eval(t)),
            }
        })
        .collect();
    Waveform { samples }
}

/// Transient of an activation: all connected nodes start at the precharged
/// level and are driven toward `v_dd`.
pub fn solve_activation(
    params: &RcNetworkParams,
    geom: &SegmentGeometry,
    segment: Segment,
) -> Result<Waveform, BitlineError> {
    check_access(params, geom, segment)?;
    let t = network(
        params,
        geom,
        segment,
        params.v_precharged * params.v_dd,
        params.v_dd,
    );
    Ok(sample(&t))
}

/// Transient of a precharge: all connected nodes start at `v_dd` and are
/// driven back toward the quiescent level.
pub fn solve_precharge(
    params: &RcNetworkParams,
    geom: &SegmentGeometry,
    segment: Segment,
) -> Result<Waveform, BitlineError> {
    check_access(params, geom, segment)?;
    let t = network(
        params,
        geom,
        segment,
        params.v_dd,
        params.v_precharged * params.v_dd,
    );
    Ok(sample(&t))
}

/// Derives the timing parameters of one segment with the default horizon.
pub fn derive_timings(
    params: &RcNetworkParams,
    geom: &SegmentGeometry,
    segment: Segment,
) -> Result<LatencyProfile, BitlineError> {
    derive_timings_with_horizon(params, geom, segment, DEFAULT_HORIZON_NS)
}

/// Derives the timing parameters of one segment, failing with a convergence
/// error if any threshold is not reached within `horizon_ns`.
pub fn derive_timings_with_horizon(
    params: &RcNetworkParams,
    geom: &SegmentGeometry,
    segment: Segment,
    horizon_ns: f64,
) -> Result<LatencyProfile, BitlineError> {
    check_access(params, geom, segment)?;

    let activation = network(
        params,
        geom,
        segment,
        params.v_precharged * params.v_dd,
        params.v_dd,
    );
    let sense_level = params.v_sense_threshold * params.v_dd;
    let restored_level = params.v_restored_threshold * params.v_dd;

    let t_rcd = rc::first_crossing(&activation.near, sense_level, horizon_ns).ok_or(
        BitlineError::Convergence {
            quantity: "t_rcd (sensing threshold)",
            horizon_ns,
        },
    )?;

    let mut t_ras = rc::first_crossing(&activation.near, restored_level, horizon_ns).ok_or(
        BitlineError::Convergence {
            quantity: "t_ras (restored threshold)",
            horizon_ns,
        },
    )?;
    if let Some(far) = &activation.far {
        let far_restore = rc::first_crossing(far, restored_level, horizon_ns).ok_or(
            BitlineError::Convergence {
                quantity: "t_ras (far restored threshold)",
                horizon_ns,
            },
        )?;
        t_ras = t_ras.max(far_restore);
    }

    let precharge = network(
        params,
        geom,
        segment,
        params.v_dd,
        params.v_precharged * params.v_dd,
    );
    let tol = params.precharge_tolerance * params.v_dd;
    let mut t_rp =
        rc::settle_time(&precharge.near, tol, horizon_ns).ok_or(BitlineError::Convergence {
            quantity: "t_rp (precharge settle)",
            horizon_ns,
        })?;
    if let Some(far) = &precharge.far {
        let far_settle =
            rc::settle_time(far, tol, horizon_ns).ok_or(BitlineError::Convergence {
                quantity: "t_rp (far precharge settle)",
                horizon_ns,
            })?;
        t_rp = t_rp.max(far_settle);
    }

    Ok(LatencyProfile::new(t_rcd, t_ras, t_rp))
}

/// One row of a segment-length sweep.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub geometry: SegmentGeometry,
    pub near: LatencyProfile,
    /// Absent for the unsegmented reference row.
    pub far: Option<LatencyProfile>,
}

/// Derives near and far profiles for each candidate near-segment length,
/// plus an unsegmented reference row for the full bitline.
pub fn sweep_segment_lengths(
    params: &RcNetworkParams,
    total_cells: u32,
    lengths: &[u32],
) -> Result<Vec<SweepRow>, BitlineError> {
    params.validate()?;
    let mut rows = Vec::with_capacity(lengths.len() + 1);
    for &len in lengths {
        if len < 1 || len >= total_cells {
            return Err(BitlineError::InvalidGeometry(format!(
                "near length {len} out of range 1..{total_cells}"
            )));
        }
        let geom = SegmentGeometry::new(len, total_cells - len)?;
        rows.push(SweepRow {
            geometry: geom,
            near: derive_timings(params, &geom, Segment::Near)?,
            far: Some(derive_timings(params, &geom, Segment::Far)?),
        });
    }
    let reference = SegmentGeometry::unsegmented(total_cells)?;
    rows.push(SweepRow {
        geometry: reference,
        near: derive_timings(params, &reference, Segment::Near)?,
        far: None,
    });
    Ok(rows)
}

/// Renders sweep rows as CSV, one line per (geometry, segment).
pub fn sweep_to_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("cells_near,cells_far,segment,t_rcd_ns,t_ras_ns,t_rp_ns,t_rc_ns\n");
    let mut push = |geom: &SegmentGeometry, segment: Segment, p: &LatencyProfile| {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            geom.cells_near, geom.cells_far, segment, p.t_rcd, p.t_ras, p.t_rp, p.t_rc
        ));
    };
    for row in rows {
        push(&row.geometry, Segment::Near, &row.near);
        if let Some(far) = &row.far {
            push(&row.geometry, Segment::Far, far);
        }
    }
    out
}

/// Area model: per-bit cost is cell area plus a sense-amplifier share that
/// scales inversely with cells per bitline, plus an isolation-transistor
/// share on segmented bitlines.
#[derive(Debug, Clone, Copy)]
pub struct DieSizeModel {
    pub baseline_cells: u32,
    sense_amp_area: f64,
    isolation_area: f64,
}

impl DieSizeModel {
    /// Fits the two overhead constants from a short unsegmented anchor and
    /// a segmented full-length anchor, both normalized to the baseline.
    pub fn fit(
        baseline_cells: u32,
        short_cells: u32,
        short_factor: f64,
        segmented_factor: f64,
    ) -> Self {
        let inv_short = 1.0 / f64::from(short_cells);
        let inv_base = 1.0 / f64::from(baseline_cells);
        let sense_amp_area = (short_factor - 1.0) / (inv_short - inv_base);
        let isolation_area = (segmented_factor - 1.0) * f64::from(baseline_cells);
        DieSizeModel {
            baseline_cells,
            sense_amp_area,
            isolation_area,
        }
    }

    /// Normalized die size of a bitline geometry relative to the baseline.
    pub fn factor(&self, geom: &SegmentGeometry) -> Result<f64, BitlineError> {
        geom.validate()?;
        let cell_area = 1.0 - self.sense_amp_area / f64::from(self.baseline_cells);
        let total = f64::from(geom.cells_total());
        let mut factor = cell_area + self.sense_amp_area / total;
        if geom.is_segmented() {
            factor += self.isolation_area / total;
        }
        Ok(factor)
    }
}

/// Reference area anchors: a 32-cell unsegmented bitline costs 3.76x the
/// 512-cell baseline, a segmented 512-cell bitline 1.03x.
pub fn reference_die_size_model(baseline_cells: u32) -> DieSizeModel {
    DieSizeModel::fit(baseline_cells, 32, 3.76, 1.03)
}

/// Normalized die size under the reference area model.
pub fn die_size_factor(geom: &SegmentGeometry, baseline_cells: u32) -> Result<f64, BitlineError> {
    reference_die_size_model(baseline_cells).factor(geom)
}
