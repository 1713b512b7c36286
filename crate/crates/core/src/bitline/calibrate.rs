//! Fits free RC parameters to row-cycle-time anchors.
//!
//! The fit minimizes the sum of squared relative `t_rc` errors with a
//! Nelder-Mead simplex over the logarithms of the free parameters. Free
//! parameters that provably do not affect any anchor (for example `r_iso`
//! when every anchor is a near-segment or unsegmented access) are frozen at
//! their initial values instead of being left to drift.

use serde::{Deserialize, Serialize};

use super::{derive_timings, BitlineError, RcNetworkParams, Segment, SegmentGeometry};

/// One calibration target: the row cycle time of a given access.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Anchor {
    pub geometry: SegmentGeometry,
    pub segment: Segment,
    pub target_t_rc_ns: f64,
}

/// Parameters the optimizer may adjust.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FreeParam {
    CCell,
    CSenseamp,
    RDrive,
    RIso,
}

impl FreeParam {
    fn get(self, p: &RcNetworkParams) -> f64 {
        match self {
            FreeParam::CCell => p.c_cell,
            FreeParam::CSenseamp => p.c_senseamp,
            FreeParam::RDrive => p.r_drive,
            FreeParam::RIso => p.r_iso,
        }
    }

    fn set(self, p: &mut RcNetworkParams, value: f64) {
        match self {
            FreeParam::CCell => p.c_cell = value,
            FreeParam::CSenseamp => p.c_senseamp = value,
            FreeParam::RDrive => p.r_drive = value,
            FreeParam::RIso => p.r_iso = value,
        }
    }
}

impl std::str::FromStr for FreeParam {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "c_cell" => Ok(FreeParam::CCell),
            "c_senseamp" => Ok(FreeParam::CSenseamp),
            "r_drive" => Ok(FreeParam::RDrive),
            "r_iso" => Ok(FreeParam::RIso),
            other => Err(format!("unknown free parameter `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CalibrationOptions {
    /// Fit fails if any anchor's relative residual exceeds this.
    pub max_rel_error: f64,
    pub max_evaluations: usize,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        CalibrationOptions {
            max_rel_error: 0.05,
            max_evaluations: 4000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CalibrationResult {
    pub params: RcNetworkParams,
    /// Signed relative residual per anchor, `(model - target) / target`.
    pub residuals: Vec<f64>,
    pub cost: f64,
    /// Free parameters that actually influenced the anchors and were fit.
    pub adjusted: Vec<FreeParam>,
    pub evaluations: usize,
}

fn residuals_for(
    params: &RcNetworkParams,
    anchors: &[Anchor],
) -> Result<Vec<f64>, BitlineError> {
    anchors
        .iter()
        .map(|a| {
            let profile = derive_timings(params, &a.geometry, a.segment)?;
            Ok((profile.t_rc - a.target_t_rc_ns) / a.target_t_rc_ns)
        })
        .collect()
}

fn cost_of(residuals: &[f64]) -> f64 {
    residuals.iter().map(|r| r * r).sum()
}

/// Calibrates `free` parameters of `base` against the anchors.
pub fn calibrate(
    base: &RcNetworkParams,
    anchors: &[Anchor],
    free: &[FreeParam],
    options: &CalibrationOptions,
) -> Result<CalibrationResult, BitlineError> {
    base.validate()?;
    if anchors.len() < 2 {
        return Err(BitlineError::InvalidParameter(
            "calibration needs at least 2 anchors".into(),
        ));
    }
    if free.is_empty() {
        return Err(BitlineError::InvalidParameter(
            "calibration needs at least one free parameter".into(),
        ));
    }
    let mut unique = Vec::new();
    for f in free {
        if !unique.contains(f) {
            unique.push(*f);
        }
    }

    // Drop parameters with no measurable effect on any anchor; the fit
    // keeps them at their initial values.
    let base_res = residuals_for(base, anchors)?;
    let mut active = Vec::new();
    for &param in &unique {
        let mut affects = false;
        for factor in [1.05, 1.0 / 1.05] {
            let mut probe = base.clone();
            param.set(&mut probe, param.get(base) * factor);
            let probed = residuals_for(&probe, anchors)?;
            if probed
                .iter()
                .zip(&base_res)
                .any(|(a, b)| (a - b).abs() > 1e-10)
            {
                affects = true;
                break;
            }
        }
        if affects {
            active.push(param);
        }
    }

    let mut evaluations = 0usize;
    let mut best = base.clone();
    if !active.is_empty() {
        let x0: Vec<f64> = active.iter().map(|p| p.get(base).ln()).collect();
        let eval = |x: &[f64], evals: &mut usize| -> f64 {
            *evals += 1;
            let mut candidate = base.clone();
            for (param, &lx) in active.iter().zip(x) {
                param.set(&mut candidate, lx.exp());
            }
            match residuals_for(&candidate, anchors) {
                Ok(res) => cost_of(&res),
                Err(_) => f64::INFINITY,
            }
        };
        let solution = nelder_mead(&x0, options.max_evaluations, &mut evaluations, eval);
        for (param, &lx) in active.iter().zip(&solution) {
            param.set(&mut best, lx.exp());
        }
    }

    let residuals = residuals_for(&best, anchors)?;
    let cost = cost_of(&residuals);
    let max_residual = residuals.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    if max_residual > options.max_rel_error {
        return Err(BitlineError::Calibration {
            max_residual,
            ceiling: options.max_rel_error,
            residuals,
        });
    }
    Ok(CalibrationResult {
        params: best,
        residuals,
        cost,
        adjusted: active,
        evaluations,
    })
}

/// Plain Nelder-Mead over `x0`'s dimension with standard coefficients.
fn nelder_mead(
    x0: &[f64],
    max_evaluations: usize,
    evaluations: &mut usize,
    mut f: impl FnMut(&[f64], &mut usize) -> f64,
) -> Vec<f64> {
    const ALPHA: f64 = 1.0;
    const GAMMA: f64 = 2.0;
    const RHO: f64 = 0.5;
    const SIGMA: f64 = 0.5;
    const STEP: f64 = 0.25;

    let n = x0.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let c0 = f(x0, evaluations);
    simplex.push((x0.to_vec(), c0));
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += STEP;
        let c = f(&x, evaluations);
        simplex.push((x, c));
    }

    while *evaluations < max_evaluations {
        simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
        let best_cost = simplex[0].1;
        let worst_cost = simplex[n].1;
        let spread: f64 = (0..n)
            .map(|i| {
                let lo = simplex.iter().map(|(x, _)| x[i]).fold(f64::INFINITY, f64::min);
                let hi = simplex
                    .iter()
                    .map(|(x, _)| x[i])
                    .fold(f64::NEG_INFINITY, f64::max);
                hi - lo
            })
            .fold(0.0, f64::max);
        if (worst_cost - best_cost).abs() <= 1e-16 * (1.0 + best_cost.abs()) && spread < 1e-10 {
            break;
        }

        let centroid: Vec<f64> = (0..n)
            .map(|i| simplex[..n].iter().map(|(x, _)| x[i]).sum::<f64>() / n as f64)
            .collect();
        let reflect: Vec<f64> = (0..n)
            .map(|i| centroid[i] + ALPHA * (centroid[i] - simplex[n].0[i]))
            .collect();
        let reflect_cost = f(&reflect, evaluations);

        if reflect_cost < simplex[0].1 {
            let expand: Vec<f64> = (0..n)
                .map(|i| centroid[i] + GAMMA * (reflect[i] - centroid[i]))
                .collect();
            let expand_cost = f(&expand, evaluations);
            simplex[n] = if expand_cost < reflect_cost {
                (expand, expand_cost)
            } else {
                (reflect, reflect_cost)
            };
        } else if reflect_cost < simplex[n - 1].1 {
            simplex[n] = (reflect, reflect_cost);
        } else {
            let contract: Vec<f64> = (0..n)
                .map(|i| centroid[i] + RHO * (simplex[n].0[i] - centroid[i]))
                .collect();
            let contract_cost = f(&contract, evaluations);
            if contract_cost < simplex[n].1 {
                simplex[n] = (contract, contract_cost);
            } else {
                let best = simplex[0].0.clone();
                for entry in simplex.iter_mut().skip(1) {
                    let shrunk: Vec<f64> = (0..n)
                        .map(|i| best[i] + SIGMA * (entry.0[i] - best[i]))
                        .collect();
                    entry.1 = f(&shrunk, evaluations);
                    entry.0 = shrunk;
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
    simplex.remove(0).0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference_anchors() -> Vec<Anchor> {
        vec![
            Anchor {
                geometry: SegmentGeometry::unsegmented(512).unwrap(),
                segment: Segment::Near,
                target_t_rc_ns: 52.5,
            },
            Anchor {
                geometry: SegmentGeometry::new(32, 480).unwrap(),
                segment: Segment::Near,
                target_t_rc_ns: 23.1,
            },
        ]
    }

    fn perturbed_base() -> RcNetworkParams {
        let mut p = RcNetworkParams::default();
        p.c_cell = 2.3;
        p.r_drive = 0.004;
        p
    }

    #[test]
    fn fit_reproduces_both_anchors() {
        let result = calibrate(
            &perturbed_base(),
            &reference_anchors(),
            &[FreeParam::CCell, FreeParam::RDrive, FreeParam::RIso],
            &CalibrationOptions::default(),
        )
        .unwrap();
        for r in &result.residuals {
            assert!(r.abs() < 0.05, "residual {r}");
        }
        // r_iso has no effect on near/unsegmented anchors and must stay put.
        assert!(!result.adjusted.contains(&FreeParam::RIso));
        assert_eq!(result.params.r_iso, perturbed_base().r_iso);
    }

    #[test]
    fn fit_predicts_held_out_far_timing() {
        let result = calibrate(
            &perturbed_base(),
            &reference_anchors(),
            &[FreeParam::CCell, FreeParam::RDrive, FreeParam::RIso],
            &CalibrationOptions::default(),
        )
        .unwrap();
        let far = derive_timings(
            &result.params,
            &SegmentGeometry::new(32, 480).unwrap(),
            Segment::Far,
        )
        .unwrap();
        assert!(
            (far.t_rc - 65.8).abs() / 65.8 < 0.10,
            "held-out far t_rc {}",
            far.t_rc
        );
    }

    #[test]
    fn duplicate_anchors_do_not_change_the_fit() {
        let anchors = reference_anchors();
        let doubled: Vec<Anchor> = anchors
            .iter()
            .chain(anchors.iter())
            .copied()
            .collect();
        let a = calibrate(
            &perturbed_base(),
            &anchors,
            &[FreeParam::CCell, FreeParam::RDrive],
            &CalibrationOptions::default(),
        )
        .unwrap();
        let b = calibrate(
            &perturbed_base(),
            &doubled,
            &[FreeParam::CCell, FreeParam::RDrive],
            &CalibrationOptions::default(),
        )
        .unwrap();
        assert_eq!(a.params.c_cell, b.params.c_cell);
        assert_eq!(a.params.r_drive, b.params.r_drive);
    }

    #[test]
    fn unreachable_targets_report_residuals() {
        // Only r_iso free, but the anchors never touch the far segment:
        // nothing can move, so the huge residual must surface as an error.
        let mut base = RcNetworkParams::default();
        base.c_cell = 10.0;
        let err = calibrate(
            &base,
            &reference_anchors(),
            &[FreeParam::RIso],
            &CalibrationOptions::default(),
        )
        .unwrap_err();
        match err {
            BitlineError::Calibration { residuals, .. } => assert_eq!(residuals.len(), 2),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn fewer_than_two_anchors_is_an_error() {
        let err = calibrate(
            &RcNetworkParams::default(),
            &reference_anchors()[..1],
            &[FreeParam::CCell],
            &CalibrationOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, BitlineError::InvalidParameter(_)));
    }
}
