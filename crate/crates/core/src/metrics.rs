//! Energy accounting and run statistics.
//!
//! Energy is normalized: one conventional activate/precharge pair costs
//! 1.0 units, a near-segment pair 0.51, a far-segment pair 1.49. Totals are
//! accumulated as per-kind event counts and multiplied out in a fixed
//! order, so an independent re-count from the exported command log
//! reproduces the reported total bit-for-bit.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bitline::Segment;
use crate::device::{CommandKind, CommandRecord, DeviceMode};

/// Normalized energy per event kind.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnergyModel {
    /// Per near-segment activate/precharge pair.
    pub e_act_near: f64,
    /// Per far-segment activate/precharge pair.
    pub e_act_far: f64,
    /// Per conventional activate/precharge pair.
    pub e_act_baseline: f64,
    /// Per column access (read or write).
    pub e_rdwr: f64,
    /// Per inter-segment transfer.
    pub e_transfer: f64,
}

impl Default for EnergyModel {
    fn default() -> Self {
        EnergyModel {
            e_act_near: 0.51,
            e_act_far: 1.49,
            e_act_baseline: 1.00,
            e_rdwr: 0.1,
            e_transfer: 1.49,
        }
    }
}

impl EnergyModel {
    pub fn validate(&self) -> Result<(), String> {
        let entries = [
            ("e_act_near", self.e_act_near),
            ("e_act_far", self.e_act_far),
            ("e_act_baseline", self.e_act_baseline),
            ("e_rdwr", self.e_rdwr),
            ("e_transfer", self.e_transfer),
        ];
        for (name, v) in entries {
            if v < 0.0 || !v.is_finite() {
                return Err(format!("{name} must be finite and non-negative"));
            }
        }
        if !(self.e_act_near < self.e_act_baseline && self.e_act_baseline < self.e_act_far) {
            return Err("activation energies must order near < baseline < far".into());
        }
        Ok(())
    }
}

/// Event counts feeding the energy model.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnergyCounts {
    pub act_near: u64,
    pub act_far: u64,
    pub act_baseline: u64,
    pub col_access: u64,
    pub transfer: u64,
}

impl EnergyCounts {
    /// Accounts one issued command. Activations are attributed by segment
    /// under tiered mode and to the baseline under conventional mode;
    /// precharges are covered by the activation pair.
    pub fn accrue(&mut self, kind: CommandKind, segment: Segment, mode: DeviceMode) {
        match kind {
            CommandKind::Act => match mode {
                DeviceMode::Conventional => self.act_baseline += 1,
                DeviceMode::TlDram => match segment {
                    Segment::Near => self.act_near += 1,
                    Segment::Far => self.act_far += 1,
                },
            },
            CommandKind::Rd | CommandKind::Wr => self.col_access += 1,
            CommandKind::Transfer => self.transfer += 1,
            CommandKind::Pre => {}
        }
    }

    /// Total normalized energy, summed in a fixed category order.
    pub fn total(&self, model: &EnergyModel) -> f64 {
        let mut total = 0.0;
        total += self.act_near as f64 * model.e_act_near;
        total += self.act_far as f64 * model.e_act_far;
        total += self.act_baseline as f64 * model.e_act_baseline;
        total += self.col_access as f64 * model.e_rdwr;
        total += self.transfer as f64 * model.e_transfer;
        total
    }
}

/// Re-derives the energy total from an exported command log. Used to audit
/// the simulator's own accounting; must match it bit-for-bit.
pub fn energy_from_log(records: &[CommandRecord], mode: DeviceMode, model: &EnergyModel) -> f64 {
    let mut counts = EnergyCounts::default();
    for r in records {
        counts.accrue(r.kind, r.segment, mode);
    }
    counts.total(model)
}

/// Raw per-core material collected during a run.
#[derive(Debug, Clone, Default)]
pub struct CoreCounters {
    pub requests: u64,
    pub reads: u64,
    pub writes: u64,
    pub retired_instructions: u64,
    /// Cycles until this core retired its last instruction.
    pub cycles: u64,
    /// Latency of every completed request, in cycles.
    pub latencies: Vec<u64>,
}

/// Raw whole-run material handed to [`finalize`].
#[derive(Debug, Clone, Default)]
pub struct RawCounters {
    pub per_core: Vec<CoreCounters>,
    pub energy: EnergyCounts,
    pub near_hits: u64,
    pub far_misses: u64,
    pub fills: u64,
    pub writebacks: u64,
    pub dropped_requests: u64,
    pub total_cycles: u64,
}

/// Per-core section of a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoreStats {
    pub core_id: u32,
    pub requests: u64,
    pub reads: u64,
    pub writes: u64,
    pub retired_instructions: u64,
    pub cycles: u64,
    pub mean_latency_cycles: f64,
    pub p95_latency_cycles: u64,
    pub ipc: f64,
}

/// Aggregate section of a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateStats {
    pub requests: u64,
    pub reads: u64,
    pub writes: u64,
    pub dropped_requests: u64,
    pub near_hits: u64,
    pub far_misses: u64,
    pub near_hit_fraction: f64,
    pub fills: u64,
    pub writebacks: u64,
    pub transfers: u64,
    pub activations_near: u64,
    pub activations_far: u64,
    pub activations_baseline: u64,
    pub column_accesses: u64,
    pub total_cycles: u64,
    pub total_energy: f64,
    pub energy_per_request: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weighted_speedup: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub energy_delta_pct: Option<f64>,
}

/// Full statistics of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub per_core: Vec<CoreStats>,
    pub aggregate: AggregateStats,
}

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("run covered zero cycles; nothing to report")]
    EmptyRun,
    #[error("baseline has {baseline} cores but this run has {run}")]
    CoreCountMismatch { baseline: usize, run: usize },
    #[error("inconsistent comparison labels: {0}")]
    InconsistentLabels(String),
    #[error("comparison needs at least one report")]
    EmptyComparison,
}

/// Exact 95th percentile by the nearest-rank method; 0 for no samples.
fn p95(latencies: &[u64]) -> u64 {
    if latencies.is_empty() {
        return 0;
    }
    let mut sorted = latencies.to_vec();
    sorted.sort_unstable();
    let rank = ((0.95 * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

/// Builds the report from raw counters, optionally comparing against a
/// baseline run of the same core count.
pub fn finalize(
    raw: &RawCounters,
    model: &EnergyModel,
    baseline: Option<&StatsReport>,
) -> Result<StatsReport, MetricsError> {
    if raw.total_cycles == 0 {
        return Err(MetricsError::EmptyRun);
    }
    if let Some(base) = baseline {
        if base.per_core.len() != raw.per_core.len() {
            return Err(MetricsError::CoreCountMismatch {
                baseline: base.per_core.len(),
                run: raw.per_core.len(),
            });
        }
    }

    let per_core: Vec<CoreStats> = raw
        .per_core
        .iter()
        .enumerate()
        .map(|(idx, c)| {
            let mean = if c.latencies.is_empty() {
                0.0
            } else {
                c.latencies.iter().sum::<u64>() as f64 / c.latencies.len() as f64
            };
            CoreStats {
                core_id: idx as u32,
                requests: c.requests,
                reads: c.reads,
                writes: c.writes,
                retired_instructions: c.retired_instructions,
                cycles: c.cycles,
                mean_latency_cycles: mean,
                p95_latency_cycles: p95(&c.latencies),
                ipc: if c.cycles == 0 {
                    0.0
                } else {
                    c.retired_instructions as f64 / c.cycles as f64
                },
            }
        })
        .collect();

    let weighted_speedup = baseline.map(|base| {
        per_core
            .iter()
            .zip(&base.per_core)
            .map(|(run, base)| if base.ipc > 0.0 { run.ipc / base.ipc } else { 0.0 })
            .sum()
    });

    let total_energy = raw.energy.total(model);
    let energy_delta_pct = baseline.map(|base| {
        if base.aggregate.total_energy > 0.0 {
            (total_energy - base.aggregate.total_energy) / base.aggregate.total_energy * 100.0
        } else {
            0.0
        }
    });

    let requests: u64 = per_core.iter().map(|c| c.requests).sum();
    let served = raw.near_hits + raw.far_misses;
    Ok(StatsReport {
        aggregate: AggregateStats {
            requests,
            reads: per_core.iter().map(|c| c.reads).sum(),
            writes: per_core.iter().map(|c| c.writes).sum(),
            dropped_requests: raw.dropped_requests,
            near_hits: raw.near_hits,
            far_misses: raw.far_misses,
            near_hit_fraction: if served == 0 {
                0.0
            } else {
                raw.near_hits as f64 / served as f64
            },
            fills: raw.fills,
            writebacks: raw.writebacks,
            transfers: raw.energy.transfer,
            activations_near: raw.energy.act_near,
            activations_far: raw.energy.act_far,
            activations_baseline: raw.energy.act_baseline,
            column_accesses: raw.energy.col_access,
            total_cycles: raw.total_cycles,
            total_energy,
            energy_per_request: if requests == 0 {
                0.0
            } else {
                total_energy / requests as f64
            },
            weighted_speedup,
            energy_delta_pct,
        },
        per_core,
    })
}

/// One labeled entry of a parameter sweep.
#[derive(Debug, Clone, Serialize)]
pub struct LabeledReport {
    pub param: String,
    pub value: f64,
    pub report: StatsReport,
}

/// Sweep comparison row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub value: f64,
    pub speedup: Option<f64>,
    pub total_energy: f64,
    pub near_hit_fraction: f64,
}

/// Comparison of runs differing in one parameter.
#[derive(Debug, Clone, Serialize)]
pub struct ComparisonTable {
    pub param: String,
    pub rows: Vec<ComparisonRow>,
    /// Index of the row with the highest speedup (first wins ties).
    pub argmax: usize,
}

impl ComparisonTable {
    pub fn to_csv(&self) -> String {
        let mut out = format!("{},speedup,total_energy,near_hit_fraction\n", self.param);
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{},{}\n",
                row.value,
                row.speedup.map(|s| s.to_string()).unwrap_or_default(),
                row.total_energy,
                row.near_hit_fraction
            ));
        }
        out
    }
}

/// Assembles a comparison table from reports sharing a trace and differing
/// in the named parameter.
pub fn compare_matrix(entries: &[LabeledReport]) -> Result<ComparisonTable, MetricsError> {
    let first = entries.first().ok_or(MetricsError::EmptyComparison)?;
    let param = first.param.clone();
    let mut seen = BTreeMap::new();
    for e in entries {
        if e.param != param {
            return Err(MetricsError::InconsistentLabels(format!(
                "expected parameter `{param}`, found `{}`",
                e.param
            )));
        }
        if let Some(prev) = seen.insert(e.value.to_bits(), ()) {
            let _ = prev;
            return Err(MetricsError::InconsistentLabels(format!(
                "parameter value {} appears twice",
                e.value
            )));
        }
    }
    let rows: Vec<ComparisonRow> = entries
        .iter()
        .map(|e| ComparisonRow {
            value: e.value,
            speedup: e.report.aggregate.weighted_speedup,
            total_energy: e.report.aggregate.total_energy,
            near_hit_fraction: e.report.aggregate.near_hit_fraction,
        })
        .collect();
    let mut argmax = 0;
    for (idx, row) in rows.iter().enumerate() {
        let best = rows[argmax].speedup.unwrap_or(f64::NEG_INFINITY);
        let this = row.speedup.unwrap_or(f64::NEG_INFINITY);
        if this > best {
            argmax = idx;
        }
    }
    Ok(ComparisonTable { param, rows, argmax })
}

/// Flat CSV rendering of a report (one `section,key,value` triple per line).
pub fn report_to_csv(report: &StatsReport) -> String {
    let mut out = String::from("section,key,value\n");
    let agg = &report.aggregate;
    let mut push = |section: &str, key: &str, value: String| {
        out.push_str(&format!("{section},{key},{value}\n"));
    };
    push("aggregate", "requests", agg.requests.to_string());
    push("aggregate", "reads", agg.reads.to_string());
    push("aggregate", "writes", agg.writes.to_string());
    push("aggregate", "dropped_requests", agg.dropped_requests.to_string());
    push("aggregate", "near_hits", agg.near_hits.to_string());
    push("aggregate", "far_misses", agg.far_misses.to_string());
    push("aggregate", "near_hit_fraction", agg.near_hit_fraction.to_string());
    push("aggregate", "fills", agg.fills.to_string());
    push("aggregate", "writebacks", agg.writebacks.to_string());
    push("aggregate", "transfers", agg.transfers.to_string());
    push("aggregate", "activations_near", agg.activations_near.to_string());
    push("aggregate", "activations_far", agg.activations_far.to_string());
    push("aggregate", "activations_baseline", agg.activations_baseline.to_string());
    push("aggregate", "column_accesses", agg.column_accesses.to_string());
    push("aggregate", "total_cycles", agg.total_cycles.to_string());
    push("aggregate", "total_energy", agg.total_energy.to_string());
    push("aggregate", "energy_per_request", agg.energy_per_request.to_string());
    if let Some(s) = agg.weighted_speedup {
        push("aggregate", "weighted_speedup", s.to_string());
    }
    if let Some(d) = agg.energy_delta_pct {
        push("aggregate", "energy_delta_pct", d.to_string());
    }
    for core in &report.per_core {
        let section = format!("core{}", core.core_id);
        push(&section, "requests", core.requests.to_string());
        push(&section, "reads", core.reads.to_string());
        push(&section, "writes", core.writes.to_string());
        push(&section, "retired_instructions", core.retired_instructions.to_string());
        push(&section, "cycles", core.cycles.to_string());
        push(&section, "mean_latency_cycles", core.mean_latency_cycles.to_string());
        push(&section, "p95_latency_cycles", core.p95_latency_cycles.to_string());
        push(&section, "ipc", core.ipc.to_string());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw_single_core(cycles: u64, retired: u64) -> RawCounters {
        RawCounters {
            per_core: vec![CoreCounters {
                requests: 1,
                reads: 1,
                retired_instructions: retired,
                cycles,
                latencies: vec![10],
                ..CoreCounters::default()
            }],
            total_cycles: cycles,
            ..RawCounters::default()
        }
    }

    #[test]
    fn ten_near_activations_cost_five_point_one() {
        let mut counts = EnergyCounts::default();
        for _ in 0..10 {
            counts.accrue(CommandKind::Act, Segment::Near, DeviceMode::TlDram);
        }
        let model = EnergyModel { e_rdwr: 0.0, ..EnergyModel::default() };
        assert_eq!(counts.total(&model), 5.1);
    }

    #[test]
    fn zero_events_cost_nothing() {
        assert_eq!(EnergyCounts::default().total(&EnergyModel::default()), 0.0);
    }

    #[test]
    fn mixed_activation_log_matches_hand_sum() {
        let mut counts = EnergyCounts::default();
        for _ in 0..3 {
            counts.accrue(CommandKind::Act, Segment::Far, DeviceMode::TlDram);
        }
        for _ in 0..2 {
            counts.accrue(CommandKind::Act, Segment::Near, DeviceMode::TlDram);
        }
        let model = EnergyModel { e_rdwr: 0.0, ..EnergyModel::default() };
        // 3 * 1.49 + 2 * 0.51
        assert!((counts.total(&model) - 5.49).abs() < 1e-12);
    }

    #[test]
    fn self_comparison_speedup_equals_core_count() {
        let model = EnergyModel::default();
        let mut raw = RawCounters {
            per_core: vec![
                CoreCounters { retired_instructions: 100, cycles: 200, ..Default::default() },
                CoreCounters { retired_instructions: 300, cycles: 400, ..Default::default() },
            ],
            total_cycles: 400,
            ..RawCounters::default()
        };
        raw.energy.act_near = 5;
        let base = finalize(&raw, &model, None).unwrap();
        let compared = finalize(&raw, &model, Some(&base)).unwrap();
        assert_eq!(compared.aggregate.weighted_speedup, Some(2.0));
        assert_eq!(compared.aggregate.energy_delta_pct, Some(0.0));
    }

    #[test]
    fn ipc_improvement_is_reported_in_percent() {
        let model = EnergyModel::default();
        let base = finalize(&raw_single_core(1000, 400), &model, None).unwrap();
        let faster = finalize(&raw_single_core(1000, 500), &model, Some(&base)).unwrap();
        let speedup = faster.aggregate.weighted_speedup.unwrap();
        assert!((speedup - 1.25).abs() < 1e-12);
    }

    #[test]
    fn zero_cycle_run_is_an_error_not_a_division() {
        let raw = RawCounters::default();
        assert!(matches!(
            finalize(&raw, &EnergyModel::default(), None),
            Err(MetricsError::EmptyRun)
        ));
    }

    #[test]
    fn core_count_mismatch_is_rejected() {
        let model = EnergyModel::default();
        let base = finalize(&raw_single_core(10, 10), &model, None).unwrap();
        let mut two = raw_single_core(10, 10);
        two.per_core.push(CoreCounters::default());
        assert!(matches!(
            finalize(&two, &model, Some(&base)),
            Err(MetricsError::CoreCountMismatch { .. })
        ));
    }

    #[test]
    fn comparison_table_argmax_and_tie_break() {
        let model = EnergyModel::default();
        let base = finalize(&raw_single_core(1000, 400), &model, None).unwrap();
        let entry = |value: f64, retired: u64| LabeledReport {
            param: "rows_near".into(),
            value,
            report: finalize(&raw_single_core(1000, retired), &model, Some(&base)).unwrap(),
        };

        let single = compare_matrix(&[entry(1.0, 500)]).unwrap();
        assert_eq!(single.rows.len(), 1);
        assert_eq!(single.argmax, 0);

        let table = compare_matrix(&[entry(1.0, 500), entry(2.0, 500)]).unwrap();
        assert_eq!(table.argmax, 0, "ties resolve to the first row");

        let err = compare_matrix(&[
            entry(1.0, 500),
            LabeledReport { param: "policy".into(), ..entry(2.0, 500) },
        ])
        .unwrap_err();
        assert!(matches!(err, MetricsError::InconsistentLabels(_)));
    }

    #[test]
    fn p95_uses_nearest_rank() {
        let latencies: Vec<u64> = (1..=100).collect();
        assert_eq!(p95(&latencies), 95);
        assert_eq!(p95(&[7]), 7);
        assert_eq!(p95(&[]), 0);
    }

    #[test]
    fn hit_and_miss_fractions_sum_to_one() {
        let model = EnergyModel::default();
        let mut raw = raw_single_core(100, 10);
        raw.near_hits = 30;
        raw.far_misses = 70;
        let report = finalize(&raw, &model, None).unwrap();
        let hit = report.aggregate.near_hit_fraction;
        let miss = raw.far_misses as f64 / 100.0;
        assert_eq!(hit + miss, 1.0);
    }

    #[test]
    fn energy_model_ordering_is_validated() {
        let mut model = EnergyModel::default();
        assert!(model.validate().is_ok());
        model.e_act_near = 2.0;
        assert!(model.validate().is_err());
    }
}
