//! Replays an exported command log against the raw timing rules.
//!
//! The auditor shares nothing with [`BankState`](super::BankState): it keeps
//! its own per-bank record of the last activation and precharge and checks
//! every command against the timing table directly. Zero reported
//! violations is the safety criterion for a simulated run.

use std::collections::HashMap;

use super::{CommandKind, CommandRecord, DeviceMode, TimingTable};
use crate::bitline::Segment;

#[derive(Debug, Clone)]
pub struct Violation {
    /// Index of the offending record in the log.
    pub index: usize,
    pub cycle: u64,
    pub bank: u32,
    pub message: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "record {} (cycle {}, bank {}): {}",
            self.index, self.cycle, self.bank, self.message
        )
    }
}

#[derive(Debug, Clone, Copy)]
struct OpenRow {
    segment: Segment,
    row: u32,
    act_cycle: u64,
}

#[derive(Debug, Clone, Copy, Default)]
struct BankTrace {
    open: Option<OpenRow>,
    /// Bank is unavailable (precharging or transferring) until this cycle.
    blocked_until: u64,
}

/// Checks an ordered command log. `channels` is needed for the
/// one-command-per-channel-per-cycle rule; inter-segment transfers occupy
/// zero channel cycles and are exempt from it.
pub fn audit(
    records: &[CommandRecord],
    timing: &TimingTable,
    mode: DeviceMode,
    channels: u32,
) -> Vec<Violation> {
    let mut violations = Vec::new();
    let mut banks: HashMap<u32, BankTrace> = HashMap::new();
    let mut channel_slot: HashMap<(u64, u32), usize> = HashMap::new();
    let mut last_cycle = 0u64;

    for (index, r) in records.iter().enumerate() {
        let mut report = |message: String, violations: &mut Vec<Violation>| {
            violations.push(Violation { index, cycle: r.cycle, bank: r.bank, message });
        };

        if r.cycle < last_cycle {
            report(
                format!("log not ordered: cycle {} after {}", r.cycle, last_cycle),
                &mut violations,
            );
        }
        last_cycle = last_cycle.max(r.cycle);

        if r.kind != CommandKind::Transfer {
            let channel = r.bank % channels.max(1);
            if let Some(prev) = channel_slot.insert((r.cycle, channel), index) {
                report(
                    format!(
                        "channel {channel} already issued record {prev} at cycle {}",
                        r.cycle
                    ),
                    &mut violations,
                );
            }
        }

        let bank = banks.entry(r.bank).or_default();
        match r.kind {
            CommandKind::Act => {
                if let Some(open) = bank.open {
                    report(
                        format!("ACT while row {} ({}) is open", open.row, open.segment),
                        &mut violations,
                    );
                }
                if r.cycle < bank.blocked_until {
                    report(
                        format!("ACT before bank ready at {}", bank.blocked_until),
                        &mut violations,
                    );
                }
                bank.open = Some(OpenRow { segment: r.segment, row: r.row, act_cycle: r.cycle });
            }
            CommandKind::Rd | CommandKind::Wr => match bank.open {
                None => report("column access with no open row".into(), &mut violations),
                Some(open) => {
                    if open.segment != r.segment || open.row != r.row {
                        report(
                            format!(
                                "column access to {} row {} but open row is {} {}",
                                r.segment, r.row, open.segment, open.row
                            ),
                            &mut violations,
                        );
                    }
                    let ready = open.act_cycle + timing.act(mode, open.segment).t_rcd;
                    if r.cycle < ready {
                        report(
                            format!("column access at {} before t_rcd gate {}", r.cycle, ready),
                            &mut violations,
                        );
                    }
                }
            },
            CommandKind::Pre => match bank.open.take() {
                None => report("PRE with no open row".into(), &mut violations),
                Some(open) => {
                    let profile = timing.act(mode, open.segment);
                    let ready = open.act_cycle + profile.t_ras;
                    if r.cycle < ready {
                        report(
                            format!("PRE at {} before t_ras gate {}", r.cycle, ready),
                            &mut violations,
                        );
                    }
                    bank.blocked_until = r.cycle + profile.t_rp;
                }
            },
            CommandKind::Transfer => {
                if bank.open.is_some() {
                    report("TRANSFER while a row is open".into(), &mut violations);
                }
                if r.cycle < bank.blocked_until {
                    report(
                        format!("TRANSFER before bank ready at {}", bank.blocked_until),
                        &mut violations,
                    );
                }
                bank.blocked_until = r.cycle + timing.transfer_cycles();
            }
        }
    }
    violations
}
