//! Request translation and FR-FCFS command scheduling.
//!
//! Requests arrive with a physical byte address, are decoded onto
//! (bank, far row, column), and are redirected to a near-segment slot when
//! the row is cached. The scheduler prefers column commands to already-open
//! rows, then the oldest request, issuing at most one command per channel
//! per cycle; rows stay open until a conflicting request needs the bank.

pub mod cache;

use serde::{Deserialize, Serialize};

use crate::bitline::Segment;
use crate::device::{BankState, BankStatus, Command, DeviceConfig, RowAddr};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccessKind {
    Read,
    Write,
}

/// One memory request as seen by the controller.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Request {
    pub id: u64,
    pub core_id: u32,
    pub arrival: u64,
    pub kind: AccessKind,
    pub bank: u32,
    /// OS-visible row index within the bank (a far-segment row).
    pub far_row: u32,
    pub col: u32,
}

/// How byte addresses spread across banks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AddressMapping {
    /// Consecutive rows land in different banks.
    RowInterleaved,
    /// A bank holds a contiguous row range.
    BankLinear,
}

impl Default for AddressMapping {
    fn default() -> Self {
        AddressMapping::RowInterleaved
    }
}

/// Bytes per column access.
pub const COLUMN_BYTES: u64 = 64;

/// Decodes a byte address to (bank, far row, column). `None` when the
/// address falls outside the configured capacity; such requests are dropped
/// and surfaced in the statistics.
pub fn decode_address(
    addr: u64,
    device: &DeviceConfig,
    mapping: AddressMapping,
) -> Option<(u32, u32, u32)> {
    let line = addr / COLUMN_BYTES;
    let col = (line % u64::from(device.columns_per_row)) as u32;
    let global_row = line / u64::from(device.columns_per_row);
    let banks = u64::from(device.total_banks());
    let rows_per_bank = u64::from(device.far_rows_per_bank());
    if global_row >= banks * rows_per_bank {
        return None;
    }
    let (bank, row) = match mapping {
        AddressMapping::RowInterleaved => (global_row % banks, global_row / banks),
        AddressMapping::BankLinear => (global_row / rows_per_bank, global_row % rows_per_bank),
    };
    Some((bank as u32, row as u32, col))
}

/// Composes the byte address that decodes to the given (global row, column)
/// under the same layout. Used by the synthetic workload generator.
pub fn compose_address(global_row: u64, col: u32, columns_per_row: u32) -> u64 {
    (global_row * u64::from(columns_per_row) + u64::from(col)) * COLUMN_BYTES
}

/// A schedulable request as seen by the scheduler this cycle: already
/// translated to its target row.
#[derive(Debug, Clone, Copy)]
pub struct PendingView {
    /// Caller-side handle, returned with the chosen command.
    pub handle: usize,
    pub arrival: u64,
    pub bank: u32,
    pub target: RowAddr,
    pub kind: AccessKind,
    pub col: u32,
}

/// Picks at most one command for one channel. `pending` must be ordered
/// oldest first and contain only requests whose bank belongs to the channel
/// being scheduled.
pub fn schedule(
    pending: &[PendingView],
    bank_state: impl Fn(u32) -> BankState,
    now: u64,
) -> Option<(usize, Command)> {
    // Row hits first, oldest hit wins.
    for p in pending {
        let bank = bank_state(p.bank).settled(now);
        if bank.status == BankStatus::Activated
            && bank.open_row == Some(p.target)
            && now >= bank.earliest_read
        {
            let cmd = match p.kind {
                AccessKind::Read => Command::rd(p.bank, p.target, p.col),
                AccessKind::Write => Command::wr(p.bank, p.target, p.col),
            };
            return Some((p.handle, cmd));
        }
    }
    // Otherwise the oldest request whose next step can issue now.
    for p in pending {
        let bank = bank_state(p.bank).settled(now);
        match bank.status {
            BankStatus::Precharged => {
                return Some((p.handle, Command::act(p.bank, p.target)));
            }
            BankStatus::Activated if bank.open_row != Some(p.target) => {
                if now >= bank.earliest_precharge {
                    let open = bank.open_row.expect("activated bank has an open row");
                    return Some((p.handle, Command::pre(p.bank, open)));
                }
            }
            _ => {}
        }
    }
    None
}
