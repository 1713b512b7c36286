//! Near-segment management policies.
//!
//! The near segment of each subarray acts as a set of row slots caching far
//! rows. Policies differ in when a far row is brought in and which slot is
//! evicted: cache-on-access and wait-based evict the least recently used
//! slot, benefit-based keeps decaying per-row counters and displaces the
//! slot with the least accumulated benefit. A static map pins a fixed row
//! set instead.

use serde::{Deserialize, Serialize};

use crate::device::{Command, RowAddr};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CachePolicy {
    /// Near segment unused; every request is served from the far segment.
    None,
    /// Cache every far row on access, evicting the least recently used slot.
    CacheOnAccess,
    /// Cache a far row only when its request had to wait for the bank.
    WaitBased,
    /// Cache by decaying benefit counters; evict the least-benefit slot.
    BenefitBased,
    /// Fixed row set pinned at startup.
    StaticMap,
}

impl std::str::FromStr for CachePolicy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(CachePolicy::None),
            "cache_on_access" => Ok(CachePolicy::CacheOnAccess),
            "wait_based" => Ok(CachePolicy::WaitBased),
            "benefit_based" => Ok(CachePolicy::BenefitBased),
            "static_map" => Ok(CachePolicy::StaticMap),
            other => Err(format!("unknown policy `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyConfig {
    pub policy: CachePolicy,
    /// Benefit added per access when not weighting by saved cycles.
    pub benefit_increment_hit: u64,
    /// Weight benefit increments by the cycles the near segment saves (or
    /// the cycles a miss waited) instead of a flat increment.
    pub benefit_increment_per_saved_cycle: bool,
    /// A candidate displaces an occupied slot only when its benefit exceeds
    /// the slot's by more than this margin.
    pub caching_threshold: u64,
    /// All benefit counters are halved every this many cycles.
    pub decay_interval: u64,
    /// Shadow candidate table size as a multiple of the slot count.
    pub shadow_capacity_factor: u32,
    /// Global far-row ids pinned to the near segment under `StaticMap`.
    pub static_map_list: Vec<u64>,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            policy: CachePolicy::BenefitBased,
            benefit_increment_hit: 1,
            benefit_increment_per_saved_cycle: false,
            caching_threshold: 0,
            decay_interval: 10_000,
            shadow_capacity_factor: 2,
            static_map_list: Vec::new(),
        }
    }
}

impl PolicyConfig {
    pub fn validate(&self, rows_near: u32) -> Result<(), String> {
        if self.decay_interval == 0 {
            return Err("decay_interval must be positive".into());
        }
        if self.policy == CachePolicy::StaticMap {
            let mut seen = std::collections::HashSet::new();
            for row in &self.static_map_list {
                if !seen.insert(row) {
                    return Err(format!("static_map_list entry {row} repeated"));
                }
            }
            if self.static_map_list.len() > rows_near as usize {
                return Err(format!(
                    "static_map_list has {} entries but the near segment has {} rows",
                    self.static_map_list.len(),
                    rows_near
                ));
            }
        }
        Ok(())
    }

    fn increment(&self, saved_or_waited: u64) -> u64 {
        if self.benefit_increment_per_saved_cycle {
            saved_or_waited
        } else {
            self.benefit_increment_hit
        }
    }
}

/// One near-segment row slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlotState {
    Empty,
    Occupied {
        far_row: u32,
        dirty: bool,
        benefit: u64,
        last_use: u64,
    },
    /// A fill is in flight; the slot is invisible to lookups until the
    /// transfer completes.
    Reserved { incoming_row: u32, benefit: u64 },
}

#[derive(Debug, Clone, Copy)]
struct ShadowEntry {
    far_row: u32,
    benefit: u64,
    last_use: u64,
}

/// Caching decision produced by a far-segment access.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CacheDecision {
    pub far_row: u32,
    pub victim_slot: usize,
    /// Far row that must be written back before the slot is reused.
    pub writeback: Option<u32>,
}

/// Per-(bank, subarray) near-segment cache state.
#[derive(Debug, Clone)]
pub struct NearCacheState {
    slots: Vec<SlotState>,
    shadow: Vec<ShadowEntry>,
    shadow_capacity: usize,
}

impl NearCacheState {
    pub fn new(rows_near: u32, cfg: &PolicyConfig) -> Self {
        NearCacheState {
            slots: vec![SlotState::Empty; rows_near as usize],
            shadow: Vec::new(),
            shadow_capacity: (rows_near as usize) * cfg.shadow_capacity_factor as usize,
        }
    }

    pub fn slots(&self) -> &[SlotState] {
        &self.slots
    }

    /// Slot currently holding `far_row`, if any.
    pub fn lookup(&self, far_row: u32) -> Option<usize> {
        self.slots.iter().position(
            |s| matches!(s, SlotState::Occupied { far_row: r, .. } if *r == far_row),
        )
    }

    pub fn occupied(&self) -> usize {
        self.slots
            .iter()
            .filter(|s| matches!(s, SlotState::Occupied { .. }))
            .count()
    }

    /// Eviction choice among occupied slots: least benefit for the
    /// benefit-based policy, least recently used otherwise; ties go to the
    /// lowest index. `None` when no slot is eligible (all reserved/empty).
    pub fn select_victim(&self, cfg: &PolicyConfig) -> Option<usize> {
        let mut best: Option<(usize, u64)> = None;
        for (idx, slot) in self.slots.iter().enumerate() {
            if let SlotState::Occupied { benefit, last_use, .. } = slot {
                let key = match cfg.policy {
                    CachePolicy::BenefitBased => *benefit,
                    _ => *last_use,
                };
                if best.map_or(true, |(_, k)| key < k) {
                    best = Some((idx, key));
                }
            }
        }
        best.map(|(idx, _)| idx)
    }

    /// Registers an access to `far_row`. `hit` says whether the request was
    /// served from the near segment; `saved_or_waited` carries the cycles
    /// saved by the hit or waited by the miss. May return a caching
    /// decision, in which case the chosen slot is reserved until
    /// [`commit_fill`](Self::commit_fill).
    pub fn on_access(
        &mut self,
        far_row: u32,
        hit: bool,
        is_write: bool,
        saved_or_waited: u64,
        now: u64,
        cfg: &PolicyConfig,
    ) -> Option<CacheDecision> {
        if matches!(cfg.policy, CachePolicy::None | CachePolicy::StaticMap) {
            if hit {
                self.touch(far_row, is_write, 0, now);
            }
            return None;
        }
        if hit {
            self.touch(far_row, is_write, cfg.increment(saved_or_waited), now);
            return None;
        }
        match cfg.policy {
            CachePolicy::CacheOnAccess => self.decide(far_row, 0, None, cfg),
            CachePolicy::WaitBased => {
                if saved_or_waited >= 1 {
                    self.decide(far_row, 0, None, cfg)
                } else {
                    None
                }
            }
            CachePolicy::BenefitBased => {
                let benefit = self.bump_shadow(far_row, cfg.increment(saved_or_waited), now);
                self.decide(far_row, benefit, Some(cfg.caching_threshold), cfg)
            }
            CachePolicy::None | CachePolicy::StaticMap => unreachable!(),
        }
    }

    /// Reserves a slot for a pinned row at startup.
    pub fn reserve_static(&mut self, slot: usize, far_row: u32) {
        debug_assert_eq!(self.slots[slot], SlotState::Empty);
        self.slots[slot] = SlotState::Reserved { incoming_row: far_row, benefit: 0 };
    }

    /// Completes an in-flight fill: the reserved slot becomes occupied.
    pub fn commit_fill(&mut self, slot: usize, now: u64) -> u32 {
        match self.slots[slot] {
            SlotState::Reserved { incoming_row, benefit } => {
                self.slots[slot] = SlotState::Occupied {
                    far_row: incoming_row,
                    dirty: false,
                    benefit,
                    last_use: now,
                };
                incoming_row
            }
            other => panic!("commit_fill on slot {slot} in state {other:?}"),
        }
    }

    /// Halves every benefit counter (slots and shadow candidates).
    pub fn decay(&mut self) {
        for slot in &mut self.slots {
            if let SlotState::Occupied { benefit, .. } = slot {
                *benefit /= 2;
            }
        }
        for entry in &mut self.shadow {
            entry.benefit /= 2;
        }
    }

    fn touch(&mut self, far_row: u32, is_write: bool, increment: u64, now: u64) {
        if let Some(idx) = self.lookup(far_row) {
            if let SlotState::Occupied { dirty, benefit, last_use, .. } = &mut self.slots[idx] {
                *dirty |= is_write;
                *benefit += increment;
                *last_use = now;
            }
        }
    }

    fn bump_shadow(&mut self, far_row: u32, increment: u64, now: u64) -> u64 {
        if let Some(entry) = self.shadow.iter_mut().find(|e| e.far_row == far_row) {
            entry.benefit += increment;
            entry.last_use = now;
            return entry.benefit;
        }
        if self.shadow.len() >= self.shadow_capacity {
            let oldest = self
                .shadow
                .iter()
                .enumerate()
                .min_by_key(|(idx, e)| (e.last_use, *idx))
                .map(|(idx, _)| idx)
                .expect("non-empty shadow table");
            self.shadow.swap_remove(oldest);
        }
        self.shadow.push(ShadowEntry { far_row, benefit: increment, last_use: now });
        increment
    }

    fn decide(
        &mut self,
        far_row: u32,
        carried_benefit: u64,
        threshold: Option<u64>,
        cfg: &PolicyConfig,
    ) -> Option<CacheDecision> {
        // Free capacity is used unconditionally.
        if let Some(slot) = self.slots.iter().position(|s| *s == SlotState::Empty) {
            self.take_slot(slot, far_row, carried_benefit);
            return Some(CacheDecision { far_row, victim_slot: slot, writeback: None });
        }
        let victim = self.select_victim(cfg)?;
        if let Some(margin) = threshold {
            let victim_benefit = match self.slots[victim] {
                SlotState::Occupied { benefit, .. } => benefit,
                _ => unreachable!(),
            };
            if carried_benefit <= victim_benefit + margin {
                return None;
            }
        }
        let writeback = match self.slots[victim] {
            SlotState::Occupied { far_row: old, dirty: true, .. } => Some(old),
            _ => None,
        };
        self.take_slot(victim, far_row, carried_benefit);
        Some(CacheDecision { far_row, victim_slot: victim, writeback })
    }

    fn take_slot(&mut self, slot: usize, far_row: u32, benefit: u64) {
        self.shadow.retain(|e| e.far_row != far_row);
        self.slots[slot] = SlotState::Reserved { incoming_row: far_row, benefit };
    }
}

/// Command sequence realizing a caching decision: an optional writeback of
/// the dirty victim, then the fill. The writeback must run first so the
/// far copy reflects the near content before the slot is overwritten.
pub fn cache_fill(
    bank: u32,
    near_row: u32,
    decision: &CacheDecision,
) -> Vec<Command> {
    let mut commands = Vec::with_capacity(2);
    if let Some(victim_row) = decision.writeback {
        commands.push(Command::transfer(
            bank,
            RowAddr::near(near_row),
            RowAddr::far(victim_row),
        ));
    }
    commands.push(Command::transfer(
        bank,
        RowAddr::far(decision.far_row),
        RowAddr::near(near_row),
    ));
    commands
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::CommandKind;

    fn cfg(policy: CachePolicy) -> PolicyConfig {
        PolicyConfig { policy, ..PolicyConfig::default() }
    }

    fn filled(cache: &mut NearCacheState, slot_rows: &[(u32, u64)], now: u64) {
        // Occupies slots in order with (far_row, benefit).
        for (i, (row, benefit)) in slot_rows.iter().enumerate() {
            cache.slots[i] = SlotState::Occupied {
                far_row: *row,
                dirty: false,
                benefit: *benefit,
                last_use: now,
            };
        }
    }

    #[test]
    fn benefit_candidate_displaces_minimum_slot() {
        let cfg = cfg(CachePolicy::BenefitBased);
        let mut cache = NearCacheState::new(3, &cfg);
        filled(&mut cache, &[(10, 5), (11, 2), (12, 9)], 0);

        // Three misses on row 40 accumulate benefit 3 > min slot benefit 2.
        assert!(cache.on_access(40, false, false, 0, 1, &cfg).is_none());
        assert!(cache.on_access(40, false, false, 0, 2, &cfg).is_none());
        let decision = cache.on_access(40, false, false, 0, 3, &cfg).unwrap();
        assert_eq!(decision.victim_slot, 1);
        assert_eq!(decision.far_row, 40);
        assert_eq!(decision.writeback, None);
        assert!(matches!(
            cache.slots()[1],
            SlotState::Reserved { incoming_row: 40, benefit: 3 }
        ));
    }

    #[test]
    fn cache_on_access_uses_free_slot_immediately() {
        let cfg = cfg(CachePolicy::CacheOnAccess);
        let mut cache = NearCacheState::new(2, &cfg);
        let decision = cache.on_access(7, false, false, 0, 5, &cfg).unwrap();
        assert_eq!(decision.victim_slot, 0);
        assert_eq!(decision.writeback, None);
        cache.commit_fill(0, 6);
        assert_eq!(cache.lookup(7), Some(0));
    }

    #[test]
    fn decay_halves_counters_with_integer_division() {
        let cfg = cfg(CachePolicy::BenefitBased);
        let mut cache = NearCacheState::new(2, &cfg);
        filled(&mut cache, &[(1, 8), (2, 3)], 0);
        cache.decay();
        let benefits: Vec<u64> = cache
            .slots()
            .iter()
            .map(|s| match s {
                SlotState::Occupied { benefit, .. } => *benefit,
                _ => unreachable!(),
            })
            .collect();
        assert_eq!(benefits, vec![4, 1]);
    }

    #[test]
    fn select_victim_minimum_benefit_with_low_index_ties() {
        let cfg_b = cfg(CachePolicy::BenefitBased);
        let mut cache = NearCacheState::new(3, &cfg_b);
        filled(&mut cache, &[(1, 5), (2, 2), (3, 9)], 0);
        assert_eq!(cache.select_victim(&cfg_b), Some(1));

        filled(&mut cache, &[(1, 4), (2, 4), (3, 9)], 0);
        assert_eq!(cache.select_victim(&cfg_b), Some(0));
    }

    #[test]
    fn select_victim_lru_for_access_policies() {
        let cfg_l = cfg(CachePolicy::CacheOnAccess);
        let mut cache = NearCacheState::new(3, &cfg_l);
        cache.slots[0] = SlotState::Occupied { far_row: 1, dirty: false, benefit: 0, last_use: 100 };
        cache.slots[1] = SlotState::Occupied { far_row: 2, dirty: false, benefit: 0, last_use: 40 };
        cache.slots[2] = SlotState::Occupied { far_row: 3, dirty: false, benefit: 0, last_use: 77 };
        assert_eq!(cache.select_victim(&cfg_l), Some(1));
    }

    #[test]
    fn wait_based_caches_only_after_a_wait() {
        let cfg = cfg(CachePolicy::WaitBased);
        let mut cache = NearCacheState::new(1, &cfg);
        assert!(cache.on_access(5, false, false, 0, 1, &cfg).is_none());
        assert!(cache.on_access(5, false, false, 3, 2, &cfg).is_some());
    }

    #[test]
    fn clean_fill_is_one_transfer_and_dirty_fill_writes_back_first() {
        let clean = CacheDecision { far_row: 12, victim_slot: 3, writeback: None };
        let commands = cache_fill(0, 3, &clean);
        assert_eq!(commands.len(), 1);
        assert_eq!(commands[0].kind, CommandKind::Transfer);
        assert_eq!(commands[0].row, RowAddr::far(12));
        assert_eq!(commands[0].transfer_dst, Some(RowAddr::near(3)));

        let dirty = CacheDecision { far_row: 12, victim_slot: 3, writeback: Some(8) };
        let commands = cache_fill(0, 3, &dirty);
        assert_eq!(commands.len(), 2);
        assert_eq!(commands[0].row, RowAddr::near(3));
        assert_eq!(commands[0].transfer_dst, Some(RowAddr::far(8)));
        assert_eq!(commands[1].row, RowAddr::far(12));
        assert_eq!(commands[1].transfer_dst, Some(RowAddr::near(3)));
    }

    #[test]
    fn dirty_write_hit_marks_slot_and_triggers_writeback_on_eviction() {
        let cfg = cfg(CachePolicy::CacheOnAccess);
        let mut cache = NearCacheState::new(1, &cfg);
        cache.on_access(5, false, false, 0, 1, &cfg).unwrap();
        cache.commit_fill(0, 2);
        cache.on_access(5, true, true, 0, 3, &cfg);

        let decision = cache.on_access(9, false, false, 0, 4, &cfg).unwrap();
        assert_eq!(decision.writeback, Some(5));
    }

    #[test]
    fn a_far_row_never_occupies_two_slots() {
        let cfg = cfg(CachePolicy::CacheOnAccess);
        let mut cache = NearCacheState::new(4, &cfg);
        for now in 0..20 {
            for row in [3u32, 9, 3, 11] {
                let hit = cache.lookup(row).is_some();
                if let Some(d) = cache.on_access(row, hit, false, 0, now, &cfg) {
                    cache.commit_fill(d.victim_slot, now);
                }
            }
        }
        let mut seen = std::collections::HashSet::new();
        for slot in cache.slots() {
            if let SlotState::Occupied { far_row, .. } = slot {
                assert!(seen.insert(*far_row), "row {far_row} cached twice");
            }
        }
    }

    #[test]
    fn static_map_validation() {
        let mut cfg = cfg(CachePolicy::StaticMap);
        cfg.static_map_list = vec![1, 2, 3];
        assert!(cfg.validate(32).is_ok());
        assert!(cfg.validate(2).is_err());
        cfg.static_map_list = vec![1, 1];
        assert!(cfg.validate(32).is_err());
    }
}
