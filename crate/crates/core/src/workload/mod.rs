//! Memory request streams and the core model that consumes them.
//!
//! Traces are plain text, one request per line as `gap,kind,hex_address`
//! where `gap` counts non-memory instructions before the access, `kind` is
//! `R` or `W`, and the address is a byte address (`0x` prefix optional).
//! Lines starting with `#` and blank lines are skipped; files ending in
//! `.gz` are gzip-compressed. Synthetic streams draw rows from an exact
//! Zipf distribution with a seeded generator.

use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::{compose_address, AccessKind};

/// One trace entry: `gap` non-memory instructions, then the access.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceRecord {
    pub gap: u64,
    pub kind: AccessKind,
    pub address: u64,
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Parses a trace from a line stream.
pub fn parse_trace<R: BufRead>(reader: R) -> Result<Vec<TraceRecord>, TraceError> {
    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let err = |message: String| TraceError::Format { line: idx + 1, message };
        let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(err(format!("expected `gap,kind,hex_address`, got `{trimmed}`")));
        }
        let gap: u64 = fields[0]
            .parse()
            .map_err(|e| err(format!("bad gap `{}`: {e}", fields[0])))?;
        let kind = match fields[1] {
            "R" => AccessKind::Read,
            "W" => AccessKind::Write,
            other => return Err(err(format!("bad kind `{other}`, expected R or W"))),
        };
        let digits = fields[2].strip_prefix("0x").unwrap_or(fields[2]);
        let address = u64::from_str_radix(digits, 16)
            .map_err(|e| err(format!("bad address `{}`: {e}", fields[2])))?;
        records.push(TraceRecord { gap, kind, address });
    }
    Ok(records)
}

/// Loads a trace file, transparently decompressing `.gz` paths.
pub fn load_trace(path: &Path) -> Result<Vec<TraceRecord>, TraceError> {
    let file = File::open(path)?;
    if path.extension().is_some_and(|e| e == "gz") {
        let decoder = flate2::read::GzDecoder::new(file);
        parse_trace(BufReader::new(decoder))
    } else {
        parse_trace(BufReader::new(file))
    }
}

/// Renders records back to the text format (used by tooling and tests).
pub fn trace_to_text(records: &[TraceRecord]) -> String {
    let mut out = String::new();
    for r in records {
        let kind = match r.kind {
            AccessKind::Read => 'R',
            AccessKind::Write => 'W',
        };
        out.push_str(&format!("{},{},0x{:X}\n", r.gap, kind, r.address));
    }
    out
}

/// Parameters of a synthetic request stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub request_count: u64,
    /// Zipf exponent over row popularity ranks; 0 is uniform.
    pub zipf_exponent: f64,
    /// Number of distinct rows addressed.
    pub working_set_rows: u64,
    pub read_fraction: f64,
    /// Mean non-memory instruction gap; gaps are uniform on [0, 2*mean].
    pub mean_gap: u64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            request_count: 50_000,
            zipf_exponent: 1.2,
            working_set_rows: 1024,
            read_fraction: 0.7,
            mean_gap: 8,
            seed: 1,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<(), String> {
        if self.working_set_rows == 0 {
            return Err("working_set_rows must be positive".into());
        }
        if self.zipf_exponent < 0.0 || !self.zipf_exponent.is_finite() {
            return Err("zipf_exponent must be finite and non-negative".into());
        }
        if !(0.0..=1.0).contains(&self.read_fraction) {
            return Err("read_fraction must lie in [0, 1]".into());
        }
        Ok(())
    }
}

/// Cumulative Zipf distribution over ranks `0..n` with exponent `s`:
/// `p(rank r) = (r+1)^-s / H(n, s)`. Sampled exactly by inverting the CDF.
#[derive(Debug, Clone)]
pub struct ZipfTable {
    cdf: Vec<f64>,
}

impl ZipfTable {
    pub fn new(n: u64, exponent: f64) -> Self {
        let mut cdf = Vec::with_capacity(n as usize);
        let mut acc = 0.0;
        for rank in 0..n {
            acc += ((rank + 1) as f64).powf(-exponent);
            cdf.push(acc);
        }
        let total = *cdf.last().expect("n > 0");
        for v in &mut cdf {
            *v /= total;
        }
        ZipfTable { cdf }
    }

    /// Probability mass of the first `k` ranks.
    pub fn head_mass(&self, k: usize) -> f64 {
        if k == 0 {
            0.0
        } else {
            self.cdf[k.min(self.cdf.len()) - 1]
        }
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> u64 {
        let u: f64 = rng.random();
        self.cdf.partition_point(|&c| c < u) as u64
    }
}

/// Generates a deterministic synthetic trace. Rows are drawn Zipf by
/// popularity rank over the working set (rank 0 hottest); columns are
/// uniform. Under row-interleaved mapping consecutive ranks land in
/// different banks, spreading the hot set.
pub fn generate_synthetic(
    spec: &SyntheticSpec,
    columns_per_row: u32,
) -> Result<Vec<TraceRecord>, String> {
    spec.validate()?;
    let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
    let zipf = ZipfTable::new(spec.working_set_rows, spec.zipf_exponent);
    let mut records = Vec::with_capacity(spec.request_count as usize);
    for _ in 0..spec.request_count {
        let row = zipf.sample(&mut rng);
        let col = rng.random_range(0..columns_per_row);
        let kind = if rng.random::<f64>() < spec.read_fraction {
            AccessKind::Read
        } else {
            AccessKind::Write
        };
        let gap = if spec.mean_gap == 0 {
            0
        } else {
            rng.random_range(0..=2 * spec.mean_gap)
        };
        records.push(TraceRecord {
            gap,
            kind,
            address: compose_address(row, col, columns_per_row),
        });
    }
    Ok(records)
}

/// Total instruction mass of a trace: every gap instruction plus the memory
/// instruction itself.
pub fn instruction_mass(records: &[TraceRecord]) -> u64 {
    records.iter().map(|r| r.gap + 1).sum()
}

/// A simple in-order core: retires `non_memory_ipc` instructions per cycle,
/// blocks on outstanding reads, posts writes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CoreModel {
    pub non_memory_ipc: f64,
    /// An outstanding read blocks retirement until its data returns.
    pub blocking_reads: bool,
    /// Writes retire on issue and do not block.
    pub posted_writes: bool,
}

impl Default for CoreModel {
    fn default() -> Self {
        CoreModel { non_memory_ipc: 1.0, blocking_reads: true, posted_writes: true }
    }
}

impl CoreModel {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.non_memory_ipc > 0.0) || !self.non_memory_ipc.is_finite() {
            return Err("non_memory_ipc must be positive".into());
        }
        Ok(())
    }
}
