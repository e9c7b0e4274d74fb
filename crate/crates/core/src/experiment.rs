//! Monte-Carlo sweeps over SNR, per-block records and aggregate statistics.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::{generate_correlated, generate_noiseless, RawDataBlock};
use crate::codec::CodecConfig;
use crate::error::{Error, Result};
use crate::protocol::{derive_params, OutcomeRecord, ProtocolParams, SessionSecrets, SessionState};
use crate::transport::run_loopback;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// True channel SNRs to sweep.
    pub snr_list: Vec<f64>,
    pub blocks_per_snr: u32,
    pub n: usize,
    pub k: u32,
    pub c: u32,
    pub beam_width: usize,
    pub beta_trunc: f64,
    pub v: u32,
    pub w: u32,
    pub lambda: u32,
    pub i_max: u32,
    pub v_a: f64,
    pub master_seed: u64,
    /// Added to the true SNR before deriving parameters.
    pub snr_offset: f64,
    /// Replace the physical channel by `Y = X`.
    pub noiseless: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let codec = CodecConfig::default();
        ExperimentConfig {
            snr_list: vec![0.0277, 0.069, 0.143],
            blocks_per_snr: 100,
            n: codec.n,
            k: codec.k,
            c: codec.c,
            beam_width: codec.beam_width,
            beta_trunc: codec.beta_trunc,
            v: codec.v,
            w: codec.seed_width,
            lambda: 32,
            i_max: 50,
            v_a: 1.0,
            master_seed: 1,
            snr_offset: 0.0,
            noiseless: false,
        }
    }
}

impl ExperimentConfig {
    /// Codec fields; `p_star` and the secrets are per session.
    pub fn codec(&self) -> CodecConfig {
        CodecConfig {
            n: self.n,
            k: self.k,
            c: self.c,
            v: self.v,
            beam_width: self.beam_width,
            beta_trunc: self.beta_trunc,
            seed_width: self.w,
            ..CodecConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.snr_list.is_empty() {
            return Err(Error::invalid("empty SNR list"));
        }
        if self.blocks_per_snr == 0 {
            return Err(Error::invalid("blocks per SNR must be at least 1"));
        }
        for &snr in &self.snr_list {
            if !(snr > 0.0 && snr.is_finite()) {
                return Err(Error::invalid(format!("SNR {snr} must be positive")));
            }
            let shifted = snr + self.snr_offset;
            if shifted.is_nan() || shifted <= 0.0 {
                return Err(Error::invalid(format!(
                    "SNR {snr} with offset {} is not positive",
                    self.snr_offset
                )));
            }
        }
        self.codec().validate()?;
        self.params_for(0)?;
        Ok(())
    }

    /// Parameters both parties derive for grid point `snr_index`.
    pub fn params_for(&self, snr_index: usize) -> Result<ProtocolParams> {
        let snr = self.snr_list[snr_index];
        derive_params(snr + self.snr_offset, self.v_a, &self.codec(), self.lambda, self.i_max)
    }

    /// SHA-256 of the canonical JSON serialization.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex(&Sha256::digest(bytes))
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Seed of block `block_index` at grid point `snr_index`.
pub fn block_seed(master_seed: u64, snr_index: usize, block_index: u32) -> u64 {
    let mut h = Sha256::new();
    h.update(master_seed.to_le_bytes());
    h.update((snr_index as u64).to_le_bytes());
    h.update((block_index as u64).to_le_bytes());
    u64::from_le_bytes(h.finalize()[..8].try_into().unwrap())
}

/// Everything needed to run one block, on either side.
#[derive(Clone, Debug)]
pub struct BlockPlan {
    pub snr_index: usize,
    pub block_index: u32,
    pub channel_snr: f64,
    pub seed: u64,
    pub params: ProtocolParams,
    pub secrets: SessionSecrets,
    pub key_seed: u64,
    pub raw: RawDataBlock,
}

pub fn plan_block(cfg: &ExperimentConfig, snr_index: usize, block_index: u32) -> Result<BlockPlan> {
    let params = cfg.params_for(snr_index)?;
    plan_block_with(cfg, &params, snr_index, block_index)
}

fn plan_block_with(
    cfg: &ExperimentConfig,
    params: &ProtocolParams,
    snr_index: usize,
    block_index: u32,
) -> Result<BlockPlan> {
    let channel_snr = cfg.snr_list[snr_index];
    let seed = block_seed(cfg.master_seed, snr_index, block_index);
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let secrets = SessionSecrets {
        s0: rng.random(),
        rng_seed: rng.random(),
    };
    let key_seed = rng.random();
    let data_seed = rng.random();
    let samples = params.max_samples();
    let raw = if cfg.noiseless {
        generate_noiseless(samples, cfg.v_a, data_seed)?
    } else {
        generate_correlated(samples, cfg.v_a, channel_snr, data_seed)?
    };
    Ok(BlockPlan {
        snr_index,
        block_index,
        channel_snr,
        seed,
        params: params.clone(),
        secrets,
        key_seed,
        raw,
    })
}

/// Runs a planned block in-process.
///
/// An ACK whose key differs from Bob's is reported as an internal error.
pub fn run_plan(plan: &BlockPlan) -> Result<OutcomeRecord> {
    let started = Instant::now();
    let run = run_loopback(&plan.params, plan.secrets, &plan.raw, plan.key_seed)?;
    if run.alice.state() == SessionState::Succeeded && run.alice.key() != Some(run.bob.message()) {
        return Err(Error::Internal(format!(
            "undetected decoding error: CRC accepted a wrong key (snr index {}, block {}, seed {})",
            plan.snr_index, plan.block_index, plan.seed
        )));
    }
    let mut record = run.alice.finalize(plan.channel_snr);
    record.seed = plan.seed;
    record.millis = started.elapsed().as_secs_f64() * 1e3;
    Ok(record)
}

pub fn run_block(cfg: &ExperimentConfig, snr_index: usize, block_index: u32) -> Result<OutcomeRecord> {
    run_plan(&plan_block(cfg, snr_index, block_index)?)
}

/// One block's outcome with its grid position.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockRecord {
    pub snr_index: usize,
    pub block_index: u32,
    #[serde(flatten)]
    pub outcome: OutcomeRecord,
}

/// Statistics for one SNR bucket. Combine buckets with [`SnrStats::merge`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnrStats {
    pub snr: f64,
    pub blocks: u64,
    pub failures: u64,
    pub beta_sum: f64,
    /// Efficiencies of successful blocks, ascending.
    pub betas: Vec<f64>,
    pub iterations_sum: u64,
    pub passes_sum: u64,
    pub millis_sum: f64,
}

impl SnrStats {
    fn new(snr: f64) -> Self {
        SnrStats {
            snr,
            blocks: 0,
            failures: 0,
            beta_sum: 0.0,
            betas: Vec::new(),
            iterations_sum: 0,
            passes_sum: 0,
            millis_sum: 0.0,
        }
    }

    fn add(&mut self, r: &OutcomeRecord) {
        self.blocks += 1;
        match r.beta {
            Some(beta) if r.success => {
                self.beta_sum += beta;
                let at = self.betas.partition_point(|&b| b < beta);
                self.betas.insert(at, beta);
            }
            _ => self.failures += 1,
        }
        self.iterations_sum += r.iterations as u64;
        self.passes_sum += r.passes as u64;
        self.millis_sum += r.millis;
    }

    pub fn merge(&self, other: &SnrStats) -> Result<SnrStats> {
        if self.snr.to_bits() != other.snr.to_bits() {
            return Err(Error::invalid(format!("cannot merge SNR {} into {}", other.snr, self.snr)));
        }
        let mut betas = [self.betas.as_slice(), other.betas.as_slice()].concat();
        betas.sort_by(f64::total_cmp);
        Ok(SnrStats {
            snr: self.snr,
            blocks: self.blocks + other.blocks,
            failures: self.failures + other.failures,
            beta_sum: self.beta_sum + other.beta_sum,
            betas,
            iterations_sum: self.iterations_sum + other.iterations_sum,
            passes_sum: self.passes_sum + other.passes_sum,
            millis_sum: self.millis_sum + other.millis_sum,
        })
    }

    pub fn successes(&self) -> u64 {
        self.blocks - self.failures
    }

    pub fn fer(&self) -> f64 {
        self.failures as f64 / self.blocks as f64
    }

    /// Mean efficiency over successful blocks; NaN when none succeeded.
    pub fn beta_mean(&self) -> f64 {
        self.beta_sum / self.successes() as f64
    }

    pub fn beta_median(&self) -> f64 {
        let b = &self.betas;
        match b.len() {
            0 => f64::NAN,
            n if n % 2 == 1 => b[n / 2],
            n => 0.5 * (b[n / 2 - 1] + b[n / 2]),
        }
    }

    pub fn beta_min(&self) -> f64 {
        self.betas.first().copied().unwrap_or(f64::NAN)
    }

    pub fn beta_max(&self) -> f64 {
        self.betas.last().copied().unwrap_or(f64::NAN)
    }

    pub fn iters_mean(&self) -> f64 {
        self.iterations_sum as f64 / self.blocks as f64
    }

    pub fn l_mean(&self) -> f64 {
        self.passes_sum as f64 / self.blocks as f64
    }
}

/// Per-SNR statistics, ascending in SNR.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub rows: Vec<SnrStats>,
}

pub fn aggregate<'a, I>(records: I) -> Result<AggregateReport>
where
    I: IntoIterator<Item = &'a OutcomeRecord>,
{
    let mut rows: Vec<SnrStats> = Vec::new();
    for r in records {
        let at = rows.partition_point(|s| s.snr < r.snr);
        if rows.get(at).is_none_or(|s| s.snr.to_bits() != r.snr.to_bits()) {
            rows.insert(at, SnrStats::new(r.snr));
        }
        rows[at].add(r);
    }
    if rows.is_empty() {
        return Err(Error::invalid("no records to aggregate"));
    }
    Ok(AggregateReport { rows })
}

impl AggregateReport {
    /// Bucket-wise count-weighted merge.
    pub fn merge(&self, other: &AggregateReport) -> Result<AggregateReport> {
        let mut rows = self.rows.clone();
        for s in &other.rows {
            let at = rows.partition_point(|r| r.snr < s.snr);
            match rows.get(at) {
                Some(r) if r.snr.to_bits() == s.snr.to_bits() => rows[at] = r.merge(s)?,
                _ => rows.insert(at, s.clone()),
            }
        }
        Ok(AggregateReport { rows })
    }

    pub fn row(&self, snr: f64) -> Option<&SnrStats> {
        self.rows.iter().find(|r| r.snr == snr)
    }
}

/// One row of the shipped efficiency comparison table.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReferencePoint {
    pub snr: f64,
    pub proposed: f64,
    pub ldpc: f64,
}

const TABLE1: &str = include_str!("../data/table1.csv");

/// Published efficiencies of the spinal scheme and the punctured-LDPC baseline.
pub fn reference_table() -> Vec<ReferencePoint> {
    TABLE1
        .lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let f: Vec<f64> = line.split(',').map(|x| x.trim().parse().unwrap()).collect();
            ReferencePoint { snr: f[0], proposed: f[1], ldpc: f[2] }
        })
        .collect()
}

pub fn reference_beta(snr: f64) -> Option<f64> {
    reference_table()
        .into_iter()
        .find(|p| (p.snr - snr).abs() < 1e-9)
        .map(|p| p.proposed)
}

#[derive(Clone, Debug, Default)]
pub struct OutputPaths {
    pub csv: Option<PathBuf>,
    pub json: Option<PathBuf>,
}

/// Output files, opened (and truncated) up front so a bad path fails
/// before any simulation.
#[derive(Debug)]
pub struct OpenOutputs {
    csv: Option<(PathBuf, File)>,
    json: Option<(PathBuf, File)>,
}

impl OutputPaths {
    pub fn open(&self) -> Result<OpenOutputs> {
        let open = |p: &Option<PathBuf>| -> Result<Option<(PathBuf, File)>> {
            p.as_ref()
                .map(|p| File::create(p).map(|f| (p.clone(), f)).map_err(|e| Error::io(p, e)))
                .transpose()
        };
        Ok(OpenOutputs {
            csv: open(&self.csv)?,
            json: open(&self.json)?,
        })
    }
}

/// Finished sweep.
#[derive(Clone, Debug)]
pub struct ExperimentResult {
    pub records: Vec<BlockRecord>,
    pub report: AggregateReport,
}

/// Runs every block of the sweep, calling `progress` as blocks finish.
pub fn run_experiment_with<F>(cfg: &ExperimentConfig, progress: F) -> Result<ExperimentResult>
where
    F: Fn(&BlockRecord) + Sync,
{
    cfg.validate()?;
    let params = (0..cfg.snr_list.len())
        .map(|i| cfg.params_for(i))
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, u32)> = (0..cfg.snr_list.len())
        .flat_map(|i| (0..cfg.blocks_per_snr).map(move |b| (i, b)))
        .collect();
    let mut records = jobs
        .par_iter()
        .map(|&(snr_index, block_index)| {
            let plan = plan_block_with(cfg, &params[snr_index], snr_index, block_index)?;
            let record = BlockRecord {
                snr_index,
                block_index,
                outcome: run_plan(&plan)?,
            };
            progress(&record);
            Ok(record)
        })
        .collect::<Result<Vec<_>>>()?;
    records.sort_by_key(|r| (r.snr_index, r.block_index));
    let report = aggregate(records.iter().map(|r| &r.outcome))?;
    Ok(ExperimentResult { records, report })
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    run_experiment_with(cfg, |_| {})
}

/// Runs the sweep and writes the CSV and JSON outputs.
pub fn run_and_emit(cfg: &ExperimentConfig, paths: &OutputPaths) -> Result<ExperimentResult> {
    let outputs = paths.open()?;
    let result = run_experiment(cfg)?;
    emit_outputs(cfg, &result, outputs)?;
    Ok(result)
}

pub const CSV_HEADER: &str = "snr,beta_mean,fer,iters_mean,L_mean,blocks";

pub fn write_csv<W: Write>(report: &AggregateReport, mut out: W) -> std::io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in &report.rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.snr,
            r.beta_mean(),
            r.fer(),
            r.iters_mean(),
            r.l_mean(),
            r.blocks
        )?;
    }
    out.flush()
}

/// One parsed CSV row.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CsvRow {
    pub snr: f64,
    pub beta_mean: f64,
    pub fer: f64,
    pub iters_mean: f64,
    pub l_mean: f64,
    pub blocks: u64,
}

pub fn parse_csv(text: &str) -> Result<Vec<CsvRow>> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(Error::invalid("unexpected CSV header"));
    }
    lines
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            let bad = || Error::invalid(format!("malformed CSV row: {line}"));
            if f.len() != 6 {
                return Err(bad());
            }
            let num = |i: usize| f[i].parse::<f64>().map_err(|_| bad());
            Ok(CsvRow {
                snr: num(0)?,
                beta_mean: num(1)?,
                fer: num(2)?,
                iters_mean: num(3)?,
                l_mean: num(4)?,
                blocks: f[5].parse().map_err(|_| bad())?,
            })
        })
        .collect()
}

#[derive(Serialize)]
struct ConfigLine<'a> {
    config: &'a ExperimentConfig,
    config_sha256: String,
}

#[derive(Serialize)]
struct SummaryLine {
    snr: f64,
    blocks: u64,
    failures: u64,
    fer: f64,
    beta_mean: Option<f64>,
    beta_median: Option<f64>,
    beta_min: Option<f64>,
    beta_max: Option<f64>,
    iters_mean: f64,
    l_mean: f64,
    wall_millis: f64,
    reference_beta: Option<f64>,
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

/// JSON lines: the config echo with its digest, one line per block, then
/// one summary line per SNR.
pub fn write_json<W: Write>(
    cfg: &ExperimentConfig,
    result: &ExperimentResult,
    mut out: W,
) -> Result<()> {
    let line = |v: &dyn erased::Ser, out: &mut W| -> Result<()> {
        let text = v.to_json().map_err(|e| Error::Internal(e.to_string()))?;
        writeln!(out, "{text}")?;
        Ok(())
    };
    line(&ConfigLine { config: cfg, config_sha256: cfg.digest() }, &mut out)?;
    for r in &result.records {
        line(r, &mut out)?;
    }
    for r in &result.report.rows {
        let summary = SummaryLine {
            snr: r.snr,
            blocks: r.blocks,
            failures: r.failures,
            fer: r.fer(),
            beta_mean: finite(r.beta_mean()),
            beta_median: finite(r.beta_median()),
            beta_min: finite(r.beta_min()),
            beta_max: finite(r.beta_max()),
            iters_mean: r.iters_mean(),
            l_mean: r.l_mean(),
            wall_millis: r.millis_sum,
            reference_beta: reference_beta(r.snr),
        };
        line(&summary, &mut out)?;
    }
    out.flush()?;
    Ok(())
}

mod erased {
    pub trait Ser {
        fn to_json(&self) -> serde_json::Result<String>;
    }

    impl<T: serde::Serialize> Ser for T {
        fn to_json(&self) -> serde_json::Result<String> {
            serde_json::to_string(self)
        }
    }
}

pub fn emit_outputs(cfg: &ExperimentConfig, result: &ExperimentResult, outputs: OpenOutputs) -> Result<()> {
    if let Some((path, file)) = outputs.csv {
        write_csv(&result.report, BufWriter::new(file)).map_err(|e| Error::io(&path, e))?;
    }
    if let Some((path, file)) = outputs.json {
        write_json(cfg, result, BufWriter::new(file)).map_err(|e| match e {
            Error::Stream(e) => Error::io(&path, e),
            other => other,
        })?;
    }
    Ok(())
}

/// Reads back the config echo of a JSON output and checks its digest.
pub fn read_config_echo(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let first = text.lines().next().ok_or_else(|| Error::invalid("empty JSON output"))?;
    #[derive(Deserialize)]
    struct Echo {
        config: ExperimentConfig,
        config_sha256: String,
    }
    let echo: Echo = serde_json::from_str(first).map_err(|e| Error::invalid(e.to_string()))?;
    if echo.config.digest() != echo.config_sha256 {
        return Err(Error::invalid("config digest does not match the echoed config"));
    }
    Ok(echo.config)
}
