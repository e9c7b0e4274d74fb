//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! The Monte-Carlo criteria (1 to 3) stop as soon as their verdict can no
//! longer change: every block that has not run yet is assumed to take the
//! most favourable and the least favourable value it could possibly take.
//! Set `SPINAL_FULL_ACCEPTANCE=1` to run every block regardless.

use std::collections::BTreeMap;
use std::net::TcpListener;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use serde_json::Value;
use spinal_recon::codec::{bubble_decode, map_symbol, CodecConfig, Message, PassBlock};
use spinal_recon::experiment::{plan_block, run_block, run_experiment, ExperimentConfig};
use spinal_recon::normal::quantile;
use spinal_recon::protocol::{
    capacity, derive_params, leakage_bound, min_passes, OutcomeRecord, ProtocolParams,
    SessionState,
};
use spinal_recon::transport::run_loopback;

const BLOCKS: u32 = 100;
const TABLE1: [(f64, f64); 3] = [(0.0277, 0.9689), (0.069, 0.9516), (0.143, 0.9329)];
const TABLE1_TOL: f64 = 0.02;
const GRID: [f64; 6] = [0.05, 0.1, 0.2, 0.3, 0.4, 0.5];
const GRID_FLOOR: f64 = 0.93;
const FER_CAP: f64 = 0.02;

type Criterion = (u32, &'static str, fn() -> Verdict);

struct Verdict {
    pass: bool,
    detail: String,
}

fn full_run() -> bool {
    std::env::var("SPINAL_FULL_ACCEPTANCE").is_ok_and(|v| v == "1")
}

/// Blocks of one SNR point, run on demand and kept for reuse.
struct Point {
    cfg: ExperimentConfig,
    params: ProtocolParams,
    records: Vec<OutcomeRecord>,
    started: Instant,
}

impl Point {
    fn new(snr: f64, seed: u64) -> Self {
        let cfg = ExperimentConfig {
            snr_list: vec![snr],
            blocks_per_snr: BLOCKS,
            master_seed: seed,
            ..ExperimentConfig::default()
        };
        let params = cfg.params_for(0).unwrap();
        Point { cfg, params, records: Vec::new(), started: Instant::now() }
    }

    fn snr(&self) -> f64 {
        self.cfg.snr_list[0]
    }

    fn run_next(&mut self) -> bool {
        let done = self.records.len() as u32;
        if done == BLOCKS {
            return false;
        }
        let record = run_block(&self.cfg, 0, done).expect("block runs");
        eprintln!(
            "    snr {} block {:>3}: {} L={} beta={}",
            self.snr(),
            done,
            if record.success { "ok  " } else { "FAIL" },
            record.passes,
            record.beta.map_or("-".into(), |b| format!("{b:.4}"))
        );
        self.records.push(record);
        true
    }

    fn remaining(&self) -> u32 {
        BLOCKS - self.records.len() as u32
    }

    /// Largest and smallest efficiency a future successful block can have.
    fn beta_range(&self) -> (f64, f64) {
        let p = &self.params;
        let cap = capacity(self.snr());
        let best = p.code_rate(p.l_min) / cap;
        let worst = p.code_rate(p.l_min + p.i_max - 1) / cap;
        (worst, best)
    }

    fn successes(&self) -> (usize, f64) {
        let betas: Vec<f64> = self.records.iter().filter_map(|r| r.beta).collect();
        (betas.len(), betas.iter().sum())
    }

    fn failures(&self) -> usize {
        self.records.iter().filter(|r| !r.success).count()
    }

    /// Bounds on the final mean efficiency over every possible completion.
    fn final_mean_bounds(&self) -> Option<(f64, f64)> {
        let (s, sum) = self.successes();
        let r = self.remaining() as f64;
        let (worst, best) = self.beta_range();
        let mut candidates = Vec::new();
        if s > 0 {
            candidates.push(sum / s as f64);
        }
        if r > 0.0 {
            candidates.push((sum + r * best) / (s as f64 + r));
            candidates.push((sum + r * worst) / (s as f64 + r));
        }
        let lo = candidates.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = candidates.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (!candidates.is_empty()).then_some((lo, hi))
    }

    fn summary(&self) -> String {
        let (s, sum) = self.successes();
        let mean = if s > 0 { format!("{:.2}%", 100.0 * sum / s as f64) } else { "n/a".into() };
        format!(
            "snr {}: mean beta {mean} over {s} successes, {} failures in {} blocks ({:.0} s)",
            self.snr(),
            self.failures(),
            self.records.len(),
            self.started.elapsed().as_secs_f64()
        )
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Outcome {
    Pass,
    Fail,
}

/// Runs blocks until the final mean efficiency is certainly inside or
/// certainly outside `[lo, hi]`.
fn decide_mean(point: &mut Point, lo: f64, hi: f64) -> Outcome {
    loop {
        if let Some((min, max)) = point.final_mean_bounds() {
            let (s, _) = point.successes();
            if !full_run() || point.remaining() == 0 {
                if s > 0 && min >= lo && max <= hi {
                    return Outcome::Pass;
                }
                if s > 0 && (max < lo || min > hi) {
                    return Outcome::Fail;
                }
            }
        }
        if !point.run_next() {
            // Every block failed: there is no efficiency to compare.
            return Outcome::Fail;
        }
    }
}

/// Runs blocks until the final frame error rate is certainly at most or
/// certainly above `cap`.
fn decide_fer(point: &mut Point, cap: f64) -> Outcome {
    let allowed = (cap * BLOCKS as f64).floor() as usize;
    loop {
        let failures = point.failures();
        if !full_run() || point.remaining() == 0 {
            if failures > allowed {
                return Outcome::Fail;
            }
            if failures + point.remaining() as usize <= allowed {
                return Outcome::Pass;
            }
        }
        point.run_next();
    }
}

fn criterion_1(points: &mut BTreeMap<u64, Point>) -> Verdict {
    let mut lines = Vec::new();
    let mut pass = true;
    for (snr, reference) in TABLE1 {
        let point = points.entry(snr.to_bits()).or_insert_with(|| Point::new(snr, 1));
        let outcome = decide_mean(point, reference - TABLE1_TOL, reference + TABLE1_TOL);
        pass &= outcome == Outcome::Pass;
        lines.push(format!("{} vs {:.2}% -> {outcome:?}", point.summary(), 100.0 * reference));
    }
    Verdict { pass, detail: lines.join("; ") }
}

fn criterion_2() -> Verdict {
    let mut lines = Vec::new();
    let mut pass = true;
    for snr in GRID {
        let mut point = Point::new(snr, 2);
        let outcome = decide_mean(&mut point, GRID_FLOOR, f64::INFINITY);
        pass &= outcome == Outcome::Pass;
        lines.push(format!("{} -> {outcome:?}", point.summary()));
    }
    Verdict { pass, detail: lines.join("; ") }
}

fn criterion_3(points: &mut BTreeMap<u64, Point>) -> Verdict {
    let mut lines = Vec::new();
    for (snr, _) in TABLE1 {
        let point = points.entry(snr.to_bits()).or_insert_with(|| Point::new(snr, 1));
        let outcome = decide_fer(point, FER_CAP);
        lines.push(format!("{} -> {outcome:?}", point.summary()));
        if outcome == Outcome::Fail && !full_run() {
            lines.push("remaining points not needed for the verdict".into());
            return Verdict { pass: false, detail: lines.join("; ") };
        }
    }
    Verdict { pass: lines.iter().all(|l| l.ends_with("Pass")), detail: lines.join("; ") }
}

fn oaat(seed: u32, bytes: &[u8]) -> u32 {
    let mut h = seed;
    for &b in bytes {
        h = h.wrapping_add(b as u32);
        h = h.wrapping_add(h << 10);
        h ^= h >> 6;
    }
    h = h.wrapping_add(h << 3);
    h ^= h >> 11;
    h.wrapping_add(h << 15)
}

fn reference_encode(blocks: &[u32], passes: u32, cfg: &CodecConfig) -> Vec<Vec<f64>> {
    let mut state = cfg.s0;
    let spine: Vec<u32> = blocks
        .iter()
        .map(|&m| {
            let mut bytes = state.to_be_bytes().to_vec();
            bytes.push(m as u8);
            state = oaat(0, &bytes);
            state
        })
        .collect();
    (1..=passes)
        .map(|pass| {
            spine
                .iter()
                .map(|s| {
                    let mut bytes = s.to_be_bytes().to_vec();
                    bytes.extend_from_slice(&pass.to_be_bytes());
                    bytes.extend_from_slice(&0u32.to_be_bytes());
                    map_symbol(oaat(cfg.rng_seed, &bytes) >> (32 - cfg.c), cfg).unwrap()
                })
                .collect()
        })
        .collect()
}

fn criterion_4() -> Verdict {
    let started = Instant::now();
    let cfg = CodecConfig {
        n: 8,
        k: 2,
        beam_width: 1 << 6,
        s0: 0x7357,
        rng_seed: 0xacce97,
        ..Default::default()
    };
    let noise = Normal::new(0.0, 1.0).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(4);
    let mut matches = 0;
    for _ in 0..50 {
        let sent: Vec<u32> = (0..4).map(|_| rng.random_range(0..4)).collect();
        let received: Vec<PassBlock> = reference_encode(&sent, 2, &cfg)
            .into_iter()
            .enumerate()
            .map(|(i, x)| PassBlock {
                pass_index: i as u32 + 1,
                symbols: x.iter().map(|x| x + noise.sample(&mut rng)).collect(),
            })
            .collect();
        let best = (0..256u32)
            .map(|m| {
                let blocks: Vec<u32> = (0..4).rev().map(|j| (m >> (2 * j)) & 3).collect();
                let cost: f64 = reference_encode(&blocks, 2, &cfg)
                    .iter()
                    .zip(&received)
                    .flat_map(|(x, y)| x.iter().zip(&y.symbols))
                    .map(|(x, y)| (x - y).powi(2))
                    .sum();
                (blocks, cost)
            })
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap()
            .0;
        if bubble_decode(&received, &cfg).unwrap().message == Message::from_blocks(&best, 2) {
            matches += 1;
        }
    }
    let secs = started.elapsed().as_secs_f64();
    Verdict {
        pass: matches == 50 && secs < 60.0,
        detail: format!("{matches}/50 exact matches in {secs:.2} s"),
    }
}

fn criterion_5() -> Verdict {
    let cfg = ExperimentConfig {
        snr_list: vec![0.5],
        blocks_per_snr: 1000,
        noiseless: true,
        master_seed: 5,
        ..ExperimentConfig::default()
    };
    let l_min = cfg.params_for(0).unwrap().l_min;
    let (mut failures, mut wrong_l, mut worst_cost) = (0, 0, 0.0f64);
    for block in 0..1000 {
        let plan = plan_block(&cfg, 0, block).unwrap();
        let run = run_loopback(&plan.params, plan.secrets, &plan.raw, plan.key_seed).unwrap();
        if run.alice.state() != SessionState::Succeeded || run.alice.key() != Some(run.bob.message()) {
            failures += 1;
        }
        if run.bob.passes_sent() != l_min {
            wrong_l += 1;
        }
        worst_cost = worst_cost.max(run.alice.last_cost().unwrap_or(f64::INFINITY));
    }
    // Δ = y − c and c' = x − Δ round in floating point, so "zero" means a
    // cost at the level of accumulated rounding error.
    Verdict {
        pass: failures == 0 && wrong_l == 0 && worst_cost < 1e-20,
        detail: format!(
            "1000 blocks: FER {}, {wrong_l} blocks with L != l_min = {l_min}, max cost {worst_cost:e}",
            failures as f64 / 1000.0
        ),
    }
}

fn oracle_rows(path: &str) -> Vec<Vec<f64>> {
    let text = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join(path)).unwrap();
    text.lines()
        .skip(1)
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect()
}

fn criterion_6() -> Verdict {
    let cfg = CodecConfig { c: 6, beta_trunc: 3.0, p_star: 1.0, ..Default::default() };
    let levels: Vec<f64> = (0..64).map(|b| map_symbol(b, &cfg).unwrap()).collect();
    let antisym = (0..64).map(|b| (levels[b] + levels[63 - b]).abs()).fold(0.0, f64::max);

    let probes = oracle_rows("../core/tests/oracles/quantile_probes.csv");
    let quantile_err = probes.iter().map(|r| (quantile(r[0]) - r[1]).abs()).fold(0.0, f64::max);

    let variance = levels.iter().map(|x| x * x).sum::<f64>() / 64.0;
    let var_err = (variance - cfg.p_star).abs() / cfg.p_star;
    Verdict {
        pass: antisym < 1e-10 && probes.len() == 1000 && quantile_err < 1e-8 && var_err < 0.10,
        detail: format!(
            "antisymmetry {antisym:e}, max quantile error {quantile_err:e} over {} probes, \
             symbol variance {variance:.5} ({:.2}% from P*)",
            probes.len(),
            100.0 * var_err
        ),
    }
}

fn criterion_7() -> Verdict {
    let mut problems = Vec::new();
    if capacity(3.0) != 1.0 || capacity(1.0) != 0.5 {
        problems.push("capacity".to_string());
    }
    if min_passes(4, 3.0) != 4 {
        problems.push("l_min".to_string());
    }
    let rows = oracle_rows("../core/tests/oracles/derived_params.csv");
    let mut worst = 0.0f64;
    for row in &rows[1..] {
        let p = derive_params(row[0], 1.0, &CodecConfig::default(), 32, 50).unwrap();
        for (got, want) in [(p.eta, row[1]), (p.s_nr_virtual, row[2]), (p.p_star, row[3]), (p.r, row[6])] {
            worst = worst.max((got - want).abs() / want.abs());
        }
        if p.l_min as f64 != row[4] || p.omega as f64 != row[5] {
            problems.push(format!("integer parameters at snr {}", row[0]));
        }
    }
    if worst > 1e-9 {
        problems.push(format!("fixed point off by {worst:e}"));
    }
    for (n, v, omega, lambda) in [(1024, 32, 516, 32), (1024, 4, 2, 32), (64, 2, 1, 8)] {
        let exact = lambda as f64 + n as f64 * (-((v + omega) as f64)).exp2();
        if leakage_bound(n, v, omega, lambda) != exact {
            problems.push("leakage".to_string());
        }
    }
    Verdict {
        pass: problems.is_empty() && rows.len() == 11,
        detail: format!(
            "{} random SNRs, worst relative parameter error {worst:e}{}",
            rows.len() - 1,
            if problems.is_empty() { String::new() } else { format!("; problems: {problems:?}") }
        ),
    }
}

fn cli() -> Command {
    Command::new(env!("CARGO_BIN_EXE_spinal-recon"))
}

fn free_port() -> u16 {
    TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
}

/// Block records of a JSON-lines output, timing removed.
fn block_lines(path: &Path) -> Vec<Value> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str::<Value>(l).unwrap())
        .filter(|v| v.get("block_index").is_some())
        .map(|mut v| {
            v.as_object_mut().unwrap().remove("millis");
            v
        })
        .collect()
}

fn criterion_8() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let addr = format!("127.0.0.1:{}", free_port());
    let common = ["--snr", "0.3", "--blocks", "20", "--seed", "8", "--quiet"];
    let alice_json = dir.path().join("alice.jsonl");
    let bob_json = dir.path().join("bob.jsonl");
    let mut alice = cli()
        .args(common)
        .args(["--mode", "listen", "--addr", &addr, "--out-json"])
        .arg(&alice_json)
        .stdout(std::process::Stdio::null())
        .spawn()
        .unwrap();
    let bob = cli()
        .args(common)
        .args(["--mode", "connect", "--addr", &addr, "--out-json"])
        .arg(&bob_json)
        .stdout(std::process::Stdio::null())
        .status()
        .unwrap();
    let alice = alice.wait().unwrap();
    if !alice.success() || !bob.success() {
        return Verdict { pass: false, detail: format!("processes exited with {alice} and {bob}") };
    }

    let cfg = ExperimentConfig {
        snr_list: vec![0.3],
        blocks_per_snr: 20,
        master_seed: 8,
        ..ExperimentConfig::default()
    };
    let loopback: Vec<Value> = run_experiment(&cfg)
        .unwrap()
        .records
        .iter()
        .map(|r| {
            let mut v = serde_json::to_value(r).unwrap();
            v.as_object_mut().unwrap().remove("millis");
            v
        })
        .collect();
    let (a, b) = (block_lines(&alice_json), block_lines(&bob_json));
    let same = a == loopback && b == loopback && a.len() == 20;
    let successes = loopback.iter().filter(|v| v["success"] == true).count();
    Verdict {
        pass: same,
        detail: format!(
            "20 blocks at snr 0.3 over TCP: Alice {} and Bob {} records, {} identical to loopback \
             ({successes} successes)",
            a.len(),
            b.len(),
            if same { "all" } else { "NOT" }
        ),
    }
}

fn criterion_9() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("mismatch.csv");
    let status = cli()
        .args(["--snr", "0.1", "--snr-offset", "-0.01", "--blocks", "10", "--seed", "9", "--quiet"])
        .arg("--out-csv")
        .arg(&csv)
        .stdout(std::process::Stdio::null())
        .status()
        .unwrap();
    let text = std::fs::read_to_string(&csv).unwrap_or_default();
    let row: Vec<&str> = text.lines().nth(1).unwrap_or("").split(',').collect();
    let reported = row.len() == 6 && row[1].parse::<f64>().is_ok() && row[2].parse::<f64>().is_ok();
    Verdict {
        pass: status.success() && reported,
        detail: format!(
            "true snr 0.1, parameters at 0.09: exit {status}, beta {}, FER {}",
            row.get(1).unwrap_or(&"?"),
            row.get(2).unwrap_or(&"?")
        ),
    }
}

fn main() -> ExitCode {
    // `cargo test -- --list` and filters come through here too.
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--list") {
        println!("acceptance: test");
        return ExitCode::SUCCESS;
    }
    let only: Vec<u32> = args.iter().filter_map(|a| a.parse().ok()).collect();
    let mut points = BTreeMap::new();
    let criteria: [Criterion; 7] = [
        (4, "oracle equivalence", criterion_4),
        (5, "noiseless correctness", criterion_5),
        (6, "mapper numerics", criterion_6),
        (7, "formula suite", criterion_7),
        (8, "transport transparency", criterion_8),
        (9, "SNR mismatch run", criterion_9),
        (2, "efficiency stability (grid)", criterion_2),
    ];
    let mut results = Vec::new();
    for (id, name, run) in criteria {
        if only.is_empty() || only.contains(&id) {
            results.push((id, name, run()));
        }
    }
    if only.is_empty() || only.contains(&1) {
        results.push((1, "reference efficiency", criterion_1(&mut points)));
    }
    if only.is_empty() || only.contains(&3) {
        results.push((3, "frame error rate", criterion_3(&mut points)));
    }
    results.sort_by_key(|r| r.0);

    println!();
    println!("acceptance results{}", if full_run() { " (full run)" } else { "" });
    for (id, name, v) in &results {
        println!("{} criterion {id} {name}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
    }
    let failed = results.iter().filter(|r| !r.2.pass).count();
    println!("{} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
