use std::net::{TcpListener, TcpStream};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use clap::{Parser, ValueEnum};
use spinal_recon::experiment::{
    aggregate, emit_outputs, plan_block, run_experiment_with, AggregateReport, BlockRecord,
    ExperimentConfig, ExperimentResult, OutputPaths,
};
use spinal_recon::transport::{run_session, Endpoint, Role};
use spinal_recon::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Mode {
    /// Both parties in this process.
    Inprocess,
    /// Alice: accept one connection per block.
    Listen,
    /// Bob: connect once per block.
    Connect,
}

/// Spinal-code reconciliation sweeps over simulated CV-QKD raw data.
#[derive(Debug, Parser)]
#[command(name = "spinal-recon", version)]
struct Args {
    /// Comma-separated true channel SNRs.
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.0277, 0.069, 0.143])]
    snr: Vec<f64>,

    #[arg(long, default_value_t = 100)]
    blocks: u32,

    /// Key length in bits.
    #[arg(long, default_value_t = 1024)]
    n: usize,

    /// Bits per spine block.
    #[arg(long, default_value_t = 4)]
    k: u32,

    /// RNG bits per symbol.
    #[arg(long, default_value_t = 6)]
    c: u32,

    /// Beam width of the decoder.
    #[arg(long = "B", default_value_t = 256)]
    beam_width: usize,

    #[arg(long, default_value_t = 50)]
    imax: u32,

    #[arg(long, default_value_t = 3.0)]
    beta_trunc: f64,

    /// CRC width; only 32 is supported.
    #[arg(long, default_value_t = 32)]
    lambda: u32,

    #[arg(long, default_value_t = 1.0)]
    v_a: f64,

    /// Master seed for every block of the sweep.
    #[arg(long, default_value_t = 1)]
    seed: u64,

    /// Added to each SNR before deriving parameters.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    snr_offset: f64,

    /// Use noiseless raw data (Y = X).
    #[arg(long)]
    noiseless: bool,

    #[arg(long, value_enum, default_value_t = Mode::Inprocess)]
    mode: Mode,

    #[arg(long, default_value = "127.0.0.1:7878")]
    addr: String,

    #[arg(long)]
    out_csv: Option<PathBuf>,

    /// JSON lines: config echo, one record per block, one summary per SNR.
    #[arg(long)]
    out_json: Option<PathBuf>,

    /// No per-block progress on stderr.
    #[arg(long, short)]
    quiet: bool,
}

impl Args {
    fn config(&self) -> Result<ExperimentConfig> {
        if self.lambda != 32 {
            return Err(Error::InvalidArgument(format!(
                "only λ = 32 (CRC-32) is supported, got {}",
                self.lambda
            )));
        }
        let cfg = ExperimentConfig {
            snr_list: self.snr.clone(),
            blocks_per_snr: self.blocks,
            n: self.n,
            k: self.k,
            c: self.c,
            beam_width: self.beam_width,
            beta_trunc: self.beta_trunc,
            lambda: self.lambda,
            i_max: self.imax,
            v_a: self.v_a,
            master_seed: self.seed,
            snr_offset: self.snr_offset,
            noiseless: self.noiseless,
            ..ExperimentConfig::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn progress(quiet: bool, r: &BlockRecord) {
    if quiet {
        return;
    }
    let o = &r.outcome;
    let beta = o.beta.map_or("-".to_string(), |b| format!("{:.4}", b));
    eprintln!(
        "snr {:<8} block {:>4}  {}  L {:>3}  iters {:>2}  beta {}  {:.0} ms",
        o.snr,
        r.block_index,
        if o.success { "ok  " } else { "FAIL" },
        o.passes,
        o.iterations,
        beta,
        o.millis
    );
}

fn blocks(cfg: &ExperimentConfig) -> impl Iterator<Item = (usize, u32)> + '_ {
    (0..cfg.snr_list.len()).flat_map(|i| (0..cfg.blocks_per_snr).map(move |b| (i, b)))
}

fn run_networked(cfg: &ExperimentConfig, args: &Args) -> Result<ExperimentResult> {
    let listener = match args.mode {
        Mode::Listen => Some(TcpListener::bind(&args.addr)?),
        _ => None,
    };
    let mut records = Vec::new();
    for (snr_index, block_index) in blocks(cfg) {
        let plan = plan_block(cfg, snr_index, block_index)?;
        let (role, samples, stream) = match &listener {
            Some(l) => (Role::Alice, plan.raw.x, l.accept()?.0),
            None => (Role::Bob, plan.raw.y, connect(&args.addr)?),
        };
        stream.set_nodelay(true)?;
        let ep = Endpoint {
            params: plan.params,
            secrets: plan.secrets,
            samples,
            key_seed: plan.key_seed,
            channel_snr: plan.channel_snr,
        };
        let mut outcome = run_session(role, stream, ep)?;
        outcome.seed = plan.seed;
        let record = BlockRecord { snr_index, block_index, outcome };
        progress(args.quiet, &record);
        records.push(record);
    }
    let report = aggregate(records.iter().map(|r| &r.outcome))?;
    Ok(ExperimentResult { records, report })
}

fn connect(addr: &str) -> Result<TcpStream> {
    let deadline = Instant::now() + Duration::from_secs(60);
    loop {
        match TcpStream::connect(addr) {
            Ok(s) => return Ok(s),
            Err(e) if Instant::now() >= deadline => return Err(e.into()),
            Err(_) => std::thread::sleep(Duration::from_millis(50)),
        }
    }
}

fn print_report(report: &AggregateReport) {
    println!(
        "{:>8} {:>7} {:>9} {:>9} {:>7} {:>9} {:>8} {:>9}",
        "snr", "blocks", "beta", "median", "fer", "iters", "L", "table"
    );
    for r in &report.rows {
        let table = spinal_recon::experiment::reference_beta(r.snr)
            .map_or("-".to_string(), |b| format!("{:.4}", b));
        println!(
            "{:>8} {:>7} {:>9.4} {:>9.4} {:>7.3} {:>9.2} {:>8.2} {:>9}",
            r.snr,
            r.blocks,
            r.beta_mean(),
            r.beta_median(),
            r.fer(),
            r.iters_mean(),
            r.l_mean(),
            table
        );
    }
}

fn run(args: &Args) -> Result<()> {
    let cfg = args.config()?;
    let paths = OutputPaths {
        csv: args.out_csv.clone(),
        json: args.out_json.clone(),
    };
    let outputs = paths.open()?;
    let result = match args.mode {
        Mode::Inprocess => run_experiment_with(&cfg, |r| progress(args.quiet, r))?,
        Mode::Listen | Mode::Connect => run_networked(&cfg, args)?,
    };
    emit_outputs(&cfg, &result, outputs)?;
    print_report(&result.report);
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::InvalidArgument(_) => 2,
                Error::Io { .. } | Error::Stream(_) | Error::IncompleteFrame { .. } => 3,
                _ => 1,
            })
        }
    }
}
