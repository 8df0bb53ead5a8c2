use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use cohsense::analytics::Row;
use cohsense::Exec;

mod analyze;
mod simulate;
mod util;

/// Coherent transceiver simulator and polarization/phase sensing analysis.
#[derive(Debug, Parser)]
#[command(name = "cohsense", version)]
struct Cli {
    /// Run every data-parallel loop on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the link described by a config file and record the tap stream.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Turn a recorded tap stream into sensing series and spectrograms.
    Analyze {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        row: Option<RowArg>,
        /// Further boxcar decimation of the recorded stream.
        #[arg(long)]
        decimation: Option<usize>,
        /// Take analysis settings and tap format from this run config.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        segment_len: Option<usize>,
        /// Chirp search band in Hz, e.g. `0.03,0.13`.
        #[arg(long, value_delimiter = ',', num_args = 2)]
        chirp_band: Option<Vec<f64>>,
    },
    /// Run the invariant suite.
    Selftest {
        /// Print results as JSON.
        #[arg(long)]
        json: bool,
    },
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum RowArg {
    First,
    Second,
}

impl From<RowArg> for Row {
    fn from(r: RowArg) -> Self {
        match r {
            RowArg::First => Row::First,
            RowArg::Second => Row::Second,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let exec = if cli.sequential { Exec::Sequential } else { Exec::default() };
    let result = match cli.command {
        Command::Simulate { config, out } => simulate::run(&config, &out, exec),
        Command::Analyze {
            input,
            out,
            row,
            decimation,
            config,
            segment_len,
            chirp_band,
        } => analyze::run(&analyze::Options {
            input,
            out,
            row: row.map(Row::from),
            decimation,
            config,
            segment_len,
            chirp_band: chirp_band.map(|b| [b[0], b[1]]),
            exec,
        }),
        Command::Selftest { json } => util::selftest(json, exec),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(util::exit_code(&e))
        }
    }
}
