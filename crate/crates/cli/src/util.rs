use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;
use std::process::ExitCode;

use anyhow::{Context, Result};
use cohsense::selftest::{self, SelftestOptions, CORRUPT_ENV};
use cohsense::Exec;
use sha2::{Digest, Sha256};

pub const EXIT_CONFIG: u8 = 1;
pub const EXIT_DATA: u8 = 2;

/// 1 for configuration problems, 2 for everything else.
pub fn exit_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<cohsense::Error>() {
        Some(cohsense::Error::Config(_)) => EXIT_CONFIG,
        _ => EXIT_DATA,
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_bytes(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut r = BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?);
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = r.read(&mut buf)?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex(&h.finalize()))
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

pub fn selftest(json: bool, exec: Exec) -> Result<ExitCode> {
    let opts = SelftestOptions {
        corrupt: std::env::var(CORRUPT_ENV).ok().filter(|s| !s.is_empty()),
        exec,
    };
    let start = std::time::Instant::now();
    let results = selftest::run(&opts, &[]);
    let failed = results.iter().filter(|r| !r.passed).count();
    if json {
        println!("{}", serde_json::to_string_pretty(&results)?);
    } else {
        for r in &results {
            println!(
                "{} {:<34} worst {:.3e} (tol {:.1e}, {} cases, {:.0} ms)",
                if r.passed { "PASS" } else { "FAIL" },
                r.name,
                r.worst,
                r.tolerance,
                r.cases,
                r.elapsed_ms
            );
        }
        println!(
            "{} of {} checks passed in {:.2} s",
            results.len() - failed,
            results.len(),
            start.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        for r in results.iter().filter(|r| !r.passed) {
            eprintln!("invariant violated: {}", r.name);
        }
        Ok(ExitCode::from(EXIT_DATA))
    } else {
        Ok(ExitCode::SUCCESS)
    }
}
