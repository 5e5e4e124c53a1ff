//! Scenario runner behind the `flushlab` binary.

pub mod config;
pub mod scenarios;

use std::io::Write;
use std::path::Path;

use serde::Serialize;

pub use config::{parse_config, parse_str, ConfigError, Kind, Scenario};
pub use scenarios::{run_scenario, Check, Failure};

#[derive(Serialize)]
struct Manifest<'a> {
    kind: Kind,
    version: &'a str,
    seed: u64,
    workers: usize,
    scenario: &'a Scenario,
    checks: &'a [Check],
    pass: bool,
}

/// Writes `summary.csv`, `summary.txt` and `manifest.json` and returns the
/// text summary.
pub fn write_summary(
    out: &Path,
    kind: Kind,
    scenario: &Scenario,
    seed: u64,
    workers: usize,
    checks: &[Check],
) -> std::io::Result<String> {
    let pass = checks.iter().all(|c| c.pass);
    let mut csv = std::fs::File::create(out.join("summary.csv"))?;
    writeln!(csv, "check,value,criterion,pass")?;
    for c in checks {
        writeln!(csv, "\"{}\",{:e},\"{}\",{}", c.name, c.value, c.criterion, c.pass)?;
    }
    let mut text = format!("{kind}: {}\n", if pass { "PASS" } else { "FAIL" });
    for c in checks {
        text += &format!(
            "  {} {} = {:.6e} ({})\n",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.value,
            c.criterion
        );
    }
    std::fs::write(out.join("summary.txt"), &text)?;
    let manifest = Manifest {
        kind,
        version: env!("CARGO_PKG_VERSION"),
        seed,
        workers,
        scenario,
        checks,
        pass,
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(std::io::Error::other)?;
    std::fs::write(out.join("manifest.json"), json)?;
    Ok(text)
}
