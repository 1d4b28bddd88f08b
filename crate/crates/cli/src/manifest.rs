//! Run manifest: enough metadata to reproduce an output set bit-identically.

use std::path::Path;

use anyhow::Result;

pub fn write(
    out_dir: &Path,
    command: &str,
    seed: u64,
    config: Option<&Path>,
    resolved_config: &str,
) -> Result<()> {
    let argv: Vec<String> = std::env::args().skip(1).collect();
    let text = format!(
        "[manifest]\ntool = mrlat {}\ncommand = {}\nseed = {}\nconfig = {}\nout = {}\n\
         timestamp = {}\nargv = {}\n",
        env!("CARGO_PKG_VERSION"),
        command,
        seed,
        config.map_or_else(|| "(defaults)".to_string(), |p| p.display().to_string()),
        out_dir.display(),
        chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        argv.join(" "),
    );
    std::fs::write(out_dir.join("manifest.txt"), text)?;
    // The fully resolved configuration: re-running against this file and the
    // manifest's seed reproduces every CSV and image byte for byte.
    std::fs::write(out_dir.join("resolved_config.txt"), resolved_config)?;
    Ok(())
}
