//! Writes the three-bus model in free MPS format and reads it back.
//!
//!     cargo run --release --example export_mps -- /tmp/case3.mps

use std::path::{Path, PathBuf};

use ccuc::formulation::{build_miqp, build_quantile_table, FormulationOptions};
use ccuc::gmm::QuantileConfig;
use ccuc::grid::{compute_ptdf, load_case};
use ccuc::miqp::{export_mps, read_mps, write_mps};

fn main() -> ccuc::Result<()> {
    let out = std::env::args_os()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("case3.mps"));
    let case = load_case(Path::new(env!("CARGO_MANIFEST_DIR")).join("data/case3.json"))?;
    let gmms = case.load_gmms()?.expect("case3 names its mixture file");
    let ptdf = compute_ptdf(&case.network)?;
    let table = build_quantile_table(&gmms, &case, &ptdf, &QuantileConfig::default())?;
    let (model, _) = build_miqp(&case, &ptdf, &table, &FormulationOptions::default())?;
    write_mps(&model, &out)?;
    let text = std::fs::read_to_string(&out)?;
    let back = read_mps(&text)?;
    println!(
        "{}: {} columns ({} binary), {} rows, {} lines",
        out.display(),
        back.n_vars(),
        back.binaries().len(),
        back.n_constraints(),
        text.lines().count()
    );
    println!("round trip identical: {}", export_mps(&back) == text);
    for line in text.lines().take(12) {
        println!("  {line}");
    }
    Ok(())
}
