//! Total cost of the six-bus case as the correlation between farms varies.
//!
//!     cargo run --release --example correlation_sweep

use std::path::Path;

use ccuc::cli::{sweep_correlation, FitOptions};
use ccuc::grid::load_case;

fn main() -> ccuc::Result<()> {
    let case = load_case(Path::new(env!("CARGO_MANIFEST_DIR")).join("data/case6.json"))?;
    let fit = FitOptions {
        components: 4,
        samples: 20_000,
        seed: 0,
    };
    let points = sweep_correlation(&case, &[-0.4, -0.2, 0.0, 0.2, 0.4], &fit, 1e-4)?;
    println!("{:>6} {:>12} {:>10} {:>10}", "r", "total", "reserve", "gap");
    for p in &points {
        println!("{:>6} {:>12.2} {:>10.2} {:>10.1e}", p.r, p.total, p.costs.reserve, p.relative_gap);
    }
    Ok(())
}
