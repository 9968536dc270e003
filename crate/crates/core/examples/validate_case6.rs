//! Monte Carlo check of the six-bus schedule, with and without the line
//! chance constraints.
//!
//!     cargo run --release --example validate_case6

use std::path::Path;

use ccuc::formulation::{solve_case, FormulationOptions};
use ccuc::gmm::{read_gmm_file, QuantileConfig};
use ccuc::grid::{compute_ptdf, load_case};
use ccuc::miqp::SolveConfig;
use ccuc::validate::{validate_schedule, ValidationConfig};

fn main() -> ccuc::Result<()> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("data");
    let case = load_case(dir.join("case6.json"))?;
    let gmms = read_gmm_file(dir.join("case6-gmm.json"))?;
    let ptdf = compute_ptdf(&case.network)?;
    for line_constraints in [true, false] {
        let sol = solve_case(
            &case,
            &gmms,
            &FormulationOptions { line_constraints },
            &QuantileConfig::default(),
            &SolveConfig::with_gap(1e-4),
        )?;
        let report = validate_schedule(&case, &ptdf, &sol.schedule, &gmms, &ValidationConfig::default())?;
        println!(
            "line constraints {line_constraints}: cost {:.2}, {} of {} estimates above alpha + 3 CI",
            sol.schedule.costs.total,
            report.exceeding(3.0).len(),
            report.rows.len()
        );
        for r in report.rows.iter().filter(|r| r.estimate > r.alpha) {
            println!(
                "  t={} {:<12} {:<4} {:.4} ± {:.4} (alpha {})",
                r.t,
                r.constraint.as_str(),
                r.branch,
                r.estimate,
                r.ci_halfwidth,
                r.alpha
            );
        }
    }
    Ok(())
}
