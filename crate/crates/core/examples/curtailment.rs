//! A case that is infeasible unless wind may be curtailed.
//!
//!     cargo run --release --example curtailment

use std::path::Path;

use ccuc::formulation::{solve_case, FormulationOptions};
use ccuc::gmm::QuantileConfig;
use ccuc::grid::load_case;
use ccuc::miqp::SolveConfig;
use ccuc::Error;

fn main() -> ccuc::Result<()> {
    let mut case = load_case(Path::new(env!("CARGO_MANIFEST_DIR")).join("data/case3-tight.json"))?;
    let gmms = case.load_gmms()?.expect("case names its mixture file");
    for allow in [false, true] {
        case.allow_curtailment = allow;
        let res = solve_case(
            &case,
            &gmms,
            &FormulationOptions::default(),
            &QuantileConfig::default(),
            &SolveConfig::exact(),
        );
        match res {
            Err(Error::Infeasible(why)) => println!("curtailment {allow}: infeasible ({why})"),
            Err(e) => return Err(e),
            Ok(sol) => {
                println!(
                    "curtailment {allow}: cost {:.2}, penalty {:.2}",
                    sol.schedule.costs.total, sol.schedule.costs.curtail_penalty
                );
                for w in &sol.schedule.wind_farms {
                    let c: Vec<String> = w.curtailed.iter().map(|c| format!("{c:.2}")).collect();
                    println!("  {} curtailed [{}] MW", w.name, c.join(", "));
                }
            }
        }
    }
    Ok(())
}
