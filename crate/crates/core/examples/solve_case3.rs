//! Solves the three-bus case to optimality and prints the commitment.
//!
//!     cargo run --release --example solve_case3

use std::path::Path;

use ccuc::formulation::{solve_case, FormulationOptions};
use ccuc::gmm::QuantileConfig;
use ccuc::grid::load_case;
use ccuc::miqp::SolveConfig;

fn main() -> ccuc::Result<()> {
    let case = load_case(Path::new(env!("CARGO_MANIFEST_DIR")).join("data/case3.json"))?;
    let gmms = case.load_gmms()?.expect("case3 names its mixture file");
    let cfg = SolveConfig {
        verbose: true,
        ..SolveConfig::exact()
    };
    let sol = solve_case(&case, &gmms, &FormulationOptions::default(), &QuantileConfig::default(), &cfg)?;
    println!(
        "{:?} after {} nodes, objective {:.4}, bound {:.4}",
        sol.result.status, sol.result.nodes_explored, sol.result.objective, sol.result.best_bound
    );
    for t in 0..case.horizon {
        println!(
            "t={t}: reserve need up {:>7.2} down {:>7.2}",
            case.risk.reserve_up_extra - sol.table.reserve_up[t],
            case.risk.reserve_down_extra + sol.table.reserve_down[t]
        );
    }
    for g in &sol.schedule.generators {
        let on: String = g.on.iter().map(|b| if *b { '1' } else { '0' }).collect();
        let p: Vec<String> = g.power.iter().map(|p| format!("{p:7.2}")).collect();
        println!("{:>4} {on}  P [{}]", g.name, p.join(" "));
    }
    let c = &sol.schedule.costs;
    println!(
        "cost {:.4} = commitment {:.4} + fuel {:.4} + reserve {:.4} + curtailment {:.4}",
        c.total, c.uc, c.fuel, c.reserve, c.curtail_penalty
    );
    Ok(())
}
