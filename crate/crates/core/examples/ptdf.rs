//! DC power transfer distribution factors of the six-bus network.
//!
//!     cargo run --release --example ptdf

use std::path::Path;

use ccuc::grid::{compute_ptdf, load_case};

fn main() -> ccuc::Result<()> {
    let case = load_case(Path::new(env!("CARGO_MANIFEST_DIR")).join("data/case6.json"))?;
    let net = &case.network;
    let ptdf = compute_ptdf(net)?;
    print!("{:>6}", "");
    for b in &net.buses {
        print!("{:>9}", format!("bus {b}"));
    }
    println!();
    for (l, br) in net.branches.iter().enumerate() {
        print!("{:>6}", br.label());
        for v in ptdf.row(l) {
            print!("{v:>9.4}");
        }
        println!();
    }

    // flows at t=0 with every generator idle: loads served from the slack
    let mut inj = vec![0.0; net.n_buses()];
    for ld in &case.loads {
        inj[net.bus_index(ld.bus).unwrap()] -= ld.demand[0];
    }
    for w in &case.wind_farms {
        inj[net.bus_index(w.bus).unwrap()] += w.forecast[0];
    }
    let slack = net.bus_index(net.slack_bus).unwrap();
    inj[slack] -= inj.iter().sum::<f64>();
    for (br, f) in net.branches.iter().zip(ptdf.flows(&inj)) {
        println!("{:>6} {f:>9.2} MW of {}", br.label(), br.capacity);
    }
    Ok(())
}
