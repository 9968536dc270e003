//! Single Gaussian versus mixture on skewed, heavy-tailed wind errors.
//!
//! Samples the true mixture of `data/skewed.json`, fits a one-component and
//! a three-component model to the samples, solves a schedule with each and
//! validates both against the true mixture.
//!
//!     cargo run --release --example gaussian_vs_gmm

use std::path::Path;

use ccuc::fit::{em_fit, ks_distance, sample_gmm, EmConfig};
use ccuc::formulation::{solve_case, FormulationOptions};
use ccuc::gmm::{Gmm, QuantileConfig};
use ccuc::grid::{compute_ptdf, load_case};
use ccuc::miqp::SolveConfig;
use ccuc::validate::{validate_schedule, ValidationConfig};

fn main() -> ccuc::Result<()> {
    let case = load_case(Path::new(env!("CARGO_MANIFEST_DIR")).join("data/skewed.json"))?;
    let truth = case.load_gmms()?.expect("skewed.json names its mixture file");
    let ptdf = compute_ptdf(&case.network)?;

    let mut fitted: Vec<(usize, Vec<Gmm>)> = vec![(1, Vec::new()), (3, Vec::new())];
    for (t, g) in truth.iter().enumerate() {
        let samples = sample_gmm(g, 200_000, 100 + t as u64)?;
        for (k, out) in fitted.iter_mut() {
            out.push(em_fit(&samples, &EmConfig::with_components(*k, 7))?);
        }
        if t == 0 {
            for (farm, w) in case.wind_farms.iter().enumerate() {
                let col = samples.column(farm);
                let mut unit = vec![0.0; case.n_wind()];
                unit[farm] = 1.0;
                let ks: Vec<String> = fitted
                    .iter()
                    .map(|(k, gs)| {
                        let m = gs[0].project(&unit).unwrap();
                        format!("K={k}: {:.4}", ks_distance(&col, |x| m.cdf(x)))
                    })
                    .collect();
                println!("KS distance, farm {}: {}", w.name, ks.join(", "));
            }
        }
    }

    for (k, gmms) in &fitted {
        let sol = solve_case(
            &case,
            gmms,
            &FormulationOptions::default(),
            &QuantileConfig::default(),
            &SolveConfig::with_gap(1e-4),
        )?;
        let report = validate_schedule(&case, &ptdf, &sol.schedule, &truth, &ValidationConfig::default())?;
        let worst = report.worst_margin().unwrap();
        println!(
            "K={k}: cost {:.2}, {} constraints above alpha + 3 CI, worst t={} {} {} at {:.4}",
            sol.schedule.costs.total,
            report.exceeding(3.0).len(),
            worst.t,
            worst.constraint.as_str(),
            worst.branch,
            worst.estimate
        );
    }
    Ok(())
}
