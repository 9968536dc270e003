//! Quantiles of a one-dimensional Gaussian mixture, checked against the CDF.
//!
//!     cargo run --release --example quantile

use std::time::Instant;

use ccuc::gmm::{quantile, QuantileConfig, UnivariateGmm};

fn main() -> ccuc::Result<()> {
    // left-skewed: a narrow main mode and a wide low tail
    let u = UnivariateGmm::new(vec![(0.7, 2.0, 4.0), (0.2, -6.0, 25.0), (0.1, -20.0, 100.0)])?;
    let cfg = QuantileConfig::default();
    println!("{:>7} {:>12} {:>10}", "q", "y", "|F(y)-q|");
    for q in [0.005, 0.02, 0.05, 0.1, 0.5, 0.9, 0.95, 0.98, 0.995] {
        let y = quantile(&u, q, &cfg)?;
        println!("{q:>7} {y:>12.6} {:>10.1e}", (u.cdf(y) - q).abs());
    }

    let n = 100_000;
    let started = Instant::now();
    let mut acc = 0.0;
    for k in 0..n {
        acc += quantile(&u, 0.01 + 0.98 * k as f64 / n as f64, &cfg)?;
    }
    println!(
        "{n} quantiles in {:.3} s ({:.2} us each, checksum {acc:.3})",
        started.elapsed().as_secs_f64(),
        1e6 * started.elapsed().as_secs_f64() / n as f64
    );
    Ok(())
}
