//! Compression-error bound factors and the step-size policies derived from
//! the convergence guarantees.
//!
//!     cargo run --example bound_factors

use cser::optimizers::{
    corollary_step_size, corollary_step_size_momentum, error_bound_factor, BoundMethod,
};

fn main() -> cser::Result<()> {
    println!("error factor multiplying eta^2 L^2 V2 (leading constants dropped):");
    let rows = [
        ("error feedback, d1=1/2, H=8", BoundMethod::QSparse, 0.5, 0.0, 8),
        ("error reset,    d1=1/2, d2=0,    H=8", BoundMethod::Cser, 0.5, 0.0, 8),
        ("error reset,    d1=1/3, d2=0,    H=4", BoundMethod::Cser, 1.0 / 3.0, 0.0, 4),
        ("error reset,    d1=7/8, d2=1/96, H=12", BoundMethod::Cser, 7.0 / 8.0, 1.0 / 96.0, 12),
    ];
    for (name, method, d1, d2, h) in rows {
        let f = error_bound_factor(method, d1, d2, h, false)?;
        let with_c = error_bound_factor(method, d1, d2, h, true)?;
        println!("  {name:<42} {f:>10.2}   (with leading constant: {with_c:.2})");
    }
    println!("\nshifting budget from model sync (d1=1/3, H=4) to gradient sync");
    println!("(d1=7/8, d2=1/96, H=12) keeps the overall ratio but shrinks the factor.\n");

    println!("prescribed step sizes (gamma = 1, T = 2000, n = 8, L = 5):");
    for (d1, d2, h) in [(1.0, 0.0, 1u64), (0.5, 0.0, 8), (0.125, 1.0 / 64.0, 8)] {
        let eta = corollary_step_size(1.0, 2000, 8, d1, d2, h, 5.0)?;
        let eta_m = corollary_step_size_momentum(1.0, 2000, 8, d1, d2, h)?;
        println!("  d1 = {d1:<6} d2 = {d2:<8.4} H = {h:<3} eta = {eta:.5}, momentum eta = {eta_m:.5}");
    }
    Ok(())
}
