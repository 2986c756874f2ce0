//! Prints the empirical PL constant of the scalar profile `x² + 3 sin 2x`
//! on growing intervals around its minimizer.
//!
//! `cargo run --example pl_scan -p muon-vr`

use muon_vr::problems::{pl_constant_scan, scalar_minimizer};

fn main() {
    let (x_hat, f_star) = scalar_minimizer();
    println!("minimizer x̂ = {x_hat:.6}, f(x̂) = {f_star:.6}");
    println!("{:>10} {:>12} {:>10}", "halfwidth", "mu", "argmin");
    for w in [0.25, 0.5, 1.0, 1.5, 2.0, 3.0, 5.0] {
        let scan = pl_constant_scan(x_hat - w, x_hat + w, 1e-4);
        println!("{w:>10.2} {:>12.4e} {:>10.4}", scan.mu, scan.argmin);
    }
}
