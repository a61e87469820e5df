//! Error of each fixed-step integrator on `dz/dt = z`, `z(0) = 1`, as the
//! step count doubles.
//!
//!     cargo run --release --example solver_convergence

use rectiflow::sampler::{convergence_probe, Integrator, LinearField};

fn main() -> rectiflow::Result<()> {
    let field = LinearField { rate: 1.0, dim: 1 };
    println!("exact e = {:.15}", field.exact(1.0));
    for integ in Integrator::ALL {
        println!("\n{integ} (order {})", integ.order());
        println!("{:>6} {:>18} {:>12} {:>8}", "steps", "z(1)", "error", "ratio");
        for row in convergence_probe(field, integ, &[5, 10, 20, 40, 80, 160])? {
            let ratio = row.ratio.map(|r| format!("{r:.2}")).unwrap_or_default();
            println!("{:>6} {:>18.15} {:>12.3e} {ratio:>8}", row.steps, row.value, row.error);
        }
    }
    Ok(())
}
