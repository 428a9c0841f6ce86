//! Low-temperature Blume-Capel: the two stationary branches and the
//! transition line lambda_t(beta) ~ e^-beta.

use longrange_mf::mf_blume_capel::*;

fn main() -> longrange_mf::Result<()> {
    println!("{:>5} {:>14} {:>12} {:>12}", "beta", "lambda_t", "e^-beta", "gap(C=50)");
    for beta in [8.0, 10.0, 12.0, 14.0] {
        let lt = lambda_t(beta, 1e-12)?;
        println!("{beta:>5} {lt:>14.6e} {:>12.6e} {:>12.3e}", (-beta as f64).exp(), boundary_gap(beta, 0.0, 50.0)?);
    }

    let beta = 10.0;
    println!("\nbranches at beta = {beta}, lambda = 0");
    for b in stationary_branches(beta, 0.0)? {
        let b = b?;
        let x = b.minimizer;
        println!("  dominant {:>2}: x = ({:.3e}, {:.6}, {:.3e})  phi = {:.6e}", b.dominant, x.x1, x.x0, x.xm1, b.phi);
    }

    let c = ising_properties_check(2.1, 0.0);
    println!("\nIsing slice J = 2.1, h = 0: minima {:?}, J(1-m^2) <= 2 at minima: {}", c.minima, c.i3_local);
    Ok(())
}
