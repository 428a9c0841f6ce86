//! The infrared integral for the standard families: I shrinks as the
//! interaction spreads out.

use longrange_mf::couplings::{normalize, CouplingFamily};
use longrange_mf::infrared::{integral_i, QuadratureSpec};

fn main() -> longrange_mf::Result<()> {
    let spec = QuadratureSpec::default();

    let nn = integral_i(&normalize(&CouplingFamily::nearest_neighbor(3)?, 1e-12)?, &spec)?;
    println!("nearest neighbour d=3: I = {:.6} (W - 1 = {:.6}, err {:.1e})", nn.i_value, nn.w_value - 1.0, nn.error_estimate);

    println!("\nYukawa, d=3");
    for mu in [1.0, 0.5, 0.25, 0.125] {
        let r = integral_i(&normalize(&CouplingFamily::yukawa(3, mu)?, 1e-12)?, &spec)?;
        println!("  mu = {mu:<6} I = {:.3e}  C = {:.4}  |J|_2^2 = {:.3e}", r.i_value, r.prop47_c, r.l2_norm);
    }

    println!("\npower law, d=1");
    for s in [1.8, 1.5, 1.2, 1.05] {
        let r = integral_i(&normalize(&CouplingFamily::power_law(1, s)?, 1e-12)?, &spec)?;
        println!("  s = {s:<5} I = {:.4e}  delta = {:.2}", r.i_value, r.prop47_delta);
    }
    Ok(())
}
