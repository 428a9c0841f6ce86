//! Build the coupling families, look at their Fourier transforms and check
//! reflection positivity with random test functions.

use longrange_mf::couplings::{
    fourier, normalize, periodize, random_half_space_function, rp_quadratic_form, CouplingFamily,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> longrange_mf::Result<()> {
    let families = [
        ("nearest neighbour, d=2", CouplingFamily::nearest_neighbor(2)?),
        ("next-nearest, d=2", CouplingFamily::next_nearest(2, 1.0, 0.3)?),
        ("Yukawa mu=0.5, d=2", CouplingFamily::yukawa(2, 0.5)?),
        ("power law s=3, d=2", CouplingFamily::power_law(2, 3.0)?),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    println!("{:<24} {:>10} {:>10} {:>12}", "family", "J(e1)", "J^(pi/2)", "min RP form");
    for (name, fam) in &families {
        let nc = normalize(fam, 1e-10)?;
        let mut worst = f64::INFINITY;
        for _ in 0..50 {
            let f = random_half_space_function(&mut rng, 2, 0, 2);
            worst = worst.min(rp_quadratic_form(&nc, &f, 0)?);
        }
        let k = [std::f64::consts::FRAC_PI_2, 0.0];
        println!("{name:<24} {:>10.5} {:>10.5} {worst:>12.3e}", nc.value(&[1, 0]), fourier(&nc, &k)?);
    }

    // the torus kernel keeps the total coupling and the transform on the dual lattice
    let nc = normalize(&CouplingFamily::power_law(1, 1.2)?, 1e-10)?;
    let k = periodize(&nc, 64, 1e-8)?;
    let total: f64 = k.row.iter().sum();
    println!("\npower law s=1.2 on a 64-site ring: row sum {total:.10}, I_torus {:.5}", k.torus_integral());
    Ok(())
}
