//! Heat-bath Monte Carlo on a power-law ring and the infrared-bound
//! verdicts on either side of the mean-field transition.

use longrange_mf::couplings::{normalize, periodize, CouplingFamily};
use longrange_mf::mf_potts::beta_mf;
use longrange_mf::torus_mc::*;

fn main() -> longrange_mf::Result<()> {
    let nc = normalize(&CouplingFamily::power_law(1, 1.2)?, 1e-10)?;
    let kernel = periodize(&nc, 256, 1e-8)?;
    let it = kernel.torus_integral();
    let kind = SpinKind::Potts { q: 3 };
    println!("L = 256, I_torus = {it:.4}");
    for (f, init) in [(0.8, Init::Disordered), (1.2, Init::Ordered)] {
        let beta = f * beta_mf(3);
        let mut st = build_state(kernel.clone(), kind, init, 1)?;
        sweep(&mut st, beta, 0.0, 200)?;
        let r = measure(&mut st, beta, 0.0, 500, 1)?;
        let v = check_bounds(&r, kind, beta, 0.0, it)?;
        println!(
            "beta = {beta:.3}: |m| = {:.4}, e = {:.4}, var m0 = {:.2e}, acceptance {:.2}",
            r.m_abs, r.e_star, r.var_m0, r.acceptance
        );
        println!("  A: {:.3e} <= {:.3e} {}", v.a.lhs, v.a.rhs, v.a.pass);
        if let Some(b) = v.b {
            println!("  B: {:.3e} <= {:.3e} {}", b.lhs, b.rhs, b.pass);
        }
    }
    Ok(())
}
