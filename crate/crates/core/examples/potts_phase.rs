//! Mean-field Potts phase diagram: zero-field constants, the critical
//! endpoint and both first-order lines.

use longrange_mf::mf_potts::*;

fn main() -> longrange_mf::Result<()> {
    for q in 3..=6 {
        let e = critical_endpoint(q)?;
        println!(
            "q = {q}: beta_MF = {:.6}, m = {:.4}, endpoint beta0 = {:.4}, hc = {:.5}",
            beta_mf(q),
            m_mf_at_transition(q),
            e.beta0,
            e.hc
        );
    }

    let q = 4;
    let hc = critical_endpoint(q)?.hc;
    println!("\nq = {q}, positive field");
    let hs: Vec<f64> = (1..=5).map(|i| hc * i as f64 / 6.0).collect();
    for p in beta_plus_sweep(q, &hs, 1e-12) {
        let p = p?;
        println!("  h = {:.4}  beta_t = {:.6}  x1: {:.4} -> {:.4}  dh/dbeta = {:.4}", p.h, p.beta_t, p.x_low.x[0], p.x_high.x[0], clausius_clapeyron(&p)?);
    }
    println!("q = {q}, negative field");
    for p in beta_minus_sweep(q, &[-0.01, -0.1, -1.0, -10.0], 1e-12) {
        let p = p?;
        println!("  h = {:<6} beta_t = {:.6}  e_A - e_S = {:.4}", p.h, p.beta_t, p.e_a - p.e_s);
    }
    Ok(())
}
