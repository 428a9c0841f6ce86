//! The generic mean-field engine on a custom a priori measure, and a check
//! that it finds the q = 3 Potts transition.

use longrange_mf::mf_core::*;
use longrange_mf::mf_potts::beta_mf;

fn main() -> longrange_mf::Result<()> {
    // spin-1 with a weak zero state
    let measure = AprioriMeasure::new(vec![vec![-1.0], vec![0.0], vec![1.0]], vec![1.0, 0.2, 1.0])?;
    for beta in [0.5, 1.0, 1.5, 2.0] {
        let model = MfModel::new(measure.clone(), beta, vec![0.0])?;
        let minima = minimize_phi(&model, &default_starts(&measure), 1e-12)?;
        let (m, f) = &minima[0];
        println!("spin-1, beta = {beta}: m = {:+.5}, Phi = {f:.6}", m[0]);
    }

    // the tetrahedral Potts measure sees beta (q-1)/q
    let potts = AprioriMeasure::potts(3)?;
    let starts = default_starts(&potts);
    let bt = beta_mf(3);
    for beta in [bt - 0.01, bt + 0.01] {
        let model = MfModel::new(potts.clone(), beta * 2.0 / 3.0, vec![0.0, 0.0])?;
        let best = &minimize_phi(&model, &starts, 1e-12)?[0];
        println!("Potts q=3, beta = {beta:.4}: |m| = {:.4}", norm(&best.0));
    }
    Ok(())
}
