use crate::channels::{lindblad_rhs, NoiseParams};
use crate::error::Result;
use crate::fock::fidelity_pure;
use crate::{DensityMatrix, Ket};

/// Euler substeps per cycle.
pub const REFERENCE_SUBSTEPS: usize = 10;

/// Fidelity to `target` of the freely decaying `target`, sampled once per
/// cycle (`cycles + 1` values, starting at 1).
pub fn free_evolution_reference(target: &Ket, noise: &NoiseParams, cycles: usize) -> Result<Vec<f64>> {
    noise.validate()?;
    let h = noise.ratio() / REFERENCE_SUBSTEPS as f64;
    let mut rho = DensityMatrix::from_ket(target);
    let mut out = Vec::with_capacity(cycles + 1);
    out.push(fidelity_pure(&rho, target));
    for _ in 0..cycles {
        for _ in 0..REFERENCE_SUBSTEPS {
            let next = rho.matrix() + lindblad_rhs(&rho, 1.0) * crate::Complex64::new(h, 0.0);
            rho = DensityMatrix::from_matrix(next)?;
        }
        out.push(fidelity_pure(&rho, target));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::FockSpace;

    fn space() -> FockSpace {
        FockSpace::new(12).unwrap()
    }

    #[test]
    fn single_photon_decays_exponentially() {
        let noise = NoiseParams::decay_only(1e-3, 1e-6);
        let one = Ket::basis(space(), 1).unwrap();
        let f = free_evolution_reference(&one, &noise, 2000).unwrap();
        for (k, v) in f.iter().enumerate() {
            let exact = (-(k as f64) * noise.ratio()).exp();
            assert!((v - exact).abs() < 1e-4, "cycle {k}: {v} vs {exact}");
        }
    }

    #[test]
    fn vacuum_and_infinite_lifetime_are_constant() {
        let noise = NoiseParams::decay_only(1e-3, 1e-6);
        let f = free_evolution_reference(&Ket::basis(space(), 0).unwrap(), &noise, 100).unwrap();
        assert!(f.iter().all(|v| (v - 1.0).abs() < 1e-14));
        let forever = NoiseParams::decay_only(f64::INFINITY, 1e-6);
        let h = 0.5f64.sqrt();
        let sup = Ket::from_components(space(), &[(1, crate::Complex64::new(h, 0.0)), (4, crate::Complex64::new(h, 0.0))]).unwrap();
        let f = free_evolution_reference(&sup, &forever, 100).unwrap();
        assert!(f.iter().all(|v| (v - 1.0).abs() < 1e-14));
    }
}
