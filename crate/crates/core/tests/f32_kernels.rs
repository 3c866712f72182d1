//! The kernels instantiated at single precision.

use fockfb::fock::random::{random_alpha, random_ket};
use fockfb::fock::{fidelity_pure, CavityState, DensityMatrix, Displacer, FockSpace, Ket};
use fockfb::lyapunov::build_context;
use fockfb::measurement::{build_ops, MeasurementSetup, Outcome};
use fockfb::policy::encode_observation;
use fockfb::states::Preset;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn space() -> FockSpace {
    FockSpace::new(20).unwrap()
}

#[test]
fn measurement_and_displacement() {
    let target: Ket<f32> = Preset::Benchmark.build(space()).unwrap();
    let setup = MeasurementSetup::for_target(&target, None, None).unwrap();
    let ops = build_ops::<f32>(&setup, space());
    assert!(ops.completeness_defect() < 1e-6);

    let zeno = ops.collapse(&CavityState::Pure(target.clone()), Outcome::E).unwrap();
    assert!((zeno.fidelity(&target) - 1.0).abs() < 1e-5);

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let displacer = Displacer::<f32>::new(space());
    let psi = random_ket::<f32, _>(space(), &[0, 1, 2, 3], &mut rng);
    let alpha = random_alpha::<f32, _>(0.5, &mut rng);
    let pure = displacer.apply(&CavityState::Pure(psi.clone()), alpha).unwrap();
    let mixed = displacer
        .apply(&CavityState::Mixed(DensityMatrix::from_ket(&psi)), alpha)
        .unwrap();
    assert!(pure.max_abs_diff(&mixed) < 1e-5);
    assert!(displacer.operator(alpha).unitarity_defect() < 1e-5);
}

#[test]
fn lyapunov_and_observation() {
    let target: Ket<f32> = Preset::Benchmark.build(space()).unwrap();
    let ctx = build_context(&target, space(), 0.3).unwrap();
    let vac = CavityState::Pure(Ket::<f32>::basis(space(), 0).unwrap());
    assert!((ctx.value(&vac) - 1.0).abs() < 1e-6);
    let step = ctx.newton(&vac);
    assert!(step.alpha.norm() > 0.0);

    let rho = DensityMatrix::from_ket(&target);
    assert!((fidelity_pure(&rho, &target) - 1.0).abs() < 1e-6);
    let obs = encode_observation(&rho, false);
    let d = space().dim();
    let trace: f64 = (0..d).map(|n| obs.values[n * d + n]).sum();
    assert!((trace - 1.0).abs() < 1e-6);
}
