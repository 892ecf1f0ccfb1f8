//! Randomized invariants over families of potentials and spectral points.

use fgscatter::background::FiniteGapPotential;
use fgscatter::kdv_invariants::*;
use fgscatter::perturbation::Perturbation;
use fgscatter::riemann_surface::*;
use fgscatter::scattering::ScatteringProblem;
use num_complex::Complex64;
use proptest::prelude::*;

fn gaussian(amp: f64, width: f64, shift: f64) -> ScatteringProblem {
    let pert = Perturbation::from_fn(move |x| amp * (-((x - shift) / width).powi(2)).exp()).unwrap();
    ScatteringProblem::new(FiniteGapPotential::free(0.0), pert).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    #[test]
    fn unitarity_and_reality(amp in -1.5f64..1.5, width in 0.5f64..2.0, shift in -2.0f64..2.0,
                             lam in 0.05f64..30.0, re in -5.0f64..10.0, im in 0.2f64..5.0) {
        let p = gaussian(amp, width, shift);
        let b = p.band_scattering(lam).unwrap();
        prop_assert!(b.unitarity_defect() < 1e-8);
        prop_assert!((b.r_plus.norm() - b.r_minus.norm()).abs() < 1e-8);
        let z = Complex64::new(re, im);
        let t = p.t(z).unwrap();
        let tc = p.t(z.conj()).unwrap();
        prop_assert!((tc - t.conj()).norm() < 1e-8 * t.norm().max(1.0));
    }

    #[test]
    fn translation_leaves_transmission_unchanged(amp in -1.5f64..1.5, shift in -3.0f64..3.0, re in -2.0f64..10.0, im in 0.2f64..3.0) {
        let z = Complex64::new(re, im);
        let a = gaussian(amp, 1.0, 0.0).t(z).unwrap();
        let b = gaussian(amp, 1.0, shift).t(z).unwrap();
        prop_assert!((a - b).norm() < 1e-8 * a.norm().max(1.0));
    }

    #[test]
    fn blaschke_is_unimodular_on_the_spectrum(rho in 1.1f64..2.9, below in -3.0f64..-0.05, lam in 0.01f64..20.0) {
        let b = BandStructure::new(vec![0.0, 1.0, 3.0]).unwrap();
        let lam = if (1.0..3.0).contains(&lam) { lam + 2.0 } else { lam };
        for r in [rho, below] {
            let omega = blaschke_differential(&b, &SurfacePoint::upper(r)).unwrap();
            let v = blaschke_with(&omega, &SurfacePoint::upper(lam)).unwrap();
            prop_assert!((v.norm() - 1.0).abs() < 1e-8, "ρ = {r}, λ = {lam}: |B| = {}", v.norm());
        }
    }

    #[test]
    fn chi_of_constant_potential(cst in -3.0f64..3.0) {
        let n = 64;
        let xs: Vec<f64> = (0..n).map(|i| i as f64 * 0.1).collect();
        let chi = chi_recursion(&xs, &vec![cst; n], &vec![0.0; n], 7, Derivative::Spectral).unwrap();
        // χ_{2m} = 0 and χ_{2m+1} = (-1)^m C_m c^{m+1} (Catalan numbers)
        let catalan = [1.0, 1.0, 2.0, 5.0];
        for m in 0..4 {
            let want = (-1f64).powi(m as i32) * catalan[m] * cst.powi(m as i32 + 1);
            prop_assert!((chi.chi[2 * m][7] - want).abs() < 1e-10 * want.abs().max(1.0));
            if m < 3 {
                prop_assert!(chi.chi[2 * m + 1][7].abs() < 1e-10 * cst.abs().max(1.0).powi(m as i32 + 2));
            }
        }
    }

    #[test]
    fn kdv_conserves_mass_and_energy(amp in -1.0f64..1.0, width in 1.0f64..2.0) {
        let opts = KdvOptions { n: 256, length: 60.0, dt: 2e-3, ..Default::default() };
        let v0: Vec<f64> = opts.grid().iter().map(|&x| amp * (-(x / width).powi(2)).exp()).collect();
        let run = kdv_evolve_g0(&v0, 0.0, 0.2, 20, opts).unwrap();
        let d = run.drift();
        prop_assert!(d[0] < 1e-10 && d[1] < 1e-6, "{d:?}");
    }
}
