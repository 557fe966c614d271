use std::f64::consts::{FRAC_PI_2, PI};

use coulomb_ellipse::kernel::{AnisotropicPreset, ShearPreset};
use coulomb_ellipse::particle::{
    descend, energy, fit_ellipse, minimize, EvalOptions, MinimizeOptions, ParticleState,
};
use coulomb_ellipse::FourierKernel2D;

fn serial(max_steps: usize) -> MinimizeOptions {
    MinimizeOptions {
        max_steps,
        eval: EvalOptions {
            parallel: false,
            ..EvalOptions::default()
        },
        ..MinimizeOptions::default()
    }
}

#[test]
fn accepted_steps_never_raise_the_energy() {
    let k = ShearPreset::kernel(0.2);
    let mut state = ParticleState::uniform_disc(60, 3);
    let mut e = energy(&state, &k).unwrap();
    for _ in 0..60 {
        let r = descend(state, &k, &serial(1)).unwrap();
        // Steps inside the round-off band are judged by the gradient, so the
        // energy may move by at most that band.
        let noise = 64.0 * f64::EPSILON * (1.0 + e.abs());
        assert!(r.energy <= e + noise, "{} after {}", r.energy, e);
        e = r.energy;
        state = r.state;
    }
}

#[test]
fn central_symmetry_is_preserved() {
    let k = FourierKernel2D::new(vec![0.0, 0.1, -0.05], vec![0.0, 0.08]).unwrap();
    let half = ParticleState::uniform_disc(40, 11);
    let mut positions = half.positions.clone();
    positions.extend(half.positions.iter().map(|p| [-p[0], -p[1]]));
    let state = ParticleState {
        positions,
        seed: 11,
    };
    let r = descend(state, &k, &serial(80)).unwrap();
    let n = 40;
    for i in 0..n {
        let (p, q) = (r.state.positions[i], r.state.positions[i + n]);
        assert!((p[0] + q[0]).abs() < 1e-10 && (p[1] + q[1]).abs() < 1e-10);
    }
}

fn disc_fit_error(n: usize) -> f64 {
    let r = minimize(n, &FourierKernel2D::zero(), 7, &serial(300)).unwrap();
    let fit = fit_ellipse(&r.state).unwrap();
    (fit.a - 1.0).abs().max((fit.b - 1.0).abs())
}

#[test]
fn disc_fit_improves_with_particle_count() {
    let errors: Vec<f64> = [500, 1000, 2000]
        .iter()
        .map(|&n| disc_fit_error(n))
        .collect();
    assert!(errors[0] > errors[1] && errors[1] > errors[2], "{errors:?}");
    assert!(errors[2] < 0.01, "{errors:?}");
}

#[test]
fn unperturbed_cloud_fills_the_unit_disc() {
    let r = minimize(1000, &FourierKernel2D::zero(), 7, &serial(300)).unwrap();
    let radius = r
        .state
        .positions
        .iter()
        .map(|p| p[0].hypot(p[1]))
        .fold(0.0, f64::max);
    assert!((radius - 1.0).abs() < 0.03, "outermost radius {radius}");
    let fit = fit_ellipse(&r.state).unwrap();
    assert!((fit.a - 1.0).abs() < 0.02 && (fit.b - 1.0).abs() < 0.02);
}

#[test]
fn anisotropic_cloud_elongates_along_y() {
    let r = minimize(1000, &AnisotropicPreset::kernel(0.5), 7, &serial(300)).unwrap();
    let fit = fit_ellipse(&r.state).unwrap();
    let ratio = fit.a / fit.b;
    assert!(
        (ratio / 3f64.sqrt() - 1.0).abs() < 0.03,
        "axis ratio {ratio}"
    );
    let d = (fit.phi - FRAC_PI_2).rem_euclid(PI);
    assert!(d.min(PI - d) < 0.02, "phi {}", fit.phi);
}
