//! N-particle discretization of the energy, minimized by gradient descent,
//! with a second-moment ellipse fit of the resulting cloud.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::el_system::Ellipse;
use crate::kernel::FourierKernel2D;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParticleError {
    #[error("particles {i} and {j} are closer than the separation guard")]
    CoincidentParticles { i: usize, j: usize },
    #[error("line search stalled after {steps} steps with |grad| = {grad_norm:.3e}")]
    Stall { steps: usize, grad_norm: f64 },
    #[error("need at least {needed} particles, got {got}")]
    TooFewParticles { needed: usize, got: usize },
    #[error("point cloud is degenerate (smallest moment {0:.3e})")]
    DegenerateCloud(f64),
}

/// Particle positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleState {
    pub positions: Vec<[f64; 2]>,
    pub seed: u64,
}

impl ParticleState {
    /// `n` points uniform in the unit disc.
    pub fn uniform_disc(n: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let positions = (0..n)
            .map(|_| {
                let r: f64 = rng.random::<f64>().sqrt();
                let t: f64 = 2.0 * PI * rng.random::<f64>();
                [r * t.cos(), r * t.sin()]
            })
            .collect();
        ParticleState { positions, seed }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// Pair interaction `-log r + κ(d)` and its gradient in `d`, or `None` below
/// the separation guard.
#[inline]
fn pair(k: &FourierKernel2D, dx: f64, dy: f64, min_sep: f64) -> Option<(f64, [f64; 2])> {
    let r2 = dx * dx + dy * dy;
    if !(r2 >= min_sep * min_sep) {
        return None;
    }
    let inv = 1.0 / r2;
    let c2 = (dx * dx - dy * dy) * inv;
    let s2 = 2.0 * dx * dy * inv;
    let (f, fp) = k.eval_harmonic(c2, s2);
    let value = -0.5 * r2.ln() + f;
    let grad = [(-dx - fp * dy) * inv, (-dy + fp * dx) * inv];
    Some((value, grad))
}

/// Evaluation settings shared by energy and gradient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    pub min_separation: f64,
    pub parallel: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            min_separation: 1e-9,
            parallel: true,
        }
    }
}

fn row_energy(
    pos: &[[f64; 2]],
    k: &FourierKernel2D,
    i: usize,
    min_sep: f64,
) -> Result<f64, ParticleError> {
    let zi = pos[i];
    let mut acc = 0.0;
    for (j, zj) in pos.iter().enumerate().skip(i + 1) {
        let (v, _) = pair(k, zi[0] - zj[0], zi[1] - zj[1], min_sep)
            .ok_or(ParticleError::CoincidentParticles { i, j })?;
        acc += v;
    }
    Ok(acc)
}

/// `(1/N²) Σ_{i≠j} [-log|z_i - z_j| + κ(z_i - z_j)] + (1/N) Σ |z_i|²`.
pub fn energy_with(
    s: &ParticleState,
    k: &FourierKernel2D,
    opts: &EvalOptions,
) -> Result<f64, ParticleError> {
    let pos = &s.positions;
    let n = pos.len();
    if n == 0 {
        return Ok(0.0);
    }
    let rows: Vec<f64> = if opts.parallel {
        (0..n)
            .into_par_iter()
            .map(|i| row_energy(pos, k, i, opts.min_separation))
            .collect::<Result<_, _>>()?
    } else {
        (0..n)
            .map(|i| row_energy(pos, k, i, opts.min_separation))
            .collect::<Result<_, _>>()?
    };
    let nf = n as f64;
    let pair_sum: f64 = rows.iter().sum();
    let conf: f64 = pos.iter().map(|z| z[0] * z[0] + z[1] * z[1]).sum();
    Ok(2.0 * pair_sum / (nf * nf) + conf / nf)
}

pub fn energy(s: &ParticleState, k: &FourierKernel2D) -> Result<f64, ParticleError> {
    energy_with(s, k, &EvalOptions::default())
}

/// `∂E/∂z_i = (2/N²) Σ_{j≠i} ∇W(z_i - z_j) + (2/N) z_i`.
pub fn gradient_with(
    s: &ParticleState,
    k: &FourierKernel2D,
    opts: &EvalOptions,
) -> Result<Vec<[f64; 2]>, ParticleError> {
    let pos = &s.positions;
    let n = pos.len();
    let nf = n as f64;
    let pair_scale = 2.0 / (nf * nf);
    let conf_scale = 2.0 / nf;
    if opts.parallel {
        (0..n)
            .into_par_iter()
            .map(|i| {
                let zi = pos[i];
                let mut acc = [0.0, 0.0];
                for (j, zj) in pos.iter().enumerate() {
                    if j == i {
                        continue;
                    }
                    let (_, g) = pair(k, zi[0] - zj[0], zi[1] - zj[1], opts.min_separation)
                        .ok_or(ParticleError::CoincidentParticles { i, j })?;
                    acc[0] += g[0];
                    acc[1] += g[1];
                }
                Ok([
                    pair_scale * acc[0] + conf_scale * zi[0],
                    pair_scale * acc[1] + conf_scale * zi[1],
                ])
            })
            .collect()
    } else {
        let mut acc = vec![[0.0, 0.0]; n];
        for i in 0..n {
            let zi = pos[i];
            for j in i + 1..n {
                let zj = pos[j];
                let (_, g) = pair(k, zi[0] - zj[0], zi[1] - zj[1], opts.min_separation)
                    .ok_or(ParticleError::CoincidentParticles { i, j })?;
                acc[i][0] += g[0];
                acc[i][1] += g[1];
                acc[j][0] -= g[0];
                acc[j][1] -= g[1];
            }
        }
        Ok(acc
            .iter()
            .zip(pos)
            .map(|(a, z)| {
                [
                    pair_scale * a[0] + conf_scale * z[0],
                    pair_scale * a[1] + conf_scale * z[1],
                ]
            })
            .collect())
    }
}

pub fn gradient(s: &ParticleState, k: &FourierKernel2D) -> Result<Vec<[f64; 2]>, ParticleError> {
    gradient_with(s, k, &EvalOptions::default())
}

fn sup_norm(g: &[[f64; 2]]) -> f64 {
    g.iter()
        .fold(0.0f64, |m, v| m.max(v[0].abs()).max(v[1].abs()))
}

/// Gradient-descent settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinimizeOptions {
    /// Stop when `‖∇E‖_∞` falls below this.
    pub tol_g: f64,
    pub max_steps: usize,
    pub initial_step: f64,
    pub backtrack: f64,
    /// Step multiplier after an accepted step, capped at `max_step`.
    pub growth: f64,
    pub max_step: f64,
    /// The line search gives up below this step.
    pub step_floor: f64,
    pub eval: EvalOptions,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        MinimizeOptions {
            tol_g: 1e-8,
            max_steps: 50_000,
            initial_step: 0.1,
            backtrack: 0.5,
            growth: 1.5,
            max_step: 1.0,
            step_floor: 1e-14,
            eval: EvalOptions::default(),
        }
    }
}

/// Outcome of [`minimize`].
#[derive(Debug, Clone, PartialEq)]
pub struct MinimizeReport {
    pub state: ParticleState,
    pub energy: f64,
    pub steps: usize,
    pub grad_norm: f64,
    pub converged: bool,
}

/// Descends from `state`. Particles move along `-(N/2)∇E`, which gives each
/// particle an O(1) force independent of `N`; steps follow Armijo
/// backtracking and grow after each success.
pub fn descend(
    mut state: ParticleState,
    k: &FourierKernel2D,
    opts: &MinimizeOptions,
) -> Result<MinimizeReport, ParticleError> {
    let n = state.len();
    if n < 2 {
        return Err(ParticleError::TooFewParticles { needed: 2, got: n });
    }
    let scale = 0.5 * n as f64;
    let mut e = energy_with(&state, k, &opts.eval)?;
    let mut g = gradient_with(&state, k, &opts.eval)?;
    let mut t = opts.initial_step;
    let mut steps = 0;
    loop {
        let gn = sup_norm(&g);
        if gn < opts.tol_g {
            return Ok(MinimizeReport {
                state,
                energy: e,
                steps,
                grad_norm: gn,
                converged: true,
            });
        }
        if steps == opts.max_steps {
            return Ok(MinimizeReport {
                state,
                energy: e,
                steps,
                grad_norm: gn,
                converged: false,
            });
        }
        let slope: f64 = g.iter().map(|v| v[0] * v[0] + v[1] * v[1]).sum::<f64>() * scale;
        // Energy differences below this are round-off; there the step is
        // judged by the gradient instead.
        let noise = 64.0 * f64::EPSILON * (1.0 + e.abs());
        loop {
            if t < opts.step_floor {
                return Err(ParticleError::Stall {
                    steps,
                    grad_norm: gn,
                });
            }
            let trial = ParticleState {
                positions: state
                    .positions
                    .iter()
                    .zip(&g)
                    .map(|(z, d)| [z[0] - t * scale * d[0], z[1] - t * scale * d[1]])
                    .collect(),
                seed: state.seed,
            };
            let et = match energy_with(&trial, k, &opts.eval) {
                Ok(et) => et,
                Err(ParticleError::CoincidentParticles { .. }) => {
                    t *= opts.backtrack;
                    continue;
                }
                Err(other) => return Err(other),
            };
            if et < e && e - et >= 1e-4 * t * slope {
                state = trial;
                e = et;
                g = gradient_with(&state, k, &opts.eval)?;
                break;
            }
            if et - e <= noise {
                let gt = gradient_with(&trial, k, &opts.eval)?;
                if sup_norm(&gt) < gn {
                    state = trial;
                    e = et;
                    g = gt;
                    break;
                }
            }
            t *= opts.backtrack;
        }
        steps += 1;
        t = (t * opts.growth).min(opts.max_step);
    }
}

/// Minimizes from `n` seeded uniform points in the unit disc.
pub fn minimize(
    n: usize,
    k: &FourierKernel2D,
    seed: u64,
    opts: &MinimizeOptions,
) -> Result<MinimizeReport, ParticleError> {
    descend(ParticleState::uniform_disc(n, seed), k, opts)
}

/// Second-moment fit: the uniform law on `E(a, b, φ)` has covariance
/// `R_φ diag(a²/4, b²/4) R_φᵀ`.
pub fn fit_ellipse(s: &ParticleState) -> Result<Ellipse, ParticleError> {
    let n = s.len();
    if n < 8 {
        return Err(ParticleError::TooFewParticles { needed: 8, got: n });
    }
    let nf = n as f64;
    let (mx, my) = s
        .positions
        .iter()
        .fold((0.0, 0.0), |(x, y), z| (x + z[0], y + z[1]));
    let (mx, my) = (mx / nf, my / nf);
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for z in &s.positions {
        let (dx, dy) = (z[0] - mx, z[1] - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    let (sxx, sxy, syy) = (sxx / nf, sxy / nf, syy / nf);
    let mean = 0.5 * (sxx + syy);
    let half = 0.5 * (sxx - syy);
    let rad = half.hypot(sxy);
    let (big, small) = (mean + rad, mean - rad);
    if small < 1e-12 {
        return Err(ParticleError::DegenerateCloud(small));
    }
    let phi = 0.5 * sxy.atan2(half);
    Ok(Ellipse::new(2.0 * big.sqrt(), 2.0 * small.sqrt(), phi).canonical())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{AnisotropicPreset, ShearPreset};

    fn state(points: &[[f64; 2]]) -> ParticleState {
        ParticleState {
            positions: points.to_vec(),
            seed: 0,
        }
    }

    #[test]
    fn two_particle_energy() {
        let s = state(&[[0.5, 0.0], [-0.5, 0.0]]);
        assert!((energy(&s, &FourierKernel2D::zero()).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn constant_kernel_shifts_energy() {
        let s = ParticleState::uniform_disc(30, 3);
        let c = 0.37;
        let base = energy(&s, &FourierKernel2D::zero()).unwrap();
        let shifted = energy(&s, &FourierKernel2D::constant(c)).unwrap();
        let want = c * 29.0 / 30.0;
        assert!((shifted - base - want).abs() < 1e-13);
    }

    #[test]
    fn gradient_examples() {
        let g = gradient(&state(&[[0.0, 0.0]]), &ShearPreset::kernel(0.3)).unwrap();
        assert_eq!(g, vec![[0.0, 0.0]]);
        let k = FourierKernel2D::new(vec![0.1, 0.2, 0.05], vec![0.1, -0.03]).unwrap();
        let g = gradient(&state(&[[0.3, -0.2], [-0.3, 0.2]]), &k).unwrap();
        assert!((g[0][0] + g[1][0]).abs() < 1e-15 && (g[0][1] + g[1][1]).abs() < 1e-15);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let k = FourierKernel2D::new(vec![0.1, 0.2, 0.05], vec![0.1, -0.03]).unwrap();
        for seed in 0..5 {
            let s = ParticleState::uniform_disc(8, seed);
            let g = gradient(&s, &k).unwrap();
            let h = 1e-6;
            for i in 0..8 {
                for c in 0..2 {
                    let bump = |d: f64| {
                        let mut t = s.clone();
                        t.positions[i][c] += d;
                        energy(&t, &k).unwrap()
                    };
                    let fd = (bump(h) - bump(-h)) / (2.0 * h);
                    assert!((fd - g[i][c]).abs() <= 1e-6 * g[i][c].abs().max(1e-3));
                }
            }
        }
    }

    #[test]
    fn serial_and_parallel_agree() {
        let k = AnisotropicPreset::kernel(0.3);
        let s = ParticleState::uniform_disc(200, 9);
        let serial = EvalOptions {
            parallel: false,
            ..Default::default()
        };
        let a = gradient_with(&s, &k, &serial).unwrap();
        let b = gradient(&s, &k).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x[0] - y[0]).abs() < 1e-12 && (x[1] - y[1]).abs() < 1e-12);
        }
        let ea = energy_with(&s, &k, &serial).unwrap();
        assert_eq!(ea, energy(&s, &k).unwrap());
    }

    #[test]
    fn coincident_particles_rejected() {
        let s = state(&[[0.1, 0.1], [0.1, 0.1]]);
        assert!(matches!(
            energy(&s, &FourierKernel2D::zero()),
            Err(ParticleError::CoincidentParticles { .. })
        ));
    }

    #[test]
    fn two_particles_settle_at_half() {
        let r = minimize(2, &FourierKernel2D::zero(), 1, &MinimizeOptions::default()).unwrap();
        let p = &r.state.positions;
        assert!(r.converged, "{} {} {:?}", r.steps, r.grad_norm, p);
        assert!((p[0][0].hypot(p[0][1]) - 0.5).abs() < 1e-7);
        assert!((p[0][0] + p[1][0]).abs() < 1e-7 && (p[0][1] + p[1][1]).abs() < 1e-7);
    }

    #[test]
    fn fit_exact_grid() {
        let mut pts = Vec::new();
        let m = 400;
        for i in 0..m {
            for j in 0..m {
                let u = -1.0 + (2 * i + 1) as f64 / m as f64;
                let v = -1.0 + (2 * j + 1) as f64 / m as f64;
                if u * u + v * v <= 1.0 {
                    pts.push([2.0 * u, v]);
                }
            }
        }
        let e = fit_ellipse(&state(&pts)).unwrap();
        assert!((e.a - 2.0).abs() < 5e-3 && (e.b - 1.0).abs() < 5e-3);
        assert!(e.phi.min(PI - e.phi) < 1e-6);
    }

    #[test]
    fn fit_rejects_collinear_and_tiny_clouds() {
        let line: Vec<[f64; 2]> = (0..10).map(|i| [i as f64, 0.0]).collect();
        assert!(matches!(
            fit_ellipse(&state(&line)),
            Err(ParticleError::DegenerateCloud(_))
        ));
        assert!(fit_ellipse(&state(&line[..3])).is_err());
    }
}
