//! Product quadrature on the unit sphere `S^{d-1}`.

use std::f64::consts::PI;

use crate::quadrature::{gamma, gauss_gegenbauer};

/// Surface measure `ω_d = 2π^{d/2}/Γ(d/2)` of `S^{d-1}`.
pub fn surface_area(d: usize) -> f64 {
    let h = 0.5 * d as f64;
    2.0 * PI.powf(h) / gamma(h)
}

/// Default polynomial exactness degree: 30 for `d = 3`, 20 above.
pub fn default_degree(d: usize) -> usize {
    if d <= 3 {
        30
    } else {
        20
    }
}

/// Nodes (row-major, stride `dim`) and weights of a rule on `S^{dim-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SphereRule {
    pub dim: usize,
    pub degree: usize,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl SphereRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn node(&self, j: usize) -> &[f64] {
        &self.nodes[j * self.dim..(j + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], f64)> {
        self.nodes
            .chunks_exact(self.dim)
            .zip(self.weights.iter().copied())
    }

    /// `∫ f dσ`, summed serially in node order.
    pub fn integrate<F: FnMut(&[f64]) -> f64>(&self, mut f: F) -> f64 {
        self.iter().map(|(x, w)| w * f(x)).sum()
    }
}

/// Rule on `S^{d-1}` exact for polynomials of degree `≤ degree`.
///
/// Peels one coordinate at a time: `ξ_1 = t`, the remaining coordinates are
/// `√(1-t²)` times a point of `S^{d-2}`, and `t` carries the weight
/// `(1-t²)^{(d-3)/2}`, integrated by the matching Gauss–Gegenbauer rule.
/// The circle at the bottom uses an even number of equispaced azimuths, so
/// the node set is closed under every coordinate reflection.
pub fn sphere_quadrature(d: usize, degree: usize) -> SphereRule {
    assert!(d >= 2, "sphere quadrature needs d >= 2");
    let m = degree + 2 - degree % 2;
    let h = 2.0 * PI / m as f64;
    let mut nodes = Vec::with_capacity(2 * m);
    for j in 0..m {
        let (s, c) = (j as f64 * h).sin_cos();
        nodes.extend([c, s]);
    }
    let mut rule = SphereRule {
        dim: 2,
        degree,
        nodes,
        weights: vec![h; m],
    };
    let n = degree / 2 + 1;
    for dim in 3..=d {
        let gauss = gauss_gegenbauer(n, 0.5 * (dim as f64 - 3.0));
        let mut nodes = Vec::with_capacity(gauss.len() * rule.len() * dim);
        let mut weights = Vec::with_capacity(gauss.len() * rule.len());
        for (&t, &wt) in gauss.nodes.iter().zip(&gauss.weights) {
            let s = (1.0 - t * t).max(0.0).sqrt();
            for (p, wp) in rule.iter() {
                nodes.push(t);
                nodes.extend(p.iter().map(|x| s * x));
                weights.push(wt * wp);
            }
        }
        rule = SphereRule {
            dim,
            degree,
            nodes,
            weights,
        };
    }
    rule
}

/// `∫_{S^{d-1}} ξ^{2α} dσ` for a multi-index `α`, via
/// `2 ∏Γ(α_i + ½) / Γ(|α| + d/2)`.
pub fn even_moment(alpha: &[usize]) -> f64 {
    let d = alpha.len() as f64;
    let total: usize = alpha.iter().sum();
    let num: f64 = alpha.iter().map(|&k| gamma(k as f64 + 0.5)).product();
    2.0 * num / gamma(total as f64 + 0.5 * d)
}
