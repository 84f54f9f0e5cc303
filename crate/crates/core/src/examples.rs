//! Small built-in instances with closed-form answers.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::geneig::AffinePencil;
use crate::symmat::SymMatrix;
use crate::truss::{build_model, generate_ground_structure, Material, ModelParams, Support, TrussModel};

fn two_bar(mass_constant: [f64; 2], mass_diag: [[f64; 2]; 2]) -> TrussModel {
    let k = AffinePencil::linear(vec![
        SymMatrix::from_diagonal(&[1.0, 0.0]),
        SymMatrix::from_diagonal(&[0.0, 1.0]),
    ])
    .expect("diagonal coefficients are PSD");
    let m = AffinePencil::new(
        SymMatrix::from_diagonal(&mass_constant),
        vec![
            SymMatrix::from_diagonal(&mass_diag[0]),
            SymMatrix::from_diagonal(&mass_diag[1]),
        ],
    )
    .expect("diagonal coefficients are PSD");
    let q = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
    TrussModel::from_pencils(k, m, q, DVector::from_element(2, 1.0)).expect("consistent dimensions")
}

/// `K = diag(x1, x2)`, `M = diag(x1, 2 x2)`.
///
/// `phi = 2` if `x2 > 0`, `1` if `x2 = 0 < x1`, `0` at the origin;
/// `phi_eps = max{x1/(x1+eps), 2 x2/(x2+eps)}`.
pub fn two_bar_frequency() -> TrussModel {
    two_bar([0.0, 0.0], [[1.0, 0.0], [0.0, 2.0]])
}

/// `K = diag(x1, x2)`, `M = diag(x1 + 1, 2 x2)`.
///
/// `phi = max{1 + 1/x1, 2}` if `x2 > 0`, `1 + 1/x1` if `x2 = 0 < x1`, `+inf`
/// at `x1 = 0`; `phi_eps = max{(x1+1)/(x1+eps), 2 x2/(x2+eps)}`.
pub fn two_bar_frequency_nonstructural() -> TrussModel {
    two_bar([1.0, 0.0], [[1.0, 0.0], [0.0, 2.0]])
}

/// `K = diag(x1, x2)`, `Q = e1`: `psi = 1/x1`, `psi_eps = 1/(x1 + eps)`.
pub fn two_bar_robust() -> TrussModel {
    two_bar([0.0, 0.0], [[0.0, 0.0], [0.0, 0.0]])
}

/// `phi` of [`two_bar_frequency`] in closed form.
pub fn two_bar_frequency_phi(x: [f64; 2]) -> f64 {
    if x[1] > 0.0 {
        2.0
    } else if x[0] > 0.0 {
        1.0
    } else {
        0.0
    }
}

pub fn two_bar_frequency_phi_eps(x: [f64; 2], eps: f64) -> f64 {
    (x[0] / (x[0] + eps)).max(2.0 * x[1] / (x[1] + eps))
}

/// `phi` of [`two_bar_frequency_nonstructural`] in closed form. With
/// `x2 = 0` the second coordinate lies in both kernels and drops out.
pub fn two_bar_nonstructural_phi(x: [f64; 2]) -> f64 {
    if x[0] == 0.0 {
        f64::INFINITY
    } else if x[1] == 0.0 {
        1.0 + 1.0 / x[0]
    } else {
        (1.0 + 1.0 / x[0]).max(2.0)
    }
}

pub fn two_bar_nonstructural_phi_eps(x: [f64; 2], eps: f64) -> f64 {
    ((x[0] + 1.0) / (x[0] + eps)).max(2.0 * x[1] / (x[1] + eps))
}

/// Cantilever ground structure on an `nx` by `ny` grid: left column
/// pinned, load at the middle node of the right column.
pub fn cantilever(nx: usize, ny: usize, spacing: f64, material: Material) -> Result<TrussModel> {
    let gs = generate_ground_structure(nx, ny, spacing, |i, _| {
        if i == 0 {
            Support::PINNED
        } else {
            Support::FREE
        }
    })?;
    let load_node = (ny / 2) * nx + nx - 1;
    build_model(gs, &ModelParams::new(material, load_node))
}
