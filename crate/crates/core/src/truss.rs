//! 2D truss ground structures and the affine stiffness/mass pencils they
//! induce.
//!
//! Global DOF numbering before supports is `2 * node + dir` with `dir = 0`
//! for x and `1` for y. Fixed DOFs are dropped; the remaining ones are
//! renumbered consecutively in node order.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geneig::AffinePencil;
use crate::symmat::{is_psd, SymMatrix, TolerancePolicy};

/// Per-node restraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Support {
    pub x: bool,
    pub y: bool,
}

impl Support {
    pub const FREE: Support = Support { x: false, y: false };
    pub const PINNED: Support = Support { x: true, y: true };
    /// Only horizontal motion allowed.
    pub const SLIDE_X: Support = Support { x: false, y: true };
    /// Only vertical motion allowed.
    pub const SLIDE_Y: Support = Support { x: true, y: false };
}

#[derive(Debug, Clone)]
pub struct GroundStructure {
    nodes: Vec<[f64; 2]>,
    bars: Vec<(usize, usize)>,
    fixed_dofs: BTreeSet<usize>,
    spacing: f64,
    dof_map: Vec<Option<usize>>,
    free_dofs: usize,
}

impl GroundStructure {
    /// Validates an explicit node/bar layout. Bars are normalized to
    /// `(min, max)` order.
    pub fn new(
        nodes: Vec<[f64; 2]>,
        bars: Vec<(usize, usize)>,
        fixed_dofs: BTreeSet<usize>,
        spacing: f64,
    ) -> Result<Self> {
        if !(spacing > 0.0) {
            return Err(Error::InvalidStructure("spacing must be positive".into()));
        }
        let nn = nodes.len();
        let mut seen = BTreeSet::new();
        let mut normalized = Vec::with_capacity(bars.len());
        for &(a, b) in &bars {
            if a >= nn || b >= nn {
                return Err(Error::InvalidStructure(format!("bar ({a}, {b}) references a missing node")));
            }
            if a == b {
                return Err(Error::InvalidStructure(format!("bar ({a}, {b}) connects a node to itself")));
            }
            let key = (a.min(b), a.max(b));
            if !seen.insert(key) {
                return Err(Error::InvalidStructure(format!("duplicate bar ({a}, {b})")));
            }
            if segment_hits_node(&nodes, key, collinear_tol(spacing)).is_some() {
                return Err(Error::InvalidStructure(format!(
                    "bar ({a}, {b}) overlaps another node"
                )));
            }
            normalized.push(key);
        }
        if let Some(&d) = fixed_dofs.iter().find(|&&d| d >= 2 * nn) {
            return Err(Error::InvalidStructure(format!("fixed dof {d} out of range")));
        }
        let mut dof_map = vec![None; 2 * nn];
        let mut next = 0;
        for (d, slot) in dof_map.iter_mut().enumerate() {
            if !fixed_dofs.contains(&d) {
                *slot = Some(next);
                next += 1;
            }
        }
        if next == 0 {
            return Err(Error::NoFreeDofs);
        }
        Ok(Self {
            nodes,
            bars: normalized,
            fixed_dofs,
            spacing,
            dof_map,
            free_dofs: next,
        })
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    pub fn bars(&self) -> &[(usize, usize)] {
        &self.bars
    }

    pub fn fixed_dofs(&self) -> &BTreeSet<usize> {
        &self.fixed_dofs
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn free_dof_count(&self) -> usize {
        self.free_dofs
    }

    /// Reduced DOF index of `(node, dir)`, `None` if restrained.
    pub fn dof(&self, node: usize, dir: usize) -> Option<usize> {
        self.dof_map[2 * node + dir]
    }

    pub fn support(&self, node: usize) -> Support {
        Support {
            x: self.fixed_dofs.contains(&(2 * node)),
            y: self.fixed_dofs.contains(&(2 * node + 1)),
        }
    }

    pub fn bar_length(&self, j: usize) -> f64 {
        let (a, b) = self.bars[j];
        dist(self.nodes[a], self.nodes[b])
    }
}

fn dist(p: [f64; 2], q: [f64; 2]) -> f64 {
    ((q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2)).sqrt()
}

fn collinear_tol(spacing: f64) -> f64 {
    1e-9 * spacing
}

/// First node (other than the endpoints) lying in the open segment of `bar`.
fn segment_hits_node(nodes: &[[f64; 2]], bar: (usize, usize), tol: f64) -> Option<usize> {
    let (a, b) = bar;
    let pa = nodes[a];
    let pb = nodes[b];
    let d = [pb[0] - pa[0], pb[1] - pa[1]];
    let len2 = d[0] * d[0] + d[1] * d[1];
    let len = len2.sqrt();
    (0..nodes.len()).find(|&c| {
        if c == a || c == b {
            return false;
        }
        let pc = nodes[c];
        let w = [pc[0] - pa[0], pc[1] - pa[1]];
        let t = (w[0] * d[0] + w[1] * d[1]) / len2;
        let along = t * len;
        if along <= tol || along >= len - tol {
            return false;
        }
        let cross = (w[0] * d[1] - w[1] * d[0]).abs() / len;
        cross < tol
    })
}

/// Removes every pair whose open segment contains a third node.
pub fn eliminate_overlaps(nodes: &[[f64; 2]], pairs: &[(usize, usize)], spacing: f64) -> Vec<(usize, usize)> {
    let tol = collinear_tol(spacing);
    pairs
        .iter()
        .copied()
        .filter(|&p| segment_hits_node(nodes, p, tol).is_none())
        .collect()
}

/// Fully connected `nx x ny` grid with overlapping bars removed. Node
/// `j * nx + i` sits at `(i * spacing, j * spacing)`.
pub fn generate_ground_structure<F>(nx: usize, ny: usize, spacing: f64, support: F) -> Result<GroundStructure>
where
    F: Fn(usize, usize) -> Support,
{
    if nx == 0 || ny == 0 || nx * ny < 2 {
        return Err(Error::InvalidStructure("grid needs at least two nodes".into()));
    }
    if !(spacing > 0.0) {
        return Err(Error::InvalidStructure("spacing must be positive".into()));
    }
    let mut nodes = Vec::with_capacity(nx * ny);
    let mut fixed = BTreeSet::new();
    for j in 0..ny {
        for i in 0..nx {
            let k = nodes.len();
            nodes.push([i as f64 * spacing, j as f64 * spacing]);
            let s = support(i, j);
            if s.x {
                fixed.insert(2 * k);
            }
            if s.y {
                fixed.insert(2 * k + 1);
            }
        }
    }
    let nn = nodes.len();
    let mut pairs = Vec::new();
    for a in 0..nn {
        for b in a + 1..nn {
            pairs.push((a, b));
        }
    }
    let bars = eliminate_overlaps(&nodes, &pairs, spacing);
    GroundStructure::new(nodes, bars, fixed, spacing)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Material {
    /// Pa
    pub young_modulus: f64,
    /// kg/m^3
    pub density: f64,
}

impl Material {
    pub fn new(young_modulus: f64, density: f64) -> Result<Self> {
        let m = Self { young_modulus, density };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.young_modulus > 0.0 && self.young_modulus.is_finite()) {
            return Err(Error::InvalidConfig("young_modulus must be positive".into()));
        }
        if !(self.density >= 0.0 && self.density.is_finite()) {
            return Err(Error::InvalidConfig("density must be nonnegative".into()));
        }
        Ok(())
    }
}

impl Default for Material {
    fn default() -> Self {
        Self {
            young_modulus: 1.0,
            density: 0.0,
        }
    }
}

/// Inputs to [`build_model`] besides the ground structure.
#[derive(Debug, Clone)]
pub struct ModelParams {
    pub material: Material,
    /// Per-bar override of `material`.
    pub bar_materials: Option<Vec<Material>>,
    pub load_node: usize,
    /// N
    pub load_scale: f64,
    /// kg, lumped at the load node
    pub nonstructural_mass: f64,
    /// 2 for the circular uncertain load, 1 for a single vertical
    /// (horizontal if vertical is restrained) load.
    pub load_dims: usize,
}

impl ModelParams {
    pub fn new(material: Material, load_node: usize) -> Self {
        Self {
            material,
            bar_materials: None,
            load_node,
            load_scale: 1.0,
            nonstructural_mass: 0.0,
            load_dims: 2,
        }
    }
}

/// Stiffness pencil `K(x)`, mass pencil `M(x) = M0 + sum x_j M_j`, load
/// matrix `Q` and volume vector `l`.
#[derive(Debug, Clone)]
pub struct TrussModel {
    structure: Option<GroundStructure>,
    load_node: Option<usize>,
    stiffness: AffinePencil,
    mass: AffinePencil,
    load: DMatrix<f64>,
    load_pencil: AffinePencil,
    lengths: DVector<f64>,
    nonstructural_mass: f64,
}

pub fn build_model(gs: GroundStructure, params: &ModelParams) -> Result<TrussModel> {
    params.material.validate()?;
    let m = gs.bars().len();
    if m == 0 {
        return Err(Error::InvalidStructure("ground structure has no bars".into()));
    }
    if let Some(mats) = &params.bar_materials {
        if mats.len() != m {
            return Err(Error::DimensionMismatch { expected: m, got: mats.len() });
        }
        for mat in mats {
            mat.validate()?;
        }
    }
    if !(params.load_scale > 0.0) {
        return Err(Error::InvalidConfig("load_scale must be positive".into()));
    }
    if !(params.nonstructural_mass >= 0.0) {
        return Err(Error::InvalidConfig("nonstructural_mass must be nonnegative".into()));
    }
    if !(1..=2).contains(&params.load_dims) {
        return Err(Error::InvalidConfig("load_dims must be 1 or 2".into()));
    }
    let ln = params.load_node;
    if ln >= gs.nodes().len() {
        return Err(Error::InvalidLoadNode(ln));
    }
    let load_dofs: Vec<usize> = [gs.dof(ln, 0), gs.dof(ln, 1)].into_iter().flatten().collect();
    if load_dofs.is_empty() {
        return Err(Error::InvalidLoadNode(ln));
    }

    let n = gs.free_dof_count();
    let mut k_coeffs = Vec::with_capacity(m);
    let mut m_coeffs = Vec::with_capacity(m);
    let mut lengths = DVector::zeros(m);
    for (j, &(a, b)) in gs.bars().iter().enumerate() {
        let mat = params
            .bar_materials
            .as_ref()
            .map_or(params.material, |v| v[j]);
        let (pa, pb) = (gs.nodes()[a], gs.nodes()[b]);
        let len = dist(pa, pb);
        let c = (pb[0] - pa[0]) / len;
        let s = (pb[1] - pa[1]) / len;
        lengths[j] = len;

        let mut g = DVector::zeros(n);
        let mut mdiag = DVector::zeros(n);
        for (node, sign) in [(a, -1.0), (b, 1.0)] {
            if let Some(d) = gs.dof(node, 0) {
                g[d] = sign * c;
                mdiag[d] = mat.density * len / 2.0;
            }
            if let Some(d) = gs.dof(node, 1) {
                g[d] = sign * s;
                mdiag[d] = mat.density * len / 2.0;
            }
        }
        let kj = &g * g.transpose() * (mat.young_modulus / len);
        k_coeffs.push(SymMatrix::from_dmatrix(kj)?);
        m_coeffs.push(SymMatrix::from_dmatrix(DMatrix::from_diagonal(&mdiag))?);
    }

    let mut m0 = DVector::zeros(n);
    for &d in &load_dofs {
        m0[d] = params.nonstructural_mass;
    }
    let chosen: Vec<usize> = if params.load_dims == 2 {
        load_dofs
    } else {
        vec![gs.dof(ln, 1).or(gs.dof(ln, 0)).expect("load node has a free dof")]
    };
    let mut q = DMatrix::zeros(n, chosen.len());
    for (col, &d) in chosen.iter().enumerate() {
        q[(d, col)] = params.load_scale;
    }

    let stiffness = AffinePencil::linear(k_coeffs)?;
    let mass = AffinePencil::new(SymMatrix::from_dmatrix(DMatrix::from_diagonal(&m0))?, m_coeffs)?;
    let mut model = TrussModel::from_pencils(stiffness, mass, q, lengths)?;
    model.structure = Some(gs);
    model.load_node = Some(ln);
    model.nonstructural_mass = params.nonstructural_mass;
    Ok(model)
}

impl TrussModel {
    /// Model given directly by its pencils, without geometry.
    pub fn from_pencils(
        stiffness: AffinePencil,
        mass: AffinePencil,
        load: DMatrix<f64>,
        lengths: DVector<f64>,
    ) -> Result<Self> {
        let n = stiffness.dim();
        let m = stiffness.nvars();
        if mass.dim() != n {
            return Err(Error::DimensionMismatch { expected: n, got: mass.dim() });
        }
        if mass.nvars() != m {
            return Err(Error::DimensionMismatch { expected: m, got: mass.nvars() });
        }
        if lengths.len() != m {
            return Err(Error::DimensionMismatch { expected: m, got: lengths.len() });
        }
        if load.nrows() != n || load.ncols() == 0 {
            return Err(Error::DimensionMismatch { expected: n, got: load.nrows() });
        }
        if lengths.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return Err(Error::InvalidStructure("volume vector must be positive".into()));
        }
        if !is_psd(mass.constant(), &TolerancePolicy::default())? {
            return Err(Error::NotPositiveSemidefinite {
                min_eigenvalue: crate::symmat::eig_sym(mass.constant())?.min(),
            });
        }
        let gram = SymMatrix::from_dmatrix(&load * load.transpose())?;
        let nonstructural_mass = mass.constant().max_abs();
        Ok(Self {
            structure: None,
            load_node: None,
            load_pencil: AffinePencil::constant_map(gram, m),
            stiffness,
            mass,
            load,
            lengths,
            nonstructural_mass,
        })
    }

    pub fn structure(&self) -> Option<&GroundStructure> {
        self.structure.as_ref()
    }

    pub fn load_node(&self) -> Option<usize> {
        self.load_node
    }

    pub fn stiffness(&self) -> &AffinePencil {
        &self.stiffness
    }

    pub fn mass(&self) -> &AffinePencil {
        &self.mass
    }

    /// `Q`, one column per uncertain load direction.
    pub fn load(&self) -> &DMatrix<f64> {
        &self.load
    }

    /// Constant pencil `x -> Q Q'`.
    pub fn load_pencil(&self) -> &AffinePencil {
        &self.load_pencil
    }

    pub fn lengths(&self) -> &DVector<f64> {
        &self.lengths
    }

    pub fn nonstructural_mass(&self) -> f64 {
        self.nonstructural_mass
    }

    pub fn num_vars(&self) -> usize {
        self.stiffness.nvars()
    }

    pub fn dim(&self) -> usize {
        self.stiffness.dim()
    }

    /// Total material volume `l'x`.
    pub fn volume(&self, x: &DVector<f64>) -> f64 {
        self.lengths.dot(x)
    }

    /// Whether `K(1)` is positive definite, i.e. the full ground structure
    /// is kinematically stable.
    pub fn is_stable(&self) -> Result<bool> {
        let k = self.stiffness.eval(&DVector::from_element(self.num_vars(), 1.0))?;
        let spec = crate::symmat::eig_sym(&k)?;
        Ok(spec.min() > TolerancePolicy::default().kernel_threshold(&k))
    }
}

/// Uniform design `x = V0 / sum l`. It satisfies both `l'x <= V0` and
/// `l'x = V0`, so `_equality` does not change the result.
pub fn uniform_feasible_design(model: &TrussModel, v0: f64, _equality: bool) -> Result<DVector<f64>> {
    if !(v0 > 0.0 && v0.is_finite()) {
        return Err(Error::InvalidConfig("volume bound must be positive".into()));
    }
    let total = model.lengths().sum();
    Ok(DVector::from_element(model.num_vars(), v0 / total))
}
