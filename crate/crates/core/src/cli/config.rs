//! Run configuration (JSON). Units: lengths in m, Young's modulus in Pa,
//! density in kg/m^3, masses in kg, volume in m^3, load in N.

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problems::{ConstraintKind, Formulation, ProblemKind, ProblemSpec};
use crate::solvers::{SolverKind, SolverOptions};
use crate::truss::{build_model, generate_ground_structure, GroundStructure, Material, ModelParams, Support, TrussModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub nx: usize,
    pub ny: usize,
    #[serde(default = "one")]
    pub spacing: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplicitConfig {
    pub nodes: Vec<[f64; 2]>,
    pub bars: Vec<[usize; 2]>,
    /// Tolerance unit for the overlap check.
    #[serde(default = "one")]
    pub spacing: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bar_materials: Option<Vec<Material>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum StructureConfig {
    Grid(GridConfig),
    Explicit(ExplicitConfig),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub history: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub svg: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub problem: ProblemKind,
    pub structure: StructureConfig,
    /// Nodes with both directions fixed.
    #[serde(default)]
    pub fixed_nodes: Vec<usize>,
    /// Additional `[node, direction]` restraints, direction 0 = x, 1 = y.
    #[serde(default)]
    pub fixed_dofs: Vec<[usize; 2]>,
    pub load_node: usize,
    /// Radius `q` of the uncertain load.
    #[serde(default = "one")]
    pub load_scale: f64,
    /// `d` in `Q = q [e_1 .. e_d]`.
    #[serde(default = "two")]
    pub load_dims: usize,
    #[serde(default)]
    pub nonstructural_mass: f64,
    #[serde(default)]
    pub material: Material,
    /// `V0`.
    pub volume: f64,
    /// Defaults to `volume_le` for robust compliance and `volume_eq` for
    /// eigenfrequency.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constraint: Option<ConstraintKind>,
    #[serde(default = "pencil_eps")]
    pub formulation: Formulation,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_schedule: Option<Vec<f64>>,
    #[serde(default = "subgradient")]
    pub solver: SolverKind,
    #[serde(default)]
    pub options: SolverOptions,
    /// Bisection window; defaults to the automatic bracket.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bracket: Option<[f64; 2]>,
    #[serde(default)]
    pub output: OutputConfig,
}

fn one() -> f64 {
    1.0
}

fn two() -> usize {
    2
}

fn pencil_eps() -> Formulation {
    Formulation::PencilEps
}

fn subgradient() -> SolverKind {
    SolverKind::Subgradient
}

fn invalid(field: &str, msg: impl std::fmt::Display) -> Error {
    Error::InvalidConfig(format!("{field}: {msg}"))
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(field, format!("must be positive, got {v}")))
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config is serializable")
    }

    fn node_count(&self) -> usize {
        match &self.structure {
            StructureConfig::Grid(g) => g.nx * g.ny,
            StructureConfig::Explicit(e) => e.nodes.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match &self.structure {
            StructureConfig::Grid(g) => {
                if g.nx * g.ny < 2 {
                    return Err(invalid("structure.grid", "needs at least two nodes"));
                }
                positive("structure.grid.spacing", g.spacing)?;
            }
            StructureConfig::Explicit(e) => {
                positive("structure.explicit.spacing", e.spacing)?;
                if e.bars.is_empty() {
                    return Err(invalid("structure.explicit.bars", "must not be empty"));
                }
                if e.nodes.iter().flatten().any(|c| !c.is_finite()) {
                    return Err(invalid("structure.explicit.nodes", "coordinates must be finite"));
                }
                if let Some(mats) = &e.bar_materials {
                    if mats.len() != e.bars.len() {
                        return Err(invalid(
                            "structure.explicit.bar_materials",
                            format!("expected {} entries, got {}", e.bars.len(), mats.len()),
                        ));
                    }
                    for m in mats {
                        m.validate().map_err(|e| invalid("structure.explicit.bar_materials", e))?;
                    }
                }
            }
        }
        let nn = self.node_count();
        if let Some(&n) = self.fixed_nodes.iter().find(|&&n| n >= nn) {
            return Err(invalid("fixed_nodes", format!("node {n} does not exist")));
        }
        if let Some(d) = self.fixed_dofs.iter().find(|d| d[0] >= nn || d[1] > 1) {
            return Err(invalid("fixed_dofs", format!("invalid restraint {d:?}")));
        }
        if self.load_node >= nn {
            return Err(invalid("load_node", format!("node {} does not exist", self.load_node)));
        }
        positive("load_scale", self.load_scale)?;
        if !(1..=2).contains(&self.load_dims) {
            return Err(invalid("load_dims", "must be 1 or 2"));
        }
        if !(self.nonstructural_mass >= 0.0 && self.nonstructural_mass.is_finite()) {
            return Err(invalid("nonstructural_mass", "must be nonnegative"));
        }
        self.material.validate().map_err(|e| invalid("material", e))?;
        positive("volume", self.volume)?;
        if let Some(eps) = self.eps {
            positive("eps", eps)?;
        }
        if let Some(s) = &self.eps_schedule {
            if s.is_empty() {
                return Err(invalid("eps_schedule", "must not be empty"));
            }
            for &e in s {
                positive("eps_schedule", e)?;
            }
            if s.windows(2).any(|w| !(w[1] < w[0])) {
                return Err(invalid("eps_schedule", "must be strictly decreasing"));
            }
        }
        if let Some([lo, hi]) = self.bracket {
            if !(lo >= 0.0 && hi > lo && hi.is_finite()) {
                return Err(invalid("bracket", format!("invalid window [{lo}, {hi}]")));
            }
        }
        self.options.validate().map_err(|e| invalid("options", e))?;
        Ok(())
    }

    fn fixed_set(&self) -> BTreeSet<usize> {
        let mut set: BTreeSet<usize> = self.fixed_nodes.iter().flat_map(|&n| [2 * n, 2 * n + 1]).collect();
        set.extend(self.fixed_dofs.iter().map(|d| 2 * d[0] + d[1]));
        set
    }

    pub fn ground_structure(&self) -> Result<GroundStructure> {
        let fixed = self.fixed_set();
        match &self.structure {
            StructureConfig::Grid(g) => generate_ground_structure(g.nx, g.ny, g.spacing, |i, j| {
                let n = j * g.nx + i;
                Support {
                    x: fixed.contains(&(2 * n)),
                    y: fixed.contains(&(2 * n + 1)),
                }
            }),
            StructureConfig::Explicit(e) => GroundStructure::new(
                e.nodes.clone(),
                e.bars.iter().map(|b| (b[0], b[1])).collect(),
                fixed,
                e.spacing,
            ),
        }
    }

    pub fn model(&self) -> Result<TrussModel> {
        let gs = self.ground_structure()?;
        let mut params = ModelParams::new(self.material, self.load_node);
        params.load_scale = self.load_scale;
        params.load_dims = self.load_dims;
        params.nonstructural_mass = self.nonstructural_mass;
        if let StructureConfig::Explicit(e) = &self.structure {
            params.bar_materials = e.bar_materials.clone();
        }
        build_model(gs, &params)
    }

    /// `eps` if given, else the last entry of the schedule.
    pub fn effective_eps(&self) -> Option<f64> {
        self.eps.or_else(|| self.eps_schedule.as_ref().and_then(|s| s.last().copied()))
    }

    pub fn problem_spec(&self, model: Arc<TrussModel>) -> Result<ProblemSpec> {
        let constraint = self.constraint.unwrap_or(self.problem.default_constraint());
        let eps = match self.formulation {
            Formulation::Exact => 0.0,
            _ => self
                .effective_eps()
                .ok_or_else(|| invalid("eps", "required for eps formulations"))?,
        };
        ProblemSpec::new(self.problem, model, self.volume, constraint, self.formulation, eps)
    }
}
