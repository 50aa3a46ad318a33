//! Scenario documents and the built-in studies.
//!
//! A scenario is a JSON document:
//!
//! ```json
//! {
//!   "name": "convex",
//!   "plant": { "A": [[-1.3, -0.3], [-1.4, -0.5]], "B": [[1, 0], [0, 1]] },
//!   "problem": {
//!     "phi": { "separable": { "constant": 0, "terms": [
//!       { "index": 0, "coef": 1, "center": -1.2, "power": 1 },
//!       { "index": 1, "coef": 1, "center": 1.0, "power": 1 } ] } },
//!     "h": { "quadratic": { "constant": 1, "linear": [-1, -1], "matrix": [[0, 0], [0, 0]] } },
//!     "b": { "separable": { "constant": 12, "terms": [] } }
//!   },
//!   "params": { "epsilon": 0.05, "alpha": 5, "gamma": 5, "beta": 1 },
//!   "sim": { "dt": 0.001, "t_final": 30 },
//!   "ics": [ { "x": [1.55, -0.25], "u": [0, 0] } ],
//!   "regularization": null
//! }
//! ```
//!
//! A `quadratic` form is `c + gᵀx + xᵀQx`; a `separable` form is
//! `c + Σ coef · (x[index]^power − center)²`. `phi` and `h` act on the state,
//! `b` on the input. Unknown keys are rejected everywhere.

use std::path::Path;
use std::sync::Arc;

use safeflow_core::analysis::{classify_equilibrium, regularize, Classification};
use safeflow_core::controller::ControllerParams;
use safeflow_core::hocbf::{build_chain, detect_relative_degree, BarrierChain};
use safeflow_core::model::{
    make_linear_plant, PlantModel, ProblemSpec, Quadratic, Regularization, ScalarField, Separable, SeparableTerm,
};
use safeflow_core::sim::{integrate, RhsKind, SimConfig, Trajectory};
use safeflow_core::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SafeflowError};

pub const BUILTIN_NAMES: &[&str] = &["convex", "nonconvex", "item3-study", "spurious", "spurious-regularized"];

/// Deepest relative degree probed when a document does not state one.
const MAX_DETECTED_DEGREE: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDoc {
    pub name: String,
    pub plant: PlantDoc,
    pub problem: ProblemDoc,
    pub params: ControllerParams,
    #[serde(default)]
    pub sim: SimConfig,
    #[serde(default)]
    pub ics: Vec<InitialCondition>,
    #[serde(default)]
    pub regularization: Option<Regularization>,
    #[serde(default)]
    pub expectations: Option<Expectations>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantDoc {
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemDoc {
    pub phi: FormDoc,
    pub h: FormDoc,
    pub b: FormDoc,
    /// Detected from the initial conditions when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relative_degree: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FormDoc {
    Quadratic(QuadraticDoc),
    Separable(SeparableDoc),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadraticDoc {
    pub constant: f64,
    pub linear: Vec<f64>,
    pub matrix: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeparableDoc {
    pub constant: f64,
    pub terms: Vec<SeparableTerm>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialCondition {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
}

impl InitialCondition {
    pub fn new(x: &[f64], u: &[f64]) -> Self {
        InitialCondition { x: x.to_vec(), u: u.to_vec() }
    }

    pub fn state(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.x)
    }

    pub fn input(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.u)
    }
}

/// Equilibria the closed loop is expected to reach, in state coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expectations {
    pub equilibria: Vec<Vec<f64>>,
    pub tolerance: f64,
}

fn matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if nrows == 0 || ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
        return Err(safeflow_core::Error::Dimension(format!("{what} must be a non-empty rectangular matrix")).into());
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

fn build_form(form: &FormDoc, dim: usize, what: &str) -> Result<Arc<dyn ScalarField>> {
    Ok(match form {
        FormDoc::Quadratic(q) => {
            if q.linear.len() != dim {
                return Err(safeflow_core::Error::Dimension(format!(
                    "{what}: linear term has length {}, expected {dim}",
                    q.linear.len()
                ))
                .into());
            }
            let m = matrix(&q.matrix, what)?;
            Arc::new(Quadratic::new(q.constant, DVector::from_column_slice(&q.linear), m)?)
        }
        FormDoc::Separable(s) => Arc::new(Separable::new(dim, s.constant, s.terms.clone())?),
    })
}

/// A fully constructed scenario. The document stays the source of truth; the
/// model objects are rebuilt whenever it changes.
#[derive(Debug, Clone)]
pub struct Scenario {
    doc: ScenarioDoc,
    plant: PlantModel,
    problem: ProblemSpec,
    chain: BarrierChain,
}

impl Scenario {
    pub fn from_doc(doc: ScenarioDoc) -> Result<Self> {
        let a = matrix(&doc.plant.a, "A")?;
        let b = matrix(&doc.plant.b, "B")?;
        let plant = make_linear_plant(a, b)?;
        let (n, m) = (plant.state_dim(), plant.input_dim());
        let phi = build_form(&doc.problem.phi, n, "phi")?;
        let h = build_form(&doc.problem.h, n, "h")?;
        let bf = build_form(&doc.problem.b, m, "b")?;
        let mut problem = ProblemSpec::new(phi, h, bf)?;
        problem.check_plant(&plant)?;
        if let Some(Regularization { p, margin }) = doc.regularization {
            problem = regularize(&problem, p, margin)?;
        }
        doc.params.validate()?;
        doc.sim.validate()?;
        for ic in &doc.ics {
            if ic.x.len() != n || ic.u.len() != m {
                return Err(safeflow_core::Error::Dimension(format!(
                    "initial condition has dimensions {} x {}, plant expects {n} x {m}",
                    ic.x.len(),
                    ic.u.len()
                ))
                .into());
            }
        }
        let r = match doc.problem.relative_degree {
            Some(r) => r,
            None => {
                let mut samples: Vec<_> = doc.ics.iter().map(|ic| (ic.state(), ic.input())).collect();
                if samples.is_empty() {
                    samples.push((DVector::from_element(n, 0.1), DVector::from_element(m, 0.1)));
                }
                detect_relative_degree(&plant, &problem, doc.params.beta, MAX_DETECTED_DEGREE, &samples)?.r
            }
        };
        let chain = build_chain(&plant, &problem, doc.params.beta, r)?;
        Ok(Scenario { doc, plant, problem, chain })
    }

    pub fn doc(&self) -> &ScenarioDoc {
        &self.doc
    }

    pub fn name(&self) -> &str {
        &self.doc.name
    }

    pub fn plant(&self) -> &PlantModel {
        &self.plant
    }

    pub fn problem(&self) -> &ProblemSpec {
        &self.problem
    }

    pub fn chain(&self) -> &BarrierChain {
        &self.chain
    }

    pub fn params(&self) -> &ControllerParams {
        &self.doc.params
    }

    pub fn sim(&self) -> &SimConfig {
        &self.doc.sim
    }

    pub fn ics(&self) -> &[InitialCondition] {
        &self.doc.ics
    }

    pub fn expectations(&self) -> Option<&Expectations> {
        self.doc.expectations.as_ref()
    }

    /// Applies `edit` to the document and rebuilds.
    pub fn modified(&self, edit: impl FnOnce(&mut ScenarioDoc)) -> Result<Self> {
        let mut doc = self.doc.clone();
        edit(&mut doc);
        Scenario::from_doc(doc)
    }

    pub fn with_params(&self, params: ControllerParams) -> Result<Self> {
        self.modified(|d| d.params = params)
    }

    pub fn with_sim(&self, sim: SimConfig) -> Result<Self> {
        self.modified(|d| d.sim = sim)
    }

    pub fn with_ics(&self, ics: Vec<InitialCondition>) -> Result<Self> {
        self.modified(|d| d.ics = ics)
    }

    pub fn with_regularization(&self, reg: Option<Regularization>) -> Result<Self> {
        self.modified(|d| d.regularization = reg)
    }

    /// `(x, u)` lies in every `Sᵢ` and satisfies `b(u) ≥ 0`.
    pub fn is_safe(&self, ic: &InitialCondition) -> bool {
        self.safety_margin(ic) >= 0.0
    }

    /// Smallest of `b(u)` and the chain levels at `(x, u)`.
    pub fn safety_margin(&self, ic: &InitialCondition) -> f64 {
        let (x, u) = (ic.state(), ic.input());
        self.chain.eval_chain(&x, &u).into_iter().fold(self.problem.b.value(&u), f64::min)
    }

    pub fn run(&self, kind: RhsKind, ic: &InitialCondition) -> Trajectory {
        self.run_with(kind, ic, &self.doc.sim)
    }

    pub fn run_with(&self, kind: RhsKind, ic: &InitialCondition, cfg: &SimConfig) -> Trajectory {
        integrate(&self.plant, &self.problem, &self.chain, &self.doc.params, kind, &ic.state(), &ic.input(), cfg)
    }

    /// Equilibrium, KKT and equivalence diagnostics at `(x, u)`.
    pub fn classify(&self, x: &[f64], u: &[f64]) -> Result<Classification> {
        let (n, m) = (self.plant.state_dim(), self.plant.input_dim());
        if x.len() != n || u.len() != m {
            return Err(safeflow_core::Error::Dimension(format!(
                "point has dimensions {} x {}, plant expects {n} x {m}",
                x.len(),
                u.len()
            ))
            .into());
        }
        let (x, u) = (DVector::from_column_slice(x), DVector::from_column_slice(u));
        Ok(classify_equilibrium(&self.plant, &self.problem, &self.chain, &self.doc.params, &x, &u)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.doc).expect("scenario documents always serialize")
    }
}

pub fn parse_scenario(text: &str, origin: &str) -> Result<Scenario> {
    let doc: ScenarioDoc =
        serde_json::from_str(text).map_err(|e| SafeflowError::Parse { path: origin.to_string(), message: e.to_string() })?;
    Scenario::from_doc(doc)
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path).map_err(|source| SafeflowError::Io { path: path.to_path_buf(), source })?;
    parse_scenario(&text, &path.display().to_string())
}

/// A built-in name, `item3-study:<u*>`, or a path to a scenario file.
pub fn resolve(reference: &str) -> Result<Scenario> {
    match builtin(reference) {
        Err(SafeflowError::UnknownScenario(_)) if Path::new(reference).exists() => load_scenario(Path::new(reference)),
        other => other,
    }
}

pub fn builtin(name: &str) -> Result<Scenario> {
    match name {
        "convex" => convex(),
        "nonconvex" => nonconvex(),
        "item3-study" => item3_study(1.4),
        "spurious" => spurious(false),
        "spurious-regularized" => spurious(true),
        other => match other.strip_prefix("item3-study:").map(str::parse::<f64>) {
            Some(Ok(u_star)) => item3_study(u_star),
            _ => Err(SafeflowError::UnknownScenario(name.to_string())),
        },
    }
}

fn term(index: usize, coef: f64, center: f64, power: u32) -> SeparableTerm {
    SeparableTerm { index, coef, center, power }
}

fn separable(constant: f64, terms: Vec<SeparableTerm>) -> FormDoc {
    FormDoc::Separable(SeparableDoc { constant, terms })
}

fn rows(data: &[&[f64]]) -> Vec<Vec<f64>> {
    data.iter().map(|r| r.to_vec()).collect()
}

/// Evenly spread subset of a lattice over `x_box × u_box`, keeping only points
/// whose safety margin is at least `margin`. Cell centres are used so no point
/// lies on the box edges.
pub fn safe_lattice(
    scenario: &Scenario,
    x_box: &[(f64, f64)],
    u_box: &[(f64, f64)],
    per_axis: usize,
    count: usize,
    margin: f64,
) -> Vec<InitialCondition> {
    let axes: Vec<(f64, f64)> = x_box.iter().chain(u_box).copied().collect();
    let total = per_axis.pow(axes.len() as u32);
    let mut safe = Vec::new();
    for mut k in 0..total {
        let coords: Vec<f64> = axes
            .iter()
            .map(|&(lo, hi)| {
                let i = k % per_axis;
                k /= per_axis;
                lo + (i as f64 + 0.5) * (hi - lo) / per_axis as f64
            })
            .collect();
        let ic = InitialCondition::new(&coords[..x_box.len()], &coords[x_box.len()..]);
        if scenario.safety_margin(&ic) >= margin {
            safe.push(ic);
        }
    }
    if safe.len() <= count {
        return safe;
    }
    (0..count).map(|k| safe[k * safe.len() / count].clone()).collect()
}

const GRID_SIZE: usize = 20;
const GRID_MARGIN: f64 = 0.02;

fn with_grid(
    doc: ScenarioDoc,
    named: Vec<InitialCondition>,
    x_box: &[(f64, f64)],
    u_box: &[(f64, f64)],
    per_axis: usize,
) -> Result<Scenario> {
    let base = Scenario::from_doc(ScenarioDoc { ics: named.clone(), ..doc })?;
    let grid = safe_lattice(&base, x_box, u_box, per_axis, GRID_SIZE, GRID_MARGIN);
    base.with_ics(named.into_iter().chain(grid).collect())
}

fn paper_plant() -> PlantDoc {
    PlantDoc { a: rows(&[&[-1.3, -0.3], &[-1.4, -0.5]]), b: rows(&[&[1.0, 0.0], &[0.0, 1.0]]) }
}

/// `1 − (x₁ − 0.2)²/4 − (x₂ − 0.3)²`, shared by the convex and nonconvex studies.
fn ellipse_constraint() -> FormDoc {
    separable(1.0, vec![term(0, -0.25, 0.2, 1), term(1, -1.0, 0.3, 1)])
}

fn convex() -> Result<Scenario> {
    let doc = ScenarioDoc {
        name: "convex".into(),
        plant: paper_plant(),
        problem: ProblemDoc {
            phi: separable(0.0, vec![term(0, 1.0, -1.2, 1), term(1, 1.0, 1.0, 1)]),
            h: ellipse_constraint(),
            b: separable(12.0, vec![term(0, -1.0, 0.0, 1), term(1, -1.0, 0.0, 1)]),
            relative_degree: Some(1),
        },
        params: ControllerParams { epsilon: 0.03, alpha: 5.0, gamma: 20.0, beta: 1.0 },
        sim: SimConfig { dt: 1e-3, t_final: 1500.0, record_stride: 100, settle_tol: 1e-7, settle_window: 1.0 },
        ics: Vec::new(),
        regularization: None,
        expectations: Some(Expectations { equilibria: vec![vec![-1.2, 1.0]], tolerance: 0.02 }),
    };
    with_grid(
        doc,
        vec![InitialCondition::new(&[1.55, -0.25], &[0.0, 0.0])],
        &[(-1.8, 2.2), (-0.7, 1.3)],
        &[(-3.4, 3.4), (-3.4, 3.4)],
        6,
    )
}

fn nonconvex() -> Result<Scenario> {
    let doc = ScenarioDoc {
        name: "nonconvex".into(),
        plant: paper_plant(),
        problem: ProblemDoc {
            phi: separable(0.0, vec![term(0, 1.0, 2.25, 2), term(1, 1.0, 1.0, 2)]),
            h: ellipse_constraint(),
            b: separable(8.0, vec![term(0, 1.0, 0.0, 1), term(1, -1.0, 0.0, 1)]),
            relative_degree: Some(1),
        },
        params: ControllerParams { epsilon: 0.008, alpha: 20.0, gamma: 50.0, beta: 1.0 },
        sim: SimConfig { dt: 2e-3, t_final: 1500.0, record_stride: 50, settle_tol: 1e-7, settle_window: 1.0 },
        ics: Vec::new(),
        regularization: None,
        expectations: Some(Expectations { equilibria: vec![vec![1.5, 1.0], vec![-1.49, 0.8]], tolerance: 0.03 }),
    };
    with_grid(
        doc,
        vec![InitialCondition::new(&[0.0, -0.3], &[0.0, 0.0]), InitialCondition::new(&[1.55, -0.25], &[0.0, 0.0])],
        &[(-1.8, 2.2), (-0.7, 1.3)],
        &[(-3.0, 3.0), (-3.0, 3.0)],
        6,
    )
}

/// Cascade plant with `Φ = ‖x − (u*, u*)‖²`, whose minimizer is `((u*, u*), u*)`.
pub fn item3_study(u_star: f64) -> Result<Scenario> {
    let name = if u_star == 1.4 { "item3-study".to_string() } else { format!("item3-study:{u_star}") };
    let doc = ScenarioDoc {
        name,
        plant: PlantDoc { a: rows(&[&[-1.0, 1.0], &[0.0, -1.0]]), b: rows(&[&[0.0], &[1.0]]) },
        problem: ProblemDoc {
            phi: separable(0.0, vec![term(0, 1.0, u_star, 1), term(1, 1.0, u_star, 1)]),
            h: separable(4.0, vec![term(0, -1.0, 0.0, 1), term(1, -1.0, 0.0, 1)]),
            b: separable(4.0, vec![term(0, -1.0, 0.0, 1)]),
            relative_degree: Some(1),
        },
        params: ControllerParams { epsilon: 0.5, alpha: 5.0, gamma: 5.0, beta: 1.0 },
        sim: SimConfig { dt: 0.01, t_final: 300.0, record_stride: 10, settle_tol: 1e-7, settle_window: 1.0 },
        ics: Vec::new(),
        regularization: None,
        expectations: Some(Expectations { equilibria: vec![vec![u_star, u_star]], tolerance: 0.02 }),
    };
    with_grid(doc, Vec::new(), &[(-2.0, 2.0), (-2.0, 2.0)], &[(-2.0, 2.0)], 9)
}

fn spurious(regularized: bool) -> Result<Scenario> {
    let (name, regularization, target) = if regularized {
        ("spurious-regularized", Some(Regularization { p: 2.0, margin: 0.8 }), vec![0.48, 0.48])
    } else {
        ("spurious", None, vec![1.0, 0.0])
    };
    let doc = ScenarioDoc {
        name: name.into(),
        plant: PlantDoc { a: rows(&[&[-2.0, 0.0], &[0.0, -4.0]]), b: rows(&[&[1.0, 0.0], &[0.0, 1.0]]) },
        problem: ProblemDoc {
            phi: separable(0.0, vec![term(0, 1.0, 2.0, 1), term(1, 1.0, 2.0, 1)]),
            h: FormDoc::Quadratic(QuadraticDoc {
                constant: 1.0,
                linear: vec![-1.0, -1.0],
                matrix: rows(&[&[0.0, 0.0], &[0.0, 0.0]]),
            }),
            b: separable(25.0, vec![term(0, -1.0, 0.0, 1), term(1, -1.0, 0.0, 1)]),
            relative_degree: Some(1),
        },
        params: ControllerParams { epsilon: 0.5, alpha: 5.0, gamma: 5.0, beta: 1.0 },
        sim: SimConfig { dt: 0.01, t_final: 300.0, record_stride: 10, settle_tol: 1e-7, settle_window: 1.0 },
        ics: Vec::new(),
        regularization,
        expectations: Some(Expectations { equilibria: vec![target], tolerance: 0.02 }),
    };
    with_grid(doc, Vec::new(), &[(-1.5, 1.0), (-1.5, 1.0)], &[(-4.0, 4.0), (-4.0, 4.0)], 6)
}
