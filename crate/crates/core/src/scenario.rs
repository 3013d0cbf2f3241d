//! JSON scenario configuration: schema, validation, and construction of the
//! numeric run inputs. Unknown keys are rejected and reported with the
//! path to the offending key.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::Deserialize;

use crate::charges::{charge_columns, fit_precession, ChargeSeries};
use crate::expr::{Context, Expr};
use crate::forms::Chart;
use crate::model::RepKind;
use crate::simulate::{
    constants_atom_map, Branch, Grid, PacketKind, PhysConsts, SimError, TermMask,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Representation {
    Lorentz,
    Galilean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    CrankNicolsonDirac,
    SplitOperatorPauli,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PacketName {
    Gaussian,
    PlaneWave,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BranchName {
    Positive,
    Negative,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n: Vec<usize>,
    pub length: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct FieldsConfig {
    #[serde(rename = "A0")]
    pub a0: Option<String>,
    #[serde(rename = "A1")]
    pub a1: Option<String>,
    #[serde(rename = "A2")]
    pub a2: Option<String>,
    #[serde(rename = "A3")]
    pub a3: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    pub kind: PacketName,
    pub center: Option<Vec<f64>>,
    pub width: Option<f64>,
    /// Momentum kick for gaussian packets; each component must be
    /// commensurate with the periodic box.
    pub momentum: Option<Vec<f64>>,
    /// Spinor weights as [re, im] pairs.
    pub weights: Option<Vec<[f64; 2]>>,
    /// Plane-wave wavenumbers, either raw (`k`) or as integer mode counts
    /// (`mode`, mapped to 2 pi mode / length). Exactly one of the two.
    pub k: Option<Vec<f64>>,
    pub mode: Option<Vec<i64>>,
    pub branch: Option<BranchName>,
}

fn default_solver_tol() -> f64 {
    1e-12
}

fn default_record_every() -> usize {
    1
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolveConfig {
    pub dt: f64,
    pub steps: usize,
    pub scheme: Scheme,
    #[serde(default = "default_solver_tol")]
    pub solver_tol: f64,
    #[serde(default = "default_record_every")]
    pub record_every: usize,
    /// Debug-only selection of split-Hamiltonian groups; omitting it keeps
    /// every term. Names: "kinetic", "scalar-potential", "zeeman".
    pub term_mask: Option<Vec<String>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub csv: bool,
    pub snapshots: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { csv: true, snapshots: false }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrecessionCheck {
    pub rel_tol: f64,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChecksConfig {
    /// Relative drift bounds per charge column; exceeding any fails the run.
    pub max_drift: BTreeMap<String, f64>,
    /// Fit the in-plane spin rotation frequency against |e B^3(0)/m|.
    pub precession: Option<PrecessionCheck>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeriveSection {
    /// Restrict the derivation report to these generator labels; empty
    /// means all built-in generators.
    pub generators: Vec<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub representation: Representation,
    #[serde(default)]
    pub constants: BTreeMap<String, f64>,
    pub grid: GridConfig,
    #[serde(default)]
    pub fields: FieldsConfig,
    pub initial: InitialConfig,
    pub evolve: EvolveConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub checks: ChecksConfig,
    #[serde(default)]
    pub derive: DeriveSection,
}

/// Evolution parameters extracted for the run loop.
#[derive(Debug, Clone, Copy)]
pub struct EvolveParams {
    pub dt: f64,
    pub steps: usize,
    pub solver_tol: f64,
    pub record_every: usize,
}

/// Outcome of one declared check after a run.
#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub label: String,
    pub passed: bool,
    pub detail: String,
}

fn config_err(path: &str, msg: impl Into<String>) -> SimError {
    SimError::Config { path: path.into(), msg: msg.into() }
}

impl ScenarioConfig {
    /// Parses and validates a JSON scenario; errors carry the path to the
    /// offending key.
    pub fn from_str(text: &str) -> Result<ScenarioConfig, SimError> {
        let mut de = serde_json::Deserializer::from_str(text);
        let config: ScenarioConfig =
            serde_path_to_error::deserialize(&mut de).map_err(|e| SimError::Config {
                path: e.path().to_string(),
                msg: e.inner().to_string(),
            })?;
        config.validate()?;
        Ok(config)
    }

    pub fn rep_kind(&self) -> RepKind {
        match self.representation {
            Representation::Lorentz => RepKind::Lorentz,
            Representation::Galilean => RepKind::Galilean,
        }
    }

    fn ncomp(&self) -> usize {
        match self.representation {
            Representation::Lorentz => 4,
            Representation::Galilean => 2,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let dim = self.grid.n.len();
        if dim == 0 || dim > 2 {
            return Err(config_err("grid.n", "one or two axes required"));
        }
        if self.grid.length.len() != dim {
            return Err(config_err("grid.length", "must list one length per axis"));
        }
        match (self.representation, self.evolve.scheme) {
            (Representation::Lorentz, Scheme::CrankNicolsonDirac) => {
                if dim != 1 {
                    return Err(config_err(
                        "grid.n",
                        "the crank-nicolson-dirac scheme runs on exactly one axis",
                    ));
                }
            }
            (Representation::Galilean, Scheme::SplitOperatorPauli) => {
                if dim != 2 {
                    return Err(config_err(
                        "grid.n",
                        "the split-operator-pauli scheme runs on exactly two axes",
                    ));
                }
            }
            (_, scheme) => {
                return Err(config_err(
                    "evolve.scheme",
                    format!("{scheme:?} does not match the declared representation"),
                ));
            }
        }
        if !(self.evolve.dt > 0.0 && self.evolve.dt.is_finite()) {
            return Err(config_err("evolve.dt", "must be a positive finite number"));
        }
        if !(self.evolve.solver_tol > 0.0 && self.evolve.solver_tol <= 1e-12) {
            return Err(config_err("evolve.solver_tol", "must be in (0, 1e-12]"));
        }
        if self.evolve.record_every == 0 {
            return Err(config_err("evolve.record_every", "must be at least 1"));
        }
        if let Some(mask) = &self.evolve.term_mask {
            if self.representation != Representation::Galilean {
                return Err(config_err(
                    "evolve.term_mask",
                    "term masking exists only for the split-operator scheme",
                ));
            }
            for name in mask {
                if !["kinetic", "scalar-potential", "zeeman"].contains(&name.as_str()) {
                    return Err(config_err(
                        "evolve.term_mask",
                        format!("unknown term `{name}`"),
                    ));
                }
            }
        }
        for (name, value) in &self.constants {
            if !value.is_finite() {
                return Err(config_err(
                    &format!("constants.{name}"),
                    "must be finite",
                ));
            }
        }
        let consts = self.phys_consts()?;
        if consts.hbar <= 0.0 || consts.m <= 0.0 || consts.c <= 0.0 {
            return Err(config_err("constants", "hbar, m, c must be positive"));
        }
        self.validate_initial(dim)?;
        for key in self.checks.max_drift.keys() {
            if !charge_columns(dim).contains(&key.as_str()) {
                return Err(config_err(
                    &format!("checks.max_drift.{key}"),
                    format!("not a charge column; columns are {:?}", charge_columns(dim)),
                ));
            }
        }
        if self.checks.precession.is_some() && self.representation != Representation::Galilean {
            return Err(config_err(
                "checks.precession",
                "the precession fit needs the two-component representation",
            ));
        }
        Ok(())
    }

    fn validate_initial(&self, dim: usize) -> Result<(), SimError> {
        let init = &self.initial;
        match init.kind {
            PacketName::Gaussian => {
                if init.width.is_none() {
                    return Err(config_err("initial.width", "required for gaussian packets"));
                }
                if init.k.is_some() || init.mode.is_some() || init.branch.is_some() {
                    return Err(config_err(
                        "initial",
                        "k/mode/branch apply only to plane-wave packets",
                    ));
                }
            }
            PacketName::PlaneWave => {
                match (&init.k, &init.mode) {
                    (Some(_), Some(_)) => {
                        return Err(config_err(
                            "initial",
                            "give the wavenumber as `k` or `mode`, not both",
                        ))
                    }
                    (None, None) => {
                        return Err(config_err(
                            "initial",
                            "plane-wave packets need `k` or `mode`",
                        ))
                    }
                    _ => {}
                }
                if init.width.is_some() || init.momentum.is_some() || init.center.is_some() {
                    return Err(config_err(
                        "initial",
                        "center/width/momentum apply only to gaussian packets",
                    ));
                }
                if self.representation == Representation::Lorentz && init.weights.is_some() {
                    return Err(config_err(
                        "initial.weights",
                        "four-component plane waves use the exact symbol-matrix eigenvector",
                    ));
                }
            }
        }
        for (key, len) in [
            ("initial.center", init.center.as_ref().map(Vec::len)),
            ("initial.momentum", init.momentum.as_ref().map(Vec::len)),
            ("initial.k", init.k.as_ref().map(Vec::len)),
            ("initial.mode", init.mode.as_ref().map(Vec::len)),
        ] {
            if let Some(len) = len {
                if len != dim {
                    return Err(config_err(key, format!("must list {dim} component(s)")));
                }
            }
        }
        if let Some(w) = &init.weights {
            if w.len() != self.ncomp() {
                return Err(config_err(
                    "initial.weights",
                    format!("must list {} [re, im] pairs", self.ncomp()),
                ));
            }
        }
        Ok(())
    }

    /// Physical constants with defaults hbar = m = c = e = 1, overridable
    /// through the constants section.
    pub fn merged_constants(&self) -> BTreeMap<String, f64> {
        let mut map = BTreeMap::new();
        for name in ["hbar", "m", "c", "e"] {
            map.insert(name.to_string(), 1.0);
        }
        for (name, value) in &self.constants {
            map.insert(name.clone(), *value);
        }
        map
    }

    pub fn phys_consts(&self) -> Result<PhysConsts, SimError> {
        let merged = self.merged_constants();
        Ok(PhysConsts {
            hbar: merged["hbar"],
            m: merged["m"],
            c: merged["c"],
            e: merged["e"],
        })
    }

    pub fn build_grid(&self) -> Result<Grid, SimError> {
        match self.grid.n.len() {
            1 => Grid::line(self.grid.n[0], self.grid.length[0]),
            2 => Grid::plane(
                [self.grid.n[0], self.grid.n[1]],
                [self.grid.length[0], self.grid.length[1]],
            ),
            _ => Err(SimError::Grid("one or two axes required".into())),
        }
    }

    /// Parses the four potential expressions. Strict mode requires every
    /// identifier to be a coordinate, a built-in constant, or a name from
    /// the constants section; otherwise unknown names become parameters.
    pub fn field_exprs(&self, strict: bool) -> Result<[Expr; 4], SimError> {
        let mut ctx = Context::standard();
        for name in self.constants.keys() {
            ctx.parameter(name).map_err(|e| SimError::Config {
                path: format!("constants.{name}"),
                msg: e.to_string(),
            })?;
        }
        if strict {
            ctx = ctx.strict();
        }
        let texts = [&self.fields.a0, &self.fields.a1, &self.fields.a2, &self.fields.a3];
        let mut out: [Expr; 4] = std::array::from_fn(|_| Expr::zero());
        for (mu, text) in texts.into_iter().enumerate() {
            if let Some(text) = text {
                out[mu] = Expr::parse(text, &mut ctx).map_err(|e| SimError::Config {
                    path: format!("fields.A{mu}"),
                    msg: e.to_string(),
                })?;
            }
        }
        Ok(out)
    }

    pub fn term_mask(&self) -> Result<TermMask, SimError> {
        match &self.evolve.term_mask {
            None => Ok(TermMask::default()),
            Some(names) => Ok(TermMask {
                kinetic: names.iter().any(|n| n == "kinetic"),
                scalar_potential: names.iter().any(|n| n == "scalar-potential"),
                zeeman: names.iter().any(|n| n == "zeeman"),
            }),
        }
    }

    pub fn packet_kind(&self, grid: Grid) -> Result<PacketKind, SimError> {
        let init = &self.initial;
        let weights = init.weights.as_ref().map(|w| {
            w.iter().map(|[re, im]| Complex64::new(*re, *im)).collect::<Vec<_>>()
        });
        match init.kind {
            PacketName::Gaussian => Ok(PacketKind::Gaussian {
                center: init.center.clone().unwrap_or_else(|| vec![0.0; grid.dim]),
                width: init.width.expect("validated"),
                kick: init.momentum.clone().unwrap_or_else(|| vec![0.0; grid.dim]),
                weights,
            }),
            PacketName::PlaneWave => {
                let k = match (&init.k, &init.mode) {
                    (Some(k), None) => k.clone(),
                    (None, Some(modes)) => modes
                        .iter()
                        .enumerate()
                        .map(|(axis, m)| {
                            2.0 * std::f64::consts::PI * *m as f64 / grid.length[axis]
                        })
                        .collect(),
                    _ => unreachable!("validated"),
                };
                let branch = match init.branch.unwrap_or(BranchName::Positive) {
                    BranchName::Positive => Branch::Positive,
                    BranchName::Negative => Branch::Negative,
                };
                Ok(PacketKind::PlaneWave { k, branch, weights })
            }
        }
    }

    pub fn evolve_params(&self) -> EvolveParams {
        EvolveParams {
            dt: self.evolve.dt,
            steps: self.evolve.steps,
            solver_tol: self.evolve.solver_tol,
            record_every: self.evolve.record_every,
        }
    }

    pub fn wants_spin_tracking(&self) -> bool {
        self.representation == Representation::Galilean && self.checks.precession.is_some()
    }

    /// The precession oracle |e B^3(center)/m| from the symbolic fields.
    pub fn expected_precession(&self) -> Result<f64, SimError> {
        let exprs = self.field_exprs(false)?;
        let chart = Chart;
        let b3 = exprs[2]
            .differentiate(&chart.coord_symbol(1))
            .sub(&exprs[1].differentiate(&chart.coord_symbol(2)));
        let mut map = constants_atom_map(&self.merged_constants());
        for idx in [1u8, 2] {
            map.insert(
                crate::expr::Atom::Sym(chart.coord_symbol(idx)),
                Complex64::default(),
            );
        }
        let b = b3.eval(&map).map_err(SimError::from)?;
        let consts = self.phys_consts()?;
        Ok((consts.e * b.re / consts.m).abs())
    }

    /// Evaluates the declared checks against a recorded series.
    pub fn evaluate_checks(&self, series: &ChargeSeries) -> Result<Vec<CheckOutcome>, SimError> {
        let mut out = Vec::new();
        let drifts: BTreeMap<&str, f64> = series.drift_report().into_iter().collect();
        for (name, bound) in &self.checks.max_drift {
            let drift = drifts[name.as_str()];
            out.push(CheckOutcome {
                label: format!("max_drift.{name}"),
                passed: drift <= *bound,
                detail: format!("relative drift {drift:.3e}, bound {bound:.3e}"),
            });
        }
        if let Some(p) = &self.checks.precession {
            let expected = self.expected_precession()?;
            let fit = series
                .spin_xy
                .as_ref()
                .and_then(|track| fit_precession(&series.times, track));
            let outcome = match fit {
                Some(freq) if expected > 0.0 => {
                    let rel = (freq - expected).abs() / expected;
                    CheckOutcome {
                        label: "precession".into(),
                        passed: rel <= p.rel_tol,
                        detail: format!(
                            "fit {freq:.9e}, oracle {expected:.9e}, relative error {rel:.3e}"
                        ),
                    }
                }
                _ => CheckOutcome {
                    label: "precession".into(),
                    passed: false,
                    detail: "spin track degenerate or oracle frequency zero".into(),
                },
            };
            out.push(outcome);
        }
        Ok(out)
    }
}

/// The canonical reproduction pack, compiled into the library.
pub fn bundled_names() -> &'static [&'static str] {
    &[
        "free_dirac_1d",
        "dirac_const_potential",
        "pauli_free_2d",
        "pauli_symmetric_gauge",
        "zeeman_precession",
    ]
}

pub fn bundled(name: &str) -> Option<&'static str> {
    match name {
        "free_dirac_1d" => Some(include_str!("../scenarios/free_dirac_1d.json")),
        "dirac_const_potential" => {
            Some(include_str!("../scenarios/dirac_const_potential.json"))
        }
        "pauli_free_2d" => Some(include_str!("../scenarios/pauli_free_2d.json")),
        "pauli_symmetric_gauge" => {
            Some(include_str!("../scenarios/pauli_symmetric_gauge.json"))
        }
        "zeeman_precession" => Some(include_str!("../scenarios/zeeman_precession.json")),
        _ => None,
    }
}
