//! Periodic-grid integrators for the derived evolution equations: a
//! Crank-Nicolson scheme for the 1+1D four-component system and a Strang
//! split-operator scheme for the 2+1D two-component reduction.
//!
//! Everything is deterministic: reductions run in index order, spectral
//! transforms are planned once, and no threading is used.

pub mod dirac;
pub mod pauli;
pub mod spectral;

use std::collections::BTreeMap;

use num_complex::Complex64;
use thiserror::Error;

use crate::charges::{self, ChargeSeries};
use crate::expr::{Atom, Expr, ExprError, Symbol};
use crate::forms::Chart;
use crate::model::RepKind;
use crate::scenario::ScenarioConfig;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("grid: {0}")]
    Grid(String),
    #[error("config `{path}`: {msg}")]
    Config { path: String, msg: String },
    #[error("axis {axis}: wavenumber {k} is not commensurate with the periodic length")]
    NonCommensurate { axis: usize, k: f64 },
    #[error("packet width {width} is below four grid spacings (spacing {spacing})")]
    WidthBelowFourSpacings { width: f64, spacing: f64 },
    #[error("linear solver stalled at step {step} (residual {residual:.3e})")]
    SolverDiverged { step: usize, residual: f64 },
    #[error("non-finite field value detected at step {step}")]
    NonFinite { step: usize },
    #[error("field `{key}`: {msg}")]
    Field { key: String, msg: String },
    #[error(transparent)]
    Expr(#[from] ExprError),
}

/// Numeric values of the physical constants for one run.
#[derive(Debug, Clone, Copy)]
pub struct PhysConsts {
    pub hbar: f64,
    pub m: f64,
    pub c: f64,
    pub e: f64,
}

/// Periodic uniform grid, one or two active axes. Grid axis `a` carries
/// chart coordinate `x{a+1}`; coordinates are measured from the domain
/// center, so `coord` ranges over [-L/2, L/2).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub dim: usize,
    pub n: [usize; 2],
    pub length: [f64; 2],
}

impl Grid {
    pub fn line(n: usize, length: f64) -> Result<Grid, SimError> {
        let grid = Grid { dim: 1, n: [n, 1], length: [length, 1.0] };
        grid.validate()?;
        Ok(grid)
    }

    pub fn plane(n: [usize; 2], length: [f64; 2]) -> Result<Grid, SimError> {
        let grid = Grid { dim: 2, n, length };
        grid.validate()?;
        Ok(grid)
    }

    fn validate(&self) -> Result<(), SimError> {
        for axis in 0..self.dim {
            let n = self.n[axis];
            if n < 8 || !n.is_power_of_two() {
                return Err(SimError::Grid(format!(
                    "axis {axis}: {n} points; need a power of two >= 8"
                )));
            }
            let l = self.length[axis];
            if !(l.is_finite() && l > 0.0) {
                return Err(SimError::Grid(format!("axis {axis}: invalid length {l}")));
            }
        }
        Ok(())
    }

    pub fn points(&self) -> usize {
        self.n[0] * self.n[1]
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.length[axis] / self.n[axis] as f64
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.dim).map(|a| self.spacing(a)).product()
    }

    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        (i as isize - (self.n[axis] / 2) as isize) as f64 * self.spacing(axis)
    }

    pub fn index(&self, i0: usize, i1: usize) -> usize {
        i0 * self.n[1] + i1
    }
}

/// Multi-component complex field on a grid; component-major storage, points
/// in row-major order within each component.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinorField {
    pub grid: Grid,
    pub comp: Vec<Vec<Complex64>>,
}

impl SpinorField {
    pub fn zero(grid: Grid, ncomp: usize) -> Self {
        SpinorField { grid, comp: vec![vec![Complex64::default(); grid.points()]; ncomp] }
    }

    pub fn ncomp(&self) -> usize {
        self.comp.len()
    }

    pub fn scale(&mut self, s: Complex64) {
        for c in &mut self.comp {
            for v in c.iter_mut() {
                *v *= s;
            }
        }
    }

    /// Inner product including the cell volume, conjugate-linear in `self`.
    pub fn inner(&self, other: &SpinorField) -> Complex64 {
        let mut acc = Complex64::default();
        for (a, b) in self.comp.iter().zip(&other.comp) {
            for (x, y) in a.iter().zip(b) {
                acc += x.conj() * y;
            }
        }
        acc * self.grid.cell_volume()
    }

    pub fn check_finite(&self, step: usize) -> Result<(), SimError> {
        for c in &self.comp {
            for v in c {
                if !v.re.is_finite() || !v.im.is_finite() {
                    return Err(SimError::NonFinite { step });
                }
            }
        }
        Ok(())
    }
}

/// Which groups of the split Hamiltonian act; all on by default. Exists to
/// isolate the spin coupling for the exact precession check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TermMask {
    pub kinetic: bool,
    pub scalar_potential: bool,
    pub zeeman: bool,
}

impl Default for TermMask {
    fn default() -> Self {
        TermMask { kinetic: true, scalar_potential: true, zeeman: true }
    }
}

/// Potentials compiled onto a grid: the symbolic expressions, their point
/// samples, and (in 2D) the derived out-of-plane magnetic field.
#[derive(Debug, Clone)]
pub struct FieldSet {
    pub exprs: [Expr; 4],
    pub samples: [Vec<f64>; 4],
    pub b3: Vec<f64>,
    pub mask: TermMask,
}

/// Constant-name bindings for numeric evaluation; each name is bound under
/// both symbol kinds so parsed parameters and built-in constants resolve.
pub fn constants_atom_map(constants: &BTreeMap<String, f64>) -> BTreeMap<Atom, Complex64> {
    let mut map = BTreeMap::new();
    for (name, value) in constants {
        let v = Complex64::new(*value, 0.0);
        map.insert(Atom::Sym(Symbol::constant(name)), v);
        map.insert(Atom::Sym(Symbol::parameter(name)), v);
    }
    map
}

/// Evaluates a closed-form spatial expression at every grid point.
fn sample_real_expr(
    expr: &Expr,
    grid: Grid,
    base_map: &BTreeMap<Atom, Complex64>,
    key: &str,
) -> Result<Vec<f64>, SimError> {
    let chart = Chart;
    let x1 = Atom::Sym(chart.coord_symbol(1));
    let x2 = Atom::Sym(chart.coord_symbol(2));
    let mut out = vec![0.0; grid.points()];
    let mut map = base_map.clone();
    for i0 in 0..grid.n[0] {
        map.insert(x1.clone(), Complex64::new(grid.coord(0, i0), 0.0));
        for i1 in 0..grid.n[1] {
            map.insert(x2.clone(), Complex64::new(grid.coord(1, i1), 0.0));
            let v = expr.eval(&map).map_err(|e| SimError::Field {
                key: key.into(),
                msg: e.to_string(),
            })?;
            if v.im.abs() > 1e-9 * (1.0 + v.re.abs()) {
                return Err(SimError::Field {
                    key: key.into(),
                    msg: format!("complex value {v} at a grid point; potentials must be real"),
                });
            }
            out[grid.index(i0, i1)] = v.re;
        }
    }
    Ok(out)
}

impl FieldSet {
    pub fn compile(
        exprs: [Expr; 4],
        grid: Grid,
        constants: &BTreeMap<String, f64>,
        mask: TermMask,
    ) -> Result<FieldSet, SimError> {
        let chart = Chart;
        let allowed: &[u8] = if grid.dim == 1 { &[1] } else { &[1, 2] };
        for (mu, expr) in exprs.iter().enumerate() {
            let key = format!("A{mu}");
            for atom in expr.atoms() {
                match atom {
                    Atom::Fn(f) => {
                        return Err(SimError::Field {
                            key,
                            msg: format!(
                                "contains opaque function `{}`; numeric potentials must be closed-form",
                                f.name
                            ),
                        })
                    }
                    Atom::Sym(s) => {
                        if let crate::expr::SymbolKind::Coordinate(idx) = s.kind {
                            if !allowed.contains(&idx) {
                                return Err(SimError::Field {
                                    key,
                                    msg: format!(
                                        "depends on coordinate `{}`; static fields may depend only on the active spatial axes",
                                        s.name
                                    ),
                                });
                            }
                        }
                    }
                }
            }
        }
        let base_map = constants_atom_map(constants);
        let mut samples: [Vec<f64>; 4] = std::array::from_fn(|_| Vec::new());
        for mu in 0..4 {
            samples[mu] = sample_real_expr(&exprs[mu], grid, &base_map, &format!("A{mu}"))?;
        }
        let b3 = if grid.dim == 2 {
            let b3_expr = exprs[2]
                .differentiate(&chart.coord_symbol(1))
                .sub(&exprs[1].differentiate(&chart.coord_symbol(2)));
            sample_real_expr(&b3_expr, grid, &base_map, "B3")?
        } else {
            Vec::new()
        };
        Ok(FieldSet { exprs, samples, b3, mask })
    }
}

/// Energy branch for plane-wave initialization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Branch {
    Positive,
    Negative,
}

#[derive(Debug, Clone)]
pub enum PacketKind {
    Gaussian {
        center: Vec<f64>,
        width: f64,
        kick: Vec<f64>,
        weights: Option<Vec<Complex64>>,
    },
    PlaneWave {
        k: Vec<f64>,
        branch: Branch,
        weights: Option<Vec<Complex64>>,
    },
}

/// Relativistic dispersion E(k) of the four-component system.
pub fn dirac_energy(k: f64, consts: &PhysConsts) -> f64 {
    let mc2 = consts.m * consts.c * consts.c;
    let ck = consts.c * consts.hbar * k;
    (mc2 * mc2 + ck * ck).sqrt()
}

/// Exact eigenvector of the constant-coefficient symbol matrix for wave
/// number `k` along axis 1 (the 1+1D restriction).
pub fn dirac_plane_weights(k: f64, branch: Branch, consts: &PhysConsts) -> [Complex64; 4] {
    let e = dirac_energy(k, consts);
    let mc2 = consts.m * consts.c * consts.c;
    let gamma = consts.c * consts.hbar * k / (e + mc2);
    let z = Complex64::default();
    let one = Complex64::new(1.0, 0.0);
    let g = Complex64::new(gamma, 0.0);
    match branch {
        Branch::Positive => [one, z, z, g],
        Branch::Negative => [z, -g, one, z],
    }
}

fn check_commensurate(k: f64, length: f64, axis: usize) -> Result<(), SimError> {
    if k == 0.0 {
        return Ok(());
    }
    let modes = k * length / (2.0 * std::f64::consts::PI);
    if (modes - modes.round()).abs() > 1e-9 {
        return Err(SimError::NonCommensurate { axis, k });
    }
    Ok(())
}

/// Builds a normalized initial state. Gaussian packets carry an optional
/// momentum kick and spinor weights; plane waves use the exact symbol-matrix
/// eigenvector in the four-component case.
pub fn init_packet(
    grid: Grid,
    rep: RepKind,
    kind: &PacketKind,
    consts: &PhysConsts,
) -> Result<SpinorField, SimError> {
    let ncomp = match rep {
        RepKind::Lorentz => 4,
        RepKind::Galilean => 2,
    };
    let mut state = SpinorField::zero(grid, ncomp);
    match kind {
        PacketKind::Gaussian { center, width, kick, weights } => {
            for axis in 0..grid.dim {
                let spacing = grid.spacing(axis);
                if *width < 4.0 * spacing {
                    return Err(SimError::WidthBelowFourSpacings {
                        width: *width,
                        spacing,
                    });
                }
            }
            for (axis, q) in kick.iter().enumerate() {
                check_commensurate(*q, grid.length[axis], axis)?;
            }
            let w = match weights {
                Some(w) => w.clone(),
                None => default_weights(ncomp),
            };
            let mut envelope = vec![Complex64::default(); grid.points()];
            for i0 in 0..grid.n[0] {
                for i1 in 0..grid.n[1] {
                    let mut r2 = 0.0;
                    let mut phase = 0.0;
                    for axis in 0..grid.dim {
                        let i = if axis == 0 { i0 } else { i1 };
                        let x = grid.coord(axis, i);
                        let c = center.get(axis).copied().unwrap_or(0.0);
                        let q = kick.get(axis).copied().unwrap_or(0.0);
                        r2 += (x - c) * (x - c);
                        phase += q * x;
                    }
                    envelope[grid.index(i0, i1)] = Complex64::new(0.0, phase).exp()
                        * (-r2 / (2.0 * width * width)).exp();
                }
            }
            for (a, wa) in w.iter().enumerate() {
                if wa.norm_sqr() == 0.0 {
                    continue;
                }
                for (dst, src) in state.comp[a].iter_mut().zip(&envelope) {
                    *dst = wa * src;
                }
            }
        }
        PacketKind::PlaneWave { k, branch, weights } => {
            for (axis, kj) in k.iter().enumerate() {
                check_commensurate(*kj, grid.length[axis], axis)?;
            }
            let w = match rep {
                RepKind::Lorentz => {
                    if grid.dim != 1 {
                        return Err(SimError::Grid(
                            "four-component plane waves are defined on the 1-axis grid".into(),
                        ));
                    }
                    dirac_plane_weights(k[0], *branch, consts).to_vec()
                }
                RepKind::Galilean => match weights {
                    Some(w) => w.clone(),
                    None => default_weights(ncomp),
                },
            };
            for i0 in 0..grid.n[0] {
                for i1 in 0..grid.n[1] {
                    let mut phase = 0.0;
                    for axis in 0..grid.dim {
                        let i = if axis == 0 { i0 } else { i1 };
                        phase += k.get(axis).copied().unwrap_or(0.0) * grid.coord(axis, i);
                    }
                    let val = Complex64::new(0.0, phase).exp();
                    let idx = grid.index(i0, i1);
                    for (a, wa) in w.iter().enumerate() {
                        state.comp[a][idx] = wa * val;
                    }
                }
            }
        }
    }
    let norm = charges::norm(&state, rep);
    if norm <= 0.0 {
        return Err(SimError::Grid("initial state has zero norm".into()));
    }
    state.scale(Complex64::new(1.0 / norm.sqrt(), 0.0));
    Ok(state)
}

fn default_weights(ncomp: usize) -> Vec<Complex64> {
    let mut w = vec![Complex64::default(); ncomp];
    w[0] = Complex64::new(1.0, 0.0);
    w
}

/// One time-stepping operator; also exposes the discrete Hamiltonian so the
/// energy diagnostic uses exactly the integrator's operator.
pub enum StepOp {
    Dirac(dirac::DiracOp),
    Pauli(pauli::PauliOp),
}

impl StepOp {
    pub fn step(&mut self, state: &mut SpinorField, step_index: usize) -> Result<(), SimError> {
        match self {
            StepOp::Dirac(op) => op.step(state, step_index),
            StepOp::Pauli(op) => op.step(state, step_index),
        }
    }

    pub fn apply_h(&mut self, state: &SpinorField) -> SpinorField {
        match self {
            StepOp::Dirac(op) => op.apply_h(state),
            StepOp::Pauli(op) => op.apply_h(state),
        }
    }
}

pub struct RunOutput {
    pub state: SpinorField,
    pub series: ChargeSeries,
}

/// Full scenario execution: build fields and operator, initialize, evolve,
/// and sample charges at the configured cadence (always including the
/// initial and final states).
pub fn run(config: &ScenarioConfig) -> Result<RunOutput, SimError> {
    config.validate()?;
    let grid = config.build_grid()?;
    let consts = config.phys_consts()?;
    let constants = config.merged_constants();
    let exprs = config.field_exprs(false)?;
    let mask = config.term_mask()?;
    let fields = FieldSet::compile(exprs, grid, &constants, mask)?;
    let rep = config.rep_kind();
    let mut state = init_packet(grid, rep, &config.packet_kind(grid)?, &consts)?;
    let ev = config.evolve_params();
    let mut op = match rep {
        RepKind::Lorentz => {
            StepOp::Dirac(dirac::DiracOp::new(grid, consts, &fields, ev.dt, ev.solver_tol)?)
        }
        RepKind::Galilean => StepOp::Pauli(pauli::PauliOp::new(grid, consts, &fields, ev.dt)?),
    };
    let mut series = ChargeSeries::new(grid.dim, config.wants_spin_tracking());
    series.sample(0.0, &state, rep, &mut op, &consts)?;
    for step in 1..=ev.steps {
        op.step(&mut state, step)?;
        if step % ev.record_every == 0 || step == ev.steps {
            series.sample(step as f64 * ev.dt, &state, rep, &mut op, &consts)?;
        }
    }
    Ok(RunOutput { state, series })
}

#[cfg(test)]
mod tests;
