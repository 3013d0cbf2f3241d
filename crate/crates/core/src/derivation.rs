//! Field equations and conserved currents extracted from the variational
//! 4-form.
//!
//! Everything here follows one principle: a section `s` is physical when
//! `s*(i_X d omega) = 0` for every tangent vector field `X` on the chart.
//! Contracting along the conjugate field directions yields the spinor field
//! equation, contracting along the field directions yields its adjoint, and
//! contracting `omega` itself along a symmetry generator `Y` with
//! `L_Y omega = 0` yields a current `J^mu` whose on-shell divergence
//! vanishes. The nonrelativistic representation additionally carries two
//! constraint rows which reduce the system to a two-component equation.
//!
//! All results are exact expressions over on-section opaque functions; the
//! numerical layer consumes the solved normal forms.

use std::fmt::Write as _;

use thiserror::Error;

use crate::expr::{Atom, Expr, ExprError, OpaqueFn, Symbol};
use crate::forms::{coord_resolver, Chart, Form, Section, VectorField};
use crate::model::{eta_forms, pauli, spin_block, Model, RepKind};

#[derive(Debug, Error)]
pub enum DeriveError {
    #[error("component {0}: pulled-back contraction is not proportional to the volume form")]
    NotVolumeProportional(usize),
    #[error("row {row}: time-derivative coefficient is `{found}`, expected `{expected}`")]
    BadTimeCoefficient { row: usize, found: String, expected: String },
    #[error("row {0}: constraint row contains a time derivative")]
    ConstraintHasTimeDerivative(usize),
    #[error("row {row}: constraint coefficient is `{found}`, expected `{expected}`")]
    BadConstraintCoefficient { row: usize, found: String, expected: String },
    #[error("generator `{0}` does not leave the 4-form invariant")]
    NotInvariant(String),
    #[error("on-shell rewriting did not reach a fixed point")]
    RewriteDiverged,
    #[error("operation requires the nonrelativistic representation")]
    WrongRepresentation,
    #[error(transparent)]
    Expr(#[from] ExprError),
}

fn hbar() -> Expr {
    Expr::sym(Symbol::constant("hbar"))
}

fn mass() -> Expr {
    Expr::sym(Symbol::constant("m"))
}

fn charge() -> Expr {
    Expr::sym(Symbol::constant("e"))
}

/// On-section function `Psi{a+1}(x0..x3)` or `Psid{a+1}(x0..x3)`.
pub fn field_fn(dagger: bool, a: usize) -> OpaqueFn {
    let name = if dagger { format!("Psid{}", a + 1) } else { format!("Psi{}", a + 1) };
    OpaqueFn::new(&name, &[0, 1, 2, 3])
}

pub fn field_expr(dagger: bool, a: usize) -> Expr {
    Expr::func(field_fn(dagger, a))
}

pub fn field_deriv(dagger: bool, a: usize, mu: usize) -> Expr {
    Expr::func(field_fn(dagger, a).bump(mu))
}

/// One spinor equation system: four residual rows (each `rows[a] = 0` on
/// shell) plus the solved substitution rules extracted from them.
#[derive(Debug, Clone)]
pub struct SpinorPde {
    pub kind: RepKind,
    /// False for the field equation (contraction along conjugate
    /// directions), true for the adjoint system.
    pub dagger: bool,
    pub rows: [Expr; 4],
    /// `d0 F -> R` for each row carrying a time derivative.
    pub evolution_rules: Vec<(Atom, Expr)>,
    /// `F -> C` for the nonrelativistic constraint rows.
    pub constraint_rules: Vec<(Atom, Expr)>,
}

/// Componentwise expansion of `[alpha^mu (-i hbar d_mu - e A_mu) + m beta]`
/// applied to the on-section functions; the adjoint flag transposes the
/// matrices and flips the kinetic sign, matching the contraction along the
/// opposite field directions.
fn matrix_expansion(model: &Model, dagger: bool, row: usize) -> Expr {
    let mut acc = Expr::zero();
    let ih = Expr::i().mul(&hbar());
    for b in 0..4 {
        for mu in 0..4 {
            let ent = if dagger {
                model.rep.alpha[mu].entry(b, row)
            } else {
                model.rep.alpha[mu].entry(row, b)
            };
            if ent.is_zero() {
                continue;
            }
            let kin = if dagger { ih.clone() } else { ih.neg() };
            acc = acc.add(&kin.mul(ent).mul(&field_deriv(dagger, b, mu)));
            acc = acc.add(
                &charge().neg().mul(&model.potentials[mu]).mul(ent).mul(&field_expr(dagger, b)),
            );
        }
        let bent = if dagger {
            model.rep.beta.entry(b, row)
        } else {
            model.rep.beta.entry(row, b)
        };
        if !bent.is_zero() {
            acc = acc.add(&mass().mul(bent).mul(&field_expr(dagger, b)));
        }
    }
    acc
}

fn contracted_rows(model: &Model, dagger: bool) -> Result<SpinorPde, DeriveError> {
    let chart = Chart;
    let section = Section::standard();
    let domega = model.omega().exterior_derivative();
    let volume: Vec<u8> = vec![0, 1, 2, 3];
    let mut rows: [Expr; 4] = std::array::from_fn(|_| Expr::zero());
    for a in 0..4 {
        let idx = if dagger { chart.psi(a + 1) } else { chart.psid(a + 1) };
        let pulled = domega.interior_product(&VectorField::unit(idx)).pullback(&section);
        for (key, _) in pulled.terms() {
            if *key != volume {
                return Err(DeriveError::NotVolumeProportional(a));
            }
        }
        rows[a] = pulled.coefficient(&volume);
        // Cross-check against the direct componentwise matrix expansion.
        assert_eq!(
            rows[a],
            matrix_expansion(model, dagger, a),
            "contracted row disagrees with the matrix expansion"
        );
    }

    let time_rows = match model.rep.kind {
        RepKind::Lorentz => 0..4,
        RepKind::Galilean => 0..2,
    };
    let expected_t = if dagger { Expr::i().mul(&hbar()) } else { Expr::i().mul(&hbar()).neg() };
    let mut evolution_rules = Vec::new();
    for row in time_rows {
        let atom = Atom::Fn(field_fn(dagger, row).bump(0));
        let (coeff, rest) = rows[row].linear_split(&atom)?;
        if coeff != expected_t {
            return Err(DeriveError::BadTimeCoefficient {
                row,
                found: coeff.to_string(),
                expected: expected_t.to_string(),
            });
        }
        evolution_rules.push((atom, rest.div(&coeff)?.neg()));
    }

    let mut constraint_rules = Vec::new();
    if model.rep.kind == RepKind::Galilean {
        let minus_two_m = mass().mul(&Expr::int(-2));
        for row in 2..4 {
            let has_time_deriv = rows[row].atoms().any(|at| match at {
                Atom::Fn(f) => f.deriv.first().copied().unwrap_or(0) > 0,
                Atom::Sym(_) => false,
            });
            if has_time_deriv {
                return Err(DeriveError::ConstraintHasTimeDerivative(row));
            }
            let atom = Atom::Fn(field_fn(dagger, row));
            let (coeff, rest) = rows[row].linear_split(&atom)?;
            if coeff != minus_two_m {
                return Err(DeriveError::BadConstraintCoefficient {
                    row,
                    found: coeff.to_string(),
                    expected: minus_two_m.to_string(),
                });
            }
            constraint_rules.push((atom, rest.div(&coeff)?.neg()));
        }
    }

    Ok(SpinorPde {
        kind: model.rep.kind,
        dagger,
        rows,
        evolution_rules,
        constraint_rules,
    })
}

/// Field equation rows from `s*(i_{e_{Psid_a}} d omega) = 0`.
pub fn field_equation(model: &Model) -> Result<SpinorPde, DeriveError> {
    contracted_rows(model, false)
}

/// Adjoint rows from `s*(i_{e_{Psi_a}} d omega) = 0`.
pub fn adjoint_equation(model: &Model) -> Result<SpinorPde, DeriveError> {
    contracted_rows(model, true)
}

/// Applies the solved substitution rules until a fixed point: first every
/// time-derivative rule, then the constraint rules, repeated. Terminates
/// because each round strictly lowers the total time-derivative order.
#[derive(Debug, Clone)]
pub struct OnShellRewriter {
    groups: Vec<Vec<(Atom, Expr)>>,
}

impl OnShellRewriter {
    pub fn new(field: &SpinorPde, adjoint: &SpinorPde) -> Self {
        let mut evolution = field.evolution_rules.clone();
        evolution.extend(adjoint.evolution_rules.iter().cloned());
        let mut constraints = field.constraint_rules.clone();
        constraints.extend(adjoint.constraint_rules.iter().cloned());
        let mut groups = vec![evolution];
        if !constraints.is_empty() {
            groups.push(constraints);
        }
        OnShellRewriter { groups }
    }

    pub fn rewrite(&self, e: &Expr) -> Result<Expr, DeriveError> {
        let resolver = coord_resolver();
        let mut cur = e.clone();
        for _ in 0..64 {
            let mut next = cur.clone();
            for group in &self.groups {
                next = next.substitute(group, &resolver)?;
            }
            if next == cur {
                return Ok(cur);
            }
            cur = next;
        }
        Err(DeriveError::RewriteDiverged)
    }
}

/// Two-component reduction `i hbar d0 phi_a = rhs_a` of the nonrelativistic
/// system, obtained by eliminating the constrained lower components.
#[derive(Debug, Clone)]
pub struct PauliPde {
    pub rhs: [Expr; 2],
}

pub fn galilean_reduce(pde: &SpinorPde) -> Result<PauliPde, DeriveError> {
    if pde.kind != RepKind::Galilean || pde.dagger {
        return Err(DeriveError::WrongRepresentation);
    }
    let resolver = coord_resolver();
    let ih = Expr::i().mul(&hbar());
    let mut rhs: [Expr; 2] = std::array::from_fn(|_| Expr::zero());
    for (a, item) in rhs.iter_mut().enumerate() {
        let (_, r) = &pde.evolution_rules[a];
        let mut cur = ih.mul(r);
        for _ in 0..8 {
            let lower = (2..4).any(|b| cur.contains_match(&Atom::Fn(field_fn(false, b))));
            if !lower {
                break;
            }
            cur = cur.substitute(&pde.constraint_rules, &resolver)?;
        }
        *item = cur;
    }
    Ok(PauliPde { rhs })
}

/// Hand-assembled three-group target for the reduction: kinetic
/// `(1/2m) sum_j (-i hbar d_j - e A_j)^2` expanded, spin coupling
/// `-(hbar e/2m) sigma_i B^i` with the cyclic curl convention, and scalar
/// `-e A_0`, applied to the upper components.
pub fn pauli_target(model: &Model) -> [Expr; 2] {
    let b_field = model.magnetic_field();
    let two_m_inv = mass().mul(&Expr::int(2)).invert().expect("2m is invertible");
    let ih = Expr::i().mul(&hbar());
    std::array::from_fn(|a| {
        let mut acc = Expr::zero();
        for b in 0..2 {
            // Kinetic group, diagonal in spin.
            if a == b {
                let mut kin = Expr::zero();
                for j in 1..4 {
                    let aj = &model.potentials[j];
                    kin = kin.sub(
                        &hbar().mul(&hbar()).mul(&Expr::func(field_fn(false, b).bump(j).bump(j))),
                    );
                    kin = kin.add(
                        &ih.mul(&charge())
                            .mul(&aj.differentiate(&Chart.coord_symbol(j as u8)))
                            .mul(&field_expr(false, b)),
                    );
                    kin = kin.add(
                        &ih.mul(&charge()).mul(&Expr::int(2)).mul(aj).mul(&field_deriv(false, b, j)),
                    );
                    kin = kin.add(&charge().mul(&charge()).mul(aj).mul(aj).mul(&field_expr(false, b)));
                }
                acc = acc.add(&kin.mul(&two_m_inv));
                acc = acc.sub(&charge().mul(&model.potentials[0]).mul(&field_expr(false, b)));
            }
            // Spin-coupling group.
            for (i, b_i) in b_field.iter().enumerate() {
                let sigma = pauli(i + 1);
                let s = &sigma[a][b];
                if s.is_zero() || b_i.is_zero() {
                    continue;
                }
                acc = acc.sub(
                    &hbar()
                        .mul(&charge())
                        .mul(&two_m_inv)
                        .mul(s)
                        .mul(b_i)
                        .mul(&field_expr(false, b)),
                );
            }
        }
        acc
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum InvarianceVerdict {
    Invariant,
    NotInvariant(Form),
}

/// `L_Y omega` via the Cartan formula; invariant iff structurally zero.
pub fn check_invariance(y: &VectorField, omega: &Form) -> InvarianceVerdict {
    let lie = omega.lie_derivative(y);
    if lie.is_zero() {
        InvarianceVerdict::Invariant
    } else {
        InvarianceVerdict::NotInvariant(lie)
    }
}

/// A symmetry generator on the chart. `orientation` fixes the sign relating
/// the raw charge density `J^0` to the conventional observable density:
/// `+1` for phase and time symmetries, `-1` for translations and rotations
/// (contraction along `e_j` yields minus the momentum density).
#[derive(Debug, Clone)]
pub struct Generator {
    pub label: String,
    pub field: VectorField,
    pub orientation: i8,
}

/// The built-in generator families: global phase, time translation, the
/// three space translations, and the three rotations (orbital part plus
/// `sigma^i/2` spin part on both spinor blocks).
pub fn builtin_generators() -> Vec<Generator> {
    let chart = Chart;
    let mut out = Vec::new();

    let mut gauge = VectorField::zero();
    for a in 1..=4 {
        gauge = gauge
            .with_component(chart.psi(a), Expr::i().mul(&Expr::sym(chart.psi_symbol(a))))
            .with_component(
                chart.psid(a),
                Expr::i().neg().mul(&Expr::sym(chart.psid_symbol(a))),
            );
    }
    out.push(Generator { label: "gauge".into(), field: gauge, orientation: 1 });

    out.push(Generator {
        label: "time-translation".into(),
        field: VectorField::unit(0),
        orientation: 1,
    });
    for j in 1..4u8 {
        out.push(Generator {
            label: format!("space-translation-{j}"),
            field: VectorField::unit(j),
            orientation: -1,
        });
    }

    for i in 1..=3usize {
        let j = 1 + i % 3;
        let k = 1 + (i + 1) % 3;
        let sigma = spin_block(i);
        let mut y = VectorField::zero()
            .with_component(k as u8, Expr::sym(chart.coord_symbol(j as u8)))
            .with_component(j as u8, Expr::sym(chart.coord_symbol(k as u8)).neg());
        let half_i = Expr::i().mul(&Expr::ratio(1, 2));
        for a in 0..4 {
            let mut psi_comp = Expr::zero();
            let mut psid_comp = Expr::zero();
            for b in 0..4 {
                let ent = sigma.entry(a, b);
                if !ent.is_zero() {
                    psi_comp = psi_comp.add(&ent.mul(&Expr::sym(chart.psi_symbol(b + 1))));
                }
                let ent_t = sigma.entry(b, a);
                if !ent_t.is_zero() {
                    psid_comp = psid_comp.add(&ent_t.mul(&Expr::sym(chart.psid_symbol(b + 1))));
                }
            }
            y = y
                .with_component(chart.psi(a + 1), half_i.neg().mul(&psi_comp))
                .with_component(chart.psid(a + 1), half_i.mul(&psid_comp));
        }
        out.push(Generator { label: format!("rotation-{i}"), field: y, orientation: -1 });
    }
    out
}

/// A conserved current: raw components from the decomposition
/// `s*(i_Y omega) = J^mu eta_mu`, the on-shell reduction, and the
/// orientation-normalized charge density.
#[derive(Debug, Clone)]
pub struct NoetherCurrent {
    pub label: String,
    pub j: [Expr; 4],
    pub j_onshell: [Expr; 4],
    pub charge_density: Expr,
    pub orientation: i8,
}

pub fn noether_current(
    gen: &Generator,
    omega: &Form,
    section: &Section,
    rewriter: &OnShellRewriter,
) -> Result<NoetherCurrent, DeriveError> {
    if check_invariance(&gen.field, omega) != InvarianceVerdict::Invariant {
        return Err(DeriveError::NotInvariant(gen.label.clone()));
    }
    let pulled = omega.interior_product(&gen.field).pullback(section);
    let mut j: [Expr; 4] = std::array::from_fn(|_| Expr::zero());
    for (mu, item) in j.iter_mut().enumerate() {
        let tuple: Vec<u8> = (0..4u8).filter(|&k| k as usize != mu).collect();
        let coeff = pulled.coefficient(&tuple);
        *item = if mu % 2 == 1 { coeff.neg() } else { coeff };
    }
    // Reconstruction: sum J^mu eta_mu must reproduce the pullback exactly.
    let eta_mu = eta_forms().eta_mu;
    let mut rebuilt = Form::zero(3);
    for (mu, comp) in j.iter().enumerate() {
        rebuilt = rebuilt.add(&eta_mu[mu].scale(comp));
    }
    assert_eq!(rebuilt, pulled, "current decomposition failed to reconstruct");

    let mut j_onshell: [Expr; 4] = std::array::from_fn(|_| Expr::zero());
    for mu in 0..4 {
        j_onshell[mu] = rewriter.rewrite(&j[mu])?;
    }
    let charge_density = if gen.orientation < 0 {
        j_onshell[0].neg()
    } else {
        j_onshell[0].clone()
    };
    Ok(NoetherCurrent {
        label: gen.label.clone(),
        j,
        j_onshell,
        charge_density,
        orientation: gen.orientation,
    })
}

/// `sum_mu d_mu J^mu` rewritten on shell; zero for a conserved current.
pub fn onshell_divergence(
    current: &NoetherCurrent,
    rewriter: &OnShellRewriter,
) -> Result<Expr, DeriveError> {
    let mut div = Expr::zero();
    for (mu, comp) in current.j.iter().enumerate() {
        div = div.add(&comp.differentiate(&Chart.coord_symbol(mu as u8)));
    }
    rewriter.rewrite(&div)
}

/// Verdict of the canonical commutator check: applies
/// `x_j (p_k f) - p_k (x_j f)` with `p_k = -i hbar d_k` to an opaque
/// function and compares with `i hbar delta_jk f`.
#[derive(Debug, Clone)]
pub struct HeisenbergReport {
    /// `(j, k, residual)` for the position-momentum pairs.
    pub residuals: Vec<(usize, usize, Expr)>,
    /// `(j, k, residual)` for the momentum-momentum pairs.
    pub momentum_residuals: Vec<(usize, usize, Expr)>,
    pub ok: bool,
}

pub fn heisenberg_check() -> HeisenbergReport {
    let f = Expr::func(OpaqueFn::new("f", &[0, 1, 2, 3]));
    let p = |g: &Expr, k: usize| {
        g.differentiate(&Chart.coord_symbol(k as u8)).mul(&Expr::i().neg().mul(&hbar()))
    };
    let mut residuals = Vec::new();
    let mut momentum_residuals = Vec::new();
    let mut ok = true;
    for j in 1..4usize {
        let xj = Expr::sym(Chart.coord_symbol(j as u8));
        for k in 1..4usize {
            let comm = xj.mul(&p(&f, k)).sub(&p(&xj.mul(&f), k));
            let expected = if j == k { Expr::i().mul(&hbar()).mul(&f) } else { Expr::zero() };
            let residual = comm.sub(&expected);
            ok &= residual.is_zero();
            residuals.push((j, k, residual));

            let pcomm = p(&p(&f, k), j).sub(&p(&p(&f, j), k));
            ok &= pcomm.is_zero();
            momentum_residuals.push((j, k, pcomm));
        }
    }
    HeisenbergReport { residuals, momentum_residuals, ok }
}

/// A model together with its derived equation systems and rewriter inputs.
#[derive(Debug, Clone)]
pub struct System {
    pub model: Model,
    pub omega: Form,
    pub section: Section,
    pub field: SpinorPde,
    pub adjoint: SpinorPde,
}

impl System {
    pub fn new(model: Model) -> Result<Self, DeriveError> {
        let omega = model.omega();
        let field = field_equation(&model)?;
        let adjoint = adjoint_equation(&model)?;
        Ok(System { model, omega, section: Section::standard(), field, adjoint })
    }

    pub fn rewriter(&self) -> OnShellRewriter {
        OnShellRewriter::new(&self.field, &self.adjoint)
    }

    pub fn current(&self, gen: &Generator) -> Result<NoetherCurrent, DeriveError> {
        noether_current(gen, &self.omega, &self.section, &self.rewriter())
    }
}

/// One generator's derived block in a full derivation.
#[derive(Debug, Clone)]
pub struct GeneratorBlock {
    pub generator: Generator,
    /// Whether the configured potentials already admit this symmetry; when
    /// false the current is derived in the free model instead.
    pub invariant_with_potentials: bool,
    pub current: NoetherCurrent,
    pub divergence_residual: Expr,
}

/// Full derivation for one representation: both equation systems, the
/// two-component reduction where applicable, and one conserved current per
/// built-in generator.
#[derive(Debug, Clone)]
pub struct Derivation {
    pub system: System,
    pub free_system: System,
    pub pauli: Option<PauliPde>,
    pub blocks: Vec<GeneratorBlock>,
    pub heisenberg: HeisenbergReport,
}

pub fn derive(model: Model) -> Result<Derivation, DeriveError> {
    let kind = model.rep.kind;
    let system = System::new(model)?;
    let free_system = System::new(Model::free(kind))?;
    let pauli = match kind {
        RepKind::Galilean => Some(galilean_reduce(&system.field)?),
        RepKind::Lorentz => None,
    };
    let mut blocks = Vec::new();
    for gen in builtin_generators() {
        let invariant_with_potentials =
            check_invariance(&gen.field, &system.omega) == InvarianceVerdict::Invariant;
        let (home, rewriter) = if invariant_with_potentials {
            (&system, system.rewriter())
        } else {
            (&free_system, free_system.rewriter())
        };
        let current = noether_current(&gen, &home.omega, &home.section, &rewriter)?;
        let divergence_residual = onshell_divergence(&current, &rewriter)?;
        blocks.push(GeneratorBlock {
            generator: gen,
            invariant_with_potentials,
            current,
            divergence_residual,
        });
    }
    Ok(Derivation { system, free_system, pauli, blocks, heisenberg: heisenberg_check() })
}

impl Derivation {
    /// Deterministic plain-text report of everything derived.
    pub fn report(&self) -> String {
        self.report_filtered(&[])
    }

    /// Report restricted to the named generator labels; empty keeps all.
    pub fn report_filtered(&self, generators: &[String]) -> String {
        let mut s = String::new();
        let kind = match self.system.model.rep.kind {
            RepKind::Lorentz => "lorentz",
            RepKind::Galilean => "galilean",
        };
        let _ = writeln!(s, "representation: {kind}");
        let _ = writeln!(s, "potentials:");
        for (mu, a) in self.system.model.potentials.iter().enumerate() {
            let _ = writeln!(s, "  A_{mu} = {a}");
        }
        let _ = writeln!(s, "field equation rows (each = 0):");
        for (a, row) in self.system.field.rows.iter().enumerate() {
            let _ = writeln!(s, "  [{}] {row}", a + 1);
        }
        let _ = writeln!(s, "adjoint equation rows (each = 0):");
        for (a, row) in self.system.adjoint.rows.iter().enumerate() {
            let _ = writeln!(s, "  [{}] {row}", a + 1);
        }
        if let Some(pauli) = &self.pauli {
            let _ = writeln!(s, "two-component reduction (i*hbar d0 phi_a = rhs):");
            for (a, rhs) in pauli.rhs.iter().enumerate() {
                let _ = writeln!(s, "  [{}] {rhs}", a + 1);
            }
        }
        for block in &self.blocks {
            if !generators.is_empty() && !generators.contains(&block.generator.label) {
                continue;
            }
            let _ = writeln!(
                s,
                "generator {} (orientation {:+}):",
                block.generator.label, block.generator.orientation
            );
            let _ = writeln!(
                s,
                "  invariant with configured potentials: {}",
                if block.invariant_with_potentials { "yes" } else { "no (derived free)" }
            );
            for mu in 0..4 {
                let _ = writeln!(s, "  J^{mu} = {}", block.current.j[mu]);
            }
            for mu in 0..4 {
                let _ = writeln!(s, "  on-shell J^{mu} = {}", block.current.j_onshell[mu]);
            }
            let _ = writeln!(s, "  charge density = {}", block.current.charge_density);
            let _ = writeln!(s, "  on-shell divergence = {}", block.divergence_residual);
        }
        let _ = writeln!(
            s,
            "canonical commutators: {}",
            if self.heisenberg.ok { "ok" } else { "FAILED" }
        );
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Context;
    use crate::model::Mat4;

    fn p(s: &str) -> Expr {
        let mut ctx = Context::standard();
        Expr::parse(s, &mut ctx).unwrap()
    }

    fn sub_consts(e: &Expr, rules: &[(Atom, Expr)]) -> Expr {
        e.substitute(rules, &coord_resolver()).unwrap()
    }

    #[test]
    fn lorentz_field_equation_first_row_literal() {
        // Row 1 of [alpha^mu(-i hbar d_mu - e A_mu) + m beta]Psi:
        // alpha^1 couples 1<->4, alpha^2 couples 1<->-i*4, alpha^3 couples 1<->3.
        let pde = field_equation(&Model::new(RepKind::Lorentz)).unwrap();
        let expected = p("-i*hbar*d(Psi1(x0,x1,x2,x3),x0) \
             - e*A_0(x0,x1,x2,x3)*Psi1(x0,x1,x2,x3) \
             - i*hbar*c*d(Psi4(x0,x1,x2,x3),x1) \
             - e*c*A_1(x0,x1,x2,x3)*Psi4(x0,x1,x2,x3) \
             - hbar*c*d(Psi4(x0,x1,x2,x3),x2) \
             + i*e*c*A_2(x0,x1,x2,x3)*Psi4(x0,x1,x2,x3) \
             - i*hbar*c*d(Psi3(x0,x1,x2,x3),x3) \
             - e*c*A_3(x0,x1,x2,x3)*Psi3(x0,x1,x2,x3) \
             + m*c^2*Psi1(x0,x1,x2,x3)");
        assert_eq!(pde.rows[0], expected);
    }

    #[test]
    fn galilean_pair_matches_displayed_equations() {
        let pde = field_equation(&Model::new(RepKind::Galilean)).unwrap();
        // Upper row 1: i hbar d0 phi = sigma^j(-i hbar d_j - e A_j)chi - e A_0 phi,
        // written as a residual.
        let expected_upper = p("-i*hbar*d(Psi1(x0,x1,x2,x3),x0) \
             - e*A_0(x0,x1,x2,x3)*Psi1(x0,x1,x2,x3) \
             - i*hbar*d(Psi4(x0,x1,x2,x3),x1) - e*A_1(x0,x1,x2,x3)*Psi4(x0,x1,x2,x3) \
             - hbar*d(Psi4(x0,x1,x2,x3),x2) + i*e*A_2(x0,x1,x2,x3)*Psi4(x0,x1,x2,x3) \
             - i*hbar*d(Psi3(x0,x1,x2,x3),x3) - e*A_3(x0,x1,x2,x3)*Psi3(x0,x1,x2,x3)");
        assert_eq!(pde.rows[0], expected_upper);
        // Lower row 3: 0 = sigma^j(-i hbar d_j - e A_j)phi - 2m chi.
        let expected_lower = p("-i*hbar*d(Psi2(x0,x1,x2,x3),x1) - e*A_1(x0,x1,x2,x3)*Psi2(x0,x1,x2,x3) \
             - hbar*d(Psi2(x0,x1,x2,x3),x2) + i*e*A_2(x0,x1,x2,x3)*Psi2(x0,x1,x2,x3) \
             - i*hbar*d(Psi1(x0,x1,x2,x3),x3) - e*A_3(x0,x1,x2,x3)*Psi1(x0,x1,x2,x3) \
             - 2*m*Psi3(x0,x1,x2,x3)");
        assert_eq!(pde.rows[2], expected_lower);
        assert_eq!(pde.evolution_rules.len(), 2);
        assert_eq!(pde.constraint_rules.len(), 2);
    }

    #[test]
    fn massless_free_limit_is_pure_transport() {
        let pde = field_equation(&Model::free(RepKind::Lorentz)).unwrap();
        let kill_m: Vec<(Atom, Expr)> = vec![(Atom::Sym(Symbol::constant("m")), Expr::zero())];
        let row = sub_consts(&pde.rows[0], &kill_m);
        let expected = p("-i*hbar*d(Psi1(x0,x1,x2,x3),x0) - i*hbar*c*d(Psi4(x0,x1,x2,x3),x1) \
             - hbar*c*d(Psi4(x0,x1,x2,x3),x2) - i*hbar*c*d(Psi3(x0,x1,x2,x3),x3)");
        assert_eq!(row, expected);
    }

    #[test]
    fn adjoint_row_hand_expansion_free_case() {
        let pde = adjoint_equation(&Model::free(RepKind::Lorentz)).unwrap();
        let expected = p("i*hbar*d(Psid1(x0,x1,x2,x3),x0) + i*hbar*c*d(Psid4(x0,x1,x2,x3),x1) \
             - hbar*c*d(Psid4(x0,x1,x2,x3),x2) + i*hbar*c*d(Psid3(x0,x1,x2,x3),x3) \
             + m*c^2*Psid1(x0,x1,x2,x3)");
        assert_eq!(pde.rows[0], expected);
    }

    #[test]
    fn adjoint_is_conjugate_of_field_equation() {
        // Swap Psi <-> Psid names and conjugate coefficients; the matrices
        // are hermitian and the potentials real, so this must map the field
        // rows onto the adjoint rows.
        let swap = |at: &Atom| match at {
            Atom::Fn(f) => {
                let name = f.name.as_ref();
                let renamed = if let Some(rest) = name.strip_prefix("Psid") {
                    format!("Psi{rest}")
                } else if let Some(rest) = name.strip_prefix("Psi") {
                    format!("Psid{rest}")
                } else {
                    return at.clone();
                };
                let mut g = OpaqueFn::new(&renamed, &f.args);
                g.deriv = f.deriv.clone();
                Atom::Fn(g)
            }
            Atom::Sym(_) => at.clone(),
        };
        for kind in [RepKind::Lorentz, RepKind::Galilean] {
            let model = Model::new(kind);
            let field = field_equation(&model).unwrap();
            let adjoint = adjoint_equation(&model).unwrap();
            for a in 0..4 {
                let mapped = field.rows[a].conj_coefficients().map_atoms(&swap);
                assert_eq!(mapped, adjoint.rows[a], "row {a} of {kind:?}");
            }
        }
    }

    #[test]
    fn normal_form_solves_time_derivative() {
        let pde = field_equation(&Model::free(RepKind::Lorentz)).unwrap();
        let (atom, rhs) = &pde.evolution_rules[0];
        assert_eq!(*atom, Atom::Fn(field_fn(false, 0).bump(0)));
        // -i hbar d0 Psi1 + (-i hbar c d1 Psi4 - hbar c d2 Psi4 - i hbar c d3 Psi3
        //  + m c^2 Psi1) = 0, solved for d0 Psi1.
        let expected = p("-c*d(Psi4(x0,x1,x2,x3),x1) + i*c*d(Psi4(x0,x1,x2,x3),x2) \
             - c*d(Psi3(x0,x1,x2,x3),x3) - i*m*c^2/hbar*Psi1(x0,x1,x2,x3)");
        assert_eq!(*rhs, expected);
    }

    #[test]
    fn pauli_reduction_matches_three_group_target() {
        for model in [
            Model::new(RepKind::Galilean),
            Model::free(RepKind::Galilean),
            Model::with_potentials(
                RepKind::Galilean,
                [Expr::zero(), p("-B*x2/2"), p("B*x1/2"), Expr::zero()],
            ),
        ] {
            let pde = field_equation(&model).unwrap();
            let reduced = galilean_reduce(&pde).unwrap();
            let target = pauli_target(&model);
            assert_eq!(reduced.rhs[0], target[0]);
            assert_eq!(reduced.rhs[1], target[1]);
        }
    }

    #[test]
    fn pauli_free_case_is_schroedinger() {
        let pde = field_equation(&Model::free(RepKind::Galilean)).unwrap();
        let reduced = galilean_reduce(&pde).unwrap();
        let expected = p("-hbar^2/(2*m)*(d(Psi1(x0,x1,x2,x3),x1,x1) \
             + d(Psi1(x0,x1,x2,x3),x2,x2) + d(Psi1(x0,x1,x2,x3),x3,x3))");
        assert_eq!(reduced.rhs[0], expected);
    }

    #[test]
    fn pauli_symmetric_gauge_spin_coupling() {
        // A = (B/2)(-x2, x1, 0): curl gives B^3 = B, so the spin group is
        // -(hbar e/2m) B sigma^3, diagonal (+B, -B)/..., and the derived
        // reduction carries it with the minus orientation.
        let model = Model::with_potentials(
            RepKind::Galilean,
            [Expr::zero(), p("-B*x2/2"), p("B*x1/2"), Expr::zero()],
        );
        assert_eq!(model.magnetic_field()[2], p("B"));
        let reduced = galilean_reduce(&field_equation(&model).unwrap()).unwrap();
        let diff = reduced.rhs[0].sub(&reduced.rhs[1]);
        // Everything except the sigma^3 spin term is spin-diagonal and equal
        // on both components up to the component label; compare the
        // coefficient of the undifferentiated field atom after removing the
        // scalar and kinetic pieces shared by construction.
        let spin_part_0 = reduced.rhs[0].linear_split(&Atom::Fn(field_fn(false, 0))).unwrap().0;
        let spin_part_1 = reduced.rhs[1].linear_split(&Atom::Fn(field_fn(false, 1))).unwrap().0;
        let zeeman = spin_part_0.sub(&spin_part_1);
        assert_eq!(zeeman, p("-hbar*e*B/m"), "sigma^3 splitting of the two components");
        assert!(!diff.is_zero());
    }

    #[test]
    fn gauge_invariance_holds_for_any_potential() {
        let gens = builtin_generators();
        let gauge = &gens[0];
        assert_eq!(gauge.label, "gauge");
        for kind in [RepKind::Lorentz, RepKind::Galilean] {
            let omega = Model::new(kind).omega();
            assert_eq!(check_invariance(&gauge.field, &omega), InvarianceVerdict::Invariant);
        }
    }

    #[test]
    fn translation_invariance_fails_with_potentials_and_shows_gradient() {
        let model = Model::new(RepKind::Lorentz);
        let omega = model.omega();
        let e1 = VectorField::unit(1);
        match check_invariance(&e1, &omega) {
            InvarianceVerdict::NotInvariant(residual) => {
                // L_{e_1} omega = -e sum_mu (d1 A_mu) Psid alpha^mu Psi eta.
                let mut coeff = Expr::zero();
                for mu in 0..4 {
                    let grad = model.potentials[mu].differentiate(&Chart.coord_symbol(1));
                    coeff = coeff.add(
                        &charge().neg().mul(&grad).mul(&model.sandwich(&model.rep.alpha[mu])),
                    );
                }
                assert_eq!(residual, eta_forms().eta.scale(&coeff));
            }
            InvarianceVerdict::Invariant => panic!("expected a residual"),
        }
    }

    #[test]
    fn free_model_admits_all_builtin_generators() {
        for kind in [RepKind::Lorentz, RepKind::Galilean] {
            let omega = Model::free(kind).omega();
            for gen in builtin_generators() {
                assert_eq!(
                    check_invariance(&gen.field, &omega),
                    InvarianceVerdict::Invariant,
                    "{} on {kind:?}",
                    gen.label
                );
            }
        }
    }

    #[test]
    fn gauge_current_components() {
        for kind in [RepKind::Lorentz, RepKind::Galilean] {
            let sys = System::new(Model::new(kind)).unwrap();
            let gens = builtin_generators();
            let current = sys.current(&gens[0]).unwrap();
            // J^mu = hbar Psid alpha^mu Psi, on-section.
            for mu in 0..4 {
                let mut expected = Expr::zero();
                for a in 0..4 {
                    for b in 0..4 {
                        let ent = sys.model.rep.alpha[mu].entry(a, b);
                        if ent.is_zero() {
                            continue;
                        }
                        expected = expected
                            .add(&hbar().mul(ent).mul(&field_expr(true, a)).mul(&field_expr(false, b)));
                    }
                }
                assert_eq!(current.j[mu], expected, "J^{mu} for {kind:?}");
                // No time derivatives appear, so only the constraint rules
                // can act: the Lorentz components and the nonrelativistic
                // density are already on shell, while the nonrelativistic
                // spatial components get their lower pair eliminated.
                if kind == RepKind::Lorentz || mu == 0 {
                    assert_eq!(current.j_onshell[mu], expected);
                } else {
                    assert!(!current.j_onshell[mu].contains_match(&Atom::Fn(field_fn(false, 2))));
                    assert!(!current.j_onshell[mu].contains_match(&Atom::Fn(field_fn(false, 3))));
                }
            }
            // Charge density: Galilean case involves only the upper pair.
            if kind == RepKind::Galilean {
                let expected = p("hbar*(Psid1(x0,x1,x2,x3)*Psi1(x0,x1,x2,x3) \
                     + Psid2(x0,x1,x2,x3)*Psi2(x0,x1,x2,x3))");
                assert_eq!(current.charge_density, expected);
            }
        }
    }

    #[test]
    fn translation_current_raw_and_onshell() {
        let sys = System::new(Model::free(RepKind::Lorentz)).unwrap();
        let gens = builtin_generators();
        let t1 = gens.iter().find(|g| g.label == "space-translation-1").unwrap();
        let current = sys.current(t1).unwrap();
        let ih = Expr::i().mul(&hbar());
        // Raw: J^mu = i hbar Psid alpha^mu d1 Psi + delta^mu_1 (row sum of the
        // field equation weighted by Psid), which the on-shell rewrite kills.
        for mu in 0..4 {
            let mut expected = Expr::zero();
            for a in 0..4 {
                for b in 0..4 {
                    let ent = sys.model.rep.alpha[mu].entry(a, b);
                    if ent.is_zero() {
                        continue;
                    }
                    expected = expected
                        .add(&ih.mul(ent).mul(&field_expr(true, a)).mul(&field_deriv(false, b, 1)));
                }
            }
            if mu == 1 {
                for a in 0..4 {
                    expected = expected.add(&field_expr(true, a).mul(&sys.field.rows[a]));
                }
            }
            assert_eq!(current.j[mu], expected, "raw J^{mu}");
        }
        for mu in 0..4 {
            let mut expected = Expr::zero();
            for a in 0..4 {
                for b in 0..4 {
                    let ent = sys.model.rep.alpha[mu].entry(a, b);
                    if ent.is_zero() {
                        continue;
                    }
                    expected = expected
                        .add(&ih.mul(ent).mul(&field_expr(true, a)).mul(&field_deriv(false, b, 1)));
                }
            }
            assert_eq!(current.j_onshell[mu], expected, "on-shell J^{mu}");
        }
        // Orientation -1: the charge density is the momentum density.
        let expected_density = current.j_onshell[0].neg();
        assert_eq!(current.charge_density, expected_density);
    }

    #[test]
    fn energy_identity_two_forms() {
        let sys = System::new(Model::free(RepKind::Lorentz)).unwrap();
        let gens = builtin_generators();
        let time = gens.iter().find(|g| g.label == "time-translation").unwrap();
        let current = sys.current(time).unwrap();
        let ih = Expr::i().mul(&hbar());
        // First displayed form: J^0 = Psid alpha^0 (i hbar d0) Psi modulo the
        // field-equation rows.
        let mut first_form = Expr::zero();
        for a in 0..4 {
            first_form = first_form.add(&ih.mul(&field_expr(true, a)).mul(&field_deriv(false, a, 0)));
        }
        let mut row_sum = Expr::zero();
        for a in 0..4 {
            row_sum = row_sum.add(&field_expr(true, a).mul(&sys.field.rows[a]));
        }
        assert_eq!(current.j[0], first_form.add(&row_sum));
        // Second displayed form after the on-shell rewrite:
        // Psid [alpha^j (-i hbar d_j) + m beta] Psi.
        let mut second_form = Expr::zero();
        for a in 0..4 {
            for b in 0..4 {
                for j in 1..4 {
                    let ent = sys.model.rep.alpha[j].entry(a, b);
                    if ent.is_zero() {
                        continue;
                    }
                    second_form = second_form.add(
                        &ih.neg().mul(ent).mul(&field_expr(true, a)).mul(&field_deriv(false, b, j)),
                    );
                }
                let bent = sys.model.rep.beta.entry(a, b);
                if !bent.is_zero() {
                    second_form = second_form
                        .add(&mass().mul(bent).mul(&field_expr(true, a)).mul(&field_expr(false, b)));
                }
            }
        }
        assert_eq!(current.j_onshell[0], second_form);
        assert_eq!(current.charge_density, second_form);
    }

    #[test]
    fn rotation_charge_density_is_angular_momentum_with_spin() {
        for kind in [RepKind::Lorentz, RepKind::Galilean] {
            let sys = System::new(Model::free(kind)).unwrap();
            let gens = builtin_generators();
            let rot3 = gens.iter().find(|g| g.label == "rotation-3").unwrap();
            let current = sys.current(rot3).unwrap();
            // Psid alpha^0 [x1(-i hbar d2) - x2(-i hbar d1) + (hbar/2) Sigma^3] Psi.
            let ih = Expr::i().mul(&hbar());
            let sigma3 = spin_block(3);
            let x1 = Expr::sym(Chart.coord_symbol(1));
            let x2 = Expr::sym(Chart.coord_symbol(2));
            let mut expected = Expr::zero();
            for a in 0..4 {
                for b in 0..4 {
                    let a0 = sys.model.rep.alpha[0].entry(a, b);
                    if a0.is_zero() {
                        continue;
                    }
                    let orbital = x1
                        .mul(&ih.neg().mul(&field_deriv(false, b, 2)))
                        .sub(&x2.mul(&ih.neg().mul(&field_deriv(false, b, 1))));
                    expected = expected.add(&a0.mul(&field_expr(true, a)).mul(&orbital));
                    for c in 0..4 {
                        let sent = sigma3.entry(b, c);
                        if sent.is_zero() {
                            continue;
                        }
                        expected = expected.add(
                            &a0.mul(&field_expr(true, a))
                                .mul(&hbar().mul(&Expr::ratio(1, 2)))
                                .mul(sent)
                                .mul(&field_expr(false, c)),
                        );
                    }
                }
            }
            assert_eq!(current.charge_density, expected, "axis-3 density for {kind:?}");
        }
    }

    #[test]
    fn onshell_divergence_vanishes_for_all_builtin_currents() {
        for kind in [RepKind::Lorentz, RepKind::Galilean] {
            // Gauge current: with opaque potentials. Spacetime currents: free.
            let opaque = System::new(Model::new(kind)).unwrap();
            let free = System::new(Model::free(kind)).unwrap();
            for gen in builtin_generators() {
                let sys = if gen.label == "gauge" { &opaque } else { &free };
                let rewriter = sys.rewriter();
                let current = sys.current(&gen).unwrap();
                let residual = onshell_divergence(&current, &rewriter).unwrap();
                assert!(
                    residual.is_zero(),
                    "divergence of {} for {kind:?}: {residual}",
                    gen.label
                );
            }
        }
    }

    #[test]
    fn perturbed_current_has_nonzero_divergence() {
        let sys = System::new(Model::new(RepKind::Lorentz)).unwrap();
        let gens = builtin_generators();
        let mut current = sys.current(&gens[0]).unwrap();
        current.j[0] = current.j[0].add(&field_expr(true, 0).mul(&field_expr(false, 0)));
        let residual = onshell_divergence(&current, &sys.rewriter()).unwrap();
        assert!(!residual.is_zero());
    }

    #[test]
    fn noether_chain_two_paths_agree() {
        // d s*(i_Y omega) = -s*(i_Y d omega) holds exactly for invariant
        // generators, and both collapse to zero on shell.
        for kind in [RepKind::Lorentz, RepKind::Galilean] {
            let sys = System::new(Model::free(kind)).unwrap();
            let rewriter = sys.rewriter();
            let domega = sys.omega.exterior_derivative();
            for gen in builtin_generators() {
                let path_a = sys
                    .omega
                    .interior_product(&gen.field)
                    .pullback(&sys.section)
                    .exterior_derivative();
                let path_b = domega.interior_product(&gen.field).pullback(&sys.section).neg();
                assert_eq!(path_a, path_b, "{} chain for {kind:?}", gen.label);
                let coeff = path_a.coefficient(&[0, 1, 2, 3]);
                let reduced = rewriter.rewrite(&coeff).unwrap();
                assert!(reduced.is_zero(), "{} on-shell residual: {reduced}", gen.label);
            }
        }
    }

    #[test]
    fn noncurrent_for_noninvariant_generator_is_refused() {
        let sys = System::new(Model::new(RepKind::Lorentz)).unwrap();
        let gens = builtin_generators();
        let t1 = gens.iter().find(|g| g.label == "space-translation-1").unwrap();
        let err = sys.current(t1).unwrap_err();
        assert!(matches!(err, DeriveError::NotInvariant(_)));
    }

    #[test]
    fn heisenberg_commutators_hold() {
        let report = heisenberg_check();
        assert!(report.ok);
        assert_eq!(report.residuals.len(), 9);
        assert_eq!(report.momentum_residuals.len(), 9);
        for (_, _, r) in &report.residuals {
            assert!(r.is_zero());
        }
    }

    #[test]
    fn full_derivation_report_is_deterministic() {
        let d1 = derive(Model::new(RepKind::Galilean)).unwrap();
        let d2 = derive(Model::new(RepKind::Galilean)).unwrap();
        let r1 = d1.report();
        assert_eq!(r1, d2.report());
        assert!(r1.contains("generator gauge"));
        assert!(r1.contains("generator rotation-3"));
        assert!(r1.contains("two-component reduction"));
        assert!(r1.contains("canonical commutators: ok"));
        for block in &d1.blocks {
            assert!(block.divergence_residual.is_zero(), "{}", block.generator.label);
        }
        // With opaque potentials only the gauge symmetry survives.
        assert!(d1.blocks.iter().all(|b| {
            b.invariant_with_potentials == (b.generator.label == "gauge")
        }));
    }

    #[test]
    fn rewriter_handles_repeated_time_derivatives() {
        let sys = System::new(Model::free(RepKind::Lorentz)).unwrap();
        let rewriter = sys.rewriter();
        // d0 d0 Psi1 should reduce to purely spatial derivatives plus mass
        // terms; check no time derivative survives.
        let second = Expr::func(field_fn(false, 0).bump(0).bump(0));
        let reduced = rewriter.rewrite(&second).unwrap();
        let any_time = reduced.atoms().any(|at| match at {
            Atom::Fn(f) => f.deriv.first().copied().unwrap_or(0) > 0,
            Atom::Sym(_) => false,
        });
        assert!(!any_time, "time derivative survived: {reduced}");
        assert!(!reduced.is_zero());
    }

    #[test]
    fn mat4_helper_visible_for_sigma_blocks() {
        // Spin blocks commute with the Galilean beta.
        let rep = crate::model::MatrixRep::galilean();
        for i in 1..=3 {
            let s = spin_block(i);
            assert_eq!(s.mul(&rep.beta), rep.beta.mul(&s));
        }
        let _ = Mat4::identity();
    }
}
