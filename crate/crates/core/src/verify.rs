//! Executable acceptance suite. Each criterion re-checks one promise of the
//! crate from the outside: the symbolic derivations against independently
//! hand-encoded component tables, the integrators against conservation and
//! dispersion bounds on the bundled scenarios, and the algebraic kernel
//! against randomized law suites. `run_all` executes every criterion and
//! reports one verdict per entry; failures carry the first offending detail.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::charges::{self, charge_scaling_factor, fit_precession, ChargeSeries};
use crate::derivation::{
    builtin_generators, check_invariance, field_equation, galilean_reduce, heisenberg_check,
    onshell_divergence, InvarianceVerdict, NoetherCurrent, System,
};
use crate::expr::{Context, Expr, Symbol};
use crate::forms::{Chart, Form};
use crate::model::{Model, RepKind};
use crate::scenario::{bundled, ScenarioConfig};
use crate::simulate::{
    self, dirac_energy, init_packet, pauli::PauliOp, FieldSet, Grid, PacketKind, PhysConsts,
    SpinorField, StepOp, TermMask,
};

/// Verdict of one acceptance criterion.
#[derive(Debug, Clone)]
pub struct CriterionResult {
    pub name: &'static str,
    pub passed: bool,
    pub details: String,
    pub elapsed: Duration,
}

/// Runs every criterion in order. Each one is isolated: a panic inside a
/// criterion is caught and reported as a failure rather than aborting the
/// suite.
pub fn run_all() -> Vec<CriterionResult> {
    vec![
        relativistic_field_equation(),
        nonrelativistic_reduction(),
        noether_currents(),
        rotation_charge_density(),
        canonical_commutators(),
        dirac_line_dispersion(),
        symmetric_gauge_invariants(),
        zeeman_precession(),
        algebraic_property_suites(),
    ]
}

fn criterion(
    name: &'static str,
    limit: Option<Duration>,
    body: impl FnOnce() -> Result<String, String>,
) -> CriterionResult {
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(body));
    let elapsed = start.elapsed();
    let (mut passed, mut details) = match outcome {
        Ok(Ok(d)) => (true, d),
        Ok(Err(d)) => (false, d),
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "opaque panic payload".into());
            (false, format!("panicked: {msg}"))
        }
    };
    if passed {
        if let Some(limit) = limit {
            if elapsed > limit {
                passed = false;
                details = format!(
                    "checks passed but took {:.2}s, over the {:.0}s budget; {details}",
                    elapsed.as_secs_f64(),
                    limit.as_secs_f64()
                );
            }
        }
    }
    CriterionResult { name, passed, details, elapsed }
}

/// Parses a hand-table entry; `@` abbreviates the on-section argument list.
fn table(s: &str) -> Expr {
    let full = s.replace('@', "(x0,x1,x2,x3)");
    let mut ctx = Context::standard();
    Expr::parse(&full, &mut ctx).unwrap_or_else(|e| panic!("hand table `{s}`: {e}"))
}

fn expect_eq(label: &str, got: &Expr, want: &Expr) -> Result<(), String> {
    if got == want {
        Ok(())
    } else {
        Err(format!("{label}: derived `{got}` but the hand table says `{want}`"))
    }
}

fn drift_of(series: &ChargeSeries, column: &str) -> Result<f64, String> {
    series
        .drift_report()
        .into_iter()
        .find(|(name, _)| *name == column)
        .map(|(_, d)| d)
        .ok_or_else(|| format!("charge column `{column}` missing from the drift report"))
}

fn bound(label: &str, value: f64, limit: f64) -> Result<(), String> {
    if value <= limit {
        Ok(())
    } else {
        Err(format!("{label} = {value:.3e} exceeds the {limit:.0e} bound"))
    }
}

fn load(name: &str) -> Result<ScenarioConfig, String> {
    let text = bundled(name).ok_or_else(|| format!("bundled scenario `{name}` missing"))?;
    ScenarioConfig::from_str(text).map_err(|e| format!("scenario `{name}`: {e}"))
}

/// Four-component relativistic system: every row of the derived equation
/// must equal the hand expansion of
/// `[alpha^mu (-i hbar d_mu - e A_mu) + m beta] Psi` written out entry by
/// entry, with nothing shared with the derivation code.
pub fn relativistic_field_equation() -> CriterionResult {
    criterion("relativistic-field-equation", Some(Duration::from_secs(5)), || {
        let pde = field_equation(&Model::new(RepKind::Lorentz)).map_err(|e| e.to_string())?;
        let rows = [
            "-i*hbar*d(Psi1@,x0) - e*A_0@*Psi1@ \
             - i*hbar*c*d(Psi4@,x1) - e*c*A_1@*Psi4@ \
             - hbar*c*d(Psi4@,x2) + i*e*c*A_2@*Psi4@ \
             - i*hbar*c*d(Psi3@,x3) - e*c*A_3@*Psi3@ \
             + m*c^2*Psi1@",
            "-i*hbar*d(Psi2@,x0) - e*A_0@*Psi2@ \
             - i*hbar*c*d(Psi3@,x1) - e*c*A_1@*Psi3@ \
             + hbar*c*d(Psi3@,x2) - i*e*c*A_2@*Psi3@ \
             + i*hbar*c*d(Psi4@,x3) + e*c*A_3@*Psi4@ \
             + m*c^2*Psi2@",
            "-i*hbar*d(Psi3@,x0) - e*A_0@*Psi3@ \
             - i*hbar*c*d(Psi2@,x1) - e*c*A_1@*Psi2@ \
             - hbar*c*d(Psi2@,x2) + i*e*c*A_2@*Psi2@ \
             - i*hbar*c*d(Psi1@,x3) - e*c*A_3@*Psi1@ \
             - m*c^2*Psi3@",
            "-i*hbar*d(Psi4@,x0) - e*A_0@*Psi4@ \
             - i*hbar*c*d(Psi1@,x1) - e*c*A_1@*Psi1@ \
             + hbar*c*d(Psi1@,x2) - i*e*c*A_2@*Psi1@ \
             + i*hbar*c*d(Psi2@,x3) + e*c*A_3@*Psi2@ \
             - m*c^2*Psi4@",
        ];
        for (a, entry) in rows.iter().enumerate() {
            expect_eq(&format!("row {}", a + 1), &pde.rows[a], &table(entry))?;
        }
        Ok("all four relativistic rows match the hand expansion".into())
    })
}

/// Nonrelativistic system: the evolution pair and the two constraint rows
/// must match their hand tables, and eliminating the constrained lower
/// components must reproduce the two-component equation
/// `i hbar d0 phi = [(1/2m)(-i hbar grad - e A)^2 - (hbar e/2m) sigma.B - e A_0] phi`
/// with the cyclic curl convention for `B`.
pub fn nonrelativistic_reduction() -> CriterionResult {
    criterion("nonrelativistic-reduction", Some(Duration::from_secs(5)), || {
        let pde = field_equation(&Model::new(RepKind::Galilean)).map_err(|e| e.to_string())?;
        let rows = [
            "-i*hbar*d(Psi1@,x0) - e*A_0@*Psi1@ \
             - i*hbar*d(Psi4@,x1) - e*A_1@*Psi4@ \
             - hbar*d(Psi4@,x2) + i*e*A_2@*Psi4@ \
             - i*hbar*d(Psi3@,x3) - e*A_3@*Psi3@",
            "-i*hbar*d(Psi2@,x0) - e*A_0@*Psi2@ \
             - i*hbar*d(Psi3@,x1) - e*A_1@*Psi3@ \
             + hbar*d(Psi3@,x2) - i*e*A_2@*Psi3@ \
             + i*hbar*d(Psi4@,x3) + e*A_3@*Psi4@",
            "-i*hbar*d(Psi2@,x1) - e*A_1@*Psi2@ \
             - hbar*d(Psi2@,x2) + i*e*A_2@*Psi2@ \
             - i*hbar*d(Psi1@,x3) - e*A_3@*Psi1@ \
             - 2*m*Psi3@",
            "-i*hbar*d(Psi1@,x1) - e*A_1@*Psi1@ \
             + hbar*d(Psi1@,x2) - i*e*A_2@*Psi1@ \
             + i*hbar*d(Psi2@,x3) + e*A_3@*Psi2@ \
             - 2*m*Psi4@",
        ];
        for (a, entry) in rows.iter().enumerate() {
            expect_eq(&format!("row {}", a + 1), &pde.rows[a], &table(entry))?;
        }

        let reduced = galilean_reduce(&pde).map_err(|e| e.to_string())?;
        // Kinetic group shared by both spin components, written for component `n`.
        let kinetic = |n: usize| {
            format!(
                "(-hbar^2*(d(Psi{n}@,x1,x1) + d(Psi{n}@,x2,x2) + d(Psi{n}@,x3,x3)) \
                 + i*hbar*e*(d(A_1@,x1) + d(A_2@,x2) + d(A_3@,x3))*Psi{n}@ \
                 + 2*i*hbar*e*(A_1@*d(Psi{n}@,x1) + A_2@*d(Psi{n}@,x2) + A_3@*d(Psi{n}@,x3)) \
                 + e*e*(A_1@*A_1@ + A_2@*A_2@ + A_3@*A_3@)*Psi{n}@)/(2*m) \
                 - e*A_0@*Psi{n}@"
            )
        };
        // sigma.B with B^i the cyclic curl of the vector potential.
        let rhs1 = format!(
            "{} - hbar*e/(2*m)*((d(A_2@,x1) - d(A_1@,x2))*Psi1@ \
             + (d(A_3@,x2) - d(A_2@,x3) - i*(d(A_1@,x3) - d(A_3@,x1)))*Psi2@)",
            kinetic(1)
        );
        let rhs2 = format!(
            "{} - hbar*e/(2*m)*((d(A_3@,x2) - d(A_2@,x3) + i*(d(A_1@,x3) - d(A_3@,x1)))*Psi1@ \
             - (d(A_2@,x1) - d(A_1@,x2))*Psi2@)",
            kinetic(2)
        );
        expect_eq("reduced component 1", &reduced.rhs[0], &table(&rhs1))?;
        expect_eq("reduced component 2", &reduced.rhs[1], &table(&rhs2))?;
        Ok("evolution pair, constraints, and two-component reduction all match".into())
    })
}

/// Conserved currents for every generator family: invariance of the 4-form,
/// agreement of the decomposed components with the hand tables (gauge current
/// for arbitrary potentials, on-shell momentum current, energy density), a
/// vanishing on-shell divergence in both representations, and a perturbed
/// current as negative control.
pub fn noether_currents() -> CriterionResult {
    criterion("noether-currents", None, || {
        let mut divergence_checks = 0usize;
        for kind in [RepKind::Lorentz, RepKind::Galilean] {
            let with_potentials = System::new(Model::new(kind)).map_err(|e| e.to_string())?;
            let free = System::new(Model::free(kind)).map_err(|e| e.to_string())?;
            for gen in builtin_generators() {
                // The phase generator leaves the form invariant for arbitrary
                // potentials; every family does in the free model.
                if check_invariance(&gen.field, &free.omega) != InvarianceVerdict::Invariant {
                    return Err(format!("{:?} {} is not a free-model symmetry", kind, gen.label));
                }
                let homes: &[&System] = if gen.label == "gauge" {
                    if check_invariance(&gen.field, &with_potentials.omega)
                        != InvarianceVerdict::Invariant
                    {
                        return Err(format!(
                            "{kind:?} gauge generator must be a symmetry for arbitrary potentials"
                        ));
                    }
                    &[&free, &with_potentials]
                } else {
                    &[&free]
                };
                for sys in homes {
                    let current = sys.current(&gen).map_err(|e| e.to_string())?;
                    let rewriter = sys.rewriter();
                    let div = onshell_divergence(&current, &rewriter).map_err(|e| e.to_string())?;
                    if !div.is_zero() {
                        return Err(format!(
                            "{:?} {}: on-shell divergence `{div}` is not zero",
                            kind, gen.label
                        ));
                    }
                    divergence_checks += 1;
                }
            }
        }

        // Hand tables, relativistic representation. Phase current
        // J^mu = hbar Psid alpha^mu Psi, valid with arbitrary potentials.
        let sys = System::new(Model::new(RepKind::Lorentz)).map_err(|e| e.to_string())?;
        let gens = builtin_generators();
        let gauge = sys.current(&gens[0]).map_err(|e| e.to_string())?;
        let gauge_table = [
            "hbar*(Psid1@*Psi1@ + Psid2@*Psi2@ + Psid3@*Psi3@ + Psid4@*Psi4@)",
            "hbar*c*(Psid1@*Psi4@ + Psid2@*Psi3@ + Psid3@*Psi2@ + Psid4@*Psi1@)",
            "hbar*c*(-i*Psid1@*Psi4@ + i*Psid2@*Psi3@ - i*Psid3@*Psi2@ + i*Psid4@*Psi1@)",
            "hbar*c*(Psid1@*Psi3@ - Psid2@*Psi4@ + Psid3@*Psi1@ - Psid4@*Psi2@)",
        ];
        for (mu, entry) in gauge_table.iter().enumerate() {
            expect_eq(&format!("phase current J^{mu}"), &gauge.j[mu], &table(entry))?;
            expect_eq(
                &format!("phase current on-shell J^{mu}"),
                &gauge.j_onshell[mu],
                &table(entry),
            )?;
        }

        // Momentum current along x1 in the free model, after the on-shell
        // reduction: J^mu = i hbar Psid alpha^mu d1 Psi.
        let free = System::new(Model::free(RepKind::Lorentz)).map_err(|e| e.to_string())?;
        let trans = gens
            .iter()
            .find(|g| g.label == "space-translation-1")
            .ok_or("missing translation generator")?;
        let momentum = free.current(trans).map_err(|e| e.to_string())?;
        let momentum_table = [
            "i*hbar*(Psid1@*d(Psi1@,x1) + Psid2@*d(Psi2@,x1) \
             + Psid3@*d(Psi3@,x1) + Psid4@*d(Psi4@,x1))",
            "i*hbar*c*(Psid1@*d(Psi4@,x1) + Psid2@*d(Psi3@,x1) \
             + Psid3@*d(Psi2@,x1) + Psid4@*d(Psi1@,x1))",
            "i*hbar*c*(-i*Psid1@*d(Psi4@,x1) + i*Psid2@*d(Psi3@,x1) \
             - i*Psid3@*d(Psi2@,x1) + i*Psid4@*d(Psi1@,x1))",
            "i*hbar*c*(Psid1@*d(Psi3@,x1) - Psid2@*d(Psi4@,x1) \
             + Psid3@*d(Psi1@,x1) - Psid4@*d(Psi2@,x1))",
        ];
        for (mu, entry) in momentum_table.iter().enumerate() {
            expect_eq(
                &format!("momentum current on-shell J^{mu}"),
                &momentum.j_onshell[mu],
                &table(entry),
            )?;
        }
        let momentum_density = table(
            "-i*hbar*(Psid1@*d(Psi1@,x1) + Psid2@*d(Psi2@,x1) \
             + Psid3@*d(Psi3@,x1) + Psid4@*d(Psi4@,x1))",
        );
        expect_eq("momentum density", &momentum.charge_density, &momentum_density)?;

        // Energy density in the free model: the time-derivative terms cancel
        // between the contraction and the equation rows, leaving
        // Psid [c alpha.(-i hbar grad) + m beta] Psi.
        let time = gens
            .iter()
            .find(|g| g.label == "time-translation")
            .ok_or("missing time-translation generator")?;
        let energy = free.current(time).map_err(|e| e.to_string())?;
        let energy_density = table(
            "-i*hbar*c*(Psid1@*d(Psi4@,x1) + Psid2@*d(Psi3@,x1) \
             + Psid3@*d(Psi2@,x1) + Psid4@*d(Psi1@,x1)) \
             - hbar*c*(Psid1@*d(Psi4@,x2) - Psid2@*d(Psi3@,x2) \
             + Psid3@*d(Psi2@,x2) - Psid4@*d(Psi1@,x2)) \
             - i*hbar*c*(Psid1@*d(Psi3@,x3) - Psid2@*d(Psi4@,x3) \
             + Psid3@*d(Psi1@,x3) - Psid4@*d(Psi2@,x3)) \
             + m*c^2*(Psid1@*Psi1@ + Psid2@*Psi2@ - Psid3@*Psi3@ - Psid4@*Psi4@)",
        );
        expect_eq("energy density", &energy.charge_density, &energy_density)?;

        // Negative control: damaging one spatial component must break the
        // conservation law.
        let mut broken = NoetherCurrent {
            label: "perturbed".into(),
            j: gauge.j.clone(),
            j_onshell: gauge.j_onshell.clone(),
            charge_density: gauge.charge_density.clone(),
            orientation: gauge.orientation,
        };
        broken.j[1] = broken.j[1].add(&table("hbar*x2*Psid1@*Psi1@"));
        let rewriter = sys.rewriter();
        let div = onshell_divergence(&broken, &rewriter).map_err(|e| e.to_string())?;
        if div.is_zero() {
            return Err("perturbed current still reports a zero divergence".into());
        }

        Ok(format!(
            "{divergence_checks} on-shell divergences vanish, component tables match, \
             perturbed current is caught"
        ))
    })
}

/// The rotation charge densities about all three axes must equal
/// `Psid alpha^0 [x_j p_k - x_k p_j + (hbar/2) Sigma^i] Psi` with `p = -i hbar d`
/// and `Sigma^i` the block-diagonal spin matrix, in both representations
/// (the nonrelativistic `alpha^0` restricts the sum to the upper pair).
pub fn rotation_charge_density() -> CriterionResult {
    criterion("rotation-charge-density", None, || {
        // Orbital part `x_j p_k - x_k p_j` summed over the listed components.
        let orbital = |j: usize, k: usize, comps: &[usize]| -> String {
            comps
                .iter()
                .map(|a| {
                    format!(
                        "(-i*hbar*x{j}*Psid{a}@*d(Psi{a}@,x{k}) \
                         + i*hbar*x{k}*Psid{a}@*d(Psi{a}@,x{j}))"
                    )
                })
                .collect::<Vec<_>>()
                .join(" + ")
        };
        // Spin part (hbar/2) Sigma^i on the same components, one literal per
        // axis and representation block.
        let spin_full = [
            "hbar/2*(Psid1@*Psi2@ + Psid2@*Psi1@ + Psid3@*Psi4@ + Psid4@*Psi3@)",
            "hbar/2*(-i*Psid1@*Psi2@ + i*Psid2@*Psi1@ - i*Psid3@*Psi4@ + i*Psid4@*Psi3@)",
            "hbar/2*(Psid1@*Psi1@ - Psid2@*Psi2@ + Psid3@*Psi3@ - Psid4@*Psi4@)",
        ];
        let spin_upper = [
            "hbar/2*(Psid1@*Psi2@ + Psid2@*Psi1@)",
            "hbar/2*(-i*Psid1@*Psi2@ + i*Psid2@*Psi1@)",
            "hbar/2*(Psid1@*Psi1@ - Psid2@*Psi2@)",
        ];
        let axes = [(1usize, 2usize, 3usize), (2, 3, 1), (3, 1, 2)];

        for kind in [RepKind::Lorentz, RepKind::Galilean] {
            let sys = System::new(Model::free(kind)).map_err(|e| e.to_string())?;
            let gens = builtin_generators();
            let (comps, spins): (&[usize], &[&str; 3]) = match kind {
                RepKind::Lorentz => (&[1, 2, 3, 4], &spin_full.map(|s| s)),
                RepKind::Galilean => (&[1, 2], &spin_upper.map(|s| s)),
            };
            for &(i, j, k) in &axes {
                let gen = gens
                    .iter()
                    .find(|g| g.label == format!("rotation-{i}"))
                    .ok_or("missing rotation generator")?;
                let current = sys.current(gen).map_err(|e| e.to_string())?;
                let expected = table(&format!("{} + {}", orbital(j, k, comps), spins[i - 1]));
                expect_eq(
                    &format!("{kind:?} axis-{i} rotation density"),
                    &current.charge_density,
                    &expected,
                )?;
            }
        }
        Ok("all six rotation densities carry the orbital part plus the spin half".into())
    })
}

/// Position/momentum and momentum/momentum commutators applied to an opaque
/// test function.
pub fn canonical_commutators() -> CriterionResult {
    criterion("canonical-commutators", None, || {
        let report = heisenberg_check();
        if !report.ok {
            let bad: Vec<String> = report
                .residuals
                .iter()
                .filter(|(_, _, r)| !r.is_zero())
                .map(|(j, k, r)| format!("[x{j}, p{k}] residual `{r}`"))
                .chain(
                    report
                        .momentum_residuals
                        .iter()
                        .filter(|(_, _, r)| !r.is_zero())
                        .map(|(j, k, r)| format!("[p{j}, p{k}] residual `{r}`")),
                )
                .collect();
            return Err(bad.join("; "));
        }
        Ok(format!(
            "{} position/momentum and {} momentum/momentum pairs check out",
            report.residuals.len(),
            report.momentum_residuals.len()
        ))
    })
}

/// Long free relativistic line run: norm and momentum drifts stay at rounding
/// level, and the accumulated plane-wave phase reproduces the dispersion
/// relation with the expected second-order convergence in the step size.
pub fn dirac_line_dispersion() -> CriterionResult {
    criterion("dirac-line-dispersion", Some(Duration::from_secs(30)), || {
        let cfg = load("free_dirac_1d")?;
        let out = simulate::run(&cfg).map_err(|e| e.to_string())?;
        let norm_drift = drift_of(&out.series, "norm")?;
        let px_drift = drift_of(&out.series, "px")?;
        bound("norm drift", norm_drift, 1e-10)?;
        bound("momentum drift", px_drift, 1e-10)?;

        let grid = cfg.build_grid().map_err(|e| e.to_string())?;
        let consts = cfg.phys_consts().map_err(|e| e.to_string())?;
        let packet = cfg.packet_kind(grid).map_err(|e| e.to_string())?;
        let k = match &packet {
            PacketKind::PlaneWave { k, .. } => k[0],
            _ => return Err("scenario is expected to start from a plane wave".into()),
        };
        let psi0 = init_packet(grid, RepKind::Lorentz, &packet, &consts)
            .map_err(|e| e.to_string())?;
        let energy = dirac_energy(k, &consts);

        let mut errors = Vec::new();
        for scale in [1usize, 2, 4] {
            let mut refined = cfg.clone();
            refined.evolve.dt = cfg.evolve.dt / scale as f64;
            refined.evolve.steps = cfg.evolve.steps * scale;
            refined.evolve.record_every = refined.evolve.steps;
            let run = simulate::run(&refined).map_err(|e| e.to_string())?;
            let total_time = refined.evolve.dt * refined.evolve.steps as f64;
            // The run multiplies the state by exp(i phase) with
            // |phase| = E(k) T < pi for this scenario, so a single overlap
            // recovers it without unwrapping.
            let phase = psi0.inner(&run.state).arg();
            let expected = -energy * total_time;
            errors.push((phase - expected).abs() / expected.abs());
        }
        if errors[0] > 1e-6 {
            return Err(format!("phase error {:.3e} exceeds 1e-6", errors[0]));
        }
        let r01 = errors[0] / errors[1];
        let r12 = errors[1] / errors[2];
        if !(3.0..=5.0).contains(&r01) || !(3.0..=5.0).contains(&r12) {
            return Err(format!(
                "convergence ratios {r01:.2} and {r12:.2} fall outside the second-order window \
                 (errors {:.3e}, {:.3e}, {:.3e})",
                errors[0], errors[1], errors[2]
            ));
        }
        Ok(format!(
            "norm drift {norm_drift:.2e}, momentum drift {px_drift:.2e}, phase error \
             {:.2e} refining by {r01:.2} and {r12:.2}",
            errors[0]
        ))
    })
}

/// Plane run in the rotationally symmetric gauge: norm, energy, and total
/// angular momentum hold to their bounds, while re-centering the same field
/// away from the rotation axis (negative control) visibly breaks the angular
/// momentum drift.
pub fn symmetric_gauge_invariants() -> CriterionResult {
    criterion("symmetric-gauge-invariants", Some(Duration::from_secs(60)), || {
        let cfg = load("pauli_symmetric_gauge")?;
        let out = simulate::run(&cfg).map_err(|e| e.to_string())?;
        let norm_drift = drift_of(&out.series, "norm")?;
        let energy_drift = drift_of(&out.series, "energy")?;
        let jz_drift = drift_of(&out.series, "Jz")?;
        bound("norm drift", norm_drift, 1e-10)?;
        bound("energy drift", energy_drift, 1e-8)?;
        bound("Jz drift", jz_drift, 1e-6)?;

        let mut off_center = cfg.clone();
        off_center.fields.a1 = Some("-B*(x2-4)/2".into());
        off_center.fields.a2 = Some("B*(x1-4)/2".into());
        off_center.evolve.record_every = 25;
        off_center.checks = Default::default();
        let control = simulate::run(&off_center).map_err(|e| e.to_string())?;
        let control_jz = drift_of(&control.series, "Jz")?;
        if control_jz <= 1e-3 {
            return Err(format!(
                "off-center control only moved Jz by {control_jz:.3e}; expected a visible break"
            ));
        }
        Ok(format!(
            "norm {norm_drift:.2e}, energy {energy_drift:.2e}, Jz {jz_drift:.2e}; \
             off-center control drifts Jz by {control_jz:.2e}"
        ))
    })
}

/// Uniform-field spin precession: the fitted in-plane rotation frequency
/// must match `|e B / m|` read off the configured vector potential.
pub fn zeeman_precession() -> CriterionResult {
    criterion("zeeman-precession", None, || {
        let cfg = load("zeeman_precession")?;
        let out = simulate::run(&cfg).map_err(|e| e.to_string())?;
        bound("norm drift", drift_of(&out.series, "norm")?, 1e-10)?;
        let spins = out.series.spin_xy.as_ref().ok_or("spin track missing")?;
        let fitted = fit_precession(&out.series.times, spins)
            .ok_or("precession fit failed to produce a frequency")?;
        let expected = cfg.expected_precession().map_err(|e| e.to_string())?;
        let rel = (fitted - expected).abs() / expected.abs();
        if rel > 1e-3 {
            return Err(format!(
                "fitted frequency {fitted:.6} vs expected {expected:.6} (relative error {rel:.3e})"
            ));
        }
        Ok(format!("fitted {fitted:.6} against {expected:.6}, relative error {rel:.2e}"))
    })
}

const CONSTANT_NAMES: [&str; 4] = ["hbar", "m", "c", "e"];

/// Random expression over the chart: coordinates, physical constants, the
/// imaginary unit, rational coefficients, and (when `on_section`) field
/// symbols and on-section opaque functions.
fn random_expr(rng: &mut ChaCha8Rng, depth: usize, on_section: bool) -> Expr {
    if depth == 0 {
        let roll = rng.gen_range(0..if on_section { 10 } else { 7 });
        return match roll {
            0 | 1 => Expr::int(rng.gen_range(-6..=6)),
            2 => Expr::ratio(rng.gen_range(-9..=9), rng.gen_range(1..=9)),
            3 => Expr::i(),
            4 | 5 => Expr::sym(Chart.coord_symbol(rng.gen_range(0..4u8))),
            6 => Expr::sym(Symbol::constant(CONSTANT_NAMES[rng.gen_range(0..4)])),
            7 => Expr::sym(Chart.psi_symbol(rng.gen_range(1..=4))),
            8 => Expr::sym(Chart.psid_symbol(rng.gen_range(1..=4))),
            _ => crate::derivation::field_expr(rng.gen_bool(0.5), rng.gen_range(0..4)),
        };
    }
    match rng.gen_range(0..10) {
        0..=3 => random_expr(rng, depth - 1, on_section).add(&random_expr(rng, depth - 1, on_section)),
        4..=6 => random_expr(rng, depth - 1, on_section).mul(&random_expr(rng, depth - 1, on_section)),
        7 => random_expr(rng, depth - 1, on_section).sub(&random_expr(rng, depth - 1, on_section)),
        8 => random_expr(rng, depth - 1, on_section).neg(),
        _ => random_expr(rng, depth - 1, on_section)
            .pow(rng.gen_range(0..=3))
            .expect("nonnegative powers always exist"),
    }
}

fn random_form(rng: &mut ChaCha8Rng, degree: u8) -> Form {
    let mut form = Form::zero(degree);
    for _ in 0..rng.gen_range(1..=3) {
        let mut indices: Vec<u8> = (0..12u8).collect();
        for i in 0..degree as usize {
            let j = rng.gen_range(i..indices.len());
            indices.swap(i, j);
        }
        let mut wedge: Vec<u8> = indices[..degree as usize].to_vec();
        wedge.sort_unstable();
        form = form.add(&Form::from_wedge(random_expr(rng, 2, true), &wedge));
    }
    form
}

/// Randomized law suites over the exact kernel: commutative-ring axioms and
/// the Leibniz rule, print/parse round-trips, nilpotency and the graded
/// Leibniz rule of the exterior derivative, and quadratic scaling of every
/// numeric charge under complex rescaling of the state.
pub fn algebraic_property_suites() -> CriterionResult {
    criterion("algebraic-property-suites", None, || {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_cafe);

        let ring_cases = 200;
        for case in 0..ring_cases {
            let a = random_expr(&mut rng, 3, true);
            let b = random_expr(&mut rng, 3, true);
            let c = random_expr(&mut rng, 2, true);
            let checks: [(&str, Expr, Expr); 8] = [
                ("add associativity", a.add(&b).add(&c), a.add(&b.add(&c))),
                ("add commutativity", a.add(&b), b.add(&a)),
                ("mul associativity", a.mul(&b).mul(&c), a.mul(&b.mul(&c))),
                ("mul commutativity", a.mul(&b), b.mul(&a)),
                ("distributivity", a.mul(&b.add(&c)), a.mul(&b).add(&a.mul(&c))),
                ("additive inverse", a.sub(&a), Expr::zero()),
                ("identities", a.mul(&Expr::one()).add(&Expr::zero()), a.clone()),
                ("double negation", a.neg().neg(), a.clone()),
            ];
            for (law, got, want) in checks {
                if got != want {
                    return Err(format!("ring case {case}: {law} failed"));
                }
            }
            let x1 = Chart.coord_symbol(1);
            let leibniz = a.mul(&b).differentiate(&x1);
            let split = a.differentiate(&x1).mul(&b).add(&a.mul(&b.differentiate(&x1)));
            if leibniz != split {
                return Err(format!("ring case {case}: Leibniz rule failed"));
            }
        }

        let roundtrip_cases = 1000;
        for case in 0..roundtrip_cases {
            let e = random_expr(&mut rng, 3, false);
            let printed = e.to_string();
            let mut ctx = Context::standard();
            let reparsed = Expr::parse(&printed, &mut ctx)
                .map_err(|err| format!("round-trip case {case}: `{printed}`: {err}"))?;
            if reparsed != e {
                return Err(format!(
                    "round-trip case {case}: `{printed}` reparsed to `{reparsed}`"
                ));
            }
        }

        let form_cases = 200;
        for case in 0..form_cases {
            let p = rng.gen_range(0..=2u8);
            let alpha = random_form(&mut rng, p);
            let dd = alpha.exterior_derivative().exterior_derivative();
            if !dd.is_zero() {
                return Err(format!("form case {case}: d(d alpha) is not zero"));
            }
            let q = rng.gen_range(0..=1u8);
            let beta = random_form(&mut rng, q);
            let lhs = alpha.wedge(&beta).exterior_derivative();
            let mut rhs = alpha.exterior_derivative().wedge(&beta);
            let tail = alpha.wedge(&beta.exterior_derivative());
            rhs = if p % 2 == 1 { rhs.sub(&tail) } else { rhs.add(&tail) };
            if lhs != rhs {
                return Err(format!("form case {case}: graded Leibniz rule failed"));
            }
        }

        // Quadratic scaling of the numeric charges under psi -> s psi.
        let grid = Grid::plane([16, 16], [8.0, 8.0]).map_err(|e| e.to_string())?;
        let consts = PhysConsts { hbar: 1.0, m: 1.0, c: 1.0, e: 1.0 };
        let fields = FieldSet::compile(
            std::array::from_fn(|_| Expr::zero()),
            grid,
            &Default::default(),
            TermMask::default(),
        )
        .map_err(|e| e.to_string())?;
        let scaling_cases = 20;
        for case in 0..scaling_cases {
            let mut state = SpinorField::zero(grid, 2);
            for comp in &mut state.comp {
                for v in comp.iter_mut() {
                    *v = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                }
            }
            let s = Complex64::new(rng.gen_range(0.2..2.0), rng.gen_range(-1.5..1.5));
            let factor = charge_scaling_factor(s);
            let mut op = StepOp::Pauli(
                PauliOp::new(grid, consts, &fields, 0.01).map_err(|e| e.to_string())?,
            );
            let rep = RepKind::Galilean;
            let before = [
                charges::norm(&state, rep),
                charges::momentum(&state, rep, 0, consts.hbar),
                charges::momentum(&state, rep, 1, consts.hbar),
                charges::energy(&state, &mut op),
            ];
            let (l0, s0, j0) =
                charges::angular_momentum_z(&state, rep, consts.hbar).map_err(|e| e.to_string())?;
            let mut scaled = state.clone();
            scaled.scale(s);
            let after = [
                charges::norm(&scaled, rep),
                charges::momentum(&scaled, rep, 0, consts.hbar),
                charges::momentum(&scaled, rep, 1, consts.hbar),
                charges::energy(&scaled, &mut op),
            ];
            let (l1, s1, j1) =
                charges::angular_momentum_z(&scaled, rep, consts.hbar).map_err(|e| e.to_string())?;
            let pairs = [
                (before[0], after[0]),
                (before[1], after[1]),
                (before[2], after[2]),
                (before[3], after[3]),
                (l0, l1),
                (s0, s1),
                (j0, j1),
            ];
            for (idx, (q, q_scaled)) in pairs.iter().enumerate() {
                let want = factor * q;
                if (q_scaled - want).abs() > 1e-10 * (1.0 + want.abs()) {
                    return Err(format!(
                        "scaling case {case}, charge {idx}: {q_scaled:.3e} vs {want:.3e}"
                    ));
                }
            }
        }

        Ok(format!(
            "{ring_cases} ring/derivation cases, {roundtrip_cases} round-trips, \
             {form_cases} form cases, {scaling_cases} scaling cases"
        ))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn criterion_harness_reports_failures_and_panics() {
        let failed = criterion("x", None, || Err("boom".into()));
        assert!(!failed.passed);
        assert_eq!(failed.details, "boom");
        let panicked = criterion("x", None, || panic!("kaboom"));
        assert!(!panicked.passed);
        assert!(panicked.details.contains("kaboom"));
        let slow = criterion("x", Some(Duration::from_nanos(1)), || {
            std::thread::sleep(Duration::from_millis(2));
            Ok("done".into())
        });
        assert!(!slow.passed);
        assert!(slow.details.contains("budget"));
    }

    #[test]
    fn hand_table_shorthand_expands_section_arguments() {
        assert_eq!(table("Psi1@"), crate::derivation::field_expr(false, 0));
    }
}
