//! Canonical symbolic expressions.
//!
//! An [`Expr`] is a finite sum of monomials: an exact complex-rational
//! coefficient times a product of integer powers of atoms. Atoms are either
//! symbols (chart coordinates, named constants, named parameters) or opaque
//! functions of chart coordinates carrying a derivative multi-index. The
//! representation is canonical: atoms within a monomial are kept in a fixed
//! total order, monomials are keyed in a map, and zero coefficients are
//! dropped on the fly. Structural equality therefore coincides with
//! mathematical equality over this term language.
//!
//! Negative powers (division) are restricted to constant and parameter
//! symbols; dividing by coordinates or opaque functions is a documented
//! error, as is any non-monomial divisor.

pub mod parse;
mod print;

pub use parse::{Context, IdentPolicy};

use std::collections::BTreeMap;
use std::sync::Arc;

use num_complex::Complex64;
use num_traits::Zero;
use thiserror::Error;

use crate::scalar::{cnum_conj, cnum_i, cnum_int, cnum_one, cnum_ratio, cnum_recip, cnum_to_c64, CNum};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExprError {
    #[error("syntax error at byte {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("unknown identifier `{0}` (strict mode)")]
    UnknownIdent(String),
    #[error("identifier `{name}` already declared as {existing}")]
    Redeclared { name: String, existing: String },
    #[error("division requires a monomial over constant or parameter symbols, got `{0}`")]
    NonInvertible(String),
    #[error("substitution rules overlap on `{0}`")]
    OverlappingRules(String),
    #[error("substitution rule set is cyclic through `{0}`")]
    CyclicRules(String),
    #[error("no numeric binding for atom `{0}`")]
    UnboundAtom(String),
    #[error("expected {what}, found `{found}`")]
    Expected { what: String, found: String },
}

/// What a symbol denotes. The order of the variants fixes the print order of
/// atoms inside a monomial: constants, then parameters, then coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SymbolKind {
    Constant,
    Parameter,
    /// Chart coordinate with its chart index.
    Coordinate(u8),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Symbol {
    pub kind: SymbolKind,
    pub name: Arc<str>,
}

impl Symbol {
    pub fn constant(name: &str) -> Self {
        Symbol { kind: SymbolKind::Constant, name: name.into() }
    }

    pub fn parameter(name: &str) -> Self {
        Symbol { kind: SymbolKind::Parameter, name: name.into() }
    }

    pub fn coordinate(index: u8, name: &str) -> Self {
        Symbol { kind: SymbolKind::Coordinate(index), name: name.into() }
    }

    pub fn is_invertible(&self) -> bool {
        matches!(self.kind, SymbolKind::Constant | SymbolKind::Parameter)
    }
}

/// Uninterpreted function of an ordered list of chart coordinates, together
/// with a derivative multi-index aligned with the argument list.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct OpaqueFn {
    pub name: Arc<str>,
    /// Chart indices of the arguments, in call order.
    pub args: Arc<[u8]>,
    /// Partial-derivative orders, one per argument.
    pub deriv: Vec<u32>,
}

impl OpaqueFn {
    pub fn new(name: &str, args: &[u8]) -> Self {
        OpaqueFn { name: name.into(), args: args.into(), deriv: vec![0; args.len()] }
    }

    /// One more derivative with respect to the argument at `pos`.
    pub fn bump(&self, pos: usize) -> Self {
        let mut d = self.deriv.clone();
        d[pos] += 1;
        OpaqueFn { name: self.name.clone(), args: self.args.clone(), deriv: d }
    }

    pub fn arg_pos(&self, chart_index: u8) -> Option<usize> {
        self.args.iter().position(|&a| a == chart_index)
    }

    /// If `self` is `pattern` differentiated further, the extra multi-index.
    pub fn excess_over(&self, pattern: &OpaqueFn) -> Option<Vec<u32>> {
        if self.name != pattern.name || self.args != pattern.args {
            return None;
        }
        let mut extra = Vec::with_capacity(self.deriv.len());
        for (d, p) in self.deriv.iter().zip(pattern.deriv.iter()) {
            if d < p {
                return None;
            }
            extra.push(d - p);
        }
        Some(extra)
    }

    pub fn total_deriv_order(&self) -> u32 {
        self.deriv.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Atom {
    Sym(Symbol),
    Fn(OpaqueFn),
}

impl Atom {
    pub fn is_invertible(&self) -> bool {
        match self {
            Atom::Sym(s) => s.is_invertible(),
            Atom::Fn(_) => false,
        }
    }

    pub fn name(&self) -> &str {
        match self {
            Atom::Sym(s) => &s.name,
            Atom::Fn(f) => &f.name,
        }
    }
}

/// Sorted power product; the monomial key. Powers are nonzero, atoms strictly
/// increasing.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct PowProd(pub Vec<(Atom, i32)>);

impl PowProd {
    fn unit() -> Self {
        PowProd(Vec::new())
    }

    /// Merge two sorted power products, adding powers of shared atoms.
    fn merge(&self, other: &PowProd) -> PowProd {
        let (a, b) = (&self.0, &other.0);
        let mut out = Vec::with_capacity(a.len() + b.len());
        let (mut i, mut j) = (0, 0);
        while i < a.len() && j < b.len() {
            match a[i].0.cmp(&b[j].0) {
                std::cmp::Ordering::Less => {
                    out.push(a[i].clone());
                    i += 1;
                }
                std::cmp::Ordering::Greater => {
                    out.push(b[j].clone());
                    j += 1;
                }
                std::cmp::Ordering::Equal => {
                    let p = a[i].1 + b[j].1;
                    if p != 0 {
                        out.push((a[i].0.clone(), p));
                    }
                    i += 1;
                    j += 1;
                }
            }
        }
        out.extend_from_slice(&a[i..]);
        out.extend_from_slice(&b[j..]);
        PowProd(out)
    }
}

/// Canonical expression: map from power product to nonzero coefficient.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Expr {
    terms: BTreeMap<PowProd, CNum>,
}

impl Expr {
    pub fn zero() -> Self {
        Expr::default()
    }

    pub fn one() -> Self {
        Expr::from_cnum(cnum_one())
    }

    pub fn int(n: i64) -> Self {
        Expr::from_cnum(cnum_int(n))
    }

    pub fn ratio(num: i64, den: i64) -> Self {
        Expr::from_cnum(cnum_ratio(num, den))
    }

    /// The imaginary unit.
    pub fn i() -> Self {
        Expr::from_cnum(cnum_i())
    }

    pub fn from_cnum(c: CNum) -> Self {
        let mut e = Expr::zero();
        e.add_term(PowProd::unit(), c);
        e
    }

    pub fn sym(s: Symbol) -> Self {
        Expr::atom(Atom::Sym(s))
    }

    pub fn func(f: OpaqueFn) -> Self {
        Expr::atom(Atom::Fn(f))
    }

    pub fn atom(a: Atom) -> Self {
        let mut e = Expr::zero();
        e.add_term(PowProd(vec![(a, 1)]), cnum_one());
        e
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&PowProd, &CNum)> {
        self.terms.iter()
    }

    /// The coefficient of the constant monomial.
    pub fn constant_part(&self) -> CNum {
        self.terms.get(&PowProd::unit()).cloned().unwrap_or_else(crate::scalar::cnum_zero)
    }

    fn add_term(&mut self, key: PowProd, c: CNum) {
        if c.is_zero() {
            return;
        }
        use std::collections::btree_map::Entry;
        match self.terms.entry(key) {
            Entry::Vacant(v) => {
                v.insert(c);
            }
            Entry::Occupied(mut o) => {
                let sum = o.get().clone() + c;
                if sum.is_zero() {
                    o.remove();
                } else {
                    o.insert(sum);
                }
            }
        }
    }

    pub fn add(&self, rhs: &Expr) -> Expr {
        let mut out = self.clone();
        for (k, c) in &rhs.terms {
            out.add_term(k.clone(), c.clone());
        }
        out
    }

    pub fn neg(&self) -> Expr {
        let mut out = Expr::zero();
        for (k, c) in &self.terms {
            out.terms.insert(k.clone(), -c.clone());
        }
        out
    }

    pub fn sub(&self, rhs: &Expr) -> Expr {
        self.add(&rhs.neg())
    }

    pub fn mul(&self, rhs: &Expr) -> Expr {
        let mut out = Expr::zero();
        for (ka, ca) in &self.terms {
            for (kb, cb) in &rhs.terms {
                out.add_term(ka.merge(kb), ca.clone() * cb.clone());
            }
        }
        out
    }

    pub fn scale(&self, c: &CNum) -> Expr {
        let mut out = Expr::zero();
        for (k, v) in &self.terms {
            out.add_term(k.clone(), v.clone() * c.clone());
        }
        out
    }

    /// Multiplicative inverse. Defined only for a single monomial whose atoms
    /// are all constant or parameter symbols.
    pub fn invert(&self) -> Result<Expr, ExprError> {
        if self.terms.len() != 1 {
            return Err(ExprError::NonInvertible(self.to_string()));
        }
        let (key, coeff) = self.terms.iter().next().unwrap();
        if key.0.iter().any(|(a, _)| !a.is_invertible()) {
            return Err(ExprError::NonInvertible(self.to_string()));
        }
        let inv_key = PowProd(key.0.iter().map(|(a, p)| (a.clone(), -p)).collect());
        let mut out = Expr::zero();
        out.add_term(inv_key, cnum_recip(coeff));
        Ok(out)
    }

    pub fn div(&self, rhs: &Expr) -> Result<Expr, ExprError> {
        Ok(self.mul(&rhs.invert()?))
    }

    /// Integer power. Negative exponents require an invertible base.
    pub fn pow(&self, n: i32) -> Result<Expr, ExprError> {
        if n < 0 {
            return self.invert()?.pow(-n);
        }
        let mut acc = Expr::one();
        let mut base = self.clone();
        let mut k = n as u32;
        while k > 0 {
            if k & 1 == 1 {
                acc = acc.mul(&base);
            }
            k >>= 1;
            if k > 0 {
                base = base.mul(&base);
            }
        }
        Ok(acc)
    }

    /// Partial derivative with respect to a symbol. For a chart coordinate
    /// this also advances the derivative multi-index of opaque functions that
    /// take the coordinate as an argument; all other atoms are constant.
    pub fn differentiate(&self, wrt: &Symbol) -> Expr {
        let mut out = Expr::zero();
        for (key, coeff) in &self.terms {
            for (idx, (atom, pow)) in key.0.iter().enumerate() {
                let datom: Option<Atom> = match atom {
                    Atom::Sym(s) => {
                        if s == wrt {
                            None // derivative is 1
                        } else {
                            continue;
                        }
                    }
                    Atom::Fn(f) => {
                        let SymbolKind::Coordinate(ci) = wrt.kind else { continue };
                        match f.arg_pos(ci) {
                            Some(pos) => Some(Atom::Fn(f.bump(pos))),
                            None => continue,
                        }
                    }
                };
                // Leibniz: coeff * pow * atom^(pow-1) * datom * (other factors).
                let mut factors: Vec<(Atom, i32)> = Vec::with_capacity(key.0.len() + 1);
                for (j, (a, p)) in key.0.iter().enumerate() {
                    let p = if j == idx { p - 1 } else { *p };
                    if p != 0 {
                        factors.push((a.clone(), p));
                    }
                }
                let mut term_key = PowProd(factors);
                if let Some(d) = datom {
                    term_key = term_key.merge(&PowProd(vec![(d, 1)]));
                }
                out.add_term(term_key, coeff.clone() * cnum_int(*pow as i64));
            }
        }
        out
    }

    /// Repeated derivative along a multi-index over the chart coordinates of
    /// `f.args` (used when a substitution pattern matches a differentiated
    /// occurrence).
    fn differentiate_multi(&self, args: &[u8], extra: &[u32], coords: &dyn Fn(u8) -> Symbol) -> Expr {
        let mut out = self.clone();
        for (pos, &order) in extra.iter().enumerate() {
            let sym = coords(args[pos]);
            for _ in 0..order {
                out = out.differentiate(&sym);
            }
        }
        out
    }

    /// Simultaneous substitution of atoms by expressions.
    ///
    /// Symbol patterns match exactly. Opaque-function patterns match any
    /// occurrence differentiated at least as far as the pattern, and the
    /// replacement is differentiated by the excess multi-index. Rules must
    /// not overlap (at most one rule per symbol and per function name plus
    /// argument list), and no rule's right-hand side may contain an atom
    /// matched by any rule (a cyclic rule set is rejected).
    ///
    /// `coord_sym` resolves chart indices to coordinate symbols so matched
    /// excess derivatives can be applied to replacements.
    pub fn substitute(
        &self,
        rules: &[(Atom, Expr)],
        coord_sym: &dyn Fn(u8) -> Symbol,
    ) -> Result<Expr, ExprError> {
        check_rules(rules)?;
        let mut out = Expr::zero();
        for (key, coeff) in &self.terms {
            let mut term = Expr::from_cnum(coeff.clone());
            for (atom, pow) in &key.0 {
                let replacement = match_rule(atom, rules, coord_sym);
                let factor = match replacement {
                    Some(r) => r.pow(*pow)?,
                    None => {
                        let mut e = Expr::zero();
                        e.add_term(PowProd(vec![(atom.clone(), *pow)]), cnum_one());
                        e
                    }
                };
                term = term.mul(&factor);
            }
            out = out.add(&term);
        }
        Ok(out)
    }

    /// Complex conjugation of coefficients only; atoms are untouched.
    pub fn conj_coefficients(&self) -> Expr {
        let mut out = Expr::zero();
        for (k, c) in &self.terms {
            out.terms.insert(k.clone(), cnum_conj(c));
        }
        out
    }

    /// Rebuild with every atom passed through `f` (re-canonicalizes).
    pub fn map_atoms(&self, f: &dyn Fn(&Atom) -> Atom) -> Expr {
        let mut out = Expr::zero();
        for (key, coeff) in &self.terms {
            let mut term = Expr::from_cnum(coeff.clone());
            for (atom, pow) in &key.0 {
                let mut e = Expr::zero();
                e.add_term(PowProd(vec![(f(atom), *pow)]), cnum_one());
                term = term.mul(&e);
            }
            out = out.add(&term);
        }
        out
    }

    /// True if any atom of the expression is `pattern` or, for function
    /// patterns, a further-differentiated occurrence of it.
    pub fn contains_match(&self, pattern: &Atom) -> bool {
        self.terms.keys().any(|k| k.0.iter().any(|(a, _)| atom_matches(a, pattern)))
    }

    pub fn atoms(&self) -> impl Iterator<Item = &Atom> {
        self.terms.keys().flat_map(|k| k.0.iter().map(|(a, _)| a))
    }

    /// Split an expression linear in `atom` into (coefficient, remainder)
    /// with `self = coefficient * atom + remainder`. Fails if `atom` appears
    /// with any power other than one.
    pub fn linear_split(&self, atom: &Atom) -> Result<(Expr, Expr), ExprError> {
        let mut coeff = Expr::zero();
        let mut rest = Expr::zero();
        for (key, c) in &self.terms {
            match key.0.iter().find(|(a, _)| a == atom) {
                None => rest.add_term(key.clone(), c.clone()),
                Some((_, 1)) => {
                    let reduced: Vec<(Atom, i32)> =
                        key.0.iter().filter(|(a, _)| a != atom).cloned().collect();
                    coeff.add_term(PowProd(reduced), c.clone());
                }
                Some((_, p)) => {
                    return Err(ExprError::Expected {
                        what: format!("`{}` to appear linearly", print::atom_string(atom)),
                        found: format!("power {p}"),
                    })
                }
            }
        }
        Ok((coeff, rest))
    }

    /// Numeric evaluation. Every atom present must be bound. Terms are folded
    /// in canonical key order and factors in atom order, so the floating
    /// point result is reproducible.
    pub fn eval(&self, bindings: &BTreeMap<Atom, Complex64>) -> Result<Complex64, ExprError> {
        let mut sum = Complex64::new(0.0, 0.0);
        for (key, coeff) in &self.terms {
            let mut term = cnum_to_c64(coeff);
            for (atom, pow) in &key.0 {
                let v = bindings
                    .get(atom)
                    .ok_or_else(|| ExprError::UnboundAtom(print::atom_string(atom)))?;
                term *= v.powi(*pow);
            }
            sum += term;
        }
        Ok(sum)
    }

    /// Parse from the expression grammar (see the module documentation of
    /// [`parse`]).
    pub fn parse(text: &str, ctx: &mut Context) -> Result<Expr, ExprError> {
        parse::parse_expr(text, ctx)
    }
}

fn atom_matches(atom: &Atom, pattern: &Atom) -> bool {
    match (atom, pattern) {
        (Atom::Sym(a), Atom::Sym(p)) => a == p,
        (Atom::Fn(a), Atom::Fn(p)) => a.excess_over(p).is_some(),
        _ => false,
    }
}

fn match_rule(atom: &Atom, rules: &[(Atom, Expr)], coord_sym: &dyn Fn(u8) -> Symbol) -> Option<Expr> {
    for (pat, rhs) in rules {
        match (atom, pat) {
            (Atom::Sym(a), Atom::Sym(p)) if a == p => return Some(rhs.clone()),
            (Atom::Fn(a), Atom::Fn(p)) => {
                if let Some(extra) = a.excess_over(p) {
                    if extra.iter().all(|&e| e == 0) {
                        return Some(rhs.clone());
                    }
                    return Some(rhs.differentiate_multi(&a.args, &extra, coord_sym));
                }
            }
            _ => {}
        }
    }
    None
}

fn check_rules(rules: &[(Atom, Expr)]) -> Result<(), ExprError> {
    // Overlap: two function patterns with the same name and argument list can
    // both match a common further derivative, so at most one rule per
    // (name, args) is allowed; symbol patterns must be distinct.
    for (i, (a, _)) in rules.iter().enumerate() {
        for (b, _) in &rules[i + 1..] {
            let clash = match (a, b) {
                (Atom::Sym(x), Atom::Sym(y)) => x == y,
                (Atom::Fn(x), Atom::Fn(y)) => x.name == y.name && x.args == y.args,
                _ => false,
            };
            if clash {
                return Err(ExprError::OverlappingRules(print::atom_string(a)));
            }
        }
    }
    // Cycle: right-hand sides must not contain atoms matched by any pattern.
    // (Substitution is a single simultaneous pass; a matchable atom in a
    // replacement would make the result depend on rewrite order.)
    for (_, rhs) in rules {
        for (pat, _) in rules {
            if rhs.contains_match(pat) {
                return Err(ExprError::CyclicRules(print::atom_string(pat)));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::rat_ratio;
    use num_complex::Complex;

    fn ctx() -> Context {
        Context::standard()
    }

    fn p(ctx: &mut Context, s: &str) -> Expr {
        Expr::parse(s, ctx).unwrap()
    }

    #[test]
    fn like_terms_combine() {
        let mut c = ctx();
        assert_eq!(p(&mut c, "x1 + x1"), p(&mut c, "2*x1"));
    }

    #[test]
    fn i_squared_folds_into_coefficient() {
        let mut c = ctx();
        assert_eq!(p(&mut c, "i*i"), Expr::int(-1));
        assert_eq!(p(&mut c, "i^2 + 1"), Expr::zero());
    }

    #[test]
    fn ratio_coefficient_with_inverse_constant() {
        let mut c = ctx();
        let e = p(&mut c, "hbar*e/(2*m)");
        assert_eq!(e.num_terms(), 1);
        let (key, coeff) = e.terms().next().unwrap();
        assert_eq!(*coeff, Complex::new(rat_ratio(1, 2), rat_ratio(0, 1)));
        let pows: Vec<(&str, i32)> = key.0.iter().map(|(a, p)| (a.name(), *p)).collect();
        assert_eq!(pows, vec![("e", 1), ("hbar", 1), ("m", -1)]);
    }

    #[test]
    fn subtraction_cancels_exactly() {
        let mut c = ctx();
        let e = p(&mut c, "(x1 + x2)*(x1 - x2) - x1^2 + x2^2");
        assert!(e.is_zero());
    }

    #[test]
    fn division_by_coordinate_rejected() {
        let mut c = ctx();
        let err = Expr::parse("1/x1", &mut c).unwrap_err();
        assert!(matches!(err, ExprError::NonInvertible(_)));
    }

    #[test]
    fn division_by_sum_rejected() {
        let mut c = ctx();
        let err = Expr::parse("x1/(m + e)", &mut c).unwrap_err();
        assert!(matches!(err, ExprError::NonInvertible(_)));
    }

    #[test]
    fn coordinate_derivative() {
        let mut c = ctx();
        let e = p(&mut c, "x1^3*x2");
        let x1 = c.coord_symbol(1);
        assert_eq!(e.differentiate(&x1), p(&mut c, "3*x1^2*x2"));
    }

    #[test]
    fn opaque_fn_derivative_bumps_multi_index() {
        let mut c = ctx();
        let e = p(&mut c, "A_0(x0,x1,x2,x3)");
        let x2 = c.coord_symbol(2);
        let d = e.differentiate(&x2);
        assert_eq!(d, p(&mut c, "d(A_0(x0,x1,x2,x3), x2)"));
        // Mixed partials commute: the multi-index is order free.
        let x0 = c.coord_symbol(0);
        assert_eq!(d.differentiate(&x0), e.differentiate(&x0).differentiate(&x2));
    }

    #[test]
    fn product_rule() {
        let mut c = ctx();
        let f = p(&mut c, "Psi1(x0,x1,x2,x3)");
        let g = p(&mut c, "x1^2");
        let x1 = c.coord_symbol(1);
        let lhs = f.mul(&g).differentiate(&x1);
        let rhs = f.differentiate(&x1).mul(&g).add(&f.mul(&g.differentiate(&x1)));
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn substitute_closed_form_matches_numeric_oracle() {
        // Replace an opaque function by a polynomial closed form; any
        // derivative occurrences must become derivatives of the closed form.
        // Oracle: numeric evaluation at random points with the derivative
        // values bound independently.
        use rand::Rng;
        use rand::SeedableRng;
        let mut c = ctx();
        let e = p(&mut c, "2*Psi1(x0,x1,x2,x3) + d(Psi1(x0,x1,x2,x3), x1) - i*d(Psi1(x0,x1,x2,x3), x1, x2)");
        let psi = OpaqueFn::new("Psi1", &[0, 1, 2, 3]);
        // Closed form r = x1^2*x2 + 3*x1.
        let r = p(&mut c, "x1^2*x2 + 3*x1");
        let coord = {
            let c2 = c.clone();
            move |i: u8| c2.coord_symbol(i)
        };
        let subst = e.substitute(&[(Atom::Fn(psi.clone()), r)], &coord).unwrap();

        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let (x0, x1, x2, x3) = (rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>());
            let mut b: BTreeMap<Atom, Complex64> = BTreeMap::new();
            for (i, v) in [(0u8, x0), (1, x1), (2, x2), (3, x3)] {
                b.insert(Atom::Sym(c.coord_symbol(i)), Complex64::new(v, 0.0));
            }
            let got = subst.eval(&b).unwrap();
            // Independent values: r = x1^2 x2 + 3 x1, dr/dx1 = 2 x1 x2 + 3,
            // d2r/dx1 dx2 = 2 x1.
            let rv = x1 * x1 * x2 + 3.0 * x1;
            let r1 = 2.0 * x1 * x2 + 3.0;
            let r12 = 2.0 * x1;
            let want = Complex64::new(2.0 * rv + r1, 0.0) - Complex64::new(0.0, 1.0) * r12;
            assert!((got - want).norm() < 1e-12, "got {got}, want {want}");
        }
    }

    #[test]
    fn substitute_zero_into_negative_power_rejected() {
        let mut c = ctx();
        let e = p(&mut c, "1/m");
        let m = Symbol::constant("m");
        let coord = {
            let c2 = c.clone();
            move |i: u8| c2.coord_symbol(i)
        };
        let err = e.substitute(&[(Atom::Sym(m), Expr::zero())], &coord).unwrap_err();
        assert!(matches!(err, ExprError::NonInvertible(_)));
    }

    #[test]
    fn cyclic_rules_rejected() {
        let mut c = ctx();
        let a = p(&mut c, "Psi1(x0,x1,x2,x3)");
        let b = p(&mut c, "Psi2(x0,x1,x2,x3)");
        let fa = OpaqueFn::new("Psi1", &[0, 1, 2, 3]);
        let fb = OpaqueFn::new("Psi2", &[0, 1, 2, 3]);
        let coord = {
            let c2 = c.clone();
            move |i: u8| c2.coord_symbol(i)
        };
        let err = a
            .substitute(&[(Atom::Fn(fa), b.clone()), (Atom::Fn(fb), a.clone())], &coord)
            .unwrap_err();
        assert!(matches!(err, ExprError::CyclicRules(_)));
    }

    #[test]
    fn overlapping_fn_rules_rejected() {
        let mut c = ctx();
        let e = p(&mut c, "d(Psi1(x0,x1,x2,x3), x0, x1)");
        let mut pat_t = OpaqueFn::new("Psi1", &[0, 1, 2, 3]);
        pat_t.deriv = vec![1, 0, 0, 0];
        let mut pat_x = OpaqueFn::new("Psi1", &[0, 1, 2, 3]);
        pat_x.deriv = vec![0, 1, 0, 0];
        let coord = {
            let c2 = c.clone();
            move |i: u8| c2.coord_symbol(i)
        };
        let err = e
            .substitute(&[(Atom::Fn(pat_t), Expr::one()), (Atom::Fn(pat_x), Expr::one())], &coord)
            .unwrap_err();
        assert!(matches!(err, ExprError::OverlappingRules(_)));
    }

    #[test]
    fn derivative_pattern_matches_differentiated_occurrence() {
        // Pattern d/dx0 Psi1 with replacement x1^2: an occurrence
        // d^2/dx0 dx1 Psi1 becomes d/dx1 x1^2 = 2 x1.
        let mut c = ctx();
        let e = p(&mut c, "d(Psi1(x0,x1,x2,x3), x0, x1)");
        let mut pat = OpaqueFn::new("Psi1", &[0, 1, 2, 3]);
        pat.deriv = vec![1, 0, 0, 0];
        let coord = {
            let c2 = c.clone();
            move |i: u8| c2.coord_symbol(i)
        };
        let got = e.substitute(&[(Atom::Fn(pat), p(&mut c, "x1^2"))], &coord).unwrap();
        assert_eq!(got, p(&mut c, "2*x1"));
    }

    #[test]
    fn eval_requires_bindings() {
        let mut c = ctx();
        let e = p(&mut c, "m*x1");
        let err = e.eval(&BTreeMap::new()).unwrap_err();
        assert!(matches!(err, ExprError::UnboundAtom(_)));
    }

    #[test]
    fn linear_split_solves_rows() {
        let mut c = ctx();
        let e = p(&mut c, "2*m*Psi3(x0,x1,x2,x3) + x1*Psi1(x0,x1,x2,x3)");
        let chi = Atom::Fn(OpaqueFn::new("Psi3", &[0, 1, 2, 3]));
        let (coeff, rest) = e.linear_split(&chi).unwrap();
        assert_eq!(coeff, p(&mut c, "2*m"));
        assert_eq!(rest, p(&mut c, "x1*Psi1(x0,x1,x2,x3)"));
    }
}
