//! Deterministic normal-form printing. `parse(print(e))` reproduces `e`
//! structurally.
//!
//! Each monomial is printed as a numerator and an optional denominator:
//! positive atom powers and the coefficient numerator on the left of `/`,
//! negative powers and the coefficient denominator on the right, the latter
//! parenthesized when it has several factors. Pure-imaginary coefficients
//! carry an `i` factor; full complex coefficients are parenthesized exactly,
//! e.g. `(1/2-3/4*i)*x1`.

use std::fmt;

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};

use super::{Atom, Expr, OpaqueFn, PowProd, Symbol};
use crate::scalar::{CNum, Rat};

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

impl fmt::Display for OpaqueFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let base = {
            let args: Vec<&str> =
                self.args.iter().map(|&i| super::parse::coord_name(i)).collect();
            format!("{}({})", self.name, args.join(","))
        };
        if self.total_deriv_order() == 0 {
            return f.write_str(&base);
        }
        let mut coords = Vec::new();
        for (pos, &ord) in self.deriv.iter().enumerate() {
            for _ in 0..ord {
                coords.push(super::parse::coord_name(self.args[pos]));
            }
        }
        write!(f, "d({},{})", base, coords.join(","))
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Atom::Sym(s) => s.fmt(f),
            Atom::Fn(func) => func.fmt(f),
        }
    }
}

pub(super) fn atom_string(a: &Atom) -> String {
    a.to_string()
}

fn ratio_string(r: &Rat) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Signless complex-coefficient pieces: (negative?, numerator factors,
/// denominator factor). Mixed real/imaginary coefficients are emitted as one
/// parenthesized numerator factor and never report a sign.
fn coeff_pieces(c: &CNum) -> (bool, Vec<String>, Option<BigInt>) {
    let (re, im) = (&c.re, &c.im);
    if im.is_zero() {
        let neg = re.is_negative();
        let mag = re.abs();
        let num = mag.numer().clone();
        let den = mag.denom().clone();
        let mut parts = Vec::new();
        if !num.is_one() {
            parts.push(num.to_string());
        }
        (neg, parts, if den.is_one() { None } else { Some(den) })
    } else if re.is_zero() {
        let neg = im.is_negative();
        let mag = im.abs();
        let num = mag.numer().clone();
        let den = mag.denom().clone();
        let mut parts = Vec::new();
        if !num.is_one() {
            parts.push(num.to_string());
        }
        parts.push("i".into());
        (neg, parts, if den.is_one() { None } else { Some(den) })
    } else {
        let re_s = ratio_string(re);
        let im_mag = ratio_string(&im.abs());
        let sign = if im.is_negative() { "-" } else { "+" };
        let im_s = if im.abs().is_one() { "i".to_string() } else { format!("{im_mag}*i") };
        (false, vec![format!("({re_s}{sign}{im_s})")], None)
    }
}

fn power_string(atom: &Atom, pow: i32) -> String {
    debug_assert!(pow > 0);
    if pow == 1 {
        atom.to_string()
    } else {
        format!("{atom}^{pow}")
    }
}

/// One monomial as (negative sign?, body).
fn term_pieces(key: &PowProd, coeff: &CNum) -> (bool, String) {
    let (neg, mut num_parts, den_int) = coeff_pieces(coeff);
    let mut den_parts: Vec<String> = Vec::new();
    if let Some(d) = den_int {
        den_parts.push(d.to_string());
    }
    for (atom, pow) in &key.0 {
        if *pow > 0 {
            num_parts.push(power_string(atom, *pow));
        } else {
            den_parts.push(power_string(atom, -*pow));
        }
    }
    if num_parts.is_empty() {
        num_parts.push("1".into());
    }
    let num = num_parts.join("*");
    let body = if den_parts.is_empty() {
        num
    } else if den_parts.len() == 1 {
        format!("{num}/{}", den_parts[0])
    } else {
        format!("{num}/({})", den_parts.join("*"))
    };
    (neg, body)
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return f.write_str("0");
        }
        for (idx, (key, coeff)) in self.terms.iter().enumerate() {
            let (neg, body) = term_pieces(key, coeff);
            if idx == 0 {
                if neg {
                    f.write_str("-")?;
                }
            } else if neg {
                f.write_str(" - ")?;
            } else {
                f.write_str(" + ")?;
            }
            f.write_str(&body)?;
        }
        Ok(())
    }
}
