//! Exact complex-rational scalars used as expression coefficients.

use num_bigint::BigInt;
use num_complex::{Complex, Complex64};
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

/// Arbitrary-precision rational.
pub type Rat = BigRational;

/// Exact complex number with rational real and imaginary parts.
pub type CNum = Complex<Rat>;

pub fn rat_int(n: i64) -> Rat {
    Rat::from_integer(BigInt::from(n))
}

/// Exact ratio; `den` must be nonzero.
pub fn rat_ratio(num: i64, den: i64) -> Rat {
    assert!(den != 0, "zero denominator");
    Rat::new(BigInt::from(num), BigInt::from(den))
}

pub fn cnum_zero() -> CNum {
    Complex::new(Rat::zero(), Rat::zero())
}

pub fn cnum_one() -> CNum {
    Complex::new(Rat::one(), Rat::zero())
}

pub fn cnum_int(n: i64) -> CNum {
    Complex::new(rat_int(n), Rat::zero())
}

pub fn cnum_ratio(num: i64, den: i64) -> CNum {
    Complex::new(rat_ratio(num, den), Rat::zero())
}

/// The imaginary unit.
pub fn cnum_i() -> CNum {
    Complex::new(Rat::zero(), Rat::one())
}

pub fn cnum_conj(c: &CNum) -> CNum {
    Complex::new(c.re.clone(), -c.im.clone())
}

/// Exact reciprocal; `c` must be nonzero.
pub fn cnum_recip(c: &CNum) -> CNum {
    let norm = &c.re * &c.re + &c.im * &c.im;
    assert!(!norm.is_zero(), "reciprocal of zero");
    Complex::new(&c.re / &norm, -&c.im / &norm)
}

pub fn cnum_to_c64(c: &CNum) -> Complex64 {
    Complex64::new(
        c.re.to_f64().expect("rational out of f64 range"),
        c.im.to_f64().expect("rational out of f64 range"),
    )
}
