//! Exact-rational evaluation of `exp` and `ln`, independent of `f64` libm.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

const DIGITS: u32 = 60;

fn scale() -> BigInt {
    BigInt::from(10u32).pow(DIGITS)
}

/// Rounds to a fixed number of decimal digits to keep the operands small.
fn trim(q: &BigRational) -> BigRational {
    let s = scale();
    let n = (q * BigRational::from_integer(s.clone()))
        .round()
        .to_integer();
    BigRational::new(n, s)
}

pub fn rat(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

pub fn exp(x: &BigRational) -> BigRational {
    // Halve until |x| < 1/8, then square back.
    let mut halvings = 0;
    let mut y = x.clone();
    while y.abs() > rat(1, 8) {
        y /= rat(2, 1);
        halvings += 1;
    }
    let mut term = BigRational::one();
    let mut sum = BigRational::one();
    for n in 1..80 {
        term = trim(&(term * &y / rat(n, 1)));
        if term.is_zero() {
            break;
        }
        sum += &term;
    }
    for _ in 0..halvings {
        sum = trim(&(&sum * &sum));
    }
    sum
}

/// `ln x = ln(x·2^m) − m ln 2` with `x·2^m` near 1.
pub fn ln(x: &BigRational) -> BigRational {
    assert!(x.is_positive());
    let two = rat(2, 1);
    let mut y = x.clone();
    let mut m = 0i64;
    while y > rat(3, 2) {
        y /= &two;
        m += 1;
    }
    while y < rat(3, 4) {
        y *= &two;
        m -= 1;
    }
    let shifted = ln_near_one(&y);
    if m == 0 {
        shifted
    } else {
        shifted + rat(m, 1) * ln_near_one(&two)
    }
}

/// `2 atanh((x−1)/(x+1))`, fast for `x` close to 1.
fn ln_near_one(x: &BigRational) -> BigRational {
    let z = (x - BigRational::one()) / (x + BigRational::one());
    let z2 = trim(&(&z * &z));
    let mut power = z.clone();
    let mut sum = BigRational::zero();
    for k in 0..2000 {
        let t = trim(&(&power / rat(2 * k + 1, 1)));
        if t.is_zero() {
            break;
        }
        sum += t;
        power = trim(&(power * &z2));
    }
    sum * rat(2, 1)
}

pub fn to_f64(q: &BigRational) -> f64 {
    q.to_f64().expect("finite rational")
}

/// `e^{−μ} μ^k / k!`.
pub fn poisson(mu: &BigRational, k: u32) -> BigRational {
    let mut v = exp(&(-mu.clone()));
    for i in 1..=k {
        v = v * mu / rat(i as i64, 1);
    }
    v
}

/// Binary entropy in bits.
pub fn binary_entropy(x: &BigRational) -> BigRational {
    let one = BigRational::one();
    let ln2 = ln(&rat(2, 1));
    let y = &one - x;
    -(x * ln(x) + &y * ln(&y)) / ln2
}
