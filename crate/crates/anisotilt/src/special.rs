//! Bessel functions of the first kind for small integer orders.

use std::f64::consts::PI;

const ASYMPTOTIC_FROM: f64 = 30.0;

/// Miller's backward recurrence, normalised with J0 + 2·ΣJ_2k = 1.
fn backward(n: u32, x: f64) -> f64 {
    if x == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    let top = n.max(x as u32) + 40;
    let start = top + (top % 2);
    let (mut next, mut cur) = (0.0f64, 1e-300f64);
    let mut wanted = 0.0;
    let mut norm = 0.0;
    for k in (1..=start).rev() {
        let prev = 2.0 * f64::from(k) / x * cur - next;
        next = cur;
        cur = prev;
        if k - 1 == n {
            wanted = cur;
        }
        if (k - 1) % 2 == 0 && k > 1 {
            norm += 2.0 * cur;
        }
        if cur.abs() > 1e250 {
            next *= 1e-250;
            cur *= 1e-250;
            wanted *= 1e-250;
            norm *= 1e-250;
        }
    }
    norm += cur;
    wanted / norm
}

/// Hankel expansion for large arguments.
fn asymptotic(n: u32, x: f64) -> f64 {
    let mu = 4.0 * f64::from(n * n);
    let mut p = 0.0;
    let mut q = 0.0;
    let mut a = 1.0;
    let mut prev = f64::INFINITY;
    for k in 0..60u32 {
        let t = a / x.powi(k as i32);
        if t.abs() > prev {
            break;
        }
        prev = t.abs();
        match k % 4 {
            0 => p += t,
            1 => q += t,
            2 => p -= t,
            _ => q -= t,
        }
        if t.abs() < 1e-17 {
            break;
        }
        let odd = f64::from(2 * k + 1);
        a *= (mu - odd * odd) / (f64::from(k + 1) * 8.0);
    }
    let chi = x - (0.5 * f64::from(n) + 0.25) * PI;
    (2.0 / (PI * x)).sqrt() * (p * chi.cos() - q * chi.sin())
}

/// J_n(x) for n = 0, 1, 2, … and x >= 0.
pub fn bessel_j(n: u32, x: f64) -> f64 {
    let x_abs = x.abs();
    let v = if x_abs < ASYMPTOTIC_FROM.max(f64::from(n) + 2.0) {
        backward(n, x_abs)
    } else if n <= 1 {
        asymptotic(n, x_abs)
    } else {
        // Upward recurrence is stable for x > n.
        let mut jm = asymptotic(0, x_abs);
        let mut j = asymptotic(1, x_abs);
        for k in 1..n {
            let next = 2.0 * f64::from(k) / x_abs * j - jm;
            jm = j;
            j = next;
        }
        j
    };
    if x < 0.0 && n % 2 == 1 {
        -v
    } else {
        v
    }
}
