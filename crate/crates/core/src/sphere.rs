//! Deterministic quasi-uniform direction sets on the unit sphere.

use statrs::distribution::{ContinuousCDF, Normal};

/// Default number of sampled directions for a sphere of dimension `dim`.
pub fn default_samples(dim: usize) -> usize {
    match dim {
        0 | 1 => 2,
        2 | 3 => 512,
        _ => 4096,
    }
}

/// `±e_i` in the order `e1, -e1, e2, -e2, ...`.
pub fn axis_directions(dim: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(2 * dim);
    for i in 0..dim {
        for s in [1.0, -1.0] {
            let mut v = vec![0.0; dim];
            v[i] = s;
            out.push(v);
        }
    }
    out
}

/// Axis directions followed by `n` quasi-uniform unit vectors.
///
/// Dimension 1 yields `{+1, -1}`, dimension 2 an equally spaced angle grid,
/// dimension 3 a Fibonacci lattice, and higher dimensions Halton points
/// pushed through the inverse normal CDF and normalized.
pub fn sphere_sample(dim: usize, n: usize) -> Vec<Vec<f64>> {
    let mut out = axis_directions(dim);
    match dim {
        0 => {}
        1 => {}
        2 => {
            for k in 0..n {
                let a = std::f64::consts::TAU * (k as f64 + 0.5) / n as f64;
                out.push(vec![a.cos(), a.sin()]);
            }
        }
        3 => {
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            for k in 0..n {
                let z = 1.0 - (2.0 * k as f64 + 1.0) / n as f64;
                let r = (1.0 - z * z).max(0.0).sqrt();
                let phi = golden * k as f64;
                out.push(vec![r * phi.cos(), r * phi.sin(), z]);
            }
        }
        _ => {
            let normal = Normal::standard();
            let primes = first_primes(dim);
            for k in 1..=n {
                let mut v: Vec<f64> = primes
                    .iter()
                    .map(|&p| normal.inverse_cdf(radical_inverse(k as u64, p)))
                    .collect();
                if normalize(&mut v) {
                    out.push(v);
                }
            }
        }
    }
    out
}

/// Scales `v` to unit length in place. Returns false for a zero vector.
pub fn normalize(v: &mut [f64]) -> bool {
    let n = norm(v);
    if !(n > 0.0) || !n.is_finite() {
        return false;
    }
    for x in v.iter_mut() {
        *x /= n;
    }
    true
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn radical_inverse(mut k: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while k > 0 {
        r += f * (k % base) as f64;
        k /= base;
        f *= inv;
    }
    r
}

fn first_primes(n: usize) -> Vec<u64> {
    let mut out = Vec::with_capacity(n);
    let mut c = 2u64;
    while out.len() < n {
        if (2..c).take_while(|d| d * d <= c).all(|d| c % d != 0) {
            out.push(c);
        }
        c += 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn samples_are_unit_and_start_with_axes() {
        for dim in 1..=6 {
            let s = sphere_sample(dim, default_samples(dim));
            assert_eq!(&s[..2 * dim], &axis_directions(dim)[..]);
            for v in &s {
                assert!((norm(v) - 1.0).abs() < 1e-12);
            }
        }
        assert_eq!(sphere_sample(1, 2).len(), 2);
        assert_eq!(sphere_sample(3, 512).len(), 518);
    }

    #[test]
    fn fibonacci_covers_sphere() {
        // every axis direction has a sample within 0.15 rad
        let s = sphere_sample(3, 512);
        for a in axis_directions(3) {
            let best = s[6..].iter().map(|v| dot(v, &a)).fold(f64::MIN, f64::max);
            assert!(best > 0.15f64.cos());
        }
    }

    #[test]
    fn halton_is_deterministic() {
        assert_eq!(sphere_sample(5, 100), sphere_sample(5, 100));
        assert_eq!(first_primes(4), vec![2, 3, 5, 7]);
        assert_eq!(radical_inverse(1, 2), 0.5);
        assert_eq!(radical_inverse(3, 2), 0.75);
    }
}
