//! Globally adaptive Gauss–Kronrod (7/15) quadrature.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
/// Gauss weights at `XGK[1], XGK[3], XGK[5], XGK[7]`.
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

#[derive(Debug, Clone, Copy)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

/// `∫_a^b f` to `max(abs_tol, rel_tol·|I|)`, bisecting the worst segment.
pub fn integrate<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
    max_segments: usize,
) -> Result<Integral> {
    let (r, converged) = adaptive(&f, a, b, abs_tol, rel_tol, max_segments)?;
    if converged {
        Ok(r)
    } else {
        Err(Error::Convergence(max_segments))
    }
}

/// Like [`integrate`], but returns the current estimate and its error once
/// `max_segments` is reached instead of failing.
pub fn integrate_capped<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
    max_segments: usize,
) -> Result<Integral> {
    adaptive(&f, a, b, abs_tol, rel_tol, max_segments).map(|(r, _)| r)
}

fn adaptive<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
    max_segments: usize,
) -> Result<(Integral, bool)> {
    if a == b {
        let zero = Integral {
            value: 0.0,
            error: 0.0,
            evaluations: 0,
        };
        return Ok((zero, true));
    }
    let (value, error) = gk15(f, a, b);
    let mut heap = BinaryHeap::new();
    heap.push(Segment { a, b, value, error });
    let (mut total, mut err) = (value, error);
    let mut evaluations = 15;
    let mut converged = true;
    while err > abs_tol.max(rel_tol * total.abs()) {
        if heap.len() >= max_segments {
            converged = false;
            break;
        }
        let s = heap.pop().expect("non-empty heap");
        let m = 0.5 * (s.a + s.b);
        let (v1, e1) = gk15(f, s.a, m);
        let (v2, e2) = gk15(f, m, s.b);
        evaluations += 30;
        total += v1 + v2 - s.value;
        err += e1 + e2 - s.error;
        heap.push(Segment { a: s.a, b: m, value: v1, error: e1 });
        heap.push(Segment { a: m, b: s.b, value: v2, error: e2 });
        if !err.is_finite() {
            return Err(Error::Convergence(heap.len()));
        }
    }
    // re-sum to shed accumulated cancellation
    let (mut value, mut error) = (0.0, 0.0);
    for s in heap.iter() {
        value += s.value;
        error += s.error;
    }
    Ok((
        Integral {
            value,
            error,
            evaluations,
        },
        converged,
    ))
}

/// `∫_a^b f` split at the given interior points.
pub fn integrate_pieces<F: Fn(f64) -> f64>(
    f: F,
    breaks: &[f64],
    abs_tol: f64,
    rel_tol: f64,
) -> Result<Integral> {
    let mut out = Integral {
        value: 0.0,
        error: 0.0,
        evaluations: 0,
    };
    let pieces = breaks.len().saturating_sub(1).max(1);
    for w in breaks.windows(2) {
        let r = integrate(&f, w[0], w[1], abs_tol / pieces as f64, rel_tol, 200_000)?;
        out.value += r.value;
        out.error += r.error;
        out.evaluations += r.evaluations;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomials_are_exact() {
        let r = integrate(|x| x.powi(20) - 3.0 * x.powi(7), 0.0, 1.0, 1e-14, 0.0, 10).unwrap();
        assert!((r.value - (1.0 / 21.0 - 3.0 / 8.0)).abs() < 1e-14);
    }

    #[test]
    fn oscillatory_and_singular() {
        let r = integrate(|x| (50.0 * x).sin(), 0.0, std::f64::consts::PI, 1e-12, 0.0, 10_000).unwrap();
        assert!(r.value.abs() < 1e-10);
        let r = integrate(|x: f64| x.sqrt().recip(), 0.0, 1.0, 1e-9, 0.0, 10_000).unwrap();
        assert!((r.value - 2.0).abs() < 1e-7);
    }

    #[test]
    fn pieces_add_up() {
        let r = integrate_pieces(|x: f64| x.abs(), &[-1.0, 0.0, 2.0], 1e-13, 0.0).unwrap();
        assert!((r.value - 2.5).abs() < 1e-13);
    }
}
