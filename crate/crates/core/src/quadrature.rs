//! Quadrature rules on the reference triangle `(0,0), (1,0), (0,1)`.
//!
//! Points are barycentric triples; weights sum to the reference area 1/2.

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct QuadratureRule {
    pub degree: usize,
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = ([f64; 3], f64)> + '_ {
        self.points.iter().copied().zip(self.weights.iter().copied())
    }
}

fn orbit3(a: f64, w: f64, pts: &mut Vec<[f64; 3]>, wts: &mut Vec<f64>) {
    let b = 1.0 - 2.0 * a;
    for p in [[b, a, a], [a, b, a], [a, a, b]] {
        pts.push(p);
        wts.push(w);
    }
}

fn orbit6(a: f64, b: f64, w: f64, pts: &mut Vec<[f64; 3]>, wts: &mut Vec<f64>) {
    let c = 1.0 - a - b;
    for p in [[a, b, c], [b, a, c], [c, a, b], [a, c, b], [b, c, a], [c, b, a]] {
        pts.push(p);
        wts.push(w);
    }
}

/// Symmetric rule of at least the requested polynomial degree (1..=10).
///
/// Degrees 1, 2, 4, 5 and 6 use the classical symmetric rules with 1, 3, 6,
/// 7 and 12 points; the remaining degrees use a collapsed Gauss-Legendre
/// product rule. All weights are positive.
pub fn quadrature(degree: usize) -> Result<QuadratureRule> {
    let mut pts = Vec::new();
    let mut wts = Vec::new();
    match degree {
        1 => {
            pts.push([1.0 / 3.0; 3]);
            wts.push(1.0);
        }
        2 => orbit3(1.0 / 6.0, 1.0 / 3.0, &mut pts, &mut wts),
        4 => {
            orbit3(0.445_948_490_915_965, 0.223_381_589_678_011, &mut pts, &mut wts);
            orbit3(0.091_576_213_509_771, 0.109_951_743_655_322, &mut pts, &mut wts);
        }
        5 => {
            let s15 = 15f64.sqrt();
            pts.push([1.0 / 3.0; 3]);
            wts.push(0.225);
            orbit3((6.0 - s15) / 21.0, (155.0 - s15) / 1200.0, &mut pts, &mut wts);
            orbit3((6.0 + s15) / 21.0, (155.0 + s15) / 1200.0, &mut pts, &mut wts);
        }
        6 => {
            orbit3(0.063_089_014_491_502, 0.050_844_906_370_207, &mut pts, &mut wts);
            orbit3(0.249_286_745_170_910, 0.116_786_275_726_379, &mut pts, &mut wts);
            orbit6(
                0.053_145_049_844_817,
                0.310_352_451_033_784,
                0.082_851_075_618_374,
                &mut pts,
                &mut wts,
            );
        }
        3 | 7..=10 => return Ok(collapsed_gauss(degree)),
        _ => {
            return Err(Error::Unsupported(format!(
                "quadrature degree {degree} (supported: 1..=10)"
            )))
        }
    }
    // tabulated weights are normalized to unit sum
    let sum: f64 = wts.iter().sum();
    let weights = wts.iter().map(|w| 0.5 * w / sum).collect();
    Ok(QuadratureRule { degree, points: pts, weights })
}

/// Conical product of Gauss-Legendre rules through the Duffy map.
fn collapsed_gauss(degree: usize) -> QuadratureRule {
    let k = (degree + 3) / 2;
    let (x, w) = gauss_legendre01(k);
    let mut points = Vec::with_capacity(k * k);
    let mut weights = Vec::with_capacity(k * k);
    for (&u, &wu) in x.iter().zip(&w) {
        for (&v, &wv) in x.iter().zip(&w) {
            let px = u;
            let py = v * (1.0 - u);
            points.push([1.0 - px - py, px, py]);
            weights.push(wu * wv * (1.0 - u));
        }
    }
    QuadratureRule { degree, points, weights }
}

/// Gauss-Legendre nodes and weights on [0, 1].
pub fn gauss_legendre01(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = 0.5 * (1.0 - x);
        weights[i] = 1.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}
