//! Closed-form profiles: the degree-one bubble, its scalings, the kernel
//! fields of the linearized operator, multi-bubble ansatz and Möbius
//! boundary traces.

use crate::{Error, Result};

/// Far-field value of the bubble, `ω(±∞) = (0, 1)`.
pub const OMEGA_INFINITY: [f64; 2] = [0.0, 1.0];

/// The canonical least-energy bubble `ω(x) = (2x, x²-1)/(x²+1)`.
pub fn omega(x: f64) -> [f64; 2] {
    if !x.is_finite() {
        return OMEGA_INFINITY;
    }
    let d = x * x + 1.0;
    [2.0 * x / d, (x * x - 1.0) / d]
}

/// Scale `μ > 0` and center `ξ` of one bubble.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BubbleParams {
    pub mu: f64,
    pub xi: f64,
}

impl BubbleParams {
    pub fn new(mu: f64, xi: f64) -> Result<Self> {
        if !(mu > 0.0) || !mu.is_finite() || !xi.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "bubble scale must be positive and finite, got mu = {mu}, xi = {xi}"
            )));
        }
        Ok(Self { mu, xi })
    }
}

/// `U_{μ,ξ}(x) = ω((x-ξ)/μ)`.
pub fn scaled_bubble(p: BubbleParams, x: f64) -> [f64; 2] {
    omega((x - p.xi) / p.mu)
}

/// Kernel fields of the linearized operator at `ω`:
/// `Z₁` (rotation), `Z₂` (translation), `Z₃` (dilation).
pub fn kernel_z(j: usize, y: f64) -> Result<[f64; 2]> {
    let d = y * y + 1.0;
    match j {
        1 => Ok([(1.0 - y * y) / d, 2.0 * y / d]),
        2 => Ok([2.0 * (y * y - 1.0) / (d * d), -4.0 * y / (d * d)]),
        3 => Ok([2.0 * y * (y * y - 1.0) / (d * d), -4.0 * y * y / (d * d)]),
        _ => Err(Error::InvalidArgument(format!(
            "kernel index must be 1, 2 or 3, got {j}"
        ))),
    }
}

/// Ordered list of well-separated bubbles.
#[derive(Debug, Clone)]
pub struct MultiBubble {
    pub bubbles: Vec<BubbleParams>,
}

impl MultiBubble {
    /// Requires pairwise separation `|ξ_i - ξ_j| > 10 (μ_i + μ_j)`.
    pub fn new(bubbles: Vec<BubbleParams>) -> Result<Self> {
        if bubbles.is_empty() {
            return Err(Error::InvalidArgument("need at least one bubble".into()));
        }
        for i in 0..bubbles.len() {
            for j in i + 1..bubbles.len() {
                let sep = (bubbles[i].xi - bubbles[j].xi).abs();
                let min = 10.0 * (bubbles[i].mu + bubbles[j].mu);
                if sep <= min {
                    return Err(Error::InvalidArgument(format!(
                        "bubbles {i} and {j} separated by {sep}, need > {min}"
                    )));
                }
            }
        }
        Ok(Self { bubbles })
    }
}

/// Superposition ansatz `ω_∞ + Σ_j (ω((x-ξ_j)/μ_j) - ω_∞)`.
///
/// Not a sphere map in general: near each center the other summands shift
/// the value off the circle by the interaction size.
pub fn multi_bubble(mb: &MultiBubble, x: f64) -> [f64; 2] {
    let mut v = OMEGA_INFINITY;
    for b in &mb.bubbles {
        let w = scaled_bubble(*b, x);
        v[0] += w[0] - OMEGA_INFINITY[0];
        v[1] += w[1] - OMEGA_INFINITY[1];
    }
    v
}

/// Degree-`d` Möbius boundary data: phase and `d` Blaschke factors.
#[derive(Debug, Clone)]
pub struct MobiusSpec {
    pub theta: f64,
    pub factors: Vec<(f64, f64)>, // (lambda_k > 0, a_k)
}

impl MobiusSpec {
    pub fn new(theta: f64, factors: Vec<(f64, f64)>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::InvalidArgument(
                "Möbius spec needs degree at least 1".into(),
            ));
        }
        for &(lambda, a) in &factors {
            if !(lambda > 0.0) || !lambda.is_finite() || !a.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "invalid Blaschke factor (lambda = {lambda}, a = {a})"
                )));
            }
        }
        Ok(Self { theta, factors })
    }

    pub fn degree(&self) -> usize {
        self.factors.len()
    }
}

/// Boundary trace `e^{iθ} Π_k (λ_k(x-a_k) - i)/(λ_k(x-a_k) + i)` at real `x`,
/// renormalized to kill rounding drift off the unit circle.
pub fn mobius_trace(m: &MobiusSpec, x: f64) -> [f64; 2] {
    let (mut re, mut im) = (m.theta.cos(), m.theta.sin());
    for &(lambda, a) in &m.factors {
        let t = lambda * (x - a);
        // (t - i)/(t + i) = ((t² - 1) - 2ti)/(t² + 1)
        let d = t * t + 1.0;
        let (fr, fi) = ((t * t - 1.0) / d, -2.0 * t / d);
        let nr = re * fr - im * fi;
        let ni = re * fi + im * fr;
        re = nr;
        im = ni;
    }
    let norm = (re * re + im * im).sqrt();
    [re / norm, im / norm]
}

/// Tension density of the bubble: the closed form `2/(1+y²)` of
/// `(1/2π) ∫ |ω(y)-ω(s)|²/(y-s)² ds`.
pub fn tension_coeff_omega(y: f64) -> f64 {
    2.0 / (1.0 + y * y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad;
    use std::f64::consts::PI;

    #[test]
    fn omega_values() {
        assert_eq!(omega(0.0), [0.0, -1.0]);
        assert_eq!(omega(1.0), [1.0, 0.0]);
        let far = omega(1e12);
        assert!((far[0]).abs() < 1e-11 && (far[1] - 1.0).abs() < 1e-11);
        assert_eq!(omega(f64::INFINITY), OMEGA_INFINITY);
    }

    #[test]
    fn omega_unit_length() {
        for i in -500..=500 {
            let x = i as f64 * 0.137;
            let w = omega(x);
            assert!((w[0] * w[0] + w[1] * w[1] - 1.0).abs() <= 1e-15);
        }
    }

    #[test]
    fn scaled_bubble_identities() {
        let p = BubbleParams::new(1.0, 0.0).unwrap();
        for i in -10..=10 {
            let x = i as f64 * 0.5;
            assert_eq!(scaled_bubble(p, x), omega(x));
        }
        let p = BubbleParams::new(2.0, 3.0).unwrap();
        assert_eq!(scaled_bubble(p, 3.0), [0.0, -1.0]);
        assert_eq!(scaled_bubble(p, 5.0), [1.0, 0.0]);
    }

    #[test]
    fn kernel_values_and_identities() {
        assert_eq!(kernel_z(1, 0.0).unwrap(), [1.0, 0.0]);
        assert_eq!(kernel_z(2, 0.0).unwrap(), [-2.0, 0.0]);
        let z3 = kernel_z(3, 2.0).unwrap();
        let z2 = kernel_z(2, 2.0).unwrap();
        assert!((z3[0] - 12.0 / 25.0).abs() < 1e-15);
        assert!((z3[1] + 16.0 / 25.0).abs() < 1e-15);
        assert!((z3[0] - 2.0 * z2[0]).abs() < 1e-15);
        assert!((z3[1] - 2.0 * z2[1]).abs() < 1e-15);
        assert!(kernel_z(4, 0.0).is_err());

        for i in -40..=40 {
            let y = i as f64 * 0.25;
            let z1 = kernel_z(1, y).unwrap();
            let z2 = kernel_z(2, y).unwrap();
            let z3 = kernel_z(3, y).unwrap();
            let w = omega(y);
            // Z₃ = y Z₂ and Z₁ = (-ω₂, ω₁).
            assert!((z3[0] - y * z2[0]).abs() < 1e-14);
            assert!((z3[1] - y * z2[1]).abs() < 1e-14);
            assert!((z1[0] + w[1]).abs() < 1e-14);
            assert!((z1[1] - w[0]).abs() < 1e-14);
            // Z₂·Z₁ = -2/(1+y²), used in the scalar reduction.
            let dot = z2[0] * z1[0] + z2[1] * z1[1];
            assert!((dot + 2.0 / (1.0 + y * y)).abs() < 1e-14);
        }
    }

    #[test]
    fn kernel_mode_integrals() {
        // ∫ Z₂·Z₃ = 0 by parity; ∫|Z₂|² = ∫|Z₃|² = 2π.
        let dot23 = quad::over_line(
            |y| {
                let z2 = kernel_z(2, y).unwrap();
                let z3 = kernel_z(3, y).unwrap();
                z2[0] * z3[0] + z2[1] * z3[1]
            },
            1e-11,
        );
        assert!(dot23.abs() < 1e-10);
        let n2 = quad::over_line(
            |y| {
                let z = kernel_z(2, y).unwrap();
                z[0] * z[0] + z[1] * z[1]
            },
            1e-11,
        );
        let n3 = quad::over_line(
            |y| {
                let z = kernel_z(3, y).unwrap();
                z[0] * z[0] + z[1] * z[1]
            },
            1e-11,
        );
        assert!((n2 - 2.0 * PI).abs() < 1e-9);
        assert!((n3 - 2.0 * PI).abs() < 1e-9);
    }

    #[test]
    fn multi_bubble_reduces_and_decays() {
        let mb = MultiBubble::new(vec![BubbleParams::new(0.7, 1.0).unwrap()]).unwrap();
        for i in -20..=20 {
            let x = i as f64 * 0.3;
            let v = multi_bubble(&mb, x);
            let w = scaled_bubble(mb.bubbles[0], x);
            assert!((v[0] - w[0]).abs() < 1e-15 && (v[1] - w[1]).abs() < 1e-15);
        }
        let far = multi_bubble(&mb, 1e9);
        assert!((far[0]).abs() < 1e-8 && (far[1] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn multi_bubble_separation_enforced() {
        let a = BubbleParams::new(1.0, 0.0).unwrap();
        let b = BubbleParams::new(1.0, 15.0).unwrap();
        assert!(MultiBubble::new(vec![a, b]).is_err());
        let c = BubbleParams::new(1.0, 50.0).unwrap();
        assert!(MultiBubble::new(vec![a, c]).is_ok());
    }

    #[test]
    fn two_bubble_unit_length_deviation() {
        let mb = MultiBubble::new(vec![
            BubbleParams::new(1.0, -50.0).unwrap(),
            BubbleParams::new(1.0, 50.0).unwrap(),
        ])
        .unwrap();
        // Near each center the other bubble's tail is ~2/100.
        let mut worst = 0.0f64;
        for i in -40..=40 {
            let x = -50.0 + i as f64 * 0.1;
            let v = multi_bubble(&mb, x);
            worst = worst.max(((v[0] * v[0] + v[1] * v[1]).sqrt() - 1.0).abs());
        }
        assert!(worst <= 5e-2, "deviation {worst}");
        assert!(worst > 1e-3, "interaction should be visible, got {worst}");
    }

    #[test]
    fn mobius_degree_one_is_conjugate_bubble() {
        let m = MobiusSpec::new(0.0, vec![(1.0, 0.0)]).unwrap();
        for i in -30..=30 {
            let x = i as f64 * 0.37;
            let v = mobius_trace(&m, x);
            let w = omega(x);
            // (x-i)/(x+i) = (ω₂, -ω₁).
            assert!((v[0] - w[1]).abs() < 1e-14);
            assert!((v[1] + w[0]).abs() < 1e-14);
        }
    }

    #[test]
    fn mobius_unit_modulus() {
        let m = MobiusSpec::new(0.83, vec![(2.0, -1.5), (0.5, 3.0), (1.2, 0.1)]).unwrap();
        for i in -50..=50 {
            let x = i as f64 * 0.91;
            let v = mobius_trace(&m, x);
            assert!((v[0] * v[0] + v[1] * v[1] - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn mobius_winding_number() {
        // Discrete winding count over [-L, L] equals the degree.
        let m = MobiusSpec::new(0.0, vec![(1.0, -10.0), (1.0, 10.0)]).unwrap();
        let n = 20000;
        let l = 2000.0;
        let mut total = 0.0;
        let mut prev = mobius_trace(&m, -l);
        for i in 1..=n {
            let x = -l + 2.0 * l * i as f64 / n as f64;
            let cur = mobius_trace(&m, x);
            // Angle increment via atan2 of the relative rotation.
            let cross = prev[0] * cur[1] - prev[1] * cur[0];
            let dot = prev[0] * cur[0] + prev[1] * cur[1];
            total += cross.atan2(dot);
            prev = cur;
        }
        let winding = total / (2.0 * PI);
        assert!((winding - 2.0).abs() < 0.01, "winding {winding}");
    }

    #[test]
    fn tension_coeff_matches_defining_integral() {
        // Quadrature oracle for (1/2π) ∫ |ω(y)-ω(s)|²/(y-s)² ds.
        let oracle = |y: f64| {
            let wy = omega(y);
            quad::over_line(
                |s| {
                    if (s - y).abs() < 1e-9 {
                        // Removable singularity: |ω'|² limit.
                        let d = 1.0 + y * y;
                        return 4.0 / (d * d);
                    }
                    let ws = omega(s);
                    let dx = wy[0] - ws[0];
                    let dy = wy[1] - ws[1];
                    (dx * dx + dy * dy) / ((y - s) * (y - s))
                },
                1e-10,
            ) / (2.0 * PI)
        };
        for &y in &[0.0, 1.0, -2.5, 7.0] {
            let o = oracle(y);
            assert!(
                (o - tension_coeff_omega(y)).abs() < 1e-7,
                "y = {y}: oracle {o} vs closed form {}",
                tension_coeff_omega(y)
            );
        }
        assert!((tension_coeff_omega(0.0) - 2.0).abs() < 1e-15);
        assert!((tension_coeff_omega(1.0) - 1.0).abs() < 1e-15);
        assert!(tension_coeff_omega(1e9) < 1e-17);
    }
}
