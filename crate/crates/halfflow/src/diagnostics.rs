//! Measurement layer: the half-Dirichlet energy, bubble parameter
//! extraction, exponential decay-rate fits, and the weighted space-time
//! sup-norms used to size gluing errors.

use crate::grid::ScalarField;
use crate::nonlocal;
use crate::profiles::{BubbleParams, OMEGA_INFINITY};
use crate::{Error, Result, SphereMapField};

/// `energy`: `½ ∫ |(-Δ)^{1/4} u|² = ½ ⟨u - ω_∞, (-Δ)^{1/2}(u - ω_∞)⟩`.
///
/// Subtracting the far-field constant makes the pairing well-defined for
/// non-decaying maps; the value is `π·degree` for exact half-harmonic maps.
pub fn energy(u: &SphereMapField) -> f64 {
    let grid = u.grid;
    let n = grid.point_count;
    let f1: Vec<f64> = u.u1.iter().map(|v| v - OMEGA_INFINITY[0]).collect();
    let f2: Vec<f64> = u.u2.iter().map(|v| v - OMEGA_INFINITY[1]).collect();
    let l1 = nonlocal::lam_spectral(&f1, &grid, nonlocal::fit_component(&grid, &f1));
    let l2 = nonlocal::lam_spectral(&f2, &grid, nonlocal::fit_component(&grid, &f2));
    let density: Vec<f64> = (0..n).map(|i| f1[i] * l1[i] + f2[i] * l2[i]).collect();
    0.5 * crate::grid::trapezoid(&density, grid.spacing)
}

/// Energy of a general two-component field (ansatz diagnostics).
pub fn energy_vector(f: &crate::VectorField) -> f64 {
    let grid = f.grid;
    let n = grid.point_count;
    let f1: Vec<f64> = f.c1.iter().map(|v| v - OMEGA_INFINITY[0]).collect();
    let f2: Vec<f64> = f.c2.iter().map(|v| v - OMEGA_INFINITY[1]).collect();
    let l1 = nonlocal::lam_spectral(&f1, &grid, nonlocal::fit_component(&grid, &f1));
    let l2 = nonlocal::lam_spectral(&f2, &grid, nonlocal::fit_component(&grid, &f2));
    let density: Vec<f64> = (0..n).map(|i| f1[i] * l1[i] + f2[i] * l2[i]).collect();
    0.5 * crate::grid::trapezoid(&density, grid.spacing)
}

/// `extract_bubble`: invert `U_{μ,ξ}` from a map with a single deep well in
/// the second component. `ξ` is the parabolic-refined argmin of `u₂`; `μ` is
/// half the distance between the two zero crossings of `u₂` bracketing `ξ`.
pub fn extract_bubble(u: &SphereMapField) -> Result<BubbleParams> {
    let grid = u.grid;
    let n = grid.point_count;
    let (imin, min) = u
        .u2
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty field");
    if *min > -0.9 {
        return Err(Error::NoBubble(format!(
            "deepest u₂ value {min} is above -0.9"
        )));
    }

    // Sub-grid minimum by parabolic interpolation through three points.
    let xi = if imin == 0 || imin == n - 1 {
        grid.point(imin)
    } else {
        let (ym, y0, yp) = (u.u2[imin - 1], u.u2[imin], u.u2[imin + 1]);
        let denom = ym - 2.0 * y0 + yp;
        let shift = if denom.abs() > 1e-300 {
            0.5 * (ym - yp) / denom
        } else {
            0.0
        };
        grid.point(imin) + shift.clamp(-0.5, 0.5) * grid.spacing
    };

    // Zero crossings of u₂ on each side, linearly interpolated.
    let crossing_right = (imin..n - 1)
        .find(|&i| u.u2[i] <= 0.0 && u.u2[i + 1] > 0.0)
        .map(|i| {
            let (a, b) = (u.u2[i], u.u2[i + 1]);
            grid.point(i) + grid.spacing * a / (a - b)
        });
    let crossing_left = (1..=imin)
        .rev()
        .find(|&i| u.u2[i] <= 0.0 && u.u2[i - 1] > 0.0)
        .map(|i| {
            let (a, b) = (u.u2[i], u.u2[i - 1]);
            grid.point(i) - grid.spacing * a / (a - b)
        });
    match (crossing_left, crossing_right) {
        (Some(l), Some(r)) => Ok(BubbleParams {
            mu: 0.5 * (r - l),
            xi,
        }),
        _ => Err(Error::Resolution(
            "zero crossings of u₂ not found on both sides of the well".into(),
        )),
    }
}

/// `fit_decay_rate`: least squares of `log μ` against `t`.
/// Returns `(κ, R²)` for the model `μ(t) ≈ C e^{-κ t}`.
pub fn fit_decay_rate(series: &[(f64, f64)]) -> Result<(f64, f64)> {
    if series.len() < 10 {
        return Err(Error::InvalidArgument(format!(
            "need at least 10 samples, got {}",
            series.len()
        )));
    }
    if let Some((t, mu)) = series.iter().find(|(_, mu)| !(*mu > 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "nonpositive scale μ = {mu} at t = {t}"
        )));
    }
    let n = series.len() as f64;
    let (mut st, mut sy, mut stt, mut sty, mut syy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(t, mu) in series {
        let y = mu.ln();
        st += t;
        sy += y;
        stt += t * t;
        sty += t * y;
        syy += y * y;
    }
    let denom = n * stt - st * st;
    if denom.abs() < 1e-300 {
        return Err(Error::InvalidArgument("degenerate time axis".into()));
    }
    let slope = (n * sty - st * sy) / denom;
    let ss_tot = syy - sy * sy / n;
    let r_squared = if ss_tot <= 1e-300 {
        1.0 // constant series: the flat model is exact
    } else {
        let intercept = (sy - slope * st) / n;
        let ss_res: f64 = series
            .iter()
            .map(|&(t, mu)| {
                let r = mu.ln() - (intercept + slope * t);
                r * r
            })
            .sum();
        1.0 - ss_res / ss_tot
    };
    Ok((-slope, r_squared))
}

/// The weighted space-time sup-norms of the gluing analysis.
#[derive(Debug, Clone, Copy)]
pub enum WeightedNormSpec {
    /// `sup μ₀^{1-ν}(t) (1+|y|^{1+α}) |f|`, with `y = (x-ξ)/μ₀(t)`.
    OuterStar { alpha: f64, nu: f64, kappa0: f64, xi: f64 },
    /// `sup τ^ν (1+|y|^a) (|h| + (1+|y|^η)[h]_η)`, Hölder pairs within `|Δy| ≤ 1`.
    InnerTau { a: f64, nu: f64, eta: Option<f64> },
    /// `sup μ₀^{-δ}(t) |h(t)|` for scalar time series.
    MuDelta { delta: f64, kappa0: f64 },
}

impl WeightedNormSpec {
    fn validate(&self) -> Result<()> {
        let ok = match *self {
            WeightedNormSpec::OuterStar { alpha, nu, .. } => {
                (0.0..1.0).contains(&alpha) && (0.0..=1.0).contains(&nu)
            }
            WeightedNormSpec::InnerTau { a, nu, eta } => {
                (0.0..=1.0).contains(&a)
                    && nu >= 0.0
                    && eta.map_or(true, |e| e > 0.5 && e < 1.0)
            }
            WeightedNormSpec::MuDelta { delta, .. } => delta.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "weighted norm exponents out of range: {self:?}"
            )))
        }
    }
}

/// One time slice of a space-time field.
pub struct TimeSlice<'a> {
    pub time: f64,
    pub field: &'a ScalarField,
}

/// `weighted_norm`: discrete sup of the weighted quantity over the slices.
pub fn weighted_norm(slices: &[TimeSlice<'_>], spec: &WeightedNormSpec) -> Result<f64> {
    spec.validate()?;
    let mut sup: f64 = 0.0;
    for slice in slices {
        let grid = slice.field.grid;
        match *spec {
            WeightedNormSpec::OuterStar { alpha, nu, kappa0, xi } => {
                let mu0 = (-kappa0 * slice.time).exp();
                for (i, x) in grid.points().enumerate() {
                    let y = (x - xi) / mu0;
                    let w = mu0.powf(1.0 - nu) * (1.0 + y.abs().powf(1.0 + alpha));
                    sup = sup.max(w * slice.field.values[i].abs());
                }
            }
            WeightedNormSpec::InnerTau { a, nu, eta } => {
                let tw = slice.time.powf(nu);
                for (i, y) in grid.points().enumerate() {
                    let mut q = slice.field.values[i].abs();
                    if let Some(eta) = eta {
                        // Hölder seminorm over pairs within |Δy| ≤ 1; larger
                        // separations are dominated by the sup term.
                        let reach = (1.0 / grid.spacing).floor() as usize;
                        let mut holder: f64 = 0.0;
                        for j in i.saturating_sub(reach)..(i + reach + 1).min(grid.point_count) {
                            if j != i {
                                let dy = (y - grid.point(j)).abs();
                                if dy <= 1.0 {
                                    holder = holder.max(
                                        (slice.field.values[i] - slice.field.values[j]).abs()
                                            / dy.powf(eta),
                                    );
                                }
                            }
                        }
                        q += (1.0 + y.abs().powf(eta)) * holder;
                    }
                    sup = sup.max(tw * (1.0 + y.abs().powf(a)) * q);
                }
            }
            WeightedNormSpec::MuDelta { delta, kappa0 } => {
                let mu0 = (-kappa0 * slice.time).exp();
                sup = sup.max(mu0.powf(-delta) * slice.field.sup_norm());
            }
        }
    }
    Ok(sup)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{make_grid, sample};
    use crate::profiles::{multi_bubble, omega, scaled_bubble, MultiBubble};
    use crate::VectorField;
    use std::f64::consts::PI;

    #[test]
    fn energy_of_bubble_is_pi() {
        let grid = make_grid(200.0, 16384).unwrap();
        let u = SphereMapField::sample(grid, omega).unwrap();
        let e = energy(&u);
        assert!((e - PI).abs() < 1e-3, "E(ω) = {e}");
        let c = SphereMapField::constant(grid, [0.0, 1.0]).unwrap();
        assert!(energy(&c).abs() < 1e-14);
    }

    #[test]
    fn energy_scale_translation_invariance() {
        let grid = make_grid(200.0, 16384).unwrap();
        let mut values = Vec::new();
        for &(mu, xi) in &[(0.5, 0.0), (1.0, 7.0), (2.0, -11.0)] {
            let p = BubbleParams::new(mu, xi).unwrap();
            let u = SphereMapField::sample(grid, |x| scaled_bubble(p, x)).unwrap();
            values.push(energy(&u));
        }
        for v in &values {
            assert!((v - PI).abs() < 2e-3, "energy {v}");
        }
    }

    #[test]
    fn energy_two_bubbles_near_two_pi() {
        let grid = make_grid(200.0, 16384).unwrap();
        let mb = MultiBubble::new(vec![
            BubbleParams::new(1.0, -50.0).unwrap(),
            BubbleParams::new(1.0, 50.0).unwrap(),
        ])
        .unwrap();
        let f = VectorField::sample(grid, |x| multi_bubble(&mb, x));
        let e = energy_vector(&f);
        assert!((e - 2.0 * PI).abs() < 2e-2, "E = {e}");
    }

    #[test]
    fn extract_bubble_inverts_construction() {
        let grid = make_grid(200.0, 16384).unwrap();
        for &(mu, xi) in &[(0.5, 3.0), (1.0, 0.0), (0.2, -40.0), (5.0, 10.0)] {
            let p = BubbleParams::new(mu, xi).unwrap();
            let u = SphereMapField::sample(grid, |x| scaled_bubble(p, x)).unwrap();
            let got = extract_bubble(&u).unwrap();
            let tol = 2.0 * grid.spacing;
            assert!((got.mu - mu).abs() <= tol, "μ: {} vs {mu}", got.mu);
            assert!((got.xi - xi).abs() <= tol, "ξ: {} vs {xi}", got.xi);
        }
    }

    #[test]
    fn extract_bubble_with_noise() {
        let grid = make_grid(200.0, 16384).unwrap();
        let p = BubbleParams::new(1.0, 2.0).unwrap();
        let u = SphereMapField::new_renormalized(
            grid,
            grid.points()
                .map(|x| scaled_bubble(p, x)[0] + 1e-3 * (-(x - 2.0) * (x - 2.0) / 30.0).exp())
                .collect(),
            grid.points()
                .map(|x| scaled_bubble(p, x)[1] + 1e-3 * (x / 17.0).sin() * (-x * x / 900.0).exp())
                .collect(),
        )
        .unwrap();
        let got = extract_bubble(&u).unwrap();
        assert!((got.mu - 1.0).abs() < 1e-2);
        assert!((got.xi - 2.0).abs() < 1e-2);
    }

    #[test]
    fn extract_bubble_requires_deep_well() {
        let grid = make_grid(50.0, 1024).unwrap();
        let c = SphereMapField::constant(grid, [0.0, 1.0]).unwrap();
        assert!(matches!(extract_bubble(&c), Err(Error::NoBubble(_))));
    }

    #[test]
    fn decay_rate_fits() {
        let series: Vec<(f64, f64)> = (0..50)
            .map(|i| {
                let t = i as f64 * 0.5;
                (t, (-0.03 * t).exp())
            })
            .collect();
        let (kappa, r2) = fit_decay_rate(&series).unwrap();
        assert!((kappa - 0.03).abs() < 1e-12);
        assert!((r2 - 1.0).abs() < 1e-12);

        let flat: Vec<(f64, f64)> = (0..20).map(|i| (i as f64, 2.0)).collect();
        let (kappa, r2) = fit_decay_rate(&flat).unwrap();
        assert!(kappa.abs() < 1e-14);
        assert!((r2 - 1.0).abs() < 1e-12);

        assert!(fit_decay_rate(&[(0.0, 1.0); 5]).is_err());
        let bad = vec![(0.0, 1.0), (1.0, -2.0), (2.0, 1.0), (3.0, 1.0), (4.0, 1.0),
                       (5.0, 1.0), (6.0, 1.0), (7.0, 1.0), (8.0, 1.0), (9.0, 1.0)];
        assert!(fit_decay_rate(&bad).is_err());
    }

    #[test]
    fn weighted_norm_normalizes_its_own_profile() {
        let kappa0 = 0.05;
        let alpha = 0.5;
        let nu = 0.3;
        let grid = make_grid(50.0, 2048).unwrap();
        let spec = WeightedNormSpec::OuterStar { alpha, nu, kappa0, xi: 0.0 };
        let slices: Vec<(f64, ScalarField)> = [1.0, 3.0, 7.0]
            .iter()
            .map(|&t| {
                let mu0: f64 = (-kappa0 * t).exp();
                let f = sample(
                    |x| mu0.powf(nu - 1.0) / (1.0 + (x / mu0).abs().powf(1.0 + alpha)),
                    grid,
                )
                .unwrap();
                (t, f)
            })
            .collect();
        let refs: Vec<TimeSlice> = slices
            .iter()
            .map(|(t, f)| TimeSlice { time: *t, field: f })
            .collect();
        let norm = weighted_norm(&refs, &spec).unwrap();
        assert!((norm - 1.0).abs() < 1e-12, "norm {norm}");

        let zero = sample(|_| 0.0, grid).unwrap();
        let z = [TimeSlice { time: 1.0, field: &zero }];
        assert_eq!(weighted_norm(&z, &spec).unwrap(), 0.0);
    }

    #[test]
    fn weighted_norm_homogeneous() {
        let grid = make_grid(30.0, 512).unwrap();
        let f = sample(|x| (-x * x / 7.0).exp(), grid).unwrap();
        let scaled = sample(|x| -2.5 * (-x * x / 7.0).exp(), grid).unwrap();
        let spec = WeightedNormSpec::InnerTau { a: 0.5, nu: 1.0, eta: Some(0.75) };
        let a = weighted_norm(&[TimeSlice { time: 2.0, field: &f }], &spec).unwrap();
        let b = weighted_norm(&[TimeSlice { time: 2.0, field: &scaled }], &spec).unwrap();
        assert!((b - 2.5 * a).abs() < 1e-10 * b.abs().max(1.0));
    }
}
