//! Hamiltonian flow of 1-D variational harmonic maps (sub-Riemannian normal
//! geodesics) and the 2-D rewriting verifiers.
//!
//! The flow is the critical-point system of `ℒ¹(u,ξ) = ∫⟨ξ,P_T(u)ξ⟩/2 − ∫ξ·u'`:
//!
//! ```text
//! du/dθ   = P_T(u) ξ
//! dξ_k/dθ = −½ ⟨ξ, ∂_{z_k}P_T(u) ξ⟩
//! ```
//!
//! integrated by the classical fixed-step RK4 with the conserved Hamiltonian
//! `H = ½⟨ξ, P_T(u)ξ⟩` tracked per sample. Horizontality of `u̇` is automatic
//! (`u̇ = P_Tξ`), conservation drift is the integrator-order probe.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::distributions::ProjectionField;
use crate::error::Result;

#[derive(Debug, Clone)]
pub struct GeodesicState {
    pub u: DVector<f64>,
    pub xi: DVector<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrajectorySample {
    pub theta: f64,
    pub u: Vec<f64>,
    pub xi: Vec<f64>,
    pub hamiltonian: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GeodesicTrajectory {
    pub step: f64,
    pub samples: Vec<TrajectorySample>,
    /// `max_i |H_i − H_0|`.
    pub hamiltonian_drift: f64,
    /// Set when integration stopped on the singular locus.
    pub truncated: bool,
    /// `‖u(end) − u(0)‖` — loops are diagnosed, not enforced.
    pub closure_defect: f64,
}

/// Right-hand side of the Hamiltonian system.
pub fn geodesic_rhs(dist: &ProjectionField, s: &GeodesicState) -> Result<(DVector<f64>, DVector<f64>)> {
    let z: Vec<f64> = s.u.iter().cloned().collect();
    let pt = dist.tangent(&z)?;
    let du = &pt * &s.xi;
    let tensor = dist.tangent_derivative(&z)?;
    let mut dxi = DVector::zeros(dist.m);
    for k in 0..dist.m {
        dxi[k] = -0.5 * s.xi.dot(&(&tensor[k] * &s.xi));
    }
    Ok((du, dxi))
}

pub fn hamiltonian(dist: &ProjectionField, s: &GeodesicState) -> Result<f64> {
    let z: Vec<f64> = s.u.iter().cloned().collect();
    let pt = dist.tangent(&z)?;
    Ok(0.5 * s.xi.dot(&(&pt * &s.xi)))
}

/// Classical RK4 with fixed step `h` over `[0, span]`. Entering the singular
/// locus truncates the trajectory and sets the flag instead of erroring.
pub fn integrate(
    dist: &ProjectionField,
    s0: GeodesicState,
    span: f64,
    h: f64,
) -> Result<GeodesicTrajectory> {
    assert!(h > 0.0);
    let steps = (span / h).round() as usize;
    let mut samples = Vec::with_capacity(steps + 1);
    let mut state = s0;
    let h0 = hamiltonian(dist, &state)?;
    let mut drift: f64 = 0.0;
    let mut truncated = false;
    samples.push(TrajectorySample {
        theta: 0.0,
        u: state.u.iter().cloned().collect(),
        xi: state.xi.iter().cloned().collect(),
        hamiltonian: h0,
    });
    for i in 0..steps {
        match rk4_step(dist, &state, h) {
            Ok(next) => state = next,
            Err(_) => {
                truncated = true;
                break;
            }
        }
        let ham = match hamiltonian(dist, &state) {
            Ok(v) => v,
            Err(_) => {
                truncated = true;
                break;
            }
        };
        drift = drift.max((ham - h0).abs());
        samples.push(TrajectorySample {
            theta: (i + 1) as f64 * h,
            u: state.u.iter().cloned().collect(),
            xi: state.xi.iter().cloned().collect(),
            hamiltonian: ham,
        });
    }
    let closure = {
        let first = DVector::from_vec(samples[0].u.clone());
        let last = DVector::from_vec(samples[samples.len() - 1].u.clone());
        (last - first).norm()
    };
    Ok(GeodesicTrajectory {
        step: h,
        samples,
        hamiltonian_drift: drift,
        truncated,
        closure_defect: closure,
    })
}

fn rk4_step(dist: &ProjectionField, s: &GeodesicState, h: f64) -> Result<GeodesicState> {
    let eval = |u: &DVector<f64>, xi: &DVector<f64>| {
        geodesic_rhs(dist, &GeodesicState { u: u.clone(), xi: xi.clone() })
    };
    let (k1u, k1x) = eval(&s.u, &s.xi)?;
    let (k2u, k2x) = eval(&(&s.u + &k1u * (h / 2.0)), &(&s.xi + &k1x * (h / 2.0)))?;
    let (k3u, k3x) = eval(&(&s.u + &k2u * (h / 2.0)), &(&s.xi + &k2x * (h / 2.0)))?;
    let (k4u, k4x) = eval(&(&s.u + &k3u * h), &(&s.xi + &k3x * h))?;
    Ok(GeodesicState {
        u: &s.u + (k1u + k2u * 2.0 + k3u * 2.0 + k4u) * (h / 6.0),
        xi: &s.xi + (k1x + k2x * 2.0 + k3x * 2.0 + k4x) * (h / 6.0),
    })
}

/// Max over the trajectory of `‖P_N(u)u̇‖` — automatic horizontality.
pub fn horizontality_defect(dist: &ProjectionField, traj: &GeodesicTrajectory) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for s in &traj.samples {
        let state = GeodesicState {
            u: DVector::from_vec(s.u.clone()),
            xi: DVector::from_vec(s.xi.clone()),
        };
        let (du, _) = geodesic_rhs(dist, &state)?;
        let pn = dist.normal(&s.u)?;
        worst = worst.max((&pn * du).norm());
    }
    Ok(worst)
}

/// Max over interior samples of `‖P_T(u)·u''‖` with `u''` by central
/// differences — the integrable-case harmonic-map reduction.
pub fn integrable_reduction_check(
    dist: &ProjectionField,
    traj: &GeodesicTrajectory,
) -> Result<f64> {
    let h = traj.step;
    let mut worst: f64 = 0.0;
    for w in traj.samples.windows(3) {
        let um = DVector::from_vec(w[0].u.clone());
        let u0 = DVector::from_vec(w[1].u.clone());
        let up = DVector::from_vec(w[2].u.clone());
        let upp = (um + up - &u0 * 2.0) / (h * h);
        let pt = dist.tangent(&w[1].u)?;
        worst = worst.max((&pt * upp).norm());
    }
    Ok(worst)
}

/// Exact great circle on the sphere distribution: from `u0 ⊥ ξ0`, both unit,
/// the flow is `u(θ) = cos θ·u0 + sin θ·ξ0` with momentum `ξ = u̇ + θ·u`.
pub fn great_circle(u0: &DVector<f64>, xi0: &DVector<f64>, theta: f64) -> (DVector<f64>, DVector<f64>) {
    let u = u0 * theta.cos() + xi0 * theta.sin();
    let du = -u0 * theta.sin() + xi0 * theta.cos();
    let xi = &du + &u * theta;
    (u, xi)
}

/// Exact helix of the Heisenberg contact flow with the Euclidean-induced
/// metric: launched from `u0 = (R, 0, 0)` with momentum
/// `ξ0 = (0, μR, μ(2+R²))`, the flow is
///
/// ```text
/// u(θ)  = (R cos 2μθ, R sin 2μθ, μR²θ)
/// ξ(θ)  = (−μR sin 2μθ, μR cos 2μθ, μ(2+R²))
/// ```
///
/// (`ν·ξ` and `x ξ_y − y ξ_x` are conserved, which pins the circular radius).
pub fn heisenberg_helix(radius: f64, mu: f64, theta: f64) -> (DVector<f64>, DVector<f64>) {
    let phi = 2.0 * mu * theta;
    let u = DVector::from_vec(vec![
        radius * phi.cos(),
        radius * phi.sin(),
        mu * radius * radius * theta,
    ]);
    let xi = DVector::from_vec(vec![
        -mu * radius * phi.sin(),
        mu * radius * phi.cos(),
        mu * (2.0 + radius * radius),
    ]);
    (u, xi)
}

/// Max deviation of a trajectory from a closed-form flow `(u, ξ)(θ)`.
pub fn max_deviation(
    traj: &GeodesicTrajectory,
    exact: impl Fn(f64) -> (DVector<f64>, DVector<f64>),
) -> f64 {
    traj.samples
        .iter()
        .map(|s| {
            let (u, _) = exact(s.theta);
            (DVector::from_vec(s.u.clone()) - u).norm()
        })
        .fold(0.0, f64::max)
}

// ---------------------------------------------------------------------------
// 2-D patch verifiers.
// ---------------------------------------------------------------------------

/// An m-component map sampled on the `(n+1)×(n+1)` uniform grid of `[0,1]²`.
#[derive(Debug, Clone)]
pub struct PatchField {
    pub n: usize,
    pub m: usize,
    /// Row-major `values[(iy*(n+1) + ix)*m + comp]`.
    pub values: Vec<f64>,
}

impl PatchField {
    pub fn from_fn(n: usize, m: usize, f: impl Fn(f64, f64) -> Vec<f64>) -> Self {
        let mut values = vec![0.0; (n + 1) * (n + 1) * m];
        for iy in 0..=n {
            for ix in 0..=n {
                let v = f(ix as f64 / n as f64, iy as f64 / n as f64);
                assert_eq!(v.len(), m);
                let base = (iy * (n + 1) + ix) * m;
                values[base..base + m].copy_from_slice(&v);
            }
        }
        Self { n, m, values }
    }

    pub fn at(&self, ix: usize, iy: usize) -> DVector<f64> {
        let base = (iy * (self.n + 1) + ix) * self.m;
        DVector::from_row_slice(&self.values[base..base + self.m])
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    /// Central-difference gradient `(∂_{x}, ∂_{y})` at an interior node.
    pub fn grad(&self, ix: usize, iy: usize) -> (DVector<f64>, DVector<f64>) {
        let h = self.h();
        let dx = (self.at(ix + 1, iy) - self.at(ix - 1, iy)) / (2.0 * h);
        let dy = (self.at(ix, iy + 1) - self.at(ix, iy - 1)) / (2.0 * h);
        (dx, dy)
    }

    /// 5-point `div∇u` at an interior node.
    pub fn laplacian(&self, ix: usize, iy: usize) -> DVector<f64> {
        let h = self.h();
        (self.at(ix + 1, iy) + self.at(ix - 1, iy) + self.at(ix, iy + 1) + self.at(ix, iy - 1)
            - self.at(ix, iy) * 4.0)
            / (h * h)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Rewrite2dReport {
    /// `max ‖div∇u − Σ_l Ω_l ∂_l u‖_∞` over interior nodes.
    pub residual: f64,
    /// Exact by construction; measured anyway.
    pub omega_antisymmetry: f64,
    pub gate_horizontality: f64,
    pub gate_harmonicity: f64,
    pub grid_step: f64,
}

/// Verifies the 2-D rewriting `div∇u = Ω·∇u` with
/// `Ω_l = P_N(u)∂_l(P_T∘u) − (P_N(u)∂_l(P_T∘u))ᵀ`, second-order central
/// differences; `∂_l(P_T∘u)` by the chain rule through the derivative tensor.
pub fn verify_2d_rewrite(
    dist: &ProjectionField,
    u: &PatchField,
    gate_tol: f64,
) -> Result<Rewrite2dReport> {
    let n = u.n;
    let mut gate_h: f64 = 0.0;
    let mut gate_harm: f64 = 0.0;
    let mut residual: f64 = 0.0;
    let mut antisym: f64 = 0.0;
    for iy in 1..n {
        for ix in 1..n {
            let z = u.at(ix, iy);
            let zs: Vec<f64> = z.iter().cloned().collect();
            let pt = dist.tangent(&zs)?;
            let pn = dist.normal(&zs)?;
            let (dx, dy) = u.grad(ix, iy);
            let lap = u.laplacian(ix, iy);
            gate_h = gate_h.max((&pn * &dx).norm()).max((&pn * &dy).norm());
            gate_harm = gate_harm.max((&pt * &lap).norm());

            let tensor = dist.tangent_derivative(&zs)?;
            let mut rhs = DVector::zeros(u.m);
            for (dl, _axis) in [(&dx, 0usize), (&dy, 1usize)] {
                // ∂_l(P_T∘u) = Σ_k ∂_{z_k}P_T · ∂_l u_k
                let mut dpt = DMatrix::zeros(u.m, u.m);
                for k in 0..u.m {
                    dpt += &tensor[k] * dl[k];
                }
                let pndpt = &pn * dpt;
                let omega_l = &pndpt - pndpt.transpose();
                antisym = antisym.max((&omega_l + omega_l.transpose()).amax());
                rhs += omega_l * dl;
            }
            residual = residual.max((lap - rhs).amax());
        }
    }
    if gate_h > gate_tol {
        return Err(crate::error::Error::GateFailed {
            gate: "2d horizontality P_N(u)∇u".into(),
            value: gate_h,
            tol: gate_tol,
        });
    }
    if gate_harm > gate_tol {
        return Err(crate::error::Error::GateFailed {
            gate: "2d harmonic-horizontality P_T(u)Δu".into(),
            value: gate_harm,
            tol: gate_tol,
        });
    }
    Ok(Rewrite2dReport {
        residual,
        omega_antisymmetry: antisym,
        gate_horizontality: gate_h,
        gate_harmonicity: gate_harm,
        grid_step: u.h(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct Variational2dReport {
    /// `max ‖∂_l u − P_T(u)ξ^l‖` over interior nodes.
    pub eq1_residual: f64,
    /// `max |div ξ_k + ½Σ_l⟨ξ^l, ∂_{z_k}P_T ξ^l⟩|`.
    pub eq2_residual: f64,
    /// `max |Ω^{ik}_l + Ω^{ki}_l|` — definitional.
    pub omega_antisymmetry: f64,
}

/// Residuals of the 2-D critical-pair system and the antisymmetry of the
/// `Ω^{ik}_l` built from `ξ` per the displayed contraction.
pub fn variational_2d_residual(
    dist: &ProjectionField,
    u: &PatchField,
    xi: [&PatchField; 2],
) -> Result<Variational2dReport> {
    let n = u.n;
    let h = u.h();
    let mut eq1: f64 = 0.0;
    let mut eq2: f64 = 0.0;
    let mut antisym: f64 = 0.0;
    for iy in 1..n {
        for ix in 1..n {
            let z = u.at(ix, iy);
            let zs: Vec<f64> = z.iter().cloned().collect();
            let pt = dist.tangent(&zs)?;
            let tensor = dist.tangent_derivative(&zs)?;
            let (dx, dy) = u.grad(ix, iy);
            let xi1 = xi[0].at(ix, iy);
            let xi2 = xi[1].at(ix, iy);
            eq1 = eq1.max((&dx - &pt * &xi1).norm()).max((&dy - &pt * &xi2).norm());

            // div ξ_k = ∂_x ξ¹_k + ∂_y ξ²_k.
            let dxi1 = (xi[0].at(ix + 1, iy) - xi[0].at(ix - 1, iy)) / (2.0 * h);
            let dxi2 = (xi[1].at(ix, iy + 1) - xi[1].at(ix, iy - 1)) / (2.0 * h);
            for k in 0..u.m {
                let quad = xi1.dot(&(&tensor[k] * &xi1)) + xi2.dot(&(&tensor[k] * &xi2));
                eq2 = eq2.max((dxi1[k] + dxi2[k] + 0.5 * quad).abs());
            }

            // Ω^{ik}_l = Σ_{j,s} ξ^l_j (P^{is}∂_{z_s}P^{kj} − P^{ks}∂_{z_s}P^{ij}).
            for xil in [&xi1, &xi2] {
                for i in 0..u.m {
                    for k in 0..u.m {
                        let mut v = 0.0;
                        for s in 0..u.m {
                            let mut pd_kj = 0.0;
                            let mut pd_ij = 0.0;
                            for j in 0..u.m {
                                pd_kj += tensor[s][(k, j)] * xil[j];
                                pd_ij += tensor[s][(i, j)] * xil[j];
                            }
                            v += pt[(i, s)] * pd_kj - pt[(k, s)] * pd_ij;
                        }
                        // Only the antisymmetry is asserted here; recompute
                        // the transposed entry directly.
                        let mut vt = 0.0;
                        for s in 0..u.m {
                            let mut pd_ij = 0.0;
                            let mut pd_kj = 0.0;
                            for j in 0..u.m {
                                pd_ij += tensor[s][(i, j)] * xil[j];
                                pd_kj += tensor[s][(k, j)] * xil[j];
                            }
                            vt += pt[(k, s)] * pd_ij - pt[(i, s)] * pd_kj;
                        }
                        antisym = antisym.max((v + vt).abs());
                    }
                }
            }
        }
    }
    Ok(Variational2dReport {
        eq1_residual: eq1,
        eq2_residual: eq2,
        omega_antisymmetry: antisym,
    })
}

/// Inverse stereographic projection `ℝ² → S² ⊂ ℝ³` centered so the patch
/// `[0,1]²` sits away from the pole: the classical harmonic-map oracle.
pub fn inverse_stereographic(x: f64, y: f64) -> Vec<f64> {
    let s = x * x + y * y;
    vec![2.0 * x / (1.0 + s), 2.0 * y / (1.0 + s), (s - 1.0) / (1.0 + s)]
}

/// The exact critical momentum for the stereographic pair: `ξ^l = ∂_l u + c_l u`
/// with `c = 4x/(1+|x|²)` (so that `div c = |∇u|² = 8/(1+|x|²)²`).
pub fn stereographic_momentum(x: f64, y: f64, axis: usize) -> Vec<f64> {
    let s = x * x + y * y;
    let u = inverse_stereographic(x, y);
    let du = stereographic_gradient(x, y, axis);
    let c = 4.0 * (if axis == 0 { x } else { y }) / (1.0 + s);
    (0..3).map(|k| du[k] + c * u[k]).collect()
}

fn stereographic_gradient(x: f64, y: f64, axis: usize) -> Vec<f64> {
    let s = x * x + y * y;
    let d = (1.0 + s) * (1.0 + s);
    match axis {
        0 => vec![
            (2.0 * (1.0 + s) - 4.0 * x * x) / d,
            -4.0 * x * y / d,
            4.0 * x / d,
        ],
        _ => vec![
            -4.0 * x * y / d,
            (2.0 * (1.0 + s) - 4.0 * y * y) / d,
            4.0 * y / d,
        ],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::{constant, heisenberg, hopf_c2, lemma_a1_defect, sphere_tangent};
    use nalgebra::DMatrix;

    #[test]
    fn rhs_trivial_cases() {
        let idd = constant(DMatrix::identity(3, 3));
        let s = GeodesicState {
            u: DVector::zeros(3),
            xi: DVector::from_vec(vec![1.0, 0.0, 0.0]),
        };
        let (du, dxi) = geodesic_rhs(&idd, &s).unwrap();
        assert_eq!(du, s.xi);
        assert!(dxi.norm() == 0.0);
        // ξ = 0 → (0, 0).
        let s0 = GeodesicState { u: DVector::from_vec(vec![0.0, 0.0, 1.0]), xi: DVector::zeros(3) };
        let (du, dxi) = geodesic_rhs(&sphere_tangent(3), &s0).unwrap();
        assert!(du.norm() == 0.0 && dxi.norm() == 0.0);
    }

    #[test]
    fn sphere_rhs_matches_hand_differentiation() {
        // At u = e₃, ξ = e₁: du = e₁ and dξ_k = −½⟨ξ,∂_kP_Tξ⟩ with the radial
        // derivative of I − zzᵀ/|z|²: ⟨ξ,∂_kP_Tξ⟩ = −2ξ_k(z·ξ) + 2z_k(z·ξ)² = 0.
        let s = GeodesicState {
            u: DVector::from_vec(vec![0.0, 0.0, 1.0]),
            xi: DVector::from_vec(vec![1.0, 0.0, 0.0]),
        };
        let (du, dxi) = geodesic_rhs(&sphere_tangent(3), &s).unwrap();
        assert!((du - DVector::from_vec(vec![1.0, 0.0, 0.0])).norm() < 1e-14);
        assert!(dxi.norm() < 1e-14);
        // Off-orthogonal start: z·ξ ≠ 0 gives dξ = (z·ξ)ξ − (z·ξ)²z at |z|=1.
        let s = GeodesicState {
            u: DVector::from_vec(vec![0.0, 0.0, 1.0]),
            xi: DVector::from_vec(vec![1.0, 0.0, 2.0]),
        };
        let (_, dxi) = geodesic_rhs(&sphere_tangent(3), &s).unwrap();
        let expect = &s.xi * 2.0 - &s.u * 4.0;
        assert!((dxi - expect).norm() < 1e-13);
    }

    #[test]
    fn straight_line_on_constant_distribution() {
        let idd = constant(DMatrix::identity(2, 2));
        let s0 = GeodesicState {
            u: DVector::zeros(2),
            xi: DVector::from_vec(vec![1.0, 0.0]),
        };
        let traj = integrate(&idd, s0, std::f64::consts::TAU, std::f64::consts::TAU / 256.0).unwrap();
        let last = traj.samples.last().unwrap();
        assert!((last.u[0] - std::f64::consts::TAU).abs() < 1e-12);
        assert!(traj.hamiltonian_drift < 1e-13);
    }

    #[test]
    fn great_circle_matches_closed_form() {
        let u0 = DVector::from_vec(vec![0.0, 0.0, 1.0]);
        let xi0 = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        // The closed form satisfies the ODE: finite-difference cross-check.
        let dist = sphere_tangent(3);
        for theta in [0.3, 1.2, 2.5] {
            let (u, xi) = great_circle(&u0, &xi0, theta);
            let (du, dxi) = geodesic_rhs(&dist, &GeodesicState { u: u.clone(), xi: xi.clone() }).unwrap();
            let eps = 1e-6;
            let (up, xp) = great_circle(&u0, &xi0, theta + eps);
            let (um, xm) = great_circle(&u0, &xi0, theta - eps);
            assert!(((up - um) / (2.0 * eps) - du).norm() < 1e-8);
            assert!(((xp - xm) / (2.0 * eps) - dxi).norm() < 1e-8);
        }
        let h = std::f64::consts::TAU / 2048.0;
        let traj = integrate(
            &dist,
            GeodesicState { u: u0.clone(), xi: xi0.clone() },
            std::f64::consts::TAU,
            h,
        )
        .unwrap();
        let dev = max_deviation(&traj, |t| great_circle(&u0, &xi0, t));
        assert!(dev < 1e-6, "great-circle deviation {dev:.3e}");
        assert!(traj.closure_defect < 1e-6);
        // Integrable reduction: P_T(u)u'' ≈ 0 along the flow.
        let red = integrable_reduction_check(&dist, &traj).unwrap();
        assert!(red < 1e-6, "reduction residual {red:.3e}");
    }

    #[test]
    fn heisenberg_helix_matches_closed_form() {
        let dist = heisenberg();
        let (radius, mu) = (1.0, 0.5);
        // Closed form solves the ODE (independent check of the derivation).
        for theta in [0.4, 1.7, 3.0] {
            let (u, xi) = heisenberg_helix(radius, mu, theta);
            let (du, dxi) = geodesic_rhs(&dist, &GeodesicState { u: u.clone(), xi: xi.clone() }).unwrap();
            let eps = 1e-6;
            let (up, xp) = heisenberg_helix(radius, mu, theta + eps);
            let (um, xm) = heisenberg_helix(radius, mu, theta - eps);
            assert!(((up - um) / (2.0 * eps) - du).norm() < 1e-8, "du mismatch");
            assert!(((xp - xm) / (2.0 * eps) - dxi).norm() < 1e-8, "dxi mismatch");
        }
        let (u0, xi0) = heisenberg_helix(radius, mu, 0.0);
        let traj = integrate(
            &dist,
            GeodesicState { u: u0, xi: xi0 },
            std::f64::consts::TAU,
            std::f64::consts::TAU / 2048.0,
        )
        .unwrap();
        let dev = max_deviation(&traj, |t| heisenberg_helix(radius, mu, t));
        assert!(dev < 1e-5, "helix deviation {dev:.3e}");
        // H = μ²R²(4+R²)/2 along the helix.
        let expect_h = mu * mu * radius * radius * (4.0 + radius * radius) / 2.0;
        assert!((traj.samples[0].hamiltonian - expect_h).abs() < 1e-12);
    }

    #[test]
    fn hamiltonian_drift_is_order_four() {
        let dist = hopf_c2();
        let s0 = GeodesicState {
            u: DVector::from_vec(vec![1.0, 0.0, 0.0, 0.0]),
            xi: DVector::from_vec(vec![0.1, 0.2, 1.0, 0.4]),
        };
        let span = std::f64::consts::TAU;
        let d1 = integrate(&dist, s0.clone(), span, span / 512.0).unwrap().hamiltonian_drift;
        let d2 = integrate(&dist, s0, span, span / 1024.0).unwrap().hamiltonian_drift;
        // Order 4: halving h cuts the drift by ≥ 2⁴ (up to cancellation the
        // observed ratio can exceed the clean 16).
        let ratio = d1 / d2.max(1e-300);
        assert!(ratio >= 12.0 && ratio.is_finite(), "Richardson ratio {ratio:.2}");
    }

    #[test]
    fn time_reversal_to_integrator_order() {
        let dist = hopf_c2();
        let s0 = GeodesicState {
            u: DVector::from_vec(vec![1.0, 0.0, 0.0, 0.0]),
            xi: DVector::from_vec(vec![0.0, 0.3, 0.9, -0.2]),
        };
        let span = 2.0;
        let h = span / 1024.0;
        let fwd = integrate(&dist, s0.clone(), span, h).unwrap();
        let end = fwd.samples.last().unwrap();
        let back = integrate(
            &dist,
            GeodesicState {
                u: DVector::from_vec(end.u.clone()),
                xi: -DVector::from_vec(end.xi.clone()),
            },
            span,
            h,
        )
        .unwrap();
        let ret = back.samples.last().unwrap();
        assert!((DVector::from_vec(ret.u.clone()) - &s0.u).norm() < 1e-9);
        assert!((DVector::from_vec(ret.xi.clone()) + &s0.xi).norm() < 1e-9);
    }

    #[test]
    fn automatic_horizontality_along_trajectories() {
        let dist = heisenberg();
        let (u0, xi0) = heisenberg_helix(0.7, 0.4, 0.0);
        let traj = integrate(&dist, GeodesicState { u: u0, xi: xi0 }, 3.0, 3.0 / 512.0).unwrap();
        assert!(horizontality_defect(&dist, &traj).unwrap() < 1e-10);
    }

    #[test]
    fn singular_locus_truncates() {
        // hopf/sphere flows preserve |u| and never reach their locus; widen
        // the locus of a free flow so the straight line crosses it.
        let mut dist = constant(DMatrix::identity(2, 2));
        dist.singular_radius = 0.5;
        let s0 = GeodesicState {
            u: DVector::from_vec(vec![-2.0, 0.0]),
            xi: DVector::from_vec(vec![1.0, 0.0]),
        };
        let traj = integrate(&dist, s0, 4.0, 0.0625).unwrap();
        assert!(traj.truncated);
        let last = traj.samples.last().unwrap();
        assert!(last.u[0] < -0.5, "stopped before the locus, got {}", last.u[0]);
    }

    #[test]
    fn hopf_reduction_residual_reported_not_small() {
        // Non-integrable distribution: the reduction residual is O(1) data.
        let dist = hopf_c2();
        let s0 = GeodesicState {
            u: DVector::from_vec(vec![1.0, 0.0, 0.0, 0.0]),
            xi: DVector::from_vec(vec![0.0, 0.0, 0.8, 0.5]),
        };
        let traj = integrate(&dist, s0, std::f64::consts::TAU, std::f64::consts::TAU / 1024.0).unwrap();
        let red = integrable_reduction_check(&dist, &traj).unwrap();
        assert!(red.is_finite());
        // Sanity: the lemma A.1 defect is also nonzero here (non-integrable).
        let d = lemma_a1_defect(
            &dist,
            &[1.0, 0.0, 0.0, 0.0],
            &DVector::from_vec(vec![0.0, 0.0, 1.0, 0.0]),
            &DVector::from_vec(vec![0.0, 0.0, 0.0, 1.0]),
        )
        .unwrap();
        assert!(d.norm() > 0.1);
    }

    #[test]
    fn stereographic_rewrite_residual_decays_at_order_two() {
        let dist = sphere_tangent(3);
        let run = |n: usize| {
            let u = PatchField::from_fn(n, 3, inverse_stereographic);
            verify_2d_rewrite(&dist, &u, 1.0).unwrap()
        };
        let r1 = run(32);
        let r2 = run(64);
        assert!(r1.omega_antisymmetry < 1e-12);
        let ratio = r1.residual / r2.residual.max(1e-300);
        assert!(ratio >= 3.5, "order-2 ratio {ratio:.2} ({} -> {})", r1.residual, r2.residual);
    }

    #[test]
    fn constant_map_rewrite_is_zero() {
        let dist = sphere_tangent(3);
        let u = PatchField::from_fn(16, 3, |_, _| vec![0.0, 0.0, 1.0]);
        let r = verify_2d_rewrite(&dist, &u, 1e-12).unwrap();
        assert_eq!(r.residual, 0.0);
        assert_eq!(r.omega_antisymmetry, 0.0);
    }

    #[test]
    fn rewrite_gate_failure_reports_values() {
        let dist = sphere_tangent(3);
        // A non-harmonic map into the sphere: normalized linear sheet.
        let u = PatchField::from_fn(24, 3, |x, y| {
            let v = [1.0 + x, y, 0.5];
            let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            vec![v[0] / n, v[1] / n, v[2] / n]
        });
        assert!(matches!(
            verify_2d_rewrite(&dist, &u, 1e-6),
            Err(crate::error::Error::GateFailed { .. })
        ));
    }

    #[test]
    fn variational_2d_residuals_for_stereographic_pair() {
        let dist = sphere_tangent(3);
        let run = |n: usize| {
            let u = PatchField::from_fn(n, 3, inverse_stereographic);
            let xi1 = PatchField::from_fn(n, 3, |x, y| stereographic_momentum(x, y, 0));
            let xi2 = PatchField::from_fn(n, 3, |x, y| stereographic_momentum(x, y, 1));
            variational_2d_residual(&dist, &u, [&xi1, &xi2]).unwrap()
        };
        let r1 = run(32);
        let r2 = run(64);
        assert!(r1.omega_antisymmetry < 1e-12);
        // Both residuals compare finite differences against the analytic
        // pair, so they decay at second order.
        let ratio1 = r1.eq1_residual / r2.eq1_residual.max(1e-300);
        assert!(ratio1 >= 3.5, "eq1 order-2 ratio {ratio1:.2}");
        let ratio = r1.eq2_residual / r2.eq2_residual.max(1e-300);
        assert!(ratio >= 3.5, "eq2 order-2 ratio {ratio:.2}");
        // ξ = 0 with constant u: both residuals vanish.
        let uc = PatchField::from_fn(8, 3, |_, _| vec![0.0, 0.0, 1.0]);
        let z = PatchField::from_fn(8, 3, |_, _| vec![0.0; 3]);
        let r = variational_2d_residual(&dist, &uc, [&z, &z]).unwrap();
        assert_eq!(r.eq1_residual, 0.0);
        assert_eq!(r.eq2_residual, 0.0);
    }
}
