//! Bandlimited function calculus on the circle.
//!
//! Everything downstream works with trigonometric polynomials
//! `f(θ) = Σ_{|n|≤N} c_n e^{inθ}` stored by their Fourier coefficients.
//! The conventions, fixed once here and used everywhere:
//!
//! * inner product `(f, g) = ∫_0^{2π} f·g dθ`, so Parseval carries a `2π`,
//! * fractional Laplacian `(−Δ)^s` is the multiplier `|n|^{2s}`,
//! * Riesz transform `ℛ` is the multiplier `i·sgn(n)` (kills the mean),
//! * zero-mean inverse `(−Δ)_0^{−α/2}` is `|n|^{−α}` on `n ≠ 0`, `0` at `n = 0`.
//!
//! Pointwise products are formed on a padded grid with `M = 2(N_a+N_b)+1`
//! nodes (so `M ≥ 4N+1` for two factors of equal bandwidth) and re-analyzed
//! at full bandwidth `N_a+N_b`; no aliasing, identities hold to rounding.

use std::cell::RefCell;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

pub const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn fft_forward(buf: &mut [Complex64]) {
    let fft: Arc<dyn Fft<f64>> =
        PLANNER.with(|p| p.borrow_mut().plan_fft_forward(buf.len()));
    fft.process(buf);
}

fn fft_inverse(buf: &mut [Complex64]) {
    let fft: Arc<dyn Fft<f64>> =
        PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(buf.len()));
    fft.process(buf);
}

/// An `m`-component bandlimited function on `S¹`, stored as Fourier
/// coefficients `c^j_n` for `j ∈ 0..m`, `n ∈ −N..=N`.
///
/// Real-valued fields satisfy the conjugate symmetry `c_{−n} = conj(c_n)`;
/// constructors from real data enforce it exactly, and `is_real` measures it.
/// Single complex exponentials (used as oracles in tests) are representable
/// too — the coefficient calculus never assumes symmetry.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    m: usize,
    n_band: usize,
    /// Layout: component-major, `coeffs[j*(2N+1) + (n+N)]`.
    coeffs: Vec<Complex64>,
}

/// Real samples of an `m`-component function on the uniform grid
/// `θ_j = 2πj/M`, component-major.
#[derive(Debug, Clone)]
pub struct GridField {
    pub m: usize,
    pub nodes: usize,
    pub values: Vec<f64>,
}

impl GridField {
    pub fn value(&self, comp: usize, node: usize) -> f64 {
        self.values[comp * self.nodes + node]
    }

    pub fn point(&self, node: usize) -> Vec<f64> {
        (0..self.m).map(|j| self.value(j, node)).collect()
    }

    pub fn theta(&self, node: usize) -> f64 {
        TWO_PI * node as f64 / self.nodes as f64
    }
}

impl SpectralField {
    pub fn zeros(m: usize, n_band: usize) -> Self {
        Self { m, n_band, coeffs: vec![Complex64::ZERO; m * (2 * n_band + 1)] }
    }

    pub fn components(&self) -> usize {
        self.m
    }

    pub fn bandwidth(&self) -> usize {
        self.n_band
    }

    fn idx(&self, comp: usize, n: i64) -> usize {
        debug_assert!(comp < self.m && n.unsigned_abs() as usize <= self.n_band);
        comp * (2 * self.n_band + 1) + (n + self.n_band as i64) as usize
    }

    pub fn coeff(&self, comp: usize, n: i64) -> Complex64 {
        if n.unsigned_abs() as usize > self.n_band {
            Complex64::ZERO
        } else {
            self.coeffs[self.idx(comp, n)]
        }
    }

    pub fn set_coeff(&mut self, comp: usize, n: i64, c: Complex64) {
        let i = self.idx(comp, n);
        self.coeffs[i] = c;
    }

    /// Builds a field from a mode rule `(component, n) ↦ c`.
    pub fn from_modes(
        m: usize,
        n_band: usize,
        rule: impl Fn(usize, i64) -> Complex64,
    ) -> Self {
        let mut f = Self::zeros(m, n_band);
        for j in 0..m {
            for n in -(n_band as i64)..=(n_band as i64) {
                f.set_coeff(j, n, rule(j, n));
            }
        }
        f
    }

    /// Real field from cosine/sine data: `c_0 = a0`, `c_{±n} = (a_n ∓ i b_n)/2`,
    /// so the field equals `a_0 + Σ a_n cos nθ + b_n sin nθ`.
    pub fn from_real_modes(m: usize, n_band: usize, rule: impl Fn(usize, usize) -> (f64, f64)) -> Self {
        let mut f = Self::zeros(m, n_band);
        for j in 0..m {
            let (a0, _) = rule(j, 0);
            f.set_coeff(j, 0, Complex64::new(a0, 0.0));
            for n in 1..=n_band {
                let (a, b) = rule(j, n);
                f.set_coeff(j, n as i64, Complex64::new(a / 2.0, -b / 2.0));
                f.set_coeff(j, -(n as i64), Complex64::new(a / 2.0, b / 2.0));
            }
        }
        f
    }

    /// Samples a smooth closure on `M` nodes and analyzes at bandwidth `N`.
    /// Exact when the closure is a trig polynomial of degree ≤ N and M ≥ 2N+1.
    pub fn from_fn(m: usize, n_band: usize, nodes: usize, f: impl Fn(f64) -> Vec<f64>) -> Self {
        assert!(nodes >= 2 * n_band + 1);
        let mut values = vec![0.0; m * nodes];
        for j in 0..nodes {
            let v = f(TWO_PI * j as f64 / nodes as f64);
            assert_eq!(v.len(), m);
            for (comp, x) in v.iter().enumerate() {
                values[comp * nodes + j] = *x;
            }
        }
        Self::analyze(&GridField { m, nodes, values }, n_band)
    }

    /// Uniform random zero-mean real field with unit-variance mode amplitudes,
    /// decayed as `(1+|n|)^{−decay}`.
    pub fn random_zero_mean(
        m: usize,
        n_band: usize,
        decay: f64,
        rng: &mut impl rand::Rng,
    ) -> Self {
        let mut f = Self::zeros(m, n_band);
        for j in 0..m {
            for n in 1..=n_band as i64 {
                let w = (1.0 + n as f64).powf(-decay);
                let c = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * w;
                f.set_coeff(j, n, c);
                f.set_coeff(j, -n, c.conj());
            }
        }
        f
    }

    /// Max violation of the conjugate symmetry `c_{−n} = conj(c_n)`.
    pub fn realness_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for j in 0..self.m {
            for n in 0..=self.n_band as i64 {
                let d = (self.coeff(j, -n) - self.coeff(j, n).conj()).norm();
                worst = worst.max(d);
            }
        }
        worst
    }

    /// Zeroes the `n = 0` coefficient of every component.
    pub fn drop_mean(&self) -> Self {
        let mut f = self.clone();
        for j in 0..self.m {
            f.set_coeff(j, 0, Complex64::ZERO);
        }
        f
    }

    /// The mean values `c^j_0` (complex in general; real for real fields).
    pub fn mean(&self) -> Vec<Complex64> {
        (0..self.m).map(|j| self.coeff(j, 0)).collect()
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut f = self.clone();
        for c in &mut f.coeffs {
            *c *= s;
        }
        f
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip(other, |a, b| a - b)
    }

    fn zip(&self, other: &Self, op: impl Fn(Complex64, Complex64) -> Complex64) -> Self {
        assert_eq!(self.m, other.m, "component mismatch");
        let n = self.n_band.max(other.n_band);
        let mut f = Self::zeros(self.m, n);
        for j in 0..self.m {
            for k in -(n as i64)..=(n as i64) {
                f.set_coeff(j, k, op(self.coeff(j, k), other.coeff(j, k)));
            }
        }
        f
    }

    /// Evaluates on `M ≥ 2N+1` uniform nodes; asserts the field is real to
    /// rounding and returns the real samples.
    pub fn synthesize(&self, nodes: usize) -> GridField {
        let complex = self.synthesize_complex(nodes);
        let mut values = vec![0.0; self.m * nodes];
        for (i, c) in complex.iter().enumerate() {
            values[i] = c.re;
        }
        GridField { m: self.m, nodes, values }
    }

    /// Complex synthesis, component-major. Needed for single-exponential
    /// oracles; the real path goes through `synthesize`.
    pub fn synthesize_complex(&self, nodes: usize) -> Vec<Complex64> {
        assert!(
            nodes >= 2 * self.n_band + 1,
            "grid must resolve the band: M = {nodes} < 2N+1 = {}",
            2 * self.n_band + 1
        );
        let mut out = vec![Complex64::ZERO; self.m * nodes];
        let mut buf = vec![Complex64::ZERO; nodes];
        for j in 0..self.m {
            buf.fill(Complex64::ZERO);
            for n in -(self.n_band as i64)..=(self.n_band as i64) {
                let slot = n.rem_euclid(nodes as i64) as usize;
                buf[slot] += self.coeff(j, n);
            }
            // IDFT without 1/M: exactly Σ c_n e^{inθ_j}.
            fft_inverse(&mut buf);
            out[j * nodes..(j + 1) * nodes].copy_from_slice(&buf);
        }
        out
    }

    /// Analyzes grid samples at bandwidth `N` (exact for bandlimited data on
    /// `M ≥ 2N+1` nodes).
    pub fn analyze(grid: &GridField, n_band: usize) -> Self {
        let nodes = grid.nodes;
        assert!(nodes >= 2 * n_band + 1);
        let mut f = Self::zeros(grid.m, n_band);
        let mut buf = vec![Complex64::ZERO; nodes];
        for j in 0..grid.m {
            for (k, slot) in buf.iter_mut().enumerate() {
                *slot = Complex64::new(grid.value(j, k), 0.0);
            }
            fft_forward(&mut buf);
            for n in -(n_band as i64)..=(n_band as i64) {
                let slot = n.rem_euclid(nodes as i64) as usize;
                f.set_coeff(j, n, buf[slot] / nodes as f64);
            }
        }
        f
    }

    pub fn analyze_complex(m: usize, nodes: usize, data: &[Complex64], n_band: usize) -> Self {
        assert!(nodes >= 2 * n_band + 1);
        assert_eq!(data.len(), m * nodes);
        let mut f = Self::zeros(m, n_band);
        let mut buf = vec![Complex64::ZERO; nodes];
        for j in 0..m {
            buf.copy_from_slice(&data[j * nodes..(j + 1) * nodes]);
            fft_forward(&mut buf);
            for n in -(n_band as i64)..=(n_band as i64) {
                let slot = n.rem_euclid(nodes as i64) as usize;
                f.set_coeff(j, n, buf[slot] / nodes as f64);
            }
        }
        f
    }

    /// Truncates to bandwidth `n_out`, returning the discarded Parseval energy
    /// `2π Σ_{|n|>n_out} |c_n|²`.
    pub fn truncate(&self, n_out: usize) -> (Self, f64) {
        let mut f = Self::zeros(self.m, n_out);
        let mut lost = 0.0;
        for j in 0..self.m {
            for n in -(self.n_band as i64)..=(self.n_band as i64) {
                let c = self.coeff(j, n);
                if n.unsigned_abs() as usize <= n_out {
                    f.set_coeff(j, n, c);
                } else {
                    lost += c.norm_sqr();
                }
            }
        }
        (f, TWO_PI * lost)
    }

    pub fn apply_multiplier(&self, sigma: &MultiplierSymbol) -> Result<Self> {
        if sigma.zero_mode == ZeroMode::Undefined {
            let mean_abs = self.mean().iter().map(|c| c.norm()).fold(0.0, f64::max);
            let scale = self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
            if mean_abs > 1e-13 * (1.0 + scale) {
                return Err(Error::UndefinedZeroMode { mean_abs });
            }
        }
        let mut f = self.clone();
        for j in 0..self.m {
            for n in -(self.n_band as i64)..=(self.n_band as i64) {
                let g = sigma.gain(n);
                let i = f.idx(j, n);
                f.coeffs[i] *= g;
            }
        }
        Ok(f)
    }

    /// `(−Δ)^s f`, multiplier `|n|^{2s}`.
    pub fn frac_laplacian(&self, s: f64) -> Self {
        self.apply_multiplier(&MultiplierSymbol::frac_laplacian(s))
            .expect("|n|^{2s} has a defined zero mode")
    }

    /// Riesz transform `ℛf`, multiplier `i·sgn(n)`.
    pub fn riesz(&self) -> Self {
        self.apply_multiplier(&MultiplierSymbol::riesz()).expect("riesz defined at 0")
    }

    /// `df/dθ`, multiplier `in`.
    pub fn derivative(&self) -> Self {
        self.apply_multiplier(&MultiplierSymbol::derivative()).expect("derivative defined at 0")
    }

    /// Zero-mean inverse `(−Δ)_0^{−α/2} f`: multiplier `|n|^{−α}` on `n ≠ 0`,
    /// mean annihilated. The semigroup `(IV.5-a)` holds exactly in coefficients.
    pub fn inv_frac_zero_mean(&self, alpha: f64) -> Self {
        self.apply_multiplier(&MultiplierSymbol::inv_frac_zero_mean(alpha))
            .expect("zero-mode annihilated")
    }

    /// `‖f‖_{L²}² = 2π Σ |c_n|²`.
    pub fn l2_norm_sq(&self) -> f64 {
        TWO_PI * self.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>()
    }

    pub fn l2_norm(&self) -> f64 {
        self.l2_norm_sq().sqrt()
    }

    /// `L²` inner product `∫ f·g dθ = 2π Σ_n f_n conj(g_n)` (real for real fields).
    pub fn l2_inner(&self, other: &Self) -> f64 {
        assert_eq!(self.m, other.m);
        let n = self.n_band.max(other.n_band) as i64;
        let mut acc = Complex64::ZERO;
        for j in 0..self.m {
            for k in -n..=n {
                acc += self.coeff(j, k) * other.coeff(j, k).conj();
            }
        }
        TWO_PI * acc.re
    }

    /// Sup norm, measured on a padded grid.
    pub fn max_abs(&self) -> f64 {
        let nodes = (4 * self.n_band + 1).max(64);
        let vals = self.synthesize_complex(nodes);
        let mut worst: f64 = 0.0;
        for k in 0..nodes {
            let mut s = 0.0;
            for j in 0..self.m {
                s += vals[j * nodes + k].norm_sqr();
            }
            worst = worst.max(s.sqrt());
        }
        worst
    }
}

/// How a multiplier treats the `n = 0` mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ZeroMode {
    /// `σ(0)` is a finite value produced by the rule.
    Defined,
    /// `σ(0)` does not exist (e.g. `|n|^{−α}`); applying to a field with a
    /// nonzero mean is an error.
    Undefined,
    /// The symbol annihilates the mean by convention: `σ(0) = 0`.
    Annihilate,
}

/// A Fourier multiplier `n ↦ σ(n)`; real-preserving symbols satisfy
/// `σ(−n) = conj(σ(n))`.
#[derive(Clone)]
pub struct MultiplierSymbol {
    pub name: String,
    rule: Arc<dyn Fn(i64) -> Complex64 + Send + Sync>,
    pub zero_mode: ZeroMode,
}

impl std::fmt::Debug for MultiplierSymbol {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "MultiplierSymbol({})", self.name)
    }
}

impl MultiplierSymbol {
    pub fn new(
        name: impl Into<String>,
        zero_mode: ZeroMode,
        rule: impl Fn(i64) -> Complex64 + Send + Sync + 'static,
    ) -> Self {
        Self { name: name.into(), rule: Arc::new(rule), zero_mode }
    }

    pub fn gain(&self, n: i64) -> Complex64 {
        match (n, self.zero_mode) {
            (0, ZeroMode::Annihilate) | (0, ZeroMode::Undefined) => Complex64::ZERO,
            _ => (self.rule)(n),
        }
    }

    /// Max violation of `σ(−n) = conj(σ(n))` over `|n| ≤ probe`.
    pub fn real_preserving_defect(&self, probe: usize) -> f64 {
        (0..=probe as i64)
            .map(|n| (self.gain(-n) - self.gain(n).conj()).norm())
            .fold(0.0, f64::max)
    }

    pub fn frac_laplacian(s: f64) -> Self {
        Self::new(format!("(-Δ)^{s}"), ZeroMode::Defined, move |n| {
            Complex64::new((n.abs() as f64).powf(2.0 * s), 0.0)
        })
    }

    pub fn riesz() -> Self {
        Self::new("riesz", ZeroMode::Defined, |n| Complex64::new(0.0, n.signum() as f64))
    }

    pub fn derivative() -> Self {
        Self::new("d/dθ", ZeroMode::Defined, |n| Complex64::new(0.0, n as f64))
    }

    pub fn inv_frac_zero_mean(alpha: f64) -> Self {
        Self::new(format!("(-Δ)_0^(-{alpha}/2)"), ZeroMode::Annihilate, move |n| {
            Complex64::new((n.abs() as f64).powf(-alpha), 0.0)
        })
    }
}

/// Pointwise product of two (possibly complex-valued) fields on the alias-free
/// padded grid; output carries the full bandwidth `N_a + N_b`.
pub fn product_full(a: &SpectralField, b: &SpectralField) -> SpectralField {
    assert!(
        a.components() == b.components() || a.components() == 1 || b.components() == 1,
        "incompatible component counts {} vs {}",
        a.components(),
        b.components()
    );
    let m = a.components().max(b.components());
    let n_out = a.bandwidth() + b.bandwidth();
    let nodes = 2 * n_out + 1;
    let va = a.synthesize_complex(nodes);
    let vb = b.synthesize_complex(nodes);
    let mut prod = vec![Complex64::ZERO; m * nodes];
    for j in 0..m {
        let ja = if a.components() == 1 { 0 } else { j };
        let jb = if b.components() == 1 { 0 } else { j };
        for k in 0..nodes {
            prod[j * nodes + k] = va[ja * nodes + k] * vb[jb * nodes + k];
        }
    }
    SpectralField::analyze_complex(m, nodes, &prod, n_out)
}

/// Product truncated to a declared output bandwidth, with the discarded
/// Parseval energy recorded.
pub fn product_truncated(a: &SpectralField, b: &SpectralField, n_out: usize) -> (SpectralField, f64) {
    product_full(a, b).truncate(n_out)
}

/// Inhomogeneous and homogeneous Sobolev norms:
/// `‖f‖_{H^s}² = 2π Σ (1+|n|)^{2s}|c_n|²`, `‖f‖_{Ḣ^s}² = 2π Σ |n|^{2s}|c_n|²`.
pub fn sobolev_norm(f: &SpectralField, s: f64) -> (f64, f64) {
    let mut inhom = 0.0;
    let mut hom = 0.0;
    for j in 0..f.components() {
        for n in -(f.bandwidth() as i64)..=(f.bandwidth() as i64) {
            let e = f.coeff(j, n).norm_sqr();
            inhom += (1.0 + n.abs() as f64).powf(2.0 * s) * e;
            if n != 0 {
                hom += (n.abs() as f64).powf(2.0 * s) * e;
            }
        }
    }
    ((TWO_PI * inhom).sqrt(), (TWO_PI * hom).sqrt())
}

/// Dual-weight `H^{−1/2}` norm used by the commutator probes:
/// `(2π(Σ_{n≠0}|n|^{−1}|c_n|² + |c_0|²))^{1/2}`.
pub fn h_minus_half_norm(f: &SpectralField) -> f64 {
    let mut acc = 0.0;
    for j in 0..f.components() {
        for n in -(f.bandwidth() as i64)..=(f.bandwidth() as i64) {
            let e = f.coeff(j, n).norm_sqr();
            acc += if n == 0 { e } else { e / n.abs() as f64 };
        }
    }
    (TWO_PI * acc).sqrt()
}

/// Which norm proxy `lorentz_and_hardy_proxy` computes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProxyKind {
    L21,
    L2Inf,
    H1Proxy,
}

/// Rearrangement-quadrature Lorentz norms and the Hardy-space proxy
/// `‖f‖_{L¹} + ‖ℛf‖_{L¹}` on grid data.
///
/// The decreasing rearrangement `f*` uses the pointwise Euclidean norm over
/// components with node weight `Δt = 2π/M` and midpoint abscissae.
pub fn lorentz_and_hardy_proxy(f: &GridField, kind: ProxyKind) -> f64 {
    match kind {
        ProxyKind::L21 | ProxyKind::L2Inf => {
            let mut mags: Vec<f64> = (0..f.nodes)
                .map(|k| {
                    (0..f.m).map(|j| f.value(j, k).powi(2)).sum::<f64>().sqrt()
                })
                .collect();
            mags.sort_by(|a, b| b.partial_cmp(a).unwrap());
            let dt = TWO_PI / f.nodes as f64;
            match kind {
                ProxyKind::L21 => mags
                    .iter()
                    .enumerate()
                    .map(|(k, v)| ((k as f64 + 0.5) * dt).powf(-0.5) * v * dt)
                    .sum(),
                ProxyKind::L2Inf => mags
                    .iter()
                    .enumerate()
                    .map(|(k, v)| ((k as f64 + 0.5) * dt).sqrt() * v)
                    .fold(0.0, f64::max),
                ProxyKind::H1Proxy => unreachable!(),
            }
        }
        ProxyKind::H1Proxy => {
            let n_band = (f.nodes - 1) / 2;
            let spectral = SpectralField::analyze(f, n_band);
            let riesz = spectral.riesz().synthesize(f.nodes);
            l1_norm(f) + l1_norm(&riesz)
        }
    }
}

/// `‖f‖_{L¹}` by the uniform Riemann sum of the pointwise Euclidean norm.
pub fn l1_norm(f: &GridField) -> f64 {
    let dt = TWO_PI / f.nodes as f64;
    (0..f.nodes)
        .map(|k| (0..f.m).map(|j| f.value(j, k).powi(2)).sum::<f64>().sqrt() * dt)
        .sum()
}

/// Convenience: proxy norms straight from a spectral field, sampled on a
/// quadrature grid fine enough for the |·|-kinks (default 8192 nodes).
pub fn proxy_norm(f: &SpectralField, kind: ProxyKind, nodes: usize) -> f64 {
    let nodes = nodes.max(2 * f.bandwidth() + 1);
    lorentz_and_hardy_proxy(&f.synthesize(nodes), kind)
}

/// `ℋ¹` proxy with the default quadrature resolution.
pub fn hardy_proxy_norm(f: &SpectralField) -> f64 {
    proxy_norm(f, ProxyKind::H1Proxy, 8192)
}

/// `L^{2,1}` proxy with the default quadrature resolution.
pub fn l21_proxy_norm(f: &SpectralField) -> f64 {
    proxy_norm(f, ProxyKind::L21, 8192)
}
