//! Dense 2^N × 2^N reference implementations built from Kronecker products.
#![allow(dead_code)]

use bragg_core::spin::{MixedState, SpinState};
use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

pub type Op = DMatrix<C64>;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// 0, 1, 2 → σ^x, σ^y, σ^z; 3 → identity.
pub fn pauli(a: usize) -> Op {
    let z = c(0.0, 0.0);
    let o = c(1.0, 0.0);
    let i = c(0.0, 1.0);
    match a {
        0 => DMatrix::from_row_slice(2, 2, &[z, o, o, z]),
        1 => DMatrix::from_row_slice(2, 2, &[z, -i, i, z]),
        2 => DMatrix::from_row_slice(2, 2, &[o, z, z, -o]),
        _ => DMatrix::identity(2, 2),
    }
}

/// |0⟩⟨1|
pub fn lowering() -> Op {
    DMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)])
}

/// `op` on site `k` of `n`; site 0 is the least significant factor.
pub fn on_site(n: usize, k: usize, op: &Op) -> Op {
    let mut m = DMatrix::from_element(1, 1, c(1.0, 0.0));
    for j in (0..n).rev() {
        m = if j == k { m.kronecker(op) } else { m.kronecker(&DMatrix::identity(2, 2)) };
    }
    m
}

pub fn global(n: usize, u: &Op) -> Op {
    let mut m = DMatrix::from_element(1, 1, c(1.0, 0.0));
    for _ in 0..n {
        m = m.kronecker(u);
    }
    m
}

pub fn ket(s: &SpinState) -> DMatrix<C64> {
    DMatrix::from_column_slice(s.dim(), 1, s.amplitudes())
}

pub fn density_pure(s: &SpinState) -> Op {
    let k = ket(s);
    &k * k.adjoint()
}

pub fn density(m: &MixedState) -> Op {
    let d = m.components()[0].1.dim();
    m.components()
        .iter()
        .fold(DMatrix::zeros(d, d), |acc, (w, s)| acc + density_pure(s) * c(*w, 0.0))
}

pub fn n_sites_of(rho: &Op) -> usize {
    rho.nrows().trailing_zeros() as usize
}

pub fn expect(rho: &Op, op: &Op) -> C64 {
    (rho * op).trace()
}

pub fn pair(rho: &Op, k: usize, a: usize, l: usize, b: usize) -> C64 {
    let n = n_sites_of(rho);
    expect(rho, &(on_site(n, k, &pauli(a)) * on_site(n, l, &pauli(b))))
}

/// ⟨Σ_{i<j} e^{ip(i−j)} σ_i^a σ_j^b⟩ from the materialized operator.
pub fn structure_factor(rho: &Op, a: usize, b: usize, phase: f64) -> C64 {
    let n = n_sites_of(rho);
    let d = rho.nrows();
    let mut m: Op = DMatrix::zeros(d, d);
    for i in 0..n {
        for j in i + 1..n {
            let w = C64::from_polar(1.0, phase * (i as f64 - j as f64));
            m += on_site(n, i, &pauli(a)) * on_site(n, j, &pauli(b)) * w;
        }
    }
    expect(rho, &m)
}

pub fn witness_dicke(rho: &Op) -> f64 {
    let n = n_sites_of(rho) as f64;
    let s = structure_factor(rho, 0, 0, 0.0) + structure_factor(rho, 1, 1, 0.0) - structure_factor(rho, 2, 2, 0.0);
    1.0 - 2.0 / (n * (n - 1.0)) * s.re
}

/// ⟨B†B⟩ with B = Σ_j e^{ipj}(α₀e^{iφ} S_j + α₁e^{−iφ} S_j†).
pub fn intensity(rho: &Op, alpha_0: f64, alpha_1: f64, phi: f64, phase: f64) -> f64 {
    let n = n_sites_of(rho);
    let d = rho.nrows();
    let a = C64::from_polar(alpha_0, phi);
    let b = C64::from_polar(alpha_1, -phi);
    let s = lowering();
    let sd = s.adjoint();
    let mut big: Op = DMatrix::zeros(d, d);
    for j in 0..n {
        let w = C64::from_polar(1.0, phase * j as f64);
        big += (on_site(n, j, &s) * a + on_site(n, j, &sd) * b) * w;
    }
    expect(rho, &(big.adjoint() * &big)).re
}

/// ρ' = U^{⊗N} ρ U^{⊗N}†.
pub fn rotate(rho: &Op, u: &Op) -> Op {
    let g = global(n_sites_of(rho), u);
    &g * rho * g.adjoint()
}

pub fn hadamard_x() -> Op {
    (pauli(0) + pauli(2)) * c(std::f64::consts::FRAC_1_SQRT_2, 0.0)
}

pub fn hadamard_y() -> Op {
    (pauli(1) + pauli(2)) * c(std::f64::consts::FRAC_1_SQRT_2, 0.0)
}

/// Simpson's rule for i∫₀ᵗ e^{−(κ−iδ)(t−τ)} ϱ(τ) dτ on a uniform grid.
pub fn pulse_response_simpson(envelope: impl Fn(f64) -> f64, kappa: f64, delta: f64, t: f64, steps: usize) -> C64 {
    let steps = steps + steps % 2;
    let h = t / steps as f64;
    let rate = c(kappa, -delta);
    let g = |tau: f64| (-rate * (t - tau)).exp() * envelope(tau);
    let mut acc = g(0.0) + g(t);
    for i in 1..steps {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += g(i as f64 * h) * w;
    }
    c(0.0, 1.0) * acc * (h / 3.0)
}
