//! Dense N-qubit states and exact one- and two-site Pauli expectation values.
//!
//! Basis ordering: site 0 is the least significant bit of the basis index and
//! bit value 0 is the spin-up state `|0⟩` (σᶻ eigenvalue +1). Spin operators are
//! the Pauli matrices themselves, with eigenvalues ±1.

use std::f64::consts::PI;

use nalgebra::Matrix2;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// Largest supported chain; 2^16 amplitudes is about 1 MiB.
pub const MAX_SITES: usize = 16;

const NORM_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PauliAxis {
    X,
    Y,
    Z,
    I,
}

impl PauliAxis {
    /// The three spin components, in matrix index order.
    pub const XYZ: [PauliAxis; 3] = [PauliAxis::X, PauliAxis::Y, PauliAxis::Z];

    /// Index into a 3×3 structure-factor matrix. `I` has none.
    pub fn index(self) -> Option<usize> {
        match self {
            PauliAxis::X => Some(0),
            PauliAxis::Y => Some(1),
            PauliAxis::Z => Some(2),
            PauliAxis::I => None,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            PauliAxis::X => "x",
            PauliAxis::Y => "y",
            PauliAxis::Z => "z",
            PauliAxis::I => "i",
        }
    }

    pub fn matrix(self) -> Matrix2<C64> {
        let o = C64::new(0.0, 0.0);
        let l = C64::new(1.0, 0.0);
        let i = C64::new(0.0, 1.0);
        match self {
            PauliAxis::X => Matrix2::new(o, l, l, o),
            PauliAxis::Y => Matrix2::new(o, -i, i, o),
            PauliAxis::Z => Matrix2::new(l, o, o, -l),
            PauliAxis::I => Matrix2::identity(),
        }
    }

    /// Action on a single basis bit: σ|b⟩ = c|b'⟩, returned as (flips, c).
    #[inline]
    fn act(self, bit: bool) -> (bool, C64) {
        match (self, bit) {
            (PauliAxis::I, _) => (false, C64::new(1.0, 0.0)),
            (PauliAxis::X, _) => (true, C64::new(1.0, 0.0)),
            (PauliAxis::Y, false) => (true, C64::new(0.0, 1.0)),
            (PauliAxis::Y, true) => (true, C64::new(0.0, -1.0)),
            (PauliAxis::Z, false) => (false, C64::new(1.0, 0.0)),
            (PauliAxis::Z, true) => (false, C64::new(-1.0, 0.0)),
        }
    }
}

/// Pure state of `n_sites` qubits as 2^N complex amplitudes.
#[derive(Clone, Debug, PartialEq)]
pub struct SpinState {
    n_sites: usize,
    amplitudes: Vec<C64>,
}

fn check_sites(n_sites: usize) -> Result<()> {
    if !(2..=MAX_SITES).contains(&n_sites) {
        return domain(format!(
            "n_sites = {n_sites} outside supported range 2..={MAX_SITES}"
        ));
    }
    Ok(())
}

impl SpinState {
    /// Wraps an amplitude vector, checking length and normalization.
    pub fn from_amplitudes(n_sites: usize, amplitudes: Vec<C64>) -> Result<Self> {
        check_sites(n_sites)?;
        if amplitudes.len() != 1 << n_sites {
            return domain(format!(
                "expected {} amplitudes for {n_sites} sites, got {}",
                1usize << n_sites,
                amplitudes.len()
            ));
        }
        let state = SpinState { n_sites, amplitudes };
        let norm = state.norm();
        if (norm - 1.0).abs() > NORM_TOL {
            return domain(format!("state norm {norm:.3e} differs from 1"));
        }
        Ok(state)
    }

    /// Normalizes an arbitrary nonzero vector.
    pub fn normalized(n_sites: usize, mut amplitudes: Vec<C64>) -> Result<Self> {
        let norm = amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            return domain("cannot normalize a zero or non-finite vector");
        }
        amplitudes.iter_mut().for_each(|a| *a /= norm);
        Self::from_amplitudes(n_sites, amplitudes)
    }

    /// Computational basis state; bit j of `index` is the value of site j.
    pub fn basis(n_sites: usize, index: usize) -> Result<Self> {
        check_sites(n_sites)?;
        if index >= 1 << n_sites {
            return domain(format!("basis index {index} out of range"));
        }
        let mut amps = vec![C64::new(0.0, 0.0); 1 << n_sites];
        amps[index] = C64::new(1.0, 0.0);
        Ok(SpinState { n_sites, amplitudes: amps })
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn inner(&self, other: &SpinState) -> C64 {
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    fn check_site(&self, site: usize) -> Result<()> {
        if site >= self.n_sites {
            return domain(format!(
                "site {site} out of range for {} sites",
                self.n_sites
            ));
        }
        Ok(())
    }

    /// ⟨ψ|σ_k^a σ_l^b|ψ⟩ for k ≠ l, without argument checks.
    pub(crate) fn pair_unchecked(&self, k: usize, a: PauliAxis, l: usize, b: PauliAxis) -> C64 {
        let mk = 1usize << k;
        let ml = 1usize << l;
        let mut acc = C64::new(0.0, 0.0);
        for (i, amp) in self.amplitudes.iter().enumerate() {
            if amp.re == 0.0 && amp.im == 0.0 {
                continue;
            }
            let (fk, ck) = a.act(i & mk != 0);
            let (fl, cl) = b.act(i & ml != 0);
            let mut j = i;
            if fk {
                j ^= mk;
            }
            if fl {
                j ^= ml;
            }
            acc += self.amplitudes[j].conj() * ck * cl * amp;
        }
        acc
    }

    /// ⟨σ_k^a⟩.
    pub fn expect_one_site(&self, site: usize, axis: PauliAxis) -> Result<C64> {
        self.check_site(site)?;
        let other = if site == 0 { 1 } else { 0 };
        Ok(self.pair_unchecked(site, axis, other, PauliAxis::I))
    }

    /// Applies `u` to every listed site.
    pub fn apply_single_qubit_unitary(&self, u: &Matrix2<C64>, sites: &Sites) -> Result<SpinState> {
        check_unitary(u)?;
        let list: Vec<usize> = match sites {
            Sites::All => (0..self.n_sites).collect(),
            Sites::Subset(s) => {
                for &k in s {
                    self.check_site(k)?;
                }
                s.clone()
            }
        };
        let mut amps = self.amplitudes.clone();
        for k in list {
            let mask = 1usize << k;
            for i in 0..amps.len() {
                if i & mask != 0 {
                    continue;
                }
                let a0 = amps[i];
                let a1 = amps[i | mask];
                amps[i] = u[(0, 0)] * a0 + u[(0, 1)] * a1;
                amps[i | mask] = u[(1, 0)] * a0 + u[(1, 1)] * a1;
            }
        }
        Ok(SpinState { n_sites: self.n_sites, amplitudes: amps })
    }
}

/// Site selection for [`SpinState::apply_single_qubit_unitary`].
#[derive(Clone, Debug)]
pub enum Sites {
    All,
    Subset(Vec<usize>),
}

pub fn check_unitary(u: &Matrix2<C64>) -> Result<()> {
    let dev = (u.adjoint() * u - Matrix2::<C64>::identity())
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max);
    if dev > NORM_TOL {
        return domain(format!("matrix is not unitary (max |U†U − 1| = {dev:.3e})"));
    }
    Ok(())
}

/// Convex mixture of pure states.
#[derive(Clone, Debug)]
pub struct MixedState {
    components: Vec<(f64, SpinState)>,
}

impl MixedState {
    pub fn new(components: Vec<(f64, SpinState)>) -> Result<Self> {
        let Some((_, first)) = components.first() else {
            return domain("mixture needs at least one component");
        };
        let n = first.n_sites();
        if components.iter().any(|(_, s)| s.n_sites() != n) {
            return domain("mixture components have different site counts");
        }
        if components.iter().any(|(w, _)| !(*w > 0.0 && *w <= 1.0)) {
            return domain("mixture weights must lie in (0, 1]");
        }
        let total: f64 = components.iter().map(|(w, _)| w).sum();
        if (total - 1.0).abs() > NORM_TOL {
            return domain(format!("mixture weights sum to {total}, not 1"));
        }
        Ok(MixedState { components })
    }

    pub fn components(&self) -> &[(f64, SpinState)] {
        &self.components
    }
}

impl From<SpinState> for MixedState {
    fn from(s: SpinState) -> Self {
        MixedState { components: vec![(1.0, s)] }
    }
}

/// Anything that can report exact Pauli-product expectation values.
pub trait SpinExpectation: Sync {
    fn n_sites(&self) -> usize;

    /// ⟨σ_k^a σ_l^b⟩ for distinct in-range sites; callers guarantee the preconditions.
    fn pair_raw(&self, k: usize, a: PauliAxis, l: usize, b: PauliAxis) -> C64;

    /// ⟨σ_k^a σ_l^b⟩. Passing [`PauliAxis::I`] on one slot yields a single-site average.
    fn expect_two_site(&self, k: usize, a: PauliAxis, l: usize, b: PauliAxis) -> Result<C64> {
        let n = self.n_sites();
        if k >= n || l >= n {
            return domain(format!("sites ({k}, {l}) out of range for {n} sites"));
        }
        if k == l {
            return domain(format!(
                "equal sites ({k}); pass PauliAxis::I on one slot for single-site averages"
            ));
        }
        Ok(self.pair_raw(k, a, l, b))
    }

    /// ⟨σ_k^a⟩ (real for Hermitian a).
    fn single_site(&self, k: usize, a: PauliAxis) -> f64 {
        let other = if k == 0 { 1 } else { 0 };
        self.pair_raw(k, a, other, PauliAxis::I).re
    }
}

impl SpinExpectation for SpinState {
    fn n_sites(&self) -> usize {
        self.n_sites
    }

    fn pair_raw(&self, k: usize, a: PauliAxis, l: usize, b: PauliAxis) -> C64 {
        self.pair_unchecked(k, a, l, b)
    }
}

impl SpinExpectation for MixedState {
    fn n_sites(&self) -> usize {
        self.components[0].1.n_sites()
    }

    fn pair_raw(&self, k: usize, a: PauliAxis, l: usize, b: PauliAxis) -> C64 {
        self.components
            .iter()
            .map(|(w, s)| *w * s.pair_unchecked(k, a, l, b))
            .sum()
    }
}

/// Symmetric Dicke state with `n_excitations` sites in `|1⟩`.
pub fn build_dicke(n_sites: usize, n_excitations: usize) -> Result<SpinState> {
    check_sites(n_sites)?;
    if n_excitations > n_sites {
        return domain(format!(
            "excitation count {n_excitations} exceeds n_sites {n_sites}"
        ));
    }
    let amps: Vec<C64> = (0..1usize << n_sites)
        .map(|i| {
            if i.count_ones() as usize == n_excitations {
                C64::new(1.0, 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        })
        .collect();
    SpinState::normalized(n_sites, amps)
}

/// (|0…0⟩ + |1…1⟩)/√2.
pub fn build_ghz(n_sites: usize) -> Result<SpinState> {
    check_sites(n_sites)?;
    let mut amps = vec![C64::new(0.0, 0.0); 1 << n_sites];
    amps[0] = C64::new(1.0, 0.0);
    amps[(1 << n_sites) - 1] = C64::new(1.0, 0.0);
    SpinState::normalized(n_sites, amps)
}

/// The one-excitation Dicke state.
pub fn build_w(n_sites: usize) -> Result<SpinState> {
    build_dicke(n_sites, 1)
}

/// Product state with site j at Bloch angles (θ_j, φ_j):
/// cos(θ/2)|0⟩ + e^{iφ} sin(θ/2)|1⟩.
pub fn build_product(bloch_angles: &[(f64, f64)]) -> Result<SpinState> {
    let n = bloch_angles.len();
    check_sites(n)?;
    for (j, &(theta, phi)) in bloch_angles.iter().enumerate() {
        if !(0.0..=PI).contains(&theta) || !phi.is_finite() {
            return domain(format!(
                "site {j}: Bloch angles (θ = {theta}, φ = {phi}) need θ ∈ [0, π] and finite φ"
            ));
        }
    }
    let factors: Vec<[C64; 2]> = bloch_angles
        .iter()
        .map(|&(theta, phi)| {
            [
                C64::new((theta / 2.0).cos(), 0.0),
                C64::from_polar((theta / 2.0).sin(), phi),
            ]
        })
        .collect();
    let amps: Vec<C64> = (0..1usize << n)
        .map(|i| {
            factors
                .iter()
                .enumerate()
                .map(|(j, f)| f[(i >> j) & 1])
                .product()
        })
        .collect();
    SpinState::normalized(n, amps)
}

/// Haar-random pure state (normalized complex Gaussian vector).
pub fn build_random_pure(n_sites: usize, seed: u64) -> Result<SpinState> {
    check_sites(n_sites)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let amps: Vec<C64> = (0..1usize << n_sites)
        .map(|_| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
        .collect();
    SpinState::normalized(n_sites, amps)
}

fn random_bloch(rng: &mut impl Rng) -> (f64, f64) {
    let u: f64 = rng.random();
    let v: f64 = rng.random();
    ((1.0 - 2.0 * u).clamp(-1.0, 1.0).acos(), 2.0 * PI * v)
}

/// Random product state with Bloch vectors uniform on the sphere.
pub fn build_random_product(n_sites: usize, seed: u64) -> Result<SpinState> {
    check_sites(n_sites)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let angles: Vec<(f64, f64)> = (0..n_sites).map(|_| random_bloch(&mut rng)).collect();
    build_product(&angles)
}

/// Convex mixture of `n_components` random product states with flat-Dirichlet weights.
pub fn build_random_separable(n_sites: usize, n_components: usize, seed: u64) -> Result<MixedState> {
    check_sites(n_sites)?;
    if n_components == 0 {
        return domain("separable mixture needs at least one component");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw: Vec<f64> = (0..n_components)
        .map(|_| {
            let u: f64 = rng.random();
            -(1.0 - u).ln() + f64::MIN_POSITIVE
        })
        .collect();
    let total: f64 = raw.iter().sum();
    let mut components = Vec::with_capacity(n_components);
    for w in raw {
        let angles: Vec<(f64, f64)> = (0..n_sites).map(|_| random_bloch(&mut rng)).collect();
        components.push((w / total, build_product(&angles)?));
    }
    // Re-normalize against rounding in the division above.
    let total: f64 = components.iter().map(|(w, _)| w).sum();
    components.iter_mut().for_each(|(w, _)| *w /= total);
    MixedState::new(components)
}
