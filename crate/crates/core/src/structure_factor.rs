//! Static structure factors S^{αβ}(q), the symmetrized operators Ĉ^α(q) and the
//! structural entanglement witnesses built from them.

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::spin::{PauliAxis, SpinExpectation};

const AXIS_TOL: f64 = 1e-12;
/// Largest imaginary residual tolerated on a Hermitian expectation value.
pub const HERMITIAN_TOL: f64 = 1e-12;

pub type Complex3x3 = [[C64; 3]; 3];

pub(crate) const ZERO3: Complex3x3 = [[C64 { re: 0.0, im: 0.0 }; 3]; 3];

/// A uniform chain: site j sits at `j · spacing · axis`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainGeometry {
    n_sites: usize,
    spacing: f64,
    axis: [f64; 3],
}

impl ChainGeometry {
    pub fn new(n_sites: usize, spacing: f64, axis: [f64; 3]) -> Result<Self> {
        if !(spacing > 0.0 && spacing.is_finite()) {
            return domain(format!("lattice spacing must be positive, got {spacing}"));
        }
        let len = dot(axis, axis).sqrt();
        if (len - 1.0).abs() > AXIS_TOL {
            return domain(format!("chain axis must be a unit vector (|axis| = {len})"));
        }
        Ok(ChainGeometry { n_sites, spacing, axis })
    }

    /// Chain along x̂ with unit spacing.
    pub fn along_x(n_sites: usize) -> Self {
        ChainGeometry { n_sites, spacing: 1.0, axis: [1.0, 0.0, 0.0] }
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn axis(&self) -> [f64; 3] {
        self.axis
    }

    pub fn site_position(&self, j: usize) -> [f64; 3] {
        let s = j as f64 * self.spacing;
        [s * self.axis[0], s * self.axis[1], s * self.axis[2]]
    }

    /// q · (d · axis), the scattering phase accumulated per lattice step.
    pub fn phase_per_site(&self, q: &WaveVector) -> f64 {
        self.spacing * dot(q.0, self.axis)
    }

    pub(crate) fn check_compatible(&self, n_sites: usize) -> Result<()> {
        if self.n_sites != n_sites {
            return domain(format!(
                "geometry has {} sites but the state has {n_sites}",
                self.n_sites
            ));
        }
        Ok(())
    }
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Transferred wave vector, in inverse length units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaveVector(pub [f64; 3]);

impl WaveVector {
    pub const ZERO: WaveVector = WaveVector([0.0; 3]);

    pub fn new(components: [f64; 3]) -> Result<Self> {
        if components.iter().any(|c| !c.is_finite()) {
            return domain("wave vector components must be finite");
        }
        Ok(WaveVector(components))
    }

    /// The wave vector along the chain axis whose phase per site is `phase`.
    pub fn along_chain(geometry: &ChainGeometry, phase: f64) -> Self {
        let k = phase / geometry.spacing;
        let a = geometry.axis;
        WaveVector([k * a[0], k * a[1], k * a[2]])
    }

    pub fn neg(self) -> Self {
        WaveVector([-self.0[0], -self.0[1], -self.0[2]])
    }

    pub fn sub(self, other: WaveVector) -> Self {
        WaveVector([self.0[0] - other.0[0], self.0[1] - other.0[1], self.0[2] - other.0[2]])
    }

    pub fn add(self, other: WaveVector) -> Self {
        WaveVector([self.0[0] + other.0[0], self.0[1] + other.0[1], self.0[2] + other.0[2]])
    }
}

/// S^{αβ}(q), rows and columns in x, y, z order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StructureFactorMatrix {
    pub q: WaveVector,
    pub phase_per_site: f64,
    pub entries: Complex3x3,
}

impl StructureFactorMatrix {
    pub fn get(&self, a: PauliAxis, b: PauliAxis) -> C64 {
        self.entries[axis_index(a)][axis_index(b)]
    }
}

pub(crate) fn axis_index(a: PauliAxis) -> usize {
    a.index().expect("structure-factor indices are x, y or z")
}

/// Exact two-site correlations ⟨σ_k^α σ_l^β⟩ for every k < l, plus single-site
/// averages. Every Fourier-type aggregate in the crate is derived from this table.
#[derive(Clone, Debug)]
pub struct PairCorrelations {
    n_sites: usize,
    // pairs[idx(k, l)][a][b] = ⟨σ_k^a σ_l^b⟩, k < l
    pairs: Vec<Complex3x3>,
    singles: Vec<[f64; 3]>,
}

impl PairCorrelations {
    pub fn compute<S: SpinExpectation + ?Sized>(state: &S) -> Self {
        let n = state.n_sites();
        let index: Vec<(usize, usize)> =
            (0..n).flat_map(|k| (k + 1..n).map(move |l| (k, l))).collect();
        let pairs = index
            .par_iter()
            .map(|&(k, l)| {
                let mut m = ZERO3;
                for (i, a) in PauliAxis::XYZ.into_iter().enumerate() {
                    for (j, b) in PauliAxis::XYZ.into_iter().enumerate() {
                        m[i][j] = state.pair_raw(k, a, l, b);
                    }
                }
                m
            })
            .collect();
        let singles = (0..n)
            .into_par_iter()
            .map(|k| PauliAxis::XYZ.map(|a| state.single_site(k, a)))
            .collect();
        PairCorrelations { n_sites: n, pairs, singles }
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    fn pair_index(&self, k: usize, l: usize) -> usize {
        debug_assert!(k < l && l < self.n_sites);
        // pairs (0,1)..(0,n-1), (1,2).. in row-major order
        k * (2 * self.n_sites - k - 1) / 2 + (l - k - 1)
    }

    /// ⟨σ_k^a σ_l^b⟩ for any k ≠ l.
    pub fn pair(&self, k: usize, a: usize, l: usize, b: usize) -> C64 {
        if k < l {
            self.pairs[self.pair_index(k, l)][a][b]
        } else {
            self.pairs[self.pair_index(l, k)][b][a]
        }
    }

    pub fn single(&self, k: usize, a: usize) -> f64 {
        self.singles[k][a]
    }

    /// Σ_k ⟨σ_k^α⟩ for α = x, y, z.
    pub fn single_sums(&self) -> [f64; 3] {
        let mut s = [0.0; 3];
        for row in &self.singles {
            for a in 0..3 {
                s[a] += row[a];
            }
        }
        s
    }

    /// S^{αβ} at the given phase per site: Σ_{i<j} e^{ip(i−j)} ⟨σ_i^α σ_j^β⟩.
    pub fn structure_factor(&self, phase: f64) -> Complex3x3 {
        let n = self.n_sites;
        let mut out = ZERO3;
        for i in 0..n {
            for j in i + 1..n {
                let w = C64::from_polar(1.0, phase * (i as f64 - j as f64));
                let p = &self.pairs[self.pair_index(i, j)];
                for a in 0..3 {
                    for b in 0..3 {
                        out[a][b] += w * p[a][b];
                    }
                }
            }
        }
        out
    }

    /// T^{αβ} = Σ_{k≠l} e^{−ip(k−l)} ⟨σ_k^α σ_l^β⟩, the combination the
    /// scattered intensity responds to.
    pub fn symmetrized(&self, phase: f64) -> Complex3x3 {
        let n = self.n_sites;
        let mut out = ZERO3;
        for k in 0..n {
            for l in 0..n {
                if k == l {
                    continue;
                }
                let w = C64::from_polar(1.0, -phase * (k as f64 - l as f64));
                for a in 0..3 {
                    for b in 0..3 {
                        out[a][b] += w * self.pair(k, a, l, b);
                    }
                }
            }
        }
        out
    }

    /// G^{αβ}(m) = Σ_k ⟨σ_k^α σ_{k+m}^β⟩ over the N − m pairs at separation m.
    pub fn separation(&self, m: usize) -> Complex3x3 {
        assert!(m >= 1 && m < self.n_sites, "separation {m} out of range");
        let mut out = ZERO3;
        for k in 0..self.n_sites - m {
            let p = &self.pairs[self.pair_index(k, k + m)];
            for a in 0..3 {
                for b in 0..3 {
                    out[a][b] += p[a][b];
                }
            }
        }
        out
    }
}

pub fn structure_factor<S: SpinExpectation + ?Sized>(
    state: &S,
    geometry: &ChainGeometry,
    q: &WaveVector,
) -> Result<StructureFactorMatrix> {
    geometry.check_compatible(state.n_sites())?;
    let phase = geometry.phase_per_site(q);
    let table = PairCorrelations::compute(state);
    Ok(StructureFactorMatrix { q: *q, phase_per_site: phase, entries: table.structure_factor(phase) })
}

/// Strips the imaginary part of a value that must be real, failing if the
/// residual exceeds `tol`.
pub(crate) fn real_part(z: C64, tol: f64, what: &str) -> Result<f64> {
    if z.im.abs() > tol * z.re.abs().max(1.0) {
        return Err(Error::Numerical(format!(
            "{what} should be real but has imaginary part {:.3e}",
            z.im
        )));
    }
    Ok(z.re)
}

/// Ĉ^α from a precomputed table.
pub fn c_alpha_from_table(table: &PairCorrelations, axis: PauliAxis, phase: f64) -> Result<f64> {
    let a = axis_index(axis);
    let n = table.n_sites() as f64;
    let sum = table.structure_factor(phase)[a][a] + table.structure_factor(-phase)[a][a];
    real_part(sum / (n * (n - 1.0)), HERMITIAN_TOL, "Ĉ^α")
}

/// ⟨Ĉ^α(q)⟩ = (S^{αα}(q) + S^{αα}(−q)) / (N(N−1)).
pub fn c_alpha<S: SpinExpectation + ?Sized>(
    state: &S,
    geometry: &ChainGeometry,
    axis: PauliAxis,
    q: &WaveVector,
) -> Result<f64> {
    geometry.check_compatible(state.n_sites())?;
    if axis == PauliAxis::I {
        return domain("Ĉ^α needs α ∈ {x, y, z}");
    }
    let table = PairCorrelations::compute(state);
    c_alpha_from_table(&table, axis, geometry.phase_per_site(q))
}

/// Coefficients and wave vectors of Ŵ = 1 − Σ_α c_α Ĉ^α(q^α).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WitnessSpec {
    coefficients: [f64; 3],
    wave_vectors: [WaveVector; 3],
}

impl WitnessSpec {
    pub fn new(coefficients: [f64; 3], wave_vectors: [WaveVector; 3]) -> Result<Self> {
        for (c, a) in coefficients.iter().zip(PauliAxis::XYZ) {
            if !(c.abs() <= 1.0) {
                return domain(format!("coefficient c_{} = {c} must satisfy |c| ≤ 1", a.label()));
            }
        }
        Ok(WitnessSpec { coefficients, wave_vectors })
    }

    /// c = (1, 1, −1) at q = 0: the Dicke witness.
    pub fn dicke() -> Self {
        WitnessSpec { coefficients: [1.0, 1.0, -1.0], wave_vectors: [WaveVector::ZERO; 3] }
    }

    /// Same coefficients as [`WitnessSpec::dicke`], with every q^α set to `q`.
    pub fn dicke_at(q: WaveVector) -> Self {
        WitnessSpec { coefficients: [1.0, 1.0, -1.0], wave_vectors: [q; 3] }
    }

    pub fn coefficients(&self) -> [f64; 3] {
        self.coefficients
    }

    pub fn wave_vectors(&self) -> [WaveVector; 3] {
        self.wave_vectors
    }

    /// (axis, coefficient, phase per site) for every nonzero coefficient.
    pub fn terms(&self, geometry: &ChainGeometry) -> Vec<(PauliAxis, f64, f64)> {
        PauliAxis::XYZ
            .into_iter()
            .zip(self.coefficients)
            .zip(self.wave_vectors)
            .filter(|((_, c), _)| *c != 0.0)
            .map(|((a, c), q)| (a, c, geometry.phase_per_site(&q)))
            .collect()
    }
}

pub fn witness_from_table(
    table: &PairCorrelations,
    geometry: &ChainGeometry,
    spec: &WitnessSpec,
) -> Result<f64> {
    let mut w = 1.0;
    for (axis, c, phase) in spec.terms(geometry) {
        w -= c * c_alpha_from_table(table, axis, phase)?;
    }
    Ok(w)
}

/// ⟨Ŵ⟩ for a general structural witness.
pub fn witness_general<S: SpinExpectation + ?Sized>(
    state: &S,
    geometry: &ChainGeometry,
    spec: &WitnessSpec,
) -> Result<f64> {
    geometry.check_compatible(state.n_sites())?;
    if spec.terms(geometry).is_empty() {
        return Ok(1.0);
    }
    witness_from_table(&PairCorrelations::compute(state), geometry, spec)
}

/// ⟨Ŵ_D⟩ = 1 − 2/(N(N−1)) ⟨S^{xx}(0) + S^{yy}(0) − S^{zz}(0)⟩. Negative values
/// certify entanglement.
pub fn witness_dicke<S: SpinExpectation + ?Sized>(state: &S, geometry: &ChainGeometry) -> Result<f64> {
    geometry.check_compatible(state.n_sites())?;
    let n = state.n_sites() as f64;
    let s = PairCorrelations::compute(state).structure_factor(0.0);
    let sum = s[0][0] + s[1][1] - s[2][2];
    let v = 1.0 - 2.0 / (n * (n - 1.0)) * sum;
    real_part(v, HERMITIAN_TOL, "Ŵ_D")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spin::{build_dicke, build_product, SpinState};
    use std::f64::consts::PI;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn all_up_structure_factor() {
        let s = SpinState::basis(2, 0).unwrap();
        let g = ChainGeometry::along_x(2);
        let m = structure_factor(&s, &g, &WaveVector::ZERO).unwrap();
        assert!(close(m.get(PauliAxis::Z, PauliAxis::Z).re, 1.0));
        assert!(m.get(PauliAxis::X, PauliAxis::X).norm() < 1e-15);
        assert!(m.get(PauliAxis::Y, PauliAxis::Y).norm() < 1e-15);
    }

    #[test]
    fn dicke_pair_structure_factor() {
        let s = build_dicke(2, 1).unwrap();
        let g = ChainGeometry::along_x(2);
        let m = structure_factor(&s, &g, &WaveVector::ZERO).unwrap();
        assert!(close(m.get(PauliAxis::X, PauliAxis::X).re, 1.0));
        assert!(close(m.get(PauliAxis::Y, PauliAxis::Y).re, 1.0));
        assert!(close(m.get(PauliAxis::Z, PauliAxis::Z).re, -1.0));
    }

    #[test]
    fn half_period_phase_flips_pair_sign() {
        let s = crate::spin::build_random_pure(2, 3).unwrap();
        let g = ChainGeometry::along_x(2);
        let m0 = structure_factor(&s, &g, &WaveVector::ZERO).unwrap();
        let mp = structure_factor(&s, &g, &WaveVector::along_chain(&g, PI)).unwrap();
        for a in 0..3 {
            for b in 0..3 {
                assert!((mp.entries[a][b] + m0.entries[a][b]).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn c_alpha_examples() {
        let d = build_dicke(2, 1).unwrap();
        let up = SpinState::basis(2, 0).unwrap();
        let g = ChainGeometry::along_x(2);
        let q0 = WaveVector::ZERO;
        assert!(close(c_alpha(&d, &g, PauliAxis::X, &q0).unwrap(), 1.0));
        assert!(close(c_alpha(&d, &g, PauliAxis::Z, &q0).unwrap(), -1.0));
        let q = WaveVector::along_chain(&g, 0.7);
        assert!(c_alpha(&up, &g, PauliAxis::X, &q).unwrap().abs() < 1e-15);
    }

    #[test]
    fn witness_examples() {
        let g = ChainGeometry::along_x(2);
        let d = build_dicke(2, 1).unwrap();
        let up = SpinState::basis(2, 0).unwrap();
        assert!(close(witness_dicke(&d, &g).unwrap(), -2.0));
        assert!(close(witness_dicke(&up, &g).unwrap(), 2.0));
        assert!(close(witness_general(&d, &g, &WitnessSpec::dicke()).unwrap(), -2.0));

        let zero = WitnessSpec::new([0.0; 3], [WaveVector::ZERO; 3]).unwrap();
        assert_eq!(witness_general(&d, &g, &zero).unwrap(), 1.0);

        let plus = build_product(&[(PI / 2.0, 0.0), (PI / 2.0, 0.0)]).unwrap();
        let xonly = WitnessSpec::new([1.0, 0.0, 0.0], [WaveVector::ZERO; 3]).unwrap();
        assert!(witness_general(&plus, &g, &xonly).unwrap().abs() < 1e-12);
    }

    #[test]
    fn coefficient_bound_enforced() {
        assert!(WitnessSpec::new([1.5, 0.0, 0.0], [WaveVector::ZERO; 3]).is_err());
        assert!(WitnessSpec::new([f64::NAN, 0.0, 0.0], [WaveVector::ZERO; 3]).is_err());
    }

    #[test]
    fn geometry_validation() {
        assert!(ChainGeometry::new(3, 0.0, [1.0, 0.0, 0.0]).is_err());
        assert!(ChainGeometry::new(3, 1.0, [1.0, 1.0, 0.0]).is_err());
        let g = ChainGeometry::new(3, 0.5, [0.0, 0.0, 1.0]).unwrap();
        assert_eq!(g.site_position(2), [0.0, 0.0, 1.0]);
        let s = build_dicke(2, 1).unwrap();
        assert!(witness_dicke(&s, &g).is_err());
    }

    #[test]
    fn pair_index_covers_all_pairs() {
        let s = crate::spin::build_random_pure(5, 11).unwrap();
        let t = PairCorrelations::compute(&s);
        for k in 0..5 {
            for l in 0..5 {
                if k == l {
                    continue;
                }
                let direct = s.pair_unchecked(k, PauliAxis::X, l, PauliAxis::Z);
                assert!((t.pair(k, 0, l, 2) - direct).norm() < 1e-14);
            }
        }
    }
}
