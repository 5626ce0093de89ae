//! First and second moments of Gaussian states and effects.
//!
//! Covariances use the convention `Γ_jj = 2·Var(y_j)`, so the oscillator
//! ground state has `Γ = I`. Every operation returns a new state whose
//! covariance has been explicitly re-symmetrized.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::layout::{Quadrature, Sector, VariableEntry, VariableLayout};

/// Measured-block condition number above which conditioning is refused.
pub const MAX_CONDITION: f64 = 1e12;
/// Smallest admissible variance of a measured quadrature.
pub const MIN_MEASURED_VARIANCE: f64 = 1e-12;

/// How the inverse of the measured block is realized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PseudoInverse {
    /// Invert the measured `k×k` block and zero-pad (exact for coordinate projectors).
    #[default]
    Exact,
    /// Replace the inverse by the projector itself, valid to lowest order in `dt`.
    LowestOrder,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianState {
    layout: VariableLayout,
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

#[inline]
pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let s = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = s;
            m[(j, i)] = s;
        }
    }
}

fn sub_matrix(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Inverse of a symmetric positive-definite matrix, or `None` when Cholesky fails.
fn spd_inverse(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    m.clone().cholesky().map(|c| c.inverse())
}

/// Conditions the joint moments on `outcomes` at `measured` and keeps `keep`.
///
/// `label` names an index for error reporting.
pub(crate) fn condition_raw(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    keep: &[usize],
    measured: &[usize],
    outcomes: &[f64],
    mode: PseudoInverse,
    label: impl Fn(usize) -> String,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let a = sub_matrix(cov, keep, keep);
    let a_mean = DVector::from_iterator(keep.len(), keep.iter().map(|&i| mean[i]));
    if measured.is_empty() {
        return Ok((a_mean, a));
    }
    let b = sub_matrix(cov, measured, measured);
    let c = sub_matrix(cov, keep, measured);
    let binv = match mode {
        PseudoInverse::Exact => {
            for (i, &m) in measured.iter().enumerate() {
                if 0.5 * b[(i, i)] < MIN_MEASURED_VARIANCE {
                    return Err(Error::DegenerateMeasurement(label(m)));
                }
            }
            let eig = SymmetricEigen::new(b.clone()).eigenvalues;
            let (lo, hi) = (eig.min(), eig.max());
            if !(lo > 0.0) || hi / lo > MAX_CONDITION {
                return Err(Error::Singular(format!("measured block has condition {:.3e}", hi / lo)));
            }
            spd_inverse(&b).ok_or_else(|| Error::Singular("measured block not positive definite".into()))?
        }
        PseudoInverse::LowestOrder => DMatrix::identity(b.nrows(), b.ncols()),
    };
    let delta = DVector::from_iterator(measured.len(), measured.iter().zip(outcomes).map(|(&i, &q)| q - mean[i]));
    let gain = &c * &binv;
    let new_mean = a_mean + &gain * delta;
    let mut new_cov = a - &gain * c.transpose();
    symmetrize(&mut new_cov);
    Ok((new_mean, new_cov))
}

/// Precision-form product of two Gaussians; falls back to the covariance form
/// `Γ = Γa(Γa+Γb)⁻¹Γb` when one side is singular.
pub(crate) fn product_raw(
    ma: &DVector<f64>,
    ca: &DMatrix<f64>,
    mb: &DVector<f64>,
    cb: &DMatrix<f64>,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let (mean, mut cov) = match (spd_inverse(ca), spd_inverse(cb)) {
        (Some(pa), Some(pb)) => {
            let p = &pa + &pb;
            let cov = spd_inverse(&p).ok_or_else(|| Error::Singular("summed precision".into()))?;
            let mean = &cov * (pa * ma + pb * mb);
            (mean, cov)
        }
        _ => {
            let sum = ca + cb;
            let sinv = sum
                .lu()
                .try_inverse()
                .ok_or_else(|| Error::Singular("both covariances singular in a shared direction".into()))?;
            let cov = ca * &sinv * cb;
            let mean = cb * &sinv * ma + ca * &sinv * mb;
            (mean, cov)
        }
    };
    symmetrize(&mut cov);
    Ok((mean, cov))
}

impl GaussianState {
    /// Builds a state after checking dimensions and (approximate) symmetry.
    pub fn new(layout: VariableLayout, mean: DVector<f64>, mut cov: DMatrix<f64>) -> Result<Self> {
        let n = layout.len();
        if mean.len() != n || cov.nrows() != n || cov.ncols() != n {
            return Err(Error::Dimension(format!(
                "layout has {n} entries, mean {}, cov {}x{}",
                mean.len(),
                cov.nrows(),
                cov.ncols()
            )));
        }
        let scale = cov.amax().max(1.0);
        if max_asymmetry(&cov) > 1e-9 * scale {
            return Err(Error::NotSymmetric("covariance".into()));
        }
        symmetrize(&mut cov);
        Ok(Self { layout, mean, cov })
    }

    pub(crate) fn from_parts_unchecked(layout: VariableLayout, mean: DVector<f64>, cov: DMatrix<f64>) -> Self {
        debug_assert_eq!(layout.len(), mean.len());
        Self { layout, mean, cov }
    }

    /// Ground state of every quantum/probe mode with independent classical priors.
    pub fn ground_state(layout: VariableLayout, classical_prior_vars: &BTreeMap<String, f64>) -> Result<Self> {
        let n = layout.len();
        let mut cov = DMatrix::identity(n, n);
        for (i, e) in layout.entries().iter().enumerate() {
            if e.sector == Sector::Classical {
                let v = *classical_prior_vars.get(&e.label).ok_or_else(|| Error::MissingPrior(e.label.clone()))?;
                if !(v > 0.0) || !v.is_finite() {
                    return Err(Error::NonPositivePrior { label: e.label.clone(), value: v });
                }
                cov[(i, i)] = 2.0 * v;
            }
        }
        Ok(Self { layout, mean: DVector::zeros(n), cov })
    }

    /// Zero-mean state with `Var = var` on every entry (the "uniform" effect initializer).
    pub fn uniform(layout: VariableLayout, var: f64) -> Result<Self> {
        if !(var > 0.0) {
            return Err(Error::InvalidArgument(format!("uniform variance must be positive, got {var}")));
        }
        let n = layout.len();
        Ok(Self { layout, mean: DVector::zeros(n), cov: DMatrix::identity(n, n) * (2.0 * var) })
    }

    pub fn layout(&self) -> &VariableLayout {
        &self.layout
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    /// Covariance in the `Γ = 2·Var` convention.
    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn dim(&self) -> usize {
        self.layout.len()
    }

    pub fn into_parts(self) -> (VariableLayout, DVector<f64>, DMatrix<f64>) {
        (self.layout, self.mean, self.cov)
    }

    pub fn mean_of(&self, label: &str) -> Result<f64> {
        Ok(self.mean[self.layout.index_of(label)?])
    }

    /// Physical variance `Γ_ll / 2`.
    pub fn variance_of(&self, label: &str) -> Result<f64> {
        let i = self.layout.index_of(label)?;
        Ok(0.5 * self.cov[(i, i)])
    }

    /// Physical covariance `Γ_ab / 2`.
    pub fn covariance_of(&self, a: &str, b: &str) -> Result<f64> {
        let i = self.layout.index_of(a)?;
        let j = self.layout.index_of(b)?;
        Ok(0.5 * self.cov[(i, j)])
    }

    /// `mean' = D·S·mean + F`, `cov' = D·S·cov·Sᵀ·Dᵀ + L`.
    pub fn affine_update(
        &self,
        s: &DMatrix<f64>,
        f: &DVector<f64>,
        d: &DMatrix<f64>,
        l: &DMatrix<f64>,
    ) -> Result<Self> {
        let n = self.dim();
        for (name, m) in [("S", s), ("D", d), ("L", l)] {
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::Dimension(format!("{name} is {}x{}, state has {n}", m.nrows(), m.ncols())));
            }
        }
        if f.len() != n {
            return Err(Error::Dimension(format!("F has length {}, state has {n}", f.len())));
        }
        if max_asymmetry(l) != 0.0 {
            return Err(Error::NotSymmetric("L".into()));
        }
        for i in 0..n {
            for j in 0..n {
                if i != j && d[(i, j)] != 0.0 {
                    return Err(Error::InvalidArgument("D must be diagonal".into()));
                }
            }
        }
        let ds = d * s;
        Ok(self.propagate(&ds, Some(f), l))
    }

    /// Affine step with a pre-multiplied transition `M = D·S`.
    pub(crate) fn propagate(&self, m: &DMatrix<f64>, f: Option<&DVector<f64>>, l: &DMatrix<f64>) -> Self {
        let mut mean = m * &self.mean;
        if let Some(f) = f {
            mean += f;
        }
        let mut cov = m * &self.cov * m.transpose() + l;
        symmetrize(&mut cov);
        Self { layout: self.layout.clone(), mean, cov }
    }

    /// Appends independent vacuum modes (`b = 0`, `B = I`, `C = 0`).
    pub fn attach_vacuum(&self, segment: &VariableLayout) -> Result<Self> {
        let layout = self.layout.concat(segment)?;
        let n = self.dim();
        let k = segment.len();
        let mut mean = DVector::zeros(n + k);
        mean.rows_mut(0, n).copy_from(&self.mean);
        let mut cov = DMatrix::zeros(n + k, n + k);
        cov.view_mut((0, 0), (n, n)).copy_from(&self.cov);
        for i in n..n + k {
            cov[(i, i)] = 1.0;
        }
        Ok(Self { layout, mean, cov })
    }

    /// Projective homodyne measurement of some probe quadratures followed by
    /// removal of the whole probe partition.
    pub fn condition_on_quadratures(&self, probe_labels: &[&str], measured: &[(&str, f64)]) -> Result<Self> {
        self.condition_on_quadratures_with(probe_labels, measured, PseudoInverse::Exact)
    }

    pub fn condition_on_quadratures_with(
        &self,
        probe_labels: &[&str],
        measured: &[(&str, f64)],
        mode: PseudoInverse,
    ) -> Result<Self> {
        let probe = self.layout.indices_of(probe_labels.iter().copied())?;
        let mut idx = Vec::with_capacity(measured.len());
        let mut outcomes = Vec::with_capacity(measured.len());
        for (label, q) in measured {
            if !probe_labels.contains(label) {
                return Err(Error::InvalidArgument(format!("measured label {label} is not in the probe set")));
            }
            idx.push(self.layout.index_of(label)?);
            outcomes.push(*q);
        }
        self.condition_indices(&probe, &idx, &outcomes, mode)
    }

    /// Index-based conditioning; `measured ⊆ probe`, `outcomes[i]` belongs to `measured[i]`.
    pub fn condition_indices(
        &self,
        probe: &[usize],
        measured: &[usize],
        outcomes: &[f64],
        mode: PseudoInverse,
    ) -> Result<Self> {
        if measured.len() != outcomes.len() {
            return Err(Error::Dimension(format!("{} measured quadratures, {} outcomes", measured.len(), outcomes.len())));
        }
        if let Some(m) = measured.iter().find(|m| !probe.contains(m)) {
            return Err(Error::InvalidArgument(format!("measured index {m} is not in the probe set")));
        }
        let keep: Vec<usize> = (0..self.dim()).filter(|i| !probe.contains(i)).collect();
        let layout = self.layout.select(&keep)?;
        let (mean, cov) = condition_raw(&self.mean, &self.cov, &keep, measured, outcomes, mode, |i| {
            self.layout.entry(i).label.clone()
        })?;
        Ok(Self { layout, mean, cov })
    }

    /// Keeps only the labelled entries (in layout order).
    pub fn partial_trace(&self, keep: &[&str]) -> Result<Self> {
        let mut idx = self.layout.indices_of(keep.iter().copied())?;
        idx.sort_unstable();
        idx.dedup();
        self.select(&idx)
    }

    pub(crate) fn select(&self, idx: &[usize]) -> Result<Self> {
        let layout = self.layout.select(idx)?;
        let mean = DVector::from_iterator(idx.len(), idx.iter().map(|&i| self.mean[i]));
        let cov = sub_matrix(&self.cov, idx, idx);
        Ok(Self { layout, mean, cov })
    }

    /// Normalized product of two Gaussians over the same layout, formed in
    /// precision space so that near-uniform directions contribute ~0.
    pub fn gaussian_product(&self, other: &Self) -> Result<Self> {
        if self.layout != other.layout {
            return Err(Error::LayoutMismatch);
        }
        let (mean, cov) = product_raw(&self.mean, &self.cov, &other.mean, &other.cov)?;
        Ok(Self { layout: self.layout.clone(), mean, cov })
    }

    /// Basis change to `(x₋, p₊, x₊, p₋)` for a state over exactly `(x₁, p₁, x₂, p₂)`.
    pub fn epr_transform(&self) -> Result<Self> {
        let e = self.layout.entries();
        let ok = e.len() == 4
            && e.iter().all(|v| v.sector == Sector::Quantum)
            && e[0].quadrature == Quadrature::Position
            && e[1].quadrature == Quadrature::Momentum
            && e[2].quadrature == Quadrature::Position
            && e[3].quadrature == Quadrature::Momentum
            && e[0].mode_id == e[1].mode_id
            && e[2].mode_id == e[3].mode_id;
        if !ok {
            return Err(Error::InvalidLayout("EPR transform needs a (x1, p1, x2, p2) layout".into()));
        }
        let r = epr_matrix();
        let mut cov = &r * &self.cov * r.transpose();
        symmetrize(&mut cov);
        let layout = VariableLayout::new(vec![
            VariableEntry::quantum(EPR_LABELS[0], Quadrature::Position, 1),
            VariableEntry::quantum(EPR_LABELS[1], Quadrature::Momentum, 2),
            VariableEntry::quantum(EPR_LABELS[2], Quadrature::Position, 2),
            VariableEntry::quantum(EPR_LABELS[3], Quadrature::Momentum, 1),
        ])?;
        Ok(Self { layout, mean: &r * &self.mean, cov })
    }

    /// `Γ_xx·Γ_pp − Γ_xp²` for every quantum mode, keyed by mode id.
    pub fn heisenberg_products(&self) -> Vec<(u32, f64)> {
        self.layout
            .quantum_modes()
            .into_iter()
            .map(|m| {
                let (x, p) = (m.position, m.momentum);
                (m.mode_id, self.cov[(x, x)] * self.cov[(p, p)] - self.cov[(x, p)] * self.cov[(p, x)])
            })
            .collect()
    }

    /// Checks exact symmetry, PSD within `1e-9·max(1, λ_max)` and the
    /// uncertainty floor `≥ 1 − heisenberg_eps` of every quantum mode.
    pub fn check_invariants(&self, heisenberg_eps: f64) -> std::result::Result<(), String> {
        check_covariance(&self.cov)?;
        for (mode, det) in self.heisenberg_products() {
            if det < 1.0 - heisenberg_eps {
                return Err(format!("mode {mode} violates the uncertainty floor: {det}"));
            }
        }
        Ok(())
    }
}

/// Labels of the EPR basis, in output order.
pub const EPR_LABELS: [&str; 4] = ["x_minus", "p_plus", "x_plus", "p_minus"];

pub fn epr_matrix() -> DMatrix<f64> {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    DMatrix::from_row_slice(
        4,
        4,
        &[h, 0.0, -h, 0.0, 0.0, h, 0.0, h, h, 0.0, h, 0.0, 0.0, h, 0.0, -h],
    )
}

/// Exact symmetry and PSD (smallest eigenvalue ≥ −1e-9·max(1, largest)).
pub fn check_covariance(cov: &DMatrix<f64>) -> std::result::Result<(), String> {
    let asym = max_asymmetry(cov);
    if asym != 0.0 {
        return Err(format!("covariance asymmetric by {asym:e}"));
    }
    if cov.iter().any(|v| !v.is_finite()) {
        return Err("covariance has non-finite entries".into());
    }
    let eig = SymmetricEigen::new(cov.clone()).eigenvalues;
    let (lo, hi) = (eig.min(), eig.max());
    if lo < -1e-9 * hi.max(1.0) {
        return Err(format!("covariance not PSD: λmin = {lo:e}, λmax = {hi:e}"));
    }
    Ok(())
}
