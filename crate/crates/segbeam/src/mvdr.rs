//! Complex-valued covariance bookkeeping and closed-form MVDR weights.
//!
//! The covariance convention throughout is the *unnormalized loaded sum*
//! `S = δI + Σ x xᴴ`; MVDR weights are invariant to positive scaling of `S`,
//! so this matches the `1/K`-normalized textbook form up to loading. Real
//! time-domain data embeds as complex vectors with zero imaginary parts.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Minimum allowed Hermitian norm for a steering vector.
pub const MIN_STEERING_NORM: f64 = 1e-12;

/// One observation vector: the per-bin sensor snapshot at a given frame, or a
/// stacked real tap vector with zero imaginary parts.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub values: DVector<Complex64>,
    pub time_index: usize,
}

impl Snapshot {
    /// Build a snapshot, rejecting non-finite entries.
    pub fn new(values: DVector<Complex64>, time_index: usize) -> Result<Self> {
        if !values.iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
            return Err(Error::Data(format!(
                "snapshot at index {time_index} contains non-finite entries"
            )));
        }
        Ok(Snapshot { values, time_index })
    }

    /// Real-valued convenience constructor.
    pub fn from_real(values: &[f64], time_index: usize) -> Result<Self> {
        let v = DVector::from_iterator(values.len(), values.iter().map(|&x| Complex64::new(x, 0.0)));
        Snapshot::new(v, time_index)
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// The distortionless constraint vector ν (analytic steering or RTF).
#[derive(Debug, Clone, PartialEq)]
pub struct SteeringVector {
    values: DVector<Complex64>,
    reference_index: usize,
}

impl SteeringVector {
    /// Build a general steering vector. Rejects (near-)zero vectors, for which
    /// the distortionless constraint is vacuous.
    pub fn new(values: DVector<Complex64>, reference_index: usize) -> Result<Self> {
        if reference_index >= values.len() {
            return Err(Error::Parameter(format!(
                "reference index {reference_index} out of range for dimension {}",
                values.len()
            )));
        }
        if !values.iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
            return Err(Error::Data("steering vector contains non-finite entries".into()));
        }
        if values.norm() < MIN_STEERING_NORM {
            return Err(Error::Parameter("steering vector is (near-)zero".into()));
        }
        Ok(SteeringVector { values, reference_index })
    }

    /// Build an RTF-convention steering vector: the result is normalized so
    /// the reference entry equals exactly `1 + 0i`.
    pub fn rtf(values: DVector<Complex64>, reference_index: usize) -> Result<Self> {
        let mut sv = SteeringVector::new(values, reference_index)?;
        let r = sv.values[reference_index];
        if r.norm() < MIN_STEERING_NORM {
            return Err(Error::Parameter(
                "RTF reference entry is (near-)zero; cannot normalize".into(),
            ));
        }
        sv.values /= r;
        sv.values[reference_index] = Complex64::new(1.0, 0.0);
        Ok(sv)
    }

    /// Unit vector at the reference channel; the trivial fallback constraint.
    pub fn unit(dim: usize, reference_index: usize) -> Result<Self> {
        let mut v = DVector::zeros(dim);
        if reference_index >= dim {
            return Err(Error::Parameter(format!(
                "reference index {reference_index} out of range for dimension {dim}"
            )));
        }
        v[reference_index] = Complex64::new(1.0, 0.0);
        SteeringVector::new(v, reference_index)
    }

    pub fn values(&self) -> &DVector<Complex64> {
        &self.values
    }

    pub fn reference_index(&self) -> usize {
        self.reference_index
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Round-off maintenance cadence for long-running recursive states.
///
/// `resymmetrize_every` re-enforces Hermitian symmetry of the running inverse;
/// `reinvert_every` rebuilds it from the accumulated covariance. Either can be
/// 0 to disable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Maintenance {
    pub resymmetrize_every: u32,
    pub reinvert_every: u32,
}

impl Default for Maintenance {
    fn default() -> Self {
        Maintenance {
            resymmetrize_every: 64,
            reinvert_every: 4096,
        }
    }
}

/// Recursive MVDR state for one hypothesized segment start: the running
/// inverse covariance, numerator/denominator states, current weights, and the
/// accumulated output-power cost.
#[derive(Debug, Clone)]
pub struct CovarianceState {
    s_inv: DMatrix<Complex64>,
    /// Loaded covariance sum `δI + Σ x xᴴ`, kept for periodic re-inversion.
    scm: DMatrix<Complex64>,
    /// Numerator state `S⁻¹ν`.
    u: DVector<Complex64>,
    /// Denominator state `νᴴS⁻¹ν` (real for Hermitian `S⁻¹`).
    rho: f64,
    /// Current MVDR weights `u/ρ`.
    w: DVector<Complex64>,
    /// Accumulated segment output power `Σ|y|²`.
    j_cost: f64,
    nu: DVector<Complex64>,
    start_index: usize,
    count: u64,
    maintenance: Maintenance,
}

impl CovarianceState {
    /// Initialize a fresh per-start state: `S⁻¹ = I/δ`, `u = ν/δ`,
    /// `ρ = νᴴu`, `w = u/ρ`, `J = 0`.
    pub fn init(nu: &SteeringVector, delta: f64, start_index: usize) -> Result<Self> {
        CovarianceState::init_with(nu, delta, start_index, Maintenance::default())
    }

    /// `init` with explicit maintenance cadence.
    pub fn init_with(
        nu: &SteeringVector,
        delta: f64,
        start_index: usize,
        maintenance: Maintenance,
    ) -> Result<Self> {
        if !(delta > 0.0) || !delta.is_finite() {
            return Err(Error::Parameter(format!("loading delta must be positive, got {delta}")));
        }
        let p = nu.dim();
        let nu_v = nu.values().clone();
        let s_inv = DMatrix::from_diagonal_element(p, p, Complex64::new(1.0 / delta, 0.0));
        let scm = DMatrix::from_diagonal_element(p, p, Complex64::new(delta, 0.0));
        let u = &nu_v / Complex64::new(delta, 0.0);
        let rho = nu_v.dotc(&u).re;
        let w = &u / Complex64::new(rho, 0.0);
        Ok(CovarianceState {
            s_inv,
            scm,
            u,
            rho,
            w,
            j_cost: 0.0,
            nu: nu_v,
            start_index,
            count: 0,
            maintenance,
        })
    }

    /// Fold one snapshot into the state via the Woodbury identity and return
    /// the instantaneous output `y = wᴴx` computed with the *updated* weights
    /// (a-posteriori), which is also what accrues to the segment cost.
    pub fn rank1_update(&mut self, x: &Snapshot) -> Result<Complex64> {
        let p = self.dim();
        if x.dim() != p {
            return Err(Error::Shape(format!(
                "snapshot dimension {} does not match state dimension {p}",
                x.dim()
            )));
        }
        if !x.values.iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
            return Err(Error::Data(format!(
                "snapshot at index {} contains non-finite entries",
                x.time_index
            )));
        }

        // k = S⁻¹x / (1 + xᴴS⁻¹x); xᴴS⁻¹ = (S⁻¹x)ᴴ for Hermitian S⁻¹.
        let sx = &self.s_inv * &x.values;
        let quad = x.values.dotc(&sx);
        let denom = Complex64::new(1.0, 0.0) + quad;
        if denom.re <= 0.0 || !denom.re.is_finite() {
            return Err(Error::Numerical(format!(
                "1 + xᴴS⁻¹x has non-positive real part ({})",
                denom.re
            )));
        }
        let k = &sx / denom;

        // S⁻¹ ← S⁻¹ − k (S⁻¹x)ᴴ ; u ← u − k ((S⁻¹x)ᴴ ν).
        self.s_inv.gerc(-Complex64::ONE, &k, &sx, Complex64::ONE);
        let sx_nu = sx.dotc(&self.nu);
        self.u.axpy(-sx_nu, &k, Complex64::ONE);

        // Normalizing by the complex νᴴu (whose imaginary part is round-off)
        // keeps wᴴν = 1 to machine precision regardless of conditioning:
        // uᴴν is its exact floating-point conjugate.
        let rho_c = self.nu.dotc(&self.u);
        self.rho = rho_c.re;
        if self.rho <= 0.0 || !self.rho.is_finite() {
            return Err(Error::Numerical(format!(
                "denominator state νᴴS⁻¹ν lost positivity ({})",
                self.rho
            )));
        }
        self.w = &self.u / rho_c;

        let y = self.w.dotc(&x.values);
        self.j_cost += y.norm_sqr();
        self.scm.gerc(Complex64::ONE, &x.values, &x.values, Complex64::ONE);
        self.count += 1;

        let m = self.maintenance;
        if m.reinvert_every > 0 && self.count % u64::from(m.reinvert_every) == 0 {
            self.reinvert()?;
        } else if m.resymmetrize_every > 0 && self.count % u64::from(m.resymmetrize_every) == 0 {
            self.resymmetrize();
        }
        Ok(y)
    }

    /// Re-enforce Hermitian symmetry of the running inverse and refresh the
    /// dependent states from it.
    fn resymmetrize(&mut self) {
        let adj = self.s_inv.adjoint();
        self.s_inv += adj;
        self.s_inv *= Complex64::new(0.5, 0.0);
        self.refresh_from_s_inv();
    }

    /// Rebuild the inverse from the accumulated covariance sum.
    fn reinvert(&mut self) -> Result<()> {
        let herm = (&self.scm + self.scm.adjoint()) * Complex64::new(0.5, 0.0);
        let chol = herm
            .cholesky()
            .ok_or_else(|| Error::Numerical("accumulated covariance lost positive definiteness".into()))?;
        self.s_inv = chol.inverse();
        self.refresh_from_s_inv();
        Ok(())
    }

    fn refresh_from_s_inv(&mut self) {
        self.u = &self.s_inv * &self.nu;
        let rho_c = self.nu.dotc(&self.u);
        self.rho = rho_c.re;
        self.w = &self.u / rho_c;
    }

    pub fn dim(&self) -> usize {
        self.u.len()
    }

    pub fn weights(&self) -> &DVector<Complex64> {
        &self.w
    }

    pub fn s_inv(&self) -> &DMatrix<Complex64> {
        &self.s_inv
    }

    pub fn numerator_state(&self) -> &DVector<Complex64> {
        &self.u
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn j_cost(&self) -> f64 {
        self.j_cost
    }

    pub fn start_index(&self) -> usize {
        self.start_index
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    /// `|wᴴν − 1|`: deviation from the distortionless constraint.
    pub fn constraint_error(&self) -> f64 {
        (self.w.dotc(&self.nu) - Complex64::ONE).norm()
    }

    /// Relative Frobenius asymmetry of the running inverse.
    pub fn hermitian_asymmetry(&self) -> f64 {
        let diff = &self.s_inv - self.s_inv.adjoint();
        diff.norm() / self.s_inv.norm().max(f64::MIN_POSITIVE)
    }
}

/// Direct (batch) MVDR weights for a block of snapshots:
/// `w = S⁻¹ν / (νᴴS⁻¹ν)` with `S = δI + Σ x xᴴ`.
///
/// The empty block is well-posed thanks to the loading and yields `w = ν/‖ν‖²`.
pub fn batch_mvdr_weights(
    snapshots: &[Snapshot],
    nu: &SteeringVector,
    delta: f64,
) -> Result<DVector<Complex64>> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::Parameter(format!("loading delta must be positive, got {delta}")));
    }
    let p = nu.dim();
    let scm = loaded_scm(snapshots, p, delta)?;
    mvdr_solve(&scm, nu)
}

/// Loaded covariance sum `δI + Σ x xᴴ` over a block of snapshots.
pub(crate) fn loaded_scm(snapshots: &[Snapshot], p: usize, delta: f64) -> Result<DMatrix<Complex64>> {
    let mut scm = DMatrix::from_diagonal_element(p, p, Complex64::new(delta, 0.0));
    for x in snapshots {
        if x.dim() != p {
            return Err(Error::Shape(format!(
                "snapshot at index {} has dimension {}, expected {p}",
                x.time_index,
                x.dim()
            )));
        }
        scm.gerc(Complex64::ONE, &x.values, &x.values, Complex64::ONE);
    }
    Ok(scm)
}

/// Solve `w = S⁻¹ν / (νᴴS⁻¹ν)` for a Hermitian positive-definite `S`.
pub(crate) fn mvdr_solve(scm: &DMatrix<Complex64>, nu: &SteeringVector) -> Result<DVector<Complex64>> {
    if scm.nrows() != nu.dim() {
        return Err(Error::Shape(format!(
            "covariance dimension {} does not match steering dimension {}",
            scm.nrows(),
            nu.dim()
        )));
    }
    let chol = scm
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical("loaded covariance is not positive definite".into()))?;
    let z = chol.solve(nu.values());
    let rho_c = nu.values().dotc(&z);
    if rho_c.re <= 0.0 || !rho_c.re.is_finite() {
        return Err(Error::Numerical(format!("νᴴS⁻¹ν must be positive, got {}", rho_c.re)));
    }
    Ok(z / rho_c)
}

/// Scale-relative default loading: `1e-2 · ‖x‖²/p`, floored at `1e-6`.
///
/// The reference snapshot should be the first frame carrying signal; an
/// all-zero frame degenerates to the floor.
pub fn default_delta(reference: &Snapshot) -> f64 {
    let p = reference.dim().max(1) as f64;
    (1e-2 * reference.values.norm_squared() / p).max(1e-6)
}

/// [`default_delta`] over a record: the running mean of `‖x‖²/p` across the
/// first (up to 50) frames carrying energy. A single leading frame can be
/// orders of magnitude below the operating level (onset tails, window ramps),
/// which would leave the loading uselessly small; averaging the early active
/// frames keeps the inverse well conditioned.
pub fn default_delta_over(snapshots: &[Snapshot]) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for s in snapshots {
        let e = s.values.norm_squared();
        if e > 0.0 {
            sum += e / s.dim().max(1) as f64;
            n += 1;
            if n == 50 {
                break;
            }
        }
    }
    if n == 0 {
        return 1e-6;
    }
    (1e-2 * sum / n as f64).max(1e-6)
}
