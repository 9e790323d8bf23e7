//! Array geometry, steering vectors and the multipath channel model.
//!
//! A user channel at one subcarrier is `h = A v`, where the columns of `A`
//! are the spatial signatures of the paths (gain magnitude times steering
//! vector) and `v` stacks the unit-modulus path phasors. Everything that is
//! deterministic about a path phase (gain argument, delay term, Doppler at
//! the evaluation time) is folded into the nominal phase of that path; the
//! signature only carries magnitude and direction.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::{CMatrix, CVector, Error, Result, C64};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Tolerance used when validating a user-supplied phase correlation matrix.
pub const CORRELATION_TOL: f64 = 1e-8;

/// Element positions of the base-station array, in meters.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayGeometry {
    element_positions: Vec<[f64; 3]>,
    reference_wavelength: f64,
}

impl ArrayGeometry {
    pub fn new(element_positions: Vec<[f64; 3]>, reference_wavelength: f64) -> Result<Self> {
        if element_positions.is_empty() {
            return Err(Error::invalid("array needs at least one element"));
        }
        if !(reference_wavelength.is_finite() && reference_wavelength > 0.0) {
            return Err(Error::invalid("reference wavelength must be positive and finite"));
        }
        if element_positions.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::invalid("element positions must be finite"));
        }
        for (i, p) in element_positions.iter().enumerate() {
            if element_positions[..i].iter().any(|q| q == p) {
                return Err(Error::invalid(format!("element {i} duplicates an earlier position")));
            }
        }
        Ok(Self {
            element_positions,
            reference_wavelength,
        })
    }

    /// Planar `n_horizontal x n_vertical` grid in the y-z plane, centered on
    /// the origin, so that broadside is the +x axis.
    ///
    /// Elements are ordered column by column: the vertical index runs fastest.
    pub fn uniform_rectangular(
        n_horizontal: usize,
        n_vertical: usize,
        spacing_in_wavelengths: f64,
        reference_wavelength: f64,
    ) -> Result<Self> {
        if n_horizontal == 0 || n_vertical == 0 {
            return Err(Error::invalid("rectangular array dimensions must be >= 1"));
        }
        if !(spacing_in_wavelengths.is_finite() && spacing_in_wavelengths > 0.0) {
            return Err(Error::invalid("element spacing must be positive"));
        }
        let d = spacing_in_wavelengths * reference_wavelength;
        let cy = (n_horizontal as f64 - 1.0) / 2.0;
        let cz = (n_vertical as f64 - 1.0) / 2.0;
        let mut positions = Vec::with_capacity(n_horizontal * n_vertical);
        for ih in 0..n_horizontal {
            for iv in 0..n_vertical {
                positions.push([0.0, (ih as f64 - cy) * d, (iv as f64 - cz) * d]);
            }
        }
        Self::new(positions, reference_wavelength)
    }

    /// Half-wavelength spaced rectangular array.
    pub fn half_wavelength_rectangular(
        n_horizontal: usize,
        n_vertical: usize,
        reference_wavelength: f64,
    ) -> Result<Self> {
        Self::uniform_rectangular(n_horizontal, n_vertical, 0.5, reference_wavelength)
    }

    pub fn num_elements(&self) -> usize {
        self.element_positions.len()
    }

    pub fn element_positions(&self) -> &[[f64; 3]] {
        &self.element_positions
    }

    pub fn reference_wavelength(&self) -> f64 {
        self.reference_wavelength
    }
}

/// Unit propagation-direction vector `(cos el cos az, cos el sin az, sin el)`.
pub fn direction_vector(azimuth: f64, elevation: f64) -> [f64; 3] {
    let (sa, ca) = azimuth.sin_cos();
    let (se, ce) = elevation.sin_cos();
    [ce * ca, ce * sa, se]
}

/// Far-field narrowband response of isotropic elements:
/// entry `n` is `exp(-j 2 pi (f / c) <u, p_n>)`.
pub fn steering_vector(
    geometry: &ArrayGeometry,
    azimuth: f64,
    elevation: f64,
    frequency: f64,
) -> Result<CVector> {
    if !(azimuth.is_finite() && elevation.is_finite()) {
        return Err(Error::invalid("steering angles must be finite"));
    }
    if !(frequency.is_finite() && frequency > 0.0) {
        return Err(Error::invalid("frequency must be positive and finite"));
    }
    let u = direction_vector(azimuth, elevation);
    let k = 2.0 * PI * frequency / SPEED_OF_LIGHT;
    Ok(DVector::from_iterator(
        geometry.num_elements(),
        geometry.element_positions.iter().map(|p| {
            let proj = u[0] * p[0] + u[1] * p[1] + u[2] * p[2];
            C64::from_polar(1.0, -k * proj)
        }),
    ))
}

/// One propagation path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathComponent {
    /// `|alpha|`, linear amplitude.
    pub gain_magnitude: f64,
    /// Seconds.
    pub delay: f64,
    /// Hz.
    #[serde(default)]
    pub doppler: f64,
    /// Radians.
    pub azimuth: f64,
    /// Radians.
    pub elevation: f64,
    /// Radians; the argument of the complex path gain.
    #[serde(default)]
    pub nominal_phase: f64,
    /// Standard deviation of the phase uncertainty, radians.
    #[serde(default)]
    pub phase_spread: f64,
}

impl PathComponent {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.gain_magnitude,
            self.delay,
            self.doppler,
            self.azimuth,
            self.elevation,
            self.nominal_phase,
            self.phase_spread,
        ]
        .iter()
        .all(|x| x.is_finite());
        if !finite {
            return Err(Error::invalid("path parameters must be finite"));
        }
        if self.gain_magnitude < 0.0 {
            return Err(Error::invalid("path gain magnitude must be >= 0"));
        }
        if self.phase_spread < 0.0 {
            return Err(Error::invalid("phase spread must be >= 0"));
        }
        Ok(())
    }

    /// Mean path phase at `frequency` and evaluation time `time`:
    /// `arg(alpha) - 2 pi f tau + 2 pi t nu`.
    pub fn phase_at(&self, frequency: f64, time: f64) -> f64 {
        self.nominal_phase - 2.0 * PI * frequency * self.delay + 2.0 * PI * time * self.doppler
    }
}

/// Per-path spatial signatures of one user, stored as the columns of an
/// `N x L` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SignatureSet {
    signatures: CMatrix,
    carrier_frequency: f64,
}

impl SignatureSet {
    pub fn new(signatures: CMatrix, carrier_frequency: f64) -> Result<Self> {
        if signatures.ncols() == 0 || signatures.nrows() == 0 {
            return Err(Error::invalid("signature set needs at least one path and one antenna"));
        }
        if signatures.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::invalid("signatures must be finite"));
        }
        if let Some(l) = signatures.column_iter().position(|c| c.norm() <= 0.0) {
            return Err(Error::invalid(format!("signature column {l} has zero norm")));
        }
        Ok(Self {
            signatures,
            carrier_frequency,
        })
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.signatures
    }

    pub fn num_antennas(&self) -> usize {
        self.signatures.nrows()
    }

    pub fn num_paths(&self) -> usize {
        self.signatures.ncols()
    }

    pub fn carrier_frequency(&self) -> f64 {
        self.carrier_frequency
    }

    /// `A R A^H`, the channel covariance under phase correlation `R`.
    pub fn covariance(&self, r: &CMatrix) -> Result<CMatrix> {
        if r.nrows() != self.num_paths() || r.ncols() != self.num_paths() {
            return Err(Error::invalid(format!(
                "phase correlation is {}x{}, expected {}x{}",
                r.nrows(),
                r.ncols(),
                self.num_paths(),
                self.num_paths()
            )));
        }
        Ok(&self.signatures * r * self.signatures.adjoint())
    }
}

/// Column `l` is `|alpha_l| a(az_l, el_l, f)`. Path phases are not part of
/// the signature; see [`folded_phases`].
pub fn synthesize_signatures(
    paths: &[PathComponent],
    geometry: &ArrayGeometry,
    frequency: f64,
) -> Result<SignatureSet> {
    if paths.is_empty() {
        return Err(Error::invalid("at least one path is required"));
    }
    let mut a = CMatrix::zeros(geometry.num_elements(), paths.len());
    for (l, p) in paths.iter().enumerate() {
        p.validate()?;
        if p.gain_magnitude == 0.0 {
            return Err(Error::invalid(format!("path {l} has zero gain")));
        }
        let s = steering_vector(geometry, p.azimuth, p.elevation, frequency)?;
        a.set_column(l, &(s * C64::from(p.gain_magnitude)));
    }
    SignatureSet::new(a, frequency)
}

/// Mean phase of every path at `frequency` and `time`.
pub fn folded_phases(paths: &[PathComponent], frequency: f64, time: f64) -> Vec<f64> {
    paths.iter().map(|p| p.phase_at(frequency, time)).collect()
}

/// Statistics of the phase vector `v`.
#[derive(Debug, Clone, PartialEq)]
pub enum PhaseModel {
    /// Independent phases uniform on `[0, 2 pi)`.
    IidUniform,
    /// Phases known exactly.
    Known(Vec<f64>),
    /// Independent Gaussian phase errors around known means.
    WrappedGaussian { means: Vec<f64>, spreads: Vec<f64> },
    /// A correlation matrix given directly; no sampling distribution.
    ExplicitR(CMatrix),
}

impl PhaseModel {
    /// Phase dimension the model is tied to, if any.
    pub fn dimension(&self) -> Option<usize> {
        match self {
            PhaseModel::IidUniform => None,
            PhaseModel::Known(p) => Some(p.len()),
            PhaseModel::WrappedGaussian { means, .. } => Some(means.len()),
            PhaseModel::ExplicitR(r) => Some(r.nrows()),
        }
    }

    pub fn supports_sampling(&self) -> bool {
        !matches!(self, PhaseModel::ExplicitR(_))
    }

    fn check_dim(&self, l: usize) -> Result<()> {
        if let PhaseModel::WrappedGaussian { means, spreads } = self {
            if means.len() != spreads.len() {
                return Err(Error::invalid("wrapped-gaussian means and spreads differ in length"));
            }
            if spreads.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
                return Err(Error::invalid("phase spreads must be finite and >= 0"));
            }
        }
        match self.dimension() {
            Some(d) if d != l => Err(Error::invalid(format!(
                "phase model has dimension {d}, expected {l}"
            ))),
            _ if l == 0 => Err(Error::invalid("phase dimension must be >= 1")),
            _ => Ok(()),
        }
    }

    /// `R = E[v v^H]` for `l` paths.
    pub fn correlation(&self, l: usize) -> Result<CMatrix> {
        self.check_dim(l)?;
        match self {
            PhaseModel::IidUniform => Ok(CMatrix::identity(l, l)),
            PhaseModel::Known(mu) => {
                let v0 = unit_phasors(mu);
                Ok(&v0 * v0.adjoint())
            }
            PhaseModel::WrappedGaussian { means, spreads } => Ok(DMatrix::from_fn(l, l, |i, j| {
                if i == j {
                    C64::new(1.0, 0.0)
                } else {
                    let damp = (-(spreads[i].powi(2) + spreads[j].powi(2)) / 2.0).exp();
                    C64::from_polar(damp, means[i] - means[j])
                }
            })),
            PhaseModel::ExplicitR(r) => {
                validate_correlation(r)?;
                Ok(r.clone())
            }
        }
    }

    /// One phase vector. `ExplicitR` has no canonical joint distribution.
    pub fn sample<R: Rng + ?Sized>(&self, l: usize, rng: &mut R) -> Result<CVector> {
        self.check_dim(l)?;
        match self {
            PhaseModel::IidUniform => Ok(DVector::from_fn(l, |_, _| {
                C64::from_polar(1.0, rng.random_range(0.0..2.0 * PI))
            })),
            PhaseModel::Known(mu) => Ok(unit_phasors(mu)),
            PhaseModel::WrappedGaussian { means, spreads } => {
                Ok(DVector::from_fn(l, |i, _| {
                    let z: f64 = rng.sample(StandardNormal);
                    C64::from_polar(1.0, means[i] + spreads[i] * z)
                }))
            }
            PhaseModel::ExplicitR(_) => Err(Error::UnsupportedSampling(
                "an explicit correlation matrix does not define a phase distribution".into(),
            )),
        }
    }
}

/// `R` for a model and path count.
pub fn phase_correlation(model: &PhaseModel, l: usize) -> Result<CMatrix> {
    model.correlation(l)
}

/// Draws one phase vector from `model`.
pub fn draw_phase_vector<R: Rng + ?Sized>(model: &PhaseModel, l: usize, rng: &mut R) -> Result<CVector> {
    model.sample(l, rng)
}

fn unit_phasors(phases: &[f64]) -> CVector {
    DVector::from_iterator(phases.len(), phases.iter().map(|&p| C64::from_polar(1.0, p)))
}

/// Hermitian, unit diagonal and PSD, each within [`CORRELATION_TOL`].
pub fn validate_correlation(r: &CMatrix) -> Result<()> {
    if !r.is_square() || r.nrows() == 0 {
        return Err(Error::invalid("correlation matrix must be square and non-empty"));
    }
    let n = r.nrows();
    for i in 0..n {
        if (r[(i, i)] - C64::new(1.0, 0.0)).norm() > CORRELATION_TOL {
            return Err(Error::invalid(format!("correlation diagonal entry {i} is not 1")));
        }
        for j in 0..i {
            if (r[(i, j)] - r[(j, i)].conj()).norm() > CORRELATION_TOL {
                return Err(Error::invalid("correlation matrix is not Hermitian"));
            }
        }
    }
    let sym = (r + r.adjoint()) * C64::from(0.5);
    let min_eig = sym
        .symmetric_eigenvalues()
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    if min_eig < -CORRELATION_TOL {
        return Err(Error::invalid(format!(
            "correlation matrix is not PSD (min eigenvalue {min_eig:e})"
        )));
    }
    Ok(())
}

/// Instantaneous channel `h = A v`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub h: CVector,
    pub v: CVector,
}

pub fn realize_channel(signatures: &SignatureSet, v: &CVector) -> Result<ChannelRealization> {
    if v.len() != signatures.num_paths() {
        return Err(Error::invalid(format!(
            "phase vector has length {}, signature set has {} paths",
            v.len(),
            signatures.num_paths()
        )));
    }
    Ok(ChannelRealization {
        h: signatures.matrix() * v,
        v: v.clone(),
    })
}
