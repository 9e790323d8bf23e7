//! Scenario configuration and the synthetic multipath generator.
//!
//! The generator produces two qualitative regimes: `nlos` users with many
//! comparable scattered paths and `los` users with one dominant direct path.
//! It does not reproduce any standardized channel model.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::array_channel::{
    folded_phases, synthesize_signatures, ArrayGeometry, PathComponent, PhaseModel, SPEED_OF_LIGHT,
};
use crate::mu::{MultiUserScenario, UserChannel};
use crate::su::WorstCaseOptions;
use crate::{CVector, Error, Result, C64};

/// Power ratio between the last and the first scattered path, in dB.
pub const NLOS_PROFILE_SPAN_DB: f64 = -20.0;
/// Elevation range of scattered paths, radians (symmetric around 0).
pub const NLOS_ELEVATION_SPREAD: f64 = PI / 4.0;

/// Fixed number of paths, or a uniform draw from an inclusive range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PathCount {
    Fixed(usize),
    Range { min: usize, max: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LosMode {
    Los,
    Nlos,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArrayConfig {
    pub n_horizontal: usize,
    pub n_vertical: usize,
    pub spacing_in_wavelengths: f64,
}

impl Default for ArrayConfig {
    fn default() -> Self {
        Self {
            n_horizontal: 16,
            n_vertical: 8,
            spacing_in_wavelengths: 0.5,
        }
    }
}

/// What the base station knows about the path phases.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PhaseModelConfig {
    /// No phase knowledge (`R = I`).
    IidUniform,
    /// Exact phases (`R` all-ones up to the phase rotation).
    Known,
    /// Gaussian phase error of the given standard deviation (radians).
    WrappedGaussian { spread: f64 },
}

/// Hand-specified user, bypassing the random generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplicitUser {
    pub paths: Vec<PathComponent>,
    #[serde(default)]
    pub position: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub num_users: usize,
    pub paths_per_user: PathCount,
    /// Meters.
    pub cell_radius: f64,
    /// Meters above the users.
    pub bs_height: f64,
    pub array: ArrayConfig,
    /// Hz.
    pub carrier_frequency: f64,
    /// Hz.
    pub bandwidth: f64,
    pub num_subcarriers: usize,
    pub los_mode: LosMode,
    /// Direct-to-scattered power ratio of `los` users, dB.
    pub rician_factor_db: f64,
    /// `p_k / sigma^2` for every user, dB.
    pub snr_db: f64,
    pub phase_model: PhaseModelConfig,
    /// Path delays are uniform in `[0, max_delay]` seconds.
    pub max_delay: f64,
    /// Seconds; Doppler only matters when non-zero.
    pub evaluation_time: f64,
    pub rank_tolerance: f64,
    /// User pool size of CDF studies.
    pub num_locations: usize,
    /// Random user groups drawn from the pool in multi-user CDF studies.
    pub num_selections: usize,
    /// Re-design non-coherent beamformers at every frequency point instead
    /// of once at the carrier.
    pub recompute_per_frequency: bool,
    pub worst_case: WorstCaseOptions,
    pub users: Option<Vec<ExplicitUser>>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            num_users: 5,
            paths_per_user: PathCount::Fixed(10),
            cell_radius: 200.0,
            bs_height: 20.0,
            array: ArrayConfig::default(),
            carrier_frequency: 3.5e9,
            bandwidth: 10e6,
            num_subcarriers: 51,
            los_mode: LosMode::Nlos,
            rician_factor_db: 10.0,
            snr_db: 10.0,
            phase_model: PhaseModelConfig::IidUniform,
            max_delay: 1e-6,
            evaluation_time: 0.0,
            rank_tolerance: crate::spectral::DEFAULT_RANK_TOL,
            num_locations: 100,
            num_selections: 100,
            recompute_per_frequency: false,
            worst_case: WorstCaseOptions::default(),
            users: None,
        }
    }
}

fn positive(name: &str, x: f64) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} must be positive and finite")))
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_users == 0 {
            return Err(Error::invalid("num_users must be >= 1"));
        }
        match self.paths_per_user {
            PathCount::Fixed(0) => return Err(Error::invalid("paths_per_user must be >= 1")),
            PathCount::Range { min, max } if min == 0 || max < min => {
                return Err(Error::invalid("paths_per_user range must satisfy 1 <= min <= max"))
            }
            _ => {}
        }
        positive("cell_radius", self.cell_radius)?;
        positive("carrier_frequency", self.carrier_frequency)?;
        positive("bandwidth", self.bandwidth)?;
        positive("array.spacing_in_wavelengths", self.array.spacing_in_wavelengths)?;
        positive("rank_tolerance", self.rank_tolerance)?;
        if self.bandwidth >= 2.0 * self.carrier_frequency {
            return Err(Error::invalid("bandwidth must be below twice the carrier frequency"));
        }
        if self.array.n_horizontal == 0 || self.array.n_vertical == 0 {
            return Err(Error::invalid("array dimensions must be >= 1"));
        }
        if self.num_subcarriers == 0 {
            return Err(Error::invalid("num_subcarriers must be >= 1"));
        }
        if !(self.bs_height.is_finite() && self.bs_height >= 0.0) {
            return Err(Error::invalid("bs_height must be finite and >= 0"));
        }
        if !(self.max_delay.is_finite() && self.max_delay >= 0.0) {
            return Err(Error::invalid("max_delay must be finite and >= 0"));
        }
        for (name, x) in [
            ("rician_factor_db", self.rician_factor_db),
            ("snr_db", self.snr_db),
            ("evaluation_time", self.evaluation_time),
        ] {
            if !x.is_finite() {
                return Err(Error::invalid(format!("{name} must be finite")));
            }
        }
        if let PhaseModelConfig::WrappedGaussian { spread } = self.phase_model {
            if !(spread.is_finite() && spread >= 0.0) {
                return Err(Error::invalid("phase spread must be finite and >= 0"));
            }
        }
        if self.num_locations == 0 || self.num_selections == 0 {
            return Err(Error::invalid("num_locations and num_selections must be >= 1"));
        }
        if let Some(users) = &self.users {
            if users.len() != self.num_users {
                return Err(Error::invalid(format!(
                    "{} explicit users given but num_users is {}",
                    users.len(),
                    self.num_users
                )));
            }
            for u in users {
                if u.paths.is_empty() {
                    return Err(Error::invalid("explicit users need at least one path"));
                }
                for p in &u.paths {
                    p.validate()?;
                }
            }
        }
        Ok(())
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_frequency
    }

    pub fn geometry(&self) -> Result<ArrayGeometry> {
        ArrayGeometry::uniform_rectangular(
            self.array.n_horizontal,
            self.array.n_vertical,
            self.array.spacing_in_wavelengths,
            self.wavelength(),
        )
    }

    /// `sigma^2` with unit symbol power.
    pub fn noise_variance(&self) -> f64 {
        10f64.powf(-self.snr_db / 10.0)
    }

    /// `n` evenly spaced points covering `[f_c - B/2, f_c + B/2]`; a single
    /// point is the carrier itself.
    pub fn frequency_grid(&self, n: usize) -> Vec<f64> {
        frequency_grid(self.carrier_frequency, self.bandwidth, n)
    }

    /// Short SHA-256 fingerprint of the canonical JSON form.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(&Sha256::digest(json.as_bytes())[..8])
    }
}

pub fn frequency_grid(carrier: f64, bandwidth: f64, n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![carrier];
    }
    let start = carrier - bandwidth / 2.0;
    let step = bandwidth / (n - 1) as f64;
    (0..n).map(|i| start + step * i as f64).collect()
}

/// One user position with its propagation paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserLocation {
    /// Ground-plane coordinates relative to the base station, meters.
    pub position: [f64; 2],
    pub paths: Vec<PathComponent>,
}

impl UserLocation {
    pub fn channel_user(
        &self,
        geometry: &ArrayGeometry,
        phase_model: PhaseModelConfig,
        frequency: f64,
        time: f64,
    ) -> Result<UserChannel> {
        let signatures = synthesize_signatures(&self.paths, geometry, frequency)?;
        let means = folded_phases(&self.paths, frequency, time);
        let phase_model = match phase_model {
            PhaseModelConfig::IidUniform => PhaseModel::IidUniform,
            PhaseModelConfig::Known => PhaseModel::Known(means),
            PhaseModelConfig::WrappedGaussian { .. } => PhaseModel::WrappedGaussian {
                means,
                spreads: self.paths.iter().map(|p| p.phase_spread).collect(),
            },
        };
        Ok(UserChannel {
            signatures,
            phase_model,
        })
    }

    /// Channel with every path at its mean phase: `h(f) = A(f) e^{j mu(f)}`.
    pub fn channel_at(&self, geometry: &ArrayGeometry, frequency: f64, time: f64) -> Result<CVector> {
        let a = synthesize_signatures(&self.paths, geometry, frequency)?;
        let v = CVector::from_iterator(
            self.paths.len(),
            folded_phases(&self.paths, frequency, time)
                .into_iter()
                .map(|p| C64::from_polar(1.0, p)),
        );
        Ok(a.matrix() * v)
    }
}

/// Power fractions decaying exponentially by [`NLOS_PROFILE_SPAN_DB`] from
/// the first to the last path, summing to one.
pub fn nlos_power_profile(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    let raw: Vec<f64> = (0..n)
        .map(|i| 10f64.powf(NLOS_PROFILE_SPAN_DB / 10.0 * i as f64 / (n - 1) as f64))
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|p| p / total).collect()
}

/// Draws the location with index `index`. Each index has its own RNG stream,
/// so a location does not depend on how many others are generated.
pub fn generate_location(config: &ScenarioConfig, index: usize) -> UserLocation {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(index as u64);

    let radius = config.cell_radius * rng.random::<f64>().sqrt();
    let bearing = rng.random_range(-PI..PI);
    let position = [radius * bearing.cos(), radius * bearing.sin()];
    let l = match config.paths_per_user {
        PathCount::Fixed(l) => l,
        PathCount::Range { min, max } => rng.random_range(min..=max),
    };
    let spread = match config.phase_model {
        PhaseModelConfig::WrappedGaussian { spread } => spread,
        _ => 0.0,
    };

    let mut powers = Vec::with_capacity(l);
    let mut directions = Vec::with_capacity(l);
    let mut delays = Vec::with_capacity(l);
    let scattered = match config.los_mode {
        LosMode::Los => {
            let kappa = 10f64.powf(config.rician_factor_db / 10.0);
            let direct = if l == 1 { 1.0 } else { kappa / (1.0 + kappa) };
            powers.push(direct);
            directions.push((bearing, (-config.bs_height).atan2(radius)));
            delays.push(0.0);
            l - 1
        }
        LosMode::Nlos => l,
    };
    if scattered > 0 {
        let share = 1.0 - powers.iter().sum::<f64>();
        powers.extend(nlos_power_profile(scattered).into_iter().map(|p| p * share));
        for _ in 0..scattered {
            directions.push((
                rng.random_range(-PI..PI),
                rng.random_range(-NLOS_ELEVATION_SPREAD..=NLOS_ELEVATION_SPREAD),
            ));
            delays.push(rng.random_range(0.0..=config.max_delay));
        }
    }
    let total: f64 = powers.iter().sum();
    let paths = (0..l)
        .map(|i| PathComponent {
            gain_magnitude: (powers[i] / total).sqrt(),
            delay: delays[i],
            doppler: 0.0,
            azimuth: directions[i].0,
            elevation: directions[i].1,
            nominal_phase: rng.random_range(0.0..2.0 * PI),
            phase_spread: spread,
        })
        .collect();
    UserLocation { position, paths }
}

/// Locations `0..count`.
pub fn generate_locations(config: &ScenarioConfig, count: usize) -> Vec<UserLocation> {
    (0..count).map(|i| generate_location(config, i)).collect()
}

/// Explicit users when configured, otherwise the first `count` generated
/// locations.
pub fn user_pool(config: &ScenarioConfig, count: usize) -> Vec<UserLocation> {
    match &config.users {
        Some(users) => users
            .iter()
            .map(|u| UserLocation {
                position: u.position.unwrap_or([0.0, 0.0]),
                paths: u.paths.clone(),
            })
            .collect(),
        None => generate_locations(config, count),
    }
}

/// Multi-user scenario for the given locations at `frequency`.
pub fn build_scenario(
    config: &ScenarioConfig,
    geometry: &ArrayGeometry,
    locations: &[&UserLocation],
    frequency: f64,
) -> Result<MultiUserScenario> {
    let users = locations
        .iter()
        .map(|loc| loc.channel_user(geometry, config.phase_model, frequency, config.evaluation_time))
        .collect::<Result<Vec<_>>>()?;
    let k = users.len();
    MultiUserScenario::new(users, vec![1.0; k], config.noise_variance())?.with_rank_tolerance(config.rank_tolerance)
}

/// A generated configuration: geometry, user locations and the scenario at
/// the carrier frequency.
#[derive(Debug, Clone)]
pub struct GeneratedScenario {
    pub geometry: ArrayGeometry,
    pub locations: Vec<UserLocation>,
    pub scenario: MultiUserScenario,
}

impl GeneratedScenario {
    pub fn scenario_at(&self, config: &ScenarioConfig, frequency: f64) -> Result<MultiUserScenario> {
        let refs: Vec<&UserLocation> = self.locations.iter().collect();
        build_scenario(config, &self.geometry, &refs, frequency)
    }
}

/// Deterministic in `config` (including its seed).
pub fn generate_scenario(config: &ScenarioConfig) -> Result<GeneratedScenario> {
    config.validate()?;
    let geometry = config.geometry()?;
    let locations = user_pool(config, config.num_users);
    let refs: Vec<&UserLocation> = locations.iter().collect();
    let scenario = build_scenario(config, &geometry, &refs, config.carrier_frequency)?;
    Ok(GeneratedScenario {
        geometry,
        locations,
        scenario,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ScenarioConfig {
        ScenarioConfig {
            num_users: 3,
            array: ArrayConfig {
                n_horizontal: 4,
                n_vertical: 2,
                spacing_in_wavelengths: 0.5,
            },
            ..Default::default()
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let a = generate_scenario(&small()).unwrap();
        let b = generate_scenario(&small()).unwrap();
        assert_eq!(a.locations, b.locations);
        assert_eq!(a.scenario, b.scenario);
        let other = generate_scenario(&ScenarioConfig { seed: 2, ..small() }).unwrap();
        assert_ne!(a.locations, other.locations);
    }

    #[test]
    fn gains_are_normalized() {
        for mode in [LosMode::Los, LosMode::Nlos] {
            for l in [1, 2, 7, 20] {
                let cfg = ScenarioConfig {
                    los_mode: mode,
                    paths_per_user: PathCount::Fixed(l),
                    ..small()
                };
                for loc in generate_locations(&cfg, 10) {
                    assert_eq!(loc.paths.len(), l);
                    let total: f64 = loc.paths.iter().map(|p| p.gain_magnitude.powi(2)).sum();
                    assert!((total - 1.0).abs() < 1e-12);
                    assert!(loc.paths.iter().all(|p| p.delay >= 0.0 && p.delay <= cfg.max_delay));
                    let r = (loc.position[0].powi(2) + loc.position[1].powi(2)).sqrt();
                    assert!(r <= cfg.cell_radius);
                }
            }
        }
    }

    #[test]
    fn single_path_los_points_at_the_user() {
        let cfg = ScenarioConfig {
            los_mode: LosMode::Los,
            paths_per_user: PathCount::Fixed(1),
            ..small()
        };
        let loc = generate_location(&cfg, 4);
        assert_eq!(loc.paths.len(), 1);
        let p = loc.paths[0];
        assert!((p.gain_magnitude - 1.0).abs() < 1e-15);
        assert!((p.azimuth - loc.position[1].atan2(loc.position[0])).abs() < 1e-9);
        assert!(p.elevation < 0.0);
    }

    #[test]
    fn los_power_split() {
        let cfg = ScenarioConfig {
            los_mode: LosMode::Los,
            rician_factor_db: 10.0,
            paths_per_user: PathCount::Fixed(5),
            ..small()
        };
        let loc = generate_location(&cfg, 0);
        assert!((loc.paths[0].gain_magnitude.powi(2) - 10.0 / 11.0).abs() < 1e-12);
    }

    #[test]
    fn profile_spans_twenty_db() {
        let p = nlos_power_profile(20);
        assert!((10.0 * (p[19] / p[0]).log10() + 20.0).abs() < 1e-9);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn path_count_range() {
        let cfg = ScenarioConfig {
            paths_per_user: PathCount::Range { min: 2, max: 4 },
            ..small()
        };
        let counts: Vec<usize> = generate_locations(&cfg, 50).iter().map(|l| l.paths.len()).collect();
        assert!(counts.iter().all(|&c| (2..=4).contains(&c)));
        assert!(counts.contains(&2) && counts.contains(&4));
    }

    #[test]
    fn validation_errors() {
        assert!(ScenarioConfig { num_users: 0, ..small() }.validate().is_err());
        assert!(ScenarioConfig { bandwidth: 0.0, ..small() }.validate().is_err());
        assert!(ScenarioConfig { paths_per_user: PathCount::Fixed(0), ..small() }.validate().is_err());
        assert!(ScenarioConfig { num_subcarriers: 0, ..small() }.validate().is_err());
        assert!(ScenarioConfig { users: Some(vec![]), ..small() }.validate().is_err());
    }

    #[test]
    fn config_json_defaults_and_unknown_fields() {
        let cfg: ScenarioConfig = serde_json::from_str(r#"{"num_users": 2, "paths_per_user": {"min": 1, "max": 3}}"#).unwrap();
        assert_eq!(cfg.num_users, 2);
        assert_eq!(cfg.paths_per_user, PathCount::Range { min: 1, max: 3 });
        assert_eq!(cfg.array, ArrayConfig::default());
        assert!(serde_json::from_str::<ScenarioConfig>(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn grid_spans_band() {
        let g = frequency_grid(3.5e9, 10e6, 51);
        assert_eq!(g.len(), 51);
        assert!((g[0] - (3.5e9 - 5e6)).abs() < 1e-3);
        assert!((g[50] - (3.5e9 + 5e6)).abs() < 1e-3);
        assert!((g[25] - 3.5e9).abs() < 1e-3);
    }
}
