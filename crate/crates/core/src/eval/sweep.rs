//! Frequency sweeps and CDF studies over user locations.

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Serialize, Serializer};

use super::metrics::{signal_and_interference, to_db};
use super::scenario::{build_scenario, user_pool, GeneratedScenario, ScenarioConfig, UserLocation};
use crate::array_channel::ArrayGeometry;
use crate::mu::{rzf_slnr_bf, zf_stationary_bf, zf_worst_case_bf, MultiUserScenario};
use crate::su::{coherent_bf, stationary_bf, uniform_bf, worst_case_bf, Beamformer, WorstCaseOptions};
use crate::{CVector, Error, Result};

/// RNG stream offset for user-group selections, keeping them apart from the
/// per-location streams.
const SELECTION_STREAM_BASE: u64 = 1 << 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Design {
    Coherent,
    Uniform,
    Stationary,
    WorstCase,
    ZfStationary,
    ZfWorstCase,
    Rzf,
}

impl Design {
    pub const ALL: [Design; 7] = [
        Design::Coherent,
        Design::Uniform,
        Design::Stationary,
        Design::WorstCase,
        Design::ZfStationary,
        Design::ZfWorstCase,
        Design::Rzf,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Design::Coherent => "coherent",
            Design::Uniform => "uniform",
            Design::Stationary => "stationary",
            Design::WorstCase => "worstcase",
            Design::ZfStationary => "zf-stationary",
            Design::ZfWorstCase => "zf-worstcase",
            Design::Rzf => "rzf",
        }
    }

    /// Designs that need the instantaneous channel are redone at every
    /// frequency.
    pub fn is_instantaneous(self) -> bool {
        self == Design::Coherent
    }

    pub fn is_zero_forcing(self) -> bool {
        matches!(self, Design::ZfStationary | Design::ZfWorstCase)
    }
}

impl fmt::Display for Design {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Design {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Design::ALL
            .into_iter()
            .find(|d| d.name() == s.trim())
            .ok_or_else(|| {
                let names: Vec<_> = Design::ALL.iter().map(|d| d.name()).collect();
                Error::Config(format!("unknown design '{s}', expected one of {}", names.join(",")))
            })
    }
}

impl Serialize for Design {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

/// Comma-separated design list, duplicates removed, order kept.
pub fn parse_designs(list: &str) -> Result<Vec<Design>> {
    let mut out: Vec<Design> = Vec::new();
    for part in list.split(',').filter(|p| !p.trim().is_empty()) {
        let d: Design = part.parse()?;
        if !out.contains(&d) {
            out.push(d);
        }
    }
    if out.is_empty() {
        return Err(Error::Config("design list is empty".into()));
    }
    Ok(out)
}

/// Beamformer of `design` for user `k`. `h` is the user's instantaneous
/// channel, only read by the coherent design.
pub fn design_for_user(
    design: Design,
    scenario: &MultiUserScenario,
    k: usize,
    h: &CVector,
    opts: &WorstCaseOptions,
) -> Result<Beamformer> {
    let user = scenario.user(k)?;
    match design {
        Design::Coherent => coherent_bf(h),
        Design::Uniform => uniform_bf(scenario.num_antennas()),
        Design::Stationary => stationary_bf(&user.signatures, &user.correlation()?),
        Design::WorstCase => worst_case_bf(&user.signatures, opts),
        Design::ZfStationary => zf_stationary_bf(scenario, k),
        Design::ZfWorstCase => zf_worst_case_bf(scenario, k, opts),
        Design::Rzf => rzf_slnr_bf(scenario, k),
    }
}

/// Mean-phase channels of all users at `frequency`.
fn channels_at(
    config: &ScenarioConfig,
    geometry: &ArrayGeometry,
    locations: &[&UserLocation],
    frequency: f64,
) -> Result<Vec<CVector>> {
    locations
        .iter()
        .map(|loc| loc.channel_at(geometry, frequency, config.evaluation_time))
        .collect()
}

/// Beamformers for every user; ZF infeasibility yields `None` for that user.
fn design_all(
    design: Design,
    scenario: &MultiUserScenario,
    channels: &[CVector],
    opts: &WorstCaseOptions,
) -> Result<Vec<Option<CVector>>> {
    (0..scenario.num_users())
        .map(|k| match design_for_user(design, scenario, k, &channels[k], opts) {
            Ok(bf) => Ok(Some(bf.g)),
            Err(Error::ZfInfeasible { .. }) => Ok(None),
            Err(e) => Err(e),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub design: Design,
    pub frequency_hz: f64,
    /// `|g^H h(f)|^2`, linear.
    pub gain: f64,
}

/// Reference values of a design at the carrier.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepDesignSummary {
    pub design: Design,
    pub stationary_gain: f64,
    pub worst_case_gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    /// 0-based.
    pub user: usize,
    pub frequencies: Vec<f64>,
    pub summaries: Vec<SweepDesignSummary>,
    /// Design-major, then frequency.
    pub rows: Vec<SweepRow>,
}

/// Gain of each design across `n_points` frequencies of the band for user
/// `user` of `generated`. Non-coherent designs are computed once at the
/// carrier unless `recompute_per_frequency` is set.
pub fn frequency_sweep(
    config: &ScenarioConfig,
    generated: &GeneratedScenario,
    user: usize,
    designs: &[Design],
    n_points: usize,
) -> Result<SweepResult> {
    if n_points < 2 {
        return Err(Error::invalid("a sweep needs at least two frequency points"));
    }
    let k_total = generated.locations.len();
    if user >= k_total {
        return Err(Error::invalid(format!("user {} out of range 1..={k_total}", user + 1)));
    }
    let frequencies = config.frequency_grid(n_points);
    let refs: Vec<&UserLocation> = generated.locations.iter().collect();
    let opts = &config.worst_case;
    let center = &generated.scenario;
    let h_center = channels_at(config, &generated.geometry, &refs, config.carrier_frequency)?;

    let per_freq: Vec<(MultiUserScenario, Vec<CVector>)> = frequencies
        .par_iter()
        .map(|&f| {
            let s = build_scenario(config, &generated.geometry, &refs, f)?;
            let h = channels_at(config, &generated.geometry, &refs, f)?;
            Ok((s, h))
        })
        .collect::<Result<_>>()?;

    let mut summaries = Vec::with_capacity(designs.len());
    let mut rows = Vec::with_capacity(designs.len() * n_points);
    for &design in designs {
        let sig = &center.user(user)?.signatures;
        let r = center.user(user)?.correlation()?;
        let fixed = design_for_user(design, center, user, &h_center[user], opts)?;
        summaries.push(SweepDesignSummary {
            design,
            stationary_gain: crate::su::stationary_power(&fixed.g, sig, &r)?,
            worst_case_gain: crate::su::worst_case_power(&fixed.g, sig),
        });
        let redo = design.is_instantaneous() || config.recompute_per_frequency;
        let gains: Vec<f64> = per_freq
            .par_iter()
            .map(|(s, h)| {
                let g = if redo {
                    design_for_user(design, s, user, &h[user], opts)?.g
                } else {
                    fixed.g.clone()
                };
                Ok(g.dotc(&h[user]).norm_sqr())
            })
            .collect::<Result<_>>()?;
        rows.extend(frequencies.iter().zip(gains).map(|(&f, gain)| SweepRow {
            design,
            frequency_hz: f,
            gain,
        }));
    }
    Ok(SweepResult {
        user,
        frequencies,
        summaries,
        rows,
    })
}

/// What a CDF study measures per sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CdfMetric {
    /// `|g^H h|^2` of a single user.
    Gain,
    /// Per-user SINR in a group of users.
    Sinr,
}

impl CdfMetric {
    pub fn name(self) -> &'static str {
        match self {
            CdfMetric::Gain => "gain",
            CdfMetric::Sinr => "sinr",
        }
    }
}

/// One linear sample with the user it belongs to (1-based: the location
/// for single-user studies, the position within the group otherwise).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CdfSample {
    pub user: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DesignSamples {
    pub design: Design,
    pub samples: Vec<CdfSample>,
    /// Users left without a beamformer because ZF was infeasible; their
    /// samples are zero.
    pub zf_infeasible: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CdfStudy {
    pub metric: CdfMetric,
    pub frequencies: Vec<f64>,
    /// Location count (K = 1) or group count (K > 1).
    pub num_trials: usize,
    pub designs: Vec<DesignSamples>,
}

/// Pool indices of a trial's users and their labels.
type Trial = (Vec<usize>, Vec<usize>);

/// Samples of one trial: per design, the samples and the ZF failure count.
type TrialOutput = Vec<(Vec<CdfSample>, usize)>;

fn evaluate_group(
    config: &ScenarioConfig,
    geometry: &ArrayGeometry,
    group: &[&UserLocation],
    labels: &[usize],
    designs: &[Design],
    frequencies: &[f64],
) -> Result<TrialOutput> {
    let opts = &config.worst_case;
    let k_total = group.len();
    let center = build_scenario(config, geometry, group, config.carrier_frequency)?;
    let h_center = channels_at(config, geometry, group, config.carrier_frequency)?;
    let per_freq: Vec<(Option<MultiUserScenario>, Vec<CVector>)> = frequencies
        .iter()
        .map(|&f| {
            let s = if config.recompute_per_frequency || designs.iter().any(|d| d.is_instantaneous()) {
                Some(build_scenario(config, geometry, group, f)?)
            } else {
                None
            };
            Ok((s, channels_at(config, geometry, group, f)?))
        })
        .collect::<Result<_>>()?;

    let sigma2 = config.noise_variance();
    let mut out = Vec::with_capacity(designs.len());
    for &design in designs {
        let redo = design.is_instantaneous() || config.recompute_per_frequency;
        let fixed = if redo {
            None
        } else {
            Some(design_all(design, &center, &h_center, opts)?)
        };
        let mut samples = Vec::with_capacity(frequencies.len() * k_total);
        let mut failures = 0;
        for (s, h) in &per_freq {
            let gs = match &fixed {
                Some(g) => g.clone(),
                None => design_all(design, s.as_ref().expect("scenario built"), h, opts)?,
            };
            if fixed.is_none() || samples.is_empty() {
                failures += gs.iter().filter(|g| g.is_none()).count();
            }
            let gs: Vec<CVector> = gs
                .into_iter()
                .map(|g| g.unwrap_or_else(|| CVector::zeros(center.num_antennas())))
                .collect();
            for k in 0..k_total {
                let value = if k_total == 1 {
                    gs[0].dotc(&h[0]).norm_sqr()
                } else {
                    let (sig, int) = signal_and_interference(&center, &gs, k, &h[k]);
                    sig / (int + sigma2)
                };
                samples.push(CdfSample {
                    user: labels[k],
                    value,
                });
            }
        }
        out.push((samples, failures));
    }
    Ok(out)
}

/// CDF study. With one user per scenario every location of the pool is a
/// trial and the metric is the beamforming gain; otherwise random groups of
/// `num_users` locations are drawn from the pool and the metric is SINR.
/// Trials run in parallel and are merged in index order.
pub fn cdf_study(config: &ScenarioConfig, designs: &[Design], n_points: usize) -> Result<CdfStudy> {
    config.validate()?;
    if designs.is_empty() {
        return Err(Error::invalid("no designs requested"));
    }
    let geometry = config.geometry()?;
    let frequencies = config.frequency_grid(n_points);
    let k = config.num_users;
    let (metric, trials): (CdfMetric, Vec<Trial>) = if k == 1 {
        let pool = config.users.as_ref().map_or(config.num_locations, |u| u.len());
        (CdfMetric::Gain, (0..pool).map(|i| (vec![i], vec![i + 1])).collect())
    } else {
        if config.users.is_some() {
            return Err(Error::Config(
                "multi-user CDF studies draw users from the generated pool; remove 'users'".into(),
            ));
        }
        if config.num_locations < k {
            return Err(Error::Config(format!(
                "num_locations ({}) must be at least num_users ({k})",
                config.num_locations
            )));
        }
        let trials = (0..config.num_selections)
            .map(|s| {
                let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
                rng.set_stream(SELECTION_STREAM_BASE + s as u64);
                let mut picked = index::sample(&mut rng, config.num_locations, k).into_vec();
                picked.sort_unstable();
                (picked, (1..=k).collect())
            })
            .collect();
        (CdfMetric::Sinr, trials)
    };
    let pool = if k == 1 {
        user_pool(config, config.num_locations)
    } else {
        user_pool(&ScenarioConfig { users: None, ..config.clone() }, config.num_locations)
    };

    let outputs: Vec<TrialOutput> = trials
        .par_iter()
        .map(|(members, labels)| {
            let group: Vec<&UserLocation> = members.iter().map(|&i| &pool[i]).collect();
            evaluate_group(config, &geometry, &group, labels, designs, &frequencies)
        })
        .collect::<Result<_>>()?;

    let mut per_design: Vec<DesignSamples> = designs
        .iter()
        .map(|&design| DesignSamples {
            design,
            samples: Vec::new(),
            zf_infeasible: 0,
        })
        .collect();
    for trial in outputs {
        for (d, (samples, failures)) in per_design.iter_mut().zip(trial) {
            d.samples.extend(samples);
            d.zf_infeasible += failures;
        }
    }
    Ok(CdfStudy {
        metric,
        frequencies,
        num_trials: trials.len(),
        designs: per_design,
    })
}

impl DesignSamples {
    pub fn values_db(&self) -> Vec<f64> {
        self.samples.iter().map(|s| to_db(s.value)).collect()
    }
}
