//! Monte Carlo tally emulation at a prescribed relative statistical error.
//!
//! A converged tally estimator is asymptotically normal, so a tally tracked to
//! relative error `u` is modeled as `T * (1 + u*Z)` with `Z` standard normal,
//! floored at `1e-6 * T` to preserve nonnegativity in the far tail. The cost
//! model encodes relative error ∝ 1/sqrt(NPS), i.e. cost ∝ 1/u², normalized so
//! the 1% level costs one unit.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::problems::{
    combine_channels, converter_channel_truth, moderator_truth, ChannelYield, ConverterPoint,
    ModeratorPoint, ObjectivePair, Species,
};

/// Relative standard error of the stopped tally (0.05 means 5%).
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(transparent)]
pub struct UncertaintySpec(f64);

impl UncertaintySpec {
    pub fn new(u: f64) -> Result<Self> {
        if u > 0.0 && u < 1.0 {
            Ok(Self(u))
        } else {
            Err(Error::Config(format!(
                "tally uncertainty {u} outside (0, 1)"
            )))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// One emulated simulation: noisy objectives plus the NPS-proportional cost.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoisyEvaluation {
    pub values: ObjectivePair,
    pub cost_units: f64,
}

/// Relative error of the moderator's non-cutoff (0.5–10 keV) tally, as a
/// fraction of the cutoff tally's error. The cutoff tally converges last, so
/// the secondary tally ends below threshold.
pub const MODERATOR_SECONDARY_NOISE_RATIO: f64 = 0.6;

/// Relative error of the converter's average cosine, as a fraction of the
/// yield tally's error; the cosine aggregates ten angular-bin tallies.
pub const COSINE_NOISE_RATIO: f64 = 0.5;

const TALLY_FLOOR_FRACTION: f64 = 1e-6;

/// Draws one converged-tally estimate of `true_value` at relative error `u`.
/// Exact zeros stay zero.
pub fn sample_tally<R: Rng>(true_value: f64, u: UncertaintySpec, rng: &mut R) -> f64 {
    assert!(true_value >= 0.0, "tally true value must be nonnegative");
    let z: f64 = rng.sample(StandardNormal);
    if true_value == 0.0 {
        return 0.0;
    }
    (true_value * (1.0 + u.value() * z)).max(TALLY_FLOOR_FRACTION * true_value)
}

/// Relative noise scaled off the primary uncertainty (for secondary tallies).
fn sample_scaled<R: Rng>(true_value: f64, rel_error: f64, rng: &mut R) -> f64 {
    assert!(true_value >= 0.0);
    let z: f64 = rng.sample(StandardNormal);
    if true_value == 0.0 {
        return 0.0;
    }
    (true_value * (1.0 + rel_error * z)).max(TALLY_FLOOR_FRACTION * true_value)
}

/// Cost of stopping a simulation at relative error `u`, in units of the 1%
/// run: `(0.01 / u)^2`, computed as `1 / (100 u)^2` so the standard levels
/// land on exact binary values.
pub fn cost_of(u: UncertaintySpec) -> f64 {
    let r = 100.0 * u.value();
    1.0 / (r * r)
}

/// Emulates one moderator simulation: the 1–100 eV tally is the cutoff tally
/// (relative error exactly `u`); the keV tally converges further, at `0.6 u`.
pub fn simulate_moderator<R: Rng>(
    p: &ModeratorPoint,
    u: UncertaintySpec,
    rng: &mut R,
) -> NoisyEvaluation {
    let truth = moderator_truth(p);
    let f1 = sample_tally(truth.f1, u, rng);
    let f2 = sample_scaled(truth.f2, MODERATOR_SECONDARY_NOISE_RATIO * u.value(), rng);
    NoisyEvaluation {
        values: ObjectivePair { f1, f2 },
        cost_units: cost_of(u),
    }
}

/// Emulates one converter evaluation: separate proton and deuteron runs
/// (hence twice the cost), each noising its yield at `u` and its cosine at
/// `0.5 u`, combined by beam composition afterwards.
pub fn simulate_converter<R: Rng>(
    p: &ConverterPoint,
    u: UncertaintySpec,
    rng: &mut R,
) -> NoisyEvaluation {
    let noisy_channel = |species: Species, rng: &mut R| {
        let truth = converter_channel_truth(p, species);
        let neutron_yield = sample_tally(truth.neutron_yield, u, rng);
        let cosine =
            sample_scaled(truth.cosine, COSINE_NOISE_RATIO * u.value(), rng).clamp(0.0, 1.0);
        ChannelYield {
            neutron_yield,
            cosine,
            ion_count: truth.ion_count,
        }
    };
    let proton = noisy_channel(Species::Proton, rng);
    let deuteron = noisy_channel(Species::Deuteron, rng);
    NoisyEvaluation {
        values: combine_channels(&proton, &deuteron),
        cost_units: 2.0 * cost_of(u),
    }
}
