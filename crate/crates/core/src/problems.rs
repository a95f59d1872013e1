//! The two synthetic ground-truth design problems and closed-form physics
//! helpers.
//!
//! Both benchmarks are fixed analytic stand-ins for expensive transport
//! models: a layered neutron moderator with two flux objectives in different
//! energy windows, and an ion-to-neutron converter scored by total yield and
//! emission directionality. All constants are frozen so downstream results
//! are deterministic and the analytic Pareto set of the moderator problem is
//! known in closed form (`be = 0.09`, `pe` in `[1.0, 2.2]`).

use crate::error::{Error, Result};

/// Which benchmark a dataset or study refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemId {
    Moderator,
    Converter,
}

impl ProblemId {
    pub fn name(self) -> &'static str {
        match self {
            ProblemId::Moderator => "moderator",
            ProblemId::Converter => "converter",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "moderator" => Ok(ProblemId::Moderator),
            "converter" => Ok(ProblemId::Converter),
            other => Err(Error::Config(format!(
                "unknown problem '{other}' (expected moderator|converter)"
            ))),
        }
    }

    /// Number of surrogate input features (categoricals encoded 0/1).
    pub fn input_dim(self) -> usize {
        match self {
            ProblemId::Moderator => 2,
            ProblemId::Converter => 4,
        }
    }
}

pub const BE_THICKNESS_RANGE_CM: (f64, f64) = (0.003, 0.09);
pub const PE_THICKNESS_RANGE_CM: (f64, f64) = (0.75, 2.5);
pub const CONVERTER_HEIGHT_RANGE_CM: (f64, f64) = (0.05, 2.2);
pub const CONVERTER_RADIUS_RANGE_CM: (f64, f64) = (0.1, 1.0);

/// Candidate moderator design: Be and PE layer thicknesses in cm. The Pb
/// reflector thickness is fixed at 10 cm (saturated) and is not a parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeratorPoint {
    pub be_thickness: f64,
    pub pe_thickness: f64,
}

impl ModeratorPoint {
    pub fn new(be_thickness: f64, pe_thickness: f64) -> Result<Self> {
        let (be_lo, be_hi) = BE_THICKNESS_RANGE_CM;
        let (pe_lo, pe_hi) = PE_THICKNESS_RANGE_CM;
        if !(be_lo..=be_hi).contains(&be_thickness) {
            return Err(Error::Domain(format!(
                "be_thickness {be_thickness} outside [{be_lo}, {be_hi}]"
            )));
        }
        if !(pe_lo..=pe_hi).contains(&pe_thickness) {
            return Err(Error::Domain(format!(
                "pe_thickness {pe_thickness} outside [{pe_lo}, {pe_hi}]"
            )));
        }
        Ok(Self {
            be_thickness,
            pe_thickness,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Shape {
    Cylinder,
    Cone,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Material {
    Be,
    LiF,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Species {
    Proton,
    Deuteron,
}

/// Candidate converter design: shape, material, and cm dimensions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConverterPoint {
    pub shape: Shape,
    pub material: Material,
    pub height: f64,
    pub radius: f64,
}

impl ConverterPoint {
    pub fn new(shape: Shape, material: Material, height: f64, radius: f64) -> Result<Self> {
        let (h_lo, h_hi) = CONVERTER_HEIGHT_RANGE_CM;
        let (r_lo, r_hi) = CONVERTER_RADIUS_RANGE_CM;
        if !(h_lo..=h_hi).contains(&height) {
            return Err(Error::Domain(format!(
                "height {height} outside [{h_lo}, {h_hi}]"
            )));
        }
        if !(r_lo..=r_hi).contains(&radius) {
            return Err(Error::Domain(format!(
                "radius {radius} outside [{r_lo}, {r_hi}]"
            )));
        }
        Ok(Self {
            shape,
            material,
            height,
            radius,
        })
    }
}

/// The two objective values of one design under one evaluation mode.
///
/// Moderator: `f1` = 1–100 eV flux, `f2` = 0.5–10 keV flux (per source
/// particle). Converter: `f1` = total neutron yield per pulse, `f2` = average
/// emission cosine in `[0, 1]`. Both objectives are maximized.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ObjectivePair {
    pub f1: f64,
    pub f2: f64,
}

/// Per-ion-species converter tallies before the beam-composition weighting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelYield {
    pub neutron_yield: f64,
    pub cosine: f64,
    pub ion_count: f64,
}

/// Uncollided flux after a slab of thickness `x`:
/// `phi0 * exp(-sigma_t * x / mu)`.
///
/// Retained as the rationale for fixing the Pb layer: attenuation saturates
/// exponentially, so thickness past saturation adds nothing.
pub fn uncollided_flux(phi0: f64, sigma_t: f64, x: f64, mu: f64) -> Result<f64> {
    if phi0 < 0.0 || sigma_t < 0.0 || x < 0.0 {
        return Err(Error::Domain(format!(
            "negative input: phi0={phi0}, sigma_t={sigma_t}, x={x}"
        )));
    }
    if !(mu > 0.0 && mu <= 1.0) {
        return Err(Error::Domain(format!("mu {mu} outside (0, 1]")));
    }
    Ok(phi0 * (-sigma_t * x / mu).exp())
}

pub const SOURCE_PDF_AMPLITUDE: f64 = 0.3164;
pub const SOURCE_PDF_SIGMA: f64 = 1.2642;

/// Fitted angular density of the ion source in radians-scaled coordinates:
/// `0.3164 * exp(-(x^2 + y^2) / (2 * 1.2642^2))`.
pub fn angular_source_pdf(x: f64, y: f64) -> f64 {
    SOURCE_PDF_AMPLITUDE * (-(x * x + y * y) / (2.0 * SOURCE_PDF_SIGMA * SOURCE_PDF_SIGMA)).exp()
}

/// Unimodal rise-and-fall response `(t/tau) * exp(1 - t/tau)`, peaking at
/// `t = tau` with value 1.
fn peaked_response(t: f64, tau: f64) -> f64 {
    let r = t / tau;
    r * (1.0 - r).exp()
}

const MODERATOR_F1_SCALE: f64 = 1.0e-4;
const MODERATOR_F2_SCALE: f64 = 3.0e-4;
/// Fractional low-energy yield gain from a full-thickness Be layer.
const MODERATOR_F1_BE_GAIN: f64 = 0.0426;
const MODERATOR_F2_BE_GAIN: f64 = 0.0100;
/// PE thickness maximizing the 1–100 eV window (more moderation).
const MODERATOR_F1_PEAK_PE: f64 = 2.2;
/// PE thickness maximizing the 0.5–10 keV window (less moderation).
const MODERATOR_F2_PEAK_PE: f64 = 1.0;

/// Exact moderator objectives. Both fluxes grow with Be thickness; the PE
/// thickness trades the two energy windows against each other.
pub fn moderator_truth(p: &ModeratorPoint) -> ObjectivePair {
    let be_frac = p.be_thickness / BE_THICKNESS_RANGE_CM.1;
    let f1 = MODERATOR_F1_SCALE
        * (1.0 + MODERATOR_F1_BE_GAIN * be_frac)
        * peaked_response(p.pe_thickness, MODERATOR_F1_PEAK_PE);
    let f2 = MODERATOR_F2_SCALE
        * (1.0 + MODERATOR_F2_BE_GAIN * be_frac)
        * peaked_response(p.pe_thickness, MODERATOR_F2_PEAK_PE);
    ObjectivePair { f1, f2 }
}

pub const PROTONS_PER_PULSE: f64 = 1.1e13;
pub const DEUTERONS_PER_PULSE: f64 = 3.3e12;
const PROTON_YIELD_FACTOR: f64 = 1.0e-4;
const DEUTERON_YIELD_FACTOR: f64 = 5.0e-4;
const ATTENUATION_LENGTH_BE_CM: f64 = 0.9;
const ATTENUATION_LENGTH_LIF_CM: f64 = 1.4;
const SHAPE_FACTOR_CYLINDER: f64 = 1.0;
const SHAPE_FACTOR_CONE: f64 = 0.8;
const RADIAL_CAPTURE_SCALE_CM: f64 = 0.35;
const COSINE_BASE: f64 = 0.35;
const COSINE_HEIGHT_GAIN: f64 = 0.45;
const COSINE_HEIGHT_SCALE_CM: f64 = 0.9;
const COSINE_RADIUS_SLOPE: f64 = 0.12;
const COSINE_CONE_BONUS: f64 = 0.05;
const COSINE_DEUTERON_OFFSET: f64 = -0.02;

/// Exact single-species converter tallies. Yield saturates with height and
/// radius while directionality degrades, which is the source of the
/// two-objective conflict.
pub fn converter_channel_truth(p: &ConverterPoint, species: Species) -> ChannelYield {
    let (ion_count, yield_factor, cosine_offset) = match species {
        Species::Proton => (PROTONS_PER_PULSE, PROTON_YIELD_FACTOR, 0.0),
        Species::Deuteron => (
            DEUTERONS_PER_PULSE,
            DEUTERON_YIELD_FACTOR,
            COSINE_DEUTERON_OFFSET,
        ),
    };
    let attenuation_length = match p.material {
        Material::Be => ATTENUATION_LENGTH_BE_CM,
        Material::LiF => ATTENUATION_LENGTH_LIF_CM,
    };
    let shape_factor = match p.shape {
        Shape::Cylinder => SHAPE_FACTOR_CYLINDER,
        Shape::Cone => SHAPE_FACTOR_CONE,
    };
    let radial_capture = 1.0 - (-(p.radius / RADIAL_CAPTURE_SCALE_CM).powi(2)).exp();
    let neutron_yield = ion_count
        * yield_factor
        * shape_factor
        * radial_capture
        * (1.0 - (-p.height / attenuation_length).exp());

    let cone_bonus = if p.shape == Shape::Cone {
        COSINE_CONE_BONUS
    } else {
        0.0
    };
    let cosine = (COSINE_BASE + COSINE_HEIGHT_GAIN * (-p.height / COSINE_HEIGHT_SCALE_CM).exp()
        - COSINE_RADIUS_SLOPE * p.radius
        + cone_bonus
        + cosine_offset)
        .clamp(0.0, 1.0);

    ChannelYield {
        neutron_yield,
        cosine,
        ion_count,
    }
}

/// Yield-weighted combination of the proton and deuteron channels into the
/// per-pulse objectives. Zero total yield maps the cosine to 0.
pub fn combine_channels(proton: &ChannelYield, deuteron: &ChannelYield) -> ObjectivePair {
    let total = proton.neutron_yield + deuteron.neutron_yield;
    let f2 = if total == 0.0 {
        0.0
    } else {
        (proton.neutron_yield * proton.cosine + deuteron.neutron_yield * deuteron.cosine) / total
    };
    ObjectivePair { f1: total, f2 }
}

/// Exact converter objectives: both ion channels evaluated and combined.
pub fn converter_truth(p: &ConverterPoint) -> ObjectivePair {
    let proton = converter_channel_truth(p, Species::Proton);
    let deuteron = converter_channel_truth(p, Species::Deuteron);
    combine_channels(&proton, &deuteron)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(actual: f64, expected: f64, rel: f64) {
        let tol = rel * expected.abs().max(1e-300);
        assert!(
            (actual - expected).abs() <= tol,
            "expected {expected}, got {actual} (tol {tol})"
        );
    }

    #[test]
    fn uncollided_flux_hand_values() {
        assert_eq!(uncollided_flux(5.0, 1.0, 0.0, 1.0).unwrap(), 5.0);
        assert_eq!(uncollided_flux(5.0, 0.0, 3.0, 0.5).unwrap(), 5.0);
        assert_close(
            uncollided_flux(1.0, 1.0, 1.0, 1.0).unwrap(),
            (-1.0f64).exp(),
            1e-15,
        );
    }

    #[test]
    fn uncollided_flux_rejects_bad_inputs() {
        assert!(uncollided_flux(1.0, 1.0, 1.0, 0.0).is_err());
        assert!(uncollided_flux(1.0, 1.0, 1.0, -0.2).is_err());
        assert!(uncollided_flux(1.0, 1.0, 1.0, 1.5).is_err());
        assert!(uncollided_flux(-1.0, 1.0, 1.0, 1.0).is_err());
        assert!(uncollided_flux(1.0, -1.0, 1.0, 1.0).is_err());
        assert!(uncollided_flux(1.0, 1.0, -1.0, 1.0).is_err());
    }

    #[test]
    fn uncollided_flux_monotone_in_depth_and_cross_section() {
        let mut prev = f64::INFINITY;
        for i in 0..50 {
            let x = 0.1 * i as f64;
            let flux = uncollided_flux(2.0, 0.8, x, 0.7).unwrap();
            assert!(flux < prev);
            prev = flux;
        }
        let mut prev = f64::INFINITY;
        for i in 0..50 {
            let sigma = 0.05 * (i + 1) as f64;
            let flux = uncollided_flux(2.0, sigma, 1.3, 0.7).unwrap();
            assert!(flux < prev);
            prev = flux;
        }
    }

    #[test]
    fn angular_pdf_amplitude_and_symmetry() {
        assert_eq!(angular_source_pdf(0.0, 0.0), 0.3164);
        assert_close(
            angular_source_pdf(1.2642, 0.0),
            0.3164 * (-0.5f64).exp(),
            1e-15,
        );
        for &(a, b) in &[(0.3, -1.1), (2.0, 0.7), (-0.4, -0.9)] {
            assert_eq!(angular_source_pdf(a, b), angular_source_pdf(-a, -b));
        }
    }

    #[test]
    fn angular_pdf_disc_mass_matches_closed_form() {
        // Closed form over the disc of radius pi/2:
        //   A * 2*pi*sigma^2 * (1 - exp(-R^2 / (2*sigma^2)))
        let sigma2 = SOURCE_PDF_SIGMA * SOURCE_PDF_SIGMA;
        let r = std::f64::consts::FRAC_PI_2;
        let closed = SOURCE_PDF_AMPLITUDE
            * 2.0
            * std::f64::consts::PI
            * sigma2
            * (1.0 - (-r * r / (2.0 * sigma2)).exp());

        // Monte Carlo quadrature over the bounding square, masked to the disc.
        use rand::Rng;
        let mut rng = crate::seed::stream(7, "pdf-quadrature", &[]);
        let n = 2_000_000usize;
        let mut acc = 0.0;
        for _ in 0..n {
            let x = rng.gen_range(-r..r);
            let y = rng.gen_range(-r..r);
            if x * x + y * y <= r * r {
                acc += angular_source_pdf(x, y);
            }
        }
        let square_area = (2.0 * r) * (2.0 * r);
        let mc = acc / n as f64 * square_area;
        assert_close(mc, closed, 0.01);
    }

    #[test]
    fn moderator_truth_frozen_values() {
        let p = ModeratorPoint::new(0.09, 2.2).unwrap();
        assert_close(moderator_truth(&p).f1, 1.0426e-4, 1e-12);
        let p = ModeratorPoint::new(0.09, 1.0).unwrap();
        assert_close(moderator_truth(&p).f2, 3.0300e-4, 1e-12);
    }

    #[test]
    fn peaked_response_is_one_at_peak() {
        for &tau in &[0.5, 1.0, 2.2, 7.0] {
            assert_close(peaked_response(tau, tau), 1.0, 1e-15);
        }
    }

    #[test]
    fn moderator_point_bounds_enforced() {
        assert!(ModeratorPoint::new(0.002, 1.0).is_err());
        assert!(ModeratorPoint::new(0.1, 1.0).is_err());
        assert!(ModeratorPoint::new(0.05, 0.7).is_err());
        assert!(ModeratorPoint::new(0.05, 2.6).is_err());
        assert!(ModeratorPoint::new(0.003, 0.75).is_ok());
        assert!(ModeratorPoint::new(0.09, 2.5).is_ok());
    }

    #[test]
    fn moderator_objectives_increase_with_be() {
        // Finite differences in be at fixed pe, across the whole range.
        for pe_i in 0..25 {
            let pe = 0.75 + 1.75 * pe_i as f64 / 24.0;
            for be_i in 0..29 {
                let be = 0.003 + 0.087 * be_i as f64 / 29.0;
                let lo = moderator_truth(&ModeratorPoint::new(be, pe).unwrap());
                let hi = moderator_truth(&ModeratorPoint::new(be + 0.002, pe).unwrap());
                assert!(hi.f1 > lo.f1);
                assert!(hi.f2 > lo.f2);
            }
        }
    }

    #[test]
    fn moderator_peaks_sit_at_expected_pe() {
        let grid = crate::dataset::grid_moderator();
        let best_f1 = grid
            .iter()
            .max_by(|a, b| {
                moderator_truth(a)
                    .f1
                    .total_cmp(&moderator_truth(b).f1)
            })
            .unwrap();
        let best_f2 = grid
            .iter()
            .max_by(|a, b| {
                moderator_truth(a)
                    .f2
                    .total_cmp(&moderator_truth(b).f2)
            })
            .unwrap();
        // Closest grid pe to 2.2 and 1.0 respectively (be is the outer axis,
        // so the first 25 grid entries enumerate every pe value).
        let closest = |target: f64| {
            grid[..25]
                .iter()
                .map(|p| p.pe_thickness)
                .min_by(|a, b| (a - target).abs().total_cmp(&(b - target).abs()))
                .unwrap()
        };
        assert_close(best_f1.pe_thickness, closest(2.2), 1e-12);
        assert_close(best_f2.pe_thickness, closest(1.0), 1e-12);
    }

    #[test]
    fn larger_be_weakly_dominates_at_equal_pe() {
        let grid = crate::dataset::grid_moderator();
        for a in &grid {
            for b in &grid {
                if a.pe_thickness == b.pe_thickness && a.be_thickness > b.be_thickness {
                    let oa = moderator_truth(a);
                    let ob = moderator_truth(b);
                    assert!(oa.f1 >= ob.f1 && oa.f2 >= ob.f2);
                }
            }
        }
    }

    #[test]
    fn converter_channel_frozen_values() {
        // Evaluated independently from the frozen constants.
        let p = ConverterPoint::new(Shape::Cylinder, Material::Be, 2.2, 1.0).unwrap();
        let expected_yield = 1.1e13
            * 1.0e-4
            * 1.0
            * (1.0 - (-(1.0f64 / 0.35).powi(2)).exp())
            * (1.0 - (-2.2f64 / 0.9).exp());
        let ch = converter_channel_truth(&p, Species::Proton);
        assert_close(ch.neutron_yield, expected_yield, 1e-12);
        // Spec quotes ~1.0e9 for this corner; the exact value is 1.00426e9.
        assert_close(ch.neutron_yield, 1.004262e9, 1e-5);
        assert_eq!(ch.ion_count, 1.1e13);

        let p = ConverterPoint::new(Shape::Cone, Material::Be, 0.05, 0.1).unwrap();
        let ch = converter_channel_truth(&p, Species::Proton);
        let expected_cosine = 0.35 + 0.45 * (-0.05f64 / 0.9).exp() - 0.12 * 0.1 + 0.05;
        assert_close(ch.cosine, expected_cosine, 1e-12);
        assert_close(ch.cosine, 0.8137, 2e-4);
    }

    #[test]
    fn converter_yield_vanishes_with_height() {
        let p = ConverterPoint::new(Shape::Cylinder, Material::LiF, 0.05, 0.5).unwrap();
        let near_zero = converter_channel_truth(&p, Species::Deuteron).neutron_yield;
        // height -> 0 limit: 1 - exp(0) = 0; the smallest admissible height
        // already sits close to it.
        assert!(near_zero < 0.05 * DEUTERONS_PER_PULSE * DEUTERON_YIELD_FACTOR);
    }

    #[test]
    fn combine_channels_hand_cases() {
        let mk = |y, c| ChannelYield {
            neutron_yield: y,
            cosine: c,
            ion_count: 1.1e13,
        };
        let out = combine_channels(&mk(2.0, 0.8), &mk(2.0, 0.6));
        assert_close(out.f2, 0.7, 1e-15);
        let out = combine_channels(&mk(5.0, 0.9), &mk(0.0, 0.2));
        assert_eq!(out.f2, 0.9);
        let out = combine_channels(&mk(3.0, 0.9), &mk(1.0, 0.5));
        assert_close(out.f1, 4.0, 1e-15);
        assert_close(out.f2, 0.8, 1e-15);
        let out = combine_channels(&mk(0.0, 0.9), &mk(0.0, 0.5));
        assert_eq!(out.f2, 0.0);
    }

    #[test]
    fn converter_truth_is_channel_composition() {
        let p = ConverterPoint::new(Shape::Cone, Material::LiF, 1.3, 0.6).unwrap();
        let composed = combine_channels(
            &converter_channel_truth(&p, Species::Proton),
            &converter_channel_truth(&p, Species::Deuteron),
        );
        assert_eq!(converter_truth(&p), composed);

        let p = ConverterPoint::new(Shape::Cylinder, Material::Be, 2.2, 1.0).unwrap();
        let out = converter_truth(&p);
        // Proton channel 1.00426e9 plus deuteron channel 1.50639e9.
        assert_close(out.f1, 2.510655e9, 1e-5);
    }

    #[test]
    fn converter_cosine_in_unit_interval_on_grid() {
        for p in crate::dataset::grid_converter() {
            let out = converter_truth(&p);
            assert!((0.0..=1.0).contains(&out.f2), "cosine {}", out.f2);
            assert!(out.f1 >= 0.0);
        }
    }

    #[test]
    fn converter_objective_conflict() {
        // Yield strictly increases with height and radius; cosine strictly
        // decreases, creating a genuine trade-off.
        let eps = 1e-4;
        for &shape in &[Shape::Cylinder, Shape::Cone] {
            for &mat in &[Material::Be, Material::LiF] {
                for hi in 0..10 {
                    for ri in 0..8 {
                        let h = 0.1 + 0.2 * hi as f64;
                        let r = 0.12 + 0.1 * ri as f64;
                        let base = converter_truth(&ConverterPoint::new(shape, mat, h, r).unwrap());
                        let dh =
                            converter_truth(&ConverterPoint::new(shape, mat, h + eps, r).unwrap());
                        let dr =
                            converter_truth(&ConverterPoint::new(shape, mat, h, r + eps).unwrap());
                        assert!(dh.f1 > base.f1);
                        assert!(dr.f1 > base.f1);
                        assert!(dh.f2 < base.f2);
                        assert!(dr.f2 < base.f2);
                    }
                }
            }
        }
    }
}
