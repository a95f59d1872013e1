//! Grid-search training datasets: generation, scaling, splitting, persistence.
//!
//! The moderator grid is 30 Be thicknesses × 25 PE thicknesses (750 points);
//! the converter grid is 2 shapes × 2 materials × 44 heights × 10 radii
//! (1760 points). One dataset holds the noisy evaluations of a full grid at a
//! single tally-uncertainty level.
//!
//! File format: UTF-8 CSV with one `#`-prefixed metadata line
//! (`# <problem>,<u_level>,<seed>`), a header row `in_0,..,in_k,f1,f2`, and
//! one row per sample. Floats are written in shortest round-trip form, so
//! save → load → save is byte-identical. Scaler and split parameters live in
//! a JSON sidecar keyed by the dataset file's SHA-256.

use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::emulator::{cost_of, simulate_converter, simulate_moderator, UncertaintySpec};
use crate::error::{Error, Result};
use crate::hashing::sha256_hex;
use crate::problems::{ConverterPoint, Material, ModeratorPoint, ProblemId, Shape};
use crate::seed::stream;

pub const MODERATOR_LEVELS: [f64; 5] = [0.10, 0.075, 0.05, 0.03, 0.01];
pub const CONVERTER_LEVELS: [f64; 5] = [0.05, 0.035, 0.02, 0.01, 0.002];

pub const TEST_FRACTION: f64 = 0.15;

pub fn standard_levels(problem: ProblemId) -> &'static [f64] {
    match problem {
        ProblemId::Moderator => &MODERATOR_LEVELS,
        ProblemId::Converter => &CONVERTER_LEVELS,
    }
}

/// One grid point: encoded input features and the two noisy objectives.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub inputs: Vec<f64>,
    pub outputs: [f64; 2],
}

/// A full grid evaluated at one uncertainty level.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub problem: ProblemId,
    pub u: UncertaintySpec,
    pub seed: u64,
    pub samples: Vec<Sample>,
    pub total_cost: f64,
}

/// Endpoint-pinned linear spacing.
fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2);
    (0..n)
        .map(|i| {
            if i == n - 1 {
                hi
            } else {
                lo + (hi - lo) * (i as f64 / (n - 1) as f64)
            }
        })
        .collect()
}

/// 30 Be × 25 PE thicknesses, Be as the outer (row-major) axis.
pub fn grid_moderator() -> Vec<ModeratorPoint> {
    let be = linspace(0.003, 0.09, 30);
    let pe = linspace(0.75, 2.5, 25);
    let mut points = Vec::with_capacity(be.len() * pe.len());
    for &b in &be {
        for &p in &pe {
            points.push(ModeratorPoint {
                be_thickness: b,
                pe_thickness: p,
            });
        }
    }
    points
}

/// 2 shapes × 2 materials × 44 heights × 10 radii, shape-major ordering.
pub fn grid_converter() -> Vec<ConverterPoint> {
    let heights = linspace(0.05, 2.2, 44);
    let radii = linspace(0.1, 1.0, 10);
    let mut points = Vec::with_capacity(2 * 2 * heights.len() * radii.len());
    for &shape in &[Shape::Cylinder, Shape::Cone] {
        for &material in &[Material::Be, Material::LiF] {
            for &height in &heights {
                for &radius in &radii {
                    points.push(ConverterPoint {
                        shape,
                        material,
                        height,
                        radius,
                    });
                }
            }
        }
    }
    points
}

/// Feature encoding: moderator `[be, pe]`.
pub fn moderator_features(p: &ModeratorPoint) -> Vec<f64> {
    vec![p.be_thickness, p.pe_thickness]
}

/// Feature encoding: converter `[shape, material, height, radius]` with
/// Cylinder/Be as 0 and Cone/LiF as 1.
pub fn converter_features(p: &ConverterPoint) -> Vec<f64> {
    vec![
        match p.shape {
            Shape::Cylinder => 0.0,
            Shape::Cone => 1.0,
        },
        match p.material {
            Material::Be => 0.0,
            Material::LiF => 1.0,
        },
        p.height,
        p.radius,
    ]
}

/// Optimizer gene layout matching the feature encoding of each problem.
pub fn gene_spec(problem: ProblemId) -> crate::nsga3::GeneSpec {
    use crate::nsga3::GeneBound;
    use crate::problems::{
        BE_THICKNESS_RANGE_CM, CONVERTER_HEIGHT_RANGE_CM, CONVERTER_RADIUS_RANGE_CM,
        PE_THICKNESS_RANGE_CM,
    };
    let genes = match problem {
        ProblemId::Moderator => vec![
            GeneBound::Continuous {
                lo: BE_THICKNESS_RANGE_CM.0,
                hi: BE_THICKNESS_RANGE_CM.1,
            },
            GeneBound::Continuous {
                lo: PE_THICKNESS_RANGE_CM.0,
                hi: PE_THICKNESS_RANGE_CM.1,
            },
        ],
        ProblemId::Converter => vec![
            GeneBound::Categorical { categories: 2 },
            GeneBound::Categorical { categories: 2 },
            GeneBound::Continuous {
                lo: CONVERTER_HEIGHT_RANGE_CM.0,
                hi: CONVERTER_HEIGHT_RANGE_CM.1,
            },
            GeneBound::Continuous {
                lo: CONVERTER_RADIUS_RANGE_CM.0,
                hi: CONVERTER_RADIUS_RANGE_CM.1,
            },
        ],
    };
    crate::nsga3::GeneSpec { genes }
}

fn problem_index(problem: ProblemId) -> u64 {
    match problem {
        ProblemId::Moderator => 0,
        ProblemId::Converter => 1,
    }
}

/// Evaluates the whole grid at level `u`. Each point draws from its own
/// stream keyed by `(seed, problem, u, point index)`, so the result is
/// identical no matter how the loop is scheduled.
pub fn generate_dataset(problem: ProblemId, u: UncertaintySpec, seed: u64) -> Dataset {
    let pid = problem_index(problem);
    let u_bits = u.value().to_bits();
    let (samples, per_point_cost): (Vec<Sample>, f64) = match problem {
        ProblemId::Moderator => {
            let grid = grid_moderator();
            let samples = grid
                .par_iter()
                .enumerate()
                .map(|(i, p)| {
                    let mut rng = stream(seed, "tally", &[pid, u_bits, i as u64]);
                    let ev = simulate_moderator(p, u, &mut rng);
                    Sample {
                        inputs: moderator_features(p),
                        outputs: [ev.values.f1, ev.values.f2],
                    }
                })
                .collect();
            (samples, cost_of(u))
        }
        ProblemId::Converter => {
            let grid = grid_converter();
            let samples = grid
                .par_iter()
                .enumerate()
                .map(|(i, p)| {
                    let mut rng = stream(seed, "tally", &[pid, u_bits, i as u64]);
                    let ev = simulate_converter(p, u, &mut rng);
                    Sample {
                        inputs: converter_features(p),
                        outputs: [ev.values.f1, ev.values.f2],
                    }
                })
                .collect();
            (samples, 2.0 * cost_of(u))
        }
    };
    let total_cost = samples.len() as f64 * per_point_cost;
    Dataset {
        problem,
        u,
        seed,
        samples,
        total_cost,
    }
}

/// Per-column affine scaling parameters (guarded: std below 1e-12 becomes 1).
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ScalerParams {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl ScalerParams {
    pub fn fit<'a, I>(rows: I, n_cols: usize) -> Self
    where
        I: Iterator<Item = &'a [f64]> + Clone,
    {
        let mut mean = vec![0.0; n_cols];
        let mut count = 0usize;
        for row in rows.clone() {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
            count += 1;
        }
        assert!(count > 0, "scaler fit needs at least one row");
        for m in &mut mean {
            *m /= count as f64;
        }
        let mut var = vec![0.0; n_cols];
        for row in rows {
            for ((s, m), v) in var.iter_mut().zip(&mean).zip(row) {
                let d = v - m;
                *s += d * d;
            }
        }
        let std = var
            .iter()
            .map(|s| {
                let sd = (s / count as f64).sqrt();
                if sd < 1e-12 {
                    1.0
                } else {
                    sd
                }
            })
            .collect();
        Self { mean, std }
    }

    pub fn transform(&self, row: &[f64], out: &mut [f64]) {
        for i in 0..row.len() {
            out[i] = (row[i] - self.mean[i]) / self.std[i];
        }
    }

    pub fn transform_vec(&self, row: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; row.len()];
        self.transform(row, &mut out);
        out
    }

    pub fn invert(&self, scaled: &[f64], out: &mut [f64]) {
        for i in 0..scaled.len() {
            out[i] = scaled[i] * self.std[i] + self.mean[i];
        }
    }
}

/// Input and output scalers fitted on the training rows only.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Scalers {
    pub inputs: ScalerParams,
    pub outputs: ScalerParams,
}

pub fn fit_scaler(ds: &Dataset, train_indices: &[usize]) -> Scalers {
    assert!(!train_indices.is_empty(), "empty training set");
    let input_rows = train_indices.iter().map(|&i| ds.samples[i].inputs.as_slice());
    let output_rows = train_indices
        .iter()
        .map(|&i| ds.samples[i].outputs.as_slice());
    Scalers {
        inputs: ScalerParams::fit(input_rows, ds.samples[0].inputs.len()),
        outputs: ScalerParams::fit(output_rows, 2),
    }
}

/// Disjoint train/test index lists; the test side holds `round(0.15 N)` rows.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SplitIndex {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub test_fraction: f64,
}

/// Splits by a seeded uniform permutation; the tail becomes the test set.
pub fn split(ds: &Dataset, seed: u64) -> Result<SplitIndex> {
    let n = ds.samples.len();
    if n < 20 {
        return Err(Error::Config(format!("dataset too small to split: {n}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    use rand::seq::SliceRandom;
    order.shuffle(&mut stream(seed, "split", &[n as u64]));
    let n_test = (TEST_FRACTION * n as f64).round() as usize;
    let test = order.split_off(n - n_test);
    Ok(SplitIndex {
        train: order,
        test,
        test_fraction: TEST_FRACTION,
    })
}

fn format_float(v: f64) -> String {
    // Shortest decimal form that round-trips; integers keep a trailing ".0"
    // so every cell parses back as a float unambiguously.
    let s = format!("{v}");
    if s.contains(['.', 'e', 'E', 'n', 'i']) {
        s
    } else {
        format!("{s}.0")
    }
}

/// Serializes a dataset to its CSV form.
pub fn dataset_to_string(ds: &Dataset) -> String {
    let n_in = ds.samples.first().map_or(0, |s| s.inputs.len());
    let mut out = String::new();
    out.push_str(&format!(
        "# {},{},{}\n",
        ds.problem.name(),
        format_float(ds.u.value()),
        ds.seed
    ));
    let headers: Vec<String> = (0..n_in)
        .map(|i| format!("in_{i}"))
        .chain(["f1".to_string(), "f2".to_string()])
        .collect();
    out.push_str(&headers.join(","));
    out.push('\n');
    for s in &ds.samples {
        let row: Vec<String> = s
            .inputs
            .iter()
            .chain(&s.outputs)
            .map(|v| format_float(*v))
            .collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn save_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    fs::write(path, dataset_to_string(ds))?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(path)?;
    parse_dataset(&text, path)
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn parse_dataset(text: &str, path: &Path) -> Result<Dataset> {
    let mut lines = text.lines().enumerate();

    let (ln, meta) = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "empty file"))?;
    let meta = meta
        .strip_prefix('#')
        .ok_or_else(|| parse_err(path, ln + 1, "missing `#` metadata line"))?
        .trim();
    let fields: Vec<&str> = meta.split(',').collect();
    if fields.len() != 3 {
        return Err(parse_err(
            path,
            ln + 1,
            format!("metadata needs problem,u_level,seed; got {} fields", fields.len()),
        ));
    }
    let problem = ProblemId::parse(fields[0].trim())
        .map_err(|e| parse_err(path, ln + 1, e.to_string()))?;
    let u_value: f64 = fields[1]
        .trim()
        .parse()
        .map_err(|_| parse_err(path, ln + 1, format!("bad u_level '{}'", fields[1])))?;
    let u = UncertaintySpec::new(u_value).map_err(|e| parse_err(path, ln + 1, e.to_string()))?;
    let seed: u64 = fields[2]
        .trim()
        .parse()
        .map_err(|_| parse_err(path, ln + 1, format!("bad seed '{}'", fields[2])))?;

    let n_in = problem.input_dim();
    let (ln, header) = lines
        .next()
        .ok_or_else(|| parse_err(path, 2, "missing header row"))?;
    let expected: Vec<String> = (0..n_in)
        .map(|i| format!("in_{i}"))
        .chain(["f1".to_string(), "f2".to_string()])
        .collect();
    if header.split(',').map(str::trim).collect::<Vec<_>>() != expected {
        return Err(parse_err(
            path,
            ln + 1,
            format!("header row does not match schema {}", expected.join(",")),
        ));
    }

    let n_cols = n_in + 2;
    let mut samples = Vec::new();
    for (ln, row) in lines {
        if row.is_empty() {
            continue;
        }
        let cells: Vec<&str> = row.split(',').collect();
        if cells.len() != n_cols {
            return Err(parse_err(
                path,
                ln + 1,
                format!("expected {n_cols} columns, found {}", cells.len()),
            ));
        }
        let mut values = Vec::with_capacity(n_cols);
        for c in cells {
            let v: f64 = c
                .trim()
                .parse()
                .map_err(|_| parse_err(path, ln + 1, format!("bad float '{c}'")))?;
            if !v.is_finite() {
                return Err(parse_err(path, ln + 1, format!("non-finite value '{c}'")));
            }
            values.push(v);
        }
        let outputs = [values[n_in], values[n_in + 1]];
        values.truncate(n_in);
        samples.push(Sample {
            inputs: values,
            outputs,
        });
    }

    let per_point_cost = match problem {
        ProblemId::Moderator => cost_of(u),
        ProblemId::Converter => 2.0 * cost_of(u),
    };
    Ok(Dataset {
        problem,
        u,
        seed,
        total_cost: samples.len() as f64 * per_point_cost,
        samples,
    })
}

pub fn dataset_hash(ds: &Dataset) -> String {
    sha256_hex(dataset_to_string(ds).as_bytes())
}

/// Scaler/split sidecar, keyed by the hash of the dataset file it belongs to.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DatasetSidecar {
    pub dataset_hash: String,
    pub split_seed: u64,
    pub split: SplitIndex,
    pub scalers: Scalers,
}

pub fn save_sidecar(sidecar: &DatasetSidecar, path: &Path) -> Result<()> {
    let json = serde_json::to_string_pretty(sidecar)
        .map_err(|e| Error::Schema(format!("sidecar serialize: {e}")))?;
    fs::write(path, json)?;
    Ok(())
}

pub fn load_sidecar(path: &Path) -> Result<DatasetSidecar> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Schema(format!("sidecar parse: {e}")))
}
