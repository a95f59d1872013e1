//! End-to-end study orchestration.
//!
//! Stages communicate exclusively through versioned artifact files in the
//! output directory, one subdirectory per repeat:
//!
//! ```text
//! out/
//!   report.json                     aggregate study report
//!   loss_table.csv                  per-level mean ± std over repeats
//!   cost_summary.csv                per-level generation cost
//!   repeat_000/
//!     dataset_u<level>.csv          noisy grid evaluations
//!     dataset_u<level>.meta.json    scaler + split sidecar (hash-keyed)
//!     tuning.csv                    every grid configuration's test scores
//!     selected.json                 chosen configuration per level
//!     model_u<level>.json           retrained best net
//!     front_predicted_u<level>.csv  top candidates with surrogate objectives
//!     trace_u<level>.csv            per-generation best-objective trace
//!     front_verified_u<level>.csv   truth-evaluated, normalized candidates
//!     loss_table.csv                per-level hypervolume and loss
//! ```
//!
//! Every stage records the hashes of its inputs; downstream stages re-derive
//! them and refuse to run on stale or missing artifacts, naming the command
//! to re-run. Identical configuration and seed reproduce every artifact
//! byte for byte.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::config::{GridChoice, StudyConfig};
use crate::dataset::{
    self, dataset_hash, fit_scaler, gene_spec, generate_dataset, load_dataset, load_sidecar,
    save_dataset, save_sidecar, split, Dataset, DatasetSidecar,
};
use crate::emulator::UncertaintySpec;
use crate::error::{Error, Result};
use crate::hashing::sha256_hex;
use crate::nn::{self, NetConfig, TrainReport};
use crate::nsga3;
use crate::problems::ProblemId;
use crate::seed::derive_u64;
use crate::verification::{build_loss_table, round_inputs, verify_level, LossRow};

const TOP_CANDIDATES: usize = 100;

fn missing(artifact: &str, command: &str) -> Error {
    Error::MissingArtifact {
        artifact: artifact.to_string(),
        command: command.to_string(),
    }
}

fn stale(artifact: &str, detail: impl Into<String>, command: &str) -> Error {
    Error::StaleArtifact {
        artifact: artifact.to_string(),
        detail: detail.into(),
        command: command.to_string(),
    }
}

fn level_label(u: f64) -> String {
    format!("{u}")
}

fn repeat_dir(cfg: &StudyConfig, repeat: usize) -> PathBuf {
    cfg.out.join(format!("repeat_{repeat:03}"))
}

fn dataset_path(cfg: &StudyConfig, repeat: usize, u: f64) -> PathBuf {
    repeat_dir(cfg, repeat).join(format!("dataset_u{}.csv", level_label(u)))
}

fn sidecar_path(cfg: &StudyConfig, repeat: usize, u: f64) -> PathBuf {
    repeat_dir(cfg, repeat).join(format!("dataset_u{}.meta.json", level_label(u)))
}

fn model_path(cfg: &StudyConfig, repeat: usize, u: f64) -> PathBuf {
    repeat_dir(cfg, repeat).join(format!("model_u{}.json", level_label(u)))
}

fn predicted_path(cfg: &StudyConfig, repeat: usize, u: f64) -> PathBuf {
    repeat_dir(cfg, repeat).join(format!("front_predicted_u{}.csv", level_label(u)))
}

fn trace_path(cfg: &StudyConfig, repeat: usize, u: f64) -> PathBuf {
    repeat_dir(cfg, repeat).join(format!("trace_u{}.csv", level_label(u)))
}

fn verified_path(cfg: &StudyConfig, repeat: usize, u: f64) -> PathBuf {
    repeat_dir(cfg, repeat).join(format!("front_verified_u{}.csv", level_label(u)))
}

/// Seeds for each stochastic stage, derived from the study seed and the
/// (repeat, level) coordinates so any stage reproduces independently.
fn stage_seed(cfg: &StudyConfig, stage: &str, repeat: usize, level: usize) -> u64 {
    derive_u64(cfg.seed, stage, &[repeat as u64, level as u64])
}

fn fmt(v: f64) -> String {
    let s = format!("{v}");
    if s.contains(['.', 'e', 'E', 'n', 'i']) {
        s
    } else {
        format!("{s}.0")
    }
}

// ---------------------------------------------------------------------------
// gen-data

pub fn cmd_gen_data(cfg: &StudyConfig) -> Result<()> {
    cfg.validate()?;
    let standard = dataset::standard_levels(cfg.problem);
    for &u in &cfg.levels {
        if !standard.contains(&u) {
            eprintln!(
                "warning: uncertainty level {u} is not a standard {} level {standard:?}",
                cfg.problem.name()
            );
        }
    }
    let tasks: Vec<(usize, usize, f64)> = (0..cfg.repeats)
        .flat_map(|r| cfg.levels.iter().enumerate().map(move |(l, &u)| (r, l, u)))
        .collect();
    for &(repeat, _, u) in &tasks {
        fs::create_dir_all(repeat_dir(cfg, repeat))?;
        let _ = u;
    }
    tasks.par_iter().try_for_each(|&(repeat, level, u)| {
        let spec = UncertaintySpec::new(u)?;
        let seed = stage_seed(cfg, "gen", repeat, level);
        let ds = generate_dataset(cfg.problem, spec, seed);
        save_dataset(&ds, &dataset_path(cfg, repeat, u))?;
        let split_seed = stage_seed(cfg, "split", repeat, level);
        let sp = split(&ds, split_seed)?;
        let sidecar = DatasetSidecar {
            dataset_hash: dataset_hash(&ds),
            split_seed,
            scalers: fit_scaler(&ds, &sp.train),
            split: sp,
        };
        save_sidecar(&sidecar, &sidecar_path(cfg, repeat, u))
    })
}

/// Loads a dataset and its sidecar, checking provenance against the current
/// configuration.
fn load_checked_dataset(
    cfg: &StudyConfig,
    repeat: usize,
    level: usize,
) -> Result<(Dataset, DatasetSidecar)> {
    let u = cfg.levels[level];
    let path = dataset_path(cfg, repeat, u);
    if !path.exists() {
        return Err(missing("dataset artifacts", "gen-data"));
    }
    let ds = load_dataset(&path)?;
    let expected_seed = stage_seed(cfg, "gen", repeat, level);
    if ds.problem != cfg.problem || ds.u.value() != u || ds.seed != expected_seed {
        return Err(stale(
            "dataset artifacts",
            format!(
                "dataset {} was generated under a different configuration",
                path.display()
            ),
            "gen-data",
        ));
    }
    let meta_path = sidecar_path(cfg, repeat, u);
    if !meta_path.exists() {
        return Err(missing("dataset artifacts", "gen-data"));
    }
    let sidecar = load_sidecar(&meta_path)?;
    if sidecar.dataset_hash != dataset_hash(&ds)
        || sidecar.split_seed != stage_seed(cfg, "split", repeat, level)
    {
        return Err(stale(
            "dataset artifacts",
            "sidecar hash does not match the dataset file",
            "gen-data",
        ));
    }
    Ok((ds, sidecar))
}

// ---------------------------------------------------------------------------
// tune

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct TuneLevel {
    pub u: f64,
    pub dataset_hash: String,
    pub best_index: usize,
    pub best_config: NetConfig,
    pub test_r2: [f64; 2],
    pub test_r2_aggregate: f64,
    pub best_epochs_run: usize,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct TuneSelection {
    pub config_hash: String,
    pub levels: Vec<TuneLevel>,
}

fn selection_path(cfg: &StudyConfig, repeat: usize) -> PathBuf {
    repeat_dir(cfg, repeat).join("selected.json")
}

pub fn cmd_tune(cfg: &StudyConfig) -> Result<()> {
    cfg.validate()?;
    let grid = cfg.grid.configs();
    let config_hash = cfg.config_hash();

    let tasks: Vec<(usize, usize)> = (0..cfg.repeats)
        .flat_map(|r| (0..cfg.levels.len()).map(move |l| (r, l)))
        .collect();
    let outcomes: Vec<(usize, usize, TuneLevel, Vec<Option<TrainReport>>)> = tasks
        .par_iter()
        .map(|&(repeat, level)| {
            let (ds, sidecar) = load_checked_dataset(cfg, repeat, level)?;
            let seed = stage_seed(cfg, "tune", repeat, level);
            let reports =
                nn::grid_reports(&ds, &sidecar.split, &sidecar.scalers, &grid, seed);
            let scores: Vec<Option<(f64, usize)>> = reports
                .iter()
                .enumerate()
                .map(|(idx, r)| {
                    r.as_ref().map(|rep| {
                        (rep.test_r2_aggregate, grid[idx].param_count(cfg.problem.input_dim()))
                    })
                })
                .collect();
            let best_index = nn::select_best(&scores).ok_or_else(|| {
                Error::Config(format!(
                    "every configuration diverged for u={} repeat {repeat}",
                    cfg.levels[level]
                ))
            })?;
            let best = reports[best_index].as_ref().unwrap();
            let tune_level = TuneLevel {
                u: cfg.levels[level],
                dataset_hash: sidecar.dataset_hash.clone(),
                best_index,
                best_config: grid[best_index],
                test_r2: best.test_r2,
                test_r2_aggregate: best.test_r2_aggregate,
                best_epochs_run: best.epochs_run,
            };
            Ok((repeat, level, tune_level, reports))
        })
        .collect::<Result<_>>()?;

    for repeat in 0..cfg.repeats {
        let mut rows = String::from(
            "level,config_index,layers,neurons,learning_rate,batch_size,params,status,epochs_run,best_epoch,test_r2_f1,test_r2_f2,test_r2_aggregate,selected\n",
        );
        let mut levels = Vec::new();
        for (_, level, tune_level, reports) in outcomes
            .iter()
            .filter(|(r, ..)| *r == repeat)
        {
            for (idx, (config, report)) in grid.iter().zip(reports).enumerate() {
                let params = config.param_count(cfg.problem.input_dim());
                let selected = (idx == tune_level.best_index) as u8;
                match report {
                    Some(rep) => rows.push_str(&format!(
                        "{},{},{},{},{},{},{},ok,{},{},{},{},{},{}\n",
                        fmt(cfg.levels[*level]),
                        idx,
                        config.hidden_layers,
                        config.neurons,
                        fmt(config.learning_rate),
                        config.batch_size,
                        params,
                        rep.epochs_run,
                        rep.best_epoch,
                        fmt(rep.test_r2[0]),
                        fmt(rep.test_r2[1]),
                        fmt(rep.test_r2_aggregate),
                        selected,
                    )),
                    None => rows.push_str(&format!(
                        "{},{},{},{},{},{},{},diverged,,,,,,0\n",
                        fmt(cfg.levels[*level]),
                        idx,
                        config.hidden_layers,
                        config.neurons,
                        fmt(config.learning_rate),
                        config.batch_size,
                        params,
                    )),
                }
            }
            levels.push(tune_level.clone());
        }
        fs::write(repeat_dir(cfg, repeat).join("tuning.csv"), rows)?;
        let selection = TuneSelection {
            config_hash: config_hash.clone(),
            levels,
        };
        let json = serde_json::to_string_pretty(&selection)
            .map_err(|e| Error::Schema(format!("selection serialize: {e}")))?;
        fs::write(selection_path(cfg, repeat), json)?;
    }
    Ok(())
}

fn load_selection(cfg: &StudyConfig, repeat: usize) -> Result<TuneSelection> {
    let path = selection_path(cfg, repeat);
    if !path.exists() {
        return Err(missing("tuning artifacts", "tune"));
    }
    let text = fs::read_to_string(&path)?;
    let selection: TuneSelection =
        serde_json::from_str(&text).map_err(|e| Error::Schema(format!("selection parse: {e}")))?;
    if selection.config_hash != cfg.config_hash() {
        return Err(stale(
            "tuning artifacts",
            "configuration changed since tuning",
            "tune",
        ));
    }
    Ok(selection)
}

// ---------------------------------------------------------------------------
// train

pub fn cmd_train(cfg: &StudyConfig) -> Result<()> {
    cfg.validate()?;
    let tasks: Vec<(usize, usize)> = (0..cfg.repeats)
        .flat_map(|r| (0..cfg.levels.len()).map(move |l| (r, l)))
        .collect();
    tasks.par_iter().try_for_each(|&(repeat, level)| {
        let selection = load_selection(cfg, repeat)?;
        let chosen = &selection.levels[level];
        let (ds, sidecar) = load_checked_dataset(cfg, repeat, level)?;
        if sidecar.dataset_hash != chosen.dataset_hash {
            return Err(stale(
                "tuning artifacts",
                "dataset changed since tuning",
                "tune",
            ));
        }
        let seed = stage_seed(cfg, "tune", repeat, level);
        let (net, report) = nn::train_config(
            &ds,
            &sidecar.split,
            &sidecar.scalers,
            chosen.best_config,
            seed,
            chosen.best_index,
        )?;
        // The retrained winner must reproduce its tuning-run score exactly.
        if report.test_r2_aggregate != chosen.test_r2_aggregate {
            return Err(stale(
                "tuning artifacts",
                "retrained model does not reproduce the tuning score",
                "tune",
            ));
        }
        nn::save_net(&net, &model_path(cfg, repeat, cfg.levels[level]))
    })
}

// ---------------------------------------------------------------------------
// optimize

fn metadata_line(pairs: &[(&str, String)]) -> String {
    let body: Vec<String> = pairs.iter().map(|(k, v)| format!("{k}={v}")).collect();
    format!("# {}\n", body.join(","))
}

fn parse_metadata(line: &str, path: &Path) -> Result<BTreeMap<String, String>> {
    let body = line.strip_prefix('#').ok_or_else(|| Error::Parse {
        path: path.to_path_buf(),
        line: 1,
        msg: "missing metadata line".into(),
    })?;
    Ok(body
        .trim()
        .split(',')
        .filter_map(|kv| {
            kv.split_once('=')
                .map(|(k, v)| (k.to_string(), v.to_string()))
        })
        .collect())
}

pub fn cmd_optimize(cfg: &StudyConfig) -> Result<()> {
    cfg.validate()?;
    let spec = gene_spec(cfg.problem);
    let tasks: Vec<(usize, usize)> = (0..cfg.repeats)
        .flat_map(|r| (0..cfg.levels.len()).map(move |l| (r, l)))
        .collect();
    tasks.par_iter().try_for_each(|&(repeat, level)| {
        let u = cfg.levels[level];
        let mpath = model_path(cfg, repeat, u);
        if !mpath.exists() {
            return Err(missing("model artifacts", "train"));
        }
        let net = nn::load_net(&mpath)?;
        let (ds, _) = load_checked_dataset(cfg, repeat, level)?;
        if net.dataset_hash != dataset_hash(&ds) {
            return Err(stale(
                "model artifacts",
                "model was trained on a different dataset",
                "train",
            ));
        }
        let model_hash = sha256_hex(&fs::read(&mpath)?);

        let objective = |genes: &[f64]| {
            let out = net.predict(genes).expect("gene width matches net input");
            [out[0], out[1]]
        };
        let seed = stage_seed(cfg, "optimize", repeat, level);
        let result = nsga3::run(objective, &spec, &cfg.nsga3, seed)?;

        // Front rank per population index (population is in front order).
        let mut rank = vec![0usize; result.population.len()];
        for (front_idx, front) in result.fronts.iter().enumerate() {
            for &i in front {
                rank[i] = front_idx;
            }
        }
        let top_n = TOP_CANDIDATES.min(result.population.len());
        let mut text = metadata_line(&[
            ("problem", cfg.problem.name().to_string()),
            ("u", level_label(u)),
            ("model_hash", model_hash.clone()),
            ("config_hash", cfg.config_hash()),
        ]);
        let gene_cols: Vec<String> = (0..spec.len()).map(|i| format!("gene_{i}")).collect();
        text.push_str(&format!("rank,{},f1_pred,f2_pred\n", gene_cols.join(",")));
        for (i, ind) in result.population.iter().take(top_n).enumerate() {
            let genes: Vec<String> = ind.genes.iter().map(|g| fmt(*g)).collect();
            text.push_str(&format!(
                "{},{},{},{}\n",
                rank[i],
                genes.join(","),
                fmt(ind.objectives[0]),
                fmt(ind.objectives[1])
            ));
        }
        fs::write(predicted_path(cfg, repeat, u), text)?;

        let mut trace = metadata_line(&[
            ("problem", cfg.problem.name().to_string()),
            ("u", level_label(u)),
        ]);
        trace.push_str("generation,best_f1,best_f2\n");
        for row in &result.traces {
            trace.push_str(&format!(
                "{},{},{}\n",
                row.generation,
                fmt(row.best_f1),
                fmt(row.best_f2)
            ));
        }
        fs::write(trace_path(cfg, repeat, u), trace)?;
        Ok(())
    })
}

struct PredictedFront {
    genes: Vec<Vec<f64>>,
    model_hash: String,
}

fn load_predicted(cfg: &StudyConfig, repeat: usize, u: f64, n_genes: usize) -> Result<PredictedFront> {
    let path = predicted_path(cfg, repeat, u);
    if !path.exists() {
        return Err(missing("optimize artifacts", "optimize"));
    }
    let text = fs::read_to_string(&path)?;
    let mut lines = text.lines().enumerate();
    let (_, meta_line) = lines.next().ok_or_else(|| Error::Parse {
        path: path.clone(),
        line: 1,
        msg: "empty file".into(),
    })?;
    let meta = parse_metadata(meta_line, &path)?;
    if meta.get("config_hash") != Some(&cfg.config_hash()) {
        return Err(stale(
            "optimize artifacts",
            "configuration changed since optimization",
            "optimize",
        ));
    }
    let model_hash = meta
        .get("model_hash")
        .cloned()
        .ok_or_else(|| Error::Schema("front_predicted missing model_hash".into()))?;
    lines.next(); // header row
    let mut genes = Vec::new();
    for (ln, row) in lines {
        if row.is_empty() {
            continue;
        }
        let cells: Vec<&str> = row.split(',').collect();
        if cells.len() != n_genes + 3 {
            return Err(Error::Parse {
                path: path.clone(),
                line: ln + 1,
                msg: format!("expected {} columns, found {}", n_genes + 3, cells.len()),
            });
        }
        let mut g = Vec::with_capacity(n_genes);
        for c in &cells[1..=n_genes] {
            g.push(c.parse::<f64>().map_err(|_| Error::Parse {
                path: path.clone(),
                line: ln + 1,
                msg: format!("bad float '{c}'"),
            })?);
        }
        genes.push(g);
    }
    Ok(PredictedFront { genes, model_hash })
}

// ---------------------------------------------------------------------------
// verify

pub fn cmd_verify(cfg: &StudyConfig) -> Result<()> {
    cfg.validate()?;
    let spec = gene_spec(cfg.problem);
    (0..cfg.repeats).into_par_iter().try_for_each(|repeat| {
        let mut per_level = Vec::new();
        for (level, &u) in cfg.levels.iter().enumerate() {
            let predicted = load_predicted(cfg, repeat, u, spec.len())?;
            let mpath = model_path(cfg, repeat, u);
            if !mpath.exists() {
                return Err(missing("model artifacts", "train"));
            }
            if sha256_hex(&fs::read(&mpath)?) != predicted.model_hash {
                return Err(stale(
                    "optimize artifacts",
                    "model changed since optimization",
                    "optimize",
                ));
            }
            let rounded: Vec<Vec<f64>> = predicted
                .genes
                .iter()
                .map(|g| round_inputs(g, &spec))
                .collect();
            let oracle = verify_level(&rounded, cfg.problem)?;
            let _ = level;
            per_level.push((u, rounded, oracle));
        }

        let table_input: Vec<(f64, Vec<crate::problems::ObjectivePair>)> = per_level
            .iter()
            .map(|(u, _, oracle)| (*u, oracle.clone()))
            .collect();
        let table = build_loss_table(&table_input)?;

        for (idx, (u, rounded, oracle)) in per_level.iter().enumerate() {
            let normalized = &table.normalized[idx];
            let front: std::collections::BTreeSet<(u64, u64)> = table.fronts[idx]
                .iter()
                .map(|&(a, b)| (a.to_bits(), b.to_bits()))
                .collect();
            let mut text = metadata_line(&[
                ("problem", cfg.problem.name().to_string()),
                ("u", level_label(*u)),
            ]);
            let gene_cols: Vec<String> = (0..spec.len()).map(|i| format!("gene_{i}")).collect();
            text.push_str(&format!(
                "{},f1,f2,norm_f1,norm_f2,on_front\n",
                gene_cols.join(",")
            ));
            for ((genes, pair), norm) in rounded.iter().zip(oracle).zip(normalized) {
                let gcells: Vec<String> = genes.iter().map(|g| fmt(*g)).collect();
                let on_front = front.contains(&(norm.0.to_bits(), norm.1.to_bits())) as u8;
                text.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    gcells.join(","),
                    fmt(pair.f1),
                    fmt(pair.f2),
                    fmt(norm.0),
                    fmt(norm.1),
                    on_front
                ));
            }
            fs::write(verified_path(cfg, repeat, *u), text)?;
        }

        let mut text = metadata_line(&[("config_hash", cfg.config_hash())]);
        text.push_str("u,hv_polygon,hv_staircase,loss_polygon_pct,loss_staircase_pct,front_size\n");
        for row in &table.rows {
            text.push_str(&format!(
                "{},{},{},{},{},{}\n",
                fmt(row.u),
                fmt(row.hv_polygon),
                fmt(row.hv_staircase),
                fmt(row.loss_polygon_pct),
                fmt(row.loss_staircase_pct),
                row.front_size
            ));
        }
        fs::write(repeat_dir(cfg, repeat).join("loss_table.csv"), text)?;
        Ok(())
    })
}

fn load_loss_table(cfg: &StudyConfig, repeat: usize) -> Result<Vec<LossRow>> {
    let path = repeat_dir(cfg, repeat).join("loss_table.csv");
    if !path.exists() {
        return Err(missing("verification artifacts", "verify"));
    }
    let text = fs::read_to_string(&path)?;
    let mut lines = text.lines().enumerate();
    let (_, meta_line) = lines.next().ok_or_else(|| Error::Parse {
        path: path.clone(),
        line: 1,
        msg: "empty file".into(),
    })?;
    let meta = parse_metadata(meta_line, &path)?;
    if meta.get("config_hash") != Some(&cfg.config_hash()) {
        return Err(stale(
            "verification artifacts",
            "configuration changed since verification",
            "verify",
        ));
    }
    lines.next(); // header
    let mut rows = Vec::new();
    for (ln, row) in lines {
        if row.is_empty() {
            continue;
        }
        let cells: Vec<&str> = row.split(',').collect();
        if cells.len() != 6 {
            return Err(Error::Parse {
                path: path.clone(),
                line: ln + 1,
                msg: format!("expected 6 columns, found {}", cells.len()),
            });
        }
        let parse = |c: &str| -> Result<f64> {
            c.parse().map_err(|_| Error::Parse {
                path: path.clone(),
                line: ln + 1,
                msg: format!("bad float '{c}'"),
            })
        };
        rows.push(LossRow {
            u: parse(cells[0])?,
            hv_polygon: parse(cells[1])?,
            hv_staircase: parse(cells[2])?,
            loss_polygon_pct: parse(cells[3])?,
            loss_staircase_pct: parse(cells[4])?,
            front_size: cells[5].parse().map_err(|_| Error::Parse {
                path: path.clone(),
                line: ln + 1,
                msg: format!("bad count '{}'", cells[5]),
            })?,
        });
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// report

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LevelReport {
    pub u: f64,
    pub dataset_cost: f64,
    /// Configuration chosen in the first repeat (the tuning-table analogue).
    pub best_config: NetConfig,
    pub test_r2_mean: f64,
    pub test_r2_std: f64,
    pub hv_polygon_mean: f64,
    pub hv_polygon_std: f64,
    pub hv_staircase_mean: f64,
    pub hv_staircase_std: f64,
    pub loss_polygon_mean: f64,
    pub loss_polygon_std: f64,
    pub loss_staircase_mean: f64,
    pub loss_staircase_std: f64,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct StudyReport {
    pub config_hash: String,
    pub problem: ProblemId,
    pub grid: GridChoice,
    pub levels: Vec<f64>,
    pub repeats: usize,
    pub seed: u64,
    pub per_level: Vec<LevelReport>,
    /// SHA-256 of every per-repeat artifact, keyed by path relative to the
    /// output directory.
    pub artifacts: BTreeMap<String, String>,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn hash_artifacts(cfg: &StudyConfig) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for repeat in 0..cfg.repeats {
        let dir = repeat_dir(cfg, repeat);
        let mut entries: Vec<PathBuf> = fs::read_dir(&dir)?
            .map(|e| e.map(|e| e.path()))
            .collect::<std::io::Result<_>>()?;
        entries.sort();
        for path in entries {
            let rel = path
                .strip_prefix(&cfg.out)
                .unwrap_or(&path)
                .to_string_lossy()
                .replace('\\', "/");
            map.insert(rel, sha256_hex(&fs::read(&path)?));
        }
    }
    Ok(map)
}

pub fn cmd_report(cfg: &StudyConfig) -> Result<StudyReport> {
    cfg.validate()?;
    let mut per_repeat_rows = Vec::with_capacity(cfg.repeats);
    let mut per_repeat_r2 = Vec::with_capacity(cfg.repeats);
    for repeat in 0..cfg.repeats {
        per_repeat_rows.push(load_loss_table(cfg, repeat)?);
        per_repeat_r2.push(load_selection(cfg, repeat)?);
    }

    let mut per_level = Vec::with_capacity(cfg.levels.len());
    for (level, &u) in cfg.levels.iter().enumerate() {
        let collect = |f: &dyn Fn(&LossRow) -> f64| -> Vec<f64> {
            per_repeat_rows.iter().map(|rows| f(&rows[level])).collect()
        };
        let (hv_p_mean, hv_p_std) = mean_std(&collect(&|r| r.hv_polygon));
        let (hv_s_mean, hv_s_std) = mean_std(&collect(&|r| r.hv_staircase));
        let (loss_p_mean, loss_p_std) = mean_std(&collect(&|r| r.loss_polygon_pct));
        let (loss_s_mean, loss_s_std) = mean_std(&collect(&|r| r.loss_staircase_pct));
        let r2s: Vec<f64> = per_repeat_r2
            .iter()
            .map(|sel| sel.levels[level].test_r2_aggregate)
            .collect();
        let (r2_mean, r2_std) = mean_std(&r2s);
        let (ds, _) = load_checked_dataset(cfg, 0, level)?;
        per_level.push(LevelReport {
            u,
            dataset_cost: ds.total_cost,
            best_config: per_repeat_r2[0].levels[level].best_config,
            test_r2_mean: r2_mean,
            test_r2_std: r2_std,
            hv_polygon_mean: hv_p_mean,
            hv_polygon_std: hv_p_std,
            hv_staircase_mean: hv_s_mean,
            hv_staircase_std: hv_s_std,
            loss_polygon_mean: loss_p_mean,
            loss_polygon_std: loss_p_std,
            loss_staircase_mean: loss_s_mean,
            loss_staircase_std: loss_s_std,
        });
    }

    let report = StudyReport {
        config_hash: cfg.config_hash(),
        problem: cfg.problem,
        grid: cfg.grid,
        levels: cfg.levels.clone(),
        repeats: cfg.repeats,
        seed: cfg.seed,
        per_level,
        artifacts: hash_artifacts(cfg)?,
    };

    let mut text = metadata_line(&[
        ("config_hash", report.config_hash.clone()),
        ("repeats", report.repeats.to_string()),
    ]);
    text.push_str(
        "u,hv_polygon_mean,hv_polygon_std,hv_staircase_mean,hv_staircase_std,loss_polygon_mean,loss_polygon_std,loss_staircase_mean,loss_staircase_std\n",
    );
    for row in &report.per_level {
        text.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            fmt(row.u),
            fmt(row.hv_polygon_mean),
            fmt(row.hv_polygon_std),
            fmt(row.hv_staircase_mean),
            fmt(row.hv_staircase_std),
            fmt(row.loss_polygon_mean),
            fmt(row.loss_polygon_std),
            fmt(row.loss_staircase_mean),
            fmt(row.loss_staircase_std)
        ));
    }
    fs::write(cfg.out.join("loss_table.csv"), text)?;

    let json = serde_json::to_string_pretty(&report)
        .map_err(|e| Error::Schema(format!("report serialize: {e}")))?;
    fs::write(cfg.out.join("report.json"), json)?;
    Ok(report)
}

// ---------------------------------------------------------------------------
// cost summary

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CostRow {
    pub u: f64,
    pub per_point_cost: f64,
    pub total_cost: f64,
    pub ratio_to_most_expensive: f64,
}

pub fn cmd_cost_summary(cfg: &StudyConfig) -> Result<Vec<CostRow>> {
    cfg.validate()?;
    let mut rows = Vec::with_capacity(cfg.levels.len());
    for level in 0..cfg.levels.len() {
        let (ds, _) = load_checked_dataset(cfg, 0, level)?;
        let per_point = ds.total_cost / ds.samples.len() as f64;
        rows.push((cfg.levels[level], per_point, ds.total_cost));
    }
    let max_cost = rows.iter().map(|r| r.2).fold(f64::NEG_INFINITY, f64::max);
    let rows: Vec<CostRow> = rows
        .into_iter()
        .map(|(u, per_point_cost, total_cost)| CostRow {
            u,
            per_point_cost,
            total_cost,
            ratio_to_most_expensive: total_cost / max_cost,
        })
        .collect();

    let mut text = String::from("u,per_point_cost,total_cost,ratio_to_most_expensive\n");
    for r in &rows {
        text.push_str(&format!(
            "{},{},{},{}\n",
            fmt(r.u),
            fmt(r.per_point_cost),
            fmt(r.total_cost),
            fmt(r.ratio_to_most_expensive)
        ));
    }
    fs::write(cfg.out.join("cost_summary.csv"), text)?;
    Ok(rows)
}

// ---------------------------------------------------------------------------
// run-all and the repeat study

pub fn cmd_run_all(cfg: &StudyConfig) -> Result<StudyReport> {
    cmd_gen_data(cfg)?;
    cmd_tune(cfg)?;
    cmd_train(cfg)?;
    cmd_optimize(cfg)?;
    cmd_verify(cfg)?;
    cmd_cost_summary(cfg)?;
    cmd_report(cfg)
}

/// Re-runs the full pipeline per repeat with derived seeds and aggregates
/// per-level normalized hypervolume and loss statistics.
pub fn repeat_study(cfg: &StudyConfig) -> Result<StudyReport> {
    cmd_run_all(cfg)
}
