use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::Serialize;
use stcausal::data::{
    ingest_air_quality, ingest_meteorology, read_sensor_metadata, season_of, split_seasonal, write_air_quality, write_meteorology,
    write_sensor_metadata, Minutes, SeriesKey, StationReading,
};
use stcausal::fep::PatternSet;
use stcausal::gbn::{evaluate, expand_pathway, pca_project, refine, CausalModel, Panel, TrainingSet};
use stcausal::matcher::CandidateSet;
use stcausal::pipeline::{self, find_candidates, mine_patterns, parallel_map, pathway_node, restrict_series, run_targets, PipelineConfig, Variant};
use stcausal::synth::{
    edge_metrics, gen_synthetic, lasso_granger_graph, pairwise_granger_graph, regime_dataset, simplified_pg_config, simplified_pg_graph, EdgeMetrics,
    EdgeSet, SyntheticSpec,
};
use stcausal::Error;

use crate::config::Settings;
use crate::error::{CliError, CliResult};
use crate::store::{self, Dataset, CANDIDATES, DATASET, MODELS, PATTERNS};

fn load_dataset(out: &Path) -> CliResult<Dataset> {
    store::read_json(&out.join(DATASET))
}

fn load_patterns(out: &Path) -> CliResult<Vec<PatternSet>> {
    store::json_files(&out.join(PATTERNS))?.iter().map(|p| store::read_json(p)).collect()
}

/// Train and test timestamps of the selected season(s). Training hours
/// right after a test window are dropped so lag windows stay in train.
fn split(dataset: &Dataset, settings: &Settings, lags: usize) -> CliResult<(Vec<Minutes>, Vec<Minutes>)> {
    let all: BTreeSet<Minutes> = dataset.series.iter().flat_map(|s| s.timestamps.iter().copied()).collect();
    if all.is_empty() {
        return Err(Error::EmptyDatabase.into());
    }
    let all: Vec<Minutes> = all.into_iter().collect();
    let season = settings.season()?;
    let mut train = Vec::new();
    let mut test = Vec::new();
    for s in split_seasonal(&all, settings.test_days()?, lags as i64)? {
        if season.is_none_or(|x| x == s.season) {
            train.extend(s.train);
            test.extend(s.test);
        }
    }
    train.sort_unstable();
    test.sort_unstable();
    if train.is_empty() {
        return Err(CliError::Usage("no training timestamps in the selected season".into()));
    }
    Ok((train, test))
}

fn targets(dataset: &Dataset, settings: &Settings) -> CliResult<Vec<SeriesKey>> {
    let known: BTreeSet<SeriesKey> = dataset.series.iter().map(|s| s.key()).collect();
    match settings.targets()? {
        None => Ok(known.into_iter().collect()),
        Some(list) => {
            if let Some(missing) = list.iter().find(|k| !known.contains(k)) {
                return Err(CliError::Usage(format!("target {missing} is not in the dataset")));
            }
            Ok(list)
        }
    }
}

pub fn ingest(settings: &Settings) -> CliResult<()> {
    let meta = read_sensor_metadata(settings.require_path("meta")?)?;
    let mut series = ingest_air_quality(settings.require_path("aq")?, &meta)?;
    // pollutants a sensor never reports are not variables of the system
    series.retain(|s| s.values.iter().any(Option::is_some));
    let meteo = match (settings.path("meteo"), settings.grid()?) {
        (Some(p), Some(g)) => Some(ingest_meteorology(p, &g)?),
        (Some(_), None) => return Err(CliError::Usage("meteorology input needs a `grid` setting".into())),
        (None, _) => None,
    };
    let sensors = series.iter().map(|s| s.sensor_id.as_str()).collect::<BTreeSet<_>>().len();
    let summary = format!(
        "ingested {} series from {sensors} sensors, meteorology dimension {}",
        series.len(),
        meteo.as_ref().map_or(0, |m| m.dim())
    );
    let out = settings.out_dir();
    store::write_json(&out.join(DATASET), &Dataset { meta, series, meteo })?;
    println!("{summary}");
    Ok(())
}

pub fn mine(settings: &Settings) -> CliResult<()> {
    let out = settings.out_dir();
    let dataset = load_dataset(&out)?;
    let config = settings.pipeline()?;
    let (train, _) = split(&dataset, settings, config.lags)?;
    let keep: BTreeSet<Minutes> = train.into_iter().collect();
    let patterns = mine_patterns(&restrict_series(&dataset.series, |t| keep.contains(&t)), &config)?;
    let dir = out.join(PATTERNS);
    store::reset_dir(&dir)?;
    let mut total = 0;
    for p in &patterns {
        store::write_json(&store::key_file(&dir, &p.key), p)?;
        println!("{}: {} patterns", p.key, p.patterns.len());
        total += p.patterns.len();
    }
    println!("mined {total} patterns across {} series", patterns.len());
    Ok(())
}

pub fn candidates(settings: &Settings) -> CliResult<()> {
    let out = settings.out_dir();
    let dataset = load_dataset(&out)?;
    let config = settings.pipeline()?;
    let patterns = load_patterns(&out)?;
    let dir = out.join(CANDIDATES);
    for target in targets(&dataset, settings)? {
        match find_candidates(&target, &patterns, &dataset.meta, &config).map_err(|e| CliError::target(&target, e))? {
            Some(c) => {
                let list: Vec<&str> = c.candidates.iter().map(|c| c.sensor.as_str()).collect();
                println!("{target}: {} candidates [{}]", list.len(), list.join(", "));
                store::write_json(&store::key_file(&dir, &target), &c)?;
            }
            None => println!("{target}: no patterns, trained local-only"),
        }
    }
    Ok(())
}

/// Everything needed to build training sets the same way `train` does.
struct Inputs {
    out: PathBuf,
    dataset: Dataset,
    config: PipelineConfig,
    panel: Panel,
    patterns: Vec<PatternSet>,
    train: Vec<Minutes>,
    test: Vec<Minutes>,
}

impl Inputs {
    fn load(settings: &Settings) -> CliResult<Self> {
        let out = settings.out_dir();
        let dataset = load_dataset(&out)?;
        let config = settings.pipeline()?;
        let (train, test) = split(&dataset, settings, config.lags)?;
        let panel = Panel::from_pollutants(&dataset.series, dataset.meteo.as_ref())?;
        let patterns = if config.no_patterns { Vec::new() } else { load_patterns(&out)? };
        Ok(Self {
            out,
            dataset,
            config,
            panel,
            patterns,
            train,
            test,
        })
    }

    /// A target with patterns must have a candidates file unless pattern
    /// mining is switched off.
    fn training_set(&self, target: &SeriesKey) -> CliResult<TrainingSet> {
        let has_patterns = self.patterns.iter().any(|p| p.key == *target);
        let candidates: Option<CandidateSet> = if self.config.no_patterns || !has_patterns {
            None
        } else {
            Some(store::read_json(&store::key_file(&self.out.join(CANDIDATES), target))?)
        };
        pipeline::training_set(
            &self.panel,
            target,
            &self.patterns,
            candidates.as_ref(),
            &self.dataset.meta,
            &self.train,
            &self.config,
        )
        .map_err(|e| CliError::target(target, e))
    }
}

struct SweepRow {
    k: usize,
    n: usize,
    accuracy: f64,
}

pub fn train(settings: &Settings) -> CliResult<()> {
    let inputs = Inputs::load(settings)?;
    let targets = targets(&inputs.dataset, settings)?;
    let sweep = settings.sweep()?;
    let dir = inputs.out.join(MODELS);

    let results = parallel_map(&targets, inputs.config.threads, |target| -> CliResult<(CausalModel, Vec<SweepRow>)> {
        let ts = inputs.training_set(target)?;
        let fail = |e| CliError::target(target, e);
        let Some((ks, ns)) = &sweep else {
            let trained = refine(&ts, &inputs.panel, &inputs.config.effective_refine()).map_err(fail)?;
            return Ok((trained.model, Vec::new()));
        };
        let mut rows = Vec::new();
        let mut best: Option<(f64, CausalModel)> = None;
        for &k in ks {
            for &n in ns {
                let mut cfg = inputs.config;
                cfg.refine.em.clusters = k;
                cfg.refine.neighbors = n;
                let trained = refine(&ts, &inputs.panel, &cfg.effective_refine()).map_err(fail)?;
                let accuracy = evaluate(&trained.model, &inputs.panel, &inputs.test).map_err(fail)?.accuracy;
                rows.push(SweepRow { k, n, accuracy });
                if best.as_ref().is_none_or(|(a, _)| accuracy > *a) {
                    best = Some((accuracy, trained.model));
                }
            }
        }
        let (_, model) = best.expect("sweep has at least one setting");
        Ok((model, rows))
    });

    let mut table = String::from("target,k,n,accuracy,selected\n");
    for (target, r) in targets.iter().zip(results) {
        let (model, rows) = r?;
        let path = store::key_file(&dir, target);
        store::write_atomic(&path, format!("{}\n", model.to_json()?).as_bytes())?;
        let neighbors: Vec<String> = model.neighbor_series().iter().map(ToString::to_string).collect();
        println!(
            "{target}: K={} N={} neighbors [{}] log-likelihood {:.4}",
            model.k,
            model.n,
            neighbors.join(", "),
            model.ll_trace.last().copied().unwrap_or(f64::NAN)
        );
        for row in &rows {
            let selected = row.k == model.k && row.n == model.n;
            let _ = writeln!(table, "{target},{},{},{},{selected}", row.k, row.n, row.accuracy);
        }
    }
    if sweep.is_some() {
        store::write_atomic(&inputs.out.join("selection.csv"), table.as_bytes())?;
    }
    Ok(())
}

pub fn evaluate_models(settings: &Settings, ablation: bool) -> CliResult<()> {
    if ablation {
        return run_ablation(settings);
    }
    let inputs = Inputs::load(settings)?;
    if inputs.test.is_empty() {
        return Err(Error::NoUsableRows("empty test window".into()).into());
    }
    let wanted = settings.targets()?.map(|t| t.into_iter().collect::<BTreeSet<_>>());
    let mut models = Vec::new();
    for p in store::json_files(&inputs.out.join(MODELS))? {
        let m = CausalModel::load(&p)?;
        if wanted.as_ref().is_none_or(|w| w.contains(&m.target)) {
            models.push(m);
        }
    }
    if models.is_empty() {
        return Err(CliError::MissingArtifact(inputs.out.join(MODELS)));
    }
    let mut by_season: BTreeMap<String, Vec<Minutes>> = BTreeMap::new();
    for &t in &inputs.test {
        by_season.entry(season_of(t).0.to_string()).or_default().push(t);
    }

    let results = parallel_map(&models, inputs.config.threads, |m| -> CliResult<Vec<(String, usize, f64)>> {
        let overall = evaluate(m, &inputs.panel, &inputs.test).map_err(|e| CliError::target(&m.target, e))?;
        let mut rows = vec![("all".to_string(), overall.rows, overall.accuracy)];
        for (season, ts) in &by_season {
            match evaluate(m, &inputs.panel, ts) {
                Ok(e) => rows.push((season.clone(), e.rows, e.accuracy)),
                Err(Error::NoUsableRows(_)) => {}
                Err(e) => return Err(CliError::target(&m.target, e)),
            }
        }
        Ok(rows)
    });
    let mut csv = String::from("target,season,rows,accuracy\n");
    for (m, r) in models.iter().zip(results) {
        for (season, rows, acc) in r? {
            if season == "all" {
                println!("{}: accuracy {:.4} over {rows} rows", m.target, acc);
            }
            let _ = writeln!(csv, "{},{season},{rows},{acc}", m.target);
        }
    }
    store::write_atomic(&inputs.out.join("accuracy.csv"), csv.as_bytes())
}

/// Runs the whole pipeline once per variant and reports mean held-out
/// accuracy over the targets.
fn run_ablation(settings: &Settings) -> CliResult<()> {
    let out = settings.out_dir();
    let dataset = load_dataset(&out)?;
    let config = settings.pipeline()?;
    let (train, test) = split(&dataset, settings, config.lags)?;
    if test.is_empty() {
        return Err(Error::NoUsableRows("empty test window".into()).into());
    }
    let targets = targets(&dataset, settings)?;
    let mut csv = String::from("variant,targets,mean_accuracy\n");
    for v in Variant::ALL {
        let runs = run_targets(
            &dataset.series,
            dataset.meteo.as_ref(),
            &dataset.meta,
            &targets,
            &train,
            &test,
            &v.apply(&config),
        )?;
        let mean = runs.iter().map(|r| r.evaluation.accuracy).sum::<f64>() / runs.len() as f64;
        println!("{v}: mean accuracy {mean:.4} over {} targets", runs.len());
        let _ = writeln!(csv, "{v},{},{mean}", runs.len());
    }
    store::write_atomic(&out.join("ablation.csv"), csv.as_bytes())
}

pub fn pathway(settings: &Settings, root: &SeriesKey) -> CliResult<()> {
    let inputs = Inputs::load(settings)?;
    let hops = settings.hops()?;
    let files = store::json_files(&inputs.out.join(MODELS))?;
    let models = files.iter().map(CausalModel::load).collect::<stcausal::Result<Vec<_>>>()?;
    let nodes = parallel_map(&models, inputs.config.threads, |m| {
        let ts = inputs.training_set(&m.target)?;
        pathway_node(&ts, &inputs.panel, m.clone(), &inputs.test, &inputs.config).map_err(|e| CliError::target(&m.target, e))
    });
    let mut map = BTreeMap::new();
    for (m, n) in models.iter().zip(nodes) {
        map.insert(m.target.clone(), n?);
    }
    let graph = expand_pathway(&map, root, hops)?;
    store::write_atomic(&inputs.out.join("pathway.dot"), graph.to_dot().as_bytes())?;
    store::write_atomic(&inputs.out.join("pathway.json"), format!("{}\n", graph.to_json()?).as_bytes())?;
    println!("pathway from {root}: {} nodes, {} edges", graph.nodes.len(), graph.edges.len());
    Ok(())
}

pub fn pca(settings: &Settings, dims: usize, model: Option<&SeriesKey>) -> CliResult<()> {
    let out = settings.out_dir();
    let dataset = load_dataset(&out)?;
    let panel = Panel::from_pollutants(&dataset.series, dataset.meteo.as_ref())?;
    let rows: Vec<(Minutes, Vec<f64>)> = panel
        .timestamps()
        .into_iter()
        .filter_map(|t| panel.env(t).map(|e| (t, e.to_vec())))
        .collect();
    if rows.is_empty() {
        return Err(CliError::Usage("the dataset has no meteorology to project".into()));
    }
    let d = rows[0].1.len();
    let m = DMatrix::from_fn(rows.len(), d, |i, j| rows[i].1[j]);
    let proj = pca_project(&m, dims)?;
    let model = model.map(|k| CausalModel::load(store::key_file(&out.join(MODELS), k))).transpose()?;
    let predictor = model.as_ref().map(CausalModel::predictor).transpose()?;

    let mut csv = String::from("timestamp");
    for c in 1..=dims {
        let _ = write!(csv, ",pc{c}");
    }
    csv.push_str(if predictor.is_some() { ",cluster\n" } else { "\n" });
    for ((t, env), p) in rows.iter().zip(&proj.projected) {
        csv.push_str(&stcausal::data::format_timestamp(*t));
        for v in p {
            let _ = write!(csv, ",{v}");
        }
        if let Some(pr) = &predictor {
            let probs = pr.cluster_probabilities(Some(env));
            let k = (0..probs.len()).fold(0, |b, k| if probs[k] > probs[b] { k } else { b });
            let _ = write!(csv, ",{k}");
        }
        csv.push('\n');
    }
    store::write_atomic(&out.join("pca.csv"), csv.as_bytes())?;
    let explained: Vec<String> = proj.explained_variance.iter().map(|v| format!("{v:.4}")).collect();
    println!("projected {} rows; explained variance [{}]", rows.len(), explained.join(", "));
    Ok(())
}

#[derive(Serialize)]
struct BenchRun {
    seed: u64,
    truth_edges: usize,
    pg: EdgeMetrics,
    lasso: EdgeMetrics,
    granger: EdgeMetrics,
}

#[derive(Serialize)]
struct BenchReport {
    spec: SyntheticSpec,
    runs: Vec<BenchRun>,
    mean_f1: BTreeMap<String, f64>,
}

fn edges_dot(name: &str, n: usize, edges: &EdgeSet) -> String {
    let mut out = format!("digraph {name} {{\n");
    for i in 0..n {
        let _ = writeln!(out, "  n{i:02};");
    }
    for (a, b) in edges {
        let _ = writeln!(out, "  n{a:02} -> n{b:02};");
    }
    out.push_str("}\n");
    out
}

/// A benchmarked method and how to read its F1 from a run.
type Method = (&'static str, fn(&BenchRun) -> f64);

pub fn synth_bench(settings: &Settings) -> CliResult<()> {
    let spec = settings.synthetic()?;
    let seeds: Vec<u64> = (0..settings.seeds()?).map(|i| spec.seed + i).collect();
    let out = settings.out_dir();
    let threads = settings.pipeline()?.threads;
    let inner_threads = if seeds.len() == 1 { threads } else { 1 };
    let runs = parallel_map(&seeds, threads, |&seed| -> CliResult<(BenchRun, [EdgeSet; 4])> {
        let sys = gen_synthetic(&SyntheticSpec { seed, ..spec })?;
        let mut cfg = simplified_pg_config(spec.max_lag, seed);
        cfg.threads = inner_threads;
        let pg = simplified_pg_graph(&sys.series, &sys.locations, &cfg)?;
        let lasso = lasso_granger_graph(&sys.series, spec.max_lag, None)?;
        let granger = pairwise_granger_graph(&sys.series, spec.max_lag, 0.05)?;
        let truth = sys.truth.edge_set();
        let run = BenchRun {
            seed,
            truth_edges: truth.len(),
            pg: edge_metrics(&pg, &truth),
            lasso: edge_metrics(&lasso, &truth),
            granger: edge_metrics(&granger, &truth),
        };
        Ok((run, [truth, pg, lasso, granger]))
    });
    let mut report = BenchReport {
        spec,
        runs: Vec::new(),
        mean_f1: BTreeMap::new(),
    };
    let mut first_graphs = None;
    for r in runs {
        let (run, graphs) = r?;
        first_graphs.get_or_insert(graphs);
        report.runs.push(run);
    }
    let count = report.runs.len() as f64;
    let methods: [Method; 3] = [("pg", |r| r.pg.f1), ("lasso", |r| r.lasso.f1), ("granger", |r| r.granger.f1)];
    for (name, f) in methods {
        let mean = report.runs.iter().map(f).sum::<f64>() / count;
        report.mean_f1.insert(name.to_string(), mean);
        println!("{name}: mean F1 {mean:.4} over {} seeds", report.runs.len());
    }
    store::write_json(&out.join("synth_bench.json"), &report)?;
    let graphs = first_graphs.expect("at least one seed");
    for (name, g) in ["truth", "pg", "lasso", "granger"].iter().zip(&graphs) {
        store::write_atomic(&out.join(format!("synth_{name}.dot")), edges_dot(name, spec.n_series, g).as_bytes())?;
    }
    Ok(())
}

/// Writes the regime-switching example as input CSVs for `ingest`.
pub fn synth_data(settings: &Settings) -> CliResult<()> {
    let spec = settings.regime()?;
    let d = regime_dataset(&spec)?;
    let out = settings.out_dir();
    std::fs::create_dir_all(&out).map_err(|e| CliError::io(&out, e))?;
    let (lat, lon) = d
        .meta
        .iter()
        .find(|m| m.sensor_id == d.target.sensor)
        .map(|m| m.position())
        .expect("target is placed");
    let readings: Vec<StationReading> = d
        .meteo
        .timestamps
        .iter()
        .zip(&d.meteo.vectors)
        .map(|(t, v)| ("M0".to_string(), lat, lon, *t, [v[0], v[1], v[2], v[3], v[4]]))
        .collect();
    let staged = |name: &str, write: &dyn Fn(&Path) -> stcausal::Result<()>| -> CliResult<()> {
        let path = out.join(name);
        let tmp = out.join(format!("{name}.tmp"));
        write(&tmp)?;
        std::fs::rename(&tmp, &path).map_err(|e| CliError::io(&path, e))
    };
    staged("aq.csv", &|p| write_air_quality(p, &d.series))?;
    staged("meta.csv", &|p| write_sensor_metadata(p, &d.meta))?;
    staged("meteo.csv", &|p| write_meteorology(p, &readings))?;
    println!(
        "wrote {} sensors over {} days; target {}, causer {}",
        d.meta.len(),
        spec.days,
        d.target,
        d.causer
    );
    println!("grid = {}, {}, {}, {}, 1, 1", lat - 0.5, lat + 0.5, lon - 0.5, lon + 0.5);
    Ok(())
}
