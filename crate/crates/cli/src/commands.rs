use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use asg_core::asg::train_asg_detailed;
use asg_core::embed_io::{import_csv, save_vocab};
use asg_core::{
    generate_synthetic, load_embeddings, load_vocab, matched_budget_k, probe_eval,
    quantization_error, save_embeddings, segment_neighbors, train_sg, AsgConfig, AsgError,
    AsgModel, CodebookMode, CompressionReport, EmbeddingMatrix, ErrorClass, ErrorStats,
    HiddenState, KmeansParams, SyntheticSpec, Vocab,
};
use log::warn;
use serde::Serialize;

use crate::args::{
    Command, CompareArgs, IdsArgs, KmeansArgs, LogitsArgs, ModeArg, NeighborsArgs, ProbeArgs,
    ReconstructArgs, ReportArgs, ShapeArgs, SynthArgs, TrainArgs, TrainSgArgs,
};
use crate::presets;
use crate::render::{emit, grouped, table};

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Core(AsgError),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Core(e) => match e.class() {
                ErrorClass::Validation => 1,
                ErrorClass::Io => 2,
                ErrorClass::Numeric => 3,
            },
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(msg) => f.write_str(msg),
            Failure::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<AsgError> for Failure {
    fn from(e: AsgError) -> Self {
        Failure::Core(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Core(AsgError::Io(e))
    }
}

type CmdResult = Result<(), Failure>;

pub fn run(command: Command) -> CmdResult {
    match command {
        Command::ImportCsv { input, output } => {
            let m = import_csv(&input, &output)?;
            println!(
                "wrote {}x{} matrix to {}",
                m.rows(),
                m.cols(),
                output.display()
            );
            Ok(())
        }
        Command::Synth(a) => synth(a),
        Command::Train(a) => train(a),
        Command::TrainSg(a) => train_sg_cmd(a),
        Command::Ids(a) => ids(a),
        Command::Reconstruct(a) => reconstruct(a),
        Command::Report(a) => report(a),
        Command::Neighbors(a) => neighbors(a),
        Command::Logits(a) => logits(a),
        Command::Compare(a) => compare(a),
        Command::Probe(a) => probe(a),
    }
}

fn resolve_shape(shape: &ShapeArgs) -> Result<(usize, usize, CodebookMode), Failure> {
    let preset = match &shape.preset {
        Some(name) => Some(presets::lookup(name).ok_or_else(|| {
            Failure::Usage(format!(
                "unknown preset {name:?}; known: {}",
                presets::names().join(", ")
            ))
        })?),
        None => None,
    };
    let k = shape
        .k
        .or(preset.map(|p| p.0))
        .ok_or_else(|| Failure::Usage("--k is required (or --preset)".into()))?;
    let m = shape
        .m
        .or(preset.map(|p| p.1))
        .ok_or_else(|| Failure::Usage("--m is required (or --preset)".into()))?;
    let mode = match shape.mode {
        Some(ModeArg::Separate) => CodebookMode::Separate,
        Some(ModeArg::Shared) => CodebookMode::Shared,
        None => preset.map_or(CodebookMode::Separate, |p| p.2),
    };
    if k == 0 || m == 0 {
        return Err(Failure::Usage("--k and --m must be >= 1".into()));
    }
    Ok((k, m, mode))
}

fn check_kmeans(args: &KmeansArgs) -> CmdResult {
    if args.max_iters == 0 {
        return Err(Failure::Usage("--max-iters must be >= 1".into()));
    }
    if !(args.tol >= 0.0) {
        return Err(Failure::Usage("--tol must be >= 0".into()));
    }
    Ok(())
}

fn asg_config(
    e: &EmbeddingMatrix,
    shape: (usize, usize, CodebookMode),
    km: &KmeansArgs,
) -> AsgConfig {
    let (k, m, mode) = shape;
    let mut cfg = AsgConfig::new(e.rows(), e.cols(), k, m, mode).with_seed(km.seed);
    cfg.max_iters = km.max_iters;
    cfg.tol = km.tol;
    cfg
}

fn write_trace(path: &Path, traces: &[Vec<f64>]) -> CmdResult {
    let mut out = String::from("job,iteration,objective\n");
    for (job, trace) in traces.iter().enumerate() {
        for (it, obj) in trace.iter().enumerate() {
            out.push_str(&format!("{job},{},{obj:e}\n", it + 1));
        }
    }
    fs::write(path, out)?;
    Ok(())
}

fn synth(a: SynthArgs) -> CmdResult {
    if a.n_clusters == 0 || a.n_clusters > a.v {
        return Err(Failure::Usage(format!(
            "--n-clusters must be in 1..={}",
            a.v
        )));
    }
    let data = generate_synthetic(&SyntheticSpec {
        n_clusters: a.n_clusters,
        vocab_size: a.v,
        dim: a.d,
        spread: a.spread,
        seed: a.seed,
    })?;
    save_embeddings(&data.embeddings, &a.out)?;
    if let Some(path) = &a.labels {
        let text: String = data.labels.iter().map(|l| format!("{l}\n")).collect();
        fs::write(path, text)?;
    }
    if let Some(path) = &a.vocab {
        let vocab = Vocab::new(
            data.labels
                .iter()
                .enumerate()
                .map(|(t, c)| format!("c{c}_t{t}"))
                .collect(),
        )?;
        save_vocab(&vocab, path)?;
    }
    println!(
        "wrote {}x{} synthetic matrix to {}",
        a.v,
        a.d,
        a.out.display()
    );
    Ok(())
}

fn train(a: TrainArgs) -> CmdResult {
    let shape = resolve_shape(&a.shape)?;
    check_kmeans(&a.kmeans)?;
    let e = load_embeddings(&a.input)?;
    let cfg = asg_config(&e, shape, &a.kmeans);
    let trained = train_asg_detailed(&e, &cfg)?;
    for (job, run) in trained.runs.iter().enumerate() {
        if run.degenerate {
            warn!("job {job}: fewer distinct sub-vectors than k; Concept Vectors duplicated");
        }
    }
    trained.model.save(&a.out)?;
    if let Some(path) = &a.trace {
        let traces: Vec<Vec<f64>> = trained.runs.iter().map(|r| r.trace.clone()).collect();
        write_trace(path, &traces)?;
    }
    let objective: f64 = trained.runs.iter().map(|r| r.objective).sum();
    println!(
        "trained {} model: V={} D={} k={} m={} objective={objective:.6e} -> {}",
        cfg.mode,
        cfg.vocab_size,
        cfg.dim,
        cfg.k,
        cfg.m,
        a.out.display()
    );
    Ok(())
}

fn train_sg_cmd(a: TrainSgArgs) -> CmdResult {
    check_kmeans(&a.kmeans)?;
    if a.k == 0 {
        return Err(Failure::Usage("--k must be >= 1".into()));
    }
    let e = load_embeddings(&a.input)?;
    let params = KmeansParams {
        k: a.k,
        max_iters: a.kmeans.max_iters,
        tol: a.kmeans.tol,
        seed: a.kmeans.seed,
    };
    let sg = train_sg(&e, &params)?;
    sg.save(&a.out)?;
    println!(
        "trained SG model: V={} D={} k_sg={} objective={:.6e} -> {}",
        sg.vocab_size(),
        sg.dim(),
        sg.k_sg(),
        sg.objective(),
        a.out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct IdsRecord<'a> {
    token: usize,
    ids: &'a [u32],
}

fn ids(a: IdsArgs) -> CmdResult {
    let model = AsgModel::load(&a.model)?;
    let tokens: Vec<usize> = match a.token {
        Some(t) => {
            model.concept_ids(t)?;
            vec![t]
        }
        None => (0..model.vocab_size()).collect(),
    };
    let records = tokens
        .iter()
        .map(|&t| {
            Ok(IdsRecord {
                token: t,
                ids: model.concept_ids(t)?,
            })
        })
        .collect::<Result<Vec<_>, AsgError>>()?;
    emit(a.format, &records, || {
        let rows: Vec<Vec<String>> = records
            .iter()
            .map(|r| {
                vec![
                    r.token.to_string(),
                    r.ids
                        .iter()
                        .map(u32::to_string)
                        .collect::<Vec<_>>()
                        .join(" "),
                ]
            })
            .collect();
        table(&["token", "concept_ids"], &rows)
    })?;
    Ok(())
}

fn reconstruct(a: ReconstructArgs) -> CmdResult {
    let model = AsgModel::load(&a.model)?;
    if let Some(t) = a.token {
        let row = model.reconstruct(t)?;
        #[derive(Serialize)]
        struct Row {
            token: usize,
            values: Vec<f32>,
        }
        let rec = Row {
            token: t,
            values: row,
        };
        emit(a.format, std::slice::from_ref(&rec), || {
            let cells: Vec<String> = rec.values.iter().map(|v| v.to_string()).collect();
            format!("{}\n", cells.join(","))
        })?;
        return Ok(());
    }
    let out = a.out.expect("clap requires --out without --token");
    save_embeddings(&model.reconstruct_all(), &out)?;
    println!(
        "wrote {}x{} reconstruction to {}",
        model.vocab_size(),
        model.dim(),
        out.display()
    );
    Ok(())
}

fn report_rows(r: &CompressionReport) -> Vec<Vec<String>> {
    let kv = |k: &str, v: String| vec![k.to_string(), v];
    vec![
        kv("mode", r.mode.to_string()),
        kv("vocab_size", grouped(r.vocab_size as u64)),
        kv("dim", r.dim.to_string()),
        kv("k", r.k.to_string()),
        kv("m", r.m.to_string()),
        kv(
            "codebook_shape",
            format!(
                "({}, {})",
                grouped(r.codebook_shape.0 as u64),
                r.codebook_shape.1
            ),
        ),
        kv("original_params", grouped(r.original_params)),
        kv("asg_params", grouped(r.asg_params)),
        kv(
            "embedding_ratio",
            format!("{} ({:.2}%)", r.embedding_ratio, 100.0 * r.embedding_ratio),
        ),
        kv("mapping_bits_per_id", r.mapping_bits_per_id.to_string()),
        kv("mapping_bytes", grouped(r.mapping_bytes)),
        kv(
            "mapping_overhead_ratio",
            format!(
                "{:.6} ({:.2}%)",
                r.mapping_overhead_ratio,
                100.0 * r.mapping_overhead_ratio
            ),
        ),
    ]
}

fn report(a: ReportArgs) -> CmdResult {
    let r = match &a.model {
        Some(path) => AsgModel::load(path)?.param_report(),
        None => {
            let (k, m, mode) = resolve_shape(&a.shape)?;
            let (v, d) = match (a.v, a.d) {
                (Some(v), Some(d)) => (v, d),
                _ => {
                    return Err(Failure::Usage(
                        "report needs --model, or --v and --d with a shape".into(),
                    ))
                }
            };
            let cfg = AsgConfig::new(v, d, k, m, mode);
            cfg.validate()?;
            CompressionReport::from_config(&cfg)
        }
    };
    emit(a.format, std::slice::from_ref(&r), || {
        table(&["field", "value"], &report_rows(&r))
    })?;
    Ok(())
}

fn neighbors(a: NeighborsArgs) -> CmdResult {
    let model = AsgModel::load(&a.model)?;
    let vocab = load_vocab(&a.vocab)?;
    let original = a.input.as_ref().map(load_embeddings).transpose()?;
    let r = segment_neighbors(
        &model,
        &vocab,
        original.as_ref(),
        &a.token,
        a.segment,
        a.limit,
    )?;
    emit(a.format, std::slice::from_ref(&r), || {
        let rows: Vec<Vec<String>> = r
            .co_clustered
            .iter()
            .enumerate()
            .map(|(rank, f)| {
                vec![
                    (rank + 1).to_string(),
                    f.token.clone(),
                    f.index.to_string(),
                    format!("{:.6}", f.distance),
                ]
            })
            .collect();
        format!(
            "token {:?} segment {} concept_id {} ({} tokens share it)\n{}",
            r.query_token,
            r.segment,
            r.concept_id,
            r.group_size,
            table(&["rank", "token", "index", "distance"], &rows)
        )
    })?;
    Ok(())
}

#[derive(Serialize)]
struct TopLogit {
    hidden: usize,
    rank: usize,
    token: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    text: Option<String>,
    logit: f64,
}

fn logits(a: LogitsArgs) -> CmdResult {
    let model = AsgModel::load(&a.model)?;
    let hidden = load_embeddings(&a.hidden)?;
    let vocab = a.vocab.as_ref().map(load_vocab).transpose()?;
    if let Some(v) = &vocab {
        if v.len() != model.vocab_size() {
            return Err(AsgError::Shape(format!(
                "vocabulary has {} tokens, model has {}",
                v.len(),
                model.vocab_size()
            ))
            .into());
        }
    }
    let mut all = Vec::with_capacity(hidden.rows() * model.vocab_size());
    let mut top = Vec::new();
    for (h, row) in hidden.iter_rows().enumerate() {
        let scores = model.logits_all(&HiddenState::new(row.to_vec())?)?;
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&x, &y| scores[y].total_cmp(&scores[x]).then(x.cmp(&y)));
        for (rank, &t) in order.iter().take(a.top).enumerate() {
            top.push(TopLogit {
                hidden: h,
                rank: rank + 1,
                token: t,
                text: vocab.as_ref().and_then(|v| v.token(t)).map(str::to_owned),
                logit: scores[t],
            });
        }
        all.extend(scores.iter().map(|&s| s as f32));
    }
    if let Some(out) = &a.out {
        save_embeddings(
            &EmbeddingMatrix::new(hidden.rows(), model.vocab_size(), all)?,
            out,
        )?;
    }
    emit(a.format, &top, || {
        let rows: Vec<Vec<String>> = top
            .iter()
            .map(|r| {
                vec![
                    r.hidden.to_string(),
                    r.rank.to_string(),
                    r.text.clone().unwrap_or_else(|| r.token.to_string()),
                    format!("{:.6}", r.logit),
                ]
            })
            .collect();
        table(&["hidden", "rank", "token", "logit"], &rows)
    })?;
    Ok(())
}

#[derive(Serialize)]
struct CompareRecord {
    method: &'static str,
    k: usize,
    params: u64,
    #[serde(flatten)]
    stats: ErrorStats,
}

fn compare(a: CompareArgs) -> CmdResult {
    let shape = resolve_shape(&a.shape)?;
    check_kmeans(&a.kmeans)?;
    let e = load_embeddings(&a.input)?;
    let cfg = asg_config(&e, shape, &a.kmeans);
    let model = train_asg_detailed(&e, &cfg)?.model;
    let asg_stats = quantization_error(&e, &model.reconstruct_all(), Some(cfg.m))?;
    let k_sg = matched_budget_k(&cfg);
    let sg = train_sg(
        &e,
        &KmeansParams {
            k: k_sg,
            max_iters: cfg.max_iters,
            tol: cfg.tol,
            seed: cfg.seed,
        },
    )?;
    let sg_stats = quantization_error(&e, &sg.reconstruct_all(), None)?;
    let records = [
        CompareRecord {
            method: "asg",
            k: cfg.k,
            params: model.param_report().asg_params,
            stats: asg_stats,
        },
        CompareRecord {
            method: "sg",
            k: k_sg,
            params: (k_sg * e.cols()) as u64,
            stats: sg_stats,
        },
    ];
    emit(a.format, &records, || {
        let rows: Vec<Vec<String>> = records
            .iter()
            .map(|r| {
                vec![
                    r.method.to_string(),
                    r.k.to_string(),
                    grouped(r.params),
                    format!("{:.6e}", r.stats.total_mse),
                    format!("{:.6e}", r.stats.max_row_error),
                    r.stats.worst_token.to_string(),
                ]
            })
            .collect();
        table(
            &[
                "method",
                "k",
                "params",
                "total_mse",
                "max_row_error",
                "worst_token",
            ],
            &rows,
        )
    })?;
    Ok(())
}

fn read_labels(path: &Path) -> Result<Vec<usize>, AsgError> {
    let text = String::from_utf8(fs::read(path)?)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim().parse::<usize>().map_err(|e| AsgError::Csv {
                line: i + 1,
                msg: format!("label {l:?}: {e}"),
            })
        })
        .collect()
}

fn probe(a: ProbeArgs) -> CmdResult {
    let quantized_source = [&a.model, &a.sg, &a.reconstructed]
        .iter()
        .filter(|o| o.is_some())
        .count();
    if quantized_source != 1 {
        return Err(Failure::Usage(
            "probe needs exactly one of --model, --sg, --reconstructed".into(),
        ));
    }
    let e = load_embeddings(&a.input)?;
    let labels = read_labels(&a.labels)?;
    let reconstructed = if let Some(p) = &a.model {
        AsgModel::load(p)?.reconstruct_all()
    } else if let Some(p) = &a.sg {
        asg_core::SgModel::load(p)?.reconstruct_all()
    } else {
        load_embeddings(a.reconstructed.as_ref().unwrap())?
    };
    let r = probe_eval(&e, &reconstructed, &labels, a.split_seed)?;
    emit(a.format, std::slice::from_ref(&r), || {
        table(
            &["base_accuracy", "quantized_accuracy", "relative"],
            &[vec![
                format!("{:.4}", r.base_accuracy),
                format!("{:.4}", r.quantized_accuracy),
                format!("{:.4}", r.relative),
            ]],
        )
    })?;
    io::stdout().flush()?;
    Ok(())
}
