use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use cdcl_core::graph::{build_doc_graph, delta_sweep, RelationScheme};
use cdcl_core::interchange::{load_embeddings, load_instances, EmbeddingTable, Instance, Label};
use cdcl_core::metrics::{ClassificationReport, TextOverlap};
use cdcl_core::model::{prepare_group, toy_gradient_check, ParameterStore};
use cdcl_core::train::{
    evaluate, group_instances, load_predictions, score_predictions, train, write_predictions, ExplanationSummary,
    TrainOutputs,
};
use serde::Serialize;
use serde_json::json;

use crate::{
    BuildGraphArgs, CliError, Command, DeltaSweepArgs, EmbeddingArgs, EmbeddingSource, EvalArgs, ExplainArgs,
    GradcheckArgs, MetricsArgs, RunConfig, TrainArgs, ValidateArgs,
};

type Result<T> = std::result::Result<T, CliError>;

pub(crate) fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Validate(a) => validate(a),
        Command::BuildGraph(a) => build_graph(a),
        Command::DeltaSweep(a) => sweep(a),
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => eval(a),
        Command::Explain(a) => explain(a),
        Command::Gradcheck(a) => gradcheck(a),
        Command::Metrics(a) => metrics(a),
    }
}

fn echo_config(command: &str, config: impl Serialize) {
    let v = json!({ "command": command, "config": config });
    eprintln!("config: {v}");
}

fn write_out(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| {
            CliError::Core(cdcl_core::error::Error::Io { path: p.to_path_buf(), source: e })
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_table(args: &EmbeddingArgs, file: Option<&Path>, data: &[Instance]) -> Result<EmbeddingTable> {
    match args.embeddings {
        EmbeddingSource::Hash => Ok(EmbeddingTable::from_hash(data, args.dim, args.hash_seed)?),
        EmbeddingSource::File => {
            let path = file.ok_or_else(|| CliError::Usage("--embeddings file needs --embeddings-file".into()))?;
            Ok(load_embeddings(path, data)?)
        }
    }
}

fn validate(a: ValidateArgs) -> Result<()> {
    echo_config("validate", json!({ "data": a.data, "embeddings_file": a.embeddings_file }));
    let data = load_instances(&a.data)?;
    let groups = group_instances(&data);
    let mut labels: BTreeMap<&str, usize> = BTreeMap::new();
    let mut langs: BTreeMap<&str, usize> = BTreeMap::new();
    for inst in &data {
        *labels.entry(inst.label.name()).or_default() += 1;
        for l in [&inst.doc1.lang, &inst.doc2.lang, &inst.hypothesis.lang] {
            *langs.entry(l.as_str()).or_default() += 1;
        }
    }
    let edus: usize = groups
        .iter()
        .map(|g| {
            let i = &data[g.members[0]];
            i.doc1.edu_count() + i.doc2.edu_count()
        })
        .sum();
    let mut summary = json!({
        "instances": data.len(),
        "premise_groups": groups.len(),
        "complete_groups": groups.iter().filter(|g| g.complete).count(),
        "labels": labels,
        "languages": langs,
        "premise_edus": edus,
    });
    if let Some(path) = &a.embeddings_file {
        let table = load_embeddings(path, &data)?;
        summary["embedding_dim"] = json!(table.dim());
    }
    println!("{}", serde_json::to_string_pretty(&summary).expect("plain JSON"));
    Ok(())
}

fn build_graph(a: BuildGraphArgs) -> Result<()> {
    echo_config("build-graph", json!({ "data": a.data, "id": a.id, "embeddings": a.embeddings, "fuse": a.fuse }));
    let data = load_instances(&a.data)?;
    let idx = match &a.id {
        Some(id) => data
            .iter()
            .position(|i| &i.id == id)
            .ok_or_else(|| CliError::Usage(format!("no instance with id {id}")))?,
        None => 0,
    };
    let inst = data.get(idx).ok_or_else(|| CliError::Usage("instance file is empty".into()))?;
    let table = load_table(&a.embeddings, a.embeddings.embeddings_file.as_deref(), std::slice::from_ref(inst))?;
    let group = prepare_group(std::slice::from_ref(inst), &[0], &table, a.fuse.options())?;
    let dump = json!({
        "id": inst.id,
        "group_id": inst.group_id,
        "doc1": group.doc_graphs[0].dump(),
        "doc2": group.doc_graphs[1].dump(),
        "fused": group.fused_graph.dump(),
    });
    write_out(a.out.as_deref(), &format!("{}\n", serde_json::to_string_pretty(&dump).expect("plain JSON")))
}

fn sweep(a: DeltaSweepArgs) -> Result<()> {
    echo_config(
        "delta-sweep",
        json!({ "data": a.data, "deltas": a.deltas, "leaves_only": a.leaves_only, "embeddings": a.embeddings }),
    );
    let data = load_instances(&a.data)?;
    let table = load_table(&a.embeddings, a.embeddings.embeddings_file.as_deref(), &data)?;
    let mut totals = vec![0usize; a.deltas.len()];
    for g in group_instances(&data) {
        let inst = &data[g.members[0]];
        let emb = table.for_instance(inst)?;
        let g1 = build_doc_graph(&inst.doc1.edus, &inst.doc1.tree, &emb.doc1, RelationScheme::Full)?;
        let g2 = build_doc_graph(&inst.doc2.edus, &inst.doc2.tree, &emb.doc2, RelationScheme::Full)?;
        for (t, (_, n)) in totals.iter_mut().zip(delta_sweep(&g1, &g2, &a.deltas, a.leaves_only)?) {
            *t += n;
        }
    }
    let mut csv = String::from("delta,lexical_edges\n");
    for (d, n) in a.deltas.iter().zip(&totals) {
        let _ = writeln!(csv, "{d},{n}");
    }
    write_out(a.out.as_deref(), &csv)
}

fn train_cmd(a: TrainArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Core(cdcl_core::error::Error::Io { path: p.clone(), source: e }))?;
            toml::from_str::<RunConfig>(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", p.display())))?
        }
        None => RunConfig::default(),
    };
    cfg.apply(&a.hyper);

    let data = load_instances(&a.data)?;
    let table = load_table(&a.embeddings, a.embeddings.embeddings_file.as_deref(), &data)?;
    cfg.model.d_in = table.dim();
    echo_config(
        "train",
        json!({
            "data": a.data, "dev": a.dev, "embeddings": a.embeddings,
            "model": cfg.model, "train": cfg.train,
            "checkpoint": a.checkpoint, "log": a.log,
        }),
    );
    cfg.model.validate()?;

    let dev = match &a.dev {
        Some(p) => {
            let d = load_instances(p)?;
            let t = load_table(&a.embeddings, a.dev_embeddings_file.as_deref(), &d)?;
            Some((d, t))
        }
        None => None,
    };
    let outputs = TrainOutputs { checkpoint: Some(a.checkpoint.clone()), log: Some(a.log.clone()) };
    let (_, report) = train(
        &data,
        &table,
        &cfg.model,
        &cfg.train,
        dev.as_ref().map(|(d, t)| (d.as_slice(), t)),
        &outputs,
    )?;
    let summary = json!({
        "epochs_run": report.history.len(),
        "best_epoch": report.best_epoch,
        "best_dev_macro_f1": report.best_dev_macro_f1,
        "early_stopped": report.early_stopped,
        "wall_clock_secs": report.wall_clock_secs,
        "checkpoint": a.checkpoint,
        "log": a.log,
    });
    println!("{}", serde_json::to_string_pretty(&summary).expect("plain JSON"));
    Ok(())
}

fn summary_rows(
    classification: &ClassificationReport,
    explanation: &ExplanationSummary,
    triplet: Option<f64>,
) -> Vec<(String, f64)> {
    let mut rows = vec![
        ("accuracy".to_string(), classification.accuracy),
        ("macro_precision".into(), classification.macro_avg.precision),
        ("macro_recall".into(), classification.macro_avg.recall),
        ("macro_f1".into(), classification.macro_avg.f1),
        ("micro_f1".into(), classification.micro_f1),
        ("weighted_f1".into(), classification.weighted_f1),
    ];
    for (l, prf) in Label::ALL.iter().zip(&classification.per_class) {
        let name = l.name().to_lowercase();
        rows.push((format!("{name}_precision"), prf.precision));
        rows.push((format!("{name}_recall"), prf.recall));
        rows.push((format!("{name}_f1"), prf.f1));
    }
    if let Some(t) = triplet {
        rows.push(("triplet_ordering".into(), t));
    }
    let TextOverlap { rouge1, rouge2, rouge_l, bleu } = explanation.overlap;
    rows.push(("explanation_jaccard".into(), explanation.mean_jaccard));
    rows.push(("explanation_rouge1".into(), rouge1));
    rows.push(("explanation_rouge2".into(), rouge2));
    rows.push(("explanation_rouge_l".into(), rouge_l));
    for (n, b) in bleu.iter().enumerate() {
        rows.push((format!("explanation_bleu{}", n + 1), *b));
    }
    rows
}

fn print_summary(rows: &[(String, f64)], classification: &ClassificationReport) {
    for (k, v) in rows {
        println!("{k:<24} {v:.4}");
    }
    println!("confusion (rows gold, columns predicted; Entailment, Neutral, Contradiction)");
    for row in &classification.confusion {
        println!("  {}", row.iter().map(|c| format!("{c:>6}")).collect::<String>());
    }
}

fn write_csv(path: &Path, rows: &[(String, f64)]) -> Result<()> {
    let mut csv = String::from("metric,value\n");
    for (k, v) in rows {
        let _ = writeln!(csv, "{k},{v}");
    }
    write_out(Some(path), &csv)
}

fn eval(a: EvalArgs) -> Result<()> {
    echo_config(
        "eval",
        json!({
            "data": a.data, "checkpoint": a.checkpoint, "embeddings": a.embeddings,
            "fuse": a.fuse, "extract": a.extract,
        }),
    );
    let data = load_instances(&a.data)?;
    let store = ParameterStore::load(&a.checkpoint, None)?;
    let table = load_table(&a.embeddings, a.embeddings.embeddings_file.as_deref(), &data)?;
    let report = evaluate(&store, &data, &table, a.fuse.options(), a.extract.mode())?;
    let rows = summary_rows(&report.classification, &report.explanation, report.triplet_ordering);
    print_summary(&rows, &report.classification);
    if let Some(p) = &a.dump_predictions {
        write_predictions(p, &report.predictions)?;
    }
    if let Some(p) = &a.report {
        write_out(Some(p), &format!("{}\n", serde_json::to_string_pretty(&report).expect("plain JSON")))?;
    }
    if let Some(p) = &a.csv {
        write_csv(p, &rows)?;
    }
    Ok(())
}

fn explain(a: ExplainArgs) -> Result<()> {
    echo_config(
        "explain",
        json!({
            "data": a.data, "checkpoint": a.checkpoint, "embeddings": a.embeddings,
            "fuse": a.fuse, "extract": a.extract,
        }),
    );
    let data = load_instances(&a.data)?;
    let store = ParameterStore::load(&a.checkpoint, None)?;
    let table = load_table(&a.embeddings, a.embeddings.embeddings_file.as_deref(), &data)?;
    let report = evaluate(&store, &data, &table, a.fuse.options(), a.extract.mode())?;
    let mut out = String::new();
    for p in &report.predictions {
        let line = json!({
            "id": p.id,
            "pred": p.pred.name(),
            "probabilities": p.probabilities,
            "selected_edus": { "doc1": p.selected_edus.doc1, "doc2": p.selected_edus.doc2 },
            "leaf_scores": { "doc1": p.leaf_scores[0], "doc2": p.leaf_scores[1] },
            "selected_text": { "doc1": p.selected_text[0], "doc2": p.selected_text[1] },
        });
        out.push_str(&line.to_string());
        out.push('\n');
    }
    write_out(a.out.as_deref(), &out)
}

fn gradcheck(a: GradcheckArgs) -> Result<()> {
    echo_config("gradcheck", json!({ "seed": a.seed, "eps": a.eps, "tolerance": a.tolerance }));
    let check = toy_gradient_check(a.seed, a.eps)?;
    let r = &check.report;
    println!(
        "max relative error {:.3e} over {} coordinates (model seed {}, losses exp {:.4} cls {:.4} trip {:.4})",
        r.max_rel_error, r.coordinates, check.model_seed, check.losses[0], check.losses[1], check.losses[2]
    );
    if r.max_rel_error < a.tolerance {
        Ok(())
    } else {
        Err(CliError::Numeric(format!(
            "gradient check failed: {:.3e} >= {:.1e} at parameter/coordinate {:?} (analytic {}, numeric {})",
            r.max_rel_error, a.tolerance, r.worst, r.analytic, r.numeric
        )))
    }
}

fn metrics(a: MetricsArgs) -> Result<()> {
    echo_config("metrics", json!({ "predictions": a.predictions, "gold": a.gold }));
    let data = load_instances(&a.gold)?;
    let preds = load_predictions(&a.predictions, &data)?;
    let (classification, explanation) = score_predictions(&data, &preds)?;
    let rows = summary_rows(&classification, &explanation, None);
    print_summary(&rows, &classification);
    if let Some(p) = &a.csv {
        write_csv(p, &rows)?;
    }
    Ok(())
}
