use std::collections::{BTreeSet, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    Document, DocSlot, EduSpan, Explanation, Hypothesis, Instance, Label, RelationLabel,
    RstTreeSpec, TreeTuple,
};
use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
struct RawEdu {
    start: usize,
    end: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawDocument {
    lang: String,
    text: String,
    edus: Vec<RawEdu>,
    #[serde(default)]
    tree: Vec<(usize, usize, usize, String, String)>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawHypothesis {
    text: String,
    lang: String,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct RawExplanation {
    #[serde(default)]
    doc1: Vec<usize>,
    #[serde(default)]
    doc2: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawInstance {
    id: String,
    group_id: String,
    doc1: RawDocument,
    doc2: RawDocument,
    hypothesis: RawHypothesis,
    label: String,
    #[serde(default)]
    explanation: RawExplanation,
}

/// Resolves one side of a tree tuple. Parsers in the DM-RST family mark the
/// nucleus side as `span`; it takes the relation of its sibling.
fn resolve_relations(r_st: &str, r_tu: &str) -> Result<(RelationLabel, RelationLabel), String> {
    let is_span = |s: &str| s.trim().eq_ignore_ascii_case("span");
    let parse = |s: &str| s.parse::<RelationLabel>();
    match (is_span(r_st), is_span(r_tu)) {
        (true, true) => Err("both sides of a tree tuple are labelled span".into()),
        (true, false) => {
            let r = parse(r_tu)?;
            Ok((r, r))
        }
        (false, true) => {
            let r = parse(r_st)?;
            Ok((r, r))
        }
        (false, false) => Ok((parse(r_st)?, parse(r_tu)?)),
    }
}

fn build_document(raw: RawDocument, slot: DocSlot) -> Result<Document, String> {
    let field = slot.name();
    if raw.edus.is_empty() {
        return Err(format!("{field}.edus: document must have at least one EDU"));
    }
    // byte offset of every char boundary, plus the end
    let boundaries: Vec<usize> = raw
        .text
        .char_indices()
        .map(|(b, _)| b)
        .chain(std::iter::once(raw.text.len()))
        .collect();
    let n_chars = boundaries.len() - 1;

    let mut edus = Vec::with_capacity(raw.edus.len());
    let mut prev_end = 0;
    for (i, e) in raw.edus.iter().enumerate() {
        let ordinal = i + 1;
        if e.start >= e.end {
            return Err(format!("{field}.edus[{ordinal}]: empty span [{}, {})", e.start, e.end));
        }
        if e.end > n_chars {
            return Err(format!(
                "{field}.edus[{ordinal}]: span end {} beyond text length {n_chars}",
                e.end
            ));
        }
        if e.start < prev_end {
            return Err(format!(
                "{field}.edus[{ordinal}]: span starts at {} before previous end {prev_end}",
                e.start
            ));
        }
        prev_end = e.end;
        edus.push(EduSpan {
            index: ordinal,
            start: e.start,
            end: e.end,
            text: raw.text[boundaries[e.start]..boundaries[e.end]].to_string(),
        });
    }

    let mut tuples = Vec::with_capacity(raw.tree.len());
    for (s, t, u, r_st, r_tu) in &raw.tree {
        let (r_st, r_tu) =
            resolve_relations(r_st, r_tu).map_err(|m| format!("{field}.tree: {m}"))?;
        tuples.push(TreeTuple {
            s: *s,
            t: *t,
            u: *u,
            r_st,
            r_tu,
        });
    }
    let tree = RstTreeSpec { tuples };
    tree.validate(edus.len())
        .map_err(|m| format!("{field}.tree: {m}"))?;

    Ok(Document {
        lang: raw.lang,
        text: raw.text,
        edus,
        tree,
    })
}

fn build_instance(raw: RawInstance) -> Result<Instance, String> {
    let label: Label = raw.label.parse()?;
    let doc1 = build_document(raw.doc1, DocSlot::Doc1)?;
    let doc2 = build_document(raw.doc2, DocSlot::Doc2)?;
    let check = |ordinals: Vec<usize>, doc: &Document, slot: DocSlot| -> Result<BTreeSet<usize>, String> {
        let mut set = BTreeSet::new();
        for o in ordinals {
            if o < 1 || o > doc.edu_count() {
                return Err(format!(
                    "explanation.{}: ordinal {o} references no EDU (document has {})",
                    slot.name(),
                    doc.edu_count()
                ));
            }
            set.insert(o);
        }
        Ok(set)
    };
    let explanation = Explanation {
        doc1: check(raw.explanation.doc1, &doc1, DocSlot::Doc1)?,
        doc2: check(raw.explanation.doc2, &doc2, DocSlot::Doc2)?,
    };
    Ok(Instance {
        id: raw.id,
        group_id: raw.group_id,
        doc1,
        doc2,
        hypothesis: Hypothesis {
            text: raw.hypothesis.text,
            lang: raw.hypothesis.lang,
        },
        label,
        explanation,
    })
}

/// Parses and validates one JSON line. `line` is the 1-based line number used in errors.
pub fn parse_instance_line(text: &str, line: usize) -> Result<Instance> {
    let raw: RawInstance = serde_json::from_str(text).map_err(|e| Error::Parse {
        line,
        message: e.to_string(),
    })?;
    let id = raw.id.clone();
    build_instance(raw).map_err(|m| Error::validation(format!("line {line} (id {id})"), m))
}

/// Reads a line-delimited instance file. Blank lines are skipped; ids must be unique.
pub fn load_instances(path: impl AsRef<Path>) -> Result<Vec<Instance>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    let mut ids = HashSet::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let inst = parse_instance_line(&line, i + 1)?;
        if !ids.insert(inst.id.clone()) {
            return Err(Error::validation(
                format!("line {} (id {})", i + 1, inst.id),
                "id: duplicate instance id",
            ));
        }
        out.push(inst);
    }
    Ok(out)
}

fn to_raw_document(doc: &Document) -> RawDocument {
    RawDocument {
        lang: doc.lang.clone(),
        text: doc.text.clone(),
        edus: doc
            .edus
            .iter()
            .map(|e| RawEdu {
                start: e.start,
                end: e.end,
            })
            .collect(),
        tree: doc
            .tree
            .tuples
            .iter()
            .map(|t| (t.s, t.t, t.u, t.r_st.name().to_string(), t.r_tu.name().to_string()))
            .collect(),
    }
}

impl Instance {
    pub fn to_json_line(&self) -> String {
        let raw = RawInstance {
            id: self.id.clone(),
            group_id: self.group_id.clone(),
            doc1: to_raw_document(&self.doc1),
            doc2: to_raw_document(&self.doc2),
            hypothesis: RawHypothesis {
                text: self.hypothesis.text.clone(),
                lang: self.hypothesis.lang.clone(),
            },
            label: self.label.name().to_string(),
            explanation: RawExplanation {
                doc1: self.explanation.doc1.iter().copied().collect(),
                doc2: self.explanation.doc2.iter().copied().collect(),
            },
        };
        serde_json::to_string(&raw).expect("instance serializes")
    }
}

pub fn write_instances(path: impl AsRef<Path>, instances: &[Instance]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for inst in instances {
        writeln!(w, "{}", inst.to_json_line()).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
