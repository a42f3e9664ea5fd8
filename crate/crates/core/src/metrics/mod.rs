//! Classification, text-overlap and agreement metrics.

use std::collections::{BTreeSet, HashMap};
use std::hash::Hash;

use serde::Serialize;
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    fn from_pr(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self { precision, recall, f1 }
    }

    fn zero() -> Self {
        Self { precision: 0.0, recall: 0.0, f1: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassificationReport {
    /// `confusion[gold][pred]`.
    pub confusion: Vec<Vec<usize>>,
    pub per_class: Vec<Prf>,
    pub support: Vec<usize>,
    pub macro_avg: Prf,
    pub micro_f1: f64,
    pub weighted_f1: f64,
    pub accuracy: f64,
}

/// Metrics over class indices `0..classes`.
pub fn classification_metrics(preds: &[usize], golds: &[usize], classes: usize) -> Result<ClassificationReport> {
    if preds.is_empty() {
        return Err(Error::Contract("classification metrics over no predictions".into()));
    }
    if preds.len() != golds.len() {
        return Err(Error::Contract(format!(
            "{} predictions for {} gold labels",
            preds.len(),
            golds.len()
        )));
    }
    if let Some(bad) = preds.iter().chain(golds).find(|&&c| c >= classes) {
        return Err(Error::Contract(format!("class {bad} outside 0..{classes}")));
    }
    let mut confusion = vec![vec![0usize; classes]; classes];
    for (&p, &g) in preds.iter().zip(golds) {
        confusion[g][p] += 1;
    }
    let n = preds.len() as f64;
    let mut per_class = Vec::with_capacity(classes);
    let mut support = Vec::with_capacity(classes);
    for c in 0..classes {
        let tp = confusion[c][c] as f64;
        let predicted: usize = (0..classes).map(|g| confusion[g][c]).sum();
        let actual: usize = confusion[c].iter().sum();
        let p = if predicted > 0 { tp / predicted as f64 } else { 0.0 };
        let r = if actual > 0 { tp / actual as f64 } else { 0.0 };
        per_class.push(Prf::from_pr(p, r));
        support.push(actual);
    }
    let k = classes as f64;
    let macro_avg = Prf {
        precision: per_class.iter().map(|m| m.precision).sum::<f64>() / k,
        recall: per_class.iter().map(|m| m.recall).sum::<f64>() / k,
        f1: per_class.iter().map(|m| m.f1).sum::<f64>() / k,
    };
    let correct: usize = (0..classes).map(|c| confusion[c][c]).sum();
    let accuracy = correct as f64 / n;
    let weighted_f1 = per_class
        .iter()
        .zip(&support)
        .map(|(m, &s)| m.f1 * s as f64)
        .sum::<f64>()
        / n;
    Ok(ClassificationReport {
        confusion,
        per_class,
        support,
        macro_avg,
        // single-label: every miss is one FP and one FN, so micro P = R = accuracy
        micro_f1: accuracy,
        weighted_f1,
        accuracy,
    })
}

fn is_cjk(c: char) -> bool {
    matches!(c as u32,
        0x3040..=0x30FF | 0x3400..=0x4DBF | 0x4E00..=0x9FFF | 0xAC00..=0xD7AF | 0xF900..=0xFAFF | 0x20000..=0x2FFFF)
}

/// NFC, lowercase, alphanumeric runs as tokens, each CJK character its own token,
/// whitespace and punctuation dropped.
pub fn tokenize(text: &str) -> Vec<String> {
    let norm: String = text.nfc().collect::<String>().to_lowercase();
    let mut out = Vec::new();
    let mut cur = String::new();
    for c in norm.chars() {
        if is_cjk(c) {
            if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
            out.push(c.to_string());
        } else if c.is_alphanumeric() || (!cur.is_empty() && is_combining(c)) {
            cur.push(c);
        } else if !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

fn is_combining(c: char) -> bool {
    // marks that survive NFC (e.g. in Indic scripts) stay inside their word
    matches!(c as u32, 0x0300..=0x036F | 0x0900..=0x0DFF)
}

fn ngram_counts<T: Eq + Hash + Clone>(tokens: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut m = HashMap::new();
    if n > 0 && tokens.len() >= n {
        for w in tokens.windows(n) {
            *m.entry(w).or_insert(0) += 1;
        }
    }
    m
}

fn clipped_matches<T: Eq + Hash + Clone>(cand: &HashMap<&[T], usize>, reference: &HashMap<&[T], usize>) -> usize {
    cand.iter()
        .map(|(g, &c)| c.min(reference.get(g).copied().unwrap_or(0)))
        .sum()
}

/// ROUGE-n: clipped n-gram overlap, precision over candidate n-grams, recall over reference n-grams.
pub fn rouge_n<T: Eq + Hash + Clone>(cand: &[T], reference: &[T], n: usize) -> Result<Prf> {
    if reference.is_empty() {
        return Err(Error::Contract("ROUGE with an empty reference".into()));
    }
    let rc = ngram_counts(reference, n);
    let cc = ngram_counts(cand, n);
    let r_total: usize = rc.values().sum();
    let c_total: usize = cc.values().sum();
    if r_total == 0 {
        // both too short for n-grams: fall back to exact equality
        return Ok(if c_total == 0 && cand == reference { Prf::from_pr(1.0, 1.0) } else { Prf::zero() });
    }
    if c_total == 0 {
        return Ok(Prf::zero());
    }
    let m = clipped_matches(&cc, &rc) as f64;
    Ok(Prf::from_pr(m / c_total as f64, m / r_total as f64))
}

pub fn lcs_len<T: Eq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { cur[j].max(prev[j + 1]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// ROUGE-L from the longest common subsequence.
pub fn rouge_l<T: Eq>(cand: &[T], reference: &[T]) -> Result<Prf> {
    if reference.is_empty() {
        return Err(Error::Contract("ROUGE with an empty reference".into()));
    }
    if cand.is_empty() {
        return Ok(Prf::zero());
    }
    let l = lcs_len(cand, reference) as f64;
    Ok(Prf::from_pr(l / cand.len() as f64, l / reference.len() as f64))
}

/// Epsilon substituted for a zero match count at orders ≥ 2.
pub const BLEU_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BleuScore {
    /// Modified precision per order `1..=max_n`; `None` where the candidate has no n-grams.
    pub precisions: Vec<Option<f64>>,
    pub brevity_penalty: f64,
    /// Cumulative BLEU-1 ..= BLEU-max_n.
    pub cumulative: Vec<f64>,
}

impl BleuScore {
    pub fn bleu(&self, n: usize) -> f64 {
        self.cumulative[n - 1]
    }
}

pub fn bleu<T: Eq + Hash + Clone>(cand: &[T], reference: &[T], max_n: usize) -> BleuScore {
    if cand.is_empty() {
        log::warn!("BLEU of an empty candidate is 0");
        return BleuScore {
            precisions: vec![None; max_n],
            brevity_penalty: 0.0,
            cumulative: vec![0.0; max_n],
        };
    }
    let bp = if cand.len() < reference.len() {
        (1.0 - reference.len() as f64 / cand.len() as f64).exp()
    } else {
        1.0
    };
    let mut precisions = Vec::with_capacity(max_n);
    for n in 1..=max_n {
        let cc = ngram_counts(cand, n);
        let total: usize = cc.values().sum();
        if total == 0 {
            precisions.push(None);
            continue;
        }
        let m = clipped_matches(&cc, &ngram_counts(reference, n));
        let p = if m == 0 && n >= 2 { BLEU_EPSILON / total as f64 } else { m as f64 / total as f64 };
        precisions.push(Some(p));
    }
    let mut cumulative = Vec::with_capacity(max_n);
    for n in 1..=max_n {
        let used: Vec<f64> = precisions[..n].iter().flatten().copied().collect();
        let score = if used.contains(&0.0) {
            0.0
        } else {
            let log_mean = used.iter().map(|p| p.ln()).sum::<f64>() / used.len() as f64;
            bp * log_mean.exp()
        };
        cumulative.push(score);
    }
    BleuScore { precisions, brevity_penalty: bp, cumulative }
}

/// Cohen's κ between two label sequences. When chance agreement is 1 the
/// statistic is undefined; it is reported as 1 on perfect agreement and 0 otherwise.
pub fn cohen_kappa<T: Eq + Hash + Clone>(a: &[T], b: &[T]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Contract(format!("κ over sequences of length {} and {}", a.len(), b.len())));
    }
    if a.is_empty() {
        return Err(Error::Contract("κ over empty sequences".into()));
    }
    let n = a.len() as f64;
    let p_o = a.iter().zip(b).filter(|(x, y)| x == y).count() as f64 / n;
    let mut ca: HashMap<&T, usize> = HashMap::new();
    let mut cb: HashMap<&T, usize> = HashMap::new();
    for x in a {
        *ca.entry(x).or_insert(0) += 1;
    }
    for y in b {
        *cb.entry(y).or_insert(0) += 1;
    }
    let p_e: f64 = ca
        .iter()
        .map(|(k, &c)| c as f64 / n * cb.get(k).copied().unwrap_or(0) as f64 / n)
        .sum();
    if (1.0 - p_e).abs() < 1e-15 {
        log::info!("κ with degenerate marginals (p_e = 1)");
        return Ok(if p_o == 1.0 { 1.0 } else { 0.0 });
    }
    Ok((p_o - p_e) / (1.0 - p_e))
}

/// `|a ∩ b| / |a ∪ b|`, taken as 1 when both sets are empty.
pub fn jaccard<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

fn merge(spans: &[(usize, usize)]) -> Vec<(usize, usize)> {
    let mut s: Vec<(usize, usize)> = spans.iter().copied().filter(|(a, b)| b > a).collect();
    s.sort_unstable();
    let mut out: Vec<(usize, usize)> = Vec::new();
    for (a, b) in s {
        match out.last_mut() {
            Some(last) if a <= last.1 => last.1 = last.1.max(b),
            _ => out.push((a, b)),
        }
    }
    out
}

fn mass(spans: &[(usize, usize)]) -> usize {
    spans.iter().map(|(a, b)| b - a).sum()
}

/// Character mass covered by both span lists over mass covered by either.
/// Spans are half-open `[start, end)`; both empty counts as full agreement.
pub fn span_overlap(a: &[(usize, usize)], b: &[(usize, usize)]) -> f64 {
    let (ma, mb) = (merge(a), merge(b));
    let mut inter = 0;
    let (mut i, mut j) = (0, 0);
    while i < ma.len() && j < mb.len() {
        let lo = ma[i].0.max(mb[j].0);
        let hi = ma[i].1.min(mb[j].1);
        if hi > lo {
            inter += hi - lo;
        }
        if ma[i].1 < mb[j].1 {
            i += 1;
        } else {
            j += 1;
        }
    }
    let union = mass(&ma) + mass(&mb) - inter;
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// ROUGE-1/2/L F1 and cumulative BLEU-1..4 of one candidate text against one reference.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct TextOverlap {
    pub rouge1: f64,
    pub rouge2: f64,
    pub rouge_l: f64,
    pub bleu: [f64; 4],
}

impl TextOverlap {
    /// `None` when the reference has no tokens.
    pub fn of_texts(candidate: &str, reference: &str) -> Option<Self> {
        let c = tokenize(candidate);
        let r = tokenize(reference);
        if r.is_empty() {
            return None;
        }
        let b = if c.is_empty() { [0.0; 4] } else {
            let s = bleu(&c, &r, 4);
            [s.bleu(1), s.bleu(2), s.bleu(3), s.bleu(4)]
        };
        Some(Self {
            rouge1: rouge_n(&c, &r, 1).ok()?.f1,
            rouge2: rouge_n(&c, &r, 2).ok()?.f1,
            rouge_l: rouge_l(&c, &r).ok()?.f1,
            bleu: b,
        })
    }

    pub fn mean(items: &[TextOverlap]) -> Self {
        if items.is_empty() {
            return Self::default();
        }
        let n = items.len() as f64;
        let mut out = Self::default();
        for it in items {
            out.rouge1 += it.rouge1 / n;
            out.rouge2 += it.rouge2 / n;
            out.rouge_l += it.rouge_l / n;
            for k in 0..4 {
                out.bleu[k] += it.bleu[k] / n;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests;
