//! Corpus BLEU, ROUGE-L and CIDEr-D over tokenized captions.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::MetricError;

/// Lowercases, removes ASCII punctuation, splits on whitespace.
pub fn tokenize(text: &str) -> Vec<String> {
    text.chars()
        .filter(|c| !c.is_ascii_punctuation())
        .collect::<String>()
        .to_lowercase()
        .split_whitespace()
        .map(str::to_string)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptionItem {
    pub candidate: Vec<String>,
    pub references: Vec<Vec<String>>,
}

impl CaptionItem {
    pub fn from_text(candidate: &str, references: &[&str]) -> Self {
        Self {
            candidate: tokenize(candidate),
            references: references.iter().map(|r| tokenize(r)).collect(),
        }
    }
}

fn check(items: &[CaptionItem]) -> Result<(), MetricError> {
    if items.is_empty() {
        return Err(MetricError::Empty);
    }
    if let Some(i) = items.iter().position(|it| it.references.is_empty()) {
        return Err(MetricError::NoReferences(i));
    }
    Ok(())
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut m = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *m.entry(w).or_insert(0) += 1;
        }
    }
    m
}

/// Corpus BLEU-1..`max_n` without smoothing.
///
/// Brevity penalty uses, per item, the reference length closest to the
/// candidate length (shorter one on ties).
pub fn bleu(items: &[CaptionItem], max_n: usize) -> Result<Vec<f64>, MetricError> {
    check(items)?;
    let mut matched = vec![0usize; max_n];
    let mut total = vec![0usize; max_n];
    let mut cand_len = 0usize;
    let mut ref_len = 0usize;

    for it in items {
        let c = it.candidate.len();
        cand_len += c;
        ref_len += it
            .references
            .iter()
            .map(Vec::len)
            .min_by_key(|&r| (r.abs_diff(c), r))
            .unwrap();
        for n in 1..=max_n {
            let cand = ngram_counts(&it.candidate, n);
            let mut max_ref: HashMap<&[String], usize> = HashMap::new();
            for r in &it.references {
                for (g, k) in ngram_counts(r, n) {
                    let e = max_ref.entry(g).or_insert(0);
                    *e = (*e).max(k);
                }
            }
            for (g, k) in cand {
                matched[n - 1] += k.min(max_ref.get(g).copied().unwrap_or(0));
                total[n - 1] += k;
            }
        }
    }

    if cand_len == 0 {
        log::warn!("all candidates are empty; BLEU is 0");
        return Ok(vec![0.0; max_n]);
    }
    let bp = if cand_len > ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / cand_len as f64).exp()
    };

    let mut scores = Vec::with_capacity(max_n);
    let mut log_sum = 0.0;
    let mut zero = false;
    for n in 0..max_n {
        if matched[n] == 0 || total[n] == 0 {
            zero = true;
        } else {
            log_sum += (matched[n] as f64 / total[n] as f64).ln();
        }
        scores.push(if zero {
            0.0
        } else {
            bp * (log_sum / (n + 1) as f64).exp()
        });
    }
    Ok(scores)
}

fn lcs(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Mean over items of the best per-reference LCS F-score.
pub fn rouge_l(items: &[CaptionItem], beta: f64) -> Result<f64, MetricError> {
    check(items)?;
    let b2 = beta * beta;
    let total: f64 = items
        .iter()
        .map(|it| {
            it.references
                .iter()
                .map(|r| {
                    let l = lcs(&it.candidate, r);
                    if l == 0 {
                        return 0.0;
                    }
                    let p = l as f64 / it.candidate.len() as f64;
                    let rec = l as f64 / r.len() as f64;
                    (1.0 + b2) * p * rec / (rec + b2 * p)
                })
                .fold(0.0, f64::max)
        })
        .sum();
    Ok(total / items.len() as f64)
}

/// Document frequencies over the reference sets, one document per item.
#[derive(Debug, Clone, Default)]
pub struct CiderIdf {
    pub doc_freq: HashMap<Vec<String>, f64>,
    /// `ln` of the number of documents.
    pub log_docs: f64,
}

impl CiderIdf {
    pub fn from_references(items: &[CaptionItem], n: usize) -> Self {
        let mut doc_freq: HashMap<Vec<String>, f64> = HashMap::new();
        for it in items {
            let mut seen: HashSet<&[String]> = HashSet::new();
            for r in &it.references {
                for k in 1..=n {
                    if r.len() >= k {
                        seen.extend(r.windows(k));
                    }
                }
            }
            for g in seen {
                *doc_freq.entry(g.to_vec()).or_insert(0.0) += 1.0;
            }
        }
        Self {
            doc_freq,
            log_docs: (items.len() as f64).ln(),
        }
    }
}

struct TfIdf {
    vecs: Vec<HashMap<Vec<String>, f64>>,
    norms: Vec<f64>,
    /// Bigram count, as in the reference CIDEr-D code.
    length: f64,
}

fn tfidf(tokens: &[String], n: usize, idf: &CiderIdf) -> TfIdf {
    let mut vecs = vec![HashMap::new(); n];
    let mut norms = vec![0.0; n];
    let mut length = 0.0;
    for k in 1..=n {
        for (g, tf) in ngram_counts(tokens, k) {
            let df = idf.doc_freq.get(g).copied().unwrap_or(0.0).max(1.0);
            let v = tf as f64 * (idf.log_docs - df.ln());
            norms[k - 1] += v * v;
            vecs[k - 1].insert(g.to_vec(), v);
            if k == 2 {
                length += tf as f64;
            }
        }
    }
    for x in &mut norms {
        *x = x.sqrt();
    }
    TfIdf {
        vecs,
        norms,
        length,
    }
}

fn sim(hyp: &TfIdf, reference: &TfIdf, sigma: f64) -> Vec<f64> {
    let delta = hyp.length - reference.length;
    let penalty = (-(delta * delta) / (2.0 * sigma * sigma)).exp();
    (0..hyp.vecs.len())
        .map(|k| {
            let mut val = 0.0;
            for (g, &h) in &hyp.vecs[k] {
                if let Some(&r) = reference.vecs[k].get(g) {
                    val += h.min(r) * r;
                }
            }
            if hyp.norms[k] != 0.0 && reference.norms[k] != 0.0 {
                val /= hyp.norms[k] * reference.norms[k];
            }
            val * penalty
        })
        .collect()
}

/// Per-item CIDEr-D scores against an explicit idf table.
pub fn cider_with_idf(
    items: &[CaptionItem],
    idf: &CiderIdf,
    n: usize,
    sigma: f64,
) -> Result<Vec<f64>, MetricError> {
    check(items)?;
    Ok(items
        .iter()
        .map(|it| {
            let hyp = tfidf(&it.candidate, n, idf);
            let mut acc = vec![0.0; n];
            for r in &it.references {
                for (a, v) in acc.iter_mut().zip(sim(&hyp, &tfidf(r, n, idf), sigma)) {
                    *a += v;
                }
            }
            let mean = acc.iter().sum::<f64>() / n as f64;
            mean / it.references.len() as f64 * 10.0
        })
        .collect())
}

/// Per-item CIDEr-D with idf estimated from the items' own references.
pub fn cider_scores(items: &[CaptionItem], n: usize, sigma: f64) -> Result<Vec<f64>, MetricError> {
    check(items)?;
    if items.len() < 2 {
        return Err(MetricError::CorpusTooSmall);
    }
    cider_with_idf(items, &CiderIdf::from_references(items, n), n, sigma)
}

/// Corpus CIDEr-D: mean of [`cider_scores`].
pub fn cider(items: &[CaptionItem], n: usize, sigma: f64) -> Result<f64, MetricError> {
    let s = cider_scores(items, n, sigma)?;
    Ok(s.iter().sum::<f64>() / s.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionReport {
    pub count: usize,
    /// BLEU-1..4 in [0, 1].
    pub bleu: Vec<f64>,
    pub rouge_l: f64,
    /// CIDEr-D on its native scale (0 to 10 per order average).
    pub cider: Option<f64>,
}

impl CaptionReport {
    pub fn compute(items: &[CaptionItem]) -> Result<Self, MetricError> {
        let cider = match cider(items, 4, 6.0) {
            Ok(v) => Some(v),
            Err(MetricError::CorpusTooSmall) => None,
            Err(e) => return Err(e),
        };
        Ok(Self {
            count: items.len(),
            bleu: bleu(items, 4)?,
            rouge_l: rouge_l(items, 1.2)?,
            cider,
        })
    }

    /// Table with every score ×100, as captioning results are usually quoted.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:>6}{:>9}{:>9}{:>9}{:>9}{:>9}{:>9}{:>8}{:>8}",
            "N", "BLEU-1", "BLEU-2", "BLEU-3", "BLEU-4", "ROUGE-L", "CIDEr", "SPICE", "METEOR"
        );
        let _ = write!(out, "{:>6}", self.count);
        for b in &self.bleu {
            let _ = write!(out, "{:>9.2}", b * 100.0);
        }
        let _ = write!(out, "{:>9.2}", self.rouge_l * 100.0);
        match self.cider {
            Some(c) => {
                let _ = write!(out, "{:>9.2}", c * 100.0);
            }
            None => {
                let _ = write!(out, "{:>9}", "n/a");
            }
        }
        let _ = writeln!(out, "{:>8}{:>8}", "n/a", "n/a");
        out
    }
}
