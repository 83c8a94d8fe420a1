//! Frame accuracy (all targets and the ambiguous subset) and micro-averaged
//! argument precision, recall and F1 with exact span-and-role matching.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::ontology::OntologyStore;
use crate::pipeline::AnnotatedSentence;
use crate::prompting::ArgumentSpan;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FrameAccuracy {
    pub acc_all: f64,
    /// `None` when no target is ambiguous.
    pub acc_amb: Option<f64>,
    pub n_all: usize,
    pub n_amb: usize,
    pub correct_all: usize,
    pub correct_amb: usize,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Accuracy over `(sentence, predicted frame)` pairs. A target counts as
/// ambiguous when its lemma evokes two or more frames in `store`.
pub fn frame_accuracy(
    store: &OntologyStore,
    predictions: &[(&AnnotatedSentence, &str)],
) -> Result<FrameAccuracy> {
    frame_accuracy_by(predictions, |s| store.is_ambiguous(&s.target_lemma()))
}

/// As [`frame_accuracy`] with a caller-supplied ambiguity test.
pub fn frame_accuracy_by<F>(
    predictions: &[(&AnnotatedSentence, &str)],
    is_ambiguous: F,
) -> Result<FrameAccuracy>
where
    F: Fn(&AnnotatedSentence) -> bool,
{
    let (mut correct_all, mut n_amb, mut correct_amb) = (0, 0, 0);
    for (sentence, predicted) in predictions {
        let gold = sentence
            .gold_frame
            .as_deref()
            .ok_or(Error::MissingGold(sentence.id))?;
        let correct = gold == *predicted;
        correct_all += usize::from(correct);
        if is_ambiguous(sentence) {
            n_amb += 1;
            correct_amb += usize::from(correct);
        }
    }
    let n_all = predictions.len();
    Ok(FrameAccuracy {
        acc_all: ratio(correct_all, n_all).unwrap_or(0.0),
        acc_amb: ratio(correct_amb, n_amb),
        n_all,
        n_amb,
        correct_all,
        correct_amb,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ArgScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ArgScores {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let precision = ratio(tp, tp + fp).unwrap_or(0.0);
        let recall = ratio(tp, tp + fn_).unwrap_or(0.0);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        ArgScores {
            precision,
            recall,
            f1,
            tp,
            fp,
            fn_,
        }
    }
}

/// Micro-averaged scores over aligned per-sentence span lists. Duplicate
/// triples within a sentence count once.
pub fn argument_prf(
    gold: &[Vec<ArgumentSpan>],
    predicted: &[Vec<ArgumentSpan>],
) -> Result<ArgScores> {
    if gold.len() != predicted.len() {
        return Err(Error::Misaligned {
            gold: gold.len(),
            predicted: predicted.len(),
        });
    }
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (g, p) in gold.iter().zip(predicted) {
        let g: BTreeSet<&ArgumentSpan> = g.iter().collect();
        let p: BTreeSet<&ArgumentSpan> = p.iter().collect();
        let hits = p.intersection(&g).count();
        tp += hits;
        fp += p.len() - hits;
        fn_ += g.len() - hits;
    }
    Ok(ArgScores::from_counts(tp, fp, fn_))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalCounts {
    pub n_all: usize,
    pub n_amb: usize,
    /// Targets whose candidate set at prediction time had two or more frames.
    pub n_amb_by_candidates: usize,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub malformed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub frame_acc_all: f64,
    pub frame_acc_amb: Option<f64>,
    pub frame_acc_amb_by_candidates: Option<f64>,
    pub arg_precision: f64,
    pub arg_recall: f64,
    pub arg_f1: f64,
    pub counts: EvalCounts,
    /// Where frame predictions came from: "attention" or "backend".
    pub frame_source: String,
    /// Argument scores when arguments are conditioned on predicted frames.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pipeline: Option<PipelineScores>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineScores {
    pub arg_precision: f64,
    pub arg_recall: f64,
    pub arg_f1: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub malformed: usize,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{:.4}", x))
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn to_table(&self, verbose: bool) -> String {
        let c = &self.counts;
        let mut out = String::new();
        writeln!(out, "metric                 value     count").unwrap();
        writeln!(
            out,
            "frame acc (all)        {:.4}    n={}",
            self.frame_acc_all, c.n_all
        )
        .unwrap();
        writeln!(
            out,
            "frame acc (amb)        {:<9} n={}",
            fmt_opt(self.frame_acc_amb),
            c.n_amb
        )
        .unwrap();
        if verbose {
            writeln!(
                out,
                "frame acc (amb, cand)  {:<9} n={}",
                fmt_opt(self.frame_acc_amb_by_candidates),
                c.n_amb_by_candidates
            )
            .unwrap();
        }
        writeln!(
            out,
            "arg precision          {:.4}    tp={} fp={}",
            self.arg_precision, c.tp, c.fp
        )
        .unwrap();
        writeln!(
            out,
            "arg recall             {:.4}    fn={}",
            self.arg_recall, c.fn_
        )
        .unwrap();
        writeln!(
            out,
            "arg f1                 {:.4}    malformed={}",
            self.arg_f1, c.malformed
        )
        .unwrap();
        if let Some(p) = &self.pipeline {
            writeln!(
                out,
                "pipeline arg p/r/f1    {:.4} / {:.4} / {:.4}",
                p.arg_precision, p.arg_recall, p.arg_f1
            )
            .unwrap();
        }
        writeln!(out, "frame source           {}", self.frame_source).unwrap();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ontology::{FrameDef, LexicalUnit};
    use proptest::prelude::*;

    fn sentence(id: usize, word: &str, gold: &str) -> AnnotatedSentence {
        let mut s = AnnotatedSentence::new(vec![word.to_string()], 0, 1)
            .unwrap()
            .with_gold(gold, vec![])
            .unwrap();
        s.id = id;
        s
    }

    fn store() -> OntologyStore {
        let frame = |name: &str, lemmas: &[&str]| FrameDef {
            name: name.into(),
            definition: "d".into(),
            elements: vec![],
            lexical_units: lemmas
                .iter()
                .map(|l| LexicalUnit {
                    lemma: l.to_string(),
                    pos: "v".into(),
                })
                .collect(),
        };
        OntologyStore::from_frames(vec![frame("A", &["amb", "one"]), frame("B", &["amb"])]).unwrap()
    }

    #[test]
    fn accuracy_examples() {
        let store = store();
        let data = [
            sentence(0, "amb", "A"),
            sentence(1, "amb", "B"),
            sentence(2, "one", "A"),
            sentence(3, "one", "A"),
        ];
        let all_right: Vec<_> = data
            .iter()
            .map(|s| (s, s.gold_frame.as_deref().unwrap()))
            .collect();
        let acc = frame_accuracy(&store, &all_right).unwrap();
        assert_eq!((acc.acc_all, acc.acc_amb), (1.0, Some(1.0)));

        // 3 of 4 correct; of the 2 ambiguous, 1 correct.
        let preds = [
            (&data[0], "A"),
            (&data[1], "A"),
            (&data[2], "A"),
            (&data[3], "A"),
        ];
        let acc = frame_accuracy(&store, &preds).unwrap();
        assert_eq!((acc.acc_all, acc.acc_amb, acc.n_amb), (0.75, Some(0.5), 2));

        let only_one = [(&data[2], "A")];
        let acc = frame_accuracy(&store, &only_one).unwrap();
        assert_eq!(acc.acc_amb, None);
        assert_eq!(fmt_opt(acc.acc_amb), "n/a");
    }

    #[test]
    fn missing_gold() {
        let s = AnnotatedSentence::new(vec!["x".into()], 0, 1).unwrap();
        assert!(matches!(
            frame_accuracy(&store(), &[(&s, "A")]),
            Err(Error::MissingGold(0))
        ));
    }

    #[test]
    fn prf_examples() {
        let a = ArgumentSpan::new(0, 1, "A");
        let b = ArgumentSpan::new(1, 2, "B");
        let c = ArgumentSpan::new(1, 2, "C");
        let s = argument_prf(&[vec![a.clone(), b.clone()]], &[vec![a.clone(), b.clone()]]).unwrap();
        assert_eq!((s.precision, s.recall, s.f1), (1.0, 1.0, 1.0));

        let s = argument_prf(&[vec![a.clone(), b.clone()]], &[vec![a.clone(), c]]).unwrap();
        assert_eq!((s.tp, s.fp, s.fn_), (1, 1, 1));
        assert_eq!((s.precision, s.recall, s.f1), (0.5, 0.5, 0.5));

        let s = argument_prf(&[vec![a.clone()], vec![b.clone()]], &[vec![], vec![]]).unwrap();
        assert_eq!((s.precision, s.recall, s.f1), (0.0, 0.0, 0.0));

        // Duplicates count once.
        let s = argument_prf(&[vec![a.clone()]], &[vec![a.clone(), a.clone()]]).unwrap();
        assert_eq!((s.tp, s.fp), (1, 0));

        assert!(matches!(
            argument_prf(&[vec![]], &[]),
            Err(Error::Misaligned {
                gold: 1,
                predicted: 0
            })
        ));
    }

    #[test]
    fn boundary_mismatch_is_miss() {
        let gold = vec![ArgumentSpan::new(0, 2, "A")];
        let pred = vec![ArgumentSpan::new(0, 1, "A")];
        let s = argument_prf(&[gold], &[pred]).unwrap();
        assert_eq!((s.tp, s.fp, s.fn_), (0, 1, 1));
    }

    fn spans() -> impl Strategy<Value = Vec<ArgumentSpan>> {
        prop::collection::vec((0usize..4, 1usize..3, 0usize..3), 0..5).prop_map(|v| {
            v.into_iter()
                .map(|(s, len, r)| ArgumentSpan::new(s, s + len, ["A", "B", "C"][r]))
                .collect()
        })
    }

    proptest! {
        #[test]
        fn f1_between_p_and_r(gold in prop::collection::vec(spans(), 1..5), pred in prop::collection::vec(spans(), 1..5)) {
            let n = gold.len().min(pred.len());
            let s = argument_prf(&gold[..n], &pred[..n]).unwrap();
            if s.precision > 0.0 && s.recall > 0.0 {
                prop_assert!(s.f1 <= s.precision.max(s.recall) + 1e-15);
                prop_assert!(s.f1 >= s.precision.min(s.recall) - 1e-15);
            }
        }

        #[test]
        fn monotone_under_edits(gold in spans(), pred in spans()) {
            let gold: Vec<_> = gold.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
            let pred: Vec<_> = pred.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
            let base = argument_prf(std::slice::from_ref(&gold), std::slice::from_ref(&pred)).unwrap();

            if let Some(i) = pred.iter().position(|p| gold.contains(p)) {
                let mut fewer = pred.clone();
                fewer.remove(i);
                let s = argument_prf(std::slice::from_ref(&gold), &[fewer]).unwrap();
                prop_assert!(s.recall <= base.recall);
            }

            let wrong = ArgumentSpan::new(9, 10, "Z");
            let mut more = pred.clone();
            more.push(wrong);
            let s = argument_prf(std::slice::from_ref(&gold), &[more]).unwrap();
            prop_assert!(s.precision <= base.precision);
        }
    }
}
