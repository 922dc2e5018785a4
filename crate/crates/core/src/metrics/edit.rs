use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Token-level Levenshtein distance and the reference length it is
/// normalized by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EditStats {
    pub distance: usize,
    pub ref_len: usize,
}

impl EditStats {
    /// Per-utterance error rate; undefined for an empty reference.
    pub fn rate(&self) -> Option<f64> {
        (self.ref_len > 0).then(|| self.distance as f64 / self.ref_len as f64)
    }
}

/// Unit-cost Levenshtein distance over token sequences.
pub fn edit_distance<T: PartialEq>(hyp: &[T], reference: &[T]) -> EditStats {
    // One row over the hypothesis, swept along the reference.
    let mut row: Vec<usize> = (0..=hyp.len()).collect();
    for (i, r) in reference.iter().enumerate() {
        let mut diag = row[0];
        row[0] = i + 1;
        for (j, h) in hyp.iter().enumerate() {
            let sub = diag + usize::from(h != r);
            diag = row[j + 1];
            row[j + 1] = sub.min(row[j] + 1).min(diag + 1);
        }
    }
    EditStats {
        distance: row[hyp.len()],
        ref_len: reference.len(),
    }
}

/// Micro-averaged error rate: total edits over total reference tokens.
pub fn corpus_error_rate<T: PartialEq>(pairs: &[(Vec<T>, Vec<T>)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::invalid("corpus error rate needs at least one pair"));
    }
    let stats: Vec<EditStats> = pairs.iter().map(|(h, r)| edit_distance(h, r)).collect();
    micro_rate(&stats)
}

pub fn micro_rate(stats: &[EditStats]) -> Result<f64> {
    let edits: usize = stats.iter().map(|s| s.distance).sum();
    let ref_len: usize = stats.iter().map(|s| s.ref_len).sum();
    if ref_len == 0 {
        return Err(Error::Undefined(
            "error rate undefined: all references are empty".into(),
        ));
    }
    Ok(edits as f64 / ref_len as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        let s = edit_distance(&["a", "b", "c"], &["a", "x", "c"]);
        assert_eq!(
            s,
            EditStats {
                distance: 1,
                ref_len: 3
            }
        );
        let s = edit_distance::<&str>(&[], &["a", "b"]);
        assert_eq!(
            s,
            EditStats {
                distance: 2,
                ref_len: 2
            }
        );
        let s = edit_distance(&["a", "b"], &[]);
        assert_eq!(
            s,
            EditStats {
                distance: 2,
                ref_len: 0
            }
        );
        assert_eq!(s.rate(), None);
    }

    #[test]
    fn corpus_rates() {
        let v = |s: &str| s.split_whitespace().map(str::to_string).collect::<Vec<_>>();
        let r = corpus_error_rate(&[(v("a b c"), v("a x c"))]).unwrap();
        assert!((r - 1.0 / 3.0).abs() < 1e-12);
        let r = corpus_error_rate(&[(v("a b c"), v("a x c")), (v("d e"), v("d e"))]).unwrap();
        assert!((r - 0.2).abs() < 1e-12);
        let r = corpus_error_rate(&[(v("a b c d e f"), v("a"))]).unwrap();
        assert!(r > 1.0);
        assert!(matches!(
            corpus_error_rate(&[(v("a"), v(""))]),
            Err(Error::Undefined(_))
        ));
    }
}
