use super::{join_tokens, NextTokenModel, EOS};
use crate::error::{Error, Result};

fn by_score(a: &(Vec<usize>, f64), b: &(Vec<usize>, f64)) -> std::cmp::Ordering {
    b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0))
}

/// Length-synchronous beam search over base log-probabilities.
///
/// At every step all one-token extensions of the live beams, including
/// end-of-sequence, compete for `width` slots; extensions ending in EOS
/// leave the beam as finished hypotheses. Returns up to `width` finished
/// strings, best first. `width = 1` is greedy decoding.
pub fn beam_search<M: NextTokenModel + ?Sized>(
    model: &M,
    width: usize,
) -> Result<Vec<(String, f64)>> {
    if width == 0 {
        return Err(Error::invalid("beam width must be at least 1"));
    }
    let mut live: Vec<(Vec<usize>, f64)> = vec![(Vec::new(), 0.0)];
    let mut finished: Vec<(Vec<usize>, f64)> = Vec::new();

    while !live.is_empty() {
        let mut expansions: Vec<(Vec<usize>, f64, bool)> = Vec::new();
        for (prefix, score) in &live {
            let p = model.conditional(prefix)?;
            for (tok, &pt) in p.iter().enumerate() {
                if pt <= 0.0 {
                    continue;
                }
                if tok != EOS && prefix.len() >= model.max_len() {
                    return Err(Error::invalid("model did not end the sequence at max_len"));
                }
                let mut next = prefix.clone();
                if tok != EOS {
                    next.push(tok);
                }
                expansions.push((next, score + pt.ln(), tok == EOS));
            }
        }
        expansions.sort_by(|a, b| {
            b.1.total_cmp(&a.1)
                .then_with(|| a.0.cmp(&b.0))
                .then(a.2.cmp(&b.2))
        });
        expansions.truncate(width);

        live.clear();
        for (toks, score, done) in expansions {
            if done {
                finished.push((toks, score));
            } else {
                live.push((toks, score));
            }
        }
        finished.sort_by(by_score);
        finished.truncate(width);
        // Scores only fall as sequences grow, so a full finished list whose
        // worst entry beats every live beam is final.
        if finished.len() == width {
            let worst = finished[width - 1].1;
            if live.iter().all(|(_, s)| *s < worst) {
                break;
            }
        }
    }
    Ok(finished
        .into_iter()
        .map(|(toks, s)| (join_tokens(model, &toks), s))
        .collect())
}
