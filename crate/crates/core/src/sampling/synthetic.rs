use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use log::warn;

use super::NextTokenModel;
use crate::data::read_file;
use crate::error::{Error, Result};

/// Vocabulary id of the end-of-sequence marker.
pub const EOS: usize = 0;
const EOS_TOKEN: &str = "</s>";

#[derive(Debug, Clone, Default)]
struct Node {
    children: BTreeMap<usize, usize>,
    /// Probability of all strings passing through this node.
    mass: f64,
    /// Probability of the string ending here.
    end: f64,
}

/// An explicit distribution over whitespace-tokenized strings, compiled into
/// a prefix tree so it can be sampled and searched token by token.
#[derive(Debug, Clone)]
pub struct SyntheticModel {
    support: Vec<(String, f64)>,
    vocab: Vec<String>,
    nodes: Vec<Node>,
    max_len: usize,
}

impl SyntheticModel {
    /// Probabilities must be positive and sum to 1 within 1e-6; they are
    /// renormalized (with a warning) inside that tolerance.
    pub fn from_pairs(pairs: Vec<(String, f64)>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::invalid("synthetic model has no strings"));
        }
        let mut seen = HashMap::new();
        for (k, (s, p)) in pairs.iter().enumerate() {
            if !(p.is_finite() && *p > 0.0) {
                return Err(Error::invalid(format!(
                    "string {k}: probability {p} must be positive"
                )));
            }
            let canon = s.split_whitespace().collect::<Vec<_>>().join(" ");
            if let Some(prev) = seen.insert(canon, k) {
                return Err(Error::invalid(format!(
                    "string {k} duplicates string {prev}"
                )));
            }
        }
        let sum: f64 = pairs.iter().map(|(_, p)| p).sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(Error::invalid(format!(
                "probabilities sum to {sum}, expected 1"
            )));
        }
        if (sum - 1.0).abs() > 1e-12 {
            warn!("synthetic model probabilities sum to {sum}; renormalizing");
        }

        let mut vocab = vec![EOS_TOKEN.to_string()];
        let mut ids: HashMap<String, usize> = HashMap::new();
        let mut nodes = vec![Node::default()];
        let mut support = Vec::with_capacity(pairs.len());
        let mut max_len = 0;
        for (s, p) in pairs {
            let p = p / sum;
            let toks: Vec<&str> = s.split_whitespace().collect();
            max_len = max_len.max(toks.len());
            let mut at = 0;
            nodes[0].mass += p;
            for t in &toks {
                if *t == EOS_TOKEN {
                    return Err(Error::invalid(format!("{EOS_TOKEN} is reserved")));
                }
                let id = *ids.entry(t.to_string()).or_insert_with(|| {
                    vocab.push(t.to_string());
                    vocab.len() - 1
                });
                let next = match nodes[at].children.get(&id) {
                    Some(&n) => n,
                    None => {
                        nodes.push(Node::default());
                        let n = nodes.len() - 1;
                        nodes[at].children.insert(id, n);
                        n
                    }
                };
                at = next;
                nodes[at].mass += p;
            }
            nodes[at].end += p;
            support.push((toks.join(" "), p));
        }
        Ok(SyntheticModel {
            support,
            vocab,
            nodes,
            max_len,
        })
    }

    /// Lines are `probability<TAB>space-separated tokens`; `#` starts a comment.
    pub fn parse(contents: &str, path: &Path) -> Result<Self> {
        let mut pairs = Vec::new();
        for (lineno, line) in contents.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (p, text) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(path, lineno + 1, "expected probability<TAB>tokens"))?;
            let p: f64 = p.trim().parse().map_err(|e| {
                Error::parse(path, lineno + 1, format!("bad probability {p:?}: {e}"))
            })?;
            pairs.push((text.to_string(), p));
        }
        Self::from_pairs(pairs).map_err(|e| match e {
            Error::InvalidInput(m) => Error::parse(path, 0, m),
            e => e,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::parse(&read_file(path)?, path)
    }

    /// Strings and their (renormalized) probabilities, in file order.
    pub fn support(&self) -> &[(String, f64)] {
        &self.support
    }

    fn node(&self, prefix: &[usize]) -> Result<&Node> {
        let mut at = 0;
        for t in prefix {
            at = *self.nodes[at]
                .children
                .get(t)
                .ok_or_else(|| Error::invalid("prefix has zero probability under the model"))?;
        }
        Ok(&self.nodes[at])
    }
}

impl NextTokenModel for SyntheticModel {
    fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    fn token(&self, id: usize) -> &str {
        &self.vocab[id]
    }

    fn max_len(&self) -> usize {
        self.max_len
    }

    fn conditional(&self, prefix: &[usize]) -> Result<Vec<f64>> {
        let node = self.node(prefix)?;
        let mut p = vec![0.0; self.vocab.len()];
        p[EOS] = node.end / node.mass;
        for (&t, &child) in &node.children {
            p[t] = self.nodes[child].mass / node.mass;
        }
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn log_prob(m: &SyntheticModel, text: &str) -> f64 {
        let ids: Vec<usize> = text
            .split_whitespace()
            .map(|t| m.vocab.iter().position(|v| v == t).unwrap())
            .collect();
        let mut lp = 0.0;
        for k in 0..=ids.len() {
            let p = m.conditional(&ids[..k]).unwrap();
            lp += p[if k == ids.len() { EOS } else { ids[k] }].ln();
        }
        lp
    }

    #[test]
    fn conditionals_reproduce_string_probabilities() {
        let pairs = vec![
            ("a".to_string(), 0.1),
            ("a b".to_string(), 0.2),
            ("a b c".to_string(), 0.3),
            ("b".to_string(), 0.15),
            ("".to_string(), 0.25),
        ];
        let m = SyntheticModel::from_pairs(pairs.clone()).unwrap();
        for (s, p) in &pairs {
            assert!((log_prob(&m, s) - p.ln()).abs() < 1e-12, "{s}");
        }
        assert_eq!(m.max_len(), 3);
        let sum: f64 = m.conditional(&[]).unwrap().iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn parse_renormalizes_within_tolerance() {
        let m = SyntheticModel::parse("# toy\n0.5000004\ta\n0.5\tb\n", Path::new("m")).unwrap();
        let total: f64 = m.support().iter().map(|(_, p)| p).sum();
        assert!((total - 1.0).abs() < 1e-15);
        assert!(SyntheticModel::parse("0.6\ta\n0.5\tb\n", Path::new("m")).is_err());
        assert!(SyntheticModel::parse("0.5\ta\n0.5\ta\n", Path::new("m")).is_err());
        assert!(SyntheticModel::parse("1.0 a\n", Path::new("m")).is_err());
        assert!(SyntheticModel::parse("0\ta\n1\tb\n", Path::new("m")).is_err());
    }
}
