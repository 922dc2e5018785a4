use std::collections::HashMap;
use std::path::Path;

use crate::data::read_file;
use crate::error::{Error, Result};

/// Externally produced sentence embeddings keyed by raw text.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("embedding dim must be positive"));
        }
        Ok(EmbeddingTable {
            dim,
            vectors: HashMap::new(),
        })
    }

    pub fn insert(&mut self, key: impl Into<String>, vector: Vec<f64>) -> Result<()> {
        let key = key.into();
        check_vector(&vector, self.dim).map_err(|m| Error::invalid(format!("key {key:?}: {m}")))?;
        self.vectors.insert(key, vector);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, key: &str) -> Result<&[f64]> {
        self.vectors
            .get(key)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::MissingEmbedding(key.to_string()))
    }

    pub fn contains(&self, key: &str) -> bool {
        self.vectors.contains_key(key)
    }

    /// `key<TAB>v1,v2,...,vd` per line; the first record fixes the dimension.
    pub fn parse(contents: &str, path: &Path) -> Result<Self> {
        let mut table: Option<EmbeddingTable> = None;
        for (lineno, line) in contents.lines().enumerate() {
            let lineno = lineno + 1;
            if line.is_empty() {
                continue;
            }
            let (key, values) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(path, lineno, "expected key<TAB>values"))?;
            let vector = values
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::parse(path, lineno, format!("bad float: {e}")))?;
            let t = match &mut table {
                Some(t) => t,
                None => table.insert(
                    EmbeddingTable::new(vector.len())
                        .map_err(|e| Error::parse(path, lineno, e.to_string()))?,
                ),
            };
            check_vector(&vector, t.dim).map_err(|m| Error::parse(path, lineno, m))?;
            t.vectors.insert(key.to_string(), vector);
        }
        Ok(table.unwrap_or(EmbeddingTable {
            dim: 1,
            vectors: HashMap::new(),
        }))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::parse(&read_file(path)?, path)
    }

    /// Serializes in sorted key order.
    pub fn format(&self) -> String {
        let mut keys: Vec<&String> = self.vectors.keys().collect();
        keys.sort();
        let mut out = String::new();
        for k in keys {
            let vals: Vec<String> = self.vectors[k].iter().map(|v| v.to_string()).collect();
            out.push_str(k);
            out.push('\t');
            out.push_str(&vals.join(","));
            out.push('\n');
        }
        out
    }
}

fn check_vector(v: &[f64], dim: usize) -> std::result::Result<(), String> {
    if v.len() != dim {
        return Err(format!("expected {dim} values, found {}", v.len()));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err("non-finite value".into());
    }
    if v.iter().all(|&x| x == 0.0) {
        return Err("zero vector".into());
    }
    Ok(())
}

/// `1 - cos(a, b)`, in [0, 2].
pub fn cosine_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!(
            "dimension mismatch: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::invalid("cosine distance of a zero vector"));
    }
    let cos = (dot / (na * nb)).clamp(-1.0, 1.0);
    Ok(1.0 - cos)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_examples() {
        let v = [0.3, -1.2, 4.0];
        assert!(cosine_distance(&v, &v).unwrap().abs() < 1e-12);
        assert!((cosine_distance(&[1.0, 0.0], &[0.0, 1.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((cosine_distance(&[1.0, 0.0], &[-1.0, 0.0]).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn cosine_errors() {
        assert!(cosine_distance(&[0.0, 0.0], &[1.0, 0.0]).is_err());
        assert!(cosine_distance(&[1.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn table_parse() {
        let t = EmbeddingTable::parse("a b\t1,0,0\nc\t0.5,0.5,0\n", Path::new("e")).unwrap();
        assert_eq!(t.dim(), 3);
        assert_eq!(t.get("a b").unwrap(), &[1.0, 0.0, 0.0]);
        assert!(matches!(t.get("zzz"), Err(Error::MissingEmbedding(_))));
        let round = EmbeddingTable::parse(&t.format(), Path::new("e")).unwrap();
        assert_eq!(round, t);
    }

    #[test]
    fn table_rejects_bad_rows() {
        for bad in [
            "a\t1,0\nb\t1,0,0\n",
            "a\t0,0\n",
            "a\t1,x\n",
            "a 1,2\n",
            "a\tNaN,1\n",
        ] {
            let err = EmbeddingTable::parse(bad, Path::new("e")).unwrap_err();
            assert!(matches!(err, Error::Parse { .. }), "{bad:?}: {err}");
        }
    }
}
