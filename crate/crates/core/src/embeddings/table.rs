use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::{Error, Result};

/// One dense vector per token.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    dim: usize,
    data: Vec<f32>,
}

impl EmbeddingTable {
    pub fn new(tokens: Vec<String>, dim: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != tokens.len() * dim {
            return Err(Error::Shape(format!(
                "{} tokens x {dim} dims needs {} values, got {}",
                tokens.len(),
                tokens.len() * dim,
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|x| !x.is_finite()) {
            return Err(Error::Numeric(format!("non-finite embedding value {bad}")));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::Data(format!("duplicate token `{t}`")));
            }
        }
        Ok(EmbeddingTable {
            tokens,
            index,
            dim,
            data,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn get(&self, token: &str) -> Option<&[f32]> {
        self.index.get(token).map(|&i| self.row(i))
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    fn lookup(&self, token: &str) -> Result<&[f32]> {
        self.get(token).ok_or_else(|| Error::UnknownToken(token.to_string()))
    }

    /// `k` most cosine-similar tokens to `token`, excluding itself.
    pub fn nearest_neighbors(&self, token: &str, k: usize) -> Result<Vec<(String, f64)>> {
        let q: Vec<f64> = self.lookup(token)?.iter().map(|&x| x as f64).collect();
        Ok(self.rank(&q, &[token], k))
    }

    /// Token closest to `b - a + c`, excluding the three query tokens.
    pub fn analogy(&self, a: &str, b: &str, c: &str) -> Result<String> {
        let (va, vb, vc) = (self.lookup(a)?, self.lookup(b)?, self.lookup(c)?);
        let q: Vec<f64> = (0..self.dim)
            .map(|k| vb[k] as f64 - va[k] as f64 + vc[k] as f64)
            .collect();
        self.rank(&q, &[a, b, c], 1)
            .into_iter()
            .next()
            .map(|(t, _)| t)
            .ok_or_else(|| Error::Data("analogy needs a fourth token".into()))
    }

    fn rank(&self, q: &[f64], exclude: &[&str], k: usize) -> Vec<(String, f64)> {
        let qn = q.iter().map(|x| x * x).sum::<f64>().sqrt();
        let mut scored: Vec<(usize, f64)> = (0..self.len())
            .filter(|&i| !exclude.contains(&self.tokens[i].as_str()))
            .map(|i| {
                let r = self.row(i);
                let dot: f64 = r.iter().zip(q).map(|(&a, b)| a as f64 * b).sum();
                let rn = r.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt();
                let denom = qn * rn;
                (i, if denom > 0.0 { dot / denom } else { 0.0 })
            })
            .collect();
        scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        scored
            .into_iter()
            .take(k)
            .map(|(i, s)| (self.tokens[i].clone(), s))
            .collect()
    }

    /// Text vector format: `token v1 v2 ...` per line. Values use the shortest
    /// representation that parses back to the same `f32`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (i, t) in self.tokens.iter().enumerate() {
            out.push_str(t);
            for v in self.row(i) {
                write!(out, " {v}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

/// Loads a whitespace-separated text vector file; dimension comes from line 1.
pub fn load_pretrained(path: impl AsRef<Path>) -> Result<EmbeddingTable> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut tokens = Vec::new();
    let mut data = Vec::new();
    let mut dim = None;
    let mut seen = HashMap::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let token = parts.next().expect("non-empty line").to_string();
        let values: Vec<f32> = parts
            .map(|s| {
                s.parse::<f32>()
                    .map_err(|_| Error::parse(path, lineno, format!("bad number `{s}`")))
            })
            .collect::<Result<_>>()?;
        let d = *dim.get_or_insert(values.len());
        if d == 0 {
            return Err(Error::parse(path, lineno, "vector has no components"));
        }
        if values.len() != d {
            return Err(Error::parse(
                path,
                lineno,
                format!("expected {d} components, found {}", values.len()),
            ));
        }
        if let Some(first) = seen.insert(token.clone(), lineno) {
            return Err(Error::parse(
                path,
                lineno,
                format!("duplicate token `{token}` (first on line {first})"),
            ));
        }
        tokens.push(token);
        data.extend(values);
    }
    let Some(dim) = dim else {
        return Err(Error::Data(format!("{}: no vectors in file", path.display())));
    };
    EmbeddingTable::new(tokens, dim, data)
}
