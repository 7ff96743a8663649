//! Pretrained word vectors.
//!
//! Vectors are read from the common text format: an optional `<count> <dim>`
//! header line, then one `token v1 ... vs` line per word. Lookup is total:
//! unknown tokens receive a deterministic pseudo-random vector derived from
//! the token bytes and the table seed.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::Rng;

use crate::rng;
use crate::{Error, Result};

/// Token reserved for padding rows. Always maps to the zero vector.
pub const PAD: &str = "<pad>";

/// Half-width of the uniform range for out-of-vocabulary vectors.
pub const OOV_RANGE: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OovPolicy {
    /// Seeded hash vectors, uniform in `[-OOV_RANGE, OOV_RANGE]`.
    #[default]
    HashedUniform,
    Zero,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    words: Vec<String>,
    index: HashMap<String, usize>,
    data: Vec<f64>,
    oov: OovPolicy,
    seed: u64,
}

/// Diagnostics collected while loading a vector file.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub header: Option<(usize, usize)>,
    pub vectors: usize,
    pub duplicates: usize,
}

impl EmbeddingTable {
    pub fn new(dim: usize, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("embedding dimension must be at least 1".into()));
        }
        Ok(EmbeddingTable {
            dim,
            words: Vec::new(),
            index: HashMap::new(),
            data: Vec::new(),
            oov: OovPolicy::default(),
            seed,
        })
    }

    pub fn with_oov_policy(mut self, oov: OovPolicy) -> Self {
        self.oov = oov;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    /// Stored tokens in file order.
    pub fn words(&self) -> &[String] {
        &self.words
    }

    /// Insert or overwrite a vector. Returns true if the token was already present.
    pub fn insert(&mut self, token: &str, vector: &[f64]) -> Result<bool> {
        if vector.len() != self.dim {
            return Err(Error::Shape(format!(
                "vector for `{token}` has {} entries, table dimension is {}",
                vector.len(),
                self.dim
            )));
        }
        if let Some(&i) = self.index.get(token) {
            self.data[i * self.dim..(i + 1) * self.dim].copy_from_slice(vector);
            return Ok(true);
        }
        self.index.insert(token.to_owned(), self.words.len());
        self.words.push(token.to_owned());
        self.data.extend_from_slice(vector);
        Ok(false)
    }

    /// Stored vector, if the token is in the vocabulary.
    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.index
            .get(token)
            .map(|&i| &self.data[i * self.dim..(i + 1) * self.dim])
    }

    pub fn get_mut(&mut self, token: &str) -> Option<&mut [f64]> {
        let dim = self.dim;
        self.index
            .get(token)
            .map(|&i| &mut self.data[i * dim..(i + 1) * dim])
    }

    /// Write the vector for `token` into `out`.
    pub fn lookup_into(&self, token: &str, out: &mut [f64]) {
        assert_eq!(out.len(), self.dim, "output slice has the wrong width");
        if token == PAD {
            out.fill(0.0);
        } else if let Some(v) = self.get(token) {
            out.copy_from_slice(v);
        } else {
            self.oov_into(token, out);
        }
    }

    pub fn lookup(&self, token: &str) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.lookup_into(token, &mut out);
        out
    }

    fn oov_into(&self, token: &str, out: &mut [f64]) {
        match self.oov {
            OovPolicy::Zero => out.fill(0.0),
            OovPolicy::HashedUniform => {
                let mut r = rng::stream(self.seed, &[rng::OOV, rng::fnv1a(token.as_bytes())]);
                for x in out.iter_mut() {
                    *x = r.random_range(-OOV_RANGE..=OOV_RANGE);
                }
            }
        }
    }

    pub fn parse(text: &str, expected_dim: Option<usize>, origin: &str) -> Result<(Self, LoadReport)> {
        let mut lines = text.split('\n').enumerate().peekable();
        let mut report = LoadReport::default();

        let mut dim = expected_dim;
        if let Some((_, first)) = lines.peek() {
            let fields: Vec<&str> = first.split(' ').collect();
            if let [count, d] = fields[..] {
                if let (Ok(count), Ok(d)) = (count.parse::<usize>(), d.parse::<usize>()) {
                    if let Some(e) = expected_dim {
                        if e != d {
                            return Err(Error::parse(
                                origin,
                                1,
                                format!("header declares dimension {d}, expected {e}"),
                            ));
                        }
                    }
                    dim = Some(d);
                    report.header = Some((count, d));
                    lines.next();
                }
            }
        }

        let mut table: Option<EmbeddingTable> = None;
        let mut row = Vec::new();
        for (i, line) in lines {
            let lineno = i + 1;
            if line.is_empty() {
                continue;
            }
            // Tolerate the single trailing space some writers emit.
            let line = line.strip_suffix(' ').unwrap_or(line);
            let mut fields = line.split(' ');
            let token = fields.next().unwrap_or_default();
            if token.is_empty() {
                return Err(Error::parse(origin, lineno, "line starts with a separator"));
            }
            row.clear();
            for f in fields {
                let v: f64 = f
                    .parse()
                    .map_err(|_| Error::parse(origin, lineno, format!("malformed float `{f}`")))?;
                if !v.is_finite() {
                    return Err(Error::parse(origin, lineno, format!("non-finite value `{f}`")));
                }
                row.push(v);
            }
            let d = *dim.get_or_insert(row.len());
            if row.len() != d || d == 0 {
                return Err(Error::parse(
                    origin,
                    lineno,
                    format!("`{token}` has {} values, expected {d}", row.len()),
                ));
            }
            let table = match &mut table {
                Some(t) => t,
                None => table.insert(EmbeddingTable::new(d, 0)?),
            };
            if table.insert(token, &row)? {
                report.duplicates += 1;
            }
        }

        let table = table.ok_or_else(|| Error::Format(format!("{origin}: no word vectors found")))?;
        report.vectors = table.len();
        Ok((table, report))
    }

    /// Serialize in the text vector format, header included.
    pub fn to_text(&self) -> String {
        let mut out = format!("{} {}\n", self.len(), self.dim);
        for (i, w) in self.words.iter().enumerate() {
            out.push_str(w);
            for v in &self.data[i * self.dim..(i + 1) * self.dim] {
                out.push(' ');
                out.push_str(&v.to_string());
            }
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_text().as_bytes())
            .map_err(|e| Error::io(path, e))
    }
}

/// Read a vector file. The returned table uses `seed` for OOV vectors.
pub fn load_embeddings(
    path: &Path,
    expected_dim: Option<usize>,
    seed: u64,
) -> Result<(EmbeddingTable, LoadReport)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let (table, report) = EmbeddingTable::parse(&text, expected_dim, &path.display().to_string())?;
    Ok((table.with_seed(seed), report))
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn parse(text: &str, dim: Option<usize>) -> Result<(EmbeddingTable, LoadReport)> {
        EmbeddingTable::parse(text, dim, "test.vec")
    }

    #[test]
    fn loads_with_header() {
        let (t, r) = parse("2 3\na 1 0 0\nb 0 1 0", None).unwrap();
        assert_eq!(t.dim(), 3);
        assert_eq!(t.len(), 2);
        assert_eq!(r.header, Some((2, 3)));
        assert_eq!(t.lookup("a"), vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn infers_dimension_without_header() {
        let (t, r) = parse("x 1 2 3 4 5\ny 5 4 3 2 1e-3\n", None).unwrap();
        assert_eq!(t.dim(), 5);
        assert_eq!(r.header, None);
        assert_eq!(t.get("y").unwrap()[4], 1e-3);
    }

    #[test]
    fn short_line_is_an_error_naming_the_line() {
        let err = parse("2 3\na 1 0 0\nc 1 2\n", None).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn expected_dimension_is_enforced() {
        assert!(parse("a 1 2\n", Some(3)).is_err());
        assert!(parse("1 2\na 1 2\n", Some(3)).is_err());
        assert!(parse("a 1 2 3\n", Some(3)).is_ok());
    }

    #[test]
    fn malformed_float_reports_line() {
        let err = parse("a 1 2\nb 1 x\n", None).unwrap_err();
        assert!(err.to_string().contains(":2:"), "{err}");
        assert!(parse("a 1 NaN\n", None).is_err());
        assert!(parse("a 1  2\n", None).is_err());
    }

    #[test]
    fn empty_file_is_an_error() {
        assert!(parse("", None).is_err());
        assert!(parse("0 3\n", None).is_err());
    }

    #[test]
    fn duplicates_last_wins() {
        let (t, r) = parse("a 1 1\nb 2 2\na 3 3\n", None).unwrap();
        assert_eq!(r.duplicates, 1);
        assert_eq!(t.len(), 2);
        assert_eq!(t.lookup("a"), vec![3.0, 3.0]);
    }

    #[test]
    fn trailing_space_is_tolerated() {
        let (t, _) = parse("2 2\na 1 2 \nb 3 4 \n", None).unwrap();
        assert_eq!(t.lookup("b"), vec![3.0, 4.0]);
    }

    #[test]
    fn pad_is_zero() {
        let (t, _) = parse("a 1 0 0\n", None).unwrap();
        assert_eq!(t.lookup(PAD), vec![0.0; 3]);
    }

    #[test]
    fn oov_is_deterministic_and_seeded() {
        let t = EmbeddingTable::new(8, 11).unwrap();
        let a = t.lookup("قورباغه");
        assert_eq!(a, t.lookup("قورباغه"));
        assert_ne!(a, t.lookup("قورباغه‌ها"));
        let other = t.clone().with_seed(12);
        assert_ne!(a, other.lookup("قورباغه"));
        assert!(a.iter().all(|x| x.abs() <= OOV_RANGE));
    }

    #[test]
    fn zero_policy() {
        let t = EmbeddingTable::new(4, 0).unwrap().with_oov_policy(OovPolicy::Zero);
        assert_eq!(t.lookup("x"), vec![0.0; 4]);
    }

    proptest! {
        #[test]
        fn oov_vectors_are_bounded(token in "\\PC{1,12}", seed in any::<u64>()) {
            let t = EmbeddingTable::new(16, seed).unwrap();
            prop_assume!(token != PAD);
            prop_assert!(t.lookup(&token).iter().all(|x| x.abs() <= OOV_RANGE));
        }

        #[test]
        fn text_round_trip_is_bit_exact(
            rows in prop::collection::vec(prop::collection::vec(-1e6f64..1e6, 3), 1..20)
        ) {
            let mut t = EmbeddingTable::new(3, 0).unwrap();
            for (i, r) in rows.iter().enumerate() {
                t.insert(&format!("w{i}"), r).unwrap();
            }
            let (back, _) = parse(&t.to_text(), Some(3)).unwrap();
            for w in t.words() {
                let a: Vec<u64> = t.lookup(w).iter().map(|x| x.to_bits()).collect();
                let b: Vec<u64> = back.lookup(w).iter().map(|x| x.to_bits()).collect();
                prop_assert_eq!(a, b);
            }
        }
    }
}
