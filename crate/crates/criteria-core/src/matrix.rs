//! The criteria matrix: every vocabulary term scored by every community
//! model, with binary and TSV persistence and divergence queries.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::pat::PatModel;
use crate::scoring;
use crate::vocab::TermVocabulary;

const MAGIC: &[u8; 4] = b"CRMX";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum MatrixError {
    #[error("matrix needs at least one model and one term")]
    Empty,
    #[error("term {0:?} not found")]
    UnknownTerm(String),
    #[error("community {0:?} not found")]
    UnknownCommunity(String),
    #[error("divergence ranking needs at least two communities")]
    TooFewCommunities,
    #[error("build produced {nan_count} unscored cells; scores must be total")]
    IncompleteScores { nan_count: usize },
    #[error("score {value} for ({term:?}, {community:?}) outside [0, 1]")]
    OutOfRange { term: String, community: String, value: f64 },
    #[error("duplicate {kind} {name:?}")]
    DuplicateIndex { kind: &'static str, name: String },
    #[error("shape mismatch: {terms} terms x {communities} communities != {cells} cells")]
    ShapeMismatch { terms: usize, communities: usize, cells: usize },
    #[error("{0}: {1}")]
    Io(String, #[source] std::io::Error),
    #[error("bad matrix file: {0}")]
    Format(String),
}

/// Provenance manifest persisted with every built matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildManifest {
    pub vocab_hash: String,
    pub model_hashes: BTreeMap<String, String>,
    pub created_unix: u64,
    pub tool_version: String,
}

/// Terms-by-communities score matrix. Rows are terms, columns are
/// communities; every cell is a probability in [0, 1] and the derived
/// `mean` column is the arithmetic mean across all community columns.
#[derive(Debug, Clone, PartialEq)]
pub struct CriteriaMatrix {
    terms: Vec<String>,
    communities: Vec<String>,
    /// Row-major `terms.len() x communities.len()`.
    scores: Vec<f64>,
    term_index: HashMap<String, usize>,
    community_index: HashMap<String, usize>,
}

impl CriteriaMatrix {
    pub fn new(
        terms: Vec<String>,
        communities: Vec<String>,
        scores: Vec<f64>,
    ) -> Result<Self, MatrixError> {
        if terms.is_empty() || communities.is_empty() {
            return Err(MatrixError::Empty);
        }
        if scores.len() != terms.len() * communities.len() {
            return Err(MatrixError::ShapeMismatch {
                terms: terms.len(),
                communities: communities.len(),
                cells: scores.len(),
            });
        }
        let nan_count = scores.iter().filter(|s| s.is_nan()).count();
        if nan_count > 0 {
            return Err(MatrixError::IncompleteScores { nan_count });
        }
        let mut term_index = HashMap::with_capacity(terms.len());
        for (i, t) in terms.iter().enumerate() {
            if term_index.insert(t.clone(), i).is_some() {
                return Err(MatrixError::DuplicateIndex { kind: "term", name: t.clone() });
            }
        }
        let mut community_index = HashMap::with_capacity(communities.len());
        for (j, c) in communities.iter().enumerate() {
            if community_index.insert(c.clone(), j).is_some() {
                return Err(MatrixError::DuplicateIndex { kind: "community", name: c.clone() });
            }
        }
        for (i, t) in terms.iter().enumerate() {
            for (j, c) in communities.iter().enumerate() {
                let v = scores[i * communities.len() + j];
                if !(0.0..=1.0).contains(&v) {
                    return Err(MatrixError::OutOfRange {
                        term: t.clone(),
                        community: c.clone(),
                        value: v,
                    });
                }
            }
        }
        Ok(CriteriaMatrix { terms, communities, scores, term_index, community_index })
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn communities(&self) -> &[String] {
        &self.communities
    }

    /// One term's scores across all communities, in column order.
    pub fn row(&self, term: &str) -> Result<&[f64], MatrixError> {
        let i = *self.term_index.get(term).ok_or_else(|| MatrixError::UnknownTerm(term.into()))?;
        let w = self.communities.len();
        Ok(&self.scores[i * w..(i + 1) * w])
    }

    /// Stored score for a term in a community, or the derived row mean
    /// when `column` is `"mean"`.
    pub fn lookup(&self, term: &str, column: &str) -> Result<f64, MatrixError> {
        if column == "mean" {
            return self.mean(term);
        }
        let j = *self
            .community_index
            .get(column)
            .ok_or_else(|| MatrixError::UnknownCommunity(column.into()))?;
        Ok(self.row(term)?[j])
    }

    /// Arithmetic mean of a term's row over every community column.
    pub fn mean(&self, term: &str) -> Result<f64, MatrixError> {
        let row = self.row(term)?;
        Ok(row.iter().sum::<f64>() / row.len() as f64)
    }

    /// Terms ranked by how far their score in `community` sits above
    /// their mean score across the *other* communities.
    pub fn top_divergent_terms(
        &self,
        community: &str,
        k: usize,
    ) -> Result<Vec<DivergentTerm>, MatrixError> {
        let j = *self
            .community_index
            .get(community)
            .ok_or_else(|| MatrixError::UnknownCommunity(community.into()))?;
        if self.communities.len() < 2 {
            return Err(MatrixError::TooFewCommunities);
        }
        let mut ranked: Vec<DivergentTerm> = self
            .terms
            .iter()
            .map(|t| {
                let row = self.row(t).expect("term is indexed");
                let community_score = row[j];
                let others: f64 = row.iter().sum::<f64>() - community_score;
                let mean_others = others / (row.len() - 1) as f64;
                DivergentTerm { term: t.clone(), community_score, mean_others }
            })
            .collect();
        ranked.sort_by(|a, b| {
            let da = a.community_score - a.mean_others;
            let db = b.community_score - b.mean_others;
            db.partial_cmp(&da).unwrap_or(std::cmp::Ordering::Equal).then_with(|| a.term.cmp(&b.term))
        });
        ranked.truncate(k);
        Ok(ranked)
    }

    /// TSV export: header `term\t<community...>\tmean`, scores at six
    /// decimal places.
    pub fn export_tsv(&self, path: &Path) -> Result<(), MatrixError> {
        let mut out = String::from("term");
        for c in &self.communities {
            out.push('\t');
            out.push_str(c);
        }
        out.push_str("\tmean\n");
        for t in &self.terms {
            out.push_str(t);
            for v in self.row(t).expect("term is indexed") {
                out.push_str(&format!("\t{v:.6}"));
            }
            out.push_str(&format!("\t{:.6}\n", self.mean(t).expect("term is indexed")));
        }
        std::fs::write(path, out).map_err(|e| MatrixError::Io(path.display().to_string(), e))
    }

    /// Parse a TSV in the export layout. A trailing `mean` column is
    /// accepted and ignored (the mean is always derived from the cells).
    pub fn from_tsv(path: &Path) -> Result<Self, MatrixError> {
        let raw =
            std::fs::read_to_string(path).map_err(|e| MatrixError::Io(path.display().to_string(), e))?;
        let mut lines = raw.lines();
        let header = lines.next().ok_or_else(|| MatrixError::Format("empty file".into()))?;
        let mut columns: Vec<&str> = header.split('\t').collect();
        if columns.first() != Some(&"term") {
            return Err(MatrixError::Format("header must start with `term`".into()));
        }
        columns.remove(0);
        let has_mean = columns.last() == Some(&"mean");
        if has_mean {
            columns.pop();
        }
        let communities: Vec<String> = columns.iter().map(|s| s.to_string()).collect();
        let mut terms = Vec::new();
        let mut scores = Vec::new();
        for (lineno, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let expected = 1 + communities.len() + usize::from(has_mean);
            if fields.len() != expected {
                return Err(MatrixError::Format(format!(
                    "line {}: expected {expected} fields, got {}",
                    lineno + 2,
                    fields.len()
                )));
            }
            terms.push(fields[0].to_string());
            for f in &fields[1..1 + communities.len()] {
                let v: f64 = f
                    .parse()
                    .map_err(|_| MatrixError::Format(format!("line {}: bad score {f:?}", lineno + 2)))?;
                scores.push(v);
            }
        }
        CriteriaMatrix::new(terms, communities, scores)
    }

    /// Binary save: magic, version, manifest JSON, indices, then raw
    /// little-endian f64 cells. Round-trips bit-exactly.
    pub fn save_binary(&self, path: &Path, manifest: &BuildManifest) -> Result<(), MatrixError> {
        let io_err = |e: std::io::Error| MatrixError::Io(path.display().to_string(), e);
        let mut w = std::io::BufWriter::new(std::fs::File::create(path).map_err(io_err)?);
        w.write_all(MAGIC).map_err(io_err)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes()).map_err(io_err)?;
        let manifest_json = serde_json::to_vec(manifest).expect("manifest serializes");
        w.write_all(&(manifest_json.len() as u64).to_le_bytes()).map_err(io_err)?;
        w.write_all(&manifest_json).map_err(io_err)?;
        let write_strings = |w: &mut dyn Write, items: &[String]| -> std::io::Result<()> {
            w.write_all(&(items.len() as u64).to_le_bytes())?;
            for s in items {
                w.write_all(&(s.len() as u64).to_le_bytes())?;
                w.write_all(s.as_bytes())?;
            }
            Ok(())
        };
        write_strings(&mut w, &self.terms).map_err(io_err)?;
        write_strings(&mut w, &self.communities).map_err(io_err)?;
        for v in &self.scores {
            w.write_all(&v.to_le_bytes()).map_err(io_err)?;
        }
        w.flush().map_err(io_err)
    }

    /// Load a matrix and its manifest from the binary format.
    pub fn load_binary(path: &Path) -> Result<(Self, BuildManifest), MatrixError> {
        let io_err = |e: std::io::Error| MatrixError::Io(path.display().to_string(), e);
        let mut r = std::io::BufReader::new(std::fs::File::open(path).map_err(io_err)?);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(io_err)?;
        if &magic != MAGIC {
            return Err(MatrixError::Format("bad magic bytes".into()));
        }
        let mut u32buf = [0u8; 4];
        r.read_exact(&mut u32buf).map_err(io_err)?;
        let version = u32::from_le_bytes(u32buf);
        if version != FORMAT_VERSION {
            return Err(MatrixError::Format(format!("unsupported version {version}")));
        }
        let mut u64buf = [0u8; 8];
        let mut read_len = |r: &mut dyn Read| -> Result<usize, MatrixError> {
            r.read_exact(&mut u64buf).map_err(io_err)?;
            Ok(u64::from_le_bytes(u64buf) as usize)
        };
        let manifest_len = read_len(&mut r)?;
        let mut manifest_bytes = vec![0u8; manifest_len];
        r.read_exact(&mut manifest_bytes).map_err(io_err)?;
        let manifest: BuildManifest = serde_json::from_slice(&manifest_bytes)
            .map_err(|e| MatrixError::Format(format!("manifest: {e}")))?;
        let mut read_strings = |r: &mut dyn Read| -> Result<Vec<String>, MatrixError> {
            let mut u64buf = [0u8; 8];
            r.read_exact(&mut u64buf).map_err(io_err)?;
            let n = u64::from_le_bytes(u64buf) as usize;
            let mut items = Vec::with_capacity(n);
            for _ in 0..n {
                r.read_exact(&mut u64buf).map_err(io_err)?;
                let len = u64::from_le_bytes(u64buf) as usize;
                let mut buf = vec![0u8; len];
                r.read_exact(&mut buf).map_err(io_err)?;
                items.push(
                    String::from_utf8(buf).map_err(|e| MatrixError::Format(format!("utf8: {e}")))?,
                );
            }
            Ok(items)
        };
        let terms = read_strings(&mut r)?;
        let communities = read_strings(&mut r)?;
        let mut scores = Vec::with_capacity(terms.len() * communities.len());
        let mut f64buf = [0u8; 8];
        for _ in 0..terms.len() * communities.len() {
            r.read_exact(&mut f64buf).map_err(io_err)?;
            scores.push(f64::from_le_bytes(f64buf));
        }
        Ok((CriteriaMatrix::new(terms, communities, scores)?, manifest))
    }
}

/// One entry from [`CriteriaMatrix::top_divergent_terms`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergentTerm {
    pub term: String,
    pub community_score: f64,
    pub mean_others: f64,
}

/// Score every vocabulary term with every community model. The build is
/// total: any unscorable cell fails the whole build. Columns fan out in
/// parallel; the result is deterministic given frozen models.
pub fn build_matrix(
    models: &BTreeMap<String, PatModel>,
    vocab: &TermVocabulary,
) -> Result<(CriteriaMatrix, BuildManifest), MatrixError> {
    if models.is_empty() || vocab.is_empty() {
        return Err(MatrixError::Empty);
    }
    let communities: Vec<String> = models.keys().cloned().collect();
    let columns: Vec<Vec<f64>> = communities
        .par_iter()
        .map(|c| {
            let model = &models[c];
            scoring::batch_score(model, &vocab.terms)
                .into_iter()
                .map(|r| r.map(|s| s.probability).unwrap_or(f64::NAN))
                .collect()
        })
        .collect();

    let nan_count = columns.iter().flatten().filter(|v| v.is_nan()).count();
    if nan_count > 0 {
        return Err(MatrixError::IncompleteScores { nan_count });
    }

    let mut scores = Vec::with_capacity(vocab.len() * communities.len());
    for i in 0..vocab.len() {
        for col in &columns {
            scores.push(col[i]);
        }
    }
    let matrix = CriteriaMatrix::new(vocab.terms.clone(), communities, scores)?;

    let vocab_hash = crate::hashing::sha256_parts(vocab.terms.iter().map(|t| t.as_bytes()));
    let model_hashes =
        models.iter().map(|(c, m)| (c.clone(), m.weights_fingerprint())).collect();
    let manifest = BuildManifest {
        vocab_hash,
        model_hashes,
        created_unix: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
    };
    Ok((matrix, manifest))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> CriteriaMatrix {
        CriteriaMatrix::new(
            vec!["hot".into(), "cold".into(), "warm".into()],
            vec!["alpha".into(), "beta".into()],
            vec![0.99, 0.40, 0.10, 0.12, 0.50, 0.50],
        )
        .unwrap()
    }

    #[test]
    fn lookup_returns_written_cells() {
        let m = small();
        assert_eq!(m.lookup("hot", "alpha").unwrap(), 0.99);
        assert_eq!(m.lookup("cold", "beta").unwrap(), 0.12);
    }

    #[test]
    fn mean_column_is_row_mean() {
        let m = small();
        assert!((m.lookup("hot", "mean").unwrap() - (0.99 + 0.40) / 2.0).abs() < 1e-15);
        assert_eq!(m.lookup("warm", "mean").unwrap(), 0.5);
    }

    #[test]
    fn unknown_indices_are_not_found() {
        let m = small();
        assert!(matches!(m.lookup("nope", "alpha"), Err(MatrixError::UnknownTerm(_))));
        assert!(matches!(m.lookup("hot", "nope"), Err(MatrixError::UnknownCommunity(_))));
    }

    #[test]
    fn dominant_term_ranks_first() {
        let m = small();
        let top = m.top_divergent_terms("alpha", 2).unwrap();
        assert_eq!(top[0].term, "hot");
        assert_eq!(top[0].community_score, 0.99);
        assert_eq!(top[0].mean_others, 0.40);
    }

    #[test]
    fn k_beyond_len_returns_all_ranked() {
        let m = small();
        let top = m.top_divergent_terms("alpha", 100).unwrap();
        assert_eq!(top.len(), 3);
        let diffs: Vec<f64> =
            top.iter().map(|d| d.community_score - d.mean_others).collect();
        assert!(diffs.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn divergence_needs_two_communities() {
        let m = CriteriaMatrix::new(vec!["t".into()], vec!["only".into()], vec![0.5]).unwrap();
        assert!(matches!(m.top_divergent_terms("only", 1), Err(MatrixError::TooFewCommunities)));
    }

    #[test]
    fn rejects_out_of_range_and_nan() {
        let bad = CriteriaMatrix::new(vec!["t".into()], vec!["c".into()], vec![1.5]);
        assert!(matches!(bad, Err(MatrixError::OutOfRange { .. })));
        let nan = CriteriaMatrix::new(vec!["t".into()], vec!["c".into()], vec![f64::NAN]);
        assert!(matches!(nan, Err(MatrixError::IncompleteScores { nan_count: 1 })));
    }

    #[test]
    fn rejects_duplicates_and_shape_mismatch() {
        let dup = CriteriaMatrix::new(
            vec!["t".into(), "t".into()],
            vec!["c".into()],
            vec![0.1, 0.2],
        );
        assert!(matches!(dup, Err(MatrixError::DuplicateIndex { kind: "term", .. })));
        let shape = CriteriaMatrix::new(vec!["t".into()], vec!["c".into()], vec![0.1, 0.2]);
        assert!(matches!(shape, Err(MatrixError::ShapeMismatch { .. })));
    }

    fn manifest() -> BuildManifest {
        BuildManifest {
            vocab_hash: "v".into(),
            model_hashes: BTreeMap::from([("alpha".to_string(), "h".to_string())]),
            created_unix: 1,
            tool_version: "test".into(),
        }
    }

    #[test]
    fn binary_round_trip_is_bit_exact() {
        let m = small();
        let f = tempfile::NamedTempFile::new().unwrap();
        m.save_binary(f.path(), &manifest()).unwrap();
        let (back, mf) = CriteriaMatrix::load_binary(f.path()).unwrap();
        assert_eq!(back.terms, m.terms);
        assert_eq!(back.communities, m.communities);
        for (a, b) in m.scores.iter().zip(&back.scores) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(mf, manifest());
    }

    #[test]
    fn corrupted_magic_is_rejected() {
        let f = tempfile::NamedTempFile::new().unwrap();
        std::fs::write(f.path(), b"NOPE0000").unwrap();
        assert!(matches!(CriteriaMatrix::load_binary(f.path()), Err(MatrixError::Format(_))));
    }

    #[test]
    fn tsv_round_trip_to_six_decimals() {
        let m = small();
        let f = tempfile::NamedTempFile::new().unwrap();
        m.export_tsv(f.path()).unwrap();
        let raw = std::fs::read_to_string(f.path()).unwrap();
        assert!(raw.starts_with("term\talpha\tbeta\tmean\n"));
        let back = CriteriaMatrix::from_tsv(f.path()).unwrap();
        for t in m.terms() {
            for c in m.communities() {
                let a = m.lookup(t, c).unwrap();
                let b = back.lookup(t, c).unwrap();
                assert!((a - b).abs() < 5e-7, "{t}/{c}: {a} vs {b}");
            }
        }
    }
}
