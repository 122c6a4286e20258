//! Streaming ingestion of JSONL and TSV comment files.

use std::fs::File;
use std::io::{BufRead, BufReader, Lines};
use std::path::Path;

use log::warn;

use super::{CommentRecord, CorpusError, Label};

/// On-disk record formats the ingester understands.
///
/// JSONL: one `{"id", "community", "text", "label", "timestamp"?}` object
/// per line. TSV: a header line `id<TAB>community<TAB>text<TAB>label`
/// followed by one record per line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IngestFormat {
    Jsonl,
    Tsv,
}

impl std::str::FromStr for IngestFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" => Ok(IngestFormat::Jsonl),
            "tsv" => Ok(IngestFormat::Tsv),
            other => Err(format!("unknown ingest format {other:?} (expected jsonl or tsv)")),
        }
    }
}

/// Counters accumulated while streaming a file.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IngestStats {
    /// Non-empty lines examined (excluding any TSV header).
    pub lines: usize,
    /// Lines skipped because they failed to parse or validate.
    pub malformed: usize,
}

/// A streaming reader over a comment file. Malformed lines are skipped
/// with a warning and counted; call [`IngestStream::finish`] after
/// exhaustion to retrieve the counters and enforce the mostly-malformed
/// check.
pub struct IngestStream {
    lines: Lines<BufReader<File>>,
    format: IngestFormat,
    path: String,
    stats: IngestStats,
    header_checked: bool,
    io_error: Option<std::io::Error>,
}

/// Open `path` for streaming ingestion. An unreadable file is fatal.
pub fn ingest(path: &Path, format: IngestFormat) -> Result<IngestStream, CorpusError> {
    let file = File::open(path).map_err(|e| CorpusError::Io(path.display().to_string(), e))?;
    Ok(IngestStream {
        lines: BufReader::new(file).lines(),
        format,
        path: path.display().to_string(),
        stats: IngestStats::default(),
        header_checked: format == IngestFormat::Jsonl,
        io_error: None,
    })
}

/// Read a whole file, returning the validated records and the counters.
/// Fails if more than half of the non-empty lines were malformed.
pub fn ingest_all(
    path: &Path,
    format: IngestFormat,
) -> Result<(Vec<CommentRecord>, IngestStats), CorpusError> {
    let mut stream = ingest(path, format)?;
    let records: Vec<CommentRecord> = stream.by_ref().collect();
    let stats = stream.finish()?;
    Ok((records, stats))
}

impl IngestStream {
    /// Counters so far.
    pub fn stats(&self) -> IngestStats {
        self.stats
    }

    /// Final counters. Fails if a read error interrupted the stream or if
    /// more than half of the examined lines were malformed.
    pub fn finish(self) -> Result<IngestStats, CorpusError> {
        if let Some(e) = self.io_error {
            return Err(CorpusError::Io(self.path, e));
        }
        if self.stats.lines > 0 && self.stats.malformed * 2 > self.stats.lines {
            return Err(CorpusError::MostlyMalformed {
                malformed: self.stats.malformed,
                total: self.stats.lines,
            });
        }
        Ok(self.stats)
    }

    fn parse_line(&self, line: &str) -> Result<CommentRecord, String> {
        match self.format {
            IngestFormat::Jsonl => serde_json::from_str::<CommentRecord>(line)
                .map_err(|e| e.to_string())
                .and_then(|r| r.validate().map_err(|e| e.to_string())),
            IngestFormat::Tsv => parse_tsv_record(line),
        }
    }
}

impl Iterator for IngestStream {
    type Item = CommentRecord;

    fn next(&mut self) -> Option<CommentRecord> {
        loop {
            let line = match self.lines.next()? {
                Ok(l) => l,
                Err(e) => {
                    self.io_error = Some(e);
                    return None;
                }
            };
            if !self.header_checked {
                self.header_checked = true;
                // A wrong header is counted malformed but does not abort;
                // the mostly-malformed check catches a wrong-format file.
                if line.trim_end() != "id\tcommunity\ttext\tlabel" {
                    warn!("{}: missing or wrong TSV header: {line:?}", self.path);
                    self.stats.lines += 1;
                    self.stats.malformed += 1;
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            self.stats.lines += 1;
            match self.parse_line(&line) {
                Ok(record) => return Some(record),
                Err(reason) => {
                    self.stats.malformed += 1;
                    warn!("{} line {}: skipping malformed record: {reason}", self.path, self.stats.lines);
                }
            }
        }
    }
}

fn parse_tsv_record(line: &str) -> Result<CommentRecord, String> {
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() != 4 {
        return Err(format!("expected 4 tab-separated fields, got {}", fields.len()));
    }
    let label: u8 = fields[3].trim().parse().map_err(|_| format!("bad label {:?}", fields[3]))?;
    let label = Label::from_u8(label).map_err(|e| e.to_string())?;
    CommentRecord::new(fields[0], fields[1], fields[2], label, None).map_err(|e| e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_temp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn three_valid_jsonl_lines_yield_three_records() {
        let f = write_temp(concat!(
            r#"{"id":"1","community":"games","text":"hello there","label":0}"#, "\n",
            r#"{"id":"2","community":"games","text":"go away","label":1}"#, "\n",
            r#"{"id":"3","community":"games","text":"nice  post","label":0,"timestamp":99}"#, "\n",
        ));
        let (records, stats) = ingest_all(f.path(), IngestFormat::Jsonl).unwrap();
        assert_eq!(records.len(), 3);
        assert_eq!(stats, IngestStats { lines: 3, malformed: 0 });
        assert_eq!(records[2].text, "nice post");
        assert_eq!(records[2].timestamp, Some(99));
    }

    #[test]
    fn missing_label_line_is_skipped_and_counted() {
        let mut contents = String::new();
        for i in 0..9 {
            contents.push_str(&format!(
                "{{\"id\":\"{i}\",\"community\":\"c\",\"text\":\"t {i}\",\"label\":0}}\n"
            ));
        }
        contents.push_str("{\"id\":\"x\",\"community\":\"c\",\"text\":\"no label\"}\n");
        let f = write_temp(&contents);
        let (records, stats) = ingest_all(f.path(), IngestFormat::Jsonl).unwrap();
        assert_eq!(records.len(), 9);
        assert_eq!(stats.malformed, 1);
    }

    #[test]
    fn empty_file_yields_empty_stream_without_error() {
        let f = write_temp("");
        let (records, stats) = ingest_all(f.path(), IngestFormat::Jsonl).unwrap();
        assert!(records.is_empty());
        assert_eq!(stats, IngestStats::default());
    }

    #[test]
    fn mostly_malformed_file_is_fatal() {
        let f = write_temp("garbage\nmore garbage\n{\"id\":\"1\",\"community\":\"c\",\"text\":\"t\",\"label\":1}\n");
        let err = ingest_all(f.path(), IngestFormat::Jsonl).unwrap_err();
        assert!(matches!(err, CorpusError::MostlyMalformed { malformed: 2, total: 3 }));
    }

    #[test]
    fn unreadable_file_is_fatal() {
        let err = ingest(Path::new("/no/such/file.jsonl"), IngestFormat::Jsonl);
        assert!(matches!(err, Err(CorpusError::Io(_, _))));
    }

    #[test]
    fn tsv_round_trip() {
        let f = write_temp("id\tcommunity\ttext\tlabel\na1\tgames\tsome comment text\t1\na2\tgames\tanother one\t0\n");
        let (records, stats) = ingest_all(f.path(), IngestFormat::Tsv).unwrap();
        assert_eq!(records.len(), 2);
        assert_eq!(stats.malformed, 0);
        assert_eq!(records[0].label, Label::Moderated);
        assert_eq!(records[0].timestamp, None);
    }

    #[test]
    fn tsv_wrong_column_count_is_malformed() {
        let f = write_temp("id\tcommunity\ttext\tlabel\na1\tgames\tmissing\na2\tgames\tok text\t0\n");
        let (records, stats) = ingest_all(f.path(), IngestFormat::Tsv).unwrap();
        assert_eq!(records.len(), 1);
        assert_eq!(stats.malformed, 1);
    }

    #[test]
    fn ingest_serialize_ingest_is_identity() {
        let f = write_temp(concat!(
            r#"{"id":"1","community":"games","text":"hello there","label":0}"#, "\n",
            r#"{"id":"2","community":"games","text":"go away now","label":1,"timestamp":7}"#, "\n",
        ));
        let (records, _) = ingest_all(f.path(), IngestFormat::Jsonl).unwrap();
        let mut serialized = String::new();
        for r in &records {
            serialized.push_str(&serde_json::to_string(r).unwrap());
            serialized.push('\n');
        }
        let f2 = write_temp(&serialized);
        let (records2, _) = ingest_all(f2.path(), IngestFormat::Jsonl).unwrap();
        assert_eq!(records, records2);
    }
}
