//! Streaming dump ingestion.
//!
//! Lines are read into a reused buffer and parsed in bounded batches on the
//! rayon pool; entities are merged into the store in input order on the
//! calling thread. A batch never holds more than [`BATCH_BYTES`] of raw text
//! (plus one line), and the read buffer is shrunk after an oversized line, so
//! raw input is not retained past its batch.

use std::io::BufRead;

use rayon::prelude::*;
use recoin_core::parse::{parse_line, Line};
use recoin_core::{EntityStore, ParseError};

use crate::error::{Error, Result};

pub const BATCH_LINES: usize = 4096;
pub const BATCH_BYTES: usize = 8 << 20;
/// Read buffers above this capacity are shrunk back after use.
pub const BUFFER_KEEP: usize = 1 << 20;

#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    /// Fail on the first bad line and reject unknown record keys.
    pub strict: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoadReport {
    /// Entities in the resulting store.
    pub loaded: usize,
    pub skipped: usize,
    /// Records whose id had been seen before (the later record wins).
    pub duplicates: usize,
    /// First few bad lines, as (1-based line number, error).
    pub errors: Vec<(u64, ParseError)>,
}

const MAX_REPORTED_ERRORS: usize = 20;

/// Reads `\n`-terminated lines into one reusable buffer.
pub struct LineReader<R> {
    inner: R,
    buf: Vec<u8>,
    line_no: u64,
}

impl<R: BufRead> LineReader<R> {
    pub fn new(inner: R) -> Self {
        Self {
            inner,
            buf: Vec::with_capacity(64 << 10),
            line_no: 0,
        }
    }

    /// Next line without its terminator, or `None` at end of input.
    pub fn next_line(&mut self) -> Result<Option<(u64, &[u8])>> {
        if self.buf.capacity() > BUFFER_KEEP {
            self.buf = Vec::with_capacity(64 << 10);
        }
        self.buf.clear();
        if self.inner.read_until(b'\n', &mut self.buf)? == 0 {
            return Ok(None);
        }
        self.line_no += 1;
        let mut line: &[u8] = &self.buf;
        if let Some(rest) = line.strip_suffix(b"\n") {
            line = rest.strip_suffix(b"\r").unwrap_or(rest);
        }
        Ok(Some((self.line_no, line)))
    }

    pub fn buffer_capacity(&self) -> usize {
        self.buf.capacity()
    }
}

/// Loads every record of a line-delimited dump.
///
/// Bad lines are counted and skipped unless `options.strict` is set, in which
/// case the first one aborts the load with its line number.
pub fn load_dump<R: BufRead>(source: R, options: LoadOptions) -> Result<(EntityStore, LoadReport)> {
    let mut reader = LineReader::new(source);
    let mut store = EntityStore::new();
    let mut report = LoadReport::default();
    let mut batch: Vec<(u64, String)> = Vec::with_capacity(BATCH_LINES);
    let mut batch_bytes = 0;
    loop {
        let next = reader.next_line()?;
        let done = next.is_none();
        if let Some((line_no, raw)) = next {
            let text = match std::str::from_utf8(raw) {
                Ok(t) => t.to_owned(),
                Err(e) => {
                    let err = ParseError::new(e.valid_up_to(), "invalid UTF-8");
                    reject(&mut report, options, line_no, err)?;
                    continue;
                }
            };
            batch_bytes += text.len();
            batch.push((line_no, text));
        }
        if done || batch.len() >= BATCH_LINES || batch_bytes >= BATCH_BYTES {
            let parsed: Vec<(u64, Result<Line, ParseError>)> = batch
                .par_drain(..)
                .map(|(n, text)| (n, parse_line(&text, options.strict)))
                .collect();
            batch_bytes = 0;
            for (line_no, outcome) in parsed {
                match outcome {
                    Ok(Line::Entity(e)) => {
                        if store.insert(e).is_some() {
                            report.duplicates += 1;
                        }
                    }
                    Ok(Line::Skip) => {}
                    Err(err) => reject(&mut report, options, line_no, err)?,
                }
            }
        }
        if done {
            break;
        }
    }
    report.loaded = store.count();
    Ok((store, report))
}

fn reject(report: &mut LoadReport, options: LoadOptions, line: u64, err: ParseError) -> Result<()> {
    if options.strict {
        return Err(Error::Line { line, source: err });
    }
    report.skipped += 1;
    if report.errors.len() < MAX_REPORTED_ERRORS {
        report.errors.push((line, err));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    const ASTRO: &str = concat!(
        r#"{"id":"A1","claims":{"P31":["Q5"],"P106":["QAST"],"P1":["x"],"P2":["x"],"P3":["x"]}}"#, "\n",
        r#"{"id":"A2","claims":{"P31":["Q5"],"P106":["QAST"],"P1":["x"],"P2":["x"]}}"#, "\n",
        r#"{"id":"A3","claims":{"P31":["Q5"],"P106":["QAST"],"P1":["x"]}}"#, "\n",
        r#"{"id":"A4","claims":{"P31":["Q5"],"P106":["QAST"],"P1":["x"],"P2":["x"],"P3":["x"],"P4":["x"]}}"#, "\n",
    );

    fn load(text: &str, strict: bool) -> Result<(EntityStore, LoadReport)> {
        load_dump(Cursor::new(text.as_bytes()), LoadOptions { strict })
    }

    #[test]
    fn empty_stream() {
        let (store, report) = load("", false).unwrap();
        assert_eq!(store.count(), 0);
        assert_eq!(report, LoadReport::default());
    }

    #[test]
    fn astro_fixture() {
        let (store, report) = load(ASTRO, true).unwrap();
        assert_eq!(store.count(), 4);
        assert_eq!(store, recoin_core::entity::astro_mini());
        assert_eq!(report.skipped, 0);
    }

    #[test]
    fn lenient_skips_bad_lines() {
        let lines: Vec<&str> = ASTRO.lines().collect();
        let text = format!("{}\n{}\n{{\"id\":\"A5\",\"claims\":\n{}\n", lines[0], lines[1], lines[2]);
        let (store, report) = load(&text, false).unwrap();
        assert_eq!((store.count(), report.skipped), (3, 1));
        assert_eq!(report.errors[0].0, 3);
    }

    #[test]
    fn strict_fails_with_line_number() {
        let text = format!("{ASTRO}not json\n");
        match load(&text, true) {
            Err(Error::Line { line, .. }) => assert_eq!(line, 5),
            other => panic!("expected line error, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_ids_last_wins() {
        let text = "{\"id\":\"Q1\",\"claims\":{\"P1\":[\"a\"]}}\n{\"id\":\"Q1\",\"claims\":{\"P2\":[\"b\"]}}\n";
        let (store, report) = load(text, false).unwrap();
        assert_eq!(report.duplicates, 1);
        assert!(store.get("Q1").unwrap().has("P2"));
        assert!(!store.get("Q1").unwrap().has("P1"));
    }

    #[test]
    fn crlf_blank_lines_and_missing_final_newline() {
        let text = "{\"id\":\"Q1\",\"claims\":{}}\r\n\n{\"id\":\"Q2\",\"claims\":{}}";
        let (store, report) = load(text, true).unwrap();
        assert_eq!((store.count(), report.skipped), (2, 0));
    }

    #[test]
    fn invalid_utf8_is_a_bad_line() {
        let mut bytes = b"{\"id\":\"Q1\",\"claims\":{}}\n".to_vec();
        bytes.extend_from_slice(b"{\"id\":\"\xff\"}\n");
        let (store, report) = load_dump(Cursor::new(bytes), LoadOptions::default()).unwrap();
        assert_eq!((store.count(), report.skipped), (1, 1));
    }

    #[test]
    fn oversized_line_buffer_is_released() {
        let padded = format!("{{\"id\":\"Q1\",{}\"claims\":{{}}}}\n", " ".repeat(8 << 20));
        let text = format!("{padded}{{\"id\":\"Q2\",\"claims\":{{}}}}\n");
        let mut reader = LineReader::new(Cursor::new(text.as_bytes()));
        let (_, first) = reader.next_line().unwrap().unwrap();
        assert!(first.len() > 8 << 20);
        assert!(reader.buffer_capacity() > BUFFER_KEEP);
        reader.next_line().unwrap().unwrap();
        assert!(reader.buffer_capacity() <= BUFFER_KEEP);
        let (store, _) = load(&text, true).unwrap();
        assert_eq!(store.count(), 2);
    }
}
