//! Shared pieces of the line-oriented text formats.

use std::str::FromStr;

use crate::error::{parse_err, Error, Result};

const MAGIC: &str = "# beamcausal";

pub(crate) fn header(kind: &str, version: u32) -> String {
    format!("{MAGIC} {kind} v{version}\n")
}

/// Line cursor that remembers 1-based line numbers.
pub(crate) struct Cursor<'a> {
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Cursor<'a> {
    pub(crate) fn new(text: &'a str) -> Self {
        Cursor {
            lines: text.lines().enumerate(),
            last: 0,
        }
    }

    pub(crate) fn line_no(&self) -> usize {
        self.last
    }

    pub(crate) fn next_line(&mut self) -> Option<(usize, &'a str)> {
        self.lines.next().map(|(i, l)| {
            self.last = i + 1;
            (i + 1, l)
        })
    }

    pub(crate) fn expect_line(&mut self, what: &str) -> Result<(usize, &'a str)> {
        let after = self.last;
        self.next_line()
            .ok_or_else(|| parse_err(after + 1, format!("unexpected end of file, expected {what}")))
    }

    pub(crate) fn expect_header(&mut self, kind: &str, version: u32) -> Result<()> {
        let (_, line) = self.expect_line("file header")?;
        let expected = format!("{kind} v{version}");
        let found = match line.strip_prefix(MAGIC) {
            Some(rest) => rest.trim().to_string(),
            None => format!("unrecognized header {line:?}"),
        };
        if found != expected {
            return Err(Error::Schema { expected, found });
        }
        Ok(())
    }

    /// Reads `key = value` and checks the key.
    pub(crate) fn expect_kv(&mut self, key: &str) -> Result<(usize, &'a str)> {
        let (no, line) = self.expect_line(key)?;
        let (k, v) = split_kv(no, line)?;
        if k != key {
            return Err(parse_err(no, format!("expected key {key:?}, found {k:?}")));
        }
        Ok((no, v))
    }

    pub(crate) fn parse_kv<T: FromStr>(&mut self, key: &str) -> Result<T> {
        let (no, v) = self.expect_kv(key)?;
        parse_value(no, v, key)
    }
}

pub(crate) fn split_kv(no: usize, line: &str) -> Result<(&str, &str)> {
    let (k, v) = line
        .split_once('=')
        .ok_or_else(|| parse_err(no, format!("expected `key = value`, found {line:?}")))?;
    Ok((k.trim(), v.trim()))
}

pub(crate) fn parse_value<T: FromStr>(no: usize, v: &str, what: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| parse_err(no, format!("invalid {what}: {v:?}")))
}

pub(crate) fn parse_list<T: FromStr>(no: usize, v: &str, what: &str) -> Result<Vec<T>> {
    let v = v.trim();
    if v.is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|s| parse_value(no, s, what)).collect()
}

pub(crate) fn join<T: ToString>(items: &[T]) -> String {
    items
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(",")
}
