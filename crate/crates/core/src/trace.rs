//! Line-oriented trace records: `step=N agent=A kind=K key=value ...`.
//! Header lines start with `#`.

use std::fmt;

use crate::error::GlpError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Record {
    pub step: u64,
    pub agent: String,
    pub kind: String,
    pub fields: Vec<(String, String)>,
}

impl Record {
    pub fn new(step: u64, agent: &str, kind: &str) -> Record {
        Record { step, agent: agent.to_string(), kind: kind.to_string(), fields: Vec::new() }
    }

    pub fn with(mut self, key: &str, value: impl Into<String>) -> Record {
        self.fields.push((key.to_string(), value.into()));
        self
    }

    pub fn push(&mut self, key: &str, value: impl Into<String>) {
        self.fields.push((key.to_string(), value.into()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.fields.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn parse(line: &str, lineno: usize) -> Result<Record, GlpError> {
        let err = |msg: String| GlpError::Trace { line: lineno, msg };
        let mut step = None;
        let mut agent = None;
        let mut kind = None;
        let mut fields = Vec::new();
        for part in split_fields(line) {
            let (k, v) = part.split_once('=').ok_or_else(|| err(format!("field without `=`: {part}")))?;
            match k {
                "step" if step.is_none() => step = Some(v.parse::<u64>().map_err(|_| err(format!("bad step {v}")))?),
                "agent" if agent.is_none() => agent = Some(v.to_string()),
                "kind" if kind.is_none() => kind = Some(v.to_string()),
                _ => fields.push((k.to_string(), v.to_string())),
            }
        }
        Ok(Record {
            step: step.ok_or_else(|| err("missing step".into()))?,
            agent: agent.ok_or_else(|| err("missing agent".into()))?,
            kind: kind.ok_or_else(|| err("missing kind".into()))?,
            fields,
        })
    }
}

impl fmt::Display for Record {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "step={} agent={} kind={}", self.step, self.agent, self.kind)?;
        for (k, v) in &self.fields {
            write!(f, " {k}={v}")?;
        }
        Ok(())
    }
}

/// Split on spaces that are outside quotes and brackets.
pub fn split_fields(line: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut quoted = false;
    let mut escaped = false;
    let mut start = 0;
    for (i, c) in line.char_indices() {
        if quoted {
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == '\'' {
                quoted = false;
            }
            continue;
        }
        match c {
            '\'' => quoted = true,
            '(' | '[' => depth += 1,
            ')' | ']' => depth -= 1,
            ' ' if depth == 0 => {
                if i > start {
                    out.push(&line[start..i]);
                }
                start = i + 1;
            }
            _ => {}
        }
    }
    if start < line.len() {
        out.push(&line[start..]);
    }
    out
}

#[derive(Debug, Clone, Default)]
pub struct Trace {
    pub header: Vec<String>,
    pub records: Vec<Record>,
}

impl Trace {
    pub fn parse(text: &str) -> Result<Trace, GlpError> {
        let mut t = Trace::default();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            if let Some(h) = line.strip_prefix('#') {
                t.header.push(h.trim_start().to_string());
            } else {
                t.records.push(Record::parse(line, i + 1)?);
            }
        }
        Ok(t)
    }

    /// Header lines starting with `tag `, with the tag removed.
    pub fn header_lines<'a>(&'a self, tag: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.header.iter().filter_map(move |h| h.strip_prefix(tag).and_then(|r| r.strip_prefix(' ')))
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for h in &self.header {
            s.push_str("# ");
            s.push_str(h);
            s.push('\n');
        }
        for r in &self.records {
            s.push_str(&r.to_string());
            s.push('\n');
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let r = Record::new(3, "main", "reduce")
            .with("goal", "p('a b',[x,y])")
            .with("sigma", "[bind(_W1,f(a, b))]");
        let text = r.to_string();
        assert_eq!(Record::parse(&text, 1).unwrap(), r);
    }

    #[test]
    fn quoted_brackets_do_not_confuse_split() {
        assert_eq!(split_fields("a=')' b=[1]"), vec!["a=')'", "b=[1]"]);
    }
}
