use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::transactions::check_header;
use crate::error::{Error, Result};

pub const EVENTS_HEADER: [&str; 5] = ["caller", "callee", "timestamp", "kind", "duration"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CommKind {
    Call,
    Sms,
}

impl CommKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CommKind::Call => "call",
            CommKind::Sms => "sms",
        }
    }
}

/// A directed call or SMS between two users.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommEvent {
    pub caller: String,
    pub callee: String,
    pub timestamp: i64,
    pub kind: CommKind,
    /// Seconds; zero for SMS.
    pub duration: u32,
}

impl CommEvent {
    pub fn new(caller: impl Into<String>, callee: impl Into<String>) -> Self {
        CommEvent {
            caller: caller.into(),
            callee: callee.into(),
            timestamp: 0,
            kind: CommKind::Call,
            duration: 0,
        }
    }
}

pub fn parse_events(path: &Path) -> Result<Vec<CommEvent>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_events_from_reader(std::io::BufReader::new(file), path)
}

pub fn parse_events_from_reader<R: Read>(reader: R, origin: &Path) -> Result<Vec<CommEvent>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    check_header(&mut rdr, origin, &EVENTS_HEADER)?;
    let mut out = Vec::new();
    let mut row = csv::StringRecord::new();
    let mut line = 1u64;
    while rdr
        .read_record(&mut row)
        .map_err(|e| Error::parse(origin, line + 1, e.to_string()))?
    {
        line = row.position().map_or(line + 1, |p| p.line());
        if row.len() != 5 {
            return Err(Error::parse(
                origin,
                line,
                format!("expected 5 fields, found {}", row.len()),
            ));
        }
        let timestamp = row[2]
            .parse()
            .map_err(|_| Error::parse(origin, line, format!("bad timestamp `{}`", &row[2])))?;
        let kind = match row[3].to_ascii_lowercase().as_str() {
            "call" => CommKind::Call,
            "sms" => CommKind::Sms,
            other => return Err(Error::parse(origin, line, format!("bad kind `{other}`"))),
        };
        let duration = if row[4].is_empty() {
            0
        } else {
            row[4]
                .parse()
                .map_err(|_| Error::parse(origin, line, format!("bad duration `{}`", &row[4])))?
        };
        if row[0].is_empty() || row[1].is_empty() {
            return Err(Error::parse(origin, line, "empty caller or callee"));
        }
        out.push(CommEvent {
            caller: row[0].to_string(),
            callee: row[1].to_string(),
            timestamp,
            kind,
            duration,
        });
    }
    Ok(out)
}

pub fn write_events<W: std::io::Write>(writer: W, events: &[CommEvent]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(EVENTS_HEADER)?;
    for e in events {
        w.write_record([
            e.caller.as_str(),
            e.callee.as_str(),
            &e.timestamp.to_string(),
            e.kind.as_str(),
            &e.duration.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<events>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_calls_and_sms() {
        let text = "caller,callee,timestamp,kind,duration\na,b,10,call,35\nb,a,11,SMS,0\n";
        let events = parse_events_from_reader(text.as_bytes(), Path::new("e.csv")).unwrap();
        assert_eq!(events.len(), 2);
        assert_eq!(events[0].duration, 35);
        assert_eq!(events[1].kind, CommKind::Sms);
    }

    #[test]
    fn bad_kind_reports_line() {
        let text = "caller,callee,timestamp,kind,duration\na,b,10,fax,0\n";
        let err = parse_events_from_reader(text.as_bytes(), Path::new("e.csv")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }
}
