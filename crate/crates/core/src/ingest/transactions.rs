use std::io::Read;
use std::path::Path;

use crate::directory::CategoryDirectory;
use crate::error::{Error, Result};
use crate::money::{AmountError, Cents};

pub const TRANSACTIONS_HEADER: [&str; 4] = ["user_id", "timestamp", "amount", "mcc"];

/// One debit-card purchase.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransactionRecord {
    pub user_id: String,
    /// Seconds since the Unix epoch, UTC.
    pub timestamp: i64,
    pub amount: Cents,
    pub mcc: u32,
    /// False when `mcc` is not in the directory; such rows count toward totals only.
    pub valid_mcc: bool,
}

/// A row skipped during parsing, with the reason.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowDiagnostic {
    pub line: u64,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct ParsedTransactions {
    pub records: Vec<TransactionRecord>,
    pub rejected: Vec<RowDiagnostic>,
    pub invalid_mcc: usize,
}

impl ParsedTransactions {
    pub fn total(&self) -> Cents {
        self.records.iter().map(|r| r.amount).sum()
    }
}

pub fn parse_transactions(path: &Path, directory: &CategoryDirectory) -> Result<ParsedTransactions> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_transactions_from_reader(std::io::BufReader::new(file), path, directory)
}

pub fn parse_transactions_from_reader<R: Read>(
    reader: R,
    origin: &Path,
    directory: &CategoryDirectory,
) -> Result<ParsedTransactions> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    check_header(&mut rdr, origin, &TRANSACTIONS_HEADER)?;

    let mut out = ParsedTransactions::default();
    let mut row = csv::StringRecord::new();
    let mut line = 1u64;
    while rdr
        .read_record(&mut row)
        .map_err(|e| Error::parse(origin, line + 1, e.to_string()))?
    {
        line = row.position().map_or(line + 1, |p| p.line());
        if row.len() != 4 {
            return Err(Error::parse(
                origin,
                line,
                format!("expected 4 fields, found {}", row.len()),
            ));
        }
        let user_id = &row[0];
        if user_id.is_empty() {
            return Err(Error::parse(origin, line, "empty user_id"));
        }
        let timestamp: i64 = row[1]
            .parse()
            .map_err(|_| Error::parse(origin, line, format!("bad timestamp `{}`", &row[1])))?;
        let mcc: u32 = row[3]
            .parse()
            .map_err(|_| Error::parse(origin, line, format!("bad mcc `{}`", &row[3])))?;
        let amount = match row[2].parse::<Cents>() {
            Ok(a) => a,
            Err(AmountError::Negative) => {
                log::warn!("{}:{line}: negative amount `{}` rejected", origin.display(), &row[2]);
                out.rejected.push(RowDiagnostic {
                    line,
                    message: format!("negative amount `{}`", &row[2]),
                });
                continue;
            }
            Err(e) => return Err(Error::parse(origin, line, e.to_string())),
        };
        let valid_mcc = directory.contains(mcc);
        if !valid_mcc {
            out.invalid_mcc += 1;
        }
        out.records.push(TransactionRecord {
            user_id: user_id.to_string(),
            timestamp,
            amount,
            mcc,
            valid_mcc,
        });
    }
    Ok(out)
}

pub(crate) fn check_header<R: Read>(rdr: &mut csv::Reader<R>, origin: &Path, expected: &[&str]) -> Result<()> {
    let headers = rdr.headers().map_err(|e| Error::parse(origin, 1, e.to_string()))?;
    if headers.is_empty() {
        // an empty file has no header; treat as zero rows
        return Ok(());
    }
    let found: Vec<&str> = headers.iter().collect();
    if found != expected {
        return Err(Error::parse(
            origin,
            1,
            format!("expected header `{}`, found `{}`", expected.join(","), found.join(",")),
        ));
    }
    Ok(())
}

pub fn write_transactions<W: std::io::Write>(writer: W, records: &[TransactionRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(TRANSACTIONS_HEADER)?;
    for r in records {
        w.write_record([
            r.user_id.as_str(),
            &r.timestamp.to_string(),
            &r.amount.to_string(),
            &r.mcc.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<transactions>", e))?;
    Ok(())
}
