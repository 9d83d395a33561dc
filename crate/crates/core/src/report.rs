//! Text formats shared by the engine and the command layer: event-log
//! records and fixed-precision numbers.

use std::fmt;

use thiserror::Error;

use crate::time::SimTime;

/// Six significant digits in plain decimal notation (never an exponent).
/// Infinities print as `inf`/`-inf`, NaN as `nan`.
pub fn fmt_sig6(x: f64) -> String {
    if x.is_nan() {
        return "nan".to_string();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.to_string();
    }
    if x == 0.0 {
        return "0.00000".to_string();
    }
    let mag = x.abs().log10().floor() as i32;
    let decimals = (5 - mag).clamp(0, 20) as usize;
    let s = format!("{x:.decimals$}");
    // rounding can produce "-0.00000"
    if s.starts_with('-') && s[1..].chars().all(|c| c == '0' || c == '.') {
        s[1..].to_string()
    } else {
        s
    }
}

/// One event-log line: `t,kind,subject,detail` with `detail` as
/// `key=value` pairs joined by `;`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogRecord {
    pub t: SimTime,
    pub kind: String,
    pub subject: String,
    pub detail: Vec<(String, String)>,
}

impl LogRecord {
    pub fn new(t: SimTime, kind: &str, subject: &str) -> Self {
        LogRecord { t, kind: kind.to_string(), subject: subject.to_string(), detail: Vec::new() }
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.detail.push((key.to_string(), value.to_string()));
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.detail.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn parse(line: &str) -> Result<LogRecord, LogParseError> {
        let bad = || LogParseError(line.to_string());
        let mut parts = line.splitn(4, ',');
        let t = parts.next().ok_or_else(bad)?;
        let kind = parts.next().ok_or_else(bad)?;
        let subject = parts.next().ok_or_else(bad)?;
        let detail = parts.next().ok_or_else(bad)?;
        let (secs, millis) = t.split_once('.').ok_or_else(bad)?;
        if millis.len() != 3 {
            return Err(bad());
        }
        let ms = secs.parse::<u64>().map_err(|_| bad())? * 1000 + millis.parse::<u64>().map_err(|_| bad())?;
        let mut pairs = Vec::new();
        if !detail.is_empty() {
            for kv in detail.split(';') {
                let (k, v) = kv.split_once('=').ok_or_else(bad)?;
                pairs.push((k.to_string(), v.to_string()));
            }
        }
        Ok(LogRecord { t: SimTime::from_millis(ms), kind: kind.to_string(), subject: subject.to_string(), detail: pairs })
    }
}

impl fmt::Display for LogRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{},", self.t, self.kind, self.subject)?;
        for (i, (k, v)) in self.detail.iter().enumerate() {
            if i > 0 {
                f.write_str(";")?;
            }
            write!(f, "{k}={v}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("malformed event-log line {0:?}")]
pub struct LogParseError(pub String);

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_digits() {
        assert_eq!(fmt_sig6(1.0), "1.00000");
        assert_eq!(fmt_sig6(3600.0), "3600.00");
        assert_eq!(fmt_sig6(123456.7), "123457");
        assert_eq!(fmt_sig6(0.000123456789), "0.000123457");
        assert_eq!(fmt_sig6(-2.5), "-2.50000");
        assert_eq!(fmt_sig6(0.0), "0.00000");
        assert_eq!(fmt_sig6(f64::INFINITY), "inf");
        assert_eq!(fmt_sig6(1.0e12), "1000000000000");
    }

    #[test]
    fn log_round_trip() {
        let r = LogRecord::new(SimTime::from_millis(12_005), "shift_down", "S1").with("from", 0).with("to", 1);
        let line = r.to_string();
        assert_eq!(line, "12.005,shift_down,S1,from=0;to=1");
        assert_eq!(LogRecord::parse(&line).unwrap(), r);
        let bare = LogRecord::new(SimTime::ZERO, "end", "");
        assert_eq!(LogRecord::parse(&bare.to_string()).unwrap(), bare);
    }
}
