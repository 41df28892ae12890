use chrono::{NaiveDateTime, TimeDelta};

use crate::error::{Error, Result};

/// Minutes since 1970-01-01T00:00:00 (naive local time).
pub type Minutes = i64;

pub const MINUTES_PER_HOUR: Minutes = 60;
pub const MINUTES_PER_DAY: Minutes = 1440;

const FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

pub fn parse_timestamp(s: &str) -> Result<Minutes> {
    let dt = NaiveDateTime::parse_from_str(s.trim(), FORMAT).map_err(|e| Error::InvalidParameter(format!("bad timestamp `{s}`: {e}")))?;
    Ok(dt.and_utc().timestamp().div_euclid(60))
}

pub fn format_timestamp(t: Minutes) -> String {
    let epoch = NaiveDateTime::default();
    (epoch + TimeDelta::minutes(t)).format(FORMAT).to_string()
}
