//! `key=value` text shared by configuration records.

use crate::error::{Error, Result};

pub fn parse_value<V: std::str::FromStr>(key: &str, value: &str) -> Result<V> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Invalid(format!("config key `{key}`: cannot parse `{value}`")))
}

/// `k1=v1;k2=v2` from ordered pairs.
pub fn describe(pairs: &[(&'static str, String)]) -> String {
    let parts: Vec<String> = pairs.iter().map(|(k, v)| format!("{k}={v}")).collect();
    parts.join(";")
}

/// Inverse of [`describe`].
pub fn parse_description(text: &str) -> Result<Vec<(String, String)>> {
    text.split(';')
        .filter(|s| !s.is_empty())
        .map(|item| {
            item.split_once('=')
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .ok_or_else(|| Error::Invalid(format!("malformed config entry `{item}`")))
        })
        .collect()
}
