//! Report envelope and JSON rendering.
//!
//! Reports are deterministic: no timestamps, struct fields serialize in
//! declaration order, and every float is written with 17 significant digits
//! so a reader recovers the exact doubles.

use std::io;

use serde::Serialize;

pub const REPORT_FORMAT_VERSION: &str = "1";

#[derive(Serialize)]
pub struct Versions {
    pub tool: &'static str,
    pub tree_format: &'static str,
    pub report_format: &'static str,
}

impl Versions {
    pub fn current() -> Self {
        Self {
            tool: env!("CARGO_PKG_VERSION"),
            tree_format: magdiv::tree::TREE_FORMAT_VERSION,
            report_format: REPORT_FORMAT_VERSION,
        }
    }
}

#[derive(Serialize)]
pub struct RunReport<R: Serialize> {
    pub command: &'static str,
    pub input_digest: String,
    pub versions: Versions,
    pub results: R,
}

/// JSON formatter that writes every finite double as `{:.16e}` (17
/// significant digits). Non-finite values are serialized as `null` before
/// the formatter is reached.
struct SignificantDigits17;

impl serde_json::ser::Formatter for SignificantDigits17 {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        write!(writer, "{value:.16e}")
    }
}

pub fn render_json<T: Serialize>(value: &T) -> String {
    let mut out = Vec::new();
    let mut serializer = serde_json::Serializer::with_formatter(&mut out, SignificantDigits17);
    value
        .serialize(&mut serializer)
        .expect("report serialization cannot fail");
    String::from_utf8(out).expect("serde_json produces UTF-8")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(bytes))
}

/// Formats a float the same way the JSON renderer does, for CSV sidecars.
pub fn format_f64(value: f64) -> String {
    format!("{value:.16e}")
}
