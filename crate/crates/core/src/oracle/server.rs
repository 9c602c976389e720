//! Server side of the stdio protocol, used to expose in-process oracles
//! (e.g. the stubs) as model processes.

use std::io::{self, BufRead, Write};

use serde::de::DeserializeOwned;
use serde_json::{json, Value};

use super::{Handshake, NerOracle, NerRequest, OracleRequest, RelationOracle};

/// Oracle exposed by [`serve_stdio`].
pub enum Service<'a> {
    Relation(&'a dyn RelationOracle),
    Ner { oracle: &'a dyn NerOracle, labels: Vec<String> },
}

fn error_line(line: &str, message: String) -> Value {
    let id = serde_json::from_str::<Value>(line).ok().and_then(|v| v.get("id").cloned()).unwrap_or(Value::Null);
    json!({"id": id, "error": message})
}

fn answer<Q: DeserializeOwned, R: serde::Serialize>(
    line: &str,
    call: impl FnOnce(&[Q]) -> Result<Vec<R>, super::OracleError>,
) -> Value {
    match serde_json::from_str::<Q>(line) {
        Ok(req) => match call(std::slice::from_ref(&req)) {
            Ok(mut out) if out.len() == 1 => serde_json::to_value(out.remove(0)).expect("response serializes"),
            Ok(out) => error_line(line, format!("oracle returned {} responses for one request", out.len())),
            Err(e) => error_line(line, e.to_string()),
        },
        Err(e) => error_line(line, format!("malformed request: {e}")),
    }
}

/// Writes the handshake, then answers each request line with one response
/// line until `input` ends. Malformed lines get `{"id": <id or null>, "error": ...}`.
pub fn serve_stdio(service: Service<'_>, input: impl BufRead, mut output: impl Write) -> io::Result<()> {
    let labels = match &service {
        Service::Relation(o) => o.labels(),
        Service::Ner { labels, .. } => labels.clone(),
    };
    serde_json::to_writer(&mut output, &Handshake { labels })?;
    output.write_all(b"\n")?;
    output.flush()?;

    for line in input.lines() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let response = match &service {
            Service::Relation(o) => answer::<OracleRequest, _>(line, |b| o.predict_batch(b)),
            Service::Ner { oracle, .. } => answer::<NerRequest, _>(line, |b| oracle.tag_batch(b)),
        };
        serde_json::to_writer(&mut output, &response)?;
        output.write_all(b"\n")?;
        output.flush()?;
    }
    Ok(())
}
