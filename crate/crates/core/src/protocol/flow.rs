//! Scans serialized transcripts for plaintext money flowing toward buyers.

use serde::Serialize;
use serde_json::Value;

const SENSITIVE: [&str; 5] = ["price", "balance", "amount", "escrow", "cost"];
const ALLOWED_SUFFIXES: [&str; 2] = ["_cipher", "_range"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Leak {
    pub line: usize,
    pub receiver: String,
    pub path: String,
}

fn is_sensitive(key: &str) -> bool {
    let k = key.to_ascii_lowercase();
    SENSITIVE.iter().any(|s| k.contains(s)) && !ALLOWED_SUFFIXES.iter().any(|s| k.ends_with(s))
}

fn walk(v: &Value, path: &str, out: &mut Vec<String>) {
    match v {
        Value::Object(map) => {
            for (k, child) in map {
                let p = format!("{path}.{k}");
                if is_sensitive(k) {
                    out.push(p.clone());
                }
                walk(child, &p, out);
            }
        }
        Value::Array(items) => {
            for (i, child) in items.iter().enumerate() {
                walk(child, &format!("{path}[{i}]"), out);
            }
        }
        _ => {}
    }
}

/// Every sensitive key in a buyer-bound message of a JSON-lines transcript.
/// Lines that do not parse are reported as leaks with path `<unparsed>`.
pub fn scan_transcript(jsonl: &str) -> Vec<Leak> {
    let mut leaks = Vec::new();
    for (n, line) in jsonl.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let Ok(v) = serde_json::from_str::<Value>(line) else {
            leaks.push(Leak {
                line: n + 1,
                receiver: String::new(),
                path: "<unparsed>".into(),
            });
            continue;
        };
        let receiver = v.get("receiver").and_then(Value::as_str).unwrap_or_default();
        if !receiver.starts_with("buyer") {
            continue;
        }
        let mut paths = Vec::new();
        if let Some(p) = v.get("payload") {
            walk(p, "payload", &mut paths);
        }
        leaks.extend(paths.into_iter().map(|path| Leak {
            line: n + 1,
            receiver: receiver.to_string(),
            path,
        }));
    }
    leaks
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ciphers_and_ranges_pass() {
        let t = r#"{"sender":"mms","receiver":"buyer:0","seq":1,"kind":"Quote","payload":{"session":1,"range":{"lo":1.0,"hi":4.0},"price_cipher":"2"}}
{"sender":"mms","receiver":"buyer:0","seq":2,"kind":"BalanceRangeResp","payload":{"balance_range":{"lo":0.0,"hi":3.0}}}"#;
        assert!(scan_transcript(t).is_empty());
    }

    #[test]
    fn plaintext_toward_buyer_is_flagged() {
        let t = r#"{"sender":"mms","receiver":"buyer:2","seq":1,"kind":"Quote","payload":{"session":1,"price_cipher":"2","price":3.0}}"#;
        let leaks = scan_transcript(t);
        assert_eq!(leaks.len(), 1);
        assert_eq!(leaks[0].path, "payload.price");
        assert_eq!(leaks[0].receiver, "buyer:2");
    }

    #[test]
    fn nested_keys_are_found() {
        let t = r#"{"sender":"ttp","receiver":"buyer:0","seq":1,"kind":"X","payload":{"a":[{"Balance":4}]}}"#;
        assert_eq!(scan_transcript(t)[0].path, "payload.a[0].Balance");
    }

    #[test]
    fn messages_to_other_parties_are_ignored() {
        let t = r#"{"sender":"mms","receiver":"ttp","seq":1,"kind":"ArchivePush","payload":{"record":{"escrowed_price":300}}}
{"sender":"buyer:0","receiver":"mms","seq":1,"kind":"RechargeReq","payload":{"user_id":1,"amount":4.0}}"#;
        assert!(scan_transcript(t).is_empty());
    }

    #[test]
    fn garbage_lines_are_not_silently_skipped() {
        assert_eq!(scan_transcript("not json\n")[0].path, "<unparsed>");
    }
}
