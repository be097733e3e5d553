//! Newline-delimited JSON frames exchanged with clients and the cloud stub.

use cnmt_core::Target;
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireRequest {
    pub id: String,
    pub n: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m_true: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireResponse {
    pub id: String,
    pub target: Target,
    pub est_edge_ms: f64,
    pub est_cloud_ms: f64,
    pub charged_ms: f64,
    pub rtt_estimate_ms: f64,
    /// Set when the policy chose the cloud but the stub could not be reached
    /// and the request was served locally instead.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub cloud_unreachable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorFrame {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub error: String,
}

/// Counters and estimator state at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatsSnapshot {
    pub completed: u64,
    pub edge_count: u64,
    pub cloud_count: u64,
    pub cloud_unreachable: u64,
    pub rtt_estimate_ms: f64,
    pub rtt_observations: u64,
    pub total_charged_ms: f64,
}

/// A parsed client frame.
#[derive(Debug, Clone, PartialEq)]
pub enum Inbound {
    Request(WireRequest),
    Stats,
}

/// Parses one line. On failure returns an error frame carrying the request
/// id when one could be recovered.
pub fn parse_frame(line: &str) -> Result<Inbound, ErrorFrame> {
    let value: Value = serde_json::from_str(line).map_err(|e| ErrorFrame {
        id: None,
        error: format!("malformed frame: {e}"),
    })?;
    let id = value.get("id").and_then(Value::as_str).map(str::to_owned);
    if let Some(op) = value.get("op") {
        return match op.as_str() {
            Some("stats") => Ok(Inbound::Stats),
            _ => Err(ErrorFrame {
                id,
                error: format!("unknown op {op}"),
            }),
        };
    }
    let req: WireRequest = serde_json::from_value(value).map_err(|e| ErrorFrame {
        id: id.clone(),
        error: format!("malformed frame: {e}"),
    })?;
    if req.n < 1 {
        return Err(ErrorFrame {
            id,
            error: "n must be >= 1".into(),
        });
    }
    Ok(Inbound::Request(req))
}

/// Work order sent to the cloud stub.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CloudJob {
    pub n: u32,
    /// Output length to decode; the true one when known, else the estimate.
    pub m: f64,
}

/// The stub's reply: how long it spent executing, in modeled milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CloudReply {
    pub service_ms: f64,
}

/// Serializes `frame` followed by LF.
pub fn encode<T: Serialize>(frame: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec(frame).expect("frame types always serialize");
    out.push(b'\n');
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_requests_and_stats() {
        assert_eq!(
            parse_frame(r#"{"id":"a","n":12}"#).unwrap(),
            Inbound::Request(WireRequest {
                id: "a".into(),
                n: 12,
                m_true: None
            })
        );
        assert_eq!(
            parse_frame(r#"{"id":"b","n":3,"m_true":4}"#).unwrap(),
            Inbound::Request(WireRequest {
                id: "b".into(),
                n: 3,
                m_true: Some(4)
            })
        );
        assert_eq!(parse_frame(r#"{"op":"stats"}"#).unwrap(), Inbound::Stats);
    }

    #[test]
    fn errors_keep_recoverable_id() {
        let e = parse_frame("{nope").unwrap_err();
        assert_eq!(e.id, None);
        let e = parse_frame(r#"{"id":"x","n":"ten"}"#).unwrap_err();
        assert_eq!(e.id.as_deref(), Some("x"));
        let e = parse_frame(r#"{"id":"z","n":0}"#).unwrap_err();
        assert_eq!(e.id.as_deref(), Some("z"));
        assert!(parse_frame(r#"{"op":"reboot"}"#).is_err());
    }

    #[test]
    fn response_omits_false_flag() {
        let r = WireResponse {
            id: "a".into(),
            target: Target::Edge,
            est_edge_ms: 1.0,
            est_cloud_ms: 2.0,
            charged_ms: 1.5,
            rtt_estimate_ms: 50.0,
            cloud_unreachable: false,
        };
        let text = String::from_utf8(encode(&r)).unwrap();
        assert!(text.ends_with('\n'));
        assert!(!text.contains("cloud_unreachable"));
        assert_eq!(serde_json::from_str::<WireResponse>(&text).unwrap(), r);
    }
}
