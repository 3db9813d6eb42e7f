use std::fmt;
use std::str::FromStr;

use super::message::{ProtocolMessage, Role};
use super::ProtocolError;

/// One transcript line: `step sender→receiver kind payload_hex`, with `-` for
/// an empty payload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TranscriptRecord {
    pub step: usize,
    pub sender: Role,
    pub receiver: Role,
    pub kind: String,
    pub payload: Vec<u8>,
}

impl fmt::Display for TranscriptRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let payload = if self.payload.is_empty() {
            "-".to_string()
        } else {
            hex::encode(&self.payload)
        };
        write!(
            f,
            "{} {}→{} {} {}",
            self.step, self.sender, self.receiver, self.kind, payload
        )
    }
}

impl FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "authenticator" => Ok(Role::Authenticator),
            "enrollee" => Ok(Role::Enrollee),
            "access_point" => Ok(Role::AccessPoint),
            other => Err(format!("unknown role {other:?}")),
        }
    }
}

/// Ordered log of every message exchanged in a session.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Transcript {
    records: Vec<TranscriptRecord>,
}

impl Transcript {
    pub fn records(&self) -> &[TranscriptRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn push(&mut self, msg: &ProtocolMessage) {
        self.records.push(TranscriptRecord {
            step: self.records.len(),
            sender: msg.sender,
            receiver: msg.receiver,
            kind: msg.kind.name().to_string(),
            payload: msg.kind.payload(),
        });
    }

    pub fn to_text(&self) -> String {
        self.records.iter().map(|r| format!("{r}\n")).collect()
    }

    pub fn from_text(text: &str) -> Result<Self, ProtocolError> {
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let bad = |reason: String| ProtocolError::Format {
                line: i + 1,
                reason,
            };
            let fields: Vec<&str> = line.split_whitespace().collect();
            let [step, route, kind, payload] = fields[..] else {
                return Err(bad(format!("expected 4 fields, got {}", fields.len())));
            };
            let step: usize = step.parse().map_err(|_| bad(format!("bad step {step:?}")))?;
            if step != records.len() {
                return Err(bad(format!("step {step} out of sequence")));
            }
            let (sender, receiver) = route
                .split_once('→')
                .ok_or_else(|| bad(format!("bad route {route:?}")))?;
            let payload = if payload == "-" {
                Vec::new()
            } else {
                hex::decode(payload).map_err(|e| bad(format!("bad payload: {e}")))?
            };
            records.push(TranscriptRecord {
                step,
                sender: sender.parse().map_err(bad)?,
                receiver: receiver.parse().map_err(bad)?,
                kind: kind.to_string(),
                payload,
            });
        }
        Ok(Self { records })
    }
}
