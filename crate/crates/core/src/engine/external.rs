//! Line-delimited JSON bridge to a drafter living in another process.
//!
//! Each request is one line, `{"context": [ids], "k": int}`, answered by one
//! line, `{"heads": [[[id, logit], ...], ...]}`. A server that cannot answer
//! replies `{"error": "..."}` instead.

use std::cmp::Ordering;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, Command, Stdio};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::Drafter;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::vocab::TokenId;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeadRequest {
    pub context: Vec<TokenId>,
    pub k: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct HeadResponse {
    #[serde(default)]
    pub heads: Vec<Vec<(TokenId, f64)>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

fn top_k(mut head: Vec<(TokenId, f64)>, k: usize) -> Vec<(TokenId, f64)> {
    head.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then(a.0.cmp(&b.0)));
    head.truncate(k);
    head
}

/// Answers requests from `reader` with `drafter` until end of input.
/// Returns the number of requests served.
pub fn serve<S, D, R, W>(drafter: &D, reader: R, mut writer: W) -> Result<usize>
where
    S: Scalar,
    D: Drafter<S> + ?Sized,
    R: BufRead,
    W: Write,
{
    let mut served = 0;
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let response = match serde_json::from_str::<HeadRequest>(&line) {
            Err(e) => HeadResponse { heads: Vec::new(), error: Some(format!("bad request: {e}")) },
            Ok(req) => match drafter.head_logits(&req.context, req.k) {
                Ok(heads) => HeadResponse {
                    heads: heads
                        .into_iter()
                        .map(|h| top_k(h.into_iter().map(|(t, z)| (t, z.to_f64_lossy())).collect(), req.k.max(1)))
                        .collect(),
                    error: None,
                },
                Err(e) => HeadResponse { heads: Vec::new(), error: Some(e.to_string()) },
            },
        };
        serde_json::to_writer(&mut writer, &response).map_err(|e| Error::Protocol(e.to_string()))?;
        writer.write_all(b"\n")?;
        writer.flush()?;
        served += 1;
    }
    Ok(served)
}

struct Channel {
    reader: Box<dyn BufRead + Send>,
    writer: Box<dyn Write + Send>,
}

/// Client side of the bridge. Requests are serialized; concurrent decodes
/// share one connection.
pub struct LineJsonDrafter {
    channel: Mutex<Channel>,
    heads: usize,
    child: Option<Child>,
}

impl LineJsonDrafter {
    pub fn new<R, W>(reader: R, writer: W, heads: usize) -> Self
    where
        R: BufRead + Send + 'static,
        W: Write + Send + 'static,
    {
        LineJsonDrafter {
            channel: Mutex::new(Channel { reader: Box::new(reader), writer: Box::new(writer) }),
            heads,
            child: None,
        }
    }

    /// Starts `command` and talks to it over its stdin and stdout.
    pub fn spawn(command: &mut Command, heads: usize) -> Result<Self> {
        let mut child = command.stdin(Stdio::piped()).stdout(Stdio::piped()).spawn()?;
        let stdin = child.stdin.take().expect("stdin is piped");
        let stdout = child.stdout.take().expect("stdout is piped");
        let mut d = LineJsonDrafter::new(BufReader::new(stdout), stdin, heads);
        d.child = Some(child);
        Ok(d)
    }

    fn request(&self, req: &HeadRequest) -> Result<HeadResponse> {
        let mut ch = self.channel.lock().map_err(|_| Error::Protocol("drafter connection poisoned".into()))?;
        let line = serde_json::to_string(req).map_err(|e| Error::Protocol(e.to_string()))?;
        ch.writer.write_all(line.as_bytes())?;
        ch.writer.write_all(b"\n")?;
        ch.writer.flush()?;
        let mut reply = String::new();
        if ch.reader.read_line(&mut reply)? == 0 {
            return Err(Error::Protocol("drafter closed the connection".into()));
        }
        serde_json::from_str(&reply).map_err(|e| Error::Protocol(format!("bad response: {e}")))
    }
}

impl Drop for LineJsonDrafter {
    fn drop(&mut self) {
        if let Some(mut child) = self.child.take() {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

impl<S: Scalar> Drafter<S> for LineJsonDrafter {
    fn heads(&self) -> usize {
        self.heads
    }

    fn head_logits(&self, context: &[TokenId], k: usize) -> Result<Vec<Vec<(TokenId, S)>>> {
        let resp = self.request(&HeadRequest { context: context.to_vec(), k })?;
        if let Some(e) = resp.error {
            return Err(Error::Protocol(format!("drafter reported: {e}")));
        }
        if resp.heads.len() != self.heads {
            return Err(Error::Protocol(format!("expected {} heads, got {}", self.heads, resp.heads.len())));
        }
        Ok(resp
            .heads
            .into_iter()
            .map(|h| h.into_iter().map(|(t, z)| (t, S::from_f64_lossy(z))).collect())
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Fixed;
    impl Drafter<f64> for Fixed {
        fn heads(&self) -> usize {
            2
        }
        fn head_logits(&self, context: &[TokenId], _k: usize) -> Result<Vec<Vec<(TokenId, f64)>>> {
            let n = context.len() as f64;
            Ok(vec![
                vec![(TokenId(0), 0.0), (TokenId(1), n), (TokenId(2), 0.0)],
                vec![(TokenId(2), 1.0), (TokenId(0), 2.0)],
            ])
        }
    }

    #[test]
    fn wire_format() {
        let req = HeadRequest { context: vec![TokenId(3), TokenId(1)], k: 2 };
        assert_eq!(serde_json::to_string(&req).unwrap(), r#"{"context":[3,1],"k":2}"#);
        let resp = HeadResponse { heads: vec![vec![(TokenId(4), -0.5)]], error: None };
        assert_eq!(serde_json::to_string(&resp).unwrap(), r#"{"heads":[[[4,-0.5]]]}"#);
    }

    #[test]
    fn serve_truncates_and_sorts() {
        let input = "{\"context\":[5,5],\"k\":2}\n\nnot json\n";
        let mut out = Vec::new();
        assert_eq!(serve(&Fixed, input.as_bytes(), &mut out).unwrap(), 2);
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], r#"{"heads":[[[1,2.0],[0,0.0]],[[0,2.0],[2,1.0]]]}"#);
        assert!(lines[1].contains("error"));
    }

    #[test]
    fn client_round_trip_through_a_buffer() {
        let mut served = Vec::new();
        let requests = "{\"context\":[7],\"k\":1}\n";
        serve(&Fixed, requests.as_bytes(), &mut served).unwrap();
        let client = LineJsonDrafter::new(std::io::Cursor::new(served), std::io::sink(), 2);
        let heads: Vec<Vec<(TokenId, f64)>> = client.head_logits(&[TokenId(7)], 1).unwrap();
        assert_eq!(heads, vec![vec![(TokenId(1), 1.0)], vec![(TokenId(0), 2.0)]]);
        // the canned stream is exhausted now
        let again: Result<Vec<Vec<(TokenId, f64)>>> = client.head_logits(&[TokenId(7)], 1);
        assert!(matches!(again, Err(Error::Protocol(_))));
    }

    #[test]
    fn wrong_head_count_is_a_protocol_error() {
        let client = LineJsonDrafter::new(std::io::Cursor::new(b"{\"heads\":[[[1,0.0]]]}\n".to_vec()), std::io::sink(), 2);
        let r: Result<Vec<Vec<(TokenId, f64)>>> = client.head_logits(&[], 1);
        assert!(matches!(r, Err(Error::Protocol(_))));
    }
}
