//! JSON-lines agent protocol: one request object per line on the agent's
//! stdin, one response object per line on its stdout.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};

use serde::{Deserialize, Serialize};

use super::{Agent, AgentError, BBox, Screen, SrdlError};
use crate::imaging::PixelImage;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Op {
    Enumerate,
    Ground,
    Refer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Request {
    pub op: Op,
    pub image: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<[f64; 4]>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub descriptions: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<[f64; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Response {
    fn failure(msg: impl Into<String>) -> Self {
        Self {
            ok: false,
            error: Some(msg.into()),
            ..Self::default()
        }
    }
}

/// Client side: an agent running as a child process.
pub struct CommandAgent {
    child: Child,
    stdin: Option<ChildStdin>,
    stdout: BufReader<ChildStdout>,
}

impl CommandAgent {
    pub fn spawn(program: &str, args: &[String]) -> Result<Self, SrdlError> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|source| SrdlError::Io {
                context: format!("spawning agent {program:?}"),
                source,
            })?;
        let stdin = child.stdin.take();
        let stdout = BufReader::new(child.stdout.take().expect("stdout is piped"));
        Ok(Self { child, stdin, stdout })
    }

    fn call(&mut self, req: &Request) -> Result<Response, AgentError> {
        let stdin = self
            .stdin
            .as_mut()
            .ok_or_else(|| AgentError::Protocol("agent stdin closed".into()))?;
        let mut line = serde_json::to_string(req).expect("request is serializable");
        line.push('\n');
        stdin
            .write_all(line.as_bytes())
            .and_then(|_| stdin.flush())
            .map_err(|e| AgentError::Protocol(format!("writing request: {e}")))?;
        let mut reply = String::new();
        let n = self
            .stdout
            .read_line(&mut reply)
            .map_err(|e| AgentError::Protocol(format!("reading response: {e}")))?;
        if n == 0 {
            return Err(AgentError::Protocol("agent closed its output".into()));
        }
        let resp: Response = serde_json::from_str(reply.trim_end())
            .map_err(|e| AgentError::Protocol(format!("malformed response {:?}: {e}", reply.trim_end())))?;
        if resp.ok {
            Ok(resp)
        } else {
            Err(AgentError::Failed(resp.error.unwrap_or_else(|| "unspecified".into())))
        }
    }

    fn image_path(screen: &Screen) -> Result<String, AgentError> {
        screen
            .path
            .as_ref()
            .map(|p| p.to_string_lossy().into_owned())
            .ok_or_else(|| AgentError::Failed(format!("screen {:?} has no file path", screen.id)))
    }
}

fn wire_box(v: [f64; 4]) -> Result<BBox, AgentError> {
    BBox::new(v[0], v[1], v[2], v[3]).map_err(|e| AgentError::InvalidBox(e.to_string()))
}

impl Agent for CommandAgent {
    fn enumerate(&mut self, screen: &Screen) -> Result<Vec<String>, AgentError> {
        let resp = self.call(&Request {
            op: Op::Enumerate,
            image: Self::image_path(screen)?,
            description: None,
            bbox: None,
        })?;
        resp.descriptions
            .ok_or_else(|| AgentError::Protocol("enumerate response without descriptions".into()))
    }

    fn ground(&mut self, screen: &Screen, description: &str) -> Result<BBox, AgentError> {
        let resp = self.call(&Request {
            op: Op::Ground,
            image: Self::image_path(screen)?,
            description: Some(description.into()),
            bbox: None,
        })?;
        wire_box(resp.bbox.ok_or_else(|| AgentError::Protocol("ground response without bbox".into()))?)
    }

    fn refer(&mut self, screen: &Screen, bbox: &BBox) -> Result<String, AgentError> {
        let resp = self.call(&Request {
            op: Op::Refer,
            image: Self::image_path(screen)?,
            description: None,
            bbox: Some(bbox.to_array()),
        })?;
        resp.description
            .ok_or_else(|| AgentError::Protocol("refer response without description".into()))
    }
}

impl Drop for CommandAgent {
    fn drop(&mut self) {
        // closing stdin is the shutdown signal
        self.stdin.take();
        if let Err(e) = self.child.wait() {
            log::warn!("agent did not exit cleanly: {e}");
        }
    }
}

/// Screen id used on both ends of the protocol: the file stem.
pub fn screen_id(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.to_string_lossy().into_owned())
}

/// Loads a screen from a PNG path, keyed by its file stem.
pub fn load_screen(path: &Path) -> Result<Screen, String> {
    let image = PixelImage::load_png(path).map_err(|e| e.to_string())?;
    Ok(Screen {
        id: screen_id(path),
        path: Some(path.to_path_buf()),
        image,
    })
}

fn handle<A: Agent + ?Sized>(
    agent: &mut A,
    screens: &mut HashMap<PathBuf, Screen>,
    line: &str,
) -> Response {
    let req: Request = match serde_json::from_str(line) {
        Ok(r) => r,
        Err(e) => return Response::failure(format!("bad request: {e}")),
    };
    let path = PathBuf::from(&req.image);
    if !screens.contains_key(&path) {
        match load_screen(&path) {
            Ok(s) => {
                screens.insert(path.clone(), s);
            }
            Err(e) => return Response::failure(e),
        }
    }
    let screen = &screens[&path];
    let result = match req.op {
        Op::Enumerate => agent.enumerate(screen).map(|d| Response {
            ok: true,
            descriptions: Some(d),
            ..Response::default()
        }),
        Op::Ground => match req.description {
            Some(d) => agent.ground(screen, &d).map(|b| Response {
                ok: true,
                bbox: Some(b.to_array()),
                ..Response::default()
            }),
            None => return Response::failure("ground needs a description"),
        },
        Op::Refer => match req.bbox.map(wire_box) {
            Some(Ok(b)) => agent.refer(screen, &b).map(|d| Response {
                ok: true,
                description: Some(d),
                ..Response::default()
            }),
            Some(Err(e)) => Err(e),
            None => return Response::failure("refer needs a bbox"),
        },
    };
    result.unwrap_or_else(|e| Response::failure(e.to_string()))
}

/// Server side: answers requests from `input` until end of stream.
pub fn serve<A: Agent + ?Sized, R: BufRead, W: Write>(
    agent: &mut A,
    input: R,
    mut output: W,
) -> std::io::Result<()> {
    let mut screens = HashMap::new();
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let resp = handle(agent, &mut screens, &line);
        serde_json::to_writer(&mut output, &resp)?;
        output.write_all(b"\n")?;
        output.flush()?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn request_wire_shape() {
        let r = Request {
            op: Op::Ground,
            image: "a.png".into(),
            description: Some("ok button".into()),
            bbox: None,
        };
        assert_eq!(
            serde_json::to_string(&r).unwrap(),
            r#"{"op":"ground","image":"a.png","description":"ok button"}"#
        );
        let back: Request = serde_json::from_str(r#"{"op":"refer","image":"x","bbox":[0,0,2,2]}"#).unwrap();
        assert_eq!(back.bbox, Some([0.0, 0.0, 2.0, 2.0]));
        assert!(serde_json::from_str::<Request>(r#"{"op":"paint","image":"x"}"#).is_err());
    }

    #[test]
    fn response_wire_shape() {
        assert_eq!(
            serde_json::to_string(&Response::failure("nope")).unwrap(),
            r#"{"ok":false,"error":"nope"}"#
        );
    }

    #[test]
    fn server_reports_bad_requests_and_keeps_going() {
        struct Never;
        impl Agent for Never {
            fn enumerate(&mut self, _: &Screen) -> Result<Vec<String>, AgentError> {
                unreachable!()
            }
            fn ground(&mut self, _: &Screen, _: &str) -> Result<BBox, AgentError> {
                unreachable!()
            }
            fn refer(&mut self, _: &Screen, _: &BBox) -> Result<String, AgentError> {
                unreachable!()
            }
        }
        let input = b"not json\n{\"op\":\"enumerate\",\"image\":\"/nonexistent/x.png\"}\n";
        let mut out = Vec::new();
        serve(&mut Never, &input[..], &mut out).unwrap();
        let lines: Vec<Response> = String::from_utf8(out)
            .unwrap()
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        assert_eq!(lines.len(), 2);
        assert!(lines.iter().all(|r| !r.ok && r.error.is_some()));
    }
}
