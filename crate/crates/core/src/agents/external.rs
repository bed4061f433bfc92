use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::PathBuf;
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::detector::Detector;
use crate::imgmetrics::ImageBuf;
use crate::protocol::ImageSet;
use crate::{Error, Result};

pub const HANDSHAKE: &str = "DFGC-DETECTOR 1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExternalConfig {
    pub command: String,
    pub args: Vec<String>,
    /// Time allowed for the handshake and for each batch of responses.
    pub timeout_ms: u64,
    pub batch_size: usize,
}

impl Default for ExternalConfig {
    fn default() -> Self {
        ExternalConfig {
            command: String::new(),
            args: Vec::new(),
            timeout_ms: 30_000,
            batch_size: 64,
        }
    }
}

struct Session {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
}

impl Drop for Session {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Black-box detector served by a subprocess speaking the line protocol:
/// it prints the handshake line, then answers every `SCORE<TAB>path`
/// request with `path<TAB>score`.
pub struct ExternalDetector {
    id: String,
    cfg: ExternalConfig,
    session: Mutex<Session>,
    scratch: tempfile::TempDir,
    counter: AtomicUsize,
}

impl ExternalDetector {
    pub fn spawn(id: impl Into<String>, cfg: ExternalConfig) -> Result<Self> {
        let id = id.into();
        if cfg.batch_size == 0 {
            return Err(Error::Parameter("batch_size must be positive".into()));
        }
        let mut child = Command::new(&cfg.command)
            .args(&cfg.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::io(&cfg.command, e))?;
        let stdin = child.stdin.take().expect("stdin is piped");
        let stdout = child.stdout.take().expect("stdout is piped");
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        let session = Session {
            child,
            stdin,
            lines: rx,
        };
        let fault = |reason: String| Error::DetectorFault {
            detector: id.clone(),
            item: "<handshake>".into(),
            reason,
        };
        match session.lines.recv_timeout(Duration::from_millis(cfg.timeout_ms)) {
            Ok(Ok(line)) if line.trim_end() == HANDSHAKE => {}
            Ok(Ok(line)) => return Err(fault(format!("expected {HANDSHAKE:?}, got {line:?}"))),
            Ok(Err(e)) => return Err(fault(e.to_string())),
            Err(RecvTimeoutError::Timeout) => return Err(fault("timed out".into())),
            Err(RecvTimeoutError::Disconnected) => return Err(fault("process exited".into())),
        }
        let scratch = tempfile::tempdir().map_err(|e| Error::io(std::env::temp_dir(), e))?;
        Ok(ExternalDetector {
            id,
            cfg,
            session: Mutex::new(session),
            scratch,
            counter: AtomicUsize::new(0),
        })
    }

    fn fault(&self, item: &str, reason: impl Into<String>) -> Error {
        Error::DetectorFault {
            detector: self.id.clone(),
            item: item.to_string(),
            reason: reason.into(),
        }
    }

    fn score_paths(&self, paths: &[String]) -> Result<Vec<f64>> {
        let mut session = self.session.lock().unwrap_or_else(|p| p.into_inner());
        let mut out = Vec::with_capacity(paths.len());
        for batch in paths.chunks(self.cfg.batch_size) {
            let mut request = String::new();
            for p in batch {
                request.push_str("SCORE\t");
                request.push_str(p);
                request.push('\n');
            }
            session
                .stdin
                .write_all(request.as_bytes())
                .and_then(|_| session.stdin.flush())
                .map_err(|e| self.fault(&batch[0], format!("write failed: {e}")))?;
            let deadline = Instant::now() + Duration::from_millis(self.cfg.timeout_ms);
            let distinct = batch.iter().collect::<std::collections::HashSet<_>>().len();
            let mut got: HashMap<&str, f64> = HashMap::new();
            while got.len() < distinct {
                let left = deadline.saturating_duration_since(Instant::now());
                let line = match session.lines.recv_timeout(left) {
                    Ok(Ok(line)) => line,
                    Ok(Err(e)) => return Err(self.fault(&batch[0], e.to_string())),
                    Err(e) => {
                        let missing = batch.iter().find(|p| !got.contains_key(p.as_str())).unwrap();
                        let why = match e {
                            RecvTimeoutError::Timeout => "timed out waiting for a score",
                            RecvTimeoutError::Disconnected => "process exited before scoring",
                        };
                        return Err(self.fault(missing, why));
                    }
                };
                let Some((path, value)) = line.split_once('\t') else {
                    return Err(self.fault(&line, "malformed response line"));
                };
                let Some(key) = batch.iter().find(|p| p.as_str() == path) else {
                    return Err(self.fault(&line, "response for a path that was not requested"));
                };
                let score: f64 = value
                    .trim()
                    .parse()
                    .map_err(|_| self.fault(&line, "score is not a number"))?;
                if !score.is_finite() {
                    return Err(self.fault(path, format!("non-finite score in line {line:?}")));
                }
                got.insert(key.as_str(), score);
            }
            out.extend(batch.iter().map(|p| got[p.as_str()]));
        }
        Ok(out)
    }

    fn materialize(&self, name: &str, img: &ImageBuf) -> Result<String> {
        let k = self.counter.fetch_add(1, Ordering::Relaxed);
        let path: PathBuf = self.scratch.path().join(format!("{k:06}_{name}"));
        img.save_png(&path)?;
        Ok(path.to_string_lossy().into_owned())
    }
}

impl Detector for ExternalDetector {
    fn id(&self) -> &str {
        &self.id
    }

    fn score(&self, img: &ImageBuf) -> Result<f64> {
        let path = self.materialize("probe.png", img)?;
        Ok(self.score_paths(&[path])?[0])
    }

    fn score_set(&self, set: &ImageSet) -> Result<Vec<f64>> {
        let paths = set
            .items
            .iter()
            .map(|it| match &it.path {
                Some(p) => Ok(p.to_string_lossy().into_owned()),
                None => self.materialize(&it.name, &it.image),
            })
            .collect::<Result<Vec<_>>>()?;
        self.score_paths(&paths)
    }
}
