//! Processing thread: owns the tracker state and the live parameters.
//!
//! Parameter changes arrive on a channel and are applied only between frames,
//! so every frame is processed with one consistent parameter set.

use std::sync::mpsc::{Receiver, RecvTimeoutError, TryRecvError};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use base64::Engine;
use ringtrack::raster::io::encode_png;
use ringtrack::tracker::{track_step_report, StepReport};
use ringtrack::{GrayImage, Roi, TrackerConfig, TrackerState};
use tokio::sync::{broadcast, oneshot};

use crate::protocol::{Detection, FrameAnnotation, ParamUpdate, Params, ServerMessage};
use crate::FrameSource;

pub(crate) enum Command {
    Update(ParamUpdate, oneshot::Sender<ServerMessage>),
    Shutdown,
}

/// State readable without going through the worker.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Shared {
    pub params: Params,
    pub frames_processed: u64,
}

impl Shared {
    pub fn message(&self) -> ServerMessage {
        ServerMessage::Snapshot {
            params: self.params,
            frames_processed: self.frames_processed,
        }
    }
}

pub(crate) struct Worker {
    pub source: FrameSource,
    pub cfg: TrackerConfig,
    pub period: Option<Duration>,
    pub loop_source: bool,
    pub commands: Receiver<Command>,
    pub frames: broadcast::Sender<Arc<str>>,
    pub shared: Arc<Mutex<Shared>>,
    /// Dimensions of the first frame; later frames must match.
    pub dims: Option<(usize, usize)>,
}

enum Flow {
    Continue,
    Stop,
}

impl Worker {
    pub fn run(mut self) {
        let mut state = TrackerState::default();
        let mut next_index: u64 = 0;
        let mut next_due = Instant::now();
        loop {
            let position = (next_index % self.source.len() as u64) as usize;
            let exhausted = !self.loop_source && next_index >= self.source.len() as u64;
            if let Flow::Stop = self.wait_for_turn(next_due, next_index, exhausted) {
                return;
            }
            if position == 0 {
                state = TrackerState::default();
            }
            let started = Instant::now();
            match self.process(&state, position, next_index) {
                Ok(next) => state = next,
                Err(e) => {
                    tracing::warn!(frame = next_index, "frame skipped: {e}");
                    self.publish(&ServerMessage::Error {
                        id: None,
                        message: format!("frame {next_index}: {e}"),
                    });
                    state = TrackerState::default();
                }
            }
            next_index += 1;
            self.shared.lock().expect("shared state").frames_processed = next_index;
            next_due = match self.period {
                Some(p) => (next_due + p).max(started),
                None => Instant::now(),
            };
        }
    }

    /// Handles commands until the next frame is due. Once the source is
    /// exhausted, blocks on commands only.
    fn wait_for_turn(&mut self, due: Instant, next_index: u64, exhausted: bool) -> Flow {
        loop {
            let cmd = if exhausted {
                match self.commands.recv() {
                    Ok(c) => c,
                    Err(_) => return Flow::Stop,
                }
            } else {
                let now = Instant::now();
                let r = if due > now {
                    self.commands.recv_timeout(due - now)
                } else {
                    self.commands.try_recv().map_err(|e| match e {
                        TryRecvError::Empty => RecvTimeoutError::Timeout,
                        TryRecvError::Disconnected => RecvTimeoutError::Disconnected,
                    })
                };
                match r {
                    Ok(c) => c,
                    Err(RecvTimeoutError::Timeout) => return Flow::Continue,
                    Err(RecvTimeoutError::Disconnected) => return Flow::Stop,
                }
            };
            match cmd {
                Command::Shutdown => return Flow::Stop,
                Command::Update(u, reply) => {
                    let msg = match u.apply_to(&self.cfg) {
                        Ok(cfg) => {
                            self.cfg = cfg;
                            let params = Params::from(&self.cfg);
                            self.shared.lock().expect("shared state").params = params;
                            ServerMessage::Ack {
                                id: u.id,
                                applies_from: next_index,
                                params,
                            }
                        }
                        Err(message) => ServerMessage::Error { id: u.id, message },
                    };
                    let _ = reply.send(msg);
                }
            }
        }
    }

    fn process(&mut self, state: &TrackerState, position: usize, index: u64) -> ringtrack::Result<TrackerState> {
        let frame = self.source.load(position)?;
        let dims = (frame.width(), frame.height());
        match self.dims {
            None => self.dims = Some(dims),
            Some(d) if d != dims => {
                return Err(ringtrack::Error::DatasetFormat(format!(
                    "frame is {}x{}, source started at {}x{}",
                    dims.0, dims.1, d.0, d.1
                )))
            }
            Some(_) => {}
        }
        let t = Instant::now();
        let report = track_step_report(state, &frame, &self.cfg)?;
        let elapsed_ms = t.elapsed().as_secs_f64() * 1e3;
        if self.frames.receiver_count() > 0 {
            let msg = self.frame_message(&frame, &report, position, index, elapsed_ms)?;
            self.publish(&msg);
        }
        Ok(report.state)
    }

    fn frame_message(
        &self,
        frame: &GrayImage,
        report: &StepReport,
        position: usize,
        index: u64,
        elapsed_ms: f64,
    ) -> ringtrack::Result<ServerMessage> {
        let png = encode_png(frame)?;
        let roi = Some(report.region).filter(|r| *r != Roi::full(frame.bounds()));
        let timestamp_ms = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0);
        Ok(ServerMessage::Frame {
            index,
            png_b64: base64::engine::general_purpose::STANDARD.encode(png),
            annotation: FrameAnnotation {
                frame_index: index,
                source_index: position,
                timestamp_ms,
                detections: report.detections.iter().map(Detection::from).collect(),
                selected_target: report.target,
                scale: report.processed_scale,
                roi,
                elapsed_ms,
                params: Params::from(&self.cfg),
            },
        })
    }

    fn publish(&self, msg: &ServerMessage) {
        if self.frames.receiver_count() == 0 {
            return;
        }
        let text = serde_json::to_string(msg).expect("server messages serialize");
        let _ = self.frames.send(text.into());
    }
}
