//! Random track_step sequences over a small pool of frames.

use proptest::prelude::*;
use ringtrack::synth::{render_frame, Ring, SceneSpec};
use ringtrack::tracker::TrackerMode;
use ringtrack::{track_step, Ellipse, GrayImage, Roi, TrackerConfig, TrackerState};

const W: usize = 128;
const H: usize = 96;

/// Blank, noisy, ringed and partially visible frames of one size.
pub fn frame_pool() -> Vec<GrayImage> {
    let rings = [
        None,
        Some((64.0, 48.0, 30.0, 22.0, 0.3, 5.0)),
        Some((60.0, 50.0, 44.0, 40.0, 1.2, 6.0)),
        Some((40.0, 40.0, 16.0, 12.0, 0.0, 3.0)),
        Some((120.0, 48.0, 30.0, 25.0, 0.6, 5.0)),
        Some((64.0, 48.0, 10.0, 8.0, 2.0, 2.0)),
    ];
    let mut pool = Vec::new();
    for (i, r) in rings.iter().enumerate() {
        for noise in [0.0, 8.0] {
            let mut spec = match r {
                Some((cx, cy, a, b, th, stroke)) => SceneSpec::single_ring(
                    Ring {
                        outer: Ellipse::new(*cx, *cy, *a, *b, *th),
                        stroke: *stroke,
                    },
                    1,
                ),
                None => SceneSpec::blank(1),
            };
            spec.width = W;
            spec.height = H;
            spec.noise_sigma = noise;
            pool.push(render_frame(&spec, i as u64, 0).expect("render").0);
        }
    }
    pool
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub cfg: TrackerConfig,
    pub start: TrackerState,
    pub frames: Vec<usize>,
}

fn mode() -> impl Strategy<Value = TrackerMode> {
    prop_oneof![
        6 => Just(TrackerMode::Auto),
        1 => Just(TrackerMode::Detect),
        1 => Just(TrackerMode::Track),
    ]
}

fn start_state() -> impl Strategy<Value = TrackerState> {
    (any::<bool>(), 0u32..7, 0..W, 0..H, 1..W, 1..H).prop_map(|(tracking, k, x, y, w, h)| {
        if tracking {
            TrackerState {
                is_tracking: true,
                scale: 1 << k,
                roi: Some(Roi::new(x, y, w.min(W - x).max(1), h.min(H - y).max(1))),
                last_target: Some(Ellipse::circle(x as f64, y as f64, 10.0)),
            }
        } else {
            TrackerState {
                scale: 1 << k,
                ..TrackerState::default()
            }
        }
    })
}

pub fn scenario(pool_len: usize) -> impl Strategy<Value = Scenario> {
    (
        1usize..=100,
        0.0..40.0f64,
        4.0..160.0f64,
        1.0..3.0f64,
        mode(),
        start_state(),
        prop::collection::vec(0..pool_len, 1..6),
    )
        .prop_map(|(max_scale, lo, span, factor, mode, start, frames)| {
            let cfg = TrackerConfig {
                max_scale,
                min_target_size: lo,
                max_target_size: lo + span,
                roi_expand_factor: factor,
                mode,
                ..TrackerConfig::default()
            };
            Scenario { cfg, start, frames }
        })
}

/// Runs the scenario and reports the first broken invariant.
pub fn check(pool: &[GrayImage], s: &Scenario) -> Result<(), String> {
    let cap = s.cfg.effective_max_scale().min(64);
    let mut state = s.start;
    for (step, &i) in s.frames.iter().enumerate() {
        let (target, next) = track_step(&state, &pool[i], &s.cfg).map_err(|e| format!("step {step}: {e}"))?;
        if !next.scale.is_power_of_two() || next.scale > cap {
            return Err(format!("step {step}: scale {} with cap {cap}", next.scale));
        }
        if next.is_tracking != next.roi.is_some() {
            return Err(format!("step {step}: tracking {} with roi {:?}", next.is_tracking, next.roi));
        }
        if next.is_tracking && target.is_none() {
            return Err(format!("step {step}: tracking without a target"));
        }
        state = next;
    }
    Ok(())
}
