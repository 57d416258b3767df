//! Tile suitability scoring and gating.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::backend::{BackendError, TileClassifier};
use crate::wsi::{GridCoord, Tile};

pub const DEFAULT_ROI_THRESHOLD: f64 = 0.5;

/// Band of accepted-tile fractions considered normal for a slide.
pub const EXPECTED_ROI_FRACTION: (f64, f64) = (0.05, 0.5);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoiScore {
    pub tile_coord: GridCoord,
    pub p_appropriate: f64,
    pub backend_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoiDecision {
    pub coord: GridCoord,
    pub p: f64,
    pub accepted: bool,
    pub threshold: f64,
    pub backend_id: String,
}

pub fn score_tile(backend: &dyn TileClassifier, tile: &Tile) -> Result<RoiScore, BackendError> {
    let p = backend.score(tile)?;
    if !(0.0..=1.0).contains(&p) {
        return Err(BackendError::Inference(format!("score {p} outside [0, 1]")));
    }
    Ok(RoiScore { tile_coord: tile.coord, p_appropriate: p, backend_id: backend.info().id() })
}

/// Accept iff `p >= threshold`.
pub fn gate(score: &RoiScore, threshold: f64) -> RoiDecision {
    let accepted = score.p_appropriate >= threshold;
    log::debug!("tile {} p={:.4} threshold={threshold} accepted={accepted}", score.tile_coord, score.p_appropriate);
    RoiDecision {
        coord: score.tile_coord,
        p: score.p_appropriate,
        accepted,
        threshold,
        backend_id: score.backend_id.clone(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoiFraction {
    pub fraction: f64,
    pub accepted: usize,
    pub total: usize,
    /// Advisory only: the slide is unusually poor or unusually rich.
    pub anomalous: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("no ROI decisions to summarize")]
pub struct EmptyInput;

pub fn expected_roi_fraction_check(decisions: &[RoiDecision]) -> Result<RoiFraction, EmptyInput> {
    if decisions.is_empty() {
        return Err(EmptyInput);
    }
    let accepted = decisions.iter().filter(|d| d.accepted).count();
    let fraction = accepted as f64 / decisions.len() as f64;
    let (lo, hi) = EXPECTED_ROI_FRACTION;
    Ok(RoiFraction { fraction, accepted, total: decisions.len(), anomalous: fraction < lo || fraction > hi })
}

/// JSON-lines decision log, one record per tile.
pub fn write_decision_log<W: Write>(mut out: W, decisions: &[RoiDecision]) -> std::io::Result<()> {
    for d in decisions {
        serde_json::to_writer(&mut out, d)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_decision_log(text: &str) -> Result<Vec<RoiDecision>, serde_json::Error> {
    text.lines().filter(|l| !l.trim().is_empty()).map(serde_json::from_str).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::BackendInfo;

    fn score(p: f64) -> RoiScore {
        RoiScore { tile_coord: GridCoord::new(0, 0), p_appropriate: p, backend_id: "t".into() }
    }

    fn decisions(accepted: usize, total: usize) -> Vec<RoiDecision> {
        (0..total).map(|i| gate(&score(if i < accepted { 0.9 } else { 0.1 }), 0.5)).collect()
    }

    #[test]
    fn gate_boundary_inclusive() {
        assert!(gate(&score(0.93), 0.5).accepted);
        assert!(gate(&score(0.5), 0.5).accepted);
        assert!(!gate(&score(0.49), 0.5).accepted);
        assert_eq!(gate(&score(0.5), 0.5).threshold, 0.5);
    }

    #[test]
    fn fraction_check() {
        let f = expected_roi_fraction_check(&decisions(45, 300)).unwrap();
        assert_eq!(f.fraction, 0.15);
        assert!(!f.anomalous);
        let f = expected_roi_fraction_check(&decisions(300, 300)).unwrap();
        assert_eq!(f.fraction, 1.0);
        assert!(f.anomalous);
        assert_eq!(expected_roi_fraction_check(&[]), Err(EmptyInput));
    }

    struct Offline;
    impl TileClassifier for Offline {
        fn info(&self) -> BackendInfo {
            BackendInfo::new("offline", "0")
        }
        fn score(&self, _: &Tile) -> Result<f64, BackendError> {
            Err(BackendError::Unavailable("connection refused".into()))
        }
    }

    struct OutOfRange;
    impl TileClassifier for OutOfRange {
        fn info(&self) -> BackendInfo {
            BackendInfo::new("broken", "0")
        }
        fn score(&self, _: &Tile) -> Result<f64, BackendError> {
            Ok(1.5)
        }
    }

    #[test]
    fn backend_errors_surface() {
        let tile = Tile {
            slide_id: "s".into(),
            coord: GridCoord::new(1, 2),
            origin_px: (0, 0),
            pixels: image::RgbImage::new(8, 8),
        };
        assert!(matches!(score_tile(&Offline, &tile), Err(BackendError::Unavailable(_))));
        assert!(matches!(score_tile(&OutOfRange, &tile), Err(BackendError::Inference(_))));
    }

    #[test]
    fn decision_log_round_trip() {
        let ds = decisions(2, 4);
        let mut buf = Vec::new();
        write_decision_log(&mut buf, &ds).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert!(text.lines().next().unwrap().contains("\"accepted\":true"));
        assert_eq!(read_decision_log(&text).unwrap(), ds);
    }

    proptest::proptest! {
        #[test]
        fn gate_monotone(p in 0.0..1.0f64, dp in 0.0..1.0f64, t1 in 0.0..1.0f64, dt in 0.0..1.0f64) {
            let hi = (p + dp).min(1.0);
            if gate(&score(p), t1).accepted {
                proptest::prop_assert!(gate(&score(hi), t1).accepted);
            }
            let t2 = (t1 + dt).min(1.0);
            if gate(&score(p), t2).accepted {
                proptest::prop_assert!(gate(&score(p), t1).accepted);
            }
        }
    }
}
