use serde::{Deserialize, Serialize};

use super::path::distance_to_polyline;
use super::record::{RunRecord, StateSnapshot};

/// Performance of the most recently installed plan, from tracked positions.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub plan_id: Option<u32>,
    /// Seconds from plan installation until every node was reached.
    pub time_to_target: Option<f64>,
    /// Absolute session time of that arrival.
    pub arrival_time: Option<f64>,
    /// RMS distance to the planned polyline while guided; needs ≥ 2 nodes.
    pub rms_cross_track: Option<f64>,
    /// Largest distance from the final node after arrival.
    pub station_keep_radius: Option<f64>,
    pub nodes_completed: usize,
    pub nodes_total: usize,
}

/// Incremental form of [`metrics`], fed one snapshot per frame.
#[derive(Debug, Clone, Default)]
pub struct MetricsAccumulator {
    report: MetricsReport,
    sum_sq: f64,
    samples: usize,
}

impl MetricsAccumulator {
    pub fn observe(&mut self, snap: &StateSnapshot) {
        let Some(plan) = &snap.plan else {
            *self = MetricsAccumulator::default();
            return;
        };
        if self.report.plan_id != Some(plan.id) {
            *self = MetricsAccumulator::default();
            self.report.plan_id = Some(plan.id);
        }
        let r = &mut self.report;
        r.nodes_total = plan.nodes.len();
        r.nodes_completed = plan.current_index.min(plan.nodes.len());

        let fresh = snap.track.as_ref().filter(|t| !t.lost && t.sample_time == snap.time);
        if r.arrival_time.is_none() && plan.current_index >= plan.nodes.len() {
            r.arrival_time = Some(snap.time);
            r.time_to_target = Some(snap.time - plan.installed_at);
        }
        let Some(track) = fresh else {
            return;
        };
        match r.arrival_time {
            Some(arrived) if snap.time > arrived => {
                if let Some(last) = plan.nodes.last() {
                    let d = track.position.distance(*last);
                    r.station_keep_radius = Some(r.station_keep_radius.map_or(d, |m: f64| m.max(d)));
                }
            }
            _ => {
                if plan.nodes.len() >= 2 {
                    let d = distance_to_polyline(track.position, &plan.nodes);
                    self.sum_sq += d * d;
                    self.samples += 1;
                    r.rms_cross_track = Some((self.sum_sq / self.samples as f64).sqrt());
                }
            }
        }
    }

    pub fn report(&self) -> &MetricsReport {
        &self.report
    }
}

/// Recomputes the metrics of a whole record from its snapshots.
pub fn metrics(record: &RunRecord) -> MetricsReport {
    metrics_of(&record.snapshots)
}

pub fn metrics_of(snapshots: &[StateSnapshot]) -> MetricsReport {
    let mut acc = MetricsAccumulator::default();
    for s in snapshots {
        acc.observe(s);
    }
    acc.report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::Phase;
    use crate::geometry::Vec2;
    use crate::session::record::{PlanSnapshot, TrackSnapshot};

    fn snap(time: f64, pos: Vec2, nodes: &[Vec2], index: usize) -> StateSnapshot {
        StateSnapshot {
            frame: (time * 10.0).round() as u64,
            time,
            robot_truth: None,
            track: Some(TrackSnapshot {
                id: 1,
                position: pos,
                sample_time: time,
                velocity: None,
                misses: 0,
                lost: false,
            }),
            phase: Phase::Correcting,
            field: None,
            currents: None,
            offset_estimate: None,
            plan: Some(PlanSnapshot {
                id: 1,
                nodes: nodes.to_vec(),
                current_index: index,
                epsilon: 10.0,
                installed_at: 0.0,
            }),
            metrics: MetricsReport::default(),
            log: Vec::new(),
        }
    }

    #[test]
    fn never_arrives() {
        let nodes = [Vec2::ZERO, Vec2::new(100.0, 0.0)];
        let snaps: Vec<_> = (1..20).map(|i| snap(i as f64 * 0.1, Vec2::new(i as f64, 0.0), &nodes, 1)).collect();
        let m = metrics_of(&snaps);
        assert_eq!(m.time_to_target, None);
        assert_eq!(m.station_keep_radius, None);
        assert_eq!(m.nodes_completed, 1);
    }

    #[test]
    fn perfect_following_has_zero_rms() {
        let nodes = [Vec2::ZERO, Vec2::new(100.0, 0.0), Vec2::new(100.0, 100.0)];
        let mut snaps: Vec<_> =
            (1..=10).map(|i| snap(i as f64 * 0.1, Vec2::new(10.0 * i as f64, 0.0), &nodes, 1)).collect();
        snaps.extend((11..=20).map(|i| snap(i as f64 * 0.1, Vec2::new(100.0, 10.0 * (i - 10) as f64), &nodes, 2)));
        let m = metrics_of(&snaps);
        assert_eq!(m.rms_cross_track, Some(0.0));
    }

    // Hand-built record: offsets 3, 4, 0, 5 px off a horizontal segment plus
    // an on-path arrival sample. rms = sqrt((9 + 16 + 0 + 25 + 0) / 5)
    #[test]
    fn rms_matches_hand_computation() {
        let nodes = [Vec2::ZERO, Vec2::new(100.0, 0.0)];
        let offsets = [3.0, -4.0, 0.0, 5.0];
        let mut snaps: Vec<_> = offsets
            .iter()
            .enumerate()
            .map(|(i, &dy)| snap(0.1 * (i + 1) as f64, Vec2::new(20.0 * (i + 1) as f64, dy), &nodes, 1))
            .collect();
        // arrival frame counts toward the guided interval, later ones do not
        snaps.push(snap(0.5, Vec2::new(95.0, 0.0), &nodes, 2));
        snaps.push(snap(0.6, Vec2::new(90.0, 6.0), &nodes, 2));
        snaps.push(snap(0.7, Vec2::new(103.0, 4.0), &nodes, 2));
        let m = metrics_of(&snaps);
        let expected = (50.0f64 / 5.0).sqrt();
        assert!((m.rms_cross_track.unwrap() - expected).abs() < 1e-9, "{m:?}");
        assert_eq!(m.time_to_target, Some(0.5));
        let sk = m.station_keep_radius.unwrap();
        assert!((sk - (100.0f64 + 36.0).sqrt()).abs() < 1e-9);
        assert_eq!(m.nodes_completed, 2);
    }

    #[test]
    fn new_plan_resets() {
        let nodes = [Vec2::ZERO, Vec2::new(100.0, 0.0)];
        let mut a = snap(0.1, Vec2::new(5.0, 50.0), &nodes, 1);
        a.plan.as_mut().unwrap().id = 1;
        let mut b = snap(0.2, Vec2::new(5.0, 0.0), &nodes, 1);
        b.plan.as_mut().unwrap().id = 2;
        let m = metrics_of(&[a, b]);
        assert_eq!(m.plan_id, Some(2));
        assert_eq!(m.rms_cross_track, Some(0.0));
    }
}
