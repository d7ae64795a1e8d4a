use std::time::Instant;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde_json::json;

use super::{Query, QueryKind, Reasoner, Reply};
use crate::error::BackendError;
use crate::geometry::{is_satisfied, EnvState, TaskRelation, WorkspaceConfig};
use crate::seed;

/// The point on the goal boundary nearest to the red marker along the
/// relation's axis, clipped to the workspace. Equal to the current position
/// when the relation already holds.
///
/// The boundary coordinate is nudged by a few ulps of the larger coordinate so that moving
/// by `prediction - current` in floating point lands on the goal side.
pub fn ideal_coordinates(state: &EnvState, task: TaskRelation, ws: &WorkspaceConfig) -> (f64, f64) {
    let (x, y) = (state.target_x, state.target_y);
    if is_satisfied(state, task, ws) {
        return (x, y);
    }
    let m = ws.margin;
    match task {
        TaskRelation::RightOf => (reach(x, state.reference_x + m, ws), y),
        TaskRelation::LeftOf => (reach(x, state.reference_x - m, ws), y),
        TaskRelation::Above => (x, reach(y, state.reference_y - m, ws)),
        TaskRelation::Below => (x, reach(y, state.reference_y + m, ws)),
    }
}

fn reach(from: f64, boundary: f64, ws: &WorkspaceConfig) -> f64 {
    let up = boundary > from;
    let mut target = boundary;
    for _ in 0..4096 {
        let landed = from + (target - from);
        if (up && landed >= boundary) || (!up && landed <= boundary) {
            break;
        }
        target = if up { target.next_up() } else { target.next_down() };
    }
    ws.clip(target)
}

fn label_text(task: TaskRelation) -> String {
    json!({ "relation": task.index() }).to_string()
}

fn coordinate_text(x: f64, y: f64) -> String {
    json!({ "x": x, "y": y }).to_string()
}

fn timed(f: impl FnOnce() -> String) -> Reply {
    let start = Instant::now();
    let text = f();
    Reply {
        text,
        latency_ms: start.elapsed().as_secs_f64() * 1e3,
    }
}

/// Always answers with the ground truth.
#[derive(Debug, Clone, Copy, Default)]
pub struct OracleBackend;

impl Reasoner for OracleBackend {
    fn query(&mut self, q: &Query<'_>) -> Result<Reply, BackendError> {
        Ok(timed(|| match q.kind {
            QueryKind::Symbolic => label_text(q.task),
            QueryKind::Coordinate => {
                let (x, y) = ideal_coordinates(q.state, q.task, q.ws);
                coordinate_text(x, y)
            }
        }))
    }
}

/// Ground truth corrupted at configurable rates.
///
/// Labels are wrong with probability `error_rate`, and a wrong label is
/// uniform over the other three. Coordinates are the ideal point plus
/// isotropic Gaussian noise, or with probability `hallucination_rate` a
/// uniform point in the workspace.
#[derive(Debug, Clone)]
pub struct NoisyBackend {
    error_rate: f64,
    noise: Normal<f64>,
    hallucination_rate: f64,
    rng: ChaCha8Rng,
}

impl NoisyBackend {
    pub fn new(error_rate: f64, coord_noise_std: f64, hallucination_rate: f64, rng_seed: u64) -> Self {
        Self {
            error_rate,
            noise: Normal::new(0.0, coord_noise_std).expect("noise std validated as finite and >= 0"),
            hallucination_rate,
            rng: seed::rng(rng_seed),
        }
    }

    fn label(&mut self, truth: TaskRelation) -> TaskRelation {
        if self.rng.random_bool(self.error_rate) {
            // Uniform over the three other labels.
            let offset = self.rng.random_range(1..TaskRelation::ALL.len());
            TaskRelation::ALL[(truth.index() + offset) % TaskRelation::ALL.len()]
        } else {
            truth
        }
    }

    fn coordinates(&mut self, q: &Query<'_>) -> (f64, f64) {
        let c = q.ws.side_length;
        if self.rng.random_bool(self.hallucination_rate) {
            (self.rng.random_range(0.0..=c), self.rng.random_range(0.0..=c))
        } else {
            let (x, y) = ideal_coordinates(q.state, q.task, q.ws);
            (x + self.noise.sample(&mut self.rng), y + self.noise.sample(&mut self.rng))
        }
    }
}

impl Reasoner for NoisyBackend {
    fn query(&mut self, q: &Query<'_>) -> Result<Reply, BackendError> {
        Ok(timed(|| match q.kind {
            QueryKind::Symbolic => label_text(self.label(q.task)),
            QueryKind::Coordinate => {
                let (x, y) = self.coordinates(q);
                coordinate_text(x, y)
            }
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reasoner::{parse_coordinate_response, parse_symbolic_response};

    fn query<'a>(kind: QueryKind, task: TaskRelation, state: &'a EnvState, ws: &'a WorkspaceConfig) -> Query<'a> {
        Query {
            kind,
            prompt: "",
            task,
            state,
            ws,
        }
    }

    #[test]
    fn oracle_labels() {
        let ws = WorkspaceConfig::default();
        let s = EnvState::new(1.0, 2.0, 3.0, 4.0);
        let r = OracleBackend
            .query(&query(QueryKind::Symbolic, TaskRelation::Below, &s, &ws))
            .unwrap();
        assert_eq!(r.text, r#"{"relation":3}"#);
        for t in TaskRelation::ALL {
            let r = OracleBackend.query(&query(QueryKind::Symbolic, t, &s, &ws)).unwrap();
            assert_eq!(parse_symbolic_response(&r.text), Ok(t));
        }
    }

    #[test]
    fn oracle_coordinates_hit_the_boundary() {
        let ws = WorkspaceConfig::default();
        let s = EnvState::new(100.0, 100.0, 200.0, 100.0);
        let r = OracleBackend
            .query(&query(QueryKind::Coordinate, TaskRelation::RightOf, &s, &ws))
            .unwrap();
        assert_eq!(parse_coordinate_response(&r.text, 800.0), Ok((250.0, 100.0)));
        // Infeasible: the boundary lies beyond the wall and gets clipped.
        let s = EnvState::new(100.0, 100.0, 790.0, 100.0);
        assert_eq!(ideal_coordinates(&s, TaskRelation::RightOf, &ws), (800.0, 100.0));
    }

    #[test]
    fn zero_noise_is_the_oracle() {
        let ws = WorkspaceConfig::default();
        let mut noisy = NoisyBackend::new(0.0, 0.0, 0.0, 5);
        let mut rng = crate::seed::rng(1);
        for _ in 0..200 {
            let s = crate::geometry::sample_state_with(&mut rng, &ws);
            let t = TaskRelation::ALL[rng.random_range(0..4)];
            for kind in [QueryKind::Symbolic, QueryKind::Coordinate] {
                let a = noisy.query(&query(kind, t, &s, &ws)).unwrap().text;
                let b = OracleBackend.query(&query(kind, t, &s, &ws)).unwrap().text;
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn always_wrong_labels_are_uniform() {
        let ws = WorkspaceConfig::default();
        let s = EnvState::new(1.0, 2.0, 3.0, 4.0);
        let mut noisy = NoisyBackend::new(1.0, 0.0, 0.0, 77);
        let n = 10_000;
        let mut counts = [0usize; 4];
        for _ in 0..n {
            let r = noisy.query(&query(QueryKind::Symbolic, TaskRelation::Above, &s, &ws)).unwrap();
            counts[parse_symbolic_response(&r.text).unwrap().index()] += 1;
        }
        assert_eq!(counts[TaskRelation::Above.index()], 0);
        let p = 1.0 / 3.0;
        let sd = (n as f64 * p * (1.0 - p)).sqrt();
        for (i, &c) in counts.iter().enumerate() {
            if i != TaskRelation::Above.index() {
                assert!((c as f64 - n as f64 * p).abs() < 3.0 * sd, "{counts:?}");
            }
        }
    }

    #[test]
    fn noisy_is_reproducible_call_for_call() {
        let ws = WorkspaceConfig::default();
        let s = EnvState::new(1.0, 2.0, 300.0, 4.0);
        let mut a = NoisyBackend::new(0.4, 150.0, 0.15, 9);
        let mut b = NoisyBackend::new(0.4, 150.0, 0.15, 9);
        for i in 0..100 {
            let kind = if i % 2 == 0 { QueryKind::Symbolic } else { QueryKind::Coordinate };
            let q = query(kind, TaskRelation::LeftOf, &s, &ws);
            assert_eq!(a.query(&q).unwrap().text, b.query(&q).unwrap().text);
        }
    }
}
