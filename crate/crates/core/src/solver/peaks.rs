use super::simulate::Trajectory;
use serde::{Deserialize, Serialize};

/// Time and height of the first global maximum of `I_v`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VertexPeak {
    pub t_max: f64,
    pub i_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakReport {
    pub vertices: Vec<VertexPeak>,
}

impl PeakReport {
    /// `T_max(to) - T_max(from)`
    pub fn delay(&self, from: usize, to: usize) -> f64 {
        self.vertices[to].t_max - self.vertices[from].t_max
    }

    pub fn times(&self) -> Vec<f64> {
        self.vertices.iter().map(|p| p.t_max).collect()
    }

    pub(crate) fn start(t: f64, infected: &[f64]) -> Self {
        Self { vertices: infected.iter().map(|&i| VertexPeak { t_max: t, i_max: i }).collect() }
    }

    /// Keeps the earliest time among equal maxima.
    pub(crate) fn observe(&mut self, t: f64, infected: &[f64]) {
        for (peak, &i) in self.vertices.iter_mut().zip(infected) {
            if i > peak.i_max {
                *peak = VertexPeak { t_max: t, i_max: i };
            }
        }
    }
}

/// Peaks over the recorded samples of a trajectory.
pub fn detect_peaks(trajectory: &Trajectory) -> PeakReport {
    let mut samples = trajectory.samples.iter();
    let Some(first) = samples.next() else {
        return PeakReport { vertices: Vec::new() };
    };
    let mut report = PeakReport::start(first.t, &first.i);
    for s in samples {
        report.observe(s.t, &s.i);
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_occurrence_wins() {
        let mut r = PeakReport::start(0.0, &[1.0, 0.0]);
        r.observe(1.0, &[0.5, 2.0]);
        r.observe(2.0, &[0.2, 2.0]);
        assert_eq!(r.vertices[0], VertexPeak { t_max: 0.0, i_max: 1.0 });
        assert_eq!(r.vertices[1], VertexPeak { t_max: 1.0, i_max: 2.0 });
        assert_eq!(r.delay(0, 1), 1.0);
    }
}
