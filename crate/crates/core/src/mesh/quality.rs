use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{signed_volume6, Mesh, EDGES};

/// Element quality in [0, 1]; 0 is the regular tetrahedron, 1 is degenerate.
pub fn element_quality(p: &[super::Point; 4]) -> f64 {
    let v = signed_volume6(&p[0], &p[1], &p[2], &p[3]).abs() / 6.0;
    let l2: f64 = EDGES.iter().map(|&(a, b)| (p[a] - p[b]).norm_squared()).sum::<f64>() / 6.0;
    let lrms3 = l2 * l2.sqrt();
    if lrms3 == 0.0 {
        return 1.0;
    }
    (1.0 - 6.0 * std::f64::consts::SQRT_2 * v / lrms3).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub max: f64,
    pub mean: f64,
    pub worst_element: usize,
    pub n_elements: usize,
    /// Element counts in ten equal bins over [0, 1].
    pub histogram: [usize; 10],
}

pub fn quality_report(mesh: &Mesh) -> QualityReport {
    let q: Vec<f64> = (0..mesh.n_elements())
        .into_par_iter()
        .map(|e| element_quality(&mesh.element_points(e)))
        .collect();
    let mut worst = 0;
    for (i, &v) in q.iter().enumerate() {
        if v > q[worst] {
            worst = i;
        }
    }
    let mut histogram = [0; 10];
    for &v in &q {
        histogram[((v * 10.0) as usize).min(9)] += 1;
    }
    QualityReport {
        max: q.get(worst).copied().unwrap_or(0.0),
        mean: if q.is_empty() { 0.0 } else { q.iter().sum::<f64>() / q.len() as f64 },
        worst_element: worst,
        n_elements: q.len(),
        histogram,
    }
}
