//! Cone-weighted neighbourhood averaging of element fields.

use crate::fem::Mesh;

/// Precomputed weights `max(0, r − dist)` between element centres, with
/// distances measured in element widths along each axis.
#[derive(Clone, Debug)]
pub struct ConeFilter {
    neighbours: Vec<Vec<(usize, f64)>>,
}

impl ConeFilter {
    pub fn new(mesh: &Mesh, radius: f64) -> Self {
        let (nx, ny) = (mesh.nx as isize, mesh.ny as isize);
        let reach = radius.ceil() as isize;
        let mut neighbours = Vec::with_capacity(mesh.element_count());
        for ey in 0..ny {
            for ex in 0..nx {
                let mut list = Vec::new();
                for dy in -reach..=reach {
                    for dx in -reach..=reach {
                        let (fx, fy) = (ex + dx, ey + dy);
                        if fx < 0 || fy < 0 || fx >= nx || fy >= ny {
                            continue;
                        }
                        let w = radius - ((dx * dx + dy * dy) as f64).sqrt();
                        if w > 0.0 {
                            list.push(((fy * nx + fx) as usize, w));
                        }
                    }
                }
                neighbours.push(list);
            }
        }
        Self { neighbours }
    }

    pub fn apply(&self, field: &[f64]) -> Vec<f64> {
        self.neighbours
            .iter()
            .map(|list| {
                let (num, den) = list.iter().fold((0.0, 0.0), |(n, d), &(j, w)| (n + w * field[j], d + w));
                num / den
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_field_is_preserved() {
        let mesh = Mesh::new(7, 4, 7.0, 4.0).unwrap();
        let f = ConeFilter::new(&mesh, 1.5);
        for v in f.apply(&vec![2.5; 28]) {
            assert!((v - 2.5).abs() < 1e-15);
        }
    }

    #[test]
    fn small_radius_is_identity() {
        let mesh = Mesh::new(4, 3, 4.0, 3.0).unwrap();
        let field: Vec<f64> = (0..12).map(|i| i as f64 * 0.7 - 3.0).collect();
        assert_eq!(ConeFilter::new(&mesh, 0.9).apply(&field), field);
    }

    #[test]
    fn spike_matches_direct_convolution() {
        let mesh = Mesh::new(5, 5, 5.0, 5.0).unwrap();
        let mut field = vec![0.0; 25];
        field[12] = 1.0;
        let out = ConeFilter::new(&mesh, 1.5).apply(&field);
        // direct evaluation at each centre of Σ w·f / Σ w over in-range neighbours
        for e in 0..25 {
            let (ex, ey) = ((e % 5) as f64, (e / 5) as f64);
            let (mut num, mut den) = (0.0, 0.0);
            for f in 0..25 {
                let (fx, fy) = ((f % 5) as f64, (f / 5) as f64);
                let w = (1.5 - ((ex - fx).powi(2) + (ey - fy).powi(2)).sqrt()).max(0.0);
                num += w * field[f];
                den += w;
            }
            assert!((out[e] - num / den).abs() < 1e-15, "element {e}");
        }
        assert!(out[12] > out[13] && out[13] > out[18] && out[18] > 0.0 && out[0] == 0.0);
    }
}
