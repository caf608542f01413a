use std::collections::HashMap;

use super::{MetricField, TriMesh};
use crate::error::{Error, Result};

/// Subdivided icosahedron with vertices on the sphere of the given radius and chordal
/// edge lengths. Subdivision `s` has `10·4^s + 2` vertices.
pub fn build_icosphere(subdivisions: u32, radius: f64) -> Result<(TriMesh, MetricField)> {
    if subdivisions > 8 {
        return Err(Error::SubdivisionOutOfRange(subdivisions));
    }
    if !(radius.is_finite() && radius > 0.0) {
        return Err(Error::InvalidParameter(format!("radius must be positive, got {radius}")));
    }
    let (mut pts, mut faces) = icosahedron();
    for _ in 0..subdivisions {
        let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
        let mut next = Vec::with_capacity(faces.len() * 4);
        for &[a, b, c] in &faces {
            let mut m = |i: usize, j: usize, pts: &mut Vec<[f64; 3]>| {
                *mid.entry((i.min(j), i.max(j))).or_insert_with(|| {
                    let p = normalize([
                        pts[i][0] + pts[j][0],
                        pts[i][1] + pts[j][1],
                        pts[i][2] + pts[j][2],
                    ]);
                    pts.push(p);
                    pts.len() - 1
                })
            };
            let ab = m(a, b, &mut pts);
            let bc = m(b, c, &mut pts);
            let ca = m(c, a, &mut pts);
            next.push([a, ab, ca]);
            next.push([b, bc, ab]);
            next.push([c, ca, bc]);
            next.push([ab, bc, ca]);
        }
        faces = next;
    }
    let pts: Vec<[f64; 3]> = pts
        .into_iter()
        .map(|p| [p[0] * radius, p[1] * radius, p[2] * radius])
        .collect();
    let mesh = TriMesh::new(faces, Some(pts.clone()))?;
    let metric = MetricField::from_positions(&mesh, &pts)?;
    Ok((mesh, metric))
}

fn normalize(p: [f64; 3]) -> [f64; 3] {
    let n = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
    [p[0] / n, p[1] / n, p[2] / n]
}

fn icosahedron() -> (Vec<[f64; 3]>, Vec<[usize; 3]>) {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let raw = [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ];
    let pts = raw.iter().map(|&p| normalize(p)).collect();
    let faces = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    (pts, faces)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn base_icosahedron() {
        let (m, g) = build_icosphere(0, 1.0).unwrap();
        assert_eq!((m.num_vertices(), m.num_faces(), m.num_edges()), (12, 20, 30));
        let l0 = g.lengths()[0];
        assert!(g.lengths().iter().all(|l| (l - l0).abs() < 1e-14));
    }

    #[test]
    fn outward_orientation() {
        let (m, _) = build_icosphere(1, 1.0).unwrap();
        let p = m.positions().unwrap();
        for &[a, b, c] in m.faces() {
            let u = [p[b][0] - p[a][0], p[b][1] - p[a][1], p[b][2] - p[a][2]];
            let v = [p[c][0] - p[a][0], p[c][1] - p[a][1], p[c][2] - p[a][2]];
            let n = [
                u[1] * v[2] - u[2] * v[1],
                u[2] * v[0] - u[0] * v[2],
                u[0] * v[1] - u[1] * v[0],
            ];
            assert!(n[0] * p[a][0] + n[1] * p[a][1] + n[2] * p[a][2] > 0.0);
        }
    }

    #[test]
    fn rejects_level_nine() {
        assert!(matches!(build_icosphere(9, 1.0), Err(Error::SubdivisionOutOfRange(9))));
    }
}
