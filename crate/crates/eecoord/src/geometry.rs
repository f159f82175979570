//! Wrap-around multi-cell geometry and user placement.
//!
//! Cells tile a square region on a torus so that every cell is interior and
//! edge users see the same interference statistics as central ones.

use crate::error::{Error, Result};
use rand::Rng;

/// Square grid of cells on a torus.
#[derive(Debug, Clone)]
pub struct Topology {
    pub cell_side_m: f64,
    pub grid_dim: usize,
    pub bs_positions: Vec<[f64; 2]>,
    /// Side length of the full wrapped region, `grid_dim * cell_side_m`.
    pub span_m: f64,
    pub wrap: bool,
}

impl Topology {
    pub fn n_cells(&self) -> usize {
        self.bs_positions.len()
    }
}

/// Users with their home BS assignment and positions.
#[derive(Debug, Clone)]
pub struct UserLayout {
    /// Home BS index per user (exactly one BS per user).
    pub assignments: Vec<usize>,
    pub positions: Vec<[f64; 2]>,
    pub min_user_sep_m: f64,
    pub min_bs_sep_m: f64,
}

impl UserLayout {
    pub fn n_users(&self) -> usize {
        self.assignments.len()
    }

    /// Global indices of users homed at BS `b`, in index order.
    pub fn users_of(&self, b: usize) -> Vec<usize> {
        (0..self.assignments.len())
            .filter(|&k| self.assignments[k] == b)
            .collect()
    }
}

/// Place BSs at cell centers on a square torus of ceil(sqrt(n)) x
/// ceil(sqrt(n)) cells, filled row-major; non-square counts leave trailing
/// cells unoccupied but keep every occupied cell interior.
pub fn build_grid_topology(n_cells: usize, side_m: f64) -> Result<Topology> {
    if n_cells == 0 {
        return Err(Error::InvalidArgument("n_cells must be >= 1".into()));
    }
    if side_m <= 0.0 {
        return Err(Error::InvalidArgument("side_m must be positive".into()));
    }
    let dim = (n_cells as f64).sqrt().ceil() as usize;
    let mut bs_positions = Vec::with_capacity(n_cells);
    'outer: for gy in 0..dim {
        for gx in 0..dim {
            if bs_positions.len() == n_cells {
                break 'outer;
            }
            bs_positions.push([
                (gx as f64 + 0.5) * side_m,
                (gy as f64 + 0.5) * side_m,
            ]);
        }
    }
    Ok(Topology {
        cell_side_m: side_m,
        grid_dim: dim,
        bs_positions,
        span_m: dim as f64 * side_m,
        wrap: true,
    })
}

/// Torus distance: minimum over the 9 periodic images.
pub fn wrap_distance(p: [f64; 2], q: [f64; 2], span: f64) -> f64 {
    let mut best = f64::INFINITY;
    for ix in -1..=1 {
        for iy in -1..=1 {
            let dx = p[0] - (q[0] + ix as f64 * span);
            let dy = p[1] - (q[1] + iy as f64 * span);
            let d = (dx * dx + dy * dy).sqrt();
            if d < best {
                best = d;
            }
        }
    }
    best
}

/// Rejection-sample user positions uniformly within each cell, respecting
/// minimum wrap-distance separation from other users and from BSs.
///
/// Exceeding the attempt cap means the layout is over-constrained.
pub fn drop_users<R: Rng>(
    topology: &Topology,
    users_per_cell: usize,
    min_user_sep_m: f64,
    min_bs_sep_m: f64,
    rng: &mut R,
) -> Result<UserLayout> {
    const MAX_ATTEMPTS: usize = 10_000;
    let side = topology.cell_side_m;
    let span = topology.span_m;
    let mut assignments = Vec::new();
    let mut positions: Vec<[f64; 2]> = Vec::new();
    for (b, bs_pos) in topology.bs_positions.iter().enumerate() {
        let cell_x0 = bs_pos[0] - 0.5 * side;
        let cell_y0 = bs_pos[1] - 0.5 * side;
        for _ in 0..users_per_cell {
            let mut placed = false;
            for _attempt in 0..MAX_ATTEMPTS {
                let cand = [
                    cell_x0 + rng.gen::<f64>() * side,
                    cell_y0 + rng.gen::<f64>() * side,
                ];
                // Positions live on the torus; normalize into [0, span).
                let cand = [cand[0].rem_euclid(span), cand[1].rem_euclid(span)];
                let bs_ok = topology
                    .bs_positions
                    .iter()
                    .all(|&bp| wrap_distance(cand, bp, span) >= min_bs_sep_m);
                let user_ok = positions
                    .iter()
                    .all(|&up| wrap_distance(cand, up, span) >= min_user_sep_m);
                if bs_ok && user_ok {
                    assignments.push(b);
                    positions.push(cand);
                    placed = true;
                    break;
                }
            }
            if !placed {
                return Err(Error::LayoutRejected(format!(
                    "could not place user in cell {b} after {MAX_ATTEMPTS} attempts; \
                     separations too tight for cell size"
                )));
            }
        }
    }
    Ok(UserLayout {
        assignments,
        positions,
        min_user_sep_m,
        min_bs_sep_m,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_cell_bs_at_center() {
        let t = build_grid_topology(1, 200.0).unwrap();
        assert_eq!(t.bs_positions, vec![[100.0, 100.0]]);
        assert!(t.wrap);
    }

    #[test]
    fn four_cell_grid_enumeration() {
        let t = build_grid_topology(4, 200.0).unwrap();
        assert_eq!(
            t.bs_positions,
            vec![
                [100.0, 100.0],
                [300.0, 100.0],
                [100.0, 300.0],
                [300.0, 300.0]
            ]
        );
        assert_eq!(t.span_m, 400.0);
    }

    #[test]
    fn non_square_cell_count_fills_row_major() {
        let t = build_grid_topology(3, 200.0).unwrap();
        assert_eq!(
            t.bs_positions,
            vec![[100.0, 100.0], [300.0, 100.0], [100.0, 300.0]]
        );
        assert_eq!(t.span_m, 400.0);
        assert!(build_grid_topology(0, 200.0).is_err());
    }

    #[test]
    fn wrap_distance_identity() {
        assert_eq!(wrap_distance([5.0, 7.0], [5.0, 7.0], 400.0), 0.0);
    }

    #[test]
    fn wrap_distance_torus_image() {
        // nearest image of (390,0) is at (-10,0)
        let d = wrap_distance([10.0, 0.0], [390.0, 0.0], 400.0);
        assert!((d - 20.0).abs() < 1e-12);
    }

    #[test]
    fn wrap_distance_direct_when_minimal() {
        let d = wrap_distance([0.0, 0.0], [200.0, 200.0], 400.0);
        assert!((d - 200.0 * 2.0_f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn drop_users_respects_separations() {
        let t = build_grid_topology(4, 200.0).unwrap();
        for seed in 0..5 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let layout = drop_users(&t, 8, 10.0, 20.0, &mut rng).unwrap();
            assert_eq!(layout.n_users(), 32);
            for (i, &pi) in layout.positions.iter().enumerate() {
                for &bp in &t.bs_positions {
                    assert!(wrap_distance(pi, bp, t.span_m) >= 20.0);
                }
                for &pj in layout.positions.iter().skip(i + 1) {
                    assert!(wrap_distance(pi, pj, t.span_m) >= 10.0);
                }
            }
        }
    }

    #[test]
    fn drop_users_overconstrained_errors() {
        let t = build_grid_topology(1, 50.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        // Demanding 100 users with 40m separation inside a 50m cell cannot work.
        assert!(drop_users(&t, 100, 40.0, 1.0, &mut rng).is_err());
    }

    proptest! {
        #[test]
        fn wrap_distance_is_torus_metric(
            ax in 0.0..400.0, ay in 0.0..400.0,
            bx in 0.0..400.0, by in 0.0..400.0,
            cx in 0.0..400.0, cy in 0.0..400.0,
        ) {
            let span = 400.0;
            let a = [ax, ay]; let b = [bx, by]; let c = [cx, cy];
            let dab = wrap_distance(a, b, span);
            let dba = wrap_distance(b, a, span);
            prop_assert!((dab - dba).abs() < 1e-9);
            // triangle inequality
            let dac = wrap_distance(a, c, span);
            let dcb = wrap_distance(c, b, span);
            prop_assert!(dab <= dac + dcb + 1e-9);
            // bounded by half-diagonal of the torus
            prop_assert!(dab <= span * 2.0_f64.sqrt() / 2.0 + 1e-9);
        }
    }
}
