//! Inter-cell interference bookkeeping and the consensus structure.
//!
//! The global ICI vector `iota` holds one entry per (source BS, out-of-cell
//! victim user) pair. Each BS's local copy `nu_b` stacks (i) the per-own-user
//! sums of ICI received from all other BSs and (ii) the caused-ICI block the
//! BS itself imposes on out-of-cell users. The 0/1 selection matrices `A_b`
//! realize `A_b iota = nu_b`; eliminating `iota` yields the coupling
//! equalities between local states that the solver enforces.

use crate::channel::ChannelRealization;
use crate::state::StateLayout;
use num_complex::Complex64;

/// Global cross-cell interference powers, one per (source BS, victim user).
#[derive(Debug, Clone)]
pub struct GlobalICI {
    pub iota: Vec<f64>,
}

/// Sparse matrix as triplets (row, col, value).
#[derive(Debug, Clone, Default)]
pub struct SparseMat {
    pub n_rows: usize,
    pub n_cols: usize,
    pub triplets: Vec<(usize, usize, f64)>,
}

impl SparseMat {
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n_cols);
        let mut y = vec![0.0; self.n_rows];
        for &(r, c, v) in &self.triplets {
            y[r] += v * x[c];
        }
        y
    }

    pub fn apply_transpose(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.n_rows);
        let mut x = vec![0.0; self.n_cols];
        for &(r, c, v) in &self.triplets {
            x[c] += v * y[r];
        }
        x
    }
}

/// User-to-BS bookkeeping plus per-BS packed-state layouts.
#[derive(Debug, Clone)]
pub struct ClusterIndex {
    /// Home BS per global user.
    pub home: Vec<usize>,
    /// Global user indices served by each BS, in index order.
    pub users_of: Vec<Vec<usize>>,
    /// Global user indices NOT served by each BS, in index order; this fixes
    /// the ordering of the caused-ICI block of nu_b.
    pub others_of: Vec<Vec<usize>>,
    pub layouts: Vec<StateLayout>,
}

impl ClusterIndex {
    pub fn new(home: Vec<usize>, n_bs: usize, antenna_counts: &[usize]) -> Self {
        let k_total = home.len();
        let users_of: Vec<Vec<usize>> = (0..n_bs)
            .map(|b| (0..k_total).filter(|&k| home[k] == b).collect())
            .collect();
        let others_of: Vec<Vec<usize>> = (0..n_bs)
            .map(|b| (0..k_total).filter(|&k| home[k] != b).collect())
            .collect();
        let layouts = (0..n_bs)
            .map(|b| StateLayout {
                n_ant: antenna_counts[b],
                k_own: users_of[b].len(),
                k_total,
            })
            .collect();
        Self {
            home,
            users_of,
            others_of,
            layouts,
        }
    }

    pub fn n_bs(&self) -> usize {
        self.users_of.len()
    }

    pub fn k_total(&self) -> usize {
        self.home.len()
    }

    /// Number of global ICI entries: one per (source b, victim not served by b).
    pub fn iota_len(&self) -> usize {
        (0..self.n_bs()).map(|b| self.others_of[b].len()).sum()
    }

    /// Index of iota entry (source BS b -> victim global user k).
    pub fn iota_index(&self, b: usize, k: usize) -> usize {
        debug_assert_ne!(self.home[k], b);
        let base: usize = (0..b).map(|bb| self.others_of[bb].len()).sum();
        let pos = self.others_of[b].iter().position(|&u| u == k).unwrap();
        base + pos
    }
}

/// The consensus structure: selection matrices A_b over iota and the derived
/// coupling matrices over packed local states.
#[derive(Debug, Clone)]
pub struct ConsensusMap {
    /// A_b: |nu_b| x |iota| 0/1 matrices with A_b iota = nu_b.
    pub a_mats: Vec<SparseMat>,
    /// Coupling matrices E_b over the packed state of BS b; the solver
    /// enforces sum_b E_b l_b = rhs. One row per global user: the reported
    /// caused-ICI entries of the other BSs minus the home BS's sum entry.
    pub couplings: Vec<SparseMat>,
    /// Right-hand side of the coupling equalities (zero here).
    pub rhs: Vec<f64>,
}

/// Build the consensus map. For a single BS the map is empty (no coupling).
pub fn build_consensus_map(idx: &ClusterIndex) -> ConsensusMap {
    let n_bs = idx.n_bs();
    let k_total = idx.k_total();
    let iota_len = idx.iota_len();
    let mut a_mats = Vec::with_capacity(n_bs);
    let mut couplings = Vec::with_capacity(n_bs);
    if n_bs < 2 {
        for b in 0..n_bs {
            a_mats.push(SparseMat {
                n_rows: k_total,
                n_cols: 0,
                triplets: vec![],
            });
            couplings.push(SparseMat {
                n_rows: 0,
                n_cols: idx.layouts[b].dim(),
                triplets: vec![],
            });
        }
        return ConsensusMap {
            a_mats,
            couplings,
            rhs: vec![],
        };
    }
    for b in 0..n_bs {
        let layout = &idx.layouts[b];
        let mut a = SparseMat {
            n_rows: k_total,
            n_cols: iota_len,
            triplets: vec![],
        };
        // type (i): per own user, sum of ICI caused by every other BS
        for (row, &k) in idx.users_of[b].iter().enumerate() {
            for bp in 0..n_bs {
                if bp != b {
                    a.triplets.push((row, idx.iota_index(bp, k), 1.0));
                }
            }
        }
        // type (ii): b's own caused block
        for (j, &k) in idx.others_of[b].iter().enumerate() {
            a.triplets
                .push((layout.k_own + j, idx.iota_index(b, k), 1.0));
        }
        a_mats.push(a);

        // coupling rows: one equation per global user; for user k homed at h:
        //   sum_{b' != h} nu_{b'}[caused entry for k]  -  nu_h[sum entry for k] = 0
        let mut e = SparseMat {
            n_rows: k_total,
            n_cols: layout.dim(),
            triplets: vec![],
        };
        for k in 0..k_total {
            if idx.home[k] == b {
                let local = idx.users_of[b].iter().position(|&u| u == k).unwrap();
                e.triplets.push((k, layout.nu_sum(local), -1.0));
            } else {
                let j = idx.others_of[b].iter().position(|&u| u == k).unwrap();
                e.triplets.push((k, layout.nu_caused(j), 1.0));
            }
        }
        couplings.push(e);
    }
    ConsensusMap {
        a_mats,
        couplings,
        rhs: vec![0.0; k_total],
    }
}

/// ICI that BS b's precoder imposes on every out-of-cell user, in
/// `others_of(b)` order: iota_{b,k'} = sum_{k in U_b} |h_{b,k'}^H w_{bk}|^2.
pub fn compute_ici_caused(
    channels: &ChannelRealization,
    precoder_b: &[Vec<Complex64>],
    b: usize,
    idx: &ClusterIndex,
) -> Vec<f64> {
    idx.others_of[b]
        .iter()
        .map(|&kp| {
            let h = &channels.h[b][kp];
            precoder_b
                .iter()
                .map(|w| {
                    h.iter()
                        .zip(w)
                        .map(|(hi, wi)| hi.conj() * wi)
                        .sum::<Complex64>()
                        .norm_sqr()
                })
                .sum()
        })
        .collect()
}

/// Assemble the global ICI vector from per-BS caused slices.
pub fn assemble_global_ici(slices: &[Vec<f64>], idx: &ClusterIndex) -> GlobalICI {
    let mut iota = vec![0.0; idx.iota_len()];
    for b in 0..idx.n_bs() {
        for (j, &k) in idx.others_of[b].iter().enumerate() {
            iota[idx.iota_index(b, k)] = slices[b][j];
        }
    }
    GlobalICI { iota }
}

/// Build nu_b directly from the global ICI by its definition (test oracle
/// and initialization helper).
pub fn nu_from_iota(iota: &GlobalICI, b: usize, idx: &ClusterIndex) -> Vec<f64> {
    let mut nu = Vec::with_capacity(idx.k_total());
    for &k in &idx.users_of[b] {
        let sum: f64 = (0..idx.n_bs())
            .filter(|&bp| bp != b)
            .map(|bp| iota.iota[idx.iota_index(bp, k)])
            .sum();
        nu.push(sum);
    }
    for &k in &idx.others_of[b] {
        nu.push(iota.iota[idx.iota_index(b, k)]);
    }
    nu
}
