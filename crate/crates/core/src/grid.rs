//! Index mathematics for the Cartesian domain decomposition.
//!
//! Everything here is a pure function of its inputs: rank factorization,
//! balanced local extents, the periodic neighbor table and subdomain
//! geometry. Ranks are numbered with z varying fastest,
//! `id = (cx * p2 + cy) * p3 + cz`.

use serde::Serialize;
use thiserror::Error;

/// Halo width required by the five-point reconstruction stencil.
pub const DEFAULT_HALO: usize = 3;

/// Axis names used in error messages and reports.
pub const AXIS_NAMES: [&str; 3] = ["x", "y", "z"];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("rank count must be at least 1")]
    ZeroRanks,
    #[error(
        "no admissible decomposition of {ranks} ranks: axis {axis} has {cells} cells, \
         splitting it {pieces} ways leaves pieces below 2*halo = {min_piece} cells"
    )]
    NoAdmissibleFactorization {
        ranks: usize,
        axis: &'static str,
        cells: usize,
        pieces: usize,
        min_piece: usize,
    },
    #[error("cannot split {n} cells into {p} pieces")]
    InvalidSplit { n: usize, p: usize },
    #[error("coordinate {c} out of range for {p} pieces")]
    CoordOutOfRange { c: usize, p: usize },
    #[error("axis {axis} is not periodic; only periodic boundaries are supported")]
    NonPeriodic { axis: &'static str },
}

/// Side of a face along an axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Side {
    Minus,
    Plus,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::Minus, Side::Plus];

    pub fn opposite(self) -> Side {
        match self {
            Side::Minus => Side::Plus,
            Side::Plus => Side::Minus,
        }
    }

    /// Slot of the face `(axis, side)` in a neighbor table row.
    pub fn slot(self, axis: usize) -> usize {
        2 * axis + usize::from(self == Side::Plus)
    }
}

/// The global structured grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GlobalGrid {
    pub n: [usize; 3],
    pub extent: [(f64, f64); 3],
    pub halo: usize,
}

impl GlobalGrid {
    /// Grid on the unit cube with the default halo.
    pub fn new(n: [usize; 3]) -> Result<Self, GridError> {
        Self::with_extent(n, [(0.0, 1.0); 3], DEFAULT_HALO)
    }

    pub fn cube(n: usize) -> Result<Self, GridError> {
        Self::new([n; 3])
    }

    pub fn with_extent(
        n: [usize; 3],
        extent: [(f64, f64); 3],
        halo: usize,
    ) -> Result<Self, GridError> {
        if halo == 0 {
            return Err(GridError::InvalidGrid("halo width must be positive".into()));
        }
        for axis in 0..3 {
            if n[axis] == 0 {
                return Err(GridError::InvalidGrid(format!(
                    "axis {} has zero cells",
                    AXIS_NAMES[axis]
                )));
            }
            let (lo, hi) = extent[axis];
            if !(hi - lo > 0.0) || !lo.is_finite() || !hi.is_finite() {
                return Err(GridError::InvalidGrid(format!(
                    "axis {} extent [{lo}, {hi}] is empty",
                    AXIS_NAMES[axis]
                )));
            }
        }
        Ok(Self { n, extent, halo })
    }

    pub fn spacing(&self) -> [f64; 3] {
        std::array::from_fn(|a| (self.extent[a].1 - self.extent[a].0) / self.n[a] as f64)
    }

    /// Physical coordinate of the center of global cell `index` along `axis`.
    pub fn cell_center(&self, axis: usize, index: usize) -> f64 {
        self.extent[axis].0 + (index as f64 + 0.5) * self.spacing()[axis]
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().iter().product()
    }

    pub fn total_cells(&self) -> usize {
        self.n.iter().product()
    }
}

/// Per-rank halo area of a factorization, with real-valued piece sizes.
pub fn halo_area(dims: [usize; 3], grid: &GlobalGrid) -> f64 {
    let piece: [f64; 3] = std::array::from_fn(|a| grid.n[a] as f64 / dims[a] as f64);
    let mut area = 0.0;
    for (a, &d) in dims.iter().enumerate() {
        if d > 1 {
            let (b, c) = ((a + 1) % 3, (a + 2) % 3);
            let (lo, hi) = if b < c { (b, c) } else { (c, b) };
            area += 2.0 * grid.halo as f64 * piece[lo] * piece[hi];
        }
    }
    area
}

fn violated_axis(dims: [usize; 3], grid: &GlobalGrid) -> Option<usize> {
    (0..3).find(|&a| grid.n[a] / dims[a] < 2 * grid.halo)
}

/// Surface of one rank's piece over all six faces, decomposed or not.
fn piece_surface(dims: [usize; 3], grid: &GlobalGrid) -> f64 {
    let piece: [f64; 3] = std::array::from_fn(|a| grid.n[a] as f64 / dims[a] as f64);
    2.0 * (piece[0] * piece[1] + piece[1] * piece[2] + piece[0] * piece[2])
}

/// Strict improvement with a relative tolerance, so that equal areas from
/// different factorizations compare as ties.
fn less(a: f64, b: f64) -> bool {
    a < b - 1e-12 * b.abs()
}

/// Chooses the rank factorization `(p1, p2, p3)` minimizing the per-rank
/// halo area among those leaving every piece at least `2 * halo` cells wide.
/// Equal areas go to the smaller total piece surface, then to the smallest
/// `p1`, then the smallest `p2`.
pub fn decompose(ranks: usize, grid: &GlobalGrid) -> Result<[usize; 3], GridError> {
    if ranks == 0 {
        return Err(GridError::ZeroRanks);
    }
    let better = |dims: [usize; 3], best: Option<([usize; 3], f64)>| -> bool {
        let Some((b, area)) = best else { return true };
        let new = halo_area(dims, grid);
        less(new, area) || (!less(area, new) && less(piece_surface(dims, grid), piece_surface(b, grid)))
    };
    let mut best: Option<([usize; 3], f64)> = None;
    let mut best_unconstrained: Option<([usize; 3], f64)> = None;
    for p1 in (1..=ranks).filter(|p| ranks % p == 0) {
        let rest = ranks / p1;
        for p2 in (1..=rest).filter(|p| rest % p == 0) {
            let dims = [p1, p2, rest / p2];
            let area = halo_area(dims, grid);
            if better(dims, best_unconstrained) {
                best_unconstrained = Some((dims, area));
            }
            if violated_axis(dims, grid).is_none() && better(dims, best) {
                best = Some((dims, area));
            }
        }
    }
    match best {
        Some((dims, _)) => Ok(dims),
        None => {
            let (dims, _) = best_unconstrained.expect("at least (1,1,ranks) is enumerated");
            let axis = violated_axis(dims, grid).expect("candidate was rejected");
            Err(GridError::NoAdmissibleFactorization {
                ranks,
                axis: AXIS_NAMES[axis],
                cells: grid.n[axis],
                pieces: dims[axis],
                min_piece: 2 * grid.halo,
            })
        }
    }
}

/// Balanced split without range checks: the first `n % p` pieces get one
/// extra cell. Shared by the thread scheduler, which allows `n < p`.
pub(crate) fn balanced_piece(n: usize, p: usize, c: usize) -> (usize, usize) {
    let base = n / p;
    let extra = n % p;
    let count = base + usize::from(c < extra);
    let offset = c * base + c.min(extra);
    (offset, count)
}

/// Offset and count of piece `c` when `n` cells are split over `p` ranks.
pub fn local_extent(n: usize, p: usize, c: usize) -> Result<(usize, usize), GridError> {
    if p == 0 || p > n {
        return Err(GridError::InvalidSplit { n, p });
    }
    if c >= p {
        return Err(GridError::CoordOutOfRange { c, p });
    }
    Ok(balanced_piece(n, p, c))
}

pub fn rank_of(dims: [usize; 3], coords: [usize; 3]) -> usize {
    (coords[0] * dims[1] + coords[1]) * dims[2] + coords[2]
}

pub fn coords_of(dims: [usize; 3], rank: usize) -> [usize; 3] {
    let cz = rank % dims[2];
    let cy = (rank / dims[2]) % dims[1];
    let cx = rank / (dims[1] * dims[2]);
    [cx, cy, cz]
}

/// Six neighbors per rank, ordered `-x, +x, -y, +y, -z, +z`.
pub fn neighbor_table(dims: [usize; 3], periodic: [bool; 3]) -> Result<Vec<[usize; 6]>, GridError> {
    if let Some(axis) = (0..3).find(|&a| !periodic[a]) {
        return Err(GridError::NonPeriodic {
            axis: AXIS_NAMES[axis],
        });
    }
    if dims.contains(&0) {
        return Err(GridError::ZeroRanks);
    }
    let total: usize = dims.iter().product();
    Ok((0..total)
        .map(|rank| {
            let c = coords_of(dims, rank);
            let mut row = [0; 6];
            for axis in 0..3 {
                for side in Side::BOTH {
                    let mut nc = c;
                    nc[axis] = match side {
                        Side::Minus => (c[axis] + dims[axis] - 1) % dims[axis],
                        Side::Plus => (c[axis] + 1) % dims[axis],
                    };
                    row[side.slot(axis)] = rank_of(dims, nc);
                }
            }
            row
        })
        .collect())
}

/// Cells owned by one rank, in global indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Subdomain {
    pub offset: [usize; 3],
    pub count: [usize; 3],
}

/// A periodic Cartesian rank layout.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankLayout {
    pub dims: [usize; 3],
    pub periodic: [bool; 3],
    pub coords: Vec<[usize; 3]>,
    pub neighbors: Vec<[usize; 6]>,
}

impl RankLayout {
    pub fn new(dims: [usize; 3], periodic: [bool; 3]) -> Result<Self, GridError> {
        let neighbors = neighbor_table(dims, periodic)?;
        let coords = (0..neighbors.len()).map(|r| coords_of(dims, r)).collect();
        Ok(Self {
            dims,
            periodic,
            coords,
            neighbors,
        })
    }

    /// Decomposes `ranks` over a fully periodic grid.
    pub fn for_grid(ranks: usize, grid: &GlobalGrid) -> Result<Self, GridError> {
        Self::new(decompose(ranks, grid)?, [true; 3])
    }

    pub fn ranks(&self) -> usize {
        self.coords.len()
    }

    pub fn neighbor(&self, rank: usize, axis: usize, side: Side) -> usize {
        self.neighbors[rank][side.slot(axis)]
    }

    pub fn subdomain(&self, grid: &GlobalGrid, rank: usize) -> Result<Subdomain, GridError> {
        let c = self.coords[rank];
        let mut offset = [0; 3];
        let mut count = [0; 3];
        for a in 0..3 {
            (offset[a], count[a]) = local_extent(grid.n[a], self.dims[a], c[a])?;
        }
        Ok(Subdomain { offset, count })
    }
}
