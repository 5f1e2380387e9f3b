use super::ModelKind;

/// One rank's conserved-variable grid including `halo` ghost layers.
///
/// Storage is `[var][k][j][i]` over the padded extent, `i` (x) fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldBlock {
    pub model: ModelKind,
    pub count: [usize; 3],
    pub halo: usize,
    pub data: Vec<f64>,
}

impl FieldBlock {
    pub fn new(model: ModelKind, count: [usize; 3], halo: usize) -> Self {
        let full: usize = count.iter().map(|c| c + 2 * halo).product();
        Self {
            model,
            count,
            halo,
            data: vec![0.0; full * model.nvars()],
        }
    }

    pub fn nvars(&self) -> usize {
        self.model.nvars()
    }

    /// Padded extent per axis.
    #[inline]
    pub fn full(&self) -> [usize; 3] {
        self.count.map(|c| c + 2 * self.halo)
    }

    /// Number of values per variable (padded).
    #[inline]
    pub fn var_len(&self) -> usize {
        self.full().iter().product()
    }

    #[inline]
    pub fn plane_len(&self) -> usize {
        let f = self.full();
        f[0] * f[1]
    }

    /// Linear index of padded coordinates `(i, j, k)` of variable `v`.
    #[inline]
    pub fn idx(&self, v: usize, i: usize, j: usize, k: usize) -> usize {
        let f = self.full();
        ((v * f[2] + k) * f[1] + j) * f[0] + i
    }

    /// Value at owned coordinates (0-based, excluding halos).
    pub fn owned(&self, v: usize, i: usize, j: usize, k: usize) -> f64 {
        let w = self.halo;
        self.data[self.idx(v, i + w, j + w, k + w)]
    }

    pub fn set_owned(&mut self, v: usize, i: usize, j: usize, k: usize, value: f64) {
        let w = self.halo;
        let at = self.idx(v, i + w, j + w, k + w);
        self.data[at] = value;
    }

    /// Gathers all variables of padded cell `(i, j, k)` into `out`.
    #[inline]
    pub fn cell(&self, i: usize, j: usize, k: usize, out: &mut [f64]) {
        let stride = self.var_len();
        let base = self.idx(0, i, j, k);
        for (v, o) in out.iter_mut().enumerate() {
            *o = self.data[base + v * stride];
        }
    }

    /// Owned values in `[var][k][j][i]` order.
    pub fn owned_values(&self) -> Vec<f64> {
        let [nx, ny, nz] = self.count;
        let mut out = Vec::with_capacity(nx * ny * nz * self.nvars());
        for v in 0..self.nvars() {
            for k in 0..nz {
                for j in 0..ny {
                    let start = self.idx(v, self.halo, j + self.halo, k + self.halo);
                    out.extend_from_slice(&self.data[start..start + nx]);
                }
            }
        }
        out
    }
}
