//! Single-block helpers shared by unit tests. `fill_periodic` is an
//! index-arithmetic oracle, independent of the message-based exchange.

use super::{FieldBlock, ModelKind};

/// Block whose owned cell at global index `g` holds `init(g, count)`.
pub fn sample_block(
    model: ModelKind,
    count: [usize; 3],
    init: impl Fn([usize; 3], [usize; 3]) -> Vec<f64>,
) -> FieldBlock {
    let mut b = FieldBlock::new(model, count, 3);
    for k in 0..count[2] {
        for j in 0..count[1] {
            for i in 0..count[0] {
                let u = init([i, j, k], count);
                for (v, x) in u.into_iter().enumerate() {
                    b.set_owned(v, i, j, k, x);
                }
            }
        }
    }
    b
}

/// Fills every ghost (faces, edges, corners) by periodic wrap.
pub fn fill_periodic(b: &mut FieldBlock) {
    let w = b.halo;
    let f = b.full();
    let wrap = |x: usize, n: usize| (x + n - w % n) % n + w;
    for v in 0..b.nvars() {
        for k in 0..f[2] {
            for j in 0..f[1] {
                for i in 0..f[0] {
                    let src = b.idx(
                        v,
                        wrap(i, b.count[0]),
                        wrap(j, b.count[1]),
                        wrap(k, b.count[2]),
                    );
                    let dst = b.idx(v, i, j, k);
                    b.data[dst] = b.data[src];
                }
            }
        }
    }
}
