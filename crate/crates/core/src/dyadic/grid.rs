//! Uniform hash grid for nearest-center queries among many points.

use std::collections::HashMap;
use std::hash::{BuildHasherDefault, Hasher};

use crate::geometry::dist_sq;
use crate::quadrature::mix64;

const MAX_DIM: usize = 5;
type Key = [i32; MAX_DIM];

/// Cheap hasher for small integer keys.
#[derive(Default)]
struct KeyHasher(u64);

impl Hasher for KeyHasher {
    fn finish(&self) -> u64 {
        mix64(self.0)
    }

    fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 = (self.0.rotate_left(8)) ^ u64::from(b);
        }
    }

    fn write_i32(&mut self, i: i32) {
        self.0 = self.0.rotate_left(13).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (i as u32 as u64);
    }

    fn write_usize(&mut self, i: usize) {
        self.0 ^= i as u64;
    }
}

#[derive(Clone, Debug)]
pub(crate) struct Grid {
    cell: f64,
    dim: usize,
    cells: HashMap<Key, Vec<u32>, BuildHasherDefault<KeyHasher>>,
    lo: Key,
    hi: Key,
}

impl Grid {
    pub(crate) fn new(dim: usize, cell: f64) -> Self {
        assert!(dim <= MAX_DIM);
        Self {
            cell,
            dim,
            cells: HashMap::default(),
            lo: [i32::MAX; MAX_DIM],
            hi: [i32::MIN; MAX_DIM],
        }
    }

    fn key(&self, x: &[f64]) -> Key {
        let mut k = [0; MAX_DIM];
        for (d, &c) in x.iter().enumerate() {
            k[d] = (c / self.cell).floor() as i32;
        }
        k
    }

    /// Inserts the item `id` located at `x`.
    pub(crate) fn insert(&mut self, id: u32, x: &[f64]) {
        let k = self.key(x);
        for d in 0..self.dim {
            self.lo[d] = self.lo[d].min(k[d]);
            self.hi[d] = self.hi[d].max(k[d]);
        }
        self.cells.entry(k).or_default().push(id);
    }

    /// Calls `visit` on every item in cells at Chebyshev offset exactly `ring`.
    fn visit_ring(&self, base: &Key, ring: i32, visit: &mut impl FnMut(u32)) {
        let side = (2 * ring + 1) as usize;
        let total = side.pow(self.dim as u32);
        let mut off = [0i32; MAX_DIM];
        for code in 0..total {
            let mut c = code;
            let mut on_shell = false;
            for o in off.iter_mut().take(self.dim) {
                *o = (c % side) as i32 - ring;
                c /= side;
                on_shell |= o.abs() == ring;
            }
            if !on_shell {
                continue;
            }
            let mut k = *base;
            for d in 0..self.dim {
                k[d] += off[d];
            }
            if let Some(ids) = self.cells.get(&k) {
                ids.iter().for_each(|&id| visit(id));
            }
        }
    }

    /// Whether some item lies at distance `< radius` from `x`.
    pub(crate) fn any_within<'a>(&self, x: &[f64], radius: f64, points: impl Fn(u32) -> &'a [f64]) -> bool {
        let base = self.key(x);
        let rings = (radius / self.cell).ceil() as i32;
        let r2 = radius * radius;
        for ring in 0..=rings {
            let mut hit = false;
            self.visit_ring(&base, ring, &mut |id| hit |= dist_sq(points(id), x) < r2);
            if hit {
                return true;
            }
        }
        false
    }

    /// Calls `visit` on every item whose cell could hold a point within `radius` of `x`.
    pub(crate) fn for_each_near(&self, x: &[f64], radius: f64, mut visit: impl FnMut(u32)) {
        let base = self.key(x);
        let rings = (radius / self.cell).ceil() as i32;
        for ring in 0..=rings {
            self.visit_ring(&base, ring, &mut visit);
        }
    }

    /// Nearest item to `x`, ties broken by the smallest id.
    pub(crate) fn nearest<'a>(&self, x: &[f64], points: impl Fn(u32) -> &'a [f64]) -> Option<(u32, f64)> {
        if self.cells.is_empty() {
            return None;
        }
        let base = self.key(x);
        let mut max_ring = 0;
        for d in 0..self.dim {
            max_ring = max_ring
                .max((base[d] - self.lo[d]).abs())
                .max((self.hi[d] - base[d]).abs());
        }
        let mut best: Option<(u32, f64)> = None;
        for ring in 0..=max_ring {
            self.visit_ring(&base, ring, &mut |id| {
                let d2 = dist_sq(points(id), x);
                match best {
                    Some((bid, bd)) if d2 > bd || (d2 == bd && id > bid) => {}
                    _ => best = Some((id, d2)),
                }
            });
            if let Some((_, bd)) = best {
                let reach = ring as f64 * self.cell;
                if bd < reach * reach {
                    break;
                }
            }
        }
        best
    }
}
