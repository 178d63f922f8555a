//! Exact Euclidean distance transform (lower envelope of parabolas, two passes).

use crate::grid::Grid;

/// Squared Euclidean distance from every cell to the nearest `true` cell of
/// `features`; `f64::INFINITY` everywhere when there is none.
pub fn squared_distance(features: &Grid<bool>) -> Grid<f64> {
    let (w, h) = (features.width(), features.height());
    let mut f = features.map(|&b| if b { 0.0 } else { f64::INFINITY });
    let mut buf_in = vec![0.0; w.max(h)];
    let mut buf_out = vec![0.0; w.max(h)];
    let mut v = vec![0usize; w.max(h)];
    let mut z = vec![0.0; w.max(h) + 1];
    for x in 0..w {
        for y in 0..h {
            buf_in[y] = *f.get(x, y);
        }
        transform_1d(&buf_in[..h], &mut buf_out[..h], &mut v, &mut z);
        for y in 0..h {
            f.set(x, y, buf_out[y]);
        }
    }
    for y in 0..h {
        buf_in[..w].copy_from_slice(&f.as_slice()[y * w..(y + 1) * w]);
        transform_1d(&buf_in[..w], &mut buf_out[..w], &mut v, &mut z);
        f.as_mut_slice()[y * w..(y + 1) * w].copy_from_slice(&buf_out[..w]);
    }
    f
}

fn transform_1d(f: &[f64], d: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let Some(first) = f.iter().position(|x| x.is_finite()) else {
        d.fill(f64::INFINITY);
        return;
    };
    let mut k = 0;
    v[0] = first;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in first + 1..n {
        if !f[q].is_finite() {
            continue;
        }
        let qf = q as f64;
        // z[0] is -inf, so the pop loop always stops at k = 0.
        loop {
            let p = v[k];
            let pf = p as f64;
            let s = ((f[q] + qf * qf) - (f[p] + pf * pf)) / (2.0 * qf - 2.0 * pf);
            if s <= z[k] {
                k -= 1;
                continue;
            }
            k += 1;
            v[k] = q;
            z[k] = s;
            z[k + 1] = f64::INFINITY;
            break;
        }
    }
    let mut k = 0;
    for (q, out) in d.iter_mut().enumerate() {
        let qf = q as f64;
        while z[k + 1] < qf {
            k += 1;
        }
        let p = v[k] as f64;
        *out = (qf - p) * (qf - p) + f[v[k]];
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute(features: &Grid<bool>) -> Grid<f64> {
        Grid::from_fn(features.width(), features.height(), |x, y| {
            features
                .iter_xy()
                .filter(|(_, _, &b)| b)
                .map(|(fx, fy, _)| {
                    let (dx, dy) = (fx as f64 - x as f64, fy as f64 - y as f64);
                    dx * dx + dy * dy
                })
                .fold(f64::INFINITY, f64::min)
        })
    }

    #[test]
    fn single_point() {
        let mut g = Grid::new(5, 4, false);
        g.set(1, 2, true);
        let d = squared_distance(&g);
        assert_eq!(*d.get(4, 0), 9.0 + 4.0);
        assert_eq!(*d.get(1, 2), 0.0);
    }

    #[test]
    fn no_features_is_infinite() {
        let d = squared_distance(&Grid::new(3, 3, false));
        assert!(d.as_slice().iter().all(|v| v.is_infinite()));
    }

    proptest! {
        #[test]
        fn matches_brute_force(w in 1usize..14, h in 1usize..14, bits in proptest::collection::vec(0u8..10, 196)) {
            let g = Grid::from_fn(w, h, |x, y| bits[y * 14 + x] == 0);
            prop_assert_eq!(squared_distance(&g), brute(&g));
        }
    }
}
