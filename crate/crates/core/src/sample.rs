//! Integer spatial shifts and bilinear sampling with zero padding.

use crate::tensor::{Real, Tensor4};

/// `out[n, c, i, j] = x[n, c, i - dy, j - dx]`, zero where the source falls
/// outside the map. Pure data movement: no arithmetic on values.
pub fn shift2d<T: Real>(x: &Tensor4<T>, dy: isize, dx: isize) -> Tensor4<T> {
    let d = x.dims();
    let mut out = Tensor4::zeros(d);
    let (h, w) = (d.h as isize, d.w as isize);
    if dy.abs() >= h || dx.abs() >= w {
        return out;
    }
    // Destination rows/cols that have an in-range source.
    let (i0, i1) = (dy.max(0), (h + dy).min(h));
    let (j0, j1) = (dx.max(0), (w + dx).min(w));
    let span = (j1 - j0) as usize;
    for n in 0..d.n {
        for c in 0..d.c {
            let src = x.plane(n, c);
            let dst = out.plane_mut(n, c);
            for i in i0..i1 {
                let si = (i - dy) as usize;
                let s0 = si * d.w + (j0 - dx) as usize;
                let t0 = i as usize * d.w + j0 as usize;
                dst[t0..t0 + span].copy_from_slice(&src[s0..s0 + span]);
            }
        }
    }
    out
}

/// Four-corner stencil of a bilinear read at a fractional position.
///
/// Corners are ordered (y0, x0), (y0, x1), (y1, x0), (y1, x1) with
/// `y0 = floor(py)`, `y1 = y0 + 1` and likewise for x. A corner outside the
/// map has `index == None` and contributes zero. The position derivatives are
/// those of the cell `[y0, y1) × [x0, x1)`, so on lattice lines the
/// right/down-continuous branch is taken.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BilinearTaps<T> {
    pub value: T,
    /// Flat offsets into the tensor's data, `None` when out of range.
    pub index: [Option<usize>; 4],
    pub weight: [T; 4],
    /// d value / d py.
    pub d_py: T,
    /// d value / d px.
    pub d_px: T,
}

#[inline]
fn floor_index<T: Real>(v: T) -> Option<isize> {
    let f = v.floor();
    // Anything this far out samples only zeros.
    if !(f.as_f64().abs() < 1e15) {
        return None;
    }
    Some(f.as_f64() as isize)
}

/// Bilinear stencil of plane `(n, c)` at `(py, px)`.
pub fn bilinear_taps<T: Real>(x: &Tensor4<T>, n: usize, c: usize, py: T, px: T) -> BilinearTaps<T> {
    let zero = T::zero();
    let (Some(y0), Some(x0)) = (floor_index(py), floor_index(px)) else {
        return BilinearTaps {
            value: zero,
            index: [None; 4],
            weight: [zero; 4],
            d_py: zero,
            d_px: zero,
        };
    };
    let fy = py - T::lit(y0 as f64);
    let fx = px - T::lit(x0 as f64);
    let (gy, gx) = (T::one() - fy, T::one() - fx);
    let (h, w) = (x.h() as isize, x.w() as isize);
    let base = x.offset(n, c, 0, 0);
    let at = |yy: isize, xx: isize| -> Option<usize> {
        (yy >= 0 && yy < h && xx >= 0 && xx < w).then(|| base + (yy * w + xx) as usize)
    };
    let index = [at(y0, x0), at(y0, x0 + 1), at(y0 + 1, x0), at(y0 + 1, x0 + 1)];
    let weight = [gy * gx, gy * fx, fy * gx, fy * fx];
    let data = x.data();
    let v: [T; 4] = std::array::from_fn(|k| index[k].map_or(zero, |i| data[i]));
    let value = v[0] * weight[0] + v[1] * weight[1] + v[2] * weight[2] + v[3] * weight[3];
    BilinearTaps {
        value,
        index,
        weight,
        d_py: gx * (v[2] - v[0]) + fx * (v[3] - v[1]),
        d_px: gy * (v[1] - v[0]) + fy * (v[3] - v[2]),
    }
}

/// Bilinear read of plane `(n, c)` at fractional `(py, px)`; zero padding.
pub fn bilinear_sample<T: Real>(x: &Tensor4<T>, n: usize, c: usize, py: T, px: T) -> T {
    bilinear_taps(x, n, c, py, px).value
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;
    use proptest::prelude::*;

    fn square() -> Tensor4<f64> {
        Tensor4::from_vec([1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap()
    }

    #[test]
    fn zero_shift_is_identity() {
        let mut rng = SeededRng::new(1);
        let x = Tensor4::<f32>::random([2, 2, 4, 5], -1.0, 1.0, &mut rng);
        assert_eq!(shift2d(&x, 0, 0), x);
    }

    #[test]
    fn shift_down_by_one() {
        assert_eq!(shift2d(&square(), 1, 0).data(), &[0.0, 0.0, 1.0, 2.0]);
        assert_eq!(shift2d(&square(), 0, -1).data(), &[2.0, 0.0, 4.0, 0.0]);
        assert_eq!(shift2d(&square(), 2, 0).data(), &[0.0; 4]);
        assert_eq!(shift2d(&square(), -9, 3).data(), &[0.0; 4]);
    }

    #[test]
    fn shift_round_trip_on_interior() {
        let mut rng = SeededRng::new(8);
        let x = Tensor4::<f64>::random([1, 2, 7, 6], -1.0, 1.0, &mut rng);
        for (a, b) in [(2isize, -1isize), (-3, 2), (1, 1), (0, -4)] {
            let back = shift2d(&shift2d(&x, a, b), -a, -b);
            for c in 0..2 {
                for i in 0..7isize {
                    for j in 0..6isize {
                        let v = back.at(0, c, i as usize, j as usize);
                        // back[i] = shifted[i + a], which holds x[i] when i + a is in range.
                        let kept = (0..7).contains(&(i + a)) && (0..6).contains(&(j + b));
                        let expect = if kept { x.at(0, c, i as usize, j as usize) } else { 0.0 };
                        assert_eq!(v, expect);
                    }
                }
            }
        }
    }

    #[test]
    fn lattice_points_are_exact() {
        let mut rng = SeededRng::new(2);
        let x = Tensor4::<f64>::random([1, 1, 4, 5], -1.0, 1.0, &mut rng);
        for i in 0..4 {
            for j in 0..5 {
                assert_eq!(bilinear_sample(&x, 0, 0, i as f64, j as f64), x.at(0, 0, i, j));
            }
        }
    }

    #[test]
    fn midpoint_is_mean() {
        let x = Tensor4::from_vec([1, 1, 2, 2], vec![0.0, 2.0, 4.0, 6.0]).unwrap();
        assert_eq!(bilinear_sample(&x, 0, 0, 0.5, 0.5), 3.0);
    }

    #[test]
    fn half_pixel_above_boundary() {
        // Ramp x[i, j] = i + 2j + 1; top row value at j = 2 is 5.
        let x = Tensor4::from_fn([1, 1, 3, 4], |_, _, i, j| (i + 2 * j + 1) as f64);
        assert_eq!(bilinear_sample(&x, 0, 0, -0.5, 2.0), 2.5);
        assert_eq!(bilinear_sample(&x, 0, 0, -1.0, 2.0), 0.0);
        assert_eq!(bilinear_sample(&x, 0, 0, 10.0, 1e30), 0.0);
    }

    #[test]
    fn derivative_branch_at_lattice_is_right_continuous() {
        // Values 1 | 2 / 3 | 4 on the unit square; slope toward +y is 2 at x0.
        let t = bilinear_taps(&square(), 0, 0, 0.0, 0.0);
        assert_eq!((t.d_py, t.d_px), (2.0, 1.0));
        // At y = 1 the cell below is outside: slope toward +y is -3.
        let t = bilinear_taps(&square(), 0, 0, 1.0, 0.0);
        assert_eq!(t.d_py, -3.0);
    }

    proptest! {
        #[test]
        fn linear_between_lattice_points(i in 0usize..3, j in 0usize..4, t in 0.0f64..1.0, seed in any::<u64>()) {
            let mut rng = SeededRng::new(seed);
            let x = Tensor4::<f64>::random([1, 1, 4, 5], -1.0, 1.0, &mut rng);
            let (a, b) = (x.at(0, 0, i, j), x.at(0, 0, i + 1, j));
            let v = bilinear_sample(&x, 0, 0, i as f64 + t, j as f64);
            prop_assert!((v - (a + t * (b - a))).abs() < 1e-12);
            let (a, b) = (x.at(0, 0, i, j), x.at(0, 0, i, j + 1));
            let v = bilinear_sample(&x, 0, 0, i as f64, j as f64 + t);
            prop_assert!((v - (a + t * (b - a))).abs() < 1e-12);
        }

        #[test]
        fn shift_is_permutation_with_zero_fill(dy in -6isize..7, dx in -6isize..7, seed in any::<u64>()) {
            let mut rng = SeededRng::new(seed);
            // Strictly positive values so zero fill is recognisable.
            let x = Tensor4::<f64>::random([1, 1, 5, 5], 1.0, 2.0, &mut rng);
            let y = shift2d(&x, dy, dx);
            let mut moved: Vec<f64> = y.data().iter().copied().filter(|&v| v != 0.0).collect();
            let mut expected = Vec::new();
            for i in 0..5isize {
                for j in 0..5isize {
                    if (0..5).contains(&(i + dy)) && (0..5).contains(&(j + dx)) {
                        expected.push(x.at(0, 0, i as usize, j as usize));
                    }
                }
            }
            moved.sort_by(f64::total_cmp);
            expected.sort_by(f64::total_cmp);
            prop_assert_eq!(moved, expected);
        }
    }
}
