//! Slow, literal reference implementations.
//!
//! Nothing here shares code with the operators it checks beyond the tensor
//! container: loops are written out element by element, bilinear weights use
//! the tent-function form `max(0, 1 - |t - i|)`, and AP is recomputed from
//! scratch for every ranking cutoff.

use crate::asc::{AscFields, AscSpec};
use crate::conv::ConvParams;
use crate::error::{ensure_dim, Result};
use crate::metrics::{BBox, Detection, GroundTruth};
use crate::tensor::{Real, Tensor4};

/// Seven nested loops over (n, o, y, x, ci, ki, kj).
pub fn conv2d_bruteforce<T: Real>(x: &Tensor4<T>, p: &ConvParams<T>) -> Result<Tensor4<T>> {
    let s = p.spec;
    ensure_dim("conv2d_bruteforce", "c", s.c_in, x.c())?;
    let out_dims = s.output_dims(x.dims())?;
    let cin_g = s.c_in / s.groups;
    let cout_g = s.c_out / s.groups;
    let mut out = Tensor4::zeros(out_dims);
    for n in 0..out_dims.n {
        for o in 0..s.c_out {
            let g = o / cout_g;
            for oy in 0..out_dims.h {
                for ox in 0..out_dims.w {
                    let mut acc = T::zero();
                    for ci in 0..cin_g {
                        for ki in 0..s.kh {
                            for kj in 0..s.kw {
                                let iy = (oy * s.stride + ki) as isize - s.pad_h as isize;
                                let ix = (ox * s.stride + kj) as isize - s.pad_w as isize;
                                if iy < 0 || ix < 0 || iy >= x.h() as isize || ix >= x.w() as isize {
                                    continue;
                                }
                                let wi = ((o * cin_g + ci) * s.kh + ki) * s.kw + kj;
                                acc = acc + x.at(n, g * cin_g + ci, iy as usize, ix as usize) * p.weights[wi];
                            }
                        }
                    }
                    if let Some(b) = &p.bias {
                        acc = acc + b[o];
                    }
                    *out.at_mut(n, o, oy, ox) = acc;
                }
            }
        }
    }
    Ok(out)
}

/// Tent-kernel bilinear read with zero outside the map.
fn tent_sample<T: Real>(x: &Tensor4<T>, n: usize, c: usize, py: T, px: T) -> T {
    let mut v = T::zero();
    let (fy, fx) = (py.floor(), px.floor());
    for dy in 0..2 {
        for dx in 0..2 {
            let iy = fy + T::lit(dy as f64);
            let ix = fx + T::lit(dx as f64);
            let wy = (T::one() - (py - iy).abs()).max(T::zero());
            let wx = (T::one() - (px - ix).abs()).max(T::zero());
            let (iy, ix) = (iy.as_f64(), ix.as_f64());
            if iy < 0.0 || ix < 0.0 || iy >= x.h() as f64 || ix >= x.w() as f64 {
                continue;
            }
            v = v + x.at(n, c, iy as usize, ix as usize) * (wy * wx);
        }
    }
    v
}

/// Grouped deformable sum written as the textbook formula:
/// `y_g(p0) = Σ_k w_{g,k} · m_{g,k}(p0) · x_g(p0 + p_k + Δp_{g,k}(p0))`.
pub fn asc_bruteforce<T: Real>(
    x: &Tensor4<T>,
    spec: &AscSpec,
    base_weights: &[T],
    fields: &AscFields<T>,
) -> Result<Tensor4<T>> {
    ensure_dim("asc_bruteforce", "c", spec.c_in, x.c())?;
    let out_dims = spec.output_dims(x.dims())?;
    let (kh, kw) = (spec.kh, spec.kw);
    let kk = kh * kw;
    let cin_g = spec.c_in / spec.groups;
    let cout_g = spec.c_out / spec.groups;
    let mut out = Tensor4::zeros(out_dims);
    for n in 0..out_dims.n {
        for g in 0..spec.groups {
            for ol in 0..cout_g {
                let o = g * cout_g + ol;
                for oy in 0..out_dims.h {
                    for ox in 0..out_dims.w {
                        let mut acc = T::zero();
                        for ci in 0..cin_g {
                            for ki in 0..kh {
                                for kj in 0..kw {
                                    let k = ki * kw + kj;
                                    let dy = fields.offsets.at(n, 2 * (g * kk + k), oy, ox);
                                    let dx = fields.offsets.at(n, 2 * (g * kk + k) + 1, oy, ox);
                                    let m = fields.modulation.at(n, g * kk + k, oy, ox);
                                    let py = T::lit((oy * spec.stride + ki) as f64 - spec.pad_h as f64) + dy;
                                    let px = T::lit((ox * spec.stride + kj) as f64 - spec.pad_w as f64) + dx;
                                    let w = base_weights[(o * cin_g + ci) * kk + k];
                                    acc = acc + w * tent_sample(x, n, g * cin_g + ci, py, px) * m;
                                }
                            }
                        }
                        *out.at_mut(n, o, oy, ox) = acc;
                    }
                }
            }
        }
    }
    Ok(out)
}

fn iou_plain(a: &BBox, b: &BBox) -> f64 {
    let w = a.x2.min(b.x2) - a.x1.max(b.x1);
    let h = a.y2.min(b.y2) - a.y1.max(b.y1);
    if w <= 0.0 || h <= 0.0 {
        return 0.0;
    }
    let inter = w * h;
    let ua = (a.x2 - a.x1) * (a.y2 - a.y1) + (b.x2 - b.x1) * (b.y2 - b.y1) - inter;
    inter / ua
}

/// True positives among the first `k` ranked detections, matched from scratch.
fn true_positives(ranked: &[&Detection], gts: &[&GroundTruth]) -> usize {
    let mut taken = vec![false; gts.len()];
    let mut tp = 0;
    for d in ranked {
        let mut best = None;
        let mut best_iou = 0.5;
        for (gi, g) in gts.iter().enumerate() {
            if taken[gi] || g.image_id != d.image_id {
                continue;
            }
            let v = iou_plain(&d.bbox, &g.bbox);
            if v > best_iou || (v == best_iou && best.is_none()) {
                best = Some(gi);
                best_iou = v;
            }
        }
        if let Some(gi) = best {
            taken[gi] = true;
            tp += 1;
        }
    }
    tp
}

/// AP as `(1 / G) Σ_{i=1..G} max{ precision(k) : tp(k) ≥ i }` where every
/// ranking cutoff `k` is evaluated independently.
fn ap_exhaustive(dets: &[&Detection], gts: &[&GroundTruth]) -> f64 {
    if gts.is_empty() {
        return 0.0;
    }
    let mut ranked: Vec<&Detection> = dets.to_vec();
    ranked.sort_by(|a, b| b.confidence.partial_cmp(&a.confidence).expect("finite confidence"));
    let points: Vec<(usize, f64)> = (1..=ranked.len())
        .map(|k| {
            let tp = true_positives(&ranked[..k], gts);
            (tp, tp as f64 / k as f64)
        })
        .collect();
    let n_gt = gts.len();
    let mut total = 0.0;
    for level in 1..=n_gt {
        let best = points
            .iter()
            .filter(|(tp, _)| *tp >= level)
            .map(|&(_, p)| p)
            .fold(0.0, f64::max);
        total += best / n_gt as f64;
    }
    total
}

/// Returns `(mAP@50, per-class AP)`.
pub fn map50_exhaustive(dets: &[Detection], gts: &[GroundTruth], n_classes: usize) -> (f64, Vec<f64>) {
    let per: Vec<f64> = (0..n_classes)
        .map(|c| {
            let d: Vec<&Detection> = dets.iter().filter(|d| d.class_id == c).collect();
            let g: Vec<&GroundTruth> = gts.iter().filter(|g| g.class_id == c).collect();
            ap_exhaustive(&d, &g)
        })
        .collect();
    let mean = per.iter().sum::<f64>() / n_classes as f64;
    (mean, per)
}
