//! Independent reference implementations shared by the integration tests.
//! Nothing here calls the crate's rulebook, index or GEMM code.

#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sparsevox::conv::{ConvKind, KernelWeights};
use sparsevox::voxel::{BevExtent, Coord2, Coord3, GridCoord, SparseBevTensor, SparseTensor};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random sparse tensor on `0..extent` with roughly `fill` of the cells stored.
pub fn random_tensor<C: GridCoord>(r: &mut ChaCha8Rng, extent: [i32; 3], fill: f64, channels: usize) -> SparseTensor<C> {
    let mut cells = BTreeMap::new();
    let dims = C::DIM;
    let total: i64 = extent[..dims].iter().map(|&e| e as i64).product();
    let n = ((total as f64 * fill).ceil() as usize).max(1);
    for _ in 0..n {
        let mut a = [0i32; 3];
        for (i, v) in a.iter_mut().enumerate().take(dims) {
            *v = r.random_range(0..extent[i]);
        }
        cells.entry(C::from_axes(a)).or_insert_with(|| (0..channels).map(|_| r.random_range(-1.0f32..1.0)).collect::<Vec<_>>());
    }
    let coords: Vec<C> = cells.keys().copied().collect();
    let feats: Vec<f32> = cells.values().flatten().copied().collect();
    SparseTensor::new(coords, feats, channels).unwrap()
}

pub fn random_bev(r: &mut ChaCha8Rng, extent: BevExtent, fill: f64, channels: usize) -> SparseBevTensor {
    let t = random_tensor::<Coord2>(r, [extent.w, extent.h, 1], fill, channels);
    SparseBevTensor::new(extent, t).unwrap()
}

pub fn random_kernel(r: &mut ChaCha8Rng, dims: usize, k: usize, stride: usize, kind: ConvKind, c_in: usize, c_out: usize) -> KernelWeights {
    let n = k.pow(dims as u32) * c_in * c_out;
    let w = (0..n).map(|_| r.random_range(-1.0f32..1.0)).collect();
    KernelWeights::new(dims, k, stride, kind, c_in, c_out, w).unwrap()
}

/// Result of the brute-force convolution.
pub struct Reference<C> {
    pub coords: Vec<C>,
    pub feats: Vec<f64>,
    /// Number of (output, offset) combinations whose input site is occupied.
    pub pairs: u64,
}

/// Visits every output site of the bounded output grid and sums
/// `W_delta * in[stride * q + delta]` over occupied inputs. Submanifold keeps
/// the input coordinates; generative keeps every site with at least one
/// occupied input.
pub fn reference_conv<C: GridCoord>(t: &SparseTensor<C>, k: &KernelWeights, extent: [i32; 3]) -> Reference<C> {
    let lookup: HashMap<[i32; 3], usize> = t.coords().iter().enumerate().map(|(i, c)| (c.axes(), i)).collect();
    let s = k.stride() as i32;
    let dims = C::DIM;
    let mut out_ext = [1i32; 3];
    for a in 0..dims {
        out_ext[a] = (extent[a] + s - 1) / s;
    }
    let r = (k.kernel_size() / 2) as i32;
    let mut offsets = Vec::new();
    for dx in -r..=r {
        for dy in -r..=r {
            if dims == 2 {
                offsets.push([dx, dy, 0]);
            } else {
                for dz in -r..=r {
                    offsets.push([dx, dy, dz]);
                }
            }
        }
    }
    let (c_in, c_out) = (k.in_channels(), k.out_channels());
    let mut coords = Vec::new();
    let mut feats = Vec::new();
    let mut pairs = 0u64;
    for x in 0..out_ext[0] {
        for y in 0..out_ext[1] {
            for z in 0..out_ext[2] {
                let q = [x, y, z];
                if k.kind() == ConvKind::Submanifold && !lookup.contains_key(&q) {
                    continue;
                }
                let mut acc = vec![0.0f64; c_out];
                let mut hits = 0u64;
                for (oi, d) in offsets.iter().enumerate() {
                    let mut p = q;
                    for a in 0..dims {
                        p[a] = s * q[a] + d[a];
                    }
                    let Some(&row) = lookup.get(&p) else { continue };
                    hits += 1;
                    let xin = t.row(row);
                    for (ci, x) in xin.iter().enumerate().take(c_in) {
                        for (co, v) in acc.iter_mut().enumerate() {
                            *v += *x as f64 * k.weight(oi, ci, co) as f64;
                        }
                    }
                }
                if hits > 0 || k.kind() == ConvKind::Submanifold {
                    coords.push(C::from_axes(q));
                    feats.extend(acc);
                    pairs += hits;
                }
            }
        }
    }
    Reference { coords, feats, pairs }
}

/// Largest elementwise error relative to the reference's largest magnitude.
pub fn max_rel_err(got: &[f32], want: &[f64]) -> f64 {
    assert_eq!(got.len(), want.len());
    let scale = want.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    got.iter().zip(want).map(|(g, w)| (*g as f64 - w).abs() / scale).fold(0.0, f64::max)
}

pub fn coord3(x: i32, y: i32, z: i32) -> Coord3 {
    Coord3::new(x, y, z)
}

/// Output coordinates and pair count of a convolution, from coordinates alone.
pub fn coord_conv(coords: &std::collections::BTreeSet<[i32; 3]>, dims: usize, k: usize, stride: usize, kind: ConvKind, bounds: [i32; 3]) -> (std::collections::BTreeSet<[i32; 3]>, u64) {
    let r = (k / 2) as i32;
    let s = stride as i32;
    let z = if dims == 3 { r } else { 0 };
    let mut out = std::collections::BTreeSet::new();
    let mut pairs = 0u64;
    for p in coords {
        for dx in -r..=r {
            for dy in -r..=r {
                for dz in -z..=z {
                    let d = [dx, dy, dz];
                    let mut q = [0i32; 3];
                    let mut ok = true;
                    for a in 0..dims {
                        let v = p[a] - d[a];
                        ok &= v.rem_euclid(s) == 0;
                        q[a] = v.div_euclid(s);
                        ok &= q[a] >= 0 && q[a] < bounds[a];
                    }
                    if !ok {
                        continue;
                    }
                    if kind == ConvKind::Submanifold && !coords.contains(&q) {
                        continue;
                    }
                    pairs += 1;
                    out.insert(q);
                }
            }
        }
    }
    if kind == ConvKind::Submanifold {
        out = coords.clone();
    }
    (out, pairs)
}

/// Replays a pipeline run on coordinates only: voxelize, apply each filter
/// site's recorded mask, then let every layer keep (submanifold) or grow
/// (generative) the coordinate set. Returns `(layer, pairs)` for every conv.
pub fn recount_pipeline_pairs(
    cfg: &sparsevox::engine::PipelineConfig,
    out: &sparsevox::engine::RunOutput,
    points: &[sparsevox::voxel::Point],
) -> Vec<(String, u64)> {
    use sparsevox::engine::NormChoice;
    let t = sparsevox::voxel::voxelize(points, &cfg.grid, cfg.reduce).unwrap();
    let mut coords: std::collections::BTreeSet<[i32; 3]> = t.coords().iter().map(|c| c.axes()).collect();
    let mut ext = cfg.grid.extent;
    let mut pairs = Vec::new();
    let site_mask = |name: &str| out.sites.iter().find(|s| s.layer == name).map(|s| &s.mask);
    for spec in &cfg.layers_3d {
        if let Some(mask) = site_mask(&spec.name) {
            coords.retain(|c| mask.keeps(Coord2::new(c[0], c[1])));
        }
        let s = spec.stride as i32;
        let bounds = ext.map(|e| (e + s - 1) / s);
        let (next, p) = coord_conv(&coords, 3, spec.kernel_size, spec.stride, spec.conv_kind, bounds);
        pairs.push((spec.name.clone(), p));
        coords = next;
        ext = bounds;
    }
    let mut bev: std::collections::BTreeSet<[i32; 3]> = coords.iter().map(|c| [c[0], c[1], 0]).collect();
    let mut ext2 = [ext[0], ext[1], 1];
    for spec in &cfg.layers_2d {
        if let Some(mask) = site_mask(&spec.name) {
            bev.retain(|c| mask.keeps(Coord2::new(c[0], c[1])));
        }
        if spec.norm == NormChoice::Normal {
            bev = (0..ext2[0]).flat_map(|u| (0..ext2[1]).map(move |v| [u, v, 0])).collect();
        }
        let s = spec.stride as i32;
        let bounds = [(ext2[0] + s - 1) / s, (ext2[1] + s - 1) / s, 1];
        let (next, p) = coord_conv(&bev, 2, spec.kernel_size, spec.stride, spec.conv_kind, bounds);
        pairs.push((spec.name.clone(), p));
        bev = next;
        ext2 = bounds;
    }
    pairs
}
