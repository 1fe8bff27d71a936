mod common;

use common::{max_rel_err, random_kernel, random_tensor, reference_conv, rng};
use proptest::prelude::*;
use rand::Rng;
use sparsevox::conv::{dense_conv_oracle, sparse_conv_with, ConvKind, ConvOptions, DenseGrid, KernelWeights};
use sparsevox::cost::CostLedger;
use sparsevox::voxel::{Coord2, Coord3, GridCoord, SparseTensor};
use sparsevox::ExecMode;

fn run<C: GridCoord>(t: &SparseTensor<C>, k: &KernelWeights, extent: [i32; 3], exec: ExecMode) -> (SparseTensor<C>, CostLedger) {
    let s = k.stride() as i32;
    let bounds = extent.map(|e| (e + s - 1) / s);
    let mut ledger = CostLedger::new();
    ledger.begin_layer("l", sparsevox::cost::Domain::Voxel, 1);
    let out = sparse_conv_with(t, k, &mut ledger, ConvOptions { exec, bounds: Some(bounds) }).unwrap();
    (out, ledger)
}

fn check_against_reference<C: GridCoord>(seed: u64, extent: [i32; 3], c_in: usize, c_out: usize, k: usize, stride: usize, kind: ConvKind) {
    let mut r = rng(seed);
    let fill = r.random_range(0.02..0.3);
    let t = random_tensor::<C>(&mut r, extent, fill, c_in);
    let kw = random_kernel(&mut r, C::DIM, k, stride, kind, c_in, c_out);
    let (out, ledger) = run(&t, &kw, extent, ExecMode::Parallel);
    let want = reference_conv(&t, &kw, extent);
    assert_eq!(out.coords(), &want.coords[..], "seed {seed}");
    let err = max_rel_err(out.feats(), &want.feats);
    assert!(err <= 1e-5, "seed {seed}: relative error {err}");
    let e = &ledger.entries()[0];
    assert_eq!(e.pairs, want.pairs, "seed {seed}");
    assert_eq!(e.flops, 2 * (c_in * c_out) as u64 * want.pairs, "seed {seed}");
}

#[test]
fn matches_reference_3d() {
    let mut seed = 0;
    for kind in [ConvKind::Submanifold, ConvKind::Generative] {
        for k in [1, 3] {
            for (c_in, c_out) in [(1, 1), (3, 8), (8, 3)] {
                let strides: &[usize] = if kind == ConvKind::Generative { &[1, 2] } else { &[1] };
                for &s in strides {
                    for _ in 0..4 {
                        seed += 1;
                        check_against_reference::<Coord3>(seed, [10, 9, 7], c_in, c_out, k, s, kind);
                    }
                }
            }
        }
    }
}

#[test]
fn matches_reference_2d() {
    let mut seed = 1000;
    for kind in [ConvKind::Submanifold, ConvKind::Generative] {
        for k in [1, 3, 5] {
            for (c_in, c_out) in [(1, 3), (3, 3), (8, 1)] {
                let strides: &[usize] = if kind == ConvKind::Generative { &[1, 2, 3] } else { &[1] };
                for &s in strides {
                    for _ in 0..4 {
                        seed += 1;
                        check_against_reference::<Coord2>(seed, [23, 17, 1], c_in, c_out, k, s, kind);
                    }
                }
            }
        }
    }
}

#[test]
fn submanifold_agrees_with_dense_oracle_on_stored_sites() {
    let mut r = rng(77);
    let t = random_tensor::<Coord3>(&mut r, [12, 12, 12], 0.1, 3);
    let kw = random_kernel(&mut r, 3, 3, 1, ConvKind::Submanifold, 3, 4);
    let (out, _) = run(&t, &kw, [12, 12, 12], ExecMode::Sequential);
    let dense = dense_conv_oracle(&DenseGrid::from_sparse(&t, [12, 12, 12]).unwrap(), &kw).unwrap();
    for (i, c) in out.coords().iter().enumerate() {
        let want = dense.at(c.axes()).unwrap();
        for (g, w) in out.row(i).iter().zip(want) {
            assert!((*g as f64 - w).abs() <= 1e-5 * w.abs().max(1.0));
        }
    }
}

#[test]
fn generative_covers_every_nonzero_dense_site() {
    let mut r = rng(78);
    let t = random_tensor::<Coord2>(&mut r, [20, 20, 1], 0.05, 2);
    let kw = random_kernel(&mut r, 2, 3, 2, ConvKind::Generative, 2, 2);
    let (out, _) = run(&t, &kw, [20, 20, 1], ExecMode::Sequential);
    let dense = dense_conv_oracle(&DenseGrid::from_sparse(&t, [20, 20, 1]).unwrap(), &kw).unwrap();
    let stored: std::collections::HashSet<[i32; 3]> = out.coords().iter().map(|c| c.axes()).collect();
    for x in 0..10 {
        for y in 0..10 {
            let v = dense.at([x, y, 0]).unwrap();
            if v.iter().any(|v| *v != 0.0) {
                assert!(stored.contains(&[x, y, 0]), "({x},{y}) nonzero in dense output but absent");
            }
        }
    }
}

#[test]
fn parallel_and_sequential_are_bit_identical() {
    let mut r = rng(5);
    let t = random_tensor::<Coord3>(&mut r, [24, 24, 8], 0.2, 8);
    let kw = random_kernel(&mut r, 3, 3, 1, ConvKind::Submanifold, 8, 16);
    let (a, la) = run(&t, &kw, [24, 24, 8], ExecMode::Sequential);
    let (b, lb) = run(&t, &kw, [24, 24, 8], ExecMode::Parallel);
    assert_eq!(a, b);
    assert_eq!(la, lb);
}

fn small_tensor() -> impl Strategy<Value = SparseTensor<Coord2>> {
    prop::collection::btree_map((0i32..12, 0i32..12), prop::collection::vec(-4.0f32..4.0, 3), 1..40).prop_map(|cells| {
        let coords = cells.keys().map(|&(x, y)| Coord2::new(x, y)).collect();
        let feats = cells.values().flatten().copied().collect();
        SparseTensor::new(coords, feats, 3).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn linear_in_features(t in small_tensor(), a in -2.0f32..2.0, seed in 0u64..1000, gen in any::<bool>()) {
        let kind = if gen { ConvKind::Generative } else { ConvKind::Submanifold };
        let kw = KernelWeights::seeded(2, 3, 1, kind, 3, 2, seed).unwrap();
        let scaled = t.map_feats(|x| a * x);
        let (y, _) = run(&t, &kw, [12, 12, 1], ExecMode::Sequential);
        let (ys, _) = run(&scaled, &kw, [12, 12, 1], ExecMode::Sequential);
        prop_assert_eq!(y.coords(), ys.coords());
        for (u, v) in y.feats().iter().zip(ys.feats()) {
            prop_assert!((a * u - v).abs() <= 1e-4 * (1.0 + u.abs()));
        }
    }

    #[test]
    fn additive_in_features(t in small_tensor(), seed in 0u64..1000) {
        let kw = KernelWeights::seeded(2, 3, 1, ConvKind::Submanifold, 3, 2, seed).unwrap();
        let other = t.map_feats(|x| x * x - 1.0);
        let sum_feats = t.feats().iter().zip(other.feats()).map(|(a, b)| a + b).collect();
        let sum = t.with_feats(sum_feats, 3).unwrap();
        let (ya, _) = run(&t, &kw, [12, 12, 1], ExecMode::Sequential);
        let (yb, _) = run(&other, &kw, [12, 12, 1], ExecMode::Sequential);
        let (ys, _) = run(&sum, &kw, [12, 12, 1], ExecMode::Sequential);
        for ((a, b), s) in ya.feats().iter().zip(yb.feats()).zip(ys.feats()) {
            prop_assert!((a + b - s).abs() <= 1e-4 * (1.0 + a.abs() + b.abs()));
        }
    }

    #[test]
    fn generative_output_contains_input(t in small_tensor(), seed in 0u64..1000) {
        let kw = KernelWeights::seeded(2, 3, 1, ConvKind::Generative, 3, 2, seed).unwrap();
        let (y, _) = run(&t, &kw, [12, 12, 1], ExecMode::Sequential);
        for c in t.coords() {
            prop_assert!(y.coords().binary_search(c).is_ok());
        }
        prop_assert!(y.coords().windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn submanifold_preserves_coordinates(t in small_tensor(), seed in 0u64..1000) {
        let kw = KernelWeights::seeded(2, 3, 1, ConvKind::Submanifold, 3, 5, seed).unwrap();
        let (y, _) = run(&t, &kw, [12, 12, 1], ExecMode::Sequential);
        prop_assert_eq!(y.coords(), t.coords());
    }

    #[test]
    fn flops_equal_recounted_pairs(t in small_tensor(), seed in 0u64..1000, gen in any::<bool>(), stride in 1usize..3) {
        let kind = if gen { ConvKind::Generative } else { ConvKind::Submanifold };
        let stride = if gen { stride } else { 1 };
        let kw = KernelWeights::seeded(2, 3, stride, kind, 3, 4, seed).unwrap();
        let (_, ledger) = run(&t, &kw, [12, 12, 1], ExecMode::Sequential);
        let want = reference_conv(&t, &kw, [12, 12, 1]);
        let e = &ledger.entries()[0];
        prop_assert_eq!(e.pairs, want.pairs);
        prop_assert_eq!(e.flops, 2 * 3 * 4 * want.pairs);
    }
}
