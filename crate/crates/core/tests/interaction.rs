use etchloop_core::interaction::{
    get_add, get_erase, make_hint, make_hint_for, path_order, GroundTruthView, Hint, HintConfig, HintPolicy,
};
use etchloop_core::morphology::{dilate, label_connectivity, skeletonize};
use etchloop_core::stats::{StrokeWidthStats, WidthMode};
use etchloop_core::synth::{synth_corpus, SynthConfig, REFERENCE_GAMMA};
use etchloop_core::{BinaryMask, Grid, Sign};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn stats() -> StrokeWidthStats {
    StrokeWidthStats::from_parts(6.19, 1.49, REFERENCE_GAMMA)
}

fn small_corpus(n: usize) -> Vec<(BinaryMask, BinaryMask)> {
    let cfg = SynthConfig { height: 128, width: 128, ..SynthConfig::default() };
    synth_corpus(&cfg, n, 5)
        .unwrap()
        .into_iter()
        .map(|m| (m.mirror.gt.unwrap(), m.mirror.pred_init))
        .collect()
}

fn check_hint(hint: &Hint, gt: &BinaryMask, pred: &BinaryMask, config: &HintConfig) {
    let dims = pred.dims();
    assert_eq!(hint.stroke.dims(), dims);
    assert_eq!(hint.stroke.single_sign().unwrap(), Some(hint.operation));
    assert!((1..=config.max_sub_len).contains(&hint.center_line.len()));
    assert!(hint.source_segment_size >= hint.center_line.len());
    let line = BinaryMask::from_pixels(dims.0, dims.1, &hint.center_line);
    let candidates = match hint.operation {
        Sign::Add => get_add(gt, pred).unwrap(),
        Sign::Erase => get_erase(gt, pred, 6.19, 1.49).unwrap(),
    };
    assert!(line.is_subset_of(&candidates), "center line outside the {:?} candidates", hint.operation);
    let footprint = hint.stroke.nonzero_mask();
    assert!(line.is_subset_of(&footprint));
    assert_eq!(footprint, dilate(&line, hint.width_used).unwrap());
}

#[test]
fn thousand_simulated_hints_are_valid() {
    let corpus = small_corpus(4);
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let configs = [
        HintConfig::default(),
        HintConfig { policy: HintPolicy::RandomOp, width_mode: WidthMode::Sampled, max_sub_len: 11 },
        HintConfig { policy: HintPolicy::LongerSegment, width_mode: WidthMode::Mean, max_sub_len: 4 },
    ];
    let mut produced = 0;
    for i in 0..1000u64 {
        let (gt, pred) = &corpus[i as usize % corpus.len()];
        // random extra clutter and holes so both operations occur
        let noisy = Grid::from_fn(128, 128, |r, c| {
            let base = pred.get(r, c);
            if rng.random_bool(0.002) { !base } else { base }
        });
        let config = configs[i as usize % configs.len()];
        if let Some(hint) = make_hint(gt, &noisy, &stats(), &config, i).unwrap() {
            check_hint(&hint, gt, &noisy, &config);
            if config.width_mode == WidthMode::Conservative {
                assert!((hint.width_used - 3.21).abs() < 1e-12);
            }
            produced += 1;
        }
    }
    assert!(produced > 950);
}

#[test]
fn hints_are_deterministic_per_seed() {
    let (gt, pred) = small_corpus(1).remove(0);
    let config = HintConfig { policy: HintPolicy::RandomOp, width_mode: WidthMode::Sampled, max_sub_len: 11 };
    let a = make_hint(&gt, &pred, &stats(), &config, 7).unwrap();
    let b = make_hint(&gt, &pred, &stats(), &config, 7).unwrap();
    assert_eq!(a, b);
    let differs = (0..20).any(|s| make_hint(&gt, &pred, &stats(), &config, s).unwrap() != a);
    assert!(differs);
}

#[test]
fn perfect_prediction_needs_no_hint() {
    let (gt, _) = small_corpus(1).remove(0);
    assert!(make_hint(&gt, &gt, &stats(), &HintConfig::default(), 0).unwrap().is_none());
    assert!(get_add(&gt, &gt).unwrap().count_ones() == 0);
}

#[test]
fn add_only_and_erase_only() {
    let gt = BinaryMask::from_pixels(40, 40, &(5..35).map(|c| (10, c)).collect::<Vec<_>>());
    let stray: Vec<(usize, usize)> = (5..30).map(|c| (30, c)).collect();
    let pred = BinaryMask::from_pixels(40, 40, &stray);
    let view = GroundTruthView::new(&gt, &stats()).unwrap();
    let cfg = HintConfig::default();
    let add = make_hint_for(&view, &pred, Sign::Add, &stats(), &cfg, 1).unwrap().unwrap();
    assert!(add.center_line.iter().all(|&(r, _)| r == 10));
    let erase = make_hint_for(&view, &pred, Sign::Erase, &stats(), &cfg, 1).unwrap().unwrap();
    assert!(erase.center_line.iter().all(|&(r, _)| r == 30));
    // a false positive inside the lenient band around the truth is tolerated
    let near = BinaryMask::from_pixels(40, 40, &(5..35).map(|c| (13, c)).collect::<Vec<_>>());
    assert!(make_hint_for(&view, &near, Sign::Erase, &stats(), &cfg, 1).unwrap().is_none());
}

#[test]
fn longer_segment_policy_picks_larger_error() {
    let gt = BinaryMask::from_pixels(40, 60, &(5..15).map(|c| (10, c)).collect::<Vec<_>>());
    let pred = BinaryMask::from_pixels(40, 60, &(5..55).map(|c| (30, c)).collect::<Vec<_>>());
    for s in 0..10 {
        let hint = make_hint(&gt, &pred, &stats(), &HintConfig::default(), s).unwrap().unwrap();
        assert_eq!(hint.operation, Sign::Erase);
    }
}

#[test]
fn rejects_bad_inputs() {
    let a = BinaryMask::empty(10, 10);
    let b = BinaryMask::empty(10, 11);
    assert!(make_hint(&a, &b, &stats(), &HintConfig::default(), 0).is_err());
    let zero = HintConfig { max_sub_len: 0, ..HintConfig::default() };
    assert!(make_hint(&a, &a, &stats(), &zero, 0).is_err());
    assert!(Hint::from_center_line(5, 5, Sign::Add, vec![], 3.0).is_err());
    assert!(Hint::from_center_line(5, 5, Sign::Add, vec![(5, 0)], 3.0).is_err());
}

#[test]
fn path_order_walks_along_the_curve() {
    let diag: Vec<(usize, usize)> = (0..12).map(|i| (20 - i, 3 + i)).collect();
    let mask = BinaryMask::from_pixels(25, 25, &diag);
    let seg = label_connectivity(&mask).into_vec().remove(0);
    let order = path_order(&seg);
    assert_eq!(order.len(), 12);
    assert!(order.windows(2).all(|w| w[0].0.abs_diff(w[1].0) <= 1 && w[0].1.abs_diff(w[1].1) <= 1));
    assert!(order[0] == diag[0] || order[0] == diag[11]);
    let skel = skeletonize(&mask);
    assert_eq!(skel, mask);
}

#[test]
fn ranked_segments_put_edges_first_then_loose_pieces() {
    let mut pixels: Vec<(usize, usize)> = (2..30).map(|c| (5, c)).collect();
    pixels.extend((2..8).map(|c| (15, c)));
    pixels.push((25, 25));
    pixels.extend([(30, 10), (31, 11)]);
    let candidates = BinaryMask::from_pixels(40, 40, &pixels);
    let ranked = etchloop_core::interaction::ranked_segments(&candidates);
    let sizes: Vec<usize> = ranked.iter().map(|s| s.len()).collect();
    // interiors of the two lines, then the 2-pixel and 1-pixel blobs
    assert_eq!(sizes, vec![26, 4, 2, 1]);
    assert!(etchloop_core::interaction::ranked_segments(&BinaryMask::empty(4, 4)).is_empty());
    let hint = etchloop_core::interaction::make_hint_on_segment(
        (40, 40),
        &ranked[3],
        Sign::Erase,
        &stats(),
        &HintConfig::default(),
        1,
    )
    .unwrap();
    assert_eq!(hint.center_line, vec![(25, 25)]);
}
