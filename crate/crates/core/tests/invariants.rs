use proptest::prelude::*;
use seqembed::datagen::{concat_labeled, gen_multiclass_corpus, make_pair, one_hot_augment, SequenceBatch, WindowMode};
use seqembed::embedding::{mode_count, pod, project};
use seqembed::numcore::svd;
use seqembed::segment::{label_frames, scan_basis, scan_windows, window_starts, ScanConfig};
use seqembed::seqmodel::{SeqModelConfig, SeqModelParams};
use seqembed::Matrix;

fn matrix(max_rows: usize, max_cols: usize) -> impl Strategy<Value = Matrix> {
    (1..=max_rows, 1..=max_cols).prop_flat_map(|(r, c)| {
        prop::collection::vec(-2.0f64..2.0, r * c).prop_map(move |v| Matrix::from_vec(r, c, v).unwrap())
    })
}

fn frobenius(m: &Matrix) -> f64 {
    m.as_slice().iter().map(|x| x * x).sum::<f64>()
}

proptest! {
    #[test]
    fn svd_values_sorted_and_reconstruct(a in matrix(12, 12)) {
        let s = svd(&a).unwrap();
        prop_assert!(s.sigma.iter().all(|&x| x >= 0.0));
        prop_assert!(s.sigma.windows(2).all(|w| w[0] >= w[1]));
        prop_assert!(s.reconstruct().max_abs_diff(&a) < 1e-10);
        let energy: f64 = s.sigma.iter().map(|x| x * x).sum();
        prop_assert!((energy - frobenius(&a)).abs() <= 1e-9 * (1.0 + energy));
    }

    #[test]
    fn mode_count_is_monotone(a in matrix(10, 8), p in 0.01f64..1.0, q in 0.01f64..1.0) {
        let s = svd(&a).unwrap();
        prop_assume!(s.sigma.iter().any(|&x| x > 0.0));
        let (lo, hi) = if p <= q { (p, q) } else { (q, p) };
        let (a, b) = (mode_count(&s.sigma, lo).unwrap(), mode_count(&s.sigma, hi).unwrap());
        prop_assert!(a <= b);
        prop_assert!(b <= mode_count(&s.sigma, 1.0).unwrap());
    }

    #[test]
    fn projection_prefixes_agree(a in matrix(10, 6)) {
        prop_assume!(a.rows() >= 2);
        let basis = pod(&a).unwrap();
        let r = basis.rank_bound();
        let full = project(&a, &basis, r).unwrap();
        for n in 1..=r {
            let part = project(&a, &basis, n).unwrap();
            for i in 0..a.rows() {
                prop_assert_eq!(part.row(i), &full.row(i)[..n]);
            }
        }
        // centred data projects onto columns with zero mean
        for k in 0..r {
            let mean = (0..a.rows()).map(|i| full[(i, k)]).sum::<f64>() / a.rows() as f64;
            prop_assert!(mean.abs() < 1e-9);
        }
    }

    #[test]
    fn one_hot_appends_indicator(labels in prop::collection::vec(0usize..4, 1..6), rows in 1usize..8) {
        let seqs = labels
            .iter()
            .map(|&l| Matrix::filled(rows, 2, l as f64))
            .collect();
        let batch = SequenceBatch::new(seqs, Some(labels.clone())).unwrap();
        let aug = one_hot_augment(&batch, 4).unwrap();
        for (s, &l) in aug.sequences.iter().zip(&labels) {
            prop_assert_eq!(s.cols(), 6);
            for t in 0..rows {
                let row = s.row(t);
                prop_assert_eq!(&row[..2], &[l as f64, l as f64]);
                prop_assert_eq!(row[2..].iter().sum::<f64>(), 1.0);
                prop_assert_eq!(row[2 + l], 1.0);
            }
        }
    }

    #[test]
    fn continuation_pair_follows_encoder(te in 1usize..10, td in 1usize..10, extra in 0usize..10, offset in 0usize..5) {
        let rows = offset + te + td + extra;
        let seq = Matrix::from_vec(rows, 1, (0..rows).map(|i| i as f64).collect()).unwrap();
        let (x, y) = make_pair(&seq, te, td, offset, WindowMode::Continuation).unwrap();
        prop_assert_eq!(x[(0, 0)], offset as f64);
        prop_assert_eq!(y[(0, 0)], (offset + te) as f64);
        prop_assert_eq!(y.rows(), td);
        prop_assert!(make_pair(&seq, te, td, rows - te - td + 1, WindowMode::Continuation).is_err());
    }

    #[test]
    fn concatenation_truth_follows_order(order in Just(vec![0usize, 1, 2]).prop_shuffle(), steps in 20usize..60) {
        let corpus = gen_multiclass_corpus(3, steps, 0).unwrap();
        let (seq, truth) = concat_labeled(&corpus, &order).unwrap();
        prop_assert_eq!(seq.rows(), 3 * steps);
        prop_assert_eq!(truth.len(), seq.rows());
        for (i, &c) in order.iter().enumerate() {
            prop_assert!(truth[i * steps..(i + 1) * steps].iter().all(|&t| t == corpus.label_of(c)));
            prop_assert_eq!(seq.row(i * steps), corpus.sequences[c].row(0));
        }
    }

    #[test]
    fn smaller_stride_never_gives_fewer_windows(frames in 1usize..300, te in 1usize..40, td in 1usize..40, s in 1usize..30) {
        let mut fine = ScanConfig::new(te, td, 2);
        fine.stride = s;
        let mut coarse = fine.clone();
        coarse.stride = s + 1;
        let (a, b) = (window_starts(frames, &fine), window_starts(frames, &coarse));
        prop_assert!(a.len() >= b.len());
        prop_assert!(a.iter().all(|&w| w + te + td <= frames));
        prop_assert!(a.windows(2).all(|p| p[1] - p[0] == s));
    }
}

fn tiny_model(seed: u64) -> SeqModelParams {
    let mut c = SeqModelConfig::new(2, 6, 8, 8);
    c.seed = seed;
    SeqModelParams::init(&c).unwrap()
}

#[test]
fn window_features_depend_only_on_their_rows() {
    let corpus = gen_multiclass_corpus(2, 60, 0).unwrap();
    let (seq, _) = concat_labeled(&corpus, &[0, 1]).unwrap();
    let doubled = Matrix::vstack(&[&seq, &seq]).unwrap();
    let params = tiny_model(2);
    let cfg = ScanConfig::new(8, 8, 2);
    let a = scan_windows(&seq, &params, &cfg).unwrap();
    let b = scan_windows(&doubled, &params, &cfg).unwrap();
    for (wa, wb) in a.windows.iter().zip(&b.windows) {
        assert_eq!(wa.start, wb.start);
        assert_eq!(wa.features, wb.features);
    }
}

#[test]
fn labeling_is_deterministic() {
    let corpus = gen_multiclass_corpus(2, 60, 0).unwrap();
    let (seq, _) = concat_labeled(&corpus, &[0, 1]).unwrap();
    let params = tiny_model(3);
    let cfg = ScanConfig::new(8, 8, 2);
    let scan = scan_windows(&seq, &params, &cfg).unwrap();
    let basis = scan_basis(&scan).unwrap();
    let r = label_frames(&scan, &cfg, &basis, basis.rank_bound()).unwrap();
    let again = label_frames(&scan, &cfg, &basis, basis.rank_bound()).unwrap();
    assert_eq!(r, again);
    assert_eq!(r.frame_labels.len(), seq.rows());
    assert!(r.window_labels.iter().all(|&l| l < 2));
}

#[test]
fn repeated_segment_gets_one_label_pattern() {
    // A sequence made of the same pattern twice: every pair of windows with
    // equal phase sees identical input, so they must share a label.
    let circle = gen_multiclass_corpus(2, 50, 0).unwrap().sequences[0].clone();
    let twice = Matrix::vstack(&[&circle, &circle]).unwrap();
    let params = tiny_model(4);
    let mut cfg = ScanConfig::new(8, 8, 2);
    cfg.stride = 5;
    let scan = scan_windows(&twice, &params, &cfg).unwrap();
    let basis = scan_basis(&scan).unwrap();
    let r = label_frames(&scan, &cfg, &basis, basis.rank_bound()).unwrap();
    let mut pairs = 0;
    for (i, wi) in scan.windows.iter().enumerate() {
        if let Some(j) = scan.windows.iter().position(|w| w.start == wi.start + 50) {
            assert_eq!(wi.features, scan.windows[j].features);
            assert_eq!(r.window_labels[i], r.window_labels[j]);
            pairs += 1;
        }
    }
    assert!(pairs > 0);
}
