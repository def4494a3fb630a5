use proptest::prelude::*;

use slicedet::detector::synthetic_detect;
use slicedet::geometry::{box_area, giou, iou, BoundingBox, Detection, GroundTruthBox};
use slicedet::losses::*;
use slicedet::metrics::{average_precision, match_detections};
use slicedet::nms::{greedy_nms, merge_tile_detections, NmsConfig};
use slicedet::numerics::{eca_kernel_size, resize_to, EcaConfig, Tensor3};
use slicedet::scene::{generate_scene, SceneParams};
use slicedet::slicing::{compute_slice_plan, extract_tile, inverse_remap_box, remap_box, TileSpec};

fn arb_box() -> impl Strategy<Value = BoundingBox> {
    (0.0..200.0f64, 0.0..200.0f64, 0.0..80.0f64, 0.0..80.0f64)
        .prop_map(|(x, y, w, h)| BoundingBox::new(x, y, x + w, y + h))
}

fn int_box() -> impl Strategy<Value = BoundingBox> {
    (0..200i32, 0..200i32, 1..80i32, 1..80i32).prop_map(|(x, y, w, h)| {
        BoundingBox::new(x as f64, y as f64, (x + w) as f64, (y + h) as f64)
    })
}

fn arb_dets(max: usize) -> impl Strategy<Value = Vec<Detection>> {
    prop::collection::vec(
        (int_box(), 0..3u32, 1..100u32)
            .prop_map(|(b, c, s)| Detection::new(b, c, s as f64 / 100.0)),
        0..max,
    )
}

proptest! {
    #[test]
    fn iou_symmetric_and_bounded(a in arb_box(), b in arb_box()) {
        let v = iou(&a, &b);
        prop_assert_eq!(v, iou(&b, &a));
        prop_assert!((0.0..=1.0).contains(&v));
        prop_assert!(giou(&a, &b) <= v);
    }

    #[test]
    fn giou_equals_iou_when_hull_is_union(a in int_box(), dx in 0..20i32) {
        // b shares a's vertical extent, so the hull has no dead space when they touch
        let b = a.translate(dx as f64 * a.width() / 20.0, 0.0);
        let union = box_area(&a) + box_area(&b) - a.intersection(&b).map_or(0.0, |i| i.area());
        prop_assume!((box_area(&a.hull(&b)) - union).abs() < 1e-9);
        prop_assert!((giou(&a, &b) - iou(&a, &b)).abs() < 1e-12);
    }

    #[test]
    fn iou_translation_invariant(a in int_box(), b in int_box(), tx in -500..500i32, ty in -500..500i32) {
        let (tx, ty) = (tx as f64, ty as f64);
        prop_assert_eq!(iou(&a.translate(tx, ty), &b.translate(tx, ty)), iou(&a, &b));
    }

    #[test]
    fn iou_scale_invariant(a in arb_box(), b in arb_box(), s in 0.01..100.0f64) {
        prop_assert!((iou(&a.scale(s, s), &b.scale(s, s)) - iou(&a, &b)).abs() <= 1e-12);
    }

    #[test]
    fn slice_plan_deterministic(w in 1..3000usize, h in 1..3000usize, t in 8..700usize, o in 0.0..0.9f64) {
        let p = compute_slice_plan(w, h, t, o).unwrap();
        let q = compute_slice_plan(w, h, t, o).unwrap();
        prop_assert_eq!(serde_json::to_string(&p).unwrap(), serde_json::to_string(&q).unwrap());
        let stride = p.stride;
        for origins in [p.x_origins(), p.y_origins()] {
            for pair in origins.windows(2) {
                prop_assert!(pair[1] - pair[0] <= stride);
            }
        }
    }

    #[test]
    fn remap_roundtrip(ox in 0..4000usize, oy in 0..4000usize, fx in 0.0..1.0f64, fy in 0.0..1.0f64, fw in 0.0..1.0f64, fh in 0.0..1.0f64) {
        let tile = TileSpec { row: 0, col: 0, origin_x: ox, origin_y: oy, width: 640, height: 640 };
        let x1 = ox as f64 + fx * 600.0;
        let y1 = oy as f64 + fy * 600.0;
        let b = BoundingBox::new(x1, y1, x1 + fw * 40.0, y1 + fh * 40.0);
        prop_assert_eq!(remap_box(&inverse_remap_box(&b, &tile), &tile).unwrap(), b);
    }

    #[test]
    fn nms_idempotent_and_separated(dets in arb_dets(30), thr in 0.1..0.9f64) {
        let cfg = NmsConfig { iou_threshold: thr, ..NmsConfig::default() };
        let once = greedy_nms(&dets, &cfg);
        prop_assert_eq!(greedy_nms(&once, &cfg), once.clone());
        for (i, a) in once.iter().enumerate() {
            for b in &once[i + 1..] {
                prop_assert!(a.class_id != b.class_id || iou(&a.bbox, &b.bbox) <= thr);
            }
        }
    }

    #[test]
    fn nms_score_filter_monotone(dets in arb_dets(30), lo in 0.0..0.5f64, bump in 0.0..0.5f64) {
        let loose = NmsConfig { score_threshold: lo, ..NmsConfig::default() };
        let strict = NmsConfig { score_threshold: lo + bump, ..NmsConfig::default() };
        let kept = greedy_nms(&dets, &loose);
        for d in greedy_nms(&dets, &strict) {
            prop_assert!(kept.contains(&d));
        }
    }

    #[test]
    fn merge_permutation_invariant(dets in arb_dets(40), seed in any::<u64>()) {
        let plan = compute_slice_plan(600, 500, 128, 0.25).unwrap();
        let mut per_tile: Vec<(TileSpec, Vec<Detection>)> =
            plan.tiles.iter().map(|t| (*t, Vec::new())).collect();
        for (i, d) in dets.iter().enumerate() {
            let slot = (i * 7 + seed as usize % 13) % per_tile.len();
            let b = BoundingBox::new(d.bbox.x1 % 100.0, d.bbox.y1 % 100.0, d.bbox.x1 % 100.0 + 20.0, d.bbox.y1 % 100.0 + 20.0);
            per_tile[slot].1.push(Detection::new(b, d.class_id, d.score));
        }
        let cfg = NmsConfig::default();
        let forward = merge_tile_detections(&per_tile, &plan, &cfg).unwrap();
        let n = per_tile.len();
        per_tile.reverse();
        per_tile.rotate_left(seed as usize % n);
        prop_assert_eq!(merge_tile_detections(&per_tile, &plan, &cfg).unwrap(), forward);
    }

    #[test]
    fn losses_non_negative(p in 0.0..=1.0f64, q in 0.0..=1.0f64, a in 0.01..1.0f64, g in 0.0..5.0f64) {
        let cfg = FocalConfig::new(a, g).unwrap();
        for y in [Label::Positive, Label::Negative] {
            prop_assert!(bce_loss(p, y) >= 0.0);
            prop_assert!(focal_loss(p, y, &cfg) >= 0.0);
        }
        prop_assert!(varifocal_loss(&VarifocalSample::new(p, q).unwrap(), &cfg) >= 0.0);
    }

    #[test]
    fn positive_losses_decrease(p in 0.001..0.998f64, dp in 0.0005..0.001f64, a in 0.01..1.0f64, g in 0.0..5.0f64) {
        let cfg = FocalConfig::new(a, g).unwrap();
        let (lo, hi) = (p, p + dp);
        let y = Label::Positive;
        prop_assert!(bce_loss(hi, y) < bce_loss(lo, y));
        prop_assert!(focal_loss(hi, y, &cfg) < focal_loss(lo, y, &cfg));
        let v = |x| varifocal_loss(&VarifocalSample::new(x, 1.0).unwrap(), &cfg);
        prop_assert!(v(hi) < v(lo));
        prop_assert_eq!(v(lo), bce_loss(lo, y));
        if g > 0.0 {
            let ratio = |x| focal_loss(x, y, &cfg) / bce_loss(x, y);
            prop_assert!(ratio(hi) < ratio(lo));
        }
    }

    #[test]
    fn soft_target_loss_decreases_below_target(q in 0.05..1.0f64, f in 0.0..0.98f64, a in 0.01..1.0f64, g in 0.0..5.0f64) {
        // with a soft target q < 1 the loss is minimised at y_hat = q
        let cfg = FocalConfig::new(a, g).unwrap();
        let lo = 0.001 + f * (q - 0.002);
        let hi = lo + 0.001;
        prop_assume!(hi < q);
        let v = |x| varifocal_loss(&VarifocalSample::new(x, q).unwrap(), &cfg);
        prop_assert!(v(hi) < v(lo));
    }

    #[test]
    fn resize_up_then_down_is_identity(c in 1..4usize, h in 1..7usize, w in 1..7usize, seed in any::<u32>()) {
        let x = Tensor3::from_fn(c, h, w, |i, j, k| ((seed as usize + 31 * i + 7 * j + k) % 97) as f64 - 48.0).unwrap();
        let back = resize_to(&resize_to(&x, 2 * h, 2 * w).unwrap(), h, w).unwrap();
        prop_assert_eq!(back, x);
    }

    #[test]
    fn eca_kernel_odd_and_monotone(c in 1..100_000usize, gamma in 0.5..4.0f64, b in 0.0..3.0f64) {
        let cfg = EcaConfig { gamma, b };
        let k = eca_kernel_size(c, &cfg).unwrap();
        prop_assert!(k >= 3 && k % 2 == 1);
        prop_assert!(eca_kernel_size(c + 1 + c / 3, &cfg).unwrap() >= k);
    }

    #[test]
    fn ap_rescale_invariant_and_duplicate_fp(dets in arb_dets(8), gts in prop::collection::vec(int_box(), 1..5), thr in 0.1..0.9f64) {
        let dets: Vec<Detection> = dets.into_iter().map(|d| Detection { class_id: 0, ..d }).collect();
        let gts: Vec<GroundTruthBox> = gts.into_iter().map(|b| GroundTruthBox::new(b, 0)).collect();
        let ap = |ds: &[Detection]| average_precision(&match_detections(ds, &gts, thr).flags(), gts.len()).value;
        let base = ap(&dets);
        prop_assert!((0.0..=1.0).contains(&base));
        let squashed: Vec<Detection> = dets.iter().map(|d| Detection { score: d.score * d.score * 0.5, ..*d }).collect();
        prop_assert_eq!(ap(&squashed), base);
        if let Some(last) = dets.iter().min_by(|a, b| a.score.total_cmp(&b.score)) {
            let mut more = dets.clone();
            let far = BoundingBox::new(1000.0, 1000.0, 1001.0, 1001.0);
            more.push(Detection::new(far, 0, last.score / 2.0));
            prop_assert!(ap(&more) <= base);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn synthetic_detector_inverts_rendering(seed in any::<u64>(), n in 0..20usize) {
        let params = SceneParams { tile_size: 256, ..SceneParams::new(700, 500, n) };
        let scene = generate_scene(seed, &params).unwrap();
        let (img, gts) = scene.render().unwrap();
        let dets = synthetic_detect(&img, &scene.cmap, 1024.0);
        prop_assert_eq!(dets.len(), gts.len());
        for g in &gts {
            prop_assert!(dets.iter().any(|d| d.class_id == g.class_id && iou(&d.bbox, &g.bbox) == 1.0));
        }
        prop_assert_eq!(synthetic_detect(&img, &scene.cmap, 1024.0), dets);
    }

    #[test]
    fn synthetic_detector_crop_consistent(seed in any::<u64>()) {
        let params = SceneParams { tile_size: 256, ..SceneParams::new(700, 500, 15) };
        let scene = generate_scene(seed, &params).unwrap();
        let (img, _) = scene.render().unwrap();
        let full = synthetic_detect(&img, &scene.cmap, 1024.0);
        let tile = TileSpec { row: 0, col: 0, origin_x: 137, origin_y: 91, width: 300, height: 250 };
        let crop = extract_tile(&img, &tile).unwrap();
        let mut local: Vec<BoundingBox> = synthetic_detect(&crop, &scene.cmap, 1024.0)
            .iter()
            .map(|d| d.bbox)
            .collect();
        let mut expected: Vec<BoundingBox> = full
            .iter()
            .filter_map(|d| d.bbox.intersection(&tile.global_rect()))
            .map(|b| inverse_remap_box(&b, &tile))
            .collect();
        let key = |b: &BoundingBox| (b.x1 as i64, b.y1 as i64, b.x2 as i64, b.y2 as i64);
        local.sort_by_key(key);
        expected.sort_by_key(key);
        prop_assert_eq!(local, expected);
    }
}
