use chrono::NaiveDate;
use proptest::prelude::*;

use appprint::applog::{build_vocabulary, split_days, AppVocabulary, FrequencyTable, Owner, Scope};
use appprint::harness::{augment_pool, render_base};
use appprint::imager::{
    augment, blur, gaussian_kernel, read_pgm, read_tensor, render_day, total_variation, write_pgm, write_tensor,
    BinnedDay, DayImage, ImageGeometry, ImageMeta, Tensor, MAX_FILTER_SIZE, RESIZED_SIDE,
};
use appprint::synthgen::{generate_dataset, SynthConfig};

fn meta() -> ImageMeta {
    ImageMeta {
        user_id: "u".into(),
        day: NaiveDate::from_ymd_opt(2012, 1, 2).unwrap(),
        encoding: Scope::Global,
        filter_size: 0,
    }
}

fn table(values: Vec<f64>) -> FrequencyTable {
    let names: Vec<String> = (0..values.len()).map(|i| format!("app{i:03}")).collect();
    let mut buf = String::from("app,index,frequency\n");
    for (i, v) in values.iter().enumerate() {
        buf.push_str(&format!("{},{i},{v}\n", names[i]));
    }
    let (vocab, t) = FrequencyTable::read_csv(buf.as_bytes(), Scope::Global, Owner::Dataset).unwrap();
    assert_eq!(vocab, AppVocabulary::from_names(names).unwrap());
    t
}

fn small_dataset() -> Vec<appprint::applog::EventLog> {
    let cfg = SynthConfig { n_users: 3, n_days: 4, vocab_size: 25, seed: 11, ..SynthConfig::default() };
    generate_dataset(&cfg).unwrap().1
}

#[test]
fn encodings_share_support() {
    let logs = small_dataset();
    let vocab = build_vocabulary(&logs).unwrap();
    let renders: Vec<Vec<DayImage>> = Scope::ALL.iter().map(|&s| render_base(&logs, &vocab, s).unwrap()).collect();
    let days: usize = logs.iter().map(|l| split_days(l).len()).sum();
    for r in &renders {
        assert_eq!(r.len(), days);
    }
    for i in 0..days {
        let support = |img: &DayImage| img.pixels.iter().map(|&p| p > 0.0).collect::<Vec<_>>();
        let s0 = support(&renders[0][i]);
        assert!(s0.iter().any(|&b| b));
        assert_eq!(s0, support(&renders[1][i]));
        assert_eq!(s0, support(&renders[2][i]));
    }
}

#[test]
fn pool_is_fifteen_times_the_base() {
    let logs = small_dataset();
    let vocab = build_vocabulary(&logs).unwrap();
    let base = render_base(&logs, &vocab, Scope::PerDay).unwrap();
    let sizes: Vec<u8> = (1..=MAX_FILTER_SIZE).collect();
    let pool = augment_pool(&base, &sizes, RESIZED_SIDE).unwrap();
    assert_eq!(pool.len(), 15 * base.len());
    assert_eq!(pool.image_len(), 50 * 50);
    assert_eq!(augment(&base[0]).unwrap().len(), 15);
}

#[test]
fn kernels_have_unit_mass() {
    for k in 1..=MAX_FILTER_SIZE {
        let g = gaussian_kernel(k).unwrap();
        assert!((g.weights.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        assert_eq!(g.side, 2 * k as usize + 1);
    }
}

#[test]
fn tensor_round_trip_is_bitwise() {
    let data: Vec<f32> = (0..2 * 3 * 4).map(|i| (i as f32 * 0.37).sin()).collect();
    let t = Tensor { count: 2, rows: 3, cols: 4, data };
    let mut buf = Vec::new();
    write_tensor(&mut buf, &t).unwrap();
    let back = read_tensor(&buf[..]).unwrap();
    assert_eq!(back.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), t.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    assert_eq!((back.count, back.rows, back.cols), (2, 3, 4));
}

fn sparse_image(rows: usize, cols: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![3 => Just(0.0), 1 => 0.0f64..=1.0], rows * cols)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn multi_app_bins_sum_to_one(
        apps in prop::collection::btree_map(0usize..12, 1u32..50, 2..6),
        freqs in prop::collection::vec(0.001f64..1.0, 12),
    ) {
        let geometry = ImageGeometry::with_cols(12);
        let mut binned = BinnedDay::default();
        for (&a, &c) in &apps {
            binned.counts.insert((7, a), c);
        }
        let img = render_day(&binned, &table(freqs), &geometry, meta()).unwrap();
        let sum: f64 = img.pixels[7 * 12..8 * 12].iter().sum();
        prop_assert!((sum - 1.0).abs() <= 1e-9);
        prop_assert_eq!(img.pixels.iter().filter(|&&p| p > 0.0).count(), apps.len());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn single_app_bins_keep_the_table_value(app in 0usize..12, count in 1u32..9, freqs in prop::collection::vec(0.0f64..1.0, 12)) {
        let geometry = ImageGeometry::with_cols(12);
        let mut binned = BinnedDay::default();
        binned.counts.insert((100, app), count);
        let t = table(freqs);
        let img = render_day(&binned, &t, &geometry, meta()).unwrap();
        prop_assert_eq!(img.at(100, app), t.get(app));
    }

    #[test]
    fn constant_images_are_blur_fixpoints(v in 0.0f64..=1.0, k in 1u8..=15, rows in 1usize..40, cols in 1usize..20) {
        let img = DayImage { rows, cols, pixels: vec![v; rows * cols], meta: meta() };
        let out = blur(&img, &gaussian_kernel(k).unwrap());
        prop_assert!(out.pixels.iter().all(|p| (p - v).abs() <= 1e-9));
    }

    #[test]
    fn total_variation_does_not_grow_with_filter_size(pixels in sparse_image(60, 12)) {
        let img = DayImage { rows: 60, cols: 12, pixels, meta: meta() };
        let mut prev = total_variation(&img.pixels, 60, 12);
        for k in 1..=MAX_FILTER_SIZE {
            let tv = total_variation(&blur(&img, &gaussian_kernel(k).unwrap()).pixels, 60, 12);
            prop_assert!(tv <= prev + 1e-9, "k={} tv {} after {}", k, tv, prev);
            prev = tv;
        }
    }

    #[test]
    fn pgm_round_trip(rows in 1usize..20, cols in 1usize..20, seed in any::<u64>()) {
        let px: Vec<f64> = (0..rows * cols).map(|i| ((i as u64 ^ seed) % 256) as f64 / 255.0).collect();
        let mut buf = Vec::new();
        write_pgm(&mut buf, rows, cols, &px).unwrap();
        let (r, c, bytes) = read_pgm(&buf[..]).unwrap();
        prop_assert_eq!((r, c), (rows, cols));
        for (b, p) in bytes.iter().zip(&px) {
            prop_assert_eq!(*b as f64, (p * 255.0).round());
        }
    }
}
