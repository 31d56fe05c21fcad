//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if a criterion fails that is not listed in `KNOWN_FAILURES`.
//!
//! The end-to-end runs train the full network on a synthetic 15-user
//! dataset and take about half an hour on one core.

use std::process::ExitCode;
use std::time::Instant;

use rand::Rng as _;

use appprint::applog::{build_vocabulary, compute_frequencies, split_days, EventLog, Owner, Scope};
use appprint::boost::oracle::exhaustive_stump;
use appprint::boost::{samme_alpha, train_stump, BoostAlgorithm, ThresholdSearch};
use appprint::harness::{
    augment_pool, build_pool, compute_metrics, degradations, group_kfold, kfold_split, render_base, reports_csv,
    run_grid, stratified_kfold, Classifier, ExperimentReport, FoldPlan, GridConfig, ImagePool, Seeds, Variant,
};
use appprint::imager::{
    blur, gaussian_kernel, render_day, BinnedDay, DayImage, ImageGeometry, ImageMeta, MAX_FILTER_SIZE, RESIZED_SIDE,
};
use appprint::nnet::gradcheck::reduced_net_check;
use appprint::nnet::{build_model, cross_entropy, one_hot};
use appprint::rng;
use appprint::synthgen::{generate_dataset, SynthConfig};

/// Criteria expected to fail; see the project notes for the analysis.
const KNOWN_FAILURES: &[u32] = &[6, 7];

const PARAMS: usize = 1_215_919;
const GRAD_TOL: f64 = 1e-4;
const FILTERS: [u8; 4] = [1, 4, 8, 12];
const EPOCHS: usize = 10;
const MASTER_SEEDS: [u64; 3] = [0, 1, 2];

struct Outcome {
    id: u32,
    pass: bool,
    detail: String,
}

fn report(out: &mut Vec<Outcome>, id: u32, pass: bool, detail: String) {
    println!("{} criterion {id}: {detail}", if pass { "PASS" } else { "FAIL" });
    out.push(Outcome { id, pass, detail });
}

fn architecture(out: &mut Vec<Outcome>) {
    let t = Instant::now();
    let m = build_model::<f32>(15, 0).unwrap();
    let chain: Vec<String> = m.shapes().iter().map(|s| s.to_string()).collect();
    let want = [
        "(50, 50, 32)", "(50, 50, 32)", "(25, 25, 32)", "(25, 25, 32)",
        "(25, 25, 32)", "(25, 25, 32)", "(12, 12, 32)", "(12, 12, 32)",
        "(12, 12, 64)", "(12, 12, 64)", "(6, 6, 64)", "(6, 6, 64)",
        "(2304)", "(512)", "(512)", "(512)", "(15)", "(15)",
    ];
    let secs = t.elapsed().as_secs_f64();
    let pass = m.param_count() == PARAMS && chain == want && secs < 1.0;
    report(out, 1, pass, format!("{} trainable params (want {PARAMS}), shape chain {}, {secs:.3}s", m.param_count(), if chain == want { "exact" } else { "differs" }));
}

fn small_logs(seed: u64) -> Vec<EventLog> {
    let cfg = SynthConfig { n_users: 4, n_days: 7, vocab_size: 30, seed, ..SynthConfig::default() };
    generate_dataset(&cfg).unwrap().1
}

fn multiplicity(out: &mut Vec<Outcome>) {
    let logs = small_logs(21);
    let vocab = build_vocabulary(&logs).unwrap();
    let base = render_base(&logs, &vocab, Scope::Local).unwrap();
    let sizes: Vec<u8> = (1..=MAX_FILTER_SIZE).collect();
    let pool = augment_pool(&base, &sizes, RESIZED_SIDE).unwrap();
    let pass = pool.len() == 15 * base.len();
    report(out, 2, pass, format!("{} base images -> {} pool images", base.len(), pool.len()));
}

fn gradient(out: &mut Vec<Outcome>) {
    let t = Instant::now();
    let r = reduced_net_check(0).unwrap();
    let secs = t.elapsed().as_secs_f64();
    let pass = r.max_rel_error <= GRAD_TOL && secs < 120.0;
    report(out, 3, pass, format!("{} params, max relative error {:.2e} (tol {GRAD_TOL:.0e}), {secs:.1}s", r.params_checked, r.max_rel_error));
}

fn partition_ok(plan: &FoldPlan, n: usize) -> bool {
    let mut seen = vec![false; n];
    for f in &plan.folds {
        for &i in f {
            if i >= n || seen[i] {
                return false;
            }
            seen[i] = true;
        }
    }
    seen.iter().all(|&s| s)
}

fn invariants(out: &mut Vec<Outcome>) {
    let mut r = rng::stream(4, 0);
    let mut failed: Vec<&str> = Vec::new();

    // multi-app bins
    let cols = 40;
    let geometry = ImageGeometry::with_cols(cols);
    let meta = ImageMeta { user_id: "u".into(), day: chrono::NaiveDate::from_ymd_opt(2012, 1, 2).unwrap(), encoding: Scope::Global, filter_size: 0 };
    let logs = small_logs(5);
    let vocab = build_vocabulary(&logs).unwrap();
    let table = compute_frequencies(&logs, &vocab, Scope::Global, Owner::Dataset).unwrap();
    let used: Vec<usize> = (0..vocab.len()).filter(|&a| table.get(a) > 0.0).collect();
    let mut worst_bin = 0.0f64;
    for _ in 0..1000 {
        let mut binned = BinnedDay::default();
        let n_apps = r.random_range(2..=5.min(used.len()));
        while binned.counts.len() < n_apps {
            binned.counts.insert((17, used[r.random_range(0..used.len())]), r.random_range(1..20));
        }
        let g = ImageGeometry::with_cols(vocab.len());
        let img = render_day(&binned, &table, &g, meta.clone()).unwrap();
        let sum: f64 = img.pixels[17 * vocab.len()..18 * vocab.len()].iter().sum();
        worst_bin = worst_bin.max((sum - 1.0).abs());
    }
    if worst_bin > 1e-9 {
        failed.push("bin sums");
    }

    if (1..=MAX_FILTER_SIZE).any(|k| (gaussian_kernel(k).unwrap().weights.iter().sum::<f64>() - 1.0).abs() > 1e-12) {
        failed.push("kernel mass");
    }

    let flat = DayImage { rows: geometry.rows, cols, pixels: vec![0.37; geometry.rows * cols], meta: meta.clone() };
    let fix = (1..=MAX_FILTER_SIZE).all(|k| blur(&flat, &gaussian_kernel(k).unwrap()).pixels.iter().all(|p| (p - 0.37).abs() <= 1e-9));
    if !fix {
        failed.push("blur fixpoint");
    }

    let model = build_model::<f32>(15, 1).unwrap();
    let x: Vec<f32> = (0..16 * 2500).map(|_| r.random::<f32>()).collect();
    let probs = model.infer(&x, 16).unwrap();
    if probs.chunks(15).any(|row| (row.iter().sum::<f32>() - 1.0).abs() > 1e-6) {
        failed.push("softmax rows");
    }
    let labels: Vec<usize> = (0..16).map(|i| i % 15).collect();
    let ce = cross_entropy(&probs, &one_hot::<f32>(&labels, 15), 15);
    if (ce - 15f64.ln()).abs() > 0.1 {
        failed.push("initial loss");
    }

    let mut worst_table = 0.0f64;
    for log in &logs {
        let local = compute_frequencies(&logs, &vocab, Scope::Local, Owner::User(log.user_id.clone())).unwrap();
        worst_table = worst_table.max((local.values.iter().sum::<f64>() - 1.0).abs());
        for (day, _) in split_days(log) {
            let t = compute_frequencies(&logs, &vocab, Scope::PerDay, Owner::UserDay(log.user_id.clone(), day)).unwrap();
            worst_table = worst_table.max((t.values.iter().sum::<f64>() - 1.0).abs());
        }
    }
    worst_table = worst_table.max((table.values.iter().sum::<f64>() - 1.0).abs());
    if worst_table > 1e-9 {
        failed.push("table normalization");
    }

    let mut folds_ok = true;
    for seed in 0..20 {
        let n = 50 + seed as usize * 7;
        let labels: Vec<usize> = (0..n).map(|i| (i * 7 + seed as usize) % 6).collect();
        let groups: Vec<usize> = (0..n).map(|i| i / 4).collect();
        folds_ok &= partition_ok(&kfold_split(n, 5, seed).unwrap(), n);
        folds_ok &= partition_ok(&stratified_kfold(&labels, 5, seed).unwrap(), n);
        let g = group_kfold(&groups, 5, seed).unwrap();
        folds_ok &= partition_ok(&g, n) && g.folds.iter().all(|f| f.iter().all(|&i| f.contains(&(groups[i] * 4))));
    }
    if !folds_ok {
        failed.push("fold partitions");
    }

    let mut micro_ok = true;
    for _ in 0..50 {
        let n = r.random_range(1..500);
        let t: Vec<usize> = (0..n).map(|_| r.random_range(0..15)).collect();
        let p: Vec<usize> = (0..n).map(|_| r.random_range(0..15)).collect();
        let m = compute_metrics(&t, &p, 15).unwrap();
        micro_ok &= m.micro_f == m.accuracy;
    }
    if !micro_ok {
        failed.push("micro-F = accuracy");
    }

    let detail = format!(
        "bin sum err {worst_bin:.1e}, table sum err {worst_table:.1e}, initial loss {ce:.4} vs ln 15 = {:.4}{}",
        15f64.ln(),
        if failed.is_empty() { String::new() } else { format!("; failed: {}", failed.join(", ")) }
    );
    report(out, 4, failed.is_empty(), detail);
}

fn boosting_oracle(out: &mut Vec<Outcome>) {
    let mut r = rng::stream(5, 0);
    let (mut cases, mut mismatches) = (0, 0);
    for _ in 0..5000 {
        let n = r.random_range(1..=20);
        let nf = r.random_range(1..=3);
        let k = r.random_range(2..=5);
        let levels = r.random_range(1..=8);
        let x: Vec<f32> = (0..n * nf).map(|_| r.random_range(0..levels) as f32 * 0.5).collect();
        let y: Vec<usize> = (0..n).map(|_| r.random_range(0..k)).collect();
        let w: Vec<f64> = (0..n).map(|_| if r.random_bool(0.5) { 1.0 } else { r.random_range(0.01..2.0) }).collect();
        let Some(slow) = exhaustive_stump(&x, nf, &y, k, &w) else { continue };
        for search in [ThresholdSearch::Exact, ThresholdSearch::Histogram] {
            cases += 1;
            let fast = train_stump(&x, nf, &y, k, &w, search).unwrap();
            let same_leaves = fast.left.iter().zip(&slow.left).chain(fast.right.iter().zip(&slow.right)).all(|(a, b)| (a - b).abs() <= 1e-12);
            if fast.feature != slow.feature || fast.threshold != slow.threshold || !same_leaves {
                mismatches += 1;
            }
        }
    }
    let a3 = samme_alpha(0.25, 2, 1.0);
    let zero_ok = (2..=30).all(|k| samme_alpha(1.0 - 1.0 / k as f64, k, 1.0).abs() <= 1e-12);
    let pass = mismatches == 0 && (a3 - 3f64.ln()).abs() <= 1e-15 && zero_ok;
    report(out, 5, pass, format!("{mismatches} mismatches in {cases} stump searches; alpha(0.25, K=2) = {a3:.12}; alpha at chance is 0: {zero_ok}"));
}

fn grid(pool: &ImagePool, seed: u64, variants: Vec<Variant>, algorithm: BoostAlgorithm) -> Vec<ExperimentReport> {
    let mut g = GridConfig { encodings: vec![Scope::PerDay], variants, classifiers: Classifier::ALL.to_vec(), workers: 1, ..GridConfig::default() };
    g.settings.seeds = Seeds::from_master(seed);
    g.settings.train.epochs = EPOCHS;
    g.settings.boost.algorithm = algorithm;
    run_grid(std::slice::from_ref(pool), &g).unwrap()
}

fn macro_f(reports: &[ExperimentReport], variant: Variant, classifier: Classifier) -> f64 {
    reports.iter().find(|r| r.variant == variant && r.classifier == classifier).map(ExperimentReport::mean_macro_f).unwrap()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn desk_scale(out: &mut Vec<Outcome>) {
    let t = Instant::now();
    let cfg = SynthConfig::default();
    let logs = generate_dataset(&cfg).unwrap().1;
    let vocab = build_vocabulary(&logs).unwrap();
    let pool = build_pool(&logs, &vocab, Scope::PerDay, &FILTERS).unwrap();
    println!("     dataset: {} users, {} apps, {} pool images, built in {:.1}s", cfg.n_users, vocab.len(), pool.len(), t.elapsed().as_secs_f64());

    let all = grid(&pool, MASTER_SEEDS[0], vec![Variant::All], BoostAlgorithm::SammeR);
    let secs = t.elapsed().as_secs_f64();
    let cnn = macro_f(&all, Variant::All, Classifier::Cnn);
    let ada = macro_f(&all, Variant::All, Classifier::Adaboost);
    let pass = cnn >= 0.80 && ada >= 0.30 && secs <= 1800.0;
    report(out, 6, pass, format!("PERDAY/ALL macro-F: CNN {cnn:.4} (>= 0.80), Adaboost SAMME.R {ada:.4} (>= 0.30); {secs:.0}s (<= 1800s)"));

    let samme = grid(&pool, MASTER_SEEDS[0], vec![Variant::All], BoostAlgorithm::Samme);
    println!("INFO criterion 6: Adaboost with --boost-algo samme on the same folds: macro-F {:.4}", macro_f(&samme, Variant::All, Classifier::Adaboost));

    let mut f8_cnn = Vec::new();
    let mut f8_ada = Vec::new();
    let mut deg_cnn = Vec::new();
    let mut deg_ada = Vec::new();
    for (i, &seed) in MASTER_SEEDS.iter().enumerate() {
        let mut reports = grid(&pool, seed, vec![Variant::F1F7, Variant::F8F15, Variant::Dropout], BoostAlgorithm::SammeR);
        if i == 0 {
            reports.extend(all.iter().cloned());
        } else {
            reports.extend(grid(&pool, seed, vec![Variant::All], BoostAlgorithm::SammeR));
        }
        f8_cnn.push(macro_f(&reports, Variant::F8F15, Classifier::Cnn));
        f8_ada.push(macro_f(&reports, Variant::F8F15, Classifier::Adaboost));
        for d in degradations(&reports) {
            println!(
                "     seed {seed}: {} DROPOUT degradation {:.4} ({:.1}%), best {} {:.4} -> DROPOUT {:.4}",
                d.classifier, d.delta, 100.0 * d.relative, d.best_variant, d.best_macro_f, d.dropout_macro_f
            );
            match d.classifier {
                Classifier::Cnn => deg_cnn.push(d.delta),
                Classifier::Adaboost => deg_ada.push(d.delta),
            }
        }
    }
    let (fc, fa) = (median(f8_cnn), median(f8_ada));
    let (dc, da) = (median(deg_cnn), median(deg_ada));
    let pass = fc >= fa && dc <= da;
    report(out, 7, pass, format!("median over seeds {MASTER_SEEDS:?}: PERDAY F8-F15 CNN {fc:.4} vs Adaboost {fa:.4}; DROPOUT degradation CNN {dc:.4} vs Adaboost {da:.4}"));
}

fn reproducibility(out: &mut Vec<Outcome>) {
    let logs = small_logs(8);
    let vocab = build_vocabulary(&logs).unwrap();
    let pool = build_pool(&logs, &vocab, Scope::PerDay, &[2, 10]).unwrap();
    let mut g = GridConfig { encodings: vec![Scope::PerDay], ..GridConfig::default() };
    g.settings.folds = 2;
    g.settings.train.epochs = 1;
    g.settings.boost.n_estimators = 10;
    let csv = |workers: usize| {
        let reports = run_grid(std::slice::from_ref(&pool), &GridConfig { workers, ..g.clone() }).unwrap();
        let mut buf = Vec::new();
        reports_csv(&reports, &mut buf).unwrap();
        buf
    };
    let (a, b, c) = (csv(1), csv(1), csv(3));
    let pass = a == b && a == c;
    report(out, 8, pass, format!("two identical grid runs {} byte-identical report CSVs ({} bytes); 3 workers {}", if a == b { "give" } else { "do not give" }, a.len(), if a == c { "match" } else { "differ" }));
}

fn main() -> ExitCode {
    let mut out = Vec::new();
    architecture(&mut out);
    multiplicity(&mut out);
    gradient(&mut out);
    invariants(&mut out);
    boosting_oracle(&mut out);
    reproducibility(&mut out);
    desk_scale(&mut out);
    out.sort_by_key(|o| o.id);

    let unexpected: Vec<&Outcome> = out.iter().filter(|o| !o.pass && !KNOWN_FAILURES.contains(&o.id)).collect();
    let passing_known: Vec<u32> = out.iter().filter(|o| o.pass && KNOWN_FAILURES.contains(&o.id)).map(|o| o.id).collect();
    println!("acceptance: {} of {} criteria pass", out.iter().filter(|o| o.pass).count(), out.len());
    for o in out.iter().filter(|o| !o.pass) {
        let tag = if KNOWN_FAILURES.contains(&o.id) { "known failure" } else { "UNEXPECTED" };
        println!("  {tag}: criterion {}: {}", o.id, o.detail);
    }
    if !passing_known.is_empty() {
        println!("  criteria {passing_known:?} now pass; drop them from KNOWN_FAILURES");
    }
    if unexpected.is_empty() { ExitCode::SUCCESS } else { ExitCode::FAILURE }
}
