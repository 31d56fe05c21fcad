use rand::Rng as _;

use appprint::boost::{oracle::exhaustive_stump, samme_alpha, train_stump, ThresholdSearch};
use appprint::harness::compute_metrics;
use appprint::nnet::gradcheck::reduced_net_check;
use appprint::{rng, Error, Result};

const GRADCHECK_TOL: f64 = 1e-4;
const ORACLE_CASES: usize = 200;

fn line(ok: bool, name: &str, detail: String) -> bool {
    println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    ok
}

fn gradcheck(seed: u64) -> Result<bool> {
    let r = reduced_net_check(seed)?;
    Ok(line(
        r.max_rel_error <= GRADCHECK_TOL,
        "gradient check",
        format!("{} params, max relative error {:.3e} (tol {GRADCHECK_TOL:.0e})", r.params_checked, r.max_rel_error),
    ))
}

fn stump_oracle(seed: u64) -> Result<bool> {
    let mut r = rng::stream(seed, 11);
    let mut mismatches = 0;
    for _ in 0..ORACLE_CASES {
        let n = r.random_range(4..=20);
        let nf = r.random_range(1..=3);
        let k = r.random_range(2..=4);
        let x: Vec<f32> = (0..n * nf).map(|_| r.random_range(0..6) as f32 / 2.0).collect();
        let y: Vec<usize> = (0..n).map(|_| r.random_range(0..k)).collect();
        let w: Vec<f64> = (0..n).map(|_| r.random_range(0.1..1.0)).collect();
        let fast = train_stump(&x, nf, &y, k, &w, ThresholdSearch::Exact)?;
        match exhaustive_stump(&x, nf, &y, k, &w) {
            Some(slow) if slow.feature != fast.feature || (slow.threshold - fast.threshold).abs() > 1e-9 => mismatches += 1,
            _ => {}
        }
    }
    Ok(line(mismatches == 0, "stump search vs exhaustive", format!("{mismatches} mismatches in {ORACLE_CASES} cases")))
}

fn samme() -> bool {
    let got = samme_alpha(0.3, 15, 1.0);
    let want = (0.7f64 / 0.3).ln() + 14f64.ln();
    line((got - want).abs() < 1e-12, "samme weight", format!("alpha(0.3, K=15) = {got:.12}"))
}

fn metric_identities(seed: u64) -> Result<bool> {
    let mut r = rng::stream(seed, 12);
    let k = 15;
    let truth: Vec<usize> = (0..3000).map(|_| r.random_range(0..k)).collect();
    let pred: Vec<usize> = (0..3000).map(|_| r.random_range(0..k)).collect();
    let m = compute_metrics(&truth, &pred, k)?;
    let random_ok = (m.macro_f - 1.0 / k as f64).abs() < 0.03;
    let toy = compute_metrics(&[0, 0, 0, 0, 0, 0, 0, 0, 0, 0], &[0, 0, 0, 0, 0, 0, 0, 0, 1, 1], 2)?;
    let toy_ok = (toy.classes[0].f - 16.0 / 18.0).abs() < 1e-12 && toy.micro_f == toy.accuracy;
    Ok(line(
        random_ok && toy_ok && m.micro_f == m.accuracy,
        "metric identities",
        format!("random K=15 macro-F {:.4}, micro-F equals accuracy", m.macro_f),
    ))
}

pub fn run(seed: u64) -> Result<()> {
    let results = [gradcheck(seed)?, stump_oracle(seed)?, samme(), metric_identities(seed)?];
    let failed = results.iter().filter(|&&ok| !ok).count();
    if failed > 0 {
        return Err(Error::Config(format!("{failed} self-test check(s) failed")));
    }
    Ok(())
}
