//! The ten acceptance criteria, run in order without the test harness so the
//! runtime limits are measured alone and every line is printed.
//!
//! Each criterion prints one `PASS`/`FAIL` line; the process exits non-zero
//! if any failed. `ACCEPTANCE_ONLY=n` runs criterion `n` alone.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;
use std::time::{Duration, Instant};

use flightsynth::copula::{CopulaConfig, FittedCopula};
use flightsynth::encode::{decode, encode, fit_encoder, split_missing, EncoderOptions, Target};
use flightsynth::flights::{
    default_mapping, engineer_features, localize_and_convert, read_raw_flights_from, RouteDirectory, ARR_LABEL,
    DEP_LABEL, DEST_ID, ORIGIN_ID,
};
use flightsynth::learners::regression_metrics;
use flightsynth::numkit::{
    cholesky, normal_cdf, normal_quantile, pearson, rng_stream, symmetric_eigen, top_eigenpairs, KdeMarginal,
    PcaModel, RngStream,
};
use flightsynth::quality::scores::{contingency_similarity, ks_score, ks_statistic, tvd_score, Key};
use flightsynth::quality::{fidelity_stage, split_holdout, utility_stage, EvalConfig, Stage};
use flightsynth::table::{Column, ColumnKind, Table};
use flightsynth::tvae::{self_test, Architecture, SampleOptions, TrainConfig, TvaeSynthesizer};
use flightsynth_cli::commands::{load_routes, load_table, reconstruct_frame, ModelFile, QualityGates, CLEANED_FILE};
use flightsynth_cli::mock;
use flightsynth_cli::{run_pipeline, ExperimentConfig};
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

struct Outcome {
    ok: bool,
    detail: String,
}

fn outcome(ok: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        ok,
        detail: detail.into(),
    }
}

fn within(elapsed: Duration, limit_s: u64) -> bool {
    elapsed <= Duration::from_secs(limit_s)
}

fn gauss(rng: &mut RngStream) -> f64 {
    StandardNormal.sample(rng)
}

// ---- 1 ----

fn random_table(rng: &mut RngStream) -> Table {
    let n = rng.gen_range(2..=500);
    let n_cols = rng.gen_range(1..=6);
    let mut cols = Vec::new();
    for c in 0..n_cols {
        let miss_rate = if rng.gen_bool(0.6) { rng.gen_range(0.0..0.3) } else { 0.0 };
        let mut mask: Vec<bool> = (0..n).map(|_| rng.gen_bool(miss_rate)).collect();
        mask[rng.gen_range(0..n)] = false;
        let name = format!("c{c}");
        let col = match rng.gen_range(0..5) {
            0 => {
                let k = rng.gen_range(1..=6);
                let v: Vec<Option<String>> = mask
                    .iter()
                    .map(|&m| (!m).then(|| format!("cat{}", rng.gen_range(0..k))))
                    .collect();
                Column::categorical(&name, &v).unwrap()
            }
            1 => {
                let (mu, sd) = (rng.gen_range(-1e3..1e3), rng.gen_range(0.1..200.0));
                let v: Vec<Option<f64>> = mask.iter().map(|&m| (!m).then(|| mu + sd * gauss(rng))).collect();
                Column::numeric(&name, &v).unwrap()
            }
            2 => {
                let v: Vec<Option<f64>> = mask
                    .iter()
                    .map(|&m| (!m).then(|| rng.gen_range(-50..400) as f64))
                    .collect();
                Column::numeric(&name, &v).unwrap()
            }
            3 => {
                let base = 1_672_531_200 + rng.gen_range(0..86_400 * 30);
                let v: Vec<Option<i64>> = mask
                    .iter()
                    .map(|&m| (!m).then(|| base + 60 * rng.gen_range(0..50_000)))
                    .collect();
                Column::datetime(&name, &v).unwrap()
            }
            _ => {
                let v: Vec<Option<bool>> = mask.iter().map(|&m| (!m).then(|| rng.gen_bool(0.3))).collect();
                Column::boolean(&name, &v).unwrap()
            }
        };
        cols.push(col);
    }
    Table::new(cols).unwrap()
}

fn tables_match(a: &Table, b: &Table) -> Result<(), String> {
    if a.names() != b.names() || a.n_rows() != b.n_rows() {
        return Err(format!("shape {:?} vs {:?}", a.shape(), b.shape()));
    }
    for (x, y) in a.columns().iter().zip(b.columns()) {
        if x.kind() != y.kind() {
            return Err(format!("{}: kind changed", x.name()));
        }
        if x.missing_mask() != y.missing_mask() {
            return Err(format!("{}: missing mask differs", x.name()));
        }
        for r in 0..x.len() {
            let same = match x.kind() {
                ColumnKind::Numeric => match (x.as_f64(r), y.as_f64(r)) {
                    (Some(p), Some(q)) => (p - q).abs() <= 1e-9 * p.abs(),
                    (p, q) => p == q,
                },
                _ => x.value(r) == y.value(r),
            };
            if !same {
                return Err(format!("{} row {r}: {:?} vs {:?}", x.name(), x.value(r), y.value(r)));
            }
        }
    }
    Ok(())
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = rng_stream(1, 0);
    for i in 0..100u64 {
        let t = random_table(&mut rng);
        let (target, modes) = match i % 3 {
            0 => (Target::Copula, false),
            1 => (Target::Tvae, false),
            _ => (Target::Tvae, true),
        };
        let opts = EncoderOptions {
            mode_normalize: modes,
            fill_seed: Some(i),
            ..Default::default()
        };
        let split = split_missing(&t, i).unwrap();
        let state = fit_encoder(&split, target, &opts).unwrap();
        let m = encode(&split, &state, i).unwrap();
        let (back, _) = decode(&m, &state).unwrap();
        if let Err(e) = tables_match(&t, &back) {
            return outcome(false, format!("table {i} ({target:?}, modes {modes}): {e}"));
        }
    }
    let el = start.elapsed();
    outcome(within(el, 30), format!("100 tables round-tripped in {:.1}s (limit 30s)", el.as_secs_f64()))
}

// ---- 2 ----

fn closed_form_eigenvalues(a: &Array2<f64>) -> Vec<f64> {
    let mut ev = if a.nrows() == 2 {
        let (p, q, r) = (a[[0, 0]], a[[1, 1]], a[[0, 1]]);
        let m = 0.5 * (p + q);
        let h = (0.25 * (p - q).powi(2) + r * r).sqrt();
        vec![m + h, m - h]
    } else {
        // trigonometric solution of the characteristic cubic
        let off = a[[0, 1]].powi(2) + a[[0, 2]].powi(2) + a[[1, 2]].powi(2);
        let q = (a[[0, 0]] + a[[1, 1]] + a[[2, 2]]) / 3.0;
        let p2 = (0..3).map(|i| (a[[i, i]] - q).powi(2)).sum::<f64>() + 2.0 * off;
        let p = (p2 / 6.0).sqrt();
        let b = (a - &(Array2::<f64>::eye(3) * q)) / p;
        let det = b[[0, 0]] * (b[[1, 1]] * b[[2, 2]] - b[[1, 2]] * b[[2, 1]])
            - b[[0, 1]] * (b[[1, 0]] * b[[2, 2]] - b[[1, 2]] * b[[2, 0]])
            + b[[0, 2]] * (b[[1, 0]] * b[[2, 1]] - b[[1, 1]] * b[[2, 0]]);
        let phi = (det / 2.0).clamp(-1.0, 1.0).acos() / 3.0;
        let l1 = q + 2.0 * p * phi.cos();
        let l3 = q + 2.0 * p * (phi + 2.0 * PI / 3.0).cos();
        vec![l1, 3.0 * q - l1 - l3, l3]
    };
    ev.sort_by(|x, y| y.total_cmp(x));
    ev
}

fn random_spd(rng: &mut RngStream, d: usize, ridge: f64) -> Array2<f64> {
    let m = Array2::from_shape_fn((d, d), |_| gauss(rng));
    m.dot(&m.t()) + Array2::<f64>::eye(d) * ridge
}

fn criterion_2() -> Outcome {
    let mut rng = rng_stream(2, 0);
    let (mut worst_phi, mut worst_direct): (f64, f64) = (0.0, 0.0);
    for i in 0..=12_000 {
        let x = -6.0 + i as f64 * 0.001;
        // the upper tail is inverted through the lower one, so compare there
        let back = if x <= 0.0 {
            normal_quantile(normal_cdf(x)).unwrap()
        } else {
            -normal_quantile(normal_cdf(-x)).unwrap()
        };
        worst_phi = worst_phi.max((back - x).abs() / x.abs().max(1.0));
        // Φ(x) near 1 is stored to ~1e-16 absolute, so this one is only reported
        worst_direct = worst_direct.max((normal_quantile(normal_cdf(x)).unwrap() - x).abs() / x.abs().max(1.0));
    }
    let mut worst_chol: f64 = 0.0;
    for d in 1..=8 {
        for _ in 0..25 {
            let a = random_spd(&mut rng, d, 0.1);
            let l = cholesky(&a).expect("positive definite");
            let err = (&l.dot(&l.t()) - &a).iter().fold(0.0f64, |m, v| m.max(v.abs()));
            worst_chol = worst_chol.max(err);
        }
    }
    let mut worst_eig: f64 = 0.0;
    for i in 0..200 {
        let d = 2 + i % 2;
        let a = random_spd(&mut rng, d, 0.0);
        let want = closed_form_eigenvalues(&a);
        let scale = want[0].abs().max(1.0);
        let (jac, _) = symmetric_eigen(&a).unwrap();
        let pow: Vec<f64> = top_eigenpairs(&a, d).unwrap().into_iter().map(|p| p.0).collect();
        for k in 0..d {
            worst_eig = worst_eig.max((jac[k] - want[k]).abs() / scale);
            worst_eig = worst_eig.max((pow[k] - want[k]).abs() / scale);
        }
    }
    // PCA of two standardised columns: shares are (1 ± |r|) / 2
    let mut worst_pca: f64 = 0.0;
    for _ in 0..50 {
        let rho: f64 = rng.gen_range(-0.95..0.95);
        let x = Array2::from_shape_fn((400, 2), |_| gauss(&mut rng));
        let y = Array2::from_shape_fn((400, 2), |(r, c)| {
            if c == 0 {
                x[[r, 0]]
            } else {
                rho * x[[r, 0]] + (1.0 - rho * rho).sqrt() * x[[r, 1]]
            }
        });
        let r = pearson(&y.column(0).to_vec(), &y.column(1).to_vec()).unwrap();
        let shares = PcaModel::fit(&y).unwrap().explained_variance_shares();
        worst_pca = worst_pca.max((shares[0] - (1.0 + r.abs()) / 2.0).abs());
        worst_pca = worst_pca.max((shares[1] - (1.0 - r.abs()) / 2.0).abs());
    }
    let mut worst_kde: f64 = 0.0;
    for s in 0..5 {
        let samples: Vec<f64> = (0..300).map(|_| 10.0 * s as f64 + 3.0 * gauss(&mut rng)).collect();
        let kde = KdeMarginal::fit(&samples).unwrap();
        let lo = samples.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let xs: Vec<f64> = (0..=1000).map(|i| lo + (hi - lo) * i as f64 / 1000.0).collect();
        let us: Vec<f64> = xs.iter().map(|&x| kde.cdf(x)).collect();
        let batch = kde.quantiles(&us);
        for ((&x, &u), &b) in xs.iter().zip(&us).zip(&batch) {
            let tol = x.abs().max(1.0);
            worst_kde = worst_kde.max((kde.quantile(u) - x).abs() / tol);
            worst_kde = worst_kde.max((b - x).abs() / tol);
        }
    }
    let ok = worst_phi <= 1e-9 && worst_chol <= 1e-10 && worst_eig <= 1e-6 && worst_pca <= 1e-6 && worst_kde <= 1e-6;
    outcome(
        ok,
        format!(
            "Φ round trip {worst_phi:.1e} (unmirrored {worst_direct:.1e}), Cholesky {worst_chol:.1e}, eigen {worst_eig:.1e}, PCA {worst_pca:.1e}, KDE {worst_kde:.1e}"
        ),
    )
}

// ---- 3 ----

fn normal_scores(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let n = v.len() as f64;
    let mut out = vec![0.0; v.len()];
    for (rank, &i) in idx.iter().enumerate() {
        out[i] = normal_quantile((rank as f64 + 1.0) / (n + 1.0)).unwrap();
    }
    out
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let mut rng = rng_stream(3, 0);
    let rho: f64 = 0.7;
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for _ in 0..5000 {
        let (z1, z2) = (gauss(&mut rng), gauss(&mut rng));
        a.push(Some(z1.exp()));
        b.push(Some((rho * z1 + (1.0 - rho * rho).sqrt() * z2).exp()));
    }
    let t = Table::new(vec![Column::numeric("a", &a).unwrap(), Column::numeric("b", &b).unwrap()]).unwrap();
    let model = FittedCopula::fit(&t, &CopulaConfig::default(), 3).unwrap();
    let (s, _) = model.sample(5000, 4).unwrap();
    let sa = s.column("a").unwrap().present_f64();
    let sb = s.column("b").unwrap().present_f64();
    let r = pearson(&normal_scores(&sa), &normal_scores(&sb)).unwrap();
    let ks_a = ks_statistic(&t.column("a").unwrap().present_f64(), &sa);
    let ks_b = ks_statistic(&t.column("b").unwrap().present_f64(), &sb);
    let el = start.elapsed();
    outcome(
        (r - rho).abs() <= 0.05 && ks_a <= 0.05 && ks_b <= 0.05 && within(el, 120),
        format!("normal-scores r = {r:.4}, KS {ks_a:.4} / {ks_b:.4}, {:.1}s", el.as_secs_f64()),
    )
}

// ---- 4 ----

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let worst = self_test();
    let el = start.elapsed();
    outcome(
        worst <= 1e-4 && within(el, 10),
        format!("worst relative gradient error {worst:.2e} in {:.2}s", el.as_secs_f64()),
    )
}

// ---- 5 ----

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let mut rng = rng_stream(5, 0);
    let noise = Normal::new(0.0, 5.0).unwrap();
    let x: Vec<Option<f64>> = (0..2000)
        .map(|i| Some(if i % 2 == 0 { 0.0 } else { 100.0 } + noise.sample(&mut rng)))
        .collect();
    let t = Table::new(vec![Column::numeric("x", &x).unwrap()]).unwrap();
    let cfg = TrainConfig {
        epochs: 50,
        mode_normalize: true,
        seed: 5,
        ..Default::default()
    };
    let m = TvaeSynthesizer::fit(&t, &Architecture::default(), &cfg).unwrap();
    let mean_loss = |r: std::ops::Range<usize>| m.trace[r.clone()].iter().map(|e| e.total).sum::<f64>() / r.len() as f64;
    let (early, late) = (mean_loss(0..10), mean_loss(40..50));
    let (s, _) = m.sample(2000, 6, SampleOptions::default()).unwrap();
    let v = s.column("x").unwrap().present_f64();
    let (lo, hi): (Vec<f64>, Vec<f64>) = v.iter().partition(|&&x| x < 50.0);
    let avg = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
    let (m0, m1) = (avg(&lo), avg(&hi));
    let both = lo.len() >= 200 && hi.len() >= 200;
    let el = start.elapsed();
    outcome(
        late < early && both && m0.abs() <= 2.5 && (m1 - 100.0).abs() <= 2.5 && within(el, 180),
        format!(
            "loss {early:.3} → {late:.3}; clusters {} @ {m0:.2}, {} @ {m1:.2}; {:.1}s",
            lo.len(),
            hi.len(),
            el.as_secs_f64()
        ),
    )
}

// ---- 6 ----

fn brute_ks(a: &[f64], b: &[f64]) -> f64 {
    let mut d: f64 = 0.0;
    for &v in a.iter().chain(b) {
        let fa = a.iter().filter(|&&x| x <= v).count() as f64 / a.len() as f64;
        let fb = b.iter().filter(|&&x| x <= v).count() as f64 / b.len() as f64;
        d = d.max((fa - fb).abs());
    }
    1.0 - d
}

fn direct_tvd<K: Ord + Clone>(a: &[K], b: &[K]) -> f64 {
    let keys: BTreeSet<&K> = a.iter().chain(b).collect();
    let mut sum = 0.0;
    for k in keys {
        let p = a.iter().filter(|x| *x == k).count() as f64 / a.len() as f64;
        let q = b.iter().filter(|x| *x == k).count() as f64 / b.len() as f64;
        sum += (p - q).abs();
    }
    (1.0 - 0.5 * sum).clamp(0.0, 1.0)
}

fn criterion_6() -> Outcome {
    let mut rng = rng_stream(6, 0);
    let mut mismatches = Vec::new();
    for i in 0..500 {
        let (n, m) = (rng.gen_range(1..40), rng.gen_range(1..40));
        // small integer support forces ties
        let a: Vec<f64> = (0..n).map(|_| rng.gen_range(0..12) as f64 * 0.5).collect();
        let b: Vec<f64> = (0..m).map(|_| rng.gen_range(0..12) as f64 * 0.5).collect();
        if ks_score(&a, &b) != brute_ks(&a, &b) {
            mismatches.push(format!("ks pair {i}"));
        }
        let key = |rng: &mut RngStream| -> Key {
            match rng.gen_range(0..6) {
                0 => None,
                k => Some(format!("k{k}")),
            }
        };
        let ca: Vec<Key> = (0..n).map(|_| key(&mut rng)).collect();
        let cb: Vec<Key> = (0..m).map(|_| key(&mut rng)).collect();
        if tvd_score(&ca, &cb) != direct_tvd(&ca, &cb) {
            mismatches.push(format!("tvd pair {i}"));
        }
        let pa: Vec<(Key, Key)> = (0..n).map(|_| (key(&mut rng), key(&mut rng))).collect();
        let pb: Vec<(Key, Key)> = (0..m).map(|_| (key(&mut rng), key(&mut rng))).collect();
        if contingency_similarity(&pa, &pb) != direct_tvd(&pa, &pb) {
            mismatches.push(format!("contingency pair {i}"));
        }
    }
    for _ in 0..1000 {
        let n = rng.gen_range(2..50);
        let p: Vec<f64> = (0..n).map(|_| 10.0 * gauss(&mut rng)).collect();
        let mut t: Vec<f64> = (0..n).map(|_| 10.0 * gauss(&mut rng)).collect();
        t[0] += 1.0;
        let m = regression_metrics(&p, &t).unwrap();
        if m.rmse < m.mae {
            mismatches.push(format!("rmse {} < mae {}", m.rmse, m.mae));
        }
    }
    outcome(
        mismatches.is_empty(),
        format!("500 KS/TVD/contingency pairs and 1000 error vectors, {} mismatches {:?}", mismatches.len(), mismatches.iter().take(3).collect::<Vec<_>>()),
    )
}

// ---- 7 ----

fn mock_flights(rows: usize, seed: u64) -> Table {
    let bytes = mock::generate_bts(rows, seed).unwrap();
    let raw = read_raw_flights_from(bytes.as_slice(), &default_mapping()).unwrap();
    let airports = mock::airport_directory();
    let utc = localize_and_convert(&raw, &airports).unwrap();
    engineer_features(&utc, &airports).unwrap().0
}

/// Same schema, every column drawn uniformly over the observed range or
/// category set.
fn uniform_noise(t: &Table, rng: &mut RngStream) -> Table {
    let n = t.n_rows();
    let cols = t
        .columns()
        .iter()
        .map(|c| {
            let schema = c.schema().clone();
            match c.kind() {
                ColumnKind::Categorical => {
                    let cats: Vec<String> = c.labels().into_iter().flatten().collect::<BTreeSet<_>>().into_iter().collect();
                    let v: Vec<Option<String>> = (0..n).map(|_| cats.choose(rng).cloned()).collect();
                    Column::from_text(schema, &v).unwrap()
                }
                ColumnKind::Numeric => {
                    let p = c.present_f64();
                    let lo = p.iter().copied().fold(f64::INFINITY, f64::min);
                    let hi = p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let v: Vec<Option<f64>> = (0..n).map(|_| Some(lo + (hi - lo) * rng.gen::<f64>())).collect();
                    Column::from_numbers(schema, &v).unwrap()
                }
                ColumnKind::Datetime => {
                    let p: Vec<i64> = (0..n).filter_map(|r| c.as_time(r)).collect();
                    let (lo, hi) = (*p.iter().min().unwrap(), *p.iter().max().unwrap());
                    let v: Vec<Option<i64>> = (0..n).map(|_| Some(rng.gen_range(lo..=hi))).collect();
                    Column::from_times(schema, &v).unwrap()
                }
                ColumnKind::Boolean => {
                    let v: Vec<Option<bool>> = (0..n).map(|_| Some(rng.gen_bool(0.5))).collect();
                    Column::from_bools(schema, &v).unwrap()
                }
            }
        })
        .collect();
    Table::with_rows(cols, n).unwrap()
}

fn criterion_7() -> Outcome {
    let flights = mock_flights(4000, 7);
    let mut rng = rng_stream(7, 1);
    let mut idx: Vec<usize> = (0..flights.n_rows()).collect();
    idx.shuffle(&mut rng);
    let half = idx.len() / 2;
    let (mut a, mut b) = (idx[..half].to_vec(), idx[half..2 * half].to_vec());
    a.sort_unstable();
    b.sort_unstable();
    let cfg = EvalConfig::with_seed(7);
    let same = fidelity_stage(&flights.take_rows(&a), &flights.take_rows(&b), &cfg).unwrap();
    let noise = uniform_noise(&flights, &mut rng);
    let diff = fidelity_stage(&flights, &noise, &cfg).unwrap();
    let (s, d) = (same.average_accuracy, diff.average_accuracy);
    outcome(
        (0.45..=0.55).contains(&s) && d >= 0.95,
        format!("halves of {} rows: accuracy {s:.4}; real vs uniform noise: {d:.4}", flights.n_rows()),
    )
}

// ---- 8 ----

fn criterion_8() -> Outcome {
    let mut rng = rng_stream(8, 0);
    let n = 2000;
    let beta = [2.0, -1.5, 0.5];
    let shift: BTreeMap<&str, f64> = [("a", 0.0), ("b", 3.0), ("c", -2.0)].into_iter().collect();
    let mut xs = vec![Vec::new(); 3];
    let (mut cat, mut y) = (Vec::new(), Vec::new());
    for _ in 0..n {
        let x: Vec<f64> = (0..3).map(|_| gauss(&mut rng)).collect();
        let c = ["a", "b", "c"][rng.gen_range(0..3)];
        let target = x.iter().zip(beta).map(|(x, b)| x * b).sum::<f64>() + shift[c] + 0.5 * gauss(&mut rng);
        for k in 0..3 {
            xs[k].push(Some(x[k]));
        }
        cat.push(Some(c));
        y.push(Some(target));
    }
    let real = Table::new(vec![
        Column::numeric("x0", &xs[0]).unwrap(),
        Column::numeric("x1", &xs[1]).unwrap(),
        Column::numeric("x2", &xs[2]).unwrap(),
        Column::categorical("group", &cat).unwrap(),
        Column::numeric("y", &y).unwrap(),
    ])
    .unwrap();
    let cfg = EvalConfig {
        stages: vec![Stage::Utility],
        utility_features: ["x0", "x1", "x2", "group"].map(String::from).to_vec(),
        utility_target: "y".to_string(),
        ..EvalConfig::with_seed(8)
    };
    let (train, _) = split_holdout(&real, &cfg).unwrap();
    let same = utility_stage(&real, &train, &cfg).unwrap();
    let identical = same.regressors.iter().all(|r| r.error.is_none() && r.trtr == r.tstr);
    let draws: Vec<usize> = (0..train.n_rows()).map(|_| rng.gen_range(0..train.n_rows())).collect();
    let oracle = utility_stage(&real, &train.take_rows(&draws), &cfg).unwrap();
    let gap = (oracle.tstr.r2 - oracle.trtr.r2).abs();
    outcome(
        identical && gap <= 0.05,
        format!(
            "synthetic = train: {} regressors identical = {identical}; resampled oracle R² TRTR {:.4} vs TSTR {:.4}",
            same.regressors.len(),
            oracle.trtr.r2,
            oracle.tstr.r2
        ),
    )
}

// ---- 9, 10 ----

fn cleaned_routes_valid(out: &std::path::Path, routes: &RouteDirectory) -> (usize, bool) {
    let cleaned = load_table(&out.join("reconstruct").join(CLEANED_FILE)).unwrap();
    let (o, d) = (cleaned.column(ORIGIN_ID).unwrap(), cleaned.column(DEST_ID).unwrap());
    let ok = (0..cleaned.n_rows()).all(|r| match (o.text(r), d.text(r)) {
        (Some(o), Some(d)) => routes.contains(o, d),
        _ => false,
    });
    (cleaned.n_rows(), ok)
}

fn criterion_9() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut config = ExperimentConfig::preset(5).unwrap();
    config.mock_rows = 5000;
    config.seed = 9;
    let start = Instant::now();
    let run = run_pipeline(&config, dir.path(), &QualityGates::default()).unwrap();
    let el = start.elapsed();
    let report = run.report.unwrap();
    let stat = report.statistical.unwrap().average;
    let fid = report.fidelity.unwrap().average_accuracy;
    let cleaning = run.cleaning.unwrap();
    let routes = load_routes(&dir.path().join("ingest").join("routes.csv")).unwrap();
    let (kept, valid) = cleaned_routes_valid(dir.path(), &routes);
    outcome(
        within(el, 600) && stat >= 0.85 && fid <= 0.80 && cleaning.balances() && valid,
        format!(
            "{:.0}s; statistical {stat:.4}; fidelity accuracy {fid:.4}; cleaning {}→{} balances = {}; {kept} rows on known routes = {valid}",
            el.as_secs_f64(),
            cleaning.input_rows,
            cleaning.output_rows,
            cleaning.balances()
        ),
    )
}

/// Routes of `routes` present in a cleaned table.
fn covered_routes(cleaned: &Table, routes: &RouteDirectory) -> usize {
    let (o, d) = (cleaned.column(ORIGIN_ID).unwrap(), cleaned.column(DEST_ID).unwrap());
    let seen: BTreeSet<(&str, &str)> = (0..cleaned.n_rows()).filter_map(|r| Some((o.text(r)?, d.text(r)?))).collect();
    routes.iter().filter(|(a, b, _)| seen.contains(&(*a, *b))).count()
}

fn criterion_10() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut config = ExperimentConfig::preset(3).unwrap();
    config.mock_rows = 20_000;
    config.tvae.epochs = 100;
    // draw categories from the decoder softmax; argmax is reported below
    config.tvae.stochastic_sampling = true;
    config.seed = 10;
    config.stages = vec![Stage::Diversity];
    let start = Instant::now();
    let run = run_pipeline(&config, dir.path(), &QualityGates::default()).unwrap();
    let el = start.elapsed();
    let div = run.report.unwrap().diversity.unwrap();
    let cov = div.route_coverage.clone().unwrap();
    let dep = div.balance_gap(DEP_LABEL).unwrap_or(f64::INFINITY);
    let arr = div.balance_gap(ARR_LABEL).unwrap_or(f64::INFINITY);

    let routes = load_routes(&dir.path().join("ingest").join("routes.csv")).unwrap();
    let mut model = ModelFile::load(&dir.path().join("fit").join("model.json")).unwrap();
    model.sample_options.stochastic = false;
    let (frame, _) = model.sample(run.sampled_rows, 11).unwrap();
    let rec = reconstruct_frame(
        &frame,
        Some(config.variant),
        &mock::airport_directory(),
        &routes,
        &config.filters,
        &dir.path().join("argmax"),
    )
    .unwrap();
    let argmax_cov = covered_routes(&rec.cleaned, &routes);

    outcome(
        within(el, 1200) && cov.covered == cov.real_routes && cov.real_routes == mock::route_count() && dep <= 10.0 && arr <= 10.0,
        format!(
            "{:.0}s for {} sampled rows; routes {}/{} (missing {:?}, argmax decoding covers {argmax_cov}); delay-label gaps dep {dep:.2}, arr {arr:.2} points",
            el.as_secs_f64(),
            run.sampled_rows,
            cov.covered,
            cov.real_routes,
            cov.missing
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("encoder round trip", criterion_1),
        ("numeric kernels", criterion_2),
        ("copula recovery", criterion_3),
        ("gradient check", criterion_4),
        ("tvae learning", criterion_5),
        ("metric oracles", criterion_6),
        ("fidelity calibration", criterion_7),
        ("utility sanity", criterion_8),
        ("preset 5 on 5000 mock flights", criterion_9),
        ("preset 3 on 20000 mock flights", criterion_10),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|s| s.parse().ok());
    let mut failed = Vec::new();
    for (i, (name, run)) in criteria.into_iter().enumerate() {
        let n = i + 1;
        if only.is_some_and(|o| o != n) {
            continue;
        }
        let o = run();
        println!("{} criterion {n} ({name}): {}", if o.ok { "PASS" } else { "FAIL" }, o.detail);
        if !o.ok {
            failed.push(n);
        }
    }
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
