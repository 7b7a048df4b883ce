//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits non-zero
//! if any fails.

mod support;

use std::sync::atomic::Ordering;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use statrs::distribution::{Binomial as BinomialDist, DiscreteCDF};

use resume_audit::embedder::cache::{CacheKey, EmbeddingCache};
use resume_audit::embedder::{Embedder, MockEmbedder, RemoteBackend, RemoteConfig, Role};
use resume_audit::namebank::{select_matched, verify_ratio, NameBank, NameGroup};
use resume_audit::report::{emit, Format, Runner};
use resume_audit::retrieval::{select_top, ScoreRow, ScoreTable, VariantRef};
use resume_audit::stats::{chi_square_sf, chi_square_uniform, Verdict};
use support::fixtures::{biased_mock_backend, mini_config, mock_backend, remote_backend, MOCK_NOISE};
use support::oracle;
use support::server::{EchoServer, MODEL};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn run(name: &str, budget: Option<Duration>, check: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let mut o = check();
    let elapsed = start.elapsed();
    if let Some(limit) = budget {
        if elapsed > limit {
            o.passed = false;
            o.detail = format!("{}; exceeded {:?}", o.detail, limit);
        }
    }
    println!(
        "{} {name}: {} ({:.2}s)",
        if o.passed { "PASS" } else { "FAIL" },
        o.detail,
        elapsed.as_secs_f64()
    );
    o.passed
}

fn chi_square_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut worst_stat: f64 = 0.0;
    let mut worst_p: f64 = 0.0;
    let mut failures = 0;
    let mut p_range = (1.0f64, 0.0f64);
    for i in 0..1000 {
        let groups = rng.gen_range(2..=6usize);
        let total = 10f64.powf(rng.gen_range(1.0..5.0)).round() as u64;
        // mostly draws under the null so p-values cover (0, 1); the rest skewed
        let mut weights: Vec<f64> = if i % 4 == 3 {
            (0..groups).map(|_| rng.gen_range(0.2..1.0)).collect()
        } else {
            vec![1.0; groups]
        };
        let sum: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= sum);
        let mut counts = Vec::with_capacity(groups);
        let (mut left, mut mass) = (total, 1.0);
        for (g, w) in weights.iter().enumerate() {
            let c = if g + 1 == groups {
                left
            } else {
                Binomial::new(left, (w / mass).min(1.0)).unwrap().sample(&mut rng)
            };
            counts.push(c);
            left -= c;
            mass -= w;
        }
        if counts.iter().sum::<u64>() == 0 {
            continue;
        }
        let ours = chi_square_uniform(&counts).unwrap();
        let stat = oracle::statistic(&counts);
        let p = oracle::chi_square_sf(stat, groups as u32 - 1);
        let ds = if stat == 0.0 { ours.statistic.abs() } else { ((ours.statistic - stat) / stat).abs() };
        let dp = if ours.p_value == p { 0.0 } else { ((ours.p_value - p) / p.abs().max(ours.p_value.abs())).abs() };
        worst_stat = worst_stat.max(ds);
        worst_p = worst_p.max(dp);
        if ds > 1e-9 || dp > 1e-9 {
            failures += 1;
        }
        if p > 0.0 {
            p_range = (p_range.0.min(p), p_range.1.max(p));
        }
    }
    let c1 = chi_square_sf(3.841, 1);
    let c3 = chi_square_sf(7.815, 3);
    let critical = (c1 - 0.05).abs() <= 5e-4 && (c3 - 0.05).abs() <= 5e-4;
    outcome(
        failures == 0 && critical,
        format!(
            "{failures} of 1000 outside 1e-9 (max rel err stat {worst_stat:.1e}, p {worst_p:.1e}; p spans {:.1e}..{:.3}); sf(3.841,1)={c1:.5} sf(7.815,3)={c3:.5}",
            p_range.0, p_range.1
        ),
    )
}

fn top_k_oracle() -> Outcome {
    let groups = [NameGroup::BF, NameGroup::BM, NameGroup::WF, NameGroup::WM];
    let mut rng = ChaCha8Rng::seed_from_u64(0x709c);
    let mut mismatches = 0;
    let mut all_tie = 0;
    let mut largest = 0;
    for t in 0..10_000 {
        let n = if t % 500 == 0 { 10_000 } else { 10f64.powf(rng.gen_range(0.0..4.0)).round() as usize };
        let style = t % 5;
        if style == 0 {
            all_tie += 1;
        }
        let rows: Vec<ScoreRow> = (0..n)
            .map(|i| ScoreRow {
                variant: VariantRef {
                    base_id: format!("r{:05}", rng.gen_range(0..n.max(2) / 2 + 1)),
                    group: Some(groups[i % 4]),
                    first: Some(format!("n{i}")),
                },
                score: match style {
                    0 => 0.25,
                    1 => rng.gen_range(0..5) as f64 / 4.0 - 0.5,
                    _ => rng.gen_range(-1.0..1.0),
                },
            })
            .collect();
        largest = largest.max(n);
        let per_mille = rng.gen_range(1..=1000usize);
        let table = ScoreTable {
            job_id: format!("j{t}"),
            rows,
        };
        let got = select_top(&table, per_mille as f64 / 1000.0).unwrap();

        let k = ((per_mille * n).div_ceil(1000)).max(1);
        let mut sorted: Vec<&ScoreRow> = table.rows.iter().collect();
        sorted.sort_by(|a, b| {
            b.score.partial_cmp(&a.score).unwrap().then_with(|| {
                let key = |r: &VariantRef| (r.base_id.clone(), r.group.unwrap().as_str(), r.first.clone());
                key(&a.variant).cmp(&key(&b.variant))
            })
        });
        let want: Vec<VariantRef> = sorted[..k].iter().map(|r| r.variant.clone()).collect();
        if got.selected != want || got.cutoff_score != sorted[k - 1].score {
            mismatches += 1;
        }
    }
    outcome(
        mismatches == 0,
        format!("{mismatches} mismatches over 10000 tables ({all_tie} all-tie, largest {largest})"),
    )
}

/// Exact two-sided binomial acceptance region for `n` trials at `p`, total tail mass ≤ 1%.
fn binomial_interval(n: u64, p: f64) -> (u64, u64) {
    let b = BinomialDist::new(p, n).unwrap();
    let lo = (0..=n).find(|&k| b.cdf(k) > 0.005).unwrap();
    let hi = (0..=n).find(|&k| b.sf(k) <= 0.005).unwrap();
    (lo, hi)
}

fn calibration() -> Outcome {
    let mut significant = 0u64;
    let mut total = 0u64;
    for seed in 0..500 {
        let cfg = mini_config("race_gender", seed, "", &mock_backend("mock", 256, MOCK_NOISE));
        let r = Runner::new(&cfg).record_timing(false).run().unwrap().report;
        for t in &r.tests {
            total += 1;
            if t.verdict != Verdict::NoSignificantDifference {
                significant += 1;
            }
        }
    }
    let (lo, hi) = binomial_interval(total, 0.05);
    let rate = significant as f64 / total as f64;
    outcome(
        (lo..=hi).contains(&significant),
        format!(
            "{significant}/{total} significant = {rate:.4}; 99% interval [{:.4}, {:.4}] (500 runs, mock noise {MOCK_NOISE})",
            lo as f64 / total as f64,
            hi as f64 / total as f64
        ),
    )
}

fn power() -> Outcome {
    let (mut favored, mut against, mut total) = (0, 0, 0);
    let mut pooled = 0;
    for seed in 0..200 {
        let backends = biased_mock_backend("mock", 256, MOCK_NOISE, "[\"WF\", \"WM\"]", 0.2);
        let cfg = mini_config("race_gender", seed, "", &backends);
        let r = Runner::new(&cfg).record_timing(false).run().unwrap().report;
        for t in r.tests.iter().filter(|t| t.comparison == "race") {
            total += 1;
            pooled = t.counts.iter().sum::<u64>();
            match t.verdict {
                Verdict::FavorsA => favored += 1,
                Verdict::FavorsB => against += 1,
                _ => {}
            }
        }
    }
    let frac = favored as f64 / total as f64;
    outcome(
        frac >= 0.95 && against == 0,
        format!(
            "{favored}/{total} race tests favor the injected White group ({:.1}%), {against} favor Black; pool 1600 per job, {pooled} selections pooled per occupation",
            frac * 100.0
        ),
    )
}

fn validation() -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for (seed, noise) in [(1, MOCK_NOISE), (2, MOCK_NOISE), (3, 0.0)] {
        let cfg = mini_config("validation", seed, "", &mock_backend("mock", 256, noise));
        let r = Runner::new(&cfg).run().unwrap().report;
        for v in &r.validation {
            ok &= v.gap.mean_gap > 0.0 && v.gap.test.p_value < 1e-3;
            lines.push(format!("{}: gap {:.4} p {:.1e}", v.occupation_code, v.gap.mean_gap, v.gap.test.p_value));
        }
    }
    outcome(ok, lines.join("; "))
}

fn name_matching() -> Outcome {
    let bank = NameBank::bundled();
    let wm = verify_ratio(bank.group(NameGroup::WM), bank.group(NameGroup::BM)).unwrap();
    let exact = verify_ratio(bank.group(NameGroup::WmExact), bank.group(NameGroup::BM)).unwrap();
    let pairs = select_matched(&bank, NameGroup::BM, NameGroup::WM, 5.5, 20).unwrap();
    let dewayne = pairs.iter().find(|(r, _)| r.first == "Dewayne");
    let (partner, ratio) = match dewayne {
        Some((r, t)) => (t.first.clone(), t.corpus_freq as f64 / r.corpus_freq as f64),
        None => (String::from("<none>"), f64::NAN),
    };
    let ok = (4.0..=7.5).contains(&wm)
        && (0.8..=1.25).contains(&exact)
        && partner == "Huey"
        && (ratio - 5.58).abs() <= 0.01;
    outcome(
        ok,
        format!("WM/BM {wm:.3}, WM_exact/BM {exact:.3}, Dewayne -> {partner} ratio {ratio:.3}"),
    )
}

fn determinism() -> Outcome {
    let cache = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    let cfg = mini_config("intersectional", 42, "", &mock_backend("mock", 256, MOCK_NOISE));
    let mut files = Vec::new();
    for i in 0..2 {
        let r = Runner::new(&cfg)
            .with_cache_dir(Some(cache.path().into()))
            .record_timing(false)
            .run()
            .unwrap()
            .report;
        let dir = out.path().join(format!("run{i}"));
        emit(&r, &[Format::Json], &dir).unwrap();
        files.push(std::fs::read(dir.join("report.json")).unwrap());
    }
    let cached = walk_count(cache.path());
    outcome(
        files[0] == files[1] && cached > 0,
        format!("report.json {} bytes, identical: {}; {cached} cache entries", files[0].len(), files[0] == files[1]),
    )
}

fn walk_count(dir: &std::path::Path) -> usize {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk_count(&p)
            } else {
                1
            }
        })
        .sum()
}

fn cache_and_protocol() -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;

    // bit-identical round trip, including non-finite and subnormal values
    let dir = tempfile::tempdir().unwrap();
    let cache = EmbeddingCache::open(dir.path()).unwrap();
    let values = [0.6f32, -0.8, f32::MIN_POSITIVE / 3.0, f32::NAN, f32::INFINITY, -0.0];
    let key = CacheKey::new("b", Role::Document, "round trip");
    cache.put(&key, &values).unwrap();
    let back = cache.get(&key, values.len()).unwrap();
    let identical = back.iter().map(|v| v.to_bits()).eq(values.iter().map(|v| v.to_bits()));
    ok &= identical;
    notes.push(format!("put/get bit-identical: {identical}"));

    // wire schema against the echo fixture
    let server = EchoServer::start(2);
    server.set_vector("three four", vec![3.0, 4.0]);
    let mut rc = RemoteConfig::new(&server.url, MODEL);
    rc.backoff_ms = 0;
    let remote = Arc::new(RemoteBackend::new("echo", 2, rc).unwrap());
    let health = remote.health().unwrap();
    server.fail_next(&[503]);
    let v = Embedder::new(remote.clone(), None)
        .embed_batch(&["three four".to_string()], Role::Query)
        .unwrap();
    let body = server.state.last_body.lock().unwrap().clone().unwrap();
    let wire = health.status == "ok"
        && health.dim == 2
        && v[0].values() == [0.6, 0.8]
        && body["role"] == "query"
        && body["model"] == MODEL
        && remote.requests_sent() == 2;
    ok &= wire;
    notes.push(format!(
        "echo [3,4] -> {:?}, health dim {}, retry after 503: {}",
        v[0].values(),
        health.dim,
        remote.requests_sent() == 2
    ));

    // a cached pipeline re-run sends nothing
    let dim = 64;
    let mock_server = EchoServer::start_with(dim, Some(MockEmbedder::new("m", 3, dim, 0.0, None).unwrap()));
    let cache_dir = tempfile::tempdir().unwrap();
    let cfg = mini_config("race_gender", 3, "", &remote_backend("remote", dim, &mock_server.url, ""));
    Runner::new(&cfg).with_cache_dir(Some(cache_dir.path().into())).run().unwrap();
    let first = mock_server.requests();
    let texts_first = mock_server.state.texts_seen.load(Ordering::SeqCst);
    Runner::new(&cfg).with_cache_dir(Some(cache_dir.path().into())).run().unwrap();
    let rerun = mock_server.requests() - first;
    ok &= first > 0 && rerun == 0;
    notes.push(format!("first run {first} requests ({texts_first} texts), cached re-run {rerun}"));

    outcome(ok, notes.join("; "))
}

fn main() {
    let results = [
        run("chi-square oracle", Some(Duration::from_secs(10)), chi_square_oracle),
        run("top-k oracle", Some(Duration::from_secs(30)), top_k_oracle),
        run("calibration (no false bias)", Some(Duration::from_secs(300)), calibration),
        run("power (injected bias detected)", Some(Duration::from_secs(180)), power),
        run("validation experiment", None, validation),
        run("name matching", None, name_matching),
        run("determinism", None, determinism),
        run("cache and protocol", None, cache_and_protocol),
    ];
    let failed = results.iter().filter(|p| !**p).count();
    println!("{} of {} acceptance criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
