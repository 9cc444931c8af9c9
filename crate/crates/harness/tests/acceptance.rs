//! End-to-end acceptance checks. Each criterion prints one PASS or FAIL line;
//! the process exits non-zero if any fails.

use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use fedtrade::collection::{check_penalty_condition, PolicyKind};
use fedtrade::market::{compute_scaling, Bid, ConsumerOffer};
use fedtrade::privacy::{
    combined_epsilon, krr_distribution, krr_obfuscate, AggregationMode, AlphabetSpec, PrivacyParam, ReportBatch,
};
use fedtrade::shapley::{shapley_exact, shapley_pruned, Player, ThresholdGame};
use fedtrade::valuation::{ExponentialValuation, PrivacyValuation};
use fedtrade_harness::audit::audit_dir;
use fedtrade_harness::commands::{execute, RunKind};
use fedtrade_harness::config::ScenarioConfig;
use fedtrade_harness::experiments::free_riders::{self, FreeRiderRow};
use fedtrade_harness::experiments::rounds::{self, RoundsRow};
use fedtrade_harness::experiments::timing::{self, TimingRow};
use fedtrade_harness::output::read_csv;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};

type Outcome = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn random_game(rng: &mut ChaCha8Rng, mode: AggregationMode) -> ThresholdGame {
    let n = rng.random_range(1..=12);
    let spec = AlphabetSpec::new(rng.random_range(2..=16)).unwrap();
    let players: Vec<Player> = (0..n)
        .map(|i| {
            let batches = (0..rng.random_range(1..=3))
                .map(|_| ReportBatch::new(rng.random_range(1..=20), rng.random_range(0.05..8.0)).unwrap())
                .collect();
            Player::new(format!("p{i}"), batches)
        })
        .collect();
    let full: Vec<usize> = (0..n).collect();
    let probe = ThresholdGame::new(players.clone(), mode, 1.0, 1.0, spec).unwrap();
    let target = probe.coalition_level(&full).max(0.01) * rng.random_range(0.05..1.05);
    ThresholdGame::new(players, mode, target, rng.random_range(1.0..1000.0), spec).unwrap()
}

fn shapley_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut negative = 0;
    for mode in AggregationMode::ALL {
        for i in 0..1000 {
            let game = random_game(&mut rng, mode);
            let exact = shapley_exact(&game).map_err(|e| e.to_string())?;
            let pruned = shapley_pruned(&game).map_err(|e| e.to_string())?;
            let bits = |v: Vec<f64>| v.into_iter().map(f64::to_bits).collect::<Vec<_>>();
            if bits(exact.values()) != bits(pruned.values()) || exact.pivots != pruned.pivots {
                return Err(format!("{mode} game {i} (n={}) differs", game.len()));
            }
            negative += exact.values().iter().filter(|&&v| v < 0.0).count();
        }
    }
    Ok(format!("3000 games bit-identical ({negative} negative krr shares)"))
}

fn timing_structure(dir: &Path) -> Outcome {
    let config = ScenarioConfig::default();
    execute(RunKind::Timing, &config, None, dir).map_err(|e| e.to_string())?;
    let rows: Vec<TimingRow> = read_csv(&dir.join("timing.csv")).map_err(|e| e.to_string())?;
    let speedups = timing::speedups(&rows);
    let listing: Vec<String> = speedups.iter().map(|s| format!("n={} {:.0}x", s.n, s.speedup)).collect();
    let detail = listing.join(", ");
    if let Some(s) = speedups.iter().find(|s| !s.identical) {
        return Err(format!("shares differ at n={}; {detail}", s.n));
    }
    let monotone = speedups.windows(2).all(|w| w[1].speedup >= w[0].speedup);
    let at_24 = speedups.iter().find(|s| s.n == 24).map_or(0.0, |s| s.speedup);
    ensure(monotone && at_24 >= 50.0 && speedups.len() == config.timing.sizes.len(), detail)
}

fn rounds_reproduction(dir: &Path) -> Outcome {
    let config = ScenarioConfig::default();
    execute(RunKind::Rounds, &config, None, dir).map_err(|e| e.to_string())?;
    let rows: Vec<RoundsRow> = read_csv(&dir.join("rounds.csv")).map_err(|e| e.to_string())?;
    let cells = rounds::summarize(&rows, &config);
    let worst = cells.iter().map(|c| c.success_rate).fold(1.0, f64::min);
    let mut failures = Vec::new();
    for cat in cells.iter().filter(|c| c.policy == PolicyKind::Catalyzing) {
        let non = cells
            .iter()
            .find(|c| c.n == cat.n && c.target == cat.target && c.policy == PolicyKind::NonCatalyzing)
            .ok_or("missing non-catalyzing cell")?;
        if cat.mean_rounds > non.mean_rounds {
            failures.push(format!("n={} target={}: {:.3} > {:.3}", cat.n, cat.target, cat.mean_rounds, non.mean_rounds));
        }
    }
    let detail = format!("{} cells, worst success rate {worst:.2}", cells.len() / 2);
    if !failures.is_empty() {
        return Err(format!("{detail}; catalyzing slower in {}", failures.join("; ")));
    }
    ensure(worst >= 0.95, detail)
}

fn free_rider_reproduction(dir: &Path) -> Outcome {
    let config = ScenarioConfig::default();
    execute(RunKind::FreeRiders, &config, None, dir).map_err(|e| e.to_string())?;
    let rows: Vec<FreeRiderRow> = read_csv(&dir.join("freeriders.csv")).map_err(|e| e.to_string())?;
    let cells = free_riders::summarize(&rows);
    let mut listing = Vec::new();
    let mut ok = config.free_riders.replications >= 100;
    for cat in cells.iter().filter(|c| c.policy == PolicyKind::Catalyzing) {
        let non = cells
            .iter()
            .find(|c| c.n == cat.n && c.delta_f == cat.delta_f && c.policy == PolicyKind::NonCatalyzing)
            .ok_or("missing non-catalyzing cell")?;
        ok &= cat.mean_count <= non.mean_count;
        listing.push(format!("n={} δ={}: {:.2} vs {:.2}", cat.n, cat.delta_f, cat.mean_count, non.mean_count));
    }
    ensure(ok, listing.join(", "))
}

fn composition_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let batch = |rng: &mut ChaCha8Rng| ReportBatch::new(rng.random_range(1..100), rng.random_range(0.01..20.0)).unwrap();
    for i in 0..10_000 {
        let spec = AlphabetSpec::new(rng.random_range(2..64)).unwrap();
        let combine = |bs: &[ReportBatch]| combined_epsilon(bs, spec).map(PrivacyParam::value).map_err(|e| e.to_string());

        let one = batch(&mut rng);
        if (combine(&[one])? - one.epsilon.value()).abs() >= 1e-9 {
            return Err(format!("instance {i}: single-batch identity"));
        }

        let e = rng.random_range(0.01..20.0);
        let same: Vec<ReportBatch> =
            (0..rng.random_range(1..8)).map(|_| ReportBatch::new(rng.random_range(1..100), e).unwrap()).collect();
        if (combine(&same)? - e).abs() >= 1e-9 {
            return Err(format!("instance {i}: idempotence"));
        }

        let bs: Vec<ReportBatch> = (0..rng.random_range(1..8)).map(|_| batch(&mut rng)).collect();
        let out = combine(&bs)?;
        let lo = bs.iter().map(|b| b.epsilon.value()).fold(f64::INFINITY, f64::min);
        let hi = bs.iter().map(|b| b.epsilon.value()).fold(0.0, f64::max);
        if !(lo - 1e-12 <= out && out <= hi + 1e-12) {
            return Err(format!("instance {i}: {out} outside [{lo}, {hi}]"));
        }

        let j = rng.random_range(0..bs.len());
        let mut raised = bs.clone();
        raised[j] = ReportBatch::new(bs[j].points, bs[j].epsilon.value() + rng.random_range(0.0..5.0)).unwrap();
        if combine(&raised)? < out - 1e-12 {
            return Err(format!("instance {i}: raising one parameter lowered the result"));
        }
    }
    Ok("10000 instances".into())
}

fn valuation_round_trip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0.0_f64;
    for i in 0..10_000 {
        let v = ExponentialValuation::new(rng.random_range(0.01..100.0), rng.random_range(0.001..10.0)).unwrap();
        let money = rng.random_range(0.0..50.0_f64).min(600.0 / v.k2);
        let back = v.invert(v.evaluate(money).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        worst = worst.max((back - money).abs());
        if (back - money).abs() >= 1e-9 {
            return Err(format!("instance {i}: {back} vs {money}"));
        }
        if v.evaluate(0.0).map_err(|e| e.to_string())? != 0.0 {
            return Err(format!("instance {i}: evaluate(0) != 0"));
        }
    }
    Ok(format!("10000 instances, worst error {worst:.1e}"))
}

fn total_price(thresholds: &[f64], v: &ExponentialValuation, w: f64) -> f64 {
    thresholds.iter().map(|&t| v.invert(w * t).unwrap()).sum()
}

/// Largest feasible scaling on a 1e3 grid, refined by a second 1e3 grid
/// inside the winning cell.
fn grid_scan(thresholds: &[f64], v: &ExponentialValuation, budget: f64) -> f64 {
    let feasible = |w: f64| total_price(thresholds, v, w) <= budget;
    let last = |from: f64, step: f64| (0..=1000).map(|k| from + k as f64 * step).take_while(|&w| feasible(w)).last();
    let coarse = last(0.0, 1e-3).unwrap_or(0.0);
    if coarse >= 1.0 {
        return 1.0;
    }
    last(coarse, 1e-6).unwrap_or(coarse)
}

fn scaling_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0_f64;
    for i in 0..1000 {
        let v = ExponentialValuation::new(rng.random_range(0.1..10.0), rng.random_range(0.01..2.0)).unwrap();
        let thresholds: Vec<f64> = (0..rng.random_range(1..6)).map(|_| rng.random_range(0.5..200.0)).collect();
        let budget = rng.random_range(0.01..1.2) * total_price(&thresholds, &v, 1.0);
        let bids: Vec<Bid> = thresholds
            .iter()
            .enumerate()
            .map(|(j, &t)| Bid { federation: format!("f{j}").as_str().into(), threshold: t, asking_price: 0.0 })
            .collect();
        let w = compute_scaling(&bids, &ConsumerOffer::new(budget, v).map_err(|e| e.to_string())?);
        if total_price(&thresholds, &v, w) > budget {
            return Err(format!("instance {i}: w*={w} over budget"));
        }
        if w < 1.0 && total_price(&thresholds, &v, w + 1e-9) <= budget {
            return Err(format!("instance {i}: w*={w} not maximal"));
        }
        let oracle = grid_scan(&thresholds, &v, budget);
        worst = worst.max((w - oracle).abs());
        if (w - oracle).abs() > 1e-6 {
            return Err(format!("instance {i}: bisection {w} vs grid {oracle}"));
        }
    }
    Ok(format!("1000 instances, worst gap to grid {worst:.1e}"))
}

/// Deviation bound for each of `tests` simultaneous comparisons so that
/// the whole family has the false-alarm rate of a single 3σ test.
fn family_bound(normal: &Normal, tests: usize) -> f64 {
    let single = 2.0 * normal.cdf(-3.0);
    let each = 1.0 - (1.0 - single).powf(1.0 / tests as f64);
    -normal.inverse_cdf(each / 2.0)
}

fn krr_frequencies() -> Outcome {
    const DRAWS: u32 = 100_000;
    let normal = Normal::standard();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst = 0.0_f64;
    for k in [2, 4, 16] {
        let bound = family_bound(&normal, k as usize);
        for e in [0.5, 3f64.ln(), 5.0] {
            let spec = AlphabetSpec::new(k).unwrap();
            let eps = PrivacyParam::new(e).unwrap();
            let input = rng.random_range(0..k);
            let mut counts = vec![0u32; k as usize];
            for _ in 0..DRAWS {
                counts[krr_obfuscate(input, spec, eps, &mut rng).map_err(|e| e.to_string())? as usize] += 1;
            }
            let probs = krr_distribution(input, spec, eps).map_err(|e| e.to_string())?;
            for (&c, &p) in counts.iter().zip(&probs) {
                let expected = f64::from(DRAWS) * p;
                let z = (f64::from(c) - expected).abs() / (expected * (1.0 - p)).sqrt();
                worst = worst.max(z / bound * 3.0);
                if z > bound {
                    return Err(format!("k={k} eps={e:.3}: count {c}, expected {expected:.0} ({z:.2} sigma)"));
                }
            }
        }
    }
    Ok(format!("9 settings, worst deviation {worst:.2} sigma (family-adjusted)"))
}

fn penalty_checker() -> Outcome {
    let v = ExponentialValuation::new(1.0, 1.0).unwrap();
    let others = 10.0;
    let proportional = |threshold: f64, money: f64| money * threshold / (others + threshold);
    let c = check_penalty_condition(1.0, &v, 0.5, others, proportional).map_err(|e| e.to_string())?;
    let identity = (c.money - v.invert(others + 0.5 * 1.0).map_err(|e| e.to_string())?).abs();
    let detail = format!("lhs={:.4} rhs={:.4} holds={} identity gap {identity:.1e}", c.lhs, c.rhs, c.holds);
    ensure((c.lhs - 0.693).abs() < 1e-3 && (c.rhs - 0.222).abs() < 1e-3 && !c.holds && identity < 1e-9, detail)
}

fn settlement_audit(dir: &Path) -> Outcome {
    execute(RunKind::Simulate, &ScenarioConfig::default(), None, dir).map_err(|e| e.to_string())?;
    let report = audit_dir(dir).map_err(|e| e.to_string())?;
    if !report.passed() {
        return Err(format!("library audit: {:?}", report.violations));
    }
    let output = Command::new(env!("CARGO_BIN_EXE_fedtrade"))
        .args(["audit", "--out"])
        .arg(dir)
        .output()
        .map_err(|e| e.to_string())?;
    ensure(
        output.status.success(),
        format!("{} files, {} deals ({} unmet), cli exit {:?}", report.files.len(), report.deals, report.unmet, output.status.code()),
    )
}

fn main() -> ExitCode {
    let dir = tempfile::tempdir().expect("temporary directory");
    let out = dir.path();
    let criteria: [(&str, &dyn Fn() -> Outcome); 10] = [
        ("pruned Shapley equals exact on random games", &shapley_equivalence),
        ("timing speedup structure", &|| timing_structure(out)),
        ("rounds to target per policy", &|| rounds_reproduction(out)),
        ("free riders per policy", &|| free_rider_reproduction(out)),
        ("combined epsilon properties", &composition_properties),
        ("valuation round trip", &valuation_round_trip),
        ("scaling factor bisection", &scaling_correctness),
        ("kRR report frequencies", &krr_frequencies),
        ("penalty condition checker", &penalty_checker),
        ("settlement audit", &|| settlement_audit(out)),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = check();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("[PASS] {:>2}. {name} ({secs:.1}s): {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("[FAIL] {:>2}. {name} ({secs:.1}s): {detail}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
