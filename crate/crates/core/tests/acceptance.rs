//! Acceptance gate: one PASS/FAIL line per criterion, non-zero exit on any failure.

use std::process::ExitCode;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spinparity::montecarlo::{exact_stats, exhaustive_branches, run_trial, run_trials, Overrides, TrialOutcome};
use spinparity::outcome::SwapPolicy;
use spinparity::protocols::{table1_signature, MergeOptions};
use spinparity::state::BellCoefficients;
use spinparity::{BellLabel, GrowthPlan, GrowthStrategy, ProtocolSpec, PureState, Scenario, Seed};

const SEED: Seed = Seed(0x5eed_2024);
const DEPTH: usize = 256;

/// Accumulates anticorrelation violations seen by every suite.
#[derive(Default)]
struct Gate {
    violations: u64,
    snapshots: u64,
}

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn table1(gate: &mut Gate) -> Check {
    // (label, D1 D2 at t, D1 D2 at 2t)
    let expected = [
        (BellLabel::PsiPlus, (false, true), (false, true)),
        (BellLabel::PsiMinus, (false, true), (true, false)),
        (BellLabel::PhiPlus, (true, false), (true, false)),
        (BellLabel::PhiMinus, (true, false), (false, true)),
    ];
    let n = 10_000;
    for (label, t, t2) in expected {
        ensure(table1_signature(label) == (t, t2), || format!("{label}: table entry differs"))?;
        let scenario = Scenario::new(ProtocolSpec::BellQnd { input: label.state() });
        let stats = run_trials(&scenario, n, SEED).map_err(|e| e.to_string())?;
        gate.violations += stats.anticorrelation_violations;
        gate.snapshots += stats.parity_snapshots;
        ensure(stats.frequency(label.name()) == 1.0, || format!("{label}: identified in {:?}", stats.outcomes))?;
        let f = stats.min_fidelity.unwrap_or(0.0);
        ensure(f >= 1.0 - 1e-10, || format!("{label}: min restore fidelity {f}"))?;
        for i in 0..20 {
            let rec = run_trial(&scenario, SEED, i).map_err(|e| e.to_string())?;
            if let TrialOutcome::Bell(r) = rec.outcome {
                ensure(r.signature == (t, t2), || format!("{label}: trial {i} printed {:?}", r.signature))?;
            }
        }
    }
    Ok(format!("4 inputs x {n} trials identified, fidelity >= 1-1e-10"))
}

fn forced_swaps(gate: &mut Gate) -> Check {
    let mut cases = 0;
    for label in BellLabel::ALL {
        let scenario = Scenario::new(ProtocolSpec::BellQnd { input: label.state() });
        let paths = exhaustive_branches(&scenario, DEPTH).map_err(|e| e.to_string())?;
        let mut seen = Vec::new();
        for path in paths {
            let TrialOutcome::Bell(rec) = path.outcome else { return Err("not a Bell record".into()) };
            gate.snapshots += rec.log.len() as u64;
            gate.violations += rec.log.iter().filter(|s| !s.is_anticorrelated()).count() as u64;
            let [s1, s2] = rec.swaps;
            ensure(rec.label == label, || format!("{label} with swaps {s1},{s2} read as {}", rec.label))?;
            ensure(rec.restored, || format!("{label} with swaps {s1},{s2} not restored"))?;
            seen.push(rec.swaps);
        }
        seen.sort();
        seen.dedup();
        ensure(seen.len() == 4, || format!("{label}: enumerated swap patterns {seen:?}"))?;
        cases += seen.len();
    }
    Ok(format!("{cases} swap combinations give identical labels and restored states"))
}

fn born_statistics(gate: &mut Gate) -> Check {
    let probs = [0.4, 0.3, 0.2, 0.1];
    let [a, b, c, d] = probs.map(|p: f64| Complex64::new(p.sqrt(), 0.0));
    let input = BellCoefficients { a, b, c, d }.to_state().map_err(|e| e.to_string())?;
    let decomposed = input.bell_decompose(0, 1).map_err(|e| e.to_string())?.probabilities();
    for (got, want) in decomposed.iter().zip(probs) {
        ensure((got - want).abs() < 1e-12, || format!("input weights {decomposed:?}"))?;
    }
    let n = 100_000u64;
    let stats = run_trials(&Scenario::new(ProtocolSpec::BellGenerate { input }), n, SEED).map_err(|e| e.to_string())?;
    gate.violations += stats.anticorrelation_violations;
    gate.snapshots += stats.parity_snapshots;
    ensure(stats.success.count == n, || format!("post-measurement state mismatch in {:?}", stats.failures))?;
    let mut worst: f64 = 0.0;
    for (label, q) in BellLabel::ALL.into_iter().zip(probs) {
        let freq = stats.frequency(label.name());
        let sigma = (q * (1.0 - q) / n as f64).sqrt();
        worst = worst.max((freq - q).abs() / sigma);
        ensure((freq - q).abs() <= 4.0 * sigma, || format!("{label}: frequency {freq} vs {q}"))?;
    }
    Ok(format!("N={n}, worst deviation {worst:.2} sigma"))
}

fn ghz3_scaling(gate: &mut Gate) -> Check {
    let n = 100_000u64;
    let mut parts = Vec::new();
    for m in 1..=4u32 {
        let scenario = Scenario::new(ProtocolSpec::Ghz3 { max_rounds: m });
        let want = 1.0 - 0.5f64.powi(m as i32);
        let exact = exact_stats(&scenario, DEPTH).map_err(|e| e.to_string())?;
        gate.violations += exact.anticorrelation_violations;
        gate.snapshots += exact.parity_snapshots;
        ensure((exact.success_probability - want).abs() < 1e-9, || {
            format!("m={m}: exact {} vs {want}", exact.success_probability)
        })?;
        let stats = run_trials(&scenario, n, SEED).map_err(|e| e.to_string())?;
        gate.violations += stats.anticorrelation_violations;
        gate.snapshots += stats.parity_snapshots;
        ensure(stats.success.contains(want), || {
            format!(
                "m={m}: sampled {} outside [{}, {}]",
                stats.success.frequency, stats.success.ci_low, stats.success.ci_high
            )
        })?;
        let off_class = exact.failures.contains_key("success_not_ghz_class")
            || stats.failures.contains_key("success_not_ghz_class");
        ensure(!off_class, || format!("m={m}: a successful run ended outside the GHZ class"))?;
        let f = stats.min_fidelity.unwrap_or(1.0).min(exact.min_fidelity.unwrap_or(1.0));
        ensure(f >= 1.0 - 1e-9, || format!("m={m}: GHZ fidelity {f}"))?;
        for round in 1..=m {
            if let Some((reached, p)) = stats.conditional_round_success(round) {
                let sigma = (0.25 / reached as f64).sqrt();
                ensure((p - 0.5).abs() <= 4.0 * sigma, || format!("m={m}: round {round} success {p}"))?;
            }
        }
        parts.push(format!("m={m}:{:.4}", stats.success.frequency));
    }
    Ok(format!("exact 1-2^-m, sampled {}", parts.join(" ")))
}

fn growth(gate: &mut Gate, strategy: GrowthStrategy, cases: &[(usize, i32)]) -> Check {
    let mut parts = Vec::new();
    for &(n, exponent) in cases {
        let plan = GrowthPlan { strategy, n, max_rounds: 1 };
        let scenario = Scenario::new(ProtocolSpec::GhzN { plan, options: MergeOptions::default() });
        let exact = exact_stats(&scenario, DEPTH).map_err(|e| e.to_string())?;
        gate.violations += exact.anticorrelation_violations;
        gate.snapshots += exact.parity_snapshots;
        let want = 0.5f64.powi(exponent);
        ensure((exact.success_probability - want).abs() < 1e-9, || {
            format!("n={n}: exact {} vs {want}", exact.success_probability)
        })?;
        ensure(!exact.failures.contains_key("success_not_ghz_class"), || format!("n={n}: non-GHZ success"))?;
        parts.push(format!("n={n}:{:.9}", exact.success_probability));
    }
    Ok(parts.join(" "))
}

fn random_state(rng: &mut ChaCha8Rng, n: usize) -> PureState {
    let amps = (0..1 << n).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
    PureState::normalized(amps).expect("nonzero")
}

fn engine_properties() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut cases = 0;
    for _ in 0..200 {
        let n = rng.gen_range(2..=6);
        let psi = random_state(&mut rng, n);
        let q1 = rng.gen_range(0..n);
        let q2 = (q1 + rng.gen_range(1..n)) % n;
        let gates = [psi.apply_hadamard(q1), psi.apply_x(q1), psi.apply_z(q1), psi.apply_swap(q1, q2)];
        for g in gates {
            let g = g.map_err(|e| e.to_string())?;
            ensure((g.norm_sqr() - 1.0).abs() < 1e-12, || format!("norm drift {}", g.norm_sqr()))?;
        }
        let twice = psi.apply_hadamard(q1).and_then(|s| s.apply_hadamard(q1)).map_err(|e| e.to_string())?;
        ensure(twice.fidelity_up_to_phase(&psi).unwrap() > 1.0 - 1e-12, || "H·H is not identity".into())?;
        let swap2 = psi.apply_swap(q1, q2).and_then(|s| s.apply_swap(q1, q2)).map_err(|e| e.to_string())?;
        ensure(swap2 == psi || swap2.fidelity_up_to_phase(&psi).unwrap() > 1.0 - 1e-12, || "SWAP·SWAP".into())?;
        let p = psi.parallel_probability(q1, q2).map_err(|e| e.to_string())?;
        let mut total = 0.0;
        for outcome in [spinparity::ParityOutcome::Parallel, spinparity::ParityOutcome::Antiparallel] {
            let (w, post) = psi.project_onto(q1, q2, outcome).map_err(|e| e.to_string())?;
            total += w;
            ensure((post.norm_sqr() - 1.0).abs() < 1e-12, || "projected state not normalized".into())?;
        }
        ensure((total - 1.0).abs() < 1e-12 && (0.0..=1.0).contains(&p), || format!("parity weights sum {total}"))?;
        cases += 1;
    }
    // H⊗H on the Bell basis
    let rows = [
        (BellLabel::PhiPlus, BellLabel::PhiPlus, 1.0),
        (BellLabel::PhiMinus, BellLabel::PsiPlus, 1.0),
        (BellLabel::PsiPlus, BellLabel::PhiMinus, 1.0),
        (BellLabel::PsiMinus, BellLabel::PsiMinus, -1.0),
    ];
    for (from, to, sign) in rows {
        let out = from.state().apply_hadamard(0).and_then(|s| s.apply_hadamard(1)).map_err(|e| e.to_string())?;
        let overlap = to.state().inner(&out).map_err(|e| e.to_string())?;
        ensure((overlap - Complex64::new(sign, 0.0)).norm() < 1e-12, || format!("H⊗H {from} -> {overlap}"))?;
    }
    // determinism across thread counts and repeated runs
    let scenario = Scenario::new(ProtocolSpec::GhzN {
        plan: GrowthPlan { strategy: GrowthStrategy::PairMerge, n: 6, max_rounds: 1 },
        options: MergeOptions::default(),
    })
    .with_overrides(Overrides { swap_policy: SwapPolicy::Random, parities: Vec::new() });
    let run_in = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .expect("thread pool")
            .install(|| run_trials(&scenario, 2_000, SEED))
    };
    let one = run_in(1).map_err(|e| e.to_string())?;
    let four = run_in(4).map_err(|e| e.to_string())?;
    let again = run_in(4).map_err(|e| e.to_string())?;
    ensure(one == four && four == again, || "seeded runs differ across schedules".into())?;
    Ok(format!("{cases} random cases, Bell rows, seeded determinism"))
}

fn main() -> ExitCode {
    let mut gate = Gate::default();
    let mut results: Vec<(&str, Check)> = vec![
        ("table1_signatures", table1(&mut gate)),
        ("forced_swap_invariance", forced_swaps(&mut gate)),
        ("born_statistics", born_statistics(&mut gate)),
        ("ghz3_round_scaling", ghz3_scaling(&mut gate)),
        ("pair_merge_success", growth(&mut gate, GrowthStrategy::PairMerge, &[(3, 1), (4, 1), (5, 2), (6, 2), (8, 3)])),
        ("sequential_success", growth(&mut gate, GrowthStrategy::Sequential, &[(3, 1), (4, 2), (5, 3)])),
    ];
    let anticorrelation = if gate.snapshots == 0 {
        Err("no parity windows observed".to_string())
    } else if gate.violations == 0 {
        Ok(format!("0 violations over {} snapshots", gate.snapshots))
    } else {
        Err(format!("{} violations over {} snapshots", gate.violations, gate.snapshots))
    };
    results.push(("detector_anticorrelation", anticorrelation));
    results.push(("engine_properties", engine_properties()));

    let mut failed = 0;
    for (i, (name, result)) in results.iter().enumerate() {
        match result {
            Ok(detail) => println!("PASS {} {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {} {name}: {detail}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
