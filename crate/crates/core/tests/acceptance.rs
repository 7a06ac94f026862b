//! Acceptance suite. Every test writes one `criterion N ... PASS|FAIL` line
//! to stderr before asserting. The line goes straight to the stream rather
//! than through `eprintln!`, so it shows up even under output capture.

use std::io::Write;
use std::time::{Duration, Instant};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dicoss::correlation::{LaplacianModel, MixtureWeights};
use dicoss::entropy::{entropy_decode, entropy_encode, SymbolAlphabet};
use dicoss::pipeline::{run_experiment, Codec, ExperimentConfig, ExperimentResult, Recovery};
use dicoss::quantization::{reconstruct_multihypothesis, QuantInterval};
use dicoss::ramis::{prox_weighted_nl1, ramis_run, update_weights, SiSet, WeightState};
use dicoss::rate_control::Mode;
use dicoss::sensing::{generate_ensemble, make_matrix, MeasurementMatrix, SourceConfig};
use dicoss::slepian_wolf::{binary_entropy, build_ladder, sw_decode, sw_encode, SoftInput};
use dicoss::solvers::{relative_error, solve_l1, SolverConfig};

fn report(id: u32, name: &str, pass: bool, detail: &str, elapsed: Duration) {
    let line = format!(
        "criterion {id} {name}: {} ({detail}; {:.1}s)\n",
        if pass { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64()
    );
    let _ = std::io::stderr().write_all(line.as_bytes());
}

// ---------------------------------------------------------------- 1

fn scalar_objective(x: f64, v: f64, gamma: f64, pairs: &[(f64, f64)]) -> f64 {
    0.5 * (x - v) * (x - v) + gamma * pairs.iter().map(|&(b, c)| c * (x - b).abs()).sum::<f64>()
}

/// Minimizer on the 1e-6 grid. The objective is convex, so a 1e-3 grid
/// pins the minimizer to within one coarse step and the fine grid only
/// needs to cover that bracket.
fn grid_minimizer(v: f64, gamma: f64, pairs: &[(f64, f64)]) -> f64 {
    let lo = pairs.iter().map(|p| p.0).fold(v, f64::min);
    let hi = pairs.iter().map(|p| p.0).fold(v, f64::max);
    let scan = |lo: f64, hi: f64, step: f64| {
        let count = ((hi - lo) / step).ceil() as usize;
        (0..=count)
            .map(|k| (lo + k as f64 * step).min(hi))
            .min_by(|a, b| scalar_objective(*a, v, gamma, pairs).total_cmp(&scalar_objective(*b, v, gamma, pairs)))
            .unwrap()
    };
    let coarse = scan(lo, hi, 1e-3);
    scan((coarse - 2e-3).max(lo), (coarse + 2e-3).min(hi), 1e-6)
}

#[test]
fn criterion_1_prox_vs_grid() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let n = 4;
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let others = rng.random_range(1..=4);
        let signals: Vec<Vec<f64>> = (0..others)
            .map(|_| (0..n).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let si = SiSet::with_signals(n, signals).unwrap();
        let weights = WeightState {
            w: (0..si.len())
                .map(|_| (0..n).map(|_| rng.random_range(0.0..2.0)).collect())
                .collect(),
            beta: (0..si.len()).map(|_| rng.random_range(0.0..1.0)).collect(),
        };
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let gamma = rng.random_range(0.05..1.5);
        let got = prox_weighted_nl1(&v, &si, &weights, gamma);
        for i in 0..n {
            let pairs: Vec<(f64, f64)> = si
                .signals()
                .iter()
                .zip(&weights.w)
                .zip(&weights.beta)
                .map(|((xp, wp), beta)| (xp[i], beta * wp[i]))
                .collect();
            worst = worst.max((got[i] - grid_minimizer(v[i], gamma, &pairs)).abs());
        }
    }
    let elapsed = start.elapsed();
    let pass = worst <= 1e-5 && elapsed < Duration::from_secs(10);
    report(
        1,
        "prox vs 1e-6 grid",
        pass,
        &format!("max |diff| {worst:.2e} over 1000 instances of {n} coordinates"),
        elapsed,
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 2

/// `argmin ½(x − v)² + γ Σ c|x − b|` by enumerating breakpoints and the
/// stationary point of every linear-slope piece.
fn prox_by_enumeration(v: f64, gamma: f64, pairs: &[(f64, f64)]) -> f64 {
    let mut sorted = pairs.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut candidates: Vec<f64> = sorted.iter().map(|p| p.0).collect();
    for k in 0..=sorted.len() {
        let slope: f64 = sorted.iter().enumerate().map(|(i, &(_, c))| if i < k { c } else { -c }).sum();
        candidates.push(v - gamma * slope);
    }
    candidates
        .into_iter()
        .min_by(|a, b| scalar_objective(*a, v, gamma, pairs).total_cmp(&scalar_objective(*b, v, gamma, pairs)))
        .unwrap()
}

fn h_objective(a: &MeasurementMatrix, y: &[f64], x: &[f64], si: &SiSet, w: &WeightState, lambda: f64) -> f64 {
    let mut r = vec![0.0; a.rows()];
    a.apply(x, &mut r);
    let fit: f64 = r.iter().zip(y).map(|(r, y)| (r - y) * (r - y)).sum();
    let mut g = 0.0;
    for ((xp, wp), beta) in si.signals().iter().zip(&w.w).zip(&w.beta) {
        g += beta * x.iter().zip(xp).zip(wp).map(|((x, p), w)| w * (x - p).abs()).sum::<f64>();
    }
    0.5 * fit + lambda * g
}

/// 5·10⁴ proximal subgradient steps on `H` with frozen weights: a plain
/// gradient step on the quadratic, then the nonsmooth term by enumeration.
fn subgradient_oracle(a: &MeasurementMatrix, y: &[f64], si: &SiSet, w: &WeightState, lambda: f64) -> f64 {
    let n = a.cols();
    let dense: Vec<Vec<f64>> = (0..n).map(|j| a.column(j)).collect();
    let lip: f64 = dense.iter().map(|c| c.iter().map(|v| v * v).sum::<f64>()).sum();
    let step = 1.0 / lip;
    let mut x = vec![0.0; n];
    let mut best = f64::INFINITY;
    let mut r = vec![0.0; a.rows()];
    for _ in 0..50_000 {
        a.apply(&x, &mut r);
        r.iter_mut().zip(y).for_each(|(r, y)| *r -= y);
        for i in 0..n {
            let g: f64 = dense[i].iter().zip(&r).map(|(c, r)| c * r).sum();
            let pairs: Vec<(f64, f64)> = si
                .signals()
                .iter()
                .zip(&w.w)
                .zip(&w.beta)
                .map(|((xp, wp), beta)| (xp[i], beta * wp[i]))
                .collect();
            x[i] = prox_by_enumeration(x[i] - step * g, step * lambda, &pairs);
        }
        best = best.min(h_objective(a, y, &x, si, w, lambda));
    }
    best
}

#[test]
fn criterion_2_ramis_objective_vs_oracle() {
    let start = Instant::now();
    let (n, m) = (16, 8);
    let mut worst: f64 = 0.0;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(200 + seed);
        let mut x = vec![0.0; n];
        for i in sample(&mut rng, n, 3) {
            x[i] = rng.random_range(1.0..4.0);
        }
        let near = |rng: &mut ChaCha8Rng, spread: f64| -> Vec<f64> {
            x.iter().map(|v| v + spread * rng.random_range(-1.0..1.0)).collect()
        };
        let si = SiSet::with_signals(n, [near(&mut rng, 0.2), near(&mut rng, 0.5)]).unwrap();
        let a = make_matrix(m, n, 300 + seed).unwrap();
        let mut y = vec![0.0; m];
        a.apply(&x, &mut y);
        let cfg = SolverConfig {
            tol: 1e-12,
            max_iters: 200_000,
            ..SolverConfig::default()
        };
        let out = ramis_run(&y, &a, &si, &cfg, true).unwrap();
        let ours = h_objective(&a, &y, &out.result.solution, &si, &out.weights, out.lambda);
        let oracle = subgradient_oracle(&a, &y, &si, &out.weights, out.lambda);
        worst = worst.max((ours - oracle).abs() / oracle.abs().max(f64::MIN_POSITIVE));
    }
    let elapsed = start.elapsed();
    let pass = worst <= 1e-4 && elapsed < Duration::from_secs(60);
    report(
        2,
        "RAMIS objective vs subgradient oracle",
        pass,
        &format!("worst relative gap {worst:.2e} over 20 seeds"),
        elapsed,
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 3

#[test]
fn criterion_3_weight_identities() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let n = rng.random_range(1..60);
        let count = rng.random_range(0..5);
        let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            (0..n)
                .map(|_| if rng.random_bool(0.5) { 0.0 } else { rng.random_range(-5.0..5.0) })
                .collect()
        };
        let x = draw(&mut rng);
        let others: Vec<Vec<f64>> = (0..count).map(|_| draw(&mut rng)).collect();
        let si = SiSet::with_signals(n, others).unwrap();
        let eps = 10f64.powf(rng.random_range(-4.0..1.0));
        let ws = update_weights(&x, &si, eps);
        for w in &ws.w {
            worst = worst.max((w.iter().sum::<f64>() - n as f64).abs());
        }
        worst = worst.max((ws.beta.iter().sum::<f64>() - 1.0).abs());
    }
    let elapsed = start.elapsed();
    let pass = worst <= 1e-9;
    report(3, "weight identities", pass, &format!("max deviation {worst:.2e} over 10^4 updates"), elapsed);
    assert!(pass);
}

// ---------------------------------------------------------------- 4

/// Posterior mean over `[lo, hi)` by a 10⁵-point trapezoid rule on the
/// mixture density, rescaled by its peak log value.
fn trapezoid_mean(lo: f64, hi: f64, sis: &[(f64, LaplacianModel)], u: &[f64]) -> f64 {
    let points = 100_000;
    let h = (hi - lo) / (points - 1) as f64;
    let log_terms = |y: f64| -> Vec<f64> {
        sis.iter()
            .zip(u)
            .map(|(&(c, model), &w)| w.ln() + (0.5 * model.alpha()).ln() - model.alpha() * (y - c).abs())
            .collect()
    };
    let peak = sis
        .iter()
        .flat_map(|&(c, _)| [lo, hi, c.clamp(lo, hi)])
        .flat_map(log_terms)
        .fold(f64::NEG_INFINITY, f64::max);
    let (mut num, mut den) = (0.0, 0.0);
    for k in 0..points {
        let y = lo + k as f64 * h;
        let weight = if k == 0 || k == points - 1 { 0.5 } else { 1.0 };
        let f: f64 = log_terms(y).into_iter().map(|l| (l - peak).exp()).sum();
        num += weight * y * f;
        den += weight * f;
    }
    num / den
}

#[test]
fn criterion_4_multihypothesis_vs_quadrature() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let lo = rng.random_range(-3.0..3.0);
        let width = 10f64.powf(rng.random_range(-2.0..0.0));
        let hi = lo + width;
        let count = rng.random_range(1..=3);
        let sis: Vec<(f64, LaplacianModel)> = (0..count)
            .map(|_| {
                (
                    rng.random_range(lo - 2.0..hi + 2.0),
                    LaplacianModel::new(10f64.powf(rng.random_range(-1.0..2.0))),
                )
            })
            .collect();
        let raw: Vec<f64> = (0..count).map(|_| rng.random_range(0.05..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let u: Vec<f64> = raw.iter().map(|v| v / total).collect();
        let got = reconstruct_multihypothesis(
            QuantInterval { lower: lo, upper: hi },
            &sis,
            &MixtureWeights::new(u.clone()).unwrap(),
        )
        .unwrap();
        let expected = trapezoid_mean(lo, hi, &sis, &u);
        worst = worst.max((got - expected).abs() / expected.abs().max(width));
    }
    let elapsed = start.elapsed();
    let pass = worst <= 1e-6;
    report(
        4,
        "multi-hypothesis closed form vs quadrature",
        pass,
        &format!("max relative disagreement {worst:.2e} over 1000 configurations"),
        elapsed,
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 5

#[test]
fn criterion_5_codec_losslessness() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut entropy_failures = 0;
    for _ in 0..1000 {
        let bits = rng.random_range(1..=8u8);
        let alphabet = SymbolAlphabet::for_bit_depth(bits);
        let len = rng.random_range(0..600);
        let skew = rng.random_range(1..=4);
        let symbols: Vec<u32> = (0..len)
            .map(|_| (0..skew).map(|_| rng.random_range(0..alphabet.size())).min().unwrap())
            .collect();
        let ok = entropy_encode(&symbols, alphabet)
            .and_then(|bs| entropy_decode(&bs, symbols.len(), alphabet))
            .is_ok_and(|d| d == symbols);
        entropy_failures += usize::from(!ok);
    }

    let (mut sw_failures, mut lies, mut below_full) = (0, 0, 0);
    let ladders: Vec<_> = [64, 128, 300, 396].iter().map(|&m| build_ladder(m, m as u64).unwrap()).collect();
    for _ in 0..1000 {
        let ladder = &ladders[rng.random_range(0..ladders.len())];
        let m = ladder.block_length();
        let plane: Vec<u8> = (0..m).map(|_| rng.random_range(0..2u8)).collect();
        let p: f64 = rng.random_range(0.0..0.3);
        let side: Vec<u8> = plane.iter().map(|&b| b ^ u8::from(rng.random_bool(p))).collect();
        // sometimes overconfident LLRs, to provoke wrong codewords
        let mag = if rng.random_bool(0.3) { 30.0 } else { ((1.0 - p.max(1e-3)) / p.max(1e-3)).ln() };
        let enc = sw_encode(&plane, ladder).unwrap();
        let out = sw_decode(&enc, &SoftInput::from_bits(&side, mag), ladder).unwrap();
        sw_failures += usize::from(!out.success || out.bits != plane);
        lies += usize::from(out.success && out.bits != plane);
        below_full += usize::from(out.syndromes_used < m);
    }
    let elapsed = start.elapsed();
    let pass = entropy_failures == 0 && sw_failures == 0 && lies == 0;
    report(
        5,
        "codec losslessness",
        pass,
        &format!(
            "entropy failures {entropy_failures}/1000, SW failures {sw_failures}/1000, false successes {lies}, \
             {below_full} SW decodes below rate 1"
        ),
        elapsed,
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 6

#[test]
fn criterion_6_sw_rate_sanity() {
    let start = Instant::now();
    let m = 1584;
    let ladder = build_ladder(m, 606).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut means = Vec::new();
    let mut pass = true;
    for p in [0.01f64, 0.05, 0.10] {
        let mag = ((1.0 - p) / p).ln();
        let mut total = 0.0;
        for _ in 0..50 {
            let plane: Vec<u8> = (0..m).map(|_| rng.random_range(0..2u8)).collect();
            let side: Vec<u8> = plane.iter().map(|&b| b ^ u8::from(rng.random_bool(p))).collect();
            let enc = sw_encode(&plane, &ladder).unwrap();
            let out = sw_decode(&enc, &SoftInput::from_bits(&side, mag), &ladder).unwrap();
            pass &= out.success && out.bits == plane;
            total += out.rate_used;
        }
        let mean = total / 50.0;
        pass &= mean <= binary_entropy(p) + 0.20;
        means.push(format!("p={p}: {mean:.3} vs bound {:.3}", binary_entropy(p) + 0.20));
    }
    let elapsed = start.elapsed();
    pass &= elapsed < Duration::from_secs(300);
    report(6, "SW rate sanity", pass, &means.join(", "), elapsed);
    assert!(pass);
}

// ---------------------------------------------------------------- 7, 8

fn sparse_source(n: usize, k: usize, seed: u64) -> Vec<f64> {
    generate_ensemble(&SourceConfig {
        n,
        num_sources: 1,
        k_common: k,
        k_innov: 0,
        seed,
        ..SourceConfig::default()
    })
    .unwrap()
    .sources
    .remove(0)
}

/// Pr(success) from exact measurements: plain ℓ1 (FISTA) without side
/// information, RAMIS with `si(x)` otherwise.
fn success_rate(m: usize, trials: u64, si: Option<&dyn Fn(&[f64]) -> Vec<Vec<f64>>>) -> f64 {
    let n = 1000;
    let cfg = SolverConfig::default();
    let hits = (0..trials)
        .filter(|&t| {
            let x = sparse_source(n, 50, 7_000 + t);
            let a = make_matrix(m, n, 9_000 + t).unwrap();
            let mut y = vec![0.0; m];
            a.apply(&x, &mut y);
            let estimate = match si {
                None => solve_l1(&y, &a, &cfg).unwrap().solution,
                Some(f) => {
                    let set = SiSet::with_signals(n, f(&x)).unwrap();
                    ramis_run(&y, &a, &set, &cfg, true).unwrap().result.solution
                }
            };
            relative_error(&estimate, &x) <= 0.04
        })
        .count();
    hits as f64 / trials as f64
}

#[test]
fn criterion_7_recovery_phase_behavior() {
    let start = Instant::now();
    let ladder = [150, 200, 250, 300, 350];
    let rates: Vec<f64> = ladder.iter().map(|&m| success_rate(m, 100, None)).collect();
    let inversions = rates.windows(2).filter(|w| w[1] < w[0]).count();
    let at_300 = rates[3];
    let elapsed = start.elapsed();
    let pass = at_300 >= 0.95 && inversions <= 1;
    let curve: Vec<String> = ladder.iter().zip(&rates).map(|(m, r)| format!("{m}:{r:.2}")).collect();
    report(
        7,
        "plain l1 phase behaviour",
        pass,
        &format!("Pr(success) {}, {inversions} inversions", curve.join(" ")),
        elapsed,
    );
    assert!(pass);
}

#[test]
fn criterion_8_side_information_gain() {
    let start = Instant::now();
    let ladder: Vec<usize> = (1..=16).map(|k| 25 * k).collect();
    let first_reaching = |si: Option<&dyn Fn(&[f64]) -> Vec<Vec<f64>>>| {
        ladder.iter().copied().find(|&m| success_rate(m, 100, si) >= 0.9)
    };
    let perfect = first_reaching(Some(&|x: &[f64]| vec![x.to_vec()]));
    let zero = first_reaching(None);
    let elapsed = start.elapsed();
    let pass = matches!((perfect, zero), (Some(p), Some(z)) if p as f64 <= 0.7 * z as f64);
    report(
        8,
        "side-information gain",
        pass,
        &format!("Pr >= 0.9 at m={perfect:?} with perfect SI, m={zero:?} without"),
        elapsed,
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 9

fn headline_config(codec: Codec, recoveries: Vec<Recovery>) -> ExperimentConfig {
    ExperimentConfig {
        source: SourceConfig {
            n: 1000,
            num_sources: 3,
            k_common: 40,
            k_innov: 10,
            ..SourceConfig::default()
        },
        codecs: vec![codec],
        recoveries,
        rate_points: vec![250, 300, 350],
        trials: 100,
        master_seed: 909,
        ..ExperimentConfig::default()
    }
}

fn curve_text(r: &ExperimentResult, codec: Codec, recovery: Recovery) -> String {
    r.curve(codec, recovery)
        .iter()
        .map(|(m, bits, pr)| format!("{m}:{bits:.0}b@{pr:.2}"))
        .collect::<Vec<_>>()
        .join(" ")
}

#[test]
fn criterion_9_headline_saving() {
    let start = Instant::now();
    let ours = run_experiment(&headline_config(Codec::Dicoss, vec![Recovery::Ramis, Recovery::Jsm])).unwrap();
    let base = run_experiment(&headline_config(Codec::Baseline, vec![Recovery::Jsm])).unwrap();

    let ramis_full = ours.bits_at_full_success(Codec::Dicoss, Recovery::Ramis);
    let base_full = base.bits_at_full_success(Codec::Baseline, Recovery::Jsm);
    let saving = match (ramis_full, base_full) {
        (Some((_, d)), Some((_, b))) => Some((b - d) / b),
        _ => None,
    };
    let ramis = ours.curve(Codec::Dicoss, Recovery::Ramis);
    let jsm = ours.curve(Codec::Dicoss, Recovery::Jsm);
    let ordering_violations: Vec<usize> = ramis
        .iter()
        .zip(&jsm)
        .filter(|(r, j)| r.2 >= 0.9 && j.2 >= 0.9 && r.1 > j.1)
        .map(|(r, _)| r.0)
        .collect();
    let elapsed = start.elapsed();
    let pass = saving.is_some_and(|s| s >= 0.20)
        && ordering_violations.is_empty()
        && elapsed < Duration::from_secs(30 * 60);
    report(
        9,
        "headline DICOSS-RAMIS saving",
        pass,
        &format!(
            "saving {}, RAMIS above JSM at m={ordering_violations:?}; dicoss-ramis [{}] dicoss-jsm [{}] baseline-jsm [{}]",
            saving.map_or("n/a".into(), |s| format!("{:.1}%", 100.0 * s)),
            curve_text(&ours, Codec::Dicoss, Recovery::Ramis),
            curve_text(&ours, Codec::Dicoss, Recovery::Jsm),
            curve_text(&base, Codec::Baseline, Recovery::Jsm),
        ),
        elapsed,
    );
    assert!(pass);
}

// ---------------------------------------------------------------- 10

#[test]
fn criterion_10_mode_decision_soundness() {
    let start = Instant::now();
    let mut cfg = ExperimentConfig {
        source: SourceConfig {
            n: 1000,
            num_sources: 3,
            k_common: 0,
            k_innov: 50,
            ..SourceConfig::default()
        },
        codecs: vec![Codec::Dicoss, Codec::Baseline],
        recoveries: vec![Recovery::Jsm],
        rate_points: vec![300],
        trials: 100,
        master_seed: 1010,
        ..ExperimentConfig::default()
    };
    cfg.codec.rate_control = true;
    let r = run_experiment(&cfg).unwrap();
    let dicoss = &r.trials[0][0];
    let baseline = &r.trials[1][0];
    let sources = dicoss.iter().map(|t| t.modes.len()).sum::<usize>();
    let intra = dicoss.iter().flat_map(|t| &t.modes).filter(|&&m| m == Mode::Intra).count();
    let total = |ts: &[dicoss::pipeline::TrialResult]| ts.iter().flat_map(|t| &t.bits).sum::<f64>();
    let excess = total(dicoss) / total(baseline) - 1.0;
    let elapsed = start.elapsed();
    let share = intra as f64 / sources as f64;
    let pass = share >= 0.95 && excess < 0.02;
    report(
        10,
        "mode-decision soundness",
        pass,
        &format!(
            "Intra for {intra}/{sources} sources ({:.1}%), DICOSS bits {:+.2}% vs Baseline",
            100.0 * share,
            100.0 * excess
        ),
        elapsed,
    );
    assert!(pass);
}
