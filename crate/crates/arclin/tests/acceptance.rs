//! End-to-end acceptance checks, one line of output per shipped guarantee.
//!
//! Runs without the standard test harness so each criterion prints exactly
//! one pass/fail line with its runtime, whether it passes or not. Numeric
//! targets that are derivable are re-derived here by independent means
//! (closed forms, brute-force enumeration, scalar normal equations) rather
//! than trusted from the library under test.

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use nalgebra::{Complex, DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use arclin::detection::{
    calibrate, detect, run_pipeline, sweep_training_window, ErrorTrace, ThresholdPolicy,
};
use arclin::embedding::{embed, DelayMatrix, EmbeddingConfig};
use arclin::latent::{fit, FitConfig, LatentModel};
use arclin::lifting::{basis_size, enumerate};
use arclin::spectral::{confine, eigenvalues_of};
use arclin::waveform::{generate, ArcFaultScenario};

type CheckResult = Result<String, String>;

struct Criterion {
    name: &'static str,
    budget: Duration,
    run: fn() -> CheckResult,
}

fn main() {
    let criteria = [
        Criterion {
            name: "delay embedding dimension",
            budget: Duration::from_secs(1),
            run: embedding_dimension,
        },
        Criterion {
            name: "monomial basis counts",
            budget: Duration::from_secs(1),
            run: basis_counts,
        },
        Criterion {
            name: "least-squares oracle",
            budget: Duration::from_secs(10),
            run: least_squares_oracle,
        },
        Criterion {
            name: "sinusoid identification",
            budget: Duration::from_secs(5),
            run: sinusoid_identification,
        },
        Criterion {
            name: "spectrum confinement",
            budget: Duration::from_secs(10),
            run: spectrum_confinement,
        },
        Criterion {
            name: "bounded rollout",
            budget: Duration::from_secs(10),
            run: bounded_rollout,
        },
        Criterion {
            name: "continuation fidelity",
            budget: Duration::from_secs(5),
            run: continuation_fidelity,
        },
        Criterion {
            name: "early-warning scenario",
            budget: Duration::from_secs(30),
            run: early_warning,
        },
        Criterion {
            name: "training-window regimes",
            budget: Duration::from_secs(120),
            run: window_sweep_regimes,
        },
        Criterion {
            name: "threshold monotonicity",
            budget: Duration::from_secs(5),
            run: threshold_monotonicity,
        },
        Criterion {
            name: "determinism and serialization",
            budget: Duration::from_secs(30),
            run: determinism_and_serialization,
        },
    ];

    let mut failures = 0;
    for (i, c) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(c.run));
        let elapsed = start.elapsed();
        let result = match outcome {
            Ok(r) => r,
            Err(payload) => {
                let msg = payload
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| payload.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_else(|| "panicked".to_string());
                Err(format!("panicked: {msg}"))
            }
        };
        let result = match result {
            Ok(_) if elapsed > c.budget => Err(format!(
                "passed but took {elapsed:?}, over the {:?} budget",
                c.budget
            )),
            other => other,
        };
        let label = format!("[{:>2}/11] {} ", i + 1, c.name);
        match result {
            Ok(detail) => {
                println!("{label:.<52} PASS  {:>8.1}ms  {detail}", ms(elapsed));
            }
            Err(detail) => {
                failures += 1;
                println!("{label:.<52} FAIL  {:>8.1}ms  {detail}", ms(elapsed));
            }
        }
    }
    println!(
        "acceptance: {}/11 criteria passed",
        criteria.len() - failures
    );
    if failures > 0 {
        std::process::exit(1);
    }
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

// ---------------------------------------------------------------------------
// 1. Embedding dimension formula
// ---------------------------------------------------------------------------

fn embedding_dimension() -> CheckResult {
    let config = EmbeddingConfig {
        imdim: 2,
        over_embedding: 3,
        n_observables: 1,
    };
    let start = Instant::now();
    let n_n = config.delay_dimension();
    let took = start.elapsed();
    if n_n != 8 {
        return Err(format!(
            "delay_dimension(2, 3, 1) = {n_n}, want ceil(5/1) + 3 = 8"
        ));
    }
    if took > Duration::from_millis(1) {
        return Err(format!("formula evaluation took {took:?}, over 1 ms"));
    }
    Ok(format!("delay_dimension(2, 3, 1) = 8 in {took:?}"))
}

// ---------------------------------------------------------------------------
// 2. Monomial basis counts against brute force
// ---------------------------------------------------------------------------

/// Every exponent tuple with entries in `0..=max_degree` whose total degree
/// lies in `[min_degree, max_degree]`, by plain odometer enumeration.
fn brute_force_monomials(n_vars: usize, min_degree: u32, max_degree: u32) -> BTreeSet<Vec<u32>> {
    let mut set = BTreeSet::new();
    let mut exps = vec![0u32; n_vars];
    loop {
        let total: u32 = exps.iter().sum();
        if total >= min_degree && total <= max_degree {
            set.insert(exps.clone());
        }
        let mut i = 0;
        loop {
            if i == n_vars {
                return set;
            }
            if exps[i] < max_degree {
                exps[i] += 1;
                break;
            }
            exps[i] = 0;
            i += 1;
        }
    }
}

fn basis_counts() -> CheckResult {
    let full = enumerate(8, 1, 3);
    if full.len() != 164 {
        return Err(format!(
            "enumerate(8, 1, 3) has {} monomials, want 164",
            full.len()
        ));
    }
    let latent = enumerate(2, 1, 3);
    if latent.len() != 9 {
        return Err(format!(
            "enumerate(2, 1, 3) has {} monomials, want 9",
            latent.len()
        ));
    }
    for n_vars in 1..=4usize {
        for max_degree in 1..=4u32 {
            for min_degree in 1..=max_degree {
                let lib = enumerate(n_vars, min_degree, max_degree);
                let got: BTreeSet<Vec<u32>> = lib.exponents().iter().cloned().collect();
                if got.len() != lib.len() {
                    return Err(format!(
                        "enumerate({n_vars}, {min_degree}, {max_degree}) repeats a monomial"
                    ));
                }
                let want = brute_force_monomials(n_vars, min_degree, max_degree);
                if got != want {
                    return Err(format!(
                        "enumerate({n_vars}, {min_degree}, {max_degree}) has {} monomials, \
                         brute force finds {}",
                        got.len(),
                        want.len()
                    ));
                }
                match basis_size(n_vars, min_degree, max_degree) {
                    Some(n) if n == want.len() as u128 => {}
                    other => {
                        return Err(format!(
                            "basis_size({n_vars}, {min_degree}, {max_degree}) = {other:?}, \
                             brute force finds {}",
                            want.len()
                        ))
                    }
                }
            }
        }
    }
    Ok(
        "164 and 9 monomials as counted; brute force agrees for all bases up to 4 vars, degree 4"
            .to_string(),
    )
}

// ---------------------------------------------------------------------------
// 3. Scalar normal-equation oracle for the alternating fit
// ---------------------------------------------------------------------------

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

fn least_squares_oracle() -> CheckResult {
    let n_n = 3;
    let m = 20;
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let data = random_matrix(&mut rng, n_n, m);
    let matrix = DelayMatrix::from_parts(data.clone(), 5e-5).map_err(|e| e.to_string())?;
    let config = FitConfig {
        latent_dim: 1,
        lift_degree: 2,
        confine_spectrum: false,
        ..FitConfig::default()
    };
    let (model, _) = fit(&matrix, &config).map_err(|e| e.to_string())?;

    // Oracle: the same alternation written out in scalars. With one latent
    // coordinate and one lifted feature every normal system is 1x1, so any
    // row scaling cancels and the plain equations are exact.
    let mean: Vec<f64> = (0..n_n)
        .map(|i| data.row(i).iter().sum::<f64>() / m as f64)
        .collect();
    let mut centered = data.clone();
    for j in 0..m {
        for i in 0..n_n {
            centered[(i, j)] -= mean[i];
        }
    }
    // Top principal direction from the 3x3 covariance, largest entry positive.
    let eig = SymmetricEigen::new(&centered * centered.transpose());
    let mut top = 0;
    for i in 1..n_n {
        if eig.eigenvalues[i] > eig.eigenvalues[top] {
            top = i;
        }
    }
    let mut p: Vec<f64> = (0..n_n).map(|i| eig.eigenvectors[(i, top)]).collect();
    let norm = p.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut best = 0;
    for i in 1..n_n {
        if p[i].abs() > p[best].abs() {
            best = i;
        }
    }
    let flip = if p[best] < 0.0 { -1.0 } else { 1.0 };
    for v in p.iter_mut() {
        *v *= flip / norm;
    }

    let gamma: Vec<f64> = (0..m)
        .map(|j| (0..n_n).map(|i| p[i] * centered[(i, j)]).sum())
        .collect();
    let lifted: Vec<f64> = gamma.iter().map(|g| g * g).collect();
    let ridge = config.ridge;
    let solve_b = |phi: &[f64]| -> f64 {
        let mut gram = 0.0;
        let mut rhs = 0.0;
        for k in 0..m - 1 {
            gram += phi[k] * phi[k];
            rhs += phi[k] * phi[k + 1];
        }
        rhs / (gram * (1.0 + ridge))
    };
    let mut w = 0.0;
    let mut phi = gamma.clone();
    for _ in 0..config.n_alternations {
        let b = solve_b(&phi);
        let (mut s00, mut s11, mut s10) = (0.0, 0.0, 0.0);
        let (mut r0, mut r1) = (0.0, 0.0);
        for k in 0..m - 1 {
            let (k0, k1) = (lifted[k], lifted[k + 1]);
            s00 += k0 * k0;
            s11 += k1 * k1;
            s10 += k1 * k0;
            let e = gamma[k + 1] - b * gamma[k];
            r0 += e * k0;
            r1 += e * k1;
        }
        let normal = s00 * b * b + s11 - 2.0 * s10 * b;
        w = -(r1 - b * r0) / (normal * (1.0 + ridge));
        for k in 0..m {
            phi[k] = gamma[k] + w * lifted[k];
        }
    }
    let b = solve_b(&phi);

    let b_fit = model.operator()[(0, 0)];
    let w_fit = model.correction()[(0, 0)];
    let db = (b_fit - b).abs();
    let dw = (w_fit - w).abs();
    if db > 1e-8 {
        return Err(format!("operator {b_fit} vs oracle {b}, off by {db:.3e}"));
    }
    if dw > 1e-8 {
        return Err(format!("correction {w_fit} vs oracle {w}, off by {dw:.3e}"));
    }

    for instance in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + instance);
        let data = random_matrix(&mut rng, n_n, m);
        let matrix = DelayMatrix::from_parts(data, 5e-5).map_err(|e| e.to_string())?;
        let (_, diag) = fit(&matrix, &config).map_err(|e| e.to_string())?;
        for pair in diag.loss_history.windows(2) {
            if pair[1] > pair[0] * (1.0 + 1e-6) {
                return Err(format!("instance {instance}: loss rose, {pair:?}"));
            }
        }
    }
    Ok(format!(
        "operator off by {db:.1e}, correction off by {dw:.1e}; \
         loss history non-increasing on 100 instances"
    ))
}

// ---------------------------------------------------------------------------
// 4. Line-frequency identification from a noiseless record
// ---------------------------------------------------------------------------

fn clean_sine(frequency: f64, duration: f64) -> ArcFaultScenario {
    ArcFaultScenario {
        frequency,
        duration,
        fault_start: duration,
        fault_end: duration,
        precursor_lead: 0.0,
        noise_std: 0.0,
        ..ArcFaultScenario::default()
    }
}

fn sinusoid_identification() -> CheckResult {
    let series = generate(&clean_sine(50.0, 0.08)).map_err(|e| e.to_string())?;
    let dm = embed(&series, &EmbeddingConfig::default()).map_err(|e| e.to_string())?;
    let config = FitConfig {
        confine_spectrum: false,
        ..FitConfig::default()
    };
    let (model, _) = fit(&dm, &config).map_err(|e| e.to_string())?;
    let eigs = eigenvalues_of(model.operator()).map_err(|e| e.to_string())?;
    let expected = std::f64::consts::TAU * 50.0 / 20_000.0;
    let angle = eigs[0].arg().abs();
    let radius = eigs[0].norm();
    if (angle - expected).abs() > 1e-4 {
        return Err(format!(
            "eigenvalue angle {angle:.9} vs rotation-per-sample {expected:.9}"
        ));
    }
    if (radius - 1.0).abs() > 1e-3 {
        return Err(format!("eigenvalue magnitude {radius:.9} strays from 1"));
    }
    Ok(format!(
        "angle {angle:.7} vs 2*pi*50/20000 = {expected:.7}, magnitude {radius:.7}"
    ))
}

// ---------------------------------------------------------------------------
// 5. Confinement on random spectra and the reference pair
// ---------------------------------------------------------------------------

/// Random basis with 2-norm condition below 100, so eigenvalue arithmetic
/// stays far inside the tolerances under test.
fn well_conditioned_basis(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    loop {
        let v = random_matrix(rng, n, n);
        let sv = v.clone().svd(false, false).singular_values;
        let cond = sv[0] / sv[n - 1];
        if cond.is_finite() && cond < 100.0 {
            return v;
        }
    }
}

/// Real matrix with a known spectrum: stratified moduli keep eigenvalues
/// apart, a well-conditioned random basis mixes the coordinates.
fn random_spectrum_case(rng: &mut ChaCha8Rng, n: usize) -> (DMatrix<f64>, Vec<Complex<f64>>) {
    let mut block = DMatrix::zeros(n, n);
    let mut expected = Vec::with_capacity(n);
    for pair in 0..n / 2 {
        let slot = 2 * pair;
        let lo = 0.3 + 0.7 * pair as f64;
        let r = lo + 0.5 * rng.random::<f64>();
        if rng.random::<bool>() {
            let theta = 0.1 + (std::f64::consts::PI - 0.2) * rng.random::<f64>();
            let (a, b) = (r * theta.cos(), r * theta.sin());
            block[(slot, slot)] = a;
            block[(slot, slot + 1)] = -b;
            block[(slot + 1, slot)] = b;
            block[(slot + 1, slot + 1)] = a;
            expected.push(Complex::new(a, b));
            expected.push(Complex::new(a, -b));
        } else {
            let r2 = r + 0.2;
            let s1 = if rng.random::<bool>() { 1.0 } else { -1.0 };
            let s2 = if rng.random::<bool>() { 1.0 } else { -1.0 };
            block[(slot, slot)] = s1 * r;
            block[(slot + 1, slot + 1)] = s2 * r2;
            expected.push(Complex::new(s1 * r, 0.0));
            expected.push(Complex::new(s2 * r2, 0.0));
        }
    }
    let v = well_conditioned_basis(rng, n);
    let vinv = v.clone().try_inverse().expect("conditioned basis inverts");
    (&v * block * vinv, expected)
}

fn spectrum_confinement() -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for case in 0..1000 {
        let n = if case % 2 == 0 { 2 } else { 8 };
        let (op, expected) = random_spectrum_case(&mut rng, n);
        let confined = confine(&op).map_err(|e| format!("case {case}: {e}"))?;
        let got = eigenvalues_of(&confined).map_err(|e| format!("case {case}: {e}"))?;
        let radius = got.iter().map(|z| z.norm()).fold(0.0, f64::max);
        if (radius - 1.0).abs() > 1e-9 {
            return Err(format!("case {case}: confined spectral radius {radius}"));
        }
        for lam in &expected {
            let target = lam / lam.norm();
            let nearest = got
                .iter()
                .min_by(|x, y| {
                    (*x - target)
                        .norm()
                        .partial_cmp(&(*y - target).norm())
                        .unwrap()
                })
                .unwrap();
            if (nearest.norm() - 1.0).abs() > 1e-9 {
                return Err(format!("case {case}: |{nearest}| strays from 1"));
            }
            let angle_err = (nearest / target).arg().abs();
            if angle_err > 1e-10 {
                return Err(format!(
                    "case {case}: angle of {lam} moved by {angle_err:.3e}"
                ));
            }
        }
        let twice = confine(&confined).map_err(|e| format!("case {case}: {e}"))?;
        let drift = (&twice - &confined).amax();
        if drift > 1e-10 {
            return Err(format!(
                "case {case}: confine drifts by {drift:.3e} when repeated"
            ));
        }
    }

    // Reference pair: 1.044 +/- 0.079j must land exactly on its radial
    // projection, derived here by complex division.
    let reference = DMatrix::from_row_slice(2, 2, &[1.044, -0.079, 0.079, 1.044]);
    let confined = confine(&reference).map_err(|e| e.to_string())?;
    let lam = Complex::new(1.044, 0.079);
    let target = lam / lam.norm();
    let got = eigenvalues_of(&confined)
        .map_err(|e| e.to_string())?
        .into_iter()
        .find(|z| z.im > 0.0)
        .ok_or("confined reference pair lost its oscillation")?;
    if (got - target).norm() > 1e-6 {
        return Err(format!("reference pair confined to {got}, want {target}"));
    }
    Ok(format!(
        "1000 random operators: radius 1 within 1e-9, angles within 1e-10, idempotent; \
         1.044+0.079j -> {:.6}+{:.6}j",
        got.re, got.im
    ))
}

// ---------------------------------------------------------------------------
// 6. Rollout boundedness with confinement, growth without
// ---------------------------------------------------------------------------

fn bounded_rollout() -> CheckResult {
    let series = generate(&clean_sine(50.0, 0.08)).map_err(|e| e.to_string())?;
    let dm = embed(&series, &EmbeddingConfig::default()).map_err(|e| e.to_string())?;
    let (model, _) = fit(&dm, &FitConfig::default()).map_err(|e| e.to_string())?;
    let b = model.operator();
    let eigs = eigenvalues_of(b).map_err(|e| e.to_string())?;
    let lam = eigs
        .iter()
        .find(|z| z.im > 0.0)
        .copied()
        .ok_or("confined operator has no oscillatory pair")?;
    let (b11, b12, b21, b22) = (b[(0, 0)], b[(0, 1)], b[(1, 0)], b[(1, 1)]);
    // An eigenvector of the 2x2 pair, read off one row of (B - lambda I).
    let (v1, v2) = if b12.abs() > 1e-12 {
        (Complex::new(b12, 0.0), lam - Complex::new(b11, 0.0))
    } else {
        (lam - Complex::new(b22, 0.0), Complex::new(b21, 0.0))
    };
    // |conj(v2) x - conj(v1) y| is constant on the invariant ellipse; the
    // skipped determinant factor cancels in the relative deviation.
    let ellipse = |x: f64, y: f64| (v2.conj() * x - v1.conj() * y).norm();

    let tail = &series.samples()[series.len() - model.window_len()..];
    let phi0 = model.encode(tail).map_err(|e| e.to_string())?;
    let (mut x, mut y) = (phi0[0], phi0[1]);
    let r0 = ellipse(x, y);
    if !(r0.is_finite() && r0 > 0.0) {
        return Err("initial state sits at the ellipse center".to_string());
    }
    let mut worst = 0.0f64;
    for _ in 0..1_000_000 {
        let nx = b11 * x + b12 * y;
        let ny = b21 * x + b22 * y;
        x = nx;
        y = ny;
        let dev = (ellipse(x, y) / r0 - 1.0).abs();
        if dev > worst {
            worst = dev;
        }
    }
    if worst > 1e-6 {
        return Err(format!(
            "ellipse radius drifted by {worst:.3e} over 1e6 steps"
        ));
    }

    // Unconfined counterpart: modulus 1.047 e-folds in ceil(1 / ln 1.047)
    // steps, which is 22.
    let g = 1.047f64;
    let analytic = (1.0 / g.ln()).ceil() as usize;
    let theta = 0.0754f64;
    let (c, s) = (g * theta.cos(), g * theta.sin());
    let (mut x, mut y) = (1.0f64, 0.0f64);
    let mut first = None;
    for k in 1..=40 {
        let nx = c * x - s * y;
        let ny = s * x + c * y;
        x = nx;
        y = ny;
        if x.hypot(y) >= std::f64::consts::E {
            first = Some(k);
            break;
        }
    }
    match first {
        Some(k) if k <= 22 && k == analytic => Ok(format!(
            "confined drift {worst:.1e} over 1e6 steps; |lambda| = 1.047 e-folds at step {k}"
        )),
        Some(k) => Err(format!(
            "growth e-folded at step {k}, analytic bound says {analytic}"
        )),
        None => Err("unconfined operator never e-folded".to_string()),
    }
}

// ---------------------------------------------------------------------------
// 7. Long continuation against the analytic waveform
// ---------------------------------------------------------------------------

fn continuation_fidelity() -> CheckResult {
    let scenario = clean_sine(50.0, 0.5);
    let series = generate(&scenario).map_err(|e| e.to_string())?;
    let train = series.slice(0.1, 0.18).map_err(|e| e.to_string())?;
    let dm = embed(&train, &EmbeddingConfig::default()).map_err(|e| e.to_string())?;
    let (model, _) = fit(&dm, &FitConfig::default()).map_err(|e| e.to_string())?;
    let predicted = model
        .predict_observable(&train, 0.3)
        .map_err(|e| e.to_string())?;
    let omega = std::f64::consts::TAU * scenario.frequency;
    let mut num = 0.0;
    let mut den = 0.0;
    for (k, &p) in predicted.samples().iter().enumerate() {
        let truth = scenario.amplitude * (omega * predicted.time_at(k)).sin();
        num += (p - truth) * (p - truth);
        den += truth * truth;
    }
    let rel = (num / den).sqrt();
    if rel > 0.05 {
        return Err(format!("relative RMS error {rel:.4} over 0.3 s, above 5%"));
    }
    Ok(format!(
        "relative RMS error {rel:.2e} over a 0.3 s continuation ({} samples)",
        predicted.len()
    ))
}

// ---------------------------------------------------------------------------
// 8. Alarm on the fault record, silence on its control
// ---------------------------------------------------------------------------

fn early_warning() -> CheckResult {
    let scenario = ArcFaultScenario::default();
    let faulty = generate(&scenario).map_err(|e| e.to_string())?;
    let control = generate(&scenario.without_distortion()).map_err(|e| e.to_string())?;
    let embedding = EmbeddingConfig::default();
    let fit_config = FitConfig::default();
    let policy = ThresholdPolicy::default();
    let (_, _, fault_report) = run_pipeline(&faulty, 0.10, 0.18, &embedding, &fit_config, &policy)
        .map_err(|e| e.to_string())?;
    let (_, _, control_report) =
        run_pipeline(&control, 0.10, 0.18, &embedding, &fit_config, &policy)
            .map_err(|e| e.to_string())?;

    let alarm = fault_report
        .alarm_time
        .ok_or("fault record raised no alarm")?;
    if !(0.185..=0.205).contains(&alarm) {
        return Err(format!(
            "fault alarm at {alarm:.5} s, outside the early-warning band [0.185, 0.205]"
        ));
    }
    match control_report.alarm_time {
        Some(t) if t < 0.205 => {
            return Err(format!(
                "control record alarmed at {t:.5} s, inside the band"
            ))
        }
        Some(t) if t <= alarm => {
            return Err(format!(
                "control alarm at {t:.5} s does not come after the fault alarm at {alarm:.5} s"
            ))
        }
        _ => {}
    }
    Ok(format!(
        "fault alarm at {alarm:.5} s (fault starts 0.200 s, precursor 0.185 s); control: {}",
        match control_report.alarm_time {
            Some(t) => format!("alarm at {t:.5} s"),
            None => "no alarm".to_string(),
        }
    ))
}

// ---------------------------------------------------------------------------
// 9. Under/optimal/overfit regimes across training endpoints
// ---------------------------------------------------------------------------

fn window_sweep_regimes() -> CheckResult {
    let series = generate(&ArcFaultScenario::default()).map_err(|e| e.to_string())?;
    let ends: Vec<f64> = (11..=19).map(|i| i as f64 / 100.0).collect();
    let report = sweep_training_window(
        &series,
        0.10,
        &ends,
        &EmbeddingConfig::default(),
        &FitConfig::default(),
        &ThresholdPolicy::default(),
    )
    .map_err(|e| e.to_string())?;
    if let Some(row) = report.rows.iter().find(|r| r.error.is_some()) {
        return Err(format!(
            "endpoint {:.2} failed: {}",
            row.training_end,
            row.error.as_deref().unwrap_or("")
        ));
    }
    let alarm_at = |end: f64| -> Option<f64> {
        report
            .rows
            .iter()
            .find(|r| (r.training_end - end).abs() < 1e-9)
            .and_then(|r| r.predicted_fault)
    };

    let early_fires = [0.11, 0.12, 0.13]
        .iter()
        .any(|&e| matches!(alarm_at(e), Some(t) if t < 0.185));
    if !early_fires {
        return Err("no endpoint at or below 0.13 s alarmed before 0.185 s".to_string());
    }
    for end in [0.17, 0.18] {
        match alarm_at(end) {
            Some(t) if (0.185..=0.205).contains(&t) => {}
            other => {
                return Err(format!(
                    "endpoint {end:.2} alarmed at {other:?}, outside [0.185, 0.205]"
                ))
            }
        }
    }
    let t18 = alarm_at(0.18).unwrap();
    match alarm_at(0.19) {
        None => {}
        Some(t) if t > t18 => {}
        Some(t) => {
            return Err(format!(
                "endpoint 0.19 alarmed at {t:.5} s, not after the 0.18 endpoint's {t18:.5} s"
            ))
        }
    }
    let summary: Vec<String> = report
        .rows
        .iter()
        .map(|r| match r.predicted_fault {
            Some(t) => format!("{:.2}->{:.4}", r.training_end, t),
            None => format!("{:.2}->none", r.training_end),
        })
        .collect();
    Ok(summary.join(" "))
}

// ---------------------------------------------------------------------------
// 10. Calibration-window and threshold monotonicity
// ---------------------------------------------------------------------------

fn threshold_monotonicity() -> CheckResult {
    let policy30 = ThresholdPolicy::default();
    let policy100 = ThresholdPolicy {
        calibration_window: 100,
        ..ThresholdPolicy::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut both_fired = 0;
    for case in 0..100 {
        // Convex monotone error trace: the increments themselves never
        // decrease, so the smoothed error and its growth rate both keep
        // rising and every prefix statistic is nondecreasing in the window
        // length. The acceleration onset lies past both calibration windows.
        let n = 240;
        let onset = 110 + (rng.random::<u32>() % 80) as usize;
        let mut level = 0.01 * rng.random::<f64>();
        let mut increment = 1e-4 * (1.0 + rng.random::<f64>());
        let gentle = 1e-5 * (0.5 + rng.random::<f64>());
        let boost = 1e-4 * (1.0 + rng.random::<f64>());
        let mut raw = Vec::with_capacity(n);
        for k in 0..n {
            level += increment;
            raw.push(level);
            increment += gentle * rng.random::<f64>();
            if k >= onset {
                increment += boost * rng.random::<f64>();
            }
        }
        let trace = ErrorTrace::from_raw(raw, 5e-5, 0.0, policy30.smoothing_span)
            .map_err(|e| e.to_string())?;
        let (theta30, delta30) = calibrate(&trace, &policy30).map_err(|e| e.to_string())?;
        let report30 = detect(&trace, theta30, delta30, &policy30);
        let (theta100, delta100) = calibrate(&trace, &policy100).map_err(|e| e.to_string())?;
        let report100 = detect(&trace, theta100, delta100, &policy100);
        match (report30.alarm_time, report100.alarm_time) {
            (None, Some(t)) => {
                return Err(format!(
                    "case {case}: W=100 alarmed at {t:.5} s but W=30 never did"
                ))
            }
            (Some(a), Some(b)) => {
                if a > b {
                    return Err(format!(
                        "case {case}: W=30 alarm {a:.5} s after W=100 alarm {b:.5} s"
                    ));
                }
                both_fired += 1;
            }
            _ => {}
        }

        // Raising both thresholds must never move the alarm earlier.
        let theta_hi = theta30 + 0.5 * theta30.abs() + 1e-9;
        let delta_hi = delta30 + 0.5 * delta30.abs() + 1e-9;
        let raised = detect(&trace, theta_hi, delta_hi, &policy30);
        match (report30.alarm_time, raised.alarm_time) {
            (None, Some(t)) => {
                return Err(format!(
                    "case {case}: raised thresholds alarmed at {t:.5} s out of nowhere"
                ))
            }
            (Some(a), Some(b)) if b < a => {
                return Err(format!(
                    "case {case}: raised thresholds moved the alarm from {a:.5} to {b:.5} s"
                ))
            }
            _ => {}
        }
    }
    if both_fired == 0 {
        return Err("no trace alarmed under both calibration windows".to_string());
    }
    Ok(format!(
        "100 monotone traces: W=30 never later than W=100 ({both_fired} fired under both); \
         raised thresholds never earlier"
    ))
}

// ---------------------------------------------------------------------------
// 11. Bit-level determinism and serialization round trip
// ---------------------------------------------------------------------------

fn determinism_and_serialization() -> CheckResult {
    let scenario = ArcFaultScenario::default();
    let first = generate(&scenario).map_err(|e| e.to_string())?;
    let second = generate(&scenario).map_err(|e| e.to_string())?;
    if first.samples() != second.samples() {
        return Err("two generations of the same scenario differ".to_string());
    }
    let embedding = EmbeddingConfig::default();
    let fit_config = FitConfig::default();
    let policy = ThresholdPolicy::default();
    let (model_a, trace_a, report_a) =
        run_pipeline(&first, 0.10, 0.18, &embedding, &fit_config, &policy)
            .map_err(|e| e.to_string())?;
    let (model_b, trace_b, report_b) =
        run_pipeline(&second, 0.10, 0.18, &embedding, &fit_config, &policy)
            .map_err(|e| e.to_string())?;
    if trace_a != trace_b || report_a != report_b {
        return Err("two pipeline runs on identical input disagree".to_string());
    }
    let json_a = model_a.to_json_string().map_err(|e| e.to_string())?;
    let json_b = model_b.to_json_string().map_err(|e| e.to_string())?;
    if json_a != json_b {
        return Err("serialized models of identical runs differ".to_string());
    }

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("model.json");
    model_a.save(&path).map_err(|e| e.to_string())?;
    let loaded = LatentModel::load(&path).map_err(|e| e.to_string())?;
    let train = first.slice(0.10, 0.18).map_err(|e| e.to_string())?;
    let from_memory = model_a
        .predict_observable(&train, 0.32)
        .map_err(|e| e.to_string())?;
    let from_disk = loaded
        .predict_observable(&train, 0.32)
        .map_err(|e| e.to_string())?;
    if from_memory.samples() != from_disk.samples() {
        return Err("loaded model predicts differently from the one in memory".to_string());
    }
    Ok(format!(
        "pipeline runs bit-identical; saved model reproduces all {} predicted samples exactly",
        from_disk.len()
    ))
}
