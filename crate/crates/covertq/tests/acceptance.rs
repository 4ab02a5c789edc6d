//! Acceptance criteria 1-10. Each criterion prints one PASS/FAIL line; the
//! test fails if any criterion does.

use std::time::{Duration, Instant};

use covertq::experiments::{
    c0_exp_exp_reference, simulate_cycle_counts, sweep_from_spec, yv_histogram, Phi, ScalingSpec, SweepRow,
    COEFF_THETA, LIMIT_THETA,
};
use covertq::parallel::estimate_pe_par;
use covertq::stats::mann_kendall;
use covertq_core::analytics::{
    c0, double_sum_identity, expansion, g2_hat, i_beta, ii_quantities, iia_c0, iia_cycle_counts, iia_f,
    mean_sqrt_xi, mean_sqrt_xi_integral_form, t_w, BatchPMF, IiaModel, LikelihoodRatio, Statistic,
    SystemParams, C0,
};
use covertq_core::detect::DetectorSpec;
use covertq_core::quad::Quad;
use covertq_core::rng::stream;
use covertq_core::simqueue::{BusyPeriodObs, Policy, Simulator};
use rand::Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

type Res = Result<Outcome, String>;

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn base() -> SystemParams {
    SystemParams::exp_exp(0.5, 1.0, 1.0).unwrap()
}

fn within_rel(got: f64, want: f64, tol: f64) -> bool {
    (got / want - 1.0).abs() <= tol
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let t = Instant::now();
    let v = f();
    (v, t.elapsed())
}

fn criterion_1() -> Res {
    let p = base();
    let (res, took) = timed(|| -> Result<_, String> {
        let n = 100_000;
        let mut sim = Simulator::new(&p, &Policy::NoInsertion, 11).map_err(err)?;
        let mut bp = BusyPeriodObs::default();
        let mut jobs = 0usize;
        for _ in 0..n {
            sim.next_bp_into(&mut bp).map_err(err)?;
            jobs += bp.n_jobs;
        }
        let mean = jobs as f64 / n as f64;
        let hist = yv_histogram(&p, &Policy::NoInsertion, 0.0, n, 12).map_err(err)?;
        Ok((mean, hist.chi_square_p()))
    });
    let (mean, chi_p) = res?;
    // (1 - lambda/mu1)^{-1} = 2
    let pass = within_rel(mean, 2.0, 0.015) && chi_p > 0.001 && took < Duration::from_secs(10);
    Ok(outcome(pass, format!("mean jobs/BP {mean:.4} (want 2 +- 1.5%), chi2 p {chi_p:.4}, {:.2}s", took.as_secs_f64())))
}

fn criterion_2() -> Res {
    let p = base();
    let q = 0.3;
    let (h, took) = timed(|| yv_histogram(&p, &Policy::IEBP { q }, q, 1_000_000, 21));
    let h = h.map_err(err)?;
    let z = h.max_abs_z();
    let pass = z <= 3.0 && took < Duration::from_secs(120);
    Ok(outcome(pass, format!("max bin |z| {z:.3} over {} bins (want <= 3), {:.2}s", h.observed.len(), took.as_secs_f64())))
}

/// `I_beta` by trapezoid in `s = ln t` with the cancellation-free numerator
/// `(t^2/4) / (1 + t/2 + sqrt(1 + t))`.
fn i_beta_trapezoid(beta: f64) -> f64 {
    let h = 1e-3;
    let f = |s: f64| {
        let t = s.exp();
        beta * 0.25 * t * t / (1.0 + 0.5 * t + (1.0 + t).sqrt()) * (-beta * s).exp()
    };
    let (a, b) = (-120.0, 120.0);
    let m = ((b - a) / h) as usize;
    let mut acc = 0.5 * (f(a) + f(b));
    for k in 1..m {
        acc += f(a + k as f64 * h);
    }
    acc * h
}

fn criterion_3() -> Res {
    let (res, took) = timed(|| -> Result<_, String> {
        // r = 0.5: E sqrt(Xi) - 1 against -theta^2 / 12
        let th = COEFF_THETA;
        let quad = mean_sqrt_xi(th, 0.5).map_err(err)?;
        let other = mean_sqrt_xi_integral_form(th, 0.5).map_err(err)?;
        let coeff = (quad - 1.0) / (th * th);
        let c05 = within_rel(coeff, -1.0 / 12.0, 0.05);
        let agree = (quad - other).abs() < 1e-12;

        let e2 = expansion(LIMIT_THETA, 2.0).map_err(err)?;
        let ratio2 = -e2.deficit / (e2.xi * e2.xi * e2.xi.ln());
        let c2 = within_rel(ratio2, 0.25, 0.05);

        let e3 = expansion(LIMIT_THETA, 3.0).map_err(err)?;
        let i15 = i_beta_trapezoid(1.5);
        let ratio3 = e3.deficit / e3.xi.powf(1.5);
        let c3 = within_rel(ratio3, i15, 0.02);
        Ok((c05 && agree && c2 && c3, coeff, ratio2, ratio3, i15))
    });
    let (pass, coeff, ratio2, ratio3, i15) = res?;
    let pass = pass && took < Duration::from_secs(5);
    Ok(outcome(
        pass,
        format!(
            "r=0.5 coeff {coeff:.6} (want -1/12 = {:.6} +- 5%); r=2 ratio {ratio2:.4} (want 0.25 +- 5%); r=3 ratio {ratio3:.5} vs I_1.5 {i15:.5} (+- 2%); {:.2}s",
            -1.0 / 12.0,
            took.as_secs_f64()
        ),
    ))
}

fn criterion_4() -> Res {
    let finite = c0(&base());
    let div = c0(&SystemParams::exp_exp(0.5, 2.0, 1.0).unwrap());
    // lambda / (lambda + 2 mu) at mu1 = mu2
    let want = 0.5 / (0.5 + 2.0);
    let got = finite.value().unwrap_or(f64::NAN);
    let pass = (got - want).abs() <= 1e-4 && matches!(div, C0::Divergent { .. });
    Ok(outcome(pass, format!("c0 {got:.8} (want {want} +- 1e-4); mu1=2,mu2=1 divergent: {}", matches!(div, C0::Divergent { .. }))))
}

fn sweep_exp(mu1: f64, phi: Phi, seed: u64) -> Result<Vec<SweepRow>, String> {
    let p = SystemParams::exp_exp(0.5, mu1, 1.0).map_err(err)?;
    let spec = ScalingSpec { base_seed: seed, ..ScalingSpec::new(phi, 0.1) };
    sweep_from_spec(&p, &spec).map_err(err)
}

fn pe_list(rows: &[SweepRow]) -> String {
    rows.iter().map(|r| format!("{:.3}", r.p_e)).collect::<Vec<_>>().join(",")
}

fn criterion_5(rows_out: &mut Vec<SweepRow>) -> Res {
    let (res, took) = timed(|| -> Result<_, String> {
        let a = sweep_exp(1.0, Phi::Sqrt, 51)?;
        let b = sweep_exp(1.0, Phi::Power { gamma: 0.25 }, 52)?;
        let c_cov = sweep_exp(3.0, Phi::Power { gamma: 2.0 / 3.0 }, 53)?;
        let c_dec = sweep_exp(3.0, Phi::Power { gamma: 0.5 }, 54)?;
        Ok((a, b, c_cov, c_dec))
    });
    let (a, b, c_cov, c_dec) = res?;
    let pes = |rows: &[SweepRow]| rows.iter().map(|r| r.p_e).collect::<Vec<_>>();
    let pass_a = a.iter().all(|r| r.p_e >= 0.9);
    let mk_b = mann_kendall(&pes(&b));
    let pass_b = mk_b.p_decreasing < 0.05 && b.last().unwrap().p_e < 0.6;
    let pass_c1 = c_cov.iter().all(|r| r.p_e >= 0.9);
    let mk_c = mann_kendall(&pes(&c_dec));
    let pass_c2 = mk_c.p_decreasing < 0.05;
    let pass = pass_a && pass_b && pass_c1 && pass_c2 && took < Duration::from_secs(900);
    let detail = format!(
        "(a) p_e [{}] all >= 0.9: {pass_a}; (b) p_e [{}] MK p {:.3}, final < 0.6: {pass_b}; \
         (c) n^(2/3) p_e [{}] all >= 0.9: {pass_c1}; sqrt p_e [{}] MK p {:.3}: {pass_c2}; {:.1}s",
        pe_list(&a),
        pe_list(&b),
        mk_b.p_decreasing,
        pe_list(&c_cov),
        pe_list(&c_dec),
        mk_c.p_decreasing,
        took.as_secs_f64()
    );
    rows_out.extend(a.into_iter().chain(b).chain(c_cov).chain(c_dec));
    Ok(outcome(pass, detail))
}

fn criterion_6(rows: &[SweepRow]) -> Res {
    if rows.is_empty() {
        return Err("no sweep rows".into());
    }
    let bad: Vec<_> = rows.iter().filter(|r| r.p_e + 3.0 * r.p_e_ci < r.pe_lower).map(|r| (r.n, r.q)).collect();
    Ok(outcome(bad.is_empty(), format!("{} rows checked, violations {bad:?}", rows.len())))
}

fn criterion_7() -> Res {
    let (res, took) = timed(|| -> Result<_, String> {
        let p = base();
        let n = 100_000;
        let mut sim = Simulator::new(&p, &Policy::IEBP { q: 0.5 }, 71).map_err(err)?;
        let mut bp = BusyPeriodObs::default();
        for _ in 0..n {
            sim.next_bp_into(&mut bp).map_err(err)?;
        }
        let tw_sim = sim.willie_served() as f64;
        let tw = t_w(&p, 0.5, n as u64).map_err(err)?.value;

        let q_ii = 0.5;
        let mut sim = Simulator::new(&p, &Policy::II { q: q_ii }, 72).map_err(err)?;
        for _ in 0..n {
            sim.next_bp_into(&mut bp).map_err(err)?;
        }
        let ii_sim = sim.alice_inserted() as f64;
        let ii = ii_quantities(&p, q_ii).map_err(err)?.t_plus(n as f64);

        let batch = BatchPMF::point(1);
        let counts = iia_cycle_counts(&p, 0.2, &batch).map_err(err)?;
        let (nw, na) = simulate_cycle_counts(&p, &Policy::IIA { q: 0.2, batch }, 1_000_000, 73).map_err(err)?;
        Ok((tw_sim, tw, ii_sim, ii, nw, na, counts))
    });
    let (tw_sim, tw, ii_sim, ii, nw, na, counts) = res?;
    let p_tw = within_rel(tw_sim, tw, 0.02);
    let p_ii = within_rel(ii_sim, ii, 0.02);
    let p_nw = within_rel(nw, counts.e_nw, 0.02);
    let p_na = within_rel(na, counts.e_na, 0.02);
    let pass = p_tw && p_ii && p_nw && p_na && took < Duration::from_secs(300);
    Ok(outcome(
        pass,
        format!(
            "T_W sim {tw_sim} vs {tw:.1}: {p_tw}; II insertions {ii_sim} vs {ii:.1}: {p_ii}; \
             E[N_W] sim {nw:.4} vs lemma {:.4}: {p_nw}; E[N_A] sim {na:.4} vs lemma {:.4}: {p_na} \
             (renewal derivation {:.4}, {:.4}); {:.1}s",
            counts.e_nw,
            counts.e_na,
            counts.e_nw_direct,
            counts.e_na_direct,
            took.as_secs_f64()
        ),
    ))
}

/// `E[1/N]` for M/M/1 busy periods at load `rho`.
fn mm1_inverse_bp_size(rho: f64) -> f64 {
    let mut acc = 0.0;
    let mut c = 1.0;
    for n in 1..2000u32 {
        let nf = n as f64;
        let term = c * rho.powi(n as i32 - 1) / (1.0 + rho).powi(2 * n as i32 - 1) / (nf * nf);
        acc += term;
        if term < 1e-18 {
            break;
        }
        c *= (2.0 * nf) * (2.0 * nf - 1.0) / (nf * nf);
    }
    acc
}

fn criterion_8() -> Res {
    let p = base();
    let batch = BatchPMF::point(1);
    let pi_j = mm1_inverse_bp_size(0.5);
    let (res, took) = timed(|| -> Result<_, String> {
        let c0v = iia_c0(&p, &batch, pi_j).map_err(err)?.value().ok_or("iia c0 diverges")?;
        let f4 = iia_f(&p, 1e-4, &batch, pi_j).map_err(err)?;
        let f3 = iia_f(&p, 1e-3, &batch, pi_j).map_err(err)?;
        Ok((c0v, f4, f3))
    });
    let (c0v, f4, f3) = res?;
    let first = (f4 - 1.0).abs() < 1e-3 * c0v.abs();
    let coeff = (f3 - 1.0) / 1e-6;
    let second = within_rel(coeff, c0v, 0.02);
    let pass = first && second && took < Duration::from_secs(5);
    Ok(outcome(
        pass,
        format!("|F(1e-4)-1| {:.3e} (< {:.3e}); (F(1e-3)-1)/1e-6 {coeff:.6} vs c0 {c0v:.6}; {:.2}s", (f4 - 1.0).abs(), 1e-3 * c0v.abs(), took.as_secs_f64()),
    ))
}

fn criterion_9() -> Res {
    let mut rng = stream(9, &[]);
    // double sums on random pmfs
    let mut worst_ds: f64 = 0.0;
    for _ in 0..100 {
        let len = rng.random_range(1..8usize);
        let mut w: Vec<f64> = (0..len).map(|_| rng.random::<f64>()).collect();
        let s: f64 = w.iter().sum();
        w.iter_mut().for_each(|x| *x /= s);
        let last = 1.0 - w[..len - 1].iter().sum::<f64>();
        w[len - 1] = last.max(0.0);
        let b = BatchPMF::new(w).map_err(err)?;
        let pp = rng.random_range(0.05..0.95);
        let ds = double_sum_identity(&b, pp).map_err(err)?;
        worst_ds = worst_ds.max((ds.lhs - ds.rhs).abs());
    }
    let p_ds = worst_ds <= 1e-12;

    // int g2_hat = p
    let quad = Quad::default().with_rel_tol(1e-12);
    let mut worst_g2: f64 = 0.0;
    for (lam, mu2) in [(0.5f64, 1.0), (0.2, 3.0), (1.5, 0.7)] {
        let mu1 = 2.0 * lam.max(1.0);
        let p = SystemParams::exp_exp(lam, mu1, mu2).map_err(err)?;
        let i = quad.integrate_semi_inf(|t| g2_hat(&p, t).unwrap(), 0.0, 1.0 / mu2).map_err(err)?.value;
        // p = 1 - mu2 / (mu2 + lambda)
        worst_g2 = worst_g2.max((i - lam / (lam + mu2)).abs());
    }
    let p_g2 = worst_g2 <= 1e-8;

    // w1 = g1 W and f_{+,1} = f0 (1 + II deviation) are densities
    let p = SystemParams::exp_exp(0.5, 1.0, 1.0).map_err(err)?;
    let m = IiaModel::new(&p, 0.2, &BatchPMF::new(vec![0.2, 0.5, 0.3]).map_err(err)?, 0.6).map_err(err)?;
    let w1 = quad
        .integrate_semi_inf(|x| if x > 745.0 { 0.0 } else { (-x).exp() * m.w(x).unwrap() }, 0.0, 1.0)
        .map_err(err)?
        .value;
    let ii = LikelihoodRatio::new(&SystemParams::exp_exp(0.5, 1.5, 1.0).map_err(err)?, 0.4, Statistic::IIYV).map_err(err)?;
    let q7 = Quad::default().with_rel_tol(1e-10);
    let f1 = q7
        .integrate_semi_inf(
            |v| {
                0.5 * (-0.5 * v).exp()
                    * q7.integrate_semi_inf(
                        |x| {
                            let w = 1.5 * (-1.5 * x).exp();
                            if w == 0.0 {
                                0.0
                            } else {
                                w * ii.ratio_yv(x, v).unwrap()
                            }
                        },
                        0.0,
                        1.0,
                    )
                    .unwrap()
                    .value
            },
            0.0,
            2.0,
        )
        .map_err(err)?
        .value;
    let p_norm = (w1 - 1.0).abs() <= 1e-7 && (f1 - 1.0).abs() <= 1e-7;

    // monotonicity in r
    let thetas: Vec<f64> = (1..=10).map(|k| k as f64 / 11.0).collect();
    let rs: Vec<f64> = (0..10).map(|k| 0.3 + 0.4 * k as f64).collect();
    let steps = [0.05, 0.2, 0.5, 1.0, 2.5];
    let mut violations = 0;
    for &th in &thetas {
        for &r in &rs {
            let base = mean_sqrt_xi(th, r).map_err(err)?;
            for &d in &steps {
                if mean_sqrt_xi(th, r + d).map_err(err)? > base + 1e-12 {
                    violations += 1;
                }
            }
        }
    }
    let p_mono = violations == 0;
    let pass = p_ds && p_g2 && p_norm && p_mono;
    Ok(outcome(
        pass,
        format!(
            "double sums max err {worst_ds:.2e}; int g2_hat max err {worst_g2:.2e}; w1 {w1:.10}, f+1 {f1:.10}; monotonicity violations {violations}/500"
        ),
    ))
}

fn criterion_10() -> Res {
    let p = base();
    let q = 0.3;
    let pol = Policy::IEBP { q };
    let yv = estimate_pe_par(&p, &pol, &DetectorSpec::new(Statistic::YV, q), 1000, 400, 101).map_err(err)?;
    let y = estimate_pe_par(&p, &pol, &DetectorSpec::new(Statistic::YOnly, q), 1000, 400, 101).map_err(err)?;
    let ci = yv.ci_halfwidth.max(y.ci_halfwidth);
    let pass = yv.p_e <= y.p_e + 3.0 * ci;
    Ok(outcome(pass, format!("p_e(YV) {:.4} vs p_e(YOnly) {:.4} + 3*{ci:.4}", yv.p_e, y.p_e)))
}

fn report(id: u32, r: Res) -> bool {
    let (pass, detail) = match r {
        Ok(o) => (o.pass, o.detail),
        Err(e) => (false, format!("error: {e}")),
    };
    println!("criterion {id:>2}: {} | {detail}", if pass { "PASS" } else { "FAIL" });
    pass
}

#[test]
fn acceptance() {
    let mut rows = Vec::new();
    let results = [
        report(1, criterion_1()),
        report(2, criterion_2()),
        report(3, criterion_3()),
        report(4, criterion_4()),
        report(5, criterion_5(&mut rows)),
        report(6, criterion_6(&rows)),
        report(7, criterion_7()),
        report(8, criterion_8()),
        report(9, criterion_9()),
        report(10, criterion_10()),
    ];
    let failed: Vec<_> = results.iter().enumerate().filter(|(_, &p)| !p).map(|(i, _)| i + 1).collect();
    assert!(failed.is_empty(), "failing criteria: {failed:?}");
}

#[test]
fn i_beta_oracle_agrees_with_library() {
    for b in [1.2, 1.5, 1.8] {
        assert!((i_beta_trapezoid(b) - i_beta(b).unwrap()).abs() < 1e-9);
    }
    // closed form at beta = 3/2
    assert!((i_beta_trapezoid(1.5) - 1.0).abs() < 1e-9);
}

#[test]
fn c0_reference_matches_library() {
    for mu1 in [0.8, 1.0, 1.7] {
        let want = c0_exp_exp_reference(0.5, mu1, 1.0).unwrap();
        let got = c0(&SystemParams::exp_exp(0.5, mu1, 1.0).unwrap()).value().unwrap();
        assert!((got - want).abs() < 1e-8 * want.max(1.0), "mu1={mu1}: {got} vs {want}");
    }
}
