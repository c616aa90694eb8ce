//! Karhunen-Loève discretization against closed-form results for the 1D
//! exponential kernel `σ² exp(-|x - y| / l)` on `[0, L]`.

use stochafem_core::random_field::{
    assemble_covariance_problem, draw_samples, evaluate_field, solve_kl_eigenproblem, truncation_energy,
};
use stochafem_core::{CovarianceKernel, ElementKind, Marginal, Mesh, PropertyGroup};

fn line_mesh(n: usize, length: f64) -> Mesh {
    let mut m = Mesh::new(1).unwrap();
    m.add_group(PropertyGroup {
        a: 1.0,
        ..PropertyGroup::new(1, 1.0)
    })
    .unwrap();
    for i in 0..n {
        m.add_node(i + 1, &[length * i as f64 / (n - 1) as f64]).unwrap();
    }
    for i in 1..n {
        m.add_element(i, ElementKind::Bar, &[i, i + 1], 1).unwrap();
    }
    m
}

fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let mut flo = f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if (fm > 0.0) == (flo > 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Largest `count` eigenvalues on `[0, length]`. With half-width `a` and
/// `c = 1/l`, even modes solve `c - ω tan(ωa) = 0` and odd modes
/// `ω + c tan(ωa) = 0`; each gives `λ = 2cσ² / (ω² + c²)`.
fn analytic_eigenvalues(sigma2: f64, corr_len: f64, length: f64, count: usize) -> Vec<f64> {
    let (a, c) = (0.5 * length, 1.0 / corr_len);
    let pi = std::f64::consts::PI;
    let tiny = 1e-12;
    let mut omegas = Vec::new();
    for i in 0..count {
        let base = i as f64 * pi;
        omegas.push(bisect(
            |w| c - w * (w * a).tan(),
            (base + tiny) / a,
            (base + 0.5 * pi - tiny) / a,
        ));
        omegas.push(bisect(
            |w| w + c * (w * a).tan(),
            (base + 0.5 * pi + tiny) / a,
            (base + pi - tiny) / a,
        ));
    }
    omegas.sort_by(f64::total_cmp);
    omegas
        .iter()
        .take(count)
        .map(|w| 2.0 * c * sigma2 / (w * w + c * c))
        .collect()
}

#[test]
fn oracle_roots_satisfy_their_equations() {
    let ev = analytic_eigenvalues(1.0, 1.0, 1.0, 5);
    // Hand-solved first root: ω tan(ω/2) = 1 at ω ≈ 1.30654.
    let w1 = 1.306_542_374;
    assert!((ev[0] - 2.0 / (w1 * w1 + 1.0)).abs() < 1e-8);
    assert!(ev.windows(2).all(|p| p[0] > p[1]));
}

#[test]
fn leading_eigenvalues_match_the_transcendental_solution() {
    let mesh = line_mesh(200, 1.0);
    let kernel = CovarianceKernel::separable_exponential(1.0, vec![1.0]).unwrap();
    let (c, w) = assemble_covariance_problem(&mesh, &kernel).unwrap();
    let kl = solve_kl_eigenproblem(&c, &w, 5).unwrap();
    let exact = analytic_eigenvalues(1.0, 1.0, 1.0, 5);
    for (i, (num, ana)) in kl.eigenvalues.iter().zip(&exact).enumerate() {
        let rel = (num - ana).abs() / ana;
        assert!(rel <= 0.02, "mode {}: numeric {num}, analytic {ana}, rel {rel}", i + 1);
    }
}

#[test]
fn full_rank_basis_is_weighted_orthonormal_and_keeps_all_energy() {
    let n = 200;
    let mesh = line_mesh(n, 1.0);
    let kernel = CovarianceKernel::separable_exponential(1.0, vec![1.0]).unwrap();
    let (c, w) = assemble_covariance_problem(&mesh, &kernel).unwrap();
    let kl = solve_kl_eigenproblem(&c, &w, n).unwrap();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in i..n {
            let g: f64 = (0..n)
                .map(|a| kl.eigenvectors[i][a] * w[a] * kl.eigenvectors[j][a])
                .sum();
            worst = worst.max((g - if i == j { 1.0 } else { 0.0 }).abs());
        }
    }
    assert!(worst <= 1e-8, "orthonormality defect {worst}");
    assert!((truncation_energy(&kl, n) - 1.0).abs() <= 1e-8);
    assert_eq!(truncation_energy(&kl, 0), 0.0);
    let trace: f64 = w.iter().sum();
    assert!((kl.eigenvalues.iter().sum::<f64>() - trace).abs() <= 1e-8);
}

#[test]
fn five_modes_capture_most_energy_when_correlation_spans_the_domain() {
    let mesh = line_mesh(200, 4.0);
    let kernel = CovarianceKernel::separable_exponential(2.0, vec![4.0]).unwrap();
    let (c, w) = assemble_covariance_problem(&mesh, &kernel).unwrap();
    let kl = solve_kl_eigenproblem(&c, &w, 5).unwrap();
    let energy = truncation_energy(&kl, 5);
    let exact: f64 = analytic_eigenvalues(2.0, 4.0, 4.0, 5).iter().sum::<f64>() / (2.0 * 4.0);
    assert!(energy > 0.9, "{energy}");
    assert!((energy - exact).abs() < 0.02, "{energy} vs {exact}");
}

#[test]
fn sampled_field_reproduces_the_kernel_up_to_truncation() {
    let (n, m, r) = (60, 6, 10_000);
    let mesh = line_mesh(n, 1.0);
    let kernel = CovarianceKernel::separable_exponential(1.0, vec![0.3]).unwrap();
    let (c, w) = assemble_covariance_problem(&mesh, &kernel).unwrap();
    let full = solve_kl_eigenproblem(&c, &w, n).unwrap();
    let kl = full.clone().truncated(m);
    let tail: f64 = full.eigenvalues[m..].iter().sum();
    let kept: f64 = kl.eigenvalues.iter().sum();
    let kept_sq: f64 = kl.eigenvalues.iter().map(|l| l * l).sum();

    let s = draw_samples(m, 0, r, 17, &[Marginal::StandardNormal; 6]).unwrap();
    let mut cov = vec![0.0; n * n];
    for row in 0..r {
        let v = evaluate_field(&kl, &s.xi.row(row)).unwrap();
        for a in 0..n {
            for b in 0..n {
                cov[a * n + b] += v[a] * v[b];
            }
        }
    }
    // Weighted Frobenius distance between the sample covariance and the kernel.
    let mut dist = 0.0;
    for a in 0..n {
        for b in 0..n {
            let e = cov[a * n + b] / r as f64 - c[(a, b)];
            dist += w[a] * w[b] * e * e;
        }
    }
    let dist = dist.sqrt();
    let sampling = 3.0 * ((kept * kept + kept_sq) / r as f64).sqrt();
    assert!(dist <= tail + sampling, "distance {dist}, tail {tail}, sampling {sampling}");
}
