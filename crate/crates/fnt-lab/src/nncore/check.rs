//! Finite-difference gradient verification.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::archive::ParameterArchive;
use super::tape::GradMap;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub coordinates: usize,
    pub max_rel_err: f64,
    pub tol: f64,
    /// (parameter name, flat index) of the worst coordinate.
    pub worst: Option<(String, usize)>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err < self.tol
    }
}

/// Relative error with the unit floor, |a−b| / max(1, |a|, |b|).
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / 1.0_f64.max(a.abs()).max(b.abs())
}

/// Compare an analytic gradient against central differences of `loss_fn`
/// on `samples` randomly chosen parameter coordinates.
///
/// `loss_fn` must be a deterministic scalar function of the archive. The
/// analytic gradient is supplied by the caller (typically a tape backward
/// pass) so this check stays independent of the path it verifies.
pub fn gradient_check<L>(
    loss_fn: L,
    params: &ParameterArchive,
    analytic: &GradMap,
    h: f64,
    tol: f64,
    samples: usize,
    seed: u64,
) -> GradCheckReport
where
    L: Fn(&ParameterArchive) -> f64,
{
    let names: Vec<&str> = params.names().collect();
    let total: usize = names.iter().map(|n| params.get(n).len()).sum();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report =
        GradCheckReport { coordinates: 0, max_rel_err: 0.0, tol, worst: None };

    for _ in 0..samples {
        let mut flat = rng.gen_range(0..total);
        let mut name = names[0];
        for n in &names {
            let len = params.get(n).len();
            if flat < len {
                name = n;
                break;
            }
            flat -= len;
        }

        let mut probe = params.clone();
        let base = probe.get(name).data[flat];
        probe.get_mut(name).data[flat] = base + h;
        let up = loss_fn(&probe);
        probe.get_mut(name).data[flat] = base - h;
        let down = loss_fn(&probe);
        let fd = (up - down) / (2.0 * h);
        let an = analytic.get(name).map(|g| g[flat]).unwrap_or(0.0);

        let err = rel_err(an, fd);
        report.coordinates += 1;
        if err > report.max_rel_err {
            report.max_rel_err = err;
            report.worst = Some((name.to_string(), flat));
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quadratic_setup() -> (ParameterArchive, GradMap) {
        let mut arch = ParameterArchive::new();
        arch.insert("p", vec![4], vec![0.3, -1.2, 0.0, 2.5]);
        let mut grads = GradMap::new();
        grads.insert("p".into(), arch.get("p").data.iter().map(|v| 2.0 * v).collect());
        (arch, grads)
    }

    fn quadratic(a: &ParameterArchive) -> f64 {
        a.get("p").data.iter().map(|v| v * v).sum()
    }

    #[test]
    fn quadratic_gradient_matches() {
        let (arch, grads) = quadratic_setup();
        let report = gradient_check(quadratic, &arch, &grads, 1e-4, 1e-6, 40, 11);
        assert!(report.passed(), "max rel err {}", report.max_rel_err);
    }

    #[test]
    fn corrupted_gradient_is_flagged() {
        let (arch, mut grads) = quadratic_setup();
        grads.get_mut("p").unwrap()[2] = 5.0; // true gradient there is 0
        let report = gradient_check(quadratic, &arch, &grads, 1e-4, 1e-6, 60, 11);
        assert!(!report.passed());
        assert_eq!(report.worst.as_ref().unwrap().0, "p");
    }
}
