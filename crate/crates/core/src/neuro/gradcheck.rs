use ndarray::ArrayView2;

use super::network::{Gradients, QNetwork};
use super::NeuroError;

const STEP: f64 = 1e-5;
const REL_FLOOR: f64 = 1e-6;

/// Location of one scalar parameter.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamCoord {
    Weight { layer: usize, row: usize, col: usize },
    Bias { layer: usize, index: usize },
}

impl std::fmt::Display for ParamCoord {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Weight { layer, row, col } => write!(f, "layer {layer} weight[{row}, {col}]"),
            Self::Bias { layer, index } => write!(f, "layer {layer} bias[{index}]"),
        }
    }
}

fn coord_of(net: &QNetwork, mut flat: usize) -> ParamCoord {
    for (layer, l) in net.layers().iter().enumerate() {
        let nw = l.weights.len();
        if flat < nw {
            let cols = l.weights.ncols();
            return ParamCoord::Weight { layer, row: flat / cols, col: flat % cols };
        }
        flat -= nw;
        if flat < l.bias.len() {
            return ParamCoord::Bias { layer, index: flat };
        }
        flat -= l.bias.len();
    }
    panic!("flat index out of range")
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoordReport {
    pub coord: ParamCoord,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub tolerance: f64,
    pub max_rel_error: f64,
    /// Coordinate with the largest error, if any was compared.
    pub worst: Option<CoordReport>,
    /// Every coordinate over tolerance.
    pub failures: Vec<CoordReport>,
    pub checked: usize,
    /// Coordinates skipped because a ReLU switched inside the stencil.
    pub skipped_kinks: usize,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

impl std::fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let verdict = if self.passed() { "PASS" } else { "FAIL" };
        write!(
            f,
            "{verdict}: max rel error {:.3e} (tol {:.1e}), {} checked, {} skipped at kinks",
            self.max_rel_error, self.tolerance, self.checked, self.skipped_kinks
        )?;
        for c in self.failures.iter().take(10) {
            write!(f, "\n  {}: analytic {:.6e}, numeric {:.6e}, rel {:.3e}", c.coord, c.analytic, c.numeric, c.rel_error)?;
        }
        Ok(())
    }
}

fn objective(net: &QNetwork, x: ArrayView2<f64>, g: ArrayView2<f64>) -> Result<(f64, Vec<bool>), NeuroError> {
    let cache = net.forward_cached(x)?;
    let b = x.nrows().max(1) as f64;
    let value = (&cache.output * &g).sum() / b;
    Ok((value, cache.hidden_mask()))
}

/// Central differences of `mean_b <g_b, f(x_b)>`; `None` where the ReLU
/// pattern differs between the two stencil points.
pub fn numeric_gradient(net: &QNetwork, x: ArrayView2<f64>, g: ArrayView2<f64>) -> Result<Vec<Option<f64>>, NeuroError> {
    let base = net.params_flat();
    let mut probe = net.clone();
    let mut params = base.clone();
    let mut out = Vec::with_capacity(base.len());
    for i in 0..base.len() {
        params[i] = base[i] + STEP;
        probe.set_params_flat(&params)?;
        let (plus, mask_plus) = objective(&probe, x, g)?;
        params[i] = base[i] - STEP;
        probe.set_params_flat(&params)?;
        let (minus, mask_minus) = objective(&probe, x, g)?;
        params[i] = base[i];
        out.push((mask_plus == mask_minus).then(|| (plus - minus) / (2.0 * STEP)));
    }
    Ok(out)
}

/// Compares a supplied analytic gradient with central differences.
pub fn compare_gradients(
    net: &QNetwork,
    x: ArrayView2<f64>,
    g: ArrayView2<f64>,
    analytic: &Gradients,
    tolerance: f64,
) -> Result<GradCheckReport, NeuroError> {
    let analytic = analytic.flat();
    if analytic.len() != net.param_count() {
        return Err(NeuroError::Shape("analytic gradient does not match parameters".into()));
    }
    let numeric = numeric_gradient(net, x, g)?;
    let mut report = GradCheckReport {
        tolerance,
        max_rel_error: 0.0,
        worst: None,
        failures: Vec::new(),
        checked: 0,
        skipped_kinks: 0,
    };
    for (i, (&a, n)) in analytic.iter().zip(numeric).enumerate() {
        let Some(n) = n else {
            report.skipped_kinks += 1;
            continue;
        };
        report.checked += 1;
        let rel = (a - n).abs() / a.abs().max(n.abs()).max(REL_FLOOR);
        let entry = CoordReport { coord: coord_of(net, i), analytic: a, numeric: n, rel_error: rel };
        if rel > report.max_rel_error || report.worst.is_none() {
            report.max_rel_error = report.max_rel_error.max(rel);
            report.worst = Some(entry.clone());
        }
        if !(rel < tolerance) {
            report.failures.push(entry);
        }
    }
    Ok(report)
}

/// Checks `backward` against central differences.
pub fn grad_check(net: &QNetwork, x: ArrayView2<f64>, g: ArrayView2<f64>, tolerance: f64) -> Result<GradCheckReport, NeuroError> {
    let analytic = net.backward(x, g)?;
    compare_gradients(net, x, g, &analytic, tolerance)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SuiteOptions {
    pub nets: usize,
    pub batches: usize,
    pub batch_size: usize,
    pub tolerance: f64,
    pub seed: u64,
    /// Flip the sign of one analytic weight gradient per check.
    pub inject_fault: bool,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self { nets: 10, batches: 10, batch_size: 8, tolerance: 1e-4, seed: 0, inject_fault: false }
    }
}

/// Checks `opts.nets` random three-hidden-layer networks on `opts.batches`
/// random batches each.
pub fn run_suite(opts: &SuiteOptions) -> Result<Vec<GradCheckReport>, NeuroError> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(opts.seed);
    let mut reports = Vec::with_capacity(opts.nets * opts.batches);
    for _ in 0..opts.nets {
        let sizes = [
            rng.random_range(3..9),
            rng.random_range(4..13),
            rng.random_range(4..13),
            rng.random_range(4..13),
            rng.random_range(2..7),
        ];
        let net = QNetwork::new(&sizes, rng.random())?;
        for _ in 0..opts.batches {
            let x = ndarray::Array2::from_shape_simple_fn((opts.batch_size, sizes[0]), || rng.random_range(-1.0..1.0));
            let g = ndarray::Array2::from_shape_simple_fn((opts.batch_size, sizes[4]), || rng.random_range(-1.0..1.0));
            let mut analytic = net.backward(x.view(), g.view())?;
            if opts.inject_fault {
                let w = &mut analytic.layers[0].weights;
                let worst = (0..w.len())
                    .max_by(|&a, &b| w.as_slice().unwrap()[a].abs().total_cmp(&w.as_slice().unwrap()[b].abs()))
                    .unwrap_or(0);
                w.as_slice_mut().unwrap()[worst] *= -1.0;
            }
            reports.push(compare_gradients(&net, x.view(), g.view(), &analytic, opts.tolerance)?);
        }
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn batch(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
        Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-1.0..1.0))
    }

    #[test]
    fn three_layer_net_batch_of_eight() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net = QNetwork::new(&[6, 10, 8, 4], 17).unwrap();
        let x = batch(&mut rng, 8, 6);
        let g = batch(&mut rng, 8, 4);
        let report = grad_check(&net, x.view(), g.view(), 1e-4).unwrap();
        assert!(report.passed(), "{report}");
        assert!(report.checked > net.param_count() / 2);
    }

    #[test]
    fn single_layer_single_row_is_tight() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let net = QNetwork::new(&[5, 3], 2).unwrap();
        let x = batch(&mut rng, 1, 5);
        let g = batch(&mut rng, 1, 3);
        let report = grad_check(&net, x.view(), g.view(), 1e-6).unwrap();
        assert!(report.passed(), "{report}");
        assert_eq!(report.skipped_kinks, 0);
    }

    #[test]
    fn suite_passes_and_catches_faults() {
        let opts = SuiteOptions { nets: 2, batches: 2, ..SuiteOptions::default() };
        assert!(run_suite(&opts).unwrap().iter().all(|r| r.passed()));
        let faulty = run_suite(&SuiteOptions { inject_fault: true, ..opts }).unwrap();
        assert!(faulty.iter().all(|r| !r.passed()));
        assert!(matches!(faulty[0].failures[0].coord, ParamCoord::Weight { layer: 0, .. }));
    }

    #[test]
    fn sign_flip_is_located() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let net = QNetwork::new(&[4, 6, 3], 3).unwrap();
        let x = batch(&mut rng, 4, 4);
        let g = batch(&mut rng, 4, 3);
        let mut grads = net.backward(x.view(), g.view()).unwrap();
        // pick a weight with a clearly nonzero gradient
        let (r, c) = (0..4)
            .flat_map(|r| (0..3).map(move |c| (r, c)))
            .max_by(|a, b| grads.layers[1].weights[*a].abs().total_cmp(&grads.layers[1].weights[*b].abs()))
            .unwrap();
        grads.layers[1].weights[[r, c]] *= -1.0;
        let report = compare_gradients(&net, x.view(), g.view(), &grads, 1e-4).unwrap();
        assert!(!report.passed());
        assert_eq!(report.failures.len(), 1);
        assert_eq!(report.failures[0].coord, ParamCoord::Weight { layer: 1, row: r, col: c });
        assert!(report.to_string().contains(&format!("layer 1 weight[{r}, {c}]")));
    }
}
