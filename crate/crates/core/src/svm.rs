//! One-vs-rest SVM scene classifier with linear and additive kernels.
//!
//! Each binary problem is the L2-regularized hinge-loss SVM solved in the
//! dual by cyclic coordinate descent over `α ∈ [0, C]^n`. The bias is
//! learned by appending a constant 1 to every feature, which for kernels
//! amounts to `K'(x, y) = K(x, y) + 1`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::labeling::argmax;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kernel {
    Linear,
    Intersection,
    ChiSquared,
    JensenShannon,
}

impl Kernel {
    pub const ALL: [Kernel; 4] = [
        Kernel::Linear,
        Kernel::Intersection,
        Kernel::ChiSquared,
        Kernel::JensenShannon,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Kernel::Linear => "linear",
            Kernel::Intersection => "intersection",
            Kernel::ChiSquared => "chi2",
            Kernel::JensenShannon => "js",
        }
    }

    pub fn requires_nonnegative(&self) -> bool {
        !matches!(self, Kernel::Linear)
    }

    pub fn check_domain(&self, x: &[f64]) -> Result<()> {
        if self.requires_nonnegative() {
            if let Some(i) = x.iter().position(|&v| v < 0.0) {
                return Err(Error::Domain(format!(
                    "{} kernel needs non-negative features, component {i} is {}",
                    self.name(),
                    x[i]
                )));
            }
        }
        Ok(())
    }

    /// Kernel value. Panics on length mismatch; see [`kernel_eval`] for the
    /// checked form.
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        assert_eq!(x.len(), y.len(), "kernel inputs differ in length");
        match self {
            Kernel::Linear => x.iter().zip(y).map(|(a, b)| a * b).sum(),
            Kernel::Intersection => x.iter().zip(y).map(|(a, b)| a.min(*b)).sum(),
            Kernel::ChiSquared => x
                .iter()
                .zip(y)
                .map(|(&a, &b)| {
                    let s = a + b;
                    if s > 0.0 {
                        2.0 * a * b / s
                    } else {
                        0.0
                    }
                })
                .sum(),
            Kernel::JensenShannon => x
                .iter()
                .zip(y)
                .map(|(&a, &b)| {
                    let s = a + b;
                    let term = |v: f64| if v > 0.0 { 0.5 * v * (s / v).log2() } else { 0.0 };
                    term(a) + term(b)
                })
                .sum(),
        }
    }
}

impl FromStr for Kernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Kernel::Linear),
            "intersection" | "hik" => Ok(Kernel::Intersection),
            "chi2" => Ok(Kernel::ChiSquared),
            "js" | "jensen_shannon" => Ok(Kernel::JensenShannon),
            other => Err(Error::Invalid(format!("unknown kernel {other:?}"))),
        }
    }
}

pub fn kernel_eval(kernel: Kernel, x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Dimension(format!(
            "kernel inputs have lengths {} and {}",
            x.len(),
            y.len()
        )));
    }
    kernel.check_domain(x)?;
    kernel.check_domain(y)?;
    Ok(kernel.eval(x, y))
}

#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub c: f64,
    pub tol: f64,
    pub max_passes: usize,
    /// Record the dual objective after every full pass.
    pub trace_objective: bool,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            c: 1.0,
            tol: 1e-4,
            max_passes: 10_000,
            trace_objective: false,
        }
    }
}

/// Solution of one binary problem.
#[derive(Debug, Clone)]
pub struct BinarySolution {
    pub alpha: Vec<f64>,
    /// Largest projected-gradient violation in the final pass.
    pub violation: f64,
    pub passes: usize,
    /// Dual objective `½ αᵀQα − Σα` after each pass, when traced.
    pub objective_trace: Vec<f64>,
}

/// Solves `min ½ αᵀQα − eᵀα, 0 ≤ α ≤ C` with `Q_ij = y_i y_j K_ij`, where
/// `gram` is the (bias-augmented) kernel matrix in row-major order and
/// `signs` holds `y_i ∈ {−1, +1}`.
pub fn solve_dual(gram: &[f64], signs: &[f64], opts: &TrainOptions) -> BinarySolution {
    let n = signs.len();
    assert_eq!(gram.len(), n * n);
    let mut alpha = vec![0.0f64; n];
    // grad = Qα − e
    let mut grad = vec![-1.0f64; n];
    let mut trace = Vec::new();
    let mut violation = f64::INFINITY;
    let mut passes = 0;
    while passes < opts.max_passes {
        passes += 1;
        violation = 0.0;
        for i in 0..n {
            let g = grad[i];
            let pg = if alpha[i] <= 0.0 {
                g.min(0.0)
            } else if alpha[i] >= opts.c {
                g.max(0.0)
            } else {
                g
            };
            violation = f64::max(violation, pg.abs());
            let qii = gram[i * n + i];
            if pg == 0.0 || qii <= 0.0 {
                continue;
            }
            let old = alpha[i];
            alpha[i] = (old - g / qii).clamp(0.0, opts.c);
            let delta = (alpha[i] - old) * signs[i];
            if delta != 0.0 {
                let row = &gram[i * n..(i + 1) * n];
                for j in 0..n {
                    grad[j] += delta * signs[j] * row[j];
                }
            }
        }
        if opts.trace_objective {
            trace.push(dual_objective(&alpha, &grad));
        }
        if violation < opts.tol {
            break;
        }
    }
    BinarySolution {
        alpha,
        violation,
        passes,
        objective_trace: trace,
    }
}

/// With `grad = Qα − e`: `½ αᵀQα − eᵀα = ½ αᵀ(grad − e)`.
fn dual_objective(alpha: &[f64], grad: &[f64]) -> f64 {
    alpha.iter().zip(grad).map(|(a, g)| 0.5 * a * (g - 1.0)).sum()
}

/// Per-class decision function.
#[derive(Debug, Clone, PartialEq)]
enum ClassModel {
    Linear { weights: Vec<f64>, bias: f64 },
    /// `Σ_j coef_j K(sv_j, x) + bias`; coefficients already carry the sign.
    Kernel { coefs: Vec<f64>, bias: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    kernel: Kernel,
    dim: usize,
    c: f64,
    classes: Vec<ClassModel>,
    /// Stored training vectors shared by all kernelized classes.
    support: Vec<Vec<f64>>,
    pub passes: Vec<usize>,
    pub violations: Vec<f64>,
}

impl SvmModel {
    pub fn kernel(&self) -> Kernel {
        self.kernel
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// A model whose decision values are all zero, for `classes` classes.
    pub fn zeroed(kernel: Kernel, classes: usize, dim: usize) -> Self {
        let class = match kernel {
            Kernel::Linear => ClassModel::Linear {
                weights: vec![0.0; dim],
                bias: 0.0,
            },
            _ => ClassModel::Kernel {
                coefs: vec![],
                bias: 0.0,
            },
        };
        SvmModel {
            kernel,
            dim,
            c: 1.0,
            classes: vec![class; classes],
            support: vec![],
            passes: vec![0; classes],
            violations: vec![0.0; classes],
        }
    }

    pub fn decision_values(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim {
            return Err(Error::Dimension(format!(
                "feature has length {} but the model expects {}",
                x.len(),
                self.dim
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("non-finite feature value".into()));
        }
        self.kernel.check_domain(x)?;
        let kvals: Vec<f64> = match self.kernel {
            Kernel::Linear => vec![],
            k => self.support.iter().map(|s| k.eval(s, x)).collect(),
        };
        Ok(self
            .classes
            .iter()
            .map(|m| match m {
                ClassModel::Linear { weights, bias } => {
                    weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + bias
                }
                ClassModel::Kernel { coefs, bias } => {
                    coefs.iter().zip(&kvals).map(|(a, k)| a * k).sum::<f64>() + bias
                }
            })
            .collect())
    }

    /// Class with the largest decision value (lowest id on ties) and all
    /// decision values.
    pub fn predict(&self, x: &[f64]) -> Result<(usize, Vec<f64>)> {
        let values = self.decision_values(x)?;
        Ok((argmax(&values), values))
    }

    /// Text format: a `PXSVM 1 <kernel> <M> <dim> <C>` header, then one
    /// `bias w…` line per class for linear models. Kernel models continue
    /// with `n`, one `bias a…` line per class, and `n` lines
    /// `index v…` of stored vectors.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(
            out,
            "PXSVM 1 {} {} {} {:?}",
            self.kernel.name(),
            self.classes.len(),
            self.dim,
            self.c
        )
        .unwrap();
        let join = |vals: &[f64]| {
            vals.iter()
                .map(|v| format!("{v:?}"))
                .collect::<Vec<_>>()
                .join(" ")
        };
        if self.kernel != Kernel::Linear {
            writeln!(out, "{}", self.support.len()).unwrap();
        }
        for m in &self.classes {
            match m {
                ClassModel::Linear { weights, bias } | ClassModel::Kernel { coefs: weights, bias } => {
                    if weights.is_empty() {
                        writeln!(out, "{bias:?}").unwrap();
                    } else {
                        writeln!(out, "{bias:?} {}", join(weights)).unwrap();
                    }
                }
            }
        }
        for (i, s) in self.support.iter().enumerate() {
            writeln!(out, "{i} {}", join(s)).unwrap();
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Format("empty model file".into()))?;
        let h: Vec<&str> = header.split_whitespace().collect();
        if h.len() != 6 || h[0] != "PXSVM" || h[1] != "1" {
            return Err(Error::Format(format!("malformed model header {header:?}")));
        }
        let kernel: Kernel = h[2]
            .parse()
            .map_err(|_| Error::Format(format!("unknown kernel {:?} in header", h[2])))?;
        let bad = |what: &str| Error::Format(format!("model file: {what}"));
        let m: usize = h[3].parse().map_err(|_| bad("class count"))?;
        let dim: usize = h[4].parse().map_err(|_| bad("dimension"))?;
        let c: f64 = h[5].parse().map_err(|_| bad("C"))?;
        let nums = |line: Option<&str>, what: &str| -> Result<Vec<f64>> {
            let line = line.ok_or_else(|| bad(&format!("truncated before {what}")))?;
            line.split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|_| bad(&format!("bad number in {what}"))))
                .collect()
        };
        let n_support = if kernel == Kernel::Linear {
            0
        } else {
            let line = lines.next().ok_or_else(|| bad("truncated before support count"))?;
            line.trim().parse::<usize>().map_err(|_| bad("support count"))?
        };
        let mut classes = Vec::with_capacity(m);
        for k in 0..m {
            let v = nums(lines.next(), &format!("class {k}"))?;
            let expect = if kernel == Kernel::Linear { dim } else { n_support };
            if v.len() != expect + 1 {
                return Err(bad(&format!("class {k} has {} coefficients, expected {expect}", v.len().saturating_sub(1))));
            }
            let (bias, rest) = (v[0], v[1..].to_vec());
            classes.push(if kernel == Kernel::Linear {
                ClassModel::Linear { weights: rest, bias }
            } else {
                ClassModel::Kernel { coefs: rest, bias }
            });
        }
        let mut support = Vec::with_capacity(n_support);
        for j in 0..n_support {
            let v = nums(lines.next(), &format!("support vector {j}"))?;
            if v.len() != dim + 1 || v[0] != j as f64 {
                return Err(bad(&format!("support vector {j} malformed")));
            }
            support.push(v[1..].to_vec());
        }
        Ok(SvmModel {
            kernel,
            dim,
            c,
            classes,
            support,
            passes: vec![0; m],
            violations: vec![0.0; m],
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

fn validate_training_set(features: &[Vec<f64>], labels: &[usize], kernel: Kernel) -> Result<usize> {
    if features.len() != labels.len() {
        return Err(Error::Dimension(format!(
            "{} features but {} labels",
            features.len(),
            labels.len()
        )));
    }
    let dim = features
        .first()
        .map(Vec::len)
        .ok_or_else(|| Error::Invalid("empty training set".into()))?;
    for (i, f) in features.iter().enumerate() {
        if f.len() != dim {
            return Err(Error::Dimension(format!(
                "feature {i} has length {} but feature 0 has {dim}",
                f.len()
            )));
        }
        if f.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid(format!("feature {i} has a non-finite value")));
        }
        kernel.check_domain(f)?;
    }
    let first = labels[0];
    if labels.iter().all(|&l| l == first) {
        return Err(Error::Invalid(
            "training set needs at least two distinct labels".into(),
        ));
    }
    Ok(dim)
}

/// Bias-augmented Gram matrix `K(x_i, x_j) + 1`.
pub fn gram_matrix(kernel: Kernel, features: &[Vec<f64>]) -> Vec<f64> {
    let n = features.len();
    let mut gram = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let v = kernel.eval(&features[i], &features[j]) + 1.0;
            gram[i * n + j] = v;
            gram[j * n + i] = v;
        }
    }
    gram
}

/// Trains one binary problem per class id `0..=max(labels)`. A class with
/// no training samples gets a constant decision value of −1.
pub fn train_svm(
    features: &[Vec<f64>],
    labels: &[usize],
    kernel: Kernel,
    opts: &TrainOptions,
) -> Result<SvmModel> {
    let dim = validate_training_set(features, labels, kernel)?;
    if !(opts.c > 0.0) {
        return Err(Error::Invalid(format!("C must be positive, got {}", opts.c)));
    }
    let num_classes = labels.iter().max().unwrap() + 1;
    let gram = gram_matrix(kernel, features);
    let mut classes = Vec::with_capacity(num_classes);
    let mut passes = Vec::with_capacity(num_classes);
    let mut violations = Vec::with_capacity(num_classes);
    for class in 0..num_classes {
        let signs: Vec<f64> = labels
            .iter()
            .map(|&l| if l == class { 1.0 } else { -1.0 })
            .collect();
        let sol = solve_dual(&gram, &signs, opts);
        // signed coefficients a_i = α_i y_i; the augmented coordinate gives the bias
        let coefs: Vec<f64> = sol.alpha.iter().zip(&signs).map(|(a, y)| a * y).collect();
        let bias: f64 = coefs.iter().sum();
        classes.push(match kernel {
            Kernel::Linear => {
                let mut weights = vec![0.0; dim];
                for (a, x) in coefs.iter().zip(features) {
                    for (w, v) in weights.iter_mut().zip(x) {
                        *w += a * v;
                    }
                }
                ClassModel::Linear { weights, bias }
            }
            _ => ClassModel::Kernel { coefs, bias },
        });
        passes.push(sol.passes);
        violations.push(sol.violation);
    }
    let support = if kernel == Kernel::Linear {
        vec![]
    } else {
        features.to_vec()
    };
    Ok(SvmModel {
        kernel,
        dim,
        c: opts.c,
        classes,
        support,
        passes,
        violations,
    })
}

/// Default grid for [`select_c`].
pub const C_GRID: [f64; 5] = [0.01, 0.1, 1.0, 10.0, 100.0];

/// Picks the `C` from `grid` with the best k-fold accuracy (first best on
/// ties). Fold `f` holds samples with `index % k == f`.
pub fn select_c(
    features: &[Vec<f64>],
    labels: &[usize],
    kernel: Kernel,
    grid: &[f64],
    folds: usize,
) -> Result<f64> {
    validate_training_set(features, labels, kernel)?;
    if folds < 2 || folds > features.len() {
        return Err(Error::Invalid(format!("cannot split {} samples into {folds} folds", features.len())));
    }
    let mut best = (f64::NEG_INFINITY, grid.first().copied().unwrap_or(1.0));
    for &c in grid {
        let mut hits = 0usize;
        for fold in 0..folds {
            let (mut tx, mut ty, mut vx, mut vy) = (vec![], vec![], vec![], vec![]);
            for (i, (x, &y)) in features.iter().zip(labels).enumerate() {
                if i % folds == fold {
                    vx.push(x.clone());
                    vy.push(y);
                } else {
                    tx.push(x.clone());
                    ty.push(y);
                }
            }
            if ty.iter().all(|&l| l == ty[0]) {
                // single-class training fold: predict that class
                hits += vy.iter().filter(|&&l| l == ty[0]).count();
                continue;
            }
            let model = train_svm(&tx, &ty, kernel, &TrainOptions { c, ..Default::default() })?;
            for (x, &y) in vx.iter().zip(&vy) {
                hits += usize::from(model.predict(x)?.0 == y);
            }
        }
        let acc = hits as f64 / features.len() as f64;
        if acc > best.0 {
            best = (acc, c);
        }
    }
    Ok(best.1)
}
