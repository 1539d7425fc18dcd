//! Exponential-family regression fitted by iteratively reweighted least
//! squares.
//!
//! The weighted normal equations of each IRLS step are solved through the
//! same Jacobi eigendecomposition as the PCA module; a rank-deficient system
//! raises instead of silently pseudo-inverting. Coefficient covariance is the
//! inverse Fisher information at the fit, scaled by the Pearson dispersion
//! estimate for gaussian and gamma responses (poisson and binomial keep
//! dispersion 1).

use std::fmt::Write as _;

use crate::dimred::jacobi_eigen;
use crate::error::{Error, Result};
use crate::serial::{fmt_f64, join_f64, parse_usize, split_f64};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FamilyKind {
    Gaussian,
    Poisson,
    Gamma,
    Binomial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkKind {
    Identity,
    Log,
    Logit,
}

/// A response family paired with a link whose range respects the family's
/// mean range. Canonical pairings come from [`GlmFamily::canonical`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GlmFamily {
    pub kind: FamilyKind,
    pub link: LinkKind,
}

impl GlmFamily {
    pub fn new(kind: FamilyKind, link: LinkKind) -> Result<Self> {
        let valid = matches!(
            (kind, link),
            (FamilyKind::Gaussian, LinkKind::Identity)
                | (FamilyKind::Gaussian, LinkKind::Log)
                | (FamilyKind::Poisson, LinkKind::Log)
                | (FamilyKind::Gamma, LinkKind::Log)
                | (FamilyKind::Binomial, LinkKind::Logit)
        );
        if !valid {
            return Err(Error::argument(format!(
                "link {link:?} does not respect the mean range of {kind:?}"
            )));
        }
        Ok(GlmFamily { kind, link })
    }

    /// The family with its canonical-default link: gaussian/identity,
    /// poisson/log, gamma/log, binomial/logit.
    pub fn canonical(kind: FamilyKind) -> Self {
        let link = match kind {
            FamilyKind::Gaussian => LinkKind::Identity,
            FamilyKind::Poisson | FamilyKind::Gamma => LinkKind::Log,
            FamilyKind::Binomial => LinkKind::Logit,
        };
        GlmFamily { kind, link }
    }

    fn link_value(&self, mu: f64) -> f64 {
        match self.link {
            LinkKind::Identity => mu,
            LinkKind::Log => mu.ln(),
            LinkKind::Logit => (mu / (1.0 - mu)).ln(),
        }
    }

    fn link_inverse(&self, eta: f64) -> f64 {
        match self.link {
            LinkKind::Identity => eta,
            LinkKind::Log => eta.exp(),
            LinkKind::Logit => 1.0 / (1.0 + (-eta).exp()),
        }
    }

    /// d eta / d mu.
    fn link_derivative(&self, mu: f64) -> f64 {
        match self.link {
            LinkKind::Identity => 1.0,
            LinkKind::Log => 1.0 / mu,
            LinkKind::Logit => 1.0 / (mu * (1.0 - mu)),
        }
    }

    /// Variance function V(mu).
    fn variance(&self, mu: f64) -> f64 {
        match self.kind {
            FamilyKind::Gaussian => 1.0,
            FamilyKind::Poisson => mu,
            FamilyKind::Gamma => mu * mu,
            FamilyKind::Binomial => mu * (1.0 - mu),
        }
    }

    fn clamp_mu(&self, mu: f64) -> f64 {
        match self.kind {
            FamilyKind::Gaussian => mu,
            FamilyKind::Poisson | FamilyKind::Gamma => mu.max(1e-10),
            FamilyKind::Binomial => mu.clamp(1e-10, 1.0 - 1e-10),
        }
    }

    /// Checks every response value against the family support.
    pub fn check_support(&self, y: &[f64]) -> Result<()> {
        let ok = match self.kind {
            FamilyKind::Gaussian => y.iter().all(|v| v.is_finite()),
            FamilyKind::Poisson => y.iter().all(|v| v.is_finite() && *v >= 0.0),
            FamilyKind::Gamma => y.iter().all(|v| v.is_finite() && *v > 0.0),
            FamilyKind::Binomial => y.iter().all(|v| *v == 0.0 || *v == 1.0),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::domain(format!("response outside the support of {:?}", self.kind)))
        }
    }

    fn initial_mu(&self, y: f64) -> f64 {
        match self.kind {
            FamilyKind::Gaussian => {
                if self.link == LinkKind::Log {
                    y.max(0.1)
                } else {
                    y
                }
            }
            FamilyKind::Poisson => {
                if y > 0.0 {
                    y
                } else {
                    0.5
                }
            }
            FamilyKind::Gamma => y,
            FamilyKind::Binomial => y.clamp(0.01, 0.99),
        }
    }

    /// Unit deviance contribution, with the 0 log 0 = 0 convention.
    fn unit_deviance(&self, y: f64, mu: f64) -> f64 {
        match self.kind {
            FamilyKind::Gaussian => (y - mu) * (y - mu),
            FamilyKind::Poisson => {
                let term = if y > 0.0 { y * (y / mu).ln() } else { 0.0 };
                2.0 * (term - (y - mu))
            }
            FamilyKind::Gamma => 2.0 * (-(y / mu).ln() + (y - mu) / mu),
            FamilyKind::Binomial => {
                let a = if y > 0.0 { y * (y / mu).ln() } else { 0.0 };
                let b = if y < 1.0 { (1.0 - y) * ((1.0 - y) / (1.0 - mu)).ln() } else { 0.0 };
                2.0 * (a + b)
            }
        }
    }

    /// Total deviance of predictions `mu` against responses `y`.
    pub fn deviance(&self, y: &[f64], mu: &[f64]) -> f64 {
        y.iter().zip(mu).map(|(yi, mi)| self.unit_deviance(*yi, *mi)).sum()
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            FamilyKind::Gaussian => "gaussian",
            FamilyKind::Poisson => "poisson",
            FamilyKind::Gamma => "gamma",
            FamilyKind::Binomial => "binomial",
        }
    }

    pub fn link_name(&self) -> &'static str {
        match self.link {
            LinkKind::Identity => "identity",
            LinkKind::Log => "log",
            LinkKind::Logit => "logit",
        }
    }

    pub fn from_names(kind: &str, link: &str) -> Result<Self> {
        let kind = match kind {
            "gaussian" => FamilyKind::Gaussian,
            "poisson" => FamilyKind::Poisson,
            "gamma" => FamilyKind::Gamma,
            "binomial" => FamilyKind::Binomial,
            other => return Err(Error::argument(format!("unknown family {other:?}"))),
        };
        let link = match link {
            "identity" => LinkKind::Identity,
            "log" => LinkKind::Log,
            "logit" => LinkKind::Logit,
            other => return Err(Error::argument(format!("unknown link {other:?}"))),
        };
        GlmFamily::new(kind, link)
    }
}

/// Regression design: an `n x (1 + p)` matrix whose first column is the
/// constant 1 (the intercept), with a name per column.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    values: Tensor,
    names: Vec<String>,
}

impl DesignMatrix {
    pub fn n_rows(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn n_cols(&self) -> usize {
        self.values.shape()[1]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.values.row(i)
    }

    /// Intercept-only design (a single all-ones column).
    pub fn intercept_only(n_rows: usize) -> Result<DesignMatrix> {
        assemble_features(n_rows, &[])
    }

    /// Wraps pre-assembled rows. The first column must be named "intercept"
    /// and hold the constant 1; names must be unique.
    pub fn from_named_rows(names: Vec<String>, rows: &[Vec<f64>]) -> Result<DesignMatrix> {
        if names.first().map(String::as_str) != Some("intercept") {
            return Err(Error::argument("first design column must be \"intercept\""));
        }
        for (i, name) in names.iter().enumerate() {
            if names[..i].contains(name) {
                return Err(Error::argument(format!("duplicate design column {name:?}")));
            }
        }
        if rows.is_empty() {
            return Err(Error::argument("design matrix needs at least one row"));
        }
        if rows.iter().any(|r| r.len() != names.len()) {
            return Err(Error::shape("design rows do not match the column names"));
        }
        if rows.iter().any(|r| r[0] != 1.0) {
            return Err(Error::argument("intercept column must be all ones"));
        }
        let data: Vec<f64> = rows.iter().flatten().copied().collect();
        Ok(DesignMatrix {
            values: Tensor::new(vec![rows.len(), names.len()], data)?,
            names,
        })
    }

    /// The rows at `indices`, in the given order (for train/holdout splits).
    pub fn subset(&self, indices: &[usize]) -> Result<DesignMatrix> {
        if indices.iter().any(|&i| i >= self.n_rows()) {
            return Err(Error::argument("subset index out of range"));
        }
        let mut data = Vec::with_capacity(indices.len() * self.n_cols());
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Ok(DesignMatrix {
            values: Tensor::new(vec![indices.len(), self.n_cols()], data)?,
            names: self.names.clone(),
        })
    }
}

/// Concatenates feature blocks into a design matrix: intercept column first,
/// then each block's columns in the given order, named `<block>.<index>`.
pub fn assemble_features(n_rows: usize, blocks: &[(String, Vec<Vec<f64>>)]) -> Result<DesignMatrix> {
    if n_rows == 0 {
        return Err(Error::argument("design matrix needs at least one row"));
    }
    let mut names = vec![String::from("intercept")];
    let mut widths = Vec::with_capacity(blocks.len());
    for (i, (name, rows)) in blocks.iter().enumerate() {
        if blocks[..i].iter().any(|(other, _)| other == name) {
            return Err(Error::argument(format!("duplicate block name {name:?}")));
        }
        if rows.len() != n_rows {
            return Err(Error::argument(format!(
                "block {name:?} has {} rows, expected {n_rows}",
                rows.len()
            )));
        }
        let width = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != width) {
            return Err(Error::shape(format!("block {name:?} has ragged rows")));
        }
        for j in 0..width {
            names.push(format!("{name}.{j}"));
        }
        widths.push(width);
    }
    let cols = names.len();
    let mut data = Vec::with_capacity(n_rows * cols);
    for r in 0..n_rows {
        data.push(1.0);
        for (name_rows, _) in blocks.iter().zip(&widths) {
            data.extend_from_slice(&name_rows.1[r]);
        }
    }
    Ok(DesignMatrix { values: Tensor::new(vec![n_rows, cols], data)?, names })
}

/// A fitted GLM: coefficients (intercept first), Fisher covariance, fitted
/// deviance and IRLS iteration count.
#[derive(Debug, Clone)]
pub struct GlmModel {
    pub family: GlmFamily,
    pub coefficients: Vec<f64>,
    pub covariance: Tensor,
    pub deviance: f64,
    pub iterations: usize,
    pub names: Vec<String>,
}

/// Solves the symmetric positive definite system `A b = rhs` through a Jacobi
/// eigendecomposition, also returning `A^{-1}`. Raises a rank error when the
/// spectrum spans more than twelve orders of magnitude.
fn solve_spd(a: &Tensor, rhs: &[f64]) -> Result<(Vec<f64>, Tensor)> {
    let k = a.shape()[0];
    let (eigenvalues, vectors) = jacobi_eigen(a)?;
    let max_eig = eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if max_eig == 0.0 || eigenvalues.iter().any(|v| *v <= 1e-12 * max_eig) {
        return Err(Error::RankDeficient(format!(
            "weighted normal equations are singular (eigenvalue range {:e} .. {:e})",
            eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min),
            max_eig
        )));
    }
    // x = V diag(1/lambda) V^T rhs
    let mut projected = vec![0.0; k];
    for c in 0..k {
        let mut acc = 0.0;
        for r in 0..k {
            acc += vectors.at2(r, c) * rhs[r];
        }
        projected[c] = acc / eigenvalues[c];
    }
    let mut solution = vec![0.0; k];
    for r in 0..k {
        let mut acc = 0.0;
        for c in 0..k {
            acc += vectors.at2(r, c) * projected[c];
        }
        solution[r] = acc;
    }
    let mut inverse = vec![0.0; k * k];
    for r in 0..k {
        for s in r..k {
            let mut acc = 0.0;
            for c in 0..k {
                acc += vectors.at2(r, c) * vectors.at2(s, c) / eigenvalues[c];
            }
            inverse[r * k + s] = acc;
            inverse[s * k + r] = acc;
        }
    }
    Ok((solution, Tensor::new(vec![k, k], inverse)?))
}

fn weighted_normal_equations(
    x: &DesignMatrix,
    z: &[f64],
    w: &[f64],
) -> Result<(Tensor, Vec<f64>)> {
    let (n, k) = (x.n_rows(), x.n_cols());
    let mut xtwx = vec![0.0; k * k];
    let mut xtwz = vec![0.0; k];
    for i in 0..n {
        let row = x.row(i);
        let wi = w[i];
        for r in 0..k {
            let wr = wi * row[r];
            xtwz[r] += wr * z[i];
            for s in r..k {
                xtwx[r * k + s] += wr * row[s];
            }
        }
    }
    for r in 0..k {
        for s in 0..r {
            xtwx[r * k + s] = xtwx[s * k + r];
        }
    }
    Ok((Tensor::new(vec![k, k], xtwx)?, xtwz))
}

/// Fits `g(E[y]) = x beta (+ offset)` by IRLS.
///
/// Converges when the relative deviance change drops below 1e-8 (with a +0.1
/// cushion in the denominator), errs with the last coefficients after 25
/// iterations, and surfaces separation of a binomial response as a
/// divergence error instead of returning a silently extreme fit.
pub fn glm_fit(
    x: &DesignMatrix,
    y: &[f64],
    family: GlmFamily,
    offset: Option<&[f64]>,
) -> Result<GlmModel> {
    let (n, k) = (x.n_rows(), x.n_cols());
    if y.len() != n {
        return Err(Error::argument(format!("{} responses for {n} design rows", y.len())));
    }
    if n <= k {
        return Err(Error::argument(format!(
            "need more observations ({n}) than coefficients ({k})"
        )));
    }
    if let Some(o) = offset {
        if o.len() != n {
            return Err(Error::argument(format!("{} offsets for {n} rows", o.len())));
        }
    }
    family.check_support(y)?;

    let offset_at = |i: usize| offset.map_or(0.0, |o| o[i]);
    let mut mu: Vec<f64> = y.iter().map(|yi| family.initial_mu(*yi)).collect();
    let mut eta: Vec<f64> = mu.iter().map(|m| family.link_value(*m)).collect();
    let mut deviance = family.deviance(y, &mu);
    let mut beta = vec![0.0; k];
    let mut weights = vec![0.0; n];
    let mut working = vec![0.0; n];
    let mut iterations = 0;
    let mut converged = false;

    while iterations < 25 {
        iterations += 1;
        for i in 0..n {
            let d = family.link_derivative(mu[i]);
            weights[i] = 1.0 / (family.variance(mu[i]) * d * d);
            working[i] = (eta[i] - offset_at(i)) + (y[i] - mu[i]) * d;
        }
        let (xtwx, xtwz) = weighted_normal_equations(x, &working, &weights)?;
        let (new_beta, _) = solve_spd(&xtwx, &xtwz)?;
        beta = new_beta;
        for i in 0..n {
            let e: f64 = crate::tensor::dot(x.row(i), &beta) + offset_at(i);
            eta[i] = e;
            mu[i] = family.clamp_mu(family.link_inverse(e));
        }
        if family.kind == FamilyKind::Binomial && eta.iter().any(|e| e.abs() > 30.0) {
            return Err(Error::Divergence {
                message: "binomial fit pushed the linear predictor past +/-30 (separated response?)".into(),
                coefficients: beta,
            });
        }
        if eta.iter().any(|e| !e.is_finite()) {
            return Err(Error::Divergence {
                message: "linear predictor became non-finite".into(),
                coefficients: beta,
            });
        }
        let new_deviance = family.deviance(y, &mu);
        let change = (new_deviance - deviance).abs() / (new_deviance.abs() + 0.1);
        deviance = new_deviance;
        if change < 1e-8 {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NonConvergence { iterations, deviance, coefficients: beta });
    }
    if family.kind == FamilyKind::Binomial
        && mu.iter().any(|m| *m < 1e-8 || *m > 1.0 - 1e-8)
    {
        return Err(Error::Divergence {
            message: "fitted probabilities numerically 0 or 1 (separated response?)".into(),
            coefficients: beta,
        });
    }

    // Fisher covariance at the fit: dispersion * (X^T W X)^{-1}. Pearson
    // dispersion for the families with a free scale, fixed 1 otherwise.
    for i in 0..n {
        let d = family.link_derivative(mu[i]);
        weights[i] = 1.0 / (family.variance(mu[i]) * d * d);
    }
    let zeros = vec![0.0; n];
    let (xtwx, _) = weighted_normal_equations(x, &zeros, &weights)?;
    let (_, inverse) = solve_spd(&xtwx, &zeros[..k])?;
    let dispersion = match family.kind {
        FamilyKind::Gaussian | FamilyKind::Gamma => {
            let pearson: f64 = y
                .iter()
                .zip(&mu)
                .map(|(yi, mi)| {
                    let r = yi - mi;
                    r * r / family.variance(*mi)
                })
                .sum();
            pearson / (n - k) as f64
        }
        FamilyKind::Poisson | FamilyKind::Binomial => 1.0,
    };
    let covariance = Tensor::new(
        vec![k, k],
        inverse.data().iter().map(|v| v * dispersion).collect(),
    )?;

    Ok(GlmModel {
        family,
        coefficients: beta,
        covariance,
        deviance,
        iterations,
        names: x.names().to_vec(),
    })
}

/// Mean predictions `g^{-1}(x beta + offset)`.
pub fn glm_predict(model: &GlmModel, x: &DesignMatrix, offset: Option<&[f64]>) -> Result<Vec<f64>> {
    if x.n_cols() != model.coefficients.len() {
        return Err(Error::shape(format!(
            "design has {} columns, model has {} coefficients",
            x.n_cols(),
            model.coefficients.len()
        )));
    }
    if let Some(o) = offset {
        if o.len() != x.n_rows() {
            return Err(Error::argument(format!("{} offsets for {} rows", o.len(), x.n_rows())));
        }
    }
    Ok((0..x.n_rows())
        .map(|i| {
            let eta = crate::tensor::dot(x.row(i), &model.coefficients)
                + offset.map_or(0.0, |o| o[i]);
            model.family.link_inverse(eta)
        })
        .collect())
}

/// Family deviance of the model's predictions on a dataset.
pub fn deviance(model: &GlmModel, x: &DesignMatrix, y: &[f64], offset: Option<&[f64]>) -> Result<f64> {
    if y.len() != x.n_rows() {
        return Err(Error::argument(format!("{} responses for {} rows", y.len(), x.n_rows())));
    }
    model.family.check_support(y)?;
    let mu = glm_predict(model, x, offset)?;
    let mu: Vec<f64> = mu.into_iter().map(|m| model.family.clamp_mu(m)).collect();
    Ok(model.family.deviance(y, &mu))
}

impl GlmModel {
    /// Standard errors: square roots of the covariance diagonal.
    pub fn standard_errors(&self) -> Vec<f64> {
        (0..self.coefficients.len())
            .map(|i| self.covariance.at2(i, i).max(0.0).sqrt())
            .collect()
    }

    /// Human-readable coefficient table.
    pub fn report(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "family: {} ({} link), deviance {:.6}, {} iterations",
            self.family.kind_name(),
            self.family.link_name(),
            self.deviance,
            self.iterations
        );
        let _ = writeln!(out, "{:<24} {:>14} {:>14}", "term", "estimate", "std error");
        for ((name, b), se) in self.names.iter().zip(&self.coefficients).zip(self.standard_errors()) {
            let _ = writeln!(out, "{name:<24} {b:>14.6} {se:>14.6}");
        }
        out
    }

    pub fn to_text(&self) -> String {
        let k = self.coefficients.len();
        let mut out = String::from("glm\n");
        let _ = writeln!(out, "family {} {}", self.family.kind_name(), self.family.link_name());
        let _ = writeln!(out, "iterations {}", self.iterations);
        let _ = writeln!(out, "deviance {}", fmt_f64(self.deviance));
        let _ = writeln!(out, "names {}", self.names.join(" "));
        let _ = writeln!(out, "coefficients {k}");
        let _ = writeln!(out, "{}", join_f64(&self.coefficients));
        let _ = writeln!(out, "{}", join_f64(self.covariance.data()));
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let mut next = |what: &str| {
            lines
                .next()
                .ok_or_else(|| Error::parse(0, format!("unexpected end of glm file, wanted {what}")))
        };
        let (ln, magic) = next("magic")?;
        if magic.trim() != "glm" {
            return Err(Error::parse(ln, "expected magic line \"glm\""));
        }
        let (ln, family_line) = next("family")?;
        let family = match family_line.trim().strip_prefix("family ") {
            Some(rest) => {
                let toks: Vec<&str> = rest.split_whitespace().collect();
                if toks.len() != 2 {
                    return Err(Error::parse(ln, "family line needs kind and link"));
                }
                GlmFamily::from_names(toks[0], toks[1])?
            }
            None => return Err(Error::parse(ln, "expected \"family <kind> <link>\"")),
        };
        let (ln, iter_line) = next("iterations")?;
        let iterations = match iter_line.trim().strip_prefix("iterations ") {
            Some(rest) => parse_usize(rest.trim(), ln)?,
            None => return Err(Error::parse(ln, "expected \"iterations <n>\"")),
        };
        let (ln, dev_line) = next("deviance")?;
        let deviance = match dev_line.trim().strip_prefix("deviance ") {
            Some(rest) => crate::serial::parse_f64(rest.trim(), ln)?,
            None => return Err(Error::parse(ln, "expected \"deviance <v>\"")),
        };
        let (ln, names_line) = next("names")?;
        let names: Vec<String> = match names_line.trim().strip_prefix("names ") {
            Some(rest) => rest.split_whitespace().map(str::to_owned).collect(),
            None => return Err(Error::parse(ln, "expected \"names <...>\"")),
        };
        let (ln, count_line) = next("coefficients")?;
        let k = match count_line.trim().strip_prefix("coefficients ") {
            Some(rest) => parse_usize(rest.trim(), ln)?,
            None => return Err(Error::parse(ln, "expected \"coefficients <k>\"")),
        };
        if names.len() != k {
            return Err(Error::parse(ln, format!("{} names for {k} coefficients", names.len())));
        }
        let (ln, coef_line) = next("coefficient values")?;
        let coefficients = split_f64(coef_line, k, ln)?;
        let (ln, cov_line) = next("covariance values")?;
        let covariance = Tensor::new(vec![k, k], split_f64(cov_line, k * k, ln)?)?;
        Ok(GlmModel { family, coefficients, covariance, deviance, iterations, names })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn block(name: &str, cols: Vec<Vec<f64>>) -> (String, Vec<Vec<f64>>) {
        (name.to_owned(), cols)
    }

    #[test]
    fn assemble_widths_and_names() {
        let n = 3;
        let b = |w: usize| (0..n).map(|i| vec![i as f64; w]).collect::<Vec<_>>();
        let design = assemble_features(
            n,
            &[block("a", b(2)), block("b", b(3)), block("c", b(4))],
        )
        .unwrap();
        assert_eq!(design.n_cols(), 1 + 9);
        assert_eq!(design.names()[0], "intercept");
        assert_eq!(design.names()[1], "a.0");
        assert_eq!(design.names()[3], "b.0");
        assert!(design.row(1).starts_with(&[1.0]));
    }

    #[test]
    fn intercept_only_design() {
        let design = assemble_features(4, &[]).unwrap();
        assert_eq!(design.n_cols(), 1);
        assert!(design.row(2) == [1.0]);
    }

    #[test]
    fn duplicate_block_names_rejected() {
        let rows = vec![vec![1.0], vec![2.0]];
        let err = assemble_features(2, &[block("x", rows.clone()), block("x", rows)]);
        assert!(err.is_err());
    }

    #[test]
    fn row_count_mismatch_rejected() {
        let err = assemble_features(3, &[block("x", vec![vec![1.0], vec![2.0]])]);
        assert!(err.is_err());
    }

    #[test]
    fn intercept_only_poisson_is_log_mean() {
        let design = DesignMatrix::intercept_only(3).unwrap();
        let y = [1.0, 2.0, 3.0];
        let model = glm_fit(&design, &y, GlmFamily::canonical(FamilyKind::Poisson), None).unwrap();
        assert!((model.coefficients[0] - 2.0_f64.ln()).abs() < 1e-6);
    }

    #[test]
    fn gaussian_identity_matches_ols() {
        // Normal equations solved by hand for y = a + b x.
        let xs = [0.0, 1.0, 2.0, 3.0, 4.0];
        let ys = [1.1, 2.9, 5.2, 7.1, 8.9];
        let design = assemble_features(5, &[block("x", xs.iter().map(|&v| vec![v]).collect())]).unwrap();
        let model = glm_fit(&design, &ys, GlmFamily::canonical(FamilyKind::Gaussian), None).unwrap();

        let n = 5.0;
        let sx: f64 = xs.iter().sum();
        let sy: f64 = ys.iter().sum();
        let sxx: f64 = xs.iter().map(|v| v * v).sum();
        let sxy: f64 = xs.iter().zip(&ys).map(|(a, b)| a * b).sum();
        let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        let intercept = (sy - slope * sx) / n;
        assert!((model.coefficients[0] - intercept).abs() < 1e-8);
        assert!((model.coefficients[1] - slope).abs() < 1e-8);

        // Gaussian deviance is the residual sum of squares.
        let rss: f64 = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| {
                let f = intercept + slope * x;
                (y - f) * (y - f)
            })
            .sum();
        assert!((model.deviance - rss).abs() < 1e-8);
    }

    #[test]
    fn all_zero_binomial_response_errors_loudly() {
        let design = DesignMatrix::intercept_only(6).unwrap();
        let y = [0.0; 6];
        let err = glm_fit(&design, &y, GlmFamily::canonical(FamilyKind::Binomial), None).unwrap_err();
        assert!(
            matches!(err, Error::Divergence { .. } | Error::RankDeficient(_) | Error::NonConvergence { .. }),
            "unexpected error {err:?}"
        );
    }

    #[test]
    fn saturated_fit_has_zero_deviance() {
        // Two distinct predictor values, two parameters, responses constant
        // within each group: the fit is exact.
        let design = assemble_features(
            4,
            &[block("x", vec![vec![0.0], vec![0.0], vec![1.0], vec![1.0]])],
        )
        .unwrap();
        let y = [2.0, 2.0, 5.0, 5.0];
        let model = glm_fit(&design, &y, GlmFamily::canonical(FamilyKind::Poisson), None).unwrap();
        assert!(model.deviance.abs() < 1e-8, "deviance {}", model.deviance);
    }

    #[test]
    fn predictions_follow_the_inverse_link() {
        let design = DesignMatrix::intercept_only(3).unwrap();
        let model = GlmModel {
            family: GlmFamily::canonical(FamilyKind::Poisson),
            coefficients: vec![2.0_f64.ln()],
            covariance: Tensor::new(vec![1, 1], vec![0.0]).unwrap(),
            deviance: 0.0,
            iterations: 0,
            names: vec!["intercept".into()],
        };
        let mu = glm_predict(&model, &design, None).unwrap();
        assert!(mu.iter().all(|m| (m - 2.0).abs() < 1e-12));
    }

    #[test]
    fn binomial_predictions_stay_in_unit_interval() {
        let design = assemble_features(
            12,
            &[block("x", (0..12).map(|i| vec![i as f64 - 6.0]).collect())],
        )
        .unwrap();
        let y: Vec<f64> = (0..12).map(|i| if i % 3 == 0 { 0.0 } else { 1.0 }).collect();
        let model = glm_fit(&design, &y, GlmFamily::canonical(FamilyKind::Binomial), None).unwrap();
        let mu = glm_predict(&model, &design, None).unwrap();
        assert!(mu.iter().all(|m| *m > 0.0 && *m < 1.0));
    }

    #[test]
    fn offset_shifts_the_linear_predictor() {
        let design = DesignMatrix::intercept_only(4).unwrap();
        let y = [2.0, 4.0, 6.0, 8.0];
        let exposure = [1.0, 2.0, 3.0, 4.0];
        let offset: Vec<f64> = exposure.iter().map(|e: &f64| e.ln()).collect();
        let model =
            glm_fit(&design, &y, GlmFamily::canonical(FamilyKind::Poisson), Some(&offset)).unwrap();
        // Rate is exactly 2 per unit of exposure.
        assert!((model.coefficients[0] - 2.0_f64.ln()).abs() < 1e-6);
    }

    #[test]
    fn model_text_roundtrip() {
        let design = assemble_features(
            6,
            &[block("x", (0..6).map(|i| vec![i as f64]).collect())],
        )
        .unwrap();
        let y = [1.0, 1.0, 2.0, 3.0, 5.0, 8.0];
        let model = glm_fit(&design, &y, GlmFamily::canonical(FamilyKind::Poisson), None).unwrap();
        let text = model.to_text();
        let back = GlmModel::from_text(&text).unwrap();
        assert_eq!(model.coefficients, back.coefficients);
        assert_eq!(model.covariance, back.covariance);
        assert_eq!(model.names, back.names);
        assert_eq!(text, back.to_text());
    }

    #[test]
    fn rank_deficient_design_raises() {
        // Two identical columns.
        let cols: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64, i as f64]).collect();
        let design = assemble_features(8, &[block("x", cols)]).unwrap();
        let y: Vec<f64> = (0..8).map(|i| i as f64 + 1.0).collect();
        let err = glm_fit(&design, &y, GlmFamily::canonical(FamilyKind::Gaussian), None).unwrap_err();
        assert!(matches!(err, Error::RankDeficient(_)), "{err:?}");
    }
}
