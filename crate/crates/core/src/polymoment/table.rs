use std::collections::HashMap;

use super::gaussian::GaussianMoments;
use super::polynomial::{Monomial, Polynomial};
use crate::error::{check_dim, Error, Result};

#[derive(Clone, Debug)]
struct Step {
    var: usize,
    base: usize,
    lower: Vec<(usize, f64, usize)>,
}

/// Dense table of raw Gaussian moments `E[x^alpha]` for every monomial of
/// total degree `<= max_degree`.
///
/// Moments are filled by the Gaussian integration-by-parts recurrence
/// `E[x_j x^b] = mu_j E[x^b] + sum_i b_i S_ji E[x^(b - e_i)]`, which is much
/// cheaper than per-monomial pairing when many moments are needed at once.
#[derive(Clone, Debug)]
pub struct MomentTable {
    nvars: usize,
    max_degree: usize,
    monomials: Vec<Monomial>,
    index: HashMap<Monomial, usize>,
    steps: Vec<Step>,
}

impl MomentTable {
    pub fn new(nvars: usize, max_degree: usize) -> Self {
        let monomials = enumerate_monomials(nvars, max_degree);
        let index: HashMap<Monomial, usize> = monomials
            .iter()
            .enumerate()
            .map(|(k, m)| (m.clone(), k))
            .collect();
        let mut steps = Vec::with_capacity(monomials.len());
        for m in &monomials {
            let e = m.exponents();
            let Some(var) = e.iter().position(|&v| v > 0) else {
                steps.push(Step {
                    var: 0,
                    base: 0,
                    lower: Vec::new(),
                });
                continue;
            };
            let mut b = e.to_vec();
            b[var] -= 1;
            let base = index[&Monomial::new(b.clone())];
            let mut lower = Vec::new();
            for i in 0..nvars {
                if b[i] == 0 {
                    continue;
                }
                let mut c = b.clone();
                c[i] -= 1;
                lower.push((i, b[i] as f64, index[&Monomial::new(c)]));
            }
            steps.push(Step { var, base, lower });
        }
        MomentTable {
            nvars,
            max_degree,
            monomials,
            index,
            steps,
        }
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    pub fn len(&self) -> usize {
        self.monomials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.monomials.is_empty()
    }

    pub fn monomial(&self, k: usize) -> &Monomial {
        &self.monomials[k]
    }

    pub fn index_of(&self, m: &Monomial) -> Option<usize> {
        self.index.get(m).copied()
    }

    /// Fills `out` with `E[x^alpha]` for every tabulated monomial.
    pub fn fill(&self, g: &GaussianMoments, out: &mut Vec<f64>) -> Result<()> {
        check_dim(self.nvars, g.dim())?;
        out.clear();
        out.resize(self.monomials.len(), 0.0);
        let mu = g.mean();
        let cov = g.covariance();
        for (k, step) in self.steps.iter().enumerate() {
            if k == 0 {
                out[0] = 1.0;
                continue;
            }
            let j = step.var;
            let mut v = mu[j] * out[step.base];
            for &(i, bi, idx) in &step.lower {
                v += bi * cov[(j, i)] * out[idx];
            }
            out[k] = v;
        }
        Ok(())
    }

    /// Expectation of `p` given a table filled by [`MomentTable::fill`].
    pub fn expectation(&self, p: &Polynomial, moments: &[f64]) -> Result<f64> {
        check_dim(self.nvars, p.nvars())?;
        let mut total = 0.0;
        for (m, c) in p.terms() {
            let k = self.index_of(m).ok_or(Error::DegreeCap {
                degree: m.degree(),
                cap: self.max_degree,
            })?;
            total += c * moments[k];
        }
        Ok(total)
    }
}

/// All monomials in `nvars` variables with total degree `<= max_degree`,
/// sorted in graded-lexicographic order (the constant first).
pub fn enumerate_monomials(nvars: usize, max_degree: usize) -> Vec<Monomial> {
    let mut out = Vec::new();
    for d in 0..=max_degree {
        let mut of_degree = Vec::new();
        let mut cur = vec![0u16; nvars];
        compositions(&mut cur, 0, d, &mut of_degree);
        of_degree.sort();
        out.extend(of_degree);
    }
    out
}

fn compositions(cur: &mut Vec<u16>, pos: usize, remaining: usize, out: &mut Vec<Monomial>) {
    if cur.is_empty() {
        if remaining == 0 {
            out.push(Monomial::new(Vec::new()));
        }
        return;
    }
    if pos == cur.len() - 1 {
        cur[pos] = remaining as u16;
        out.push(Monomial::new(cur.clone()));
        cur[pos] = 0;
        return;
    }
    for e in 0..=remaining {
        cur[pos] = e as u16;
        compositions(cur, pos + 1, remaining - e, out);
    }
    cur[pos] = 0;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polymoment::gaussian::gaussian_expectation;
    use nalgebra::{DMatrix, DVector};

    #[test]
    fn enumeration_counts_match_binomials() {
        // C(n + d, d)
        assert_eq!(enumerate_monomials(2, 4).len(), 15);
        assert_eq!(enumerate_monomials(3, 3).len(), 20);
        assert_eq!(enumerate_monomials(8, 3).len(), 165);
        let ms = enumerate_monomials(3, 4);
        assert!(ms.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn table_agrees_with_isserlis_route() {
        let g = GaussianMoments::new(
            DVector::from_vec(vec![0.4, -1.1, 0.7]),
            DMatrix::from_row_slice(3, 3, &[1.3, 0.2, -0.5, 0.2, 0.9, 0.1, -0.5, 0.1, 2.0]),
        )
        .unwrap();
        let table = MomentTable::new(3, 6);
        let mut mom = Vec::new();
        table.fill(&g, &mut mom).unwrap();
        for k in 0..table.len() {
            let p = Polynomial::from_terms(3, [(table.monomial(k).exponents().to_vec(), 1.0)]).unwrap();
            let want = gaussian_expectation(&p, &g).unwrap();
            let scale = want.abs().max(1.0);
            assert!(
                (mom[k] - want).abs() <= 1e-12 * scale,
                "{:?}: {} vs {}",
                table.monomial(k),
                mom[k],
                want
            );
        }
    }
}
