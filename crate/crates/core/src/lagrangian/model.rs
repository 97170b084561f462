use std::collections::{BTreeMap, BTreeSet};

use crate::dynsys::DynamicalSystem;
use crate::error::{check_dim, Result};
use crate::pathspace::{DiscretePath, PathAction};
use crate::polymoment::{Monomial, MomentTable, Polynomial};
use crate::trialdensity::TrialFamily;

type Sparse = Vec<(usize, f64)>;

/// Precompiled `<R^2>/2` for one system and family.
///
/// `R` is linear in `(lambda, lambda_dot)` once `<Q>` is known, so it is
/// stored as coefficient vectors over a fixed monomial basis `B`. Every
/// expectation then reduces to lookups into a dense moment table:
/// `<R^2> = r' G r` with `G_ab = E[x^(a+b)]`.
#[derive(Clone)]
pub struct LiouvilleModel {
    family: TrialFamily,
    basis_len: usize,
    q: Vec<Sparse>,
    lq: Vec<Sparse>,
    fixed: Sparse,
    table: MomentTable,
    basis_index: Vec<usize>,
    pair_index: Vec<usize>,
    /// `(a, b, k, weight)` over `a <= b`, with `k` indexing the products list.
    pairs: Vec<(usize, usize, usize, f64)>,
    products: usize,
    /// Per distinct `Q` monomial: table index of `product_k * monomial`.
    shifts: Vec<Vec<usize>>,
    q_monomials: Vec<Sparse>,
}

/// Value and gradient of `<R^2>/2` at one `(lambda, lambda_dot)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LagrangianGradient {
    pub value: f64,
    pub d_lambda: Vec<f64>,
    pub d_velocity: Vec<f64>,
}

impl std::fmt::Debug for LiouvilleModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LiouvilleModel")
            .field("slow_variables", &self.q.len())
            .field("basis", &self.basis_len)
            .field("moments", &self.table.len())
            .finish()
    }
}

impl LiouvilleModel {
    pub fn new(sys: &DynamicalSystem, family: &TrialFamily) -> Result<Self> {
        check_dim(sys.dim(), family.dim())?;
        let n = sys.dim();
        let lq: Vec<Polynomial> = family.q().iter().map(|q| sys.apply_lstar(q)).collect::<Result<_>>()?;
        let mut fixed = sys.divergence_poly().clone();
        if family.beta() != 0.0 {
            fixed.add_scaled(&sys.apply_lstar(family.psi())?, family.beta())?;
        }

        let mut set: BTreeSet<Monomial> = BTreeSet::new();
        set.insert(Monomial::one(n));
        for p in family.q().iter().chain(&lq).chain(std::iter::once(&fixed)) {
            set.extend(p.terms().map(|(m, _)| m.clone()));
        }
        let basis: Vec<Monomial> = set.into_iter().collect();
        let position: BTreeMap<&Monomial, usize> = basis.iter().enumerate().map(|(k, m)| (m, k)).collect();
        let sparse = |p: &Polynomial| -> Sparse { p.terms().map(|(m, c)| (position[m], c)).collect() };
        let q: Vec<Sparse> = family.q().iter().map(sparse).collect();
        let lq_sparse: Vec<Sparse> = lq.iter().map(sparse).collect();
        let fixed_sparse = sparse(&fixed);

        let deg_r = basis.iter().map(Monomial::degree).max().unwrap_or(0);
        let deg_q = family.q().iter().filter_map(Polynomial::degree).max().unwrap_or(0);
        let table = MomentTable::new(n, 2 * deg_r + deg_q);
        let lookup = |m: &Monomial| table.index_of(m).expect("table covers every product");
        let basis_index: Vec<usize> = basis.iter().map(lookup).collect();
        let nb = basis.len();
        let mut pair_index = vec![0; nb * nb];
        let mut product_pos: BTreeMap<Monomial, usize> = BTreeMap::new();
        let mut product_list: Vec<Monomial> = Vec::new();
        let mut pairs = Vec::with_capacity(nb * (nb + 1) / 2);
        for a in 0..nb {
            for b in a..nb {
                let m = basis[a].mul(&basis[b]);
                let t = lookup(&m);
                pair_index[a * nb + b] = t;
                pair_index[b * nb + a] = t;
                let k = *product_pos.entry(m.clone()).or_insert_with(|| {
                    product_list.push(m);
                    product_list.len() - 1
                });
                pairs.push((a, b, k, if a == b { 1.0 } else { 2.0 }));
            }
        }

        let mut qmon_pos: BTreeMap<Monomial, usize> = BTreeMap::new();
        let mut shifts = Vec::new();
        let mut q_monomials = Vec::with_capacity(family.len());
        for qi in family.q() {
            let mut entry = Vec::new();
            for (m, c) in qi.terms() {
                let idx = *qmon_pos.entry(m.clone()).or_insert_with(|| {
                    shifts.push(product_list.iter().map(|p| lookup(&p.mul(m))).collect());
                    shifts.len() - 1
                });
                entry.push((idx, c));
            }
            q_monomials.push(entry);
        }

        Ok(LiouvilleModel {
            family: family.clone(),
            basis_len: nb,
            q,
            lq: lq_sparse,
            fixed: fixed_sparse,
            table,
            basis_index,
            pair_index,
            pairs,
            products: product_list.len(),
            shifts,
            q_monomials,
        })
    }

    pub fn family(&self) -> &TrialFamily {
        &self.family
    }

    /// Number of natural parameters.
    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    /// `<R^2>/2` at `lambda` with velocity `lambda_dot`.
    pub fn lagrangian(&self, lambda: &[f64], lambda_dot: &[f64]) -> Result<f64> {
        Ok(self.evaluate(lambda, lambda_dot, false)?.value)
    }

    pub fn lagrangian_with_gradient(&self, lambda: &[f64], lambda_dot: &[f64]) -> Result<LagrangianGradient> {
        self.evaluate(lambda, lambda_dot, true)
    }

    /// Midpoint-rule discrete action; `f64::INFINITY` if any knot or
    /// midpoint is not normalizable.
    pub fn action(&self, path: &DiscretePath) -> f64 {
        PathAction::action(self, path)
    }

    fn evaluate(&self, lambda: &[f64], v: &[f64], gradient: bool) -> Result<LagrangianGradient> {
        let nq = self.q.len();
        check_dim(nq, lambda.len())?;
        check_dim(nq, v.len())?;
        let g = self.family.to_gaussian(lambda)?;
        let mut mom = Vec::new();
        self.table.fill(&g, &mut mom)?;
        let nb = self.basis_len;
        let expect = |s: &Sparse| s.iter().map(|&(a, c)| c * mom[self.basis_index[a]]).sum::<f64>();
        let means: Vec<f64> = self.q.iter().map(expect).collect();

        let mut r = vec![0.0; nb];
        for &(a, c) in &self.fixed {
            r[a] += c;
        }
        for j in 0..nq {
            if v[j] != 0.0 {
                for &(a, c) in &self.q[j] {
                    r[a] += v[j] * c;
                }
                r[0] -= v[j] * means[j];
            }
            if lambda[j] != 0.0 {
                for &(a, c) in &self.lq[j] {
                    r[a] -= lambda[j] * c;
                }
            }
        }
        let gmul = |x: &[f64]| -> Vec<f64> {
            (0..nb)
                .map(|a| {
                    let row = &self.pair_index[a * nb..(a + 1) * nb];
                    row.iter().zip(x).map(|(&t, &xb)| mom[t] * xb).sum()
                })
                .collect()
        };
        let w = gmul(&r);
        let r2 = r.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>().max(0.0);
        if !gradient {
            return Ok(LagrangianGradient {
                value: 0.5 * r2,
                d_lambda: Vec::new(),
                d_velocity: Vec::new(),
            });
        }

        let dot = |s: &Sparse, x: &[f64]| s.iter().map(|&(a, c)| c * x[a]).sum::<f64>();
        let mean_r = w[0];
        let d_velocity: Vec<f64> = (0..nq).map(|j| dot(&self.q[j], &w) - means[j] * mean_r).collect();

        // Fisher metric times velocity.
        let mut gv = vec![0.0; nq];
        if v.iter().any(|&x| x != 0.0) {
            let mut qv = vec![0.0; nb];
            for j in 0..nq {
                for &(a, c) in &self.q[j] {
                    qv[a] += v[j] * c;
                }
            }
            let gqv = gmul(&qv);
            let cv: f64 = means.iter().zip(v).map(|(a, b)| a * b).sum();
            for j in 0..nq {
                gv[j] = dot(&self.q[j], &gqv) - means[j] * cv;
            }
        }

        let mut s = vec![0.0; self.products];
        for &(a, b, k, wgt) in &self.pairs {
            s[k] += wgt * r[a] * r[b];
        }
        let r2q: Vec<f64> = self
            .shifts
            .iter()
            .map(|sh| sh.iter().zip(&s).map(|(&t, &sk)| sk * mom[t]).sum())
            .collect();
        let d_lambda = (0..nq)
            .map(|j| {
                let r2_qj: f64 = self.q_monomials[j].iter().map(|&(m, c)| c * r2q[m]).sum();
                0.5 * (r2_qj - r2 * means[j]) - gv[j] * mean_r - dot(&self.lq[j], &w)
            })
            .collect();
        Ok(LagrangianGradient {
            value: 0.5 * r2,
            d_lambda,
            d_velocity,
        })
    }
}

impl PathAction for LiouvilleModel {
    fn dim(&self) -> usize {
        self.q.len()
    }

    fn segment(&self, a: &[f64], b: &[f64], dt: f64) -> f64 {
        let mid: Vec<f64> = a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect();
        let v: Vec<f64> = a.iter().zip(b).map(|(x, y)| (y - x) / dt).collect();
        match self.lagrangian(&mid, &v) {
            Ok(l) => dt * l,
            Err(_) => f64::INFINITY,
        }
    }

    fn segment_gradient(&self, a: &[f64], b: &[f64], dt: f64) -> Option<(f64, Vec<f64>, Vec<f64>)> {
        let mid: Vec<f64> = a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect();
        let v: Vec<f64> = a.iter().zip(b).map(|(x, y)| (y - x) / dt).collect();
        let lg = self.lagrangian_with_gradient(&mid, &v).ok()?;
        let ga = lg
            .d_lambda
            .iter()
            .zip(&lg.d_velocity)
            .map(|(dl, dv)| 0.5 * dt * dl - dv)
            .collect();
        let gb = lg
            .d_lambda
            .iter()
            .zip(&lg.d_velocity)
            .map(|(dl, dv)| 0.5 * dt * dl + dv)
            .collect();
        Some((dt * lg.value, ga, gb))
    }

    fn admissible(&self, knot: &[f64]) -> bool {
        self.family.to_gaussian(knot).is_ok()
    }
}
