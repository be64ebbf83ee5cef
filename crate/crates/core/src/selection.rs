//! Antenna-to-user assignment: gain-greedy ranking and an exhaustive oracle.

use crate::error::{Error, Result};
use crate::pattern::GainMatrix;
use crate::rate::GainConvention;

/// Per-user selected element sets over a `K x M` array.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SelectionMatrix {
    elements: usize,
    /// Selected element indices per user, ascending.
    sets: Vec<Vec<usize>>,
    /// Maximum number of users sharing one element.
    pub cap: usize,
    /// Users that had to be padded with zero-gain elements.
    pub padded_users: Vec<usize>,
}

impl SelectionMatrix {
    /// Builds a selection from explicit sets, checking index range,
    /// duplicates and the per-element cap.
    pub fn from_sets(elements: usize, sets: Vec<Vec<usize>>, cap: usize) -> Result<Self> {
        let mut counts = vec![0usize; elements];
        let mut clean = Vec::with_capacity(sets.len());
        for (k, mut s) in sets.into_iter().enumerate() {
            s.sort_unstable();
            if s.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::invalid(
                    "selection",
                    format!("user {k} selects an element twice"),
                ));
            }
            for &m in &s {
                if m >= elements {
                    return Err(Error::invalid(
                        "selection",
                        format!("element {m} out of range"),
                    ));
                }
                counts[m] += 1;
                if counts[m] > cap {
                    return Err(Error::invalid(
                        "m_element_cap",
                        format!("element {m} exceeds cap {cap}"),
                    ));
                }
            }
            clean.push(s);
        }
        Ok(SelectionMatrix {
            elements,
            sets: clean,
            cap,
            padded_users: Vec::new(),
        })
    }

    pub fn users(&self) -> usize {
        self.sets.len()
    }

    pub fn elements(&self) -> usize {
        self.elements
    }

    pub fn selected(&self, k: usize) -> &[usize] {
        &self.sets[k]
    }

    pub fn m_k(&self, k: usize) -> usize {
        self.sets[k].len()
    }

    pub fn contains(&self, k: usize, m: usize) -> bool {
        self.sets[k].binary_search(&m).is_ok()
    }

    pub fn column_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.elements];
        for s in &self.sets {
            for &m in s {
                c[m] += 1;
            }
        }
        c
    }

    /// `(user, element)` pairs in user-major order.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.sets
            .iter()
            .enumerate()
            .flat_map(|(k, s)| s.iter().map(move |&m| (k, m)))
    }

    pub fn pairwise_disjoint(&self) -> bool {
        self.column_counts().iter().all(|&c| c <= 1)
    }
}

fn check_m_k(m_k: &[usize], users: usize, elements: usize) -> Result<()> {
    if m_k.len() != users {
        return Err(Error::invalid(
            "m_k",
            format!("expected {users} entries, got {}", m_k.len()),
        ));
    }
    if let Some(&bad) = m_k.iter().find(|&&v| v == 0 || v > elements) {
        return Err(Error::invalid(
            "m_k",
            format!("must be in [1, {elements}], got {bad}"),
        ));
    }
    Ok(())
}

/// Element indices sorted by descending gain, ties by lowest index.
fn ranked(row: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..row.len()).collect();
    idx.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
    idx
}

/// Indices of the `m` highest gains, ascending.
pub fn top_m(row: &[f64], m: usize) -> Vec<usize> {
    let mut idx = ranked(row);
    idx.truncate(m);
    idx.sort_unstable();
    idx
}

/// Gain-greedy selection. Each user takes its `m_k[k]` highest-gain
/// elements; with a finite `cap`, users are served in index order and
/// saturated elements are skipped. `cap = None` means `K`, which never binds.
pub fn select_greedy(
    gains: &GainMatrix,
    m_k: &[usize],
    cap: Option<usize>,
) -> Result<SelectionMatrix> {
    let (users, elements) = (gains.users(), gains.elements());
    check_m_k(m_k, users, elements)?;
    let cap = cap.unwrap_or(users.max(1));
    if cap == 0 {
        return Err(Error::invalid("m_element_cap", "must be at least 1"));
    }
    let demand: usize = m_k.iter().sum();
    if demand > elements * cap {
        return Err(Error::Infeasible(format!(
            "{demand} selections requested but {elements} elements x cap {cap} allow only {}",
            elements * cap
        )));
    }

    let mut counts = vec![0usize; elements];
    let mut sets = Vec::with_capacity(users);
    let mut padded = Vec::new();
    for (k, row) in gains.rows().enumerate() {
        let mut chosen: Vec<usize> = ranked(row)
            .into_iter()
            .filter(|&m| counts[m] < cap)
            .take(m_k[k])
            .collect();
        if chosen.len() < m_k[k] {
            return Err(Error::Infeasible(format!(
                "user {k}: only {} unsaturated elements remain for m_k = {}",
                chosen.len(),
                m_k[k]
            )));
        }
        if chosen.iter().any(|&m| row[m] == 0.0) {
            log::warn!(
                "user {k}: fewer than {} forward-facing elements, padding with zero-gain elements",
                m_k[k]
            );
            padded.push(k);
        }
        for &m in &chosen {
            counts[m] += 1;
        }
        chosen.sort_unstable();
        sets.push(chosen);
    }
    Ok(SelectionMatrix {
        elements,
        sets,
        cap,
        padded_users: padded,
    })
}

/// Upper bounds for [`select_brute_force`].
pub const BRUTE_FORCE_MAX_ELEMENTS: usize = 12;
pub const BRUTE_FORCE_MAX_USERS: usize = 3;
pub const BRUTE_FORCE_MAX_M_K: usize = 4;

fn combinations(n: usize, r: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..r).collect();
    loop {
        out.push(idx.clone());
        let mut i = r;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if idx[i] < n - r + i {
                break;
            }
            if i == 0 && idx[0] >= n - r {
                return out;
            }
        }
        idx[i] += 1;
        for j in i + 1..r {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Link quantities the oracle needs besides the gains.
#[derive(Clone, Debug)]
pub struct OracleLink<'a> {
    pub powers: &'a [f64],
    pub beta_sq: &'a [f64],
    pub sigma_sq: f64,
    pub convention: GainConvention,
}

/// Exhaustive search for the selection maximising the minimum closed-form
/// SINR at fixed powers. Ties keep the lexicographically first selection.
pub fn select_brute_force(
    gains: &GainMatrix,
    m_k: usize,
    cap: Option<usize>,
    link: &OracleLink<'_>,
) -> Result<SelectionMatrix> {
    let (users, elements) = (gains.users(), gains.elements());
    if elements > BRUTE_FORCE_MAX_ELEMENTS
        || users > BRUTE_FORCE_MAX_USERS
        || m_k > BRUTE_FORCE_MAX_M_K
    {
        return Err(Error::invalid(
            "brute_force",
            format!(
                "instance M={elements}, K={users}, m_k={m_k} exceeds M<={BRUTE_FORCE_MAX_ELEMENTS}, \
                 K<={BRUTE_FORCE_MAX_USERS}, m_k<={BRUTE_FORCE_MAX_M_K}"
            ),
        ));
    }
    check_m_k(&vec![m_k; users], users, elements)?;
    if link.powers.len() != users || link.beta_sq.len() != users {
        return Err(Error::invalid(
            "powers",
            "need one power and one budget per user",
        ));
    }
    let cap = cap.unwrap_or(users.max(1));

    let combos = combinations(elements, m_k);
    let c = combos.len();
    let mk = m_k as f64;
    // t[k][i]: amplitude sum of user k over combo i; s[k][i]: power sum.
    let mut t = vec![vec![0.0; c]; users];
    let mut s = vec![vec![0.0; c]; users];
    for k in 0..users {
        let row = gains.row(k);
        for (i, set) in combos.iter().enumerate() {
            for &m in set {
                let a = link.convention.amplitude(row[m]);
                t[k][i] += a;
                s[k][i] += a * a;
            }
        }
    }

    let mut choice = vec![0usize; users];
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut counts = vec![0usize; elements];
    loop {
        counts.iter_mut().for_each(|v| *v = 0);
        let mut ok = true;
        for &i in &choice {
            for &m in &combos[i] {
                counts[m] += 1;
                ok &= counts[m] <= cap;
            }
        }
        if ok {
            let mut worst = f64::INFINITY;
            for k in 0..users {
                let b = link.beta_sq[k];
                let interf: f64 = (0..users)
                    .map(|j| link.powers[j] / mk * s[k][choice[j]])
                    .sum();
                let num = link.powers[k] * b * t[k][choice[k]].powi(2) / mk;
                worst = worst.min(num / (b * interf + link.sigma_sq));
            }
            if best.as_ref().is_none_or(|(v, _)| worst > *v) {
                best = Some((worst, choice.clone()));
            }
        }
        let mut pos = users;
        loop {
            if pos == 0 {
                let (_, pick) = best.ok_or_else(|| {
                    Error::Infeasible("no selection satisfies the element cap".into())
                })?;
                let sets = pick.iter().map(|&i| combos[i].clone()).collect();
                return SelectionMatrix::from_sets(elements, sets, cap);
            }
            pos -= 1;
            choice[pos] += 1;
            if choice[pos] < c {
                break;
            }
            choice[pos] = 0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g(rows: Vec<Vec<f64>>) -> GainMatrix {
        GainMatrix::from_rows(rows).unwrap()
    }

    #[test]
    fn greedy_examples() {
        let s = select_greedy(&g(vec![vec![0.9, 0.5, 0.8]]), &[2], None).unwrap();
        assert_eq!(s.selected(0), &[0, 2]);

        let s = select_greedy(&g(vec![vec![0.7; 3]]), &[2], None).unwrap();
        assert_eq!(s.selected(0), &[0, 1]);

        let s = select_greedy(&g(vec![vec![0.9, 0.8], vec![0.9, 0.8]]), &[1, 1], Some(1)).unwrap();
        assert_eq!(s.selected(0), &[0]);
        assert_eq!(s.selected(1), &[1]);
    }

    #[test]
    fn greedy_errors_and_padding() {
        let gm = g(vec![vec![1.0, 2.0], vec![1.0, 2.0]]);
        assert!(matches!(
            select_greedy(&gm, &[2, 1], Some(1)),
            Err(Error::Infeasible(_))
        ));
        assert!(select_greedy(&gm, &[0, 1], None).is_err());
        assert!(select_greedy(&gm, &[3, 1], None).is_err());

        let s = select_greedy(&g(vec![vec![0.0, 3.0, 0.0, 0.0]]), &[3], None).unwrap();
        assert_eq!(s.selected(0), &[0, 1, 2]);
        assert_eq!(s.padded_users, vec![0]);
    }

    #[test]
    fn combinations_enumerate_all() {
        assert_eq!(combinations(4, 2).len(), 6);
        assert_eq!(combinations(5, 5), vec![vec![0, 1, 2, 3, 4]]);
        assert_eq!(combinations(12, 4).len(), 495);
        assert_eq!(combinations(3, 1), vec![vec![0], vec![1], vec![2]]);
    }

    #[test]
    fn brute_force_single_user_argmax() {
        let link = OracleLink {
            powers: &[1.0],
            beta_sq: &[1.0],
            sigma_sq: 1.0,
            convention: GainConvention::Scalar,
        };
        let s = select_brute_force(&g(vec![vec![1.0, 2.0, 3.0, 4.0]]), 1, None, &link).unwrap();
        assert_eq!(s.selected(0), &[3]);
    }

    #[test]
    fn brute_force_bounds() {
        let link = OracleLink {
            powers: &[1.0],
            beta_sq: &[1.0],
            sigma_sq: 1.0,
            convention: GainConvention::Scalar,
        };
        let big = GainMatrix::filled(1, 13, 1.0);
        assert!(select_brute_force(&big, 1, None, &link).is_err());
    }

    #[test]
    fn brute_force_matches_greedy_when_disjoint() {
        let mut a = vec![0.01; 8];
        let mut b = vec![0.01; 8];
        for m in 0..4 {
            a[m] = 2.0 + m as f64;
            b[m + 4] = 3.0 + m as f64;
        }
        let gm = g(vec![a, b]);
        let link = OracleLink {
            powers: &[1.0, 1.0],
            beta_sq: &[1.0, 1.0],
            sigma_sq: 1.0,
            convention: GainConvention::Scalar,
        };
        let greedy = select_greedy(&gm, &[4, 4], None).unwrap();
        let brute = select_brute_force(&gm, 4, None, &link).unwrap();
        assert!(greedy.pairwise_disjoint());
        assert_eq!(greedy, brute);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn cardinality_and_dominance(
                rows in prop::collection::vec(prop::collection::vec(0.0..5.0f64, 9), 1..4),
                mk in 1usize..4,
                cap in prop::option::of(1usize..3),
            ) {
                let users = rows.len();
                let gm = GainMatrix::from_rows(rows).unwrap();
                let Ok(s) = select_greedy(&gm, &vec![mk; users], cap) else { return Ok(()); };
                let cap = s.cap;
                prop_assert!(s.column_counts().iter().all(|&c| c <= cap));
                for k in 0..users {
                    prop_assert_eq!(s.m_k(k), mk);
                }
                // The first user is never constrained by the cap.
                let row = gm.row(0);
                let min_sel = s.selected(0).iter().map(|&m| row[m]).fold(f64::INFINITY, f64::min);
                let max_un = (0..9).filter(|&m| !s.contains(0, m)).map(|m| row[m]).fold(0.0, f64::max);
                prop_assert!(min_sel >= max_un);
            }
        }
    }
}
