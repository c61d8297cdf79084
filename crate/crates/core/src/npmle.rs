//! Nonparametric maximum likelihood estimate of the offspring law from a
//! complete family tree: `p_hat_k = Y_{n-1}(k) / Delta_{n-1}`.

use crate::cbp::{totals, FamilyTree, TreeTotals};
use crate::dist::Pmf;
use crate::error::{Error, Result};

pub fn npmle(tree: &FamilyTree) -> Result<Pmf> {
    npmle_from_totals(&totals(tree))
}

pub fn npmle_from_totals(totals: &TreeTotals) -> Result<Pmf> {
    if totals.delta == 0 {
        return Err(Error::NoProgenitors);
    }
    debug_assert_eq!(totals.y.iter().sum::<u64>(), totals.delta);
    Pmf::from_counts(&totals.y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cbp::simulate;
    use crate::dist::ControlSpec;

    #[test]
    fn single_generation_ratio() {
        let tree = FamilyTree::new(vec![2, 4], vec![2], vec![vec![0, 1, 0, 1]]).unwrap();
        let p = npmle(&tree).unwrap();
        assert_eq!(p.get(1), 0.5);
        assert_eq!(p.get(3), 0.5);
        assert_eq!(p.get(0), 0.0);
        assert_eq!(p.tail_mass(), 0.0);
    }

    #[test]
    fn doubling_tree_is_point_mass() {
        let tree = simulate(&Pmf::point_mass(2), &ControlSpec::identity(), 1, 6, 0);
        let p = npmle(&tree).unwrap();
        assert_eq!(p, Pmf::point_mass(2));
    }

    #[test]
    fn no_progenitors_is_an_error() {
        let tree = simulate(&Pmf::point_mass(2), &ControlSpec::identity(), 0, 3, 0);
        assert_eq!(npmle(&tree), Err(Error::NoProgenitors));
    }
}
