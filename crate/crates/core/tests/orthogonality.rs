mod common;

use std::time::Instant;

use common::orthogonality;
use robust_dde::manifolds::CriticalKind;

const SYSTEMS_PER_KIND: usize = 20;

fn check_kind(kind: CriticalKind, sigma: f64, seed0: u64) {
    let start = Instant::now();
    let mut passed = 0;
    let mut skipped = Vec::new();
    let mut seed = seed0;
    while passed < SYSTEMS_PER_KIND && seed < seed0 + 3 * SYSTEMS_PER_KIND as u64 {
        match orthogonality(seed, kind, sigma, 1e-4) {
            Ok(o) => {
                assert!(
                    o.worst <= 1e-6,
                    "seed {seed}: |r·t| = {:.3e} ({o:?})",
                    o.worst
                );
                passed += 1;
            }
            Err(e) => skipped.push((seed, e)),
        }
        seed += 1;
    }
    assert!(
        passed >= SYSTEMS_PER_KIND,
        "{kind:?}: only {passed} systems checked, skipped {skipped:?}"
    );
    eprintln!(
        "{kind:?}: {passed} systems, {} skipped, {:?}",
        skipped.len(),
        start.elapsed()
    );
}

#[test]
fn fold_normals_are_orthogonal_to_the_manifold() {
    check_kind(CriticalKind::Fold, 0.0, 1000);
}

#[test]
fn modified_fold_normals_are_orthogonal_to_the_manifold() {
    check_kind(CriticalKind::ModifiedFold, -0.3, 2000);
}

#[test]
fn hopf_normals_are_orthogonal_to_the_manifold() {
    check_kind(CriticalKind::Hopf, 0.0, 3000);
}

#[test]
fn modified_hopf_normals_are_orthogonal_to_the_manifold() {
    check_kind(CriticalKind::ModifiedHopf, -0.3, 4000);
}
