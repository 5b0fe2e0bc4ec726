import numpy as np
import pytest

from camimpact.classify import (
    FOLD, PERSISTENCE, UNDETERMINED, UnobservableBoundaryError, branch_fixed_points,
    canonicalize, classify, iterate_local_map, write_local_diagram_csv)
from camimpact.corner_map import LocalPWLMap

E1 = np.array([1.0, 0.0])


def random_continuous_map(rng, orientation=1):
    A_m = rng.uniform(-1.5, 1.5, (2, 2))
    C = rng.uniform(-1.0, 1.0, 2)
    B_m = rng.uniform(-2.0, 2.0, 2)
    D = rng.uniform(-2.0, 2.0)
    return LocalPWLMap(A_m, A_m + np.outer(E1, C), B_m, B_m + E1 * D, C, D,
                       orientation=orientation)


def test_golden_eigenvalues(golden_map):
    r = classify(golden_map)
    np.testing.assert_allclose(np.sort(r.eigenvalues_minus.real), [0.6367, 1.0052], atol=1e-3)
    ev = sorted(r.eigenvalues_plus, key=lambda z: z.imag)
    np.testing.assert_allclose(ev, [0.6857 - 0.4120j, 0.6857 + 0.4120j], atol=1e-3)
    assert (r.above_one_minus, r.above_one_plus) == (1, 0)
    assert r.verdict == FOLD


def test_golden_canonical_form(golden_map):
    cm = canonicalize(golden_map)
    np.testing.assert_allclose(cm.A_bar_minus, [[1.64186993642956, 1], [-0.64, 0]], rtol=0, atol=1e-9)
    np.testing.assert_allclose(cm.A_bar_plus, [[1.37142144144080, 1], [-0.64, 0]], rtol=0, atol=1e-9)
    np.testing.assert_allclose(cm.B_tilde, [1525.26226128059, -615.02768162765], rtol=1e-6)
    np.testing.assert_allclose(cm.C_bar, E1, atol=1e-12)


def test_golden_local_diagram(golden_map):
    d = iterate_local_map(golden_map, (-1e-4, 1e-4), n_points=9)
    for dT in d.delta_T:
        adm = d.admissible(dT)
        if dT > 0:
            assert len(adm) == 2 and sum(f.stable for f in adm) == 1
        elif dT < 0:
            assert adm == []
            assert all(esc for t, _, esc in d.orbits if t == dT)


def test_similarity_invariance(rng):
    for _ in range(20):
        m = random_continuous_map(rng)
        P = rng.standard_normal((2, 2)) + 2 * np.eye(2)
        Pi = np.linalg.inv(P)
        m2 = LocalPWLMap(Pi @ m.A_minus @ P, Pi @ m.A_plus @ P, Pi @ m.B_minus,
                         Pi @ m.B_plus, m.C @ P, m.D)
        a, b = canonicalize(m), canonicalize(m2)
        np.testing.assert_allclose(a.A_bar_minus, b.A_bar_minus, atol=1e-9)
        np.testing.assert_allclose(a.A_bar_plus, b.A_bar_plus, atol=1e-9)
        assert classify(m).verdict == classify(m2).verdict


def test_canonical_form_structure(rng):
    for _ in range(20):
        m = random_continuous_map(rng)
        cm = canonicalize(m)
        for A, Abar in ((m.A_minus, cm.A_bar_minus), (m.A_plus, cm.A_bar_plus)):
            np.testing.assert_allclose(Abar, [[np.trace(A), 1], [-np.linalg.det(A), 0]], atol=1e-9)


@pytest.mark.parametrize("orientation", [1, -1])
def test_parity_rule_matches_fixed_point_count(rng, orientation):
    checked = 0
    for _ in range(400):
        m = random_continuous_map(rng, orientation)
        r = classify(m)
        if r.verdict == UNDETERMINED:
            continue
        counts = []
        for dT in (-1e-3, 1e-3):
            fps = branch_fixed_points(m, dT)
            counts.append(sum(f.admissible for f in fps))
        if r.verdict == FOLD:
            assert sorted(counts) == [0, 2]
        else:
            assert counts == [1, 1]
        checked += 1
    assert checked > 300


def test_marginal_eigenvalue_is_undetermined():
    A = np.diag([1.0, 0.5])
    m = LocalPWLMap(A, A + np.outer(E1, [0.3, 1.0]), [1.0, 0.0], [1.5, 0.0], [0.3, 1.0], 0.5)
    assert classify(m).verdict == UNDETERMINED


def test_persistence_example():
    A = np.diag([0.5, 0.2])
    C = np.array([0.4, 1.0])
    m = LocalPWLMap(A, A + np.outer(E1, C), [1.0, 0.0], [1.2, 0.0], C, 0.2)
    assert classify(m).verdict == PERSISTENCE


def test_unobservable_boundary():
    A = np.diag([0.5, 0.2])
    C = np.array([0.0, 1.0])
    m = LocalPWLMap(A, A + np.outer(E1, C), [1.0, 0.0], [1.5, 0.0], C, 0.5)
    with pytest.raises(UnobservableBoundaryError):
        canonicalize(m)


def test_discontinuous_map_rejected(rng):
    m = random_continuous_map(rng)
    bad = LocalPWLMap(m.A_minus, m.A_plus, m.B_minus, m.B_plus + np.array([0.0, 1.0]), m.C, m.D)
    with pytest.raises(ValueError, match="not continuous"):
        canonicalize(bad)


def test_local_diagram_csv(tmp_path, golden_map):
    d = iterate_local_map(golden_map, (-1e-4, 1e-4), n_points=5)
    p = write_local_diagram_csv(d, tmp_path / "local.csv")
    lines = p.read_text().splitlines()
    assert lines[0] == "delta_T,branch,value,stability"
    assert any(",escape" in line for line in lines)
    assert any("stable" in line for line in lines)
