import json

import numpy as np
import pytest

from rebindkit.errors import ComplexUnderReversible, NoFeasibleStart, ValidationError
from rebindkit.experiments import as_generator, load_fixture
from rebindkit.genpcca import random_feasible_A
from rebindkit.markov import RateMatrix, stationary_distribution
from rebindkit.projection import project, rebinding_measures
from rebindkit.rebind import (
    MultiStartConfig,
    RebindObjective,
    build_pattern,
    minimize_rebinding,
    normalize_assumption,
    reference_basis,
    resolve_assumption,
    reversible_closed_form_check,
    structural_mask,
)
from rebindkit.schur import dominant_basis

from conftest import metastable_generator, random_generator, random_reversible_generator
from oracles import reversible_bound, schur_spade, two_state_bound

# det(S_opt) of the printed SQRA Q_c under the reversible pattern, from the
# grid-search oracle in oracles.reversible_bound (frozen)
SQRA_PRINTED_REV = 0.36369
# |spade| of the same matrix from the hand-built Schur basis in oracles.schur_spade (frozen)
SQRA_PRINTED_SPADE = 0.0036794

FAST = MultiStartConfig(starts=12, seed=1)


def real_spectrum_generators(rng, count, m=3):
    out = []
    while len(out) < count:
        Q = random_generator(rng, m)
        if np.abs(np.linalg.eigvals(Q).imag).max() < 1e-9:
            out.append(Q)
    return out


def check_bound_invariants(bound, Q):
    A = bound.A_opt
    Ainv = np.linalg.inv(A)
    np.testing.assert_allclose(Ainv[:, 0], 1.0, atol=1e-9)
    assert bound.S_opt.min() >= -1e-8
    assert A[0].min() > 0
    assert bound.det_S_opt <= 1.0 + 1e-9
    np.testing.assert_allclose(np.linalg.det(bound.S_opt), bound.det_S_opt, rtol=1e-6, atol=1e-9)
    Xi = A @ Q @ Ainv
    assert bound.pattern.off_pattern(Xi) <= 1e-6
    np.testing.assert_allclose(Xi, bound.Xi_realized, atol=1e-9)
    ev = np.sort_complex(np.linalg.eigvals(bound.Xi_realized))
    np.testing.assert_allclose(ev, np.sort_complex(np.linalg.eigvals(Q)), atol=1e-6)


def test_assumption_names():
    assert normalize_assumption("rev") == "reversible"
    assert normalize_assumption("NonRev") == "non-reversible"
    with pytest.raises(ValidationError):
        normalize_assumption("maybe")


def test_auto_assumption():
    electron = as_generator(load_fixture("electron_qc"))[0]
    sqra = as_generator(load_fixture("sqra_qc"))[0]
    assert resolve_assumption(electron, "auto") == "reversible"
    assert resolve_assumption(sqra, "auto") == "non-reversible"
    assert resolve_assumption(sqra, "rev") == "reversible"


def test_pattern_shapes():
    Q = as_generator(load_fixture("sqra_qc"))[0]
    rev = build_pattern(Q, "rev")
    nonrev = build_pattern(Q, "nonrev")
    assert not rev.free.any()
    assert nonrev.free_slots() == [(1, 2)]
    ev = np.sort(np.linalg.eigvals(Q).real)[::-1]
    np.testing.assert_allclose(rev.diagonal, [0.0, ev[1], ev[2]], atol=1e-15)
    assert structural_mask(rev).tolist() == [[False, False], [True, False], [False, True]]
    assert structural_mask(nonrev).tolist() == [[False, False], [True, True], [False, True]]


def test_pattern_complex_pair():
    Q = np.array([[-1.0, 1.0, 0.0], [0.0, -1.0, 1.0], [1.0, 0.0, -1.0]])
    with pytest.raises(ComplexUnderReversible):
        build_pattern(Q, "rev")
    p = build_pattern(Q, "nonrev")
    assert p.blocks == ((1, 2),)
    assert p.free[2, 1] and p.free[1, 2]
    np.testing.assert_allclose(p.diagonal, [0.0, -1.5, -1.5])


def test_pattern_rejects_bad_input():
    with pytest.raises(ValidationError):
        build_pattern(np.zeros((3, 3)), "rev")  # zero is not simple
    with pytest.raises(ValidationError):
        build_pattern([[-1.0, 0.5], [0.5, -0.5]], "rev")  # rows do not sum to zero
    with pytest.raises(ValidationError):
        build_pattern([[0.0]], "rev")


def test_reference_basis_puts_qc_in_pattern(rng):
    for Q in real_spectrum_generators(rng, 5, m=4):
        for assumption in ("rev", "nonrev"):
            p = build_pattern(Q, assumption)
            B = reference_basis(Q, p)
            np.testing.assert_allclose(B[:, 0], 1.0)
            Xi = np.linalg.solve(B, Q @ B)
            if assumption == "rev":
                np.testing.assert_allclose(Xi, p.target, atol=1e-10)
            else:
                assert p.off_pattern(Xi) < 1e-10


def test_objective_at_real_transformation(rng):
    # the transformation of an actual clustering is feasible for its own Q_c
    Q, _ = metastable_generator(rng, [4, 5, 3])
    pi = stationary_distribution(RateMatrix(Q))
    basis = dominant_basis(Q, pi, 3)
    A = random_feasible_A(basis.X, 2)
    model = project(RateMatrix(Q), basis.X @ A, pi)
    pattern = build_pattern(model.Qc, "nonrev")
    obj = RebindObjective(model.Qc, pattern)
    theta = obj.theta_of(np.linalg.inv(A))
    t = obj.terms(theta)
    assert np.sqrt(t["penalty"]) < 1e-8
    assert t["det_S"] == pytest.approx(rebinding_measures(model)[1], rel=1e-8)
    assert obj(theta, 1e6) == pytest.approx(abs(t["det_S"] - 1.0), abs=1e-8)


def test_objective_singular():
    Q = as_generator(load_fixture("sqra_qc"))[0]
    obj = RebindObjective(Q, build_pattern(Q, "rev"))
    assert obj.terms(np.zeros(obj.size)) is None
    assert obj(np.zeros(obj.size)) > 1e5
    assert obj.residual(np.zeros(obj.size)) == np.inf


def test_two_state_bound_is_one(rng):
    for _ in range(5):
        a, b = rng.uniform(0.01, 2.0, 2)
        Q = np.array([[-a, a], [b, -b]])
        bound = minimize_rebinding(Q, "nonrev", FAST)
        assert bound.det_S_opt == pytest.approx(1.0, abs=1e-6)
        assert two_state_bound(Q) == pytest.approx(1.0, abs=1e-6)
        check_bound_invariants(bound, Q)


def test_reversible_bound_matches_oracle(rng):
    for Q in real_spectrum_generators(rng, 4):
        bound = minimize_rebinding(Q, "rev", MultiStartConfig(starts=20, seed=0))
        assert bound.det_S_opt == pytest.approx(reversible_bound(Q), rel=1e-5, abs=1e-6)
        check_bound_invariants(bound, Q)


def test_reversible_input_reaches_one(rng):
    Q, _ = random_reversible_generator(rng, 4)
    for assumption in ("rev", "nonrev"):
        bound = minimize_rebinding(Q, assumption, FAST)
        assert bound.det_S_opt == pytest.approx(1.0, abs=1e-6)
    A = reversible_closed_form_check(Q)
    assert A is not None
    S = A.T @ A / A[0][:, None]
    assert np.linalg.det(S) >= 1 - 1e-6


def test_non_reversible_bound_is_one(rng):
    # pi-orthonormal Schur vectors give S = I, so the upper-triangular pattern never binds
    for Q in real_spectrum_generators(rng, 3):
        bound = minimize_rebinding(Q, "nonrev", FAST)
        assert bound.det_S_opt == pytest.approx(1.0, abs=1e-6)
        assert abs(bound.spade[0]) == pytest.approx(schur_spade(Q), rel=1e-6)
        check_bound_invariants(bound, Q)


def test_reversible_not_above_non_reversible(rng):
    for Q in real_spectrum_generators(rng, 3):
        rev = minimize_rebinding(Q, "rev", FAST).det_S_opt
        nonrev = minimize_rebinding(Q, "nonrev", FAST).det_S_opt
        assert rev <= nonrev + 1e-6


def test_printed_sqra_values():
    Q = as_generator(load_fixture("sqra_qc"))[0]
    assert reversible_bound(Q) == pytest.approx(SQRA_PRINTED_REV, abs=1e-5)
    assert schur_spade(Q) == pytest.approx(SQRA_PRINTED_SPADE, abs=1e-7)
    rev = minimize_rebinding(Q, "rev", MultiStartConfig(starts=20))
    nonrev = minimize_rebinding(Q, "nonrev", MultiStartConfig(starts=20))
    assert rev.det_S_opt == pytest.approx(SQRA_PRINTED_REV, abs=1e-5)
    assert nonrev.spade[0] == pytest.approx(SQRA_PRINTED_SPADE, abs=1e-7)
    assert rev.spade == []
    check_bound_invariants(rev, Q)
    check_bound_invariants(nonrev, Q)


def test_complex_pair_non_reversible():
    Q = np.array([[-1.0, 0.8, 0.2], [0.1, -1.0, 0.9], [0.85, 0.05, -0.9]])
    assert np.abs(np.linalg.eigvals(Q).imag).max() > 0.1
    bound = minimize_rebinding(Q, "nonrev", FAST)
    check_bound_invariants(bound, Q)
    assert len(bound.spade) == 2  # the coupling above the block and the subdiagonal of the pair
    with pytest.raises(ComplexUnderReversible):
        minimize_rebinding(Q, "rev", FAST)


def test_symmetrization_of_rounded_input():
    Q = as_generator(load_fixture("electron_qc"))[0]
    bound = minimize_rebinding(Q, "rev", FAST)
    assert bound.symmetrized is not None and 0 < bound.symmetrized < 1e-4
    assert bound.det_S_opt >= 0.999
    assert minimize_rebinding(Q, "nonrev", FAST).symmetrized is None


def test_closed_form_refuses_non_reversible():
    Q = as_generator(load_fixture("sqra_qc"))[0]
    with pytest.raises(ValidationError):
        reversible_closed_form_check(Q)


def test_two_state_closed_form():
    A = reversible_closed_form_check([[-0.3, 0.3], [0.1, -0.1]])
    assert A is not None
    np.testing.assert_allclose(A[0], [0.25, 0.75], atol=1e-12)


def test_reproducible_and_serializable():
    Q = as_generator(load_fixture("sqra_qc"))[0]
    a = minimize_rebinding(Q, "nonrev", MultiStartConfig(starts=6, seed=4))
    b = minimize_rebinding(Q, "nonrev", MultiStartConfig(starts=6, seed=4))
    assert a.to_json() == b.to_json()
    d = json.loads(a.to_json())
    assert set(d) >= {"det_S_opt", "A_opt", "Xi_realized", "spade", "residual", "per_start"}
    assert len(d["per_start"]) == 6
    assert d["per_start"][0]["start"] == 0


def test_workers_do_not_change_result():
    Q = as_generator(load_fixture("sqra_qc"))[0]
    one = minimize_rebinding(Q, "rev", MultiStartConfig(starts=4, seed=2))
    two = minimize_rebinding(Q, "rev", MultiStartConfig(starts=4, seed=2, workers=2))
    assert one.to_json() == two.to_json()


def test_full_search_not_worse():
    Q = as_generator(load_fixture("sqra_qc"))[0]
    cfg = MultiStartConfig(starts=4, seed=0)
    structured = minimize_rebinding(Q, "rev", cfg)
    full = minimize_rebinding(Q, "rev", MultiStartConfig(starts=4, seed=0, search="full"))
    assert full.det_S_opt >= structured.det_S_opt - 1e-9
    assert full.constraint_residual <= 1e-6


def test_no_feasible_start():
    Q = as_generator(load_fixture("sqra_qc"))[0]
    with pytest.raises(NoFeasibleStart) as info:
        minimize_rebinding(Q, "rev", MultiStartConfig(starts=2, feasibility=1e-30))
    assert info.value.best_residual >= 0


def test_config_validation():
    with pytest.raises(ValidationError):
        MultiStartConfig(starts=0)
    with pytest.raises(ValidationError):
        MultiStartConfig(search="random")
    with pytest.raises(ValidationError):
        MultiStartConfig(mu_schedule=(1.0, -1.0))
