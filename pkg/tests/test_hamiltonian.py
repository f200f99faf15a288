import math

import numpy as np
import pytest

from conftest import dense_h_i, make_demo_formula
from nltslab import hamiltonian as ham
from nltslab import ksat
from nltslab.errors import ContractError, ParameterError, ResourceLimitError

GAMMAS = (0.25, 0.5, 0.9)


@pytest.fixture
def demo_layout(demo_formula):
    return ham.build_layout(demo_formula)


def _rand_state(layout, seed=0) -> ham.StateVector:
    rng = np.random.default_rng(seed)
    amp = rng.normal(size=layout.dim) + 1j * rng.normal(size=layout.dim)
    return ham.StateVector(layout, amp / np.linalg.norm(amp))


# ---------------------------------------------------------------------------
# layout
# ---------------------------------------------------------------------------

def test_layout_small(demo_layout):
    assert demo_layout.num_qubits == 6
    # each variable appears in two clause slots, so every fiber has 2 qubits
    # and every H_i acts on its fiber plus the 2 other qubits of its clauses
    assert all(len(f) == 2 for f in demo_layout.fibers)
    for i in range(3):
        support = set(demo_layout.fibers[i])
        for j in demo_layout.incidence[i]:
            support |= set(demo_layout.constraints[j].qubits)
        assert len(support) == 4


def test_layout_singleton_fibers():
    f = ksat.generate_formula(10, 1, 3, seed=3)
    layout = ham.build_layout(f)
    for i in f.clauses[0].variable_set:
        if len([v for v in f.clauses[0].variables if v == i]) == 1:
            assert len(layout.fibers[i]) == 1


def test_layout_fiber_sizes_count_slots():
    L, C = ksat.Literal, ksat.Clause
    f = ksat.Formula(n=2, K=2, clauses=(
        C((L(0, False), L(1, False))),
        C((L(0, True), L(1, False))),
        C((L(1, True), L(0, False))),
    ))
    layout = ham.build_layout(f)
    assert len(layout.fibers[0]) == 3
    assert len(layout.fibers[1]) == 3


def test_layout_qubit_indexing(demo_formula):
    layout = ham.build_layout(demo_formula)
    # qubit (j, k) = j*K + k; fibers collect a variable's slots
    for j, c in enumerate(demo_formula.clauses):
        for k, var in enumerate(c.variables):
            assert j * demo_formula.K + k in layout.fibers[var]


def test_layout_cap():
    f = ksat.generate_formula(10, 10, 3, seed=0)
    with pytest.raises(ResourceLimitError):
        ham.build_layout(f, cap=20)


# ---------------------------------------------------------------------------
# CAT state
# ---------------------------------------------------------------------------

def test_cat_single_variable():
    L, C = ksat.Literal, ksat.Clause
    f = ksat.Formula(n=1, K=1, clauses=(C((L(0, False),)),))
    psi = ham.cat_state(ham.build_layout(f))
    assert np.allclose(psi.amp, [1 / math.sqrt(2)] * 2)


def test_cat_small(demo_layout):
    psi = ham.cat_state(demo_layout)
    nz = np.nonzero(psi.amp)[0]
    assert nz.size == 8
    assert np.allclose(psi.amp[nz], (1 / math.sqrt(2)) ** 3)
    assert psi.norm() == pytest.approx(1.0, abs=1e-14)
    # support = fiber-consistent strings
    for z in nz:
        for mask in demo_layout.fiber_masks:
            assert (int(z) & mask) in (0, mask)


# ---------------------------------------------------------------------------
# Q(gamma)
# ---------------------------------------------------------------------------

def test_q_gamma_scales_by_violations(demo_layout):
    psi = _rand_state(demo_layout)
    out = ham.apply_q_gamma(psi, 0.5)
    viol = demo_layout.all_violations
    assert np.allclose(out.amp, psi.amp * 0.5**viol)
    # unviolated strings untouched, single violation halved
    z_clean = int(np.nonzero(viol == 0)[0][0])
    z_one = int(np.nonzero(viol == 1)[0][0])
    assert out.amp[z_clean] == psi.amp[z_clean]
    assert out.amp[z_one] == psi.amp[z_one] * 0.5


def test_q_gamma_inverse_roundtrip(demo_layout):
    psi = _rand_state(demo_layout, seed=5)
    for gamma in GAMMAS:
        back = ham.apply_q_gamma(ham.apply_q_gamma(psi, gamma, 1), gamma, -1)
        assert np.allclose(back.amp, psi.amp, atol=1e-13)


def test_q_gamma_validation(demo_layout):
    psi = _rand_state(demo_layout)
    with pytest.raises(ParameterError):
        ham.apply_q_gamma(psi, 0.0, -1)
    with pytest.raises(ParameterError):
        ham.apply_q_gamma(psi, 1.5, 1)
    with pytest.raises(ParameterError):
        ham.apply_q_gamma(psi, 0.01, -1)  # inverse below the conditioning floor


def test_q_gamma_tautology_is_identity():
    L, C = ksat.Literal, ksat.Clause
    f = ksat.Formula(n=1, K=2, clauses=(C((L(0, False), L(0, True))),))
    layout = ham.build_layout(f)
    psi = _rand_state(layout)
    out = ham.apply_q_gamma(psi, 0.3)
    assert np.array_equal(out.amp, psi.amp)


# ---------------------------------------------------------------------------
# H_i action
# ---------------------------------------------------------------------------

def test_h_i_annihilates_ground_state(demo_formula):
    for gamma in GAMMAS:
        psi = ham.ground_state(demo_formula, gamma)
        for i in range(demo_formula.n):
            assert np.linalg.norm(ham.apply_h_i(psi, i, gamma).amp) < 1e-12


def test_h_i_matches_dense_oracle():
    for seed in range(8):
        f = ksat.generate_formula(3, 2, 2, seed=seed)
        layout = ham.build_layout(f)
        psi = _rand_state(layout, seed=seed)
        for gamma in GAMMAS:
            for i in range(f.n):
                dense = dense_h_i(layout, i, gamma)
                expected = dense @ psi.amp
                got = ham.apply_h_i(psi, i, gamma).amp
                assert np.max(np.abs(got - expected)) < 1e-12


def test_h_i_positive_expectation(demo_layout):
    for seed in range(5):
        psi = _rand_state(demo_layout, seed=seed)
        for i in range(3):
            e = np.real(np.vdot(psi.amp, ham.apply_h_i(psi, i, 0.5).amp))
            assert e >= -1e-12


def test_h_i_reduces_to_projector_without_constraints():
    # a variable with clause slots but no forbidden patterns: H_i = I - P
    layout = ham.layout_from_blocks([((0,), ())], num_variables=1)
    minus = ham.basis_element_vector(layout, ham.BasisElement((0,), (-1,)))
    out = ham.apply_h_i(minus, 0, 0.5)
    assert np.allclose(out.amp, minus.amp)


def test_h_i_inactive_variable_is_zero():
    L, C = ksat.Literal, ksat.Clause
    f = ksat.Formula(n=3, K=2, clauses=(C((L(0, False), L(1, False))),))
    layout = ham.build_layout(f)
    psi = _rand_state(layout)
    assert np.all(ham.apply_h_i(psi, 2, 0.5).amp == 0)


# ---------------------------------------------------------------------------
# ground state and measurement
# ---------------------------------------------------------------------------

def test_ground_state_no_clauses_is_cat():
    layout = ham.layout_from_blocks([((0, 1), ())], num_variables=2)
    psi = ham.ground_state(layout, 0.5)
    assert np.allclose(psi.amp, ham.cat_state(layout).amp)


def test_ground_state_energy(demo_formula):
    for gamma in GAMMAS:
        psi = ham.ground_state(demo_formula, gamma)
        assert ham.energy(psi, gamma) <= 1e-10


def test_measurement_distribution_small(demo_formula):
    gamma = 0.5
    psi = ham.ground_state(demo_formula, gamma)
    dist = ham.measurement_distribution(psi)
    Z = 4 + 2 * gamma**2 + 2 * gamma**4
    layout = psi.layout
    assert len(dist) == 8
    for bits, p in dist.items():
        z = sum(int(b) << q for q, b in enumerate(bits))
        viol = int(layout.all_violations[z])
        assert p == pytest.approx(gamma ** (2 * viol) / Z, abs=1e-14)
    assert sum(dist.values()) == pytest.approx(1.0, abs=1e-12)


def test_measurement_distribution_cat_uniform(demo_layout):
    dist = ham.measurement_distribution(ham.cat_state(demo_layout))
    assert len(dist) == 8
    assert all(p == pytest.approx(1 / 8, abs=1e-14) for p in dist.values())


def test_measurement_distribution_point_mass(demo_layout):
    amp = np.zeros(demo_layout.dim)
    amp[37] = 1.0
    dist = ham.measurement_distribution(ham.StateVector(demo_layout, amp))
    assert dist == {"101001": 1.0}


def test_measurement_distribution_norm_check(demo_layout):
    amp = np.zeros(demo_layout.dim)
    amp[0] = 0.5
    with pytest.raises(ContractError):
        ham.measurement_distribution(ham.StateVector(demo_layout, amp))


# ---------------------------------------------------------------------------
# product basis
# ---------------------------------------------------------------------------

def test_basis_cat_element(demo_layout):
    w = ham.cat_basis_element(demo_layout)
    vec = ham.basis_element_vector(demo_layout, w)
    assert np.allclose(vec.amp, ham.cat_state(demo_layout).amp)


def test_basis_minus_single_qubit():
    layout = ham.layout_from_blocks([((0,), ())], num_variables=1)
    vec = ham.basis_element_vector(layout, ham.BasisElement((0,), (-1,)))
    assert np.allclose(vec.amp, [1 / math.sqrt(2), -1 / math.sqrt(2)])


def test_basis_orthonormal(demo_layout):
    vecs = [ham.basis_element_vector(demo_layout, w).amp
            for w in ham.all_basis_elements(demo_layout)]
    mat = np.array(vecs)
    assert mat.shape == (64, 64)
    gram = mat @ mat.conj().T
    assert np.max(np.abs(gram - np.eye(64))) < 1e-12


def test_basis_element_validation():
    with pytest.raises(ParameterError):
        ham.BasisElement((1,), (1,))  # first slot bit must be 0
    with pytest.raises(ParameterError):
        ham.BasisElement((0,), (2,))


def test_expand_in_basis_parseval(demo_layout):
    psi = _rand_state(demo_layout, seed=9)
    _, coeffs = ham.expand_in_basis(psi)
    assert np.sum(np.abs(coeffs) ** 2) == pytest.approx(1.0, abs=1e-12)


def test_ground_preimage_supported_on_cat_elements(demo_formula):
    """The inverse-softened ground state has no non-CAT basis component."""
    gamma = 0.5
    layout = ham.build_layout(demo_formula)
    psi = ham.ground_state(layout, gamma)
    phi = ham.apply_q_gamma(psi, gamma, sign=-1)
    for w, c in zip(*ham.expand_in_basis(phi)):
        if any(not w.is_cat_at(pos) for pos in range(len(w.patterns))):
            assert abs(c) < 1e-12


def test_w_elements_cat_on_counts(demo_layout):
    assert len(list(ham.w_elements_cat_on(demo_layout, {0, 1, 2}))) == 1
    # freeing one variable with |D(i)| = 2 gives 2^2 = 4 local factors
    assert len(list(ham.w_elements_cat_on(demo_layout, {0, 1}))) == 4


def test_w_elements_size_bound(demo_formula):
    """|W(S)| never exceeds 2^(n K eta) with eta from the exact search."""
    layout = ham.build_layout(demo_formula)
    for S in ({0, 1, 2}, {0, 1}, {0, 2}, {1, 2}):
        eta = ksat.eta_exact_excluded(demo_formula, demo_formula.n - len(S))
        count = len(list(ham.w_elements_cat_on(layout, S)))
        assert count <= 2 ** (demo_formula.n * demo_formula.K * eta) + 1e-9


# ---------------------------------------------------------------------------
# near-ground states
# ---------------------------------------------------------------------------

def test_near_ground_full_s_is_ground(demo_layout):
    psi = ham.near_ground_state(demo_layout, 0.5, {0, 1, 2})
    ref = ham.ground_state(demo_layout, 0.5)
    assert np.allclose(psi.amp, ref.amp, atol=1e-12)


def test_near_ground_one_excited_variable(demo_formula):
    layout = ham.build_layout(demo_formula)
    for i0 in range(3):
        S = set(range(3)) - {i0}
        psi = ham.near_ground_state(layout, 0.5, S, off_factors={i0: (0, -1)})
        e0 = np.real(np.vdot(psi.amp, ham.apply_h_i(psi, i0, 0.5).amp))
        assert e0 > 0.1
        for i in S:
            e = np.real(np.vdot(psi.amp, ham.apply_h_i(psi, i, 0.5).amp))
            assert abs(e) <= 1e-10


def test_near_ground_requires_off_factors(demo_layout):
    with pytest.raises(ParameterError):
        ham.near_ground_state(demo_layout, 0.5, {0, 1})


def test_near_ground_no_constraints_product_states():
    layout = ham.layout_from_blocks(
        [((0,), ()), ((1,), ())], num_variables=2
    )
    psi = ham.near_ground_state(
        layout, 0.5, S=set(), off_factors={0: (0, -1), 1: (0, 1)}
    )
    for i in range(2):
        e = float(np.real(np.vdot(psi.amp, ham.apply_h_i(psi, i, 0.5).amp)))
        assert e == pytest.approx(0.0, abs=1e-12) or e == pytest.approx(1.0, abs=1e-12)


# ---------------------------------------------------------------------------
# probability bounds
# ---------------------------------------------------------------------------

def test_probability_bound_full_s(demo_formula):
    gamma = 0.5
    psi = ham.ground_state(ham.build_layout(demo_formula), gamma)
    rep = ham.check_probability_bound(demo_formula, gamma, set(range(3)), psi)
    assert rep.eta == 0.0
    assert rep.s0_size == 4
    assert not rep.vacuous
    assert rep.bound_violations == 0
    assert rep.sandwich_violations == 0
    assert rep.max_bound_ratio <= 1.0


def test_probability_bound_reduced_s(demo_formula):
    gamma = 0.5
    layout = ham.build_layout(demo_formula)
    for i0 in range(3):
        S = set(range(3)) - {i0}
        psi = ham.near_ground_state(layout, gamma, S, off_factors={i0: (0, -1)})
        rep = ham.check_probability_bound(demo_formula, gamma, S, psi)
        assert rep.bound_violations == 0
        assert rep.sandwich_violations == 0


def test_amplitude_zero_off_basis_span(demo_formula):
    """Strings inconsistent on a fiber of S carry exactly zero amplitude."""
    gamma = 0.5
    layout = ham.build_layout(demo_formula)
    S = {0, 1}
    psi = ham.near_ground_state(layout, gamma, S, off_factors={2: (0, -1)})
    consistent = set(ham.consistent_strings(layout, S).tolist())
    for z in range(layout.dim):
        if z not in consistent:
            assert psi.amp[z] == 0


# ---------------------------------------------------------------------------
# state dumps
# ---------------------------------------------------------------------------

def test_state_roundtrip(tmp_path, demo_formula):
    layout = ham.build_layout(demo_formula)
    psi = ham.ground_state(layout, 0.5)
    path = tmp_path / "state.bin"
    ham.save_state(psi, path, gamma=0.5)
    back = ham.load_state(path, layout)
    assert np.array_equal(back.amp, psi.amp)


def test_state_layout_mismatch(tmp_path, demo_formula):
    layout = ham.build_layout(demo_formula)
    psi = ham.ground_state(layout, 0.5)
    path = tmp_path / "state.bin"
    ham.save_state(psi, path)
    f2 = ksat.Formula(n=3, K=2, clauses=make_demo_formula().clauses[:2])
    layout2 = ham.build_layout(f2)
    with pytest.raises(ParameterError):
        ham.load_state(path, layout2)
