"""CAT / Q(gamma) Hamiltonian construction and matrix-free state-vector ops.

One qubit per clause slot: qubit (j, k) holds the k-th literal of clause j
and gets global index j*K + k (bit q of a basis-state index is qubit q).
Each variable owns the fiber D(i) of its clause-slot qubits; the fibers are
disjoint and cover all qubits.  Constraints are "forbidden pattern" blocks:
a K-SAT clause forbids its single violating pattern v(C) (none for a
tautology), a quantized p-spin hyperedge forbids the 2^(p-1) energy-raising
sign patterns.  All Q operators are diagonal, so everything is applied
matrix-free; per-amplitude violation counts are accumulated as integers and
exponentiated once.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from functools import cached_property
from itertools import product
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ContractError, ParameterError, ResourceLimitError
from .ksat import Formula

DEFAULT_QUBIT_CAP = 20
#: Full-basis enumeration is exponential in qubit count; cap it separately.
BASIS_ENUM_CAP = 16
INV_SQRT2 = 1.0 / math.sqrt(2.0)
#: gamma below this underflows double precision at large violation counts.
MIN_GAMMA = 0.1


@dataclass(frozen=True)
class Constraint:
    """A forbidden-pattern block on its own contiguous set of qubits.

    ``forbidden`` holds local patterns as integers (bit k = value on
    ``qubits[k]``) whose presence costs one unit of energy / one factor gamma.
    """

    qubits: tuple[int, ...]
    variables: tuple[int, ...]
    forbidden: tuple[int, ...]

    @cached_property
    def global_mask(self) -> int:
        return sum(1 << q for q in self.qubits)

    @cached_property
    def global_values(self) -> tuple[int, ...]:
        out = []
        for pat in self.forbidden:
            out.append(sum(((pat >> k) & 1) << q for k, q in enumerate(self.qubits)))
        return tuple(out)


@dataclass(frozen=True)
class QubitLayout:
    num_qubits: int
    num_variables: int
    constraints: tuple[Constraint, ...]
    fibers: tuple[tuple[int, ...], ...]  # D(i), ascending qubit order

    def __post_init__(self):
        seen: set[int] = set()
        for fiber in self.fibers:
            for q in fiber:
                if q in seen:
                    raise ParameterError("fibers must be disjoint")
                seen.add(q)
        if seen != set(range(self.num_qubits)):
            raise ParameterError("fibers must cover all qubits")

    @cached_property
    def incidence(self) -> tuple[tuple[int, ...], ...]:
        """C(x_i): constraint indices per variable."""
        inc: list[list[int]] = [[] for _ in range(self.num_variables)]
        for j, c in enumerate(self.constraints):
            for v in set(c.variables):
                inc[v].append(j)
        return tuple(tuple(ix) for ix in inc)

    @cached_property
    def fiber_masks(self) -> tuple[int, ...]:
        return tuple(sum(1 << q for q in fiber) for fiber in self.fibers)

    @cached_property
    def active_variables(self) -> tuple[int, ...]:
        return tuple(i for i in range(self.num_variables) if self.fibers[i])

    @property
    def dim(self) -> int:
        return 1 << self.num_qubits

    @cached_property
    def all_violations(self) -> np.ndarray:
        return violation_counts(self)

    def content_hash(self) -> str:
        payload = json.dumps(
            {
                "num_qubits": self.num_qubits,
                "num_variables": self.num_variables,
                "constraints": [
                    [list(c.qubits), list(c.variables), list(c.forbidden)]
                    for c in self.constraints
                ],
                "fibers": [list(f) for f in self.fibers],
            },
            sort_keys=True,
        )
        return hashlib.sha256(payload.encode()).hexdigest()


@dataclass
class StateVector:
    layout: QubitLayout
    amp: np.ndarray  # complex128, length layout.dim

    def __post_init__(self):
        self.amp = np.asarray(self.amp, dtype=np.complex128)
        if self.amp.shape != (self.layout.dim,):
            raise ParameterError("amplitude array length must be 2^(num qubits)")

    def norm(self) -> float:
        return float(np.linalg.norm(self.amp))

    def normalized(self) -> "StateVector":
        nrm = self.norm()
        if nrm == 0.0:
            raise ParameterError("cannot normalize the zero vector")
        return StateVector(self.layout, self.amp / nrm)

    def copy(self) -> "StateVector":
        return StateVector(self.layout, self.amp.copy())


def layout_from_blocks(
    blocks: Sequence[tuple[tuple[int, ...], tuple[int, ...]]],
    num_variables: int,
    cap: int = DEFAULT_QUBIT_CAP,
) -> QubitLayout:
    """Build a layout from (variables, forbidden patterns) blocks.

    Block b of arity p occupies the next p global qubits.
    """
    constraints: list[Constraint] = []
    fibers: list[list[int]] = [[] for _ in range(num_variables)]
    q = 0
    for variables, forbidden in blocks:
        qubits = tuple(range(q, q + len(variables)))
        q += len(variables)
        for slot, v in enumerate(variables):
            if not 0 <= v < num_variables:
                raise ParameterError("block variable index out of range")
            fibers[v].append(qubits[slot])
        constraints.append(Constraint(qubits=qubits, variables=tuple(variables), forbidden=tuple(forbidden)))
    if q > cap:
        raise ResourceLimitError(f"{q} qubits exceed cap {cap}", budget_name="qubit_cap")
    return QubitLayout(
        num_qubits=q,
        num_variables=num_variables,
        constraints=tuple(constraints),
        fibers=tuple(tuple(f) for f in fibers),
    )


def build_layout(f: Formula, cap: int = DEFAULT_QUBIT_CAP) -> QubitLayout:
    """Km-qubit layout for a K-SAT formula; clause j owns qubits j*K .. j*K+K-1."""
    blocks = []
    for c in f.clauses:
        pat = c.violating_pattern
        if pat is None:
            forbidden: tuple[int, ...] = ()
        else:
            forbidden = (sum(b << k for k, b in enumerate(pat)),)
        blocks.append((c.variables, forbidden))
    return layout_from_blocks(blocks, num_variables=f.n, cap=cap)


def violation_counts(layout: QubitLayout, constraint_ids: Iterable[int] | None = None) -> np.ndarray:
    """Per-basis-index count of constraints whose local pattern is forbidden."""
    ids = range(len(layout.constraints)) if constraint_ids is None else constraint_ids
    idx = np.arange(layout.dim, dtype=np.uint64)
    viol = np.zeros(layout.dim, dtype=np.int64)
    for j in ids:
        c = layout.constraints[j]
        mask = np.uint64(c.global_mask)
        for gval in c.global_values:
            viol += (idx & mask) == np.uint64(gval)
    return viol


def cat_state(layout: QubitLayout) -> StateVector:
    """Tensor product of (|0..0> + |1..1>)/sqrt(2) over every nonempty fiber."""
    indices = np.zeros(1, dtype=np.uint64)
    n_active = 0
    for i in layout.active_variables:
        fm = np.uint64(layout.fiber_masks[i])
        indices = np.concatenate([indices, indices | fm])
        n_active += 1
    amp = np.zeros(layout.dim, dtype=np.complex128)
    amp[indices] = INV_SQRT2**n_active
    return StateVector(layout, amp)


def _check_gamma(gamma: float, sign: int):
    if not 0.0 < gamma <= 1.0:
        if gamma == 0.0 and sign == -1:
            raise ParameterError("gamma=0 is not invertible")
        raise ParameterError(f"gamma must lie in (0, 1], got {gamma}")
    if gamma < MIN_GAMMA and sign == -1:
        raise ParameterError(
            f"gamma={gamma} below {MIN_GAMMA}: inverse application risks overflow/underflow"
        )


def apply_q_gamma(
    psi: StateVector,
    gamma: float,
    sign: int = 1,
    constraint_ids: Iterable[int] | None = None,
) -> StateVector:
    """Diagonal map: amplitude of z scaled by gamma^(sign * violations_J(z))."""
    if sign not in (1, -1):
        raise ParameterError("sign must be +1 or -1")
    _check_gamma(gamma, sign)
    if constraint_ids is None:
        viol = psi.layout.all_violations
    else:
        viol = violation_counts(psi.layout, constraint_ids)
    vmax = int(viol.max()) if viol.size else 0
    powers = gamma ** (sign * np.arange(vmax + 1, dtype=np.float64))
    return StateVector(psi.layout, psi.amp * powers[viol])


def project_out_cat(psi: StateVector, variable: int) -> StateVector:
    """(I - |CAT(i)><CAT(i)|) applied on the fiber D(i)."""
    fiber = psi.layout.fibers[variable]
    if not fiber:
        # no qubits carry this variable; its CAT projector is trivial
        return StateVector(psi.layout, np.zeros_like(psi.amp))
    mask = np.uint64(psi.layout.fiber_masks[variable])
    idx = np.arange(psi.layout.dim, dtype=np.uint64)
    z0 = idx[(idx & mask) == 0]
    z1 = z0 | mask
    out = psi.amp.copy()
    s = (psi.amp[z0] + psi.amp[z1]) / 2.0
    out[z0] -= s
    out[z1] -= s
    return StateVector(psi.layout, out)


def apply_h_i(psi: StateVector, variable: int, gamma: float) -> StateVector:
    """H_i = Q_{x_i,g}^{-1} (I - |CAT(i)><CAT(i)|) Q_{x_i,g}^{-1}, matrix-free."""
    layout = psi.layout
    if not 0 <= variable < layout.num_variables:
        raise ParameterError("variable index out of range")
    if not layout.fibers[variable]:
        return StateVector(layout, np.zeros_like(psi.amp))
    ids = layout.incidence[variable]
    out = apply_q_gamma(psi, gamma, sign=-1, constraint_ids=ids)
    out = project_out_cat(out, variable)
    return apply_q_gamma(out, gamma, sign=-1, constraint_ids=ids)


def energy(psi: StateVector, gamma: float) -> float:
    """Sum_i <psi|H_i|psi> (real part; each term is PSD)."""
    total = 0.0
    for i in range(psi.layout.num_variables):
        total += float(np.real(np.vdot(psi.amp, apply_h_i(psi, i, gamma).amp)))
    return total


def ground_state(layout_or_formula, gamma: float) -> StateVector:
    """Normalized Q(gamma)|CAT>, the shared zero-energy state of every H_i."""
    layout = (
        build_layout(layout_or_formula)
        if isinstance(layout_or_formula, Formula)
        else layout_or_formula
    )
    return apply_q_gamma(cat_state(layout), gamma, sign=1).normalized()


def measurement_distribution(psi: StateVector, norm_tol: float = 1e-12) -> dict[str, float]:
    """|amplitude|^2 per computational basis string (zero entries omitted).

    String position q holds the value of qubit q = (j, k) with q = j*K + k.
    """
    nrm = psi.norm()
    if abs(nrm - 1.0) > norm_tol:
        raise ContractError(f"state norm {nrm} deviates from 1 beyond {norm_tol}")
    probs = np.abs(psi.amp) ** 2
    total = float(probs.sum())
    if abs(total - 1.0) > 1e-10:
        raise ContractError(f"probabilities sum to {total}")
    nq = psi.layout.num_qubits
    out = {}
    for z in np.nonzero(probs)[0]:
        bits = "".join(str((int(z) >> q) & 1) for q in range(nq))
        out[bits] = float(probs[z])
    return out


# ---------------------------------------------------------------------------
# The noncanonical product basis
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BasisElement:
    """Per active variable: a local fiber pattern (lexicographically below its
    flip, i.e. first-slot bit 0) and a sign; the element is
    tensor_i (|sigma_i> + sign_i |~sigma_i>)/sqrt(2).

    ``patterns[a]`` / ``signs[a]`` refer to the a-th *active* variable in
    increasing variable order; bit k of a pattern is the k-th fiber qubit.
    """

    patterns: tuple[int, ...]
    signs: tuple[int, ...]

    def __post_init__(self):
        if len(self.patterns) != len(self.signs):
            raise ParameterError("patterns and signs must have equal length")
        for pat, sign in zip(self.patterns, self.signs):
            if pat & 1:
                raise ParameterError("pattern must be lexicographically below its flip (first bit 0)")
            if sign not in (1, -1):
                raise ParameterError("signs must be +1 or -1")

    def is_cat_at(self, active_pos: int) -> bool:
        return self.patterns[active_pos] == 0 and self.signs[active_pos] == 1


def cat_basis_element(layout: QubitLayout) -> BasisElement:
    k = len(layout.active_variables)
    return BasisElement(patterns=(0,) * k, signs=(1,) * k)


def _scatter(pattern: int, fiber: tuple[int, ...]) -> int:
    return sum(((pattern >> k) & 1) << q for k, q in enumerate(fiber))


def _basis_support(layout: QubitLayout, w: BasisElement) -> tuple[np.ndarray, np.ndarray]:
    """(indices, unnormalized +-1 coefficients) of |w> in the computational basis."""
    active = layout.active_variables
    if len(w.patterns) != len(active):
        raise ParameterError(
            f"basis element has {len(w.patterns)} factors, layout has {len(active)} active variables"
        )
    idx = np.zeros(1, dtype=np.uint64)
    coef = np.ones(1, dtype=np.float64)
    for pos, i in enumerate(active):
        fiber = layout.fibers[i]
        sig = np.uint64(_scatter(w.patterns[pos], fiber))
        sigbar = sig ^ np.uint64(layout.fiber_masks[i])
        idx = np.concatenate([idx | sig, idx | sigbar])
        coef = np.concatenate([coef, w.signs[pos] * coef])
    return idx, coef


def basis_element_vector(layout: QubitLayout, w: BasisElement) -> StateVector:
    idx, coef = _basis_support(layout, w)
    amp = np.zeros(layout.dim, dtype=np.complex128)
    amp[idx] = coef * INV_SQRT2 ** len(layout.active_variables)
    return StateVector(layout, amp)


def basis_coefficient(psi: StateVector, w: BasisElement) -> complex:
    """<w|psi> without materializing the full |w> vector."""
    idx, coef = _basis_support(psi.layout, w)
    scale = INV_SQRT2 ** len(psi.layout.active_variables)
    return complex(np.sum(coef * psi.amp[idx]) * scale)


def _factor_choices(fiber_size: int):
    for pat in range(0, 1 << fiber_size, 2):
        for sign in (1, -1):
            yield pat, sign


def all_basis_elements(layout: QubitLayout, cap: int = BASIS_ENUM_CAP):
    """Every basis element (2^(num qubits) of them); generator."""
    if layout.num_qubits > cap:
        raise ResourceLimitError(
            f"full basis has 2^{layout.num_qubits} elements, over cap 2^{cap}",
            budget_name="basis_cap",
        )
    active = layout.active_variables
    choice_lists = [list(_factor_choices(len(layout.fibers[i]))) for i in active]
    for combo in product(*choice_lists):
        yield BasisElement(
            patterns=tuple(c[0] for c in combo), signs=tuple(c[1] for c in combo)
        )


def w_elements_cat_on(layout: QubitLayout, S: Iterable[int], cap: int = BASIS_ENUM_CAP):
    """W(S): basis elements with the CAT factor at every active i in S."""
    S = frozenset(S)
    active = layout.active_variables
    free_qubits = sum(len(layout.fibers[i]) for i in active if i not in S)
    if free_qubits > cap:
        raise ResourceLimitError(
            f"W(S) has 2^{free_qubits} elements, over cap 2^{cap}", budget_name="basis_cap"
        )
    choice_lists = [
        [(0, 1)] if i in S else list(_factor_choices(len(layout.fibers[i]))) for i in active
    ]
    for combo in product(*choice_lists):
        yield BasisElement(
            patterns=tuple(c[0] for c in combo), signs=tuple(c[1] for c in combo)
        )


def expand_in_basis(psi: StateVector, elements: Iterable[BasisElement] | None = None):
    """Coefficients <w|psi> over the given elements (full basis by default)."""
    elems = list(elements) if elements is not None else list(all_basis_elements(psi.layout))
    coeffs = np.array([basis_coefficient(psi, w) for w in elems], dtype=np.complex128)
    return elems, coeffs


def near_ground_state(
    layout: QubitLayout,
    gamma: float,
    S: Iterable[int],
    off_factors: Mapping[int, tuple[int, int]] | None = None,
    verify_tol: float = 1e-10,
) -> StateVector:
    """Normalized Q(gamma)|w> with CAT factors on S and caller factors off S.

    ``off_factors`` maps each active variable outside S to a (pattern, sign)
    local factor; H_i annihilation is verified for every i in S.
    """
    S = frozenset(S)
    off_factors = dict(off_factors or {})
    patterns, signs = [], []
    for i in layout.active_variables:
        if i in S:
            patterns.append(0)
            signs.append(1)
        else:
            if i not in off_factors:
                raise ParameterError(f"missing local factor for variable {i} outside S")
            pat, sign = off_factors[i]
            patterns.append(pat)
            signs.append(sign)
    w = BasisElement(patterns=tuple(patterns), signs=tuple(signs))
    psi = apply_q_gamma(basis_element_vector(layout, w), gamma, sign=1).normalized()
    for i in S:
        if 0 <= i < layout.num_variables and layout.fibers[i]:
            e_i = float(np.real(np.vdot(psi.amp, apply_h_i(psi, i, gamma).amp)))
            if e_i > verify_tol:
                raise ContractError(f"<psi|H_{i}|psi> = {e_i} exceeds {verify_tol} for i in S")
    return psi


# ---------------------------------------------------------------------------
# Probability bounds for near-ground states
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ProbabilityBoundReport:
    eta: float
    eta_n: int
    s_bar_size: int
    s0_size: int
    vacuous: bool
    bound_violations: int
    max_bound_ratio: float  # max over z of |<psi|z>|^2 / rhs(l(z))
    sandwich_violations: int
    max_sandwich_slack: float


def consistent_strings(layout: QubitLayout, S: Iterable[int], cap_log2: int = 22) -> np.ndarray:
    """All basis indices whose fiber values are constant on every active i in S."""
    S = frozenset(S)
    indices = np.zeros(1, dtype=np.uint64)
    size_log2 = 0
    for i in layout.active_variables:
        fiber = layout.fibers[i]
        if i in S:
            size_log2 += 1
        else:
            size_log2 += len(fiber)
        if size_log2 > cap_log2:
            raise ResourceLimitError(
                f"consistent-string set exceeds 2^{cap_log2}", budget_name="sbar_cap"
            )
        if i in S:
            fm = np.uint64(layout.fiber_masks[i])
            indices = np.concatenate([indices, indices | fm])
        else:
            for q in fiber:
                bit = np.uint64(1 << q)
                indices = np.concatenate([indices, indices | bit])
    return np.sort(indices)


def check_probability_bound(
    f: Formula,
    gamma: float,
    S: Iterable[int],
    psi: StateVector,
    rel_tol: float = 1e-9,
) -> ProbabilityBoundReport:
    """Verify |<psi|z>|^2 <= gamma^(2r) (2/gamma)^(3K eta n) / |Sbar(0)| on Sbar(r),
    and the gamma^(r + eta n) |<phi|z>| <= |<psi|z>| <= gamma^r |<phi|z>| sandwich.
    """
    from . import ksat

    layout = psi.layout
    S = frozenset(S)
    excluded = f.n - len(S)
    eta = ksat.eta_exact_excluded(f, excluded)
    eta_n = round(eta * f.n)
    zs = consistent_strings(layout, S)
    # l(z): violations among clauses entirely within S
    cs_ids = sorted(ksat.clauses_within(f, S))
    ell = np.zeros(zs.size, dtype=np.int64)
    for j in cs_ids:
        c = layout.constraints[j]
        mask = np.uint64(c.global_mask)
        for gval in c.global_values:
            ell += (zs & mask) == np.uint64(gval)
    s0 = int((ell == 0).sum())
    psi_abs = np.abs(psi.amp[zs])
    if s0 == 0:
        return ProbabilityBoundReport(
            eta=eta, eta_n=eta_n, s_bar_size=int(zs.size), s0_size=0, vacuous=True,
            bound_violations=0, max_bound_ratio=0.0, sandwich_violations=0,
            max_sandwich_slack=0.0,
        )
    amplification = (2.0 / gamma) ** (3 * f.K * eta_n)
    rhs = (gamma ** (2 * ell)) * amplification / s0
    probs = psi_abs**2
    ratios = probs / rhs
    bound_viol = int((ratios > 1.0 + rel_tol).sum())
    phi = apply_q_gamma(psi, gamma, sign=-1)
    phi_abs = np.abs(phi.amp[zs])
    upper = (gamma**ell) * phi_abs
    lower = (gamma ** (ell + eta_n)) * phi_abs
    scale = max(float(psi_abs.max()), 1e-300)
    up_slack = (psi_abs - upper) / scale
    lo_slack = (lower - psi_abs) / scale
    sandwich_viol = int(((up_slack > rel_tol) | (lo_slack > rel_tol)).sum())
    return ProbabilityBoundReport(
        eta=eta,
        eta_n=eta_n,
        s_bar_size=int(zs.size),
        s0_size=s0,
        vacuous=False,
        bound_violations=bound_viol,
        max_bound_ratio=float(ratios.max()),
        sandwich_violations=sandwich_viol,
        max_sandwich_slack=float(max(up_slack.max(), lo_slack.max())),
    )


# ---------------------------------------------------------------------------
# State dumps
# ---------------------------------------------------------------------------

def save_state(psi: StateVector, path: str | Path, gamma: float | None = None) -> None:
    """Binary little-endian complex doubles plus a JSON header sidecar."""
    path = Path(path)
    path.write_bytes(psi.amp.astype("<c16").tobytes())
    header = {
        "num_qubits": psi.layout.num_qubits,
        "layout_hash": psi.layout.content_hash(),
        "gamma": gamma,
        "dtype": "<c16",
    }
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(header, indent=2) + "\n")


def load_state(path: str | Path, layout: QubitLayout) -> StateVector:
    path = Path(path)
    header = json.loads(path.with_suffix(path.suffix + ".json").read_text())
    if header["layout_hash"] != layout.content_hash():
        raise ParameterError("state dump does not match the provided layout")
    amp = np.frombuffer(path.read_bytes(), dtype="<c16").astype(np.complex128)
    return StateVector(layout, amp)
