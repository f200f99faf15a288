"""p-spin Ising model on random d-regular p-uniform hypergraphs.

Hypergraphs come from the configuration model: n*d stubs are shuffled and
grouped into m = n*d/p hyperedges, resampling whole draws until no edge
repeats a node.  Spin configurations are packed bit masks (bit i = 1 means
sigma_i = -1), so each energy term is a parity popcount.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ParameterError, ResourceLimitError
from .hamiltonian import QubitLayout, layout_from_blocks
from .landscape import BLOCK_SIZE, SolutionSet

DEFAULT_SPIN_CAP = 30
DEFAULT_RETRY_BUDGET = 10_000

#: Parisi ground-state constant for scaling experiments; the artifact never
#: asserts against it directly, only against ratios across degrees.
ETA_PARISI_DEFAULT = 0.763166


@dataclass(frozen=True)
class RegularHypergraph:
    n: int
    d: int
    p: int
    hyperedges: tuple[tuple[int, ...], ...]
    seed: int | None = None

    def __post_init__(self):
        degrees = [0] * self.n
        for e in self.hyperedges:
            if len(e) != self.p or len(set(e)) != self.p:
                raise ParameterError("hyperedge must contain p distinct nodes")
            for v in e:
                degrees[v] += 1
        if any(deg != self.d for deg in degrees):
            raise ParameterError("hypergraph is not d-regular")

    @property
    def m(self) -> int:
        return len(self.hyperedges)

    @cached_property
    def edge_masks(self) -> np.ndarray:
        return np.asarray(
            [sum(1 << v for v in e) for e in self.hyperedges], dtype=np.uint64
        )


@dataclass(frozen=True)
class CouplingVector:
    values: tuple[int, ...]  # +1 / -1 per hyperedge
    seed: int | None = None

    def __post_init__(self):
        if any(v not in (1, -1) for v in self.values):
            raise ParameterError("couplings must be +1 or -1")


def generate_regular_hypergraph(
    n: int, d: int, p: int, seed: int, retry_budget: int = DEFAULT_RETRY_BUDGET
) -> RegularHypergraph:
    """Configuration-model pairing, rejecting samples with a repeated node in an edge."""
    if p < 2:
        raise ParameterError("uniformity p must be at least 2")
    if (n * d) % p != 0:
        raise ParameterError(f"n*d = {n * d} not divisible by p = {p}")
    rng = np.random.default_rng(seed)
    stubs = np.repeat(np.arange(n), d)
    for _ in range(retry_budget):
        perm = rng.permutation(stubs)
        groups = perm.reshape(-1, p)
        if (np.diff(np.sort(groups, axis=1), axis=1) != 0).all():
            edges = tuple(tuple(int(v) for v in g) for g in groups)
            return RegularHypergraph(n=n, d=d, p=p, hyperedges=edges, seed=seed)
    raise ResourceLimitError(
        f"no simple pairing found in {retry_budget} tries", budget_name="retry_budget"
    )


def generate_couplings(g: RegularHypergraph, seed: int) -> CouplingVector:
    rng = np.random.default_rng(seed)
    vals = rng.integers(0, 2, size=g.m) * 2 - 1
    return CouplingVector(values=tuple(int(v) for v in vals), seed=seed)


def _as_spins(sigma: Sequence[int] | np.ndarray, n: int) -> np.ndarray:
    spins = np.asarray(sigma, dtype=np.int64)
    if spins.shape != (n,):
        raise ParameterError(f"spin configuration must have length {n}")
    if not np.isin(spins, (-1, 1)).all():
        raise ParameterError("spins must be +1 or -1")
    return spins


def spins_to_packed(sigma: Sequence[int], n: int) -> int:
    spins = _as_spins(sigma, n)
    return int(sum(1 << i for i in range(n) if spins[i] == -1))


def packed_to_spins(packed: int, n: int) -> np.ndarray:
    return np.asarray([-1 if (packed >> i) & 1 else 1 for i in range(n)], dtype=np.int64)


def energy(g: RegularHypergraph, J: CouplingVector, sigma: Sequence[int]) -> int:
    """H(sigma) = sum_e J_e prod_i sigma(e(i)); exact integer in [-m, m]."""
    if len(J.values) != g.m:
        raise ParameterError("coupling vector length differs from edge count")
    spins = _as_spins(sigma, g.n)
    total = 0
    for e, j in zip(g.hyperedges, J.values):
        prod = 1
        for v in e:
            prod *= int(spins[v])
        total += j * prod
    return total


def _energies_packed(g: RegularHypergraph, J: CouplingVector, zs: np.ndarray) -> np.ndarray:
    """Vectorized energies for packed configurations (bit i set = spin -1)."""
    total = np.zeros(zs.size, dtype=np.int64)
    jarr = np.asarray(J.values, dtype=np.int64)
    for mask, j in zip(g.edge_masks, jarr):
        parity = (np.bitwise_count(zs & mask) & np.uint64(1)).astype(np.int64)
        total += j * (1 - 2 * parity)
    return total


def ground_state_bruteforce(
    g: RegularHypergraph, J: CouplingVector, cap: int = DEFAULT_SPIN_CAP
) -> tuple[np.ndarray, int]:
    """Global minimizer and energy; lexicographically smallest on ties.

    For even p the global flip symmetry halves the search space; the
    lexicographically smallest minimizer always lies in the searched half.
    """
    if g.n > cap:
        raise ResourceLimitError(f"n={g.n} exceeds spin cap {cap}", budget_name="spin_cap")
    if len(J.values) != g.m:
        raise ParameterError("coupling vector length differs from edge count")
    search = 1 << (g.n - 1) if g.p % 2 == 0 and g.n >= 1 else 1 << g.n
    best_e: int | None = None
    best_z = 0
    for lo in range(0, search, BLOCK_SIZE):
        zs = np.arange(lo, min(lo + BLOCK_SIZE, search), dtype=np.uint64)
        en = _energies_packed(g, J, zs)
        k = int(np.argmin(en))
        if best_e is None or en[k] < best_e:
            best_e = int(en[k])
            best_z = int(zs[k])
    assert best_e is not None
    return packed_to_spins(best_z, g.n), best_e


def near_ground_set(
    g: RegularHypergraph, J: CouplingVector, slack: int, cap: int = DEFAULT_SPIN_CAP
) -> SolutionSet:
    """All sigma with H(sigma) <= min + slack, as packed bits for the landscape tools."""
    if slack < 0:
        raise ParameterError("slack must be nonnegative")
    _, emin = ground_state_bruteforce(g, J, cap=cap)
    threshold = emin + slack
    parts = []
    total = 1 << g.n
    for lo in range(0, total, BLOCK_SIZE):
        zs = np.arange(lo, min(lo + BLOCK_SIZE, total), dtype=np.uint64)
        en = _energies_packed(g, J, zs)
        parts.append(zs[en <= threshold])
    members = np.concatenate(parts)
    return SolutionSet(n=g.n, members=members, r=int(slack))


def quantize(g: RegularHypergraph, J: CouplingVector, cap: int = 20) -> QubitLayout:
    """Forbidden-pattern layout on n*d qubits: one qubit per (edge, position).

    A local bit pattern q (bit set = spin -1) is energy-raising exactly when
    the sign product equals J_e, i.e. when (-1)^popcount(q) == J_e; those
    2^(p-1) patterns are forbidden.
    """
    if len(J.values) != g.m:
        raise ParameterError("coupling vector length differs from edge count")
    blocks = []
    for e, j in zip(g.hyperedges, J.values):
        forbidden = tuple(
            pat for pat in range(1 << g.p) if (-1) ** int(bin(pat).count("1")) == j
        )
        blocks.append((e, forbidden))
    return layout_from_blocks(blocks, num_variables=g.n, cap=cap)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def save_hypergraph(g: RegularHypergraph, path: str | Path) -> None:
    payload = {
        "n": g.n,
        "d": g.d,
        "p": g.p,
        "seed": g.seed,
        "hyperedges": [list(e) for e in g.hyperedges],
    }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")


def load_hypergraph(path: str | Path) -> RegularHypergraph:
    payload = json.loads(Path(path).read_text())
    return RegularHypergraph(
        n=payload["n"],
        d=payload["d"],
        p=payload["p"],
        hyperedges=tuple(tuple(e) for e in payload["hyperedges"]),
        seed=payload.get("seed"),
    )
