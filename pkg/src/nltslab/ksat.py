"""Random K-SAT formulas and their clause/variable incidence structure.

Clauses are ordered lists of exactly K literals, drawn uniformly with
replacement from the (2n)^K possible clauses.  A clause whose variables all
admit a consistent falsifying value has a unique violating pattern v(C);
clauses containing a variable with both polarities are tautologies and are
treated as always satisfied.

Assignments are packed bit masks (bit i = value of variable i), so clause
evaluation reduces to one mask-and-compare per clause.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property
from itertools import combinations
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ParameterError, ResourceLimitError

LN2 = math.log(2.0)

#: Default cap on the number of excluded-variable subsets eta_exact will visit.
DEFAULT_ETA_BUDGET = 2_000_000


@dataclass(frozen=True)
class Literal:
    var: int
    negated: bool

    def falsifying_value(self) -> int:
        """Variable value that falsifies this literal (0 positive, 1 negated)."""
        return 1 if self.negated else 0


@dataclass(frozen=True)
class Clause:
    """Ordered K literals plus the precomputed violating pattern.

    ``violating_pattern`` is the per-slot falsifying bit string v(C), or None
    when the clause is a tautology (some variable occurs with both signs).
    """

    literals: tuple[Literal, ...]

    @cached_property
    def violating_pattern(self) -> tuple[int, ...] | None:
        forced: dict[int, int] = {}
        for lit in self.literals:
            value = lit.falsifying_value()
            if forced.setdefault(lit.var, value) != value:
                return None
        return tuple(lit.falsifying_value() for lit in self.literals)

    @cached_property
    def variables(self) -> tuple[int, ...]:
        return tuple(lit.var for lit in self.literals)

    @cached_property
    def variable_set(self) -> frozenset[int]:
        return frozenset(self.variables)

    @property
    def is_tautology(self) -> bool:
        return self.violating_pattern is None

    @cached_property
    def mask_value(self) -> tuple[int, int] | None:
        """(mask, value) over packed assignments; violated iff a & mask == value."""
        if self.is_tautology:
            return None
        mask = 0
        value = 0
        for lit in self.literals:
            mask |= 1 << lit.var
            if lit.negated:
                value |= 1 << lit.var
        return mask, value

    def violated_by(self, packed: int) -> bool:
        mv = self.mask_value
        if mv is None:
            return False
        mask, value = mv
        return (packed & mask) == value


@dataclass(frozen=True)
class Formula:
    n: int
    K: int
    clauses: tuple[Clause, ...]
    seed: int | None = None

    def __post_init__(self):
        if self.n < 1 or self.K < 1:
            raise ParameterError(f"need n >= 1 and K >= 1, got n={self.n}, K={self.K}")
        for c in self.clauses:
            if len(c.literals) != self.K:
                raise ParameterError("clause width differs from K")
            for lit in c.literals:
                if not 0 <= lit.var < self.n:
                    raise ParameterError(f"literal variable {lit.var} out of range [0, {self.n})")

    @property
    def m(self) -> int:
        return len(self.clauses)

    @cached_property
    def clause_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(masks, values, indices) of the non-tautological clauses, as uint64."""
        masks, values, idx = [], [], []
        for j, c in enumerate(self.clauses):
            mv = c.mask_value
            if mv is not None:
                masks.append(mv[0])
                values.append(mv[1])
                idx.append(j)
        return (
            np.asarray(masks, dtype=np.uint64),
            np.asarray(values, dtype=np.uint64),
            np.asarray(idx, dtype=np.int64),
        )


@dataclass(frozen=True)
class DensityParams:
    """Clause density m/n = alpha * 2^K * ln 2."""

    alpha: float
    K: int
    n: int

    @property
    def m(self) -> int:
        return clause_count(self.alpha, self.K, self.n)


def clause_count(alpha: float, K: int, n: int) -> int:
    """m = round(alpha * 2^K * ln2 * n), round-to-nearest."""
    m = round(alpha * (2**K) * LN2 * n)
    if m < 0:
        raise ParameterError("derived clause count is negative")
    return m


def generate_formula(n: int, m: int, K: int, seed: int) -> Formula:
    """Draw m clauses uniformly (ordered literals, variables with repetition)."""
    if n < 1 or K < 1:
        raise ParameterError(f"need n >= 1 and K >= 1, got n={n}, K={K}")
    if m < 0:
        raise ParameterError("m must be nonnegative")
    rng = np.random.default_rng(seed)
    # One uniform draw from [0, 2n) per slot: low bit = polarity.
    raw = rng.integers(0, 2 * n, size=(m, K), dtype=np.int64)
    clauses = tuple(
        Clause(tuple(Literal(int(v) // 2, bool(int(v) & 1)) for v in row)) for row in raw
    )
    return Formula(n=n, K=K, clauses=clauses, seed=seed)


def violating_assignment(clause: Clause) -> tuple[int, ...] | None:
    """The unique falsifying local pattern v(C), or None for a tautology."""
    return clause.violating_pattern


def pack_assignment(bits: Sequence[int] | int, n: int) -> int:
    if isinstance(bits, (int, np.integer)):
        packed = int(bits)
        if not 0 <= packed < (1 << n):
            raise ParameterError(f"packed assignment out of range for n={n}")
        return packed
    if len(bits) != n:
        raise ParameterError(f"assignment length {len(bits)} != n={n}")
    packed = 0
    for i, b in enumerate(bits):
        if b not in (0, 1):
            raise ParameterError("assignment entries must be 0/1")
        packed |= int(b) << i
    return packed


def unpack_assignment(packed: int, n: int) -> tuple[int, ...]:
    return tuple((packed >> i) & 1 for i in range(n))


def count_violations(f: Formula, assignment: Sequence[int] | int) -> int:
    """Number of clauses violated by the assignment (tautologies never count)."""
    packed = pack_assignment(assignment, f.n)
    return sum(c.violated_by(packed) for c in f.clauses)


def clauses_within(f: Formula, S: Iterable[int]) -> frozenset[int]:
    """C(S): indices of clauses whose variables all lie in S."""
    S = frozenset(S)
    if any(not 0 <= i < f.n for i in S):
        raise ParameterError("subset contains out-of-range variable index")
    return frozenset(j for j, c in enumerate(f.clauses) if c.variable_set <= S)


def clauses_containing(f: Formula, i: int) -> frozenset[int]:
    """C(x_i): indices of clauses in which variable i appears."""
    if not 0 <= i < f.n:
        raise ParameterError(f"variable index {i} out of range [0, {f.n})")
    return frozenset(j for j, c in enumerate(f.clauses) if i in c.variable_set)


def eta_exact_excluded(f: Formula, excluded: int, budget: int = DEFAULT_ETA_BUDGET) -> float:
    """eta = (1/n) max over |S| = n - excluded of (m - |C(S)|), exhaustively.

    Equivalently: the largest number of clauses touching any excluded set of
    the given size, divided by n.
    """
    if not 0 <= excluded <= f.n:
        raise ParameterError("excluded count out of range")
    if excluded == 0 or f.m == 0:
        return 0.0
    n_subsets = math.comb(f.n, excluded)
    if n_subsets > budget:
        raise ResourceLimitError(
            f"eta_exact would enumerate {n_subsets} subsets, over budget {budget}",
            budget_name="eta_budget",
        )
    clause_masks = [
        sum(1 << v for v in c.variable_set) for c in f.clauses
    ]
    best = 0
    for excl in combinations(range(f.n), excluded):
        emask = sum(1 << v for v in excl)
        touched = sum(1 for cm in clause_masks if cm & emask)
        if touched > best:
            best = touched
    return best / f.n


def eta_exact(f: Formula, eps: float, budget: int = DEFAULT_ETA_BUDGET) -> float:
    """eta for subsets of size exactly n - ceil(eps * n)."""
    if not 0.0 <= eps < 1.0:
        raise ParameterError("eps must be in [0, 1)")
    return eta_exact_excluded(f, math.ceil(eps * f.n), budget=budget)


def repeated_variable_stats(f: Formula) -> dict:
    """Frequency of clauses with duplicate variables / tautologies per instance."""
    dup = sum(1 for c in f.clauses if len(c.variable_set) < f.K)
    taut = sum(1 for c in f.clauses if c.is_tautology)
    m = max(f.m, 1)
    return {
        "m": f.m,
        "duplicate_variable_clauses": dup,
        "tautological_clauses": taut,
        "duplicate_fraction": dup / m,
        "tautology_fraction": taut / m,
    }


# ---------------------------------------------------------------------------
# DIMACS-compatible serialization (plus JSON sidecar with K / seed / alpha)
# ---------------------------------------------------------------------------

def to_dimacs(f: Formula) -> str:
    lines = [f"p cnf {f.n} {f.m}"]
    for c in f.clauses:
        toks = [str(-(lit.var + 1)) if lit.negated else str(lit.var + 1) for lit in c.literals]
        lines.append(" ".join(toks) + " 0")
    return "\n".join(lines) + "\n"


def from_dimacs(text: str, K: int | None = None, seed: int | None = None) -> Formula:
    n = None
    m_declared = None
    clauses: list[Clause] = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("c"):
            continue
        if line.startswith("p"):
            parts = line.split()
            if len(parts) != 4 or parts[1] != "cnf":
                raise ParameterError(f"malformed DIMACS header: {line!r}")
            n, m_declared = int(parts[2]), int(parts[3])
            continue
        toks = [int(t) for t in line.split()]
        if not toks or toks[-1] != 0:
            raise ParameterError(f"clause line not 0-terminated: {line!r}")
        lits = tuple(Literal(abs(t) - 1, t < 0) for t in toks[:-1])
        clauses.append(Clause(lits))
    if n is None:
        raise ParameterError("missing DIMACS header")
    if m_declared != len(clauses):
        raise ParameterError(f"header declares {m_declared} clauses, found {len(clauses)}")
    if K is None:
        K = len(clauses[0].literals) if clauses else 1
    return Formula(n=n, K=K, clauses=tuple(clauses), seed=seed)


def save_formula(f: Formula, path: str | Path, alpha: float | None = None) -> None:
    path = Path(path)
    path.write_text(to_dimacs(f))
    sidecar = {"n": f.n, "K": f.K, "m": f.m, "seed": f.seed, "alpha": alpha}
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(sidecar, indent=2) + "\n")


def load_formula(path: str | Path) -> Formula:
    path = Path(path)
    sidecar_path = path.with_suffix(path.suffix + ".json")
    K = seed = None
    if sidecar_path.exists():
        sidecar = json.loads(sidecar_path.read_text())
        K = sidecar.get("K")
        seed = sidecar.get("seed")
    return from_dimacs(path.read_text(), K=K, seed=seed)
