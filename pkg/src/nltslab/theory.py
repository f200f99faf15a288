"""Closed-form exponents and bounds, plus feasibility scans over parameters.

All exponents are in nats internally; CSV emitters add base-2 columns for
readability.  The rate exponent drops the O_K(2^-K) correction while the
second-moment exponent keeps the full inner logarithm, so the two bracket
the dropped term.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import ParameterError

LN2 = math.log(2.0)


@dataclass(frozen=True)
class RegimeParams:
    alpha: float
    K: int
    eps: float
    lam: float
    gamma: float
    eta: float
    nu1: float
    nu2: float
    delta: float

    @property
    def c1(self) -> float:
        return 0.5 * LN2 * (1.0 - self.alpha) + 2.0 * self.delta

    @property
    def c2(self) -> float:
        return LN2 * (1.0 - self.alpha) - self.delta

    @property
    def delta_cap(self) -> float:
        return (1.0 / 7.0) * LN2 * (1.0 - self.alpha)


def binary_entropy(x: float) -> float:
    """H(x) = -x ln x - (1-x) ln(1-x), with H(0) = H(1) = 0 by continuity."""
    if not 0.0 <= x <= 1.0:
        raise ParameterError(f"entropy argument must lie in [0, 1], got {x}")
    if x in (0.0, 1.0):
        return 0.0
    return -x * math.log(x) - (1.0 - x) * math.log(1.0 - x)


def rate_exponent(alpha: float, s: float, K: int) -> float:
    """C(alpha, s, K) = ln2 + H(s) - 2 ln2 alpha + ln2 alpha s^K (leading form)."""
    if not 0.0 <= s <= 1.0:
        raise ParameterError(f"overlap fraction s must lie in [0, 1], got {s}")
    return LN2 + binary_entropy(s) - 2.0 * LN2 * alpha + LN2 * alpha * s**K


def sat_count_lower_bound(beta: float, K: int) -> tuple[float, bool]:
    """Per-variable log lower bound on |SAT| at density beta; (value, in_regime).

    in_regime reflects the hypothesis beta < 2^K ln2 - ((K+1) ln2 + 3)/2, K >= 3.
    """
    q = 2.0**-K
    inner = 1.0 - 2.0 * q + q * q - K * q * (1.0 - q) * (2.0 * q + 3.0 * K * q * q)
    if inner <= 0.0:
        raise ParameterError("log argument nonpositive; K too small for this bound")
    value = LN2 + 0.5 * beta * math.log(inner)
    in_regime = K >= 3 and beta < (2.0**K) * LN2 - ((K + 1) * LN2 + 3.0) / 2.0
    return value, in_regime


def z2_exponent(alpha: float, s: float, K: int) -> float:
    """Normalized second-moment exponent with the full inner logarithm."""
    if not 0.0 <= s <= 1.0:
        raise ParameterError(f"overlap fraction s must lie in [0, 1], got {s}")
    inner = 1.0 - (2.0 * 2.0**-K - (2.0**-K) * s**K)
    if inner <= 0.0:
        raise ParameterError("inner logarithm argument nonpositive")
    return LN2 + binary_entropy(s) + alpha * 2.0**K * LN2 * math.log(inner)


def coverage_deficit(eps: float, K: int) -> float:
    """2^K (1 - (1-eps)^K): clause mass lost to an eps-fraction exclusion."""
    return 2.0**K * (1.0 - (1.0 - eps) ** K)


def azuma_tail(eta: float, eps: float, K: int) -> tuple[float, bool]:
    """Per-variable log of the union bound for the coverage event; (value, in_regime).

    value = eps ln(e/eps) - (eta - 2^K(1-(1-eps)^K))^2 / 2^(K+1); negative
    certifies the event at rate n.  in_regime requires eta above the mean
    coverage deficit.
    """
    if eps < 0.0:
        raise ParameterError("eps must be nonnegative")
    deficit = coverage_deficit(eps, K)
    in_regime = eta > deficit
    entropy = 0.0 if eps == 0.0 else eps * math.log(math.e / eps)
    value = entropy - (eta - deficit) ** 2 / 2.0 ** (K + 1)
    return value, in_regime


def g0(eps: float) -> float:
    """Explicit subset-entropy piece 2 eps ln(e / (2 eps)) of the g function."""
    if eps < 0.0:
        raise ParameterError("eps must be nonnegative")
    if eps == 0.0:
        return 0.0
    return 2.0 * eps * math.log(math.e / (2.0 * eps))


def depth_lower_bound(
    d: float, n_bits: int, mu: float, outer_base2: bool = True
) -> float:
    """(1/3) log(d^2 / (400 n ln(1/mu))); outer log base 2 by default.

    The inner log(1/mu) is always natural.  A nonpositive argument yields a
    nonpositive (vacuous) bound rather than an error.
    """
    if not 0.0 < mu < 1.0:
        raise ParameterError(f"mu must lie in (0, 1), got {mu}")
    if d < 0 or n_bits < 1:
        raise ParameterError("need d >= 0 and n_bits >= 1")
    arg = d * d / (400.0 * n_bits * math.log(1.0 / mu))
    if arg <= 0.0:
        return -math.inf
    log_val = math.log2(arg) if outer_base2 else math.log(arg)
    return log_val / 3.0


@dataclass(frozen=True)
class ConsistencyReport:
    c1: float
    c2: float
    delta_ok: bool
    gamma_lambda_ok: bool  # gamma^(2 lambda) < 1/8
    amplification_ok: bool  # (2/gamma)^(4 K eta) <= 2^((c2-c1)/2)
    tail_ok: bool  # gamma^(2 lambda - 3 K eta) < 1/8
    locality_ok: bool  # 4 K eta < 1
    margins: dict = field(default_factory=dict)

    @property
    def all_ok(self) -> bool:
        return (
            self.delta_ok
            and self.gamma_lambda_ok
            and self.amplification_ok
            and self.tail_ok
            and self.locality_ok
        )


def check_parameter_consistency(p: RegimeParams) -> ConsistencyReport:
    c1, c2 = p.c1, p.c2
    lhs_amp = (2.0 / p.gamma) ** (4.0 * p.K * p.eta)
    rhs_amp = 2.0 ** ((c2 - c1) / 2.0)
    gl = p.gamma ** (2.0 * p.lam)
    tail = p.gamma ** (2.0 * p.lam - 3.0 * p.K * p.eta)
    return ConsistencyReport(
        c1=c1,
        c2=c2,
        delta_ok=0.0 < p.delta <= p.delta_cap and 0.0 < c1 < c2,
        gamma_lambda_ok=gl < 1.0 / 8.0,
        amplification_ok=lhs_amp <= rhs_amp,
        tail_ok=tail < 1.0 / 8.0,
        locality_ok=4.0 * p.K * p.eta < 1.0,
        margins={
            "gamma_2lambda": gl,
            "amplification_lhs": lhs_amp,
            "amplification_rhs": rhs_amp,
            "tail": tail,
            "4K_eta": 4.0 * p.K * p.eta,
            "c2_minus_c1": c2 - c1,
        },
    )


def window_sup_rate(alpha: float, K: int, nu1: float, nu2: float, s_step: float = 0.005) -> float:
    """Grid sup of C(alpha, s, K) over s in [1 - nu2, 1 - nu1]."""
    lo, hi = 1.0 - nu2, 1.0 - nu1
    grid = np.arange(lo, hi + s_step / 2, s_step)
    grid = np.clip(grid, 0.0, 1.0)
    return max(rate_exponent(alpha, float(s), K) for s in grid)


def derive_eps(eta: float, K: int, max_halvings: int = 600) -> float | None:
    """Largest geometric-grid eps making the Azuma tail strictly negative."""
    eps = min(eta / (4.0 * K * 2.0**K), 0.25)
    for _ in range(max_halvings):
        if eps <= 0.0 or eps < 5e-300:
            return None
        value, in_regime = azuma_tail(eta, eps, K)
        if in_regime and value < 0.0:
            return eps
        eps /= 8.0
    return None


def scan_regime(
    alpha: float,
    K_values: Iterable[int],
    nu_step: float = 0.005,
    s_step: float = 0.005,
    gamma_grid: Sequence[float] = (1e-2, 1e-4, 1e-6),
    lambda_grid: Sequence[float] = (0.05, 0.1, 0.2),
    eta_grid: Sequence[float] = (1e-4, 1e-6, 1e-8),
    delta_grid: Sequence[float] = (1e-4, 1e-3, 5e-3),
    slack: float = LN2 / 20.0,
    max_results: int = 200,
) -> list[RegimeParams]:
    """Feasible (K, nu1, nu2, eps, lambda, gamma, eta, delta) tuples.

    A tuple is feasible when the rate exponent stays below -slack on the
    [1-nu2, 1-nu1] window, the Azuma coverage event certifies at the derived
    eps, and all parameter-ledger constraints hold.
    """
    if not 0.5 + 0.2 < alpha < 1.0:
        raise ParameterError(f"alpha must lie in (1/2 + 1/5, 1), got {alpha}")
    results: list[RegimeParams] = []
    for K in K_values:
        window = first_feasible_window(alpha, K, nu_step, s_step, slack)
        if window is None:
            continue
        nu1, nu2 = window
        for delta in delta_grid:
            for gamma in gamma_grid:
                for lam in lambda_grid:
                    for eta in eta_grid:
                        eps = derive_eps(eta, K)
                        if eps is None:
                            continue
                        params = RegimeParams(
                            alpha=alpha, K=K, eps=eps, lam=lam, gamma=gamma,
                            eta=eta, nu1=nu1, nu2=nu2, delta=delta,
                        )
                        if check_parameter_consistency(params).all_ok:
                            results.append(params)
                            if len(results) >= max_results:
                                return results
    return results


def first_feasible_window(
    alpha: float, K: int, nu_step: float, s_step: float, slack: float
) -> tuple[float, float] | None:
    """Smallest (nu1, nu2) grid pair with nu1 < nu2/2 whose window sup is <= -slack."""
    nu_values = np.arange(nu_step, 0.5, nu_step)
    for nu2 in nu_values:
        if nu2 >= 0.5:
            break
        for nu1 in nu_values:
            if nu1 >= nu2 / 2.0:
                break
            if window_sup_rate(alpha, K, float(nu1), float(nu2), s_step) <= -slack:
                return float(nu1), float(nu2)
    return None
