"""Reproducible experiment runner.

Every subcommand writes its data files plus a ``manifest.json`` listing each
file with a content hash; identical configs and seeds give byte-identical
data files (manifests may differ only in the wall-time field).

Randomness flows from one 64-bit master seed: the stream for instance index
``i`` is the first 8 bytes of blake2b("<master>:<i>").

Exit codes: 0 success, 2 validation, 3 resource-cap breach, 4 internal
assertion.  Caps can be overridden with NLTSLAB_ENUM_CAP, NLTSLAB_QUBIT_CAP,
NLTSLAB_PAIR_CAP and NLTSLAB_ETA_BUDGET.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, hamiltonian, ksat, landscape, pspin, theory
from .errors import ContractError, ParameterError, ResourceLimitError

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_RESOURCE = 3
EXIT_ASSERTION = 4


def stream_seed(master: int, index: int) -> int:
    digest = hashlib.blake2b(f"{master}:{index}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def _env_int(name: str, default: int) -> int:
    raw = os.environ.get(name)
    return int(raw) if raw else default


def _caps() -> dict:
    return {
        "enum_cap": _env_int("NLTSLAB_ENUM_CAP", landscape.DEFAULT_ENUM_CAP),
        "qubit_cap": _env_int("NLTSLAB_QUBIT_CAP", hamiltonian.DEFAULT_QUBIT_CAP),
        "pair_cap": _env_int("NLTSLAB_PAIR_CAP", landscape.DEFAULT_PAIR_CAP),
        "eta_budget": _env_int("NLTSLAB_ETA_BUDGET", ksat.DEFAULT_ETA_BUDGET),
    }


class _Run:
    """Collects output files and emits the manifest."""

    def __init__(self, outdir: Path, subcommand: str, config: dict):
        self.outdir = outdir
        self.subcommand = subcommand
        self.config = config
        self.t0 = time.monotonic()
        self.files: dict[str, str] = {}
        outdir.mkdir(parents=True, exist_ok=True)

    def path(self, name: str) -> Path:
        return self.outdir / name

    def register(self, name: str) -> None:
        digest = hashlib.sha256(self.path(name).read_bytes()).hexdigest()
        self.files[name] = digest

    def write_json(self, name: str, obj) -> None:
        self.path(name).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
        self.register(name)

    def finish(self) -> None:
        manifest = {
            "subcommand": self.subcommand,
            "config": self.config,
            "files": self.files,
            "version": __version__,
            "wall_time_s": time.monotonic() - self.t0,
        }
        self.path("manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _seed_list(args) -> list[int]:
    if args.seeds:
        return [int(s) for s in args.seeds.split(",")]
    return [stream_seed(args.master_seed, i) for i in range(args.instances)]


def _resolve_m(args) -> int:
    if args.m is not None:
        return args.m
    if args.alpha is not None:
        return ksat.clause_count(args.alpha, args.K, args.n)
    raise ParameterError("specify either --m or --alpha")


def _make_formula(args, seed: int) -> ksat.Formula:
    return ksat.generate_formula(args.n, _resolve_m(args), args.K, seed)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_gen(args, run: _Run):
    for seed in _seed_list(args):
        f = _make_formula(args, seed)
        name = f"formula_{seed}.cnf"
        ksat.save_formula(f, run.path(name), alpha=args.alpha)
        run.register(name)
        run.register(name + ".json")


def cmd_enumerate(args, run: _Run):
    caps = _caps()
    for seed in _seed_list(args):
        f = _make_formula(args, seed)
        if args.eps is not None:
            A = landscape.enumerate_sat_eps(f, args.eps, args.r, workers=args.workers, cap=caps["enum_cap"])
        else:
            A = landscape.enumerate_sat(f, args.r, workers=args.workers, cap=caps["enum_cap"])
        name = f"members_{seed}.csv"
        landscape.members_to_csv(A, run.path(name))
        run.register(name)
        run.write_json(
            f"summary_{seed}.json",
            {
                "seed": seed, "n": f.n, "m": f.m, "K": f.K, "r": args.r,
                "eps": args.eps, "count": len(A),
                "log_count_per_n": math.log(len(A)) / f.n if len(A) else None,
                "duplicates": ksat.repeated_variable_stats(f),
            },
        )


def cmd_ogp(args, run: _Run):
    caps = _caps()
    for seed in _seed_list(args):
        f = _make_formula(args, seed)
        A = landscape.enumerate_sat(f, args.r, workers=args.workers, cap=caps["enum_cap"])
        hist = landscape.overlap_histogram(A, cap=caps["pair_cap"])
        name = f"histogram_{seed}.csv"
        landscape.histogram_to_csv(hist, run.path(name))
        run.register(name)
        holds, witness = landscape.detect_ogp(A, args.nu1, args.nu2, cap=caps["pair_cap"])
        run.write_json(
            f"ogp_{seed}.json",
            {"seed": seed, "count": len(A), "nu1": args.nu1, "nu2": args.nu2,
             "holds": holds, "witness": list(witness) if witness else None},
        )


def cmd_cluster(args, run: _Run):
    caps = _caps()
    for seed in _seed_list(args):
        f = _make_formula(args, seed)
        A = landscape.enumerate_sat(f, args.r, workers=args.workers, cap=caps["enum_cap"])
        P = landscape.cluster(A, args.nu1, args.nu2, cap=caps["pair_cap"])
        name = f"clusters_{seed}.csv"
        with open(run.path(name), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["# nltslab clusters v1", f"n={A.n}"])
            w.writerow(["packed", "cluster"])
            for ell, members in enumerate(P.clusters):
                for z in members:
                    w.writerow([int(z), ell])
        run.register(name)
        run.write_json(f"cluster_summary_{seed}.json",
                       {"seed": seed, **landscape.cluster_stats(P)})


def cmd_hamiltonian(args, run: _Run):
    caps = _caps()
    for seed in _seed_list(args):
        f = _make_formula(args, seed)
        layout = hamiltonian.build_layout(f, cap=caps["qubit_cap"])
        psi = hamiltonian.ground_state(layout, args.gamma)
        dist = hamiltonian.measurement_distribution(psi)
        name = f"measurement_{seed}.csv"
        with open(run.path(name), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["# nltslab measurement v1", f"qubits={layout.num_qubits}"])
            w.writerow(["bits", "probability"])
            for bits in sorted(dist):
                w.writerow([bits, repr(dist[bits])])
        run.register(name)
        if args.dump_state:
            sname = f"state_{seed}.bin"
            hamiltonian.save_state(psi, run.path(sname), gamma=args.gamma)
            run.register(sname)
            run.register(sname + ".json")
        run.write_json(
            f"hamiltonian_{seed}.json",
            {"seed": seed, "qubits": layout.num_qubits, "gamma": args.gamma,
             "energy": hamiltonian.energy(psi, args.gamma),
             "support": len(dist)},
        )


def cmd_pspin(args, run: _Run):
    caps = _caps()
    for seed in _seed_list(args):
        g = pspin.generate_regular_hypergraph(args.n, args.d, args.p, seed)
        J = pspin.generate_couplings(g, stream_seed(seed, 1))
        gname = f"hypergraph_{seed}.json"
        pspin.save_hypergraph(g, run.path(gname))
        run.register(gname)
        sigma, emin = pspin.ground_state_bruteforce(g, J)
        record = {
            "seed": seed, "n": g.n, "d": g.d, "p": g.p, "m": g.m,
            "couplings": list(J.values),
            "ground_energy": emin,
            "ground_energy_per_spin": emin / g.n,
            "ground_state": [int(s) for s in sigma],
        }
        if args.slack is not None:
            A = pspin.near_ground_set(g, J, args.slack)
            name = f"near_ground_{seed}.csv"
            landscape.members_to_csv(A, run.path(name))
            run.register(name)
            record["near_ground_count"] = len(A)
        if args.quantize:
            layout = pspin.quantize(g, J, cap=caps["qubit_cap"])
            psi = hamiltonian.ground_state(layout, args.gamma)
            record["quantized_qubits"] = layout.num_qubits
            record["quantized_energy"] = hamiltonian.energy(psi, args.gamma)
        run.write_json(f"pspin_{seed}.json", record)


def cmd_theory_scan(args, run: _Run):
    K_values = [int(k) for k in args.K_list.split(",")]
    rows = []
    for K in K_values:
        window = theory.first_feasible_window(args.alpha, K, args.nu_step, args.s_step, theory.LN2 / 20.0)
        if window is None:
            rows.append({"K": K, "window_found": False})
            continue
        nu1, nu2 = window
        for delta in (1e-4, 1e-3, 5e-3):
            for gamma in (1e-2, 1e-4, 1e-6):
                for lam in (0.05, 0.1, 0.2):
                    for eta in (1e-4, 1e-6, 1e-8):
                        eps = theory.derive_eps(eta, K)
                        params = theory.RegimeParams(
                            alpha=args.alpha, K=K, eps=eps if eps is not None else float("nan"),
                            lam=lam, gamma=gamma, eta=eta, nu1=nu1, nu2=nu2, delta=delta,
                        )
                        report = theory.check_parameter_consistency(params)
                        rows.append({
                            "K": K, "window_found": True, "nu1": nu1, "nu2": nu2,
                            "delta": delta, "gamma": gamma, "lambda": lam, "eta": eta,
                            "eps": eps, "c1": report.c1, "c2": report.c2,
                            "c1_bits": report.c1 / theory.LN2, "c2_bits": report.c2 / theory.LN2,
                            "delta_ok": report.delta_ok,
                            "gamma_lambda_ok": report.gamma_lambda_ok,
                            "amplification_ok": report.amplification_ok,
                            "tail_ok": report.tail_ok,
                            "locality_ok": report.locality_ok,
                            "azuma_ok": eps is not None,
                            "feasible": report.all_ok and eps is not None,
                        })
    fields = ["K", "window_found", "nu1", "nu2", "delta", "gamma", "lambda", "eta", "eps",
              "c1", "c2", "c1_bits", "c2_bits", "delta_ok", "gamma_lambda_ok",
              "amplification_ok", "tail_ok", "locality_ok", "azuma_ok", "feasible"]
    with open(run.path("scan.csv"), "w", newline="") as fh:
        fh.write("# nltslab theory-scan v1\n")
        w = csv.DictWriter(fh, fieldnames=fields)
        w.writeheader()
        for row in rows:
            w.writerow(row)
    run.register("scan.csv")
    feasible = [r for r in rows if r.get("feasible")]
    run.write_json(
        "scan_summary.json",
        {
            "alpha": args.alpha,
            "K_values": K_values,
            "feasible_count": len(feasible),
            "feasible_K": sorted({r["K"] for r in feasible}),
            "windows": {str(r["K"]): [r["nu1"], r["nu2"]] for r in rows if r.get("window_found")},
        },
    )


def cmd_depth_bound(args, run: _Run):
    base = theory.depth_lower_bound(args.d, args.n_bits, args.mu, outer_base2=not args.natural_log)
    rows = []
    for scale in (0.25, 0.5, 1.0, 2.0, 4.0):
        dd = args.d * scale
        val = theory.depth_lower_bound(dd, args.n_bits, args.mu, outer_base2=not args.natural_log)
        rows.append({"d": dd, "n_bits": args.n_bits, "mu": args.mu, "depth_bound": val,
                     "vacuous": val <= 0.0})
    with open(run.path("depth_bound.csv"), "w", newline="") as fh:
        fh.write("# nltslab depth-bound v1\n")
        w = csv.DictWriter(fh, fieldnames=["d", "n_bits", "mu", "depth_bound", "vacuous"])
        w.writeheader()
        for row in rows:
            w.writerow(row)
    run.register("depth_bound.csv")
    run.write_json("depth_bound.json",
                   {"d": args.d, "n_bits": args.n_bits, "mu": args.mu,
                    "outer_base2": not args.natural_log, "depth_bound": base})


# ---------------------------------------------------------------------------
# Argument handling
# ---------------------------------------------------------------------------

def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="INI config file; flags override its values")
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--master-seed", type=int, default=1, help="64-bit master seed")
    p.add_argument("--seeds", help="comma-separated explicit seed list (overrides master seed)")
    p.add_argument("--instances", type=int, default=1, help="instances derived from the master seed")
    p.add_argument("--workers", type=int, default=1)


def _add_formula_args(p: argparse.ArgumentParser):
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--K", type=int, required=True)
    p.add_argument("--m", type=int)
    p.add_argument("--alpha", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nltslab")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("gen", help="generate random formulas (DIMACS + sidecar)")
    _add_common(p)
    _add_formula_args(p)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("enumerate", help="exhaustively enumerate near-satisfying assignments")
    _add_common(p)
    _add_formula_args(p)
    p.add_argument("--r", type=int, default=0)
    p.add_argument("--eps", type=float)
    p.set_defaults(func=cmd_enumerate)

    p = sub.add_parser("ogp", help="overlap histogram and gap detection")
    _add_common(p)
    _add_formula_args(p)
    p.add_argument("--r", type=int, default=0)
    p.add_argument("--nu1", type=float, required=True)
    p.add_argument("--nu2", type=float, required=True)
    p.set_defaults(func=cmd_ogp)

    p = sub.add_parser("cluster", help="unique (nu1, nu2)-clustering with certificates")
    _add_common(p)
    _add_formula_args(p)
    p.add_argument("--r", type=int, default=0)
    p.add_argument("--nu1", type=float, required=True)
    p.add_argument("--nu2", type=float, required=True)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("hamiltonian", help="ground state and measurement distribution")
    _add_common(p)
    _add_formula_args(p)
    p.add_argument("--gamma", type=float, default=0.5)
    p.add_argument("--dump-state", action="store_true")
    p.set_defaults(func=cmd_hamiltonian)

    p = sub.add_parser("pspin", help="p-spin model on a random regular hypergraph")
    _add_common(p)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--p", type=int, required=True)
    p.add_argument("--slack", type=int)
    p.add_argument("--quantize", action="store_true")
    p.add_argument("--gamma", type=float, default=0.5)
    p.set_defaults(func=cmd_pspin)

    p = sub.add_parser("theory-scan", help="parameter feasibility scan")
    _add_common(p)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--K-list", default="4,8,16,32,64")
    p.add_argument("--nu-step", type=float, default=0.005)
    p.add_argument("--s-step", type=float, default=0.005)
    p.set_defaults(func=cmd_theory_scan)

    p = sub.add_parser("depth-bound", help="circuit depth lower bound")
    _add_common(p)
    p.add_argument("--d", type=float, required=True, help="separation distance in bits")
    p.add_argument("--n-bits", type=int, required=True)
    p.add_argument("--mu", type=float, required=True)
    p.add_argument("--natural-log", action="store_true", help="use a natural outer log")
    p.set_defaults(func=cmd_depth_bound)

    return parser


def _apply_config(args: argparse.Namespace, argv: list[str]) -> None:
    """Fill values from the INI file for flags the user did not pass."""
    if not args.config:
        return
    cp = configparser.ConfigParser()
    if not cp.read(args.config):
        raise ParameterError(f"config file not found: {args.config}")
    if not cp.has_section(args.subcommand):
        return
    passed = {tok.split("=")[0].lstrip("-").replace("-", "_") for tok in argv if tok.startswith("--")}
    for key, raw in cp.items(args.subcommand):
        attr = key.replace("-", "_")
        if attr in passed or not hasattr(args, attr):
            continue
        current = getattr(args, attr)
        if isinstance(current, bool):
            setattr(args, attr, cp.getboolean(args.subcommand, key))
        elif isinstance(current, int):
            setattr(args, attr, int(raw))
        elif isinstance(current, float):
            setattr(args, attr, float(raw))
        else:
            # default None: infer the narrowest numeric type that parses
            for cast in (int, float, str):
                try:
                    setattr(args, attr, cast(raw))
                    break
                except ValueError:
                    continue


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        _apply_config(args, argv)
        config_echo = {k: v for k, v in vars(args).items() if k not in ("func",)}
        run = _Run(Path(args.out), args.subcommand, config_echo)
        args.func(args, run)
        run.finish()
        return EXIT_OK
    except ParameterError as exc:
        _emit_error("validation", exc)
        return EXIT_VALIDATION
    except ResourceLimitError as exc:
        _emit_error("resource", exc, budget=exc.budget_name)
        return EXIT_RESOURCE
    except (ContractError, AssertionError) as exc:
        _emit_error("assertion", exc)
        return EXIT_ASSERTION


def _emit_error(kind: str, exc: Exception, **extra) -> None:
    record = {"error": kind, "message": str(exc), **extra}
    print(json.dumps(record), file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
