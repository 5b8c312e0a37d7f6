"""Command-line driver: ``gcmlab {bifurcation,ifs-orbit,ensemble,verify}``."""

from __future__ import annotations

import argparse
import contextlib
import csv
import logging
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import config as cfgmod
from . import ifs
from .config import ExperimentConfig
from .coupling import Feedback, RegimeKind, classify_regime, h_prime
from .ensemble import (Ensemble, NoiseSpec, empirical_wasserstein, make_rng, run_ensemble, sample_invariant,
                       sign_switches)
from .errors import GcmError
from .site_maps import psi
from .ulam import GridDensity
from .verification import run_check, select

log = logging.getLogger("gcmlab")


def fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return "%.17g" % v
    return str(v)


def _write_rows(out, header, rows):
    w = csv.writer(out, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])


def _feedback(cfg: ExperimentConfig) -> Feedback:
    return Feedback(cfg.feedback.A, cfg.feedback.B)


# ---------------------------------------------------------------------------

def bifurcation_row(A: float, B: float):
    if B == 0.0:
        return (0.0, RegimeKind.STABLE.value, 0.0, 0.0, 0.0)
    F = Feedback(A, B)
    reg = classify_regime(F)
    return (float(B), reg.kind.value, reg.r_star, float(psi(reg.r_star)), float(h_prime(F, 0.0)))


def cmd_bifurcation(cfg: ExperimentConfig, out) -> int:
    b = cfg.bifurcation
    n = int(round((b.B_max - b.B_min) / b.B_step)) + 1
    Bs = [round(b.B_min + k * b.B_step, 12) for k in range(n) if b.B_min + k * b.B_step <= b.B_max + 1e-12]
    with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
        rows = list(pool.map(lambda B: bifurcation_row(cfg.feedback.A, B), Bs))
    _write_rows(out, ["B", "regime", "r_star", "field_star", "h_prime_0"], rows)
    return 0


def initial_measure(init: cfgmod.InitialMeasureConfig, seed: int) -> ifs.AtomicMeasure:
    if init.kind == "delta":
        return ifs.AtomicMeasure.delta(init.y0)
    if init.kind == "mu_r":
        return ifs.mu_r_measure(init.r0, init.n_atoms)
    if init.kind == "symmetric_pair":
        return ifs.AtomicMeasure.symmetric_pair(init.y0, init.w_right)
    rng = np.random.default_rng(seed)
    return ifs.AtomicMeasure.from_atoms(rng.uniform(ifs.Y_LO, ifs.Y_HI, init.k), np.ones(init.k))


def cmd_ifs_orbit(cfg: ExperimentConfig, out) -> int:
    o = cfg.ifs_orbit
    res = ifs.iterate_to_limit(_feedback(cfg), initial_measure(o.initial, cfg.seed), o.max_iter, o.tol,
                               o.eps_merge, o.max_atoms)
    last = len(res.trace)
    rows = [(t.n, t.r, t.field, t.a, t.b, t.wasserstein_step, res.label.value if t.n == last else "")
            for t in res.trace]
    _write_rows(out, ["n", "r_n", "field", "a_n", "b_n", "wasserstein_step", "label"], rows)
    return 0


def cmd_ensemble(cfg: ExperimentConfig, out) -> int:
    c = cfg.ensemble
    F = _feedback(cfg)
    init_rng = make_rng(cfg.seed)
    if c.start == "uniform":
        x0 = init_rng.random(c.N) - 0.5
        mu = ifs.AtomicMeasure.delta(0.0)
    else:
        x0 = sample_invariant(c.start_r, c.N, init_rng)
        mu = ifs.mu_r_measure(c.start_r, 1000)
    e = Ensemble(x0, F, rng_seed=cfg.seed + 1)
    ns = NoiseSpec(c.epsilon) if c.epsilon > 0 else None

    ref = None
    if c.reference == "uniform":
        ref = GridDensity.uniform(1024)
    elif c.reference == "invariant":
        ref = ifs.mu_r_measure(c.reference_r, 10_000)

    header = ["n", "phi"] + (["distance"] if c.reference != "none" else [])
    rows = []
    series_all = []
    done = 0
    while done < c.n_steps:
        k = min(c.record_every, c.n_steps - done)
        if c.reference == "ifs":
            for _ in range(k):
                mu = ifs.apply_self_consistent(F, mu, max_atoms=10_000)
        e, series = run_ensemble(e, k, ns)
        series_all.append(series)
        done += k
        row = [done, float(series[-1])]
        if c.reference == "ifs":
            row.append(empirical_wasserstein(e, mu))
        elif ref is not None:
            row.append(empirical_wasserstein(e, ref))
        rows.append(row)
    _write_rows(out, header, rows)
    full = np.concatenate(series_all)
    out.write(f"# summary: sign_switches={sign_switches(full)}, final_phi={fmt(float(full[-1]))}\n")
    return 0


def cmd_verify(cfg: ExperimentConfig, out) -> int:
    checks = select(cfg.verify.criteria, cfg.verify.skip_slow)
    with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
        results = list(pool.map(lambda c: run_check(c, cfg.seed), checks))
    failed = 0
    for c, r in zip(checks, results):
        out.write(r.line() + "\n")
        out.flush()
        failed += not r.passed
    return 1 if failed else 0


COMMANDS = {
    "bifurcation": cmd_bifurcation,
    "ifs-orbit": cmd_ifs_orbit,
    "ensemble": cmd_ensemble,
    "verify": cmd_verify,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gcmlab", description="Mean-field coupled interval map experiments.")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", metavar="PATH", help="YAML experiment configuration")
    p.add_argument("--out", metavar="PATH", help="output file (default: stdout)")
    p.add_argument("--seed", type=int, metavar="U64", help="override the configured seed")
    p.add_argument("--threads", type=int, metavar="COUNT", help="worker threads for independent parameter points")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config entry, e.g. feedback.B=7.5 (repeatable)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = cfgmod.load(args.config)
        for item in args.set:
            cfg = cfgmod.apply_override(cfg, item)
        if args.seed is not None:
            cfg = cfgmod.apply_override(cfg, f"seed={args.seed}")
        if args.threads is not None:
            cfg = cfgmod.apply_override(cfg, f"threads={args.threads}")
        with contextlib.ExitStack() as stack:
            out = stack.enter_context(open(args.out, "w", newline="")) if args.out else sys.stdout
            return COMMANDS[args.command](cfg, out)
    except (GcmError, OSError) as exc:
        print(f"gcmlab: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
