"""
Command-line experiment runner.

Usage::

    rabichaos <subcommand> --config run.json [--output-dir DIR] [--cache-dir DIR]
              [--threads N] [--seed N]

Every flag can also be set through an environment variable with the
``RABICHAOS_`` prefix (``RABICHAOS_OUTPUT_DIR``, ``RABICHAOS_CACHE_DIR``, ...);
flags win over the environment.  Exit codes: 0 success, 1 failed oracle
check, 2 configuration error, 3 convergence failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import platform
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import scipy

from . import __version__
from .cache import SpectrumCache
from .config import SUBCOMMANDS, ConfigError, ExperimentConfig, load_config
from .dynamics import (
    FALLBACK_WINDOW_RULE,
    T_STAR_RULE,
    WINDOW_RULE,
    CutoffCapExceeded,
    adaptive_cutoff,
    echo_divergence_series,
    fotoc_variance_series,
    run_fotoc,
    scaling_fits,
)
from .models import ModelParams, build_hamiltonian, layout_for, params_from_gc_eta
from .spectral import eig_tridiag, small_spacing_fraction, spacing_histogram, unfold
from .symmetry import qjt_sector_labels, qjt_u1_block, qr_parity_block

log = logging.getLogger("rabichaos")

EXIT_OK, EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_CONVERGENCE = 0, 1, 2, 3
ENV_PREFIX = "RABICHAOS_"


def write_csv(path: Path, header: Sequence[str], rows) -> None:
    """RFC-4180 CSV; floats in scientific notation with 17 significant digits."""
    def fmt(x):
        if isinstance(x, (float, np.floating)):
            return "%.16e" % x
        return str(x)

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(x) for x in row])


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


class Run:
    """Output directory, cache and metadata of one invocation."""

    def __init__(self, cfg: ExperimentConfig, out_dir: Path, cache: SpectrumCache | None, threads: int):
        self.cfg = cfg
        self.out = out_dir
        self.cache = cache
        self.threads = threads
        self.meta: dict = {}
        self.files: list[str] = []
        out_dir.mkdir(parents=True, exist_ok=True)

    def csv(self, name: str, header, rows) -> None:
        write_csv(self.out / name, header, rows)
        self.files.append(name)

    def map(self, fn: Callable, items):
        if self.threads > 1 and len(items) > 1:
            with ThreadPoolExecutor(self.threads) as pool:
                return list(pool.map(fn, items))
        return [fn(x) for x in items]


def _cutoffs(params: ModelParams, n_max: int):
    return (int(n_max),) * (2 if params.kind == "QJT" else 1)


def _fit_dict(fit) -> dict | None:
    if fit is None:
        return None
    return {"lambda_q": fit.lambda_q, "t_star": fit.t_star, "fit_window": list(fit.fit_window),
            "r_squared": fit.r_squared, "window_rule": fit.window_rule, "n_points": fit.n_points,
            "peak_value": fit.peak_value}


# subcommands ----------------------------------------------------------------

def cmd_spectrum(run: Run) -> int:
    p, r = run.cfg.model, run.cfg.run
    cut = _cutoffs(p, r["n_max"])
    if p.kind == "PerturbedQR":
        import scipy.linalg as sla
        from .systems import _banded_lower
        w = sla.eig_banded(_banded_lower(build_hamiltonian(p, cut), 3), lower=True, eigvals_only=True)
        spectra = [("full", w)]
    else:
        sectors = r["sector"] if r["sector"] is not None else (
            [-1, 1] if p.kind == "QR" else qjt_sector_labels(*cut))
        sectors = sectors if isinstance(sectors, list) else [sectors]
        blocks = [qr_parity_block(p, cut[0], int(s)) if p.kind == "QR" else qjt_u1_block(p, *cut, float(s))
                  for s in sectors]
        spectra = [(b.sector_label, eig_tridiag(b).eigenvalues) for b in blocks]
    run.csv("spectrum.csv", ["sector", "index", "energy"],
            [(s, i, float(e)) for s, w in spectra for i, e in enumerate(w)])
    run.meta["n_levels"] = int(sum(len(w) for _, w in spectra))
    return EXIT_OK


def cmd_spacing(run: Run) -> int:
    p, r = run.cfg.model, run.cfg.run
    cut = _cutoffs(p, r["n_max"])
    if p.kind == "PerturbedQR":
        import scipy.linalg as sla
        from .systems import _banded_lower
        w = sla.eig_banded(_banded_lower(build_hamiltonian(p, cut), 3), lower=True, eigvals_only=True)
        sector = "full"
    elif p.kind == "QR":
        sector = -1 if r["sector"] is None else int(r["sector"])
        w = eig_tridiag(qr_parity_block(p, cut[0], sector), slices=run.threads, workers=run.threads).eigenvalues
    else:
        sector = 0.5 if r["sector"] is None else float(r["sector"])
        w = eig_tridiag(qjt_u1_block(p, *cut, sector), slices=run.threads, workers=run.threads).eigenvalues
    keep = int(math.floor(r["keep_fraction"] * w.size))
    s = unfold(np.sort(w)[:keep], r["poly_degree"], r["edge_trim_fraction"])
    hist = spacing_histogram(s, r["bin_width"], r["s_max"])
    run.csv("spacings.csv", ["s"], ((float(x),) for x in s))
    run.csv("histogram.csv", ["bin_center", "density", "p_P", "p_WD"],
            zip(hist.bin_centers, hist.densities, hist.p_poisson, hist.p_wigner_dyson))
    run.meta.update({"sector": sector, "block_size": int(w.size), "levels_used": keep,
                     "n_spacings": hist.n_spacings, "n_outside_range": hist.n_outside,
                     "histogram_integral": hist.integral,
                     "small_spacing_fraction": small_spacing_fraction(s, r["s_min"])})
    return EXIT_OK


def _initial(r) -> tuple:
    init = r["initial"]
    return init["spin"], init["occupations"]


def cmd_fotoc(run: Run) -> int:
    p, r = run.cfg.model, run.cfg.run
    spin, occ = _initial(r)
    res = run_fotoc(p, spin, occ, r["horizon"], r["grid_size"], r["n_max"], r["tolerance"],
                    r["refine"], r["n_cap"], run.cache)
    run.csv("fotoc.csv", ["t", "var_G"], zip(res.series.times, res.series.values))
    run.meta.update({"n_max": res.n_max, "fit": _fit_dict(res.fit), "fit_error": res.error,
                     "cutoff_history": res.series.meta.get("cutoff_history")})
    return EXIT_OK


def cmd_echo(run: Run) -> int:
    from .systems import fotoc_operator, initial_state, sigma_x_operator

    p, r = run.cfg.model, run.cfg.run
    spin, occ = _initial(r)
    times = np.linspace(0.0, r["horizon"], r["grid_size"])
    if r["n_max"] is None:
        res = adaptive_cutoff(p, spin, occ, times, r["tolerance"], n_cap=r["n_cap"], cache=run.cache)
        n_max, system, psi0, var = res.n_max, res.system, res.psi0, res.series
    else:
        from .systems import eigensystem
        n_max = r["n_max"]
        cut = _cutoffs(p, n_max)
        system, psi0 = eigensystem(p, cut, cache=run.cache), initial_state(p, cut, spin, occ)
        var = fotoc_variance_series(system, psi0, fotoc_operator(p, cut), times)
    cut = _cutoffs(p, n_max)
    V = sigma_x_operator(layout_for(p, cut)) if r["observable"] == "sigma_x" else None
    div = echo_divergence_series(system, psi0, fotoc_operator(p, cut), V, r["delta_phi"], times)
    run.csv("echo.csv", ["t", "var_G", "echo_route", "commutator_route"],
            zip(times, var.values, div.echo.values, div.commutator.values))
    run.meta.update({"n_max": n_max, "delta_phi": r["delta_phi"], "observable": r["observable"],
                     "fraction_bounded_by_fotoc": float(np.mean(div.echo.values <= var.values))})
    return EXIT_OK


def cmd_lyapunov_scan(run: Run) -> int:
    p, r = run.cfg.model, run.cfg.run
    spin, occ = _initial(r)
    g_c = float(run.cfg.model_block["g_c"])
    etas = [float(e) for e in r["etas"]]

    def one(eta):
        q = params_from_gc_eta(p.kind, g_c, eta, p.g, p.lambda_perturb)
        return run_fotoc(q, spin, occ, r["horizon"], r["grid_size"], r["n_max"], r["tolerance"],
                         r["refine"], r["n_cap"], run.cache)

    results = run.map(one, etas)
    rows, per_eta, good = [], [], []
    for eta, res in zip(etas, results):
        f = res.fit
        nan = float("nan")
        rows.append((eta, f.lambda_q if f else nan, f.t_star if f else nan,
                     f.product if f else nan, f.r_squared if f else nan))
        per_eta.append({"eta": eta, "n_max": res.n_max, "fit": _fit_dict(f), "fit_error": res.error})
        if f:
            good.append((eta, f))
    run.csv("scan.csv", ["eta", "lambda_q", "t_star", "product", "r2"], rows)
    run.meta["per_eta"] = per_eta
    if len(good) >= 4:
        sf = scaling_fits([e for e, _ in good], [f for _, f in good])
        run.meta["scaling_fits"] = sf.__dict__
    return EXIT_OK


def cmd_equilibrate(run: Run) -> int:
    from .equilibration import (de_average, de_cutoff, de_populations, de_weights,
                                effective_dimension, energy_of, me_average,
                                time_average_family, time_averaged_populations)
    from .systems import boson_number, eigensystem, initial_state, spin_up_population

    p, r = run.cfg.model, run.cfg.run
    spin, occ = _initial(r)
    if r["n_max"] is None:
        n_max, system, ens = de_cutoff(p, spin, occ, n_cap=r["n_cap"])
    else:
        n_max = r["n_max"]
        system = eigensystem(p, _cutoffs(p, n_max), cache=run.cache)
        ens = de_weights(system, initial_state(p, _cutoffs(p, n_max), spin, occ))
    cut = _cutoffs(p, n_max)
    layout = layout_for(p, cut)
    psi0 = initial_state(p, cut, spin, occ)
    e0 = energy_of(build_hamiltonian(p, cut), psi0)
    observables = {"P_up": spin_up_population(layout), "n_boson": boson_number(layout)}
    tavg = time_average_family(system, psi0, list(observables.values()), r["t_start"], r["window"])
    rows, me_meta = [], {}
    for (name, O), ta in zip(observables.items(), tavg):
        me = me_average(system, O, e0, r["delta_E"], r["min_states"])
        rows.append((name, de_average(ens, O), float(ta), me.value))
        me_meta[name] = {"delta_E": me.delta_e, "n_states": me.n_states, "robust": me.robust}
    run.csv("averages.csv", ["observable", "de_average", "time_average", "me_average"], rows)
    occ0 = layout.occupation(0)
    de_p = de_populations(ens, occ0)
    ta_p = time_averaged_populations(system, psi0, occ0, r["t_start"], r["window"])
    run.csv("populations.csv", ["n", "de_population", "time_average_population"],
            ((n, float(a), float(b)) for n, (a, b) in enumerate(zip(de_p, ta_p))))
    run.meta.update({"n_max": n_max, "E0": e0, "d_eff": effective_dimension(ens),
                     "window": {"t_start": r["t_start"], "width": r["window"]},
                     "microcanonical": me_meta, "population_sum": float(de_p.sum())})
    return EXIT_OK


def cmd_deff_scan(run: Run) -> int:
    from .equilibration import de_cutoff, deff_scan

    p, r = run.cfg.model, run.cfg.run
    n_max = r["n_max"]
    if n_max is None:
        # one cutoff for the whole family, sized for its most demanding member
        if r["vary"] == "n":
            n_max = de_cutoff(p, r["spin"], max(r["values"]), n_cap=r["n_cap"])[0]
        else:
            n_max = max(de_cutoff(p.with_coupling(g), r["spin"], r["occupation"], n_cap=r["n_cap"])[0]
                        for g in r["values"])
    table = deff_scan(p, _cutoffs(p, n_max), r["values"], r["vary"], r["spin"], r["occupation"])
    run.csv("deff.csv", ["x", "d_eff"], zip(table.x, table.d_eff))
    run.meta.update({"n_max": n_max, "vary": r["vary"]})
    return EXIT_OK


def oracle_checks() -> list[tuple[str, float, float, bool]]:
    """Structural and analytic self-checks: (name, value, tolerance, passed)."""
    from .meanfield import qjt_order_parameters, qjt_superradiant_modes, qjt_normal_excitation
    from .models import build_qr
    from .symmetry import block_consistency_report, qjt_u1_blocks, qr_parity_blocks
    from .systems import eigensystem, fotoc_operator, initial_state

    out = []
    w, d, g = 1.0, 10.0, 2.0
    p = ModelParams("QR", w, d, g)
    b = qr_parity_block(p, 5, -1)
    k = np.arange(6)
    ref_d = k * w + np.where(k % 2 == 0, d / 2, -d / 2)
    dev = max(np.max(np.abs(b.diag - ref_d)), np.max(np.abs(b.offdiag - g * np.sqrt(k[1:]))))
    out.append(("qr_parity_block_nmax5", float(dev), 1e-14, dev <= 1e-14))

    q = ModelParams("QJT", w, d, g)
    b = qjt_u1_block(q, 3, 4, 1.5)
    ref_d = np.arange(1, 8) * w + np.where(np.arange(7) % 2 == 0, d / 2, -d / 2)
    ref_e = g * np.sqrt([2, 1, 3, 2, 4, 3])
    dev = max(np.max(np.abs(b.diag - ref_d)), np.max(np.abs(b.offdiag - ref_e)))
    out.append(("qjt_u1_block_c1.5", float(dev), 1e-14, dev <= 1e-14))

    rep = block_consistency_report(build_qr(p, 30), qr_parity_blocks(p, 30))
    out.append(("qr_blocks_vs_dense", rep.max_deviation, 1e-10, rep.ok and rep.max_deviation <= 1e-10))
    rep = block_consistency_report(build_hamiltonian(q, (5, 5)), qjt_u1_blocks(q, 5, 5))
    out.append(("qjt_blocks_vs_dense", rep.max_deviation, 1e-10, rep.ok and rep.max_deviation <= 1e-10))

    z = ModelParams("QR", w, d, 0.0)
    sys0 = eigensystem(z, 8)
    v = fotoc_variance_series(sys0, initial_state(z, 8, "down", 5), fotoc_operator(z, 8), np.linspace(0, 5, 11))
    dev = float(np.max(np.abs(v.values - 11 / 4)))
    out.append(("fotoc_g0_fock5", dev, 1e-12, dev <= 1e-12))

    gc = math.sqrt(d * w / 2)
    left = qjt_order_parameters(gc * (1 - 1e-13), w, d)
    right = qjt_order_parameters(gc, w, d)
    dev = max(abs(left[0] - right[0]), abs(left[1] - right[1]),
              abs(qjt_normal_excitation(gc, w, d)), abs(qjt_superradiant_modes(gc, w, d)[1]))
    out.append(("meanfield_continuity", float(dev), 1e-6, dev <= 1e-6))
    return out


def cmd_oracle_check(run: Run) -> int:
    checks = oracle_checks()
    run.csv("oracle.csv", ["check", "value", "tolerance", "passed"],
            ((n, float(v), float(t), str(bool(ok)).lower()) for n, v, t, ok in checks))
    run.meta["all_passed"] = all(c[3] for c in checks)
    return EXIT_OK if run.meta["all_passed"] else EXIT_CHECK_FAILED


COMMANDS = {
    "spectrum": cmd_spectrum, "spacing": cmd_spacing, "fotoc": cmd_fotoc, "echo": cmd_echo,
    "lyapunov-scan": cmd_lyapunov_scan, "equilibrate": cmd_equilibrate,
    "deff-scan": cmd_deff_scan, "oracle-check": cmd_oracle_check,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rabichaos", description=__doc__.split("\n\n")[0].strip())
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", default=os.environ.get(ENV_PREFIX + "CONFIG"))
        sp.add_argument("--output-dir", default=os.environ.get(ENV_PREFIX + "OUTPUT_DIR"))
        sp.add_argument("--cache-dir", default=os.environ.get(ENV_PREFIX + "CACHE_DIR"))
        sp.add_argument("--threads", type=int, default=int(os.environ.get(ENV_PREFIX + "THREADS", "1")))
        sp.add_argument("--seed", type=int, default=int(os.environ.get(ENV_PREFIX + "SEED", "0")),
                        help="reserved; every pipeline is deterministic")
        sp.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.config is None and args.subcommand != "oracle-check":
            raise ConfigError("--config", "required for this subcommand")
        if args.threads < 1:
            raise ConfigError("--threads", "must be >= 1")
        cfg = load_config(args.config, args.subcommand)
    except ConfigError as exc:
        print(f"rabichaos: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    out_dir = Path(args.output_dir or cfg.output["directory"])
    cache = SpectrumCache(args.cache_dir) if args.cache_dir else None
    run = Run(cfg, out_dir, cache, args.threads)
    start = time.perf_counter()
    try:
        status = COMMANDS[args.subcommand](run)
    except CutoffCapExceeded as exc:
        print(f"rabichaos: {exc}", file=sys.stderr)
        status = EXIT_CONVERGENCE
        run.meta["error"] = str(exc)
    except ConfigError as exc:
        print(f"rabichaos: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    meta = {
        "config": cfg.as_dict(),
        "model_params": cfg.model.as_dict() if cfg.model else None,
        "files": run.files,
        "conventions": {"t_star": T_STAR_RULE, "fit_window": WINDOW_RULE,
                        "fit_window_fallback": FALLBACK_WINDOW_RULE, "time_unit": "inverse energy"},
        "versions": {"rabichaos": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                     "python": platform.python_version()},
        "threads": args.threads, "seed": args.seed,
        "cache": None if cache is None else {"dir": str(cache.directory), "hits": cache.hits,
                                             "misses": cache.misses},
        "wall_time_s": time.perf_counter() - start,
        "exit_status": status,
        **run.meta,
    }
    (out_dir / "meta.json").write_text(json.dumps(meta, indent=2, default=_json_default) + "\n")
    return status


if __name__ == "__main__":
    sys.exit(main())
