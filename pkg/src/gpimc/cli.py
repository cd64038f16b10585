"""Command-line front end: configuration, orchestration, CSV emission."""

from __future__ import annotations

import argparse
import os
import sys
import tempfile

import numpy as np

from . import __version__
from .bell import BellConfig, bell_sweep_parallel
from .config import EXPERIMENTS, ConfigError, RunConfig, parse_config
from .contour import bath_green_single_mode, build_contour
from .factorization import factorize_svd, factorize_takagi
from .opensys import OpenSystemConfig, run_opensystem
from .parallel import default_workers
from .pdc import pdc_contour_covariance, pdc_doubled_covariance
from .sampling import RngStream, sample_doubled, sample_gamma, sample_quasitrajectory
from .stats import mc_mean
from .wick import wick_moment

BELL_COLUMNS = ["kappa_t", "s_ch_mean", "s_ch_std", "s_ch_oracle", "s_ch_degenerate"]
for _k in ("i_a", "i_b", "i_ab_tt", "i_ab_tp", "i_ab_pt", "i_ab_pp"):
    BELL_COLUMNS += [f"{_k}_mean", f"{_k}_std", f"{_k}_oracle"]
BELL_COLUMNS += ["n_samples", "seed"]

OPENSYS_COLUMNS = ["t", "re_b_mean", "re_b_std", "im_b_mean", "im_b_std", "overlap_logvar"]


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return "%.17g" % float(value)


def write_csv(path: str, columns: list, rows: list, metadata: list) -> None:
    """Write atomically: temp file in the target directory, then rename."""
    directory = os.path.dirname(os.path.abspath(path)) or "."
    lines = [f"# {m}" for m in metadata]
    lines.append(",".join(columns))
    for row in rows:
        lines.append(",".join(_fmt(row[c]) for c in columns))
    body = "\n".join(lines) + "\n"
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".gpimc-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as handle:
            handle.write(body)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _metadata(cfg: RunConfig, extra: dict | None = None) -> list:
    meta = [f"gpimc {__version__}",
            f"experiment = {cfg.experiment}",
            f"seed = {cfg.seed}",
            f"samples = {cfg.samples}"]
    for key in sorted(cfg.params):
        meta.append(f"{key} = {cfg.params[key]}")
    for key, val in (extra or {}).items():
        meta.append(f"{key} = {val}")
    return meta


def run_bell(cfg: RunConfig, n_workers: int) -> tuple:
    p = cfg.params
    bell_cfg = BellConfig(
        kappa=float(p.get("bell.kappa", 1.0)),
        times=tuple(float(x) for x in p.get("bell.kappa_t", [0.1, 0.25, 0.5, 1.0])),
        theta=float(p.get("bell.theta", 0.0)),
        theta_prime=float(p.get("bell.theta_prime", 45.0)),
        phi=float(p.get("bell.phi", 22.5)),
        phi_prime=float(p.get("bell.phi_prime", 67.5)),
        n_samples=cfg.samples,
        master_seed=cfg.seed,
    )
    rows = bell_sweep_parallel(bell_cfg, n_workers=n_workers)
    return BELL_COLUMNS, rows, {}


def run_opensys_experiment(cfg: RunConfig, n_workers: int) -> tuple:
    p = cfg.params
    os_cfg = OpenSystemConfig(
        epsilon=float(p.get("opensys.epsilon", 1.0)),
        omega=float(p.get("opensys.omega", 1.0)),
        coupling=float(p.get("opensys.coupling", 2.0)),
        t_final=float(p.get("opensys.t_final", 10.0)),
        steps=int(p.get("opensys.steps", 10_000)),
        n_samples=cfg.samples,
        master_seed=cfg.seed,
        shift_enabled=bool(p.get("opensys.shift", True)),
        mode=str(p.get("opensys.mode", "coherent")),
        n_max=int(p.get("opensys.nmax", 20)),
        method=str(p.get("opensys.method", "euler")),
        b0=complex(float(p.get("opensys.b0_re", 1.0)), float(p.get("opensys.b0_im", 0.0))),
    )
    result = run_opensystem(os_cfg, n_workers=n_workers)
    return OPENSYS_COLUMNS, result.rows, {"divergent_trajectories": result.divergent_total}


def run_greens(cfg: RunConfig, n_workers: int) -> tuple:
    p = cfg.params
    which = str(p.get("greens.which", "bath"))
    if which == "bath":
        grid = build_contour(float(p.get("greens.t_final", 1.0)),
                             int(p.get("greens.steps", 10)))
        matrix = bath_green_single_mode(grid, float(p.get("greens.omega", 1.0)))
    elif which == "pdc":
        kappa = float(p.get("greens.kappa", 1.0))
        kt = float(p.get("greens.kappa_t", 0.5))
        matrix = pdc_doubled_covariance(kappa, kt / kappa if kappa else 0.0).entries
    elif which == "pdc-contour":
        kappa = float(p.get("greens.kappa", 1.0))
        kt = float(p.get("greens.kappa_t", 0.5))
        matrix = pdc_contour_covariance(kappa, kt / kappa if kappa else 0.0)
    else:
        raise ConfigError([("greens.which", "must be bath, pdc, or pdc-contour")])
    rows = []
    n = matrix.shape[0]
    for i in range(n):
        for j in range(n):
            rows.append({"row": i, "col": j,
                         "re": matrix[i, j].real, "im": matrix[i, j].imag})
    return ["row", "col", "re", "im"], rows, {"which": which, "dimension": n}


def run_selftest(cfg: RunConfig) -> int:
    """Quick factorization / covariance / Wick-oracle self-checks."""
    failures = 0

    def check(name: str, ok: bool, detail: str = "") -> None:
        nonlocal failures
        print(f"[{'PASS' if ok else 'FAIL'}] {name}" + (f"  ({detail})" if detail else ""))
        failures += 0 if ok else 1

    grid = build_contour(1.0, 20)
    G = bath_green_single_mode(grid, 1.0)
    f = factorize_svd(G)
    check("bath Green SVD residual", f.residual(G) <= 1e-10, f"{f.residual(G):.2e}")

    C = pdc_doubled_covariance(1.0, 0.5)
    tak = factorize_takagi(C.entries)
    check("PDC Takagi residual", tak.residual(C.entries) <= 1e-10,
          f"{tak.residual(C.entries):.2e}")

    rng = RngStream(cfg.seed, 0).generator()
    g = sample_gamma(4, rng, size=200_000)
    m2 = np.mean(np.abs(g) ** 2)
    check("complex normal E|g|^2 = 1", abs(m2 - 1.0) < 5e-3, f"{m2:.5f}")
    anom = np.abs(np.mean(g ** 2, axis=0)).max()
    check("complex normal E[g^2] = 0", anom < 5e-3, f"{anom:.2e}")

    qt = sample_quasitrajectory(f, RngStream(cfg.seed, 1).generator(), size=50_000)
    emp = qt.alpha_sharp.T @ qt.alpha / qt.alpha.shape[0]
    err = np.abs(emp - G).max()
    check("sampler covariance -> G", err < 0.15, f"max err {err:.3f}")

    dt = sample_doubled(tak, RngStream(cfg.seed, 2).generator(), size=50_000)
    phi = np.concatenate([dt.alpha, dt.alpha_sharp], axis=1)
    empC = phi.T @ phi / phi.shape[0]
    errC = np.abs(empC - C.entries).max()
    check("doubled sampler covariance -> C", errC < 0.2, f"max err {errC:.3f}")

    mono = (0, 4, 2, 6)    # alpha_a1 alpha#_a1 alpha_b1 alpha#_b1
    exact = wick_moment(C.entries, mono)
    vals = dt.alpha[:, 0] * dt.alpha_sharp[:, 0] * dt.alpha[:, 2] * dt.alpha_sharp[:, 2]
    est = mc_mean(vals)
    dev = abs(est.mean - exact) / max(est.std_of_mean, 1e-15)
    check("Wick oracle vs MC quartic", dev < 5.0, f"{dev:.2f} std")
    return 1 if failures else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gpimc",
                                     description="Gaussian quasitrajectory Monte Carlo")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=str, default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--samples", type=int, default=None)
        p.add_argument("--workers", type=int, default=None)
        p.add_argument("--out", type=str, default=None)
        if name == "bell":
            p.add_argument("--kappa-t", type=float, action="append", default=None)
            p.add_argument("--kappa", type=float, default=None)
        if name == "opensys":
            p.add_argument("--epsilon", type=float, default=None)
            p.add_argument("--omega", type=float, default=None)
            p.add_argument("--coupling", type=float, default=None)
            p.add_argument("--t-final", type=float, default=None)
            p.add_argument("--steps", type=int, default=None)
            p.add_argument("--no-shift", action="store_true")
            p.add_argument("--mode", choices=["coherent", "fock"], default=None)
            p.add_argument("--nmax", type=int, default=None)
            p.add_argument("--method", choices=["euler", "midpoint"], default=None)
        if name == "greens":
            p.add_argument("--which", choices=["bath", "pdc", "pdc-contour"], default=None)
            p.add_argument("--omega", type=float, default=None)
            p.add_argument("--t-final", type=float, default=None)
            p.add_argument("--steps", type=int, default=None)
            p.add_argument("--kappa-t", type=float, default=None)
    return parser


def _load_config(args, command: str) -> RunConfig:
    if args.config:
        with open(args.config, "r", encoding="utf-8") as handle:
            cfg = parse_config(handle.read())
        if cfg.experiment != command:
            raise ConfigError([("experiment",
                                f"config is for {cfg.experiment!r}, invoked as {command!r}")])
    else:
        cfg = RunConfig(experiment=command)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.samples is not None:
        cfg.samples = args.samples
    if args.workers is not None:
        cfg.workers = args.workers
    if args.out is not None:
        cfg.out = args.out
    overrides = {
        "kappa_t": ("bell.kappa_t" if command == "bell" else "greens.kappa_t"),
        "kappa": "bell.kappa",
        "epsilon": "opensys.epsilon", "omega": (
            "opensys.omega" if command == "opensys" else "greens.omega"),
        "coupling": "opensys.coupling",
        "t_final": (f"{command}.t_final"), "steps": (f"{command}.steps"),
        "mode": "opensys.mode", "nmax": "opensys.nmax", "method": "opensys.method",
        "which": "greens.which",
    }
    for attr, key in overrides.items():
        val = getattr(args, attr, None)
        if val is not None:
            cfg.params[key] = val
    if getattr(args, "no_shift", False):
        cfg.params["opensys.shift"] = False
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _load_config(args, args.command)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return 2
    if cfg.experiment == "selftest":
        return run_selftest(cfg)
    n_workers = cfg.workers if cfg.workers >= 1 else default_workers()
    try:
        if cfg.experiment == "bell":
            columns, rows, extra = run_bell(cfg, n_workers)
        elif cfg.experiment == "opensys":
            columns, rows, extra = run_opensys_experiment(cfg, n_workers)
        else:
            columns, rows, extra = run_greens(cfg, n_workers)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    out = cfg.out or f"{cfg.experiment}.csv"
    try:
        write_csv(out, columns, rows, _metadata(cfg, extra))
    except OSError as exc:
        print(f"cannot write output: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {out} ({len(rows)} rows)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
