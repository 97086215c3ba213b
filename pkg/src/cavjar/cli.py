"""``cavjar`` command-line front end.

Each subcommand sweeps a parameter grid and writes one table row per grid
point. A failing grid point becomes a row with a filled ``error`` column, so
a long sweep never aborts halfway.
"""

from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import math
import os
import re
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime, timezone
from typing import Callable, Iterable, Optional

import numpy as np

from . import __version__
from .errors import CavjarError, DegenerateError
from .estimator import MODES, visibility_work_identity_report
from .fock import auto_dim
from .ramsey import (
    InteractionConfig,
    interferometer_scan,
    uniform_phase_grid,
    visibility_characteristic,
    visibility_displaced_closed_form,
)
from .states import DriveProtocol, ThermalParams, delta_F, displaced_thermal_state, FockSpace
from .work import (
    characteristic_function_G,
    monte_carlo_average,
    protocol_space,
    tpm_exponential_average,
    tpm_setup,
)

EXIT_OK, EXIT_USAGE, EXIT_ALL_FAILED = 0, 2, 3
COMMANDS = ("visibility", "jarzynski", "estimate", "fringes")

DEFAULTS = {
    "beta_omega0": "1",
    "alpha": "0",
    "omega_dt": "pi",
    "phi_points": 16,
    "protocol": "quench",
    "dim": None,
    "allow_undersized": False,
    "n_shots": 0,
    "seed": 0,
    "threads": None,
    "format": "csv",
    "out": None,
    "omega0": 1.0,
    "n_osc": 1,
    "mode": "both",
}

_PI_TERM = re.compile(r"^\s*([0-9.eE+-]*)\s*\*?\s*pi\s*(?:/\s*([0-9.eE+]+))?\s*$")


class UsageError(Exception):
    pass


def parse_number(text: str) -> float:
    """Float, or a multiple of pi such as ``pi``, ``pi/2``, ``3pi/4``, ``0.5*pi``."""
    text = text.strip()
    m = _PI_TERM.match(text)
    if m:
        coef = m.group(1)
        c = 1.0 if coef in ("", "+") else -1.0 if coef == "-" else float(coef)
        d = float(m.group(2)) if m.group(2) else 1.0
        return c * math.pi / d
    return float(text)


def parse_list(text, name: str) -> list:
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    items = [s for s in str(text).split(",") if s.strip()]
    if not items:
        raise UsageError(f"--{name.replace('_', '-')} grid is empty")
    try:
        return [parse_number(s) for s in items]
    except ValueError as exc:
        raise UsageError(f"--{name.replace('_', '-')}: {exc}") from None


def parse_protocol(text: str, omega0: float, alpha: float) -> DriveProtocol:
    text = text.strip()
    if text == "quench":
        return DriveProtocol.quench(alpha * omega0)
    m = re.match(r"^ramp:([0-9.eE+-]+)$", text)
    if not m:
        raise UsageError(f"--protocol must be 'quench' or 'ramp:T', got {text!r}")
    return DriveProtocol.linear_ramp(alpha * omega0, float(m.group(1)) / omega0)


def read_config_file(path: str) -> dict:
    """Flat ``key = value`` file; ``#`` starts a comment, dashes and underscores are equivalent."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            key = key.replace("-", "_")
            if key not in DEFAULTS:
                raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
            out[key] = value
    return out


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value config file")
    common.add_argument("--beta-omega0", dest="beta_omega0", help="comma-separated beta*omega0 grid")
    common.add_argument("--alpha", help="comma-separated |alpha| grid")
    common.add_argument("--omega-dt", dest="omega_dt", help="comma-separated omega*dt grid (accepts pi/2 etc.)")
    common.add_argument("--phi-points", dest="phi_points", type=int, help="Ramsey phase points (>= 8)")
    common.add_argument("--protocol", help="comma-separated list of quench | ramp:T (T in units of 1/omega0)")
    common.add_argument("--dim", type=int, help="Fock truncation override")
    common.add_argument("--allow-undersized", dest="allow_undersized", action="store_true", default=None)
    common.add_argument("--n-shots", dest="n_shots", type=int, help="Monte-Carlo shots (0 disables)")
    common.add_argument("--seed", type=int)
    common.add_argument("--threads", type=int)
    common.add_argument("--format", choices=("csv", "json"))
    common.add_argument("--out", help="output path (default: stdout)")
    common.add_argument("--omega0", type=float, help="cavity frequency (default 1)")
    common.add_argument("--n-osc", dest="n_osc", type=int, help="number of independent oscillators N")
    common.add_argument("--mode", choices=MODES + ("both",), help="estimator mode for 'estimate'")

    parser = argparse.ArgumentParser(prog="cavjar", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"cavjar {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def resolve_config(ns: argparse.Namespace) -> dict:
    """Merge defaults < config file < command-line flags and validate."""
    cfg = dict(DEFAULTS)
    if ns.config:
        try:
            cfg.update(read_config_file(ns.config))
        except OSError as exc:
            raise UsageError(f"cannot read config file: {exc}") from None
    for key in DEFAULTS:
        val = getattr(ns, key, None)
        if val is not None:
            cfg[key] = val
    cfg["command"] = ns.command

    for key in ("beta_omega0", "alpha", "omega_dt"):
        cfg[key] = parse_list(cfg[key], key)
    try:
        for key in ("phi_points", "n_shots", "seed", "n_osc"):
            cfg[key] = int(cfg[key])
        for key in ("dim", "threads"):
            cfg[key] = None if cfg[key] in (None, "", "auto") else int(cfg[key])
        cfg["omega0"] = float(cfg["omega0"])
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if isinstance(cfg["allow_undersized"], str):
        cfg["allow_undersized"] = cfg["allow_undersized"].lower() in ("1", "true", "yes")
    cfg["protocol"] = [s.strip() for s in str(cfg["protocol"]).split(",") if s.strip()]
    if not cfg["protocol"]:
        raise UsageError("--protocol list is empty")
    for proto in cfg["protocol"]:
        parse_protocol(proto, 1.0, 1.0)
    if cfg["format"] not in ("csv", "json"):
        raise UsageError(f"unknown format {cfg['format']!r}")
    if cfg["mode"] not in MODES + ("both",):
        raise UsageError(f"unknown mode {cfg['mode']!r}")

    if any(x <= 0 for x in cfg["beta_omega0"]):
        raise UsageError("beta*omega0 values must be positive")
    if any(a < 0 for a in cfg["alpha"]):
        raise UsageError("|alpha| values must be non-negative")
    if cfg["omega0"] <= 0:
        raise UsageError("omega0 must be positive")
    if cfg["phi_points"] < 8:
        raise UsageError("--phi-points must be >= 8")
    if cfg["n_shots"] < 0 or cfg["n_osc"] < 1:
        raise UsageError("--n-shots must be >= 0 and --n-osc >= 1")
    if cfg["threads"] is not None and cfg["threads"] < 1:
        raise UsageError("--threads must be >= 1")
    if cfg["dim"] is not None:
        if cfg["dim"] < 2:
            raise UsageError("--dim must be >= 2")
        if not cfg["allow_undersized"]:
            need = max(auto_dim(x, a) for x in cfg["beta_omega0"] for a in cfg["alpha"])
            if cfg["dim"] < need:
                raise UsageError(f"--dim {cfg['dim']} is below the automatic rule ({need}); pass --allow-undersized")
    return cfg


def _space(cfg, x, alpha):
    return FockSpace(cfg["dim"] if cfg["dim"] is not None else auto_dim(x, alpha))


def rows_visibility(cfg) -> list:
    def point(x, alpha, odt):
        p = ThermalParams.from_beta_omega0(x, cfg["omega0"])
        cf = InteractionConfig.from_phase(odt, phi_points=cfg["phi_points"])
        state = displaced_thermal_state(_space(cfg, x, alpha), p, alpha)
        v = [
            visibility_displaced_closed_form(p, alpha, odt),
            visibility_characteristic(state, cf),
            interferometer_scan(state, cf).visibility,
        ]
        return [dict(
            dim=state.space.dim, v_closed_form=v[0], v_characteristic=v[1], v_fringe_fit=v[2],
            max_pairwise_dev=max(abs(a - b) for a, b in itertools.combinations(v, 2)),
        )]

    keys = ("beta_omega0", "alpha", "omega_dt")
    cols = ("dim", "v_closed_form", "v_characteristic", "v_fringe_fit", "max_pairwise_dev")
    grid = list(itertools.product(cfg["beta_omega0"], cfg["alpha"], cfg["omega_dt"]))
    return _sweep(cfg, grid, keys, cols, point)


def rows_jarzynski(cfg) -> list:
    mc = cfg["n_shots"] > 0
    n_osc = cfg["n_osc"]

    def point(x, alpha, proto):
        p = ThermalParams.from_beta_omega0(x, cfg["omega0"])
        protocol = parse_protocol(proto, cfg["omega0"], alpha)
        space = FockSpace(cfg["dim"]) if cfg["dim"] is not None else protocol_space(p, protocol)
        setup = tpm_setup(p, protocol, space=space)
        lhs = math.exp(-p.beta * delta_F(p, protocol))
        exact = tpm_exponential_average(p, protocol, setup=setup)
        g = characteristic_function_G(p, protocol, 1j * p.beta, setup=setup)
        row = dict(
            N=n_osc, dim=space.dim, lhs=lhs ** n_osc, rhs_exact_sum=exact ** n_osc,
            G_ibeta=g.real ** n_osc, dev_exact=abs(exact ** n_osc - lhs ** n_osc) / lhs ** n_osc,
            dev_G=abs(g ** n_osc - lhs ** n_osc) / lhs ** n_osc,
        )
        if mc:
            est = monte_carlo_average(setup, p.beta, cfg["seed"], cfg["n_shots"])
            # delta method for the N-th power of the single-oscillator mean
            row.update(
                rhs_monte_carlo=est.mean ** n_osc,
                mc_stderr=n_osc * est.mean ** (n_osc - 1) * est.stderr,
                dev_mc_sigmas=abs(est.mean - lhs) / est.stderr if est.stderr > 0 else 0.0,
            )
        return [row]

    keys = ("beta_omega0", "alpha", "protocol")
    cols = ["N", "dim", "lhs", "rhs_exact_sum"]
    if mc:
        cols += ["rhs_monte_carlo", "mc_stderr"]
    cols += ["G_ibeta", "dev_exact", "dev_G"]
    if mc:
        cols += ["dev_mc_sigmas"]
    grid = list(itertools.product(cfg["beta_omega0"], cfg["alpha"], cfg["protocol"]))
    return _sweep(cfg, grid, keys, tuple(cols), point)


def rows_estimate(cfg) -> list:
    modes = MODES if cfg["mode"] == "both" else (cfg["mode"],)

    def point(x, alpha, odt, mode):
        if abs(math.remainder(odt, 2 * math.pi)) < 1e-6:
            raise DegenerateError(
                f"omega*dt = {odt:g} is a multiple of 2 pi, where the thermal visibility is 1; "
                "use omega*dt = pi"
            )
        p = ThermalParams.from_beta_omega0(x, cfg["omega0"])
        protocol = DriveProtocol.quench(alpha * cfg["omega0"])
        space = FockSpace(cfg["dim"]) if cfg["dim"] is not None else protocol_space(p, protocol)
        rep = visibility_work_identity_report(p, protocol, odt, mode=mode, tpm_kwargs={"space": space})
        return [dict(
            visibility_functional=rep.visibility_functional, exp_neg_beta_deltaF=rep.exp_neg_beta_deltaF,
            tpm_average=rep.tpm_average, spread=rep.spread, regime=rep.regime,
        )]

    keys = ("beta_omega0", "alpha", "omega_dt", "mode")
    cols = ("visibility_functional", "exp_neg_beta_deltaF", "tpm_average", "spread", "regime")
    grid = list(itertools.product(cfg["beta_omega0"], cfg["alpha"], cfg["omega_dt"], modes))
    return _sweep(cfg, grid, keys, cols, point)


def rows_fringes(cfg) -> list:
    phases = uniform_phase_grid(cfg["phi_points"])

    def point(x, alpha, odt):
        p = ThermalParams.from_beta_omega0(x, cfg["omega0"])
        cf = InteractionConfig.from_phase(odt, phi_points=cfg["phi_points"])
        rec = interferometer_scan(displaced_thermal_state(_space(cfg, x, alpha), p, alpha), cf)
        return [dict(phi=phi, p_f=pf, v_fit=rec.visibility) for phi, pf in zip(rec.phases, rec.p_f)]

    def failed(x, alpha, odt):
        return [dict(phi=phi) for phi in phases]

    keys = ("beta_omega0", "alpha", "omega_dt")
    cols = ("phi", "p_f", "v_fit")
    grid = list(itertools.product(cfg["beta_omega0"], cfg["alpha"], cfg["omega_dt"]))
    return _sweep(cfg, grid, keys, cols, point, failed)


def _sweep(cfg, grid, keys, cols, point: Callable, failed: Optional[Callable] = None) -> tuple:
    def run(args):
        base = dict(zip(keys, args))
        try:
            rows = point(*args)
            return [dict(base, **r, error="") for r in rows], False
        except (CavjarError, ValueError, np.linalg.LinAlgError) as exc:
            rows = failed(*args) if failed else [{}]
            msg = f"{type(exc).__name__}: {exc}"
            return [dict(base, **r, error=msg) for r in rows], True

    threads = cfg["threads"] or os.cpu_count() or 1
    if threads == 1 or len(grid) == 1:
        results = [run(g) for g in grid]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, grid))  # map keeps grid order
    rows = [r for rs, _ in results for r in rs]
    n_failed = sum(1 for _, bad in results if bad)
    return list(keys) + list(cols) + ["error"], rows, n_failed, len(grid)


def _cell(v):
    if isinstance(v, float):
        return format(v, ".17g")
    if isinstance(v, complex):
        return format(v.real, ".17g")
    return "" if v is None else str(v)


def render_csv(header: list, rows: list) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_cell(r.get(k)) for k in header])
    return buf.getvalue()


def _json_value(v):
    if isinstance(v, float) and not math.isfinite(v):
        return repr(v)
    return v


def render_json(header: list, rows: list, cfg: dict) -> str:
    stamp = os.environ.get("SOURCE_DATE_EPOCH")
    ts = datetime.fromtimestamp(int(stamp) if stamp else time.time(), tz=timezone.utc)
    meta = {
        "config": {k: v for k, v in cfg.items() if k not in ("out",)},
        "artifact_version": __version__,
        "timestamp": ts.isoformat(timespec="seconds"),
        "columns": header,
    }
    body = [{k: _json_value(r.get(k)) for k in header if k in r} for r in rows]
    return json.dumps({"meta": meta, "rows": body}, indent=2) + "\n"


RUNNERS = {
    "visibility": rows_visibility,
    "jarzynski": rows_jarzynski,
    "estimate": rows_estimate,
    "fringes": rows_fringes,
}


def main(argv: Optional[Iterable[str]] = None) -> int:
    parser = build_parser()
    ns = parser.parse_args(None if argv is None else list(argv))
    try:
        cfg = resolve_config(ns)
    except UsageError as exc:
        print(f"cavjar {ns.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    header, rows, n_failed, n_points = RUNNERS[ns.command](cfg)
    text = render_csv(header, rows) if cfg["format"] == "csv" else render_json(header, rows, cfg)
    if cfg["out"]:
        with open(cfg["out"], "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    for r in rows:
        if r.get("error"):
            print(f"cavjar: row error: {r['error']}", file=sys.stderr)
            break
    return EXIT_ALL_FAILED if n_points and n_failed == n_points else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
