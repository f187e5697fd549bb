"""Command-line entry point: solve, verify, blowup, scan and keylem.

Exit status is 0 when every check passes, 1 when any fails and 2 for a bad
configuration. Identical flags and seed give byte-identical output.
"""

from __future__ import annotations

import argparse
import io
import json
import math
import sys
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from . import analysis as A
from .kernel import make_params
from .solver import BUILTINS, PoissonSolver, constant

COMMANDS = ("solve", "verify", "blowup", "scan", "keylem")
TOL_PREFIX = "--tol."


class ConfigError(ValueError):
    """Invalid command-line or config-file settings (exit status 2)."""


@dataclass
class RunConfig:
    command: str
    n: int | None = None
    theta: float | None = None
    base_size: int = 256
    seed: int = 0
    jobs: int = 1
    tolerances: dict = field(default_factory=dict)
    out: str | None = None
    format: str = "csv"
    boundary: str = "constant"
    nodes: str | None = None
    points: str | None = None
    p: float = 1.0
    q: float = 0.0

    def validate(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        if self.format not in ("csv", "report"):
            raise ConfigError(f"unknown format {self.format!r}")
        if self.n is not None and (int(self.n) != self.n or self.n < 2):
            raise ConfigError(f"n must be an integer >= 2, got {self.n}")
        if self.theta is not None and not self.theta > -0.5:
            raise ConfigError(f"theta must be > -1/2, got {self.theta}")
        if self.base_size < 2 or self.jobs < 1:
            raise ConfigError("base size must be >= 2 and jobs >= 1")
        unknown = set(self.tolerances) - set(A.DEFAULT_TOLERANCES)
        if unknown:
            raise ConfigError(f"unknown tolerance name(s): {', '.join(sorted(unknown))}")
        if self.boundary not in BUILTINS:
            raise ConfigError(f"unknown boundary {self.boundary!r}; choose from {sorted(BUILTINS)}")
        return self


# formatting


def fmt(x) -> str:
    """17 significant digits, so values round-trip exactly."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def _json_safe(obj):
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, (float, np.floating)):
        return None if not math.isfinite(obj) else float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dump_record(rec) -> str:
    return json.dumps(_json_safe(rec), sort_keys=True, ensure_ascii=False)


def header(cfg: RunConfig, **extra) -> dict:
    rec = {
        "kind": "header",
        "tool": "invlap",
        "version": __version__,
        "command": cfg.command,
        "n": cfg.n,
        "theta": cfg.theta,
        "seed": cfg.seed,
        "rules": {
            "zonal": f"gauss-jacobi base_size={cfg.base_size} (graded gauss-legendre beyond "
                     f"{A.quad.DEFAULT_SIZE_CAP} nodes)",
            "sphere": "graded polar gauss-legendre x product rule on S^(n-2)",
        },
    }
    rec.update(extra)
    return rec


def write_output(cfg: RunConfig, head: dict, columns, rows, records):
    """Render a CSV table (with '#' header lines) or JSON lines, to --out or stdout."""
    buf = io.StringIO()
    if cfg.format == "report":
        buf.write(dump_record(head) + "\n")
        for rec in records:
            buf.write(dump_record(rec) + "\n")
    else:
        for key in ("tool", "version", "command", "n", "theta", "seed"):
            buf.write(f"# {key}={fmt(head[key])}\n")
        for key, val in head["rules"].items():
            buf.write(f"# rule.{key}={val}\n")
        for key, val in head.items():
            if key not in ("kind", "tool", "version", "command", "n", "theta", "seed", "rules"):
                buf.write(f"# {key}={json.dumps(_json_safe(val), sort_keys=True)}\n")
        buf.write(",".join(columns) + "\n")
        for row in rows:
            buf.write(",".join(_csv_cell(v) for v in row) + "\n")
    text = buf.getvalue()
    if cfg.out:
        with open(cfg.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _csv_cell(v):
    s = fmt(v)
    if any(ch in s for ch in ',"\n'):
        s = '"' + s.replace('"', '""') + '"'
    return s


# input files


def read_points(path: str, n: int) -> np.ndarray:
    """One point per line, n whitespace-separated decimals; '#' starts a comment."""
    pts = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            try:
                row = [float(v) for v in line.split()]
            except ValueError as exc:
                raise ConfigError(f"{path}:{lineno}: {exc}") from None
            if len(row) != n:
                raise ConfigError(f"{path}:{lineno}: expected {n} values, got {len(row)}")
            pts.append(row)
    if not pts:
        raise ConfigError(f"{path}: no points")
    pts = np.array(pts)
    r = np.linalg.norm(pts, axis=1)
    bad = np.flatnonzero(~(r < 1.0))
    if bad.size:
        raise ConfigError(f"{path}: point {bad[0]} (0-based) has norm {fmt(r[bad[0]])} >= 1")
    return pts


def read_nodes(path: str, n: int):
    """Nodes-values file: n coordinates, the value, and an optional weight per line."""
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            try:
                row = [float(v) for v in line.split()]
            except ValueError as exc:
                raise ConfigError(f"{path}:{lineno}: {exc}") from None
            if len(row) not in (n + 1, n + 2):
                raise ConfigError(f"{path}:{lineno}: expected {n + 1} or {n + 2} values")
            rows.append(row)
    if not rows or len({len(r) for r in rows}) != 1:
        raise ConfigError(f"{path}: empty or mixed row lengths")
    arr = np.array(rows)
    weights = arr[:, n + 1] if arr.shape[1] == n + 2 else None
    return arr[:, :n], arr[:, n], weights


# commands


def _solver(cfg: RunConfig, n, theta) -> PoissonSolver:
    solver = PoissonSolver(n=n, theta=theta, base_size=cfg.base_size, seed=cfg.seed)
    try:
        if cfg.nodes:
            nodes, values, weights = read_nodes(cfg.nodes, n)
            return solver.fit(nodes, values, sample_weight=weights)
        return solver.fit(BUILTINS[cfg.boundary]())
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None


def cmd_solve(cfg: RunConfig) -> int:
    n = 3 if cfg.n is None else cfg.n
    theta = 0.0 if cfg.theta is None else cfg.theta
    cfg.n, cfg.theta = n, theta
    make_params(n, theta)
    if cfg.points is None:
        raise ConfigError("solve needs --points FILE")
    pts = read_points(cfg.points, n)
    solver = _solver(cfg, n, theta)
    cols = [f"x{k + 1}" for k in range(n)] + ["u", "grad_norm"]
    rows, recs = [], []
    for x in pts:
        u, g = solver.evaluate(x)
        gn = float(np.linalg.norm(g))
        rows.append(list(x) + [float(u), gn])
        recs.append({"kind": "point", "x": list(x), "u": float(u), "grad": list(g), "grad_norm": gn})
    boundary = cfg.nodes if cfg.nodes else cfg.boundary
    write_output(cfg, header(cfg, boundary=boundary), cols, rows, recs)
    return 0


RESULT_COLUMNS = ["name", "kind", "params", "observed", "expected", "tolerance", "passed", "note"]


def _result_rows(results):
    rows, recs = [], []
    for res in results:
        rec = res.to_record()
        recs.append(rec)
        rows.append([rec["name"], rec["kind"], json.dumps(_json_safe(rec["params"]), sort_keys=True),
                     rec["observed"], rec["expected"], rec["tolerance"], rec["passed"], rec["note"]])
    return rows, recs


def cmd_verify(cfg: RunConfig) -> int:
    ns = (2, 3, 4, 5) if cfg.n is None else (cfg.n,)
    thetas = None if cfg.theta is None else [cfg.theta]
    for n in ns:
        for th in (A.default_thetas(n) if thetas is None else thetas):
            make_params(n, th)
    results = A.run_suite(ns, thetas, cfg.tolerances, cfg.seed, cfg.jobs)
    rows, recs = _result_rows(results)
    failed = sum(not r["passed"] for r in recs)
    head = header(cfg, grid=A.suite_grid(ns, thetas), tolerances={**A.DEFAULT_TOLERANCES, **cfg.tolerances},
                  checks=len(recs), failed=failed)
    write_output(cfg, head, RESULT_COLUMNS, rows, recs)
    return 1 if failed else 0


FIT_COLUMNS = ["name", "params", "radius", "value", "slope", "target", "tolerance", "passed"]


def _fit_output(cfg, reports, **extra):
    rows, recs = [], []
    for rep in reports:
        rec = rep.to_record()
        recs.append(rec)
        params = json.dumps(_json_safe(rec["params"]), sort_keys=True)
        for r, v in zip(rep.radii, rep.values):
            rows.append([rep.name, params, r, v, rep.slope, rep.target, rep.tolerance, rep.passed])
    write_output(cfg, header(cfg, **extra), FIT_COLUMNS, rows, recs)
    return 0 if all(r.passed for r in reports) else 1


def cmd_blowup(cfg: RunConfig) -> int:
    n = 2 if cfg.n is None else cfg.n
    theta = -0.25 if cfg.theta is None else cfg.theta
    cfg.n, cfg.theta = n, theta
    p = make_params(n, theta)
    if not theta < 0:
        raise ConfigError("blowup needs theta < 0")
    solver = PoissonSolver(n=n, theta=theta, base_size=cfg.base_size, seed=cfg.seed).fit(constant())
    rep = A.blowup_exponent_fit(p, tol=cfg.tolerances.get("blowup_slope"), solver=solver)
    return _fit_output(cfg, [rep], boundary="constant")


def cmd_scan(cfg: RunConfig) -> int:
    n = 3 if cfg.n is None else cfg.n
    theta = 0.5 if cfg.theta is None else cfg.theta
    cfg.n, cfg.theta = n, theta
    make_params(n, theta)
    solver = _solver(cfg, n, theta)
    if solver.phi_ is None or solver.phi_.lipschitz is None:
        raise ConfigError("scan needs a built-in boundary with a Lipschitz constant")
    rep = A.lipschitz_scan(solver, tol=cfg.tolerances.get("bounded_slope"))
    return _fit_output(cfg, [rep], boundary=cfg.boundary, directions=[list(d) for d in A.default_directions(n)])


def cmd_keylem(cfg: RunConfig) -> int:
    n = 3 if cfg.n is None else cfg.n
    cfg.n = n
    if not cfg.p > cfg.q >= 0:
        raise ConfigError("keylem needs p > q >= 0")
    rep = A.verify_singular_integral_bound(n, cfg.p, cfg.q, tol=cfg.tolerances.get("singular_slope"))
    return _fit_output(cfg, [rep])


HANDLERS = {"solve": cmd_solve, "verify": cmd_verify, "blowup": cmd_blowup,
            "scan": cmd_scan, "keylem": cmd_keylem}


# argument handling


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="invlap", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"invlap {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--n", type=int, default=argparse.SUPPRESS, help="ambient dimension")
    common.add_argument("--theta", type=float, default=argparse.SUPPRESS,
                        help="operator parameter, > -1/2")
    common.add_argument("--base-size", type=int, dest="base_size", default=argparse.SUPPRESS,
                        help="zonal quadrature size at the centre")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="seed for sampled points")
    common.add_argument("--jobs", type=int, default=argparse.SUPPRESS, help="concurrent checks")
    common.add_argument("--out", default=argparse.SUPPRESS, help="output file (default stdout)")
    common.add_argument("--format", choices=("csv", "report"), default=argparse.SUPPRESS,
                        help="csv table or JSON lines")
    common.add_argument("--config", default=None, help="JSON file of defaults; flags win")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name, parents=[common])
        if name in ("solve", "scan"):
            sp.add_argument("--boundary", choices=sorted(BUILTINS), default=argparse.SUPPRESS)
        if name == "solve":
            sp.add_argument("--nodes", default=argparse.SUPPRESS,
                            help="nodes-values file (n coords, value, optional weight)")
            sp.add_argument("--points", default=argparse.SUPPRESS, help="one point per line")
        if name == "keylem":
            sp.add_argument("--p", type=float, default=argparse.SUPPRESS)
            sp.add_argument("--q", type=float, default=argparse.SUPPRESS)
    return ap


def parse_tolerances(extra) -> dict:
    """Collect '--tol.NAME VALUE' and '--tol.NAME=VALUE' pairs."""
    tols = {}
    i = 0
    while i < len(extra):
        arg = extra[i]
        if not arg.startswith(TOL_PREFIX):
            raise ConfigError(f"unrecognized argument {arg!r}")
        key = arg[len(TOL_PREFIX):]
        if "=" in key:
            key, val = key.split("=", 1)
        else:
            if i + 1 >= len(extra):
                raise ConfigError(f"{arg} needs a value")
            i += 1
            val = extra[i]
        try:
            tols[key] = float(val)
        except ValueError:
            raise ConfigError(f"{arg}: not a number: {val!r}") from None
        if not tols[key] > 0:
            raise ConfigError(f"{arg}: tolerance must be positive")
        i += 1
    return tols


def load_config(argv) -> RunConfig:
    ap = build_parser()
    ns, extra = ap.parse_known_args(argv)
    tols = parse_tolerances(extra)
    values = {}
    if ns.config:
        try:
            with open(ns.config, encoding="utf-8") as fh:
                values = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {ns.config}: {exc}") from None
        if not isinstance(values, dict):
            raise ConfigError("config file must hold a JSON object")
        values = {k.replace("-", "_"): v for k, v in values.items()}
    file_tols = values.pop("tolerances", {}) or {}
    allowed = set(RunConfig.__dataclass_fields__) - {"command", "tolerances"}
    unknown = set(values) - allowed
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(sorted(unknown))}")
    for key, val in vars(ns).items():
        if key not in ("config", "command"):
            values[key] = val
    cfg = RunConfig(command=ns.command, tolerances={**file_tols, **tols}, **values)
    return cfg.validate()


def main(argv=None) -> int:
    try:
        cfg = load_config(sys.argv[1:] if argv is None else argv)
        return HANDLERS[cfg.command](cfg)
    except SystemExit as exc:
        # argparse reports usage errors with status 2 already
        return int(exc.code) if isinstance(exc.code, int) else 2
    except (ConfigError, ValueError) as exc:
        print(f"invlap: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"invlap: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
