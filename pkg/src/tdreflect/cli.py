"""Command-line entry point: ``tdreflect run <config>`` and ``tdreflect report <dir>``.

A config is a TOML file with a ``[domain]`` table, an optional ``[field]``
table, exactly one experiment table (``skorohod``, ``sde``, ``pde``,
``crosscheck``, ``verify-domain`` or ``verify-testfn``), and optional
``seed``, ``out`` and ``[tolerances]`` entries.  Every run writes its CSV
data files and a ``summary.json`` into the output directory.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib

from . import pde, rsde, skorohod, testfn
from .errors import ConfigError, TdReflectError
from .geometry.domains import domain_from_config
from .geometry.fields import field_from_config
from .geometry.verify import ConeCertificate, Sampler, verify_assumptions
from .noise import path_normals
from .paths import SampledPath, fmt
from .reports import PropertyReport, _clean

SCHEMA_VERSION = 1
EXPERIMENTS = ("skorohod", "sde", "pde", "crosscheck", "verify-domain", "verify-testfn")
STOCHASTIC = ("sde", "crosscheck")


# ---------------------------------------------------------------- config


class Config:
    """Parsed config with field-path diagnostics for missing or malformed entries."""

    def __init__(self, data: dict, path: Path):
        self.data = data
        self.path = path
        found = [k for k in EXPERIMENTS if k in data]
        if len(found) != 1:
            raise ConfigError(f"{path}: need exactly one experiment table out of {', '.join(EXPERIMENTS)}; found {found or 'none'}")
        self.experiment = found[0]
        if "domain" not in data:
            raise ConfigError(f"{path}: missing [domain] table")
        if self.experiment in STOCHASTIC and "seed" not in data:
            raise ConfigError(f"{path}: field 'seed' is required for the {self.experiment} experiment")

    @property
    def block(self) -> dict:
        return self.data[self.experiment]

    def build(self, where: str, fn, *args):
        """Call a builder and attribute any failure to the config field ``where``."""
        try:
            return fn(*args)
        except KeyError as exc:
            raise ConfigError(f"{self.path}: field '{where}.{exc.args[0]}' is missing") from None
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{self.path}: field '{where}': {exc}") from None

    def tolerances(self, defaults: dict) -> dict:
        over = self.data.get("tolerances", {})
        unknown = sorted(set(over) - set(defaults))
        if unknown:
            raise ConfigError(f"{self.path}: unknown tolerance(s) {unknown}; known: {sorted(defaults)}")
        return {k: float(over.get(k, v)) for k, v in defaults.items()}

    def resolve(self, name: str) -> Path:
        p = Path(name)
        if not p.is_absolute():
            p = self.path.parent / p
        if not p.exists():
            raise ConfigError(f"{self.path}: referenced file {name!r} does not exist")
        return p


def load_config(path) -> Config:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: parse error: {exc}") from None
    return Config(data, path)


# ---------------------------------------------------------------- experiments


class Outcome:
    def __init__(self):
        self.reports: list = []
        self.records: dict = {}
        self.files: list = []


def _input_path(cfg: Config, spec: dict, horizon: float, seed: int) -> SampledPath:
    """The free path fed to the Skorohod map."""
    kind = spec.get("kind", "brownian")
    if kind == "csv":
        return SampledPath.from_csv(cfg.resolve(spec["file"]))
    steps = int(spec["steps"])
    x0 = np.atleast_1d(np.asarray(spec["x0"], float))
    grid = np.linspace(0.0, horizon, steps + 1)
    if kind == "brownian":
        dW = path_normals(seed, 0, steps, x0.size) * math.sqrt(horizon / steps)
        vals = x0 + float(spec.get("sigma", 1.0)) * np.concatenate([np.zeros((1, x0.size)), np.cumsum(dW, axis=0)])
    elif kind == "linear":
        vals = x0 + grid[:, None] * np.atleast_1d(np.asarray(spec["velocity"], float))
    elif kind == "sine":
        amp = np.atleast_1d(np.asarray(spec["amplitude"], float))
        vals = x0 + amp * np.sin(float(spec.get("omega", 1.0)) * grid)[:, None]
    else:
        raise ValueError(f"unknown input kind {kind!r}")
    return SampledPath(grid, vals)


def run_skorohod(cfg: Config, out: Path, seed: int, workers: int) -> Outcome:
    b = cfg.block
    tol = cfg.tolerances({"boundary_tol": 1e-3, "interior_fraction_tol": 1e-2, "direction_tol_deg": 2.0, "oracle_tol": 1e-3})
    domain = cfg.build("domain", domain_from_config, cfg.data["domain"])
    field = cfg.build("field", field_from_config, cfg.data.get("field", {}))
    kw = {"boundary_tol": tol["boundary_tol"], "interior_fraction_tol": tol["interior_fraction_tol"], "direction_tol_deg": tol["direction_tol_deg"]}
    for k in ("eps_schedule", "eta", "blowup_factor"):
        if k in b:
            kw[k] = b[k]
    pcfg = cfg.build("skorohod", lambda: skorohod.PenaltyConfig(**kw))
    psi = cfg.build("skorohod.input", _input_path, cfg, b.get("input", {}), domain.horizon, seed)
    res = Outcome()
    sol = skorohod.solve(psi, domain, field, pcfg)
    sol.to_csv(out / "solution.csv")
    res.files.append("solution.csv")
    res.reports.append(skorohod.validate_solution(psi, sol, domain, field, pcfg))
    res.records["eps"] = sol.eps
    res.records["max_distance"] = sol.max_distance
    res.records["trace"] = list(sol.trace)
    if skorohod.is_half_line(domain) and psi.dim == 1:
        ref = skorohod.half_line_oracle(psi, domain.shape.a)
        err = sol.phi.sup_distance(ref.phi)
        rep = PropertyReport("oracle")
        rep.add("half_line_oracle", len(psi), err, err <= tol["oracle_tol"], tol=tol["oracle_tol"])
        res.reports.append(rep)
    return res


def run_sde(cfg: Config, out: Path, seed: int, workers: int) -> Outcome:
    b = dict(cfg.block, seed=seed)
    domain = cfg.build("domain", domain_from_config, cfg.data["domain"])
    field = cfg.build("field", field_from_config, cfg.data.get("field", {}))
    tol = cfg.tolerances({"boundary_tol": 1e-3, "direction_tol_deg": 2.0, "failed_fraction": 0.0})
    b.setdefault("horizon", domain.horizon)
    b["boundary_tol"], b["direction_tol_deg"] = tol["boundary_tol"], tol["direction_tol_deg"]
    scfg = cfg.build("sde", rsde.sde_config_from_dict, b, domain.dim)
    ens = rsde.simulate_ensemble(scfg, domain, field, workers)
    n = domain.dim
    path = out / "terminal.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["path"] + [f"x{i + 1}" for i in range(n)] + ["tv", "ok"])
        for p in range(scfg.n_paths):
            w.writerow([p] + [fmt(v) for v in ens.terminal[p]] + [fmt(ens.tv[p]), int(ens.ok[p])])
    res = Outcome()
    res.files.append("terminal.csv")
    rep = PropertyReport("sde")
    frac = ens.n_failed / scfg.n_paths
    rep.add("failed_paths", scfg.n_paths, frac, frac <= tol["failed_fraction"], n_failed=ens.n_failed)
    rep.add("boundary_violation", scfg.n_paths * scfg.n_steps, ens.max_violation, ens.max_violation <= tol["boundary_tol"], tol=tol["boundary_tol"])
    rep.add("direction_angle", scfg.n_paths * scfg.n_steps, ens.max_angle_deg, ens.max_angle_deg <= tol["direction_tol_deg"], tol_deg=tol["direction_tol_deg"])
    res.reports.append(rep)
    good = ens.terminal[ens.ok]
    if good.shape[0]:
        res.records["terminal_mean"] = good.mean(axis=0).tolist()
        res.records["terminal_stderr"] = (good.std(axis=0, ddof=1) / math.sqrt(good.shape[0])).tolist() if good.shape[0] > 1 else [0.0] * n
    res.records["n_paths"] = scfg.n_paths
    return res


def _pde_problem(cfg: Config, domain):
    b = cfg.block
    return cfg.build(
        "pde",
        lambda: pde.PdeProblem(
            pde.operator_from_config(b["operator"]),
            pde.initial_from_config(b.get("initial", 0.0)),
            domain,
            pde.boundary_from_config(b.get("boundary")),
            field_from_config(cfg.data.get("field", {})),
        ),
    )


def _pde_grid(cfg: Config, where: str, b: dict, horizon: float, M=None) -> pde.PdeGrid:
    return cfg.build(
        where,
        lambda: pde.PdeGrid(
            int(M or b["M"]),
            horizon,
            float(b["dt"]) if "dt" in b else None,
            float(b.get("cfl_fraction", 0.125)),
            int(b.get("store_levels", 201)),
        ),
    )


def run_pde(cfg: Config, out: Path, seed: int, workers: int) -> Outcome:
    b = cfg.block
    tol = cfg.tolerances({"ordering_tol": 1e-12, "residual_order": 1.8, "residual_floor": 1e-10, "maximum_principle_tol": 1e-12})
    domain = cfg.build("domain", domain_from_config, cfg.data["domain"])
    prob = _pde_problem(cfg, domain)
    grid = _pde_grid(cfg, "pde", b, domain.horizon)
    sol = pde.solve_oblique_parabolic(prob, grid)
    sol.to_csv(out / "solution.csv")
    res = Outcome()
    res.files.append("solution.csv")
    rep = PropertyReport("pde")
    ratio = sol.worst_cfl_ratio
    rep.add("monotone_scheme", sol.n_steps, max(ratio - 1.0, 0.0), ratio <= 1.0, cfl_ratio=ratio, dt=sol.dt)
    bd = prob.boundary
    if bd.fn is None and bd.c0 == bd.c1 == bd.c3 == 0.0:
        u0 = sol.u[0]
        over = max(sol.u_max - float(u0.max()), float(u0.min()) - sol.u_min, 0.0)
        rep.add("maximum_principle", sol.n_steps * (grid.M + 1), over, over <= tol["maximum_principle_tol"])
    r1 = pde.boundary_residual(prob, sol)
    if b.get("residual_check", True):
        fine = pde.solve_oblique_parabolic(prob, _pde_grid(cfg, "pde", b, domain.horizon, 2 * grid.M))
        r2 = pde.boundary_residual(prob, fine)
        if r1 <= tol["residual_floor"]:
            rep.add("boundary_residual", 2, r1, True, residual=r1, residual_fine=r2)
        else:
            order = math.log(r1 / r2, 2) if r2 > 0 else float("inf")
            rep.add("boundary_residual", 2, max(tol["residual_order"] - order, 0.0), order >= tol["residual_order"], residual=r1, residual_fine=r2, order=order)
    res.reports.append(rep)
    if "comparison_shift" in b:
        shift = float(b["comparison_shift"])
        cmp = pde.check_comparison(prob, grid, prob.initial, lambda x: prob.initial(x) + shift, tol["ordering_tol"])
        res.reports.append(cmp)
    res.records.update(n_steps=sol.n_steps, dt=sol.dt, u_min=sol.u_min, u_max=sol.u_max, boundary_residual=r1)
    return res


def run_crosscheck(cfg: Config, out: Path, seed: int, workers: int) -> Outcome:
    b = cfg.block
    tol = cfg.tolerances({"gap_tol": 2e-2, "stderr_factor": 3.0})
    domain = cfg.build("domain", domain_from_config, cfg.data["domain"])
    g = cfg.build("crosscheck.initial", pde.initial_from_config, b.get("initial", 0.0))
    grid = _pde_grid(cfg, "crosscheck", b, domain.horizon)
    x0 = float(b["x0"]) if "x0" in b else None
    if x0 is None:
        raise ConfigError(f"{cfg.path}: field 'crosscheck.x0' is missing")
    sigma = float(b.get("sigma", 1.0))
    mc = cfg.build(
        "crosscheck",
        lambda: rsde.SdeConfig(
            rsde.Constant(np.zeros(1)), rsde.Constant(np.ones((1, 1))), (x0,), domain.horizon, int(b["steps"]), int(b["paths"]), seed
        ),
    )
    rec = pde.feynman_kac_crosscheck(domain, sigma, g, grid, mc, x0, workers)
    bound = tol["stderr_factor"] * rec.stderr + tol["gap_tol"]
    res = Outcome()
    rep = PropertyReport("crosscheck")
    rep.add("feynman_kac_gap", rec.n_paths, max(rec.gap - bound, 0.0), rec.gap <= bound, gap=rec.gap, stderr=rec.stderr, bound=bound)
    rep.add("failed_paths", rec.n_paths + rec.n_failed, rec.n_failed, rec.n_failed == 0)
    res.reports.append(rep)
    path = out / "crosscheck.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x0", "u_pde", "u_mc", "gap", "stderr", "n_paths"])
        w.writerow([fmt(x0), fmt(rec.u_pde), fmt(rec.u_mc), fmt(rec.gap), fmt(rec.stderr), rec.n_paths])
    res.files.append("crosscheck.csv")
    res.records.update(rec._asdict())
    return res


def run_verify_domain(cfg: Config, out: Path, seed: int, workers: int) -> Outcome:
    b = cfg.block
    domain = cfg.build("domain", domain_from_config, cfg.data["domain"])
    field = cfg.build("field", field_from_config, cfg.data.get("field", {}))
    cert = cfg.build("verify-domain.certificate", lambda: ConeCertificate(**b["certificate"]))
    tol = cfg.tolerances({"tol": 1e-9})
    skw = {k: b[k] for k in ("n_boundary", "n_times", "n_zeta", "n_pairs", "mollifier_beta") if k in b}
    sampler = cfg.build("verify-domain", lambda: Sampler(seed=seed, tol=tol["tol"], **skw))
    res = Outcome()
    res.reports.append(verify_assumptions(domain, field, cert, sampler))
    return res


def run_verify_testfn(cfg: Config, out: Path, seed: int, workers: int) -> Outcome:
    b = cfg.block
    domain = cfg.build("domain", domain_from_config, cfg.data["domain"])
    field = cfg.build("field", field_from_config, cfg.data.get("field", {}))
    params = cfg.build("verify-testfn", testfn.params_from_config, b)
    tol = cfg.tolerances({"margin_tol": 1e-8, "fd_tol": 1e-5})
    bkw = {k: b[k] for k in ("n_points", "n_fd", "p_max", "safety", "alpha_delta") if k in b}
    if "eps_values" in b:
        bkw["eps_values"] = tuple(b["eps_values"])
    budget = cfg.build("verify-testfn", lambda: testfn.SampleBudget(margin_tol=tol["margin_tol"], fd_tol=tol["fd_tol"], seed=seed, **bkw))
    res = Outcome()
    res.reports.append(testfn.verify_test_properties(params, field, domain, budget))
    return res


RUNNERS = {
    "skorohod": run_skorohod,
    "sde": run_sde,
    "pde": run_pde,
    "crosscheck": run_crosscheck,
    "verify-domain": run_verify_domain,
    "verify-testfn": run_verify_testfn,
}


# ---------------------------------------------------------------- commands


def write_summary(out: Path, summary: dict) -> None:
    out.mkdir(parents=True, exist_ok=True)
    text = json.dumps(_clean(summary), indent=2, ensure_ascii=False, allow_nan=False)
    (out / "summary.json").write_text(text + "\n", encoding="utf-8")


def run(config_path, out=None, seed=None, workers: int = 1) -> int:
    """Run one experiment; returns the process exit status."""
    cfg = load_config(config_path)
    seed = int(seed if seed is not None else cfg.data.get("seed", 0))
    out = Path(out or cfg.data.get("out") or Path("runs") / cfg.path.stem)
    out.mkdir(parents=True, exist_ok=True)
    summary = {"schema_version": SCHEMA_VERSION, "experiment": cfg.experiment, "seed": seed, "passed": False, "error": None, "reports": [], "records": {}, "files": []}
    try:
        res = RUNNERS[cfg.experiment](cfg, out, seed, workers)
    except ConfigError:
        raise
    except TdReflectError as exc:
        summary["error"] = {"type": type(exc).__name__, "message": str(exc)}
        if getattr(exc, "trace", None):
            summary["records"]["trace"] = exc.trace
        if getattr(exc, "suggested_dt", None) is not None:
            summary["records"]["suggested_dt"] = exc.suggested_dt
        write_summary(out, summary)
        return 1
    summary["reports"] = [r.to_dict() for r in res.reports]
    summary["records"] = res.records
    summary["files"] = res.files
    summary["passed"] = bool(res.reports) and all(r.passed for r in res.reports)
    write_summary(out, summary)
    return 0 if summary["passed"] else 1


def load_summary(directory) -> dict:
    path = Path(directory) / "summary.json"
    if not path.is_file():
        raise ConfigError(f"no summary found in {directory}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ConfigError(f"corrupt summary {path}: {exc}") from None
    if not isinstance(data, dict) or "schema_version" not in data or "reports" not in data:
        raise ConfigError(f"corrupt summary {path}: missing schema_version or reports")
    return data


def render_report(data: dict) -> str:
    """Pass/fail table, failing rows first."""
    rows = [(rep["name"], r) for rep in data["reports"] for r in rep["rows"]]
    rows.sort(key=lambda nr: nr[1]["passed"])
    lines = [f"experiment: {data.get('experiment')}  seed: {data.get('seed')}  schema: {data['schema_version']}"]
    if data.get("error"):
        lines.append(f"ERROR  {data['error']['type']}: {data['error']['message']}")
    width = max([len(f"{n}.{r['check_name']}") for n, r in rows] + [5])
    lines.append(f"{'status':<6}  {'check':<{width}}  {'worst':>12}  samples")
    for name, r in rows:
        worst = r["worst_violation"]
        ws = f"{worst:12.3e}" if isinstance(worst, (int, float)) else f"{str(worst):>12}"
        lines.append(f"{'PASS' if r['passed'] else 'FAIL':<6}  {name + '.' + r['check_name']:<{width}}  {ws}  {r['samples']}")
    lines.append(f"overall: {'PASS' if data.get('passed') else 'FAIL'}")
    return "\n".join(lines)


def report(directory) -> int:
    data = load_summary(directory)
    print(render_report(data))
    return 0 if data.get("passed") else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tdreflect", description="Reflected SDEs and oblique-derivative PDEs in moving domains.")
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run the experiment described by a TOML config")
    r.add_argument("config")
    r.add_argument("--workers", type=int, default=1, help="maximum worker threads (default 1)")
    r.add_argument("--seed", type=int, default=None, help="override the config seed")
    r.add_argument("--out", default=None, help="output directory (overrides the config)")
    p = sub.add_parser("report", help="print the pass/fail table of a finished run")
    p.add_argument("directory")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            if args.workers < 1:
                raise ConfigError("--workers must be at least 1")
            return run(args.config, args.out, args.seed, args.workers)
        return report(args.directory)
    except ConfigError as exc:
        print(f"tdreflect: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
