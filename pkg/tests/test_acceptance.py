"""Acceptance suite: one test per criterion, each printing a single PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v`` or ``python3 tests/test_acceptance.py``.
Runtimes are measured after a warm-up that loads the compiled kernels.
"""

import math
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from tdreflect.cases import half_line_cases, modulus_battery, pde_cases, shrinking_disk_case
from tdreflect.cli import main as cli_main
from tdreflect.geometry import (
    DomainSpec,
    InwardNormalSmoothed,
    MovingDisk,
    MovingInterval,
    MovingScaledPolygon,
    Power,
    RotatedNormal,
    Sine,
    Spline,
    unit_square,
)
from tdreflect.noise import path_normals
from tdreflect.paths import SampledPath
from tdreflect.pde import PdeGrid, PdeProblem, LinearDiffusion, check_comparison, feynman_kac_crosscheck, heat_cosine_exact, solve_oblique_parabolic, stable_dt
from tdreflect.rsde import Constant, SdeConfig, contraction_experiment, euler_with_noise, mc_expectation, mean_reverting_case, picard_solve
from tdreflect.skorohod import SkorohodSolution, half_line_oracle, modulus_table, radial_oracle, rate_fit, solve, validate_solution
from tdreflect.testfn import TestFunctionParams, verify_test_properties

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
NORMAL = InwardNormalSmoothed()


@pytest.fixture
def emit(record_property):
    """Record one verdict line per criterion; the runtime budget is part of the verdict.

    conftest prints the recorded lines in the terminal summary.
    """

    def _emit(k, title, ok, seconds, budget, detail):
        within = seconds <= budget
        verdict = "PASS" if ok and within else "FAIL"
        line = f"[{verdict}] criterion {k:>2} {title}: {detail}; {seconds:.1f}s (budget {budget:g}s)"
        record_property("acceptance", line)
        print(line)
        assert ok, line
        assert within, line

    return _emit


@pytest.fixture(scope="module", autouse=True)
def warm_up():
    """Touch every compiled kernel once on a tiny problem."""
    psi = SampledPath.uniform(1.0, 20, lambda t: -t)
    solve(psi, DomainSpec(1.0, MovingInterval(0.0)), NORMAL)
    solve(SampledPath.constant(np.linspace(0, 1, 20), [0.5, 0.0]), DomainSpec(1.0, MovingDisk(0.0, 0.0, 0.8)), NORMAL)
    cfg = SdeConfig(Constant(np.zeros(1)), Constant(np.ones((1, 1))), (0.1,), 0.1, 4, n_paths=2)
    mc_expectation(cfg, DomainSpec(0.1, MovingInterval(0.0, 1.0)), NORMAL, lambda x: x[:, 0])
    c = pde_cases()
    solve_oblique_parabolic(c[0].problem, PdeGrid(8, 0.01))
    solve_oblique_parabolic(c[3].problem, PdeGrid(8, 0.01))


def test_criterion_01_penalty_rate(emit):
    t0 = time.perf_counter()
    psi = SampledPath.uniform(math.pi, 10_000, lambda t: 0 * t)
    eps = [1e-1, 1e-2, 1e-3, 1e-4, 1e-5]
    fit = rate_fit(psi, DomainSpec(math.pi, MovingInterval(Sine())), NORMAL, eps)
    dt = time.perf_counter() - t0
    # the Hölder-1/2 wall is reported next to it for context; it does not enter the verdict
    ref = rate_fit(SampledPath.uniform(1.0, 10_000, lambda t: 0 * t), DomainSpec(1.0, MovingInterval(Power(amplitude=0.3))), NORMAL, eps)
    s = fit["slope"]
    emit(1, "penalty distance rate", 0.45 <= s <= 0.55, dt, 10, f"sine-barrier slope {s:.3f} (need [0.45, 0.55]); sqrt-wall slope {ref['slope']:.3f}")


def _line_solutions():
    out = []
    for c in half_line_cases():
        sol = solve(c.psi, c.domain, NORMAL, c.penalty)
        out.append((c, sol))
    return out


def test_criterion_02_oracle_equivalence(emit):
    t0 = time.perf_counter()
    errs = {}
    for c, sol in _line_solutions():
        errs[c.name] = sol.phi.sup_distance(half_line_oracle(c.psi, c.barrier).phi)
    psi, dom = shrinking_disk_case()
    sol = solve(psi, dom, NORMAL)
    errs["shrinking_disk"] = float(np.max(np.linalg.norm(sol.phi.values - radial_oracle(psi, dom.shape.r), axis=1)))
    dt = time.perf_counter() - t0
    worst = max(errs, key=errs.get)
    emit(2, "Skorohod oracle equivalence", all(e <= 1e-3 for e in errs.values()), dt, 30, f"worst sup error {errs[worst]:.2e} ({worst}) over {len(errs)} cases (need <= 1e-3)")


def test_criterion_03_sp_validator(emit):
    t0 = time.perf_counter()
    failed = []
    sols = _line_solutions()
    for c, sol in sols:
        rep = validate_solution(c.psi, sol, c.domain, NORMAL, c.penalty)
        if not rep.passed:
            failed.append(c.name)
    psi, dom = shrinking_disk_case()
    if not validate_solution(psi, solve(psi, dom, NORMAL), dom, NORMAL).passed:
        failed.append("shrinking_disk")
    c, sol = sols[1]  # sine barrier; the path sits inside from about t = 2.2 on
    lam = sol.lam.values.copy()
    lam[8000:, 0] += 0.5
    tv = np.concatenate([[0.0], np.cumsum(np.abs(np.diff(lam[:, 0])))])
    bad = SkorohodSolution(SampledPath(c.psi.grid, c.psi.values + lam), SampledPath(c.psi.grid, lam), tv, sol.active)
    neg = validate_solution(c.psi, bad, c.domain, NORMAL)
    flagged = not neg.row("SP4_interior_accumulation").passed
    dt = time.perf_counter() - t0
    detail = f"{len(sols) + 1 - len(failed)}/{len(sols) + 1} solutions pass SP1-SP5; corrupted lambda {'flagged' if flagged else 'NOT flagged'} by SP4"
    emit(3, "SP validator suite", not failed and flagged, dt, 5, detail)


def test_criterion_04_modulus_stability(emit):
    t0 = time.perf_counter()
    worst, worst_name, R1, R2 = 1.0, "", 0.0, 0.0
    for c in modulus_battery(1000):
        fine = c.psi.refine(2)
        r1 = modulus_table(c.psi, solve(c.psi, c.domain, NORMAL, c.penalty).lam)["R"]
        r2 = modulus_table(fine, solve(fine, c.domain, NORMAL, c.penalty).lam)["R"]
        R1, R2 = max(R1, r1), max(R2, r2)
        if r1 == 0.0 and r2 == 0.0:
            continue  # never pushed
        change = max(r1, r2) / min(r1, r2) if min(r1, r2) > 0 else math.inf
        if change > worst:
            worst, worst_name = change, c.name
    dt = time.perf_counter() - t0
    emit(4, "modulus estimate stability", worst < 2.0 and max(R1, R2) / min(R1, R2) < 2.0, dt, 60, f"battery R {R1:.3f} -> {R2:.3f}; worst per-case change x{worst:.4f} ({worst_name}) (need < 2)")


def test_criterion_05_test_function_suite(emit):
    t0 = time.perf_counter()
    P = TestFunctionParams(theta=0.5)
    pairs = [
        ("interval", DomainSpec(1.0, MovingInterval(Spline.linear(0.0, 0.2), 1.0)), NORMAL),
        ("disk", DomainSpec(1.0, MovingDisk(0.0, 0.0, Spline.linear(1.0, -0.3))), RotatedNormal(0.3)),
        ("square", DomainSpec(1.0, MovingScaledPolygon(0.5, 0.5, Spline.linear(1.0, -0.3), unit_square())), InwardNormalSmoothed(beta=0.05)),
    ]
    bad, rows, worst_fd = [], 0, 0.0
    for name, dom, field in pairs:
        rep = verify_test_properties(P, field, dom)
        rows += len(rep.rows)
        bad += [f"{name}.{r.check_name}" for r in rep.rows if not r.passed]
        worst_fd = max([worst_fd] + [r.worst_violation for r in rep.rows if r.check_name.startswith("fd_")])
    dt = time.perf_counter() - t0
    emit(5, "test-function property suite", not bad, dt, 60, f"{rows - len(bad)}/{rows} rows pass on 3 domain/field pairs at 1e4 points; worst FD error {worst_fd:.1e}{'; failing ' + ', '.join(bad) if bad else ''}")


def test_criterion_06_reflected_brownian_law(emit):
    t0 = time.perf_counter()
    dom = DomainSpec(1.0, MovingInterval(0.0))
    cfg = SdeConfig(Constant(np.zeros(1)), Constant(np.ones((1, 1))), (0.0,), 1.0, 2000, n_paths=20_000, seed=2024)
    est = mc_expectation(cfg, dom, NORMAL, lambda x: x[:, 0], workers=4)
    dt = time.perf_counter() - t0
    gap = abs(est.mean - math.sqrt(2 / math.pi))
    bound = 3 * est.stderr + 5e-3
    emit(6, "reflected Brownian mean", gap <= bound and est.n_failed == 0, dt, 30, f"mean {est.mean:.5f} vs {math.sqrt(2 / math.pi):.5f}, gap {gap:.2e} <= {bound:.2e}; failed paths {est.n_failed}")


def test_criterion_07_contraction_and_picard(emit):
    t0 = time.perf_counter()
    mr_cfg, mr_dom, mr_field = mean_reverting_case(n_steps=200)
    disk = DomainSpec(0.5, MovingDisk(0.0, 0.0, Spline.linear(0.6, -0.4)))
    bm = SdeConfig(Constant(np.zeros(2)), Constant(np.eye(2)), (0.0, 0.0), 0.5, 100, seed=13, noise_dim=2)
    spreads = []
    for cfg, dom, field, x, xp in [(mr_cfg.with_(seed=21), mr_dom, mr_field, 0.9, 0.3), (bm, disk, RotatedNormal(0.3), (0.1, 0.0), (-0.1, 0.1))]:
        Cs = []
        for M in (1000, 4000, 16000):
            rec = contraction_experiment(cfg.with_(n_paths=M), x, xp, dom, field, workers=4)
            d2 = float(np.sum((np.atleast_1d(x) - np.atleast_1d(xp)) ** 2))
            assert rec.lhs <= rec.fitted_C * (d2 + rec.rhs_integral) * (1 + 1e-12)
            Cs.append(rec.fitted_C)
        spreads.append((max(Cs) / min(Cs), Cs))
    cfg, dom, field = mean_reverting_case()
    noise = path_normals(cfg.seed, 0, cfg.n_steps, 1) * math.sqrt(cfg.dt)
    pic = picard_solve(cfg, dom, field, noise, n_iter=8, tol=1e-4)
    g = pic.sup_gaps
    mono = all(g[i + 1] < g[i] for i in range(1, len(g) - 1))
    euler = euler_with_noise(cfg, dom, field, noise[None])[0, :, 0]
    agree = float(np.max(np.abs(pic.iterates[-1].values[:, 0] - euler)))
    dt = time.perf_counter() - t0
    ok = all(s < 2.0 for s, _ in spreads) and mono and pic.converged and g[-1] <= 1e-4 and len(g) <= 8
    cs = "; ".join(f"C in [{min(c):.4f}, {max(c):.4f}] (x{s:.4f})" for s, c in spreads)
    emit(7, "contraction and Picard", ok, dt, 120, f"{cs}; Picard gaps {len(g)} iterations, final {g[-1]:.1e}, monotone after 2: {mono}; Picard vs Euler {agree:.1e}")


def test_criterion_08_comparison_principle(emit):
    t0 = time.perf_counter()
    worst, names = 0.0, []
    for c in pde_cases():
        rep = check_comparison(c.problem, PdeGrid(100, c.problem.domain.horizon), c.lower, c.upper)
        worst = max(worst, rep.row("ordering").worst_violation)
        if not rep.passed:
            names.append(c.name)
    c = pde_cases()[0]
    neg = check_comparison(c.problem, PdeGrid(100, 0.2, dt=1.5 * stable_dt(c.problem, 100)), c.lower, c.upper)
    flagged = not neg.row("monotone_scheme").passed
    dt = time.perf_counter() - t0
    detail = f"max (u-v)+ {worst:.1e} over {len(pde_cases())} cases (need <= 1e-12); CFL negative control {'flagged' if flagged else 'NOT flagged'}"
    emit(8, "discrete comparison principle", not names and worst <= 1e-12 and flagged, dt, 10, detail)


def test_criterion_09_heat_oracle(emit):
    t0 = time.perf_counter()
    dom = DomainSpec(0.2, MovingInterval(0.0, 1.0))
    prob = PdeProblem(LinearDiffusion(0.5), lambda x: np.cos(math.pi * x), dom)

    def err(M, dt=None):
        s = solve_oblique_parabolic(prob, PdeGrid(M, 0.2, dt=dt))
        return float(np.max(np.abs(s.final - heat_cosine_exact(0.2, s.x[-1]))))

    e200 = err(200)
    coarse, fine = err(100, 2e-5), err(200, 1e-5)
    dt = time.perf_counter() - t0
    emit(9, "heat equation oracle", e200 <= 5e-3 and coarse / fine >= 3, dt, 10, f"error {e200:.1e} at M=200 (need <= 5e-3); joint halving {coarse:.2e} -> {fine:.2e} (x{coarse / fine:.2f}, need >= 3)")


def test_criterion_10_feynman_kac(emit):
    t0 = time.perf_counter()
    dom = DomainSpec(0.5, MovingInterval(Spline.linear(0.0, 0.2), 1.0))
    mc = SdeConfig(Constant(np.zeros(1)), Constant(np.ones((1, 1))), (0.3,), 0.5, 2000, n_paths=20_000, seed=7)
    rec = feynman_kac_crosscheck(dom, 1.0, lambda x: np.cos(math.pi * np.asarray(x)), PdeGrid(200, 0.5), mc, 0.3, workers=4)
    dt = time.perf_counter() - t0
    bound = 3 * rec.stderr + 2e-2
    emit(10, "Feynman-Kac cross-check", rec.gap <= bound and rec.n_failed == 0, dt, 60, f"u_pde {rec.u_pde:.5f}, u_mc {rec.u_mc:.5f}, gap {rec.gap:.2e} <= {bound:.2e}")


def test_criterion_11_determinism(emit, tmp_path):
    t0 = time.perf_counter()
    runs = {}
    for name, cfg in (("sde", "sde_disk.toml"), ("skorohod", "skorohod_half_line.toml")):
        for w in (1, 4, 1):
            out = tmp_path / f"{name}_{w}_{len(runs)}"
            cli_main(["run", str(CONFIGS / cfg), "--out", str(out), "--workers", str(w)])
            runs.setdefault(name, []).append({p.name: p.read_bytes() for p in sorted(out.glob("*.csv"))})
    same = all(all(r == rs[0] for r in rs[1:]) and rs[0] for rs in runs.values())
    dt = time.perf_counter() - t0
    emit(11, "byte-identical reruns", same, dt, 30, f"CSV outputs identical across 3 runs (workers 1, 4, 1) for {', '.join(runs)}: {same}")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
