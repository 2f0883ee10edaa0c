"""Scenario runners producing the convergence, semigroup, stability and closure tables.

Every runner returns a :class:`RunResult`. Envelope columns are computed
from declared constants only (L_f, the growth constant C, N, T). A row is
``violated`` when it exceeds its envelope by more than the stated slack and
``warning`` when it exceeds the bare envelope but stays within the slack.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..control import ControlSystem, MeasureControl, sublinear_constant
from ..las import LASConfig, Trajectory, solve_las, time_modulus_bound, time_modulus_check
from ..measures import DiscreteMeasure, _canonical
from ..synthesis import certificate, synthesize_control
from ..transport import pseudo_distance, wasserstein_value
from .scenario import Scenario

ORACLE_DT = 1e-4


@dataclass
class RunResult:
    name: str
    header: list
    rows: list
    violations: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    trajectories: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    @property
    def failed(self) -> bool:
        return bool(self.violations)


def thread_count() -> int:
    try:
        return max(1, int(os.environ.get("MDE_LAB_THREADS", "1")))
    except ValueError:
        return 1


def pmap(fn, items):
    items = list(items)
    workers = min(thread_count(), len(items))
    if workers <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def solve(sc: Scenario, N: int, control: MeasureControl | None = None, initial: DiscreteMeasure | None = None) -> Trajectory:
    cfg = LASConfig(N, sc.horizon_T)
    mu0 = sc.initial if initial is None else initial
    if control is not None:
        return solve_las(sc.system, control, mu0, cfg)
    if sc.mvf is not None:
        return solve_las(sc.system, None, mu0, cfg, vfield_rule=sc.mvf)
    return solve_las(sc.system, sc.control, mu0, cfg)


def ode_oracle(sys: ControlSystem, mc: MeasureControl, mu0: DiscreteMeasure, T: float, dt: float = ORACLE_DT) -> DiscreteMeasure:
    """Classical RK4 flow of x' = f_hat(x, feedback(x)), applied atom-wise."""
    steps = max(1, math.ceil(T / dt - 1e-9))
    h = T / steps
    X = np.array(mu0.points, dtype=float)

    def rhs(Y):
        return sys.dynamics(Y, mc.feedback(Y))

    for _ in range(steps):
        k1 = rhs(X)
        k2 = rhs(X + 0.5 * h * k1)
        k3 = rhs(X + 0.5 * h * k2)
        k4 = rhs(X + h * k3)
        X = X + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return _canonical(X, np.array(mu0.weights))


def growth_constant(sc: Scenario) -> float:
    return sc.control_lipschitz if sc.control_lipschitz is not None else sublinear_constant(sc.system)


# -- convergence -----------------------------------------------------------


def run_convergence(sc: Scenario) -> RunResult:
    """Gaps between successive resolutions and to the ODE oracle when one exists."""
    Ns = list(sc.N_list)
    needed = sorted(set(Ns) | {2 * N for N in Ns})
    trajs = dict(zip(needed, pmap(lambda N: solve(sc, N), needed)))
    reference = None
    control = sc.control if sc.mvf is None else None
    if control is not None and control.is_deterministic():
        reference = ode_oracle(sc.system, control, sc.initial, sc.horizon_T)

    header = [
        "N",
        "W(final(N),final(2N))",
        "W(final(N),reference)",
        "ratio",
        "time_modulus",
        "time_modulus_bound",
    ]
    res = RunResult("convergence", header, [])
    prev = None
    for N in Ns:
        tr = trajs[N]
        cauchy = wasserstein_value(tr.final, trajs[2 * N].final)
        gap = wasserstein_value(tr.final, reference) if reference is not None else float("nan")
        ratio = float("nan")
        if reference is not None and prev is not None and prev > 0:
            ratio = gap / prev
        modulus = time_modulus_check(tr)
        bound = time_modulus_bound(tr, sc.system)
        res.rows.append([N, cauchy, gap, ratio, modulus, bound])
        if modulus > bound:
            res.violations.append(f"N={N}: time modulus {modulus:.6g} exceeds {bound:.6g}")
        elif modulus > bound - 2.0 / N:
            res.warnings.append(f"N={N}: time modulus {modulus:.6g} within the 2/N slack")
        if sc.max_ratio is not None and not math.isnan(ratio) and ratio > sc.max_ratio:
            res.violations.append(f"N={N}: oracle gap ratio {ratio:.4f} exceeds {sc.max_ratio}")
        prev = gap if reference is not None else None
    res.trajectories = trajs
    res.extra["reference"] = reference
    return res


# -- semigroup -------------------------------------------------------------


def run_semigroup(sc: Scenario) -> RunResult:
    """W(mu(t), nu(t)) against the exponential envelope exp(L_f (C+1) t) W(mu0, nu0)."""
    if sc.initial_alt is None:
        raise ValueError("semigroup run needs 'initial_alt'")
    L = sc.system.lipschitz
    C = growth_constant(sc)
    w0 = wasserstein_value(sc.initial, sc.initial_alt)
    n = sc.system.dim
    header = ["N", "t", "W(mu(t),nu(t))", "bound", "violated"]
    res = RunResult("semigroup", header, [])

    def pair(N):
        return solve(sc, N), solve(sc, N, initial=sc.initial_alt)

    for N, (a, b) in zip(sc.N_list, pmap(pair, sc.N_list)):
        slack = 4.0 * math.sqrt(n) / N**2
        for t, ma, mb in zip(a.times, a.states, b.states):
            gap = wasserstein_value(ma, mb)
            bound = math.exp(L * (C + 1.0) * t) * w0
            bad = gap > 1.1 * bound + slack
            res.rows.append([N, t, gap, bound, int(bad)])
            if bad:
                res.violations.append(f"N={N} t={t:.6g}: gap {gap:.6g} > 1.1*{bound:.6g} + {slack:.3g}")
            elif gap > bound:
                res.warnings.append(f"N={N} t={t:.6g}: gap {gap:.6g} above the bare envelope {bound:.6g}")
    return res


# -- stability -------------------------------------------------------------


def _estimated_control_gap(sc: Scenario, uk: MeasureControl, u: MeasureControl, measures) -> float:
    """Max of pseudo_distance(u_k[mu], u[mu]) over the given measures (an estimate of the sup)."""
    metric = sc.system.metric
    worst = 0.0
    seen = []
    for mu in measures:
        if any(mu == m for m in seen):
            continue
        seen.append(mu)
        worst = max(worst, pseudo_distance(uk(mu), u(mu), metric))
    return worst


def run_stability(sc: Scenario) -> RunResult:
    """Trajectory gaps for a control sequence u_k against the limit control u."""
    if sc.control is None or not sc.controls:
        raise ValueError("stability run needs 'control' and 'controls'")
    L = sc.system.lipschitz
    n = sc.system.dim
    header = ["N", "k", "sup_t W(mu_k(t),mu(t))", "sup_mu W(u_k[mu],u[mu]) (estimated sup)", "recursion_violations"]
    res = RunResult("stability", header, [])
    for N in sc.N_list:
        slack = 4.0 * math.sqrt(n) / N**2
        ref = solve(sc, N, control=sc.control)
        runs = pmap(lambda ctrl: solve(sc, N, control=ctrl), sc.controls)
        prev_gap = prev_eps = None
        for k, ctrl, tr in zip(sc.k_list, sc.controls, runs):
            gaps = [wasserstein_value(a, b) for a, b in zip(tr.states, ref.states)]
            eps_hat = _estimated_control_gap(sc, ctrl, sc.control, [*sc.probes, *ref.states, *tr.states])
            bad_steps = 0
            for ell in range(len(gaps) - 1):
                bound = (3 * L + 1) * gaps[ell] + 2 * L * eps_hat
                if gaps[ell + 1] > bound + slack:
                    bad_steps += 1
                    res.violations.append(f"N={N} k={k} step {ell + 1}: {gaps[ell + 1]:.6g} > {bound:.6g} + {slack:.3g}")
                elif gaps[ell + 1] > bound:
                    res.warnings.append(f"N={N} k={k} step {ell + 1}: recursion bound met only within slack")
            sup_gap = max(gaps)
            res.rows.append([N, k, sup_gap, eps_hat, bad_steps])
            if prev_gap is not None:
                for label, cur, prev in (("trajectory gap", sup_gap, prev_gap), ("control gap", eps_hat, prev_eps)):
                    if cur > prev + slack:
                        res.violations.append(f"N={N} k={k}: {label} {cur:.6g} increased from {prev:.6g}")
                    elif cur > prev:
                        res.warnings.append(f"N={N} k={k}: {label} rose within slack")
            prev_gap, prev_eps = sup_gap, eps_hat
        res.trajectories[N] = ref
    return res


# -- closure ---------------------------------------------------------------


def weak_form_residuals(traj: Trajectory, g) -> np.ndarray:
    """r(l/N) = |int g dmu(l/N) - int g dmu(0) - sum_{m<l} (1/N) int grad g . v dV_m|."""
    N = traj.config.N
    base = traj.states[0].integrate(g)
    out = np.zeros(len(traj.states))
    acc = 0.0
    for ell in range(1, len(traj.states)):
        V = traj.fields[ell - 1]
        P, w = V._product_arrays()
        n = V.base.dim
        acc += float(np.dot(w, np.sum(g.grad(P[:, :n]) * P[:, n:], axis=1))) / N
        out[ell] = abs(traj.states[ell].integrate(g) - base - acc)
    return out


def max_speed(traj: Trajectory) -> float:
    return max((float(np.linalg.norm(V._product_arrays()[0][:, V.base.dim :], axis=1).max()) for V in traj.fields), default=0.0)


def closure_target(g, speed: float, T: float, n: int, N: int) -> float:
    """C(g)/N with C(g) = Lip(grad g)(1 + speed)^2 T + sup|grad g| sqrt(n) T.

    The second term accounts for snapping velocities to the 1/N grid.
    """
    return (g.grad_lipschitz() * (1.0 + speed) ** 2 * T + g.grad_sup() * math.sqrt(n) * T) / N


def run_closure(sc: Scenario) -> RunResult:
    """Weak-form residual of the LAS trajectories for every test function."""
    if not sc.test_functions:
        raise ValueError("closure run needs 'test_functions'")
    n = sc.system.dim
    header = ["test_function", "N", "max_residual", "target", "ratio"]
    res = RunResult("closure", header, [])
    trajs = dict(zip(sc.N_list, pmap(lambda N: solve(sc, N), sc.N_list)))
    for g in sc.test_functions:
        prev = None
        for N in sc.N_list:
            tr = trajs[N]
            r = float(weak_form_residuals(tr, g).max())
            target = closure_target(g, max_speed(tr), sc.horizon_T, n, N)
            ratio = r / prev if prev else float("nan")
            res.rows.append([g.name, N, r, target, ratio])
            if r > target:
                res.violations.append(f"{g.name} N={N}: residual {r:.6g} exceeds target {target:.6g}")
            prev = r
    res.trajectories = trajs
    return res


# -- synthesis -------------------------------------------------------------


def run_synthesis(sc: Scenario, epsilons=None) -> RunResult:
    """Certificate of the synthesized controls on every probe."""
    if sc.mvf is None:
        raise ValueError("synthesis needs an 'mvf' rule")
    eps_list = list(epsilons or sc.epsilons)
    if not eps_list:
        raise ValueError("synthesis needs at least one epsilon")
    probes = sc.probes or [sc.initial]
    header = ["epsilon", "probe", "error", "violated"]
    res = RunResult("certificate", header, [])
    tables = {}
    for eps in eps_list:
        ctrl = synthesize_control(sc.system, sc.mvf, eps)
        errs = certificate(sc.system, sc.mvf, ctrl, probes)
        for i, e in enumerate(errs):
            bad = e > eps + 1e-9
            res.rows.append([eps, i, e, int(bad)])
            if bad:
                res.violations.append(f"eps={eps:g} probe {i}: error {e:.6g}")
            elif e > eps:
                res.warnings.append(f"eps={eps:g} probe {i}: error within rounding of eps")
        tables[eps] = ctrl
    res.extra["tables"] = tables
    return res
