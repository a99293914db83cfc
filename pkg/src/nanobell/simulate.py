"""Runs that tie the models, the engine and the Bell analysis together.

Times are expressed as ``s = t * kappa^2 / gamma0``, i.e. in units of the
two-mode time scale ``gamma0 / kappa^2``; raw ``t`` is reported alongside.
"""

from __future__ import annotations

import csv
import io
import json
import math
import platform
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from itertools import product
from pathlib import Path

import numpy as np

from . import __version__, bell, fock, lindblad, models
from . import observables as obs


class BudgetExceeded(RuntimeError):
    pass


class TruncationWarning(UserWarning):
    pass


def _warn_tail(tail: float, where: str):
    if tail > fock.TAIL_LIMIT:
        warnings.warn(f"{where}: top two Fock levels hold {tail:.2e} > {fock.TAIL_LIMIT:g}; "
                      "increase dims", TruncationWarning, stacklevel=3)


@dataclass
class ResultTable:
    columns: dict[str, np.ndarray]
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.columns = {k: np.asarray(v, dtype=float) for k, v in self.columns.items()}
        lengths = {len(v) for v in self.columns.values()}
        if len(lengths) > 1:
            raise ValueError(f"columns have unequal lengths {sorted(lengths)}")

    def __len__(self):
        return len(next(iter(self.columns.values()))) if self.columns else 0

    def to_csv(self) -> str:
        """CSV text; the header comments hold the deterministic part of the metadata."""
        buf = io.StringIO()
        for key in ("command", "model", "tolerances", "grid"):
            if key in self.metadata:
                buf.write(f"# {key}: {json.dumps(self.metadata[key], sort_keys=True)}\n")
        w = csv.writer(buf, lineterminator="\n")
        names = list(self.columns)
        w.writerow(names)
        for row in zip(*(self.columns[n] for n in names)):
            w.writerow(["nan" if math.isnan(v) else format(v, ".17g") for v in row])
        return buf.getvalue()

    def to_json(self) -> str:
        cols = {k: [None if math.isnan(x) else x for x in v.tolist()]
                for k, v in self.columns.items()}
        return json.dumps({"metadata": self.metadata, "columns": cols}, indent=1,
                          sort_keys=True, default=str)

    def write(self, out_dir, stem: str, fmt: str = "csv") -> Path:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        if fmt == "csv":
            path = out_dir / f"{stem}.csv"
            path.write_text(self.to_csv())
            meta = dict(self.metadata, written_at=time.strftime("%Y-%m-%dT%H:%M:%S"))
            (out_dir / f"{stem}.meta.json").write_text(
                json.dumps(meta, indent=1, sort_keys=True, default=str))
        elif fmt == "json":
            path = out_dir / f"{stem}.json"
            path.write_text(self.to_json())
        else:
            raise ValueError(f"unknown format {fmt!r}")
        return path


def provenance(spec: models.ModelSpec, command: str, **extra) -> dict:
    meta = {"command": command, "model": spec.to_dict(),
            "tolerances": {"rtol": lindblad.RTOL, "atol": lindblad.ATOL,
                           "steady_tol": lindblad.STEADY_TOL,
                           "renorm_limit": lindblad.RENORM_LIMIT},
            "version": __version__, "python": platform.python_version(),
            "numpy": np.__version__}
    meta.update(extra)
    return meta


def initial_state(spec: models.ModelSpec) -> np.ndarray:
    """Thermal product state at (N1, N2); the vacuum when both are zero."""
    return fock.thermal_dm(spec.dims[-2:], [spec.N1, spec.N2])


def effective_liouvillian(spec: models.ModelSpec, params=None) -> lindblad.Liouvillian:
    H, cs, _ = models.two_mode_effective_model(spec, params)
    return lindblad.build_liouvillian(H, cs)


# --- per-state diagnostics ----------------------------------------------------

def bell_row(rho, dims, varphi: float, kernel) -> dict:
    res = bell.bell_quantities(rho, dims, bell.parameterized_angles(varphi), kernel)
    return {"B_CH_norm": res.ch_normalized, "B_CHSH_norm": res.chsh_normalized}


def state_row(rho, dims, varphi: float, kernel) -> dict:
    row = bell_row(rho, dims, varphi, kernel)
    row.update(n1=obs.mean_number(rho, dims, 0), n2=obs.mean_number(rho, dims, 1),
               var_x1=obs.quadrature_variance(rho, dims, 0),
               var_diff=obs.two_mode_diff_variance(rho, dims),
               E_N=obs.logarithmic_negativity(rho, dims))
    return row


def violation_windows(s, values, level: float = 1.0) -> list[tuple[float, float]]:
    """Contiguous runs of ``values > level`` as (start, end) pairs of ``s``."""
    above = np.asarray(values) > level
    out = []
    start = None
    for i, flag in enumerate(above):
        if flag and start is None:
            start = i
        if not flag and start is not None:
            out.append((float(s[start]), float(s[i - 1])))
            start = None
    if start is not None:
        out.append((float(s[start]), float(s[-1])))
    return out


# --- commands -----------------------------------------------------------------

def steady(spec: models.ModelSpec, strategy: str = "null-space", varphi: float = math.pi / 4,
           theta: float = 0.0, phi: float = 0.0, grid=None):
    """Steady state from the initial state plus its diagnostics.

    Returns (summary dict, fock table, wigner grid, joint-pdf grid).
    """
    dims = spec.dims
    L = effective_liouvillian(spec)
    rho = lindblad.steady_state(L, initial_state(spec), strategy)
    tail = fock.max_tail_population(rho, dims)
    if tail > fock.TAIL_LIMIT:
        raise models.TruncationError(f"steady state puts {tail:.2e} in the top two Fock levels "
                                     f"(limit {fock.TAIL_LIMIT:g}); increase dims")
    kernel = bell.default_kernel(dims)
    row = state_row(rho, dims, varphi, kernel)
    p = models.effective_params(spec)
    summary = dict(row, r=p.r, gamma_2ph=p.gamma_2ph, mu=abs(p.mu), chi=p.chi,
                   residual=L.residual(rho), varphi=varphi, tail=tail)
    fd = ResultTable({"n": np.arange(dims[0]),
                      "P_mode1": obs.fock_distribution(rho, dims, 0),
                      "P_mode2": obs.fock_distribution(rho, dims, 1)},
                     provenance(spec, "steady"))
    xs = np.linspace(-4, 4, 81) if grid is None else np.asarray(grid)
    wig = obs.wigner_single_mode(rho, dims, 0, xs, xs)
    X1, X2 = np.meshgrid(xs, xs)
    pdf = bell.joint_pdf(rho, dims, theta, phi, X1, X2)
    return summary, fd, wig, pdf, rho


def transient(spec: models.ModelSpec, s_grid, varphi: float = math.pi / 4,
              full: bool = True, rho0=None) -> ResultTable:
    """Time series of Bell quantities and observables after the drive turns on."""
    dims = spec.dims
    s_grid = np.asarray(s_grid, dtype=float)
    times = s_grid * spec.time_unit
    kernel = bell.default_kernel(dims)
    L = effective_liouvillian(spec)
    rho0 = initial_state(spec) if rho0 is None else rho0
    row_fn = state_row if full else bell_row

    def e_op(r):
        return dict(row_fn(r, dims, varphi, kernel), tail=fock.max_tail_population(r, dims))

    traj = lindblad.evolve(L, rho0, times, e_ops={"row": e_op}, store_states=False)
    rows = list(traj.expect["row"])
    cols = {"t_scaled": s_grid, "t": times}
    for key in rows[0]:
        cols[key] = [r[key] for r in rows]
    tail = float(np.max(cols["tail"]))
    _warn_tail(tail, "transient")
    win = violation_windows(s_grid, cols["B_CHSH_norm"])
    meta = provenance(spec, "transient", varphi=varphi, engine=traj.info,
                      violation_windows=win, max_tail=tail,
                      violation_to_end=bool(win and win[-1][1] == s_grid[-1]))
    return ResultTable(cols, meta)


# --- sweeps -------------------------------------------------------------------

SWEEP_AXES = ("t", "kappa", "E", "gamma0", "varphi", "N_thermal")
DEFAULT_BUDGET = 10_000


@dataclass(frozen=True)
class SweepPlan:
    model: models.ModelSpec
    axis1: tuple[str, tuple]
    axis2: tuple[str, tuple]
    outputs: tuple[str, ...] = ("B_CHSH_norm", "B_CH_norm")

    def __post_init__(self):
        for name, grid in (self.axis1, self.axis2):
            if name not in SWEEP_AXES:
                raise ValueError(f"unknown sweep axis {name!r}; allowed {SWEEP_AXES}")
            g = np.asarray(grid, dtype=float)
            if g.size == 0 or np.any(np.diff(g) <= 0):
                raise ValueError(f"grid for {name!r} must be nonempty and increasing")
        if self.axis1[0] == self.axis2[0]:
            raise ValueError("the two sweep axes must differ")
        object.__setattr__(self, "axis1", (self.axis1[0], tuple(float(v) for v in self.axis1[1])))
        object.__setattr__(self, "axis2", (self.axis2[0], tuple(float(v) for v in self.axis2[1])))

    @property
    def size(self) -> int:
        return len(self.axis1[1]) * len(self.axis2[1])


def _apply_param(spec, name, value):
    if name == "N_thermal":
        return replace(spec, N1=value, N2=value)
    return replace(spec, **{name: value})


def _sweep_job(args):
    """One point of the dynamical parameters; evaluates every t and varphi value."""
    spec, s_grid, varphis, time_unit = args
    dims = spec.dims
    kernel = bell.default_kernel(dims)
    try:
        L = effective_liouvillian(spec)
        rho0 = initial_state(spec)
        if s_grid is None:
            states = [lindblad.steady_state(L, rho0, "null-space")]
        else:
            traj = lindblad.evolve(L, rho0, np.asarray(s_grid) * time_unit)
            states = traj.states
        out = np.empty((len(states), len(varphis), 2))
        tail = max(fock.max_tail_population(rho, dims) for rho in states)
        for i, rho in enumerate(states):
            for j, v in enumerate(varphis):
                row = bell_row(rho, dims, v, kernel)
                out[i, j] = row["B_CHSH_norm"], row["B_CH_norm"]
        return out, None, tail
    except (lindblad.LindbladError, ArithmeticError, ValueError) as exc:
        n_t = 1 if s_grid is None else len(s_grid)
        return np.full((n_t, len(varphis), 2), np.nan), f"{type(exc).__name__}: {exc}", math.nan


def sweep(plan: SweepPlan, workers: int = 1, budget: int = DEFAULT_BUDGET) -> ResultTable:
    """Normalized Bell values over a 2D grid.

    The time axis (if any) is in units of gamma0/kappa^2 of the base model, so
    physical times are the same for every row of the sweep.
    """
    if plan.size > budget:
        raise BudgetExceeded(f"sweep has {plan.size} points, budget is {budget}")
    axes = dict([plan.axis1, plan.axis2])
    s_grid = axes.get("t")
    varphis = axes.get("varphi", (math.pi / 4,))
    dyn = [(n, g) for n, g in (plan.axis1, plan.axis2) if n not in ("t", "varphi")]
    combos = list(product(*[g for _, g in dyn])) if dyn else [()]
    jobs = []
    for combo in combos:
        spec = plan.model
        for (name, _), value in zip(dyn, combo):
            spec = _apply_param(spec, name, value)
        jobs.append((spec, s_grid, varphis, plan.model.time_unit))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_job, jobs))
    else:
        results = [_sweep_job(j) for j in jobs]

    # assemble in axis1-major order
    index = {combo: k for k, combo in enumerate(combos)}
    n1, n2 = plan.axis1[0], plan.axis2[0]
    cols = {n1: [], n2: [], "B_CHSH_norm": [], "B_CH_norm": []}
    errors = {}
    truncated = {repr(c): results[k][2] for c, k in index.items()
                 if results[k][2] > fock.TAIL_LIMIT}
    for v1 in plan.axis1[1]:
        for v2 in plan.axis2[1]:
            point = {n1: v1, n2: v2}
            combo = tuple(point[n] for n, _ in dyn)
            arr, err, _ = results[index[combo]]
            if err:
                errors[repr(combo)] = err
            ti = s_grid.index(point["t"]) if "t" in point else 0
            vi = varphis.index(point["varphi"]) if "varphi" in point else 0
            cols[n1].append(v1)
            cols[n2].append(v2)
            cols["B_CHSH_norm"].append(arr[ti, vi, 0])
            cols["B_CH_norm"].append(arr[ti, vi, 1])
    cols = {k: v for k, v in cols.items() if k in (n1, n2) or k in plan.outputs}
    meta = provenance(plan.model, "sweep",
                      grid={"axis1": [n1, list(plan.axis1[1])],
                            "axis2": [n2, list(plan.axis2[1])]},
                      errors=errors, truncated_points=truncated)
    if truncated:
        _warn_tail(max(truncated.values()), f"sweep ({len(truncated)} parameter points)")
    return ResultTable(cols, meta)


def grid_matrix(table: ResultTable, plan: SweepPlan, column: str) -> np.ndarray:
    """Reshape a sweep column to (len(axis2), len(axis1)) for plotting."""
    n1, n2 = len(plan.axis1[1]), len(plan.axis2[1])
    return table.columns[column].reshape(n1, n2).T


# --- optimal r and pump elimination --------------------------------------------

def chsh_argmax_r(r_lo: float = 0.9, r_hi: float = 1.4, step: float = 1e-3,
                  dim: int = 16, varphi: float = math.pi / 4) -> float:
    """Grid maximizer of B_CHSH over ideal steady states, from Fock-space binning."""
    dims = (dim, dim)
    kernel = bell.default_kernel(dims)
    angles = bell.parameterized_angles(varphi)
    rs = np.arange(r_lo, r_hi + 0.5 * step, step)
    vals = [bell.bell_chsh(models.analytic_steady_state(r, dims), dims, angles, kernel)
            for r in rs]
    return float(rs[int(np.argmax(vals))])


def optimal_r_report(kappa: float = models.FIG3_DEFAULTS["kappa"],
                     tolerance: float = 1e-10) -> dict:
    r_opt = bell.optimal_r(tolerance)
    grid = chsh_argmax_r()
    return {"r_opt": r_opt, "E_opt": models.e_opt(r_opt, kappa), "kappa": kappa,
            "r_grid_argmax": grid, "abs_diff": abs(grid - r_opt),
            "chsh_at_r_opt": bell.chsh_ideal(r_opt)}


ELIMINATION_DEFAULTS = dict(kappa=0.15, E=0.094, gamma0=3.0)
ELIMINATION_REFERENCES = ("effective", "consistent")
ELIMINATION_TOL = 0.05


def compare_elimination(spec: models.ModelSpec | None = None, pump_dim: int = 6,
                        s_max: float = 5.0, n_points: int = 51,
                        reference: str = "effective") -> dict:
    """Signal/idler observables of the full model (pump traced out) vs the effective model.

    ``reference="effective"`` uses ``effective_params``; ``"consistent"`` uses
    ``consistent_effective_params``. Deviations are the peak-normalized error of
    <n1> and the pointwise relative error of Var(x1 - x2).
    """
    if reference not in ELIMINATION_REFERENCES:
        raise ValueError(f"reference must be one of {ELIMINATION_REFERENCES}")
    spec = spec or models.ModelSpec(**ELIMINATION_DEFAULTS)
    two = spec.with_dims(*spec.dims[-2:])
    three = spec.with_dims(pump_dim, *two.dims)
    s = np.linspace(0, s_max, n_points)
    times = s * spec.time_unit
    dims2 = two.dims

    def reduced(rho):
        return fock.partial_trace(rho, three.dims, [1, 2])

    def row(rho2):
        return (obs.mean_number(rho2, dims2, 0), obs.two_mode_diff_variance(rho2, dims2))

    H3, c3 = models.three_mode_model(three)
    L3 = lindblad.build_liouvillian(H3, c3)
    rho3 = np.kron(fock.vacuum((pump_dim,)), initial_state(two))
    t3 = lindblad.evolve(L3, rho3, times, e_ops={"row": lambda r: row(reduced(r)),
                                                 "pump_tail": lambda r: fock.tail_population(r, three.dims, 0)},
                         store_states=False)
    params = (models.effective_params(two) if reference == "effective"
              else models.consistent_effective_params(two))
    t2 = lindblad.evolve(effective_liouvillian(two, params), initial_state(two), times,
                         e_ops={"row": row}, store_states=False)
    full = np.array([list(v) for v in t3.expect["row"]])
    eff = np.array([list(v) for v in t2.expect["row"]])
    n_dev = float(np.max(np.abs(full[:, 0] - eff[:, 0])) / np.max(np.abs(eff[:, 0])))
    v_dev = float(np.max(np.abs(full[:, 1] - eff[:, 1]) / np.abs(eff[:, 1])))
    return {"reference": reference, "passed": max(n_dev, v_dev) <= ELIMINATION_TOL,
            "t_scaled": s, "n1_full": full[:, 0], "n1_eff": eff[:, 0],
            "var_full": full[:, 1], "var_eff": eff[:, 1],
            "n1_rel_dev": n_dev, "var_rel_dev": v_dev,
            "pump_tail_max": float(np.max(t3.expect["pump_tail"])),
            "reduced_dim_full": t3.info["reduced_dim"]}
