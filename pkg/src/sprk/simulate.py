"""Numerical SPRK stepping and Monte Carlo convergence studies.

One step of an ``s``-stage SPRK method for a ``Q``-partitioned SDE is::

    H_i^(q)   = Y^(q) + sum_m sum_j Z_ij^(q,m) g_m^(q)(H_j)
    Y_new^(q) = Y^(q) + sum_m sum_i gamma_i^(q,m) g_m^(q)(H_i)

with tableau entries evaluated at ``(h, ΔW_m, J_(m,0))``.  Stage values are
computed in a structural order when the stage graph (refined by which
partitions each vector field reads) is acyclic, otherwise by fixed-point
iteration.  All arrays carry a leading path axis, so one call advances many
paths at once.
"""

from __future__ import annotations

import concurrent.futures
import csv
import hashlib
import io
import json
import math
import os
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from .tableau import Tableau

Array = np.ndarray
VectorField = Callable[[Sequence[Array]], Array]

STAGE_TOL = 1e-12
STAGE_MAX_ITER = 50
BATCH = 1024
WORKERS_ENV = "SPRK_WORKERS"


class SimulationError(RuntimeError):
    pass


class StageSolveError(SimulationError):
    def __init__(self, message: str, residual: float):
        self.residual = residual
        super().__init__(f"{message} (residual {residual:.3e})")


class StudyError(ValueError):
    pass


# --------------------------------------------------------------------------
# increments


@dataclass(frozen=True)
class IncrementSample:
    """``ΔW_m`` and ``J_(m,0) = ∫ (W_m(s) - W_m(t_n)) ds`` for one step.

    Both arrays have shape ``(..., M)``.
    """

    dW: Array
    J: Array

    @property
    def M(self) -> int:
        return self.dW.shape[-1]


def increment_cholesky(h: float) -> Array:
    """Lower Cholesky factor of ``[[h, h²/2], [h²/2, h³/3]]``."""
    r = math.sqrt(h)
    return np.array([[r, 0.0], [h * r / 2, h * r / (2 * math.sqrt(3))]])


def sample_increments(h: float, M: int, rng: np.random.Generator,
                      size: int | tuple[int, ...] = ()) -> IncrementSample:
    """Draw jointly Gaussian ``(ΔW, J)`` per noise, independent across noises."""
    if h <= 0:
        raise ValueError(f"step size must be positive, got {h}")
    shape = (size,) if isinstance(size, int) else tuple(size)
    z = rng.standard_normal(shape + (M, 2))
    L = increment_cholesky(h)
    dW = z[..., 0] * L[0, 0]
    J = z[..., 0] * L[1, 0] + z[..., 1] * L[1, 1]
    return IncrementSample(dW, J)


def aggregate_increments(inc: IncrementSample, factor: int, h_fine: float) -> IncrementSample:
    """Coarsen increments on axis ``-2`` (steps) by an integer ``factor``.

    ``ΔW = Σ ΔW_i`` and ``J = Σ [J_i + (t_end - t_{i+1}) ΔW_i]`` over the
    fine steps of each coarse step.
    """
    dW, J = inc.dW, inc.J
    n = dW.shape[-2]
    if n % factor:
        raise ValueError(f"{n} fine steps are not divisible by {factor}")
    shape = dW.shape[:-2] + (n // factor, factor, dW.shape[-1])
    dW, J = dW.reshape(shape), J.reshape(shape)
    lag = (factor - 1 - np.arange(factor))[:, None] * h_fine
    return IncrementSample(dW.sum(axis=-2), (J + lag * dW).sum(axis=-2))


# --------------------------------------------------------------------------
# problems


@dataclass
class SdeProblem:
    """Partitioned SDE ``dX^(q) = sum_m g_m^(q)(X) ⋆dW_m``.

    ``fields[(q, m)]`` maps the list of partition arrays (each of shape
    ``(n, d_q)``) to an ``(n, d_q)`` array; absent keys are zero fields.
    ``depends[(q, m)]`` lists the partitions that field reads (all if absent).
    """

    name: str
    Q: int
    M: int
    dims: tuple[int, ...]
    fields: dict[tuple[int, int], VectorField]
    x0: tuple[Array, ...]
    mode: str = "strat"
    depends: dict[tuple[int, int], frozenset[int]] = field(default_factory=dict)
    invariant: Callable[[Sequence[Array]], Array] | None = None
    functional: Callable[[Sequence[Array]], Array] | None = None
    params: dict = field(default_factory=dict)

    def reads(self, q: int, m: int) -> frozenset[int]:
        return self.depends.get((q, m), frozenset(range(1, self.Q + 1)))

    def initial(self, paths: int) -> list[Array]:
        return [np.tile(np.asarray(x, dtype=float), (paths, 1)) for x in self.x0]

    def without_noise(self) -> SdeProblem:
        return SdeProblem(self.name + "-deterministic", self.Q, self.M, self.dims,
                          {k: f for k, f in self.fields.items() if k[1] == 0}, self.x0,
                          self.mode, self.depends, self.invariant, self.functional,
                          dict(self.params))


def _const_field(vec) -> VectorField:
    v = np.asarray(vec, dtype=float)
    return lambda xs: np.broadcast_to(v, (xs[0].shape[0], v.size)).copy()


def langevin(omega: float = 1.0, alpha: float = 0.5, beta: float = 0.25,
             r0: float = 1.0, v0: float = 0.0, partitions: int = 3) -> SdeProblem:
    """``dR = V dt``, ``dV = (-ω² R - αV) dt + β dW``; partition 3 holds time."""
    if partitions not in (2, 3):
        raise ValueError("langevin supports 2 or 3 partitions")
    w2 = omega * omega
    fields = {
        (1, 0): lambda xs: xs[1].copy(),
        (2, 0): lambda xs: -w2 * xs[0] - alpha * xs[1],
        (2, 1): _const_field([beta]),
    }
    depends = {(1, 0): frozenset({2}), (2, 0): frozenset({1, 2}), (2, 1): frozenset()}
    x0 = [np.array([r0]), np.array([v0])]
    if partitions == 3:
        fields[(3, 0)] = _const_field([1.0])
        depends[(3, 0)] = frozenset()
        x0.append(np.array([0.0]))
    return SdeProblem(
        "langevin", partitions, 1, (1,) * partitions, fields, tuple(x0), "ito", depends,
        functional=lambda xs: 0.5 * xs[1][:, 0] ** 2 + 0.5 * w2 * xs[0][:, 0] ** 2,
        params=dict(omega=omega, alpha=alpha, beta=beta, r0=r0, v0=v0, partitions=partitions))


def synchrotron(omega: float = 1.0, lam: float = 0.5, p0: float = 0.0,
                x0: float = 1.0) -> SdeProblem:
    """``dp = -ω² sin x dt - λ ω² cos x ∘dW``, ``dx = p dt``; partitions (p, x)."""
    w2 = omega * omega
    fields = {
        (1, 0): lambda xs: -w2 * np.sin(xs[1]),
        (1, 1): lambda xs: -lam * w2 * np.cos(xs[1]),
        (2, 0): lambda xs: xs[0].copy(),
    }
    depends = {(1, 0): frozenset({2}), (1, 1): frozenset({2}), (2, 0): frozenset({1})}
    return SdeProblem(
        "synchrotron", 2, 1, (1, 1), fields, (np.array([p0]), np.array([x0])), "strat",
        depends, functional=lambda xs: xs[0][:, 0] ** 2,
        params=dict(omega=omega, lam=lam, p0=p0, x0=x0))


# Illustrative values in the range used for this model in the literature.
JANSEN_RIT_DEFAULTS = dict(A=3.25, B=22.0, a=100.0, b=50.0, C=135.0, nu_max=5.0,
                           nu0=6.0, r=0.56, mu3=0.0, mu4=220.0, mu5=0.0,
                           sigma3=10.0, sigma4=1000.0, sigma5=10.0)


def jansen_rit(**overrides) -> SdeProblem:
    """Six-equation neural mass model; positions and velocities as two partitions."""
    unknown = set(overrides) - set(JANSEN_RIT_DEFAULTS)
    if unknown:
        raise ValueError(f"unknown jansen_rit parameters: {sorted(unknown)}")
    p = {**JANSEN_RIT_DEFAULTS, **overrides}
    A, B, a, b, C = p["A"], p["B"], p["a"], p["b"], p["C"]
    C1, C2, C3, C4 = C, 0.8 * C, 0.25 * C, 0.25 * C

    def sig(x):
        return p["nu_max"] / (1.0 + np.exp(p["r"] * (p["nu0"] - x)))

    def drift(xs):
        x, v = xs
        out = np.empty_like(v)
        out[:, 0] = A * a * (p["mu3"] + sig(x[:, 1] - x[:, 2])) - 2 * a * v[:, 0] - a * a * x[:, 0]
        out[:, 1] = A * a * (p["mu4"] + C2 * sig(C1 * x[:, 0])) - 2 * a * v[:, 1] - a * a * x[:, 1]
        out[:, 2] = B * b * (p["mu5"] + C4 * sig(C3 * x[:, 0])) - 2 * b * v[:, 2] - b * b * x[:, 2]
        return out

    fields = {(1, 0): lambda xs: xs[1].copy(), (2, 0): drift}
    depends = {(1, 0): frozenset({2}), (2, 0): frozenset({1, 2})}
    for m, key in enumerate(("sigma3", "sigma4", "sigma5"), start=1):
        e = np.zeros(3)
        e[m - 1] = p[key]
        fields[(2, m)] = _const_field(e)
        depends[(2, m)] = frozenset()
    return SdeProblem("jansen_rit", 2, 3, (3, 3), fields, (np.zeros(3), np.zeros(3)), "ito",
                      depends, functional=lambda xs: xs[0][:, 1] - xs[0][:, 2], params=p)


def bilinear_skew(M: int = 1, r: Sequence[float] | None = None,
                  s: Sequence[float] | None = None) -> SdeProblem:
    """``dX1 = Σ R_m X2 ∘dW_m``, ``dX2 = Σ S_m X1 ∘dW_m`` with skew 2×2 ``R_m, S_m``.

    ``R_m = r_m [[0, 1], [-1, 0]]`` and likewise for ``S_m``; ``X1·X2`` is
    conserved.  ``m = 0`` is the drift.
    """
    r = list(r) if r is not None else [1.0] + [0.5 + 0.25 * k for k in range(M)]
    s = list(s) if s is not None else [-0.75] + [0.3 - 0.2 * k for k in range(M)]
    if len(r) != M + 1 or len(s) != M + 1:
        raise ValueError(f"need {M + 1} coefficients for r and s")
    J2 = np.array([[0.0, 1.0], [-1.0, 0.0]])
    fields, depends = {}, {}
    for m in range(M + 1):
        Rm, Sm = r[m] * J2, s[m] * J2
        fields[(1, m)] = (lambda R: lambda xs: xs[1] @ R.T)(Rm)
        fields[(2, m)] = (lambda S: lambda xs: xs[0] @ S.T)(Sm)
        depends[(1, m)] = frozenset({2})
        depends[(2, m)] = frozenset({1})
    return SdeProblem(
        "bilinear_skew", 2, M, (2, 2), fields, (np.array([1.0, 0.0]), np.array([0.5, 0.5])),
        "strat", depends, invariant=lambda xs: np.sum(xs[0] * xs[1], axis=1),
        functional=lambda xs: np.sum(xs[0] ** 2, axis=1), params=dict(M=M, r=r, s=s))


PROBLEMS: dict[str, Callable[..., SdeProblem]] = {
    "langevin": langevin,
    "jansen_rit": jansen_rit,
    "synchrotron": synchrotron,
    "bilinear_skew": bilinear_skew,
}


def builtin_problem(name: str, **params) -> SdeProblem:
    try:
        factory = PROBLEMS[name]
    except KeyError:
        raise KeyError(f"unknown problem {name!r}; choose from {', '.join(PROBLEMS)}") from None
    return factory(**params)


# --------------------------------------------------------------------------
# compiled tableaux and the stepper


@dataclass(frozen=True)
class _EntryCode:
    """Entry as ``Σ c h^k`` + ``Σ c h^k ΔW_m`` + ``Σ c h^k J_m`` term lists."""

    det: tuple[tuple[float, int], ...]
    dW: tuple[tuple[float, int, int], ...]
    J: tuple[tuple[float, int, int], ...]

    def at(self, h: float):
        a = sum(c * h ** k for c, k in self.det)
        b: dict[int, float] = {}
        for c, k, m in self.dW:
            b[m] = b.get(m, 0.0) + c * h ** k
        j: dict[int, float] = {}
        for c, k, m in self.J:
            j[m] = j.get(m, 0.0) + c * h ** k
        return a, b, j


def _compile_entry(e) -> _EntryCode:
    det, dW, J = [], [], []
    for (k, w), c in e.items():
        if not w:
            det.append((float(c), k))
        elif len(w) == 1:
            dW.append((float(c), k, w[0]))
        else:
            J.append((float(c), k, w[0]))
    return _EntryCode(tuple(det), tuple(dW), tuple(J))


@lru_cache(maxsize=64)
def _compiled(tab: Tableau):
    Z = {(q, m, i, j): _compile_entry(e) for (q, m), rows in tab.Z.items()
         for i, row in enumerate(rows) for j, e in enumerate(row) if e}
    g = {(q, m, i): _compile_entry(e) for (q, m), vec in tab.gamma.items()
         for i, e in enumerate(vec) if e}
    return Z, g


def _value(spec, dW: Array, J: Array):
    a, b, j = spec
    out = a
    for m, c in b.items():
        out = out + c * dW[:, m - 1]
    for m, c in j.items():
        out = out + c * J[:, m - 1]
    if np.isscalar(out):
        return out
    return out[:, None]


class Stepper:
    """Advances ``(paths, d_q)`` state arrays by one SPRK step."""

    def __init__(self, tab: Tableau, prob: SdeProblem, tol: float = STAGE_TOL,
                 max_iter: int = STAGE_MAX_ITER):
        if tab.Q != prob.Q:
            raise SimulationError(f"tableau has Q={tab.Q} but problem has Q={prob.Q}")
        if prob.M > tab.M:
            raise SimulationError(f"tableau covers M={tab.M} noises, problem needs {prob.M}")
        self.tab, self.prob = tab, prob
        self.tol, self.max_iter = tol, max_iter
        Zc, gc = _compiled(tab)
        active = set(prob.fields)
        self.Z_terms = {}
        for (q, m, i, j), code in Zc.items():
            if (q, m) in active:
                self.Z_terms.setdefault((q, i), []).append((m, j, code))
        self.g_terms = {}
        for (q, m, i), code in gc.items():
            if (q, m) in active:
                self.g_terms.setdefault(q, []).append((m, i, code))
        self.order = self._stage_order()
        self._h = None

    def _stage_order(self) -> list[tuple[int, int]] | None:
        nodes = [(q, i) for q in range(1, self.tab.Q + 1) for i in range(self.tab.s)]
        deps = {n: set() for n in nodes}
        for (q, i), terms in self.Z_terms.items():
            for m, j, _ in terms:
                for q2 in self.prob.reads(q, m):
                    deps[(q, i)].add((q2, j))
        order, done = [], set()
        while len(order) < len(nodes):
            ready = [n for n in nodes if n not in done and deps[n] <= done]
            if not ready:
                return None
            order.extend(ready)
            done.update(ready)
        return order

    @property
    def explicit(self) -> bool:
        return self.order is not None

    def _prepare(self, h: float):
        if self._h != h:
            self._Zh = {key: [(m, j, code.at(h)) for m, j, code in terms]
                        for key, terms in self.Z_terms.items()}
            self._gh = {q: [(m, i, code.at(h)) for m, i, code in terms]
                        for q, terms in self.g_terms.items()}
            self._h = h

    def step(self, y: Sequence[Array], h: float, inc: IncrementSample) -> list[Array]:
        if h == 0:
            return [np.array(x, copy=True) for x in y]
        self._prepare(h)
        n = y[0].shape[0]
        dW = np.broadcast_to(inc.dW, (n, inc.M)) if inc.M else np.zeros((n, 0))
        J = np.broadcast_to(inc.J, (n, inc.M)) if inc.M else np.zeros((n, 0))
        Zv = {key: [(m, j, _value(spec, dW, J)) for m, j, spec in terms]
              for key, terms in self._Zh.items()}
        s, Q = self.tab.s, self.tab.Q
        H = [[y[q] for _ in range(s)] for q in range(Q)]
        fields = self.prob.fields
        if self.order is not None:
            G: dict = {}

            def g(q, m, j):
                key = (q, m, j)
                if key not in G:
                    G[key] = fields[(q, m)]([H[p][j] for p in range(Q)])
                return G[key]

            for q, i in self.order:
                acc = y[q - 1]
                for m, j, val in Zv.get((q, i), ()):
                    acc = acc + val * g(q, m, j)
                H[q - 1][i] = acc
        else:
            G = self._fixed_point(y, H, Zv)

            def g(q, m, j):
                return G[(q, m, j)]

        out = []
        for q in range(1, Q + 1):
            acc = y[q - 1]
            for m, i, spec in self._gh.get(q, ()):
                acc = acc + _value(spec, dW, J) * g(q, m, i)
            out.append(acc)
        if not all(np.all(np.isfinite(x)) for x in out):
            raise SimulationError("non-finite state produced by a step")
        return out

    def _fixed_point(self, y, H, Zv):
        Q, s = self.tab.Q, self.tab.s
        fields = self.prob.fields
        needed = {(q, m, j) for (q, i), terms in Zv.items() for m, j, _ in terms}
        needed |= {(q, m, i) for q, terms in self._gh.items() for m, i, _ in terms}
        residual = math.inf
        for _ in range(self.max_iter):
            G = {(q, m, j): fields[(q, m)]([H[p][j] for p in range(Q)]) for q, m, j in needed}
            residual = 0.0
            newH = [[y[q] for _ in range(s)] for q in range(Q)]
            for (q, i), terms in Zv.items():
                acc = y[q - 1]
                for m, j, val in terms:
                    acc = acc + val * G[(q, m, j)]
                diff = np.max(np.abs(acc - H[q - 1][i]) / (1.0 + np.abs(acc)), initial=0.0)
                residual = max(residual, float(diff))
                newH[q - 1][i] = acc
            H[:] = newH
            if residual <= self.tol:
                return {(q, m, j): fields[(q, m)]([H[p][j] for p in range(Q)])
                        for q, m, j in needed}
        raise StageSolveError(f"stage iteration did not converge in {self.max_iter} steps",
                              residual)


def step(tab: Tableau, prob: SdeProblem, y: Sequence[Array], h: float,
         inc: IncrementSample) -> list[Array]:
    """One step; ``y`` items may be 1-D (single path) or ``(paths, d_q)``."""
    single = np.ndim(y[0]) == 1
    ys = [np.atleast_2d(np.asarray(x, dtype=float)) for x in y]
    dW, J = np.atleast_2d(inc.dW), np.atleast_2d(inc.J)
    out = Stepper(tab, prob).step(ys, h, IncrementSample(dW, J))
    return [x[0] for x in out] if single else out


def integrate(stepper: Stepper, y0: Sequence[Array], h: float, inc: IncrementSample,
              observe: Callable[[Sequence[Array]], Array] | None = None):
    """Run all steps in ``inc`` (shape ``(paths, steps, M)``).

    Returns the final state, and the observed values per step when
    ``observe`` is given.
    """
    y = list(y0)
    seen = []
    for n in range(inc.dW.shape[1]):
        y = stepper.step(y, h, IncrementSample(inc.dW[:, n], inc.J[:, n]))
        if observe is not None:
            seen.append(observe(y))
    return y, (np.stack(seen, axis=1) if observe is not None else None)


# --------------------------------------------------------------------------
# studies


def _workers(workers: int | None) -> int:
    if workers is not None:
        return max(1, int(workers))
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def _map_batches(fn, paths: int, seed: int, workers: int | None, batch: int = BATCH):
    """Apply ``fn(rng, n)`` to fixed-size batches; results in batch order."""
    sizes = [min(batch, paths - k) for k in range(0, paths, batch)]
    jobs = [(np.random.default_rng([seed, b]), n) for b, n in enumerate(sizes)]
    w = _workers(workers)
    if w == 1:
        return [fn(rng, n) for rng, n in jobs]
    with concurrent.futures.ThreadPoolExecutor(max_workers=w) as pool:
        return list(pool.map(lambda job: fn(*job), jobs))


def _steps(T: float, h: float) -> int:
    n = round(T / h)
    if n < 1 or abs(n * h - T) > 1e-9 * max(1.0, T):
        raise StudyError(f"T={T} is not an integer multiple of h={h}")
    return n


def dyadic_steps(h0: float, levels: int) -> list[float]:
    return [h0 / 2 ** k for k in range(levels)]


@dataclass
class ConvergenceResult:
    kind: str
    tableau: str
    problem: str
    h: list[float]
    errors: list[float]
    stderr: list[float]
    paths: int
    seed: int
    slope: float | None
    slope_halfwidth: float | None
    status: str = "ok"
    fitted: list[bool] = field(default_factory=list)
    params: dict = field(default_factory=dict)
    tableau_hash: str = ""

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["h", "error", "stderr", "paths"])
        for h, e, s in zip(self.h, self.errors, self.stderr):
            w.writerow([repr(h), repr(e), repr(s), self.paths])
        return buf.getvalue()

    def manifest(self) -> dict:
        return {"kind": self.kind, "tableau": self.tableau, "tableau_hash": self.tableau_hash,
                "problem": self.problem, "seed": self.seed, "paths": self.paths,
                "params": self.params, "h": self.h, "errors": self.errors,
                "stderr": self.stderr, "slope": self.slope,
                "slope_halfwidth": self.slope_halfwidth, "status": self.status,
                "fitted": self.fitted}

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(self.manifest(), indent=indent, default=str)

    def slope_within(self, target: float, tol: float) -> bool:
        return self.slope is not None and abs(self.slope - target) <= tol


def tableau_hash(tab: Tableau) -> str:
    return hashlib.sha256(tab.to_json(indent=None).encode()).hexdigest()[:16]


def fit_slope(h: Sequence[float], err: Sequence[float]) -> tuple[float, float]:
    """Least-squares slope of ``log2 err`` against ``log2 h`` and its 95% half-width."""
    if len(h) < 2:
        raise StudyError("need at least two points to fit a slope")
    x, y = np.log2(np.asarray(h)), np.log2(np.asarray(err))
    res = stats.linregress(x, y)
    if len(h) == 2:
        return float(res.slope), math.inf
    return float(res.slope), float(stats.t.ppf(0.975, len(h) - 2) * res.stderr)


def _check_levels(h_list: Sequence[float]) -> list[float]:
    h_list = [float(h) for h in h_list]
    if len(h_list) < 3:
        raise StudyError("a convergence study needs at least 3 step sizes")
    for a, b in zip(h_list, h_list[1:]):
        if not math.isclose(a, 2 * b, rel_tol=1e-12):
            raise StudyError("step sizes must halve from one level to the next")
    return h_list


def _coupled_finals(tab, prob, T, h_list, h_ref, rng, n):
    """Final states for each coarse ``h`` and the reference, on shared paths."""
    stepper = Stepper(tab, prob)
    n_ref = _steps(T, h_ref)
    fine = sample_increments(h_ref, prob.M, rng, size=(n, n_ref))
    y0 = prob.initial(n)
    ref, _ = integrate(stepper, y0, h_ref, fine)
    finals = []
    for h in h_list:
        inc = aggregate_increments(fine, round(h / h_ref), h_ref)
        y, _ = integrate(stepper, y0, h, inc)
        finals.append(y)
    return finals, ref


def strong_study(tab: Tableau, prob: SdeProblem, T: float, h_list: Sequence[float],
                 paths: int, seed: int = 0, workers: int | None = None) -> ConvergenceResult:
    """Root-mean-square endpoint error against the same method at ``min(h)/4``."""
    h_list = _check_levels(h_list)
    h_ref = h_list[-1] / 4

    def batch(rng, n):
        finals, ref = _coupled_finals(tab, prob, T, h_list, h_ref, rng, n)
        sq = [sum(np.sum((a - b) ** 2, axis=1) for a, b in zip(y, ref)) for y in finals]
        return [(math.fsum(x), math.fsum(x * x)) for x in sq]

    parts = _map_batches(batch, paths, seed, workers)
    errors, stderr = [], []
    for k in range(len(h_list)):
        s1 = math.fsum(p[k][0] for p in parts) / paths
        s2 = math.fsum(p[k][1] for p in parts) / paths
        rms = math.sqrt(s1)
        var = max(s2 - s1 * s1, 0.0)
        errors.append(rms)
        stderr.append(math.sqrt(var / paths) / (2 * rms) if rms > 0 else 0.0)
    if min(errors) <= 0:
        return ConvergenceResult("strong", tab.name, prob.name, h_list, errors, stderr, paths,
                                 seed, None, None, "exact", [False] * len(h_list),
                                 dict(prob.params, T=T), tableau_hash(tab))
    slope, hw = fit_slope(h_list, errors)
    return ConvergenceResult("strong", tab.name, prob.name, h_list, errors, stderr, paths, seed,
                             slope, hw, "ok", [True] * len(h_list), dict(prob.params, T=T),
                             tableau_hash(tab))


def weak_study(tab: Tableau, prob: SdeProblem, T: float, h_list: Sequence[float],
               paths: int, seed: int = 0, f: Callable | None = None,
               workers: int | None = None, noise_factor: float = 3.0) -> ConvergenceResult:
    """``|E f(Y_N(h)) - E f(Y_N(h_ref))|`` from paired differences on shared paths.

    Points whose error is below ``noise_factor`` standard errors are treated
    as noise; the slope is fitted on the coarse-to-fine run of points above
    that floor and refused (``slope=None``, status ``noise_floor``) if fewer
    than three remain.
    """
    h_list = _check_levels(h_list)
    f = f or prob.functional
    if f is None:
        raise StudyError(f"problem {prob.name!r} has no default functional")
    h_ref = h_list[-1] / 4

    def batch(rng, n):
        finals, ref = _coupled_finals(tab, prob, T, h_list, h_ref, rng, n)
        fr = f(ref)
        diffs = [f(y) - fr for y in finals]
        return [(math.fsum(d), math.fsum(d * d)) for d in diffs]

    parts = _map_batches(batch, paths, seed, workers)
    errors, stderr = [], []
    for k in range(len(h_list)):
        s1 = math.fsum(p[k][0] for p in parts) / paths
        s2 = math.fsum(p[k][1] for p in parts) / paths
        errors.append(abs(s1))
        stderr.append(math.sqrt(max(s2 - s1 * s1, 0.0) / max(paths - 1, 1)))
    meta = dict(prob.params, T=T)
    if max(errors) == 0:
        return ConvergenceResult("weak", tab.name, prob.name, h_list, errors, stderr, paths,
                                 seed, None, None, "exact", [False] * len(h_list), meta,
                                 tableau_hash(tab))
    fitted = []
    for e, s in zip(errors, stderr):
        if fitted and not fitted[-1]:
            fitted.append(False)
        else:
            fitted.append(e > noise_factor * s)
    use = [k for k, ok in enumerate(fitted) if ok]
    if len(use) < 3:
        return ConvergenceResult("weak", tab.name, prob.name, h_list, errors, stderr, paths,
                                 seed, None, None, "noise_floor", fitted, meta,
                                 tableau_hash(tab))
    slope, hw = fit_slope([h_list[k] for k in use], [errors[k] for k in use])
    status = "ok" if len(use) == len(h_list) else "noise_floor"
    return ConvergenceResult("weak", tab.name, prob.name, h_list, errors, stderr, paths, seed,
                             slope, hw, status, fitted, meta, tableau_hash(tab))


@dataclass
class DriftResult:
    tableau: str
    problem: str
    h: float
    T: float
    paths: int
    seed: int
    max_drift: float
    mean_drift: float
    final_mean_abs: float
    per_path: Array

    def manifest(self) -> dict:
        return {"kind": "invariant", "tableau": self.tableau, "problem": self.problem,
                "h": self.h, "T": self.T, "paths": self.paths, "seed": self.seed,
                "max_drift": self.max_drift, "mean_drift": self.mean_drift,
                "final_mean_abs": self.final_mean_abs}

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(self.manifest(), indent=indent)

    def to_csv(self) -> str:
        return ("h,max_drift,mean_drift,final_mean_abs,paths\n"
                f"{self.h!r},{self.max_drift!r},{self.mean_drift!r},"
                f"{self.final_mean_abs!r},{self.paths}\n")


def invariant_drift(tab: Tableau, prob: SdeProblem, T: float, h: float, paths: int,
                    seed: int = 0, workers: int | None = None) -> DriftResult:
    """Per-path ``max_n |I(Y_n) - I(y0)|`` for a problem with an invariant."""
    if prob.invariant is None:
        raise StudyError(f"problem {prob.name!r} has no invariant")
    n_steps = _steps(T, h)

    def batch(rng, n):
        stepper = Stepper(tab, prob)
        y0 = prob.initial(n)
        I0 = prob.invariant(y0)
        inc = sample_increments(h, prob.M, rng, size=(n, n_steps))
        _, seen = integrate(stepper, y0, h, inc, observe=lambda y: prob.invariant(y) - I0)
        return np.max(np.abs(seen), axis=1), np.abs(seen[:, -1])

    parts = _map_batches(batch, paths, seed, workers)
    per_path = np.concatenate([p[0] for p in parts])
    final = np.concatenate([p[1] for p in parts])
    return DriftResult(tab.name, prob.name, h, T, paths, seed, float(per_path.max()),
                       math.fsum(per_path) / paths, math.fsum(final) / paths, per_path)


def simulate_paths(tab: Tableau, prob: SdeProblem, T: float, h: float, paths: int,
                   seed: int = 0) -> list[Array]:
    """Final states of independent paths (batched substreams as in the studies)."""
    n_steps = _steps(T, h)

    def batch(rng, n):
        inc = sample_increments(h, prob.M, rng, size=(n, n_steps))
        y, _ = integrate(Stepper(tab, prob), prob.initial(n), h, inc)
        return y

    parts = _map_batches(batch, paths, seed, None)
    return [np.concatenate([p[q] for p in parts]) for q in range(prob.Q)]


__all__ = [
    "IncrementSample", "sample_increments", "aggregate_increments", "increment_cholesky",
    "SdeProblem", "builtin_problem", "langevin", "synchrotron", "jansen_rit", "bilinear_skew",
    "Stepper", "step", "integrate", "strong_study", "weak_study", "invariant_drift",
    "ConvergenceResult", "DriftResult", "fit_slope", "dyadic_steps", "simulate_paths",
    "SimulationError", "StageSolveError", "StudyError",
]
