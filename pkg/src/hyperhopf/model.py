"""System datum for ``w du/dt + a(x, lam) du/dx + b(x, lam, u) = 0`` with
reflection boundary conditions, plus validation and derivative tensors."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.optimize import brentq

from . import expr as ex


class SpecError(ValueError):
    """Malformed system description."""


HYPOTHESES = ("smoothness", "nonvanishing_speed", "distinct_speeds", "trivial_solution")


class HypothesisViolation(Exception):
    def __init__(self, violation: "Violation"):
        self.violation = violation
        super().__init__(str(violation))


@dataclass(frozen=True)
class Violation:
    hypothesis: str  # one of HYPOTHESES
    message: str
    x: float | None = None
    component: tuple[int, ...] = ()

    def __str__(self) -> str:
        where = f" at x={self.x:.6g}" if self.x is not None else ""
        return f"hypothesis {self.hypothesis} violated{where}: {self.message}"


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...]
    grid_points: int

    @property
    def ok(self) -> bool:
        return not self.violations

    @property
    def first(self) -> Violation | None:
        return self.violations[0] if self.violations else None

    def raise_if_invalid(self) -> None:
        if self.violations:
            raise HypothesisViolation(self.violations[0])


def _u(k: int) -> str:
    return f"u{k + 1}"


@dataclass(frozen=True, eq=False)
class SystemSpec:
    """Problem datum.  Component indices are 0-based in code.

    ``anchor`` optionally fixes the eigenfunction scale: ``(j, x)`` means the
    normalised eigenfunction has ``v_j(x) = 1``.
    """

    n: int
    m: int
    speeds: tuple
    rhs: tuple
    reflection: np.ndarray
    params: Mapping[str, float] = field(default_factory=dict)
    name: str = "system"
    anchor: tuple[int, float] | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.n < 1 or not 1 <= self.m <= self.n:
            raise SpecError(f"need n >= 1 and 1 <= m <= n, got n={self.n}, m={self.m}")
        if len(self.speeds) != self.n or len(self.rhs) != self.n:
            raise SpecError("speeds and rhs must have n entries each")
        r = np.asarray(self.reflection, dtype=float)
        if r.shape != (self.n, self.n):
            raise SpecError(f"reflection matrix must be {self.n}x{self.n}")
        for j, k in itertools.product(range(self.n), repeat=2):
            allowed = (j < self.m <= k) or (k < self.m <= j)
            if not allowed and r[j, k] != 0.0:
                raise SpecError(
                    f"reflection entry r[{j + 1}][{k + 1}]={r[j, k]} lies outside the permitted blocks"
                )
        object.__setattr__(self, "reflection", r)
        object.__setattr__(self, "params", dict(self.params))
        speed_vars = {"x", "lambda", *self.params}
        rhs_vars = speed_vars | {_u(k) for k in range(self.n)}
        for j, a in enumerate(self.speeds):
            extra = ex.free_variables(a) - speed_vars
            if extra:
                raise SpecError(f"speed a{j + 1} may depend on x and lambda only, found {sorted(extra)}")
        for j, b in enumerate(self.rhs):
            extra = ex.free_variables(b) - rhs_vars
            if extra:
                raise SpecError(f"rhs b{j + 1} has unknown variables {sorted(extra)}")
        if self.anchor is not None:
            j, x = self.anchor
            if not (0 <= j < self.n and 0.0 <= x <= 1.0):
                raise SpecError(f"bad anchor {self.anchor}")

    def __getstate__(self):
        # compiled functions do not pickle; they are rebuilt on demand
        state = dict(self.__dict__)
        state["_cache"] = {}
        return state

    def __setstate__(self, state):
        self.__dict__.update(state)

    @classmethod
    def from_strings(
        cls,
        n: int,
        m: int,
        speeds: Sequence[str],
        rhs: Sequence[str],
        reflection,
        params: Mapping[str, float] | None = None,
        name: str = "system",
        anchor: tuple[int, float] | None = None,
    ) -> "SystemSpec":
        params = dict(params or {})
        speed_vars = ["x", "lambda", *params]
        rhs_vars = speed_vars + [_u(k) for k in range(n)]
        return cls(
            n=n, m=m,
            speeds=tuple(ex.parse(s, speed_vars) for s in speeds),
            rhs=tuple(ex.parse(s, rhs_vars) for s in rhs),
            reflection=np.asarray(reflection, dtype=float),
            params=params, name=name, anchor=anchor,
        )

    # ----------------------------------------------------------- symbolic

    @property
    def unknowns(self) -> list[str]:
        return [_u(k) for k in range(self.n)]

    def derivative(self, j: int, *wrt: str) -> ex.Expr:
        """Symbolic derivative of b_j with respect to the given variables."""
        key = ("d", j, wrt)
        if key not in self._cache:
            e = self.rhs[j]
            for v in wrt:
                e = ex.differentiate(e, v)
            self._cache[key] = e
        return self._cache[key]

    def _at_zero(self, e: ex.Expr) -> Callable:
        """Compile ``e`` restricted to u = 0 as a function of (x, lambda)."""
        zero = {u: 0.0 for u in self.unknowns}
        return ex.compile_expr(ex.substitute(e, zero), ["x", "lambda"], self.params)

    def _fn(self, key, build: Callable[[], Callable]) -> Callable:
        if key not in self._cache:
            self._cache[key] = build()
        return self._cache[key]

    def speed_fn(self, j: int) -> Callable:
        return self._fn(("a", j), lambda: ex.compile_expr(self.speeds[j], ["x", "lambda"], self.params))

    def dlam_speed_fn(self, j: int) -> Callable:
        return self._fn(("dla", j), lambda: ex.compile_expr(
            ex.differentiate(self.speeds[j], "lambda"), ["x", "lambda"], self.params))

    def jac_fn(self, j: int, k: int) -> Callable:
        return self._fn(("b1", j, k), lambda: self._at_zero(self.derivative(j, _u(k))))

    def dlam_jac_fn(self, j: int, k: int) -> Callable:
        return self._fn(("dlb1", j, k), lambda: self._at_zero(self.derivative(j, _u(k), "lambda")))

    def tensor2_fn(self, j: int, k: int, l: int) -> Callable:
        k, l = sorted((k, l))
        return self._fn(("b2", j, k, l), lambda: self._at_zero(self.derivative(j, _u(k), _u(l))))

    def tensor3_fn(self, j: int, k: int, l: int, r: int) -> Callable:
        k, l, r = sorted((k, l, r))
        return self._fn(("b3", j, k, l, r), lambda: self._at_zero(self.derivative(j, _u(k), _u(l), _u(r))))

    def rhs_fn(self, j: int) -> Callable:
        """b_j as a compiled function of (x, lambda, u1, ..., un)."""
        return self._fn(("b", j), lambda: ex.compile_expr(
            self.rhs[j], ["x", "lambda", *self.unknowns], self.params))

    # ---------------------------------------------------------- numerical

    def speeds_at(self, x, lam: float) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.array([self.speed_fn(j)(x, lam) for j in range(self.n)])

    def jacobian_at(self, x, lam: float) -> np.ndarray:
        """Matrix d b_j / d u_k at u = 0, shape (n, n, *x.shape)."""
        x = np.asarray(x, dtype=float)
        return np.array([[self.jac_fn(j, k)(x, lam) for k in range(self.n)] for j in range(self.n)])

    def rhs_at(self, x, lam: float, u: Sequence) -> np.ndarray:
        return np.array([self.rhs_fn(j)(x, lam, *u) for j in range(self.n)])

    def orientation(self, lam: float, grid_points: int = 64) -> int:
        """+1 if the reflection conditions prescribe inflow data in forward
        time, -1 if they do so in reversed time, 0 for mixed directions."""
        a = self.speeds_at(np.linspace(0.0, 1.0, grid_points), lam)
        head, tail = a[: self.m], a[self.m:]
        if np.all(head > 0) and np.all(tail < 0):
            return 1
        if np.all(head < 0) and np.all(tail > 0):
            return -1
        return 0

    def with_params(self, **params: float) -> "SystemSpec":
        merged = {**self.params, **params}
        return SystemSpec(self.n, self.m, self.speeds, self.rhs, self.reflection,
                          merged, self.name, self.anchor)

    def to_config(self) -> dict:
        return {
            "n": self.n, "m": self.m,
            "speeds": [ex.to_source(a) for a in self.speeds],
            "rhs": [ex.to_source(b) for b in self.rhs],
            "reflection": self.reflection.tolist(),
            "params": dict(self.params),
        }


@dataclass(frozen=True)
class DerivTensors:
    """Derivatives of the coefficients at u = 0.  Trailing axes follow x."""

    bjk: np.ndarray
    bjkl: np.ndarray
    bjklr: np.ndarray
    dlam_a: np.ndarray
    dlam_bjk: np.ndarray


def deriv_tensors(spec: SystemSpec, x, lam: float = 0.0) -> DerivTensors:
    x = np.asarray(x, dtype=float)
    n = spec.n
    shape = (n,) * 2 + x.shape
    bjk = np.zeros(shape)
    dlam_bjk = np.zeros(shape)
    bjkl = np.zeros((n,) * 3 + x.shape)
    bjklr = np.zeros((n,) * 4 + x.shape)
    dlam_a = np.array([spec.dlam_speed_fn(j)(x, lam) for j in range(n)])
    for j in range(n):
        for k in range(n):
            bjk[j, k] = spec.jac_fn(j, k)(x, lam)
            dlam_bjk[j, k] = spec.dlam_jac_fn(j, k)(x, lam)
        for idx in itertools.combinations_with_replacement(range(n), 2):
            val = spec.tensor2_fn(j, *idx)(x, lam)
            for p in set(itertools.permutations(idx)):
                bjkl[(j, *p)] = val
        for idx in itertools.combinations_with_replacement(range(n), 3):
            val = spec.tensor3_fn(j, *idx)(x, lam)
            for p in set(itertools.permutations(idx)):
                bjklr[(j, *p)] = val
    return DerivTensors(bjk, bjkl, bjklr, dlam_a, dlam_bjk)


def builtin_example(gamma: float = -1.0) -> SystemSpec:
    """Two-component example with a cubic term ``gamma * u1^3``; it loses
    stability at the first positive root of its characteristic equation."""
    return SystemSpec.from_strings(
        n=2, m=1,
        speeds=["-1", "1"],
        rhs=["lambda*u1 - u2 + gamma*u1^3", "0"],
        reflection=[[0.0, 0.0], [1.0, 0.0]],
        params={"gamma": float(gamma)},
        name="example_sec6",
        anchor=(1, 0.0),
    )


def _locate_zero(fn: Callable[[float], float], xs: np.ndarray, vals: np.ndarray) -> float | None:
    exact = np.nonzero(vals == 0.0)[0]
    if exact.size:
        return float(xs[exact[0]])
    change = np.nonzero(np.sign(vals[:-1]) != np.sign(vals[1:]))[0]
    if change.size:
        i = change[0]
        return float(brentq(fn, xs[i], xs[i + 1], xtol=1e-14))
    return None


def validate(
    spec: SystemSpec,
    grid_points: int = 256,
    lambdas: Sequence[float] = (-1.0, -0.5, 0.0, 0.5, 1.0, 2.0),
    lam: float = 0.0,
) -> ValidationReport:
    """Check the standing hypotheses pointwise on a uniform x-grid.

    Speeds are checked at the reference parameter ``lam``; the trivial
    solution condition at every value in ``lambdas``.
    """
    if grid_points < 16:
        raise ValueError("grid_points must be at least 16")
    xs = np.linspace(0.0, 1.0, grid_points)
    found: list[Violation] = []
    with np.errstate(all="ignore"):
        a = spec.speeds_at(xs, lam)
    if not np.all(np.isfinite(a)):
        i = int(np.argmax(~np.all(np.isfinite(a), axis=0)))
        found.append(Violation("smoothness", "speed is not finite", float(xs[i])))
    for j in range(spec.n):
        fn = lambda x, j=j: float(spec.speed_fn(j)(x, lam))  # noqa: E731
        x0 = _locate_zero(fn, xs, a[j])
        if x0 is not None:
            found.append(Violation("nonvanishing_speed", f"speed a{j + 1}(x, {lam:g}) vanishes", x0, (j,)))
    for j, k in itertools.combinations(range(spec.n), 2):
        fn = lambda x, j=j, k=k: float(spec.speed_fn(j)(x, lam) - spec.speed_fn(k)(x, lam))  # noqa: E731
        x0 = _locate_zero(fn, xs, a[j] - a[k])
        if x0 is not None:
            found.append(Violation("distinct_speeds", f"speeds a{j + 1} and a{k + 1} coincide", x0, (j, k)))
    for j in range(spec.n):
        for lv in lambdas:
            try:
                vals = ex.evaluate(spec.rhs[j], {"x": xs, "lambda": lv, **spec.params,
                                                 **{u: 0.0 for u in spec.unknowns}})
            except ex.ExprDomainError as err:
                found.append(Violation("smoothness", f"b{j + 1}: {err}", None, (j,)))
                break
            vals = np.broadcast_to(np.asarray(vals, dtype=float), xs.shape)
            bad = np.nonzero(np.abs(vals) > 1e-12)[0]
            if bad.size:
                i = bad[0]
                found.append(Violation(
                    "trivial_solution", f"b{j + 1}(x, {lv:g}, 0) = {vals[i]:.6g} is not zero", float(xs[i]), (j,)))
                break
    return ValidationReport(tuple(found), grid_points)
