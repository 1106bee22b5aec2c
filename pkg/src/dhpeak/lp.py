"""Dense two-phase simplex for small linear programs.

Problems are ``minimize c @ x`` subject to rows ``a @ x (<=|==|>=) b`` and
per-variable bounds ``lower <= x <= upper``. Bounds are handled implicitly
(bounded-variable simplex: nonbasic variables sit at either bound), so box
constraints never become tableau rows. Pricing is Dantzig's largest reduced
cost; after ``stall_limit`` consecutive iterations without objective
progress the solver switches to Bland's rule for the rest of the phase.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

LE, EQ, GE = "<=", "==", ">="
_RELATIONS = {"<=": LE, "≤": LE, "==": EQ, "=": EQ, ">=": GE, "≥": GE}


class Status(str, enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"


class BadProgram(ValueError):
    pass


class NoConvergence(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class LinearProgram:
    objective: np.ndarray
    a: np.ndarray
    relations: tuple[str, ...]
    rhs: np.ndarray
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None

    def __post_init__(self):
        c = np.asarray(self.objective, dtype=float).ravel()
        n = c.size
        a = np.asarray(self.a, dtype=float)
        if a.size == 0:
            a = a.reshape(0, n)
        if a.ndim != 2 or a.shape[1] != n:
            raise BadProgram(f"constraint matrix shape {a.shape} does not match {n} variables")
        rhs = np.asarray(self.rhs, dtype=float).ravel()
        if rhs.size != a.shape[0] or len(self.relations) != a.shape[0]:
            raise BadProgram("need one relation and one rhs per constraint row")
        try:
            rel = tuple(_RELATIONS[r] for r in self.relations)
        except KeyError as exc:
            raise BadProgram(f"unknown relation {exc.args[0]!r}") from None
        lower = np.zeros(n) if self.lower is None else np.asarray(self.lower, dtype=float).ravel()
        upper = np.full(n, np.inf) if self.upper is None else np.asarray(self.upper, dtype=float).ravel()
        if lower.size != n or upper.size != n:
            raise BadProgram("bounds must have one entry per variable")
        if np.any(lower > upper) or np.any(lower == np.inf) or np.any(upper == -np.inf):
            raise BadProgram("every variable needs lower <= upper")
        if not (np.all(np.isfinite(c)) and np.all(np.isfinite(a)) and np.all(np.isfinite(rhs))):
            raise BadProgram("objective, matrix and rhs must be finite")
        for name, val in (("objective", c), ("a", a), ("rhs", rhs), ("lower", lower), ("upper", upper)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)
        object.__setattr__(self, "relations", rel)

    @property
    def n_vars(self) -> int:
        return self.objective.size

    @property
    def n_rows(self) -> int:
        return self.a.shape[0]

    @classmethod
    def from_rows(cls, objective, rows, lower=None, upper=None) -> "LinearProgram":
        """Build from ``[(coefficients, relation, rhs), ...]``."""
        n = len(objective)
        rows = list(rows)
        a = np.array([r[0] for r in rows], dtype=float).reshape(len(rows), n)
        return cls(objective, a, tuple(r[1] for r in rows), [r[2] for r in rows], lower, upper)


@dataclass(frozen=True, eq=False)
class LpSolution:
    status: Status
    x: np.ndarray
    objective_value: float
    iterations: int = 0

    @property
    def optimal(self) -> bool:
        return self.status is Status.OPTIMAL


class _Phase(enum.Enum):
    OPTIMAL = 0
    UNBOUNDED = 1


class _Tableau:
    """Full tableau ``B^-1 A`` with explicit basic values.

    All variables have lower bound 0 and upper bound ``upper`` (may be inf).
    """

    def __init__(self, a, b, upper, basis, tol, max_iter, stall_limit):
        self.t = a.copy()
        self.m, self.n = a.shape
        self.a0 = a
        self.b0 = b
        self.upper = upper
        self.basis = np.asarray(basis, dtype=int)
        self.xb = b.copy()
        self.at_upper = np.zeros(self.n, dtype=bool)
        self.is_basic = np.zeros(self.n, dtype=bool)
        self.is_basic[self.basis] = True
        self.tol = tol
        self.pivot_tol = 1e-9
        self.max_iter = max_iter
        self.stall_limit = stall_limit
        self.iterations = 0

    def values(self) -> np.ndarray:
        x = np.where(self.at_upper, self.upper, 0.0)
        x[self.basis] = self.xb
        return x

    def run(self, cost: np.ndarray) -> _Phase:
        tol = self.tol
        bland = False
        stall = 0
        movable = self.upper > 0
        while True:
            d = cost - cost[self.basis] @ self.t
            nonbasic = ~self.is_basic & movable
            up = nonbasic & ~self.at_upper & (d < -tol)
            down = nonbasic & self.at_upper & (d > tol)
            eligible = up | down
            if not eligible.any():
                return _Phase.OPTIMAL
            if self.iterations >= self.max_iter:
                raise NoConvergence(f"simplex exceeded {self.max_iter} iterations")
            self.iterations += 1
            if bland:
                j = int(np.flatnonzero(eligible)[0])
            else:
                j = int(np.argmax(np.where(eligible, np.abs(d), -1.0)))
            s = 1.0 if up[j] else -1.0
            col = s * self.t[:, j]

            ub = self.upper[self.basis]
            limits = np.full(self.m, np.inf)
            dec = col > self.pivot_tol
            limits[dec] = np.maximum(self.xb[dec], 0.0) / col[dec]
            inc = (col < -self.pivot_tol) & np.isfinite(ub)
            limits[inc] = np.maximum(ub[inc] - self.xb[inc], 0.0) / -col[inc]
            theta_row = limits.min() if self.m else np.inf
            theta_flip = self.upper[j]
            if not np.isfinite(theta_row) and not np.isfinite(theta_flip):
                return _Phase.UNBOUNDED

            if theta_flip <= theta_row:
                theta = theta_flip
                self.xb -= theta * col
                self.at_upper[j] = not self.at_upper[j]
            else:
                theta = theta_row
                ties = np.flatnonzero(limits <= theta_row + 1e-12)
                if bland:
                    r = int(ties[np.argmin(self.basis[ties])])
                else:
                    r = int(ties[np.argmax(np.abs(col[ties]))])
                leaving = self.basis[r]
                leaves_at_upper = bool(inc[r])
                entering_value = (self.upper[j] if self.at_upper[j] else 0.0) + s * theta
                self.xb -= theta * col
                self._pivot(r, j)
                self.xb[r] = entering_value
                self.is_basic[leaving] = False
                self.is_basic[j] = True
                self.at_upper[leaving] = leaves_at_upper
                self.at_upper[j] = False
                self.basis[r] = j
            if theta * abs(d[j]) > tol:
                stall = 0
            else:
                stall += 1
                if stall >= self.stall_limit:
                    bland = True

    def _pivot(self, r: int, j: int):
        t = self.t
        row = t[r] / t[r, j]
        factors = t[:, j].copy()
        factors[r] = 0.0
        t -= np.outer(factors, row)
        t[r] = row

    def refine(self):
        """Recompute basic values from the original matrix."""
        xn = np.where(self.at_upper & ~self.is_basic, self.upper, 0.0)
        xn[self.basis] = 0.0
        bmat = self.a0[:, self.basis]
        try:
            self.xb = np.linalg.solve(bmat, self.b0 - self.a0 @ xn)
        except np.linalg.LinAlgError:
            pass


def solve(lp: LinearProgram, tol: float = 1e-9, max_iter: int | None = None, stall_limit: int = 100) -> LpSolution:
    """Solve ``lp`` by the two-phase bounded-variable simplex method.

    ``max_iter`` defaults to ``50 * (vars + rows)`` and counts iterations of
    both phases together; exceeding it raises :class:`NoConvergence`.
    """
    n, m = lp.n_vars, lp.n_rows
    if max_iter is None:
        max_iter = 50 * (n + m)

    # Column map: x_j = offset_j + sign_j * y_k (free variables use two columns).
    cols, signs, offsets, uppers = [], [], np.zeros(n), []
    for j in range(n):
        lo, hi = lp.lower[j], lp.upper[j]
        if np.isfinite(lo):
            cols.append(j), signs.append(1.0), uppers.append(hi - lo)
            offsets[j] = lo
        elif np.isfinite(hi):
            cols.append(j), signs.append(-1.0), uppers.append(np.inf)
            offsets[j] = hi
        else:
            cols.append(j), signs.append(1.0), uppers.append(np.inf)
            cols.append(j), signs.append(-1.0), uppers.append(np.inf)
    cols = np.array(cols, dtype=int)
    signs = np.array(signs)
    a_struct = lp.a[:, cols] * signs
    b = lp.rhs - lp.a @ offsets

    scale = np.abs(a_struct).max(axis=1) if m else np.zeros(0)
    scale[scale < 1e-100] = 1.0  # leave (near-)empty rows alone rather than overflow
    a_struct = a_struct / scale[:, None]
    b = b / scale
    # Column equilibration: y = y_scaled / col_scale.
    col_scale = np.abs(a_struct).max(axis=0) if m else np.ones(a_struct.shape[1])
    col_scale[col_scale < 1e-100] = 1.0
    a_struct = a_struct / col_scale
    uppers = np.array(uppers, dtype=float) * col_scale

    rel = np.array(lp.relations, dtype=object)
    slack_rows = np.flatnonzero(rel != EQ)
    n_struct = a_struct.shape[1]
    slack = np.zeros((m, slack_rows.size))
    for k, i in enumerate(slack_rows):
        slack[i, k] = 1.0 if rel[i] == LE else -1.0

    flip = b < 0
    a_main = np.hstack([a_struct, slack])
    a_main[flip] *= -1.0
    b = np.where(flip, -b, b)

    basis = np.empty(m, dtype=int)
    need_art = []
    for k, i in enumerate(slack_rows):
        if a_main[i, n_struct + k] > 0:
            basis[i] = n_struct + k
    slack_basic_rows = {i for k, i in enumerate(slack_rows) if a_main[i, n_struct + k] > 0}
    need_art = [i for i in range(m) if i not in slack_basic_rows]
    art = np.zeros((m, len(need_art)))
    n_main = a_main.shape[1]
    for k, i in enumerate(need_art):
        art[i, k] = 1.0
        basis[i] = n_main + k
    a_full = np.hstack([a_main, art])
    upper = np.concatenate([np.array(uppers), np.full(slack_rows.size, np.inf), np.full(len(need_art), np.inf)])

    tab = _Tableau(a_full, b, upper, basis, tol, max_iter, stall_limit)

    if need_art:
        cost1 = np.zeros(a_full.shape[1])
        cost1[n_main:] = 1.0
        tab.run(cost1)
        tab.refine()
        infeas = float(np.maximum(tab.values()[n_main:], 0.0).sum())
        if infeas > tol * max(1.0, float(np.abs(b).max(initial=0.0))):
            return LpSolution(Status.INFEASIBLE, np.full(n, np.nan), np.nan, tab.iterations)
        tab.upper = upper.copy()
        tab.upper[n_main:] = 0.0
        tab.xb[np.isin(tab.basis, np.arange(n_main, a_full.shape[1]))] = 0.0

    c_struct = lp.objective[cols] * signs / col_scale
    cscale = np.abs(c_struct).max(initial=0.0)
    cost2 = np.zeros(a_full.shape[1])
    cost2[:n_struct] = c_struct / cscale if cscale > 0 else 0.0
    phase = tab.run(cost2)
    if phase is _Phase.UNBOUNDED:
        return LpSolution(Status.UNBOUNDED, np.full(n, np.nan), -np.inf, tab.iterations)
    tab.refine()

    y = tab.values()[:n_struct]
    y = np.clip(y, 0.0, upper[:n_struct]) / col_scale
    x = offsets.copy()
    np.add.at(x, cols, signs * y)
    return LpSolution(Status.OPTIMAL, x, float(lp.objective @ x), tab.iterations)
