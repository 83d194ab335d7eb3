"""Piecewise-smooth systems: switching-surface classification, the Filippov
sliding field, and event-driven hybrid integration.

Vector fields have signature f(t, x) -> ndarray and must be smooth extensions
valid on both sides of the switching surface. Integration uses an embedded
Dormand-Prince 5(4) pair with dense output; boundary hits are located by
bisection on the continuous extension until |sigma| <= EPS_EVENT.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional

import numpy as np

EPS_EVENT = 1e-10          # absolute tolerance on sigma at reported events
TANGENTIAL_WINDOW = 1e-9   # |grad sigma . f| below this (scaled) is tangential
MAX_EVENTS = 10_000        # chattering guard


class RepellingSlidingError(RuntimeError):
    """Forward simulation refused at a repelling sliding point."""

    def __init__(self, t, x):
        super().__init__(f"repelling sliding encountered at t={t:.6g}; forward "
                         "solution is non-unique")
        self.t = t
        self.x = np.asarray(x)


class StiffnessError(RuntimeError):
    pass


class ChatteringError(RuntimeError):
    pass


class DegenerateDenominatorError(RuntimeError):
    pass


@dataclass(frozen=True)
class SwitchingFunction:
    """Scalar switching function sigma and its gradient."""

    sigma: Callable[[np.ndarray], float]
    grad_sigma: Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class PiecewiseSmoothSystem:
    """Two smooth vector fields separated by the zero set of sigma.

    f_plus governs sigma > 0, f_minus governs sigma < 0; both must evaluate on
    either side of the surface. Immutable and safe to share across
    concurrently running integrations.
    """

    dim: int
    f_plus: Callable[[float, np.ndarray], np.ndarray]
    f_minus: Callable[[float, np.ndarray], np.ndarray]
    switching: SwitchingFunction
    delta: float = 0.0


class BoundaryKind(Enum):
    CROSSING = "crossing"
    ATTRACTING_SLIDING = "attracting_sliding"
    REPELLING_SLIDING = "repelling_sliding"
    TANGENTIAL = "tangential"


@dataclass(frozen=True)
class BoundaryClassification:
    kind: BoundaryKind
    a_plus: float
    a_minus: float

    @property
    def direction(self) -> int:
        """Crossing direction: +1 toward sigma > 0, -1 toward sigma < 0."""
        return 1 if self.a_plus > 0 else -1


def classify_boundary(sys: PiecewiseSmoothSystem, x: np.ndarray,
                      t: float = 0.0) -> BoundaryClassification:
    """Classify the boundary behavior at a state on the switching surface.

    Crossing when both normal components share a sign, sliding when they
    oppose (attracting iff the fields point toward the surface), tangential
    when either component vanishes within the scaled window.
    """
    x = np.asarray(x, dtype=float)
    if abs(sys.switching.sigma(x)) > EPS_EVENT * 100:
        raise ValueError("state is not on the switching surface within tolerance")
    g = np.asarray(sys.switching.grad_sigma(x), dtype=float)
    fp = sys.f_plus(t, x)
    fm = sys.f_minus(t, x)
    a_plus = float(g @ fp)
    a_minus = float(g @ fm)
    wp = TANGENTIAL_WINDOW * (1.0 + np.linalg.norm(fp))
    wm = TANGENTIAL_WINDOW * (1.0 + np.linalg.norm(fm))
    if abs(a_plus) < wp or abs(a_minus) < wm:
        kind = BoundaryKind.TANGENTIAL
    elif a_plus * a_minus > 0.0:
        kind = BoundaryKind.CROSSING
    elif a_plus < 0.0 < a_minus:
        kind = BoundaryKind.ATTRACTING_SLIDING
    else:
        kind = BoundaryKind.REPELLING_SLIDING
    return BoundaryClassification(kind=kind, a_plus=a_plus, a_minus=a_minus)


def filippov_field(sys: PiecewiseSmoothSystem, x: np.ndarray,
                   t: float = 0.0) -> tuple[float, np.ndarray]:
    """Convex-combination sliding field tangent to the switching surface.

    Returns (lambda_sigma, f_sigma) with lambda_sigma in (-1, 1) on attracting
    sliding states and grad_sigma . f_sigma = 0 by construction.
    """
    x = np.asarray(x, dtype=float)
    g = np.asarray(sys.switching.grad_sigma(x), dtype=float)
    fp = sys.f_plus(t, x)
    fm = sys.f_minus(t, x)
    a_plus = float(g @ fp)
    a_minus = float(g @ fm)
    den = a_minus - a_plus
    scale = 1.0 + abs(a_plus) + abs(a_minus)
    if abs(den) < 1e-14 * scale:
        raise DegenerateDenominatorError(
            "(f_minus - f_plus) . grad_sigma vanishes; sliding field undefined")
    lam = (a_minus + a_plus) / den
    f_sigma = (a_minus * fp - a_plus * fm) / den
    return lam, f_sigma


class EventKind(Enum):
    CROSSING = "crossing"
    STICK_ENTRY = "stick_entry"
    STICK_EXIT = "stick_exit"
    TANGENTIAL = "tangential"


@dataclass
class Segment:
    branch: str                 # '+', '-', or 'sigma'
    t: np.ndarray
    x: np.ndarray               # shape (len(t), dim)


@dataclass
class Event:
    t: float
    x: np.ndarray
    kind: EventKind


@dataclass
class HybridTrajectory:
    """Piecewise-smooth trajectory: smooth segments joined by typed events."""

    segments: list[Segment] = field(default_factory=list)
    events: list[Event] = field(default_factory=list)

    @property
    def t_end(self) -> float:
        return self.segments[-1].t[-1] if self.segments else np.nan

    @property
    def x_end(self) -> np.ndarray:
        return self.segments[-1].x[-1]

    def times(self) -> np.ndarray:
        return np.concatenate([s.t for s in self.segments])

    def states(self) -> np.ndarray:
        return np.vstack([s.x for s in self.segments])

    def branches(self) -> np.ndarray:
        code = {"+": 1, "-": -1, "sigma": 0}
        return np.concatenate([np.full(len(s.t), code[s.branch]) for s in self.segments])

    def sample(self, t_grid: np.ndarray) -> np.ndarray:
        """Linear-in-segment resampling onto an arbitrary time grid."""
        t_all = self.times()
        x_all = self.states()
        order = np.argsort(t_all, kind="stable")
        t_all = t_all[order]
        x_all = x_all[order]
        out = np.empty((len(t_grid), x_all.shape[1]))
        for j in range(x_all.shape[1]):
            out[:, j] = np.interp(t_grid, t_all, x_all[:, j])
        return out

    def write_csv(self, path, events_path=None, dim: int | None = None) -> None:
        """Columns t, x1..xn, branch; events sidecar t_event, kind, x1..xn."""
        n = self.states().shape[1] if self.segments else int(dim or 0)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t"] + [f"x{i+1}" for i in range(n)] + ["branch"])
            code = {"+": 1, "-": -1, "sigma": 0}
            for seg in self.segments:
                for ti, xi in zip(seg.t, seg.x):
                    w.writerow([repr(float(ti))] + [repr(float(v)) for v in xi]
                               + [code[seg.branch]])
        if events_path is not None:
            with open(events_path, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["t_event", "kind"] + [f"x{i+1}" for i in range(n)])
                for ev in self.events:
                    w.writerow([repr(float(ev.t)), ev.kind.value]
                               + [repr(float(v)) for v in ev.x])


@dataclass
class IntegratorOptions:
    rtol: float = 1e-9
    atol: float = 1e-11
    max_step: float = np.inf
    first_step: float = 1e-4
    max_events: int = MAX_EVENTS
    t_eval_dt: Optional[float] = None   # uniform dense-output spacing
    record_steps: bool = True
    min_step: float = 1e-14


# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
    np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]),
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200,
               22 / 525, -1 / 40])
# quartic dense-output weights (as in the classic DOPRI5 interpolant)
_P = np.array([
    [1, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
    [0, 0, 0, 0],
    [0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
    [0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
    [0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
    [0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
    [0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])


class _Stepper:
    """Adaptive DP5(4) stepper with quartic dense output for one smooth field."""

    def __init__(self, f, t, x, opts: IntegratorOptions, direction=1.0):
        self.f = f
        self.t = float(t)
        self.x = np.asarray(x, dtype=float)
        self.opts = opts
        self.h = min(opts.first_step, opts.max_step)
        self.K = np.empty((7, len(self.x)))
        self.K[0] = f(self.t, self.x)
        self.t_old = self.t
        self.x_old = self.x.copy()

    def step(self, t_limit: float) -> bool:
        """Advance one accepted step, not beyond t_limit. False once t==t_limit."""
        opts = self.opts
        if self.t >= t_limit:
            return False
        h = min(self.h, opts.max_step, t_limit - self.t)
        while True:
            if h < opts.min_step * max(1.0, abs(self.t)):
                raise StiffnessError(f"step size underflow at t={self.t:.6g}")
            K = self.K
            t, x = self.t, self.x
            for i in range(1, 7):
                xi = x + h * (K[:i].T @ _A[i])
                K[i] = self.f(t + _C[i] * h, xi)
            x_new = x + h * (K.T @ _B)
            err_vec = h * (K.T @ _E)
            scale = opts.atol + opts.rtol * np.maximum(np.abs(x), np.abs(x_new))
            err = np.sqrt(np.mean((err_vec / scale) ** 2))
            if err <= 1.0:
                factor = 0.9 * (max(err, 1e-10)) ** -0.2
                self.h = h * min(5.0, max(0.2, factor))
                self.t_old, self.x_old = t, self.x
                self.K_old = K.copy()
                self.h_old = h
                self.t = t + h
                self.x = x_new
                K[0] = K[6].copy()  # FSAL
                return True
            h *= min(1.0, max(0.2, 0.9 * err ** -0.2))

    def interpolate(self, t: float) -> np.ndarray:
        """Dense output inside the last accepted step."""
        h = self.h_old
        s = (t - self.t_old) / h
        q = np.array([s, s * s, s ** 3, s ** 4])
        return self.x_old + h * (self.K_old.T @ (_P @ q))


def _bisect_event(g, t_lo, t_hi, interp, eps, max_iter=200):
    """Bisection on g(t) = sigma(interp(t)) until |g| <= eps at the bracket mid."""
    g_lo = g(interp(t_lo))
    for _ in range(max_iter):
        t_mid = 0.5 * (t_lo + t_hi)
        x_mid = interp(t_mid)
        g_mid = g(x_mid)
        if abs(g_mid) <= eps or (t_hi - t_lo) <= 1e-15 * max(1.0, abs(t_mid)):
            return t_mid, x_mid
        if (g_lo < 0) == (g_mid < 0):
            t_lo, g_lo = t_mid, g_mid
        else:
            t_hi = t_mid
    return t_mid, x_mid


def integrate_hybrid(sys: PiecewiseSmoothSystem, x0, t_span,
                     opts: IntegratorOptions | None = None) -> HybridTrajectory:
    """Integrate a piecewise-smooth system with event handling.

    Within each smooth branch an adaptive RK5(4) runs until sigma changes sign;
    the hit is bisected to |sigma| <= EPS_EVENT and classified. Crossings flip
    the branch; attracting sliding enters a surface segment driven by the
    Filippov field until its convex coefficient reaches +-1. Repelling sliding
    raises RepellingSlidingError with the event state attached.
    """
    opts = opts or IntegratorOptions()
    x0 = np.asarray(x0, dtype=float)
    if not np.isfinite(x0).all():
        raise ValueError("initial state must be finite")
    t0, t_end = float(t_span[0]), float(t_span[1])
    traj = HybridTrajectory()
    if sys.delta == 0.0:
        # smooth limit: the two fields coincide and the surface is inert
        return _run_smooth(sys, t0, x0, t_end, opts, traj)
    sigma = sys.switching.sigma
    n_events = 0

    def note_event(t, x, kind):
        nonlocal n_events
        traj.events.append(Event(t=t, x=np.asarray(x).copy(), kind=kind))
        n_events += 1
        if n_events > opts.max_events:
            raise ChatteringError(
                f"more than {opts.max_events} events in one time span")

    s0 = sigma(x0)
    if abs(s0) <= EPS_EVENT:
        cls = classify_boundary(sys, x0, t0)
        if cls.kind == BoundaryKind.ATTRACTING_SLIDING:
            mode = "sigma"
        elif cls.kind == BoundaryKind.REPELLING_SLIDING:
            raise RepellingSlidingError(t0, x0)
        else:
            mode = "+" if cls.direction > 0 else "-"
    else:
        mode = "+" if s0 > 0 else "-"

    t, x = t0, x0.copy()
    while t < t_end - 1e-14 * max(1.0, abs(t_end)):
        if mode == "sigma":
            t, x, mode = _run_sliding(sys, t, x, t_end, opts, traj, note_event)
        else:
            t, x, mode = _run_branch(sys, mode, t, x, t_end, opts, traj, note_event)
    return traj


def _run_smooth(sys, t0, x0, t_end, opts, traj):
    stepper = _Stepper(sys.f_plus, t0, x0, opts)
    record_step, flush_grid, finish = _segment_recorder(opts, t0, x0)
    while stepper.step(t_end):
        record_step(stepper)
    seg = finish(stepper.t, stepper.x)
    seg.branch = "+" if sys.switching.sigma(x0) >= 0 else "-"
    traj.segments.append(seg)
    return traj


def _segment_recorder(opts, t0, x0):
    ts = [t0]
    xs = [np.asarray(x0).copy()]

    grid_next = [t0 + opts.t_eval_dt] if opts.t_eval_dt else [None]

    def flush_grid(stepper, t_limit):
        if opts.t_eval_dt:
            while grid_next[0] is not None and grid_next[0] <= t_limit:
                ts.append(grid_next[0])
                xs.append(stepper.interpolate(grid_next[0]))
                grid_next[0] += opts.t_eval_dt

    def record_step(stepper):
        flush_grid(stepper, stepper.t)
        if opts.record_steps:
            ts.append(stepper.t)
            xs.append(stepper.x.copy())

    def finish(t_f, x_f):
        if ts[-1] < t_f - 1e-15 * max(1.0, abs(t_f)):
            ts.append(t_f)
            xs.append(np.asarray(x_f).copy())
        else:
            ts[-1] = t_f
            xs[-1] = np.asarray(x_f).copy()
        return Segment(branch=None, t=np.array(ts), x=np.vstack(xs))

    return record_step, flush_grid, finish


def _run_branch(sys, branch, t0, x0, t_end, opts, traj, note_event):
    f = sys.f_plus if branch == "+" else sys.f_minus
    sgn = 1.0 if branch == "+" else -1.0
    sigma = sys.switching.sigma
    stepper = _Stepper(f, t0, x0, opts)
    record_step, flush_grid, finish = _segment_recorder(opts, t0, x0)
    # arm crossing detection only once the state sits on the branch's valid
    # side, so segments that begin on the surface cannot retrigger instantly
    armed = sgn * sigma(x0) > 10 * EPS_EVENT
    while stepper.step(t_end):
        g_new = sgn * sigma(stepper.x)
        if armed and g_new < 0.0:
            # bracket the surface hit inside the last step
            t_ev, x_ev = _bisect_event(sigma, stepper.t_old, stepper.t,
                                       stepper.interpolate, EPS_EVENT)
            flush_grid(stepper, t_ev)
            seg = finish(t_ev, x_ev)
            seg.branch = branch
            traj.segments.append(seg)
            cls = classify_boundary(sys, x_ev, t_ev)
            if cls.kind == BoundaryKind.REPELLING_SLIDING:
                raise RepellingSlidingError(t_ev, x_ev)
            if cls.kind == BoundaryKind.ATTRACTING_SLIDING:
                note_event(t_ev, x_ev, EventKind.STICK_ENTRY)
                return t_ev, x_ev, "sigma"
            if cls.kind == BoundaryKind.TANGENTIAL:
                note_event(t_ev, x_ev, EventKind.TANGENTIAL)
                # micro-step with the incoming field, then reclassify by sign
                h_micro = max(1e-12, 1e-8 * max(1.0, abs(t_end - t0)))
                x_next = x_ev + h_micro * f(t_ev, x_ev)
                t_next = t_ev + h_micro
                s_next = sigma(x_next)
                nxt = "+" if s_next > 0 else "-"
                return t_next, x_next, nxt
            note_event(t_ev, x_ev, EventKind.CROSSING)
            return t_ev, x_ev, ("+" if cls.direction > 0 else "-")
        if not armed and g_new > 10 * EPS_EVENT:
            armed = True
        record_step(stepper)
    seg = finish(stepper.t, stepper.x)
    seg.branch = branch
    traj.segments.append(seg)
    return stepper.t, stepper.x, branch


def _run_sliding(sys, t0, x0, t_end, opts, traj, note_event):
    grad = sys.switching.grad_sigma

    def project(x):
        # one Newton step onto sigma = 0 (exact for linear sigma)
        g = np.asarray(grad(x), dtype=float)
        return x - sys.switching.sigma(x) * g / float(g @ g)

    def f_slide(t, x):
        _, fs = filippov_field(sys, x, t)
        return fs

    x0 = project(np.asarray(x0, dtype=float))
    stepper = _Stepper(f_slide, t0, x0, opts)
    record_step, flush_grid, finish = _segment_recorder(opts, t0, x0)

    def lam_margin(t, x):
        lam, _ = filippov_field(sys, x, t)
        return 1.0 - lam * lam

    while stepper.step(t_end):
        stepper.x = project(stepper.x)
        m_new = lam_margin(stepper.t, stepper.x)
        if m_new < 0.0:
            # locate where |lambda| reaches 1 by bisection on the interpolant
            t_lo, t_hi = stepper.t_old, stepper.t
            for _ in range(200):
                t_mid = 0.5 * (t_lo + t_hi)
                x_mid = project(stepper.interpolate(t_mid))
                m_mid = lam_margin(t_mid, x_mid)
                if abs(m_mid) <= 1e-12 or (t_hi - t_lo) <= 1e-15 * max(1.0, abs(t_mid)):
                    break
                if m_mid > 0.0:
                    t_lo = t_mid
                else:
                    t_hi = t_mid
            t_ev, x_ev = t_mid, x_mid
            flush_grid(stepper, t_ev)
            seg = finish(t_ev, x_ev)
            seg.branch = "sigma"
            traj.segments.append(seg)
            note_event(t_ev, x_ev, EventKind.STICK_EXIT)
            lam, _ = filippov_field(sys, x_ev, t_ev)
            return t_ev, x_ev, ("+" if lam > 0 else "-")
        record_step(stepper)
    seg = finish(stepper.t, stepper.x)
    seg.branch = "sigma"
    traj.segments.append(seg)
    return stepper.t, stepper.x, "sigma"


def finite_difference_gradient(sigma, x, h=1e-6):
    """Central-difference gradient of a scalar function (testing utility)."""
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for i in range(len(x)):
        dx = np.zeros_like(x)
        dx[i] = h * max(1.0, abs(x[i]))
        g[i] = (sigma(x + dx) - sigma(x - dx)) / (2 * dx[i])
    return g
