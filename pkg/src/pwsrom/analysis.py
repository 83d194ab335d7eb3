"""Validation analyses: forced response curves by brute-force steady-state
integration, return maps on the switching surface with invariant-curve and
edge-point extraction, the reduced-only invariant-curve approximation, limit
cycle detection and response spectra."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .core import EPS_EVENT, EventKind, IntegratorOptions, integrate_hybrid
from .rom import NonsmoothRom, _correct_onto_surface, simulate_rom
from .ssm_model import SsmModel


# ---------------------------------------------------------------------------
# steady-state forced response


@dataclass
class FrcPoint:
    omega: float
    amplitude: float
    converged: bool
    n_periods: int


def steady_state_amplitude(step_period: Callable, state, period: float,
                           rel_change: float = 1e-3, consecutive: int = 5,
                           max_periods: int = 500):
    """Iterate one-period integrations until the amplitude settles.

    step_period(t0, state) must return (state, amplitude-over-period).
    Convergence: successive-period amplitude change below rel_change for
    `consecutive` periods in a row.
    """
    t = 0.0
    prev = None
    streak = 0
    amp = np.nan
    for k in range(1, max_periods + 1):
        state, amp = step_period(t, state)
        t += period
        if prev is not None and abs(amp - prev) <= rel_change * max(abs(amp), 1e-300):
            streak += 1
            if streak >= consecutive:
                return amp, True, k, state
        else:
            streak = 0
        prev = amp
    return amp, False, max_periods, state


def hybrid_period_stepper(make_system, omega: float, amp_index: int,
                          opts: IntegratorOptions):
    """Per-period stepper for the full model at one forcing frequency."""
    sys = make_system(omega)
    period = 2 * np.pi / omega

    def step(t0, x):
        traj = integrate_hybrid(sys, x, (t0, t0 + period), opts)
        xs = traj.states()[:, amp_index]
        return traj.x_end, 0.5 * (xs.max() - xs.min())

    return step, period


def rom_period_stepper(rom: NonsmoothRom, amp_index: int,
                       opts: IntegratorOptions):
    """Per-period stepper for the switched reduced model."""

    def step(t0, state):
        y, branch = state
        period = 2 * np.pi / rom.model_plus.correction.omega
        traj = simulate_rom(rom, y, branch, (t0, t0 + period), opts)
        xs = traj.states()[:, amp_index]
        last = traj.segments[-1]
        new_branch = last.branch if last.branch != "sigma" else branch
        return (last.y[-1], new_branch), 0.5 * (xs.max() - xs.min())

    return step


def frc_sweep(point_runner: Callable, omega_grid, chunk: int = 16):
    """Sweep a frequency grid with warm starts within fixed-size chunks.

    point_runner(omega, warm_state) -> (FrcPoint, end_state). Chunk
    boundaries are fixed by `chunk`, not by worker count, so results do not
    depend on parallel execution; chunks are independent work items.
    """
    omega_grid = np.asarray(omega_grid, dtype=float)
    chunks = [omega_grid[i:i + chunk] for i in range(0, len(omega_grid), chunk)]
    points = []
    for sub in chunks:
        state = None
        for om in sub:
            pt, state = point_runner(om, state)
            points.append(pt)
    return points


def run_frc_chunk(args):
    """Worker entry for multiprocessing: one warm-start chain of grid points."""
    runner, omegas = args
    state = None
    out = []
    for om in omegas:
        pt, state = runner(om, state)
        out.append(pt)
    return out


# ---------------------------------------------------------------------------
# return map on the switching surface


@dataclass
class PoincareData:
    crossings: list                   # per IC: list of (t, state, direction)
    invariant_points: np.ndarray      # (N, n) post-transient crossing states
    directions: np.ndarray            # (N,) +1 entering sigma>0, -1 entering <0
    edge_plus: Optional[np.ndarray] = None
    edge_minus: Optional[np.ndarray] = None
    reduced_edge_plus: Optional[np.ndarray] = None
    reduced_edge_minus: Optional[np.ndarray] = None


def poincare_map(sys, ic_set, t_span, margin_fn: Callable[[np.ndarray], float],
                 skip: int = 5, opts: IntegratorOptions | None = None) -> PoincareData:
    """Record surface crossings of full-model trajectories.

    margin_fn measures the distance of a surface state from the sticking
    region boundary (positive outside). The edge states on each side are the
    iterates that follow the minimum-margin crossings, mirroring the
    configurations closest to sticking.
    """
    opts = opts or IntegratorOptions()
    all_cross = []
    pts = []
    dirs = []
    min_margin = {1: (np.inf, None), -1: (np.inf, None)}
    for ic in ic_set:
        traj = integrate_hybrid(sys, ic, t_span, opts)
        seq = []
        events = [e for e in traj.events if e.kind == EventKind.CROSSING]
        for j, ev in enumerate(events):
            d = 1 if _cross_dir(sys, ev) > 0 else -1
            seq.append((ev.t, ev.x.copy(), d))
            if j >= skip:
                pts.append(ev.x.copy())
                dirs.append(d)
                m = margin_fn(ev.x)
                if m < min_margin[d][0] and j + 1 < len(events):
                    min_margin[d] = (m, events[j + 1].x.copy())
        all_cross.append(seq)
    inv = np.vstack(pts) if pts else np.empty((0, len(ic_set[0])))
    data = PoincareData(crossings=all_cross, invariant_points=inv,
                        directions=np.asarray(dirs))
    # the iterates of the minimum-margin crossings are the edge points; label
    # them by the sign of the first coordinate (they mirror each other)
    edges = [v[1] for v in min_margin.values() if v[1] is not None]
    for e in edges:
        if e[0] >= 0:
            data.edge_plus = e
        else:
            data.edge_minus = e
    return data


def _cross_dir(sys, ev):
    g = np.asarray(sys.switching.grad_sigma(ev.x))
    return 1.0 if float(g @ sys.f_plus(ev.t, ev.x)) > 0 else -1.0


# ---------------------------------------------------------------------------
# reduced-only invariant curve: surface arcs, centerline and edges


def surface_arc(rom: NonsmoothRom, branch: str, span: float, n: int = 201,
                t: float = 0.0) -> np.ndarray:
    """Points of {sigma(lift(y)) = 0} on one branch, as reduced coordinates."""
    model = rom.model(branch)
    ys = _trace_curve(rom, model, span, n, t)
    return np.vstack(ys)


def _trace_curve(rom, model, span, n, t):
    y0 = _correct_onto_surface(rom, model, np.zeros(2), t)
    step = 2.0 * span / n

    def tangent_at(y):
        x = model.lift(y, t)
        gs = np.asarray(rom.switching.grad_sigma(x)) @ model.lift_jacobian(y)
        tg = np.array([-gs[1], gs[0]])
        return tg / np.linalg.norm(tg)

    out = [y0]
    for direction in (1.0, -1.0):
        y = y0.copy()
        tg_prev = tangent_at(y0) * direction
        for _ in range(n // 2):
            tg = tangent_at(y)
            if tg @ tg_prev < 0:
                tg = -tg
            y = _correct_onto_surface(rom, model, y + step * tg, t)
            tg_prev = tg
            if direction > 0:
                out.append(y.copy())
            else:
                out.insert(0, y.copy())
    return out


def approx_invariant_curve(rom: NonsmoothRom,
                           margin_fn: Callable[[np.ndarray], float],
                           span: float = 0.6, n: int = 401,
                           observe=(0, 2, 3)) -> dict:
    """Invariant-curve approximation using the reduced model only.

    Arcs are the branch-manifold intersections with the switching surface.
    The centerline averages the two arcs, both viewed over the first observed
    coordinate. Each edge estimate intersects the opposite-branch arc and the
    centerline with the sticking boundary, averages the two points, projects
    the result onto the edge's branch manifold and advects the reduced
    dynamics to the next surface hit.
    """
    arcs = {}
    obs = {}
    for b in ("+", "-"):
        Y = surface_arc(rom, b, span, n)
        X = np.vstack([rom.model(b).lift(y) for y in Y])
        arcs[b] = (Y, X)
        obs[b] = X
    # common parametrization over the first observed coordinate
    c0 = observe[0]
    grids = []
    for b in ("+", "-"):
        X = obs[b]
        order = np.argsort(X[:, c0])
        grids.append((X[order, c0], X[order]))
    lo = max(g[0][0] for g in grids)
    hi = min(g[0][-1] for g in grids)
    s = np.linspace(lo, hi, n)
    interp = []
    for gx, gX in grids:
        cols = [np.interp(s, gx, gX[:, j]) for j in range(gX.shape[1])]
        interp.append(np.column_stack(cols))
    centerline = 0.5 * (interp[0] + interp[1])

    def curve_margin_roots(X):
        m = np.array([margin_fn(x) for x in X])
        roots = []
        for i in range(len(m) - 1):
            if m[i] == 0.0 or (m[i] > 0) != (m[i + 1] > 0):
                w = m[i] / (m[i] - m[i + 1])
                roots.append(X[i] * (1 - w) + X[i + 1] * w)
        return roots

    # crossings happen at extrema of the first observed coordinate, so a
    # branch's grazing configuration is its arc's extreme-side boundary root;
    # the advected edge is labeled by that coordinate's sign
    edges = {"+": None, "-": None}
    for from_branch, arc in (("+", interp[0]), ("-", interp[1])):
        cand_arc = curve_margin_roots(arc)
        cand_cen = curve_margin_roots(centerline)
        if not cand_arc or not cand_cen:
            continue
        pick = max if from_branch == "+" else min
        pa = pick(cand_arc, key=lambda p: p[c0])
        pc = pick(cand_cen, key=lambda p: p[c0])
        mid = 0.5 * (pa + pc)
        to_branch = "-" if from_branch == "+" else "+"
        model = rom.model(to_branch)
        # plain graph projection; the advection then finds the first genuine
        # surface hit (for grazing starts that is the immediate short hop)
        y = model.chart(mid)
        edge = _advect_to_surface(rom, to_branch, y)
        if edge is None:
            continue
        edges["+" if edge[c0] >= 0 else "-"] = edge
    return {"arcs": {b: arcs[b][1] for b in arcs},
            "arcs_reduced": {b: arcs[b][0] for b in arcs},
            "centerline": centerline,
            "edge_plus": edges["+"], "edge_minus": edges["-"]}


def _advect_to_surface(rom, branch, y0, t_max=50.0):
    """First genuine surface hit of one branch's reduced flow.

    The start sits essentially on the surface, so the relevant hit is the
    first sign change of the reconstructed switching value after the state
    has measurably left the surface (grazing starts re-hit almost at once).
    """
    from .core import _Stepper
    model = rom.model(branch)
    sigma = rom.switching.sigma
    opts = IntegratorOptions(rtol=1e-11, atol=1e-13)
    stepper = _Stepper(model.reduced_field, 0.0, np.asarray(y0, dtype=float),
                       opts)
    s_prev = sigma(model.lift(y0))
    escaped = abs(s_prev) > 1e-7
    while stepper.t < t_max:
        if not stepper.step(t_max):
            break
        s_new = sigma(model.lift(stepper.x))
        if escaped and (s_new > 0) != (s_prev > 0):
            t_lo, t_hi = stepper.t_old, stepper.t
            for _ in range(200):
                t_mid = 0.5 * (t_lo + t_hi)
                y_mid = stepper.interpolate(t_mid)
                s_mid = sigma(model.lift(y_mid))
                if abs(s_mid) <= EPS_EVENT or (t_hi - t_lo) < 1e-15 * max(1.0, t_mid):
                    return model.lift(y_mid)
                if (s_mid > 0) == (s_prev > 0):
                    t_lo = t_mid
                else:
                    t_hi = t_mid
            return model.lift(y_mid)
        if not escaped and abs(s_new) > 1e-7:
            escaped = True
        s_prev = s_new
    return None


# ---------------------------------------------------------------------------
# limit cycles and spectra


@dataclass
class LimitCycle:
    period: float
    frequency: float
    amplitude: float
    t_samples: np.ndarray
    x_samples: np.ndarray
    marker: str = "stick_exit"


def detect_limit_cycle(traj, coord: int, event_kind=EventKind.STICK_EXIT,
                       settle: int = 4, rel_tol: float = 1e-3,
                       closure_tol: float = 1e-6) -> Optional[LimitCycle]:
    """Period from recurrence of typed events on a converged trajectory.

    Uses the later event intervals (after `settle` cycles); returns None if
    the intervals have not stabilized. The closure requirement compares the
    states one period apart, scaled by the cycle amplitude.
    """
    evts = [e for e in traj.events if e.kind == event_kind]
    if len(evts) < settle + 3:
        return None
    times = np.array([e.t for e in evts])
    gaps = np.diff(times)
    tail = gaps[-3:]
    period = float(np.mean(tail))
    if np.max(np.abs(tail - period)) > rel_tol * period:
        return None
    t1 = times[-1] - period
    grid = np.linspace(t1, times[-1], 257)
    X = traj.sample(grid)
    amp = 0.5 * (X[:, coord].max() - X[:, coord].min())
    # closure from exact event states one period apart; the amplitude scale is
    # the state-space radius of the cycle
    closure = np.linalg.norm(evts[-1].x - evts[-2].x)
    radius = np.linalg.norm(X - X.mean(axis=0), axis=1).max()
    if closure > closure_tol * max(radius, 1e-300):
        return None
    return LimitCycle(period=period, frequency=1.0 / period, amplitude=amp,
                      t_samples=grid, x_samples=X)


def spectrum_peaks(t: np.ndarray, x: np.ndarray, n_peaks: int = 4,
                   min_rel_power: float = 1e-4):
    """Dominant cyclic frequencies of a uniformly sampled signal.

    Hann-windowed rFFT with parabolic peak interpolation; returns peak
    frequencies sorted by descending power.
    """
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    dt = t[1] - t[0]
    x = x - x.mean()
    w = np.hanning(len(x))
    Y = np.abs(np.fft.rfft(x * w))
    freqs = np.fft.rfftfreq(len(x), dt)
    pk = []
    thresh = min_rel_power * Y.max()
    for i in range(1, len(Y) - 1):
        if Y[i] > Y[i - 1] and Y[i] >= Y[i + 1] and Y[i] > thresh:
            # parabolic refinement in log amplitude
            a, b, c = np.log(Y[i - 1] + 1e-300), np.log(Y[i] + 1e-300), \
                np.log(Y[i + 1] + 1e-300)
            shift = 0.5 * (a - c) / (a - 2 * b + c)
            pk.append((Y[i], freqs[i] + shift * (freqs[1] - freqs[0])))
    pk.sort(key=lambda p: -p[0])
    return np.array([f for _, f in pk[:n_peaks]])
