"""Switched reduced-order model runtime.

Integrates the branch reduced dynamics, monitors the switching function on
reconstructed observables with the same event machinery as the full model,
transfers initial conditions across branches at crossings, and optionally
tracks sticking through an in-surface reduced field.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .core import (EPS_EVENT, ChatteringError, Event, EventKind,
                   IntegratorOptions, SwitchingFunction, _bisect_event,
                   _Stepper)
from .ssm_model import SsmModel

IC_STRATEGIES = ("projection", "min_all_vars", "continuity_q1", "continuity_q1q2")


class StrategyError(RuntimeError):
    pass


class RomConfigurationError(RuntimeError):
    pass


@dataclass(frozen=True)
class StickingRule:
    """Hooks for sticking in reduced coordinates.

    condition decides (on reconstructed observables) whether the state is
    inside the sticking region; reduced_field is the in-surface reduced
    dynamics; exit_branch names the branch whose field points away once the
    condition fails. reconstruct may override the lift during sticking so the
    recorded observable satisfies the surface constraint exactly.
    """

    condition: Callable[[float, np.ndarray], bool]                 # (t, x)
    reduced_field: Callable[[float, np.ndarray, SsmModel], np.ndarray]  # (t, y, model)
    exit_branch: Callable[[float, np.ndarray], str]                # (t, x)
    reconstruct: Optional[Callable[[float, np.ndarray, SsmModel], np.ndarray]] = None


@dataclass
class NonsmoothRom:
    model_plus: SsmModel
    model_minus: SsmModel
    switching: SwitchingFunction
    ic_strategy: str = "projection"
    sticking: Optional[StickingRule] = None
    coord_indices: dict = field(default_factory=lambda: {"q1": 0, "q2": 2})

    def __post_init__(self):
        if self.ic_strategy not in IC_STRATEGIES:
            raise ValueError(f"unknown IC strategy {self.ic_strategy!r}")
        if self.model_plus.dim != self.model_minus.dim:
            raise ValueError("branch models must share observable dimension")

    def model(self, branch: str) -> SsmModel:
        return self.model_plus if branch == "+" else self.model_minus


def lift(model: SsmModel, y, t: Optional[float] = None) -> np.ndarray:
    return model.lift(y, t)


# ---------------------------------------------------------------------------
# initial-condition matching across the switching surface


def _correct_onto_surface(rom: NonsmoothRom, model: SsmModel, y, t):
    """Newton steps driving sigma(lift(y)) to zero along its reduced gradient."""
    y = np.asarray(y, dtype=float).copy()
    for _ in range(60):
        x = model.lift(y, t)
        g = rom.switching.sigma(x)
        if abs(g) <= 1e-13:
            return y
        gs = np.asarray(rom.switching.grad_sigma(x)) @ model.lift_jacobian(y)
        nrm = float(gs @ gs)
        if nrm < 1e-30:
            raise StrategyError("switching gradient vanishes in the chart")
        y = y - g * gs / nrm
    raise StrategyError("could not project reduced state onto the surface")


def _surface_candidates(rom, model, y_center, t, span, n=121):
    """Points on {sigma(lift(y)) = 0} around y_center, traced by arclength."""
    y0 = _correct_onto_surface(rom, model, y_center, t)
    x = model.lift(y0, t)
    gs = np.asarray(rom.switching.grad_sigma(x)) @ model.lift_jacobian(y0)
    tang = np.array([-gs[1], gs[0]])
    tang /= np.linalg.norm(tang)
    out = [y0]
    for direction in (1.0, -1.0):
        y = y0.copy()
        step = span / (n // 2)
        for _ in range(n // 2):
            y = y + direction * step * tang
            try:
                y = _correct_onto_surface(rom, model, y, t)
            except StrategyError:
                break
            x = model.lift(y, t)
            gs = np.asarray(rom.switching.grad_sigma(x)) @ model.lift_jacobian(y)
            tg = np.array([-gs[1], gs[0]])
            nt = np.linalg.norm(tg)
            if nt < 1e-30:
                break
            tang = tg / nt if direction > 0 else tg / nt
            out.append(y.copy())
    return out


def switch_ic(rom: NonsmoothRom, y_from: np.ndarray, from_branch: str,
              t: float = 0.0, strategy: Optional[str] = None) -> np.ndarray:
    """New reduced initial condition on the opposite branch.

    projection: the affine chart transfer (for shared-basis modal charts this
    is exactly y_to = y_from + W(x0_from - x0_to)). The other strategies
    enforce continuity constraints by constrained search on the target
    manifold.
    """
    strategy = strategy or rom.ic_strategy
    to_branch = "-" if from_branch == "+" else "+"
    m_from = rom.model(from_branch)
    m_to = rom.model(to_branch)
    x_from = m_from.lift(y_from, t)
    y_proj = m_to.chart(x_from)
    if strategy == "projection":
        return y_proj

    if strategy == "continuity_q1q2":
        idx = [rom.coord_indices["q1"], rom.coord_indices["q2"]]
        target = x_from[idx]
        y = y_proj.copy()
        for _ in range(80):
            r = m_to.lift(y, t)[idx] - target
            if np.linalg.norm(r) < 1e-12:
                return y
            J = m_to.lift_jacobian(y)[idx, :]
            try:
                y = y - np.linalg.solve(J, r)
            except np.linalg.LinAlgError as exc:
                raise StrategyError("singular continuity system") from exc
        raise StrategyError("continuity_q1q2 did not converge")

    # remaining strategies search along the surface curve on the target model
    span = 2.0 * max(np.linalg.norm(y_proj), 0.2)
    cand = _surface_candidates(rom, m_to, y_proj, t, span)
    if strategy == "min_all_vars":
        def objective(y):
            return float(np.linalg.norm(m_to.lift(y, t) - x_from))
    elif strategy == "continuity_q1":
        iq1 = rom.coord_indices["q1"]

        def objective(y):
            return abs(m_to.lift(y, t)[iq1] - x_from[iq1])
    else:
        raise ValueError(strategy)
    vals = [objective(y) for y in cand]
    order = int(np.argmin(vals))
    y_best = cand[order]
    # golden-section refinement along the local tangent
    x = m_to.lift(y_best, t)
    gs = np.asarray(rom.switching.grad_sigma(x)) @ m_to.lift_jacobian(y_best)
    tang = np.array([-gs[1], gs[0]])
    tang /= np.linalg.norm(tang)
    a, b = -span / 50.0, span / 50.0
    phi = 0.5 * (np.sqrt(5.0) - 1.0)

    def f_line(s):
        return objective(_correct_onto_surface(rom, m_to, y_best + s * tang, t))

    c, d = b - phi * (b - a), a + phi * (b - a)
    fc, fd = f_line(c), f_line(d)
    for _ in range(60):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - phi * (b - a)
            fc = f_line(c)
        else:
            a, c, fc = c, d, fd
            d = a + phi * (b - a)
            fd = f_line(d)
    s_best = 0.5 * (a + b)
    y = _correct_onto_surface(rom, m_to, y_best + s_best * tang, t)
    if strategy == "continuity_q1" and objective(y) > 1e-8:
        raise StrategyError("continuity_q1 could not match the coordinate on "
                            "the surface")
    return y


# ---------------------------------------------------------------------------
# switched reduced simulation


@dataclass
class RomSegment:
    branch: str
    t: np.ndarray
    y: np.ndarray        # (N, d) reduced coordinates
    x: np.ndarray        # (N, n) reconstructed observables


@dataclass
class RomTrajectory:
    segments: list = field(default_factory=list)
    events: list = field(default_factory=list)

    @property
    def t_end(self):
        return self.segments[-1].t[-1]

    def times(self):
        return np.concatenate([s.t for s in self.segments])

    def states(self):
        return np.vstack([s.x for s in self.segments])

    def reduced(self):
        return np.vstack([s.y for s in self.segments])

    def sample(self, t_grid):
        t_all = self.times()
        x_all = self.states()
        out = np.empty((len(t_grid), x_all.shape[1]))
        for j in range(x_all.shape[1]):
            out[:, j] = np.interp(t_grid, t_all, x_all[:, j])
        return out

    def write_csv(self, path, events_path=None):
        import csv
        n = self.states().shape[1]
        d = self.reduced().shape[1]
        code = {"+": 1, "-": -1, "sigma": 0}
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t"] + [f"x{i+1}" for i in range(n)] + ["branch"]
                       + [f"xi{i+1}" for i in range(d)])
            for seg in self.segments:
                for ti, xi, yi in zip(seg.t, seg.x, seg.y):
                    w.writerow([repr(float(ti))] + [repr(float(v)) for v in xi]
                               + [code[seg.branch]]
                               + [repr(float(v)) for v in yi])
        if events_path is not None:
            with open(events_path, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["t_event", "kind"] + [f"x{i+1}" for i in range(n)])
                for ev in self.events:
                    w.writerow([repr(float(ev.t)), ev.kind.value]
                               + [repr(float(v)) for v in ev.x])


def simulate_rom(rom: NonsmoothRom, y0, branch0: str, t_span,
                 opts: IntegratorOptions | None = None) -> RomTrajectory:
    """Run the switched reduced model over t_span.

    Crossings of the reconstructed switching function are located by
    bisection; the configured IC strategy transfers the reduced state to the
    other branch. When a sticking rule is present and its condition holds at
    a surface hit, the in-surface reduced field runs until the condition
    releases, then integration resumes on the exit branch.
    """
    opts = opts or IntegratorOptions()
    traj = RomTrajectory()
    t0, t_end = float(t_span[0]), float(t_span[1])
    t = t0
    y = np.asarray(y0, dtype=float).copy()
    branch = branch0
    mode = "branch"
    if rom.sticking is not None:
        model0 = rom.model(branch)
        x_start = (rom.sticking.reconstruct(t0, y, model0)
                   if rom.sticking.reconstruct is not None
                   else model0.lift(y, t0))
        if (abs(rom.switching.sigma(model0.lift(y, t0))) < 1e-6
                and rom.sticking.condition(t0, x_start)):
            mode = "sticking"
    n_events = 0

    def note(t, x, kind):
        nonlocal n_events
        traj.events.append(Event(t=t, x=np.asarray(x).copy(), kind=kind))
        n_events += 1
        if n_events > opts.max_events:
            raise ChatteringError(f"more than {opts.max_events} events")

    while t < t_end - 1e-14 * max(1.0, abs(t_end)):
        if mode == "branch":
            t, y, branch, mode = _rom_branch_segment(
                rom, branch, t, y, t_end, opts, traj, note)
        else:
            t, y, branch, mode = _rom_sticking_segment(
                rom, branch, t, y, t_end, opts, traj, note)
    return traj


def _collect(model, ts, ys, branch):
    Y = np.vstack(ys)
    X = np.vstack([model.lift(yy, tt) for tt, yy in zip(ts, Y)])
    return RomSegment(branch=branch, t=np.asarray(ts), y=Y, x=X)


def _reduced_recorder(opts, t0, y0):
    ts, ys = [t0], [np.asarray(y0, dtype=float).copy()]
    grid_next = [t0 + opts.t_eval_dt] if opts.t_eval_dt else [None]

    def flush(stepper, t_limit):
        if opts.t_eval_dt:
            while grid_next[0] is not None and grid_next[0] <= t_limit:
                ts.append(grid_next[0])
                ys.append(stepper.interpolate(grid_next[0]))
                grid_next[0] += opts.t_eval_dt

    def record(stepper):
        flush(stepper, stepper.t)
        if opts.record_steps:
            ts.append(stepper.t)
            ys.append(stepper.x.copy())

    def finish(t_f, y_f):
        if ts[-1] < t_f - 1e-15 * max(1.0, abs(t_f)):
            ts.append(t_f)
            ys.append(np.asarray(y_f).copy())
        else:
            ts[-1] = t_f
            ys[-1] = np.asarray(y_f).copy()
        return ts, ys

    return record, flush, finish


def _rom_branch_segment(rom, branch, t0, y0, t_end, opts, traj, note):
    model = rom.model(branch)
    sgn = 1.0 if branch == "+" else -1.0
    sigma = rom.switching.sigma

    def g_of(t, y):
        return sgn * sigma(model.lift(y, t))

    stepper = _Stepper(model.reduced_field, t0, y0, opts)
    record, flush, finish = _reduced_recorder(opts, t0, y0)
    armed = g_of(t0, y0) > 10 * EPS_EVENT
    while stepper.step(t_end):
        g_new = g_of(stepper.t, stepper.x)
        if armed and g_new < 0.0:
            t_lo, t_hi = stepper.t_old, stepper.t
            g_fun = lambda tt: sigma(model.lift(stepper.interpolate(tt), tt))
            g_lo = g_fun(t_lo)
            for _ in range(200):
                t_mid = 0.5 * (t_lo + t_hi)
                g_mid = g_fun(t_mid)
                if abs(g_mid) <= EPS_EVENT or (t_hi - t_lo) <= 1e-15 * max(1.0, abs(t_mid)):
                    break
                if (g_lo < 0) == (g_mid < 0):
                    t_lo, g_lo = t_mid, g_mid
                else:
                    t_hi = t_mid
            t_ev = t_mid
            y_ev = stepper.interpolate(t_ev)
            x_ev = model.lift(y_ev, t_ev)
            flush(stepper, t_ev)
            ts, ys = finish(t_ev, y_ev)
            traj.segments.append(_collect(model, ts, ys, branch))
            if rom.sticking is not None and rom.sticking.condition(t_ev, x_ev):
                note(t_ev, x_ev, EventKind.STICK_ENTRY)
                return t_ev, y_ev, branch, "sticking"
            note(t_ev, x_ev, EventKind.CROSSING)
            new_branch = "-" if branch == "+" else "+"
            y_new = switch_ic(rom, y_ev, branch, t_ev)
            return t_ev, y_new, new_branch, "branch"
        if not armed and g_new > 10 * EPS_EVENT:
            armed = True
        record(stepper)
    ts, ys = finish(stepper.t, stepper.x)
    traj.segments.append(_collect(model, ts, ys, branch))
    return stepper.t, stepper.x, branch, "branch"


def _rom_sticking_segment(rom, branch, t0, y0, t_end, opts, traj, note):
    rule = rom.sticking
    model = rom.model(branch)

    def x_of(t, y):
        if rule.reconstruct is not None:
            return rule.reconstruct(t, y, model)
        return model.lift(y, t)

    def f_slide(t, y):
        return rule.reduced_field(t, y, model)

    _validate_sticking_chart(rom, model, f_slide, t0, y0)
    stepper = _Stepper(f_slide, t0, y0, opts)
    record, flush, finish = _reduced_recorder(opts, t0, y0)
    while stepper.step(t_end):
        x_new = x_of(stepper.t, stepper.x)
        if not rule.condition(stepper.t, x_new):
            # bisect the release time
            t_lo, t_hi = stepper.t_old, stepper.t
            for _ in range(200):
                t_mid = 0.5 * (t_lo + t_hi)
                y_mid = stepper.interpolate(t_mid)
                if rule.condition(t_mid, x_of(t_mid, y_mid)):
                    t_lo = t_mid
                else:
                    t_hi = t_mid
                if (t_hi - t_lo) <= 1e-14 * max(1.0, abs(t_mid)):
                    break
            t_ev = t_hi
            y_ev = stepper.interpolate(t_ev)
            x_ev = x_of(t_ev, y_ev)
            flush(stepper, t_ev)
            ts, ys = finish(t_ev, y_ev)
            traj.segments.append(_collect_with(x_of, ts, ys, "sigma"))
            note(t_ev, x_ev, EventKind.STICK_EXIT)
            nxt = rule.exit_branch(t_ev, x_ev)
            return t_ev, y_ev, nxt, "branch"
        record(stepper)
    ts, ys = finish(stepper.t, stepper.x)
    traj.segments.append(_collect_with(x_of, ts, ys, "sigma"))
    return stepper.t, stepper.x, branch, "sticking"


def _collect_with(x_of, ts, ys, branch):
    Y = np.vstack(ys)
    X = np.vstack([x_of(tt, yy) for tt, yy in zip(ts, Y)])
    return RomSegment(branch=branch, t=np.asarray(ts), y=Y, x=X)


def _validate_sticking_chart(rom, model, f_slide, t, y):
    """The in-surface reduced field must keep the switching value stationary.

    Drift is measured on the raw lift, so pinning the reconstruction cannot
    mask a chart that is unable to hold the constraint.
    """
    y = np.asarray(y, dtype=float)
    dy = f_slide(t, y)
    h = 1e-7
    s0 = rom.switching.sigma(model.lift(y, t))
    s1 = rom.switching.sigma(model.lift(y + h * dy, t + h))
    drift = abs(s1 - s0) / h
    scale = 1.0 + float(np.linalg.norm(dy))
    if drift > 0.15 * scale:
        raise RomConfigurationError(
            "the chart cannot express the sticking constraint (switching value "
            "drifts under the in-surface reduced field); rechart onto "
            "coordinates containing the switching variable")


# ---------------------------------------------------------------------------
# factory for the friction-oscillator reduced model


def make_sp_rom(params, order: int = 3, ic_strategy: str = "projection",
                with_sticking: bool = True) -> NonsmoothRom:
    """Switched reduced model of the friction oscillator on its two slow SSMs.

    Sticking uses the in-surface dynamics (mass 1 pinned) projected through
    the shared modal chart; the reconstruction pins dq1 to zero exactly.
    """
    from .shaw_pierre import (sp_elastic_term, sp_sliding_field, sp_switching,
                              sp_sticking_test)
    from .ssm_analytic import build_analytic_model

    model_p = build_analytic_model(params, "+", order=order,
                                   eps=params.eps, omega=params.omega)
    model_m = build_analytic_model(params, "-", order=order,
                                   eps=params.eps, omega=params.omega)

    def reconstruct(t, y, model):
        x = model.lift(y, t).copy()
        x[1] = 0.0
        return x

    def condition(t, x):
        return sp_sticking_test(params, x, t)

    def reduced_field(t, y, model):
        x = reconstruct(t, y, model)
        return model.chart_w @ sp_sliding_field(params, t, x)

    def exit_branch(t, x):
        e = sp_elastic_term(params, x)
        if params.eps:
            e += params.eps * np.cos(params.omega * t) / (np.sqrt(2.0) * params.m1)
        return "+" if e > 0 else "-"

    sticking = None
    if with_sticking:
        sticking = StickingRule(condition=condition, reduced_field=reduced_field,
                                exit_branch=exit_branch, reconstruct=reconstruct)
    return NonsmoothRom(model_plus=model_p, model_minus=model_m,
                        switching=sp_switching(), ic_strategy=ic_strategy,
                        sticking=sticking)
