"""Pulse-sequence model: segments, builders, discretisation and adiabaticity.

A :class:`Sequence` is an ordered tuple of segments. ``discretize`` expands it
into :class:`ControlSlice` objects, each a piecewise-constant RF setting (or
an ideal hard-pulse marker), which is what the simulator integrates.

Sweeps are sampled at step endpoints: step ``k`` of ``n`` (``k = 1..n``)
carries the value ``k/n`` along the sweep. Upward amplitude sweeps therefore
end exactly on ``nu1_max`` and downward sweeps end exactly on zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Union

import numpy as np

from .kernel import TWO_PI, SpinSystem

# default finite-pulse amplitude: the high-power hard-pulse range
HARD_PULSE_NU1_HZ = 25.8e3
DEFAULT_Q_THRESHOLD = 10.0


def _check_steps(steps, step_dt_s):
    if isinstance(steps, bool) or not isinstance(steps, (int, np.integer)):
        raise TypeError("steps must be an integer")
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if not math.isfinite(step_dt_s) or step_dt_s < 0:
        raise ValueError("step duration must be finite and >= 0")


def _check_amp(value, name):
    if not math.isfinite(value) or value < 0:
        raise ValueError(f"{name} must be finite and >= 0")


@dataclass(frozen=True)
class AmplitudeSweep:
    """Linear RF amplitude ramp at fixed phase (0 -> nu1 for 'up')."""

    direction: str
    nu1_max_hz: float
    steps: int
    step_dt_s: float
    rf_phase_deg: float = 0.0

    def __post_init__(self):
        if self.direction not in ("up", "down"):
            raise ValueError("direction must be 'up' or 'down'")
        _check_amp(self.nu1_max_hz, "nu1_max_hz")
        _check_steps(self.steps, self.step_dt_s)
        if not math.isfinite(self.rf_phase_deg):
            raise ValueError("rf_phase_deg must be finite")

    @property
    def rf_phase_rad(self) -> float:
        return math.radians(self.rf_phase_deg)

    @property
    def duration_s(self) -> float:
        return self.steps * self.step_dt_s


@dataclass(frozen=True)
class PhaseSweep:
    """RF phase rotation at constant amplitude; 'cw' runs 0 -> 360 deg."""

    rotation: str
    nu1_hz: float
    steps: int
    step_dt_s: float

    def __post_init__(self):
        if self.rotation not in ("cw", "ccw"):
            raise ValueError("rotation must be 'cw' or 'ccw'")
        _check_amp(self.nu1_hz, "nu1_hz")
        _check_steps(self.steps, self.step_dt_s)

    @property
    def duration_s(self) -> float:
        return self.steps * self.step_dt_s


@dataclass(frozen=True)
class HardPulse:
    """Rotation of one spin; ideal (instantaneous) unless ``mode='finite'``."""

    target: str
    angle_deg: float
    axis_phase_deg: float = 0.0
    mode: str = "ideal"
    nu1_hz: float | None = None

    def __post_init__(self):
        if self.target not in ("I", "S"):
            raise ValueError("target must be 'I' or 'S'")
        if not (math.isfinite(self.angle_deg) and math.isfinite(self.axis_phase_deg)):
            raise ValueError("pulse angles must be finite")
        if self.mode == "ideal":
            if self.nu1_hz is not None:
                raise ValueError("ideal pulses take no nu1_hz")
        elif self.mode == "finite":
            if self.nu1_hz is None:
                object.__setattr__(self, "nu1_hz", HARD_PULSE_NU1_HZ)
            if not math.isfinite(self.nu1_hz) or self.nu1_hz <= 0:
                raise ValueError("finite pulses need nu1_hz > 0")
        else:
            raise ValueError("mode must be 'ideal' or 'finite'")

    @property
    def duration_s(self) -> float:
        if self.mode == "ideal":
            return 0.0
        return abs(self.angle_deg) / 360.0 / self.nu1_hz


@dataclass(frozen=True)
class Delay:
    dt_s: float

    def __post_init__(self):
        if not math.isfinite(self.dt_s) or self.dt_s < 0:
            raise ValueError("delay must be finite and >= 0")

    @property
    def duration_s(self) -> float:
        return self.dt_s


Segment = Union[AmplitudeSweep, PhaseSweep, HardPulse, Delay]


@dataclass(frozen=True)
class Sequence:
    segments: tuple = ()
    label: str | None = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        for seg in self.segments:
            if not isinstance(seg, (AmplitudeSweep, PhaseSweep, HardPulse, Delay)):
                raise TypeError(f"not a segment: {seg!r}")

    def __len__(self):
        return len(self.segments)

    def __iter__(self):
        return iter(self.segments)

    def __getitem__(self, i):
        return self.segments[i]

    @property
    def duration_s(self) -> float:
        return math.fsum(seg.duration_s for seg in self.segments)


@dataclass(frozen=True)
class ControlSlice:
    """One piecewise-constant control interval.

    ``pulse`` is set for hard pulses. Ideal pulses have ``dt_s == 0`` and act
    as markers; finite pulses on I are ordinary RF slices that carry the
    pulse payload so path and adiabaticity analysis can skip them.
    """

    nu1_hz: float
    phase_rad: float
    dt_s: float
    pulse: HardPulse | None = None
    segment: int = -1

    @property
    def is_marker(self) -> bool:
        return self.pulse is not None and self.dt_s == 0.0

    @property
    def is_rf(self) -> bool:
        return self.pulse is None


def build_fig1(nu1_hz: float, steps: int, step_dt_s: float) -> Sequence:
    """Echo-refocused conditional Berry phase sequence.

    ``A Phi Abar [180y] A Phibar Abar [180y]``: each block ramps the RF up,
    rotates its phase through a full turn and ramps it back down. The second
    block turns the phase the other way so the geometric phases add while the
    echo cancels the dynamic ones.
    """
    if step_dt_s <= 0:
        raise ValueError("step_dt_s must be > 0")
    return _echo_pair(nu1_hz, steps, step_dt_s, "cw", "ccw", label="fig1")


def build_naive_block(nu1_hz: float, steps: int, step_dt_s: float) -> Sequence:
    """Single ``A Phi Abar`` block with no refocusing."""
    if step_dt_s <= 0:
        raise ValueError("step_dt_s must be > 0")
    return Sequence(_block(nu1_hz, steps, step_dt_s, "cw"), label="naive")


def build_reference(kind: str, nu1_hz: float = 0.0, steps: int = 1,
                    step_dt_s: float = 1e-4) -> Sequence:
    """Reference sequence used to zero the receiver phase.

    ``bare90`` is empty (the 90 degree preparation pulse is always applied by
    the simulator). ``same_direction`` is the echo sequence with both phase
    sweeps turning the same way, so the geometric terms cancel.
    """
    if kind == "bare90":
        return Sequence((), label="bare90")
    if kind == "same_direction":
        if step_dt_s <= 0:
            raise ValueError("step_dt_s must be > 0")
        return _echo_pair(nu1_hz, steps, step_dt_s, "cw", "cw", label="same_direction")
    raise ValueError(f"unknown reference kind {kind!r}")


def same_direction_variant(seq: Sequence) -> Sequence:
    """Copy of ``seq`` with every phase sweep turned to 'cw'."""
    segs = tuple(replace(s, rotation="cw") if isinstance(s, PhaseSweep) else s
                 for s in seq)
    return Sequence(segs, label=seq.label)


def _block(nu1_hz, steps, dt, rotation):
    return (
        AmplitudeSweep("up", nu1_hz, steps, dt),
        PhaseSweep(rotation, nu1_hz, steps, dt),
        AmplitudeSweep("down", nu1_hz, steps, dt),
    )


def _echo_pair(nu1_hz, steps, dt, first, second, label):
    pi_y = HardPulse("I", 180.0, 90.0)
    segs = _block(nu1_hz, steps, dt, first) + (pi_y,) + _block(nu1_hz, steps, dt, second) + (pi_y,)
    return Sequence(segs, label=label)


def discretize(seq: Sequence) -> list[ControlSlice]:
    """Expand a sequence into control slices (zero-length RF slices dropped)."""
    out: list[ControlSlice] = []
    for i, seg in enumerate(seq):
        if isinstance(seg, AmplitudeSweep):
            n = seg.steps
            ks = range(1, n + 1) if seg.direction == "up" else range(n - 1, -1, -1)
            if seg.step_dt_s > 0:
                out.extend(ControlSlice(seg.nu1_max_hz * k / n, seg.rf_phase_rad,
                                        seg.step_dt_s, segment=i) for k in ks)
        elif isinstance(seg, PhaseSweep):
            n = seg.steps
            ks = range(1, n + 1) if seg.rotation == "cw" else range(n - 1, -1, -1)
            if seg.step_dt_s > 0:
                out.extend(ControlSlice(seg.nu1_hz, TWO_PI * k / n, seg.step_dt_s,
                                        segment=i) for k in ks)
        elif isinstance(seg, HardPulse):
            if seg.mode == "ideal" or seg.angle_deg == 0:
                out.append(ControlSlice(0.0, 0.0, 0.0, pulse=seg, segment=i))
            else:
                # negative angles rotate about the opposite axis
                axis = seg.axis_phase_deg + (180.0 if seg.angle_deg < 0 else 0.0)
                out.append(ControlSlice(seg.nu1_hz, math.radians(axis),
                                        seg.duration_s, pulse=seg, segment=i))
        elif isinstance(seg, Delay):
            if seg.dt_s > 0:
                out.append(ControlSlice(0.0, 0.0, seg.dt_s, segment=i))
    return out


def total_duration(slices) -> float:
    return math.fsum(s.dt_s for s in slices)


# ---------------------------------------------------------------------------
# adiabaticity

@dataclass(frozen=True)
class SegmentAdiabaticity:
    segment: int
    kind: str
    s_manifold: int
    min_q: float
    min_q_step: int
    theta_start_rad: float
    theta_end_rad: float

    @property
    def is_static(self) -> bool:
        return math.isinf(self.min_q)


@dataclass(frozen=True)
class AdiabaticityReport:
    """Per-segment, per-manifold adiabaticity factors.

    ``Q = omega_eff * dt / angle(b_k, b_k+1)``; ``math.inf`` marks segments in
    which the field direction never moves.
    """

    entries: tuple
    threshold: float = DEFAULT_Q_THRESHOLD

    @property
    def min_q(self) -> float:
        return min((e.min_q for e in self.entries), default=math.inf)

    @property
    def flagged(self) -> tuple:
        return tuple(e for e in self.entries if e.min_q < self.threshold)

    @property
    def ok(self) -> bool:
        return not self.flagged

    def to_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "min_q": _finite_or_none(self.min_q),
            "ok": self.ok,
            "segments": [
                {
                    "segment": e.segment, "kind": e.kind, "s_manifold": e.s_manifold,
                    "min_q": _finite_or_none(e.min_q), "min_q_step": e.min_q_step,
                    "theta_start_deg": math.degrees(e.theta_start_rad),
                    "theta_end_deg": math.degrees(e.theta_end_rad),
                }
                for e in self.entries
            ],
        }


def _finite_or_none(x):
    return x if math.isfinite(x) else None


def _unit(nu1, phase, offset):
    v = np.array([nu1 * math.cos(phase), nu1 * math.sin(phase), offset])
    n = float(np.linalg.norm(v))
    return (v / n, n) if n > 0 else (None, 0.0)


def adiabaticity_report(seq: Sequence, system: SpinSystem,
                        threshold: float = DEFAULT_Q_THRESHOLD) -> AdiabaticityReport:
    """Adiabaticity of every RF segment for both doublet lines.

    The field direction before the first RF slice of a block (at the start or
    after a hard pulse) is taken to be the static offset field along z.
    Consecutive-slice pairs are attributed to the later slice's segment.
    Pairs involving a zero field are skipped.
    """
    slices = discretize(seq)
    entries = []
    for k, offset in enumerate(system.offsets_hz):
        per_seg: dict[int, list] = {}
        prev = _unit(0.0, 0.0, offset)[0]
        step_in_seg: dict[int, int] = {}
        for sl in slices:
            if sl.pulse is not None:
                prev = _unit(0.0, 0.0, offset)[0]
                continue
            b, mag = _unit(sl.nu1_hz, sl.phase_rad, offset)
            idx = step_in_seg.get(sl.segment, 0)
            step_in_seg[sl.segment] = idx + 1
            rec = per_seg.setdefault(sl.segment, [math.inf, -1, None, None])
            theta = math.atan2(sl.nu1_hz, offset) if b is not None else math.nan
            if rec[2] is None:
                rec[2] = theta
            rec[3] = theta
            if b is not None and prev is not None:
                cosang = float(np.clip(np.dot(prev, b), -1.0, 1.0))
                # cross product norm keeps small angles accurate
                ang = math.atan2(float(np.linalg.norm(np.cross(prev, b))), cosang)
                if ang > 0:
                    q = TWO_PI * mag * sl.dt_s / ang
                    if q < rec[0]:
                        rec[0], rec[1] = q, idx
            prev = b
        for seg_idx in sorted(per_seg):
            q, at, t0, t1 = per_seg[seg_idx]
            entries.append(SegmentAdiabaticity(
                segment=seg_idx, kind=type(seq[seg_idx]).__name__, s_manifold=k,
                min_q=q, min_q_step=at, theta_start_rad=t0, theta_end_rad=t1))
    return AdiabaticityReport(tuple(entries), threshold)
