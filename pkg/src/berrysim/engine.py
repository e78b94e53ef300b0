"""Run pulse sequences on the I-S pair and read out doublet-line phases.

Each doublet line is simulated as a pure-state run starting from
``|I=0> (x) |S=k>``: the Hamiltonian and every I-spin pulse are block
diagonal in S, so the two lines decouple exactly.

Runs are batched over a leading axis (grid points x ensemble members x
lines). Every batch element is computed with elementwise arithmetic only,
so results do not depend on how the batch is chunked across workers.

Phase conventions
-----------------
The signal is ``2<I+>`` restricted to one line; a bare 90_y pulse gives
``1+0i``. For the echo sequence the line-k phase equals
``+4 pi (1 - cos theta_k)`` in the adiabatic limit, i.e. ``4 gamma_k`` with
``gamma_k`` the (positive) Berry phase magnitude, and the controlled phase
``phi_0 - phi_1`` is positive and peaks at 180 degrees at the gate optimum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np
from joblib import Parallel, delayed
from scipy.linalg import expm

from . import geometry
from .kernel import (
    TWO_PI,
    RFControl,
    SpinSystem,
    build_hamiltonian,
    hard_pulse,
    product_operator,
    su2_propagator,
)
from .sequence import (
    DEFAULT_Q_THRESHOLD,
    HardPulse,
    Sequence,
    adiabaticity_report,
    build_fig1,
    build_naive_block,
    discretize,
    same_direction_variant,
)

UNDEFINED_MAG = 1e-9


# ---------------------------------------------------------------------------
# configuration

@dataclass(frozen=True)
class GaussianB1:
    """Relative RF amplitude spread: each member scales nu1 by ``1 + N(0, sigma)``."""

    sigma_rel: float

    def __post_init__(self):
        if not self.sigma_rel >= 0:
            raise ValueError("sigma_rel must be >= 0")


@dataclass(frozen=True)
class ExplicitB1:
    """Fixed list of RF amplitude scale factors, one per ensemble member."""

    scales: tuple

    def __post_init__(self):
        object.__setattr__(self, "scales", tuple(float(s) for s in self.scales))
        if not self.scales or any(not (s >= 0 and math.isfinite(s)) for s in self.scales):
            raise ValueError("scales must be a non-empty list of finite values >= 0")


@dataclass(frozen=True)
class PhaseJitter:
    """Independent zero-mean Gaussian RF phase error on every RF step."""

    sigma_rad: float

    def __post_init__(self):
        if not self.sigma_rad >= 0:
            raise ValueError("sigma_rad must be >= 0")


B1Model = Union[None, GaussianB1, ExplicitB1]


@dataclass(frozen=True)
class SimConfig:
    """Noise models and numerical settings for :func:`measure_phases`.

    ``continuation_points`` controls how single-point phases are unwrapped:
    the sequence's RF amplitudes are scaled from zero to their nominal
    values over that many points and the phase is followed continuously.
    Set it to 0 to get phases wrapped into (-180, 180].
    """

    b1: B1Model = None
    jitter: PhaseJitter | None = None
    ensemble_size: int = 1
    rng_seed: int = 0
    reference_kind: str = "bare90"
    continuation_points: int = 32
    n_jobs: int = 1

    def __post_init__(self):
        if self.ensemble_size < 1:
            raise ValueError("ensemble_size must be >= 1")
        if self.reference_kind not in ("bare90", "same_direction"):
            raise ValueError("reference_kind must be 'bare90' or 'same_direction'")
        if self.continuation_points < 0:
            raise ValueError("continuation_points must be >= 0")

    @property
    def n_members(self) -> int:
        if isinstance(self.b1, ExplicitB1):
            return len(self.b1.scales)
        if self.b1 is None and self.jitter is None:
            return 1
        return self.ensemble_size


@dataclass(frozen=True)
class Fig1Params:
    """RF settings of the echo experiment (441.8 Hz, 200 steps of 100 us by default)."""

    nu1_hz: float = 441.8
    steps: int = 200
    step_dt_s: float = 100e-6


def member_noise(config: SimConfig, index: int, n_rf: int):
    """B1 scale and per-step phase errors for ensemble member ``index``.

    Each member draws from its own generator seeded by ``(seed, index)``, so
    draws are independent of evaluation order.
    """
    rng = np.random.default_rng([int(config.rng_seed), int(index)])
    if isinstance(config.b1, GaussianB1):
        scale = max(0.0, 1.0 + config.b1.sigma_rel * rng.standard_normal())
    elif isinstance(config.b1, ExplicitB1):
        scale = config.b1.scales[index]
    else:
        scale = 1.0
    if config.jitter is not None:
        jitter = config.jitter.sigma_rad * rng.standard_normal(n_rf)
    else:
        jitter = None
    return scale, jitter


# ---------------------------------------------------------------------------
# field paths

@dataclass(frozen=True)
class FieldPathRecord:
    """Effective-field directions actually applied during one run.

    ``directions[t, k]`` is the unit field vector seen by line ``k`` during
    RF step ``t`` (NaN where the field vanishes). ``layout`` lists the RF
    blocks between hard pulses as ``("block", start, stop)`` and the pulses
    as ``("pulse", HardPulse)``.
    """

    directions: np.ndarray
    layout: tuple

    def loops(self, s_manifold: int) -> list[np.ndarray]:
        out = []
        for item in self.layout:
            if item[0] == "block":
                d = self.directions[item[1]:item[2], s_manifold]
                out.append(d[~np.isnan(d).any(axis=1)])
        return out

    def solid_angles(self, s_manifold: int) -> list[float]:
        return [geometry.solid_angle(loop) if len(loop) else 0.0
                for loop in self.loops(s_manifold)]

    def geometric_phase_deg(self, s_manifold: int) -> float:
        """Line phase predicted from enclosed areas alone.

        Every block adds its solid angle to the coherence phase and every
        ideal 180 degree pulse about axis ``a`` maps the phase ``p`` to
        ``2a - p``. Dynamic phases are assumed refocused.
        """
        omegas = iter(self.solid_angles(s_manifold))
        p = 0.0
        for item in self.layout:
            if item[0] == "block":
                p += next(omegas)
            else:
                pulse = item[1]
                if pulse.target != "I":
                    continue
                if abs(pulse.angle_deg) % 360 != 180:
                    raise ValueError("geometric prediction needs 180 degree I pulses")
                p = 2 * math.radians(pulse.axis_phase_deg) - p
        return math.degrees(p)


def _layout(slices) -> tuple:
    items, start, t = [], 0, 0
    for sl in slices:
        if sl.pulse is not None:
            if t > start:
                items.append(("block", start, t))
            items.append(("pulse", sl.pulse))
            start = t
        else:
            t += 1
    if t > start:
        items.append(("block", start, t))
    return tuple(items)


# ---------------------------------------------------------------------------
# propagation

_PREP = hard_pulse("I", 90.0, 90.0)


def _s_pulse_unitaries(system, sl, b1):
    base = build_hamiltonian(system, RFControl())
    ph = math.radians(sl.pulse.axis_phase_deg) + (math.pi if sl.pulse.angle_deg < 0 else 0.0)
    rf_s = TWO_PI * sl.pulse.nu1_hz * (math.cos(ph) * product_operator("Sx")
                                        + math.sin(ph) * product_operator("Sy"))
    h = base[None] + b1[:, None, None] * rf_s[None]
    return expm(-1j * h * sl.dt_s)


def _propagate(slices, system, amp, b1, jitter, manifolds, record=False, prepare=True):
    """Propagate a batch of runs; returns final states and optional field paths.

    amp scales the sequence's RF slices (not hard pulses); b1 scales all RF.
    """
    amp = np.asarray(amp, dtype=float)
    b1 = np.asarray(b1, dtype=float)
    manifolds = np.asarray(manifolds)
    nb = len(amp)
    psi = np.zeros((nb, 4), dtype=complex)
    psi[np.arange(nb), manifolds] = 1.0
    if prepare:
        psi = psi @ _PREP.T
    offsets = [TWO_PI * system.offset_hz(0), TWO_PI * system.offset_hz(1)]
    sz_rate = [-1j * TWO_PI * system.delta_s_hz * 0.5, 1j * TWO_PI * system.delta_s_hz * 0.5]
    n_path = sum(1 for sl in slices if sl.pulse is None)
    dirs = np.full((nb, n_path, 2, 3), np.nan) if record else None
    t = 0
    for sl in slices:
        if sl.is_marker:
            psi = psi @ hard_pulse(sl.pulse.target, sl.pulse.angle_deg,
                                   sl.pulse.axis_phase_deg).T
            continue
        if sl.pulse is not None and sl.pulse.target == "S":
            u = _s_pulse_unitaries(system, sl, b1)
            psi = np.einsum("bij,bj->bi", u, psi)
            continue
        if sl.pulse is None:
            nu = TWO_PI * sl.nu1_hz * amp * b1
            phase = sl.phase_rad + jitter[:, t] if jitter is not None else np.full(nb, sl.phase_rad)
        else:
            nu = TWO_PI * sl.nu1_hz * b1
            phase = np.full(nb, sl.phase_rad)
        fx = nu * np.cos(phase)
        fy = nu * np.sin(phase)
        for s in (0, 1):
            f = np.stack([fx, fy, np.full(nb, offsets[s])], axis=-1)
            u = su2_propagator(f, sl.dt_s)
            up, down = psi[:, s], psi[:, 2 + s]
            new_up = u[:, 0, 0] * up + u[:, 0, 1] * down
            new_down = u[:, 1, 0] * up + u[:, 1, 1] * down
            if system.delta_s_hz != 0:
                ph = np.exp(sz_rate[s] * sl.dt_s)
                new_up, new_down = ph * new_up, ph * new_down
            psi[:, s], psi[:, 2 + s] = new_up, new_down
            if record:
                norm = np.sqrt(fx * fx + fy * fy + offsets[s] ** 2)
                ok = norm > 0
                dirs[ok, t, s] = f[ok] / norm[ok, None]
        if sl.pulse is None:
            t += 1
    return psi, dirs


def _run_batch(slices, system, amp, b1, jitter, manifolds, record=False, n_jobs=1,
               prepare=True):
    nb = len(amp)
    if n_jobs == 1 or nb < 2:
        return _propagate(slices, system, amp, b1, jitter, manifolds, record, prepare)
    n_chunks = min(nb, abs(n_jobs) if n_jobs > 0 else 8)
    bounds = np.linspace(0, nb, n_chunks + 1).astype(int)
    parts = Parallel(n_jobs=n_jobs)(
        delayed(_propagate)(
            slices, system, amp[a:b], b1[a:b],
            None if jitter is None else jitter[a:b], manifolds[a:b], record, prepare)
        for a, b in zip(bounds[:-1], bounds[1:]) if b > a
    )
    psi = np.concatenate([p[0] for p in parts])
    dirs = np.concatenate([p[1] for p in parts]) if record else None
    return psi, dirs


def _line_signals(psi, manifolds):
    sig = np.empty(len(psi), dtype=complex)
    for k in (0, 1):
        m = manifolds == k
        up, down = psi[m, k], psi[m, 2 + k]
        sig[m] = 2 * np.conj(up) * down
    return sig


def run_once(seq, system: SpinSystem, s_manifold: int, b1_scale: float = 1.0,
             jitter=None, prepare: bool = True):
    """Single pure-state run for one doublet line.

    Parameters
    ----------
    seq : Sequence or list of ControlSlice
    jitter : array_like or None
        RF phase error (rad) added to each RF step, one entry per RF slice.

    Returns
    -------
    signal : complex
    path : FieldPathRecord
    """
    slices = discretize(seq) if isinstance(seq, Sequence) else list(seq)
    if not slices and not prepare:
        raise ValueError("nothing to run: empty sequence and no preparation pulse")
    n_path = sum(1 for sl in slices if sl.pulse is None)
    jit = None
    if jitter is not None:
        jit = np.asarray(jitter, dtype=float).reshape(1, -1)
        if jit.shape[1] != n_path:
            raise ValueError(f"jitter needs {n_path} entries, got {jit.shape[1]}")
    m = np.array([s_manifold])
    psi, dirs = _propagate(slices, system, np.ones(1), np.array([b1_scale]), jit, m,
                           record=True, prepare=prepare)
    signal = complex(_line_signals(psi, m)[0])
    return signal, FieldPathRecord(dirs[0], _layout(slices))


def final_states(seq, system: SpinSystem, s_manifold: int, b1_scale: float = 1.0):
    """Final state vector of a noiseless run (used by norm checks)."""
    slices = discretize(seq) if isinstance(seq, Sequence) else list(seq)
    psi, _ = _propagate(slices, system, np.ones(1), np.array([b1_scale]), None,
                        np.array([s_manifold]))
    return psi[0]


# ---------------------------------------------------------------------------
# phase measurement

def unwrap_phases(wrapped_deg) -> list[float]:
    """Remove 360 degree jumps so each step has magnitude at most 180."""
    arr = np.asarray(wrapped_deg, dtype=float)
    if arr.size == 0:
        return []
    return np.unwrap(arr, period=360.0).tolist()


@dataclass(frozen=True)
class PhaseResult:
    """Per-line phases relative to the reference run, in degrees.

    ``controlled_deg = phi0_deg - phi1_deg``; ``gamma*_deg`` are the line
    phases divided by four. Phases are NaN (and ``defined`` False) when the
    ensemble-mean signal of a line vanishes.
    """

    phi0_deg: float
    phi1_deg: float
    mag0: float
    mag1: float
    nu1_hz: float | None = None

    @property
    def controlled_deg(self) -> float:
        return self.phi0_deg - self.phi1_deg

    @property
    def gamma0_deg(self) -> float:
        return self.phi0_deg / 4

    @property
    def gamma1_deg(self) -> float:
        return self.phi1_deg / 4

    @property
    def defined(self) -> tuple[bool, bool]:
        return (math.isfinite(self.phi0_deg), math.isfinite(self.phi1_deg))

    def to_dict(self) -> dict:
        d = {
            "phi0_deg": self.phi0_deg, "phi1_deg": self.phi1_deg,
            "gamma0_deg": self.gamma0_deg, "gamma1_deg": self.gamma1_deg,
            "controlled_deg": self.controlled_deg,
            "mag0": self.mag0, "mag1": self.mag1,
            "phase_defined": list(self.defined),
        }
        if self.nu1_hz is not None:
            d["nu1_hz"] = self.nu1_hz
        return {k: (None if isinstance(v, float) and math.isnan(v) else v) for k, v in d.items()}


def _mean_signals(slices, system, config, amp_grid):
    """Ensemble-mean line signals for every amplitude scale in ``amp_grid``.

    Returns an array of shape ``(len(amp_grid), 2)``.
    """
    n_path = sum(1 for sl in slices if sl.pulse is None)
    n_mem = config.n_members
    noise = [member_noise(config, i, n_path) for i in range(n_mem)]
    scales = np.array([n[0] for n in noise])
    amp_grid = np.asarray(amp_grid, dtype=float)
    n_g = len(amp_grid)
    # batch order: grid point, member, line
    amp = np.repeat(amp_grid, n_mem * 2)
    b1 = np.tile(np.repeat(scales, 2), n_g)
    lines = np.tile(np.array([0, 1]), n_g * n_mem)
    jit = None
    if config.jitter is not None:
        per_member = np.stack([n[1] for n in noise])
        jit = np.tile(np.repeat(per_member, 2, axis=0), (n_g, 1))
    psi, _ = _run_batch(slices, system, amp, b1, jit, lines, n_jobs=config.n_jobs)
    sig = _line_signals(psi, lines).reshape(n_g, n_mem, 2)
    return sig.mean(axis=1)


def _phases_from_signals(mean_sig):
    mags = np.abs(mean_sig)
    ph = np.degrees(np.angle(mean_sig))
    return ph, mags


def _continuation_grid(config):
    m = config.continuation_points
    return np.linspace(0.0, 1.0, m + 1) if m > 0 else np.array([1.0])


def _reference_slices(seq, kind):
    if kind == "bare90":
        return []
    return discretize(same_direction_variant(seq))


def measure_phases(seq, system: SpinSystem, config: SimConfig = SimConfig()) -> PhaseResult:
    """Line phases of ``seq`` against the configured reference run.

    Complex signals are averaged over the ensemble (as a receiver would) and
    phases taken from the averages.
    """
    slices = discretize(seq)
    grid = _continuation_grid(config)
    main = _mean_signals(slices, system, config, grid)
    ref = _mean_signals(_reference_slices(seq, config.reference_kind), system, config, grid)
    main_ph, mags = _phases_from_signals(main)
    ref_ph, _ = _phases_from_signals(ref)
    phis = []
    for k in (0, 1):
        if mags[-1, k] < UNDEFINED_MAG:
            phis.append(math.nan)
            continue
        a = np.unwrap(main_ph[:, k], period=360.0)[-1]
        b = np.unwrap(ref_ph[:, k], period=360.0)[-1]
        phis.append(float(a - b))
    return PhaseResult(phis[0], phis[1], float(mags[-1, 0]), float(mags[-1, 1]))


@dataclass(frozen=True)
class SweepRow:
    """One grid point; ``analytic_controlled_deg`` is the observed-scale ``4(g0 - g1)``."""

    result: PhaseResult
    analytic_gamma0_deg: float
    analytic_gamma1_deg: float
    analytic_controlled_deg: float

    @property
    def nu1_hz(self) -> float:
        return self.result.nu1_hz


def sweep_nu1(nu1_grid, system: SpinSystem, config: SimConfig = SimConfig(),
              steps: int = 200, step_dt_s: float = 100e-6) -> list[SweepRow]:
    """Echo experiment at every RF amplitude of an ascending grid from 0.

    Phases are unwrapped along the grid, so the grid must be fine enough
    that line phases move by less than 180 degrees between points.
    """
    grid = np.asarray(nu1_grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise ValueError("nu1_grid must be a non-empty 1-d sequence")
    if grid[0] != 0 or np.any(np.diff(grid) <= 0):
        raise ValueError("nu1_grid must start at 0 and increase strictly")
    base = build_fig1(1.0, steps, step_dt_s)
    slices = discretize(base)
    main = _mean_signals(slices, system, config, grid)
    ref = _mean_signals(_reference_slices(base, config.reference_kind), system, config, grid)
    main_ph, mags = _phases_from_signals(main)
    ref_ph, _ = _phases_from_signals(ref)
    phi = np.empty_like(main_ph)
    for k in (0, 1):
        phi[:, k] = np.unwrap(main_ph[:, k], period=360.0) - np.unwrap(ref_ph[:, k], period=360.0)
        phi[mags[:, k] < UNDEFINED_MAG, k] = np.nan
    rows = []
    for i, nu in enumerate(grid):
        res = PhaseResult(float(phi[i, 0]), float(phi[i, 1]), float(mags[i, 0]),
                          float(mags[i, 1]), nu1_hz=float(nu))
        g0, g1 = analytic_gammas_deg(system, nu)
        rows.append(SweepRow(res, g0, g1, 4.0 * (g0 - g1)))
    return rows


def analytic_gammas_deg(system: SpinSystem, nu1_hz: float) -> tuple[float, float]:
    """Adiabatic Berry phase magnitudes ``pi(1 - cos theta_k)`` in degrees."""
    if nu1_hz == 0:
        return 0.0, 0.0
    g = [float(geometry.line_phase_deg(off, nu1_hz)) / 4 for off in system.offsets_hz]
    return g[0], g[1]


# ---------------------------------------------------------------------------
# ensemble experiments

def _circular_std_deg(signals):
    r = np.abs(np.mean(signals / np.abs(signals)))
    return math.degrees(math.sqrt(max(0.0, -2.0 * math.log(max(r, 1e-300)))))


@dataclass(frozen=True)
class DephasingResult:
    sigma_rel: float
    ensemble_size: int
    naive_mag: tuple
    fig1_mag: tuple
    naive_phase_spread_deg: tuple
    fig1_phase_spread_deg: tuple

    def to_dict(self) -> dict:
        return {
            "sigma_rel": self.sigma_rel,
            "ensemble_size": self.ensemble_size,
            "naive_mag": list(self.naive_mag),
            "fig1_mag": list(self.fig1_mag),
            "naive_phase_spread_deg": list(self.naive_phase_spread_deg),
            "fig1_phase_spread_deg": list(self.fig1_phase_spread_deg),
        }


def _member_signals(slices, system, scales, jitters, n_jobs=1, record=False):
    n = len(scales)
    lines = np.tile(np.array([0, 1]), n)
    b1 = np.repeat(np.asarray(scales, dtype=float), 2)
    jit = None if jitters is None else np.repeat(np.asarray(jitters), 2, axis=0)
    psi, dirs = _run_batch(slices, system, np.ones(2 * n), b1, jit, lines,
                           record=record, n_jobs=n_jobs)
    return _line_signals(psi, lines).reshape(n, 2), dirs


def dephasing_experiment(system: SpinSystem, params: Fig1Params = Fig1Params(),
                         sigma_rel: float = 0.05,
                         config: SimConfig = SimConfig(ensemble_size=200)) -> DephasingResult:
    """Compare a single unrefocused block with the echo sequence under B1 spread.

    Both are run over the same Gaussian ensemble of RF scale factors; the
    ensemble-mean magnitude per line measures how badly the dynamic phase
    dephases the signal.
    """
    if sigma_rel < 0:
        raise ValueError("sigma_rel must be >= 0")
    cfg = SimConfig(b1=GaussianB1(sigma_rel), ensemble_size=config.ensemble_size,
                    rng_seed=config.rng_seed, n_jobs=config.n_jobs)
    scales = [member_noise(cfg, i, 0)[0] for i in range(cfg.ensemble_size)]
    naive = discretize(build_naive_block(params.nu1_hz, params.steps, params.step_dt_s))
    fig1 = discretize(build_fig1(params.nu1_hz, params.steps, params.step_dt_s))
    sn, _ = _member_signals(naive, system, scales, None, cfg.n_jobs)
    sf, _ = _member_signals(fig1, system, scales, None, cfg.n_jobs)
    return DephasingResult(
        sigma_rel=sigma_rel, ensemble_size=cfg.ensemble_size,
        naive_mag=tuple(float(abs(sn[:, k].mean())) for k in (0, 1)),
        fig1_mag=tuple(float(abs(sf[:, k].mean())) for k in (0, 1)),
        naive_phase_spread_deg=tuple(_circular_std_deg(sn[:, k]) for k in (0, 1)),
        fig1_phase_spread_deg=tuple(_circular_std_deg(sf[:, k]) for k in (0, 1)),
    )


def _wrap_near(values_deg, center_deg):
    return center_deg + (np.asarray(values_deg) - center_deg + 180.0) % 360.0 - 180.0


@dataclass(frozen=True)
class JitterStats:
    sigma_phase_rad: float
    trials: int
    seed: int
    controlled_deg: np.ndarray = field(repr=False)
    predicted_controlled_deg: np.ndarray = field(repr=False)
    solid_angles: np.ndarray = field(repr=False)
    naive_phase_deg: np.ndarray = field(repr=False)
    naive_dynamic_phase_deg: np.ndarray = field(repr=False)
    noiseless_controlled_deg: float = 0.0

    @property
    def mean_controlled_deg(self) -> float:
        return float(np.mean(self.controlled_deg))

    @property
    def std_controlled_deg(self) -> float:
        return float(np.std(self.controlled_deg))

    @property
    def naive_phase_std_deg(self) -> tuple:
        return tuple(float(np.std(self.naive_phase_deg[:, k])) for k in (0, 1))

    @property
    def naive_dynamic_std_deg(self) -> tuple:
        return tuple(float(np.std(self.naive_dynamic_phase_deg[:, k])) for k in (0, 1))

    @property
    def max_oracle_error_deg(self) -> float:
        return float(np.max(np.abs(self.controlled_deg - self.predicted_controlled_deg)))

    def to_dict(self) -> dict:
        return {
            "sigma_phase_deg": math.degrees(self.sigma_phase_rad),
            "trials": self.trials,
            "seed": self.seed,
            "noiseless_controlled_deg": self.noiseless_controlled_deg,
            "mean_controlled_deg": self.mean_controlled_deg,
            "std_controlled_deg": self.std_controlled_deg,
            "naive_phase_std_deg": list(self.naive_phase_std_deg),
            "naive_dynamic_std_deg": list(self.naive_dynamic_std_deg),
            "max_solid_angle_oracle_error_deg": self.max_oracle_error_deg,
            "controlled_deg": self.controlled_deg.tolist(),
            "predicted_controlled_deg": self.predicted_controlled_deg.tolist(),
            "solid_angles_sr": self.solid_angles.tolist(),
        }


def jitter_robustness(system: SpinSystem, params: Fig1Params = Fig1Params(),
                      sigma_phase: float = math.radians(2.0), trials: int = 100,
                      seed: int = 0, n_jobs: int = 1) -> JitterStats:
    """Controlled phase of the echo sequence under random RF phase errors.

    Each trial perturbs every RF step's phase independently. Per trial the
    line phases are compared with the solid angles enclosed by the recorded
    field paths, and the same jitter draw is applied to a single unrefocused
    block for comparison.
    """
    if sigma_phase < 0:
        raise ValueError("sigma_phase must be >= 0")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    fig1_seq = build_fig1(params.nu1_hz, params.steps, params.step_dt_s)
    fig1 = discretize(fig1_seq)
    naive = discretize(build_naive_block(params.nu1_hz, params.steps, params.step_dt_s))
    cfg = SimConfig(jitter=PhaseJitter(sigma_phase), ensemble_size=trials, rng_seed=seed)
    n_fig1 = sum(1 for sl in fig1 if sl.pulse is None)
    jit = np.stack([member_noise(cfg, i, n_fig1)[1] for i in range(trials)])
    n_naive = sum(1 for sl in naive if sl.pulse is None)

    # the noiseless run anchors the branch of the (small) per-trial deviations
    clean = measure_phases(fig1_seq, system, SimConfig())
    sig, dirs = _member_signals(fig1, system, np.ones(trials), jit, n_jobs, record=True)
    phi = np.stack([_wrap_near(np.degrees(np.angle(sig[:, k])), p)
                    for k, p in enumerate((clean.phi0_deg, clean.phi1_deg))], axis=1)
    controlled = phi[:, 0] - phi[:, 1]

    layout = _layout(fig1)
    predicted = np.empty(trials)
    omegas = np.empty((trials, 2, sum(1 for it in layout if it[0] == "block")))
    for i in range(trials):
        rec = FieldPathRecord(dirs[2 * i], layout)
        for k in (0, 1):
            omegas[i, k] = rec.solid_angles(k)
        p = [rec.geometric_phase_deg(k) for k in (0, 1)]
        predicted[i] = p[0] - p[1]

    # naive block reuses the first half of each trial's jitter draw
    sn, _ = _member_signals(naive, system, np.ones(trials), jit[:, :n_naive], n_jobs)
    clean_naive, _ = _member_signals(naive, system, np.ones(1), None)
    naive_phase = np.stack([_wrap_near(np.degrees(np.angle(sn[:, k])),
                                       math.degrees(np.angle(clean_naive[0, k])))
                            for k in (0, 1)], axis=1)
    geo = np.array([[math.degrees(geometry.solid_angle(FieldPathRecord(dirs[2 * i], layout)
                                                        .loops(k)[0]))
                     for k in (0, 1)] for i in range(trials)])
    naive_dynamic = naive_phase - geo

    return JitterStats(
        sigma_phase_rad=sigma_phase, trials=trials, seed=seed,
        controlled_deg=controlled, predicted_controlled_deg=predicted,
        solid_angles=omegas, naive_phase_deg=naive_phase,
        naive_dynamic_phase_deg=naive_dynamic,
        noiseless_controlled_deg=clean.controlled_deg,
    )


@dataclass(frozen=True)
class SweepRateRow:
    step_dt_s: float
    min_q: float
    max_abs_error_deg: tuple
    rows: tuple = field(repr=False, default=())

    def to_dict(self) -> dict:
        return {"dwell_us": self.step_dt_s * 1e6, "min_q": self.min_q,
                "max_abs_phase_error_deg_line0": self.max_abs_error_deg[0],
                "max_abs_phase_error_deg_line1": self.max_abs_error_deg[1]}


def default_nu1_grid(nu1_max_hz: float = 774.0, step_hz: float = 5.0) -> np.ndarray:
    """Ascending grid from 0 in ``step_hz`` increments, closed at ``nu1_max_hz``."""
    if step_hz <= 0 or not math.isfinite(step_hz):
        raise ValueError("grid step must be > 0")
    if nu1_max_hz < 0:
        raise ValueError("nu1 maximum must be >= 0")
    n = int(math.floor(nu1_max_hz / step_hz + 1e-9))
    grid = [i * step_hz for i in range(n + 1)]
    if nu1_max_hz - grid[-1] > 1e-9 * max(1.0, nu1_max_hz):
        grid.append(float(nu1_max_hz))
    return np.array(grid)


def sweep_rate_study(system: SpinSystem, params: Fig1Params = Fig1Params(),
                     step_dts=(100e-6, 50e-6, 25e-6), nu1_grid=None,
                     config: SimConfig = SimConfig(),
                     q_threshold: float = DEFAULT_Q_THRESHOLD) -> list[SweepRateRow]:
    """Adiabaticity study: same 200-step sequence at several dwell times.

    The phase error is the largest deviation of the simulated Berry phase
    (line phase / 4) from its adiabatic value over the amplitude grid; the
    minimum Q is evaluated at ``params.nu1_hz``.
    """
    step_dts = list(step_dts)
    if not step_dts:
        raise ValueError("need at least one dwell time")
    if any(not (dt > 0) for dt in step_dts):
        raise ValueError("dwell times must be positive")
    grid = default_nu1_grid(774.0, 5.0) if nu1_grid is None else np.asarray(nu1_grid, float)
    out = []
    for dt in step_dts:
        rows = sweep_nu1(grid, system, config, params.steps, dt)
        err = []
        for k in (0, 1):
            e = [abs((r.result.gamma0_deg if k == 0 else r.result.gamma1_deg)
                     - (r.analytic_gamma0_deg if k == 0 else r.analytic_gamma1_deg))
                 for r in rows]
            err.append(float(np.nanmax(e)))
        rep = adiabaticity_report(build_fig1(params.nu1_hz, params.steps, dt), system,
                                  q_threshold)
        out.append(SweepRateRow(dt, rep.min_q, tuple(err), tuple(rows)))
    return out


def with_s_echo(seq: Sequence) -> Sequence:
    """Wrap ``seq`` in a pair of 180 degree pulses on the control spin S."""
    pi_s = HardPulse("S", 180.0, 90.0)
    return Sequence((pi_s,) + seq.segments + (pi_s,), label=seq.label)
