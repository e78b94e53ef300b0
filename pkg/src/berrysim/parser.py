"""Line-oriented text format for pulse sequences.

Grammar (one statement per line, ``#`` starts a comment)::

    ampsweep (up|down) AMP INT DUR [phase ANGLE]
    phasesweep (cw|ccw) AMP INT DUR
    pulse (I|S) ANGLE ANGLE (ideal|nu1 AMP)
    delay DUR

    AMP   := float ('hz' | 'khz')
    DUR   := float ('us' | 'ms' | 's')
    ANGLE := float 'deg'

Units are attached to the number (``441.8hz``, ``100us``) and matched
case-insensitively. The parser recovers at the end of each line and reports
every error it finds.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

from .sequence import AmplitudeSweep, Delay, HardPulse, PhaseSweep, Sequence

_TOKEN = re.compile(r"\S+")
_NUMBER = r"[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?"
_QUANTITY = re.compile(rf"^({_NUMBER})([A-Za-zµμ]*)$")

AMP_UNITS = {"hz": 1.0, "khz": 1e3}
# divisors keep e.g. 100us == 1e-4 exactly
DUR_UNITS = {"us": 1e6, "ms": 1e3, "s": 1.0}
KEYWORDS = ("ampsweep", "phasesweep", "pulse", "delay")


@dataclass(frozen=True)
class ParseError:
    line: int
    column: int
    message: str
    expected: frozenset = frozenset()

    def __str__(self):
        exp = ""
        if self.expected:
            exp = " (expected " + " | ".join(sorted(self.expected)) + ")"
        return f"{self.line}:{self.column}: {self.message}{exp}"


class SequenceSyntaxError(ValueError):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("\n".join(str(e) for e in self.errors))


class _LineError(Exception):
    def __init__(self, column, message, expected=()):
        self.column = column
        self.message = message
        self.expected = frozenset(expected)


class _Cursor:
    def __init__(self, tokens, eol_col):
        self.tokens = tokens
        self.i = 0
        self.eol_col = eol_col

    def next(self, expected):
        if self.i >= len(self.tokens):
            raise _LineError(self.eol_col, "unexpected end of line", expected)
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else None

    def done(self):
        if self.i < len(self.tokens):
            col, text = self.tokens[self.i]
            raise _LineError(col, f"unexpected token {text!r}", {"end of line"})


def _choice(cur, options):
    col, text = cur.next(options)
    if text not in options:
        raise _LineError(col, f"unexpected token {text!r}", options)
    return text


def _quantity(cur, units, what):
    expected = {f"<number>{u}" for u in units}
    col, text = cur.next(expected)
    m = _QUANTITY.match(text)
    if not m:
        raise _LineError(col, f"malformed {what} {text!r}", expected)
    value = float(m.group(1))
    unit = m.group(2).lower()
    if not unit:
        raise _LineError(col + len(m.group(1)), f"missing unit on {what}", expected)
    if unit not in units:
        raise _LineError(col + len(m.group(1)), f"unknown unit {m.group(2)!r}", expected)
    if not math.isfinite(value):
        raise _LineError(col, f"non-finite {what}", expected)
    return col, value, unit


def _amplitude(cur):
    col, value, unit = _quantity(cur, AMP_UNITS, "amplitude")
    if value < 0:
        raise _LineError(col, "negative amplitude", {"<number>hz", "<number>khz"})
    return value * AMP_UNITS[unit]


def _duration(cur):
    col, value, unit = _quantity(cur, DUR_UNITS, "duration")
    if value < 0:
        raise _LineError(col, "negative duration", {"<number>us", "<number>ms", "<number>s"})
    return value / DUR_UNITS[unit]


def _angle(cur):
    return _quantity(cur, {"deg": 1.0}, "angle")[1]


def _steps(cur):
    col, text = cur.next({"<integer>"})
    if not re.fullmatch(r"[+-]?\d+", text):
        raise _LineError(col, f"malformed step count {text!r}", {"<integer>"})
    n = int(text)
    if n < 1:
        raise _LineError(col, "step count must be >= 1", {"<integer>"})
    return n


def _statement(cur):
    col, kw = cur.next(KEYWORDS)
    if kw == "ampsweep":
        direction = _choice(cur, ("up", "down"))
        amp = _amplitude(cur)
        n = _steps(cur)
        dt = _duration(cur)
        phase = 0.0
        if cur.peek() is not None:
            _choice(cur, ("phase",))
            phase = _angle(cur)
        cur.done()
        return AmplitudeSweep(direction, amp, n, dt, phase)
    if kw == "phasesweep":
        rotation = _choice(cur, ("cw", "ccw"))
        amp = _amplitude(cur)
        n = _steps(cur)
        dt = _duration(cur)
        cur.done()
        return PhaseSweep(rotation, amp, n, dt)
    if kw == "pulse":
        target = _choice(cur, ("I", "S"))
        angle = _angle(cur)
        axis = _angle(cur)
        mode = _choice(cur, ("ideal", "nu1"))
        if mode == "ideal":
            cur.done()
            return HardPulse(target, angle, axis)
        amp = _amplitude(cur)
        if amp == 0:
            raise _LineError(cur.tokens[cur.i - 1][0], "finite pulse needs a non-zero amplitude",
                             {"<number>hz", "<number>khz"})
        cur.done()
        return HardPulse(target, angle, axis, mode="finite", nu1_hz=amp)
    if kw == "delay":
        dt = _duration(cur)
        cur.done()
        return Delay(dt)
    raise _LineError(col, f"unknown keyword {kw!r}", KEYWORDS)


def parse_sequence(text: str, label: str | None = None) -> Sequence:
    """Parse sequence text.

    Raises
    ------
    SequenceSyntaxError
        Carrying one :class:`ParseError` (1-based line and column, message,
        expected tokens) per bad line.
    """
    segments, errors = [], []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.rstrip("\r")
        code = line.split("#", 1)[0]
        tokens = [(m.start() + 1, m.group()) for m in _TOKEN.finditer(code)]
        if not tokens:
            continue
        cur = _Cursor(tokens, len(code.rstrip()) + 1)
        try:
            segments.append(_statement(cur))
        except _LineError as exc:
            errors.append(ParseError(lineno, exc.column, exc.message, exc.expected))
        except ValueError as exc:
            errors.append(ParseError(lineno, 1, str(exc)))
    if errors:
        raise SequenceSyntaxError(errors)
    return Sequence(tuple(segments), label=label)


def _fmt_amp(hz):
    return f"{hz!r}hz"


def _fmt_dur(s):
    us = s * 1e6
    if float(repr(us)) / 1e6 == s:
        return f"{us!r}us"
    return f"{s!r}s"


def _fmt_angle(deg):
    return f"{float(deg)!r}deg"


def format_segment(seg) -> str:
    if isinstance(seg, AmplitudeSweep):
        out = (f"ampsweep {seg.direction} {_fmt_amp(seg.nu1_max_hz)} {seg.steps} "
               f"{_fmt_dur(seg.step_dt_s)}")
        if seg.rf_phase_deg != 0:
            out += f" phase {_fmt_angle(seg.rf_phase_deg)}"
        return out
    if isinstance(seg, PhaseSweep):
        return (f"phasesweep {seg.rotation} {_fmt_amp(seg.nu1_hz)} {seg.steps} "
                f"{_fmt_dur(seg.step_dt_s)}")
    if isinstance(seg, HardPulse):
        tail = "ideal" if seg.mode == "ideal" else f"nu1 {_fmt_amp(seg.nu1_hz)}"
        return f"pulse {seg.target} {_fmt_angle(seg.angle_deg)} {_fmt_angle(seg.axis_phase_deg)} {tail}"
    if isinstance(seg, Delay):
        return f"delay {_fmt_dur(seg.dt_s)}"
    raise TypeError(f"not a segment: {seg!r}")


def format_sequence(seq: Sequence) -> str:
    """Canonical text form; ``parse_sequence(format_sequence(s)) == s``."""
    lines = []
    if seq.label:
        lines.append(f"# {seq.label}")
    lines.extend(format_segment(seg) for seg in seq)
    return "\n".join(lines) + "\n"
