"""
Two-channel time-tag reduction: coincidences, accidentals, Klyshko
efficiencies, generated pair rate and brightness.

Window convention: ``window_ps`` = t_w is the largest accepted delay, so a
signal and an idler event coincide when |t_s - t_i| <= t_w. The accepted
interval is 2 t_w wide, which makes r_cA = 2 r_s r_i t_w the exact
expectation for uncorrelated streams.

Matching is one-to-one: signal events are visited in time order and each
takes the nearest still-unmatched idler inside the window (the earlier idler
wins a tie).

Tag files are CSV with header ``channel,timestamp_ps`` (0 = signal,
1 = idler, integer picoseconds), optionally gzip-compressed.
"""

from __future__ import annotations

import csv
import gzip
import io
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    AccidentalsDominate,
    EmptyStream,
    NoCorrectedCoincidences,
    TagFormatError,
)

__all__ = [
    "SIGNAL",
    "IDLER",
    "TagStream",
    "CoincidenceCounts",
    "PairRate",
    "CoincidenceReport",
    "count_coincidences",
    "count_coincidences_bruteforce",
    "accidental_rate",
    "klyshko_efficiencies",
    "generated_pair_rate",
    "brightness",
    "analyze_stream",
    "generate_synthetic_tags",
    "read_tag_file",
    "write_tag_file",
]

SIGNAL = 0
IDLER = 1
_PS = 1e-12


@dataclass(frozen=True, eq=False)
class TagStream:
    """Per-channel sorted timestamps in integer picoseconds.

    Attributes:
        signal, idler: int64 timestamp arrays, non-decreasing.
        duration: Acquisition time [s].
        resorted: True if the input was out of order and got sorted on load.
    """

    signal: np.ndarray
    idler: np.ndarray
    duration: float
    resorted: bool = False

    def __post_init__(self):
        sig = np.asarray(self.signal, dtype=np.int64)
        idl = np.asarray(self.idler, dtype=np.int64)
        resorted = self.resorted
        for name, arr in (("signal", sig), ("idler", idl)):
            if arr.ndim != 1:
                raise ValueError(f"{name} timestamps must be 1-D")
        if np.any(np.diff(sig) < 0):
            sig, resorted = np.sort(sig, kind="stable"), True
        if np.any(np.diff(idl) < 0):
            idl, resorted = np.sort(idl, kind="stable"), True
        if not self.duration > 0:
            raise ValueError("duration must be positive")
        object.__setattr__(self, "signal", sig)
        object.__setattr__(self, "idler", idl)
        object.__setattr__(self, "resorted", resorted)
        span = self.span_ps * _PS
        if self.duration < span * (1 - 1e-12):
            raise ValueError(f"duration {self.duration} s shorter than the tag span {span} s")

    @property
    def span_ps(self) -> int:
        both = [a for a in (self.signal, self.idler) if len(a)]
        if not both:
            return 0
        return int(max(a[-1] for a in both) - min(a[0] for a in both))

    @property
    def events(self) -> list[tuple[int, int]]:
        """(channel, timestamp) pairs in time order, signal first on ties."""
        ch = np.concatenate([np.zeros(len(self.signal), np.int64), np.ones(len(self.idler), np.int64)])
        ts = np.concatenate([self.signal, self.idler])
        order = np.lexsort((ch, ts))
        return list(zip(ch[order].tolist(), ts[order].tolist()))


@dataclass(frozen=True)
class CoincidenceCounts:
    n_s: int
    n_i: int
    n_c: int


def count_coincidences(stream: TagStream, window_ps: int) -> CoincidenceCounts:
    """Streaming one-to-one coincidence counter (see module docstring)."""
    if not window_ps > 0:
        raise ValueError("window_ps must be positive")
    sig = stream.signal.tolist()
    idl = stream.idler.tolist()
    if not sig and not idl:
        raise EmptyStream("tag stream has no events")
    matched = [False] * len(idl)
    n_idl = len(idl)
    lo = 0
    n_c = 0
    for t in sig:
        start = t - window_ps
        while lo < n_idl and (idl[lo] < start or matched[lo]):
            lo += 1
        best = -1
        best_d = window_ps + 1
        j = lo
        stop = t + window_ps
        while j < n_idl and idl[j] <= stop:
            if not matched[j]:
                d = abs(idl[j] - t)
                if d < best_d:
                    best, best_d = j, d
            j += 1
        if best >= 0:
            matched[best] = True
            n_c += 1
    return CoincidenceCounts(n_s=len(sig), n_i=n_idl, n_c=n_c)


def count_coincidences_bruteforce(stream: TagStream, window_ps: int) -> CoincidenceCounts:
    """All-pairs reference matcher with the same pairing rule; O(N*M)."""
    sig = np.asarray(stream.signal, dtype=np.int64)
    idl = np.asarray(stream.idler, dtype=np.int64)
    if len(sig) == 0 and len(idl) == 0:
        raise EmptyStream("tag stream has no events")
    free = np.ones(len(idl), dtype=bool)
    n_c = 0
    for t in sig:
        dist = np.abs(idl - t)
        ok = free & (dist <= window_ps)
        if ok.any():
            cand = np.flatnonzero(ok)
            pick = cand[np.argmin(dist[cand])]
            free[pick] = False
            n_c += 1
    return CoincidenceCounts(n_s=len(sig), n_i=len(idl), n_c=n_c)


def accidental_rate(r_s: float, r_i: float, window_ps: float) -> float:
    """r_cA = 2 r_s r_i t_w [Hz]."""
    return 2.0 * r_s * r_i * window_ps * _PS


def klyshko_efficiencies(n_s: float, n_i: float, n_c_corrected: float) -> tuple[float, float]:
    """Klyshko efficiencies (eta_s, eta_i).

    The efficiency of one arm is the accidental-corrected coincidence count
    divided by the singles of the other (heralding) arm:
    eta_s = n_c / n_i and eta_i = n_c / n_s.
    """
    if not n_c_corrected > 0:
        raise NoCorrectedCoincidences(f"corrected coincidences {n_c_corrected} <= 0")
    return n_c_corrected / n_i, n_c_corrected / n_s


def _poisson_propagate(func, counts: dict[str, float]) -> float:
    """First-order propagation of independent Poisson variances (var = count)."""
    var = 0.0
    for key, value in counts.items():
        if value <= 0:
            continue
        h = 1e-4 * value
        up = dict(counts, **{key: value + h})
        down = dict(counts, **{key: value - h})
        deriv = (func(**up) - func(**down)) / (2 * h)
        var += deriv * deriv * value
    return math.sqrt(var)


@dataclass(frozen=True)
class PairRate:
    """Generated pair rate with first-order shot-noise uncertainties."""

    r_c: float
    sigma_r_c: float
    r_c_alt: float
    eta_s: float
    eta_i: float
    sigma_eta_s: float
    sigma_eta_i: float
    r_cA: float


def generated_pair_rate(n_s: int, n_i: int, n_c: int, window_ps: float, duration: float) -> PairRate:
    """Generated pair rate from raw counts.

    r_c = (r_cM - r_cA) / (eta_s eta_i) = r_sM r_iM / (r_cM - r_cA); both forms
    are evaluated and must agree to 1e-9. Uncertainties treat the
    signal-only, idler-only and coincidence counts as independent Poisson
    variables.

    Raises:
        AccidentalsDominate: if r_cM <= r_cA.
    """
    r_s, r_i, r_cm = n_s / duration, n_i / duration, n_c / duration
    r_ca = accidental_rate(r_s, r_i, window_ps)
    if not r_cm > r_ca:
        raise AccidentalsDominate(
            f"measured coincidences {r_cm:.6g} Hz do not exceed accidentals {r_ca:.6g} Hz "
            f"(n_s={n_s}, n_i={n_i}, n_c={n_c})"
        )
    eta_s, eta_i = klyshko_efficiencies(r_s, r_i, r_cm - r_ca)
    first = (r_cm - r_ca) / (eta_s * eta_i)
    second = r_s * r_i / (r_cm - r_ca)
    if not math.isclose(first, second, rel_tol=1e-9):
        raise ArithmeticError(f"pair-rate forms disagree: {first!r} vs {second!r}")

    def split(a, b, c):
        s, i = a + c, b + c
        corr = c - 2.0 * s * i * window_ps * _PS / duration
        return s, i, corr

    def rate(a, b, c):
        s, i, corr = split(a, b, c)
        return s * i / corr / duration

    def eff_s(a, b, c):
        s, i, corr = split(a, b, c)
        return corr / i

    def eff_i(a, b, c):
        s, i, corr = split(a, b, c)
        return corr / s

    counts = {"a": float(n_s - n_c), "b": float(n_i - n_c), "c": float(n_c)}
    return PairRate(
        r_c=second,
        sigma_r_c=_poisson_propagate(rate, counts),
        r_c_alt=first,
        eta_s=eta_s,
        eta_i=eta_i,
        sigma_eta_s=_poisson_propagate(eff_s, counts),
        sigma_eta_i=_poisson_propagate(eff_i, counts),
        r_cA=r_ca,
    )


def brightness(r_c: float, pump_power_mw: float, bandwidth_ghz: float) -> float:
    """Pairs / (s mW GHz)."""
    if not (r_c > 0 and pump_power_mw > 0 and bandwidth_ghz > 0):
        raise ValueError("pair rate, pump power and bandwidth must be positive")
    return r_c / (pump_power_mw * bandwidth_ghz)


@dataclass(frozen=True)
class CoincidenceReport:
    window_ps: int
    duration_s: float
    n_s: int
    n_i: int
    n_c: int
    r_sM: float
    r_iM: float
    r_cM: float
    r_cA: float
    eta_s: float
    eta_i: float
    sigma_eta_s: float
    sigma_eta_i: float
    r_c: float
    sigma_r_c: float
    brightness: float | None = None
    sigma_brightness: float | None = None

    FIELDS = (
        "window_ps", "duration_s", "n_s", "n_i", "n_c", "r_sM", "r_iM", "r_cM", "r_cA",
        "eta_s", "eta_i", "sigma_eta_s", "sigma_eta_i", "r_c", "sigma_r_c",
        "brightness", "sigma_brightness",
    )

    def as_row(self) -> list[str]:
        return [_fmt(v) for v in (getattr(self, k) for k in self.FIELDS)]

    def to_text(self) -> str:
        return "".join(f"{k}: {_fmt(getattr(self, k))}\n" for k in self.FIELDS)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return f"{value:.9g}"


def analyze_stream(
    stream: TagStream,
    window_ps: int,
    pump_power_mw: float | None = None,
    bandwidth_ghz: float | None = None,
    power_rel_error: float = 0.0,
) -> CoincidenceReport:
    """Full reduction of one acquisition to a CoincidenceReport."""
    counts = count_coincidences(stream, window_ps)
    rate = generated_pair_rate(counts.n_s, counts.n_i, counts.n_c, window_ps, stream.duration)
    bright = sigma_bright = None
    if pump_power_mw is not None and bandwidth_ghz is not None:
        bright = brightness(rate.r_c, pump_power_mw, bandwidth_ghz)
        sigma_bright = bright * math.hypot(rate.sigma_r_c / rate.r_c, power_rel_error)
    d = stream.duration
    return CoincidenceReport(
        window_ps=int(window_ps),
        duration_s=d,
        n_s=counts.n_s,
        n_i=counts.n_i,
        n_c=counts.n_c,
        r_sM=counts.n_s / d,
        r_iM=counts.n_i / d,
        r_cM=counts.n_c / d,
        r_cA=rate.r_cA,
        eta_s=rate.eta_s,
        eta_i=rate.eta_i,
        sigma_eta_s=rate.sigma_eta_s,
        sigma_eta_i=rate.sigma_eta_i,
        r_c=rate.r_c,
        sigma_r_c=rate.sigma_r_c,
        brightness=bright,
        sigma_brightness=sigma_bright,
    )


def _dead_time_filter(ts: np.ndarray, dead_ps: int) -> np.ndarray:
    if dead_ps <= 0 or len(ts) == 0:
        return ts
    keep = []
    last = None
    for t in ts.tolist():
        if last is None or t - last >= dead_ps:
            keep.append(t)
            last = t
    return np.asarray(keep, dtype=np.int64)


def generate_synthetic_tags(
    pair_rate: float,
    eta_s: float,
    eta_i: float,
    duration: float,
    seed: int,
    jitter_ps: float = 0.0,
    dark_rate_s: float = 0.0,
    dark_rate_i: float = 0.0,
    dead_time_ps: int = 0,
    idler_delay_ps: int = 0,
) -> TagStream:
    """Poisson pair source seen through lossy, jittery detectors.

    Pairs arrive as a Poisson process of rate ``pair_rate`` and each photon
    survives its arm with probability eta (independent Bernoulli thinning).
    Thinning is sampled through the equivalent split into independent
    Poisson processes for both/signal-only/idler-only detection, so very high
    pair rates with low efficiencies stay cheap. Detected photons get Gaussian
    timing jitter; dark counts are independent Poisson processes. Timestamps
    are rounded to integer picoseconds and clipped to [0, duration).
    """
    if min(pair_rate, dark_rate_s, dark_rate_i, jitter_ps) < 0 or not duration > 0:
        raise ValueError("rates and jitter must be >= 0 and duration > 0")
    if not (0 <= eta_s <= 1 and 0 <= eta_i <= 1):
        raise ValueError("efficiencies must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    total_ps = duration / _PS
    mean = pair_rate * duration
    n_both = rng.poisson(mean * eta_s * eta_i)
    n_s_only = rng.poisson(mean * eta_s * (1 - eta_i))
    n_i_only = rng.poisson(mean * (1 - eta_s) * eta_i)
    t_both = rng.uniform(0, total_ps, n_both)
    t_s_only = rng.uniform(0, total_ps, n_s_only)
    t_i_only = rng.uniform(0, total_ps, n_i_only)
    sig = np.concatenate([t_both, t_s_only])
    idl = np.concatenate([t_both, t_i_only]) + idler_delay_ps
    if jitter_ps > 0:
        sig = sig + rng.normal(0, jitter_ps, len(sig))
        idl = idl + rng.normal(0, jitter_ps, len(idl))
    sig = np.concatenate([sig, rng.uniform(0, total_ps, rng.poisson(dark_rate_s * duration))])
    idl = np.concatenate([idl, rng.uniform(0, total_ps, rng.poisson(dark_rate_i * duration))])
    last = max(int(math.ceil(total_ps)) - 1, 0)
    sig = np.clip(np.rint(sig), 0, last).astype(np.int64)
    idl = np.clip(np.rint(idl), 0, last).astype(np.int64)
    sig.sort(kind="stable")
    idl.sort(kind="stable")
    sig = _dead_time_filter(sig, int(dead_time_ps))
    idl = _dead_time_filter(idl, int(dead_time_ps))
    return TagStream(signal=sig, idler=idl, duration=duration)


def _open_text(path: Path, mode: str):
    if path.suffix == ".gz":
        return io.TextIOWrapper(gzip.open(path, mode + "b"), encoding="utf-8", newline="")
    return open(path, mode, encoding="utf-8", newline="")


def read_tag_file(path, duration: float | None = None) -> TagStream:
    """Load a tag CSV (``.gz`` is decompressed).

    ``duration`` defaults to the span between the first and last tag.

    Raises:
        TagFormatError: bad header or row, with the 1-based line number.
        EmptyStream: file has a header but no events.
    """
    path = Path(path)
    sig: list[int] = []
    idl: list[int] = []
    with _open_text(path, "r") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["channel", "timestamp_ps"]:
            raise TagFormatError(f"{path}: line 1: expected header 'channel,timestamp_ps'")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise TagFormatError(f"{path}: line {lineno}: expected 2 fields, got {len(row)}")
            try:
                ch = int(row[0])
                ts = int(row[1])
            except ValueError:
                raise TagFormatError(f"{path}: line {lineno}: non-integer field in {row!r}") from None
            if ch == SIGNAL:
                sig.append(ts)
            elif ch == IDLER:
                idl.append(ts)
            else:
                raise TagFormatError(f"{path}: line {lineno}: channel must be 0 or 1, got {ch}")
            if ts < 0:
                raise TagFormatError(f"{path}: line {lineno}: negative timestamp")
    if not sig and not idl:
        raise EmptyStream(f"{path}: no events")
    sig_a = np.asarray(sig, dtype=np.int64)
    idl_a = np.asarray(idl, dtype=np.int64)
    if duration is None:
        lo =min(a.min() for a in (sig_a, idl_a) if len(a))
        hi = max(a.max() for a in (sig_a, idl_a) if len(a))
        duration = max(int(hi - lo), 1) * _PS
    return TagStream(signal=sig_a, idler=idl_a, duration=duration)


def write_tag_file(stream: TagStream, path) -> None:
    """Write events in time order; a ``.gz`` suffix selects gzip (mtime 0)."""
    path = Path(path)
    lines = ["channel,timestamp_ps\n"]
    lines.extend(f"{ch},{ts}\n" for ch, ts in stream.events)
    data = "".join(lines).encode("utf-8")
    if path.suffix == ".gz":
        with open(path, "wb") as raw:
            with gzip.GzipFile(filename="", mode="wb", fileobj=raw, mtime=0) as gz:
                gz.write(data)
    else:
        path.write_bytes(data)
