"""Turn raw price/volume/liquidity samples into a trace of (rho, u) steps."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .amm import DomainError
from .reward import MarketStep, PoolParams

RAW_COLUMNS = ("timestamp", "price", "volume", "liquidity")
TRACE_COLUMNS = ("rho", "u")


class TraceFormatError(ValueError):
    """Malformed input file; ``line`` is the 1-based line number when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class RawSample:
    timestamp: int
    price: float
    volume: float
    active_liquidity: float


@dataclass(frozen=True)
class Bucket:
    price: float
    volume: float
    liquidity: float


@dataclass(frozen=True)
class Trace:
    """Per-step log price changes ``rho`` (in units of ``ln d``) and relative volumes ``u``."""

    rho: np.ndarray
    u: np.ndarray

    def __post_init__(self):
        rho = np.asarray(self.rho, dtype=float)
        u = np.asarray(self.u, dtype=float)
        if rho.ndim != 1 or rho.shape != u.shape:
            raise ValueError("rho and u must be vectors of equal length")
        if not np.all(np.isfinite(rho)):
            raise DomainError("rho must be finite")
        if not np.all(np.isfinite(u) & (u >= 0)):
            raise DomainError("u must be finite and nonnegative")
        rho.flags.writeable = False
        u.flags.writeable = False
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "u", u)

    @classmethod
    def from_steps(cls, steps: Sequence[MarketStep]) -> Trace:
        return cls([s.rho for s in steps], [s.u for s in steps])

    def __len__(self) -> int:
        return self.rho.size

    def __iter__(self) -> Iterator[MarketStep]:
        for r, v in zip(self.rho, self.u):
            yield MarketStep(float(r), float(v))

    @property
    def T(self) -> int:
        return self.rho.size

    @property
    def P(self) -> float:
        return avg_log_price_change(self)


@dataclass(frozen=True)
class TraceStats:
    P: float
    mean_u: float
    max_price_factor: float
    volume_threshold: float
    T: int

    def to_dict(self) -> dict:
        return {
            "T": self.T,
            "P": self.P,
            "mean_u": self.mean_u,
            "max_price_factor": self.max_price_factor,
            "volume_threshold": self.volume_threshold,
        }


def avg_log_price_change(steps) -> float:
    """Mean absolute number of price intervals crossed per step."""
    rho = np.asarray(steps.rho if hasattr(steps, "rho") else [s.rho for s in steps], dtype=float)
    if rho.size == 0:
        raise ValueError("trace must contain at least one step")
    return float(np.mean(np.abs(rho)))


def _parse_field(row: dict, name: str, line: int, kind=float):
    raw = row.get(name)
    if raw is None or raw.strip() == "":
        raise TraceFormatError(f"missing value for {name!r}", line)
    try:
        value = kind(raw.strip())
    except ValueError:
        raise TraceFormatError(f"cannot parse {name}={raw!r}", line) from None
    if kind is float and not math.isfinite(value):
        raise TraceFormatError(f"{name} must be finite, got {raw!r}", line)
    return value


def parse_raw_rows(lines) -> list[RawSample]:
    reader = csv.DictReader(lines)
    header = [h.strip() for h in (reader.fieldnames or [])]
    if sorted(header) != sorted(RAW_COLUMNS):
        raise TraceFormatError(f"expected header {','.join(RAW_COLUMNS)}, got {','.join(header)}", 1)
    reader.fieldnames = header
    samples: list[RawSample] = []
    for row in reader:
        line = reader.line_num
        if None in row:
            raise TraceFormatError("too many fields", line)
        sample = RawSample(
            _parse_field(row, "timestamp", line, int),
            _parse_field(row, "price", line),
            _parse_field(row, "volume", line),
            _parse_field(row, "liquidity", line),
        )
        if sample.price <= 0:
            raise TraceFormatError(f"price must be positive, got {sample.price}", line)
        if sample.volume < 0:
            raise TraceFormatError(f"volume must be nonnegative, got {sample.volume}", line)
        if sample.active_liquidity <= 0:
            raise TraceFormatError(f"liquidity must be positive, got {sample.active_liquidity}", line)
        if samples and sample.timestamp <= samples[-1].timestamp:
            raise TraceFormatError("timestamps must be strictly increasing", line)
        samples.append(sample)
    if not samples:
        raise TraceFormatError("no data rows")
    return samples


def read_raw_csv(path: str | Path) -> list[RawSample]:
    with open(path, newline="", encoding="utf-8") as fh:
        return parse_raw_rows(fh)


def aggregate(samples: Sequence[RawSample], step_seconds: int) -> list[Bucket]:
    """Bucket samples into fixed steps of ``step_seconds``.

    Each bucket keeps the last price, the summed volume and the time-weighted
    mean of the liquidity in force during the bucket. A sample's liquidity
    holds until the next sample, so empty buckets inherit the last price and
    liquidity with zero volume.
    """
    if step_seconds < 1:
        raise ValueError(f"step length must be a positive number of seconds, got {step_seconds}")
    if not samples:
        raise ValueError("no samples to aggregate")
    for i in range(1, len(samples)):
        if samples[i].timestamp <= samples[i - 1].timestamp:
            # header is line 1, so sample i sits on line i + 2
            raise TraceFormatError("timestamps must be strictly increasing", i + 2)

    first = samples[0].timestamp // step_seconds
    last = samples[-1].timestamp // step_seconds
    buckets: list[Bucket] = []
    i = 0
    price = samples[0].price
    liquidity = samples[0].active_liquidity
    for k in range(first, last + 1):
        start, end = k * step_seconds, (k + 1) * step_seconds
        cursor = max(start, samples[0].timestamp)
        volume = 0.0
        weighted = 0.0
        while i < len(samples) and samples[i].timestamp < end:
            s = samples[i]
            weighted += liquidity * (s.timestamp - cursor)
            cursor = s.timestamp
            price, liquidity = s.price, s.active_liquidity
            volume += s.volume
            i += 1
        weighted += liquidity * (end - cursor)
        span = end - max(start, samples[0].timestamp)
        buckets.append(Bucket(price, volume, weighted / span))
    return buckets


def derive_step(p_t: float, p_next: float, v_t: float, liquidity_t: float, pool: PoolParams) -> MarketStep:
    """Step observables: ``rho = log_d(p_next / p_t)`` and ``u = v / (2 sqrt(p) L)``."""
    if p_t <= 0 or p_next <= 0:
        raise DomainError(f"prices must be positive, got {p_t}, {p_next}")
    if liquidity_t <= 0:
        raise DomainError(f"liquidity must be positive, got {liquidity_t}")
    if v_t < 0:
        raise DomainError(f"volume must be nonnegative, got {v_t}")
    rho = math.log(p_next / p_t) / pool.ln_d
    return MarketStep(rho, v_t / (2 * math.sqrt(p_t) * liquidity_t))


def derive_trace(buckets: Sequence[Bucket], pool: PoolParams) -> Trace:
    """Pair consecutive buckets into steps.

    Step t opens at the closing price of bucket t and ends at the closing
    price of bucket t+1; its volume and liquidity are those of bucket t+1,
    i.e. the trading that happened during the step.
    """
    if len(buckets) < 2:
        raise ValueError("need at least two buckets to form a step")
    steps = [
        derive_step(prev.price, cur.price, cur.volume, cur.liquidity, pool)
        for prev, cur in zip(buckets, buckets[1:])
    ]
    return Trace.from_steps(steps)


def compute_stats(steps, pool: PoolParams) -> TraceStats:
    trace = steps if isinstance(steps, Trace) else Trace.from_steps(list(steps))
    P = avg_log_price_change(trace)
    return TraceStats(
        P=P,
        mean_u=float(np.mean(trace.u)),
        max_price_factor=float(np.exp(np.max(np.abs(trace.rho)) * pool.ln_d)),
        volume_threshold=P * pool.ln_d / pool.gamma,
        T=trace.T,
    )


def sidecar_path(path: str | Path) -> Path:
    return Path(path).with_suffix(".json")


def write_trace(path: str | Path, trace: Trace, pool: PoolParams) -> Path:
    """Write the canonical ``rho,u`` CSV plus a JSON sidecar with pool and stats."""
    from .report import canonical_json

    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRACE_COLUMNS)
        for r, v in zip(trace.rho, trace.u):
            writer.writerow([repr(float(r)), repr(float(v))])
    meta = {
        "pool": {"d": pool.d, "gamma": pool.gamma},
        "stats": compute_stats(trace, pool).to_dict(),
    }
    side = sidecar_path(path)
    side.write_text(canonical_json(meta) + "\n", encoding="utf-8")
    return side


def parse_trace_rows(lines) -> Trace:
    reader = csv.reader(lines)
    header = next(reader, None)
    if header is None or tuple(h.strip() for h in header) != TRACE_COLUMNS:
        raise TraceFormatError(f"expected header {','.join(TRACE_COLUMNS)}", 1)
    rho, u = [], []
    for row in reader:
        line = reader.line_num
        if not row:
            continue
        if len(row) != 2:
            raise TraceFormatError(f"expected 2 fields, got {len(row)}", line)
        try:
            r, v = float(row[0]), float(row[1])
        except ValueError:
            raise TraceFormatError(f"cannot parse {row!r}", line) from None
        if not (math.isfinite(r) and math.isfinite(v) and v >= 0):
            raise TraceFormatError(f"invalid step values {row!r}", line)
        rho.append(r)
        u.append(v)
    if not rho:
        raise TraceFormatError("no data rows")
    return Trace(rho, u)


def read_trace(path: str | Path) -> tuple[Trace, PoolParams | None]:
    """Load a canonical trace; the pool comes from the sidecar when present."""
    with open(path, newline="", encoding="utf-8") as fh:
        trace = parse_trace_rows(fh)
    side = sidecar_path(path)
    pool = None
    if side.exists():
        meta = json.loads(side.read_text(encoding="utf-8"))
        pool = PoolParams(float(meta["pool"]["d"]), float(meta["pool"]["gamma"]))
    return trace, pool


def sniff_header(path: str | Path) -> tuple[str, ...]:
    with open(path, newline="", encoding="utf-8") as fh:
        first = fh.readline()
    return tuple(h.strip() for h in first.strip().split(","))
