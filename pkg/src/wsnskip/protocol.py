"""Request/reply packets, their bit-level codec, and the per-round node rules.

Wire layouts (most significant bit first, bits carried as ``'0'/'1'`` strings):

Request::

    tag '01' | probe (1) | seq (16) | E (value_bits, two's complement) | alpha (value_bits)

Reply::

    tag '10' | seq (16) | sign (1) | w (5) | magnitude (w)

``E``, ``alpha`` and the reply magnitude are fixed-point values in units of
``QuantSpec.resolution``. The reply magnitude field is only as wide as the
quantized magnitude needs, so small corrections cost few bits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional

from .errors import BadTypeTag, ProtocolViolation, TruncatedPacket, ValueOverflow

__all__ = [
    "RequestPacket",
    "ReplyPacket",
    "QuantSpec",
    "SensorState",
    "Source",
    "StoredValue",
    "ProbeResult",
    "sensor_step",
    "bs_store",
    "encode_request",
    "decode_request",
    "encode_reply",
    "decode_reply",
    "request_bit_cost",
    "reply_bit_cost",
    "quantize",
    "link_probe",
]

REQUEST_TAG = "01"
REPLY_TAG = "10"
SEQ_BITS = 16
WIDTH_BITS = 5
REPLY_HEADER_BITS = len(REPLY_TAG) + SEQ_BITS + 1 + WIDTH_BITS

DEFAULT_SENTINEL = 1e6


@dataclass(frozen=True)
class QuantSpec:
    resolution: float = 2.0**-4
    value_bits: int = 16
    max_mag_bits: int = 24

    def __post_init__(self):
        if not (self.resolution > 0 and math.isfinite(self.resolution)):
            raise ValueError("resolution must be positive")
        if not 1 <= self.value_bits <= 32:
            raise ValueError("value_bits must be in 1..32")
        if not 1 <= self.max_mag_bits <= 32:
            raise ValueError("max_mag_bits must be in 1..32")

    @property
    def max_e(self) -> float:
        """Largest prediction the request E field can carry."""
        return (2 ** (self.value_bits - 1) - 1) * self.resolution

    @property
    def min_e(self) -> float:
        return -(2 ** (self.value_bits - 1)) * self.resolution


@dataclass(frozen=True)
class RequestPacket:
    seq: int
    predicted_e: float
    alpha: float
    probe_flag: bool = False

    def __post_init__(self):
        if not 0 <= self.seq < 2**SEQ_BITS:
            raise ValueError("seq must fit in 16 bits")
        if not math.isfinite(self.predicted_e):
            raise ValueError("predicted_e must be finite")
        if not (self.alpha >= 0 and math.isfinite(self.alpha)):
            raise ValueError("alpha must be finite and >= 0")


@dataclass(frozen=True)
class ReplyPacket:
    seq: int
    variance_v: float

    def __post_init__(self):
        if not 0 <= self.seq < 2**SEQ_BITS:
            raise ValueError("seq must fit in 16 bits")
        if not math.isfinite(self.variance_v):
            raise ValueError("variance_v must be finite")


@dataclass
class SensorState:
    """Node-side identity. Holds no measurement history."""

    sensor_id: int = 0
    last_seq_seen: Optional[int] = None


class Source(str, Enum):
    REPLIED = "replied"
    SILENT_ACCEPTED = "silent_accepted"
    SKIPPED_FILL = "skipped_fill"


@dataclass(frozen=True)
class StoredValue:
    t: int
    value_s: float
    source: Source


# ---------------------------------------------------------------------------
# Node rules
# ---------------------------------------------------------------------------

def sensor_step(state: SensorState, req: RequestPacket, measured_m: float) -> Optional[ReplyPacket]:
    """Sensor reaction to one request: reply with ``V = M - E`` only if ``|V| > alpha``."""
    state.last_seq_seen = req.seq
    v = measured_m - req.predicted_e
    if v < -req.alpha or v > req.alpha:
        return ReplyPacket(req.seq, v)
    return None


def bs_store(e: float, reply: Optional[ReplyPacket], t: int) -> StoredValue:
    if reply is None:
        return StoredValue(t, e, Source.SILENT_ACCEPTED)
    return StoredValue(t, e + reply.variance_v, Source.REPLIED)


# ---------------------------------------------------------------------------
# Codec
# ---------------------------------------------------------------------------

def _fixed(value: float, q: QuantSpec) -> int:
    return int(round(value / q.resolution))


def quantize(value: float, q: QuantSpec) -> float:
    """Value as it survives a trip through a fixed-point field."""
    return _fixed(value, q) * q.resolution


def _uint(value: int, width: int) -> str:
    return format(value, f"0{width}b")


def _check_tag(bits: str, tag: str) -> None:
    if len(bits) < len(tag):
        raise TruncatedPacket("packet shorter than its type tag")
    if bits[:len(tag)] != tag:
        raise BadTypeTag(f"expected tag {tag}, got {bits[:len(tag)]}")


def encode_request(req: RequestPacket, q: QuantSpec = QuantSpec()) -> str:
    e = _fixed(req.predicted_e, q)
    a = _fixed(req.alpha, q)
    half = 2 ** (q.value_bits - 1)
    if not -half <= e < half:
        raise ValueOverflow(f"E={req.predicted_e} does not fit {q.value_bits} signed bits")
    if not 0 <= a < 2**q.value_bits:
        raise ValueOverflow(f"alpha={req.alpha} does not fit {q.value_bits} bits")
    return (
        REQUEST_TAG
        + ("1" if req.probe_flag else "0")
        + _uint(req.seq, SEQ_BITS)
        + _uint(e & (2**q.value_bits - 1), q.value_bits)
        + _uint(a, q.value_bits)
    )


def decode_request(bits: str, q: QuantSpec = QuantSpec()) -> RequestPacket:
    _check_tag(bits, REQUEST_TAG)
    size = request_bit_cost(q)
    if len(bits) < size:
        raise TruncatedPacket(f"request needs {size} bits, got {len(bits)}")
    pos = len(REQUEST_TAG)
    probe = bits[pos] == "1"
    pos += 1
    seq = int(bits[pos:pos + SEQ_BITS], 2)
    pos += SEQ_BITS
    e = int(bits[pos:pos + q.value_bits], 2)
    if e >= 2 ** (q.value_bits - 1):
        e -= 2**q.value_bits
    pos += q.value_bits
    a = int(bits[pos:pos + q.value_bits], 2)
    return RequestPacket(seq, e * q.resolution, a * q.resolution, probe)


def request_bit_cost(q: QuantSpec = QuantSpec()) -> int:
    return len(REQUEST_TAG) + 1 + SEQ_BITS + 2 * q.value_bits


def _magnitude(v: float, q: QuantSpec) -> int:
    mag = _fixed(abs(v), q)
    if mag >= 2**q.max_mag_bits:
        raise ValueOverflow(f"|V|={abs(v)} exceeds {q.max_mag_bits} magnitude bits")
    return mag


def _width(mag: int) -> int:
    w = max(1, mag.bit_length())
    if w >= 2**WIDTH_BITS:
        raise ValueOverflow(f"magnitude width {w} does not fit the {WIDTH_BITS}-bit width field")
    return w


def encode_reply(rep: ReplyPacket, q: QuantSpec = QuantSpec()) -> str:
    mag = _magnitude(rep.variance_v, q)
    w = _width(mag)
    sign = "1" if math.copysign(1.0, rep.variance_v) < 0 else "0"
    return REPLY_TAG + _uint(rep.seq, SEQ_BITS) + sign + _uint(w, WIDTH_BITS) + _uint(mag, w)


def decode_reply(bits: str, q: QuantSpec = QuantSpec()) -> ReplyPacket:
    _check_tag(bits, REPLY_TAG)
    if len(bits) < REPLY_HEADER_BITS + 1:
        raise TruncatedPacket(f"reply header needs {REPLY_HEADER_BITS} bits, got {len(bits)}")
    pos = len(REPLY_TAG)
    seq = int(bits[pos:pos + SEQ_BITS], 2)
    pos += SEQ_BITS
    negative = bits[pos] == "1"
    pos += 1
    w = int(bits[pos:pos + WIDTH_BITS], 2)
    pos += WIDTH_BITS
    if w == 0:
        raise ProtocolViolation("reply magnitude width of zero")
    if len(bits) < pos + w:
        raise TruncatedPacket(f"reply magnitude needs {w} bits, got {len(bits) - pos}")
    mag = int(bits[pos:pos + w], 2)
    value = mag * q.resolution
    return ReplyPacket(seq, -value if negative else value)


def reply_bit_cost(v: float, q: QuantSpec = QuantSpec()) -> int:
    """Exact length of ``encode_reply`` for variance ``v``.

    ``v == 0`` is never transmitted; it is costed as the minimum reply (25 bits
    at the default header) so accounting stays symmetric.
    """
    return REPLY_HEADER_BITS + _width(_magnitude(v, q))


# ---------------------------------------------------------------------------
# Link probe
# ---------------------------------------------------------------------------

class ProbeResult(str, Enum):
    ALIVE_NONZERO = "alive_nonzero"
    ALIVE_ZERO = "alive_zero"
    DEAD = "dead"


def link_probe(
    send: Callable[[RequestPacket], Optional[ReplyPacket]],
    sentinel_l: float = DEFAULT_SENTINEL,
    tolerance: float = QuantSpec().resolution,
    seq: int = 0,
) -> ProbeResult:
    """Check a sensor link with at most two zero-tolerance requests.

    ``send`` transmits one request and returns the reply, or ``None`` on
    silence. A reply to ``E=0`` means the sensor is up and reads ``M=V``.
    Silence is ambiguous (``M=0`` or dead link), so a second request carries
    ``E=sentinel_l``; a live sensor reading zero must answer ``V ~ -sentinel_l``.
    """
    first = send(RequestPacket(seq, 0.0, 0.0, probe_flag=True))
    if first is not None:
        return ProbeResult.ALIVE_NONZERO
    second = send(RequestPacket((seq + 1) % 2**SEQ_BITS, sentinel_l, 0.0, probe_flag=True))
    if second is None:
        return ProbeResult.DEAD
    # silence on E=0 with alpha=0 pins M to zero, so V must be -sentinel_l
    if abs(second.variance_v + sentinel_l) > tolerance:
        raise ProtocolViolation(
            f"probe reply V={second.variance_v} inconsistent with M=0 after silent first probe"
        )
    return ProbeResult.ALIVE_ZERO
