"""Discrete modulation: 16PSK and 16APSK constellations, hard-decision demod.

Constellations are unit mean energy. PSK rings are Gray labelled; the APSK
grid is Gray labelled per ring with the two label MSBs selecting the ring
segment. Demodulation equalizes by the known channel gain and picks the
nearest point in Euclidean distance, ties to the lowest index.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

DEFAULT_APSK_RING_RATIO = 2.57


class DeepFadeError(Exception):
    """Channel gain is exactly zero, equalization impossible."""


@dataclass
class Constellation:
    """Indexed point set plus its bit labelling.

    ``points[i]`` is the complex position of symbol index i, ``labels[i]`` the
    integer bit pattern assigned to it. Mean energy is validated to 1.
    """

    name: str
    points: np.ndarray
    labels: np.ndarray
    bits_per_symbol: int = field(init=False)
    label_to_index: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        self.points = np.asarray(self.points, dtype=np.complex128)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        m = self.points.size
        if m < 2 or (m & (m - 1)) != 0:
            raise ValueError(f"constellation order must be a power of two, got {m}")
        if self.labels.shape != self.points.shape:
            raise ValueError("labels and points must align")
        if sorted(self.labels.tolist()) != list(range(m)):
            raise ValueError("labels must be a permutation of 0..M-1")
        energy = float(np.mean(np.abs(self.points) ** 2))
        if abs(energy - 1.0) > 1e-12:
            raise ValueError(f"mean symbol energy must be 1, got {energy}")
        self.bits_per_symbol = int(round(math.log2(m)))
        inverse = np.empty(m, dtype=np.int64)
        inverse[self.labels] = np.arange(m)
        self.label_to_index = inverse

    @property
    def order(self) -> int:
        return int(self.points.size)


def _gray(k: np.ndarray) -> np.ndarray:
    return k ^ (k >> 1)


def build_psk(order: int) -> Constellation:
    """M-PSK on the unit circle, point k at angle 2 pi k / M, Gray labels."""
    if order < 2 or (order & (order - 1)) != 0:
        raise ValueError(f"order must be a power of two >= 2, got {order}")
    k = np.arange(order)
    points = np.exp(2j * np.pi * k / order)
    return Constellation(name=f"{order}psk", points=points, labels=_gray(k))


def build_apsk16(ring_ratio: float = DEFAULT_APSK_RING_RATIO) -> Constellation:
    """4+12 two-ring APSK, outer radius = ring_ratio * inner, unit mean energy.

    Inner ring: 4 points offset by pi/4, labels 00xx with xx Gray coded.
    Outer ring: 12 points in three 120-degree segments; the two MSBs select
    the segment (01, 10, 11) and the two LSBs Gray-code the position.
    ring_ratio = 1 collapses both rings onto the unit circle.
    """
    if ring_ratio <= 0:
        raise ValueError(f"ring ratio must be positive, got {ring_ratio}")
    r1 = 2.0 / math.sqrt(1.0 + 3.0 * ring_ratio**2)
    r2 = ring_ratio * r1
    inner_k = np.arange(4)
    inner = r1 * np.exp(1j * (np.pi / 4.0 + np.pi / 2.0 * inner_k))
    outer_k = np.arange(12)
    outer = r2 * np.exp(2j * np.pi * outer_k / 12.0)
    points = np.concatenate([inner, outer])
    labels = np.empty(16, dtype=np.int64)
    labels[:4] = _gray(inner_k)
    segment = outer_k // 4 + 1
    labels[4:] = (segment << 2) | _gray(outer_k % 4)
    return Constellation(name="16apsk", points=points, labels=labels)


def build_constellation(name: str, ring_ratio: float = DEFAULT_APSK_RING_RATIO) -> Constellation:
    """Constellation by name: '16psk' or '16apsk' (any Mpsk works)."""
    name = name.lower()
    if name == "16apsk":
        return build_apsk16(ring_ratio)
    if name.endswith("psk"):
        return build_psk(int(name[:-3]))
    raise ValueError(f"unknown constellation {name!r}")


def ints_to_bits(values: np.ndarray, width: int) -> np.ndarray:
    """Unpack integers to MSB-first bit rows, flattened."""
    values = np.asarray(values, dtype=np.int64)
    if values.size and (values.min() < 0 or values.max() >= (1 << width)):
        raise ValueError(f"values do not fit in {width} bits")
    shifts = np.arange(width - 1, -1, -1)
    return ((values[:, None] >> shifts) & 1).astype(np.uint8).reshape(-1)


def bits_to_ints(bits: np.ndarray, width: int) -> np.ndarray:
    """Pack an MSB-first bitstream into integers of ``width`` bits each."""
    bits = np.asarray(bits, dtype=np.int64)
    if bits.size % width != 0:
        raise ValueError(f"bit count {bits.size} is not a multiple of {width}")
    weights = 1 << np.arange(width - 1, -1, -1)
    return bits.reshape(-1, width) @ weights


def modulate(bits: np.ndarray, constellation: Constellation) -> tuple[np.ndarray, int]:
    """Map a bitstream to symbols, zero-padding to a symbol boundary.

    Returns the symbol frame and the number of pad bits appended.
    """
    bits = np.asarray(bits, dtype=np.uint8)
    if bits.size and not np.all((bits == 0) | (bits == 1)):
        raise ValueError("bitstream must contain only 0 and 1")
    k = constellation.bits_per_symbol
    pad = (-bits.size) % k
    if pad:
        bits = np.concatenate([bits, np.zeros(pad, dtype=np.uint8)])
    values = bits_to_ints(bits, k)
    indices = constellation.label_to_index[values]
    return constellation.points[indices], int(pad)


def demodulate_hard(
    received: np.ndarray,
    gain: complex | np.ndarray,
    constellation: Constellation,
    chunk: int = 65536,
) -> np.ndarray:
    """Equalize by the known gain and hard-slice to the nearest point's bits.

    ``gain`` may be a scalar (block fading) or a per-symbol array. A zero
    gain anywhere raises :class:`DeepFadeError`. Ties resolve to the lowest
    symbol index. Returns the full recovered bitstream, pad bits included.
    """
    received = np.asarray(received, dtype=np.complex128)
    gain_arr = np.asarray(gain, dtype=np.complex128)
    if np.any(np.abs(gain_arr) == 0.0):
        raise DeepFadeError("zero channel gain")
    equalized = received / gain_arr
    points = constellation.points
    indices = np.empty(equalized.size, dtype=np.int64)
    flat = equalized.reshape(-1)
    for start in range(0, flat.size, chunk):
        block = flat[start : start + chunk]
        d2 = np.abs(block[:, None] - points[None, :]) ** 2
        indices[start : start + block.size] = np.argmin(d2, axis=1)
    values = constellation.labels[indices]
    return ints_to_bits(values, constellation.bits_per_symbol)


CONSTELLATION_CSV_HEADER = "index,bits,re,im"


def constellation_csv(constellation: Constellation) -> str:
    """Dump the point table: index, bit label, coordinates."""
    k = constellation.bits_per_symbol
    lines = [CONSTELLATION_CSV_HEADER]
    for i in range(constellation.order):
        bits = format(int(constellation.labels[i]), f"0{k}b")
        p = constellation.points[i]
        lines.append(f"{i},{bits},{float(p.real)!r},{float(p.imag)!r}")
    return "\n".join(lines) + "\n"
