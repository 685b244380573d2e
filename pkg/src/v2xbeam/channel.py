"""First-order geometric multipath and the per-subcarrier MIMO channel.

Paths are found with the image method: the direct ray, one bounce off the
ground plane, and one bounce off each outward-facing side or roof of every
obstacle cuboid. Both legs of a bounce are tested for blockage with the
reflecting box itself ignored.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from typing import BinaryIO, Iterator, Sequence

import numpy as np

from .geometry import Cuboid, pack_boxes, segments_blocked

C_LIGHT = 299_792_458.0

KINDS = ("los", "ground_reflection", "face_reflection")


def _db_of(mag: float) -> float:
    return -20.0 * math.log10(mag)


@dataclass(frozen=True)
class ChannelConfig:
    carrier_hz: float = 28e9
    num_subcarriers: int = 16
    subcarrier_spacing_hz: float = 25e6
    num_bs_antennas: int = 64
    num_ms_antennas: int = 64
    cyclic_prefix_len: int | None = None  # defaults to K
    max_reflections: int = 1
    max_paths: int = 5
    reflection_loss_db: dict = field(default_factory=lambda: {
        "metal": _db_of(0.9), "concrete": _db_of(0.6), "ground": _db_of(0.6)})
    noise_power: float | None = None  # calibrated from data when None
    per_subcarrier_power: float = 1.0
    target_snr_db: float = 29.5

    def __post_init__(self):
        if self.num_subcarriers < 1:
            raise ValueError("num_subcarriers must be >= 1")
        if self.max_paths < 1:
            raise ValueError("max_paths must be >= 1")
        if self.max_reflections != 1:
            raise ValueError("only first-order reflections are modelled (max_reflections=1)")
        if self.num_bs_antennas < 1 or self.num_ms_antennas < 1:
            raise ValueError("antenna counts must be >= 1")
        if self.noise_power is not None and self.noise_power <= 0:
            raise ValueError("noise_power must be positive")

    @property
    def wavelength(self) -> float:
        return C_LIGHT / self.carrier_hz

    @property
    def sampling_interval(self) -> float:
        return 1.0 / (self.num_subcarriers * self.subcarrier_spacing_hz)

    @property
    def taps(self) -> int:
        return self.cyclic_prefix_len or self.num_subcarriers

    def gamma(self, material: str) -> float:
        return 10.0 ** (-self.reflection_loss_db[material] / 20.0)

    @property
    def snr_scale(self) -> float:
        """P_k / sigma^2."""
        if self.noise_power is None:
            raise ValueError("noise_power is not set; calibrate it first")
        return self.per_subcarrier_power / self.noise_power


@dataclass(frozen=True)
class PathParam:
    gain: complex
    delay: float
    aoa: float
    aod: float
    kind: str

    def __post_init__(self):
        if self.delay <= 0:
            raise ValueError("path delay must be positive")
        if abs(self.gain) == 0:
            raise ValueError("path gain must be nonzero")
        if self.kind not in KINDS:
            raise ValueError(f"unknown path kind {self.kind!r}")


@dataclass(frozen=True)
class ChannelSnapshot:
    paths: tuple
    h: np.ndarray  # (K, N_U, N_B)
    los_flag: bool


@dataclass(frozen=True)
class Scene:
    """Bare obstacle list; anything with ``obstacles`` and ``materials`` works."""

    obstacles: tuple = ()
    materials: tuple = ()


def steering_vector(phi: float, n: int) -> np.ndarray:
    if n < 1:
        raise ValueError("antenna count must be >= 1")
    return np.exp(1j * math.pi * math.sin(phi) * np.arange(n)) / math.sqrt(n)


def steering_matrix(phis, n: int) -> np.ndarray:
    """Rows are steering vectors for each angle in ``phis``."""
    phis = np.asarray(phis, dtype=float)
    return np.exp(1j * math.pi * np.sin(phis)[:, None] * np.arange(n)[None, :]) / math.sqrt(n)


def ula_angle(direction) -> float:
    """Angle off broadside for an azimuth-only ULA whose axis is the RCS Y axis."""
    dx, dy = float(direction[0]), float(direction[1])
    rho = math.hypot(dx, dy)
    if rho == 0.0:
        return 0.0
    return math.asin(max(-1.0, min(1.0, dy / rho)))


# -- path tracing -------------------------------------------------------------

_FACE_AXES = ((0, 1.0), (0, -1.0), (1, 1.0), (1, -1.0), (2, 1.0))  # no floor face


def _face_table(boxes: Sequence[Cuboid]):
    """Plane point, outward normal, in-plane axes and half sizes for each face."""
    rows = []
    for bi, b in enumerate(boxes):
        c = np.asarray(b.center)
        cs, sn = math.cos(b.azimuth), math.sin(b.azimuth)
        axes = np.array([[cs, -sn, 0.0], [sn, cs, 0.0], [0.0, 0.0, 1.0]])  # local x, y, z in world
        half = b.half_extents
        for k, sgn in _FACE_AXES:
            n = sgn * axes[k]
            others = [j for j in range(3) if j != k]
            rows.append((bi, c + n * half[k], n, axes[others[0]], axes[others[1]],
                         half[others[0]], half[others[1]]))
    return rows


def _reflections(tx, rx, boxes):
    """Valid specular points (m, 3) and the index of each reflecting box."""
    if not boxes:
        return np.empty((0, 3)), np.empty(0, dtype=np.int64)
    table = _face_table(boxes)
    owner = np.array([r[0] for r in table], dtype=np.int64)
    p0 = np.array([r[1] for r in table])
    n = np.array([r[2] for r in table])
    u = np.array([r[3] for r in table])
    v = np.array([r[4] for r in table])
    hu = np.array([r[5] for r in table])
    hv = np.array([r[6] for r in table])

    st = np.einsum("ij,ij->i", tx - p0, n)
    sr = np.einsum("ij,ij->i", rx - p0, n)
    ok = (st > 0) & (sr > 0)
    image = tx - 2.0 * st[:, None] * n
    denom = np.einsum("ij,ij->i", rx - image, n)
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.einsum("ij,ij->i", p0 - image, n) / denom
    pts = image + s[:, None] * (rx - image)
    rel = pts - p0
    ok &= (np.abs(np.einsum("ij,ij->i", rel, u)) <= hu) & (np.abs(np.einsum("ij,ij->i", rel, v)) <= hv)
    return pts[ok], owner[ok]


def _make_path(legs_len: float, n_refl: int, gamma: float, dep, arr, kind, lam) -> PathParam:
    mag = lam / (4.0 * math.pi * legs_len) * gamma
    phase = -2.0 * math.pi * legs_len / lam + n_refl * math.pi
    return PathParam(complex(mag * math.cos(phase), mag * math.sin(phase)), legs_len / C_LIGHT,
                     ula_angle(arr), ula_angle(dep), kind)


def trace_paths(scene, tx, rx, cfg: ChannelConfig) -> list[PathParam]:
    """Unblocked LOS and first-order specular paths from ``tx`` to ``rx``.

    AoD is measured at ``tx`` along the departing leg, AoA at ``rx`` looking
    back along the arriving leg. An empty list means outage.
    """
    tx = np.asarray(tx, dtype=float)
    rx = np.asarray(rx, dtype=float)
    if np.array_equal(tx, rx):
        raise ValueError("tx and rx coincide")
    boxes = list(scene.obstacles)
    materials = list(scene.materials)
    packed = pack_boxes(boxes)
    lam = cfg.wavelength
    paths: list[PathParam] = []

    if not segments_blocked(tx, rx, packed)[0]:
        paths.append(_make_path(float(np.linalg.norm(rx - tx)), 0, 1.0, rx - tx, tx - rx, "los", lam))

    # candidate bounce points: ground first, then faces
    pts, owners = [], []
    if tx[2] > 0 and rx[2] > 0:
        s = tx[2] / (tx[2] + rx[2])
        g = tx + s * (rx - tx)
        g[2] = 0.0
        pts.append(g[None])
        owners.append(np.array([-1], dtype=np.int64))
    fp, fo = _reflections(tx, rx, boxes)
    pts.append(fp)
    owners.append(fo)
    pts = np.concatenate(pts)
    owners = np.concatenate(owners)
    if len(pts):
        m = len(pts)
        a = np.concatenate([np.broadcast_to(tx, (m, 3)), pts])
        b = np.concatenate([pts, np.broadcast_to(rx, (m, 3))])
        blocked = segments_blocked(a, b, packed, np.concatenate([owners, owners]))
        clear = ~(blocked[:m] | blocked[m:])
        for p, o in zip(pts[clear], owners[clear]):
            d = float(np.linalg.norm(p - tx) + np.linalg.norm(rx - p))
            if o < 0:
                paths.append(_make_path(d, 1, cfg.gamma("ground"), p - tx, p - rx,
                                        "ground_reflection", lam))
            else:
                paths.append(_make_path(d, 1, cfg.gamma(materials[o]), p - tx, p - rx,
                                        "face_reflection", lam))

    paths.sort(key=lambda q: -abs(q.gain))  # stable: LOS wins exact ties
    return paths[:cfg.max_paths]


def los_status(scene, tx, rx) -> bool:
    boxes = list(scene.obstacles)
    if not boxes:
        return True
    return not bool(segments_blocked(np.asarray(tx, float), np.asarray(rx, float), boxes)[0])


# -- channel matrices ---------------------------------------------------------

def assemble_channel(paths: Sequence[PathParam], cfg: ChannelConfig) -> np.ndarray:
    """``H[k] = sum_l a_l exp(-j 2 pi k df tau_l) a_r(aoa_l) a_t(aod_l)^H``, shape (K, N_U, N_B)."""
    K, nu, nb = cfg.num_subcarriers, cfg.num_ms_antennas, cfg.num_bs_antennas
    if not paths:
        return np.zeros((K, nu, nb), dtype=complex)
    gains = np.array([p.gain for p in paths])
    tau = np.array([p.delay for p in paths])
    ar = steering_matrix([p.aoa for p in paths], nu)
    at = steering_matrix([p.aod for p in paths], nb)
    fk = np.arange(K) * cfg.subcarrier_spacing_hz
    coef = gains[None, :] * np.exp(-2j * math.pi * fk[:, None] * tau[None, :])  # (K, L)
    return np.einsum("kl,lu,lb->kub", coef, ar, at.conj())


def tap_sum_channel(paths: Sequence[PathParam], cfg: ChannelConfig, taps=None,
                    subcarriers=None) -> np.ndarray:
    """Time-tap form ``sum_n sum_l a_l e^{-j2pi kn/K} sinc(n - tau_l/T_s) a_r a_t^H``.

    ``taps`` defaults to ``range(N)`` with ``N`` the cyclic-prefix length.
    Used as an independent check on :func:`assemble_channel`.
    """
    K = cfg.num_subcarriers
    n = np.arange(cfg.taps) if taps is None else np.asarray(taps)
    ks = np.arange(K) if subcarriers is None else np.asarray(subcarriers)
    ts = cfg.sampling_interval
    out = np.zeros((len(ks), cfg.num_ms_antennas, cfg.num_bs_antennas), dtype=complex)
    for p in paths:
        pulse = np.sinc(n - p.delay / ts)
        weights = np.exp(-2j * math.pi * np.outer(ks, n) / K) @ pulse
        outer = np.outer(steering_vector(p.aoa, cfg.num_ms_antennas),
                         steering_vector(p.aod, cfg.num_bs_antennas).conj())
        out += p.gain * weights[:, None, None] * outer[None]
    return out


def channel_snapshot(scene, tx, rx, cfg: ChannelConfig) -> ChannelSnapshot:
    paths = trace_paths(scene, tx, rx, cfg)
    return ChannelSnapshot(tuple(paths), assemble_channel(paths, cfg), los_status(scene, tx, rx))


def calibrate_noise_power(total_fro2: float, total_snapshots: int, cfg: ChannelConfig) -> float:
    """sigma^2 such that ``P/(K sigma^2 sum S_q) * sum ||H_k||_F^2`` hits the target SNR."""
    if total_snapshots <= 0 or total_fro2 <= 0:
        raise ValueError("cannot calibrate noise power from an empty or all-zero channel set")
    return (cfg.per_subcarrier_power * total_fro2
            / (cfg.num_subcarriers * total_snapshots * 10.0 ** (cfg.target_snr_db / 10.0)))


# -- dump format --------------------------------------------------------------

_DUMP_HEAD = struct.Struct("<IIBI")
_DUMP_PATH = struct.Struct("<6d")


def write_channel_dump(fp: BinaryIO, q: int, r: int, snap: ChannelSnapshot) -> None:
    """Append one snapshot: header, path records, then complex64 matrices."""
    fp.write(_DUMP_HEAD.pack(q, r, int(snap.los_flag), len(snap.paths)))
    for p in snap.paths:
        fp.write(_DUMP_PATH.pack(p.gain.real, p.gain.imag, p.delay, p.aoa, p.aod,
                                 float(KINDS.index(p.kind))))
    fp.write(np.ascontiguousarray(snap.h, dtype="<c8").tobytes())


def read_channel_dump(fp: BinaryIO, cfg: ChannelConfig) -> Iterator[tuple[int, int, ChannelSnapshot]]:
    K, nu, nb = cfg.num_subcarriers, cfg.num_ms_antennas, cfg.num_bs_antennas
    nbytes = K * nu * nb * 8
    while True:
        head = fp.read(_DUMP_HEAD.size)
        if not head:
            return
        if len(head) < _DUMP_HEAD.size:
            raise ValueError("truncated channel dump header")
        q, r, los, n = _DUMP_HEAD.unpack(head)
        paths = []
        for _ in range(n):
            g_re, g_im, d, aoa, aod, kind = _DUMP_PATH.unpack(fp.read(_DUMP_PATH.size))
            paths.append(PathParam(complex(g_re, g_im), d, aoa, aod, KINDS[int(kind)]))
        raw = fp.read(nbytes)
        if len(raw) < nbytes:
            raise ValueError("truncated channel dump body")
        h = np.frombuffer(raw, dtype="<c8").reshape(K, nu, nb)
        yield q, r, ChannelSnapshot(tuple(paths), h, bool(los))
