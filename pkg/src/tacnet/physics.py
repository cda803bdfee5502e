"""Link budget for multi-beam radios: beam gains, path loss, SINR and throughput.

All powers are handled in dB/dBm at the interface and accumulated in linear
milliwatts internally. A gain of ``-inf`` dB means the target lies outside
every active beam (zero linear power) and propagates to a throughput of 0.
"""
from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass
from typing import Callable, Dict, Iterable, Mapping, Tuple

import numpy as np

NEG_INF = float("-inf")

# Per-channel antenna characteristics, keyed by channel label.
GMAX_BASE_DB = {"3+": 13.0, "4": 15.0}
BEAMWIDTH_3DB_DEG = {"3+": 60.0, "4": 50.0}
CHANNEL_LABELS = ("3+", "4")

DEFAULT_CHANNELS = (("3+", (2000.0, 2400.0)), ("4", (4500.0, 5000.0)))

# Lower SINR edge (dB) of each throughput step, and the throughput (Mbps) of
# every half-open interval [edge_k, edge_k+1).
SINR_THRESHOLDS_DB = (2.0, 5.0, 9.0, 11.0, 15.0, 18.0, 20.0, 25.0, 29.0)
THROUGHPUT_STEPS_MBPS = (0.0, 6.5, 13.0, 19.5, 26.0, 39.0, 52.0, 58.5, 65.0, 78.0)

INTERFERENCE_RULES = ("unconnected", "connection", "endpoints")

TRANSMIT_POWER_DBM = 30.0
BANDWIDTH_HZ = 20e6
NOISE_FIGURE_DB = 10.0


class UnknownFrequencyError(ValueError):
    pass


def free_space_path_loss_db(distance_m: float, freq_mhz: float) -> float:
    """FSPL with distance in km and frequency in MHz (constant 32.44)."""
    if distance_m <= 0:
        raise ValueError("path loss undefined for coincident nodes")
    return 20.0 * math.log10(distance_m / 1000.0) + 20.0 * math.log10(freq_mhz) + 32.44


PATH_LOSS_MODELS: Dict[str, Callable[[float, float], float]] = {
    "free_space": free_space_path_loss_db,
}


def register_path_loss(name: str, model: Callable[[float, float], float]) -> None:
    """Make a ``(distance_m, freq_mhz) -> dB`` model selectable by name."""
    PATH_LOSS_MODELS[name] = model


@dataclass(frozen=True)
class PhysicsParams:
    beams: int = 24
    fade_margin_db: float = 0.0
    channels: Tuple[Tuple[str, Tuple[float, float]], ...] = DEFAULT_CHANNELS
    path_loss: str = "free_space"
    # Which third-party signals count as interference on a link (u, v):
    # "unconnected" drops s_uw when (u, w) is itself a link (a sibling served by
    # the same antenna); "connection" drops every node served by that antenna;
    # "endpoints" keeps all w != u, v.
    interference: str = "unconnected"

    def __post_init__(self):
        if self.beams < 1:
            raise ValueError("beams must be >= 1")
        labels = [c for c, _ in self.channels]
        if sorted(labels) != sorted(CHANNEL_LABELS):
            raise ValueError(f"channels must be exactly {CHANNEL_LABELS}, got {labels}")
        for label, freqs in self.channels:
            if len(freqs) != 2:
                raise ValueError(f"channel {label} needs exactly two frequencies")
        all_freqs = [f for _, fs in self.channels for f in fs]
        if len(set(all_freqs)) != len(all_freqs):
            raise ValueError("frequencies must be distinct across channels")
        if self.path_loss not in PATH_LOSS_MODELS:
            raise ValueError(f"unknown path loss model {self.path_loss!r}")
        if self.interference not in INTERFERENCE_RULES:
            raise ValueError(f"interference must be one of {INTERFERENCE_RULES}")

    @property
    def beam_spacing(self) -> float:
        return 2.0 * math.pi / self.beams

    def channel_freqs(self, channel: str) -> Tuple[float, float]:
        for label, freqs in self.channels:
            if label == channel:
                return tuple(sorted(freqs))
        raise KeyError(channel)

    def channel_of(self, freq_mhz: float) -> str:
        for label, freqs in self.channels:
            if any(math.isclose(freq_mhz, f) for f in freqs):
                return label
        raise UnknownFrequencyError(f"{freq_mhz} MHz is not in any configured channel")

    @property
    def frequencies(self) -> Tuple[float, ...]:
        return tuple(sorted(f for _, fs in self.channels for f in fs))

    @property
    def highest_frequency(self) -> float:
        return max(self.frequencies)

    def path_loss_db(self, distance_m: float, freq_mhz: float) -> float:
        return PATH_LOSS_MODELS[self.path_loss](distance_m, freq_mhz)

    def to_json(self) -> dict:
        return {
            "beams": self.beams,
            "fade_margin_db": self.fade_margin_db,
            "channels": {label: list(freqs) for label, freqs in self.channels},
            "path_loss": self.path_loss,
            "interference": self.interference,
        }

    @classmethod
    def from_json(cls, data: Mapping | None) -> "PhysicsParams":
        data = dict(data or {})
        channels = data.get("channels")
        if channels is None:
            channels = DEFAULT_CHANNELS
        else:
            channels = tuple(
                (label, tuple(float(f) for f in channels[label])) for label in CHANNEL_LABELS
            )
        return cls(
            beams=int(data.get("beams", 24)),
            fade_margin_db=float(data.get("fade_margin_db", 0.0)),
            channels=channels,
            path_loss=data.get("path_loss", "free_space"),
            interference=data.get("interference", "unconnected"),
        )


@dataclass(frozen=True)
class AntennaConfig:
    """Rotation of beam 0 (radians) and the indices of the active beams."""

    rotation: float
    active_beams: Tuple[int, ...]

    def to_json(self) -> dict:
        return {"rotation_rad": self.rotation, "beams": list(self.active_beams)}

    @classmethod
    def from_json(cls, data: Mapping) -> "AntennaConfig":
        return cls(float(data["rotation_rad"]), tuple(int(b) for b in data["beams"]))


@dataclass(frozen=True)
class LinkMetrics:
    gain_fwd_db: float
    gain_rev_db: float
    path_loss_db: float
    signal_dbm: float
    interference_mw: float
    sinr_db: float
    throughput_mbps: float


def angle_deviation(a: float, b: float) -> float:
    """Absolute angular difference wrapped to [0, pi]."""
    d = (a - b) % (2.0 * math.pi)
    return min(d, 2.0 * math.pi - d)


def bearing(x0: float, y0: float, x1: float, y1: float) -> float:
    """Direction from (x0, y0) to (x1, y1) in [0, 2*pi)."""
    return math.atan2(y1 - y0, x1 - x0) % (2.0 * math.pi)


def g_max_db(num_beams: int, freq_mhz: float, params: PhysicsParams) -> float:
    if num_beams < 1:
        raise ValueError("an antenna needs at least one active beam")
    return GMAX_BASE_DB[params.channel_of(freq_mhz)] - 10.0 * math.log10(num_beams)


def beamwidth_3db(freq_mhz: float, params: PhysicsParams) -> float:
    return math.radians(BEAMWIDTH_3DB_DEG[params.channel_of(freq_mhz)])


def channel_beamwidth(channel: str) -> float:
    return math.radians(BEAMWIDTH_3DB_DEG[channel])


def beam_gain_db(cfg: AntennaConfig, bearing_rad: float, freq_mhz: float, params: PhysicsParams) -> float:
    """Total gain of ``cfg`` toward ``bearing_rad``, summing active beams in linear power.

    A beam whose axis is 90 degrees or more away from the bearing contributes
    nothing; if no beam contributes, returns ``-inf``.
    """
    gmax = g_max_db(len(cfg.active_beams), freq_mhz, params)
    ref = math.log10(math.cos(beamwidth_3db(freq_mhz, params) / 2.0))
    total = 0.0
    for b in cfg.active_beams:
        c = math.cos(angle_deviation(cfg.rotation + b * params.beam_spacing, bearing_rad))
        if c <= 0.0:
            continue
        total += 10.0 ** ((gmax - 3.0 * math.log10(c) / ref) / 10.0)
    return 10.0 * math.log10(total) if total > 0.0 else NEG_INF


def beam_gain_linear(cfg: AntennaConfig, bearings: np.ndarray, channel: str, params: PhysicsParams) -> np.ndarray:
    """Vectorised linear gain of ``cfg`` toward each bearing (0 outside all beams)."""
    bearings = np.asarray(bearings, dtype=float)
    gmax = GMAX_BASE_DB[channel] - 10.0 * math.log10(len(cfg.active_beams))
    ref = math.log10(math.cos(channel_beamwidth(channel) / 2.0))
    total = np.zeros_like(bearings)
    two_pi = 2.0 * math.pi
    for b in cfg.active_beams:
        d = (cfg.rotation + b * params.beam_spacing - bearings) % two_pi
        c = np.cos(np.minimum(d, two_pi - d))
        pos = c > 0.0
        g = gmax - 3.0 * np.log10(np.where(pos, c, 1.0)) / ref
        total += np.where(pos, 10.0 ** (g / 10.0), 0.0)
    return total


def path_loss_db(u, v, freq_mhz: float, params: PhysicsParams | None = None) -> float:
    """Path loss between two nodes (objects with ``x``/``y`` in meters)."""
    params = params or PhysicsParams()
    return params.path_loss_db(math.hypot(u.x - v.x, u.y - v.y), freq_mhz)


def signal_strength_dbm(g_fwd: float, g_rev: float, pl: float) -> float:
    if g_fwd == NEG_INF or g_rev == NEG_INF:
        return NEG_INF
    return TRANSMIT_POWER_DBM + g_fwd + g_rev - pl


def noise_power_dbm() -> float:
    return -174.0 + 10.0 * math.log10(BANDWIDTH_HZ) + NOISE_FIGURE_DB


NOISE_MW = 10.0 ** (noise_power_dbm() / 10.0)


def sinr_db(signal_dbm: float, interference_mw: float, fade_margin_db: float = 0.0) -> float:
    if interference_mw < 0:
        raise ValueError("interference must be non-negative")
    if signal_dbm == NEG_INF:
        return NEG_INF
    return signal_dbm - fade_margin_db - 10.0 * math.log10(interference_mw + NOISE_MW)


def throughput_mbps(sinr: float) -> float:
    if math.isnan(sinr):
        return 0.0
    return THROUGHPUT_STEPS_MBPS[bisect_right(SINR_THRESHOLDS_DB, sinr)]


def db_to_mw(dbm: float) -> float:
    return 0.0 if dbm == NEG_INF else 10.0 ** (dbm / 10.0)


# --- reference (scalar) evaluation over a complete design --------------------
#
# These walk the design edge by edge with the scalar formulas above. The
# search uses the vectorised evaluator in ``tacnet.evaluator``; this path is
# kept simple so it can serve as an independent check of that code.

def _antenna_gain(design, node: int, channel: str, target: int, freq: float, nodes, params) -> float:
    cfg = design.antennas[(node, channel)]
    a, b = nodes[node], nodes[target]
    return beam_gain_db(cfg, bearing(a.x, a.y, b.x, b.y), freq, params)


def _pair_signal_dbm(design, u, cu, w, cw, freq, nodes, params) -> float:
    g_uw = _antenna_gain(design, u, cu, w, freq, nodes, params)
    g_wu = _antenna_gain(design, w, cw, u, freq, nodes, params)
    return signal_strength_dbm(g_uw, g_wu, path_loss_db(nodes[u], nodes[w], freq, params))


def antennas_using(design, freq: float) -> Iterable[Tuple[int, str]]:
    """(node, channel) keys of every antenna carrying at least one edge on ``freq``."""
    seen = set()
    for (p, c), f in design.edge_freqs().items():
        if f == freq:
            ch = design.channels.edge_channel[c]
            seen.add((p, ch))
            seen.add((c, ch))
    return sorted(seen)


def _served_with(edge: Tuple[int, int], design) -> set:
    """Other successors of u reached through the antenna serving ``edge``."""
    u, v = edge
    ch = design.channels.edge_channel
    return {w for w in design.rooted.children[u] if w != v and ch[w] == ch[v]}


def interference_mw(edge: Tuple[int, int], freq: float, design, nodes, params: PhysicsParams) -> float:
    """Linear interference (mW) seen by the arc ``edge`` = (parent, child) from other antennas on ``freq``."""
    u, v = edge
    ch = design.channels.edge_channel[v]
    siblings = _served_with(edge, design)
    total = 0.0
    for w, cw in antennas_using(design, freq):
        if w in (u, v):
            continue
        if w in siblings and params.interference == "connection":
            continue
        if not (w in siblings and params.interference == "unconnected"):
            total += db_to_mw(_pair_signal_dbm(design, u, ch, w, cw, freq, nodes, params))
        total += db_to_mw(_pair_signal_dbm(design, w, cw, v, ch, freq, nodes, params))
    return total


def link_metrics(design, nodes, params: PhysicsParams) -> Dict[Tuple[int, int], LinkMetrics]:
    """Per-edge metrics keyed by (parent, child)."""
    out = {}
    for (p, c), f in sorted(design.edge_freqs().items()):
        ch = design.channels.edge_channel[c]
        g_fwd = _antenna_gain(design, p, ch, c, f, nodes, params)
        g_rev = _antenna_gain(design, c, ch, p, f, nodes, params)
        pl = path_loss_db(nodes[p], nodes[c], f, params)
        s = signal_strength_dbm(g_fwd, g_rev, pl)
        i = interference_mw((p, c), f, design, nodes, params)
        sinr = sinr_db(s, i, params.fade_margin_db)
        out[(p, c)] = LinkMetrics(g_fwd, g_rev, pl, s, i, sinr, throughput_mbps(sinr))
    return out
