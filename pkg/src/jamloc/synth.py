"""Deterministic synthetic CIR/diagnostics generator with controllable domain shift.

Geometry: receivers sit at the corners of the jammer grid inside a larger
room.  Each CIR is a direct path, wall reflections up to a configurable
order (image-source method) and single-bounce paths off static point
scatterers ("furniture"); shifted layouts move some furniture, add clutter
and change wall reflectivity.  Arrival delays follow path length, amplitudes fall off
as 1/length and decay exponentially with excess delay.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .dataset import DIAGNOSTICS, DOMAINS, N_TAPS, SampleSet

SPEED_CM_PER_NS = 29.9792458
TAP_NS = 1.0016


def grid_positions(n: int, width=300.0, height=500.0, margin=25.0) -> list[tuple[float, float]]:
    """``n`` jammer positions on a near-square lattice covering the grid."""
    cols = max(1, int(round(np.sqrt(n * width / height))))
    rows = int(np.ceil(n / cols))
    xs = np.linspace(margin, width - margin, cols)
    ys = np.linspace(margin, height - margin, rows)
    pts = [(float(x), float(y)) for y in ys for x in xs]
    return pts[:n]


def random_positions(n: int, seed: int, width=300.0, height=500.0, margin=25.0,
                     avoid=(), min_sep=30.0) -> list[tuple[float, float]]:
    rng = np.random.default_rng(seed)
    out: list[tuple[float, float]] = []
    taken = [np.asarray(a, float) for a in avoid]
    while len(out) < n:
        p = np.array([rng.uniform(margin, width - margin), rng.uniform(margin, height - margin)])
        if all(np.hypot(*(p - q)) >= min_sep for q in taken):
            out.append((float(p[0]), float(p[1])))
            taken.append(p)
    return out


@dataclass(frozen=True)
class SynthConfig:
    positions: tuple[tuple[float, float], ...]
    samples_per_position: int = 100
    domain: str = "source"
    grid: tuple[float, float] = (300.0, 500.0)
    receivers: tuple[tuple[float, float], ...] = ((0.0, 0.0), (300.0, 0.0), (300.0, 500.0), (0.0, 500.0))
    # room walls (x_min, x_max, y_min, y_max), outside the grid
    walls: tuple[float, float, float, float] = (-120.0, 420.0, -90.0, 610.0)
    reflection_coeffs: tuple[float, float, float, float] = (0.55, 0.45, 0.5, 0.4)
    reflection_scale: float = 1.0
    # highest wall-reflection order of the image-source expansion
    reflection_order: int = 3
    clutter_taps: int = 0
    clutter_coeff: float = 0.45
    clutter_seed: int = 1234
    # static furniture scatterers shared by every layout built from the same seed
    scatterers: int = 40
    scatterer_coeff: float = 0.3
    scatterer_seed: int = 77
    # fraction of static scatterers relocated in a shifted layout
    moved_fraction: float = 0.0
    excess_decay_cm: float = 1500.0
    first_path_tap: float = 3.0
    pulse_width_taps: float = 0.6
    noise_std: float = 0.003
    amplitude_jitter: float = 0.03
    # per-receiver gain offsets (dB) on RSSI and CIR amplitude
    receiver_gain_db: tuple[float, ...] = (0.0, -2.5, 1.5, -4.0)
    position_id_offset: int = 0
    # report CIRs relative to the direct-path arrival (as UWB chips do) instead of
    # keeping the absolute propagation delay
    align_first_path: bool = False

    def __post_init__(self):
        if self.samples_per_position <= 0:
            raise ValueError("samples_per_position must be positive")
        if self.domain not in DOMAINS:
            raise ValueError(f"domain must be one of {DOMAINS}")
        w, h = self.grid
        for x, y in self.positions:
            if not (0.0 <= x <= w and 0.0 <= y <= h):
                raise ValueError(f"jammer position ({x}, {y}) outside grid {w} x {h}")
        if len(self.receiver_gain_db) < len(self.receivers):
            raise ValueError("one gain offset per receiver required")

    def to_dict(self) -> dict:
        from dataclasses import asdict

        return asdict(self)


def default_source_config(n_positions: int = 52, samples_per_position: int = 100, **kw) -> SynthConfig:
    return SynthConfig(positions=tuple(grid_positions(n_positions)), samples_per_position=samples_per_position, **kw)


def default_target_config(n_positions: int = 16, samples_per_position: int = 100,
                          avoid=(), position_seed: int = 99, **kw) -> SynthConfig:
    """Shifted layout: rescaled wall reflections, moved furniture, extra clutter."""
    return SynthConfig(
        positions=tuple(random_positions(n_positions, position_seed, avoid=avoid)),
        samples_per_position=samples_per_position,
        domain="target",
        reflection_coeffs=(0.3, 0.7, 0.65, 0.25),
        moved_fraction=0.3,
        clutter_taps=6,
        **kw,
    )


def _uniform_points(seed: int, n: int, walls) -> np.ndarray:
    rng = np.random.default_rng(seed)
    x0, x1, y0, y1 = walls
    return np.column_stack([rng.uniform(x0, x1, n), rng.uniform(y0, y1, n)])


def scatterer_points(cfg: SynthConfig) -> np.ndarray:
    """Static scatterers plus layout clutter, in a fixed order."""
    pts = _uniform_points(cfg.scatterer_seed, cfg.scatterers, cfg.walls)
    n_moved = int(round(cfg.moved_fraction * cfg.scatterers))
    if n_moved:
        pts[:n_moved] = _uniform_points(cfg.clutter_seed + 1, n_moved, cfg.walls)
    if cfg.clutter_taps:
        pts = np.vstack([pts, _uniform_points(cfg.clutter_seed, cfg.clutter_taps, cfg.walls)])
    return pts


def image_sources(cfg: SynthConfig, jammer) -> tuple[np.ndarray, np.ndarray]:
    """Mirror images of the jammer up to ``reflection_order`` bounces, with their
    cumulative reflection coefficients.  Ordered by order, then wall sequence."""
    x0, x1, y0, y1 = cfg.walls
    walls = ((0, x0), (0, x1), (1, y0), (1, y1))
    rc = np.asarray(cfg.reflection_coeffs, float) * cfg.reflection_scale
    frontier = [(np.asarray(jammer, float), 1.0, -1)]
    seen: set[tuple[float, float]] = set()
    pts, cs = [], []
    for _ in range(cfg.reflection_order):
        nxt = []
        for pos, c, last in frontier:
            for w, (axis, at) in enumerate(walls):
                if w == last:
                    continue
                img = pos.copy()
                img[axis] = 2 * at - img[axis]
                key = (round(float(img[0]), 6), round(float(img[1]), 6))
                if key in seen:
                    continue
                seen.add(key)
                pts.append(img)
                cs.append(c * rc[w])
                nxt.append((img, c * rc[w], w))
        frontier = nxt
    return np.reshape(pts, (-1, 2)), np.asarray(cs)


def path_geometry(cfg: SynthConfig, jammer, receiver) -> tuple[np.ndarray, np.ndarray]:
    """Path lengths (cm) and nominal amplitudes of every propagation path.

    Index 0 is the direct path.
    """
    j = np.asarray(jammer, float)
    r = np.asarray(receiver, float)
    images, img_coeffs = image_sources(cfg, j)
    direct = max(np.hypot(*(j - r)), 1.0)
    lengths = [direct, *np.hypot(*(images - r).T)]
    coeffs = [1.0, *img_coeffs]
    pts = scatterer_points(cfg)
    if len(pts):
        lengths += list(np.hypot(*(pts - j).T) + np.hypot(*(pts - r).T))
        coeffs += [cfg.scatterer_coeff] * (len(pts) - cfg.clutter_taps) + [cfg.clutter_coeff] * cfg.clutter_taps
    lengths = np.asarray(lengths)
    amps = np.asarray(coeffs) * (100.0 / lengths) * np.exp(-(lengths - direct) / cfg.excess_decay_cm)
    return lengths, amps


def direct_path_tap(cfg: SynthConfig, jammer, receiver) -> float:
    """Fractional tap index of the direct-path arrival."""
    if cfg.align_first_path:
        return cfg.first_path_tap
    d = max(np.hypot(jammer[0] - receiver[0], jammer[1] - receiver[1]), 1.0)
    return cfg.first_path_tap + d / (SPEED_CM_PER_NS * TAP_NS)


def _diagnostics(rng, cir: np.ndarray, dist_cm: float, gain_db: float, first_tap: float, domain: int) -> np.ndarray:
    jam = np.exp(-dist_cm / 250.0)
    mag = np.abs(cir[:100])
    fp = int(round(first_tap))
    phe = rng.poisson(2.0 + 40.0 * jam)
    rsl = rng.poisson(1.0 + 60.0 * jam)
    crcg = rng.poisson(100.0 * (1.0 - 0.8 * jam))
    crcb = rng.poisson(3.0 + 30.0 * jam)
    prej = rng.poisson(5.0 + 50.0 * jam)
    rssi = -60.0 + gain_db - 20.0 * np.log10(dist_cm / 100.0) - 1.5 * domain + rng.normal(0.0, 1.0)
    peak = 1000.0 * mag.max() + rng.normal(0.0, 5.0)
    power = 1000.0 * float(np.sum(mag ** 2)) + rng.normal(0.0, 5.0)
    f1, f2, f3 = (1000.0 * mag[min(fp + k, 99)] + rng.normal(0.0, 5.0) for k in range(3))
    return np.array([phe, rsl, crcg, crcb, prej, rssi, peak, power, f1, f2, f3], dtype=float)


def synth_generate(config: SynthConfig, seed: int) -> SampleSet:
    """Generate ``positions x receivers x samples_per_position`` samples.

    Output is a pure function of ``(config, seed)``.
    """
    rng = np.random.default_rng(seed)
    dom = DOMAINS.index(config.domain)
    tap = np.arange(N_TAPS, dtype=float)
    tap_cm = SPEED_CM_PER_NS * TAP_NS
    k_carrier = 2 * np.pi * 6.5 / SPEED_CM_PER_NS  # rad per cm at 6.5 GHz

    n_rx = len(config.receivers)
    n = len(config.positions) * n_rx * config.samples_per_position
    diag = np.empty((n, len(DIAGNOSTICS)))
    cir = np.empty((n, N_TAPS), dtype=complex)
    rx_ids = np.empty(n, dtype=np.int64)
    pos_ids = np.empty(n, dtype=np.int64)
    xy = np.empty((n, 2))

    i = 0
    for p_idx, jammer in enumerate(config.positions):
        for r_idx, receiver in enumerate(config.receivers):
            lengths, amps = path_geometry(config, jammer, receiver)
            gain = 10 ** (config.receiver_gain_db[r_idx] / 20.0)
            ref = lengths[0] if config.align_first_path else 0.0
            delays = config.first_path_tap + (lengths - ref) / tap_cm
            for _ in range(config.samples_per_position):
                a = amps * gain * (1.0 + config.amplitude_jitter * rng.standard_normal(len(amps)))
                phase = rng.uniform(0, 2 * np.pi) - k_carrier * lengths
                pulses = np.exp(-0.5 * ((tap[None, :] - delays[:, None]) / config.pulse_width_taps) ** 2)
                h = (a * np.exp(1j * phase)) @ pulses
                h += config.noise_std * (rng.standard_normal(N_TAPS) + 1j * rng.standard_normal(N_TAPS)) / np.sqrt(2)
                cir[i] = h
                diag[i] = _diagnostics(rng, h, lengths[0], config.receiver_gain_db[r_idx], delays[0], dom)
                rx_ids[i] = r_idx
                pos_ids[i] = config.position_id_offset + p_idx
                xy[i] = jammer
                i += 1

    return SampleSet(
        sample_id=np.arange(n, dtype=np.int64),
        receiver_id=rx_ids,
        diagnostics=diag,
        cir=cir,
        position_id=pos_ids,
        xy=xy,
        domain=np.full(n, dom, dtype=np.int64),
        provenance="synthetic",
        seed=seed,
    )


def with_positions(cfg: SynthConfig, positions) -> SynthConfig:
    return replace(cfg, positions=tuple(tuple(map(float, p)) for p in positions))
