"""Monte-Carlo BER measurement of trained systems, constellation geometry
reports, fairness metrics, and side-by-side tables against the baselines.

Measurement streams symbols until each user has accumulated enough error
events (default 100) or the symbol cap is hit; exact-zero points are kept
and flagged rather than dropped.
"""
from __future__ import annotations

import importlib.resources
import json
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .baselines import (QpskNomaConfig, ber_16qam, ber_qpsk_noma_strong_sic,
                        ber_qpsk_noma_weak, ml_detect_indices)
from .channel import snr2_from, snr_to_sigma2
from .errors import ConfigError, NoDataError
from .model import (Codebook, NomaAutoencoder, build_codebook, decode_batch,
                    message_indices)
from .rng import RngStream

DEFAULT_MIN_ERROR_EVENTS = 100
DEFAULT_MAX_SYMBOLS = 10_000_000
EVAL_CHUNK = 65_536


def _csv_num(v) -> str:
    return repr(float(v))


@dataclass(frozen=True)
class BerPoint:
    """One SNR point of a measured curve; n_bits counts each user's bits."""

    snr1_db: float
    ber1: float
    ber2: float
    n_bits: int
    stderr1: float
    stderr2: float
    n_error_events1: int
    n_error_events2: int

    @classmethod
    def from_counts(cls, snr1_db: float, n_bits: int,
                    events1: int, events2: int) -> "BerPoint":
        ber1 = events1 / n_bits
        ber2 = events2 / n_bits
        return cls(
            snr1_db=snr1_db, ber1=ber1, ber2=ber2, n_bits=n_bits,
            stderr1=float(np.sqrt(ber1 * (1.0 - ber1) / n_bits)),
            stderr2=float(np.sqrt(ber2 * (1.0 - ber2) / n_bits)),
            n_error_events1=events1, n_error_events2=events2,
        )

    @property
    def zero_errors1(self) -> bool:
        return self.n_error_events1 == 0

    @property
    def zero_errors2(self) -> bool:
        return self.n_error_events2 == 0

    @property
    def worse_ber(self) -> float:
        return max(self.ber1, self.ber2)


def measure_ber(system: NomaAutoencoder, h1: complex, h2: complex,
                snr_grid: Sequence[float],
                min_error_events: int = DEFAULT_MIN_ERROR_EVENTS,
                max_symbols: int = DEFAULT_MAX_SYMBOLS,
                seed: int = 0,
                chunk: int = EVAL_CHUNK,
                with_ml: bool = False,
                codebook: Optional[Codebook] = None):
    """Measured BER per SNR point for both users.

    Each point owns RngStream(seed, point_index), so points are reproducible
    independently. With with_ml=True a maximum-likelihood detector runs on
    the same received samples and a parallel list of its BerPoints is
    returned as the second element.
    """
    if len(snr_grid) == 0:
        raise ConfigError("snr_grid must be non-empty")
    if system.k1 != system.k2:
        raise ConfigError("measurement assumes equal per-user bit widths")
    if abs(h1) > abs(h2):
        raise ConfigError("user 1 must be the weak user (|h1| <= |h2|)")
    k = system.k1
    cb = build_codebook(system.tx) if codebook is None else codebook
    points: List[BerPoint] = []
    ml_points: List[BerPoint] = []
    for index, snr_db in enumerate(snr_grid):
        rng = RngStream(seed, stream_id=index)
        sigma2 = snr_to_sigma2(snr_db, h1, system.tx.power)
        events = [0, 0]
        ml_events = [0, 0]
        n_symbols = 0
        while ((events[0] < min_error_events or events[1] < min_error_events)
               and n_symbols < max_symbols):
            n = min(chunk, max_symbols - n_symbols)
            bits = rng.bits((n, 2 * k))
            x = cb.symbols[message_indices(bits)]
            for u, (rx, h) in enumerate(((system.rx1, h1), (system.rx2, h2))):
                own = bits[:, :k] if u == 0 else bits[:, k:]
                z = x + rng.complex_gaussian(sigma2, n) / h
                probs = decode_batch(rx, z, gain=h)
                events[u] += int(np.sum((probs >= 0.5) != own))
                if with_ml:
                    det = cb.bits[ml_detect_indices(z, cb, 1.0)]
                    det_own = det[:, :k] if u == 0 else det[:, k:]
                    ml_events[u] += int(np.sum(det_own != own))
            n_symbols += n
        n_bits = n_symbols * k
        points.append(BerPoint.from_counts(snr_db, n_bits, events[0], events[1]))
        if with_ml:
            ml_points.append(BerPoint.from_counts(snr_db, n_bits, ml_events[0], ml_events[1]))
    if with_ml:
        return points, ml_points
    return points


def fairness_gap(curve: Sequence[BerPoint], floor: float) -> float:
    """Worst log10 spread between the two users' BERs over usable points.

    Points where either BER sits below the floor are excluded; if nothing
    survives the filter there is no data to compare.
    """
    if not floor > 0.0:
        raise ConfigError("floor must be positive")
    included = [p for p in curve if p.ber1 >= floor and p.ber2 >= floor]
    if not included:
        raise NoDataError("no BER points above the floor on both users")
    return max(abs(np.log10(p.ber1) - np.log10(p.ber2)) for p in included)


@dataclass(frozen=True)
class BitGroup:
    """Symbols sharing one user's bit pattern: their centroid and spread."""

    user: int
    bits: Tuple[int, ...]
    centroid: complex
    rms_spread: float


@dataclass
class ConstellationReport:
    codebook: Codebook
    min_pairwise_distance: float
    mean_power: float
    groups: List[BitGroup]


def analyze_codebook(cb: Codebook) -> ConstellationReport:
    """Geometry report: minimum pairwise distance and per-user clusters."""
    d = np.abs(cb.symbols[:, None] - cb.symbols[None, :])
    off_diag = d[~np.eye(cb.size, dtype=bool)]
    groups: List[BitGroup] = []
    for user, (lo, hi) in ((1, (0, cb.k1)), (2, (cb.k1, cb.k1 + cb.k2))):
        user_bits = cb.bits[:, lo:hi]
        for pattern in np.unique(user_bits, axis=0):
            mask = np.all(user_bits == pattern, axis=1)
            members = cb.symbols[mask]
            centroid = complex(np.mean(members))
            spread = float(np.sqrt(np.mean(np.abs(members - centroid) ** 2)))
            groups.append(BitGroup(user, tuple(int(b) for b in pattern), centroid, spread))
    return ConstellationReport(
        codebook=cb,
        min_pairwise_distance=float(off_diag.min()),
        mean_power=cb.mean_power,
        groups=groups,
    )


def extract_constellation(tx) -> ConstellationReport:
    return analyze_codebook(build_codebook(tx))


@dataclass(frozen=True)
class ComparisonRow:
    method: str
    snr1_db: float
    worse_ber: float
    source: str  # measured | closed-form | literature-constant


@dataclass
class ComparisonTable:
    rows: List[ComparisonRow]


def literature_rows() -> List[ComparisonRow]:
    """Published worse-user BER constants shipped as versioned data."""
    ref = json.loads(
        importlib.resources.files("superconst").joinpath("data/literature_ber.json").read_text()
    )
    return [
        ComparisonRow(method=r["method"], snr1_db=float(r["snr1_db"]),
                      worse_ber=float(r["worse_ber"]), source="literature-constant")
        for r in ref["rows"]
    ]


def compare_with_baselines(system: NomaAutoencoder, h1: float = 1.0, h2: float = 2.0,
                           snr_list: Sequence[float] = (14.0, 16.0, 18.0),
                           alpha: float = 0.7, seed: int = 0,
                           min_error_events: int = DEFAULT_MIN_ERROR_EVENTS,
                           max_symbols: int = DEFAULT_MAX_SYMBOLS) -> ComparisonTable:
    """Worse-user BER of the trained system next to closed forms and
    published reference constants."""
    rows: List[ComparisonRow] = []
    measured = measure_ber(system, h1, h2, snr_list, seed=seed,
                           min_error_events=min_error_events, max_symbols=max_symbols)
    for point in measured:
        rows.append(ComparisonRow("learned", point.snr1_db, point.worse_ber, "measured"))
    for snr_db in snr_list:
        cfg = QpskNomaConfig.at_snr1(snr_db, alpha=alpha, h1=h1, h2=h2)
        worse = max(ber_qpsk_noma_weak(cfg), ber_qpsk_noma_strong_sic(cfg))
        rows.append(ComparisonRow(f"qpsk-noma-alpha{alpha:g}", snr_db, worse, "closed-form"))
        rows.append(ComparisonRow(
            "16qam-strong-user", snr_db,
            ber_16qam(snr2_from(snr_db, h1, h2)), "closed-form"))
    rows.extend(literature_rows())
    return ComparisonTable(rows=rows)


# ---------------------------------------------------------------------------
# Report serialization (CSV / JSON / SVG); provenance rides along as data.

def ber_points_csv(points: Sequence[BerPoint], provenance: Optional[dict] = None) -> str:
    lines = []
    if provenance is not None:
        lines.append("# provenance: " + json.dumps(provenance, sort_keys=True))
    lines.append("snr1_db,ber1,stderr1,ber2,stderr2,n_bits")
    for p in points:
        lines.append(",".join([
            _csv_num(p.snr1_db), _csv_num(p.ber1), _csv_num(p.stderr1),
            _csv_num(p.ber2), _csv_num(p.stderr2), str(p.n_bits),
        ]))
    return "\n".join(lines) + "\n"


def ber_report_dict(points: Sequence[BerPoint], provenance: Optional[dict] = None) -> dict:
    return {
        "provenance": provenance,
        "points": [
            {
                "snr1_db": p.snr1_db,
                "ber1": p.ber1, "stderr1": p.stderr1,
                "ber2": p.ber2, "stderr2": p.stderr2,
                "n_bits": p.n_bits,
                "n_error_events1": p.n_error_events1,
                "n_error_events2": p.n_error_events2,
                "zero_errors1": p.zero_errors1,
                "zero_errors2": p.zero_errors2,
            }
            for p in points
        ],
    }


def comparison_csv(table: ComparisonTable, provenance: Optional[dict] = None) -> str:
    lines = []
    if provenance is not None:
        lines.append("# provenance: " + json.dumps(provenance, sort_keys=True))
    lines.append("method,snr1_db,worse_ber,source")
    for r in table.rows:
        lines.append(f"{r.method},{_csv_num(r.snr1_db)},{_csv_num(r.worse_ber)},{r.source}")
    return "\n".join(lines) + "\n"


def constellation_csv(report: ConstellationReport, provenance: Optional[dict] = None) -> str:
    cb = report.codebook
    lines = []
    if provenance is not None:
        lines.append("# provenance: " + json.dumps(provenance, sort_keys=True))
    lines.append("bits1,bits2,i,q")
    for i in range(cb.size):
        row = cb.bits[i]
        b1 = "".join(str(int(b)) for b in row[: cb.k1])
        b2 = "".join(str(int(b)) for b in row[cb.k1:])
        lines.append(f"{b1},{b2},{_csv_num(cb.symbols[i].real)},{_csv_num(cb.symbols[i].imag)}")
    lines.append(f"# mean_power,{_csv_num(report.mean_power)}")
    return "\n".join(lines) + "\n"


def constellation_report_dict(report: ConstellationReport,
                              provenance: Optional[dict] = None) -> dict:
    return {
        "provenance": provenance,
        "mean_power": report.mean_power,
        "min_pairwise_distance": report.min_pairwise_distance,
        "points": [
            {
                "bits1": "".join(str(int(b)) for b in report.codebook.bits[i][: report.codebook.k1]),
                "bits2": "".join(str(int(b)) for b in report.codebook.bits[i][report.codebook.k1:]),
                "i": float(report.codebook.symbols[i].real),
                "q": float(report.codebook.symbols[i].imag),
            }
            for i in range(report.codebook.size)
        ],
        "groups": [
            {
                "user": g.user,
                "bits": "".join(str(b) for b in g.bits),
                "centroid_i": g.centroid.real,
                "centroid_q": g.centroid.imag,
                "rms_spread": g.rms_spread,
            }
            for g in report.groups
        ],
    }


_PALETTE = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
    "#e377c2", "#7f7f7f", "#bcbd22", "#17becf", "#393b79", "#637939",
    "#8c6d31", "#843c39", "#7b4173", "#3182bd",
]


def render_constellation_svg(report: ConstellationReport,
                             noisy_samples=None,
                             noisy_labels=None,
                             provenance: Optional[dict] = None) -> str:
    """Deterministic SVG scatter: noiseless points as crosses, optional noisy
    samples as dots colored by their label index (the selected user's bits)."""
    size = 520
    margin = 40.0
    symbols = report.codebook.symbols
    extent = float(np.max(np.abs(np.concatenate([symbols.real, symbols.imag]))))
    if noisy_samples is not None and len(noisy_samples) > 0:
        noisy = np.asarray(noisy_samples, dtype=complex)
        extent = max(extent, float(np.max(np.abs(np.concatenate([noisy.real, noisy.imag])))))
    else:
        noisy = np.array([], dtype=complex)
    extent = max(extent * 1.1, 1e-6)
    half = size / 2.0

    def sx(v: float) -> str:
        return f"{half + (half - margin) * v / extent:.2f}"

    def sy(v: float) -> str:
        return f"{half - (half - margin) * v / extent:.2f}"

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
        f'viewBox="0 0 {size} {size}">',
    ]
    if provenance is not None:
        desc = json.dumps(provenance, sort_keys=True).replace("&", "&amp;").replace("<", "&lt;")
        parts.append(f"<desc>{desc}</desc>")
    parts.append(f'<rect width="{size}" height="{size}" fill="white"/>')
    parts.append(f'<line x1="{margin}" y1="{half}" x2="{size - margin}" y2="{half}" '
                 'stroke="#cccccc" stroke-width="1"/>')
    parts.append(f'<line x1="{half}" y1="{margin}" x2="{half}" y2="{size - margin}" '
                 'stroke="#cccccc" stroke-width="1"/>')
    for i, z in enumerate(noisy):
        color = _PALETTE[int(noisy_labels[i]) % len(_PALETTE)] if noisy_labels is not None else "#999999"
        parts.append(f'<circle cx="{sx(z.real)}" cy="{sy(z.imag)}" r="1.5" '
                     f'fill="{color}" fill-opacity="0.5"/>')
    arm = 5.0
    for z in symbols:
        x, y = sx(z.real), sy(z.imag)
        parts.append(f'<line x1="{float(x) - arm:.2f}" y1="{y}" x2="{float(x) + arm:.2f}" y2="{y}" '
                     'stroke="black" stroke-width="1.6"/>')
        parts.append(f'<line x1="{x}" y1="{float(y) - arm:.2f}" x2="{x}" y2="{float(y) + arm:.2f}" '
                     'stroke="black" stroke-width="1.6"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
