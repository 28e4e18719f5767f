"""Observation files and synthetic data."""

import re

import numpy as np

from . import streams
from .bayes import ObservationSeries
from .damage import GrowthLaw, ModelParams, crack_lengths

MIN_LENGTH = 1e-6  # mm, floor applied to noisy synthetic lengths

_SPLIT = re.compile(r"[,\s;]+")


class ObservationFormatError(ValueError):
    pass


def ingest_observations(path, format="csv"):
    """Read a two-column ``cycle, crack_length_mm`` file.

    Comma, semicolon, tab or space delimited; lines starting with ``#`` and a
    single non-numeric header line are skipped. Rows are sorted by cycle.
    """
    if format not in ("csv", "txt", "tsv"):
        raise ObservationFormatError(f"unsupported observation format {format!r}")
    rows = []
    seen_header = False
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            fields = [f for f in _SPLIT.split(line) if f]
            if len(fields) != 2:
                raise ObservationFormatError(f"{path}:{lineno}: expected 2 columns, got {len(fields)}")
            try:
                cycle, length = float(fields[0]), float(fields[1])
            except ValueError:
                if not rows and not seen_header:
                    seen_header = True
                    continue
                raise ObservationFormatError(f"{path}:{lineno}: non-numeric row {line!r}") from None
            if not (np.isfinite(cycle) and np.isfinite(length)):
                raise ObservationFormatError(f"{path}:{lineno}: non-finite value")
            if cycle < 0:
                raise ObservationFormatError(f"{path}:{lineno}: negative cycle count {cycle}")
            if length <= 0:
                raise ObservationFormatError(f"{path}:{lineno}: non-positive crack length {length}")
            rows.append((cycle, length, lineno))
    if len(rows) < 2:
        raise ObservationFormatError(f"{path}: need at least 2 observations, found {len(rows)}")
    rows.sort(key=lambda r: r[0])
    for prev, cur in zip(rows, rows[1:]):
        if prev[0] == cur[0]:
            raise ObservationFormatError(
                f"{path}: duplicate cycle {cur[0]:g} on lines {prev[2]} and {cur[2]}")
    return ObservationSeries(np.array([r[0] for r in rows]), np.array([r[1] for r in rows]))


def emit_observations(obs, path):
    with open(path, "w") as fh:
        fh.write("# cycle,crack_length_mm\n")
        for c, a in zip(obs.cycles, obs.lengths):
            fh.write(f"{float(c)!r},{float(a)!r}\n")


def synth_data(true_params: ModelParams, law: GrowthLaw, n_points=20, cycle_span=(0.0, 15000.0),
               seed=0, cycles=None, stream_id=0, noise_sd=None):
    """Noisy observations of a known trajectory.

    Cycles are evenly spaced over ``cycle_span`` and rounded to whole cycles
    unless ``cycles`` is given. Noise is ``N(0, sigma^2)`` from the stream
    ``(seed, stream_id)``; lengths are floored at ``MIN_LENGTH``. ``noise_sd``
    overrides ``true_params.sigma`` (0 gives the clean trajectory).
    """
    if cycles is None:
        if n_points < 2:
            raise ValueError("n_points must be >= 2")
        cycles = np.round(np.linspace(cycle_span[0], cycle_span[1], n_points))
    cycles = np.asarray(cycles, dtype=float)
    clean = crack_lengths(true_params.log10_alpha, true_params.beta, cycles, law)
    rng = streams.stream(seed, streams.SYNTH, stream_id)
    sd = true_params.sigma if noise_sd is None else float(noise_sd)
    noisy = clean + sd * rng.standard_normal(len(cycles))
    return ObservationSeries(cycles, np.maximum(noisy, MIN_LENGTH))
