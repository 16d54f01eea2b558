"""Readers for the simulator's artifact contract.

A run directory holds manifest.json plus CSV files whose leading lines are
`# key: value` headers.  Only schema version 1 is understood; anything else
is refused rather than guessed at.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass

import numpy as np

SUPPORTED_SCHEMA = 1

AXIS_UNITS = {
    "r_b": "reflectivity",
    "theta_rad": "rad",
    "theta_c_rad": "rad",
    "theta_m_rad": "rad",
    "T_kelvin": "K",
    "N_a": "occupation",
    "N_b": "occupation",
    "omega_m_over_delta_c": "ratio",
    "G_m_over_G_c": "ratio",
}


class ArtifactError(ValueError):
    pass


def axis_label(key: str) -> str:
    """Axis label: the parameter path plus its unit."""
    if key in AXIS_UNITS:
        return f"{key} [{AXIS_UNITS[key]}]"
    if key.endswith("_over_omega_b"):
        return f"{key} [omega_b units]"
    if key.endswith("_over_2pi_hz"):
        return f"{key} [Hz]"
    return key


def load_manifest(path: str) -> dict:
    with open(path, encoding="utf-8") as fh:
        manifest = json.load(fh)
    schema = manifest.get("schema_version")
    if schema != SUPPORTED_SCHEMA:
        raise ArtifactError(
            f"unknown schema version {schema!r} (supported: {SUPPORTED_SCHEMA})")
    return manifest


def read_csv(path: str) -> tuple[list[str], list[list[str]]]:
    """CSV rows minus the `# key: value` header block."""
    with open(path, encoding="utf-8", newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    if not rows:
        raise ArtifactError(f"{path}: no rows")
    return rows[0], rows[1:]


def _to_float(text: str) -> float:
    return float(text) if text else math.nan


@dataclass
class SweepArtifacts:
    """A sweep run directory resolved into plottable arrays."""

    manifest: dict
    directory: str
    axis_keys: list[str]
    axis_values: list[np.ndarray]

    @classmethod
    def open(cls, manifest_path: str) -> "SweepArtifacts":
        manifest = load_manifest(manifest_path)
        if manifest.get("kind") != "sweep":
            raise ArtifactError(
                f"expected a sweep manifest, got kind={manifest.get('kind')!r}")
        directory = os.path.dirname(os.path.abspath(manifest_path))
        keys = [a["key"] for a in manifest["axes"]]
        values = [np.asarray(a.get("snapped", a["values"]), dtype=float)
                  for a in manifest["axes"]]
        return cls(manifest, directory, keys, values)

    @property
    def is_2d(self) -> bool:
        return len(self.axis_keys) == 2

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.manifest["grid"])

    def measure_grid(self, measure: str) -> tuple[np.ndarray, np.ndarray]:
        """(values, ok_mask) for one measure, shaped to the grid."""
        path = os.path.join(self.directory, f"{measure}_max.csv")
        if not os.path.exists(path):
            raise ArtifactError(
                f"{measure}_max.csv not found; manifest lists "
                f"{self.manifest.get('measures')}")
        header, rows = read_csv(path)
        n_axes = len(self.axis_keys)
        expect = int(np.prod(self.shape))
        if len(rows) != expect:
            raise ArtifactError(
                f"{path}: {len(rows)} rows, expected {expect} (partial grid)")
        values = np.array([_to_float(r[n_axes]) for r in rows])
        verdicts = np.array([r[n_axes + 1] for r in rows])
        return (values.reshape(self.shape),
                (verdicts == "ok").reshape(self.shape))

    def contours(self, measure: str) -> list[np.ndarray]:
        """Zero-level polylines for a steering measure, if exported."""
        path = os.path.join(self.directory, f"contours_{measure}.csv")
        if not os.path.exists(path):
            return []
        _, rows = read_csv(path)
        lines: dict[str, list[tuple[float, float]]] = {}
        for pid, x, y in rows:
            lines.setdefault(pid, []).append((float(x), float(y)))
        return [np.asarray(pts) for pts in lines.values()]


@dataclass
class SimulateArtifacts:
    manifest: dict
    directory: str

    @classmethod
    def open(cls, manifest_path: str) -> "SimulateArtifacts":
        manifest = load_manifest(manifest_path)
        if manifest.get("kind") != "simulate":
            raise ArtifactError(
                f"expected a simulate manifest, got kind="
                f"{manifest.get('kind')!r}")
        return cls(manifest, os.path.dirname(os.path.abspath(manifest_path)))

    def series(self, filename: str) -> dict[str, np.ndarray]:
        header, rows = read_csv(os.path.join(self.directory, filename))
        cols = np.array([[_to_float(v) for v in r] for r in rows])
        return {name: cols[:, i] for i, name in enumerate(header)}
