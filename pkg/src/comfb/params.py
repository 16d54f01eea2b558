"""System parameters, unit handling and the flat key=value parameter files.

Internally everything runs in units of the mechanical frequency (omega_b = 1);
`SystemParams.omega_b` keeps the SI anchor (rad/s) so temperatures, powers and
delays can be ingested and reported in SI.  Parameter files and `--set`
overrides share one key catalog (see PARAM_KEYS); SI-suffixed and
dimensionless spellings of the same quantity conflict and are rejected.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass

from . import model

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class SystemParams:
    """All physical constants and drive/modulation settings, in omega_b units.

    omega_b is the SI anchor in rad/s; every other rate/frequency field is a
    multiple of omega_b.  N_b left as None is resolved from T on demand.
    """

    omega_b: float = TWO_PI * 1.0e6
    kappa_a: float = 0.5
    kappa_b: float = 1.0e-6
    delta_a: float = 1.0
    delta_c: float = 1.18
    omega_m: float = 2.006
    g: float = 4.0e-6
    G_c: float = 0.02
    theta_c: float = 0.0
    G_m: float = 0.03
    theta_m: float = 0.0
    E: float = 6.0e4
    r_b: float = 0.0
    theta: float = 0.0
    T: float = 0.020
    N_a: float = 0.0
    N_b: float | None = None

    def __post_init__(self):
        if self.omega_b <= 0.0:
            raise ValueError("omega_b must be positive")
        if self.kappa_a <= 0.0 or self.kappa_b <= 0.0:
            raise ValueError("decay rates must be positive")
        for name in ("g", "G_c", "G_m", "E"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be non-negative")
        if not 0.0 <= self.r_b < 1.0:
            raise ValueError("r_b must lie in [0, 1)")
        if self.T < 0.0:
            raise ValueError("temperature must be non-negative")
        if self.N_a < 0.0 or (self.N_b is not None and self.N_b < 0.0):
            raise ValueError("thermal occupations must be non-negative")

    @property
    def t_b(self) -> float:
        return math.sqrt(1.0 - self.r_b * self.r_b)

    @property
    def kappa_fb(self) -> float:
        return model.effective_decay(self.kappa_a, self.r_b, self.theta)

    @property
    def delta_fb(self) -> float:
        return model.effective_detuning(self.delta_a, self.kappa_a,
                                        self.r_b, self.theta)

    def thermal_n_b(self) -> float:
        """Phonon bath occupation: the explicit N_b if set, else from T."""
        if self.N_b is not None:
            return self.N_b
        return model.thermal_occupation(self.omega_b, self.T)

    def derived(self) -> "DerivedParams":
        return DerivedParams(kappa_fb=self.kappa_fb, delta_fb=self.delta_fb,
                             t_b=self.t_b)

    def replace(self, **kwargs) -> "SystemParams":
        return dataclasses.replace(self, **kwargs)

    def to_si(self, value_in_omega_b: float) -> float:
        """Rate in omega_b units -> rad/s."""
        return value_in_omega_b * self.omega_b

    def from_si(self, value_rad_per_s: float) -> float:
        """Rate in rad/s -> omega_b units."""
        return value_rad_per_s / self.omega_b

    def as_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["N_b"] = self.thermal_n_b()
        return d

    def digest(self) -> str:
        """Stable hash of the resolved parameter values."""
        blob = json.dumps(self.as_dict(), sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class DerivedParams:
    kappa_fb: float
    delta_fb: float
    t_b: float


class ParamFileError(ValueError):
    """Malformed, unknown or conflicting keys in a parameter file/override."""


# key -> (target field, kind); kinds:
#   si_2pi   value is f/2pi in Hz, stored as (2*pi*f)/omega_b
#   unit     value already in omega_b units
#   plain    stored verbatim
#   ratio:X  value times field X
_KINDS = {
    "omega_b_over_2pi_hz": ("omega_b", "anchor"),
    "kappa_a_over_2pi_hz": ("kappa_a", "si_2pi"),
    "kappa_b_over_2pi_hz": ("kappa_b", "si_2pi"),
    "g_over_2pi_hz": ("g", "si_2pi"),
    "E_over_2pi_hz": ("E", "si_2pi"),
    "kappa_a_over_omega_b": ("kappa_a", "unit"),
    "kappa_b_over_omega_b": ("kappa_b", "unit"),
    "delta_a_over_omega_b": ("delta_a", "unit"),
    "delta_c_over_omega_b": ("delta_c", "unit"),
    "omega_m_over_omega_b": ("omega_m", "unit"),
    "omega_m_over_delta_c": ("omega_m", "ratio:delta_c"),
    "g_over_omega_b": ("g", "unit"),
    "G_c_over_omega_b": ("G_c", "unit"),
    "G_m_over_omega_b": ("G_m", "unit"),
    "G_m_over_G_c": ("G_m", "ratio:G_c"),
    "E_over_omega_b": ("E", "unit"),
    "laser_power_w": ("E", "power"),
    "laser_wavelength_m": (None, "aux"),
    "r_b": ("r_b", "plain"),
    "theta_rad": ("theta", "plain"),
    "theta_c_rad": ("theta_c", "plain"),
    "theta_m_rad": ("theta_m", "plain"),
    "T_kelvin": ("T", "plain"),
    "N_a": ("N_a", "plain"),
    "N_b": ("N_b", "plain"),
}

PARAM_KEYS = tuple(_KINDS)

# groups of keys that specify the same physical quantity
_CONFLICTS = [
    ("kappa_a_over_2pi_hz", "kappa_a_over_omega_b"),
    ("kappa_b_over_2pi_hz", "kappa_b_over_omega_b"),
    ("g_over_2pi_hz", "g_over_omega_b"),
    ("E_over_2pi_hz", "E_over_omega_b", "laser_power_w"),
    ("omega_m_over_omega_b", "omega_m_over_delta_c"),
    ("G_m_over_omega_b", "G_m_over_G_c"),
    ("N_b", "T_kelvin"),
]


def parse_param_file(path: str) -> dict[str, float]:
    """Read a flat `key = value` file ('#' comments, blank lines allowed)."""
    entries: dict[str, float] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ParamFileError(f"{path}:{lineno}: expected key = value")
            key, _, text = line.partition("=")
            key = key.strip()
            if key not in _KINDS:
                raise ParamFileError(f"{path}:{lineno}: unknown key {key!r}")
            if key in entries:
                raise ParamFileError(f"{path}:{lineno}: duplicate key {key!r}")
            try:
                entries[key] = float(text.strip())
            except ValueError as exc:
                raise ParamFileError(
                    f"{path}:{lineno}: bad value for {key!r}") from exc
    return entries


def _check_conflicts(entries: dict[str, float]) -> None:
    for group in _CONFLICTS:
        present = [k for k in group if k in entries]
        if len(present) > 1:
            raise ParamFileError(
                "conflicting keys specify the same quantity: "
                + ", ".join(present))
    if "laser_power_w" in entries and "laser_wavelength_m" not in entries:
        raise ParamFileError("laser_power_w requires laser_wavelength_m")


def apply_entries(base: SystemParams, entries: dict[str, float]) -> SystemParams:
    """Apply a validated entry mapping onto base parameters, in key order."""
    _check_conflicts(entries)
    params = base
    if "omega_b_over_2pi_hz" in entries:
        params = params.replace(omega_b=TWO_PI * entries["omega_b_over_2pi_hz"])
    for key, value in entries.items():
        field, kind = _KINDS[key]
        if kind in ("anchor", "aux"):
            continue
        if kind == "si_2pi":
            params = params.replace(**{field: TWO_PI * value / params.omega_b})
        elif kind == "unit" or kind == "plain":
            params = params.replace(**{field: value})
        elif kind == "power":
            e_si = model.drive_amplitude_from_power(
                value, entries["laser_wavelength_m"],
                params.kappa_a * params.omega_b)
            params = params.replace(E=e_si / params.omega_b)
        elif kind.startswith("ratio:"):
            ref = kind.split(":", 1)[1]
            params = params.replace(**{field: value * getattr(params, ref)})
    if "T_kelvin" in entries and params.N_b is not None:
        params = params.replace(N_b=None)
    return params


def load_params(path: str | None = None,
                overrides: list[str] | None = None,
                base: SystemParams | None = None) -> SystemParams:
    """Build SystemParams from defaults, an optional file, then overrides.

    Overrides are `key=value` strings applied in order after the file; a
    repeated override key wins over earlier ones and over the file.
    """
    params = base if base is not None else SystemParams()
    if path is not None:
        params = apply_entries(params, parse_param_file(path))
    for item in overrides or []:
        if "=" not in item:
            raise ParamFileError(f"override {item!r}: expected key=value")
        key, _, text = item.partition("=")
        key = key.strip()
        if key not in _KINDS:
            raise ParamFileError(f"override: unknown key {key!r}")
        try:
            value = float(text.strip())
        except ValueError as exc:
            raise ParamFileError(f"override: bad value in {item!r}") from exc
        entries = {key: value}
        if key == "laser_power_w":
            raise ParamFileError(
                "laser_power_w override needs laser_wavelength_m; set both "
                "in a parameter file instead")
        params = apply_entries(params, entries)
    return params
