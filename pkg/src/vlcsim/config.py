"""Plain-text ``section.key = value`` configuration files.

Blank lines and ``#`` comments are ignored.  Recognised sections:

* ``channel``: ``path_gain_const``, ``thermal_noise``, ``shot_coeff``
* ``w_closed`` / ``w_open`` / ``interference``: ``ambient_dc``,
  ``interference_amplitude``, ``interference_frequency``,
  ``interference_harmonics``
* ``afe``: any :class:`~vlcsim.frontend.AfeConfig` field
* ``tx``: ``power``, ``ppm``, ``jitter_std``
* ``rx``: ``rate``, ``ppm``, ``jitter_std``, ``phase``
* ``pipeline``: ``capacity``, ``service_time``
"""
from __future__ import annotations

from pathlib import Path


class ConfigError(ValueError):
    pass


SCHEMA: dict[str, set[str]] = {
    "channel": {"path_gain_const", "thermal_noise", "shot_coeff"},
    "w_closed": {"ambient_dc", "interference_amplitude", "interference_frequency", "interference_harmonics"},
    "w_open": {"ambient_dc", "interference_amplitude", "interference_frequency", "interference_harmonics"},
    "interference": {"ambient_dc", "interference_amplitude", "interference_frequency", "interference_harmonics"},
    "afe": {"tia_gain", "hpf_cutoff", "bias", "amp2_gain", "lpf_cutoff", "adc_bits", "adc_span"},
    "tx": {"power", "ppm", "jitter_std"},
    "rx": {"rate", "ppm", "jitter_std", "phase"},
    "pipeline": {"capacity", "service_time"},
}


def parse_config(text: str, source: str = "<string>") -> dict[str, dict[str, float]]:
    out: dict[str, dict[str, float]] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        section, _, name = key.partition(".")
        if section not in SCHEMA or name not in SCHEMA[section]:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        try:
            num = float(value)
        except ValueError:
            raise ConfigError(f"{source}:{lineno}: {key} is not a number: {value!r}") from None
        out.setdefault(section, {})[name] = num
    return out


def load_config(path) -> dict[str, dict[str, float]]:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc}") from None
    return parse_config(text, str(p))
