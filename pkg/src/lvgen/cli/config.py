"""Run configuration: one INI file with per-stage sections.

Values live as strings until a stage asks for them typed, so the whole
configuration is diffable and hashable as text. Command-line flags
override file values; the effective configuration (after overrides) is
what gets hashed into manifests. Unknown sections or keys are rejected
rather than ignored, so a typo cannot silently fall back to a default.
"""

import configparser
import hashlib

from ..errors import ConfigError

DEFAULTS = {
    "run": {
        "master_seed": "7",
        "phase": "ed",
        "threads": "1",
        "rings": "24",
        "segments": "36",
    },
    "synth": {
        "n": "1034",
        "spec": "",
    },
    "vae": {
        "latent_dim": "16",
        "conv_channels": "16,32,64",
        "cheb_order": "6",
        "beta": "0.001",
        "epochs": "250",
        "batch_size": "8",
        "learning_rate": "0.001",
    },
    "ddpm": {
        "n_layers": "6",
        "width": "16",
        "embedding_dim": "16",
        "epochs": "20000",
        "batch_size": "64",
        "learning_rate": "0.005",
        "patience": "20000",
        "timesteps": "1000",
        "beta_start": "0.0001",
        "beta_end": "0.02",
    },
    "sample": {
        "n": "1000",
    },
    "gradcheck": {
        "h": "1e-5",
        "tol": "1e-5",
    },
}


class RunConfig:
    def __init__(self):
        self._v = {s: dict(kv) for s, kv in DEFAULTS.items()}

    # -- construction -----------------------------------------------------

    def load(self, path):
        """Merge an INI file over the defaults."""
        parser = configparser.ConfigParser(interpolation=None)
        try:
            read = parser.read([str(path)])
        except configparser.Error as exc:
            raise ConfigError(f"bad config file {path}: {exc}")
        if not read:
            raise ConfigError(f"config file {path} not found")
        for section in parser.sections():
            for key, value in parser.items(section):
                self.set(section, key, value)
        return self

    @classmethod
    def from_dict(cls, d):
        cfg = cls()
        for section, kv in d.items():
            for key, value in kv.items():
                cfg.set(section, key, value)
        return cfg

    def set(self, section, key, value):
        if section not in self._v:
            raise ConfigError(f"unknown config section [{section}]")
        if key not in self._v[section]:
            raise ConfigError(f"unknown config key {section}.{key}")
        self._v[section][key] = str(value)

    # -- typed access -----------------------------------------------------

    def get(self, section, key) -> str:
        return self._v[section][key]

    def getint(self, section, key) -> int:
        raw = self.get(section, key)
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"{section}.{key} must be an integer, got {raw!r}")

    def getfloat(self, section, key) -> float:
        raw = self.get(section, key)
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"{section}.{key} must be a number, got {raw!r}")

    def getints(self, section, key):
        raw = self.get(section, key)
        try:
            return [int(tok) for tok in raw.split(",") if tok.strip()]
        except ValueError:
            raise ConfigError(
                f"{section}.{key} must be comma-separated integers, got {raw!r}")

    # -- identity ---------------------------------------------------------

    def to_dict(self):
        return {s: dict(kv) for s, kv in self._v.items()}

    def canonical(self) -> str:
        lines = []
        for section in sorted(self._v):
            for key in sorted(self._v[section]):
                lines.append(f"[{section}] {key} = {self._v[section][key]}")
        return "\n".join(lines) + "\n"

    def hash(self) -> str:
        return hashlib.sha256(self.canonical().encode("utf-8")).hexdigest()[:16]
