"""Run manifests: what ran, under which configuration and seeds, reading
and producing which artifact bytes.

Artifacts are referenced by SHA-256 of their file content, so a manifest
both documents a run and lets `replay` verify that re-execution on the
same platform reproduces every output bit for bit.
"""

import hashlib
import json
from dataclasses import asdict, dataclass, field

from ..errors import ValidationError

MANIFEST_KIND = "lvgen-run"


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    command: str
    tool_version: str
    config: dict
    config_hash: str
    master_seed: int
    stage_seeds: dict
    inputs: dict = field(default_factory=dict)    # name -> {path, sha256}
    outputs: dict = field(default_factory=dict)
    started: str = ""
    finished: str = ""
    kind: str = MANIFEST_KIND

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, text):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"manifest is not valid JSON: {exc}")
        if not isinstance(data, dict) or data.get("kind") != MANIFEST_KIND:
            raise ValidationError("not a run manifest (missing kind)")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ValidationError(f"manifest schema mismatch: {exc}")


def save_manifest(path, manifest: RunManifest):
    with open(path, "w") as fh:
        fh.write(manifest.to_json())
        fh.write("\n")


def load_manifest(path) -> RunManifest:
    try:
        with open(path) as fh:
            return RunManifest.from_json(fh.read())
    except FileNotFoundError:
        raise ValidationError(f"manifest {path} not found")
