"""Per-stage seed derivation.

One 64-bit master seed drives a whole run; each stage draws from its own
seed so stages stay independent (rerunning one never shifts another's
stream). The derivation is pinned: the stage seed is the top eight bytes,
big endian, of SHA-256 over the ASCII string "lvgen:{master}:{stage}:{index}".
"""

import hashlib


def stage_seed(master: int, stage: str, index: int = 0) -> int:
    digest = hashlib.sha256(
        f"lvgen:{int(master)}:{stage}:{int(index)}".encode("ascii")).digest()
    return int.from_bytes(digest[:8], "big")
