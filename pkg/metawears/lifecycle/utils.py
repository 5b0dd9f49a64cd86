import hashlib
import json
import os
from typing import Any, Dict

import numpy as np

U64_MASK = (1 << 64) - 1


def derive_seed(*parts: Any) -> int:
    """
    Mix any number of tokens (seeds, patient ids, labels, indexes...) into a 64-bit seed. Used for every named
    substream, e.g. `derive_seed(seed, 'pretrain', epoch, episode)`
    :return: unsigned 64-bit integer
    """
    digest = hashlib.blake2b(repr(parts).encode(), digest_size=8).digest()
    return int.from_bytes(digest, 'little') & U64_MASK


def get_rng(*parts: Any) -> np.random.Generator:
    return np.random.default_rng(derive_seed(*parts))


def canonical_json(data: Any) -> str:
    return json.dumps(data, sort_keys=True, separators=(',', ':'), allow_nan=False)


def config_hash(data: Dict[str, Any]) -> str:
    return hashlib.sha256(canonical_json(data).encode()).hexdigest()


def write_json(path: str, data: Any):
    """
    Stable JSON output (sorted keys, trailing newline) so identical runs produce identical bytes
    """
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(data, f, indent=2, sort_keys=True, allow_nan=False)
        f.write('\n')


def samples_digest(samples: np.ndarray) -> str:
    return hashlib.blake2b(np.ascontiguousarray(samples).tobytes(), digest_size=16).hexdigest()
