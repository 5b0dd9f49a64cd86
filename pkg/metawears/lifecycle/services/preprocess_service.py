import logging
from typing import Optional, Sequence

import numpy as np
from cachetools import LRUCache, cachedmethod
from cachetools.keys import hashkey

from ..biosignal.preprocess import PreprocessPipeline
from ..models import Record
from ..utils import samples_digest

logger = logging.getLogger(__name__)


def _record_key(self, record: Record):
    return hashkey(record.record_id, record.signal.fs, samples_digest(record.signal.samples))


class PreprocessService:
    def __init__(self, pipeline: PreprocessPipeline, cache_size: int = 4096):
        self.pipeline = pipeline
        self.cache = LRUCache(maxsize=cache_size)

    @cachedmethod(lambda self: self.cache, key=_record_key)
    def get_input(self, record: Record) -> np.ndarray:
        """
        :return: Flattened preprocessed input of a record. Cached by record id and sample digest, read-only
        """
        values = self.pipeline(record.signal)
        values.flags.writeable = False
        return values

    def get_inputs(self, records: Sequence[Record]) -> np.ndarray:
        if not records:
            return np.zeros((0, 0))
        return np.stack([self.get_input(record) for record in records])

    def input_dim(self, duration_s: float) -> int:
        return self.pipeline.input_dim(duration_s)

    def clear(self, maxsize: Optional[int] = None):
        self.cache = LRUCache(maxsize=maxsize or self.cache.maxsize)
