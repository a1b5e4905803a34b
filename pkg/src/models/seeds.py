'''
Derived random streams.

Every stochastic step takes a base seed plus a structured counter, e.g.
(seed, 'crossfit', r) or (seed, teacher_index, b, 1). The counter is fed to
numpy's SeedSequence so child streams are independent of one another and of
the order in which parallel workers consume them.
'''

import zlib

import numpy as np


def _key_to_int(key) -> int:
    # String keys are hashed with CRC32 so the mapping is stable across runs
    if isinstance(key, str):
        return zlib.crc32(key.encode('utf-8'))
    return int(key)


def seed_sequence(seed: int, *path) -> np.random.SeedSequence:
    '''SeedSequence for the stream addressed by (seed, *path).'''
    return np.random.SeedSequence([_key_to_int(seed), *(_key_to_int(k) for k in path)])


def child_seed(seed: int, *path) -> int:
    '''
    Integer seed for the stream addressed by (seed, *path).

    Useful where a seed must be stored in a config object rather than
    passed around as a generator.
    '''
    return int(seed_sequence(seed, *path).generate_state(1, dtype=np.uint32)[0])


def rng_for(seed: int, *path) -> np.random.Generator:
    '''Generator for the stream addressed by (seed, *path).'''
    return np.random.default_rng(seed_sequence(seed, *path))
