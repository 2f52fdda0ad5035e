"""Counter-based random numbers (Philox4x32-10), vectorised with numpy.

Every draw is a pure function of ``(master_seed, path_index, step, sub, tag)``,
so a path's stream never depends on which other paths are simulated, in what
order, or on how many workers share the load.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = 0x9E3779B9
_W1 = 0xBB67AE85
_MASK32 = np.uint64(0xFFFFFFFF)
_SHIFT32 = np.uint64(32)

# stream tags, one per kind of randomness
TAG_INCREMENT = 1
TAG_BRIDGE = 2
TAG_JUMP = 3
TAG_P_INCREMENT = 4
TAG_VOL = 5
TAG_VOL_BRIDGE = 6
TAG_PERTURB = 7


def philox4x32(c0, c1, c2, c3, k0: int, k1: int, rounds: int = 10):
    """Philox4x32 block function on broadcastable arrays of 32-bit words.

    Returns four uint64 arrays holding 32-bit outputs.
    """
    c0, c1, c2, c3 = np.broadcast_arrays(
        *(np.asarray(c, dtype=np.uint64) & _MASK32 for c in (c0, c1, c2, c3))
    )
    k0 &= 0xFFFFFFFF
    k1 &= 0xFFFFFFFF
    for _ in range(rounds):
        p0 = _M0 * c0
        p1 = _M1 * c2
        c0, c1, c2, c3 = (
            (p1 >> _SHIFT32) ^ c1 ^ np.uint64(k0),
            p1 & _MASK32,
            (p0 >> _SHIFT32) ^ c3 ^ np.uint64(k1),
            p0 & _MASK32,
        )
        k0 = (k0 + _W0) & 0xFFFFFFFF
        k1 = (k1 + _W1) & 0xFFFFFFFF
    return c0, c1, c2, c3


def _to_unit(hi, lo):
    # 53-bit uniform on [0, 1)
    return ((hi >> np.uint64(5)) * np.uint64(67108864) + (lo >> np.uint64(6))) * (1.0 / 9007199254740992.0)


@dataclass(frozen=True)
class RngContract:
    """Random stream of one path, keyed by ``(master_seed, path_index)``."""

    master_seed: int
    path_index: int

    def grid_uniforms(self, n_steps: int, tag: int):
        """Per-step uniforms, identical to row ``path_index`` of ``CounterRNG.uniform_grid``."""
        return CounterRNG(self.master_seed).uniform_grid([self.path_index], n_steps, tag)[0]

    def grid_normals(self, n_steps: int, tag: int):
        return CounterRNG(self.master_seed).normal_grid([self.path_index], n_steps, tag)[0]


class CounterRNG:
    """Stateless generator: the same counters always give the same numbers."""

    def __init__(self, master_seed: int):
        seed = int(master_seed)
        if seed < 0 or seed >= 2**64:
            raise ValueError("master_seed must fit in 64 unsigned bits")
        self.master_seed = seed
        self._k0 = seed & 0xFFFFFFFF
        self._k1 = seed >> 32

    def _block(self, path, step, sub, tag):
        path = np.asarray(path, dtype=np.uint64)
        c3 = (np.uint64(tag) << np.uint64(16)) | ((path >> _SHIFT32) & np.uint64(0xFFFF))
        return philox4x32(path & _MASK32, step, sub, c3, self._k0, self._k1)

    def uniform_pair(self, path, step, sub=0, tag: int = 0):
        """Two independent uniforms on [0, 1) per counter."""
        w0, w1, w2, w3 = self._block(path, step, sub, tag)
        return _to_unit(w0, w1), _to_unit(w2, w3)

    def uniforms(self, path, step, sub=0, tag: int = 0):
        return self.uniform_pair(path, step, sub, tag)[0]

    def normal_pair(self, path, step, sub=0, tag: int = 0):
        """Two independent standard normals per counter (Box-Muller)."""
        u1, u2 = self.uniform_pair(path, step, sub, tag)
        r = np.sqrt(-2.0 * np.log1p(-u1))
        theta = 2.0 * np.pi * u2
        return r * np.cos(theta), r * np.sin(theta)

    def normals(self, path, step, sub=0, tag: int = 0):
        return self.normal_pair(path, step, sub, tag)[0]

    def exponentials(self, path, step, sub=0, tag: int = 0):
        return -np.log1p(-self.uniforms(path, step, sub, tag))

    def normal_grid(self, paths, n_steps: int, tag: int):
        """``len(paths) x n_steps`` normals; step ``k`` uses half of counter ``k // 2``."""
        paths = np.asarray(paths, dtype=np.uint64)[:, None]
        half = np.arange((n_steps + 1) // 2, dtype=np.uint64)[None, :]
        z1, z2 = self.normal_pair(paths, half, 0, tag)
        out = np.empty((paths.shape[0], 2 * half.shape[1]))
        out[:, 0::2] = z1
        out[:, 1::2] = z2
        return out[:, :n_steps]

    def uniform_grid(self, paths, n_steps: int, tag: int):
        paths = np.asarray(paths, dtype=np.uint64)[:, None]
        half = np.arange((n_steps + 1) // 2, dtype=np.uint64)[None, :]
        u1, u2 = self.uniform_pair(paths, half, 0, tag)
        out = np.empty((paths.shape[0], 2 * half.shape[1]))
        out[:, 0::2] = u1
        out[:, 1::2] = u2
        return out[:, :n_steps]
