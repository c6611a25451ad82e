"""Reed-Solomon (216, 200) codec over GF(2^8).

Conventions (fixed, needed for interoperable test vectors):

* field polynomial x^8 + x^4 + x^3 + x^2 + 1 (0x11D), primitive element alpha = 2
* generator g(x) = (x - alpha^1)(x - alpha^2)...(x - alpha^16)
* systematic codewords ``data || parity``; the first byte is the highest-degree
  coefficient.  Blocks shorter than 200 data bytes are shortened codes
  (implicit leading zeros).
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

PRIM_POLY = 0x11D
N_PARITY = 16
MAX_DATA = 200
T_CORRECT = N_PARITY // 2
FIRST_ROOT = 1


def _build_tables() -> tuple[np.ndarray, np.ndarray]:
    exp = np.zeros(512, dtype=np.int64)
    log = np.zeros(256, dtype=np.int64)
    x = 1
    for i in range(255):
        exp[i] = x
        log[x] = i
        x <<= 1
        if x & 0x100:
            x ^= PRIM_POLY
    exp[255:510] = exp[:255]
    return exp, log


EXP, LOG = _build_tables()
_EXP = EXP.tolist()
_LOG = LOG.tolist()


def gf_mul(a: int, b: int) -> int:
    if a == 0 or b == 0:
        return 0
    return _EXP[_LOG[a] + _LOG[b]]


def gf_div(a: int, b: int) -> int:
    if b == 0:
        raise ZeroDivisionError("division by zero in GF(2^8)")
    if a == 0:
        return 0
    return _EXP[(_LOG[a] - _LOG[b]) % 255]


def gf_pow(a: int, n: int) -> int:
    if a == 0:
        return 0
    return _EXP[(_LOG[a] * n) % 255]


# full multiplication table, used by the vectorised encoder
MUL = np.zeros((256, 256), dtype=np.uint8)
MUL[1:, 1:] = EXP[(LOG[1:, None] + LOG[None, 1:]) % 255]


def _poly_mul(p: list[int], q: list[int]) -> list[int]:
    out = [0] * (len(p) + len(q) - 1)
    for i, a in enumerate(p):
        for j, b in enumerate(q):
            out[i + j] ^= gf_mul(a, b)
    return out


def generator_poly(nsym: int = N_PARITY, fcr: int = FIRST_ROOT) -> list[int]:
    """Coefficients of g(x), highest degree first."""
    g = [1]
    for i in range(nsym):
        g = _poly_mul(g, [1, gf_pow(2, i + fcr)])
    return g


GENERATOR = generator_poly()


def _parity_basis() -> np.ndarray:
    # row i: parity of the 200-byte message with a single 1 at position i
    basis = np.zeros((MAX_DATA, N_PARITY), dtype=np.uint8)
    gen = GENERATOR
    for i in range(MAX_DATA):
        msg = [0] * (MAX_DATA + N_PARITY)
        msg[i] = 1
        # long division by the monic generator
        for k in range(MAX_DATA):
            coef = msg[k]
            if coef:
                for j in range(1, len(gen)):
                    msg[k + j] ^= gf_mul(gen[j], coef)
        basis[i] = msg[MAX_DATA:]
    return basis


_BASIS = _parity_basis()


class Outcome(enum.Enum):
    CLEAN = "clean"
    CORRECTED = "corrected"
    UNCORRECTABLE = "uncorrectable"


@dataclass(frozen=True)
class RsBlock:
    data: bytes
    parity: bytes

    def __post_init__(self):
        if len(self.parity) != N_PARITY:
            raise ValueError(f"parity must be {N_PARITY} bytes, got {len(self.parity)}")
        if not 1 <= len(self.data) <= MAX_DATA:
            raise ValueError(f"block data must be 1..{MAX_DATA} bytes, got {len(self.data)}")

    def to_bytes(self) -> bytes:
        return self.data + self.parity


@dataclass(frozen=True)
class Decoded:
    outcome: Outcome
    data: bytes | None
    n_errors: int = 0

    @property
    def ok(self) -> bool:
        return self.outcome is not Outcome.UNCORRECTABLE


def rs_parity(data) -> np.ndarray:
    """Parity bytes for ``data`` (1..200 bytes) as a uint8 array."""
    d = np.frombuffer(bytes(data), dtype=np.uint8)
    k = d.size
    rows = _BASIS[MAX_DATA - k:]
    return np.bitwise_xor.reduce(MUL[d[:, None], rows], axis=0)


def rs_encode_block(data: bytes) -> RsBlock:
    """Systematically encode 1..200 data bytes into an :class:`RsBlock`."""
    data = bytes(data)
    if not 1 <= len(data) <= MAX_DATA:
        raise ValueError(f"RS block data must be 1..{MAX_DATA} bytes, got {len(data)}")
    return RsBlock(data, rs_parity(data).tobytes())


def syndromes(codeword) -> list[int]:
    """S_j = c(alpha^(j + fcr)) for j = 0..15."""
    c = np.frombuffer(bytes(codeword), dtype=np.uint8).astype(np.int64)
    n = c.size
    nz = c != 0
    if not nz.any():
        return [0] * N_PARITY
    powers = (n - 1 - np.arange(n))[nz]
    logs = LOG[c[nz]]
    j = np.arange(FIRST_ROOT, FIRST_ROOT + N_PARITY)[:, None]
    terms = EXP[(logs[None, :] + j * powers[None, :]) % 255]
    return np.bitwise_xor.reduce(terms, axis=1).tolist()


def _berlekamp_massey(synd: list[int]) -> list[int]:
    # error locator, lowest degree first: Lambda(x) = 1 + l1 x + ...
    lam = [1]
    prev = [1]
    L = 0
    m = 1
    b = 1
    for n, s in enumerate(synd):
        d = s
        for i in range(1, L + 1):
            if i < len(lam):
                d ^= gf_mul(lam[i], synd[n - i])
        if d == 0:
            m += 1
            continue
        coef = gf_div(d, b)
        shifted = [0] * m + [gf_mul(coef, p) for p in prev]
        new = [
            (lam[i] if i < len(lam) else 0) ^ (shifted[i] if i < len(shifted) else 0)
            for i in range(max(len(lam), len(shifted)))
        ]
        if 2 * L <= n:
            prev = lam
            L = n + 1 - L
            b = d
            m = 1
        else:
            m += 1
        lam = new
    while len(lam) > 1 and lam[-1] == 0:
        lam.pop()
    return lam


def _poly_eval_low(p: list[int], x: int) -> int:
    # p lowest degree first
    y = 0
    for coef in reversed(p):
        y = gf_mul(y, x) ^ coef
    return y


def _chien(lam: list[int], n: int) -> np.ndarray:
    """Codeword powers e in [0, n) with Lambda(alpha^-e) == 0."""
    e = np.arange(n)
    acc = np.zeros(n, dtype=np.int64)
    for k, coef in enumerate(lam):
        if coef:
            acc ^= EXP[(LOG[coef] - k * e) % 255]
    return e[acc == 0]


def rs_decode_block(codeword) -> Decoded:
    """Decode one data||parity codeword.

    Returns one of three outcomes; an uncorrectable word is a value, not an
    exception.  Raises ``ValueError`` for lengths outside 17..216.
    """
    cw = bytes(codeword)
    n = len(cw)
    if not N_PARITY + 1 <= n <= MAX_DATA + N_PARITY:
        raise ValueError(f"codeword must be {N_PARITY + 1}..{MAX_DATA + N_PARITY} bytes, got {n}")
    k = n - N_PARITY
    synd = syndromes(cw)
    if not any(synd):
        return Decoded(Outcome.CLEAN, cw[:k], 0)

    lam = _berlekamp_massey(synd)
    n_err = len(lam) - 1
    if n_err > T_CORRECT:
        return Decoded(Outcome.UNCORRECTABLE, None)
    roots = _chien(lam, n)
    if roots.size != n_err:
        return Decoded(Outcome.UNCORRECTABLE, None)

    # Omega(x) = S(x) Lambda(x) mod x^16, lowest degree first
    omega = [0] * N_PARITY
    for i, s in enumerate(synd):
        if s:
            for j, l in enumerate(lam):
                if i + j < N_PARITY:
                    omega[i + j] ^= gf_mul(s, l)
    # formal derivative: odd-degree terms survive in characteristic 2
    dlam = [lam[i] if i % 2 == 1 else 0 for i in range(1, len(lam))]

    fixed = bytearray(cw)
    for e in roots.tolist():
        x_inv = gf_pow(2, (255 - e) % 255)
        denom = _poly_eval_low(dlam, x_inv)
        if denom == 0:
            return Decoded(Outcome.UNCORRECTABLE, None)
        mag = gf_div(_poly_eval_low(omega, x_inv), denom)
        mag = gf_mul(mag, gf_pow(2, e * (1 - FIRST_ROOT)))
        fixed[n - 1 - e] ^= mag
    if any(syndromes(fixed)):
        return Decoded(Outcome.UNCORRECTABLE, None)
    return Decoded(Outcome.CORRECTED, bytes(fixed[:k]), n_err)
