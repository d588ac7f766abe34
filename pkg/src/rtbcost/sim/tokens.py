"""Keyed 28-byte price sealing in the style of exchange winning-price encryption.

Layout: ``iv (16) | price_micros XOR pad (8) | signature (4)``, where
``pad = HMAC-SHA1(e_key, iv)[:8]`` and ``signature = HMAC-SHA1(i_key,
price_bytes || iv)[:4]``. Rendered as unpadded base64url (38 characters).
"""

from __future__ import annotations

import base64
import hashlib
import hmac
import struct
from dataclasses import dataclass
from decimal import Decimal

from ..costs import to_micros

TOKEN_BYTES = 28
TOKEN_CHARS = 38


class BadToken(ValueError):
    pass


@dataclass(frozen=True)
class PriceKey:
    e_key: bytes
    i_key: bytes

    @classmethod
    def from_seed(cls, seed: int) -> PriceKey:
        root = hashlib.sha256(f"rtbcost-sim-key:{seed}".encode()).digest()
        return cls(hashlib.sha256(root + b"e").digest(), hashlib.sha256(root + b"i").digest())


def _iv(key: PriceKey, nonce: int) -> bytes:
    return hmac.new(key.i_key, b"iv" + struct.pack(">Q", nonce), hashlib.sha256).digest()[:16]


def encode_price(cpm: float | Decimal | str, key: PriceKey, nonce: int = 0) -> str:
    """Seal ``cpm`` (quantized to micro-CPM). ``nonce`` makes repeated prices
    yield distinct tokens."""
    micros = to_micros(cpm)
    if micros < 0:
        raise ValueError("price must be non-negative")
    iv = _iv(key, nonce)
    price_bytes = struct.pack(">Q", micros)
    pad = hmac.new(key.e_key, iv, hashlib.sha1).digest()[:8]
    enc = bytes(a ^ b for a, b in zip(price_bytes, pad))
    sig = hmac.new(key.i_key, price_bytes + iv, hashlib.sha1).digest()[:4]
    return base64.urlsafe_b64encode(iv + enc + sig).rstrip(b"=").decode()


def unseal_micros(token: str, key: PriceKey) -> int:
    if len(token) != TOKEN_CHARS:
        raise BadToken("wrong token length")
    try:
        raw = base64.urlsafe_b64decode(token + "==")
    except (ValueError, TypeError):
        raise BadToken("token is not base64url") from None
    if len(raw) != TOKEN_BYTES:
        raise BadToken("wrong token length")
    iv, enc, sig = raw[:16], raw[16:24], raw[24:]
    pad = hmac.new(key.e_key, iv, hashlib.sha1).digest()[:8]
    price_bytes = bytes(a ^ b for a, b in zip(enc, pad))
    if not hmac.compare_digest(sig, hmac.new(key.i_key, price_bytes + iv, hashlib.sha1).digest()[:4]):
        raise BadToken("signature mismatch")
    return struct.unpack(">Q", price_bytes)[0]


def unseal(token: str, key: PriceKey) -> float:
    return unseal_micros(token, key) / 1_000_000
