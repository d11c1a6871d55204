"""SHA256 digests and secp256k1 ECDSA keys/signatures.

Signatures are 64-byte compact ``r || s`` with low-s normalisation, signed
deterministically (RFC 6979) so that seeded runs reproduce bit-for-bit.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from functools import lru_cache

import coincurve
from coincurve.ecdsa import cdata_to_der, deserialize_compact

DIGEST_SIZE = 32
PUBKEY_SIZE = 33
SIGNATURE_SIZE = 64
SEED_SIZE = 32

Digest = bytes
PublicKey = bytes
Signature = bytes
Account = bytes

# secp256k1 group order
CURVE_ORDER = 0xFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFEBAAEDCE6AF48A03BBFD25E8CD0364141


class InvalidSeed(ValueError):
    pass


def hash_bytes(data: bytes) -> Digest:
    return hashlib.sha256(data).digest()


@dataclass(frozen=True)
class KeyPair:
    public: PublicKey
    _secret: bytes = field(repr=False, compare=False)

    @property
    def account(self) -> Account:
        return account_of(self.public)


@lru_cache(maxsize=1 << 16)
def keygen(seed: bytes) -> KeyPair:
    """Derive a key pair from a 32-byte seed (the seed is the secret scalar)."""
    if len(seed) != SEED_SIZE:
        raise InvalidSeed(f"seed must be {SEED_SIZE} bytes, got {len(seed)}")
    scalar = int.from_bytes(seed, "big")
    if scalar == 0 or scalar >= CURVE_ORDER:
        raise InvalidSeed("seed is not a valid secp256k1 scalar")
    priv = coincurve.PrivateKey(seed)
    return KeyPair(public=priv.public_key.format(compressed=True), _secret=seed)


def seed_from(*parts: object) -> bytes:
    """Deterministic 32-byte seed from arbitrary labels (e.g. run seed, node id)."""
    return hash_bytes(repr(parts).encode())


def account_of(public: PublicKey) -> Account:
    return hash_bytes(public)


@lru_cache(maxsize=1 << 12)
def _private(secret: bytes) -> coincurve.PrivateKey:
    return coincurve.PrivateKey(secret)


def sign(keys: KeyPair, msg: bytes) -> Signature:
    return _private(keys._secret).sign_recoverable(msg)[:SIGNATURE_SIZE]


@lru_cache(maxsize=1 << 14)
def _public(public: PublicKey) -> coincurve.PublicKey | None:
    try:
        return coincurve.PublicKey(public)
    except (ValueError, TypeError):
        return None


@lru_cache(maxsize=1 << 18)
def verify(public: PublicKey, msg: bytes, sig: Signature) -> bool:
    # memoised: verification is a pure function and every simulated node
    # re-checks the same (key, message, signature) triples
    if len(sig) != SIGNATURE_SIZE or len(public) != PUBKEY_SIZE:
        return False
    pub = _public(public)
    if pub is None:
        return False
    try:
        der = cdata_to_der(deserialize_compact(sig))
    except ValueError:
        return False
    try:
        # libsecp256k1 rejects high-s signatures, so (r, n - s) does not verify
        return pub.verify(der, msg)
    except ValueError:
        return False
