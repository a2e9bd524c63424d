"""Cryptographic building blocks: prime-order groups, a random-oracle hash,
Ed25519 signatures and AES-128-CTR encryption.

Two groups are provided.  ``PRODUCTION`` is a Schnorr subgroup of order
q ~ 2^256 inside Z_p^* for a 3072-bit p (128-bit security).  ``TEST`` is the
order-101 subgroup of Z_607^*, small enough to enumerate every exponent; it is
only ever selected explicitly.
"""

from __future__ import annotations

import hashlib
import os
import secrets
import struct
from dataclasses import dataclass, field
from functools import cached_property
from typing import Protocol

import gmpy2
from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import Ed25519PrivateKey, Ed25519PublicKey
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes
from cryptography.hazmat.primitives.serialization import Encoding, NoEncryption, PrivateFormat, PublicFormat


class CryptoError(ValueError):
    pass


# --- randomness -----------------------------------------------------------

class Randomness(Protocol):
    def token_bytes(self, n: int) -> bytes: ...

    def randbelow(self, n: int) -> int: ...


class SystemRandomness:
    token_bytes = staticmethod(secrets.token_bytes)
    randbelow = staticmethod(secrets.randbelow)


class SeededRandomness:
    """Deterministic byte stream (SHAKE-256 in counter mode) for reproducible runs."""

    def __init__(self, seed: bytes | int | str):
        if isinstance(seed, int):
            seed = seed.to_bytes(max(1, (seed.bit_length() + 8) // 8), "big", signed=True)
        elif isinstance(seed, str):
            seed = seed.encode()
        self._seed = bytes(seed)
        self._counter = 0

    def token_bytes(self, n: int) -> bytes:
        block = hashlib.shake_256(self._seed + struct.pack(">Q", self._counter)).digest(n)
        self._counter += 1
        return block

    def randbelow(self, n: int) -> int:
        if n <= 0:
            raise ValueError("upper bound must be positive")
        nbytes = (n.bit_length() + 7) // 8 + 8
        # 64 spare bits make the modulo bias negligible
        return int.from_bytes(self.token_bytes(nbytes), "big") % n

    def child(self, label: str) -> "SeededRandomness":
        return SeededRandomness(hashlib.sha256(self._seed + b"/" + label.encode()).digest())


SYSTEM_RANDOM = SystemRandomness()


# --- groups ---------------------------------------------------------------

@dataclass(frozen=True)
class GroupParams:
    """Order-q subgroup of Z_p^*, generated by g."""

    p: int
    q: int
    g: int
    mode: str
    security_level: int

    @property
    def element_size(self) -> int:
        return (self.p.bit_length() + 7) // 8

    @property
    def identity(self) -> int:
        return 1

    def is_element(self, x: int) -> bool:
        return 0 < x < self.p and gmpy2.powmod(x, self.q, self.p) == 1

    def encode(self, x: int) -> bytes:
        return int(x).to_bytes(self.element_size, "big")

    def decode(self, data: bytes) -> int:
        if len(data) != self.element_size:
            raise CryptoError("invalid element encoding")
        x = int.from_bytes(data, "big")
        if not self.is_element(x):
            raise CryptoError("invalid element encoding")
        return x

    def exp(self, base: int, exponent: int) -> int:
        if base == self.g:
            return self.exp_g(exponent)
        return int(gmpy2.powmod(base, exponent % self.q, self.p))

    @cached_property
    def _g_table(self) -> list[list]:
        # row i holds g^(j * 16^i) for j = 0..15
        p, base, rows = gmpy2.mpz(self.p), gmpy2.mpz(self.g), []
        for _ in range((self.q.bit_length() + 3) // 4):
            row = [gmpy2.mpz(1)]
            for _ in range(15):
                row.append(row[-1] * base % p)
            rows.append(row)
            base = row[-1] * base % p
        return rows

    def exp_g(self, exponent: int) -> int:
        """Fixed-base g^exponent via a 4-bit window table."""
        e = exponent % self.q
        p, acc = gmpy2.mpz(self.p), gmpy2.mpz(1)
        for row in self._g_table:
            if e & 15:
                acc = acc * row[e & 15] % p
            e >>= 4
        return int(acc)

    def mul(self, a: int, b: int) -> int:
        return a * b % self.p

    def div(self, a: int, b: int) -> int:
        return a * int(gmpy2.invert(b, self.p)) % self.p

    def random_scalar(self, rng: Randomness = SYSTEM_RANDOM) -> int:
        """Uniform exponent in [1, q-1]."""
        return 1 + rng.randbelow(self.q - 1)

    def random_element(self, rng: Randomness = SYSTEM_RANDOM) -> int:
        return self.exp_g(self.random_scalar(rng))


PRODUCTION = GroupParams(
    p=int(
        "c263d9b60f34d70ed36ba6ec46f63f1ae22292354154c3ed4a63bbbce4107c6386fdd740c38edd43960ca973b6047fdd"
        "47e2d789f7db1e7d3c3f0dbd0b428ba97582317aa95931a1b5dbc2ee4adac4454dfa0478c7640af2fc4a1578b705f8cd"
        "9be654befe89f428a0fd0667734166575d38fcf6a002916464f19bdf1f0989035cab1f2a49352196870be974c83b2ea3"
        "50f3cb1afafb8226e8ca3581d318d2feead002a1ed0357f67dbf73e482b3f20ca8c41de565c2e9e0d2122d714e778339"
        "cdd050b71a183804a268782eaa7258940732fe2f15cc1b3d9028631fc99cef9145503fb87aa57e60ca4b8078e5140422"
        "f865fb9b08cd3fd166d4e5467c4774f3ee1cedab623966c73d678298a170ed94e16217855253763419b2585f30f22efa"
        "558fef56438ee284321833f359e294329c25d5568433c6a08c7174fddbcb0d7e8dcdf6daf34d339edfaf0eab547fd674"
        "e48b0d0cb869f2f99ea45a35b524a8cfd32182cd675380090121449d8a7680b8b16c7036adfb2272cbfb7816b95e0c73",
        16),
    q=0xae972fdf86ba1a737f252d23e6782690ded081e248a32d50c21bf4ad9aa1f8cb,
    g=int(
        "50634af25d4acaa2e13de8859aa581cdf5a7107811476faab4cf64de01862b7827b2fab468c73c02189b56bab675fc50"
        "d8ab46a39416c5d147d56c417d37f9997e18685709d8bd9e333b317ffd3ef3b0c7e927141392124d933ab530ad14264b"
        "e773603a30e6ab7b0f2dd81b9ee0b9c6263c9a2f80799771e1d1492c0429d3b0809be801a5740e255f4fab0f0ef252a3"
        "a6cb60cb0082f16df5d0d90d4ab2afd894d88ce5e7f123d87af07f5e7fb7e5f3ae5737e64bdb16262c75a1638ecd036d"
        "967e89f51c2dd22bf60e98dfb0f59642670ead72490d3b167a655686b2cf8c7f1553381302a333c2e6b443658287056f"
        "8ddf02d31e0f557c3f94f42a9960fe32c5d1e19e261865983113c98e8e9603baec29a2b6b196590c421148a24c84bdff"
        "7e890322c7c900ea5495d0951c3b39830fbecead123da17d06663b7d9f184e84e98e253d23676447310830601fb24b9e"
        "9aa1d0982f26a7b29a87f84db91870a8d3e3f4e0bc4bfb88e11ab95ab30f71e0508df4b59528a399c7022789ed3e0563",
        16),
    mode="production",
    security_level=128,
)

# 607 = 6 * 101 + 1; g = 2^6 mod 607 generates the order-101 subgroup
TEST = GroupParams(p=607, q=101, g=64, mode="test", security_level=6)

GROUP_MODE_ENV = "LIME_GROUP_MODE"


def group_for_mode(mode: str) -> GroupParams:
    if mode == "production":
        return PRODUCTION
    if mode == "test":
        return TEST
    raise ValueError(f"unknown group mode {mode!r}")


def group_from_env() -> GroupParams:
    return group_for_mode(os.environ.get(GROUP_MODE_ENV, "production"))


def group_exp(params: GroupParams, base: bytes | int, exponent: int) -> int:
    """base^exponent in the group; encoded bases are validated."""
    if isinstance(base, (bytes, bytearray)):
        base = params.decode(bytes(base))
    return params.exp(base, exponent)


# --- random oracle --------------------------------------------------------

SYM_KEY_BYTES = 16


@dataclass(frozen=True)
class SymKey:
    key: bytes = field(repr=False)

    def __post_init__(self):
        if len(self.key) != SYM_KEY_BYTES:
            raise CryptoError("symmetric keys are 16 bytes")

    @classmethod
    def generate(cls, rng: Randomness = SYSTEM_RANDOM) -> "SymKey":
        return cls(rng.token_bytes(SYM_KEY_BYTES))


def ro_hash(params: GroupParams, element: int) -> SymKey:
    digest = hashlib.sha256(b"leaktrace/ro\x00" + params.encode(element)).digest()
    return SymKey(digest[:SYM_KEY_BYTES])


def xor_bytes(a: bytes, b: bytes) -> bytes:
    if len(a) != len(b):
        raise CryptoError("length mismatch")
    return bytes(x ^ y for x, y in zip(a, b))


# --- signatures -----------------------------------------------------------

SIGNATURE_BYTES = 64
VERIFY_KEY_BYTES = 32


@dataclass(frozen=True)
class SigningKeypair:
    sk: Ed25519PrivateKey = field(repr=False)
    vk: bytes
    owner: str

    @classmethod
    def generate(cls, owner: str, rng: Randomness = SYSTEM_RANDOM) -> "SigningKeypair":
        sk = Ed25519PrivateKey.from_private_bytes(rng.token_bytes(32))
        return cls(sk, sk.public_key().public_bytes(Encoding.Raw, PublicFormat.Raw), owner)

    def secret_bytes(self) -> bytes:
        return self.sk.private_bytes(Encoding.Raw, PrivateFormat.Raw, NoEncryption())

    @classmethod
    def from_secret(cls, owner: str, secret: bytes) -> "SigningKeypair":
        sk = Ed25519PrivateKey.from_private_bytes(secret)
        return cls(sk, sk.public_key().public_bytes(Encoding.Raw, PublicFormat.Raw), owner)


def sign(sk: Ed25519PrivateKey | SigningKeypair, message: bytes) -> bytes:
    if isinstance(sk, SigningKeypair):
        sk = sk.sk
    return sk.sign(message)


def verify(vk: bytes, message: bytes, signature: bytes) -> bool:
    """True iff ``signature`` is valid; malformed keys or signatures give False."""
    if len(vk) != VERIFY_KEY_BYTES or len(signature) != SIGNATURE_BYTES:
        return False
    try:
        Ed25519PublicKey.from_public_bytes(vk).verify(signature, message)
    except (InvalidSignature, ValueError):
        return False
    return True


# --- symmetric encryption -------------------------------------------------

NONCE_BYTES = 16


def sym_encrypt(message: bytes, ek: SymKey, rng: Randomness = SYSTEM_RANDOM) -> bytes:
    """AES-128-CTR with a fresh random nonce prepended.  No integrity protection."""
    nonce = rng.token_bytes(NONCE_BYTES)
    enc = Cipher(algorithms.AES(ek.key), modes.CTR(nonce)).encryptor()
    return nonce + enc.update(message) + enc.finalize()


def sym_decrypt(ciphertext: bytes, ek: SymKey) -> bytes:
    if len(ciphertext) < NONCE_BYTES:
        raise CryptoError("truncated ciphertext")
    dec = Cipher(algorithms.AES(ek.key), modes.CTR(ciphertext[:NONCE_BYTES])).decryptor()
    return dec.update(ciphertext[NONCE_BYTES:]) + dec.finalize()


# --- key files ------------------------------------------------------------
# record := tag (4 bytes) || u32 big-endian body length || body

TAG_SIGNING_KEY = b"LTSK"
TAG_VERIFY_KEY = b"LTVK"
TAG_SIGNATURE = b"LTSG"
TAG_SYM_KEY = b"LTEK"
TAG_WM_KEY = b"LTWK"


def pack_record(tag: bytes, body: bytes) -> bytes:
    if len(tag) != 4:
        raise ValueError("format tags are 4 bytes")
    return tag + struct.pack(">I", len(body)) + body


def unpack_record(data: bytes, tag: bytes) -> bytes:
    if len(data) < 8 or data[:4] != tag:
        raise CryptoError(f"expected a {tag.decode()} record")
    (length,) = struct.unpack(">I", data[4:8])
    if len(data) != 8 + length:
        raise CryptoError("record length mismatch")
    return data[8:]


def encode_signing_key(kp: SigningKeypair) -> bytes:
    owner = kp.owner.encode()
    return pack_record(TAG_SIGNING_KEY, struct.pack(">H", len(owner)) + owner + kp.secret_bytes())


def decode_signing_key(data: bytes) -> SigningKeypair:
    body = unpack_record(data, TAG_SIGNING_KEY)
    (olen,) = struct.unpack(">H", body[:2])
    owner = body[2:2 + olen].decode()
    secret = body[2 + olen:]
    if len(secret) != 32:
        raise CryptoError("malformed signing key")
    return SigningKeypair.from_secret(owner, secret)
