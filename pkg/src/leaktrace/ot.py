"""Naor-Pinkas 1-out-of-2 oblivious transfer.

Sender                                   Chooser
  C, r random; precompute g^r, C^r
  INIT{C}                  -------->
                                          k random; PK_s = g^k, PK_{1-s} = C / PK_s
                           <--------      CHOOSE{PK_0}
  PK_0^r, PK_1^r = C^r / PK_0^r
  E_j = H(PK_j^r) xor M_j
  PAYLOAD{g^r, E_0, E_1}   -------->
                                          M_s = E_s xor H((g^r)^k)

OT messages are 16-byte symmetric keys; ``ot_transport`` moves arbitrary
messages by encrypting both and obliviously transferring only the keys.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field
from typing import Sequence

from .crypto import (
    NONCE_BYTES,
    SYM_KEY_BYTES,
    SYSTEM_RANDOM,
    CryptoError,
    GroupParams,
    Randomness,
    SymKey,
    ro_hash,
    sym_decrypt,
    sym_encrypt,
    xor_bytes,
)
from .wire import Reader, WireError, lp

WIRE_VERSION = b"\x4f\x01"  # 'O', format 1


class OtError(ValueError):
    pass


class MsgType(enum.IntEnum):
    INIT = 1
    CHOOSE = 2
    PAYLOAD = 3


class Phase(enum.Enum):
    INITIALIZED = "initialized"
    TRANSFERRED = "transferred"


@dataclass
class OtSenderSession:
    params: GroupParams
    C: int
    r: int = field(repr=False)
    g_r: int
    C_r: int
    phase: Phase = Phase.INITIALIZED


@dataclass(frozen=True)
class OtChooserSession:
    params: GroupParams
    C: int
    sigma: int
    k: int = field(repr=False)
    PK_sigma: int
    PK_other: int

    @property
    def PK0(self) -> int:
        return self.PK_sigma if self.sigma == 0 else self.PK_other


@dataclass(frozen=True)
class OtPayload:
    g_r: int
    E0: bytes
    E1: bytes

    def __post_init__(self):
        if len(self.E0) != SYM_KEY_BYTES or len(self.E1) != SYM_KEY_BYTES:
            raise OtError("malformed payload")


def ot_init(params: GroupParams, rng: Randomness = SYSTEM_RANDOM) -> tuple[OtSenderSession, int]:
    # C = g^c with c discarded immediately: the chooser must not learn DLog(C)
    C = params.random_element(rng)
    r = params.random_scalar(rng)
    session = OtSenderSession(params, C, r, params.exp(params.g, r), params.exp(C, r))
    return session, C


def ot_choose(C: int, sigma: int, params: GroupParams,
              rng: Randomness = SYSTEM_RANDOM) -> tuple[OtChooserSession, int]:
    if sigma not in (0, 1):
        raise OtError("choice must be a bit")
    if not _plausible(params, C):
        raise OtError("invalid C")
    # g^k = C would make PK_{1-sigma} the identity, and g^{2k} = C would make
    # PK_0 = PK_1 so that k opens both slots.  Either sigma excludes the same
    # three values, so PK_0 stays uniform over the group minus {1, C, sqrt(C)}.
    while True:
        k = params.random_scalar(rng)
        pk_sigma = params.exp(params.g, k)
        if pk_sigma != C and params.mul(pk_sigma, pk_sigma) != C:
            break
    pk_other = params.div(C, pk_sigma)
    session = OtChooserSession(params, C, sigma, k, pk_sigma, pk_other)
    return session, session.PK0


def _plausible(params: GroupParams, x: int) -> bool:
    # Full subgroup membership is checked when decoding wire messages.
    return 1 < x < params.p


def _mask(params: GroupParams, element: int, message: bytes) -> bytes:
    return xor_bytes(ro_hash(params, element).key, message)


def ot_send(session: OtSenderSession, PK0: int, M0: bytes, M1: bytes) -> OtPayload:
    if session.phase is not Phase.INITIALIZED:
        raise OtError("session consumed")
    params = session.params
    if not _plausible(params, PK0) or PK0 == session.C or params.mul(PK0, PK0) == session.C:
        raise OtError("invalid PK0")
    if len(M0) != SYM_KEY_BYTES or len(M1) != SYM_KEY_BYTES:
        raise OtError("OT messages must be 16 bytes")
    session.phase = Phase.TRANSFERRED
    pk0_r = params.exp(PK0, session.r)
    pk1_r = params.div(session.C_r, pk0_r)
    return OtPayload(session.g_r, _mask(params, pk0_r, M0), _mask(params, pk1_r, M1))


def ot_receive(session: OtChooserSession, payload: OtPayload) -> bytes:
    params = session.params
    if not _plausible(params, payload.g_r):
        raise OtError("malformed payload")
    shared = params.exp(payload.g_r, session.k)
    return _mask(params, shared, payload.E1 if session.sigma else payload.E0)


# --- wire format ----------------------------------------------------------
# message := version (2) || type (1) || field*, each field u32-length-prefixed

def _frame(kind: MsgType, *fields: bytes) -> bytes:
    return WIRE_VERSION + struct.pack(">B", kind) + b"".join(lp(f) for f in fields)


def _unframe(data: bytes, kind: MsgType, count: int) -> list[bytes]:
    rd = Reader(data)
    try:
        if rd.take(2) != WIRE_VERSION or rd.u8() != kind:
            raise OtError(f"expected {kind.name} message")
        fields = [rd.lp() for _ in range(count)]
        rd.done()
    except WireError as exc:
        raise OtError(str(exc)) from exc
    return fields


def encode_init(params: GroupParams, C: int) -> bytes:
    return _frame(MsgType.INIT, params.encode(C))


def decode_init(params: GroupParams, data: bytes) -> int:
    (c,) = _unframe(data, MsgType.INIT, 1)
    return _decode_element(params, c)


def encode_choose(params: GroupParams, PK0: int) -> bytes:
    return _frame(MsgType.CHOOSE, params.encode(PK0))


def decode_choose(params: GroupParams, data: bytes) -> int:
    (pk0,) = _unframe(data, MsgType.CHOOSE, 1)
    return _decode_element(params, pk0)


def encode_payload(params: GroupParams, payload: OtPayload) -> bytes:
    return _frame(MsgType.PAYLOAD, params.encode(payload.g_r), payload.E0, payload.E1)


def decode_payload(params: GroupParams, data: bytes) -> OtPayload:
    g_r, e0, e1 = _unframe(data, MsgType.PAYLOAD, 3)
    return OtPayload(_decode_element(params, g_r), e0, e1)


def _decode_element(params: GroupParams, data: bytes) -> int:
    try:
        return params.decode(data)
    except CryptoError as exc:
        raise OtError(str(exc)) from exc


# --- batches --------------------------------------------------------------

@dataclass
class BatchTranscript:
    """Wire bytes exchanged by one batch, one entry per sub-session."""

    init: list[bytes] = field(default_factory=list)
    choose: list[bytes] = field(default_factory=list)
    payload: list[bytes] = field(default_factory=list)

    def size(self) -> int:
        return sum(len(m) for m in self.init + self.choose + self.payload)


class BatchSender:
    """Sender side of n independent OT sessions, each with fresh (C, r)."""

    def __init__(self, params: GroupParams, pairs: Sequence[tuple[SymKey, SymKey]],
                 rng: Randomness = SYSTEM_RANDOM):
        if not pairs:
            raise OtError("batch needs at least one transfer")
        self.params = params
        self.pairs = list(pairs)
        self.sessions = [ot_init(params, rng)[0] for _ in self.pairs]

    def init_messages(self) -> list[bytes]:
        return [encode_init(self.params, s.C) for s in self.sessions]

    def respond(self, choose_msgs: Sequence[bytes]) -> list[bytes]:
        if len(choose_msgs) != len(self.sessions):
            raise OtError("batch size mismatch")
        out = []
        for session, msg, (m0, m1) in zip(self.sessions, choose_msgs, self.pairs):
            pk0 = decode_choose(self.params, msg)
            out.append(encode_payload(self.params, ot_send(session, pk0, m0.key, m1.key)))
        return out


class BatchChooser:
    def __init__(self, params: GroupParams, bits: Sequence[int], rng: Randomness = SYSTEM_RANDOM):
        if not bits:
            raise OtError("batch needs at least one transfer")
        self.params = params
        self.bits = [int(b) for b in bits]
        self.rng = rng
        self.sessions: list[OtChooserSession] = []

    def choose(self, init_msgs: Sequence[bytes]) -> list[bytes]:
        if len(init_msgs) != len(self.bits):
            raise OtError("batch size mismatch")
        out = []
        for msg, bit in zip(init_msgs, self.bits):
            session, pk0 = ot_choose(decode_init(self.params, msg), bit, self.params, self.rng)
            self.sessions.append(session)
            out.append(encode_choose(self.params, pk0))
        return out

    def receive(self, payload_msgs: Sequence[bytes]) -> list[SymKey]:
        if len(payload_msgs) != len(self.sessions):
            raise OtError("batch size mismatch")
        return [SymKey(ot_receive(s, decode_payload(self.params, m)))
                for s, m in zip(self.sessions, payload_msgs)]


def ot_batch(params: GroupParams, pairs: Sequence[tuple[SymKey, SymKey]], bits: Sequence[int],
             rng: Randomness = SYSTEM_RANDOM, transcript: BatchTranscript | None = None) -> list[SymKey]:
    """Run len(pairs) independent OTs and return the chooser's keys."""
    if len(pairs) != len(bits):
        raise OtError("batch size mismatch")
    sender = BatchSender(params, pairs, rng)
    chooser = BatchChooser(params, bits, rng)
    init = sender.init_messages()
    choose = chooser.choose(init)
    payload = sender.respond(choose)
    if transcript is not None:
        transcript.init.extend(init)
        transcript.choose.extend(choose)
        transcript.payload.extend(payload)
    return chooser.receive(payload)


def ot_transport(params: GroupParams, messages: Sequence[tuple[bytes, bytes]], bits: Sequence[int],
                 rng: Randomness = SYSTEM_RANDOM,
                 transcript: BatchTranscript | None = None) -> list[bytes]:
    """Obliviously deliver one message of each pair, whatever its length."""
    if len(messages) != len(bits):
        raise OtError("batch size mismatch")
    keys = [(SymKey.generate(rng), SymKey.generate(rng)) for _ in messages]
    ciphertexts = [(sym_encrypt(m0, k0, rng), sym_encrypt(m1, k1, rng))
                   for (m0, m1), (k0, k1) in zip(messages, keys)]
    chosen = ot_batch(params, keys, bits, rng, transcript)
    out = []
    for (c0, c1), bit, key in zip(ciphertexts, bits, chosen):
        ct = c1 if bit else c0
        plain = sym_decrypt(ct, key)
        if len(plain) != len(ct) - NONCE_BYTES:
            raise OtError("decryption length mismatch")
        out.append(plain)
    return out
