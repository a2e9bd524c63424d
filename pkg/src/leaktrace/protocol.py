"""Accountable document transfer between two parties.

``trusted_transfer`` is the one-message protocol for owners: the sender
watermarks the document with the unsigned triple (sender, recipient, tau).

``untrusted_transfer`` runs the full exchange for senders the auditor does not
trust:

    R -> S   STATEMENT    sigma = [S, R, tau] signed by R
    S -> R   CIPHERTEXTS  c_{i,j} = enc(<D_{i,j}, m_{i,j}>, ek_{i,j}), slots (1,0),(1,1),(2,0)...
    S -> R   OT_INIT      one INIT per part
    R -> S   OT_CHOOSE    one CHOOSE per part, choice b_i
    S -> R   OT_PAYLOAD   one PAYLOAD per part, carrying ek_{i,0} / ek_{i,1}

where D' = W(D, sigma, k1), D_i are the tiles of D', D_{i,j} = W(D_i, j, k2)
and m_{i,j} = [tau, i, j] signed by S.  The recipient checks every m it
decrypts and aborts the whole transfer on any mismatch.
"""

from __future__ import annotations

import enum
import json
import struct
from contextlib import nullcontext
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .crypto import (
    SYSTEM_RANDOM,
    CryptoError,
    GroupParams,
    Randomness,
    SigningKeypair,
    SymKey,
    group_from_env,
    sign,
    sym_decrypt,
    sym_encrypt,
    verify,
)
from .document import Document, DocumentError, SplitGeometry, join, split
from .ot import BatchChooser, BatchSender, OtError
from .watermark import DEFAULT_SETTINGS, WatermarkDescriptor, WatermarkKey, WatermarkSettings, embed, wm_keygen
from .wire import Reader, WireError, lp, lp_str


class ProtocolAbort(RuntimeError):
    """A party refused to continue the transfer."""


class Role(str, enum.Enum):
    OWNER = "owner"
    CONSUMER = "consumer"


@dataclass(frozen=True)
class PartyId:
    id: str
    role: Role
    vk: bytes

    @property
    def trusted(self) -> bool:
        return self.role is Role.OWNER

    def to_dict(self) -> dict:
        return {"id": self.id, "role": self.role.value, "vk": self.vk.hex()}

    @classmethod
    def from_dict(cls, data: dict) -> "PartyId":
        return cls(data["id"], Role(data["role"]), bytes.fromhex(data["vk"]))


# --- statements and proofs ------------------------------------------------

TAG_TRIPLE = b"LTS1"
TAG_UNSIGNED = b"LTUS"
TAG_SIGNED = b"LTSS"
TAG_PROOF = b"LTCP"


@dataclass(frozen=True)
class Statement:
    """The triple (C_S, C_R, tau)."""

    sender: str
    recipient: str
    tau: int

    def encode(self) -> bytes:
        return TAG_TRIPLE + lp_str(self.sender) + lp_str(self.recipient) + struct.pack(">Q", self.tau)

    @classmethod
    def decode(cls, data: bytes) -> "Statement":
        rd = Reader(data)
        if rd.take(4) != TAG_TRIPLE:
            raise WireError("not a statement")
        out = cls(rd.lp_str(), rd.lp_str(), rd.u64())
        rd.done()
        return out

    @property
    def statement(self) -> "Statement":
        return self

    def payload(self) -> bytes:
        """Watermark payload for trusted transfers (no signature)."""
        return TAG_UNSIGNED + lp(self.encode())


@dataclass(frozen=True)
class SignedStatement:
    """sigma = [C_S, C_R, tau] signed by the recipient."""

    statement: Statement
    signature: bytes

    @property
    def sender(self) -> str:
        return self.statement.sender

    @property
    def recipient(self) -> str:
        return self.statement.recipient

    @property
    def tau(self) -> int:
        return self.statement.tau

    @classmethod
    def create(cls, keypair: SigningKeypair, sender: str, recipient: str, tau: int) -> "SignedStatement":
        st = Statement(sender, recipient, tau)
        return cls(st, sign(keypair, st.encode()))

    def verify(self, vk: bytes) -> bool:
        return verify(vk, self.statement.encode(), self.signature)

    def payload(self) -> bytes:
        return TAG_SIGNED + lp(self.statement.encode()) + lp(self.signature)


Sigma = Statement | SignedStatement


def decode_sigma(data: bytes) -> Sigma:
    rd = Reader(data)
    tag = rd.take(4)
    if tag == TAG_UNSIGNED:
        out = Statement.decode(rd.lp())
    elif tag == TAG_SIGNED:
        out = SignedStatement(Statement.decode(rd.lp()), rd.lp())
    else:
        raise WireError("unknown statement format")
    rd.done()
    return out


@dataclass(frozen=True)
class ChoiceProof:
    """m_{i,j} = [tau, i, j] signed by the sender; i is 1-based."""

    tau: int
    index: int
    bit: int
    signature: bytes

    @staticmethod
    def message(tau: int, index: int, bit: int) -> bytes:
        return TAG_PROOF + struct.pack(">QIB", tau, index, bit)

    @classmethod
    def create(cls, keypair: SigningKeypair, tau: int, index: int, bit: int) -> "ChoiceProof":
        return cls(tau, index, bit, sign(keypair, cls.message(tau, index, bit)))

    def verify(self, vk: bytes) -> bool:
        return self.bit in (0, 1) and verify(vk, self.message(self.tau, self.index, self.bit), self.signature)

    def encode(self) -> bytes:
        return self.message(self.tau, self.index, self.bit) + lp(self.signature)

    @classmethod
    def decode(cls, data: bytes) -> "ChoiceProof":
        rd = Reader(data)
        if rd.take(4) != TAG_PROOF:
            raise WireError("not a choice proof")
        tau, index, bit = rd.u64(), rd.u32(), rd.u8()
        sig = rd.lp()
        rd.done()
        return cls(tau, index, bit, sig)


# --- records --------------------------------------------------------------

@dataclass
class SenderRecord:
    """What a sender keeps so it can answer the auditor later."""

    tau: int
    recipient: PartyId
    k1: WatermarkKey
    k2: WatermarkKey | None
    sigma: Sigma
    n: int
    original: Document  # the version the sender itself held
    geometry: SplitGeometry | None


@dataclass
class RecipientRecord:
    tau: int
    sender: PartyId
    bits: list[int]
    proofs: list[ChoiceProof]
    document: Document


# --- transcript -----------------------------------------------------------

class Kind(str, enum.Enum):
    STATEMENT = "STATEMENT"
    CIPHERTEXTS = "CIPHERTEXTS"
    OT_INIT = "OT_INIT"
    OT_CHOOSE = "OT_CHOOSE"
    OT_PAYLOAD = "OT_PAYLOAD"
    DOCUMENT = "DOCUMENT"


UNTRUSTED_FLOW = (
    ("R->S", Kind.STATEMENT),
    ("S->R", Kind.CIPHERTEXTS),
    ("S->R", Kind.OT_INIT),
    ("R->S", Kind.OT_CHOOSE),
    ("S->R", Kind.OT_PAYLOAD),
)
TRUSTED_FLOW = (("S->R", Kind.DOCUMENT),)


@dataclass(frozen=True)
class WireMessage:
    direction: str
    kind: Kind
    body: bytes


@dataclass
class Transcript:
    sender: str
    recipient: str
    messages: list[WireMessage] = field(default_factory=list)

    def record(self, direction: str, kind: Kind, body: bytes) -> bytes:
        self.messages.append(WireMessage(direction, kind, body))
        return body

    def flow(self) -> list[tuple[str, Kind]]:
        return [(m.direction, m.kind) for m in self.messages]

    def save(self, path: str | Path) -> None:
        """Write ``path`` (JSON metadata) and ``<path>.d/`` holding one .bin per message."""
        path = Path(path)
        attach = path.with_name(path.name + ".d")
        attach.mkdir(parents=True, exist_ok=True)
        entries = []
        for seq, msg in enumerate(self.messages):
            name = f"{seq:03d}_{msg.kind.value.lower()}.bin"
            (attach / name).write_bytes(msg.body)
            entries.append({"seq": seq, "direction": msg.direction, "kind": msg.kind.value,
                            "attachment": name, "size": len(msg.body)})
        path.write_text(json.dumps({"sender": self.sender, "recipient": self.recipient,
                                    "messages": entries}, indent=2))

    @classmethod
    def load(cls, path: str | Path) -> "Transcript":
        path = Path(path)
        meta = json.loads(path.read_text())
        attach = path.with_name(path.name + ".d")
        out = cls(meta["sender"], meta["recipient"])
        for e in meta["messages"]:
            out.messages.append(WireMessage(e["direction"], Kind(e["kind"]), (attach / e["attachment"]).read_bytes()))
        return out


def _pack_list(items: Sequence[bytes]) -> bytes:
    return struct.pack(">I", len(items)) + b"".join(lp(x) for x in items)


def _unpack_list(data: bytes) -> list[bytes]:
    rd = Reader(data)
    items = [rd.lp() for _ in range(rd.u32())]
    rd.done()
    return items


# --- parties --------------------------------------------------------------

class _NullTimer:
    def phase(self, name: str):
        return nullcontext()


NULL_TIMER = _NullTimer()


class Party:
    """A protocol participant: keys, the document version it holds, and its records."""

    def __init__(self, name: str, role: Role | str = Role.CONSUMER, rng: Randomness = SYSTEM_RANDOM,
                 keypair: SigningKeypair | None = None):
        self.keypair = keypair or SigningKeypair.generate(name, rng)
        self.ident = PartyId(name, Role(role), self.keypair.vk)
        self.holding: Document | None = None
        self.sent: list[SenderRecord] = []
        self.received: list[RecipientRecord] = []
        self.last_tau: dict[str, int] = {}

    @property
    def name(self) -> str:
        return self.ident.id

    def __repr__(self):
        return f"Party({self.name!r}, {self.ident.role.value})"

    def next_tau(self, peer: str) -> int:
        return self.last_tau.get(peer, 0) + 1

    def accept_tau(self, peer: str, tau: int) -> None:
        if tau <= self.last_tau.get(peer, 0):
            raise ProtocolAbort("stale timestamp")
        self.last_tau[peer] = tau


@dataclass
class TransferResult:
    document: Document
    sender_record: SenderRecord
    recipient_record: RecipientRecord
    transcript: Transcript
    marked: Document | None = None  # D', known to the sender only
    versions: list[tuple[Document, Document]] | None = None  # (D_{i,0}, D_{i,1}), sender only


def trusted_transfer(sender: Party, recipient: Party, document: Document | None = None, tau: int | None = None,
                     settings: WatermarkSettings = DEFAULT_SETTINGS, rng: Randomness = SYSTEM_RANDOM,
                     timer=NULL_TIMER) -> TransferResult:
    """Owner-to-consumer transfer: embed the unsigned triple and hand over D_w."""
    if not sender.ident.trusted:
        raise ProtocolAbort("trusted transfer requires an owner as sender")
    doc = document if document is not None else sender.holding
    if doc is None:
        raise ProtocolAbort("sender holds no document")
    tau = sender.next_tau(recipient.name) if tau is None else tau
    sender.accept_tau(recipient.name, tau)
    k = wm_keygen(rng.token_bytes(32))
    sigma = Statement(sender.name, recipient.name, tau)
    with timer.phase("watermarking"):
        dw = embed(doc, WatermarkDescriptor(sigma.payload(), k), settings.document)
    transcript = Transcript(sender.name, recipient.name)
    body = transcript.record("S->R", Kind.DOCUMENT, lp(dw.to_pgm()))
    received = Document.from_pgm(Reader(body).lp())
    recipient.accept_tau(sender.name, tau)
    srec = SenderRecord(tau, recipient.ident, k, None, sigma, 0, doc, None)
    rrec = RecipientRecord(tau, sender.ident, [], [], received)
    sender.sent.append(srec)
    recipient.received.append(rrec)
    recipient.holding = received
    return TransferResult(received, srec, rrec, transcript, marked=dw)


@dataclass(frozen=True)
class SenderCheat:
    """Deviations a malicious sender can make while building the offers.

    ``version_swap``: for these parts slot (i, 1) carries D_{i,0} under the
    genuine m_{i,1}, so the sender knows which version the recipient holds.
    ``proof_swap``: for these parts m_{i,0} and m_{i,1} are exchanged.
    """

    version_swap: frozenset[int] = frozenset()
    proof_swap: frozenset[int] = frozenset()


class SenderSession:
    """Sender side of the untrusted-sender protocol."""

    def __init__(self, party: Party, recipient: PartyId, document: Document, parts: int | SplitGeometry,
                 params: GroupParams, settings: WatermarkSettings = DEFAULT_SETTINGS,
                 rng: Randomness = SYSTEM_RANDOM, cheat: SenderCheat | None = None, timer=NULL_TIMER):
        self.party = party
        self.recipient = recipient
        self.document = document
        self.geometry = (parts if isinstance(parts, SplitGeometry)
                         else SplitGeometry.square(document.width, document.height, parts))
        self.params = params
        self.settings = settings
        self.rng = rng
        self.cheat = cheat or SenderCheat()
        self.timer = timer
        self.state = "await-statement"

    def on_statement(self, body: bytes) -> bytes:
        if self.state != "await-statement":
            raise ProtocolAbort("unexpected statement")
        try:
            sigma = decode_sigma(body)
        except WireError as exc:
            raise ProtocolAbort("bad statement") from exc
        with self.timer.phase("signatures"):
            ok = isinstance(sigma, SignedStatement) and sigma.verify(self.recipient.vk)
        if not ok or sigma.sender != self.party.name or sigma.recipient != self.recipient.id:
            raise ProtocolAbort("bad statement")
        self.party.accept_tau(self.recipient.id, sigma.tau)
        self.sigma, self.tau = sigma, sigma.tau

        self.k1 = wm_keygen(self.rng.token_bytes(32))
        self.k2 = wm_keygen(self.rng.token_bytes(32))
        while self.k2 == self.k1:
            self.k2 = wm_keygen(self.rng.token_bytes(32))
        geom = self.geometry
        part_cfg = self.settings.part_config(geom.part_width, geom.part_height)
        with self.timer.phase("watermarking"):
            self.marked = embed(self.document, WatermarkDescriptor(sigma.payload(), self.k1), self.settings.document)
            tiles = split(self.marked, geom)
            self.versions = [tuple(embed(tile, WatermarkDescriptor.bit(j, self.k2, i), part_cfg) for j in (0, 1))
                             for i, tile in enumerate(tiles, start=1)]
        with self.timer.phase("signatures"):
            proofs = [tuple(ChoiceProof.create(self.party.keypair, self.tau, i, j) for j in (0, 1))
                      for i in range(1, geom.n + 1)]

        slots = []
        for i, ((d0, d1), (m0, m1)) in enumerate(zip(self.versions, proofs), start=1):
            if i in self.cheat.version_swap:
                d1 = d0
            if i in self.cheat.proof_swap:
                m0, m1 = m1, m0
            slots.extend([(d0, m0), (d1, m1)])

        with self.timer.phase("encryption"):
            self.keys = [(SymKey.generate(self.rng), SymKey.generate(self.rng)) for _ in range(geom.n)]
            flat_keys = [k for pair in self.keys for k in pair]
            cts = [sym_encrypt(lp(d.to_pgm()) + lp(m.encode()), ek, self.rng)
                   for (d, m), ek in zip(slots, flat_keys)]
        self.state = "offered"
        header = struct.pack(">HHII", geom.rows, geom.cols, geom.part_width, geom.part_height)
        return header + _pack_list(cts)

    def ot_init(self) -> bytes:
        if self.state != "offered":
            raise ProtocolAbort("ciphertexts not sent yet")
        with self.timer.phase("oblivious_transfer"):
            self._ot = BatchSender(self.params, self.keys, self.rng)
            msgs = self._ot.init_messages()
        self.state = "ot-started"
        return _pack_list(msgs)

    def on_choose(self, body: bytes) -> bytes:
        if self.state != "ot-started":
            raise ProtocolAbort("unexpected OT choice")
        try:
            with self.timer.phase("oblivious_transfer"):
                out = self._ot.respond(_unpack_list(body))
        except (OtError, WireError) as exc:
            raise ProtocolAbort(f"oblivious transfer failed: {exc}") from exc
        self.state = "done"
        return _pack_list(out)

    def record(self) -> SenderRecord:
        return SenderRecord(self.tau, self.recipient, self.k1, self.k2, self.sigma, self.geometry.n,
                            self.document, self.geometry)


class RecipientSession:
    """Recipient side: signs sigma, picks b, checks every decrypted choice proof."""

    def __init__(self, party: Party, sender: PartyId, n: int, params: GroupParams,
                 rng: Randomness = SYSTEM_RANDOM, bits: Sequence[int] | None = None,
                 tau: int | None = None, timer=NULL_TIMER):
        self.party = party
        self.sender = sender
        self.n = n
        self.params = params
        self.rng = rng
        self.bits = [int(b) for b in bits] if bits is not None else [rng.randbelow(2) for _ in range(n)]
        if len(self.bits) != n or any(b not in (0, 1) for b in self.bits):
            raise ValueError("choice string must hold n bits")
        self.tau = party.next_tau(sender.id) if tau is None else tau
        self.timer = timer
        self.state = "start"

    def start(self) -> bytes:
        with self.timer.phase("signatures"):
            self.sigma = SignedStatement.create(self.party.keypair, self.sender.id, self.party.name, self.tau)
        self.state = "await-ciphertexts"
        return self.sigma.payload()

    def on_ciphertexts(self, body: bytes) -> None:
        if self.state != "await-ciphertexts":
            raise ProtocolAbort("unexpected ciphertexts")
        try:
            rows, cols, pw, ph = struct.unpack(">HHII", body[:12])
            self.geometry = SplitGeometry(rows, cols, pw, ph)
            cts = _unpack_list(body[12:])
        except (struct.error, WireError, DocumentError) as exc:
            raise ProtocolAbort("malformed ciphertexts") from exc
        if self.geometry.n != self.n or len(cts) != 2 * self.n:
            raise ProtocolAbort("offer does not match the agreed number of parts")
        self.ciphertexts = [(cts[2 * i], cts[2 * i + 1]) for i in range(self.n)]
        self.state = "await-ot"

    def on_ot_init(self, body: bytes) -> bytes:
        if self.state != "await-ot":
            raise ProtocolAbort("unexpected OT init")
        try:
            with self.timer.phase("oblivious_transfer"):
                self._ot = BatchChooser(self.params, self.bits, self.rng)
                out = self._ot.choose(_unpack_list(body))
        except (OtError, WireError) as exc:
            raise ProtocolAbort(f"oblivious transfer failed: {exc}") from exc
        self.state = "await-payload"
        return _pack_list(out)

    def on_payload(self, body: bytes) -> Document:
        if self.state != "await-payload":
            raise ProtocolAbort("unexpected OT payload")
        try:
            with self.timer.phase("oblivious_transfer"):
                keys = self._ot.receive(_unpack_list(body))
        except (OtError, WireError) as exc:
            raise ProtocolAbort(f"oblivious transfer failed: {exc}") from exc
        parts, proofs = [], []
        for i, (key, (c0, c1), b) in enumerate(zip(keys, self.ciphertexts, self.bits), start=1):
            with self.timer.phase("encryption"):
                plain = sym_decrypt(c1 if b else c0, key)
            try:
                rd = Reader(plain)
                part = Document.from_pgm(rd.lp())
                proof = ChoiceProof.decode(rd.lp())
                rd.done()
            except (WireError, DocumentError, CryptoError) as exc:
                raise ProtocolAbort(f"decryption failed on slot {i}") from exc
            with self.timer.phase("signatures"):
                valid = proof.verify(self.sender.vk)
            if not valid or (proof.tau, proof.index, proof.bit) != (self.tau, i, b):
                raise ProtocolAbort(f"sender cheated on slot {i}")
            if (part.width, part.height) != (self.geometry.part_width, self.geometry.part_height):
                raise ProtocolAbort(f"sender cheated on slot {i}")
            parts.append(part)
            proofs.append(proof)
        self.document = join(parts, self.geometry)
        self.proofs = proofs
        self.party.accept_tau(self.sender.id, self.tau)
        self.state = "done"
        return self.document

    def record(self) -> RecipientRecord:
        return RecipientRecord(self.tau, self.sender, list(self.bits), list(self.proofs), self.document)


def untrusted_transfer(sender: Party, recipient: Party, parts: int | SplitGeometry,
                       document: Document | None = None, tau: int | None = None,
                       params: GroupParams | None = None, settings: WatermarkSettings = DEFAULT_SETTINGS,
                       rng: Randomness = SYSTEM_RANDOM, bits: Sequence[int] | None = None,
                       cheat: SenderCheat | None = None, timer=NULL_TIMER) -> TransferResult:
    """Run both roles of the untrusted-sender protocol over an in-memory link.

    Raises ProtocolAbort if either side rejects a message; nothing is recorded then.
    """
    params = params or group_from_env()
    doc = document if document is not None else sender.holding
    if doc is None:
        raise ProtocolAbort("sender holds no document")
    geometry = parts if isinstance(parts, SplitGeometry) else SplitGeometry.square(doc.width, doc.height, parts)
    s = SenderSession(sender, recipient.ident, doc, geometry, params, settings, rng, cheat, timer)
    r = RecipientSession(recipient, sender.ident, geometry.n, params, rng, bits, tau, timer)
    t = Transcript(sender.name, recipient.name)

    s_ct = s.on_statement(t.record("R->S", Kind.STATEMENT, r.start()))
    r.on_ciphertexts(t.record("S->R", Kind.CIPHERTEXTS, s_ct))
    choose = r.on_ot_init(t.record("S->R", Kind.OT_INIT, s.ot_init()))
    payload = s.on_choose(t.record("R->S", Kind.OT_CHOOSE, choose))
    received = r.on_payload(t.record("S->R", Kind.OT_PAYLOAD, payload))

    srec, rrec = s.record(), r.record()
    sender.sent.append(srec)
    recipient.received.append(rrec)
    recipient.holding = received
    return TransferResult(received, srec, rrec, t, marked=s.marked, versions=[tuple(v) for v in s.versions])


def assemble_leak(record: RecipientRecord) -> Document:
    """The version a recipient would publish: its D_w, verbatim."""
    return record.document
