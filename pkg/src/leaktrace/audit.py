"""Lineage generation: walk the transfer chain of a leaked document.

The auditor starts at the owner and, hop by hop, asks the current suspect for
the keys, statement and unmarked version belonging to the leaked document.  It
follows the chain while the evidence points onward and stops (blaming the
current suspect) as soon as it does not.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from itertools import product
from typing import Protocol, Sequence

from .crypto import verify
from .document import Document, DocumentError, SplitGeometry, split
from .protocol import ChoiceProof, Party, PartyId, SignedStatement, Statement, Sigma
from .watermark import (
    DEFAULT_SETTINGS,
    PartBit,
    WatermarkDescriptor,
    WatermarkKey,
    WatermarkSettings,
    classify,
    correlation,
    embed,
    part_scores,
)


class AuditError(ValueError):
    pass


@dataclass(frozen=True)
class TolerancePolicy:
    """How many undetectable parts (and whether one wrong bit) a match may absorb."""

    max_missing_bits: int = 0
    allow_wrong_bits: bool = False

    def __post_init__(self):
        if self.max_missing_bits < 0:
            raise ValueError("max_missing_bits must be non-negative")

    def check(self, n: int) -> None:
        if n and self.max_missing_bits >= n:
            raise AuditError("tolerance must be smaller than the number of parts")

    def to_dict(self) -> dict:
        return {"max_missing_bits": self.max_missing_bits, "allow_wrong_bits": self.allow_wrong_bits}


STRICT = TolerancePolicy()


def _as_bit(outcome: PartBit | int | None) -> int | None:
    if isinstance(outcome, PartBit):
        return outcome.bit
    return outcome


def match_bits(claimed: Sequence[int], detected: Sequence[PartBit | int | None],
               policy: TolerancePolicy = STRICT) -> bool:
    """Does the claimed choice string agree with the per-part detections?

    Parts detected as NONE or BOTH are wildcards, at most ``max_missing_bits``
    of them.  A detected bit that contradicts the claim is fatal unless
    ``allow_wrong_bits``, which forgives exactly one such conflict.
    """
    if len(claimed) != len(detected):
        raise AuditError("bit strings differ in length")
    missing = wrong = 0
    for b, d in zip(claimed, detected):
        d = _as_bit(d)
        if d is None:
            missing += 1
        elif d != b:
            wrong += 1
    return missing <= policy.max_missing_bits and wrong <= (1 if policy.allow_wrong_bits else 0)


def accepted_claims(detected: Sequence[PartBit | int | None], policy: TolerancePolicy = STRICT) -> int:
    """Number of claim strings that ``match_bits`` accepts (brute force, small n only)."""
    n = len(detected)
    if n > 20:
        raise ValueError("enumeration limited to n <= 20")
    return sum(match_bits(c, detected, policy) for c in product((0, 1), repeat=n))


# --- suspect interface ----------------------------------------------------

@dataclass
class SuspectResponse:
    k1: WatermarkKey
    k2: WatermarkKey | None
    sigma: Sigma
    original: Document
    n: int = 0
    geometry: SplitGeometry | None = None


class Responder(Protocol):
    def identity(self, party_id: str) -> PartyId | None: ...

    def respond(self, suspect: str, views: Sequence[Document]) -> SuspectResponse | None: ...

    def prove_choice(self, recipient: str, sender: str, tau: int) -> list[ChoiceProof] | None: ...


class HonestResponder:
    """Answers the auditor on behalf of parties that keep and disclose their records."""

    def __init__(self, parties: Sequence[Party] | dict[str, Party],
                 settings: WatermarkSettings = DEFAULT_SETTINGS):
        self.parties = dict(parties) if isinstance(parties, dict) else {p.name: p for p in parties}
        self.settings = settings

    def identity(self, party_id: str) -> PartyId | None:
        p = self.parties.get(party_id)
        return p.ident if p else None

    def respond(self, suspect: str, views: Sequence[Document]) -> SuspectResponse | None:
        party = self.parties.get(suspect)
        if party is None or not party.sent:
            return None
        # Disclose the transfer whose statement the leaked document carries best.
        best, best_score = None, -float("inf")
        for rec in party.sent:
            for view in views:
                if view.shape != rec.original.shape:
                    continue
                c = correlation(view, WatermarkDescriptor(rec.sigma.payload(), rec.k1), rec.original,
                                self.settings.document)
                if c > best_score:
                    best, best_score = rec, c
        if best is None:
            best = party.sent[-1]
        return SuspectResponse(best.k1, best.k2, best.sigma, best.original, best.n, best.geometry)

    def prove_choice(self, recipient: str, sender: str, tau: int) -> list[ChoiceProof] | None:
        party = self.parties.get(recipient)
        if party is None:
            return None
        for rec in party.received:
            if rec.sender.id == sender and rec.tau == tau:
                return list(rec.proofs)
        return None


# --- lineage --------------------------------------------------------------

@dataclass
class HopEvidence:
    responded: bool = False
    sigma: str | None = None  # hex of the statement encoding
    sigma_score: float | None = None
    sigma_threshold: float | None = None
    sigma_detected: bool = False
    trusted_path: bool = False
    signature_valid: bool | None = None
    part_outcomes: list[str] | None = None
    part_scores: list[tuple[float, float]] | None = None
    part_threshold: float | None = None
    detected_bits: list[int | None] | None = None
    claimed_bits: list[int] | None = None
    proofs_valid: bool | None = None
    bits_match: bool | None = None
    view: str | None = None
    next_suspect: str | None = None
    stop_reason: str | None = None

    def to_dict(self) -> dict:
        return {k: v for k, v in self.__dict__.items() if v is not None}


@dataclass
class Lineage:
    entries: list[tuple[PartyId, HopEvidence]] = field(default_factory=list)
    policy: TolerancePolicy = STRICT
    composed: bool = False

    @property
    def parties(self) -> list[str]:
        return [p.id for p, _ in self.entries]

    @property
    def verdict(self) -> PartyId:
        return self.entries[-1][0]

    def to_dict(self) -> dict:
        return {
            "lineage": self.parties,
            "verdict": self.verdict.id,
            "policy": self.policy.to_dict(),
            "composed": self.composed,
            "entries": [{"party": p.id, "role": p.role.value, "evidence": ev.to_dict()}
                        for p, ev in self.entries],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _statement_of(sigma) -> Statement | None:
    if isinstance(sigma, SignedStatement):
        return sigma.statement
    if isinstance(sigma, Statement):
        return sigma
    return None


def _proofs_ok(proofs, n: int, tau: int, sender_vk: bytes) -> list[int] | None:
    if proofs is None or len(proofs) != n:
        return None
    bits = []
    for i, m in enumerate(proofs, start=1):
        if not isinstance(m, ChoiceProof) or m.tau != tau or m.index != i or m.bit not in (0, 1):
            return None
        if not verify(sender_vk, ChoiceProof.message(m.tau, m.index, m.bit), m.signature):
            return None
        bits.append(m.bit)
    return bits


def generate_lineage(leaked: Document | Sequence[Document], owner: PartyId | str, responder: Responder,
                     policy: TolerancePolicy = STRICT,
                     settings: WatermarkSettings = DEFAULT_SETTINGS) -> Lineage:
    """Run the auditor loop; the last entry of the result is blamed.

    ``leaked`` may be a list of views of the same leak (e.g. a component slice
    and the whole composed object); each hop uses the view whose size matches
    the unmarked version the suspect discloses.
    """
    views = [leaked] if isinstance(leaked, Document) else list(leaked)
    if not views:
        raise AuditError("no leaked document")
    lineage = Lineage(policy=policy, composed=len(views) > 1)
    suspect = responder.identity(owner) if isinstance(owner, str) else owner
    if suspect is None:
        raise AuditError("unknown owner")
    visited: set[tuple[str, str, int]] = set()

    while True:
        ev = HopEvidence()
        lineage.entries.append((suspect, ev))
        resp = responder.respond(suspect.id, views)
        if resp is None:
            ev.stop_reason = "no response"
            return lineage
        ev.responded = True
        st = _statement_of(resp.sigma)
        view = next((v for v in views if v.shape == resp.original.shape), None)
        if st is None or view is None:
            ev.stop_reason = "malformed response"
            return lineage
        ev.view = f"{view.width}x{view.height}"
        ev.sigma = st.encode().hex()

        cfg = settings.document
        try:
            score = correlation(view, WatermarkDescriptor(resp.sigma.payload(), resp.k1), resp.original, cfg)
        except (DocumentError, ValueError):
            ev.stop_reason = "malformed response"
            return lineage
        ev.sigma_score, ev.sigma_threshold = score, cfg.threshold
        ev.sigma_detected = score >= cfg.threshold
        if not ev.sigma_detected:
            ev.stop_reason = "statement not detected"
            return lineage

        if st.sender != suspect.id:
            ev.stop_reason = "statement names another sender"
            return lineage
        hop = (suspect.id, st.recipient, st.tau)
        if hop in visited:
            ev.stop_reason = "transfer already visited"
            return lineage
        visited.add(hop)
        recipient = responder.identity(st.recipient)
        if recipient is None:
            ev.stop_reason = "unknown recipient"
            return lineage

        if suspect.trusted:
            ev.trusted_path = True
            ev.next_suspect = recipient.id
            suspect = recipient
            continue

        if not isinstance(resp.sigma, SignedStatement) or not resp.sigma.verify(recipient.vk):
            ev.signature_valid = False
            ev.stop_reason = "bad statement signature"
            return lineage
        ev.signature_valid = True

        geom = resp.geometry
        if resp.k2 is None or geom is None or geom.n != resp.n or geom.n < 1 \
                or (geom.width, geom.height) != (view.width, view.height):
            ev.stop_reason = "malformed response"
            return lineage
        try:
            policy.check(geom.n)
        except AuditError:
            ev.stop_reason = "tolerance exceeds part count"
            return lineage
        marked = embed(resp.original, WatermarkDescriptor(resp.sigma.payload(), resp.k1), cfg)
        part_cfg = settings.part_config(geom.part_width, geom.part_height)
        scores = [part_scores(p, resp.k2, i, o, part_cfg)
                  for i, (p, o) in enumerate(zip(split(view, geom), split(marked, geom)), start=1)]
        outcomes = [classify(s, part_cfg.threshold) for s in scores]
        ev.part_scores = [(round(a, 4), round(b, 4)) for a, b in scores]
        ev.part_threshold = part_cfg.threshold
        ev.part_outcomes = [o.value for o in outcomes]
        ev.detected_bits = [o.bit for o in outcomes]
        missing = sum(o.bit is None for o in outcomes)
        if missing > policy.max_missing_bits:
            ev.stop_reason = "part bits not detected"
            return lineage

        proofs = responder.prove_choice(recipient.id, suspect.id, st.tau)
        claimed = _proofs_ok(proofs, geom.n, st.tau, suspect.vk)
        ev.proofs_valid = claimed is not None
        ev.claimed_bits = claimed
        if claimed is not None:
            ev.bits_match = match_bits(claimed, outcomes, policy)
        if claimed is None or ev.bits_match:
            ev.next_suspect = recipient.id
            suspect = recipient
            continue
        ev.stop_reason = "recipient's choice differs from the leaked version"
        return lineage


def audit_composed(composed: Document, region: tuple[int, int, int, int], owner: PartyId | str,
                   responder: Responder, policy: TolerancePolicy = STRICT,
                   settings: WatermarkSettings = DEFAULT_SETTINGS) -> Lineage:
    """Audit the component at ``region`` = (x, y, width, height) of a composed leak."""
    x, y, w, h = region
    if x < 0 or y < 0 or x + w > composed.width or y + h > composed.height:
        raise AuditError("component region outside the composed document")
    component = composed.crop(x, y, w, h)
    views = [component] if component.shape == composed.shape else [component, composed]
    return generate_lineage(views, owner, responder, policy, settings)
