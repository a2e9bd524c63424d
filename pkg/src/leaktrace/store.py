"""On-disk party state for the command-line tool.

Layout under the store root::

    parties.json                 id -> {"role", "vk"}   (the shared directory of identities)
    keys/<id>.sk                 LTSK signing-key record
    state/<id>/state.json        timestamps and transfer records (JSON)
    state/<id>/*.pgm, *.wk       documents and LTWK watermark-key records referenced from state.json
"""

from __future__ import annotations

import json
from pathlib import Path

from .crypto import (
    TAG_WM_KEY,
    Randomness,
    SYSTEM_RANDOM,
    SigningKeypair,
    decode_signing_key,
    encode_signing_key,
    pack_record,
    unpack_record,
)
from .document import Document, SplitGeometry, read_pgm, write_pgm
from .protocol import (
    ChoiceProof,
    Party,
    PartyId,
    RecipientRecord,
    Role,
    SenderRecord,
    decode_sigma,
)
from .watermark import WatermarkKey


class StoreError(ValueError):
    pass


class PartyStore:
    def __init__(self, root: str | Path):
        self.root = Path(root)

    @property
    def registry_path(self) -> Path:
        return self.root / "parties.json"

    def registry(self) -> dict[str, dict]:
        if not self.registry_path.exists():
            return {}
        return json.loads(self.registry_path.read_text())

    def create(self, name: str, role: Role | str, rng: Randomness = SYSTEM_RANDOM) -> Party:
        reg = self.registry()
        if name in reg:
            raise StoreError(f"party {name!r} already exists")
        party = Party(name, Role(role), rng)
        (self.root / "keys").mkdir(parents=True, exist_ok=True)
        (self.root / "keys" / f"{name}.sk").write_bytes(encode_signing_key(party.keypair))
        reg[name] = {"role": party.ident.role.value, "vk": party.ident.vk.hex()}
        self.registry_path.write_text(json.dumps(reg, indent=2))
        self.save(party)
        return party

    def load(self, name: str) -> Party:
        reg = self.registry()
        if name not in reg:
            raise StoreError(f"unknown party {name!r}; run keygen first")
        kp = decode_signing_key((self.root / "keys" / f"{name}.sk").read_bytes())
        party = Party(name, Role(reg[name]["role"]), keypair=kp)
        sdir = self.root / "state" / name
        path = sdir / "state.json"
        if path.exists():
            data = json.loads(path.read_text())
            party.last_tau = {k: int(v) for k, v in data["last_tau"].items()}
            party.sent = [self._sender_record(sdir, r) for r in data["sent"]]
            party.received = [self._recipient_record(sdir, r) for r in data["received"]]
            if data.get("holding"):
                party.holding = read_pgm(sdir / data["holding"])
        return party

    def load_all(self) -> dict[str, Party]:
        return {name: self.load(name) for name in self.registry()}

    def identity(self, name: str) -> PartyId:
        return self.load(name).ident

    def save(self, party: Party) -> None:
        sdir = self.root / "state" / party.name
        sdir.mkdir(parents=True, exist_ok=True)
        data = {"last_tau": party.last_tau, "sent": [], "received": [], "holding": None}
        for rec in party.sent:
            stem = f"sent-{rec.recipient.id}-{rec.tau}"
            write_pgm(rec.original, sdir / f"{stem}-original.pgm")
            _write_key(sdir / f"{stem}-k1.wk", rec.k1)
            entry = {"tau": rec.tau, "recipient": rec.recipient.to_dict(), "k1": f"{stem}-k1.wk",
                     "k2": None, "sigma": rec.sigma.payload().hex(), "n": rec.n,
                     "original": f"{stem}-original.pgm", "geometry": None}
            if rec.k2 is not None:
                _write_key(sdir / f"{stem}-k2.wk", rec.k2)
                entry["k2"] = f"{stem}-k2.wk"
            if rec.geometry is not None:
                g = rec.geometry
                entry["geometry"] = {"rows": g.rows, "cols": g.cols, "part_width": g.part_width,
                                     "part_height": g.part_height}
            data["sent"].append(entry)
        for rec in party.received:
            stem = f"received-{rec.sender.id}-{rec.tau}"
            write_pgm(rec.document, sdir / f"{stem}.pgm")
            data["received"].append({"tau": rec.tau, "sender": rec.sender.to_dict(), "bits": rec.bits,
                                     "proofs": [p.encode().hex() for p in rec.proofs],
                                     "document": f"{stem}.pgm"})
        if party.holding is not None:
            write_pgm(party.holding, sdir / "holding.pgm")
            data["holding"] = "holding.pgm"
        (sdir / "state.json").write_text(json.dumps(data, indent=2))

    @staticmethod
    def _sender_record(sdir: Path, r: dict) -> SenderRecord:
        g = r.get("geometry")
        return SenderRecord(
            tau=r["tau"],
            recipient=PartyId.from_dict(r["recipient"]),
            k1=_read_key(sdir / r["k1"]),
            k2=_read_key(sdir / r["k2"]) if r.get("k2") else None,
            sigma=decode_sigma(bytes.fromhex(r["sigma"])),
            n=r["n"],
            original=read_pgm(sdir / r["original"]),
            geometry=SplitGeometry(**g) if g else None,
        )

    @staticmethod
    def _recipient_record(sdir: Path, r: dict) -> RecipientRecord:
        return RecipientRecord(
            tau=r["tau"],
            sender=PartyId.from_dict(r["sender"]),
            bits=list(r["bits"]),
            proofs=[ChoiceProof.decode(bytes.fromhex(p)) for p in r["proofs"]],
            document=read_pgm(sdir / r["document"]),
        )


def _write_key(path: Path, key: WatermarkKey) -> None:
    path.write_bytes(pack_record(TAG_WM_KEY, key.secret))


def _read_key(path: Path) -> WatermarkKey:
    return WatermarkKey(unpack_record(path.read_bytes(), TAG_WM_KEY))


def load_keypair(path: str | Path) -> SigningKeypair:
    return decode_signing_key(Path(path).read_bytes())
