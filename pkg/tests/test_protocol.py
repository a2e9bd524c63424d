import numpy as np
import pytest

from leaktrace.crypto import TEST, SeededRandomness
from leaktrace.document import random_document, split
from leaktrace.protocol import (
    UNTRUSTED_FLOW,
    TRUSTED_FLOW,
    ChoiceProof,
    Party,
    ProtocolAbort,
    RecipientSession,
    Role,
    SenderCheat,
    SenderSession,
    SignedStatement,
    Statement,
    Transcript,
    assemble_leak,
    decode_sigma,
    trusted_transfer,
    untrusted_transfer,
)
from leaktrace.watermark import DEFAULT_SETTINGS, PartBit, WatermarkDescriptor, classify, detect, part_scores


@pytest.fixture
def doc128():
    return random_document(np.random.default_rng(21), 128, 128)


@pytest.fixture
def trio():
    rand = SeededRandomness(b"protocol-tests")
    return (rand, Party("owner", Role.OWNER, rand.child("o")), Party("S", Role.CONSUMER, rand.child("s")),
            Party("R", Role.CONSUMER, rand.child("r")))


def test_statement_encoding_frozen():
    st = Statement("A", "B", 5)
    assert st.encode() == b"LTS1" + b"\x00\x00\x00\x01A" + b"\x00\x00\x00\x01B" + (5).to_bytes(8, "big")
    assert Statement.decode(st.encode()) == st
    assert st.payload()[:4] == b"LTUS" and decode_sigma(st.payload()) == st
    assert ChoiceProof.message(5, 3, 1) == b"LTCP" + bytes([0] * 7 + [5, 0, 0, 0, 3, 1])


def test_signed_statement_roundtrip(trio):
    _, _, s, r = trio
    sig = SignedStatement.create(r.keypair, "S", "R", 9)
    assert sig.verify(r.ident.vk) and not sig.verify(s.ident.vk)
    assert decode_sigma(sig.payload()) == sig
    forged = SignedStatement(Statement("S", "R", 10), sig.signature)
    assert not forged.verify(r.ident.vk)


def test_choice_proof_roundtrip(trio):
    _, _, s, _ = trio
    p = ChoiceProof.create(s.keypair, 4, 2, 0)
    assert ChoiceProof.decode(p.encode()) == p and p.verify(s.ident.vk)
    assert not ChoiceProof(4, 2, 1, p.signature).verify(s.ident.vk)


def test_trusted_transfer(trio, doc128):
    rand, owner, s, _ = trio
    res = trusted_transfer(owner, s, doc128, rng=rand.child("t"))
    assert res.transcript.flow() == list(TRUSTED_FLOW)
    rec = res.sender_record
    assert isinstance(rec.sigma, Statement) and rec.sigma == Statement("owner", "S", 1)
    assert detect(res.document, WatermarkDescriptor(rec.sigma.payload(), rec.k1), doc128, DEFAULT_SETTINGS.document)
    assert s.holding is res.document and s.received[-1].tau == 1
    res2 = trusted_transfer(owner, s, doc128, rng=rand.child("t2"))
    assert res2.sender_record.tau == 2


def test_trusted_transfer_requires_owner(trio, doc128):
    rand, _, s, r = trio
    with pytest.raises(ProtocolAbort, match="requires an owner"):
        trusted_transfer(s, r, doc128, rng=rand)


def test_untrusted_transfer_honest(trio, doc128):
    rand, _, s, r = trio
    bits = [0, 1] * 8
    res = untrusted_transfer(s, r, 16, document=doc128, params=TEST, rng=rand.child("u"), bits=bits)
    assert res.transcript.flow() == list(UNTRUSTED_FLOW)
    srec, rrec = res.sender_record, res.recipient_record
    assert rrec.bits == bits and srec.n == 16 and srec.k1 != srec.k2
    assert srec.sigma.verify(r.ident.vk) and srec.sigma.statement == Statement("S", "R", 1)
    assert detect(res.document, WatermarkDescriptor(srec.sigma.payload(), srec.k1), doc128, DEFAULT_SETTINGS.document)
    cfg = DEFAULT_SETTINGS.part_config(32, 32)
    got = [classify(part_scores(p, srec.k2, i, o, cfg), cfg.threshold)
           for i, (p, o) in enumerate(zip(split(res.document, srec.geometry), split(res.marked, srec.geometry)), 1)]
    assert [g.bit for g in got] == bits
    assert all(p.verify(s.ident.vk) and p.bit == b for p, b in zip(rrec.proofs, bits))
    assert assemble_leak(rrec) is res.document


def test_transcript_save_load(trio, doc128, tmp_path):
    rand, _, s, r = trio
    res = untrusted_transfer(s, r, 4, document=doc128, params=TEST, rng=rand.child("u"))
    res.transcript.save(tmp_path / "t.json")
    back = Transcript.load(tmp_path / "t.json")
    assert back == res.transcript
    assert sorted(p.name for p in (tmp_path / "t.json.d").iterdir())[0] == "000_statement.bin"


def test_proof_swap_aborts(trio, doc128):
    rand, _, s, r = trio
    with pytest.raises(ProtocolAbort, match="sender cheated on slot 3"):
        untrusted_transfer(s, r, 4, document=doc128, params=TEST, rng=rand, bits=[0, 0, 1, 0],
                           cheat=SenderCheat(proof_swap=frozenset({3})))
    assert s.sent == [] and r.received == []


def test_version_swap_is_not_visible_to_recipient(trio, doc128):
    rand, _, s, r = trio
    res = untrusted_transfer(s, r, 4, document=doc128, params=TEST, rng=rand, bits=[1, 1, 1, 1],
                             cheat=SenderCheat(version_swap=frozenset({1, 2, 3, 4})))
    geom = res.sender_record.geometry
    assert all(np.array_equal(p.pixels, v[0].pixels) for p, v in zip(split(res.document, geom), res.versions))


def test_bad_statement_signature_aborts(trio, doc128):
    rand, _, s, r = trio
    sess = SenderSession(s, r.ident, doc128, 4, TEST, rng=rand)
    imposter = SignedStatement.create(s.keypair, "S", "R", 1)  # signed by the wrong key
    with pytest.raises(ProtocolAbort, match="bad statement"):
        sess.on_statement(imposter.payload())
    sess = SenderSession(s, r.ident, doc128, 4, TEST, rng=rand)
    with pytest.raises(ProtocolAbort, match="bad statement"):
        sess.on_statement(Statement("S", "R", 1).payload())
    sess = SenderSession(s, r.ident, doc128, 4, TEST, rng=rand)
    with pytest.raises(ProtocolAbort, match="bad statement"):
        sess.on_statement(SignedStatement.create(r.keypair, "X", "R", 1).payload())


def test_stale_timestamp_aborts(trio, doc128):
    rand, _, s, r = trio
    untrusted_transfer(s, r, 4, document=doc128, params=TEST, rng=rand)
    with pytest.raises(ProtocolAbort, match="stale timestamp"):
        untrusted_transfer(s, r, 4, document=doc128, params=TEST, rng=rand, tau=1)
    res = untrusted_transfer(s, r, 4, document=doc128, params=TEST, rng=rand)
    assert res.sender_record.tau == 2


def test_out_of_order_messages(trio, doc128):
    rand, _, s, r = trio
    sess = SenderSession(s, r.ident, doc128, 4, TEST, rng=rand)
    with pytest.raises(ProtocolAbort):
        sess.ot_init()
    rs = RecipientSession(r, s.ident, 4, TEST, rng=rand)
    with pytest.raises(ProtocolAbort):
        rs.on_payload(b"")
    with pytest.raises(ValueError):
        RecipientSession(r, s.ident, 4, TEST, bits=[0, 2, 0, 0])


def test_part_count_mismatch_aborts(trio, doc128):
    rand, _, s, r = trio
    sess = SenderSession(s, r.ident, doc128, 16, TEST, rng=rand)
    rs = RecipientSession(r, s.ident, 4, TEST, rng=rand)
    with pytest.raises(ProtocolAbort, match="agreed number of parts"):
        rs.on_ciphertexts(sess.on_statement(rs.start()))


def test_part_bit_outcomes_are_both_none_zero_one():
    assert {b.value for b in PartBit} == {"zero", "one", "none", "both"}
