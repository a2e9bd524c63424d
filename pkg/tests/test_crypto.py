import hashlib

import gmpy2
import pytest

from leaktrace.crypto import (
    PRODUCTION,
    TEST,
    CryptoError,
    SeededRandomness,
    SigningKeypair,
    SymKey,
    decode_signing_key,
    encode_signing_key,
    group_exp,
    group_for_mode,
    pack_record,
    ro_hash,
    sign,
    sym_decrypt,
    sym_encrypt,
    unpack_record,
    verify,
)


def test_test_group_parameters():
    p, q, g = TEST.p, TEST.q, TEST.g
    assert (p, q, g) == (607, 101, 64)
    assert gmpy2.is_prime(p) and gmpy2.is_prime(q) and (p - 1) % q == 0
    assert q <= 2 ** 16


def test_production_group_parameters():
    p, q, g = PRODUCTION.p, PRODUCTION.q, PRODUCTION.g
    assert p.bit_length() == 3072 and q.bit_length() == 256
    assert gmpy2.is_prime(p, 40) and gmpy2.is_prime(q, 40) and (p - 1) % q == 0
    assert g != 1 and pow(g, q, p) == 1
    assert PRODUCTION.security_level >= 128 and PRODUCTION.element_size == 384
    assert group_for_mode("production") is PRODUCTION and group_for_mode("test") is TEST
    with pytest.raises(ValueError):
        group_for_mode("weak")


def test_exp_table_matches_repeated_multiplication():
    # brute-force oracle over every exponent of the small group
    acc = 1
    for x in range(TEST.q):
        assert group_exp(TEST, TEST.g, x) == acc
        acc = acc * TEST.g % TEST.p
    assert acc == 1  # g has order exactly q
    assert len({group_exp(TEST, TEST.g, x) for x in range(TEST.q)}) == TEST.q


def test_group_law(srng):
    for params in (TEST, PRODUCTION):
        assert params.exp(params.g, 0) == params.identity
        for _ in range(20):
            a, b = params.random_scalar(srng), params.random_scalar(srng)
            lhs = params.mul(params.exp(params.g, a), params.exp(params.g, b))
            assert lhs == params.exp(params.g, (a + b) % params.q)
            assert params.exp_g(a) == pow(params.g, a, params.p)


def test_group_exp_validates_encoding():
    good = TEST.encode(TEST.g)
    assert group_exp(TEST, good, 2) == TEST.g ** 2 % TEST.p
    with pytest.raises(CryptoError):
        group_exp(TEST, TEST.encode(2), 1)  # 2 is not in the order-101 subgroup
    with pytest.raises(CryptoError):
        group_exp(TEST, b"\x00" * 5, 1)
    with pytest.raises(CryptoError):
        TEST.decode(TEST.encode(0))


def test_encoding_is_fixed_length():
    assert len(TEST.encode(1)) == len(TEST.encode(606)) == TEST.element_size
    assert TEST.decode(TEST.encode(TEST.g)) == TEST.g


def test_naor_pinkas_algebra_exhaustive():
    # C^r / PK0^r == (C / PK0)^r for every C, PK0 in the group and every r
    elems = [pow(TEST.g, x, TEST.p) for x in range(TEST.q)]
    for C in elems:
        for pk0 in elems:
            quotient = TEST.div(C, pk0)
            for r in range(TEST.q):
                assert TEST.div(TEST.exp(C, r), TEST.exp(pk0, r)) == TEST.exp(quotient, r)


def test_ro_hash():
    h1 = ro_hash(TEST, TEST.g)
    assert h1 == ro_hash(TEST, TEST.g)
    assert len(h1.key) == 16
    assert h1 != ro_hash(TEST, TEST.g ** 2 % TEST.p)
    # frozen oracle: sha256 of the domain tag and the 2-byte encoding of 64
    assert h1.key == hashlib.sha256(b"leaktrace/ro\x00" + b"\x00\x40").digest()[:16]


def test_sign_verify(srng):
    kp = SigningKeypair.generate("alice", srng)
    other = SigningKeypair.generate("bob", srng)
    sig = sign(kp, b"hello")
    assert verify(kp.vk, b"hello", sig)
    assert not verify(kp.vk, b"hellp", sig)
    assert not verify(other.vk, b"hello", sig)
    assert not verify(kp.vk, b"hello", sig[:-1])
    assert not verify(b"\x01" * 5, b"hello", sig)


def test_signature_bit_flips_never_verify(srng):
    kp = SigningKeypair.generate("alice", srng)
    msg = b"[C_S, C_R, tau]"
    sig = sign(kp, msg)
    rng = SeededRandomness(b"flips")
    for _ in range(10_000):
        if rng.randbelow(2):
            bit = rng.randbelow(len(sig) * 8)
            bad = bytearray(sig)
            bad[bit // 8] ^= 1 << (bit % 8)
            assert not verify(kp.vk, msg, bytes(bad))
        else:
            bit = rng.randbelow(len(msg) * 8)
            bad = bytearray(msg)
            bad[bit // 8] ^= 1 << (bit % 8)
            assert not verify(kp.vk, bytes(bad), sig)


def test_seeded_keys_are_reproducible():
    a = SigningKeypair.generate("x", SeededRandomness(b"s"))
    b = SigningKeypair.generate("x", SeededRandomness(b"s"))
    assert a.vk == b.vk
    assert decode_signing_key(encode_signing_key(a)).vk == a.vk


def test_symmetric_encryption(srng):
    ek = SymKey.generate(srng)
    msg = srng.token_bytes(1024)
    c1, c2 = sym_encrypt(msg, ek, srng), sym_encrypt(msg, ek, srng)
    assert c1 != c2
    assert sym_decrypt(c1, ek) == msg and sym_decrypt(c2, ek) == msg
    assert len(c1) == 16 + len(msg)
    wrong = sum(sym_decrypt(c1, SymKey.generate(srng)) == msg for _ in range(100))
    assert wrong == 0
    with pytest.raises(CryptoError, match="truncated ciphertext"):
        sym_decrypt(c1[:15], ek)
    with pytest.raises(ValueError):
        SymKey(b"short")


def test_record_format():
    rec = pack_record(b"LTWK", b"abc")
    assert rec == b"LTWK\x00\x00\x00\x03abc"
    assert unpack_record(rec, b"LTWK") == b"abc"
    with pytest.raises(CryptoError):
        unpack_record(rec, b"LTSK")
    with pytest.raises(CryptoError):
        unpack_record(rec + b"x", b"LTWK")


def test_seeded_randomness_stream():
    r = SeededRandomness(b"a")
    vals = [r.randbelow(10) for _ in range(2000)]
    assert set(vals) == set(range(10))
    assert SeededRandomness(b"a").token_bytes(8) == SeededRandomness(b"a").token_bytes(8)
    assert SeededRandomness(b"a").child("x").token_bytes(8) != SeededRandomness(b"a").token_bytes(8)
