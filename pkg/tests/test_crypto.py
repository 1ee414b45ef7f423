"""Known-answer vectors, avalanche/soundness fuzz, Merkle brute force, canonical JSON."""

from __future__ import annotations

import random

import pytest
from hypothesis import given, strategies as st

from chainfab import crypto
from chainfab.crypto import (
    MerkleProof,
    SeedLengthError,
    UnencodableError,
    canonical_decode,
    canonical_encode,
    derive_address,
    generate_keypair,
    hash_bytes,
    merkle_prove,
    merkle_root,
    merkle_verify,
    sign,
    verify_signature,
)

# FIPS 180-4 SHA-256 known answers.
SHA256_EMPTY = "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
SHA256_ABC = "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"

# RFC 8032 section 7.1 TEST 1 (empty message).
RFC8032_SEED = "9d61b19deffd5a60ba844af492ec2cc44449c5697b326919703bac031cae7f60"
RFC8032_PUBLIC = "d75a980182b10ab7d54bfed3c964073a0ee172f3daa62325af021a68f707511a"
RFC8032_SIG = (
    "e5564300c360ac729086e2cc806e828a84877f1eb8e5d974d873e06522490155"
    "5fb8821590a33bacc61e39701cf9b46bd25bf5f0595bbe24655141438e7a100b"
)


class TestHash:
    def test_fips_vectors(self):
        assert hash_bytes(b"").hex() == SHA256_EMPTY
        assert hash_bytes(b"abc").hex() == SHA256_ABC

    def test_deterministic(self):
        data = b"the same bytes"
        assert hash_bytes(data) == hash_bytes(data)

    def test_avalanche_single_bit_flips(self):
        rng = random.Random(1)
        for _ in range(1000):
            msg = bytearray(rng.randbytes(rng.randint(1, 64)))
            base = hash_bytes(bytes(msg))
            bit = rng.randrange(len(msg) * 8)
            msg[bit // 8] ^= 1 << (bit % 8)
            assert hash_bytes(bytes(msg)) != base


class TestKeys:
    def test_rfc8032_keypair_and_signature(self):
        kp = generate_keypair(bytes.fromhex(RFC8032_SEED))
        assert kp.public.hex() == RFC8032_PUBLIC
        assert sign(kp.secret, b"").hex() == RFC8032_SIG
        assert verify_signature(kp.public, b"", bytes.fromhex(RFC8032_SIG))

    def test_same_seed_same_keys(self):
        seed = bytes(range(32))
        assert generate_keypair(seed).public == generate_keypair(seed).public

    @pytest.mark.parametrize("n", [0, 16, 31, 33, 64])
    def test_bad_seed_length(self, n):
        with pytest.raises(SeedLengthError):
            generate_keypair(b"\x01" * n)

    def test_sign_roundtrip_and_determinism(self):
        kp = generate_keypair(hash_bytes(b"roundtrip"))
        msg = b"mill one ellipse pocket"
        sig = sign(kp.secret, msg)
        assert sig == sign(kp.secret, msg)
        assert verify_signature(kp.public, msg, sig)

    def test_flipped_bit_fails(self):
        kp = generate_keypair(hash_bytes(b"flip"))
        msg = b"payload"
        sig = sign(kp.secret, msg)
        assert not verify_signature(kp.public, b"paymoad", sig)
        assert not verify_signature(kp.public, msg + b"x", sig)

    def test_signature_soundness_fuzz(self):
        rng = random.Random(7)
        kp = generate_keypair(hash_bytes(b"soundness"))
        msg = b"authentic message"
        sig = bytearray(sign(kp.secret, msg))
        for _ in range(1000):
            forged = bytearray(sig)
            choice = rng.random()
            if choice < 0.5:
                bit = rng.randrange(len(forged) * 8)
                forged[bit // 8] ^= 1 << (bit % 8)
                assert not verify_signature(kp.public, msg, bytes(forged))
            elif choice < 0.75:
                cut = rng.randrange(len(forged))
                assert not verify_signature(kp.public, msg, bytes(forged[:cut]))
            else:
                assert not verify_signature(kp.public, rng.randbytes(rng.randint(0, 80)),
                                            bytes(forged))

    def test_malformed_inputs_return_false(self):
        assert not verify_signature(b"short", b"m", b"\x00" * 64)
        assert not verify_signature(b"\x00" * 32, b"m", b"not a signature")


class TestAddress:
    def test_matches_manual_hash_then_truncate(self):
        kp = generate_keypair(hash_bytes(b"addr"))
        assert derive_address(kp.public) == "cm1" + hash_bytes(kp.public)[:20].hex()

    def test_stable(self):
        kp = generate_keypair(hash_bytes(b"stable"))
        assert derive_address(kp.public) == derive_address(kp.public)
        assert crypto.is_address(derive_address(kp.public))

    def test_no_collisions_over_random_sample(self):
        rng = random.Random(11)
        seen = set()
        for _ in range(10_000):
            seen.add(derive_address(rng.randbytes(32)))
        assert len(seen) == 10_000


def reference_merkle_root(leaves):
    """Independent top-down recursive oracle for the bottom-up implementation."""
    if not leaves:
        return hash_bytes(b"")
    if len(leaves) == 1:
        return leaves[0]
    padded = list(leaves) + ([leaves[-1]] if len(leaves) % 2 else [])
    parents = [hash_bytes(padded[i] + padded[i + 1]) for i in range(0, len(padded), 2)]
    return reference_merkle_root(parents)


class TestMerkle:
    def leaves(self, n, tag=b""):
        return [hash_bytes(tag + bytes([i])) for i in range(n)]

    def test_single_leaf_is_root(self):
        d = hash_bytes(b"only")
        assert merkle_root([d]) == d

    def test_empty_list(self):
        assert merkle_root([]) == hash_bytes(b"")

    def test_three_leaves_hand_composed(self):
        d1, d2, d3 = self.leaves(3)
        expected = hash_bytes(hash_bytes(d1 + d2) + hash_bytes(d3 + d3))
        assert merkle_root([d1, d2, d3]) == expected

    def test_exhaustive_small_trees_against_oracle(self):
        for n in range(0, 9):
            leaves = self.leaves(n)
            assert merkle_root(leaves) == reference_merkle_root(leaves)

    def test_exhaustive_proofs_small_trees(self):
        for n in range(1, 9):
            leaves = self.leaves(n, b"p")
            root = merkle_root(leaves)
            for i in range(n):
                proof = merkle_prove(leaves, i)
                assert merkle_verify(root, leaves[i], proof)

    def test_proof_against_wrong_leaf_fails(self):
        leaves = self.leaves(5, b"w")
        root = merkle_root(leaves)
        proof = merkle_prove(leaves, 2)
        assert not merkle_verify(root, leaves[3], proof)

    def test_prove_out_of_range(self):
        with pytest.raises(IndexError):
            merkle_prove(self.leaves(4), 4)
        with pytest.raises(IndexError):
            merkle_prove(self.leaves(4), -1)

    def test_leaf_sensitivity(self):
        # exhaustive for |L| <= 8, randomized above
        for n in range(1, 9):
            leaves = self.leaves(n, b"s")
            base = merkle_root(leaves)
            for i in range(n):
                mutated = list(leaves)
                mutated[i] = hash_bytes(b"mut" + bytes([i]))
                assert merkle_root(mutated) != base
        rng = random.Random(3)
        for _ in range(200):
            n = rng.randint(9, 40)
            leaves = [rng.randbytes(32) for _ in range(n)]
            base = merkle_root(leaves)
            i = rng.randrange(n)
            mutated = list(leaves)
            mutated[i] = rng.randbytes(32)
            assert merkle_root(mutated) != base

    def test_forged_direction_fails(self):
        leaves = self.leaves(4, b"d")
        root = merkle_root(leaves)
        proof = merkle_prove(leaves, 1)
        flipped = MerkleProof(proof.leaf_index, proof.siblings,
                              tuple(not d for d in proof.directions))
        assert not merkle_verify(root, leaves[1], flipped)


json_scalars = st.one_of(
    st.none(),
    st.booleans(),
    st.integers(min_value=-(2 ** 63), max_value=2 ** 63),
    st.text(max_size=40),
    st.binary(max_size=24),
)
json_values = st.recursive(
    json_scalars,
    lambda inner: st.one_of(
        st.lists(inner, max_size=5),
        st.dictionaries(st.text(max_size=12), inner, max_size=5),
    ),
    max_leaves=20,
)


class TestCanonicalEncoding:
    def test_key_ordering(self):
        assert canonical_encode({"b": 1, "a": 2}) == b'{"a":2,"b":1}'

    def test_no_whitespace_and_hex_bytes(self):
        assert canonical_encode({"x": b"\x00\xff"}) == b'{"x":"00ff"}'

    def test_deterministic(self):
        value = {"k": [1, "two", None, True], "b": b"\xaa"}
        assert canonical_encode(value) == canonical_encode(value)

    def test_rejects_floats(self):
        with pytest.raises(UnencodableError):
            canonical_encode({"price": 1.5})
        with pytest.raises(UnencodableError):
            canonical_encode([float("nan")])

    def test_rejects_non_string_keys_and_objects(self):
        with pytest.raises(UnencodableError):
            canonical_encode({1: "x"})
        with pytest.raises(UnencodableError):
            canonical_encode(object())

    @given(json_values)
    def test_roundtrip_up_to_hex(self, value):
        def hexed(v):
            if isinstance(v, (bytes, bytearray)):
                return bytes(v).hex()
            if isinstance(v, list):
                return [hexed(i) for i in v]
            if isinstance(v, dict):
                return {k: hexed(i) for k, i in v.items()}
            return v

        assert canonical_decode(canonical_encode(value)) == hexed(value)

    @given(json_values)
    def test_encoding_is_stable(self, value):
        assert canonical_encode(value) == canonical_encode(value)
