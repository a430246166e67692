"""Cryptographic primitives for proof-of-voting.

Three families live here:

* quorum-combination Schnorr multisignatures (single-round: the
  challenge binds the aggregate key and the message but not the nonce
  point, which is what lets followers sign without a nonce-exchange
  round — see README for the security caveat),
* Shamir secret sharing over the curve's scalar field,
* deterministic ECDSA with public-key recovery, used to authenticate
  secret shares.

Everything is a pure function of its inputs; nonces are derived
deterministically so two runs produce bit-identical signatures.
"""

import hashlib
import random
from dataclasses import dataclass
from itertools import combinations
from typing import Dict, Iterable, List, Sequence, Tuple

from . import curve, wire
from .curve import Point

NodeId = int


class CryptoError(ValueError):
    pass


@dataclass(frozen=True)
class KeyPair:
    secret: int
    public: Point


@dataclass(frozen=True, order=True)
class ComboId:
    """A quorum-size node subset, as a bitmask (bit i set <=> node i in it)."""

    mask: int

    def members(self) -> Tuple[NodeId, ...]:
        return tuple(i for i in range(64) if self.mask >> i & 1)

    def __contains__(self, node: NodeId) -> bool:
        return bool(self.mask >> node & 1)


@dataclass(frozen=True)
class PartialSignature:
    signer: NodeId
    combo: ComboId
    nonce_point: Point
    s_value: int


@dataclass(frozen=True)
class SssShare:
    index: int
    value: int


@dataclass(frozen=True)
class RecoverableSignature:
    r: int
    s: int
    recovery_hint: int


@dataclass(frozen=True)
class ClusterKeyring:
    node_keys: Tuple[Tuple[NodeId, Point], ...]
    quorum_size: int
    combos: Dict[ComboId, Point]

    def public_key(self, node: NodeId) -> Point:
        for node_id, pub in self.node_keys:
            if node_id == node:
                return pub
        raise CryptoError(f"unknown node {node}")

    def node_ids(self) -> Tuple[NodeId, ...]:
        return tuple(node_id for node_id, _ in self.node_keys)

    def ordinal(self, node: NodeId) -> int:
        """1-based share index for a node (position in sorted id order)."""
        ids = sorted(self.node_ids())
        try:
            return ids.index(node) + 1
        except ValueError:
            raise CryptoError(f"unknown node {node}") from None

    def node_for_ordinal(self, ordinal: int) -> NodeId:
        ids = sorted(self.node_ids())
        if not 1 <= ordinal <= len(ids):
            raise CryptoError(f"bad ordinal {ordinal}")
        return ids[ordinal - 1]

    def aggregate_key(self, combo: ComboId) -> Point:
        try:
            return self.combos[combo]
        except KeyError:
            raise CryptoError(f"unknown combo {combo.mask:#x}") from None

    def combos_containing(self, nodes: Iterable[NodeId]) -> List[ComboId]:
        want = 0
        for node in nodes:
            want |= 1 << node
        return [c for c in self.combos if c.mask & want == want]


def hash_to_scalar(domain_tag: str, parts: Sequence[bytes]) -> int:
    """Domain-separated hash of length-prefixed parts, reduced mod group order."""
    tag = hashlib.sha256(domain_tag.encode()).digest()
    h = hashlib.sha256(tag + tag)
    for part in parts:
        h.update(len(part).to_bytes(8, "big"))
        h.update(part)
    return int.from_bytes(h.digest(), "big") % curve.N


def keygen(seed: bytes) -> KeyPair:
    """Deterministic keypair from a seed; same seed, same pair."""
    if not seed:
        raise CryptoError("empty keygen seed")
    counter = 0
    while True:
        secret = hash_to_scalar("keygen", [seed, counter.to_bytes(4, "big")])
        if secret != 0:
            return KeyPair(secret, curve.scalar_mult_base(secret))
        counter += 1


def build_keyring(keys: Sequence[Tuple[NodeId, Point]]) -> ClusterKeyring:
    """Precompute one aggregate public key per quorum-size node subset."""
    n = len(keys)
    if n < 3:
        raise CryptoError("cluster too small")
    ids = [node_id for node_id, _ in keys]
    if len(set(ids)) != n:
        raise CryptoError("duplicate node")
    if any(not 0 <= i < 64 for i in ids):
        raise CryptoError("node ids must be in [0, 64)")
    quorum = n // 2 + 1
    by_id = dict(keys)
    combos: Dict[ComboId, Point] = {}
    for subset in combinations(sorted(ids), quorum):
        mask = 0
        agg = None
        for node_id in subset:
            mask |= 1 << node_id
            agg = curve.point_add(agg, by_id[node_id])
        combos[ComboId(mask)] = agg
    return ClusterKeyring(tuple(keys), quorum, combos)


# --- Schnorr quorum multisignatures -----------------------------------------


def schnorr_challenge(keyring: ClusterKeyring, combo: ComboId, message: bytes) -> int:
    agg = keyring.aggregate_key(combo)
    return hash_to_scalar("challenge", [wire.encode_point(agg), message])


def schnorr_partial_sign(
    kp: KeyPair, keyring: ClusterKeyring, combo: ComboId, message: bytes
) -> PartialSignature:
    signer = None
    for node_id, pub in keyring.node_keys:
        if pub == kp.public:
            signer = node_id
            break
    if signer is None or signer not in combo:
        raise CryptoError("not a member")
    nonce = hash_to_scalar(
        "nonce",
        [wire.encode_scalar(kp.secret), wire.encode_combo_mask(combo.mask), message],
    )
    nonce_point = curve.scalar_mult_base(nonce)
    e = schnorr_challenge(keyring, combo, message)
    s = (nonce + e * kp.secret) % curve.N
    return PartialSignature(signer, combo, nonce_point, s)


def schnorr_partial_verify(
    keyring: ClusterKeyring, psig: PartialSignature, message: bytes
) -> bool:
    try:
        e = schnorr_challenge(keyring, psig.combo, message)
        pub = keyring.public_key(psig.signer)
    except CryptoError:
        return False
    lhs = curve.scalar_mult_base(psig.s_value)
    rhs = curve.point_add(psig.nonce_point, curve.scalar_mult(e, pub))
    return lhs == rhs


def schnorr_aggregate(partials: Sequence[PartialSignature]) -> Tuple[Point, int]:
    if not partials:
        raise CryptoError("no partials")
    combo = partials[0].combo
    signers = [p.signer for p in partials]
    if len(set(signers)) != len(signers):
        raise CryptoError("duplicate signer")
    if any(p.combo != combo for p in partials):
        raise CryptoError("mixed combos")
    if set(signers) != set(combo.members()):
        raise CryptoError("incomplete combo")
    big_r = None
    s = 0
    for p in partials:
        big_r = curve.point_add(big_r, p.nonce_point)
        s = (s + p.s_value) % curve.N
    return big_r, s


def schnorr_verify(
    keyring: ClusterKeyring, combo: ComboId, message: bytes, big_r: Point, s: int
) -> bool:
    try:
        e = schnorr_challenge(keyring, combo, message)
        agg = keyring.aggregate_key(combo)
    except CryptoError:
        return False
    lhs = curve.scalar_mult_base(s)
    rhs = curve.point_add(big_r, curve.scalar_mult(e, agg))
    return lhs is not None and lhs == rhs


# --- Shamir secret sharing ---------------------------------------------------


def sss_split(secret: int, n: int, q: int, rng: random.Random) -> List[SssShare]:
    """Shares (j, f(j)) of a random degree q-1 polynomial with f(0) = secret."""
    if not 1 <= q <= n:
        raise CryptoError("threshold exceeds share count")
    if n >= curve.N:
        raise CryptoError("too many shares for the field")
    coeffs = [secret % curve.N] + [rng.randrange(curve.N) for _ in range(q - 1)]
    shares = []
    for j in range(1, n + 1):
        value = 0
        for coeff in reversed(coeffs):
            value = (value * j + coeff) % curve.N
        shares.append(SssShare(j, value))
    return shares


def sss_restore(shares: Sequence[SssShare], q: int) -> int:
    """Lagrange interpolation at 0 over the q lowest-indexed shares."""
    if len(shares) < q:
        raise CryptoError("below threshold")
    indices = [s.index for s in shares]
    if len(set(indices)) != len(indices):
        raise CryptoError("duplicate share index")
    chosen = sorted(shares, key=lambda s: s.index)[:q]
    secret = 0
    for share in chosen:
        num, den = 1, 1
        for other in chosen:
            if other.index == share.index:
                continue
            num = num * other.index % curve.N
            den = den * (other.index - share.index) % curve.N
        lam = num * pow(den, curve.N - 2, curve.N) % curve.N
        secret = (secret + share.value * lam) % curve.N
    return secret


# --- Recoverable ECDSA -------------------------------------------------------


def _message_digest(message: bytes) -> int:
    return int.from_bytes(hashlib.sha256(message).digest(), "big") % curve.N


def sign_recoverable(kp: KeyPair, message: bytes) -> RecoverableSignature:
    """Deterministic ECDSA signature from which the public key is recoverable."""
    z = _message_digest(message)
    counter = 0
    while True:
        k = hash_to_scalar(
            "ecdsa-nonce",
            [wire.encode_scalar(kp.secret), message, counter.to_bytes(4, "big")],
        )
        counter += 1
        if k == 0:
            continue
        rx, ry = curve.scalar_mult_base(k)
        r = rx % curve.N
        if r == 0:
            continue
        s = pow(k, curve.N - 2, curve.N) * (z + r * kp.secret) % curve.N
        if s == 0:
            continue
        hint = (ry & 1) | (2 if rx >= curve.N else 0)
        return RecoverableSignature(r, s, hint)


def recover_pubkey(message: bytes, sig: RecoverableSignature) -> Point:
    if not 1 <= sig.r < curve.N or not 1 <= sig.s < curve.N:
        raise CryptoError("invalid signature encoding")
    if sig.recovery_hint not in (0, 1, 2, 3):
        raise CryptoError("invalid signature encoding")
    x = sig.r + (curve.N if sig.recovery_hint >= 2 else 0)
    try:
        big_r = curve.lift_x(x, bool(sig.recovery_hint & 1))
    except ValueError:
        raise CryptoError("invalid signature encoding") from None
    z = _message_digest(message)
    r_inv = pow(sig.r, curve.N - 2, curve.N)
    # Q = r^-1 * (s*R - z*G)
    sr = curve.scalar_mult(sig.s, big_r)
    zg = curve.scalar_mult_base(z)
    q = curve.scalar_mult(r_inv, curve.point_add(sr, curve.point_neg(zg)))
    if q is None:
        raise CryptoError("invalid signature encoding")
    return q
