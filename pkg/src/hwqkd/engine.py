"""Exact outcome enumeration for Alice's and Bob's measurements on a group.

Alice's settings act on (particle 1, particle 2) of each timeslot:

* ``A`` - Bell measurement, outcome index = :class:`BellOutcome` value;
* ``B`` - both particles in Z, ``C`` - both particles in X.  The outcome
  index is ``2 * u1 + u2`` with ``u = 1`` for spin up, so the particle-2
  result is ``k & 1``.

Bob measures every particle 3 in Z or X with outcome bit 1 for spin up.
Spin sums are in +-1 units: ``2 * ups - slots``.
"""

from __future__ import annotations

import itertools
from enum import Enum
from functools import lru_cache
from math import factorial

import numpy as np

from .qstate import BasisLabel, bell_states, outcome_distribution, DensityOperator
from .sources import GroupState, IIDComponent, ProductComponent, UnsupportedConfiguration


class AliceSetting(str, Enum):
    A_BELL = "a"
    B_ZZ = "b"
    C_XX = "c"

    @classmethod
    def parse(cls, value) -> "AliceSetting":
        if isinstance(value, cls):
            return value
        text = str(value).strip().lower()
        aliases = {"a": cls.A_BELL, "bell": cls.A_BELL, "b": cls.B_ZZ, "zz": cls.B_ZZ, "c": cls.C_XX, "xx": cls.C_XX}
        if text not in aliases:
            raise ValueError(f"unknown setting {value!r}; expected a, b or c")
        return aliases[text]

    @property
    def local_basis(self) -> BasisLabel | None:
        """Basis of Alice's particle-2 result, or None for the Bell setting."""
        return {self.B_ZZ: BasisLabel.Z, self.C_XX: BasisLabel.X}.get(self)


SETTINGS = (AliceSetting.A_BELL, AliceSetting.B_ZZ, AliceSetting.C_XX)
BASES = (BasisLabel.Z, BasisLabel.X)


def alice_kets(setting: AliceSetting) -> np.ndarray:
    """Columns are the four 2-qubit measurement kets on (particle 1, particle 2)."""
    setting = AliceSetting.parse(setting)
    if setting is AliceSetting.A_BELL:
        return np.column_stack([v.amplitudes for v in bell_states().values()])
    u = BasisLabel.Z.unitary if setting is AliceSetting.B_ZZ else BasisLabel.X.unitary
    return np.kron(u, u).astype(complex)


def alice_projectors(setting: AliceSetting) -> list[np.ndarray]:
    k = alice_kets(setting)
    return [np.outer(k[:, i], k[:, i].conj()) for i in range(4)]


def bob_effects(basis: BasisLabel) -> np.ndarray:
    """Shape (2, 2, 2): projector for outcome bit 0 (down) and 1 (up)."""
    u = BasisLabel.parse(basis).unitary.astype(complex)
    return np.array([np.outer(u[:, b], u[:, b].conj()) for b in (0, 1)])


def effective_povm(rho1: np.ndarray, setting: AliceSetting) -> np.ndarray:
    """Effects on particle 2 induced by Alice's setting and the particle-1 state.

    ``E_k = Tr_1[(rho1 (x) I) P_k]``, shape (4, 2, 2).
    """
    out = []
    for p in alice_projectors(setting):
        t = p.reshape(2, 2, 2, 2)  # ket1 ket2 bra1 bra2
        out.append(np.einsum("ji,iajb->ab", rho1, t))
    return np.array(out)


def particle2_bit(k) -> np.ndarray:
    return np.asarray(k) & 1


def joint_outcome_tensor(
    rho1: np.ndarray, pair_density: np.ndarray, setting: AliceSetting, bob_basis: BasisLabel
) -> np.ndarray:
    """P(k_1..k_4, b_1..b_4) for a 256x256 group density on (particle 2 x4, particle 3 x4).

    Returns a real array of shape ``(4,)*4 + (2,)*4``.
    """
    if pair_density.shape != (256, 256):
        raise UnsupportedConfiguration("joint tensors are built for 4-timeslot groups")
    es = effective_povm(rho1, setting)
    fs = bob_effects(bob_basis)
    res = pair_density.reshape((2,) * 16)
    for qb in range(8):
        eff = es if qb < 4 else fs
        nk = 8 - qb
        # contract effect (o, a, b) with ket axis b and bra axis a of this qubit
        res = np.tensordot(eff, res, axes=([2, 1], [qb, qb + nk]))
        res = np.moveaxis(res, 0, qb)
    return np.real(res)


def timeslot_table(rho1: np.ndarray, pair: np.ndarray, setting: AliceSetting, bob_basis: BasisLabel) -> np.ndarray:
    """Born probabilities ``T[k, b]`` for one timeslot of an i.i.d. trio source."""
    trio = DensityOperator(np.kron(rho1, pair))
    fs = bob_effects(bob_basis)
    projs = [np.kron(p, f) for p in alice_projectors(setting) for f in fs]
    return outcome_distribution(trio, projs).reshape(4, 2)


@lru_cache(maxsize=None)
def ok_mask(slots: int = 4) -> np.ndarray:
    """Boolean mask over Alice outcome tuples (shape ``(4,)*slots``) satisfying criterion Q."""
    n = slots // 4
    mask = np.zeros((4,) * slots, dtype=bool)
    for ks in itertools.product(range(4), repeat=slots):
        if all(ks.count(o) == n for o in range(4)):
            mask[ks] = True
    mask.setflags(write=False)
    return mask


@lru_cache(maxsize=None)
def ups_count(slots: int = 4) -> np.ndarray:
    """Number of up results for each Bob bit tuple, shape ``(2,)*slots``."""
    grid = np.indices((2,) * slots).sum(axis=0)
    grid.setflags(write=False)
    return grid


def multinomial_ok(N: int) -> int:
    return factorial(4 * N) // factorial(N) ** 4


def iid_ok_sum(table: np.ndarray, N: int) -> tuple[float, np.ndarray]:
    """P(ok) and P(ok, ups = j) for an i.i.d. per-timeslot table ``T[k, b]``.

    Each ok ordering contributes the same product, so the joint is the
    multinomial count times the coefficients of ``prod_k (T[k,0] + T[k,1] x)^N``.
    """
    poly = np.array([1.0])
    for k in range(4):
        pk = np.array([table[k, 0], table[k, 1]])
        for _ in range(N):
            poly = np.convolve(poly, pk)
    joint = multinomial_ok(N) * poly
    return float(joint.sum()), joint


def _sum_values(slots: int) -> np.ndarray:
    return 2 * np.arange(slots + 1) - slots


def ok_sum_joint(state: GroupState, setting: AliceSetting, bob_basis: BasisLabel) -> dict:
    """Exact P(ok) and P(ok, Bob sum) summed over source components.

    Returns ``{"p_ok": float, "joint": {sum: prob}, "components": [...]}``
    where ``components`` lists each component's own P(ok) and joint.
    """
    setting = AliceSetting.parse(setting)
    slots = state.slots
    N = slots // 4
    values = _sum_values(slots)
    total = np.zeros(slots + 1)
    per = []
    for comp in state.components:
        if isinstance(comp, IIDComponent):
            table = timeslot_table(state.rho1, comp.pair, setting, bob_basis)
            _, joint = iid_ok_sum(table, N)
        else:
            tens = joint_outcome_tensor(state.rho1, state.pair_density(comp), setting, bob_basis)
            joint = ok_bob_ups(tens)
        per.append({"label": comp.label, "weight": comp.weight, "p_ok": float(joint.sum()), "joint": joint})
        total += comp.weight * joint
    return {
        "p_ok": float(total.sum()),
        "joint": {int(v): float(p) for v, p in zip(values, total)},
        "components": per,
    }


def ok_bob_ups(tensor: np.ndarray) -> np.ndarray:
    """Collapse a joint outcome tensor to P(ok, ups = j), j = 0..4."""
    mask = ok_mask(4)
    bob = tensor[mask].sum(axis=0)  # shape (2,)*4
    ups = ups_count(4)
    return np.bincount(ups.ravel(), weights=bob.ravel(), minlength=5)


def site_joint(pair_density: np.ndarray, alice_basis: BasisLabel, bob_basis: BasisLabel) -> np.ndarray:
    """P(Alice particle-2 pattern, Bob particle-3 pattern), shape (16, 16), N = 1."""
    ua = np.ones((1, 1))
    for _ in range(4):
        ua = np.kron(ua, BasisLabel.parse(alice_basis).unitary)
    ub = np.ones((1, 1))
    for _ in range(4):
        ub = np.kron(ub, BasisLabel.parse(bob_basis).unitary)
    u = np.kron(ua, ub)
    diag = np.real(np.einsum("ik,ij,jk->k", u.conj(), pair_density, u))
    return diag.reshape(16, 16)


def component_site_joint(comp, alice_basis: BasisLabel, bob_basis: BasisLabel) -> np.ndarray:
    """Per-component pattern joint, using the product structure when available."""
    if isinstance(comp, ProductComponent):
        pa = pattern_probs(comp.psi2, alice_basis)
        pb = pattern_probs(comp.psi3, bob_basis)
        return np.outer(pa, pb)
    from .sources import iid_group_density

    return site_joint(iid_group_density(comp.pair, 4), alice_basis, bob_basis)


def pattern_probs(amplitudes: np.ndarray, basis: BasisLabel) -> np.ndarray:
    u = np.ones((1, 1))
    for _ in range(4):
        u = np.kron(u, BasisLabel.parse(basis).unitary)
    return np.abs(u.conj().T @ amplitudes) ** 2


def group_site_joint(state: GroupState, alice_basis: BasisLabel, bob_basis: BasisLabel) -> np.ndarray:
    return sum(c.weight * component_site_joint(c, alice_basis, bob_basis) for c in state.components)


@lru_cache(maxsize=None)
def pattern_sums() -> np.ndarray:
    """Spin sum of each 4-bit pattern (bit 1 = up)."""
    s = np.array([2 * bin(d).count("1") - 4 for d in range(16)])
    s.setflags(write=False)
    return s


def intercept_table(
    rho1: np.ndarray,
    pair: np.ndarray,
    setting: AliceSetting,
    eve_basis: BasisLabel,
    bob_basis: BasisLabel,
) -> np.ndarray:
    """``T[k, e, b]`` for one timeslot when Eve measures particle 3 and resends.

    Eve's result ``e`` is sampled by the Born rule on the trio state; Bob then
    measures the freshly prepared eigenstate ``|e>`` in his own basis.
    """
    trio = DensityOperator(np.kron(rho1, pair))
    fe = bob_effects(eve_basis)
    projs = [np.kron(p, f) for p in alice_projectors(setting) for f in fe]
    pke = outcome_distribution(trio, projs).reshape(4, 2)
    ue = BasisLabel.parse(eve_basis).unitary
    ub = BasisLabel.parse(bob_basis).unitary
    overlap = np.abs(ub.conj().T @ ue) ** 2  # [b, e]
    return pke[:, :, None] * overlap.T[None, :, :]


def intercept_channel(pair_density: np.ndarray, eve_basis: BasisLabel) -> np.ndarray:
    """Measure-and-resend on every particle 3 of a 256x256 group density."""
    u = BasisLabel.parse(eve_basis).unitary.astype(complex)
    projs = [np.outer(u[:, e], u[:, e].conj()) for e in (0, 1)]
    rho = pair_density
    for q in range(4, 8):
        out = np.zeros_like(rho)
        for p in projs:
            op = _embed_single(p, q, 8)
            out += op @ rho @ op
        rho = out
    return rho


def _embed_single(op: np.ndarray, qubit: int, n: int) -> np.ndarray:
    left = np.eye(2**qubit)
    right = np.eye(2 ** (n - qubit - 1))
    return np.kron(np.kron(left, op), right)
