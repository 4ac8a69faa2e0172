"""Pilot construction, block-diagonalization precoding, and pilot-domain RX.

Each RIS gets its own orthogonal pilot sequence and a transmit beam confined
to the null space of every other RIS channel and of the direct channel, so the
per-RIS pilot projections at the user are interference-free up to numerical
precision.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ristrack.channel import ChannelSet

__all__ = [
    "BdInfeasibleError",
    "DegenerateChannelError",
    "PilotBook",
    "PowerBudgetError",
    "PrecoderSet",
    "StaticNullspaceCache",
    "assemble_precoders",
    "bd_beamformer",
    "bd_nullspace",
    "build_pilots",
    "simulate_received_pilots",
]

# Singular values below this fraction of the largest are treated as zero when
# deciding the rank of the stacked interference matrix.
NULLSPACE_RTOL = 1e-10


class BdInfeasibleError(RuntimeError):
    """Interference stack spans the whole transmit space; no null beam exists."""


class DegenerateChannelError(RuntimeError):
    """Effective channel vanished; no beamforming direction is defined."""


class PowerBudgetError(ValueError):
    """Requested per-RIS powers exceed the transmit budget."""


@dataclass(frozen=True)
class PilotBook:
    """Unit-modulus orthogonal pilot rows: Q of shape (K, L), Q Q^H = L I."""

    rows: np.ndarray

    @property
    def n_sequences(self) -> int:
        return self.rows.shape[0]

    @property
    def length(self) -> int:
        return self.rows.shape[1]


@dataclass(frozen=True)
class PrecoderSet:
    """Per-RIS unit beamformers and power weights; columns f_k = beta_k v_k."""

    beamformers: np.ndarray  # (N_TX, K), unit-norm columns
    beta: np.ndarray         # (K,), sqrt-watt weights

    @property
    def matrix(self) -> np.ndarray:
        return self.beamformers * self.beta[None, :]

    def column(self, k: int) -> np.ndarray:
        return self.beta[k] * self.beamformers[:, k]


def build_pilots(n_sequences: int, length: int) -> PilotBook:
    """DFT pilot book: row k has entries exp(-2j*pi*k*l/L)."""
    if length < n_sequences:
        raise ValueError(f"pilot length {length} shorter than sequence count {n_sequences}")
    k = np.arange(n_sequences)[:, None]
    l = np.arange(length)[None, :]
    return PilotBook(np.exp(-2j * np.pi * k * l / length))


def bd_nullspace(channels: ChannelSet, k: int) -> np.ndarray:
    """Orthonormal basis of the null space of RIS k's interference stack.

    The stack holds every other BS-RIS matrix and the direct channel.  Rank is
    decided by singular values above ``NULLSPACE_RTOL`` times the largest.

    Raises:
        BdInfeasibleError: if the null space is empty (too few BS antennas for
            the RIS count and sizes).
    """
    blocks = [channels.bs_ris[l] for l in range(channels.n_ris) if l != k]
    blocks.append(channels.direct)
    stack = np.vstack(blocks)
    n_tx = stack.shape[1]
    _, sv, vh = np.linalg.svd(stack, full_matrices=True)
    if sv.size == 0 or sv[0] == 0.0:
        rank = 0
    else:
        rank = int(np.count_nonzero(sv > NULLSPACE_RTOL * sv[0]))
    if rank >= n_tx:
        raise BdInfeasibleError(
            f"interference stack of RIS {k} has rank {rank} = N_TX; "
            "scenario too crowded for this BS array")
    return vh[rank:].conj().T


def bd_beamformer(bs_ris: np.ndarray, nullspace_basis: np.ndarray) -> np.ndarray:
    """Unit-norm beam maximizing gain to one RIS inside the null space.

    Takes the principal right singular vector of the reduced channel
    G_k @ basis and lifts it back to the full transmit space.
    """
    reduced = bs_ris @ nullspace_basis
    if not np.any(np.abs(reduced) > 0):
        raise DegenerateChannelError("effective BS-RIS channel is zero in the null space")
    try:
        _, _, vh = np.linalg.svd(reduced, full_matrices=False)
        principal = vh[0].conj()
    except np.linalg.LinAlgError:
        # gesdd occasionally fails to converge; the Gram eigenvector is the
        # same principal right singular vector through a sturdier path
        _, vecs = np.linalg.eigh(reduced.conj().T @ reduced)
        principal = vecs[:, -1]
    v = nullspace_basis @ principal
    return v / np.linalg.norm(v)


class StaticNullspaceCache:
    """Per-RIS null spaces with the static BS-RIS blocks factored once.

    The interference stack of RIS k holds the other BS-RIS matrices (fixed by
    geometry) plus the direct channel (refaded every pilot).  The null space
    of the full stack equals null(static) intersected with null(direct), so
    the large static SVD is done once and only a small per-step factorization
    of ``direct @ static_basis`` remains.  Matches :func:`bd_nullspace` up to
    the usual basis rotation.
    """

    def __init__(self, bs_ris: list[np.ndarray]):
        self.n_ris = len(bs_ris)
        self._static_basis = []
        n_tx = bs_ris[0].shape[1]
        for k in range(self.n_ris):
            blocks = [bs_ris[l] for l in range(self.n_ris) if l != k]
            if blocks:
                stack = np.vstack(blocks)
                _, sv, vh = np.linalg.svd(stack, full_matrices=True)
                rank = int(np.count_nonzero(sv > NULLSPACE_RTOL * sv[0])) if sv.size else 0
                self._static_basis.append(vh[rank:].conj().T)
            else:
                self._static_basis.append(np.eye(n_tx, dtype=complex))

    def nullspace(self, k: int, direct: np.ndarray) -> np.ndarray:
        basis = self._static_basis[k]
        if basis.shape[1] == 0:
            raise BdInfeasibleError(
                f"interference stack of RIS {k} spans the transmit space")
        reduced = direct @ basis
        _, sv, vh = np.linalg.svd(reduced, full_matrices=True)
        rank = int(np.count_nonzero(sv > NULLSPACE_RTOL * sv[0])) if sv.size and sv[0] > 0 else 0
        if rank >= basis.shape[1]:
            raise BdInfeasibleError(
                f"direct channel fills the remaining null space of RIS {k}")
        return basis @ vh[rank:].conj().T


def assemble_precoders(beamformers: list[np.ndarray] | np.ndarray,
                       beta: np.ndarray, power_budget: float) -> PrecoderSet:
    """Stack unit beams with sqrt-watt weights, enforcing sum(beta^2) <= budget."""
    v = np.column_stack(beamformers) if isinstance(beamformers, list) else np.asarray(beamformers)
    beta = np.asarray(beta, dtype=float)
    total = float(np.sum(beta ** 2))
    if total > power_budget * (1 + 1e-9):
        raise PowerBudgetError(f"sum of beta^2 = {total} exceeds budget {power_budget}")
    return PrecoderSet(v, beta)


def simulate_received_pilots(channels: ChannelSet, ris_profiles: list[np.ndarray],
                             precoders: PrecoderSet, pilots: PilotBook,
                             noise_power_w: float, rng: np.random.Generator) -> list[np.ndarray]:
    """Per-RIS pilot projections y_k at the user, each of shape (N_RX,).

    Synthesizes the full received block Y = H X + sum_k B_k diag(c_k) G_k X + N
    with X = F Q, then correlates with each pilot row; the projected AWGN has
    per-element variance ``noise_power_w / L``.
    """
    x = precoders.matrix @ pilots.rows
    n_rx = channels.direct.shape[0]
    length = pilots.length
    y = channels.direct @ x
    for k in range(channels.n_ris):
        y = y + (channels.ris_ue[k] * ris_profiles[k][None, :]) @ (channels.bs_ris[k] @ x)
    noise = (rng.standard_normal((n_rx, length)) + 1j * rng.standard_normal((n_rx, length)))
    y = y + np.sqrt(noise_power_w / 2.0) * noise
    return [(y @ pilots.rows[k].conj()) / length for k in range(pilots.n_sequences)]
