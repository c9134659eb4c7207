"""Brute-force verification of the scheme's claims on concrete transcripts.

Three independent checks, all computed from the server's view alone:

* posterior: enumerate every (side-information set, demand sequence) pair
  that could have produced the observed partition sequence, weight each by
  its exact prior and randomness probability, and normalize.  For a correct
  run every per-round posterior row is uniformly 1/K.
* capacity / measured_rate: the closed-form per-round rate versus the rate
  actually achieved (1 / packets downloaded).
* rank_profile: rebuild each round's packet coefficient matrix over [1..K]
  and check its rank equals the packet count (no wasted download).

Everything uses exact rational arithmetic; equality checks need no
tolerances.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import comb, factorial

from .cauchy import round_column_indices
from .errors import InconsistentTranscript, InvalidParams, RoundOutOfRange
from .field import FieldMatrix, matrix_rank
from .protocol import Transcript


@dataclass(frozen=True)
class Hypothesis:
    """One candidate explanation of a transcript: who knew what, who asked what."""

    side: frozenset[int]
    demands: tuple[int, ...]
    weight: Fraction


@dataclass(frozen=True)
class PosteriorTable:
    """Exact demand posteriors: rows[j-1][w-1] = P(round-j demand = w)."""

    k: int
    rows: tuple[tuple[Fraction, ...], ...]
    hypothesis_count: int

    @property
    def rounds(self) -> int:
        return len(self.rows)

    def probability(self, round_no: int, index: int) -> Fraction:
        """P(round-round_no demand = index), both 1-based."""
        return self.rows[round_no - 1][index - 1]

    def row(self, round_no: int) -> tuple[Fraction, ...]:
        return self.rows[round_no - 1]

    def is_uniform(self) -> bool:
        """True when every entry is exactly 1/K: nothing leaked."""
        target = Fraction(1, self.k)
        return all(p == target for row in self.rows for p in row)


def _round1_factor(k: int, m: int) -> Fraction:
    """P(one specific ordered round-1 partition | side set and demand fixed)."""
    n1 = k // (m + 1)
    rest = k - m - 1
    partitions = factorial(rest) // (factorial(m + 1) ** (n1 - 1) * factorial(n1 - 1))
    return Fraction(1, partitions * factorial(n1))


def _merge_factor(prev_blocks: int) -> Fraction:
    """P(one specific ordered merge | demand and chain blocks fixed).

    The remaining prev_blocks - 2 blocks are paired uniformly; the resulting
    prev_blocks // 2 blocks are ordered uniformly.
    """
    remaining = prev_blocks - 2
    half = remaining // 2
    pairings = factorial(remaining) // (2**half * factorial(half))
    return Fraction(1, pairings * factorial(prev_blocks // 2))


def enumerate_hypotheses(transcript: Transcript) -> tuple[Hypothesis, ...]:
    """All (side set, demand sequence) pairs consistent with the queries.

    Walks the rounds forward.  Round 1: the demand-plus-side block can be
    any observed block, split any of the M+1 ways.  Round i >= 2: the
    hypothesis's accumulated chain block must sit inside exactly one
    observed block whose other half is a previous-round block; the demand
    can be any element of that other half.  Weights multiply the uniform
    priors with the per-round randomness probabilities.
    """
    if not transcript.rounds:
        raise ValueError("transcript has no rounds")
    for j, rnd in enumerate(transcript.rounds, start=1):
        if rnd.query.round_no != j:
            raise ValueError(f"transcript rounds not contiguous at position {j}")

    params = transcript.params
    k, m = params.k, params.m

    round1 = transcript.rounds[0].query
    side_prior = Fraction(1, comb(k, m))
    demand_prior = Fraction(1, k - m)
    base = side_prior * demand_prior * _round1_factor(k, m)

    # state: (side, demands, chain block as frozenset, weight)
    states: list[tuple[frozenset[int], tuple[int, ...], frozenset[int], Fraction]] = []
    for block in round1.blocks:
        members = frozenset(block)
        for w in block:
            states.append((members - {w}, (w,), members, base))

    for rnd in transcript.rounds[1:]:
        query = rnd.query
        i = query.round_no
        prev_query = transcript.rounds[i - 2].query
        prev_sets = {frozenset(b) for b in prev_query.blocks}
        blocks = [frozenset(b) for b in query.blocks]
        # A block is a well-formed merge if it is the union of exactly two
        # previous-round blocks; hypotheses only differ in WHICH block is
        # the demand-chain merge, so precompute this once.
        well_formed = [
            sum(1 for p in prev_sets if p <= b) == 2
            and set().union(*(p for p in prev_sets if p <= b)) == b
            for b in blocks
        ]
        known_count = 2 ** (i - 2) * (m + 1)
        factor = Fraction(1, k - known_count) * _merge_factor(params.block_count(i - 1))

        next_states: list[
            tuple[frozenset[int], tuple[int, ...], frozenset[int], Fraction]
        ] = []
        for side, demands, chain, weight in states:
            merged = [bi for bi, b in enumerate(blocks) if chain <= b]
            if len(merged) != 1:
                continue
            d_index = merged[0]
            other = blocks[d_index] - chain
            if other not in prev_sets:
                continue
            if not all(well_formed[bi] for bi in range(len(blocks)) if bi != d_index):
                continue
            new_chain = blocks[d_index]
            new_weight = weight * factor
            for w in sorted(other):
                next_states.append((side, demands + (w,), new_chain, new_weight))
        states = next_states

    if not states:
        raise InconsistentTranscript(
            "no side-information and demand assignment explains this transcript"
        )
    return tuple(
        Hypothesis(side=s, demands=d, weight=wt) for s, d, _, wt in states
    )


def posterior(transcript: Transcript) -> PosteriorTable:
    """Exact Bayesian demand posteriors given everything the server saw."""
    hypotheses = enumerate_hypotheses(transcript)
    k = transcript.params.k
    t = len(transcript.rounds)
    total = sum(h.weight for h in hypotheses)
    rows = []
    for j in range(t):
        mass = [Fraction(0)] * k
        for h in hypotheses:
            mass[h.demands[j] - 1] += h.weight
        rows.append(tuple(p / total for p in mass))
    return PosteriorTable(k=k, rows=tuple(rows), hypothesis_count=len(hypotheses))


def capacity(k: int, m: int, round_no: int) -> Fraction:
    """Closed-form per-round rate: (M+1)/K at round 1, 2^(i-1)(M+1)/(KM) after."""
    if m < 1 or k <= m + 1 or k % (m + 1) != 0:
        raise InvalidParams(f"K/(M+1) must be a power of two >= 2: K={k}, M={m}")
    ratio = k // (m + 1)
    if ratio & (ratio - 1):
        raise InvalidParams(f"K/(M+1) must be a power of two >= 2: K={k}, M={m}")
    l = ratio.bit_length() - 1
    if not 1 <= round_no <= l + 1:
        raise RoundOutOfRange(f"round {round_no} outside 1..{l + 1}")
    if round_no == 1:
        return Fraction(m + 1, k)
    return Fraction(2 ** (round_no - 1) * (m + 1), k * m)


def capacity_table(k: int, m: int) -> tuple[tuple[int, Fraction], ...]:
    """(round, capacity) for every round the parameters support."""
    ratio = k // (m + 1) if m >= 1 and k % (m + 1) == 0 else 0
    if ratio < 2 or ratio & (ratio - 1):
        raise InvalidParams(f"K/(M+1) must be a power of two >= 2: K={k}, M={m}")
    l = ratio.bit_length() - 1
    return tuple((i, capacity(k, m, i)) for i in range(1, l + 2))


def measured_rate(transcript: Transcript, round_no: int) -> Fraction:
    """Achieved rate at a round: one message per packet downloaded."""
    if not 1 <= round_no <= len(transcript.rounds):
        raise ValueError(f"transcript has no round {round_no}")
    return Fraction(1, transcript.rounds[round_no - 1].download_cost)


def coefficient_matrix(transcript: Transcript, round_no: int) -> FieldMatrix:
    """Rebuild a round's packet coefficients as rows over messages 1..K."""
    if not 1 <= round_no <= len(transcript.rounds):
        raise ValueError(f"transcript has no round {round_no}")
    params = transcript.params
    cauchy = transcript.cauchy()
    query = transcript.rounds[round_no - 1].query
    columns = round_column_indices(params.m, params.l, round_no)
    rows = []
    for block in query.blocks:
        members = set(block)
        for col in columns:
            rows.append(
                [cauchy.coeff(idx, col) if idx in members else 0 for idx in range(1, params.k + 1)]
            )
    return FieldMatrix(params.field, rows)


def rank_profile(transcript: Transcript) -> tuple[tuple[int, int], ...]:
    """(round, rank of that round's coefficient matrix) for every round."""
    return tuple(
        (i, matrix_rank(coefficient_matrix(transcript, i)))
        for i in range(1, len(transcript.rounds) + 1)
    )


def expected_rank(k: int, m: int, round_no: int) -> int:
    """The download lower bound in packets: K/(M+1), then KM/(2^(i-1)(M+1))."""
    if round_no == 1:
        return k // (m + 1)
    return k * m // (2 ** (round_no - 1) * (m + 1))
