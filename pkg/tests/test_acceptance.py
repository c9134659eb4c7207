"""Acceptance gate: one test per release criterion, time budgets included.

Each test is self-contained and pins its tolerances inline; `pytest -v`
prints exactly one pass/fail line per criterion.  All equality checks are
exact (integers or rationals), never approximate.
"""

import dataclasses
import itertools
import threading
import time
from fractions import Fraction

import pytest

from opir import (
    Client,
    Database,
    DemandKnown,
    FieldTooSmall,
    InconsistentTranscript,
    MalformedQuery,
    PartitionQuery,
    ProtocolParams,
    RoundsExhausted,
    Server,
    SideInformation,
    SingularSystem,
    build_cauchy,
    capacity,
    create_server,
    matrix_rank,
    measured_rate,
    posterior,
    rank_profile,
    round_column_indices,
    run_remote_session,
    run_session,
)
from opir.wire import transcript_from_bytes, transcript_to_bytes
from conftest import (
    GOLDEN_MATRIX,
    GOLDEN_SEED,
    GRID,
    counting_database,
    random_session,
)

# Expected packets for the fixed 12-message session with S={2,3} and
# demands (1,4,7): (support, coding column, coefficients) per round.
# Coefficients are the column slices of the 12x5 matrix in conftest.
GOLDEN_PACKETS = {
    1: (
        ((1, 2, 3), 1, (7, 3, 5)),
        ((4, 5, 6), 1, (15, 2, 12)),
        ((7, 8, 9), 1, (14, 10, 4)),
        ((10, 11, 12), 1, (11, 8, 16)),
    ),
    2: (
        ((1, 2, 3, 4, 5, 6), 2, (13, 7, 3, 5, 15, 2)),
        ((1, 2, 3, 4, 5, 6), 3, (6, 13, 7, 3, 5, 15)),
        ((7, 8, 9, 10, 11, 12), 2, (12, 14, 10, 4, 11, 8)),
        ((7, 8, 9, 10, 11, 12), 3, (2, 12, 14, 10, 4, 11)),
    ),
    3: (
        (tuple(range(1, 13)), 4, (9, 6, 13, 7, 3, 5, 15, 2, 12, 14, 10, 4)),
        (tuple(range(1, 13)), 5, (1, 9, 6, 13, 7, 3, 5, 15, 2, 12, 14, 10)),
    ),
}


def test_criterion_1_golden_session_reproduction():
    """Fixed 12-message run reproduces every pinned packet; budget 1 s."""
    start = time.perf_counter()
    params = ProtocolParams.create(12, 2, q=17, symbols=1)
    database = counting_database()  # message k holds the value k
    result = run_session(params, database, [2, 3], [1, 4, 7], seed=GOLDEN_SEED)

    # all 60 coding entries
    cauchy = result.transcript.cauchy()
    for i in range(1, 13):
        for j in range(1, 6):
            assert cauchy.coeff(i, j) == GOLDEN_MATRIX[i - 1][j - 1], (i, j)

    # the serialized answers, as they crossed the wire
    transcript = transcript_from_bytes(transcript_to_bytes(result.transcript))
    assert len(transcript.rounds) == 3
    for round_no, wanted in GOLDEN_PACKETS.items():
        rnd = transcript.rounds[round_no - 1]
        columns = round_column_indices(params.m, params.l, round_no)
        got = {}
        packets = iter(rnd.answer.packets)
        for block in rnd.query.blocks:
            for col in columns:
                got[(block, col)] = next(packets)[0]
        assert len(got) == len(wanted)
        for support, col, coeffs in wanted:
            # support and coefficients pin the packet; the value follows
            assert coeffs == tuple(GOLDEN_MATRIX[i - 1][col - 1] for i in support)
            value = sum(c * x for c, x in zip(coeffs, support)) % 17
            assert got[(support, col)] == value, (support, col)

    elapsed = time.perf_counter() - start
    assert elapsed < 1.0, f"budget 1 s, took {elapsed:.2f} s"


def test_criterion_2_per_round_rate_equals_capacity():
    """Grid x 100 seeds: measured rate is exactly the capacity; budget 30 s."""
    start = time.perf_counter()
    for k, m in GRID:
        for seed in range(100):
            _, _, _, _, result = random_session(k, m, seed)
            transcript = result.transcript
            assert len(transcript.rounds) == transcript.params.max_rounds
            for i in range(1, len(transcript.rounds) + 1):
                assert measured_rate(transcript, i) == capacity(k, m, i), (
                    k, m, seed, i,
                )
    elapsed = time.perf_counter() - start
    assert elapsed < 30.0, f"budget 30 s, took {elapsed:.2f} s"


def test_criterion_3_posterior_exactly_uniform():
    """Grid x 20 transcripts: every demand posterior is exactly 1/K; budget 5 min."""
    start = time.perf_counter()
    for k, m in GRID:
        uniform = Fraction(1, k)
        for seed in range(20):
            _, _, _, _, result = random_session(k, m, seed)
            table = posterior(result.transcript)
            assert table.rounds == len(result.transcript.rounds)
            for j in range(1, table.rounds + 1):
                row = table.row(j)
                assert len(row) == k
                assert all(p == uniform for p in row), (k, m, seed, j)
    elapsed = time.perf_counter() - start
    assert elapsed < 300.0, f"budget 5 min, took {elapsed:.2f} s"


def test_criterion_4_recoverability_never_fails():
    """1000 random sessions decode the whole database, no singular systems; budget 1 min."""
    start = time.perf_counter()
    sessions = 0
    for k, m in GRID:
        for seed in range(200):
            try:
                _, database, side_indices, _, result = random_session(
                    k, m, seed, symbols=1 + seed % 3
                )
            except SingularSystem as exc:  # pragma: no cover - must not happen
                pytest.fail(f"decode raised SingularSystem at {(k, m, seed)}: {exc}")
            known = {i: database.message(i) for i in side_indices}
            for recovered in result.recovered:
                for index, value in recovered.items():
                    assert value == database.message(index), (k, m, seed, index)
                    known[index] = value
            # after the last round every message is accounted for
            assert known == {i: database.message(i) for i in range(1, k + 1)}
            sessions += 1
    assert sessions == 1000
    elapsed = time.perf_counter() - start
    assert elapsed < 60.0, f"budget 1 min, took {elapsed:.2f} s"


def test_criterion_5_answer_rank_matches_bound():
    """Grid x 100 seeds: per-round answer rank hits K/(M+1), KM/(2(M+1)), ...; budget 30 s."""
    start = time.perf_counter()
    for k, m in GRID:
        l = (k // (m + 1)).bit_length() - 1
        rounds = l + 1
        bound = [k // (m + 1)]
        for i in range(2, rounds + 1):
            bound.append(k * m // (2 ** (i - 1) * (m + 1)))
        for seed in range(100):
            _, _, _, _, result = random_session(k, m, seed)
            profile = rank_profile(result.transcript)
            assert profile == tuple(
                (i, bound[i - 1]) for i in range(1, rounds + 1)
            ), (k, m, seed)
    elapsed = time.perf_counter() - start
    assert elapsed < 30.0, f"budget 30 s, took {elapsed:.2f} s"


def test_criterion_6_every_square_submatrix_invertible():
    """Exhaustive 3x3 minors of the 12x5 matrix over F_17; budget 30 s."""
    start = time.perf_counter()
    cauchy = build_cauchy(12, 2, 2, q=17)
    checked = 0
    for rows in itertools.combinations(range(12), 3):
        for cols in itertools.combinations(range(5), 3):
            sub = cauchy.matrix.submatrix(rows, cols)
            assert matrix_rank(sub) == 3, (rows, cols)
            checked += 1
    assert checked == 220 * 10  # C(12,3) * C(5,3)
    elapsed = time.perf_counter() - start
    assert elapsed < 30.0, f"budget 30 s, took {elapsed:.2f} s"


def test_criterion_7_loopback_equals_in_process():
    """20 seeds: TCP transcript is byte-identical to the in-process one; budget 30 s."""
    start = time.perf_counter()
    for seed in range(20):
        k, m = GRID[seed % len(GRID)]
        params, database, side_indices, demands, local = random_session(k, m, seed)
        server = create_server(database, params)
        thread = threading.Thread(
            target=lambda: server.serve_forever(poll_interval=0.05), daemon=True
        )
        thread.start()
        try:
            side = SideInformation.from_database(database, side_indices)
            remote = run_remote_session(
                server.server_address, side, demands, seed=seed
            )
        finally:
            server.shutdown()
            server.server_close()
            thread.join(timeout=5)
        assert transcript_to_bytes(remote.transcript) == transcript_to_bytes(
            local.transcript
        ), (k, m, seed)
        assert remote.recovered == local.recovered
    elapsed = time.perf_counter() - start
    assert elapsed < 30.0, f"budget 30 s, took {elapsed:.2f} s"


def test_criterion_8_negative_paths():
    """Each failure mode fires from its own minimal fixture."""
    # demanding a message the client already holds
    params = ProtocolParams.create(12, 2, q=17)
    database = counting_database()
    side = SideInformation.from_database(database, [2, 3])
    client = Client(params, side, build_cauchy(12, 2, 2, 17), seed=0)
    with pytest.raises(DemandKnown):
        client.build_query(3)

    # asking for a round past the schedule
    server = Server(database, params)
    client = Client(params, side, server.cauchy, seed=GOLDEN_SEED)
    for demand in (1, 4, 7):
        client.decode_answer(server.answer(client.build_query(demand)))
    with pytest.raises(RoundsExhausted):
        client.build_query(10)

    # a query whose blocks have the wrong shape for round 1
    with pytest.raises(MalformedQuery):
        Server(database, params).answer(
            PartitionQuery.of(1, [tuple(range(1, 13))])
        )

    # a modulus with no room for K + Ml + 1 coding points
    with pytest.raises(FieldTooSmall):
        build_cauchy(12, 2, 2, q=13)

    # a transcript whose rounds cannot come from any (side set, demands) pair
    honest = run_session(params, database, [2, 3], [1, 4, 7], seed=GOLDEN_SEED)
    first = honest.transcript.rounds[0]
    blocks = [list(b) for b in first.query.blocks]
    blocks[0][0], blocks[1][0] = blocks[1][0], blocks[0][0]
    tampered = dataclasses.replace(
        honest.transcript,
        rounds=(
            dataclasses.replace(first, query=PartitionQuery.of(1, blocks)),
        ) + honest.transcript.rounds[1:],
    )
    with pytest.raises(InconsistentTranscript):
        posterior(tampered)
