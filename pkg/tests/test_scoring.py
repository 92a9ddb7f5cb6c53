"""Scoring mechanisms vs naive references, identities, and invariances."""

import numpy as np
import pytest

from latevid import autodiff as ad
from latevid import kernels, scoring
from conftest import relative_error


def unit_rows(rng, r, c):
    x = rng.normal(size=(r, c))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def random_instance(rng, d=None, n=None, m=None, e=None):
    d = d or int(rng.integers(2, 65))
    n = n or int(rng.integers(1, 17))
    m = m or int(rng.integers(1, 33))
    e = e if e is not None else int(rng.integers(0, 5))
    qe = scoring.QueryEncoding(unit_rows(rng, m, d), true_length=int(rng.integers(1, m + 1)))
    fb = scoring.FrameBank(unit_rows(rng, n, d))
    vb = scoring.VideoBank(unit_rows(rng, n + e, d), expansion_count=e)
    return qe, fb, vb


# ---------------------------------------------------------------------------
# hand examples
# ---------------------------------------------------------------------------


def test_mp_hand_cases():
    fb = scoring.FrameBank(np.array([[1.0, 0.0], [0.0, 1.0]]))
    assert scoring.mp_score([1.0, 0.0], fb) == pytest.approx(0.5, abs=1e-12)
    single = scoring.FrameBank(np.array([[1.0, 0.0]]))
    assert scoring.mp_score([1.0, 0.0], single) == pytest.approx(1.0, abs=1e-12)


def test_mp_pooled_vector_not_renormalized():
    # pooled vector of two orthogonal unit frames has norm 1/sqrt(2)
    fb = scoring.FrameBank(np.array([[1.0, 0.0], [0.0, 1.0]]))
    q = [np.sqrt(0.5), np.sqrt(0.5)]
    assert scoring.mp_score(q, fb) == pytest.approx(np.sqrt(0.5), abs=1e-12)
    assert scoring.mp_score(q, fb, renormalize=True) == pytest.approx(1.0, abs=1e-12)


def test_sms_hand_case():
    qe = scoring.QueryEncoding(np.eye(2), true_length=2)
    fb = scoring.FrameBank(np.eye(2))
    assert scoring.sms_score(qe, fb) == pytest.approx(2.0, abs=1e-12)


def test_mms_f_hand_case():
    qe = scoring.QueryEncoding(np.eye(2), true_length=2)
    fb = scoring.FrameBank(np.array([[0.6, 0.8], [1.0, 0.0]]))
    assert scoring.mms_f(qe, fb) == pytest.approx(0.9, abs=1e-12)


def test_mms_f_single_token_is_max_cosine(rng):
    qe, fb, _ = random_instance(rng, m=1)
    expected = float((qe.tokens.data @ fb.frames.data.T).max())
    assert scoring.mms_f(qe, fb) == pytest.approx(expected, abs=1e-12)


def test_mms_v_equals_mms_f_without_expansion(rng):
    qe, fb, _ = random_instance(rng, e=0)
    vb = scoring.VideoBank(fb.frames.data.copy(), expansion_count=0)
    assert scoring.mms_v(qe, vb) == pytest.approx(scoring.mms_f(qe, fb), abs=0)


def test_duplicate_expansion_row_leaves_score_unchanged(rng):
    qe, _, vb = random_instance(rng)
    extended = scoring.VideoBank(
        np.vstack([vb.feats.data, vb.feats.data[:1]]), expansion_count=vb.expansion_count + 1
    )
    assert scoring.mms_v(qe, extended) == pytest.approx(scoring.mms_v(qe, vb), abs=1e-15)


def test_dim_mismatch_rejected(rng):
    qe, fb, vb = random_instance(rng, d=8)
    other = scoring.FrameBank(unit_rows(rng, 3, 4))
    with pytest.raises(ValueError, match="mismatch"):
        scoring.mms_f(qe, other)
    with pytest.raises(ValueError, match="mismatch"):
        scoring.mp_score(np.ones(4) / 2.0, fb)


# ---------------------------------------------------------------------------
# identities and invariances
# ---------------------------------------------------------------------------


def test_sms_is_m_times_mms(rng):
    for _ in range(20):
        qe, fb, _ = random_instance(rng)
        assert scoring.sms_score(qe, fb) == pytest.approx(
            qe.padded_length * scoring.mms_f(qe, fb), abs=1e-9
        )


def test_mms_fv_is_exact_sum(rng):
    for _ in range(20):
        qe, fb, vb = random_instance(rng)
        total = scoring.mms_fv(qe, fb, vb)
        assert total == pytest.approx(scoring.mms_f(qe, fb) + scoring.mms_v(qe, vb), abs=1e-12)
        assert -2.0 <= total <= 2.0


def test_frame_permutation_invariance(rng):
    qe, fb, vb = random_instance(rng)
    perm_f = scoring.FrameBank(fb.frames.data[rng.permutation(fb.frames.shape[0])])
    assert scoring.mms_f(qe, perm_f) == pytest.approx(scoring.mms_f(qe, fb), abs=1e-15)
    perm_v = scoring.VideoBank(
        vb.feats.data[rng.permutation(vb.feats.shape[0])], expansion_count=vb.expansion_count
    )
    assert scoring.mms_v(qe, perm_v) == pytest.approx(scoring.mms_v(qe, vb), abs=1e-15)


def test_one_directionality_row_growth_never_decreases(rng):
    for _ in range(20):
        qe, fb, vb = random_instance(rng)
        extra = unit_rows(rng, 1, qe.dim)
        grown = scoring.FrameBank(np.vstack([fb.frames.data, extra]))
        assert scoring.mms_f(qe, grown) >= scoring.mms_f(qe, fb) - 1e-15
        grown_v = scoring.VideoBank(
            np.vstack([vb.feats.data, extra]), expansion_count=vb.expansion_count
        )
        assert scoring.mms_v(qe, grown_v) >= scoring.mms_v(qe, vb) - 1e-15


def test_score_bounds_unit_inputs(rng):
    for _ in range(20):
        qe, fb, vb = random_instance(rng)
        assert -1.0 <= scoring.mms_f(qe, fb) <= 1.0
        assert -1.0 <= scoring.mms_v(qe, vb) <= 1.0
        m = qe.padded_length
        assert -m <= scoring.sms_score(qe, fb) <= m


# ---------------------------------------------------------------------------
# optimized vs naive reference
# ---------------------------------------------------------------------------


def test_optimized_matches_reference(rng):
    for _ in range(50):
        qe, fb, vb = random_instance(rng)
        q = qe.tokens.data
        assert abs(scoring.mms_f(qe, fb) - scoring.mms_score_ref(q, fb.frames.data)) < 1e-9
        assert abs(scoring.mms_v(qe, vb) - scoring.mms_score_ref(q, vb.feats.data)) < 1e-9
        assert abs(scoring.sms_score(qe, fb) - scoring.sms_score_ref(q, fb.frames.data)) < 1e-9
        assert (
            abs(scoring.mms_fv(qe, fb, vb) - scoring.mms_fv_score_ref(q, fb.frames.data, vb.feats.data))
            < 1e-9
        )
        qv = q[qe.true_length - 1]
        assert abs(scoring.mp_score(qv, fb) - scoring.mp_score_ref(qv, fb.frames.data)) < 1e-9


# ---------------------------------------------------------------------------
# corpus kernels (both backends) vs the pairwise forms
# ---------------------------------------------------------------------------


def pack(banks):
    feats = np.vstack(banks)
    starts = np.zeros(len(banks) + 1, dtype=np.int64)
    starts[1:] = np.cumsum([b.shape[0] for b in banks])
    return feats, starts


@pytest.mark.parametrize("backend", kernels.available_backends())
def test_corpus_kernels_match_pairwise(rng, backend):
    d = 16
    qe = scoring.QueryEncoding(unit_rows(rng, 7, d), true_length=5)
    banks = [unit_rows(rng, int(rng.integers(1, 9)), d) for _ in range(25)]
    feats, starts = pack(banks)

    mms = kernels.mms_scores(qe.tokens.data, feats, starts, backend=backend)
    sms = kernels.sms_scores(qe.tokens.data, feats, starts, backend=backend)
    qv = qe.tokens.data[qe.true_length - 1]
    mp = kernels.mp_scores(qv, feats, starts, backend=backend)

    for c, bank in enumerate(banks):
        fb = scoring.FrameBank(bank)
        assert abs(mms[c] - scoring.mms_f(qe, fb)) < 1e-9
        assert abs(sms[c] - scoring.sms_score(qe, fb)) < 1e-9
        assert abs(mp[c] - scoring.mp_score(qv, fb)) < 1e-9


def test_backends_agree(rng):
    if not kernels.HAVE_COMPILED:
        pytest.skip("compiled kernel not built")
    d = 12
    q = unit_rows(rng, 9, d)
    banks = [unit_rows(rng, int(rng.integers(1, 7)), d) for _ in range(40)]
    feats, starts = pack(banks)
    a = kernels.mms_scores(q, feats, starts, backend="compiled")
    b = kernels.mms_scores(q, feats, starts, backend="numpy")
    np.testing.assert_allclose(a, b, atol=1e-12)


def test_kernel_input_validation(rng):
    q = unit_rows(rng, 3, 4)
    feats = unit_rows(rng, 5, 4)
    with pytest.raises(ValueError, match="span"):
        kernels.mms_scores(q, feats, np.array([0, 3], dtype=np.int64))
    with pytest.raises(ValueError, match="mismatch"):
        kernels.mms_scores(unit_rows(rng, 3, 5), feats, np.array([0, 5], dtype=np.int64))


# ---------------------------------------------------------------------------
# batched similarity
# ---------------------------------------------------------------------------


def batch_inputs(rng, b_q=5, b_v=5, d=8, track=False):
    queries = [
        scoring.QueryEncoding(
            ad.tensor(unit_rows(rng, int(rng.integers(2, 7)), d), requires_grad=track),
            true_length=2,
        )
        for _ in range(b_q)
    ]
    videos = [
        (
            scoring.FrameBank(ad.tensor(unit_rows(rng, 4, d), requires_grad=track)),
            scoring.VideoBank(ad.tensor(unit_rows(rng, 6, d), requires_grad=track), expansion_count=2),
        )
        for _ in range(b_v)
    ]
    return queries, videos


def test_batch_single_pair_matches_pairwise(rng):
    queries, videos = batch_inputs(rng, b_q=1, b_v=1)
    for kind, fn in [
        (scoring.MMS_F, lambda q, v: scoring.mms_f(q, v[0])),
        (scoring.MMS_V, lambda q, v: scoring.mms_v(q, v[1])),
        (scoring.MMS_FV, lambda q, v: scoring.mms_fv(q, v[0], v[1])),
        (scoring.SMS, lambda q, v: scoring.sms_score(q, v[0])),
    ]:
        sim = scoring.batch_similarity(queries, videos, kind)
        assert sim.shape == (1, 1)
        assert sim.scores.data[0, 0] == pytest.approx(fn(queries[0], videos[0]), abs=1e-12)


def test_batch_entries_match_pairwise_5x5(rng):
    queries, videos = batch_inputs(rng)
    sim = scoring.batch_similarity(queries, videos, scoring.MMS_FV)
    for i, qe in enumerate(queries):
        for j, (fb, vb) in enumerate(videos):
            assert abs(sim.scores.data[i, j] - scoring.mms_fv(qe, fb, vb)) < 1e-9


def test_batch_fv_is_elementwise_sum(rng):
    queries, videos = batch_inputs(rng)
    s_f = scoring.batch_similarity(queries, videos, scoring.MMS_F).scores.data
    s_v = scoring.batch_similarity(queries, videos, scoring.MMS_V).scores.data
    s_fv = scoring.batch_similarity(queries, videos, scoring.MMS_FV).scores.data
    np.testing.assert_allclose(s_fv, s_f + s_v, atol=1e-15)


def test_batch_mp_uses_last_true_token(rng):
    queries, videos = batch_inputs(rng, b_q=2, b_v=2)
    sim = scoring.batch_similarity(queries, videos, scoring.MP)
    for i, qe in enumerate(queries):
        qv = qe.tokens.data[qe.true_length - 1]
        for j, (fb, _) in enumerate(videos):
            assert sim.scores.data[i, j] == pytest.approx(scoring.mp_score(qv, fb), abs=1e-12)


def test_batch_rejects_empty_and_mixed_dims(rng):
    queries, videos = batch_inputs(rng, b_q=2, b_v=2)
    with pytest.raises(ValueError, match="empty"):
        scoring.batch_similarity([], videos, scoring.MMS_F)
    bad = [(scoring.FrameBank(unit_rows(rng, 3, 5)), videos[0][1])]
    with pytest.raises(ValueError, match="dim"):
        scoring.batch_similarity(queries, bad, scoring.MMS_F)


def test_batch_gradients_match_finite_differences(rng):
    queries, videos = batch_inputs(rng, b_q=2, b_v=2, track=True)
    weight = ad.constant(rng.normal(size=(2, 2)))

    def objective(tokens):
        qs = [scoring.QueryEncoding.__new__(scoring.QueryEncoding) for _ in queries]
        # bypass norm validation: finite-difference probes are off-sphere
        for k, q in enumerate(qs):
            q.tokens = tokens if k == 0 else queries[k].tokens
            q.true_length = queries[k].true_length
        sim = scoring.batch_similarity(qs, videos, scoring.MMS_FV)
        return ad.sum_all(ad.mul(sim.scores, weight))

    objective(queries[0].tokens).backward()
    fd = ad.finite_diff_grad(objective, queries[0].tokens)
    assert relative_error(queries[0].tokens.grad, fd) < 1e-4
