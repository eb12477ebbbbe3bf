import numpy as np
import pytest

from stepseg.embedding import (
    EmbeddingWeights,
    FeatureCorpus,
    init_weights,
    ranking_loss,
    ranking_loss_grad,
    score_matrix,
    scores,
    standardize,
    train_embedding,
)
from stepseg.errors import InputError


def random_instance(rng, v=None, e=None, k=None, n=None):
    v = v or int(rng.integers(1, 9))
    e = e or int(rng.integers(1, 9))
    k = k or int(rng.integers(2, 9))
    n = n or int(rng.integers(1, 17))
    weights = EmbeddingWeights(
        w_f=rng.normal(size=(e, v)),
        w_a=rng.normal(size=(e, k)),
        margin=float(rng.uniform(0.1, 2.0)),
        l2=float(rng.uniform(0.0, 0.01)),
    )
    batch = [(rng.normal(size=v), int(rng.integers(1, k + 1))) for _ in range(n)]
    return weights, batch


def fd_gradients(weights, batch, h=1e-5):
    """Central finite differences of ranking_loss over both weight matrices."""
    grads = []
    for name in ("w_f", "w_a"):
        mat = getattr(weights, name)
        g = np.zeros_like(mat)
        for idx in np.ndindex(mat.shape):
            orig = mat[idx]
            mat[idx] = orig + h
            hi = ranking_loss(weights, batch)
            mat[idx] = orig - h
            lo = ranking_loss(weights, batch)
            mat[idx] = orig
            g[idx] = (hi - lo) / (2 * h)
        grads.append(g)
    return grads


class TestScores:
    def test_identity_maps(self):
        w = EmbeddingWeights(w_f=np.eye(3), w_a=np.eye(3))
        x = np.array([0.5, -1.0, 2.0])
        assert np.allclose(scores(w, x), x)

    def test_zero_projection(self):
        w = EmbeddingWeights(w_f=np.zeros((2, 4)), w_a=np.ones((2, 3)))
        assert np.allclose(scores(w, np.ones(4)), 0.0)

    def test_hand_multiply(self):
        w = EmbeddingWeights(
            w_f=np.array([[1.0, 0.0], [0.0, 2.0]]),
            w_a=np.array([[1.0, 1.0], [0.0, 1.0]]),
        )
        assert np.allclose(scores(w, np.array([1.0, 1.0])), [1.0, 3.0])

    def test_linear(self):
        rng = np.random.default_rng(3)
        w, _ = random_instance(rng, v=5, e=4, k=3, n=1)
        x, y = rng.normal(size=5), rng.normal(size=5)
        a, b = 1.7, -0.4
        assert np.allclose(
            scores(w, a * x + b * y), a * scores(w, x) + b * scores(w, y), atol=1e-9
        )

    def test_dimension_mismatch(self):
        w = EmbeddingWeights(w_f=np.eye(3), w_a=np.eye(3))
        with pytest.raises(InputError):
            scores(w, np.ones(4))

    def test_batch_matches_single(self):
        rng = np.random.default_rng(4)
        w, batch = random_instance(rng, n=6)
        xs = np.asarray([b[0] for b in batch])
        stacked = score_matrix(w, xs)
        for row, (x, _) in zip(stacked, batch):
            assert np.allclose(row, scores(w, x), atol=1e-10)


class TestRankingLoss:
    def test_satisfied_margin(self):
        w = EmbeddingWeights(w_f=np.eye(2), w_a=np.eye(2), margin=1.0, l2=0.0)
        # scores of x=[2,0] are [2,0]; wrong anchor trails by 2 > margin
        assert ranking_loss(w, [(np.array([2.0, 0.0]), 1)]) == 0.0

    def test_single_violation(self):
        w = EmbeddingWeights(w_f=np.eye(2), w_a=np.eye(2), margin=1.0, l2=0.0)
        loss = ranking_loss(w, [(np.array([0.5, 0.2]), 2)])
        assert loss == pytest.approx(1.3)

    def test_regularizer_only(self):
        w = EmbeddingWeights(w_f=2 * np.eye(2), w_a=np.eye(2), margin=1.0, l2=0.5)
        # big margin satisfied by construction
        loss = ranking_loss(w, [(np.array([10.0, 0.0]), 1)])
        assert loss == pytest.approx(0.5 * (8.0 + 2.0))

    def test_label_out_of_range(self):
        w = EmbeddingWeights(w_f=np.eye(2), w_a=np.eye(2))
        with pytest.raises(InputError):
            ranking_loss(w, [(np.ones(2), 3)])
        with pytest.raises(InputError):
            ranking_loss(w, [(np.ones(2), 0)])


class TestRankingLossGrad:
    def test_zero_loss_zero_grad(self):
        w = EmbeddingWeights(w_f=np.eye(2), w_a=np.eye(2), margin=0.5, l2=0.0)
        gf, ga = ranking_loss_grad(w, [(np.array([5.0, 0.0]), 1)])
        assert np.allclose(gf, 0.0) and np.allclose(ga, 0.0)

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(42)
        for _ in range(50):
            w, batch = random_instance(rng)
            gf, ga = ranking_loss_grad(w, batch)
            fd_f, fd_a = fd_gradients(w, batch)
            scale = max(np.abs(fd_f).max(), np.abs(fd_a).max(), 1.0)
            assert np.abs(gf - fd_f).max() / scale < 1e-4
            assert np.abs(ga - fd_a).max() / scale < 1e-4

    def test_regularizer_gradient_linear_in_l2(self):
        w1 = EmbeddingWeights(w_f=np.eye(2), w_a=np.eye(2), margin=0.5, l2=0.1)
        w2 = EmbeddingWeights(w_f=np.eye(2), w_a=np.eye(2), margin=0.5, l2=0.2)
        batch = [(np.array([5.0, 0.0]), 1)]  # no hinge activity
        g1 = ranking_loss_grad(w1, batch)
        g2 = ranking_loss_grad(w2, batch)
        assert np.allclose(2 * g1[0], g2[0]) and np.allclose(2 * g1[1], g2[1])


def separable_batch(rng, n_per=60, noise=0.1):
    xs, labels = [], []
    for label, center in ((1, np.array([5.0, 0.0])), (2, np.array([-5.0, 0.0]))):
        xs.append(center + noise * rng.normal(size=(n_per, 2)))
        labels.append(np.full(n_per, label))
    return np.concatenate(xs), np.concatenate(labels)


class TestTrainEmbedding:
    def test_separable_clusters_classified(self):
        rng = np.random.default_rng(0)
        xs, labels = separable_batch(rng)
        w = train_embedding(xs, labels, 2, rng, embed_dim=2, epochs=20, batch_size=32)
        pred = np.argmax(score_matrix(w, xs), axis=1) + 1
        assert np.mean(pred == labels) == 1.0

    def test_loss_decreases(self):
        rng = np.random.default_rng(1)
        xs, labels = separable_batch(rng)
        w0 = init_weights(2, 2, 2, margin=1.0, l2=1e-4, rng=np.random.default_rng(1))
        batch = list(zip(xs, labels))
        before = ranking_loss(w0, batch)
        w = train_embedding(
            xs, labels, 2, rng, embed_dim=2, epochs=12, init=w0
        )
        assert ranking_loss(w, batch) <= before

    def test_degenerate_single_label(self):
        rng = np.random.default_rng(2)
        xs = rng.normal(size=(80, 3))
        labels = np.ones(80, dtype=int)
        w = train_embedding(xs, labels, 2, rng, embed_dim=4, epochs=30, batch_size=40)
        batch = list(zip(xs, labels))
        reg = w.l2 * (np.sum(w.w_f**2) + np.sum(w.w_a**2))
        assert ranking_loss(w, batch) == pytest.approx(reg, abs=0.5)

    def test_deterministic(self):
        base = np.random.default_rng(9)
        xs, labels = separable_batch(base)
        w1 = train_embedding(xs, labels, 2, np.random.default_rng(5), embed_dim=3, epochs=3)
        w2 = train_embedding(xs, labels, 2, np.random.default_rng(5), embed_dim=3, epochs=3)
        assert np.array_equal(w1.w_f, w2.w_f) and np.array_equal(w1.w_a, w2.w_a)

    def test_full_batch_monotone(self):
        rng = np.random.default_rng(3)
        xs, labels = separable_batch(rng, n_per=20)
        xs = xs / np.abs(xs).max()  # unit-scale data
        w = init_weights(2, 2, 2, margin=1.0, l2=1e-4, rng=rng)
        batch = list(zip(xs, labels))
        losses = [ranking_loss(w, batch)]
        for _ in range(25):
            w = train_embedding(
                xs, labels, 2, rng,
                learning_rate=1e-3, momentum=0.0, epochs=1, batch_size=len(batch),
                init=w,
            )
            losses.append(ranking_loss(w, batch))
        assert all(b <= a + 1e-12 for a, b in zip(losses, losses[1:]))

    def test_empty_training_set(self):
        with pytest.raises(InputError):
            train_embedding(np.zeros((0, 3)), np.zeros(0, dtype=int), 2, np.random.default_rng(0))


class TestCorpusHandling:
    def test_standardize(self):
        rng = np.random.default_rng(6)
        corpus = FeatureCorpus(
            ids=["a", "b"],
            videos=[rng.normal(3.0, 2.0, size=(40, 4)), rng.normal(-1.0, 0.5, size=(25, 4))],
        )
        std = standardize(corpus)
        stacked = np.concatenate(std.videos)
        assert np.allclose(stacked.mean(axis=0), 0.0, atol=1e-12)
        assert np.allclose(stacked.std(axis=0), 1.0, atol=1e-12)

    def test_standardize_constant_dimension(self):
        corpus = FeatureCorpus(ids=["a"], videos=[np.ones((5, 2))])
        std = standardize(corpus)
        assert np.allclose(std.videos[0], 0.0)

    def test_corpus_validation(self):
        with pytest.raises(InputError):
            FeatureCorpus(ids=["a", "b"], videos=[np.ones((2, 3)), np.ones((2, 4))])
        with pytest.raises(InputError):
            FeatureCorpus(ids=["a"], videos=[np.full((2, 2), np.nan)])
