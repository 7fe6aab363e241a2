import itertools
import math

import numpy as np
import pytest

from frameseq import crf
from frameseq.corpus import Corpus, Document
from frameseq.crf import (CrfExample, CrfHyper, CrfModel, ModelBank, TrainingDataError, TrainingExample,
                          forward_backward, log_partition_and_marginals, nll_and_gradient, potentials,
                          train_crf, train_multi, parse_multi, viterbi)
from frameseq.features import FeatureDictionary
from frameseq.synthetic import GeneratorConfig, generate

BIO_LABELS = ["O", "LU:F", "B:F:A", "I:F:A", "B:F:B", "I:F:B"]


def random_instance(rng, max_len=6, max_labels=5, with_bio=True, scale=1.5):
    T = int(rng.integers(1, max_len + 1))
    L = int(rng.integers(2, max_labels + 1))
    labels = (BIO_LABELS[:L] if with_bio and rng.random() < 0.5 else [f"Y{i}" for i in range(L)])
    n_feat = 6
    fdict = FeatureDictionary([f"f{i}" for i in range(n_feat)]).close()
    model = CrfModel(labels, fdict, rng.normal(0, scale, (n_feat, len(labels))),
                     rng.normal(0, scale, (len(labels), len(labels))))
    feats = [np.sort(rng.choice(n_feat, size=int(rng.integers(1, 4)), replace=False)) for _ in range(T)]
    trigger = int(rng.integers(0, T)) if "LU:F" in labels and rng.random() < 0.5 else None
    return model, CrfExample(feats, None, trigger)


def brute_force(model, ex):
    E, Tr = potentials(model, ex)
    T, L = E.shape
    scores = {}
    for path in itertools.product(range(L), repeat=T):
        s = crf.path_score(E, Tr, path)
        if np.isfinite(s):
            scores[path] = s
    vals = np.array(list(scores.values()))
    logZ = float(np.log(np.sum(np.exp(vals - vals.max()))) + vals.max())
    marg = np.zeros((T, L))
    for path, s in scores.items():
        for t, y in enumerate(path):
            marg[t, y] += math.exp(s - logZ)
    best = max(scores.values())
    # itertools.product enumerates in lexicographic order: first maximal path wins
    best_path = next(p for p, s in scores.items() if s == best)
    return logZ, marg, list(best_path), scores


def test_uniform_single_token():
    fdict = FeatureDictionary(["BIAS"]).close()
    model = CrfModel.zeros(["O", "Y"], fdict)
    logZ, marg, pair = log_partition_and_marginals(model, CrfExample([np.array([0])], None))
    assert logZ == pytest.approx(math.log(2))
    assert marg[0].tolist() == pytest.approx([0.5, 0.5])
    assert pair.shape == (0, 2, 2)


def test_zero_weights_viterbi_takes_lowest_labels():
    fdict = FeatureDictionary(["BIAS"]).close()
    model = CrfModel.zeros(["O", "Y", "Z"], fdict)
    labels, score = viterbi(model, CrfExample([np.array([0])] * 4, None))
    assert labels == ["O"] * 4 and score == 0.0


def test_brute_force_oracle():
    rng = np.random.default_rng(7)
    for _ in range(100):
        model, ex = random_instance(rng)
        logZ, marg, pair = log_partition_and_marginals(model, ex)
        blogZ, bmarg, bpath, scores = brute_force(model, ex)
        assert abs(logZ - blogZ) < 1e-8
        assert np.max(np.abs(marg - bmarg)) < 1e-8
        assert np.allclose(marg.sum(axis=1), 1.0, atol=1e-9)
        path, score = crf.viterbi_decode(*potentials(model, ex))
        assert path == bpath
        assert logZ >= max(scores.values())
        # pairwise marginals are consistent with token marginals
        if len(pair):
            assert np.allclose(pair.sum(axis=2), marg[:-1], atol=1e-8)
            assert np.allclose(pair.sum(axis=1), marg[1:], atol=1e-8)


def test_viterbi_tie_break_earliest_position():
    # two labels, scores tied between [0,1] and [1,0]; lexicographic order picks [0,1]
    fdict = FeatureDictionary(["a"]).close()
    model = CrfModel(["Y0", "Y1"], fdict, np.zeros((1, 2)), np.array([[-5.0, 0.0], [0.0, -5.0]]))
    labels, _ = viterbi(model, CrfExample([np.array([0])] * 2, None))
    assert labels == ["Y0", "Y1"]


def test_masks_forbid_orphan_inside_and_misplaced_lu():
    fdict = FeatureDictionary(["a"]).close()
    W = np.zeros((1, len(BIO_LABELS)))
    W[0, BIO_LABELS.index("I:F:A")] = 50.0
    W[0, BIO_LABELS.index("LU:F")] = 40.0
    model = CrfModel(BIO_LABELS, fdict, W, np.zeros((6, 6)))
    labels, _ = viterbi(model, CrfExample([np.array([0])] * 3, None, trigger=1))
    assert labels[0] != "I:F:A"
    assert labels[1] in ("O", "LU:F")
    assert "LU:F" not in (labels[0], labels[2])


def test_strong_gold_weights_recover_gold():
    fdict = FeatureDictionary(["w0", "w1", "w2", "w3"]).close()
    gold = ["B:F:A", "I:F:A", "LU:F", "O"]
    W = np.zeros((4, len(BIO_LABELS)))
    for t, g in enumerate(gold):
        W[t, BIO_LABELS.index(g)] = 10.0
    model = CrfModel(BIO_LABELS, fdict, W, np.zeros((6, 6)))
    ex = CrfExample([np.array([t]) for t in range(4)], None, trigger=2)
    assert viterbi(model, ex)[0] == gold


def numeric_gradient(model, examples, l2, eps=1e-5):
    out = []
    for arr in (model.emission, model.transition):
        g = np.zeros_like(arr)
        for idx in np.ndindex(arr.shape):
            old = arr[idx]
            arr[idx] = old + eps
            up = nll_and_gradient(model, examples, l2)[0]
            arr[idx] = old - eps
            down = nll_and_gradient(model, examples, l2)[0]
            arr[idx] = old
            g[idx] = (up - down) / (2 * eps)
        out.append(g)
    return out


def rel_error(a, n):
    denom = np.linalg.norm(a) + np.linalg.norm(n)
    return 0.0 if denom == 0 else np.linalg.norm(a - n) / denom


def random_gold(rng, model, ex):
    """Sample a gold path consistent with the masks from the model's own distribution."""
    E, Tr = potentials(model, ex)
    path = crf.viterbi_decode(E, Tr)[0]
    return ex._replace(gold=np.array(path, dtype=np.int64))


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(20):
        model, ex = random_instance(rng, max_len=4, max_labels=4, scale=0.5)
        ex = random_gold(rng, model, ex)
        _, (gW, gT) = nll_and_gradient(model, ex, l2=0.1)
        nW, nT = numeric_gradient(model, ex, 0.1)
        worst = max(worst, rel_error(gW, nW), rel_error(gT, nT))
    assert worst < 1e-4


def test_uniform_nll_is_t_log_l():
    fdict = FeatureDictionary(["a"]).close()
    model = CrfModel.zeros(["Y0", "Y1", "Y2"], fdict)
    ex = CrfExample([np.array([0])] * 5, np.array([0, 1, 2, 1, 0]))
    nll, _ = nll_and_gradient(model, ex, l2=0.0)
    assert nll == pytest.approx(5 * math.log(3))


def test_duplicated_example_doubles_data_gradient():
    rng = np.random.default_rng(11)
    model, ex = random_instance(rng, max_len=5)
    ex = random_gold(rng, model, ex)
    _, (g1W, g1T) = nll_and_gradient(model, [ex], l2=0.0)
    _, (g2W, g2T) = nll_and_gradient(model, [ex, ex], l2=0.0)
    assert np.array_equal(g2W, 2 * g1W) and np.array_equal(g2T, 2 * g1T)


def test_gold_outside_label_set_names_sentence():
    fdict = FeatureDictionary(["a"])
    model = CrfModel.zeros(["O", "LU:F"], fdict)
    with pytest.raises(TrainingDataError, match="sentence d1:0"):
        model.example([("a",)], ["B:G:X"], name="sentence d1:0")


def toy_examples():
    feats = [("BIAS", "L=john"), ("BIAS", "L=decide", "TRIGGER"), ("BIAS", "L=to"), ("BIAS", "L=go")]
    gold = ["B:Deciding:Cognizer", "LU:Deciding", "B:Deciding:Decision", "I:Deciding:Decision"]
    return [TrainingExample(feats, gold, 1, f"toy{i}") for i in range(20)]


TOY_LABELS = ["O", "LU:Deciding", "B:Deciding:Cognizer", "B:Deciding:Decision",
              "I:Deciding:Cognizer", "I:Deciding:Decision"]


def test_training_converges_on_separable_toy():
    model = train_crf(toy_examples(), TOY_LABELS, CrfHyper(epochs=50, l2=0.0, lr=0.5, seed=1))
    assert model.history[-1] < 0.01 * 4
    ex = model.example(toy_examples()[0].features, trigger=1)
    assert viterbi(model, ex)[0] == toy_examples()[0].labels


def test_training_objective_trends_down_and_is_deterministic():
    hyper = CrfHyper(epochs=15, seed=5)
    a = train_crf(toy_examples(), TOY_LABELS, hyper)
    b = train_crf(toy_examples(), TOY_LABELS, hyper)
    assert a.history == b.history
    assert np.array_equal(a.emission, b.emission)
    h = a.history
    assert all(h[i + 1] <= h[i] * 1.05 + 1e-9 for i in range(len(h) - 1))


def test_large_l2_shrinks_toward_uniform():
    free = train_crf(toy_examples(), TOY_LABELS, CrfHyper(epochs=10, l2=0.0, lr=0.01))
    model = train_crf(toy_examples(), TOY_LABELS, CrfHyper(epochs=10, l2=50.0, lr=0.01))
    assert np.max(np.abs(model.emission)) < 0.1 * np.max(np.abs(free.emission))
    _, marg, _ = log_partition_and_marginals(model, model.example(toy_examples()[0].features))
    assert np.max(marg) < 0.5


def test_empty_training_rejected():
    with pytest.raises(TrainingDataError):
        train_crf([], TOY_LABELS)


@pytest.fixture(scope="module")
def small_run():
    corpus = generate(GeneratorConfig(seed=3, n_documents=12, sentences_per_doc=8))
    bank = train_multi(corpus, CrfHyper(epochs=8))
    return corpus, bank


def test_bank_has_one_model_per_seen_lemma(small_run):
    corpus, bank = small_run
    seen = {t.lemma for _, s in corpus.sentences() for t in s.tokens if t.lemma in corpus.lu_lexicon}
    assert set(bank.models) == seen
    for lemma, model in bank.models.items():
        frames = {l.split(":")[1] for l in model.labels if l.startswith("LU:")}
        assert frames == set(corpus.lu_lexicon[lemma])
        assert "O" in model.labels
        assert np.all(np.isfinite(model.emission))


def test_two_lemma_sentence_lands_in_both_subcorpora():
    corpus = generate(GeneratorConfig(seed=2, n_documents=10, sentences_per_doc=6))
    for _, sent in corpus.sentences():
        lemmas = sorted({t.lemma for t in sent.tokens if t.lemma in corpus.lu_lexicon})
        if len(lemmas) >= 2:
            break
    else:
        pytest.skip("no sentence with two lexicon lemmas")
    one = Corpus((Document("d", "s", (sent,)),), corpus.lu_lexicon)
    bank = train_multi(one, CrfHyper(epochs=1))
    assert set(lemmas) <= set(bank.models)


def test_parse_threshold_monotone_and_limits(small_run):
    corpus, bank = small_run
    sents = [s for _, s in corpus.sentences()][:30]
    for sent in sents:
        prev = None
        for thr in (0.0, 0.3, 0.6, 0.9, 1.0 + 1e-12):
            cols = {c.labels for c in parse_multi(bank, sent, thr)}
            if prev is not None:
                assert cols <= prev
            prev = cols
        assert prev == set()


def test_parse_sentence_without_lexicon_lemma(small_run):
    corpus, bank = small_run
    from collections import Counter
    sent = next(s for _, s in corpus.sentences())
    stripped = sent.__class__(tuple(t.__class__(t.index, t.surface, "zzz", t.pos, t.head, t.deprel)
                                    for t in sent.tokens), ())
    cov = Counter()
    assert parse_multi(bank, stripped, 0.0, cov) == []


def test_bank_round_trip(tmp_path, small_run):
    corpus, bank = small_run
    path = tmp_path / "bank.json"
    bank.save(path)
    loaded = ModelBank.load(path)
    assert set(loaded.models) == set(bank.models)
    for sent in [s for _, s in corpus.sentences()][:10]:
        assert parse_multi(loaded, sent, 0.0) == parse_multi(bank, sent, 0.0)
