"""Fast built-in example assertions run by ``mart selftest``.

Each check is small enough that the whole suite finishes in well under a
minute on one core. Long-running properties (training runs, full gradient
checks) live in the test suite instead.
"""

import io
import os
import tempfile
import time

import numpy as np

import mart.diffcore as dc
from mart.dsp.augment import AugmentationConfig, add_noise, augment
from mart.dsp import spectral as sp
from mart.dsp.synth import SynthConfig, synth_corpus, write_corpus
from mart.dsp.wav import AudioBuffer, load_wav, resample, write_wav
from mart.errors import MartError
from mart.eval.metrics import average_precision_at_ranks, pr_auc, retrieval_scores, roc_auc
from mart.hac import build_tree, clip_len_ratio, enumerate_pairs
from mart.loss import ContrastiveBatch, hierarchical_loss, negative_terms, part_whole_terms
from mart.model import HierState, InteractionUnit, ProjectionHead, cross_attend, pwt_stack

CHECKS = []


def check(fn):
    CHECKS.append(fn)
    return fn


def _ok(cond, msg):
    if not cond:
        raise AssertionError(msg)


def _close(a, b, tol, msg):
    _ok(np.allclose(a, b, rtol=0, atol=tol), f"{msg}: {a} vs {b}")


def _t(x):
    return dc.Tensor(np.asarray(x, dtype=np.float64), requires_grad=True)


@check
def matmul_examples():
    a = np.array([[1.0, 2.0], [3.0, 4.0]])
    _close(dc.matmul(_t(np.eye(2)), _t(a)).data, a, 0, "identity product")
    _close(dc.matmul(_t([[1, 2]]), _t([[3], [4]])).data, [[11]], 0, "dot product")
    b = _t(np.random.default_rng(0).normal(size=(3, 2)))
    x = _t(np.random.default_rng(1).normal(size=(2, 3)))
    _ok(dc.grad_check(lambda: dc.sum(dc.matmul(x, b)), [x, b]).passed, "matmul gradient")


@check
def softmax_examples():
    _close(dc.softmax(_t([0.0, 0.0])).data, [0.5, 0.5], 0, "uniform")
    _close(dc.softmax(_t([1000.0, 1000.0])).data, [0.5, 0.5], 0, "large inputs")
    _close(dc.softmax(_t([0.0, np.log(3.0)])).data, [0.25, 0.75], 1e-12, "ln 3")


@check
def elementwise_examples():
    _close(dc.relu(_t([-1.0, 2.0])).data, [0, 2], 0, "relu")
    x = _t([1.0, 2.0])
    with dc.Tape() as tape:
        y = dc.sum(x * x)
    tape.backward(y)
    _close(x.grad, [2, 4], 1e-12, "d sum(x^2)")
    v = np.random.default_rng(2).uniform(0.1, 5, 10)
    _close(dc.exp(dc.log(_t(v))).data, v, 1e-12, "exp(log(x))")


@check
def cosine_examples():
    v = _t([0.3, -2.0, 1.5])
    _close(dc.cosine_sim(v, v).data, 1.0, 1e-12, "self similarity")
    _close(dc.cosine_sim(_t([1, 0]), _t([0, 1])).data, 0.0, 0, "orthogonal")
    _close(dc.cosine_sim(_t([1, 1]), _t([1, 0])).data, 0.7071, 1e-4, "45 degrees")


@check
def conv_examples():
    _close(dc.conv2d(_t(np.zeros((1, 4, 4))), _t(np.ones((2, 1, 3, 3)))).data, 0, 0, "zero input")
    x = np.random.default_rng(3).normal(size=(1, 4, 4))
    k = np.zeros((1, 1, 3, 3))
    k[0, 0, 1, 1] = 1.0
    _close(dc.conv2d(_t(x), _t(k)).data, x, 1e-12, "delta kernel")
    w = np.random.default_rng(4).normal(size=(2, 1, 3, 3))
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1)))
    ref = np.zeros((2, 4, 4))
    for o in range(2):
        for c in range(1):
            for i in range(4):
                for j in range(4):
                    for di in range(3):
                        for dj in range(3):
                            ref[o, i, j] += w[o, c, di, dj] * xp[c, i + di, j + dj]
    _close(dc.conv2d(_t(x), _t(w)).data, ref, 1e-6, "loop oracle")


@check
def pool_and_norm_examples():
    _close(dc.maxpool2d(_t([[[1.0, 2.0], [3.0, 4.0]]])).data, [[[4.0]]], 0, "maxpool")
    x = _t([[[1.0, 2.0], [3.0, 4.0]]])
    with dc.Tape() as tape:
        y = dc.sum(dc.maxpool2d(x))
    tape.backward(y)
    _close(x.grad, [[[0, 0], [0, 1]]], 0, "maxpool routing")
    const = _t(np.full((2, 3, 2, 2), 5.0))
    out = dc.batchnorm(const, _t(np.ones(3)), _t(np.zeros(3)), np.zeros(3), np.ones(3), True)
    _close(out.data, 0, 0, "constant batch norm")


@check
def gradcheck_examples():
    x = _t([0.5, -1.0, 2.0])
    _ok(dc.grad_check(lambda: dc.sum(x * x), [x], tolerance=1e-8).passed, "sum of squares")


@check
def adam_examples():
    p = {"w": _t([1.0, -2.0])}
    st = dc.AdamState(weight_decay=0.0)
    dc.adam_step(p, {"w": np.zeros(2)}, st)
    _close(p["w"].data, [1.0, -2.0], 0, "zero gradient")
    _ok(st.step == 1, "step counter")
    q = {"s": _t([0.5])}
    st = dc.AdamState(weight_decay=0.0)
    dc.adam_step(q, {"s": np.ones(1)}, st)
    _close(q["s"].data, 0.5 - st.learning_rate, 1e-10, "first Adam step")


@check
def wav_examples():
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "a.wav")
        x = np.random.default_rng(5).uniform(-0.9, 0.9, 16000)
        write_wav(path, AudioBuffer(x))
        back = load_wav(path)
        _ok(len(back) == 16000, "sample count")
        _ok(np.max(np.abs(back.samples - x)) <= 1 / 32768, "pcm16 round trip")
        write_wav(path, AudioBuffer(x), channels=np.stack([x, -x], axis=1))
        _close(load_wav(path).samples, 0, 0, "antiphase downmix")
    buf = AudioBuffer(np.full(1000, 0.25))
    _close(resample(buf, 16000).samples, buf.samples, 0, "identity rate")
    _close(resample(buf, 11025).samples, 0.25, 1e-12, "constant signal")
    t = np.arange(16000) / 16000
    down = resample(AudioBuffer(np.sin(2 * np.pi * 440 * t)), 8000).samples
    spec = np.abs(np.fft.rfft(down))
    _ok(abs(np.argmax(spec) * 8000 / down.size - 440) <= 1, "440 Hz peak after resampling")


@check
def augment_examples():
    rng = np.random.default_rng(6)
    buf = AudioBuffer(rng.uniform(-0.5, 0.5, 4000))
    same = augment(buf, AugmentationConfig.disabled(), rng)
    _close(same.samples, buf.samples, 0, "p=0 identity")
    flip = AugmentationConfig.disabled()
    flip.polarity_p = 1.0
    _close(augment(buf, flip, rng).samples, -buf.samples, 0, "polarity")
    noisy = add_noise(buf.samples, 20.0, rng)
    n = noisy - buf.samples
    snr = 10 * np.log10(np.sum(buf.samples ** 2) / np.sum(n ** 2))
    _ok(abs(snr - 20) <= 1, f"SNR {snr}")


@check
def spectral_examples():
    _close(sp.stft(np.zeros(1024)), 0, 0, "silent stft")
    k = 10
    x = np.sin(2 * np.pi * k * np.arange(2048) / 256)
    _ok(np.all(np.argmax(sp.stft(x, hop=128), axis=0) == k), "bin peak")
    f = np.random.default_rng(7).normal(size=256)
    n = np.arange(256)
    dft = np.exp(-2j * np.pi * np.outer(n, n) / 256) @ f
    _close(sp.fft(f), dft, 1e-6, "fft vs dft")
    fb = sp.mel_filterbank()
    _close(sp.mel_project(np.zeros((129, 3))), 0, 0, "zero mel")
    _ok(np.all(fb.sum(axis=1) > 0), "filter rows positive")
    _close(sp.mel_project(np.ones((129, 1)))[:, 0], fb.sum(axis=1), 1e-12, "flat spectrum")
    a = sp.logmel_for_clip(np.random.default_rng(8).normal(size=32000), (0, 32000))
    b = sp.logmel_for_clip(np.random.default_rng(8).normal(size=32000), (0, 16000))
    _ok(a.matrix.shape == b.matrix.shape == (128, 128), "equal-size contract")
    _ok(sp.clip_hop(16384, 128) == 126, "hop arithmetic")
    _close(sp.logmel_for_clip(np.zeros(20000)).matrix, np.log(1e-6), 1e-12, "silence")


@check
def synth_examples():
    corpus = synth_corpus(SynthConfig(n_tracks=12, n_cliques=4, n_classes=2, duration=1.0))
    _ok(len(corpus.tracks) == 12, "track count")
    with tempfile.TemporaryDirectory() as tmp:
        path = write_corpus(corpus, tmp)
        with open(path, encoding="utf-8") as fh:
            _ok(len(fh.read().splitlines()) == 12, "manifest rows")
    feats = np.stack([sp.logmel_for_clip(t.samples, None, 32).matrix.mean(axis=1) for t in corpus.tracks])
    labels = np.array([corpus.tag_names.index(t.tags[0]) for t in corpus.tracks])
    cents = np.stack([feats[labels == c].mean(axis=0) for c in range(2)])
    pred = np.argmin(((feats[:, None] - cents[None]) ** 2).sum(-1), axis=1)
    _ok(np.mean(pred == labels) >= 0.95, "centroid separability")


@check
def hac_examples():
    _ok(build_tree(8, 2, 3).spans(2) == [(0, 2), (2, 4), (4, 6), (6, 8)], "leaves of 8")
    _ok([len(lv) for lv in build_tree(64, 2, 4).levels] == [1, 2, 4, 8], "level sizes")
    _ok(build_tree(7, 2, 2).spans(1) == [(0, 4), (4, 7)], "remainder to the left")
    _ok(len(enumerate_pairs(build_tree(64, 2, 4))) == 7, "pair count M=2 N=4")
    _ok(len(enumerate_pairs(build_tree(8, 2, 2))) == 1, "pair count N=2")
    t = build_tree(81, 3, 4)
    parts = [k.span for _, kids in enumerate_pairs(t) for k in kids]
    _ok(sorted(parts) == sorted(n.span for n in t.nodes() if n.level > 0), "each node once as part")
    whole = build_tree(8, 2, 2).node(0, 0)
    _close(clip_len_ratio(build_tree(8, 2, 2).node(1, 0), whole), 0.5, 0, "ratio M=2")
    _close(clip_len_ratio(build_tree(8, 4, 2).node(1, 0), whole), 0.25, 0, "ratio M=4")
    t7 = build_tree(7, 2, 2)
    _close(clip_len_ratio(t7.node(1, 0), t7.node(0, 0)), 4 / 7, 1e-12, "ratio 4/7")


@check
def attention_examples():
    rng = np.random.default_rng(9)
    q = _t(rng.normal(size=(2, 6)))
    v = rng.normal(size=(1, 6))
    _close(cross_attend(q, _t(rng.normal(size=(1, 6))), _t(v), 3).data, np.repeat(v, 2, 0), 1e-12, "single key")
    keys = _t(np.ones((3, 6)))
    vals = rng.normal(size=(3, 6))
    _close(cross_attend(q, keys, _t(vals), 3).data, np.repeat(vals.mean(0, keepdims=True), 2, 0),
           1e-12, "identical keys")


@check
def pwt_examples():
    rng = np.random.default_rng(10)
    units = [[InteractionUnit(8, 6, 3, rng=rng, dtype=np.float64) for _ in range(2)] for _ in range(2)]
    levels = [_t(rng.normal(size=(2 * 2 ** n, 8))) for n in range(3)]
    out = pwt_stack(HierState(levels, 2), units, 0.0, 0.0)
    _ok(all(np.array_equal(a.data, b.data) for a, b in zip(out.levels, levels)), "zero lambda identity")


@check
def head_examples():
    head = ProjectionHead(8, 8, 256, rng=np.random.default_rng(11), dtype=np.float64)
    _ok(head(_t(np.ones(8))).shape == (256,), "head output shape")
    for _, p in head.named_parameters():
        p.data[...] = 0
    _close(head(_t(np.ones(8))).data, 0, 0, "zero weights")


def _batch(vectors_per_level, tilde, ratios, m=2):
    return ContrastiveBatch([_t(v) for v in vectors_per_level], _t(tilde), m, ratios)


@check
def loss_examples():
    root = np.array([[1.0, 0.0]])
    b = _batch([root, np.repeat(root, 2, 0)], root, [[0.5, 0.5]])
    pw, _ = part_whole_terms(b, 1.0)
    _close(pw.data, [np.e], 1e-12, "identical children")
    ortho = _batch([root, np.array([[0.0, 1.0], [0.0, 1.0]])], root, [[1.0, 1.0]])
    _close(part_whole_terms(ortho, 1.0)[0].data, [2.0], 1e-12, "orthogonal children")
    _close(hierarchical_loss(b, 1.0).mean, 0.0, 1e-12, "B=1 loss")
    _close(hierarchical_loss(b, 1.0, use_hcl=False).mean, 0.0, 1e-12, "B=1 no_hcl")
    e = np.eye(6)
    tri = ContrastiveBatch([_t(e[:3])], _t(e[3:]), 2, [])
    neg, _ = negative_terms(tri, 1.0)
    _close(neg.data, [5.0] * 3, 1e-12, "orthogonal negatives")


@check
def metric_examples():
    _close(roc_auc([0.9, 0.8, 0.3, 0.2], [1, 0, 1, 0]), 0.75, 0, "AUC quartet")
    _close(roc_auc([1.0, 1.0], [1, 0]), 0.5, 0, "tied AUC")
    _close(roc_auc([3, 2, 1], [1, 1, 0]), 1.0, 0, "perfect AUC")
    _close(pr_auc([3, 2, 1], [1, 1, 0]), 1.0, 0, "perfect AP")
    _close(average_precision_at_ranks([1, 0, 1]), 5 / 6, 1e-12, "AP triple")
    sim = np.array([[0, 0.9, 0.1, 0.2], [0.9, 0, 0.1, 0.2], [0.1, 0.1, 0, 0.8], [0.2, 0.2, 0.8, 0]])
    m, p, r = retrieval_scores(sim, [0, 0, 1, 1])
    _ok((m, r) == (1.0, 1.0), "perfect retrieval")
    _, _, r3 = retrieval_scores(np.array([[0, .1, .5, .9], [.1, 0, .5, .9], [.5, .5, 0, .9], [.9, .9, .9, 0]]),
                                [0, 0, 1, 1])
    _close(r3, (3 + 3 + 1 + 3) / 4, 1e-12, "MR1 ranks")


def run_all(stream=None):
    """Run every check; write one line per check. Returns the number of failures."""
    stream = stream or io.StringIO()
    failures = 0
    for fn in CHECKS:
        t0 = time.perf_counter()
        try:
            fn()
            status, detail = "ok", ""
        except (AssertionError, MartError, ValueError, FloatingPointError) as exc:
            failures += 1
            status, detail = "FAIL", f"  {exc}"
        stream.write(f"{status:4s} {fn.__name__} ({time.perf_counter() - t0:.2f}s){detail}\n")
    stream.write(f"{len(CHECKS) - failures}/{len(CHECKS)} checks passed\n")
    return failures
