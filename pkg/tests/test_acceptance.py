"""Acceptance gate: one test per contract property, at pinned tolerances.

Each test prints one [PASS]/[FAIL] line in the terminal summary (see
conftest.py). The two sweep-backed tests train real models and take a few
minutes combined; everything else is seconds.
"""

import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from vqanon.autodiff import (Tape, Tensor, add, backward, gather_rows,
                             gradient_check, linear, mul, relu, scale,
                             softmax_cross_entropy, straight_through,
                             sum_squared_diff, tensor_sum)
from vqanon.corpus import (CorpusConfig, f0_rng, generate_corpus,
                           generate_f0_track, split_corpus)
from vqanon.f0 import (F0Stats, F0Track, add_awgn, f0_stats, linear_shift,
                       measured_snr, save_track)
from vqanon.metrics import ScoreSet, eer, linkability
from vqanon.model import ProbeConfig, train_speaker_probe
from vqanon.sweep import (F0_COMMON_TARGET, default_benchmark_plan,
                          default_capacity_plan, run_sweep)
from vqanon.vq import (Codebook, DEFAULT_BETA, codebook_pull_loss,
                       combined_loss, commitment_loss, ema_update,
                       quantization_error, quantize)

BENCHMARK_ORDER = ["no-vq", "vq-256", "vq-128", "vq-64"]


# ---------------------------------------------------------------- fixtures

@pytest.fixture(scope="module")
def benchmark_sweep(tmp_path_factory):
    """The default bottleneck sweep, run once and timed."""
    out = tmp_path_factory.mktemp("benchmark")
    start = time.monotonic()
    result = run_sweep(default_benchmark_plan(), out)
    elapsed = time.monotonic() - start
    return result, elapsed


@pytest.fixture(scope="module")
def capacity_sweep(tmp_path_factory):
    """The default encoder-depth sweep, run once."""
    out = tmp_path_factory.mktemp("capacity")
    return run_sweep(default_capacity_plan(), out)


def median_of(reports, condition, attr):
    values = [getattr(r, attr) for r in reports if r.condition == condition]
    assert values, f"no reports for condition {condition}"
    return float(np.median(values))


# ------------------------------------------------------- gradient checking

def test_gradients_match_finite_differences():
    """Every differentiable op: central differences at 100+ seeded points."""
    start = time.monotonic()

    def tensors(rng, *shapes):
        return [Tensor(rng.normal(size=s), requires_grad=True) for s in shapes]

    def run(seed, build):
        rng = np.random.default_rng(seed)
        f, x = build(rng)
        worst = gradient_check(f, x, eps=1e-5)
        assert worst < 1e-4, f"relative error {worst:.3e} at seed {seed}"

    def linear_wrt_x(rng):
        (x,) = tensors(rng, (3, 4))
        w = Tensor(rng.normal(size=(4, 5)))
        b = Tensor(rng.normal(size=(1, 5)))
        t = rng.normal(size=(3, 5))
        return lambda x: sum_squared_diff(linear(x, w, b), t), x

    def linear_wrt_w(rng):
        (w,) = tensors(rng, (4, 5))
        x = Tensor(rng.normal(size=(3, 4)))
        b = Tensor(rng.normal(size=(1, 5)))
        t = rng.normal(size=(3, 5))
        return lambda w: sum_squared_diff(linear(x, w, b), t), w

    def linear_wrt_b(rng):
        (b,) = tensors(rng, (1, 5))
        x = Tensor(rng.normal(size=(3, 4)))
        w = Tensor(rng.normal(size=(4, 5)))
        t = rng.normal(size=(3, 5))
        return lambda b: sum_squared_diff(linear(x, w, b), t), b

    def relu_away_from_kink(rng):
        # magnitudes >= 0.2 so the 1e-5 perturbation never crosses zero
        data = rng.uniform(0.2, 1.2, size=(3, 4)) * rng.choice([-1.0, 1.0],
                                                               size=(3, 4))
        x = Tensor(data, requires_grad=True)
        t = rng.normal(size=(3, 4))
        return lambda x: sum_squared_diff(relu(x), t), x

    def cross_entropy(rng):
        (logits,) = tensors(rng, (4, 5))
        labels = rng.integers(0, 5, size=4)
        return lambda lg: softmax_cross_entropy(lg, labels), logits

    def gather_with_repeats(rng):
        (table,) = tensors(rng, (6, 3))
        idx = np.array([0, 2, 2, 5, 1, 0])
        t = rng.normal(size=(6, 3))
        return lambda tb: sum_squared_diff(gather_rows(tb, idx), t), table

    def ssd_direct(rng):
        (x,) = tensors(rng, (3, 4))
        t = rng.normal(size=(3, 4))
        return lambda x: sum_squared_diff(x, t), x

    def add_fan_in(rng):
        (x,) = tensors(rng, (3, 4))
        t = rng.normal(size=(3, 4))
        return lambda x: sum_squared_diff(add(x, x), t), x

    def mul_square(rng):
        (x,) = tensors(rng, (3, 4))
        c = Tensor(rng.normal(size=(3, 4)))
        return lambda x: tensor_sum(mul(mul(x, x), c)), x

    def scale_loss(rng):
        (x,) = tensors(rng, (3, 4))
        t = rng.normal(size=(3, 4))
        return lambda x: scale(sum_squared_diff(x, t), 0.37), x

    def sum_of_squares(rng):
        (x,) = tensors(rng, (3, 4))
        return lambda x: scale(tensor_sum(mul(x, x)), 0.5), x

    def commitment(rng):
        (h,) = tensors(rng, (5, 3))
        q = rng.normal(size=(5, 3))
        return lambda h: commitment_loss(h, q), h

    def pull(rng):
        (protos,) = tensors(rng, (6, 3))
        idx = rng.integers(0, 6, size=9)
        hv = rng.normal(size=(9, 3))
        return lambda p: codebook_pull_loss(p, idx, hv), protos

    def deep_composite(rng):
        (x,) = tensors(rng, (4, 3))
        w1 = Tensor(rng.normal(size=(3, 6)) + 0.5)
        b1 = Tensor(rng.normal(size=(1, 6)))
        w2 = Tensor(rng.normal(size=(6, 4)))
        b2 = Tensor(rng.normal(size=(1, 4)))
        labels = rng.integers(0, 4, size=4)
        t = rng.normal(size=(4, 3))

        def f(x):
            hidden = relu(linear(x, w1, b1))
            ce = softmax_cross_entropy(linear(hidden, w2, b2), labels)
            return scale(add(ce, sum_squared_diff(x, t)), 0.73)
        return f, x

    families = [linear_wrt_x, linear_wrt_w, linear_wrt_b, relu_away_from_kink,
                cross_entropy, gather_with_repeats, ssd_direct, add_fan_in,
                mul_square, scale_loss, sum_of_squares, commitment, pull,
                deep_composite]
    points = 0
    for fam_id, build in enumerate(families):
        for rep in range(8):
            run(1000 * fam_id + rep, build)
            points += 1
    assert points >= 100
    assert time.monotonic() - start < 30.0


# ------------------------------------------------------------ quantization

def test_quantize_matches_exhaustive_search():
    """1,000 random calls vs brute-force nearest neighbor, ties included."""
    start = time.monotonic()
    rng = np.random.default_rng(202)
    for call in range(1000):
        j = int(rng.integers(1, 40))
        v = int(rng.integers(2, 33))
        d = int(rng.integers(1, 9))
        protos = rng.normal(size=(v, d))
        h = rng.normal(size=(j, d))
        if call % 5 == 0 and v >= 3:
            # engineered ties: bitwise-duplicated prototypes, and a zero
            # latent row against sign-flipped prototypes of equal norm
            lo, hi = sorted(rng.choice(v, size=2, replace=False))
            protos[hi] = protos[lo]
            protos[1] = -protos[0]
            h[0] = 0.0
        batch = quantize(h, Codebook(prototypes=protos,
                                     ema_cluster_size=np.ones(v),
                                     ema_embed_sum=protos.copy()))
        oracle = np.argmin(((h[:, None, :] - protos[None]) ** 2).sum(axis=2),
                           axis=1)
        np.testing.assert_array_equal(batch.indices, oracle)
        np.testing.assert_array_equal(batch.q, protos[batch.indices])

    # duplicated nearest prototype: the lower index must win
    protos = np.array([[5.0, 5.0], [1.0, 1.0], [1.0, 1.0], [-4.0, 2.0]])
    batch = quantize(np.array([[1.1, 0.9]]),
                     Codebook(prototypes=protos, ema_cluster_size=np.ones(4),
                              ema_embed_sum=protos.copy()))
    assert batch.indices[0] == 1
    assert time.monotonic() - start < 5.0


# ------------------------------------------------------------- loss algebra

def test_loss_algebra_identities():
    """Value symmetry, gradient separation, and the total decomposition."""
    rng = np.random.default_rng(303)
    protos = rng.normal(size=(8, 5))
    cb = Codebook(prototypes=protos.copy(), ema_cluster_size=np.ones(8),
                  ema_embed_sum=protos.copy())
    h_data = rng.normal(size=(20, 5))
    batch = quantize(h_data, cb)

    # the two penalties are the same number when read as values
    h = Tensor(h_data, requires_grad=True)
    p = Tensor(protos.copy(), requires_grad=True)
    with Tape() as tape:
        commit = commitment_loss(h, batch.q)
        pulled = codebook_pull_loss(p, batch.indices, h_data)
    commit_v = float(commit.data[0, 0])
    pull_v = float(pulled.data[0, 0])
    qerr = quantization_error(h_data, batch.q)
    assert abs(commit_v - pull_v) <= 1e-12
    assert abs(commit_v - qerr) <= 1e-12

    # gradient separation on the joint graph: commitment reaches the encoder
    # side only, the pull reaches the codebook side only
    backward(tape, commit)
    assert h.grad is not None and p.grad is None
    np.testing.assert_allclose(h.grad, 2.0 * (h_data - batch.q), atol=1e-12)
    h.zero_grad()

    with Tape() as tape:
        pulled = codebook_pull_loss(p, batch.indices, h_data)
        commit = commitment_loss(h, batch.q)
    backward(tape, pulled)
    assert p.grad is not None and h.grad is None
    scatter = np.zeros_like(protos)
    np.add.at(scatter, batch.indices, 2.0 * (batch.q - h_data))
    np.testing.assert_allclose(p.grad, scatter, atol=1e-12)

    # total = task + l_vq + beta * l_vq_reg at the published beta
    assert DEFAULT_BETA == 0.25
    for _ in range(50):
        task, l_vq, l_reg = rng.uniform(0.0, 10.0, size=3)
        bd = combined_loss(task, l_vq, l_reg)
        assert bd.beta == 0.25
        assert abs(bd.total - (task + l_vq + 0.25 * l_reg)) <= 1e-12


# ------------------------------------------------------------ EMA codebook

def test_ema_reaches_kmeans_fixed_point():
    """Repeated single-batch EMA updates land on that batch's Lloyd centroids."""
    start = time.monotonic()
    rng = np.random.default_rng(404)
    centers = rng.normal(0.0, 5.0, size=(8, 4))
    data = np.concatenate([c + rng.normal(0.0, 0.3, size=(100, 4))
                           for c in centers])
    init = centers + rng.normal(0.0, 0.05, size=centers.shape)

    # Lloyd oracle from the identical initialization
    lloyd = init.copy()
    for _ in range(100):
        assign = np.argmin(((data[:, None, :] - lloyd[None]) ** 2).sum(axis=2),
                           axis=1)
        updated = np.stack([data[assign == i].mean(axis=0)
                            if np.any(assign == i) else lloyd[i]
                            for i in range(8)])
        if np.array_equal(updated, lloyd):
            break
        lloyd = updated

    cb = Codebook(prototypes=init.copy(), ema_cluster_size=np.ones(8),
                  ema_embed_sum=init.copy(), decay=0.5)
    converged_at = None
    for step in range(1, 501):
        batch = quantize(data, cb)
        ema_update(cb, data, batch.indices)
        if np.max(np.abs(cb.prototypes - lloyd)) < 1e-6:
            converged_at = step
            break
    assert converged_at is not None, (
        f"gap {np.max(np.abs(cb.prototypes - lloyd)):.3e} after 500 steps")
    assert time.monotonic() - start < 10.0


# -------------------------------------------------------- straight-through

def test_straight_through_gradient_copy():
    """grad_h is bit-for-bit the gradient the quantized values would get."""
    rng = np.random.default_rng(505)
    h_data = rng.normal(size=(12, 6))
    q_data = np.round(h_data * 2.0) / 2.0
    w = Tensor(rng.normal(size=(6, 4)))
    b = Tensor(rng.normal(size=(1, 4)))
    labels = rng.integers(0, 4, size=12)
    t = rng.normal(size=(12, 6))

    downstreams = [
        lambda q: softmax_cross_entropy(linear(q, w, b), labels),
        lambda q: scale(sum_squared_diff(q, t), 1.3),
        lambda q: add(tensor_sum(mul(q, q)),
                      softmax_cross_entropy(linear(relu(q), w, b), labels)),
    ]
    for loss_fn in downstreams:
        h = Tensor(h_data.copy(), requires_grad=True)
        with Tape() as tape:
            loss = loss_fn(straight_through(h, q_data))
        backward(tape, loss)
        through_h = h.grad.copy()

        q_leaf = Tensor(q_data.copy(), requires_grad=True)
        with Tape() as tape:
            loss = loss_fn(q_leaf)
        backward(tape, loss)
        assert through_h.tobytes() == q_leaf.grad.tobytes()


# ------------------------------------------------------------- trend sweeps

def test_bottleneck_privacy_utility_trend(benchmark_sweep):
    """Shrinking V trades content error for speaker privacy, every metric."""
    result, elapsed = benchmark_sweep
    assert elapsed < 600.0, f"benchmark sweep took {elapsed:.0f}s"
    assert result.ok, [f"{f.condition}/{f.seed}: {f.message}"
                       for f in result.failures]
    assert len(result.reports) == 12

    acc = [median_of(result.reports, c, "speaker_probe_accuracy")
           for c in BENCHMARK_ORDER]
    err = [median_of(result.reports, c, "content_error_rate")
           for c in BENCHMARK_ORDER]
    eers = [median_of(result.reports, c, "eer") for c in BENCHMARK_ORDER]
    d_sys = [median_of(result.reports, c, "d_sys") for c in BENCHMARK_ORDER]

    # (a) probe accuracy: strictly highest without quantization, then
    # non-increasing as the codebook shrinks
    assert acc[0] > acc[1], f"probe accuracy {acc}"
    assert all(a >= b for a, b in zip(acc, acc[1:])), f"probe accuracy {acc}"
    # (b) EER non-decreasing, with at least 5 points gained at V=64
    assert all(a <= b for a, b in zip(eers, eers[1:])), f"eer {eers}"
    assert eers[-1] >= eers[0] + 0.05, f"eer gain {eers[-1] - eers[0]:.3f}"
    # (c) content error non-decreasing: the utility cost of the bottleneck
    assert all(a <= b for a, b in zip(err, err[1:])), f"content error {err}"
    # (d) linkability ordering opposite to EER: non-increasing, with a real drop
    assert all(a >= b for a, b in zip(d_sys, d_sys[1:])), f"d_sys {d_sys}"
    assert d_sys[0] > d_sys[-1], f"d_sys {d_sys}"


def test_depth_keeps_utility_at_tight_bottleneck(benchmark_sweep,
                                                 capacity_sweep):
    """At V=64 a deeper encoder matches the shallow one's content error
    while keeping the EER gained from quantization."""
    result = capacity_sweep
    assert result.ok, [f"{f.condition}/{f.seed}: {f.message}"
                       for f in result.failures]
    assert len(result.reports) == 6

    err_deep = median_of(result.reports, "depth-6", "content_error_rate")
    err_shallow = median_of(result.reports, "depth-2", "content_error_rate")
    assert err_deep <= err_shallow, (
        f"depth-6 err {err_deep:.4f} > depth-2 err {err_shallow:.4f}")

    bench_result, _ = benchmark_sweep
    eer_floor = median_of(bench_result.reports, "vq-64", "eer") - 0.03
    eer_deep = median_of(result.reports, "depth-6", "eer")
    assert eer_deep >= eer_floor, (
        f"depth-6 eer {eer_deep:.4f} below retention floor {eer_floor:.4f}")


# -------------------------------------------------------------- F0 pipeline

def test_f0_transform_properties():
    """Affine exactness, the 15 dB noise contract, and probe-to-chance."""
    rng = np.random.default_rng(606)

    # statistics transfer is exact to 1e-9 for several source/target pairs
    for mean, std, tgt_mean, tgt_std in [(170.0, 20.0, 150.0, 2.0),
                                         (120.0, 9.0, 210.0, 14.0),
                                         (240.0, 30.0, 150.0, 1.5)]:
        values = rng.normal(mean, std, size=400)
        voiced = rng.random(400) < 0.85
        values = np.where(voiced, np.abs(values), 0.0)
        track = F0Track(values=values, voiced=voiced)
        target = F0Stats(mean=tgt_mean, std=tgt_std, voiced_count=0)
        out = f0_stats(linear_shift(track, f0_stats(track), target))
        assert abs(out.mean - tgt_mean) <= 1e-9
        assert abs(out.std - tgt_std) <= 1e-9

    # additive noise hits the requested SNR on a long track
    voiced = rng.random(12000) < 0.9
    values = np.where(voiced, np.abs(rng.normal(165.0, 12.0, 12000)), 0.0)
    track = F0Track(values=values, voiced=voiced)
    assert int(voiced.sum()) >= 10000
    noisy = add_awgn(track, 15.0, np.random.default_rng(607))
    snr = measured_snr(track, noisy)
    assert abs(snr - 15.0) <= 0.5, f"measured SNR {snr:.3f} dB"

    # shifting every speaker to the shared target leaves the pitch-statistics
    # probe at chance level
    cfg = CorpusConfig(num_speakers=30, num_content_classes=30, frame_dim=24,
                       utterances_per_speaker=20, frames_per_utterance=150,
                       noise_sigma=0.1, seed=1235)
    corpus = generate_corpus(cfg)
    train_split, eval_split = split_corpus(corpus, 0.8, 1)

    def stat_features(split, shift):
        feats = []
        for utt in split.utterances:
            speaker = split.speaker(utt.speaker_id)
            track = generate_f0_track(speaker, 150,
                                      f0_rng(cfg.seed, utt.utterance_id))
            if shift:
                track = linear_shift(track, f0_stats(track), F0_COMMON_TARGET)
            stats = f0_stats(track)
            feats.append(np.array([[stats.mean, stats.std]]))
        return feats

    train_labels = [u.speaker_id for u in train_split.utterances]
    eval_labels = [u.speaker_id for u in eval_split.utterances]
    clean_probe = train_speaker_probe(stat_features(train_split, False),
                                      train_labels, ProbeConfig())
    clean_acc = clean_probe.accuracy(stat_features(eval_split, False),
                                     eval_labels)
    shifted_probe = train_speaker_probe(stat_features(train_split, True),
                                        train_labels, ProbeConfig())
    shifted_acc = shifted_probe.accuracy(stat_features(eval_split, True),
                                         eval_labels)
    chance = 1.0 / cfg.num_speakers
    assert clean_acc >= 0.5, f"pitch statistics should identify speakers " \
                             f"before the shift (got {clean_acc:.3f})"
    assert abs(shifted_acc - chance) <= 0.05, (
        f"shifted probe accuracy {shifted_acc:.4f} outside chance band "
        f"{chance:.4f} +/- 0.05")


# ------------------------------------------------------------ metric oracles

def test_metric_oracles():
    """Hand-checkable EER values and the analytic linkability reference."""
    value, threshold = eer(ScoreSet(mated=[0.9, 0.7, 0.3],
                                    nonmated=[0.8, 0.2, 0.1]))
    assert abs(value - 1.0 / 3.0) <= 1e-12
    assert abs(threshold - 0.7) <= 1e-12

    rng = np.random.default_rng(808)
    same_m = rng.normal(0.0, 1.0, 10000)
    same_n = rng.normal(0.0, 1.0, 10000)
    eer_same, _ = eer(ScoreSet(mated=same_m, nonmated=same_n))
    d_same, _ = linkability(ScoreSet(mated=same_m, nonmated=same_n))
    assert abs(eer_same - 0.5) <= 0.02
    assert d_same <= 0.05

    far_m = rng.normal(10.0, 0.1, 10000)
    far_n = rng.normal(0.0, 0.1, 10000)
    eer_far, _ = eer(ScoreSet(mated=far_m, nonmated=far_n))
    d_far, _ = linkability(ScoreSet(mated=far_m, nonmated=far_n))
    assert eer_far <= 0.01
    assert d_far >= 0.95

    # overlapping Gaussians against the analytic likelihood-ratio reference
    mu_m, mu_n, sigma = 1.0, 0.0, 0.7
    gauss_m = rng.normal(mu_m, sigma, 200000)
    gauss_n = rng.normal(mu_n, sigma, 200000)
    d_meas, _ = linkability(ScoreSet(mated=gauss_m, nonmated=gauss_n))
    grid = np.linspace(mu_n - 8 * sigma, mu_m + 8 * sigma, 40001)
    pdf_m = np.exp(-0.5 * ((grid - mu_m) / sigma) ** 2)
    pdf_n = np.exp(-0.5 * ((grid - mu_n) / sigma) ** 2)
    pdf_m /= sigma * np.sqrt(2.0 * np.pi)
    pdf_n /= sigma * np.sqrt(2.0 * np.pi)
    ratio = pdf_m / np.maximum(pdf_n, 1e-300)
    local = np.maximum(0.0, 2.0 * ratio / (1.0 + ratio) - 1.0)
    d_oracle = float(np.trapezoid(local * pdf_m, grid))
    assert abs(d_meas - d_oracle) <= 0.02, (
        f"measured {d_meas:.4f} vs oracle {d_oracle:.4f}")


# -------------------------------------------------------------- determinism

CORPUS_INI = """\
[corpus]
num_speakers = 4
num_content_classes = 4
frame_dim = 6
utterances_per_speaker = 5
frames_per_utterance = 24
noise_sigma = 0.1
seed = 7
"""

MODEL_INI = """\
[model]
encoder_depth = 2
hidden_dim = 12
codebook_size = 4
epochs = 2
batch_utterances = 8
seed = 0
"""

PLAN_INI = CORPUS_INI + MODEL_INI + """\

[sweep]
train_fraction = 0.6
num_bins = 20
probe_steps = 100

[condition no-vq]
codebook_size = none
seeds = 1

[condition vq-4]
codebook_size = 4
seeds = 1
"""


def run_cli(*argv):
    proc = subprocess.run([sys.executable, "-m", "vqanon.cli", *argv],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    return proc


def assert_same_tree(a: Path, b: Path):
    files_a = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
    files_b = sorted(p.relative_to(b) for p in b.rglob("*") if p.is_file())
    assert files_a == files_b
    assert files_a, f"no output files under {a}"
    for rel in files_a:
        assert (a / rel).read_bytes() == (b / rel).read_bytes(), rel


def test_rerun_is_byte_identical(tmp_path):
    """All five commands, run twice with the same inputs, byte for byte."""
    (tmp_path / "corpus.ini").write_text(CORPUS_INI, encoding="utf-8")
    (tmp_path / "model.ini").write_text(MODEL_INI, encoding="utf-8")
    (tmp_path / "plan.ini").write_text(PLAN_INI, encoding="utf-8")

    for tag in ("a", "b"):
        run_cli("gen-data", "--config", str(tmp_path / "corpus.ini"),
                "--out", str(tmp_path / f"corpus_{tag}"))
    assert_same_tree(tmp_path / "corpus_a", tmp_path / "corpus_b")

    for tag in ("a", "b"):
        run_cli("train", "--corpus", str(tmp_path / "corpus_a"),
                "--config", str(tmp_path / "model.ini"),
                "--out", str(tmp_path / f"run_{tag}"))
    assert_same_tree(tmp_path / "run_a", tmp_path / "run_b")

    for tag in ("a", "b"):
        run_cli("eval", "--checkpoint",
                str(tmp_path / "run_a" / "checkpoint.vqm"),
                "--corpus", str(tmp_path / "corpus_a"),
                "--out", str(tmp_path / f"eval_{tag}"), "--dump-features")
    assert_same_tree(tmp_path / "eval_a", tmp_path / "eval_b")

    for tag in ("a", "b"):
        run_cli("sweep", "--config", str(tmp_path / "plan.ini"),
                "--out", str(tmp_path / f"sweep_{tag}"))
    assert_same_tree(tmp_path / "sweep_a", tmp_path / "sweep_b")

    rng = np.random.default_rng(11)
    voiced = rng.random(120) < 0.8
    values = np.where(voiced, np.abs(rng.normal(180.0, 15.0, 120)), 0.0)
    save_track(F0Track(values=values, voiced=voiced), tmp_path / "track.txt")
    for tag in ("a", "b"):
        run_cli("f0", "--in", str(tmp_path / "track.txt"),
                "--out", str(tmp_path / f"f0_{tag}.txt"),
                "--target-mean", "150", "--target-std", "2",
                "--snr-db", "10", "--seed", "3")
    assert ((tmp_path / "f0_a.txt").read_bytes()
            == (tmp_path / "f0_b.txt").read_bytes())
