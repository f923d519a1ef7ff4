import csv
import math

import numpy as np
import pytest

import latentadv as la


def test_metrics():
    assert la.dl_edit(["a", "b", "c"], ["a", "c", "b"]) == 1
    assert la.lcp(["a", "b"], ["a", "c"]) == 1
    l1, l2 = la.l1_l2([1, 0, 2], [0, 1, 2])
    assert l1 == 2 and math.isclose(l2, math.sqrt(2))
    assert la.emd_counts([1, 0, 0], [0, 0, 1]) == 2


def test_encoding_round_trip():
    vocab = la.ActivityVocabulary(["a", "b"])
    rows = la.onehot_encode(["a", "b"], vocab, 4)
    assert rows.shape == (5, 4)
    assert la.decode_sequence(rows, vocab) == ["a", "b"]
    assert la.aggregate_encode(["a", "a"], vocab) == [2, 0]
    with pytest.raises(la.EncodingError):
        la.aggregate_encode(["zz"], vocab)


def test_log_split_and_prefixes():
    log = la.synthetic_log(60, 3)
    assert len(log) == 60
    train, test = la.temporal_split(log, 0.8)
    assert len(train) == 48 and len(test) == 12
    prefixes = la.deduplicate(la.extract_prefixes(train, 1, 6))
    assert all(1 <= p.length() <= 6 for p in prefixes.prefixes)
    again = la.parse_log(log.to_csv())
    assert again == log


def test_profiles_and_auc():
    pts = [(i / 10, ((7 * i) % 20) / 10) for i in range(20)]
    names = la.assign_profiles(pts)
    assert len(names) == 20
    assert set(names) <= {"Subtle", "Aggressive", "SequencePerturbation", "DistributionShift", "Others"}
    assert la.auc_score([0.1, 0.9], [0, 1]) == 1.0
    assert la.select_threshold([0.1, 0.9], [0, 1]) == pytest.approx(0.5)


def test_models_and_attacks():
    log = la.synthetic_log(120, 5)
    train_log, test_log = la.temporal_split(log, 0.8)
    vocab = la.build_vocabulary(train_log)
    train = la.deduplicate(la.extract_prefixes(train_log, 1, 8))
    test = la.extract_prefixes(test_log, 1, 8)

    clf = la.train_classifier(la.ClassifierKind.linear, train, vocab, max_len=8, seed=1)
    assert 0.0 <= clf.tau <= 1.0
    probs = clf.predict_proba([p.activities() for p in test.prefixes])
    assert len(probs) == len(test)

    cfg = la.VaeConfig()
    cfg.max_len = 8
    cfg.epochs = 5
    cfg.kl_weight = 0.05
    manifolds = []
    for label in (0, 1):
        m = la.train_class_vae(_class_prefixes(train_log, label), vocab, cfg)
        assert len(m.training_curve()) == 5
        manifolds.append(m)
    point = manifolds[0].encode(["a", "x"])
    assert point.mu.shape == (8,)
    z = la.reparameterize(point, np.zeros(8))
    assert np.array_equal(z, point.mu)
    assert la.gaussian_kl(la.LatentPoint(np.array([1.0, 0.0]), np.array([1.0, 1.0]))) == pytest.approx(0.5)

    table = la.build_position_activity_table(train)
    attack = la.AttackConfig()
    results = la.generate_adversarials(test, clf, manifolds[0], manifolds[1], table, attack, max_prefixes=10)
    assert len(results) <= 10
    for r in results:
        if r.status == "ok":
            assert la.dl_edit(r.original, r.adversarial) == 1

    with pytest.raises(la.UnsupportedOperation):
        la.latent_loss(clf, manifolds[0], point.mu, point.mu, 1)


def _class_prefixes(log, label):
    text = "case,activity,timestamp,label\n"
    for t in log.traces:
        if t.label == label:
            for e in t.events:
                text += f"{t.case_id},{e.activity},{e.timestamp},{t.label}\n"
    return la.deduplicate(la.extract_prefixes(la.parse_log(text), 1, 8))


def test_pipeline(tmp_path):
    out = tmp_path / "run"
    overrides = [
        "data.synthetic_traces=80",
        "classifier.kind=linear",
        "classifier.grid_search=false",
        "vae.epochs=5",
        "attack.methods=regular_last_event, regular_all_event",
        "attack.max_prefixes=10",
        f"run.output={out}",
    ]
    manifest = la.run_pipeline(overrides=overrides)
    assert [s["name"] for s in manifest["stages"]] == la.STAGES
    assert all(s["status"] == "ok" for s in manifest["stages"])
    with open(out / "summary.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["attack"] for r in rows] == ["regular_last_event", "regular_all_event"]

    with pytest.raises(la.ConfigError):
        la.run_pipeline(overrides=["classifier.kind=linear", f"run.output={out}"])
