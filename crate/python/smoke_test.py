"""Smoke test for the crowdtopics_py extension.

Build and install first:

    cd crates/py && maturin build --release -o ../../target/wheels
    pip install --force-reinstall ../../target/wheels/crowdtopics_py-*.whl
    python python/smoke_test.py
"""

import tempfile
from pathlib import Path

import crowdtopics_py as ct


def main():
    assert ct.tokenize("Section 80G tax benefit") == ["section", "80g", "tax", "benefit"]

    campaigns, truth = ct.generate_campaigns(n=410, class_separation=3.0, seed=7)
    assert len(campaigns) == 410
    assert sum(campaigns.labels()) == 210
    assert truth["spec"]["n"] == 410
    train, test = campaigns.split(250, seed=1)
    assert (len(train), len(test)) == (250, 160)
    first = campaigns[0]
    assert first.label == int(first.raised_amount >= first.goal_amount)
    assert ct.Campaign.from_json(first.to_json()).id == first.id

    planted = ct.generate_planted_corpus()
    vocab = ct.Vocabulary(planted["vocab"])
    model = ct.TopicModel.fit(planted["docs"], vocab, k=2, seed=7, iters=300, burnin=150)
    perm, scores = ct.align_topics(planted["true_phi"], model.phi)
    assert min(scores) >= 0.6, scores
    theta = model.infer_theta(planted["docs"][0], seed=1)
    assert abs(sum(theta) - 1.0) < 1e-9
    assert model.perplexity(planted["docs"][:20]) > 1.0
    words = [w for w, _ in model.top_words(0, 5)]
    print("topic 1:", ", ".join(words))

    rows = [[float(i % 7), float(i % 3), 1.0, 2.0, 3.0, 4.0, 5.0] for i in range(40)]
    labels = [int(r[0] > 3) for r in rows]
    forest = ct.RandomForest.train(rows, labels, n_trees=15, features_per_split="all", seed=3)
    pred = forest.predict(rows)
    scored = ct.evaluate(labels, pred)
    assert scored["metrics"]["accuracy"] >= 0.9, scored
    assert ct.evaluate([0, 0], [0, 0])["metrics"]["precision"] is None
    assert abs(ct.f1_score(0.7242, 0.8866) - 0.7972) < 1e-4

    try:
        campaigns.split(500, seed=1)
    except ValueError as e:
        assert "500" in str(e)
    else:
        raise AssertionError("oversized split accepted")

    with tempfile.TemporaryDirectory() as tmp:
        ct.run_synth(tmp, n=410, class_separation=3.0, seed=5)
        report = ct.run_pipeline(
            Path(tmp) / "campaigns.jsonl",
            tmp,
            seed=5,
            options={"iters": "200", "burnin": "100"},
        )
        assert report["n_test"] == 160
        print("pipeline accuracy", round(report["metrics"]["accuracy"], 4))

    print("smoke test passed")


if __name__ == "__main__":
    main()
