"""Smoke test for the idg extension module.

Build and install first:  pip install maturin && maturin develop -m crates/python/Cargo.toml
"""

import idg

EX3 = "5 5\n11001\n01010\n01101\n10011\n00111\n"


def main():
    m = idg.Matrix.from_text(EX3)
    g = idg.Graph(5, [0, 2], [1, 3], [(0, 1), (2, 3)])
    y = g.outcome_vector(m)
    assert y == [False, True, True, True, False], y

    res = idg.decode(m, y, 0.5, 2)
    assert res == {"defectives": [1, 3], "inhibitors": [0, 2], "edges": [[0, 1], [2, 3]], "failure": None}, res

    prm = idg.params(1024, 1, 1, delta=1.0, i_max=1)
    assert abs(prm["p1"] - 1 / 6) < 1e-15
    assert (prm["t1"], prm["t2"], prm["t_na"]) == (1299, 84, 1685)

    assert idg.counting_bound(10, 1, 2) == 11
    assert idg.bounds(1024, 4, 4)["asymptotic_terms"]["entropy_term"] == 96.0

    edge = idg.Graph(3, [0], [1], [(0, 1)])
    assert idg.stat(edge, 0.5, 2, "q2_exact") == 0.25
    assert idg.stat(edge, 0.5, 0, "q3_exact") == 0.0

    cands = idg.consistent_graphs(m, y, 2, 2, i_max=1)
    assert g in cands

    sampled = idg.Graph.sample(50, 2, 2, seed=3)
    assert idg.Graph.from_json(sampled.to_json()) == sampled
    rand_m = idg.Matrix.generate(10, 50, 0.2, seed=1)
    assert rand_m.to_text() == idg.Matrix.generate(10, 50, 0.2, seed=1).to_text()

    p_fail = idg.error_probability({"design": "nonadaptive", "tests": 12, "p": 1 / 6, "threshold": 0.5},
                                   idg.Graph(8, [5], [2], [(5, 2)]))
    assert 0.0 <= p_fail <= 1.0

    rep = idg.trial(500, 2, 2, seed=7, design="adaptive")
    assert rep["success"], rep

    csv = idg.sweep_csv({"n": [60], "r": [1], "d": [1], "trials": 4, "master_seed": 2})
    assert csv.splitlines()[0].startswith("n,r,d,model,i_max")
    assert len(csv.splitlines()) == 3

    try:
        idg.params(3, 2, 1)
    except ValueError:
        pass
    else:
        raise AssertionError("expected ValueError")

    print("idg smoke test passed")


if __name__ == "__main__":
    main()
