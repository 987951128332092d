import math

import pytest

import feddti


@pytest.fixture(scope="module")
def split():
    ds = feddti.generate_synthetic(feddti.SyntheticSpec(n_drugs=20, n_proteins=10, n_records=400, latent_dim=3, seed=1))
    return feddti.split_train_test(ds, 0.2, 2)


def small_config(**overrides):
    cfg = {
        "dataset": {
            "synthetic": {"n_drugs": 20, "n_proteins": 10, "n_records": 400, "latent_dim": 3, "noise_sd": 0.1, "seed": 1}
        },
        "model": {"kind": "linear", "embedding_dim": 4},
        "train": {"epochs": 1, "learning_rate": 0.1, "batch_size": 8},
        "rounds": 2,
        "repeats": 1,
        "client_counts": [2, 4],
        "base_seed": 5,
    }
    cfg.update(overrides)
    return cfg


def test_dataset_and_split(split):
    assert len(split.train) + len(split.test) == 400
    assert len(split.test) == 80
    assert split.train.n_drugs == 20


def test_partitions_cover_train(split):
    part = feddti.partition_iid(split.train, 4, 0)
    assert sum(part.client_sizes()) == len(split.train)
    ent = feddti.partition_entity(split.train, 3, feddti.EntityDim.protein, 0)
    assert ent.n_clients == 3
    assert feddti.largest_remainder(10, [1, 1, 1]) == [4, 3, 3]


def test_single_client_federation_equals_bagging(split):
    part = feddti.partition_iid(split.train, 1, 0)
    model = feddti.ModelConfig.for_dataset(split.train, "two_tower_mlp", 4, 6)
    train = feddti.TrainConfig(epochs=1, learning_rate=0.05, batch_size=16, seed=3)
    fed = feddti.run_federation(split, part, model, train, rounds=3, seed=7)
    ens = feddti.train_bagging(split, part, model, train, total_epochs=3, seed=7)
    assert ens.members[0] == fed["params"]
    assert [r for r, _ in fed["history"]] == [1, 2, 3]
    assert ens.evaluate(split.test) == fed["history"][-1][1]


def test_predict_and_mse(split):
    model = feddti.ModelConfig.for_dataset(split.train, "linear", 4)
    params = feddti.init_model(model, 1)
    assert params.names() == ["drug_embedding", "protein_embedding", "bias"]
    assert math.isfinite(feddti.predict(params, model, 0, 0))
    assert feddti.evaluate_mse(params, model, split.test) > 0.0


def test_pct_difference():
    assert feddti.pct_difference(1.1, 1.0) == pytest.approx(10.0)


def test_grid_and_comparison():
    grid = feddti.run_grid(small_config(strategy="iid"))
    assert grid["col_keys"] == ["iid"]
    assert [c["row_key"] for c in grid["cells"]] == ["2", "4"]
    assert all(math.isfinite(c["mean_mse"]) for c in grid["cells"])
    cmp = feddti.run_comparison(small_config())
    assert {r["distribution"] for r in cmp["rows"]} == {"iid", "noniid"}


def test_config_errors():
    with pytest.raises(feddti.ConfigError):
        feddti.load_config(small_config(bogus_key=1))
    with pytest.raises(feddti.InputError):
        feddti.load_csv("/nonexistent/feddti.csv")
