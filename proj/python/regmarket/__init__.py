"""Regression markets over random-feature forests."""

from ._core import (
    Dataset,
    Forest,
    ForestMarket,
    ForestParams,
    Market,
    ResponseRange,
    default_eta,
    generate_friedman,
    grow_forest,
    hermite_gauss,
    load_csv,
    load_forest,
    means_t_test,
    mse,
    one_sample_t_test,
    paired_t_test,
    random_split,
    run_experiment,
    save_csv,
)

__all__ = [
    "Dataset",
    "Forest",
    "ForestMarket",
    "ForestParams",
    "Market",
    "ResponseRange",
    "default_eta",
    "generate_friedman",
    "grow_forest",
    "hermite_gauss",
    "load_csv",
    "load_forest",
    "means_t_test",
    "mse",
    "one_sample_t_test",
    "paired_t_test",
    "random_split",
    "run_experiment",
    "save_csv",
]
