"""Evaluate causal structure learners by the distributional error of interventions.

Modules
-------
graphs      DAG/CPDAG types, d-separation, equivalence classes, text format
metrics     SHD, SID and averaging over CPDAG extensions
networks    discrete and linear-Gaussian Bayesian networks, inference, MLE
distances   total variation between interventional distributions
datagen     random networks, sampling, factorial data and biased subsampling
discovery   CI tests, PC and BIC hill climbing
harness     experiment recipes and reports
"""

from .datagen import GenConfig, generate_network, random_dag, sample
from .dataset import Dataset, read_dataset
from .discovery import bic_score, g_test, fisher_z, hill_climb, pc
from .distances import InterventionPolicy, tv_dag, tv_pair
from .graphs import Cpdag, Dag, cpdag_of, d_separated, enumerate_extensions
from .harness import ExperimentConfig, emit_report, ingest_dataset, run_experiment
from .metrics import metric_on_cpdag, shd, sid
from .networks import DiscreteNetwork, GaussianNetwork, fit_mle_discrete, fit_mle_gaussian, intervene, marginal

__all__ = [
    "Cpdag",
    "Dag",
    "Dataset",
    "DiscreteNetwork",
    "ExperimentConfig",
    "GaussianNetwork",
    "GenConfig",
    "InterventionPolicy",
    "bic_score",
    "cpdag_of",
    "d_separated",
    "emit_report",
    "enumerate_extensions",
    "fisher_z",
    "fit_mle_discrete",
    "fit_mle_gaussian",
    "g_test",
    "generate_network",
    "hill_climb",
    "ingest_dataset",
    "intervene",
    "marginal",
    "metric_on_cpdag",
    "pc",
    "random_dag",
    "read_dataset",
    "run_experiment",
    "sample",
    "shd",
    "sid",
    "tv_dag",
    "tv_pair",
]
