"""Latent linear dynamics models for predicting synchronization of coupled oscillators on graphs."""
from .dynamics import DynamicsSpec, Trajectory, simulate
from .encoding import Dataset, build_cat, distill, gen_global_dataset, gen_subgraph_dataset, load_dataset, save_dataset
from .evaluation import Metrics, accuracy, deviance_residuals, run_subgraph_experiment, select_xi, split
from .factorization import FactorPair, SmfConfig, SmfSolution, nmf, normalize_dictionary, smf, smf_objective
from .graph import Graph, NwsParams, generate_nws, induced_subgraph, load_edge_list, save_edge_list
from .model import (GlobalPrediction, LLDMClassifier, LldmModel, baseline_predict, fit_beta, load_model,
                    predict_global, predict_prob, proximity_scores, save_model, train_lldm_nmf, train_lldm_smf,
                    train_lldm_t)

__version__ = "0.1.0"

__all__ = [
    "Dataset", "DynamicsSpec", "FactorPair", "Metrics", "accuracy", "deviance_residuals", "GlobalPrediction", "Graph", "LLDMClassifier", "LldmModel",
    "NwsParams", "SmfConfig", "SmfSolution", "Trajectory", "baseline_predict", "build_cat", "distill",
    "fit_beta", "gen_global_dataset", "gen_subgraph_dataset", "generate_nws", "induced_subgraph",
    "load_dataset", "load_edge_list", "load_model", "nmf", "normalize_dictionary", "predict_global",
    "predict_prob", "proximity_scores", "run_subgraph_experiment", "save_dataset", "save_edge_list", "save_model",
    "select_xi", "simulate", "smf", "smf_objective", "split", "train_lldm_nmf", "train_lldm_smf", "train_lldm_t",
]
