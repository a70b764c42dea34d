"""From-scratch base classifiers and the voting combiner."""

from .forest import ForestConfig, ForestModel, predict_forest, train_forest
from .gbt import GbtConfig, GbtModel, predict_gbt, train_gbt
from .logistic import LogisticModel, loss_and_grad, predict_logistic, train_logistic
from .serialize import load_model, model_from_dict, model_to_dict, save_model
from .voting import (MEMBER_NAMES, VotingEnsemble, combine_votes, fit_vote_weights, vote,
                     weights_from_accuracies)

__all__ = [
    "ForestConfig", "ForestModel", "predict_forest", "train_forest",
    "GbtConfig", "GbtModel", "predict_gbt", "train_gbt",
    "LogisticModel", "loss_and_grad", "predict_logistic", "train_logistic",
    "load_model", "model_from_dict", "model_to_dict", "save_model",
    "MEMBER_NAMES", "VotingEnsemble", "combine_votes", "fit_vote_weights", "vote",
    "weights_from_accuracies",
]
