"""Zero-inflated DAG structure learning by continuous optimisation."""

from .acyclicity import AcyclicityConfig, h_and_grad, h_ldet, h_ldet_grad, pool_coupled
from .errors import DataError, DomainError, ParameterError, TrainingAborted
from .graph import DagGraph, SupportMasks, generate_ba, generate_er, is_acyclic, split_support
from .models import Dataset, LinkValues, ModelParams, log_lik_reduced, log_lik_zinb, log_lik_zip, nll_and_grad
from .simulate import DropoutConfig, SimParams, apply_dropout, logic_sample, sample_params
from .trainer import FitResult, TrainConfig, binarize, central_path_mu, fit, lambda_eff, objective

__version__ = "0.1.0"
