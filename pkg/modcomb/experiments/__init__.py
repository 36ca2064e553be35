"""Experiment runners and their registry"""
from modcomb.experiments.mpc_compare import run_mpc_compare
from modcomb.experiments.nu_rate import run_nu_rate
from modcomb.experiments.reaction_diffusion import run_reaction_diffusion
from modcomb.experiments.toy_suboptimality import run_toy_suboptimality

# experiment id -> (runner, one-line description)
EXPERIMENTS = {
    'mpc_compare': (run_mpc_compare, 'predictor structures in closed-loop tracking of a controlled oscillator'),
    'nu_rate': (run_nu_rate, 'convergence rate against the angle between diffusion stencil spaces'),
    'reaction_diffusion': (run_reaction_diffusion, 'linear, Koopman, residual and iterative models of a reaction-diffusion field'),
    'toy_suboptimality': (run_toy_suboptimality, 'residual learning against iterative combination on exact instances'),
}
