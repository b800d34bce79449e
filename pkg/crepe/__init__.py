"""Replica exchange and sequential Monte Carlo samplers for inference-time control of
analytic diffusion models.

Swap proposals simulate forward and backward diffusion paths between adjacent
annealing levels and are accepted using Radon-Nikodym path estimators. The same
machinery serves tempering, reward tilting, model composition and classifier-free
guidance debiasing.
"""
