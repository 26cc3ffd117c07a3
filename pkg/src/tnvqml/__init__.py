"""Tensor-network analysis of variational quantum machine-learning models."""
