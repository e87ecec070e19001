"""Implicit Peer two-step triplets for ODE-constrained optimal control."""
