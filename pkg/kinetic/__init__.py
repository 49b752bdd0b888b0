"""Collision histories, kernels and the two sides of the weak-coupling limit."""
