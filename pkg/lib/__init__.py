"""Numerical building blocks: data models, Fourier conventions, quadrature and Monte Carlo."""
