"""2D electromagnetic inverse design with solver-exact adjoint gradients and a
stage-wise neural-operator surrogate that predicts those gradients directly
from the permittivity layout."""

__version__ = "0.1.0"
