"""fairbound - bounds on path-specific fairness effects under unobserved confounding."""

__version__ = "0.1.0"
