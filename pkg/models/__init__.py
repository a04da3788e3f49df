"""Numerical core: particle model, implicit step, schemes and estimators."""
