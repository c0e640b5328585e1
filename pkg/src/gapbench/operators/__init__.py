"""Operator learning on grid functions over D = [0, 1]."""
