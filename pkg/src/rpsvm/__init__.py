"""Random projections for linear SVMs."""
