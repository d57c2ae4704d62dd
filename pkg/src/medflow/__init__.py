"""Median-filter level-set evolution on random point clouds."""
