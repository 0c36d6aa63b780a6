"""Bundled data files: a synthetic clustered edge list for the graph
workloads (regenerate with demos/build_clustered_graph.py)."""
