"""kpnet: key point mining via question generation, bipartite QA networks,
and graph centrality, with matching/coverage evaluation harnesses."""

__version__ = "0.1.0"
