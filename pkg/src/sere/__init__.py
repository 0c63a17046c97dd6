"""Sound event retrieval by pairwise presence comparison.

Clips are compared by a network that predicts, for each of 8 coarse
sound categories, whether the event is present in both clips, neither,
or exactly one. Summed agreement columns give a similarity level in
[0, 8] used to rank a database against a query; retrieval quality is
scored with mean average precision at a similarity threshold.
"""

__version__ = "1.0.0"
