"""
Convolutional encoder vs. a stacked GRU
=======================================

Both encoders get roughly the same parameter budget. The GRU has to walk
the sequence one step at a time; the convolutional stack touches every
step at once and shrinks the sequence after each layer.
"""

from hcsa.bench import doubling_ratio, run_bench, summary_table

results = run_bench([64, 128, 256], reps=5)
print(summary_table(results))
print("forward-time ratio t(256)/t(128):", round(doubling_ratio(results), 2))
