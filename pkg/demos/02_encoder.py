"""
Looking inside the encoder
==========================

Each layer runs two gated convolutions, then pools segments of length k
with learned attention, then mixes the pooled steps with a question-aware
self-attention. The sequence shrinks by a factor of k per layer.
"""

import numpy as np

from hcsa import HCSA, HCSAConfig
from hcsa.data import Sample
from hcsa.encoder import AttentionTrace, layer_lengths

cfg = HCSAConfig.desk(seed=0)
model = HCSA(cfg)
print("layers:", cfg.num_layers, "segment size:", cfg.segment_size)

rng = np.random.default_rng(1)
features = rng.normal(size=(100, cfg.d_video))
question = [2, 3, 9, 12]

trace = AttentionTrace()
q, enc = model.encode(features, question, trace)
# beta lives in the decoder, so run one full teacher-forced pass as well
model.forward(Sample("demo", features, question, [4]), trace)
print("layer lengths:", enc.lengths)
print("predicted:   ", layer_lengths(100, cfg.segment_size, cfg.num_layers))

# every softmax the encoder used, collected by the trace
for name in ("alpha", "d_rows", "beta"):
    vectors = getattr(trace, name)
    worst = max(np.abs(v.sum(axis=-1) - 1).max() for v in vectors)
    print(f"{name:7s} {len(vectors)} arrays, worst |sum - 1| = {worst:.1e}")

# the first segment's pooling weights
print("alpha, first segment of layer 1:", np.round(trace.alpha[0].ravel()[:cfg.segment_size], 3))

# answer distribution over the first decoding step (untrained model)
print("greedy answer ids:", model.answer(features, question))
