# One seed of the ablation study at desk scale.
#
# Trains the full model and three variants on identical data and seeds and
# prints test MAP next to the random-ranking baseline. Takes ~4 min on one core.

import sys
import time

from fieldmatch.config import RunConfig
from fieldmatch.experiments import baseline_map, prepare_data, run_variant

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
cfg = RunConfig(seed=seed)
data = prepare_data(cfg)
print(f"seed {seed}: random MAP {baseline_map(data, seed):.3f}")

for flags in ((), ("no_scale",), ("no_field_embeddings",), ("no_pretrain",)):
    t0 = time.perf_counter()
    rep = run_variant(cfg, data, flags).report
    name = flags[0] if flags else "full"
    print(f"  {name:20s} MAP {rep.metrics['MAP']:.3f}  AUC {rep.metrics['AUC']:.3f}  ({time.perf_counter() - t0:.0f}s)")
