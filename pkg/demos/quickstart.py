# Train a small matcher on a generated corpus and rank companies for one solution.
#
# Uses configs/smoke.cfg so it finishes in well under a minute on a laptop.
# Swap in configs/tiny.cfg for the desk-scale setting (a few minutes).

import sys
from pathlib import Path

from fieldmatch.config import RunConfig
from fieldmatch.experiments import baseline_map, prepare_data, run_variant
from fieldmatch.textseq import assemble_description
from fieldmatch.training import rank_companies

cfg_path = Path(__file__).resolve().parent.parent / "configs" / (sys.argv[1] if len(sys.argv) > 1 else "smoke.cfg")
cfg = RunConfig.from_file(cfg_path)
data = prepare_data(cfg)
print(f"{len(data.solutions)} solutions, {len(data.companies)} companies")
print(f"train/val/test examples: {len(data.train)}/{len(data.validation)}/{len(data.test)}")

# What the description encoder actually sees for one labeled pair
ex = data.train[0]
seq = assemble_description(data.solutions[ex.solution_id], data.companies[ex.company_id],
                           data.schema, data.vocab, cfg.max_len_desc)
print("\ndescription sequence, label", ex.label)
print(data.vocab.decode(seq.token_ids[: seq.length]))
print("field ids:", seq.field_ids[: seq.length])

result = run_variant(cfg, data)
print("\nloss per epoch:", [round(x, 4) for x in result.train_result.epoch_loss])
print("test metrics:")
for k, v in result.report.metrics.items():
    print(f"  {k:6s} {v:.3f}")
print(f"random ranking MAP: {baseline_map(data, cfg.seed):.3f}")

sid = sorted(data.solutions)[0]
ranked = rank_companies(result.train_result.model, data.solutions[sid], list(data.companies.values()))
print(f"\ntop companies for {sid}:")
for cid, score in ranked[:5]:
    print(f"  {cid}  {score:.3f}")
