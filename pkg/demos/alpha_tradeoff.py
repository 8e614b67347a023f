"""Accuracy versus unexpectedness as alpha grows.

Runs the full pipeline on the clustered synthetic world once, then re-ranks
with every alpha in 0, 0.01, ..., 0.1. The estimator is trained once, so
RMSE and MAE stay fixed while the lists drift away from each user's closure.
"""
import sys
import tempfile
from pathlib import Path

from latent_unexp.config import parse_config
from latent_unexp.evaluation import METRIC_COLUMNS, REPORT_HEADERS
from latent_unexp.pipeline import run_sweep

conf = Path(__file__).with_name("clustered.conf")
cfg = parse_config(conf)
kind = sys.argv[1] if len(sys.argv) > 1 else "hull"
cfg = cfg.with_values(closure__kind=kind)

with tempfile.TemporaryDirectory() as out:
    table, _ = run_sweep(cfg, out)

print(f"closure = {kind}, estimator = {cfg.estimator.kind}")
print(f"{'alpha':>6}" + "".join(f"{h:>9}" for h in REPORT_HEADERS))
for alpha, rep in table.rows:
    print(f"{alpha:6.2f}" + "".join(f"{getattr(rep, m):9.4f}" for m in METRIC_COLUMNS))
