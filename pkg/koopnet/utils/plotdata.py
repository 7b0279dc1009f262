# import dependencies
import pandas as pd

from ..constant import METRIC_NAMES, METRIC_SPLITS
from ..metrics import read_stats_frame

TIDY_COLUMNS = ["epoch", "split", "metric", "value"]

METRIC_COLUMNS = [f"{name}_{split}" for split in METRIC_SPLITS for name in METRIC_NAMES]


def stats_to_tidy(frame):
    """Long table ``epoch, split, metric, value`` of a stats table.

    One row per epoch, split and metric; missing validation values stay NaN.
    """
    tidy = frame.melt(id_vars="epoch", value_vars=METRIC_COLUMNS, var_name="column", value_name="value")
    tidy["split"] = tidy["column"].str.rsplit("_", n=1).str[1]
    tidy["metric"] = tidy["column"].str.rsplit("_", n=1).str[0]
    tidy = tidy.sort_values("epoch", kind="stable").reset_index(drop=True)
    return tidy[TIDY_COLUMNS]


def tidy_to_stats(tidy):
    """Pivot a long table back to the stats metric columns."""
    wide = (
        tidy.assign(column=tidy["metric"] + "_" + tidy["split"])
        .pivot(index="epoch", columns="column", values="value")
        .reindex(columns=METRIC_COLUMNS)
        .reset_index()
    )
    wide.columns.name = None
    return wide


def write_plot_data(stats_path, out_path):
    """Read ``stats_path``, write its long form to ``out_path`` and return it."""
    tidy = stats_to_tidy(read_stats_frame(stats_path))
    tidy.to_csv(out_path, index=False, float_format="%.17g", na_rep="")
    return tidy


def read_plot_data(path):
    """Read a long table written by :func:`write_plot_data`, bit-exact."""
    return pd.read_csv(path, float_precision="round_trip")
