import numpy as np

from simple_esdf.events import EventRecord, FeatureVector

DAY = 86400
START_TS = 1590796800


def make_record(
    sample_id="s1",
    y=1,
    impression_ts=START_TS,
    conversion_delay=None,
    request_id="q1",
    features=((0, 1, 1.0), (1, 5, 1.0)),
) -> EventRecord:
    click_ts = impression_ts if y else None
    conversion_ts = None if conversion_delay is None else impression_ts + conversion_delay
    return EventRecord(
        request_id=request_id,
        sample_id=sample_id,
        features=FeatureVector(tuple(features)),
        y=y,
        impression_ts=impression_ts,
        click_ts=click_ts,
        conversion_ts=conversion_ts,
    )


def random_heads(rng: np.random.Generator, n: int, num_bins: int):
    """
    随机的 (p, r, f)，f 每行和为 1.
    """
    p = rng.uniform(0.05, 0.95, size=n)
    r = rng.uniform(0.05, 0.95, size=n)
    f = rng.dirichlet(np.ones(num_bins), size=n)
    return p, r, f
