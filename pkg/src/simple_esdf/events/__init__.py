from .log_io import EventLog, read_event_log, write_event_log, write_snapshot
from .models import EventRecord, FeatureVector, IndexPartition, ObservedSample, partition
from .slots import SlotConfig, day_slot, day_slots, elapsed_slots

__all__ = [
    "EventLog",
    "EventRecord",
    "FeatureVector",
    "IndexPartition",
    "ObservedSample",
    "SlotConfig",
    "day_slot",
    "day_slots",
    "elapsed_slots",
    "partition",
    "read_event_log",
    "write_event_log",
    "write_snapshot",
]
